//! Time-based forgetting for extracted rules.
//!
//! Repeated extractions of the same rule within the memory window are merged
//! into one probability, weighting each extraction by how recent it is.
//! The recency index of an extraction made at step `e`, seen from step `t`,
//! is `i = t - e + 1` (the current step has `i = 1`).

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ptl::{ProbTemporalRule, RuleKey, RuleRecord};
use crate::symbol::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, Hash, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum AgingKind {
    #[default]
    None,
    Linear,
    Exponential,
}

impl FromStr for AgingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(AgingKind::None),
            "linear" => Ok(AgingKind::Linear),
            "exponential" | "exp" => Ok(AgingKind::Exponential),
            other => Err(Error::Config(format!("unknown aging kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for AgingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AgingKind::None => "none",
            AgingKind::Linear => "linear",
            AgingKind::Exponential => "exponential",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgingPolicy {
    pub kind: AgingKind,
    pub k: f64,
    /// Number of past steps the linear ramp spans.
    pub n_window: usize,
}

impl AgingPolicy {
    pub fn none() -> Self {
        AgingPolicy {
            kind: AgingKind::None,
            k: 0.0,
            n_window: 2,
        }
    }

    pub fn linear(k: f64, n_window: usize) -> Result<Self> {
        let p = AgingPolicy {
            kind: AgingKind::Linear,
            k,
            n_window,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn exponential(k: f64) -> Result<Self> {
        let p = AgingPolicy {
            kind: AgingKind::Exponential,
            k,
            n_window: 2,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            AgingKind::None => Ok(()),
            AgingKind::Linear => {
                if !(0.0..=1.0).contains(&self.k) {
                    return Err(Error::InvalidParameter("linear aging k must lie in [0, 1]".into()));
                }
                if self.n_window < 2 {
                    return Err(Error::InvalidParameter("linear aging window must be at least 2".into()));
                }
                Ok(())
            }
            AgingKind::Exponential => {
                if !(self.k.is_finite() && self.k >= 0.0) {
                    return Err(Error::InvalidParameter("exponential aging k must be non-negative".into()));
                }
                Ok(())
            }
        }
    }

    /// Weight of an extraction with recency index `i`.
    pub fn weight(&self, i: u64) -> Result<f64> {
        match self.kind {
            AgingKind::None => Ok(1.0),
            AgingKind::Linear => linear_weight(i, self),
            AgingKind::Exponential => exponential_weight(i, self),
        }
    }
}

/// `-(2k / (n - 1))·(i - 1) + k + 1`, falling from `1 + k` at `i = 1` to `1 - k` at `i = n`.
pub fn linear_weight(i: u64, policy: &AgingPolicy) -> Result<f64> {
    if i < 1 || i > policy.n_window as u64 {
        return Err(Error::InvalidParameter(format!(
            "recency index {i} outside 1..={}",
            policy.n_window
        )));
    }
    let k = policy.k;
    Ok(-(2.0 * k / (policy.n_window as f64 - 1.0)) * (i as f64 - 1.0) + k + 1.0)
}

/// `exp(-k·i)`.
pub fn exponential_weight(i: u64, policy: &AgingPolicy) -> Result<f64> {
    Ok((-policy.k * i as f64).exp())
}

/// One extraction of a rule: the step it was extracted at and its probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extraction {
    pub at: u64,
    pub p: f64,
}

/// Weighted mean of the extraction probabilities, weights from recency.
pub fn merge_rule_probability(extractions: &[Extraction], policy: &AgingPolicy, t: u64) -> Result<f64> {
    if extractions.is_empty() {
        return Err(Error::Undefined("no extractions to merge".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for e in extractions {
        if e.at > t {
            return Err(Error::InvalidParameter(format!(
                "extraction at step {} is after the current step {t}",
                e.at
            )));
        }
        let w = policy.weight(t - e.at + 1)?;
        num += w * e.p;
        den += w;
    }
    if den <= 0.0 {
        return Err(Error::Undefined("aging weights sum to zero".into()));
    }
    Ok(num / den)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    /// The most recent extraction of this rule.
    pub latest: ProbTemporalRule,
    pub extractions: Vec<Extraction>,
}

/// Rules extracted within the last `mem` steps, keyed by rule identity.
#[derive(Debug, Clone, PartialEq)]
pub struct RulePool {
    mem: u64,
    policy: AgingPolicy,
    t: Option<u64>,
    entries: BTreeMap<RuleKey, PoolEntry>,
}

impl RulePool {
    pub fn new(mem: u64, policy: AgingPolicy) -> Result<Self> {
        if mem == 0 {
            return Err(Error::InvalidParameter("memory window must be positive".into()));
        }
        policy.validate()?;
        if policy.kind == AgingKind::Linear && (policy.n_window as u64) < mem {
            return Err(Error::InvalidParameter(format!(
                "linear aging window {} is shorter than the memory window {mem}",
                policy.n_window
            )));
        }
        Ok(RulePool {
            mem,
            policy,
            t: None,
            entries: BTreeMap::new(),
        })
    }

    pub fn mem(&self) -> u64 {
        self.mem
    }

    pub fn policy(&self) -> &AgingPolicy {
        &self.policy
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &RuleKey) -> Option<&PoolEntry> {
        self.entries.get(key)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&RuleKey, &PoolEntry)> {
        self.entries.iter()
    }

    /// Records the rules extracted at step `t` and expires old extractions.
    pub fn update(&mut self, rules: &[ProbTemporalRule], t: u64) -> Result<()> {
        if let Some(prev) = self.t {
            if t < prev {
                return Err(Error::OutOfOrder { expected: prev, got: t });
            }
        }
        self.t = Some(t);
        for rule in rules {
            let entry = self.entries.entry(rule.key()).or_insert_with(|| PoolEntry {
                latest: rule.clone(),
                extractions: Vec::new(),
            });
            entry.latest = rule.clone();
            entry.extractions.push(Extraction { at: t, p: rule.p });
        }
        let mem = self.mem;
        self.entries.retain(|_, e| {
            e.extractions.retain(|x| t - x.at < mem);
            !e.extractions.is_empty()
        });
        Ok(())
    }

    /// Merged probability of a rule at the pool's current step.
    pub fn merged(&self, key: &RuleKey) -> Result<Option<f64>> {
        let (Some(t), Some(e)) = (self.t, self.entries.get(key)) else {
            return Ok(None);
        };
        merge_rule_probability(&e.extractions, &self.policy, t).map(Some)
    }

    /// Snapshot records: the latest extraction of each rule plus its merged
    /// probability (absent when the weights sum to zero) and extraction count.
    pub fn snapshot(&self, vocab: &Vocabulary) -> Vec<RuleRecord> {
        let t = self.t.unwrap_or(0);
        self.entries
            .values()
            .map(|e| {
                let mut rec = RuleRecord::from_rule(&e.latest, vocab);
                rec.merged_p = merge_rule_probability(&e.extractions, &self.policy, t).ok();
                rec.extraction_count = Some(e.extractions.len());
                rec
            })
            .collect()
    }
}
