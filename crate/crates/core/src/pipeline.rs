//! The online chain: detect, correlate, predict, prune, age, score.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aging::{AgingKind, AgingPolicy, RulePool};
use crate::correlation::PatternForest;
use crate::detection::{read_event_table, write_event_table, DetectorBank, DetectorConfig, EventVector};
use crate::error::{Error, Result};
use crate::evaluation::{score_step, DueForecast, Granularity, PrecisionReport};
use crate::ingest::{open_stream_table, peek_width, ContextVector, IngestOptions};
use crate::prediction::{emit_rules, predict, Prediction};
use crate::ptl::{load_constraints, Constraint, ConstraintTracker, ProbTemporalRule, RuleRecord};
use crate::symbol::Vocabulary;

/// Every tunable of a run. Serialized as flat `key = value` TOML; per-stream
/// detector overrides go in `[streams.<name>]` tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Maximum context order.
    pub m: usize,
    /// Prediction horizon.
    pub l: usize,
    /// Largest event subset materialized as one symbol.
    pub kmax: usize,
    /// Cut-off on the (merged) rule probability.
    pub pthr: f64,
    /// Candidates below this never enter the rule pool.
    pub candidate_p: f64,
    pub aging: AgingKind,
    pub aging_k: f64,
    /// Linear aging span; defaults to `max(mem, 2)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aging_n: Option<usize>,
    /// Memory window of the rule pool, in steps.
    pub mem: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constraints: Option<PathBuf>,
    pub granularity: Granularity,
    pub seed: u64,
    pub fill_forward: bool,
    /// Precision window length.
    pub window: usize,
    /// Sliding window stride; tumbling windows when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_stride: Option<usize>,
    /// Write a pool snapshot every this many steps (0 = final only).
    pub snapshot_every: u64,
    #[serde(flatten)]
    pub detectors: DetectorConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            m: 1,
            l: 1,
            kmax: 1,
            pthr: 0.5,
            candidate_p: 0.0,
            aging: AgingKind::None,
            aging_k: 0.0,
            aging_n: None,
            mem: 1,
            constraints: None,
            granularity: Granularity::Event,
            seed: 0,
            fill_forward: false,
            window: 8000,
            window_stride: None,
            snapshot_every: 0,
            detectors: DetectorConfig::default(),
        }
    }
}

const PIPELINE_KEYS: &[&str] = &[
    "m",
    "l",
    "kmax",
    "pthr",
    "candidate_p",
    "aging",
    "aging_k",
    "aging_n",
    "mem",
    "constraints",
    "granularity",
    "seed",
    "fill_forward",
    "window",
    "window_stride",
    "snapshot_every",
];

const DETECTOR_KEYS: &[&str] = &[
    "detector",
    "mu",
    "k_pos",
    "k_neg",
    "thresh_pos",
    "thresh_neg",
    "cusum_warmup",
    "L",
    "warmup",
    "sigma_floor",
    "streams",
];

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for key in table.keys() {
            if !PIPELINE_KEYS.contains(&key.as_str()) && !DETECTOR_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown key `{key}`")));
            }
        }
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("pipeline config serializes")
    }

    pub fn aging_policy(&self) -> AgingPolicy {
        AgingPolicy {
            kind: self.aging,
            k: self.aging_k,
            n_window: self.aging_n.unwrap_or(self.mem.max(2) as usize),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.l == 0 || self.kmax == 0 {
            return Err(Error::Config("m, l and kmax must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.pthr) || !(0.0..=1.0).contains(&self.candidate_p) {
            return Err(Error::Config("probability thresholds must lie in [0, 1]".into()));
        }
        if self.mem == 0 {
            return Err(Error::Config("mem must be at least 1".into()));
        }
        if self.window == 0 || self.window_stride == Some(0) {
            return Err(Error::Config("precision window and stride must be positive".into()));
        }
        self.aging_policy().validate()?;
        Ok(())
    }

    pub fn load_constraints(&self, vocab: &Vocabulary) -> Result<Vec<Constraint>> {
        match &self.constraints {
            Some(p) => load_constraints(p, vocab),
            None => Ok(Vec::new()),
        }
    }
}

/// What one step produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub event: EventVector,
    /// Candidates that survived constraint pruning.
    pub predictions: Vec<Prediction>,
    /// Issued rules: extracted this step with merged probability `>= pthr`;
    /// `p` holds the merged probability.
    pub rules: Vec<ProbTemporalRule>,
}

/// Online pipeline state for one run.
#[derive(Debug, Clone)]
pub struct Pipeline {
    vocab: Vocabulary,
    bank: Option<DetectorBank>,
    forest: PatternForest,
    tracker: ConstraintTracker,
    pool: RulePool,
    report: PrecisionReport,
    pending: BTreeMap<u64, Vec<DueForecast>>,
    pthr: f64,
    candidate_p: f64,
    t: u64,
}

impl Pipeline {
    /// `numeric` selects whether steps arrive as readings (detectors built
    /// from the config) or as ready event vectors.
    pub fn new(cfg: &PipelineConfig, vocab: Vocabulary, numeric: bool, extra_constraints: Vec<Constraint>) -> Result<Self> {
        cfg.validate()?;
        let bank = if numeric {
            Some(cfg.detectors.build_bank(&vocab)?)
        } else {
            None
        };
        let mut constraints = cfg.load_constraints(&vocab)?;
        constraints.extend(extra_constraints);
        Ok(Pipeline {
            forest: PatternForest::new(vocab.len(), cfg.m, cfg.l, cfg.kmax)?,
            vocab,
            bank,
            tracker: ConstraintTracker::new(constraints),
            pool: RulePool::new(cfg.mem, cfg.aging_policy())?,
            report: PrecisionReport::new(cfg.granularity, cfg.window, cfg.window_stride),
            pending: BTreeMap::new(),
            pthr: cfg.pthr,
            candidate_p: cfg.candidate_p,
            t: 0,
        })
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }
    pub fn forest(&self) -> &PatternForest {
        &self.forest
    }
    pub fn pool(&self) -> &RulePool {
        &self.pool
    }
    pub fn report(&self) -> &PrecisionReport {
        &self.report
    }
    pub fn into_report(self) -> PrecisionReport {
        self.report
    }

    pub fn step_numeric(&mut self, cv: &ContextVector) -> Result<StepOutput> {
        let t = self.t;
        let bank = self
            .bank
            .as_mut()
            .ok_or_else(|| Error::stage("detect", t, Error::Config("pipeline was built for event input".into())))?;
        let mut cv = cv.clone();
        cv.t = t;
        let ev = bank.detect_vector(&cv).map_err(|e| Error::stage("detect", t, e))?;
        self.step_events(&ev)
    }

    pub fn step_events(&mut self, ev: &EventVector) -> Result<StepOutput> {
        let t = self.t;
        if ev.t != t {
            return Err(Error::stage("correlate", t, Error::OutOfOrder { expected: t, got: ev.t }));
        }
        let due = self.pending.remove(&t).unwrap_or_default();
        if ev.len() == self.vocab.len() {
            score_step(&mut self.report, &due, ev);
        }
        self.forest.update(ev).map_err(|e| Error::stage("correlate", t, e))?;
        self.tracker.push(ev);

        let window = self.forest.context_window();
        let preds = predict(&self.forest, &window, self.candidate_p).map_err(|e| Error::stage("predict", t, e))?;
        let preds = self.tracker.prune(preds);

        let extracted = emit_rules(&preds, t);
        self.pool.update(&extracted, t).map_err(|e| Error::stage("age", t, e))?;
        let mut issued = Vec::new();
        for mut rule in extracted {
            let merged = self
                .pool
                .merged(&rule.key())
                .map_err(|e| Error::stage("age", t, e))?
                .unwrap_or(rule.p);
            if merged >= self.pthr {
                rule.p = merged;
                self.pending.entry(t + rule.horizon as u64).or_default().push(DueForecast {
                    horizon: rule.horizon as usize,
                    symbol: rule.head.clone(),
                });
                issued.push(rule);
            }
        }
        self.t += 1;
        Ok(StepOutput {
            event: ev.clone(),
            predictions: preds,
            rules: issued,
        })
    }
}

/// Input table kind for [`run_pipeline`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Numeric,
    Events,
}

/// Files written by [`run_pipeline`] into the output directory.
pub const EVENTS_FILE: &str = "events.csv";
pub const RULES_FILE: &str = "rules.jsonl";
pub const POOL_FILE: &str = "pool.jsonl";
pub const FOREST_FILE: &str = "forest.txt";
pub const REPORT_FILE: &str = "report.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: u64,
    pub rules_issued: u64,
    pub report: PrecisionReport,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        make_dir(dir)?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn write_pool(path: &Path, pool: &RulePool, vocab: &Vocabulary) -> Result<()> {
    let mut w = create(path)?;
    for rec in pool.snapshot(vocab) {
        writeln!(w, "{}", rec.to_json_line()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Name of the pool snapshot taken after step `t`.
pub fn snapshot_file(t: u64) -> String {
    format!("pool_{t:08}.jsonl")
}

/// Line-at-a-time event table writer.
struct EventSink {
    path: PathBuf,
    out: BufWriter<File>,
}

impl EventSink {
    fn create(path: PathBuf, vocab: &Vocabulary) -> Result<Self> {
        let mut out = create(&path)?;
        write_event_table(&mut out, vocab, &[]).map_err(|e| Error::io(&path, e))?;
        Ok(EventSink { path, out })
    }

    fn push(&mut self, ev: &EventVector) -> Result<()> {
        write_event_rows(&mut self.out, ev).map_err(|e| Error::io(&self.path, e))
    }

    fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Rules stream plus periodic pool snapshots.
struct RuleSink {
    dir: PathBuf,
    path: PathBuf,
    out: BufWriter<File>,
    snapshot_every: u64,
    issued: u64,
}

impl RuleSink {
    fn create(dir: &Path, snapshot_every: u64) -> Result<Self> {
        let path = dir.join(RULES_FILE);
        Ok(RuleSink {
            out: create(&path)?,
            dir: dir.to_path_buf(),
            path,
            snapshot_every,
            issued: 0,
        })
    }

    /// Records the rules issued at step `t`, after the step has run.
    fn push(&mut self, rules: &[ProbTemporalRule], t: u64, pool: &RulePool, vocab: &Vocabulary) -> Result<()> {
        for rule in rules {
            writeln!(self.out, "{}", RuleRecord::from_rule(rule, vocab).to_json_line())
                .map_err(|e| Error::io(&self.path, e))?;
        }
        self.issued += rules.len() as u64;
        if self.snapshot_every > 0 && (t + 1).is_multiple_of(self.snapshot_every) {
            write_pool(&self.dir.join(snapshot_file(t)), pool, vocab)?;
        }
        Ok(())
    }

    fn finish(mut self, pool: &RulePool, vocab: &Vocabulary) -> Result<u64> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))?;
        write_pool(&self.dir.join(POOL_FILE), pool, vocab)?;
        Ok(self.issued)
    }
}

fn write_forest(path: &Path, forest: &PatternForest, vocab: &Vocabulary) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(forest.dump(vocab).as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_report(path: &Path, report: &PrecisionReport) -> Result<()> {
    let mut rep = create(path)?;
    report.write_csv(&mut rep).map_err(|e| Error::io(path, e))?;
    rep.flush().map_err(|e| Error::io(path, e))
}

fn make_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn open_numeric(cfg: &PipelineConfig, input: &Path) -> Result<crate::ingest::StreamTable<std::io::BufReader<File>>> {
    let n = peek_width(input)?;
    open_stream_table(
        input,
        n,
        IngestOptions {
            fill_forward: cfg.fill_forward,
        },
    )
}

/// Runs the whole chain over a table and writes every stage's output into `out_dir`.
pub fn run_pipeline(cfg: &PipelineConfig, input: &Path, kind: InputKind, out_dir: &Path) -> Result<RunSummary> {
    make_dir(out_dir)?;
    let (vocab, source): (Vocabulary, Box<dyn Iterator<Item = Result<Step>>>) = match kind {
        InputKind::Numeric => {
            let table = open_numeric(cfg, input)?;
            let vocab = table.vocabulary().clone();
            (vocab, Box::new(table.map(|r| r.map(Step::Numeric))))
        }
        InputKind::Events => {
            let (vocab, rows) = read_event_table(input)?;
            (vocab, Box::new(rows.into_iter().map(|e| Ok(Step::Events(e)))))
        }
    };
    let mut pipe = Pipeline::new(cfg, vocab.clone(), kind == InputKind::Numeric, Vec::new())?;

    let mut events = EventSink::create(out_dir.join(EVENTS_FILE), &vocab)?;
    let mut rules = RuleSink::create(out_dir, cfg.snapshot_every)?;
    let mut steps = 0u64;
    for step in source {
        let out = match step.map_err(|e| Error::stage("ingest", steps, e))? {
            Step::Numeric(cv) => pipe.step_numeric(&cv)?,
            Step::Events(ev) => pipe.step_events(&ev)?,
        };
        events.push(&out.event)?;
        rules.push(&out.rules, steps, pipe.pool(), &vocab)?;
        steps += 1;
    }
    events.finish()?;
    let issued = rules.finish(pipe.pool(), &vocab)?;
    write_forest(&out_dir.join(FOREST_FILE), pipe.forest(), &vocab)?;
    write_report(&out_dir.join(REPORT_FILE), pipe.report())?;

    Ok(RunSummary {
        steps,
        rules_issued: issued,
        report: pipe.into_report(),
    })
}

/// Detection stage alone: numeric table in, event table out. Returns the step count.
pub fn detect_stage(cfg: &PipelineConfig, input: &Path, out: &Path) -> Result<u64> {
    let table = open_numeric(cfg, input)?;
    let vocab = table.vocabulary().clone();
    let mut bank = cfg.detectors.build_bank(&vocab)?;
    let mut sink = EventSink::create(out.to_path_buf(), &vocab)?;
    let mut steps = 0u64;
    for row in table {
        let cv = row.map_err(|e| Error::stage("ingest", steps, e))?;
        let ev = bank.detect_vector(&cv).map_err(|e| Error::stage("detect", steps, e))?;
        sink.push(&ev)?;
        steps += 1;
    }
    sink.finish()?;
    Ok(steps)
}

/// Correlation stage alone: feeds an event table into a fresh forest and
/// writes the final dump. Returns the forest.
pub fn correlate_stage(cfg: &PipelineConfig, events: &Path, out: &Path) -> Result<PatternForest> {
    cfg.validate()?;
    let (vocab, rows) = read_event_table(events)?;
    let mut forest = PatternForest::new(vocab.len(), cfg.m, cfg.l, cfg.kmax)?;
    for ev in &rows {
        forest.update(ev).map_err(|e| Error::stage("correlate", ev.t, e))?;
    }
    write_forest(out, &forest, &vocab)?;
    Ok(forest)
}

/// Prediction stage: replays the event table through correlation,
/// prediction, pruning and aging, writing the rules stream and pool
/// snapshots into `out_dir`. Returns the number of issued rules.
pub fn predict_stage(cfg: &PipelineConfig, events: &Path, out_dir: &Path) -> Result<u64> {
    make_dir(out_dir)?;
    let (vocab, rows) = read_event_table(events)?;
    let mut pipe = Pipeline::new(cfg, vocab.clone(), false, Vec::new())?;
    let mut rules = RuleSink::create(out_dir, cfg.snapshot_every)?;
    for ev in &rows {
        let out = pipe.step_events(ev)?;
        rules.push(&out.rules, ev.t, pipe.pool(), &vocab)?;
    }
    rules.finish(pipe.pool(), &vocab)
}

/// Scoring stage: checks the forecasts in a rules stream against the event
/// table they were issued over and writes the precision report.
pub fn score_stage(cfg: &PipelineConfig, events: &Path, rules: &Path, out: &Path) -> Result<PrecisionReport> {
    let (vocab, rows) = read_event_table(events)?;
    let text = fs::read_to_string(rules).map_err(|e| Error::io(rules, e))?;
    let mut pending: BTreeMap<u64, Vec<DueForecast>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: RuleRecord = serde_json::from_str(line).map_err(|e| Error::Row {
            row: i + 1,
            message: e.to_string(),
        })?;
        let rule = rec.to_rule(&vocab).map_err(|e| Error::Row {
            row: i + 1,
            message: e.to_string(),
        })?;
        pending
            .entry(rule.extracted_at + rule.horizon as u64)
            .or_default()
            .push(DueForecast {
                horizon: rule.horizon as usize,
                symbol: rule.head,
            });
    }
    let mut report = PrecisionReport::new(cfg.granularity, cfg.window, cfg.window_stride);
    for ev in &rows {
        let due = pending.remove(&ev.t).unwrap_or_default();
        score_step(&mut report, &due, ev);
    }
    write_report(out, &report)?;
    Ok(report)
}

enum Step {
    Numeric(ContextVector),
    Events(EventVector),
}

fn write_event_rows<W: Write>(out: &mut W, ev: &EventVector) -> std::io::Result<()> {
    write!(out, "{}", ev.t)?;
    for &f in &ev.flags {
        out.write_all(if f { b",1" } else { b",0" })?;
    }
    writeln!(out)
}
