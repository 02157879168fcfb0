//! Python bindings: detectors, the pattern forest, rules, the rule pool and
//! the batch pipeline. Events and symbols cross the boundary by name.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use sensorcast::aging::{self, AgingPolicy, Extraction};
use sensorcast::detection::{CusumState, EventVector, ShewhartState};
use sensorcast::evaluation::{generate_synthetic, PlantedRule, SynthConfig};
use sensorcast::pipeline::{self, InputKind, PipelineConfig};
use sensorcast::prediction;
use sensorcast::ptl::{format_rule, parse_rule, ProbTemporalRule, RuleRecord};
use sensorcast::symbol::{EventSymbol, Vocabulary};

fn err(e: sensorcast::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn vocab(names: Vec<String>) -> PyResult<Vocabulary> {
    Vocabulary::new(names).map_err(err)
}

fn symbol(v: &Vocabulary, names: &[String]) -> PyResult<EventSymbol> {
    let idx = names.iter().map(|n| v.lookup(n)).collect::<Result<Vec<_>, _>>().map_err(err)?;
    Ok(EventSymbol::from_events(idx))
}

fn policy(kind: &str, k: f64, n_window: usize) -> PyResult<AgingPolicy> {
    let p = AgingPolicy {
        kind: kind.parse().map_err(err)?,
        k,
        n_window,
    };
    p.validate().map_err(err)?;
    Ok(p)
}

/// Two-sided CUSUM chart. `step` returns `(above, below)`.
#[pyclass(name = "Cusum")]
struct PyCusum(CusumState);

#[pymethods]
impl PyCusum {
    #[new]
    #[pyo3(signature = (mu, k_pos = 0.5, k_neg = 0.5, thresh_pos = 5.0, thresh_neg = 5.0))]
    fn new(mu: f64, k_pos: f64, k_neg: f64, thresh_pos: f64, thresh_neg: f64) -> PyResult<Self> {
        CusumState::new(mu, k_pos, k_neg, thresh_pos, thresh_neg).map(PyCusum).map_err(err)
    }

    fn step(&mut self, x: f64) -> PyResult<(bool, bool)> {
        let s = self.0.step(x).map_err(err)?;
        Ok((s.above, s.below))
    }

    #[getter]
    fn p(&self) -> f64 {
        self.0.p
    }

    #[getter]
    fn n(&self) -> f64 {
        self.0.n
    }
}

/// Shewhart individuals chart. `step` returns `(above, below)`.
#[pyclass(name = "Shewhart")]
struct PyShewhart(ShewhartState);

#[pymethods]
impl PyShewhart {
    #[new]
    #[pyo3(signature = (l = 3.0, warmup = 50, sigma_floor = 1e-9))]
    fn new(l: f64, warmup: u64, sigma_floor: f64) -> PyResult<Self> {
        ShewhartState::new(l, warmup, sigma_floor).map(PyShewhart).map_err(err)
    }

    fn step(&mut self, x: f64) -> PyResult<(bool, bool)> {
        let s = self.0.step(x).map_err(err)?;
        Ok((s.above, s.below))
    }

    #[getter]
    fn mean(&self) -> f64 {
        self.0.mean
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.0.sigma()
    }

    #[getter]
    fn count(&self) -> u64 {
        self.0.count
    }
}

/// Pattern forest over named events.
#[pyclass(name = "PatternForest")]
struct PyForest {
    inner: sensorcast::PatternForest,
    vocab: Vocabulary,
}

type PyPrediction = (usize, Vec<String>, f64, Vec<Vec<String>>);

#[pymethods]
impl PyForest {
    #[new]
    #[pyo3(signature = (names, m = 1, l = 1, kmax = 1))]
    fn new(names: Vec<String>, m: usize, l: usize, kmax: usize) -> PyResult<Self> {
        let vocab = vocab(names)?;
        let inner = sensorcast::PatternForest::new(vocab.len(), m, l, kmax).map_err(err)?;
        Ok(PyForest { inner, vocab })
    }

    /// Folds in the next step, given the names of the events that fired.
    fn update(&mut self, active: Vec<String>) -> PyResult<()> {
        let sym = symbol(&self.vocab, &active)?;
        let ev = EventVector::from_active(self.inner.t(), self.vocab.len(), sym.events());
        self.inner.update(&ev).map_err(err)
    }

    fn prior(&self, events: Vec<String>) -> PyResult<f64> {
        let sym = symbol(&self.vocab, &events)?;
        self.inner.prior_probability(&sym).map_err(err)
    }

    fn path_probability(&self, path: Vec<Vec<String>>) -> PyResult<f64> {
        let path = path.iter().map(|s| symbol(&self.vocab, s)).collect::<PyResult<Vec<_>>>()?;
        self.inner.path_probability(&path).map_err(err)
    }

    /// `(horizon, symbol, p, context)` tuples for the current window.
    #[pyo3(signature = (p_thr = 0.0))]
    fn predict(&self, p_thr: f64) -> PyResult<Vec<PyPrediction>> {
        let preds = prediction::predict(&self.inner, &self.inner.context_window(), p_thr).map_err(err)?;
        let names = |s: &EventSymbol| self.vocab.symbol_names(s);
        Ok(preds
            .iter()
            .map(|p| (p.horizon, names(&p.symbol), p.p, p.context.iter().map(names).collect()))
            .collect())
    }

    /// Current predictions as rule text, anchored at the latest step.
    #[pyo3(signature = (p_thr = 0.0))]
    fn rules(&self, p_thr: f64) -> PyResult<Vec<String>> {
        let preds = prediction::predict(&self.inner, &self.inner.context_window(), p_thr).map_err(err)?;
        let t = self.inner.t().saturating_sub(1);
        Ok(prediction::emit_rules(&preds, t)
            .iter()
            .map(|r| format_rule(r, &self.vocab))
            .collect())
    }

    fn dump(&self) -> String {
        self.inner.dump(&self.vocab)
    }

    #[getter]
    fn t(&self) -> u64 {
        self.inner.t()
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn tree_count(&self) -> usize {
        self.inner.tree_count()
    }
}

/// Rule pool with aging. Rules go in and out as text.
#[pyclass(name = "RulePool")]
struct PyRulePool {
    inner: aging::RulePool,
    vocab: Vocabulary,
}

#[pymethods]
impl PyRulePool {
    #[new]
    #[pyo3(signature = (names, mem = 1, aging = "none", k = 0.0, n_window = None))]
    fn new(names: Vec<String>, mem: u64, aging: &str, k: f64, n_window: Option<usize>) -> PyResult<Self> {
        let pol = policy(aging, k, n_window.unwrap_or(mem.max(2) as usize))?;
        Ok(PyRulePool {
            inner: aging::RulePool::new(mem, pol).map_err(err)?,
            vocab: vocab(names)?,
        })
    }

    /// Records rules extracted at step `t`.
    fn update(&mut self, rules: Vec<String>, t: u64) -> PyResult<()> {
        let rules = rules
            .iter()
            .map(|r| {
                parse_rule(r, &self.vocab).map(|rule| ProbTemporalRule {
                    extracted_at: t,
                    ..rule
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?;
        self.inner.update(&rules, t).map_err(err)
    }

    /// Merged probability of the rule's dependency, `None` if not pooled.
    fn merged(&self, rule: &str) -> PyResult<Option<f64>> {
        let rule = parse_rule(rule, &self.vocab).map_err(err)?;
        self.inner.merged(&rule.key()).map_err(err)
    }

    /// One JSON record per pooled rule.
    fn snapshot(&self) -> Vec<String> {
        self.inner.snapshot(&self.vocab).iter().map(RuleRecord::to_json_line).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyfunction]
fn node_budget(n: usize, kmax: usize) -> u128 {
    sensorcast::node_budget(n, kmax)
}

#[pyfunction]
fn linear_weight(i: u64, k: f64, n_window: usize) -> PyResult<f64> {
    aging::linear_weight(i, &policy("linear", k, n_window)?).map_err(err)
}

#[pyfunction]
fn exponential_weight(i: u64, k: f64) -> PyResult<f64> {
    aging::exponential_weight(i, &policy("exponential", k, 2)?).map_err(err)
}

/// Weighted mean of `(step, p)` extractions seen from step `t`.
#[pyfunction]
#[pyo3(signature = (extractions, t, aging = "none", k = 0.0, n_window = 2))]
fn merge_probability(extractions: Vec<(u64, f64)>, t: u64, aging: &str, k: f64, n_window: usize) -> PyResult<f64> {
    let ex: Vec<Extraction> = extractions.into_iter().map(|(at, p)| Extraction { at, p }).collect();
    aging::merge_rule_probability(&ex, &policy(aging, k, n_window)?, t).map_err(err)
}

/// Parses rule text and prints it back in canonical form.
#[pyfunction]
fn normalize_rule(text: &str, names: Vec<String>) -> PyResult<String> {
    let v = vocab(names)?;
    parse_rule(text, &v).map(|r| format_rule(&r, &v)).map_err(err)
}

/// Two-stream synthetic data, `A -> B` planted with delay 1. Returns the
/// names and one flag list per step.
#[pyfunction]
#[pyo3(signature = (steps = 10000, seed = 7, q = 0.9, base_rate = 0.2))]
fn synthetic_events(steps: usize, seed: u64, q: f64, base_rate: f64) -> PyResult<(Vec<String>, Vec<Vec<bool>>)> {
    let cfg = SynthConfig {
        steps,
        seed,
        base_rates: vec![base_rate, 0.0],
        planted: vec![PlantedRule {
            cause: vec![0],
            effect: 1,
            delay: 1,
            q,
        }],
        ..Default::default()
    };
    let data = generate_synthetic(&cfg).map_err(err)?;
    Ok((
        data.vocab.names().to_vec(),
        data.events.into_iter().map(|e| e.flags).collect(),
    ))
}

/// Runs the full chain over a table file. `config` is TOML text.
/// Returns `(steps, rules_issued, precision)`.
#[pyfunction]
#[pyo3(signature = (input, out_dir, config = None, events = false))]
fn run_pipeline(input: PathBuf, out_dir: PathBuf, config: Option<&str>, events: bool) -> PyResult<(u64, u64, Option<f64>)> {
    let cfg = match config {
        Some(text) => PipelineConfig::from_toml(text).map_err(err)?,
        None => PipelineConfig::default(),
    };
    let kind = if events { InputKind::Events } else { InputKind::Numeric };
    let s = pipeline::run_pipeline(&cfg, &input, kind, &out_dir).map_err(err)?;
    Ok((s.steps, s.rules_issued, s.report.precision()))
}

#[pymodule]
fn sensorcast_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCusum>()?;
    m.add_class::<PyShewhart>()?;
    m.add_class::<PyForest>()?;
    m.add_class::<PyRulePool>()?;
    m.add_function(wrap_pyfunction!(node_budget, m)?)?;
    m.add_function(wrap_pyfunction!(linear_weight, m)?)?;
    m.add_function(wrap_pyfunction!(exponential_weight, m)?)?;
    m.add_function(wrap_pyfunction!(merge_probability, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_rule, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_events, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
