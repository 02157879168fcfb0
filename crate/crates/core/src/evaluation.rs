//! Precision scoring, synthetic data with planted dependencies, parameter
//! sweeps and figure-shaped CSV output.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{self, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aging::AgingKind;
use crate::detection::{DetectorKind, EventVector};
use crate::error::{Error, Result};
use crate::ingest::ContextVector;
use crate::pipeline::{Pipeline, PipelineConfig};
use crate::symbol::{EventSymbol, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, Hash)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    /// Each predicted event is one prediction.
    #[default]
    Event,
    /// Each predicted symbol is one prediction, valid when the whole subset fires.
    Symbol,
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "event" => Ok(Granularity::Event),
            "symbol" => Ok(Granularity::Symbol),
            other => Err(Error::Config(format!("unknown granularity `{other}`"))),
        }
    }
}

impl std::fmt::Display for Granularity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Granularity::Event => "event",
            Granularity::Symbol => "symbol",
        })
    }
}

/// A forecast due at some step: `symbol` predicted `horizon` steps earlier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct DueForecast {
    pub horizon: usize,
    pub symbol: EventSymbol,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
}

impl Counts {
    pub fn precision(&self) -> Option<f64> {
        let total = self.tp + self.fp;
        (total > 0).then(|| self.tp as f64 / total as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPrecision {
    pub start: u64,
    pub end: u64,
    pub counts: Counts,
}

/// Running precision tally for one pipeline run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrecisionReport {
    pub granularity: Granularity,
    pub window_length: usize,
    /// Window start spacing; equal to `window_length` for tumbling windows.
    pub window_stride: usize,
    pub total: Counts,
    pub by_horizon: BTreeMap<usize, Counts>,
    /// Events that fired (recall denominator).
    pub realized: u64,
    /// Fired events that some due forecast named.
    pub covered: u64,
    /// Per-step `(tp, fp)`, indexed by step.
    steps: Vec<Counts>,
}

impl PrecisionReport {
    pub fn new(granularity: Granularity, window_length: usize, window_stride: Option<usize>) -> Self {
        let window_length = window_length.max(1);
        PrecisionReport {
            granularity,
            window_length,
            window_stride: window_stride.unwrap_or(window_length).max(1),
            ..Default::default()
        }
    }

    pub fn precision(&self) -> Option<f64> {
        self.total.precision()
    }

    /// Event-level recall: share of fired events named by a due forecast.
    pub fn recall(&self) -> Option<f64> {
        (self.realized > 0).then(|| self.covered as f64 / self.realized as f64)
    }

    pub fn steps_scored(&self) -> usize {
        self.steps.len()
    }

    /// Precision per window over the scored steps.
    pub fn windows(&self) -> Vec<WindowPrecision> {
        let len = self.steps.len();
        let mut out = Vec::new();
        let mut start = 0usize;
        while start < len {
            let end = (start + self.window_length).min(len);
            let mut c = Counts::default();
            for s in &self.steps[start..end] {
                c.tp += s.tp;
                c.fp += s.fp;
            }
            out.push(WindowPrecision {
                start: start as u64,
                end: end as u64,
                counts: c,
            });
            if end == len {
                break;
            }
            start += self.window_stride;
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "scope,start,end,tp,fp,precision")?;
        let steps = self.steps.len() as u64;
        writeln!(
            out,
            "total,0,{steps},{},{},{}",
            self.total.tp,
            self.total.fp,
            fmt_opt(self.total.precision())
        )?;
        for (h, c) in &self.by_horizon {
            writeln!(out, "horizon{h},0,{steps},{},{},{}", c.tp, c.fp, fmt_opt(c.precision()))?;
        }
        for w in self.windows() {
            writeln!(
                out,
                "window,{},{},{},{},{}",
                w.start,
                w.end,
                w.counts.tp,
                w.counts.fp,
                fmt_opt(w.counts.precision())
            )?;
        }
        writeln!(out, "recall,0,{steps},{},{},{}", self.covered, self.realized, fmt_opt(self.recall()))?;
        Ok(())
    }
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

/// Scores the forecasts due at `actual.t` against what actually fired.
///
/// Event granularity takes, per horizon, the union of predicted events and
/// counts each as a hit or a miss; symbol granularity scores each distinct
/// predicted symbol by whether it holds at the step.
pub fn score_step(report: &mut PrecisionReport, due: &[DueForecast], actual: &EventVector) {
    let t = actual.t as usize;
    if report.steps.len() <= t {
        report.steps.resize(t + 1, Counts::default());
    }
    let mut step = Counts::default();
    let mut by_h: BTreeMap<usize, Counts> = BTreeMap::new();
    let mut named: BTreeSet<usize> = BTreeSet::new();
    match report.granularity {
        Granularity::Event => {
            let mut per_h: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
            for f in due {
                per_h.entry(f.horizon).or_default().extend(f.symbol.events().iter().copied());
            }
            for (h, events) in per_h {
                let c = by_h.entry(h).or_default();
                for e in events {
                    named.insert(e);
                    if actual.flags.get(e).copied().unwrap_or(false) {
                        c.tp += 1;
                    } else {
                        c.fp += 1;
                    }
                }
            }
        }
        Granularity::Symbol => {
            let distinct: BTreeSet<&DueForecast> = due.iter().collect();
            for f in distinct {
                named.extend(f.symbol.events().iter().copied());
                let c = by_h.entry(f.horizon).or_default();
                if f.symbol.is_active(&actual.flags) {
                    c.tp += 1;
                } else {
                    c.fp += 1;
                }
            }
        }
    }
    for (h, c) in by_h {
        step.tp += c.tp;
        step.fp += c.fp;
        let e = report.by_horizon.entry(h).or_default();
        e.tp += c.tp;
        e.fp += c.fp;
    }
    report.total.tp += step.tp;
    report.total.fp += step.fp;
    let s = &mut report.steps[t];
    s.tp += step.tp;
    s.fp += step.fp;
    for e in actual.active() {
        report.realized += 1;
        if named.contains(&e) {
            report.covered += 1;
        }
    }
}

// ---------------------------------------------------------------------------
// synthetic data

/// Effect event fires `delay` steps after every step where `cause` holds,
/// with probability `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedRule {
    pub cause: Vec<usize>,
    pub effect: usize,
    pub delay: usize,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n: usize,
    pub steps: usize,
    pub base_rates: Vec<f64>,
    pub planted: Vec<PlantedRule>,
    /// Also render a numeric table: Gaussian noise plus a level shift at event steps.
    pub numeric: bool,
    pub noise_sigma: f64,
    /// Shift size in units of `noise_sigma`.
    pub shift_sigmas: f64,
    /// Leading steps with no events at all (lets detectors warm up).
    pub quiet_steps: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 2,
            steps: 10_000,
            base_rates: vec![0.2, 0.0],
            planted: vec![PlantedRule {
                cause: vec![0],
                effect: 1,
                delay: 1,
                q: 0.9,
            }],
            numeric: false,
            noise_sigma: 1.0,
            shift_sigmas: 8.0,
            quiet_steps: 0,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("synthetic stream count must be positive".into()));
        }
        if self.base_rates.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: self.base_rates.len(),
            });
        }
        if self.base_rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::InvalidParameter("base rates must lie in [0, 1]".into()));
        }
        for r in &self.planted {
            if !(0.0..=1.0).contains(&r.q) {
                return Err(Error::InvalidParameter("planted probability must lie in [0, 1]".into()));
            }
            if r.delay == 0 {
                return Err(Error::InvalidParameter("planted delay must be at least 1".into()));
            }
            if r.cause.is_empty() || r.cause.iter().chain([&r.effect]).any(|&e| e >= self.n) {
                return Err(Error::InvalidParameter("planted rule names an unknown event".into()));
            }
        }
        if self.numeric && !(self.noise_sigma.is_finite() && self.noise_sigma > 0.0) {
            return Err(Error::InvalidParameter("noise sigma must be positive".into()));
        }
        Ok(())
    }

    /// `A`, `B`, ... for up to 26 streams, `e1..en` beyond that.
    pub fn vocabulary(&self) -> Vocabulary {
        if self.n <= 26 {
            Vocabulary::new((0..self.n).map(|i| ((b'A' + i as u8) as char).to_string()))
                .expect("letters are valid names")
        } else {
            Vocabulary::numbered(self.n)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Firing {
    pub rule: usize,
    pub cause_step: u64,
    pub effect_step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub vocab: Vocabulary,
    pub events: Vec<EventVector>,
    pub numeric: Option<Vec<ContextVector>>,
    /// Planted effects that were scheduled (whether or not the step fell in range).
    pub firings: Vec<Firing>,
}

/// Generates an event stream (and optionally a numeric rendering) from `cfg`.
/// Output depends only on `cfg`, including its seed.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut scheduled: BTreeMap<u64, BTreeSet<usize>> = BTreeMap::new();
    let mut events = Vec::with_capacity(cfg.steps);
    let mut firings = Vec::new();
    let causes: Vec<EventSymbol> = cfg
        .planted
        .iter()
        .map(|r| EventSymbol::from_events(r.cause.iter().copied()))
        .collect();
    for t in 0..cfg.steps as u64 {
        let mut flags = vec![false; cfg.n];
        // always draw so the stream after the quiet prefix does not depend on its length
        let spontaneous: Vec<bool> = cfg.base_rates.iter().map(|&r| rng.random::<f64>() < r).collect();
        if t >= cfg.quiet_steps as u64 {
            for (f, s) in flags.iter_mut().zip(spontaneous) {
                *f |= s;
            }
            if let Some(effects) = scheduled.remove(&t) {
                for e in effects {
                    flags[e] = true;
                }
            }
        } else {
            scheduled.remove(&t);
        }
        for (i, (rule, cause)) in cfg.planted.iter().zip(&causes).enumerate() {
            let draw = rng.random::<f64>();
            if cause_holds(cause, &flags) && draw < rule.q {
                let at = t + rule.delay as u64;
                scheduled.entry(at).or_default().insert(rule.effect);
                firings.push(Firing {
                    rule: i,
                    cause_step: t,
                    effect_step: at,
                });
            }
        }
        events.push(EventVector::new(t, flags));
    }
    let numeric = cfg.numeric.then(|| {
        let noise = Normal::new(0.0, cfg.noise_sigma).expect("validated sigma");
        let shift = cfg.shift_sigmas * cfg.noise_sigma;
        events
            .iter()
            .map(|ev| ContextVector {
                t: ev.t,
                values: ev
                    .flags
                    .iter()
                    .map(|&f| noise.sample(&mut rng) + if f { shift } else { 0.0 })
                    .collect(),
                timestamp: None,
            })
            .collect()
    });
    Ok(SynthData {
        vocab: cfg.vocabulary(),
        events,
        numeric,
        firings,
    })
}

/// Every cause event is flagged; other events may fire too.
fn cause_holds(cause: &EventSymbol, flags: &[bool]) -> bool {
    !cause.is_empty() && cause.events().iter().all(|&e| flags[e])
}

/// Audit dump: the planted rules in rule text, and the realized event log.
pub fn ground_truth_json(cfg: &SynthConfig, data: &SynthData) -> String {
    #[derive(Serialize)]
    struct Planted {
        rule: String,
        cause: Vec<String>,
        effect: String,
        delay: usize,
        q: f64,
    }
    #[derive(Serialize)]
    struct Truth<'a> {
        seed: u64,
        steps: usize,
        names: &'a [String],
        planted: Vec<Planted>,
        firings: &'a [Firing],
        events: Vec<Vec<String>>,
    }
    let v = &data.vocab;
    let truth = Truth {
        seed: cfg.seed,
        steps: cfg.steps,
        names: v.names(),
        planted: cfg
            .planted
            .iter()
            .map(|r| {
                let cause = EventSymbol::from_events(r.cause.iter().copied());
                Planted {
                    rule: format!(
                        "{} -> {} : [{}, {}]",
                        v.format_symbol(&cause),
                        v.format_symbol(&EventSymbol::single(r.effect)),
                        r.delay,
                        r.q
                    ),
                    cause: v.symbol_names(&cause),
                    effect: v.name(r.effect).unwrap_or_default().to_string(),
                    delay: r.delay,
                    q: r.q,
                }
            })
            .collect(),
        firings: &data.firings,
        events: data
            .events
            .iter()
            .map(|ev| v.symbol_names(&EventSymbol::from_events(ev.active())))
            .collect(),
    };
    serde_json::to_string_pretty(&truth).expect("ground truth serializes")
}

// ---------------------------------------------------------------------------
// sweeps

/// One configuration of a sweep, as it appears in result tables.
#[derive(Debug, Clone, PartialEq, PartialOrd)]
pub struct SweepKey {
    pub p_thr: f64,
    pub kmax: usize,
    pub m: usize,
    pub l: usize,
    /// `cusum`, `shewhart`, or `events` when the data source is already binary.
    pub detector: String,
    pub aging: AgingKind,
    pub aging_k: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub key: SweepKey,
    pub outcome: std::result::Result<SweepMetrics, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepMetrics {
    pub report: PrecisionReport,
    /// Forecasts issued over the run (rule count).
    pub issued: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub p_thr: Vec<f64>,
    pub kmax: Vec<usize>,
    pub m: Vec<usize>,
    pub l: Vec<usize>,
    pub detector: Vec<DetectorKind>,
    pub aging: Vec<(AgingKind, f64)>,
}

impl SweepGrid {
    /// Grid holding the base config's values only.
    pub fn single(base: &PipelineConfig) -> Self {
        SweepGrid {
            p_thr: vec![base.pthr],
            kmax: vec![base.kmax],
            m: vec![base.m],
            l: vec![base.l],
            detector: vec![base.detectors.default.detector.unwrap_or_default()],
            aging: vec![(base.aging, base.aging_k)],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.p_thr.is_empty()
            || self.kmax.is_empty()
            || self.m.is_empty()
            || self.l.is_empty()
            || self.detector.is_empty()
            || self.aging.is_empty()
    }
}

pub enum DataSource<'a> {
    Events(&'a Vocabulary, &'a [EventVector]),
    Numeric(&'a Vocabulary, &'a [ContextVector]),
}

/// Runs the pipeline once per grid point. Configurations run in parallel;
/// rows come back in grid order. A failing configuration is recorded and
/// the sweep carries on.
pub fn run_sweep(grid: &SweepGrid, base: &PipelineConfig, data: &DataSource<'_>) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("sweep grid is empty".into()));
    }
    let numeric = matches!(data, DataSource::Numeric(..));
    let detectors: Vec<Option<DetectorKind>> = if numeric {
        grid.detector.iter().copied().map(Some).collect()
    } else {
        vec![None]
    };
    let mut points = Vec::new();
    for &p_thr in &grid.p_thr {
        for &kmax in &grid.kmax {
            for &m in &grid.m {
                for &l in &grid.l {
                    for det in &detectors {
                        for &(aging, aging_k) in &grid.aging {
                            points.push((p_thr, kmax, m, l, *det, aging, aging_k));
                        }
                    }
                }
            }
        }
    }
    Ok(points
        .into_par_iter()
        .map(|(p_thr, kmax, m, l, det, aging, aging_k)| {
            let mut cfg = base.clone();
            cfg.pthr = p_thr;
            cfg.kmax = kmax;
            cfg.m = m;
            cfg.l = l;
            cfg.aging = aging;
            cfg.aging_k = aging_k;
            if let Some(d) = det {
                cfg.detectors.default.detector = Some(d);
                for s in cfg.detectors.streams.values_mut() {
                    s.detector = None;
                }
            }
            let key = SweepKey {
                p_thr,
                kmax,
                m,
                l,
                detector: det.map_or_else(|| "events".to_string(), |d| d.to_string()),
                aging,
                aging_k,
            };
            let outcome = run_one(&cfg, data).map_err(|e| e.to_string());
            SweepRow { key, outcome }
        })
        .collect())
}

fn run_one(cfg: &PipelineConfig, data: &DataSource<'_>) -> Result<SweepMetrics> {
    let (vocab, numeric) = match data {
        DataSource::Events(v, _) => (*v, false),
        DataSource::Numeric(v, _) => (*v, true),
    };
    let mut pipe = Pipeline::new(cfg, vocab.clone(), numeric, Vec::new())?;
    let mut issued = 0u64;
    match data {
        DataSource::Events(_, rows) => {
            for ev in rows.iter() {
                issued += pipe.step_events(ev)?.rules.len() as u64;
            }
        }
        DataSource::Numeric(_, rows) => {
            for cv in rows.iter() {
                issued += pipe.step_numeric(cv)?.rules.len() as u64;
            }
        }
    }
    Ok(SweepMetrics {
        report: pipe.into_report(),
        issued,
    })
}

pub const TABLE_HEADER: &str =
    "p_thr,kmax,m,l,detector,aging,aging_k,issued,tp,fp,precision,realized,covered,recall,error";

pub fn write_table<W: Write>(mut out: W, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(out, "{TABLE_HEADER}")?;
    for r in rows {
        let k = &r.key;
        write!(
            out,
            "{:?},{},{},{},{},{},{:?},",
            k.p_thr, k.kmax, k.m, k.l, k.detector, k.aging, k.aging_k
        )?;
        match &r.outcome {
            Ok(mx) => {
                let rep = &mx.report;
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},",
                    mx.issued,
                    rep.total.tp,
                    rep.total.fp,
                    fmt_opt(rep.precision()),
                    rep.realized,
                    rep.covered,
                    fmt_opt(rep.recall())
                )?;
            }
            Err(e) => writeln!(out, ",,,,,,,\"{}\"", e.replace('"', "'"))?,
        }
    }
    Ok(())
}

/// Key and precision of each row of a result table.
pub fn read_table(text: &str) -> Result<Vec<(SweepKey, Option<f64>)>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Row {
            row: i + 1,
            message: format!("bad {what}"),
        };
        let f = |j: usize| rec.get(j).unwrap_or("");
        let key = SweepKey {
            p_thr: f(0).parse().map_err(|_| bad("p_thr"))?,
            kmax: f(1).parse().map_err(|_| bad("kmax"))?,
            m: f(2).parse().map_err(|_| bad("m"))?,
            l: f(3).parse().map_err(|_| bad("l"))?,
            detector: f(4).to_string(),
            aging: f(5).parse()?,
            aging_k: f(6).parse().map_err(|_| bad("aging_k"))?,
        };
        let prec = match f(10) {
            "" => None,
            s => Some(s.parse().map_err(|_| bad("precision"))?),
        };
        out.push((key, prec));
    }
    Ok(out)
}

/// Plot family files produced by [`emit_plot_data`].
pub const PLOT_PTHR: &str = "precision_vs_pthr.csv";
pub const PLOT_K: &str = "precision_vs_k.csv";
pub const PLOT_AGING: &str = "precision_vs_aging.csv";

/// Pivot: rows keyed by `row_key` (rendered as leading columns), one column
/// per distinct `col_key`, cells holding precision.
fn pivot(
    rows: &[(SweepKey, Option<f64>)],
    row_cols: &str,
    row_key: impl Fn(&SweepKey) -> String,
    col_key: impl Fn(&SweepKey) -> String,
) -> String {
    let mut cols: Vec<String> = Vec::new();
    let mut table: BTreeMap<(usize, String), BTreeMap<String, Option<f64>>> = BTreeMap::new();
    let mut order: BTreeMap<String, usize> = BTreeMap::new();
    for (key, prec) in rows {
        let c = col_key(key);
        if !cols.contains(&c) {
            cols.push(c.clone());
        }
        let rk = row_key(key);
        let next = order.len();
        let idx = *order.entry(rk.clone()).or_insert(next);
        table.entry((idx, rk)).or_default().insert(c, *prec);
    }
    let mut s = String::new();
    let _ = write!(s, "{row_cols}");
    for c in &cols {
        let _ = write!(s, ",{c}");
    }
    s.push('\n');
    for ((_, rk), cells) in table {
        s.push_str(&rk);
        for c in &cols {
            let _ = write!(s, ",{}", fmt_opt(cells.get(c).copied().flatten()));
        }
        s.push('\n');
    }
    s
}

/// Three figure-shaped CSVs: precision against the probability threshold
/// (one column per detector), against `kmax` (one column per `m`/`l` pair)
/// and against the aging parameter (one column per aging kind). Leading
/// columns hold the remaining configuration keys, so each file can be
/// pivoted back into table rows.
pub fn emit_plot_data(rows: &[SweepRow]) -> Result<BTreeMap<&'static str, String>> {
    let points: Vec<(SweepKey, Option<f64>)> = rows
        .iter()
        .map(|r| (r.key.clone(), r.outcome.as_ref().ok().and_then(|m| m.report.precision())))
        .collect();
    emit_plot_points(&points)
}

/// [`emit_plot_data`] over `(key, precision)` pairs, as returned by [`read_table`].
pub fn emit_plot_points(rows: &[(SweepKey, Option<f64>)]) -> Result<BTreeMap<&'static str, String>> {
    if rows.is_empty() {
        return Err(Error::InvalidParameter("result table is empty".into()));
    }
    let mut out = BTreeMap::new();
    out.insert(
        PLOT_PTHR,
        pivot(
            rows,
            "kmax,m,l,aging,aging_k,p_thr",
            |k| format!("{},{},{},{},{:?},{:?}", k.kmax, k.m, k.l, k.aging, k.aging_k, k.p_thr),
            |k| k.detector.clone(),
        ),
    );
    out.insert(
        PLOT_K,
        pivot(
            rows,
            "detector,p_thr,aging,aging_k,kmax",
            |k| format!("{},{:?},{},{:?},{}", k.detector, k.p_thr, k.aging, k.aging_k, k.kmax),
            |k| format!("m{}_l{}", k.m, k.l),
        ),
    );
    out.insert(
        PLOT_AGING,
        pivot(
            rows,
            "detector,p_thr,kmax,m,l,aging_k",
            |k| format!("{},{:?},{},{},{},{:?}", k.detector, k.p_thr, k.kmax, k.m, k.l, k.aging_k),
            |k| k.aging.to_string(),
        ),
    );
    Ok(out)
}

/// Reads one plot file back into `(key, precision)` pairs. Cells left empty
/// because the configuration was never run are indistinguishable from
/// undefined precision; pass the set of keys that were run to filter them.
pub fn read_plot_csv(name: &str, text: &str) -> Result<Vec<(SweepKey, Option<f64>)>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let lead = match name {
        PLOT_PTHR | PLOT_AGING => 6,
        PLOT_K => 5,
        _ => return Err(Error::InvalidParameter(format!("unknown plot file `{name}`"))),
    };
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Row {
            row: i + 1,
            message: format!("bad {what}"),
        };
        let g = |j: usize| rec.get(j).unwrap_or("").to_string();
        let pf = |s: String, w: &str| s.parse::<f64>().map_err(|_| bad(w));
        let pu = |s: String, w: &str| s.parse::<usize>().map_err(|_| bad(w));
        for (j, col) in header.iter().enumerate().skip(lead) {
            let prec = match rec.get(j).unwrap_or("") {
                "" => None,
                s => Some(s.parse().map_err(|_| bad("precision"))?),
            };
            let key = match name {
                PLOT_PTHR => SweepKey {
                    kmax: pu(g(0), "kmax")?,
                    m: pu(g(1), "m")?,
                    l: pu(g(2), "l")?,
                    aging: g(3).parse()?,
                    aging_k: pf(g(4), "aging_k")?,
                    p_thr: pf(g(5), "p_thr")?,
                    detector: col.clone(),
                },
                PLOT_K => {
                    let (m, l) = col
                        .strip_prefix('m')
                        .and_then(|s| s.split_once("_l"))
                        .ok_or_else(|| bad("m/l column"))?;
                    SweepKey {
                        detector: g(0),
                        p_thr: pf(g(1), "p_thr")?,
                        aging: g(2).parse()?,
                        aging_k: pf(g(3), "aging_k")?,
                        kmax: pu(g(4), "kmax")?,
                        m: pu(m.to_string(), "m")?,
                        l: pu(l.to_string(), "l")?,
                    }
                }
                _ => SweepKey {
                    detector: g(0),
                    p_thr: pf(g(1), "p_thr")?,
                    kmax: pu(g(2), "kmax")?,
                    m: pu(g(3), "m")?,
                    l: pu(g(4), "l")?,
                    aging_k: pf(g(5), "aging_k")?,
                    aging: col.parse()?,
                },
            };
            out.push((key, prec));
        }
    }
    Ok(out)
}
