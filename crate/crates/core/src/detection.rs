//! Per-stream change detection: turns context vectors into binary event vectors.
//!
//! Two univariate detectors are provided. CUSUM accumulates deviations from a
//! target value and signals when either one-sided sum crosses its threshold;
//! the Shewhart chart flags excursions beyond `mean ± L·sigma` computed from
//! the whole history seen so far.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ContextVector, RawTable};
use crate::symbol::Vocabulary;

/// Binary image of a context vector: one abnormality flag per stream.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EventVector {
    pub t: u64,
    pub flags: Vec<bool>,
}

impl EventVector {
    pub fn new(t: u64, flags: Vec<bool>) -> Self {
        EventVector { t, flags }
    }

    pub fn zeros(t: u64, n: usize) -> Self {
        EventVector {
            t,
            flags: vec![false; n],
        }
    }

    /// Builds a vector with the given event indices flagged.
    pub fn from_active(t: u64, n: usize, active: &[usize]) -> Self {
        let mut flags = vec![false; n];
        for &e in active {
            flags[e] = true;
        }
        EventVector { t, flags }
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn active(&self) -> Vec<usize> {
        self.flags
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect()
    }

    pub fn any(&self) -> bool {
        self.flags.iter().any(|&f| f)
    }
}

/// Which side(s) of a CUSUM chart signalled on a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Signal {
    pub above: bool,
    pub below: bool,
}

impl Signal {
    pub fn flag(self) -> bool {
        self.above || self.below
    }
}

/// Two-sided tabular CUSUM.
#[derive(Debug, Clone, PartialEq)]
pub struct CusumState {
    pub mu: f64,
    pub k_pos: f64,
    pub k_neg: f64,
    pub thresh_pos: f64,
    pub thresh_neg: f64,
    /// Positive cumulative sum, always `>= 0`.
    pub p: f64,
    /// Negative cumulative sum, always `<= 0`.
    pub n: f64,
}

impl CusumState {
    pub fn new(mu: f64, k_pos: f64, k_neg: f64, thresh_pos: f64, thresh_neg: f64) -> Result<Self> {
        let params = [mu, k_pos, k_neg, thresh_pos, thresh_neg];
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("CUSUM parameters must be finite".into()));
        }
        if k_pos < 0.0 || k_neg < 0.0 {
            return Err(Error::InvalidParameter("CUSUM tolerances must be non-negative".into()));
        }
        if thresh_pos <= 0.0 || thresh_neg <= 0.0 {
            return Err(Error::InvalidParameter("CUSUM thresholds must be positive".into()));
        }
        Ok(CusumState {
            mu,
            k_pos,
            k_neg,
            thresh_pos,
            thresh_neg,
            p: 0.0,
            n: 0.0,
        })
    }

    /// Advances the chart by one sample. The triggering sum resets to 0.
    pub fn step(&mut self, x: f64) -> Result<Signal> {
        if !x.is_finite() {
            return Err(Error::NonFinite(x));
        }
        let mut p = (self.p + (x - self.mu - self.k_pos)).max(0.0);
        let mut n = (self.n + (x - self.mu + self.k_neg)).min(0.0);
        let mut sig = Signal::default();
        if p > self.thresh_pos {
            sig.above = true;
            p = 0.0;
        }
        if n < -self.thresh_neg {
            sig.below = true;
            n = 0.0;
        }
        self.p = p;
        self.n = n;
        Ok(sig)
    }
}

/// CUSUM whose target is either fixed or estimated from a warm-up window.
#[derive(Debug, Clone, PartialEq)]
pub struct CusumDetector {
    pub state: CusumState,
    warmup: Option<Warmup>,
}

#[derive(Debug, Clone, PartialEq)]
struct Warmup {
    remaining: usize,
    sum: f64,
    seen: usize,
}

impl CusumDetector {
    pub fn with_target(state: CusumState) -> Self {
        CusumDetector { state, warmup: None }
    }

    /// Target is the mean of the first `window` samples; nothing is flagged
    /// while the window fills.
    pub fn estimating(k_pos: f64, k_neg: f64, thresh_pos: f64, thresh_neg: f64, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidParameter("CUSUM warm-up window must be positive".into()));
        }
        Ok(CusumDetector {
            state: CusumState::new(0.0, k_pos, k_neg, thresh_pos, thresh_neg)?,
            warmup: Some(Warmup {
                remaining: window,
                sum: 0.0,
                seen: 0,
            }),
        })
    }

    pub fn step(&mut self, x: f64) -> Result<Signal> {
        if !x.is_finite() {
            return Err(Error::NonFinite(x));
        }
        if let Some(w) = &mut self.warmup {
            w.sum += x;
            w.seen += 1;
            w.remaining -= 1;
            if w.remaining == 0 {
                self.state.mu = w.sum / w.seen as f64;
                self.warmup = None;
            }
            return Ok(Signal::default());
        }
        self.state.step(x)
    }
}

/// Shewhart individuals chart with cumulative (never reset) statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ShewhartState {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
    pub l: f64,
    pub warmup: u64,
    pub sigma_floor: f64,
}

impl ShewhartState {
    pub fn new(l: f64, warmup: u64, sigma_floor: f64) -> Result<Self> {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::InvalidParameter("Shewhart L must be positive".into()));
        }
        if warmup < 2 {
            return Err(Error::InvalidParameter("Shewhart warm-up must be at least 2".into()));
        }
        if !(sigma_floor.is_finite() && sigma_floor > 0.0) {
            return Err(Error::InvalidParameter("sigma floor must be positive".into()));
        }
        Ok(ShewhartState {
            count: 0,
            mean: 0.0,
            m2: 0.0,
            l,
            warmup,
            sigma_floor,
        })
    }

    /// Sample standard deviation of the history, 0 with fewer than two samples.
    pub fn sigma(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).sqrt()
        }
    }

    fn half_width(&self) -> f64 {
        self.l * self.sigma().max(self.sigma_floor)
    }

    pub fn ucl(&self) -> f64 {
        self.mean + self.half_width()
    }

    pub fn lcl(&self) -> f64 {
        self.mean - self.half_width()
    }

    /// Tests `x` against limits from the history so far, then folds it in.
    pub fn step(&mut self, x: f64) -> Result<Signal> {
        if !x.is_finite() {
            return Err(Error::NonFinite(x));
        }
        let mut sig = Signal::default();
        if self.count >= self.warmup {
            sig.above = x > self.ucl();
            sig.below = x < self.lcl();
        }
        // Welford
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
        Ok(sig)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Detector {
    Cusum(CusumDetector),
    Shewhart(ShewhartState),
}

impl Detector {
    pub fn step(&mut self, x: f64) -> Result<Signal> {
        match self {
            Detector::Cusum(d) => d.step(x),
            Detector::Shewhart(d) => d.step(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    #[default]
    Cusum,
    Shewhart,
}

impl std::str::FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cusum" => Ok(DetectorKind::Cusum),
            "shewhart" => Ok(DetectorKind::Shewhart),
            other => Err(Error::Config(format!("unknown detector `{other}`"))),
        }
    }
}

impl std::fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DetectorKind::Cusum => "cusum",
            DetectorKind::Shewhart => "shewhart",
        })
    }
}

/// Detector parameters; unset fields fall back to a parent layer or the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSettings {
    pub detector: Option<DetectorKind>,
    pub mu: Option<f64>,
    pub k_pos: Option<f64>,
    pub k_neg: Option<f64>,
    pub thresh_pos: Option<f64>,
    pub thresh_neg: Option<f64>,
    /// Samples used to estimate the CUSUM target when `mu` is unset.
    pub cusum_warmup: Option<usize>,
    #[serde(rename = "L")]
    pub l: Option<f64>,
    pub warmup: Option<u64>,
    pub sigma_floor: Option<f64>,
}

pub const DEFAULT_CUSUM_K: f64 = 0.5;
pub const DEFAULT_CUSUM_THRESH: f64 = 5.0;
pub const DEFAULT_CUSUM_WARMUP: usize = 50;
pub const DEFAULT_SHEWHART_L: f64 = 3.0;
pub const DEFAULT_SHEWHART_WARMUP: u64 = 50;
pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-9;

impl DetectorSettings {
    /// Fields set in `self` win over `base`.
    pub fn over(&self, base: &DetectorSettings) -> DetectorSettings {
        DetectorSettings {
            detector: self.detector.or(base.detector),
            mu: self.mu.or(base.mu),
            k_pos: self.k_pos.or(base.k_pos),
            k_neg: self.k_neg.or(base.k_neg),
            thresh_pos: self.thresh_pos.or(base.thresh_pos),
            thresh_neg: self.thresh_neg.or(base.thresh_neg),
            cusum_warmup: self.cusum_warmup.or(base.cusum_warmup),
            l: self.l.or(base.l),
            warmup: self.warmup.or(base.warmup),
            sigma_floor: self.sigma_floor.or(base.sigma_floor),
        }
    }

    pub fn build(&self) -> Result<Detector> {
        match self.detector.unwrap_or_default() {
            DetectorKind::Cusum => {
                let k_pos = self.k_pos.unwrap_or(DEFAULT_CUSUM_K);
                let k_neg = self.k_neg.unwrap_or(DEFAULT_CUSUM_K);
                let tp = self.thresh_pos.unwrap_or(DEFAULT_CUSUM_THRESH);
                let tn = self.thresh_neg.unwrap_or(DEFAULT_CUSUM_THRESH);
                let det = match self.mu {
                    Some(mu) => CusumDetector::with_target(CusumState::new(mu, k_pos, k_neg, tp, tn)?),
                    None => CusumDetector::estimating(
                        k_pos,
                        k_neg,
                        tp,
                        tn,
                        self.cusum_warmup.unwrap_or(DEFAULT_CUSUM_WARMUP),
                    )?,
                };
                Ok(Detector::Cusum(det))
            }
            DetectorKind::Shewhart => Ok(Detector::Shewhart(ShewhartState::new(
                self.l.unwrap_or(DEFAULT_SHEWHART_L),
                self.warmup.unwrap_or(DEFAULT_SHEWHART_WARMUP),
                self.sigma_floor.unwrap_or(DEFAULT_SIGMA_FLOOR),
            )?)),
        }
    }
}

/// Detector file layout: top-level keys apply to every stream,
/// `[streams.<name>]` tables override them for one stream.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    #[serde(flatten)]
    pub default: DetectorSettings,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub streams: BTreeMap<String, DetectorSettings>,
}

impl DetectorConfig {
    pub fn uniform(settings: DetectorSettings) -> Self {
        DetectorConfig {
            default: settings,
            streams: BTreeMap::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn settings_for(&self, name: &str) -> DetectorSettings {
        match self.streams.get(name) {
            Some(s) => s.over(&self.default),
            None => self.default.clone(),
        }
    }

    pub fn build_bank(&self, vocab: &Vocabulary) -> Result<DetectorBank> {
        for name in self.streams.keys() {
            vocab.lookup(name)?;
        }
        let detectors = vocab
            .names()
            .iter()
            .enumerate()
            .map(|(i, name)| {
                self.settings_for(name).build().map_err(|e| Error::Stream {
                    stream: i,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DetectorBank::new(detectors))
    }
}

/// One detector per stream; detector `i` only ever sees column `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorBank {
    detectors: Vec<Detector>,
}

impl DetectorBank {
    pub fn new(detectors: Vec<Detector>) -> Self {
        DetectorBank { detectors }
    }

    pub fn len(&self) -> usize {
        self.detectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detectors.is_empty()
    }

    pub fn detectors(&self) -> &[Detector] {
        &self.detectors
    }

    /// Like [`detect_vector`](Self::detect_vector) but keeps the side of each signal.
    ///
    /// A failing stream leaves every detector in the bank untouched.
    pub fn detect_annotated(&mut self, cv: &ContextVector) -> Result<(EventVector, Vec<Signal>)> {
        if cv.values.len() != self.detectors.len() {
            return Err(Error::Dimension {
                expected: self.detectors.len(),
                got: cv.values.len(),
            });
        }
        if let Some((i, &x)) = cv.values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Stream {
                stream: i,
                source: Box::new(Error::NonFinite(x)),
            });
        }
        let mut signals = Vec::with_capacity(self.detectors.len());
        for (i, (det, &x)) in self.detectors.iter_mut().zip(&cv.values).enumerate() {
            let s = det.step(x).map_err(|e| Error::Stream {
                stream: i,
                source: Box::new(e),
            })?;
            signals.push(s);
        }
        let flags = signals.iter().map(|s| s.flag()).collect();
        Ok((EventVector::new(cv.t, flags), signals))
    }

    pub fn detect_vector(&mut self, cv: &ContextVector) -> Result<EventVector> {
        self.detect_annotated(cv).map(|(ev, _)| ev)
    }
}

/// Writes an event table: header `t,<names>`, values `0`/`1`.
pub fn write_event_table<W: Write>(mut out: W, vocab: &Vocabulary, rows: &[EventVector]) -> io::Result<()> {
    write!(out, "t")?;
    for name in vocab.names() {
        write!(out, ",{name}")?;
    }
    writeln!(out)?;
    for ev in rows {
        write!(out, "{}", ev.t)?;
        for &f in &ev.flags {
            out.write_all(if f { b",1" } else { b",0" })?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_event_table_from<R: Read>(reader: R) -> Result<(Vocabulary, Vec<EventVector>)> {
    let raw = RawTable::new(reader)?;
    let vocab = Vocabulary::new(raw.names().to_vec())?;
    let mut rows = Vec::new();
    for (t, row) in raw.enumerate() {
        let row = row?;
        let mut flags = Vec::with_capacity(row.cells.len());
        for cell in &row.cells {
            flags.push(match cell.as_str() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Row {
                        row: row.row,
                        message: format!("event flag must be 0 or 1, found `{other}`"),
                    })
                }
            });
        }
        rows.push(EventVector::new(t as u64, flags));
    }
    Ok((vocab, rows))
}

pub fn read_event_table(path: impl AsRef<Path>) -> Result<(Vocabulary, Vec<EventVector>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_event_table_from(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straight transcription of the one-sided recurrence, kept apart from
    /// `CusumState::step`.
    fn upper_cusum_trace(xs: &[f64], mu: f64, k: f64, h: f64) -> Vec<(f64, bool)> {
        let mut p = 0.0f64;
        xs.iter()
            .map(|x| {
                p = f64::max(0.0, p + x - mu - k);
                if p > h {
                    p = 0.0;
                    (p, true)
                } else {
                    (p, false)
                }
            })
            .collect()
    }

    #[test]
    fn on_target_accumulates_nothing() {
        let mut s = CusumState::new(0.0, 0.5, 0.5, 4.0, 4.0).unwrap();
        assert!(!s.step(0.0).unwrap().flag());
        assert_eq!(s.p, 0.0);
        assert_eq!(s.n, 0.0);
    }

    #[test]
    fn constant_drift_hand_trace() {
        let xs = [1.5; 6];
        let oracle = upper_cusum_trace(&xs, 0.0, 0.5, 4.0);
        // P = 1, 2, 3, 4, then 5 > 4 flags and resets.
        assert_eq!(
            oracle,
            vec![(1.0, false), (2.0, false), (3.0, false), (4.0, false), (0.0, true), (1.0, false)]
        );
        let mut s = CusumState::new(0.0, 0.5, 0.5, 4.0, 4.0).unwrap();
        for (x, (p, flag)) in xs.iter().zip(oracle) {
            let sig = s.step(*x).unwrap();
            assert_eq!(sig.above, flag);
            assert!(!sig.below);
            assert_eq!(s.p, p);
        }
    }

    #[test]
    fn non_finite_leaves_state() {
        let mut s = CusumState::new(0.0, 0.5, 0.5, 4.0, 4.0).unwrap();
        s.step(2.0).unwrap();
        let before = s.clone();
        assert!(s.step(f64::NAN).is_err());
        assert_eq!(s, before);
        let mut sh = ShewhartState::new(3.0, 2, 1e-9).unwrap();
        sh.step(1.0).unwrap();
        let before = sh.clone();
        assert!(sh.step(f64::INFINITY).is_err());
        assert_eq!(sh, before);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(CusumState::new(0.0, -1.0, 0.5, 4.0, 4.0).is_err());
        assert!(CusumState::new(0.0, 0.5, 0.5, 0.0, 4.0).is_err());
        assert!(ShewhartState::new(0.0, 10, 1e-9).is_err());
        assert!(ShewhartState::new(3.0, 1, 1e-9).is_err());
    }

    #[test]
    fn estimated_target_is_silent_during_warmup() {
        let mut d = CusumDetector::estimating(0.5, 0.5, 2.0, 2.0, 4).unwrap();
        for x in [10.0, 10.0, 10.0, 10.0] {
            assert!(!d.step(x).unwrap().flag());
        }
        assert_eq!(d.state.mu, 10.0);
        assert!(!d.step(10.0).unwrap().flag());
        // P = 1.5, then 3.0 > 2
        assert!(!d.step(12.0).unwrap().flag());
        assert!(d.step(12.0).unwrap().above);
    }

    #[test]
    fn shewhart_warmup_and_limits() {
        let mut s = ShewhartState::new(3.0, 5, 1e-9).unwrap();
        for x in [0.0, 100.0, -100.0, 50.0, 7.0] {
            assert!(!s.step(x).unwrap().flag());
        }
        assert_eq!(s.count, 5);
        let ucl = s.ucl();
        assert!(s.step(ucl + 1.0).unwrap().above);
    }

    #[test]
    fn shewhart_constant_stream_never_flags() {
        let mut s = ShewhartState::new(3.0, 2, 1e-9).unwrap();
        for _ in 0..1000 {
            assert!(!s.step(4.25).unwrap().flag());
        }
        assert!((s.ucl() - 4.25 - 3e-9).abs() < 1e-15);
    }

    #[test]
    fn bank_rejects_wrong_width() {
        let mut bank = DetectorBank::new(vec![Detector::Shewhart(ShewhartState::new(3.0, 2, 1e-9).unwrap())]);
        let cv = ContextVector {
            t: 0,
            values: vec![1.0, 2.0],
            timestamp: None,
        };
        assert!(matches!(bank.detect_vector(&cv), Err(Error::Dimension { .. })));
    }

    #[test]
    fn detector_config_layers() {
        let cfg = DetectorConfig::from_toml(
            "detector = \"cusum\"\nk_pos = 1.0\n[streams.b]\ndetector = \"shewhart\"\nL = 2.5\n",
        )
        .unwrap();
        let vocab = Vocabulary::new(["a", "b"]).unwrap();
        let bank = cfg.build_bank(&vocab).unwrap();
        assert!(matches!(bank.detectors()[0], Detector::Cusum(_)));
        match &bank.detectors()[1] {
            Detector::Shewhart(s) => assert_eq!(s.l, 2.5),
            d => panic!("{d:?}"),
        }
        let bad = DetectorConfig::from_toml("[streams.zz]\nL = 2\n").unwrap();
        assert!(bad.build_bank(&vocab).is_err());
    }

    #[test]
    fn event_table_roundtrip() {
        let vocab = Vocabulary::new(["A", "B"]).unwrap();
        let rows = vec![EventVector::new(0, vec![true, false]), EventVector::new(1, vec![false, false])];
        let mut buf = Vec::new();
        write_event_table(&mut buf, &vocab, &rows).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "t,A,B\n0,1,0\n1,0,0\n");
        let (v2, r2) = read_event_table_from(buf.as_slice()).unwrap();
        assert_eq!(v2, vocab);
        assert_eq!(r2, rows);
        assert!(read_event_table_from("t,A\n0,2\n".as_bytes()).is_err());
    }
}
