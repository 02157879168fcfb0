//! Probabilistic temporal rules and integrity constraints.
//!
//! A rule `A@-1 & C -> B : [1, 0.9]` reads: if `A` held one step ago and `C`
//! holds now, `B` holds one step from now with probability 0.9.
//!
//! Text grammar (whitespace between tokens is free):
//!
//! ```text
//! rule     := body "->" symbol ":" "[" horizon "," prob "]" [ "@" step ]
//! body     := conjunct ( "&" conjunct )*
//! conjunct := symbol [ "@" offset ]          offset is 0 or negative, default 0
//! symbol   := NAME | "{" [ NAME ( "," NAME )* ] "}" | "∅"
//! ```
//!
//! The trailing `@ step` is the extraction step, omitted when 0.
//!
//! Constraint files hold one constraint per line, `#` starts a comment:
//!
//! ```text
//! BLK(A) < 4               runs of 4 or more consecutive A steps violate
//! OCC(A) [0,1]             A may hold on at most one step in total
//! OCC(A,B) [1,3] within 50 count only the last 50 steps
//! ```

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detection::EventVector;
use crate::error::{Error, Result};
use crate::prediction::Prediction;
use crate::symbol::{valid_name, EventSymbol, Vocabulary};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Conjunct {
    /// Step offset relative to the rule's anchor step; always `<= 0`.
    pub offset: i64,
    pub symbol: EventSymbol,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbTemporalRule {
    pub body: Vec<Conjunct>,
    pub head: EventSymbol,
    pub horizon: u32,
    pub p: f64,
    pub extracted_at: u64,
}

/// What identifies "the same dependency" across extractions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RuleKey {
    pub body: Vec<Conjunct>,
    pub head: EventSymbol,
    pub horizon: u32,
}

impl ProbTemporalRule {
    pub fn new(body: Vec<Conjunct>, head: EventSymbol, horizon: u32, p: f64, extracted_at: u64) -> Result<Self> {
        let rule = ProbTemporalRule {
            body,
            head,
            horizon,
            p,
            extracted_at,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if self.body.is_empty() {
            return Err(Error::InvalidParameter("rule body is empty".into()));
        }
        if self.body.windows(2).any(|w| w[0].offset >= w[1].offset) {
            return Err(Error::InvalidParameter("body offsets must be strictly increasing".into()));
        }
        if self.body.last().map(|c| c.offset) != Some(0) {
            return Err(Error::InvalidParameter("last body offset must be 0".into()));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidParameter(format!("probability {} outside [0, 1]", self.p)));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1".into()));
        }
        Ok(())
    }

    pub fn key(&self) -> RuleKey {
        RuleKey {
            body: self.body.clone(),
            head: self.head.clone(),
            horizon: self.horizon,
        }
    }
}

// ---------------------------------------------------------------------------
// text form

pub fn format_rule(rule: &ProbTemporalRule, vocab: &Vocabulary) -> String {
    let mut s = String::new();
    for (i, c) in rule.body.iter().enumerate() {
        if i > 0 {
            s.push_str(" & ");
        }
        s.push_str(&vocab.format_symbol(&c.symbol));
        if c.offset != 0 {
            let _ = write!(s, "@{}", c.offset);
        }
    }
    let _ = write!(
        s,
        " -> {} : [{}, {}]",
        vocab.format_symbol(&rule.head),
        rule.horizon,
        rule.p
    );
    if rule.extracted_at != 0 {
        let _ = write!(s, " @ {}", rule.extracted_at);
    }
    s
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Syntax {
            pos: self.pos,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos == self.text.len()
    }

    fn eat(&mut self, tok: &str) -> bool {
        self.skip_ws();
        if self.text[self.pos..].starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &str) -> Result<()> {
        if self.eat(tok) {
            Ok(())
        } else {
            self.err(format!("expected `{tok}`"))
        }
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> &'a str {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.peek() {
            if f(c) {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
        &self.text[start..self.pos]
    }

    fn name(&mut self) -> Result<&'a str> {
        let start = self.pos;
        let name = self.take_while(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.');
        if !valid_name(name) {
            self.pos = start;
            self.skip_ws();
            return self.err("expected an event name");
        }
        Ok(name)
    }

    fn lookup(&self, vocab: &Vocabulary, name: &str, at: usize) -> Result<usize> {
        vocab.lookup(name).map_err(|_| Error::Syntax {
            pos: at,
            message: format!("unknown event `{name}`"),
        })
    }

    fn symbol(&mut self, vocab: &Vocabulary) -> Result<EventSymbol> {
        if self.eat("∅") {
            return Ok(EventSymbol::empty());
        }
        if self.eat("{") {
            if self.eat("}") {
                return Ok(EventSymbol::empty());
            }
            let mut events = Vec::new();
            loop {
                self.skip_ws();
                let at = self.pos;
                let name = self.name()?;
                events.push(self.lookup(vocab, name, at)?);
                if self.eat("}") {
                    break;
                }
                self.expect(",")?;
            }
            return Ok(EventSymbol::from_events(events));
        }
        self.skip_ws();
        let at = self.pos;
        let name = self.name()?;
        Ok(EventSymbol::single(self.lookup(vocab, name, at)?))
    }

    fn integer(&mut self) -> Result<i64> {
        self.skip_ws();
        let start = self.pos;
        if self.peek() == Some('-') || self.peek() == Some('+') {
            self.pos += 1;
        }
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        let tok = &self.text[start..self.pos];
        tok.parse().or_else(|_| {
            self.pos = start;
            self.err("expected an integer")
        })
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        let tok = self.take_while(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'));
        tok.parse::<f64>().or_else(|_| {
            self.pos = start;
            self.err("expected a number")
        })
    }
}

pub fn parse_rule(text: &str, vocab: &Vocabulary) -> Result<ProbTemporalRule> {
    let mut cur = Cursor { text, pos: 0 };
    let mut body = Vec::new();
    loop {
        let symbol = cur.symbol(vocab)?;
        let offset = if cur.eat("@") { cur.integer()? } else { 0 };
        body.push(Conjunct { offset, symbol });
        if !cur.eat("&") {
            break;
        }
    }
    cur.expect("->")?;
    let head = cur.symbol(vocab)?;
    cur.expect(":")?;
    cur.expect("[")?;
    let horizon_at = {
        cur.skip_ws();
        cur.pos
    };
    let horizon = cur.integer()?;
    cur.expect(",")?;
    let p_at = {
        cur.skip_ws();
        cur.pos
    };
    let p = cur.number()?;
    cur.expect("]")?;
    let extracted_at = if cur.eat("@") {
        let at = cur.pos;
        let v = cur.integer()?;
        u64::try_from(v).map_err(|_| Error::Syntax {
            pos: at,
            message: "extraction step must be non-negative".into(),
        })?
    } else {
        0
    };
    if !cur.at_end() {
        return cur.err("trailing input");
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Syntax {
            pos: p_at,
            message: format!("probability {p} outside [0, 1]"),
        });
    }
    let horizon = u32::try_from(horizon).ok().filter(|h| *h >= 1).ok_or(Error::Syntax {
        pos: horizon_at,
        message: "horizon must be a positive integer".into(),
    })?;
    let rule = ProbTemporalRule {
        body,
        head,
        horizon,
        p,
        extracted_at,
    };
    rule.validate().map_err(|e| Error::Syntax {
        pos: 0,
        message: e.to_string(),
    })?;
    Ok(rule)
}

// ---------------------------------------------------------------------------
// record form (one JSON object per line)

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjunctRecord {
    pub offset: i64,
    pub events: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadRecord {
    pub events: Vec<String>,
}

/// Serialized rule. Field names are part of the output format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleRecord {
    pub body: Vec<ConjunctRecord>,
    pub head: HeadRecord,
    pub horizon: u32,
    pub p: f64,
    pub extracted_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merged_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extraction_count: Option<usize>,
}

impl RuleRecord {
    pub fn from_rule(rule: &ProbTemporalRule, vocab: &Vocabulary) -> Self {
        RuleRecord {
            body: rule
                .body
                .iter()
                .map(|c| ConjunctRecord {
                    offset: c.offset,
                    events: vocab.symbol_names(&c.symbol),
                })
                .collect(),
            head: HeadRecord {
                events: vocab.symbol_names(&rule.head),
            },
            horizon: rule.horizon,
            p: rule.p,
            extracted_at: rule.extracted_at,
            merged_p: None,
            extraction_count: None,
        }
    }

    pub fn to_rule(&self, vocab: &Vocabulary) -> Result<ProbTemporalRule> {
        let sym = |names: &[String]| -> Result<EventSymbol> {
            let idx = names.iter().map(|n| vocab.lookup(n)).collect::<Result<Vec<_>>>()?;
            Ok(EventSymbol::from_events(idx))
        };
        let body = self
            .body
            .iter()
            .map(|c| {
                Ok(Conjunct {
                    offset: c.offset,
                    symbol: sym(&c.events)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ProbTemporalRule::new(body, sym(&self.head.events)?, self.horizon, self.p, self.extracted_at)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("rule records always serialize")
    }
}

// ---------------------------------------------------------------------------
// integrity constraints

/// `BLK(symbol) < limit`: the symbol may not hold on `limit` or more
/// consecutive steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlkConstraint {
    pub symbol: EventSymbol,
    pub limit: u64,
}

/// `OCC(symbol) [min, max]`: the symbol holds on between `min_occ` and
/// `max_occ` steps, counted over the whole history or the last `window` steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccConstraint {
    pub symbol: EventSymbol,
    pub min_occ: u64,
    pub max_occ: u64,
    pub window: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Constraint {
    Blk(BlkConstraint),
    Occ(OccConstraint),
}

impl BlkConstraint {
    pub fn new(symbol: EventSymbol, limit: u64) -> Result<Self> {
        if symbol.is_empty() {
            return Err(Error::InvalidParameter("constraint symbol must name events".into()));
        }
        if limit < 1 {
            return Err(Error::InvalidParameter("BLK limit must be at least 1".into()));
        }
        Ok(BlkConstraint { symbol, limit })
    }
}

impl OccConstraint {
    pub fn new(symbol: EventSymbol, min_occ: u64, max_occ: u64, window: Option<usize>) -> Result<Self> {
        if symbol.is_empty() {
            return Err(Error::InvalidParameter("constraint symbol must name events".into()));
        }
        if min_occ > max_occ {
            return Err(Error::InvalidParameter("OCC min exceeds max".into()));
        }
        if window == Some(0) {
            return Err(Error::InvalidParameter("OCC window must be positive".into()));
        }
        Ok(OccConstraint {
            symbol,
            min_occ,
            max_occ,
            window,
        })
    }
}

impl Constraint {
    pub fn symbol(&self) -> &EventSymbol {
        match self {
            Constraint::Blk(c) => &c.symbol,
            Constraint::Occ(c) => &c.symbol,
        }
    }

    pub fn check(&self, history: &[EventVector]) -> bool {
        match self {
            Constraint::Blk(c) => check_blk(history, c),
            Constraint::Occ(c) => check_occ(history, c),
        }
    }
}

fn holds(symbol: &EventSymbol, ev: &EventVector) -> bool {
    !symbol.is_empty() && symbol.is_active(&ev.flags)
}

/// True when no run of consecutive steps with the symbol active reaches the limit.
pub fn check_blk(history: &[EventVector], c: &BlkConstraint) -> bool {
    let mut run = 0u64;
    for ev in history {
        if holds(&c.symbol, ev) {
            run += 1;
            if run >= c.limit {
                return false;
            }
        } else {
            run = 0;
        }
    }
    true
}

/// True when the number of steps with the symbol active lies in `[min, max]`.
pub fn check_occ(history: &[EventVector], c: &OccConstraint) -> bool {
    let start = c.window.map_or(0, |w| history.len().saturating_sub(w));
    let count = history[start..].iter().filter(|ev| holds(&c.symbol, ev)).count() as u64;
    (c.min_occ..=c.max_occ).contains(&count)
}

/// Hypothetical continuation of `history` in which `symbol` is realized
/// `horizon` steps ahead and the steps in between carry no events.
fn realize(history: &[EventVector], n: usize, symbol: &EventSymbol, horizon: usize) -> Vec<EventVector> {
    let mut ext = history.to_vec();
    let t0 = history.last().map_or(0, |e| e.t + 1);
    for j in 0..horizon.saturating_sub(1) {
        ext.push(EventVector::zeros(t0 + j as u64, n));
    }
    ext.push(EventVector::from_active(t0 + horizon as u64 - 1, n, symbol.events()));
    ext
}

fn violates_upper(c: &Constraint, ext: &[EventVector]) -> bool {
    match c {
        Constraint::Blk(b) => {
            let run = ext.iter().rev().take_while(|ev| holds(&b.symbol, ev)).count() as u64;
            run >= b.limit
        }
        Constraint::Occ(o) => {
            let start = o.window.map_or(0, |w| ext.len().saturating_sub(w));
            let count = ext[start..].iter().filter(|ev| holds(&o.symbol, ev)).count() as u64;
            count > o.max_occ
        }
    }
}

/// Drops every prediction whose realization would break a constraint.
///
/// A prediction is charged only for constraints whose symbol it realizes
/// (the constraint symbol is a subset of the predicted symbol) and only for
/// the bound a realization can break: a BLK run reaching its limit, or an
/// OCC count exceeding its maximum.
pub fn prune_predictions(preds: &[Prediction], constraints: &[Constraint], history: &[EventVector]) -> Vec<Prediction> {
    if constraints.is_empty() {
        return preds.to_vec();
    }
    let n = history
        .first()
        .map(|e| e.len())
        .unwrap_or(0)
        .max(preds.iter().map(|p| p.symbol.width()).max().unwrap_or(0))
        .max(constraints.iter().map(|c| c.symbol().width()).max().unwrap_or(0));
    preds
        .iter()
        .filter(|pred| {
            let relevant: Vec<&Constraint> = constraints
                .iter()
                .filter(|c| c.symbol().is_subset_of(&pred.symbol))
                .collect();
            if relevant.is_empty() || pred.symbol.is_empty() {
                return true;
            }
            let ext = realize(history, n, &pred.symbol, pred.horizon);
            !relevant.iter().any(|c| violates_upper(c, &ext))
        })
        .cloned()
        .collect()
}

/// Incremental equivalent of [`prune_predictions`] for long streams: keeps
/// per-constraint run lengths and occurrence counts instead of the history.
#[derive(Debug, Clone)]
pub struct ConstraintTracker {
    constraints: Vec<Constraint>,
    runs: Vec<u64>,
    totals: Vec<u64>,
    recent: Vec<VecDeque<bool>>,
}

impl ConstraintTracker {
    pub fn new(constraints: Vec<Constraint>) -> Self {
        let k = constraints.len();
        ConstraintTracker {
            constraints,
            runs: vec![0; k],
            totals: vec![0; k],
            recent: vec![VecDeque::new(); k],
        }
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn push(&mut self, ev: &EventVector) {
        for (i, c) in self.constraints.iter().enumerate() {
            let h = holds(c.symbol(), ev);
            self.runs[i] = if h { self.runs[i] + 1 } else { 0 };
            if let Constraint::Occ(o) = c {
                if let Some(w) = o.window {
                    self.recent[i].push_back(h);
                    if h {
                        self.totals[i] += 1;
                    }
                    if self.recent[i].len() > w && self.recent[i].pop_front() == Some(true) {
                        self.totals[i] -= 1;
                    }
                } else if h {
                    self.totals[i] += 1;
                }
            }
        }
    }

    fn violated_by(&self, i: usize, horizon: usize) -> bool {
        match &self.constraints[i] {
            Constraint::Blk(b) => {
                let run = if horizon == 1 { self.runs[i] + 1 } else { 1 };
                run >= b.limit
            }
            Constraint::Occ(o) => {
                let count = match o.window {
                    None => self.totals[i] + 1,
                    Some(w) => {
                        // occurrences among the last (w - horizon) observed steps, plus this one
                        let keep = w.saturating_sub(horizon);
                        let recent = &self.recent[i];
                        let skip = recent.len().saturating_sub(keep);
                        recent.iter().skip(skip).filter(|&&h| h).count() as u64 + 1
                    }
                };
                count > o.max_occ
            }
        }
    }

    pub fn prune(&self, preds: Vec<Prediction>) -> Vec<Prediction> {
        if self.constraints.is_empty() {
            return preds;
        }
        preds
            .into_iter()
            .filter(|pred| {
                pred.symbol.is_empty()
                    || !self
                        .constraints
                        .iter()
                        .enumerate()
                        .any(|(i, c)| c.symbol().is_subset_of(&pred.symbol) && self.violated_by(i, pred.horizon))
            })
            .collect()
    }
}

fn parse_constraint_line(line: &str, vocab: &Vocabulary, line_no: usize) -> Result<Constraint> {
    let syntax = |message: String| Error::Syntax {
        pos: line_no,
        message: format!("line {line_no}: {message}"),
    };
    let (kind, rest) = line
        .split_once('(')
        .ok_or_else(|| syntax("expected `BLK(` or `OCC(`".into()))?;
    let (events, rest) = rest.split_once(')').ok_or_else(|| syntax("missing `)`".into()))?;
    let symbol = vocab.parse_event_list(events)?;
    let rest = rest.trim().trim_start_matches(':').trim();
    match kind.trim() {
        "BLK" => {
            let limit = rest
                .strip_prefix('<')
                .ok_or_else(|| syntax("expected `< limit`".into()))?
                .trim();
            let limit = limit.parse().map_err(|_| syntax(format!("bad limit `{limit}`")))?;
            Ok(Constraint::Blk(BlkConstraint::new(symbol, limit)?))
        }
        "OCC" => {
            let inner = rest
                .strip_prefix('[')
                .ok_or_else(|| syntax("expected `[min,max]`".into()))?;
            let (range, tail) = inner.split_once(']').ok_or_else(|| syntax("missing `]`".into()))?;
            let (lo, hi) = range.split_once(',').ok_or_else(|| syntax("expected `min,max`".into()))?;
            let lo = lo.trim().parse().map_err(|_| syntax(format!("bad min `{lo}`")))?;
            let hi = hi.trim().parse().map_err(|_| syntax(format!("bad max `{hi}`")))?;
            let tail = tail.trim();
            let window = if tail.is_empty() {
                None
            } else {
                let w = tail
                    .strip_prefix("within")
                    .ok_or_else(|| syntax(format!("unexpected `{tail}`")))?
                    .trim();
                Some(w.parse().map_err(|_| syntax(format!("bad window `{w}`")))?)
            };
            Ok(Constraint::Occ(OccConstraint::new(symbol, lo, hi, window)?))
        }
        other => Err(syntax(format!("unknown constraint kind `{other}`"))),
    }
}

pub fn parse_constraints(text: &str, vocab: &Vocabulary) -> Result<Vec<Constraint>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        out.push(parse_constraint_line(line, vocab, i + 1)?);
    }
    Ok(out)
}

pub fn load_constraints(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Vec<Constraint>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_constraints(&text, vocab)
}

pub fn format_constraint(c: &Constraint, vocab: &Vocabulary) -> String {
    let names = |s: &EventSymbol| vocab.symbol_names(s).join(",");
    match c {
        Constraint::Blk(b) => format!("BLK({}) < {}", names(&b.symbol), b.limit),
        Constraint::Occ(o) => {
            let mut s = format!("OCC({}) [{},{}]", names(&o.symbol), o.min_occ, o.max_occ);
            if let Some(w) = o.window {
                let _ = write!(s, " within {w}");
            }
            s
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abc() -> Vocabulary {
        Vocabulary::new(["A", "B", "C", "D", "E"]).unwrap()
    }

    fn hist(rows: &[&[usize]]) -> Vec<EventVector> {
        rows.iter()
            .enumerate()
            .map(|(t, a)| EventVector::from_active(t as u64, 5, a))
            .collect()
    }

    fn pred(symbol: EventSymbol, horizon: usize) -> Prediction {
        Prediction {
            horizon,
            symbol,
            p: 0.8,
            context: vec![EventSymbol::single(1)],
        }
    }

    #[test]
    fn parses_simple_rule() {
        let r = parse_rule("A -> B : [1, 0.9]", &abc()).unwrap();
        assert_eq!(
            r,
            ProbTemporalRule {
                body: vec![Conjunct {
                    offset: 0,
                    symbol: EventSymbol::single(0)
                }],
                head: EventSymbol::single(1),
                horizon: 1,
                p: 0.9,
                extracted_at: 0,
            }
        );
        assert_eq!(format_rule(&r, &abc()), "A -> B : [1, 0.9]");
    }

    #[test]
    fn parses_compound_rule() {
        let v = abc();
        let r = parse_rule("A@-1&{B,C} -> {} : [2,1] @ 17", &v).unwrap();
        assert_eq!(r.body.len(), 2);
        assert_eq!(r.body[0].offset, -1);
        assert_eq!(r.body[1].symbol, EventSymbol::from_events([1, 2]));
        assert!(r.head.is_empty());
        assert_eq!(r.extracted_at, 17);
        assert_eq!(format_rule(&r, &v), "A@-1 & {B,C} -> {} : [2, 1] @ 17");
        assert_eq!(parse_rule("A@-1 & {B,C} -> ∅ : [2, 1.0] @17", &v).unwrap(), r);
    }

    #[test]
    fn rejects_bad_rules() {
        let v = abc();
        assert!(matches!(parse_rule("A -> B : [1, 1.7]", &v), Err(Error::Syntax { pos: 13, .. })));
        assert!(parse_rule("A -> B : [0, 0.5]", &v).is_err());
        assert!(parse_rule("A -> Z : [1, 0.5]", &v).is_err());
        assert!(parse_rule("A@-1 -> B : [1, 0.5]", &v).is_err());
        assert!(parse_rule("A & B@-1 -> B : [1, 0.5]", &v).is_err());
        assert!(parse_rule("A -> B : [1, 0.5] extra", &v).is_err());
        assert!(parse_rule("-> B : [1, 0.5]", &v).is_err());
    }

    #[test]
    fn record_roundtrip() {
        let v = abc();
        let r = parse_rule("A@-1 & C -> B : [1, 0.9] @ 3", &v).unwrap();
        let rec = RuleRecord::from_rule(&r, &v);
        assert_eq!(
            rec.to_json_line(),
            r#"{"body":[{"offset":-1,"events":["A"]},{"offset":0,"events":["C"]}],"head":{"events":["B"]},"horizon":1,"p":0.9,"extracted_at":3}"#
        );
        let back: RuleRecord = serde_json::from_str(&rec.to_json_line()).unwrap();
        assert_eq!(back.to_rule(&v).unwrap(), r);
    }

    #[test]
    fn blk_examples() {
        let c = BlkConstraint::new(EventSymbol::single(0), 4).unwrap();
        assert!(!check_blk(&hist(&[&[0], &[0], &[0], &[0]]), &c));
        assert!(check_blk(&hist(&[&[0], &[0], &[0], &[], &[0]]), &c));
        assert!(check_blk(&[], &c));
    }

    #[test]
    fn occ_examples() {
        let c = OccConstraint::new(EventSymbol::single(0), 0, 1, None).unwrap();
        assert!(!check_occ(&hist(&[&[0], &[], &[0, 1]]), &c));
        assert!(check_occ(&hist(&[&[], &[1]]), &c));
        assert!(check_occ(&hist(&[&[], &[0]]), &c));
        let w = OccConstraint::new(EventSymbol::single(0), 0, 1, Some(2)).unwrap();
        assert!(check_occ(&hist(&[&[0], &[], &[0]]), &w));
    }

    #[test]
    fn prune_examples() {
        let big = EventSymbol::from_events([0, 1, 2, 3]);
        let cons = vec![Constraint::Blk(BlkConstraint::new(big.clone(), 1).unwrap())];
        let preds = vec![pred(big.clone(), 1), pred(EventSymbol::single(0), 1), pred(big, 2)];
        let out = prune_predictions(&preds, &cons, &hist(&[&[]]));
        assert_eq!(out, vec![pred(EventSymbol::single(0), 1)]);

        let a = EventSymbol::single(0);
        let cons = vec![Constraint::Blk(BlkConstraint::new(a.clone(), 4).unwrap())];
        let h = hist(&[&[], &[0], &[0], &[0]]);
        assert!(prune_predictions(&[pred(a.clone(), 1)], &cons, &h).is_empty());
        // intermediate step breaks the run
        assert_eq!(prune_predictions(&[pred(a.clone(), 2)], &cons, &h).len(), 1);

        let preds = vec![pred(a.clone(), 1), pred(EventSymbol::single(2), 1)];
        assert_eq!(prune_predictions(&preds, &[], &h), preds);
    }

    #[test]
    fn occ_prunes_after_first_occurrence() {
        let a = EventSymbol::single(0);
        let cons = vec![Constraint::Occ(OccConstraint::new(a.clone(), 0, 1, None).unwrap())];
        assert_eq!(prune_predictions(&[pred(a.clone(), 1)], &cons, &hist(&[&[], &[1]])).len(), 1);
        assert!(prune_predictions(&[pred(a.clone(), 1)], &cons, &hist(&[&[0], &[1]])).is_empty());
    }

    #[test]
    fn constraint_file() {
        let v = abc();
        let text = "# comment\nBLK(A) < 4\nBLK(A,B,C,D) : < 1\nOCC(A) : [0, 1]\nOCC(B,C) [1,3] within 50\n\n";
        let cs = parse_constraints(text, &v).unwrap();
        assert_eq!(cs.len(), 4);
        let lines: Vec<String> = cs.iter().map(|c| format_constraint(c, &v)).collect();
        assert_eq!(lines, ["BLK(A) < 4", "BLK(A,B,C,D) < 1", "OCC(A) [0,1]", "OCC(B,C) [1,3] within 50"]);
        assert!(parse_constraints("BLK(A) < 0", &v).is_err());
        assert!(parse_constraints("OCC(A) [3,1]", &v).is_err());
        assert!(parse_constraints("FOO(A) < 1", &v).is_err());
        assert!(parse_constraints("BLK() < 1", &v).is_err());
        assert!(parse_constraints("BLK(Q) < 1", &v).is_err());
    }
}
