//! Suffix matching against the forest and multi-step prediction.

use std::collections::{BTreeMap, BTreeSet};

use crate::correlation::{NodeId, PatternForest};
use crate::error::Result;
use crate::ptl::{Conjunct, ProbTemporalRule};
use crate::symbol::EventSymbol;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Steps ahead of the current step, `1..=l`.
    pub horizon: usize,
    pub symbol: EventSymbol,
    pub p: f64,
    /// Matched suffix of the recent window, oldest first.
    pub context: Vec<EventSymbol>,
}

/// Every forest path that spells one symbol per step over some suffix of
/// `window` (oldest first). Only the last `m` steps are considered.
pub fn match_suffixes(forest: &PatternForest, window: &[Vec<EventSymbol>]) -> Vec<Vec<EventSymbol>> {
    matched_nodes(forest, window).into_iter().map(|(p, _)| p).collect()
}

fn matched_nodes(forest: &PatternForest, window: &[Vec<EventSymbol>]) -> Vec<(Vec<EventSymbol>, NodeId)> {
    let window = &window[window.len().saturating_sub(forest.m())..];
    let mut out = Vec::new();
    for start in (0..window.len()).rev() {
        for sym in &window[start] {
            let Some(root) = forest.find(std::slice::from_ref(sym)) else {
                continue;
            };
            let mut path = vec![sym.clone()];
            walk(forest, window, start + 1, root, &mut path, &mut out);
        }
    }
    out
}

fn walk(
    forest: &PatternForest,
    window: &[Vec<EventSymbol>],
    pos: usize,
    node: NodeId,
    path: &mut Vec<EventSymbol>,
    out: &mut Vec<(Vec<EventSymbol>, NodeId)>,
) {
    if pos == window.len() {
        out.push((path.clone(), node));
        return;
    }
    for sym in &window[pos] {
        if let Some(child) = forest.child(node, sym) {
            path.push(sym.clone());
            walk(forest, window, pos + 1, child, path, out);
            path.pop();
        }
    }
}

/// Predictions for the next `l` steps given the recent window.
///
/// Each chain of children below a matched context yields a prediction at its
/// depth, with probability equal to the product of the edge probabilities
/// along the chain. Predictions under `p_thr` are dropped first; among the
/// survivors, each `(horizon, symbol)` keeps the one with the longest
/// context, then the highest probability.
pub fn predict(forest: &PatternForest, window: &[Vec<EventSymbol>], p_thr: f64) -> Result<Vec<Prediction>> {
    let mut best: BTreeMap<(usize, EventSymbol), Prediction> = BTreeMap::new();
    for (context, node) in matched_nodes(forest, window) {
        let mut found = Vec::new();
        extend(forest, node, 1, 1.0, p_thr, &mut found)?;
        for (horizon, symbol, p) in found {
            let cand = Prediction {
                horizon,
                symbol: symbol.clone(),
                p,
                context: context.clone(),
            };
            match best.get_mut(&(horizon, symbol.clone())) {
                Some(cur) if !prefer(&cand, cur) => {}
                Some(cur) => *cur = cand,
                None => {
                    best.insert((horizon, symbol), cand);
                }
            }
        }
    }
    Ok(best.into_values().collect())
}

fn prefer(cand: &Prediction, cur: &Prediction) -> bool {
    (cand.context.len(), cand.p, std::cmp::Reverse(&cand.context))
        > (cur.context.len(), cur.p, std::cmp::Reverse(&cur.context))
}

fn extend(
    forest: &PatternForest,
    node: NodeId,
    horizon: usize,
    p: f64,
    p_thr: f64,
    out: &mut Vec<(usize, EventSymbol, f64)>,
) -> Result<()> {
    if horizon > forest.l() {
        return Ok(());
    }
    for (symbol, &child) in &forest.node(node).children {
        let q = p * forest.edge_probability(node, child)?;
        // products only shrink down the chain
        if q < p_thr || q == 0.0 {
            continue;
        }
        out.push((horizon, symbol.clone(), q));
        extend(forest, child, horizon + 1, q, p_thr, out)?;
    }
    Ok(())
}

/// Per-event view: for each horizon, the events contained in any predicted symbol.
pub fn event_marginals(preds: &[Prediction]) -> BTreeMap<usize, BTreeSet<usize>> {
    let mut out: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for p in preds {
        out.entry(p.horizon).or_default().extend(p.symbol.events().iter().copied());
    }
    out
}

/// Rewrites predictions as rules anchored at step `t`: the context becomes
/// the body with offsets ending at 0.
pub fn emit_rules(preds: &[Prediction], t: u64) -> Vec<ProbTemporalRule> {
    preds
        .iter()
        .map(|pred| {
            let len = pred.context.len() as i64;
            ProbTemporalRule {
                body: pred
                    .context
                    .iter()
                    .enumerate()
                    .map(|(i, s)| Conjunct {
                        offset: i as i64 - (len - 1),
                        symbol: s.clone(),
                    })
                    .collect(),
                head: pred.symbol.clone(),
                horizon: pred.horizon as u32,
                p: pred.p,
                extracted_at: t,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::EventVector;
    use crate::ptl::{format_rule, parse_rule};
    use crate::symbol::Vocabulary;

    fn feed(f: &mut PatternForest, rows: &[&[usize]]) {
        for a in rows {
            let t = f.t();
            f.update(&EventVector::from_active(t, f.n(), a)).unwrap();
        }
    }

    #[test]
    fn empty_forest_predicts_nothing() {
        let f = PatternForest::new(2, 2, 1, 1).unwrap();
        assert!(match_suffixes(&f, &[vec![EventSymbol::single(0)]]).is_empty());
        assert!(predict(&f, &[vec![EventSymbol::single(0)]], 0.0).unwrap().is_empty());
    }

    #[test]
    fn single_step_window() {
        let mut f = PatternForest::new(2, 2, 1, 1).unwrap();
        feed(&mut f, &[&[0]]);
        let got = match_suffixes(&f, &[vec![EventSymbol::single(0)]]);
        assert_eq!(got, vec![vec![EventSymbol::single(0)]]);
    }

    #[test]
    fn suffix_candidates() {
        // A,B fire together then C; k_max = 1 splits the first step in two
        let mut f = PatternForest::new(3, 2, 1, 1).unwrap();
        feed(&mut f, &[&[0, 1], &[2], &[0], &[2]]);
        let (a, b, c) = (EventSymbol::single(0), EventSymbol::single(1), EventSymbol::single(2));
        let window = vec![vec![a.clone(), b.clone()], vec![c.clone()]];
        let mut got = match_suffixes(&f, &window);
        got.sort();
        let mut want = vec![vec![c.clone()], vec![a.clone(), c.clone()], vec![b.clone(), c.clone()]];
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn alternating_stream_is_certain() {
        let mut f = PatternForest::new(2, 1, 1, 1).unwrap();
        let rows: Vec<&[usize]> = (0..20).map(|t| if t % 2 == 0 { &[0][..] } else { &[1][..] }).collect();
        feed(&mut f, &rows);
        feed(&mut f, &[&[0]]);
        let preds = predict(&f, &f.context_window(), 0.5).unwrap();
        assert_eq!(
            preds,
            vec![Prediction {
                horizon: 1,
                symbol: EventSymbol::single(1),
                p: 1.0,
                context: vec![EventSymbol::single(0)],
            }]
        );
    }

    #[test]
    fn threshold_and_longest_context() {
        // C A B A C A B A ...: after A it is B or C half the time, after (C, A) always B
        let mut f = PatternForest::new(3, 2, 1, 1).unwrap();
        let cycle: [&[usize]; 4] = [&[2], &[0], &[1], &[0]];
        let rows: Vec<&[usize]> = cycle.iter().copied().cycle().take(14).collect();
        feed(&mut f, &rows);
        let preds = predict(&f, &f.context_window(), 0.0).unwrap();
        let b = preds.iter().find(|p| p.symbol == EventSymbol::single(1)).unwrap();
        assert_eq!(b.context, vec![EventSymbol::single(2), EventSymbol::single(0)]);
        assert_eq!(b.p, 1.0);
        let c = preds.iter().find(|p| p.symbol == EventSymbol::single(2)).unwrap();
        assert_eq!(c.context, vec![EventSymbol::single(0)]);
        assert!((c.p - 3.0 / 6.0).abs() < 1e-12, "{}", c.p);
        let high = predict(&f, &f.context_window(), 0.7).unwrap();
        assert_eq!(high.len(), 1);
        assert!(high.iter().all(|p| p.p >= 0.7));
        assert!(high.len() <= preds.len());
    }

    #[test]
    fn rules_from_predictions() {
        let vocab = Vocabulary::new(["A", "B", "C"]).unwrap();
        let one = Prediction {
            horizon: 1,
            symbol: EventSymbol::single(1),
            p: 0.9,
            context: vec![EventSymbol::single(0)],
        };
        let rules = emit_rules(&[one], 0);
        assert_eq!(format_rule(&rules[0], &vocab), "A -> B : [1, 0.9]");
        assert!(emit_rules(&[], 5).is_empty());

        let two = Prediction {
            horizon: 2,
            symbol: EventSymbol::single(1),
            p: 0.25,
            context: vec![EventSymbol::single(0), EventSymbol::single(2)],
        };
        let rule = emit_rules(&[two], 9).remove(0);
        assert_eq!(rule.body[0].offset, -1);
        assert_eq!(rule.body[1].offset, 0);
        let text = format_rule(&rule, &vocab);
        assert_eq!(text, "A@-1 & C -> B : [2, 0.25] @ 9");
        assert_eq!(parse_rule(&text, &vocab).unwrap(), rule);
    }
}
