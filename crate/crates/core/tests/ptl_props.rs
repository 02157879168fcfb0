mod common;

use proptest::prelude::*;
use sensorcast::detection::EventVector;
use sensorcast::prediction::Prediction;
use sensorcast::ptl::{
    check_blk, check_occ, format_constraint, format_rule, parse_constraints, parse_rule, prune_predictions,
    BlkConstraint, Conjunct, Constraint, ConstraintTracker, OccConstraint, ProbTemporalRule, RuleRecord,
};
use sensorcast::symbol::{EventSymbol, Vocabulary};

use common::event_stream;

const N: usize = 3;

fn vocab() -> Vocabulary {
    Vocabulary::new(["A", "B", "C_1"]).unwrap()
}

fn symbol() -> impl Strategy<Value = EventSymbol> {
    proptest::collection::btree_set(0..N, 0..=N).prop_map(EventSymbol::from_events)
}

fn nonempty_symbol() -> impl Strategy<Value = EventSymbol> {
    proptest::collection::btree_set(0..N, 1..=2).prop_map(EventSymbol::from_events)
}

fn rule() -> impl Strategy<Value = ProbTemporalRule> {
    (
        proptest::collection::btree_set(1i64..6, 0..3),
        proptest::collection::vec(symbol(), 3),
        symbol(),
        1u32..6,
        0.0..=1.0f64,
        0u64..1000,
    )
        .prop_map(|(back, syms, head, horizon, p, at)| {
            let mut offsets: Vec<i64> = back.into_iter().map(|o| -o).collect();
            offsets.sort();
            offsets.push(0);
            let body = offsets
                .into_iter()
                .zip(syms.into_iter().cycle())
                .map(|(offset, symbol)| Conjunct { offset, symbol })
                .collect();
            ProbTemporalRule::new(body, head, horizon, p, at).unwrap()
        })
}

fn constraint() -> impl Strategy<Value = Constraint> {
    prop_oneof![
        (nonempty_symbol(), 1u64..5).prop_map(|(s, lim)| Constraint::Blk(BlkConstraint::new(s, lim).unwrap())),
        (nonempty_symbol(), 0u64..3, 0u64..4, proptest::option::of(1usize..8)).prop_map(|(s, a, b, w)| {
            Constraint::Occ(OccConstraint::new(s, a.min(b), a.max(b), w).unwrap())
        }),
    ]
}

fn prediction() -> impl Strategy<Value = Prediction> {
    (1usize..4, symbol(), 0.0..=1.0f64).prop_map(|(horizon, symbol, p)| Prediction {
        horizon,
        symbol,
        p,
        context: vec![EventSymbol::empty()],
    })
}

fn history() -> impl Strategy<Value = Vec<EventVector>> {
    event_stream(N, 30, 0.5).prop_map(|(n, evs)| {
        evs.into_iter()
            .map(|mut e| {
                e.flags.resize(N.max(n), false);
                e
            })
            .collect()
    })
}

fn holds(s: &EventSymbol, ev: &EventVector) -> bool {
    s.events().iter().all(|&e| ev.flags[e])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn rule_text_roundtrip(r in rule()) {
        let v = vocab();
        let text = format_rule(&r, &v);
        prop_assert_eq!(parse_rule(&text, &v).unwrap(), r);
    }

    #[test]
    fn rule_record_roundtrip(r in rule()) {
        let v = vocab();
        let line = RuleRecord::from_rule(&r, &v).to_json_line();
        let rec: RuleRecord = serde_json::from_str(&line).unwrap();
        prop_assert_eq!(rec.to_rule(&v).unwrap(), r);
    }

    #[test]
    fn constraint_text_roundtrip(cs in proptest::collection::vec(constraint(), 0..5)) {
        let v = vocab();
        let text: String = cs.iter().map(|c| format_constraint(c, &v) + "\n").collect();
        prop_assert_eq!(parse_constraints(&text, &v).unwrap(), cs);
    }

    #[test]
    fn blk_matches_longest_run(h in history(), s in nonempty_symbol(), limit in 1u64..6) {
        let mut longest = 0u64;
        let mut run = 0u64;
        for ev in &h {
            run = if holds(&s, ev) { run + 1 } else { 0 };
            longest = longest.max(run);
        }
        let c = BlkConstraint::new(s, limit).unwrap();
        prop_assert_eq!(check_blk(&h, &c), longest < limit);
    }

    #[test]
    fn occ_matches_count(h in history(), s in nonempty_symbol(), a in 0u64..10, b in 0u64..10, w in proptest::option::of(1usize..12)) {
        let c = OccConstraint::new(s.clone(), a.min(b), a.max(b), w).unwrap();
        let tail = match w {
            Some(w) if w < h.len() => &h[h.len() - w..],
            _ => &h[..],
        };
        let count = tail.iter().filter(|ev| holds(&s, ev)).count() as u64;
        prop_assert_eq!(check_occ(&h, &c), a.min(b) <= count && count <= a.max(b));
    }

    #[test]
    fn pruning_is_idempotent(
        h in history(),
        cs in proptest::collection::vec(constraint(), 0..4),
        preds in proptest::collection::vec(prediction(), 0..12),
    ) {
        let once = prune_predictions(&preds, &cs, &h);
        let twice = prune_predictions(&once, &cs, &h);
        prop_assert_eq!(&twice, &once);
        prop_assert!(once.iter().all(|p| preds.contains(p)));
        // predictions that realize no constrained symbol always survive
        for p in &preds {
            if !cs.iter().any(|c| c.symbol().is_subset_of(&p.symbol)) {
                prop_assert!(once.contains(p));
            }
        }
    }

    #[test]
    fn tracker_matches_history_scan(
        h in history(),
        cs in proptest::collection::vec(constraint(), 0..4),
        preds in proptest::collection::vec(prediction(), 0..12),
    ) {
        let mut tracker = ConstraintTracker::new(cs.clone());
        for (i, ev) in h.iter().enumerate() {
            tracker.push(ev);
            let want = prune_predictions(&preds, &cs, &h[..=i]);
            prop_assert_eq!(tracker.prune(preds.clone()), want);
        }
    }
}

#[test]
fn blk_prunes_fourth_consecutive_step() {
    let a = EventSymbol::single(0);
    let cs = vec![Constraint::Blk(BlkConstraint::new(a.clone(), 4).unwrap())];
    let h: Vec<EventVector> = (0..3).map(|t| EventVector::from_active(t, 2, &[0])).collect();
    let pred = |horizon, symbol: EventSymbol| Prediction {
        horizon,
        symbol,
        p: 0.9,
        context: vec![a.clone()],
    };
    let ab = EventSymbol::from_events([0, 1]);
    let kept = prune_predictions(&[pred(1, a.clone()), pred(2, a.clone()), pred(1, ab.clone()), pred(1, EventSymbol::single(1))], &cs, &h);
    assert_eq!(kept, vec![pred(2, a.clone()), pred(1, EventSymbol::single(1))]);
}
