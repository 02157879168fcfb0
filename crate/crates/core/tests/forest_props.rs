mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use sensorcast::correlation::{node_budget, PatternForest};

use common::{brute_counts, event_stream, feed, shape};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn counts_match_brute_force((n, events) in event_stream(4, 60, 0.35), (m, l, kmax) in shape(4, 2)) {
        let mut f = PatternForest::new(n, m, l, kmax).unwrap();
        feed(&mut f, &events);
        let want = brute_counts(&events, kmax, m + l);
        let lag = brute_counts(&events[..events.len().saturating_sub(1)], kmax, m + l);
        let got: BTreeMap<_, _> = f.paths().into_iter().map(|(p, c, _)| (p, c)).collect();
        prop_assert_eq!(&got, &want);
        for (path, _, lagged) in f.paths() {
            prop_assert_eq!(lagged, lag.get(&path).copied().unwrap_or(0), "{:?}", path);
        }
    }

    #[test]
    fn every_prefix_matches_brute_force((n, events) in event_stream(3, 25, 0.4), (m, l, kmax) in shape(4, 2)) {
        let mut f = PatternForest::new(n, m, l, kmax).unwrap();
        for t in 0..events.len() {
            f.update(&events[t]).unwrap();
            let got: BTreeMap<_, _> = f.paths().into_iter().map(|(p, c, _)| (p, c)).collect();
            prop_assert_eq!(got, brute_counts(&events[..=t], kmax, m + l));
        }
    }

    #[test]
    fn counts_never_decrease((n, events) in event_stream(4, 40, 0.3), (m, l, kmax) in shape(4, 2)) {
        let mut f = PatternForest::new(n, m, l, kmax).unwrap();
        let mut before: BTreeMap<_, u64> = BTreeMap::new();
        for ev in &events {
            f.update(ev).unwrap();
            let now: BTreeMap<_, _> = f.paths().into_iter().map(|(p, c, _)| (p, c)).collect();
            for (p, c) in &before {
                prop_assert!(now[p] >= *c);
            }
            before = now;
        }
    }

    #[test]
    fn children_bounded_by_lagged_parent((n, events) in event_stream(4, 60, 0.4), (m, l, kmax) in shape(4, 2)) {
        let mut f = PatternForest::new(n, m, l, kmax).unwrap();
        feed(&mut f, &events);
        let lagged: BTreeMap<_, _> = f.paths().into_iter().map(|(p, _, lag)| (p, lag)).collect();
        for (path, count, _) in f.paths() {
            if path.len() >= 2 {
                prop_assert!(count <= lagged[&path[..path.len() - 1]]);
                let p = f.path_probability(&path).unwrap();
                prop_assert!(p > 0.0 && p <= 1.0);
            }
        }
    }

    #[test]
    fn trees_within_budget((n, events) in event_stream(5, 80, 0.5), (m, l, kmax) in shape(4, 3)) {
        let mut f = PatternForest::new(n, m, l, kmax).unwrap();
        feed(&mut f, &events);
        prop_assert!(f.tree_count() as u128 <= node_budget(n, kmax));
        prop_assert!(f.max_fan_out() as u128 <= node_budget(n, kmax));
        prop_assert!(f.paths().iter().all(|(p, _, _)| p.len() <= m + l));
        if !events.is_empty() {
            // each step contributes at least one root occurrence
            let roots: u64 = f.paths().iter().filter(|(p, _, _)| p.len() == 1).map(|(_, c, _)| c).sum();
            prop_assert!(roots >= events.len() as u64);
        }
    }
}

#[test]
fn budget_closed_forms() {
    assert_eq!(node_budget(3, 2), 7);
    assert_eq!(node_budget(10, 1), 11);
    for n in 1..=12 {
        assert_eq!(node_budget(n, n), 1u128 << n);
        assert_eq!(node_budget(n, n + 3), 1u128 << n);
    }
}
