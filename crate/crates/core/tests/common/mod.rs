//! Brute-force oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use proptest::prelude::*;
use sensorcast::correlation::PatternForest;
use sensorcast::detection::EventVector;
use sensorcast::symbol::EventSymbol;

/// Symbols a step contributes, by bitmask enumeration rather than the
/// library's recursive walk.
pub fn step_symbols(ev: &EventVector, kmax: usize) -> Vec<EventSymbol> {
    let active = ev.active();
    if active.is_empty() {
        return vec![EventSymbol::empty()];
    }
    let mut out = Vec::new();
    for mask in 1u32..(1 << active.len()) {
        if mask.count_ones() as usize <= kmax {
            let evs = (0..active.len()).filter(|b| mask & (1 << b) != 0).map(|b| active[b]);
            out.push(EventSymbol::from_events(evs));
        }
    }
    out
}

/// Counts of every contiguous symbol sequence of length `1..=max_len`,
/// keyed by the sequence, over the given prefix of the stream.
pub fn brute_counts(events: &[EventVector], kmax: usize, max_len: usize) -> BTreeMap<Vec<EventSymbol>, u64> {
    let sets: Vec<Vec<EventSymbol>> = events.iter().map(|e| step_symbols(e, kmax)).collect();
    let mut counts = BTreeMap::new();
    for end in 0..sets.len() {
        for len in 1..=max_len.min(end + 1) {
            let start = end + 1 - len;
            let mut tuples: Vec<Vec<EventSymbol>> = vec![Vec::new()];
            for set in &sets[start..=end] {
                let mut next = Vec::new();
                for tup in &tuples {
                    for s in set {
                        let mut t = tup.clone();
                        t.push(s.clone());
                        next.push(t);
                    }
                }
                tuples = next;
            }
            for tup in tuples {
                *counts.entry(tup).or_insert(0) += 1;
            }
        }
    }
    counts
}

pub fn feed(forest: &mut PatternForest, events: &[EventVector]) {
    for ev in events {
        forest.update(ev).unwrap();
    }
}

/// Events re-stamped with consecutive steps from 0.
pub fn stamp(flags: Vec<Vec<bool>>) -> Vec<EventVector> {
    flags
        .into_iter()
        .enumerate()
        .map(|(t, f)| EventVector::new(t as u64, f))
        .collect()
}

/// `(n, events)` with `n` in `1..=n_max` and `0..=t_max` steps; each flag
/// fires with probability about `density`.
pub fn event_stream(n_max: usize, t_max: usize, density: f64) -> impl Strategy<Value = (usize, Vec<EventVector>)> {
    (1..=n_max).prop_flat_map(move |n| {
        let row = proptest::collection::vec(proptest::bool::weighted(density), n);
        proptest::collection::vec(row, 0..=t_max).prop_map(move |rows| (n, stamp(rows)))
    })
}

/// Forest shape `(m, l, kmax)` with `m + l <= max_depth`.
pub fn shape(max_depth: usize, kmax_max: usize) -> impl Strategy<Value = (usize, usize, usize)> {
    (1..max_depth)
        .prop_flat_map(move |m| (Just(m), 1..=max_depth - m, 1..=kmax_max))
}

/// Symbols of the last `m` steps, oldest first, as the forest's window holds them.
pub fn recent_symbols(events: &[EventVector], kmax: usize, m: usize) -> Vec<Vec<EventSymbol>> {
    let skip = events.len().saturating_sub(m);
    events[skip..].iter().map(|e| step_symbols(e, kmax)).collect()
}
