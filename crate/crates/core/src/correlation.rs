//! Variable-order pattern forest.
//!
//! Every step contributes a set of symbols (all active event subsets up to
//! `k_max` events, or the empty symbol when nothing fired). The forest holds
//! one frequency tree per root symbol; the node at the end of a path counts
//! how many times that symbol sequence occurred as a contiguous run of steps,
//! for every sequence length up to `m + l`.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use crate::detection::EventVector;
use crate::error::{Error, Result};
use crate::symbol::{EventSymbol, Vocabulary};

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct PatternNode {
    pub symbol: EventSymbol,
    /// Occurrences of the path ending at or before the latest step.
    pub count: u64,
    /// Count before the most recent increment (valid for `touched_at`).
    prev_count: u64,
    /// Step index at which `prev_count` was snapshotted.
    touched_at: Option<u64>,
    pub depth: usize,
    pub children: BTreeMap<EventSymbol, NodeId>,
}

/// Frequency forest over event-symbol sequences of length up to `m + l`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternForest {
    n: usize,
    m: usize,
    l: usize,
    k_max: usize,
    t: u64,
    nodes: Vec<PatternNode>,
    roots: BTreeMap<EventSymbol, NodeId>,
    window: VecDeque<Vec<EventSymbol>>,
}

/// Symbols contributed by one step: `{∅}` when nothing fired, otherwise
/// every non-empty subset of the active events with at most `k_max` members.
pub fn symbols_for_step(ev: &EventVector, k_max: usize) -> Vec<EventSymbol> {
    let active = ev.active();
    if active.is_empty() {
        return vec![EventSymbol::empty()];
    }
    let mut out = Vec::new();
    let max = k_max.min(active.len());
    let mut pick = Vec::with_capacity(max);
    fn rec(active: &[usize], start: usize, left: usize, pick: &mut Vec<usize>, out: &mut Vec<EventSymbol>) {
        if left == 0 {
            out.push(EventSymbol::from_events(pick.iter().copied()));
            return;
        }
        for i in start..=active.len() - left {
            pick.push(active[i]);
            rec(active, i + 1, left - 1, pick, out);
            pick.pop();
        }
    }
    for size in 1..=max {
        rec(&active, 0, size, &mut pick, &mut out);
    }
    out.sort();
    out
}

/// `C(n, 0) + C(n, 1) + ... + C(n, k_max)`: the number of distinct symbols
/// (the empty one included) available when subsets are capped at `k_max`.
pub fn node_budget(n: usize, k_max: usize) -> u128 {
    let k = k_max.min(n);
    let mut total: u128 = 0;
    let mut c: u128 = 1;
    for i in 0..=k {
        total += c;
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    total
}

impl PatternForest {
    pub fn new(n: usize, m: usize, l: usize, k_max: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("stream count must be positive".into()));
        }
        if m == 0 || l == 0 {
            return Err(Error::InvalidParameter("m and l must be at least 1".into()));
        }
        if k_max == 0 {
            return Err(Error::InvalidParameter("k_max must be at least 1".into()));
        }
        Ok(PatternForest {
            n,
            m,
            l,
            k_max,
            t: 0,
            nodes: Vec::new(),
            roots: BTreeMap::new(),
            window: VecDeque::with_capacity(m + l),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn l(&self) -> usize {
        self.l
    }
    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Steps observed so far.
    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn tree_count(&self) -> usize {
        self.roots.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> &PatternNode {
        &self.nodes[id]
    }

    pub fn roots(&self) -> impl Iterator<Item = (&EventSymbol, NodeId)> {
        self.roots.iter().map(|(s, &id)| (s, id))
    }

    /// Symbol sets of the most recent steps, oldest first (at most `m + l`).
    pub fn window(&self) -> &VecDeque<Vec<EventSymbol>> {
        &self.window
    }

    /// The last `m` steps' symbol sets, oldest first.
    pub fn context_window(&self) -> Vec<Vec<EventSymbol>> {
        let skip = self.window.len().saturating_sub(self.m);
        self.window.iter().skip(skip).cloned().collect()
    }

    /// The node's count as it stood one step ago.
    pub fn lagged_count(&self, id: NodeId) -> u64 {
        let node = &self.nodes[id];
        match (node.touched_at, self.t.checked_sub(1)) {
            (Some(s), Some(last)) if s == last => node.prev_count,
            _ => node.count,
        }
    }

    pub fn find(&self, path: &[EventSymbol]) -> Option<NodeId> {
        let (first, rest) = path.split_first()?;
        let mut id = *self.roots.get(first)?;
        for sym in rest {
            id = *self.nodes[id].children.get(sym)?;
        }
        Some(id)
    }

    pub fn child(&self, id: NodeId, symbol: &EventSymbol) -> Option<NodeId> {
        self.nodes[id].children.get(symbol).copied()
    }

    fn new_node(&mut self, symbol: EventSymbol, depth: usize) -> NodeId {
        self.nodes.push(PatternNode {
            symbol,
            count: 0,
            prev_count: 0,
            touched_at: None,
            depth,
            children: BTreeMap::new(),
        });
        self.nodes.len() - 1
    }

    fn root_or_insert(&mut self, symbol: &EventSymbol) -> NodeId {
        if let Some(&id) = self.roots.get(symbol) {
            return id;
        }
        let id = self.new_node(symbol.clone(), 1);
        self.roots.insert(symbol.clone(), id);
        id
    }

    fn child_or_insert(&mut self, parent: NodeId, symbol: &EventSymbol) -> NodeId {
        if let Some(&id) = self.nodes[parent].children.get(symbol) {
            return id;
        }
        let depth = self.nodes[parent].depth + 1;
        let id = self.new_node(symbol.clone(), depth);
        self.nodes[parent].children.insert(symbol.clone(), id);
        id
    }

    fn bump(&mut self, id: NodeId, step: u64) {
        let node = &mut self.nodes[id];
        if node.touched_at != Some(step) {
            node.prev_count = node.count;
            node.touched_at = Some(step);
        }
        node.count += 1;
    }

    /// Folds one event vector into the forest.
    pub fn update(&mut self, ev: &EventVector) -> Result<()> {
        if ev.t != self.t {
            return Err(Error::OutOfOrder {
                expected: self.t,
                got: ev.t,
            });
        }
        if ev.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: ev.len(),
            });
        }
        let step = self.t;
        let symbols = symbols_for_step(ev, self.k_max);
        if self.window.len() == self.m + self.l {
            self.window.pop_front();
        }
        self.window.push_back(symbols);

        let len = self.window.len();
        for depth in 1..=len {
            let start = len - depth;
            let firsts = self.window[start].clone();
            for sym in &firsts {
                let root = self.root_or_insert(sym);
                self.descend(root, start + 1, step);
            }
        }
        self.t += 1;
        Ok(())
    }

    fn descend(&mut self, id: NodeId, pos: usize, step: u64) {
        if pos == self.window.len() {
            self.bump(id, step);
            return;
        }
        let syms = self.window[pos].clone();
        for sym in &syms {
            let child = self.child_or_insert(id, sym);
            self.descend(child, pos + 1, step);
        }
    }

    /// `N_r / t` for a root symbol; 0 when no such tree exists.
    pub fn prior_probability(&self, root: &EventSymbol) -> Result<f64> {
        if self.t == 0 {
            return Err(Error::Undefined("prior probability before any step".into()));
        }
        Ok(self
            .roots
            .get(root)
            .map_or(0.0, |&id| self.nodes[id].count as f64 / self.t as f64))
    }

    /// Current count of the path's last node over its parent's count one
    /// step ago, clamped to `[0, 1]`; 0 when the path is absent.
    pub fn path_probability(&self, path: &[EventSymbol]) -> Result<f64> {
        if path.len() < 2 {
            return Err(Error::InvalidParameter(
                "path probability needs at least two symbols; use the prior for one".into(),
            ));
        }
        if path.len() > self.m + self.l {
            return Err(Error::InvalidParameter(format!(
                "path length {} exceeds m + l = {}",
                path.len(),
                self.m + self.l
            )));
        }
        let Some(parent) = self.find(&path[..path.len() - 1]) else {
            return Ok(0.0);
        };
        let Some(node) = self.child(parent, &path[path.len() - 1]) else {
            return Ok(0.0);
        };
        self.edge_probability(parent, node)
    }

    pub(crate) fn edge_probability(&self, parent: NodeId, node: NodeId) -> Result<f64> {
        let num = self.nodes[node].count;
        let den = self.lagged_count(parent);
        if den == 0 {
            if num == 0 {
                return Ok(0.0);
            }
            return Err(Error::Inconsistent(format!(
                "node count {num} under a parent with zero lagged count"
            )));
        }
        Ok((num as f64 / den as f64).clamp(0.0, 1.0))
    }

    /// Every stored path with its count and lagged count, in pre-order.
    pub fn paths(&self) -> Vec<(Vec<EventSymbol>, u64, u64)> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut path = Vec::new();
        for &root in self.roots.values() {
            self.collect(root, &mut path, &mut out);
        }
        out
    }

    fn collect(&self, id: NodeId, path: &mut Vec<EventSymbol>, out: &mut Vec<(Vec<EventSymbol>, u64, u64)>) {
        let node = &self.nodes[id];
        path.push(node.symbol.clone());
        out.push((path.clone(), node.count, self.lagged_count(id)));
        for &c in node.children.values() {
            self.collect(c, path, out);
        }
        path.pop();
    }

    /// Nodes per tree, keyed by root symbol.
    pub fn tree_sizes(&self) -> BTreeMap<EventSymbol, usize> {
        fn size(f: &PatternForest, id: NodeId) -> usize {
            1 + f.nodes[id].children.values().map(|&c| size(f, c)).sum::<usize>()
        }
        self.roots.iter().map(|(s, &id)| (s.clone(), size(self, id))).collect()
    }

    /// Largest number of children under any single node.
    pub fn max_fan_out(&self) -> usize {
        self.nodes.iter().map(|n| n.children.len()).max().unwrap_or(0)
    }

    /// Line-oriented dump, one node per line:
    /// `depth<TAB>root<TAB>path<TAB>count<TAB>prev_count`, where `path` is
    /// the space-separated symbol sequence from the root and `prev_count`
    /// is the node's count one step ago.
    pub fn dump(&self, vocab: &Vocabulary) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# forest n={} m={} l={} kmax={} t={}",
            self.n, self.m, self.l, self.k_max, self.t
        );
        let _ = writeln!(s, "# depth\troot\tpath\tcount\tprev_count");
        for (path, count, lagged) in self.paths() {
            let text: Vec<String> = path.iter().map(|p| vocab.format_symbol(p)).collect();
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}",
                path.len(),
                text[0],
                text.join(" "),
                count,
                lagged
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(t: u64, n: usize, active: &[usize]) -> EventVector {
        EventVector::from_active(t, n, active)
    }

    #[test]
    fn symbols_no_event() {
        assert_eq!(symbols_for_step(&ev(0, 3, &[]), 2), vec![EventSymbol::empty()]);
    }

    #[test]
    fn symbols_three_active_kmax_two() {
        let got = symbols_for_step(&ev(0, 3, &[0, 1, 2]), 2);
        // brute force over bitmasks
        let mut want: Vec<EventSymbol> = (1u32..8)
            .filter(|m| m.count_ones() <= 2)
            .map(|m| EventSymbol::from_events((0..3).filter(|i| m & (1 << i) != 0)))
            .collect();
        want.sort();
        assert_eq!(got.len(), 6);
        assert_eq!(got, want);
        assert_eq!(symbols_for_step(&ev(0, 3, &[1]), 3), vec![EventSymbol::single(1)]);
    }

    #[test]
    fn first_step_single_tree() {
        let mut f = PatternForest::new(3, 2, 1, 1).unwrap();
        f.update(&ev(0, 3, &[0])).unwrap();
        assert_eq!(f.tree_count(), 1);
        assert_eq!(f.node_count(), 1);
        let a = f.find(&[EventSymbol::single(0)]).unwrap();
        assert_eq!(f.node(a).count, 1);
        assert!(f.node(a).children.is_empty());
    }

    #[test]
    fn three_step_example() {
        let (a, b, e) = (EventSymbol::single(0), EventSymbol::single(1), EventSymbol::empty());
        let mut f = PatternForest::new(3, 2, 1, 1).unwrap();
        f.update(&ev(0, 3, &[0])).unwrap();
        f.update(&ev(1, 3, &[1])).unwrap();
        f.update(&ev(2, 3, &[])).unwrap();
        let count = |p: &[EventSymbol]| f.find(p).map(|id| f.node(id).count);
        assert_eq!(count(std::slice::from_ref(&a)), Some(1));
        assert_eq!(count(&[a.clone(), b.clone()]), Some(1));
        assert_eq!(count(&[a.clone(), b.clone(), e.clone()]), Some(1));
        assert_eq!(count(std::slice::from_ref(&b)), Some(1));
        assert_eq!(count(&[b.clone(), e.clone()]), Some(1));
        assert_eq!(count(std::slice::from_ref(&e)), Some(1));
        assert_eq!(f.tree_count(), 3);
        assert_eq!(f.node_count(), 6);
    }

    #[test]
    fn out_of_order_rejected() {
        let mut f = PatternForest::new(2, 1, 1, 1).unwrap();
        assert!(matches!(f.update(&ev(1, 2, &[])), Err(Error::OutOfOrder { .. })));
        assert!(matches!(f.update(&ev(0, 3, &[])), Err(Error::Dimension { .. })));
    }

    #[test]
    fn prior_edge_cases() {
        let mut f = PatternForest::new(2, 1, 1, 1).unwrap();
        assert!(f.prior_probability(&EventSymbol::single(0)).is_err());
        for t in 0..4 {
            f.update(&ev(t, 2, &[0])).unwrap();
        }
        assert_eq!(f.prior_probability(&EventSymbol::single(0)).unwrap(), 1.0);
        assert_eq!(f.prior_probability(&EventSymbol::single(1)).unwrap(), 0.0);
    }

    #[test]
    fn path_probability_contract() {
        let mut f = PatternForest::new(2, 1, 1, 1).unwrap();
        for t in 0..6 {
            f.update(&ev(t, 2, &[(t % 2) as usize])).unwrap();
        }
        let (a, b) = (EventSymbol::single(0), EventSymbol::single(1));
        assert!(f.path_probability(std::slice::from_ref(&a)).is_err());
        assert!(f.path_probability(&[a.clone(), b.clone(), a.clone()]).is_err());
        assert_eq!(f.path_probability(&[a.clone(), b.clone()]).unwrap(), 1.0);
        assert_eq!(f.path_probability(&[a.clone(), a.clone()]).unwrap(), 0.0);
    }

    #[test]
    fn budget_values() {
        assert_eq!(node_budget(3, 2), 7);
        assert_eq!(node_budget(10, 1), 11);
        for n in 1..=12 {
            assert_eq!(node_budget(n, n), 1u128 << n);
        }
    }

    #[test]
    fn dump_format() {
        let vocab = Vocabulary::new(["A", "B"]).unwrap();
        let mut f = PatternForest::new(2, 1, 1, 1).unwrap();
        f.update(&ev(0, 2, &[0])).unwrap();
        f.update(&ev(1, 2, &[1])).unwrap();
        let d = f.dump(&vocab);
        let lines: Vec<&str> = d.lines().collect();
        assert_eq!(lines[0], "# forest n=2 m=1 l=1 kmax=1 t=2");
        assert_eq!(&lines[2..], &["1\tA\tA\t1\t1", "2\tA\tA B\t1\t0", "1\tB\tB\t1\t0"]);
    }
}
