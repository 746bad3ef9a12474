//! Ground truth: all-pairs Dijkstra and an exhaustive solver that orders
//! the mandatory set over the shortest-path metric closure.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::graph::{Instance, NodeId, WeightedGraph};

/// Largest mandatory set the permutation oracle accepts.
pub const ORACLE_MAX_MANDATORY: usize = 10;

/// Absolute tolerance used for every cost comparison.
pub const COST_EPS: f64 = 1e-9;

const NO_HOP: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct ShortestPathTable {
    n: usize,
    dist: Vec<f64>,
    next_hop: Vec<usize>,
}

impl ShortestPathTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dist(&self, u: NodeId, v: NodeId) -> f64 {
        self.dist[u * self.n + v]
    }

    /// First node after `u` on the chosen shortest `u -> v` path.
    pub fn next_hop(&self, u: NodeId, v: NodeId) -> Option<NodeId> {
        match self.next_hop[u * self.n + v] {
            NO_HOP => None,
            h => Some(h),
        }
    }

    /// Node sequence of the shortest `u -> v` path, both ends included.
    pub fn path(&self, u: NodeId, v: NodeId) -> Vec<NodeId> {
        let mut path = vec![u];
        let mut cur = u;
        while cur != v {
            cur = self
                .next_hop(cur, v)
                .expect("shortest path table covers a connected graph");
            path.push(cur);
        }
        path
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: NodeId,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn dijkstra_all_pairs(g: &WeightedGraph) -> ShortestPathTable {
    let n = g.n();
    let mut dist = vec![f64::INFINITY; n * n];
    let mut next_hop = vec![NO_HOP; n * n];
    for src in 0..n {
        let (d, first) = single_source(g, src);
        dist[src * n..(src + 1) * n].copy_from_slice(&d);
        next_hop[src * n..(src + 1) * n].copy_from_slice(&first);
    }
    ShortestPathTable { n, dist, next_hop }
}

fn single_source(g: &WeightedGraph, src: NodeId) -> (Vec<f64>, Vec<usize>) {
    let n = g.n();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![NO_HOP; n];
    let mut done = vec![false; n];
    let mut settled = Vec::with_capacity(n);
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(HeapEntry { dist: 0.0, node: src });
    while let Some(HeapEntry { dist: d, node: x }) = heap.pop() {
        if done[x] {
            continue;
        }
        done[x] = true;
        settled.push(x);
        for &a in g.out_arcs(x) {
            let arc = g.arc(a);
            let nd = d + arc.weight;
            if nd < dist[arc.head] {
                dist[arc.head] = nd;
                pred[arc.head] = x;
                heap.push(HeapEntry {
                    dist: nd,
                    node: arc.head,
                });
            }
        }
    }
    // Predecessors settle before their successors, so one pass in settle
    // order resolves the first hop of every tree path.
    let mut first = vec![NO_HOP; n];
    for &v in settled.iter().skip(1) {
        first[v] = if pred[v] == src { v } else { first[pred[v]] };
    }
    (dist, first)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub cost: f64,
    /// Visiting order of the mandatory nodes.
    pub order: Vec<NodeId>,
    pub walk: Vec<NodeId>,
}

/// Minimizes `dist[s][π1] + Σ dist[πk][πk+1] + dist[π_last][d]` over all
/// orders π of the mandatory set. Orders are enumerated lexicographically
/// and only a strictly better order replaces the incumbent.
pub fn brute_force_solve(
    g: &WeightedGraph,
    inst: &Instance,
    spt: &ShortestPathTable,
) -> Result<OracleSolution> {
    debug_assert_eq!(g.n(), spt.n());
    let m = inst.mandatory();
    if m.len() > ORACLE_MAX_MANDATORY {
        return Err(Error::TooManyMandatory {
            got: m.len(),
            max: ORACLE_MAX_MANDATORY,
        });
    }
    let mut search = PermSearch {
        spt,
        items: m,
        dest: inst.dest,
        used: vec![false; m.len()],
        prefix: Vec::with_capacity(m.len()),
        best_cost: f64::INFINITY,
        best_order: Vec::new(),
    };
    search.extend(inst.start, 0.0);

    let mut walk = vec![inst.start];
    let mut cur = inst.start;
    for &next in search.best_order.iter().chain([&inst.dest]) {
        walk.extend(spt.path(cur, next).into_iter().skip(1));
        cur = next;
    }
    Ok(OracleSolution {
        cost: search.best_cost,
        order: search.best_order,
        walk,
    })
}

struct PermSearch<'a> {
    spt: &'a ShortestPathTable,
    items: &'a [NodeId],
    dest: NodeId,
    used: Vec<bool>,
    prefix: Vec<NodeId>,
    best_cost: f64,
    best_order: Vec<NodeId>,
}

impl PermSearch<'_> {
    fn extend(&mut self, last: NodeId, partial: f64) {
        if partial >= self.best_cost - COST_EPS {
            return;
        }
        if self.prefix.len() == self.items.len() {
            let total = partial + self.spt.dist(last, self.dest);
            if total < self.best_cost - COST_EPS {
                self.best_cost = total;
                self.best_order.clone_from(&self.prefix);
            }
            return;
        }
        for i in 0..self.items.len() {
            if self.used[i] {
                continue;
            }
            let next = self.items[i];
            self.used[i] = true;
            self.prefix.push(next);
            self.extend(next, partial + self.spt.dist(last, next));
            self.prefix.pop();
            self.used[i] = false;
        }
    }
}
