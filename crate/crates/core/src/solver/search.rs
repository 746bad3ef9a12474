use std::time::{Duration, Instant};

use crate::graph::{ArcId, Instance, NodeId, WeightedGraph};
use crate::oracle::COST_EPS;
use crate::probes::ProbeOrdering;

use super::model::{Dom, FlowModel};
use super::walk::extract_walk;

/// Per-node branching order over outgoing arcs.
///
/// Arcs leaving a node are ranked by: on the probe's preferred path first,
/// then preference rank of the head node, then arc id. The start node may
/// use a different probe at the root of the tree than deeper down.
#[derive(Debug, Clone)]
pub struct SearchOrder {
    per_node: Vec<Vec<ArcId>>,
    root: Vec<ArcId>,
}

impl SearchOrder {
    pub fn new(g: &WeightedGraph, inst: &Instance, probe: &ProbeOrdering) -> Self {
        let per_node: Vec<Vec<ArcId>> = (0..g.n()).map(|x| ranked_out_arcs(g, x, probe)).collect();
        let root = per_node[inst.start].clone();
        SearchOrder { per_node, root }
    }

    /// `root` orders the children of the root node only; every other
    /// choice point follows `deeper`.
    pub fn with_root(
        g: &WeightedGraph,
        inst: &Instance,
        root: &ProbeOrdering,
        deeper: &ProbeOrdering,
    ) -> Self {
        let mut order = SearchOrder::new(g, inst, deeper);
        order.root = ranked_out_arcs(g, inst.start, root);
        order
    }

    pub fn root_arcs(&self) -> &[ArcId] {
        &self.root
    }

    pub fn arcs_from(&self, x: NodeId) -> &[ArcId] {
        &self.per_node[x]
    }
}

fn ranked_out_arcs(g: &WeightedGraph, x: NodeId, probe: &ProbeOrdering) -> Vec<ArcId> {
    let rank = probe.ranks();
    let on_path = |a: ArcId| {
        probe
            .preferred_path
            .as_ref()
            .is_some_and(|p| p.contains(&a))
    };
    let mut arcs = g.out_arcs(x).to_vec();
    arcs.sort_by_key(|&a| {
        let arc = g.arc(a);
        (!on_path(a), rank[arc.head], rank[arc.tail], a)
    });
    arcs
}

#[derive(Debug, Clone, PartialEq)]
pub struct Incumbent {
    pub cost: f64,
    /// Arcs with flow 1 (the plan Φ).
    pub plan: Vec<ArcId>,
    pub walk: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchStats {
    /// Decisions undone during the search.
    pub backtracks: u64,
    /// Search nodes expanded.
    pub nodes: u64,
    /// Complete assignments refused by walk extraction.
    pub rejected: u64,
    pub solve_time: Duration,
    pub proved_optimal: bool,
    pub best: Option<Incumbent>,
    /// Cost of every incumbent in discovery order.
    pub incumbent_costs: Vec<f64>,
    pub max_passes: usize,
}

impl SearchStats {
    pub fn best_cost(&self) -> f64 {
        self.best.as_ref().map_or(f64::INFINITY, |b| b.cost)
    }

    pub fn walk(&self) -> Option<&[NodeId]> {
        self.best.as_ref().map(|b| b.walk.as_slice())
    }
}

pub(super) struct Limits {
    pub deadline: Option<Instant>,
    pub node_limit: Option<u64>,
}

/// Depth-first branch and bound over trails leaving the start.
///
/// Each choice point sits at the current end of the trail and branches on
/// which outgoing arc carries the next unit of flow; arcs already forced
/// to 1 by propagation come first (first fail), then free arcs in probe
/// order. At the destination the first child closes the plan by fixing
/// every remaining variable to 0.
pub(super) struct TrailSearch<'m, 'g> {
    model: &'m mut FlowModel<'g>,
    order: &'m SearchOrder,
    limits: Limits,
    traversed: Vec<bool>,
    trail: Vec<NodeId>,
    stats: SearchStats,
    aborted: bool,
}

impl<'m, 'g> TrailSearch<'m, 'g> {
    pub fn new(model: &'m mut FlowModel<'g>, order: &'m SearchOrder, limits: Limits) -> Self {
        let arcs = model.var_count();
        let max_passes = model.max_passes();
        TrailSearch {
            model,
            order,
            limits,
            traversed: vec![false; arcs],
            trail: Vec::new(),
            stats: SearchStats {
                backtracks: 0,
                nodes: 0,
                rejected: 0,
                solve_time: Duration::ZERO,
                proved_optimal: false,
                best: None,
                incumbent_costs: Vec::new(),
                max_passes,
            },
            aborted: false,
        }
    }

    pub fn run(mut self) -> SearchStats {
        let started = Instant::now();
        let root = self.model.checkpoint();
        if self.model.propagate().is_consistent() {
            let start = self.model.instance().start;
            self.trail.push(start);
            self.expand(start);
            self.trail.pop();
        }
        self.model.restore(root);
        self.stats.proved_optimal = !self.aborted;
        self.stats.solve_time = started.elapsed();
        self.stats
    }

    fn out_of_budget(&self) -> bool {
        if let Some(limit) = self.limits.node_limit {
            if self.stats.nodes >= limit {
                return true;
            }
        }
        matches!(self.limits.deadline, Some(d) if Instant::now() >= d)
    }

    fn expand(&mut self, cur: NodeId) {
        if self.out_of_budget() {
            self.aborted = true;
            return;
        }
        self.stats.nodes += 1;

        if cur == self.model.instance().dest {
            self.close_plan();
            if self.aborted {
                return;
            }
        }

        let order = self.order;
        let arcs = if self.trail.len() == 1 {
            order.root_arcs()
        } else {
            order.arcs_from(cur)
        };
        for forced in [true, false] {
            for &a in arcs {
                if self.traversed[a] {
                    continue;
                }
                match (self.model.domain(a), forced) {
                    (Dom::One, true) | (Dom::Free, false) => {}
                    _ => continue,
                }
                let cp = self.model.checkpoint();
                self.model.fix(a, true);
                let head = self.model.graph().arc(a).head;
                self.traversed[a] = true;
                self.trail.push(head);
                if self.model.propagate().is_consistent() {
                    self.expand(head);
                }
                self.trail.pop();
                self.traversed[a] = false;
                self.model.restore(cp);
                self.stats.backtracks += 1;
                if self.aborted {
                    return;
                }
            }
        }
    }

    /// Child that ends the walk here: every free variable goes to 0.
    fn close_plan(&mut self) {
        let cp = self.model.checkpoint();
        for a in 0..self.model.var_count() {
            if self.model.domain(a) == Dom::Free {
                self.model.fix(a, false);
            }
        }
        if self.model.propagate().is_consistent() {
            self.record_leaf();
        }
        self.model.restore(cp);
        self.stats.backtracks += 1;
    }

    fn record_leaf(&mut self) {
        debug_assert!(self.model.is_complete());
        let cost = self.model.fixed_cost();
        if cost >= self.model.bound() - COST_EPS {
            return;
        }
        let plan = self.model.plan();
        debug_assert!(self.model.plan_satisfies_constraints(&plan));
        let g = self.model.graph();
        match extract_walk(g, self.model.instance(), &plan) {
            Ok(walk) => {
                self.model.set_bound(cost);
                self.stats.incumbent_costs.push(cost);
                self.stats.best = Some(Incumbent { cost, plan, walk });
            }
            Err(_) => self.stats.rejected += 1,
        }
    }
}
