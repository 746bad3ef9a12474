use crate::graph::{ArcId, Instance, NodeId, WeightedGraph};
use crate::oracle::COST_EPS;

/// Domain of a 0/1 flow variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dom {
    Free,
    Zero,
    One,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Propagation {
    Consistent,
    Failed,
}

impl Propagation {
    pub fn is_consistent(self) -> bool {
        self == Propagation::Consistent
    }
}

/// Restore point for [`FlowModel::restore`].
#[derive(Debug, Clone, Copy)]
pub struct Checkpoint {
    trail_len: usize,
    fixed_cost: f64,
}

/// One 0/1 flow variable per arc with the constraint store:
///
/// * conservation: `in'(x) = out'(x) <= N` for every node, where the
///   primed sums include a unit virtual arc entering the start and a unit
///   virtual arc leaving the destination (the limit conditions),
/// * mandatory: `out(m) >= 1` for every mandatory node,
/// * objective: `Σ φ_u w_u < incumbent - COST_EPS` once an incumbent exists.
///
/// Propagation is bounds consistency on these linear sums, which for 0/1
/// variables removes every unsupported value.
#[derive(Debug, Clone)]
pub struct FlowModel<'g> {
    graph: &'g WeightedGraph,
    instance: Instance,
    max_passes: u32,
    dom: Vec<Dom>,
    out_ones: Vec<u32>,
    out_free: Vec<u32>,
    in_ones: Vec<u32>,
    in_free: Vec<u32>,
    source: Vec<u32>,
    sink: Vec<u32>,
    mandatory: Vec<bool>,
    by_weight_desc: Vec<ArcId>,
    fixed_cost: f64,
    bound: f64,
    trail: Vec<ArcId>,
    queue: Vec<NodeId>,
    queued: Vec<bool>,
}

impl<'g> FlowModel<'g> {
    pub fn new(graph: &'g WeightedGraph, instance: &Instance, max_passes: usize) -> Self {
        assert!(max_passes >= 1, "max passes must be positive");
        let n = graph.n();
        let mut source = vec![0; n];
        let mut sink = vec![0; n];
        source[instance.start] = 1;
        sink[instance.dest] = 1;
        let mut mandatory = vec![false; n];
        for &m in instance.mandatory() {
            mandatory[m] = true;
        }
        let mut by_weight_desc: Vec<ArcId> = (0..graph.arc_count()).collect();
        by_weight_desc.sort_by(|&a, &b| {
            graph
                .arc(b)
                .weight
                .total_cmp(&graph.arc(a).weight)
                .then(a.cmp(&b))
        });
        FlowModel {
            graph,
            instance: instance.clone(),
            max_passes: max_passes.min(u32::MAX as usize) as u32,
            dom: vec![Dom::Free; graph.arc_count()],
            out_ones: vec![0; n],
            out_free: (0..n).map(|x| graph.out_arcs(x).len() as u32).collect(),
            in_ones: vec![0; n],
            in_free: (0..n).map(|x| graph.in_arcs(x).len() as u32).collect(),
            source,
            sink,
            mandatory,
            by_weight_desc,
            fixed_cost: 0.0,
            bound: f64::INFINITY,
            trail: Vec::new(),
            queue: (0..n).rev().collect(),
            queued: vec![true; n],
        }
    }

    pub fn graph(&self) -> &'g WeightedGraph {
        self.graph
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn max_passes(&self) -> usize {
        self.max_passes as usize
    }

    pub fn domain(&self, arc: ArcId) -> Dom {
        self.dom[arc]
    }

    pub fn var_count(&self) -> usize {
        self.dom.len()
    }

    /// Cost of the arcs currently fixed to 1.
    pub fn fixed_cost(&self) -> f64 {
        self.fixed_cost
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Posts `cost < bound - COST_EPS`. Bounds only tighten.
    pub fn set_bound(&mut self, bound: f64) {
        self.bound = self.bound.min(bound);
    }

    /// Sum of fixed-to-1 flow leaving `x`, virtual sink arc excluded.
    pub fn out_flow(&self, x: NodeId) -> (u32, u32) {
        (self.out_ones[x], self.out_ones[x] + self.out_free[x])
    }

    pub fn in_flow(&self, x: NodeId) -> (u32, u32) {
        (self.in_ones[x], self.in_ones[x] + self.in_free[x])
    }

    pub fn is_complete(&self) -> bool {
        self.dom.iter().all(|&d| d != Dom::Free)
    }

    /// Arcs fixed to 1.
    pub fn plan(&self) -> Vec<ArcId> {
        (0..self.dom.len()).filter(|&a| self.dom[a] == Dom::One).collect()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            trail_len: self.trail.len(),
            fixed_cost: self.fixed_cost,
        }
    }

    pub fn restore(&mut self, cp: Checkpoint) {
        while self.trail.len() > cp.trail_len {
            let a = self.trail.pop().unwrap();
            let arc = *self.graph.arc(a);
            match self.dom[a] {
                Dom::One => {
                    self.out_ones[arc.tail] -= 1;
                    self.in_ones[arc.head] -= 1;
                }
                Dom::Zero => {}
                Dom::Free => unreachable!("trail holds fixed arcs only"),
            }
            self.out_free[arc.tail] += 1;
            self.in_free[arc.head] += 1;
            self.dom[a] = Dom::Free;
        }
        self.fixed_cost = cp.fixed_cost;
        for x in self.queue.drain(..) {
            self.queued[x] = false;
        }
    }

    /// Fixes a variable. Returns `false` if it is already fixed to the
    /// other value.
    pub fn fix(&mut self, a: ArcId, value: bool) -> bool {
        let target = if value { Dom::One } else { Dom::Zero };
        match self.dom[a] {
            Dom::Free => {}
            d => return d == target,
        }
        let arc = *self.graph.arc(a);
        self.dom[a] = target;
        self.trail.push(a);
        self.out_free[arc.tail] -= 1;
        self.in_free[arc.head] -= 1;
        if value {
            self.out_ones[arc.tail] += 1;
            self.in_ones[arc.head] += 1;
            self.fixed_cost += arc.weight;
        }
        self.enqueue(arc.tail);
        self.enqueue(arc.head);
        true
    }

    fn enqueue(&mut self, x: NodeId) {
        if !self.queued[x] {
            self.queued[x] = true;
            self.queue.push(x);
        }
    }

    /// Runs every constraint to a fixpoint. Idempotent.
    pub fn propagate(&mut self) -> Propagation {
        loop {
            if !self.propagate_objective() {
                return self.fail();
            }
            if self.queue.is_empty() {
                return Propagation::Consistent;
            }
            while let Some(x) = self.queue.pop() {
                self.queued[x] = false;
                if !self.propagate_node(x) {
                    return self.fail();
                }
            }
        }
    }

    fn fail(&mut self) -> Propagation {
        for x in self.queue.drain(..) {
            self.queued[x] = false;
        }
        Propagation::Failed
    }

    fn propagate_objective(&mut self) -> bool {
        if !self.bound.is_finite() {
            return true;
        }
        let slack = self.bound - COST_EPS - self.fixed_cost;
        if slack <= 0.0 {
            return false;
        }
        for i in 0..self.by_weight_desc.len() {
            let a = self.by_weight_desc[i];
            if self.graph.arc(a).weight < slack {
                break;
            }
            if self.dom[a] == Dom::Free {
                self.fix(a, false);
            }
        }
        true
    }

    fn propagate_node(&mut self, x: NodeId) -> bool {
        let out_lo = self.out_ones[x] + self.sink[x];
        let out_hi = out_lo + self.out_free[x];
        let in_lo = self.in_ones[x] + self.source[x];
        let in_hi = in_lo + self.in_free[x];
        let mut lo = out_lo.max(in_lo);
        if self.mandatory[x] {
            lo = lo.max(1 + self.sink[x]);
        }
        let hi = out_hi.min(in_hi).min(self.max_passes);
        if lo > hi {
            return false;
        }
        let g = self.graph;
        if self.out_free[x] > 0 {
            if hi == out_lo {
                self.fix_free(g.out_arcs(x), false);
            } else if lo == out_hi {
                self.fix_free(g.out_arcs(x), true);
            }
        }
        if self.in_free[x] > 0 {
            if hi == in_lo {
                self.fix_free(g.in_arcs(x), false);
            } else if lo == in_hi {
                self.fix_free(g.in_arcs(x), true);
            }
        }
        true
    }

    fn fix_free(&mut self, arcs: &[ArcId], value: bool) {
        for &a in arcs {
            if self.dom[a] == Dom::Free {
                self.fix(a, value);
            }
        }
    }

    /// Evaluates conservation, limit, passage-bound and mandatory
    /// constraints directly on an arc set, independent of propagation.
    pub fn plan_satisfies_constraints(&self, plan: &[ArcId]) -> bool {
        let n = self.graph.n();
        let mut out = vec![0u32; n];
        let mut inn = vec![0u32; n];
        for &a in plan {
            let arc = self.graph.arc(a);
            out[arc.tail] += 1;
            inn[arc.head] += 1;
        }
        (0..n).all(|x| {
            let o = out[x] + self.sink[x];
            let i = inn[x] + self.source[x];
            o == i && i <= self.max_passes && (!self.mandatory[x] || out[x] >= 1)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::*;

    fn doms(m: &FlowModel) -> Vec<Dom> {
        (0..m.var_count()).map(|a| m.domain(a)).collect()
    }

    #[test]
    fn start_with_single_arc_is_forced() {
        let g = path3();
        let inst = Instance::new(3, 0, 2, vec![]).unwrap();
        let mut m = FlowModel::new(&g, &inst, 2);
        assert!(m.propagate().is_consistent());
        let a = g.arc_between(0, 1).unwrap();
        assert_eq!(m.domain(a), Dom::One);
        assert_eq!(m.out_flow(0), (1, 1));
    }

    #[test]
    fn two_node_graph_has_one_solution() {
        let g = WeightedGraph::new(2, false, vec![(0, 1, 1.0)]).unwrap();
        let inst = Instance::new(2, 0, 1, vec![]).unwrap();
        let mut m = FlowModel::new(&g, &inst, 2);
        assert_eq!(m.var_count(), 2);
        assert!(m.propagate().is_consistent());
        assert_eq!(m.domain(g.arc_between(0, 1).unwrap()), Dom::One);
        assert_eq!(m.domain(g.arc_between(1, 0).unwrap()), Dom::Zero);
        assert!(m.is_complete());
        assert!(m.plan_satisfies_constraints(&m.plan()));
    }

    #[test]
    fn mandatory_without_exit_fails() {
        let g = star5();
        let inst = Instance::new(5, 1, 2, vec![3]).unwrap();
        let mut m = FlowModel::new(&g, &inst, 3);
        assert!(m.fix(g.arc_between(3, 0).unwrap(), false));
        assert_eq!(m.propagate(), Propagation::Failed);
    }

    #[test]
    fn hand_run_on_four_cycle() {
        // 0-1-2-3-0, route 0 -> 2, N = 2. Fixing 0->1 gives node 1 one unit
        // of inflow: its outflow must be 1 but either exit still works.
        let g = WeightedGraph::new(
            4,
            false,
            vec![(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)],
        )
        .unwrap();
        let inst = Instance::new(4, 0, 2, vec![]).unwrap();
        let mut m = FlowModel::new(&g, &inst, 2);
        assert!(m.propagate().is_consistent());
        assert!((0..m.var_count()).all(|a| m.domain(a) == Dom::Free));
        assert!(m.fix(g.arc_between(0, 1).unwrap(), true));
        assert!(m.propagate().is_consistent());
        assert_eq!(m.out_flow(1), (0, 2));
        assert_eq!(m.domain(g.arc_between(1, 2).unwrap()), Dom::Free);
        assert_eq!(m.domain(g.arc_between(1, 0).unwrap()), Dom::Free);
        // one more decision settles node 1
        assert!(m.fix(g.arc_between(1, 0).unwrap(), false));
        assert!(m.propagate().is_consistent());
        assert_eq!(m.domain(g.arc_between(1, 2).unwrap()), Dom::One);
    }

    #[test]
    fn single_pass_bound_fixes_the_chain() {
        let g = WeightedGraph::new(
            4,
            false,
            vec![(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)],
        )
        .unwrap();
        let inst = Instance::new(4, 0, 2, vec![]).unwrap();
        let mut m = FlowModel::new(&g, &inst, 1);
        assert!(m.propagate().is_consistent());
        assert_eq!(m.domain(g.arc_between(1, 0).unwrap()), Dom::Zero);
        assert_eq!(m.domain(g.arc_between(2, 1).unwrap()), Dom::Zero);
        assert!(m.fix(g.arc_between(0, 1).unwrap(), true));
        assert!(m.propagate().is_consistent());
        assert!(m.is_complete());
        assert_eq!(m.plan().len(), 2);
    }

    #[test]
    fn propagate_is_idempotent() {
        let g = seven();
        let inst = Instance::new(7, 3, 1, vec![0, 6]).unwrap();
        let mut m = FlowModel::new(&g, &inst, 2);
        assert!(m.propagate().is_consistent());
        assert!(m.fix(g.arc_between(3, 2).unwrap(), true));
        assert!(m.propagate().is_consistent());
        let first = doms(&m);
        assert!(m.propagate().is_consistent());
        assert_eq!(doms(&m), first);
    }

    #[test]
    fn restore_undoes_everything() {
        let g = seven();
        let inst = Instance::new(7, 3, 1, vec![0, 6]).unwrap();
        let mut m = FlowModel::new(&g, &inst, 2);
        assert!(m.propagate().is_consistent());
        let before = doms(&m);
        let cp = m.checkpoint();
        m.fix(g.arc_between(3, 4).unwrap(), true);
        m.propagate();
        m.restore(cp);
        assert_eq!(doms(&m), before);
        assert_eq!(m.fixed_cost(), 0.0);
    }

    #[test]
    fn objective_bound_prunes_heavy_arcs() {
        let g = seven();
        let inst = Instance::new(7, 3, 1, vec![]).unwrap();
        let mut m = FlowModel::new(&g, &inst, 2);
        m.set_bound(4.5);
        assert!(m.propagate().is_consistent());
        // weight-5 arc 3-5 can never fit under 4.5
        assert_eq!(m.domain(g.arc_between(3, 5).unwrap()), Dom::Zero);
        m.set_bound(1e-10);
        assert_eq!(m.propagate(), Propagation::Failed);
    }
}
