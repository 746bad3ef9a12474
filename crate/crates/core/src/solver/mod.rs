//! Flow-variable model of the mandatory-waypoint problem and its
//! branch-and-bound search.

mod model;
mod search;
mod walk;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::graph::{Instance, WeightedGraph};
use crate::probes::ProbeOrdering;

pub use model::{Checkpoint, Dom, FlowModel, Propagation};
pub use search::{Incumbent, SearchOrder, SearchStats};
pub use walk::{extract_walk, WalkRejection};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(3);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Wall-clock budget per run, checked at every node expansion.
    pub timeout: Option<Duration>,
    /// Node-expansion budget; a machine-independent alternative to the
    /// timeout for reproducible runs.
    pub node_limit: Option<u64>,
    /// Maximum passes through a node (N). `None` uses
    /// [`default_max_passes`].
    pub max_passes: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            timeout: Some(DEFAULT_TIMEOUT),
            node_limit: None,
            max_passes: None,
        }
    }
}

impl SolverConfig {
    pub fn unlimited() -> Self {
        SolverConfig {
            timeout: None,
            node_limit: None,
            max_passes: None,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = Some(timeout);
        self
    }

    pub fn with_node_limit(mut self, limit: u64) -> Self {
        self.node_limit = Some(limit);
        self
    }

    pub fn with_max_passes(mut self, n: usize) -> Self {
        self.max_passes = Some(n);
        self
    }

    pub fn passes_for(&self, inst: &Instance) -> usize {
        self.max_passes
            .unwrap_or_else(|| default_max_passes(inst.mandatory().len()))
    }
}

/// `max(2, ceil(|M| / 2) + 1)`.
pub fn default_max_passes(mandatory: usize) -> usize {
    (mandatory.div_ceil(2) + 1).max(2)
}

pub fn build_model<'g>(g: &'g WeightedGraph, inst: &Instance, cfg: &SolverConfig) -> FlowModel<'g> {
    FlowModel::new(g, inst, cfg.passes_for(inst))
}

/// Minimizes total arc weight. Returns the best plan found; it is proved
/// optimal when the tree is exhausted before any budget runs out.
pub fn solve(model: &mut FlowModel<'_>, cfg: &SolverConfig, order: &SearchOrder) -> SearchStats {
    let limits = search::Limits {
        deadline: cfg.timeout.map(|t| Instant::now() + t),
        node_limit: cfg.node_limit,
    };
    search::TrailSearch::new(model, order, limits).run()
}

/// Builds the model and branching order for `probe` and solves.
pub fn solve_instance(
    g: &WeightedGraph,
    inst: &Instance,
    cfg: &SolverConfig,
    probe: &ProbeOrdering,
) -> SearchStats {
    let order = SearchOrder::new(g, inst, probe);
    let mut model = build_model(g, inst, cfg);
    solve(&mut model, cfg, &order)
}

/// Solves once; if the search proves there is no walk within the pass
/// limit, doubles the limit and solves again.
pub fn solve_with_retry(
    g: &WeightedGraph,
    inst: &Instance,
    cfg: &SolverConfig,
    order: &SearchOrder,
) -> SearchStats {
    let mut model = build_model(g, inst, cfg);
    let stats = solve(&mut model, cfg, order);
    if stats.best.is_some() || !stats.proved_optimal {
        return stats;
    }
    let doubled = cfg.clone().with_max_passes(2 * cfg.passes_for(inst));
    log::debug!("{inst}: infeasible with N = {}, retrying", cfg.passes_for(inst));
    let mut model = build_model(g, inst, &doubled);
    let mut retry = solve(&mut model, &doubled, order);
    retry.backtracks += stats.backtracks;
    retry.nodes += stats.nodes;
    retry.solve_time += stats.solve_time;
    retry
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::*;
    use crate::graph::NodeId;
    use crate::instance_gen::{generate_graph, GenConfig};
    use crate::oracle::{brute_force_solve, dijkstra_all_pairs, COST_EPS};
    use crate::probes::dijkstra_probe;

    fn solve_ref(g: &WeightedGraph, inst: &Instance, cfg: &SolverConfig) -> SearchStats {
        let spt = dijkstra_all_pairs(g);
        solve_instance(g, inst, cfg, &dijkstra_probe(g, inst, &spt))
    }

    #[test]
    fn default_passes() {
        assert_eq!(default_max_passes(0), 2);
        assert_eq!(default_max_passes(2), 2);
        assert_eq!(default_max_passes(3), 3);
        assert_eq!(default_max_passes(8), 5);
        assert_eq!(default_max_passes(9), 6);
    }

    #[test]
    fn path_graph_forced_order() {
        let g = path3();
        let inst = Instance::new(3, 0, 2, vec![1]).unwrap();
        let stats = solve_ref(&g, &inst, &SolverConfig::unlimited());
        assert!(stats.proved_optimal);
        assert_eq!(stats.best_cost(), 2.0);
        assert_eq!(stats.walk(), Some(&[0, 1, 2][..]));
    }

    #[test]
    fn two_nodes() {
        let g = WeightedGraph::new(2, false, vec![(0, 1, 1.5)]).unwrap();
        let inst = Instance::new(2, 0, 1, vec![]).unwrap();
        let stats = solve_ref(&g, &inst, &SolverConfig::unlimited());
        assert!(stats.proved_optimal);
        assert_eq!(stats.best.unwrap().plan, vec![g.arc_between(0, 1).unwrap()]);
    }

    #[test]
    fn seven_node_example_matches_oracle() {
        let g = seven();
        let spt = dijkstra_all_pairs(&g);
        let inst = Instance::new(7, 3, 1, vec![0, 6]).unwrap();
        let oracle = brute_force_solve(&g, &inst, &spt).unwrap();
        let stats = solve_ref(&g, &inst, &SolverConfig::unlimited());
        assert!(stats.proved_optimal);
        assert!((stats.best_cost() - oracle.cost).abs() < COST_EPS);
    }

    #[test]
    fn star_needs_three_passes_through_center() {
        let g = star5();
        let inst = Instance::new(5, 1, 2, vec![3, 4]).unwrap();
        // N = 2 cannot pass the center three times
        let low = solve_ref(&g, &inst, &SolverConfig::unlimited().with_max_passes(2));
        assert!(low.proved_optimal && low.best.is_none());
        let ok = solve_ref(&g, &inst, &SolverConfig::unlimited().with_max_passes(4));
        assert!(ok.proved_optimal);
        assert_eq!(ok.best_cost(), 6.0);
    }

    #[test]
    fn start_revisits_are_allowed() {
        // start at the hub of the star
        let g = star5();
        let inst = Instance::new(5, 0, 1, vec![2, 3]).unwrap();
        let stats = solve_ref(&g, &inst, &SolverConfig::unlimited().with_max_passes(3));
        assert!(stats.proved_optimal);
        assert_eq!(stats.best_cost(), 5.0);
        let walk = stats.walk().unwrap();
        assert_eq!(walk.iter().filter(|&&v| v == 0).count(), 3);
    }

    #[test]
    fn retry_doubles_the_pass_limit() {
        let g = star5();
        let spt = dijkstra_all_pairs(&g);
        let inst = Instance::new(5, 1, 2, vec![3, 4]).unwrap();
        let order = SearchOrder::new(&g, &inst, &dijkstra_probe(&g, &inst, &spt));
        let cfg = SolverConfig::unlimited().with_max_passes(2);
        let stats = solve_with_retry(&g, &inst, &cfg, &order);
        assert_eq!(stats.max_passes, 4);
        assert!(stats.proved_optimal);
        assert_eq!(stats.best_cost(), 6.0);
    }

    #[test]
    fn timeout_returns_upper_bound() {
        let g = generate_graph(&GenConfig::new(5, 15));
        let spt = dijkstra_all_pairs(&g);
        let inst = Instance::new(15, 0, 14, vec![1, 3, 5, 7, 9, 10, 11, 12]).unwrap();
        let oracle = brute_force_solve(&g, &inst, &spt).unwrap();
        let cfg = SolverConfig::default().with_node_limit(20_000);
        let stats = solve_ref(&g, &inst, &cfg);
        if stats.best.is_some() {
            assert!(stats.best_cost() >= oracle.cost - COST_EPS);
        }
        if !stats.proved_optimal {
            assert!(stats.nodes <= 20_000);
        }
    }

    #[test]
    fn incumbents_strictly_decrease_and_are_sound() {
        for seed in 0..10 {
            let g = generate_graph(&GenConfig::new(seed, 8));
            let inst = Instance::new(8, 0, 7, vec![2, 4, 5]).unwrap();
            let cfg = SolverConfig::unlimited().with_max_passes(4);
            let stats = solve_ref(&g, &inst, &cfg);
            assert!(stats.incumbent_costs.windows(2).all(|w| w[1] < w[0] - COST_EPS));
            let best = stats.best.unwrap();
            let model = build_model(&g, &inst, &cfg);
            assert!(model.plan_satisfies_constraints(&best.plan));
            assert_eq!(best.walk.first(), Some(&0));
            assert_eq!(best.walk.last(), Some(&7));
            for m in inst.mandatory() {
                assert!(best.walk.contains(m));
            }
            assert!((g.walk_cost(&best.walk).unwrap() - best.cost).abs() < COST_EPS);
        }
    }

    #[test]
    fn deterministic_statistics() {
        let g = generate_graph(&GenConfig::new(9, 12));
        let inst = Instance::new(12, 1, 10, vec![3, 5, 8, 0]).unwrap();
        let cfg = SolverConfig::unlimited().with_node_limit(200_000);
        let a = solve_ref(&g, &inst, &cfg);
        let b = solve_ref(&g, &inst, &cfg);
        assert_eq!(a.backtracks, b.backtracks);
        assert_eq!(a.nodes, b.nodes);
        assert_eq!(a.best, b.best);
    }

    #[test]
    fn probe_does_not_change_optimum() {
        for seed in 0..8 {
            let g = generate_graph(&GenConfig::new(seed, 8));
            let spt = dijkstra_all_pairs(&g);
            let inst = Instance::new(8, 3, 6, vec![0, 1, 7]).unwrap();
            let cfg = SolverConfig::unlimited().with_max_passes(4);
            let reference = solve_instance(&g, &inst, &cfg, &dijkstra_probe(&g, &inst, &spt));
            let reversed: Vec<NodeId> = (0..8).rev().collect();
            let other = solve_instance(&g, &inst, &cfg, &ProbeOrdering::from_preference(reversed));
            assert!(reference.proved_optimal && other.proved_optimal);
            assert!((reference.best_cost() - other.best_cost()).abs() < COST_EPS);
        }
    }
}
