//! Fixtures shared by the benchmarks.

use waypoint_core::{
    benchmark_config, dijkstra_all_pairs, generate_graph, generate_instances, Instance,
    ShortestPathTable, WeightedGraph,
};

pub struct Fixture {
    pub graph: WeightedGraph,
    pub spt: ShortestPathTable,
    pub instances: Vec<Instance>,
}

/// The graph of benchmark shape `name` with one instance per kept pair for
/// each of `sizes`.
pub fn fixture(name: &str, sizes: &[usize]) -> Fixture {
    let mut cfg = benchmark_config(name, 1).expect("known benchmark");
    cfg.mandatory_sizes = sizes.to_vec();
    cfg.instances_per_pair = 1;
    let graph = generate_graph(&cfg);
    let spt = dijkstra_all_pairs(&graph);
    let instances = generate_instances(&graph, &spt, &cfg).expect("valid generator settings");
    Fixture {
        graph,
        spt,
        instances,
    }
}

impl Fixture {
    /// Instances with exactly `size` mandatory nodes.
    pub fn of_size(&self, size: usize) -> impl Iterator<Item = &Instance> {
        self.instances.iter().filter(move |i| i.mandatory().len() == size)
    }
}
