//! Shortest walks through mandatory waypoints on weighted graphs.
//!
//! * [`graph`]: graphs, instances and their text formats.
//! * [`oracle`]: all-pairs Dijkstra and an exhaustive reference solver.
//! * [`solver`]: the arc-flow branch-and-bound solver.
//! * [`probes`]: branching orders from shortest paths or from a network.
//! * [`instance_gen`]: benchmark graphs and instance sets.
//! * [`dataset`]: next-node training examples from optimal solutions.
//! * [`nn`]: the graph convolutional network, its training and weights files.
//! * [`pipeline`]: data generation and the probe comparison.
//!
//! The types shared by the command-line tool and the benchmarks are
//! re-exported at the crate root.

pub mod dataset;
pub mod error;
pub mod graph;
pub mod instance_gen;
pub mod nn;
pub mod oracle;
pub mod pipeline;
pub mod probes;
pub mod solver;

pub use dataset::{build_dataset, encode_instance, split_root_pair, Dataset, Example, RootPair};
pub use error::{Error, Result};
pub use graph::{load_instances, save_instances, ArcId, Instance, NodeId, WeightedGraph};
pub use instance_gen::{count_instances, generate_graph, generate_instances, GenConfig};
pub use nn::{
    curves_csv, evaluate, load_model, load_model_for, save_model, top_k_accuracy, train,
    train_on_dataset, GcnModel, ModelConfig, TrainConfig, TrainOutcome,
};
pub use oracle::{brute_force_solve, dijkstra_all_pairs, ShortestPathTable};
pub use pipeline::{
    benchmark_config, disjoint_from, evaluation_config, records_csv, run_comparison,
    run_data_generation, solve_all, BenchReport, Comparison, DataGenReport, ProbeKind, Prober,
    SolveRecord, COMPARISON_SIZES,
};
pub use probes::{dijkstra_probe, neural_probe, ProbeOrdering};
pub use solver::{solve_instance, solve_with_retry, SearchOrder, SearchStats, SolverConfig};
