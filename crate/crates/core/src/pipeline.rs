//! End-to-end runs: solving instance sets, building the training set from
//! the proved-optimal solutions, and comparing the two probes.

use std::collections::HashSet;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{build_dataset, Dataset, RootPair};
use crate::error::{Error, Result};
use crate::graph::{Instance, NodeId, WeightedGraph};
use crate::instance_gen::GenConfig;
use crate::nn::GcnModel;
use crate::oracle::{ShortestPathTable, COST_EPS};
use crate::probes::{dijkstra_probe, neural_probe};
use crate::solver::{solve_with_retry, SearchOrder, SolverConfig};

/// Mandatory-set sizes of the probe comparison.
pub const COMPARISON_SIZES: [usize; 4] = [3, 5, 7, 9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    Dijkstra,
    Neural,
}

impl fmt::Display for ProbeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProbeKind::Dijkstra => "dijkstra",
            ProbeKind::Neural => "neural",
        })
    }
}

impl FromStr for ProbeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dijkstra" => Ok(ProbeKind::Dijkstra),
            "neural" => Ok(ProbeKind::Neural),
            _ => Err(Error::Config(format!("unknown probe `{s}` (dijkstra|neural)"))),
        }
    }
}

/// Source of branching orders for a batch of instances.
#[derive(Debug, Clone, Copy)]
pub enum Prober<'a> {
    Dijkstra(&'a ShortestPathTable),
    /// The network's node ranking for the instance, computed once before
    /// the search, orders the root children and every deeper choice point.
    Neural(&'a GcnModel),
}

impl Prober<'_> {
    pub fn kind(&self) -> ProbeKind {
        match self {
            Prober::Dijkstra(_) => ProbeKind::Dijkstra,
            Prober::Neural(..) => ProbeKind::Neural,
        }
    }

    pub fn order(&self, g: &WeightedGraph, inst: &Instance) -> Result<SearchOrder> {
        Ok(match *self {
            Prober::Dijkstra(spt) => SearchOrder::new(g, inst, &dijkstra_probe(g, inst, spt)),
            Prober::Neural(model) => SearchOrder::new(g, inst, &neural_probe(model, g, inst)?),
        })
    }
}

/// Outcome of one solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub id: usize,
    pub instance: String,
    pub mandatory: usize,
    pub probe: ProbeKind,
    pub cost: Option<f64>,
    pub walk: Vec<NodeId>,
    pub proved_optimal: bool,
    pub backtracks: u64,
    pub nodes: u64,
    pub time_ms: f64,
    pub max_passes: usize,
}

impl SolveRecord {
    pub fn csv_header() -> &'static str {
        "id,instance,mandatory,probe,cost,proved_optimal,backtracks,nodes,time_ms,max_passes,walk"
    }

    pub fn csv_row(&self) -> String {
        let walk: Vec<String> = self.walk.iter().map(|v| v.to_string()).collect();
        format!(
            "{},{},{},{},{},{},{},{},{:.3},{},{}",
            self.id,
            self.instance,
            self.mandatory,
            self.probe,
            self.cost.map_or(String::new(), |c| c.to_string()),
            self.proved_optimal,
            self.backtracks,
            self.nodes,
            self.time_ms,
            self.max_passes,
            walk.join(" ")
        )
    }
}

pub fn records_csv(records: &[SolveRecord]) -> String {
    let mut out = format!("{}\n", SolveRecord::csv_header());
    for r in records {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

/// Solves every instance, in parallel across the rayon pool; results come
/// back in instance order.
pub fn solve_all(
    g: &WeightedGraph,
    instances: &[Instance],
    prober: &Prober<'_>,
    cfg: &SolverConfig,
) -> Result<Vec<SolveRecord>> {
    instances
        .par_iter()
        .enumerate()
        .map(|(id, inst)| {
            let order = prober.order(g, inst)?;
            let stats = solve_with_retry(g, inst, cfg, &order);
            Ok(SolveRecord {
                id,
                instance: inst.to_string(),
                mandatory: inst.mandatory().len(),
                probe: prober.kind(),
                cost: stats.best.as_ref().map(|b| b.cost),
                walk: stats.walk().map(<[NodeId]>::to_vec).unwrap_or_default(),
                proved_optimal: stats.proved_optimal && stats.best.is_some(),
                backtracks: stats.backtracks,
                nodes: stats.nodes,
                time_ms: stats.solve_time.as_secs_f64() * 1e3,
                max_passes: stats.max_passes,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeRow {
    pub size: usize,
    pub generated: usize,
    pub solved: usize,
}

/// Generated and optimally solved instances per mandatory-set size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataGenReport {
    pub nodes: usize,
    pub rows: Vec<SizeRow>,
    pub generated: usize,
    pub solved: usize,
    pub examples: usize,
    pub train: usize,
    pub test: usize,
}

impl DataGenReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<24}", "mandatory waypoints:");
        for r in &self.rows {
            let _ = write!(out, "{:>7}", r.size);
        }
        let _ = write!(out, "\n{:<24}", format!("generated ({}):", self.generated));
        for r in &self.rows {
            let _ = write!(out, "{:>7}", r.generated);
        }
        let _ = write!(out, "\n{:<24}", format!("optimally solved ({}):", self.solved));
        for r in &self.rows {
            let _ = write!(out, "{:>7}", r.solved);
        }
        let _ = writeln!(
            out,
            "\nexamples: {} (train {}, test {})",
            self.examples, self.train, self.test
        );
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("size,generated,solved\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{}", r.size, r.generated, r.solved);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct DataGeneration {
    pub dataset: Dataset,
    pub report: DataGenReport,
    pub records: Vec<SolveRecord>,
}

/// Solves every instance with the reference probe, keeps the proved-optimal
/// solutions as root pairs and turns them into a shuffled dataset.
pub fn run_data_generation(
    g: &WeightedGraph,
    spt: &ShortestPathTable,
    instances: &[Instance],
    sizes: &[usize],
    cfg: &SolverConfig,
    dataset_seed: u64,
) -> Result<DataGeneration> {
    let records = solve_all(g, instances, &Prober::Dijkstra(spt), cfg)?;
    let mut pairs = Vec::new();
    for (inst, rec) in instances.iter().zip(&records) {
        if rec.proved_optimal {
            pairs.push(RootPair::new(g, inst.clone(), rec.walk.clone())?);
        }
    }
    let dataset = build_dataset(g, &pairs, dataset_seed)?;
    let rows: Vec<SizeRow> = sizes
        .iter()
        .map(|&size| SizeRow {
            size,
            generated: records.iter().filter(|r| r.mandatory == size).count(),
            solved: records
                .iter()
                .filter(|r| r.mandatory == size && r.proved_optimal)
                .count(),
        })
        .collect();
    let report = DataGenReport {
        nodes: g.n(),
        generated: records.len(),
        solved: pairs.len(),
        examples: dataset.len(),
        train: dataset.train().len(),
        test: dataset.test().len(),
        rows,
    };
    Ok(DataGeneration {
        dataset,
        report,
        records,
    })
}

/// Per-probe results of a comparison run. Averages cover proved-optimal
/// runs only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub probe: ProbeKind,
    pub solved_by_size: Vec<usize>,
    pub resolved: usize,
    pub avg_time_ms: f64,
    pub avg_backtracks: f64,
}

fn summarize(probe: ProbeKind, sizes: &[usize], records: &[SolveRecord]) -> ProbeSummary {
    let solved: Vec<&SolveRecord> = records.iter().filter(|r| r.proved_optimal).collect();
    let count = solved.len().max(1) as f64;
    ProbeSummary {
        probe,
        solved_by_size: sizes
            .iter()
            .map(|&k| solved.iter().filter(|r| r.mandatory == k).count())
            .collect(),
        resolved: solved.len(),
        avg_time_ms: solved.iter().map(|r| r.time_ms).sum::<f64>() / count,
        avg_backtracks: solved.iter().map(|r| r.backtracks as f64).sum::<f64>() / count,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub nodes: usize,
    pub sizes: Vec<usize>,
    pub generated_by_size: Vec<usize>,
    pub reference: ProbeSummary,
    pub neural: ProbeSummary,
    /// Instances proved optimal by both probes.
    pub co_solved: usize,
    pub co_avg_backtracks_reference: f64,
    pub co_avg_backtracks_neural: f64,
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("report", e.line(), e.to_string()))
    }

    /// Solved-with-proof counts by size, then the aggregate search
    /// features. Times are wall-clock milliseconds.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<24}", "mandatory waypoints:");
        for k in &self.sizes {
            let _ = write!(out, "{k:>7}");
        }
        let _ = write!(out, "\n{:<24}", "generated:");
        for c in &self.generated_by_size {
            let _ = write!(out, "{c:>7}");
        }
        for (name, s) in [("reference:", &self.reference), ("neural net probing:", &self.neural)] {
            let _ = write!(out, "\n{name:<24}");
            for c in &s.solved_by_size {
                let _ = write!(out, "{c:>7}");
            }
        }
        let _ = writeln!(out, "\n");
        let _ = writeln!(out, "{:<36}{:>12}{:>12}", "", "reference", "neural");
        let _ = writeln!(
            out,
            "{:<36}{:>12}{:>12}",
            "instances resolved", self.reference.resolved, self.neural.resolved
        );
        let _ = writeln!(
            out,
            "{:<36}{:>12.1}{:>12.1}",
            "average solving time (ms)", self.reference.avg_time_ms, self.neural.avg_time_ms
        );
        let _ = writeln!(
            out,
            "{:<36}{:>12.0}{:>12.0}",
            "average backtracks", self.reference.avg_backtracks, self.neural.avg_backtracks
        );
        let _ = writeln!(
            out,
            "{:<36}{:>12.0}{:>12.0}",
            format!("avg backtracks, co-solved ({})", self.co_solved),
            self.co_avg_backtracks_reference,
            self.co_avg_backtracks_neural
        );
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("probe,size,solved\n");
        for s in [&self.reference, &self.neural] {
            for (k, c) in self.sizes.iter().zip(&s.solved_by_size) {
                let _ = writeln!(out, "{},{k},{c}", s.probe);
            }
        }
        out.push_str("\nprobe,resolved,avg_time_ms,avg_backtracks\n");
        for s in [&self.reference, &self.neural] {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                s.probe, s.resolved, s.avg_time_ms, s.avg_backtracks
            );
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub report: BenchReport,
    pub reference: Vec<SolveRecord>,
    pub neural: Vec<SolveRecord>,
}

/// Solves every instance with both probes under the same budget. Fails if
/// the probes prove different optimal costs for the same instance.
pub fn run_comparison(
    g: &WeightedGraph,
    spt: &ShortestPathTable,
    instances: &[Instance],
    model: &GcnModel,
    sizes: &[usize],
    cfg: &SolverConfig,
) -> Result<Comparison> {
    model.check_graph(g)?;
    let reference = solve_all(g, instances, &Prober::Dijkstra(spt), cfg)?;
    let neural = solve_all(g, instances, &Prober::Neural(model), cfg)?;
    let mut co = Vec::new();
    for (r, nn) in reference.iter().zip(&neural) {
        if r.proved_optimal && nn.proved_optimal {
            let (a, b) = (r.cost.unwrap_or(f64::NAN), nn.cost.unwrap_or(f64::NAN));
            // NaN (a missing cost) counts as a disagreement
            let agree = (a - b).abs() <= COST_EPS;
            if !agree {
                return Err(Error::CostDisagreement {
                    instance: r.id,
                    reference: a,
                    neural: b,
                });
            }
            co.push((r.backtracks as f64, nn.backtracks as f64));
        }
    }
    let co_count = co.len().max(1) as f64;
    let report = BenchReport {
        nodes: g.n(),
        sizes: sizes.to_vec(),
        generated_by_size: sizes
            .iter()
            .map(|&k| instances.iter().filter(|i| i.mandatory().len() == k).count())
            .collect(),
        reference: summarize(ProbeKind::Dijkstra, sizes, &reference),
        neural: summarize(ProbeKind::Neural, sizes, &neural),
        co_solved: co.len(),
        co_avg_backtracks_reference: co.iter().map(|c| c.0).sum::<f64>() / co_count,
        co_avg_backtracks_neural: co.iter().map(|c| c.1).sum::<f64>() / co_count,
    };
    Ok(Comparison {
        report,
        reference,
        neural,
    })
}

/// Drops instances that also occur in `seen`.
pub fn disjoint_from(instances: Vec<Instance>, seen: &[Instance]) -> Vec<Instance> {
    let seen: HashSet<&Instance> = seen.iter().collect();
    let before = instances.len();
    let out: Vec<Instance> = instances.into_iter().filter(|i| !seen.contains(i)).collect();
    if out.len() < before {
        log::info!("dropped {} evaluation instances seen during data generation", before - out.len());
    }
    out
}

/// Generator settings for the two benchmark shapes: a 15-node graph with
/// 42 kept pairs and sizes up to 8, and a 22-node graph with 69 kept
/// pairs and sizes up to 10.
pub fn benchmark_config(name: &str, seed: u64) -> Result<GenConfig> {
    let (n, keep, sizes) = match name {
        "b1" => (15, 0.2, vec![0, 1, 2, 4, 6, 8]),
        "b2" => (22, 0.149, vec![0, 1, 2, 4, 6, 8, 10]),
        _ => return Err(Error::Config(format!("unknown benchmark `{name}` (b1|b2)"))),
    };
    Ok(GenConfig {
        seed,
        n,
        decimation_keep: keep,
        mandatory_sizes: sizes,
        instances_per_pair: 6,
    })
}

/// Evaluation-set generator: same graph and decimation, comparison sizes,
/// a separate seed stream.
pub fn evaluation_config(train: &GenConfig, seed: u64, per_pair: usize) -> GenConfig {
    GenConfig {
        seed,
        mandatory_sizes: COMPARISON_SIZES.to_vec(),
        instances_per_pair: per_pair,
        ..train.clone()
    }
}
