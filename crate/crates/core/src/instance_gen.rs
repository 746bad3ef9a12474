//! Reproducible benchmark graphs and instance sets.
//!
//! Graphs are random geometric graphs over the unit square with a Euclidean
//! minimum-spanning-tree backbone, so every generated graph is connected.
//! Instances come from the source/destination pairs with the longest
//! shortest-path distances (decimation), with mandatory sets drawn uniformly.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Instance, NodeId, WeightedGraph};
use crate::oracle::ShortestPathTable;

/// Target mean degree of the geometric graph before the spanning-tree
/// backbone is added.
pub const TARGET_DEGREE: f64 = 3.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub seed: u64,
    pub n: usize,
    /// Fraction of ordered pairs kept, longest shortest paths first.
    pub decimation_keep: f64,
    pub mandatory_sizes: Vec<usize>,
    /// Instances drawn per kept pair for every non-empty size. The empty
    /// mandatory set has a single instance per pair.
    pub instances_per_pair: usize,
}

impl GenConfig {
    pub fn new(seed: u64, n: usize) -> Self {
        GenConfig {
            seed,
            n,
            decimation_keep: 0.10,
            mandatory_sizes: vec![0, 1, 2, 4, 6, 8, 10],
            instances_per_pair: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::TooFewNodes(self.n));
        }
        if !(self.decimation_keep > 0.0 && self.decimation_keep <= 1.0) {
            return Err(Error::Config(format!(
                "decimation_keep must be in (0, 1], got {}",
                self.decimation_keep
            )));
        }
        if self.instances_per_pair == 0 {
            return Err(Error::Config("instances_per_pair must be positive".into()));
        }
        Ok(())
    }
}

/// Number of distinct instances on an `n`-node graph: `2^(n-2) n (n-1)`.
pub fn count_instances(n: usize) -> Result<u128> {
    if n < 2 {
        return Err(Error::TooFewNodes(n));
    }
    let pow = u32::try_from(n - 2)
        .ok()
        .and_then(|e| 1u128.checked_shl(e))
        .filter(|_| n - 2 < 128)
        .ok_or(Error::Overflow(n))?;
    pow.checked_mul(n as u128)
        .and_then(|c| c.checked_mul((n - 1) as u128))
        .ok_or(Error::Overflow(n))
}

/// Decimal form of `2^(n-2) n (n-1)` for any `n >= 2`.
pub fn count_instances_decimal(n: usize) -> Result<String> {
    if n < 2 {
        return Err(Error::TooFewNodes(n));
    }
    if let Ok(c) = count_instances(n) {
        return Ok(c.to_string());
    }
    // little-endian base 10^9 limbs
    const BASE: u64 = 1_000_000_000;
    let mut limbs: Vec<u64> = vec![1];
    let mut mul = |f: u64| {
        let mut carry = 0u64;
        for l in limbs.iter_mut() {
            let v = *l * f + carry;
            *l = v % BASE;
            carry = v / BASE;
        }
        while carry > 0 {
            limbs.push(carry % BASE);
            carry /= BASE;
        }
    };
    for _ in 0..n - 2 {
        mul(2);
    }
    mul(n as u64);
    mul(n as u64 - 1);
    let mut out = limbs.last().unwrap().to_string();
    for l in limbs.iter().rev().skip(1) {
        out.push_str(&format!("{l:09}"));
    }
    Ok(out)
}

pub(crate) fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    // splitmix64 over the seed and each part
    let mut z = seed;
    for &p in std::iter::once(&0x9E37_79B9_7F4A_7C15).chain(parts) {
        z = z.wrapping_add(p).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

fn round_weight(w: f64) -> f64 {
    ((w * 1e4).round() / 1e4).max(1e-4)
}

/// Random geometric graph: points uniform in the unit square, edges between
/// points closer than a radius chosen for a mean degree near
/// [`TARGET_DEGREE`], plus a Euclidean MST backbone. Weights are distances
/// rounded to four decimals.
pub fn generate_graph(cfg: &GenConfig) -> WeightedGraph {
    let n = cfg.n.max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[1]));
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
    let dist = |i: usize, j: usize| {
        let (dx, dy) = (pts[i].0 - pts[j].0, pts[i].1 - pts[j].1);
        (dx * dx + dy * dy).sqrt()
    };
    let radius = (TARGET_DEGREE / ((n - 1) as f64 * std::f64::consts::PI)).sqrt();

    let mut linked = vec![false; n * n];
    for i in 0..n {
        for j in i + 1..n {
            if dist(i, j) <= radius {
                linked[i * n + j] = true;
            }
        }
    }
    // Prim's algorithm on the complete Euclidean graph
    let mut in_tree = vec![false; n];
    in_tree[0] = true;
    let mut best: Vec<(f64, usize)> = (0..n).map(|j| (dist(0, j), 0)).collect();
    for _ in 1..n {
        let (next, _) = (0..n)
            .filter(|&j| !in_tree[j])
            .map(|j| (j, best[j].0))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("tree grows by one node per round");
        in_tree[next] = true;
        let parent = best[next].1;
        let (a, b) = (parent.min(next), parent.max(next));
        linked[a * n + b] = true;
        for j in 0..n {
            if !in_tree[j] && dist(next, j) < best[j].0 {
                best[j] = (dist(next, j), next);
            }
        }
    }
    let edges = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| linked[i * n + j])
        .map(|(i, j)| (i, j, round_weight(dist(i, j))))
        .collect();
    WeightedGraph::new(n, false, edges).expect("MST backbone guarantees a connected graph")
}

/// Ordered `(s, d)` pairs ranked by `dist[s][d]` descending, ties by `s`
/// then `d`, truncated to `ceil(keep * n (n-1))` pairs.
pub fn decimated_pairs(spt: &ShortestPathTable, keep: f64) -> Vec<(NodeId, NodeId)> {
    let n = spt.n();
    let mut pairs: Vec<(NodeId, NodeId)> = (0..n)
        .flat_map(|s| (0..n).filter(move |&d| d != s).map(move |d| (s, d)))
        .collect();
    pairs.sort_by(|a, b| {
        spt.dist(b.0, b.1)
            .total_cmp(&spt.dist(a.0, a.1))
            .then(a.cmp(b))
    });
    let kept = ((keep * pairs.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    pairs.truncate(kept);
    pairs
}

pub fn generate_instances(
    g: &WeightedGraph,
    spt: &ShortestPathTable,
    cfg: &GenConfig,
) -> Result<Vec<Instance>> {
    cfg.validate()?;
    let n = g.n();
    let pairs = decimated_pairs(spt, cfg.decimation_keep);
    for &size in &cfg.mandatory_sizes {
        if size > n - 2 {
            log::warn!("skipping mandatory size {size}: graph has only {} candidates", n - 2);
        }
    }
    let mut out = Vec::new();
    for (pair_idx, &(s, d)) in pairs.iter().enumerate() {
        let pool: Vec<NodeId> = (0..n).filter(|&v| v != s && v != d).collect();
        for &size in cfg.mandatory_sizes.iter().filter(|&&k| k <= n - 2) {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                cfg.seed,
                &[2, pair_idx as u64, size as u64],
            ));
            let count = if size == 0 { 1 } else { cfg.instances_per_pair };
            for _ in 0..count {
                let m = sample(&mut rng, pool.len(), size)
                    .into_iter()
                    .map(|i| pool[i])
                    .collect();
                out.push(Instance::new(n, s, d, m)?);
            }
        }
    }
    Ok(out)
}

/// Per-size counts of a generated instance set, in `sizes` order.
pub fn counts_by_size(instances: &[Instance], sizes: &[usize]) -> Vec<(usize, usize)> {
    sizes
        .iter()
        .map(|&k| (k, instances.iter().filter(|i| i.mandatory().len() == k).count()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::path3;
    use crate::oracle::dijkstra_all_pairs;

    #[test]
    fn counting_formula() {
        assert_eq!(count_instances(20).unwrap(), 99_614_720);
        assert_eq!(count_instances(2).unwrap(), 2);
        assert_eq!(count_instances(3).unwrap(), 12);
        assert!(count_instances(1).is_err());
        assert!(matches!(count_instances(200), Err(Error::Overflow(200))));
        assert_eq!(count_instances_decimal(20).unwrap(), "99614720");
        // 2^198 * 200 * 199
        assert_eq!(
            count_instances_decimal(200).unwrap(),
            "15989033540376953241642522818794567895095919788138788711248691200"
        );
    }

    #[test]
    fn counting_matches_enumeration() {
        // every (s, d, M) with s != d and M a subset of V not containing s or d
        for n in 2..=6usize {
            let mut count = 0u128;
            for s in 0..n {
                for d in 0..n {
                    for mask in 0u32..1 << n {
                        if s != d && mask & (1 << s) == 0 && mask & (1 << d) == 0 {
                            count += 1;
                        }
                    }
                }
            }
            assert_eq!(count_instances(n).unwrap(), count, "n = {n}");
        }
    }

    #[test]
    fn graph_generation_is_deterministic_and_connected() {
        let a = generate_graph(&GenConfig::new(1, 15));
        let b = generate_graph(&GenConfig::new(1, 15));
        assert_eq!(a.edges(), b.edges());
        let c = generate_graph(&GenConfig::new(1, 22));
        assert_eq!(c.n(), 22);
        assert_ne!(generate_graph(&GenConfig::new(2, 15)).edges(), a.edges());
    }

    #[test]
    fn mean_degree_in_range() {
        let mut total = 0.0;
        for seed in 0..50 {
            let g = generate_graph(&GenConfig::new(seed, 15));
            total += 2.0 * g.edges().len() as f64 / g.n() as f64;
        }
        let mean = total / 50.0;
        assert!((2.5..=5.0).contains(&mean), "mean degree {mean}");
    }

    #[test]
    fn no_decimation_on_path() {
        let g = path3();
        let spt = dijkstra_all_pairs(&g);
        let cfg = GenConfig {
            decimation_keep: 1.0,
            mandatory_sizes: vec![0],
            instances_per_pair: 1,
            ..GenConfig::new(0, 3)
        };
        let inst = generate_instances(&g, &spt, &cfg).unwrap();
        assert_eq!(inst.len(), 6);
        assert!(inst.iter().all(|i| i.mandatory().is_empty()));
        // longest first: 0->2 and 2->0 have distance 2
        assert_eq!((inst[0].start, inst[0].dest), (0, 2));
        assert_eq!((inst[1].start, inst[1].dest), (2, 0));
    }

    #[test]
    fn decimation_keeps_longest_pairs() {
        let g = generate_graph(&GenConfig::new(7, 15));
        let spt = dijkstra_all_pairs(&g);
        let kept = decimated_pairs(&spt, 0.10);
        assert_eq!(kept.len(), 21);
        let min_kept = kept
            .iter()
            .map(|&(s, d)| spt.dist(s, d))
            .fold(f64::INFINITY, f64::min);
        for s in 0..15 {
            for d in 0..15 {
                if s != d && !kept.contains(&(s, d)) {
                    assert!(spt.dist(s, d) <= min_kept);
                }
            }
        }
    }

    #[test]
    fn table_shaped_counts() {
        let g = generate_graph(&GenConfig::new(11, 15));
        let spt = dijkstra_all_pairs(&g);
        let cfg = GenConfig {
            decimation_keep: 0.2,
            mandatory_sizes: vec![0, 1, 2, 4, 6, 8],
            instances_per_pair: 6,
            ..GenConfig::new(11, 15)
        };
        let inst = generate_instances(&g, &spt, &cfg).unwrap();
        let counts = counts_by_size(&inst, &cfg.mandatory_sizes);
        assert_eq!(counts[0], (0, 42));
        for &(_, c) in &counts[1..] {
            assert_eq!(c, 252);
        }
        assert_eq!(inst.len(), counts.iter().map(|c| c.1).sum::<usize>());
        for i in &inst {
            assert!(!i.mandatory().contains(&i.start) && !i.mandatory().contains(&i.dest));
        }
        assert_eq!(inst, generate_instances(&g, &spt, &cfg).unwrap());
    }

    #[test]
    fn oversized_sizes_are_skipped() {
        let g = path3();
        let spt = dijkstra_all_pairs(&g);
        let cfg = GenConfig {
            decimation_keep: 1.0,
            mandatory_sizes: vec![1, 2],
            instances_per_pair: 1,
            ..GenConfig::new(0, 3)
        };
        let inst = generate_instances(&g, &spt, &cfg).unwrap();
        assert_eq!(inst.len(), 6);
        assert!(inst.iter().all(|i| i.mandatory().len() == 1));
    }
}
