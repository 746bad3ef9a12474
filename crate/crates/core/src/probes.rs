//! Branching-order providers for the solver.

use crate::dataset::encode_instance;
use crate::error::Result;
use crate::graph::{ArcId, Instance, NodeId, WeightedGraph};
use crate::nn::GcnModel;
use crate::oracle::ShortestPathTable;

/// A ranking of every node (most preferred first), optionally with a
/// preferred arc sequence whose arcs are tried before any other.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOrdering {
    pub node_pref: Vec<NodeId>,
    pub preferred_path: Option<Vec<ArcId>>,
}

impl ProbeOrdering {
    /// # Panics
    /// If `node_pref` is not a permutation of `0..len`.
    pub fn from_preference(node_pref: Vec<NodeId>) -> Self {
        assert!(is_permutation(&node_pref), "node preference must be a permutation");
        ProbeOrdering {
            node_pref,
            preferred_path: None,
        }
    }

    /// `ranks()[v]` is the position of `v` in `node_pref`.
    pub fn ranks(&self) -> Vec<usize> {
        let mut rank = vec![0; self.node_pref.len()];
        for (i, &v) in self.node_pref.iter().enumerate() {
            rank[v] = i;
        }
        rank
    }
}

pub(crate) fn is_permutation(order: &[NodeId]) -> bool {
    let mut seen = vec![false; order.len()];
    order
        .iter()
        .all(|&v| v < seen.len() && !std::mem::replace(&mut seen[v], true))
}

/// The shortest `s -> d` path first, then the remaining nodes by distance
/// from `s` (ties by id).
pub fn dijkstra_probe(g: &WeightedGraph, inst: &Instance, spt: &ShortestPathTable) -> ProbeOrdering {
    let path = spt.path(inst.start, inst.dest);
    let mut on_path = vec![false; g.n()];
    for &v in &path {
        on_path[v] = true;
    }
    let mut rest: Vec<NodeId> = (0..g.n()).filter(|&v| !on_path[v]).collect();
    rest.sort_by(|&a, &b| {
        spt.dist(inst.start, a)
            .total_cmp(&spt.dist(inst.start, b))
            .then(a.cmp(&b))
    });
    let arcs = path
        .windows(2)
        .map(|w| g.arc_between(w[0], w[1]).expect("shortest path uses graph arcs"))
        .collect();
    let mut node_pref = path;
    node_pref.extend(rest);
    ProbeOrdering {
        node_pref,
        preferred_path: Some(arcs),
    }
}

/// Nodes sorted by descending score, ties toward the lower id.
pub fn ordering_from_scores(scores: &[f64]) -> ProbeOrdering {
    let mut node_pref: Vec<NodeId> = (0..scores.len()).collect();
    node_pref.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    ProbeOrdering::from_preference(node_pref)
}

/// Nodes ranked by the network's next-node probabilities for `inst`,
/// from a single inference-mode forward pass.
pub fn neural_probe(model: &GcnModel, g: &WeightedGraph, inst: &Instance) -> Result<ProbeOrdering> {
    model.check_graph(g)?;
    let probs = model.predict(&encode_instance(g.n(), inst))?;
    Ok(ordering_from_scores(&probs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::*;
    use crate::instance_gen::{generate_graph, GenConfig};
    use crate::oracle::dijkstra_all_pairs;

    #[test]
    fn path_graph() {
        let g = path3();
        let spt = dijkstra_all_pairs(&g);
        let inst = Instance::new(3, 0, 2, vec![]).unwrap();
        let p = dijkstra_probe(&g, &inst, &spt);
        assert_eq!(p.node_pref, vec![0, 1, 2]);
        assert_eq!(p.preferred_path.unwrap().len(), 2);
    }

    #[test]
    fn triangle_tie_break() {
        let g = WeightedGraph::new(3, false, vec![(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)]).unwrap();
        let spt = dijkstra_all_pairs(&g);
        let inst = Instance::new(3, 0, 1, vec![]).unwrap();
        assert_eq!(dijkstra_probe(&g, &inst, &spt).node_pref, vec![0, 1, 2]);
    }

    #[test]
    fn permutation_headed_by_start() {
        let g = generate_graph(&GenConfig::new(3, 15));
        let spt = dijkstra_all_pairs(&g);
        for i in 0..100 {
            let s = i % 15;
            let d = (i * 7 + 3) % 15;
            if s == d {
                continue;
            }
            let inst = Instance::new(15, s, d, vec![]).unwrap();
            let p = dijkstra_probe(&g, &inst, &spt);
            assert!(is_permutation(&p.node_pref));
            assert_eq!(p.node_pref[0], s);
            let ranks = p.ranks();
            for (i, &v) in p.node_pref.iter().enumerate() {
                assert_eq!(ranks[v], i);
            }
        }
    }

    #[test]
    fn uniform_scores_give_identity() {
        let p = ordering_from_scores(&[0.25; 4]);
        assert_eq!(p.node_pref, vec![0, 1, 2, 3]);
        let p = ordering_from_scores(&[0.1, 0.4, 0.1, 0.4]);
        assert_eq!(p.node_pref, vec![1, 3, 0, 2]);
    }

    #[test]
    fn neural_probe_contracts() {
        use crate::error::Error;
        use crate::nn::ModelConfig;
        let g = seven();
        let inst = Instance::new(7, 3, 1, vec![0, 6]).unwrap();
        let uniform = GcnModel::zeroed(&g, &ModelConfig::default()).unwrap();
        assert_eq!(neural_probe(&uniform, &g, &inst).unwrap().node_pref, (0..7).collect::<Vec<_>>());
        let model = GcnModel::new(&g, &ModelConfig::default(), 1).unwrap();
        let a = neural_probe(&model, &g, &inst).unwrap();
        assert_eq!(a, neural_probe(&model, &g, &inst).unwrap());
        assert!(is_permutation(&a.node_pref));
        let other = generate_graph(&GenConfig::new(1, 7));
        assert!(matches!(
            neural_probe(&model, &other, &inst),
            Err(Error::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn permutation_check() {
        assert!(is_permutation(&[2, 0, 1]));
        assert!(!is_permutation(&[0, 0, 1]));
        assert!(!is_permutation(&[0, 3, 1]));
    }
}
