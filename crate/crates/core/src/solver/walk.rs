use thiserror::Error;

use crate::graph::{ArcId, Instance, NodeId, WeightedGraph};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WalkRejection {
    #[error("arc flow is unbalanced at node {0}")]
    Unbalanced(NodeId),
    #[error("plan contains a circulation disconnected from the start")]
    Subtour,
    #[error("mandatory node {0} is not on the walk")]
    MissingMandatory(NodeId),
}

/// Turns a plan (arc set) into one `start -> dest` walk that uses every
/// arc exactly once. Cycles that share a node with the main walk are
/// spliced in; anything else is rejected.
pub fn extract_walk(
    g: &WeightedGraph,
    inst: &Instance,
    plan: &[ArcId],
) -> Result<Vec<NodeId>, WalkRejection> {
    let n = g.n();
    let mut adj: Vec<Vec<ArcId>> = vec![Vec::new(); n];
    let mut balance = vec![0i64; n];
    let mut sorted = plan.to_vec();
    sorted.sort_unstable();
    for &a in &sorted {
        let arc = g.arc(a);
        adj[arc.tail].push(a);
        balance[arc.tail] += 1;
        balance[arc.head] -= 1;
    }
    for (x, &b) in balance.iter().enumerate() {
        let expected = i64::from(x == inst.start) - i64::from(x == inst.dest);
        if b != expected {
            return Err(WalkRejection::Unbalanced(x));
        }
    }

    // Hierholzer, arcs taken in id order
    let mut next = vec![0usize; n];
    let mut stack = vec![inst.start];
    let mut walk = Vec::with_capacity(sorted.len() + 1);
    while let Some(&v) = stack.last() {
        if next[v] < adj[v].len() {
            let a = adj[v][next[v]];
            next[v] += 1;
            stack.push(g.arc(a).head);
        } else {
            walk.push(stack.pop().unwrap());
        }
    }
    walk.reverse();
    if walk.len() != sorted.len() + 1 {
        return Err(WalkRejection::Subtour);
    }
    debug_assert_eq!(walk.last(), Some(&inst.dest));
    if let Some(&m) = inst.mandatory().iter().find(|m| !walk.contains(m)) {
        return Err(WalkRejection::MissingMandatory(m));
    }
    Ok(walk)
}
