//! Weighted graphs, their matrix views, planning instances, and the text
//! formats used to store both.
//!
//! Graph file:
//!
//! ```text
//! graph <n> <directed|undirected>
//! edge <u> <v> <w>
//! ...
//! ```
//!
//! Instance file, one query per line, `-` for an empty mandatory set:
//!
//! ```text
//! instance <s> <d> <m1,m2,...>
//! ```
//!
//! Blank lines and lines starting with `#` are ignored on load.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{read_file, write_file, Error, Result};

pub type NodeId = usize;
pub type ArcId = usize;

/// A directed arc. Undirected edges are stored as two arcs of equal weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub tail: NodeId,
    pub head: NodeId,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    directed: bool,
    edges: Vec<(NodeId, NodeId, f64)>,
    arcs: Vec<Arc>,
    out_arcs: Vec<Vec<ArcId>>,
    in_arcs: Vec<Vec<ArcId>>,
    arc_index: Vec<Option<ArcId>>,
}

impl WeightedGraph {
    /// Builds and validates a graph. Rejects self-loops, duplicate edges,
    /// non-positive weights and graphs that are not (strongly) connected.
    pub fn new(n: usize, directed: bool, edges: Vec<(NodeId, NodeId, f64)>) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewNodes(n));
        }
        let mut arcs = Vec::with_capacity(if directed { edges.len() } else { 2 * edges.len() });
        let mut arc_index = vec![None; n * n];
        for &(u, v, w) in &edges {
            for node in [u, v] {
                if node >= n {
                    return Err(Error::NodeOutOfRange { node, n });
                }
            }
            if u == v {
                return Err(Error::SelfLoop(u));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::NonPositiveWeight { u, v, weight: w });
            }
            let mut push = |tail: NodeId, head: NodeId| -> Result<()> {
                if arc_index[tail * n + head].is_some() {
                    return Err(Error::DuplicateEdge(u, v));
                }
                arc_index[tail * n + head] = Some(arcs.len());
                arcs.push(Arc {
                    tail,
                    head,
                    weight: w,
                });
                Ok(())
            };
            push(u, v)?;
            if !directed {
                push(v, u)?;
            }
        }
        let mut out_arcs = vec![Vec::new(); n];
        let mut in_arcs = vec![Vec::new(); n];
        for (id, a) in arcs.iter().enumerate() {
            out_arcs[a.tail].push(id);
            in_arcs[a.head].push(id);
        }
        let g = WeightedGraph {
            n,
            directed,
            edges,
            arcs,
            out_arcs,
            in_arcs,
            arc_index,
        };
        g.check_connected()?;
        Ok(g)
    }

    fn check_connected(&self) -> Result<()> {
        let forward = self.reachable_from(0, |x| self.out_arcs[x].iter().map(|&a| self.arcs[a].head));
        if let Some(v) = forward.iter().position(|&r| !r) {
            return Err(Error::Disconnected(v));
        }
        if self.directed {
            let backward =
                self.reachable_from(0, |x| self.in_arcs[x].iter().map(|&a| self.arcs[a].tail));
            if let Some(v) = backward.iter().position(|&r| !r) {
                return Err(Error::Disconnected(v));
            }
        }
        Ok(())
    }

    fn reachable_from<F, I>(&self, root: NodeId, next: F) -> Vec<bool>
    where
        F: Fn(NodeId) -> I,
        I: Iterator<Item = NodeId>,
    {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(x) = queue.pop_front() {
            for y in next(x) {
                if !seen[y] {
                    seen[y] = true;
                    queue.push_back(y);
                }
            }
        }
        seen
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Edges exactly as supplied to the constructor.
    pub fn edges(&self) -> &[(NodeId, NodeId, f64)] {
        &self.edges
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn arc(&self, id: ArcId) -> &Arc {
        &self.arcs[id]
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    /// Outgoing arcs of `x` (ω⁺).
    pub fn out_arcs(&self, x: NodeId) -> &[ArcId] {
        &self.out_arcs[x]
    }

    /// Incoming arcs of `x` (ω⁻).
    pub fn in_arcs(&self, x: NodeId) -> &[ArcId] {
        &self.in_arcs[x]
    }

    pub fn arc_between(&self, tail: NodeId, head: NodeId) -> Option<ArcId> {
        self.arc_index[tail * self.n + head]
    }

    pub fn weight(&self, tail: NodeId, head: NodeId) -> Option<f64> {
        self.arc_between(tail, head).map(|a| self.arcs[a].weight)
    }

    pub fn out_degree(&self, x: NodeId) -> usize {
        self.out_arcs[x].len()
    }

    pub fn adjacency_matrix(&self) -> AdjacencyMatrix {
        let mut a = vec![0.0; self.n * self.n];
        for arc in &self.arcs {
            a[arc.tail * self.n + arc.head] = arc.weight;
        }
        AdjacencyMatrix { n: self.n, a }
    }

    pub fn cost_matrix(&self) -> CostMatrix {
        let mut c = vec![f64::INFINITY; self.n * self.n];
        for arc in &self.arcs {
            c[arc.tail * self.n + arc.head] = arc.weight;
        }
        CostMatrix { n: self.n, c }
    }

    /// Total weight of a node walk, or `None` if it uses a missing arc.
    pub fn walk_cost(&self, walk: &[NodeId]) -> Option<f64> {
        walk.windows(2)
            .map(|w| self.weight(w[0], w[1]))
            .sum::<Option<f64>>()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "graph {} {}\n",
            self.n,
            if self.directed { "directed" } else { "undirected" }
        );
        for &(u, v, w) in &self.edges {
            out.push_str(&format!("edge {u} {v} {w}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        const CTX: &str = "graph";
        let mut header: Option<(usize, bool)> = None;
        let mut edges = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields[0] {
                "graph" => {
                    if header.is_some() {
                        return Err(Error::parse(CTX, line_no, "duplicate header"));
                    }
                    if fields.len() != 3 {
                        return Err(Error::parse(CTX, line_no, "expected `graph <n> <kind>`"));
                    }
                    let n = parse_field(CTX, line_no, fields[1])?;
                    let directed = match fields[2] {
                        "directed" => true,
                        "undirected" => false,
                        other => {
                            return Err(Error::parse(CTX, line_no, format!("unknown kind `{other}`")))
                        }
                    };
                    header = Some((n, directed));
                }
                "edge" => {
                    if header.is_none() {
                        return Err(Error::parse(CTX, line_no, "edge before header"));
                    }
                    if fields.len() != 4 {
                        return Err(Error::parse(CTX, line_no, "expected `edge <u> <v> <w>`"));
                    }
                    let u = parse_field(CTX, line_no, fields[1])?;
                    let v = parse_field(CTX, line_no, fields[2])?;
                    let w: f64 = parse_field(CTX, line_no, fields[3])?;
                    edges.push((u, v, w));
                }
                other => {
                    return Err(Error::parse(CTX, line_no, format!("unknown record `{other}`")))
                }
            }
        }
        let (n, directed) = header.ok_or_else(|| Error::parse(CTX, 0, "missing header"))?;
        WeightedGraph::new(n, directed, edges)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&read_file(path.as_ref())?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_text())
    }

    /// Hex SHA-256 of the graph file text; ties trained models and datasets
    /// to the graph they were built from.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

pub(crate) fn parse_field<T: std::str::FromStr>(
    context: &'static str,
    line: usize,
    field: &str,
) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::parse(context, line, format!("invalid value `{field}`")))
}

/// `a[u][v]` is the arc weight, 0 where no arc exists.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    n: usize,
    a: Vec<f64>,
}

impl AdjacencyMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "adjacency must be square");
        AdjacencyMatrix {
            n,
            a: rows.concat(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, u: NodeId, v: NodeId) -> f64 {
        self.a[u * self.n + v]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.a
    }
}

/// `c[u][v]` is the arc weight, `+inf` where no arc exists.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n: usize,
    c: Vec<f64>,
}

impl CostMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, u: NodeId, v: NodeId) -> f64 {
        self.c[u * self.n + v]
    }
}

/// A planning query: shortest walk from `start` to `dest` that visits every
/// node of `mandatory` at least once, in any order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Instance {
    pub start: NodeId,
    pub dest: NodeId,
    mandatory: Vec<NodeId>,
}

impl Instance {
    /// Validates node ranges and `start != dest`. The mandatory set is
    /// sorted, deduplicated, and stripped of `start` and `dest`.
    pub fn new(n: usize, start: NodeId, dest: NodeId, mandatory: Vec<NodeId>) -> Result<Self> {
        for &node in mandatory.iter().chain([&start, &dest]) {
            if node >= n {
                return Err(Error::NodeOutOfRange { node, n });
            }
        }
        if start == dest {
            return Err(Error::StartIsDestination(start));
        }
        Ok(Self::normalized(start, dest, mandatory))
    }

    pub(crate) fn normalized(start: NodeId, dest: NodeId, mut mandatory: Vec<NodeId>) -> Self {
        mandatory.retain(|&m| m != start && m != dest);
        mandatory.sort_unstable();
        mandatory.dedup();
        Instance {
            start,
            dest,
            mandatory,
        }
    }

    pub fn mandatory(&self) -> &[NodeId] {
        &self.mandatory
    }

    pub fn is_mandatory(&self, x: NodeId) -> bool {
        self.mandatory.binary_search(&x).is_ok()
    }

    pub fn parse_line(n: usize, line: &str, line_no: usize) -> Result<Self> {
        const CTX: &str = "instance";
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "instance" {
            return Err(Error::parse(CTX, line_no, "expected `instance <s> <d> <m,...|->`"));
        }
        let s = parse_field(CTX, line_no, fields[1])?;
        let d = parse_field(CTX, line_no, fields[2])?;
        let m = if fields[3] == "-" {
            Vec::new()
        } else {
            fields[3]
                .split(',')
                .map(|f| parse_field(CTX, line_no, f))
                .collect::<Result<Vec<NodeId>>>()?
        };
        Instance::new(n, s, d, m)
    }
}

impl fmt::Display for Instance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "instance {} {} ", self.start, self.dest)?;
        if self.mandatory.is_empty() {
            write!(f, "-")
        } else {
            let parts: Vec<String> = self.mandatory.iter().map(|m| m.to_string()).collect();
            write!(f, "{}", parts.join(","))
        }
    }
}

pub fn instances_to_text(instances: &[Instance]) -> String {
    instances.iter().map(|i| format!("{i}\n")).collect()
}

pub fn instances_from_text(n: usize, text: &str) -> Result<Vec<Instance>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .map(|(i, l)| Instance::parse_line(n, l.trim(), i + 1))
        .collect()
}

pub fn load_instances(n: usize, path: impl AsRef<Path>) -> Result<Vec<Instance>> {
    instances_from_text(n, &read_file(path.as_ref())?)
}

pub fn save_instances(instances: &[Instance], path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &instances_to_text(instances))
}
