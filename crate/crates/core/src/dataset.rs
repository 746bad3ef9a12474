//! Supervised examples for the next-node predictor.
//!
//! A solved instance together with its optimal walk (a root pair) yields one
//! example per step of the walk: every suffix of an optimal walk is optimal
//! for the instance that starts at the suffix head and still has to visit
//! the mandatory nodes not yet seen.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{read_file, write_file, Error, Result};
use crate::graph::{parse_field, Instance, NodeId, WeightedGraph};

/// Fraction of the shuffled examples used for training.
pub const TRAIN_FRACTION: f64 = 0.8;

const HEADER: &str = "dataset v1";

/// A solved instance and its proved-optimal walk.
#[derive(Debug, Clone, PartialEq)]
pub struct RootPair {
    instance: Instance,
    walk: Vec<NodeId>,
}

impl RootPair {
    /// Checks that `walk` runs from start to destination along graph arcs
    /// and covers the mandatory set.
    pub fn new(g: &WeightedGraph, instance: Instance, walk: Vec<NodeId>) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidRootPair(format!("{instance}: {msg}")));
        if walk.len() < 2 || walk[0] != instance.start || walk[walk.len() - 1] != instance.dest {
            return bad(format!("walk {walk:?} does not run from start to destination"));
        }
        if let Some(w) = walk.windows(2).find(|w| g.arc_between(w[0], w[1]).is_none()) {
            return bad(format!("no arc {} -> {}", w[0], w[1]));
        }
        if let Some(m) = instance.mandatory().iter().find(|m| !walk.contains(m)) {
            return bad(format!("mandatory node {m} not visited"));
        }
        Ok(RootPair { instance, walk })
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn walk(&self) -> &[NodeId] {
        &self.walk
    }
}

/// Three indicators per node: `(is_start, is_dest, is_mandatory)`.
pub fn encode_instance(n: usize, inst: &Instance) -> Vec<u8> {
    let mut x = vec![0u8; 3 * n];
    x[3 * inst.start] = 1;
    x[3 * inst.dest + 1] = 1;
    for &m in inst.mandatory() {
        x[3 * m + 2] = 1;
    }
    x
}

/// One `(instance, next node)` pair per step of the walk.
///
/// A suffix that starts at the destination itself (the walk passes through
/// the destination before finishing) is not an instance and produces no
/// example; the step into the destination is still emitted.
pub fn split_root_pair(rp: &RootPair) -> Vec<(Instance, NodeId)> {
    let walk = &rp.walk;
    let dest = rp.instance.dest;
    let mut remaining: Vec<NodeId> = rp.instance.mandatory().to_vec();
    let mut out = Vec::with_capacity(walk.len() - 1);
    for i in 0..walk.len() - 1 {
        let here = walk[i];
        remaining.retain(|&m| m != here);
        if here != dest {
            out.push((Instance::normalized(here, dest, remaining.clone()), walk[i + 1]));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    /// Encoded instance, `3 n` indicator values.
    pub x: Vec<u8>,
    /// First node after the start on an optimal walk.
    pub label: NodeId,
    /// Index of the root pair this example was split from.
    pub root: usize,
}

/// Shuffled examples; the first `train_len` form the training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub fingerprint: String,
    pub n: usize,
    pub seed: u64,
    pub examples: Vec<Example>,
    pub train_len: usize,
}

pub fn build_dataset(g: &WeightedGraph, pairs: &[RootPair], seed: u64) -> Result<Dataset> {
    let n = g.n();
    let mut examples: Vec<Example> = pairs
        .iter()
        .enumerate()
        .flat_map(|(root, rp)| {
            split_root_pair(rp).into_iter().map(move |(inst, label)| Example {
                x: encode_instance(n, &inst),
                label,
                root,
            })
        })
        .collect();
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    examples.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train_len = (TRAIN_FRACTION * examples.len() as f64).round() as usize;
    if train_len == examples.len() {
        log::warn!("dataset of {} examples leaves the test split empty", examples.len());
    }
    Ok(Dataset {
        fingerprint: g.fingerprint(),
        n,
        seed,
        examples,
        train_len,
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn train(&self) -> &[Example] {
        &self.examples[..self.train_len]
    }

    pub fn test(&self) -> &[Example] {
        &self.examples[self.train_len..]
    }

    /// Alternative split that keeps all examples of a root pair on the same
    /// side, so siblings cannot leak between train and test. Returns example
    /// indices `(train, test)`.
    pub fn root_level_split(&self, seed: u64) -> (Vec<usize>, Vec<usize>) {
        let mut roots: Vec<usize> = self.examples.iter().map(|e| e.root).collect();
        roots.sort_unstable();
        roots.dedup();
        roots.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let cut = (TRAIN_FRACTION * roots.len() as f64).round() as usize;
        let mut in_train = vec![false; roots.iter().max().map_or(0, |&r| r + 1)];
        for &r in &roots[..cut] {
            in_train[r] = true;
        }
        (0..self.examples.len()).partition(|&i| in_train[self.examples[i].root])
    }

    pub fn check_graph(&self, g: &WeightedGraph) -> Result<()> {
        let found = g.fingerprint();
        if found != self.fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: self.fingerprint.clone(),
                found,
            });
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{HEADER}");
        let _ = writeln!(out, "fingerprint {}", self.fingerprint);
        let _ = writeln!(out, "nodes {}", self.n);
        let _ = writeln!(out, "examples {}", self.examples.len());
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(out, "train {}", self.train_len);
        for e in &self.examples {
            for v in &e.x {
                let _ = write!(out, "{v} ");
            }
            let _ = writeln!(out, "{} {}", e.label, e.root);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        const CTX: &str = "dataset";
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |key: &str| -> Result<(usize, String)> {
            let (no, line) = lines
                .next()
                .ok_or_else(|| Error::parse(CTX, 0, format!("missing `{key}` line")))?;
            if key == HEADER {
                if line.trim() != HEADER {
                    return Err(Error::UnsupportedVersion(line.trim().to_string()));
                }
                return Ok((no, String::new()));
            }
            match line.split_once(' ') {
                Some((k, v)) if k == key => Ok((no, v.trim().to_string())),
                _ => Err(Error::parse(CTX, no, format!("expected `{key} <value>`"))),
            }
        };
        next(HEADER)?;
        let (_, fingerprint) = next("fingerprint")?;
        let (no, v) = next("nodes")?;
        let n: usize = parse_field(CTX, no, &v)?;
        let (no, v) = next("examples")?;
        let count: usize = parse_field(CTX, no, &v)?;
        let (no, v) = next("seed")?;
        let seed: u64 = parse_field(CTX, no, &v)?;
        let (no, v) = next("train")?;
        let train_len: usize = parse_field(CTX, no, &v)?;
        if train_len > count {
            return Err(Error::parse(CTX, no, "train split larger than the dataset"));
        }

        let mut examples = Vec::with_capacity(count);
        for (i, line) in text.lines().enumerate().skip(6) {
            let no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 * n + 2 {
                return Err(Error::parse(
                    CTX,
                    no,
                    format!("expected {} fields, found {}", 3 * n + 2, fields.len()),
                ));
            }
            let x = fields[..3 * n]
                .iter()
                .map(|f| match *f {
                    "0" => Ok(0u8),
                    "1" => Ok(1u8),
                    _ => Err(Error::parse(CTX, no, format!("feature `{f}` is not 0 or 1"))),
                })
                .collect::<Result<Vec<u8>>>()?;
            let label: NodeId = parse_field(CTX, no, fields[3 * n])?;
            if label >= n {
                return Err(Error::NodeOutOfRange { node: label, n });
            }
            let root: usize = parse_field(CTX, no, fields[3 * n + 1])?;
            examples.push(Example { x, label, root });
        }
        if examples.len() != count {
            return Err(Error::parse(
                CTX,
                0,
                format!("header announces {count} examples, found {}", examples.len()),
            ));
        }
        Ok(Dataset {
            fingerprint,
            n,
            seed,
            examples,
            train_len,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_text())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&read_file(path.as_ref())?)
    }
}
