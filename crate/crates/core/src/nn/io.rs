//! Text weights file.
//!
//! ```text
//! gcn v1
//! fingerprint <hex>
//! nodes <n>
//! widths 3 32 32 32
//! dropout 0.1
//! bn_decay 0.9
//! adjacency <n*n values>
//! layer <i> theta|gamma|beta|running_mean|running_var <values>
//! dense_w <values>
//! dense_b <values>
//! end
//! ```
//!
//! Values use Rust's shortest round-trip formatting, so a save/load cycle
//! reproduces every parameter bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{read_file, write_file, Error, Result};
use crate::graph::{parse_field, WeightedGraph};

use super::gcn::{GcnLayer, GcnModel, NormalizedAdjacency, INPUT_WIDTH};
use super::matrix::Matrix;

const HEADER: &str = "gcn v1";
const CTX: &str = "weights";

fn write_values(out: &mut String, key: &str, values: &[f64]) {
    out.push_str(key);
    for v in values {
        let _ = write!(out, " {v}");
    }
    out.push('\n');
}

pub fn model_to_text(m: &GcnModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "fingerprint {}", m.fingerprint);
    let _ = writeln!(out, "nodes {}", m.n());
    let widths: Vec<String> = m.widths().iter().map(usize::to_string).collect();
    let _ = writeln!(out, "widths {}", widths.join(" "));
    let _ = writeln!(out, "dropout {}", m.dropout);
    let _ = writeln!(out, "bn_decay {}", m.bn_decay);
    write_values(&mut out, "adjacency", m.adjacency.matrix().as_slice());
    for (i, l) in m.layers.iter().enumerate() {
        write_values(&mut out, &format!("layer {i} theta"), l.theta.as_slice());
        write_values(&mut out, &format!("layer {i} gamma"), &l.gamma);
        write_values(&mut out, &format!("layer {i} beta"), &l.beta);
        write_values(&mut out, &format!("layer {i} running_mean"), &l.running_mean);
        write_values(&mut out, &format!("layer {i} running_var"), &l.running_var);
    }
    write_values(&mut out, "dense_w", m.dense_w.as_slice());
    write_values(&mut out, "dense_b", &m.dense_b);
    out.push_str("end\n");
    out
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line_no: usize,
}

impl<'a> Reader<'a> {
    /// Next line, which must start with the words of `key`; returns the
    /// remaining fields.
    fn expect(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let (i, line) = self
            .lines
            .next()
            .ok_or_else(|| Error::parse(CTX, self.line_no + 1, format!("missing `{key}`")))?;
        self.line_no = i + 1;
        let mut fields = line.split_whitespace();
        for word in key.split_whitespace() {
            if fields.next() != Some(word) {
                return Err(Error::parse(CTX, self.line_no, format!("expected `{key}`")));
            }
        }
        Ok(fields.collect())
    }

    fn scalar<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        match self.expect(key)?.as_slice() {
            [v] => parse_field(CTX, self.line_no, v),
            _ => Err(Error::parse(CTX, self.line_no, format!("`{key}` takes one value"))),
        }
    }

    fn values(&mut self, key: &str, len: usize) -> Result<Vec<f64>> {
        let fields = self.expect(key)?;
        if fields.len() != len {
            return Err(Error::parse(
                CTX,
                self.line_no,
                format!("`{key}` has {} values, expected {len}", fields.len()),
            ));
        }
        let values = fields
            .iter()
            .map(|f| parse_field::<f64>(CTX, self.line_no, f))
            .collect::<Result<Vec<_>>>()?;
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::parse(CTX, self.line_no, format!("non-finite value {v}")));
        }
        Ok(values)
    }
}

pub fn model_from_text(text: &str) -> Result<GcnModel> {
    let mut r = Reader {
        lines: text.lines().enumerate(),
        line_no: 0,
    };
    match r.lines.next() {
        Some((_, l)) if l.trim() == HEADER => r.line_no = 1,
        Some((_, l)) => return Err(Error::UnsupportedVersion(l.trim().to_string())),
        None => return Err(Error::parse(CTX, 1, "empty weights file")),
    }
    let fingerprint: String = r.scalar("fingerprint")?;
    let n: usize = r.scalar("nodes")?;
    let widths = r
        .expect("widths")?
        .iter()
        .map(|f| parse_field::<usize>(CTX, r.line_no, f))
        .collect::<Result<Vec<_>>>()?;
    if widths.len() < 2 || widths[0] != INPUT_WIDTH || widths.contains(&0) {
        return Err(Error::ShapeMismatch(format!("bad layer widths {widths:?}")));
    }
    let dropout: f64 = r.scalar("dropout")?;
    let bn_decay: f64 = r.scalar("bn_decay")?;
    let adjacency = Matrix::from_vec(n, n, r.values("adjacency", n * n)?);
    let mut layers = Vec::with_capacity(widths.len() - 1);
    for (i, w) in widths.windows(2).enumerate() {
        let theta = Matrix::from_vec(w[0], w[1], r.values(&format!("layer {i} theta"), w[0] * w[1])?);
        let gamma = r.values(&format!("layer {i} gamma"), w[1])?;
        let beta = r.values(&format!("layer {i} beta"), w[1])?;
        let running_mean = r.values(&format!("layer {i} running_mean"), w[1])?;
        let running_var = r.values(&format!("layer {i} running_var"), w[1])?;
        layers.push(GcnLayer {
            theta,
            gamma,
            beta,
            running_mean,
            running_var,
        });
    }
    let last = widths[widths.len() - 1];
    let dense_w = Matrix::from_vec(n * last, n, r.values("dense_w", n * last * n)?);
    let dense_b = r.values("dense_b", n)?;
    r.expect("end")?;
    Ok(GcnModel {
        fingerprint,
        adjacency: NormalizedAdjacency::from_matrix(adjacency),
        layers,
        dense_w,
        dense_b,
        dropout,
        bn_decay,
    })
}

pub fn save_model(m: &GcnModel, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &model_to_text(m))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GcnModel> {
    model_from_text(&read_file(path.as_ref())?)
}

/// Loads a model and checks it was trained on `g`.
pub fn load_model_for(path: impl AsRef<Path>, g: &WeightedGraph) -> Result<GcnModel> {
    let m = load_model(path)?;
    m.check_graph(g)?;
    Ok(m)
}
