use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AdjacencyMatrix, NodeId, WeightedGraph};

use super::matrix::Matrix;

/// Numerical-stability term inside the batch-norm square root.
pub const BN_EPS: f64 = 1e-5;
/// Probabilities are clamped to this before taking logarithms.
pub const PROB_CLAMP: f64 = 1e-12;
/// Per-node input features: start, destination, mandatory indicators.
pub const INPUT_WIDTH: usize = 3;

/// `D^-1/2 (A + I) D^-1/2` where `D` holds the row sums of `A + I`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency(Matrix);

impl NormalizedAdjacency {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.rows()
    }

    pub(crate) fn from_matrix(m: Matrix) -> Self {
        NormalizedAdjacency(m)
    }
}

pub fn normalize_adjacency(a: &AdjacencyMatrix) -> NormalizedAdjacency {
    let n = a.n();
    let tilde = |i: usize, j: usize| a.get(i, j) + if i == j { 1.0 } else { 0.0 };
    let deg: Vec<f64> = (0..n).map(|i| (0..n).map(|j| tilde(i, j)).sum()).collect();
    let mut s = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] = tilde(i, j) / (deg[i] * deg[j]).sqrt();
        }
    }
    NormalizedAdjacency(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Output width of each graph-convolution layer.
    pub hidden: Vec<usize>,
    pub dropout: f64,
    /// Momentum of the batch-norm running statistics.
    pub bn_decay: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: vec![32, 32, 32],
            dropout: 0.1,
            bn_decay: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnLayer {
    pub(crate) theta: Matrix,
    pub(crate) gamma: Vec<f64>,
    pub(crate) beta: Vec<f64>,
    pub(crate) running_mean: Vec<f64>,
    pub(crate) running_var: Vec<f64>,
}

impl GcnLayer {
    fn new(theta: Matrix) -> Self {
        let width = theta.cols();
        GcnLayer {
            theta,
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
        }
    }

    pub fn width(&self) -> usize {
        self.theta.cols()
    }
}

/// Graph convolutions (each followed by batch norm and ReLU), a dropout
/// on the flattened node features, and a dense softmax head with one
/// output per node.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnModel {
    pub(crate) fingerprint: String,
    pub(crate) adjacency: NormalizedAdjacency,
    pub(crate) layers: Vec<GcnLayer>,
    pub(crate) dense_w: Matrix,
    pub(crate) dense_b: Vec<f64>,
    pub(crate) dropout: f64,
    pub(crate) bn_decay: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics and dropout.
    Train,
    /// Running statistics, no dropout.
    Infer,
}

/// Parameter gradients, in [`GcnModel::params`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &GcnModel) -> Self {
        Gradients {
            tensors: model.params().iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }
}

/// Intermediate values of a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    inputs: Vec<Matrix>,
    x_hat: Vec<Matrix>,
    outputs: Vec<Matrix>,
    inv_std: Vec<Vec<f64>>,
    batch_mean: Vec<Vec<f64>>,
    batch_var: Vec<Vec<f64>>,
    mask: Matrix,
    dense_in: Matrix,
    pub probs: Matrix,
}

struct LayerTrace {
    x_hat: Matrix,
    output: Matrix,
    inv_std: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl GcnModel {
    pub fn new(g: &WeightedGraph, cfg: &ModelConfig, seed: u64) -> Result<Self> {
        if cfg.hidden.is_empty() || cfg.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be non-empty and positive".into()));
        }
        if !(0.0..1.0).contains(&cfg.dropout) || !(0.0..1.0).contains(&cfg.bn_decay) {
            return Err(Error::Config("dropout and bn_decay must lie in [0, 1)".into()));
        }
        let n = g.n();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut glorot = |rows: usize, cols: usize| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
            Matrix::from_vec(rows, cols, data)
        };
        let mut layers = Vec::with_capacity(cfg.hidden.len());
        let mut width = INPUT_WIDTH;
        for &h in &cfg.hidden {
            layers.push(GcnLayer::new(glorot(width, h)));
            width = h;
        }
        let dense_w = glorot(n * width, n);
        Ok(GcnModel {
            fingerprint: g.fingerprint(),
            adjacency: normalize_adjacency(&g.adjacency_matrix()),
            layers,
            dense_w,
            dense_b: vec![0.0; n],
            dropout: cfg.dropout,
            bn_decay: cfg.bn_decay,
        })
    }

    /// Model with every weight at zero; it predicts the uniform
    /// distribution for every input.
    pub fn zeroed(g: &WeightedGraph, cfg: &ModelConfig) -> Result<Self> {
        let mut m = GcnModel::new(g, cfg, 0)?;
        for p in m.params_mut() {
            p.fill(0.0);
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.adjacency.n()
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn adjacency(&self) -> &NormalizedAdjacency {
        &self.adjacency
    }

    pub fn layers(&self) -> &[GcnLayer] {
        &self.layers
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn bn_decay(&self) -> f64 {
        self.bn_decay
    }

    pub fn set_bn_decay(&mut self, decay: f64) {
        self.bn_decay = decay;
    }

    /// Layer widths from the input to the last convolution.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(INPUT_WIDTH)
            .chain(self.layers.iter().map(GcnLayer::width))
            .collect()
    }

    fn last_width(&self) -> usize {
        self.layers.last().map_or(INPUT_WIDTH, GcnLayer::width)
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

    /// Trainable tensors: `theta, gamma, beta` per layer, then the dense
    /// weight and bias.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(3 * self.layers.len() + 2);
        for l in &self.layers {
            out.push(l.theta.as_slice());
            out.push(&l.gamma);
            out.push(&l.beta);
        }
        out.push(self.dense_w.as_slice());
        out.push(&self.dense_b);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(3 * self.layers.len() + 2);
        for l in &mut self.layers {
            out.push(l.theta.as_mut_slice());
            out.push(&mut l.gamma);
            out.push(&mut l.beta);
        }
        out.push(self.dense_w.as_mut_slice());
        out.push(&mut self.dense_b);
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for i in 0..self.layers.len() {
            out.push(format!("layer{i}.theta"));
            out.push(format!("layer{i}.gamma"));
            out.push(format!("layer{i}.beta"));
        }
        out.push("dense.weight".into());
        out.push("dense.bias".into());
        out
    }

    /// Stacks the encoded instances into a `(batch * n) x 3` matrix.
    fn input_matrix(&self, xs: &[&[u8]]) -> Result<Matrix> {
        let n = self.n();
        let mut data = Vec::with_capacity(xs.len() * n * INPUT_WIDTH);
        for x in xs {
            if x.len() != INPUT_WIDTH * n {
                return Err(Error::ShapeMismatch(format!(
                    "input has {} features, model expects {}",
                    x.len(),
                    INPUT_WIDTH * n
                )));
            }
            data.extend(x.iter().map(|&v| f64::from(v)));
        }
        Ok(Matrix::from_vec(xs.len() * n, INPUT_WIDTH, data))
    }

    /// Applies `S` (or `Sᵀ`) to each `n`-row block of `p`.
    fn propagate(&self, p: &Matrix, transpose: bool) -> Matrix {
        let n = self.n();
        let s = self.adjacency.matrix();
        let mut out = Matrix::zeros(p.rows(), p.cols());
        for b in 0..p.rows() / n {
            for i in 0..n {
                for k in 0..n {
                    let c = if transpose { s[(k, i)] } else { s[(i, k)] };
                    if c == 0.0 {
                        continue;
                    }
                    let src = b * n + k;
                    for j in 0..p.cols() {
                        let v = c * p[(src, j)];
                        out[(b * n + i, j)] += v;
                    }
                }
            }
        }
        out
    }

    fn layer_forward(&self, l: &GcnLayer, h: &Matrix, mode: Mode) -> LayerTrace {
        let z = self.propagate(&h.matmul(&l.theta), false);
        let m = z.rows() as f64;
        let width = l.width();
        let (mean, var) = match mode {
            Mode::Train => {
                let mean: Vec<f64> = z.column_sums().iter().map(|s| s / m).collect();
                let mut var = vec![0.0; width];
                for r in 0..z.rows() {
                    for (j, v) in var.iter_mut().enumerate() {
                        let d = z[(r, j)] - mean[j];
                        *v += d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v /= m);
                (mean, var)
            }
            Mode::Infer => (l.running_mean.clone(), l.running_var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut x_hat = z;
        let mut output = Matrix::zeros(x_hat.rows(), width);
        for r in 0..x_hat.rows() {
            for j in 0..width {
                let xh = (x_hat[(r, j)] - mean[j]) * inv_std[j];
                x_hat[(r, j)] = xh;
                output[(r, j)] = (l.gamma[j] * xh + l.beta[j]).max(0.0);
            }
        }
        LayerTrace {
            x_hat,
            output,
            inv_std,
            mean,
            var,
        }
    }

    /// Final node features, `(batch * n) x width`, before flattening.
    fn body(&self, xs: &[&[u8]], mode: Mode) -> Result<(Matrix, Vec<Matrix>, Vec<LayerTrace>)> {
        let mut h = self.input_matrix(xs)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut traces = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let t = self.layer_forward(l, &h, mode);
            inputs.push(std::mem::replace(&mut h, t.output.clone()));
            traces.push(t);
        }
        Ok((h, inputs, traces))
    }

    /// Per-node features of one instance after the last convolution
    /// (inference mode), `n x width`.
    pub fn node_features(&self, x: &[u8]) -> Result<Matrix> {
        Ok(self.body(&[x], Mode::Infer)?.0)
    }

    fn head(&self, flat: &Matrix) -> Matrix {
        let mut logits = flat.matmul(&self.dense_w);
        for r in 0..logits.rows() {
            for (z, b) in logits.row_mut(r).iter_mut().zip(&self.dense_b) {
                *z += b;
            }
        }
        softmax_rows(&logits)
    }

    /// Class probabilities in inference mode, one row per input.
    pub fn infer(&self, xs: &[&[u8]]) -> Result<Matrix> {
        let (h, _, _) = self.body(xs, Mode::Infer)?;
        let flat = Matrix::from_vec(xs.len(), self.n() * self.last_width(), h.into_vec());
        Ok(self.head(&flat))
    }

    pub fn predict(&self, x: &[u8]) -> Result<Vec<f64>> {
        Ok(self.infer(&[x])?.into_vec())
    }

    /// Width of the dropout mask expected by [`Self::forward_train`].
    pub fn mask_width(&self) -> usize {
        self.n() * self.last_width()
    }

    /// Inverted-dropout mask (`0` or `1 / (1 - p)`), one row per input.
    pub fn sample_mask<R: Rng>(&self, batch: usize, rng: &mut R) -> Matrix {
        let keep = 1.0 - self.dropout;
        let data = (0..batch * self.mask_width())
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        Matrix::from_vec(batch, self.mask_width(), data)
    }

    /// Training-mode forward pass with batch statistics. `mask` multiplies
    /// the flattened features; pass all ones to disable dropout. The model
    /// is not modified; see [`Self::update_running_stats`].
    pub fn forward_train(&self, xs: &[&[u8]], mask: &Matrix) -> Result<ForwardCache> {
        if mask.rows() != xs.len() || mask.cols() != self.mask_width() {
            return Err(Error::ShapeMismatch(format!(
                "dropout mask is {}x{}, expected {}x{}",
                mask.rows(),
                mask.cols(),
                xs.len(),
                self.mask_width()
            )));
        }
        let (h, inputs, traces) = self.body(xs, Mode::Train)?;
        let mut dense_in = Matrix::from_vec(xs.len(), self.mask_width(), h.into_vec());
        for (v, m) in dense_in.as_mut_slice().iter_mut().zip(mask.as_slice()) {
            *v *= m;
        }
        let probs = self.head(&dense_in);
        let mut cache = ForwardCache {
            batch: xs.len(),
            inputs,
            x_hat: Vec::new(),
            outputs: Vec::new(),
            inv_std: Vec::new(),
            batch_mean: Vec::new(),
            batch_var: Vec::new(),
            mask: mask.clone(),
            dense_in,
            probs,
        };
        for t in traces {
            cache.x_hat.push(t.x_hat);
            cache.outputs.push(t.output);
            cache.inv_std.push(t.inv_std);
            cache.batch_mean.push(t.mean);
            cache.batch_var.push(t.var);
        }
        Ok(cache)
    }

    /// Moves the running statistics toward the batch statistics of `cache`.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        let decay = self.bn_decay;
        for (i, l) in self.layers.iter_mut().enumerate() {
            for (r, b) in l.running_mean.iter_mut().zip(&cache.batch_mean[i]) {
                *r = decay * *r + (1.0 - decay) * b;
            }
            for (r, b) in l.running_var.iter_mut().zip(&cache.batch_var[i]) {
                *r = decay * *r + (1.0 - decay) * b;
            }
        }
    }

    /// Gradients of the mean cross-entropy of `cache.probs` against
    /// `labels`.
    pub fn backward(&self, cache: &ForwardCache, labels: &[NodeId]) -> Result<Gradients> {
        let n = self.n();
        if labels.len() != cache.batch {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for a batch of {}",
                labels.len(),
                cache.batch
            )));
        }
        if let Some(&t) = labels.iter().find(|&&t| t >= n) {
            return Err(Error::NodeOutOfRange { node: t, n });
        }
        let batch = cache.batch as f64;
        let mut dlogits = cache.probs.clone();
        for (r, &t) in labels.iter().enumerate() {
            dlogits[(r, t)] -= 1.0;
        }
        dlogits.as_mut_slice().iter_mut().for_each(|v| *v /= batch);

        let d_dense_w = cache.dense_in.t_matmul(&dlogits);
        let d_dense_b = dlogits.column_sums();
        let mut dflat = dlogits.matmul_t(&self.dense_w);
        for (v, m) in dflat.as_mut_slice().iter_mut().zip(cache.mask.as_slice()) {
            *v *= m;
        }
        let mut dh = Matrix::from_vec(cache.batch * n, self.last_width(), dflat.into_vec());

        let mut per_layer = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate().rev() {
            let x_hat = &cache.x_hat[i];
            let out = &cache.outputs[i];
            let rows = x_hat.rows();
            let width = l.width();
            let m = rows as f64;
            let mut dgamma = vec![0.0; width];
            let mut dbeta = vec![0.0; width];
            let mut dx_hat = Matrix::zeros(rows, width);
            for r in 0..rows {
                for j in 0..width {
                    let dy = if out[(r, j)] > 0.0 { dh[(r, j)] } else { 0.0 };
                    dgamma[j] += dy * x_hat[(r, j)];
                    dbeta[j] += dy;
                    dx_hat[(r, j)] = dy * l.gamma[j];
                }
            }
            let sum_dx = dx_hat.column_sums();
            let mut sum_dx_x = vec![0.0; width];
            for r in 0..rows {
                for (j, s) in sum_dx_x.iter_mut().enumerate() {
                    *s += dx_hat[(r, j)] * x_hat[(r, j)];
                }
            }
            let mut dz = dx_hat;
            for r in 0..rows {
                for j in 0..width {
                    let v = m * dz[(r, j)] - sum_dx[j] - x_hat[(r, j)] * sum_dx_x[j];
                    dz[(r, j)] = cache.inv_std[i][j] / m * v;
                }
            }
            let dp = self.propagate(&dz, true);
            let dtheta = cache.inputs[i].t_matmul(&dp);
            dh = dp.matmul_t(&l.theta);
            per_layer.push((dtheta.into_vec(), dgamma, dbeta));
        }
        per_layer.reverse();
        let mut tensors = Vec::with_capacity(3 * per_layer.len() + 2);
        for (t, g, b) in per_layer {
            tensors.push(t);
            tensors.push(g);
            tensors.push(b);
        }
        tensors.push(d_dense_w.into_vec());
        tensors.push(d_dense_b);
        Ok(Gradients { tensors })
    }
}

/// Row-wise softmax, shifted by the row maximum. Entries are floored at
/// the smallest positive double so every probability stays positive.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v = (*v / sum).max(f64::MIN_POSITIVE);
        }
        debug_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    out
}

/// Mean negative log-probability of the labels.
pub fn cross_entropy(probs: &Matrix, labels: &[NodeId]) -> f64 {
    assert_eq!(probs.rows(), labels.len(), "one label per row");
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(r, &t)| -probs[(r, t)].max(PROB_CLAMP).ln())
        .sum();
    total / labels.len() as f64
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::*;
    use crate::instance_gen::{generate_graph, GenConfig};

    fn random_inputs(n: usize, count: usize, seed: u64) -> Vec<Vec<u8>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let s = rng.gen_range(0..n);
                let mut d = rng.gen_range(0..n - 1);
                if d >= s {
                    d += 1;
                }
                let mut x = vec![0u8; 3 * n];
                x[3 * s] = 1;
                x[3 * d + 1] = 1;
                for j in 0..n {
                    if j != s && j != d && rng.gen_bool(0.3) {
                        x[3 * j + 2] = 1;
                    }
                }
                x
            })
            .collect()
    }

    fn refs(xs: &[Vec<u8>]) -> Vec<&[u8]> {
        xs.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn normalization_closed_forms() {
        let single = normalize_adjacency(&AdjacencyMatrix::from_rows(&[vec![0.0]]));
        assert_eq!(single.matrix().as_slice(), &[1.0]);
        let pair = normalize_adjacency(&AdjacencyMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]));
        assert_eq!(pair.matrix().as_slice(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn normalization_matches_matrix_products() {
        // D^-1/2 (A + I) D^-1/2 built from explicit matrix products
        let g = WeightedGraph::new(3, false, vec![(0, 1, 2.0), (1, 2, 0.5)]).unwrap();
        let a = g.adjacency_matrix();
        let mut tilde = Matrix::identity(3);
        for i in 0..3 {
            for j in 0..3 {
                tilde[(i, j)] += a.get(i, j);
            }
        }
        let mut d = Matrix::zeros(3, 3);
        for i in 0..3 {
            d[(i, i)] = 1.0 / tilde.row(i).iter().sum::<f64>().sqrt();
        }
        let expected = d.matmul(&tilde).matmul(&d);
        let s = normalize_adjacency(&a);
        for (x, y) in s.matrix().as_slice().iter().zip(expected.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn normalized_adjacency_properties() {
        let g = generate_graph(&GenConfig::new(4, 15));
        let s = normalize_adjacency(&g.adjacency_matrix());
        let m = s.matrix();
        for i in 0..15 {
            for j in 0..15 {
                assert!(m[(i, j)] >= 0.0);
                assert!((m[(i, j)] - m[(j, i)]).abs() < 1e-15);
            }
        }
        // power iteration on a non-negative symmetric matrix
        let mut v = Matrix::from_vec(15, 1, vec![1.0; 15]);
        let mut lambda = 0.0;
        for _ in 0..500 {
            let w = m.matmul(&v);
            lambda = w.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
            v = Matrix::from_vec(15, 1, w.as_slice().iter().map(|x| x / lambda).collect());
        }
        assert!(lambda <= 1.0 + 1e-9, "spectral radius {lambda}");
    }

    #[test]
    fn zero_model_is_uniform() {
        let g = seven();
        let model = GcnModel::zeroed(&g, &ModelConfig::default()).unwrap();
        for x in random_inputs(7, 5, 1) {
            for p in model.predict(&x).unwrap() {
                assert!((p - 1.0 / 7.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn softmax_is_a_distribution_and_shift_invariant() {
        let g = generate_graph(&GenConfig::new(1, 10));
        let model = GcnModel::new(&g, &ModelConfig::default(), 3).unwrap();
        for x in random_inputs(10, 100, 2) {
            let p = model.predict(&x).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|&v| v > 0.0));
        }
        let z = Matrix::from_vec(1, 4, vec![0.3, -1.2, 2.5, 0.0]);
        let shifted = Matrix::from_vec(1, 4, z.as_slice().iter().map(|v| v + 37.0).collect());
        for (a, b) in softmax_rows(&z).as_slice().iter().zip(softmax_rows(&shifted).as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        let extreme = softmax_rows(&Matrix::from_vec(1, 2, vec![0.0, 5000.0]));
        assert!(extreme.as_slice().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn loss_closed_forms() {
        let perfect = Matrix::from_vec(1, 3, vec![0.0, 1.0, 0.0]);
        assert_eq!(cross_entropy(&perfect, &[1]), 0.0);
        let uniform = Matrix::from_vec(1, 15, vec![1.0 / 15.0; 15]);
        assert!((cross_entropy(&uniform, &[4]) - 15f64.ln()).abs() < 1e-12);
        let two = Matrix::from_vec(2, 2, vec![0.25, 0.75, 0.5, 0.5]);
        let a = -(0.25f64).ln();
        let b = -(0.5f64).ln();
        assert!((cross_entropy(&two, &[0, 1]) - (a + b) / 2.0).abs() < 1e-15);
        let zero = Matrix::from_vec(1, 2, vec![0.0, 1.0]);
        assert!((cross_entropy(&zero, &[0]) + PROB_CLAMP.ln()).abs() < 1e-12);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.2, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[0.3, 0.3]), 0);
    }

    fn loss_at(model: &GcnModel, xs: &[&[u8]], mask: &Matrix, labels: &[NodeId]) -> f64 {
        cross_entropy(&model.forward_train(xs, mask).unwrap().probs, labels)
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn gradients_match_finite_differences() {
        let g = WeightedGraph::new(
            5,
            false,
            vec![(0, 1, 1.0), (1, 2, 0.5), (2, 3, 2.0), (3, 4, 1.5), (4, 0, 0.7), (1, 3, 1.2)],
        )
        .unwrap();
        let cfg = ModelConfig {
            hidden: vec![4, 4, 4],
            ..ModelConfig::default()
        };
        let mut model = GcnModel::new(&g, &cfg, 11).unwrap();
        // move batch-norm affine terms off their initial values
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for l in &mut model.layers {
            l.gamma.iter_mut().for_each(|v| *v = rng.gen_range(0.5..1.5));
            l.beta.iter_mut().for_each(|v| *v = rng.gen_range(-0.2..0.4));
        }
        model.dense_b.iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
        let xs = random_inputs(5, 4, 7);
        let xs = refs(&xs);
        let labels = [1, 3, 0, 4];
        let mask = model.sample_mask(4, &mut rng);
        let cache = model.forward_train(&xs, &mask).unwrap();
        let grads = model.backward(&cache, &labels).unwrap();

        let h = 1e-5;
        let names = model.param_names();
        for t in 0..grads.tensors.len() {
            for i in 0..grads.tensors[t].len() {
                let mut plus = model.clone();
                plus.params_mut()[t][i] += h;
                let mut minus = model.clone();
                minus.params_mut()[t][i] -= h;
                let numeric =
                    (loss_at(&plus, &xs, &mask, &labels) - loss_at(&minus, &xs, &mask, &labels)) / (2.0 * h);
                let analytic = grads.tensors[t][i];
                let scale = numeric.abs().max(analytic.abs());
                let err = if scale < 1e-7 { (numeric - analytic).abs() } else { (numeric - analytic).abs() / scale };
                assert!(err < 1e-4, "{}[{i}]: analytic {analytic}, numeric {numeric}", names[t]);
            }
        }
    }

    #[test]
    fn bias_gradient_is_mean_residual() {
        let g = seven();
        let model = GcnModel::new(&g, &ModelConfig::default(), 2).unwrap();
        let xs = random_inputs(7, 6, 3);
        let xs = refs(&xs);
        let labels = [0, 1, 2, 3, 4, 5];
        let mask = Matrix::from_vec(6, model.mask_width(), vec![1.0; 6 * model.mask_width()]);
        let cache = model.forward_train(&xs, &mask).unwrap();
        let grads = model.backward(&cache, &labels).unwrap();
        let db = grads.tensors.last().unwrap();
        for (j, &d) in db.iter().enumerate() {
            let expected: f64 = (0..6)
                .map(|r| cache.probs[(r, j)] - f64::from(u8::from(labels[r] == j)))
                .sum::<f64>()
                / 6.0;
            assert!((d - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetric_stationary_point() {
        // zero weights and uniform labels: the loss is at a stationary point
        let g = path3();
        let model = GcnModel::zeroed(&g, &ModelConfig::default()).unwrap();
        let xs = random_inputs(3, 3, 0);
        let xs = refs(&xs);
        let mask = Matrix::from_vec(3, model.mask_width(), vec![1.0; 3 * model.mask_width()]);
        let cache = model.forward_train(&xs, &mask).unwrap();
        let grads = model.backward(&cache, &[0, 1, 2]).unwrap();
        for t in &grads.tensors {
            assert!(t.iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn body_is_permutation_equivariant() {
        let g = generate_graph(&GenConfig::new(2, 8));
        let mut model = GcnModel::new(&g, &ModelConfig::default(), 4).unwrap();
        for (i, l) in model.layers.iter_mut().enumerate() {
            l.running_mean.iter_mut().for_each(|v| *v = 0.1 * i as f64);
            l.running_var.iter_mut().for_each(|v| *v = 0.5 + i as f64);
        }
        let perm = [3, 0, 7, 1, 6, 2, 5, 4];
        let s = model.adjacency.matrix().clone();
        let mut permuted = model.clone();
        let mut ps = Matrix::zeros(8, 8);
        for i in 0..8 {
            for j in 0..8 {
                ps[(perm[i], perm[j])] = s[(i, j)];
            }
        }
        permuted.adjacency = NormalizedAdjacency(ps);
        for x in random_inputs(8, 10, 9) {
            let mut px = vec![0u8; 24];
            for i in 0..8 {
                px[3 * perm[i]..3 * perm[i] + 3].copy_from_slice(&x[3 * i..3 * i + 3]);
            }
            let h = model.node_features(&x).unwrap();
            let ph = permuted.node_features(&px).unwrap();
            for i in 0..8 {
                for (a, b) in h.row(i).iter().zip(ph.row(perm[i])) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn inference_is_pure() {
        let g = seven();
        let model = GcnModel::new(&g, &ModelConfig::default(), 8).unwrap();
        let x = &random_inputs(7, 1, 4)[0];
        assert_eq!(model.predict(x).unwrap(), model.predict(x).unwrap());
        assert!(matches!(model.predict(&[0, 1]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn running_stats_follow_decay() {
        let g = seven();
        let mut model = GcnModel::new(&g, &ModelConfig::default(), 1).unwrap();
        let xs = random_inputs(7, 4, 5);
        let xs = refs(&xs);
        let mask = Matrix::from_vec(4, model.mask_width(), vec![1.0; 4 * model.mask_width()]);
        let cache = model.forward_train(&xs, &mask).unwrap();
        model.update_running_stats(&cache);
        let l = &model.layers[0];
        for j in 0..l.width() {
            assert!((l.running_mean[j] - 0.1 * cache.batch_mean[0][j]).abs() < 1e-15);
            assert!((l.running_var[j] - (0.9 + 0.1 * cache.batch_var[0][j])).abs() < 1e-15);
        }
    }
}
