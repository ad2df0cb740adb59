//! Fully connected network `h'(i, j)` on inputs `[B_i, b_j]` (row i of B
//! followed by column j), ReLU hidden layers and a logistic output, trained by
//! plain minibatch SGD on squared loss.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, ObservationMatrix};

pub const DEFAULT_HIDDEN: [usize; 2] = [300, 100];

const STREAM_SPLIT: u64 = 0;
const STREAM_INIT: u64 = 1;
const STREAM_BATCH: u64 = 2;

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: usize,
    pub train_fraction: f64,
    pub learning_rate: f64,
    pub seed: u64,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
}

fn default_hidden() -> Vec<usize> {
    DEFAULT_HIDDEN.to_vec()
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            steps: 2000,
            train_fraction: 0.8,
            learning_rate: 1.0,
            seed: 0,
            hidden: default_hidden(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::validation("batch size must be positive"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::validation(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::validation(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::validation("hidden layer sizes must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    rows: usize,
    cols: usize,
    layer_sizes: Vec<usize>,
    /// `weights[l]` is stored input-major, `layer_sizes[l] × layer_sizes[l+1]`.
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    seed: u64,
}

struct Forward {
    /// `acts[0]` is the input batch; `acts[l+1]` the output of layer l.
    acts: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

struct Gradients {
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl MlpModel {
    /// Glorot-uniform weights `±√(6/(fan_in+fan_out))`, zero biases.
    pub fn new(rows: usize, cols: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::validation("model needs a nonempty matrix"));
        }
        let mut layer_sizes = vec![rows + cols];
        layer_sizes.extend_from_slice(hidden);
        layer_sizes.push(1);
        let mut rng = substream(seed, STREAM_INIT);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-limit..limit));
            weights.push(w.reversed_axes().as_standard_layout().into_owned());
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self {
            rows,
            cols,
            layer_sizes,
            weights,
            biases,
            seed,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    /// Shape `(m, n)` of the matrix the model consumes.
    pub fn matrix_shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Parameters in checkpoint order: per layer, weights row-major then biases.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.t().iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::dims(
                format!("{} parameters", self.num_params()),
                format!("{}", params.len()),
            ));
        }
        let mut it = params.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.view_mut()
                .reversed_axes()
                .iter_mut()
                .for_each(|x| *x = it.next().unwrap_or_default());
            b.iter_mut().for_each(|x| *x = it.next().unwrap_or_default());
        }
        Ok(())
    }

    fn forward_from(&self, start: usize, input: Array2<f64>) -> Forward {
        self.forward_impl(start, input, None)
    }

    /// `first` replaces the product `input · W_startᵀ` when given.
    fn forward_impl(&self, start: usize, input: Array2<f64>, first: Option<Array2<f64>>) -> Forward {
        let layers = self.weights.len();
        let mut acts = vec![input];
        let mut pre = Vec::with_capacity(layers - start);
        let mut first = first;
        for l in start..layers {
            let mut z = match first.take() {
                Some(z) => z,
                None => acts.last().expect("input present").dot(&self.weights[l]),
            };
            z += &self.biases[l];
            let a = if l + 1 == layers {
                z.mapv(sigmoid)
            } else {
                z.mapv(|v| v.max(0.0))
            };
            pre.push(z);
            acts.push(a);
        }
        Forward { acts, pre }
    }

    fn forward(&self, input: Array2<f64>) -> Forward {
        self.forward_from(0, input)
    }

    /// Mean squared loss of the batch and its gradient.
    fn backward(&self, fwd: &Forward, targets: &[f64]) -> (f64, Gradients) {
        self.backward_impl(fwd, targets, None)
    }

    fn backward_impl(
        &self,
        fwd: &Forward,
        targets: &[f64],
        sparse: Option<&SparseBatch>,
    ) -> (f64, Gradients) {
        let layers = self.weights.len();
        let out = fwd.acts.last().expect("output present");
        let batch = out.nrows() as f64;
        let mut loss = 0.0;
        let mut delta = Array2::zeros((out.nrows(), 1));
        for (r, &t) in targets.iter().enumerate() {
            let y = out[[r, 0]];
            loss += (y - t) * (y - t);
            delta[[r, 0]] = 2.0 * (y - t) / batch * y * (1.0 - y);
        }
        loss /= batch;
        let mut gw = vec![Array2::zeros((0, 0)); layers];
        let mut gb = vec![Array1::zeros(0); layers];
        for l in (0..layers).rev() {
            gw[l] = match sparse {
                Some(sp) if l == 0 => sp.weight_gradient(&delta),
                _ => fwd.acts[l].t().dot(&delta),
            };
            gb[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.weights[l].t());
                back.zip_mut_with(&fwd.pre[l - 1], |d, &z| {
                    if z <= 0.0 {
                        *d = 0.0
                    }
                });
                delta = back;
            }
        }
        (loss, Gradients {
            weights: gw,
            biases: gb,
        })
    }

    fn apply_update(&mut self, grads: &Gradients, lr: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            w.scaled_add(-lr, g);
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            b.scaled_add(-lr, g);
        }
    }

    fn ensure_matrix(&self, b: &DenseMatrix) -> Result<()> {
        if b.shape() != (self.rows, self.cols) {
            return Err(Error::dims(
                format!("{}x{} matrix", self.rows, self.cols),
                format!("{}x{}", b.rows(), b.cols()),
            ));
        }
        Ok(())
    }

    /// Network output in (0, 1) for a single encoded input.
    pub fn forward_single(&self, input: &[f64]) -> Result<f64> {
        if input.len() != self.input_dim() {
            return Err(Error::dims(
                format!("input of length {}", self.input_dim()),
                format!("{}", input.len()),
            ));
        }
        let x = Array2::from_shape_vec((1, input.len()), input.to_vec())
            .expect("length checked above");
        Ok(self.forward(x).acts.last().expect("output present")[[0, 0]])
    }

    /// First-layer pre-activations split as `R = B·W_rowᵀ` (m×h) and
    /// `C = Bᵀ·W_colᵀ` (n×h), so that `z₁(i, j) = R_i + C_j + b₁`.
    fn first_layer_parts(&self, b: &DenseMatrix) -> (Array2<f64>, Array2<f64>) {
        let bm = to_array(b);
        let w = &self.weights[0];
        let r = bm.dot(&w.slice(s![..self.cols, ..]));
        let c = bm.t().dot(&w.slice(s![self.cols.., ..]));
        (r, c)
    }

    /// Runs layers 2.. on first-layer pre-activations (bias not yet added).
    fn finish_from_first(&self, mut z1: Array2<f64>) -> Vec<f64> {
        z1 += &self.biases[0];
        z1.mapv_inplace(|v| v.max(0.0));
        let fwd = self.forward_from(1, z1);
        fwd.acts
            .last()
            .expect("output present")
            .column(0)
            .to_vec()
    }

    /// `h'(i, j)` for the listed cells.
    pub fn predict_cells(&self, b: &DenseMatrix, cells: &[(usize, usize)]) -> Result<Vec<f64>> {
        self.ensure_matrix(b)?;
        let (r, c) = self.first_layer_parts(b);
        let h = r.ncols();
        let mut out = Vec::with_capacity(cells.len());
        for chunk in cells.chunks(1024) {
            let mut z1 = Array2::zeros((chunk.len(), h));
            for (k, &(i, j)) in chunk.iter().enumerate() {
                let mut row = z1.row_mut(k);
                row += &r.row(i);
                row += &c.row(j);
            }
            out.extend(self.finish_from_first(z1));
        }
        Ok(out)
    }

    /// `h(i, B) = 2h'(i, ·) − 1` for every row, m × n.
    pub fn predict_all(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        self.ensure_matrix(b)?;
        let (r, c) = self.first_layer_parts(b);
        let mut values = Vec::with_capacity(self.rows * self.cols);
        for i in 0..self.rows {
            let z1 = &c + &r.row(i);
            values.extend(self.finish_from_first(z1).into_iter().map(|y| 2.0 * y - 1.0));
        }
        DenseMatrix::new(self.rows, self.cols, values)
    }
}

fn to_array(b: &DenseMatrix) -> Array2<f64> {
    Array2::from_shape_vec(b.shape(), b.as_slice().to_vec()).expect("shape matches")
}

/// Nonzero entries of an encoded batch. Zero-imputed inputs are mostly zeros
/// at low observation rates, so the first layer is far cheaper this way.
struct SparseBatch {
    entries: Vec<Vec<(usize, f64)>>,
    inputs: usize,
}

impl SparseBatch {
    /// `x · W` for input-major `w_t` (inputs × outputs).
    fn first_layer(&self, w_t: &Array2<f64>) -> Array2<f64> {
        let mut z = Array2::zeros((self.entries.len(), w_t.ncols()));
        for (s, row) in self.entries.iter().enumerate() {
            let mut out = z.row_mut(s);
            for &(k, v) in row {
                out.scaled_add(v, &w_t.row(k));
            }
        }
        z
    }

    /// `xᵀ · delta`, inputs × outputs.
    fn weight_gradient(&self, delta: &Array2<f64>) -> Array2<f64> {
        let mut g_t = Array2::zeros((self.inputs, delta.ncols()));
        for (s, row) in self.entries.iter().enumerate() {
            let d = delta.row(s);
            for &(k, v) in row {
                g_t.row_mut(k).scaled_add(v, &d);
            }
        }
        g_t
    }
}

fn nonzeros(v: ArrayView1<f64>, offset: usize) -> Vec<(usize, f64)> {
    v.iter()
        .enumerate()
        .filter(|(_, &x)| x != 0.0)
        .map(|(k, &x)| (k + offset, x))
        .collect()
}

enum EncodedBatch {
    Dense(Array2<f64>),
    Sparse(SparseBatch),
}

/// Builds inputs `[B_i, b_j]` and targets `(B_ij + 1)/2` for batches of cells.
struct BatchEncoder {
    b: Array2<f64>,
    bt: Array2<f64>,
    /// Per-row and per-column nonzeros when B is sparse enough to use them.
    sparse: Option<(Vec<Vec<(usize, f64)>>, Vec<Vec<(usize, f64)>>)>,
}

impl BatchEncoder {
    fn new(b: &DenseMatrix) -> Self {
        let b = to_array(b);
        let bt = b.t().as_standard_layout().into_owned();
        let nnz = b.iter().filter(|&&x| x != 0.0).count();
        let n = b.ncols();
        let sparse = (nnz * 4 <= b.len()).then(|| {
            let rows = b.rows().into_iter().map(|r| nonzeros(r, 0)).collect();
            let cols = bt.rows().into_iter().map(|c| nonzeros(c, n)).collect();
            (rows, cols)
        });
        Self { b, bt, sparse }
    }

    fn encode(&self, cells: &[(usize, usize)]) -> (EncodedBatch, Vec<f64>) {
        let targets = cells.iter().map(|&(i, j)| (self.b[[i, j]] + 1.0) / 2.0).collect();
        let (m, n) = self.b.dim();
        let input = match &self.sparse {
            Some((rows, cols)) => EncodedBatch::Sparse(SparseBatch {
                entries: cells
                    .iter()
                    .map(|&(i, j)| rows[i].iter().chain(&cols[j]).copied().collect())
                    .collect(),
                inputs: m + n,
            }),
            None => {
                let mut x = Array2::zeros((cells.len(), m + n));
                for (k, &(i, j)) in cells.iter().enumerate() {
                    let mut row = x.row_mut(k);
                    row.slice_mut(s![..n]).assign(&self.b.row(i));
                    row.slice_mut(s![n..]).assign(&self.bt.row(j));
                }
                EncodedBatch::Dense(x)
            }
        };
        (input, targets)
    }
}

pub fn mlp_predict_row(model: &MlpModel, b: &DenseMatrix, i: usize) -> Result<Vec<f64>> {
    model.ensure_matrix(b)?;
    b.row_checked(i)?;
    let cells: Vec<(usize, usize)> = (0..b.cols()).map(|j| (i, j)).collect();
    Ok(model
        .predict_cells(b, &cells)?
        .into_iter()
        .map(|y| 2.0 * y - 1.0)
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Minibatch loss before each update.
    pub batch_losses: Vec<f64>,
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
    /// `None` when the split leaves no validation cells.
    pub validation_loss: Option<f64>,
    pub train_cells: usize,
    pub validation_cells: usize,
}

fn cell_loss(model: &MlpModel, b: &DenseMatrix, cells: &[(usize, usize)]) -> Result<Option<f64>> {
    if cells.is_empty() {
        return Ok(None);
    }
    let preds = model.predict_cells(b, cells)?;
    let total: f64 = preds
        .iter()
        .zip(cells)
        .map(|(y, &(i, j))| {
            let t = (b[(i, j)] + 1.0) / 2.0;
            (y - t) * (y - t)
        })
        .sum();
    Ok(Some(total / cells.len() as f64))
}

/// Trains on the cells of `mask` using the values of `b` as targets.
pub fn mlp_train(
    b: &DenseMatrix,
    mask: &[bool],
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    cfg.validate()?;
    let (m, n) = b.shape();
    if mask.len() != m * n {
        return Err(Error::dims(format!("mask of {} cells", m * n), format!("{}", mask.len())));
    }
    let mut cells: Vec<(usize, usize)> = mask
        .iter()
        .enumerate()
        .filter(|(_, &seen)| seen)
        .map(|(idx, _)| (idx / n, idx % n))
        .collect();
    if cells.len() < cfg.batch_size {
        return Err(Error::InsufficientObservations {
            needed: cfg.batch_size,
            have: cells.len(),
        });
    }
    cells.shuffle(&mut substream(cfg.seed, STREAM_SPLIT));
    let n_train = ((cells.len() as f64 * cfg.train_fraction).round() as usize).clamp(1, cells.len());
    let (train, validation) = cells.split_at(n_train);

    let mut model = MlpModel::new(m, n, &cfg.hidden, cfg.seed)?;
    let initial_train_loss = cell_loss(&model, b, train)?.unwrap_or_default();

    let encoder = BatchEncoder::new(b);
    let mut rng = substream(cfg.seed, STREAM_BATCH);
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0usize;
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut batch_losses = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        batch.clear();
        while batch.len() < cfg.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(train[order[cursor]]);
            cursor += 1;
        }
        let (input, targets) = encoder.encode(&batch);
        let (loss, grads) = match &input {
            EncodedBatch::Sparse(sp) => {
                let z1 = sp.first_layer(&model.weights[0]);
                // the dense input is never read on this path
                let fwd = model.forward_impl(0, Array2::zeros((0, 0)), Some(z1));
                model.backward_impl(&fwd, &targets, Some(sp))
            }
            EncodedBatch::Dense(x) => {
                let fwd = model.forward(x.clone());
                model.backward_impl(&fwd, &targets, None)
            }
        };
        if !loss.is_finite() {
            return Err(Error::validation("training diverged to a non-finite loss"));
        }
        batch_losses.push(loss);
        model.apply_update(&grads, cfg.learning_rate);
    }

    let final_train_loss = cell_loss(&model, b, train)?.unwrap_or_default();
    let validation_loss = cell_loss(&model, b, validation)?;
    let report = TrainReport {
        batch_losses,
        initial_train_loss,
        final_train_loss,
        validation_loss,
        train_cells: train.len(),
        validation_cells: validation.len(),
    };
    Ok((model, report))
}

/// Convenience wrapper training on the observed cells of `obs`.
pub fn mlp_train_observed(
    obs: &ObservationMatrix,
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    mlp_train(obs.dense(), obs.mask(), cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientCheckReport {
    pub max_rel_error: f64,
    pub params_checked: usize,
    /// Parameters whose ±eps perturbation flips a ReLU on or off, where the
    /// central difference does not estimate the derivative.
    pub params_skipped_at_kinks: usize,
}

/// Analytic gradient of the squared loss against central differences for
/// every parameter. Relative error is `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check(
    model: &MlpModel,
    sample_input: &[f64],
    sample_target: f64,
    eps: f64,
) -> Result<GradientCheckReport> {
    if !(1e-7..=1e-4).contains(&eps) {
        return Err(Error::validation(format!("eps must lie in [1e-7, 1e-4], got {eps}")));
    }
    if sample_input.len() != model.input_dim() {
        return Err(Error::dims(
            format!("input of length {}", model.input_dim()),
            format!("{}", sample_input.len()),
        ));
    }
    // exact zeros sit on ReLU kinks for zero-weight models
    let input: Vec<f64> = sample_input
        .iter()
        .map(|&v| if v == 0.0 { 1e-3 } else { v })
        .collect();
    let x = Array2::from_shape_vec((1, input.len()), input).expect("length checked");
    let base = model.forward(x.clone());
    let (_, grads) = model.backward(&base, &[sample_target]);
    let pattern = |f: &Forward| -> Vec<bool> {
        f.pre[..f.pre.len() - 1]
            .iter()
            .flat_map(|z| z.iter().map(|&v| v > 0.0).collect::<Vec<_>>())
            .collect()
    };
    let base_pattern = pattern(&base);

    let mut probe = model.clone();
    let loss_and_pattern = |probe: &MlpModel| {
        let f = probe.forward(x.clone());
        let y = f.acts.last().expect("output present")[[0, 0]];
        ((y - sample_target) * (y - sample_target), pattern(&f))
    };
    let mut report = GradientCheckReport {
        max_rel_error: 0.0,
        params_checked: 0,
        params_skipped_at_kinks: 0,
    };
    let mut check = |probe: &mut MlpModel, analytic: f64, get: &mut dyn FnMut(&mut MlpModel) -> &mut f64| {
        let orig = *get(probe);
        *get(probe) = orig + eps;
        let (lp, pp) = loss_and_pattern(probe);
        *get(probe) = orig - eps;
        let (lm, pm) = loss_and_pattern(probe);
        *get(probe) = orig;
        if pp != base_pattern || pm != base_pattern {
            report.params_skipped_at_kinks += 1;
            return;
        }
        let numeric = (lp - lm) / (2.0 * eps);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        report.max_rel_error = report.max_rel_error.max(rel);
        report.params_checked += 1;
    };
    for l in 0..model.weights.len() {
        let (inputs, outputs) = model.weights[l].dim();
        for r in 0..outputs {
            for c in 0..inputs {
                check(&mut probe, grads.weights[l][[c, r]], &mut |p| &mut p.weights[l][[c, r]]);
            }
            check(&mut probe, grads.biases[l][r], &mut |p| &mut p.biases[l][r]);
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub layer_sizes: Vec<usize>,
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    pub num_params: usize,
    pub config: Option<TrainConfig>,
}

const CHECKPOINT_FORMAT: &str = "svtfair-mlp-v1";

/// One line of JSON header, then the parameters as little-endian f64.
pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &MlpModel,
    config: Option<&TrainConfig>,
) -> Result<()> {
    let path = path.as_ref();
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.to_string(),
        layer_sizes: model.layer_sizes.clone(),
        rows: model.rows,
        cols: model.cols,
        seed: model.seed,
        num_params: model.num_params(),
        config: config.cloned(),
    };
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    for p in model.params_flat() {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(MlpModel, CheckpointHeader)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: &str| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: message.to_string(),
    };
    let split = bytes
        .iter()
        .position(|&c| c == b'\n')
        .ok_or_else(|| bad("missing header line"))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[..split])?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(bad(&format!("unknown checkpoint format {:?}", header.format)));
    }
    let body = &bytes[split + 1..];
    if body.len() != header.num_params * 8 {
        return Err(bad("parameter block length does not match the header"));
    }
    let sizes = &header.layer_sizes;
    if sizes.len() < 2 || sizes[0] != header.rows + header.cols || sizes[sizes.len() - 1] != 1 {
        return Err(bad("layer sizes do not match the matrix shape"));
    }
    let mut model = MlpModel::new(
        header.rows,
        header.cols,
        &sizes[1..sizes.len() - 1],
        header.seed,
    )?;
    let params: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunks of 8")))
        .collect();
    model.set_params_flat(&params)?;
    Ok((model, header))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: 16,
            steps: 200,
            learning_rate: 0.5,
            seed,
            hidden: vec![12, 6],
            ..TrainConfig::default()
        }
    }

    #[test]
    fn glorot_limits_and_shapes() {
        let model = MlpModel::new(4, 6, &DEFAULT_HIDDEN, 1).unwrap();
        assert_eq!(model.layer_sizes(), &[10, 300, 100, 1]);
        let limit = (6.0f64 / 310.0).sqrt();
        assert!(model.weights[0].iter().all(|w| w.abs() <= limit));
        assert_eq!(model.num_params(), 10 * 300 + 300 + 300 * 100 + 100 + 100 + 1);
    }

    #[test]
    fn factorised_prediction_matches_direct_forward() {
        let b = DenseMatrix::from_fn(5, 7, |i, j| ((i * 7 + j) as f64).cos() * 0.9);
        let model = MlpModel::new(5, 7, &[9, 4], 3).unwrap();
        let all = model.predict_all(&b).unwrap();
        for i in 0..5 {
            for j in 0..7 {
                let mut input = b.row(i).to_vec();
                input.extend(b.column(j));
                let direct = 2.0 * model.forward_single(&input).unwrap() - 1.0;
                assert!((all[(i, j)] - direct).abs() < 1e-12);
            }
        }
        let row = mlp_predict_row(&model, &b, 2).unwrap();
        assert!(row.iter().zip(all.row(2)).all(|(x, y)| (x - y).abs() < 1e-12));
        assert!(all.as_slice().iter().all(|v| *v > -1.0 && *v < 1.0));
        assert!(model.predict_all(&DenseMatrix::zeros(5, 6)).is_err());
    }

    #[test]
    fn gradient_check_small_model() {
        let model = MlpModel::new(3, 4, &[6, 5], 8).unwrap();
        let input = [0.3, -0.2, 0.0, 0.9, 0.4, -0.7, 0.1];
        let r = gradient_check(&model, &input, 0.8, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
        assert_eq!(r.params_checked + r.params_skipped_at_kinks, model.num_params());
        assert_eq!(r, gradient_check(&model, &input, 0.8, 1e-5).unwrap());
        assert!(gradient_check(&model, &input, 0.8, 1e-3).is_err());
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let b = DenseMatrix::from_fn(10, 12, |i, j| if (i + j) % 3 == 0 { 0.6 } else { -0.4 });
        let mask: Vec<bool> = (0..120).map(|k| k % 2 == 0).collect();
        let (m1, r1) = mlp_train(&b, &mask, &tiny_config(5)).unwrap();
        let (m2, r2) = mlp_train(&b, &mask, &tiny_config(5)).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(r1, r2);
        assert!(r1.final_train_loss < r1.initial_train_loss);
        assert_eq!(r1.train_cells + r1.validation_cells, 60);
    }

    #[test]
    fn sparse_kernels_match_dense() {
        let model = MlpModel::new(6, 9, &[8, 4], 4).unwrap();
        let x = Array2::from_shape_fn((5, 15), |(r, c)| {
            if (r * 15 + c) % 7 == 0 {
                0.1 * (r + c) as f64 - 0.5
            } else {
                0.0
            }
        });
        let sp = SparseBatch {
            entries: x.rows().into_iter().map(|r| nonzeros(r, 0)).collect(),
            inputs: 15,
        };
        let dense = model.forward(x.clone());
        let sparse = model.forward_impl(0, x.clone(), Some(sp.first_layer(&model.weights[0])));
        let targets = [0.1, 0.9, 0.5, 0.3, 0.7];
        let (l1, g1) = model.backward(&dense, &targets);
        let (l2, g2) = model.backward_impl(&sparse, &targets, Some(&sp));
        assert!((l1 - l2).abs() < 1e-14);
        for (a, b) in g1.weights.iter().zip(&g2.weights) {
            assert!(a.iter().zip(b).all(|(p, q)| (p - q).abs() < 1e-14));
        }
    }

    #[test]
    fn too_few_observations() {
        let b = DenseMatrix::zeros(3, 3);
        let mask = vec![true; 9];
        assert!(matches!(
            mlp_train(&b, &mask, &tiny_config(0)),
            Err(Error::InsufficientObservations { needed: 16, have: 9 })
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let model = MlpModel::new(4, 5, &[7, 3], 2).unwrap();
        save_checkpoint(&path, &model, Some(&tiny_config(2))).unwrap();
        let (loaded, header) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, model);
        assert_eq!(header.layer_sizes, vec![9, 7, 3, 1]);
        assert_eq!(header.config, Some(tiny_config(2)));
    }
}
