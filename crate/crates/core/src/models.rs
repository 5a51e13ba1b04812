//! Model backbones, training, grid search, and checkpoints.
//!
//! All backbones are two-layer networks with 64 hidden units. GCN and APPNP
//! are parameterized by a [`PropagationSpec`]; swapping the operator is the
//! only difference between a backbone and its directed variants, which is
//! asserted structurally by [`ModelConfig::same_architecture`].
//!
//! Training is full batch at f64: an Adam-style adaptive update with
//! decoupled weight decay, early stopping on validation accuracy, and a
//! best-checkpoint restore. Everything is deterministic for a fixed seed.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diff::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::graph::{DataSplit, DirectedGraph, Labels, NodeFeatures};
use crate::par;
use crate::propagation::{build_shared_operator, PropagationSpec};
use crate::sparse::{Csr, SharedCsr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Backbone {
    Mlp,
    Gcn,
    Appnp,
}

impl std::fmt::Display for Backbone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Backbone::Mlp => write!(f, "mlp"),
            Backbone::Gcn => write!(f, "gcn"),
            Backbone::Appnp => write!(f, "appnp"),
        }
    }
}

pub const LR_GRID: [f64; 3] = [0.05, 0.01, 0.005];
pub const WEIGHT_DECAY_GRID: [f64; 3] = [5e-4, 5e-5, 5e-6];
pub const DROPOUT_GRID: [f64; 3] = [0.0, 0.5, 0.8];

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub backbone: Backbone,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub dropout: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub appnp_alpha: f64,
    pub appnp_k: usize,
    pub propagation: PropagationSpec,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(backbone: Backbone, propagation: PropagationSpec) -> Self {
        ModelConfig {
            backbone,
            hidden_dim: 64,
            num_layers: 2,
            dropout: 0.5,
            lr: 0.01,
            weight_decay: 5e-4,
            appnp_alpha: 0.1,
            appnp_k: 10,
            propagation,
            max_epochs: 1000,
            patience: 100,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers != 2 {
            return Err(Error::config("only 2-layer backbones are supported"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        if !(0.0..=1.0).contains(&self.propagation.beta) {
            return Err(Error::config(format!(
                "beta must be in [0, 1], got {}",
                self.propagation.beta
            )));
        }
        if self.lr <= 0.0 || self.hidden_dim == 0 {
            return Err(Error::config("lr and hidden_dim must be positive"));
        }
        Ok(())
    }

    /// True when the two configs differ at most in their propagation
    /// operator.
    pub fn same_architecture(&self, other: &ModelConfig) -> bool {
        let mut a = *self;
        let b = *other;
        a.propagation = b.propagation;
        a == b
    }
}

/// Trained weights plus the config that produced them.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub w1: Array2<f64>,
    pub b1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b2: Array2<f64>,
    pub val_acc: f64,
    pub epochs: usize,
}

impl TrainedModel {
    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.w2.ncols()
    }
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

fn dropout_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize, p: f64) -> Arc<Array2<f64>> {
    let keep = 1.0 - p;
    Arc::new(Array2::from_shape_fn((rows, cols), |_| {
        if rng.random::<f64>() < p {
            0.0
        } else {
            1.0 / keep
        }
    }))
}

/// Feature matrix with input dropout applied, as a fixed sparse constant.
fn dropped_features(rng: &mut ChaCha8Rng, x: &Csr, p: f64) -> SharedCsr {
    let keep = 1.0 - p;
    let mut triplets = Vec::with_capacity(x.nnz());
    for i in 0..x.nrows() {
        let (cols, vals) = x.row(i);
        for (&c, &v) in cols.iter().zip(vals) {
            if rng.random::<f64>() >= p {
                triplets.push((i, c, v / keep));
            }
        }
    }
    SharedCsr::new(Csr::from_triplets(x.nrows(), x.ncols(), triplets).expect("valid triplets"))
}

struct TapeWeights {
    w1: NodeId,
    b1: NodeId,
    w2: NodeId,
    b2: NodeId,
}

/// Record the training forward pass; `dropout_rng` drives the per-epoch
/// masks (pass `None` for inference-mode recording).
fn record_forward(
    tape: &mut Tape,
    config: &ModelConfig,
    weights: &TapeWeights,
    x: &SharedCsr,
    operator: Option<&SharedCsr>,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<NodeId> {
    let n = x.nrows();
    let hidden = config.hidden_dim;
    let p = config.dropout;
    let mut rng = dropout_rng;
    let use_dropout = p > 0.0 && rng.is_some();

    let x_in = if use_dropout {
        dropped_features(rng.as_deref_mut().unwrap(), &x.mat, p)
    } else {
        x.clone()
    };

    // Two-layer MLP head shared by every backbone.
    let mut head = |tape: &mut Tape, propagate: Option<&SharedCsr>| -> Result<NodeId> {
        let xw = tape.spmm(&x_in, weights.w1)?;
        let pre1 = match propagate {
            Some(op) => {
                let ax = tape.spmm(op, xw)?;
                tape.add_row_vec(ax, weights.b1)?
            }
            None => tape.add_row_vec(xw, weights.b1)?,
        };
        let h = tape.relu(pre1);
        let h = if use_dropout {
            let mask = dropout_mask(rng.as_deref_mut().unwrap(), n, hidden, p);
            tape.dropout(h, mask)?
        } else {
            h
        };
        let hw = tape.matmul(h, weights.w2)?;
        match propagate {
            Some(op) => {
                let ahw = tape.spmm(op, hw)?;
                tape.add_row_vec(ahw, weights.b2)
            }
            None => tape.add_row_vec(hw, weights.b2),
        }
    };

    match config.backbone {
        Backbone::Mlp => head(tape, None),
        Backbone::Gcn => {
            let op = operator.ok_or_else(|| Error::config("gcn requires an operator"))?;
            head(tape, Some(op))
        }
        Backbone::Appnp => {
            let op = operator.ok_or_else(|| Error::config("appnp requires an operator"))?;
            let h0 = head(tape, None)?;
            let mut h = h0;
            let alpha = config.appnp_alpha;
            for _ in 0..config.appnp_k {
                let ah = tape.spmm(op, h)?;
                let scaled = tape.scale(ah, 1.0 - alpha);
                let teleport = tape.scale(h0, alpha);
                h = tape.add(scaled, teleport)?;
            }
            Ok(h)
        }
    }
}

fn add_bias(m: &mut Array2<f64>, b: &Array2<f64>) {
    for mut row in m.rows_mut() {
        for (o, &v) in row.iter_mut().zip(b.row(0)) {
            *o += v;
        }
    }
}

/// The two-layer head on a precomputed `X·W1`, no propagation.
pub fn head_logits(model: &TrainedModel, xw1: &Array2<f64>) -> Array2<f64> {
    let mut pre1 = xw1.clone();
    add_bias(&mut pre1, &model.b1);
    pre1.mapv_inplace(|v| v.max(0.0));
    let mut out = crate::diff::dense_matmul(&pre1, &model.w2);
    add_bias(&mut out, &model.b2);
    out
}

/// Inference-mode logits from a precomputed `X·W1`. Discrete attack-loss
/// evaluation caches `X·W1` per model and calls this directly; it is the
/// single code path for all non-tape forward passes.
pub fn logits_with_operator(
    model: &TrainedModel,
    operator: Option<&SharedCsr>,
    xw1: &Array2<f64>,
) -> Result<Array2<f64>> {
    match model.config.backbone {
        Backbone::Mlp => Ok(head_logits(model, xw1)),
        Backbone::Gcn => {
            let op = operator.ok_or_else(|| Error::config("gcn requires an operator"))?;
            let mut pre1 = op.mat.matmul_dense(xw1)?;
            add_bias(&mut pre1, &model.b1);
            pre1.mapv_inplace(|v| v.max(0.0));
            let hw = crate::diff::dense_matmul(&pre1, &model.w2);
            let mut out = op.mat.matmul_dense(&hw)?;
            add_bias(&mut out, &model.b2);
            Ok(out)
        }
        Backbone::Appnp => {
            let op = operator.ok_or_else(|| Error::config("appnp requires an operator"))?;
            let h0 = head_logits(model, xw1);
            let alpha = model.config.appnp_alpha;
            let mut h = h0.clone();
            for _ in 0..model.config.appnp_k {
                let mut ah = op.mat.matmul_dense(&h)?;
                ah.mapv_inplace(|v| v * (1.0 - alpha));
                h = ah + &h0 * alpha;
            }
            Ok(h)
        }
    }
}

/// Record the full training loss (forward pass, log-softmax, mean NLL at
/// `rows`) with the given weight values as differentiable leaves; dropout
/// is off. Returns the loss node and the `[w1, b1, w2, b2]` leaf nodes.
pub fn record_training_loss(
    tape: &mut Tape,
    config: &ModelConfig,
    weights: [&Array2<f64>; 4],
    x: &SharedCsr,
    operator: Option<&SharedCsr>,
    rows: Arc<Vec<usize>>,
    labels: Arc<Vec<usize>>,
) -> Result<(NodeId, [NodeId; 4])> {
    let tw = TapeWeights {
        w1: tape.leaf(weights[0].clone()),
        b1: tape.leaf(weights[1].clone()),
        w2: tape.leaf(weights[2].clone()),
        b2: tape.leaf(weights[3].clone()),
    };
    let logits = record_forward(tape, config, &tw, x, operator, None)?;
    let logp = tape.log_softmax(logits);
    let loss = tape.nll_rows(logp, rows, labels)?;
    Ok((loss, [tw.w1, tw.b1, tw.w2, tw.b2]))
}

/// Inference-mode logits (dropout off), pure sparse arithmetic.
pub fn eval_logits(
    model: &TrainedModel,
    operator: Option<&SharedCsr>,
    x: &Csr,
) -> Result<Array2<f64>> {
    logits_with_operator(model, operator, &x.matmul_dense(&model.w1)?)
}

/// Fraction of `nodes` whose argmax logit matches the label, in percent.
pub fn accuracy(logits: &Array2<f64>, labels: &Labels, nodes: &[usize]) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::config("accuracy over an empty node set"));
    }
    let mut correct = 0usize;
    for &i in nodes {
        let row = logits.row(i);
        let mut best = 0usize;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        if best == labels.get(i) {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / nodes.len() as f64)
}

struct AdamState {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: usize,
}

impl AdamState {
    fn new(shapes: &[(usize, usize)]) -> Self {
        AdamState {
            m: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            v: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            t: 0,
        }
    }

    /// Adam step with decoupled weight decay (biases are not decayed).
    fn step(
        &mut self,
        params: &mut [&mut Array2<f64>],
        grads: &[&Array2<f64>],
        lr: f64,
        weight_decay: f64,
        decay_mask: &[bool],
    ) {
        const BETA1: f64 = 0.9;
        const BETA2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        for (idx, param) in params.iter_mut().enumerate() {
            let g = grads[idx];
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            ndarray::Zip::from(&mut **param)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *p -= lr * mhat / (vhat.sqrt() + EPS);
                    if decay_mask[idx] {
                        *p -= lr * weight_decay * *p;
                    }
                });
        }
    }
}

/// Full-batch training with early stopping on validation accuracy.
///
/// The best checkpoint is updated when validation accuracy strictly
/// improves, or stays equal while training loss decreases; training stops
/// after `patience` epochs without an update and the best weights are
/// restored.
pub fn train(
    g: &DirectedGraph,
    x: &NodeFeatures,
    y: &Labels,
    split: &DataSplit,
    config: &ModelConfig,
) -> Result<TrainedModel> {
    config.validate()?;
    let n = g.num_nodes();
    if x.num_nodes() != n || y.len() != n {
        return Err(Error::shape("graph/features/labels size mismatch"));
    }
    let num_classes = y.num_classes();
    let x_csr = SharedCsr::new(Csr::from_dense(x.matrix()));
    let operator = match config.backbone {
        Backbone::Mlp => None,
        _ => Some(build_shared_operator(g, &config.propagation)?),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut w1 = glorot(&mut rng, x.dim(), config.hidden_dim);
    let mut b1 = Array2::zeros((1, config.hidden_dim));
    let mut w2 = glorot(&mut rng, config.hidden_dim, num_classes);
    let mut b2 = Array2::zeros((1, num_classes));

    let shapes = [w1.dim(), b1.dim(), w2.dim(), b2.dim()];
    let mut adam = AdamState::new(&shapes);
    let decay_mask = [true, false, true, false];

    let train_rows = Arc::new(split.train.clone());
    let train_labels = Arc::new(split.train.iter().map(|&i| y.get(i)).collect::<Vec<_>>());

    let mut best: Option<(f64, f64, [Array2<f64>; 4], usize)> = None; // (val_acc, train_loss, weights, epoch)
    let mut since_best = 0usize;
    let mut epochs_run = 0usize;

    for epoch in 0..config.max_epochs {
        epochs_run = epoch + 1;
        let mut tape = Tape::new();
        let weights = TapeWeights {
            w1: tape.leaf(w1.clone()),
            b1: tape.leaf(b1.clone()),
            w2: tape.leaf(w2.clone()),
            b2: tape.leaf(b2.clone()),
        };
        let logits = record_forward(
            &mut tape,
            config,
            &weights,
            &x_csr,
            operator.as_ref(),
            Some(&mut rng),
        )?;
        let logp = tape.log_softmax(logits);
        let loss = tape.nll_rows(logp, train_rows.clone(), train_labels.clone())?;
        let train_loss = tape.value(loss)[[0, 0]];
        if !train_loss.is_finite() {
            return Err(Error::numerical(format!(
                "non-finite training loss at epoch {epoch} (backbone {}, lr {}, wd {}, dropout {})",
                config.backbone, config.lr, config.weight_decay, config.dropout
            )));
        }
        tape.backward(loss)?;
        {
            let grads = [
                tape.grad(weights.w1).cloned().unwrap_or_else(|| Array2::zeros(shapes[0])),
                tape.grad(weights.b1).cloned().unwrap_or_else(|| Array2::zeros(shapes[1])),
                tape.grad(weights.w2).cloned().unwrap_or_else(|| Array2::zeros(shapes[2])),
                tape.grad(weights.b2).cloned().unwrap_or_else(|| Array2::zeros(shapes[3])),
            ];
            adam.step(
                &mut [&mut w1, &mut b1, &mut w2, &mut b2],
                &[&grads[0], &grads[1], &grads[2], &grads[3]],
                config.lr,
                config.weight_decay,
                &decay_mask,
            );
        }

        // Validation accuracy with the updated weights, dropout off.
        let candidate = TrainedModel {
            config: *config,
            w1: w1.clone(),
            b1: b1.clone(),
            w2: w2.clone(),
            b2: b2.clone(),
            val_acc: 0.0,
            epochs: epoch + 1,
        };
        let logits = eval_logits(&candidate, operator.as_ref(), &x_csr.mat)?;
        let val_acc = accuracy(&logits, y, &split.val)?;

        let improved = match &best {
            None => true,
            Some((best_acc, best_loss, _, _)) => {
                val_acc > *best_acc || (val_acc == *best_acc && train_loss < *best_loss)
            }
        };
        if improved {
            best = Some((
                val_acc,
                train_loss,
                [w1.clone(), b1.clone(), w2.clone(), b2.clone()],
                epoch + 1,
            ));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > config.patience {
                break;
            }
        }
    }

    let (val_acc, _, [bw1, bb1, bw2, bb2], _) =
        best.ok_or_else(|| Error::numerical("training produced no checkpoint"))?;
    Ok(TrainedModel {
        config: *config,
        w1: bw1,
        b1: bb1,
        w2: bw2,
        b2: bb2,
        val_acc,
        epochs: epochs_run,
    })
}

/// Exhaustive 3x3x3 grid over learning rate, weight decay, and dropout.
/// Selection is by validation accuracy; ties break toward lower lr, then
/// higher weight decay, then lower dropout.
pub fn grid_search(
    g: &DirectedGraph,
    x: &NodeFeatures,
    y: &Labels,
    split: &DataSplit,
    base: &ModelConfig,
) -> Result<(ModelConfig, TrainedModel)> {
    let mut configs = Vec::with_capacity(27);
    for &lr in &LR_GRID {
        for &wd in &WEIGHT_DECAY_GRID {
            for &dropout in &DROPOUT_GRID {
                let mut c = *base;
                c.lr = lr;
                c.weight_decay = wd;
                c.dropout = dropout;
                configs.push(c);
            }
        }
    }
    let results = par::map_slice(&configs, |c| train(g, x, y, split, c));
    let mut best: Option<(ModelConfig, TrainedModel)> = None;
    for (c, r) in configs.iter().zip(results) {
        let model = r?;
        let replace = match &best {
            None => true,
            Some((bc, bm)) => {
                let key = (model.val_acc, -c.lr, c.weight_decay, -c.dropout);
                let best_key = (bm.val_acc, -bc.lr, bc.weight_decay, -bc.dropout);
                key > best_key
            }
        };
        if replace {
            best = Some((*c, model));
        }
    }
    best.ok_or_else(|| Error::config("empty grid"))
}

const CKPT_MAGIC: &[u8; 4] = b"DRCK";
const CKPT_VERSION: u32 = 1;

#[derive(serde::Serialize, serde::Deserialize)]
struct CheckpointHeader {
    config: ModelConfig,
    val_acc: f64,
    epochs: usize,
    shapes: Vec<(usize, usize)>,
}

/// Serialize a model: `DRCK` magic, version, JSON header, then raw little-
/// endian f64 weights. Reload is bit-exact.
pub fn save_checkpoint(path: &Path, model: &TrainedModel) -> Result<()> {
    let header = CheckpointHeader {
        config: model.config,
        val_acc: model.val_acc,
        epochs: model.epochs,
        shapes: vec![model.w1.dim(), model.b1.dim(), model.w2.dim(), model.b2.dim()],
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    w.write_all(CKPT_MAGIC)?;
    w.write_all(&CKPT_VERSION.to_le_bytes())?;
    w.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    for m in [&model.w1, &model.b1, &model.w2, &model.b2] {
        for &v in m.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    let mut r = std::io::BufReader::new(fs::File::open(path)?);
    let mut head = [0u8; 12];
    r.read_exact(&mut head)?;
    if &head[0..4] != CKPT_MAGIC {
        return Err(Error::config(format!(
            "{} is not a checkpoint file",
            path.display()
        )));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
    if version != CKPT_VERSION {
        return Err(Error::config(format!("unsupported checkpoint version {version}")));
    }
    let header_len = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)?;
    let header: CheckpointHeader = serde_json::from_slice(&header_bytes)?;
    if header.shapes.len() != 4 {
        return Err(Error::config("checkpoint must hold exactly 4 tensors"));
    }
    let mut tensors = Vec::with_capacity(4);
    for &(rows, cols) in &header.shapes {
        let mut buf = vec![0u8; rows * cols * 8];
        r.read_exact(&mut buf)?;
        let data: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(
            Array2::from_shape_vec((rows, cols), data)
                .map_err(|e| Error::shape(e.to_string()))?,
        );
    }
    let b2 = tensors.pop().unwrap();
    let w2 = tensors.pop().unwrap();
    let b1 = tensors.pop().unwrap();
    let w1 = tensors.pop().unwrap();
    Ok(TrainedModel {
        config: header.config,
        w1,
        b1,
        w2,
        b2,
        val_acc: header.val_acc,
        epochs: header.epochs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagation::OperatorKind;

    fn toy_separable() -> (DirectedGraph, NodeFeatures, Labels, DataSplit) {
        // Two well-separated clusters in feature space.
        let n = 20;
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::new();
        for i in 0..n {
            let c = i % 2;
            x[[i, c]] = 1.0 + (i as f64) * 0.01;
            y.push(c);
        }
        let g = DirectedGraph::new(n, &[(0, 2), (1, 3), (4, 6)]).unwrap();
        let split = DataSplit {
            train: (0..10).collect(),
            val: (10..14).collect(),
            test: (14..20).collect(),
            seed: 0,
        };
        (g, NodeFeatures::new(x).unwrap(), Labels::from_vec(y), split)
    }

    #[test]
    fn mlp_reaches_full_train_accuracy_on_separable_data() {
        let (g, x, y, split) = toy_separable();
        let mut cfg = ModelConfig::new(Backbone::Mlp, PropagationSpec::sym());
        cfg.dropout = 0.0;
        cfg.max_epochs = 300;
        cfg.patience = 300;
        let model = train(&g, &x, &y, &split, &cfg).unwrap();
        let logits = eval_logits(&model, None, &Csr::from_dense(x.matrix())).unwrap();
        let acc = accuracy(&logits, &y, &split.train).unwrap();
        assert_eq!(acc, 100.0);
    }

    #[test]
    fn mlp_ignores_the_operator() {
        let (g, x, y, split) = toy_separable();
        let mut cfg = ModelConfig::new(Backbone::Mlp, PropagationSpec::sym());
        cfg.max_epochs = 5;
        cfg.patience = 5;
        let model = train(&g, &x, &y, &split, &cfg).unwrap();
        let x_csr = Csr::from_dense(x.matrix());
        let op1 = build_shared_operator(&g, &PropagationSpec::rw_out()).unwrap();
        let op2 = build_shared_operator(&g, &PropagationSpec::rw_in()).unwrap();
        let a = eval_logits(&model, Some(&op1), &x_csr).unwrap();
        let b = eval_logits(&model, Some(&op2), &x_csr).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn appnp_alpha_one_equals_head_and_k_zero_equals_head() {
        let (g, x, y, split) = toy_separable();
        let x_csr = Csr::from_dense(x.matrix());
        let op = build_shared_operator(&g, &PropagationSpec::sym()).unwrap();

        let mut cfg = ModelConfig::new(Backbone::Appnp, PropagationSpec::sym());
        cfg.dropout = 0.0;
        cfg.max_epochs = 3;
        cfg.patience = 3;
        cfg.appnp_alpha = 1.0;
        let model = train(&g, &x, &y, &split, &cfg).unwrap();
        let appnp_logits = eval_logits(&model, Some(&op), &x_csr).unwrap();
        let mut as_mlp = model.clone();
        as_mlp.config.backbone = Backbone::Mlp;
        let head_logits = eval_logits(&as_mlp, None, &x_csr).unwrap();
        for (a, b) in appnp_logits.iter().zip(head_logits.iter()) {
            assert!((a - b).abs() < 1e-12);
        }

        let mut cfg0 = cfg;
        cfg0.appnp_alpha = 0.1;
        cfg0.appnp_k = 0;
        let model0 = train(&g, &x, &y, &split, &cfg0).unwrap();
        let appnp0 = eval_logits(&model0, Some(&op), &x_csr).unwrap();
        let mut as_mlp0 = model0.clone();
        as_mlp0.config.backbone = Backbone::Mlp;
        let head0 = eval_logits(&as_mlp0, None, &x_csr).unwrap();
        assert_eq!(appnp0, head0);
    }

    #[test]
    fn training_is_deterministic() {
        let (g, x, y, split) = toy_separable();
        let mut cfg = ModelConfig::new(Backbone::Gcn, PropagationSpec::sym());
        cfg.max_epochs = 20;
        cfg.patience = 20;
        cfg.seed = 42;
        let a = train(&g, &x, &y, &split, &cfg).unwrap();
        let b = train(&g, &x, &y, &split, &cfg).unwrap();
        assert_eq!(a.w1, b.w1);
        assert_eq!(a.b2, b.b2);
        assert_eq!(a.val_acc, b.val_acc);
    }

    #[test]
    fn bbrw_config_shares_backbone_architecture() {
        let gcn = ModelConfig::new(Backbone::Gcn, PropagationSpec::sym());
        let bbrw = ModelConfig::new(Backbone::Gcn, PropagationSpec::bbrw(0.7).unwrap());
        assert!(gcn.same_architecture(&bbrw));
        let mut other = bbrw;
        other.hidden_dim = 32;
        assert!(!gcn.same_architecture(&other));
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let (g, x, y, split) = toy_separable();
        let mut cfg = ModelConfig::new(Backbone::Gcn, PropagationSpec::bbrw(0.6).unwrap());
        cfg.max_epochs = 5;
        cfg.patience = 5;
        let model = train(&g, &x, &y, &split, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &model).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(model.w1, loaded.w1);
        assert_eq!(model.b1, loaded.b1);
        assert_eq!(model.w2, loaded.w2);
        assert_eq!(model.b2, loaded.b2);
        assert_eq!(model.config, loaded.config);
        assert_eq!(model.val_acc, loaded.val_acc);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = ModelConfig::new(Backbone::Gcn, PropagationSpec::sym());
        cfg.num_layers = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::new(Backbone::Gcn, PropagationSpec::sym());
        cfg.propagation.beta = 1.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn grid_enumerates_27_configs_deterministically() {
        let (g, x, y, split) = toy_separable();
        let mut base = ModelConfig::new(Backbone::Mlp, PropagationSpec::sym());
        base.max_epochs = 3;
        base.patience = 3;
        let (best_a, _) = grid_search(&g, &x, &y, &split, &base).unwrap();
        let (best_b, _) = grid_search(&g, &x, &y, &split, &base).unwrap();
        assert_eq!(best_a, best_b);
        assert!(LR_GRID.contains(&best_a.lr));
        assert!(WEIGHT_DECAY_GRID.contains(&best_a.weight_decay));
        assert!(DROPOUT_GRID.contains(&best_a.dropout));
    }

    #[test]
    fn operator_kind_is_part_of_config_identity() {
        let a = ModelConfig::new(Backbone::Gcn, PropagationSpec::sym());
        let b = ModelConfig::new(Backbone::Gcn, PropagationSpec::rw_out());
        assert_ne!(a.propagation.kind, b.propagation.kind);
        assert_eq!(a.propagation.kind, OperatorKind::SymNorm);
    }
}
