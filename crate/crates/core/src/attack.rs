//! Restricted directed graph attack (RDGA).
//!
//! The adversary flips directed edges around a target node under a budget
//! `Δ = ⌈rate · (d⁺ + d⁻)⌉` while a mask removes (all or part of) the
//! target's out-link entries from the perturbation space — out-links are
//! the hard-to-forge direction. The attack is projected gradient descent on
//! a continuous relaxation `P ∈ [0, 1]^{n×n}`:
//!
//! 1. `T` restricted gradient steps `P ← P − η ∇ℓ(P) ⊙ M`, each followed by
//!    projection onto `{P ∈ [0,1], ΣP ≤ Δ}` (box clip, or a bisected shift
//!    when the clipped mass exceeds the budget);
//! 2. `K` Bernoulli draws `S_ij ~ Bern(P_ij)`, keeping the feasible draw
//!    with the smallest discrete attack loss; if every draw is infeasible,
//!    the `Δ` largest entries are taken deterministically.
//!
//! Transfer mode optimizes against a surrogate once per (target, budget)
//! and evaluates every victim on the chosen flips; adaptive mode optimizes
//! against each victim directly.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diff::{NodeId, RowMask, Tape};
use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, Labels, NodeFeatures};
use crate::models::{logits_with_operator, Backbone, TrainedModel};
use crate::par;
use crate::propagation::{build_shared_operator, DiffOperatorBuilder};
use crate::sparse::Csr;

pub const DEFAULT_ITERATIONS: usize = 200;
pub const DEFAULT_TRIALS: usize = 100;
pub const PROJECTION_TOL: f64 = 1e-9;
pub const PROJECTION_MAX_ITERS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMode {
    Transfer,
    Adaptive,
}

impl std::fmt::Display for AttackMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AttackMode::Transfer => write!(f, "transfer"),
            AttackMode::Adaptive => write!(f, "adaptive"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackLoss {
    /// `z_y − max_{c≠y} z_c` at the target (minimized).
    Margin,
    /// Negative cross-entropy at the target (minimized).
    NegCrossEntropy,
}

/// Per-flip category relative to the clean graph (adversary behavior
/// analysis). A flip touching the target is direct; a flip launched from
/// one of the target's clean out-neighbors is an indirect out-link attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlipCategory {
    DirectTarget,
    IndirectNeighborOutLink,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AttackConfig {
    pub target: usize,
    /// Budget as a fraction of the target's total degree.
    pub budget_rate: f64,
    /// PGD step size; `None` selects `0.1 · Δ / √T`.
    pub eta: Option<f64>,
    pub iterations: usize,
    /// Bernoulli sampling trials.
    pub trials: usize,
    /// Fraction of the target's out-link entries removed from the
    /// perturbation space (1.0 = fully restricted).
    pub masking_rate: f64,
    pub loss: AttackLoss,
    pub mode: AttackMode,
    pub seed: u64,
}

impl AttackConfig {
    pub fn new(target: usize, budget_rate: f64, mode: AttackMode, seed: u64) -> Self {
        AttackConfig {
            target,
            budget_rate,
            eta: None,
            iterations: DEFAULT_ITERATIONS,
            trials: DEFAULT_TRIALS,
            masking_rate: 1.0,
            loss: AttackLoss::Margin,
            mode,
            seed,
        }
    }

    /// `Δ = ⌈rate · (d⁺ + d⁻)⌉`.
    pub fn budget(&self, g: &DirectedGraph) -> usize {
        (self.budget_rate * g.total_degree(self.target) as f64).ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AttackLosses {
    /// Attack loss on the clean graph.
    pub clean: f64,
    /// Continuous relaxation loss after the last PGD step.
    pub continuous_final: f64,
    /// Loss of the selected discrete flips.
    pub discrete: f64,
}

/// One target's attack: selected flips with per-flip classification and the
/// loss trajectory of the PGD iterations.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AttackRun {
    pub target: usize,
    pub budget_rate: f64,
    /// Flip budget Δ.
    pub budget: usize,
    pub mode: AttackMode,
    pub masking_rate: f64,
    /// Model the loss was optimized against.
    pub attacked_model: String,
    pub flips: Vec<(usize, usize)>,
    pub categories: Vec<FlipCategory>,
    pub losses: AttackLosses,
    /// Continuous loss per PGD iteration.
    pub trajectory: Vec<f64>,
    /// Whether the attacked model misclassifies the target under the flips.
    pub success: bool,
    pub seed: u64,
}

/// Mask over the target row: with rate 1.0 every `(t, j)` candidate is
/// masked; with rate `r < 1` a uniformly seeded `⌈r · (n−1)⌉` subset is.
pub fn build_mask(
    g: &DirectedGraph,
    target: usize,
    masking_rate: f64,
    seed: u64,
) -> Result<RowMask> {
    if !(0.0..=1.0).contains(&masking_rate) {
        return Err(Error::config(format!(
            "masking_rate must be in [0, 1], got {masking_rate}"
        )));
    }
    let n = g.num_nodes();
    if target >= n {
        return Err(Error::config(format!("target {target} out of range")));
    }
    let candidates: Vec<usize> = (0..n).filter(|&j| j != target).collect();
    let k = (masking_rate * candidates.len() as f64).ceil() as usize;
    let mut masked = vec![false; n];
    if k >= candidates.len() {
        for &j in &candidates {
            masked[j] = true;
        }
    } else if k > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for idx in rand::seq::index::sample(&mut rng, candidates.len(), k) {
            masked[candidates[idx]] = true;
        }
    }
    Ok(RowMask {
        row: target,
        masked: Arc::new(masked),
    })
}

/// Project onto `{p ∈ [0, 1]^n, Σp ≤ budget}`. When the box-clipped mass
/// already fits the budget this is plain clipping; otherwise the shift `μ`
/// in `clip(p − μ, 0, 1)` is bisected until the mass meets the budget.
pub fn project_budget(p: &mut Array2<f64>, budget: f64) {
    let mut positive: Vec<f64> = Vec::new();
    for v in p.iter_mut() {
        if *v <= 0.0 {
            *v = 0.0;
        } else {
            positive.push(*v);
        }
    }
    let clipped_sum: f64 = positive.iter().map(|&v| v.min(1.0)).sum();
    if clipped_sum <= budget + PROJECTION_TOL {
        for v in p.iter_mut() {
            if *v > 1.0 {
                *v = 1.0;
            }
        }
        return;
    }
    let mass = |mu: f64| -> f64 {
        positive
            .iter()
            .map(|&v| (v - mu).clamp(0.0, 1.0))
            .sum::<f64>()
    };
    let mut lo = 0.0f64;
    let mut hi = positive.iter().cloned().fold(0.0f64, f64::max);
    for _ in 0..PROJECTION_MAX_ITERS {
        let mid = 0.5 * (lo + hi);
        let m = mass(mid);
        if (m - budget).abs() <= PROJECTION_TOL {
            lo = mid;
            break;
        }
        if m > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = lo;
    for v in p.iter_mut() {
        if *v > 0.0 {
            *v = (*v - mu).clamp(0.0, 1.0);
        }
    }
}

/// Cached per-model state for discrete loss evaluation: `X·W1` does not
/// depend on the graph.
pub struct DiscreteEvaluator<'a> {
    model: &'a TrainedModel,
    xw1: Array2<f64>,
}

impl<'a> DiscreteEvaluator<'a> {
    pub fn new(model: &'a TrainedModel, x_csr: &Csr) -> Result<Self> {
        Ok(DiscreteEvaluator {
            model,
            xw1: x_csr.matmul_dense(&model.w1)?,
        })
    }

    pub fn logits(&self, g: &DirectedGraph) -> Result<Array2<f64>> {
        let op = match self.model.config.backbone {
            Backbone::Mlp => None,
            _ => Some(build_shared_operator(g, &self.model.config.propagation)?),
        };
        logits_with_operator(self.model, op.as_ref(), &self.xw1)
    }

    pub fn loss_at(&self, g: &DirectedGraph, target: usize, label: usize, loss: AttackLoss) -> Result<f64> {
        let logits = self.logits(g)?;
        Ok(loss_from_logits(&logits, target, label, loss))
    }

    pub fn correct(&self, g: &DirectedGraph, target: usize, label: usize) -> Result<bool> {
        let logits = self.logits(g)?;
        Ok(argmax_row(&logits, target) == label)
    }
}

pub(crate) fn argmax_row(logits: &Array2<f64>, row: usize) -> usize {
    let r = logits.row(row);
    let mut best = 0usize;
    for (j, &v) in r.iter().enumerate() {
        if v > r[best] {
            best = j;
        }
    }
    best
}

pub(crate) fn loss_from_logits(
    logits: &Array2<f64>,
    target: usize,
    label: usize,
    loss: AttackLoss,
) -> f64 {
    match loss {
        AttackLoss::Margin => {
            let row = logits.row(target);
            let mut best = f64::NEG_INFINITY;
            for (j, &v) in row.iter().enumerate() {
                if j != label && v > best {
                    best = v;
                }
            }
            row[label] - best
        }
        AttackLoss::NegCrossEntropy => {
            let row = logits.row(target);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            row[label] - lse
        }
    }
}

/// Record the attack-time forward pass (frozen weights, dropout off)
/// through a differentiable operator node. `xw1` is the cached `X·W1`.
pub fn record_attack_logits(
    tape: &mut Tape,
    model: &TrainedModel,
    op_node: NodeId,
    xw1: &Array2<f64>,
) -> Result<NodeId> {
    let b1 = tape.constant(model.b1.clone());
    let b2 = tape.constant(model.b2.clone());
    match model.config.backbone {
        Backbone::Mlp => Err(Error::config("mlp has no operator path")),
        Backbone::Gcn => {
            let xw1_node = tape.constant(xw1.clone());
            let w2 = tape.constant(model.w2.clone());
            let ax = tape.matmul(op_node, xw1_node)?;
            let pre1 = tape.add_row_vec(ax, b1)?;
            let h = tape.relu(pre1);
            let hw = tape.matmul(h, w2)?;
            let ahw = tape.matmul(op_node, hw)?;
            tape.add_row_vec(ahw, b2)
        }
        Backbone::Appnp => {
            let h0_val = crate::models::head_logits(model, xw1);
            let h0 = tape.constant(h0_val);
            let alpha = model.config.appnp_alpha;
            let mut h = h0;
            for _ in 0..model.config.appnp_k {
                let ah = tape.matmul(op_node, h)?;
                let scaled = tape.scale(ah, 1.0 - alpha);
                let teleport = tape.scale(h0, alpha);
                h = tape.add(scaled, teleport)?;
            }
            Ok(h)
        }
    }
}

/// Record the attack loss on top of a logits node.
pub fn record_attack_loss(
    tape: &mut Tape,
    logits: NodeId,
    target: usize,
    label: usize,
    loss: AttackLoss,
) -> Result<NodeId> {
    match loss {
        AttackLoss::Margin => tape.margin_row(logits, target, label),
        AttackLoss::NegCrossEntropy => {
            let logp = tape.log_softmax(logits);
            let nll = tape.nll_rows(logp, Arc::new(vec![target]), Arc::new(vec![label]))?;
            Ok(tape.scale(nll, -1.0))
        }
    }
}

/// Classify one flip against the clean graph.
pub fn classify_flip(g_clean: &DirectedGraph, target: usize, flip: (usize, usize)) -> FlipCategory {
    let (i, j) = flip;
    if i == target || j == target {
        FlipCategory::DirectTarget
    } else if g_clean.has_edge(target, i) {
        FlipCategory::IndirectNeighborOutLink
    } else {
        FlipCategory::Other
    }
}

/// Category counts for a completed run; counts sum to the flip count.
pub fn classify_flips(run: &AttackRun) -> (usize, usize, usize) {
    let mut direct = 0;
    let mut indirect = 0;
    let mut other = 0;
    for c in &run.categories {
        match c {
            FlipCategory::DirectTarget => direct += 1,
            FlipCategory::IndirectNeighborOutLink => indirect += 1,
            FlipCategory::Other => other += 1,
        }
    }
    (direct, indirect, other)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic per-run seed from (master seed, target, budget).
pub fn derive_seed(master: u64, target: usize, budget_rate: f64) -> u64 {
    let budget_mills = (budget_rate * 1000.0).round() as u64;
    splitmix64(splitmix64(master ^ splitmix64(target as u64)) ^ budget_mills)
}

/// PGD attack (Algorithm: T restricted gradient steps, then K Bernoulli
/// trials). `model` is the model whose loss is optimized: the victim in
/// adaptive mode, the surrogate in transfer mode. Weights stay frozen
/// (evasion setting).
pub fn pgd_attack(
    model: &TrainedModel,
    model_name: &str,
    g: &DirectedGraph,
    x: &NodeFeatures,
    y: &Labels,
    config: &AttackConfig,
) -> Result<AttackRun> {
    let n = g.num_nodes();
    let target = config.target;
    if target >= n {
        return Err(Error::config(format!("target {target} out of range")));
    }
    let budget = config.budget(g);
    if budget == 0 {
        return Err(Error::config(
            "attack budget is zero; budget_rate times total degree must round up to at least 1",
        ));
    }
    let label = y.get(target);
    let x_csr = Csr::from_dense(x.matrix());
    let evaluator = DiscreteEvaluator::new(model, &x_csr)?;
    let clean_loss = evaluator.loss_at(g, target, label, config.loss)?;

    let mask_seed = splitmix64(config.seed ^ 0x6d61_736b);
    let mask = build_mask(g, target, config.masking_rate, mask_seed)?;

    // MLP has no gradient path from the graph: the relaxation never moves,
    // so the attack degenerates to zero flips.
    if matches!(model.config.backbone, Backbone::Mlp) {
        let success = !evaluator.correct(g, target, label)?;
        return finalize_run(
            g,
            config,
            budget,
            model_name,
            Vec::new(),
            AttackLosses {
                clean: clean_loss,
                continuous_final: clean_loss,
                discrete: clean_loss,
            },
            Vec::new(),
            success,
            &mask,
        );
    }

    let builder = DiffOperatorBuilder::new(g, model.config.propagation, Some(mask.clone()))?;
    let xw1 = x_csr.matmul_dense(&model.w1)?;

    let t_iters = config.iterations;
    let eta = config
        .eta
        .unwrap_or(0.1 * budget as f64 / (t_iters.max(1) as f64).sqrt());
    let mut p = Array2::<f64>::zeros((n, n));
    let mut trajectory = Vec::with_capacity(t_iters);
    let mut final_continuous = clean_loss;

    for iter in 0..t_iters {
        let mut tape = Tape::new();
        let p_node = tape.leaf(p.clone());
        let op_node = builder.record(&mut tape, p_node)?;
        let logits = record_attack_logits(&mut tape, model, op_node, &xw1)?;
        let loss_node = record_attack_loss(&mut tape, logits, target, label, config.loss)?;
        let loss_val = tape.value(loss_node)[[0, 0]];
        if !loss_val.is_finite() {
            return Err(Error::numerical(format!(
                "non-finite attack loss at iteration {iter} (target {target})"
            )));
        }
        trajectory.push(loss_val);
        final_continuous = loss_val;
        tape.backward(loss_node)?;
        let grad = tape
            .grad(p_node)
            .ok_or_else(|| Error::numerical("no gradient reached the perturbation"))?;
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical(format!(
                "non-finite perturbation gradient at iteration {iter} (target {target})"
            )));
        }
        p.zip_mut_with(grad, |pv, &gv| *pv -= eta * gv);
        project_budget(&mut p, budget as f64);
    }

    // Support of the relaxation, in deterministic row-major order.
    let mut support: Vec<(usize, usize, f64)> = Vec::new();
    for ((i, j), &v) in p.indexed_iter() {
        if v > 0.0 {
            debug_assert!(i != j && !(i == mask.row && mask.masked[j]));
            support.push((i, j, v));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(config.seed ^ 0x7472_6961));
    let mut draws: Vec<Vec<(usize, usize)>> = Vec::with_capacity(config.trials);
    for _ in 0..config.trials {
        let mut s = Vec::new();
        for &(i, j, v) in &support {
            if rng.random::<f64>() < v {
                s.push((i, j));
            }
        }
        draws.push(s);
    }

    // Evaluate feasible draws (deduplicated); ties break toward the
    // earliest draw, keeping selection deterministic.
    let mut unique: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut draw_to_unique: HashMap<Vec<(usize, usize)>, usize> = HashMap::new();
    for s in &draws {
        if s.len() <= budget && !draw_to_unique.contains_key(s) {
            draw_to_unique.insert(s.clone(), unique.len());
            unique.push(s.clone());
        }
    }
    let losses: Vec<Result<f64>> = par::map_slice(&unique, |flips| {
        let flipped = g.apply_flips(flips)?;
        evaluator.loss_at(&flipped, target, label, config.loss)
    });

    let mut best: Option<(f64, usize)> = None;
    for s in &draws {
        if let Some(&u) = draw_to_unique.get(s) {
            let l = match &losses[u] {
                Ok(l) => *l,
                Err(e) => return Err(Error::numerical(format!("draw evaluation failed: {e}"))),
            };
            if best.map_or(true, |(bl, _)| l < bl) {
                best = Some((l, u));
            }
        }
    }

    let flips = match best {
        Some((_, u)) => unique[u].clone(),
        None => {
            // Every draw was infeasible: take the Δ largest entries.
            let mut ranked = support.clone();
            ranked.sort_by(|a, b| {
                b.2.partial_cmp(&a.2)
                    .unwrap()
                    .then_with(|| (a.0, a.1).cmp(&(b.0, b.1)))
            });
            ranked
                .into_iter()
                .take(budget)
                .map(|(i, j, _)| (i, j))
                .collect()
        }
    };

    let flipped = g.apply_flips(&flips)?;
    let discrete = evaluator.loss_at(&flipped, target, label, config.loss)?;
    let success = !evaluator.correct(&flipped, target, label)?;
    finalize_run(
        g,
        config,
        budget,
        model_name,
        flips,
        AttackLosses {
            clean: clean_loss,
            continuous_final: final_continuous,
            discrete,
        },
        trajectory,
        success,
        &mask,
    )
}

/// Build the final record, enforcing budget and mask as hard assertions.
#[allow(clippy::too_many_arguments)]
fn finalize_run(
    g_clean: &DirectedGraph,
    config: &AttackConfig,
    budget: usize,
    model_name: &str,
    flips: Vec<(usize, usize)>,
    losses: AttackLosses,
    trajectory: Vec<f64>,
    success: bool,
    mask: &RowMask,
) -> Result<AttackRun> {
    assert!(
        flips.len() <= budget,
        "budget violation: {} flips for budget {budget}",
        flips.len()
    );
    for &(i, j) in &flips {
        assert!(
            !(i == mask.row && mask.masked[j]),
            "mask violation: flip ({i}, {j}) is masked"
        );
        assert!(i != j, "self-loop flip ({i}, {j})");
    }
    let categories = flips
        .iter()
        .map(|&f| classify_flip(g_clean, config.target, f))
        .collect();
    Ok(AttackRun {
        target: config.target,
        budget_rate: config.budget_rate,
        budget,
        mode: config.mode,
        masking_rate: config.masking_rate,
        attacked_model: model_name.to_string(),
        flips,
        categories,
        losses,
        trajectory,
        success,
        seed: config.seed,
    })
}

/// PGD parameters shared by a suite of runs.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PgdParams {
    pub iterations: usize,
    pub trials: usize,
    pub eta: Option<f64>,
    pub masking_rate: f64,
    pub loss: AttackLoss,
}

impl Default for PgdParams {
    fn default() -> Self {
        PgdParams {
            iterations: DEFAULT_ITERATIONS,
            trials: DEFAULT_TRIALS,
            eta: None,
            masking_rate: 1.0,
            loss: AttackLoss::Margin,
        }
    }
}

/// A named victim model.
#[derive(Debug, Clone)]
pub struct Victim {
    pub name: String,
    pub model: TrainedModel,
}

/// Target-level outcome for one victim.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct VictimOutcome {
    pub victim: String,
    pub target: usize,
    pub budget_rate: f64,
    pub correct: bool,
    /// Index into the suite's run list; `None` for zero-budget rows.
    pub run_index: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct SuiteResult {
    pub runs: Vec<AttackRun>,
    pub outcomes: Vec<VictimOutcome>,
}

/// One attack per (target, budget) in transfer mode (optimized against the
/// surrogate, every victim evaluated on the flips) or per (victim, target,
/// budget) in adaptive mode. Budget 0 rows evaluate the clean graph.
#[allow(clippy::too_many_arguments)]
pub fn run_attack_suite(
    g: &DirectedGraph,
    x: &NodeFeatures,
    y: &Labels,
    victims: &[Victim],
    surrogate: &TrainedModel,
    targets: &[usize],
    budgets: &[f64],
    mode: AttackMode,
    params: &PgdParams,
    master_seed: u64,
) -> Result<SuiteResult> {
    let x_csr = Csr::from_dense(x.matrix());
    let mut result = SuiteResult::default();

    // (attacked model, name, victim filter) per optimization job.
    struct Job<'a> {
        model: &'a TrainedModel,
        name: String,
        victims: Vec<usize>,
        target: usize,
        budget_rate: f64,
    }
    let mut jobs: Vec<Job> = Vec::new();
    for &target in targets {
        for &rate in budgets {
            if rate == 0.0 {
                continue;
            }
            match mode {
                AttackMode::Transfer => jobs.push(Job {
                    model: surrogate,
                    name: "surrogate".to_string(),
                    victims: (0..victims.len()).collect(),
                    target,
                    budget_rate: rate,
                }),
                AttackMode::Adaptive => {
                    for (vi, victim) in victims.iter().enumerate() {
                        jobs.push(Job {
                            model: &victim.model,
                            name: victim.name.clone(),
                            victims: vec![vi],
                            target,
                            budget_rate: rate,
                        });
                    }
                }
            }
        }
    }

    let runs: Vec<Result<AttackRun>> = par::map_slice(&jobs, |job| {
        let mut config = AttackConfig::new(
            job.target,
            job.budget_rate,
            mode,
            derive_seed(master_seed, job.target, job.budget_rate),
        );
        config.iterations = params.iterations;
        config.trials = params.trials;
        config.eta = params.eta;
        config.masking_rate = params.masking_rate;
        config.loss = params.loss;
        if config.budget(g) == 0 {
            // Isolated target: the budget definition yields zero flips.
            let evaluator = DiscreteEvaluator::new(job.model, &x_csr)?;
            let label = y.get(job.target);
            let clean = evaluator.loss_at(g, job.target, label, config.loss)?;
            let mask = build_mask(g, job.target, config.masking_rate, 0)?;
            return finalize_run(
                g,
                &config,
                0,
                &job.name,
                Vec::new(),
                AttackLosses {
                    clean,
                    continuous_final: clean,
                    discrete: clean,
                },
                Vec::new(),
                !evaluator.correct(g, job.target, label)?,
                &mask,
            );
        }
        pgd_attack(job.model, &job.name, g, x, y, &config)
    });

    // Clean correctness per victim per target (budget 0 rows).
    let clean_correct: Vec<Vec<bool>> = victims
        .iter()
        .map(|v| {
            let evaluator = DiscreteEvaluator::new(&v.model, &x_csr)?;
            targets
                .iter()
                .map(|&t| evaluator.correct(g, t, y.get(t)))
                .collect::<Result<Vec<bool>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    if budgets.contains(&0.0) {
        for (vi, victim) in victims.iter().enumerate() {
            for (ti, &target) in targets.iter().enumerate() {
                result.outcomes.push(VictimOutcome {
                    victim: victim.name.clone(),
                    target,
                    budget_rate: 0.0,
                    correct: clean_correct[vi][ti],
                    run_index: None,
                });
            }
        }
    }

    for (job, run) in jobs.iter().zip(runs) {
        let run = run?;
        let run_index = result.runs.len();
        let flipped = g.apply_flips(&run.flips)?;
        for &vi in &job.victims {
            let victim = &victims[vi];
            let evaluator = DiscreteEvaluator::new(&victim.model, &x_csr)?;
            let correct = evaluator.correct(&flipped, run.target, y.get(run.target))?;
            result.outcomes.push(VictimOutcome {
                victim: victim.name.clone(),
                target: run.target,
                budget_rate: run.budget_rate,
                correct,
                run_index: Some(run_index),
            });
        }
        result.runs.push(run);
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagation::PropagationSpec;

    #[test]
    fn mask_rate_counts() {
        let g = DirectedGraph::new(11, &[(0, 1)]).unwrap();
        // 10 candidates in row 0.
        let full = build_mask(&g, 0, 1.0, 7).unwrap();
        assert_eq!(full.masked.iter().filter(|&&b| b).count(), 10);
        let none = build_mask(&g, 0, 0.0, 7).unwrap();
        assert_eq!(none.masked.iter().filter(|&&b| b).count(), 0);
        let half = build_mask(&g, 0, 0.5, 7).unwrap();
        assert_eq!(half.masked.iter().filter(|&&b| b).count(), 5);
        let half2 = build_mask(&g, 0, 0.5, 7).unwrap();
        assert_eq!(half.masked, half2.masked);
        assert!(!half.masked[0], "diagonal is not a candidate");
    }

    #[test]
    fn projection_box_branch_untouched() {
        let mut p = Array2::from_shape_vec((2, 2), vec![0.5, -0.3, 1.7, 0.0]).unwrap();
        project_budget(&mut p, 5.0);
        assert_eq!(p[[0, 0]], 0.5);
        assert_eq!(p[[0, 1]], 0.0);
        assert_eq!(p[[1, 0]], 1.0);
        assert_eq!(p[[1, 1]], 0.0);
    }

    #[test]
    fn projection_bisection_hits_budget() {
        let mut p = Array2::from_shape_vec((1, 4), vec![0.9, 0.8, 0.7, 0.6]).unwrap();
        project_budget(&mut p, 1.5);
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.5).abs() <= 1e-8, "sum {sum}");
        for &v in p.iter() {
            assert!((0.0..=1.0).contains(&v));
        }
        // Order is preserved.
        assert!(p[[0, 0]] > p[[0, 1]] && p[[0, 1]] > p[[0, 2]] && p[[0, 2]] > p[[0, 3]]);
    }

    #[test]
    fn budget_definition_rounds_up() {
        let g = DirectedGraph::new(4, &[(0, 1), (2, 0), (3, 0)]).unwrap();
        // Node 0: d_out 1, d_in 2 -> degree 3.
        let cfg = AttackConfig::new(0, 0.25, AttackMode::Adaptive, 0);
        assert_eq!(cfg.budget(&g), 1);
        let cfg = AttackConfig::new(0, 0.5, AttackMode::Adaptive, 0);
        assert_eq!(cfg.budget(&g), 2);
        let cfg = AttackConfig::new(0, 1.0, AttackMode::Adaptive, 0);
        assert_eq!(cfg.budget(&g), 3);
    }

    #[test]
    fn classify_follows_definition() {
        let g = DirectedGraph::new(5, &[(0, 1), (1, 2), (3, 4)]).unwrap();
        let t = 0;
        assert_eq!(classify_flip(&g, t, (4, 0)), FlipCategory::DirectTarget);
        assert_eq!(classify_flip(&g, t, (0, 3)), FlipCategory::DirectTarget);
        // 1 is an out-neighbor of 0, flip launched from it.
        assert_eq!(
            classify_flip(&g, t, (1, 4)),
            FlipCategory::IndirectNeighborOutLink
        );
        assert_eq!(classify_flip(&g, t, (3, 4)), FlipCategory::Other);
        assert_eq!(classify_flip(&g, t, (2, 1)), FlipCategory::Other);
    }

    #[test]
    fn derive_seed_is_stable() {
        let a = derive_seed(42, 7, 0.5);
        let b = derive_seed(42, 7, 0.5);
        assert_eq!(a, b);
        assert_ne!(a, derive_seed(42, 8, 0.5));
        assert_ne!(a, derive_seed(42, 7, 0.25));
        assert_ne!(a, derive_seed(43, 7, 0.5));
    }

    #[test]
    fn serialized_run_schema() {
        let run = AttackRun {
            target: 3,
            budget_rate: 0.5,
            budget: 2,
            mode: AttackMode::Transfer,
            masking_rate: 1.0,
            attacked_model: "surrogate".to_string(),
            flips: vec![(1, 3), (4, 3)],
            categories: vec![FlipCategory::DirectTarget, FlipCategory::DirectTarget],
            losses: AttackLosses {
                clean: 1.0,
                continuous_final: 0.2,
                discrete: 0.1,
            },
            trajectory: vec![1.0, 0.5],
            success: true,
            seed: 9,
        };
        let json = serde_json::to_value(&run).unwrap();
        assert_eq!(json["target"], 3);
        assert_eq!(json["mode"], "transfer");
        assert_eq!(json["flips"][0][0], 1);
        assert_eq!(json["flips"][0][1], 3);
        assert!(json["losses"]["discrete"].is_number());
        assert_eq!(json["success"], true);
        let back: AttackRun = serde_json::from_value(json).unwrap();
        assert_eq!(back.flips, run.flips);
    }
}
