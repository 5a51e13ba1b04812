//! Experiment orchestration: splits, target sampling, attack suites,
//! aggregation into result tables, and the beta / masking-rate ablations.
//!
//! Robust "target accuracy" follows the evaluation protocol: per split, a
//! fixed set of target nodes is sampled from the test set, each target is
//! attacked under its own budget and evaluated on its own perturbed graph,
//! and the per-split percentage is aggregated as mean ± sample std across
//! splits. Cells sourced from the paper's tables are labeled `paper` and
//! never mixed with computed cells.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attack::{
    run_attack_suite, AttackMode, AttackRun, FlipCategory, PgdParams, Victim, VictimOutcome,
};
use crate::error::{Error, Result};
use crate::graph::{DataSplit, DirectedGraph, Labels, NodeFeatures};
use crate::models::{
    accuracy, eval_logits, grid_search, train, Backbone, ModelConfig, TrainedModel,
};
use crate::par;
use crate::propagation::{build_shared_operator, OperatorKind, PropagationSpec};
use crate::sparse::Csr;

/// A dataset bundle.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub graph: DirectedGraph,
    pub features: NodeFeatures,
    pub labels: Labels,
}

/// A named (backbone, propagation) pair.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VictimSpec {
    pub name: String,
    pub backbone: Backbone,
    pub propagation: PropagationSpec,
}

impl VictimSpec {
    /// Parse a model name such as `gcn`, `bbrw-gcn`, `gcn-rwout`,
    /// `appnp-rwin`, `mlp`. `beta` applies to the bbrw variants.
    pub fn named(name: &str, beta: f64) -> Result<Self> {
        let (backbone, prop) = match name {
            "mlp" => (Backbone::Mlp, PropagationSpec::sym()),
            "gcn" => (Backbone::Gcn, PropagationSpec::sym()),
            "appnp" => (Backbone::Appnp, PropagationSpec::sym()),
            "gcn-rwout" => (Backbone::Gcn, PropagationSpec::rw_out()),
            "gcn-rwin" => (Backbone::Gcn, PropagationSpec::rw_in()),
            "appnp-rwout" => (Backbone::Appnp, PropagationSpec::rw_out()),
            "appnp-rwin" => (Backbone::Appnp, PropagationSpec::rw_in()),
            "bbrw-gcn" => (Backbone::Gcn, PropagationSpec::bbrw(beta)?),
            "bbrw-appnp" => (Backbone::Appnp, PropagationSpec::bbrw(beta)?),
            other => {
                return Err(Error::config(format!(
                    "unknown model `{other}`; expected one of mlp, gcn, appnp, gcn-rwout, \
                     gcn-rwin, appnp-rwout, appnp-rwin, bbrw-gcn, bbrw-appnp"
                )))
            }
        };
        Ok(VictimSpec {
            name: name.to_string(),
            backbone,
            propagation: prop,
        })
    }

    pub fn display_name(&self) -> String {
        if self.propagation.kind == OperatorKind::Bbrw {
            format!("{}(beta={:.1})", self.name, self.propagation.beta)
        } else {
            self.name.clone()
        }
    }
}

/// Training hyperparameters used by the harness for every victim.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainParams {
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub hidden_dim: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Run the full 3x3x3 grid per victim instead of the fixed values.
    pub grid_search: bool,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            lr: 0.01,
            weight_decay: 5e-4,
            dropout: 0.5,
            hidden_dim: 64,
            max_epochs: 1000,
            patience: 100,
            grid_search: false,
        }
    }
}

impl TrainParams {
    pub fn config_for(&self, spec: &VictimSpec, seed: u64) -> ModelConfig {
        let mut cfg = ModelConfig::new(spec.backbone, spec.propagation);
        cfg.lr = self.lr;
        cfg.weight_decay = self.weight_decay;
        cfg.dropout = self.dropout;
        cfg.hidden_dim = self.hidden_dim;
        cfg.max_epochs = self.max_epochs;
        cfg.patience = self.patience;
        cfg.seed = seed;
        cfg
    }
}

/// Full experiment description, reproducible from the master seed.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExperimentPlan {
    pub dataset: String,
    pub num_splits: usize,
    pub targets_per_split: usize,
    pub budgets: Vec<f64>,
    pub victims: Vec<VictimSpec>,
    pub surrogate: VictimSpec,
    pub modes: Vec<AttackMode>,
    pub beta_grid: Vec<f64>,
    pub mask_grid: Vec<f64>,
    pub master_seed: u64,
    pub pgd: PgdParams,
    pub train: TrainParams,
}

impl ExperimentPlan {
    /// The protocol defaults: 10 splits, 20 targets, budgets
    /// {0, 25, 50, 100}%, GCN surrogate, beta grid 0..1 step 0.1, masking
    /// grid 0.5..1 step 0.1.
    pub fn protocol(dataset: &str, master_seed: u64) -> Self {
        ExperimentPlan {
            dataset: dataset.to_string(),
            num_splits: 10,
            targets_per_split: 20,
            budgets: vec![0.0, 0.25, 0.5, 1.0],
            victims: vec![
                VictimSpec::named("mlp", 0.0).unwrap(),
                VictimSpec::named("gcn", 0.0).unwrap(),
                VictimSpec::named("bbrw-gcn", 0.7).unwrap(),
                VictimSpec::named("appnp", 0.0).unwrap(),
                VictimSpec::named("bbrw-appnp", 0.7).unwrap(),
                VictimSpec::named("gcn-rwout", 0.0).unwrap(),
                VictimSpec::named("gcn-rwin", 0.0).unwrap(),
            ],
            surrogate: VictimSpec::named("gcn", 0.0).unwrap(),
            modes: vec![AttackMode::Transfer, AttackMode::Adaptive],
            beta_grid: (0..=10).map(|i| i as f64 / 10.0).collect(),
            mask_grid: (5..=10).map(|i| i as f64 / 10.0).collect(),
            master_seed,
            pgd: PgdParams::default(),
            train: TrainParams::default(),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic seed derivation for harness stages.
pub fn mix_seed(master: u64, stage: &str, index: u64) -> u64 {
    let mut h = master;
    for b in stage.bytes() {
        h = splitmix64(h ^ b as u64);
    }
    splitmix64(h ^ index)
}

/// 10% / 10% / 80% node splits (±1 node from rounding), seeded.
pub fn make_splits(n_labeled: usize, num_splits: usize, seed: u64) -> Result<Vec<DataSplit>> {
    if n_labeled < 10 {
        return Err(Error::config("need at least 10 labeled nodes to split"));
    }
    let n_train = ((n_labeled as f64) * 0.1).round() as usize;
    let n_val = n_train;
    let mut splits = Vec::with_capacity(num_splits);
    for s in 0..num_splits {
        let split_seed = mix_seed(seed, "split", s as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
        let mut order: Vec<usize> = (0..n_labeled).collect();
        order.shuffle(&mut rng);
        let train = order[..n_train].to_vec();
        let val = order[n_train..n_train + n_val].to_vec();
        let test = order[n_train + n_val..].to_vec();
        splits.push(DataSplit {
            train,
            val,
            test,
            seed: split_seed,
        });
    }
    Ok(splits)
}

/// Sample `count` target nodes uniformly (without replacement) from the
/// split's test set.
pub fn sample_targets(split: &DataSplit, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = count.min(split.test.len());
    rand::seq::index::sample(&mut rng, split.test.len(), count)
        .into_iter()
        .map(|i| split.test[i])
        .collect()
}

/// Accuracy (%) of a trained victim over `nodes` on the given (possibly
/// perturbed) graph.
pub fn evaluate(
    victim: &TrainedModel,
    g: &DirectedGraph,
    x: &NodeFeatures,
    y: &Labels,
    nodes: &[usize],
) -> Result<f64> {
    let op = match victim.config.backbone {
        Backbone::Mlp => None,
        _ => Some(build_shared_operator(g, &victim.config.propagation)?),
    };
    let logits = eval_logits(victim, op.as_ref(), &Csr::from_dense(x.matrix()))?;
    accuracy(&logits, y, nodes)
}

/// Train one victim for a split (fixed hyperparameters or grid search).
pub fn train_victim(
    data: &Dataset,
    split: &DataSplit,
    spec: &VictimSpec,
    params: &TrainParams,
    seed: u64,
) -> Result<TrainedModel> {
    let cfg = params.config_for(spec, seed);
    if params.grid_search {
        let (_, model) = grid_search(&data.graph, &data.features, &data.labels, split, &cfg)?;
        Ok(model)
    } else {
        train(&data.graph, &data.features, &data.labels, split, &cfg)
    }
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

pub fn aggregate(values: &[f64]) -> Stat {
    let n = values.len();
    if n == 0 {
        return Stat {
            mean: f64::NAN,
            std: f64::NAN,
            n: 0,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Stat { mean, std, n }
}

/// One cell of a result table. `mode` is `transfer` / `adaptive` for robust
/// cells, or `clean-total` / `clean-target` (budget 0) for the clean
/// columns. `source` is `computed` or `paper`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TableCell {
    pub victim: String,
    pub mode: String,
    pub budget_rate: f64,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    pub source: String,
}

#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct ResultTable {
    pub dataset: String,
    pub cells: Vec<TableCell>,
}

impl ResultTable {
    pub fn cell(&self, victim: &str, mode: &str, budget_rate: f64) -> Option<&TableCell> {
        self.cells.iter().find(|c| {
            c.victim == victim && c.mode == mode && (c.budget_rate - budget_rate).abs() < 1e-9
        })
    }

    fn sort(&mut self) {
        self.cells.sort_by(|a, b| {
            (&a.victim, &a.mode)
                .cmp(&(&b.victim, &b.mode))
                .then(a.budget_rate.partial_cmp(&b.budget_rate).unwrap())
        });
    }
}

/// Adversarial-link distribution for one (attacked model, budget) group.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StatsRow {
    pub attacked_model: String,
    pub mode: String,
    pub budget_rate: f64,
    pub total_flips: usize,
    pub frac_direct_target: f64,
    pub frac_indirect_neighbor_out_link: f64,
    pub frac_other: f64,
}

/// Fraction of budget spent in each flip category per (attacked model,
/// mode, budget). Fractions sum to 1 for nonempty groups.
pub fn adversary_stats(runs: &[AttackRun]) -> Vec<StatsRow> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(String, String, u64), (usize, usize, usize)> = BTreeMap::new();
    for run in runs {
        let key = (
            run.attacked_model.clone(),
            run.mode.to_string(),
            (run.budget_rate * 1000.0).round() as u64,
        );
        let entry = groups.entry(key).or_insert((0, 0, 0));
        for c in &run.categories {
            match c {
                FlipCategory::DirectTarget => entry.0 += 1,
                FlipCategory::IndirectNeighborOutLink => entry.1 += 1,
                FlipCategory::Other => entry.2 += 1,
            }
        }
    }
    groups
        .into_iter()
        .map(|((model, mode, mills), (d, i, o))| {
            let total = d + i + o;
            let denom = total.max(1) as f64;
            StatsRow {
                attacked_model: model,
                mode,
                budget_rate: mills as f64 / 1000.0,
                total_flips: total,
                frac_direct_target: d as f64 / denom,
                frac_indirect_neighbor_out_link: i as f64 / denom,
                frac_other: o as f64 / denom,
            }
        })
        .collect()
}

/// Outputs of a full plan run.
#[derive(Debug, Clone, Default)]
pub struct PlanOutput {
    pub table: ResultTable,
    pub stats: Vec<StatsRow>,
    pub runs: Vec<AttackRun>,
}

struct SplitResult {
    clean_total: Vec<f64>,
    clean_target: Vec<f64>,
    robust: Vec<(usize, AttackMode, f64, f64)>, // (victim idx, mode, budget, acc)
    runs: Vec<AttackRun>,
}

fn robust_accuracy(outcomes: &[VictimOutcome], victim: &str, budget: f64) -> Option<f64> {
    let hits: Vec<&VictimOutcome> = outcomes
        .iter()
        .filter(|o| o.victim == victim && (o.budget_rate - budget).abs() < 1e-9)
        .collect();
    if hits.is_empty() {
        return None;
    }
    let correct = hits.iter().filter(|o| o.correct).count();
    Some(100.0 * correct as f64 / hits.len() as f64)
}

fn run_split(
    plan: &ExperimentPlan,
    data: &Dataset,
    split: &DataSplit,
    split_idx: usize,
) -> Result<SplitResult> {
    let train_seed = mix_seed(plan.master_seed, "train", split_idx as u64);
    let targets = sample_targets(
        split,
        plan.targets_per_split,
        mix_seed(plan.master_seed, "targets", split_idx as u64),
    );

    // Every victim shares the training seed: identical hyperparameters and
    // initialization, differing only in the propagation operator.
    let victims: Vec<Victim> = plan
        .victims
        .iter()
        .map(|spec| {
            Ok(Victim {
                name: spec.name.clone(),
                model: train_victim(data, split, spec, &plan.train, train_seed)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let surrogate = train_victim(data, split, &plan.surrogate, &plan.train, train_seed)?;

    let mut clean_total = Vec::with_capacity(victims.len());
    let mut clean_target = Vec::with_capacity(victims.len());
    for v in &victims {
        clean_total.push(evaluate(
            &v.model,
            &data.graph,
            &data.features,
            &data.labels,
            &split.test,
        )?);
        clean_target.push(evaluate(
            &v.model,
            &data.graph,
            &data.features,
            &data.labels,
            &targets,
        )?);
    }

    let mut robust = Vec::new();
    let mut runs = Vec::new();
    for &mode in &plan.modes {
        let suite = run_attack_suite(
            &data.graph,
            &data.features,
            &data.labels,
            &victims,
            &surrogate,
            &targets,
            &plan.budgets,
            mode,
            &plan.pgd,
            mix_seed(plan.master_seed, "attack", split_idx as u64),
        )?;
        for (vi, v) in victims.iter().enumerate() {
            for &budget in &plan.budgets {
                if let Some(acc) = robust_accuracy(&suite.outcomes, &v.name, budget) {
                    robust.push((vi, mode, budget, acc));
                }
            }
        }
        runs.extend(suite.runs);
    }
    Ok(SplitResult {
        clean_total,
        clean_target,
        robust,
        runs,
    })
}

/// Run the full plan: train victims per split, attack sampled targets, and
/// aggregate accuracies over splits.
pub fn run_plan(plan: &ExperimentPlan, data: &Dataset) -> Result<PlanOutput> {
    if plan.victims.is_empty() || plan.num_splits == 0 {
        return Err(Error::config("plan needs victims and at least one split"));
    }
    let splits = make_splits(
        data.graph.num_nodes(),
        plan.num_splits,
        mix_seed(plan.master_seed, "splits", 0),
    )?;
    let results: Vec<Result<SplitResult>> =
        par::map_indexed(splits.len(), |i| run_split(plan, data, &splits[i], i));
    let mut split_results = Vec::with_capacity(results.len());
    for r in results {
        split_results.push(r?);
    }

    let mut table = ResultTable {
        dataset: plan.dataset.clone(),
        cells: Vec::new(),
    };
    for (vi, spec) in plan.victims.iter().enumerate() {
        let totals: Vec<f64> = split_results.iter().map(|s| s.clean_total[vi]).collect();
        let stat = aggregate(&totals);
        table.cells.push(TableCell {
            victim: spec.name.clone(),
            mode: "clean-total".to_string(),
            budget_rate: 0.0,
            mean: stat.mean,
            std: stat.std,
            n: stat.n,
            source: "computed".to_string(),
        });
        let targets: Vec<f64> = split_results.iter().map(|s| s.clean_target[vi]).collect();
        let stat = aggregate(&targets);
        table.cells.push(TableCell {
            victim: spec.name.clone(),
            mode: "clean-target".to_string(),
            budget_rate: 0.0,
            mean: stat.mean,
            std: stat.std,
            n: stat.n,
            source: "computed".to_string(),
        });
        for &mode in &plan.modes {
            for &budget in &plan.budgets {
                let vals: Vec<f64> = split_results
                    .iter()
                    .flat_map(|s| {
                        s.robust
                            .iter()
                            .filter(|(i, m, b, _)| {
                                *i == vi && *m == mode && (b - budget).abs() < 1e-9
                            })
                            .map(|(_, _, _, a)| *a)
                    })
                    .collect();
                if !vals.is_empty() {
                    let stat = aggregate(&vals);
                    table.cells.push(TableCell {
                        victim: spec.name.clone(),
                        mode: mode.to_string(),
                        budget_rate: budget,
                        mean: stat.mean,
                        std: stat.std,
                        n: stat.n,
                        source: "computed".to_string(),
                    });
                }
            }
        }
    }
    table.sort();

    let mut runs: Vec<AttackRun> = Vec::new();
    for s in split_results {
        runs.extend(s.runs);
    }
    // Deterministic order independent of split scheduling.
    runs.sort_by(|a, b| {
        (a.target, &a.attacked_model, a.mode.to_string())
            .cmp(&(b.target, &b.attacked_model, b.mode.to_string()))
            .then(a.budget_rate.partial_cmp(&b.budget_rate).unwrap())
            .then(a.seed.cmp(&b.seed))
    });
    let stats = adversary_stats(&runs);
    Ok(PlanOutput { table, stats, runs })
}

/// One point of the beta ablation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub mode: String,
    pub budget_rate: f64,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Train and attack `bbrw-gcn` for each beta in the plan's grid; emits
/// accuracy-vs-beta curves per budget for both modes (budget 0 rows carry
/// the clean target accuracy).
pub fn beta_sweep(plan: &ExperimentPlan, data: &Dataset) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &beta in &plan.beta_grid {
        let mut sub = plan.clone();
        sub.victims = vec![VictimSpec::named("bbrw-gcn", beta)?];
        let output = run_plan(&sub, data)?;
        for cell in &output.table.cells {
            let (mode, budget) = match cell.mode.as_str() {
                "clean-target" => ("clean-target".to_string(), 0.0),
                "transfer" | "adaptive" => (cell.mode.clone(), cell.budget_rate),
                _ => continue,
            };
            rows.push(SweepRow {
                beta,
                mode,
                budget_rate: budget,
                mean: cell.mean,
                std: cell.std,
                n: cell.n,
            });
        }
    }
    rows.sort_by(|a, b| {
        a.beta
            .partial_cmp(&b.beta)
            .unwrap()
            .then_with(|| a.mode.cmp(&b.mode))
            .then(a.budget_rate.partial_cmp(&b.budget_rate).unwrap())
    });
    Ok(rows)
}

/// One point of the masking-rate ablation (adaptive mode, one budget).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MaskSweepRow {
    pub masking_rate: f64,
    pub model: String,
    pub beta: Option<f64>,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct MaskSweepOutput {
    pub rows: Vec<MaskSweepRow>,
    /// Best beta per masking rate (by mean robust accuracy).
    pub best_beta: Vec<(f64, f64)>,
}

/// Vary the masking rate of the target's out-links under adaptive attack at
/// 50% budget; reports the undirected backbone, every beta of the BBRW
/// variant, and the best beta per rate.
pub fn masking_sweep(plan: &ExperimentPlan, data: &Dataset) -> Result<MaskSweepOutput> {
    let budget = 0.5;
    let mut out = MaskSweepOutput::default();
    for &rate in &plan.mask_grid {
        let mut sub = plan.clone();
        sub.modes = vec![AttackMode::Adaptive];
        sub.budgets = vec![budget];
        sub.pgd.masking_rate = rate;

        sub.victims = vec![VictimSpec::named("gcn", 0.0)?];
        let backbone_out = run_plan(&sub, data)?;
        if let Some(cell) = backbone_out.table.cell("gcn", "adaptive", budget) {
            out.rows.push(MaskSweepRow {
                masking_rate: rate,
                model: "gcn".to_string(),
                beta: None,
                mean: cell.mean,
                std: cell.std,
                n: cell.n,
            });
        }

        let mut best: Option<(f64, f64)> = None;
        for &beta in &plan.beta_grid {
            sub.victims = vec![VictimSpec::named("bbrw-gcn", beta)?];
            let bbrw_out = run_plan(&sub, data)?;
            if let Some(cell) = bbrw_out.table.cell("bbrw-gcn", "adaptive", budget) {
                out.rows.push(MaskSweepRow {
                    masking_rate: rate,
                    model: "bbrw-gcn".to_string(),
                    beta: Some(beta),
                    mean: cell.mean,
                    std: cell.std,
                    n: cell.n,
                });
                if best.map_or(true, |(_, acc)| cell.mean > acc) {
                    best = Some((beta, cell.mean));
                }
            }
        }
        if let Some((beta, _)) = best {
            out.best_beta.push((rate, beta));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_have_protocol_proportions() {
        let splits = make_splits(100, 10, 7).unwrap();
        assert_eq!(splits.len(), 10);
        for s in &splits {
            assert_eq!(s.train.len(), 10);
            assert_eq!(s.val.len(), 10);
            assert_eq!(s.test.len(), 80);
            s.validate(100).unwrap();
        }
    }

    #[test]
    fn splits_are_seeded_and_distinct() {
        let a = make_splits(200, 10, 42).unwrap();
        let b = make_splits(200, 10, 42).unwrap();
        assert_eq!(a, b);
        // At least 9 of 10 pairwise-adjacent test sets differ.
        let mut distinct = 0;
        for i in 0..a.len() {
            for j in (i + 1)..a.len() {
                if a[i].test != a[j].test {
                    distinct += 1;
                }
            }
        }
        assert!(distinct >= 44, "only {distinct} distinct pairs");
    }

    #[test]
    fn targets_come_from_test_set() {
        let splits = make_splits(50, 1, 3).unwrap();
        let targets = sample_targets(&splits[0], 20, 9);
        assert_eq!(targets.len(), 20);
        for t in &targets {
            assert!(splits[0].test.contains(t));
        }
        let again = sample_targets(&splits[0], 20, 9);
        assert_eq!(targets, again);
    }

    #[test]
    fn aggregate_mean_and_std() {
        let s = aggregate(&[2.0, 4.0, 6.0]);
        assert!((s.mean - 4.0).abs() < 1e-12);
        assert!((s.std - 2.0).abs() < 1e-12);
        assert_eq!(s.n, 3);
        let single = aggregate(&[5.0]);
        assert_eq!(single.std, 0.0);
    }

    #[test]
    fn victim_spec_parsing() {
        assert!(VictimSpec::named("bbrw-gcn", 0.7).is_ok());
        assert!(VictimSpec::named("bbrw-gcn", 1.4).is_err());
        assert!(VictimSpec::named("nonsense", 0.0).is_err());
        let v = VictimSpec::named("gcn-rwout", 0.0).unwrap();
        assert_eq!(v.propagation.kind, OperatorKind::RWout);
    }

    #[test]
    fn stats_fractions_sum_to_one() {
        use crate::attack::{AttackLosses, FlipCategory};
        let run = AttackRun {
            target: 0,
            budget_rate: 0.5,
            budget: 3,
            mode: AttackMode::Adaptive,
            masking_rate: 1.0,
            attacked_model: "gcn".to_string(),
            flips: vec![(1, 0), (2, 3), (4, 5)],
            categories: vec![
                FlipCategory::DirectTarget,
                FlipCategory::IndirectNeighborOutLink,
                FlipCategory::Other,
            ],
            losses: AttackLosses {
                clean: 0.0,
                continuous_final: 0.0,
                discrete: 0.0,
            },
            trajectory: vec![],
            success: false,
            seed: 0,
        };
        let stats = adversary_stats(&[run]);
        assert_eq!(stats.len(), 1);
        let s = &stats[0];
        assert_eq!(s.total_flips, 3);
        let sum = s.frac_direct_target + s.frac_indirect_neighbor_out_link + s.frac_other;
        assert!((sum - 1.0).abs() < 1e-12);
    }
}
