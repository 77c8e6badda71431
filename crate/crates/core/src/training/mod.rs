//! Loss assembly, optimizers, and the forward/inverse training drivers.

mod adam;
mod lbfgs;
mod loss;

pub use adam::{adam_minimize, AdamConfig};
pub use lbfgs::{lbfgs_minimize, LbfgsConfig};
pub use loss::{loss_forward, loss_inverse, CollocationLoss, FamilyKind, FamilySums, LossMode};

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cases::CaseSpec;
use crate::error::Error;
use crate::network::{Architecture, MlpParams};
use crate::sampling::{build_training_set, Counts, SamplingStrategy};
use crate::{map_chunks, Result};

/// Differentiable objective: loss value and gradient at a parameter vector.
pub trait Objective {
    fn dim(&self) -> usize;
    fn eval(&mut self, params: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Objective defined by a closure; handy for optimizer tests and benches.
pub struct VecObjective<F: FnMut(&[f64]) -> (f64, Vec<f64>)> {
    dim: usize,
    f: F,
}

impl<F: FnMut(&[f64]) -> (f64, Vec<f64>)> VecObjective<F> {
    pub fn new(dim: usize, f: F) -> Self {
        VecObjective { dim, f }
    }
}

impl<F: FnMut(&[f64]) -> (f64, Vec<f64>)> Objective for VecObjective<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&mut self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((self.f)(params))
    }
}

/// Optimizer output: best-seen parameters and bookkeeping.
#[derive(Clone, Debug)]
pub struct OptimOutcome {
    pub params: Vec<f64>,
    pub loss: f64,
    pub iterations: usize,
    /// Loss at each accepted iterate.
    pub history: Vec<f64>,
    pub grad_norm: f64,
    pub converged: bool,
}

pub(crate) fn best_of(best: &mut Option<(f64, Vec<f64>)>, f: f64, x: &[f64]) {
    let replace = match best {
        Some((bf, _)) => f < *bf,
        None => true,
    };
    if replace {
        *best = Some((f, x.to_vec()));
    }
}

/// Residual weighting and regularization of the loss.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LossConfig {
    /// Interior-residual weight.
    pub lambda: f64,
    #[serde(default)]
    pub lambda_reg: f64,
    /// Regularization norm order q in {1, 2}.
    #[serde(default = "default_reg_order")]
    pub reg_order: u8,
}

fn default_reg_order() -> u8 {
    2
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: 1.0,
            lambda_reg: 0.0,
            reg_order: 2,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda <= 0.0 {
            return Err(Error::Config("lambda must be positive".into()));
        }
        if !(0.0..0.1).contains(&self.lambda_reg) {
            return Err(Error::Config(
                "lambda_reg must satisfy 0 <= lambda_reg < 0.1".into(),
            ));
        }
        if !(self.reg_order == 1 || self.reg_order == 2) {
            return Err(Error::Config("regularization order must be 1 or 2".into()));
        }
        Ok(())
    }
}

/// Warm-up plus quasi-Newton schedule.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct OptimizerConfig {
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default)]
    pub lbfgs: LbfgsConfig,
}

/// Everything a single training run needs beyond the case and counts.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default = "default_strategy")]
    pub strategy: SamplingStrategy,
    #[serde(default)]
    pub seed: u64,
}

fn default_strategy() -> SamplingStrategy {
    SamplingStrategy::Sobol
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossConfig::default(),
            optimizer: OptimizerConfig::default(),
            strategy: SamplingStrategy::Sobol,
            seed: 0,
        }
    }
}

/// Training-error components, one per collocation family.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingErrors {
    pub interior: f64,
    pub spatial_boundary: f64,
    pub temporal_boundary: f64,
    pub data: f64,
}

impl TrainingErrors {
    pub(crate) fn from_sums(sums: FamilySums) -> Self {
        TrainingErrors {
            interior: sums.interior.sqrt(),
            spatial_boundary: sums.spatial_boundary.sqrt(),
            temporal_boundary: sums.temporal_boundary.sqrt(),
            data: sums.data.sqrt(),
        }
    }
}

/// Hyperparameters a run was performed with, echoed into reports.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub widths: Vec<usize>,
    pub lambda: f64,
    pub lambda_reg: f64,
    pub counts: Counts,
    pub strategy: SamplingStrategy,
    pub adam_max_iters: usize,
    pub lbfgs_max_iters: usize,
}

/// Outcome of one training run.
#[derive(Clone, Debug, Serialize)]
pub struct TrainResult {
    pub params: MlpParams,
    pub final_loss: f64,
    /// Accepted-iterate losses, downsampled every 10 iterations.
    pub loss_history: Vec<f64>,
    pub training_errors: TrainingErrors,
    pub wall_seconds: f64,
    pub seed: u64,
    pub hyperparameters: Hyperparameters,
    pub adam_iterations: usize,
    pub lbfgs_iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
}

fn downsample(history: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = history.iter().copied().step_by(10).collect();
    if let Some(&last) = history.last() {
        if out.last() != Some(&last) {
            out.push(last);
        }
    }
    out
}

fn run_training(
    case: &CaseSpec,
    counts: Counts,
    arch: &Architecture,
    cfg: &TrainConfig,
    mode: LossMode,
) -> Result<TrainResult> {
    let start = Instant::now();
    let set = build_training_set(case, counts, cfg.strategy, cfg.seed)?;
    let init = MlpParams::init(arch, cfg.seed);
    let mut objective = CollocationLoss::new(case, &set, arch, &cfg.loss, mode)?;

    let adam_out = adam_minimize(&mut objective, init.flatten(), &cfg.optimizer.adam)?;
    let lbfgs_out = lbfgs_minimize(&mut objective, &adam_out.params, &cfg.optimizer.lbfgs)?;
    let best = if lbfgs_out.loss <= adam_out.loss {
        &lbfgs_out
    } else {
        &adam_out
    };

    let (final_loss, _, sums) = objective.eval_detailed(&best.params)?;
    let mut history = adam_out.history.clone();
    history.extend_from_slice(&lbfgs_out.history);

    Ok(TrainResult {
        params: MlpParams::unflatten(arch, &best.params)?,
        final_loss,
        loss_history: downsample(&history),
        training_errors: TrainingErrors::from_sums(sums),
        wall_seconds: start.elapsed().as_secs_f64(),
        seed: cfg.seed,
        hyperparameters: Hyperparameters {
            widths: arch.widths.clone(),
            lambda: cfg.loss.lambda,
            lambda_reg: cfg.loss.lambda_reg,
            counts,
            strategy: cfg.strategy,
            adam_max_iters: cfg.optimizer.adam.max_iters,
            lbfgs_max_iters: cfg.optimizer.lbfgs.max_iters,
        },
        adam_iterations: adam_out.iterations,
        lbfgs_iterations: lbfgs_out.iterations,
        converged: lbfgs_out.converged,
        grad_norm: lbfgs_out.grad_norm,
    })
}

/// Forward driver: build the training sets, initialize the network, run the
/// Adam warm-up, then L-BFGS to a local minimum.
pub fn train_forward(
    case: &CaseSpec,
    counts: Counts,
    arch: &Architecture,
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    if case.is_inverse() {
        return Err(Error::Usage("train_forward needs a forward case".into()));
    }
    run_training(case, counts, arch, cfg, LossMode::Forward)
}

/// Inverse driver: as the forward one, but the loss carries data residuals.
pub fn train_inverse(
    case: &CaseSpec,
    counts: Counts,
    arch: &Architecture,
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    if !case.is_inverse() {
        return Err(Error::Usage(
            "train_inverse needs an inverse case with a region D'".into(),
        ));
    }
    if counts.n_d == 0 {
        return Err(Error::Usage("train_inverse needs N_d > 0".into()));
    }
    run_training(case, counts, arch, cfg, LossMode::Inverse)
}

/// Hyperparameter grid with per-tuple retraining.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub hidden_layers: Vec<usize>,
    pub widths: Vec<usize>,
    pub lambdas: Vec<f64>,
    /// Number of retrainings per tuple (distinct seeds).
    pub retrain: usize,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers.is_empty() || self.widths.is_empty() || self.lambdas.is_empty() {
            return Err(Error::Config("ensemble grid must be non-empty".into()));
        }
        if self.retrain == 0 {
            return Err(Error::Config(
                "ensemble retrain count must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn runs(&self) -> usize {
        self.hidden_layers.len() * self.widths.len() * self.lambdas.len() * self.retrain
    }
}

/// One leaderboard entry of an ensemble sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub hidden_layers: usize,
    pub width: usize,
    pub lambda: f64,
    pub seed: u64,
    pub final_loss: f64,
    pub wall_seconds: f64,
}

/// Sweep outcome: the lowest-loss run plus the full leaderboard.
#[derive(Debug)]
pub struct EnsembleOutcome {
    pub best: TrainResult,
    pub leaderboard: Vec<LeaderboardRow>,
    pub failures: Vec<String>,
}

/// Train every grid tuple `retrain` times with distinct seeds (in parallel)
/// and select the run with the lowest final loss; ties break by seed.
pub fn ensemble_train(
    case: &CaseSpec,
    counts: Counts,
    ensemble: &EnsembleConfig,
    base: &TrainConfig,
) -> Result<EnsembleOutcome> {
    ensemble.validate()?;
    let mut jobs = Vec::with_capacity(ensemble.runs());
    let mut run_index = 0u64;
    for &hl in &ensemble.hidden_layers {
        for &w in &ensemble.widths {
            for &lambda in &ensemble.lambdas {
                for _ in 0..ensemble.retrain {
                    let mut cfg = base.clone();
                    cfg.loss.lambda = lambda;
                    cfg.seed = base.seed.wrapping_add(run_index);
                    jobs.push((hl, w, cfg));
                    run_index += 1;
                }
            }
        }
    }
    let results = map_chunks(jobs.len(), false, |i| {
        let (hl, w, cfg) = &jobs[i];
        let arch = Architecture::uniform(case.input_dim(), *hl, *w)?;
        let result = if case.is_inverse() {
            train_inverse(case, counts, &arch, cfg)
        } else {
            train_forward(case, counts, &arch, cfg)
        }?;
        Ok::<(usize, TrainResult), Error>((i, result))
    });

    let mut rows = Vec::new();
    let mut winners: Vec<TrainResult> = Vec::new();
    let mut failures = Vec::new();
    for res in results {
        match res {
            Ok((i, tr)) => {
                let (hl, w, cfg) = &jobs[i];
                rows.push(LeaderboardRow {
                    hidden_layers: *hl,
                    width: *w,
                    lambda: cfg.loss.lambda,
                    seed: tr.seed,
                    final_loss: tr.final_loss,
                    wall_seconds: tr.wall_seconds,
                });
                winners.push(tr);
            }
            Err(e) => failures.push(e.to_string()),
        }
    }
    if winners.is_empty() {
        return Err(Error::TrainingAborted(format!(
            "all {} ensemble runs failed: {}",
            jobs.len(),
            failures.join("; ")
        )));
    }
    rows.sort_by(|a, b| {
        a.final_loss
            .partial_cmp(&b.final_loss)
            .unwrap()
            .then(a.seed.cmp(&b.seed))
    });
    winners.sort_by(|a, b| {
        a.final_loss
            .partial_cmp(&b.final_loss)
            .unwrap()
            .then(a.seed.cmp(&b.seed))
    });
    let best = winners.remove(0);
    Ok(EnsembleOutcome {
        best,
        leaderboard: rows,
        failures,
    })
}
