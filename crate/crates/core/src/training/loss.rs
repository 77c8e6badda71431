//! Collocation losses.
//!
//! Two routes compute the same quantity: [`loss_forward`]/[`loss_inverse`]
//! record the whole weighted residual sum on one tape (gradients via a single
//! reverse sweep — the reference path, used in tests), while
//! [`CollocationLoss`] records one residual template per point family and
//! replays it per point with fresh leaf values (the training path). Chunks of
//! points are evaluated independently and reduced in index order, so parallel
//! and sequential evaluation agree bitwise.

use crate::autodiff::{Recording, Tape, Var};
use crate::cases::{build_interior_residual, build_value_mismatch, omega_from_angles, CaseSpec};
use crate::error::Error;
use crate::network::{Architecture, MlpParams, MlpVars};
use crate::sampling::{FamilyPoints, TrainingSet};
use crate::{map_chunks, Result, CHUNK};

use super::LossConfig;

/// Forward (boundary + temporal + lambda * interior) or inverse
/// (data + boundary + lambda * interior) loss assembly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossMode {
    Forward,
    Inverse,
}

/// Which collocation family a residual belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FamilyKind {
    SpatialBoundary,
    TemporalBoundary,
    Interior,
    Data,
}

impl FamilyKind {
    pub fn label(self) -> &'static str {
        match self {
            FamilyKind::SpatialBoundary => "spatial-boundary",
            FamilyKind::TemporalBoundary => "temporal-boundary",
            FamilyKind::Interior => "interior",
            FamilyKind::Data => "data",
        }
    }
}

/// Per-family sums of w_j |R(z_j)|^2 (no lambda weighting applied).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FamilySums {
    pub spatial_boundary: f64,
    pub temporal_boundary: f64,
    pub interior: f64,
    pub data: f64,
}

fn reg_term<'t>(tape: &'t Tape, mlp: &MlpVars<'t>, cfg: &LossConfig) -> Var<'t> {
    let mut acc = tape.zero();
    if cfg.lambda_reg == 0.0 {
        return acc;
    }
    for &p in mlp.leaves() {
        acc = match cfg.reg_order {
            1 => {
                if p.value() >= 0.0 {
                    acc + p
                } else {
                    acc - p
                }
            }
            _ => acc + p * p,
        };
    }
    acc * cfg.lambda_reg
}

fn family_sum_on_tape<'t>(
    tape: &'t Tape,
    mlp: &MlpVars<'t>,
    case: &CaseSpec,
    family: &FamilyPoints,
    kind: FamilyKind,
) -> Result<Var<'t>> {
    let mut acc = tape.zero();
    for (i, point) in family.points.iter().enumerate() {
        let coords: Vec<Var<'t>> = point.iter().map(|&c| tape.lift(c)).collect();
        let inject = tape.lift(family.values[i]);
        let r = match kind {
            FamilyKind::Interior => {
                let phase_vals: Vec<Var<'t>> = match (&case.scatter_rule, case.ks > 0.0) {
                    (Some(rule), true) => {
                        let omega_p = case.omega_at(point);
                        rule.nodes
                            .iter()
                            .map(|nd| {
                                tape.lift(
                                    case.phase.eval(&omega_p, &omega_from_angles(nd[0], nd[1])),
                                )
                            })
                            .collect()
                    }
                    _ => Vec::new(),
                };
                build_interior_residual(tape, case, &coords, inject, &phase_vals, &|inputs| {
                    mlp.forward(inputs)
                })?
            }
            _ => build_value_mismatch(tape, &coords, inject, &|inputs| mlp.forward(inputs))?,
        };
        if !r.value().is_finite() {
            return Err(Error::NonFinite {
                context: format!("{} residual", kind.label()),
                point: point.clone(),
            });
        }
        acc = acc + r.square() * family.weights[i];
    }
    Ok(acc)
}

/// Forward loss on a tape: sum_sb + sum_tb + lambda sum_int + lambda_reg |theta|_q^q.
pub fn loss_forward<'t>(
    mlp: &MlpVars<'t>,
    tape: &'t Tape,
    set: &TrainingSet,
    case: &CaseSpec,
    cfg: &LossConfig,
) -> Result<Var<'t>> {
    cfg.validate()?;
    if case.is_inverse() {
        return Err(Error::Usage("forward loss on an inverse case".into()));
    }
    if set.interior.is_empty() || set.spatial_boundary.is_empty() {
        return Err(Error::Usage(
            "forward loss needs interior and boundary families".into(),
        ));
    }
    if !case.steady && set.temporal_boundary.is_empty() {
        return Err(Error::Usage(
            "transient forward loss needs the temporal family".into(),
        ));
    }
    let sb = family_sum_on_tape(
        tape,
        mlp,
        case,
        &set.spatial_boundary,
        FamilyKind::SpatialBoundary,
    )?;
    let tb = family_sum_on_tape(
        tape,
        mlp,
        case,
        &set.temporal_boundary,
        FamilyKind::TemporalBoundary,
    )?;
    let int = family_sum_on_tape(tape, mlp, case, &set.interior, FamilyKind::Interior)?;
    Ok(sb + tb + int * cfg.lambda + reg_term(tape, mlp, cfg))
}

/// Inverse loss on a tape: sum_d + sum_sb + lambda sum_int + lambda_reg |theta|_q^q.
pub fn loss_inverse<'t>(
    mlp: &MlpVars<'t>,
    tape: &'t Tape,
    set: &TrainingSet,
    case: &CaseSpec,
    cfg: &LossConfig,
) -> Result<Var<'t>> {
    cfg.validate()?;
    if set.data.is_empty() {
        return Err(Error::Usage(
            "inverse loss needs a non-empty data family".into(),
        ));
    }
    if set.interior.is_empty() {
        return Err(Error::Usage(
            "inverse loss needs the interior family".into(),
        ));
    }
    let d = family_sum_on_tape(tape, mlp, case, &set.data, FamilyKind::Data)?;
    let sb = family_sum_on_tape(
        tape,
        mlp,
        case,
        &set.spatial_boundary,
        FamilyKind::SpatialBoundary,
    )?;
    let int = family_sum_on_tape(tape, mlp, case, &set.interior, FamilyKind::Interior)?;
    Ok(d + sb + int * cfg.lambda + reg_term(tape, mlp, cfg))
}

/// One recorded residual, replayed per point with new leaf values.
struct Template {
    rec: Recording,
    param_base: u32,
    coord_idx: Vec<u32>,
    inject_idx: u32,
    phase_idx: Vec<u32>,
    out: u32,
}

impl Template {
    fn record(
        case: &CaseSpec,
        params: &MlpParams,
        point: &[f64],
        kind: FamilyKind,
    ) -> Result<Template> {
        let tape = Tape::new();
        let mlp = MlpVars::lift(&tape, params);
        let param_base = mlp.leaves()[0].index();
        let coords: Vec<Var> = point.iter().map(|&c| tape.leaf(c)).collect();
        let inject = tape.leaf(0.0);
        let phase: Vec<Var> = if kind == FamilyKind::Interior && case.ks > 0.0 {
            let rule = case.scatter_rule.as_ref().expect("validated");
            (0..rule.len()).map(|_| tape.leaf(1.0)).collect()
        } else {
            Vec::new()
        };
        let out = match kind {
            FamilyKind::Interior => {
                build_interior_residual(&tape, case, &coords, inject, &phase, &|inputs| {
                    mlp.forward(inputs)
                })?
            }
            _ => build_value_mismatch(&tape, &coords, inject, &|inputs| mlp.forward(inputs))?,
        };
        Ok(Template {
            rec: tape.freeze(),
            param_base,
            coord_idx: coords.iter().map(|v| v.index()).collect(),
            inject_idx: inject.index(),
            phase_idx: phase.iter().map(|v| v.index()).collect(),
            out: out.index(),
        })
    }
}

struct FamilyEval {
    kind: FamilyKind,
    template: Template,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    values: Vec<f64>,
    /// Per-point phase-function values at the scattering nodes (empty unless
    /// the interior family of a scattering case).
    phase_rows: Vec<Vec<f64>>,
}

/// Replayable objective: total loss and its parameter gradient.
pub struct CollocationLoss {
    families: Vec<FamilyEval>,
    chunks: Vec<(usize, usize, usize)>,
    lambda: f64,
    lambda_reg: f64,
    reg_order: u8,
    dim: usize,
    /// Force single-threaded chunk evaluation (bench/bitwise comparisons).
    pub sequential: bool,
    last_sums: FamilySums,
}

impl CollocationLoss {
    pub fn new(
        case: &CaseSpec,
        set: &TrainingSet,
        arch: &Architecture,
        cfg: &LossConfig,
        mode: LossMode,
    ) -> Result<CollocationLoss> {
        cfg.validate()?;
        match mode {
            LossMode::Forward => {
                if case.is_inverse() {
                    return Err(Error::Usage("forward loss on an inverse case".into()));
                }
                if set.interior.is_empty() || set.spatial_boundary.is_empty() {
                    return Err(Error::Usage(
                        "forward loss needs interior and boundary families".into(),
                    ));
                }
                if !case.steady && set.temporal_boundary.is_empty() {
                    return Err(Error::Usage(
                        "transient forward loss needs the temporal family".into(),
                    ));
                }
                if !set.data.is_empty() {
                    return Err(Error::Usage(
                        "forward loss cannot consume data points".into(),
                    ));
                }
            }
            LossMode::Inverse => {
                if set.data.is_empty() {
                    return Err(Error::Usage(
                        "inverse loss needs a non-empty data family".into(),
                    ));
                }
                if set.interior.is_empty() {
                    return Err(Error::Usage(
                        "inverse loss needs the interior family".into(),
                    ));
                }
            }
        }
        Self::assemble(case, set, arch, cfg)
    }

    /// Evaluator over whatever families are present (lambda = 1, no
    /// regularization); backs the training-error computation so the
    /// loss-term/E_T identity holds float-for-float.
    pub fn metrics(case: &CaseSpec, set: &TrainingSet, arch: &Architecture) -> Result<Self> {
        Self::assemble(case, set, arch, &LossConfig::default())
    }

    fn assemble(
        case: &CaseSpec,
        set: &TrainingSet,
        arch: &Architecture,
        cfg: &LossConfig,
    ) -> Result<CollocationLoss> {
        if arch.input_dim() != case.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: case.input_dim(),
                got: arch.input_dim(),
            });
        }
        let probe = MlpParams::zeros(arch);
        let mut families = Vec::new();
        let mut add = |fam: &FamilyPoints, kind: FamilyKind| -> Result<()> {
            if fam.is_empty() {
                return Ok(());
            }
            let template = Template::record(case, &probe, &fam.points[0], kind)?;
            let phase_rows = if kind == FamilyKind::Interior && case.ks > 0.0 {
                let rule = case.scatter_rule.as_ref().expect("validated");
                fam.points
                    .iter()
                    .map(|p| {
                        let omega_p = case.omega_at(p);
                        rule.nodes
                            .iter()
                            .map(|nd| case.phase.eval(&omega_p, &omega_from_angles(nd[0], nd[1])))
                            .collect()
                    })
                    .collect()
            } else {
                Vec::new()
            };
            families.push(FamilyEval {
                kind,
                template,
                points: fam.points.clone(),
                weights: fam.weights.clone(),
                values: fam.values.clone(),
                phase_rows,
            });
            Ok(())
        };
        add(&set.spatial_boundary, FamilyKind::SpatialBoundary)?;
        add(&set.temporal_boundary, FamilyKind::TemporalBoundary)?;
        add(&set.interior, FamilyKind::Interior)?;
        add(&set.data, FamilyKind::Data)?;

        let mut chunks = Vec::new();
        for (fi, fam) in families.iter().enumerate() {
            let mut start = 0;
            while start < fam.points.len() {
                let end = (start + CHUNK).min(fam.points.len());
                chunks.push((fi, start, end));
                start = end;
            }
        }
        Ok(CollocationLoss {
            families,
            chunks,
            lambda: cfg.lambda,
            lambda_reg: cfg.lambda_reg,
            reg_order: cfg.reg_order,
            dim: arch.param_count(),
            sequential: false,
            last_sums: FamilySums::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Per-family residual sums from the most recent evaluation.
    pub fn last_family_sums(&self) -> FamilySums {
        self.last_sums
    }

    /// Loss, gradient, and per-family sums at `params`.
    pub fn eval_detailed(&mut self, params: &[f64]) -> Result<(f64, Vec<f64>, FamilySums)> {
        if params.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: params.len(),
            });
        }
        let lambda = self.lambda;
        let families = &self.families;
        let outputs = map_chunks(self.chunks.len(), self.sequential, |ci| {
            let (fi, start, end) = self.chunks[ci];
            let fam = &families[fi];
            let tpl = &fam.template;
            let mut cur = tpl.rec.cursor();
            for (k, &v) in params.iter().enumerate() {
                cur.set(tpl.param_base + k as u32, v);
            }
            let mut grad = vec![0.0; params.len()];
            let mut sum = 0.0;
            let scale = if fam.kind == FamilyKind::Interior {
                lambda
            } else {
                1.0
            };
            for i in start..end {
                for (&idx, &c) in tpl.coord_idx.iter().zip(&fam.points[i]) {
                    cur.set(idx, c);
                }
                cur.set(tpl.inject_idx, fam.values[i]);
                if !tpl.phase_idx.is_empty() {
                    for (&idx, &v) in tpl.phase_idx.iter().zip(&fam.phase_rows[i]) {
                        cur.set(idx, v);
                    }
                }
                tpl.rec.forward(&mut cur);
                let r = cur.value(tpl.out);
                if !r.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!("{} residual", fam.kind.label()),
                        point: fam.points[i].clone(),
                    });
                }
                let w = fam.weights[i];
                sum += w * r * r;
                tpl.rec.reverse(&mut cur, tpl.out, 2.0 * w * r * scale);
                for (k, g) in grad.iter_mut().enumerate() {
                    *g += cur.adjoint(tpl.param_base + k as u32);
                }
            }
            Ok((fi, sum, grad))
        });

        let mut sums = FamilySums::default();
        let mut grad = vec![0.0; self.dim];
        for out in outputs {
            let (fi, sum, g) = out?;
            match families[fi].kind {
                FamilyKind::SpatialBoundary => sums.spatial_boundary += sum,
                FamilyKind::TemporalBoundary => sums.temporal_boundary += sum,
                FamilyKind::Interior => sums.interior += sum,
                FamilyKind::Data => sums.data += sum,
            }
            for (t, v) in grad.iter_mut().zip(&g) {
                *t += v;
            }
        }
        let mut loss =
            sums.spatial_boundary + sums.temporal_boundary + lambda * sums.interior + sums.data;
        if self.lambda_reg > 0.0 {
            let mut reg = 0.0;
            for (k, &p) in params.iter().enumerate() {
                match self.reg_order {
                    1 => {
                        reg += p.abs();
                        grad[k] += self.lambda_reg * p.signum();
                    }
                    _ => {
                        reg += p * p;
                        grad[k] += self.lambda_reg * 2.0 * p;
                    }
                }
            }
            loss += self.lambda_reg * reg;
        }
        self.last_sums = sums;
        Ok((loss, grad, sums))
    }
}

impl super::Objective for CollocationLoss {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&mut self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (loss, grad, _) = self.eval_detailed(params)?;
        Ok((loss, grad))
    }
}
