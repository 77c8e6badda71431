//! Training errors, generalization error, and the a-priori bound evaluators.

use serde::{Deserialize, Serialize};

use crate::cases::{CaseSpec, Field, NetField, POLE_MARGIN};
use crate::error::Error;
use crate::network::Architecture;
use crate::sampling::{sobol, TrainingSet};
use crate::training::{CollocationLoss, TrainResult, TrainingErrors};
use crate::Result;

/// Per-family training errors: E_T = sqrt(sum_j w_j |R(z_j)|^2). Empty
/// families report 0.
pub fn training_errors(
    case: &CaseSpec,
    set: &TrainingSet,
    arch: &Architecture,
    params: &[f64],
) -> Result<TrainingErrors> {
    let mut eval = CollocationLoss::metrics(case, set, arch)?;
    let (_, _, sums) = eval.eval_detailed(params)?;
    Ok(TrainingErrors::from_sums(sums))
}

/// Evaluation set for the generalization error.
#[derive(Clone, Debug)]
pub struct TestSet {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub descriptor: String,
}

/// Default evaluation set: a uniform tensor grid with trapezoid weights,
/// 512 points in 1D and 128 x 128 in 2D; angular cases fall back to a QMC
/// cloud over the full input box.
pub fn default_test_set(case: &CaseSpec) -> Result<TestSet> {
    if case.has_angular_inputs() {
        let mut ranges: Vec<[f64; 2]> = case.bounds.clone();
        ranges.push([POLE_MARGIN, std::f64::consts::PI - POLE_MARGIN]);
        ranges.push([0.0, 2.0 * std::f64::consts::PI]);
        let n = 4096;
        let unit = sobol(ranges.len(), n)?;
        let measure: f64 = ranges.iter().map(|r| r[1] - r[0]).product();
        let points: Vec<Vec<f64>> = unit
            .iter()
            .map(|u| {
                u.iter()
                    .zip(&ranges)
                    .map(|(&t, r)| r[0] + t * (r[1] - r[0]))
                    .collect()
            })
            .collect();
        let weights = vec![measure / n as f64; n];
        return Ok(TestSet {
            points,
            weights,
            descriptor: format!("qmc-{n}"),
        });
    }
    let grid_1d = |lo: f64, hi: f64, n: usize| -> (Vec<f64>, Vec<f64>) {
        let h = (hi - lo) / (n - 1) as f64;
        let xs: Vec<f64> = (0..n).map(|i| lo + h * i as f64).collect();
        let ws: Vec<f64> = (0..n)
            .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
            .collect();
        (xs, ws)
    };
    match case.spatial_dim {
        1 => {
            let (xs, ws) = grid_1d(case.bounds[0][0], case.bounds[0][1], 512);
            Ok(TestSet {
                points: xs.iter().map(|&x| vec![x]).collect(),
                weights: ws,
                descriptor: "grid-512".into(),
            })
        }
        2 => {
            let (xs, wx) = grid_1d(case.bounds[0][0], case.bounds[0][1], 128);
            let (ys, wy) = grid_1d(case.bounds[1][0], case.bounds[1][1], 128);
            let mut points = Vec::with_capacity(xs.len() * ys.len());
            let mut weights = Vec::with_capacity(xs.len() * ys.len());
            for (x, wxi) in xs.iter().zip(&wx) {
                for (y, wyi) in ys.iter().zip(&wy) {
                    points.push(vec![*x, *y]);
                    weights.push(wxi * wyi);
                }
            }
            Ok(TestSet {
                points,
                weights,
                descriptor: "grid-128x128".into(),
            })
        }
        d => Err(Error::Config(format!("unsupported spatial dimension {d}"))),
    }
}

/// Weighted L2 distance between a field and the case's exact solution over a
/// test set: (absolute, relative).
pub fn generalization_error(
    field: &dyn Field,
    case: &CaseSpec,
    test: &TestSet,
) -> Result<(f64, f64)> {
    let exact = case
        .exact
        .as_ref()
        .ok_or_else(|| Error::Usage("generalization error needs an exact solution".into()))?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, w) in test.points.iter().zip(&test.weights) {
        let truth = exact.value(p);
        let diff = truth - field.value(p);
        num += w * diff * diff;
        den += w * truth * truth;
    }
    let abs = num.sqrt();
    let rel = if den > 0.0 {
        abs / den.sqrt()
    } else {
        f64::INFINITY
    };
    Ok((abs, rel))
}

/// User-supplied constants and counts for the bound evaluators. The
/// regularity constants cannot be computed from first principles here, so
/// they default to 1 and the evaluators act as formula calculators.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Time horizon T (transient bound).
    pub horizon: f64,
    pub nu: f64,
    pub c: f64,
    /// sup-norms of the scattering coefficient and of Sigma_g.
    pub ks_inf: f64,
    pub sigma_g_inf: f64,
    /// Hardy-Krause variation constants of the residuals.
    pub hk_tb: f64,
    pub hk_sb: f64,
    pub hk_int: f64,
    pub v_bar: f64,
    pub n_tb: usize,
    pub n_sb: usize,
    pub n_int: usize,
    /// Scattering-quadrature node count N_S and order a.
    pub n_s: usize,
    pub order: usize,
    /// Spatial dimension d.
    pub d: usize,
    /// Constant C^eps of the steady bound.
    pub c_eps: f64,
    /// Coercivity margin l > 0 of the steady bound.
    pub margin_l: f64,
}

impl Default for BoundInputs {
    fn default() -> Self {
        BoundInputs {
            horizon: 1.0,
            nu: 1.0,
            c: 1.0,
            ks_inf: 0.0,
            sigma_g_inf: 0.0,
            hk_tb: 1.0,
            hk_sb: 1.0,
            hk_int: 1.0,
            v_bar: 1.0,
            n_tb: 4096,
            n_sb: 4096,
            n_int: 8192,
            n_s: 16,
            order: 2,
            d: 1,
            c_eps: 1.0,
            margin_l: 1.0,
        }
    }
}

fn check_counts(counts: &[usize]) -> Result<()> {
    if counts.contains(&0) {
        return Err(Error::Usage(
            "bound evaluation needs positive point counts".into(),
        ));
    }
    Ok(())
}

/// Transient forward bound:
///
/// ```text
/// V ((E_tb)^2 + nu (E_sb)^2 + c (E_int)^2)
///   + V V2 ((log N_tb)^{2d}/N_tb + c (log N_sb)^{2d}/N_sb
///           + c (log N_int)^{2d+1}/N_int + c N_S^{-2a})
/// ```
///
/// with V = T + nu V1 T^2 exp(nu V1 T), V1 = 2 nu (|ks| + |Sigma_g|) / 4pi,
/// and V2 = max(HK_tb^2, HK_sb^2, HK_int^2, V_bar).
pub fn forward_bound(inputs: &BoundInputs, errors: &TrainingErrors) -> Result<f64> {
    check_counts(&[inputs.n_tb, inputs.n_sb, inputs.n_int, inputs.n_s])?;
    let v1 = 2.0 * inputs.nu * (inputs.ks_inf + inputs.sigma_g_inf) / (4.0 * std::f64::consts::PI);
    let t = inputs.horizon;
    let v = t + inputs.nu * v1 * t * t * (inputs.nu * v1 * t).exp();
    let v2 = inputs
        .hk_tb
        .powi(2)
        .max(inputs.hk_sb.powi(2))
        .max(inputs.hk_int.powi(2))
        .max(inputs.v_bar);
    let p = 2 * inputs.d as i32;
    let training = errors.temporal_boundary.powi(2)
        + inputs.nu * errors.spatial_boundary.powi(2)
        + inputs.c * errors.interior.powi(2);
    let quad = (inputs.n_tb as f64).ln().powi(p) / inputs.n_tb as f64
        + inputs.c * (inputs.n_sb as f64).ln().powi(p) / inputs.n_sb as f64
        + inputs.c * (inputs.n_int as f64).ln().powi(p + 1) / inputs.n_int as f64
        + inputs.c * (inputs.n_s as f64).powi(-2 * inputs.order as i32);
    Ok(v * training + v * v2 * quad)
}

/// Steady forward bound (requires the coercivity margin l > 0):
///
/// ```text
/// V (nu (E_sb)^2 + nu (E_int)^2)
///   + V ((log N_sb)^{2d}/N_sb + nu (log N_int)^{2d}/N_int + nu N_S^{-2a})
/// ```
///
/// with V = max(2/l, (2/l) HK_sb^2, (2 C^eps / l) HK_int^2,
/// (2 C^eps / l) V_bar N_S^{-2a}).
pub fn steady_forward_bound(inputs: &BoundInputs, errors: &TrainingErrors) -> Result<f64> {
    if inputs.margin_l <= 0.0 {
        return Err(Error::AssumptionViolated(
            "the steady bound requires coercivity margin l > 0".into(),
        ));
    }
    check_counts(&[inputs.n_sb, inputs.n_int, inputs.n_s])?;
    let l = inputs.margin_l;
    let ns_term = (inputs.n_s as f64).powi(-2 * inputs.order as i32);
    let v = (2.0 / l)
        .max(2.0 / l * inputs.hk_sb.powi(2))
        .max(2.0 * inputs.c_eps / l * inputs.hk_int.powi(2))
        .max(2.0 * inputs.c_eps / l * inputs.v_bar * ns_term);
    let p = 2 * inputs.d as i32;
    let training =
        inputs.nu * errors.spatial_boundary.powi(2) + inputs.nu * errors.interior.powi(2);
    let quad = (inputs.n_sb as f64).ln().powi(p) / inputs.n_sb as f64
        + inputs.nu * (inputs.n_int as f64).ln().powi(p) / inputs.n_int as f64
        + inputs.nu * ns_term;
    Ok(v * training + v * quad)
}

/// E_T block of the report JSON.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct EtBlock {
    pub int: f64,
    pub sb: f64,
    pub tb: f64,
    pub d: f64,
}

/// E_G block of the report JSON.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct EgBlock {
    pub abs: f64,
    pub rel: f64,
}

/// Which bound was evaluated, if any.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase")]
pub enum BoundValue {
    Forward(f64),
    Steady(f64),
}

/// One result row, JSON-serializable with the interface schema
/// `{case, ke, N_int, N_sb, N_tb, N_d, layers, width, lambda, E_T, E_G,
///   bound, seconds, seed}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ErrorReport {
    pub case: String,
    pub ke: f64,
    #[serde(rename = "N_int")]
    pub n_int: usize,
    #[serde(rename = "N_sb")]
    pub n_sb: usize,
    #[serde(rename = "N_tb")]
    pub n_tb: usize,
    #[serde(rename = "N_d")]
    pub n_d: usize,
    /// Hidden-layer count K - 1.
    pub layers: usize,
    pub width: usize,
    pub lambda: f64,
    #[serde(rename = "E_T")]
    pub e_t: EtBlock,
    #[serde(rename = "E_G")]
    pub e_g: EgBlock,
    pub bound: Option<BoundValue>,
    pub seconds: f64,
    pub seed: u64,
    pub test_set: String,
}

/// Assemble the report row for a finished training run.
pub fn report(
    result: &TrainResult,
    case: &CaseSpec,
    test: &TestSet,
    bound_inputs: Option<&BoundInputs>,
) -> Result<ErrorReport> {
    let field = NetField(&result.params);
    let (abs, rel) = generalization_error(&field, case, test)?;
    let e = &result.training_errors;
    let bound = match bound_inputs {
        Some(inputs) => Some(if case.steady {
            BoundValue::Steady(steady_forward_bound(inputs, e)?)
        } else {
            BoundValue::Forward(forward_bound(inputs, e)?)
        }),
        None => None,
    };
    let widths = &result.hyperparameters.widths;
    Ok(ErrorReport {
        case: case.name.clone(),
        ke: case.ke,
        n_int: result.hyperparameters.counts.n_int,
        n_sb: result.hyperparameters.counts.n_sb,
        n_tb: result.hyperparameters.counts.n_tb,
        n_d: result.hyperparameters.counts.n_d,
        layers: widths.len().saturating_sub(2),
        width: widths.get(1).copied().unwrap_or(0),
        lambda: result.hyperparameters.lambda,
        e_t: EtBlock {
            int: e.interior,
            sb: e.spatial_boundary,
            tb: e.temporal_boundary,
            d: e.data,
        },
        e_g: EgBlock { abs, rel },
        bound,
        seconds: result.wall_seconds,
        seed: result.seed,
        test_set: test.descriptor.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::{catalog, ClosureField};
    use crate::sampling::{build_training_set, Counts, SamplingStrategy};
    use std::sync::Arc;

    fn exact_field(case: &CaseSpec) -> impl Field + '_ {
        let exact = case.exact.clone().unwrap();
        ClosureField {
            tape_fn: move |tape: &crate::autodiff::Tape, inputs: &[crate::autodiff::Dual<'_>]| {
                let _ = (tape, inputs);
                unreachable!("value-only field")
            },
            value_fn: move |p: &[f64]| exact.value(p),
        }
    }

    #[test]
    fn exact_field_has_zero_error() {
        let case = catalog("1d-gaussian", 1.0).unwrap();
        let test = default_test_set(&case).unwrap();
        let f = exact_field(&case);
        let (abs, rel) = generalization_error(&f, &case, &test).unwrap();
        assert_eq!(abs, 0.0);
        assert_eq!(rel, 0.0);
    }

    #[test]
    fn constant_offset_has_that_norm() {
        // domain [0,1] has measure 1, so a constant offset delta gives abs = |delta|
        let case = catalog("1d-gaussian", 1.0).unwrap();
        let exact = case.exact.clone().unwrap();
        let delta = 0.37;
        let f = ClosureField {
            tape_fn: |_: &crate::autodiff::Tape, _: &[crate::autodiff::Dual<'_>]| unreachable!(),
            value_fn: move |p: &[f64]| exact.value(p) + delta,
        };
        let test = default_test_set(&case).unwrap();
        let (abs, _) = generalization_error(&f, &case, &test).unwrap();
        assert!((abs - delta).abs() < 1e-12);
        assert!((test.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_field_has_unit_relative_error() {
        let case = catalog("1d-gaussian", 1.0).unwrap();
        let f = ClosureField {
            tape_fn: |_: &crate::autodiff::Tape, _: &[crate::autodiff::Dual<'_>]| unreachable!(),
            value_fn: |_: &[f64]| 0.0,
        };
        let test = default_test_set(&case).unwrap();
        let (_, rel) = generalization_error(&f, &case, &test).unwrap();
        assert!((rel - 1.0).abs() < 1e-12);
    }

    #[test]
    fn generalization_requires_exact() {
        let mut case = catalog("1d-gaussian", 1.0).unwrap();
        case.exact = None;
        let f = ClosureField {
            tape_fn: |_: &crate::autodiff::Tape, _: &[crate::autodiff::Dual<'_>]| unreachable!(),
            value_fn: |_: &[f64]| 0.0,
        };
        let test = TestSet {
            points: vec![vec![0.5]],
            weights: vec![1.0],
            descriptor: "p".into(),
        };
        assert!(matches!(
            generalization_error(&f, &case, &test),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn triangle_inequality_on_sampled_fields() {
        let case = catalog("1d-gaussian", 1.0).unwrap();
        let test = default_test_set(&case).unwrap();
        let dist = |a: f64, b: f64| {
            // fields exact + a sin(3x), exact + b cos(2x): distance between
            // them through the common exact reference
            let exact = case.exact.clone().unwrap();
            let fa = ClosureField {
                tape_fn: |_: &crate::autodiff::Tape, _: &[crate::autodiff::Dual<'_>]| unreachable!(),
                value_fn: move |p: &[f64]| exact.value(p) + a * (3.0 * p[0]).sin() + b,
            };
            generalization_error(&fa, &case, &test).unwrap().0
        };
        // ||f+g|| <= ||f|| + ||g|| instances
        for (a, b) in [(0.5, 0.25), (0.1, -0.4), (1.0, 1.0)] {
            let lhs = dist(a, b);
            let rhs = dist(a, 0.0) + dist(0.0, b);
            assert!(lhs <= rhs + 1e-12, "triangle violated: {lhs} > {rhs}");
        }
    }

    #[test]
    fn training_error_arithmetic_single_point() {
        // one interior point with weight 2 and residual 3 -> E_T = sqrt(18)
        let mut case = catalog("slab-discontinuous", 1.0).unwrap();
        case.source = Arc::new(|_: &[f64]| -3.0); // zero net -> residual = +3
        let arch = Architecture::uniform(1, 1, 3).unwrap();
        let set = TrainingSet {
            interior: crate::sampling::FamilyPoints {
                points: vec![vec![4.0]],
                weights: vec![2.0],
                values: vec![-3.0],
            },
            ..TrainingSet::default()
        };
        let zeros = crate::network::MlpParams::zeros(&arch);
        let e = training_errors(&case, &set, &arch, zeros.flatten()).unwrap();
        assert!((e.interior - 18.0f64.sqrt()).abs() < 1e-14);
        assert_eq!(e.spatial_boundary, 0.0);
    }

    #[test]
    fn training_error_equals_unit_lambda_loss_term() {
        let case = catalog("1d-gaussian", 1.0).unwrap();
        let counts = Counts {
            n_int: 16,
            n_sb: 4,
            n_tb: 0,
            n_d: 0,
        };
        let set = build_training_set(&case, counts, SamplingStrategy::Sobol, 0).unwrap();
        let arch = Architecture::uniform(1, 1, 5).unwrap();
        let params = crate::network::MlpParams::init(&arch, 2);
        let e = training_errors(&case, &set, &arch, params.flatten()).unwrap();
        // identical machinery: E_T is exactly sqrt of the loss term, and its
        // square reproduces the term up to the rounding of the square root
        let mut eval = CollocationLoss::metrics(&case, &set, &arch).unwrap();
        let (_, _, sums) = eval.eval_detailed(params.flatten()).unwrap();
        assert_eq!(e.interior.to_bits(), sums.interior.sqrt().to_bits());
        let ulps = |a: f64, b: f64| (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs();
        assert!(ulps(e.interior * e.interior, sums.interior) <= 2);
        assert!(
            ulps(
                e.spatial_boundary * e.spatial_boundary,
                sums.spatial_boundary
            ) <= 2
        );
    }

    #[test]
    fn forward_bound_arithmetic() {
        // V = T = 1 (no scattering), V2 = 0, errors (tb, sb, int) = (1e-4, 2e-4, 5e-4)
        let inputs = BoundInputs {
            horizon: 1.0,
            hk_tb: 0.0,
            hk_sb: 0.0,
            hk_int: 0.0,
            v_bar: 0.0,
            ..BoundInputs::default()
        };
        let errors = TrainingErrors {
            temporal_boundary: 1e-4,
            spatial_boundary: 2e-4,
            interior: 5e-4,
            data: 0.0,
        };
        let b = forward_bound(&inputs, &errors).unwrap();
        assert!((b - 3.0e-7).abs() < 1e-20);
    }

    #[test]
    fn forward_bound_zero_errors_zero_v2() {
        let inputs = BoundInputs {
            hk_tb: 0.0,
            hk_sb: 0.0,
            hk_int: 0.0,
            v_bar: 0.0,
            ..BoundInputs::default()
        };
        let b = forward_bound(&inputs, &TrainingErrors::default()).unwrap();
        assert_eq!(b, 0.0);
    }

    #[test]
    fn bounds_decrease_in_counts() {
        let errors = TrainingErrors {
            interior: 1e-3,
            spatial_boundary: 1e-3,
            temporal_boundary: 1e-3,
            data: 0.0,
        };
        // monotone once N exceeds e^p for the (log N)^p / N terms
        for d in [1usize, 2] {
            let n_min = if d == 1 { 64 } else { 256 };
            let mut prev_f = f64::INFINITY;
            let mut prev_s = f64::INFINITY;
            let mut n = n_min;
            while n <= 1_000_000 {
                let inputs = BoundInputs {
                    d,
                    n_tb: n,
                    n_sb: n,
                    n_int: n,
                    ..BoundInputs::default()
                };
                let bf = forward_bound(&inputs, &errors).unwrap();
                let bs = steady_forward_bound(&inputs, &errors).unwrap();
                assert!(bf <= prev_f + 1e-18, "forward bound rose at N={n} (d={d})");
                assert!(bs <= prev_s + 1e-18, "steady bound rose at N={n} (d={d})");
                prev_f = bf;
                prev_s = bs;
                n *= 2;
            }
        }
    }

    #[test]
    fn steady_bound_margin_behavior() {
        let errors = TrainingErrors {
            interior: 1e-3,
            spatial_boundary: 1e-3,
            ..Default::default()
        };
        let at = |l: f64| {
            steady_forward_bound(
                &BoundInputs {
                    margin_l: l,
                    ..BoundInputs::default()
                },
                &errors,
            )
            .unwrap()
        };
        // halving l doubles 2/l and therefore at least doubles V
        assert!(at(0.5) >= 2.0 * at(1.0) - 1e-18);
        assert!(matches!(
            steady_forward_bound(
                &BoundInputs {
                    margin_l: 0.0,
                    ..BoundInputs::default()
                },
                &errors
            ),
            Err(Error::AssumptionViolated(_))
        ));
        // large margin and large counts drive the bound down
        let relaxed = steady_forward_bound(
            &BoundInputs {
                margin_l: 1e6,
                n_sb: 1 << 20,
                n_int: 1 << 20,
                n_s: 64,
                ..BoundInputs::default()
            },
            &TrainingErrors::default(),
        )
        .unwrap();
        assert!(relaxed < 1e-9);
    }

    #[test]
    fn bound_rejects_zero_counts() {
        let inputs = BoundInputs {
            n_int: 0,
            ..BoundInputs::default()
        };
        assert!(forward_bound(&inputs, &TrainingErrors::default()).is_err());
    }

    #[test]
    fn report_round_trips_through_json() {
        let report = ErrorReport {
            case: "1d-gaussian".into(),
            ke: 0.1,
            n_int: 2048,
            n_sb: 512,
            n_tb: 0,
            n_d: 0,
            layers: 4,
            width: 20,
            lambda: 0.1,
            e_t: EtBlock {
                int: 1e-4,
                sb: 2e-5,
                tb: 0.0,
                d: 0.0,
            },
            e_g: EgBlock {
                abs: 3e-5,
                rel: 4e-6,
            },
            bound: Some(BoundValue::Steady(0.25)),
            seconds: 12.5,
            seed: 7,
            test_set: "grid-512".into(),
        };
        let text = serde_json::to_string(&report).unwrap();
        assert!(text.contains("\"N_int\":2048"));
        assert!(text.contains("\"steady\":0.25"));
        let back: ErrorReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
    }
}
