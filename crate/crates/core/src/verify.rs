//! Self-check suite: derivative cross-checks, quadrature exactness, residual
//! identities, and oracle agreements. Backs `gradix verify` and the release
//! gate; every check is independent of the code path it validates.

use std::time::Instant;

use crate::autodiff::{Dual, Tape, Var};
use crate::cases::{catalog, interior_residual, oracle_integrate_characteristic};
use crate::math;
use crate::network::{Architecture, MlpParams, MlpVars};
use crate::rng::SplitMix64;
use crate::sampling::{build_training_set, gauss_legendre, sobol, Counts, SamplingStrategy};
use crate::training::CollocationLoss;

/// One named pass/fail line.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn measure(name: &str, worst: f64, tol: f64) -> Check {
        Check {
            name: name.into(),
            passed: worst.is_finite() && worst < tol,
            detail: format!("worst {worst:.3e} (tolerance {tol:.1e})"),
        }
    }
}

/// Outcome of the full suite.
#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    pub seconds: f64,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &self.checks {
            out.push_str(&format!(
                "{:<w$}  {}  {}\n",
                c.name,
                if c.passed { "pass" } else { "FAIL" },
                c.detail,
                w = width
            ));
        }
        out.push_str(&format!(
            "{} checks, {} failed, {:.2} s\n",
            self.checks.len(),
            self.checks.iter().filter(|c| !c.passed).count(),
            self.seconds
        ));
        out
    }
}

/// Series / continued-fraction reference for the error function, independent
/// of the shipped rational approximation.
fn erf_reference(x: f64) -> f64 {
    let z = x.abs();
    let val = if z <= 4.0 {
        let mut term = z;
        let mut sum = z;
        for n in 1..=60 {
            let nf = n as f64;
            term *= -z * z / nf;
            sum += term / (2.0 * nf + 1.0);
        }
        std::f64::consts::FRAC_2_SQRT_PI * sum
    } else {
        let q = 1.0 / (2.0 * z * z);
        let mut cf = 1.0;
        for k in (1..=60).rev() {
            cf = 1.0 + k as f64 * q / cf;
        }
        1.0 - (-z * z).exp() / (z * std::f64::consts::PI.sqrt()) / cf
    };
    if x < 0.0 {
        -val
    } else {
        val
    }
}

/// erf accuracy and symmetry against the series reference; takes the
/// implementation under test so a broken erf is caught by name.
pub fn check_erf(erf_impl: &dyn Fn(f64) -> f64) -> Check {
    let mut worst = 0.0f64;
    for i in 0..=1200 {
        let x = -6.0 + 0.01 * i as f64;
        worst = worst.max((erf_impl(x) - erf_reference(x)).abs());
        worst = worst.max((erf_impl(-x) + erf_impl(x)).abs());
    }
    Check::measure(
        "erf rational approximation vs series oracle",
        worst,
        1.5e-7 + 1e-12,
    )
}

fn check_network_gradients() -> Check {
    let mut rng = SplitMix64::new(314);
    let arch = Architecture::uniform(1, 2, 8).unwrap();
    let mut worst = 0.0f64;
    for trial in 0..4 {
        let params = MlpParams::init(&arch, 100 + trial);
        for _ in 0..25 {
            let x0 = rng.uniform(-1.5, 1.5);
            let tape = Tape::new();
            let mlp = MlpVars::lift(&tape, &params);
            let xv = tape.lift(x0);
            let out = mlp.forward(&[xv]).unwrap();
            let grad = tape.gradient(out, mlp.leaves()).unwrap();
            let h = 1e-5;
            let mut flat = params.flatten().to_vec();
            for k in 0..flat.len() {
                let orig = flat[k];
                flat[k] = orig + h;
                let fp = MlpParams::unflatten(&arch, &flat)
                    .unwrap()
                    .forward_f64(&[x0])
                    .unwrap();
                flat[k] = orig - h;
                let fm = MlpParams::unflatten(&arch, &flat)
                    .unwrap()
                    .forward_f64(&[x0])
                    .unwrap();
                flat[k] = orig;
                let fd = (fp - fm) / (2.0 * h);
                let denom = fd.abs().max(1e-3);
                worst = worst.max((grad[k] - fd).abs() / denom);
            }
        }
    }
    Check::measure(
        "reverse gradients vs central finite differences",
        worst,
        1e-6,
    )
}

fn check_input_derivative() -> Check {
    let arch = Architecture::uniform(2, 2, 6).unwrap();
    let params = MlpParams::init(&arch, 33);
    let mut rng = SplitMix64::new(77);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let p = [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
        let dir = [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
        let tape = Tape::new();
        let mlp = MlpVars::lift(&tape, &params);
        let out = crate::autodiff::input_derivative(&tape, &p, &dir, |xs| mlp.forward(xs)).unwrap();
        let h = 1e-5;
        let at = |t: f64| {
            params
                .forward_f64(&[p[0] + t * dir[0], p[1] + t * dir[1]])
                .unwrap()
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        let denom = fd.abs().max(1e-3);
        worst = worst.max((out.tangent_value() - fd).abs() / denom);
    }
    Check::measure(
        "input derivatives vs central finite differences",
        worst,
        1e-6,
    )
}

fn check_mixed_derivatives() -> Check {
    // d/dtheta_k (dI/dx) via forward-over-reverse vs finite differences of
    // reverse gradients in x
    let arch = Architecture::uniform(1, 2, 5).unwrap();
    let params = MlpParams::init(&arch, 55);
    let grad_at = |x0: f64| -> Vec<f64> {
        let tape = Tape::new();
        let mlp = MlpVars::lift(&tape, &params);
        let out = mlp.forward(&[tape.lift(x0)]).unwrap();
        tape.gradient(out, mlp.leaves()).unwrap()
    };
    let mut rng = SplitMix64::new(99);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let x0 = rng.uniform(-1.0, 1.0);
        let tape = Tape::new();
        let mlp = MlpVars::lift(&tape, &params);
        let x = Dual::new(tape.lift(x0), tape.lift(1.0));
        let out = mlp.forward(&[x]).unwrap();
        let mixed = tape.gradient(out.tangent, mlp.leaves()).unwrap();
        let h = 1e-5;
        let gp = grad_at(x0 + h);
        let gm = grad_at(x0 - h);
        for k in 0..mixed.len() {
            let fd = (gp[k] - gm[k]) / (2.0 * h);
            let denom = fd.abs().max(1e-2);
            worst = worst.max((mixed[k] - fd).abs() / denom);
        }
    }
    Check::measure("mixed forward-over-reverse vs FD of gradients", worst, 1e-4)
}

fn check_gauss_exactness() -> Check {
    let mut worst = 0.0f64;
    for n in [1usize, 2, 3, 4, 8, 16, 32, 64] {
        let rule = gauss_legendre(n, -1.0, 1.0).unwrap();
        for k in 0..=(2 * n - 1) {
            let got = rule.integrate(|x| x[0].powi(k as i32));
            let expect = if k % 2 == 0 {
                2.0 / (k as f64 + 1.0)
            } else {
                0.0
            };
            worst = worst.max((got - expect).abs());
        }
    }
    Check::measure(
        "gauss-legendre monomial exactness to degree 2n-1",
        worst,
        1e-12,
    )
}

fn check_sobol_reference() -> Check {
    let d1: Vec<f64> = sobol(1, 3).unwrap().iter().map(|p| p[0]).collect();
    let d2 = sobol(2, 4).unwrap();
    let ok = d1 == vec![0.5, 0.75, 0.25]
        && d2[0] == vec![0.5, 0.5]
        && d2[1] == vec![0.75, 0.25]
        && d2[2] == vec![0.25, 0.75]
        && d2[3] == vec![0.375, 0.375];
    Check {
        name: "sobol first points match the direction-number reference".into(),
        passed: ok,
        detail: format!("dim1 prefix {d1:?}"),
    }
}

fn check_residual_at_exact() -> Check {
    let mut worst = 0.0f64;
    let mut detail = String::new();
    for (name, ke) in [
        ("1d-gaussian", 0.1),
        ("1d-gaussian", 10.0),
        ("slab-discontinuous", 1.0),
        ("slab-discontinuous", 10.0),
        ("square-diagonal", 5.0),
        ("2d-gaussian", 1.0),
        ("diag-gaussian", 2.0),
    ] {
        let case = catalog(name, ke).unwrap();
        let exact = case.exact.clone().unwrap();
        let pts = sobol(case.spatial_dim, 100).unwrap();
        let mut case_worst = 0.0f64;
        for u in pts {
            let p: Vec<f64> = u
                .iter()
                .zip(&case.bounds)
                .map(|(&t, b)| b[0] + t * (b[1] - b[0]))
                .collect();
            // skip the interface lines of the discontinuous solutions
            if name == "slab-discontinuous" && (p[0] - 5.0).abs() < 1e-3 {
                continue;
            }
            if name == "square-diagonal" && (p[0] + p[1] - 1.0).abs() < 1e-3 {
                continue;
            }
            let r = interior_residual(&case, exact.as_ref(), &p).unwrap();
            case_worst = case_worst.max(r.abs());
        }
        detail.push_str(&format!("{name}(ke={ke}): {case_worst:.2e}; "));
        worst = worst.max(case_worst);
    }
    let mut check = Check::measure("interior residual of exact solutions", worst, 1e-5);
    check.detail = detail;
    check
}

fn check_oracle_agreement() -> Check {
    let mut worst = 0.0f64;
    for ke in [0.1, 1.0, 10.0] {
        let case = catalog("1d-gaussian", ke).unwrap();
        let exact = case.exact.clone().unwrap();
        for i in 1..=20 {
            let x = i as f64 / 21.0;
            let o = oracle_integrate_characteristic(&case, &[x], 2000).unwrap();
            worst = worst.max((o - exact.value(&[x])).abs());
        }
    }
    let case = catalog("2d-gaussian", 1.0).unwrap();
    let exact = case.exact.clone().unwrap();
    for i in 1..=20 {
        let t = i as f64 / 21.0;
        let p = [t, (0.25 + 0.7 * t).min(0.95)];
        let o = oracle_integrate_characteristic(&case, &p, 2000).unwrap();
        worst = worst.max((o - exact.value(&p)).abs());
    }
    Check::measure("characteristic oracle vs closed forms", worst, 1e-5)
}

fn check_manufactured() -> Check {
    let mut worst = 0.0f64;
    for name in ["manufactured-graded-linear", "manufactured-graded-radial"] {
        let case = catalog(name, 1.0).unwrap();
        let exact = case.exact.clone().unwrap();
        let mut rng = SplitMix64::new(4242);
        for _ in 0..20 {
            let p = [
                rng.uniform(0.05, 0.95),
                rng.uniform(0.05, 0.95),
                rng.uniform(0.3, std::f64::consts::PI - 0.3),
                rng.uniform(0.0, 2.0 * std::f64::consts::PI),
            ];
            let r = interior_residual(&case, exact.as_ref(), &p).unwrap();
            worst = worst.max(r.abs());
        }
    }
    Check::measure("manufactured graded-index residuals", worst, 1e-5)
}

fn check_training_error_identity() -> Check {
    let case = catalog("1d-gaussian", 1.0).unwrap();
    let counts = Counts {
        n_int: 32,
        n_sb: 8,
        n_tb: 0,
        n_d: 0,
    };
    let set = build_training_set(&case, counts, SamplingStrategy::Sobol, 0).unwrap();
    let arch = Architecture::uniform(1, 1, 6).unwrap();
    let params = MlpParams::init(&arch, 5);
    let errors = crate::metrics::training_errors(&case, &set, &arch, params.flatten()).unwrap();
    let mut eval = CollocationLoss::metrics(&case, &set, &arch).unwrap();
    let (_, _, sums) = eval.eval_detailed(params.flatten()).unwrap();
    // E_T is the correctly-rounded square root of the loss term, so E_T^2
    // reproduces the term exactly up to one rounding of the square root
    let ulps = |a: f64, b: f64| (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs();
    let d_int = ulps(errors.interior * errors.interior, sums.interior);
    let d_sb = ulps(
        errors.spatial_boundary * errors.spatial_boundary,
        sums.spatial_boundary,
    );
    let same_def = errors.interior.to_bits() == sums.interior.sqrt().to_bits();
    Check {
        name: "training-error / loss-term identity".into(),
        passed: same_def && d_int <= 2 && d_sb <= 2,
        detail: format!(
            "sqrt definition exact; squared terms within {} ulp",
            d_int.max(d_sb)
        ),
    }
}

fn check_determinism() -> Check {
    let run = || -> Vec<u64> {
        let tape = Tape::new();
        let xs: Vec<Var> = (0..8).map(|i| tape.leaf(0.1 * i as f64 - 0.3)).collect();
        let mut out = tape.lift(1.0);
        for x in &xs {
            out = out * x.tanh() + x.exp() * 0.01;
        }
        tape.gradient(out, &xs)
            .unwrap()
            .iter()
            .map(|g| g.to_bits())
            .collect()
    };
    let same = run() == run();
    Check {
        name: "gradient determinism across repeated runs".into(),
        passed: same,
        detail: if same {
            "bitwise identical".into()
        } else {
            "MISMATCH".into()
        },
    }
}

/// Run the entire suite.
pub fn run_verification() -> VerifyReport {
    let start = Instant::now();
    let checks = vec![
        check_erf(&math::erf),
        check_network_gradients(),
        check_input_derivative(),
        check_mixed_derivatives(),
        check_gauss_exactness(),
        check_sobol_reference(),
        check_residual_at_exact(),
        check_oracle_agreement(),
        check_manufactured(),
        check_training_error_identity(),
        check_determinism(),
    ];
    VerifyReport {
        checks,
        seconds: start.elapsed().as_secs_f64(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_suite_passes() {
        let report = run_verification();
        assert!(
            report.all_passed(),
            "failures:\n{}",
            report
                .failures()
                .iter()
                .map(|c| format!("{}: {}", c.name, c.detail))
                .collect::<Vec<_>>()
                .join("\n")
        );
    }

    #[test]
    fn suite_is_fast() {
        let report = run_verification();
        assert!(
            report.seconds < 60.0,
            "verification took {:.1} s",
            report.seconds
        );
    }

    #[test]
    fn injected_erf_sign_flip_is_caught_by_name() {
        // mutation test: a sign-flipped erf must fail the named erf check
        let broken = |x: f64| -math::erf(x);
        let check = check_erf(&broken);
        assert!(!check.passed);
        assert!(check.name.contains("erf"));
        // and the genuine implementation passes it
        assert!(check_erf(&math::erf).passed);
    }

    #[test]
    fn table_rendering_mentions_every_check() {
        let report = run_verification();
        let table = report.render_table();
        for c in &report.checks {
            assert!(table.contains(&c.name));
        }
    }
}
