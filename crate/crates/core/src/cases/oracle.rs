//! Independent verification oracle: RK4 integration along the straight
//! characteristic from the inflow wall to a point, for fixed-direction cases.

use super::{CaseSpec, DirectionSpec};
use crate::error::Error;
use crate::Result;

/// Integrate dI/ds = (S - ke I) / |Omega| along the characteristic through
/// `point`, starting from the boundary value at the inflow wall. `steps` RK4
/// steps give O(steps^-4) error.
pub fn oracle_integrate_characteristic(
    case: &CaseSpec,
    point: &[f64],
    steps: usize,
) -> Result<f64> {
    let (mu, eta) = match case.direction {
        DirectionSpec::Fixed { mu, eta } => (mu, eta),
        DirectionSpec::Angular => {
            return Err(Error::Usage(
                "characteristic oracle needs a fixed direction".into(),
            ))
        }
    };
    if steps < 100 {
        return Err(Error::Usage(
            "oracle needs at least 100 integration steps".into(),
        ));
    }
    let s = case.spatial_of(point);
    let norm = (mu * mu + eta * eta).sqrt();
    let dir: Vec<f64> = if case.spatial_dim == 1 {
        vec![mu / norm]
    } else {
        vec![mu / norm, eta / norm]
    };

    // distance back along the ray to the first wall crossing
    let mut back = f64::INFINITY;
    for axis in 0..case.spatial_dim {
        let d = dir[axis];
        if d > 0.0 {
            back = back.min((s[axis] - case.bounds[axis][0]) / d);
        } else if d < 0.0 {
            back = back.min((s[axis] - case.bounds[axis][1]) / d);
        }
    }
    if !back.is_finite() {
        return Err(Error::Usage(
            "characteristic never meets the boundary".into(),
        ));
    }
    let entry: Vec<f64> = (0..case.spatial_dim)
        .map(|a| s[a] - back * dir[a])
        .collect();

    let source_at = |t: f64| -> f64 {
        let p: Vec<f64> = (0..case.spatial_dim)
            .map(|a| entry[a] + t * dir[a])
            .collect();
        (case.source)(&p)
    };
    let rhs = |t: f64, i: f64| (source_at(t) - case.ke * i) / norm;

    let mut i = (case.boundary)(&entry);
    let h = back / steps as f64;
    let mut t = 0.0;
    for _ in 0..steps {
        let k1 = rhs(t, i);
        let k2 = rhs(t + 0.5 * h, i + 0.5 * h * k1);
        let k3 = rhs(t + 0.5 * h, i + 0.5 * h * k2);
        let k4 = rhs(t + h, i + h * k3);
        i += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += h;
    }
    Ok(i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::{case_1d_gaussian, catalog};
    use std::sync::Arc;

    #[test]
    fn pure_decay_matches_exponential() {
        // S = 0, I_b = 1, ke = 1, unit path length -> e^-1
        let mut case = case_1d_gaussian(1.0, 0.02, 0.5, 1.0).unwrap();
        case.source = Arc::new(|_| 0.0);
        case.boundary = Arc::new(|_| 1.0);
        let i = oracle_integrate_characteristic(&case, &[1.0], 1000).unwrap();
        assert!((i - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn oracle_matches_1d_closed_form() {
        for ke in [0.1, 1.0, 10.0] {
            let case = catalog("1d-gaussian", ke).unwrap();
            let exact = case.exact.clone().unwrap();
            let mut worst = 0.0f64;
            for i in 1..=20 {
                let x = i as f64 / 21.0;
                let o = oracle_integrate_characteristic(&case, &[x], 2000).unwrap();
                worst = worst.max((o - exact.value(&[x])).abs());
            }
            assert!(worst < 1e-6, "ke={ke}: max diff {worst:e}");
        }
    }

    #[test]
    fn oracle_matches_2d_closed_form() {
        let case = catalog("2d-gaussian", 1.0).unwrap();
        let exact = case.exact.clone().unwrap();
        let mut worst = 0.0f64;
        for i in 1..=20 {
            let t = i as f64 / 21.0;
            let p = [t, (0.3 + 0.6 * t).min(0.95)];
            let o = oracle_integrate_characteristic(&case, &p, 2000).unwrap();
            worst = worst.max((o - exact.value(&p)).abs());
        }
        assert!(worst < 1e-5, "max diff {worst:e}");
    }

    #[test]
    fn oracle_matches_diag_closed_form() {
        for ke in [0.1, 1.0, 2.0] {
            let case = catalog("diag-gaussian", ke).unwrap();
            let exact = case.exact.clone().unwrap();
            let mut worst = 0.0f64;
            for i in 1..=20 {
                let s = std::f64::consts::SQRT_2 * i as f64 / 21.0;
                let o = oracle_integrate_characteristic(&case, &[s], 2000).unwrap();
                worst = worst.max((o - exact.value(&[s])).abs());
            }
            assert!(worst < 1e-6, "ke={ke}: max diff {worst:e}");
        }
    }

    #[test]
    fn oracle_rejects_angular_cases_and_low_steps() {
        let graded = catalog("manufactured-graded-linear", 1.0).unwrap();
        assert!(oracle_integrate_characteristic(&graded, &[0.5, 0.5, 1.0, 1.0], 1000).is_err());
        let case = catalog("1d-gaussian", 1.0).unwrap();
        assert!(oracle_integrate_characteristic(&case, &[0.5], 50).is_err());
    }
}
