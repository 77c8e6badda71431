//! Transport physics: problem definitions, residual operators, benchmark
//! catalog with closed-form solutions, and an independent characteristic
//! integration oracle.

mod exact;
mod manufactured;
mod oracle;
mod residual;

pub use exact::{
    derive_source_from_exact, DiagGaussianExact, ExactSolution, Gaussian1dExact, Gaussian2dExact,
    PiecewiseExpExact,
};
pub use manufactured::{manufactured_angular_source, manufactured_graded_case, NProfileKind};
pub use oracle::oracle_integrate_characteristic;
pub use residual::{
    boundary_residual, build_interior_residual, build_value_mismatch, data_residual,
    interior_residual, scattering_integral, sigma_g, temporal_residual, ClosureField, Field,
    NetField, SIN_THETA_MIN,
};

use std::sync::Arc;

use crate::error::Error;
use crate::sampling::QuadratureRule;
use crate::Result;

/// Point-dependent scalar callable (source terms, boundary data), taking the
/// full case input layout.
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Sampling keeps angular coordinates away from the poles by this margin.
pub const POLE_MARGIN: f64 = 1e-3;

/// How the propagation direction enters the problem.
#[derive(Clone, Debug, PartialEq)]
pub enum DirectionSpec {
    /// Single fixed direction given by cosines; `eta` is 0 for 1D problems.
    Fixed { mu: f64, eta: f64 },
    /// Direction is part of the unknowns: inputs carry (theta, phi).
    Angular,
}

/// Refractive-index field n(s) with its gradient. Simple closed forms so the
/// same profile can be evaluated in f64 and recorded on a tape.
#[derive(Clone, Debug, PartialEq)]
pub enum RefractiveProfile {
    Uniform(f64),
    /// n = base + slope_x * x + slope_y * y
    Linear {
        base: f64,
        slope: [f64; 2],
    },
    /// n = base + coeff * ((x - cx)^2 + (y - cy)^2)
    Radial {
        base: f64,
        coeff: f64,
        center: [f64; 2],
    },
}

impl RefractiveProfile {
    pub fn n(&self, s: &[f64]) -> f64 {
        match self {
            RefractiveProfile::Uniform(n) => *n,
            RefractiveProfile::Linear { base, slope } => {
                base + slope[0] * s[0]
                    + slope.get(1).copied().unwrap_or(0.0) * s.get(1).copied().unwrap_or(0.0)
            }
            RefractiveProfile::Radial {
                base,
                coeff,
                center,
            } => {
                let dx = s[0] - center[0];
                let dy = s.get(1).copied().unwrap_or(0.0) - center[1];
                base + coeff * (dx * dx + dy * dy)
            }
        }
    }

    pub fn grad(&self, s: &[f64]) -> [f64; 2] {
        match self {
            RefractiveProfile::Uniform(_) => [0.0, 0.0],
            RefractiveProfile::Linear { slope, .. } => *slope,
            RefractiveProfile::Radial { coeff, center, .. } => {
                let dx = s[0] - center[0];
                let dy = s.get(1).copied().unwrap_or(0.0) - center[1];
                [2.0 * coeff * dx, 2.0 * coeff * dy]
            }
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, RefractiveProfile::Uniform(_))
    }
}

/// Phase-function callable on a pair of unit directions.
pub type PhaseFn = Arc<dyn Fn(&[f64; 3], &[f64; 3]) -> f64 + Send + Sync>;

/// Scattering phase function.
#[derive(Clone)]
pub enum PhaseFunction {
    /// Phi = 1
    Isotropic,
    /// Phi = 1 + cos(angle between directions)
    OnePlusCos,
    Custom(PhaseFn),
}

impl PhaseFunction {
    pub fn eval(&self, out: &[f64; 3], inc: &[f64; 3]) -> f64 {
        match self {
            PhaseFunction::Isotropic => 1.0,
            PhaseFunction::OnePlusCos => 1.0 + out[0] * inc[0] + out[1] * inc[1] + out[2] * inc[2],
            PhaseFunction::Custom(f) => f(out, inc),
        }
    }
}

impl std::fmt::Debug for PhaseFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PhaseFunction::Isotropic => write!(f, "Isotropic"),
            PhaseFunction::OnePlusCos => write!(f, "OnePlusCos"),
            PhaseFunction::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Unit direction vector from polar/azimuthal angles.
pub fn omega_from_angles(theta: f64, phi: f64) -> [f64; 3] {
    [
        theta.sin() * phi.cos(),
        theta.sin() * phi.sin(),
        theta.cos(),
    ]
}

/// One benchmark or manufactured problem. Immutable after construction; all
/// evaluations are pure.
#[derive(Clone)]
pub struct CaseSpec {
    pub name: String,
    pub spatial_dim: usize,
    /// Spatial bounds, one [lo, hi] per spatial axis.
    pub bounds: Vec<[f64; 2]>,
    pub steady: bool,
    /// Time horizon T (transient problems only).
    pub horizon: f64,
    /// Light speed c0 (transient problems only).
    pub c0: f64,
    pub direction: DirectionSpec,
    pub ke: f64,
    pub ka: f64,
    pub ks: f64,
    pub refraction: RefractiveProfile,
    pub phase: PhaseFunction,
    /// Angular rule for the in-residual scattering sum; required when ks > 0.
    pub scatter_rule: Option<QuadratureRule>,
    /// Emission source (blackbody term folded in), full input layout.
    pub source: ScalarFn,
    /// Prescribed intensity on the inflow boundary.
    pub boundary: ScalarFn,
    /// Initial data I0 (transient problems only).
    pub initial: Option<ScalarFn>,
    pub exact: Option<Arc<dyn ExactSolution>>,
    /// Measurement subdomain D' (spatial box); present exactly for inverse cases.
    pub inverse_region: Option<Vec<[f64; 2]>>,
    /// Inverse experiments drop the boundary family entirely.
    pub boundary_excluded: bool,
}

impl std::fmt::Debug for CaseSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CaseSpec")
            .field("name", &self.name)
            .field("spatial_dim", &self.spatial_dim)
            .field("steady", &self.steady)
            .field("direction", &self.direction)
            .field("ke", &self.ke)
            .field("ka", &self.ka)
            .field("ks", &self.ks)
            .finish_non_exhaustive()
    }
}

impl CaseSpec {
    /// Scattering albedo ks / ke.
    pub fn albedo(&self) -> f64 {
        self.ks / self.ke
    }

    pub fn is_inverse(&self) -> bool {
        self.inverse_region.is_some()
    }

    pub fn has_angular_inputs(&self) -> bool {
        matches!(self.direction, DirectionSpec::Angular)
    }

    /// Input layout: [t?] x [y?] [theta phi?].
    pub fn input_dim(&self) -> usize {
        (if self.steady { 0 } else { 1 })
            + self.spatial_dim
            + if self.has_angular_inputs() { 2 } else { 0 }
    }

    pub fn time_index(&self) -> Option<usize> {
        if self.steady {
            None
        } else {
            Some(0)
        }
    }

    pub fn spatial_offset(&self) -> usize {
        if self.steady {
            0
        } else {
            1
        }
    }

    pub fn angular_offset(&self) -> Option<usize> {
        if self.has_angular_inputs() {
            Some(self.spatial_offset() + self.spatial_dim)
        } else {
            None
        }
    }

    pub fn spatial_of<'a>(&self, point: &'a [f64]) -> &'a [f64] {
        &point[self.spatial_offset()..self.spatial_offset() + self.spatial_dim]
    }

    /// Propagation direction (3-vector) at a point.
    pub fn omega_at(&self, point: &[f64]) -> [f64; 3] {
        match self.direction {
            DirectionSpec::Fixed { mu, eta } => {
                let z2 = (1.0 - mu * mu - eta * eta).max(0.0);
                [mu, eta, z2.sqrt()]
            }
            DirectionSpec::Angular => {
                let off = self.angular_offset().expect("angular case");
                omega_from_angles(point[off], point[off + 1])
            }
        }
    }

    /// Spatial inflow walls for fixed-direction problems: (axis, coordinate,
    /// measure). 1D walls carry the counting measure 1.
    pub fn inflow_walls(&self) -> Vec<(usize, f64, f64)> {
        let mut walls = Vec::new();
        match self.direction {
            DirectionSpec::Fixed { mu, eta } => {
                let comps = [mu, eta];
                for (axis, &c) in comps.iter().enumerate().take(self.spatial_dim) {
                    let other_len = if self.spatial_dim == 2 {
                        let o = 1 - axis;
                        self.bounds[o][1] - self.bounds[o][0]
                    } else {
                        1.0
                    };
                    if c > 0.0 {
                        walls.push((axis, self.bounds[axis][0], other_len));
                    } else if c < 0.0 {
                        walls.push((axis, self.bounds[axis][1], other_len));
                    }
                }
            }
            DirectionSpec::Angular => {
                // every wall has an inflow hemisphere
                for axis in 0..self.spatial_dim {
                    let other_len = if self.spatial_dim == 2 {
                        let o = 1 - axis;
                        self.bounds[o][1] - self.bounds[o][0]
                    } else {
                        1.0
                    };
                    walls.push((axis, self.bounds[axis][0], other_len));
                    walls.push((axis, self.bounds[axis][1], other_len));
                }
            }
        }
        walls
    }

    /// True when the spatial part of `point` lies on an inflow wall.
    pub fn on_inflow_boundary(&self, point: &[f64]) -> bool {
        let s = self.spatial_of(point);
        let omega = self.omega_at(point);
        for axis in 0..self.spatial_dim {
            let [lo, hi] = self.bounds[axis];
            if (s[axis] - lo).abs() < 1e-9 && omega[axis] > 0.0 {
                return true;
            }
            if (s[axis] - hi).abs() < 1e-9 && omega[axis] < 0.0 {
                return true;
            }
        }
        false
    }

    pub fn validate(&self) -> Result<()> {
        if (self.ke - (self.ka + self.ks)).abs() > 1e-12 * self.ke.abs().max(1.0) {
            return Err(Error::Config("ke must equal ka + ks".into()));
        }
        if self.ke <= 0.0 || self.ka < 0.0 || self.ks < 0.0 {
            return Err(Error::Config(
                "coefficients must be nonnegative with ke > 0".into(),
            ));
        }
        let w = self.albedo();
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::Config("albedo must lie in [0, 1]".into()));
        }
        if self.bounds.len() != self.spatial_dim {
            return Err(Error::Config("bounds must match spatial dimension".into()));
        }
        if self.ks > 0.0 && self.scatter_rule.is_none() {
            return Err(Error::Config("scattering cases need a scatter rule".into()));
        }
        if self.ks > 0.0 && !self.has_angular_inputs() {
            return Err(Error::Config(
                "scattering couples directions; the case must carry angular inputs".into(),
            ));
        }
        if !self.refraction.is_uniform() && !self.has_angular_inputs() {
            return Err(Error::Config(
                "graded-index cases need angular inputs for the redistribution terms".into(),
            ));
        }
        // n >= 1 spot check on a coarse grid
        let samples = 9;
        for i in 0..=samples {
            for j in 0..=samples {
                let x = self.bounds[0][0]
                    + (self.bounds[0][1] - self.bounds[0][0]) * i as f64 / samples as f64;
                let s = if self.spatial_dim == 2 {
                    let y = self.bounds[1][0]
                        + (self.bounds[1][1] - self.bounds[1][0]) * j as f64 / samples as f64;
                    vec![x, y]
                } else {
                    vec![x]
                };
                if self.refraction.n(&s) < 1.0 - 1e-12 {
                    return Err(Error::Config("refractive index must satisfy n >= 1".into()));
                }
                if self.spatial_dim == 1 {
                    break;
                }
            }
        }
        if let Some(region) = &self.inverse_region {
            if region.len() != self.spatial_dim {
                return Err(Error::Config(
                    "inverse region must match spatial dimension".into(),
                ));
            }
            for (axis, r) in region.iter().enumerate() {
                if r[0] < self.bounds[axis][0] - 1e-12 || r[1] > self.bounds[axis][1] + 1e-12 {
                    return Err(Error::Usage(
                        "inverse region must be contained in the domain".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Non-scattering medium between 1D parallel black walls with a Gaussian
/// source; exact solution attached.
pub fn case_1d_gaussian(ke: f64, alpha: f64, center: f64, mu: f64) -> Result<CaseSpec> {
    if ke <= 0.0 || alpha <= 0.0 || mu <= 0.0 || mu > 1.0 {
        return Err(Error::Config(
            "1d-gaussian needs ke > 0, alpha > 0, 0 < mu <= 1".into(),
        ));
    }
    let exact = Arc::new(Gaussian1dExact {
        ke,
        alpha,
        center,
        mu,
    });
    let (a, c) = (alpha, center);
    let source: ScalarFn = Arc::new(move |p: &[f64]| (-((p[0] - c) / a).powi(2)).exp());
    let boundary: ScalarFn = Arc::new(move |_p: &[f64]| (-(c / a).powi(2)).exp() / ke);
    let case = CaseSpec {
        name: "1d-gaussian".into(),
        spatial_dim: 1,
        bounds: vec![[0.0, 1.0]],
        steady: true,
        horizon: 0.0,
        c0: 0.0,
        direction: DirectionSpec::Fixed { mu, eta: 0.0 },
        ke,
        ka: ke,
        ks: 0.0,
        refraction: RefractiveProfile::Uniform(1.0),
        phase: PhaseFunction::Isotropic,
        scatter_rule: None,
        source,
        boundary,
        initial: None,
        exact: Some(exact),
        inverse_region: None,
        boundary_excluded: false,
    };
    case.validate()?;
    Ok(case)
}

/// Infinite slab with a discontinuous source; the source is derived from the
/// exact solution, the walls are black with unit intensity.
pub fn case_slab_discontinuous(ke: f64, length: f64, mu: f64) -> Result<CaseSpec> {
    if ke <= 0.0 || length <= 0.0 || mu <= 0.0 || mu > 1.0 {
        return Err(Error::Config(
            "slab needs ke > 0, L > 0, 0 < mu <= 1".into(),
        ));
    }
    let exact = Arc::new(PiecewiseExpExact::slab(ke, length, mu));
    let mut case = CaseSpec {
        name: "slab-discontinuous".into(),
        spatial_dim: 1,
        bounds: vec![[0.0, length]],
        steady: true,
        horizon: 0.0,
        c0: 0.0,
        direction: DirectionSpec::Fixed { mu, eta: 0.0 },
        ke,
        ka: ke,
        ks: 0.0,
        refraction: RefractiveProfile::Uniform(1.0),
        phase: PhaseFunction::Isotropic,
        scatter_rule: None,
        source: Arc::new(|_| 0.0), // replaced below
        boundary: Arc::new(|_| 1.0),
        initial: None,
        exact: Some(exact),
        inverse_region: None,
        boundary_excluded: false,
    };
    case.source = derive_source_from_exact(&case)?;
    case.validate()?;
    Ok(case)
}

/// Square enclosure, direction along the diagonal, discontinuous source; the
/// left and bottom walls carry unit intensity.
pub fn case_square_diagonal(ke: f64, length: f64) -> Result<CaseSpec> {
    if ke <= 0.0 || length <= 0.0 {
        return Err(Error::Config("square-diagonal needs ke > 0, L > 0".into()));
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let exact = Arc::new(PiecewiseExpExact::square(ke, length));
    let mut case = CaseSpec {
        name: "square-diagonal".into(),
        spatial_dim: 2,
        bounds: vec![[0.0, length], [0.0, length]],
        steady: true,
        horizon: 0.0,
        c0: 0.0,
        direction: DirectionSpec::Fixed { mu: r, eta: r },
        ke,
        ka: ke,
        ks: 0.0,
        refraction: RefractiveProfile::Uniform(1.0),
        phase: PhaseFunction::Isotropic,
        scatter_rule: None,
        source: Arc::new(|_| 0.0), // replaced below
        boundary: Arc::new(|_| 1.0),
        initial: None,
        exact: Some(exact),
        inverse_region: None,
        boundary_excluded: false,
    };
    case.source = derive_source_from_exact(&case)?;
    case.validate()?;
    Ok(case)
}

/// 2D enclosure with a Gaussian source ridge across the diagonal direction;
/// black cold walls on the inflow sides.
pub fn case_2d_gaussian(ke: f64, alpha: f64, center: f64) -> Result<CaseSpec> {
    if ke <= 0.0 || alpha <= 0.0 {
        return Err(Error::Config("2d-gaussian needs ke > 0, alpha > 0".into()));
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let exact = Arc::new(Gaussian2dExact { ke, alpha, center });
    let (a, c) = (alpha, center);
    let source: ScalarFn =
        Arc::new(move |p: &[f64]| (-(((p[0] + p[1]) * r - c) / a).powi(2)).exp());
    let case = CaseSpec {
        name: "2d-gaussian".into(),
        spatial_dim: 2,
        bounds: vec![[0.0, 1.0], [0.0, 1.0]],
        steady: true,
        horizon: 0.0,
        c0: 0.0,
        direction: DirectionSpec::Fixed { mu: r, eta: r },
        ke,
        ka: ke,
        ks: 0.0,
        refraction: RefractiveProfile::Uniform(1.0),
        phase: PhaseFunction::Isotropic,
        scatter_rule: None,
        source,
        boundary: Arc::new(|_| 0.0),
        initial: None,
        exact: Some(exact),
        inverse_region: None,
        boundary_excluded: false,
    };
    case.validate()?;
    Ok(case)
}

/// The 2D Gaussian problem restricted to the diagonal x = y, posed as a 1D
/// problem in the arc-length coordinate with a cold inflow wall.
pub fn case_diag_gaussian(ke: f64) -> Result<CaseSpec> {
    if ke <= 0.0 {
        return Err(Error::Config("diag-gaussian needs ke > 0".into()));
    }
    let alpha = 0.02;
    let center = std::f64::consts::FRAC_1_SQRT_2;
    let diag_len = std::f64::consts::SQRT_2;
    let exact = Arc::new(DiagGaussianExact { ke, alpha, center });
    let (a, c) = (alpha, center);
    let source: ScalarFn = Arc::new(move |p: &[f64]| (-((p[0] - c) / a).powi(2)).exp());
    let case = CaseSpec {
        name: "diag-gaussian".into(),
        spatial_dim: 1,
        bounds: vec![[0.0, diag_len]],
        steady: true,
        horizon: 0.0,
        c0: 0.0,
        direction: DirectionSpec::Fixed { mu: 1.0, eta: 0.0 },
        ke,
        ka: ke,
        ks: 0.0,
        refraction: RefractiveProfile::Uniform(1.0),
        phase: PhaseFunction::Isotropic,
        scatter_rule: None,
        source,
        boundary: Arc::new(|_| 0.0),
        initial: None,
        exact: Some(exact),
        inverse_region: None,
        boundary_excluded: false,
    };
    case.validate()?;
    Ok(case)
}

/// Turn a forward case into an inverse one: the boundary family is dropped
/// and noiseless measurements of the exact solution are taken inside D'.
pub fn make_inverse(mut case: CaseSpec, region: Vec<[f64; 2]>) -> Result<CaseSpec> {
    if case.exact.is_none() {
        return Err(Error::Usage(
            "inverse cases sample data from the exact solution".into(),
        ));
    }
    case.inverse_region = Some(region);
    case.boundary_excluded = true;
    case.name = format!("{}-inverse", case.name);
    case.validate()?;
    Ok(case)
}

/// Look up a catalog case by its interface name, at the given extinction
/// coefficient, with everything else at its documented default.
pub fn catalog(name: &str, ke: f64) -> Result<CaseSpec> {
    match name {
        "1d-gaussian" => case_1d_gaussian(ke, 0.02, 0.5, 0.5),
        "slab-discontinuous" => case_slab_discontinuous(ke, 10.0, 1.0),
        "square-diagonal" => case_square_diagonal(ke, 1.0),
        "2d-gaussian" => case_2d_gaussian(ke, 0.02, std::f64::consts::FRAC_1_SQRT_2),
        "diag-gaussian" => case_diag_gaussian(ke),
        "2d-gaussian-inverse" => {
            let base = case_2d_gaussian(ke, 0.02, std::f64::consts::FRAC_1_SQRT_2)?;
            let region = base.bounds.clone();
            let mut case = make_inverse(base, region)?;
            case.name = "2d-gaussian-inverse".into();
            Ok(case)
        }
        "manufactured-graded-linear" => manufactured_graded_case(NProfileKind::Linear),
        "manufactured-graded-radial" => manufactured_graded_case(NProfileKind::Radial),
        _ => Err(Error::Usage(format!("unknown case '{name}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_names_resolve() {
        for name in [
            "1d-gaussian",
            "slab-discontinuous",
            "square-diagonal",
            "2d-gaussian",
            "diag-gaussian",
            "2d-gaussian-inverse",
            "manufactured-graded-linear",
            "manufactured-graded-radial",
        ] {
            let case = catalog(name, 1.0).unwrap();
            assert_eq!(case.name, name);
        }
        assert!(catalog("no-such-case", 1.0).is_err());
    }

    #[test]
    fn ke_decomposition_enforced() {
        let mut case = catalog("1d-gaussian", 1.0).unwrap();
        case.ka = 0.3;
        assert!(case.validate().is_err());
    }

    #[test]
    fn inverse_region_containment() {
        let base = case_2d_gaussian(1.0, 0.02, std::f64::consts::FRAC_1_SQRT_2).unwrap();
        assert!(make_inverse(base.clone(), vec![[0.25, 0.75], [0.25, 0.75]]).is_ok());
        assert!(make_inverse(base.clone(), vec![[0.0, 1.0], [0.0, 1.0]]).is_ok());
        assert!(matches!(
            make_inverse(base, vec![[-0.5, 0.5], [0.0, 1.0]]),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn inverse_data_is_noiseless_exact() {
        let case = catalog("2d-gaussian-inverse", 1.0).unwrap();
        let exact = case.exact.as_ref().unwrap();
        for p in [[0.3, 0.4], [0.6, 0.9], [0.5, 0.5]] {
            assert_eq!(exact.value(&p), exact.value(&p));
        }
        assert!(case.boundary_excluded);
    }

    #[test]
    fn inflow_walls_for_diagonal_direction() {
        let case = catalog("square-diagonal", 1.0).unwrap();
        let walls = case.inflow_walls();
        assert_eq!(walls.len(), 2);
        assert!(walls.iter().any(|&(axis, at, _)| axis == 0 && at == 0.0));
        assert!(walls.iter().any(|&(axis, at, _)| axis == 1 && at == 0.0));
    }

    #[test]
    fn direction_vector_fixed_and_angular() {
        let case = catalog("1d-gaussian", 1.0).unwrap();
        let w = case.omega_at(&[0.5]);
        assert!((w[0] - 0.5).abs() < 1e-15);
        let graded = catalog("manufactured-graded-linear", 1.0).unwrap();
        let w = graded.omega_at(&[0.5, 0.5, std::f64::consts::FRAC_PI_2, 0.0]);
        assert!((w[0] - 1.0).abs() < 1e-12 && w[2].abs() < 1e-12);
    }

    #[test]
    fn refractive_profiles() {
        let lin = RefractiveProfile::Linear {
            base: 1.0,
            slope: [0.2, 0.0],
        };
        assert!((lin.n(&[0.5, 0.9]) - 1.1).abs() < 1e-15);
        assert_eq!(lin.grad(&[0.5, 0.9]), [0.2, 0.0]);
        let rad = RefractiveProfile::Radial {
            base: 1.0,
            coeff: 0.15,
            center: [0.5, 0.5],
        };
        assert!((rad.n(&[0.5, 0.5]) - 1.0).abs() < 1e-15);
        let g = rad.grad(&[1.0, 0.5]);
        assert!((g[0] - 0.15).abs() < 1e-15 && g[1].abs() < 1e-15);
    }
}
