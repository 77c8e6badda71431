//! Residual operators for the graded-index transport equation.
//!
//! `build_interior_residual` records the full steady/transient interior
//! operator on a caller-supplied tape; point-dependent scalars (coordinates,
//! source value, phase-function values) enter as tape variables, so the same
//! builder serves both one-shot evaluation and replayable training templates.

use crate::autodiff::{Dual, Tape, Var};
use crate::error::Error;
use crate::network::MlpParams;
use crate::sampling::QuadratureRule;
use crate::Result;

use super::{omega_from_angles, CaseSpec, DirectionSpec, RefractiveProfile};

/// Evaluation points with |sin theta| below this are rejected as poles.
pub const SIN_THETA_MIN: f64 = 1e-6;

/// A scalar intensity field evaluable both in plain f64 and on a tape.
pub trait Field: Send + Sync {
    fn on_tape<'t>(&self, tape: &'t Tape, inputs: &[Dual<'t>]) -> Result<Dual<'t>>;
    fn value(&self, point: &[f64]) -> f64;
}

/// A trained (or candidate) network viewed as an intensity field; parameters
/// are lifted as constants, so this is the evaluation path, not the training
/// path.
pub struct NetField<'p>(pub &'p MlpParams);

impl Field for NetField<'_> {
    fn on_tape<'t>(&self, tape: &'t Tape, inputs: &[Dual<'t>]) -> Result<Dual<'t>> {
        let vars = crate::network::MlpVars::lift(tape, self.0);
        vars.forward(inputs)
    }

    fn value(&self, point: &[f64]) -> f64 {
        self.0.forward_f64(point).expect("input layout mismatch")
    }
}

/// Field defined by a pair of closures (tape path, plain path); test helper
/// and the door for substituting exact solutions for the network.
pub struct ClosureField<F, G>
where
    F: for<'t> Fn(&'t Tape, &[Dual<'t>]) -> Result<Dual<'t>> + Send + Sync,
    G: Fn(&[f64]) -> f64 + Send + Sync,
{
    pub tape_fn: F,
    pub value_fn: G,
}

impl<F, G> Field for ClosureField<F, G>
where
    F: for<'t> Fn(&'t Tape, &[Dual<'t>]) -> Result<Dual<'t>> + Send + Sync,
    G: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn on_tape<'t>(&self, tape: &'t Tape, inputs: &[Dual<'t>]) -> Result<Dual<'t>> {
        (self.tape_fn)(tape, inputs)
    }

    fn value(&self, point: &[f64]) -> f64 {
        (self.value_fn)(point)
    }
}

impl RefractiveProfile {
    fn n_on_tape<'t>(&self, tape: &'t Tape, s: &[Var<'t>]) -> Var<'t> {
        match self {
            RefractiveProfile::Uniform(n) => tape.lift(*n),
            RefractiveProfile::Linear { base, slope } => {
                let mut acc = tape.lift(*base) + s[0] * slope[0];
                if s.len() > 1 {
                    acc = acc + s[1] * slope[1];
                }
                acc
            }
            RefractiveProfile::Radial {
                base,
                coeff,
                center,
            } => {
                let dx = s[0] - center[0];
                let mut r2 = dx * dx;
                if s.len() > 1 {
                    let dy = s[1] - center[1];
                    r2 = r2 + dy * dy;
                }
                tape.lift(*base) + r2 * *coeff
            }
        }
    }

    fn grad_on_tape<'t>(&self, tape: &'t Tape, s: &[Var<'t>]) -> [Var<'t>; 2] {
        match self {
            RefractiveProfile::Uniform(_) => [tape.zero(), tape.zero()],
            RefractiveProfile::Linear { slope, .. } => [tape.lift(slope[0]), tape.lift(slope[1])],
            RefractiveProfile::Radial { coeff, center, .. } => {
                let gx = (s[0] - center[0]) * (2.0 * coeff);
                let gy = if s.len() > 1 {
                    (s[1] - center[1]) * (2.0 * coeff)
                } else {
                    tape.zero()
                };
                [gx, gy]
            }
        }
    }
}

fn dual_layout<'t>(tape: &'t Tape, coords: &[Var<'t>], seeds: &[Option<Var<'t>>]) -> Vec<Dual<'t>> {
    coords
        .iter()
        .zip(seeds)
        .map(|(&c, s)| Dual::new(c, s.unwrap_or_else(|| tape.zero())))
        .collect()
}

/// Record the interior residual of the transport operator at one point whose
/// coordinates are the given tape variables. `source` is the injected value
/// of the emission source at the point; `phase_vals` are the injected phase
/// function values Phi(Omega_p, Omega_i), one per scattering node (empty when
/// ks = 0).
pub fn build_interior_residual<'t, F>(
    tape: &'t Tape,
    case: &CaseSpec,
    coords: &[Var<'t>],
    source: Var<'t>,
    phase_vals: &[Var<'t>],
    field: &F,
) -> Result<Var<'t>>
where
    F: Fn(&[Dual<'t>]) -> Result<Dual<'t>>,
{
    if coords.len() != case.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: case.input_dim(),
            got: coords.len(),
        });
    }
    let dim = case.input_dim();
    let soff = case.spatial_offset();
    let spatial: Vec<Var<'t>> = coords[soff..soff + case.spatial_dim].to_vec();

    // transport pass: directional derivative along the spatial direction
    let mut seeds: Vec<Option<Var<'t>>> = vec![None; dim];
    match case.direction {
        DirectionSpec::Fixed { mu, eta } => {
            seeds[soff] = Some(tape.lift(mu));
            if case.spatial_dim == 2 {
                seeds[soff + 1] = Some(tape.lift(eta));
            }
        }
        DirectionSpec::Angular => {
            let aoff = case.angular_offset().expect("angular case");
            let theta = coords[aoff];
            let phi = coords[aoff + 1];
            let sth = theta.sin();
            seeds[soff] = Some(sth * phi.cos());
            if case.spatial_dim == 2 {
                seeds[soff + 1] = Some(sth * phi.sin());
            }
        }
    }
    let transported = field(&dual_layout(tape, coords, &seeds))?;
    let intensity = transported.primal;
    let mut residual = intensity * case.ke + transported.tangent - source;

    // transient term (n / c0) dI/dt
    if !case.steady {
        let mut tseeds: Vec<Option<Var<'t>>> = vec![None; dim];
        tseeds[0] = Some(tape.one());
        let time_pass = field(&dual_layout(tape, coords, &tseeds))?;
        let n = case.refraction.n_on_tape(tape, &spatial);
        residual = residual + time_pass.tangent * n / case.c0;
    }

    // angular redistribution terms, present only in graded media
    if !case.refraction.is_uniform() {
        let aoff = case
            .angular_offset()
            .ok_or_else(|| Error::Usage("graded case without angular inputs".into()))?;
        let theta = coords[aoff];
        let phi = coords[aoff + 1];
        let sin_theta = theta.sin();
        if sin_theta.value().abs() < SIN_THETA_MIN {
            return Err(Error::SingularPoint {
                sin_theta: sin_theta.value(),
            });
        }
        let n = case.refraction.n_on_tape(tape, &spatial);
        let [nx, ny] = case.refraction.grad_on_tape(tape, &spatial);
        let denom = n * sin_theta;

        // d/dtheta { I * sin(theta) cos(theta) (cos(phi) nx + sin(phi) ny) }
        let mut th_seeds: Vec<Option<Var<'t>>> = vec![None; dim];
        th_seeds[aoff] = Some(tape.one());
        let i_th = field(&dual_layout(tape, coords, &th_seeds))?;
        let theta_dual = Dual::new(theta, tape.one());
        let geom = theta_dual.sin() * theta_dual.cos() * (phi.cos() * nx + phi.sin() * ny);
        let u = i_th * geom;
        residual = residual + u.tangent / denom;

        // d/dphi { (-sin(phi) nx + cos(phi) ny) * I }
        let mut ph_seeds: Vec<Option<Var<'t>>> = vec![None; dim];
        ph_seeds[aoff + 1] = Some(tape.one());
        let i_ph = field(&dual_layout(tape, coords, &ph_seeds))?;
        let phi_dual = Dual::new(phi, tape.one());
        let s1_grad = -(phi_dual.sin() * nx) + phi_dual.cos() * ny;
        let v = s1_grad * i_ph;
        residual = residual + v.tangent / denom;
    }

    // scattering sum over the angular quadrature rule
    if case.ks > 0.0 {
        let rule = case
            .scatter_rule
            .as_ref()
            .ok_or_else(|| Error::Config("scattering case without a rule".into()))?;
        if phase_vals.len() != rule.len() {
            return Err(Error::DimensionMismatch {
                expected: rule.len(),
                got: phase_vals.len(),
            });
        }
        let aoff = case
            .angular_offset()
            .expect("validated: ks > 0 has angular inputs");
        let mut acc = tape.zero();
        for (i, node) in rule.nodes.iter().enumerate() {
            let mut scatter_coords = coords.to_vec();
            scatter_coords[aoff] = tape.lift(node[0]);
            scatter_coords[aoff + 1] = tape.lift(node[1]);
            let seeds = vec![None; dim];
            let i_in = field(&dual_layout(tape, &scatter_coords, &seeds))?;
            acc = acc + phase_vals[i] * rule.weights[i] * i_in.primal;
        }
        residual = residual - acc * (case.ks / (4.0 * std::f64::consts::PI));
    }

    Ok(residual)
}

/// Record `field(point) - target` (used for boundary, temporal, and data
/// residuals; they share this shape).
pub fn build_value_mismatch<'t, F>(
    tape: &'t Tape,
    coords: &[Var<'t>],
    target: Var<'t>,
    field: &F,
) -> Result<Var<'t>>
where
    F: Fn(&[Dual<'t>]) -> Result<Dual<'t>>,
{
    let seeds = vec![None; coords.len()];
    let out = field(&dual_layout(tape, coords, &seeds))?;
    Ok(out.primal - target)
}

/// One-shot interior residual of a field at a point.
pub fn interior_residual(case: &CaseSpec, field: &dyn Field, point: &[f64]) -> Result<f64> {
    if point.len() != case.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: case.input_dim(),
            got: point.len(),
        });
    }
    let s = case.spatial_of(point);
    for (axis, b) in case.bounds.iter().enumerate() {
        if s[axis] < b[0] - 1e-12 || s[axis] > b[1] + 1e-12 {
            return Err(Error::Usage(format!(
                "point {point:?} lies outside the domain"
            )));
        }
    }
    let tape = Tape::new();
    let coords: Vec<Var> = point.iter().map(|&v| tape.lift(v)).collect();
    let source = tape.lift((case.source)(point));
    let phase_vals: Vec<Var> = match (&case.scatter_rule, case.ks > 0.0) {
        (Some(rule), true) => {
            let omega_p = case.omega_at(point);
            rule.nodes
                .iter()
                .map(|nd| tape.lift(case.phase.eval(&omega_p, &omega_from_angles(nd[0], nd[1]))))
                .collect()
        }
        _ => Vec::new(),
    };
    let r = build_interior_residual(&tape, case, &coords, source, &phase_vals, &|inputs| {
        field.on_tape(&tape, inputs)
    })?;
    let v = r.value();
    if !v.is_finite() {
        return Err(Error::NonFinite {
            context: "interior residual".into(),
            point: point.to_vec(),
        });
    }
    Ok(v)
}

/// Scattering source term (ks / 4pi) sum_i w_i Phi(Omega_p, Omega_i) I(s, Omega_i).
/// The field is evaluated on the spatial-plus-angular layout.
pub fn scattering_integral(
    case: &CaseSpec,
    field: &dyn Field,
    point: &[f64],
    rule: &QuadratureRule,
) -> Result<f64> {
    if case.ks == 0.0 {
        return Ok(0.0);
    }
    let omega_p = case.omega_at(point);
    let s = case.spatial_of(point);
    let mut sum = 0.0;
    for (node, w) in rule.nodes.iter().zip(&rule.weights) {
        let mut eval_point = s.to_vec();
        eval_point.push(node[0]);
        eval_point.push(node[1]);
        let phi = case
            .phase
            .eval(&omega_p, &omega_from_angles(node[0], node[1]));
        sum += w * phi * field.value(&eval_point);
    }
    Ok(case.ks / (4.0 * std::f64::consts::PI) * sum)
}

/// Quadrature of the phase function over incoming directions at the case's
/// reference direction: the Sigma_g input of the bound evaluators.
pub fn sigma_g(case: &CaseSpec, rule: &QuadratureRule) -> f64 {
    let omega = match case.direction {
        DirectionSpec::Fixed { .. } => case.omega_at(&[]),
        DirectionSpec::Angular => omega_from_angles(std::f64::consts::FRAC_PI_2, 0.0),
    };
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(nd, w)| w * case.phase.eval(&omega, &omega_from_angles(nd[0], nd[1])))
        .sum()
}

/// Boundary residual I(point) - I_b(point); the point must sit on the inflow
/// set.
pub fn boundary_residual(case: &CaseSpec, field: &dyn Field, point: &[f64]) -> Result<f64> {
    if !case.on_inflow_boundary(point) {
        return Err(Error::NotInflowBoundary {
            point: point.to_vec(),
        });
    }
    Ok(field.value(point) - (case.boundary)(point))
}

/// Temporal residual I(0, s, Omega) - I0(s, Omega) for transient cases.
pub fn temporal_residual(case: &CaseSpec, field: &dyn Field, point: &[f64]) -> Result<f64> {
    if case.steady {
        return Err(Error::Usage("temporal residual on a steady case".into()));
    }
    if point[0].abs() > 1e-12 {
        return Err(Error::Usage(
            "temporal residual is evaluated at t = 0".into(),
        ));
    }
    let initial = case
        .initial
        .as_ref()
        .ok_or_else(|| Error::Config("transient case without initial data".into()))?;
    Ok(field.value(point) - initial(point))
}

/// Data residual L(I)(point) - g with L = identity (direct intensity
/// measurements); the point must lie in the case's measurement region.
pub fn data_residual(case: &CaseSpec, field: &dyn Field, point: &[f64], g: f64) -> Result<f64> {
    let region = case.inverse_region.as_ref().ok_or_else(|| {
        Error::Usage("data residual on a case without a measurement region".into())
    })?;
    let s = case.spatial_of(point);
    for (axis, r) in region.iter().enumerate() {
        if s[axis] < r[0] - 1e-12 || s[axis] > r[1] + 1e-12 {
            return Err(Error::Usage(
                "data point outside the measurement region".into(),
            ));
        }
    }
    Ok(field.value(point) - g)
}
