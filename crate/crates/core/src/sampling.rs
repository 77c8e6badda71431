//! Quadrature rules and the four collocation-point families.

use serde::{Deserialize, Serialize};

use crate::cases::{CaseSpec, DirectionSpec, POLE_MARGIN};
use crate::error::Error;
use crate::rng::SplitMix64;
use crate::Result;

/// Nodes, positive weights, and the nominal order of a quadrature rule.
/// Weights sum to the measure of the target domain.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub order: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .sum()
    }
}

/// (P_n(x), P_{n-1}(x)) by the three-term recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0; // P_0
    let mut p = x; // P_1
    for k in 1..n {
        let next = ((2 * k + 1) as f64 * x * p - k as f64 * p_prev) / (k + 1) as f64;
        p_prev = p;
        p = next;
    }
    if n == 0 {
        (1.0, 0.0)
    } else {
        (p, p_prev)
    }
}

/// Gauss-Legendre rule on [a, b]: nodes by Newton iteration on P_n to 1e-14,
/// exact for polynomials of degree <= 2n-1.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Result<QuadratureRule> {
    if !(1..=64).contains(&n) {
        return Err(Error::Usage("gauss_legendre supports 1 <= n <= 64".into()));
    }
    if a.partial_cmp(&b) != Some(std::cmp::Ordering::Less) {
        return Err(Error::Usage("gauss_legendre needs a < b".into()));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (pn, pn1) = legendre_pair(n, x);
            let dpn = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let step = pn / dpn;
            x -= step;
            if step.abs() <= 1e-14 {
                break;
            }
        }
        let (pn, pn1) = legendre_pair(n, x);
        let dpn = n as f64 * (x * pn - pn1) / (x * x - 1.0);
        let w = 2.0 / ((1.0 - x * x) * dpn * dpn);
        // roots come out descending in (0, 1]; mirror to fill both halves
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    Ok(QuadratureRule {
        nodes: nodes.iter().map(|&x| vec![mid + half * x]).collect(),
        weights: weights.iter().map(|&w| half * w).collect(),
        order: n,
    })
}

/// Product rule over the unit sphere: Gauss-Legendre in cos(theta) times a
/// midpoint rule in phi. Nodes are (theta, phi) pairs; weights sum to 4 pi.
pub fn sphere_rule(n_mu: usize, n_phi: usize) -> QuadratureRule {
    let gl = gauss_legendre(n_mu, -1.0, 1.0).expect("fixed small order");
    let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
    let mut nodes = Vec::with_capacity(n_mu * n_phi);
    let mut weights = Vec::with_capacity(n_mu * n_phi);
    for (mu_node, w_mu) in gl.nodes.iter().zip(&gl.weights) {
        let theta = mu_node[0].clamp(-1.0, 1.0).acos();
        for j in 0..n_phi {
            let phi = dphi * (j as f64 + 0.5);
            nodes.push(vec![theta, phi]);
            weights.push(w_mu * dphi);
        }
    }
    QuadratureRule {
        nodes,
        weights,
        order: n_mu,
    }
}

/// Joe-Kuo direction numbers (new-joe-kuo-6 tables) for the first 8 Sobol
/// components; component 0 is the van der Corput sequence.
fn direction_numbers(component: usize) -> [u32; 32] {
    let mut v = [0u32; 32];
    if component == 0 {
        for (i, slot) in v.iter_mut().enumerate() {
            *slot = 1 << (31 - i);
        }
        return v;
    }
    let (a, m): (u32, &[u32]) = match component {
        1 => (0, &[1]),
        2 => (1, &[1, 3]),
        3 => (1, &[1, 3, 1]),
        4 => (2, &[1, 1, 1]),
        5 => (1, &[1, 1, 3, 3]),
        6 => (4, &[1, 3, 5, 13]),
        7 => (2, &[1, 1, 5, 5, 17]),
        _ => unreachable!("dimension checked by caller"),
    };
    let s = m.len();
    for i in 0..s {
        v[i] = m[i] << (31 - i);
    }
    for i in s..32 {
        let j = i - s;
        v[i] = v[j] ^ (v[j] >> s);
        for k in 0..s.saturating_sub(1) {
            if (a >> k) & 1 != 0 {
                v[i] ^= v[j + 1 + k];
            }
        }
    }
    v
}

/// First `n` points of the Sobol sequence in [0,1)^dim (Gray-code order,
/// all-zeros point skipped). Deterministic and seed-independent.
pub fn sobol(dim: usize, n: usize) -> Result<Vec<Vec<f64>>> {
    if !(1..=8).contains(&dim) {
        return Err(Error::Usage("sobol supports 1 <= dim <= 8".into()));
    }
    if n == 0 || n >= (1 << 31) {
        return Err(Error::Usage("sobol needs 1 <= n < 2^31".into()));
    }
    let tables: Vec<[u32; 32]> = (0..dim).map(direction_numbers).collect();
    let mut state = vec![0u32; dim];
    let mut out = Vec::with_capacity(n);
    for index in 0..n as u32 {
        let bit = index.trailing_ones() as usize;
        for (x, t) in state.iter_mut().zip(&tables) {
            *x ^= t[bit];
        }
        out.push(state.iter().map(|&u| u as f64 / 4_294_967_296.0).collect());
    }
    Ok(out)
}

/// Which point generator backs the training families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingStrategy {
    Sobol,
    UniformRandom,
}

/// Family sizes N_int, N_sb, N_tb, N_d.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub n_int: usize,
    pub n_sb: usize,
    #[serde(default)]
    pub n_tb: usize,
    #[serde(default)]
    pub n_d: usize,
}

/// One collocation family: points (case input layout), quadrature weights,
/// and the injected per-point target value (source S for the interior family,
/// I_b / I_0 / g for boundary, temporal, and data families).
#[derive(Clone, Debug, Default)]
pub struct FamilyPoints {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
}

impl FamilyPoints {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// The four training-point families.
#[derive(Clone, Debug, Default)]
pub struct TrainingSet {
    pub interior: FamilyPoints,
    pub spatial_boundary: FamilyPoints,
    pub temporal_boundary: FamilyPoints,
    pub data: FamilyPoints,
}

fn unit_points(
    dim: usize,
    n: usize,
    strategy: SamplingStrategy,
    rng: &mut SplitMix64,
) -> Result<Vec<Vec<f64>>> {
    match strategy {
        SamplingStrategy::Sobol => sobol(dim, n),
        SamplingStrategy::UniformRandom => Ok((0..n)
            .map(|_| (0..dim).map(|_| rng.next_f64()).collect())
            .collect()),
    }
}

/// Build the four collocation families for a case.
pub fn build_training_set(
    case: &CaseSpec,
    counts: Counts,
    strategy: SamplingStrategy,
    seed: u64,
) -> Result<TrainingSet> {
    if counts.n_tb > 0 && case.steady {
        return Err(Error::Usage(
            "steady cases have no temporal family (N_tb must be 0)".into(),
        ));
    }
    if counts.n_d > 0 && !case.is_inverse() {
        return Err(Error::Usage(
            "data points need an inverse case with a region D'".into(),
        ));
    }
    if counts.n_sb > 0 && case.boundary_excluded {
        return Err(Error::Usage(
            "this inverse case excludes boundary conditions (N_sb must be 0)".into(),
        ));
    }
    let mut rng = SplitMix64::new(seed);
    let angular_range = [POLE_MARGIN, std::f64::consts::PI - POLE_MARGIN];
    let two_pi = 2.0 * std::f64::consts::PI;

    let mut set = TrainingSet::default();

    // interior family
    if counts.n_int > 0 {
        let mut ranges: Vec<[f64; 2]> = Vec::new();
        if !case.steady {
            ranges.push([0.0, case.horizon]);
        }
        ranges.extend(case.bounds.iter().copied());
        if case.has_angular_inputs() {
            ranges.push(angular_range);
            ranges.push([0.0, two_pi]);
        }
        let unit = unit_points(ranges.len(), counts.n_int, strategy, &mut rng)?;
        let measure: f64 = ranges.iter().map(|r| r[1] - r[0]).product();
        let w = measure / counts.n_int as f64;
        for u in unit {
            let p: Vec<f64> = u
                .iter()
                .zip(&ranges)
                .map(|(&t, r)| r[0] + t * (r[1] - r[0]))
                .collect();
            set.interior.values.push((case.source)(&p));
            set.interior.points.push(p);
            set.interior.weights.push(w);
        }
    }

    // spatial boundary family on the inflow set
    if counts.n_sb > 0 {
        let walls = case.inflow_walls();
        if walls.is_empty() {
            return Err(Error::Usage("case has no inflow walls".into()));
        }
        let total: f64 = walls.iter().map(|&(_, _, len)| len).sum();
        match case.direction {
            DirectionSpec::Fixed { .. } => {
                let sample_dim = if case.spatial_dim == 2 { 2 } else { 1 };
                let extra_t = usize::from(!case.steady);
                let unit = unit_points(sample_dim + extra_t, counts.n_sb, strategy, &mut rng)?;
                let mut w = total / counts.n_sb as f64;
                if !case.steady {
                    w *= case.horizon;
                }
                for u in unit {
                    let mut p = Vec::with_capacity(case.input_dim());
                    let mut cursor = 0;
                    if !case.steady {
                        p.push(u[cursor] * case.horizon);
                        cursor += 1;
                    }
                    let (axis, at) = if case.spatial_dim == 2 {
                        let pick = u[cursor] * total;
                        cursor += 1;
                        let mut acc = 0.0;
                        let mut chosen = walls[walls.len() - 1];
                        for &wall in &walls {
                            acc += wall.2;
                            if pick <= acc {
                                chosen = wall;
                                break;
                            }
                        }
                        (chosen.0, chosen.1)
                    } else {
                        (walls[0].0, walls[0].1)
                    };
                    let mut spatial = vec![0.0; case.spatial_dim];
                    spatial[axis] = at;
                    if case.spatial_dim == 2 {
                        let other = 1 - axis;
                        let [lo, hi] = case.bounds[other];
                        spatial[other] = lo + u[cursor] * (hi - lo);
                    }
                    p.extend(spatial);
                    set.spatial_boundary.values.push((case.boundary)(&p));
                    set.spatial_boundary.points.push(p);
                    set.spatial_boundary.weights.push(w);
                }
            }
            DirectionSpec::Angular => {
                // wall pick, wall position, theta, phi; phi is drawn directly
                // from the inflow half-circle of the chosen wall (clamped a
                // hair inside to keep off grazing directions)
                let unit = unit_points(4, counts.n_sb, strategy, &mut rng)?;
                let pi = std::f64::consts::PI;
                let ang_measure = (angular_range[1] - angular_range[0]) * pi;
                let w = total * ang_measure / counts.n_sb as f64;
                for u in unit {
                    let pick = u[0] * total;
                    let mut acc = 0.0;
                    let mut chosen = walls[walls.len() - 1];
                    for &wall in &walls {
                        acc += wall.2;
                        if pick <= acc {
                            chosen = wall;
                            break;
                        }
                    }
                    let (axis, at, _) = chosen;
                    let mut spatial = vec![0.0; case.spatial_dim];
                    spatial[axis] = at;
                    if case.spatial_dim == 2 {
                        let other = 1 - axis;
                        let [lo, hi] = case.bounds[other];
                        spatial[other] = lo + u[1] * (hi - lo);
                    }
                    let theta = angular_range[0] + u[2] * (angular_range[1] - angular_range[0]);
                    let low_wall = (at - case.bounds[axis][0]).abs() < 1e-12;
                    let frac = u[3].clamp(1e-9, 1.0 - 1e-9);
                    // inflow half-circles: omega_x > 0 <=> phi in (-pi/2, pi/2),
                    // omega_y > 0 <=> phi in (0, pi)
                    let phi = match (axis, low_wall) {
                        (0, true) => -0.5 * pi + frac * pi,
                        (0, false) => 0.5 * pi + frac * pi,
                        (_, true) => frac * pi,
                        (_, false) => pi + frac * pi,
                    }
                    .rem_euclid(two_pi);
                    let mut p = spatial;
                    p.push(theta);
                    p.push(phi);
                    set.spatial_boundary.values.push((case.boundary)(&p));
                    set.spatial_boundary.points.push(p);
                    set.spatial_boundary.weights.push(w);
                }
            }
        }
    }

    // temporal family at t = 0
    if counts.n_tb > 0 {
        let initial = case
            .initial
            .as_ref()
            .ok_or_else(|| Error::Config("transient case without initial data".into()))?;
        let mut ranges: Vec<[f64; 2]> = case.bounds.clone();
        if case.has_angular_inputs() {
            ranges.push(angular_range);
            ranges.push([0.0, two_pi]);
        }
        let unit = unit_points(ranges.len(), counts.n_tb, strategy, &mut rng)?;
        let measure: f64 = ranges.iter().map(|r| r[1] - r[0]).product();
        let w = measure / counts.n_tb as f64;
        for u in unit {
            let mut p = vec![0.0];
            p.extend(
                u.iter()
                    .zip(&ranges)
                    .map(|(&t, r)| r[0] + t * (r[1] - r[0])),
            );
            set.temporal_boundary.values.push(initial(&p));
            set.temporal_boundary.points.push(p);
            set.temporal_boundary.weights.push(w);
        }
    }

    // data family: noiseless samples of the exact solution inside D'
    if counts.n_d > 0 {
        let region = case.inverse_region.as_ref().expect("checked above");
        let exact = case
            .exact
            .as_ref()
            .ok_or_else(|| Error::Usage("data sampling needs an exact solution".into()))?;
        let unit = unit_points(region.len(), counts.n_d, strategy, &mut rng)?;
        let measure: f64 = region.iter().map(|r| r[1] - r[0]).product();
        let w = measure / counts.n_d as f64;
        for u in unit {
            let p: Vec<f64> = u
                .iter()
                .zip(region)
                .map(|(&t, r)| r[0] + t * (r[1] - r[0]))
                .collect();
            set.data.values.push(exact.value(&p));
            set.data.points.push(p);
            set.data.weights.push(w);
        }
    }

    Ok(set)
}

impl TrainingSet {
    /// Render as `kind,<coords>,weight` CSV for inspection.
    pub fn to_csv(&self, case: &CaseSpec) -> String {
        let mut header = vec!["kind".to_string()];
        if !case.steady {
            header.push("t".into());
        }
        header.push("x".into());
        if case.spatial_dim == 2 {
            header.push("y".into());
        }
        if case.has_angular_inputs() {
            header.push("theta".into());
            header.push("phi".into());
        }
        header.push("weight".into());
        let mut out = header.join(",");
        out.push('\n');
        let mut write_family = |kind: &str, fam: &FamilyPoints| {
            for (p, w) in fam.points.iter().zip(&fam.weights) {
                out.push_str(kind);
                for c in p {
                    out.push_str(&format!(",{c:.16e}"));
                }
                out.push_str(&format!(",{w:.16e}\n"));
            }
        };
        write_family("interior", &self.interior);
        write_family("spatial-boundary", &self.spatial_boundary);
        write_family("temporal-boundary", &self.temporal_boundary);
        write_family("data", &self.data);
        out
    }

    pub fn write_csv(&self, case: &CaseSpec, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_csv(case))?;
        Ok(())
    }
}
