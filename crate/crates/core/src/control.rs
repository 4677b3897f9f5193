//! Conductivity fields, the Steklov discretization and multilinear
//! interpolation maps, and the discrete admissible set.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{EitError, Result};
use crate::geometry::{cell_region_quadrature, DomainKind, DomainSpec, Point};
use crate::lattice::{corner_offsets, discrete_norm_sq, mixed_difference, tilde_h1_inner, GridFunction, Lattice, NormKind};
use crate::quadrature::gauss_interval;

/// Gauss points per axis on each Steklov sub-interval.
pub const STEKLOV_ORDER: usize = 4;
/// Sub-intervals per axis and cell for smooth analytic fields.
pub const STEKLOV_SPLITS: usize = 4;

/// Gaussian inclusion `amplitude · exp(−|x − center|² / radius²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: Point,
    pub radius: f64,
    pub amplitude: f64,
}

impl Bump {
    fn profile(&self, x: &Point, dim: usize) -> f64 {
        let mut d2 = 0.0;
        for i in 0..dim {
            let d = x[i] - self.center[i];
            d2 += d * d;
        }
        self.amplitude * (-d2 / (self.radius * self.radius)).exp()
    }
}

/// Constant background plus smooth bumps.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub background: f64,
    pub bumps: Vec<Bump>,
}

impl Phantom {
    pub fn new(background: f64, bumps: Vec<Bump>) -> Result<Self> {
        if !(background.is_finite() && background > 0.0) {
            return Err(EitError::InvalidParameter(format!("background conductivity must be positive, got {background}")));
        }
        for b in &bumps {
            if !(b.radius > 0.0 && b.amplitude.is_finite()) {
                return Err(EitError::InvalidParameter("bump radius must be positive".into()));
            }
        }
        Ok(Self { background, bumps })
    }

    /// Single bump centred in the domain.
    pub fn bump(spec: &DomainSpec, background: f64, radius: f64, amplitude: f64) -> Result<Self> {
        let c = domain_centre(spec);
        Self::new(background, vec![Bump { center: c, radius, amplitude }])
    }

    /// One conductive and one resistive inclusion on opposite sides of the
    /// centre.
    pub fn two_bumps(spec: &DomainSpec, background: f64) -> Result<Self> {
        let (lo, hi) = spec.bounding_box();
        let n = spec.dim();
        let c = domain_centre(spec);
        let ext = (hi[0] - lo[0]).min(hi[1] - lo[1]);
        let mut a = c;
        let mut b = c;
        a[0] -= 0.2 * (hi[0] - lo[0]);
        b[0] += 0.2 * (hi[0] - lo[0]);
        a[1] -= 0.1 * (hi[1] - lo[1]);
        b[1] += 0.1 * (hi[1] - lo[1]);
        if n == 3 {
            a[2] -= 0.1 * (hi[2] - lo[2]);
            b[2] += 0.1 * (hi[2] - lo[2]);
        }
        Self::new(
            background,
            vec![
                Bump { center: a, radius: 0.15 * ext, amplitude: 0.8 * background },
                Bump { center: b, radius: 0.15 * ext, amplitude: -0.4 * background },
            ],
        )
    }

    pub fn value(&self, x: &Point, dim: usize) -> f64 {
        self.background + self.bumps.iter().map(|b| b.profile(x, dim)).sum::<f64>()
    }

    /// ∂^|axes| σ / ∂x_{a1}…∂x_{ak} for distinct axes.
    pub fn mixed_derivative(&self, x: &Point, dim: usize, axes: &[usize]) -> f64 {
        if axes.is_empty() {
            return self.value(x, dim);
        }
        let mut s = 0.0;
        for b in &self.bumps {
            let r2 = b.radius * b.radius;
            let mut f = b.profile(x, dim);
            for &i in axes {
                f *= -2.0 * (x[i] - b.center[i]) / r2;
            }
            s += f;
        }
        s
    }

    /// Lower bound of the field on all of space.
    pub fn lower_bound(&self) -> f64 {
        self.background + self.bumps.iter().map(|b| b.amplitude.min(0.0)).sum::<f64>()
    }
}

fn domain_centre(spec: &DomainSpec) -> Point {
    let (lo, hi) = spec.bounding_box();
    let mut c = [0.0; 3];
    for i in 0..spec.dim() {
        c[i] = 0.5 * (lo[i] + hi[i]);
    }
    c
}

/// Conductivity on Q, extended beyond Q̄ by the nearest-point clamp.
#[derive(Clone)]
pub enum ConductivityField {
    Constant(f64),
    Phantom(Phantom),
    FineGrid(GridFunction),
}

impl fmt::Debug for ConductivityField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::Phantom(p) => write!(f, "{p:?}"),
            Self::FineGrid(g) => write!(f, "FineGrid({g:?})"),
        }
    }
}

impl ConductivityField {
    pub fn value(&self, spec: &DomainSpec, x: &Point) -> Result<f64> {
        let y = spec.clamp(x);
        match self {
            Self::Constant(c) => Ok(*c),
            Self::Phantom(p) => Ok(p.value(&y, spec.dim())),
            Self::FineGrid(g) => multilinear_interpolate(g, &y),
        }
    }

    /// Minimum over the sampled values (exact for constants, a bound for
    /// phantoms).
    pub fn lower_bound(&self) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Phantom(p) => p.lower_bound(),
            Self::FineGrid(g) => g.values().iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

fn axis_breaks(a: f64, b: f64, extra: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v = vec![a, b];
    let tol = 1e-12 * (b - a);
    for x in extra {
        if x > a + tol && x < b - tol {
            v.push(x);
        }
    }
    v.sort_by(|p, q| p.partial_cmp(q).unwrap());
    v
}

/// Steklov average of `field` over the cell with natural corner `x`.
fn steklov_cell(field: &ConductivityField, spec: &DomainSpec, x: &Point, h: f64) -> Result<f64> {
    if let ConductivityField::Constant(c) = field {
        return Ok(*c);
    }
    let n = spec.dim();
    let planes: [Vec<f64>; 3] = match spec.kind() {
        DomainKind::Disk2D { .. } => Default::default(),
        _ => {
            let w = spec.widths().unwrap();
            [vec![0.0, w[0]], vec![0.0, w[1]], vec![0.0, w[2]]]
        }
    };
    let fine_h = match field {
        ConductivityField::FineGrid(g) => Some(g.lattice().h()),
        _ => None,
    };
    // per-axis 1D rules on [x_i, x_i + h]
    let mut rules: Vec<Vec<(f64, f64)>> = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = (x[i], x[i] + h);
        let fine_lines: Vec<f64> = match fine_h {
            Some(fh) => {
                let k0 = (a / fh).floor() as i64;
                let k1 = (b / fh).ceil() as i64;
                (k0..=k1).map(|k| k as f64 * fh).collect()
            }
            None => Vec::new(),
        };
        let br = axis_breaks(a, b, planes[i].iter().copied().chain(fine_lines));
        let mut rule = Vec::new();
        for w in br.windows(2) {
            match (fine_h, spec.kind()) {
                // multilinear on each piece: the centre value is the mean
                (Some(_), DomainKind::Rect2D { .. } | DomainKind::Box3D { .. }) => {
                    rule.push((0.5 * (w[0] + w[1]), w[1] - w[0]));
                }
                _ => {
                    for k in 0..STEKLOV_SPLITS {
                        let pa = w[0] + (w[1] - w[0]) * k as f64 / STEKLOV_SPLITS as f64;
                        let pb = w[0] + (w[1] - w[0]) * (k + 1) as f64 / STEKLOV_SPLITS as f64;
                        rule.extend(gauss_interval(pa, pb, STEKLOV_ORDER));
                    }
                }
            }
        }
        rules.push(rule);
    }
    let mut acc = 0.0;
    let mut idx = vec![0usize; n];
    'outer: loop {
        let mut p = [0.0; 3];
        let mut w = 1.0;
        for i in 0..n {
            let (xi, wi) = rules[i][idx[i]];
            p[i] = xi;
            w *= wi;
        }
        acc += w * field.value(spec, &p)?;
        for i in (0..n).rev() {
            idx[i] += 1;
            if idx[i] < rules[i].len() {
                continue 'outer;
            }
            idx[i] = 0;
        }
        break;
    }
    Ok(acc / h.powi(n as i32))
}

/// The map 𝒬_h: σ_α = h⁻ⁿ ∫_{C_h^α} σ for every lattice node.
pub fn steklov_discretize(field: &ConductivityField, lat: &Arc<Lattice>) -> Result<GridFunction> {
    let spec = *lat.spec();
    let h = lat.h();
    let values = (0..lat.num_nodes())
        .into_par_iter()
        .map(|id| steklov_cell(field, &spec, &lat.node_point(id), h))
        .collect::<Result<Vec<f64>>>()?;
    GridFunction::new(lat.clone(), values)
}

/// Coefficients of the multilinear interpolant on the cell with corner
/// `id`, in the difference form: entry `mask` multiplies
/// Π_{i ∈ mask} (x_i − x_{αi}).
pub fn cell_coefficients(sigma: &GridFunction, id: usize) -> Result<Vec<f64>> {
    let n = sigma.lattice().dim();
    let mut out = vec![0.0; 1 << n];
    for (mask, c) in out.iter_mut().enumerate() {
        let axes: Vec<usize> = (0..n).filter(|i| (mask >> i) & 1 == 1).collect();
        *c = if axes.is_empty() { sigma.values()[id] } else { mixed_difference(sigma, id, &axes)? };
    }
    Ok(out)
}

/// ∂_D of the cell polynomial at local offsets `t` (D given as a mask).
pub(crate) fn eval_coefficients(coef: &[f64], t: &[f64; 3], deriv: usize) -> f64 {
    let mut s = 0.0;
    for (mask, c) in coef.iter().enumerate() {
        if mask & deriv != deriv {
            continue;
        }
        let mut term = *c;
        let rest = mask & !deriv;
        for (i, ti) in t.iter().enumerate() {
            if (rest >> i) & 1 == 1 {
                term *= ti;
            }
        }
        s += term;
    }
    s
}

/// The map 𝒫_h evaluated at `x ∈ Q_h`.
pub fn multilinear_interpolate(sigma: &GridFunction, x: &Point) -> Result<f64> {
    let lat = sigma.lattice();
    let (id, t) = lat.locate(x).ok_or(EitError::PointOutsideLattice { point: *x })?;
    for s in corner_offsets(lat.dim()) {
        if lat.corner_node(id, &s).is_none() {
            return Err(EitError::PointOutsideLattice { point: *x });
        }
    }
    let coef = cell_coefficients(sigma, id)?;
    let h = lat.h();
    Ok(eval_coefficients(&coef, &[t[0] * h, t[1] * h, t[2] * h], 0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// The domain Q itself.
    Domain,
    /// The lattice approximation Q_h.
    Lattice,
}

/// Quadrature on one cell of Q_h restricted to `region`, exact for the
/// polynomials arising from multilinear interpolants on boxes.
fn region_rule(lat: &Lattice, id: usize, region: Region, order: usize) -> Vec<(Point, f64)> {
    let cell = lat.cell(id);
    let n = lat.dim();
    match region {
        Region::Lattice => {
            let mut hi = cell.corner;
            for v in hi.iter_mut().take(n) {
                *v += cell.side;
            }
            crate::quadrature::gauss_box(&cell.corner, &hi, n, order)
        }
        Region::Domain => cell_region_quadrature(lat.spec(), &cell, order),
    }
}

/// ‖𝒫_h σ_h‖_{H̃¹(region)}: every mixed derivative of the interpolant
/// integrated cell by cell.
pub fn tilde_h1_norm_continuous(sigma: &GridFunction, region: Region) -> Result<f64> {
    let lat = sigma.lattice();
    let n = lat.dim();
    let order = match (region, lat.spec().kind()) {
        (Region::Domain, DomainKind::Disk2D { .. }) => 4,
        _ => 2,
    };
    let parts = lat
        .cell_corners()
        .par_iter()
        .map(|&id| -> Result<f64> {
            let coef = cell_coefficients(sigma, id)?;
            let base = lat.node_point(id);
            let mut s = 0.0;
            for (p, w) in region_rule(lat, id, region, order) {
                let t = [p[0] - base[0], p[1] - base[1], p[2] - base[2]];
                for deriv in 0..(1usize << n) {
                    let d = eval_coefficients(&coef, &t, deriv);
                    s += w * d * d;
                }
            }
            Ok(s)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(parts.iter().sum::<f64>().sqrt())
}

/// ‖𝒫_h σ_h − σ‖_{L₂(Q)}.
pub fn interpolation_error_l2(sigma: &GridFunction, field: &ConductivityField) -> Result<f64> {
    let lat = sigma.lattice();
    let spec = *lat.spec();
    let parts = lat
        .cell_corners()
        .par_iter()
        .map(|&id| -> Result<f64> {
            let coef = cell_coefficients(sigma, id)?;
            let base = lat.node_point(id);
            let mut s = 0.0;
            for (p, w) in cell_region_quadrature(&spec, &lat.cell(id), 6) {
                let t = [p[0] - base[0], p[1] - base[1], p[2] - base[2]];
                let d = eval_coefficients(&coef, &t, 0) - field.value(&spec, &p)?;
                s += w * d * d;
            }
            Ok(s)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(parts.iter().sum::<f64>().sqrt())
}

/// Σ_{α ∈ Q_h⁺} hⁿ |σ_{α x_{a1}…x_{ak}}|².
pub fn discrete_mixed_sum(sigma: &GridFunction, axes: &[usize]) -> Result<f64> {
    let lat = sigma.lattice();
    let hn = lat.cell_volume();
    let mut s = 0.0;
    for &id in lat.cell_corners() {
        let d = mixed_difference(sigma, id, axes)?;
        s += hn * d * d;
    }
    Ok(s)
}

/// ‖∂_{axes} σ‖²_{L₂(Q)} for an analytic phantom, by composite Gauss on the
/// cells of `lat`.
pub fn phantom_mixed_norm_sq(phantom: &Phantom, lat: &Lattice, axes: &[usize]) -> f64 {
    let spec = *lat.spec();
    let n = lat.dim();
    lat.cell_corners()
        .par_iter()
        .map(|&id| {
            cell_region_quadrature(&spec, &lat.cell(id), 6)
                .iter()
                .map(|(p, w)| {
                    let d = phantom.mixed_derivative(p, n, axes);
                    w * d * d
                })
                .sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissibilityParams {
    pub radius: f64,
    pub sigma_floor: f64,
    pub beta: f64,
}

impl AdmissibilityParams {
    pub fn new(radius: f64, sigma_floor: f64, beta: f64) -> Result<Self> {
        for (name, v) in [("R", radius), ("sigma0", sigma_floor), ("beta", beta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(EitError::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self { radius, sigma_floor, beta })
    }
}

/// Nodal conductivities and electrode voltages.
#[derive(Debug, Clone)]
pub struct DiscreteControl {
    pub sigma: GridFunction,
    pub voltages: Vec<f64>,
}

pub const GROUNDING_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    Grounding,
    Norm,
    Floor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub feasible: bool,
    pub slack: f64,
    pub violated: Vec<Violation>,
}

impl DiscreteControl {
    pub fn new(sigma: GridFunction, voltages: Vec<f64>) -> Result<Self> {
        let m = sigma.lattice().num_electrodes();
        if voltages.len() != m {
            return Err(EitError::DimensionMismatch(format!("{} voltages for {m} electrodes", voltages.len())));
        }
        Ok(Self { sigma, voltages })
    }

    /// ‖[σ]_h‖²_{H̃¹(Q_h)} + |U|².
    pub fn norm_sq(&self) -> f64 {
        discrete_norm_sq(&self.sigma, NormKind::TildeH1) + self.voltages.iter().map(|u| u * u).sum::<f64>()
    }
}

pub fn check_discrete_admissible(c: &DiscreteControl, p: &AdmissibilityParams) -> AdmissibilityReport {
    let mut violated = Vec::new();
    let sum: f64 = c.voltages.iter().sum();
    if sum.abs() > GROUNDING_TOL {
        violated.push(Violation::Grounding);
    }
    let slack = p.radius * p.radius - c.norm_sq();
    if slack < 0.0 {
        violated.push(Violation::Norm);
    }
    if c.sigma.values().iter().any(|&s| !(s >= p.sigma_floor)) {
        violated.push(Violation::Floor);
    }
    AdmissibilityReport { feasible: violated.is_empty(), slack, violated }
}

/// Maps a control into the discrete admissible set: centre the voltages,
/// lift σ to the floor, then shrink toward the constant-floor control until
/// the norm budget holds. Each step only acts when its condition fails.
pub fn restore_feasibility(c: &DiscreteControl, p: &AdmissibilityParams) -> Result<DiscreteControl> {
    let lat = c.sigma.lattice().clone();
    let s0 = p.sigma_floor;
    let r2 = p.radius * p.radius;
    let base = GridFunction::constant(lat.clone(), s0);
    let base_sq = discrete_norm_sq(&base, NormKind::TildeH1);
    if base_sq > r2 {
        return Err(EitError::InfeasibleBase { base: base_sq, budget: r2 });
    }

    let mut u = c.voltages.clone();
    let sum: f64 = u.iter().sum();
    if sum.abs() > GROUNDING_TOL {
        let mean = sum / u.len() as f64;
        for v in &mut u {
            *v -= mean;
        }
    }
    let sigma: Vec<f64> = c.sigma.values().iter().map(|&s| if s >= s0 { s } else { s0 }).collect();
    let sigma = GridFunction::new(lat.clone(), sigma)?;
    let out = DiscreteControl { sigma, voltages: u };
    if out.norm_sq() <= r2 {
        return Ok(out);
    }

    // N(t) = |base + t d|² + t²|U|² is a quadratic in t
    let d = GridFunction::new(lat.clone(), out.sigma.values().iter().map(|s| s - s0).collect())?;
    let qa = tilde_h1_inner(&d, &d) + out.voltages.iter().map(|v| v * v).sum::<f64>();
    let qb = tilde_h1_inner(&base, &d);
    let norm_at = |t: f64| base_sq + 2.0 * t * qb + t * t * qa;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if norm_at(mid) <= r2 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let build = |t: f64| -> Result<DiscreteControl> {
        let sigma = d.values().iter().map(|dv| s0 + t * dv).collect();
        Ok(DiscreteControl {
            sigma: GridFunction::new(lat.clone(), sigma)?,
            voltages: out.voltages.iter().map(|v| t * v).collect(),
        })
    };
    let mut t = lo;
    let mut res = build(t)?;
    while res.norm_sq() > r2 && t > 0.0 {
        t = (t - 1e-12).max(0.0);
        res = build(t)?;
    }
    Ok(res)
}


/// A random admissible control: σ uniform in [σ₀, σ₀ + spread], U uniform
/// in [−1, 1] and recentred, then mapped into the admissible set.
pub fn random_admissible<R: Rng>(
    lat: &Arc<Lattice>,
    p: &AdmissibilityParams,
    spread: f64,
    rng: &mut R,
) -> Result<DiscreteControl> {
    let sigma: Vec<f64> = (0..lat.num_nodes()).map(|_| p.sigma_floor + spread * rng.gen::<f64>()).collect();
    let mut u: Vec<f64> = (0..lat.num_electrodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mean = u.iter().sum::<f64>() / u.len() as f64;
    u.iter_mut().for_each(|v| *v -= mean);
    restore_feasibility(&DiscreteControl::new(GridFunction::new(lat.clone(), sigma)?, u)?, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Electrode;
    use crate::lattice::build_lattice;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(h: f64) -> Arc<Lattice> {
        let spec = DomainSpec::rect(1.0, 1.0).unwrap();
        let e = vec![Electrode::on_edge(0, false, 0.25, 0.75, 1.0), Electrode::on_edge(0, true, 0.25, 0.75, 1.0)];
        Arc::new(build_lattice(&spec, &e, h).unwrap())
    }

    fn cube(h: f64) -> Arc<Lattice> {
        let spec = DomainSpec::cuboid(1.0, 1.0, 1.0).unwrap();
        let e = vec![Electrode::on_face(0, false, [0.25, 0.25], [0.75, 0.75], 1.0)];
        Arc::new(build_lattice(&spec, &e, h).unwrap())
    }

    fn test_bump() -> Phantom {
        Phantom::new(1.0, vec![Bump { center: [0.4, 0.55, 0.0], radius: 0.2, amplitude: 0.7 }]).unwrap()
    }

    /// Adaptive Simpson on [a, b].
    fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 40)
    }

    #[test]
    fn steklov_of_constant_and_linear() {
        let lat = square(0.125);
        let c = steklov_discretize(&ConductivityField::Constant(2.5), &lat).unwrap();
        assert!(c.values().iter().all(|&v| v == 2.5));
        // x1 itself as a fine grid function: exact averages inside Q
        let fine = square(0.0625);
        let x1 = GridFunction::from_fn(fine.clone(), |p| p[0]);
        let s = steklov_discretize(&ConductivityField::FineGrid(x1), &lat).unwrap();
        for id in 0..lat.num_nodes() {
            let k = lat.node(id).0[0];
            if k < 8 {
                let want = k as f64 * 0.125 + 0.0625;
                assert!((s.values()[id] - want).abs() < 1e-14, "{} vs {want}", s.values()[id]);
            } else {
                // the clamp extension freezes x1 at 1 beyond the boundary
                assert!((s.values()[id] - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn steklov_bump_matches_adaptive_oracle() {
        let lat = square(0.125);
        let ph = test_bump();
        let s = steklov_discretize(&ConductivityField::Phantom(ph.clone()), &lat).unwrap();
        let spec = *lat.spec();
        let h = 0.125;
        for id in 0..lat.num_nodes() {
            let x = lat.node_point(id);
            let inner = |y: f64| {
                adaptive(&|t: f64| ph.value(&spec.clamp(&[t, y, 0.0]), 2), x[0], x[0] + h, 1e-15)
            };
            let want = adaptive(&inner, x[1], x[1] + h, 1e-14) / (h * h);
            assert!((s.values()[id] - want).abs() < 1e-10, "node {id}: {} vs {want}", s.values()[id]);
        }
    }

    #[test]
    fn interpolation_examples() {
        let lat = square(0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = GridFunction::new(lat.clone(), (0..lat.num_nodes()).map(|_| rng.gen_range(1.0..2.0)).collect()).unwrap();
        for id in 0..lat.num_nodes() {
            let v = multilinear_interpolate(&g, &lat.node_point(id)).unwrap();
            assert!((v - g.values()[id]).abs() < 1e-14);
        }
        let id = lat.node_id(&crate::lattice::MultiIndex([1, 2, 0])).unwrap();
        let mean: f64 = corner_offsets(2).iter().map(|s| g.values()[lat.corner_node(id, s).unwrap()]).sum::<f64>() / 4.0;
        let v = multilinear_interpolate(&g, &[0.375, 0.625, 0.0]).unwrap();
        assert!((v - mean).abs() < 1e-14);
        assert!(matches!(multilinear_interpolate(&g, &[1.5, 0.5, 0.0]), Err(EitError::PointOutsideLattice { .. })));

        let lat3 = cube(0.25);
        let f = GridFunction::from_fn(lat3.clone(), |p| p[0] * p[1] * p[2]);
        for x in [[0.1, 0.7, 0.33], [0.99, 0.01, 0.5], [0.6, 0.6, 0.6]] {
            let v = multilinear_interpolate(&f, &x).unwrap();
            assert!((v - x[0] * x[1] * x[2]).abs() < 1e-14);
        }
    }

    #[test]
    fn continuous_norm_examples() {
        let lat = square(0.25);
        let c = GridFunction::constant(lat.clone(), 3.0);
        assert!((tilde_h1_norm_continuous(&c, Region::Domain).unwrap() - 3.0).abs() < 1e-13);
        let x1 = GridFunction::from_fn(lat.clone(), |p| p[0]);
        let want = (1.0f64 / 3.0 + 1.0).sqrt();
        assert!((tilde_h1_norm_continuous(&x1, Region::Domain).unwrap() - want).abs() < 1e-13);
    }

    #[test]
    fn continuous_norm_matches_composite_quadrature() {
        let lat = square(0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = GridFunction::new(lat.clone(), (0..lat.num_nodes()).map(|_| rng.gen_range(1.0..2.0)).collect()).unwrap();
        // oracle: 6-point Gauss on each quarter of each cell, derivatives by
        // central differences of the pointwise interpolant (exact for
        // polynomials of this degree, so a wide step only avoids rounding)
        let eps = 1e-2;
        let f = |x: f64, y: f64| multilinear_interpolate(&g, &[x, y, 0.0]).unwrap();
        let mut s = 0.0;
        for &id in lat.cell_corners() {
            let b = lat.node_point(id);
            for qx in 0..2 {
                for qy in 0..2 {
                    let (x0, y0) = (b[0] + qx as f64 * 0.125, b[1] + qy as f64 * 0.125);
                    for (x, wx) in gauss_interval(x0, x0 + 0.125, 6) {
                        for (y, wy) in gauss_interval(y0, y0 + 0.125, 6) {
                            let cx = x.clamp(b[0] + eps, b[0] + 0.25 - eps);
                            let cy = y.clamp(b[1] + eps, b[1] + 0.25 - eps);
                            let v = f(x, y);
                            let dx = (f(cx + eps, y) - f(cx - eps, y)) / (2.0 * eps);
                            let dy = (f(x, cy + eps) - f(x, cy - eps)) / (2.0 * eps);
                            let dxy = (f(cx + eps, cy + eps) - f(cx + eps, cy - eps) - f(cx - eps, cy + eps)
                                + f(cx - eps, cy - eps))
                                / (4.0 * eps * eps);
                            s += wx * wy * (v * v + dx * dx + dy * dy + dxy * dxy);
                        }
                    }
                }
            }
        }
        let got = tilde_h1_norm_continuous(&g, Region::Domain).unwrap();
        assert!((got - s.sqrt()).abs() < 1e-10, "{got} vs {}", s.sqrt());
        let lat_region = tilde_h1_norm_continuous(&g, Region::Lattice).unwrap();
        assert!((lat_region - got).abs() < 1e-13);
    }

    #[test]
    fn continuous_norm_exact_against_closed_form_cells() {
        // per cell, ∫ of the bilinear square has a closed form in the
        // corner values; compare to the tensor-Gauss evaluation
        let lat = square(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = GridFunction::new(lat.clone(), (0..9).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let h = 0.5f64;
        let mut s = 0.0;
        for &id in lat.cell_corners() {
            let v = |a: i64, b: i64| g.values()[lat.corner_node(id, &[a, b, 0]).unwrap()];
            let (a, b, c, d) = (v(0, 0), v(1, 0), v(0, 1), v(1, 1));
            // bilinear mass matrix (h²/36)[4 2 2 1; …]
            let vals = [a, b, c, d];
            let m = [[4.0, 2.0, 2.0, 1.0], [2.0, 4.0, 1.0, 2.0], [2.0, 1.0, 4.0, 2.0], [1.0, 2.0, 2.0, 4.0]];
            for i in 0..4 {
                for j in 0..4 {
                    s += h * h / 36.0 * m[i][j] * vals[i] * vals[j];
                }
            }
            // ∂x: linear in y between (b−a)/h and (d−c)/h
            let (p, q) = ((b - a) / h, (d - c) / h);
            s += h * h * (p * p + p * q + q * q) / 3.0;
            let (p, q) = ((c - a) / h, (d - b) / h);
            s += h * h * (p * p + p * q + q * q) / 3.0;
            let dxy = (d - b - c + a) / (h * h);
            s += h * h * dxy * dxy;
        }
        let got = tilde_h1_norm_continuous(&g, Region::Lattice).unwrap();
        assert!((got - s.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn admissibility_examples() {
        let lat = square(0.5);
        let p = AdmissibilityParams::new(10.0, 1.0, 1.0).unwrap();
        let c = DiscreteControl::new(GridFunction::constant(lat.clone(), 1.0), vec![0.1, -0.1]).unwrap();
        let r = check_discrete_admissible(&c, &p);
        assert!(r.feasible);
        assert!((r.slack - 97.73).abs() < 1e-12);
        let bad = DiscreteControl::new(GridFunction::constant(lat.clone(), 1.0), vec![1.0, 1.0]).unwrap();
        assert_eq!(check_discrete_admissible(&bad, &p).violated, vec![Violation::Grounding]);
        let mut low = GridFunction::constant(lat.clone(), 1.0);
        low.values_mut()[4] = 0.5;
        let low = DiscreteControl::new(low, vec![0.0, 0.0]).unwrap();
        assert_eq!(check_discrete_admissible(&low, &p).violated, vec![Violation::Floor]);
    }

    #[test]
    fn restore_examples() {
        let lat = square(0.5);
        let p = AdmissibilityParams::new(10.0, 1.0, 1.0).unwrap();
        let c = DiscreteControl::new(GridFunction::constant(lat.clone(), 1.2), vec![0.1, -0.1]).unwrap();
        let r = restore_feasibility(&c, &p).unwrap();
        assert_eq!(r.sigma.values(), c.sigma.values());
        assert_eq!(r.voltages, c.voltages);
        let c = DiscreteControl::new(GridFunction::constant(lat.clone(), 1.0), vec![1.0, 1.0]).unwrap();
        assert_eq!(restore_feasibility(&c, &p).unwrap().voltages, vec![0.0, 0.0]);
        let tight = AdmissibilityParams::new(1.0, 1.0, 1.0).unwrap();
        assert!(matches!(restore_feasibility(&c, &tight), Err(EitError::InfeasibleBase { .. })));
    }

    #[test]
    fn restore_hits_budget_boundary() {
        let lat = square(0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let g = GridFunction::new(lat.clone(), (0..lat.num_nodes()).map(|_| rng.gen_range(1.0..3.0)).collect()).unwrap();
        let c = DiscreteControl::new(g, vec![0.5, -0.5]).unwrap();
        let r2 = c.norm_sq() / 2.0;
        let p = AdmissibilityParams::new(r2.sqrt(), 1.0, 1.0).unwrap();
        let out = restore_feasibility(&c, &p).unwrap();
        let rep = check_discrete_admissible(&out, &p);
        assert!(rep.feasible);
        assert!((out.norm_sq() - r2).abs() < 1e-10 * r2);
    }

    #[test]
    fn composition_error_decreases() {
        let ph = ConductivityField::Phantom(test_bump());
        let mut prev = f64::INFINITY;
        for h in [0.125, 0.0625, 0.03125, 0.015625] {
            let lat = square(h);
            let s = steklov_discretize(&ph, &lat).unwrap();
            let e = interpolation_error_l2(&s, &ph).unwrap();
            assert!(e < prev, "h={h}: {e} >= {prev}");
            prev = e;
        }
    }

    #[test]
    fn mixed_difference_bounded_by_derivative_norm() {
        let ph = test_bump();
        let field = ConductivityField::Phantom(ph.clone());
        for h in [0.125, 0.0625] {
            let lat = square(h);
            let s = steklov_discretize(&field, &lat).unwrap();
            let lhs = discrete_mixed_sum(&s, &[0, 1]).unwrap();
            let rhs = phantom_mixed_norm_sq(&ph, &lat, &[0, 1]);
            assert!(lhs <= 1.05 * rhs, "h={h}: {lhs} vs {rhs}");
        }
        let lat = cube(0.125);
        let ph3 = Phantom::bump(lat.spec(), 1.0, 0.3, 0.5).unwrap();
        let s = steklov_discretize(&ConductivityField::Phantom(ph3.clone()), &lat).unwrap();
        let lhs = discrete_mixed_sum(&s, &[0, 1, 2]).unwrap();
        let rhs = phantom_mixed_norm_sq(&ph3, &lat, &[0, 1, 2]);
        assert!(lhs <= 1.05 * rhs, "{lhs} vs {rhs}");
    }

    #[test]
    fn phantom_derivatives_match_differences() {
        let ph = Phantom::two_bumps(&DomainSpec::cuboid(1.0, 1.0, 1.0).unwrap(), 1.0).unwrap();
        let x = [0.37, 0.41, 0.52];
        let e = 1e-4;
        let f = |dx: f64, dy: f64, dz: f64| ph.value(&[x[0] + dx, x[1] + dy, x[2] + dz], 3);
        let d1 = (f(e, 0.0, 0.0) - f(-e, 0.0, 0.0)) / (2.0 * e);
        assert!((d1 - ph.mixed_derivative(&x, 3, &[0])).abs() < 1e-6);
        let d12 = (f(e, e, 0.0) - f(e, -e, 0.0) - f(-e, e, 0.0) + f(-e, -e, 0.0)) / (4.0 * e * e);
        assert!((d12 - ph.mixed_derivative(&x, 3, &[0, 1])).abs() < 1e-5);
        assert!(ph.lower_bound() > 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn restore_is_idempotent_and_feasible(seed in 0u64..10_000, scale in 0.1f64..10.0, shift in -3.0f64..3.0) {
                let lat = square(0.25);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let g = GridFunction::new(lat.clone(), (0..lat.num_nodes()).map(|_| shift + scale * rng.gen::<f64>()).collect()).unwrap();
                let u = vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
                let c = DiscreteControl::new(g, u).unwrap();
                let p = AdmissibilityParams::new(rng.gen_range(2.0..20.0), 0.5, 1.0).unwrap();
                match restore_feasibility(&c, &p) {
                    Ok(once) => {
                        prop_assert!(check_discrete_admissible(&once, &p).feasible);
                        let twice = restore_feasibility(&once, &p).unwrap();
                        prop_assert_eq!(twice.sigma.values(), once.sigma.values());
                        prop_assert_eq!(twice.voltages, once.voltages);
                    }
                    Err(EitError::InfeasibleBase { .. }) => {}
                    Err(e) => prop_assert!(false, "{e}"),
                }
            }

            #[test]
            fn steklov_respects_floor(amp in -0.5f64..2.0, cx in 0.0f64..1.0, cy in 0.0f64..1.0, rad in 0.05f64..0.5) {
                let lat = square(0.25);
                let ph = Phantom::new(1.0, vec![Bump { center: [cx, cy, 0.0], radius: rad, amplitude: amp }]).unwrap();
                let lb = ph.lower_bound();
                let s = steklov_discretize(&ConductivityField::Phantom(ph), &lat).unwrap();
                prop_assert!(s.values().iter().all(|&v| v >= lb - 1e-12));
            }
        }
    }
}
