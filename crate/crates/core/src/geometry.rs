//! Domain and electrode geometry.
//!
//! Rectangles and boxes have their lower corner at the origin; disks are
//! centred at the origin. All measures on flat faces are exact; arc measures
//! split the angle interval at every crossing with the cell walls so each
//! sub-arc is classified unambiguously.

use std::f64::consts::PI;

use crate::error::{EitError, Result};
use crate::quadrature::{gauss_box, gauss_interval};

pub type Point = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DomainKind {
    Rect2D { w1: f64, w2: f64 },
    Box3D { w1: f64, w2: f64, w3: f64 },
    Disk2D { r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    kind: DomainKind,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(EitError::InvalidDomain(format!("{name} must be positive and finite, got {v}")))
    }
}

impl DomainSpec {
    pub fn rect(w1: f64, w2: f64) -> Result<Self> {
        positive("w1", w1)?;
        positive("w2", w2)?;
        Ok(Self { kind: DomainKind::Rect2D { w1, w2 } })
    }

    pub fn cuboid(w1: f64, w2: f64, w3: f64) -> Result<Self> {
        positive("w1", w1)?;
        positive("w2", w2)?;
        positive("w3", w3)?;
        Ok(Self { kind: DomainKind::Box3D { w1, w2, w3 } })
    }

    pub fn disk(r: f64) -> Result<Self> {
        positive("r", r)?;
        Ok(Self { kind: DomainKind::Disk2D { r } })
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            DomainKind::Rect2D { .. } | DomainKind::Disk2D { .. } => 2,
            DomainKind::Box3D { .. } => 3,
        }
    }

    /// Side lengths for the box-shaped kinds.
    pub fn widths(&self) -> Option<[f64; 3]> {
        match self.kind {
            DomainKind::Rect2D { w1, w2 } => Some([w1, w2, 0.0]),
            DomainKind::Box3D { w1, w2, w3 } => Some([w1, w2, w3]),
            DomainKind::Disk2D { .. } => None,
        }
    }

    /// Axis-aligned bounding box of the closed domain.
    pub fn bounding_box(&self) -> (Point, Point) {
        match self.kind {
            DomainKind::Disk2D { r } => ([-r, -r, 0.0], [r, r, 0.0]),
            _ => ([0.0; 3], self.widths().unwrap()),
        }
    }

    pub fn contains_open(&self, x: &Point) -> bool {
        match self.kind {
            DomainKind::Disk2D { r } => x[0] * x[0] + x[1] * x[1] < r * r,
            _ => {
                let w = self.widths().unwrap();
                (0..self.dim()).all(|i| x[i] > 0.0 && x[i] < w[i])
            }
        }
    }

    /// Nearest point of the closed domain.
    pub fn clamp(&self, x: &Point) -> Point {
        match self.kind {
            DomainKind::Disk2D { r } => {
                let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
                if rho <= r {
                    *x
                } else {
                    [x[0] * r / rho, x[1] * r / rho, 0.0]
                }
            }
            _ => {
                let w = self.widths().unwrap();
                let mut y = *x;
                for i in 0..self.dim() {
                    y[i] = y[i].clamp(0.0, w[i]);
                }
                y
            }
        }
    }

    /// n-dimensional measure of Q.
    pub fn volume(&self) -> f64 {
        match self.kind {
            DomainKind::Rect2D { w1, w2 } => w1 * w2,
            DomainKind::Box3D { w1, w2, w3 } => w1 * w2 * w3,
            DomainKind::Disk2D { r } => PI * r * r,
        }
    }

    /// (n-1)-dimensional measure of the boundary.
    pub fn boundary_perimeter(&self) -> f64 {
        match self.kind {
            DomainKind::Rect2D { w1, w2 } => 2.0 * (w1 + w2),
            DomainKind::Box3D { w1, w2, w3 } => 2.0 * (w1 * w2 + w1 * w3 + w2 * w3),
            DomainKind::Disk2D { r } => 2.0 * PI * r,
        }
    }

    /// The whole boundary written as closed patches.
    pub fn boundary_patches(&self) -> Vec<Patch> {
        match self.kind {
            DomainKind::Disk2D { .. } => vec![Patch::Arc { theta0: 0.0, theta1: 2.0 * PI }],
            _ => {
                let n = self.dim();
                let w = self.widths().unwrap();
                let mut out = Vec::new();
                for axis in 0..n {
                    let tan = tangential_axes(n, axis);
                    let mut hi = [0.0; 2];
                    for (t, &a) in tan.iter().enumerate().take(n - 1) {
                        hi[t] = w[a];
                    }
                    for high in [false, true] {
                        out.push(Patch::Flat { face: Face { axis, high }, lo: [0.0; 2], hi });
                    }
                }
                out
            }
        }
    }
}

/// Closed axis-aligned cube `[corner, corner + side]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub corner: Point,
    pub side: f64,
}

impl Cell {
    pub fn new(corner: Point, side: f64) -> Self {
        Self { corner, side }
    }

    fn upper(&self, i: usize) -> f64 {
        self.corner[i] + self.side
    }

    fn contains(&self, x: &Point, dim: usize) -> bool {
        (0..dim).all(|i| x[i] >= self.corner[i] && x[i] <= self.upper(i))
    }
}

/// True iff the closed cell meets the open domain.
pub fn cell_intersects_domain(spec: &DomainSpec, cell: &Cell) -> bool {
    let n = spec.dim();
    match spec.kind {
        DomainKind::Disk2D { r } => {
            let mut d2 = 0.0;
            for i in 0..n {
                let c = 0.0f64.clamp(cell.corner[i], cell.upper(i));
                d2 += c * c;
            }
            d2 < r * r
        }
        _ => {
            let w = spec.widths().unwrap();
            (0..n).all(|i| cell.corner[i] < w[i] && cell.upper(i) > 0.0)
        }
    }
}

/// True iff the closed cell lies inside the open domain.
pub fn cell_inside_domain(spec: &DomainSpec, cell: &Cell) -> bool {
    let n = spec.dim();
    match spec.kind {
        DomainKind::Disk2D { r } => {
            let mut d2 = 0.0;
            for i in 0..n {
                let far = cell.corner[i].abs().max(cell.upper(i).abs());
                d2 += far * far;
            }
            d2 < r * r
        }
        _ => {
            let w = spec.widths().unwrap();
            (0..n).all(|i| cell.corner[i] > 0.0 && cell.upper(i) < w[i])
        }
    }
}

/// A face of a rectangle or box: the hyperplane `x[axis] = 0` or `x[axis] = w[axis]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Face {
    pub axis: usize,
    pub high: bool,
}

/// Axes spanning a face with normal `axis`, in increasing order.
pub fn tangential_axes(dim: usize, axis: usize) -> [usize; 2] {
    let mut out = [usize::MAX; 2];
    let mut k = 0;
    for a in 0..dim {
        if a != axis {
            out[k] = a;
            k += 1;
        }
    }
    out
}

/// Closed subset of the boundary carrying an electrode.
///
/// Flat patches give the parameter range along the tangential axes of
/// their face (only the first entry is used in 2D). Arc patches give a
/// counter-clockwise angle interval on the disk boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Patch {
    Flat { face: Face, lo: [f64; 2], hi: [f64; 2] },
    Arc { theta0: f64, theta1: f64 },
}

impl Patch {
    pub fn measure(&self, spec: &DomainSpec) -> f64 {
        match (*self, spec.kind) {
            (Patch::Arc { theta0, theta1 }, DomainKind::Disk2D { r }) => r * (theta1 - theta0),
            (Patch::Flat { lo, hi, .. }, _) => (0..spec.dim() - 1).map(|t| hi[t] - lo[t]).product(),
            _ => 0.0,
        }
    }

    fn validate(&self, spec: &DomainSpec) -> std::result::Result<(), String> {
        match (*self, spec.kind) {
            (Patch::Arc { theta0, theta1 }, DomainKind::Disk2D { .. }) => {
                if !(theta0.is_finite() && theta1.is_finite()) || theta1 <= theta0 {
                    return Err(format!("angle interval [{theta0}, {theta1}] is empty"));
                }
                if theta1 - theta0 > 2.0 * PI + 1e-12 {
                    return Err("angle interval longer than the full circle".into());
                }
                Ok(())
            }
            (Patch::Flat { face, lo, hi }, DomainKind::Rect2D { .. } | DomainKind::Box3D { .. }) => {
                let n = spec.dim();
                if face.axis >= n {
                    return Err(format!("face axis {} outside dimension {n}", face.axis + 1));
                }
                let w = spec.widths().unwrap();
                let tan = tangential_axes(n, face.axis);
                for t in 0..n - 1 {
                    let (a, b) = (lo[t], hi[t]);
                    if !(a.is_finite() && b.is_finite()) || b <= a {
                        return Err(format!("parameter range [{a}, {b}] is empty"));
                    }
                    if a < 0.0 || b > w[tan[t]] {
                        return Err(format!("parameter range [{a}, {b}] leaves the face"));
                    }
                }
                Ok(())
            }
            _ => Err("patch kind does not match the domain kind".into()),
        }
    }

    fn overlaps(&self, other: &Patch, dim: usize) -> bool {
        match (*self, *other) {
            (Patch::Arc { theta0: a0, theta1: a1 }, Patch::Arc { theta0: b0, theta1: b1 }) => {
                (-2..=2).any(|k| {
                    let s = 2.0 * PI * k as f64;
                    a0.max(b0 + s) < a1.min(b1 + s) - 1e-12
                })
            }
            (Patch::Flat { face: f, lo: l1, hi: h1 }, Patch::Flat { face: g, lo: l2, hi: h2 }) => {
                f == g && (0..dim - 1).all(|t| l1[t].max(l2[t]) < h1[t].min(h2[t]))
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Electrode {
    pub patch: Patch,
    /// Contact impedance, strictly positive.
    pub z: f64,
}

impl Electrode {
    pub fn new(patch: Patch, z: f64) -> Self {
        Self { patch, z }
    }

    /// Electrode on a rectangle edge (`axis` is the edge normal, 0-based).
    pub fn on_edge(axis: usize, high: bool, a: f64, b: f64, z: f64) -> Self {
        Self::new(Patch::Flat { face: Face { axis, high }, lo: [a, 0.0], hi: [b, 0.0] }, z)
    }

    pub fn on_face(axis: usize, high: bool, lo: [f64; 2], hi: [f64; 2], z: f64) -> Self {
        Self::new(Patch::Flat { face: Face { axis, high }, lo, hi }, z)
    }

    pub fn on_arc(theta0: f64, theta1: f64, z: f64) -> Self {
        Self::new(Patch::Arc { theta0, theta1 }, z)
    }
}

/// Checks each electrode against the domain and that distinct patches have
/// disjoint interiors (shared endpoints are allowed).
pub fn validate_electrodes(spec: &DomainSpec, electrodes: &[Electrode]) -> Result<()> {
    if electrodes.is_empty() {
        return Err(EitError::InvalidParameter("at least one electrode is required".into()));
    }
    for (l, e) in electrodes.iter().enumerate() {
        if !(e.z.is_finite() && e.z > 0.0) {
            return Err(EitError::InvalidElectrode { index: l + 1, reason: format!("contact impedance {} must be positive", e.z) });
        }
        e.patch
            .validate(spec)
            .map_err(|reason| EitError::InvalidElectrode { index: l + 1, reason })?;
    }
    for l in 0..electrodes.len() {
        for k in l + 1..electrodes.len() {
            if electrodes[l].patch.overlaps(&electrodes[k].patch, spec.dim()) {
                return Err(EitError::InvalidElectrode {
                    index: k + 1,
                    reason: format!("patch overlaps electrode {}", l + 1),
                });
            }
        }
    }
    Ok(())
}

/// A piece of boundary inside one cell, ready for quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryPiece {
    /// Degenerate box with `lo[normal] == hi[normal]`.
    Flat { dim: usize, normal: usize, lo: Point, hi: Point },
    Arc { r: f64, theta0: f64, theta1: f64 },
}

impl BoundaryPiece {
    pub fn measure(&self) -> f64 {
        match *self {
            BoundaryPiece::Flat { dim, normal, lo, hi } => {
                (0..dim).filter(|&i| i != normal).map(|i| hi[i] - lo[i]).product()
            }
            BoundaryPiece::Arc { r, theta0, theta1 } => r * (theta1 - theta0),
        }
    }

    /// Gauss rule with `order` points per parameter direction.
    pub fn quadrature(&self, order: usize) -> Vec<(Point, f64)> {
        match *self {
            BoundaryPiece::Flat { dim, normal, lo, hi } => {
                // integrate over tangential axes only
                let mut out = vec![(lo, 1.0)];
                for axis in (0..dim).filter(|&i| i != normal) {
                    let rule = gauss_interval(lo[axis], hi[axis], order);
                    let mut next = Vec::with_capacity(out.len() * order);
                    for (p, w) in &out {
                        for &(x, wx) in &rule {
                            let mut q = *p;
                            q[axis] = x;
                            next.push((q, w * wx));
                        }
                    }
                    out = next;
                }
                out
            }
            BoundaryPiece::Arc { r, theta0, theta1 } => gauss_interval(theta0, theta1, order)
                .into_iter()
                .map(|(t, w)| ([r * t.cos(), r * t.sin(), 0.0], r * w))
                .collect(),
        }
    }
}

/// Pieces of `patch ∩ cell` with positive measure.
pub fn patch_cell_pieces(spec: &DomainSpec, patch: &Patch, cell: &Cell) -> Vec<BoundaryPiece> {
    let n = spec.dim();
    match (*patch, spec.kind) {
        (Patch::Flat { face, lo, hi }, DomainKind::Rect2D { .. } | DomainKind::Box3D { .. }) => {
            let w = spec.widths().unwrap();
            let plane = if face.high { w[face.axis] } else { 0.0 };
            if plane < cell.corner[face.axis] || plane > cell.upper(face.axis) {
                return Vec::new();
            }
            let tan = tangential_axes(n, face.axis);
            let mut plo = [0.0; 3];
            let mut phi = [0.0; 3];
            plo[face.axis] = plane;
            phi[face.axis] = plane;
            for t in 0..n - 1 {
                let a = tan[t];
                let l = lo[t].max(cell.corner[a]);
                let u = hi[t].min(cell.upper(a));
                if u <= l {
                    return Vec::new();
                }
                plo[a] = l;
                phi[a] = u;
            }
            vec![BoundaryPiece::Flat { dim: n, normal: face.axis, lo: plo, hi: phi }]
        }
        (Patch::Arc { theta0, theta1 }, DomainKind::Disk2D { r }) => arc_cell_pieces(r, theta0, theta1, cell),
        _ => Vec::new(),
    }
}

fn arc_cell_pieces(r: f64, theta0: f64, theta1: f64, cell: &Cell) -> Vec<BoundaryPiece> {
    // quick reject: the circle misses the cell
    let mut near = 0.0;
    let mut far = 0.0;
    for i in 0..2 {
        let c = 0.0f64.clamp(cell.corner[i], cell.upper(i));
        near += c * c;
        let f = cell.corner[i].abs().max(cell.upper(i).abs());
        far += f * f;
    }
    if near > r * r || far < r * r {
        return Vec::new();
    }
    let mut cuts = vec![theta0, theta1];
    let mut push_angles = |base: f64| {
        for k in -3..=3 {
            let t = base + 2.0 * PI * k as f64;
            if t > theta0 && t < theta1 {
                cuts.push(t);
            }
        }
    };
    for i in 0..2 {
        for wall in [cell.corner[i], cell.upper(i)] {
            if wall.abs() <= r {
                let a = (wall / r).clamp(-1.0, 1.0);
                if i == 0 {
                    let t = a.acos();
                    push_angles(t);
                    push_angles(-t);
                } else {
                    let t = a.asin();
                    push_angles(t);
                    push_angles(PI - t);
                }
            }
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut pieces: Vec<BoundaryPiece> = Vec::new();
    for win in cuts.windows(2) {
        let (a, b) = (win[0], win[1]);
        if b <= a {
            continue;
        }
        let m = 0.5 * (a + b);
        let p = [r * m.cos(), r * m.sin(), 0.0];
        if !cell.contains(&p, 2) {
            continue;
        }
        match pieces.last_mut() {
            Some(BoundaryPiece::Arc { theta1, .. }) if *theta1 == a => *theta1 = b,
            _ => pieces.push(BoundaryPiece::Arc { r, theta0: a, theta1: b }),
        }
    }
    pieces
}

/// m_{n-1} of a measured boundary set together with its absolute error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryMeasure {
    pub value: f64,
    pub tolerance: f64,
}

/// Measure of `E_l ∩ cell`.
pub fn electrode_cell_measure(spec: &DomainSpec, electrode: &Electrode, cell: &Cell) -> BoundaryMeasure {
    let value: f64 = patch_cell_pieces(spec, &electrode.patch, cell).iter().map(|p| p.measure()).sum();
    let tolerance = match spec.kind {
        DomainKind::Disk2D { r } => 1e-13 * r,
        _ => 0.0,
    };
    BoundaryMeasure { value, tolerance }
}

/// Quadrature rule on `cell ∩ Q` for integrands that are smooth inside the
/// cell. Boxes are clipped exactly; disk cells crossed by the circle use
/// composite Gauss in x1 with exact clipping of the x2 range.
pub fn cell_region_quadrature(spec: &DomainSpec, cell: &Cell, order: usize) -> Vec<(Point, f64)> {
    let n = spec.dim();
    let mut lo = cell.corner;
    let mut hi = cell.corner;
    for i in 0..n {
        hi[i] = cell.upper(i);
    }
    match spec.kind {
        DomainKind::Disk2D { r } => {
            if !cell_intersects_domain(spec, cell) {
                return Vec::new();
            }
            let mut far = 0.0;
            for i in 0..2 {
                let f = lo[i].abs().max(hi[i].abs());
                far += f * f;
            }
            if far <= r * r {
                return gauss_box(&lo, &hi, 2, order);
            }
            let x_lo = lo[0].max(-r);
            let x_hi = hi[0].min(r);
            let mut cuts = vec![x_lo, x_hi];
            for y in [lo[1], hi[1]] {
                if y.abs() < r {
                    let s = (r * r - y * y).sqrt();
                    for x in [-s, s] {
                        if x > x_lo && x < x_hi {
                            cuts.push(x);
                        }
                    }
                }
            }
            cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            const PARTS: usize = 8;
            let mut out = Vec::new();
            for win in cuts.windows(2) {
                let (a, b) = (win[0], win[1]);
                if b <= a {
                    continue;
                }
                for k in 0..PARTS {
                    let pa = a + (b - a) * k as f64 / PARTS as f64;
                    let pb = a + (b - a) * (k + 1) as f64 / PARTS as f64;
                    for (x, wx) in gauss_interval(pa, pb, order) {
                        let s = (r * r - x * x).max(0.0).sqrt();
                        let ya = lo[1].max(-s);
                        let yb = hi[1].min(s);
                        if yb <= ya {
                            continue;
                        }
                        for (y, wy) in gauss_interval(ya, yb, order) {
                            out.push(([x, y, 0.0], wx * wy));
                        }
                    }
                }
            }
            out
        }
        _ => {
            let w = spec.widths().unwrap();
            for i in 0..n {
                lo[i] = lo[i].max(0.0);
                hi[i] = hi[i].min(w[i]);
                if hi[i] <= lo[i] {
                    return Vec::new();
                }
            }
            gauss_box(&lo, &hi, n, order)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> DomainSpec {
        DomainSpec::rect(1.0, 1.0).unwrap()
    }

    #[test]
    fn rejects_bad_domains() {
        assert!(DomainSpec::rect(0.0, 1.0).is_err());
        assert!(DomainSpec::disk(-1.0).is_err());
        assert!(DomainSpec::cuboid(1.0, f64::NAN, 1.0).is_err());
        assert_eq!(DomainSpec::cuboid(1.0, 1.0, 1.0).unwrap().dim(), 3);
    }

    #[test]
    fn cell_membership_examples() {
        let q = unit_square();
        assert!(cell_intersects_domain(&q, &Cell::new([0.0, 0.0, 0.0], 0.5)));
        assert!(!cell_intersects_domain(&q, &Cell::new([1.0, 0.0, 0.0], 0.5)));
        let d = DomainSpec::disk(1.0).unwrap();
        assert!(cell_intersects_domain(&d, &Cell::new([0.9, -0.1, 0.0], 0.2)));
        assert!(!cell_intersects_domain(&d, &Cell::new([1.0, 0.0, 0.0], 0.2)));
    }

    #[test]
    fn perimeters() {
        assert_eq!(unit_square().boundary_perimeter(), 4.0);
        assert!((DomainSpec::disk(1.0).unwrap().boundary_perimeter() - 2.0 * PI).abs() < 1e-15);
        assert_eq!(DomainSpec::cuboid(1.0, 1.0, 1.0).unwrap().boundary_perimeter(), 6.0);
    }

    #[test]
    fn flat_electrode_measures() {
        let q = unit_square();
        let e = Electrode::on_edge(1, false, 0.0, 0.5, 1.0);
        let m = electrode_cell_measure(&q, &e, &Cell::new([0.0, 0.0, 0.0], 0.25));
        assert_eq!(m.value, 0.25);
        assert_eq!(m.tolerance, 0.0);
        let m = electrode_cell_measure(&q, &e, &Cell::new([0.5, 0.0, 0.0], 0.25));
        assert_eq!(m.value, 0.0);
    }

    #[test]
    fn arc_measure_against_polyline() {
        let d = DomainSpec::disk(1.0).unwrap();
        let e = Electrode::on_arc(0.0, PI / 2.0, 1.0);
        let cell = Cell::new([0.9, 0.0, 0.0], 0.25);
        let m = electrode_cell_measure(&d, &e, &cell);
        // dense polyline oracle: keep segments whose midpoint is in the cell
        let segs = 1_000_000;
        let mut len = 0.0;
        let dt = (PI / 2.0) / segs as f64;
        for k in 0..segs {
            let (t0, t1) = (k as f64 * dt, (k + 1) as f64 * dt);
            let (x0, y0) = (t0.cos(), t0.sin());
            let (x1, y1) = (t1.cos(), t1.sin());
            let (xm, ym) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
            if (0.9..=1.15).contains(&xm) && (0.0..=0.25).contains(&ym) {
                len += ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
            }
        }
        assert!((m.value - len).abs() < 2.0 * dt, "{} vs {}", m.value, len);
        // closed form: y in [0, 0.25] on the unit circle, x >= 0.9 automatically
        assert!((m.value - 0.25f64.asin()).abs() < 1e-14);
    }

    #[test]
    fn overlapping_patches_rejected() {
        let q = unit_square();
        let a = Electrode::on_edge(0, false, 0.0, 0.5, 1.0);
        let b = Electrode::on_edge(0, false, 0.4, 0.9, 1.0);
        assert!(validate_electrodes(&q, &[a, b]).is_err());
        let c = Electrode::on_edge(0, false, 0.5, 0.9, 1.0);
        assert!(validate_electrodes(&q, &[a, c]).is_ok());
        let d = DomainSpec::disk(1.0).unwrap();
        let a = Electrode::on_arc(-0.2, 0.2, 1.0);
        let b = Electrode::on_arc(2.0 * PI - 0.1, 2.0 * PI + 0.1, 1.0);
        assert!(validate_electrodes(&d, &[a, b]).is_err());
        assert!(validate_electrodes(&d, &[Electrode::on_arc(0.0, 1.0, 0.0)]).is_err());
    }

    #[test]
    fn region_quadrature_measures_area() {
        let d = DomainSpec::disk(1.0).unwrap();
        let h = 0.125;
        let mut area = 0.0;
        for i in -9..9 {
            for j in -9..9 {
                let cell = Cell::new([i as f64 * h, j as f64 * h, 0.0], h);
                area += cell_region_quadrature(&d, &cell, 6).iter().map(|(_, w)| w).sum::<f64>();
            }
        }
        assert!((area - PI).abs() < 1e-6, "{area}");
        let q = DomainSpec::rect(1.0, 0.7).unwrap();
        let cell = Cell::new([0.5, 0.5, 0.0], 0.5);
        let a: f64 = cell_region_quadrature(&q, &cell, 2).iter().map(|(_, w)| w).sum();
        assert!((a - 0.5 * 0.2).abs() < 1e-15);
    }
}
