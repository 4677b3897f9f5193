//! Exterior lattice approximation of the domain, its index sets, grid
//! functions, finite differences and discrete norms.
//!
//! Nodes are numbered in lexicographic order of their multi-indexes, which
//! fixes the row order of every assembled matrix.

use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::sync::Arc;

use crate::error::{EitError, Result};
use crate::geometry::{
    cell_inside_domain, cell_intersects_domain, patch_cell_pieces, validate_electrodes, BoundaryPiece, Cell,
    DomainKind, DomainSpec, Electrode, Patch, Point,
};

/// Integer lattice coordinates; unused trailing entries are zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(pub [i64; 3]);

impl MultiIndex {
    pub fn shifted(&self, axis: usize, by: i64) -> Self {
        let mut k = self.0;
        k[axis] += by;
        MultiIndex(k)
    }

    pub fn point(&self, h: f64) -> Point {
        [self.0[0] as f64 * h, self.0[1] as f64 * h, self.0[2] as f64 * h]
    }
}

/// Portion of one electrode inside the cell with natural corner `node`.
#[derive(Debug, Clone)]
pub struct ElectrodeCell {
    pub node: usize,
    pub gamma: f64,
    pub pieces: Vec<BoundaryPiece>,
}

#[derive(Debug)]
pub struct Lattice {
    spec: DomainSpec,
    electrodes: Vec<Electrode>,
    h: f64,
    dim: usize,
    nodes: Vec<MultiIndex>,
    index: HashMap<MultiIndex, usize>,
    cell_corners: Vec<usize>,
    is_cell_corner: Vec<bool>,
    next: Vec<[Option<usize>; 3]>,
    dir: Vec<Vec<usize>>,
    pair: Vec<((usize, usize), Vec<usize>)>,
    pair_strengthened: usize,
    boundary_nodes: Vec<usize>,
    boundary_cells: Vec<usize>,
    electrode_cells: Vec<Vec<ElectrodeCell>>,
}

/// Pairs of axes (i < j) in dimension `dim`.
pub fn axis_pairs(dim: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..dim {
        for j in i + 1..dim {
            out.push((i, j));
        }
    }
    out
}

/// All corner offsets `{0,1}^dim` in lexicographic order.
pub fn corner_offsets(dim: usize) -> Vec<[i64; 3]> {
    let mut out = Vec::with_capacity(1 << dim);
    for mask in 0..(1usize << dim) {
        let mut s = [0i64; 3];
        for (i, si) in s.iter_mut().enumerate().take(dim) {
            *si = ((mask >> (dim - 1 - i)) & 1) as i64;
        }
        out.push(s);
    }
    out
}

/// Builds the lattice: cells meeting the open domain, their vertices, and
/// all derived index sets. Electrode sets only keep cells with positive
/// boundary measure.
pub fn build_lattice(spec: &DomainSpec, electrodes: &[Electrode], h: f64) -> Result<Lattice> {
    if !(h.is_finite() && h > 0.0) {
        return Err(EitError::InvalidParameter(format!("step h must be positive, got {h}")));
    }
    validate_electrodes(spec, electrodes)?;
    let dim = spec.dim();
    let (lo, hi) = spec.bounding_box();
    let mut range = [(0i64, 0i64); 3];
    for i in 0..dim {
        range[i] = ((lo[i] / h).floor() as i64 - 1, (hi[i] / h).ceil() as i64 + 1);
    }

    let mut cells: Vec<MultiIndex> = Vec::new();
    for k0 in range[0].0..=range[0].1 {
        for k1 in range[1].0..=range[1].1 {
            for k2 in range[2].0..=range[2].1 {
                let m = MultiIndex([k0, k1, k2]);
                if cell_intersects_domain(spec, &Cell::new(m.point(h), h)) {
                    cells.push(m);
                }
            }
        }
    }
    let cell_set: HashSet<MultiIndex> = cells.iter().copied().collect();

    let offsets = corner_offsets(dim);
    let mut node_set: HashSet<MultiIndex> = HashSet::new();
    for c in &cells {
        for s in &offsets {
            node_set.insert(MultiIndex([c.0[0] + s[0], c.0[1] + s[1], c.0[2] + s[2]]));
        }
    }
    let mut nodes: Vec<MultiIndex> = node_set.into_iter().collect();
    nodes.sort();
    let index: HashMap<MultiIndex, usize> = nodes.iter().enumerate().map(|(i, m)| (*m, i)).collect();

    let mut is_cell_corner = vec![false; nodes.len()];
    for c in &cells {
        is_cell_corner[index[c]] = true;
    }
    let cell_corners: Vec<usize> = (0..nodes.len()).filter(|&i| is_cell_corner[i]).collect();

    let mut next = vec![[None; 3]; nodes.len()];
    let mut dir = vec![Vec::new(); dim];
    for (id, m) in nodes.iter().enumerate() {
        for axis in 0..dim {
            if let Some(&j) = index.get(&m.shifted(axis, 1)) {
                next[id][axis] = Some(j);
                dir[axis].push(id);
            }
        }
    }

    let mut pair = Vec::new();
    let mut pair_strengthened = 0;
    if dim == 3 {
        for (i, j) in axis_pairs(dim) {
            let mut set = Vec::new();
            for (id, m) in nodes.iter().enumerate() {
                let diag = index.contains_key(&m.shifted(i, 1).shifted(j, 1));
                let sides = next[id][i].is_some() && next[id][j].is_some();
                if diag && sides {
                    set.push(id);
                } else if diag {
                    pair_strengthened += 1;
                }
            }
            pair.push(((i, j), set));
        }
    }

    // S_h: a node is interior iff every cell sharing it is in the collection
    let boundary_nodes: Vec<usize> = nodes
        .iter()
        .enumerate()
        .filter(|(_, m)| {
            offsets.iter().any(|s| {
                let c = MultiIndex([m.0[0] - s[0], m.0[1] - s[1], m.0[2] - s[2]]);
                !cell_set.contains(&c)
            })
        })
        .map(|(i, _)| i)
        .collect();

    let boundary_cells: Vec<usize> = cell_corners
        .iter()
        .copied()
        .filter(|&id| !cell_inside_domain(spec, &Cell::new(nodes[id].point(h), h)))
        .collect();

    let mut lat = Lattice {
        spec: *spec,
        electrodes: electrodes.to_vec(),
        h,
        dim,
        nodes,
        index,
        cell_corners,
        is_cell_corner,
        next,
        dir,
        pair,
        pair_strengthened,
        boundary_nodes,
        boundary_cells,
        electrode_cells: Vec::new(),
    };
    let mut electrode_cells = Vec::with_capacity(electrodes.len());
    for (l, e) in electrodes.iter().enumerate() {
        let set = lat.patch_cells(&e.patch);
        if set.is_empty() {
            return Err(EitError::StepTooLarge { h, electrode: l + 1 });
        }
        electrode_cells.push(set);
    }
    lat.electrode_cells = electrode_cells;
    Ok(lat)
}

impl Lattice {
    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn electrodes(&self) -> &[Electrode] {
        &self.electrodes
    }

    pub fn num_electrodes(&self) -> usize {
        self.electrodes.len()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// h^n, the volume weight of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[MultiIndex] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> MultiIndex {
        self.nodes[id]
    }

    pub fn node_id(&self, m: &MultiIndex) -> Option<usize> {
        self.index.get(m).copied()
    }

    pub fn node_point(&self, id: usize) -> Point {
        self.nodes[id].point(self.h)
    }

    /// Natural corners of the cells of Q_h (the set Q_h⁺).
    pub fn cell_corners(&self) -> &[usize] {
        &self.cell_corners
    }

    pub fn is_cell_corner(&self, id: usize) -> bool {
        self.is_cell_corner[id]
    }

    /// Node `α + e_axis`, if it belongs to the lattice.
    pub fn next(&self, id: usize, axis: usize) -> Option<usize> {
        self.next[id][axis]
    }

    /// Index set Q_h^(i): nodes whose `+e_axis` neighbour is in the lattice.
    pub fn dir_set(&self, axis: usize) -> &[usize] {
        &self.dir[axis]
    }

    /// Index set Q_h^(i,j) in 3D (all four stencil nodes present).
    pub fn pair_set(&self, i: usize, j: usize) -> &[usize] {
        self.pair
            .iter()
            .find(|((a, b), _)| (*a, *b) == (i.min(j), i.max(j)))
            .map(|(_, s)| s.as_slice())
            .unwrap_or(&[])
    }

    /// Number of nodes where requiring the intermediate stencil nodes
    /// shrank a pair set relative to the diagonal-only condition.
    pub fn pair_strengthened(&self) -> usize {
        self.pair_strengthened
    }

    /// Lattice points of S_h = ∂Q_h.
    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    /// Natural corners of cells of Q_h that meet the boundary S.
    pub fn boundary_cells(&self) -> &[usize] {
        &self.boundary_cells
    }

    /// Ê_lh with Γ_lα for electrode `l` (0-based).
    pub fn electrode_cells(&self, l: usize) -> &[ElectrodeCell] {
        &self.electrode_cells[l]
    }

    pub fn cell(&self, id: usize) -> Cell {
        Cell::new(self.node_point(id), self.h)
    }

    /// Cells of Q_h meeting `patch` with positive measure, with the pieces.
    pub fn patch_cells(&self, patch: &Patch) -> Vec<ElectrodeCell> {
        let floor = match self.spec.kind() {
            DomainKind::Disk2D { r } => 1e-14 * r,
            _ => 0.0,
        };
        let mut out = Vec::new();
        for &id in &self.cell_corners {
            let pieces = patch_cell_pieces(&self.spec, patch, &self.cell(id));
            let gamma: f64 = pieces.iter().map(|p| p.measure()).sum();
            if gamma > floor {
                out.push(ElectrodeCell { node: id, gamma, pieces });
            }
        }
        out
    }

    /// Finds a cell of Q_h containing `x`; returns its corner node and the
    /// local coordinates `(x - x_α)/h`, clamped to `[0, 1]`.
    pub fn locate(&self, x: &Point) -> Option<(usize, [f64; 3])> {
        let n = self.dim;
        let mut cand: [[i64; 2]; 3] = [[0; 2]; 3];
        for i in 0..n {
            let s = x[i] / self.h;
            let eps = 1e-9 * (1.0 + s.abs());
            cand[i] = [(s - eps).floor() as i64, (s + eps).floor() as i64];
        }
        let combos = corner_offsets(n);
        // prefer the floor cell, then neighbours across grid lines
        for pick in combos.iter().rev() {
            let mut k = [0i64; 3];
            for i in 0..n {
                k[i] = cand[i][pick[i] as usize];
            }
            let m = MultiIndex(k);
            if let Some(&id) = self.index.get(&m) {
                if !self.is_cell_corner[id] {
                    continue;
                }
                let base = m.point(self.h);
                let mut t = [0.0; 3];
                let mut ok = true;
                for i in 0..n {
                    let ti = (x[i] - base[i]) / self.h;
                    if !(-1e-9..=1.0 + 1e-9).contains(&ti) {
                        ok = false;
                    }
                    t[i] = ti.clamp(0.0, 1.0);
                }
                if ok {
                    return Some((id, t));
                }
            }
        }
        None
    }

    /// Node of corner `α + s` for the cell with corner `id`.
    pub fn corner_node(&self, id: usize, s: &[i64; 3]) -> Option<usize> {
        let m = self.nodes[id];
        self.node_id(&MultiIndex([m.0[0] + s[0], m.0[1] + s[1], m.0[2] + s[2]]))
    }
}

/// Values on every lattice node, in node order.
#[derive(Clone)]
pub struct GridFunction {
    lattice: Arc<Lattice>,
    values: Vec<f64>,
}

impl fmt::Debug for GridFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridFunction")
            .field("h", &self.lattice.h)
            .field("nodes", &self.values.len())
            .finish()
    }
}

impl GridFunction {
    pub fn new(lattice: Arc<Lattice>, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.num_nodes() {
            return Err(EitError::DimensionMismatch(format!(
                "grid function has {} values for {} nodes",
                values.len(),
                lattice.num_nodes()
            )));
        }
        Ok(Self { lattice, values })
    }

    pub fn constant(lattice: Arc<Lattice>, c: f64) -> Self {
        let n = lattice.num_nodes();
        Self { lattice, values: vec![c; n] }
    }

    pub fn zeros(lattice: Arc<Lattice>) -> Self {
        Self::constant(lattice, 0.0)
    }

    /// Samples `f` at the lattice points.
    pub fn from_fn(lattice: Arc<Lattice>, f: impl Fn(&Point) -> f64) -> Self {
        let values = (0..lattice.num_nodes()).map(|i| f(&lattice.node_point(i))).collect();
        Self { lattice, values }
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, m: &MultiIndex) -> Option<f64> {
        self.lattice.node_id(m).map(|i| self.values[i])
    }

    /// Same lattice, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.lattice.clone(), values)
    }

    /// Text table `k1,k2[,k3],value`, one node per line in node order.
    pub fn to_table(&self) -> String {
        let n = self.lattice.dim;
        let mut out = String::new();
        let header: Vec<String> = (1..=n).map(|i| format!("k{i}")).collect();
        let _ = writeln!(out, "{},value", header.join(","));
        for (m, v) in self.lattice.nodes.iter().zip(&self.values) {
            for k in &m.0[..n] {
                let _ = write!(out, "{k},");
            }
            let _ = writeln!(out, "{v:?}");
        }
        out
    }

    /// Parses a table written by [`GridFunction::to_table`]. Every node of
    /// `lattice` must appear exactly once.
    pub fn from_table(lattice: Arc<Lattice>, text: &str) -> Result<Self> {
        let n = lattice.dim;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| EitError::Parse("empty grid function table".into()))?;
        let expected: Vec<String> = (1..=n).map(|i| format!("k{i}")).chain(["value".to_string()]).collect();
        let got: Vec<&str> = header.split(',').map(str::trim).collect();
        if got != expected {
            return Err(EitError::Parse(format!("unexpected header `{header}`")));
        }
        let mut values = vec![f64::NAN; lattice.num_nodes()];
        let mut seen = vec![false; lattice.num_nodes()];
        for line in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != n + 1 {
                return Err(EitError::Parse(format!("bad row `{line}`")));
            }
            let mut k = [0i64; 3];
            for i in 0..n {
                k[i] = fields[i].parse().map_err(|_| EitError::Parse(format!("bad index in `{line}`")))?;
            }
            let v: f64 = fields[n].parse().map_err(|_| EitError::Parse(format!("bad value in `{line}`")))?;
            let id = lattice
                .node_id(&MultiIndex(k))
                .ok_or_else(|| EitError::Parse(format!("index {k:?} is not a lattice node")))?;
            if seen[id] {
                return Err(EitError::Parse(format!("duplicate index {k:?}")));
            }
            seen[id] = true;
            values[id] = v;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(EitError::Parse(format!("missing node {:?}", lattice.nodes[missing].0)));
        }
        Ok(Self { lattice, values })
    }
}

/// u_{α x_i} = (u_{α+e_i} − u_α)/h at node id `alpha`.
pub fn forward_difference(u: &GridFunction, alpha: usize, axis: usize) -> Result<f64> {
    let lat = &u.lattice;
    match lat.next(alpha, axis) {
        Some(j) => Ok((u.values[j] - u.values[alpha]) / lat.h),
        None => Err(EitError::IndexOutOfSet { index: lat.nodes[alpha].0, set: "Q_h^(i)" }),
    }
}

/// Mixed forward difference over distinct `axes`, e.g. σ_{α x1 x2} or
/// σ_{α x1 x2 x3}: the alternating sum over the stencil corners, scaled by
/// h^{-|axes|}.
pub fn mixed_difference(u: &GridFunction, alpha: usize, axes: &[usize]) -> Result<f64> {
    let lat = &u.lattice;
    let k = axes.len();
    let base = lat.nodes[alpha];
    let mut acc = 0.0;
    for mask in 0..(1usize << k) {
        let mut m = base;
        let mut ones = 0;
        for (b, &axis) in axes.iter().enumerate() {
            if (mask >> b) & 1 == 1 {
                m = m.shifted(axis, 1);
                ones += 1;
            }
        }
        let id = lat
            .node_id(&m)
            .ok_or(EitError::IndexOutOfSet { index: base.0, set: "mixed-difference stencil" })?;
        let sign = if (k - ones) % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * u.values[id];
    }
    Ok(acc / lat.h.powi(k as i32))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// Discrete H¹: nodal L2 part plus forward differences.
    H1,
    /// Energy norm: forward differences plus electrode-weighted nodal mass.
    Triple,
    /// Discrete H̃¹: H¹ plus mixed differences (pairs and triple in 3D).
    TildeH1,
    Linf,
}

fn sum_sq_differences(u: &GridFunction) -> f64 {
    let lat = &u.lattice;
    let mut s = 0.0;
    for axis in 0..lat.dim {
        for &a in lat.dir_set(axis) {
            let d = (u.values[lat.next[a][axis].unwrap()] - u.values[a]) / lat.h;
            s += d * d;
        }
    }
    s
}

/// Squared discrete norm.
pub fn discrete_norm_sq(u: &GridFunction, kind: NormKind) -> f64 {
    let lat = &u.lattice;
    let hn = lat.cell_volume();
    match kind {
        NormKind::H1 => hn * u.values.iter().map(|v| v * v).sum::<f64>() + hn * sum_sq_differences(u),
        NormKind::Triple => {
            let mut mass = 0.0;
            for l in 0..lat.num_electrodes() {
                for ec in lat.electrode_cells(l) {
                    mass += ec.gamma * u.values[ec.node] * u.values[ec.node];
                }
            }
            hn * sum_sq_differences(u) + mass
        }
        NormKind::TildeH1 => {
            let mut s = discrete_norm_sq(u, NormKind::H1);
            if lat.dim == 3 {
                for (i, j) in axis_pairs(3) {
                    for &a in lat.pair_set(i, j) {
                        let d = mixed_difference(u, a, &[i, j]).unwrap();
                        s += hn * d * d;
                    }
                }
            }
            let all: Vec<usize> = (0..lat.dim).collect();
            for &a in &lat.cell_corners {
                let d = mixed_difference(u, a, &all).unwrap();
                s += hn * d * d;
            }
            s
        }
        NormKind::Linf => {
            let m = u.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            m * m
        }
    }
}

pub fn discrete_norm(u: &GridFunction, kind: NormKind) -> f64 {
    discrete_norm_sq(u, kind).sqrt()
}

/// Inner product associated with the discrete H̃¹ norm.
pub fn tilde_h1_inner(u: &GridFunction, v: &GridFunction) -> f64 {
    let lat = &u.lattice;
    let hn = lat.cell_volume();
    let mut s: f64 = u.values.iter().zip(&v.values).map(|(a, b)| a * b).sum();
    for axis in 0..lat.dim {
        for &a in lat.dir_set(axis) {
            let j = lat.next[a][axis].unwrap();
            s += (u.values[j] - u.values[a]) * (v.values[j] - v.values[a]) / (lat.h * lat.h);
        }
    }
    if lat.dim == 3 {
        for (i, j) in axis_pairs(3) {
            for &a in lat.pair_set(i, j) {
                s += mixed_difference(u, a, &[i, j]).unwrap() * mixed_difference(v, a, &[i, j]).unwrap();
            }
        }
    }
    let all: Vec<usize> = (0..lat.dim).collect();
    for &a in &lat.cell_corners {
        s += mixed_difference(u, a, &all).unwrap() * mixed_difference(v, a, &all).unwrap();
    }
    hn * s
}
