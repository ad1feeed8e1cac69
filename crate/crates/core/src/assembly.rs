//! Per-level operator data: Toeplitz generators, dense oracle matrices, mass
//! entries and load moments.
//!
//! On the uniform mesh `B(φ^i, φ^j)` depends only on the grid offset between
//! the two nodes, and scaling the mesh by `h` scales the fractional part by
//! `h^ν` (`ν = 2 − 2α`) and the mass part by `h²`. Generators are therefore
//! computed once on the unit lattice, for the largest offset range needed, and
//! every level of a hierarchy is read off that table.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{usage, Result};
use crate::kernel::{bilinear_entry, Atom, DirectionalKernel, DirectionalMeasure, KernelParams};
use crate::mesh::{CellHalf, Domain, GridOffset, Hierarchy, MeshLevel, HAT_SUPPORT};

/// Largest system for which dense oracle matrices may be built.
pub const DEFAULT_ORACLE_CAP: usize = 4096;

/// Everything a generator's values depend on besides the level.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamsDigest {
    pub alpha: f64,
    pub c: f64,
    pub atoms: Vec<Atom>,
    pub domain: Domain,
}

impl ParamsDigest {
    pub fn new(params: &KernelParams, measure: &DirectionalMeasure, domain: Domain) -> Self {
        Self {
            alpha: params.alpha(),
            c: params.c(),
            atoms: measure.atoms().to_vec(),
            domain,
        }
    }
}

/// The distinct stiffness values of one level, in the order of the first row
/// of the flattened symmetric Toeplitz matrix.
///
/// Value `(2n−1)·dy + dx` (zero-based) is `B(φ^i, φ^j)` for nodes with
/// `node_j − node_i = (dx, dy)`, where `dy ∈ 0..l` and `dx ∈ −(n−1)..n`
/// (`dx ≥ 0` when `dy = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorVector {
    level: MeshLevel,
    values: Vec<f64>,
    digest: ParamsDigest,
}

impl GeneratorVector {
    pub fn from_parts(level: MeshLevel, values: Vec<f64>, digest: ParamsDigest) -> Result<Self> {
        if values.len() != level.toeplitz_dim() {
            return usage(format!(
                "generator for a {}x{} level needs {} values, got {}",
                level.nx,
                level.ny,
                level.toeplitz_dim(),
                values.len()
            ));
        }
        Ok(Self {
            level,
            values,
            digest,
        })
    }

    pub fn level(&self) -> &MeshLevel {
        &self.level
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn digest(&self) -> &ParamsDigest {
        &self.digest
    }

    /// `B(φ^i, φ^i)`.
    pub fn diagonal(&self) -> f64 {
        self.values[0]
    }

    /// Zero-based generator position of an offset, after canonicalisation.
    pub fn index_of(level: &MeshLevel, offset: GridOffset) -> Option<usize> {
        let u = offset.canonical();
        let fits = (u.dx.unsigned_abs() as usize) < level.nx && (u.dy as usize) < level.ny;
        fits.then(|| ((2 * level.nx - 1) as i64 * u.dy + u.dx) as usize)
    }

    /// `B(φ^i, φ^j)` for `node_j − node_i = offset`.
    pub fn entry(&self, offset: GridOffset) -> Option<f64> {
        Self::index_of(&self.level, offset).map(|i| self.values[i])
    }

    /// The stiffness matrix `Ã_k` induced by the generator: the principal
    /// submatrix of the flattened Toeplitz matrix on the interior positions.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let lvl = &self.level;
        let stride = 2 * lvl.nx - 1;
        let pos: Vec<usize> = (0..lvl.dofs())
            .map(|m| {
                let (col, row) = lvl.node(m);
                stride * row + col - 1
            })
            .collect();
        DMatrix::from_fn(lvl.dofs(), lvl.dofs(), |i, j| {
            self.values[pos[i].abs_diff(pos[j])]
        })
    }
}

/// Inner products `(g, φ^m)` of a functional against the nodal basis of one level.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector {
    level: usize,
    values: Vec<f64>,
}

impl MomentVector {
    pub fn new(level: &MeshLevel, values: Vec<f64>) -> Result<Self> {
        if values.len() != level.dofs() {
            return usage(format!(
                "moment vector for level {} needs {} values, got {}",
                level.k,
                level.dofs(),
                values.len()
            ));
        }
        Ok(Self {
            level: level.k,
            values,
        })
    }

    pub fn zeros(level: &MeshLevel) -> Self {
        Self {
            level: level.k,
            values: vec![0.0; level.dofs()],
        }
    }

    /// One-based level index.
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn from_raw(level: usize, values: Vec<f64>) -> Self {
        Self { level, values }
    }
}

/// Offset table on the unit lattice covering `|dx| ≤ max_dx`, `|dy| ≤ max_dy`.
struct OffsetTable {
    max_dx: i64,
    max_dy: i64,
    values: Vec<f64>,
}

impl OffsetTable {
    fn zeros(max_dx: usize, max_dy: usize) -> Self {
        let (max_dx, max_dy) = (max_dx as i64, max_dy as i64);
        let len = ((2 * max_dx + 1) * (2 * max_dy + 1)) as usize;
        Self {
            max_dx,
            max_dy,
            values: vec![0.0; len],
        }
    }

    fn slot(&self, dx: i64, dy: i64) -> Option<usize> {
        (dx.abs() <= self.max_dx && dy.abs() <= self.max_dy)
            .then(|| ((dy + self.max_dy) * (2 * self.max_dx + 1) + dx + self.max_dx) as usize)
    }

    fn get(&self, u: GridOffset) -> f64 {
        self.slot(u.dx, u.dy).map_or(0.0, |i| self.values[i])
    }
}

fn unit_triangle(half: CellHalf, shift: [f64; 2]) -> [[f64; 2]; 3] {
    half.unit_vertices()
        .map(|[x, y]| [x + shift[0], y + shift[1]])
}

/// Fractional part of `B` on the unit lattice (`h = 1`), without the reaction term.
///
/// For each direction only target triangles whose rotated height range meets
/// that of the source triangle are visited; everything else is invisible to
/// the one-sided kernel. Each nonzero triangle-pair integral is scattered to
/// the nine node pairs whose hats contain the two triangles.
fn fractional_unit_table(
    measure: &DirectionalMeasure,
    nu: f64,
    max_dx: usize,
    max_dy: usize,
) -> Result<OffsetTable> {
    let mut table = OffsetTable::zeros(max_dx, max_dy);
    let (rx, ry) = (max_dx as i64 + 1, max_dy as i64 + 1);
    for atom in measure.atoms() {
        if atom.weight == 0.0 {
            continue;
        }
        let kern = DirectionalKernel::new(atom.theta, nu)?;
        let [ec, es] = kern.direction();
        for s_half in CellHalf::BOTH {
            let s_rot = unit_triangle(s_half, [0.0, 0.0]).map(|v| kern.rotate(v));
            let s_pieces: Vec<((i64, i64), f64)> = HAT_SUPPORT
                .iter()
                .filter(|p| p.half == s_half)
                .map(|p| (p.cell, p.unit_grad[0] * ec + p.unit_grad[1] * es))
                .collect();
            let (s_lo, s_hi) = y_extent(&s_rot);
            for t_half in CellHalf::BOTH {
                let t_ref = unit_triangle(t_half, [0.0, 0.0]).map(|v| kern.rotate(v));
                let t_pieces: Vec<((i64, i64), f64)> = HAT_SUPPORT
                    .iter()
                    .filter(|p| p.half == t_half)
                    .map(|p| (p.cell, p.unit_grad[0] * ec + p.unit_grad[1] * es))
                    .collect();
                let (t_lo, t_hi) = y_extent(&t_ref);
                // rotated height of cell shift (cx, cy) is −cx·sin + cy·cos
                let (lo, hi) = (s_lo - t_hi, s_hi - t_lo);
                for cy in -ry..=ry {
                    let Some((x_from, x_to)) = strip_columns(cy, ec, es, lo, hi, rx) else {
                        continue;
                    };
                    for cx in x_from..=x_to {
                        let shift = kern.rotate([cx as f64, cy as f64]);
                        let t_rot = t_ref.map(|[x, y]| [x + shift[0], y + shift[1]]);
                        let pair = kern.pair_rotated(&s_rot, &t_rot);
                        if pair == 0.0 {
                            continue;
                        }
                        let wp = atom.weight * pair;
                        for &(ca, ga) in &s_pieces {
                            for &(cb, gb) in &t_pieces {
                                if let Some(slot) = table.slot(cx - cb.0 + ca.0, cy - cb.1 + ca.1) {
                                    // −p·(D_θφ^i)(D_{θ+π}φ^j)·pair, with D_{θ+π} = −D_θ
                                    table.values[slot] += wp * ga * gb;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(table)
}

fn y_extent(t: &[[f64; 2]; 3]) -> (f64, f64) {
    let lo = t[0][1].min(t[1][1]).min(t[2][1]);
    let hi = t[0][1].max(t[1][1]).max(t[2][1]);
    (lo, hi)
}

/// Columns `cx ∈ [−rx, rx]` of row `cy` whose rotated height `−cx·sin + cy·cos`
/// may fall in `(lo, hi)`. One column of slack on each side.
fn strip_columns(cy: i64, cos: f64, sin: f64, lo: f64, hi: f64, rx: i64) -> Option<(i64, i64)> {
    let base = cy as f64 * cos;
    if sin.abs() < 1e-9 {
        let slack = 1e-9 * (rx as f64 + 1.0);
        return (base > lo - slack && base < hi + slack).then_some((-rx, rx));
    }
    let (a, b) = ((base - hi) / sin, (base - lo) / sin);
    let from = (a.min(b).floor() as i64 - 1).max(-rx);
    let to = (a.max(b).ceil() as i64 + 1).min(rx);
    (from <= to).then_some((from, to))
}

/// Integer-order (`α = 1`) part `Σ_l p_l (D_{θ_l}φ^i, D_{θ_l}φ^j)` on the unit lattice.
fn integer_unit_table(measure: &DirectionalMeasure, max_dx: usize, max_dy: usize) -> OffsetTable {
    let mut table = OffsetTable::zeros(max_dx, max_dy);
    for atom in measure.atoms() {
        let e = [atom.theta.cos(), atom.theta.sin()];
        for a in HAT_SUPPORT {
            for b in HAT_SUPPORT {
                if a.half != b.half {
                    continue;
                }
                let ga = a.unit_grad[0] * e[0] + a.unit_grad[1] * e[1];
                let gb = b.unit_grad[0] * e[0] + b.unit_grad[1] * e[1];
                if let Some(slot) = table.slot(a.cell.0 - b.cell.0, a.cell.1 - b.cell.1) {
                    table.values[slot] += atom.weight * 0.5 * ga * gb;
                }
            }
        }
    }
    table
}

/// `(φ^i, φ^j)` on the unit lattice, by exact elementwise integration.
fn unit_mass(offset: GridOffset) -> f64 {
    let mut sum = 0.0;
    for a in HAT_SUPPORT {
        for b in HAT_SUPPORT {
            if a.half == b.half
                && (a.cell.0 - b.cell.0, a.cell.1 - b.cell.1) == (offset.dx, offset.dy)
            {
                // ∫_T λ_a λ_b = |T|(1 + δ_ab)/12 with |T| = 1/2
                let same = if offset == GridOffset::ZERO { 2.0 } else { 1.0 };
                sum += 0.5 * same / 12.0;
            }
        }
    }
    sum
}

/// `(φ^i, φ^j)` for `node_j − node_i = offset` on `level`.
pub fn mass_entry(offset: GridOffset, level: &MeshLevel) -> f64 {
    level.h * level.h * unit_mass(offset)
}

fn unit_table(
    measure: &DirectionalMeasure,
    params: &KernelParams,
    max_dx: usize,
    max_dy: usize,
) -> Result<OffsetTable> {
    if params.is_integer_order() {
        Ok(integer_unit_table(measure, max_dx, max_dy))
    } else {
        fractional_unit_table(measure, params.nu(), max_dx, max_dy)
    }
}

/// Canonical offset stored at zero-based generator position `i` for rows of `nx` nodes.
pub fn generator_offset(nx: usize, i: usize) -> GridOffset {
    let stride = 2 * nx - 1;
    let dy = (i + nx - 1) / stride;
    GridOffset::new(i as i64 - (stride * dy) as i64, dy as i64)
}

fn generator_from_table(
    table: &OffsetTable,
    level: &MeshLevel,
    measure: &DirectionalMeasure,
    params: &KernelParams,
) -> Result<GeneratorVector> {
    let scale = level.h.powf(params.nu());
    let values = (0..level.toeplitz_dim())
        .map(|i| {
            let u = generator_offset(level.nx, i);
            scale * table.get(u) + params.c() * mass_entry(u, level)
        })
        .collect();
    let digest = ParamsDigest::new(params, measure, level.domain);
    GeneratorVector::from_parts(*level, values, digest)
}

/// Generator vector of one level.
pub fn build_generator(
    level: &MeshLevel,
    measure: &DirectionalMeasure,
    params: &KernelParams,
) -> Result<GeneratorVector> {
    let table = unit_table(measure, params, level.nx - 1, level.ny - 1)?;
    generator_from_table(&table, level, measure, params)
}

/// Generator vectors of every level of `hierarchy`, from a single unit-lattice
/// table sized for the finest level.
pub fn build_generators(
    hierarchy: &Hierarchy,
    measure: &DirectionalMeasure,
    params: &KernelParams,
) -> Result<Vec<GeneratorVector>> {
    let fine = hierarchy.finest();
    let table = unit_table(measure, params, fine.nx - 1, fine.ny - 1)?;
    hierarchy
        .levels()
        .iter()
        .map(|lvl| generator_from_table(&table, lvl, measure, params))
        .collect()
}

/// Dense stiffness matrix with entries computed one distinct offset at a time
/// by [`bilinear_entry`] at real mesh coordinates. Test oracle and small-level
/// reference; refuses systems above `cap` unknowns.
pub fn build_dense_with_cap(
    level: &MeshLevel,
    measure: &DirectionalMeasure,
    params: &KernelParams,
    cap: usize,
) -> Result<DMatrix<f64>> {
    let n = level.dofs();
    if n > cap {
        return usage(format!(
            "dense assembly of {n} unknowns exceeds the oracle cap {cap}"
        ));
    }
    let mut memo: HashMap<GridOffset, f64> = HashMap::new();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let u = level.grid_point(i).offset_to(level.grid_point(j));
            let v = match memo.get(&u) {
                Some(&v) => v,
                None => {
                    let v = bilinear_entry(u, measure, params, level, mass_entry(u, level))?;
                    memo.insert(u, v);
                    v
                }
            };
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    Ok(a)
}

/// [`build_dense_with_cap`] with [`DEFAULT_ORACLE_CAP`].
pub fn build_dense(
    level: &MeshLevel,
    measure: &DirectionalMeasure,
    params: &KernelParams,
) -> Result<DMatrix<f64>> {
    build_dense_with_cap(level, measure, params, DEFAULT_ORACLE_CAP)
}

/// Load moments `(f, φ^m)` by the edge-midpoint rule (exact for quadratics)
/// on each support triangle.
pub fn build_load(level: &MeshLevel, f: impl Fn([f64; 2]) -> f64) -> MomentVector {
    let third_area = level.h * level.h / 6.0;
    let values = (0..level.dofs())
        .map(|m| {
            let node = level.position(m);
            level
                .support(level.grid_point(m))
                .iter()
                .map(|(t, _)| {
                    // the hat is 1/2 at the midpoints of the two edges through
                    // the node and 0 at the midpoint of the opposite edge
                    t.vertices()
                        .iter()
                        .filter(|v| **v != node)
                        .map(|v| f([0.5 * (v[0] + node[0]), 0.5 * (v[1] + node[1])]))
                        .sum::<f64>()
                        * 0.5
                        * third_area
                })
                .sum()
        })
        .collect();
    MomentVector::from_raw(level.k, values)
}
