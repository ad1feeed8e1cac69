//! Nested uniform triangulations of a rectangle and nodal prolongation.
//!
//! Level `k` has `n_k = n_0·2^k − 1` interior nodes per row and
//! `l_k = l_0·2^k − 1` interior rows. Every square cell is split by its
//! lower-left to upper-right diagonal, so all interior hat functions are
//! translates of one another.
//!
//! Interior nodes are stored row-major: the node in column `r ∈ 1..=n_k` and
//! row `d ∈ 0..l_k` has storage index `n_k·d + r − 1` (one-based number
//! `m = n_k·d + r`). Its lattice coordinates are `(r, d + 1)` in units of `h_k`.

use crate::error::{config, usage, Result};
use crate::kernel::Triangle;

/// The rectangle `[0, width] × [0, height]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub width: f64,
    pub height: f64,
}

impl Domain {
    pub fn new(width: f64, height: f64) -> Result<Self> {
        if !(width.is_finite() && height.is_finite() && width > 0.0 && height > 0.0) {
            return config(format!(
                "domain sides must be positive, got {width} x {height}"
            ));
        }
        Ok(Self { width, height })
    }

    pub fn square(side: f64) -> Result<Self> {
        Self::new(side, side)
    }
}

/// Integer lattice coordinates in units of the mesh size. Boundary nodes sit
/// at `x ∈ {0, n+1}` or `y ∈ {0, l+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridPoint {
    pub x: i64,
    pub y: i64,
}

impl GridPoint {
    pub fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }

    pub fn offset_to(self, other: GridPoint) -> GridOffset {
        GridOffset::new(other.x - self.x, other.y - self.y)
    }

    pub fn shifted(self, offset: GridOffset) -> GridPoint {
        GridPoint::new(self.x + offset.dx, self.y + offset.dy)
    }
}

/// Displacement between two nodes of the same level, in grid units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridOffset {
    pub dx: i64,
    pub dy: i64,
}

impl GridOffset {
    pub const ZERO: GridOffset = GridOffset { dx: 0, dy: 0 };

    pub fn new(dx: i64, dy: i64) -> Self {
        Self { dx, dy }
    }

    /// Offsets with `dy > 0`, or `dy == 0` and `dx ≥ 0`: the half plane
    /// indexed by the Toeplitz generator.
    pub fn is_canonical(self) -> bool {
        self.dy > 0 || (self.dy == 0 && self.dx >= 0)
    }

    pub fn canonical(self) -> Self {
        if self.is_canonical() {
            self
        } else {
            -self
        }
    }
}

impl std::ops::Neg for GridOffset {
    type Output = Self;

    fn neg(self) -> Self {
        Self::new(-self.dx, -self.dy)
    }
}

/// Which half of a square cell a triangle occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellHalf {
    /// Vertices `(0,0), (1,0), (1,1)` relative to the cell corner.
    Lower,
    /// Vertices `(0,0), (1,1), (0,1)` relative to the cell corner.
    Upper,
}

impl CellHalf {
    pub const BOTH: [CellHalf; 2] = [CellHalf::Lower, CellHalf::Upper];

    /// Counter-clockwise vertices of the half of the unit cell at the origin.
    pub fn unit_vertices(self) -> [[f64; 2]; 3] {
        match self {
            CellHalf::Lower => [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]],
            CellHalf::Upper => [[0.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        }
    }
}

/// One triangle of a hat function's support, relative to the hat's node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportPiece {
    pub half: CellHalf,
    /// Lower-left corner of the containing cell, relative to the node.
    pub cell: (i64, i64),
    /// Gradient of the hat on this triangle for unit mesh size; divide by `h`.
    pub unit_grad: [f64; 2],
}

/// The six support triangles of the hat function centred at the origin.
pub const HAT_SUPPORT: [SupportPiece; 6] = [
    SupportPiece {
        half: CellHalf::Lower,
        cell: (0, 0),
        unit_grad: [-1.0, 0.0],
    },
    SupportPiece {
        half: CellHalf::Upper,
        cell: (0, 0),
        unit_grad: [0.0, -1.0],
    },
    SupportPiece {
        half: CellHalf::Lower,
        cell: (-1, 0),
        unit_grad: [1.0, -1.0],
    },
    SupportPiece {
        half: CellHalf::Upper,
        cell: (-1, -1),
        unit_grad: [1.0, 0.0],
    },
    SupportPiece {
        half: CellHalf::Lower,
        cell: (-1, -1),
        unit_grad: [0.0, 1.0],
    },
    SupportPiece {
        half: CellHalf::Upper,
        cell: (0, -1),
        unit_grad: [-1.0, 1.0],
    },
];

/// One level of the nested triangulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshLevel {
    /// One-based level index.
    pub k: usize,
    /// Interior nodes per row (`n_k`).
    pub nx: usize,
    /// Interior rows (`l_k`).
    pub ny: usize,
    /// Mesh size.
    pub h: f64,
    pub domain: Domain,
}

impl MeshLevel {
    pub fn dofs(&self) -> usize {
        self.nx * self.ny
    }

    /// Storage index of the node in column `col ∈ 1..=nx`, row `row ∈ 0..ny`.
    pub fn index(&self, col: usize, row: usize) -> usize {
        debug_assert!((1..=self.nx).contains(&col) && row < self.ny);
        self.nx * row + col - 1
    }

    /// `(col, row)` of a storage index; inverse of [`MeshLevel::index`].
    pub fn node(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx + 1, idx / self.nx)
    }

    pub fn grid_point(&self, idx: usize) -> GridPoint {
        let (col, row) = self.node(idx);
        GridPoint::new(col as i64, row as i64 + 1)
    }

    /// Storage index of an interior lattice point, `None` on or outside the boundary.
    pub fn grid_index(&self, p: GridPoint) -> Option<usize> {
        let inside = p.x >= 1 && p.x <= self.nx as i64 && p.y >= 1 && p.y <= self.ny as i64;
        inside.then(|| self.index(p.x as usize, (p.y - 1) as usize))
    }

    pub fn point(&self, p: GridPoint) -> [f64; 2] {
        [p.x as f64 * self.h, p.y as f64 * self.h]
    }

    pub fn position(&self, idx: usize) -> [f64; 2] {
        self.point(self.grid_point(idx))
    }

    /// The triangle `half` of the cell whose lower-left corner is `corner`.
    pub fn triangle(&self, half: CellHalf, corner: GridPoint) -> Triangle {
        let [x0, y0] = self.point(corner);
        let v = half
            .unit_vertices()
            .map(|[a, b]| [x0 + a * self.h, y0 + b * self.h]);
        Triangle::new(v).expect("mesh triangles are non-degenerate")
    }

    /// Support triangles of the hat centred at `p`, with the hat's gradient on each.
    pub fn support(&self, p: GridPoint) -> [(Triangle, [f64; 2]); 6] {
        HAT_SUPPORT.map(|piece| {
            let corner = GridPoint::new(p.x + piece.cell.0, p.y + piece.cell.1);
            let g = [piece.unit_grad[0] / self.h, piece.unit_grad[1] / self.h];
            (self.triangle(piece.half, corner), g)
        })
    }

    /// Value at lattice point `p` of the function with interior coefficients
    /// `coeffs` (zero on and outside the boundary).
    fn lattice_value(&self, coeffs: &[f64], x: i64, y: i64) -> f64 {
        self.grid_index(GridPoint::new(x, y))
            .map_or(0.0, |i| coeffs[i])
    }

    /// Evaluates the piecewise-linear function with nodal coefficients `coeffs`
    /// at an arbitrary point; zero outside the domain.
    pub fn evaluate(&self, coeffs: &[f64], point: [f64; 2]) -> f64 {
        assert_eq!(coeffs.len(), self.dofs(), "coefficient length mismatch");
        let (gx, gy) = (point[0] / self.h, point[1] / self.h);
        let (cx, cy) = ((self.nx + 1) as f64, (self.ny + 1) as f64);
        if !(0.0..=cx).contains(&gx) || !(0.0..=cy).contains(&gy) {
            return 0.0;
        }
        let i = (gx.floor() as i64).min(self.nx as i64);
        let j = (gy.floor() as i64).min(self.ny as i64);
        let (xi, eta) = (gx - i as f64, gy - j as f64);
        let v00 = self.lattice_value(coeffs, i, j);
        let v11 = self.lattice_value(coeffs, i + 1, j + 1);
        if xi >= eta {
            let v10 = self.lattice_value(coeffs, i + 1, j);
            (1.0 - xi) * v00 + (xi - eta) * v10 + eta * v11
        } else {
            let v01 = self.lattice_value(coeffs, i, j + 1);
            (1.0 - eta) * v00 + (eta - xi) * v01 + xi * v11
        }
    }

    /// Dimension of the flattened Toeplitz matrix, `(2n−1)·l − n + 1`.
    pub fn toeplitz_dim(&self) -> usize {
        (2 * self.nx - 1) * self.ny - self.nx + 1
    }
}

/// The levels `1..=J` of a nested hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    levels: Vec<MeshLevel>,
}

impl Hierarchy {
    /// Builds levels `1..=levels` with `n_k = n0·2^k − 1`, `l_k = l0·2^k − 1`.
    pub fn build(n0: usize, l0: usize, levels: usize, domain: Domain) -> Result<Self> {
        if n0 < 2 || l0 < 2 {
            return config(format!(
                "base sizes must be at least 2, got n0={n0}, l0={l0}"
            ));
        }
        if levels < 1 {
            return config("a hierarchy needs at least one level");
        }
        if levels > 24 {
            return config(format!("{levels} levels exceeds the supported depth"));
        }
        let hx = domain.width / n0 as f64;
        let hy = domain.height / l0 as f64;
        if ((hx - hy) / hx).abs() > 1e-12 {
            return config(format!(
                "cells are not square: width/n0 = {hx}, height/l0 = {hy}"
            ));
        }
        let levels = (1..=levels)
            .map(|k| {
                let scale = 1usize << k;
                MeshLevel {
                    k,
                    nx: n0 * scale - 1,
                    ny: l0 * scale - 1,
                    h: domain.width / (n0 * scale) as f64,
                    domain,
                }
            })
            .collect();
        Ok(Self { levels })
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Level `k` (one-based).
    pub fn level(&self, k: usize) -> &MeshLevel {
        &self.levels[k - 1]
    }

    pub fn finest(&self) -> &MeshLevel {
        self.levels.last().expect("hierarchy is never empty")
    }

    pub fn levels(&self) -> &[MeshLevel] {
        &self.levels
    }
}

/// Nodal interpolation from level `k−1` to level `k`, stored as a sparse map
/// fine node → `[(coarse node, weight)]`.
///
/// The transpose maps fine moment vectors `(g, φ_k^j)` to coarse moments
/// `(g, φ_{k−1}^i)` exactly, since `φ_{k−1}^i = Σ_j P_{ji} φ_k^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prolongation {
    coarse_dofs: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
}

/// Builds the prolongation between adjacent levels of one hierarchy.
pub fn prolongation_weights(coarse: &MeshLevel, fine: &MeshLevel) -> Result<Prolongation> {
    if fine.k != coarse.k + 1
        || fine.nx != 2 * coarse.nx + 1
        || fine.ny != 2 * coarse.ny + 1
        || fine.domain != coarse.domain
    {
        return usage(format!(
            "levels {} ({}x{}) and {} ({}x{}) are not adjacent in one hierarchy",
            coarse.k, coarse.nx, coarse.ny, fine.k, fine.nx, fine.ny
        ));
    }
    let mut row_ptr = Vec::with_capacity(fine.dofs() + 1);
    let mut cols = Vec::with_capacity(2 * fine.dofs());
    let mut weights = Vec::with_capacity(2 * fine.dofs());
    row_ptr.push(0);
    for idx in 0..fine.dofs() {
        let p = fine.grid_point(idx);
        // Coarse lattice endpoints of the coarse edge (or node) containing p.
        let ends: [(i64, i64); 2] = match (p.x % 2 == 0, p.y % 2 == 0) {
            (true, true) => [(p.x / 2, p.y / 2), (p.x / 2, p.y / 2)],
            (false, true) => [((p.x - 1) / 2, p.y / 2), ((p.x + 1) / 2, p.y / 2)],
            (true, false) => [(p.x / 2, (p.y - 1) / 2), (p.x / 2, (p.y + 1) / 2)],
            // Midpoint of the cell diagonal, lower-left to upper-right.
            (false, false) => [
                ((p.x - 1) / 2, (p.y - 1) / 2),
                ((p.x + 1) / 2, (p.y + 1) / 2),
            ],
        };
        if ends[0] == ends[1] {
            let c = coarse.grid_index(GridPoint::new(ends[0].0, ends[0].1));
            cols.push(c.expect("even fine nodes are coarse interior nodes"));
            weights.push(1.0);
        } else {
            for (x, y) in ends {
                if let Some(c) = coarse.grid_index(GridPoint::new(x, y)) {
                    cols.push(c);
                    weights.push(0.5);
                }
            }
        }
        row_ptr.push(cols.len());
    }
    Ok(Prolongation {
        coarse_dofs: coarse.dofs(),
        row_ptr,
        cols,
        weights,
    })
}

impl Prolongation {
    pub fn fine_dofs(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn coarse_dofs(&self) -> usize {
        self.coarse_dofs
    }

    /// Contributing `(coarse node, weight)` pairs of one fine node.
    pub fn weights(&self, fine_idx: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[fine_idx]..self.row_ptr[fine_idx + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    /// Coarse nodal coefficients to fine nodal coefficients.
    pub fn prolong(&self, coarse: &[f64]) -> Vec<f64> {
        assert_eq!(
            coarse.len(),
            self.coarse_dofs,
            "coarse vector length mismatch"
        );
        (0..self.fine_dofs())
            .map(|j| self.weights(j).map(|(i, w)| w * coarse[i]).sum())
            .collect()
    }

    /// Transpose application: fine moments to coarse moments.
    pub fn restrict(&self, fine: &[f64]) -> Vec<f64> {
        assert_eq!(fine.len(), self.fine_dofs(), "fine vector length mismatch");
        let mut out = vec![0.0; self.coarse_dofs];
        for (j, &r) in fine.iter().enumerate() {
            for (i, w) in self.weights(j) {
                out[i] += w * r;
            }
        }
        out
    }
}
