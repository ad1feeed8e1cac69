//! Directional fractional integrals and the stiffness interactions built on them.
//!
//! The directional Riemann–Liouville integral of order `ν > 0` along
//! `e_θ = (cos θ, sin θ)` is
//!
//! ```text
//! D^{-ν}_θ v(p) = ∫_0^∞ τ^{ν-1}/Γ(ν) · v(p − τ e_θ) dτ
//! ```
//!
//! In coordinates rotated so that the x'-axis points along `e_θ` it acts as a
//! left-sided 1-D integral on every line `y' = const`. For the indicator of a
//! triangle the chord at height `y'` is an interval `[a, b]`, so the integral
//! is `((x'−a)₊^ν − (x'−b)₊^ν)/Γ(ν+1)` and its integral over the chord of a
//! second triangle has the antiderivative `t₊^{ν+1}/Γ(ν+2)`. Chord endpoints
//! are linear in `y'` between vertex heights, so after splitting at every
//! vertex height and at every sign change of the four endpoint differences
//! the outer integral is again an integral of `(linear)^{ν+1}` and is done in
//! closed form too.

use std::f64::consts::{PI, TAU};

use crate::error::{config, usage, Result};
use crate::mesh::{GridOffset, GridPoint, MeshLevel, HAT_SUPPORT};

/// Fractional order and reaction coefficient of the problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    alpha: f64,
    c: f64,
}

impl KernelParams {
    /// `alpha ∈ (1/2, 1]`, `c ≥ 0`.
    pub fn new(alpha: f64, c: f64) -> Result<Self> {
        if !(alpha > 0.5 && alpha <= 1.0) {
            return config(format!("alpha must lie in (1/2, 1], got {alpha}"));
        }
        if !(c.is_finite() && c >= 0.0) {
            return config(format!(
                "reaction coefficient must be finite and >= 0, got {c}"
            ));
        }
        Ok(Self { alpha, c })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Order of the fractional integral left after moving one derivative
    /// onto each basis function: `ν = 2 − 2α ∈ [0, 1)`.
    pub fn nu(&self) -> f64 {
        2.0 - 2.0 * self.alpha
    }

    pub fn is_integer_order(&self) -> bool {
        self.alpha == 1.0
    }
}

/// A point mass of the directional measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    /// Direction angle in `[0, 2π)`.
    pub theta: f64,
    pub weight: f64,
}

const ANGLE_TOL: f64 = 1e-9;
const WEIGHT_RTOL: f64 = 1e-12;

fn reduce_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// A finite directional measure `M(θ) = Σ p_k δ(θ − θ_k)` with `M(θ) = M(θ+π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalMeasure {
    atoms: Vec<Atom>,
}

impl DirectionalMeasure {
    /// Validates weights and π-symmetry. Angles are reduced to `[0, 2π)`.
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return config("a directional measure needs at least one atom");
        }
        let mut atoms = atoms;
        for a in &mut atoms {
            if !a.theta.is_finite() || !a.weight.is_finite() || a.weight < 0.0 {
                return config(format!("invalid atom {a:?}"));
            }
            a.theta = reduce_angle(a.theta);
        }
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if total <= 0.0 {
            return config("total weight of the measure must be positive");
        }
        check_pi_symmetry(&atoms, total)?;
        Ok(Self { atoms })
    }

    /// Compound trapezoid discretization of a continuous density:
    /// atoms `(2πi/N, Δθ·density(2πi/N))`, `i = 0..N`, `Δθ = 2π/N`.
    /// `n_theta` must be a positive multiple of 4.
    pub fn discretize(density: impl Fn(f64) -> f64, n_theta: usize) -> Result<Self> {
        if n_theta == 0 || !n_theta.is_multiple_of(4) {
            return config(format!(
                "N_theta must be a positive multiple of 4, got {n_theta}"
            ));
        }
        let dtheta = TAU / n_theta as f64;
        let atoms = (0..n_theta)
            .map(|i| {
                let theta = TAU * i as f64 / n_theta as f64;
                Atom {
                    theta,
                    weight: dtheta * density(theta),
                }
            })
            .collect();
        Self::new(atoms)
    }

    /// Weight `1/4` in each axis direction `0, π/2, π, 3π/2`.
    pub fn axis_quarters() -> Self {
        let atoms = (0..4)
            .map(|k| Atom {
                theta: k as f64 * PI / 2.0,
                weight: 0.25,
            })
            .collect();
        Self::new(atoms).expect("axis measure is symmetric")
    }

    /// Trapezoid discretization of the constant density `M̃(θ) = 1`.
    pub fn uniform(n_theta: usize) -> Result<Self> {
        Self::discretize(|_| 1.0, n_theta)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }
}

/// Free-function form of [`DirectionalMeasure::discretize`].
pub fn discretize_measure(
    density: impl Fn(f64) -> f64,
    n_theta: usize,
) -> Result<DirectionalMeasure> {
    DirectionalMeasure::discretize(density, n_theta)
}

fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    d.min(TAU - d)
}

fn check_pi_symmetry(atoms: &[Atom], total: f64) -> Result<()> {
    // Group coincident angles, then compare the weight of each group with the
    // weight found at the opposite angle.
    let mut sorted: Vec<Atom> = atoms.to_vec();
    sorted.sort_by(|a, b| a.theta.total_cmp(&b.theta));
    let mut groups: Vec<(f64, f64)> = Vec::new();
    for a in sorted {
        match groups.last_mut() {
            Some((theta, w)) if a.theta - *theta <= ANGLE_TOL => *w += a.weight,
            _ => groups.push((a.theta, a.weight)),
        }
    }
    if groups.len() > 1 {
        let (first, last) = (groups[0], groups[groups.len() - 1]);
        if circular_distance(first.0, last.0) <= ANGLE_TOL {
            groups[0].1 += last.1;
            groups.pop();
        }
    }
    let angles: Vec<f64> = groups.iter().map(|g| g.0).collect();
    for &(theta, w) in &groups {
        let target = reduce_angle(theta + PI);
        let pos = angles.partition_point(|&a| a < target);
        let candidates = [
            pos.checked_sub(1),
            Some(pos % angles.len()),
            Some(0),
            Some(angles.len() - 1),
        ];
        let partner = candidates
            .into_iter()
            .flatten()
            .find(|&i| circular_distance(angles[i], target) <= ANGLE_TOL)
            .map_or(0.0, |i| groups[i].1);
        if (partner - w).abs() > WEIGHT_RTOL * total {
            return config(format!(
                "measure is not π-symmetric: weight {w} at θ={theta} but {partner} at θ+π"
            ));
        }
    }
    Ok(())
}

/// A non-degenerate triangle with counter-clockwise vertices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    vertices: [[f64; 2]; 3],
}

impl Triangle {
    pub fn new(vertices: [[f64; 2]; 3]) -> Result<Self> {
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return usage("triangle vertices must be finite");
        }
        let [p, q, r] = vertices;
        let area2 = (q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]);
        let scale = vertices
            .iter()
            .flat_map(|a| {
                vertices
                    .iter()
                    .map(move |b| (a[0] - b[0]).hypot(a[1] - b[1]))
            })
            .fold(0.0, f64::max);
        if area2.abs() <= 1e-14 * scale * scale {
            return usage(format!("degenerate triangle {vertices:?}"));
        }
        let vertices = if area2 > 0.0 { vertices } else { [p, r, q] };
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[[f64; 2]; 3] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        let [p, q, r] = self.vertices;
        0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            vertices: self.vertices.map(|[x, y]| [x + dx, y + dy]),
        }
    }
}

/// `((x−a)₊^ν − (x−b)₊^ν)/Γ(ν+1)`: the order-`ν` left Riemann–Liouville
/// integral of the indicator of `[a, b]`, evaluated at `x`.
pub fn rl_indicator_integral(nu: f64, a: f64, b: f64, x: f64) -> Result<f64> {
    if !(nu > 0.0 && nu.is_finite()) {
        return usage(format!("integral order must be positive, got {nu}"));
    }
    if a.is_nan() || b.is_nan() || a >= b {
        return usage(format!("empty interval [{a}, {b}]"));
    }
    let pos = |t: f64| if t > 0.0 { t.powf(nu) } else { 0.0 };
    Ok((pos(x - a) - pos(x - b)) / libm::tgamma(nu + 1.0))
}

type Rotated = [[f64; 2]; 3];

/// The order-`ν` fractional integral along one fixed direction, specialised
/// to triangle indicators.
#[derive(Debug, Clone, Copy)]
pub struct DirectionalKernel {
    cos: f64,
    sin: f64,
    /// `ν + 1`, the exponent of the inner antiderivative.
    p: f64,
    inv_gamma: f64,
}

impl DirectionalKernel {
    /// `nu ∈ (0, 1]`.
    pub fn new(theta: f64, nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu <= 1.0) {
            return usage(format!(
                "fractional integral order must lie in (0, 1], got {nu}"
            ));
        }
        let theta = reduce_angle(theta);
        Ok(Self {
            cos: theta.cos(),
            sin: theta.sin(),
            p: nu + 1.0,
            inv_gamma: 1.0 / libm::tgamma(nu + 2.0),
        })
    }

    pub fn direction(&self) -> [f64; 2] {
        [self.cos, self.sin]
    }

    /// Coordinates in the frame whose x'-axis points along the direction.
    pub fn rotate(&self, [x, y]: [f64; 2]) -> [f64; 2] {
        [x * self.cos + y * self.sin, -x * self.sin + y * self.cos]
    }

    pub(crate) fn rotate_triangle(&self, t: &Triangle) -> Rotated {
        t.vertices.map(|v| self.rotate(v))
    }

    /// `∫_target D^{-ν}_θ χ_source dx dy`.
    pub fn pair(&self, source: &Triangle, target: &Triangle) -> f64 {
        self.pair_rotated(&self.rotate_triangle(source), &self.rotate_triangle(target))
    }

    /// [`DirectionalKernel::pair`] on already rotated vertex lists.
    pub(crate) fn pair_rotated(&self, s: &Rotated, t: &Rotated) -> f64 {
        let (s_lo, s_hi) = y_range(s);
        let (t_lo, t_hi) = y_range(t);
        let (lo, hi) = (s_lo.max(t_lo), s_hi.min(t_hi));
        let tiny = 1e-12 * (s_hi - s_lo).max(t_hi - t_lo);
        if hi - lo <= tiny {
            return 0.0;
        }
        let s_xmin = s[0][0].min(s[1][0]).min(s[2][0]);
        let t_xmax = t[0][0].max(t[1][0]).max(t[2][0]);
        if t_xmax <= s_xmin {
            return 0.0;
        }

        let mut cuts = [0.0; 8];
        cuts[0] = lo;
        cuts[1] = hi;
        let mut n = 2;
        for v in s.iter().chain(t.iter()) {
            if v[1] > lo + tiny && v[1] < hi - tiny {
                cuts[n] = v[1];
                n += 1;
            }
        }
        let cuts = &mut cuts[..n];
        cuts.sort_unstable_by(f64::total_cmp);

        let mut sum = 0.0;
        for w in cuts.windows(2) {
            let (y0, y1) = (w[0], w[1]);
            if y1 - y0 <= tiny {
                continue;
            }
            let ym = 0.5 * (y0 + y1);
            let (Some([a0, a1, b0, b1]), Some([c0, c1, d0, d1])) =
                (chord(s, ym, y0, y1), chord(t, ym, y0, y1))
            else {
                continue;
            };
            let seg = self.positive_mean(d0 - a0, d1 - a1)
                - self.positive_mean(c0 - a0, c1 - a1)
                - self.positive_mean(d0 - b0, d1 - b1)
                + self.positive_mean(c0 - b0, c1 - b1);
            sum += (y1 - y0) * seg;
        }
        // The integrand is nonnegative; anything below zero is cancellation noise.
        (sum * self.inv_gamma).max(0.0)
    }

    /// `∫_0^1 (g0 + t(g1 − g0))₊^p dt`.
    fn positive_mean(&self, g0: f64, g1: f64) -> f64 {
        match (g0 > 0.0, g1 > 0.0) {
            (false, false) => 0.0,
            (true, true) => power_mean(g0, g1, self.p),
            // The linear function changes sign inside: only the positive part counts.
            (true, false) => g0 / (g0 - g1) * power_mean(g0, 0.0, self.p),
            (false, true) => g1 / (g1 - g0) * power_mean(0.0, g1, self.p),
        }
    }
}

/// `∫_0^1 (g0 + t(g1 − g0))^p dt` for `g0, g1 ≥ 0`.
fn power_mean(g0: f64, g1: f64, p: f64) -> f64 {
    let delta = g1 - g0;
    let big = g0.max(g1);
    if delta.abs() > 1e-3 * big {
        return (g1.powf(p + 1.0) - g0.powf(p + 1.0)) / ((p + 1.0) * delta);
    }
    // Nearly constant: even-order expansion about the midpoint,
    // m^p Σ_k C(p, 2k) r^{2k} / (2k + 1) with r = δ/(2m).
    let m = 0.5 * (g0 + g1);
    if m == 0.0 {
        return 0.0;
    }
    let r2 = (0.5 * delta / m).powi(2);
    let c2 = p * (p - 1.0) / 6.0;
    let c4 = c2 * (p - 2.0) * (p - 3.0) / 20.0;
    let c6 = c4 * (p - 4.0) * (p - 5.0) / 42.0;
    m.powf(p) * (1.0 + r2 * (c2 + r2 * (c4 + r2 * c6)))
}

fn y_range(t: &Rotated) -> (f64, f64) {
    let lo = t[0][1].min(t[1][1]).min(t[2][1]);
    let hi = t[0][1].max(t[1][1]).max(t[2][1]);
    (lo, hi)
}

/// Left and right chord endpoints of `t` at heights `y0` and `y1`, using the
/// two edges that straddle `ym`: `[left(y0), left(y1), right(y0), right(y1)]`.
fn chord(t: &Rotated, ym: f64, y0: f64, y1: f64) -> Option<[f64; 4]> {
    let mut found = [(0.0, 0.0, 0.0); 2];
    let mut n = 0;
    for k in 0..3 {
        let (p, q) = (t[k], t[(k + 1) % 3]);
        if (ym - p[1]) * (ym - q[1]) < 0.0 && n < 2 {
            let slope = (q[0] - p[0]) / (q[1] - p[1]);
            let at = |y: f64| p[0] + slope * (y - p[1]);
            found[n] = (at(ym), at(y0), at(y1));
            n += 1;
        }
    }
    if n < 2 {
        return None;
    }
    let (l, r) = if found[0].0 <= found[1].0 {
        (found[0], found[1])
    } else {
        (found[1], found[0])
    };
    Some([l.1, l.2, r.1, r.2])
}

/// `∫_target (D^{-ν}_θ χ_source)(x, y) dx dy` for `ν ∈ (0, 1]`.
pub fn pair_interaction(source: &Triangle, target: &Triangle, theta: f64, nu: f64) -> Result<f64> {
    Ok(DirectionalKernel::new(theta, nu)?.pair(source, target))
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `I_θ = (D^{2α−1}_θ φ^i, D_{θ+π} φ^j)` for the hat functions centred at the
/// lattice points `node_i` and `node_j` of `level`; fractional orders only.
pub fn entry_interaction(
    node_i: GridPoint,
    node_j: GridPoint,
    theta: f64,
    params: &KernelParams,
    level: &MeshLevel,
) -> Result<f64> {
    if params.is_integer_order() {
        return usage("alpha = 1 has no fractional kernel; use the integer-order path");
    }
    let kern = DirectionalKernel::new(theta, params.nu())?;
    let e = kern.direction();
    let src = level
        .support(node_i)
        .map(|(t, g)| (kern.rotate_triangle(&t), dot(g, e)));
    let tgt = level
        .support(node_j)
        .map(|(t, g)| (kern.rotate_triangle(&t), dot(g, e)));
    let mut sum = 0.0;
    for (s, gs) in &src {
        for (t, gt) in &tgt {
            if *gs == 0.0 || *gt == 0.0 {
                continue;
            }
            // D_{θ+π} φ^j = −D_θ φ^j
            sum -= gs * gt * kern.pair_rotated(s, t);
        }
    }
    Ok(sum)
}

/// `(D_θ φ^i, D_θ φ^j)`: the directional Dirichlet product used when `α = 1`.
pub fn integer_order_interaction(
    node_i: GridPoint,
    node_j: GridPoint,
    theta: f64,
    level: &MeshLevel,
) -> f64 {
    let e = [theta.cos(), theta.sin()];
    let area = 0.5 * level.h * level.h;
    let mut sum = 0.0;
    for a in HAT_SUPPORT {
        for b in HAT_SUPPORT {
            let same = a.half == b.half
                && node_i.x + a.cell.0 == node_j.x + b.cell.0
                && node_i.y + a.cell.1 == node_j.y + b.cell.1;
            if same {
                sum += area * dot(a.unit_grad, e) * dot(b.unit_grad, e) / (level.h * level.h);
            }
        }
    }
    sum
}

/// Lattice positions of two interior nodes separated by `offset`, with the
/// first one as close to the lower-left corner as possible.
pub fn anchor_nodes(offset: GridOffset, level: &MeshLevel) -> Result<(GridPoint, GridPoint)> {
    if offset.dx.unsigned_abs() as usize >= level.nx
        || offset.dy.unsigned_abs() as usize >= level.ny
    {
        return usage(format!(
            "offset {offset:?} does not fit in a {}x{} grid",
            level.nx, level.ny
        ));
    }
    let i = GridPoint::new(1 + (-offset.dx).max(0), 1 + (-offset.dy).max(0));
    Ok((i, i.shifted(offset)))
}

/// `B(φ^i, φ^j)` for the hats at `node_i` and `node_j`:
/// `−Σ_l p_l I_{θ_l} + c·mass_entry`, or `Σ_l p_l (D_{θ_l}φ^i, D_{θ_l}φ^j) + c·mass_entry`
/// when `α = 1`.
pub fn bilinear_entry_at(
    node_i: GridPoint,
    node_j: GridPoint,
    measure: &DirectionalMeasure,
    params: &KernelParams,
    level: &MeshLevel,
    mass_entry: f64,
) -> Result<f64> {
    let mut sum = 0.0;
    for atom in measure.atoms() {
        if atom.weight == 0.0 {
            continue;
        }
        sum += if params.is_integer_order() {
            atom.weight * integer_order_interaction(node_i, node_j, atom.theta, level)
        } else {
            -atom.weight * entry_interaction(node_i, node_j, atom.theta, params, level)?
        };
    }
    Ok(sum + params.c() * mass_entry)
}

/// `B(φ^i, φ^j)` for two nodes separated by `offset` (`node_j − node_i`).
pub fn bilinear_entry(
    offset: GridOffset,
    measure: &DirectionalMeasure,
    params: &KernelParams,
    level: &MeshLevel,
    mass_entry: f64,
) -> Result<f64> {
    let (i, j) = anchor_nodes(offset, level)?;
    bilinear_entry_at(i, j, measure, params, level, mass_entry)
}
