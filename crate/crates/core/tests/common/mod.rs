//! Reference quadrature and geometry shared by the integration tests. Nothing
//! here calls into the closed-form integration paths of the crate.

#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;
use std::num::NonZeroUsize;

use fracmg_core::{GridPoint, MeshLevel};
use gauss_quad::GaussLegendre;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Tanh-sinh quadrature of `f` over `[a, b]`.
///
/// `f` receives the distances `(x − a, b − x)` of the node to both endpoints,
/// computed without cancellation, so integrable endpoint singularities such
/// as `(b − x)^{−0.9}` are resolved to full precision.
pub fn tanh_sinh(f: impl Fn(f64, f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    let c = 0.5 * (b - a);
    let node = |t: f64| -> f64 {
        let u = FRAC_PI_2 * t.sinh();
        let w = FRAC_PI_2 * t.cosh() / u.cosh().powi(2);
        let dl = 2.0 * c / (1.0 + (-2.0 * u).exp());
        let dr = 2.0 * c / (1.0 + (2.0 * u).exp());
        if w == 0.0 || !w.is_finite() || dl < f64::MIN_POSITIVE || dr < f64::MIN_POSITIVE {
            return 0.0;
        }
        c * w * f(dl, dr)
    };
    const T_MAX: f64 = 6.5;
    let mut h = 0.5;
    let mut sum = node(0.0);
    let mut j = 1;
    while j as f64 * h <= T_MAX {
        sum += node(j as f64 * h) + node(-(j as f64) * h);
        j += 1;
    }
    let mut estimate = h * sum;
    // the error roughly squares with each halving, so once successive
    // estimates agree to √tol one more level is enough
    let mut settled = false;
    for level in 0..14 {
        h *= 0.5;
        let mut j = 1;
        while j as f64 * h <= T_MAX {
            sum += node(j as f64 * h) + node(-(j as f64) * h);
            j += 2;
        }
        let next = h * sum;
        let close = level >= 2 && (next - estimate).abs() <= rel_tol.sqrt() * next.abs();
        estimate = next;
        if settled || next == 0.0 {
            break;
        }
        settled = close;
    }
    estimate
}

/// Adaptive bisection with a 20-point Gauss–Legendre rule on each piece.
pub fn adaptive_legendre(f: &impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> f64 {
    adaptive_legendre_depth(f, a, b, abs_tol, 50)
}

fn adaptive_legendre_depth(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    depth: u32,
) -> f64 {
    let rule = GaussLegendre::new(NonZeroUsize::new(20).unwrap());
    fn go(
        rule: &GaussLegendre,
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (l, r) = (rule.integrate(a, m, f), rule.integrate(m, b, f));
        let diff = (l + r - whole).abs();
        // stop at the requested accuracy or once the rules agree to round-off
        if diff <= tol || diff <= 1e-14 * (l.abs() + r.abs()) || depth == 0 {
            return l + r;
        }
        go(rule, f, a, m, l, 0.5 * tol, depth - 1) + go(rule, f, m, b, r, 0.5 * tol, depth - 1)
    }
    let whole = rule.integrate(a, b, f);
    go(&rule, f, a, b, whole, abs_tol, depth)
}

pub fn rotate(theta: f64, [x, y]: [f64; 2]) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [x * c + y * s, -x * s + y * c]
}

/// `[x_min, x_max]` of the intersection of the line at height `y` with the triangle.
pub fn chord_at(t: &[[f64; 2]; 3], y: f64) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in 0..3 {
        let (p, q) = (t[k], t[(k + 1) % 3]);
        let (y0, y1) = (p[1].min(q[1]), p[1].max(q[1]));
        if y1 > y0 && y >= y0 && y <= y1 {
            let x = p[0] + (y - p[1]) * (q[0] - p[0]) / (q[1] - p[1]);
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    (hi > lo).then_some((lo, hi))
}

/// `D^{-ν}` of the indicator of `[a, b]` at `x`, straight from the definition
/// `Γ(ν)^{-1} ∫_a^{min(b,x)} (x − s)^{ν−1} ds`.
pub fn rl_by_definition(nu: f64, a: f64, b: f64, x: f64) -> f64 {
    if x <= a {
        return 0.0;
    }
    let top = b.min(x);
    let gap = x - top;
    // distance from s to the upper limit is `dr`
    let integral = tanh_sinh(|_, dr| (gap + dr).powf(nu - 1.0), a, top, 1e-14);
    integral / libm::tgamma(nu)
}

/// `∫_target D^{-ν}_θ χ_source`, integrating `rl` along every chord of the
/// target and then over the height in the direction-aligned frame.
pub fn pair_by_quadrature(
    source: &[[f64; 2]; 3],
    target: &[[f64; 2]; 3],
    theta: f64,
    nu: f64,
    rl: impl Fn(f64, f64, f64, f64) -> f64,
) -> f64 {
    let s = source.map(|v| rotate(theta, v));
    let t = target.map(|v| rotate(theta, v));
    let ys = |tri: &[[f64; 2]; 3]| {
        let lo = tri.iter().map(|v| v[1]).fold(f64::INFINITY, f64::min);
        let hi = tri.iter().map(|v| v[1]).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let ((s_lo, s_hi), (t_lo, t_hi)) = (ys(&s), ys(&t));
    let (lo, hi) = (s_lo.max(t_lo), s_hi.min(t_hi));
    if hi <= lo {
        return 0.0;
    }
    let inner = |y: f64| -> f64 {
        let (Some((a, b)), Some((c, d))) = (chord_at(&s, y), chord_at(&t, y)) else {
            return 0.0;
        };
        let mut cuts = vec![c, d];
        cuts.extend([a, b].into_iter().filter(|&v| v > c && v < d));
        cuts.sort_by(f64::total_cmp);
        cuts.windows(2)
            .map(|w| tanh_sinh(|dl, _| rl(nu, a, b, w[0] + dl), w[0], w[1], 1e-14))
            .sum()
    };
    let mut heights: Vec<f64> = s
        .iter()
        .chain(t.iter())
        .map(|v| v[1])
        .filter(|&y| y > lo && y < hi)
        .collect();
    heights.extend([lo, hi]);
    heights.sort_by(f64::total_cmp);
    let segments: Vec<(f64, f64)> = heights
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| (w[0], w[1]))
        .collect();
    let rule = GaussLegendre::new(NonZeroUsize::new(20).unwrap());
    let rough: f64 = segments
        .iter()
        .map(|&(a, b)| rule.integrate(a, b, inner).abs())
        .sum();
    let tol = (1e-11 * rough / segments.len().max(1) as f64).max(1e-17);
    segments
        .iter()
        .map(|&(a, b)| adaptive_legendre(&inner, a, b, tol))
        .sum()
}

/// `½ Σ ∫ ∇φ^i·∇φ^j`, assembled triangle by triangle from vertex coordinates.
pub fn half_p1_laplacian(lvl: &MeshLevel) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(lvl.dofs(), lvl.dofs());
    for cx in 0..=lvl.nx as i64 {
        for cy in 0..=lvl.ny as i64 {
            let lower = [(cx, cy), (cx + 1, cy), (cx + 1, cy + 1)];
            let upper = [(cx, cy), (cx + 1, cy + 1), (cx, cy + 1)];
            for tri in [lower, upper] {
                let p = tri.map(|(x, y)| lvl.point(GridPoint::new(x, y)));
                let area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                    - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
                let grad = |k: usize| {
                    let (q, s) = (p[(k + 1) % 3], p[(k + 2) % 3]);
                    [(q[1] - s[1]) / area2, (s[0] - q[0]) / area2]
                };
                for a_ in 0..3 {
                    for b_ in 0..3 {
                        let (ia, ib) = (
                            lvl.grid_index(GridPoint::new(tri[a_].0, tri[a_].1)),
                            lvl.grid_index(GridPoint::new(tri[b_].0, tri[b_].1)),
                        );
                        if let (Some(i), Some(j)) = (ia, ib) {
                            let (ga, gb) = (grad(a_), grad(b_));
                            a[(i, j)] += 0.5 * 0.5 * area2.abs() * (ga[0] * gb[0] + ga[1] * gb[1]);
                        }
                    }
                }
            }
        }
    }
    a
}
