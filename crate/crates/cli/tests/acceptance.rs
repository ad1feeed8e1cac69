//! Acceptance suite: one PASS/FAIL line per criterion, run sequentially so
//! that the timing criterion is not disturbed by other work.
//!
//! Runs as a plain binary (no libtest harness) so the report is always shown.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::f64::consts::TAU;
use std::process::ExitCode;
use std::time::Instant;

use fracmg::bench::{run_benchmark, timing_series, ResultRow};
use fracmg::config::{LevelRange, Preset, RunConfig};
use fracmg_core::assembly::{build_dense, build_generators, build_load, mass_entry};
use fracmg_core::kernel::{pair_interaction, rl_indicator_integral};
use fracmg_core::mesh::CellHalf;
use fracmg_core::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn preset(p: Preset, levels: &str, solvers: &[SolverKind]) -> RunConfig {
    let mut cfg = RunConfig::preset(p);
    cfg.levels = levels.parse().unwrap();
    cfg.solvers = solvers.to_vec();
    cfg
}

fn iters(rows: &[ResultRow], kind: SolverKind, levels: LevelRange) -> Vec<usize> {
    levels
        .iter()
        .map(|j| {
            rows.iter()
                .find(|r| r.solver == kind && r.level == j)
                .map_or(usize::MAX, |r| r.iters)
        })
        .collect()
}

fn within(got: &[usize], want: &[usize], tol: impl Fn(usize) -> f64) -> bool {
    got.len() == want.len()
        && got
            .iter()
            .zip(want)
            .all(|(&g, &w)| (g as f64 - w as f64).abs() <= tol(w))
}

fn all_converged(rows: &[ResultRow]) -> bool {
    rows.iter().all(|r| r.converged)
}

fn example1_counts(rows: &[ResultRow]) -> Verdict {
    let levels: LevelRange = "4..6".parse().unwrap();
    let (mg, pcg, cg) = (
        iters(rows, SolverKind::VCycle, levels),
        iters(rows, SolverKind::Pcg, levels),
        iters(rows, SolverKind::Cg, levels),
    );
    let pass = within(&mg, &[13, 13, 13], |_| 3.0)
        && within(&pcg, &[7, 6, 7], |_| 3.0)
        && within(&cg, &[58, 72, 118], |w| 0.3 * w as f64)
        && all_converged(rows);
    Verdict::new(
        pass,
        format!("vcycle {mg:?} (13,13,13 ±3), pcg {pcg:?} (7,6,7 ±3), cg {cg:?} (58,72,118 ±30%)"),
    )
}

fn example2_counts(rows: &[ResultRow]) -> Verdict {
    let levels: LevelRange = "4..5".parse().unwrap();
    let (mg, pcg) = (
        iters(rows, SolverKind::VCycle, levels),
        iters(rows, SolverKind::Pcg, levels),
    );
    let pass =
        within(&mg, &[11, 11], |_| 3.0) && within(&pcg, &[6, 6], |_| 3.0) && all_converged(rows);
    Verdict::new(
        pass,
        format!("vcycle {mg:?} (11,11 ±3), pcg {pcg:?} (6,6 ±3)"),
    )
}

fn level_independence(ex1: &[ResultRow], ex2: &[ResultRow]) -> Verdict {
    let levels: LevelRange = "4..7".parse().unwrap();
    let mut pass = all_converged(ex1) && all_converged(ex2);
    let mut parts = Vec::new();
    for (name, rows) in [("example1", ex1), ("example2", ex2)] {
        for kind in [SolverKind::VCycle, SolverKind::Pcg] {
            let it = iters(rows, kind, levels);
            let spread = it.iter().max().unwrap() - it.iter().min().unwrap();
            pass &= spread <= 2;
            parts.push(format!("{name} {kind} {it:?}"));
        }
    }
    Verdict::new(pass, format!("{} (spread ≤ 2 each)", parts.join(", ")))
}

fn hierarchy(levels: usize) -> Hierarchy {
    Hierarchy::build(4, 4, levels, Domain::square(2.0).unwrap()).unwrap()
}

fn uniform_measure(h: &Hierarchy) -> DirectionalMeasure {
    DirectionalMeasure::discretize(|_| 1.0, 4 * (h.finest().nx + 1)).unwrap()
}

fn toeplitz_vs_dense() -> Verdict {
    let h = hierarchy(4);
    let configs = [
        (
            "alpha=0.75 axis",
            DirectionalMeasure::axis_quarters(),
            KernelParams::new(0.75, 0.0).unwrap(),
        ),
        (
            "alpha=0.9 uniform",
            uniform_measure(&h),
            KernelParams::new(0.9, 0.0).unwrap(),
        ),
        (
            "alpha=1 axis",
            DirectionalMeasure::axis_quarters(),
            KernelParams::new(1.0, 0.0).unwrap(),
        ),
    ];
    let mut r = common::rng(4);
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (name, measure, params) in &configs {
        let gens = build_generators(&h, measure, params).unwrap();
        let mut cfg_worst: f64 = 0.0;
        for (lvl, g) in h.levels().iter().zip(&gens) {
            let dense = build_dense(lvl, measure, params).unwrap();
            let u: Vec<f64> = (0..lvl.dofs()).map(|_| r.random_range(-1.0..1.0)).collect();
            let fast = ToeplitzOperator::new(g).apply_stiffness(&u).unwrap();
            let slow = &dense * DVector::from_column_slice(&u);
            let err = max_abs_diff(fast.values(), slow.as_slice()) / slow.amax();
            cfg_worst = cfg_worst.max(err);
        }
        worst = worst.max(cfg_worst);
        parts.push(format!("{name} {cfg_worst:.1e}"));
    }
    Verdict::new(
        worst <= 1e-10,
        format!(
            "max relative error over J=1..4: {} (≤ 1e-10)",
            parts.join(", ")
        ),
    )
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn integer_order() -> Verdict {
    let h = hierarchy(3);
    let gens = build_generators(
        &h,
        &DirectionalMeasure::axis_quarters(),
        &KernelParams::new(1.0, 0.0).unwrap(),
    )
    .unwrap();
    let worst = h
        .levels()
        .iter()
        .zip(&gens)
        .map(|(lvl, g)| {
            let reference = common::half_p1_laplacian(lvl);
            (g.to_dense() - &reference).amax() / reference.amax()
        })
        .fold(0.0, f64::max);
    Verdict::new(
        worst <= 1e-8,
        format!("max relative difference to half P1 Laplacian, J=1..3: {worst:.1e} (≤ 1e-8)"),
    )
}

fn kernel_oracle() -> Verdict {
    let mut r = common::rng(6);
    let unit =
        |half: CellHalf, dx: f64, dy: f64| half.unit_vertices().map(|[x, y]| [x + dx, y + dy]);
    let mut pair_worst: f64 = 0.0;
    let mut nonzero = 0;
    for nu in [0.1, 0.5, 0.9] {
        for _ in 0..20 {
            let theta = r.random_range(0.0..TAU);
            let s_half = if r.random_bool(0.5) {
                CellHalf::Lower
            } else {
                CellHalf::Upper
            };
            let t_half = if r.random_bool(0.5) {
                CellHalf::Lower
            } else {
                CellHalf::Upper
            };
            // cells within two steps, biased downstream of the source
            let (dx, dy) = (
                (r.random_range(-0.5..2.5) * theta.cos()).round() + r.random_range(-1..=1) as f64,
                (r.random_range(-0.5..2.5) * theta.sin()).round() + r.random_range(-1..=1) as f64,
            );
            let (src, tgt) = (unit(s_half, 0.0, 0.0), unit(t_half, dx, dy));
            let closed = pair_interaction(
                &Triangle::new(src).unwrap(),
                &Triangle::new(tgt).unwrap(),
                theta,
                nu,
            )
            .unwrap();
            let oracle = common::pair_by_quadrature(&src, &tgt, theta, nu, |nu, a, b, x| {
                rl_indicator_integral(nu, a, b, x).unwrap()
            });
            if oracle > 1e-12 {
                nonzero += 1;
                pair_worst = pair_worst.max((closed - oracle).abs() / oracle);
            } else {
                pair_worst = pair_worst.max((closed - oracle).abs() / 1e-7);
            }
        }
    }
    let mut rl_worst: f64 = 0.0;
    for _ in 0..50 {
        let nu = r.random_range(0.05..1.0);
        let a = r.random_range(-2.0..2.0);
        let b = a + r.random_range(0.01..2.0);
        let x = r.random_range(a - 0.5..b + 2.0);
        let closed = rl_indicator_integral(nu, a, b, x).unwrap();
        let oracle = common::rl_by_definition(nu, a, b, x);
        let err = if oracle == 0.0 {
            closed.abs()
        } else {
            (closed - oracle).abs() / oracle.abs()
        };
        rl_worst = rl_worst.max(err);
    }
    Verdict::new(
        pair_worst <= 1e-8 && rl_worst <= 1e-10 && nonzero >= 30,
        format!(
            "triangle pairs: worst relative error {pair_worst:.1e} over 60 pairs ({nonzero} nonzero) (≤ 1e-8); \
             1-D integral: worst {rl_worst:.1e} over 50 samples (≤ 1e-10)"
        ),
    )
}

fn spd_and_smoother() -> Verdict {
    let h = hierarchy(3);
    let params = KernelParams::new(0.75, 0.0).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, measure) in [
        ("example1", DirectionalMeasure::axis_quarters()),
        ("example2", uniform_measure(&h)),
    ] {
        let mut mins = Vec::new();
        let mut rhos = vec![1.0]; // level 1 is solved exactly: R_1 A_1 = I
        for lvl in h.levels() {
            let dense = build_dense(lvl, &measure, &params).unwrap();
            let eig = dense.symmetric_eigenvalues();
            mins.push(eig.min());
            if lvl.k >= 2 {
                // R_k A_k acts on coefficients as Ã_k / λ̃_k
                rhos.push(eig.max() / (1.5 * dense[(0, 0)]));
            }
        }
        pass &= mins.iter().all(|&m| m > 0.0) && rhos.iter().all(|&r| r > 0.0 && r < 2.0);
        parts.push(format!(
            "{name}: min eig {} ; rho(R_k A_k) {}",
            fmt_list(&mins, "{:.2e}"),
            fmt_list(&rhos, "{:.3}")
        ));
    }
    Verdict::new(pass, parts.join(" | "))
}

fn fmt_list(v: &[f64], style: &str) -> String {
    let items: Vec<String> = v
        .iter()
        .map(|x| {
            if style.contains('e') {
                format!("{x:.2e}")
            } else {
                format!("{x:.3}")
            }
        })
        .collect();
    format!("[{}]", items.join(", "))
}

/// `M v` with the exact P1 mass matrix.
fn mass_apply(lvl: &MeshLevel, v: &[f64]) -> Vec<f64> {
    let offsets = [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1)];
    (0..lvl.dofs())
        .map(|i| {
            let p = lvl.grid_point(i);
            offsets
                .iter()
                .filter_map(|&(dx, dy)| {
                    let u = GridOffset::new(dx, dy);
                    lvl.grid_index(p.shifted(u))
                        .map(|j| mass_entry(u, lvl) * v[j])
                })
                .sum()
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `M^{-1} b` by conjugate gradients; the mass matrix is well conditioned.
fn mass_solve(lvl: &MeshLevel, b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let stop = 1e-28 * rr;
    for _ in 0..500 {
        if rr <= stop {
            break;
        }
        let mp = mass_apply(lvl, &p);
        let a = rr / dot(&p, &mp);
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += a * pi);
        r.iter_mut().zip(&mp).for_each(|(ri, mi)| *ri -= a * mi);
        let next = dot(&r, &r);
        let beta = next / rr;
        rr = next;
        p.iter_mut()
            .zip(&r)
            .for_each(|(pi, ri)| *pi = ri + beta * *pi);
    }
    x
}

/// Largest eigenvalue of `M^{-1} Ã` (the operator `A_k` on `V_k`) by Lanczos
/// in the `M` inner product with full reorthogonalisation.
fn lambda_max(lvl: &MeshLevel, op: &ToeplitzOperator, steps: usize, rng: &mut impl Rng) -> f64 {
    let n = lvl.dofs();
    let m_norm = |v: &[f64]| dot(v, &mass_apply(lvl, v)).sqrt();
    let mut q: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let s = m_norm(&q);
    q.iter_mut().for_each(|v| *v /= s);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let (mut alphas, mut betas) = (Vec::new(), Vec::new());
    for j in 0..steps.min(n) {
        let aq = op.apply(&basis[j]).unwrap();
        let mut w = mass_solve(lvl, &aq);
        alphas.push(dot(&aq, &basis[j]));
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, &mass_apply(lvl, b));
                w.iter_mut().zip(b).for_each(|(wi, bi)| *wi -= c * bi);
            }
        }
        let beta = m_norm(&w);
        if beta < 1e-12 * alphas[j].abs() || j + 1 == steps {
            break;
        }
        betas.push(beta);
        w.iter_mut().for_each(|v| *v /= beta);
        basis.push(w);
    }
    let k = alphas.len();
    let t = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            alphas[i]
        } else if i.abs_diff(j) == 1 {
            betas[i.min(j)]
        } else {
            0.0
        }
    });
    t.symmetric_eigenvalues().max()
}

fn eigenvalue_scaling() -> Verdict {
    let h = hierarchy(4);
    let params = KernelParams::new(0.75, 0.0).unwrap();
    let target = 2f64.powf(2.0 * params.alpha());
    let mut r = common::rng(8);
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, measure) in [
        ("example1", DirectionalMeasure::axis_quarters()),
        ("example2", uniform_measure(&h)),
    ] {
        let gens = build_generators(&h, &measure, &params).unwrap();
        let lams: Vec<f64> = h
            .levels()
            .iter()
            .zip(&gens)
            .map(|(lvl, g)| lambda_max(lvl, &ToeplitzOperator::new(g), 60, &mut r))
            .collect();
        let ratios: Vec<f64> = lams.windows(2).map(|w| w[1] / w[0]).collect();
        pass &= ratios
            .iter()
            .all(|&q| q >= 0.7 * target && q <= 1.3 * target);
        parts.push(format!("{name} ratios {}", fmt_list(&ratios, "{:.3}")));
    }
    Verdict::new(
        pass,
        format!(
            "{} (target {target:.3} within [0.7, 1.3])",
            parts.join(", ")
        ),
    )
}

fn contraction() -> Verdict {
    let params = KernelParams::new(0.75, 0.0).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for j in 4..=5 {
        let h = hierarchy(j);
        for (name, measure) in [
            ("example1", DirectionalMeasure::axis_quarters()),
            ("example2", uniform_measure(&h)),
        ] {
            let gens = build_generators(&h, &measure, &params).unwrap();
            let mg = Multigrid::new(&h, &gens).unwrap();
            let f = build_load(h.finest(), |_| 1.0);
            let (exact, rep) = mg.solve_pcg(&f, SolveOptions::new(1e-13, 200)).unwrap();
            pass &= rep.converged;
            let energy = |u: &[f64]| {
                let e: Vec<f64> = u.iter().zip(&exact).map(|(a, b)| a - b).collect();
                dot(&e, mg.apply_stiffness(&e).unwrap().values())
            };
            let mut u = vec![0.0; f.len()];
            let mut prev = energy(&u);
            let mut worst: f64 = 0.0;
            let mut steps = 0;
            loop {
                let au = mg.apply_stiffness(&u).unwrap();
                let res: Vec<f64> = f
                    .values()
                    .iter()
                    .zip(au.values())
                    .map(|(a, b)| a - b)
                    .collect();
                let step = mg
                    .vcycle_apply(j, &MomentVector::new(h.finest(), res).unwrap())
                    .unwrap();
                u.iter_mut().zip(&step).for_each(|(a, b)| *a += b);
                steps += 1;
                let now = energy(&u);
                // energy ratio; the seminorm ratio is its square root
                worst = worst.max((now / prev).sqrt());
                prev = now;
                let diff = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if diff <= 1e-6 || steps >= 200 {
                    break;
                }
            }
            pass &= worst < 1.0;
            parts.push(format!(
                "J={j} {name}: max ratio {worst:.3} over {steps} iterations"
            ));
        }
    }
    Verdict::new(pass, parts.join(", "))
}

fn complexity() -> Verdict {
    let mut cfg = preset(Preset::Example1, "5..7", &[SolverKind::VCycle]);
    cfg.timing_repeats = 7;
    let rows = run_benchmark(&cfg).unwrap();
    let series = timing_series(&rows, SolverKind::VCycle).unwrap();
    let ratios: Vec<f64> = series.points.windows(2).map(|w| w[1].1 / w[0].1).collect();
    let pass = ratios.iter().all(|&q| q <= 5.0)
        && (0.9..=1.3).contains(&series.slope)
        && all_converged(&rows);
    let times: Vec<String> = series
        .points
        .iter()
        .map(|(n, t)| format!("{n}: {t:.2e}s"))
        .collect();
    Verdict::new(
        pass,
        format!(
            "per-iteration {} ; ratios {} (≤ 5) ; slope {:.3} (0.9..1.3)",
            times.join(", "),
            fmt_list(&ratios, "{:.3}"),
            series.slope
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut failures = 0;
    let mut report = |id: u32, name: &str, f: &mut dyn FnMut() -> Verdict| {
        let t = Instant::now();
        let v = f();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!(
            "{tag} [{id:>2}] {name}: {} ({:.1}s)",
            v.detail,
            t.elapsed().as_secs_f64()
        );
        if !v.pass {
            failures += 1;
        }
    };
    println!("acceptance criteria");

    let all = SolverKind::ALL;
    let mg_pcg = [SolverKind::VCycle, SolverKind::Pcg];
    let ex1_table = run_benchmark(&preset(Preset::Example1, "4..6", &all)).unwrap();
    let ex1_deep = run_benchmark(&preset(Preset::Example1, "7", &mg_pcg)).unwrap();
    let ex2 = run_benchmark(&preset(Preset::Example2, "4..7", &mg_pcg)).unwrap();
    let ex1: Vec<ResultRow> = ex1_table
        .iter()
        .chain(&ex1_deep)
        .filter(|r| r.solver != SolverKind::Cg)
        .cloned()
        .collect();

    report(1, "iteration counts, example1 preset, J=4..6", &mut || {
        example1_counts(&ex1_table)
    });
    report(2, "iteration counts, example2 preset, J=4..5", &mut || {
        example2_counts(&ex2)
    });
    report(3, "level independence, J=4..7", &mut || {
        level_independence(&ex1, &ex2)
    });
    report(
        4,
        "Toeplitz application vs dense matrix, J<=4",
        &mut toeplitz_vs_dense,
    );
    report(
        5,
        "alpha=1 operator vs half P1 Laplacian, J<=3",
        &mut integer_order,
    );
    report(6, "closed-form kernels vs quadrature", &mut kernel_oracle);
    report(
        7,
        "SPD stiffness and smoother bound, J<=3",
        &mut spd_and_smoother,
    );
    report(
        8,
        "largest eigenvalue scaling, J<=4",
        &mut eigenvalue_scaling,
    );
    report(
        9,
        "energy contraction per V-cycle, J=4..5",
        &mut contraction,
    );
    report(10, "time per iteration vs size, J=5..7", &mut complexity);

    println!(
        "{} of 10 criteria passed ({:.0}s)",
        10 - failures,
        start.elapsed().as_secs_f64()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
