//! V-cycle operator and the three iterative solvers built on it.
//!
//! Iterates and corrections are nodal coefficient vectors, right-hand sides and
//! residuals are moment vectors. The smoother scales moments by `1/λ̃_k` with
//! `λ̃_k = 3/2·(Ã_k)_ii`, moments are restricted with the transpose of the
//! nodal prolongation, and level 1 is solved exactly.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{Cholesky, DVector, Dyn};

use crate::assembly::{GeneratorVector, MomentVector};
use crate::error::{config, usage, Error, Result};
use crate::mesh::{prolongation_weights, Hierarchy, MeshLevel, Prolongation};
use crate::toeplitz::ToeplitzOperator;

/// Ratio of the smoother scale to the diagonal stiffness entry.
pub const SMOOTHER_FACTOR: f64 = 1.5;

/// Consecutive growing updates after which the stationary iteration gives up.
pub const DIVERGENCE_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverKind {
    /// Stationary iteration `u ← u + B_J(f − A u)`.
    VCycle,
    /// Conjugate gradients preconditioned by `B_J`.
    Pcg,
    /// Unpreconditioned conjugate gradients.
    Cg,
}

impl SolverKind {
    pub const ALL: [SolverKind; 3] = [SolverKind::VCycle, SolverKind::Pcg, SolverKind::Cg];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::VCycle => "vcycle",
            SolverKind::Pcg => "pcg",
            SolverKind::Cg => "cg",
        }
    }

    /// Default iteration cap.
    pub fn default_max_iter(self) -> usize {
        match self {
            SolverKind::VCycle | SolverKind::Pcg => 200,
            SolverKind::Cg => 5000,
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vcycle" | "v-cycle" | "mg" => Ok(SolverKind::VCycle),
            "pcg" => Ok(SolverKind::Pcg),
            "cg" => Ok(SolverKind::Cg),
            other => config(format!(
                "unknown solver '{other}' (expected vcycle, pcg or cg)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Stop once `‖u^k − u^{k−1}‖_∞ ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
}

impl SolveOptions {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        Self { tol, max_iter }
    }

    /// Tolerance `1e−6` and the solver's default cap.
    pub fn defaults(kind: SolverKind) -> Self {
        Self {
            tol: 1e-6,
            max_iter: kind.default_max_iter(),
        }
    }
}

/// Why a solve stopped without meeting the tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveFailure {
    IterationCap,
    /// The update grew for [`DIVERGENCE_WINDOW`] consecutive iterations.
    Diverged,
    /// `⟨B g, g⟩ ≤ 0` was observed for a nonzero residual.
    IndefinitePreconditioner,
    /// `⟨A p, p⟩ ≤ 0` was observed for a nonzero search direction.
    IndefiniteOperator,
}

impl fmt::Display for SolveFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveFailure::IterationCap => "iteration cap reached",
            SolveFailure::Diverged => "diverged",
            SolveFailure::IndefinitePreconditioner => "preconditioner lost positivity",
            SolveFailure::IndefiniteOperator => "operator lost positivity",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub kind: SolverKind,
    pub iterations: usize,
    /// Wall time of each iteration, in seconds.
    pub per_iteration_seconds: Vec<f64>,
    /// Last `‖u^k − u^{k−1}‖_∞`.
    pub final_diff_inf: f64,
    pub converged: bool,
    pub failure: Option<SolveFailure>,
}

impl SolveReport {
    pub fn total_seconds(&self) -> f64 {
        self.per_iteration_seconds.iter().sum()
    }

    pub fn seconds_per_iteration(&self) -> f64 {
        if self.iterations == 0 {
            0.0
        } else {
            self.total_seconds() / self.iterations as f64
        }
    }
}

/// Operators of one level.
#[derive(Debug, Clone)]
pub struct LevelOperator {
    level: MeshLevel,
    stiffness: ToeplitzOperator,
    lambda_tilde: f64,
    /// Map from level `k−1` coefficients to this level; `None` on level 1.
    prolongation: Option<Prolongation>,
}

impl LevelOperator {
    pub fn level(&self) -> &MeshLevel {
        &self.level
    }

    pub fn stiffness(&self) -> &ToeplitzOperator {
        &self.stiffness
    }

    pub fn lambda_tilde(&self) -> f64 {
        self.lambda_tilde
    }

    pub fn prolongation(&self) -> Option<&Prolongation> {
        self.prolongation.as_ref()
    }

    /// `R_k g`: coefficient `m` is `g_m / λ̃_k`.
    pub fn smooth(&self, g: &MomentVector) -> Result<Vec<f64>> {
        self.check(g)?;
        if self.level.k == 1 {
            return usage("level 1 is solved exactly, not smoothed");
        }
        Ok(self.smooth_raw(g.values()))
    }

    fn smooth_raw(&self, g: &[f64]) -> Vec<f64> {
        g.iter().map(|v| v / self.lambda_tilde).collect()
    }

    /// Moments on level `k−1` of the functional whose level-`k` moments are `r`.
    pub fn restrict_moments(&self, r: &MomentVector) -> Result<MomentVector> {
        self.check(r)?;
        match &self.prolongation {
            Some(p) => Ok(MomentVector::from_raw(
                self.level.k - 1,
                p.restrict(r.values()),
            )),
            None => usage("level 1 has no coarser level"),
        }
    }

    fn check(&self, g: &MomentVector) -> Result<()> {
        if g.level() != self.level.k || g.len() != self.level.dofs() {
            return usage(format!(
                "moment vector of level {} ({} values) used on level {} ({} unknowns)",
                g.level(),
                g.len(),
                self.level.k,
                self.level.dofs()
            ));
        }
        Ok(())
    }
}

/// The V-cycle hierarchy: operators for levels `1..=J` and the exact coarse solver.
#[derive(Clone)]
pub struct Multigrid {
    levels: Vec<LevelOperator>,
    coarse: Cholesky<f64, Dyn>,
}

impl fmt::Debug for Multigrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Multigrid")
            .field("levels", &self.levels)
            .finish_non_exhaustive()
    }
}

impl Multigrid {
    /// `generators[k−1]` must belong to level `k` of `hierarchy`.
    pub fn new(hierarchy: &Hierarchy, generators: &[GeneratorVector]) -> Result<Self> {
        if generators.len() != hierarchy.num_levels() {
            return usage(format!(
                "{} generator vectors for {} levels",
                generators.len(),
                hierarchy.num_levels()
            ));
        }
        let mut levels = Vec::with_capacity(generators.len());
        for (i, (lvl, gen)) in hierarchy.levels().iter().zip(generators).enumerate() {
            if gen.level() != lvl {
                return usage(format!(
                    "generator {} does not belong to level {}",
                    i + 1,
                    lvl.k
                ));
            }
            let prolongation = match i {
                0 => None,
                _ => Some(prolongation_weights(&hierarchy.levels()[i - 1], lvl)?),
            };
            levels.push(LevelOperator {
                level: *lvl,
                stiffness: ToeplitzOperator::new(gen),
                lambda_tilde: SMOOTHER_FACTOR * gen.diagonal(),
                prolongation,
            });
        }
        let coarse = Cholesky::new(generators[0].to_dense()).map_or_else(
            || config("level-1 stiffness matrix is not positive definite"),
            Ok,
        )?;
        Ok(Self { levels, coarse })
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Operators of level `k` (one-based).
    pub fn level(&self, k: usize) -> &LevelOperator {
        &self.levels[k - 1]
    }

    pub fn finest(&self) -> &LevelOperator {
        self.levels.last().expect("at least one level")
    }

    /// `Ã_J U` on the finest level.
    pub fn apply_stiffness(&self, coeffs: &[f64]) -> Result<MomentVector> {
        self.finest().stiffness.apply_stiffness(coeffs)
    }

    /// `B_k g`.
    pub fn vcycle_apply(&self, k: usize, g: &MomentVector) -> Result<Vec<f64>> {
        if k == 0 || k > self.levels.len() {
            return usage(format!("level {k} is not in 1..={}", self.levels.len()));
        }
        self.level(k).check(g)?;
        Ok(self.vcycle_raw(k, g.values()))
    }

    fn vcycle_raw(&self, k: usize, g: &[f64]) -> Vec<f64> {
        if k == 1 {
            return self
                .coarse
                .solve(&DVector::from_column_slice(g))
                .as_slice()
                .to_vec();
        }
        let op = self.level(k);
        let apply = |v: &[f64]| op.stiffness.apply(v).expect("level-sized vector");
        let p = op
            .prolongation
            .as_ref()
            .expect("levels above 1 have a prolongation");

        let mut v = op.smooth_raw(g);
        let residual = sub(g, &apply(&v));
        let correction = p.prolong(&self.vcycle_raw(k - 1, &p.restrict(&residual)));
        axpy(1.0, &correction, &mut v);
        let residual = sub(g, &apply(&v));
        axpy(1.0, &op.smooth_raw(&residual), &mut v);
        v
    }

    fn check_rhs(&self, f: &MomentVector) -> Result<()> {
        self.finest().check(f)
    }

    pub fn solve(
        &self,
        kind: SolverKind,
        f: &MomentVector,
        opts: SolveOptions,
    ) -> Result<(Vec<f64>, SolveReport)> {
        match kind {
            SolverKind::VCycle => self.solve_vcycle(f, opts),
            SolverKind::Pcg => self.solve_pcg(f, opts),
            SolverKind::Cg => self.solve_cg(f, opts),
        }
    }

    /// Stationary iteration `u^{k+1} = u^k + B_J(f − A u^k)` from `u^0 = 0`.
    pub fn solve_vcycle(
        &self,
        f: &MomentVector,
        opts: SolveOptions,
    ) -> Result<(Vec<f64>, SolveReport)> {
        self.check_rhs(f)?;
        let j = self.levels.len();
        let op = self.finest();
        let mut u = vec![0.0; f.len()];
        let mut report = SolveReport::new(SolverKind::VCycle);
        let mut growing = 0;
        while report.iterations < opts.max_iter {
            let start = Instant::now();
            let residual = sub(f.values(), &op.stiffness.apply(&u)?);
            let update = self.vcycle_raw(j, &residual);
            axpy(1.0, &update, &mut u);
            let diff = norm_inf(&update);
            report
                .per_iteration_seconds
                .push(start.elapsed().as_secs_f64());

            growing = if report.iterations > 0 && diff > report.final_diff_inf {
                growing + 1
            } else {
                0
            };
            report.iterations += 1;
            report.final_diff_inf = diff;
            if diff <= opts.tol {
                report.converged = true;
                return Ok((u, report));
            }
            if growing >= DIVERGENCE_WINDOW || !diff.is_finite() {
                report.failure = Some(SolveFailure::Diverged);
                return Ok((u, report));
            }
        }
        report.failure = Some(SolveFailure::IterationCap);
        Ok((u, report))
    }

    /// Conjugate gradients preconditioned by `B_J`.
    pub fn solve_pcg(
        &self,
        f: &MomentVector,
        opts: SolveOptions,
    ) -> Result<(Vec<f64>, SolveReport)> {
        self.check_rhs(f)?;
        let j = self.levels.len();
        self.conjugate_gradients(SolverKind::Pcg, f, opts, |r| self.vcycle_raw(j, r))
    }

    /// Unpreconditioned conjugate gradients on the coefficient system `Ã_J U = F`.
    pub fn solve_cg(
        &self,
        f: &MomentVector,
        opts: SolveOptions,
    ) -> Result<(Vec<f64>, SolveReport)> {
        self.check_rhs(f)?;
        self.conjugate_gradients(SolverKind::Cg, f, opts, |r| r.to_vec())
    }

    fn conjugate_gradients(
        &self,
        kind: SolverKind,
        f: &MomentVector,
        opts: SolveOptions,
        precondition: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Result<(Vec<f64>, SolveReport)> {
        let op = self.finest();
        let mut report = SolveReport::new(kind);
        let mut u = vec![0.0; f.len()];
        let mut r = f.values().to_vec();

        let start = Instant::now();
        let mut z = precondition(&r);
        let mut rz = dot(&z, &r);
        let mut p = z.clone();
        let mut setup = start.elapsed().as_secs_f64();
        if norm_inf(&r) == 0.0 {
            report.iterations = 1;
            report.per_iteration_seconds.push(setup);
            report.converged = true;
            return Ok((u, report));
        }
        if rz <= 0.0 || !rz.is_finite() {
            report.failure = Some(SolveFailure::IndefinitePreconditioner);
            return Ok((u, report));
        }

        while report.iterations < opts.max_iter {
            let start = Instant::now();
            let ap = op.stiffness.apply(&p)?;
            let pap = dot(&p, &ap);
            if pap <= 0.0 || !pap.is_finite() {
                report.failure = Some(SolveFailure::IndefiniteOperator);
                return Ok((u, report));
            }
            let step = rz / pap;
            axpy(step, &p, &mut u);
            axpy(-step, &ap, &mut r);
            let diff = step.abs() * norm_inf(&p);
            report.iterations += 1;
            report.final_diff_inf = diff;
            if diff <= opts.tol {
                report
                    .per_iteration_seconds
                    .push(start.elapsed().as_secs_f64() + setup);
                report.converged = true;
                return Ok((u, report));
            }
            z = precondition(&r);
            let rz_next = dot(&z, &r);
            report
                .per_iteration_seconds
                .push(start.elapsed().as_secs_f64() + setup);
            setup = 0.0;
            if rz_next <= 0.0 || !rz_next.is_finite() {
                report.failure = Some(if kind == SolverKind::Pcg {
                    SolveFailure::IndefinitePreconditioner
                } else {
                    SolveFailure::IndefiniteOperator
                });
                return Ok((u, report));
            }
            let beta = rz_next / rz;
            rz = rz_next;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        report.failure = Some(SolveFailure::IterationCap);
        Ok((u, report))
    }
}

impl SolveReport {
    fn new(kind: SolverKind) -> Self {
        Self {
            kind,
            iterations: 0,
            per_iteration_seconds: Vec::new(),
            final_diff_inf: 0.0,
            converged: false,
            failure: None,
        }
    }
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}
