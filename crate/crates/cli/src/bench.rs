//! Benchmark orchestration and result emission.

use std::io::Write;

use fracmg_core::assembly::{build_generators, build_load};
use fracmg_core::{Multigrid, SolveOptions, SolverKind};
use serde::{Serialize, Serializer};

use crate::cache::GeneratorCache;
use crate::config::{OutputFormat, RunConfig};
use crate::error::{CliError, Result};

/// One solver run; the field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub level: usize,
    pub dofs: usize,
    #[serde(serialize_with = "solver_name")]
    pub solver: SolverKind,
    pub iters: usize,
    pub total_seconds: f64,
    pub seconds_per_iteration: f64,
    pub final_diff_inf: f64,
    pub converged: bool,
}

fn solver_name<S: Serializer>(kind: &SolverKind, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(kind.name())
}

pub const CSV_HEADER: &str =
    "level,dofs,solver,iters,total_seconds,seconds_per_iteration,final_diff_inf,converged";

fn open_cache(cfg: &RunConfig) -> Result<Option<GeneratorCache>> {
    Ok(cfg
        .cache_dir
        .as_ref()
        .map(GeneratorCache::new)
        .transpose()?)
}

/// Multigrid operators for finest level `j` of `cfg`, using the cache when configured.
pub fn build_multigrid(
    cfg: &RunConfig,
    j: usize,
    cache: Option<&GeneratorCache>,
) -> Result<Multigrid> {
    let hierarchy = cfg.hierarchy(j)?;
    let measure = cfg.measure.resolve(hierarchy.finest().nx)?;
    let params = cfg.params()?;
    let generators = match cache {
        Some(c) => c.load_or_build(&hierarchy, &measure, &params)?,
        None => build_generators(&hierarchy, &measure, &params)?,
    };
    Ok(Multigrid::new(&hierarchy, &generators)?)
}

/// Populates the cache for every finest level of the range.
pub fn assemble(cfg: &RunConfig) -> Result<()> {
    let cache = open_cache(cfg)?
        .ok_or_else(|| CliError::Usage("assemble needs a cache directory".into()))?;
    for j in cfg.levels.iter() {
        build_multigrid(cfg, j, Some(&cache))?;
        log::info!(
            "level {j} generators available in {}",
            cache.dir().display()
        );
    }
    Ok(())
}

/// Solves the configured problem for every finest level and solver.
/// Levels run one after another so that timings do not contend.
pub fn run_benchmark(cfg: &RunConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    if cfg.solvers.is_empty() {
        return Ok(rows);
    }
    let cache = open_cache(cfg)?;
    for j in cfg.levels.iter() {
        let kinds: Vec<SolverKind> = cfg
            .solvers
            .iter()
            .copied()
            .filter(|&k| {
                let skip = k == SolverKind::Cg && cfg.cg_max_level.is_some_and(|m| j > m);
                if skip {
                    log::info!("skipping cg at level {j} (cg_max_level)");
                }
                !skip
            })
            .collect();
        if kinds.is_empty() {
            continue;
        }
        let mg = build_multigrid(cfg, j, cache.as_ref())?;
        let finest = mg.finest().level();
        let f = build_load(finest, |p| cfg.load.value_at(p));
        for kind in kinds {
            let opts = SolveOptions::new(cfg.tol, cfg.max_iter(kind));
            let mut best: Option<fracmg_core::SolveReport> = None;
            for _ in 0..cfg.timing_repeats {
                let (_, report) = mg.solve(kind, &f, opts)?;
                if best
                    .as_ref()
                    .is_none_or(|b| report.seconds_per_iteration() < b.seconds_per_iteration())
                {
                    best = Some(report);
                }
            }
            let report = best.expect("at least one repeat");
            if let Some(failure) = report.failure {
                log::warn!(
                    "{kind} at level {j}: {failure} after {} iterations",
                    report.iterations
                );
            }
            rows.push(ResultRow {
                level: j,
                dofs: finest.dofs(),
                solver: kind,
                iters: report.iterations,
                total_seconds: report.total_seconds(),
                seconds_per_iteration: report.seconds_per_iteration(),
                final_diff_inf: report.final_diff_inf,
                converged: report.converged,
            });
        }
    }
    Ok(rows)
}

pub fn write_rows(
    rows: &[ResultRow],
    format: OutputFormat,
    out: impl Write,
) -> std::io::Result<()> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(out);
            w.write_record(CSV_HEADER.split(','))?;
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()
        }
        OutputFormat::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, rows)?;
            writeln!(out)
        }
    }
}

/// Per-iteration times against problem size for one solver.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingSeries {
    pub solver: SolverKind,
    /// `(dofs, seconds_per_iteration)`, increasing in `dofs`.
    pub points: Vec<(usize, f64)>,
    /// Least-squares slope of `log(seconds)` against `log(dofs)`.
    pub slope: f64,
}

pub fn timing_series(rows: &[ResultRow], solver: SolverKind) -> Result<TimingSeries> {
    let mut points: Vec<(usize, f64)> = rows
        .iter()
        .filter(|r| r.solver == solver)
        .map(|r| (r.dofs, r.seconds_per_iteration))
        .collect();
    if points.len() < 2 {
        return Err(CliError::Usage(format!(
            "a timing series needs at least two levels of {solver} results, got {}",
            points.len()
        )));
    }
    points.sort_by_key(|p| p.0);
    if points.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(CliError::Usage(
            "repeated problem size in timing series".into(),
        ));
    }
    if points.iter().any(|p| p.1.is_nan() || p.1 <= 0.0) {
        return Err(CliError::Usage("timing series needs positive times".into()));
    }
    let logs: Vec<(f64, f64)> = points
        .iter()
        .map(|&(n, t)| ((n as f64).ln(), t.ln()))
        .collect();
    Ok(TimingSeries {
        solver,
        slope: loglog_slope(&logs),
        points,
    })
}

fn loglog_slope(logs: &[(f64, f64)]) -> f64 {
    let n = logs.len() as f64;
    let (mx, my) = logs
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + p.0 / n, b + p.1 / n));
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

impl TimingSeries {
    pub fn write(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "# solver: {}", self.solver)?;
        writeln!(out, "# fitted log-log slope: {:.4}", self.slope)?;
        writeln!(out, "dofs,seconds_per_iteration")?;
        for (n, t) in &self.points {
            writeln!(out, "{n},{t:e}")?;
        }
        Ok(())
    }
}
