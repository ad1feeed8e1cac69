use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fracmg::bench::{self, ResultRow};
use fracmg::config::{parse_solvers, LevelRange, OutputFormat, Preset, RunConfig};
use fracmg::{CliError, Result};
use fracmg_core::SolverKind;

#[derive(Parser)]
#[command(
    name = "fracmg",
    version,
    about = "Multigrid benchmarks for 2-D fractional diffusion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute generator vectors and store them in the cache directory.
    Assemble(RunArgs),
    /// Solve one problem on one finest level.
    Solve(RunArgs),
    /// Iteration-count table over a range of finest levels.
    Bench(RunArgs),
    /// Time per iteration against problem size, with the fitted log-log slope.
    Timing(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration: example1 or example2.
    #[arg(long)]
    preset: Option<String>,
    /// Finest levels, `J` or `a..b`.
    #[arg(long)]
    levels: Option<String>,
    /// Comma-separated subset of vcycle,pcg,cg.
    #[arg(long)]
    solvers: Option<String>,
    /// Stopping tolerance on the sup-norm of successive iterates.
    #[arg(long)]
    tol: Option<f64>,
    /// Directory for cached generator vectors; required by `assemble`
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => RunConfig::from_file(path)?,
            (None, Some(p)) => RunConfig::preset(p.parse::<Preset>()?),
            (None, None) => RunConfig::preset(Preset::Example1),
        };
        if let Some(levels) = &self.levels {
            cfg.levels = levels.parse()?;
        }
        if let Some(solvers) = &self.solvers {
            cfg.solvers = parse_solvers(solvers)?;
        }
        if let Some(tol) = self.tol {
            cfg.tol = tol;
        }
        if let Some(dir) = &self.cache_dir {
            cfg.cache_dir = Some(dir.clone());
        }
        if let Some(out) = &self.out {
            cfg.out = Some(out.clone());
        }
        if let Some(format) = &self.format {
            cfg.format = format.parse::<OutputFormat>()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn with_output(
    path: Option<&Path>,
    write: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Result<()> {
    let res = match path {
        Some(p) => File::create(p).and_then(|f| {
            let mut w = BufWriter::new(f);
            write(&mut w)?;
            w.flush()
        }),
        None => write(&mut io::stdout().lock()),
    };
    res.map_err(|source| CliError::Output {
        path: path.unwrap_or(Path::new("<stdout>")).to_path_buf(),
        source,
    })
}

fn all_converged(rows: &[ResultRow]) -> bool {
    rows.iter().all(|r| r.converged)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Assemble(args) => {
            bench::assemble(&args.resolve()?)?;
            Ok(true)
        }
        Command::Solve(args) => {
            let mut cfg = args.resolve()?;
            if args.levels.is_none() {
                cfg.levels = LevelRange::new(cfg.levels.last, cfg.levels.last)?;
            } else if cfg.levels.len() != 1 {
                return Err(CliError::Usage(format!(
                    "solve takes a single level, got {}",
                    cfg.levels
                )));
            }
            let rows = bench::run_benchmark(&cfg)?;
            with_output(cfg.out.as_deref(), |w| {
                bench::write_rows(&rows, cfg.format, w)
            })?;
            Ok(all_converged(&rows))
        }
        Command::Bench(args) => {
            let cfg = args.resolve()?;
            let rows = bench::run_benchmark(&cfg)?;
            with_output(cfg.out.as_deref(), |w| {
                bench::write_rows(&rows, cfg.format, w)
            })?;
            Ok(all_converged(&rows))
        }
        Command::Timing(args) => {
            let mut cfg = args.resolve()?;
            let solver = if args.solvers.is_some() {
                *cfg.solvers
                    .first()
                    .ok_or_else(|| CliError::Usage("timing needs a solver".into()))?
            } else {
                SolverKind::VCycle
            };
            cfg.solvers = vec![solver];
            cfg.cg_max_level = None;
            let rows = bench::run_benchmark(&cfg)?;
            let series = bench::timing_series(&rows, solver)?;
            with_output(cfg.out.as_deref(), |w| series.write(w))?;
            Ok(all_converged(&rows))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            log::error!("at least one solve did not converge");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("fracmg: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
