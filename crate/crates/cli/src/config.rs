//! Run configuration: named presets, TOML files and command-line overrides.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fracmg_core::{Atom, DirectionalMeasure, Domain, Hierarchy, KernelParams, SolverKind};
use serde::Deserialize;

use crate::error::{CliError, Result};

/// Inclusive range of finest levels `J`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelRange {
    pub first: usize,
    pub last: usize,
}

impl LevelRange {
    pub fn new(first: usize, last: usize) -> Result<Self> {
        if first == 0 || last < first {
            return Err(CliError::Config(format!(
                "invalid level range {first}..{last}"
            )));
        }
        Ok(Self { first, last })
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> {
        self.first..=self.last
    }

    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl FromStr for LevelRange {
    type Err = CliError;

    /// `"5"` or `"4..6"` (both ends included).
    fn from_str(s: &str) -> Result<Self> {
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Config(format!("bad level '{t}' in '{s}'")))
        };
        match s.split_once("..") {
            Some((a, b)) => Self::new(parse(a)?, parse(b.trim_start_matches('='))?),
            None => {
                let j = parse(s)?;
                Self::new(j, j)
            }
        }
    }
}

impl fmt::Display for LevelRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.first, self.last)
    }
}

/// Directional measure description; `uniform` is resolved per finest level.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MeasureSpec {
    /// Weight 1/4 on each of the four axis directions.
    Axes,
    /// Density ≡ 1 discretized with `n_theta` atoms, by default `4·(n_J + 1)`.
    Uniform { n_theta: Option<usize> },
    /// Explicit `[angle, weight]` pairs.
    Atoms { atoms: Vec<[f64; 2]> },
}

impl MeasureSpec {
    /// Number of atoms the uniform density gets on a finest level with `nx` nodes per row.
    pub fn uniform_atom_count(nx: usize) -> usize {
        4 * (nx + 1)
    }

    pub fn resolve(&self, finest_nx: usize) -> Result<DirectionalMeasure> {
        let measure = match self {
            MeasureSpec::Axes => {
                let atoms = [0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2].map(|theta| Atom {
                    theta,
                    weight: 0.25,
                });
                DirectionalMeasure::new(atoms.to_vec())
            }
            MeasureSpec::Uniform { n_theta } => DirectionalMeasure::discretize(
                |_| 1.0,
                n_theta.unwrap_or(Self::uniform_atom_count(finest_nx)),
            ),
            MeasureSpec::Atoms { atoms } => DirectionalMeasure::new(
                atoms
                    .iter()
                    .map(|&[theta, weight]| Atom { theta, weight })
                    .collect(),
            ),
        };
        Ok(measure?)
    }
}

/// Right-hand side `f`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LoadSpec {
    One,
    Constant { value: f64 },
}

impl LoadSpec {
    pub fn value_at(&self, _point: [f64; 2]) -> f64 {
        match self {
            LoadSpec::One => 1.0,
            LoadSpec::Constant { value } => *value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(CliError::Config(format!("unknown output format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Example1,
    Example2,
}

impl FromStr for Preset {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "example1" => Ok(Preset::Example1),
            "example2" => Ok(Preset::Example2),
            other => Err(CliError::Config(format!(
                "unknown preset '{other}' (expected example1 or example2)"
            ))),
        }
    }
}

/// A fully resolved run description.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub width: f64,
    pub height: f64,
    pub n0: usize,
    pub l0: usize,
    pub levels: LevelRange,
    pub alpha: f64,
    pub c: f64,
    pub measure: MeasureSpec,
    pub load: LoadSpec,
    pub solvers: Vec<SolverKind>,
    pub tol: f64,
    pub max_iter_mg: usize,
    pub max_iter_cg: usize,
    /// CG is skipped above this finest level.
    pub cg_max_level: Option<usize>,
    /// Solves per (level, solver); the fastest per-iteration time is reported.
    pub timing_repeats: usize,
    pub cache_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let measure = match preset {
            Preset::Example1 => MeasureSpec::Axes,
            Preset::Example2 => MeasureSpec::Uniform { n_theta: None },
        };
        Self {
            width: 2.0,
            height: 2.0,
            n0: 4,
            l0: 4,
            levels: LevelRange { first: 4, last: 6 },
            alpha: 0.75,
            c: 0.0,
            measure,
            load: LoadSpec::One,
            solvers: SolverKind::ALL.to_vec(),
            tol: 1e-6,
            max_iter_mg: SolverKind::VCycle.default_max_iter(),
            max_iter_cg: SolverKind::Cg.default_max_iter(),
            cg_max_level: Some(6),
            timing_repeats: 1,
            cache_dir: None,
            out: None,
            format: OutputFormat::Csv,
        }
    }

    /// Reads a TOML file. Its optional `preset` key selects the base values
    /// (Example 1 when absent) that the remaining keys override.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let base = match &file.preset {
            Some(p) => p.parse()?,
            None => Preset::Example1,
        };
        let mut cfg = Self::preset(base);
        file.apply(&mut cfg)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad(format!("tolerance must be positive, got {}", self.tol));
        }
        if self.max_iter_mg == 0 || self.max_iter_cg == 0 {
            return bad("iteration caps must be positive".into());
        }
        if self.timing_repeats == 0 {
            return bad("timing_repeats must be positive".into());
        }
        KernelParams::new(self.alpha, self.c)?;
        self.domain()?;
        // surfaces mesh-size errors before any work is done
        Hierarchy::build(self.n0, self.l0, self.levels.last, self.domain()?)?;
        self.measure
            .resolve(self.n0 * (1 << self.levels.last) - 1)?;
        Ok(())
    }

    pub fn domain(&self) -> Result<Domain> {
        Ok(Domain::new(self.width, self.height)?)
    }

    pub fn params(&self) -> Result<KernelParams> {
        Ok(KernelParams::new(self.alpha, self.c)?)
    }

    pub fn hierarchy(&self, finest: usize) -> Result<Hierarchy> {
        Ok(Hierarchy::build(self.n0, self.l0, finest, self.domain()?)?)
    }

    pub fn max_iter(&self, kind: SolverKind) -> usize {
        match kind {
            SolverKind::Cg => self.max_iter_cg,
            SolverKind::VCycle | SolverKind::Pcg => self.max_iter_mg,
        }
    }
}

/// Parses `"vcycle,pcg"`; an empty string selects no solver.
pub fn parse_solvers(s: &str) -> Result<Vec<SolverKind>> {
    let mut out = Vec::new();
    for name in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let kind: SolverKind = name.parse()?;
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    Ok(out)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    preset: Option<String>,
    width: Option<f64>,
    height: Option<f64>,
    n0: Option<usize>,
    l0: Option<usize>,
    levels: Option<String>,
    alpha: Option<f64>,
    c: Option<f64>,
    measure: Option<MeasureSpec>,
    load: Option<LoadSpec>,
    solvers: Option<Vec<String>>,
    tol: Option<f64>,
    max_iter_mg: Option<usize>,
    max_iter_cg: Option<usize>,
    cg_max_level: Option<usize>,
    timing_repeats: Option<usize>,
    cache_dir: Option<PathBuf>,
    out: Option<PathBuf>,
    format: Option<OutputFormat>,
}

impl ConfigFile {
    fn apply(self, cfg: &mut RunConfig) -> Result<()> {
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = self.$field { cfg.$field = v; } )* };
        }
        set!(
            width,
            height,
            n0,
            l0,
            alpha,
            c,
            measure,
            load,
            tol,
            max_iter_mg,
            max_iter_cg,
            timing_repeats,
            format
        );
        if let Some(levels) = self.levels {
            cfg.levels = levels.parse()?;
        }
        if let Some(solvers) = self.solvers {
            cfg.solvers = parse_solvers(&solvers.join(","))?;
        }
        if self.cg_max_level.is_some() {
            cfg.cg_max_level = self.cg_max_level;
        }
        if self.cache_dir.is_some() {
            cfg.cache_dir = self.cache_dir;
        }
        if self.out.is_some() {
            cfg.out = self.out;
        }
        Ok(())
    }
}
