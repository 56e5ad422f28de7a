//! Flat `key = value` experiment configuration with dotted section keys.
//!
//! Every key has a default; the resolved configuration is echoed in full as a
//! manifest so that a run can be reproduced from its output directory alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::catalog::{catalog_on, default_data, Problem};
use crate::error::{Error, Result};
use crate::grid::{Field, PeriodicGrid};
use crate::nonlinearity::{Flux, FluxProfile, PiecewiseLinear, Saturation};
use crate::nonlocal::{ConstantMode, FracOrder, SplitConfig, TailModel};
use crate::solver::{ContinuationSchedule, Damping, FluxScheme, ProblemTemplate, SolverConfig};
use crate::verify::{EntropyCheckConfig, VerifyConfig};

/// Known keys and their defaults. `auto` defers to a value derived from the
/// grid; the manifest records the derived value.
pub const KEYS: &[(&str, &str)] = &[
    ("b.lambda", "1"),
    ("b.plateau_start", "0.25"),
    ("b.plateau_width", "0.5"),
    ("b.table", ""),
    ("data.path", ""),
    ("data.source", "default"),
    ("flux.c", "1"),
    ("flux.table", ""),
    ("grid.dim", "1"),
    ("grid.extent", "2"),
    ("grid.n", "256"),
    ("operator_test.n", "32,64,128"),
    ("operator_test.s", "0.3,0.5,1,1.5"),
    ("output.dir", "fraclap_out"),
    ("problem.b", "linear"),
    ("problem.flux", "zero"),
    ("problem.s", "0.5"),
    ("problem.scheme", "central"),
    ("schedule.eps0", "1"),
    ("schedule.steps", "14"),
    ("seed", "0"),
    ("solver.damping", "auto"),
    ("solver.max_iters", "100000"),
    ("solver.tol", "1e-10"),
    ("split.constant", "calibrated"),
    ("split.r", "auto"),
    ("split.tail", "periodic_images"),
    ("split.tail_radius", "auto"),
    ("sweep.eps0", "1,2"),
    ("sweep.s", "0.5,1"),
    ("verify.catalog", "default"),
    ("verify.entropy", "true"),
    ("verify.inline_solve", "true"),
    ("verify.levels", "9"),
    ("verify.pairs", "10"),
    ("verify.smoothing_n", "1000"),
    ("verify.solution", "auto"),
    ("verify.tolerance", "1e-4"),
];

/// Parsed but untyped configuration: key → (line, value). Line 0 marks a
/// value set on the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, (usize, String)>,
    base_dir: PathBuf,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                return Err(Error::Config {
                    line,
                    key: content.to_string(),
                    message: "expected `key = value`".into(),
                });
            };
            let key = k.trim().to_string();
            if !KEYS.iter().any(|(name, _)| *name == key) {
                return Err(Error::Config {
                    line,
                    key,
                    message: "unknown key".into(),
                });
            }
            if let Some((first, _)) = entries.get(&key) {
                return Err(Error::Config {
                    line,
                    key,
                    message: format!("duplicate key (first set on line {first})"),
                });
            }
            entries.insert(key, (line, v.trim().to_string()));
        }
        Ok(RawConfig {
            entries,
            base_dir: PathBuf::from("."),
        })
    }

    /// Reads a file; relative paths inside it resolve against its directory.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut raw = Self::parse(&text)?;
        raw.base_dir = path
            .parent()
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        Ok(raw)
    }

    /// Sets a key from the command line.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.iter().any(|(name, _)| *name == key) {
            return Err(Error::Config {
                line: 0,
                key: key.to_string(),
                message: "unknown key".into(),
            });
        }
        self.entries.insert(key.to_string(), (0, value.to_string()));
        Ok(())
    }

    fn get(&self, key: &str) -> (usize, &str) {
        match self.entries.get(key) {
            Some((line, v)) => (*line, v.as_str()),
            None => {
                let default = KEYS
                    .iter()
                    .find(|(name, _)| *name == key)
                    .map(|(_, d)| *d)
                    .expect("key is listed in KEYS");
                (0, default)
            }
        }
    }

    fn path(&self, value: &str) -> PathBuf {
        let p = PathBuf::from(value);
        if p.is_absolute() {
            p
        } else {
            self.base_dir.join(p)
        }
    }
}

/// Typed view of a raw configuration, recording every resolved value.
struct Resolver<'a> {
    raw: &'a RawConfig,
    resolved: BTreeMap<String, String>,
}

impl<'a> Resolver<'a> {
    fn err(&self, key: &str, message: String) -> Error {
        Error::Config {
            line: self.raw.get(key).0,
            key: key.to_string(),
            message,
        }
    }

    fn text(&mut self, key: &str) -> String {
        let v = self.raw.get(key).1.to_string();
        self.resolved.insert(key.to_string(), v.clone());
        v
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Result<T> {
        let v = self.text(key);
        v.parse::<T>()
            .map_err(|_| self.err(key, format!("expected {what}, got `{v}`")))
    }

    fn real(&mut self, key: &str) -> Result<f64> {
        let x: f64 = self.parsed(key, "a real number")?;
        if !x.is_finite() {
            return Err(self.err(key, "value must be finite".into()));
        }
        Ok(x)
    }

    fn reals(&mut self, key: &str) -> Result<Vec<f64>> {
        let v = self.text(key);
        v.split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| self.err(key, format!("expected a list of reals, got `{v}`")))
            })
            .collect()
    }

    fn integers(&mut self, key: &str) -> Result<Vec<usize>> {
        let v = self.text(key);
        v.split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| self.err(key, format!("expected a list of integers, got `{v}`")))
            })
            .collect()
    }

    fn flag(&mut self, key: &str) -> Result<bool> {
        self.parsed(key, "true or false")
    }

    /// `auto` or a real; records the value actually used.
    fn auto_real(&mut self, key: &str, auto: f64) -> Result<f64> {
        let v = self.raw.get(key).1;
        let x = if v == "auto" { auto } else { self.real(key)? };
        self.resolved.insert(key.to_string(), format!("{x}"));
        Ok(x)
    }

    /// Wraps a module error as a config error on `key`.
    fn check<T>(&self, key: &str, r: Result<T>) -> Result<T> {
        r.map_err(|e| self.err(key, e.to_string()))
    }
}

/// Where the data of the configured problem comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Default,
    File(PathBuf),
}

/// Which problems `verify` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyTarget {
    DefaultCatalog,
    Configured,
}

/// A fully resolved experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub grid: PeriodicGrid,
    pub template: ProblemTemplate,
    pub data: DataSource,
    pub schedule: ContinuationSchedule,
    pub eps0: f64,
    pub steps: usize,
    pub solver: SolverConfig,
    pub verify: VerifyConfig,
    pub verify_target: VerifyTarget,
    pub inline_solve: bool,
    pub solution_path: PathBuf,
    pub operator_dims: usize,
    pub operator_s: Vec<f64>,
    pub operator_n: Vec<usize>,
    pub sweep_s: Vec<f64>,
    pub sweep_eps0: Vec<f64>,
    pub out_dir: PathBuf,
    pub seed: u64,
    resolved: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let mut r = Resolver {
            raw,
            resolved: BTreeMap::new(),
        };
        let dim: usize = r.parsed("grid.dim", "1 or 2")?;
        let extent = r.real("grid.extent")?;
        let n: usize = r.parsed("grid.n", "a power of two")?;
        let grid = r.check("grid.n", PeriodicGrid::new(dim, extent, n))?;

        let s_val = r.real("problem.s")?;
        let s = r.check("problem.s", FracOrder::for_equation(s_val))?;
        let b = saturation(&mut r)?;
        let flux = flux(&mut r, dim)?;
        let scheme_name = r.text("problem.scheme");
        let scheme = FluxScheme::parse(&scheme_name).ok_or_else(|| {
            r.err(
                "problem.scheme",
                format!("expected central or engquist_osher, got `{scheme_name}`"),
            )
        })?;

        let default_split = SplitConfig::default_for(&grid);
        let constant_mode = match r.text("split.constant").as_str() {
            "calibrated" => ConstantMode::Calibrated,
            "paper" => ConstantMode::Paper,
            other => {
                return Err(r.err(
                    "split.constant",
                    format!("expected calibrated or paper, got `{other}`"),
                ))
            }
        };
        let tail = match r.text("split.tail").as_str() {
            "periodic_images" => TailModel::PeriodicImages,
            "mean_field" => TailModel::MeanField,
            other => {
                return Err(r.err(
                    "split.tail",
                    format!("expected periodic_images or mean_field, got `{other}`"),
                ))
            }
        };
        let split = SplitConfig {
            r: r.auto_real("split.r", default_split.r)?,
            tail_radius: r.auto_real("split.tail_radius", default_split.tail_radius)?,
            constant_mode,
            tail,
        };
        r.check("split.r", split.validate(&grid))?;

        let data = match r.text("data.source").as_str() {
            "default" => {
                r.text("data.path");
                DataSource::Default
            }
            "file" => {
                let p = r.text("data.path");
                if p.is_empty() {
                    return Err(r.err("data.path", "data.source = file needs data.path".into()));
                }
                DataSource::File(raw.path(&p))
            }
            other => {
                return Err(r.err(
                    "data.source",
                    format!("expected default or file, got `{other}`"),
                ))
            }
        };

        let eps0 = r.real("schedule.eps0")?;
        let steps: usize = r.parsed("schedule.steps", "a nonnegative integer")?;
        let schedule = r.check(
            "schedule.eps0",
            ContinuationSchedule::geometric(eps0, steps),
        )?;

        let damping = match r.text("solver.damping").as_str() {
            "auto" => Damping::Auto,
            v => {
                let t: f64 = v.parse().map_err(|_| {
                    r.err(
                        "solver.damping",
                        format!("expected auto or a real in (0, 1], got `{v}`"),
                    )
                })?;
                Damping::Fixed(t)
            }
        };
        let solver = SolverConfig {
            tol_residual: r.real("solver.tol")?,
            max_iters: r.parsed("solver.max_iters", "a positive integer")?,
            damping,
        };
        r.check("solver.tol", solver.validate())?;

        let verify_target = match r.text("verify.catalog").as_str() {
            "default" => VerifyTarget::DefaultCatalog,
            "config" => VerifyTarget::Configured,
            other => {
                return Err(r.err(
                    "verify.catalog",
                    format!("expected default or config, got `{other}`"),
                ))
            }
        };
        let entropy_on = r.flag("verify.entropy")?;
        let mut entropy = EntropyCheckConfig::default_for(&grid);
        entropy.interior_levels = r.parsed("verify.levels", "a nonnegative integer")?;
        entropy.smoothing_n = r.real("verify.smoothing_n")?;
        entropy.tolerance = r.real("verify.tolerance")?;
        let pairs: usize = r.parsed("verify.pairs", "a nonnegative integer")?;
        let inline_solve = r.flag("verify.inline_solve")?;

        let operator_dims: usize = dim;
        let operator_s = r.reals("operator_test.s")?;
        let operator_n = r.integers("operator_test.n")?;
        let sweep_s = r.reals("sweep.s")?;
        let sweep_eps0 = r.reals("sweep.eps0")?;
        let seed: u64 = r.parsed("seed", "a nonnegative integer")?;

        let out_dir = raw.path(&r.text("output.dir"));
        let solution_text = r.raw.get("verify.solution").1.to_string();
        let solution_path = if solution_text == "auto" {
            out_dir.join("solution.csv")
        } else {
            raw.path(&solution_text)
        };
        r.resolved.insert(
            "verify.solution".into(),
            solution_path.display().to_string(),
        );

        let template = ProblemTemplate {
            grid,
            s,
            b,
            flux,
            scheme,
            split,
        };
        Ok(ExperimentConfig {
            grid,
            template,
            data,
            schedule: schedule.clone(),
            eps0,
            steps,
            solver: solver.clone(),
            verify: VerifyConfig {
                entropy: entropy_on.then_some(entropy),
                pairs,
                schedule,
                solver,
                seed,
            },
            verify_target,
            inline_solve,
            solution_path,
            operator_dims,
            operator_s,
            operator_n,
            sweep_s,
            sweep_eps0,
            out_dir,
            seed,
            resolved: r.resolved,
        })
    }

    /// Every key with the value used, one `key=value` per line, sorted.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.resolved {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// Data of the configured problem.
    pub fn load_data(&self) -> Result<Field> {
        match &self.data {
            DataSource::Default => default_data(&self.grid),
            DataSource::File(path) => {
                let f = Field::read_csv(path)?;
                if *f.grid() != self.grid {
                    return Err(Error::GridMismatch(format!(
                        "{}: field grid (dim {}, n {}, L {}) differs from the configured grid",
                        path.display(),
                        f.grid().dim(),
                        f.grid().points_per_dim(),
                        f.grid().extent()
                    )));
                }
                Ok(f)
            }
        }
    }

    /// The configured problem as a one-entry catalog.
    pub fn configured_problem(&self) -> Result<Problem> {
        Ok(Problem {
            name: "configured".into(),
            template: self.template.clone(),
            f: self.load_data()?,
        })
    }

    /// The problems `verify` runs.
    pub fn verify_problems(&self) -> Result<Vec<Problem>> {
        match self.verify_target {
            VerifyTarget::DefaultCatalog => catalog_on(&self.grid),
            VerifyTarget::Configured => Ok(vec![self.configured_problem()?]),
        }
    }
}

fn saturation(r: &mut Resolver) -> Result<Saturation> {
    let name = r.text("problem.b");
    let lambda = r.real("b.lambda")?;
    let start = r.real("b.plateau_start")?;
    let width = r.real("b.plateau_width")?;
    let table = r.text("b.table");
    match name.as_str() {
        "linear" => r.check("b.lambda", Saturation::linear(lambda)),
        "id_plus_arctan" => Ok(Saturation::id_plus_arctan()),
        "plateau" => r.check("b.plateau_start", Saturation::plateau(lambda, start, width)),
        "table" => {
            if table.is_empty() {
                return Err(r.err("b.table", "problem.b = table needs b.table".into()));
            }
            let t = PiecewiseLinear::read_csv(&r.raw.path(&table))?;
            r.check("b.table", Saturation::table(t))
        }
        other => Err(r.err(
            "problem.b",
            format!("expected linear, id_plus_arctan, plateau or table, got `{other}`"),
        )),
    }
}

fn flux(r: &mut Resolver, dim: usize) -> Result<Flux> {
    let name = r.text("problem.flux");
    let mut c = r.reals("flux.c")?;
    if c.len() == 1 && dim == 2 {
        c.push(c[0]);
    }
    if c.len() != dim {
        return Err(r.err(
            "flux.c",
            format!("expected 1 or {dim} coefficients, got {}", c.len()),
        ));
    }
    let table = r.text("flux.table");
    match name.as_str() {
        "zero" => Ok(Flux::zero(dim)),
        "linear" => r.check("flux.c", Flux::linear(&c)),
        "burgers" => r.check("flux.c", Flux::new(FluxProfile::Burgers, &c)),
        "table" => {
            if table.is_empty() {
                return Err(r.err("flux.table", "problem.flux = table needs flux.table".into()));
            }
            let t = PiecewiseLinear::read_csv(&r.raw.path(&table))?;
            r.check("flux.c", Flux::new(FluxProfile::Table(t), &c))
        }
        other => Err(r.err(
            "problem.flux",
            format!("expected zero, linear, burgers or table, got `{other}`"),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_and_echo_every_key() {
        let cfg = ExperimentConfig::from_raw(&RawConfig::default()).unwrap();
        let m = cfg.manifest();
        for (k, _) in KEYS {
            assert!(m.lines().any(|l| l.starts_with(&format!("{k}="))), "{k}");
        }
        assert!(m.contains("split.r=0.0625\n"));
        assert_eq!(cfg.grid.points_per_dim(), 256);
    }

    #[test]
    fn errors_name_line_and_key() {
        let err = RawConfig::parse("grid.n = 256\n\nbogus.key = 1\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 3, ref key, .. } if key == "bogus.key"));
        let raw = RawConfig::parse("# comment\ngrid.n = 100\n").unwrap();
        let err = ExperimentConfig::from_raw(&raw).unwrap_err();
        assert!(
            matches!(err, Error::Config { line: 2, ref key, .. } if key == "grid.n"),
            "{err}"
        );
        let raw = RawConfig::parse("problem.s = x\n").unwrap();
        let err = ExperimentConfig::from_raw(&raw).unwrap_err();
        assert!(err.to_string().contains("problem.s"));
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let err = RawConfig::parse("seed = 1\nseed = 2\n").unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn scalar_flux_coefficient_is_replicated_in_two_dimensions() {
        let raw =
            RawConfig::parse("grid.dim = 2\ngrid.n = 32\nproblem.flux = linear\nflux.c = -0.5\n")
                .unwrap();
        let cfg = ExperimentConfig::from_raw(&raw).unwrap();
        assert_eq!(cfg.template.flux.coeffs(), &[-0.5, -0.5]);
    }
}
