//! Batch front end: configuration, solve and verify orchestration, CSV output.
//!
//! Exit codes: 0 pass, 1 check failure, 2 usage or configuration error,
//! 3 solver failure. Every command writes `manifest.txt`, the resolved
//! configuration with all defaults spelled out.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, RawConfig, VerifyTarget};
use crate::error::{Error, Result};
use crate::grid::{band_limited, fmt_real, norm_l2, norm_linf, Field, PeriodicGrid};
use crate::nonlocal::{cns, frac_laplacian_spectral, FracOrder, SplitConfig, SplitOperator};
use crate::solver::{vanishing_viscosity, ContinuationSchedule, ProblemTemplate};
use crate::verify::{check_contracts, run_suite, verify_solution, CheckReport, CheckRow};

/// Environment variable overriding `output.dir`; `--out` wins over it.
pub const OUT_ENV: &str = "FRACLAP_OUT";

/// Relative tolerance for matching the ratio calibrated/`cns` to `1` or `(2π)^s`.
pub const RATIO_MATCH_TOL: f64 = 1e-3;
/// Largest admissible operator response to a constant field.
pub const CONSTANT_RESPONSE_TOL: f64 = 1e-12;
/// Smallest admissible order of the split/spectral error under doubling.
pub const MIN_ORDER: f64 = 1.5;
/// Errors at or below this are rounding; no order is required of them.
pub const ERROR_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Pass = 0,
    CheckFailed = 1,
    Usage = 2,
    SolverFailure = 3,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }

    fn of_error(e: &Error) -> Exit {
        if e.is_solver_failure() {
            Exit::SolverFailure
        } else {
            Exit::Usage
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "fraclap",
    version,
    about = "Fractional convection-diffusion experiments"
)]
pub struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory; overrides FRACLAP_OUT and `output.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed of the random contract probes; overrides `seed`.
    #[arg(long, global = true, value_name = "INT")]
    pub seed: Option<u64>,
    /// Sets one configuration key; may be repeated.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the configured problem along the viscosity schedule.
    Solve,
    /// Run the verification suite.
    Verify,
    /// Compare the split operator with the spectral one and report constants.
    OperatorTest {
        /// Dimension; overrides `grid.dim`.
        #[arg(long)]
        dim: Option<usize>,
        /// Comma-separated orders; overrides `operator_test.s`.
        #[arg(long)]
        s: Option<String>,
        /// Comma-separated grid sizes; overrides `operator_test.n`.
        #[arg(long)]
        n: Option<String>,
    },
    /// Solve the configured problem for every listed `s` and `ε₀`.
    Sweep,
}

/// Parses `args` (program name first) and runs; `env_out` is the value of
/// FRACLAP_OUT. Returns the exit code.
pub fn main_with<I, T>(args: I, env_out: Option<OsString>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                Exit::Usage.code()
            } else {
                Exit::Pass.code()
            };
        }
    };
    run(&cli, env_out).code()
}

pub fn run(cli: &Cli, env_out: Option<OsString>) -> Exit {
    let outcome = load(cli, env_out).and_then(|cfg| match &cli.command {
        Command::Solve => cmd_solve(&cfg),
        Command::Verify => cmd_verify(&cfg),
        Command::OperatorTest { .. } => cmd_operator_test(&cfg),
        Command::Sweep => cmd_sweep(&cfg),
    });
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            Exit::of_error(&e)
        }
    }
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).map_err(|e| Error::io(p, e))
}

/// Reads the configuration and applies, in increasing precedence, the
/// environment, `--set`, subcommand flags, `--seed` and `--out`.
pub fn load(cli: &Cli, env_out: Option<OsString>) -> Result<ExperimentConfig> {
    let mut raw = match &cli.config {
        Some(p) => RawConfig::read(&absolute(p)?)?,
        None => RawConfig::parse("")?,
    };
    if let Some(dir) = env_out.filter(|d| !d.is_empty()) {
        set_path(&mut raw, "output.dir", Path::new(&dir))?;
    }
    for kv in &cli.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config {
            line: 0,
            key: kv.clone(),
            message: "expected --set KEY=VALUE".into(),
        })?;
        raw.set(k.trim(), v.trim())?;
    }
    if let Command::OperatorTest { dim, s, n } = &cli.command {
        if let Some(d) = dim {
            raw.set("grid.dim", &d.to_string())?;
        }
        if let Some(s) = s {
            raw.set("operator_test.s", s)?;
        }
        if let Some(n) = n {
            raw.set("operator_test.n", n)?;
        }
    }
    if let Some(seed) = cli.seed {
        raw.set("seed", &seed.to_string())?;
    }
    if let Some(out) = &cli.out {
        set_path(&mut raw, "output.dir", out)?;
    }
    ExperimentConfig::from_raw(&raw)
}

fn set_path(raw: &mut RawConfig, key: &str, p: &Path) -> Result<()> {
    let abs = absolute(p)?;
    let text = abs.to_str().ok_or_else(|| Error::Config {
        line: 0,
        key: key.into(),
        message: format!("path {} is not valid UTF-8", abs.display()),
    })?;
    raw.set(key, text)
}

fn prepare_out(cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    write_text(&cfg.out_dir.join("manifest.txt"), &cfg.manifest())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `report.csv`, `solution.csv` and `manifest.txt`.
pub fn cmd_solve(cfg: &ExperimentConfig) -> Result<Exit> {
    let p = cfg.configured_problem()?;
    check_contracts(std::slice::from_ref(&p), cfg.seed)?;
    let rep = vanishing_viscosity(&p.f, &cfg.schedule, &p.template, &cfg.solver, true)?;
    prepare_out(cfg)?;
    rep.write_csv(&cfg.out_dir.join("report.csv"))?;
    rep.u.write_csv(&cfg.out_dir.join("solution.csv"))?;
    println!(
        "solved: eps_final={} iterations={} out={}",
        fmt_real(cfg.schedule.final_eps()),
        rep.total_iterations(),
        cfg.out_dir.display()
    );
    Ok(Exit::Pass)
}

/// Writes `check_report.csv` and `manifest.txt`; exit 1 unless every row passes.
pub fn cmd_verify(cfg: &ExperimentConfig) -> Result<Exit> {
    let report = if cfg.inline_solve {
        run_suite(&cfg.verify_problems()?, &cfg.verify)?
    } else {
        if cfg.verify_target != VerifyTarget::Configured {
            return Err(Error::Config {
                line: 0,
                key: "verify.inline_solve".into(),
                message: "checking a stored solution needs verify.catalog = config".into(),
            });
        }
        let p = cfg.configured_problem()?;
        let path = &cfg.solution_path;
        if !path.exists() {
            return Err(Error::Io {
                path: path.clone(),
                source: std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    "no stored solution; run `solve` first or set verify.inline_solve = true",
                ),
            });
        }
        let u = Field::read_csv(path)?;
        verify_solution(&p, &u, &cfg.verify)?
    };
    prepare_out(cfg)?;
    report.write_csv(&cfg.out_dir.join("check_report.csv"))?;
    print_summary(&report);
    Ok(if report.passed() {
        Exit::Pass
    } else {
        Exit::CheckFailed
    })
}

fn print_summary(report: &CheckReport) {
    let failed = report.rows.iter().filter(|r| !r.pass()).count();
    println!("checks: {} rows, {} failed", report.rows.len(), failed);
    if let Some(w) = report.worst() {
        println!("worst: {}", row_line(w));
    }
}

fn row_line(r: &CheckRow) -> String {
    format!(
        "check={} problem={} params={} margin={} slack={} pass={}",
        r.check,
        r.problem,
        r.params,
        fmt_real(r.margin),
        fmt_real(r.slack),
        r.pass()
    )
}

/// One row of the operator test.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorRow {
    pub dim: usize,
    pub n: usize,
    pub s: f64,
    pub constant_paper: f64,
    pub constant_calibrated: f64,
    pub ratio: f64,
    /// `1`, `(2pi)^s` or `neither`, within `RATIO_MATCH_TOL`.
    pub consistent_with: &'static str,
    /// Plane waves with `|k| ≤ n/4` along the axes and the diagonal.
    pub planewave_spectral: f64,
    /// Split symbol against `|ξ|^s` for `|k_d| ≤ n/8`.
    pub planewave_split: f64,
    /// Relative L² distance of split and spectral on a band-limited field.
    pub split_vs_spectral: f64,
    /// `log₂` of the error ratio to the next coarser grid.
    pub order: Option<f64>,
    pub constant_response: f64,
}

impl OperatorRow {
    pub const CSV_HEADER: &'static str = "dim,n,s,constant_paper,constant_calibrated,ratio,consistent_with,planewave_spectral,planewave_split,split_vs_spectral,order,constant_response,pass";

    pub fn pass(&self) -> bool {
        let order_ok = match self.order {
            Some(o) => o >= MIN_ORDER || self.split_vs_spectral <= ERROR_FLOOR,
            None => true,
        };
        order_ok && self.constant_response <= CONSTANT_RESPONSE_TOL
    }

    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.dim,
            self.n,
            fmt_real(self.s),
            fmt_real(self.constant_paper),
            fmt_real(self.constant_calibrated),
            fmt_real(self.ratio),
            self.consistent_with,
            fmt_real(self.planewave_spectral),
            fmt_real(self.planewave_split),
            fmt_real(self.split_vs_spectral),
            self.order.map_or_else(|| "NA".into(), fmt_real),
            fmt_real(self.constant_response),
            self.pass()
        )
    }
}

pub fn ratio_label(ratio: f64, s: f64) -> &'static str {
    if (ratio - 1.0).abs() <= RATIO_MATCH_TOL {
        "1"
    } else if (ratio / (2.0 * std::f64::consts::PI).powf(s) - 1.0).abs() <= RATIO_MATCH_TOL {
        "(2pi)^s"
    } else {
        "neither"
    }
}

/// Largest relative error of the spectral operator on `cos(2πk·x/L)` for
/// `k = m e₁`, `m e₂` and `m(e₁+e₂)` with `1 ≤ m ≤ n/4`.
pub fn spectral_planewave_error(grid: &PeriodicGrid, s: f64) -> Result<f64> {
    let l = grid.extent();
    let directions: &[[f64; 2]] = if grid.dim() == 1 {
        &[[1.0, 0.0]]
    } else {
        &[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
    };
    let mut worst = 0.0_f64;
    for m in 1..=grid.points_per_dim() / 4 {
        for d in directions {
            let k = [m as f64 * d[0], m as f64 * d[1]];
            let w = 2.0 * std::f64::consts::PI / l;
            let u = Field::from_fn(*grid, |x| (w * (k[0] * x[0] + k[1] * x[1])).cos())?;
            let lambda = (w * w * (k[0] * k[0] + k[1] * k[1])).powf(0.5 * s);
            let au = frac_laplacian_spectral(&u, s)?;
            let err = norm_linf(&au.sub(&u.scale(lambda)?)?) / (lambda * norm_linf(&u));
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

/// Rows for every `(n, s)`; the band-limited field has modes up to
/// `min(n)/8` and is drawn from `seed`, so it is the same on every grid.
pub fn operator_rows(
    dim: usize,
    extent: f64,
    ns: &[usize],
    ss: &[f64],
    seed: u64,
) -> Result<Vec<OperatorRow>> {
    let n_min = *ns
        .iter()
        .min()
        .ok_or_else(|| Error::InvalidArgument("empty list of grid sizes".into()))?;
    let kmax = (n_min / 8).max(1) as i64;
    let mut sorted_n = ns.to_vec();
    sorted_n.sort_unstable();
    sorted_n.dedup();
    let mut rows = Vec::new();
    for &s in ss {
        let order = FracOrder::new(s)?;
        let mut prev: Option<f64> = None;
        for &n in &sorted_n {
            let grid = PeriodicGrid::new(dim, extent, n)?;
            let op = SplitOperator::new(&grid, order, SplitConfig::default_for(&grid))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = band_limited(&grid, kmax, &mut rng)?;
            let spec = frac_laplacian_spectral(&u, s)?;
            let split = op.apply_split(&u)?;
            let err = norm_l2(&split.sub(&spec)?) / norm_l2(&spec);
            let one = Field::from_fn(grid, |_| 1.0)?;
            let response = norm_linf(&op.apply_split(&one)?).max(norm_linf(&op.apply(&one)?));
            let printed = cns(dim, s);
            let calibrated = op.calibrated_constant();
            rows.push(OperatorRow {
                dim,
                n,
                s,
                constant_paper: printed,
                constant_calibrated: calibrated,
                ratio: calibrated / printed,
                consistent_with: ratio_label(calibrated / printed, s),
                planewave_spectral: spectral_planewave_error(&grid, s)?,
                planewave_split: op.planewave_error((n / 8) as i64),
                split_vs_spectral: err,
                order: prev.map(|e| (e / err).log2()),
                constant_response: response,
            });
            prev = Some(err);
        }
    }
    Ok(rows)
}

pub fn operator_csv(rows: &[OperatorRow]) -> String {
    let mut out = String::from(OperatorRow::CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.csv_line());
    }
    out
}

/// Writes `operator_test.csv`; exit 1 on a calibration failure or a failed row.
pub fn cmd_operator_test(cfg: &ExperimentConfig) -> Result<Exit> {
    let rows = match operator_rows(
        cfg.operator_dims,
        cfg.grid.extent(),
        &cfg.operator_n,
        &cfg.operator_s,
        cfg.seed,
    ) {
        Ok(r) => r,
        Err(e @ Error::Calibration(_)) => {
            eprintln!("calibration failed: {e}");
            return Ok(Exit::CheckFailed);
        }
        Err(e) => return Err(e),
    };
    prepare_out(cfg)?;
    write_text(&cfg.out_dir.join("operator_test.csv"), &operator_csv(&rows))?;
    for r in &rows {
        if r.dim == 1 && r.s == 1.0 {
            println!(
                "dim=1 s=1 n={}: calibrated/cns = {} consistent with {}",
                r.n,
                fmt_real(r.ratio),
                r.consistent_with
            );
        }
    }
    let failed = rows.iter().filter(|r| !r.pass()).count();
    println!("operator rows: {}, failed: {failed}", rows.len());
    Ok(if failed == 0 {
        Exit::Pass
    } else {
        Exit::CheckFailed
    })
}

/// Writes `sweep.csv`: one row per `(s, ε₀)` with the final-ε diagnostics.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Exit> {
    let base = cfg.configured_problem()?;
    check_contracts(std::slice::from_ref(&base), cfg.seed)?;
    let mut out = String::from(
        "s,eps0,eps_final,iterations,residual,l1,l2,linf,b_l1,seminorm,cauchy_l1,energy\n",
    );
    for &s in &cfg.sweep_s {
        let template = ProblemTemplate {
            s: FracOrder::for_equation(s)?,
            ..cfg.template.clone()
        };
        for &eps0 in &cfg.sweep_eps0 {
            let schedule = ContinuationSchedule::geometric(eps0, cfg.steps)?;
            let rep = vanishing_viscosity(&base.f, &schedule, &template, &cfg.solver, true)?;
            let r = rep.records.last().expect("nonempty schedule");
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                fmt_real(s),
                fmt_real(eps0),
                fmt_real(r.eps),
                rep.total_iterations(),
                fmt_real(r.residual),
                fmt_real(r.l1),
                fmt_real(r.l2),
                fmt_real(r.linf),
                fmt_real(r.b_l1),
                fmt_real(r.seminorm),
                r.cauchy_l1.map_or_else(|| "NA".into(), fmt_real),
                fmt_real(r.energy)
            );
        }
    }
    prepare_out(cfg)?;
    write_text(&cfg.out_dir.join("sweep.csv"), &out)?;
    println!("sweep: {} runs", cfg.sweep_s.len() * cfg.sweep_eps0.len());
    Ok(Exit::Pass)
}
