//! The regularized problem `b(u) + εu − εΔu + div F_ε(u) + (−Δ)^{s/2}u = f`,
//! its preconditioned fixed-point solver, and the vanishing-viscosity
//! continuation `ε → 0`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{
    check_finite, fmt_real, norm_l1, norm_l2, norm_linf, pairwise_sum_by, Field, PeriodicGrid,
};
use crate::nonlinearity::{truncated_flux, Flux, FluxProfile, Saturation, SaturationKind};
use crate::nonlocal::{FracOrder, SplitConfig, SplitOperator};
use crate::spectral;
use rustfft::num_complex::Complex64;

/// Discretisation of `div F_ε(u)` and, with it, of `−Δ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FluxScheme {
    /// Spectral divergence of the pointwise flux, spectral `−Δ`.
    Central,
    /// Engquist–Osher numerical flux, three-point `−Δ_h`.
    EngquistOsher,
}

impl FluxScheme {
    pub fn name(self) -> &'static str {
        match self {
            FluxScheme::Central => "central",
            FluxScheme::EngquistOsher => "engquist_osher",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "central" => Some(FluxScheme::Central),
            "engquist_osher" | "eo" => Some(FluxScheme::EngquistOsher),
            _ => None,
        }
    }

    /// Symbol of the scheme's `−Δ` at DFT bin `idx`.
    pub fn laplacian_symbol(self, grid: &PeriodicGrid, idx: usize) -> f64 {
        match self {
            FluxScheme::Central => spectral::neg_laplacian_symbol(grid, idx),
            FluxScheme::EngquistOsher => spectral::fd_neg_laplacian_symbol(grid, idx),
        }
    }
}

/// Everything except `ε` and the data: shared by the continuation steps.
#[derive(Debug, Clone)]
pub struct ProblemTemplate {
    pub grid: PeriodicGrid,
    pub s: FracOrder,
    pub b: Saturation,
    pub flux: Flux,
    pub scheme: FluxScheme,
    pub split: SplitConfig,
}

impl ProblemTemplate {
    pub fn instantiate(&self, eps: f64, f: &Field) -> Result<RegularizedProblem> {
        RegularizedProblem::new(self, eps, f.clone())
    }
}

/// One instance of the regularized problem at fixed `ε`.
#[derive(Debug, Clone)]
pub struct RegularizedProblem {
    grid: PeriodicGrid,
    eps: f64,
    b: Saturation,
    flux: Flux,
    f: Field,
    scheme: FluxScheme,
    op: SplitOperator,
}

impl RegularizedProblem {
    pub fn new(t: &ProblemTemplate, eps: f64, f: Field) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "eps must be positive, got {eps}"
            )));
        }
        if *f.grid() != t.grid {
            return Err(Error::GridMismatch(
                "data f is not on the problem grid".into(),
            ));
        }
        if t.flux.dim() != t.grid.dim() {
            return Err(Error::InvalidArgument(format!(
                "flux has {} components on a {}-dimensional grid",
                t.flux.dim(),
                t.grid.dim()
            )));
        }
        FracOrder::for_equation(t.s.value())?;
        let h = t.grid.spacing();
        if t.scheme == FluxScheme::Central && h > eps.sqrt() * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "central scheme needs h <= sqrt(eps): h = {h}, sqrt(eps) = {}",
                eps.sqrt()
            )));
        }
        let op = SplitOperator::new(&t.grid, t.s, t.split)?;
        Ok(RegularizedProblem {
            grid: t.grid,
            eps,
            b: t.b.clone(),
            flux: truncated_flux(&t.flux, eps)?,
            f,
            scheme: t.scheme,
            op,
        })
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn saturation(&self) -> &Saturation {
        &self.b
    }

    /// The truncated flux `F_ε`.
    pub fn flux(&self) -> &Flux {
        &self.flux
    }

    pub fn data(&self) -> &Field {
        &self.f
    }

    pub fn scheme(&self) -> FluxScheme {
        self.scheme
    }

    pub fn operator(&self) -> &SplitOperator {
        &self.op
    }

    /// `div F_ε(u)` by the selected scheme.
    pub fn flux_divergence(&self, u: &Field) -> Result<Field> {
        if self.flux.is_zero() {
            return Ok(Field::zeros(self.grid));
        }
        match self.scheme {
            FluxScheme::Central => {
                let comps: Vec<Field> = (0..self.grid.dim())
                    .map(|d| u.map(|a| self.flux.eval(a)[d]))
                    .collect::<Result<_>>()?;
                spectral::divergence(&comps)
            }
            FluxScheme::EngquistOsher => Ok(self.eo_divergence(u)),
        }
    }

    fn eo_divergence(&self, u: &Field) -> Field {
        let g = self.grid;
        let h = g.spacing();
        let v = u.values();
        let split: Vec<[(f64, f64); 2]> = v
            .iter()
            .map(|&a| {
                let s0 = self.flux.eo_split(0, a);
                let s1 = if g.dim() == 2 {
                    self.flux.eo_split(1, a)
                } else {
                    (0.0, 0.0)
                };
                [s0, s1]
            })
            .collect();
        let out = (0..g.len())
            .map(|idx| {
                let mut acc = 0.0;
                for d in 0..g.dim() {
                    let (up, dn) = (g.step(idx, d, true), g.step(idx, d, false));
                    // H_{i+1/2} = F⁺(u_i) + F⁻(u_{i+1})
                    let right = split[idx][d].0 + split[up][d].1;
                    let left = split[dn][d].0 + split[idx][d].1;
                    acc += (right - left) / h;
                }
                acc
            })
            .collect();
        Field::from_raw(g, out)
    }

    /// The scheme's `−Δu`.
    pub fn neg_laplacian(&self, u: &Field) -> Result<Field> {
        match self.scheme {
            FluxScheme::Central => spectral::neg_laplacian(u),
            FluxScheme::EngquistOsher => Ok(spectral::fd_neg_laplacian(u)),
        }
    }

    /// `‖∇u‖₂` with the gradient consistent with the scheme's `−Δ`
    /// (spectral, or forward differences).
    pub fn gradient_norm(&self, u: &Field) -> Result<f64> {
        match self.scheme {
            FluxScheme::Central => {
                let g = spectral::gradient(u)?;
                Ok(g.iter().map(|c| norm_l2(c).powi(2)).sum::<f64>().sqrt())
            }
            FluxScheme::EngquistOsher => {
                let g = self.grid;
                let h = g.spacing();
                let v = u.values();
                let sq = pairwise_sum_by(g.len(), |i| {
                    (0..g.dim())
                        .map(|d| ((v[g.step(i, d, true)] - v[i]) / h).powi(2))
                        .sum()
                });
                Ok((sq * g.cell_volume()).sqrt())
            }
        }
    }

    /// `G(u)` without the data.
    pub fn apply(&self, u: &Field) -> Result<Field> {
        if *u.grid() != self.grid {
            return Err(Error::GridMismatch(
                "iterate is not on the problem grid".into(),
            ));
        }
        let lap = self.neg_laplacian(u)?;
        let div = self.flux_divergence(u)?;
        let nl = self.op.apply(u)?;
        let eps = self.eps;
        let out: Vec<f64> = (0..u.len())
            .map(|i| {
                let a = u.values()[i];
                self.b.eval(a) + eps * a + eps * lap.values()[i] + div.values()[i] + nl.values()[i]
            })
            .collect();
        check_finite(&out, "regularized residual")?;
        Ok(Field::from_raw(self.grid, out))
    }

    /// Symbol `λ + ε + ε|ξ|²_h + ν|ξ|²_fd + σ_A(ξ)` of the preconditioner.
    /// `ν = L(m)h/2` with `m = ‖f‖∞/λ` mirrors upwind dissipation.
    pub fn preconditioner_symbol(&self) -> Vec<f64> {
        let g = &self.grid;
        let sym = self.op.symbols();
        let nu = match self.scheme {
            FluxScheme::Central => 0.0,
            FluxScheme::EngquistOsher => {
                let m = norm_linf(&self.f) / self.b.lambda();
                0.5 * self.flux.lipschitz_on(m) * g.spacing()
            }
        };
        (0..g.len())
            .map(|i| {
                self.b.lambda()
                    + self.eps
                    + self.eps * self.scheme.laplacian_symbol(g, i)
                    + nu * spectral::fd_neg_laplacian_symbol(g, i)
                    + sym[i]
            })
            .collect()
    }

    /// Largest `|1 − τμ(ξ)/K(ξ)|` over modes for problems whose `G` is a
    /// circulant (`b` linear, flux zero or linear); `None` otherwise.
    pub fn linear_contraction_factor(&self, tau: f64) -> Option<f64> {
        let lambda = match self.b.kind() {
            SaturationKind::Linear { lambda } => *lambda,
            _ => return None,
        };
        let g = &self.grid;
        let h = g.spacing();
        let k = self.preconditioner_symbol();
        let sym = self.op.symbols();
        let c = self.flux.coeffs();
        let linear_flux = match self.flux.profile() {
            FluxProfile::Zero => false,
            FluxProfile::Linear => true,
            _ => return None,
        };
        if linear_flux && self.flux.truncation().is_some() {
            // Truncation makes the transport flux nonlinear beyond 1/ε.
            let m = norm_linf(&self.f) / lambda;
            if m >= self.flux.truncation().unwrap_or(f64::INFINITY) {
                return None;
            }
        }
        let mut worst: f64 = 0.0;
        for i in 0..g.len() {
            let mut re = lambda + self.eps + self.eps * self.scheme.laplacian_symbol(g, i) + sym[i];
            let mut im = 0.0;
            if linear_flux {
                let xi = spectral::wavevector(g, i);
                let dxi = spectral::derivative_wavevector(g, i);
                for d in 0..g.dim() {
                    match self.scheme {
                        FluxScheme::Central => im += c[d] * dxi[d],
                        FluxScheme::EngquistOsher => {
                            // c(1 − e^{−iξh})/h for c ≥ 0, c(e^{iξh} − 1)/h otherwise.
                            let (cs, sn) = ((xi[d] * h).cos(), (xi[d] * h).sin());
                            if c[d] >= 0.0 {
                                re += c[d] * (1.0 - cs) / h;
                                im += c[d] * sn / h;
                            } else {
                                re += -c[d] * (1.0 - cs) / h;
                                im += c[d] * sn / h;
                            }
                        }
                    }
                }
            }
            let (zr, zi) = (1.0 - tau * re / k[i], -tau * im / k[i]);
            worst = worst.max((zr * zr + zi * zi).sqrt());
        }
        Some(worst)
    }
}

/// `G(u) − f`.
pub fn regularized_residual(u: &Field, p: &RegularizedProblem) -> Result<Field> {
    p.apply(u)?.sub(&p.f)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Damping {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub tol_residual: f64,
    pub max_iters: usize,
    pub damping: Damping,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_residual: 1e-10,
            max_iters: 100_000,
            damping: Damping::Auto,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_residual > 0.0) {
            return Err(Error::InvalidArgument(
                "solver tolerance must be positive".into(),
            ));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument(
                "max_iters must be at least 1".into(),
            ));
        }
        if let Damping::Fixed(t) = self.damping {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "damping must lie in (0, 1], got {t}"
                )));
            }
        }
        Ok(())
    }
}

/// Consecutive non-decreasing steps tolerated before a monotonicity breach.
pub const STALL_LIMIT: usize = 50;

#[derive(Debug, Clone)]
pub struct SolveTrace {
    /// Attempted steps, accepted or not.
    pub iterations: usize,
    pub rejected: usize,
    /// L² residual after each accepted step, starting with the initial one.
    pub history: Vec<f64>,
    pub final_tau: f64,
}

/// `‖K^{−1/2} r‖` (discrete), the merit function of the backtracking.
/// `‖K^{-1/2}r‖` and the spectrum of `r`, reused for the next step.
fn preconditioned_norm(r: &Field, k: &[f64]) -> (f64, Vec<Complex64>) {
    let spec = spectral::forward(r);
    let scale = r.grid().cell_volume() / r.len() as f64;
    let m = (scale * pairwise_sum_by(spec.len(), |i| spec[i].norm_sqr() / k[i])).sqrt();
    (m, spec)
}

/// Damped preconditioned iteration `u ← u − τK⁻¹(G(u) − f)`.
pub fn solve_regularized(
    p: &RegularizedProblem,
    cfg: &SolverConfig,
    u0: Option<&Field>,
) -> Result<(Field, SolveTrace)> {
    cfg.validate()?;
    let mut u = match u0 {
        Some(u) => {
            if *u.grid() != p.grid {
                return Err(Error::GridMismatch(
                    "initial guess is not on the problem grid".into(),
                ));
            }
            u.clone()
        }
        None => Field::zeros(p.grid),
    };
    let k = p.preconditioner_symbol();
    let mut r = regularized_residual(&u, p)?;
    let mut res = norm_l2(&r);
    let mut history = vec![res];
    let mut tau = match cfg.damping {
        Damping::Auto => 1.0,
        Damping::Fixed(t) => t,
    };
    let mut trace = SolveTrace {
        iterations: 0,
        rejected: 0,
        history: Vec::new(),
        final_tau: tau,
    };
    if res <= cfg.tol_residual {
        trace.history = history;
        return Ok((u, trace));
    }
    let (mut merit, mut r_hat) = preconditioned_norm(&r, &k);
    let mut stalled = 0;
    while trace.iterations < cfg.max_iters {
        trace.iterations += 1;
        let step = spectral::apply_multiplier_to_spectrum(&p.grid, &r_hat, norm_linf(&r), |i| {
            Complex64::new(1.0 / k[i], 0.0)
        })?;
        let trial = u.zip_map(&step, |a, d| a - tau * d)?;
        let r_trial = regularized_residual(&trial, p)?;
        let (m_trial, hat_trial) = preconditioned_norm(&r_trial, &k);
        let decreased = m_trial < merit;
        match cfg.damping {
            Damping::Auto if !decreased => {
                trace.rejected += 1;
                stalled += 1;
                tau *= 0.5;
                if stalled >= STALL_LIMIT {
                    return Err(Error::MonotonicityViolated(stalled));
                }
                continue;
            }
            Damping::Auto => {
                stalled = 0;
                tau = (tau * 1.2).min(1.0);
            }
            Damping::Fixed(_) => {
                stalled = if decreased { 0 } else { stalled + 1 };
                if stalled >= STALL_LIMIT {
                    return Err(Error::MonotonicityViolated(stalled));
                }
            }
        }
        u = trial;
        r = r_trial;
        r_hat = hat_trial;
        merit = m_trial;
        res = norm_l2(&r);
        history.push(res);
        if res <= cfg.tol_residual {
            trace.history = history;
            trace.final_tau = tau;
            return Ok((u, trace));
        }
    }
    Err(Error::MaxIterations {
        max_iters: cfg.max_iters,
        last: res,
        history,
    })
}

/// Strictly decreasing viscosities `ε₀ > ε₁ > …`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationSchedule {
    eps: Vec<f64>,
}

/// Smallest admissible viscosity.
pub const EPS_FLOOR: f64 = 1e-8;

impl ContinuationSchedule {
    pub fn new(eps: Vec<f64>) -> Result<Self> {
        if eps.is_empty() {
            return Err(Error::InvalidArgument("empty viscosity schedule".into()));
        }
        if eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::InvalidArgument(
                "viscosities must be positive and finite".into(),
            ));
        }
        if eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidArgument(
                "viscosity schedule must strictly decrease".into(),
            ));
        }
        let last = *eps.last().expect("nonempty");
        if last < EPS_FLOOR {
            return Err(Error::InvalidArgument(format!(
                "final viscosity {last} is below the floor {EPS_FLOOR}"
            )));
        }
        Ok(ContinuationSchedule { eps })
    }

    /// `ε_j = ε₀2^{−j}` for `j = 0..=halvings`.
    pub fn geometric(eps0: f64, halvings: usize) -> Result<Self> {
        ContinuationSchedule::new(
            (0..=halvings)
                .map(|j| eps0 * 0.5f64.powi(j as i32))
                .collect(),
        )
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    pub fn final_eps(&self) -> f64 {
        *self.eps.last().expect("nonempty")
    }
}

/// Diagnostics of one solve in the continuation.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsRecord {
    pub eps: f64,
    pub iterations: usize,
    pub residual: f64,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    pub b_l1: f64,
    /// `√ε‖∇u‖₂`.
    pub viscous_gradient: f64,
    /// `[u]_{s/2}`.
    pub seminorm: f64,
    /// `‖u_{ε_{j−1}} − u_{ε_j}‖₁`; absent on the first row.
    pub cauchy_l1: Option<f64>,
    /// `ε‖u‖² + ε‖∇u‖² + (C/2)[u]²`.
    pub energy: f64,
    /// `‖f‖₂‖u‖₂`.
    pub energy_bound: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub records: Vec<EpsRecord>,
    pub u: Field,
    pub f_l1: f64,
    pub f_l2: f64,
    pub f_linf: f64,
    pub lambda: f64,
}

impl SolveReport {
    pub const CSV_HEADER: &'static str = "eps,iterations,residual,l1,l2,linf,b_l1,viscous_gradient,seminorm,cauchy_l1,energy,energy_bound";

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let cauchy = r.cauchy_l1.map_or_else(|| "NA".to_string(), fmt_real);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                fmt_real(r.eps),
                r.iterations,
                fmt_real(r.residual),
                fmt_real(r.l1),
                fmt_real(r.l2),
                fmt_real(r.linf),
                fmt_real(r.b_l1),
                fmt_real(r.viscous_gradient),
                fmt_real(r.seminorm),
                cauchy,
                fmt_real(r.energy),
                fmt_real(r.energy_bound)
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn total_iterations(&self) -> usize {
        self.records.iter().map(|r| r.iterations).sum()
    }
}

/// Relative slack of the a-priori bounds.
pub const APRIORI_SLACK: f64 = 1e-6;

/// Signed margins of the a-priori bounds at one viscosity, in the order
/// `‖b(u)‖₁ ≤ ‖f‖₁`, `‖u‖₁ ≤ ‖f‖₁/λ`, `‖u‖∞ ≤ ‖f‖∞/λ`, energy. Nonnegative
/// means the bound holds with the relative slack `1e−6`.
pub fn apriori_margins(rep: &SolveReport, rec: &EpsRecord) -> [(&'static str, f64); 4] {
    let k = 1.0 + APRIORI_SLACK;
    [
        ("b_l1", rep.f_l1 * k - rec.b_l1),
        ("u_l1", rep.f_l1 / rep.lambda * k - rec.l1),
        ("u_linf", rep.f_linf / rep.lambda * k - rec.linf),
        ("energy", rec.energy_bound * k - rec.energy),
    ]
}

fn record(
    p: &RegularizedProblem,
    u: &Field,
    trace: &SolveTrace,
    prev: Option<&Field>,
) -> Result<EpsRecord> {
    let eps = p.eps();
    let bu = u.map(|a| p.saturation().eval(a))?;
    let grad = p.gradient_norm(u)?;
    let semi = p.operator().seminorm_spectral(u)?;
    let l2 = norm_l2(u);
    Ok(EpsRecord {
        eps,
        iterations: trace.iterations,
        residual: *trace.history.last().expect("nonempty history"),
        l1: norm_l1(u),
        l2,
        linf: norm_linf(u),
        b_l1: norm_l1(&bu),
        viscous_gradient: eps.sqrt() * grad,
        seminorm: semi,
        cauchy_l1: match prev {
            Some(v) => Some(norm_l1(&u.sub(v)?)),
            None => None,
        },
        energy: eps * l2 * l2 + eps * grad * grad + 0.5 * p.operator().constant() * semi * semi,
        energy_bound: norm_l2(p.data()) * l2,
    })
}

/// Solves along the schedule, warm-starting each step from the previous
/// solution when `warm_start` is set.
pub fn vanishing_viscosity(
    f: &Field,
    schedule: &ContinuationSchedule,
    template: &ProblemTemplate,
    cfg: &SolverConfig,
    warm_start: bool,
) -> Result<SolveReport> {
    let mut records = Vec::with_capacity(schedule.eps().len());
    let mut prev: Option<Field> = None;
    for (j, &eps) in schedule.eps().iter().enumerate() {
        let wrap = |e: Error| Error::Continuation {
            index: j,
            eps,
            source: Box::new(e),
        };
        let p = template.instantiate(eps, f).map_err(wrap)?;
        let guess = if warm_start { prev.as_ref() } else { None };
        let (u, trace) = solve_regularized(&p, cfg, guess).map_err(wrap)?;
        records.push(record(&p, &u, &trace, prev.as_ref()).map_err(wrap)?);
        prev = Some(u);
    }
    Ok(SolveReport {
        records,
        u: prev.expect("nonempty schedule"),
        f_l1: norm_l1(f),
        f_l2: norm_l2(f),
        f_linf: norm_linf(f),
        lambda: template.b.lambda(),
    })
}

/// `|Σ F_ε(u)·∇u h^N|` with the spectral gradient.
pub fn flux_identity_check(u: &Field, flux: &Flux) -> Result<f64> {
    if flux.dim() != u.grid().dim() {
        return Err(Error::InvalidArgument(
            "flux and field dimensions differ".into(),
        ));
    }
    let grad = spectral::gradient(u)?;
    let h = u.grid().cell_volume();
    let v = u.values();
    let total = pairwise_sum_by(u.len(), |i| {
        let fa = flux.eval(v[i]);
        (0..u.grid().dim())
            .map(|d| fa[d] * grad[d].values()[i])
            .sum()
    });
    Ok((total * h).abs())
}
