//! Discrete checks of the entropy inequality, the weak formulation, and the
//! L¹-contraction, comparison and L∞ estimates on computed solutions.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::catalog::{pair_perturbation, Problem};
use crate::error::{Error, Result};
use crate::grid::{
    bump, fmt_real, norm_l1, norm_l1_part, norm_linf, pairwise_sum_by, Field, PeriodicGrid,
    TestFunctionSpec,
};
use crate::nonlinearity::{
    make_entropy_flux, smoothed_kruzhkov, Entropy, EntropyFluxPair, Flux, Saturation,
};
use crate::nonlocal::SplitOperator;
use crate::solver::{
    apriori_margins, vanishing_viscosity, ContinuationSchedule, FluxScheme, ProblemTemplate,
    SolveReport, SolverConfig,
};
use crate::spectral;

/// Sweep of the entropy inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyCheckConfig {
    pub r_values: Vec<f64>,
    /// Interior levels between `min u` and `max u`; `±‖u‖∞` are added.
    pub interior_levels: usize,
    pub smoothing_n: f64,
    pub test_functions: Vec<TestFunctionSpec>,
    /// `δ_e = tolerance·‖f‖∞‖φ‖₁` plus the viscous terms.
    pub tolerance: f64,
}

impl EntropyCheckConfig {
    /// `r ∈ {8h, 16h, L/8}`, 9 interior levels, `n = 10³`, five bumps.
    pub fn default_for(grid: &PeriodicGrid) -> Self {
        let h = grid.spacing();
        let l = grid.extent();
        let mid = 0.5 * l;
        let spec = |c: f64, r: f64| TestFunctionSpec::new([c * l, mid], r * l, 1.0);
        EntropyCheckConfig {
            r_values: vec![8.0 * h, 16.0 * h, l / 8.0],
            interior_levels: 9,
            smoothing_n: 1e3,
            // Supports stay 2h inside the box for n ≥ 32.
            test_functions: vec![
                spec(0.5, 0.4),
                spec(0.3, 0.2),
                spec(0.7, 0.2),
                spec(0.45, 0.1),
                spec(0.2, 0.12),
            ],
            tolerance: 1e-4,
        }
    }

    pub fn validate(&self, grid: &PeriodicGrid) -> Result<()> {
        let h = grid.spacing();
        for &r in &self.r_values {
            if !(r >= 4.0 * h * (1.0 - 1e-12) && r <= 0.5 * grid.extent()) {
                return Err(Error::InvalidArgument(format!(
                    "entropy split radius {r} outside [4h, L/2] = [{}, {}]",
                    4.0 * h,
                    0.5 * grid.extent()
                )));
            }
        }
        if !(self.smoothing_n >= 1.0) {
            return Err(Error::InvalidArgument(
                "smoothing index must be >= 1".into(),
            ));
        }
        for t in &self.test_functions {
            bump(grid, t)?;
        }
        Ok(())
    }

    /// `k` levels for `u`: the interior quantiles of its range and `±‖u‖∞`.
    pub fn levels(&self, u: &Field) -> Vec<f64> {
        let (lo, hi) = (u.min(), u.max());
        let m = self.interior_levels;
        let mut k: Vec<f64> = (1..=m)
            .map(|i| lo + (hi - lo) * i as f64 / (m + 1) as f64)
            .collect();
        let a = norm_linf(u);
        k.push(-a);
        k.push(a);
        k
    }
}

/// `η(u)`, `η′(u)` and the entropy flux of one pair at every grid point.
pub struct PairValues {
    eta: Vec<f64>,
    eta_prime: Vec<f64>,
    flux: PairFlux,
}

enum PairFlux {
    Pointwise(Vec<[f64; 2]>),
    Split(Vec<[(f64, f64); 2]>),
}

/// Everything fixed while a solution is tested against many pairs.
pub struct EntropyContext<'a> {
    op: &'a SplitOperator,
    u: &'a Field,
    f: &'a Field,
    b: &'a Saturation,
    eps: f64,
    scheme: FluxScheme,
    source: Vec<f64>,
    outer: HashMap<u64, Vec<f64>>,
}

/// A nonnegative test function with its spectral gradient and the
/// inner remainders `S_r` for every configured radius.
pub struct TestFunction {
    pub spec: TestFunctionSpec,
    pub phi: Field,
    pub grad: Vec<Field>,
    pub neg_laplacian: Field,
    inner: HashMap<u64, Vec<f64>>,
    l1: f64,
}

impl TestFunction {
    pub fn new(grid: &PeriodicGrid, spec: TestFunctionSpec, scheme: FluxScheme) -> Result<Self> {
        let phi = bump(grid, &spec)?;
        Self::from_field(spec, phi, scheme)
    }

    pub fn from_field(spec: TestFunctionSpec, phi: Field, scheme: FluxScheme) -> Result<Self> {
        if let Some(i) = phi.values().iter().position(|&v| v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "test function is negative at index {i}"
            )));
        }
        let grad = spectral::gradient(&phi)?;
        let neg_laplacian = match scheme {
            FluxScheme::Central => spectral::neg_laplacian(&phi)?,
            FluxScheme::EngquistOsher => spectral::fd_neg_laplacian(&phi),
        };
        let l1 = norm_l1(&phi);
        Ok(TestFunction {
            spec,
            phi,
            grad,
            neg_laplacian,
            inner: HashMap::new(),
            l1,
        })
    }

    fn prepare(&mut self, op: &SplitOperator, r: f64) -> Result<()> {
        if !self.inner.contains_key(&r.to_bits()) {
            let s = op.inner_remainders(&self.phi, &self.grad, r)?;
            self.inner.insert(r.to_bits(), s);
        }
        Ok(())
    }
}

/// The three terms of the discrete entropy residual and its viscous slack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyTerms {
    pub term1: f64,
    pub term2: f64,
    pub term3: f64,
    /// `|εΣuη′(u)φ h^N| + |εΣη(u)(−Δ_hφ) h^N|`.
    pub viscous: f64,
    /// `‖f‖∞‖φ‖₁`.
    pub scale: f64,
    /// Sum of the absolute values of the pieces of the three terms.
    pub magnitude: f64,
}

impl EntropyTerms {
    pub fn value(&self) -> f64 {
        self.term1 + self.term2 + self.term3
    }
}

impl<'a> EntropyContext<'a> {
    pub fn new(
        op: &'a SplitOperator,
        u: &'a Field,
        f: &'a Field,
        b: &'a Saturation,
        eps: f64,
        scheme: FluxScheme,
    ) -> Result<Self> {
        u.ensure_same_grid(f)?;
        if op.grid() != u.grid() {
            return Err(Error::GridMismatch(
                "operator and field grids differ".into(),
            ));
        }
        let source = (0..u.len())
            .map(|i| f.values()[i] - b.eval(u.values()[i]))
            .collect();
        Ok(EntropyContext {
            op,
            u,
            f,
            b,
            eps,
            scheme,
            source,
            outer: HashMap::new(),
        })
    }

    pub fn saturation(&self) -> &Saturation {
        self.b
    }

    pub fn scheme(&self) -> FluxScheme {
        self.scheme
    }

    fn check_radius(&self, r: f64) -> Result<()> {
        let g = self.u.grid();
        if !(r >= 4.0 * g.spacing() * (1.0 - 1e-12) && r <= 0.5 * g.extent()) {
            return Err(Error::InvalidArgument(format!(
                "split radius {r} outside [4h, L/2]"
            )));
        }
        Ok(())
    }

    /// Caches `R_r(x) = Σ_{|z|≥r} K(z)[u(x+z) − u(x)]`.
    pub fn prepare(&mut self, r: f64) -> Result<()> {
        self.check_radius(r)?;
        if !self.outer.contains_key(&r.to_bits()) {
            let o = self.op.outer_differences(self.u, r)?;
            self.outer.insert(r.to_bits(), o);
        }
        Ok(())
    }

    /// Pointwise data of an entropy pair on `u`, shared by every test
    /// function and radius.
    pub fn evaluate_pair(&self, pair: &EntropyFluxPair) -> Result<PairValues> {
        let u = self.u.values();
        let flux = match self.scheme {
            FluxScheme::Central => PairFlux::Pointwise(pair.phi_many(u)?),
            FluxScheme::EngquistOsher => PairFlux::Split(pair.phi_split_many(u)?),
        };
        Ok(PairValues {
            eta: u.iter().map(|&a| pair.eta(a)).collect(),
            eta_prime: u.iter().map(|&a| pair.eta_prime(a)).collect(),
            flux,
        })
    }

    /// Discrete left side of the entropy inequality for `(η, φ)`, test
    /// function `ψ` and split radius `r`:
    /// `Σ(f−b(u))η′(u)ψ + Σφ(u)·∇_hψ + CΣη′(u)ψR_r + CΣη(u)S_r(ψ)`, all `·h^N`.
    pub fn residual(
        &mut self,
        pair: &EntropyFluxPair,
        test: &mut TestFunction,
        r: f64,
    ) -> Result<EntropyTerms> {
        let values = self.evaluate_pair(pair)?;
        self.residual_of(&values, test, r)
    }

    pub fn residual_of(
        &mut self,
        values: &PairValues,
        test: &mut TestFunction,
        r: f64,
    ) -> Result<EntropyTerms> {
        self.prepare(r)?;
        test.prepare(self.op, r)?;
        let g = *self.u.grid();
        let hn = g.cell_volume();
        let c = self.op.constant();
        let u = self.u.values();
        let psi = test.phi.values();
        let outer = &self.outer[&r.to_bits()];
        let inner = &test.inner[&r.to_bits()];
        let n = u.len();
        let (ep, et) = (&values.eta_prime, &values.eta);
        let (flux, mag_flux) = match &values.flux {
            PairFlux::Pointwise(q) => self.central_pairing(test, q),
            PairFlux::Split(q) => self.upwind_pairing(test, q),
        };
        let src = pairwise_sum_by(n, |i| self.source[i] * ep[i] * psi[i]);
        let t2 = pairwise_sum_by(n, |i| ep[i] * psi[i] * outer[i]);
        let t3 = pairwise_sum_by(n, |i| et[i] * inner[i]);
        let visc_a = pairwise_sum_by(n, |i| u[i] * ep[i] * psi[i]);
        let visc_b = pairwise_sum_by(n, |i| et[i] * test.neg_laplacian.values()[i]);
        let mag_src = pairwise_sum_by(n, |i| (self.source[i] * ep[i] * psi[i]).abs());
        let mag_t2 = pairwise_sum_by(n, |i| (ep[i] * psi[i] * outer[i]).abs());
        let mag_t3 = pairwise_sum_by(n, |i| (et[i] * inner[i]).abs());
        Ok(EntropyTerms {
            term1: hn * (src + flux),
            term2: c * hn * t2,
            term3: c * hn * t3,
            viscous: self.eps * hn * (visc_a.abs() + visc_b.abs()),
            scale: norm_linf(self.f) * test.l1,
            magnitude: hn * (mag_src + mag_flux + c * mag_t2 + c * mag_t3),
        })
    }

    /// Signed weak residual `Σ(f−b(u))ψ + ΣF(u)·∇ψ − Σu·Aψ`, all `·h^N`,
    /// and the sum of the magnitudes of its three sums.
    pub fn weak_residual(&self, flux: &Flux, test: &TestFunction) -> Result<(f64, f64)> {
        let g = *self.u.grid();
        let hn = g.cell_volume();
        let u = self.u.values();
        let psi = test.phi.values();
        let a_psi = self.op.apply(&test.phi)?;
        let n = u.len();
        let src = pairwise_sum_by(n, |i| self.source[i] * psi[i]);
        let (fl, _) = match self.scheme {
            FluxScheme::Central => {
                let q: Vec<[f64; 2]> = u.iter().map(|&a| flux.eval(a)).collect();
                self.central_pairing(test, &q)
            }
            FluxScheme::EngquistOsher => {
                let q: Vec<[(f64, f64); 2]> = u
                    .iter()
                    .map(|&a| {
                        let s1 = if g.dim() == 2 {
                            flux.eo_split(1, a)
                        } else {
                            (0.0, 0.0)
                        };
                        [flux.eo_split(0, a), s1]
                    })
                    .collect();
                self.upwind_pairing(test, &q)
            }
        };
        let nl = pairwise_sum_by(n, |i| u[i] * a_psi.values()[i]);
        Ok((hn * (src + fl - nl), hn * (src.abs() + fl.abs() + nl.abs())))
    }

    /// `Σ q(u)·∇ψ` with the spectral gradient, and the sum of magnitudes.
    fn central_pairing(&self, test: &TestFunction, q: &[[f64; 2]]) -> (f64, f64) {
        let dim = self.u.grid().dim();
        let term = |i: usize, d: usize| q[i][d] * test.grad[d].values()[i];
        (
            pairwise_sum_by(q.len(), |i| (0..dim).map(|d| term(i, d)).sum()),
            pairwise_sum_by(q.len(), |i| (0..dim).map(|d| term(i, d).abs()).sum()),
        )
    }

    /// `Σ_i Σ_d Q_{i+e_d/2}(ψ_{i+e_d} − ψ_i)/h` with the upwind interface
    /// value `Q_{i+e_d/2} = q⁺(u_i) + q⁻(u_{i+e_d})`. This is the pairing
    /// under which the Engquist–Osher scheme is conservative and entropy
    /// dissipative.
    fn upwind_pairing(&self, test: &TestFunction, q: &[[(f64, f64); 2]]) -> (f64, f64) {
        let g = *self.u.grid();
        let h = g.spacing();
        let psi = test.phi.values();
        let term = |i: usize, d: usize| {
            let up = g.step(i, d, true);
            (q[i][d].0 + q[up][d].1) * (psi[up] - psi[i]) / h
        };
        (
            pairwise_sum_by(q.len(), |i| (0..g.dim()).map(|d| term(i, d)).sum()),
            pairwise_sum_by(q.len(), |i| (0..g.dim()).map(|d| term(i, d).abs()).sum()),
        )
    }
}

/// Entropy residual of one pair, test function and radius.
#[allow(clippy::too_many_arguments)]
pub fn entropy_residual(
    u: &Field,
    f: &Field,
    b: &Saturation,
    pair: &EntropyFluxPair,
    phi_test: &Field,
    r: f64,
    op: &SplitOperator,
    eps: f64,
) -> Result<EntropyTerms> {
    let scheme = FluxScheme::Central;
    let mut ctx = EntropyContext::new(op, u, f, b, eps, scheme)?;
    let spec = TestFunctionSpec::new([0.0; 2], 0.0, 0.0);
    let mut test = TestFunction::from_field(spec, phi_test.clone(), scheme)?;
    ctx.residual(pair, &mut test, r)
}

/// Largest `|weak residual|` over the test functions.
pub fn weak_residual(
    u: &Field,
    f: &Field,
    b: &Saturation,
    flux: &Flux,
    tests: &[Field],
    op: &SplitOperator,
) -> Result<f64> {
    let ctx = EntropyContext::new(op, u, f, b, 0.0, FluxScheme::Central)?;
    let mut worst: f64 = 0.0;
    for phi in tests {
        let spec = TestFunctionSpec::new([0.0; 2], 0.0, 0.0);
        let t = TestFunction::from_field(spec, phi.clone(), FluxScheme::Central)?;
        worst = worst.max(ctx.weak_residual(flux, &t)?.0.abs());
    }
    Ok(worst)
}

/// `δ_c = 1e−4‖f1 − f2‖₁ + 1e−10`.
pub fn contraction_slack(f1: &Field, f2: &Field) -> Result<f64> {
    Ok(1e-4 * norm_l1(&f1.sub(f2)?) + 1e-10)
}

/// `‖f1 − f2‖₁ − ‖b(u1) − b(u2)‖₁`.
pub fn contraction_check(
    u1: &Field,
    u2: &Field,
    f1: &Field,
    f2: &Field,
    b: &Saturation,
) -> Result<f64> {
    u1.ensure_same_grid(u2)?;
    f1.ensure_same_grid(f2)?;
    u1.ensure_same_grid(f1)?;
    let db = u1.zip_map(u2, |a, c| b.eval(a) - b.eval(c))?;
    Ok(norm_l1(&f1.sub(f2)?) - norm_l1(&db))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
}

/// `‖(f1 − f2)^±‖₁ − ‖(b(u1) − b(u2))^±‖₁`.
pub fn comparison_check(
    u1: &Field,
    u2: &Field,
    f1: &Field,
    f2: &Field,
    b: &Saturation,
    side: Side,
) -> Result<f64> {
    u1.ensure_same_grid(u2)?;
    f1.ensure_same_grid(f2)?;
    u1.ensure_same_grid(f1)?;
    let positive = side == Side::Plus;
    let db = u1.zip_map(u2, |a, c| b.eval(a) - b.eval(c))?;
    Ok(norm_l1_part(&f1.sub(f2)?, positive) - norm_l1_part(&db, positive))
}

/// `−max (b(u1) − b(u2))⁺`, the pointwise ordering margin when `f1 ≤ f2`.
pub fn ordering_margin(u1: &Field, u2: &Field, b: &Saturation) -> Result<f64> {
    let db = u1.zip_map(u2, |a, c| b.eval(a) - b.eval(c))?;
    Ok(-db.max().max(0.0))
}

/// `‖f‖∞ − ‖b(u)‖∞`.
pub fn linf_check(u: &Field, f: &Field, b: &Saturation) -> Result<f64> {
    u.ensure_same_grid(f)?;
    let bu = u.map(|a| b.eval(a))?;
    Ok(norm_linf(f) - norm_linf(&bu))
}

/// Suite configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub entropy: Option<EntropyCheckConfig>,
    pub pairs: usize,
    pub schedule: ContinuationSchedule,
    pub solver: SolverConfig,
    /// Seed of the random contract probe points.
    pub seed: u64,
}

/// One row of the check report: the worst case of one check on one problem.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub check: String,
    pub problem: String,
    pub s: f64,
    pub eps_final: f64,
    pub params: String,
    pub margin: f64,
    pub slack: f64,
    /// Normalisation for ranking rows across checks.
    pub scale: f64,
}

impl CheckRow {
    pub fn pass(&self) -> bool {
        self.margin >= -self.slack
    }

    /// `(margin + slack)/scale`; negative for failures.
    pub fn headroom(&self) -> f64 {
        (self.margin + self.slack) / self.scale.max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckReport {
    pub rows: Vec<CheckRow>,
}

impl CheckReport {
    pub const CSV_HEADER: &'static str = "check,problem,s,eps_final,params,margin,slack,pass";

    pub fn passed(&self) -> bool {
        self.rows.iter().all(CheckRow::pass)
    }

    /// Row with the least headroom.
    pub fn worst(&self) -> Option<&CheckRow> {
        self.rows
            .iter()
            .min_by(|a, b| a.headroom().total_cmp(&b.headroom()))
    }

    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            (a.check.as_str(), a.problem.as_str(), a.params.as_str()).cmp(&(
                b.check.as_str(),
                b.problem.as_str(),
                b.params.as_str(),
            ))
        });
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.check,
                r.problem,
                r.s,
                fmt_real(r.eps_final),
                r.params,
                fmt_real(r.margin),
                fmt_real(r.slack),
                r.pass()
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

/// Collects the worst case of each check.
struct Worst {
    rows: Vec<CheckRow>,
    problem: String,
    s: f64,
    eps_final: f64,
}

impl Worst {
    fn new(problem: &str, s: f64, eps_final: f64) -> Self {
        Worst {
            rows: Vec::new(),
            problem: problem.to_string(),
            s,
            eps_final,
        }
    }

    fn offer(&mut self, check: &str, params: String, margin: f64, slack: f64, scale: f64) {
        let row = CheckRow {
            check: check.to_string(),
            problem: self.problem.clone(),
            s: self.s,
            eps_final: self.eps_final,
            params,
            margin,
            slack,
            scale,
        };
        match self.rows.iter_mut().find(|r| r.check == check) {
            Some(existing) => {
                if row.headroom() < existing.headroom() {
                    *existing = row;
                }
            }
            None => self.rows.push(row),
        }
    }
}

/// Probe range for the nonlinearity contracts of a problem.
fn contract_range(p: &Problem) -> f64 {
    (2.0 * norm_linf(&p.f) / p.template.b.lambda()).max(1.0)
}

/// Checks the saturation and flux contracts of every problem.
pub fn check_contracts(problems: &[Problem], seed: u64) -> Result<()> {
    for p in problems {
        let m = contract_range(p);
        p.template
            .b
            .check_invariants_seeded(m, Some(seed))
            .map_err(|e| Error::Contract(format!("problem {}: {e}", p.name)))?;
        p.template
            .flux
            .check_invariants_seeded(m, Some(seed))
            .map_err(|e| Error::Contract(format!("problem {}: {e}", p.name)))?;
    }
    Ok(())
}

/// Solves a problem along the schedule.
pub fn solve_problem(p: &Problem, cfg: &VerifyConfig) -> Result<SolveReport> {
    vanishing_viscosity(&p.f, &cfg.schedule, &p.template, &cfg.solver, true)
}

/// Runs the entropy and weak-form sweep on a solution.
pub fn entropy_rows(
    template: &ProblemTemplate,
    u: &Field,
    f: &Field,
    eps: f64,
    cfg: &EntropyCheckConfig,
    out: &mut Vec<CheckRow>,
    problem: &str,
) -> Result<()> {
    let op = SplitOperator::new(&template.grid, template.s, template.split)?;
    let mut worst = Worst::new(problem, template.s.value(), eps);
    let mut ctx = EntropyContext::new(&op, u, f, &template.b, eps, template.scheme)?;
    let mut tests: Vec<TestFunction> = cfg
        .test_functions
        .iter()
        .map(|t| TestFunction::new(&template.grid, *t, template.scheme))
        .collect::<Result<_>>()?;
    let id = ctx.evaluate_pair(&make_entropy_flux(Entropy::linear(1.0), &template.flux))?;
    let neg = ctx.evaluate_pair(&make_entropy_flux(Entropy::linear(-1.0), &template.flux))?;
    for (bi, test) in tests.iter_mut().enumerate() {
        let (w, w_mag) = ctx.weak_residual(&template.flux, test)?;
        for &r in &cfg.r_values {
            for (sign, name, values) in [(1.0, "id", &id), (-1.0, "-id", &neg)] {
                let t = ctx.residual_of(values, test, r)?;
                let mismatch = (t.value() - sign * w).abs();
                let rel = 1e-12 * t.magnitude.max(w_mag);
                worst.offer(
                    "entropy_identity",
                    format!("eta={name};r={r};bump={bi}"),
                    -mismatch,
                    rel,
                    rel.max(f64::MIN_POSITIVE),
                );
            }
        }
        let scale = norm_linf(f) * test.l1;
        let visc = weak_viscous_bound(u, test, eps);
        worst.offer(
            "weak_form",
            format!("bump={bi}"),
            -w.abs(),
            cfg.tolerance * scale + visc,
            scale,
        );
    }
    for &k in &cfg.levels(u) {
        let sk = smoothed_kruzhkov(k, cfg.smoothing_n)?;
        let pairs = [
            ("entropy_kruzhkov", sk.entropy()),
            ("entropy_plus", sk.positive_part()),
            ("entropy_minus", sk.negative_part()),
        ];
        for (check, eta) in pairs {
            let values = ctx.evaluate_pair(&make_entropy_flux(eta, &template.flux))?;
            for (bi, test) in tests.iter_mut().enumerate() {
                for &r in &cfg.r_values {
                    let t = ctx.residual_of(&values, test, r)?;
                    let slack = cfg.tolerance * t.scale + t.viscous;
                    worst.offer(
                        check,
                        format!("r={r};k={k};bump={bi};n={}", cfg.smoothing_n),
                        t.value(),
                        slack,
                        t.scale,
                    );
                }
            }
        }
    }
    out.extend(worst.rows);
    Ok(())
}

/// `|εΣuψ h^N| + |εΣu(−Δ_hψ) h^N|`.
fn weak_viscous_bound(u: &Field, test: &TestFunction, eps: f64) -> f64 {
    let hn = u.grid().cell_volume();
    let n = u.len();
    let a = pairwise_sum_by(n, |i| u.values()[i] * test.phi.values()[i]);
    let b = pairwise_sum_by(n, |i| u.values()[i] * test.neg_laplacian.values()[i]);
    eps * hn * (a.abs() + b.abs())
}

/// Rows from the a-priori bounds and Cauchy increments of a solve.
pub fn solve_rows(rep: &SolveReport, problem: &str, s: f64, out: &mut Vec<CheckRow>) {
    let eps_final = rep.records.last().map_or(0.0, |r| r.eps);
    let mut worst = Worst::new(problem, s, eps_final);
    offer_apriori(rep, "", &mut worst);
    let inc: Vec<(f64, f64)> = rep
        .records
        .iter()
        .filter_map(|r| r.cauchy_l1.map(|c| (r.eps, c)))
        .collect();
    let tail = &inc[inc.len().saturating_sub(6)..];
    for w in tail.windows(2) {
        worst.offer(
            "cauchy_decreasing",
            format!("eps={}", w[1].0),
            w[0].1 - w[1].1,
            0.0,
            w[0].1.max(f64::MIN_POSITIVE),
        );
    }
    out.extend(worst.rows);
}

/// Offers the a-priori margins of every record; `tag` prefixes the params.
fn offer_apriori(rep: &SolveReport, tag: &str, worst: &mut Worst) {
    for rec in &rep.records {
        for (name, margin) in apriori_margins(rep, rec) {
            // Margins carry the (1 + 1e−6) factor; report it as slack.
            let bound = match name {
                "b_l1" => rep.f_l1,
                "u_l1" => rep.f_l1 / rep.lambda,
                "u_linf" => rep.f_linf / rep.lambda,
                _ => rec.energy_bound,
            };
            let slack = crate::solver::APRIORI_SLACK * bound;
            worst.offer(
                &format!("apriori_{name}"),
                format!("{tag}eps={}", rec.eps),
                margin - slack,
                slack,
                bound.max(f64::MIN_POSITIVE),
            );
        }
    }
}

/// Rows from the data pairs: contraction, comparison, ordering and L∞.
pub fn pair_rows(
    p: &Problem,
    base: &SolveReport,
    cfg: &VerifyConfig,
    out: &mut Vec<CheckRow>,
) -> Result<()> {
    let g = p.template.grid;
    let b = &p.template.b;
    let eps_final = cfg.schedule.final_eps();
    let mut worst = Worst::new(&p.name, p.template.s.value(), eps_final);
    let u1 = &base.u;
    let f1 = &p.f;
    let lm = linf_check(u1, f1, b)?;
    worst.offer(
        "linf",
        "pair=base".into(),
        lm,
        1e-10,
        norm_linf(f1).max(f64::MIN_POSITIVE),
    );
    let solved: Vec<(usize, Field, SolveReport)> = (0..cfg.pairs)
        .into_par_iter()
        .map(|i| {
            let (spec, sign) = pair_perturbation(&g, i);
            let f2 = f1.add(&bump(&g, &spec)?.scale(sign)?)?;
            let rep = vanishing_viscosity(&f2, &cfg.schedule, &p.template, &cfg.solver, true)?;
            Ok((i, f2, rep))
        })
        .collect::<Result<_>>()?;
    for (i, f2, rep2) in &solved {
        offer_apriori(rep2, &format!("pair={i};"), &mut worst);
        let u2 = &rep2.u;
        let dc = contraction_slack(f1, f2)?;
        let scale = norm_l1(&f1.sub(f2)?).max(f64::MIN_POSITIVE);
        let tag = format!("pair={i}");
        worst.offer(
            "contraction",
            tag.clone(),
            contraction_check(u1, u2, f1, f2, b)?,
            dc,
            scale,
        );
        worst.offer(
            "comparison_plus",
            tag.clone(),
            comparison_check(u1, u2, f1, f2, b, Side::Plus)?,
            dc,
            scale,
        );
        worst.offer(
            "comparison_minus",
            tag.clone(),
            comparison_check(u1, u2, f1, f2, b, Side::Minus)?,
            dc,
            scale,
        );
        // Order the pair so that the first datum is the smaller one.
        let diff = f1.sub(f2)?;
        if diff.max() <= 0.0 {
            worst.offer(
                "comparison_order",
                tag.clone(),
                ordering_margin(u1, u2, b)?,
                dc,
                scale,
            );
        } else if diff.min() >= 0.0 {
            worst.offer(
                "comparison_order",
                tag.clone(),
                ordering_margin(u2, u1, b)?,
                dc,
                scale,
            );
        }
        worst.offer(
            "linf",
            tag,
            linf_check(u2, f2, b)?,
            1e-10,
            norm_linf(f2).max(f64::MIN_POSITIVE),
        );
    }
    out.extend(worst.rows);
    Ok(())
}

/// One row per check and problem: the one with the least headroom.
fn keep_worst(rows: impl IntoIterator<Item = CheckRow>) -> Vec<CheckRow> {
    let mut out: Vec<CheckRow> = Vec::new();
    for row in rows {
        match out
            .iter_mut()
            .find(|r| r.check == row.check && r.problem == row.problem)
        {
            Some(existing) => {
                if row.headroom() < existing.headroom() {
                    *existing = row;
                }
            }
            None => out.push(row),
        }
    }
    out
}

/// Runs every check on every problem. Contracts are checked before any
/// solve; rows are sorted by check, problem and parameters.
pub fn run_suite(problems: &[Problem], cfg: &VerifyConfig) -> Result<CheckReport> {
    check_contracts(problems, cfg.seed)?;
    if let Some(e) = &cfg.entropy {
        for p in problems {
            e.validate(&p.template.grid)?;
        }
    }
    let per_problem: Vec<Vec<CheckRow>> = problems
        .par_iter()
        .map(|p| {
            let mut rows = Vec::new();
            let base = solve_problem(p, cfg)?;
            solve_rows(&base, &p.name, p.template.s.value(), &mut rows);
            if let Some(e) = &cfg.entropy {
                entropy_rows(
                    &p.template,
                    &base.u,
                    &p.f,
                    cfg.schedule.final_eps(),
                    e,
                    &mut rows,
                    &p.name,
                )?;
            }
            pair_rows(p, &base, cfg, &mut rows)?;
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let mut report = CheckReport {
        rows: keep_worst(per_problem.into_iter().flatten()),
    };
    report.sort();
    Ok(report)
}

/// Checks a precomputed solution of one problem: contracts, L∞ and the
/// entropy sweep at the final viscosity of the schedule. No solve is run.
pub fn verify_solution(p: &Problem, u: &Field, cfg: &VerifyConfig) -> Result<CheckReport> {
    check_contracts(std::slice::from_ref(p), cfg.seed)?;
    u.ensure_same_grid(&p.f)?;
    if let Some(e) = &cfg.entropy {
        e.validate(&p.template.grid)?;
    }
    let eps = cfg.schedule.final_eps();
    let mut worst = Worst::new(&p.name, p.template.s.value(), eps);
    worst.offer(
        "linf",
        "pair=base".into(),
        linf_check(u, &p.f, &p.template.b)?,
        1e-10,
        norm_linf(&p.f).max(f64::MIN_POSITIVE),
    );
    let mut rows = worst.rows;
    if let Some(e) = &cfg.entropy {
        entropy_rows(&p.template, u, &p.f, eps, e, &mut rows, &p.name)?;
    }
    let mut report = CheckReport { rows };
    report.sort();
    Ok(report)
}
