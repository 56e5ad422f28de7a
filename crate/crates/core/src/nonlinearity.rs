//! Saturation `b`, flux `F`, truncation, and entropy/entropy-flux pairs.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::integrate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Number of sample points in the invariant probes.
pub const PROBE_POINTS: usize = 10_000;

/// `T_k(a)`: clamp of `a` to `[−k, k]`.
pub fn truncate(k: f64, a: f64) -> f64 {
    debug_assert!(k > 0.0);
    a.clamp(-k, k)
}

/// Random points added to the uniform probe when a seed is given.
pub const RANDOM_PROBE_POINTS: usize = 1_000;

/// Sorted probe of `[−m, m]`: a uniform `10⁴`-point grid, plus random points
/// drawn from `seed`.
fn probe(m: f64, seed: Option<u64>) -> Vec<f64> {
    let mut pts: Vec<f64> = (0..PROBE_POINTS)
        .map(|i| -m + 2.0 * m * i as f64 / (PROBE_POINTS - 1) as f64)
        .collect();
    if let Some(seed) = seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        pts.extend((0..RANDOM_PROBE_POINTS).map(|_| rng.gen_range(-m..=m)));
        pts.sort_by(f64::total_cmp);
        pts.dedup();
    }
    pts
}

/// Continuous piecewise-linear map through sorted breakpoints, extended
/// linearly with the end slopes.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::InvalidArgument(
                "breakpoint table needs at least two (x, value) rows".into(),
            ));
        }
        for (i, (x, y)) in xs.iter().zip(&ys).enumerate() {
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::NonFinite {
                    index: i,
                    context: "breakpoint table".into(),
                });
            }
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "breakpoint x values must be strictly increasing".into(),
            ));
        }
        Ok(PiecewiseLinear { xs, ys })
    }

    /// Parses `x,value` rows; a non-numeric first row is a header. `#` lines
    /// are comments.
    pub fn parse_csv(text: &str, path: &Path) -> Result<Self> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 2 {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    message: format!("line {}: expected 2 columns (x, value)", lineno + 1),
                });
            }
            match (cols[0].parse::<f64>(), cols[1].parse::<f64>()) {
                (Ok(x), Ok(y)) => {
                    xs.push(x);
                    ys.push(y);
                }
                _ if xs.is_empty() && cols[0] == "x" => continue,
                _ => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        message: format!("line {}: cannot parse '{line}'", lineno + 1),
                    })
                }
            }
        }
        PiecewiseLinear::new(xs, ys).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PiecewiseLinear::parse_csv(&text, path)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.xs
    }

    fn segment(&self, x: f64) -> usize {
        let n = self.xs.len();
        match self.xs.partition_point(|&b| b <= x) {
            0 => 0,
            i if i >= n => n - 2,
            i => i - 1,
        }
    }

    fn slope_of(&self, i: usize) -> f64 {
        (self.ys[i + 1] - self.ys[i]) / (self.xs[i + 1] - self.xs[i])
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.segment(x);
        self.ys[i] + self.slope_of(i) * (x - self.xs[i])
    }

    /// Right derivative.
    pub fn slope(&self, x: f64) -> f64 {
        self.slope_of(self.segment(x))
    }

    pub fn max_abs_slope(&self) -> f64 {
        (0..self.xs.len() - 1)
            .map(|i| self.slope_of(i).abs())
            .fold(0.0, f64::max)
    }

    /// `∫₀^a max(g′, 0)` when `positive`, else `∫₀^a min(g′, 0)`.
    pub fn monotone_part(&self, a: f64, positive: bool) -> f64 {
        let part = |slope: f64| {
            if positive {
                slope.max(0.0)
            } else {
                slope.min(0.0)
            }
        };
        let (lo, hi, sign) = if a >= 0.0 {
            (0.0, a, 1.0)
        } else {
            (a, 0.0, -1.0)
        };
        let mut cuts = vec![lo];
        cuts.extend(self.xs.iter().copied().filter(|&x| x > lo && x < hi));
        cuts.push(hi);
        let total: f64 = cuts
            .windows(2)
            .map(|w| part(self.slope(0.5 * (w[0] + w[1]))) * (w[1] - w[0]))
            .sum();
        sign * total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SaturationKind {
    /// `b(x) = λx`.
    Linear { lambda: f64 },
    /// `b(x) = x + arctan x`.
    IdPlusArctan,
    /// Odd map with slope `λ` on `[0, a]`, flat on `[a, a+w]`, then `λ(x − w)`.
    Plateau { lambda: f64, start: f64, width: f64 },
    /// Piecewise-linear breakpoint table.
    Table(PiecewiseLinear),
}

/// Nondecreasing saturation `b` with `b(0) = 0` and `b(x)x ≥ λx²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Saturation {
    kind: SaturationKind,
    lambda: f64,
    lipschitz: f64,
}

impl Saturation {
    pub fn linear(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        Ok(Saturation {
            kind: SaturationKind::Linear { lambda },
            lambda,
            lipschitz: lambda,
        })
    }

    pub fn id_plus_arctan() -> Self {
        Saturation {
            kind: SaturationKind::IdPlusArctan,
            lambda: 1.0,
            lipschitz: 2.0,
        }
    }

    pub fn plateau(lambda: f64, start: f64, width: f64) -> Result<Self> {
        if !(lambda > 0.0 && start > 0.0 && width >= 0.0)
            || !(lambda.is_finite() && start.is_finite() && width.is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "plateau needs lambda > 0, start > 0, width >= 0; got {lambda}, {start}, {width}"
            )));
        }
        Ok(Saturation {
            kind: SaturationKind::Plateau {
                lambda,
                start,
                width,
            },
            lambda: lambda * start / (start + width),
            lipschitz: lambda,
        })
    }

    /// Piecewise-linear `b`. `λ` is the infimum of `b(x)/x`, `L_b` the
    /// largest slope.
    pub fn table(t: PiecewiseLinear) -> Result<Self> {
        let b0 = t.eval(0.0);
        if b0.abs() > 1e-14 * (1.0 + t.ys.iter().fold(0.0_f64, |m, y| m.max(y.abs()))) {
            return Err(Error::Contract(format!(
                "saturation table has b(0) = {b0}, not 0"
            )));
        }
        let n = t.xs.len();
        let mut lambda = t.slope_of(0).min(t.slope_of(n - 2));
        for (&x, &y) in t.xs.iter().zip(&t.ys) {
            if x != 0.0 {
                lambda = lambda.min(y / x);
            }
        }
        // Segments through the origin contribute their slope.
        lambda = lambda.min(t.slope(0.0)).min(t.slope(-f64::MIN_POSITIVE));
        if !(lambda > 0.0) {
            return Err(Error::Contract(format!(
                "saturation table violates the growth bound: inf b(x)/x = {lambda}"
            )));
        }
        if (0..n - 1).any(|i| t.slope_of(i) < 0.0) {
            return Err(Error::Contract(
                "saturation table is not nondecreasing".into(),
            ));
        }
        let lipschitz = t.max_abs_slope();
        Ok(Saturation {
            kind: SaturationKind::Table(t),
            lambda,
            lipschitz,
        })
    }

    /// A table taken as given, with a claimed growth constant. The contract
    /// is left to `check_invariants`, which a verification run applies
    /// before solving.
    pub fn table_unchecked(t: PiecewiseLinear, lambda: f64) -> Self {
        let lipschitz = t.max_abs_slope();
        Saturation {
            kind: SaturationKind::Table(t),
            lambda,
            lipschitz,
        }
    }

    pub fn kind(&self) -> &SaturationKind {
        &self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            SaturationKind::Linear { lambda } => lambda * x,
            SaturationKind::IdPlusArctan => x + x.atan(),
            SaturationKind::Plateau {
                lambda,
                start,
                width,
            } => {
                let ax = x.abs();
                let v = if ax <= *start {
                    lambda * ax
                } else if ax <= start + width {
                    lambda * start
                } else {
                    lambda * (ax - width)
                };
                v.copysign(x)
            }
            SaturationKind::Table(t) => t.eval(x),
        }
    }

    /// Derivative where it exists, right derivative at kinks.
    pub fn deriv(&self, x: f64) -> f64 {
        match &self.kind {
            SaturationKind::Linear { lambda } => *lambda,
            SaturationKind::IdPlusArctan => 1.0 + 1.0 / (1.0 + x * x),
            SaturationKind::Plateau {
                lambda,
                start,
                width,
            } => {
                let ax = x.abs();
                if ax < *start || ax >= start + width {
                    *lambda
                } else {
                    0.0
                }
            }
            SaturationKind::Table(t) => t.slope(x),
        }
    }

    /// Short name and parameters, for reports.
    pub fn describe(&self) -> String {
        match &self.kind {
            SaturationKind::Linear { lambda } => format!("linear(lambda={lambda})"),
            SaturationKind::IdPlusArctan => "id_plus_arctan".into(),
            SaturationKind::Plateau {
                lambda,
                start,
                width,
            } => format!("plateau(lambda={lambda};start={start};width={width})"),
            SaturationKind::Table(t) => format!("table({} breakpoints)", t.xs.len()),
        }
    }

    /// Samples `b(0)=0`, monotonicity, growth and Lipschitz bounds on a
    /// `10⁴`-point probe of `[−m, m]`.
    pub fn check_invariants(&self, m: f64) -> Result<()> {
        self.check_invariants_seeded(m, None)
    }

    /// As `check_invariants`, with extra random probe points from `seed`.
    pub fn check_invariants_seeded(&self, m: f64, seed: Option<u64>) -> Result<()> {
        let b0 = self.eval(0.0);
        if b0 != 0.0 {
            return Err(Error::Contract(format!("b(0) = {b0}, expected 0")));
        }
        let pts = probe(m, seed);
        let vals: Vec<f64> = pts.iter().map(|&x| self.eval(x)).collect();
        let tol = 1e-12 * (1.0 + self.lipschitz * m);
        for i in 0..pts.len() {
            let (x, v) = (pts[i], vals[i]);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    index: i,
                    context: "saturation probe".into(),
                });
            }
            if v * x < self.lambda * x * x - tol * x.abs() {
                return Err(Error::Contract(format!(
                    "growth bound b(x)x >= {}x^2 fails at x = {x}",
                    self.lambda
                )));
            }
            if i > 0 {
                let (dx, dv) = (x - pts[i - 1], v - vals[i - 1]);
                if dv < -tol {
                    return Err(Error::Contract(format!(
                        "b is not nondecreasing: b({x}) < b({})",
                        pts[i - 1]
                    )));
                }
                if dv.abs() > self.lipschitz * dx * (1.0 + 1e-9) + tol {
                    return Err(Error::Contract(format!(
                        "Lipschitz bound {} fails near x = {x}",
                        self.lipschitz
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Scalar profile `g` of a flux `F_d(a) = c_d g(a)`.
#[derive(Debug, Clone, PartialEq)]
pub enum FluxProfile {
    Zero,
    /// `g(a) = a`.
    Linear,
    /// `g(a) = a²/2`.
    Burgers,
    Table(PiecewiseLinear),
}

impl FluxProfile {
    fn eval(&self, a: f64) -> f64 {
        match self {
            FluxProfile::Zero => 0.0,
            FluxProfile::Linear => a,
            FluxProfile::Burgers => 0.5 * a * a,
            FluxProfile::Table(t) => t.eval(a),
        }
    }

    fn deriv(&self, a: f64) -> f64 {
        match self {
            FluxProfile::Zero => 0.0,
            FluxProfile::Linear => 1.0,
            FluxProfile::Burgers => a,
            FluxProfile::Table(t) => t.slope(a),
        }
    }

    /// `∫₀^a max(g′,0)` or `∫₀^a min(g′,0)`.
    fn monotone_part(&self, a: f64, positive: bool) -> f64 {
        match self {
            FluxProfile::Zero => 0.0,
            FluxProfile::Linear => {
                if positive {
                    a
                } else {
                    0.0
                }
            }
            FluxProfile::Burgers => {
                let c = if positive { a.max(0.0) } else { a.min(0.0) };
                0.5 * c * c
            }
            FluxProfile::Table(t) => t.monotone_part(a, positive),
        }
    }

    fn max_abs_deriv(&self, m: f64) -> f64 {
        match self {
            FluxProfile::Zero => 0.0,
            FluxProfile::Linear => 1.0,
            FluxProfile::Burgers => m,
            FluxProfile::Table(t) => {
                let mut best = t.slope(-m).abs().max(t.slope(m).abs());
                for (i, &x) in t.xs.iter().enumerate().take(t.xs.len() - 1) {
                    if t.xs[i + 1] > -m && x < m {
                        best = best.max(t.slope_of(i).abs());
                    }
                }
                best
            }
        }
    }

    fn kinks(&self) -> Vec<f64> {
        match self {
            FluxProfile::Table(t) => t.xs.clone(),
            _ => Vec::new(),
        }
    }
}

/// Flux `F: ℝ → ℝ^N` of the form `F_d(a) = c_d g(T(a))`, with `T` the
/// optional truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct Flux {
    profile: FluxProfile,
    coeffs: [f64; 2],
    dim: usize,
    truncation: Option<f64>,
}

impl Flux {
    pub fn new(profile: FluxProfile, coeffs: &[f64]) -> Result<Self> {
        if coeffs.is_empty() || coeffs.len() > 2 {
            return Err(Error::InvalidArgument(format!(
                "flux needs 1 or 2 direction coefficients, got {}",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(
                "flux coefficients must be finite".into(),
            ));
        }
        if let FluxProfile::Table(t) = &profile {
            let g0 = t.eval(0.0);
            if g0.abs() > 1e-14 {
                return Err(Error::Contract(format!(
                    "flux table has F(0) = {g0}, not 0"
                )));
            }
        }
        let mut c = [0.0; 2];
        c[..coeffs.len()].copy_from_slice(coeffs);
        Ok(Flux {
            profile,
            coeffs: c,
            dim: coeffs.len(),
            truncation: None,
        })
    }

    pub fn zero(dim: usize) -> Self {
        Flux::new(FluxProfile::Zero, &vec![0.0; dim]).expect("valid zero flux")
    }

    /// `F(a) = c·a`.
    pub fn linear(velocity: &[f64]) -> Result<Self> {
        Flux::new(FluxProfile::Linear, velocity)
    }

    /// `F_d(a) = a²/2` in every component.
    pub fn burgers(dim: usize) -> Self {
        Flux::new(FluxProfile::Burgers, &vec![1.0; dim]).expect("valid Burgers flux")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn profile(&self) -> &FluxProfile {
        &self.profile
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs[..self.dim]
    }

    pub fn truncation(&self) -> Option<f64> {
        self.truncation
    }

    pub fn is_zero(&self) -> bool {
        self.profile == FluxProfile::Zero || self.coeffs().iter().all(|&c| c == 0.0)
    }

    fn arg(&self, a: f64) -> f64 {
        match self.truncation {
            Some(k) => truncate(k, a),
            None => a,
        }
    }

    pub fn eval(&self, a: f64) -> [f64; 2] {
        let g = self.profile.eval(self.arg(a));
        [self.coeffs[0] * g, self.coeffs[1] * g]
    }

    /// `F′(a)`; zero outside the truncation range.
    pub fn deriv(&self, a: f64) -> [f64; 2] {
        let inside = self.truncation.map_or(true, |k| a.abs() < k);
        let g = if inside { self.profile.deriv(a) } else { 0.0 };
        [self.coeffs[0] * g, self.coeffs[1] * g]
    }

    /// Engquist–Osher split of component `d`: `(F_d⁺(a), F_d⁻(a))` with
    /// `F_d⁺` nondecreasing, `F_d⁻` nonincreasing and `F_d = F_d⁺ + F_d⁻`.
    pub fn eo_split(&self, d: usize, a: f64) -> (f64, f64) {
        let c = self.coeffs[d];
        let t = self.arg(a);
        let (gp, gm) = (
            self.profile.monotone_part(t, true),
            self.profile.monotone_part(t, false),
        );
        if c >= 0.0 {
            (c * gp, c * gm)
        } else {
            (c * gm, c * gp)
        }
    }

    /// Lipschitz constant `L(m)` on `[−m, m]` (Euclidean norm over components).
    pub fn lipschitz_on(&self, m: f64) -> f64 {
        let m = self.truncation.map_or(m, |k| m.min(k));
        let cn = self.coeffs().iter().map(|c| c * c).sum::<f64>().sqrt();
        cn * self.profile.max_abs_deriv(m)
    }

    /// Kinks of `F′` (breakpoints and truncation levels).
    pub fn kinks(&self) -> Vec<f64> {
        let mut k = self.profile.kinks();
        if let Some(t) = self.truncation {
            k.extend([-t, t]);
        }
        k
    }

    pub fn describe(&self) -> String {
        let name = match &self.profile {
            FluxProfile::Zero => "zero".to_string(),
            FluxProfile::Linear => "linear".to_string(),
            FluxProfile::Burgers => "burgers".to_string(),
            FluxProfile::Table(t) => format!("table({} breakpoints)", t.xs.len()),
        };
        let c: Vec<String> = self.coeffs().iter().map(|c| c.to_string()).collect();
        match self.truncation {
            Some(k) => format!("{name}(c={};T={k})", c.join(";")),
            None => format!("{name}(c={})", c.join(";")),
        }
    }

    /// Checks `F(0)=0` and `|F(a)−F(b)| ≤ L(m)|a−b|` on a probe of `[−m, m]`.
    pub fn check_invariants(&self, m: f64) -> Result<()> {
        self.check_invariants_seeded(m, None)
    }

    /// As `check_invariants`, with extra random probe points from `seed`.
    pub fn check_invariants_seeded(&self, m: f64, seed: Option<u64>) -> Result<()> {
        let f0 = self.eval(0.0);
        if f0[0] != 0.0 || f0[1] != 0.0 {
            return Err(Error::Contract(format!("F(0) = {f0:?}, expected 0")));
        }
        let l = self.lipschitz_on(m);
        let pts = probe(m, seed);
        for w in pts.windows(2) {
            let (fa, fb) = (self.eval(w[0]), self.eval(w[1]));
            let d = ((fa[0] - fb[0]).powi(2) + (fa[1] - fb[1]).powi(2)).sqrt();
            if d > l * (w[1] - w[0]) * (1.0 + 1e-9) + 1e-14 {
                return Err(Error::Contract(format!(
                    "flux Lipschitz bound {l} fails near a = {}",
                    w[0]
                )));
            }
        }
        Ok(())
    }
}

/// `F_ε = F∘T_{1/ε}`.
pub fn truncated_flux(f: &Flux, eps: f64) -> Result<Flux> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let level = 1.0 / eps;
    let mut out = f.clone();
    out.truncation = Some(f.truncation.map_or(level, |k| k.min(level)));
    Ok(out)
}

type RealMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A convex entropy `η` with its first two derivatives.
#[derive(Clone)]
pub struct Entropy {
    name: String,
    eta: RealMap,
    d1: RealMap,
    d2: RealMap,
    kinks: Vec<f64>,
}

impl fmt::Debug for Entropy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Entropy").field("name", &self.name).finish()
    }
}

impl Entropy {
    /// Entropy from closures. `kinks` lists points where `η″` may jump.
    pub fn custom(
        name: impl Into<String>,
        eta: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2: impl Fn(f64) -> f64 + Send + Sync + 'static,
        kinks: Vec<f64>,
    ) -> Self {
        Entropy {
            name: name.into(),
            eta: Arc::new(eta),
            d1: Arc::new(d1),
            d2: Arc::new(d2),
            kinks,
        }
    }

    /// `η(a) = σa` for `σ = ±1`.
    pub fn linear(sign: f64) -> Self {
        Entropy::custom(
            if sign >= 0.0 { "id" } else { "-id" },
            move |a| sign * a,
            move |_| sign,
            |_| 0.0,
            Vec::new(),
        )
    }

    /// `η(a) = a²`.
    pub fn square() -> Self {
        Entropy::custom("square", |a| a * a, |a| 2.0 * a, |_| 2.0, Vec::new())
    }

    /// The nonsmooth Kruzhkov entropy `|a − k|`.
    pub fn kruzhkov(k: f64) -> Self {
        Entropy::custom(
            format!("kruzhkov(k={k})"),
            move |a| (a - k).abs(),
            move |a| sign0(a - k),
            |_| 0.0,
            vec![k],
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eta(&self, a: f64) -> f64 {
        (self.eta)(a)
    }

    pub fn eta_prime(&self, a: f64) -> f64 {
        (self.d1)(a)
    }

    pub fn eta_second(&self, a: f64) -> f64 {
        (self.d2)(a)
    }

    pub fn kinks(&self) -> &[f64] {
        &self.kinks
    }
}

fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `ϱⁿ(σ)`: `−1`, `sin(nσπ/2)`, `1` on the three branches.
fn rho(n: f64, t: f64) -> f64 {
    if t <= -1.0 / n {
        -1.0
    } else if t >= 1.0 / n {
        1.0
    } else {
        (0.5 * n * t * PI).sin()
    }
}

/// `∫₀^t ϱⁿ`.
fn rho_primitive(n: f64, t: f64) -> f64 {
    let at = t.abs();
    if at <= 1.0 / n {
        2.0 / (n * PI) * (1.0 - (0.5 * n * at * PI).cos())
    } else {
        at - far_offset(n)
    }
}

fn rho_deriv(n: f64, t: f64) -> f64 {
    if t.abs() < 1.0 / n {
        0.5 * n * PI * (0.5 * n * t * PI).cos()
    } else {
        0.0
    }
}

/// `c_n = (1/n)(1 − 2/π)`.
pub fn far_offset(n: f64) -> f64 {
    (1.0 - 2.0 / PI) / n
}

/// The `C²` approximation `η_k^n(a) = ∫_k^a ϱⁿ(σ − k)dσ` of `|a − k|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothedKruzhkov {
    pub k: f64,
    pub n: f64,
}

pub fn smoothed_kruzhkov(k: f64, n: f64) -> Result<SmoothedKruzhkov> {
    if !(n >= 1.0 && n.is_finite()) || !k.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "smoothing index must be >= 1 and level finite, got n = {n}, k = {k}"
        )));
    }
    Ok(SmoothedKruzhkov { k, n })
}

impl SmoothedKruzhkov {
    pub fn eta(&self, a: f64) -> f64 {
        rho_primitive(self.n, a - self.k)
    }

    pub fn eta_prime(&self, a: f64) -> f64 {
        rho(self.n, a - self.k)
    }

    pub fn eta_second(&self, a: f64) -> f64 {
        rho_deriv(self.n, a - self.k)
    }

    fn zone(&self) -> Vec<f64> {
        vec![self.k - 1.0 / self.n, self.k + 1.0 / self.n]
    }

    pub fn entropy(&self) -> Entropy {
        let s = *self;
        Entropy::custom(
            format!("kruzhkov(k={};n={})", s.k, s.n),
            move |a| s.eta(a),
            move |a| s.eta_prime(a),
            move |a| s.eta_second(a),
            self.zone(),
        )
    }

    /// Smoothed `(a − k)⁺`, from the integrand `(1 + ϱⁿ)/2`, anchored to
    /// vanish below the smoothing zone.
    pub fn positive_part(&self) -> Entropy {
        let s = *self;
        let c = far_offset(s.n);
        Entropy::custom(
            format!("kruzhkov_plus(k={};n={})", s.k, s.n),
            move |a| {
                let t = a - s.k;
                if t <= -1.0 / s.n {
                    0.0
                } else if t >= 1.0 / s.n {
                    t
                } else {
                    0.5 * (t + s.eta(a) + c)
                }
            },
            move |a| 0.5 * (1.0 + s.eta_prime(a)),
            move |a| 0.5 * s.eta_second(a),
            self.zone(),
        )
    }

    /// Smoothed `(a − k)⁻ = max(k − a, 0)`, from the integrand `(ϱⁿ − 1)/2`.
    pub fn negative_part(&self) -> Entropy {
        let s = *self;
        let c = far_offset(s.n);
        Entropy::custom(
            format!("kruzhkov_minus(k={};n={})", s.k, s.n),
            move |a| {
                let t = a - s.k;
                if t <= -1.0 / s.n {
                    -t
                } else if t >= 1.0 / s.n {
                    0.0
                } else {
                    0.5 * (s.eta(a) - t + c)
                }
            },
            move |a| 0.5 * (s.eta_prime(a) - 1.0),
            move |a| 0.5 * s.eta_second(a),
            self.zone(),
        )
    }
}

/// Smoothed `(· − k)⁺` and `(· − k)⁻` at smoothing index `n`.
pub fn one_sided_entropies(k: f64, n: f64) -> Result<(Entropy, Entropy)> {
    let s = smoothed_kruzhkov(k, n)?;
    Ok((s.positive_part(), s.negative_part()))
}

/// `(η, φ)` with `φ_d′ = η′F_d′` and `φ(0) = 0`.
#[derive(Debug, Clone)]
pub struct EntropyFluxPair {
    entropy: Entropy,
    flux: Flux,
    cuts: Vec<f64>,
}

/// Relative tolerance of the entropy-flux quadrature.
pub const PHI_REL_TOL: f64 = 1e-10;

pub fn make_entropy_flux(entropy: Entropy, flux: &Flux) -> EntropyFluxPair {
    let mut cuts: Vec<f64> = entropy.kinks().to_vec();
    cuts.extend(flux.kinks());
    cuts.push(0.0);
    cuts.retain(|c| c.is_finite());
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    EntropyFluxPair {
        entropy,
        flux: flux.clone(),
        cuts,
    }
}

impl EntropyFluxPair {
    pub fn entropy(&self) -> &Entropy {
        &self.entropy
    }

    pub fn flux(&self) -> &Flux {
        &self.flux
    }

    pub fn eta(&self, a: f64) -> f64 {
        self.entropy.eta(a)
    }

    pub fn eta_prime(&self, a: f64) -> f64 {
        self.entropy.eta_prime(a)
    }

    /// `φ(a) = ∫₀^a η′F′`, split at the kinks of the integrand.
    pub fn phi(&self, a: f64) -> Result<[f64; 2]> {
        if self.flux.is_zero() || a == 0.0 {
            return Ok([0.0; 2]);
        }
        let v = self.profile_integral(a, |g| g)?;
        Ok([self.flux.coeffs[0] * v, self.flux.coeffs[1] * v])
    }

    /// Engquist–Osher split of the entropy flux: `(Ψ_d⁺(a), Ψ_d⁻(a))` with
    /// `Ψ_d^± = ∫₀^a η′(F_d′)^±`, so that `Ψ_d⁺ + Ψ_d⁻ = φ_d`.
    pub fn phi_split(&self, a: f64) -> Result<[(f64, f64); 2]> {
        if self.flux.is_zero() || a == 0.0 {
            return Ok([(0.0, 0.0); 2]);
        }
        let gp = self.profile_integral(a, |g| g.max(0.0))?;
        let gm = self.profile_integral(a, |g| g.min(0.0))?;
        let mut out = [(0.0, 0.0); 2];
        for (d, o) in out.iter_mut().enumerate() {
            let c = self.flux.coeffs[d];
            *o = if c >= 0.0 {
                (c * gp, c * gm)
            } else {
                (c * gm, c * gp)
            };
        }
        Ok(out)
    }

    /// `phi_split` at many points at once, integrating cumulatively over the
    /// sorted values so that each gap between neighbours is integrated once.
    pub fn phi_split_many(&self, values: &[f64]) -> Result<Vec<[(f64, f64); 2]>> {
        if self.flux.is_zero() {
            return Ok(vec![[(0.0, 0.0); 2]; values.len()]);
        }
        let gp = self.cumulative_integrals(values, |g| g.max(0.0))?;
        let gm = self.cumulative_integrals(values, |g| g.min(0.0))?;
        Ok(gp
            .iter()
            .zip(&gm)
            .map(|(&p, &m)| {
                let mut out = [(0.0, 0.0); 2];
                for (d, o) in out.iter_mut().enumerate() {
                    let c = self.flux.coeffs[d];
                    *o = if c >= 0.0 {
                        (c * p, c * m)
                    } else {
                        (c * m, c * p)
                    };
                }
                out
            })
            .collect())
    }

    /// `phi` at many points at once.
    pub fn phi_many(&self, values: &[f64]) -> Result<Vec<[f64; 2]>> {
        if self.flux.is_zero() {
            return Ok(vec![[0.0; 2]; values.len()]);
        }
        let v = self.cumulative_integrals(values, |g| g)?;
        let c = self.flux.coeffs;
        Ok(v.iter().map(|&x| [c[0] * x, c[1] * x]).collect())
    }

    /// `∫₀^a η′·part(g′)` for every `a` in `values`, accumulated outward from
    /// zero along the sorted values on each side.
    fn cumulative_integrals(&self, values: &[f64], part: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
        let mut sorted: Vec<f64> = values.to_vec();
        if let Some(bad) = sorted.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite argument {bad}")));
        }
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        let g =
            |x: f64| self.entropy.eta_prime(x) * part(self.flux.profile.deriv(x)) * self.inside(x);
        let mut table: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
        let piece = |a: f64, b: f64| -> Result<f64> {
            let mut pts = vec![a];
            pts.extend(self.cuts.iter().copied().filter(|&c| c > a && c < b));
            pts.push(b);
            let mut total = 0.0;
            for w in pts.windows(2) {
                let abs_tol = 1e-15 * (w[1] - w[0]).abs().max(1e-300);
                total += integrate(&g, w[0], w[1], abs_tol, PHI_REL_TOL)?;
            }
            Ok(total)
        };
        let mut acc = 0.0;
        let mut prev = 0.0;
        for &a in sorted.iter().filter(|&&a| a > 0.0) {
            acc += piece(prev, a)?;
            prev = a;
            table.push((a, acc));
        }
        let (mut acc, mut prev) = (0.0, 0.0);
        for &a in sorted.iter().rev().filter(|&&a| a < 0.0) {
            acc -= piece(a, prev)?;
            prev = a;
            table.push((a, acc));
        }
        table.push((0.0, 0.0));
        table.sort_by(|x, y| x.0.total_cmp(&y.0));
        Ok(values
            .iter()
            .map(|v| {
                let i = table.partition_point(|e| e.0 < *v);
                table[i].1
            })
            .collect())
    }

    /// `∫₀^a η′(σ)·part(g′(σ))dσ` over the truncation range.
    fn profile_integral(&self, a: f64, part: impl Fn(f64) -> f64) -> Result<f64> {
        let (lo, hi) = if a > 0.0 { (0.0, a) } else { (a, 0.0) };
        let mut pts = vec![lo];
        pts.extend(self.cuts.iter().copied().filter(|&c| c > lo && c < hi));
        pts.push(hi);
        let g =
            |x: f64| self.entropy.eta_prime(x) * part(self.flux.profile.deriv(x)) * self.inside(x);
        let mut total = 0.0;
        for w in pts.windows(2) {
            let abs_tol = 1e-15 * (w[1] - w[0]).abs().max(1e-300);
            total += integrate(&g, w[0], w[1], abs_tol, PHI_REL_TOL)?;
        }
        Ok(if a > 0.0 { total } else { -total })
    }

    fn inside(&self, x: f64) -> f64 {
        match self.flux.truncation {
            Some(k) if x.abs() >= k => 0.0,
            _ => 1.0,
        }
    }

    /// Central-difference check of `φ_d′ = η′F_d′` on a probe of `[−m, m]`.
    /// Returns the largest scaled mismatch.
    pub fn gradient_check(&self, m: f64, points: usize) -> Result<f64> {
        let step = self
            .cuts
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(1e-3_f64, f64::min)
            * 1e-2;
        let mut worst: f64 = 0.0;
        for i in 0..points {
            let a = -m + 2.0 * m * (i as f64 + 0.5) / points as f64;
            if self.cuts.iter().any(|&c| (a - c).abs() <= 2.0 * step) {
                continue;
            }
            let (p1, p0) = (self.phi(a + step)?, self.phi(a - step)?);
            let e = self.entropy.eta_prime(a);
            let fp = self.flux.deriv(a);
            for d in 0..self.flux.dim {
                let fd = (p1[d] - p0[d]) / (2.0 * step);
                let exact = e * fp[d];
                worst = worst.max((fd - exact).abs() / exact.abs().max(1.0));
            }
        }
        Ok(worst)
    }
}
