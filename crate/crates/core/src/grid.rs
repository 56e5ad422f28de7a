//! Periodic grids, grid functions, discrete norms and smooth test functions.
//!
//! Values are stored lexicographically in row-major order: in 2D the flat
//! index of point `(i0, i1)` is `i0 * n + i1`, with `i0` running along the
//! first coordinate. Grid point `i` sits at `x = i * h`.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};

/// Leaf size of the pairwise summation tree.
const PAIRWISE_BLOCK: usize = 16;

/// Sum with a fixed binary cascade. The tree shape depends only on the
/// slice length, so equal inputs always reduce in the same order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_BLOCK {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Pairwise sum of `f(i)` for `i in 0..len`, same tree as [`pairwise_sum`],
/// without materialising the terms.
pub fn pairwise_sum_by(len: usize, f: impl Fn(usize) -> f64) -> f64 {
    fn rec(lo: usize, hi: usize, f: &impl Fn(usize) -> f64) -> f64 {
        if hi - lo <= PAIRWISE_BLOCK {
            let mut acc = 0.0;
            for i in lo..hi {
                acc += f(i);
            }
            return acc;
        }
        let mid = lo + (hi - lo) / 2;
        rec(lo, mid, f) + rec(mid, hi, f)
    }
    rec(0, len, &f)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicGrid {
    dim: usize,
    extent: f64,
    n: usize,
    spacing: f64,
}

impl PeriodicGrid {
    pub fn new(dim: usize, extent: f64, points_per_dim: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dim must be 1 or 2, got {dim}")));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "extent must be positive, got {extent}"
            )));
        }
        if !points_per_dim.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points_per_dim must be power of two, got {points_per_dim}"
            )));
        }
        if points_per_dim < 8 {
            return Err(Error::InvalidGrid(format!(
                "points_per_dim must be at least 8, got {points_per_dim}"
            )));
        }
        Ok(PeriodicGrid {
            dim,
            extent,
            n: points_per_dim,
            // n is a power of two, so this division is exact and h * n == L.
            spacing: extent / points_per_dim as f64,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn points_per_dim(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Total number of grid points, `n^N`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight `h^N`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// Multi-index of a flat index. The unused second slot is 0 in 1D.
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx / self.n, idx % self.n]
        }
    }

    /// Flat index of a (wrapped) signed multi-index.
    pub fn flat_index(&self, i: [i64; 2]) -> usize {
        let n = self.n as i64;
        let a = i[0].rem_euclid(n) as usize;
        if self.dim == 1 {
            a
        } else {
            a * self.n + i[1].rem_euclid(n) as usize
        }
    }

    /// Flat index of the periodic neighbour of `idx` one step along axis
    /// `d`, forward or backward.
    #[inline]
    pub fn step(&self, idx: usize, d: usize, forward: bool) -> usize {
        let n = self.n;
        if self.dim == 1 || d == 1 {
            let b = idx % n;
            let nb = if forward {
                if b + 1 == n {
                    0
                } else {
                    b + 1
                }
            } else if b == 0 {
                n - 1
            } else {
                b - 1
            };
            idx - b + nb
        } else {
            let len = n * n;
            if forward {
                (idx + n) % len
            } else {
                (idx + len - n) % len
            }
        }
    }

    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let m = self.multi_index(idx);
        [m[0] as f64 * self.spacing, m[1] as f64 * self.spacing]
    }

    /// Signed integer wavenumber of DFT bin `i`, in `[-n/2, n/2)`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Signed lattice offset of bin `idx` relative to the origin, per axis.
    pub fn signed_offset(&self, idx: usize) -> [i64; 2] {
        let m = self.multi_index(idx);
        let w = |k: usize| {
            let k = k as i64;
            let n = self.n as i64;
            if k <= n / 2 {
                k
            } else {
                k - n
            }
        };
        if self.dim == 1 {
            [w(m[0]), 0]
        } else {
            [w(m[0]), w(m[1])]
        }
    }

    /// Integer wavevector of DFT bin `idx`.
    pub fn wavevector(&self, idx: usize) -> [i64; 2] {
        let m = self.multi_index(idx);
        if self.dim == 1 {
            [self.wavenumber(m[0]), 0]
        } else {
            [self.wavenumber(m[0]), self.wavenumber(m[1])]
        }
    }

    /// Physical frequency `|2πk/L|` of DFT bin `idx`.
    pub fn frequency_norm(&self, idx: usize) -> f64 {
        let k = self.wavevector(idx);
        let scale = 2.0 * std::f64::consts::PI / self.extent;
        scale * ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt()
    }

    pub(crate) fn same_as(&self, other: &PeriodicGrid) -> bool {
        self.dim == other.dim && self.n == other.n && self.extent == other.extent
    }
}

/// Real-valued grid function.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values, grid expects {}",
                values.len(),
                grid.len()
            )));
        }
        check_finite(&values, "")?;
        Ok(Field { grid, values })
    }

    /// Builds a field without the finiteness check. Callers guarantee it.
    pub(crate) fn from_raw(grid: PeriodicGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid, values }
    }

    pub fn zeros(grid: PeriodicGrid) -> Self {
        Field::constant(grid, 0.0)
    }

    pub fn constant(grid: PeriodicGrid, c: f64) -> Self {
        assert!(c.is_finite(), "constant field value must be finite");
        Field {
            grid,
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f` at every grid point. `f` receives `[x1, x2]` (`x2 = 0` in 1D).
    pub fn from_fn(grid: PeriodicGrid, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(grid.coords(i))).collect();
        Field::new(grid, values)
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Field> {
        Field::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.ensure_same_grid(other)?;
        Field::new(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, alpha: f64) -> Result<Field> {
        self.map(|v| alpha * v)
    }

    pub fn ensure_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid, other.grid
            )))
        }
    }

    /// `Σ u_i v_i h^N`.
    pub fn dot(&self, other: &Field) -> Result<f64> {
        self.ensure_same_grid(other)?;
        let w = self.grid.cell_volume();
        Ok(w * pairwise_sum_by(self.len(), |i| self.values[i] * other.values[i]))
    }

    /// Grid integral `Σ u_i h^N`.
    pub fn integral(&self) -> f64 {
        self.grid.cell_volume() * pairwise_sum(&self.values)
    }

    pub fn mean(&self) -> f64 {
        pairwise_sum(&self.values) / self.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Periodic translate `x -> u(x + z h)` by an integer lattice vector.
    pub fn shift(&self, z: [i64; 2]) -> Field {
        let g = self.grid;
        let values = (0..g.len())
            .map(|idx| {
                let m = g.multi_index(idx);
                let src = g.flat_index([m[0] as i64 + z[0], m[1] as i64 + z[1]]);
                self.values[src]
            })
            .collect();
        Field::from_raw(g, values)
    }

    /// Writes the field as CSV: a `# dim,n,L` line carrying the grid, then one
    /// value per line with 17 significant digits.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.len() * 26 + 32);
        let g = &self.grid;
        let _ = writeln!(out, "# {},{},{}", g.dim, g.n, fmt_real(g.extent));
        for v in &self.values {
            let _ = writeln!(out, "{}", fmt_real(*v));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Field> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Field::parse_csv(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                path: path.to_path_buf(),
                message,
            },
            Error::NonFinite { index, context } => Error::NonFinite {
                index,
                context: format!("{context} in {}", path.display()),
            },
            other => other,
        })
    }

    pub fn parse_csv(text: &str) -> Result<Field> {
        let parse_err = |message: String| Error::Parse {
            path: Default::default(),
            message,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| parse_err("empty file".into()))?;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| parse_err("missing `# dim,n,L` header".into()))?;
        let parts: Vec<&str> = header.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(parse_err(format!("bad header `{header}`")));
        }
        let dim: usize = parts[0]
            .parse()
            .map_err(|_| parse_err(format!("bad dim `{}`", parts[0])))?;
        let n: usize = parts[1]
            .parse()
            .map_err(|_| parse_err(format!("bad n `{}`", parts[1])))?;
        let extent: f64 = parts[2]
            .parse()
            .map_err(|_| parse_err(format!("bad L `{}`", parts[2])))?;
        let grid = PeriodicGrid::new(dim, extent, n)?;
        let mut values = Vec::with_capacity(grid.len());
        for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let v: f64 = line
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("bad value `{line}` at index {i}")))?;
            values.push(v);
        }
        if values.len() != grid.len() {
            return Err(parse_err(format!(
                "expected {} values, found {}",
                grid.len(),
                values.len()
            )));
        }
        Field::new(grid, values)
    }
}

pub(crate) fn check_finite(values: &[f64], context: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            index,
            context: context.to_string(),
        }),
        None => Ok(()),
    }
}

/// 17 significant digits, shortest stable textual form.
/// Random trigonometric polynomial with modes `|k_d| ≤ kmax`, zero mean,
/// amplitudes uniform in `[−1, 1]` and uniform phases, drawn from `rng`.
pub fn band_limited(grid: &PeriodicGrid, kmax: i64, rng: &mut impl Rng) -> Result<Field> {
    if kmax < 1 || 2 * kmax >= grid.points_per_dim() as i64 {
        return Err(Error::InvalidArgument(format!(
            "band limit {kmax} must lie in [1, n/2)"
        )));
    }
    let k1max = if grid.dim() == 2 { kmax } else { 0 };
    let mut modes = Vec::new();
    for k0 in 0..=kmax {
        for k1 in -k1max..=k1max {
            // One representative per ±k pair.
            if k0 == 0 && k1 <= 0 {
                continue;
            }
            modes.push((
                k0 as f64,
                k1 as f64,
                rng.gen_range(-1.0..=1.0),
                rng.gen_range(0.0..TAU),
            ));
        }
    }
    let w = TAU / grid.extent();
    Field::from_fn(*grid, |x| {
        modes
            .iter()
            .map(|&(k0, k1, a, ph)| a * (w * (k0 * x[0] + k1 * x[1]) + ph).cos())
            .sum()
    })
}

pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn norm_l1(u: &Field) -> f64 {
    u.grid.cell_volume() * pairwise_sum_by(u.len(), |i| u.values[i].abs())
}

pub fn norm_l2(u: &Field) -> f64 {
    (u.grid.cell_volume() * pairwise_sum_by(u.len(), |i| u.values[i] * u.values[i])).sqrt()
}

pub fn norm_linf(u: &Field) -> f64 {
    u.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `‖u⁺‖₁` (`positive = true`) or `‖u⁻‖₁`.
pub fn norm_l1_part(u: &Field, positive: bool) -> f64 {
    let sign = if positive { 1.0 } else { -1.0 };
    u.grid.cell_volume() * pairwise_sum_by(u.len(), |i| (sign * u.values[i]).max(0.0))
}

/// Center, radius and height of a nonnegative smooth bump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunctionSpec {
    pub center: [f64; 2],
    pub radius: f64,
    pub amplitude: f64,
}

impl TestFunctionSpec {
    pub fn new(center: [f64; 2], radius: f64, amplitude: f64) -> Self {
        TestFunctionSpec {
            center,
            radius,
            amplitude,
        }
    }

    /// Pointwise profile `A exp(-1/(1 - |x-c|²/r²))`, no periodic wrap.
    pub fn eval(&self, x: [f64; 2], dim: usize) -> f64 {
        let mut d2 = (x[0] - self.center[0]).powi(2);
        if dim == 2 {
            d2 += (x[1] - self.center[1]).powi(2);
        }
        let q = d2 / (self.radius * self.radius);
        if q >= 1.0 {
            0.0
        } else {
            self.amplitude * (-1.0 / (1.0 - q)).exp()
        }
    }
}

/// Samples a bump. The support must stay at least `2h` away from the box
/// boundary so no periodic image overlaps it.
pub fn bump(grid: &PeriodicGrid, spec: &TestFunctionSpec) -> Result<Field> {
    if !(spec.radius > 0.0 && spec.amplitude > 0.0) {
        return Err(Error::InvalidArgument(
            "bump radius and amplitude must be positive".into(),
        ));
    }
    let margin = 2.0 * grid.spacing();
    let l = grid.extent();
    for d in 0..grid.dim() {
        let c = spec.center[d];
        if c - spec.radius < margin || c + spec.radius > l - margin {
            return Err(Error::InvalidArgument(format!(
                "bump support [{:.4}, {:.4}] along axis {d} touches the box boundary (margin {margin:.4})",
                c - spec.radius,
                c + spec.radius
            )));
        }
    }
    let dim = grid.dim();
    Field::from_fn(*grid, |x| spec.eval(x, dim))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_matches_wrapped_indexing() {
        for g in [
            PeriodicGrid::new(1, 1.0, 8).unwrap(),
            PeriodicGrid::new(2, 1.0, 8).unwrap(),
        ] {
            for idx in 0..g.len() {
                let m = g.multi_index(idx);
                let (a, b) = (m[0] as i64, m[1] as i64);
                for d in 0..g.dim() {
                    let e = if d == 0 { [1, 0] } else { [0, 1] };
                    assert_eq!(g.step(idx, d, true), g.flat_index([a + e[0], b + e[1]]));
                    assert_eq!(g.step(idx, d, false), g.flat_index([a - e[0], b - e[1]]));
                }
            }
        }
    }
    use std::f64::consts::PI;

    #[test]
    fn grid_construction() {
        let g = PeriodicGrid::new(1, 2.0 * PI, 64).unwrap();
        assert_eq!(g.spacing(), 2.0 * PI / 64.0);
        assert_eq!(g.spacing() * 64.0, g.extent());
        let g2 = PeriodicGrid::new(2, 10.0, 128).unwrap();
        assert_eq!(g2.len(), 128 * 128);
        let err = PeriodicGrid::new(1, 1.0, 7).unwrap_err();
        assert!(err
            .to_string()
            .contains("points_per_dim must be power of two"));
        assert!(PeriodicGrid::new(3, 1.0, 8).is_err());
        assert!(PeriodicGrid::new(1, 1.0, 4).is_err());
        assert!(PeriodicGrid::new(1, -1.0, 8).is_err());
    }

    #[test]
    fn norms_of_constant_and_zero() {
        let g = PeriodicGrid::new(2, 3.0, 16).unwrap();
        let c = Field::constant(g, -1.5);
        assert_eq!(norm_linf(&c), 1.5);
        assert!((norm_l1(&c) - 1.5 * 9.0).abs() < 1e-12);
        let z = Field::zeros(g);
        assert_eq!(norm_l1(&z), 0.0);
        assert_eq!(norm_l2(&z), 0.0);
        assert_eq!(norm_linf(&z), 0.0);
    }

    #[test]
    fn l2_norm_of_sine_is_exact() {
        let g = PeriodicGrid::new(1, 2.0 * PI, 64).unwrap();
        let u = Field::from_fn(g, |x| (2.0 * PI * x[0] / g.extent()).sin()).unwrap();
        assert!((norm_l2(&u) - PI.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn bump_profile() {
        let g = PeriodicGrid::new(1, 4.0, 64).unwrap();
        let spec = TestFunctionSpec::new([2.0, 0.0], 1.0, 3.0);
        let phi = bump(&g, &spec).unwrap();
        let mid = g.flat_index([32, 0]);
        assert!((phi.values()[mid] - 3.0 * (-1.0f64).exp()).abs() < 1e-15);
        for i in 0..g.len() {
            let x = g.coords(i)[0];
            let v = phi.values()[i];
            assert!((0.0..=3.0).contains(&v));
            if (x - 2.0).abs() >= 1.0 {
                assert_eq!(v, 0.0);
            }
        }
        assert!(phi.integral() > 0.0);
    }

    #[test]
    fn bump_touching_boundary_is_rejected() {
        let g = PeriodicGrid::new(2, 1.0, 32).unwrap();
        let spec = TestFunctionSpec::new([0.5, 0.2], 0.19, 1.0);
        assert!(bump(&g, &spec).is_err());
        let ok = TestFunctionSpec::new([0.5, 0.5], 0.3, 1.0);
        assert!(bump(&g, &ok).is_ok());
    }

    #[test]
    fn shift_identities() {
        let g = PeriodicGrid::new(2, 1.0, 8).unwrap();
        let u = Field::from_fn(g, |x| (x[0] * 3.0).sin() + x[1] * x[1]).unwrap();
        assert_eq!(u.shift([0, 0]), u);
        assert_eq!(u.shift([8, -16]), u);
        let c = Field::constant(g, 2.5);
        assert_eq!(c.shift([3, 5]), c);
        let s = u.shift([1, 2]);
        assert_eq!(
            s.values()[g.flat_index([0, 0])],
            u.values()[g.flat_index([1, 2])]
        );
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let g = PeriodicGrid::new(1, 2.0, 8).unwrap();
        let u = Field::from_fn(g, |x| 1.0 / 3.0 + x[0]).unwrap();
        let text = u.to_csv_string();
        assert!(text.starts_with("# 1,8,"));
        let back = Field::parse_csv(&text).unwrap();
        assert_eq!(back, u);
        let bad = text.replacen("3.3333333333333331e-1", "NaN", 1);
        match Field::parse_csv(&bad) {
            Err(Error::NonFinite { index, .. }) => assert_eq!(index, 0),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn pairwise_variants_share_one_tree() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin() / 3.0).collect();
        assert_eq!(
            pairwise_sum(&v).to_bits(),
            pairwise_sum_by(v.len(), |i| v[i]).to_bits()
        );
    }

    #[test]
    fn pairwise_sum_matches_naive_on_small_input() {
        let v: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 4950.0);
    }
}
