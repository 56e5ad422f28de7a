//! The fractional Laplacian `(−Δ)^{s/2}` on the periodic grid.
//!
//! Two realisations are provided. The spectral one multiplies Fourier
//! coefficients by `|ξ|^s`. The split one is a singular-integral quadrature
//! with a symmetric lattice kernel `K`:
//!
//! `A u(x) = −C Σ_{|z|≥r} K(z)[u(x+z)−u(x)] − C Σ_{0<|z|<r} K(z)[u(x+z)−u(x)−∇u(x)·z]`
//!
//! `K(z)` already carries the cell volume `h^N`. With the default
//! [`TailModel::PeriodicImages`] it is the kernel `|z|^{−N−s}` summed over all
//! periodic images, plus near-field weights on `|z| ≤ r` that cancel the
//! lattice-sum error through a fixed even order in `ξh`. The split form is a
//! circulant, so it is applied either point by point or through its discrete
//! symbol; both routes are exposed.

pub mod lattice;

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::grid::{norm_linf, pairwise_sum, pairwise_sum_by, Field, PeriodicGrid};
use crate::spectral;

/// Fractional order `s ∈ (0, 2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracOrder(f64);

impl FracOrder {
    pub fn new(s: f64) -> Result<Self> {
        if !(s > 0.0 && s < 2.0) {
            return Err(Error::InvalidArgument(format!(
                "s must lie in (0, 2), got {s}"
            )));
        }
        Ok(FracOrder(s))
    }

    /// Order admissible in the equation: `s ∈ (0, 1]`.
    pub fn for_equation(s: f64) -> Result<Self> {
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "equation order s must lie in (0, 1], got {s}"
            )));
        }
        Ok(FracOrder(s))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstantMode {
    /// `C(N,s) = sΓ((N+s)/2) / (2π^{N/2+s}Γ(1−s/2))`.
    Paper,
    /// Rescaled so the split form reproduces `(2π/L)^s` on the lowest mode.
    Calibrated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TailModel {
    /// All periodic images, with near-field corrections.
    PeriodicImages,
    /// Lattice sum over `|z| ≤ R_t` plus `C·Θ·(u − ū)`, no corrections.
    MeanField,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    pub r: f64,
    pub tail_radius: f64,
    pub constant_mode: ConstantMode,
    pub tail: TailModel,
}

impl SplitConfig {
    /// `r = min(8h, L/4)`, `R_t = L/4`, calibrated constant, periodic images.
    pub fn default_for(grid: &PeriodicGrid) -> Self {
        let tail_radius = grid.extent() / 4.0;
        SplitConfig {
            r: (8.0 * grid.spacing()).min(tail_radius),
            tail_radius,
            constant_mode: ConstantMode::Calibrated,
            tail: TailModel::PeriodicImages,
        }
    }

    pub fn validate(&self, grid: &PeriodicGrid) -> Result<()> {
        let h = grid.spacing();
        if !(self.r.is_finite() && self.r >= 2.0 * h * (1.0 - 1e-12)) {
            return Err(Error::InvalidArgument(format!(
                "split radius r = {} is below 2h = {}",
                self.r,
                2.0 * h
            )));
        }
        if !(self.tail_radius >= self.r) {
            return Err(Error::InvalidArgument(format!(
                "tail radius {} is below split radius {}",
                self.tail_radius, self.r
            )));
        }
        if self.tail_radius > 0.5 * grid.extent() * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "tail radius {} exceeds L/2 = {}",
                self.tail_radius,
                0.5 * grid.extent()
            )));
        }
        Ok(())
    }

    /// Near-field correction order supported by this split radius.
    pub fn correction_order(&self, grid: &PeriodicGrid) -> usize {
        if self.tail == TailModel::MeanField {
            return 0;
        }
        let fit = (self.r / grid.spacing() + 1e-9).floor() as usize;
        let cap = if grid.dim() == 1 {
            lattice::MAX_ORDER_1D
        } else {
            lattice::MAX_ORDER_2D
        };
        fit.min(cap).min(grid.points_per_dim() / 2 - 1)
    }
}

/// The constant `C(N,s)` as printed: `sΓ((N+s)/2) / (2π^{N/2+s}Γ(1−s/2))`.
pub fn cns(dim: usize, s: f64) -> f64 {
    let n = dim as f64;
    s * gamma(0.5 * (n + s)) / (2.0 * PI.powf(0.5 * n + s) * gamma(1.0 - 0.5 * s))
}

/// Constant making `C∫(u(x)−u(x+z))|z|^{−N−s}dz` have symbol `|ξ|^s`:
/// `s2^{s−1}Γ((N+s)/2) / (π^{N/2}Γ(1−s/2))`.
pub fn fourier_constant(dim: usize, s: f64) -> f64 {
    let n = dim as f64;
    s * 2f64.powf(s - 1.0) * gamma(0.5 * (n + s)) / (PI.powf(0.5 * n) * gamma(1.0 - 0.5 * s))
}

/// Surface area of the unit sphere in `ℝ^N`, `N ∈ {1, 2}`.
pub fn surface_area(dim: usize) -> f64 {
    if dim == 1 {
        2.0
    } else {
        2.0 * PI
    }
}

/// `∫_{|z|>R} |z|^{−N−s} dz = surface(N)·R^{−s}/s`.
pub fn tail_integral(dim: usize, s: f64, radius: f64) -> f64 {
    surface_area(dim) * radius.powf(-s) / s
}

/// `(−Δ)^{s/2}u` by Fourier multiplication with `|2πk/L|^s`.
pub fn frac_laplacian_spectral(u: &Field, s: f64) -> Result<Field> {
    let s = FracOrder::new(s)?.value();
    let g = *u.grid();
    spectral::apply_real_multiplier(u, |i| {
        let xi = spectral::wavevector(&g, i);
        (xi[0] * xi[0] + xi[1] * xi[1]).powf(0.5 * s)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct BaseKey {
    dim: usize,
    n: usize,
    s_bits: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct KernelKey {
    dim: usize,
    n: usize,
    extent_bits: u64,
    s_bits: u64,
    order: usize,
    tail: TailModel,
    tail_radius_bits: u64,
}

/// Folded weights in lattice units, cached per `(N, n, s)`.
fn base_fold(dim: usize, n: usize, s: f64) -> Arc<Vec<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<BaseKey, Arc<Vec<f64>>>>> = OnceLock::new();
    let key = BaseKey {
        dim,
        n,
        s_bits: s.to_bits(),
    };
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().expect("fold cache poisoned").get(&key) {
        return v.clone();
    }
    let v = Arc::new(if dim == 1 {
        lattice::fold_1d(n, s)
    } else {
        lattice::fold_2d(n, s)
    });
    cache
        .lock()
        .expect("fold cache poisoned")
        .insert(key, v.clone());
    v
}

/// Physical kernel weights `K(z)` (cell volume included) and derived data.
#[derive(Debug)]
struct Kernel {
    weights: Vec<f64>,
    /// `Σ_z K(z)(1 − cos(ξ·z))`, i.e. the symbol with unit constant.
    unit_symbol: Vec<f64>,
    order: usize,
    min_weight: f64,
    negative_mass: f64,
}

fn periodic_weights(grid: &PeriodicGrid, s: f64, order: usize) -> Result<Vec<f64>> {
    let n = grid.points_per_dim();
    let mut w = base_fold(grid.dim(), n, s).as_ref().clone();
    if grid.dim() == 1 {
        for (j, d) in lattice::corrections_1d(s, order)?.into_iter().enumerate() {
            let j = j + 1;
            w[j] += d;
            w[n - j] += d;
        }
    } else {
        for ((p, q), d) in lattice::corrections_2d(s, order)? {
            for (x, y) in lattice::orbit_points(p, q) {
                w[grid.flat_index([x, y])] += d;
            }
        }
    }
    let scale = grid.spacing().powf(-s);
    w.iter_mut().for_each(|v| *v *= scale);
    w[0] = 0.0;
    Ok(w)
}

fn mean_field_weights(grid: &PeriodicGrid, s: f64, tail_radius: f64) -> Vec<f64> {
    let h = grid.spacing();
    let nd = grid.dim() as f64;
    let theta = tail_integral(grid.dim(), s, tail_radius) / grid.len() as f64;
    (0..grid.len())
        .map(|idx| {
            if idx == 0 {
                return 0.0;
            }
            let j = grid.signed_offset(idx);
            let rho = ((j[0] * j[0] + j[1] * j[1]) as f64).sqrt();
            let near = if rho * h <= tail_radius * (1.0 + 1e-12) {
                h.powf(-s) * rho.powf(-nd - s)
            } else {
                0.0
            };
            near + theta
        })
        .collect()
}

fn unit_symbol(grid: &PeriodicGrid, weights: &[f64]) -> Vec<f64> {
    let total = pairwise_sum(weights);
    let kf = Field::from_raw(*grid, weights.to_vec());
    spectral::forward(&kf)
        .into_iter()
        .map(|c| total - c.re)
        .collect()
}

fn kernel(grid: &PeriodicGrid, s: f64, cfg: &SplitConfig) -> Result<Arc<Kernel>> {
    static CACHE: OnceLock<Mutex<HashMap<KernelKey, Arc<Kernel>>>> = OnceLock::new();
    let order = cfg.correction_order(grid);
    let key = KernelKey {
        dim: grid.dim(),
        n: grid.points_per_dim(),
        extent_bits: grid.extent().to_bits(),
        s_bits: s.to_bits(),
        order,
        tail: cfg.tail,
        tail_radius_bits: match cfg.tail {
            TailModel::MeanField => cfg.tail_radius.to_bits(),
            TailModel::PeriodicImages => 0,
        },
    };
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(k) = cache.lock().expect("kernel cache poisoned").get(&key) {
        return Ok(k.clone());
    }
    let weights = match cfg.tail {
        TailModel::PeriodicImages => periodic_weights(grid, s, order)?,
        TailModel::MeanField => mean_field_weights(grid, s, cfg.tail_radius),
    };
    let min_weight = weights
        .iter()
        .skip(1)
        .copied()
        .fold(f64::INFINITY, f64::min);
    let negative_mass = pairwise_sum_by(weights.len(), |i| (-weights[i]).max(0.0));
    let k = Arc::new(Kernel {
        unit_symbol: unit_symbol(grid, &weights),
        weights,
        order,
        min_weight,
        negative_mass,
    });
    cache
        .lock()
        .expect("kernel cache poisoned")
        .insert(key, k.clone());
    Ok(k)
}

/// Lowest plane wave `cos(2πx₁/L)`.
fn lowest_mode(grid: &PeriodicGrid) -> Field {
    let k = 2.0 * PI / grid.extent();
    Field::from_raw(
        *grid,
        (0..grid.len())
            .map(|i| (k * grid.coords(i)[0]).cos())
            .collect(),
    )
}

/// Per-offset data of the split sum: the offset as a multi-index, its
/// weight, and its displacement inside the ball (zero outside, where the
/// gradient term is absent). Entry `j` belongs to flat offset `j`.
struct OffsetTable {
    entries: Vec<([usize; 2], f64, [f64; 2])>,
}

impl OffsetTable {
    fn new(grid: &PeriodicGrid, weights: &[f64], r: f64) -> Self {
        let h = grid.spacing();
        let n = grid.points_per_dim();
        let entries = weights
            .iter()
            .enumerate()
            .map(|(j, &w)| {
                let w = if j == 0 { 0.0 } else { w };
                let off = grid.signed_offset(j);
                let z = [off[0] as f64 * h, off[1] as f64 * h];
                let inside = (z[0] * z[0] + z[1] * z[1]).sqrt() < r;
                let jm = if grid.dim() == 1 {
                    [j, 0]
                } else {
                    [j / n, j % n]
                };
                (jm, w, if inside { z } else { [0.0; 2] })
            })
            .collect();
        OffsetTable { entries }
    }
}

/// `−Σ_{z≠0} K(z)[u(x+z) − u(x) − 1_{|z|<r} ∇u(x)·z]` at one point.
fn split_point(
    grid: &PeriodicGrid,
    table: &OffsetTable,
    u: &[f64],
    grad: &[Vec<f64>],
    idx: usize,
) -> f64 {
    let n = grid.points_per_dim();
    let m = grid.multi_index(idx);
    let u0 = u[idx];
    let g = [
        grad[0][idx],
        if grid.dim() == 2 { grad[1][idx] } else { 0.0 },
    ];
    let e = &table.entries;
    let acc = pairwise_sum_by(e.len(), |j| {
        let (jm, w, z) = e[j];
        if w == 0.0 {
            return 0.0;
        }
        let target = if grid.dim() == 1 {
            wrap(m[0] + jm[0], n)
        } else {
            wrap(m[0] + jm[0], n) * n + wrap(m[1] + jm[1], n)
        };
        w * (u[target] - u0 - g[0] * z[0] - g[1] * z[1])
    });
    -acc
}

/// `a mod n` for `a < 2n`.
#[inline]
fn wrap(a: usize, n: usize) -> usize {
    if a >= n {
        a - n
    } else {
        a
    }
}

/// Flat index of `x + j` where `x` has multi-index `m` and `j` is a flat offset.
#[inline]
fn neighbour(grid: &PeriodicGrid, n: usize, m: [usize; 2], j: usize) -> usize {
    if grid.dim() == 1 {
        wrap(m[0] + j, n)
    } else {
        let (j0, j1) = (j / n, j % n);
        wrap(m[0] + j0, n) * n + wrap(m[1] + j1, n)
    }
}

/// Split-form quadrature of the fractional Laplacian on one grid.
#[derive(Debug, Clone)]
pub struct SplitOperator {
    grid: PeriodicGrid,
    s: FracOrder,
    cfg: SplitConfig,
    kernel: Arc<Kernel>,
    paper_constant: f64,
    calibrated_constant: f64,
}

impl SplitOperator {
    pub fn new(grid: &PeriodicGrid, s: FracOrder, cfg: SplitConfig) -> Result<Self> {
        cfg.validate(grid)?;
        let sv = s.value();
        let kernel = kernel(grid, sv, &cfg)?;
        let calibrated_constant = calibrate(grid, sv, &cfg, &kernel)?;
        Ok(SplitOperator {
            grid: *grid,
            s,
            cfg,
            kernel,
            paper_constant: cns(grid.dim(), sv),
            calibrated_constant,
        })
    }

    /// Operator with the default configuration for `grid`.
    pub fn with_defaults(grid: &PeriodicGrid, s: f64) -> Result<Self> {
        SplitOperator::new(grid, FracOrder::new(s)?, SplitConfig::default_for(grid))
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn order(&self) -> FracOrder {
        self.s
    }

    pub fn config(&self) -> &SplitConfig {
        &self.cfg
    }

    /// The constant in use, per `constant_mode`.
    pub fn constant(&self) -> f64 {
        match self.cfg.constant_mode {
            ConstantMode::Paper => self.paper_constant,
            ConstantMode::Calibrated => self.calibrated_constant,
        }
    }

    pub fn paper_constant(&self) -> f64 {
        self.paper_constant
    }

    pub fn calibrated_constant(&self) -> f64 {
        self.calibrated_constant
    }

    pub fn correction_order(&self) -> usize {
        self.kernel.order
    }

    /// Kernel weights `K(z)` by flat offset (cell volume included).
    pub fn weights(&self) -> &[f64] {
        &self.kernel.weights
    }

    /// Smallest off-origin kernel weight. Nonnegative weights make the
    /// operator monotone.
    pub fn min_weight(&self) -> f64 {
        self.kernel.min_weight
    }

    /// Discrete symbol `C Σ_z K(z)(1 − cos ξ·z)` at DFT bin `idx`.
    pub fn symbol(&self, idx: usize) -> f64 {
        self.constant() * self.kernel.unit_symbol[idx]
    }

    pub fn symbols(&self) -> Vec<f64> {
        let c = self.constant();
        self.kernel.unit_symbol.iter().map(|v| c * v).collect()
    }

    /// Applies the operator through its discrete symbol.
    pub fn apply(&self, u: &Field) -> Result<Field> {
        self.check_grid(u)?;
        let c = self.constant();
        let sym = &self.kernel.unit_symbol;
        spectral::apply_real_multiplier(u, |i| c * sym[i])
    }

    /// Applies the split form point by point, with the spectral gradient in
    /// the singular part.
    pub fn apply_split(&self, u: &Field) -> Result<Field> {
        self.check_grid(u)?;
        let grad: Vec<Vec<f64>> = spectral::gradient(u)?
            .into_iter()
            .map(Field::into_values)
            .collect();
        let c = self.constant();
        let g = self.grid;
        let table = OffsetTable::new(&g, &self.kernel.weights, self.cfg.r);
        let values: Vec<f64> = (0..g.len())
            .into_par_iter()
            .map(|idx| c * split_point(&g, &table, u.values(), &grad, idx))
            .collect();
        Field::new(g, values)
    }

    /// Singular-part sum `Σ_{0<|z|<r} K(z)[u(x+z)−u(x)−g·z]` at one point,
    /// for a supplied gradient `g` (unit constant).
    pub fn singular_part_at(&self, u: &Field, grad_at_x: [f64; 2], idx: usize) -> f64 {
        let g = &self.grid;
        let h = g.spacing();
        let n = g.points_per_dim();
        let m = g.multi_index(idx);
        let v = u.values();
        pairwise_sum_by(self.kernel.weights.len(), |j| {
            let w = self.kernel.weights[j];
            if j == 0 || w == 0.0 {
                return 0.0;
            }
            let off = g.signed_offset(j);
            let z = [off[0] as f64 * h, off[1] as f64 * h];
            if (z[0] * z[0] + z[1] * z[1]).sqrt() >= self.cfg.r {
                return 0.0;
            }
            let t = neighbour(g, n, m, j);
            w * (v[t] - v[idx] - grad_at_x[0] * z[0] - grad_at_x[1] * z[1])
        })
    }

    /// `(C/2) Σ_x Σ_z K(z)(u(x)−u(x+z))(v(x)−v(x+z)) h^N`.
    pub fn bilinear_form(&self, u: &Field, v: &Field) -> Result<f64> {
        self.check_grid(u)?;
        self.check_grid(v)?;
        let sums = self.pair_sums(|a0, a1, b0, b1| (a0 - a1) * (b0 - b1), u, v);
        Ok(0.5 * self.constant() * self.grid.cell_volume() * pairwise_sum(&sums))
    }

    /// The seminorm below evaluated through the kernel symbol:
    /// `Σ_x Σ_z K(z)|u(x)−u(x+z)|² = (2/|grid|)Σ_ξ σ(ξ)|û(ξ)|²`.
    pub fn seminorm_spectral(&self, u: &Field) -> Result<f64> {
        self.check_grid(u)?;
        let spec = spectral::forward(u);
        let sym = &self.kernel.unit_symbol;
        let q = pairwise_sum_by(spec.len(), |i| sym[i] * spec[i].norm_sqr());
        let scale = 2.0 * self.grid.cell_volume() / self.grid.len() as f64;
        Ok((scale * q).max(0.0).sqrt())
    }

    /// `√(Σ_x Σ_z K(z)|u(x)−u(x+z)|² h^N)`, no constant.
    pub fn gagliardo_seminorm(&self, u: &Field) -> Result<f64> {
        self.check_grid(u)?;
        let sums = self.pair_sums(|a0, a1, _, _| (a0 - a1) * (a0 - a1), u, u);
        Ok((self.grid.cell_volume() * pairwise_sum(&sums)).sqrt())
    }

    fn pair_sums(
        &self,
        term: impl Fn(f64, f64, f64, f64) -> f64 + Sync,
        u: &Field,
        v: &Field,
    ) -> Vec<f64> {
        let g = self.grid;
        let n = g.points_per_dim();
        let w = &self.kernel.weights;
        let (uv, vv) = (u.values(), v.values());
        (0..g.len())
            .into_par_iter()
            .map(|x| {
                let m = g.multi_index(x);
                pairwise_sum_by(w.len(), |j| {
                    if j == 0 || w[j] == 0.0 {
                        return 0.0;
                    }
                    let t = neighbour(&g, n, m, j);
                    w[j] * term(uv[x], uv[t], vv[x], vv[t])
                })
            })
            .collect()
    }

    /// `Σ_{|z|≥r} K(z)[u(x+z)−u(x)]` at every `x` (unit constant).
    pub fn outer_differences(&self, u: &Field, r: f64) -> Result<Vec<f64>> {
        self.check_grid(u)?;
        let g = self.grid;
        let h = g.spacing();
        let far: Vec<f64> = self
            .kernel
            .weights
            .iter()
            .enumerate()
            .map(|(j, &w)| {
                if j == 0 || offset_norm(&g, j) * h < r {
                    0.0
                } else {
                    w
                }
            })
            .collect();
        let total = pairwise_sum(&far);
        let sym = spectral::forward(&Field::from_raw(g, far));
        let conv = spectral::apply_real_multiplier(u, |i| sym[i].re)?;
        Ok(conv
            .values()
            .iter()
            .zip(u.values())
            .map(|(c, a)| c - total * a)
            .collect())
    }

    /// `Σ_{0<|z|<r} K(z)[φ(x+z)−φ(x)−∇φ(x)·z]` at every `x` (unit constant).
    pub fn inner_remainders(&self, phi: &Field, grad: &[Field], r: f64) -> Result<Vec<f64>> {
        self.check_grid(phi)?;
        let g = self.grid;
        let h = g.spacing();
        let n = g.points_per_dim();
        // Offsets inside the ball, in ascending flat order.
        let near: Vec<(usize, [f64; 2], f64)> = self
            .kernel
            .weights
            .iter()
            .enumerate()
            .filter(|&(j, &w)| j != 0 && w != 0.0 && offset_norm(&g, j) * h < r)
            .map(|(j, &w)| {
                let o = g.signed_offset(j);
                (j, [o[0] as f64 * h, o[1] as f64 * h], w)
            })
            .collect();
        let v = phi.values();
        let gy = if g.dim() == 2 {
            Some(grad[1].values())
        } else {
            None
        };
        Ok((0..g.len())
            .into_par_iter()
            .map(|x| {
                let m = g.multi_index(x);
                let gx = [grad[0].values()[x], gy.map_or(0.0, |d| d[x])];
                pairwise_sum_by(near.len(), |k| {
                    let (j, z, w) = near[k];
                    w * (v[neighbour(&g, n, m, j)] - v[x] - gx[0] * z[0] - gx[1] * z[1])
                })
            })
            .collect())
    }

    /// Lower bound slack for `A u ≥ 0` at a grid maximum: the negative kernel
    /// mass times the oscillation of `u`, plus rounding.
    pub fn max_principle_tolerance(&self, u: &Field) -> f64 {
        let c = self.constant().abs();
        let osc = u.max() - u.min();
        let total: f64 = self.kernel.weights.iter().map(|w| w.abs()).sum();
        c * self.kernel.negative_mass * osc + 1e-13 * c * total * norm_linf(u)
    }

    /// Largest relative error of the symbol against `|ξ|^s` over modes with
    /// `|k_d| ≤ max_mode`.
    pub fn planewave_error(&self, max_mode: i64) -> f64 {
        let g = &self.grid;
        let s = self.s.value();
        (1..g.len())
            .filter(|&i| {
                let k = g.wavevector(i);
                k[0].abs() <= max_mode && k[1].abs() <= max_mode
            })
            .map(|i| {
                let xi = spectral::wavevector(g, i);
                let exact = (xi[0] * xi[0] + xi[1] * xi[1]).powf(0.5 * s);
                (self.symbol(i) - exact).abs() / exact
            })
            .fold(0.0, f64::max)
    }

    /// Error bound of the mean-field tail, `C‖u−ū‖∞Θ`; zero with periodic images.
    pub fn tail_error_bound(&self, u: &Field) -> f64 {
        match self.cfg.tail {
            TailModel::PeriodicImages => 0.0,
            TailModel::MeanField => {
                let mean = u.mean();
                let dev = u
                    .values()
                    .iter()
                    .fold(0.0_f64, |m, v| m.max((v - mean).abs()));
                self.constant()
                    * dev
                    * tail_integral(self.grid.dim(), self.s.value(), self.cfg.tail_radius)
            }
        }
    }

    /// `⟨(−Δ)^{s/2}_spectral p, p⟩ / ⟨A₁ p, p⟩` for a probe `p`, where `A₁`
    /// is the split form with unit constant.
    pub fn calibration_ratio(&self, probe: &Field) -> Result<f64> {
        self.check_grid(probe)?;
        let unit = SplitOperator {
            cfg: SplitConfig {
                constant_mode: ConstantMode::Calibrated,
                ..self.cfg
            },
            calibrated_constant: 1.0,
            ..self.clone()
        };
        let a1 = unit.apply_split(probe)?;
        let den = a1.dot(probe)?;
        let scale = probe.dot(probe)?;
        if !(den.abs() > 1e-14 * scale * self.kernel.weights.iter().sum::<f64>()) {
            return Err(Error::Calibration(
                "probe has no response (constant field carries no information)".into(),
            ));
        }
        let num = frac_laplacian_spectral(probe, self.s.value())?.dot(probe)?;
        Ok(num / den)
    }

    fn check_grid(&self, u: &Field) -> Result<()> {
        if self.grid == *u.grid() {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "operator grid {:?} vs field grid {:?}",
                self.grid,
                u.grid()
            )))
        }
    }
}

fn offset_norm(grid: &PeriodicGrid, j: usize) -> f64 {
    let o = grid.signed_offset(j);
    ((o[0] * o[0] + o[1] * o[1]) as f64).sqrt()
}

/// Calibrated constant: `(2π/L)^s` divided by the unit split-form response
/// to `cos(2πx₁/L)` at the origin. The kernel's own symbol must agree with
/// that response, and lowering the correction order by one may not move the
/// constant by more than `1e−3`.
fn calibrate(grid: &PeriodicGrid, s: f64, cfg: &SplitConfig, k: &Kernel) -> Result<f64> {
    let probe = lowest_mode(grid);
    let zero_grad = vec![vec![0.0; grid.len()]; grid.dim().max(1)];
    let grad = if grid.dim() == 1 {
        zero_grad[..1].to_vec()
    } else {
        zero_grad
    };
    // u(0) = 1 and ∇u(0) = 0 for the cosine probe.
    let response = split_point(
        grid,
        &OffsetTable::new(grid, &k.weights, cfg.r),
        probe.values(),
        &grad,
        0,
    );
    let e1 = if grid.dim() == 1 {
        1
    } else {
        grid.points_per_dim()
    };
    let from_symbol = k.unit_symbol[e1];
    if !(response > 0.0) || (response - from_symbol).abs() > 1e-9 * response {
        return Err(Error::Calibration(format!(
            "split response {response:e} to the lowest mode disagrees with kernel symbol {from_symbol:e}"
        )));
    }
    let c = (2.0 * PI / grid.extent()).powf(s) / response;
    if k.order >= 2 {
        let coarser = match cfg.tail {
            TailModel::PeriodicImages => periodic_weights(grid, s, k.order - 1)?,
            TailModel::MeanField => unreachable!("mean-field kernels carry no corrections"),
        };
        let r2 = split_point(
            grid,
            &OffsetTable::new(grid, &coarser, cfg.r),
            probe.values(),
            &grad,
            0,
        );
        let c2 = (2.0 * PI / grid.extent()).powf(s) / r2;
        if (c - c2).abs() > 1e-3 * c {
            return Err(Error::Calibration(format!(
                "constant moved from {c2:e} to {c:e} under split-radius refinement"
            )));
        }
    }
    if !c.is_finite() || c <= 0.0 {
        return Err(Error::Calibration(format!("non-positive constant {c}")));
    }
    Ok(c)
}

/// Calibrated constant for the default configuration on `grid`.
pub fn calibrated_constant(dim: usize, s: f64, grid: &PeriodicGrid) -> Result<f64> {
    if dim != grid.dim() {
        return Err(Error::InvalidArgument(format!(
            "dim {dim} does not match grid dim {}",
            grid.dim()
        )));
    }
    Ok(SplitOperator::with_defaults(grid, s)?.calibrated_constant())
}

/// Split-form `(−Δ)^{s/2}u` evaluated point by point.
pub fn frac_laplacian_split(u: &Field, s: f64, cfg: SplitConfig) -> Result<Field> {
    SplitOperator::new(u.grid(), FracOrder::new(s)?, cfg)?.apply_split(u)
}

pub fn bilinear_form(u: &Field, v: &Field, s: f64, cfg: SplitConfig) -> Result<f64> {
    u.ensure_same_grid(v)?;
    SplitOperator::new(u.grid(), FracOrder::new(s)?, cfg)?.bilinear_form(u, v)
}

pub fn gagliardo_seminorm(u: &Field, s: f64, cfg: SplitConfig) -> Result<f64> {
    SplitOperator::new(u.grid(), FracOrder::new(s)?, cfg)?.gagliardo_seminorm(u)
}
