//! FFT plumbing on the periodic grid: forward/inverse transforms, Fourier
//! multipliers, spectral gradient, divergence and Laplacian.

use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{norm_linf, Field, PeriodicGrid};

/// Imaginary residue allowed after an inverse transform, relative to the
/// sup norm of the input times the largest multiplier magnitude.
pub const IMAG_RESIDUE_REL: f64 = 1e-12;

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

fn plans(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    let mut p = planner().lock().expect("fft planner poisoned");
    (p.plan_fft_forward(n), p.plan_fft_inverse(n))
}

fn transpose(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// Unnormalised in-place N-dimensional transform.
fn transform(grid: &PeriodicGrid, data: &mut [Complex64], inverse: bool) {
    let n = grid.points_per_dim();
    let (fwd, inv) = plans(n);
    let plan = if inverse { inv } else { fwd };
    plan.process(data);
    if grid.dim() == 2 {
        transpose(data, n);
        plan.process(data);
        transpose(data, n);
    }
}

/// Unnormalised DFT of a real field.
pub fn forward(u: &Field) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = u.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform(u.grid(), &mut data, false);
    data
}

/// Inverse DFT (normalised) of a Hermitian spectrum. `scale` sets the
/// residue threshold: the imaginary part may not exceed
/// `IMAG_RESIDUE_REL * scale`.
pub fn inverse_real(grid: &PeriodicGrid, mut spec: Vec<Complex64>, scale: f64) -> Result<Field> {
    transform(grid, &mut spec, true);
    let norm = 1.0 / grid.len() as f64;
    let mut residue = 0.0_f64;
    let values: Vec<f64> = spec
        .iter()
        .map(|c| {
            residue = residue.max((c.im * norm).abs());
            c.re * norm
        })
        .collect();
    let threshold = IMAG_RESIDUE_REL * scale.max(f64::MIN_POSITIVE);
    if residue > threshold {
        return Err(Error::ImaginaryResidue { residue, threshold });
    }
    Field::new(*grid, values)
}

/// Physical wavevector `2πk/L` of DFT bin `idx`.
pub fn wavevector(grid: &PeriodicGrid, idx: usize) -> [f64; 2] {
    let k = grid.wavevector(idx);
    let c = 2.0 * std::f64::consts::PI / grid.extent();
    [c * k[0] as f64, c * k[1] as f64]
}

/// Wavevector used for odd (derivative) multipliers: the Nyquist component
/// is zeroed so that real input stays real.
pub fn derivative_wavevector(grid: &PeriodicGrid, idx: usize) -> [f64; 2] {
    let n = grid.points_per_dim() as i64;
    let k = grid.wavevector(idx);
    let c = 2.0 * std::f64::consts::PI / grid.extent();
    let comp = |k: i64| if k == -n / 2 { 0.0 } else { c * k as f64 };
    [comp(k[0]), comp(k[1])]
}

/// Applies a real, even Fourier multiplier `m(idx)`.
pub fn apply_real_multiplier(u: &Field, m: impl Fn(usize) -> f64) -> Result<Field> {
    let mut spec = forward(u);
    let mut mmax = 0.0_f64;
    for (i, c) in spec.iter_mut().enumerate() {
        let mi = m(i);
        mmax = mmax.max(mi.abs());
        *c *= mi;
    }
    inverse_real(u.grid(), spec, norm_linf(u) * mmax.max(1.0))
}

/// Applies `m(idx)` to a precomputed spectrum.
pub fn apply_multiplier_to_spectrum(
    grid: &PeriodicGrid,
    spec: &[Complex64],
    in_scale: f64,
    m: impl Fn(usize) -> Complex64,
) -> Result<Field> {
    let mut mmax = 0.0_f64;
    let out: Vec<Complex64> = spec
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mi = m(i);
            mmax = mmax.max(mi.norm());
            c * mi
        })
        .collect();
    inverse_real(grid, out, in_scale * mmax.max(1.0))
}

/// Spectral partial derivatives, one field per dimension.
pub fn gradient(u: &Field) -> Result<Vec<Field>> {
    let g = *u.grid();
    let spec = forward(u);
    let scale = norm_linf(u);
    (0..g.dim())
        .map(|d| {
            apply_multiplier_to_spectrum(&g, &spec, scale, |i| {
                Complex64::new(0.0, derivative_wavevector(&g, i)[d])
            })
        })
        .collect()
}

/// Spectral divergence of a vector field given by components.
pub fn divergence(components: &[Field]) -> Result<Field> {
    let first = components
        .first()
        .ok_or_else(|| Error::InvalidArgument("divergence of empty vector field".into()))?;
    let g = *first.grid();
    if components.len() != g.dim() {
        return Err(Error::InvalidArgument(format!(
            "divergence needs {} components, got {}",
            g.dim(),
            components.len()
        )));
    }
    let mut acc = vec![Complex64::new(0.0, 0.0); g.len()];
    let mut scale = 0.0_f64;
    for (d, comp) in components.iter().enumerate() {
        first.ensure_same_grid(comp)?;
        scale = scale.max(norm_linf(comp));
        let spec = forward(comp);
        for (i, (a, c)) in acc.iter_mut().zip(spec).enumerate() {
            *a += c * Complex64::new(0.0, derivative_wavevector(&g, i)[d]);
        }
    }
    let kmax = std::f64::consts::PI / g.spacing() * g.dim() as f64;
    inverse_real(&g, acc, scale * kmax.max(1.0))
}

/// Symbol `|ξ|²` of the spectral `−Δ`.
pub fn neg_laplacian_symbol(grid: &PeriodicGrid, idx: usize) -> f64 {
    let xi = wavevector(grid, idx);
    xi[0] * xi[0] + xi[1] * xi[1]
}

/// Symbol of the second-order central difference `−Δ_h`:
/// `Σ_d (2 − 2cos(ξ_d h))/h²`.
pub fn fd_neg_laplacian_symbol(grid: &PeriodicGrid, idx: usize) -> f64 {
    let h = grid.spacing();
    let xi = wavevector(grid, idx);
    (0..grid.dim())
        .map(|d| (2.0 - 2.0 * (xi[d] * h).cos()) / (h * h))
        .sum()
}

/// Spectral `−Δu`.
pub fn neg_laplacian(u: &Field) -> Result<Field> {
    let g = *u.grid();
    apply_real_multiplier(u, |i| neg_laplacian_symbol(&g, i))
}

/// Central-difference `−Δ_h u` evaluated directly in physical space.
pub fn fd_neg_laplacian(u: &Field) -> Field {
    let g = *u.grid();
    let h2 = g.spacing() * g.spacing();
    let v = u.values();
    let values = (0..g.len())
        .map(|idx| {
            let acc: f64 = (0..g.dim())
                .map(|d| 2.0 * v[idx] - v[g.step(idx, d, true)] - v[g.step(idx, d, false)])
                .sum();
            acc / h2
        })
        .collect();
    Field::from_raw(g, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn round_trip_is_identity() {
        let g = PeriodicGrid::new(2, 1.3, 16).unwrap();
        let u = Field::from_fn(g, |x| (x[0] * 7.0).sin() * (1.0 + x[1]).ln()).unwrap();
        let back = inverse_real(&g, forward(&u), 1.0).unwrap();
        for (a, b) in u.values().iter().zip(back.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_of_plane_wave() {
        let l = 2.0;
        let g = PeriodicGrid::new(2, l, 32).unwrap();
        let k = 2.0 * PI / l;
        let u = Field::from_fn(g, |x| (3.0 * k * x[0] + 2.0 * k * x[1]).sin()).unwrap();
        let grad = gradient(&u).unwrap();
        for i in 0..g.len() {
            let x = g.coords(i);
            let c = (3.0 * k * x[0] + 2.0 * k * x[1]).cos();
            assert!((grad[0].values()[i] - 3.0 * k * c).abs() < 1e-11);
            assert!((grad[1].values()[i] - 2.0 * k * c).abs() < 1e-11);
        }
        let div = divergence(&grad).unwrap();
        let lap = neg_laplacian(&u).unwrap();
        for i in 0..g.len() {
            assert!((div.values()[i] + lap.values()[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn fd_laplacian_matches_its_symbol() {
        let g = PeriodicGrid::new(1, 1.0, 64).unwrap();
        let u = Field::from_fn(g, |x| (2.0 * PI * 5.0 * x[0]).cos()).unwrap();
        let direct = fd_neg_laplacian(&u);
        let via_symbol = apply_real_multiplier(&u, |i| fd_neg_laplacian_symbol(&g, i)).unwrap();
        for (a, b) in direct.values().iter().zip(via_symbol.values()) {
            assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn nyquist_mode_has_zero_derivative() {
        let g = PeriodicGrid::new(1, 1.0, 8).unwrap();
        let u = Field::from_fn(g, |x| (PI * 8.0 * x[0]).cos()).unwrap();
        let d = gradient(&u).unwrap();
        assert!(norm_linf(&d[0]) < 1e-12);
    }
}
