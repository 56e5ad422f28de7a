//! Adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One G7K15 panel: (Kronrod estimate, error estimate). The error estimate
/// never drops below the rounding floor of the panel's absolute integral.
fn panel(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let hw = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    let mut absk = WGK[7] * fc.abs();
    for j in 0..7 {
        let dx = hw * XGK[j];
        let (fl, fr) = (f(c - dx), f(c + dx));
        kron += WGK[j] * (fl + fr);
        absk += WGK[j] * (fl.abs() + fr.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (fl + fr);
        }
    }
    let err = ((kron - gauss) * hw).abs();
    let floor = 50.0 * f64::EPSILON * (absk * hw).abs();
    (kron * hw, err.max(floor))
}

/// Integrates `f` over `[a, b]` to `max(abs_tol, rel_tol·|I|)` by global
/// bisection of the worst panel.
pub fn integrate(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Quadrature(format!("non-finite interval [{a}, {b}]")));
    }
    const MAX_PANELS: usize = 2000;
    let (v, e) = panel(&f, a, b);
    let mut panels = vec![(a, b, v, e)];
    loop {
        let total: f64 = panels.iter().map(|p| p.2).sum();
        let err: f64 = panels.iter().map(|p| p.3).sum();
        if !total.is_finite() {
            return Err(Error::Quadrature(format!(
                "non-finite integrand on [{a}, {b}]"
            )));
        }
        let floor: f64 = panels.iter().map(|p| 50.0 * f64::EPSILON * p.2.abs()).sum();
        if err <= abs_tol.max(rel_tol * total.abs()).max(2.0 * floor) {
            return Ok(total);
        }
        if panels.len() >= MAX_PANELS {
            return Err(Error::Quadrature(format!(
                "error estimate {err:.3e} above tolerance after {MAX_PANELS} panels on [{a}, {b}]"
            )));
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, p)| {
                if p.3 > acc.1 {
                    (i, p.3)
                } else {
                    acc
                }
            });
        let (pa, pb, _, _) = panels.swap_remove(worst);
        let mid = 0.5 * (pa + pb);
        if mid <= pa || mid >= pb {
            return Err(Error::Quadrature(format!(
                "panel [{pa}, {pb}] cannot be bisected further"
            )));
        }
        let (v1, e1) = panel(&f, pa, mid);
        let (v2, e2) = panel(&f, mid, pb);
        panels.push((pa, mid, v1, e1));
        panels.push((mid, pb, v2, e2));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let v = integrate(|x| x.powi(7) - 3.0 * x * x, -1.0, 2.0, 1e-14, 1e-14).unwrap();
        let exact = (2f64.powi(8) - 1.0) / 8.0 - (8.0 + 1.0);
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn smooth_transcendental() {
        let v = integrate(f64::exp, 0.0, 1.0, 1e-15, 1e-14).unwrap();
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-14);
        let w = integrate(|x| x.sqrt(), 0.0, 1.0, 1e-13, 1e-12).unwrap();
        assert!((w - 2.0 / 3.0).abs() < 1e-11);
    }

    #[test]
    fn reversed_interval_flips_sign() {
        let a = integrate(|x| x * x, 0.0, 1.0, 1e-14, 1e-14).unwrap();
        let b = integrate(|x| x * x, 1.0, 0.0, 1e-14, 1e-14).unwrap();
        assert!((a + b).abs() < 1e-15);
    }
}
