//! Zeta functions and regularised lattice moments used to build the
//! discrete kernel of the fractional Laplacian.

use std::f64::consts::PI;

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quadrature::integrate;

/// B_2, B_4, ..., B_24.
const BERNOULLI_EVEN: [f64; 12] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
    854513.0 / 138.0,
    -236364091.0 / 2730.0,
];

/// Euler–Maclaurin pieces of `ζ(σ, a)`: everything except the pole term
/// `x^{1−σ}/(σ−1)`, and the cut point `x`.
fn hurwitz_parts(sigma: f64, a: f64) -> (f64, f64) {
    assert!(a > 0.0, "hurwitz_zeta needs a > 0");
    let big_n = 16usize;
    let mut sum = 0.0;
    for k in 0..big_n {
        sum += (a + k as f64).powf(-sigma);
    }
    let x = a + big_n as f64;
    sum += 0.5 * x.powf(-sigma);
    // Rising factorial (σ)_{2j−1} and x^{−σ−2j+1}.
    let mut rising = sigma;
    let mut xp = x.powf(-sigma - 1.0);
    let mut fact = 2.0;
    for (j, b2j) in BERNOULLI_EVEN.iter().enumerate() {
        let term = b2j / fact * rising * xp;
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
        let m = (2 * j) as f64;
        rising *= (sigma + m + 1.0) * (sigma + m + 2.0);
        xp /= x * x;
        fact *= (m + 3.0) * (m + 4.0);
    }
    (sum, x)
}

/// Hurwitz zeta `ζ(σ, a) = Σ_{k≥0} (a+k)^{−σ}` by Euler–Maclaurin, valid
/// (as the analytic continuation) for `σ > −8`, `σ ≠ 1`, `a > 0`.
pub fn hurwitz_zeta(sigma: f64, a: f64) -> f64 {
    assert!(sigma != 1.0, "hurwitz_zeta has a pole at sigma = 1");
    let (sum, x) = hurwitz_parts(sigma, a);
    sum + x.powf(1.0 - sigma) / (sigma - 1.0)
}

/// `ζ(σ, a₁) − ζ(σ, a₂)`, finite at `σ = 1`.
pub fn hurwitz_zeta_diff(sigma: f64, a1: f64, a2: f64) -> f64 {
    let (s1, x1) = hurwitz_parts(sigma, a1);
    let (s2, x2) = hurwitz_parts(sigma, a2);
    let l = (x1 / x2).ln();
    let e = 1.0 - sigma;
    // (x₁^e − x₂^e)/(σ−1) = −x₂^e (e^{eL} − 1)/e
    let pole = if e == 0.0 {
        -l
    } else {
        -x2.powf(e) * (e * l).exp_m1() / e
    };
    s1 - s2 + pole
}

/// Riemann zeta for real `σ ≠ 1`, with the reflection formula for `σ < 0`.
pub fn riemann_zeta(sigma: f64) -> f64 {
    if sigma < 0.0 {
        let reflected = riemann_zeta(1.0 - sigma);
        (2.0f64).powf(sigma)
            * PI.powf(sigma - 1.0)
            * (0.5 * PI * sigma).sin()
            * gamma(1.0 - sigma)
            * reflected
    } else {
        hurwitz_zeta(sigma, 1.0)
    }
}

/// Dirichlet beta `Σ_{k≥0} (−1)^k (2k+1)^{−x}` for `x > 0`, and by reflection
/// for `x ≤ 0`.
pub fn dirichlet_beta(x: f64) -> f64 {
    if x <= 0.0 {
        // β(1−z) = (2/π)^z sin(πz/2) Γ(z) β(z) with z = 1 − x.
        let z = 1.0 - x;
        (2.0 / PI).powf(z) * (0.5 * PI * z).sin() * gamma(z) * dirichlet_beta(z)
    } else {
        4f64.powf(-x) * hurwitz_zeta_diff(x, 0.25, 0.75)
    }
}

/// Physicists' Hermite polynomial `H_n(x)`.
fn hermite(n: usize, x: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, 2.0 * x);
    if n == 0 {
        return h0;
    }
    for k in 1..n {
        let h2 = 2.0 * x * h1 - 2.0 * k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Leading small-`t` term of `S_q(t) = Σ_{j∈ℤ} j^{2q} e^{−πtj²}`.
fn theta_lead(q: usize, t: f64) -> f64 {
    t.powf(-0.5 - q as f64) * (4.0 * PI).powi(-(q as i32)) * factorial(2 * q) / factorial(q)
}

/// `S_q(t)` minus its leading term, from the Poisson dual series (`t ≤ 1`).
fn theta_rest(q: usize, t: f64) -> f64 {
    let alpha = PI / t;
    let pref = t.powf(-0.5) * (-alpha / (4.0 * PI * PI)).powi(q as i32);
    let mut acc = 0.0;
    let sa = alpha.sqrt();
    for k in 1..=40 {
        let e = alpha * (k * k) as f64;
        if e > 745.0 {
            break;
        }
        acc += 2.0 * hermite(2 * q, sa * k as f64) * (-e).exp();
    }
    pref * acc
}

/// `S_q(t)` from the direct series (`t ≥ 1`), without the `j = 0` term.
fn theta_direct(q: usize, t: f64) -> f64 {
    let mut acc = 0.0;
    for j in 1..=40i32 {
        let e = PI * t * (j * j) as f64;
        if e > 745.0 {
            break;
        }
        acc += 2.0 * (j as f64).powi(2 * q as i32) * (-e).exp();
    }
    acc
}

fn origin_term(q: usize) -> f64 {
    if q == 0 {
        1.0
    } else {
        0.0
    }
}

/// Zeta-regularised lattice moment
/// `Σ_{j∈ℤ²∖0} j₁^{2a} j₂^{2b} |j|^{−2w}`, continued analytically in `w`
/// through the Mellin representation of the theta function. `w` must avoid
/// the pole at `w = 1 + a + b`.
pub fn lattice_moment_2d(a: usize, b: usize, w: f64) -> Result<f64> {
    let alpha = (1 + a + b) as f64;
    if (w - alpha).abs() < 1e-9 || w <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "lattice moment ({a},{b}) undefined at w = {w}"
        )));
    }
    let origin = if a == 0 && b == 0 { 1.0 } else { 0.0 };
    let lead_c = (4.0 * PI).powi(-((a + b) as i32)) * factorial(2 * a) / factorial(a)
        * factorial(2 * b)
        / factorial(b);
    let near = |t: f64| {
        let (la, lb) = (theta_lead(a, t), theta_lead(b, t));
        let (ra, rb) = (theta_rest(a, t), theta_rest(b, t));
        t.powf(w - 1.0) * (la * rb + ra * lb + ra * rb)
    };
    // The j = 0 term of S_0 is 1; the product minus `origin` is expanded so
    // that nothing cancels.
    let far = |t: f64| {
        let (ta, tb) = (theta_direct(a, t), theta_direct(b, t));
        let (ha, hb) = (origin_term(a), origin_term(b));
        t.powf(w - 1.0) * (ta * hb + ha * tb + ta * tb + (ha * hb - origin))
    };
    let i0 = integrate(near, 0.0, 1.0, 1e-15, 1e-14)?;
    let i1 = integrate(far, 1.0, 40.0, 1e-15, 1e-14)?;
    let singular = lead_c / (w - alpha) - origin / w;
    Ok(PI.powf(w) / gamma(w) * (i0 + i1 + singular))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn riemann_zeta_known_values() {
        assert!((riemann_zeta(2.0) - PI * PI / 6.0).abs() < 1e-14);
        assert!((riemann_zeta(4.0) - PI.powi(4) / 90.0).abs() < 1e-14);
        assert!((riemann_zeta(0.0) + 0.5).abs() < 1e-13);
        assert!((riemann_zeta(-1.0) + 1.0 / 12.0).abs() < 1e-14);
        assert!((riemann_zeta(-3.0) - 1.0 / 120.0).abs() < 1e-14);
        assert!(riemann_zeta(-2.0).abs() < 1e-15);
        assert!((riemann_zeta(0.5) + 1.460_354_508_809_586_8).abs() < 1e-13);
    }

    #[test]
    fn hurwitz_half_relation() {
        // ζ(σ, 1/2) = (2^σ − 1) ζ(σ)
        for &s in &[1.5, 2.0, 3.3] {
            let lhs = hurwitz_zeta(s, 0.5);
            let rhs = (2f64.powf(s) - 1.0) * riemann_zeta(s);
            assert!((lhs - rhs).abs() < 1e-13 * rhs.abs());
        }
    }

    #[test]
    fn beta_known_values() {
        assert!((dirichlet_beta(1.0) - PI / 4.0).abs() < 1e-14);
        assert!((dirichlet_beta(2.0) - 0.915_965_594_177_219).abs() < 1e-14);
        assert!((dirichlet_beta(0.0) - 0.5).abs() < 1e-13);
        assert!((dirichlet_beta(-1.0)).abs() < 1e-13);
    }

    #[test]
    fn epstein_moment_matches_zeta_beta() {
        // Σ_{j≠0} |j|^{−2w} = 4 ζ(w) β(w)
        for &w in &[1.25, 1.5, 2.5] {
            let m = lattice_moment_2d(0, 0, w).unwrap();
            let exact = 4.0 * riemann_zeta(w) * dirichlet_beta(w);
            assert!(
                (m - exact).abs() < 1e-11 * exact.abs(),
                "w={w}: {m} vs {exact}"
            );
        }
    }

    #[test]
    fn continued_moments_obey_rotation_identities() {
        for &s in &[0.5, 1.0] {
            let w = 1.0 + s / 2.0;
            // j₁² + j₂² = |j|²
            let m10 = lattice_moment_2d(1, 0, w).unwrap();
            let e1 = 2.0 * riemann_zeta(w - 1.0) * dirichlet_beta(w - 1.0);
            assert!(
                (m10 - e1).abs() < 1e-10 * e1.abs().max(1.0),
                "{m10} vs {e1}"
            );
            // (j₁² + j₂²)² = |j|⁴
            let m20 = lattice_moment_2d(2, 0, w).unwrap();
            let m11 = lattice_moment_2d(1, 1, w).unwrap();
            let e2 = 4.0 * riemann_zeta(w - 2.0) * dirichlet_beta(w - 2.0);
            assert!((2.0 * m20 + 2.0 * m11 - e2).abs() < 1e-10 * e2.abs().max(1.0));
            // (j₁² + j₂²)³ = |j|⁶
            let m30 = lattice_moment_2d(3, 0, w).unwrap();
            let m21 = lattice_moment_2d(2, 1, w).unwrap();
            let e3 = 4.0 * riemann_zeta(w - 3.0) * dirichlet_beta(w - 3.0);
            assert!((2.0 * m30 + 6.0 * m21 - e3).abs() < 1e-10 * e3.abs().max(1.0));
        }
    }
}
