//! Lattice weights for the kernel `|z|^{−N−s}` on the periodic grid.
//!
//! All weights here are in lattice units: the physical weight of offset
//! `z = jh` is `h^{−s}` times the value returned.

use rayon::prelude::*;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::special::{hurwitz_zeta, lattice_moment_2d, riemann_zeta};

/// Highest near-field correction order per dimension.
pub const MAX_ORDER_1D: usize = 6;
pub const MAX_ORDER_2D: usize = 4;

/// Correction orbits in 2D, by the order that first needs them. Each orbit
/// `(p, q)` stands for all points `(±p, ±q)` and `(±q, ±p)`.
const ORBITS_2D: [(i64, i64); 8] = [
    (1, 0),
    (1, 1),
    (2, 0),
    (2, 1),
    (3, 0),
    (2, 2),
    (3, 1),
    (4, 0),
];

fn orbits_for_order(order: usize) -> &'static [(i64, i64)] {
    match order {
        0 => &ORBITS_2D[..0],
        1 => &ORBITS_2D[..1],
        2 => &ORBITS_2D[..3],
        3 => &ORBITS_2D[..5],
        _ => &ORBITS_2D[..8],
    }
}

/// Monomials `θ₁^{2a} θ₂^{2b}` with `a ≥ b` and `1 ≤ a + b ≤ order`.
fn monomials(order: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for m in 1..=order {
        for a in (0..=m).rev() {
            let b = m - a;
            if a >= b {
                out.push((a, b));
            }
        }
    }
    out
}

/// Distinct points of the orbit of `(p, q)` under the square's symmetry group.
pub fn orbit_points(p: i64, q: i64) -> Vec<(i64, i64)> {
    let mut pts = Vec::with_capacity(8);
    for (x, y) in [(p, q), (q, p)] {
        for sx in [1, -1] {
            for sy in [1, -1] {
                let pt = (sx * x, sy * y);
                if !pts.contains(&pt) {
                    pts.push(pt);
                }
            }
        }
    }
    pts
}

/// Dense solve with partial pivoting. Rows are rescaled to unit max norm
/// first; the systems here are tiny but badly scaled.
pub(crate) fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for i in 0..n {
        let scale = a[i].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return Err(Error::Calibration("singular correction system".into()));
        }
        a[i].iter_mut().for_each(|v| *v /= scale);
        b[i] /= scale;
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty pivot range");
        if a[piv][col].abs() < 1e-300 {
            return Err(Error::Calibration("singular correction system".into()));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = b[i];
        for k in (i + 1)..n {
            acc -= a[i][k] * x[k];
        }
        x[i] = acc / a[i][i];
    }
    Ok(x)
}

/// Periodic image sum `Σ_{m∈ℤ} |j + mn|^{−1−s}` for `j = 0..n` (entry 0 unused).
pub fn fold_1d(n: usize, s: f64) -> Vec<f64> {
    let nf = n as f64;
    let pref = nf.powf(-1.0 - s);
    let mut out = vec![0.0; n];
    for (j, w) in out.iter_mut().enumerate().skip(1) {
        let a = j as f64 / nf;
        *w = pref * (hurwitz_zeta(1.0 + s, a) + hurwitz_zeta(1.0 + s, 1.0 - a));
    }
    out
}

/// Near-field weights `δ_j`, `j = 1..=order`, cancelling the lattice excess
/// through order `θ^{2·order}`: `Σ_j δ_j j^{2m} = −ζ(1+s−2m)`.
pub fn corrections_1d(s: f64, order: usize) -> Result<Vec<f64>> {
    if order == 0 {
        return Ok(Vec::new());
    }
    let a: Vec<Vec<f64>> = (1..=order)
        .map(|m| (1..=order).map(|j| (j as f64).powi(2 * m as i32)).collect())
        .collect();
    let b: Vec<f64> = (1..=order)
        .map(|m| -riemann_zeta(1.0 + s - 2.0 * m as f64))
        .collect();
    solve_dense(a, b)
}

/// Row sum `Σ_{m∈ℤ} ((a+m)² + b²)^{−p}`, `0 ≤ a < 1`, `|b| ≤ 7`.
fn row_sum(a: f64, b: f64, p: f64) -> f64 {
    const DIRECT: i64 = 60;
    let b2 = b * b;
    let mut acc = 0.0;
    for m in -DIRECT..=DIRECT {
        let x = a + m as f64;
        let d = x * x + b2;
        if d > 0.0 {
            acc += d.powf(-p);
        }
    }
    // Binomial expansion in b²/(a+m)² for |m| > DIRECT.
    let lo = DIRECT as f64 + 1.0;
    let mut binom = 1.0;
    let mut bp = 1.0;
    for q in 0..12 {
        let sigma = 2.0 * p + 2.0 * q as f64;
        let term = binom * bp * (hurwitz_zeta(sigma, a + lo) + hurwitz_zeta(sigma, lo - a));
        acc += term;
        if term.abs() < 1e-18 * acc.abs() {
            break;
        }
        binom *= (-p - q as f64) / (q as f64 + 1.0);
        bp *= b2;
    }
    acc
}

/// Periodic image sum `Σ_{m∈ℤ²} |j + mn|^{−2−s}` at `j = (i, k)`, `(i,k) ≠ 0`.
fn fold_2d_point(n: usize, s: f64, i: usize, k: usize) -> f64 {
    const ROWS_LO: i64 = -6;
    const ROWS_HI: i64 = 5;
    let nf = n as f64;
    let p = 1.0 + 0.5 * s;
    let a = i as f64 / nf;
    let c = k as f64 / nf;
    let mut acc = 0.0;
    for m2 in ROWS_LO..=ROWS_HI {
        acc += row_sum(a, c + m2 as f64, p);
    }
    // Far rows: the row sum equals √π Γ(p−½)/Γ(p) |b|^{1−2p} up to e^{−2π|b|}.
    let lead = std::f64::consts::PI.sqrt() * gamma(p - 0.5) / gamma(p);
    acc += lead
        * (hurwitz_zeta(1.0 + s, ROWS_HI as f64 + 1.0 + c)
            + hurwitz_zeta(1.0 + s, -ROWS_LO as f64 + 1.0 - c));
    acc * nf.powf(-2.0 - s)
}

/// Folded 2D weights on the full `n×n` offset table (entry `(0,0)` is 0).
pub fn fold_2d(n: usize, s: f64) -> Vec<f64> {
    let half = n / 2;
    // Unique values on 0 ≤ i ≤ k ≤ n/2.
    let pairs: Vec<(usize, usize)> = (0..=half)
        .flat_map(|i| (i..=half).map(move |k| (i, k)))
        .filter(|&(i, k)| i + k > 0)
        .collect();
    let vals: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, k)| fold_2d_point(n, s, i, k))
        .collect();
    let mut unique = vec![0.0; (half + 1) * (half + 1)];
    for (&(i, k), &v) in pairs.iter().zip(&vals) {
        unique[i * (half + 1) + k] = v;
        unique[k * (half + 1) + i] = v;
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        let ii = i.min(n - i);
        for k in 0..n {
            let kk = k.min(n - k);
            out[i * n + k] = unique[ii * (half + 1) + kk];
        }
    }
    out[0] = 0.0;
    out
}

/// Orbit weights `δ_o` cancelling the lattice excess through order
/// `|θ|^{2·order}`. Returns `(orbit, δ)` pairs.
pub fn corrections_2d(s: f64, order: usize) -> Result<Vec<((i64, i64), f64)>> {
    let orbits = orbits_for_order(order);
    if orbits.is_empty() {
        return Ok(Vec::new());
    }
    let mons = monomials(order.min(MAX_ORDER_2D));
    debug_assert_eq!(mons.len(), orbits.len());
    let w = 1.0 + 0.5 * s;
    let mut a = Vec::with_capacity(mons.len());
    let mut b = Vec::with_capacity(mons.len());
    for &(ea, eb) in &mons {
        a.push(
            orbits
                .iter()
                .map(|&(p, q)| {
                    orbit_points(p, q)
                        .iter()
                        .map(|&(x, y)| {
                            (x as f64).powi(2 * ea as i32) * (y as f64).powi(2 * eb as i32)
                        })
                        .sum()
                })
                .collect(),
        );
        b.push(-lattice_moment_2d(ea, eb, w)?);
    }
    let d = solve_dense(a, b)?;
    Ok(orbits.iter().copied().zip(d).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_1d_matches_brute_force() {
        let (n, s) = (16, 0.7);
        let w = fold_1d(n, s);
        for j in 1..n {
            let mut brute = 0.0;
            for m in -200_000i64..=200_000 {
                let d = (j as i64 + m * n as i64).abs() as f64;
                brute += d.powf(-1.0 - s);
            }
            // Tail beyond |m| = 2·10⁵ ≈ 2 ∫ (mn)^{−1−s} dm.
            let tail = 2.0 * (n as f64).powf(-1.0 - s) * (200_000.5f64).powf(-s) / s;
            assert!((w[j] - brute - tail).abs() < 1e-9 * w[j], "j={j}");
        }
    }

    #[test]
    fn fold_2d_matches_extrapolated_brute_force() {
        let (n, s) = (8, 1.0);
        let w = fold_2d(n, s);
        let window = |i: usize, k: usize, m_max: i64| {
            let mut acc = 0.0;
            for m1 in -m_max..=m_max {
                for m2 in -m_max..=m_max {
                    let x = (i as i64 + m1 * n as i64) as f64;
                    let y = (k as i64 + m2 * n as i64) as f64;
                    acc += (x * x + y * y).powf(-1.0 - s / 2.0);
                }
            }
            acc
        };
        for &(i, k) in &[(1usize, 0usize), (3, 2), (4, 4), (7, 1)] {
            // Square windows leave errors in M^{−s} and M^{−1−s}.
            let (s1, s2, s3) = (window(i, k, 100), window(i, k, 200), window(i, k, 400));
            let r1 = s2 + (s2 - s1) / (2f64.powf(s) - 1.0);
            let r2 = s3 + (s3 - s2) / (2f64.powf(s) - 1.0);
            let extrapolated = r2 + (r2 - r1) / (2f64.powf(s + 1.0) - 1.0);
            let got = w[i * n + k];
            assert!(
                (got - extrapolated).abs() < 1e-7 * got,
                "({i},{k}): {got} vs {extrapolated}"
            );
        }
    }

    #[test]
    fn folds_sum_to_epstein_zeta() {
        use crate::special::dirichlet_beta;
        for &s in &[0.5, 1.0, 1.5] {
            let n = 16;
            let total: f64 = fold_1d(n, s).iter().sum();
            let exact = (1.0 - (n as f64).powf(-1.0 - s)) * 2.0 * riemann_zeta(1.0 + s);
            assert!((total - exact).abs() < 1e-12 * exact);
            let w = 1.0 + s / 2.0;
            let total2: f64 = fold_2d(n, s).iter().sum();
            let exact2 =
                (1.0 - (n as f64).powf(-2.0 - s)) * 4.0 * riemann_zeta(w) * dirichlet_beta(w);
            assert!(
                (total2 - exact2).abs() < 1e-11 * exact2,
                "{total2} vs {exact2}"
            );
        }
    }

    #[test]
    fn one_dimensional_corrections_solve_their_moments() {
        for &s in &[0.3, 0.5, 1.0] {
            let d = corrections_1d(s, 5).unwrap();
            for m in 1..=5 {
                let lhs: f64 = d
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v * ((j + 1) as f64).powi(2 * m))
                    .sum();
                let rhs = -riemann_zeta(1.0 + s - 2.0 * m as f64);
                assert!((lhs - rhs).abs() < 1e-9 * rhs.abs().max(1e-3));
            }
        }
    }

    #[test]
    fn orbits_have_expected_sizes() {
        assert_eq!(orbit_points(1, 0).len(), 4);
        assert_eq!(orbit_points(1, 1).len(), 4);
        assert_eq!(orbit_points(2, 1).len(), 8);
        assert_eq!(monomials(3).len(), 5);
    }
}
