//! Gaussian quadrature rules via the Golub-Welsch eigenvalue method.
//!
//! The only weight family needed by the mapping solvers is the one-sided
//! Jacobi weight `(1+x)^beta` on `[-1, 1]` (singular behaviour at the left
//! endpoint), with Gauss-Legendre as the `beta = 0` special case. Nodes and
//! weights come from the symmetric tridiagonal Jacobi matrix; its
//! eigensystem is computed with the implicit-shift QL iteration, tracking
//! only the first eigenvector component, which is all the weight formula
//! needs.

use alloc::vec;
use alloc::vec::Vec;

/// Implicit-shift QL iteration on a symmetric tridiagonal matrix.
///
/// `d` holds the diagonal and is overwritten with eigenvalues; `e` holds the
/// subdiagonal (`e[i]` couples rows `i` and `i+1`) and is destroyed. `r0`
/// starts as the first row of the identity and ends as the first component
/// of each eigenvector, in the same order as `d`.
fn tridiag_eig_first_components(d: &mut [f64], e: &mut [f64], r0: &mut [f64]) {
    let n = d.len();
    if n == 1 {
        return;
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = libm::fabs(d[m]) + libm::fabs(d[m + 1]);
                if libm::fabs(e[m]) <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter < 60, "QL iteration failed to converge");
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = libm::hypot(g, 1.0);
            g = d[m] - d[l] + e[l] / (g + libm::copysign(r, g));
            let (mut s, mut c) = (1.0f64, 1.0f64);
            let mut p = 0.0f64;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = libm::hypot(f, g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                let t = (d[i] - g) * s + 2.0 * c * b;
                p = s * t;
                d[i + 1] = g + p;
                g = c * t - b;
                f = r0[i + 1];
                r0[i + 1] = s * r0[i] + c * f;
                r0[i] = c * r0[i] - s * f;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
}

/// Gauss-Jacobi rule with weight `(1+x)^beta` on `[-1, 1]`, `beta > -1`.
///
/// Returns `(nodes, weights)` sorted by node. The rule integrates
/// `f(x) (1+x)^beta` exactly for polynomials `f` up to degree `2n-1`, so an
/// integrand with an algebraic singularity of exponent `beta` at the left
/// endpoint is handled by evaluating only its smooth factor.
pub fn gauss_jacobi(n: usize, beta: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    assert!(beta > -1.0);
    let b = beta;
    let mu0 = libm::pow(2.0, b + 1.0) / (b + 1.0);
    let mut d = vec![0.0f64; n];
    // One padding slot: the QL sweep parks zeros at e[m] for m up to n - 1.
    let mut e = vec![0.0f64; n];
    for k in 0..n {
        d[k] = if b == 0.0 {
            0.0
        } else if k == 0 {
            b / (b + 2.0)
        } else {
            let t = 2.0 * k as f64 + b;
            b * b / (t * (t + 2.0))
        };
    }
    for k in 1..n {
        let kf = k as f64;
        let t = 2.0 * kf + b;
        e[k - 1] = 2.0 * kf * (kf + b) / (t * libm::sqrt((t + 1.0) * (t - 1.0)));
    }
    let mut r0 = vec![0.0f64; n];
    r0[0] = 1.0;
    tridiag_eig_first_components(&mut d, &mut e, &mut r0);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).unwrap());
    let nodes: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let weights: Vec<f64> = order.iter().map(|&i| mu0 * r0[i] * r0[i]).collect();
    (nodes, weights)
}

/// Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    gauss_jacobi(n, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate(nodes: &[f64], weights: &[f64], f: impl Fn(f64) -> f64) -> f64 {
        nodes.iter().zip(weights).map(|(&x, &w)| w * f(x)).sum()
    }

    #[test]
    fn legendre_five_matches_reference_nodes() {
        let (x, w) = gauss_legendre(5);
        let x_ref = [
            -0.906179845938664,
            -0.538469310105683,
            0.0,
            0.538469310105683,
            0.906179845938664,
        ];
        let w_ref = [
            0.236926885056189,
            0.478628670499366,
            0.568888888888889,
            0.478628670499366,
            0.236926885056189,
        ];
        for i in 0..5 {
            assert!((x[i] - x_ref[i]).abs() < 1e-13);
            assert!((w[i] - w_ref[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(8);
        for k in 0..16 {
            let got = integrate(&x, &w, |t| libm::pow(t, k as f64));
            let expect = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
            assert!((got - expect).abs() < 1e-12, "degree {k}");
        }
    }

    #[test]
    fn jacobi_moments_match_closed_forms() {
        // With weight (1+x)^b: integral of 1 is 2^(b+1)/(b+1) and of (1+x)
        // is 2^(b+2)/(b+2).
        for &b in &[0.5, 1.0, -0.4, 0.999] {
            let (x, w) = gauss_jacobi(12, b);
            let m0: f64 = w.iter().sum();
            let m1 = integrate(&x, &w, |t| 1.0 + t);
            assert!((m0 - libm::pow(2.0, b + 1.0) / (b + 1.0)).abs() < 1e-12);
            assert!((m1 - libm::pow(2.0, b + 2.0) / (b + 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobi_handles_an_endpoint_singularity() {
        // integral over [-1,1] of (1+x)^(-1/2) * cos(x), compared against the
        // substitution u = sqrt(1+x) which removes the singularity entirely.
        let (x, w) = gauss_jacobi(24, -0.5);
        let got = integrate(&x, &w, libm::cos);
        let (xl, wl) = gauss_legendre(64);
        let half = 0.5 * libm::sqrt(2.0);
        let reference: f64 = xl
            .iter()
            .zip(&wl)
            .map(|(xi, wi)| {
                let u = half * (xi + 1.0);
                half * wi * 2.0 * libm::cos(u * u - 1.0)
            })
            .sum();
        assert!((got - reference).abs() < 1e-12, "got {got} ref {reference}");
    }

    #[test]
    fn jacobi_rules_are_sane_across_orders_and_exponents() {
        for &n in &[8usize, 24, 40, 48, 64] {
            for &beta in &[-0.9, -1.0 / 3.0, 0.0, 0.5, 1.0, 2.0] {
                let (x, w) = gauss_jacobi(n, beta);
                assert_eq!(x.len(), n);
                for k in 1..n {
                    assert!(x[k] > x[k - 1], "nodes not increasing at n={n} beta={beta}");
                }
                assert!(x[0] > -1.0 && x[n - 1] < 1.0, "node range n={n} beta={beta}");
                let mu0 = libm::pow(2.0, beta + 1.0) / (beta + 1.0);
                let total: f64 = w.iter().sum();
                assert!(
                    (total - mu0).abs() < 1e-12 * mu0,
                    "weight sum {total} vs {mu0} at n={n} beta={beta}"
                );
                // First moment: substituting u = 1 + x gives
                // 2^(beta+2)/(beta+2) - 2^(beta+1)/(beta+1).
                let m1: f64 = x.iter().zip(&w).map(|(xi, wi)| xi * wi).sum();
                let exact = libm::pow(2.0, beta + 2.0) / (beta + 2.0)
                    - libm::pow(2.0, beta + 1.0) / (beta + 1.0);
                assert!(
                    (m1 - exact).abs() < 1e-12 * (1.0 + exact.abs()),
                    "first moment {m1} vs {exact} at n={n} beta={beta}"
                );
            }
        }
    }
}
