//! Independent conformal-modulus computations used to cross-check the
//! mapping solvers.
//!
//! Two unrelated routes are provided on purpose. The special-function route
//! goes through the arithmetic-geometric mean and the ring-modulus function
//! `mu`, following the classical identities (conventions as in Abramowitz &
//! Stegun, ch. 17); it is exact to machine precision but only available for
//! special shapes. The finite-difference route discretizes the capacity
//! problem on a uniform grid and is available for any tree, at the cost of
//! first-order accuracy, which a two-grid Richardson step upgrades enough
//! to certify three digits. A solver result is trusted only when both
//! routes agree with it within their stated errors.

use alloc::vec;
use alloc::vec::Vec;

use crate::geom::{tree_distance, PlanarTree, Point2};

/// Errors from oracle computations.
#[derive(Clone, Debug, PartialEq)]
pub enum OracleError {
    /// A length or radius that must be positive is not.
    NonPositive,
    /// A computed modulus came out non-finite or non-positive.
    BadModulus,
    /// Function argument outside its domain.
    BadArgument,
    /// The configuration does not describe a ring domain (tree too large,
    /// touching the circle, ...).
    BadGeometry,
    /// The requested grid cannot resolve the geometry.
    GridTooCoarse,
}

impl core::fmt::Display for OracleError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            OracleError::NonPositive => write!(f, "length or radius must be positive"),
            OracleError::BadModulus => write!(f, "computed modulus is not a positive number"),
            OracleError::BadArgument => write!(f, "argument outside the function domain"),
            OracleError::BadGeometry => write!(f, "configuration is not a valid ring domain"),
            OracleError::GridTooCoarse => write!(f, "grid too coarse for the geometry"),
        }
    }
}

impl core::error::Error for OracleError {}

/// A modulus value with an error estimate.
#[derive(Clone, Copy, Debug)]
pub struct ModulusEstimate {
    pub value: f64,
    /// Estimated absolute error (for the grid route, the magnitude of the
    /// Richardson correction; the true error is typically far smaller).
    pub error: f64,
}

/// Arithmetic-geometric mean of two positive numbers.
pub fn agm(a: f64, b: f64) -> Result<f64, OracleError> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(OracleError::NonPositive);
    }
    let (mut a, mut b) = (a, b);
    for _ in 0..64 {
        if libm::fabs(a - b) <= 1e-17 * a.max(b) {
            break;
        }
        let an = 0.5 * (a + b);
        let bn = libm::sqrt(a * b);
        a = an;
        b = bn;
    }
    Ok(0.5 * (a + b))
}

/// Complete elliptic integral of the first kind, `K(k)` with modulus `k` in
/// `[0, 1)` (A&S 17.3.1; computed via the AGM, A&S 17.6).
pub fn elliptic_k(k: f64) -> Result<f64, OracleError> {
    if !(0.0..1.0).contains(&k) {
        return Err(OracleError::BadArgument);
    }
    let kp = libm::sqrt((1.0 - k) * (1.0 + k));
    Ok(core::f64::consts::PI / (2.0 * agm(1.0, kp)?))
}

/// Ring-modulus function `mu(s) = (pi/2) K(sqrt(1-s^2)) / K(s)` for
/// `s` in `(0, 1)`: `mu(s) / (2*pi)` is the modulus of the unit disk with
/// the radial slit `[0, s]` removed.
pub fn grotzsch_mu(s: f64) -> Result<f64, OracleError> {
    if !(s > 0.0 && s < 1.0) {
        return Err(OracleError::BadArgument);
    }
    // In AGM form: K(sqrt(1-s^2)) = pi / (2 agm(1, s)) and
    // K(s) = pi / (2 agm(1, sqrt(1-s^2))).
    let sp = libm::sqrt((1.0 - s) * (1.0 + s));
    let num = agm(1.0, sp)?;
    let den = agm(1.0, s)?;
    Ok(core::f64::consts::PI * 0.5 * num / den)
}

/// Modulus of `D(R)` minus the centered segment `[-a, a]`, by the exact
/// special-function route.
///
/// Squaring maps the slit disk two-to-one onto the disk with a radial slit
/// `[0, (a/R)^2]`, so the modulus is `mu((a/R)^2) / (4*pi)`.
pub fn segment_modulus_oracle(a: f64, big_r: f64) -> Result<f64, OracleError> {
    if !(a > 0.0) || !(big_r > 0.0) {
        return Err(OracleError::NonPositive);
    }
    if a >= big_r {
        return Err(OracleError::BadGeometry);
    }
    let s = a / big_r;
    let m = grotzsch_mu(s * s)? / (4.0 * core::f64::consts::PI);
    if !(m > 0.0) || !m.is_finite() {
        return Err(OracleError::BadModulus);
    }
    Ok(m)
}

/// What a grid node is pinned to, if anything.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Pin {
    Free,
    Inner,
    Outer,
}

/// Discrete capacity problem on a uniform `n x n` grid covering
/// `[-R, R]^2`: potential 0 on the inner set, 1 on and outside the circle
/// of radius `R`, harmonic elsewhere.
pub(crate) struct CapacityGrid {
    pub n: usize,
    pub h: f64,
    /// Node potential, row-major, `u[iy * n + ix]` at
    /// `(-R + ix * h, -R + iy * h)`.
    pub u: Vec<f64>,
    pins: Vec<Pin>,
}

impl CapacityGrid {
    pub fn node(&self, ix: usize, iy: usize) -> Point2 {
        let r = 0.5 * self.h * (self.n - 1) as f64;
        Point2::new(-r + ix as f64 * self.h, -r + iy as f64 * self.h)
    }

    pub fn is_inner(&self, ix: usize, iy: usize) -> bool {
        self.pins[iy * self.n + ix] == Pin::Inner
    }

    pub fn is_free(&self, ix: usize, iy: usize) -> bool {
        self.pins[iy * self.n + ix] == Pin::Free
    }

    /// Discrete Dirichlet energy: sum of squared potential differences over
    /// grid edges (unit conductance per edge in two dimensions).
    pub fn energy(&self) -> f64 {
        let n = self.n;
        let mut e = 0.0;
        for iy in 0..n {
            for ix in 0..n {
                let a = self.u[iy * n + ix];
                if ix + 1 < n {
                    let b = self.u[iy * n + ix + 1];
                    e += (a - b) * (a - b);
                }
                if iy + 1 < n {
                    let b = self.u[(iy + 1) * n + ix];
                    e += (a - b) * (a - b);
                }
            }
        }
        e
    }
}

/// Solves the grid Laplace problem with conjugate gradients (diagonally
/// preconditioned). `pin_inner` decides which nodes form the zero-potential
/// inner conductor.
pub(crate) fn solve_capacity_grid(
    big_r: f64,
    n: usize,
    pin_inner: impl Fn(Point2, f64) -> bool,
) -> Result<CapacityGrid, OracleError> {
    if n < 16 {
        return Err(OracleError::GridTooCoarse);
    }
    let h = 2.0 * big_r / (n - 1) as f64;
    let mut pins = vec![Pin::Free; n * n];
    let mut u = vec![0.0f64; n * n];
    let mut inner_count = 0usize;
    for iy in 0..n {
        for ix in 0..n {
            let p = Point2::new(-big_r + ix as f64 * h, -big_r + iy as f64 * h);
            let idx = iy * n + ix;
            if p.norm() >= big_r {
                pins[idx] = Pin::Outer;
                u[idx] = 1.0;
            } else if pin_inner(p, h) {
                pins[idx] = Pin::Inner;
                u[idx] = 0.0;
                inner_count += 1;
            }
        }
    }
    if inner_count == 0 {
        return Err(OracleError::GridTooCoarse);
    }
    // Free-node system: (4 u_p - sum_nbr u_nbr) = 0, pinned values moved to
    // the right-hand side. CG on the free set.
    let free_idx: Vec<u32> = (0..n * n)
        .filter(|&i| pins[i] == Pin::Free)
        .map(|i| i as u32)
        .collect();
    if free_idx.is_empty() {
        return Err(OracleError::GridTooCoarse);
    }
    let mut slot = vec![u32::MAX; n * n];
    for (k, &i) in free_idx.iter().enumerate() {
        slot[i as usize] = k as u32;
    }
    let m = free_idx.len();
    let mut b = vec![0.0f64; m];
    for (k, &i) in free_idx.iter().enumerate() {
        let i = i as usize;
        let (ix, iy) = (i % n, i / n);
        let mut rhs = 0.0;
        let push = |jx: isize, jy: isize, rhs: &mut f64| {
            if jx < 0 || jy < 0 || jx >= n as isize || jy >= n as isize {
                // Outside the array can only happen beyond the circle; treat
                // as outer.
                *rhs += 1.0;
                return;
            }
            let j = jy as usize * n + jx as usize;
            if pins[j] != Pin::Free {
                *rhs += u[j];
            }
        };
        push(ix as isize - 1, iy as isize, &mut rhs);
        push(ix as isize + 1, iy as isize, &mut rhs);
        push(ix as isize, iy as isize - 1, &mut rhs);
        push(ix as isize, iy as isize + 1, &mut rhs);
        b[k] = rhs;
    }
    let apply = |x: &[f64], out: &mut [f64]| {
        for (k, &i) in free_idx.iter().enumerate() {
            let i = i as usize;
            let (ix, iy) = (i % n, i / n);
            let mut acc = 4.0 * x[k];
            let take = |jx: isize, jy: isize, acc: &mut f64| {
                if jx < 0 || jy < 0 || jx >= n as isize || jy >= n as isize {
                    return;
                }
                let j = jy as usize * n + jx as usize;
                let s = slot[j];
                if s != u32::MAX {
                    *acc -= x[s as usize];
                }
            };
            take(ix as isize - 1, iy as isize, &mut acc);
            take(ix as isize + 1, iy as isize, &mut acc);
            take(ix as isize, iy as isize - 1, &mut acc);
            take(ix as isize, iy as isize + 1, &mut acc);
            out[k] = acc;
        }
    };
    // Diagonal is constant 4, so Jacobi preconditioning is a scalar; CG in
    // plain form.
    let mut x = vec![0.5f64; m];
    let mut r = vec![0.0f64; m];
    let mut ap = vec![0.0f64; m];
    apply(&x, &mut r);
    for k in 0..m {
        r[k] = b[k] - r[k];
    }
    let mut p = r.clone();
    let mut rs: f64 = r.iter().map(|v| v * v).sum();
    let b_norm: f64 = b.iter().map(|v| v * v).sum::<f64>().max(1e-300);
    let tol2 = 1e-24 * b_norm;
    let max_iter = 20 * n;
    for _ in 0..max_iter {
        if rs <= tol2 {
            break;
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        let alpha = rs / pap;
        for k in 0..m {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rs_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rs_new / rs;
        rs = rs_new;
        for k in 0..m {
            p[k] = r[k] + beta * p[k];
        }
    }
    for (k, &i) in free_idx.iter().enumerate() {
        u[i as usize] = x[k];
    }
    Ok(CapacityGrid { n, h, u, pins })
}

fn grid_modulus_once(
    big_r: f64,
    n: usize,
    pin_inner: &impl Fn(Point2, f64) -> bool,
) -> Result<f64, OracleError> {
    let grid = solve_capacity_grid(big_r, n, pin_inner)?;
    let e = grid.energy();
    if !(e > 0.0) || !e.is_finite() {
        return Err(OracleError::BadModulus);
    }
    Ok(1.0 / e)
}

/// Modulus of `D(R)` minus a tree, by grid capacity.
///
/// Solves on `grid_n / 2` and `grid_n` nodes per side; the half-cell
/// pinning of the slit makes the leading error first order in the spacing,
/// so the two-grid Richardson value `2 m_fine - m_coarse` is reported, with
/// the correction magnitude as the error estimate.
pub fn fd_modulus(
    tree: &PlanarTree,
    big_r: f64,
    grid_n: usize,
) -> Result<ModulusEstimate, OracleError> {
    if grid_n < 100 {
        return Err(OracleError::GridTooCoarse);
    }
    if !(big_r > 0.0) {
        return Err(OracleError::NonPositive);
    }
    let mut max_norm = 0.0f64;
    for v in &tree.vertices {
        max_norm = max_norm.max(v.norm());
    }
    if max_norm >= big_r {
        return Err(OracleError::BadGeometry);
    }
    let pin = |p: Point2, h: f64| tree_distance(tree, p) <= 0.5 * h;
    let coarse = grid_modulus_once(big_r, grid_n / 2, &pin)?;
    let fine = grid_modulus_once(big_r, grid_n, &pin)?;
    let value = 2.0 * fine - coarse;
    if !(value > 0.0) || !value.is_finite() {
        return Err(OracleError::BadModulus);
    }
    Ok(ModulusEstimate { value, error: libm::fabs(fine - coarse) })
}

/// Grid-capacity modulus of the round ring `A(rho, R)`; the closed form
/// `log(R / rho) / (2*pi)` makes this the standard sanity check for the
/// grid route.
pub fn fd_modulus_ring(
    rho: f64,
    big_r: f64,
    grid_n: usize,
) -> Result<ModulusEstimate, OracleError> {
    if !(rho > 0.0) || !(big_r > 0.0) {
        return Err(OracleError::NonPositive);
    }
    if rho >= big_r {
        return Err(OracleError::BadGeometry);
    }
    if grid_n < 100 {
        return Err(OracleError::GridTooCoarse);
    }
    let pin = |p: Point2, _h: f64| p.norm() <= rho;
    let coarse = grid_modulus_once(big_r, grid_n / 2, &pin)?;
    let fine = grid_modulus_once(big_r, grid_n, &pin)?;
    let value = 2.0 * fine - coarse;
    if !(value > 0.0) || !value.is_finite() {
        return Err(OracleError::BadModulus);
    }
    Ok(ModulusEstimate { value, error: libm::fabs(fine - coarse) })
}
