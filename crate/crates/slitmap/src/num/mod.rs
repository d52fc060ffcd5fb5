//! Shared numerical kernels: FFT, Gaussian quadrature, dense linear algebra
//! and a damped least-squares solver.
//!
//! Everything here is deliberately self-contained and allocation-light so the
//! crate stays `no_std`. Float math goes through `libm` (directly or via
//! `num_complex`'s `libm` backend), never through platform intrinsics, which
//! keeps solver output bit-for-bit reproducible.

pub mod fft;
pub mod linalg;
pub mod lm;
pub mod quad;

/// Machine-level tolerance used when two floats are compared for exact-ish
/// coincidence (prevertex ordering, duplicate node detection).
pub const EPS_TIGHT: f64 = 1e-13;

/// Wraps an angle to the half-open interval `[0, 2π)`.
pub fn wrap_angle(t: f64) -> f64 {
    let two_pi = core::f64::consts::TAU;
    let mut s = t % two_pi;
    if s < 0.0 {
        s += two_pi;
    }
    if s >= two_pi {
        s = 0.0;
    }
    s
}

/// Wraps an angle difference to `(-π, π]`.
pub fn wrap_signed(t: f64) -> f64 {
    let two_pi = core::f64::consts::TAU;
    let mut s = t % two_pi;
    if s <= -core::f64::consts::PI {
        s += two_pi;
    } else if s > core::f64::consts::PI {
        s -= two_pi;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_lands_in_principal_interval() {
        for k in -20..20 {
            let t = 0.37 + 1.9 * k as f64;
            let w = wrap_angle(t);
            assert!((0.0..core::f64::consts::TAU).contains(&w));
            assert!(libm::cos(w - t).abs() > 1.0 - 1e-12);
        }
    }

    #[test]
    fn wrap_signed_is_odd_and_bounded() {
        for k in -20..20 {
            let t = 0.11 * k as f64;
            let w = wrap_signed(t);
            assert!(w > -core::f64::consts::PI && w <= core::f64::consts::PI);
            assert!((libm::sin(w) - libm::sin(t)).abs() < 1e-12);
        }
    }
}
