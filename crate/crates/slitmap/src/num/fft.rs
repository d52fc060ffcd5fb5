//! Radix-2 complex FFT.
//!
//! Sign convention matches the common engineering one: the forward transform
//! computes `X_k = sum_j x_j exp(-2*pi*i*j*k/N)` and the inverse divides by
//! `N`. Lengths must be powers of two; the solver only ever uses fixed
//! power-of-two sampling grids.

use alloc::vec::Vec;
use num_complex::Complex64;

fn bit_reverse_permute(buf: &mut [Complex64]) {
    let n = buf.len();
    let mut j = 0usize;
    for i in 0..n {
        if i < j {
            buf.swap(i, j);
        }
        let mut m = n >> 1;
        while m >= 1 && j & m != 0 {
            j ^= m;
            m >>= 1;
        }
        j |= m;
    }
}

fn transform(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    assert!(n.is_power_of_two(), "fft length must be a power of two");
    bit_reverse_permute(buf);
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * core::f64::consts::TAU / len as f64;
        let wlen = Complex64::new(libm::cos(ang), libm::sin(ang));
        let mut i = 0;
        while i < n {
            let mut w = Complex64::new(1.0, 0.0);
            for k in 0..len / 2 {
                let u = buf[i + k];
                let v = buf[i + k + len / 2] * w;
                buf[i + k] = u + v;
                buf[i + k + len / 2] = u - v;
                w *= wlen;
            }
            i += len;
        }
        len <<= 1;
    }
}

/// In-place forward FFT.
pub fn fft(buf: &mut [Complex64]) {
    transform(buf, false);
}

/// In-place inverse FFT, including the `1/N` normalization.
pub fn ifft(buf: &mut [Complex64]) {
    transform(buf, true);
    let scale = 1.0 / buf.len() as f64;
    for z in buf.iter_mut() {
        *z *= scale;
    }
}

/// Fourier coefficients of samples on a uniform periodic grid.
///
/// Returns `(k, c_k)` pairs with the integer frequency unwrapped to the
/// symmetric range, so `samples[j] ≈ sum_k c_k exp(i*k*t_j)` for
/// `t_j = 2*pi*j/N`.
pub fn coefficients(samples: &[Complex64]) -> Vec<(i64, Complex64)> {
    let n = samples.len();
    let mut buf = samples.to_vec();
    fft(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter()
        .enumerate()
        .map(|(j, c)| {
            let k = if j >= n.div_ceil(2) { j as i64 - n as i64 } else { j as i64 };
            (k, c * scale)
        })
        .collect()
}
