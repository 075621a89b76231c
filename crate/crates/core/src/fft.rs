//! Iterative radix-2 FFT on `Complex<f64>` buffers.

use alloc::format;
use num_complex::Complex;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// In-place discrete Fourier transform
/// `X_k = sum_j x_j exp(-2 pi i j k / n)` (or `+` when `inverse`, without
/// the `1/n` factor). The length must be a power of two.
pub fn fft_in_place(buf: &mut [Complex<f64>], inverse: bool) -> Result<()> {
    let n = buf.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::InvalidParameter(format!(
            "FFT length must be a power of two, got {n}"
        )));
    }
    let bits = n.trailing_zeros();
    if bits == 0 {
        return Ok(());
    }
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let step = sign * 2.0 * core::f64::consts::PI / len as f64;
        let half = len / 2;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = Complex::from_polar(1.0, step * k as f64);
                let u = buf[start + k];
                let v = buf[start + k + half] * w;
                buf[start + k] = u + v;
                buf[start + k + half] = u - v;
            }
        }
        len <<= 1;
    }
    Ok(())
}
