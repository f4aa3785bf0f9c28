//! Complex discrete Fourier transforms on plain buffers.
//!
//! Convention: forward `X_k = Σ_n x_n·e^{−2πikn/N}` (unnormalized), inverse
//! `x_n = (1/N)·Σ_k X_k·e^{+2πikn/N}`. Power-of-two lengths use an iterative
//! radix-2 decimation-in-time transform; any other length falls back to the
//! direct O(N²) sum.

use std::f64::consts::PI;

use num_complex::Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    /// Conjugate twiddles, no normalization.
    Backward,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => -1.0,
            Direction::Backward => 1.0,
        }
    }
}

/// Unnormalized transform in place.
pub fn fft_in_place(buf: &mut [Complex64], dir: Direction) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    if n.is_power_of_two() {
        radix2(buf, dir);
    } else {
        let out = dft(buf, dir);
        buf.copy_from_slice(&out);
    }
}

/// Direct evaluation of the DFT sum; O(N²).
pub fn dft(input: &[Complex64], dir: Direction) -> Vec<Complex64> {
    let n = input.len();
    let sign = dir.sign();
    (0..n)
        .map(|k| {
            input
                .iter()
                .enumerate()
                .map(|(j, x)| {
                    // Reduce kn mod N first so the angle stays small.
                    let phase = sign * 2.0 * PI * ((k * j) % n) as f64 / n as f64;
                    x * Complex64::from_polar(1.0, phase)
                })
                .sum()
        })
        .collect()
}

fn radix2(buf: &mut [Complex64], dir: Direction) {
    let n = buf.len();
    let bits = n.trailing_zeros();

    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if i < j {
            buf.swap(i, j);
        }
    }

    let sign = dir.sign();
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        // Twiddles computed directly rather than by repeated multiplication
        // to keep rounding error flat across stages.
        let twiddles: Vec<Complex64> = (0..half)
            .map(|k| Complex64::from_polar(1.0, sign * 2.0 * PI * k as f64 / len as f64))
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let u = buf[start + k];
                let v = buf[start + k + half] * twiddles[k];
                buf[start + k] = u + v;
                buf[start + k + half] = u - v;
            }
        }
        len <<= 1;
    }
}

/// Number of non-redundant bins of a real signal of length `n`.
pub fn rfft_bins(n: usize) -> usize {
    n / 2 + 1
}

/// Forward transform of a real signal, keeping bins `0..=n/2`.
pub fn rfft_real(signal: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft_in_place(&mut buf, Direction::Forward);
    buf.truncate(rfft_bins(signal.len()));
    buf
}

/// Inverse of [`rfft_real`] including the 1/N factor. The spectrum is
/// extended by Hermitian symmetry, so imaginary parts at bin 0 (and at bin
/// N/2 for even N) have no effect on the output.
pub fn irfft_real(bins: &[Complex64], n: usize) -> Vec<f64> {
    debug_assert_eq!(bins.len(), rfft_bins(n));
    let mut full = vec![Complex64::new(0.0, 0.0); n];
    for (k, slot) in full.iter_mut().enumerate() {
        *slot = if k < bins.len() { bins[k] } else { bins[n - k].conj() };
    }
    fft_in_place(&mut full, Direction::Backward);
    let scale = 1.0 / n as f64;
    full.iter().map(|c| c.re * scale).collect()
}
