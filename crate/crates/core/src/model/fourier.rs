//! Complex Fourier MLP: global token mixing in the frequency domain.
//!
//! Each `(batch, channel)` row of `x[B,D,N]` is transformed with a real FFT;
//! real and imaginary bins are concatenated into one vector of width
//! `2·(N/2+1)`, passed through a perceptron shared by all rows, split back
//! into real and imaginary halves and transformed back with the inverse FFT.
//! A linear perceptron can rescale and rotate every bin, i.e. adjust both
//! amplitude and phase.

use crate::numerics::{fft::rfft_bins, irfft, rfft, NumericsError, Var};

use super::params::BoundParams;

/// Two-layer perceptron `w2·gelu(w1·v + b1) + b2` over spectrum vectors.
#[derive(Clone, Copy, Debug)]
pub struct FourierMlpVars<'t> {
    /// `[2F, H]`
    pub w1: Var<'t>,
    /// `[H]`
    pub b1: Var<'t>,
    /// `[H, 2F]`
    pub w2: Var<'t>,
    /// `[2F]`
    pub b2: Var<'t>,
    /// Sequence length the widths were sized for.
    pub seq_len: usize,
}

impl<'t> FourierMlpVars<'t> {
    pub fn bind(params: &BoundParams<'t>, prefix: &str, seq_len: usize) -> Self {
        FourierMlpVars {
            w1: params.get(&format!("{prefix}.w1")),
            b1: params.get(&format!("{prefix}.b1")),
            w2: params.get(&format!("{prefix}.w2")),
            b2: params.get(&format!("{prefix}.b2")),
            seq_len,
        }
    }

    /// Applies the perceptron to rows `[R, 2F]`.
    pub fn apply(&self, rows: &Var<'t>) -> Result<Var<'t>, NumericsError> {
        rows.matmul(&self.w1)?
            .add_bias_last(&self.b1)?
            .gelu()
            .matmul(&self.w2)?
            .add_bias_last(&self.b2)
    }
}

/// rFFT → concat(re, im) → `spectral_map` on rows `[B·D, 2F]` → split → irFFT.
///
/// `spectral_map` must return the same shape it receives.
pub fn fourier_mix<'t, F>(x: &Var<'t>, spectral_map: F) -> Result<Var<'t>, NumericsError>
where
    F: FnOnce(&Var<'t>) -> Result<Var<'t>, NumericsError>,
{
    let shape = x.shape();
    let (b, d, n) = match *shape {
        [b, d, n] => (b, d, n),
        ref s => return Err(NumericsError::Shape(format!("fourier layer input must be [B,D,N], got {s:?}"))),
    };
    let bins = rfft_bins(n);
    let spectrum = rfft(x)?;
    let rows = spectrum
        .real
        .concat_last(&spectrum.imag)?
        .reshape(&[b * d, 2 * bins])?;
    let mapped = spectral_map(&rows)?;
    if mapped.shape() != [b * d, 2 * bins] {
        return Err(NumericsError::Shape(format!(
            "spectral map changed shape {:?} to {:?}",
            [b * d, 2 * bins],
            mapped.shape()
        )));
    }
    let mapped = mapped.reshape(&[b, d, 2 * bins])?;
    let re = mapped.slice_last(0, bins)?;
    let im = mapped.slice_last(bins, bins)?;
    irfft(&re, &im, n)
}

pub fn fourier_mlp_layer<'t>(x: &Var<'t>, p: &FourierMlpVars<'t>) -> Result<Var<'t>, NumericsError> {
    let n = *x.shape().last().unwrap_or(&0);
    if n != p.seq_len {
        return Err(NumericsError::Shape(format!(
            "fourier layer configured for length {}, got {n}",
            p.seq_len
        )));
    }
    fourier_mix(x, |rows| p.apply(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Tape, Tensor};

    fn signal(tape: &Tape, b: usize, d: usize, n: usize) -> Var<'_> {
        tape.constant(Tensor::from_fn(&[b, d, n], |i| ((i * 37 % 11) as f64 - 5.0) / 5.0))
    }

    #[test]
    fn identity_map_reproduces_input() {
        let tape = Tape::new();
        let x = signal(&tape, 2, 3, 16);
        let y = fourier_mix(&x, |r| Ok(*r)).unwrap();
        assert!(y.value().max_abs_diff(&x.value()) < 1e-9);
    }

    #[test]
    fn doubling_every_bin_doubles_the_signal() {
        let tape = Tape::new();
        let x = signal(&tape, 1, 2, 8);
        let y = fourier_mix(&x, |r| Ok(r.scale(2.0))).unwrap();
        let expect = Tensor::from_fn(&[1, 2, 8], |i| 2.0 * x.value().data()[i]);
        assert!(y.value().max_abs_diff(&expect) < 1e-9);
    }

    #[test]
    fn quarter_turn_of_bin_one_delays_a_tone() {
        // x = cos(2πn/4) = [1, 0, −1, 0]; X_1 = 2. Multiplying X_1 by −i
        // gives −2i, whose inverse is sin(2πn/4) = [0, 1, 0, −1]: the tone
        // delayed by a quarter period.
        let tape = Tape::new();
        let x = tape.constant(Tensor::new(&[1, 1, 4], vec![1.0, 0.0, -1.0, 0.0]).unwrap());
        let y = fourier_mix(&x, |rows| {
            // rows = [re0, re1, re2, im0, im1, im2]; (re1, im1) → (im1, −re1)
            let v = rows.value();
            let mut out = v.data().to_vec();
            out[1] = v.data()[4];
            out[4] = -v.data()[1];
            let w = Tensor::new(v.shape(), out)?;
            Ok(rows.tape().constant(w))
        })
        .unwrap();
        let expect = [0.0, 1.0, 0.0, -1.0];
        for (a, b) in y.value().data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{:?}", y.value());
        }
    }

    #[test]
    fn mirrored_weights_make_the_perceptron_exact_identity() {
        // gelu(v) − gelu(−v) = v, so [I | −I] then [I ; −I] passes v through.
        for n in [4, 6, 16, 64] {
            let tape = Tape::new();
            let f2 = 2 * rfft_bins(n);
            let h = 2 * f2;
            let w1 = Tensor::from_fn(&[f2, h], |i| {
                let (r, c) = (i / h, i % h);
                if c == r { 1.0 } else if c == r + f2 { -1.0 } else { 0.0 }
            });
            let w2 = Tensor::from_fn(&[h, f2], |i| {
                let (r, c) = (i / f2, i % f2);
                if r == c { 1.0 } else if r == c + f2 { -1.0 } else { 0.0 }
            });
            let p = FourierMlpVars {
                w1: tape.constant(w1),
                b1: tape.constant(Tensor::zeros(&[h])),
                w2: tape.constant(w2),
                b2: tape.constant(Tensor::zeros(&[f2])),
                seq_len: n,
            };
            let x = signal(&tape, 2, 3, n);
            let y = fourier_mlp_layer(&x, &p).unwrap();
            assert!(y.value().max_abs_diff(&x.value()) < 1e-9, "n = {n}");
        }
    }

    #[test]
    fn wrong_length_rejected() {
        let tape = Tape::new();
        let z = |s: &[usize]| tape.constant(Tensor::zeros(s));
        let p = FourierMlpVars {
            w1: z(&[10, 4]),
            b1: z(&[4]),
            w2: z(&[4, 10]),
            b2: z(&[10]),
            seq_len: 8,
        };
        assert!(fourier_mlp_layer(&signal(&tape, 1, 1, 8), &p).is_ok());
        assert!(fourier_mlp_layer(&signal(&tape, 1, 1, 16), &p).is_err());
    }
}
