//! Differentiable real FFT and inverse real FFT along the last axis.

use num_complex::Complex64;

use super::fft::{fft_in_place, irfft_real, rfft_bins, rfft_real, Direction};
use super::tape::Var;
use super::{NumericsError, Tensor};

/// Half spectrum of a real `[.., N]` signal: real and imaginary parts of bins
/// `0..=N/2`, each shaped `[.., N/2+1]`.
#[derive(Clone, Copy, Debug)]
pub struct ComplexSpectrum<'t> {
    pub real: Var<'t>,
    pub imag: Var<'t>,
    pub original_length: usize,
}

fn lead_and_len(shape: &[usize]) -> Result<(usize, usize), NumericsError> {
    match shape.split_last() {
        Some((&n, lead)) => Ok((lead.iter().product(), n)),
        None => Err(NumericsError::Shape("spectral op on a scalar".into())),
    }
}

/// Forward real FFT of every row of `x` (last axis).
pub fn rfft<'t>(x: &Var<'t>) -> Result<ComplexSpectrum<'t>, NumericsError> {
    let value = x.value();
    let (rows, n) = lead_and_len(value.shape())?;
    if n < 2 {
        return Err(NumericsError::Domain(format!("rfft needs at least 2 samples, got {n}")));
    }
    if !value.all_finite() {
        return Err(NumericsError::NonFinite("rfft input"));
    }
    let bins = rfft_bins(n);
    let mut re = Vec::with_capacity(rows * bins);
    let mut im = Vec::with_capacity(rows * bins);
    for row in value.data().chunks_exact(n) {
        for c in rfft_real(row) {
            re.push(c.re);
            im.push(c.im);
        }
    }
    let mut shape = value.shape().to_vec();
    *shape.last_mut().expect("rank ≥ 1") = bins;

    // Both outputs read their gradient into the same input, so the spectrum
    // is recorded as one packed node [.., 2·bins] and split afterwards.
    let mut packed_shape = shape.clone();
    packed_shape.pop();
    packed_shape.push(2 * bins);
    let mut packed = Vec::with_capacity(rows * 2 * bins);
    for r in 0..rows {
        packed.extend_from_slice(&re[r * bins..(r + 1) * bins]);
        packed.extend_from_slice(&im[r * bins..(r + 1) * bins]);
    }
    let ix = x.id();
    let node = x.tape().custom(
        "rfft",
        &[*x],
        Tensor::new(&packed_shape, packed)?,
        move |g, grads| {
            let Some(s) = grads.slot(ix) else { return };
            let mut buf = vec![Complex64::new(0.0, 0.0); n];
            for r in 0..rows {
                let gr = &g[r * 2 * bins..r * 2 * bins + bins];
                let gi = &g[r * 2 * bins + bins..(r + 1) * 2 * bins];
                buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
                for k in 0..bins {
                    buf[k] = Complex64::new(gr[k], gi[k]);
                }
                // ∂L/∂x_n = Re Σ_k (gR_k + i·gI_k)·e^{+2πikn/N}
                fft_in_place(&mut buf, Direction::Backward);
                for (sv, c) in s[r * n..(r + 1) * n].iter_mut().zip(&buf) {
                    *sv += c.re;
                }
            }
        },
    );
    Ok(ComplexSpectrum {
        real: node.slice_last(0, bins)?,
        imag: node.slice_last(bins, bins)?,
        original_length: n,
    })
}

/// Inverse real FFT (with 1/N) of `real + i·imag` to length `n`.
pub fn irfft<'t>(real: &Var<'t>, imag: &Var<'t>, n: usize) -> Result<Var<'t>, NumericsError> {
    let re = real.value();
    let im = imag.value();
    if re.shape() != im.shape() {
        return Err(NumericsError::Shape(format!(
            "irfft: real {:?} and imag {:?} differ",
            re.shape(),
            im.shape()
        )));
    }
    let (rows, bins) = lead_and_len(re.shape())?;
    if n < 2 || bins != rfft_bins(n) {
        return Err(NumericsError::Shape(format!(
            "irfft: {bins} bins cannot come from a length-{n} signal (expected {})",
            rfft_bins(n)
        )));
    }
    let mut out = Vec::with_capacity(rows * n);
    let mut spec = vec![Complex64::new(0.0, 0.0); bins];
    for r in 0..rows {
        for k in 0..bins {
            spec[k] = Complex64::new(re.data()[r * bins + k], im.data()[r * bins + k]);
        }
        out.extend(irfft_real(&spec, n));
    }
    let mut shape = re.shape().to_vec();
    *shape.last_mut().expect("rank ≥ 1") = n;
    let (ir, ii) = (real.id(), imag.id());
    Ok(real.tape().custom("irfft", &[*real, *imag], Tensor::new(&shape, out)?, move |g, grads| {
        let inv_n = 1.0 / n as f64;
        let weight = |k: usize| if k == 0 || (n.is_multiple_of(2) && k == n / 2) { inv_n } else { 2.0 * inv_n };
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut d_re = vec![0.0; rows * bins];
        let mut d_im = vec![0.0; rows * bins];
        for r in 0..rows {
            for (c, &gv) in buf.iter_mut().zip(&g[r * n..(r + 1) * n]) {
                *c = Complex64::new(gv, 0.0);
            }
            fft_in_place(&mut buf, Direction::Forward);
            for k in 0..bins {
                d_re[r * bins + k] = weight(k) * buf[k].re;
                d_im[r * bins + k] = weight(k) * buf[k].im;
            }
        }
        grads.accumulate(ir, &d_re);
        grads.accumulate(ii, &d_im);
    }))
}

impl<'t> ComplexSpectrum<'t> {
    pub fn inverse(&self) -> Result<Var<'t>, NumericsError> {
        irfft(&self.real, &self.imag, self.original_length)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tape;

    fn row<'t>(tape: &'t Tape, data: &[f64]) -> Var<'t> {
        tape.param(Tensor::new(&[1, 1, data.len()], data.to_vec()).unwrap())
    }

    #[test]
    fn rfft_examples() {
        let tape = Tape::new();
        let s = rfft(&row(&tape, &[1.0, 1.0, 1.0, 1.0])).unwrap();
        assert_eq!(s.real.value().data(), &[4.0, 0.0, 0.0]);
        assert_eq!(s.imag.value().data(), &[0.0, 0.0, 0.0]);
        let s = rfft(&row(&tape, &[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(s.real.value().data(), &[1.0, 1.0, 1.0]);
        let s = rfft(&row(&tape, &[0.0, 1.0, 0.0, -1.0])).unwrap();
        let im = s.imag.value();
        assert!((im.data()[1] + 2.0).abs() < 1e-15);
        assert!(s.real.value().data().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn rfft_rejects_bad_input() {
        let tape = Tape::new();
        assert!(matches!(rfft(&row(&tape, &[1.0])), Err(NumericsError::Domain(_))));
        assert!(matches!(
            rfft(&row(&tape, &[1.0, f64::NAN])),
            Err(NumericsError::NonFinite(_))
        ));
    }

    #[test]
    fn irfft_examples() {
        let tape = Tape::new();
        let re = tape.constant(Tensor::new(&[3], vec![0.0, 0.0, 0.0]).unwrap());
        let im = tape.constant(Tensor::new(&[3], vec![0.0, -2.0, 0.0]).unwrap());
        let x = irfft(&re, &im, 4).unwrap();
        let expect = [0.0, 1.0, 0.0, -1.0];
        for (a, b) in x.value().data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let dc = tape.constant(Tensor::new(&[3], vec![4.0, 0.0, 0.0]).unwrap());
        assert_eq!(irfft(&dc, &re, 4).unwrap().value().data(), &[1.0; 4]);
        assert!(irfft(&re, &im, 6).is_err());
    }

    #[test]
    fn round_trip_value_and_gradient() {
        let tape = Tape::new();
        let x = row(&tape, &[1.0, 2.0, 3.0, 4.0]);
        let y = rfft(&x).unwrap().inverse().unwrap();
        assert!(y.value().max_abs_diff(&x.value()) < 1e-9);
        tape.backward(y.sum()).unwrap();
        for g in tape.grad(x).unwrap().data() {
            assert!((g - 1.0).abs() < 1e-12);
        }
    }
}
