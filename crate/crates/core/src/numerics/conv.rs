use super::tape::Var;
use super::{NumericsError, Tensor};

/// Causal depthwise convolution along positions.
///
/// `x[B,D,N]`, `kernel[D,K]` → `y[b,d,n] = Σ_{j<K} kernel[d,j]·x[b,d,n−j]`,
/// with terms reaching before position 0 dropped (implicit left zero-padding
/// of `K−1`). Output at `n` depends only on inputs at positions `≤ n`.
pub fn causal_depthwise_conv<'t>(x: &Var<'t>, kernel: &Var<'t>) -> Result<Var<'t>, NumericsError> {
    let xv = x.value();
    let kv = kernel.value();
    let (bsz, d, n) = match *xv.shape() {
        [b, d, n] => (b, d, n),
        ref s => return Err(NumericsError::Shape(format!("causal conv input must be [B,D,N], got {s:?}"))),
    };
    let klen = match *kv.shape() {
        [d2, k] if d2 == d => k,
        ref s => {
            return Err(NumericsError::Shape(format!(
                "causal conv kernel must be [{d},K], got {s:?}"
            )))
        }
    };
    if klen == 0 {
        return Err(NumericsError::Domain("causal conv kernel length is zero".into()));
    }
    if klen > n {
        return Err(NumericsError::Domain(format!(
            "causal conv kernel length {klen} exceeds sequence length {n}"
        )));
    }

    let mut out = vec![0.0; bsz * d * n];
    for b in 0..bsz {
        for c in 0..d {
            let base = (b * d + c) * n;
            let xs = &xv.data()[base..base + n];
            let ks = &kv.data()[c * klen..(c + 1) * klen];
            let ys = &mut out[base..base + n];
            for (pos, y) in ys.iter_mut().enumerate() {
                *y = ks
                    .iter()
                    .take(pos + 1)
                    .enumerate()
                    .map(|(j, kj)| kj * xs[pos - j])
                    .sum();
            }
        }
    }

    let (ix, ik) = (x.id(), kernel.id());
    Ok(x.tape().custom(
        "causal_depthwise_conv",
        &[*x, *kernel],
        Tensor::new(&[bsz, d, n], out)?,
        move |g, grads| {
            if let Some(s) = grads.slot(ix) {
                for b in 0..bsz {
                    for c in 0..d {
                        let base = (b * d + c) * n;
                        let ks = &kv.data()[c * klen..(c + 1) * klen];
                        let gs = &g[base..base + n];
                        for (m, sv) in s[base..base + n].iter_mut().enumerate() {
                            *sv += ks
                                .iter()
                                .enumerate()
                                .take_while(|(j, _)| m + j < n)
                                .map(|(j, kj)| kj * gs[m + j])
                                .sum::<f64>();
                        }
                    }
                }
            }
            if let Some(s) = grads.slot(ik) {
                for b in 0..bsz {
                    for c in 0..d {
                        let base = (b * d + c) * n;
                        let xs = &xv.data()[base..base + n];
                        let gs = &g[base..base + n];
                        for (j, sv) in s[c * klen..(c + 1) * klen].iter_mut().enumerate() {
                            *sv += (j..n).map(|pos| gs[pos] * xs[pos - j]).sum::<f64>();
                        }
                    }
                }
            }
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tape;

    fn conv1(x: &[f64], k: &[f64]) -> Result<Vec<f64>, NumericsError> {
        let tape = Tape::new();
        let xv = tape.constant(Tensor::new(&[1, 1, x.len()], x.to_vec()).unwrap());
        let kv = tape.constant(Tensor::new(&[1, k.len()], k.to_vec()).unwrap());
        Ok(causal_depthwise_conv(&xv, &kv)?.value().data().to_vec())
    }

    #[test]
    fn identity_kernel() {
        let x = [0.3, -1.0, 2.5, 4.0];
        assert_eq!(conv1(&x, &[1.0, 0.0, 0.0]).unwrap(), x.to_vec());
    }

    #[test]
    fn hand_evaluated_examples() {
        assert_eq!(conv1(&[1.0, 2.0, 3.0, 4.0], &[0.0, 1.0]).unwrap(), vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(conv1(&[1.0, 1.0, 1.0, 1.0], &[0.5, 0.5]).unwrap(), vec![0.5, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn rejects_bad_kernel_lengths() {
        assert!(matches!(conv1(&[1.0, 2.0], &[1.0, 1.0, 1.0]), Err(NumericsError::Domain(_))));
        assert!(matches!(conv1(&[1.0, 2.0], &[]), Err(NumericsError::Domain(_))));
    }

    #[test]
    fn channels_use_their_own_kernel() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::new(&[1, 2, 3], vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0]).unwrap());
        let k = tape.constant(Tensor::new(&[2, 1], vec![2.0, -1.0]).unwrap());
        let y = causal_depthwise_conv(&x, &k).unwrap();
        assert_eq!(y.value().data(), &[2.0, 4.0, 6.0, -1.0, -2.0, -3.0]);
    }
}
