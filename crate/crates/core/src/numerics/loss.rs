use super::tape::Var;
use super::{NumericsError, Tensor};

/// Mean softmax cross-entropy over all rows of `logits[.., V]`.
///
/// `targets` holds one class id per row (row-major over the leading axes).
/// The gradient with respect to the logits is `(softmax − onehot) / rows`.
pub fn softmax_cross_entropy<'t>(logits: &Var<'t>, targets: &[u32]) -> Result<Var<'t>, NumericsError> {
    let lv = logits.value();
    let v = *lv
        .shape()
        .last()
        .ok_or_else(|| NumericsError::Shape("cross-entropy on a scalar".into()))?;
    let rows = lv.numel() / v.max(1);
    if targets.len() != rows {
        return Err(NumericsError::Shape(format!(
            "cross-entropy: {rows} logit rows but {} targets",
            targets.len()
        )));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t as usize >= v) {
        return Err(NumericsError::IndexOutOfRange { index: bad as usize, bound: v });
    }
    if !lv.all_finite() {
        return Err(NumericsError::NonFinite("cross-entropy logits"));
    }

    let mut probs = vec![0.0; rows * v];
    let mut total = 0.0;
    for (r, (row, &target)) in lv.data().chunks_exact(v).zip(targets).enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let p = &mut probs[r * v..(r + 1) * v];
        let mut z = 0.0;
        for (pi, &l) in p.iter_mut().zip(row) {
            *pi = (l - max).exp();
            z += *pi;
        }
        p.iter_mut().for_each(|pi| *pi /= z);
        // −log softmax_target = log z − (l_target − max)
        total += z.ln() - (row[target as usize] - max);
    }
    let loss = total / rows as f64;

    let il = logits.id();
    let targets = targets.to_vec();
    Ok(logits.tape().custom(
        "softmax_cross_entropy",
        &[*logits],
        Tensor::scalar(loss),
        move |g, grads| {
            let Some(s) = grads.slot(il) else { return };
            let scale = g[0] / rows as f64;
            for (r, &target) in targets.iter().enumerate() {
                let p = &probs[r * v..(r + 1) * v];
                let sr = &mut s[r * v..(r + 1) * v];
                for (j, (sv, pv)) in sr.iter_mut().zip(p).enumerate() {
                    let onehot = if j == target as usize { 1.0 } else { 0.0 };
                    *sv += scale * (pv - onehot);
                }
            }
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tape;

    fn ce(shape: &[usize], logits: Vec<f64>, targets: &[u32]) -> Result<f64, NumericsError> {
        let tape = Tape::new();
        let l = tape.param(Tensor::new(shape, logits).unwrap());
        Ok(softmax_cross_entropy(&l, targets)?.item())
    }

    #[test]
    fn uniform_logits_give_log_v() {
        let loss = ce(&[2, 3, 4], vec![0.0; 24], &[0, 1, 2, 3, 0, 1]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn confident_correct_prediction_is_near_zero() {
        let loss = ce(&[1, 1, 4], vec![0.0, 0.0, 30.0, 0.0], &[2]).unwrap();
        assert!(loss < 1e-9);
    }

    #[test]
    fn hand_evaluated_softmax() {
        let loss = ce(&[1, 1, 4], vec![1.0, 0.0, 0.0, 0.0], &[0]).unwrap();
        let e = std::f64::consts::E;
        assert!((loss - (-(e / (e + 3.0)).ln())).abs() < 1e-12);
        assert!((loss - 0.743668).abs() < 1e-6);
    }

    #[test]
    fn gradient_is_softmax_minus_onehot_over_rows() {
        let tape = Tape::new();
        let l = tape.param(Tensor::new(&[2, 2], vec![0.0, 0.0, 0.0, 0.0]).unwrap());
        let loss = softmax_cross_entropy(&l, &[0, 1]).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(l).unwrap().data(), &[-0.25, 0.25, 0.25, -0.25]);
    }

    #[test]
    fn rejects_out_of_range_target() {
        assert!(matches!(
            ce(&[1, 3], vec![0.0; 3], &[3]),
            Err(NumericsError::IndexOutOfRange { index: 3, bound: 3 })
        ));
    }
}
