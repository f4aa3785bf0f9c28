//! Elementwise, linear, reduction and reshaping operations on [`Var`].

use std::rc::Rc;

use super::tape::Var;
use super::{NumericsError, Tensor};

fn shape_err(msg: impl Into<String>) -> NumericsError {
    NumericsError::Shape(msg.into())
}

fn same_shape(op: &str, a: &Tensor, b: &Tensor) -> Result<(), NumericsError> {
    if a.shape() != b.shape() {
        return Err(shape_err(format!("{op}: shapes {:?} and {:?} differ", a.shape(), b.shape())));
    }
    Ok(())
}

fn dims3(op: &str, t: &Tensor) -> Result<(usize, usize, usize), NumericsError> {
    match *t.shape() {
        [a, b, c] => Ok((a, b, c)),
        ref s => Err(shape_err(format!("{op}: expected a rank-3 tensor, got {s:?}"))),
    }
}

fn dims2(op: &str, t: &Tensor) -> Result<(usize, usize), NumericsError> {
    match *t.shape() {
        [a, b] => Ok((a, b)),
        ref s => Err(shape_err(format!("{op}: expected a rank-2 tensor, got {s:?}"))),
    }
}

/// out[m,n] += Σ_k a[m,k]·b[k,n]
pub(crate) fn gemm_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

/// out[m,k] += Σ_n g[m,n]·b[k,n]   (g · bᵀ)
pub(crate) fn gemm_a_bt_acc(g: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// out[k,n] += Σ_m a[m,k]·g[m,n]   (aᵀ · g)
pub(crate) fn gemm_at_b_acc(a: &[f64], g: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, gv) in orow.iter_mut().zip(grow) {
                *o += aip * gv;
            }
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu_scalar(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_K * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

pub fn gelu_derivative(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_K * x * x * x);
    let th = u.tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

impl<'t> Var<'t> {
    fn binary_elementwise(
        &self,
        other: &Var<'t>,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<(Rc<Tensor>, Rc<Tensor>, Tensor), NumericsError> {
        let a = self.value();
        let b = other.value();
        same_shape(op, &a, &b)?;
        let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
        let out = Tensor::new(a.shape(), data)?;
        Ok((a, b, out))
    }

    pub fn add(&self, other: &Var<'t>) -> Result<Var<'t>, NumericsError> {
        let (_, _, out) = self.binary_elementwise(other, "add", |x, y| x + y)?;
        let (ia, ib) = (self.id(), other.id());
        Ok(self.tape().custom("add", &[*self, *other], out, move |g, grads| {
            grads.accumulate(ia, g);
            grads.accumulate(ib, g);
        }))
    }

    pub fn sub(&self, other: &Var<'t>) -> Result<Var<'t>, NumericsError> {
        let (_, _, out) = self.binary_elementwise(other, "sub", |x, y| x - y)?;
        let (ia, ib) = (self.id(), other.id());
        Ok(self.tape().custom("sub", &[*self, *other], out, move |g, grads| {
            grads.accumulate(ia, g);
            if let Some(s) = grads.slot(ib) {
                s.iter_mut().zip(g).for_each(|(s, g)| *s -= g);
            }
        }))
    }

    pub fn mul(&self, other: &Var<'t>) -> Result<Var<'t>, NumericsError> {
        let (a, b, out) = self.binary_elementwise(other, "mul", |x, y| x * y)?;
        let (ia, ib) = (self.id(), other.id());
        Ok(self.tape().custom("mul", &[*self, *other], out, move |g, grads| {
            if let Some(s) = grads.slot(ia) {
                for ((s, g), bv) in s.iter_mut().zip(g).zip(b.data()) {
                    *s += g * bv;
                }
            }
            if let Some(s) = grads.slot(ib) {
                for ((s, g), av) in s.iter_mut().zip(g).zip(a.data()) {
                    *s += g * av;
                }
            }
        }))
    }

    pub fn scale(&self, factor: f64) -> Var<'t> {
        let a = self.value();
        let out = Tensor::new(a.shape(), a.data().iter().map(|x| x * factor).collect()).expect("same shape");
        let ia = self.id();
        self.tape().custom("scale", &[*self], out, move |g, grads| {
            if let Some(s) = grads.slot(ia) {
                s.iter_mut().zip(g).for_each(|(s, g)| *s += factor * g);
            }
        })
    }

    pub fn tanh(&self) -> Var<'t> {
        let a = self.value();
        let out = Tensor::new(a.shape(), a.data().iter().map(|x| x.tanh()).collect()).expect("same shape");
        let y = Rc::new(out.clone());
        let ia = self.id();
        self.tape().custom("tanh", &[*self], out, move |g, grads| {
            if let Some(s) = grads.slot(ia) {
                for ((s, g), yv) in s.iter_mut().zip(g).zip(y.data()) {
                    *s += g * (1.0 - yv * yv);
                }
            }
        })
    }

    pub fn gelu(&self) -> Var<'t> {
        let a = self.value();
        let out = Tensor::new(a.shape(), a.data().iter().map(|&x| gelu_scalar(x)).collect()).expect("same shape");
        let ia = self.id();
        self.tape().custom("gelu", &[*self], out, move |g, grads| {
            if let Some(s) = grads.slot(ia) {
                for ((s, g), &x) in s.iter_mut().zip(g).zip(a.data()) {
                    *s += g * gelu_derivative(x);
                }
            }
        })
    }

    pub fn sum(&self) -> Var<'t> {
        let a = self.value();
        let total = a.data().iter().sum();
        let ia = self.id();
        self.tape().custom("sum", &[*self], Tensor::scalar(total), move |g, grads| {
            if let Some(s) = grads.slot(ia) {
                s.iter_mut().for_each(|s| *s += g[0]);
            }
        })
    }

    pub fn mean(&self) -> Var<'t> {
        let a = self.value();
        let n = a.numel() as f64;
        let avg = a.data().iter().sum::<f64>() / n;
        let ia = self.id();
        self.tape().custom("mean", &[*self], Tensor::scalar(avg), move |g, grads| {
            if let Some(s) = grads.slot(ia) {
                s.iter_mut().for_each(|s| *s += g[0] / n);
            }
        })
    }

    /// `[M,K] × [K,N] → [M,N]`
    pub fn matmul(&self, other: &Var<'t>) -> Result<Var<'t>, NumericsError> {
        let a = self.value();
        let b = other.value();
        let (m, k) = dims2("matmul", &a)?;
        let (k2, n) = dims2("matmul", &b)?;
        if k != k2 {
            return Err(shape_err(format!("matmul: inner extents {k} and {k2} differ")));
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(a.data(), b.data(), &mut out, m, k, n);
        let out = Tensor::new(&[m, n], out)?;
        let (ia, ib) = (self.id(), other.id());
        Ok(self.tape().custom("matmul", &[*self, *other], out, move |g, grads| {
            if let Some(s) = grads.slot(ia) {
                gemm_a_bt_acc(g, b.data(), s, m, k, n);
            }
            if let Some(s) = grads.slot(ib) {
                gemm_at_b_acc(a.data(), g, s, m, k, n);
            }
        }))
    }

    /// Per-position linear map over the channel axis:
    /// `x[B,D,N], w[E,D] → y[B,E,N]` with `y[b,e,n] = Σ_d w[e,d]·x[b,d,n]`.
    pub fn channel_mix(&self, weight: &Var<'t>) -> Result<Var<'t>, NumericsError> {
        let x = self.value();
        let w = weight.value();
        let (bsz, d, n) = dims3("channel_mix", &x)?;
        let (e, d2) = dims2("channel_mix", &w)?;
        if d != d2 {
            return Err(shape_err(format!(
                "channel_mix: weight expects {d2} input channels, input has {d}"
            )));
        }
        let mut out = vec![0.0; bsz * e * n];
        for b in 0..bsz {
            gemm_acc(w.data(), &x.data()[b * d * n..(b + 1) * d * n], &mut out[b * e * n..(b + 1) * e * n], e, d, n);
        }
        let out = Tensor::new(&[bsz, e, n], out)?;
        let (ix, iw) = (self.id(), weight.id());
        Ok(self.tape().custom("channel_mix", &[*self, *weight], out, move |g, grads| {
            if let Some(s) = grads.slot(ix) {
                for b in 0..bsz {
                    gemm_at_b_acc(w.data(), &g[b * e * n..(b + 1) * e * n], &mut s[b * d * n..(b + 1) * d * n], e, d, n);
                }
            }
            if let Some(s) = grads.slot(iw) {
                for b in 0..bsz {
                    gemm_a_bt_acc(&g[b * e * n..(b + 1) * e * n], &x.data()[b * d * n..(b + 1) * d * n], s, e, d, n);
                }
            }
        }))
    }

    /// Adds `bias[C]` along the last axis of `x[..., C]`.
    pub fn add_bias_last(&self, bias: &Var<'t>) -> Result<Var<'t>, NumericsError> {
        let x = self.value();
        let b = bias.value();
        let c = *x.shape().last().ok_or_else(|| shape_err("add_bias_last: scalar input"))?;
        if b.shape() != [c] {
            return Err(shape_err(format!("add_bias_last: bias {:?} does not match last extent {c}", b.shape())));
        }
        let data = x
            .data()
            .chunks_exact(c)
            .flat_map(|row| row.iter().zip(b.data()).map(|(v, bv)| v + bv))
            .collect();
        let out = Tensor::new(x.shape(), data)?;
        let (ix, ib) = (self.id(), bias.id());
        Ok(self.tape().custom("add_bias_last", &[*self, *bias], out, move |g, grads| {
            grads.accumulate(ix, g);
            if let Some(s) = grads.slot(ib) {
                for row in g.chunks_exact(c) {
                    s.iter_mut().zip(row).for_each(|(s, g)| *s += g);
                }
            }
        }))
    }

    /// Broadcast-adds a per-channel vector to `x[B,D,N]`. `offset` is either
    /// `[D]` (shared across the batch) or `[B,D]` (one row per sequence).
    pub fn add_channel(&self, offset: &Var<'t>) -> Result<Var<'t>, NumericsError> {
        let x = self.value();
        let o = offset.value();
        let (bsz, d, n) = dims3("add_channel", &x)?;
        let per_batch = match *o.shape() {
            [d2] if d2 == d => false,
            [b2, d2] if b2 == bsz && d2 == d => true,
            ref s => return Err(shape_err(format!("add_channel: offset {s:?} incompatible with input [{bsz},{d},{n}]"))),
        };
        let row = move |b: usize, c: usize| if per_batch { b * d + c } else { c };
        let mut data = x.data().to_vec();
        for b in 0..bsz {
            for c in 0..d {
                let v = o.data()[row(b, c)];
                data[(b * d + c) * n..(b * d + c + 1) * n].iter_mut().for_each(|x| *x += v);
            }
        }
        let out = Tensor::new(x.shape(), data)?;
        let (ix, io) = (self.id(), offset.id());
        Ok(self.tape().custom("add_channel", &[*self, *offset], out, move |g, grads| {
            grads.accumulate(ix, g);
            if let Some(s) = grads.slot(io) {
                for b in 0..bsz {
                    for c in 0..d {
                        s[row(b, c)] += g[(b * d + c) * n..(b * d + c + 1) * n].iter().sum::<f64>();
                    }
                }
            }
        }))
    }

    /// Embedding lookup: `table[V,D]`, `ids[L] → [L,D]`.
    pub fn gather_rows(&self, ids: &[u32]) -> Result<Var<'t>, NumericsError> {
        let table = self.value();
        let (v, d) = dims2("gather_rows", &table)?;
        if let Some(&bad) = ids.iter().find(|&&i| i as usize >= v) {
            return Err(NumericsError::IndexOutOfRange { index: bad as usize, bound: v });
        }
        let mut data = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            data.extend_from_slice(&table.data()[i as usize * d..(i as usize + 1) * d]);
        }
        let out = Tensor::new(&[ids.len(), d], data)?;
        let it = self.id();
        let ids = ids.to_vec();
        Ok(self.tape().custom("gather_rows", &[*self], out, move |g, grads| {
            if let Some(s) = grads.slot(it) {
                for (r, &i) in ids.iter().enumerate() {
                    let i = i as usize;
                    s[i * d..(i + 1) * d].iter_mut().zip(&g[r * d..(r + 1) * d]).for_each(|(s, g)| *s += g);
                }
            }
        }))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t>, NumericsError> {
        let out = (*self.value()).clone().reshaped(shape)?;
        let ia = self.id();
        Ok(self.tape().custom("reshape", &[*self], out, move |g, grads| grads.accumulate(ia, g)))
    }

    /// `[A,B,C] → [A,C,B]`
    pub fn transpose_last2(&self) -> Result<Var<'t>, NumericsError> {
        let x = self.value();
        let (a, b, c) = dims3("transpose_last2", &x)?;
        let mut data = vec![0.0; a * b * c];
        for i in 0..a {
            for j in 0..b {
                for k in 0..c {
                    data[(i * c + k) * b + j] = x.data()[(i * b + j) * c + k];
                }
            }
        }
        let out = Tensor::new(&[a, c, b], data)?;
        let ix = self.id();
        Ok(self.tape().custom("transpose_last2", &[*self], out, move |g, grads| {
            if let Some(s) = grads.slot(ix) {
                for i in 0..a {
                    for j in 0..b {
                        for k in 0..c {
                            s[(i * b + j) * c + k] += g[(i * c + k) * b + j];
                        }
                    }
                }
            }
        }))
    }

    /// Concatenates along the last axis; leading extents must agree.
    pub fn concat_last(&self, other: &Var<'t>) -> Result<Var<'t>, NumericsError> {
        let a = self.value();
        let b = other.value();
        let (ra, ca) = split_last(a.shape())?;
        let (rb, cb) = split_last(b.shape())?;
        if ra != rb {
            return Err(shape_err(format!("concat_last: leading shapes {:?} and {:?} differ", a.shape(), b.shape())));
        }
        let rows: usize = ra.iter().product();
        let w = ca + cb;
        let mut data = Vec::with_capacity(rows * w);
        for r in 0..rows {
            data.extend_from_slice(&a.data()[r * ca..(r + 1) * ca]);
            data.extend_from_slice(&b.data()[r * cb..(r + 1) * cb]);
        }
        let mut shape = ra.to_vec();
        shape.push(w);
        let out = Tensor::new(&shape, data)?;
        let (ia, ib) = (self.id(), other.id());
        Ok(self.tape().custom("concat_last", &[*self, *other], out, move |g, grads| {
            if let Some(s) = grads.slot(ia) {
                for r in 0..rows {
                    s[r * ca..(r + 1) * ca].iter_mut().zip(&g[r * w..r * w + ca]).for_each(|(s, g)| *s += g);
                }
            }
            if let Some(s) = grads.slot(ib) {
                for r in 0..rows {
                    s[r * cb..(r + 1) * cb].iter_mut().zip(&g[r * w + ca..(r + 1) * w]).for_each(|(s, g)| *s += g);
                }
            }
        }))
    }

    /// Columns `start..start+len` of the last axis.
    pub fn slice_last(&self, start: usize, len: usize) -> Result<Var<'t>, NumericsError> {
        let a = self.value();
        let (lead, c) = split_last(a.shape())?;
        if start + len > c {
            return Err(shape_err(format!("slice_last: {start}+{len} exceeds extent {c}")));
        }
        let rows: usize = lead.iter().product();
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&a.data()[r * c + start..r * c + start + len]);
        }
        let mut shape = lead.to_vec();
        shape.push(len);
        let out = Tensor::new(&shape, data)?;
        let ia = self.id();
        Ok(self.tape().custom("slice_last", &[*self], out, move |g, grads| {
            if let Some(s) = grads.slot(ia) {
                for r in 0..rows {
                    s[r * c + start..r * c + start + len]
                        .iter_mut()
                        .zip(&g[r * len..(r + 1) * len])
                        .for_each(|(s, g)| *s += g);
                }
            }
        }))
    }

    /// Mean of non-overlapping position pairs: `[B,D,N] → [B,D,N/2]`.
    pub fn avg_pool2(&self) -> Result<Var<'t>, NumericsError> {
        let x = self.value();
        let (bsz, d, n) = dims3("avg_pool2", &x)?;
        if n % 2 != 0 || n == 0 {
            return Err(shape_err(format!("avg_pool2: length {n} is not even")));
        }
        let half = n / 2;
        let data = x.data().chunks_exact(2).map(|p| 0.5 * (p[0] + p[1])).collect();
        let out = Tensor::new(&[bsz, d, half], data)?;
        let ix = self.id();
        Ok(self.tape().custom("avg_pool2", &[*self], out, move |g, grads| {
            if let Some(s) = grads.slot(ix) {
                for (pair, gv) in s.chunks_exact_mut(2).zip(g) {
                    pair[0] += 0.5 * gv;
                    pair[1] += 0.5 * gv;
                }
            }
        }))
    }

    /// Nearest-neighbour repeat of each position: `[B,D,N] → [B,D,2N]`.
    pub fn upsample2(&self) -> Result<Var<'t>, NumericsError> {
        let x = self.value();
        let (bsz, d, n) = dims3("upsample2", &x)?;
        let data = x.data().iter().flat_map(|&v| [v, v]).collect();
        let out = Tensor::new(&[bsz, d, 2 * n], data)?;
        let ix = self.id();
        Ok(self.tape().custom("upsample2", &[*self], out, move |g, grads| {
            if let Some(s) = grads.slot(ix) {
                for (sv, pair) in s.iter_mut().zip(g.chunks_exact(2)) {
                    *sv += pair[0] + pair[1];
                }
            }
        }))
    }
}

fn split_last(shape: &[usize]) -> Result<(&[usize], usize), NumericsError> {
    match shape.split_last() {
        Some((&last, lead)) => Ok((lead, last)),
        None => Err(shape_err("expected a tensor of rank ≥ 1")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tape;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn sum_of_squares_gradient() {
        let tape = Tape::new();
        let x = tape.param(t(&[3], &[1.0, 2.0, 3.0]));
        let loss = x.mul(&x).unwrap().sum();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn using_a_tensor_twice_doubles_its_gradient() {
        let tape = Tape::new();
        let x = tape.param(t(&[2], &[0.3, -0.7]));
        let once = x.sum();
        let twice = x.add(&x).unwrap().sum();
        tape.backward(once).unwrap();
        let g1 = tape.grad(x).unwrap();
        tape.backward(twice).unwrap();
        let g2 = tape.grad(x).unwrap();
        for (a, b) in g1.data().iter().zip(g2.data()) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn matmul_values() {
        let tape = Tape::new();
        let a = tape.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let b = tape.constant(t(&[2, 1], &[1.0, -1.0]));
        assert_eq!(a.matmul(&b).unwrap().value().data(), &[-1.0, -1.0]);
        assert!(b.matmul(&a).is_err());
    }

    #[test]
    fn identity_matmul_is_identity() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::from_fn(&[3, 4], |i| i as f64 * 0.5));
        let eye = tape.constant(Tensor::from_fn(&[4, 4], |i| if i / 4 == i % 4 { 1.0 } else { 0.0 }));
        assert_eq!(x.matmul(&eye).unwrap().value().data(), x.value().data());
    }

    #[test]
    fn channel_mix_identity_and_zero() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::from_fn(&[2, 3, 4], |i| i as f64));
        let eye = tape.constant(Tensor::from_fn(&[3, 3], |i| if i / 3 == i % 3 { 1.0 } else { 0.0 }));
        assert_eq!(x.channel_mix(&eye).unwrap().value().data(), x.value().data());
        let zero = tape.constant(Tensor::zeros(&[5, 3]));
        let y = x.channel_mix(&zero).unwrap();
        assert_eq!(y.shape(), vec![2, 5, 4]);
        assert!(y.value().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pool_and_upsample_values() {
        let tape = Tape::new();
        let x = tape.constant(t(&[1, 1, 4], &[1.0, 3.0, 5.0, 9.0]));
        assert_eq!(x.avg_pool2().unwrap().value().data(), &[2.0, 7.0]);
        assert_eq!(x.upsample2().unwrap().value().data(), &[1.0, 1.0, 3.0, 3.0, 5.0, 5.0, 9.0, 9.0]);
        let odd = tape.constant(Tensor::zeros(&[1, 1, 3]));
        assert!(odd.avg_pool2().is_err());
    }

    #[test]
    fn gather_rows_and_bounds() {
        let tape = Tape::new();
        let table = tape.param(t(&[3, 2], &[0.0, 1.0, 10.0, 11.0, 20.0, 21.0]));
        let rows = table.gather_rows(&[2, 0, 2]).unwrap();
        assert_eq!(rows.value().data(), &[20.0, 21.0, 0.0, 1.0, 20.0, 21.0]);
        tape.backward(rows.sum()).unwrap();
        assert_eq!(tape.grad(table).unwrap().data(), &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
        assert!(matches!(
            table.gather_rows(&[3]),
            Err(NumericsError::IndexOutOfRange { index: 3, bound: 3 })
        ));
    }

    #[test]
    fn concat_then_slice_recovers_parts() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::from_fn(&[2, 3], |i| i as f64));
        let b = tape.constant(Tensor::from_fn(&[2, 2], |i| 100.0 + i as f64));
        let c = a.concat_last(&b).unwrap();
        assert_eq!(c.shape(), vec![2, 5]);
        assert_eq!(c.slice_last(0, 3).unwrap().value().data(), a.value().data());
        assert_eq!(c.slice_last(3, 2).unwrap().value().data(), b.value().data());
        assert!(c.slice_last(4, 2).is_err());
    }

    #[test]
    fn add_channel_broadcasts() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[2, 2, 3]));
        let shared = tape.constant(t(&[2], &[1.0, 2.0]));
        assert_eq!(
            x.add_channel(&shared).unwrap().value().data(),
            &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0]
        );
        let per = tape.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        assert_eq!(
            x.add_channel(&per).unwrap().value().data(),
            &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 3.0, 3.0, 3.0, 4.0, 4.0, 4.0]
        );
        let bad = tape.constant(Tensor::zeros(&[3]));
        assert!(x.add_channel(&bad).is_err());
    }

    #[test]
    fn gelu_zero_and_limits() {
        assert_eq!(gelu_scalar(0.0), 0.0);
        assert!((gelu_scalar(10.0) - 10.0).abs() < 1e-12);
        assert!(gelu_scalar(-10.0).abs() < 1e-12);
    }

    #[test]
    fn transpose_round_trip() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::from_fn(&[2, 3, 4], |i| i as f64));
        let y = x.transpose_last2().unwrap();
        assert_eq!(y.shape(), vec![2, 4, 3]);
        assert_eq!(y.value().data()[1], 4.0);
        assert_eq!(y.transpose_last2().unwrap().value().data(), x.value().data());
    }
}
