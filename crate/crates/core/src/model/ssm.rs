//! Diagonal state-space layer realised as a causal depthwise convolution.
//!
//! Per channel, a diagonal real system with `M` states has impulse response
//! `k(n) = Σ_m C_m·A_mⁿ·B_m + D·δ(n)`. The kernel is materialised to a finite
//! length `K` and applied with [`causal_depthwise_conv`]. This is the same
//! map as running `z ← A·z + B·u(n)`, `y(n) = C·z + D·u(n)` position by
//! position from `z = 0` (read-out after the state update), truncated to
//! the last `K` inputs.

use crate::numerics::{causal_depthwise_conv, NumericsError, Tensor, Var};

use super::params::BoundParams;

/// Decays are `MAX_DECAY·tanh(raw)`, so `|A| < 1` for any raw value.
pub const MAX_DECAY: f64 = 0.999;

/// Inverse of the decay squashing map, for initialisation and tests.
pub fn raw_decay(decay: f64) -> f64 {
    (decay / MAX_DECAY).atanh()
}

/// Parameters of one SSM layer over `D` channels with `M` states each.
#[derive(Clone, Copy, Debug)]
pub struct SsmVars<'t> {
    /// `[D,M]` unconstrained; squashed into `(−1, 1)` before use.
    pub decay_raw: Var<'t>,
    /// `[D,M]`
    pub input: Var<'t>,
    /// `[D,M]`
    pub output: Var<'t>,
    /// `[D]` direct feed-through.
    pub skip: Var<'t>,
}

impl<'t> SsmVars<'t> {
    pub fn bind(params: &BoundParams<'t>, prefix: &str) -> Self {
        SsmVars {
            decay_raw: params.get(&format!("{prefix}.decay")),
            input: params.get(&format!("{prefix}.b")),
            output: params.get(&format!("{prefix}.c")),
            skip: params.get(&format!("{prefix}.skip")),
        }
    }

    pub fn decay(&self) -> Var<'t> {
        self.decay_raw.tanh().scale(MAX_DECAY)
    }
}

/// Materialises `k[d,n]` for `n < len` from explicit decays `A[D,M]`.
/// Differentiable in all four inputs.
pub fn ssm_kernel<'t>(
    decay: &Var<'t>,
    input: &Var<'t>,
    output: &Var<'t>,
    skip: &Var<'t>,
    len: usize,
) -> Result<Var<'t>, NumericsError> {
    let a = decay.value();
    let b = input.value();
    let c = output.value();
    let dv = skip.value();
    let (d, m) = match *a.shape() {
        [d, m] => (d, m),
        ref s => return Err(NumericsError::Shape(format!("ssm decay must be [D,M], got {s:?}"))),
    };
    if b.shape() != a.shape() || c.shape() != a.shape() || dv.shape() != [d] {
        return Err(NumericsError::Shape(format!(
            "ssm parameter shapes disagree: A {:?}, B {:?}, C {:?}, D {:?}",
            a.shape(),
            b.shape(),
            c.shape(),
            dv.shape()
        )));
    }
    if len == 0 {
        return Err(NumericsError::Domain("ssm kernel length must be positive".into()));
    }

    let mut k = vec![0.0; d * len];
    for ch in 0..d {
        let row = &mut k[ch * len..(ch + 1) * len];
        for s in 0..m {
            let i = ch * m + s;
            let cb = c.data()[i] * b.data()[i];
            let mut pow = 1.0;
            for slot in row.iter_mut() {
                *slot += cb * pow;
                pow *= a.data()[i];
            }
        }
        row[0] += dv.data()[ch];
    }

    let ids = [decay.id(), input.id(), output.id(), skip.id()];
    let tape = decay.tape();
    Ok(tape.custom(
        "ssm_kernel",
        &[*decay, *input, *output, *skip],
        Tensor::new(&[d, len], k)?,
        move |g, grads| {
            let mut da = vec![0.0; d * m];
            let mut db = vec![0.0; d * m];
            let mut dc = vec![0.0; d * m];
            for ch in 0..d {
                let gr = &g[ch * len..(ch + 1) * len];
                for s in 0..m {
                    let i = ch * m + s;
                    let (av, bv, cv) = (a.data()[i], b.data()[i], c.data()[i]);
                    // Σ_n g_n·Aⁿ and Σ_{n≥1} g_n·n·Aⁿ⁻¹
                    let mut pow = 1.0;
                    let mut dpow = 0.0;
                    let mut s_pow = 0.0;
                    let mut s_dpow = 0.0;
                    for (n, gv) in gr.iter().enumerate() {
                        s_pow += gv * pow;
                        s_dpow += gv * dpow;
                        dpow = (n + 1) as f64 * pow;
                        pow *= av;
                    }
                    da[i] = cv * bv * s_dpow;
                    db[i] = cv * s_pow;
                    dc[i] = bv * s_pow;
                }
            }
            let dskip: Vec<f64> = (0..d).map(|ch| g[ch * len]).collect();
            grads.accumulate(ids[0], &da);
            grads.accumulate(ids[1], &db);
            grads.accumulate(ids[2], &dc);
            grads.accumulate(ids[3], &dskip);
        },
    ))
}

/// `x[B,D,N]` convolved per channel with the layer's length-`kernel_len` kernel.
pub fn ssm_layer<'t>(x: &Var<'t>, p: &SsmVars<'t>, kernel_len: usize) -> Result<Var<'t>, NumericsError> {
    let kernel = ssm_kernel(&p.decay(), &p.input, &p.output, &p.skip, kernel_len)?;
    causal_depthwise_conv(x, &kernel)
}
