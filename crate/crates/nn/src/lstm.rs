//! Single LSTM step, batched over rows.
//!
//! Gate pre-activations are `z = x·Wx + h·Wh + b` with the `4·Dh` columns laid
//! out as `[input, forget, candidate, output]`.

use crate::error::{mismatch, Result};
use crate::gemm::{gemm, Op};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `[Din, 4·Dh]`
    pub w_input: Tensor,
    /// `[Dh, 4·Dh]`
    pub w_hidden: Tensor,
    /// `[4·Dh]`
    pub bias: Tensor,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            w_input: Tensor::zeros(&[input_dim, 4 * hidden_dim]),
            w_hidden: Tensor::zeros(&[hidden_dim, 4 * hidden_dim]),
            bias: Tensor::zeros(&[4 * hidden_dim]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.shape()[0]
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hidden.shape()[0]
    }

    fn validate(&self) -> Result<(usize, usize)> {
        let [din, g] = *self.w_input.shape() else {
            return Err(mismatch("lstm", "w_input [Din, 4Dh]", format!("{:?}", self.w_input.shape())));
        };
        let [dh, g2] = *self.w_hidden.shape() else {
            return Err(mismatch("lstm", "w_hidden [Dh, 4Dh]", format!("{:?}", self.w_hidden.shape())));
        };
        if g != 4 * dh || g2 != 4 * dh || self.bias.shape() != [4 * dh] {
            return Err(mismatch(
                "lstm",
                format!("gate width {}", 4 * dh),
                format!("{:?} / {:?} / {:?}", self.w_input.shape(), self.w_hidden.shape(), self.bias.shape()),
            ));
        }
        Ok((din, dh))
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub struct LstmCache {
    rows: usize,
    x: Tensor,
    h: Tensor,
    c: Tensor,
    /// Post-nonlinearity gates `[rows, 4·Dh]`.
    gates: Vec<f64>,
    tanh_c_next: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmGradient {
    pub x: Tensor,
    pub h: Tensor,
    pub c: Tensor,
    pub params: LstmParams,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn rows_of(t: &Tensor, width: usize, what: &str) -> Result<usize> {
    match *t.shape() {
        [n] if n == width => Ok(1),
        [b, n] if n == width => Ok(b),
        ref s => Err(mismatch("lstm", format!("{what} [{width}] or [B, {width}]"), format!("{s:?}"))),
    }
}

/// One recurrent step. Returns `(h', c', cache)` with the same rank as `x`.
pub fn lstm_step(x: &Tensor, h: &Tensor, c: &Tensor, params: &LstmParams) -> Result<(Tensor, Tensor, LstmCache)> {
    let (din, dh) = params.validate()?;
    let rows = rows_of(x, din, "x")?;
    if rows_of(h, dh, "h")? != rows || rows_of(c, dh, "c")? != rows {
        return Err(mismatch(
            "lstm",
            format!("{rows} rows of width {dh}"),
            format!("h {:?}, c {:?}", h.shape(), c.shape()),
        ));
    }
    let g = 4 * dh;
    let mut z = Vec::with_capacity(rows * g);
    for _ in 0..rows {
        z.extend_from_slice(params.bias.data());
    }
    gemm(rows, din, g, x.data(), Op::None, params.w_input.data(), Op::None, 1.0, &mut z);
    gemm(rows, dh, g, h.data(), Op::None, params.w_hidden.data(), Op::None, 1.0, &mut z);

    let mut c_next = vec![0.0; rows * dh];
    let mut tanh_c = vec![0.0; rows * dh];
    let mut h_next = vec![0.0; rows * dh];
    for r in 0..rows {
        let zr = &mut z[r * g..(r + 1) * g];
        for j in 0..dh {
            zr[j] = sigmoid(zr[j]);
            zr[dh + j] = sigmoid(zr[dh + j]);
            zr[2 * dh + j] = zr[2 * dh + j].tanh();
            zr[3 * dh + j] = sigmoid(zr[3 * dh + j]);
            let cn = zr[dh + j] * c.data()[r * dh + j] + zr[j] * zr[2 * dh + j];
            let tc = cn.tanh();
            c_next[r * dh + j] = cn;
            tanh_c[r * dh + j] = tc;
            h_next[r * dh + j] = zr[3 * dh + j] * tc;
        }
    }
    let shape: Vec<usize> = if x.rank() == 1 { vec![dh] } else { vec![rows, dh] };
    let cache = LstmCache {
        rows,
        x: x.clone(),
        h: h.clone(),
        c: c.clone(),
        gates: z,
        tanh_c_next: tanh_c,
    };
    Ok((Tensor::new(&shape, h_next)?, Tensor::new(&shape, c_next)?, cache))
}

/// Backward through one step given gradients w.r.t. `h'` and `c'`.
pub fn lstm_step_backward(
    cache: &LstmCache,
    params: &LstmParams,
    grad_h_next: &Tensor,
    grad_c_next: &Tensor,
) -> Result<LstmGradient> {
    let (din, dh) = params.validate()?;
    let rows = cache.rows;
    if grad_h_next.len() != rows * dh || grad_c_next.len() != rows * dh {
        return Err(mismatch(
            "lstm_backward",
            format!("{} gradient entries", rows * dh),
            format!("{:?} / {:?}", grad_h_next.shape(), grad_c_next.shape()),
        ));
    }
    let g = 4 * dh;
    let mut dz = vec![0.0; rows * g];
    let mut dc_prev = vec![0.0; rows * dh];
    for r in 0..rows {
        let gates = &cache.gates[r * g..(r + 1) * g];
        let dzr = &mut dz[r * g..(r + 1) * g];
        for j in 0..dh {
            let k = r * dh + j;
            let (i, f, cand, o) = (gates[j], gates[dh + j], gates[2 * dh + j], gates[3 * dh + j]);
            let tc = cache.tanh_c_next[k];
            let dhn = grad_h_next.data()[k];
            let dc = grad_c_next.data()[k] + dhn * o * (1.0 - tc * tc);
            dzr[j] = dc * cand * i * (1.0 - i);
            dzr[dh + j] = dc * cache.c.data()[k] * f * (1.0 - f);
            dzr[2 * dh + j] = dc * i * (1.0 - cand * cand);
            dzr[3 * dh + j] = dhn * tc * o * (1.0 - o);
            dc_prev[k] = dc * f;
        }
    }
    let mut dwx = vec![0.0; din * g];
    gemm(din, rows, g, cache.x.data(), Op::Trans, &dz, Op::None, 0.0, &mut dwx);
    let mut dwh = vec![0.0; dh * g];
    gemm(dh, rows, g, cache.h.data(), Op::Trans, &dz, Op::None, 0.0, &mut dwh);
    let mut db = vec![0.0; g];
    for r in 0..rows {
        for (acc, v) in db.iter_mut().zip(&dz[r * g..(r + 1) * g]) {
            *acc += v;
        }
    }
    let mut dx = vec![0.0; rows * din];
    gemm(rows, g, din, &dz, Op::None, params.w_input.data(), Op::Trans, 0.0, &mut dx);
    let mut dhp = vec![0.0; rows * dh];
    gemm(rows, g, dh, &dz, Op::None, params.w_hidden.data(), Op::Trans, 0.0, &mut dhp);

    Ok(LstmGradient {
        x: Tensor::new(cache.x.shape(), dx)?,
        h: Tensor::new(cache.h.shape(), dhp)?,
        c: Tensor::new(cache.c.shape(), dc_prev)?,
        params: LstmParams {
            w_input: Tensor::new(&[din, g], dwx)?,
            w_hidden: Tensor::new(&[dh, g], dwh)?,
            bias: Tensor::new(&[g], db)?,
        },
    })
}
