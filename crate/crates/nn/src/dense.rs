use crate::error::{mismatch, Result};
use crate::gemm::{gemm, Op};
use crate::tensor::{LayerGradient, Tensor};

fn rows_of(op: &'static str, x: &Tensor, din: usize) -> Result<usize> {
    match *x.shape() {
        [n] if n == din => Ok(1),
        [b, n] if n == din => Ok(b),
        ref s => Err(mismatch(op, format!("input [{din}] or [B, {din}]"), format!("{s:?}"))),
    }
}

/// Affine map `x · weight + bias` for `x` of shape `[Din]` or `[B, Din]`.
pub fn dense(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let [din, dout] = *weight.shape() else {
        return Err(mismatch("dense", "weight [Din, Dout]", format!("{:?}", weight.shape())));
    };
    if bias.shape() != [dout] {
        return Err(mismatch("dense", format!("bias [{dout}]"), format!("{:?}", bias.shape())));
    }
    let rows = rows_of("dense", x, din)?;
    let mut out = Vec::with_capacity(rows * dout);
    for _ in 0..rows {
        out.extend_from_slice(bias.data());
    }
    gemm(rows, din, dout, x.data(), Op::None, weight.data(), Op::None, 1.0, &mut out);
    let shape: Vec<usize> = if x.rank() == 1 { vec![dout] } else { vec![rows, dout] };
    Tensor::new(&shape, out)
}

/// Gradients of [`dense`]; `param_grads` holds `[weight, bias]`.
pub fn dense_backward(
    x: &Tensor,
    weight: &Tensor,
    grad_output: &Tensor,
    need_input_grad: bool,
) -> Result<LayerGradient> {
    let [din, dout] = *weight.shape() else {
        return Err(mismatch("dense_backward", "weight [Din, Dout]", format!("{:?}", weight.shape())));
    };
    let rows = rows_of("dense_backward", x, din)?;
    if grad_output.len() != rows * dout {
        return Err(mismatch(
            "dense_backward",
            format!("{} output gradients", rows * dout),
            format!("{:?}", grad_output.shape()),
        ));
    }
    let gy = grad_output.data();
    let mut dw = vec![0.0; din * dout];
    gemm(din, rows, dout, x.data(), Op::Trans, gy, Op::None, 0.0, &mut dw);
    let mut db = vec![0.0; dout];
    for r in 0..rows {
        for (acc, g) in db.iter_mut().zip(&gy[r * dout..(r + 1) * dout]) {
            *acc += g;
        }
    }
    let input_grad = if need_input_grad {
        let mut dx = vec![0.0; rows * din];
        gemm(rows, dout, din, gy, Op::None, weight.data(), Op::Trans, 0.0, &mut dx);
        Some(Tensor::new(x.shape(), dx)?)
    } else {
        None
    };
    Ok(LayerGradient {
        param_grads: vec![Tensor::new(weight.shape(), dw)?, Tensor::new(&[dout], db)?],
        input_grad,
    })
}
