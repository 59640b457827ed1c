//! 2-D convolution over `[H, W, C]` images (optionally batched as
//! `[B, H, W, C]`), lowered to a single GEMM through im2col.

use crate::error::{invalid, mismatch, Result};
use crate::gemm::{gemm, Op};
use crate::tensor::{LayerGradient, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    /// Zero padding added on every border.
    pub padding: usize,
}

impl ConvGeometry {
    pub fn valid(stride: usize) -> Self {
        Self { stride, padding: 0 }
    }
}

/// Output extent of one spatial axis, or `None` when the kernel does not fit.
pub fn conv_output_extent(input: usize, kernel: usize, geom: ConvGeometry) -> Option<usize> {
    let padded = input + 2 * geom.padding;
    if geom.stride == 0 || kernel == 0 || kernel > padded {
        return None;
    }
    Some((padded - kernel) / geom.stride + 1)
}

struct Dims {
    batch: usize,
    h: usize,
    w: usize,
    cin: usize,
    kh: usize,
    kw: usize,
    cout: usize,
    oh: usize,
    ow: usize,
    batched: bool,
}

fn check(input: &Tensor, kernels: &Tensor, geom: ConvGeometry) -> Result<Dims> {
    let (batch, h, w, cin, batched) = match *input.shape() {
        [h, w, c] => (1, h, w, c, false),
        [b, h, w, c] => (b, h, w, c, true),
        ref s => {
            return Err(mismatch("conv2d", "input [H, W, C] or [B, H, W, C]", format!("{s:?}")));
        }
    };
    let [kh, kw, kcin, cout] = *kernels.shape() else {
        return Err(mismatch(
            "conv2d",
            "kernels [Kh, Kw, Cin, Cout]",
            format!("{:?}", kernels.shape()),
        ));
    };
    if kcin != cin {
        return Err(mismatch("conv2d", format!("kernel Cin = {cin}"), format!("{kcin}")));
    }
    if geom.stride == 0 {
        return Err(invalid("conv2d", "stride must be positive"));
    }
    let oh = conv_output_extent(h, kh, geom).ok_or_else(|| {
        mismatch("conv2d", format!("kernel height <= {}", h + 2 * geom.padding), format!("{kh}"))
    })?;
    let ow = conv_output_extent(w, kw, geom).ok_or_else(|| {
        mismatch("conv2d", format!("kernel width <= {}", w + 2 * geom.padding), format!("{kw}"))
    })?;
    Ok(Dims {
        batch,
        h,
        w,
        cin,
        kh,
        kw,
        cout,
        oh,
        ow,
        batched,
    })
}

fn im2col(input: &[f64], d: &Dims, geom: ConvGeometry) -> Vec<f64> {
    let k = d.kh * d.kw * d.cin;
    let rows = d.batch * d.oh * d.ow;
    let mut col = vec![0.0; rows * k];
    let pad = geom.padding as isize;
    for b in 0..d.batch {
        let img = &input[b * d.h * d.w * d.cin..(b + 1) * d.h * d.w * d.cin];
        for oy in 0..d.oh {
            for ox in 0..d.ow {
                let row = (b * d.oh + oy) * d.ow + ox;
                let dst = &mut col[row * k..(row + 1) * k];
                for ky in 0..d.kh {
                    let iy = (oy * geom.stride + ky) as isize - pad;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    for kx in 0..d.kw {
                        let ix = (ox * geom.stride + kx) as isize - pad;
                        if ix < 0 || ix >= d.w as isize {
                            continue;
                        }
                        let src = (iy as usize * d.w + ix as usize) * d.cin;
                        let off = (ky * d.kw + kx) * d.cin;
                        dst[off..off + d.cin].copy_from_slice(&img[src..src + d.cin]);
                    }
                }
            }
        }
    }
    col
}

fn col2im(col: &[f64], d: &Dims, geom: ConvGeometry) -> Vec<f64> {
    let k = d.kh * d.kw * d.cin;
    let mut out = vec![0.0; d.batch * d.h * d.w * d.cin];
    let pad = geom.padding as isize;
    for b in 0..d.batch {
        let img = &mut out[b * d.h * d.w * d.cin..(b + 1) * d.h * d.w * d.cin];
        for oy in 0..d.oh {
            for ox in 0..d.ow {
                let row = (b * d.oh + oy) * d.ow + ox;
                let src = &col[row * k..(row + 1) * k];
                for ky in 0..d.kh {
                    let iy = (oy * geom.stride + ky) as isize - pad;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    for kx in 0..d.kw {
                        let ix = (ox * geom.stride + kx) as isize - pad;
                        if ix < 0 || ix >= d.w as isize {
                            continue;
                        }
                        let dst = (iy as usize * d.w + ix as usize) * d.cin;
                        let off = (ky * d.kw + kx) * d.cin;
                        for c in 0..d.cin {
                            img[dst + c] += src[off + c];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Linear convolution; callers apply the activation themselves.
pub fn conv2d(input: &Tensor, kernels: &Tensor, bias: &Tensor, geom: ConvGeometry) -> Result<Tensor> {
    let d = check(input, kernels, geom)?;
    if bias.shape() != [d.cout] {
        return Err(mismatch("conv2d", format!("bias [{}]", d.cout), format!("{:?}", bias.shape())));
    }
    let col = im2col(input.data(), &d, geom);
    let rows = d.batch * d.oh * d.ow;
    let k = d.kh * d.kw * d.cin;
    let mut out = vec![0.0; rows * d.cout];
    for r in 0..rows {
        out[r * d.cout..(r + 1) * d.cout].copy_from_slice(bias.data());
    }
    gemm(rows, k, d.cout, &col, Op::None, kernels.data(), Op::None, 1.0, &mut out);
    let shape: Vec<usize> = if d.batched {
        vec![d.batch, d.oh, d.ow, d.cout]
    } else {
        vec![d.oh, d.ow, d.cout]
    };
    Tensor::new(&shape, out)
}

/// Gradients of [`conv2d`]. `param_grads` holds `[kernels, bias]`.
pub fn conv2d_backward(
    input: &Tensor,
    kernels: &Tensor,
    geom: ConvGeometry,
    grad_output: &Tensor,
    need_input_grad: bool,
) -> Result<LayerGradient> {
    let d = check(input, kernels, geom)?;
    let rows = d.batch * d.oh * d.ow;
    let k = d.kh * d.kw * d.cin;
    if grad_output.len() != rows * d.cout {
        return Err(mismatch(
            "conv2d_backward",
            format!("{} output gradients", rows * d.cout),
            format!("{:?}", grad_output.shape()),
        ));
    }
    let col = im2col(input.data(), &d, geom);
    let gy = grad_output.data();

    let mut dk = vec![0.0; k * d.cout];
    gemm(k, rows, d.cout, &col, Op::Trans, gy, Op::None, 0.0, &mut dk);

    let mut db = vec![0.0; d.cout];
    for r in 0..rows {
        for (acc, g) in db.iter_mut().zip(&gy[r * d.cout..(r + 1) * d.cout]) {
            *acc += g;
        }
    }

    let input_grad = if need_input_grad {
        let mut dcol = vec![0.0; rows * k];
        gemm(rows, d.cout, k, gy, Op::None, kernels.data(), Op::Trans, 0.0, &mut dcol);
        Some(Tensor::new(input.shape(), col2im(&dcol, &d, geom))?)
    } else {
        None
    };

    Ok(LayerGradient {
        param_grads: vec![
            Tensor::new(kernels.shape(), dk)?,
            Tensor::new(&[d.cout], db)?,
        ],
        input_grad,
    })
}
