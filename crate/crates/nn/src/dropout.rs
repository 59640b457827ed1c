use rand::Rng;

use crate::error::{invalid, mismatch, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct DropoutOutput {
    pub output: Tensor,
    /// Per-element multiplier (`0` or `1 / (1 - rate)`); `None` in inference
    /// mode or when `rate == 0`.
    pub mask: Option<Tensor>,
}

/// Inverted dropout. Identity unless `training` and `rate > 0`.
pub fn dropout<R: Rng + ?Sized>(x: &Tensor, rate: f64, rng: &mut R, training: bool) -> Result<DropoutOutput> {
    if !(0.0..1.0).contains(&rate) {
        return Err(invalid("dropout", format!("rate must lie in [0, 1), got {rate}")));
    }
    if !training || rate == 0.0 {
        return Ok(DropoutOutput {
            output: x.clone(),
            mask: None,
        });
    }
    let keep = 1.0 / (1.0 - rate);
    let mask = Tensor::from_fn(x.shape(), |_| if rng.random::<f64>() < rate { 0.0 } else { keep });
    let mut out = x.clone();
    for (v, m) in out.data_mut().iter_mut().zip(mask.data()) {
        *v *= m;
    }
    Ok(DropoutOutput {
        output: out,
        mask: Some(mask),
    })
}

pub fn dropout_backward(mask: Option<&Tensor>, grad_output: &Tensor) -> Result<Tensor> {
    let Some(mask) = mask else {
        return Ok(grad_output.clone());
    };
    if mask.shape() != grad_output.shape() {
        return Err(mismatch(
            "dropout_backward",
            format!("{:?}", mask.shape()),
            format!("{:?}", grad_output.shape()),
        ));
    }
    let mut g = grad_output.clone();
    for (v, m) in g.data_mut().iter_mut().zip(mask.data()) {
        *v *= m;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_rate_and_inference_are_identity() {
        let x = Tensor::from_fn(&[10], |i| i as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(dropout(&x, 0.0, &mut rng, true).unwrap().output, x);
        assert_eq!(dropout(&x, 0.0, &mut rng, false).unwrap().output, x);
        assert_eq!(dropout(&x, 0.7, &mut rng, false).unwrap().output, x);
    }

    #[test]
    fn rate_out_of_range_rejected() {
        let x = Tensor::zeros(&[3]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(dropout(&x, 1.0, &mut rng, true).is_err());
        assert!(dropout(&x, -0.1, &mut rng, true).is_err());
    }
}
