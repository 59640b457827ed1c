//! Dual-branch convolutional encoder feeding an action-conditioned LSTM.
//!
//! Each used image stack passes through its own conv branch; the flattened
//! maps are concatenated (ground first), optionally dropped out, and
//! projected to `2·Dh` values. The first half through `tanh` is the initial
//! hidden state and the second half is the initial cell state. Every rollout
//! step embeds one steering action, advances the LSTM and classifies the
//! hidden state.

use offroad_nn::{
    conv2d, conv2d_backward, dense, dense_backward, dropout, dropout_backward, lstm_step, lstm_step_backward, relu,
    relu_backward, softmax, softmax_cross_entropy_batch, LstmCache, LstmParams, Tensor,
};
use rand::Rng;

use crate::error::{invalid, CoreError, Result};
use crate::net::arch::Architecture;
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    /// `[K, K, Cin, Cout]`
    pub kernels: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerrainNet {
    pub arch: Architecture,
    /// Empty when the input mode drops the ground view.
    pub ground: Vec<ConvLayer>,
    /// Empty when the input mode drops the aerial view.
    pub aerial: Vec<ConvLayer>,
    /// `[F, 2·Dh]`
    pub fusion_w: Tensor,
    pub fusion_b: Tensor,
    /// `[1, Din]`
    pub embed_w: Tensor,
    pub embed_b: Tensor,
    pub lstm: LstmParams,
    /// `[Dh, |C|]`
    pub head_w: Tensor,
    pub head_b: Tensor,
}

/// A batch of stacked image histories, `[B, H, W, 3·M]` each, values in
/// `[0, 1]`, frames oldest first. A stack may be absent when the input mode
/// ignores that view.
#[derive(Debug, Clone)]
pub struct ObservationBatch {
    pub ground: Option<Tensor>,
    pub aerial: Option<Tensor>,
}

impl ObservationBatch {
    pub fn len(&self) -> usize {
        self.ground.as_ref().or(self.aerial.as_ref()).map_or(0, |t| t.shape()[0])
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-step class distributions, one `[B, |C|]` tensor per horizon step.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub probs: Vec<Tensor>,
}

impl Rollout {
    /// Distribution rows of batch item `b` as `H` vectors.
    pub fn item(&self, b: usize) -> Vec<Vec<f64>> {
        self.probs.iter().map(|p| p.row(b).to_vec()).collect()
    }
}

fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))
}

impl TerrainNet {
    /// Fan-in scaled uniform weights (He bound for ReLU layers, LeCun bound
    /// otherwise) and zero biases.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = stream(seed, "init", 0);
        let cin0 = arch.input_channels();
        let branch = |used: bool, rng: &mut _| -> Vec<ConvLayer> {
            if !used {
                return Vec::new();
            }
            let mut cin = cin0;
            arch.conv
                .iter()
                .map(|l| {
                    let fan_in = (l.kernel * l.kernel * cin) as f64;
                    let layer = ConvLayer {
                        kernels: uniform(&[l.kernel, l.kernel, cin, l.channels], (6.0 / fan_in).sqrt(), rng),
                        bias: Tensor::zeros(&[l.channels]),
                    };
                    cin = l.channels;
                    layer
                })
                .collect()
        };
        let ground = branch(arch.mode.uses_ground(), &mut rng);
        let aerial = branch(arch.mode.uses_aerial(), &mut rng);
        let f = arch.feature_dim()?;
        let (dh, din, c) = (arch.hidden, arch.action_embed, arch.num_classes);
        Ok(Self {
            arch: arch.clone(),
            ground,
            aerial,
            fusion_w: uniform(&[f, 2 * dh], (3.0 / f as f64).sqrt(), &mut rng),
            fusion_b: Tensor::zeros(&[2 * dh]),
            embed_w: uniform(&[1, din], 6f64.sqrt(), &mut rng),
            embed_b: Tensor::zeros(&[din]),
            lstm: LstmParams {
                w_input: uniform(&[din, 4 * dh], (3.0 / din as f64).sqrt(), &mut rng),
                w_hidden: uniform(&[dh, 4 * dh], (3.0 / dh as f64).sqrt(), &mut rng),
                bias: Tensor::zeros(&[4 * dh]),
            },
            head_w: uniform(&[dh, c], (3.0 / dh as f64).sqrt(), &mut rng),
            head_b: Tensor::zeros(&[c]),
        })
    }

    /// Parameters in declaration order, with stable names.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (prefix, branch) in [("ground", &self.ground), ("aerial", &self.aerial)] {
            for (i, l) in branch.iter().enumerate() {
                out.push((format!("{prefix}.conv{i}.kernels"), &l.kernels));
                out.push((format!("{prefix}.conv{i}.bias"), &l.bias));
            }
        }
        out.push(("fusion.weight".into(), &self.fusion_w));
        out.push(("fusion.bias".into(), &self.fusion_b));
        out.push(("embed.weight".into(), &self.embed_w));
        out.push(("embed.bias".into(), &self.embed_b));
        out.push(("lstm.w_input".into(), &self.lstm.w_input));
        out.push(("lstm.w_hidden".into(), &self.lstm.w_hidden));
        out.push(("lstm.bias".into(), &self.lstm.bias));
        out.push(("head.weight".into(), &self.head_w));
        out.push(("head.bias".into(), &self.head_b));
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    /// Same order as [`named_tensors`](Self::named_tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in self.ground.iter_mut().chain(self.aerial.iter_mut()) {
            out.push(&mut l.kernels);
            out.push(&mut l.bias);
        }
        out.extend([
            &mut self.fusion_w,
            &mut self.fusion_b,
            &mut self.embed_w,
            &mut self.embed_b,
            &mut self.lstm.w_input,
            &mut self.lstm.w_hidden,
            &mut self.lstm.bias,
            &mut self.head_w,
            &mut self.head_b,
        ]);
        out
    }

    /// Regularised tensors: everything except biases.
    pub fn is_weight(name: &str) -> bool {
        !name.ends_with("bias")
    }

    pub fn weight_norm_sq(&self) -> f64 {
        self.named_tensors()
            .into_iter()
            .filter(|(n, _)| Self::is_weight(n))
            .map(|(_, t)| t.sum_squares())
            .sum()
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn check_stack(&self, t: Option<&Tensor>, hw: (usize, usize), what: &str) -> Result<usize> {
        let t = t.ok_or_else(|| invalid(format!("{what} stack required by input mode {}", self.arch.mode)))?;
        let expect = [hw.0, hw.1, self.arch.input_channels()];
        match t.shape() {
            [b, rest @ ..] if rest == expect => Ok(*b),
            s => Err(invalid(format!("{what} stack has shape {s:?}, expected [B, {}, {}, {}]", expect[0], expect[1], expect[2]))),
        }
    }

    fn batch_size(&self, obs: &ObservationBatch) -> Result<usize> {
        let mut b = None;
        if self.arch.mode.uses_ground() {
            b = Some(self.check_stack(obs.ground.as_ref(), self.arch.ground_hw, "ground")?);
        }
        if self.arch.mode.uses_aerial() {
            let ba = self.check_stack(obs.aerial.as_ref(), self.arch.aerial_hw, "aerial")?;
            if b.is_some_and(|g| g != ba) {
                return Err(invalid("ground and aerial batches differ in size"));
            }
            b = Some(ba);
        }
        let b = b.unwrap_or(0);
        if b == 0 {
            return Err(invalid("empty observation batch"));
        }
        Ok(b)
    }
}

struct BranchCache {
    /// Input of every layer.
    inputs: Vec<Tensor>,
    /// ReLU output of every layer.
    outputs: Vec<Tensor>,
}

fn branch_forward(layers: &[ConvLayer], arch: &Architecture, x: &Tensor) -> Result<BranchCache> {
    let mut inputs = Vec::with_capacity(layers.len());
    let mut outputs = Vec::with_capacity(layers.len());
    let mut cur = x.clone();
    for (l, spec) in layers.iter().zip(&arch.conv) {
        let z = conv2d(&cur, &l.kernels, &l.bias, spec.geometry())?;
        let a = relu(&z);
        inputs.push(std::mem::replace(&mut cur, a.clone()));
        outputs.push(a);
    }
    Ok(BranchCache { inputs, outputs })
}

fn branch_backward(
    layers: &[ConvLayer],
    arch: &Architecture,
    cache: &BranchCache,
    grad_out: Tensor,
    grads: &mut [ConvLayer],
) -> Result<()> {
    let mut g = grad_out;
    for i in (0..layers.len()).rev() {
        let gz = relu_backward(&cache.outputs[i], &g)?;
        let lg = conv2d_backward(&cache.inputs[i], &layers[i].kernels, arch.conv[i].geometry(), &gz, i > 0)?;
        let mut pg = lg.param_grads.into_iter();
        grads[i].kernels = pg.next().unwrap();
        grads[i].bias = pg.next().unwrap();
        if let Some(ig) = lg.input_grad {
            g = ig;
        }
    }
    Ok(())
}

/// Forward state kept for the backward pass.
pub struct EncodeCache {
    ground: Option<BranchCache>,
    aerial: Option<BranchCache>,
    ground_features: usize,
    dropped: Tensor,
    mask: Option<Tensor>,
    h0: Tensor,
}

struct StepCache {
    action: Tensor,
    embed: Tensor,
    lstm: LstmCache,
    h: Tensor,
}

fn split_columns(y: &Tensor, at: usize) -> Result<(Tensor, Tensor)> {
    let [rows, cols] = *y.shape() else {
        return Err(invalid("expected a matrix"));
    };
    let mut a = Vec::with_capacity(rows * at);
    let mut b = Vec::with_capacity(rows * (cols - at));
    for r in 0..rows {
        a.extend_from_slice(&y.row(r)[..at]);
        b.extend_from_slice(&y.row(r)[at..]);
    }
    Ok((Tensor::new(&[rows, at], a)?, Tensor::new(&[rows, cols - at], b)?))
}

fn join_columns(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let rows = a.shape()[0];
    let (ca, cb) = (a.len() / rows, b.len() / rows);
    let mut out = Vec::with_capacity(rows * (ca + cb));
    for r in 0..rows {
        out.extend_from_slice(&a.data()[r * ca..(r + 1) * ca]);
        out.extend_from_slice(&b.data()[r * cb..(r + 1) * cb]);
    }
    Ok(Tensor::new(&[rows, ca + cb], out)?)
}

impl TerrainNet {
    /// Initial recurrent state `(h0, c0)`, each `[B, Dh]`.
    pub fn encode(
        &self,
        obs: &ObservationBatch,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<(Tensor, Tensor, EncodeCache)> {
        let b = self.batch_size(obs)?;
        let ground = match (&obs.ground, self.arch.mode.uses_ground()) {
            (Some(x), true) => Some(branch_forward(&self.ground, &self.arch, x)?),
            _ => None,
        };
        let aerial = match (&obs.aerial, self.arch.mode.uses_aerial()) {
            (Some(x), true) => Some(branch_forward(&self.aerial, &self.arch, x)?),
            _ => None,
        };
        let flat = |c: &Option<BranchCache>| -> Result<Option<Tensor>> {
            c.as_ref()
                .map(|c| {
                    let last = c.outputs.last().unwrap();
                    last.clone().reshape(&[b, last.len() / b]).map_err(CoreError::from)
                })
                .transpose()
        };
        let (fg, fa) = (flat(&ground)?, flat(&aerial)?);
        let ground_features = fg.as_ref().map_or(0, |t| t.len() / b);
        let features = match (fg, fa) {
            (Some(g), Some(a)) => join_columns(&g, &a)?,
            (Some(g), None) => g,
            (None, Some(a)) => a,
            (None, None) => return Err(invalid("no input branch")),
        };
        let d = dropout(&features, self.arch.dropout, rng, training)?;
        let y = dense(&d.output, &self.fusion_w, &self.fusion_b)?;
        let (hp, c0) = split_columns(&y, self.arch.hidden)?;
        let h0 = offroad_nn::tanh(&hp);
        let cache = EncodeCache {
            ground,
            aerial,
            ground_features,
            dropped: d.output,
            mask: d.mask,
            h0: h0.clone(),
        };
        Ok((h0, c0, cache))
    }

    fn rollout_from(&self, h0: Tensor, c0: Tensor, actions: &Tensor) -> Result<(Vec<Tensor>, Vec<StepCache>)> {
        let [b, h] = *actions.shape() else {
            return Err(invalid(format!("actions must be [B, H], got {:?}", actions.shape())));
        };
        if h != self.arch.horizon {
            return Err(invalid(format!("expected {} actions per rollout, got {h}", self.arch.horizon)));
        }
        if h0.shape()[0] != b {
            return Err(invalid(format!("{} initial states for {b} action sequences", h0.shape()[0])));
        }
        let (mut hs, mut cs) = (h0, c0);
        let mut logits = Vec::with_capacity(h);
        let mut caches = Vec::with_capacity(h);
        for i in 0..h {
            let a = Tensor::from_fn(&[b, 1], |r| actions.data()[r * h + i]);
            let e = relu(&dense(&a, &self.embed_w, &self.embed_b)?);
            let (hn, cn, lc) = lstm_step(&e, &hs, &cs, &self.lstm)?;
            logits.push(dense(&hn, &self.head_w, &self.head_b)?);
            caches.push(StepCache {
                action: a,
                embed: e,
                lstm: lc,
                h: hn.clone(),
            });
            hs = hn;
            cs = cn;
        }
        Ok((logits, caches))
    }

    /// Class distributions for `actions` (`[B, H]`) from the observations.
    pub fn predict(&self, obs: &ObservationBatch, actions: &Tensor, training: bool, rng: &mut impl Rng) -> Result<Rollout> {
        let (h0, c0, _) = self.encode(obs, training, rng)?;
        self.predict_from_state(&h0, &c0, actions)
    }

    /// Rolls out `K` action sequences from one encoded state, which is
    /// shared across rows. `h0` and `c0` are `[1, Dh]`.
    pub fn predict_from_state(&self, h0: &Tensor, c0: &Tensor, actions: &Tensor) -> Result<Rollout> {
        let k = actions.shape()[0];
        let tile = |t: &Tensor| -> Result<Tensor> {
            if t.shape()[0] == k {
                return Ok(t.clone());
            }
            if t.shape()[0] != 1 {
                return Err(invalid("initial state must have one row or one row per rollout"));
            }
            let row = t.row(0);
            Ok(Tensor::from_fn(&[k, row.len()], |i| row[i % row.len()]))
        };
        let (logits, _) = self.rollout_from(tile(h0)?, tile(c0)?, actions)?;
        Ok(Rollout {
            probs: logits.iter().map(softmax).collect(),
        })
    }
}

/// Loss and gradients for one batch.
pub struct LossOutput {
    /// Mean over items of the summed per-step cross-entropy.
    pub cross_entropy: f64,
    /// `cross_entropy + λ‖w‖²`.
    pub loss: f64,
    pub grads: TerrainNet,
    /// Per-step argmax predictions `[B][H]`.
    pub predictions: Vec<Vec<usize>>,
}

impl TerrainNet {
    /// Batch-averaged summed cross-entropy over the horizon plus L2 on the
    /// weights, with gradients for every parameter.
    pub fn batch_loss(
        &self,
        obs: &ObservationBatch,
        actions: &Tensor,
        labels: &[Vec<usize>],
        l2: f64,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<LossOutput> {
        let (h0, c0, enc) = self.encode(obs, training, rng)?;
        let b = h0.shape()[0];
        if labels.len() != b || labels.iter().any(|l| l.len() != self.arch.horizon) {
            return Err(invalid(format!("need {b} label sequences of length {}", self.arch.horizon)));
        }
        let (logits, steps) = self.rollout_from(h0, c0, actions)?;
        let hz = self.arch.horizon;
        let mut ce = 0.0;
        let mut predictions = vec![vec![0; hz]; b];
        let mut grad_logits = Vec::with_capacity(hz);
        for (i, lg) in logits.iter().enumerate() {
            let step_labels: Vec<usize> = labels.iter().map(|l| l[i]).collect();
            let (losses, probs, mut g) = softmax_cross_entropy_batch(lg, &step_labels)?;
            ce += losses.iter().sum::<f64>();
            for (r, pred) in predictions.iter_mut().enumerate() {
                let row = probs.row(r);
                pred[i] = (0..row.len()).fold(0, |best, j| if row[j] > row[best] { j } else { best });
            }
            g.scale(1.0 / b as f64);
            grad_logits.push(g);
        }
        ce /= b as f64;
        let loss = ce + l2 * self.weight_norm_sq();
        if !loss.is_finite() {
            return Err(CoreError::Training {
                step: 0,
                reason: format!("non-finite loss {loss}"),
            });
        }

        let mut grads = self.zeros_like();
        let dh = self.arch.hidden;
        let mut dh_next = Tensor::zeros(&[b, dh]);
        let mut dc_next = Tensor::zeros(&[b, dh]);
        for i in (0..hz).rev() {
            let st = &steps[i];
            let head = dense_backward(&st.h, &self.head_w, &grad_logits[i], true)?;
            grads.head_w.add_scaled(&head.param_grads[0], 1.0);
            grads.head_b.add_scaled(&head.param_grads[1], 1.0);
            let mut dh_total = head.input_grad.unwrap();
            dh_total.add_scaled(&dh_next, 1.0);
            let lg = lstm_step_backward(&st.lstm, &self.lstm, &dh_total, &dc_next)?;
            grads.lstm.w_input.add_scaled(&lg.params.w_input, 1.0);
            grads.lstm.w_hidden.add_scaled(&lg.params.w_hidden, 1.0);
            grads.lstm.bias.add_scaled(&lg.params.bias, 1.0);
            let de = relu_backward(&st.embed, &lg.x)?;
            let eg = dense_backward(&st.action, &self.embed_w, &de, false)?;
            grads.embed_w.add_scaled(&eg.param_grads[0], 1.0);
            grads.embed_b.add_scaled(&eg.param_grads[1], 1.0);
            dh_next = lg.h;
            dc_next = lg.c;
        }

        let dhp = offroad_nn::tanh_backward(&enc.h0, &dh_next)?;
        let dy = join_columns(&dhp, &dc_next)?;
        let fg = dense_backward(&enc.dropped, &self.fusion_w, &dy, true)?;
        let mut pg = fg.param_grads.into_iter();
        grads.fusion_w = pg.next().unwrap();
        grads.fusion_b = pg.next().unwrap();
        let dfeat = dropout_backward(enc.mask.as_ref(), &fg.input_grad.unwrap())?;
        let (dg, da) = match (&enc.ground, &enc.aerial) {
            (Some(_), Some(_)) => {
                let (g, a) = split_columns(&dfeat, enc.ground_features)?;
                (Some(g), Some(a))
            }
            (Some(_), None) => (Some(dfeat), None),
            _ => (None, Some(dfeat)),
        };
        for (cache, grad, layers, out) in [
            (&enc.ground, dg, &self.ground, &mut grads.ground),
            (&enc.aerial, da, &self.aerial, &mut grads.aerial),
        ] {
            if let (Some(c), Some(g)) = (cache, grad) {
                let shape = c.outputs.last().unwrap().shape().to_vec();
                branch_backward(layers, &self.arch, c, g.reshape(&shape)?, out)?;
            }
        }

        if l2 != 0.0 {
            let weights: Vec<bool> = self.named_tensors().iter().map(|(n, _)| Self::is_weight(n)).collect();
            for ((g, w), is_w) in grads.tensors_mut().into_iter().zip(self.tensors()).zip(weights) {
                if is_w {
                    g.add_scaled(w, 2.0 * l2);
                }
            }
        }
        Ok(LossOutput {
            cross_entropy: ce,
            loss,
            grads,
            predictions,
        })
    }
}
