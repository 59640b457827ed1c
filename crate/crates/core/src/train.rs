//! Minibatch Adam training of the terrain predictor and validation metrics.

use std::fmt::Write as _;

use offroad_nn::{AdamConfig, AdamState};
use rand::Rng;

use crate::collect::SampleIndex;
use crate::config::TrainConfig;
use crate::dataset::Dataset;
use crate::error::{invalid, CoreError, Result};
use crate::net::TerrainNet;
use crate::rng::stream;

/// Samples scored per forward pass during validation.
const EVAL_CHUNK: usize = 64;

/// Classification accuracy per horizon index, and over the first and second
/// half of the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyTable {
    pub per_step: Vec<f64>,
    pub short: f64,
    pub long: f64,
}

impl AccuracyTable {
    /// Short bucket: indices `0..H/2`; long bucket: the rest.
    pub fn from_per_step(per_step: Vec<f64>) -> Self {
        let split = per_step.len() / 2;
        let mean = |s: &[f64]| if s.is_empty() { 0.0 } else { s.iter().sum::<f64>() / s.len() as f64 };
        Self {
            short: mean(&per_step[..split.max(1).min(per_step.len())]),
            long: mean(&per_step[split..]),
            per_step,
        }
    }
}

/// Accuracy of `predictions` against `labels`, both `[N][H]`.
pub fn accuracy_from_predictions(predictions: &[Vec<usize>], labels: &[Vec<usize>]) -> Result<AccuracyTable> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(invalid("need equally many, and at least one, predictions and labels"));
    }
    let h = labels[0].len();
    if predictions.iter().chain(labels).any(|r| r.len() != h) {
        return Err(invalid("prediction and label rows must share the horizon"));
    }
    let per_step = (0..h)
        .map(|i| predictions.iter().zip(labels).filter(|(p, l)| p[i] == l[i]).count() as f64 / labels.len() as f64)
        .collect();
    Ok(AccuracyTable::from_per_step(per_step))
}

/// Accuracy of always predicting the most frequent label of each horizon
/// index (lowest class on ties).
pub fn majority_baseline(labels: &[Vec<usize>], num_classes: usize) -> Result<AccuracyTable> {
    if labels.is_empty() {
        return Err(invalid("no labels"));
    }
    let h = labels[0].len();
    let predictions: Vec<Vec<usize>> = {
        let majority: Vec<usize> = (0..h)
            .map(|i| {
                let mut counts = vec![0usize; num_classes];
                for l in labels {
                    counts[l[i]] += 1;
                }
                (0..num_classes).fold(0, |best, c| if counts[c] > counts[best] { c } else { best })
            })
            .collect();
        vec![majority; labels.len()]
    };
    accuracy_from_predictions(&predictions, labels)
}

/// Mean summed cross-entropy and accuracy table on `samples`, with
/// dropout off.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub cross_entropy: f64,
    pub accuracy: AccuracyTable,
}

pub fn evaluate(net: &TerrainNet, ds: &Dataset, samples: &[SampleIndex]) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(invalid("evaluation needs at least one sample"));
    }
    let (m, h) = (net.arch.history, net.arch.horizon);
    let mut rng = stream(0, "eval-unused", 0);
    let mut ce = 0.0;
    let mut predictions = Vec::with_capacity(samples.len());
    let mut labels = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_CHUNK) {
        let obs = ds.observation_batch(chunk, m, net.arch.mode);
        let actions = ds.action_batch(chunk, h);
        let y = ds.label_batch(chunk, h)?;
        let out = net.batch_loss(&obs, &actions, &y, 0.0, false, &mut rng)?;
        ce += out.cross_entropy * chunk.len() as f64;
        predictions.extend(out.predictions);
        labels.extend(y);
    }
    Ok(Evaluation {
        cross_entropy: ce / samples.len() as f64,
        accuracy: accuracy_from_predictions(&predictions, &labels)?,
    })
}

/// Shorthand for `evaluate(..).accuracy`.
pub fn horizon_accuracy(net: &TerrainNet, ds: &Dataset, samples: &[SampleIndex]) -> Result<AccuracyTable> {
    Ok(evaluate(net, ds, samples)?.accuracy)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub step: usize,
    /// Mean training loss since the previous point; `None` at step 0.
    pub train_loss: Option<f64>,
    pub val_cross_entropy: f64,
    pub val_accuracy: AccuracyTable,
}

pub struct TrainOutcome {
    pub net: TerrainNet,
    pub optimizer: AdamState,
    pub curve: Vec<CurvePoint>,
}

/// Evenly spaced subset of at most `n` samples.
pub fn eval_subset(samples: &[SampleIndex], n: usize) -> Vec<SampleIndex> {
    if samples.len() <= n {
        return samples.to_vec();
    }
    (0..n).map(|i| samples[i * samples.len() / n]).collect()
}

/// Shuffled-minibatch Adam for `cfg.steps` steps. The validation metrics
/// are recorded at step 0, every `eval_interval` steps and at the end.
pub fn train(
    net: TerrainNet,
    optimizer: Option<AdamState>,
    ds: &Dataset,
    train_set: &[SampleIndex],
    val_set: &[SampleIndex],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(invalid("training needs non-empty training and validation sets"));
    }
    let mut net = net;
    let mut opt = optimizer.unwrap_or_else(|| {
        AdamState::new(
            AdamConfig {
                learning_rate: cfg.learning_rate,
                ..AdamConfig::default()
            },
            net.tensors(),
        )
    });
    let start = opt.step_count as usize;
    let val = eval_subset(val_set, cfg.eval_samples.max(1));
    let (m, h) = (net.arch.history, net.arch.horizon);
    let batch = cfg.batch_size.min(train_set.len());
    let mut dropout_rng = stream(seed, "dropout", start as u64);

    let mut curve = Vec::new();
    let snapshot = |net: &TerrainNet, step: usize, train_loss: Option<f64>| -> Result<CurvePoint> {
        let e = evaluate(net, ds, &val)?;
        Ok(CurvePoint {
            step,
            train_loss,
            val_cross_entropy: e.cross_entropy,
            val_accuracy: e.accuracy,
        })
    };
    curve.push(snapshot(&net, start, None)?);

    // Epoch-wise permutations, so the order depends only on the seed and
    // the global step.
    let steps_per_epoch = train_set.len() / batch;
    let mut order: Vec<usize> = Vec::new();
    let mut epoch = usize::MAX;
    let mut running = (0.0, 0usize);
    for step in start..start + cfg.steps {
        let e = step / steps_per_epoch;
        if e != epoch {
            epoch = e;
            order = (0..train_set.len()).collect();
            let mut rng = stream(seed, "shuffle", e as u64);
            for i in (1..order.len()).rev() {
                order.swap(i, rng.random_range(0..=i));
            }
        }
        let offset = (step % steps_per_epoch) * batch;
        let items: Vec<SampleIndex> = order[offset..offset + batch].iter().map(|&i| train_set[i]).collect();
        let obs = ds.observation_batch(&items, m, net.arch.mode);
        let actions = ds.action_batch(&items, h);
        let labels = ds.label_batch(&items, h)?;
        let out = net
            .batch_loss(&obs, &actions, &labels, cfg.l2, true, &mut dropout_rng)
            .map_err(|e| match e {
                CoreError::Training { reason, .. } => CoreError::Training { step, reason },
                other => other,
            })?;
        let grads = out.grads.tensors();
        opt.update(&mut net.tensors_mut(), &grads)?;
        running.0 += out.loss;
        running.1 += 1;
        let done = step + 1;
        if done % cfg.eval_interval.max(1) == 0 || done == start + cfg.steps {
            let mean = running.0 / running.1 as f64;
            running = (0.0, 0);
            curve.push(snapshot(&net, done, Some(mean))?);
        }
    }
    Ok(TrainOutcome { net, optimizer: opt, curve })
}

/// CSV with one row per curve point.
pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let h = curve.first().map_or(0, |p| p.val_accuracy.per_step.len());
    let mut s = String::from("step,train_loss,val_cross_entropy,val_acc_short,val_acc_long");
    for i in 1..=h {
        let _ = write!(s, ",val_acc_h{i}");
    }
    s.push('\n');
    for p in curve {
        let _ = write!(
            s,
            "{},{},{:.6},{:.6},{:.6}",
            p.step,
            p.train_loss.map_or(String::new(), |l| format!("{l:.6}")),
            p.val_cross_entropy,
            p.val_accuracy.short,
            p.val_accuracy.long
        );
        for a in &p.val_accuracy.per_step {
            let _ = write!(s, ",{a:.6}");
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictor_scores_one() {
        let labels = vec![vec![0, 1, 2, 1], vec![2, 2, 0, 0]];
        let t = accuracy_from_predictions(&labels, &labels).unwrap();
        assert_eq!((t.short, t.long), (1.0, 1.0));
    }

    #[test]
    fn majority_matches_counting_oracle() {
        let labels = vec![vec![0, 1], vec![0, 2], vec![1, 2], vec![0, 2]];
        let t = majority_baseline(&labels, 3).unwrap();
        assert_eq!(t.per_step, vec![0.75, 0.75]);
        assert_eq!((t.short, t.long), (0.75, 0.75));
    }

    #[test]
    fn buckets_split_at_half() {
        let t = AccuracyTable::from_per_step(vec![1.0, 0.5, 0.0, 0.5]);
        assert_eq!((t.short, t.long), (0.75, 0.25));
    }
}
