//! Optimizer state, mini-batch assembly, training steps and evaluation.

use plasticity_core::data::replay::{current_per_batch, replay_mix};
use plasticity_core::data::{DataPair, ReplayBuffer, Sample, Task};
use plasticity_core::nn::{softmax_xent, MaskedNetwork, Mode};
use plasticity_core::optim::{AdamState, OptimizerKind, OptimizerState, TwoSpeed};
use plasticity_core::Tensor;
use rand::Rng;

use crate::config::OptimizerConfig;
use crate::error::Result;

const EVAL_CHUNK: usize = 1000;

pub fn make_optimizer(cfg: &OptimizerConfig, net: &MaskedNetwork) -> OptimizerState {
    let shapes = net.param_shapes();
    match cfg.kind {
        OptimizerKind::Sgd => OptimizerState::Sgd,
        OptimizerKind::Adam => OptimizerState::Adam(AdamState::with_betas(&shapes, cfg.beta1, cfg.beta2, cfg.eps)),
    }
}

/// Inputs and labels for `samples` of a task, with the task's pixel
/// permutation applied.
pub fn batch_tensors(data: &DataPair, task: &Task, samples: &[Sample], split_train: bool) -> (Tensor, Vec<usize>) {
    let ds = if split_train { &data.train } else { data.get(task.eval.split) };
    let idx: Vec<usize> = samples.iter().map(|s| s.index).collect();
    let x = ds.gather(&idx, task.permutation.as_deref());
    (x, samples.iter().map(|s| s.label).collect())
}

/// Rows of `logits` among the first `n` whose argmax equals the label.
pub fn correct_count(logits: &Tensor, labels: &[usize], n: usize) -> usize {
    logits
        .argmax_rows()
        .iter()
        .zip(labels)
        .take(n)
        .filter(|(p, y)| p == y)
        .count()
}

/// Accuracy on a task's evaluation set, in eval mode.
pub fn evaluate(net: &MaskedNetwork, data: &DataPair, task: &Task) -> Result<f64> {
    let samples = &task.eval.samples;
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let mut correct = 0;
    for chunk in samples.chunks(EVAL_CHUNK) {
        let (x, y) = batch_tensors(data, task, chunk, false);
        let (logits, _) = net.forward(&x, Mode::Eval, &mut rng)?;
        correct += correct_count(&logits, &y, y.len());
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Outcome of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    /// Pre-update accuracy on the current-task part of the batch.
    pub online_acc: f64,
}

/// Draws the next mixed batch: current-task samples from `plan`, topped up
/// from the replay buffer when one is active.
pub fn next_batch<R: Rng + ?Sized>(
    plan: &mut plasticity_core::data::BatchPlan,
    task: &Task,
    replay: Option<(&ReplayBuffer, f64)>,
    rng: &mut R,
) -> Option<(Vec<Sample>, usize)> {
    let b = task.batch_size;
    match replay {
        Some((buf, frac)) => {
            let cur = plan.next(task, current_per_batch(b, frac, buf.is_empty()), rng)?;
            let n = cur.len();
            let mixed = replay_mix(buf, &cur, b, frac, rng);
            Some((mixed, n.min(b)))
        }
        None => {
            let cur = plan.next(task, b, rng)?;
            let n = cur.len();
            Some((cur, n))
        }
    }
}

/// One forward/backward/update on `(x, labels)`. The first `n_current` rows
/// are the current-task samples used for online accuracy.
#[allow(clippy::too_many_arguments)]
pub fn train_step<R: Rng + ?Sized>(
    net: &mut MaskedNetwork,
    opt: &mut OptimizerState,
    two_speed: Option<&mut TwoSpeed>,
    x: &Tensor,
    labels: &[usize],
    n_current: usize,
    lr: f64,
    rng: &mut R,
) -> Result<StepStats> {
    let (logits, cache) = net.forward(x, Mode::Train, rng)?;
    let online_acc = if n_current == 0 {
        0.0
    } else {
        correct_count(&logits, labels, n_current) as f64 / n_current as f64
    };
    let (loss, grad) = softmax_xent(&logits, labels)?;
    if !loss.is_finite() {
        return Err(plasticity_core::Error::NumericFault {
            layer: net.layers().len() - 1,
            stage: "loss",
        }
        .into());
    }
    let back = net.backward(&cache, &grad, None)?;
    let mut params = net.params_mut();
    match two_speed {
        Some(ts) if ts.active_registrations() > 0 => {
            let before = ts.capture(&params);
            opt.step(&mut params, &back.param_grads, lr)?;
            ts.finish_step(&mut params, before);
        }
        _ => opt.step(&mut params, &back.param_grads, lr)?,
    }
    Ok(StepStats { loss, online_acc })
}
