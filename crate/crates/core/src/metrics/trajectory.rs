//! Checkpoint- and batch-level accuracy summaries.

use crate::error::{Error, Result};

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn non_empty(xs: &[f64], what: &str) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::Stats(format!("{what}: empty input")));
    }
    Ok(())
}

/// Mean accuracy over the tasks seen so far.
pub fn cum_acc(per_task: &[f64]) -> Result<f64> {
    non_empty(per_task, "cum_acc")?;
    Ok(mean(per_task))
}

/// Mean over checkpoints.
pub fn taa(trajectory: &[f64]) -> Result<f64> {
    non_empty(trajectory, "taa")?;
    Ok(mean(trajectory))
}

/// Last checkpoint.
pub fn acc_final(trajectory: &[f64]) -> Result<f64> {
    trajectory
        .last()
        .copied()
        .ok_or_else(|| Error::Stats("acc_final: empty trajectory".into()))
}

/// Mean online accuracy over every processed mini-batch.
pub fn taoa(online: &[f64]) -> Result<f64> {
    non_empty(online, "taoa")?;
    Ok(mean(online))
}

/// Mean online accuracy over the first `ceil(window_fraction * len)` batches
/// of each task, averaged over tasks.
pub fn early_task_taa(per_task_online: &[Vec<f64>], window_fraction: f64) -> Result<f64> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::Stats(format!("window fraction {window_fraction} not in (0, 1]")));
    }
    let mut task_means = Vec::with_capacity(per_task_online.len());
    for task in per_task_online {
        if task.is_empty() {
            continue;
        }
        let w = ((window_fraction * task.len() as f64).ceil() as usize).clamp(1, task.len());
        task_means.push(mean(&task[..w]));
    }
    non_empty(&task_means, "early_task_taa")?;
    Ok(mean(&task_means))
}

/// `final_wt - final_cycle`; positive when the retrained ticket ends higher.
pub fn ticket_cycle_delta(final_wt: f64, final_cycle: f64) -> f64 {
    final_wt - final_cycle
}

/// Mean and normal-approximation 95% half-width (0 for a single value).
pub fn mean_ci95(xs: &[f64]) -> Result<(f64, f64)> {
    non_empty(xs, "mean_ci95")?;
    let m = mean(xs);
    if xs.len() < 2 {
        return Ok((m, 0.0));
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    Ok((m, 1.96 * (var / xs.len() as f64).sqrt()))
}
