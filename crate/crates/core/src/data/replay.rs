//! Class-balanced replay buffer mixed into training batches.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One training example: index into the train split plus its (task) label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sample {
    pub index: usize,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplayConfig {
    pub per_class: usize,
    pub total: usize,
    pub fraction: f64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            per_class: 50,
            total: 200,
            fraction: 0.5,
        }
    }
}

impl ReplayConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(Error::config(format!("replay fraction {} not in [0, 1]", self.fraction)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    config: ReplayConfig,
    by_class: BTreeMap<usize, Vec<Sample>>,
}

impl ReplayBuffer {
    pub fn new(config: ReplayConfig) -> Self {
        ReplayBuffer {
            config,
            by_class: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> ReplayConfig {
        self.config
    }

    pub fn len(&self) -> usize {
        self.by_class.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn class_counts(&self) -> BTreeMap<usize, usize> {
        self.by_class.iter().map(|(&c, v)| (c, v.len())).collect()
    }

    /// Adds the first `per_class` examples of each class not yet stored, in
    /// the order given, until the total cap is reached. Called once a task
    /// has finished.
    pub fn insert_task(&mut self, samples: &[Sample]) {
        let known: Vec<usize> = self.by_class.keys().copied().collect();
        let mut total = self.len();
        for s in samples {
            if total >= self.config.total || known.contains(&s.label) {
                continue;
            }
            let slot = self.by_class.entry(s.label).or_default();
            if slot.len() < self.config.per_class {
                slot.push(*s);
                total += 1;
            }
        }
    }

    /// `n` samples drawn uniformly with replacement.
    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Sample> {
        let all: Vec<&Sample> = self.by_class.values().flatten().collect();
        if all.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| *all[rng.gen_range(0..all.len())]).collect()
    }
}

/// Replay slots in a batch of `batch_size`: `ceil(fraction * batch_size)`.
pub fn replay_count(batch_size: usize, fraction: f64) -> usize {
    ((fraction * batch_size as f64).ceil() as usize).min(batch_size)
}

/// Current-task examples per batch when the buffer is (non-)empty.
pub fn current_per_batch(batch_size: usize, fraction: f64, buffer_empty: bool) -> usize {
    if buffer_empty {
        batch_size
    } else {
        (batch_size - replay_count(batch_size, fraction)).max(1)
    }
}

/// Appends replay samples to `current` so the batch reaches `batch_size`.
/// With an empty buffer the current samples are returned unchanged.
pub fn replay_mix<R: Rng + ?Sized>(
    buffer: &ReplayBuffer,
    current: &[Sample],
    batch_size: usize,
    fraction: f64,
    rng: &mut R,
) -> Vec<Sample> {
    let mut out = current.to_vec();
    if buffer.is_empty() {
        return out;
    }
    let r = replay_count(batch_size, fraction);
    let keep = batch_size.saturating_sub(r).max(1).min(out.len());
    out.truncate(keep);
    out.extend(buffer.draw(r, rng));
    out
}
