//! Task streams: IID, class-incremental splits, permuted inputs, random
//! labels, alternating hard/easy tasks and binary class pairs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{DataPair, Split};
use super::replay::Sample;
use crate::error::{Error, Result};

/// Training length of one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Budget {
    Epochs(usize),
    Steps(usize),
}

/// Examples and labels a task is evaluated on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSet {
    pub split: Split,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: usize,
    /// Source classes drawn on by this task.
    pub classes: Vec<usize>,
    pub train: Vec<Sample>,
    pub eval: EvalSet,
    pub budget: Budget,
    pub batch_size: usize,
    /// Output pixel `p` reads input pixel `permutation[p]`.
    pub permutation: Option<Vec<usize>>,
    /// Counted in stream-level evaluation.
    pub evaluated: bool,
}

impl Task {
    /// Optimizer steps per epoch (last partial batch included).
    pub fn steps_per_epoch(&self) -> usize {
        self.train.len().div_ceil(self.batch_size)
    }

    pub fn total_steps(&self) -> usize {
        match self.budget {
            Budget::Epochs(e) => e * self.steps_per_epoch(),
            Budget::Steps(s) => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    Iid,
    Split,
    Permuted,
    RandomLabel,
    HardEasy,
    BinaryPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStream {
    pub kind: StreamKind,
    pub seed: u64,
    pub tasks: Vec<Task>,
    /// Output width of the shared head.
    pub classes: usize,
}

impl TaskStream {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Whether checkpoint accuracy averages over all tasks seen so far.
    pub fn cumulative_eval(&self) -> bool {
        self.kind == StreamKind::Split
    }
}

fn samples(data: &DataPair, split: Split, idx: &[usize]) -> Vec<Sample> {
    let labels = &data.get(split).labels;
    idx.iter().map(|&i| Sample { index: i, label: labels[i] }).collect()
}

fn check_batch(batch: usize) -> Result<()> {
    if batch == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    Ok(())
}

/// A single task over the full train split, evaluated on the full test split.
pub fn make_iid_stream(data: &DataPair, epochs: usize, batch: usize, seed: u64) -> Result<TaskStream> {
    check_batch(batch)?;
    let train: Vec<usize> = (0..data.train.len()).collect();
    let test: Vec<usize> = (0..data.test.len()).collect();
    Ok(TaskStream {
        kind: StreamKind::Iid,
        seed,
        classes: data.train.classes,
        tasks: vec![Task {
            id: 0,
            classes: (0..data.train.classes).collect(),
            train: samples(data, Split::Train, &train),
            eval: EvalSet {
                split: Split::Test,
                samples: samples(data, Split::Test, &test),
            },
            budget: Budget::Epochs(epochs),
            batch_size: batch,
            permutation: None,
            evaluated: true,
        }],
    })
}

/// Class-incremental split into `n_tasks` disjoint class groups sharing one
/// head. Task `k` is evaluated on the test examples of its own classes; the
/// class order is shuffled by `seed` unless `shuffle` is false.
pub fn make_split_stream(
    data: &DataPair,
    n_tasks: usize,
    epochs_per_task: usize,
    batch: usize,
    shuffle: bool,
    seed: u64,
) -> Result<TaskStream> {
    check_batch(batch)?;
    let c = data.train.classes;
    if n_tasks == 0 || c % n_tasks != 0 {
        return Err(Error::config(format!("{c} classes cannot be split into {n_tasks} equal tasks")));
    }
    let mut order: Vec<usize> = (0..c).collect();
    if shuffle {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let per = c / n_tasks;
    let train_by = data.train.class_indices();
    let test_by = data.test.class_indices();
    let tasks = order
        .chunks(per)
        .enumerate()
        .map(|(id, cls)| {
            let mut tr: Vec<usize> = cls.iter().flat_map(|&k| train_by[k].iter().copied()).collect();
            let mut te: Vec<usize> = cls.iter().flat_map(|&k| test_by[k].iter().copied()).collect();
            tr.sort_unstable();
            te.sort_unstable();
            Task {
                id,
                classes: cls.to_vec(),
                train: samples(data, Split::Train, &tr),
                eval: EvalSet {
                    split: Split::Test,
                    samples: samples(data, Split::Test, &te),
                },
                budget: Budget::Epochs(epochs_per_task),
                batch_size: batch,
                permutation: None,
                evaluated: true,
            }
        })
        .collect();
    Ok(TaskStream {
        kind: StreamKind::Split,
        seed,
        classes: c,
        tasks,
    })
}

/// Fixed random train subset; each task applies a fresh pixel permutation.
/// Evaluated on a fixed test subset under the same permutation.
pub fn make_permuted_stream(
    data: &DataPair,
    n_tasks: usize,
    subset_size: usize,
    eval_size: usize,
    epochs: usize,
    batch: usize,
    seed: u64,
) -> Result<TaskStream> {
    check_batch(batch)?;
    if subset_size > data.train.len() || eval_size > data.test.len() {
        return Err(Error::config(format!(
            "permuted stream subset {subset_size}/{eval_size} exceeds dataset {}/{}",
            data.train.len(),
            data.test.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tr = rand::seq::index::sample(&mut rng, data.train.len(), subset_size).into_vec();
    let te = rand::seq::index::sample(&mut rng, data.test.len(), eval_size).into_vec();
    let d = data.train.dim();
    let tasks = (0..n_tasks)
        .map(|id| {
            let mut perm: Vec<usize> = (0..d).collect();
            perm.shuffle(&mut rng);
            Task {
                id,
                classes: (0..data.train.classes).collect(),
                train: samples(data, Split::Train, &tr),
                eval: EvalSet {
                    split: Split::Test,
                    samples: samples(data, Split::Test, &te),
                },
                budget: Budget::Epochs(epochs),
                batch_size: batch,
                permutation: Some(perm),
                evaluated: true,
            }
        })
        .collect();
    Ok(TaskStream {
        kind: StreamKind::Permuted,
        seed,
        classes: data.train.classes,
        tasks,
    })
}

/// Fixed train subset relabelled uniformly at random for every task.
/// Evaluated on the same subset with the task's labels.
pub fn make_random_label_stream(
    data: &DataPair,
    subset_size: usize,
    n_tasks: usize,
    epochs: usize,
    batch: usize,
    seed: u64,
) -> Result<TaskStream> {
    check_batch(batch)?;
    if subset_size > data.train.len() {
        return Err(Error::config("random-label subset exceeds dataset"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = rand::seq::index::sample(&mut rng, data.train.len(), subset_size).into_vec();
    let c = data.train.classes;
    let tasks = (0..n_tasks)
        .map(|id| {
            let train: Vec<Sample> = idx
                .iter()
                .map(|&index| Sample {
                    index,
                    label: rng.gen_range(0..c),
                })
                .collect();
            Task {
                id,
                classes: (0..c).collect(),
                eval: EvalSet {
                    split: Split::Train,
                    samples: train.clone(),
                },
                train,
                budget: Budget::Epochs(epochs),
                batch_size: batch,
                permutation: None,
                evaluated: true,
            }
        })
        .collect();
    Ok(TaskStream {
        kind: StreamKind::RandomLabel,
        seed,
        classes: c,
        tasks,
    })
}

/// Parameters of the alternating hard/easy stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardEasySpec {
    pub n_tasks: usize,
    pub hard_classes: usize,
    pub per_class: usize,
    pub steps: usize,
    pub batch: usize,
    /// Whether the first task is hard.
    pub hard_first: bool,
}

impl Default for HardEasySpec {
    fn default() -> Self {
        HardEasySpec {
            n_tasks: 30,
            hard_classes: 5,
            per_class: 500,
            steps: 780,
            batch: 32,
            hard_first: true,
        }
    }
}

/// Alternating multi-class and single-class tasks; no class is reused. Only
/// hard tasks are evaluated, on the test examples of their classes.
pub fn make_hard_easy_stream(data: &DataPair, spec: &HardEasySpec, seed: u64) -> Result<TaskStream> {
    check_batch(spec.batch)?;
    let is_hard = |t: usize| (t % 2 == 0) == spec.hard_first;
    let needed: usize = (0..spec.n_tasks).map(|t| if is_hard(t) { spec.hard_classes } else { 1 }).sum();
    let c = data.train.classes;
    if needed > c {
        return Err(Error::config(format!("hard/easy stream needs {needed} classes, dataset has {c}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..c).collect();
    order.shuffle(&mut rng);
    let train_by = data.train.class_indices();
    let test_by = data.test.class_indices();
    let mut next = 0;
    let mut tasks = Vec::with_capacity(spec.n_tasks);
    for id in 0..spec.n_tasks {
        let hard = is_hard(id);
        let k = if hard { spec.hard_classes } else { 1 };
        let cls = order[next..next + k].to_vec();
        next += k;
        let mut tr = Vec::new();
        for &cl in &cls {
            if train_by[cl].len() < spec.per_class {
                return Err(Error::config(format!(
                    "class {cl} has {} train examples, {} required",
                    train_by[cl].len(),
                    spec.per_class
                )));
            }
            let pick = rand::seq::index::sample(&mut rng, train_by[cl].len(), spec.per_class);
            tr.extend(pick.into_iter().map(|i| train_by[cl][i]));
        }
        let te: Vec<usize> = cls.iter().flat_map(|&k| test_by[k].iter().copied()).collect();
        tasks.push(Task {
            id,
            classes: cls,
            train: samples(data, Split::Train, &tr),
            eval: EvalSet {
                split: Split::Test,
                samples: samples(data, Split::Test, &te),
            },
            budget: Budget::Steps(spec.steps),
            batch_size: spec.batch,
            permutation: None,
            evaluated: hard,
        });
    }
    Ok(TaskStream {
        kind: StreamKind::HardEasy,
        seed,
        classes: c,
        tasks,
    })
}

/// Binary tasks over disjoint class pairs, labels remapped to `{0, 1}`.
pub fn make_binary_pair_stream(
    data: &DataPair,
    images_per_task: usize,
    n_tasks: usize,
    epochs: usize,
    batch: usize,
    seed: u64,
) -> Result<TaskStream> {
    check_batch(batch)?;
    let c = data.train.classes;
    if 2 * n_tasks > c {
        return Err(Error::config(format!("{n_tasks} disjoint pairs need {} classes, have {c}", 2 * n_tasks)));
    }
    if images_per_task % 2 != 0 {
        return Err(Error::config("binary tasks need an even image count"));
    }
    let per_class = images_per_task / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..c).collect();
    order.shuffle(&mut rng);
    let train_by = data.train.class_indices();
    let test_by = data.test.class_indices();
    let mut tasks = Vec::with_capacity(n_tasks);
    for id in 0..n_tasks {
        let pair = [order[2 * id], order[2 * id + 1]];
        let mut train = Vec::with_capacity(images_per_task);
        let mut eval = Vec::new();
        for (label, &cl) in pair.iter().enumerate() {
            if train_by[cl].len() < per_class {
                return Err(Error::config(format!(
                    "class {cl} has {} train examples, {per_class} required",
                    train_by[cl].len()
                )));
            }
            let pick = rand::seq::index::sample(&mut rng, train_by[cl].len(), per_class);
            train.extend(pick.into_iter().map(|i| Sample {
                index: train_by[cl][i],
                label,
            }));
            eval.extend(test_by[cl].iter().map(|&index| Sample { index, label }));
        }
        train.sort_by_key(|s| s.index);
        tasks.push(Task {
            id,
            classes: pair.to_vec(),
            train,
            eval: EvalSet {
                split: Split::Test,
                samples: eval,
            },
            budget: Budget::Epochs(epochs),
            batch_size: batch,
            permutation: None,
            evaluated: true,
        });
    }
    Ok(TaskStream {
        kind: StreamKind::BinaryPair,
        seed,
        classes: 2,
        tasks,
    })
}

/// Shuffled mini-batches for one task, continuing across epochs until the
/// task's step budget is spent.
#[derive(Debug)]
pub struct BatchPlan {
    order: Vec<Sample>,
    pos: usize,
    step: usize,
    total: usize,
    epoch: usize,
}

impl BatchPlan {
    pub fn new(task: &Task) -> Self {
        BatchPlan {
            order: Vec::new(),
            pos: 0,
            step: 0,
            total: task.total_steps(),
            epoch: 0,
        }
    }

    pub fn total_steps(&self) -> usize {
        self.total
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    /// Completed passes over the task data.
    pub fn epochs_done(&self) -> usize {
        if self.pos >= self.order.len() {
            self.epoch
        } else {
            self.epoch.saturating_sub(1)
        }
    }

    /// Next `size` current-task samples, or `None` once the budget is spent.
    /// Batches never straddle an epoch boundary.
    pub fn next<R: Rng + ?Sized>(&mut self, task: &Task, size: usize, rng: &mut R) -> Option<Vec<Sample>> {
        if self.step >= self.total || task.train.is_empty() {
            return None;
        }
        if self.pos >= self.order.len() {
            self.order = task.train.clone();
            self.order.shuffle(rng);
            self.pos = 0;
            self.epoch += 1;
        }
        let end = (self.pos + size.max(1)).min(self.order.len());
        let batch = self.order[self.pos..end].to_vec();
        self.pos = end;
        self.step += 1;
        Some(batch)
    }
}
