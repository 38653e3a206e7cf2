//! Dataset loading and stream construction from a [`RunConfig`].

use std::path::{Path, PathBuf};

use plasticity_core::data::cifar::load_cifar;
use plasticity_core::data::idx::load_idx;
use plasticity_core::data::streams::{
    make_binary_pair_stream, make_hard_easy_stream, make_iid_stream, make_permuted_stream, make_random_label_stream,
    make_split_stream, HardEasySpec,
};
use plasticity_core::data::{synthetic_pair, DataPair, Dataset, Normalization, Split, TaskStream};

use crate::config::{DatasetKind, RunConfig, StreamKindConfig};
use crate::error::{HarnessError, Result};

fn require(dir: &Path, name: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    if p.exists() {
        Ok(p)
    } else {
        Err(HarnessError::invalid(format!("data.path: missing file {}", p.display())))
    }
}

fn limit(ds: Dataset, n: usize) -> Dataset {
    if n == 0 || n >= ds.len() {
        ds
    } else {
        ds.subset(&(0..n).collect::<Vec<_>>())
    }
}

/// Loads the train/test pair named by the config, applying limits and
/// normalization.
pub fn load_data(cfg: &RunConfig) -> Result<DataPair> {
    let (name, mut train, mut test, norm) = match cfg.dataset {
        DatasetKind::Synthetic => {
            let spec = cfg
                .data
                .synthetic
                .as_ref()
                .ok_or_else(|| HarnessError::invalid("data.synthetic: required"))?;
            let pair = synthetic_pair(spec)?;
            (pair.name, pair.train, pair.test, None)
        }
        DatasetKind::Mnist | DatasetKind::FashionMnist => {
            let dir = cfg.data.path.as_deref().ok_or_else(|| HarnessError::invalid("data.path: required"))?;
            let train = load_idx(
                &require(dir, "train-images-idx3-ubyte")?,
                &require(dir, "train-labels-idx1-ubyte")?,
                Split::Train,
            )?;
            let test = load_idx(
                &require(dir, "t10k-images-idx3-ubyte")?,
                &require(dir, "t10k-labels-idx1-ubyte")?,
                Split::Test,
            )?;
            let (name, norm) = if cfg.dataset == DatasetKind::Mnist {
                ("mnist", Normalization::MNIST)
            } else {
                ("fashion_mnist", Normalization::FASHION_MNIST)
            };
            (name.to_string(), train, test, Some(norm))
        }
        DatasetKind::Cifar10 => {
            let dir = cfg.data.path.as_deref().ok_or_else(|| HarnessError::invalid("data.path: required"))?;
            let files = (1..=5)
                .map(|i| require(dir, &format!("data_batch_{i}.bin")))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&Path> = files.iter().map(PathBuf::as_path).collect();
            let train = load_cifar(&refs, 1, 10, Split::Train)?;
            let test = load_cifar(&[&require(dir, "test_batch.bin")?], 1, 10, Split::Test)?;
            ("cifar10".to_string(), train, test, Some(Normalization::CIFAR))
        }
        DatasetKind::Cifar100 => {
            let dir = cfg.data.path.as_deref().ok_or_else(|| HarnessError::invalid("data.path: required"))?;
            let train = load_cifar(&[&require(dir, "train.bin")?], 2, 100, Split::Train)?;
            let test = load_cifar(&[&require(dir, "test.bin")?], 2, 100, Split::Test)?;
            ("cifar100".to_string(), train, test, Some(Normalization::CIFAR))
        }
    };
    train = limit(train, cfg.data.train_limit);
    test = limit(test, cfg.data.test_limit);
    if cfg.data.normalize {
        if let Some(n) = norm {
            train.normalize(n)?;
            test.normalize(n)?;
        }
    }
    Ok(DataPair { name, train, test })
}

/// Builds the task stream. The stream seed depends only on the run seed, so
/// every method sees the same ordering.
pub fn build_stream(cfg: &RunConfig, data: &DataPair, seed: u64) -> Result<TaskStream> {
    let s = &cfg.stream;
    let stream_seed = seed ^ 0x5354_5245_414d;
    let stream = match s.kind {
        StreamKindConfig::Iid => make_iid_stream(data, cfg.epochs_per_cycle, s.batch_size, stream_seed)?,
        StreamKindConfig::Split => make_split_stream(
            data,
            s.tasks,
            s.epochs.unwrap_or(cfg.epochs_per_cycle),
            s.batch_size,
            s.shuffle_classes,
            stream_seed,
        )?,
        StreamKindConfig::Permuted => make_permuted_stream(
            data,
            s.tasks,
            s.subset_size,
            s.eval_size,
            s.epochs.unwrap_or(1),
            s.batch_size,
            stream_seed,
        )?,
        StreamKindConfig::RandomLabel => make_random_label_stream(
            data,
            s.subset_size,
            s.tasks,
            s.epochs.unwrap_or(400),
            s.batch_size,
            stream_seed,
        )?,
        StreamKindConfig::HardEasy => make_hard_easy_stream(
            data,
            &HardEasySpec {
                n_tasks: s.tasks,
                hard_classes: s.hard_classes,
                per_class: s.per_class,
                steps: s.steps,
                batch: s.batch_size,
                hard_first: s.hard_first,
            },
            stream_seed,
        )?,
        StreamKindConfig::BinaryPair => make_binary_pair_stream(
            data,
            s.images_per_task,
            s.tasks,
            s.epochs.unwrap_or(10),
            s.batch_size,
            stream_seed,
        )?,
    };
    Ok(stream)
}
