//! Deterministic synthetic classification data for dataset-free runs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::{DataPair, Dataset, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Gaussian clusters around random class prototypes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Per-example shape, e.g. `[784]` or `[3, 32, 32]`.
    pub shape: Vec<usize>,
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Noise standard deviation relative to unit-variance prototypes.
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn mnist_like(seed: u64) -> Self {
        SyntheticSpec {
            shape: vec![784],
            classes: 10,
            train_per_class: 100,
            test_per_class: 20,
            noise: 1.0,
            seed,
        }
    }
}

/// Generates train and test splits. Examples are interleaved by class.
pub fn synthetic_pair(spec: &SyntheticSpec) -> Result<DataPair> {
    if spec.classes == 0 || spec.shape.is_empty() || spec.shape.contains(&0) {
        return Err(Error::config("synthetic data needs classes and a non-empty shape"));
    }
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::config(format!("synthetic noise: {e}")))?;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d: usize = spec.shape.iter().product();
    let protos: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| (0..d).map(|_| unit.sample(&mut rng)).collect())
        .collect();
    let mut make = |per_class: usize, split: Split| -> Result<Dataset> {
        let n = per_class * spec.classes;
        let mut data = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let y = i % spec.classes;
            labels.push(y);
            data.extend(protos[y].iter().map(|p| p + noise.sample(&mut rng)));
        }
        let mut shape = vec![n];
        shape.extend(&spec.shape);
        Dataset::new(Tensor::from_vec(&shape, data)?, labels, spec.classes, split)
    };
    let train = make(spec.train_per_class, Split::Train)?;
    let test = make(spec.test_per_class, Split::Test)?;
    Ok(DataPair {
        name: "synthetic".into(),
        train,
        test,
    })
}
