use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Per-dataset input normalization `(x - mean) / std`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: f64,
    pub std: f64,
}

impl Normalization {
    pub const MNIST: Normalization = Normalization {
        mean: 0.1307,
        std: 0.3081,
    };
    pub const FASHION_MNIST: Normalization = Normalization {
        mean: 0.2860,
        std: 0.3530,
    };
    pub const CIFAR: Normalization = Normalization {
        mean: 0.4734,
        std: 0.2516,
    };
}

/// Labelled images. `images` is `[n, c, h, w]` or `[n, d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub split: Split,
    pub normalization: Option<Normalization>,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>, classes: usize, split: Split) -> Result<Self> {
        if images.ndim() < 2 || images.rows() != labels.len() {
            return Err(Error::Shape {
                context: "dataset images vs labels",
                expected: vec![labels.len()],
                actual: images.shape().to_vec(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::config(format!("label {bad} out of range for {classes} classes")));
        }
        Ok(Dataset {
            images,
            labels,
            classes,
            split,
            normalization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Flattened input width.
    pub fn dim(&self) -> usize {
        self.images.row_len()
    }

    /// Per-example shape (without the leading batch axis).
    pub fn example_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    pub fn image(&self, i: usize) -> &[f64] {
        self.images.row(i)
    }

    /// Applies normalization in place. Calling twice is an error.
    pub fn normalize(&mut self, norm: Normalization) -> Result<()> {
        if self.normalization.is_some() {
            return Err(Error::config("dataset is already normalized"));
        }
        if !(norm.std > 0.0) {
            return Err(Error::config("normalization std must be positive"));
        }
        for v in self.images.data_mut() {
            *v = (*v - norm.mean) / norm.std;
        }
        self.normalization = Some(norm);
        Ok(())
    }

    /// Indices of every example of each class.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.classes];
        for (i, &y) in self.labels.iter().enumerate() {
            out[y].push(i);
        }
        out
    }

    /// Builds a `[B, ...]` input batch from example indices, optionally
    /// permuting the flattened pixels: output pixel `p` is input pixel `perm[p]`.
    pub fn gather(&self, indices: &[usize], perm: Option<&[usize]>) -> Tensor {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            let img = self.image(i);
            match perm {
                Some(p) => data.extend(p.iter().map(|&src| img[src])),
                None => data.extend_from_slice(img),
            }
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(self.example_shape());
        Tensor::from_vec(&shape, data).expect("gather shape")
    }

    /// A new dataset holding `indices`, in order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            images: self.gather(indices, None),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            split: self.split,
            normalization: self.normalization,
        }
    }
}

/// Train and test splits of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPair {
    pub name: String,
    pub train: Dataset,
    pub test: Dataset,
}

impl DataPair {
    pub fn get(&self, split: Split) -> &Dataset {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }
}
