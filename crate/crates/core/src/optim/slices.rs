use serde::{Deserialize, Serialize};

use crate::nn::{MaskedNetwork, ParamKind};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceKind {
    /// Row `i` of a 2-D tensor.
    Row,
    /// Column `i` of a 2-D tensor.
    Col,
    /// Element `i` of a flat tensor.
    Elem,
}

/// A row, column or element of one parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamSlice {
    pub param: usize,
    pub kind: SliceKind,
    pub index: usize,
}

impl ParamSlice {
    /// Flat offsets covered by this slice within a tensor of `shape`.
    pub fn offsets(&self, shape: &[usize]) -> Vec<usize> {
        match self.kind {
            SliceKind::Elem => vec![self.index],
            SliceKind::Row => {
                let w = shape[1..].iter().product::<usize>();
                (self.index * w..(self.index + 1) * w).collect()
            }
            SliceKind::Col => {
                let (r, c) = (shape[0], shape[1]);
                (0..r).map(|i| i * c + self.index).collect()
            }
        }
    }

    pub fn read(&self, t: &Tensor) -> Vec<f64> {
        self.offsets(t.shape()).into_iter().map(|o| t.data()[o]).collect()
    }

    pub fn write(&self, t: &mut Tensor, values: &[f64]) {
        let offs = self.offsets(t.shape());
        let d = t.data_mut();
        for (o, v) in offs.into_iter().zip(values) {
            d[o] = *v;
        }
    }

    /// The same slice for another unit.
    pub fn with_index(&self, index: usize) -> Self {
        ParamSlice { index, ..*self }
    }
}

/// Incoming row, bias and consumer input column of unit `j` of masked layer `h`.
pub fn newborn_slices(net: &MaskedNetwork, h: usize, j: usize) -> Vec<ParamSlice> {
    let li = net.masked_layer_index(h);
    let ci = net.consumer_of(h);
    vec![
        ParamSlice {
            param: net.param_index(li, ParamKind::Weight),
            kind: SliceKind::Row,
            index: j,
        },
        ParamSlice {
            param: net.param_index(li, ParamKind::Bias),
            kind: SliceKind::Elem,
            index: j,
        },
        ParamSlice {
            param: net.param_index(ci, ParamKind::Weight),
            kind: SliceKind::Col,
            index: j,
        },
    ]
}
