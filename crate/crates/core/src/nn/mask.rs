use serde::{Deserialize, Serialize};

/// Binary on/off vector over the units of one masked layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnitMask(Vec<u8>);

impl UnitMask {
    pub fn ones(n: usize) -> Self {
        UnitMask(vec![1; n])
    }

    pub fn zeros(n: usize) -> Self {
        UnitMask(vec![0; n])
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        UnitMask(bits.iter().map(|&b| u8::from(b != 0)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_active(&self, j: usize) -> bool {
        self.0[j] == 1
    }

    pub fn set(&mut self, j: usize, on: bool) {
        self.0[j] = u8::from(on);
    }

    pub fn active_count(&self) -> usize {
        self.0.iter().map(|&b| b as usize).sum()
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&j| self.0[j] == 1).collect()
    }

    pub fn inactive_indices(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&j| self.0[j] == 0).collect()
    }

    #[inline]
    pub fn factor(&self, j: usize) -> f64 {
        self.0[j] as f64
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }
}
