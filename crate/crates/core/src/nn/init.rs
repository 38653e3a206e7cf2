use rand::Rng;

use crate::tensor::Tensor;

/// Kaiming-uniform initialization: i.i.d. `U[-b, b]` with `b = sqrt(6 / fan_in)`.
pub fn kaiming_uniform_init<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    let bound = kaiming_bound(fan_in);
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.gen_range(-bound..=bound);
    }
    t
}

pub fn kaiming_bound(fan_in: usize) -> f64 {
    assert!(fan_in >= 1, "fan_in must be >= 1");
    (6.0 / fan_in as f64).sqrt()
}

/// Overwrites `out` with fresh Kaiming-uniform draws.
pub fn fill_kaiming<R: Rng + ?Sized>(out: &mut [f64], fan_in: usize, rng: &mut R) {
    let bound = kaiming_bound(fan_in);
    for v in out {
        *v = rng.gen_range(-bound..=bound);
    }
}
