//! Candidate and incumbent scores used by the structural operators.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::{softmax_xent, MaskedNetwork, Mode};
use crate::tensor::Tensor;

/// `(unit, score)` pairs in ascending unit order.
pub type Scores = Vec<(usize, f64)>;

/// Fraction of entries strictly above `tau`. Empty input scores 0.
pub fn rate_above(values: impl IntoIterator<Item = f64>, tau: f64) -> f64 {
    let (mut n, mut hits) = (0usize, 0usize);
    for v in values {
        n += 1;
        if v > tau {
            hits += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        hits as f64 / n as f64
    }
}

/// Per-unit activation rate of `[B, d]` post-activations.
pub fn unit_activation_rates(acts: &Tensor, tau: f64) -> Vec<f64> {
    let (b, d) = (acts.rows(), acts.row_len());
    (0..d)
        .map(|j| rate_above((0..b).map(|r| acts.data()[r * d + j]), tau))
        .collect()
}

/// Per-channel activation rate of `[B, C, H, W]` feature maps, averaged over
/// batch and spatial positions.
pub fn channel_activation_rates(maps: &Tensor, tau: f64) -> Vec<f64> {
    let s = maps.shape();
    let (b, c) = (s[0], s[1]);
    let hw: usize = s[2..].iter().product();
    (0..c)
        .map(|ch| {
            rate_above(
                (0..b).flat_map(|r| maps.data()[(r * c + ch) * hw..(r * c + ch + 1) * hw].iter().copied()),
                tau,
            )
        })
        .collect()
}

/// Per-unit mean of `|g|` over the batch for `[B, d]` gradients.
pub fn unit_grad_magnitudes(grads: &Tensor) -> Vec<f64> {
    let (b, d) = (grads.rows(), grads.row_len());
    let mut out = vec![0.0; d];
    for r in 0..b {
        for (o, g) in out.iter_mut().zip(grads.row(r)) {
            *o += g.abs();
        }
    }
    if b > 0 {
        out.iter_mut().for_each(|o| *o /= b as f64);
    }
    out
}

/// Post-activations of masked layer `h` as if its mask were lifted, computed
/// with the rest of the network masked as usual. Evaluation mode.
pub fn lifted_activations(net: &MaskedNetwork, h: usize, x: &Tensor) -> Result<Tensor> {
    let li = net.masked_layer_index(h);
    // eval mode never draws from the rng
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (_, cache) = net.forward(x, Mode::Eval, &mut rng)?;
    let z = cache.pre_activation(li).expect("linear layer has z");
    let act = net.linear(li).activation;
    let data = z.data().iter().map(|&v| act.eval_value(v)).collect();
    Tensor::from_vec(z.shape(), data)
}

/// `dL/dz` of masked layer `h` with that layer's mask lifted, `[B, d]`.
pub fn lifted_unit_grads(net: &MaskedNetwork, h: usize, x: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (logits, cache) = net.forward(x, Mode::Eval, &mut rng)?;
    let (_, g) = softmax_xent(&logits, labels)?;
    let mut back = net.backward(&cache, &g, Some(h))?;
    Ok(back.unit_grads.swap_remove(h))
}

/// Activation-rate score of every inactive unit of masked layer `h`.
pub fn score_grow_activation(net: &MaskedNetwork, h: usize, x: &Tensor, tau: f64) -> Result<Scores> {
    let candidates = net.mask(h).inactive_indices();
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let rates = unit_activation_rates(&lifted_activations(net, h, x)?, tau);
    Ok(candidates.into_iter().map(|j| (j, rates[j])).collect())
}

/// Mean `|dL/dz_j|` of every inactive unit of masked layer `h`.
pub fn score_grow_gradient(net: &MaskedNetwork, h: usize, x: &Tensor, labels: &[usize]) -> Result<Scores> {
    let candidates = net.mask(h).inactive_indices();
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let mags = unit_grad_magnitudes(&lifted_unit_grads(net, h, x, labels)?);
    Ok(candidates.into_iter().map(|j| (j, mags[j])).collect())
}

/// Mean absolute incoming weight of every active unit of masked layer `h`.
pub fn score_prune_magnitude(net: &MaskedNetwork, h: usize) -> Scores {
    let l = net.linear(net.masked_layer_index(h));
    net.mask(h)
        .active_indices()
        .into_iter()
        .map(|j| (j, mean_abs(l.weight.row(j))))
        .collect()
}

/// Per-output-channel mean absolute weight of a `[oc, ic, k, k]` kernel.
pub fn conv_channel_magnitudes(weight: &Tensor) -> Vec<f64> {
    (0..weight.rows()).map(|o| mean_abs(weight.row(o))).collect()
}

fn mean_abs(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().map(|w| w.abs()).sum::<f64>() / v.len() as f64
    }
}

/// The `k` highest-scoring units; ties go to the lowest index.
pub fn top_k(scores: &[(usize, f64)], k: usize) -> Vec<usize> {
    let mut s = scores.to_vec();
    s.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    s.into_iter().take(k).map(|(j, _)| j).collect()
}

/// The `k` lowest-scoring units; ties go to the lowest index.
pub fn bottom_k(scores: &[(usize, f64)], k: usize) -> Vec<usize> {
    let mut s = scores.to_vec();
    s.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    s.into_iter().take(k).map(|(j, _)| j).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, UnitMask};

    #[test]
    fn rate_examples() {
        assert_eq!(rate_above([0.1, 0.0, 0.2, 0.04], 0.05), 0.5);
        assert_eq!(rate_above([0.0; 4], 0.05), 0.0);
        assert_eq!(rate_above([0.3, 0.01, 2.0], 0.0), 1.0);
    }

    #[test]
    fn magnitude_examples() {
        assert_eq!(mean_abs(&[1.0, -1.0, 2.0, 0.0]), 1.0);
        assert_eq!(mean_abs(&[0.0; 3]), 0.0);
    }

    #[test]
    fn selection_tie_rules() {
        let s = vec![(0, 0.9), (1, 0.1), (2, 0.5)];
        let mut t = top_k(&s, 2);
        t.sort();
        assert_eq!(t, vec![0, 2]);
        assert_eq!(top_k(&[(3, 1.0), (1, 1.0), (2, 1.0)], 1), vec![1]);
        assert_eq!(bottom_k(&[(0, 0.1), (1, 0.9), (2, 0.5)], 1), vec![0]);
        assert_eq!(bottom_k(&[(4, 0.0), (2, 0.0)], 1), vec![2]);
    }

    #[test]
    fn zero_outgoing_weights_score_zero() {
        let mut net = MaskedNetwork::mlp(4, &[3], 2, Activation::Relu, 3).unwrap();
        net.set_masks(&[UnitMask::from_bits(&[1, 0, 0])]).unwrap();
        let out = net.linear_mut(1);
        for r in 0..2 {
            out.weight.set2(r, 1, 0.0);
        }
        let x = Tensor::from_vec(&[2, 4], vec![0.5, -0.2, 0.9, 0.1, 0.3, 0.3, -0.7, 0.8]).unwrap();
        let s = score_grow_gradient(&net, 0, &x, &[0, 1]).unwrap();
        assert_eq!(s[0], (1, 0.0));
    }

    #[test]
    fn lifted_scores_ignore_mask_on_candidates() {
        let mut net = MaskedNetwork::mlp(2, &[2], 2, Activation::Relu, 0).unwrap();
        let l = net.linear_mut(0);
        l.weight = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        net.set_masks(&[UnitMask::zeros(2)]).unwrap();
        let x = Tensor::from_vec(&[2, 2], vec![0.1, 0.0, 0.2, 0.04]).unwrap();
        let s = score_grow_activation(&net, 0, &x, 0.05).unwrap();
        assert_eq!(s, vec![(0, 1.0), (1, 0.0)]);
    }

    #[test]
    fn conv_channel_rates() {
        // B=1, C=2, 2x2 maps
        let maps = Tensor::from_vec(&[1, 2, 2, 2], vec![0.1, 0.0, 0.2, 0.04, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(channel_activation_rates(&maps, 0.05), vec![0.5, 0.0]);
        let w = Tensor::from_vec(&[2, 1, 2, 2], vec![1.0, -1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(conv_channel_magnitudes(&w), vec![1.0, 0.0]);
    }
}
