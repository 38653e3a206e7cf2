use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::net2wider::net2wider_insert;
use super::quota::{grow_quota, seed_count};
use super::scoring::{lifted_activations, score_grow_activation, score_grow_gradient, top_k, unit_activation_rates, Scores};
use super::{EditAction, EditEvent};
use crate::budget::{apply_mask_edit, CompactnessPlan, MaskAction};
use crate::error::{Error, Result};
use crate::nn::init::fill_kaiming;
use crate::nn::{MaskedNetwork, UnitMask};
use crate::tensor::Tensor;

/// How inactive candidates are ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrowScorer {
    Activation,
    Gradient,
    GradMax,
}

/// How a newborn's weights are set at birth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitPolicy {
    FreshKaiming,
    Net2Wider { noise_eps: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowOptions {
    pub scorer: GrowScorer,
    pub init: InitPolicy,
    /// Activation threshold for rate-based scores.
    pub tau: f64,
}

impl Default for GrowOptions {
    fn default() -> Self {
        GrowOptions {
            scorer: GrowScorer::Activation,
            init: InitPolicy::FreshKaiming,
            tau: 0.05,
        }
    }
}

/// Sets every masked layer to a random seed mask of `seed_count` units and
/// returns the corresponding cycle-0 events.
pub fn seed_grow_masks<R: Rng + ?Sized>(
    net: &mut MaskedNetwork,
    plan: &CompactnessPlan,
    fraction: f64,
    rng: &mut R,
) -> Result<Vec<EditEvent>> {
    check_plan(net, plan)?;
    let widths = net.masked_widths();
    net.set_masks(&widths.iter().map(|&w| UnitMask::zeros(w)).collect::<Vec<_>>())?;
    let mut events = Vec::new();
    for (h, &d) in widths.iter().enumerate() {
        let n = seed_count(d, fraction, plan.unit_targets[h]);
        let mut units = sample(rng, d, n).into_vec();
        units.sort_unstable();
        apply_mask_edit(net, h, &units, MaskAction::Activate)?;
        events.push(EditEvent {
            cycle: 0,
            layer: h,
            action: EditAction::Grow,
            units,
            scores: Vec::new(),
            donors: Vec::new(),
        });
    }
    Ok(events)
}

pub(crate) fn check_plan(net: &MaskedNetwork, plan: &CompactnessPlan) -> Result<()> {
    let widths = net.masked_widths();
    let plan_widths: Vec<usize> = plan.layers.iter().map(|l| l.units).collect();
    if widths != plan_widths {
        return Err(Error::Plan(format!(
            "plan widths {plan_widths:?} do not match network widths {widths:?}"
        )));
    }
    Ok(())
}

/// Fresh Kaiming-uniform incoming row and outgoing column for unit `j` of
/// masked layer `h`; bias reset to zero.
pub fn init_newborn<R: Rng + ?Sized>(net: &mut MaskedNetwork, h: usize, j: usize, rng: &mut R) {
    let li = net.masked_layer_index(h);
    let ci = net.consumer_of(h);
    let l = net.linear_mut(li);
    let fan_in = l.in_dim();
    fill_kaiming(l.weight.row_mut(j), fan_in, rng);
    l.bias.data_mut()[j] = 0.0;
    let c = net.linear_mut(ci);
    let fan_in = c.in_dim();
    let mut col = vec![0.0; c.out_dim()];
    fill_kaiming(&mut col, fan_in, rng);
    for (r, v) in col.into_iter().enumerate() {
        c.weight.set2(r, j, v);
    }
}

/// Top-`n` inactive units of masked layer `h` by lifted gradient magnitude.
pub fn gradmax_select(net: &MaskedNetwork, h: usize, x: &Tensor, labels: &[usize], n: usize) -> Result<Vec<usize>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let scores = score_grow_gradient(net, h, x, labels)?;
    if n > scores.len() {
        return Err(Error::Plan(format!("gradmax asked for {n} of {} candidates", scores.len())));
    }
    Ok(top_k(&scores, n))
}

/// Grow cycle `t`: scores every masked layer on the batch, then activates the
/// per-layer quota of best candidates and initializes them per `opts.init`.
/// No rewind.
pub fn grow_step<R: Rng + ?Sized>(
    net: &mut MaskedNetwork,
    plan: &CompactnessPlan,
    t: usize,
    opts: &GrowOptions,
    x: &Tensor,
    labels: &[usize],
    rng: &mut R,
) -> Result<Vec<EditEvent>> {
    check_plan(net, plan)?;
    let n_layers = net.num_masked();
    let mut selections = Vec::with_capacity(n_layers);
    let mut donor_rates = Vec::with_capacity(n_layers);
    for h in 0..n_layers {
        let mask = net.mask(h);
        let (a, d) = (mask.active_count(), mask.len());
        if a > plan.unit_targets[h] {
            return Err(Error::Plan(format!(
                "layer {h} has {a} active units, above its target {}",
                plan.unit_targets[h]
            )));
        }
        let n = grow_quota(a, plan.unit_targets[h], d, t, plan.cycles);
        let scores: Scores = match opts.scorer {
            GrowScorer::Activation => score_grow_activation(net, h, x, opts.tau)?,
            GrowScorer::Gradient | GrowScorer::GradMax => score_grow_gradient(net, h, x, labels)?,
        };
        if n > scores.len() {
            return Err(Error::Plan(format!("layer {h}: quota {n} exceeds {} candidates", scores.len())));
        }
        let units = match opts.scorer {
            GrowScorer::GradMax => gradmax_select(net, h, x, labels, n)?,
            _ => top_k(&scores, n),
        };
        let unit_scores = units
            .iter()
            .map(|u| scores.iter().find(|(j, _)| j == u).map(|s| s.1).unwrap_or(0.0))
            .collect::<Vec<_>>();
        selections.push((units, unit_scores));
        if matches!(opts.init, InitPolicy::Net2Wider { .. }) {
            // donors ranked by their activation rate in the masked network
            let acts = lifted_activations(net, h, x)?;
            donor_rates.push(unit_activation_rates(&acts, opts.tau));
        }
    }

    let mut events = Vec::with_capacity(n_layers);
    for (h, (units, scores)) in selections.into_iter().enumerate() {
        let mut donors = Vec::new();
        match opts.init {
            InitPolicy::FreshKaiming => {
                apply_mask_edit(net, h, &units, MaskAction::Activate)?;
                for &j in &units {
                    init_newborn(net, h, j, rng);
                }
            }
            InitPolicy::Net2Wider { noise_eps } => {
                if !units.is_empty() {
                    donors = net2wider_insert(net, h, &units, &donor_rates[h], noise_eps, rng)?;
                }
            }
        }
        events.push(EditEvent {
            cycle: t,
            layer: h,
            action: EditAction::Grow,
            units,
            scores,
            donors,
        });
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::budget::{layer_budgets, plan_targets, BiasSchedule};
    use crate::nn::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn batch(rng: &mut ChaCha8Rng, b: usize, d: usize) -> Tensor {
        Tensor::from_vec(&[b, d], (0..b * d).map(|_| rng.gen::<f64>()).collect()).unwrap()
    }

    #[test]
    fn five_cycles_reach_target_nested() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = MaskedNetwork::mlp(20, &[256, 64], 10, Activation::Relu, 5).unwrap();
        let plan = plan_targets(&layer_budgets(&net), 0.5, &BiasSchedule::Neutral, 5).unwrap();
        seed_grow_masks(&mut net, &plan, 0.1, &mut rng).unwrap();
        assert_eq!(net.mask(0).active_count(), 26);
        let x = batch(&mut rng, 32, 20);
        let labels: Vec<usize> = (0..32).map(|i| i % 10).collect();
        let mut prev = net.masks();
        let mut counts = vec![];
        for t in 1..=5 {
            grow_step(&mut net, &plan, t, &GrowOptions::default(), &x, &labels, &mut rng).unwrap();
            let now = net.masks();
            for (p, n) in prev.iter().zip(&now) {
                for j in 0..p.len() {
                    assert!(!p.is_active(j) || n.is_active(j), "grow must keep active units");
                }
            }
            counts.push(now[0].active_count());
            prev = now;
        }
        assert_eq!(counts, vec![52, 78, 103, 128, 128]);
        assert_eq!(net.mask(1).active_count(), plan.unit_targets[1]);
    }

    #[test]
    fn gradmax_empty_request() {
        let net = MaskedNetwork::mlp(3, &[4], 2, Activation::Relu, 0).unwrap();
        let x = Tensor::zeros(&[1, 3]);
        assert!(gradmax_select(&net, 0, &x, &[0], 0).unwrap().is_empty());
    }
}
