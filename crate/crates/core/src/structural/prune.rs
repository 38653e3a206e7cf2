use serde::{Deserialize, Serialize};

use super::grow::check_plan;
use super::quota::prune_quota;
use super::scoring::{bottom_k, score_prune_magnitude};
use super::{EditAction, EditEvent};
use crate::budget::{apply_mask_edit, CompactnessPlan, MaskAction};
use crate::error::{Error, Result};
use crate::nn::{MaskedNetwork, ParamKind};
use crate::tensor::Tensor;

/// Frozen copy of every parameter tensor, in [`MaskedNetwork::params`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewindSnapshot {
    epoch: usize,
    params: Vec<Tensor>,
}

impl RewindSnapshot {
    pub fn capture(net: &MaskedNetwork, epoch: usize) -> Self {
        RewindSnapshot {
            epoch,
            params: net.params().into_iter().cloned().collect(),
        }
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    /// Resets the surviving slices of every masked layer to the snapshot: the
    /// incoming rows and biases of active units and the matching input columns
    /// of each consumer layer.
    pub fn rewind(&self, net: &mut MaskedNetwork) -> Result<()> {
        if self.params.iter().map(Tensor::shape).ne(net.param_shapes().iter().map(Vec::as_slice)) {
            return Err(Error::config("rewind snapshot does not match the network"));
        }
        for h in 0..net.num_masked() {
            let li = net.masked_layer_index(h);
            let ci = net.consumer_of(h);
            let active = net.mask(h).active_indices();
            let (wi, bi) = (net.param_index(li, ParamKind::Weight), net.param_index(li, ParamKind::Bias));
            let cwi = net.param_index(ci, ParamKind::Weight);
            let (sw, sb, scw) = (&self.params[wi], &self.params[bi], &self.params[cwi]);
            let l = net.linear_mut(li);
            for &j in &active {
                l.weight.row_mut(j).copy_from_slice(sw.row(j));
                l.bias.data_mut()[j] = sb.data()[j];
            }
            let c = net.linear_mut(ci);
            for r in 0..c.out_dim() {
                for &j in &active {
                    c.weight.set2(r, j, scw.at2(r, j));
                }
            }
        }
        Ok(())
    }
}

/// Prune cycle `t`: deactivates the per-layer quota of lowest-magnitude active
/// units. With a snapshot, survivors are rewound whenever a mask changed.
pub fn prune_step(
    net: &mut MaskedNetwork,
    plan: &CompactnessPlan,
    t: usize,
    rewind: Option<&RewindSnapshot>,
) -> Result<Vec<EditEvent>> {
    check_plan(net, plan)?;
    let mut events = Vec::with_capacity(net.num_masked());
    for h in 0..net.num_masked() {
        let a = net.mask(h).active_count();
        let k = prune_quota(a, plan.unit_targets[h], t, plan.cycles);
        let scores = score_prune_magnitude(net, h);
        if k > scores.len() {
            return Err(Error::Plan(format!("layer {h}: prune quota {k} exceeds {a} active units")));
        }
        let units = bottom_k(&scores, k);
        let unit_scores = units
            .iter()
            .map(|u| scores.iter().find(|(j, _)| j == u).map(|s| s.1).unwrap_or(0.0))
            .collect();
        events.push(EditEvent {
            cycle: t,
            layer: h,
            action: EditAction::Prune,
            units,
            scores: unit_scores,
            donors: Vec::new(),
        });
    }
    for e in &events {
        apply_mask_edit(net, e.layer, &e.units, MaskAction::Deactivate)?;
    }
    if let Some(snap) = rewind {
        if events.iter().any(|e| !e.is_empty()) {
            snap.rewind(net)?;
        }
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::budget::{layer_budgets, plan_targets, BiasSchedule};
    use crate::nn::{Activation, UnitMask};

    #[test]
    fn prunes_lowest_magnitude() {
        let mut net = MaskedNetwork::mlp(2, &[3], 2, Activation::Relu, 0).unwrap();
        net.linear_mut(0).weight = Tensor::from_vec(&[3, 2], vec![0.1, -0.1, 0.9, 0.9, -0.5, 0.5]).unwrap();
        let mut plan = plan_targets(&layer_budgets(&net), 0.67, &BiasSchedule::Neutral, 1).unwrap();
        plan.unit_targets = vec![2];
        let ev = prune_step(&mut net, &plan, 1, None).unwrap();
        assert_eq!(ev[0].units, vec![0]);
        assert_eq!(net.mask(0).bits(), &[0, 1, 1]);
    }

    #[test]
    fn rewind_restores_survivors_and_is_idempotent() {
        let mut net = MaskedNetwork::mlp(4, &[5, 3], 2, Activation::Relu, 2).unwrap();
        let snap = RewindSnapshot::capture(&net, 0);
        for p in net.params_mut() {
            p.scale(1.7);
        }
        net.set_masks(&[UnitMask::from_bits(&[1, 0, 1, 1, 0]), UnitMask::from_bits(&[0, 1, 1])])
            .unwrap();
        snap.rewind(&mut net).unwrap();
        let once = net.clone();
        snap.rewind(&mut net).unwrap();
        assert_eq!(once, net);
        let w0 = &net.linear(0).weight;
        assert_eq!(w0.row(2), snap.params()[0].row(2));
        // pruned row keeps its trained value
        assert_ne!(w0.row(1), snap.params()[0].row(1));
        // consumer column of a survivor is rewound
        assert_eq!(net.linear(1).weight.at2(1, 3), snap.params()[2].at2(1, 3));
    }
}
