//! Compactness accounting and kept-weight budget allocation.
//!
//! Each masked layer `l` has `d_l` units of weight mass `W_l` (incoming
//! weights plus bias). A global compactness `c` keeps `c * sum(d_l W_l)` weight
//! mass, split across layers in proportion to `b_l d_l W_l` and rounded to unit
//! counts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{MaskedNetwork, UnitMask};

/// Named per-layer bias scalars for distributing the kept-weight budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasSchedule {
    Neutral,
    Fc1Protect,
    Fc3Protect,
    EndsSkewed,
    Custom(Vec<f64>),
}

impl BiasSchedule {
    pub fn name(&self) -> &'static str {
        match self {
            BiasSchedule::Neutral => "neutral",
            BiasSchedule::Fc1Protect => "fc1-protect",
            BiasSchedule::Fc3Protect => "fc3-protect",
            BiasSchedule::EndsSkewed => "ends-skewed",
            BiasSchedule::Custom(_) => "custom",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().replace('_', "-").as_str() {
            "neutral" => Ok(BiasSchedule::Neutral),
            "fc1-protect" => Ok(BiasSchedule::Fc1Protect),
            "fc3-protect" => Ok(BiasSchedule::Fc3Protect),
            "ends-skewed" => Ok(BiasSchedule::EndsSkewed),
            other => Err(Error::config(format!("unknown bias schedule '{other}'"))),
        }
    }

    pub fn all_named() -> [BiasSchedule; 4] {
        [
            BiasSchedule::Neutral,
            BiasSchedule::Fc1Protect,
            BiasSchedule::Fc3Protect,
            BiasSchedule::EndsSkewed,
        ]
    }

    /// Scalars for `n` masked layers. Named schedules are defined for the
    /// three-layer head; shorter stacks use the leading entries.
    pub fn scalars(&self, n: usize) -> Result<Vec<f64>> {
        let base: Vec<f64> = match self {
            BiasSchedule::Neutral => vec![1.0; n.max(3)],
            BiasSchedule::Fc1Protect => vec![1.5, 1.5, 0.6],
            BiasSchedule::Fc3Protect => vec![0.6, 0.6, 1.5],
            BiasSchedule::EndsSkewed => vec![1.2, 0.6, 1.2],
            BiasSchedule::Custom(v) => {
                if v.len() != n {
                    return Err(Error::config(format!(
                        "custom bias schedule has {} scalars for {n} masked layers",
                        v.len()
                    )));
                }
                v.clone()
            }
        };
        if base.len() < n {
            return Err(Error::config(format!(
                "bias schedule '{}' defines {} layers, network has {n}",
                self.name(),
                base.len()
            )));
        }
        let out = base[..n].to_vec();
        if out.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(Error::config("bias scalars must be positive"));
        }
        Ok(out)
    }
}

/// Width and per-unit weight mass of one masked layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerBudget {
    pub units: usize,
    pub unit_mass: usize,
}

/// Budget description of every masked layer of a network.
pub fn layer_budgets(net: &MaskedNetwork) -> Vec<LayerBudget> {
    net.masked_layers()
        .into_iter()
        .map(|i| {
            let l = net.linear(i);
            LayerBudget {
                units: l.out_dim(),
                unit_mass: l.in_dim() + 1,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactnessPlan {
    pub global_c: f64,
    pub schedule: BiasSchedule,
    pub scalars: Vec<f64>,
    pub layers: Vec<LayerBudget>,
    /// Real-valued kept-weight share per layer.
    pub shares: Vec<f64>,
    pub unit_targets: Vec<usize>,
    pub cycles: usize,
    /// Target kept-weight mass.
    pub budget: f64,
    /// Kept-weight mass of `unit_targets`.
    pub achieved: usize,
    /// Single-unit reconciliation moves applied after rounding.
    pub reconcile_steps: usize,
    pub notes: Vec<String>,
}

impl CompactnessPlan {
    pub fn deviation(&self) -> f64 {
        self.achieved as f64 - self.budget
    }
}

/// `a / d` for a layer mask. An all-zero mask returns 0 and logs a warning.
pub fn layer_compactness(mask: &UnitMask) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::config("layer_compactness: empty mask"));
    }
    let a = mask.active_count();
    if a == 0 {
        log::warn!("layer has no active units");
    }
    Ok(a as f64 / mask.len() as f64)
}

/// Converts a global compactness into per-layer integer unit targets.
pub fn plan_targets(
    layers: &[LayerBudget],
    global_c: f64,
    schedule: &BiasSchedule,
    cycles: usize,
) -> Result<CompactnessPlan> {
    if !(global_c > 0.0 && global_c <= 1.0) {
        return Err(Error::config(format!("compactness must be in (0, 1], got {global_c}")));
    }
    if layers.is_empty() {
        return Err(Error::config("no masked layers to plan"));
    }
    if layers.iter().any(|l| l.units == 0 || l.unit_mass == 0) {
        return Err(Error::config("masked layers must have positive width and mass"));
    }
    if cycles == 0 {
        return Err(Error::config("cycle count must be at least 1"));
    }
    let scalars = schedule.scalars(layers.len())?;
    let total: f64 = layers.iter().map(|l| (l.units * l.unit_mass) as f64).sum();
    let budget = global_c * total;
    let weighted: Vec<f64> = layers
        .iter()
        .zip(&scalars)
        .map(|(l, b)| b * (l.units * l.unit_mass) as f64)
        .collect();
    let wsum: f64 = weighted.iter().sum();
    let shares: Vec<f64> = weighted.iter().map(|w| budget * w / wsum).collect();

    let mut notes = Vec::new();
    let mut targets = Vec::with_capacity(layers.len());
    for (i, (l, s)) in layers.iter().zip(&shares).enumerate() {
        let raw = (s / l.unit_mass as f64).round();
        if raw < 1.0 {
            notes.push(format!("layer {i}: target rounded to 0, clamped to 1 unit"));
        }
        if raw > l.units as f64 {
            notes.push(format!("layer {i}: target {raw} exceeds width, clamped to {}", l.units));
        }
        targets.push((raw as usize).clamp(1, l.units));
    }

    let mut steps = 0;
    loop {
        let dev: f64 = targets
            .iter()
            .zip(layers)
            .map(|(u, l)| (u * l.unit_mass) as f64)
            .sum::<f64>()
            - budget;
        // moving toward the budget: add units when short, remove when over
        let up = dev < 0.0;
        let mut best: Option<(usize, f64)> = None;
        for (i, l) in layers.iter().enumerate() {
            let u = targets[i];
            if (up && u >= l.units) || (!up && u <= 1) {
                continue;
            }
            let mass = l.unit_mass as f64;
            let new_dev = if up { dev + mass } else { dev - mass };
            if new_dev.abs() >= dev.abs() {
                continue;
            }
            let residual = shares[i] - (u as f64) * mass;
            if (up && residual <= 0.0) || (!up && residual >= 0.0) {
                continue;
            }
            if best.is_none_or(|(_, r)| residual.abs() > r) {
                best = Some((i, residual.abs()));
            }
        }
        match best {
            Some((i, _)) => {
                if up {
                    targets[i] += 1;
                } else {
                    targets[i] -= 1;
                }
                steps += 1;
            }
            None => break,
        }
    }
    let achieved = targets.iter().zip(layers).map(|(u, l)| u * l.unit_mass).sum();
    let plan = CompactnessPlan {
        global_c,
        schedule: schedule.clone(),
        scalars,
        layers: layers.to_vec(),
        shares,
        unit_targets: targets,
        cycles,
        budget,
        achieved,
        reconcile_steps: steps,
        notes,
    };
    if (plan.deviation()).abs() > 0.0 {
        log::debug!("budget deviation after reconciliation: {:.1}", plan.deviation());
    }
    Ok(plan)
}

/// Mask flip direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskAction {
    Activate,
    Deactivate,
}

/// Flips the mask of masked layer `h` at `units`. Parameters are untouched.
/// Fails without modifying anything if any index is out of range, repeated,
/// or already in the requested state.
pub fn apply_mask_edit(net: &mut MaskedNetwork, h: usize, units: &[usize], action: MaskAction) -> Result<()> {
    if h >= net.num_masked() {
        return Err(Error::config(format!("masked layer {h} does not exist")));
    }
    let mask = net.mask(h);
    let mut seen = vec![false; mask.len()];
    for &j in units {
        if j >= mask.len() {
            return Err(Error::MaskEdit {
                layer: h,
                unit: j,
                reason: "index out of range",
            });
        }
        if seen[j] {
            return Err(Error::MaskEdit {
                layer: h,
                unit: j,
                reason: "index repeated",
            });
        }
        seen[j] = true;
        match (action, mask.is_active(j)) {
            (MaskAction::Activate, true) => {
                return Err(Error::MaskEdit {
                    layer: h,
                    unit: j,
                    reason: "unit already active",
                })
            }
            (MaskAction::Deactivate, false) => {
                return Err(Error::MaskEdit {
                    layer: h,
                    unit: j,
                    reason: "unit already inactive",
                })
            }
            _ => {}
        }
    }
    let mask = net.mask_mut(h);
    for &j in units {
        mask.set(j, action == MaskAction::Activate);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    fn mlp_layers() -> Vec<LayerBudget> {
        vec![
            LayerBudget { units: 256, unit_mass: 785 },
            LayerBudget { units: 256, unit_mass: 257 },
        ]
    }

    fn head_layers() -> Vec<LayerBudget> {
        vec![
            LayerBudget { units: 512, unit_mass: 4097 },
            LayerBudget { units: 512, unit_mass: 513 },
            LayerBudget { units: 256, unit_mass: 513 },
        ]
    }

    #[test]
    fn compactness_of_masks() {
        assert_eq!(layer_compactness(&UnitMask::ones(4)).unwrap(), 1.0);
        assert_eq!(layer_compactness(&UnitMask::from_bits(&[1, 0, 1, 0])).unwrap(), 0.5);
        assert_eq!(layer_compactness(&UnitMask::zeros(3)).unwrap(), 0.0);
        assert!(layer_compactness(&UnitMask::zeros(0)).is_err());
    }

    #[test]
    fn neutral_mlp_half() {
        let plan = plan_targets(&mlp_layers(), 0.5, &BiasSchedule::Neutral, 5).unwrap();
        assert_eq!(plan.unit_targets, vec![128, 128]);
        assert_eq!(plan.reconcile_steps, 0);
    }

    #[test]
    fn neutral_head_fifth() {
        let plan = plan_targets(&head_layers(), 0.2, &BiasSchedule::Neutral, 5).unwrap();
        // round(0.2 d) = (102, 102, 51), then two single-unit moves on the
        // cheap layers close the shortfall
        assert_eq!(plan.unit_targets, vec![102, 103, 52]);
        assert!((plan.deviation() + 920.6).abs() < 1e-6);
    }

    #[test]
    fn fc3_protect_favours_last_layer() {
        let plan = plan_targets(&head_layers(), 0.5, &BiasSchedule::Fc3Protect, 5).unwrap();
        let u = &plan.unit_targets;
        assert!(u[2] as f64 / 256.0 > u[0] as f64 / 512.0);
    }

    #[test]
    fn tiny_compactness_clamps_to_one_unit() {
        let plan = plan_targets(&mlp_layers(), 1e-4, &BiasSchedule::Neutral, 5).unwrap();
        assert_eq!(plan.unit_targets, vec![1, 1]);
        assert!(!plan.notes.is_empty());
    }

    #[test]
    fn schedule_names_round_trip() {
        for s in BiasSchedule::all_named() {
            assert_eq!(BiasSchedule::parse(s.name()).unwrap(), s);
        }
        assert!(BiasSchedule::parse("bogus").is_err());
        assert!(BiasSchedule::Custom(vec![1.0]).scalars(2).is_err());
    }

    #[test]
    fn mask_edits() {
        let mut net = MaskedNetwork::mlp(3, &[2], 2, Activation::Relu, 0).unwrap();
        net.set_masks(&[UnitMask::zeros(2)]).unwrap();
        apply_mask_edit(&mut net, 0, &[1], MaskAction::Activate).unwrap();
        assert_eq!(net.mask(0).bits(), &[0, 1]);
        assert!(apply_mask_edit(&mut net, 0, &[1], MaskAction::Activate).is_err());
        net.set_masks(&[UnitMask::ones(2)]).unwrap();
        apply_mask_edit(&mut net, 0, &[0], MaskAction::Deactivate).unwrap();
        assert_eq!(net.mask(0).bits(), &[0, 1]);
        // a failing edit leaves the mask untouched
        assert!(apply_mask_edit(&mut net, 0, &[1, 0], MaskAction::Deactivate).is_err());
        assert_eq!(net.mask(0).bits(), &[0, 1]);
    }
}
