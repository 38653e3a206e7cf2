//! Grow and prune operators over unit masks.

pub mod grow;
pub mod net2wider;
pub mod prune;
pub mod quota;
pub mod scoring;

use serde::{Deserialize, Serialize};

use crate::budget::{apply_mask_edit, MaskAction};
use crate::error::Result;
use crate::nn::{MaskedNetwork, UnitMask};

pub use grow::{gradmax_select, grow_step, init_newborn, seed_grow_masks, GrowOptions, GrowScorer, InitPolicy};
pub use net2wider::net2wider_insert;
pub use prune::{prune_step, RewindSnapshot};
pub use quota::{grow_quota, grow_schedule, prune_quota, prune_schedule, seed_count};
pub use scoring::{score_grow_activation, score_grow_gradient, score_prune_magnitude};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditAction {
    Grow,
    Prune,
}

/// One structural edit of one masked layer. Cycle 0 marks the initial seed
/// mask of a grow run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditEvent {
    pub cycle: usize,
    pub layer: usize,
    pub action: EditAction,
    pub units: Vec<usize>,
    /// Selection score of each unit in `units`; empty for random seeding.
    pub scores: Vec<f64>,
    /// Net2Wider donor of each newborn; empty otherwise.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub donors: Vec<usize>,
}

impl EditEvent {
    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }
}

/// Applies the mask flips recorded in `events` to `net`, in order.
pub fn apply_events(net: &mut MaskedNetwork, events: &[EditEvent]) -> Result<()> {
    for e in events {
        let action = match e.action {
            EditAction::Grow => MaskAction::Activate,
            EditAction::Prune => MaskAction::Deactivate,
        };
        apply_mask_edit(net, e.layer, &e.units, action)?;
    }
    Ok(())
}

/// Rebuilds masks from an event log. Runs containing grow events start from
/// empty masks, all others from full masks.
pub fn replay_masks(net: &MaskedNetwork, events: &[EditEvent]) -> Result<Vec<UnitMask>> {
    let mut scratch = net.clone();
    let grow = events.iter().any(|e| e.action == EditAction::Grow);
    let start: Vec<UnitMask> = net
        .masked_widths()
        .into_iter()
        .map(|w| if grow { UnitMask::zeros(w) } else { UnitMask::ones(w) })
        .collect();
    scratch.set_masks(&start)?;
    apply_events(&mut scratch, events)?;
    Ok(scratch.masks())
}
