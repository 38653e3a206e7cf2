//! Function-preserving widening: a newborn duplicates an active donor and the
//! two split the donor's outgoing weights.

use rand::Rng;

use crate::budget::{apply_mask_edit, MaskAction};
use crate::error::{Error, Result};
use crate::nn::MaskedNetwork;

/// Activates `newborns` of masked layer `h` as copies of active donors.
///
/// Donors are the active units ranked by `donor_rates` (highest first, ties to
/// the lowest index) and assigned round-robin, so a donor is reused once every
/// active unit has donated. Each newborn copies its donor's incoming row and
/// bias, adds `U[-noise_eps, noise_eps]` noise to the incoming row, and takes
/// half of the donor's current outgoing column; the donor keeps the other
/// half. Returns the donor of each newborn.
pub fn net2wider_insert<R: Rng + ?Sized>(
    net: &mut MaskedNetwork,
    h: usize,
    newborns: &[usize],
    donor_rates: &[f64],
    noise_eps: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let mut donors_ranked = net.mask(h).active_indices();
    if donors_ranked.is_empty() {
        return Err(Error::Plan(format!("layer {h}: no active donor for net2wider")));
    }
    if donor_rates.len() != net.mask(h).len() {
        return Err(Error::Shape {
            context: "net2wider donor rates",
            expected: vec![net.mask(h).len()],
            actual: vec![donor_rates.len()],
        });
    }
    if noise_eps < 0.0 {
        return Err(Error::config("net2wider noise must be non-negative"));
    }
    donors_ranked.sort_by(|&a, &b| donor_rates[b].total_cmp(&donor_rates[a]).then(a.cmp(&b)));
    apply_mask_edit(net, h, newborns, MaskAction::Activate)?;

    let li = net.masked_layer_index(h);
    let ci = net.consumer_of(h);
    let mut assigned = Vec::with_capacity(newborns.len());
    for (i, &j) in newborns.iter().enumerate() {
        let d = donors_ranked[i % donors_ranked.len()];
        assigned.push(d);
        let l = net.linear_mut(li);
        let row = l.weight.row(d).to_vec();
        let dst = l.weight.row_mut(j);
        for (w, v) in dst.iter_mut().zip(row) {
            *w = if noise_eps > 0.0 {
                v + rng.gen_range(-noise_eps..=noise_eps)
            } else {
                v
            };
        }
        l.bias.data_mut()[j] = l.bias.data()[d];
        let c = net.linear_mut(ci);
        for r in 0..c.out_dim() {
            let half = 0.5 * c.weight.at2(r, d);
            c.weight.set2(r, d, half);
            c.weight.set2(r, j, half);
        }
    }
    Ok(assigned)
}
