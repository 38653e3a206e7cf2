//! Copying Adam buffers from an active donor unit into a newborn.

use super::base::OptimizerState;
use super::slices::newborn_slices;
use crate::error::{Error, Result};
use crate::nn::{MaskedNetwork, UnitMask};

/// The unit of `mask` with the highest rate; ties go to the lowest index.
pub fn select_donor(rates: &[f64], mask: &UnitMask) -> Option<usize> {
    mask.active_indices()
        .into_iter()
        .fold(None, |best: Option<usize>, j| match best {
            Some(b) if rates[b] >= rates[j] => Some(b),
            _ => Some(j),
        })
}

/// Sets the first and second moments on the newborn slices of unit `newborn`
/// (masked layer `h`) to the donor's. The step counter is left alone.
pub fn moment_transplant(
    state: &mut OptimizerState,
    net: &MaskedNetwork,
    h: usize,
    newborn: usize,
    donor: usize,
) -> Result<()> {
    let adam = match state {
        OptimizerState::Adam(s) => s,
        OptimizerState::Sgd => {
            return Err(Error::config("moment transplant requires an adaptive optimizer"));
        }
    };
    for s in newborn_slices(net, h, donor) {
        let dst = s.with_index(newborn);
        let m = s.read(&adam.m[s.param]);
        let v = s.read(&adam.v[s.param]);
        dst.write(&mut adam.m[s.param], &m);
        dst.write(&mut adam.v[s.param], &v);
    }
    Ok(())
}
