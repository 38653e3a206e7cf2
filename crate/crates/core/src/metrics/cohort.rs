//! Unit-level vitality statistics and cohort comparisons around structural edits.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::{softmax_xent, MaskedNetwork, Mode};
use crate::structural::scoring::{rate_above, unit_activation_rates, unit_grad_magnitudes};
use crate::tensor::Tensor;

/// Default stabilizer for ratios.
pub const PARITY_EPS: f64 = 1e-8;

/// Fraction of a unit's post-activations above `tau`.
pub fn activation_rate(post_activations: &[f64], tau: f64) -> f64 {
    rate_above(post_activations.iter().copied(), tau)
}

/// Mean absolute pre-activation gradient.
pub fn grad_magnitude(grads: &[f64]) -> f64 {
    if grads.is_empty() {
        0.0
    } else {
        grads.iter().map(|g| g.abs()).sum::<f64>() / grads.len() as f64
    }
}

/// `R = a / (b + eps)` and `ln R`.
pub fn parity(a: f64, b: f64, eps: f64) -> (f64, f64) {
    let r = a / (b + eps);
    (r, r.ln())
}

/// Additive `mean(post - end)` and log `ln(mean(post) / (mean(end) + eps))`.
pub fn survivor_stability(post: &[f64], end: &[f64], eps: f64) -> (f64, f64) {
    let n = post.len().min(end.len());
    if n == 0 {
        return (0.0, 0.0);
    }
    let additive = post[..n].iter().zip(&end[..n]).map(|(p, e)| p - e).sum::<f64>() / n as f64;
    let mp = post[..n].iter().sum::<f64>() / n as f64;
    let me = end[..n].iter().sum::<f64>() / n as f64;
    if mp == me {
        return (additive, 0.0);
    }
    (additive, (mp / (me + eps)).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Timepoint {
    Post,
    Exit,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cohort {
    Newborn,
    Incumbent,
    Kept,
    Pruned,
}

/// Per-unit activation rate and gradient magnitude of one masked layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitStats {
    pub act: Vec<f64>,
    pub grad: Vec<f64>,
}

impl UnitStats {
    /// Cohort means over `units`; `None` for an empty cohort.
    pub fn cohort_means(&self, units: &[usize]) -> Option<(f64, f64)> {
        if units.is_empty() {
            return None;
        }
        let n = units.len() as f64;
        let a = units.iter().map(|&j| self.act[j]).sum::<f64>() / n;
        let g = units.iter().map(|&j| self.grad[j]).sum::<f64>() / n;
        Some((a, g))
    }
}

/// Measures every masked layer on one batch in evaluation mode. Inactive
/// units report zero for both signals.
pub fn measure_units(net: &MaskedNetwork, x: &Tensor, labels: &[usize], tau: f64) -> Result<Vec<UnitStats>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (logits, cache) = net.forward(x, Mode::Eval, &mut rng)?;
    let (_, g) = softmax_xent(&logits, labels)?;
    let back = net.backward(&cache, &g, None)?;
    Ok(net
        .masked_layers()
        .into_iter()
        .enumerate()
        .map(|(h, li)| {
            let mask = net.mask(h);
            let mut act = unit_activation_rates(cache.output(li), tau);
            for (j, a) in act.iter_mut().enumerate() {
                if !mask.is_active(j) {
                    *a = 0.0;
                }
            }
            UnitStats {
                act,
                grad: unit_grad_magnitudes(&back.unit_grads[h]),
            }
        })
        .collect())
}

/// One `(event, layer, timepoint, cohort)` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRecord {
    pub cycle: usize,
    pub layer: usize,
    pub timepoint: Timepoint,
    pub cohort: Cohort,
    pub units: usize,
    pub mean_act: f64,
    pub mean_grad: f64,
}

pub fn cohort_record(
    stats: &UnitStats,
    units: &[usize],
    cycle: usize,
    layer: usize,
    timepoint: Timepoint,
    cohort: Cohort,
) -> Option<CohortRecord> {
    stats.cohort_means(units).map(|(a, g)| CohortRecord {
        cycle,
        layer,
        timepoint,
        cohort,
        units: units.len(),
        mean_act: a,
        mean_grad: g,
    })
}

/// Parity of a reference cohort against a comparison cohort at one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityRecord {
    pub cycle: usize,
    pub layer: usize,
    pub reference: Cohort,
    pub comparison: Cohort,
    pub r_act: f64,
    pub log_act: f64,
    pub r_grad: f64,
    pub log_grad: f64,
}

/// Parity rows for every `(cycle, layer)` where both cohorts were recorded at
/// `timepoint`.
pub fn parity_records(
    records: &[CohortRecord],
    timepoint: Timepoint,
    reference: Cohort,
    comparison: Cohort,
    eps: f64,
) -> Vec<ParityRecord> {
    let mut by_key: BTreeMap<(usize, usize), (Option<&CohortRecord>, Option<&CohortRecord>)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.timepoint == timepoint) {
        let slot = by_key.entry((r.cycle, r.layer)).or_default();
        if r.cohort == reference {
            slot.0 = Some(r);
        } else if r.cohort == comparison {
            slot.1 = Some(r);
        }
    }
    by_key
        .into_iter()
        .filter_map(|((cycle, layer), pair)| match pair {
            (Some(a), Some(b)) => {
                let (r_act, log_act) = parity(a.mean_act, b.mean_act, eps);
                let (r_grad, log_grad) = parity(a.mean_grad, b.mean_grad, eps);
                Some(ParityRecord {
                    cycle,
                    layer,
                    reference,
                    comparison,
                    r_act,
                    log_act,
                    r_grad,
                    log_grad,
                })
            }
            _ => None,
        })
        .collect()
}

/// Per-cycle unweighted mean over layers of `(log_act, log_grad)`.
pub fn layer_averaged(parities: &[ParityRecord]) -> Vec<(usize, f64, f64)> {
    let mut by_cycle: BTreeMap<usize, Vec<&ParityRecord>> = BTreeMap::new();
    for p in parities {
        by_cycle.entry(p.cycle).or_default().push(p);
    }
    by_cycle
        .into_iter()
        .map(|(c, ps)| {
            let n = ps.len() as f64;
            (
                c,
                ps.iter().map(|p| p.log_act).sum::<f64>() / n,
                ps.iter().map(|p| p.log_grad).sum::<f64>() / n,
            )
        })
        .collect()
}

/// Newborn and incumbent cohort means of one growth event, measured
/// `age` epochs after birth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatchupPoint {
    pub cycle: usize,
    pub layer: usize,
    pub age: usize,
    pub newborn_act: f64,
    pub incumbent_act: f64,
    pub newborn_grad: f64,
    pub incumbent_grad: f64,
}

/// Newborn/incumbent ratios averaged over events at each age.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatchupRow {
    pub age: usize,
    pub events: usize,
    pub ratio_act: f64,
    pub ratio_grad: f64,
}

pub fn catchup_series(points: &[CatchupPoint], eps: f64) -> Vec<CatchupRow> {
    let mut by_age: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for p in points {
        by_age.entry(p.age).or_default().push((
            parity(p.newborn_act, p.incumbent_act, eps).0,
            parity(p.newborn_grad, p.incumbent_grad, eps).0,
        ));
    }
    by_age
        .into_iter()
        .map(|(age, rs)| {
            let n = rs.len() as f64;
            CatchupRow {
                age,
                events: rs.len(),
                ratio_act: rs.iter().map(|r| r.0).sum::<f64>() / n,
                ratio_grad: rs.iter().map(|r| r.1).sum::<f64>() / n,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signal_examples() {
        assert_eq!(activation_rate(&[0.1, 0.0, 0.06, 0.01], 0.05), 0.5);
        assert_eq!(activation_rate(&[0.0, 0.01], 0.05), 0.0);
        assert_eq!(activation_rate(&[0.0, 0.0], -1.0), 1.0);
        assert_eq!(grad_magnitude(&[0.2, -0.2]), 0.2);
        assert_eq!(grad_magnitude(&[0.0; 3]), 0.0);
    }

    #[test]
    fn parity_examples() {
        let (r, d) = parity(0.25, 0.5, 0.0);
        assert_eq!(r, 0.5);
        assert!((d + 2f64.ln()).abs() < 1e-15);
        let (r, d) = parity(0.3, 0.3, PARITY_EPS);
        assert!((r - 1.0).abs() < 1e-7 && d.abs() < 1e-7);
        let (_, ab) = parity(0.2, 0.7, PARITY_EPS);
        let (_, ba) = parity(0.7, 0.2, PARITY_EPS);
        assert!((ab + ba).abs() < 1e-7);
    }

    #[test]
    fn survivor_examples() {
        assert_eq!(survivor_stability(&[0.3, 0.5], &[0.3, 0.5], PARITY_EPS), (0.0, 0.0));
        let (add, log) = survivor_stability(&[0.4], &[0.2], PARITY_EPS);
        assert!((add - 0.2).abs() < 1e-15);
        assert!((log - 2f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn catchup_identical_cohorts() {
        let pts: Vec<CatchupPoint> = (0..3)
            .map(|age| CatchupPoint {
                cycle: 1,
                layer: 0,
                age,
                newborn_act: 0.4,
                incumbent_act: 0.4,
                newborn_grad: 0.01,
                incumbent_grad: 0.01,
            })
            .collect();
        for row in catchup_series(&pts, 0.0) {
            assert_eq!((row.ratio_act, row.ratio_grad), (1.0, 1.0));
        }
    }
}
