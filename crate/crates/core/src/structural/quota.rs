//! Per-cycle edit quotas. Both sides spread the remaining distance to the
//! target evenly over the cycles left, so the target is met at cycle `T`.

fn spread(q: usize, t: usize, cycles: usize) -> usize {
    let left = cycles.saturating_sub(t).max(1);
    q.div_ceil(left)
}

/// Units to activate at cycle `t` (1-based) of `cycles`.
pub fn grow_quota(active: usize, target: usize, width: usize, t: usize, cycles: usize) -> usize {
    let q = target.saturating_sub(active);
    q.min(spread(q, t, cycles)).min(width.saturating_sub(active))
}

/// Units to deactivate at cycle `t` (1-based) of `cycles`.
pub fn prune_quota(active: usize, target: usize, t: usize, cycles: usize) -> usize {
    let q = active.saturating_sub(target);
    q.min(spread(q, t, cycles)).min(active)
}

/// Initial active count of a grow run: `round(fraction * width)`, at least one
/// unit and never above the target.
pub fn seed_count(width: usize, fraction: f64, target: usize) -> usize {
    let raw = (fraction * width as f64).round() as usize;
    raw.clamp(1, target.max(1))
}

/// Active count after each cycle `1..=cycles` of a grow run.
pub fn grow_schedule(seed: usize, target: usize, width: usize, cycles: usize) -> Vec<usize> {
    let mut a = seed;
    (1..=cycles)
        .map(|t| {
            a += grow_quota(a, target, width, t, cycles);
            a
        })
        .collect()
}

/// Active count after each cycle `1..=cycles` of a prune run.
pub fn prune_schedule(width: usize, target: usize, cycles: usize) -> Vec<usize> {
    let mut a = width;
    (1..=cycles)
        .map(|t| {
            a -= prune_quota(a, target, t, cycles);
            a
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quota_examples() {
        assert_eq!(grow_quota(26, 128, 256, 1, 5), 26);
        assert_eq!(grow_quota(128, 128, 256, 3, 5), 0);
        assert_eq!(grow_quota(100, 128, 256, 5, 5), 28);
        assert_eq!(prune_quota(256, 128, 1, 5), 32);
    }

    #[test]
    fn default_schedules() {
        assert_eq!(seed_count(256, 0.1, 128), 26);
        assert_eq!(grow_schedule(26, 128, 256, 5), vec![52, 78, 103, 128, 128]);
        assert_eq!(prune_schedule(256, 128, 5), vec![224, 192, 160, 128, 128]);
    }

    #[test]
    fn single_cycle_closes_gap() {
        assert_eq!(grow_schedule(3, 40, 50, 1), vec![40]);
        assert_eq!(prune_schedule(50, 7, 1), vec![7]);
    }
}
