//! Information sharing across sub-populations: the current sub-population's
//! worst member is overwritten by a copy of the target sub-population's best
//! member. Only meaningful while niching is active.

/// Copy the best row of `groups[target]` over the worst row of
/// `groups[current]`, updating fitness alongside. Returns the global index
/// that was replaced, or `None` when `target == current` (a no-op by
/// definition) or either group is empty.
pub fn share_best(
    pop: &mut [Vec<f64>],
    fit: &mut [f64],
    groups: &[Vec<usize>],
    current: usize,
    target: usize,
) -> Option<usize> {
    if current == target {
        return None;
    }
    let best = *groups[target]
        .iter()
        .min_by(|&&a, &&b| fit[a].partial_cmp(&fit[b]).unwrap_or(std::cmp::Ordering::Equal))?;
    let worst = *groups[current]
        .iter()
        .max_by(|&&a, &&b| fit[a].partial_cmp(&fit[b]).unwrap_or(std::cmp::Ordering::Equal))?;
    pop[worst] = pop[best].clone();
    fit[worst] = fit[best];
    Some(worst)
}
