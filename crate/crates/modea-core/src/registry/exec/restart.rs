//! Restart-trigger predicates (indices 1..=4).
//!
//! Each variant inspects the current population (or the best-value history)
//! and reports whether the run should re-initialize. The caller performs the
//! actual re-draw; best-so-far bookkeeping is retained outside.

/// Best-value improvement below this for [`STAGNATION_WINDOW`] generations
/// triggers variant 1.
pub const STAGNATION_EPS: f64 = 1e-10;
pub const STAGNATION_WINDOW: usize = 100;

/// Objective spread of the top 20% below this triggers variant 2.
pub const OBJ_CONVERGENCE_EPS: f64 = 1e-16;

/// Coordinate spread below this fraction of the search-space diameter
/// triggers variant 3.
pub const SOL_CONVERGENCE_FRACTION: f64 = 1e-16;

/// Variant 4 triggers when the full objective spread and the maximal
/// pairwise distance both fall under these thresholds.
pub const OBJ_AND_SOL_OBJ_EPS: f64 = 1e-8;
pub const OBJ_AND_SOL_DIST_FRACTION: f64 = 0.005;

/// Inputs of a restart check.
pub struct RestartContext<'a> {
    pub pop: &'a [Vec<f64>],
    pub fit: &'a [f64],
    /// Best-so-far objective per completed generation, most recent last.
    pub best_log: &'a [f64],
    /// Search-space diameter (corner-to-corner distance).
    pub diameter: f64,
}

/// Dispatch by variant index.
pub fn restart_triggered(index: u16, ctx: &RestartContext<'_>) -> bool {
    match index {
        1 => {
            let n = ctx.best_log.len();
            n > STAGNATION_WINDOW
                && ctx.best_log[n - 1 - STAGNATION_WINDOW] - ctx.best_log[n - 1]
                    <= STAGNATION_EPS
        }
        2 => {
            let np = ctx.fit.len();
            if np < 2 {
                return false;
            }
            // A spread needs at least two values, so the top slice is never
            // smaller than 2 even when 20% of NP rounds below that.
            let k = ((0.2 * np as f64).ceil() as usize).clamp(2, np);
            let mut sorted = ctx.fit.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            sorted[k - 1] - sorted[0] < OBJ_CONVERGENCE_EPS
        }
        3 => coordinate_spread(ctx.pop) < SOL_CONVERGENCE_FRACTION * ctx.diameter,
        4 => {
            let spread = ctx
                .fit
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max)
                - ctx.fit.iter().cloned().fold(f64::INFINITY, f64::min);
            spread < OBJ_AND_SOL_OBJ_EPS
                && max_pairwise_distance(ctx.pop) < OBJ_AND_SOL_DIST_FRACTION * ctx.diameter
        }
        _ => panic!("unknown restart variant {index}"),
    }
}

/// Largest per-dimension range, maximized over dimensions.
fn coordinate_spread(pop: &[Vec<f64>]) -> f64 {
    if pop.is_empty() {
        return 0.0;
    }
    let dim = pop[0].len();
    (0..dim)
        .map(|j| {
            let lo = pop.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
            let hi = pop.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        })
        .fold(0.0, f64::max)
}

fn max_pairwise_distance(pop: &[Vec<f64>]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in pop.iter().enumerate() {
        for b in &pop[i + 1..] {
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            best = best.max(d2.sqrt());
        }
    }
    best
}
