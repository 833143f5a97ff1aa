//! Population-size schedules (indices 1..=2).
//!
//! Both curves interpolate from `np_max` at generation 0 to `np_min` at the
//! horizon `h`: variant 1 linearly, variant 2 along an exponential decay.
//! Removing the surplus individuals is the caller's job (worst fitness
//! first); this module is pure arithmetic.

/// Scheduled population size after generation `g` of `h`.
pub fn scheduled_size(index: u16, g: usize, h: usize, np_max: usize, np_min: usize) -> usize {
    assert!(np_min >= 1 && np_max >= np_min && h >= 1);
    let t = (g.min(h)) as f64 / h as f64;
    let size = match index {
        1 => ((np_min as f64 - np_max as f64) * t).round() + np_max as f64,
        2 => (np_max as f64 * (np_min as f64 / np_max as f64).powf(t)).round(),
        _ => panic!("unknown population-reduction variant {index}"),
    };
    (size as usize).clamp(np_min, np_max)
}
