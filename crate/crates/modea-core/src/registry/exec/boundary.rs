//! Boundary-control kernels (indices 1..=5).
//!
//! Every variant repairs a trial matrix in place so that all entries end up
//! inside `[lb, ub]`; this is the only pipeline stage allowed to make that
//! guarantee. `Rand` is the sole consumer of randomness: one uniform per
//! out-of-bounds entry, visited in row-major order.

use rand::Rng;

use crate::rng::Stream;

/// Dispatch by variant index; repairs `x` in place and returns how many
/// entries needed repair.
pub fn boundary_control(
    index: u16,
    x: &mut [Vec<f64>],
    bounds: (f64, f64),
    rng: &mut Stream,
) -> usize {
    let (lb, ub) = bounds;
    let range = ub - lb;
    let mut repaired = 0;
    for row in x.iter_mut() {
        for v in row.iter_mut() {
            if *v >= lb && *v <= ub {
                continue;
            }
            repaired += 1;
            *v = match index {
                1 => v.clamp(lb, ub),
                2 => rng.random_range(lb..=ub),
                // Closed search loop: shift by whole periods into the box.
                3 => lb + (*v - ub).rem_euclid(range),
                // Mirror at the crossed bound; the fold below is the closed
                // form of iterated reflection (period 2·range triangle wave).
                4 => {
                    let y = (*v - lb).rem_euclid(2.0 * range);
                    lb + y.min(2.0 * range - y)
                }
                // Reflect past the crossed bound at half the overshoot;
                // repeats until inside (each pass halves the excursion).
                5 => {
                    let mut t = *v;
                    while t < lb || t > ub {
                        t = if t > ub {
                            ub - 0.5 * (t - ub)
                        } else {
                            lb + 0.5 * (lb - t)
                        };
                    }
                    t
                }
                _ => panic!("unknown boundary-control variant {index}"),
            };
        }
    }
    repaired
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    const B: (f64, f64) = (-5.0, 5.0);

    fn repair_one(index: u16, v: f64) -> f64 {
        let mut m = vec![vec![v]];
        let mut rng = stream(1, "bc", &[u64::from(index)]);
        boundary_control(index, &mut m, B, &mut rng);
        m[0][0]
    }

    #[test]
    fn in_bounds_points_pass_through_unchanged() {
        for index in 1..=5 {
            let mut m = vec![vec![-5.0, -1.25, 0.0, 3.5, 5.0]];
            let orig = m.clone();
            let mut rng = stream(2, "bc", &[]);
            let n = boundary_control(index, &mut m, B, &mut rng);
            assert_eq!(n, 0);
            assert_eq!(m, orig, "variant {index} touched in-bounds entries");
        }
    }

    #[test]
    fn clip_pins_to_the_violated_bound() {
        assert_eq!(repair_one(1, 7.3), 5.0);
        assert_eq!(repair_one(1, -123.0), -5.0);
    }

    #[test]
    fn periodic_hand_case() {
        // 7 with lb=−5, ub=5 → −5 + ((7−5) mod 10) = −3.
        assert_eq!(repair_one(3, 7.0), -3.0);
        // −7 wraps one period up to 3.
        assert_eq!(repair_one(3, -7.0), 3.0);
    }

    #[test]
    fn reflect_hand_case_and_deep_overshoot() {
        // 6 with ub=5 → 2·5−6 = 4.
        assert_eq!(repair_one(4, 6.0), 4.0);
        assert_eq!(repair_one(4, -6.0), -4.0);
        // 27 folds three times: 2·5−27 = −17, 2·(−5)+17 = 7, 2·5−7 = 3.
        assert_eq!(repair_one(4, 27.0), 3.0);
    }

    #[test]
    fn halving_reflects_inward_at_half_the_overshoot() {
        // 7 over ub=5 by 2 → 5 − 1 = 4.
        assert_eq!(repair_one(5, 7.0), 4.0);
        // −9 under lb=−5 by 4 → −5 + 2 = −3.
        assert_eq!(repair_one(5, -9.0), -3.0);
        // Deep overshoot needs two passes: 31 → 5 − 13 = −8 → −5 + 1.5 = −3.5.
        assert_eq!(repair_one(5, 31.0), -3.5);
    }

    #[test]
    fn every_variant_lands_inside_for_extreme_inputs() {
        let cases = [5.000001, -5.000001, 17.0, -44.5, 1e6, -1e6, 9.999e3];
        for index in 1..=5u16 {
            for &v in &cases {
                let r = repair_one(index, v);
                assert!(
                    (-5.0..=5.0).contains(&r),
                    "variant {index} left {v} at {r}"
                );
            }
        }
    }

    #[test]
    fn rand_redraws_only_violating_entries() {
        let mut m = vec![vec![9.0, 1.0], vec![-1.0, -9.0]];
        let mut rng = stream(3, "bc-rand", &[]);
        let n = boundary_control(2, &mut m, B, &mut rng);
        assert_eq!(n, 2);
        assert_eq!(m[0][1], 1.0);
        assert_eq!(m[1][0], -1.0);
        assert!((-5.0..=5.0).contains(&m[0][0]));
        assert!((-5.0..=5.0).contains(&m[1][1]));
    }
}
