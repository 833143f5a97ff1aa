//! Niching kernels (indices 1..=3): partition a population into `n_nich`
//! sub-populations of near-equal size (difference at most one; earlier
//! groups take the remainder).
//!
//! Partitions are returned as index lists into the global arrays, so the
//! caller can re-run the partitioning every generation without copying
//! rows. Randomness contract: `Rand` shuffles the index vector once;
//! `Distance` draws one seed index per group that has a membership choice.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::CoreError;
use crate::rng::Stream;

/// Target group sizes: `np` split into `n` parts, earlier parts larger.
pub fn group_sizes(np: usize, n: usize) -> Vec<usize> {
    let base = np / n;
    let extra = np % n;
    (0..n).map(|k| base + usize::from(k < extra)).collect()
}

/// Dispatch by variant index; returns disjoint index groups covering
/// `0..NP`. Requires `NP ≥ 2·n_nich` so every group can hold at least two
/// members.
pub fn niche(
    index: u16,
    pop: &[Vec<f64>],
    fit: &[f64],
    n_nich: usize,
    rng: &mut Stream,
) -> Result<Vec<Vec<usize>>, CoreError> {
    let np = pop.len();
    if n_nich < 2 || np < 2 * n_nich {
        return Err(CoreError::InvalidArgument(format!(
            "cannot split {np} individuals into {n_nich} sub-populations of at least 2"
        )));
    }
    let sizes = group_sizes(np, n_nich);
    match index {
        1 => {
            let mut idx: Vec<usize> = (0..np).collect();
            idx.shuffle(rng);
            Ok(split(idx, &sizes))
        }
        2 => {
            let mut idx: Vec<usize> = (0..np).collect();
            // Best fitness first; partition 0 holds the best block.
            idx.sort_by(|&a, &b| fit[a].partial_cmp(&fit[b]).unwrap_or(std::cmp::Ordering::Equal));
            Ok(split(idx, &sizes))
        }
        3 => {
            let mut remaining: Vec<usize> = (0..np).collect();
            let mut groups = Vec::with_capacity(n_nich);
            for &size in &sizes {
                if remaining.len() == size {
                    groups.push(std::mem::take(&mut remaining));
                    continue;
                }
                let seed_pos = rng.random_range(0..remaining.len());
                let seed = remaining.swap_remove(seed_pos);
                // Nearest neighbours of the seed fill the rest of the group;
                // ties break on the lower index for determinism.
                remaining.sort_by(|&a, &b| {
                    let da = dist2(&pop[a], &pop[seed]);
                    let db = dist2(&pop[b], &pop[seed]);
                    da.partial_cmp(&db)
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(a.cmp(&b))
                });
                let mut group = vec![seed];
                group.extend(remaining.drain(0..size - 1));
                groups.push(group);
            }
            Ok(groups)
        }
        _ => panic!("unknown niching variant {index}"),
    }
}

fn split(idx: Vec<usize>, sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(sizes.len());
    let mut it = idx.into_iter();
    for &s in sizes {
        out.push(it.by_ref().take(s).collect());
    }
    out
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn grid(np: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let pop: Vec<Vec<f64>> = (0..np).map(|i| vec![i as f64, 0.0]).collect();
        let fit: Vec<f64> = (0..np).map(|i| (np - i) as f64).collect();
        (pop, fit)
    }

    fn assert_partition(groups: &[Vec<usize>], np: usize) {
        let mut seen = vec![false; np];
        for g in groups {
            for &i in g {
                assert!(!seen[i], "index {i} appears twice");
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s), "partition does not cover 0..{np}");
        let max = groups.iter().map(Vec::len).max().unwrap();
        let min = groups.iter().map(Vec::len).min().unwrap();
        assert!(max - min <= 1, "group sizes spread more than 1");
    }

    #[test]
    fn twelve_into_three_gives_three_fours() {
        let (pop, fit) = grid(12);
        for idx in 1..=3u16 {
            let mut rng = stream(1, "nich", &[u64::from(idx)]);
            let groups = niche(idx, &pop, &fit, 3, &mut rng).unwrap();
            assert_eq!(groups.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 4]);
            assert_partition(&groups, 12);
        }
    }

    #[test]
    fn ranking_puts_the_best_block_first() {
        let (pop, fit) = grid(9);
        // Fitness decreases with index, so the best live at the high indices.
        let mut rng = stream(2, "nich", &[]);
        let groups = niche(2, &pop, &fit, 3, &mut rng).unwrap();
        let mut first = groups[0].clone();
        first.sort_unstable();
        assert_eq!(first, vec![6, 7, 8]);
    }

    #[test]
    fn distance_on_collinear_points_pairs_adjacent_neighbours() {
        let pop = vec![vec![0.0], vec![1.0], vec![10.0], vec![11.0]];
        let fit = vec![0.0; 4];
        for s in 0..40 {
            let mut rng = stream(s, "nich-dist", &[]);
            let groups = niche(3, &pop, &fit, 2, &mut rng).unwrap();
            assert_partition(&groups, 4);
            for g in &groups {
                let mut g = g.clone();
                g.sort_unstable();
                assert!(
                    g == vec![0, 1] || g == vec![2, 3],
                    "non-adjacent pairing {g:?}"
                );
            }
        }
    }

    #[test]
    fn too_small_population_is_rejected() {
        let (pop, fit) = grid(5);
        let mut rng = stream(3, "nich", &[]);
        assert!(niche(1, &pop, &fit, 3, &mut rng).is_err());
    }

    #[test]
    fn uneven_sizes_spread_by_at_most_one() {
        let (pop, fit) = grid(11);
        for idx in 1..=3u16 {
            let mut rng = stream(4, "nich", &[u64::from(idx)]);
            let groups = niche(idx, &pop, &fit, 3, &mut rng).unwrap();
            assert_eq!(groups.iter().map(Vec::len).sum::<usize>(), 11);
            assert_partition(&groups, 11);
        }
    }

    #[test]
    fn deterministic_given_stream() {
        let (pop, fit) = grid(10);
        for idx in 1..=3u16 {
            let mut r1 = stream(5, "nich-det", &[u64::from(idx)]);
            let mut r2 = stream(5, "nich-det", &[u64::from(idx)]);
            assert_eq!(
                niche(idx, &pop, &fit, 2, &mut r1).unwrap(),
                niche(idx, &pop, &fit, 2, &mut r2).unwrap()
            );
        }
    }
}
