//! Survivor-selection kernels (indices 1..=6), minimization throughout.
//!
//! Every variant keeps the population size fixed and reports which parent
//! rows were displaced (by index); the caller feeds those rows into the
//! archive used by the `+archive` search operators. Ties go to the
//! offspring, matching differential-evolution convention.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;

use crate::rng::Stream;

/// Linear-ranking selection pressure at the best (`p⁺`) and worst (`p⁻`)
/// pool member; their mean must be 1 so the probabilities sum to one.
pub const RANKING_P_PLUS: f64 = 1.5;
pub const RANKING_P_MINUS: f64 = 0.5;

/// Result of one selection call.
pub struct SelectionOutcome {
    pub pop: Vec<Vec<f64>>,
    pub fit: Vec<f64>,
    /// Parent indices whose rows did not survive into the next population.
    pub displaced: Vec<usize>,
}

/// Dispatch by variant index.
pub fn select(
    index: u16,
    parents: &[Vec<f64>],
    parent_fit: &[f64],
    offspring: &[Vec<f64>],
    offspring_fit: &[f64],
    rng: &mut Stream,
) -> SelectionOutcome {
    let np = parents.len();
    match index {
        // Elementwise greedy: each slot keeps the better of parent and trial.
        1 => {
            let mut pop = Vec::with_capacity(np);
            let mut fit = Vec::with_capacity(np);
            let mut displaced = Vec::new();
            for i in 0..np {
                if offspring_fit[i] <= parent_fit[i] {
                    pop.push(offspring[i].clone());
                    fit.push(offspring_fit[i]);
                    displaced.push(i);
                } else {
                    pop.push(parents[i].clone());
                    fit.push(parent_fit[i]);
                }
            }
            SelectionOutcome { pop, fit, displaced }
        }
        // Crowding: each trial challenges the Euclidean-nearest member of
        // the evolving population, sequentially, so later trials may face
        // earlier winners.
        2 => {
            let mut pop: Vec<Vec<f64>> = parents.to_vec();
            let mut fit: Vec<f64> = parent_fit.to_vec();
            let mut holds_parent = vec![true; np];
            let mut displaced = Vec::new();
            for (child, &cf) in offspring.iter().zip(offspring_fit) {
                let nearest = (0..np)
                    .min_by(|&a, &b| {
                        dist2(&pop[a], child)
                            .partial_cmp(&dist2(&pop[b], child))
                            .unwrap_or(std::cmp::Ordering::Equal)
                    })
                    .expect("non-empty population");
                if cf <= fit[nearest] {
                    if holds_parent[nearest] {
                        displaced.push(nearest);
                        holds_parent[nearest] = false;
                    }
                    pop[nearest] = child.clone();
                    fit[nearest] = cf;
                }
            }
            SelectionOutcome { pop, fit, displaced }
        }
        // PSO-like: unconditional generational replacement.
        3 => SelectionOutcome {
            pop: offspring.to_vec(),
            fit: offspring_fit.to_vec(),
            displaced: (0..np).collect(),
        },
        4 => {
            // Linear ranking over the merged pool, worst rank first: the
            // pool member at ascending rank k (0-based, worst k=0) carries
            // weight p⁻ + (p⁺−p⁻)·k/(P−1).
            let (pool, pool_fit) = merge(parents, parent_fit, offspring, offspring_fit);
            let p = pool.len();
            let mut order: Vec<usize> = (0..p).collect();
            // Descending fitness = ascending quality; worst comes first.
            order.sort_by(|&a, &b| {
                pool_fit[b]
                    .partial_cmp(&pool_fit[a])
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            let mut weights = vec![0.0; p];
            for (k, &idx) in order.iter().enumerate() {
                let t = if p > 1 { k as f64 / (p - 1) as f64 } else { 0.5 };
                weights[idx] = RANKING_P_MINUS + (RANKING_P_PLUS - RANKING_P_MINUS) * t;
            }
            sample_pool(parents, &pool, &pool_fit, &weights, np, rng)
        }
        // Tournament: each survivor is the better of two uniform pool draws
        // (with replacement).
        5 => {
            let (pool, pool_fit) = merge(parents, parent_fit, offspring, offspring_fit);
            let p = pool.len();
            let mut picks = Vec::with_capacity(np);
            for _ in 0..np {
                let a = rng.random_range(0..p);
                let b = rng.random_range(0..p);
                picks.push(if pool_fit[a] <= pool_fit[b] { a } else { b });
            }
            finish_picks(parents, &pool, &pool_fit, picks)
        }
        // Roulette: minimization turned into weights via (max f − f) + ε.
        6 => {
            let (pool, pool_fit) = merge(parents, parent_fit, offspring, offspring_fit);
            let fmax = pool_fit.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = pool_fit.iter().map(|&f| (fmax - f) + 1e-12).collect();
            sample_pool(parents, &pool, &pool_fit, &weights, np, rng)
        }
        _ => panic!("unknown selection variant {index}"),
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn merge(
    parents: &[Vec<f64>],
    parent_fit: &[f64],
    offspring: &[Vec<f64>],
    offspring_fit: &[f64],
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut pool = parents.to_vec();
    pool.extend_from_slice(offspring);
    let mut fit = parent_fit.to_vec();
    fit.extend_from_slice(offspring_fit);
    (pool, fit)
}

/// Weighted sampling of `np` survivors (with replacement) from the pool.
fn sample_pool(
    parents: &[Vec<f64>],
    pool: &[Vec<f64>],
    pool_fit: &[f64],
    weights: &[f64],
    np: usize,
    rng: &mut Stream,
) -> SelectionOutcome {
    let dist = WeightedIndex::new(weights).expect("positive selection weights");
    let picks: Vec<usize> = (0..np).map(|_| rng.sample(&dist)).collect();
    finish_picks(parents, pool, pool_fit, picks)
}

/// Assemble the next population from pool picks; a parent index counts as
/// displaced when no pick referenced it.
fn finish_picks(
    parents: &[Vec<f64>],
    pool: &[Vec<f64>],
    pool_fit: &[f64],
    picks: Vec<usize>,
) -> SelectionOutcome {
    let np = parents.len();
    let mut survived = vec![false; np];
    for &k in &picks {
        if k < np {
            survived[k] = true;
        }
    }
    SelectionOutcome {
        pop: picks.iter().map(|&k| pool[k].clone()).collect(),
        fit: picks.iter().map(|&k| pool_fit[k]).collect(),
        displaced: (0..np).filter(|&i| !survived[i]).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn rows(vals: &[f64]) -> Vec<Vec<f64>> {
        vals.iter().map(|&v| vec![v]).collect()
    }

    #[test]
    fn de_like_keeps_parents_when_all_offspring_are_worse() {
        let parents = rows(&[1.0, 2.0, 3.0]);
        let pf = vec![1.0, 2.0, 3.0];
        let off = rows(&[9.0, 9.0, 9.0]);
        let of = vec![10.0, 10.0, 10.0];
        let mut rng = stream(1, "sel", &[]);
        let out = select(1, &parents, &pf, &off, &of, &mut rng);
        assert_eq!(out.pop, parents);
        assert_eq!(out.fit, pf);
        assert!(out.displaced.is_empty());
    }

    #[test]
    fn de_like_ties_go_to_the_offspring() {
        let parents = rows(&[1.0]);
        let off = rows(&[2.0]);
        let mut rng = stream(2, "sel", &[]);
        let out = select(1, &parents, &[5.0], &off, &[5.0], &mut rng);
        assert_eq!(out.pop, off);
        assert_eq!(out.displaced, vec![0]);
    }

    #[test]
    fn pso_like_replaces_unconditionally() {
        let parents = rows(&[1.0, 2.0]);
        let off = rows(&[7.0, 8.0]);
        let mut rng = stream(3, "sel", &[]);
        let out = select(3, &parents, &[0.0, 0.0], &off, &[99.0, 99.0], &mut rng);
        assert_eq!(out.pop, off);
        assert_eq!(out.fit, vec![99.0, 99.0]);
        assert_eq!(out.displaced, vec![0, 1]);
    }

    #[test]
    fn crowding_replaces_the_nearest_parent() {
        // Offspring at 9.0 is nearest to the parent at 10.0, not the one at 0.
        let parents = rows(&[0.0, 10.0]);
        let off = rows(&[9.0]);
        let mut rng = stream(4, "sel", &[]);
        let out = select(2, &parents, &[5.0, 5.0], &off, &[1.0], &mut rng);
        assert_eq!(out.pop, rows(&[0.0, 9.0]));
        assert_eq!(out.fit, vec![5.0, 1.0]);
        assert_eq!(out.displaced, vec![1]);
    }

    #[test]
    fn crowding_loser_changes_nothing() {
        let parents = rows(&[0.0, 10.0]);
        let off = rows(&[9.0]);
        let mut rng = stream(5, "sel", &[]);
        let out = select(2, &parents, &[5.0, 5.0], &off, &[6.0], &mut rng);
        assert_eq!(out.pop, parents);
        assert!(out.displaced.is_empty());
    }

    #[test]
    fn ranking_prefers_the_better_pool_member_three_to_one() {
        // Pool of two: weights 0.75 (best) vs 0.25 (worst).
        let parents = rows(&[0.0]);
        let off = rows(&[1.0]);
        let mut hits = 0u32;
        let n = 4000u32;
        for s in 0..n {
            let mut rng = stream(u64::from(s), "sel-rank", &[]);
            let out = select(4, &parents, &[0.0], &off, &[10.0], &mut rng);
            if out.fit[0] == 0.0 {
                hits += 1;
            }
        }
        let freq = f64::from(hits) / f64::from(n);
        assert!((freq - 0.75).abs() < 0.03, "best-pick frequency {freq}");
    }

    #[test]
    fn tournament_win_rate_matches_enumeration() {
        // Better of two uniform draws from a 2-pool: P(best) = 3/4.
        let parents = rows(&[0.0]);
        let off = rows(&[1.0]);
        let mut hits = 0u32;
        let n = 4000u32;
        for s in 0..n {
            let mut rng = stream(u64::from(s), "sel-tour", &[]);
            let out = select(5, &parents, &[0.0], &off, &[10.0], &mut rng);
            if out.fit[0] == 0.0 {
                hits += 1;
            }
        }
        let freq = f64::from(hits) / f64::from(n);
        assert!((freq - 0.75).abs() < 0.03, "best-pick frequency {freq}");
    }

    #[test]
    fn roulette_weights_follow_the_minimization_transform() {
        // Pool fitness {1,3}: weights 2+ε vs ε → the better wins almost surely.
        let parents = rows(&[0.0]);
        let off = rows(&[1.0]);
        let mut hits = 0;
        for s in 0..500 {
            let mut rng = stream(s, "sel-rou", &[]);
            let out = select(6, &parents, &[1.0], &off, &[3.0], &mut rng);
            if out.fit[0] == 1.0 {
                hits += 1;
            }
        }
        assert!(hits >= 498, "better member picked only {hits}/500 times");
    }

    #[test]
    fn sampling_variants_preserve_population_size_and_report_displaced() {
        let parents = rows(&[0.0, 1.0, 2.0, 3.0]);
        let pf = vec![0.0, 1.0, 2.0, 3.0];
        let off = rows(&[4.0, 5.0, 6.0, 7.0]);
        let of = vec![4.0, 5.0, 6.0, 7.0];
        for idx in [4u16, 5, 6] {
            let mut rng = stream(7, "sel-size", &[u64::from(idx)]);
            let out = select(idx, &parents, &pf, &off, &of, &mut rng);
            assert_eq!(out.pop.len(), 4);
            assert_eq!(out.fit.len(), 4);
            assert!(out.displaced.iter().all(|&d| d < 4));
        }
    }

    #[test]
    fn deterministic_given_stream() {
        let parents = rows(&[0.0, 1.0, 2.0]);
        let pf = vec![0.0, 1.0, 2.0];
        let off = rows(&[0.5, 1.5, 2.5]);
        let of = vec![0.5, 1.5, 2.5];
        for idx in 1..=6u16 {
            let mut r1 = stream(8, "sel-det", &[u64::from(idx)]);
            let mut r2 = stream(8, "sel-det", &[u64::from(idx)]);
            let a = select(idx, &parents, &pf, &off, &of, &mut r1);
            let b = select(idx, &parents, &pf, &off, &of, &mut r2);
            assert_eq!(a.pop, b.pop);
            assert_eq!(a.fit, b.fit);
            assert_eq!(a.displaced, b.displaced);
        }
    }
}
