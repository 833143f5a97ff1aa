//! Crossover kernels (DE-style indices 1..=4, GA-style 5..=6).
//!
//! DE-style variants mix each mutant row with a base row (the parent, or a
//! top-p solution for the qbest variants). GA-style variants build offspring
//! from random parent pairs and ignore the incoming trial rows.
//!
//! Randomness contract, mirrored by the oracle tests: rows in order; per row
//! the draws are (variant-specific) base picks first, then the crossover
//! point(s), then one uniform per decided coordinate in dimension order.

use rand::Rng;

use super::mutation::{draw_index, fitness_order};
use crate::registry::MaterializedConfig;
use crate::rng::Stream;

/// Inputs of a crossover call.
pub struct CrossoverInput<'a> {
    pub pop: &'a [Vec<f64>],
    pub fit: &'a [f64],
    /// Mutant rows produced by the preceding mutation (DE-style variants).
    pub trial: &'a [Vec<f64>],
    pub archive: &'a [(Vec<f64>, f64)],
}

/// Dispatch by variant index; returns `np` offspring rows.
pub fn crossover(
    index: u16,
    cfg: &MaterializedConfig,
    input: &CrossoverInput<'_>,
    rng: &mut Stream,
    warnings: &mut Vec<String>,
) -> Vec<Vec<f64>> {
    let np = input.pop.len();
    let dim = input.pop[0].len();
    let cr = cfg.num_or("Cr", 0.9);
    match index {
        1 => binomial_with(input, cr, rng, |i, _| input.pop[i].clone()),
        2 => exponential(input, cr, rng),
        3 => {
            let p = cfg.num_or("p", 0.5);
            let order = fitness_order(input.fit);
            let q = ((p * np as f64).ceil() as usize).max(1).min(np);
            binomial_with(input, cr, rng, |_, rng| {
                input.pop[order[rng.random_range(0..q)]].clone()
            })
        }
        4 => {
            let p = cfg.num_or("p", 0.18);
            // Merge population and archive, rank by fitness, keep the top p.
            let mut merged: Vec<(&[f64], f64)> = input
                .pop
                .iter()
                .zip(input.fit.iter())
                .map(|(x, &f)| (x.as_slice(), f))
                .collect();
            merged.extend(input.archive.iter().map(|(x, f)| (x.as_slice(), *f)));
            merged.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
            let q = ((p * merged.len() as f64).ceil() as usize)
                .max(1)
                .min(merged.len());
            binomial_with(input, cr, rng, |_, rng| {
                merged[rng.random_range(0..q)].0.to_vec()
            })
        }
        5 => sbx(input, cfg.num_or("eta_c", 20.0), rng, warnings),
        6 => {
            let alpha = cfg.num_or("alpha", 0.5);
            let relaxed = np < 2;
            if relaxed {
                warnings.push("crossover 6: population too small for distinct parents".into());
            }
            (0..np)
                .map(|_| {
                    let p1 = rng.random_range(0..np);
                    let p2 = draw_index(rng, np, &[p1], relaxed);
                    (0..dim)
                        .map(|j| (1.0 - alpha) * input.pop[p1][j] + alpha * input.pop[p2][j])
                        .collect()
                })
                .collect()
        }
        _ => panic!("unknown crossover variant {index}"),
    }
}

/// Binomial core: coordinate `j` comes from the mutant when `rand_j < Cr` or
/// `j` is the guaranteed index `jrand`; otherwise from the base row supplied
/// by `base_of`. Draws per row: base pick (variant-dependent), `jrand`, then
/// `dim` uniforms.
fn binomial_with(
    input: &CrossoverInput<'_>,
    cr: f64,
    rng: &mut Stream,
    mut base_of: impl FnMut(usize, &mut Stream) -> Vec<f64>,
) -> Vec<Vec<f64>> {
    let np = input.pop.len();
    let dim = input.pop[0].len();
    (0..np)
        .map(|i| {
            let base = base_of(i, rng);
            let jrand = rng.random_range(0..dim);
            (0..dim)
                .map(|j| {
                    let r: f64 = rng.random();
                    if r < cr || j == jrand {
                        input.trial[i][j]
                    } else {
                        base[j]
                    }
                })
                .collect()
        })
        .collect()
}

/// Exponential core: a contiguous mutant segment starts at random index `k`
/// (always copied) and extends while fresh uniforms stay below `Cr`, capped
/// by a random length `L ∈ [1, dim−1−k]` and the vector end. Draws per row:
/// `k`, then `L` when the cap range is non-empty, then one uniform per
/// continuation attempt.
fn exponential(input: &CrossoverInput<'_>, cr: f64, rng: &mut Stream) -> Vec<Vec<f64>> {
    let np = input.pop.len();
    let dim = input.pop[0].len();
    (0..np)
        .map(|i| {
            let mut row = input.pop[i].clone();
            let k = rng.random_range(0..dim);
            let cap = dim - 1 - k;
            let l = if cap == 0 { 0 } else { rng.random_range(1..=cap) };
            row[k] = input.trial[i][k];
            for j in k + 1..=k + l {
                let r: f64 = rng.random();
                if r >= cr {
                    break;
                }
                row[j] = input.trial[i][j];
            }
            row
        })
        .collect()
}

/// Simulated binary crossover: consecutive output slots are filled pairwise
/// from two random distinct parents; each coordinate draws one uniform for
/// the spread factor. Draws per pair: `p1`, `p2`, then `dim` uniforms.
fn sbx(
    input: &CrossoverInput<'_>,
    eta: f64,
    rng: &mut Stream,
    warnings: &mut Vec<String>,
) -> Vec<Vec<f64>> {
    let np = input.pop.len();
    let dim = input.pop[0].len();
    let relaxed = np < 2;
    if relaxed {
        warnings.push("crossover 5: population too small for distinct parents".into());
    }
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(np);
    while out.len() < np {
        let p1 = rng.random_range(0..np);
        let p2 = draw_index(rng, np, &[p1], relaxed);
        let mut c1 = vec![0.0; dim];
        let mut c2 = vec![0.0; dim];
        for j in 0..dim {
            let u: f64 = rng.random();
            let beta = if u <= 0.5 {
                (2.0 * u).powf(1.0 / (eta + 1.0))
            } else {
                (1.0 / (2.0 - 2.0 * u)).powf(1.0 / (eta + 1.0))
            };
            let (a, b) = (input.pop[p1][j], input.pop[p2][j]);
            c1[j] = 0.5 * ((1.0 + beta) * a + (1.0 - beta) * b);
            c2[j] = 0.5 * ((1.0 - beta) * a + (1.0 + beta) * b);
        }
        out.push(c1);
        if out.len() < np {
            out.push(c2);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::ParamValue;
    use crate::rng::stream;

    fn fixed() -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>) {
        let pop = vec![
            vec![0.0, 0.0, 0.0, 0.0],
            vec![1.0, 1.0, 1.0, 1.0],
            vec![2.0, 2.0, 2.0, 2.0],
            vec![3.0, 3.0, 3.0, 3.0],
        ];
        let fit = vec![0.0, 4.0, 16.0, 36.0];
        let trial = vec![
            vec![9.0, 9.0, 9.0, 9.0],
            vec![8.0, 8.0, 8.0, 8.0],
            vec![7.0, 7.0, 7.0, 7.0],
            vec![6.0, 6.0, 6.0, 6.0],
        ];
        (pop, fit, trial)
    }

    fn cfg(pairs: &[(&'static str, f64)]) -> MaterializedConfig {
        let mut c = MaterializedConfig::default();
        for (n, v) in pairs {
            c.push(n, ParamValue::Num(*v));
        }
        c
    }

    #[test]
    fn binomial_cr_zero_keeps_exactly_one_mutant_coordinate() {
        let (pop, fit, trial) = fixed();
        let input = CrossoverInput { pop: &pop, fit: &fit, trial: &trial, archive: &[] };
        let mut rng = stream(1, "cx", &[]);
        let mut warn = Vec::new();
        let out = crossover(1, &cfg(&[("Cr", 0.0)]), &input, &mut rng, &mut warn);
        for (i, row) in out.iter().enumerate() {
            let mutated = row.iter().zip(&trial[i]).filter(|(a, b)| a == b).count();
            assert_eq!(mutated, 1, "row {i} kept {mutated} mutant coords: {row:?}");
        }
    }

    #[test]
    fn binomial_cr_one_copies_the_mutant() {
        let (pop, fit, trial) = fixed();
        let input = CrossoverInput { pop: &pop, fit: &fit, trial: &trial, archive: &[] };
        let mut rng = stream(2, "cx", &[]);
        let mut warn = Vec::new();
        let out = crossover(1, &cfg(&[("Cr", 1.0)]), &input, &mut rng, &mut warn);
        assert_eq!(out, trial);
    }

    #[test]
    fn exponential_copies_one_contiguous_segment() {
        let (pop, fit, trial) = fixed();
        let input = CrossoverInput { pop: &pop, fit: &fit, trial: &trial, archive: &[] };
        for s in 0..50 {
            let mut rng = stream(s, "cx-exp", &[]);
            let mut warn = Vec::new();
            let out = crossover(2, &cfg(&[("Cr", 0.7)]), &input, &mut rng, &mut warn);
            for (i, row) in out.iter().enumerate() {
                let flags: Vec<bool> =
                    row.iter().zip(&trial[i]).map(|(a, b)| a == b).collect();
                let copied = flags.iter().filter(|&&f| f).count();
                assert!(copied >= 1, "row {i} copied nothing");
                // All copied coordinates must be contiguous (no wrap-around).
                let first = flags.iter().position(|&f| f).unwrap();
                assert!(
                    flags[first..first + copied].iter().all(|&f| f),
                    "row {i} segment not contiguous: {flags:?}"
                );
                assert!(flags[first + copied..].iter().all(|&f| !f));
            }
        }
    }

    #[test]
    fn qbest_uses_top_solutions_as_base() {
        let (pop, fit, trial) = fixed();
        let input = CrossoverInput { pop: &pop, fit: &fit, trial: &trial, archive: &[] };
        // Cr = 0: each coordinate except jrand comes from the qbest base;
        // with p small the base is always the single best row (0,0,0,0).
        let mut rng = stream(3, "cx-qb", &[]);
        let mut warn = Vec::new();
        let out = crossover(3, &cfg(&[("Cr", 0.0), ("p", 0.01)]), &input, &mut rng, &mut warn);
        for (i, row) in out.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert!(
                    v == 0.0 || v == trial[i][j],
                    "row {i} coord {j} from neither best nor mutant: {v}"
                );
            }
        }
    }

    #[test]
    fn qbest_archive_pool_includes_archive_rows() {
        let (pop, fit, trial) = fixed();
        // An archive row strictly better than everything in the population.
        let archive = vec![(vec![-1.0, -1.0, -1.0, -1.0], -1.0)];
        let input = CrossoverInput { pop: &pop, fit: &fit, trial: &trial, archive: &archive };
        let mut rng = stream(4, "cx-qba", &[]);
        let mut warn = Vec::new();
        // p small enough that the pool is exactly the archive row.
        let out = crossover(4, &cfg(&[("Cr", 0.0), ("p", 0.01)]), &input, &mut rng, &mut warn);
        let hits = out
            .iter()
            .flat_map(|r| r.iter())
            .filter(|&&v| v == -1.0)
            .count();
        assert!(hits > 0, "archive base never used");
    }

    #[test]
    fn arithmetic_midpoint_hand_case() {
        let pop = vec![vec![0.0, 2.0], vec![2.0, 0.0]];
        let fit = vec![1.0, 1.0];
        let trial = pop.clone();
        let input = CrossoverInput { pop: &pop, fit: &fit, trial: &trial, archive: &[] };
        let mut rng = stream(5, "cx-ar", &[]);
        let mut warn = Vec::new();
        let out = crossover(6, &cfg(&[("alpha", 0.5)]), &input, &mut rng, &mut warn);
        for row in &out {
            assert_eq!(row, &vec![1.0, 1.0]);
        }
    }

    #[test]
    fn sbx_children_preserve_pair_sums() {
        let (pop, fit, trial) = fixed();
        let input = CrossoverInput { pop: &pop, fit: &fit, trial: &trial, archive: &[] };
        let mut rng = stream(6, "cx-sbx", &[]);
        let mut warn = Vec::new();
        let out = crossover(5, &cfg(&[("eta_c", 20.0)]), &input, &mut rng, &mut warn);
        assert_eq!(out.len(), pop.len());
        // Children come in pairs whose per-coordinate sums equal a parent-pair
        // sum; every coordinate sum must be an integer sum of two parents here.
        for pair in out.chunks(2) {
            if pair.len() == 2 {
                for j in 0..4 {
                    let s = pair[0][j] + pair[1][j];
                    assert!(
                        (s - s.round()).abs() < 1e-9,
                        "pair sum {s} not a parent-pair sum"
                    );
                }
            }
        }
    }

    #[test]
    fn deterministic_given_stream() {
        let (pop, fit, trial) = fixed();
        let archive = vec![(vec![0.5, 0.5, 0.5, 0.5], 1.0)];
        let input = CrossoverInput { pop: &pop, fit: &fit, trial: &trial, archive: &archive };
        for idx in 1..=6u16 {
            let c = cfg(&[("Cr", 0.8), ("p", 0.3), ("eta_c", 25.0), ("alpha", 0.4)]);
            let mut r1 = stream(7, "cx-det", &[u64::from(idx)]);
            let mut r2 = stream(7, "cx-det", &[u64::from(idx)]);
            let mut w = Vec::new();
            let a = crossover(idx, &c, &input, &mut r1, &mut w);
            let b = crossover(idx, &c, &input, &mut r2, &mut w);
            assert_eq!(a, b, "variant {idx}");
        }
    }
}
