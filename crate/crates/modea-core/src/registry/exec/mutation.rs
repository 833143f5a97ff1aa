//! Mutation kernels (DE-style indices 1..=11, GA-style 12..=13).
//!
//! Randomness contract, mirrored by the oracle tests: rows are processed in
//! order; within a row, random draws happen in the order the quantities
//! appear in the variant's formula (left to right), followed by per-dimension
//! draws for coordinate-wise operators. Index draws use rejection sampling
//! over `0..np` until the candidate differs from the base row and all earlier
//! picks; when the (sub-)population is too small to supply distinct indices,
//! all index draws become unconstrained single draws and a warning is
//! recorded.

use rand::Rng;
use rand_distr::Distribution;

use crate::registry::MaterializedConfig;
use crate::rng::Stream;

/// Parent-side inputs of a mutation call.
pub struct MutationInput<'a> {
    pub pop: &'a [Vec<f64>],
    pub fit: &'a [f64],
    /// Displaced parents `(solution, fitness)`, used by archive variants.
    pub archive: &'a [(Vec<f64>, f64)],
}

/// Dispatch by variant index; returns `np` mutant rows.
pub fn mutate(
    index: u16,
    cfg: &MaterializedConfig,
    input: &MutationInput<'_>,
    bounds: (f64, f64),
    rng: &mut Stream,
    warnings: &mut Vec<String>,
) -> Vec<Vec<f64>> {
    let np = input.pop.len();
    let dim = input.pop[0].len();
    let f1 = cfg.num_or("F1", 0.5);
    let f2 = cfg.num_or("F2", 0.5);
    let p = cfg.num_or("p", 0.05);
    let needed = distinct_needed(index);
    let relaxed = np <= needed;
    if relaxed && needed > 0 {
        warnings.push(format!(
            "mutation {index}: population of {np} cannot supply {needed} distinct partners; \
             sampling with replacement"
        ));
    }
    let order = fitness_order(input.fit);
    let best = order.first().copied().unwrap_or(0);
    let q = ((p * np as f64).ceil() as usize).max(1).min(np);

    let mut out = Vec::with_capacity(np);
    for i in 0..np {
        let mut picked: Vec<usize> = vec![i];
        let mut draw = |rng: &mut Stream| -> usize {
            let r = draw_index(rng, np, &picked, relaxed);
            picked.push(r);
            r
        };
        let x = &input.pop[i];
        let row: Vec<f64> = match index {
            1 => {
                let (r1, r2, r3) = (draw(rng), draw(rng), draw(rng));
                combine3(dim, |j| {
                    input.pop[r1][j] + f1 * (input.pop[r2][j] - input.pop[r3][j])
                })
            }
            2 => {
                let (r1, r2, r3, r4, r5) =
                    (draw(rng), draw(rng), draw(rng), draw(rng), draw(rng));
                combine3(dim, |j| {
                    input.pop[r1][j]
                        + f1 * (input.pop[r2][j] - input.pop[r3][j])
                        + f2 * (input.pop[r4][j] - input.pop[r5][j])
                })
            }
            3 => {
                let (r1, r2) = (draw(rng), draw(rng));
                combine3(dim, |j| {
                    input.pop[best][j] + f1 * (input.pop[r1][j] - input.pop[r2][j])
                })
            }
            4 => {
                let (r1, r2, r3, r4) = (draw(rng), draw(rng), draw(rng), draw(rng));
                combine3(dim, |j| {
                    input.pop[best][j]
                        + f1 * (input.pop[r1][j] - input.pop[r2][j])
                        + f2 * (input.pop[r3][j] - input.pop[r4][j])
                })
            }
            5 => {
                let (r1, r2) = (draw(rng), draw(rng));
                combine3(dim, |j| {
                    x[j] + f1 * (input.pop[best][j] - x[j])
                        + f2 * (input.pop[r1][j] - input.pop[r2][j])
                })
            }
            6 => {
                let (r1, r2, r3) = (draw(rng), draw(rng), draw(rng));
                combine3(dim, |j| {
                    x[j] + f1 * (input.pop[r1][j] - x[j])
                        + f2 * (input.pop[r2][j] - input.pop[r3][j])
                })
            }
            7 => {
                let (r1, r2) = (draw(rng), draw(rng));
                combine3(dim, |j| {
                    input.pop[r1][j] + f1 * (input.pop[best][j] - input.pop[r2][j])
                })
            }
            8 => {
                let pb = order[rng.random_range(0..q)];
                let (r1, r2) = (draw(rng), draw(rng));
                combine3(dim, |j| {
                    x[j] + f1 * (input.pop[pb][j] - x[j])
                        + f2 * (input.pop[r1][j] - input.pop[r2][j])
                })
            }
            9 => {
                let pb = order[rng.random_range(0..q)];
                let r1 = draw(rng);
                let u = draw_union(rng, np, input.archive.len(), &picked, relaxed);
                let ur = union_row(input, u);
                combine3(dim, |j| {
                    x[j] + f1 * (input.pop[pb][j] - x[j]) + f2 * (input.pop[r1][j] - ur[j])
                })
            }
            10 => {
                let r1 = draw(rng);
                let pb = order[rng.random_range(0..q)];
                let r2 = draw(rng);
                combine3(dim, |j| {
                    f1 * input.pop[r1][j] + f1 * f2 * (input.pop[pb][j] - input.pop[r2][j])
                })
            }
            11 => {
                let (r1, r2) = (draw(rng), draw(rng));
                let u = draw_union(rng, np, input.archive.len(), &picked, relaxed);
                let ur = union_row(input, u);
                combine3(dim, |j| {
                    x[j] + f1 * (input.pop[r1][j] - x[j]) + f2 * (input.pop[r2][j] - ur[j])
                })
            }
            12 => {
                let sigma = cfg.num_or("sigma", 0.1) * (bounds.1 - bounds.0);
                (0..dim)
                    .map(|j| {
                        if sigma > 0.0 {
                            rand_distr::Normal::new(x[j], sigma).unwrap().sample(rng)
                        } else {
                            x[j]
                        }
                    })
                    .collect()
            }
            13 => {
                let eta = cfg.num_or("eta_m", 20.0);
                let (lb, ub) = bounds;
                (0..dim)
                    .map(|j| {
                        let u: f64 = rng.random();
                        if u <= 0.5 {
                            let delta = (2.0 * u).powf(1.0 / (1.0 + eta)) - 1.0;
                            x[j] + delta * (x[j] - lb)
                        } else {
                            let delta = 1.0 - (2.0 - 2.0 * u).powf(1.0 / (1.0 + eta));
                            x[j] + delta * (ub - x[j])
                        }
                    })
                    .collect()
            }
            _ => panic!("unknown mutation variant {index}"),
        };
        out.push(row);
    }
    out
}

/// Number of distinct partner indices a variant draws from the population.
pub fn distinct_needed(index: u16) -> usize {
    match index {
        1 | 6 => 3,
        2 => 5,
        3 | 5 | 7 => 2,
        4 => 4,
        8 => 2,
        9 => 1,  // r1 from the population; the union draw is separate
        10 => 2, // r1 and r2
        11 => 2,
        12 | 13 => 0,
        _ => panic!("unknown mutation variant {index}"),
    }
}

fn combine3(dim: usize, f: impl Fn(usize) -> f64) -> Vec<f64> {
    (0..dim).map(f).collect()
}

/// Population indices sorted best-first (stable on ties).
pub fn fitness_order(fit: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fit.len()).collect();
    order.sort_by(|&a, &b| fit[a].partial_cmp(&fit[b]).unwrap_or(std::cmp::Ordering::Equal));
    order
}

/// One population index, distinct from `forbidden` unless `relaxed`.
pub fn draw_index(rng: &mut Stream, np: usize, forbidden: &[usize], relaxed: bool) -> usize {
    if relaxed {
        return rng.random_range(0..np);
    }
    loop {
        let r = rng.random_range(0..np);
        if !forbidden.contains(&r) {
            return r;
        }
    }
}

/// One index into population ∪ archive (`0..np` population, `np..` archive);
/// population hits must avoid `forbidden` unless `relaxed`.
pub fn draw_union(
    rng: &mut Stream,
    np: usize,
    archive_len: usize,
    forbidden: &[usize],
    relaxed: bool,
) -> usize {
    let total = np + archive_len;
    // An empty archive plus a fully-forbidden population would never yield a
    // candidate; fall back to a free draw in that corner.
    if relaxed || total <= forbidden.len() {
        return rng.random_range(0..total);
    }
    loop {
        let r = rng.random_range(0..total);
        if r >= np || !forbidden.contains(&r) {
            return r;
        }
    }
}

fn union_row<'a>(input: &'a MutationInput<'_>, idx: usize) -> &'a [f64] {
    if idx < input.pop.len() {
        &input.pop[idx]
    } else {
        &input.archive[idx - input.pop.len()].0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn square_pop() -> (Vec<Vec<f64>>, Vec<f64>) {
        let pop = vec![
            vec![0.0, 0.0],
            vec![1.0, 2.0],
            vec![0.0, 1.0],
            vec![3.0, 3.0],
            vec![-1.0, 2.0],
            vec![2.0, -2.0],
        ];
        let fit = vec![0.0, 5.0, 1.0, 18.0, 5.0, 8.0];
        (pop, fit)
    }

    fn cfg(pairs: &[(&'static str, f64)]) -> MaterializedConfig {
        let mut c = MaterializedConfig::default();
        for (n, v) in pairs {
            c.push(n, crate::registry::ParamValue::Num(*v));
        }
        c
    }

    #[test]
    fn rand1_with_zero_f_returns_population_rows() {
        let (pop, fit) = square_pop();
        let input = MutationInput { pop: &pop, fit: &fit, archive: &[] };
        let mut warn = Vec::new();
        let mut rng = stream(1, "mut", &[]);
        let out = mutate(1, &cfg(&[("F1", 0.0)]), &input, (-5.0, 5.0), &mut rng, &mut warn);
        assert!(warn.is_empty());
        for row in &out {
            assert!(pop.contains(row), "row {row:?} not a population member");
        }
    }

    #[test]
    fn best_variants_anchor_on_the_best_row() {
        let (pop, fit) = square_pop();
        let input = MutationInput { pop: &pop, fit: &fit, archive: &[] };
        let mut warn = Vec::new();
        let mut rng = stream(2, "mut", &[]);
        // F1 = 0 makes DE/best/1 return the best row for every i.
        let out = mutate(3, &cfg(&[("F1", 0.0)]), &input, (-5.0, 5.0), &mut rng, &mut warn);
        for row in &out {
            assert_eq!(row, &pop[0]);
        }
    }

    #[test]
    fn hand_checked_rand1_combination() {
        // v = x_r1 + F1 (x_r2 − x_r3) with x_r1 = (0,0), x_r2 = (1,2),
        // x_r3 = (0,1), F1 = 0.5 must give (0.5, 0.5).
        let v: Vec<f64> = (0..2)
            .map(|j| {
                let r1 = [0.0, 0.0];
                let r2 = [1.0, 2.0];
                let r3 = [0.0, 1.0];
                r1[j] + 0.5 * (r2[j] - r3[j])
            })
            .collect();
        assert_eq!(v, vec![0.5, 0.5]);
    }

    #[test]
    fn tiny_population_falls_back_with_warning() {
        let pop = vec![vec![1.0, 1.0], vec![2.0, 2.0]];
        let fit = vec![1.0, 2.0];
        let input = MutationInput { pop: &pop, fit: &fit, archive: &[] };
        let mut warn = Vec::new();
        let mut rng = stream(3, "mut", &[]);
        let out = mutate(1, &cfg(&[("F1", 0.5)]), &input, (-5.0, 5.0), &mut rng, &mut warn);
        assert_eq!(out.len(), 2);
        assert_eq!(warn.len(), 1);
        assert!(warn[0].contains("with replacement"));
    }

    #[test]
    fn gaussian_with_zero_sigma_is_identity() {
        let (pop, fit) = square_pop();
        let input = MutationInput { pop: &pop, fit: &fit, archive: &[] };
        let mut warn = Vec::new();
        let mut rng = stream(4, "mut", &[]);
        let out = mutate(12, &cfg(&[("sigma", 0.0)]), &input, (-5.0, 5.0), &mut rng, &mut warn);
        assert_eq!(out, pop);
    }

    #[test]
    fn archive_variants_reach_archive_rows() {
        // Single-member population forces the union draw into the archive
        // (relaxed mode draws freely; with F1 = 0 and F2 = 1 the mutant is
        // x + (x_r2 − archive_or_pop_row), detectable when it lands exactly
        // on x - a known archive offset).
        let pop = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0]];
        let fit = vec![0.0, 1.0, 1.0, 8.0];
        let archive = vec![(vec![10.0, 10.0], 3.0)];
        let input = MutationInput { pop: &pop, fit: &fit, archive: &archive };
        let mut warn = Vec::new();
        let mut hits = 0;
        for s in 0..200 {
            let mut rng = stream(s, "mut-arch", &[]);
            let out = mutate(
                11,
                &cfg(&[("F1", 0.0), ("F2", 1.0)]),
                &input,
                (-5.0, 5.0),
                &mut rng,
                &mut warn,
            );
            // v = x + (x_r2 − u): archive hit → coordinates shifted by -10.
            if out.iter().any(|r| r.iter().any(|&c| c < -5.0)) {
                hits += 1;
            }
        }
        assert!(hits > 0, "archive never sampled in 200 runs");
    }

    #[test]
    fn deterministic_given_stream() {
        let (pop, fit) = square_pop();
        let input = MutationInput { pop: &pop, fit: &fit, archive: &[] };
        for idx in 1..=13u16 {
            let c = cfg(&[("F1", 0.6), ("F2", 0.3), ("p", 0.4), ("sigma", 0.2), ("eta_m", 30.0)]);
            let mut w1 = Vec::new();
            let mut w2 = Vec::new();
            let mut r1 = stream(9, "mut-det", &[u64::from(idx)]);
            let mut r2 = stream(9, "mut-det", &[u64::from(idx)]);
            let a = mutate(idx, &c, &input, (-5.0, 5.0), &mut r1, &mut w1);
            let b = mutate(idx, &c, &input, (-5.0, 5.0), &mut r2, &mut w2);
            assert_eq!(a, b, "variant {idx}");
        }
    }
}
