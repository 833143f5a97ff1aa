//! Particle-swarm update kernels (indices 1..=3).
//!
//! The kernels operate on a *view* of one sub-population inside the global
//! arrays: `members` lists global particle indices, and velocities are
//! updated in place at those indices. New positions are returned per member
//! and left un-repaired (boundary control runs later in the pipeline).
//!
//! Randomness contract, mirrored by the oracle tests: members in listed
//! order; per member the coordinate loop draws the velocity uniforms in
//! dimension order (`r1_j`, `r2_j`, and for FDR `r3_j`, interleaved per
//! dimension). CLPSO exemplar assignment draws happen before the velocity
//! draws of the member being refreshed.

use rand::Rng;

use crate::registry::MaterializedConfig;
use crate::rng::Stream;

/// Velocity magnitude cap as a fraction of the box width per dimension.
pub const VELOCITY_CLAMP_FRACTION: f64 = 0.2;

/// How many stagnant generations a CLPSO particle keeps its exemplars.
pub const CLPSO_REFRESH_GAP: u32 = 7;

/// Read-only view of one sub-population inside the global swarm arrays.
pub struct PsoView<'a> {
    /// Global indices of this sub-population's particles.
    pub members: &'a [usize],
    /// Global current positions.
    pub pop: &'a [Vec<f64>],
    /// Global current fitness values.
    pub fit: &'a [f64],
    /// Global personal-best positions.
    pub pbest_pos: &'a [Vec<f64>],
    /// Global personal-best fitness values.
    pub pbest_fit: &'a [f64],
    /// Best personal-best row within this sub-population.
    pub gbest: &'a [f64],
}

/// Persistent per-particle exemplar state for CLPSO, indexed by global id.
#[derive(Debug, Clone, Default)]
pub struct ClpsoMemory {
    /// Donor particle id per dimension (may be the particle itself).
    pub exemplars: Vec<Vec<usize>>,
    /// Generations since the particle's personal best last improved.
    pub stagnation: Vec<u32>,
    /// Whether the exemplar row has ever been assigned.
    pub assigned: Vec<bool>,
}

impl ClpsoMemory {
    pub fn new(np: usize, dim: usize) -> Self {
        Self {
            exemplars: vec![vec![0; dim]; np],
            stagnation: vec![0; np],
            assigned: vec![false; np],
        }
    }

    /// Record whether particle `i`'s personal best improved this generation.
    pub fn observe(&mut self, i: usize, improved: bool) {
        if improved {
            self.stagnation[i] = 0;
        } else {
            self.stagnation[i] = self.stagnation[i].saturating_add(1);
        }
    }

    /// Keep only the particles listed in `keep` (in order), renumbering ids.
    /// Particles whose donors were dropped lose their assignment.
    pub fn retain(&mut self, keep: &[usize]) {
        let old_len = self.exemplars.len();
        let mut map = vec![usize::MAX; old_len];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut exemplars = Vec::with_capacity(keep.len());
        let mut stagnation = Vec::with_capacity(keep.len());
        let mut assigned = Vec::with_capacity(keep.len());
        for &old in keep {
            let mut row = self.exemplars[old].clone();
            let mut ok = self.assigned[old];
            for d in row.iter_mut() {
                if map[*d] == usize::MAX {
                    // Dropped donor: park the id at 0 so later renumberings
                    // stay in range; the cleared flag forces reassignment.
                    ok = false;
                    *d = 0;
                } else {
                    *d = map[*d];
                }
            }
            exemplars.push(row);
            stagnation.push(self.stagnation[old]);
            assigned.push(ok);
        }
        self.exemplars = exemplars;
        self.stagnation = stagnation;
        self.assigned = assigned;
    }

    /// Drop every assignment (used after restarts).
    pub fn reset(&mut self) {
        self.stagnation.iter_mut().for_each(|s| *s = 0);
        self.assigned.iter_mut().for_each(|a| *a = false);
    }
}

/// Dispatch by variant index; returns `(global index, proposed position)`
/// pairs for every member, updating `vel` in place.
#[allow(clippy::too_many_arguments)]
pub fn pso_update(
    index: u16,
    cfg: &MaterializedConfig,
    view: &PsoView<'_>,
    vel: &mut [Vec<f64>],
    clpso: Option<&mut ClpsoMemory>,
    bounds: (f64, f64),
    rng: &mut Stream,
) -> Vec<(usize, Vec<f64>)> {
    let dim = view.pop[0].len();
    let vmax = VELOCITY_CLAMP_FRACTION * (bounds.1 - bounds.0);
    match index {
        1 => {
            let w = cfg.num_or("w", 0.7);
            let c1 = cfg.num_or("c1", 1.49445);
            let c2 = cfg.num_or("c2", 1.49445);
            view.members
                .iter()
                .map(|&g| {
                    let mut x = view.pop[g].clone();
                    for j in 0..dim {
                        let r1: f64 = rng.random();
                        let r2: f64 = rng.random();
                        let v = w * vel[g][j]
                            + c1 * r1 * (view.pbest_pos[g][j] - x[j])
                            + c2 * r2 * (view.gbest[j] - x[j]);
                        vel[g][j] = v.clamp(-vmax, vmax);
                        x[j] += vel[g][j];
                    }
                    (g, x)
                })
                .collect()
        }
        2 => {
            let w = cfg.num_or("w", 0.729);
            let c1 = cfg.num_or("c1", 1.0);
            let c2 = cfg.num_or("c2", 1.0);
            let c3 = cfg.num_or("c3", 2.0);
            view.members
                .iter()
                .map(|&g| {
                    let nbest = fdr_nbest(view, g);
                    let mut x = view.pop[g].clone();
                    for j in 0..dim {
                        let r1: f64 = rng.random();
                        let r2: f64 = rng.random();
                        let r3: f64 = rng.random();
                        let v = w * vel[g][j]
                            + c1 * r1 * (view.pbest_pos[g][j] - x[j])
                            + c2 * r2 * (view.gbest[j] - x[j])
                            + c3 * r3 * (nbest[j] - x[j]);
                        vel[g][j] = v.clamp(-vmax, vmax);
                        x[j] += vel[g][j];
                    }
                    (g, x)
                })
                .collect()
        }
        3 => {
            let w = cfg.num_or("w", 0.7);
            let c1 = cfg.num_or("c1", 1.49445);
            let c2 = cfg.num_or("c2", 1.49445);
            let mem = clpso.expect("CLPSO requires exemplar memory");
            view.members
                .iter()
                .map(|&g| {
                    let np = view.pbest_fit.len();
                    let stale = !mem.assigned[g]
                        || mem.stagnation[g] >= CLPSO_REFRESH_GAP
                        || mem.exemplars[g].iter().any(|&d| d >= np);
                    if stale {
                        mem.exemplars[g] = assign_exemplars(view, g, dim, rng);
                        mem.assigned[g] = true;
                        mem.stagnation[g] = 0;
                    }
                    let mut x = view.pop[g].clone();
                    for j in 0..dim {
                        let donor = mem.exemplars[g][j];
                        let r1: f64 = rng.random();
                        let r2: f64 = rng.random();
                        let v = w * vel[g][j]
                            + c1 * r1 * (view.pbest_pos[donor][j] - x[j])
                            + c2 * r2 * (view.gbest[j] - x[j]);
                        vel[g][j] = v.clamp(-vmax, vmax);
                        x[j] += vel[g][j];
                    }
                    (g, x)
                })
                .collect()
        }
        _ => panic!("unknown PSO variant {index}"),
    }
}

/// Per-dimension fitness-distance-ratio neighbour of particle `g`: for each
/// coordinate, the position of the sub-population member maximizing
/// `(f_g − f_p) / |x_{p,j} − x_{g,j}|` over members with a non-zero
/// denominator. With no candidate the coordinate falls back to `x_{g,j}`,
/// which makes the attraction term vanish.
pub(super) fn fdr_nbest(view: &PsoView<'_>, g: usize) -> Vec<f64> {
    let dim = view.pop[0].len();
    (0..dim)
        .map(|j| {
            let mut best: Option<(f64, usize)> = None;
            for &p in view.members {
                let gap = (view.pop[p][j] - view.pop[g][j]).abs();
                if gap == 0.0 {
                    continue;
                }
                let ratio = (view.fit[g] - view.fit[p]) / gap;
                if best.map_or(true, |(b, _)| ratio > b) {
                    best = Some((ratio, p));
                }
            }
            best.map_or(view.pop[g][j], |(_, p)| view.pop[p][j])
        })
        .collect()
}

/// Probability that a coordinate of particle `i` (global id, zero-based)
/// learns from a donor rather than its own personal best: linear from 0.05
/// for the first particle to 0.5 for the last.
pub fn clpso_pc(i: usize, np: usize) -> f64 {
    if np <= 1 {
        0.05
    } else {
        0.05 + 0.45 * i as f64 / (np - 1) as f64
    }
}

/// Draw a fresh exemplar row for particle `g`: per dimension, with
/// probability `Pc_g` a donor wins a two-particle tournament on
/// personal-best fitness among the other sub-population members; otherwise
/// the particle learns from itself. If every dimension ends up self-directed
/// one random dimension receives one random other member as donor.
fn assign_exemplars(view: &PsoView<'_>, g: usize, dim: usize, rng: &mut Stream) -> Vec<usize> {
    let pc = clpso_pc(g, view.pbest_fit.len());
    let others: Vec<usize> = view.members.iter().copied().filter(|&m| m != g).collect();
    let mut row = vec![g; dim];
    if others.is_empty() {
        return row;
    }
    for slot in row.iter_mut() {
        let r: f64 = rng.random();
        if r < pc {
            let a = others[rng.random_range(0..others.len())];
            let b = others[rng.random_range(0..others.len())];
            *slot = if view.pbest_fit[a] <= view.pbest_fit[b] { a } else { b };
        }
    }
    if row.iter().all(|&d| d == g) {
        let j = rng.random_range(0..dim);
        row[j] = others[rng.random_range(0..others.len())];
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::ParamValue;
    use crate::rng::stream;

    fn cfg(pairs: &[(&'static str, f64)]) -> MaterializedConfig {
        let mut c = MaterializedConfig::default();
        for (n, v) in pairs {
            c.push(n, ParamValue::Num(*v));
        }
        c
    }

    struct Swarm {
        pop: Vec<Vec<f64>>,
        fit: Vec<f64>,
        pbest_pos: Vec<Vec<f64>>,
        pbest_fit: Vec<f64>,
        gbest: Vec<f64>,
        members: Vec<usize>,
    }

    impl Swarm {
        fn new() -> Self {
            let pop = vec![vec![0.0, 1.0], vec![1.0, -1.0], vec![3.0, 0.5]];
            let fit = vec![9.0, 4.0, 1.0];
            Self {
                pbest_pos: pop.clone(),
                pbest_fit: fit.clone(),
                gbest: pop[2].clone(),
                members: vec![0, 1, 2],
                pop,
                fit,
            }
        }
        fn view(&self) -> PsoView<'_> {
            PsoView {
                members: &self.members,
                pop: &self.pop,
                fit: &self.fit,
                pbest_pos: &self.pbest_pos,
                pbest_fit: &self.pbest_fit,
                gbest: &self.gbest,
            }
        }
    }

    #[test]
    fn vanilla_all_zero_coefficients_freeze_the_swarm() {
        let s = Swarm::new();
        let mut vel = vec![vec![0.5, -0.5]; 3];
        let mut rng = stream(1, "pso", &[]);
        let out = pso_update(
            1,
            &cfg(&[("w", 0.0), ("c1", 0.0), ("c2", 0.0)]),
            &s.view(),
            &mut vel,
            None,
            (-5.0, 5.0),
            &mut rng,
        );
        for (g, x) in out {
            assert_eq!(x, s.pop[g]);
            assert_eq!(vel[g], vec![0.0, 0.0]);
        }
    }

    #[test]
    fn vanilla_at_both_bests_is_pure_inertia() {
        let mut s = Swarm::new();
        // Everyone sits exactly on its personal best, which is also gbest.
        s.pop = vec![vec![2.0, 2.0]; 3];
        s.pbest_pos = s.pop.clone();
        s.gbest = vec![2.0, 2.0];
        let mut vel = vec![vec![0.4, -0.2]; 3];
        let mut rng = stream(2, "pso", &[]);
        let out = pso_update(
            1,
            &cfg(&[("w", 0.5), ("c1", 2.0), ("c2", 2.0)]),
            &s.view(),
            &mut vel,
            None,
            (-5.0, 5.0),
            &mut rng,
        );
        for (g, x) in out {
            assert!((vel[g][0] - 0.2).abs() < 1e-12);
            assert!((vel[g][1] + 0.1).abs() < 1e-12);
            assert!((x[0] - 2.2).abs() < 1e-12);
            assert!((x[1] - 1.9).abs() < 1e-12);
        }
    }

    #[test]
    fn velocity_respects_the_clamp() {
        let s = Swarm::new();
        let mut vel = vec![vec![100.0, -100.0]; 3];
        let mut rng = stream(3, "pso", &[]);
        let vmax = VELOCITY_CLAMP_FRACTION * 10.0;
        pso_update(
            1,
            &cfg(&[("w", 0.9), ("c1", 2.0), ("c2", 2.0)]),
            &s.view(),
            &mut vel,
            None,
            (-5.0, 5.0),
            &mut rng,
        );
        for row in &vel {
            for &v in row {
                assert!(v.abs() <= vmax + 1e-12, "velocity {v} exceeds clamp {vmax}");
            }
        }
    }

    #[test]
    fn fdr_neighbour_matches_brute_force_enumeration() {
        // 1-D hand case with three particles; enumerate the ratio argmax.
        let mut s = Swarm::new();
        s.pop = vec![vec![0.0], vec![1.0], vec![3.0]];
        s.fit = vec![9.0, 4.0, 1.0];
        s.pbest_pos = s.pop.clone();
        s.pbest_fit = s.fit.clone();
        s.gbest = vec![3.0];
        let v = s.view();
        // i=0: (9−4)/1 = 5 beats (9−1)/3 ≈ 2.67 → neighbour x_1 = 1.
        assert_eq!(fdr_nbest(&v, 0), vec![1.0]);
        // i=1: (4−9)/1 = −5 vs (4−1)/2 = 1.5 → neighbour x_2 = 3.
        assert_eq!(fdr_nbest(&v, 1), vec![3.0]);
        // i=2: (1−9)/3 ≈ −2.67 vs (1−4)/2 = −1.5 → neighbour x_1 = 1.
        assert_eq!(fdr_nbest(&v, 2), vec![1.0]);
    }

    #[test]
    fn fdr_zero_denominator_candidates_are_skipped() {
        let mut s = Swarm::new();
        // All particles share coordinate 0; only coordinate 1 differs.
        s.pop = vec![vec![2.0, 0.0], vec![2.0, 1.0], vec![2.0, 4.0]];
        s.fit = vec![9.0, 4.0, 1.0];
        let v = s.view();
        let n = fdr_nbest(&v, 0);
        // No candidate on dim 0 → falls back to own coordinate.
        assert_eq!(n[0], 2.0);
        // Dim 1: (9−4)/1 = 5 beats (9−1)/4 = 2 → donor is particle 1.
        assert_eq!(n[1], 1.0);
    }

    #[test]
    fn clpso_pc_spans_the_documented_range() {
        assert!((clpso_pc(0, 10) - 0.05).abs() < 1e-12);
        assert!((clpso_pc(9, 10) - 0.5).abs() < 1e-12);
        assert!((clpso_pc(0, 1) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn clpso_assigns_then_reuses_then_refreshes_exemplars() {
        let s = Swarm::new();
        let mut vel = vec![vec![0.0, 0.0]; 3];
        let mut mem = ClpsoMemory::new(3, 2);
        let mut rng = stream(4, "pso-cl", &[]);
        let c = cfg(&[("w", 0.7), ("c1", 1.49445), ("c2", 1.49445)]);
        pso_update(3, &c, &s.view(), &mut vel, Some(&mut mem), (-5.0, 5.0), &mut rng);
        assert!(mem.assigned.iter().all(|&a| a));
        for (g, row) in mem.exemplars.iter().enumerate() {
            for &d in row {
                assert!(d < 3, "particle {g} has out-of-range donor {d}");
            }
        }
        let before = mem.exemplars.clone();
        // Below the refresh gap the assignment must be reused verbatim.
        for g in 0..3 {
            mem.observe(g, false);
        }
        pso_update(3, &c, &s.view(), &mut vel, Some(&mut mem), (-5.0, 5.0), &mut rng);
        assert_eq!(mem.exemplars, before);
        // At the gap the row is redrawn and the counter cleared.
        for _ in 0..CLPSO_REFRESH_GAP {
            mem.observe(0, false);
        }
        pso_update(3, &c, &s.view(), &mut vel, Some(&mut mem), (-5.0, 5.0), &mut rng);
        assert_eq!(mem.stagnation[0], 0);
    }

    #[test]
    fn clpso_single_particle_subpop_learns_from_itself() {
        let mut s = Swarm::new();
        s.members = vec![1];
        let mut vel = vec![vec![0.0, 0.0]; 3];
        let mut mem = ClpsoMemory::new(3, 2);
        let mut rng = stream(5, "pso-cl1", &[]);
        let c = cfg(&[]);
        pso_update(3, &c, &s.view(), &mut vel, Some(&mut mem), (-5.0, 5.0), &mut rng);
        assert_eq!(mem.exemplars[1], vec![1, 1]);
    }

    #[test]
    fn clpso_memory_retain_renumbers_and_invalidates() {
        let mut mem = ClpsoMemory::new(4, 2);
        mem.exemplars = vec![vec![1, 2], vec![0, 0], vec![3, 3], vec![2, 1]];
        mem.assigned = vec![true; 4];
        mem.stagnation = vec![1, 2, 3, 4];
        // Drop particle 3; keep 0, 1, 2 in order.
        mem.retain(&[0, 1, 2]);
        assert_eq!(mem.exemplars.len(), 3);
        assert!(mem.assigned[0] && mem.assigned[1]);
        // Particle 2 pointed at the dropped particle → loses assignment.
        assert!(!mem.assigned[2]);
        assert_eq!(mem.stagnation, vec![1, 2, 3]);
    }

    #[test]
    fn deterministic_given_stream() {
        for idx in 1..=3u16 {
            let s = Swarm::new();
            let run = |seed: u64| {
                let mut vel = vec![vec![0.1, -0.1]; 3];
                let mut mem = ClpsoMemory::new(3, 2);
                let mut rng = stream(seed, "pso-det", &[u64::from(idx)]);
                pso_update(
                    idx,
                    &cfg(&[]),
                    &s.view(),
                    &mut vel,
                    Some(&mut mem),
                    (-5.0, 5.0),
                    &mut rng,
                )
            };
            assert_eq!(run(9), run(9), "variant {idx}");
        }
    }
}
