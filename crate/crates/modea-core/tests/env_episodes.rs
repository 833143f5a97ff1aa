//! Episode-level properties of the environment across random structures,
//! problems, and action sources.

use proptest::prelude::*;

use modea_core::env::{ActionSource, Env, EnvParams, DELTA};
use modea_core::problems::{FnId, ProblemInstance};
use modea_core::registry::{Category, ParamRange, ParamValue, Registry};
use modea_core::rng::stream;
use modea_core::structure::{generate, SpaceTag};

fn registry() -> &'static Registry {
    Registry::standard()
}

fn random_instance(seed: u64) -> ProblemInstance {
    let fns = FnId::all();
    let fn_id = fns[(seed % fns.len() as u64) as usize];
    let dim = [2usize, 5, 10][(seed / 7 % 3) as usize];
    ProblemInstance::new(fn_id, dim, seed).unwrap()
}

#[test]
fn reward_contract_holds_across_random_episodes() {
    for seed in 0..150u64 {
        let tag = SpaceTag::all()[(seed % 3) as usize];
        let mut rng = stream(seed, "episode-props", &[]);
        let structure = generate(registry(), tag, &mut rng).unwrap();
        let mut env = Env::new(
            registry(),
            structure,
            random_instance(seed),
            EnvParams {
                seed,
                horizon: 6,
                ..EnvParams::default()
            },
        )
        .unwrap();
        let mut total = 0.0;
        let mut prev = env.state().f_best;
        loop {
            let out = env.step_with(ActionSource::Defaults).unwrap();
            assert!(out.reward >= 0.0, "seed {seed}: negative reward");
            assert!(out.reward.is_finite());
            assert!(env.state().f_best <= prev);
            prev = env.state().f_best;
            total += out.reward;
            if out.done {
                break;
            }
        }
        assert!(total <= DELTA + 1e-9, "seed {seed}: episode total {total}");
    }
}

#[test]
fn feature_probes_stay_finite_and_in_range() {
    let mut probes = 0;
    for seed in 0..120u64 {
        let tag = SpaceTag::all()[(seed % 3) as usize];
        let mut rng = stream(seed, "feature-probes", &[]);
        let structure = generate(registry(), tag, &mut rng).unwrap();
        let mut env = Env::new(
            registry(),
            structure,
            random_instance(seed.wrapping_mul(31)),
            EnvParams {
                seed,
                horizon: 4,
                ..EnvParams::default()
            },
        )
        .unwrap();
        for _ in 0..4 {
            let out = env.step_with(ActionSource::Defaults).unwrap();
            for (row, &mask) in out.tokens.mask.iter().enumerate() {
                if mask == 0.0 {
                    continue;
                }
                probes += 1;
                let f = &out.tokens.opt[row];
                assert!(f.iter().all(|v| v.is_finite()));
                for &i in &[0usize, 1, 2, 3, 6, 8] {
                    assert!((0.0..=1.0).contains(&f[i]), "feature {}: {}", i + 1, f[i]);
                }
                for &i in &[4usize, 5, 7] {
                    assert!((-1.0..=1.0).contains(&f[i]), "feature {}: {}", i + 1, f[i]);
                }
            }
            if out.done {
                break;
            }
        }
    }
    assert!(probes >= 1_000, "only {probes} feature probes");
}

/// With a niching stage and a reduction schedule active at once, the group
/// partition must track the scheduled population size exactly.
#[test]
fn group_sizes_track_the_reduction_schedule() {
    let mut checked = 0;
    for seed in 0..400u64 {
        let mut rng = stream(seed, "niche-reduce", &[]);
        let s = generate(registry(), SpaceTag::All, &mut rng).unwrap();
        let has_reduction = s
            .flat()
            .iter()
            .any(|id| id.category().unwrap() == Category::PopulationReduction);
        if s.multi_niching().is_none() || !has_reduction {
            continue;
        }
        checked += 1;
        let mut env = Env::new(
            registry(),
            s,
            random_instance(seed),
            EnvParams {
                seed,
                horizon: 8,
                ..EnvParams::default()
            },
        )
        .unwrap();
        for _ in 0..8 {
            env.step_with(ActionSource::Defaults).unwrap();
            let total: usize = env.state().groups.iter().map(Vec::len).sum();
            assert_eq!(total, env.state().pop.len());
            assert!(env.state().groups.iter().all(|g| !g.is_empty()));
        }
        if checked >= 5 {
            return;
        }
    }
    assert!(checked > 0, "no niching+reduction structure in 400 seeds");
}

proptest! {
    /// Any finite raw action row materializes into the declared ranges for
    /// every controllable variant.
    #[test]
    fn materialized_parameters_respect_declared_ranges(
        raw in proptest::collection::vec(-1e6f64..1e6, 8),
        pick in 0usize..64,
    ) {
        let reg = registry();
        let controllable: Vec<_> = reg
            .variants()
            .iter()
            .filter(|v| v.id.controllable())
            .collect();
        let v = controllable[pick % controllable.len()];
        let cfg = reg.materialize(v.id, &raw).unwrap();
        for (param, (name, value)) in v.params.iter().zip(cfg.entries()) {
            prop_assert_eq!(param.name, *name);
            match (&param.range, value) {
                (ParamRange::Continuous { lo, hi }, ParamValue::Num(x)) => {
                    prop_assert!(*lo <= *x && *x <= *hi);
                }
                (ParamRange::Categorical { options }, ParamValue::Opt(i)) => {
                    prop_assert!(*i < options.len());
                }
                other => prop_assert!(false, "range/value mismatch: {:?}", other),
            }
        }
    }

    /// Structure generation never fails and always validates, for arbitrary
    /// seeds and tags.
    #[test]
    fn arbitrary_seeds_generate_legal_structures(seed in any::<u64>(), tag_ix in 0usize..3) {
        let tag = SpaceTag::all()[tag_ix];
        let mut rng = stream(seed, "prop-structures", &[]);
        let s = generate(registry(), tag, &mut rng).unwrap();
        prop_assert!(modea_core::structure::validate(registry(), &s).is_ok());
    }

    /// Episodes driven by arbitrary (finite) action rows keep the reward
    /// contract: the environment owns clamping, not the caller.
    #[test]
    fn arbitrary_actions_keep_rewards_bounded(seed in any::<u64>(), scale in 0.1f64..20.0) {
        let mut rng = stream(seed, "prop-actions", &[]);
        let tag = SpaceTag::all()[(seed % 3) as usize];
        let structure = generate(registry(), tag, &mut rng).unwrap();
        let mut env = Env::new(
            registry(),
            structure,
            ProblemInstance::new(FnId::Rastrigin, 3, seed).unwrap(),
            EnvParams { seed, horizon: 3, ..EnvParams::default() },
        )
        .unwrap();
        let n = env.controllable_ids().len();
        let mut total = 0.0;
        for step in 0..3 {
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    (0..5)
                        .map(|d| ((seed as f64) * 0.37 + (i + d + step) as f64 * 1.93).sin() * scale)
                        .collect()
                })
                .collect();
            let out = env.step_with(ActionSource::Raw(&rows)).unwrap();
            prop_assert!(out.reward >= 0.0);
            total += out.reward;
        }
        prop_assert!(total <= DELTA + 1e-9);
    }
}
