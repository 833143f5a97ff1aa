//! Declarative descriptions of every operator variant: configuration space,
//! chaining rules, and ensemble membership for multi-strategy operators.

use serde::Serialize;

use super::ids::{Category, ModuleId};

/// Value domain of one configuration dimension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ParamRange {
    Continuous { lo: f64, hi: f64 },
    Categorical { options: Vec<&'static str> },
}

/// Default behaviour of one configuration dimension when no controller sets
/// it. `RandomOption` re-draws a category uniformly each time it is asked for
/// (used by ensemble `op` choices documented as "random selection in default").
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ParamDefault {
    Value(f64),
    Option(usize),
    RandomOption,
}

/// One dimension of a variant's configuration space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigParam {
    pub name: &'static str,
    pub range: ParamRange,
    pub default: ParamDefault,
}

impl ConfigParam {
    pub fn cont(name: &'static str, lo: f64, hi: f64, def: f64) -> Self {
        ConfigParam {
            name,
            range: ParamRange::Continuous { lo, hi },
            default: ParamDefault::Value(def),
        }
    }

    pub fn cat(name: &'static str, options: &[&'static str], def: ParamDefault) -> Self {
        ConfigParam {
            name,
            range: ParamRange::Categorical {
                options: options.to_vec(),
            },
            default: def,
        }
    }

    /// Number of categorical options, or 0 for continuous dimensions.
    pub fn option_count(&self) -> usize {
        match &self.range {
            ParamRange::Continuous { .. } => 0,
            ParamRange::Categorical { options } => options.len(),
        }
    }
}

/// A category-level entry in a variant's follower list. `DeMutation` /
/// `GaMutation` and `DeCrossover` / `GaCrossover` split their categories at
/// the style boundary used by the chaining rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FollowerEntry {
    DeMutation,
    GaMutation,
    DeCrossover,
    GaCrossover,
    PsoUpdate,
    BoundaryControl,
    Selection,
    RestartStrategy,
    PopulationReduction,
    Completed,
    /// Only legal in structures that contain a niching stage.
    InformationSharing,
    MultiStrategy,
}

/// Algorithm family a variant belongs to. Variants of different families
/// never co-occur in one structure; `Neutral` variants are shared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Family {
    De,
    PsoGa,
    Neutral,
}

/// Ensemble description for multi-strategy variants: the category the variant
/// acts as, the member variant indices within that category (in `op` option
/// order), and the branch count for niching ensembles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MsInfo {
    pub acts_as: Category,
    pub members: Vec<u16>,
    pub n_sub: Option<usize>,
}

/// Full description of one registered operator variant.
#[derive(Debug, Clone, Serialize)]
pub struct SubModuleSpec {
    pub id: ModuleId,
    pub name: String,
    pub summary: &'static str,
    pub params: Vec<ConfigParam>,
    pub followers: Vec<FollowerEntry>,
    pub family: Family,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ms: Option<MsInfo>,
}

impl SubModuleSpec {
    pub fn category(&self) -> Category {
        self.id.category().expect("registered id always decodes")
    }

    /// Number of configuration dimensions (0 for uncontrollable variants).
    pub fn config_dims(&self) -> usize {
        self.params.len()
    }
}

const F_DEF: f64 = 0.5;

fn de_mut(
    index: u16,
    name: &'static str,
    summary: &'static str,
    params: Vec<ConfigParam>,
) -> SubModuleSpec {
    SubModuleSpec {
        id: ModuleId::new(Category::Mutation, index),
        name: name.into(),
        summary,
        params,
        followers: vec![FollowerEntry::DeCrossover, FollowerEntry::MultiStrategy],
        family: Family::De,
        ms: None,
    }
}

fn f1() -> ConfigParam {
    ConfigParam::cont("F1", 0.0, 1.0, F_DEF)
}

fn f2() -> ConfigParam {
    ConfigParam::cont("F2", 0.0, 1.0, F_DEF)
}

/// Build the standard variant table.
pub(super) fn standard_table() -> Vec<SubModuleSpec> {
    let mut t: Vec<SubModuleSpec> = Vec::with_capacity(59);
    let init_followers = vec![
        FollowerEntry::DeMutation,
        FollowerEntry::PsoUpdate,
        FollowerEntry::GaCrossover,
        FollowerEntry::MultiStrategy,
    ];

    // ------------------------------------------------------------------
    // Initialization (uncontrollable)
    // ------------------------------------------------------------------
    let inits: [(&'static str, &'static str); 5] = [
        ("Uniform", "Sample the population uniformly within the bounds"),
        ("Sobol", "Sample the population from a scrambled Sobol sequence"),
        ("LHS", "Latin hypercube sampling with one point per slice and dimension"),
        ("Halton", "Sample the population from a scrambled Halton sequence"),
        (
            "Normal",
            "Sample around the box centre, N((ub+lb)/2, (ub-lb)/6), clipped to the bounds",
        ),
    ];
    for (i, (name, summary)) in inits.into_iter().enumerate() {
        t.push(SubModuleSpec {
            id: ModuleId::new(Category::Initialization, i as u16 + 1),
            name: name.into(),
            summary,
            params: vec![],
            followers: init_followers.clone(),
            family: Family::Neutral,
            ms: None,
        });
    }

    // ------------------------------------------------------------------
    // Niching (uncontrollable). These variants never appear in structures
    // directly; they are the member methods of the Multi_Niching ensembles.
    // ------------------------------------------------------------------
    let nichings: [(&'static str, &'static str); 3] = [
        ("Rand", "Partition the population into sub-populations at random"),
        (
            "Ranking",
            "Sort by fitness and cut the ranking into contiguous sub-populations",
        ),
        (
            "Distance",
            "Grow each sub-population from a random pick and its nearest neighbours",
        ),
    ];
    for (i, (name, summary)) in nichings.into_iter().enumerate() {
        t.push(SubModuleSpec {
            id: ModuleId::new(Category::Niching, i as u16 + 1),
            name: name.into(),
            summary,
            params: vec![],
            followers: init_followers.clone(),
            family: Family::Neutral,
            ms: None,
        });
    }

    // ------------------------------------------------------------------
    // Boundary control (uncontrollable)
    // ------------------------------------------------------------------
    let bcs: [(&'static str, &'static str); 5] = [
        ("Clip", "Clamp out-of-bounds coordinates onto the violated bound"),
        ("Rand", "Redraw out-of-bounds coordinates uniformly within the bounds"),
        ("Periodic", "Wrap out-of-bounds coordinates periodically across the box"),
        ("Reflect", "Mirror out-of-bounds coordinates back across the violated bound"),
        (
            "Halving",
            "Move out-of-bounds coordinates back past the bound by half their overshoot",
        ),
    ];
    for (i, (name, summary)) in bcs.into_iter().enumerate() {
        t.push(SubModuleSpec {
            id: ModuleId::new(Category::BoundaryControl, i as u16 + 1),
            name: name.into(),
            summary,
            params: vec![],
            followers: vec![FollowerEntry::Selection],
            family: Family::Neutral,
            ms: None,
        });
    }

    // ------------------------------------------------------------------
    // Selection (uncontrollable)
    // ------------------------------------------------------------------
    let sel_followers = vec![
        FollowerEntry::RestartStrategy,
        FollowerEntry::PopulationReduction,
        FollowerEntry::Completed,
        FollowerEntry::InformationSharing,
    ];
    let sels: [(&'static str, &'static str); 6] = [
        ("DE-like", "Each offspring replaces its parent when not worse"),
        (
            "Crowding",
            "Each offspring competes with its nearest current solution",
        ),
        ("PSO-like", "Offspring replace parents unconditionally"),
        (
            "Ranking",
            "Draw survivors from parents and offspring with linear rank probabilities",
        ),
        (
            "Tournament",
            "Draw random pairs from parents and offspring; the better one survives",
        ),
        (
            "Roulette",
            "Draw survivors proportionally to inverted objective values",
        ),
    ];
    for (i, (name, summary)) in sels.into_iter().enumerate() {
        t.push(SubModuleSpec {
            id: ModuleId::new(Category::Selection, i as u16 + 1),
            name: name.into(),
            summary,
            params: vec![],
            followers: sel_followers.clone(),
            family: Family::Neutral,
            ms: None,
        });
    }

    // ------------------------------------------------------------------
    // Restart strategies (uncontrollable)
    // ------------------------------------------------------------------
    let restarts: [(&'static str, &'static str); 4] = [
        (
            "Stagnation",
            "Restart when the best value has improved at most 1e-10 for 100 generations",
        ),
        (
            "Obj_Convergence",
            "Restart when the top-20% objective values span less than 1e-16",
        ),
        (
            "Solution_Convergence",
            "Restart when the coordinate spread falls below 1e-16 of the search diameter",
        ),
        (
            "Obj&Solution_Convergence",
            "Restart when objectives span < 1e-8 and solutions lie within 0.005 of the diameter",
        ),
    ];
    for (i, (name, summary)) in restarts.into_iter().enumerate() {
        t.push(SubModuleSpec {
            id: ModuleId::new(Category::RestartStrategy, i as u16 + 1),
            name: name.into(),
            summary,
            params: vec![],
            followers: vec![FollowerEntry::Completed],
            family: Family::Neutral,
            ms: None,
        });
    }

    // ------------------------------------------------------------------
    // Population reduction (uncontrollable)
    // ------------------------------------------------------------------
    let reds: [(&'static str, &'static str); 2] = [
        ("Linear", "Shrink the population linearly from NP_max to NP_min"),
        (
            "Non-Linear",
            "Shrink the population geometrically from NP_max to NP_min",
        ),
    ];
    for (i, (name, summary)) in reds.into_iter().enumerate() {
        t.push(SubModuleSpec {
            id: ModuleId::new(Category::PopulationReduction, i as u16 + 1),
            name: name.into(),
            summary,
            params: vec![],
            followers: vec![FollowerEntry::RestartStrategy, FollowerEntry::Completed],
            family: Family::Neutral,
            ms: None,
        });
    }

    // ------------------------------------------------------------------
    // Completed (uncontrollable, terminal)
    // ------------------------------------------------------------------
    t.push(SubModuleSpec {
        id: ModuleId::new(Category::Completed, 1),
        name: "Completed".into(),
        summary: "Marks the end of an algorithm structure; performs no operation",
        params: vec![],
        followers: vec![],
        family: Family::Neutral,
        ms: None,
    });

    // ------------------------------------------------------------------
    // Mutation (controllable). Indices 1..=11 are DE-style, 12..=13 GA-style.
    // ------------------------------------------------------------------
    t.push(de_mut(
        1,
        "DE/rand/1",
        "v = x_r1 + F1*(x_r2 - x_r3)",
        vec![f1()],
    ));
    t.push(de_mut(
        2,
        "DE/rand/2",
        "v = x_r1 + F1*(x_r2 - x_r3) + F2*(x_r4 - x_r5)",
        vec![f1(), f2()],
    ));
    t.push(de_mut(
        3,
        "DE/best/1",
        "v = x_best + F1*(x_r1 - x_r2)",
        vec![f1()],
    ));
    t.push(de_mut(
        4,
        "DE/best/2",
        "v = x_best + F1*(x_r1 - x_r2) + F2*(x_r3 - x_r4)",
        vec![f1(), f2()],
    ));
    t.push(de_mut(
        5,
        "DE/current-to-best/1",
        "v = x_i + F1*(x_best - x_i) + F2*(x_r1 - x_r2)",
        vec![f1(), f2()],
    ));
    t.push(de_mut(
        6,
        "DE/current-to-rand/1",
        "v = x_i + F1*(x_r1 - x_i) + F2*(x_r2 - x_r3)",
        vec![f1(), f2()],
    ));
    t.push(de_mut(
        7,
        "DE/rand-to-best/1",
        "v = x_r1 + F1*(x_best - x_r2)",
        vec![f1()],
    ));
    t.push(de_mut(
        8,
        "DE/current-to-pbest/1",
        "v = x_i + F1*(x_pbest - x_i) + F2*(x_r1 - x_r2)",
        vec![f1(), f2(), ConfigParam::cont("p", 0.0, 1.0, 0.05)],
    ));
    t.push(de_mut(
        9,
        "DE/current-to-pbest/1+archive",
        "current-to-pbest/1 with x_r2 drawn from population plus archive",
        vec![f1(), f2(), ConfigParam::cont("p", 0.0, 1.0, 0.05)],
    ));
    t.push(de_mut(
        10,
        "DE/weighted-rand-to-pbest/1",
        "v = F1*x_r1 + F1*F2*(x_pbest - x_r2)",
        vec![f1(), f2(), ConfigParam::cont("p", 0.0, 1.0, 0.05)],
    ));
    t.push(de_mut(
        11,
        "DE/current-to-rand/1+archive",
        "current-to-rand/1 with x_r3 drawn from population plus archive",
        vec![f1(), f2()],
    ));
    let ga_mut_followers = vec![FollowerEntry::BoundaryControl, FollowerEntry::MultiStrategy];
    t.push(SubModuleSpec {
        id: ModuleId::new(Category::Mutation, 12),
        name: "Gaussian".into(),
        summary: "v = N(x_i, sigma*(ub-lb)) per coordinate",
        params: vec![ConfigParam::cont("sigma", 0.0, 1.0, 0.1)],
        followers: ga_mut_followers.clone(),
        family: Family::PsoGa,
        ms: None,
    });
    t.push(SubModuleSpec {
        id: ModuleId::new(Category::Mutation, 13),
        name: "Polynomial".into(),
        summary: "Polynomial mutation with distribution index eta_m",
        params: vec![ConfigParam::cont("eta_m", 20.0, 100.0, 20.0)],
        followers: ga_mut_followers,
        family: Family::PsoGa,
        ms: None,
    });

    // ------------------------------------------------------------------
    // Crossover (controllable). Indices 1..=4 are DE-style, 5..=6 GA-style.
    // ------------------------------------------------------------------
    let de_cross_followers = vec![FollowerEntry::BoundaryControl, FollowerEntry::MultiStrategy];
    let cr = |def: f64| ConfigParam::cont("Cr", 0.0, 1.0, def);
    t.push(SubModuleSpec {
        id: ModuleId::new(Category::Crossover, 1),
        name: "Binomial".into(),
        summary: "Keep each mutant coordinate with probability Cr; one is always kept",
        params: vec![cr(0.9)],
        followers: de_cross_followers.clone(),
        family: Family::De,
        ms: None,
    });
    t.push(SubModuleSpec {
        id: ModuleId::new(Category::Crossover, 2),
        name: "Exponential".into(),
        summary: "Copy a contiguous mutant segment starting at a random index",
        params: vec![cr(0.9)],
        followers: de_cross_followers.clone(),
        family: Family::De,
        ms: None,
    });
    t.push(SubModuleSpec {
        id: ModuleId::new(Category::Crossover, 3),
        name: "qbest_Binomial".into(),
        summary: "Binomial crossover against a random top-p solution instead of the parent",
        params: vec![cr(0.9), ConfigParam::cont("p", 0.0, 1.0, 0.5)],
        followers: de_cross_followers.clone(),
        family: Family::De,
        ms: None,
    });
    t.push(SubModuleSpec {
        id: ModuleId::new(Category::Crossover, 4),
        name: "qbest_Binomial+archive".into(),
        summary: "qbest binomial with the top-p pool drawn from population plus archive",
        params: vec![cr(0.9), ConfigParam::cont("p", 0.0, 1.0, 0.18)],
        followers: de_cross_followers,
        family: Family::De,
        ms: None,
    });
    let ga_cross_followers = vec![FollowerEntry::GaMutation, FollowerEntry::MultiStrategy];
    t.push(SubModuleSpec {
        id: ModuleId::new(Category::Crossover, 5),
        name: "SBX".into(),
        summary: "Simulated binary crossover of random parent pairs, index eta_c",
        params: vec![ConfigParam::cont("eta_c", 20.0, 100.0, 20.0)],
        followers: ga_cross_followers.clone(),
        family: Family::PsoGa,
        ms: None,
    });
    t.push(SubModuleSpec {
        id: ModuleId::new(Category::Crossover, 6),
        name: "Arithmetic".into(),
        summary: "v = (1-alpha)*x_p1 + alpha*x_p2 for random parent pairs",
        params: vec![ConfigParam::cont("alpha", 0.0, 1.0, 0.5)],
        followers: ga_cross_followers,
        family: Family::PsoGa,
        ms: None,
    });

    // ------------------------------------------------------------------
    // PSO updates (controllable)
    // ------------------------------------------------------------------
    let pso_followers = vec![FollowerEntry::BoundaryControl, FollowerEntry::MultiStrategy];
    t.push(SubModuleSpec {
        id: ModuleId::new(Category::PsoUpdate, 1),
        name: "Vanilla_PSO".into(),
        summary: "Inertia plus personal-best and swarm-best attraction",
        params: vec![
            ConfigParam::cont("w", 0.4, 0.9, 0.7),
            ConfigParam::cont("c1", 0.0, 2.0, 1.49445),
            ConfigParam::cont("c2", 0.0, 2.0, 1.49445),
        ],
        followers: pso_followers.clone(),
        family: Family::PsoGa,
        ms: None,
    });
    t.push(SubModuleSpec {
        id: ModuleId::new(Category::PsoUpdate, 2),
        name: "FDR_PSO".into(),
        summary: "Adds a fitness-distance-ratio neighbourhood term per dimension",
        params: vec![
            ConfigParam::cont("w", 0.4, 0.9, 0.729),
            ConfigParam::cont("c1", 0.0, 2.0, 1.0),
            ConfigParam::cont("c2", 0.0, 2.0, 1.0),
            ConfigParam::cont("c3", 0.0, 2.0, 2.0),
        ],
        followers: pso_followers.clone(),
        family: Family::PsoGa,
        ms: None,
    });
    t.push(SubModuleSpec {
        id: ModuleId::new(Category::PsoUpdate, 3),
        name: "CLPSO".into(),
        summary: "Comprehensive learning: per-dimension exemplars from peers' personal bests",
        params: vec![
            ConfigParam::cont("w", 0.4, 0.9, 0.7),
            ConfigParam::cont("c1", 0.0, 2.0, 1.49445),
            ConfigParam::cont("c2", 0.0, 2.0, 1.49445),
        ],
        followers: pso_followers,
        family: Family::PsoGa,
        ms: None,
    });

    // ------------------------------------------------------------------
    // Multi-strategy ensembles (controllable)
    // ------------------------------------------------------------------
    let niching_ops: [&'static str; 3] = ["Rand", "Ranking", "Distance"];
    for (i, n_sub) in [2usize, 3, 4].into_iter().enumerate() {
        t.push(SubModuleSpec {
            id: ModuleId::new(Category::MultiStrategy, i as u16 + 1),
            name: format!("Multi_Niching_{n_sub}"),
            summary: "Selects a niching method and splits the population into sub-populations",
            params: vec![ConfigParam::cat("op", &niching_ops, ParamDefault::Option(0))],
            followers: init_followers.clone(),
            family: Family::Neutral,
            ms: Some(MsInfo {
                acts_as: Category::Niching,
                members: vec![1, 2, 3],
                n_sub: Some(n_sub),
            }),
        });
    }
    t.push(SubModuleSpec {
        id: ModuleId::new(Category::MultiStrategy, 4),
        name: "Multi_BC".into(),
        summary: "Selects one of the five boundary control methods each generation",
        params: vec![ConfigParam::cat(
            "op",
            &["Clip", "Rand", "Periodic", "Reflect", "Halving"],
            ParamDefault::Option(0),
        )],
        followers: vec![FollowerEntry::Selection],
        family: Family::Neutral,
        ms: Some(MsInfo {
            acts_as: Category::BoundaryControl,
            members: vec![1, 2, 3, 4, 5],
            n_sub: None,
        }),
    });
    let mm_followers = vec![FollowerEntry::DeCrossover];
    t.push(SubModuleSpec {
        id: ModuleId::new(Category::MultiStrategy, 5),
        name: "Multi_Mutation_1".into(),
        summary: "Chooses among current-to-pbest/1+archive, current-to-rand/1+archive and weighted-rand-to-pbest/1",
        params: vec![
            ConfigParam::cat(
                "op",
                &[
                    "DE/current-to-pbest/1+archive",
                    "DE/current-to-rand/1+archive",
                    "DE/weighted-rand-to-pbest/1",
                ],
                ParamDefault::RandomOption,
            ),
            f1(),
            f2(),
            ConfigParam::cont("p", 0.0, 1.0, 0.18),
        ],
        followers: mm_followers.clone(),
        family: Family::De,
        ms: Some(MsInfo {
            acts_as: Category::Mutation,
            members: vec![9, 11, 10],
            n_sub: None,
        }),
    });
    t.push(SubModuleSpec {
        id: ModuleId::new(Category::MultiStrategy, 6),
        name: "Multi_Mutation_2".into(),
        summary: "Chooses among DE/rand/1, DE/rand/2 and DE/current-to-rand/1",
        params: vec![
            ConfigParam::cat(
                "op",
                &["DE/rand/1", "DE/rand/2", "DE/current-to-rand/1"],
                ParamDefault::RandomOption,
            ),
            f1(),
            f2(),
        ],
        followers: mm_followers.clone(),
        family: Family::De,
        ms: Some(MsInfo {
            acts_as: Category::Mutation,
            members: vec![1, 2, 6],
            n_sub: None,
        }),
    });
    t.push(SubModuleSpec {
        id: ModuleId::new(Category::MultiStrategy, 7),
        name: "Multi_Mutation_3".into(),
        summary: "Chooses among DE/rand/1, DE/best/2 and DE/current-to-rand/1",
        params: vec![
            ConfigParam::cat(
                "op",
                &["DE/rand/1", "DE/best/2", "DE/current-to-rand/1"],
                ParamDefault::RandomOption,
            ),
            f1(),
            f2(),
        ],
        followers: mm_followers,
        family: Family::De,
        ms: Some(MsInfo {
            acts_as: Category::Mutation,
            members: vec![1, 4, 6],
            n_sub: None,
        }),
    });
    t.push(SubModuleSpec {
        id: ModuleId::new(Category::MultiStrategy, 8),
        name: "Multi_Crossover_1".into(),
        summary: "Chooses between Binomial and qbest_Binomial+archive crossover",
        params: vec![
            ConfigParam::cat(
                "op",
                &["Binomial", "qbest_Binomial+archive"],
                ParamDefault::RandomOption,
            ),
            cr(0.9),
        ],
        followers: vec![FollowerEntry::BoundaryControl],
        family: Family::De,
        ms: Some(MsInfo {
            acts_as: Category::Crossover,
            members: vec![1, 4],
            n_sub: None,
        }),
    });
    t.push(SubModuleSpec {
        id: ModuleId::new(Category::MultiStrategy, 9),
        name: "Multi_Crossover_2".into(),
        summary: "Chooses between Binomial and Exponential crossover",
        params: vec![
            ConfigParam::cat("op", &["Binomial", "Exponential"], ParamDefault::RandomOption),
            cr(0.9),
        ],
        followers: vec![FollowerEntry::BoundaryControl],
        family: Family::De,
        ms: Some(MsInfo {
            acts_as: Category::Crossover,
            members: vec![1, 2],
            n_sub: None,
        }),
    });
    t.push(SubModuleSpec {
        id: ModuleId::new(Category::MultiStrategy, 10),
        name: "Multi_PSO_1".into(),
        summary: "Chooses between FDR_PSO and CLPSO updates",
        params: vec![
            ConfigParam::cat("op", &["FDR_PSO", "CLPSO"], ParamDefault::RandomOption),
            ConfigParam::cont("w", 0.4, 0.9, 0.729),
            ConfigParam::cont("c1", 0.0, 2.0, 1.0),
            ConfigParam::cont("c2", 0.0, 2.0, 1.0),
            ConfigParam::cont("c3", 0.0, 2.0, 2.0),
        ],
        followers: vec![FollowerEntry::BoundaryControl],
        family: Family::PsoGa,
        ms: Some(MsInfo {
            acts_as: Category::PsoUpdate,
            members: vec![2, 3],
            n_sub: None,
        }),
    });

    // ------------------------------------------------------------------
    // Information sharing (controllable, only legal with niching)
    // ------------------------------------------------------------------
    t.push(SubModuleSpec {
        id: ModuleId::new(Category::InformationSharing, 1),
        name: "Sharing".into(),
        summary: "Copy the target sub-population's best over this sub-population's worst",
        params: vec![ConfigParam::cat(
            "target",
            &["1", "2", "3", "4"],
            ParamDefault::RandomOption,
        )],
        followers: vec![FollowerEntry::PopulationReduction, FollowerEntry::Completed],
        family: Family::Neutral,
        ms: None,
    });

    t
}
