//! Episodic optimization environment: one full generation per step.
//!
//! An [`Env`] wraps an [`AlgorithmStructure`] and a [`ProblemInstance`] as a
//! finite-horizon MDP. `reset` runs the structure's initialization (and
//! niching, when present) and emits one state token per module; each `step`
//! materializes the supplied per-module configurations, walks the structure
//! in execution order — search operators per sub-population, then the shared
//! control suffix — and returns the next tokens together with a reward
//! proportional to the improvement of the best objective found so far:
//!
//! ```text
//! r_t = δ · (f*_{t−1} − f*_t) / (f*_0 − f*)
//! ```
//!
//! with `δ = 10`. The reward telescopes: the rewards of any episode sum to
//! `δ · (f*_0 − f*_H) / (f*_0 − f*) ≤ δ`, and each term is non-negative
//! because the best-so-far record never worsens.

use rand::Rng;
use serde::Serialize;

use crate::error::CoreError;
use crate::problems::ProblemInstance;
use crate::registry::exec::{
    boundary_control, crossover, initialize, mutate, niche, pso_update, restart_triggered,
    scheduled_size, select, share_best, ClpsoMemory, CrossoverInput, MutationInput, PsoView,
    RestartContext,
};
use crate::registry::{Category, MaterializedConfig, ModuleId, ParamValue, Registry, SubModuleSpec};
use crate::rng::{stream, Stream};
use crate::structure::{validate, AlgorithmStructure, L_MAX};

/// Reward scale factor: a step that closes the entire initial optimality gap
/// earns exactly this much.
pub const DELTA: f64 = 10.0;

/// Initial population size when the structure schedules a reduction.
pub const DEFAULT_NP_MAX: usize = 100;

/// Floor of every reduction schedule (raised to `2·N_nich` under niching so
/// the population can still be partitioned).
pub const NP_MIN: usize = 4;

/// Fixed population size when the structure has no reduction module.
pub const DEFAULT_NP_FIXED: usize = 50;

/// Default episode horizon in generations.
pub const DEFAULT_HORIZON: usize = 100;

/// Environment construction parameters.
#[derive(Debug, Clone)]
pub struct EnvParams {
    /// Initial population size; `None` picks [`DEFAULT_NP_MAX`] when the
    /// structure contains a reduction module and [`DEFAULT_NP_FIXED`]
    /// otherwise.
    pub np_max: Option<usize>,
    /// Episode length in generations.
    pub horizon: usize,
    /// Optional cap on objective evaluations; exceeding it ends the episode.
    pub max_evals: Option<u64>,
    /// Master seed for every random draw the environment makes.
    pub seed: u64,
    /// Keep a per-step record of configurations and rewards.
    pub record_trace: bool,
}

impl Default for EnvParams {
    fn default() -> Self {
        EnvParams {
            np_max: None,
            horizon: DEFAULT_HORIZON,
            max_evals: None,
            seed: 0,
            record_trace: false,
        }
    }
}

/// Complete mutable optimization state of one episode.
#[derive(Debug, Clone, Default)]
pub struct TaskState {
    /// Current positions, all sub-populations concatenated.
    pub pop: Vec<Vec<f64>>,
    /// Current objective values, aligned with `pop`.
    pub fit: Vec<f64>,
    /// Particle velocities (zero until a PSO update touches them).
    pub vel: Vec<Vec<f64>>,
    /// Best position each slot has ever held or proposed.
    pub pbest_pos: Vec<Vec<f64>>,
    /// Objective value of `pbest_pos`.
    pub pbest_fit: Vec<f64>,
    /// Displaced parents available to archive-using operators; capped at the
    /// current population size with random eviction.
    pub archive: Vec<(Vec<f64>, f64)>,
    /// Index partition of `pop` into sub-populations (a single group when the
    /// structure has no niching stage).
    pub groups: Vec<Vec<usize>>,
    /// Completed generations.
    pub t: usize,
    /// Episode horizon.
    pub horizon: usize,
    /// Best objective value seen during initialization.
    pub f_best_0: f64,
    /// Best objective value seen so far.
    pub f_best: f64,
    /// `f_best` after initialization and after each completed generation;
    /// cleared when a restart fires so stagnation is measured per incarnation.
    pub best_log: Vec<f64>,
    /// Generation numbers at which a restart re-drew the population.
    pub restarts: Vec<usize>,
    /// Non-fatal anomalies (NaN objective values and the like).
    pub warnings: Vec<String>,
}

/// Per-module state tokens padded to [`L_MAX`] rows.
///
/// Every non-terminal module of the structure gets one row in execution
/// order: its 16-bit identifier expanded to 0/1 values and a 9-feature
/// summary of the (sub-)population it operates on. Padding rows are zero
/// with `mask = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTokenSeq {
    /// Module identifier bits, most significant first.
    pub id_bits: Vec<[f64; 16]>,
    /// Optimization-state features (see [`Env::featurize`]).
    pub opt: Vec<[f64; 9]>,
    /// 1.0 for rows backed by a module, 0.0 for padding.
    pub mask: Vec<f64>,
    /// Whether the row's module accepts a configuration action.
    pub controllable: Vec<bool>,
    /// Identifiers of the active rows, in order.
    pub module_ids: Vec<ModuleId>,
}

/// Where a step's per-module configurations come from.
#[derive(Debug, Clone, Copy)]
pub enum ActionSource<'a> {
    /// One raw action row per controllable module, in execution order. Each
    /// row is mapped into the module's declared ranges; dimensions past the
    /// module's configuration size are ignored.
    Raw(&'a [Vec<f64>]),
    /// Every module runs its default configuration (ensemble `op` choices
    /// re-drawn uniformly each generation).
    Defaults,
}

/// Result of one environment step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// Tokens describing the state after the generation.
    pub tokens: StateTokenSeq,
    /// Scaled best-objective improvement earned by this generation.
    pub reward: f64,
    /// Whether the episode is over (horizon or evaluation budget).
    pub done: bool,
}

/// One materialized configuration in a trace record.
#[derive(Debug, Clone, Serialize)]
pub struct TraceConfig {
    pub module: String,
    pub params: serde_json::Value,
}

/// One step of an episode trace (serialized as a JSON line by callers).
#[derive(Debug, Clone, Serialize)]
pub struct TraceRecord {
    pub t: usize,
    pub f_best: f64,
    pub reward: f64,
    pub configs: Vec<TraceConfig>,
}

/// Which population slice a module's features are computed on.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Scope {
    /// Whole population (trunk and tail modules).
    Global,
    /// One sub-population chain.
    Branch(usize),
}

pub struct Env<'r> {
    registry: &'r Registry,
    structure: AlgorithmStructure,
    instance: ProblemInstance,
    params: EnvParams,
    rng: Stream,
    state: TaskState,
    clpso: Option<ClpsoMemory>,
    /// Best objective of externally injected candidates, credited to the
    /// next step's improvement.
    pending_best: Option<f64>,
    /// Niching variant and group count last used, re-applied after restarts.
    niche_cfg: Option<(u16, usize)>,
    /// Initial population size (start of a reduction schedule).
    np0: usize,
    /// Reduction floor; at least `2·N_nich` under niching.
    np_min: usize,
    /// All modules in execution order.
    flat_ids: Vec<ModuleId>,
    /// Feature scope per flat position.
    flat_scopes: Vec<Scope>,
    /// Module visits of the most recent step, in call order.
    exec_order: Vec<ModuleId>,
    trace: Vec<TraceRecord>,
}

impl<'r> Env<'r> {
    /// Validate the structure, then build and reset the environment.
    pub fn new(
        registry: &'r Registry,
        structure: AlgorithmStructure,
        instance: ProblemInstance,
        params: EnvParams,
    ) -> Result<Env<'r>, CoreError> {
        validate(registry, &structure)?;
        if params.horizon == 0 {
            return Err(CoreError::InvalidArgument("horizon must be positive".into()));
        }

        let has_reduction = structure
            .flat()
            .iter()
            .any(|id| id.category().is_ok_and(|c| c == Category::PopulationReduction));
        let np0 = params.np_max.unwrap_or(if has_reduction {
            DEFAULT_NP_MAX
        } else {
            DEFAULT_NP_FIXED
        });
        let n_sub = structure
            .multi_niching()
            .map(|mn| {
                let spec = registry.require(mn)?;
                let info = spec.ms.as_ref().ok_or_else(|| {
                    CoreError::InvalidArgument(format!("{} is not an ensemble", spec.name))
                })?;
                info.n_sub.ok_or_else(|| {
                    CoreError::InvalidArgument(format!("{} declares no group count", spec.name))
                })
            })
            .transpose()?;
        if np0 < 2 {
            return Err(CoreError::InvalidArgument(format!(
                "population size {np0} is below the minimum of 2"
            )));
        }
        if let Some(n) = n_sub {
            if np0 < 2 * n {
                return Err(CoreError::InvalidArgument(format!(
                    "population size {np0} cannot hold {n} sub-populations of at least 2"
                )));
            }
        }
        let np_min = NP_MIN.max(2 * n_sub.unwrap_or(0)).min(np0);

        let (flat_ids, flat_scopes) = flatten_with_scopes(&structure);
        let mut env = Env {
            registry,
            structure,
            instance,
            params,
            rng: stream(0, "episode", &[]),
            state: TaskState::default(),
            clpso: None,
            pending_best: None,
            niche_cfg: None,
            np0,
            np_min,
            flat_ids,
            flat_scopes,
            exec_order: Vec::new(),
            trace: Vec::new(),
        };
        env.reset()?;
        Ok(env)
    }

    /// Re-start the episode from generation zero. Deterministic: equal seeds
    /// reproduce the exact same episode under equal action sequences.
    pub fn reset(&mut self) -> Result<StateTokenSeq, CoreError> {
        self.rng = stream(self.params.seed, "episode", &[]);
        self.instance.reset_evals();
        self.exec_order.clear();
        self.trace.clear();
        self.pending_best = None;

        let (lb, ub) = self.instance.bounds();
        let dim = self.instance.dim();
        let init = self.structure.trunk[0];
        self.exec_order.push(init);
        let pop = initialize(init.index(), self.np0, dim, lb, ub, &mut self.rng);

        let mut warnings = Vec::new();
        let fit: Vec<f64> = pop
            .iter()
            .map(|x| eval_row(&self.instance, x, &mut warnings))
            .collect();
        let f0 = fit.iter().copied().fold(f64::INFINITY, f64::min);

        self.state = TaskState {
            vel: vec![vec![0.0; dim]; self.np0],
            pbest_pos: pop.clone(),
            pbest_fit: fit.clone(),
            pop,
            fit,
            archive: Vec::new(),
            groups: vec![(0..self.np0).collect()],
            t: 0,
            horizon: self.params.horizon,
            f_best_0: f0,
            f_best: f0,
            best_log: vec![f0],
            restarts: Vec::new(),
            warnings,
        };

        // Partition the initial population so the first tokens already carry
        // per-branch features. Defaults apply; actions re-partition later.
        if let Some(mn) = self.structure.multi_niching() {
            let cfg = self.registry.default_config(mn, &mut self.rng)?;
            self.run_niching(mn, &cfg)?;
        }

        self.clpso = self
            .structure_has_pso()
            .then(|| ClpsoMemory::new(self.np0, dim));
        Ok(self.emit_tokens())
    }

    /// Run one generation with configurations from `action`.
    pub fn step_with(&mut self, action: ActionSource<'_>) -> Result<StepOutcome, CoreError> {
        if self.state.t >= self.state.horizon {
            return Err(CoreError::EnvMisuse(
                "step called after the episode finished".into(),
            ));
        }
        let f_prev = self.state.f_best;
        let configs = self.resolve_configs(action)?;
        self.exec_order.clear();

        // Trunk: initialization ran at reset; a niching stage re-partitions
        // every generation with its configured method.
        let mut pos = 1;
        if let Some(mn) = self.structure.multi_niching() {
            self.run_niching(mn, &configs[pos])?;
            self.exec_order.push(mn);
            pos += 1;
        }

        // Operator chains: one per sub-population, or the single trunk chain.
        if self.structure.branches.is_empty() {
            let chain: Vec<ModuleId> = self.structure.trunk[pos..].to_vec();
            self.run_chain(0, &chain, &configs[pos..])?;
            pos += chain.len();
        } else {
            for b in 0..self.structure.branches.len() {
                let chain = self.structure.branches[b].clone();
                self.run_chain(b, &chain, &configs[pos..])?;
                pos += chain.len();
            }
        }

        // Shared control suffix.
        for i in 0..self.structure.tail.len() {
            let id = self.structure.tail[i];
            match id.category()? {
                Category::RestartStrategy => {
                    let ctx = RestartContext {
                        pop: &self.state.pop,
                        fit: &self.state.fit,
                        best_log: &self.state.best_log,
                        diameter: self.instance.diameter(),
                    };
                    if restart_triggered(id.index(), &ctx) {
                        self.do_restart()?;
                    }
                }
                Category::PopulationReduction => {
                    let target = scheduled_size(
                        id.index(),
                        self.state.t + 1,
                        self.state.horizon,
                        self.np0,
                        self.np_min,
                    );
                    self.reduce_to(target);
                }
                Category::Completed => {}
                other => {
                    return Err(CoreError::IllegalStructure {
                        position: pos + i,
                        reason: format!("{other:?} cannot appear in the control suffix"),
                    })
                }
            }
            self.exec_order.push(id);
        }

        // Credit externally injected candidates now, so a warm start shows up
        // as this step's improvement.
        if let Some(v) = self.pending_best.take() {
            if v < self.state.f_best {
                self.state.f_best = v;
            }
        }

        self.state.t += 1;
        self.state.best_log.push(self.state.f_best);
        let den = self.state.f_best_0 - self.instance.f_star();
        let reward = if den > 0.0 && den.is_finite() {
            DELTA * (f_prev - self.state.f_best) / den
        } else {
            0.0
        };
        let budget_hit = self
            .params
            .max_evals
            .is_some_and(|m| self.instance.evals() >= m);
        let done = self.state.t >= self.state.horizon || budget_hit;
        let tokens = self.emit_tokens();

        if self.params.record_trace {
            self.trace.push(TraceRecord {
                t: self.state.t,
                f_best: self.state.f_best,
                reward,
                configs: trace_configs(self.registry, &self.flat_ids, &configs),
            });
        }
        Ok(StepOutcome {
            tokens,
            reward,
            done,
        })
    }

    /// Run one generation with every module on its default configuration.
    pub fn step_defaults(&mut self) -> Result<StepOutcome, CoreError> {
        self.step_with(ActionSource::Defaults)
    }

    /// The 9 optimization-state features of sub-population `k`:
    ///
    /// 1. best normalized objective in the sub-population,
    /// 2. mean normalized objective,
    /// 3. standard deviation of the normalized objectives,
    /// 4. maximal pairwise distance over the search-space diameter,
    /// 5. dispersion difference: the top-10% maximal distance minus the
    ///    overall maximal distance (both over the diameter),
    /// 6. fitness-distance correlation within the sub-population,
    /// 7. best normalized objective of the whole population,
    /// 8. fitness-distance correlation of the whole population,
    /// 9. remaining budget `(H − t) / H`.
    ///
    /// Objectives are normalized to `[0, 1]` by the initial optimality gap;
    /// correlations are Pearson coefficients (0 under zero variance).
    pub fn featurize(&self, k: usize) -> Result<[f64; 9], CoreError> {
        let members = self.state.groups.get(k).ok_or_else(|| {
            CoreError::InvalidArgument(format!(
                "sub-population {k} of {} requested",
                self.state.groups.len()
            ))
        })?;
        if members.is_empty() {
            return Err(CoreError::InvalidArgument(format!(
                "sub-population {k} is empty"
            )));
        }
        let local = self.features_local(members);
        let (f7, f8, f9) = self.features_global();
        Ok([
            local[0], local[1], local[2], local[3], local[4], local[5], f7, f8, f9,
        ])
    }

    /// Insert an externally proposed solution, replacing the worst current
    /// individual. Its objective value is credited to the next step's
    /// improvement, so warm starts are visible to the reward signal.
    pub fn inject_candidate(&mut self, x: &[f64]) -> Result<f64, CoreError> {
        let f = eval_row(&self.instance, x, &mut self.state.warnings);
        let worst = argmax(&self.state.fit).ok_or_else(|| {
            CoreError::EnvMisuse("cannot inject into an empty population".into())
        })?;
        self.state.pop[worst] = x.to_vec();
        self.state.fit[worst] = f;
        self.state.vel[worst].iter_mut().for_each(|v| *v = 0.0);
        if f < self.state.pbest_fit[worst] {
            self.state.pbest_fit[worst] = f;
            self.state.pbest_pos[worst] = x.to_vec();
        }
        self.pending_best = Some(self.pending_best.map_or(f, |p| p.min(f)));
        Ok(f)
    }

    /// Tokens for the current state (identical to the last emission).
    pub fn tokens(&self) -> StateTokenSeq {
        self.emit_tokens()
    }

    pub fn state(&self) -> &TaskState {
        &self.state
    }

    pub fn structure(&self) -> &AlgorithmStructure {
        &self.structure
    }

    pub fn instance(&self) -> &ProblemInstance {
        &self.instance
    }

    /// Identifiers of the modules that accept actions, in execution order.
    pub fn controllable_ids(&self) -> Vec<ModuleId> {
        self.flat_ids
            .iter()
            .copied()
            .filter(|id| id.controllable())
            .collect()
    }

    /// Module visits of the most recent step, in call order.
    pub fn last_exec_order(&self) -> &[ModuleId] {
        &self.exec_order
    }

    /// Per-step records collected so far (empty unless tracing is enabled).
    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        std::mem::take(&mut self.trace)
    }

    // ------------------------------------------------------------------
    // Step internals
    // ------------------------------------------------------------------

    /// One materialized configuration per flat position; controllable modules
    /// consume action rows in order, everything else gets an empty one.
    fn resolve_configs(
        &mut self,
        action: ActionSource<'_>,
    ) -> Result<Vec<MaterializedConfig>, CoreError> {
        let mut out = Vec::with_capacity(self.flat_ids.len());
        let mut used = 0;
        for &id in &self.flat_ids {
            if !id.controllable() {
                out.push(MaterializedConfig::default());
                continue;
            }
            let cfg = match action {
                ActionSource::Defaults => self.registry.default_config(id, &mut self.rng)?,
                ActionSource::Raw(rows) => {
                    let row = rows.get(used).ok_or_else(|| {
                        CoreError::InvalidArgument(format!(
                            "{} action rows supplied, {} controllable modules",
                            rows.len(),
                            self.controllable_ids().len()
                        ))
                    })?;
                    self.registry.materialize(id, row)?
                }
            };
            if id.controllable() {
                used += 1;
            }
            out.push(cfg);
        }
        if let ActionSource::Raw(rows) = action {
            if rows.len() != used {
                return Err(CoreError::InvalidArgument(format!(
                    "{} action rows supplied, {used} controllable modules",
                    rows.len()
                )));
            }
        }
        Ok(out)
    }

    /// Re-partition the population with the configured niching method.
    fn run_niching(&mut self, mn: ModuleId, cfg: &MaterializedConfig) -> Result<(), CoreError> {
        let spec = self.registry.require(mn)?;
        let info = spec
            .ms
            .as_ref()
            .ok_or_else(|| CoreError::InvalidArgument(format!("{} is not an ensemble", spec.name)))?;
        let op = cfg.opt_or("op", 0).min(info.members.len() - 1);
        let variant = info.members[op];
        let n_sub = info
            .n_sub
            .ok_or_else(|| CoreError::InvalidArgument(format!("{} declares no group count", spec.name)))?;
        self.state.groups = niche(
            variant,
            &self.state.pop,
            &self.state.fit,
            n_sub,
            &mut self.rng,
        )?;
        self.niche_cfg = Some((variant, n_sub));
        Ok(())
    }

    /// Walk one operator chain over sub-population `b`. A working offspring
    /// buffer flows through the chain: mutation and crossover (re)build it
    /// in whichever order the structure dictates, boundary control repairs
    /// it, and selection evaluates it against the parents. Chains that skip
    /// an operator fall back to the parents as the buffer.
    fn run_chain(
        &mut self,
        b: usize,
        chain: &[ModuleId],
        configs: &[MaterializedConfig],
    ) -> Result<(), CoreError> {
        let members = self.state.groups[b].clone();
        let bounds = self.instance.bounds();
        let mut trial: Option<Vec<Vec<f64>>> = None;

        for (k, &id) in chain.iter().enumerate() {
            let cfg = &configs[k];
            let spec = self.registry.require(id)?;
            let (cat, variant) = acting(spec, cfg);
            match cat {
                Category::Mutation => {
                    let parents = self.rows_of(&members);
                    let fit = self.fit_of(&members);
                    // GA-style chains mutate the crossover offspring; DE-style
                    // chains start here and mutate the parents.
                    let source = trial.take().unwrap_or_else(|| parents.clone());
                    let input = MutationInput {
                        pop: &source,
                        fit: &fit,
                        archive: &self.state.archive,
                    };
                    trial = Some(mutate(
                        variant,
                        cfg,
                        &input,
                        bounds,
                        &mut self.rng,
                        &mut self.state.warnings,
                    ));
                }
                Category::Crossover => {
                    let parents = self.rows_of(&members);
                    let fit = self.fit_of(&members);
                    let mutants = trial.take().unwrap_or_else(|| parents.clone());
                    let input = CrossoverInput {
                        pop: &parents,
                        fit: &fit,
                        trial: &mutants,
                        archive: &self.state.archive,
                    };
                    trial = Some(crossover(
                        variant,
                        cfg,
                        &input,
                        &mut self.rng,
                        &mut self.state.warnings,
                    ));
                }
                Category::PsoUpdate => {
                    let gbest = self.gbest_of(&members);
                    let st = &mut self.state;
                    let view = PsoView {
                        members: &members,
                        pop: &st.pop,
                        fit: &st.fit,
                        pbest_pos: &st.pbest_pos,
                        pbest_fit: &st.pbest_fit,
                        gbest: &gbest,
                    };
                    let pairs = pso_update(
                        variant,
                        cfg,
                        &view,
                        &mut st.vel,
                        self.clpso.as_mut(),
                        bounds,
                        &mut self.rng,
                    );
                    trial = Some(pairs.into_iter().map(|(_, x)| x).collect());
                }
                Category::BoundaryControl => {
                    let mut rows = trial.take().unwrap_or_else(|| self.rows_of(&members));
                    boundary_control(variant, &mut rows, bounds, &mut self.rng);
                    trial = Some(rows);
                }
                Category::Selection => {
                    let rows = trial.take().unwrap_or_else(|| self.rows_of(&members));
                    let fits = self.evaluate_batch(&rows);
                    for (j, &slot) in members.iter().enumerate() {
                        let improved = fits[j] < self.state.pbest_fit[slot];
                        if improved {
                            self.state.pbest_fit[slot] = fits[j];
                            self.state.pbest_pos[slot] = rows[j].clone();
                        }
                        if let Some(mem) = self.clpso.as_mut() {
                            mem.observe(slot, improved);
                        }
                    }
                    let parents = self.rows_of(&members);
                    let pfit = self.fit_of(&members);
                    let out = select(variant, &parents, &pfit, &rows, &fits, &mut self.rng);
                    for &d in &out.displaced {
                        self.push_archive(parents[d].clone(), pfit[d]);
                    }
                    for (j, &slot) in members.iter().enumerate() {
                        self.state.pop[slot] = out.pop[j].clone();
                        self.state.fit[slot] = out.fit[j];
                    }
                }
                Category::InformationSharing => {
                    let n_groups = self.state.groups.len();
                    let target = cfg.opt_or("target", 0) % n_groups;
                    let st = &mut self.state;
                    if let Some(slot) =
                        share_best(&mut st.pop, &mut st.fit, &st.groups, b, target)
                    {
                        if st.fit[slot] < st.pbest_fit[slot] {
                            st.pbest_fit[slot] = st.fit[slot];
                            st.pbest_pos[slot] = st.pop[slot].clone();
                        }
                    }
                }
                other => {
                    return Err(CoreError::IllegalStructure {
                        position: k,
                        reason: format!("{other:?} cannot appear in an operator chain"),
                    })
                }
            }
            self.exec_order.push(id);
        }
        Ok(())
    }

    /// Re-draw the whole population with the structure's initialization,
    /// keeping the best-so-far record. Personal bests, velocities, archive
    /// and exemplar memory restart fresh; the stagnation log restarts at the
    /// current record so triggers measure the new incarnation.
    fn do_restart(&mut self) -> Result<(), CoreError> {
        let (lb, ub) = self.instance.bounds();
        let dim = self.instance.dim();
        let np = self.state.pop.len();
        let init = self.structure.trunk[0];
        let pop = initialize(init.index(), np, dim, lb, ub, &mut self.rng);
        let fit = self.evaluate_batch(&pop);

        self.state.vel = vec![vec![0.0; dim]; np];
        self.state.pbest_pos = pop.clone();
        self.state.pbest_fit = fit.clone();
        self.state.pop = pop;
        self.state.fit = fit;
        self.state.archive.clear();
        if let Some(mem) = self.clpso.as_mut() {
            mem.reset();
        }
        self.state.groups = match self.niche_cfg {
            Some((variant, n_sub)) => niche(
                variant,
                &self.state.pop,
                &self.state.fit,
                n_sub,
                &mut self.rng,
            )?,
            None => vec![(0..np).collect()],
        };
        self.state.best_log = vec![self.state.f_best];
        self.state.restarts.push(self.state.t + 1);
        Ok(())
    }

    /// Shrink the population to `target`, dropping globally worst individuals
    /// but never emptying a sub-population.
    fn reduce_to(&mut self, target: usize) {
        let np = self.state.pop.len();
        if target >= np {
            return;
        }
        let mut group_of = vec![0usize; np];
        for (g, members) in self.state.groups.iter().enumerate() {
            for &m in members {
                group_of[m] = g;
            }
        }
        let mut group_len: Vec<usize> = self.state.groups.iter().map(Vec::len).collect();
        let mut order: Vec<usize> = (0..np).collect();
        order.sort_by(|&a, &b| {
            self.state.fit[b]
                .partial_cmp(&self.state.fit[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut drop = vec![false; np];
        let mut remaining = np - target;
        for &i in &order {
            if remaining == 0 {
                break;
            }
            if group_len[group_of[i]] > 1 {
                drop[i] = true;
                group_len[group_of[i]] -= 1;
                remaining -= 1;
            }
        }
        let keep: Vec<usize> = (0..np).filter(|&i| !drop[i]).collect();
        let mut renumber = vec![usize::MAX; np];
        for (new, &old) in keep.iter().enumerate() {
            renumber[old] = new;
        }

        let take = |v: &mut Vec<Vec<f64>>| {
            let old = std::mem::take(v);
            *v = keep.iter().map(|&i| old[i].clone()).collect();
        };
        take(&mut self.state.pop);
        take(&mut self.state.vel);
        take(&mut self.state.pbest_pos);
        self.state.fit = keep.iter().map(|&i| self.state.fit[i]).collect();
        self.state.pbest_fit = keep.iter().map(|&i| self.state.pbest_fit[i]).collect();
        for members in self.state.groups.iter_mut() {
            members.retain(|&m| !drop[m]);
            members.iter_mut().for_each(|m| *m = renumber[*m]);
        }
        if let Some(mem) = self.clpso.as_mut() {
            mem.retain(&keep);
        }
        let cap = self.state.pop.len();
        while self.state.archive.len() > cap {
            let i = self.rng.random_range(0..self.state.archive.len());
            self.state.archive.swap_remove(i);
        }
    }

    /// Evaluate candidate rows; NaN objectives become `+inf` with a warning,
    /// and the best-so-far record absorbs every value.
    fn evaluate_batch(&mut self, rows: &[Vec<f64>]) -> Vec<f64> {
        let fits: Vec<f64> = rows
            .iter()
            .map(|x| eval_row(&self.instance, x, &mut self.state.warnings))
            .collect();
        for &f in &fits {
            if f < self.state.f_best {
                self.state.f_best = f;
            }
        }
        fits
    }

    fn push_archive(&mut self, row: Vec<f64>, fit: f64) {
        let cap = self.state.pop.len();
        if cap == 0 {
            return;
        }
        if self.state.archive.len() >= cap {
            let i = self.rng.random_range(0..self.state.archive.len());
            self.state.archive.swap_remove(i);
        }
        self.state.archive.push((row, fit));
    }

    fn rows_of(&self, members: &[usize]) -> Vec<Vec<f64>> {
        members.iter().map(|&m| self.state.pop[m].clone()).collect()
    }

    fn fit_of(&self, members: &[usize]) -> Vec<f64> {
        members.iter().map(|&m| self.state.fit[m]).collect()
    }

    /// Best personal-best row among the sub-population's members.
    fn gbest_of(&self, members: &[usize]) -> Vec<f64> {
        let best = members
            .iter()
            .copied()
            .min_by(|&a, &b| {
                self.state.pbest_fit[a]
                    .partial_cmp(&self.state.pbest_fit[b])
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("sub-population is never empty");
        self.state.pbest_pos[best].clone()
    }

    fn structure_has_pso(&self) -> bool {
        self.structure.flat().iter().any(|&id| {
            self.registry.get(id).is_some_and(|v| {
                v.category() == Category::PsoUpdate
                    || v.ms
                        .as_ref()
                        .is_some_and(|m| m.acts_as == Category::PsoUpdate)
            })
        })
    }

    // ------------------------------------------------------------------
    // Features and tokens
    // ------------------------------------------------------------------

    /// Map an objective value into `[0, 1]` by the initial optimality gap.
    fn normalized(&self, f: f64) -> f64 {
        let den = self.state.f_best_0 - self.instance.f_star();
        if den > 0.0 && den.is_finite() {
            ((f - self.instance.f_star()) / den).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }

    /// Features 1–6 on one member set.
    fn features_local(&self, members: &[usize]) -> [f64; 6] {
        let g: Vec<f64> = members
            .iter()
            .map(|&m| self.normalized(self.state.fit[m]))
            .collect();
        let n = g.len() as f64;
        let f1 = g.iter().copied().fold(f64::INFINITY, f64::min);
        let f2 = g.iter().sum::<f64>() / n;
        let f3 = (g.iter().map(|v| (v - f2).powi(2)).sum::<f64>() / n).sqrt();

        let diam = self.instance.diameter();
        let all_max = self.max_pairwise(members) / diam;

        // Top 10% by objective, at least two members where possible.
        let elite_count = ((0.1 * n).ceil() as usize).max(2).min(members.len());
        let mut by_fit: Vec<usize> = members.to_vec();
        by_fit.sort_by(|&a, &b| {
            self.state.fit[a]
                .partial_cmp(&self.state.fit[b])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let elite_max = self.max_pairwise(&by_fit[..elite_count]) / diam;
        let f5 = elite_max - all_max;

        let best = by_fit[0];
        let dists: Vec<f64> = members
            .iter()
            .map(|&m| euclid(&self.state.pop[m], &self.state.pop[best]))
            .collect();
        let f6 = pearson(&g, &dists);

        [f1, f2, f3, all_max, f5, f6]
    }

    /// Features 7–9: global best, global correlation, remaining budget.
    fn features_global(&self) -> (f64, f64, f64) {
        let np = self.state.pop.len();
        let g: Vec<f64> = self.state.fit.iter().map(|&f| self.normalized(f)).collect();
        let f7 = g.iter().copied().fold(f64::INFINITY, f64::min);
        let best = argmin(&self.state.fit).expect("population is never empty");
        let dists: Vec<f64> = (0..np)
            .map(|i| euclid(&self.state.pop[i], &self.state.pop[best]))
            .collect();
        let f8 = pearson(&g, &dists);
        let f9 = (self.state.horizon - self.state.t) as f64 / self.state.horizon as f64;
        (f7, f8, f9)
    }

    fn max_pairwise(&self, members: &[usize]) -> f64 {
        let mut best = 0.0f64;
        for (i, &a) in members.iter().enumerate() {
            for &b in &members[i + 1..] {
                best = best.max(euclid(&self.state.pop[a], &self.state.pop[b]));
            }
        }
        best
    }

    fn emit_tokens(&self) -> StateTokenSeq {
        let per_branch: Vec<[f64; 6]> = self
            .state
            .groups
            .iter()
            .map(|m| self.features_local(m))
            .collect();
        let all: Vec<usize> = (0..self.state.pop.len()).collect();
        let global_local = self.features_local(&all);
        let (f7, f8, f9) = self.features_global();

        let mut seq = StateTokenSeq {
            id_bits: vec![[0.0; 16]; L_MAX],
            opt: vec![[0.0; 9]; L_MAX],
            mask: vec![0.0; L_MAX],
            controllable: vec![false; L_MAX],
            module_ids: Vec::new(),
        };
        let mut row = 0;
        for (i, &id) in self.flat_ids.iter().enumerate() {
            if id.category().is_ok_and(|c| c == Category::Completed) {
                continue;
            }
            let local = match self.flat_scopes[i] {
                Scope::Branch(b) if b < per_branch.len() => per_branch[b],
                _ => global_local,
            };
            seq.id_bits[row] = bits16(id);
            seq.opt[row] = [
                local[0], local[1], local[2], local[3], local[4], local[5], f7, f8, f9,
            ];
            seq.mask[row] = 1.0;
            seq.controllable[row] = id.controllable();
            seq.module_ids.push(id);
            row += 1;
        }
        seq
    }
}

/// Evaluate one row defensively: non-finite coordinates or a NaN objective
/// yield `+inf` plus a warning instead of poisoning downstream comparisons.
fn eval_row(instance: &ProblemInstance, x: &[f64], warnings: &mut Vec<String>) -> f64 {
    if x.iter().any(|v| !v.is_finite()) {
        warnings.push("non-finite candidate coordinate; objective set to +inf".into());
        return f64::INFINITY;
    }
    match instance.evaluate(x) {
        Ok(f) if f.is_nan() => {
            warnings.push("NaN objective value; set to +inf".into());
            f64::INFINITY
        }
        Ok(f) => f,
        Err(e) => {
            warnings.push(format!("evaluation failed ({e}); objective set to +inf"));
            f64::INFINITY
        }
    }
}

/// Acting category and concrete variant of a module: ensembles delegate to
/// the member their `op` choice selects, plain modules act as themselves.
fn acting(spec: &SubModuleSpec, cfg: &MaterializedConfig) -> (Category, u16) {
    match &spec.ms {
        Some(info) => {
            let op = cfg.opt_or("op", 0).min(info.members.len() - 1);
            (info.acts_as, info.members[op])
        }
        None => (spec.category(), spec.id.index()),
    }
}

/// Execution order of all modules plus the population slice each one's
/// features are computed on.
fn flatten_with_scopes(s: &AlgorithmStructure) -> (Vec<ModuleId>, Vec<Scope>) {
    let mut ids = Vec::new();
    let mut scopes = Vec::new();
    if s.branches.is_empty() {
        // Single chain: the initialization token is global, the operator
        // chain runs on the one (whole-population) group.
        ids.push(s.trunk[0]);
        scopes.push(Scope::Global);
        for &id in &s.trunk[1..] {
            ids.push(id);
            scopes.push(Scope::Branch(0));
        }
    } else {
        for &id in &s.trunk {
            ids.push(id);
            scopes.push(Scope::Global);
        }
        for (b, branch) in s.branches.iter().enumerate() {
            for &id in branch {
                ids.push(id);
                scopes.push(Scope::Branch(b));
            }
        }
    }
    for &id in &s.tail {
        ids.push(id);
        scopes.push(Scope::Global);
    }
    (ids, scopes)
}

fn trace_configs(
    registry: &Registry,
    flat_ids: &[ModuleId],
    configs: &[MaterializedConfig],
) -> Vec<TraceConfig> {
    let mut out = Vec::new();
    for (&id, cfg) in flat_ids.iter().zip(configs) {
        if cfg.entries().is_empty() {
            continue;
        }
        let spec = registry.get(id).expect("flat ids come from the registry");
        let mut map = serde_json::Map::new();
        for (name, value) in cfg.entries() {
            let v = match value {
                ParamValue::Num(x) => serde_json::json!(x),
                ParamValue::Opt(i) => {
                    let label = spec
                        .params
                        .iter()
                        .find(|p| p.name == *name)
                        .and_then(|p| match &p.range {
                            crate::registry::ParamRange::Categorical { options } => {
                                options.get(*i).copied()
                            }
                            crate::registry::ParamRange::Continuous { .. } => None,
                        });
                    match label {
                        Some(l) => serde_json::json!(l),
                        None => serde_json::json!(i),
                    }
                }
            };
            map.insert((*name).to_string(), v);
        }
        out.push(TraceConfig {
            module: spec.name.clone(),
            params: serde_json::Value::Object(map),
        });
    }
    out
}

/// Pearson correlation between objective values and distances to the best
/// member; 0 when either side has no variance. This is the fitness-distance
/// correlation in its bounded `[−1, 1]` form.
pub fn fdc(values: &[f64], dists: &[f64]) -> f64 {
    pearson(values, dists)
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    if a.len() < 2 || a.len() != b.len() {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    let denom = (va * vb).sqrt();
    if denom > 0.0 && denom.is_finite() && cov.is_finite() {
        (cov / denom).clamp(-1.0, 1.0)
    } else {
        0.0
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn argmin(v: &[f64]) -> Option<usize> {
    v.iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .map(|(i, _)| i)
}

fn argmax(v: &[f64]) -> Option<usize> {
    v.iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .map(|(i, _)| i)
}

fn bits16(id: ModuleId) -> [f64; 16] {
    let bits = id.bits();
    std::array::from_fn(|i| f64::from((bits >> (15 - i)) & 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::FnId;
    use crate::structure::{generate, SpaceTag};

    fn registry() -> &'static Registry {
        Registry::standard()
    }

    fn sphere(dim: usize, seed: u64) -> ProblemInstance {
        ProblemInstance::new(FnId::Sphere, dim, seed).unwrap()
    }

    /// Plain DE chain: Init → rand/1 → Binomial → Clip → Elementwise → end.
    fn de_structure() -> AlgorithmStructure {
        AlgorithmStructure {
            trunk: vec![
                ModuleId::new(Category::Initialization, 1),
                ModuleId::new(Category::Mutation, 1),
                ModuleId::new(Category::Crossover, 1),
                ModuleId::new(Category::BoundaryControl, 1),
                ModuleId::new(Category::Selection, 1),
            ],
            branches: vec![],
            tail: vec![ModuleId::new(Category::Completed, 1)],
            l: 6,
            space_tag: SpaceTag::De,
        }
    }

    fn de_structure_with_tail(tail: Vec<ModuleId>) -> AlgorithmStructure {
        let mut s = de_structure();
        s.tail = tail;
        s.l = s.trunk.len() + s.tail.len();
        s
    }

    fn params(seed: u64, horizon: usize) -> EnvParams {
        EnvParams {
            seed,
            horizon,
            ..EnvParams::default()
        }
    }

    #[test]
    fn reset_emits_full_budget_and_initial_best() {
        let env = Env::new(registry(), de_structure(), sphere(5, 1), params(7, 50)).unwrap();
        let tokens = env.tokens();
        let active = tokens.mask.iter().filter(|&&m| m == 1.0).count();
        assert_eq!(active, 5, "all modules except the terminal marker");
        for row in 0..active {
            assert_eq!(tokens.opt[row][8], 1.0, "feature 9 = (H-0)/H");
        }
        let min_fit = env.state().fit.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(env.state().f_best, min_fit);
        assert_eq!(env.state().f_best_0, min_fit);
        assert_eq!(env.state().t, 0);
    }

    #[test]
    fn equal_seeds_reproduce_episodes() {
        let mut a = Env::new(registry(), de_structure(), sphere(5, 3), params(11, 20)).unwrap();
        let mut b = Env::new(registry(), de_structure(), sphere(5, 3), params(11, 20)).unwrap();
        assert_eq!(a.state().pop, b.state().pop);
        assert_eq!(a.state().fit, b.state().fit);
        for _ in 0..5 {
            let oa = a.step_defaults().unwrap();
            let ob = b.step_defaults().unwrap();
            assert_eq!(a.state().pop, b.state().pop);
            assert_eq!(oa.reward, ob.reward);
            assert_eq!(oa.tokens, ob.tokens);
        }
        // A reset replays the same episode.
        a.reset().unwrap();
        b.reset().unwrap();
        assert_eq!(a.state().pop, b.state().pop);
    }

    #[test]
    fn warm_start_on_the_optimum_earns_the_full_reward() {
        let instance = sphere(4, 9);
        let optimum = instance.optimizer().to_vec();
        let mut env = Env::new(registry(), de_structure(), instance, params(5, 10)).unwrap();
        env.inject_candidate(&optimum).unwrap();
        let first = env.step_with(ActionSource::Defaults).unwrap();
        assert_eq!(first.reward, DELTA, "closing the whole gap pays δ");
        // No further improvement is possible, so later rewards are zero.
        let second = env.step_defaults().unwrap();
        assert_eq!(second.reward, 0.0);
    }

    #[test]
    fn rewards_telescope_and_best_is_monotone() {
        let mut env = Env::new(registry(), de_structure(), sphere(5, 21), params(2, 25)).unwrap();
        let f0 = env.state().f_best_0;
        let fstar = env.instance().f_star();
        let mut total = 0.0;
        let mut prev_best = f0;
        loop {
            let out = env.step_defaults().unwrap();
            assert!(out.reward >= 0.0);
            assert!(env.state().f_best <= prev_best, "record never worsens");
            prev_best = env.state().f_best;
            total += out.reward;
            if out.done {
                break;
            }
        }
        let expected = DELTA * (f0 - env.state().f_best) / (f0 - fstar);
        assert!((total - expected).abs() < 1e-9);
        assert!(total <= DELTA + 1e-12);
    }

    #[test]
    fn correlation_is_one_on_a_perfectly_aligned_sample() {
        // 1-D sample x = 0..4 with f(x) = x: distance to the best solution
        // (x = 0) equals the objective, so the correlation is exactly 1.
        let values = [0.0, 1.0, 2.0, 3.0, 4.0];
        let dists = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert!((fdc(&values, &dists) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_inputs_give_zero_correlation() {
        assert_eq!(fdc(&[1.0, 1.0, 1.0], &[0.0, 1.0, 2.0]), 0.0);
        assert_eq!(fdc(&[0.0, 1.0, 2.0], &[2.0, 2.0, 2.0]), 0.0);
    }

    #[test]
    fn features_stay_in_declared_ranges_across_random_structures() {
        for seed in 0..30u64 {
            for tag in [SpaceTag::De, SpaceTag::PsoGa, SpaceTag::All] {
                let mut rng = stream(seed, "env-range-test", &[]);
                let s = generate(registry(), tag, &mut rng).unwrap();
                let mut env = Env::new(
                    registry(),
                    s,
                    sphere(3, seed),
                    params(seed, 5),
                )
                .unwrap();
                for _ in 0..5 {
                    let out = env.step_defaults().unwrap();
                    for (row, &m) in out.tokens.mask.iter().enumerate() {
                        if m == 0.0 {
                            assert!(out.tokens.opt[row].iter().all(|&v| v == 0.0));
                            continue;
                        }
                        let f = &out.tokens.opt[row];
                        assert!(f.iter().all(|v| v.is_finite()), "finite features");
                        for &i in &[0usize, 1, 2, 6, 8] {
                            assert!((0.0..=1.0).contains(&f[i]), "feature {} = {}", i + 1, f[i]);
                        }
                        assert!((0.0..=1.0).contains(&f[3]));
                        for &i in &[4usize, 5, 7] {
                            assert!((-1.0..=1.0).contains(&f[i]), "feature {} = {}", i + 1, f[i]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn identical_population_zeroes_spread_features() {
        let mut env = Env::new(registry(), de_structure(), sphere(3, 2), params(1, 10)).unwrap();
        let row = env.state.pop[0].clone();
        let f = env.state.fit[0];
        for i in 0..env.state.pop.len() {
            env.state.pop[i] = row.clone();
            env.state.fit[i] = f;
        }
        let features = env.featurize(0).unwrap();
        assert_eq!(features[2], 0.0, "std of identical objectives");
        assert_eq!(features[3], 0.0, "max distance of identical points");
        assert_eq!(features[4], 0.0, "dispersion difference");
        assert_eq!(features[5], 0.0, "correlation without variance");
    }

    #[test]
    fn single_member_subpopulation_features_are_finite() {
        let mut env = Env::new(registry(), de_structure(), sphere(3, 2), params(1, 10)).unwrap();
        let rest: Vec<usize> = (1..env.state.pop.len()).collect();
        env.state.groups = vec![vec![0], rest];
        let f = env.featurize(0).unwrap();
        assert!(f.iter().all(|v| v.is_finite()));
        assert_eq!(f[2], 0.0);
        assert_eq!(f[3], 0.0);
        assert_eq!(f[4], 0.0);
        assert_eq!(f[5], 0.0);
    }

    #[test]
    fn execution_trace_matches_structure_order() {
        for seed in 0..100u64 {
            let tag = [SpaceTag::De, SpaceTag::PsoGa, SpaceTag::All][seed as usize % 3];
            let mut rng = stream(seed, "env-order-test", &[]);
            let s = generate(registry(), tag, &mut rng).unwrap();
            let flat = s.flat();
            let mut env =
                Env::new(registry(), s, sphere(2, seed), params(seed, 3)).unwrap();
            env.step_defaults().unwrap();
            // Initialization only runs at reset; everything after it executes
            // in exactly the declared order every generation.
            assert_eq!(env.last_exec_order(), &flat[1..]);
        }
    }

    #[test]
    fn niching_partitions_cover_the_population() {
        let mut found = 0;
        for seed in 0..200u64 {
            let mut rng = stream(seed, "env-niche-test", &[]);
            let s = generate(registry(), SpaceTag::All, &mut rng).unwrap();
            if s.multi_niching().is_none() {
                continue;
            }
            found += 1;
            let mut env =
                Env::new(registry(), s, sphere(3, seed), params(seed, 4)).unwrap();
            for _ in 0..4 {
                env.step_defaults().unwrap();
                let total: usize = env.state().groups.iter().map(Vec::len).sum();
                assert_eq!(total, env.state().pop.len());
                let mut seen: Vec<usize> =
                    env.state().groups.iter().flatten().copied().collect();
                seen.sort_unstable();
                assert_eq!(seen, (0..env.state().pop.len()).collect::<Vec<_>>());
            }
            if found >= 5 {
                return;
            }
        }
        panic!("no niching structure produced in 200 seeds");
    }

    #[test]
    fn reduction_follows_the_schedule() {
        let s = de_structure_with_tail(vec![
            ModuleId::new(Category::PopulationReduction, 1),
            ModuleId::new(Category::Completed, 1),
        ]);
        let mut env = Env::new(registry(), s, sphere(3, 4), params(3, 10)).unwrap();
        assert_eq!(env.state().pop.len(), DEFAULT_NP_MAX);
        for g in 1..=10usize {
            env.step_defaults().unwrap();
            let expected = scheduled_size(1, g, 10, DEFAULT_NP_MAX, NP_MIN);
            assert_eq!(env.state().pop.len(), expected, "generation {g}");
            assert!(env.state().archive.len() <= env.state().pop.len());
            assert_eq!(env.state().vel.len(), expected);
            assert_eq!(env.state().pbest_fit.len(), expected);
        }
        assert_eq!(env.state().pop.len(), NP_MIN);
    }

    #[test]
    fn stagnation_restart_redraws_but_keeps_the_record() {
        let s = de_structure_with_tail(vec![
            ModuleId::new(Category::RestartStrategy, 1),
            ModuleId::new(Category::Completed, 1),
        ]);
        let mut env = Env::new(registry(), s, sphere(3, 6), params(9, 200)).unwrap();
        env.state.archive.push((env.state.pop[0].clone(), env.state.fit[0]));
        // Fake a long stagnation so the trigger's window test fires.
        let record = env.state.f_best;
        env.state.best_log = vec![record; 150];
        let before = env.state.pop.clone();
        env.step_defaults().unwrap();
        assert_eq!(env.state().restarts.len(), 1);
        assert!(env.state().archive.is_empty());
        assert!(env.state().f_best <= record, "record survives the restart");
        assert_ne!(env.state().pop, before, "population was re-drawn");
        assert!(env.state().best_log.len() <= 2, "stagnation log starts over");
    }

    #[test]
    fn raw_actions_map_into_declared_ranges() {
        let mut env =
            Env::new(registry(), de_structure(), sphere(3, 8), params(4, 10)).unwrap();
        let ids = env.controllable_ids();
        assert_eq!(ids.len(), 2, "mutation and crossover take actions");
        // DE/rand/1 takes F1; Binomial takes Cr. Off-range raws clamp.
        let rows = vec![vec![0.5], vec![-3.2]];
        let out = env.step_with(ActionSource::Raw(&rows)).unwrap();
        assert!(!out.done);
        // NaN actions are rejected before anything runs.
        let bad = vec![vec![f64::NAN], vec![0.5]];
        let t_before = env.state().t;
        assert!(env.step_with(ActionSource::Raw(&bad)).is_err());
        assert_eq!(env.state().t, t_before);
        // Wrong row count is rejected too.
        let short = vec![vec![0.5]];
        assert!(env.step_with(ActionSource::Raw(&short)).is_err());
    }

    #[test]
    fn injected_candidate_replaces_the_worst_row() {
        let instance = sphere(4, 9);
        let optimum = instance.optimizer().to_vec();
        let mut env = Env::new(registry(), de_structure(), instance, params(5, 10)).unwrap();
        let worst = argmax(&env.state().fit).unwrap();
        let f = env.inject_candidate(&optimum).unwrap();
        assert_eq!(f, env.instance().f_star());
        assert_eq!(env.state().pop[worst], optimum);
        assert_eq!(env.state().fit[worst], f);
        // The record itself updates on the next step, not at injection time.
        assert!(env.state().f_best > f);
    }

    #[test]
    fn stepping_a_finished_episode_fails() {
        let mut env =
            Env::new(registry(), de_structure(), sphere(2, 1), params(1, 2)).unwrap();
        env.step_defaults().unwrap();
        let out = env.step_defaults().unwrap();
        assert!(out.done);
        assert!(matches!(
            env.step_defaults(),
            Err(CoreError::EnvMisuse(_))
        ));
        env.reset().unwrap();
        assert!(env.step_defaults().is_ok());
    }

    #[test]
    fn too_small_population_for_niching_is_rejected() {
        let mut rng = stream(0, "env-small-np", &[]);
        let s = loop {
            let s = generate(registry(), SpaceTag::All, &mut rng).unwrap();
            if let Some(mn) = s.multi_niching() {
                let n = registry().require(mn).unwrap().ms.as_ref().unwrap().n_sub.unwrap();
                if n >= 3 {
                    break s;
                }
            }
        };
        let p = EnvParams {
            np_max: Some(5),
            ..params(1, 10)
        };
        assert!(Env::new(registry(), s, sphere(2, 1), p).is_err());
    }

    #[test]
    fn trace_records_each_generation() {
        let p = EnvParams {
            record_trace: true,
            ..params(3, 10)
        };
        let mut env = Env::new(registry(), de_structure(), sphere(3, 5), p).unwrap();
        for _ in 0..3 {
            env.step_defaults().unwrap();
        }
        let trace = env.trace();
        assert_eq!(trace.len(), 3);
        assert_eq!(trace[0].t, 1);
        assert_eq!(trace[2].t, 3);
        for rec in trace {
            assert!(!rec.configs.is_empty());
            let line = serde_json::to_string(rec).unwrap();
            let back: serde_json::Value = serde_json::from_str(&line).unwrap();
            assert_eq!(back["t"], serde_json::json!(rec.t));
        }
    }

    #[test]
    fn evaluation_budget_ends_the_episode() {
        let p = EnvParams {
            max_evals: Some(120),
            ..params(1, 100)
        };
        let mut env = Env::new(registry(), de_structure(), sphere(3, 5), p).unwrap();
        let mut steps = 0;
        loop {
            let out = env.step_defaults().unwrap();
            steps += 1;
            if out.done {
                break;
            }
        }
        // 50 initial evaluations + 50 per generation: the cap of 120 bites
        // after the second generation, far before the 100-step horizon.
        assert_eq!(steps, 2);
        assert!(env.instance().evals() >= 120);
    }

    #[test]
    fn pso_episode_tracks_personal_bests() {
        let s = AlgorithmStructure {
            trunk: vec![
                ModuleId::new(Category::Initialization, 1),
                ModuleId::new(Category::PsoUpdate, 1),
                ModuleId::new(Category::BoundaryControl, 1),
                ModuleId::new(Category::Selection, 3),
            ],
            branches: vec![],
            tail: vec![ModuleId::new(Category::Completed, 1)],
            l: 5,
            space_tag: SpaceTag::PsoGa,
        };
        let mut env = Env::new(registry(), s, sphere(3, 7), params(2, 20)).unwrap();
        for _ in 0..20 {
            env.step_defaults().unwrap();
        }
        for (i, &pf) in env.state().pbest_fit.iter().enumerate() {
            assert!(
                pf <= env.state().fit[i] + 1e-12,
                "personal best is at least as good as the current position"
            );
        }
        let best_pbest = env.state().pbest_fit.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((best_pbest - env.state().f_best).abs() < 1e-12);
    }
}
