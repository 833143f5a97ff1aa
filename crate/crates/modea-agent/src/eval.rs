//! Task-set construction, baseline rollouts, and the min-max-normalized
//! performance metric.
//!
//! Four splits mirror the training/transfer protocol at desk scale: `train`
//! and `test_in` pair differential-evolution structures with training-half
//! functions, `test_out_problem` moves the same structure space onto the
//! held-out functions, and `test_out_algorithm` switches to the PSO/GA
//! space.  Three baselines produce best-so-far objective curves — the
//! trained agent (deterministic mean actions), uniform-random actions, and
//! every module's published default configuration — which are normalized
//! per task by bounds pooled over all baselines and runs, then averaged
//! into per-step performance curves and a mean ± std summary.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use modea_core::env::{ActionSource, Env, EnvParams, TraceRecord};
use modea_core::error::CoreError;
use modea_core::problems::{FnId, ProblemDescriptor, CATALOG_DIMS, HOLDOUT_FNS, TRAIN_FNS};
use modea_core::registry::Registry;
use modea_core::rng::stream;
use modea_core::structure::{generate, AlgorithmStructure, SpaceTag};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::policy::{ActionMode, Policy};
use crate::trainer::Task;

/// Which split a task set belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    TestIn,
    TestOutProblem,
    TestOutAlgorithm,
}

impl SplitTag {
    pub fn name(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::TestIn => "test_in",
            SplitTag::TestOutProblem => "test_out_problem",
            SplitTag::TestOutAlgorithm => "test_out_algorithm",
        }
    }

    pub fn parse(s: &str) -> Option<SplitTag> {
        SplitTag::all().into_iter().find(|t| t.name() == s)
    }

    pub fn all() -> [SplitTag; 4] {
        [
            SplitTag::Train,
            SplitTag::TestIn,
            SplitTag::TestOutProblem,
            SplitTag::TestOutAlgorithm,
        ]
    }
}

/// A named collection of (structure, problem) tasks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSet {
    pub name: String,
    pub split_tag: SplitTag,
    pub tasks: Vec<Task>,
}

impl TaskSet {
    /// Stable identifier of one task, used as the bounds-file key.  It
    /// embeds the set name and position so bounds frozen by one experiment
    /// resolve unambiguously in later ones.
    pub fn task_id(&self, index: usize) -> String {
        format!("{}/{:02}/{}", self.name, index, self.tasks[index].label())
    }
}

/// Counts controlling split construction.  The defaults are the desk-scale
/// protocol; `test_out_problem` reuses the fresh `test_in` structures so
/// the function transfer is isolated from structure novelty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_structures: usize,
    pub train_problems: usize,
    pub test_in_structures: usize,
    pub test_in_problems: usize,
    pub out_problem_functions: usize,
    pub out_alg_structures: usize,
    pub out_alg_problems: usize,
}

impl Default for SplitPlan {
    fn default() -> SplitPlan {
        SplitPlan {
            train_structures: 8,
            train_problems: 4,
            test_in_structures: 8,
            test_in_problems: 8,
            out_problem_functions: 6,
            out_alg_structures: 8,
            out_alg_problems: 8,
        }
    }
}

/// The four evaluation splits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSets {
    pub train: TaskSet,
    pub test_in: TaskSet,
    pub test_out_problem: TaskSet,
    pub test_out_algorithm: TaskSet,
}

impl TaskSets {
    pub fn get(&self, name: &str) -> Option<&TaskSet> {
        self.all().into_iter().find(|s| s.name == name)
    }

    pub fn all(&self) -> [&TaskSet; 4] {
        [
            &self.train,
            &self.test_in,
            &self.test_out_problem,
            &self.test_out_algorithm,
        ]
    }
}

fn sample_structures(
    registry: &Registry,
    tag: SpaceTag,
    n: usize,
    seed: u64,
    lane: u64,
) -> Result<Vec<AlgorithmStructure>, CoreError> {
    let mut rng = stream(seed, "split-structures", &[lane]);
    (0..n).map(|_| generate(registry, tag, &mut rng)).collect()
}

fn sample_problems(fns: &[FnId], n: usize, seed: u64, lane: u64) -> Vec<ProblemDescriptor> {
    let mut rng = stream(seed, "split-problems", &[lane]);
    (0..n)
        .map(|_| {
            let f = fns[rng.random_range(0..fns.len())];
            let d = CATALOG_DIMS[rng.random_range(0..CATALOG_DIMS.len())];
            ProblemDescriptor::new(f, d, rng.random())
        })
        .collect()
}

fn cross(
    name: &str,
    tag: SplitTag,
    structures: &[AlgorithmStructure],
    problems: &[ProblemDescriptor],
) -> TaskSet {
    let tasks = structures
        .iter()
        .flat_map(|s| {
            problems.iter().map(move |p| Task {
                structure: s.clone(),
                problem: p.clone(),
            })
        })
        .collect();
    TaskSet {
        name: name.to_string(),
        split_tag: tag,
        tasks,
    }
}

/// Build the four splits deterministically from one seed.
pub fn build_task_sets(
    registry: &Registry,
    plan: &SplitPlan,
    seed: u64,
) -> Result<TaskSets, CoreError> {
    if plan.out_problem_functions > HOLDOUT_FNS.len() {
        return Err(CoreError::InvalidArgument(format!(
            "at most {} held-out functions are available",
            HOLDOUT_FNS.len()
        )));
    }
    let train_structs = sample_structures(registry, SpaceTag::De, plan.train_structures, seed, 0)?;
    let test_structs = sample_structures(registry, SpaceTag::De, plan.test_in_structures, seed, 1)?;
    let alg_structs =
        sample_structures(registry, SpaceTag::PsoGa, plan.out_alg_structures, seed, 3)?;

    let train_problems = sample_problems(&TRAIN_FNS, plan.train_problems, seed, 0);
    let test_problems = sample_problems(&TRAIN_FNS, plan.test_in_problems, seed, 1);
    let alg_problems = sample_problems(&TRAIN_FNS, plan.out_alg_problems, seed, 3);
    let out_problems: Vec<ProblemDescriptor> = {
        let mut rng = stream(seed, "split-problems", &[2]);
        HOLDOUT_FNS[..plan.out_problem_functions]
            .iter()
            .map(|&f| {
                let d = CATALOG_DIMS[rng.random_range(0..CATALOG_DIMS.len())];
                ProblemDescriptor::new(f, d, rng.random())
            })
            .collect()
    };

    let sets = TaskSets {
        train: cross("train", SplitTag::Train, &train_structs, &train_problems),
        test_in: cross("test_in", SplitTag::TestIn, &test_structs, &test_problems),
        test_out_problem: cross(
            "test_out_problem",
            SplitTag::TestOutProblem,
            &test_structs,
            &out_problems,
        ),
        test_out_algorithm: cross(
            "test_out_algorithm",
            SplitTag::TestOutAlgorithm,
            &alg_structs,
            &alg_problems,
        ),
    };

    // The split contract: no (structure, problem) pair may appear in both
    // train and test_in.  Fresh rng lanes make a collision essentially
    // impossible, but the invariant is promised, so verify it.
    let key = |t: &Task| {
        let s = serde_json::to_string(&t.structure).expect("structures serialize");
        format!("{s}|{}|{}", t.problem.label(), t.problem.seed)
    };
    let train_keys: BTreeSet<String> = sets.train.tasks.iter().map(&key).collect();
    if sets.test_in.tasks.iter().any(|t| train_keys.contains(&key(t))) {
        return Err(CoreError::InvalidArgument(
            "train and test_in drew an identical (structure, problem) pair; change the seed"
                .into(),
        ));
    }
    Ok(sets)
}

/// The three comparison baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Trained policy applying deterministic mean actions.
    Agent,
    /// Fresh uniform raw action rows every step.
    Random,
    /// Every module's default configuration every step.
    Original,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Agent => "agent",
            BaselineKind::Random => "random",
            BaselineKind::Original => "original",
        }
    }

    pub fn parse(s: &str) -> Option<BaselineKind> {
        BaselineKind::all().into_iter().find(|b| b.name() == s)
    }

    pub fn all() -> [BaselineKind; 3] {
        [
            BaselineKind::Agent,
            BaselineKind::Random,
            BaselineKind::Original,
        ]
    }
}

/// Settings for one baseline evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    /// Independent runs per task (G).
    pub runs: usize,
    /// Generations per episode (H).
    pub horizon: usize,
    pub seed: u64,
    /// Keep per-step materialized-configuration traces (memory-heavy;
    /// meant for inspection and tests, not full evaluations).
    pub record_trace: bool,
}

impl Default for EvalParams {
    fn default() -> EvalParams {
        EvalParams {
            runs: 11,
            horizon: 100,
            seed: 0,
            record_trace: false,
        }
    }
}

impl EvalParams {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.runs == 0 || self.horizon == 0 {
            return Err(CoreError::InvalidArgument(
                "evaluation needs at least one run and one generation".into(),
            ));
        }
        Ok(())
    }
}

/// Raw best-so-far objective curves of one baseline on one task set:
/// `curves[task][run][t]` for t ∈ 0..=H.
#[derive(Debug, Clone, Serialize)]
pub struct RawCurves {
    pub baseline: BaselineKind,
    pub curves: Vec<Vec<Vec<f64>>>,
    /// Per-(task, run) step traces; empty unless
    /// [`EvalParams::record_trace`] was set.
    pub traces: Vec<Vec<Vec<TraceRecord>>>,
}

fn episode(
    registry: &Registry,
    kind: BaselineKind,
    policy: Option<&Policy>,
    task: &Task,
    params: &EvalParams,
    task_index: usize,
    run: usize,
) -> Result<(Vec<f64>, Vec<TraceRecord>), CoreError> {
    let fault = |e: CoreError| {
        CoreError::InvalidArgument(format!("task {task_index} ({}): {e}", task.label()))
    };
    let instance = task.problem.build().map_err(fault)?;
    let lanes = [task_index as u64, run as u64];
    let env_params = EnvParams {
        horizon: params.horizon,
        seed: stream(params.seed, "eval-env", &lanes).random(),
        record_trace: params.record_trace,
        ..EnvParams::default()
    };
    let mut env =
        Env::new(registry, task.structure.clone(), instance, env_params).map_err(fault)?;
    let mut rng = stream(params.seed, "eval-act", &lanes);
    let n_controllable = env.controllable_ids().len();
    let action_dims = registry.max_config_dims();

    let mut curve = Vec::with_capacity(params.horizon + 1);
    curve.push(env.state().f_best);
    let mut tokens = env.tokens();
    for _ in 0..params.horizon {
        let outcome = match kind {
            BaselineKind::Original => env.step_defaults().map_err(fault)?,
            BaselineKind::Random => {
                let rows: Vec<Vec<f64>> = (0..n_controllable)
                    .map(|_| (0..action_dims).map(|_| rng.random::<f64>()).collect())
                    .collect();
                env.step_with(ActionSource::Raw(&rows)).map_err(fault)?
            }
            BaselineKind::Agent => {
                let decision = policy
                    .expect("checked by run_baseline")
                    .act(&tokens, ActionMode::Mean, &mut rng)
                    .map_err(fault)?;
                env.step_with(ActionSource::Raw(&decision.rows))
                    .map_err(fault)?
            }
        };
        debug_assert!(env.state().f_best <= *curve.last().expect("curve is seeded"));
        curve.push(env.state().f_best);
        tokens = outcome.tokens;
        if outcome.done {
            break;
        }
    }
    // An evaluation-budget cutoff can end the episode early; the best-so-far
    // value simply persists for the remaining steps.
    let last = *curve.last().expect("curve is seeded");
    while curve.len() <= params.horizon {
        curve.push(last);
    }
    Ok((curve, env.take_trace()))
}

/// Run one baseline over every (task, run) cell of a task set.  Cells are
/// independent and run in parallel; each draws its rng streams from
/// (seed, task index, run index), so results do not depend on worker count.
pub fn run_baseline(
    registry: &Registry,
    kind: BaselineKind,
    policy: Option<&Policy>,
    set: &TaskSet,
    params: &EvalParams,
) -> Result<RawCurves, CoreError> {
    params.validate()?;
    if set.tasks.is_empty() {
        return Err(CoreError::InvalidArgument(format!(
            "task set {} is empty",
            set.name
        )));
    }
    if kind == BaselineKind::Agent && policy.is_none() {
        return Err(CoreError::InvalidArgument(
            "the agent baseline needs a policy checkpoint".into(),
        ));
    }
    let jobs: Vec<(usize, usize)> = (0..set.tasks.len())
        .flat_map(|t| (0..params.runs).map(move |g| (t, g)))
        .collect();
    let cells: Vec<Result<(Vec<f64>, Vec<TraceRecord>), CoreError>> = jobs
        .par_iter()
        .map(|&(t, g)| episode(registry, kind, policy, &set.tasks[t], params, t, g))
        .collect();

    let mut curves = vec![Vec::with_capacity(params.runs); set.tasks.len()];
    let mut traces = if params.record_trace {
        vec![Vec::with_capacity(params.runs); set.tasks.len()]
    } else {
        Vec::new()
    };
    for (&(t, _), cell) in jobs.iter().zip(cells) {
        let (curve, trace) = cell?;
        curves[t].push(curve);
        if params.record_trace {
            traces[t].push(trace);
        }
    }
    Ok(RawCurves {
        baseline: kind,
        curves,
        traces,
    })
}

/// Frozen per-task normalization bounds: task id → [Obj_min, Obj_max].
pub type Bounds = BTreeMap<String, [f64; 2]>;

/// Normalized objective curves and summary statistics for one task set.
#[derive(Debug, Clone, Serialize)]
pub struct MetricTable {
    pub set_name: String,
    pub runs: usize,
    pub horizon: usize,
    /// Per-task [Obj_min, Obj_max], pooled over baselines and runs unless
    /// frozen bounds were supplied.
    pub bounds: Bounds,
    /// Per baseline: mean normalized objective per step (length H+1).
    pub obj: BTreeMap<&'static str, Vec<f64>>,
    /// Per baseline: final performance of each run, averaged over tasks.
    pub run_finals: BTreeMap<&'static str, Vec<f64>>,
    /// Normalized values that fell outside [0,1] before clamping.
    pub clamp_events: usize,
    /// Tasks whose bounds coincide (solved at initialization); they
    /// contribute 0 to every normalized mean.
    pub degenerate_tasks: Vec<String>,
}

impl MetricTable {
    /// Per-step performance curve 1 − Obj for one baseline.
    pub fn performance(&self, kind: BaselineKind) -> Option<Vec<f64>> {
        self.obj
            .get(kind.name())
            .map(|o| o.iter().map(|v| 1.0 - v).collect())
    }

    /// Mean and population standard deviation of final performance over
    /// runs, the summary-table cell.
    pub fn final_performance(&self, kind: BaselineKind) -> Option<(f64, f64)> {
        let finals = self.run_finals.get(kind.name())?;
        let n = finals.len() as f64;
        let mean = finals.iter().sum::<f64>() / n;
        let var = finals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some((mean, var.sqrt()))
    }
}

/// Normalize every baseline's curves with shared per-task bounds and
/// average into per-step objective curves.
///
/// Without `frozen` bounds, Obj_max is pooled from every baseline's t=0
/// values and Obj_min from their final values.  With frozen bounds, values
/// may fall outside [0,1]; they are clamped and counted.
pub fn normalized_metric(
    set: &TaskSet,
    curves: &[RawCurves],
    frozen: Option<&Bounds>,
) -> Result<MetricTable, CoreError> {
    if curves.is_empty() {
        return Err(CoreError::InvalidArgument(
            "at least one baseline's curves are required".into(),
        ));
    }
    let runs = curves[0].curves.first().map_or(0, Vec::len);
    let width = curves[0]
        .curves
        .first()
        .and_then(|r| r.first())
        .map_or(0, Vec::len);
    if runs == 0 || width < 2 {
        return Err(CoreError::InvalidArgument(
            "curves must cover at least one run and one step".into(),
        ));
    }
    let mut seen = BTreeSet::new();
    for rc in curves {
        if !seen.insert(rc.baseline) {
            return Err(CoreError::InvalidArgument(format!(
                "baseline {} appears twice",
                rc.baseline.name()
            )));
        }
        if rc.curves.len() != set.tasks.len() {
            return Err(CoreError::InvalidArgument(format!(
                "baseline {} covers {} tasks, task set {} has {}",
                rc.baseline.name(),
                rc.curves.len(),
                set.name,
                set.tasks.len()
            )));
        }
        if rc
            .curves
            .iter()
            .any(|r| r.len() != runs || r.iter().any(|c| c.len() != width))
        {
            return Err(CoreError::InvalidArgument(format!(
                "baseline {} has ragged curves; every task needs {} runs of {} steps",
                rc.baseline.name(),
                runs,
                width - 1
            )));
        }
    }

    let horizon = width - 1;
    let mut bounds = Bounds::new();
    for i in 0..set.tasks.len() {
        let id = set.task_id(i);
        let b = match frozen {
            Some(map) => *map.get(&id).ok_or_else(|| {
                CoreError::InvalidArgument(format!("bounds file has no entry for task {id}"))
            })?,
            None => {
                let mut hi = f64::NEG_INFINITY;
                let mut lo = f64::INFINITY;
                for rc in curves {
                    for run in &rc.curves[i] {
                        hi = hi.max(run[0]);
                        lo = lo.min(run[horizon]);
                    }
                }
                [lo, hi]
            }
        };
        if !(b[0] <= b[1]) {
            return Err(CoreError::InvalidArgument(format!(
                "task {id}: Obj_min {} exceeds Obj_max {}",
                b[0], b[1]
            )));
        }
        bounds.insert(id, b);
    }

    let mut clamp_events = 0usize;
    let mut degenerate: Vec<String> = Vec::new();
    for (i, _) in set.tasks.iter().enumerate() {
        let id = set.task_id(i);
        let [lo, hi] = bounds[&id];
        if hi - lo <= 0.0 {
            degenerate.push(id);
        }
    }

    let mut obj = BTreeMap::new();
    let mut run_finals = BTreeMap::new();
    for rc in curves {
        let mut per_step = vec![0.0; width];
        let mut finals = vec![0.0; runs];
        for (i, task_runs) in rc.curves.iter().enumerate() {
            let [lo, hi] = bounds[&set.task_id(i)];
            let den = hi - lo;
            for (g, run) in task_runs.iter().enumerate() {
                for (t, &f) in run.iter().enumerate() {
                    let v = if den > 0.0 {
                        let raw = (f - lo) / den;
                        if !(0.0..=1.0).contains(&raw) {
                            clamp_events += 1;
                        }
                        raw.clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                    per_step[t] += v;
                    if t == horizon {
                        finals[g] += v;
                    }
                }
            }
        }
        let cells = (set.tasks.len() * runs) as f64;
        for v in &mut per_step {
            *v /= cells;
        }
        for v in &mut finals {
            *v = 1.0 - *v / set.tasks.len() as f64;
        }
        obj.insert(rc.baseline.name(), per_step);
        run_finals.insert(rc.baseline.name(), finals);
    }

    Ok(MetricTable {
        set_name: set.name.clone(),
        runs,
        horizon,
        bounds,
        obj,
        run_finals,
        clamp_events,
        degenerate_tasks: degenerate,
    })
}

/// Persist bounds as pretty-printed JSON (stable key order).
pub fn save_bounds(path: &Path, bounds: &Bounds) -> Result<(), CoreError> {
    let mut text = serde_json::to_string_pretty(bounds)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Load a bounds file, rejecting entries with Obj_min > Obj_max.
pub fn load_bounds(path: &Path) -> Result<Bounds, CoreError> {
    let text = fs::read_to_string(path)?;
    let bounds: Bounds = serde_json::from_str(&text)?;
    for (id, b) in &bounds {
        if !(b[0] <= b[1]) {
            return Err(CoreError::InvalidArgument(format!(
                "bounds file: task {id} has Obj_min {} > Obj_max {}",
                b[0], b[1]
            )));
        }
    }
    Ok(bounds)
}

/// Write per-step performance CSVs, the summary CSV, and the bounds file
/// into `dir`; returns the written paths.  Output depends only on the
/// table, so re-running is byte-identical.
pub fn report(table: &MetricTable, dir: &Path) -> Result<Vec<PathBuf>, CoreError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    for (name, obj) in &table.obj {
        let mut csv = String::from("step,performance\n");
        for (t, v) in obj.iter().enumerate() {
            writeln!(csv, "{t},{}", 1.0 - v).expect("string writes cannot fail");
        }
        let path = dir.join(format!("{}-{name}-perf.csv", table.set_name));
        fs::write(&path, csv)?;
        written.push(path);
    }

    let mut summary =
        String::from("baseline,final_performance,mean,std,runs,clamp_events,degenerate_tasks\n");
    for name in table.obj.keys() {
        let kind = BaselineKind::parse(name).expect("table keys are baseline names");
        let (mean, std) = table
            .final_performance(kind)
            .expect("every baseline in obj has run finals");
        writeln!(
            summary,
            "{name},{mean:.3} ± {std:.3},{mean},{std},{},{},{}",
            table.runs,
            table.clamp_events,
            table.degenerate_tasks.len()
        )
        .expect("string writes cannot fail");
    }
    let summary_path = dir.join(format!("{}-summary.csv", table.set_name));
    fs::write(&summary_path, summary)?;
    written.push(summary_path);

    let bounds_path = dir.join(format!("{}-bounds.json", table.set_name));
    save_bounds(&bounds_path, &table.bounds)?;
    written.push(bounds_path);
    Ok(written)
}
