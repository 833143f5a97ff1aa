//! Command-line surface of the framework.
//!
//! Seven subcommands cover the artifact's workflows: inspecting the module
//! registry, sampling and validating algorithm structures, training and
//! fine-tuning the configuration policy, evaluating baselines, and
//! summarizing past runs.  Every invocation writes exactly one
//! `manifest.json` — command, fully resolved configuration, seed, registry
//! hash, timestamp, artifact paths — so any run can be reproduced from its
//! output directory alone.
//!
//! Conventions: progress goes to standard error, machine-readable output
//! goes to files (inspection listings are the only standard-output users);
//! exit code 0 on success, 1 when an input fails validation, 2 on faults.
//! Task splits depend only on `--split-seed`, so runs that vary the
//! training or evaluation seed stay comparable on identical task sets.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use modea_agent::eval::{
    build_task_sets, load_bounds, normalized_metric, report, run_baseline, BaselineKind,
    EvalParams, RawCurves, SplitPlan, SplitTag,
};
use modea_agent::policy::{Policy, PolicyArch};
use modea_agent::trainer::{TrainConfig, TrainSession};
use modea_core::error::CoreError;
use modea_core::registry::{Category, Family, Registry, SubModuleSpec};
use modea_core::rng::stream;
use modea_core::structure::{self, AlgorithmStructure, SpaceTag};

/// Errors surfaced to the shell.
#[derive(Debug)]
pub enum CliError {
    /// An input failed validation before any real work ran → exit 1.
    Validation(String),
    /// I/O trouble or a failure during execution → exit 2.
    Fault(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Fault(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Fault(m) => f.write_str(m),
        }
    }
}

fn vfail(e: impl fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

fn fault(e: impl fmt::Display) -> CliError {
    CliError::Fault(e.to_string())
}

/// Map a core error by its nature: bad inputs count as validation
/// failures, broken files and runtime trouble as faults.
fn classify(e: CoreError) -> CliError {
    match e {
        CoreError::Serde(_) | CoreError::GenerationStuck { .. } | CoreError::EnvMisuse(_) => {
            fault(e)
        }
        _ => vfail(e),
    }
}

#[derive(Parser)]
#[command(
    name = "modea",
    version,
    about = "Modular evolutionary-algorithm structures with a learned configuration policy"
)]
pub struct Cli {
    /// Worker threads for parallel rollouts and evaluations
    /// (0 = logical core count; 1 guarantees bitwise reproducibility).
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// List registered sub-modules, optionally filtered by category.
    ListModules(ListModulesArgs),
    /// Sample legal algorithm structures and write them as JSON files.
    Generate(GenerateArgs),
    /// Check structure files against the topology rules.
    Validate(ValidateArgs),
    /// Train a configuration policy from scratch.
    Train(TrainArgs),
    /// Continue training from a checkpoint, typically on a new space.
    Finetune(FinetuneArgs),
    /// Run baselines over a task set and report normalized performance.
    Evaluate(EvaluateArgs),
    /// Summarize a previous run from its manifest.
    InspectRun(InspectRunArgs),
}

#[derive(Args)]
pub struct ListModulesArgs {
    /// Only show one category (e.g. mutation, crossover, pso-update).
    #[arg(long)]
    pub category: Option<String>,
    /// Also export the selected entries as JSON.
    #[arg(long)]
    pub export: Option<PathBuf>,
    /// Run directory (default: $MODEA_OUT or ./runs, plus the command name).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct GenerateArgs {
    /// Structure space: de, pso_ga, or all.
    #[arg(long, default_value = "de")]
    pub space: String,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run directory (default: $MODEA_OUT or ./runs, plus the command name).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ValidateArgs {
    /// Structure files to check.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    /// Run directory (default: $MODEA_OUT or ./runs, plus the command name).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Training-loop hyper-parameter overrides; flags win over `--config`.
#[derive(Args)]
pub struct TrainOverrides {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub nstep: Option<usize>,
    #[arg(long)]
    pub kappa: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long)]
    pub value_coef: Option<f64>,
    #[arg(long)]
    pub entropy_coef: Option<f64>,
    #[arg(long)]
    pub grad_clip: Option<f64>,
    #[arg(long)]
    pub gae_lambda: Option<f64>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl TrainOverrides {
    fn apply(&self, cfg: &mut TrainConfig) {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        take!(
            epochs, lr, batch_size, nstep, kappa, gamma, clip, value_coef, entropy_coef,
            grad_clip, gae_lambda, horizon, seed
        );
    }
}

#[derive(Args)]
pub struct TrainArgs {
    /// Key = value config file; any flag below overrides its entry.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Task set to train on.
    #[arg(long, default_value = "train")]
    pub task_set: String,
    /// Seed for building the task splits (kept separate from the training
    /// seed so seed sweeps share identical tasks).
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// File-name prefix for checkpoints and logs.
    #[arg(long, default_value = "train")]
    pub label: String,
    /// Continue an interrupted run from its last checkpoint.
    #[arg(long)]
    pub resume: bool,
    /// Run directory (default: $MODEA_OUT or ./runs, plus the label).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Args)]
pub struct FinetuneArgs {
    /// Checkpoint to continue from.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Task set to fine-tune on.
    #[arg(long, default_value = "test_out_algorithm")]
    pub task_set: String,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    #[arg(long, default_value = "finetune")]
    pub label: String,
    /// Run directory (default: $MODEA_OUT or ./runs, plus the label).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Policy checkpoint; required when the agent baseline runs.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// train, test_in, test_out_problem, or test_out_algorithm.
    #[arg(long, default_value = "test_in")]
    pub task_set: String,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Independent runs per task.
    #[arg(long, default_value_t = 11)]
    pub runs: usize,
    /// Generations per episode.
    #[arg(long, default_value_t = 100)]
    pub horizon: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Baselines to run (repeatable): agent, random, original.
    /// Default: all three.
    #[arg(long)]
    pub baseline: Vec<String>,
    /// Reuse frozen normalization bounds instead of pooling fresh ones.
    #[arg(long)]
    pub bounds: Option<PathBuf>,
    /// Run directory (default: $MODEA_OUT or ./runs, plus the command
    /// name and task set).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct InspectRunArgs {
    /// A run directory or a manifest.json path.
    pub path: PathBuf,
    /// Run directory (default: $MODEA_OUT or ./runs, plus the command name).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// The reproducibility record every invocation leaves behind.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Fully resolved configuration after file and flag merging.
    pub config: serde_json::Value,
    pub seed: u64,
    /// Content hash of the module registry this binary carries.
    pub registry_hash: String,
    /// Seconds since the Unix epoch at completion.
    pub timestamp: u64,
    /// Files this run produced, manifest excluded.
    pub artifacts: Vec<PathBuf>,
}

fn resolve_out(explicit: Option<PathBuf>, name: &str) -> PathBuf {
    explicit.unwrap_or_else(|| {
        std::env::var_os("MODEA_OUT")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"))
            .join(name)
    })
}

fn write_manifest(
    dir: &Path,
    command: &str,
    config: serde_json::Value,
    seed: u64,
    artifacts: Vec<PathBuf>,
) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(fault)?;
    let manifest = RunManifest {
        command: command.to_string(),
        config,
        seed,
        registry_hash: Registry::standard().content_hash(),
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .unwrap_or_default()
            .as_secs(),
        artifacts,
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(fault)?;
    text.push('\n');
    fs::write(dir.join("manifest.json"), text).map_err(fault)?;
    Ok(())
}

pub fn category_name(c: Category) -> &'static str {
    match c {
        Category::Initialization => "initialization",
        Category::Niching => "niching",
        Category::BoundaryControl => "boundary-control",
        Category::Selection => "selection",
        Category::RestartStrategy => "restart-strategy",
        Category::PopulationReduction => "population-reduction",
        Category::Completed => "completed",
        Category::Mutation => "mutation",
        Category::Crossover => "crossover",
        Category::PsoUpdate => "pso-update",
        Category::MultiStrategy => "multi-strategy",
        Category::InformationSharing => "information-sharing",
    }
}

fn parse_category(s: &str) -> Result<Category, CliError> {
    Category::all()
        .into_iter()
        .find(|c| category_name(*c) == s)
        .ok_or_else(|| {
            let names: Vec<_> = Category::all().map(category_name).to_vec();
            vfail(format!(
                "unknown category {s}; expected one of {}",
                names.join(", ")
            ))
        })
}

fn family_name(f: Family) -> &'static str {
    match f {
        Family::De => "de",
        Family::PsoGa => "pso-ga",
        Family::Neutral => "neutral",
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if cli.workers > 0 {
        // A second call in the same process keeps the first pool; results
        // do not depend on worker count, only scheduling does.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global();
    }
    match cli.command {
        Command::ListModules(a) => list_modules(a),
        Command::Generate(a) => generate(a),
        Command::Validate(a) => validate(a),
        Command::Train(a) => train(a),
        Command::Finetune(a) => finetune(a),
        Command::Evaluate(a) => evaluate(a),
        Command::InspectRun(a) => inspect_run(a),
    }
}

fn list_modules(args: ListModulesArgs) -> Result<(), CliError> {
    let registry = Registry::standard();
    let filter = args.category.as_deref().map(parse_category).transpose()?;
    let mut rows: Vec<&SubModuleSpec> = registry
        .variants()
        .iter()
        .filter(|s| filter.map_or(true, |c| s.category() == c))
        .collect();
    rows.sort_by_key(|s| s.id.bits());

    for spec in &rows {
        println!(
            "{:#06x}  {:<19} {:<34} dims={}  family={}",
            spec.id.bits(),
            category_name(spec.category()),
            spec.name,
            spec.config_dims(),
            family_name(spec.family),
        );
    }
    eprintln!("{} modules listed", rows.len());

    let mut artifacts = Vec::new();
    if let Some(path) = &args.export {
        let mut text = serde_json::to_string_pretty(&rows).map_err(fault)?;
        text.push('\n');
        fs::write(path, text).map_err(fault)?;
        artifacts.push(path.clone());
    }
    let dir = resolve_out(args.out, "list-modules");
    write_manifest(
        &dir,
        "list-modules",
        serde_json::json!({ "category": args.category, "export": args.export }),
        0,
        artifacts,
    )
}

fn generate(args: GenerateArgs) -> Result<(), CliError> {
    let registry = Registry::standard();
    let tag = SpaceTag::parse(&args.space).map_err(vfail)?;
    if args.count == 0 {
        return Err(vfail("count must be at least 1"));
    }
    let dir = resolve_out(args.out, "generate");
    fs::create_dir_all(&dir).map_err(fault)?;

    let mut rng = stream(args.seed, "generate", &[]);
    let mut artifacts = Vec::new();
    for i in 0..args.count {
        let s = structure::generate(registry, tag, &mut rng).map_err(fault)?;
        structure::validate(registry, &s).map_err(fault)?;
        let mut text = serde_json::to_string_pretty(&s).map_err(fault)?;
        text.push('\n');
        let path = dir.join(format!("structure-{i:03}.json"));
        fs::write(&path, text).map_err(fault)?;
        artifacts.push(path);
    }
    eprintln!(
        "wrote {} {} structures to {}",
        args.count,
        tag.name(),
        dir.display()
    );
    write_manifest(
        &dir,
        "generate",
        serde_json::json!({ "space": tag.name(), "count": args.count }),
        args.seed,
        artifacts,
    )
}

fn validate(args: ValidateArgs) -> Result<(), CliError> {
    let registry = Registry::standard();
    let mut failures = 0usize;
    for file in &args.files {
        let text = fs::read_to_string(file)
            .map_err(|e| fault(format!("{}: {e}", file.display())))?;
        let verdict = serde_json::from_str::<AlgorithmStructure>(&text)
            .map_err(|e| CoreError::InvalidArgument(format!("not a structure file ({e})")))
            .and_then(|s| structure::validate(registry, &s));
        match verdict {
            Ok(()) => eprintln!("{}: ok", file.display()),
            Err(e) => {
                eprintln!("{}: {e}", file.display());
                failures += 1;
            }
        }
    }
    let dir = resolve_out(args.out, "validate");
    write_manifest(
        &dir,
        "validate",
        serde_json::json!({ "files": args.files, "failures": failures }),
        0,
        Vec::new(),
    )?;
    if failures > 0 {
        return Err(vfail(format!(
            "{failures} of {} structure files failed validation",
            args.files.len()
        )));
    }
    Ok(())
}

fn load_train_config(
    file: Option<&PathBuf>,
    overrides: &TrainOverrides,
) -> Result<TrainConfig, CliError> {
    let mut cfg = match file {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| fault(format!("{}: {e}", path.display())))?;
            TrainConfig::parse(&text).map_err(|e| vfail(format!("{}: {e}", path.display())))?
        }
        None => TrainConfig::desk(),
    };
    overrides.apply(&mut cfg);
    cfg.validate().map_err(vfail)?;
    Ok(cfg)
}

fn pick_tasks(
    registry: &Registry,
    split_seed: u64,
    name: &str,
) -> Result<modea_agent::eval::TaskSet, CliError> {
    let sets = build_task_sets(registry, &SplitPlan::default(), split_seed).map_err(classify)?;
    sets.get(name).cloned().ok_or_else(|| {
        let names: Vec<_> = SplitTag::all().map(SplitTag::name).to_vec();
        vfail(format!(
            "unknown task set {name}; expected one of {}",
            names.join(", ")
        ))
    })
}

fn epoch_progress(label: &str) -> impl FnMut(&Policy, &modea_agent::trainer::LogRow) + '_ {
    move |_, row| {
        eprintln!(
            "{label} epoch {:>3}: return {:.4}  final perf {:.4}  entropy {:.4}  updates {}",
            row.epoch, row.mean_return, row.mean_final_perf, row.entropy, row.updates
        );
    }
}

fn train(args: TrainArgs) -> Result<(), CliError> {
    let registry = Registry::standard();
    let cfg = load_train_config(args.config.as_ref(), &args.overrides)?;
    let set = pick_tasks(registry, args.split_seed, &args.task_set)?;
    let dir = resolve_out(args.out, &args.label);
    let arch = PolicyArch::default();
    eprintln!(
        "policy: {} parameters; training on {} ({} tasks)",
        Policy::new(arch.clone(), cfg.seed).param_count(),
        set.name,
        set.tasks.len()
    );

    let session = TrainSession {
        registry,
        arch: arch.clone(),
        out_dir: dir.clone(),
        label: args.label.clone(),
    };
    let outcome = session
        .train(&set.tasks, &cfg, args.resume, epoch_progress(&args.label))
        .map_err(fault)?;
    eprintln!("checkpoint: {}", outcome.checkpoint.display());

    write_manifest(
        &dir,
        "train",
        serde_json::json!({
            "train": cfg,
            "arch": arch,
            "task_set": set.name,
            "split_seed": args.split_seed,
            "label": args.label,
            "resume": args.resume,
        }),
        cfg.seed,
        vec![outcome.checkpoint, outcome.log_path],
    )
}

fn finetune(args: FinetuneArgs) -> Result<(), CliError> {
    let registry = Registry::standard();
    let cfg = load_train_config(args.config.as_ref(), &args.overrides)?;
    let set = pick_tasks(registry, args.split_seed, &args.task_set)?;
    let dir = resolve_out(args.out, &args.label);
    let arch = PolicyArch::default();

    let session = TrainSession {
        registry,
        arch: arch.clone(),
        out_dir: dir.clone(),
        label: args.label.clone(),
    };
    let outcome = session
        .finetune(
            &args.checkpoint,
            &set.tasks,
            &cfg,
            epoch_progress(&args.label),
        )
        .map_err(classify)?;
    eprintln!(
        "policy: {} parameters; fine-tuned on {} ({} tasks)",
        outcome.policy.param_count(),
        set.name,
        set.tasks.len()
    );
    eprintln!("checkpoint: {}", outcome.checkpoint.display());

    write_manifest(
        &dir,
        "finetune",
        serde_json::json!({
            "train": cfg,
            "arch": arch,
            "task_set": set.name,
            "split_seed": args.split_seed,
            "label": args.label,
            "from_checkpoint": args.checkpoint,
        }),
        cfg.seed,
        vec![outcome.checkpoint, outcome.log_path],
    )
}

fn evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let registry = Registry::standard();
    let kinds: Vec<BaselineKind> = if args.baseline.is_empty() {
        BaselineKind::all().to_vec()
    } else {
        let mut chosen = BTreeSet::new();
        for name in &args.baseline {
            chosen.insert(BaselineKind::parse(name).ok_or_else(|| {
                vfail(format!(
                    "unknown baseline {name}; expected agent, random, or original"
                ))
            })?);
        }
        BaselineKind::all()
            .into_iter()
            .filter(|k| chosen.contains(k))
            .collect()
    };

    let policy = match (&args.checkpoint, kinds.contains(&BaselineKind::Agent)) {
        (Some(path), _) => {
            let (policy, step) = Policy::load(path).map_err(classify)?;
            eprintln!(
                "policy: {} parameters (checkpoint step {step})",
                policy.param_count()
            );
            Some(policy)
        }
        (None, true) => {
            return Err(vfail("the agent baseline needs --checkpoint"));
        }
        (None, false) => None,
    };

    let set = pick_tasks(registry, args.split_seed, &args.task_set)?;
    let params = EvalParams {
        runs: args.runs,
        horizon: args.horizon,
        seed: args.seed,
        record_trace: false,
    };
    params.validate().map_err(vfail)?;
    let frozen = args
        .bounds
        .as_ref()
        .map(|p| load_bounds(p))
        .transpose()
        .map_err(classify)?;

    let mut curves: Vec<RawCurves> = Vec::new();
    for kind in &kinds {
        eprintln!(
            "running {} on {} ({} tasks × {} runs × {} generations)",
            kind.name(),
            set.name,
            set.tasks.len(),
            params.runs,
            params.horizon
        );
        curves.push(
            run_baseline(registry, *kind, policy.as_ref(), &set, &params).map_err(fault)?,
        );
    }
    let table = normalized_metric(&set, &curves, frozen.as_ref()).map_err(classify)?;
    let dir = resolve_out(args.out, &format!("evaluate-{}", set.name));
    let artifacts = report(&table, &dir).map_err(fault)?;
    for kind in &kinds {
        let (mean, std) = table
            .final_performance(*kind)
            .expect("every requested baseline was run");
        eprintln!("{:<9} final performance {mean:.3} ± {std:.3}", kind.name());
    }
    if table.clamp_events > 0 || !table.degenerate_tasks.is_empty() {
        eprintln!(
            "normalization: {} clamp events, {} degenerate tasks",
            table.clamp_events,
            table.degenerate_tasks.len()
        );
    }

    write_manifest(
        &dir,
        "evaluate",
        serde_json::json!({
            "eval": params,
            "task_set": set.name,
            "split_seed": args.split_seed,
            "baselines": kinds.iter().map(|k| k.name()).collect::<Vec<_>>(),
            "checkpoint": args.checkpoint,
            "bounds": args.bounds,
        }),
        args.seed,
        artifacts,
    )
}

fn inspect_run(args: InspectRunArgs) -> Result<(), CliError> {
    let path = if args.path.is_dir() {
        args.path.join("manifest.json")
    } else {
        args.path.clone()
    };
    let text =
        fs::read_to_string(&path).map_err(|e| fault(format!("{}: {e}", path.display())))?;
    let manifest: RunManifest = serde_json::from_str(&text)
        .map_err(|e| vfail(format!("{}: not a run manifest ({e})", path.display())))?;

    let current_hash = Registry::standard().content_hash();
    println!("command:       {}", manifest.command);
    println!("seed:          {}", manifest.seed);
    println!("timestamp:     {}", manifest.timestamp);
    println!(
        "registry hash: {}{}",
        manifest.registry_hash,
        if manifest.registry_hash == current_hash {
            ""
        } else {
            "  (differs from this binary)"
        }
    );
    println!("artifacts:");
    if manifest.artifacts.is_empty() {
        println!("  (none)");
    }
    for artifact in &manifest.artifacts {
        println!(
            "  [{}] {}",
            if artifact.exists() { "present" } else { "missing" },
            artifact.display()
        );
    }
    println!("config:");
    let pretty = serde_json::to_string_pretty(&manifest.config).map_err(fault)?;
    for line in pretty.lines() {
        println!("  {line}");
    }

    let dir = resolve_out(args.out, "inspect-run");
    write_manifest(
        &dir,
        "inspect-run",
        serde_json::json!({ "inspected": path }),
        manifest.seed,
        Vec::new(),
    )
}
