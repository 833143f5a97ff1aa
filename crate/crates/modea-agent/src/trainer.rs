//! Multitask proximal-policy-optimization trainer.
//!
//! Batches of (algorithm structure, problem) tasks run as parallel episodes;
//! every `nstep` environment steps the collected window is turned into
//! GAE(λ) advantage targets and the policy takes κ clipped-surrogate
//! gradient passes.  Checkpoints land after every epoch and a CSV log
//! records returns, final normalized performance, and loss statistics, so
//! interrupted runs resume from the last completed epoch.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use modea_core::env::{ActionSource, Env, EnvParams, StateTokenSeq};
use modea_core::error::CoreError;
use modea_core::problems::ProblemDescriptor;
use modea_core::registry::Registry;
use modea_core::rng::{stream, Stream};
use modea_core::structure::AlgorithmStructure;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::policy::{ActionMode, Policy, PolicyArch};
use crate::tensor::{Tape, Tensor};

/// One training or evaluation unit: an algorithm structure applied to a
/// problem instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Task {
    pub structure: AlgorithmStructure,
    pub problem: ProblemDescriptor,
}

impl Task {
    pub fn label(&self) -> String {
        format!(
            "{}+{}@l{}",
            self.structure.space_tag.name(),
            self.problem.label(),
            self.structure.l
        )
    }
}

/// One environment step as stored in rollout memory.
#[derive(Debug, Clone)]
pub struct Transition {
    pub tokens: StateTokenSeq,
    pub action: Tensor,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
    pub next_tokens: StateTokenSeq,
}

/// All transitions one task contributed to the current update window.
#[derive(Debug, Clone)]
pub struct TaskWindow {
    pub task_index: usize,
    pub transitions: Vec<Transition>,
    /// Value estimate of the state after the window, zero when the episode
    /// ended inside it.
    pub bootstrap: f64,
}

/// Hyper-parameters of one training run.
///
/// The config-file schema is one `key = value` pair per line with `#`
/// comments; keys match the field names below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub nstep: usize,
    pub kappa: usize,
    pub gamma: f64,
    pub clip: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub grad_clip: f64,
    pub gae_lambda: f64,
    pub horizon: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            epochs: 50,
            lr: 0.001,
            batch_size: 32,
            nstep: 10,
            kappa: 3,
            gamma: 0.99,
            clip: 0.2,
            value_coef: 0.5,
            entropy_coef: 0.01,
            grad_clip: 0.5,
            gae_lambda: 0.95,
            horizon: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Desk-scale defaults: smaller batches and fewer epochs so a full run
    /// fits a laptop-class CPU budget.
    pub fn desk() -> TrainConfig {
        TrainConfig {
            epochs: 20,
            batch_size: 8,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        let positive = [
            ("epochs counts as runnable", true),
            ("lr", self.lr > 0.0),
            ("batch_size", self.batch_size > 0),
            ("nstep", self.nstep > 0),
            ("kappa", self.kappa >= 1),
            ("gamma", self.gamma > 0.0 && self.gamma <= 1.0),
            ("clip", self.clip >= 0.0),
            ("value_coef", self.value_coef >= 0.0),
            ("entropy_coef", self.entropy_coef >= 0.0),
            ("grad_clip", self.grad_clip > 0.0),
            ("gae_lambda", self.gae_lambda >= 0.0 && self.gae_lambda <= 1.0),
            ("horizon", self.horizon > 0),
        ];
        for (name, ok) in positive {
            if !ok {
                return Err(CoreError::InvalidArgument(format!(
                    "training config field {name} is out of range"
                )));
            }
        }
        Ok(())
    }

    /// Parse the `key = value` config format; unknown keys are errors.
    pub fn parse(text: &str) -> Result<TrainConfig, CoreError> {
        let mut cfg = TrainConfig::default();
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CoreError::InvalidArgument(format!(
                    "config line {}: expected key = value, got {line:?}",
                    ln + 1
                )));
            };
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| {
                CoreError::InvalidArgument(format!(
                    "config line {}: cannot parse {value:?} as {what} for key {key}",
                    ln + 1
                ))
            };
            match key {
                "epochs" => cfg.epochs = value.parse().map_err(|_| bad("an integer"))?,
                "lr" => cfg.lr = value.parse().map_err(|_| bad("a number"))?,
                "batch_size" => cfg.batch_size = value.parse().map_err(|_| bad("an integer"))?,
                "nstep" => cfg.nstep = value.parse().map_err(|_| bad("an integer"))?,
                "kappa" => cfg.kappa = value.parse().map_err(|_| bad("an integer"))?,
                "gamma" => cfg.gamma = value.parse().map_err(|_| bad("a number"))?,
                "clip" => cfg.clip = value.parse().map_err(|_| bad("a number"))?,
                "value_coef" => cfg.value_coef = value.parse().map_err(|_| bad("a number"))?,
                "entropy_coef" => cfg.entropy_coef = value.parse().map_err(|_| bad("a number"))?,
                "grad_clip" => cfg.grad_clip = value.parse().map_err(|_| bad("a number"))?,
                "gae_lambda" => cfg.gae_lambda = value.parse().map_err(|_| bad("a number"))?,
                "horizon" => cfg.horizon = value.parse().map_err(|_| bad("an integer"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("an integer"))?,
                other => {
                    return Err(CoreError::InvalidArgument(format!(
                        "config line {}: unknown key {other:?}",
                        ln + 1
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Render in the same `key = value` format [`TrainConfig::parse`] reads.
    pub fn to_text(&self) -> String {
        format!(
            "epochs = {}\nlr = {}\nbatch_size = {}\nnstep = {}\nkappa = {}\ngamma = {}\nclip = {}\nvalue_coef = {}\nentropy_coef = {}\ngrad_clip = {}\ngae_lambda = {}\nhorizon = {}\nseed = {}\n",
            self.epochs,
            self.lr,
            self.batch_size,
            self.nstep,
            self.kappa,
            self.gamma,
            self.clip,
            self.value_coef,
            self.entropy_coef,
            self.grad_clip,
            self.gae_lambda,
            self.horizon,
            self.seed
        )
    }
}

/// Per-epoch training-log entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub mean_return: f64,
    pub mean_final_perf: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Cumulative parameter updates since the start of the run.
    pub updates: usize,
}

impl LogRow {
    pub const CSV_HEADER: &'static str =
        "epoch,mean_return,mean_final_perf,policy_loss,value_loss,entropy,updates";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch,
            self.mean_return,
            self.mean_final_perf,
            self.policy_loss,
            self.value_loss,
            self.entropy,
            self.updates
        )
    }
}

/// Loss statistics averaged over one update round's κ passes.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossStats {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub passes: usize,
}

/// Adam optimizer with persistent first/second-moment state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, shapes: &[Tensor]) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: shapes.iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect(),
            v: shapes.iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) {
        assert_eq!(params.len(), grads.len());
        self.t += 1;
        let b1c = 1.0 - self.beta1.powi(self.t as i32);
        let b2c = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for k in 0..p.data.len() {
                let gk = g.data[k];
                m.data[k] = self.beta1 * m.data[k] + (1.0 - self.beta1) * gk;
                v.data[k] = self.beta2 * v.data[k] + (1.0 - self.beta2) * gk * gk;
                let mh = m.data[k] / b1c;
                let vh = v.data[k] / b2c;
                p.data[k] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// Scale gradients in place so their global L2 norm is at most `max_norm`.
pub fn clip_gradient_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let total: f64 = grads.iter().map(Tensor::sq_norm).sum::<f64>().sqrt();
    if total > max_norm && total > 0.0 {
        let s = max_norm / total;
        for g in grads.iter_mut() {
            g.data.iter_mut().for_each(|v| *v *= s);
        }
    }
    total
}

/// GAE(λ) advantages for one temporally ordered transition sequence.
///
/// `values[t]` is the collection-time estimate of `V(s_t)`; `bootstrap`
/// stands in for the value after the window and is ignored past a `done`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = rewards.len();
    assert_eq!(values.len(), n);
    assert_eq!(dones.len(), n);
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let next_v = if dones[t] {
            0.0
        } else if t + 1 < n {
            values[t + 1]
        } else {
            bootstrap
        };
        let delta = rewards[t] + gamma * next_v - values[t];
        acc = delta + gamma * lambda * if dones[t] { 0.0 } else { acc };
        adv[t] = acc;
    }
    adv
}

/// One flattened, advantage-labelled transition ready for the PPO loss.
pub struct BatchItem {
    pub tokens: StateTokenSeq,
    pub action: Tensor,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

/// Flatten a rollout into normalized-advantage batch items.
///
/// Advantages are standardized over the whole update batch; batches of a
/// single transition keep their raw advantage because a one-sample standard
/// deviation would erase the update.
pub fn prepare_batch(windows: &[TaskWindow], gamma: f64, lambda: f64) -> Vec<BatchItem> {
    let mut items = Vec::new();
    for w in windows {
        let rewards: Vec<f64> = w.transitions.iter().map(|t| t.reward).collect();
        let values: Vec<f64> = w.transitions.iter().map(|t| t.value).collect();
        let dones: Vec<bool> = w.transitions.iter().map(|t| t.done).collect();
        let adv = gae(&rewards, &values, &dones, w.bootstrap, gamma, lambda);
        for (t, a) in w.transitions.iter().zip(adv) {
            items.push(BatchItem {
                tokens: t.tokens.clone(),
                action: t.action.clone(),
                old_log_prob: t.log_prob,
                advantage: a,
                ret: a + t.value,
            });
        }
    }
    if items.len() >= 2 {
        let n = items.len() as f64;
        let mean = items.iter().map(|i| i.advantage).sum::<f64>() / n;
        let var = items
            .iter()
            .map(|i| (i.advantage - mean).powi(2))
            .sum::<f64>()
            / n;
        let std = var.sqrt().max(1e-8);
        for i in &mut items {
            i.advantage = (i.advantage - mean) / std;
        }
    }
    items
}

/// κ clipped-surrogate passes over one update batch, applying an Adam step
/// after each.  Errors (leaving parameters and checkpoints untouched for
/// the failing pass) if the loss or any gradient is non-finite.
pub fn ppo_update(
    policy: &mut Policy,
    adam: &mut Adam,
    items: &[BatchItem],
    cfg: &TrainConfig,
) -> Result<LossStats, CoreError> {
    if items.is_empty() {
        return Err(CoreError::InvalidArgument(
            "update batch holds no transitions".into(),
        ));
    }
    let mut stats = LossStats::default();
    for _pass in 0..cfg.kappa {
        let mut tape = Tape::new();
        let binding = policy.bind(&mut tape);
        let mut policy_sum = None;
        let mut value_sum = None;
        let mut entropy_sum = None;
        for item in items {
            let fwd = policy.forward(&mut tape, &binding, &item.tokens)?;
            let lp = policy.log_prob(&mut tape, &fwd, &item.action);
            let shifted = tape.add_const(lp, -item.old_log_prob);
            let ratio = tape.exp(shifted);
            let surr = tape.scale(ratio, item.advantage);
            let clipped_ratio = tape.clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
            let clipped_surr = tape.scale(clipped_ratio, item.advantage);
            let term = tape.min(surr, clipped_surr);
            policy_sum = Some(match policy_sum {
                None => term,
                Some(acc) => tape.add(acc, term),
            });

            let vdiff = tape.add_const(fwd.value, -item.ret);
            let vsq = tape.mul(vdiff, vdiff);
            value_sum = Some(match value_sum {
                None => vsq,
                Some(acc) => tape.add(acc, vsq),
            });

            let ent = policy.entropy(&mut tape, &fwd);
            entropy_sum = Some(match entropy_sum {
                None => ent,
                Some(acc) => tape.add(acc, ent),
            });
        }
        let n = items.len() as f64;
        let policy_loss = tape.scale(policy_sum.expect("non-empty batch"), -1.0 / n);
        let value_loss = tape.scale(value_sum.expect("non-empty batch"), 1.0 / n);
        let entropy_mean = tape.scale(entropy_sum.expect("non-empty batch"), 1.0 / n);
        let weighted_value = tape.scale(value_loss, cfg.value_coef);
        let bonus = tape.scale(entropy_mean, -cfg.entropy_coef);
        let partial = tape.add(policy_loss, weighted_value);
        let loss = tape.add(partial, bonus);

        let loss_v = tape.value(loss).data[0];
        if !loss_v.is_finite() {
            return Err(CoreError::InvalidArgument(format!(
                "non-finite training loss {loss_v}; aborting before touching parameters"
            )));
        }
        stats.policy += tape.value(policy_loss).data[0];
        stats.value += tape.value(value_loss).data[0];
        stats.entropy += tape.value(entropy_mean).data[0];
        stats.passes += 1;

        let grads = tape.backward(loss);
        let mut named = policy.collect_grads(&tape, &binding, &grads)?;
        clip_gradient_norm(&mut named, cfg.grad_clip);
        adam.step(policy.tensors_mut(), &named);
    }
    stats.policy /= stats.passes as f64;
    stats.value /= stats.passes as f64;
    stats.entropy /= stats.passes as f64;
    Ok(stats)
}

/// A task's live episode state within one epoch.
struct TaskSlot<'r> {
    task_index: usize,
    env: Env<'r>,
    rng: Stream,
    tokens: StateTokenSeq,
    done: bool,
    episode_return: f64,
}

/// Collect up to `nstep` transitions from every live slot, in parallel.
fn rollout_window(
    policy: &Policy,
    slots: &mut [TaskSlot<'_>],
    nstep: usize,
    tasks: &[Task],
) -> Result<Vec<TaskWindow>, CoreError> {
    let windows: Vec<Result<Option<TaskWindow>, CoreError>> = slots
        .par_iter_mut()
        .map(|slot| {
            if slot.done {
                return Ok(None);
            }
            let mut transitions = Vec::with_capacity(nstep);
            for _ in 0..nstep {
                let tokens = slot.tokens.clone();
                let decision = policy
                    .act(&tokens, ActionMode::Sample, &mut slot.rng)
                    .map_err(|e| task_fault(tasks, slot.task_index, &e))?;
                let outcome = slot
                    .env
                    .step_with(ActionSource::Raw(&decision.rows))
                    .map_err(|e| task_fault(tasks, slot.task_index, &e))?;
                debug_assert!(outcome.reward >= 0.0 && decision.log_prob.is_finite());
                slot.episode_return += outcome.reward;
                transitions.push(Transition {
                    tokens,
                    action: decision.actions,
                    log_prob: decision.log_prob,
                    value: decision.value,
                    reward: outcome.reward,
                    done: outcome.done,
                    next_tokens: outcome.tokens.clone(),
                });
                slot.tokens = outcome.tokens;
                if outcome.done {
                    slot.done = true;
                    break;
                }
            }
            let bootstrap = if slot.done {
                0.0
            } else {
                policy
                    .act(&slot.tokens, ActionMode::Mean, &mut slot.rng)
                    .map_err(|e| task_fault(tasks, slot.task_index, &e))?
                    .value
            };
            Ok(Some(TaskWindow {
                task_index: slot.task_index,
                transitions,
                bootstrap,
            }))
        })
        .collect();
    let mut out = Vec::new();
    for w in windows {
        if let Some(w) = w? {
            if !w.transitions.is_empty() {
                out.push(w);
            }
        }
    }
    Ok(out)
}

fn task_fault(tasks: &[Task], index: usize, e: &CoreError) -> CoreError {
    CoreError::InvalidArgument(format!("task {} ({}): {e}", index, tasks[index].label()))
}

/// Final best-so-far objective of an episode normalized to [0,1], reported
/// as performance (1 = reached the optimum, 0 = no progress).
fn final_normalized_perf(env: &Env<'_>) -> f64 {
    let s = env.state();
    let f_star = env.instance().f_star();
    let den = s.f_best_0 - f_star;
    if den > 0.0 && den.is_finite() {
        let g = ((s.f_best - f_star) / den).clamp(0.0, 1.0);
        1.0 - g
    } else {
        1.0
    }
}

/// Where the trainer reads and writes its artifacts.
pub struct TrainSession<'r> {
    pub registry: &'r Registry,
    pub arch: PolicyArch,
    pub out_dir: PathBuf,
    /// File-name prefix: `train` for fresh runs, `finetune` for runs seeded
    /// from a checkpoint.
    pub label: String,
}

/// Result of a completed (or resumed-and-completed) run.
pub struct TrainOutcome {
    pub policy: Policy,
    pub rows: Vec<LogRow>,
    pub checkpoint: PathBuf,
    pub log_path: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct TrainerState {
    epoch: usize,
    updates: usize,
    adam: Adam,
    rows: Vec<LogRow>,
}

impl<'r> TrainSession<'r> {
    fn path(&self, suffix: &str) -> PathBuf {
        self.out_dir.join(format!("{}-{suffix}", self.label))
    }

    pub fn latest_checkpoint_path(&self) -> PathBuf {
        self.path("latest.json")
    }

    pub fn log_path(&self) -> PathBuf {
        self.path("log.csv")
    }

    fn state_path(&self) -> PathBuf {
        self.path("state.json")
    }

    /// Fresh training run (resuming from this session's own latest
    /// checkpoint when `resume` is set and one exists).
    pub fn train(
        &self,
        tasks: &[Task],
        cfg: &TrainConfig,
        resume: bool,
        mut on_epoch: impl FnMut(&Policy, &LogRow),
    ) -> Result<TrainOutcome, CoreError> {
        let policy = Policy::new(self.arch.clone(), cfg.seed);
        self.run(policy, None, tasks, cfg, resume, &mut on_epoch)
    }

    /// Continue from a checkpoint whose architecture must match.
    pub fn finetune(
        &self,
        checkpoint: &Path,
        tasks: &[Task],
        cfg: &TrainConfig,
        mut on_epoch: impl FnMut(&Policy, &LogRow),
    ) -> Result<TrainOutcome, CoreError> {
        let (policy, step) = Policy::load_expecting(checkpoint, &self.arch)?;
        self.run(policy, Some(step), tasks, cfg, false, &mut on_epoch)
    }

    fn run(
        &self,
        mut policy: Policy,
        _source_step: Option<u64>,
        tasks: &[Task],
        cfg: &TrainConfig,
        resume: bool,
        on_epoch: &mut dyn FnMut(&Policy, &LogRow),
    ) -> Result<TrainOutcome, CoreError> {
        cfg.validate()?;
        if tasks.is_empty() {
            return Err(CoreError::InvalidArgument("empty task set".into()));
        }
        std::fs::create_dir_all(&self.out_dir)?;

        let mut adam = Adam::new(cfg.lr, policy.tensors());
        let mut rows: Vec<LogRow> = Vec::new();
        let mut updates = 0usize;
        let mut start_epoch = 1usize;

        if resume && self.latest_checkpoint_path().exists() && self.state_path().exists() {
            let (restored, _) = Policy::load_expecting(&self.latest_checkpoint_path(), &self.arch)?;
            policy = restored;
            let state: TrainerState =
                serde_json::from_slice(&std::fs::read(self.state_path())?)?;
            adam = state.adam;
            rows = state.rows;
            updates = state.updates;
            start_epoch = state.epoch + 1;
        }

        let windows_per_episode = cfg.horizon.div_ceil(cfg.nstep);
        for epoch in start_epoch..=cfg.epochs {
            let mut epoch_stats = LossStats::default();
            let mut update_rounds = 0usize;
            let mut returns = Vec::with_capacity(tasks.len());
            let mut perfs = Vec::with_capacity(tasks.len());

            for (chunk_id, chunk) in tasks.chunks(cfg.batch_size).enumerate() {
                let base = chunk_id * cfg.batch_size;
                let mut slots = Vec::with_capacity(chunk.len());
                for (offset, task) in chunk.iter().enumerate() {
                    let task_index = base + offset;
                    let mut seeder =
                        stream(cfg.seed, "env-seed", &[epoch as u64, task_index as u64]);
                    let instance = task
                        .problem
                        .build()
                        .map_err(|e| task_fault(tasks, task_index, &e))?;
                    let params = EnvParams {
                        horizon: cfg.horizon,
                        seed: seeder.random(),
                        ..EnvParams::default()
                    };
                    let env = Env::new(self.registry, task.structure.clone(), instance, params)
                        .map_err(|e| task_fault(tasks, task_index, &e))?;
                    let tokens = env.tokens();
                    let rng = stream(cfg.seed, "collect", &[epoch as u64, task_index as u64]);
                    slots.push(TaskSlot {
                        task_index,
                        env,
                        rng,
                        tokens,
                        done: false,
                        episode_return: 0.0,
                    });
                }

                for _window in 0..windows_per_episode {
                    if slots.iter().all(|s| s.done) {
                        break;
                    }
                    let windows = rollout_window(&policy, &mut slots, cfg.nstep, tasks)?;
                    if windows.is_empty() {
                        break;
                    }
                    let items = prepare_batch(&windows, cfg.gamma, cfg.gae_lambda);
                    let stats = ppo_update(&mut policy, &mut adam, &items, cfg)?;
                    epoch_stats.policy += stats.policy * stats.passes as f64;
                    epoch_stats.value += stats.value * stats.passes as f64;
                    epoch_stats.entropy += stats.entropy * stats.passes as f64;
                    epoch_stats.passes += stats.passes;
                    updates += stats.passes;
                    update_rounds += 1;
                }
                let _ = update_rounds;

                for slot in &slots {
                    returns.push(slot.episode_return);
                    perfs.push(final_normalized_perf(&slot.env));
                }
            }

            let n = returns.len() as f64;
            let row = LogRow {
                epoch,
                mean_return: returns.iter().sum::<f64>() / n,
                mean_final_perf: perfs.iter().sum::<f64>() / n,
                policy_loss: epoch_stats.policy / (epoch_stats.passes.max(1)) as f64,
                value_loss: epoch_stats.value / (epoch_stats.passes.max(1)) as f64,
                entropy: epoch_stats.entropy / (epoch_stats.passes.max(1)) as f64,
                updates,
            };
            rows.push(row.clone());

            policy.save(&self.path(&format!("epoch-{epoch:03}.json")), epoch as u64)?;
            policy.save(&self.latest_checkpoint_path(), epoch as u64)?;
            let state = TrainerState {
                epoch,
                updates,
                adam: adam.clone(),
                rows: rows.clone(),
            };
            std::fs::write(self.state_path(), serde_json::to_vec(&state)?)?;
            self.write_log(&rows)?;
            on_epoch(&policy, &row);
        }

        if rows.is_empty() {
            // Zero-epoch runs still leave a loadable checkpoint so a
            // fine-tune with no training is an identity operation.
            policy.save(&self.latest_checkpoint_path(), 0)?;
            self.write_log(&rows)?;
        }

        Ok(TrainOutcome {
            policy,
            rows,
            checkpoint: self.latest_checkpoint_path(),
            log_path: self.log_path(),
        })
    }

    fn write_log(&self, rows: &[LogRow]) -> Result<(), CoreError> {
        let mut out = String::from(LogRow::CSV_HEADER);
        out.push('\n');
        for r in rows {
            out.push_str(&r.to_csv());
            out.push('\n');
        }
        let mut f = std::fs::File::create(self.log_path())?;
        f.write_all(out.as_bytes())?;
        Ok(())
    }
}
