//! Transformer configuration policy.
//!
//! Token sequences describing an algorithm's sub-modules are fused into
//! 64-wide embeddings, mixed by a three-block pre-residual attention stack,
//! and decoded into a diagonal-Gaussian distribution over raw configuration
//! actions plus an averaged state-value estimate.  Everything runs on the
//! [`crate::tensor`] tape so PPO losses differentiate end to end.

use std::collections::BTreeMap;
use std::path::Path;

use modea_core::env::StateTokenSeq;
use modea_core::error::CoreError;
use modea_core::rng::{stream, Stream};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::tensor::{Gradients, Tape, Tensor, Var};

/// Hidden width of every stage of the network.
pub const D_MODEL: usize = 64;
/// Width of the per-source embeddings before fusion.
pub const D_EMB: usize = 16;
/// Bits in a module identifier token.
pub const ID_BITS: usize = 16;
/// Optimization-state features per token.
pub const N_FEATURES: usize = 9;
/// Attention/feed-forward block count.
pub const N_BLOCKS: usize = 3;
/// Hidden width of the critic head.
pub const CRITIC_HIDDEN: usize = 16;
/// Bounds on decoded standard deviations.
pub const SIGMA_MIN: f64 = 0.01;
pub const SIGMA_MAX: f64 = 1.0;

const LN_EPS: f64 = 1e-5;
const LN_2PI: f64 = 1.837_877_066_409_345_3;
const MASKED_LOGIT: f64 = -1e30;

/// Pre-activation shift that makes the σ head emit exactly 0.3 at zero:
/// `softplus(ln(e^0.3 − 1)) = 0.3`.
fn sigma_shift() -> f64 {
    (0.3f64.exp() - 1.0).ln()
}

/// How token positions are encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PositionalMode {
    /// Fixed sinusoidal table (default).
    Sinusoidal,
    /// Trainable table initialized from the sinusoidal values.
    Learned,
    /// No positional information.
    Absent,
}

/// Token-mixing sublayer variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MixerMode {
    /// Multi-head self-attention (default).
    MultiHead,
    /// Per-token dense map of equal width; no cross-token mixing.
    MlpOnly,
}

/// Denominator convention for the averaged critic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CriticAveraging {
    /// Divide the masked sum by the full padded length (default).
    FullLength,
    /// Divide by the number of active tokens.
    ActiveOnly,
}

/// Structural hyper-parameters; the parameter count is a pure function of
/// this record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyArch {
    pub l_max: usize,
    pub c_max: usize,
    pub n_heads: usize,
    pub positional: PositionalMode,
    pub mixer: MixerMode,
    pub critic: CriticAveraging,
}

impl Default for PolicyArch {
    fn default() -> PolicyArch {
        PolicyArch {
            l_max: 16,
            c_max: 5,
            n_heads: 4,
            positional: PositionalMode::Sinusoidal,
            mixer: MixerMode::MultiHead,
            critic: CriticAveraging::FullLength,
        }
    }
}

impl PolicyArch {
    /// Compact architecture fingerprint stored in checkpoints; loading
    /// rejects files whose fingerprint disagrees.
    pub fn fingerprint(&self) -> String {
        format!(
            "L{}-C{}-H{}-{:?}-{:?}-{:?}",
            self.l_max, self.c_max, self.n_heads, self.positional, self.mixer, self.critic
        )
    }
}

/// Named parameter tensors plus the fixed positional table.
#[derive(Clone)]
pub struct Policy {
    arch: PolicyArch,
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: BTreeMap<String, usize>,
    sin_table: Tensor,
}

/// Tape handles for one binding of the parameters.
pub struct Binding {
    vars: Vec<Var>,
}

impl Binding {
    pub fn var_of(&self, policy: &Policy, name: &str) -> Option<Var> {
        policy.index.get(name).map(|&i| self.vars[i])
    }
}

/// Differentiable outputs of one forward pass.
pub struct Forward {
    /// Action means, `l_max × c_max`.
    pub mu: Var,
    /// Action standard deviations in `[SIGMA_MIN, SIGMA_MAX]`.
    pub sigma: Var,
    /// Averaged state value, 1×1.
    pub value: Var,
    /// Final hidden states, `l_max × D_MODEL`; masked rows are zero.
    pub hidden: Var,
    /// Attention matrices per (block, head); empty under [`MixerMode::MlpOnly`].
    pub attention: Vec<Var>,
    /// 1.0 on rows that are both active and controllable.
    pub action_mask: Vec<f64>,
    /// Number of Gaussian dimensions the distribution covers.
    pub n_action_dims: usize,
    /// Number of active tokens.
    pub n_active: usize,
}

/// Whether to draw from the action distribution or return its mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    Sample,
    Mean,
}

/// Concrete action emitted during rollout or evaluation.
#[derive(Debug, Clone)]
pub struct Decision {
    /// Raw actions, `l_max × c_max`; rows of inactive or uncontrollable
    /// tokens hold the mean.
    pub actions: Tensor,
    /// One row per active controllable token, in token order — the shape the
    /// environment consumes.
    pub rows: Vec<Vec<f64>>,
    pub log_prob: f64,
    pub entropy: f64,
    pub value: f64,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    fingerprint: String,
    arch: PolicyArch,
    step: u64,
    params: Vec<(String, Tensor)>,
}

impl Policy {
    /// Fresh policy with seeded initialization: near-orthogonal dense maps,
    /// zero biases, output heads scaled by 0.01, μ bias at the raw-action
    /// midpoint 0.5.
    pub fn new(arch: PolicyArch, seed: u64) -> Policy {
        assert!(arch.l_max >= 1 && arch.c_max >= 1);
        assert!(
            D_MODEL % arch.n_heads == 0,
            "head count must divide the model width"
        );
        let mut rng = stream(seed, "policy-init", &[]);
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        let dense = |names: &mut Vec<String>,
                         tensors: &mut Vec<Tensor>,
                         name: &str,
                         rows: usize,
                         cols: usize,
                         gain: f64,
                         rng: &mut Stream| {
            names.push(name.to_string());
            let mut w = orthogonalish(rows, cols, rng);
            w.data.iter_mut().for_each(|v| *v *= gain);
            tensors.push(w);
        };
        let fill = |names: &mut Vec<String>,
                        tensors: &mut Vec<Tensor>,
                        name: &str,
                        rows: usize,
                        cols: usize,
                        v: f64| {
            names.push(name.to_string());
            tensors.push(Tensor::from_fn(rows, cols, |_, _| v));
        };

        dense(&mut names, &mut tensors, "embed.id.w", ID_BITS, D_EMB, 1.0, &mut rng);
        fill(&mut names, &mut tensors, "embed.id.b", 1, D_EMB, 0.0);
        dense(&mut names, &mut tensors, "embed.opt.w", N_FEATURES, D_EMB, 1.0, &mut rng);
        fill(&mut names, &mut tensors, "embed.opt.b", 1, D_EMB, 0.0);
        dense(&mut names, &mut tensors, "embed.fuse.w", 2 * D_EMB, D_MODEL, 1.0, &mut rng);
        fill(&mut names, &mut tensors, "embed.fuse.b", 1, D_MODEL, 0.0);

        let sin_table = sinusoidal_table(arch.l_max, D_MODEL);
        if arch.positional == PositionalMode::Learned {
            names.push("pe.table".to_string());
            tensors.push(sin_table.clone());
        }

        for l in 0..N_BLOCKS {
            match arch.mixer {
                MixerMode::MultiHead => {
                    for part in ["wq", "wk", "wv", "wo"] {
                        dense(
                            &mut names,
                            &mut tensors,
                            &format!("block{l}.attn.{part}"),
                            D_MODEL,
                            D_MODEL,
                            1.0,
                            &mut rng,
                        );
                    }
                    for part in ["bq", "bk", "bv", "bo"] {
                        fill(
                            &mut names,
                            &mut tensors,
                            &format!("block{l}.attn.{part}"),
                            1,
                            D_MODEL,
                            0.0,
                        );
                    }
                }
                MixerMode::MlpOnly => {
                    dense(
                        &mut names,
                        &mut tensors,
                        &format!("block{l}.mixer.w"),
                        D_MODEL,
                        D_MODEL,
                        1.0,
                        &mut rng,
                    );
                    fill(
                        &mut names,
                        &mut tensors,
                        &format!("block{l}.mixer.b"),
                        1,
                        D_MODEL,
                        0.0,
                    );
                }
            }
            fill(&mut names, &mut tensors, &format!("block{l}.ln1.gain"), 1, D_MODEL, 1.0);
            fill(&mut names, &mut tensors, &format!("block{l}.ln1.bias"), 1, D_MODEL, 0.0);
            dense(
                &mut names,
                &mut tensors,
                &format!("block{l}.ff.w"),
                D_MODEL,
                D_MODEL,
                1.0,
                &mut rng,
            );
            fill(&mut names, &mut tensors, &format!("block{l}.ff.b"), 1, D_MODEL, 0.0);
            fill(&mut names, &mut tensors, &format!("block{l}.ln2.gain"), 1, D_MODEL, 1.0);
            fill(&mut names, &mut tensors, &format!("block{l}.ln2.bias"), 1, D_MODEL, 0.0);
        }

        dense(&mut names, &mut tensors, "head.mu.w", D_MODEL, arch.c_max, 0.01, &mut rng);
        fill(&mut names, &mut tensors, "head.mu.b", 1, arch.c_max, 0.5);
        dense(&mut names, &mut tensors, "head.sigma.w", D_MODEL, arch.c_max, 0.01, &mut rng);
        fill(&mut names, &mut tensors, "head.sigma.b", 1, arch.c_max, 0.0);
        dense(&mut names, &mut tensors, "critic.w1", D_MODEL, CRITIC_HIDDEN, 1.0, &mut rng);
        fill(&mut names, &mut tensors, "critic.b1", 1, CRITIC_HIDDEN, 0.0);
        dense(&mut names, &mut tensors, "critic.w2", CRITIC_HIDDEN, 1, 0.01, &mut rng);
        fill(&mut names, &mut tensors, "critic.b2", 1, 1, 0.0);

        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Policy {
            arch,
            names,
            tensors,
            index,
            sin_table,
        }
    }

    pub fn arch(&self) -> &PolicyArch {
        &self.arch
    }

    /// Total number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let i = *self.index.get(name)?;
        Some(&mut self.tensors[i])
    }

    /// Parameter tensors in declaration order (the optimizer's view).
    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// Register every parameter as a trainable leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> Binding {
        Binding {
            vars: self.tensors.iter().map(|t| tape.leaf(t.clone())).collect(),
        }
    }

    /// Gradients for every parameter in declaration order; errors with the
    /// offending name if any gradient is non-finite.
    pub fn collect_grads(
        &self,
        tape: &Tape,
        binding: &Binding,
        grads: &Gradients,
    ) -> Result<Vec<Tensor>, CoreError> {
        let mut out = Vec::with_capacity(self.names.len());
        for (name, &var) in self.names.iter().zip(&binding.vars) {
            let g = grads.wrt(tape, var);
            if !g.is_finite() {
                return Err(CoreError::InvalidArgument(format!(
                    "non-finite gradient for parameter {name}"
                )));
            }
            out.push(g);
        }
        Ok(out)
    }

    /// Token inputs compacted to `l_max` rows.  Errors if an active token
    /// sits beyond `l_max` or no token is active.
    fn layout(&self, tokens: &StateTokenSeq) -> Result<TokenLayout, CoreError> {
        let l = self.arch.l_max;
        for (j, &m) in tokens.mask.iter().enumerate() {
            if j >= l && m != 0.0 {
                return Err(CoreError::InvalidArgument(format!(
                    "token sequence has an active entry at position {j}, beyond capacity {l}"
                )));
            }
        }
        let mut id = Tensor::zeros(l, ID_BITS);
        let mut opt = Tensor::zeros(l, N_FEATURES);
        let mut mask = vec![0.0; l];
        let mut action_mask = vec![0.0; l];
        for j in 0..l.min(tokens.mask.len()) {
            if tokens.mask[j] == 0.0 {
                continue;
            }
            mask[j] = 1.0;
            for b in 0..ID_BITS {
                id.set(j, b, tokens.id_bits[j][b]);
            }
            for f in 0..N_FEATURES {
                opt.set(j, f, tokens.opt[j][f]);
            }
            if tokens.controllable[j] {
                action_mask[j] = 1.0;
            }
        }
        let n_active = mask.iter().filter(|&&m| m == 1.0).count();
        if n_active == 0 {
            return Err(CoreError::InvalidArgument(
                "token sequence has no active entries".into(),
            ));
        }
        Ok(TokenLayout {
            id,
            opt,
            mask,
            action_mask,
            n_active,
        })
    }

    /// Pre-positional fused embedding, `l_max × D_MODEL` (test hook).
    pub fn embed_only(&self, tokens: &StateTokenSeq) -> Result<Tensor, CoreError> {
        let layout = self.layout(tokens)?;
        let mut tape = Tape::new();
        let binding = self.bind(&mut tape);
        let e = self.embed(&mut tape, &binding, &layout);
        Ok(tape.value(e).clone())
    }

    /// Post-positional encoder input `h⁰` (test hook).
    pub fn encoded(&self, tokens: &StateTokenSeq) -> Result<Tensor, CoreError> {
        let layout = self.layout(tokens)?;
        let mut tape = Tape::new();
        let binding = self.bind(&mut tape);
        let e = self.embed(&mut tape, &binding, &layout);
        let h0 = self.add_positional(&mut tape, &binding, e, &layout);
        Ok(tape.value(h0).clone())
    }

    fn embed(&self, tape: &mut Tape, b: &Binding, layout: &TokenLayout) -> Var {
        let id = tape.constant(layout.id.clone());
        let opt = tape.constant(layout.opt.clone());
        let id_lin = tape.matmul(id, self.var(b, "embed.id.w"));
        let id_lin = tape.add_row(id_lin, self.var(b, "embed.id.b"));
        let id_emb = tape.tanh(id_lin);
        let opt_lin = tape.matmul(opt, self.var(b, "embed.opt.w"));
        let opt_lin = tape.add_row(opt_lin, self.var(b, "embed.opt.b"));
        let opt_emb = tape.tanh(opt_lin);
        let cat = tape.hstack(id_emb, opt_emb);
        let fused = tape.matmul(cat, self.var(b, "embed.fuse.w"));
        let fused = tape.add_row(fused, self.var(b, "embed.fuse.b"));
        let fused = tape.tanh(fused);
        // Biases would otherwise leak into padded rows.
        let row_mask = tape.constant(row_mask_matrix(&layout.mask, D_MODEL));
        tape.mul(fused, row_mask)
    }

    fn add_positional(&self, tape: &mut Tape, b: &Binding, e: Var, layout: &TokenLayout) -> Var {
        let summed = match self.arch.positional {
            PositionalMode::Absent => return e,
            PositionalMode::Sinusoidal => {
                let pe = tape.constant(self.sin_table.clone());
                tape.add(e, pe)
            }
            PositionalMode::Learned => {
                let pe = self.var(b, "pe.table");
                tape.add(e, pe)
            }
        };
        let row_mask = tape.constant(row_mask_matrix(&layout.mask, D_MODEL));
        tape.mul(summed, row_mask)
    }

    fn var(&self, b: &Binding, name: &str) -> Var {
        b.vars[*self.index.get(name).unwrap_or_else(|| panic!("unknown parameter {name}"))]
    }

    /// Full differentiable forward pass for one token sequence.
    pub fn forward(
        &self,
        tape: &mut Tape,
        binding: &Binding,
        tokens: &StateTokenSeq,
    ) -> Result<Forward, CoreError> {
        let layout = self.layout(tokens)?;
        let l = self.arch.l_max;
        let e = self.embed(tape, binding, &layout);
        let mut h = self.add_positional(tape, binding, e, &layout);

        let row_mask = tape.constant(row_mask_matrix(&layout.mask, D_MODEL));
        let attn_bias = tape.constant(attention_bias(&layout.mask));
        let head_dim = D_MODEL / self.arch.n_heads;
        let mut attention = Vec::new();

        for l_idx in 0..N_BLOCKS {
            let mixed = match self.arch.mixer {
                MixerMode::MultiHead => {
                    let q = tape.matmul(h, self.var(binding, &format!("block{l_idx}.attn.wq")));
                    let q = tape.add_row(q, self.var(binding, &format!("block{l_idx}.attn.bq")));
                    let k = tape.matmul(h, self.var(binding, &format!("block{l_idx}.attn.wk")));
                    let k = tape.add_row(k, self.var(binding, &format!("block{l_idx}.attn.bk")));
                    let v = tape.matmul(h, self.var(binding, &format!("block{l_idx}.attn.wv")));
                    let v = tape.add_row(v, self.var(binding, &format!("block{l_idx}.attn.bv")));
                    let mut heads: Option<Var> = None;
                    for hd in 0..self.arch.n_heads {
                        let (from, to) = (hd * head_dim, (hd + 1) * head_dim);
                        let qh = tape.slice_cols(q, from, to);
                        let kh = tape.slice_cols(k, from, to);
                        let vh = tape.slice_cols(v, from, to);
                        let kt = tape.transpose(kh);
                        let logits = tape.matmul(qh, kt);
                        let logits = tape.scale(logits, 1.0 / (head_dim as f64).sqrt());
                        let logits = tape.add(logits, attn_bias);
                        let weights = tape.row_softmax(logits);
                        attention.push(weights);
                        let out = tape.matmul(weights, vh);
                        heads = Some(match heads {
                            None => out,
                            Some(acc) => tape.hstack(acc, out),
                        });
                    }
                    let cat = heads.expect("at least one head");
                    let o = tape.matmul(cat, self.var(binding, &format!("block{l_idx}.attn.wo")));
                    tape.add_row(o, self.var(binding, &format!("block{l_idx}.attn.bo")))
                }
                MixerMode::MlpOnly => {
                    let m = tape.matmul(h, self.var(binding, &format!("block{l_idx}.mixer.w")));
                    let m = tape.add_row(m, self.var(binding, &format!("block{l_idx}.mixer.b")));
                    tape.tanh(m)
                }
            };
            let res = tape.add(mixed, h);
            let normed = tape.layer_norm(res, LN_EPS);
            let normed = tape.mul_row(normed, self.var(binding, &format!("block{l_idx}.ln1.gain")));
            let h_hat = tape.add_row(normed, self.var(binding, &format!("block{l_idx}.ln1.bias")));

            let ff = tape.matmul(h_hat, self.var(binding, &format!("block{l_idx}.ff.w")));
            let ff = tape.add_row(ff, self.var(binding, &format!("block{l_idx}.ff.b")));
            let ff = tape.tanh(ff);
            let ff_normed = tape.layer_norm(ff, LN_EPS);
            let ff_normed =
                tape.mul_row(ff_normed, self.var(binding, &format!("block{l_idx}.ln2.gain")));
            let ff_normed =
                tape.add_row(ff_normed, self.var(binding, &format!("block{l_idx}.ln2.bias")));
            let out = tape.add(ff_normed, h_hat);
            h = tape.mul(out, row_mask);
        }

        let mu = tape.matmul(h, self.var(binding, "head.mu.w"));
        let mu = tape.add_row(mu, self.var(binding, "head.mu.b"));
        let sig_lin = tape.matmul(h, self.var(binding, "head.sigma.w"));
        let sig_lin = tape.add_row(sig_lin, self.var(binding, "head.sigma.b"));
        let sig_shifted = tape.add_const(sig_lin, sigma_shift());
        let sig_soft = tape.softplus(sig_shifted);
        let sigma = tape.clamp(sig_soft, SIGMA_MIN, SIGMA_MAX);

        let c1 = tape.matmul(h, self.var(binding, "critic.w1"));
        let c1 = tape.add_row(c1, self.var(binding, "critic.b1"));
        let c1 = tape.tanh(c1);
        let v_tok = tape.matmul(c1, self.var(binding, "critic.w2"));
        let v_tok = tape.add_row(v_tok, self.var(binding, "critic.b2"));
        let mask_col = tape.constant(Tensor::from_fn(l, 1, |i, _| layout.mask[i]));
        let v_masked = tape.mul(v_tok, mask_col);
        let v_sum = tape.sum_all(v_masked);
        let denom = match self.arch.critic {
            CriticAveraging::FullLength => l as f64,
            CriticAveraging::ActiveOnly => layout.n_active as f64,
        };
        let value = tape.scale(v_sum, 1.0 / denom);

        let n_action_dims =
            layout.action_mask.iter().filter(|&&m| m == 1.0).count() * self.arch.c_max;
        Ok(Forward {
            mu,
            sigma,
            value,
            hidden: h,
            attention,
            action_mask: layout.action_mask,
            n_action_dims,
            n_active: layout.n_active,
        })
    }

    /// Log-density of `actions` under the forward pass's diagonal Gaussian,
    /// summed over active controllable dimensions only.
    pub fn log_prob(&self, tape: &mut Tape, fwd: &Forward, actions: &Tensor) -> Var {
        let a = tape.constant(actions.clone());
        let diff = tape.sub(a, fwd.mu);
        let z = tape.div(diff, fwd.sigma);
        let z2 = tape.mul(z, z);
        let ln_sig = tape.ln(fwd.sigma);
        let half_z2 = tape.scale(z2, -0.5);
        let neg_ln_sig = tape.scale(ln_sig, -1.0);
        let s = tape.add(half_z2, neg_ln_sig);
        let s = tape.add_const(s, -0.5 * LN_2PI);
        let masked = self.mask_action_entries(tape, fwd, s);
        tape.sum_all(masked)
    }

    /// Differential entropy of the action distribution over the same
    /// dimensions as [`Policy::log_prob`].
    pub fn entropy(&self, tape: &mut Tape, fwd: &Forward) -> Var {
        let ln_sig = tape.ln(fwd.sigma);
        let per_dim = tape.add_const(ln_sig, 0.5 * (1.0 + LN_2PI));
        let masked = self.mask_action_entries(tape, fwd, per_dim);
        tape.sum_all(masked)
    }

    fn mask_action_entries(&self, tape: &mut Tape, fwd: &Forward, x: Var) -> Var {
        let m = tape.constant(row_mask_matrix(&fwd.action_mask, self.arch.c_max));
        tape.mul(x, m)
    }

    /// Sample or take the mean action for one observation.
    pub fn act(
        &self,
        tokens: &StateTokenSeq,
        mode: ActionMode,
        rng: &mut Stream,
    ) -> Result<Decision, CoreError> {
        let mut tape = Tape::new();
        let binding = self.bind(&mut tape);
        let fwd = self.forward(&mut tape, &binding, tokens)?;
        let mu = tape.value(fwd.mu).clone();
        let sigma = tape.value(fwd.sigma).clone();
        let value = tape.value(fwd.value).data[0];

        let mut actions = mu.clone();
        if mode == ActionMode::Sample {
            for i in 0..actions.rows {
                if fwd.action_mask[i] != 1.0 {
                    continue;
                }
                for j in 0..actions.cols {
                    let z: f64 = rng.sample(StandardNormal);
                    let v = mu.get(i, j) + sigma.get(i, j) * z;
                    actions.set(i, j, v);
                }
            }
        }

        let mut log_prob = 0.0;
        let mut entropy = 0.0;
        let mut rows = Vec::new();
        for i in 0..actions.rows {
            if fwd.action_mask[i] != 1.0 {
                continue;
            }
            let mut row = Vec::with_capacity(actions.cols);
            for j in 0..actions.cols {
                let (m, s, a) = (mu.get(i, j), sigma.get(i, j), actions.get(i, j));
                let z = (a - m) / s;
                log_prob += -0.5 * z * z - s.ln() - 0.5 * LN_2PI;
                entropy += 0.5 * (1.0 + LN_2PI) + s.ln();
                row.push(a);
            }
            rows.push(row);
        }

        Ok(Decision {
            actions,
            rows,
            log_prob,
            entropy,
            value,
        })
    }

    /// Write a checkpoint with the given training step.
    pub fn save(&self, path: &Path, step: u64) -> Result<(), CoreError> {
        let file = CheckpointFile {
            fingerprint: self.arch.fingerprint(),
            arch: self.arch.clone(),
            step,
            params: self
                .names
                .iter()
                .cloned()
                .zip(self.tensors.iter().cloned())
                .collect(),
        };
        let json = serde_json::to_vec(&file)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    /// Read a checkpoint, returning the policy and its training step.
    pub fn load(path: &Path) -> Result<(Policy, u64), CoreError> {
        let bytes = std::fs::read(path)?;
        let file: CheckpointFile = serde_json::from_slice(&bytes)?;
        if file.fingerprint != file.arch.fingerprint() {
            return Err(CoreError::InvalidArgument(format!(
                "checkpoint fingerprint {} does not match its own architecture {}",
                file.fingerprint,
                file.arch.fingerprint()
            )));
        }
        let mut policy = Policy::new(file.arch.clone(), 0);
        if file.params.len() != policy.names.len() {
            return Err(CoreError::InvalidArgument(format!(
                "checkpoint holds {} tensors, architecture needs {}",
                file.params.len(),
                policy.names.len()
            )));
        }
        for (name, tensor) in file.params {
            let Some(slot) = policy.param_mut(&name) else {
                return Err(CoreError::InvalidArgument(format!(
                    "checkpoint tensor {name} is not part of the architecture"
                )));
            };
            if slot.rows != tensor.rows || slot.cols != tensor.cols {
                return Err(CoreError::InvalidArgument(format!(
                    "checkpoint tensor {name} has shape {}×{}, expected {}×{}",
                    tensor.rows, tensor.cols, slot.rows, slot.cols
                )));
            }
            *slot = tensor;
        }
        Ok((policy, file.step))
    }

    /// Load a checkpoint and insist it matches `expected`.
    pub fn load_expecting(path: &Path, expected: &PolicyArch) -> Result<(Policy, u64), CoreError> {
        let (policy, step) = Policy::load(path)?;
        if policy.arch != *expected {
            return Err(CoreError::InvalidArgument(format!(
                "checkpoint architecture {} does not match expected {}",
                policy.arch.fingerprint(),
                expected.fingerprint()
            )));
        }
        Ok((policy, step))
    }
}

struct TokenLayout {
    id: Tensor,
    opt: Tensor,
    mask: Vec<f64>,
    action_mask: Vec<f64>,
    n_active: usize,
}

/// `rows(mask) × width` matrix whose row i is all `mask[i]`.
fn row_mask_matrix(mask: &[f64], width: usize) -> Tensor {
    Tensor::from_fn(mask.len(), width, |i, _| mask[i])
}

/// Additive attention bias: 0 toward active keys, a large negative constant
/// toward padded keys.
fn attention_bias(mask: &[f64]) -> Tensor {
    let l = mask.len();
    Tensor::from_fn(l, l, |_, j| if mask[j] == 1.0 { 0.0 } else { MASKED_LOGIT })
}

/// Interleaved sine/cosine positional table; row 0 is `[0, 1, 0, 1, …]`.
pub fn sinusoidal_table(l_max: usize, width: usize) -> Tensor {
    Tensor::from_fn(l_max, width, |pos, j| {
        let pair = (j / 2) as f64;
        let angle = pos as f64 / 10_000f64.powf(2.0 * pair / width as f64);
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// Random matrix with orthonormal rows or columns (whichever side is
/// shorter), giving unit-gain linear maps.
fn orthogonalish(rows: usize, cols: usize, rng: &mut Stream) -> Tensor {
    let transpose = rows < cols;
    let (n, k) = if transpose { (cols, rows) } else { (rows, cols) };
    // n ≥ k: build k orthonormal columns in R^n.
    let mut cols_v: Vec<Vec<f64>> = Vec::with_capacity(k);
    for _ in 0..k {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for prev in &cols_v {
            let dot: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
            for (vi, pi) in v.iter_mut().zip(prev) {
                *vi -= dot * pi;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-9 {
            // Degenerate draw; fall back to a unit basis vector.
            v = vec![0.0; n];
            v[cols_v.len() % n] = 1.0;
        } else {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        cols_v.push(v);
    }
    if transpose {
        Tensor::from_fn(rows, cols, |i, j| cols_v[i][j])
    } else {
        Tensor::from_fn(rows, cols, |i, j| cols_v[j][i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use modea_core::registry::{Category, ModuleId};

    fn toy_arch() -> PolicyArch {
        PolicyArch {
            l_max: 4,
            c_max: 3,
            ..PolicyArch::default()
        }
    }

    /// Token sequence with `n` active rows (first `n_ctrl` controllable).
    fn tokens(n: usize, n_ctrl: usize, pad_to: usize) -> StateTokenSeq {
        let mut seq = StateTokenSeq {
            id_bits: Vec::new(),
            opt: Vec::new(),
            mask: Vec::new(),
            controllable: Vec::new(),
            module_ids: Vec::new(),
        };
        for j in 0..pad_to {
            let active = j < n;
            let mut bits = [0.0; 16];
            for (b, slot) in bits.iter_mut().enumerate() {
                *slot = f64::from((j + b) as u32 % 2);
            }
            seq.id_bits.push(if active { bits } else { [0.0; 16] });
            let mut opt = [0.0; 9];
            for (f, slot) in opt.iter_mut().enumerate() {
                *slot = if active { 0.1 * (j + f + 1) as f64 } else { 0.0 };
            }
            seq.opt.push(if active { opt } else { [0.0; 9] });
            seq.mask.push(if active { 1.0 } else { 0.0 });
            seq.controllable.push(active && j < n_ctrl);
            if active {
                seq.module_ids.push(ModuleId::new(Category::Mutation, 1));
            }
        }
        seq
    }

    #[test]
    fn positional_table_row_zero_alternates_zero_one() {
        let pe = sinusoidal_table(16, 64);
        for j in 0..64 {
            let expect = if j % 2 == 0 { 0.0 } else { 1.0 };
            assert_eq!(pe.get(0, j), expect);
        }
    }

    #[test]
    fn parameter_count_is_a_pure_function_of_the_architecture() {
        let count = |arch: PolicyArch| Policy::new(arch, 9).param_count();
        let base = |c_max: usize| {
            let embed = 16 * 16 + 16 + 9 * 16 + 16 + 32 * 64 + 64;
            let attn = 4 * (64 * 64) + 4 * 64;
            let block = attn + 2 * 64 + (64 * 64 + 64) + 2 * 64;
            let heads = 2 * (64 * c_max + c_max);
            let critic = 64 * 16 + 16 + 16 + 1;
            embed + 3 * block + heads + critic
        };
        assert_eq!(count(PolicyArch::default()), base(5));
        assert_eq!(
            count(PolicyArch {
                positional: PositionalMode::Learned,
                ..PolicyArch::default()
            }),
            base(5) + 16 * 64
        );
        assert_eq!(
            count(PolicyArch {
                positional: PositionalMode::Absent,
                ..PolicyArch::default()
            }),
            base(5)
        );
        // The dense-map mixer swaps 4 projections for a single 64×64 map.
        let attn = 4 * (64 * 64) + 4 * 64;
        let mixer = 64 * 64 + 64;
        assert_eq!(
            count(PolicyArch {
                mixer: MixerMode::MlpOnly,
                ..PolicyArch::default()
            }),
            base(5) - 3 * (attn - mixer)
        );
        // Seeds change values, never the count.
        assert_eq!(
            Policy::new(PolicyArch::default(), 1).param_count(),
            Policy::new(PolicyArch::default(), 2).param_count()
        );
    }

    #[test]
    fn zero_inputs_embed_to_zero() {
        let policy = Policy::new(toy_arch(), 4);
        let mut seq = tokens(2, 2, 4);
        for row in &mut seq.id_bits {
            *row = [0.0; 16];
        }
        for row in &mut seq.opt {
            *row = [0.0; 9];
        }
        let emb = policy.embed_only(&seq).unwrap();
        assert!(emb.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_tokens_differ_exactly_by_their_positional_rows() {
        let policy = Policy::new(toy_arch(), 4);
        let mut seq = tokens(2, 2, 4);
        seq.id_bits[1] = seq.id_bits[0];
        seq.opt[1] = seq.opt[0];
        let pre = policy.embed_only(&seq).unwrap();
        for j in 0..64 {
            assert!((pre.get(0, j) - pre.get(1, j)).abs() < 1e-12);
        }
        let h0 = policy.encoded(&seq).unwrap();
        let pe = sinusoidal_table(4, 64);
        for j in 0..64 {
            let diff = h0.get(0, j) - h0.get(1, j);
            let expect = pe.get(0, j) - pe.get(1, j);
            assert!((diff - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn attention_rows_form_distributions_over_active_tokens() {
        let policy = Policy::new(toy_arch(), 7);
        let seq = tokens(3, 2, 4);
        let mut tape = Tape::new();
        let binding = policy.bind(&mut tape);
        let fwd = policy.forward(&mut tape, &binding, &seq).unwrap();
        assert_eq!(fwd.attention.len(), 3 * 4);
        for &w in &fwd.attention {
            let t = tape.value(w);
            for i in 0..t.rows {
                let sum: f64 = (0..t.cols).map(|j| t.get(i, j)).sum();
                assert!((sum - 1.0).abs() < 1e-9, "row {i} sums to {sum}");
                // Padded key (position 3) never receives weight.
                assert!(t.get(i, 3).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lone_token_attends_only_to_itself() {
        let policy = Policy::new(toy_arch(), 7);
        let seq = tokens(1, 1, 4);
        let mut tape = Tape::new();
        let binding = policy.bind(&mut tape);
        let fwd = policy.forward(&mut tape, &binding, &seq).unwrap();
        for &w in &fwd.attention {
            let t = tape.value(w);
            assert!((t.get(0, 0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn masked_positions_stay_zero_in_the_final_hidden_state() {
        let policy = Policy::new(PolicyArch::default(), 11);
        let seq = tokens(5, 3, 16);
        let mut tape = Tape::new();
        let binding = policy.bind(&mut tape);
        let fwd = policy.forward(&mut tape, &binding, &seq).unwrap();
        let h = tape.value(fwd.hidden);
        for i in 5..16 {
            for j in 0..64 {
                assert_eq!(h.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn sigma_stays_inside_its_bounds_and_rests_near_point_three() {
        let mut policy = Policy::new(toy_arch(), 3);
        let seq = tokens(3, 3, 4);
        let mut tape = Tape::new();
        let binding = policy.bind(&mut tape);
        let fwd = policy.forward(&mut tape, &binding, &seq).unwrap();
        for &v in &tape.value(fwd.sigma).data {
            assert!((SIGMA_MIN..=SIGMA_MAX).contains(&v));
        }
        // Zeroed σ head → exactly the resting scale.
        policy.param_mut("head.sigma.w").unwrap().data.fill(0.0);
        let mut tape = Tape::new();
        let binding = policy.bind(&mut tape);
        let fwd = policy.forward(&mut tape, &binding, &seq).unwrap();
        for &v in &tape.value(fwd.sigma).data {
            assert!((v - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_mode_returns_the_gaussian_mean_exactly() {
        let policy = Policy::new(toy_arch(), 5);
        let seq = tokens(3, 2, 4);
        let mut rng = stream(1, "act", &[]);
        let d = policy.act(&seq, ActionMode::Mean, &mut rng).unwrap();
        let mut tape = Tape::new();
        let binding = policy.bind(&mut tape);
        let fwd = policy.forward(&mut tape, &binding, &seq).unwrap();
        assert_eq!(&d.actions, tape.value(fwd.mu));
        assert_eq!(d.rows.len(), 2);
        assert_eq!(d.rows[0].len(), 3);
    }

    #[test]
    fn log_prob_at_the_mean_with_unit_sigma_matches_the_gaussian_constant() {
        let mut policy = Policy::new(toy_arch(), 5);
        // Pin σ to the upper clamp 1.0 via a large head bias.
        policy.param_mut("head.sigma.w").unwrap().data.fill(0.0);
        policy.param_mut("head.sigma.b").unwrap().data.fill(25.0);
        let seq = tokens(3, 2, 4);
        let mut rng = stream(2, "act", &[]);
        let d = policy.act(&seq, ActionMode::Mean, &mut rng).unwrap();
        let n = 2 * 3; // active controllable tokens × action dims
        let expect = -(n as f64) / 2.0 * LN_2PI;
        assert!((d.log_prob - expect).abs() < 1e-9);

        // The differentiable path agrees with the rollout-time scalar.
        let mut tape = Tape::new();
        let binding = policy.bind(&mut tape);
        let fwd = policy.forward(&mut tape, &binding, &seq).unwrap();
        let lp = policy.log_prob(&mut tape, &fwd, &d.actions);
        assert!((tape.value(lp).data[0] - expect).abs() < 1e-9);
    }

    #[test]
    fn sampled_actions_reproduce_their_stored_log_prob() {
        let policy = Policy::new(toy_arch(), 6);
        let seq = tokens(4, 3, 4);
        let mut rng = stream(3, "act", &[]);
        let d = policy.act(&seq, ActionMode::Sample, &mut rng).unwrap();
        let mut tape = Tape::new();
        let binding = policy.bind(&mut tape);
        let fwd = policy.forward(&mut tape, &binding, &seq).unwrap();
        let lp = policy.log_prob(&mut tape, &fwd, &d.actions);
        let ent = policy.entropy(&mut tape, &fwd);
        assert!((tape.value(lp).data[0] - d.log_prob).abs() < 1e-9);
        assert!((tape.value(ent).data[0] - d.entropy).abs() < 1e-9);
        assert!(d.entropy.is_finite());
    }

    #[test]
    fn value_follows_the_averaging_convention() {
        let equalize = |policy: &mut Policy, v: f64| {
            policy.param_mut("critic.w1").unwrap().data.fill(0.0);
            policy.param_mut("critic.b1").unwrap().data.fill(0.0);
            policy.param_mut("critic.w2").unwrap().data.fill(0.0);
            policy.param_mut("critic.b2").unwrap().data.fill(v);
        };
        let seq = tokens(2, 2, 4);
        let mut rng = stream(4, "act", &[]);

        let mut policy = Policy::new(toy_arch(), 8);
        equalize(&mut policy, 3.0);
        let d = policy.act(&seq, ActionMode::Mean, &mut rng).unwrap();
        // Two active tokens of value 3, divided by the padded length 4.
        assert!((d.value - 1.5).abs() < 1e-12);

        let mut policy = Policy::new(
            PolicyArch {
                critic: CriticAveraging::ActiveOnly,
                ..toy_arch()
            },
            8,
        );
        equalize(&mut policy, 3.0);
        let d = policy.act(&seq, ActionMode::Mean, &mut rng).unwrap();
        assert!((d.value - 3.0).abs() < 1e-12);
    }

    #[test]
    fn value_ignores_the_contents_of_masked_rows() {
        let policy = Policy::new(toy_arch(), 13);
        let seq = tokens(2, 2, 4);
        let mut altered = seq.clone();
        altered.id_bits[3] = [1.0; 16];
        altered.opt[3] = [9.0; 9];
        let mut rng = stream(5, "act", &[]);
        let a = policy.act(&seq, ActionMode::Mean, &mut rng).unwrap();
        let b = policy.act(&altered, ActionMode::Mean, &mut rng).unwrap();
        assert_eq!(a.value, b.value);
        assert_eq!(a.actions, b.actions);
    }

    #[test]
    fn oversized_sequences_and_empty_sequences_are_rejected() {
        let policy = Policy::new(toy_arch(), 1);
        // Active token beyond the 4-row capacity.
        let seq = tokens(6, 2, 8);
        assert!(policy.embed_only(&seq).is_err());
        // Extra padding rows beyond capacity are fine.
        let seq = tokens(3, 2, 8);
        assert!(policy.embed_only(&seq).is_ok());
        let seq = tokens(0, 0, 4);
        assert!(matches!(
            policy.embed_only(&seq),
            Err(CoreError::InvalidArgument(_))
        ));
    }

    #[test]
    fn forward_is_deterministic_and_sampling_follows_the_rng_stream() {
        let policy = Policy::new(toy_arch(), 21);
        let seq = tokens(3, 2, 4);
        let mut r1 = stream(7, "act", &[]);
        let mut r2 = stream(7, "act", &[]);
        let a = policy.act(&seq, ActionMode::Sample, &mut r1).unwrap();
        let b = policy.act(&seq, ActionMode::Sample, &mut r2).unwrap();
        assert_eq!(a.actions, b.actions);
        assert_eq!(a.log_prob, b.log_prob);
        let c = policy.act(&seq, ActionMode::Sample, &mut r1).unwrap();
        assert_ne!(a.actions, c.actions);
    }

    #[test]
    fn positional_table_is_trainable_only_in_learned_mode() {
        let fixed = Policy::new(toy_arch(), 2);
        assert!(fixed.param("pe.table").is_none());
        let learned = Policy::new(
            PolicyArch {
                positional: PositionalMode::Learned,
                ..toy_arch()
            },
            2,
        );
        let pe = learned.param("pe.table").unwrap();
        assert_eq!((pe.rows, pe.cols), (4, 64));
        assert_eq!(pe, &sinusoidal_table(4, 64));
        let absent = Policy::new(
            PolicyArch {
                positional: PositionalMode::Absent,
                ..toy_arch()
            },
            2,
        );
        assert!(absent.param("pe.table").is_none());

        // Gradient flows into the learned table but nowhere in fixed mode
        // (there is no such parameter to receive it).
        let seq = tokens(2, 2, 4);
        let mut tape = Tape::new();
        let binding = learned.bind(&mut tape);
        let fwd = learned.forward(&mut tape, &binding, &seq).unwrap();
        let loss = fwd.value;
        let grads = tape.backward(loss);
        let g = grads.wrt(&tape, binding.var_of(&learned, "pe.table").unwrap());
        assert!(g.data.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn mixer_ablation_removes_attention_entirely() {
        let policy = Policy::new(
            PolicyArch {
                mixer: MixerMode::MlpOnly,
                ..toy_arch()
            },
            2,
        );
        assert!(policy.param("block0.attn.wq").is_none());
        assert!(policy.param("block0.mixer.w").is_some());
        let seq = tokens(2, 2, 4);
        let mut tape = Tape::new();
        let binding = policy.bind(&mut tape);
        let fwd = policy.forward(&mut tape, &binding, &seq).unwrap();
        assert!(fwd.attention.is_empty());
    }

    #[test]
    fn gradients_match_finite_differences_on_a_toy_policy() {
        let policy = Policy::new(toy_arch(), 17);
        let seq = tokens(3, 2, 4);
        let mut rng = stream(11, "fd", &[]);
        let d = policy.act(&seq, ActionMode::Sample, &mut rng).unwrap();

        let loss_of = |p: &Policy| -> f64 {
            let mut tape = Tape::new();
            let binding = p.bind(&mut tape);
            let fwd = p.forward(&mut tape, &binding, &seq).unwrap();
            let lp = p.log_prob(&mut tape, &fwd, &d.actions);
            let ent = p.entropy(&mut tape, &fwd);
            let vw = tape.scale(fwd.value, 0.7);
            let ew = tape.scale(ent, 0.1);
            let s = tape.add(lp, vw);
            let s = tape.add(s, ew);
            tape.value(s).data[0]
        };

        let mut tape = Tape::new();
        let binding = policy.bind(&mut tape);
        let fwd = policy.forward(&mut tape, &binding, &seq).unwrap();
        let lp = policy.log_prob(&mut tape, &fwd, &d.actions);
        let ent = policy.entropy(&mut tape, &fwd);
        let vw = tape.scale(fwd.value, 0.7);
        let ew = tape.scale(ent, 0.1);
        let s = tape.add(lp, vw);
        let loss = tape.add(s, ew);
        let grads = tape.backward(loss);
        let named = policy.collect_grads(&tape, &binding, &grads).unwrap();

        let eps = 1e-4;
        for (pi, name) in policy.param_names().iter().enumerate() {
            let tensor_len = policy.tensors()[pi].len();
            // Spot-check a handful of entries per tensor; the acceptance
            // suite sweeps every entry.
            let probes: Vec<usize> = (0..tensor_len.min(4))
                .chain(if tensor_len > 4 { vec![tensor_len - 1] } else { vec![] })
                .collect();
            for &k in &probes {
                let mut plus = Policy::new(toy_arch(), 17);
                plus.tensors_mut()[pi].data[k] += eps;
                let mut minus = Policy::new(toy_arch(), 17);
                minus.tensors_mut()[pi].data[k] -= eps;
                let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * eps);
                let analytic = named[pi].data[k];
                let denom = analytic.abs().max(numeric.abs()).max(1e-6);
                assert!(
                    (analytic - numeric).abs() / denom < 1e-3,
                    "{name}[{k}]: analytic {analytic} vs numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn checkpoints_round_trip_and_reject_mismatched_architectures() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.json");
        let policy = Policy::new(toy_arch(), 31);
        policy.save(&path, 42).unwrap();
        let (restored, step) = Policy::load_expecting(&path, &toy_arch()).unwrap();
        assert_eq!(step, 42);
        assert_eq!(restored.tensors(), policy.tensors());

        let other = PolicyArch {
            c_max: 4,
            ..toy_arch()
        };
        assert!(Policy::load_expecting(&path, &other).is_err());

        let seq = tokens(2, 2, 4);
        let mut rng = stream(1, "act", &[]);
        let a = policy.act(&seq, ActionMode::Mean, &mut rng).unwrap();
        let b = restored.act(&seq, ActionMode::Mean, &mut rng).unwrap();
        assert_eq!(a.actions, b.actions);
        assert_eq!(a.value, b.value);
    }
}
