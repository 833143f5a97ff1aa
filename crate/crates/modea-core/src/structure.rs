//! Random generation and validation of legal algorithm structures.
//!
//! A structure is a chained sequence of sub-module ids: an initialization
//! head, optionally a multi-niching stage that splits the run into per
//! sub-population branches, and a shared control tail (restart / population
//! reduction / terminal marker). Chaining follows each variant's legal
//! follower list; on top of that the sampler enforces three refinements so
//! that every generated structure is an executable pipeline:
//!
//! 1. *Stage consistency*: an ensemble acting as category X is only placed
//!    where a plain variant of X could stand (e.g. a crossover ensemble
//!    never directly follows initialization).
//! 2. *Position*: a multi-niching stage may only appear immediately after
//!    initialization, and never inside a branch or tail.
//! 3. *Family separation*: differential-evolution-specific and PSO/GA
//!    specific variants never co-occur in one structure; `Neutral` variants
//!    combine with either.
//!
//! The validator checks the follower lists and the structural invariants
//! (shape, family separation, length bound) but not stage consistency, so
//! hand-written structures may be looser than sampled ones as long as every
//! adjacency is legal.

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::registry::{Category, Family, FollowerEntry, ModuleId, Registry, SubModuleSpec};
use crate::rng::Stream;

/// Maximum flattened structure length. Generation reserves enough budget at
/// every slot to reach the terminal marker within this bound, which also
/// fixes the policy's token-sequence length.
pub const L_MAX: usize = 16;

/// Which controllable families a structure may draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceTag {
    /// Differential-evolution variants plus neutral modules.
    De,
    /// PSO and GA variants plus neutral modules.
    PsoGa,
    /// The whole space; family separation still holds per structure.
    All,
}

impl SpaceTag {
    pub fn all() -> [SpaceTag; 3] {
        [SpaceTag::De, SpaceTag::PsoGa, SpaceTag::All]
    }

    pub fn name(self) -> &'static str {
        match self {
            SpaceTag::De => "de",
            SpaceTag::PsoGa => "pso_ga",
            SpaceTag::All => "all",
        }
    }

    pub fn parse(s: &str) -> Result<SpaceTag, CoreError> {
        match s {
            "de" => Ok(SpaceTag::De),
            "pso_ga" => Ok(SpaceTag::PsoGa),
            "all" => Ok(SpaceTag::All),
            other => Err(CoreError::InvalidArgument(format!(
                "unknown space tag {other:?}, expected de|pso_ga|all"
            ))),
        }
    }

    /// Whether a variant of the given family may appear under this tag.
    fn admits(self, family: Family) -> bool {
        match self {
            SpaceTag::De => family != Family::PsoGa,
            SpaceTag::PsoGa => family != Family::De,
            SpaceTag::All => true,
        }
    }
}

/// A legal algorithm structure.
///
/// `trunk` is `[Init]` or `[Init, Multi_Niching]`; with niching, `branches`
/// holds one operator chain per sub-population (search operators, boundary
/// control, selection, optionally information sharing); without niching the
/// single operator chain lives in the trunk and `branches` is empty. `tail`
/// is the shared control suffix ending in the terminal marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmStructure {
    pub trunk: Vec<ModuleId>,
    pub branches: Vec<Vec<ModuleId>>,
    pub tail: Vec<ModuleId>,
    /// Total module count across all segments; checked by the validator.
    pub l: usize,
    pub space_tag: SpaceTag,
}

impl AlgorithmStructure {
    /// All modules in execution order: trunk, branches in order, tail.
    pub fn flat(&self) -> Vec<ModuleId> {
        let mut out = self.trunk.clone();
        for b in &self.branches {
            out.extend_from_slice(b);
        }
        out.extend_from_slice(&self.tail);
        out
    }

    pub fn len(&self) -> usize {
        self.trunk.len() + self.branches.iter().map(Vec::len).sum::<usize>() + self.tail.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether the structure splits the population into sub-populations.
    pub fn niching(&self) -> bool {
        !self.branches.is_empty()
    }

    /// The niching stage id, when present (always `trunk[1]`).
    pub fn multi_niching(&self) -> Option<ModuleId> {
        if self.niching() {
            self.trunk.get(1).copied()
        } else {
            None
        }
    }

    /// Human-readable chain using registry display names.
    pub fn describe(&self, registry: &Registry) -> String {
        let name = |id: ModuleId| {
            registry
                .get(id)
                .map_or_else(|| id.to_string(), |v| v.name.clone())
        };
        let seg = |ids: &[ModuleId]| ids.iter().map(|&i| name(i)).collect::<Vec<_>>().join(" -> ");
        let mut s = format!("[{}] {}", self.space_tag.name(), seg(&self.trunk));
        if self.niching() {
            let branches = self
                .branches
                .iter()
                .map(|b| seg(b))
                .collect::<Vec<_>>()
                .join(" | ");
            s.push_str(&format!(" => {{ {branches} }}"));
        }
        s.push_str(&format!(" => {}", seg(&self.tail)));
        s
    }

    /// Canonical JSON form.
    pub fn to_json(&self) -> Result<String, CoreError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parse and re-validate a JSON structure.
    pub fn from_json(registry: &Registry, text: &str) -> Result<AlgorithmStructure, CoreError> {
        let s: AlgorithmStructure = serde_json::from_str(text)?;
        validate(registry, &s)?;
        Ok(s)
    }
}

impl fmt::Display for AlgorithmStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.flat().iter().map(ModuleId::to_string).collect();
        write!(f, "{}", ids.join(" -> "))
    }
}

/// The follower entry under which an ensemble variant is admissible during
/// sampling — i.e. the stage slot a plain variant of its acting style would
/// occupy. Niching-stage ensembles return `None` (their position is fixed).
fn acting_entry(v: &SubModuleSpec) -> Option<FollowerEntry> {
    let ms = v.ms.as_ref()?;
    match ms.acts_as {
        Category::Niching => None,
        Category::Mutation => {
            if ms.members.iter().all(|&m| m <= 11) {
                Some(FollowerEntry::DeMutation)
            } else {
                Some(FollowerEntry::GaMutation)
            }
        }
        Category::Crossover => {
            if ms.members.iter().all(|&m| m <= 4) {
                Some(FollowerEntry::DeCrossover)
            } else {
                Some(FollowerEntry::GaCrossover)
            }
        }
        Category::PsoUpdate => Some(FollowerEntry::PsoUpdate),
        Category::BoundaryControl => Some(FollowerEntry::BoundaryControl),
        other => unreachable!("ensemble acting as {other:?}"),
    }
}

/// Distance bookkeeping: fewest additional modules needed after this variant
/// to reach the terminal marker (terminal itself counts one). Follows the
/// stage-consistent candidate sets, which form an acyclic graph; niching
/// stages are excluded (they are never on a shortest completion path and
/// have their own feasibility rule).
struct Distances<'r> {
    registry: &'r Registry,
    memo: HashMap<u16, usize>,
}

impl<'r> Distances<'r> {
    fn new(registry: &'r Registry) -> Self {
        Self { registry, memo: HashMap::new() }
    }

    fn to_complete(&mut self, v: &SubModuleSpec) -> usize {
        if let Some(&d) = self.memo.get(&v.id.bits()) {
            return d;
        }
        let d = if v.category() == Category::Completed {
            0
        } else {
            let mut best = usize::MAX;
            for f in stage_followers(self.registry, v, true) {
                let fv = self.registry.require(f).expect("expanded id exists");
                if fv.ms.as_ref().is_some_and(|m| m.acts_as == Category::Niching) {
                    continue;
                }
                let sub = self.to_complete(fv);
                if sub != usize::MAX {
                    best = best.min(1 + sub);
                }
            }
            best
        };
        self.memo.insert(v.id.bits(), d);
        d
    }

    /// Fewest modules needed for a branch to end (reach its selection stage,
    /// after which the shared tail takes over).
    fn to_branch_end(&mut self, v: &SubModuleSpec) -> usize {
        // Every completion path runs through selection, whose distance to the
        // terminal is exactly 1, so the branch-local distance is one less.
        self.to_complete(v).saturating_sub(1)
    }

    /// Shortest possible branch under the given family commitment.
    fn min_branch_len(&mut self, tag: SpaceTag, family: Option<Family>) -> usize {
        let starts = branch_start_entries();
        let mut best = usize::MAX;
        for &entry in &starts {
            for id in self.registry.expand_entry(entry) {
                let v = self.registry.require(id).expect("expanded id exists");
                if !family_ok(v.family, tag, family) {
                    continue;
                }
                best = best.min(1 + self.to_branch_end(v));
            }
        }
        for v in ms_variants(self.registry) {
            let Some(entry) = acting_entry(v) else { continue };
            if starts.contains(&entry) && family_ok(v.family, tag, family) {
                best = best.min(1 + self.to_branch_end(v));
            }
        }
        best
    }
}

/// Follower entries that may start a branch (the initialization follower
/// set: search operators only).
fn branch_start_entries() -> Vec<FollowerEntry> {
    vec![
        FollowerEntry::DeMutation,
        FollowerEntry::PsoUpdate,
        FollowerEntry::GaCrossover,
    ]
}

fn ms_variants(registry: &Registry) -> impl Iterator<Item = &SubModuleSpec> {
    registry.of_category(Category::MultiStrategy)
}

fn family_ok(f: Family, tag: SpaceTag, committed: Option<Family>) -> bool {
    if !tag.admits(f) {
        return false;
    }
    match (committed, f) {
        (_, Family::Neutral) | (None, _) => true,
        (Some(c), f) => c == f,
    }
}

/// Stage-consistent follower candidates of `prev`: plain variants expand per
/// the follower list; ensembles are admitted where their acting style fits.
/// Niching-stage ensembles are *not* included (positional rule; the sampler
/// adds them only at the slot right after initialization).
fn stage_followers(
    registry: &Registry,
    prev: &SubModuleSpec,
    niching_active: bool,
) -> Vec<ModuleId> {
    let mut out = Vec::new();
    let mut has_ms = false;
    for &e in &prev.followers {
        match e {
            FollowerEntry::MultiStrategy => has_ms = true,
            FollowerEntry::InformationSharing if !niching_active => {}
            e => out.extend(registry.expand_entry(e)),
        }
    }
    if has_ms {
        for v in ms_variants(registry) {
            if let Some(entry) = acting_entry(v) {
                if prev.followers.contains(&entry) {
                    out.push(v.id);
                }
            }
        }
    }
    out
}

/// Sampler state threaded through one generation call.
struct GenState {
    tag: SpaceTag,
    family: Option<Family>,
    len: usize,
}

impl GenState {
    fn commit(&mut self, f: Family) {
        if f != Family::Neutral {
            self.family = Some(f);
        }
    }
}

/// Generate one legal structure. Deterministic given the stream.
pub fn generate(
    registry: &Registry,
    tag: SpaceTag,
    rng: &mut Stream,
) -> Result<AlgorithmStructure, CoreError> {
    let mut dist = Distances::new(registry);
    let mut state = GenState { tag, family: None, len: 0 };

    // Initialization head.
    let inits: Vec<ModuleId> = registry
        .of_category(Category::Initialization)
        .map(|v| v.id)
        .collect();
    let init = inits[rng.random_range(0..inits.len())];
    let mut trunk = vec![init];
    state.len = 1;

    // First operator slot: search operators plus feasible niching stages.
    let init_spec = registry.require(init)?;
    let mut first: Vec<ModuleId> = stage_followers(registry, init_spec, false)
        .into_iter()
        .filter(|&c| {
            let v = registry.require(c).expect("expanded id exists");
            family_ok(v.family, tag, state.family)
                && state.len + 1 + dist.to_complete(v) <= L_MAX
        })
        .collect();
    for v in ms_variants(registry) {
        let Some(ms) = v.ms.as_ref() else { continue };
        if ms.acts_as != Category::Niching {
            continue;
        }
        let k = ms.n_sub.expect("niching ensemble declares n_sub");
        let min_branch = dist.min_branch_len(tag, None);
        if state.len + 1 + k * min_branch + 1 <= L_MAX {
            first.push(v.id);
        }
    }
    let pick = sample(&first, rng, state.len, "first operator")?;
    let pick_spec = registry.require(pick)?;

    if pick_spec
        .ms
        .as_ref()
        .is_some_and(|m| m.acts_as == Category::Niching)
    {
        // Niching path: fixed trunk, independent branches, shared tail.
        let k = pick_spec.ms.as_ref().unwrap().n_sub.unwrap();
        trunk.push(pick);
        state.len = 2;
        let mut branches = Vec::with_capacity(k);
        for b in 0..k {
            let branch = sample_branch(registry, &mut dist, &mut state, rng, k - b - 1)?;
            branches.push(branch);
        }
        let tail = sample_tail(registry, &mut dist, &mut state, rng, &branches)?;
        let s = AlgorithmStructure {
            l: trunk.len() + branches.iter().map(Vec::len).sum::<usize>() + tail.len(),
            trunk,
            branches,
            tail,
            space_tag: tag,
        };
        validate(registry, &s)?;
        Ok(s)
    } else {
        // Single chain: sample straight through to the terminal marker, then
        // split the control suffix off as the tail.
        let mut chain = vec![pick];
        state.commit(pick_spec.family);
        state.len += 1;
        let mut prev = pick_spec;
        while prev.category() != Category::Completed {
            let cands: Vec<ModuleId> = stage_followers(registry, prev, false)
                .into_iter()
                .filter(|&c| {
                    let v = registry.require(c).expect("expanded id exists");
                    family_ok(v.family, tag, state.family)
                        && state.len + 1 + dist.to_complete(v) <= L_MAX
                })
                .collect();
            let next = sample(&cands, rng, state.len, "chain continuation")?;
            let next_spec = registry.require(next)?;
            state.commit(next_spec.family);
            state.len += 1;
            chain.push(next);
            prev = next_spec;
        }
        let cut = chain
            .iter()
            .position(|&m| is_control(registry, m))
            .expect("chain ends with the terminal marker");
        let tail = chain.split_off(cut);
        trunk.extend(chain);
        let s = AlgorithmStructure {
            l: trunk.len() + tail.len(),
            trunk,
            branches: Vec::new(),
            tail,
            space_tag: tag,
        };
        validate(registry, &s)?;
        Ok(s)
    }
}

/// One branch: search operators through selection, optionally followed by
/// information sharing. The draw that would leave the sub-population scope
/// (a control module) ends the branch and is discarded; the shared tail is
/// sampled afterwards from the follower intersection of all branch ends.
fn sample_branch(
    registry: &Registry,
    dist: &mut Distances<'_>,
    state: &mut GenState,
    rng: &mut Stream,
    future_branches: usize,
) -> Result<Vec<ModuleId>, CoreError> {
    let mut branch: Vec<ModuleId> = Vec::new();
    loop {
        let raw: Vec<ModuleId> = match branch.last() {
            None => {
                // Branch head: the initialization follower set.
                let starts = branch_start_entries();
                let mut c: Vec<ModuleId> = starts
                    .iter()
                    .flat_map(|&e| registry.expand_entry(e))
                    .collect();
                c.extend(ms_variants(registry).filter_map(|v| {
                    acting_entry(v).filter(|e| starts.contains(e)).map(|_| v.id)
                }));
                c
            }
            Some(&prev) => stage_followers(registry, registry.require(prev)?, true),
        };
        let cands: Vec<ModuleId> = raw
            .into_iter()
            .filter(|&c| {
                let v = registry.require(c).expect("expanded id exists");
                if !family_ok(v.family, state.tag, state.family) {
                    return false;
                }
                let fam_after = match v.family {
                    Family::Neutral => state.family,
                    f => Some(f),
                };
                let reserve = future_branches * dist.min_branch_len(state.tag, fam_after);
                if is_control(registry, c) {
                    // Ending the branch here: later branches plus a one-module
                    // tail must still fit (the drawn module is discarded).
                    state.len + reserve + 1 <= L_MAX
                } else {
                    // Adding the module: the rest of this branch, later
                    // branches, and a one-module tail must fit.
                    state.len + 1 + dist.to_branch_end(v) + reserve + 1 <= L_MAX
                }
            })
            .collect();
        let next = sample(&cands, rng, state.len, "branch slot")?;
        if is_control(registry, next) {
            return Ok(branch);
        }
        let spec = registry.require(next)?;
        state.commit(spec.family);
        state.len += 1;
        branch.push(next);
    }
}

/// Shared control tail: first module drawn from the follower intersection of
/// every branch end, then chained until the terminal marker.
fn sample_tail(
    registry: &Registry,
    dist: &mut Distances<'_>,
    state: &mut GenState,
    rng: &mut Stream,
    branches: &[Vec<ModuleId>],
) -> Result<Vec<ModuleId>, CoreError> {
    let mut cands: Option<Vec<ModuleId>> = None;
    for b in branches {
        let last = registry.require(*b.last().expect("non-empty branch"))?;
        let set: Vec<ModuleId> = stage_followers(registry, last, true)
            .into_iter()
            .filter(|&c| is_control(registry, c))
            .collect();
        cands = Some(match cands {
            None => set,
            Some(prev) => prev.into_iter().filter(|c| set.contains(c)).collect(),
        });
    }
    let mut cands = cands.unwrap_or_default();
    let mut tail = Vec::new();
    loop {
        let feasible: Vec<ModuleId> = cands
            .iter()
            .copied()
            .filter(|&c| {
                let v = registry.require(c).expect("expanded id exists");
                state.len + 1 + dist.to_complete(v) <= L_MAX
            })
            .collect();
        let next = sample(&feasible, rng, state.len, "tail slot")?;
        let spec = registry.require(next)?;
        state.len += 1;
        tail.push(next);
        if spec.category() == Category::Completed {
            return Ok(tail);
        }
        cands = stage_followers(registry, spec, true)
            .into_iter()
            .filter(|&c| is_control(registry, c))
            .collect();
    }
}

fn is_control(registry: &Registry, id: ModuleId) -> bool {
    registry.get(id).is_some_and(|v| {
        matches!(
            v.category(),
            Category::RestartStrategy | Category::PopulationReduction | Category::Completed
        )
    })
}

/// Uniform draw over the pre-filtered legal candidates. Filtering before the
/// draw yields the same distribution as resampling illegal picks until a
/// legal one appears, without the unbounded loop.
fn sample(
    cands: &[ModuleId],
    rng: &mut Stream,
    slot: usize,
    what: &str,
) -> Result<ModuleId, CoreError> {
    if cands.is_empty() {
        return Err(CoreError::GenerationStuck {
            slot,
            reason: format!("no legal candidate for {what}"),
        });
    }
    Ok(cands[rng.random_range(0..cands.len())])
}

/// Check every structural invariant; `Ok(())` iff the structure is legal.
pub fn validate(registry: &Registry, s: &AlgorithmStructure) -> Result<(), CoreError> {
    let flat = s.flat();
    let fail = |position: usize, reason: String| -> Result<(), CoreError> {
        Err(CoreError::IllegalStructure { position, reason })
    };

    if flat.is_empty() {
        return fail(0, "empty structure".into());
    }
    if s.l != flat.len() {
        return fail(0, format!("declared length {} != actual {}", s.l, flat.len()));
    }
    if flat.len() > L_MAX {
        return fail(0, format!("length {} exceeds the bound {L_MAX}", flat.len()));
    }

    // Every id must be registered; collect specs up front.
    let mut specs = Vec::with_capacity(flat.len());
    for (i, &id) in flat.iter().enumerate() {
        match registry.get(id) {
            Some(v) => specs.push(v),
            None => return fail(i, format!("unknown module {id}")),
        }
    }

    // Head and terminal.
    if specs[0].category() != Category::Initialization {
        return fail(0, "structure must start with an initialization module".into());
    }
    if specs.last().unwrap().category() != Category::Completed {
        return fail(flat.len() - 1, "structure must end with the terminal marker".into());
    }
    for (i, v) in specs.iter().enumerate() {
        if v.category() == Category::Completed && i + 1 != flat.len() {
            return fail(i, "terminal marker before the end".into());
        }
        if v.category() == Category::Initialization && i != 0 {
            return fail(i, "initialization after the head".into());
        }
        if v.category() == Category::Niching {
            return fail(i, "plain niching variants only appear inside ensembles".into());
        }
    }

    // Niching stage shape.
    let is_niching_stage =
        |v: &SubModuleSpec| v.ms.as_ref().is_some_and(|m| m.acts_as == Category::Niching);
    let niching = s.niching();
    if niching {
        if s.trunk.len() != 2 || !is_niching_stage(registry.require(s.trunk[1])?) {
            return fail(
                s.trunk.len().saturating_sub(1),
                "branches require a trunk of initialization followed by a niching stage".into(),
            );
        }
        let declared = registry
            .require(s.trunk[1])?
            .ms
            .as_ref()
            .and_then(|m| m.n_sub)
            .unwrap_or(0);
        if declared != s.branches.len() {
            return fail(
                1,
                format!(
                    "niching stage declares {declared} sub-populations but {} branches given",
                    s.branches.len()
                ),
            );
        }
        if s.branches.iter().any(|b| b.is_empty()) {
            return fail(1, "empty branch".into());
        }
    }
    for (i, v) in specs.iter().enumerate() {
        if is_niching_stage(v) && !(niching && i == 1) {
            return fail(i, "niching stage outside the trunk head".into());
        }
    }

    // Segment roles: control modules only in the tail, which is the maximal
    // control suffix.
    let body_len = s.trunk.len() + s.branches.iter().map(Vec::len).sum::<usize>();
    for (i, v) in specs.iter().enumerate() {
        let in_tail = i >= body_len;
        let is_ctl = matches!(
            v.category(),
            Category::RestartStrategy | Category::PopulationReduction | Category::Completed
        );
        if in_tail && !is_ctl {
            return fail(i, format!("{} cannot appear in the control tail", v.name));
        }
        if !in_tail && is_ctl {
            return fail(i, format!("{} must live in the control tail", v.name));
        }
    }

    // Adjacency along each segment, and across segment boundaries.
    let legal = |a: ModuleId, b: ModuleId| -> Result<bool, CoreError> {
        Ok(registry.legal_followers(a, niching)?.contains(&b))
    };
    let check_seq = |ids: &[ModuleId], offset: usize| -> Result<(), CoreError> {
        for w in 1..ids.len() {
            if !legal(ids[w - 1], ids[w])? {
                return Err(CoreError::IllegalStructure {
                    position: offset + w,
                    reason: format!(
                        "{} may not follow {}",
                        registry.require(ids[w])?.name,
                        registry.require(ids[w - 1])?.name
                    ),
                });
            }
        }
        Ok(())
    };
    check_seq(&s.trunk, 0)?;
    let mut offset = s.trunk.len();
    if niching {
        let stage = s.trunk[1];
        for b in &s.branches {
            if !legal(stage, b[0])? {
                return fail(offset, format!("branch may not start with {}", b[0]));
            }
            check_seq(b, offset)?;
            // Each branch conceptually continues into the shared tail.
            if !legal(*b.last().unwrap(), s.tail[0])? {
                return fail(
                    offset + b.len() - 1,
                    format!("tail start {} illegal after this branch", s.tail[0]),
                );
            }
            offset += b.len();
        }
    } else if s.tail.is_empty() || !legal(*s.trunk.last().unwrap(), s.tail[0])? {
        return fail(offset, "tail must legally follow the trunk".into());
    }
    check_seq(&s.tail, offset)?;

    // Family separation and space-tag consistency.
    let mut committed: Option<Family> = None;
    for (i, v) in specs.iter().enumerate() {
        if !s.space_tag.admits(v.family) {
            return fail(i, format!("{} is outside the {} space", v.name, s.space_tag.name()));
        }
        match (committed, v.family) {
            (_, Family::Neutral) => {}
            (None, f) => committed = Some(f),
            (Some(c), f) if c == f => {}
            (Some(_), _) => {
                return fail(i, format!("{} mixes algorithm families", v.name));
            }
        }
    }

    Ok(())
}
