//! The typed operator registry.
//!
//! Holds every registered operator variant together with its configuration
//! space and chaining rules, expands category-level follower entries into
//! concrete variant id sets, and turns raw controller outputs into
//! materialized configurations.

mod ids;
mod spec;

pub mod exec;

use std::collections::HashMap;
use std::sync::OnceLock;

use rand::Rng;

pub use ids::{Category, ModuleId};
pub use spec::{
    ConfigParam, Family, FollowerEntry, MsInfo, ParamDefault, ParamRange, SubModuleSpec,
};

use crate::error::CoreError;
use crate::rng::Stream;

/// A materialized value for one configuration dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamValue {
    Num(f64),
    Opt(usize),
}

/// A variant's configuration after mapping raw controller outputs (or
/// defaults) into the declared ranges.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MaterializedConfig {
    entries: Vec<(&'static str, ParamValue)>,
}

impl MaterializedConfig {
    pub fn push(&mut self, name: &'static str, value: ParamValue) {
        self.entries.push((name, value));
    }

    pub fn get(&self, name: &str) -> Option<ParamValue> {
        self.entries
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| *v)
    }

    /// Continuous value by name, falling back to `def` when the dimension is
    /// absent (ensemble members read parameters their host does not declare).
    pub fn num_or(&self, name: &str, def: f64) -> f64 {
        match self.get(name) {
            Some(ParamValue::Num(v)) => v,
            _ => def,
        }
    }

    /// Categorical choice by name.
    pub fn opt_or(&self, name: &str, def: usize) -> usize {
        match self.get(name) {
            Some(ParamValue::Opt(v)) => v,
            _ => def,
        }
    }

    pub fn entries(&self) -> &[(&'static str, ParamValue)] {
        &self.entries
    }

    /// Human/trace form, e.g. `F1=0.500 Cr=0.900 op#2`.
    pub fn describe(&self) -> String {
        self.entries
            .iter()
            .map(|(n, v)| match v {
                ParamValue::Num(x) => format!("{n}={x:.4}"),
                ParamValue::Opt(i) => format!("{n}#{i}"),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Registry of operator variants.
#[derive(Debug, Clone)]
pub struct Registry {
    variants: Vec<SubModuleSpec>,
    by_bits: HashMap<u16, usize>,
}

/// Index range reserved for additional multi-strategy ensembles beyond the
/// ten standard ones.
pub const CUSTOM_MS_INDEX_RANGE: std::ops::RangeInclusive<u16> = 11..=61;

impl Registry {
    /// The standard table. Built once per process.
    pub fn standard() -> &'static Registry {
        static REG: OnceLock<Registry> = OnceLock::new();
        REG.get_or_init(|| {
            Registry::from_table(spec::standard_table()).expect("standard table is well-formed")
        })
    }

    fn from_table(variants: Vec<SubModuleSpec>) -> Result<Registry, CoreError> {
        let mut by_bits = HashMap::with_capacity(variants.len());
        for (i, v) in variants.iter().enumerate() {
            v.id.category()?;
            for p in &v.params {
                check_default_in_range(v, p)?;
            }
            if by_bits.insert(v.id.bits(), i).is_some() {
                return Err(CoreError::InvalidArgument(format!(
                    "duplicate module id {}",
                    v.id
                )));
            }
        }
        Ok(Registry { variants, by_bits })
    }

    pub fn variants(&self) -> &[SubModuleSpec] {
        &self.variants
    }

    pub fn len(&self) -> usize {
        self.variants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variants.is_empty()
    }

    pub fn get(&self, id: ModuleId) -> Option<&SubModuleSpec> {
        self.by_bits.get(&id.bits()).map(|&i| &self.variants[i])
    }

    pub fn require(&self, id: ModuleId) -> Result<&SubModuleSpec, CoreError> {
        self.get(id).ok_or(CoreError::UnknownModule(id.bits()))
    }

    pub fn of_category(&self, cat: Category) -> impl Iterator<Item = &SubModuleSpec> {
        self.variants.iter().filter(move |v| v.category() == cat)
    }

    /// Expand a follower entry into concrete variant ids, in registry order.
    pub fn expand_entry(&self, entry: FollowerEntry) -> Vec<ModuleId> {
        let keep = |v: &SubModuleSpec| -> bool {
            let cat = v.category();
            let idx = v.id.index();
            match entry {
                FollowerEntry::DeMutation => cat == Category::Mutation && idx <= 11,
                FollowerEntry::GaMutation => cat == Category::Mutation && idx >= 12,
                FollowerEntry::DeCrossover => cat == Category::Crossover && idx <= 4,
                FollowerEntry::GaCrossover => cat == Category::Crossover && idx >= 5,
                FollowerEntry::PsoUpdate => cat == Category::PsoUpdate,
                FollowerEntry::BoundaryControl => cat == Category::BoundaryControl,
                FollowerEntry::Selection => cat == Category::Selection,
                FollowerEntry::RestartStrategy => cat == Category::RestartStrategy,
                FollowerEntry::PopulationReduction => cat == Category::PopulationReduction,
                FollowerEntry::Completed => cat == Category::Completed,
                FollowerEntry::InformationSharing => cat == Category::InformationSharing,
                FollowerEntry::MultiStrategy => cat == Category::MultiStrategy,
            }
        };
        self.variants
            .iter()
            .filter(|v| keep(v))
            .map(|v| v.id)
            .collect()
    }

    /// All variants that may legally follow `id`. `niching_active` gates the
    /// Information_Sharing entry of Selection variants.
    pub fn legal_followers(
        &self,
        id: ModuleId,
        niching_active: bool,
    ) -> Result<Vec<ModuleId>, CoreError> {
        let v = self.require(id)?;
        let mut out = Vec::new();
        for &e in &v.followers {
            if e == FollowerEntry::InformationSharing && !niching_active {
                continue;
            }
            out.extend(self.expand_entry(e));
        }
        Ok(out)
    }

    /// Largest configuration-space size over all variants (`C_max`).
    pub fn max_config_dims(&self) -> usize {
        self.variants
            .iter()
            .map(SubModuleSpec::config_dims)
            .max()
            .unwrap_or(0)
    }

    /// Map raw controller outputs into the declared configuration space.
    /// Continuous: `lo + clamp(a, 0, 1)·(hi − lo)`. Categorical with `m`
    /// options: `min(floor(clamp(a, 0, 1)·m), m − 1)`. Dimensions past the
    /// variant's configuration size are ignored; non-finite values are
    /// rejected.
    pub fn materialize(&self, id: ModuleId, raw: &[f64]) -> Result<MaterializedConfig, CoreError> {
        let v = self.require(id)?;
        if raw.len() < v.params.len() {
            return Err(CoreError::InvalidArgument(format!(
                "{} expects {} raw dims, got {}",
                v.name,
                v.params.len(),
                raw.len()
            )));
        }
        let mut cfg = MaterializedConfig::default();
        for (p, &a) in v.params.iter().zip(raw.iter()) {
            if !a.is_finite() {
                return Err(CoreError::InvalidArgument(format!(
                    "non-finite raw action for {}::{}",
                    v.name, p.name
                )));
            }
            let t = a.clamp(0.0, 1.0);
            let value = match &p.range {
                ParamRange::Continuous { lo, hi } => ParamValue::Num(lo + t * (hi - lo)),
                ParamRange::Categorical { options } => {
                    let m = options.len();
                    ParamValue::Opt(((t * m as f64).floor() as usize).min(m - 1))
                }
            };
            cfg.push(p.name, value);
        }
        Ok(cfg)
    }

    /// The variant's default configuration. `RandomOption` defaults draw a
    /// fresh uniform choice from `rng`.
    pub fn default_config(&self, id: ModuleId, rng: &mut Stream) -> Result<MaterializedConfig, CoreError> {
        let v = self.require(id)?;
        let mut cfg = MaterializedConfig::default();
        for p in &v.params {
            let value = match (&p.default, &p.range) {
                (ParamDefault::Value(x), _) => ParamValue::Num(*x),
                (ParamDefault::Option(i), _) => ParamValue::Opt(*i),
                (ParamDefault::RandomOption, ParamRange::Categorical { options }) => {
                    ParamValue::Opt(rng.random_range(0..options.len()))
                }
                (ParamDefault::RandomOption, ParamRange::Continuous { .. }) => {
                    unreachable!("checked at registry construction")
                }
            };
            cfg.push(p.name, value);
        }
        Ok(cfg)
    }

    /// Build an additional same-category multi-strategy ensemble in the
    /// reserved index range. `members` are variant indices of `acts_as`; they
    /// must all exist, share one family, and count at least two.
    pub fn custom_multi_strategy(
        &self,
        index: u16,
        acts_as: Category,
        members: Vec<u16>,
    ) -> Result<SubModuleSpec, CoreError> {
        if !CUSTOM_MS_INDEX_RANGE.contains(&index) {
            return Err(CoreError::InvalidArgument(format!(
                "custom multi-strategy index {index} outside {CUSTOM_MS_INDEX_RANGE:?}"
            )));
        }
        if !matches!(
            acts_as,
            Category::Mutation | Category::Crossover | Category::PsoUpdate
        ) {
            return Err(CoreError::InvalidArgument(
                "custom ensembles combine mutation, crossover or PSO update variants".into(),
            ));
        }
        if members.len() < 2 {
            return Err(CoreError::InvalidArgument(
                "an ensemble needs at least two members".into(),
            ));
        }
        let mut family = None;
        let mut params: Vec<ConfigParam> = Vec::new();
        let mut names: Vec<&'static str> = Vec::new();
        for &m in &members {
            let mv = self.require(ModuleId::new(acts_as, m))?;
            match family {
                None => family = Some(mv.family),
                Some(f) if f == mv.family => {}
                Some(_) => {
                    return Err(CoreError::InvalidArgument(
                        "ensemble members must share one family".into(),
                    ))
                }
            }
            // A same-name &'static str per member; leak-free because variant
            // names in the standard table are 'static via Box::leak below.
            names.push(Box::leak(mv.name.clone().into_boxed_str()));
            // Union of member parameter spaces, first declaration wins.
            for p in &mv.params {
                if !params.iter().any(|q| q.name == p.name) {
                    params.push(p.clone());
                }
            }
        }
        let mut all_params = vec![ConfigParam {
            name: "op",
            range: ParamRange::Categorical {
                options: names.clone(),
            },
            default: ParamDefault::RandomOption,
        }];
        all_params.extend(params);
        let family = family.unwrap();
        // DE-style mutation ensembles feed a DE crossover; every other acting
        // style (GA mutation, any crossover, PSO) proceeds to boundary repair.
        let followers = match acts_as {
            Category::Mutation if members.iter().all(|&m| m <= 11) => {
                vec![FollowerEntry::DeCrossover]
            }
            _ => vec![FollowerEntry::BoundaryControl],
        };
        Ok(SubModuleSpec {
            id: ModuleId::new(Category::MultiStrategy, index),
            name: format!("Multi_Custom_{index}"),
            summary: "Caller-assembled same-category ensemble",
            params: all_params,
            followers,
            family,
            ms: Some(MsInfo {
                acts_as,
                members,
                n_sub: None,
            }),
        })
    }

    /// A registry extended with additional (e.g. custom ensemble) variants.
    pub fn with_extra(&self, extra: Vec<SubModuleSpec>) -> Result<Registry, CoreError> {
        let mut table = self.variants.clone();
        table.extend(extra);
        Registry::from_table(table)
    }

    /// JSON export of the whole table, for documentation tooling.
    pub fn export_json(&self) -> serde_json::Value {
        serde_json::json!({
            "variants": self.variants,
            "c_max": self.max_config_dims(),
        })
    }

    /// Stable FNV-1a hash of the exported table, recorded in run manifests.
    pub fn content_hash(&self) -> String {
        let text = serde_json::to_string(&self.export_json()).expect("registry serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

fn check_default_in_range(v: &SubModuleSpec, p: &ConfigParam) -> Result<(), CoreError> {
    let bad = |msg: String| CoreError::InvalidArgument(format!("{} :: {}: {msg}", v.name, p.name));
    match (&p.default, &p.range) {
        (ParamDefault::Value(x), ParamRange::Continuous { lo, hi }) => {
            if !(lo <= x && x <= hi) {
                return Err(bad(format!("default {x} outside [{lo}, {hi}]")));
            }
        }
        (ParamDefault::Option(i), ParamRange::Categorical { options }) => {
            if *i >= options.len() {
                return Err(bad(format!("default option {i} out of range")));
            }
        }
        (ParamDefault::RandomOption, ParamRange::Categorical { .. }) => {}
        _ => return Err(bad("default kind does not match range kind".into())),
    }
    Ok(())
}
