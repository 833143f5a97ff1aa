//! 16-bit module identifiers.
//!
//! Layout, most significant bit first: `[controllable (1) | category (6) |
//! index (9)]`. Category codes are namespaced by the controllable bit, i.e.
//! uncontrollable and controllable categories each count from 1. The index is
//! 1-based within its category.

use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::CoreError;

/// Operator categories. Uncontrollable categories run with fixed behaviour;
/// controllable ones expose a configuration space set by the policy each
/// generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    // Uncontrollable (bit 0), codes 1..=7.
    Initialization,
    Niching,
    BoundaryControl,
    Selection,
    RestartStrategy,
    PopulationReduction,
    Completed,
    // Controllable (bit 1), codes 1..=5.
    Mutation,
    Crossover,
    PsoUpdate,
    MultiStrategy,
    InformationSharing,
}

impl Category {
    pub fn all() -> [Category; 12] {
        [
            Category::Initialization,
            Category::Niching,
            Category::BoundaryControl,
            Category::Selection,
            Category::RestartStrategy,
            Category::PopulationReduction,
            Category::Completed,
            Category::Mutation,
            Category::Crossover,
            Category::PsoUpdate,
            Category::MultiStrategy,
            Category::InformationSharing,
        ]
    }

    /// Whether variants of this category take runtime configuration.
    pub fn controllable(self) -> bool {
        matches!(
            self,
            Category::Mutation
                | Category::Crossover
                | Category::PsoUpdate
                | Category::MultiStrategy
                | Category::InformationSharing
        )
    }

    /// 6-bit category code, namespaced by the controllable bit.
    pub fn code(self) -> u16 {
        match self {
            Category::Initialization => 1,
            Category::Niching => 2,
            Category::BoundaryControl => 3,
            Category::Selection => 4,
            Category::RestartStrategy => 5,
            Category::PopulationReduction => 6,
            Category::Completed => 7,
            Category::Mutation => 1,
            Category::Crossover => 2,
            Category::PsoUpdate => 3,
            Category::MultiStrategy => 4,
            Category::InformationSharing => 5,
        }
    }

    fn from_parts(controllable: bool, code: u16) -> Option<Category> {
        let cat = match (controllable, code) {
            (false, 1) => Category::Initialization,
            (false, 2) => Category::Niching,
            (false, 3) => Category::BoundaryControl,
            (false, 4) => Category::Selection,
            (false, 5) => Category::RestartStrategy,
            (false, 6) => Category::PopulationReduction,
            (false, 7) => Category::Completed,
            (true, 1) => Category::Mutation,
            (true, 2) => Category::Crossover,
            (true, 3) => Category::PsoUpdate,
            (true, 4) => Category::MultiStrategy,
            (true, 5) => Category::InformationSharing,
            _ => return None,
        };
        Some(cat)
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Initialization => "initialization",
            Category::Niching => "niching",
            Category::BoundaryControl => "boundary_control",
            Category::Selection => "selection",
            Category::RestartStrategy => "restart_strategy",
            Category::PopulationReduction => "population_reduction",
            Category::Completed => "completed",
            Category::Mutation => "mutation",
            Category::Crossover => "crossover",
            Category::PsoUpdate => "pso_update",
            Category::MultiStrategy => "multi_strategy",
            Category::InformationSharing => "information_sharing",
        }
    }

    pub fn from_name(name: &str) -> Option<Category> {
        Category::all().into_iter().find(|c| c.name() == name)
    }
}

/// Packed module identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModuleId(u16);

impl ModuleId {
    /// Pack `(category, index)` into the 16-bit layout. The index is 1-based
    /// and must fit in 9 bits.
    pub fn new(category: Category, index: u16) -> Self {
        assert!(index >= 1 && index < 512, "index {} out of 9-bit range", index);
        let c = u16::from(category.controllable());
        ModuleId((c << 15) | (category.code() << 9) | index)
    }

    pub fn from_bits(bits: u16) -> Result<Self, CoreError> {
        let id = ModuleId(bits);
        id.category().map(|_| id).map_err(|_| CoreError::UnknownModule(bits))?;
        if id.index() == 0 {
            return Err(CoreError::UnknownModule(bits));
        }
        Ok(id)
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn controllable(self) -> bool {
        self.0 >> 15 == 1
    }

    pub fn category(self) -> Result<Category, CoreError> {
        Category::from_parts(self.controllable(), (self.0 >> 9) & 0x3f)
            .ok_or(CoreError::UnknownModule(self.0))
    }

    /// 1-based index within the category.
    pub fn index(self) -> u16 {
        self.0 & 0x1ff
    }

    /// Bit-string form `c-cccccc-iiiiiiiii`, most significant bit first.
    pub fn bit_string(self) -> String {
        format!(
            "{}-{:06b}-{:09b}",
            self.0 >> 15,
            (self.0 >> 9) & 0x3f,
            self.0 & 0x1ff
        )
    }

    pub fn parse_bit_string(s: &str) -> Result<Self, CoreError> {
        let parts: Vec<&str> = s.split('-').collect();
        let err = || CoreError::InvalidArgument(format!("bad module id string {s:?}"));
        if parts.len() != 3 || parts[0].len() != 1 || parts[1].len() != 6 || parts[2].len() != 9 {
            return Err(err());
        }
        let c = u16::from_str_radix(parts[0], 2).map_err(|_| err())?;
        let cat = u16::from_str_radix(parts[1], 2).map_err(|_| err())?;
        let idx = u16::from_str_radix(parts[2], 2).map_err(|_| err())?;
        ModuleId::from_bits((c << 15) | (cat << 9) | idx)
    }

    /// The 16 id bits as 0/1 features, most significant first; this is the
    /// role-embedding input of the policy network.
    pub fn bit_features(self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = f64::from((self.0 >> (15 - i)) & 1);
        }
        out
    }
}

impl fmt::Display for ModuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.bit_string())
    }
}

impl Serialize for ModuleId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.bit_string())
    }
}

impl<'de> Deserialize<'de> for ModuleId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        ModuleId::parse_bit_string(&s).map_err(|e| D::Error::custom(e.to_string()))
    }
}
