//! Benchmark MDPs with parameterizable sizes.
//!
//! Each domain ships two presets: `small` (exactly enumerable, cheap enough for
//! value iteration over the full layered space) and `desk` (the default used by
//! benchmark runs). Instance parameters that are randomized, such as per-tile
//! reset probabilities, are drawn from `instance_seed`.

mod academic_advising;
pub mod fixtures;
mod game_of_life;
mod navigation;
mod racetrack;
mod sailing_wind;
mod sysadmin;
mod triangle_tireworld;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use academic_advising::AcademicAdvising;
pub use game_of_life::GameOfLife;
pub use navigation::Navigation;
pub use racetrack::Racetrack;
pub use sailing_wind::SailingWind;
pub use sysadmin::SysAdmin;
pub use triangle_tireworld::TriangleTireworld;

use crate::error::{Error, Result};
use crate::mdp::MdpModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainName {
    Navigation,
    Sysadmin,
    GameOfLife,
    SailingWind,
    Racetrack,
    AcademicAdvising,
    TriangleTireworld,
}

impl DomainName {
    pub const ALL: [DomainName; 7] = [
        DomainName::Navigation,
        DomainName::Sysadmin,
        DomainName::GameOfLife,
        DomainName::SailingWind,
        DomainName::Racetrack,
        DomainName::AcademicAdvising,
        DomainName::TriangleTireworld,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DomainName::Navigation => "navigation",
            DomainName::Sysadmin => "sysadmin",
            DomainName::GameOfLife => "game_of_life",
            DomainName::SailingWind => "sailing_wind",
            DomainName::Racetrack => "racetrack",
            DomainName::AcademicAdvising => "academic_advising",
            DomainName::TriangleTireworld => "triangle_tireworld",
        }
    }
}

impl fmt::Display for DomainName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DomainName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DomainName::ALL
            .iter()
            .copied()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown domain '{s}'")))
    }
}

/// Which size preset a spec was built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Small,
    Desk,
}

/// Name, parameters and instance seed of a benchmark domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub name: DomainName,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
    #[serde(default)]
    pub instance_seed: u64,
}

impl DomainSpec {
    pub fn new(name: DomainName) -> Self {
        DomainSpec { name, params: BTreeMap::new(), instance_seed: 0 }
    }

    /// Preset parameters. Unset parameters fall back to the `desk` defaults.
    pub fn preset(name: DomainName, preset: Preset) -> Self {
        let mut spec = DomainSpec::new(name);
        if preset == Preset::Small {
            for (k, v) in small_params(name) {
                spec.params.insert(k.to_string(), v);
            }
        }
        spec
    }

    pub fn small(name: DomainName) -> Self {
        Self::preset(name, Preset::Small)
    }

    pub fn desk(name: DomainName) -> Self {
        Self::preset(name, Preset::Desk)
    }

    pub fn with_param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.instance_seed = seed;
        self
    }
}

fn small_params(name: DomainName) -> Vec<(&'static str, Value)> {
    match name {
        DomainName::Navigation => vec![("rows", 3.into()), ("cols", 3.into())],
        DomainName::Sysadmin => vec![("machines", 3.into()), ("extra_edges", 0.into())],
        DomainName::GameOfLife => vec![("size", 2.into())],
        DomainName::SailingWind => vec![("size", 3.into())],
        DomainName::Racetrack => vec![("track", "small".into())],
        DomainName::AcademicAdvising => vec![("courses", 3.into()), ("mandatory", 2.into())],
        DomainName::TriangleTireworld => vec![("side", 3.into())],
    }
}

/// Construct the model described by `spec`.
pub fn build_domain(spec: &DomainSpec) -> Result<Arc<dyn MdpModel>> {
    let mut p = Params::new(&spec.params);
    let model: Arc<dyn MdpModel> = match spec.name {
        DomainName::Navigation => Arc::new(Navigation::from_params(&mut p, spec.instance_seed)?),
        DomainName::Sysadmin => Arc::new(SysAdmin::from_params(&mut p, spec.instance_seed)?),
        DomainName::GameOfLife => Arc::new(GameOfLife::from_params(&mut p)?),
        DomainName::SailingWind => Arc::new(SailingWind::from_params(&mut p)?),
        DomainName::Racetrack => Arc::new(Racetrack::from_params(&mut p)?),
        DomainName::AcademicAdvising => Arc::new(AcademicAdvising::from_params(&mut p, spec.instance_seed)?),
        DomainName::TriangleTireworld => Arc::new(TriangleTireworld::from_params(&mut p)?),
    };
    p.finish(spec.name)?;
    Ok(model)
}

/// Typed access to a parameter map; records which keys were consumed so that
/// leftovers can be rejected.
pub(crate) struct Params<'a> {
    map: &'a BTreeMap<String, Value>,
    used: BTreeSet<&'static str>,
}

impl<'a> Params<'a> {
    pub(crate) fn new(map: &'a BTreeMap<String, Value>) -> Self {
        Params { map, used: BTreeSet::new() }
    }

    pub(crate) fn f64(&mut self, key: &'static str, default: f64) -> Result<f64> {
        self.used.insert(key);
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v.as_f64().ok_or_else(|| Error::Config(format!("parameter '{key}' must be a number"))),
        }
    }

    pub(crate) fn prob(&mut self, key: &'static str, default: f64) -> Result<f64> {
        let p = self.f64(key, default)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("parameter '{key}' = {p} is not in [0, 1]")));
        }
        Ok(p)
    }

    pub(crate) fn size(&mut self, key: &'static str, default: usize) -> Result<usize> {
        self.used.insert(key);
        let v = match self.map.get(key) {
            None => default,
            Some(v) => {
                v.as_u64().ok_or_else(|| Error::Config(format!("parameter '{key}' must be a non-negative integer")))?
                    as usize
            }
        };
        Ok(v)
    }

    pub(crate) fn positive(&mut self, key: &'static str, default: usize) -> Result<usize> {
        let v = self.size(key, default)?;
        if v == 0 {
            return Err(Error::Config(format!("parameter '{key}' must be at least 1")));
        }
        Ok(v)
    }

    pub(crate) fn string(&mut self, key: &'static str, default: &str) -> Result<String> {
        self.used.insert(key);
        match self.map.get(key) {
            None => Ok(default.to_string()),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(Error::Config(format!("parameter '{key}' must be a string"))),
        }
    }

    pub(crate) fn finish(self, name: DomainName) -> Result<()> {
        for key in self.map.keys() {
            if !self.used.contains(key.as_str()) {
                return Err(Error::Config(format!("unknown parameter '{key}' for {name}")));
            }
        }
        Ok(())
    }
}
