//! Approximate state-action abstractions on the local layered tree.
//!
//! Two Q nodes of one layer are similar when their rewards differ by at most
//! `eps_a` and their empirical successor distributions, summed per abstract
//! state class of the next layer, are within `eps_t` in L1 distance. States are
//! equivalent when their sets of child Q classes coincide. [`Partition`] keeps
//! this grouping up to date incrementally during search; [`compute_asap_fixpoint`]
//! rebuilds it from scratch on a [`TreeSnapshot`].

mod fixpoint;
mod partition;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fixpoint::{compute_asap_fixpoint, CanonicalPartition, SnapPartition, SnapQ, SnapState, TreeSnapshot};
pub use partition::{abstract_stats, LayerCounts, Partition, QClass, StateClass, StateClassKind};

/// How states that are not fully expanded are initially grouped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NonExpandedMode {
    /// Each such state is its own class.
    #[default]
    Single,
    /// Such states join the first expanded class of their layer that offers all
    /// of their child Q classes, or else one shared class per layer.
    Group,
}

impl std::str::FromStr for NonExpandedMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(NonExpandedMode::Single),
            "group" => Ok(NonExpandedMode::Group),
            _ => Err(Error::Config(format!("unknown mode '{s}'"))),
        }
    }
}

impl std::fmt::Display for NonExpandedMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NonExpandedMode::Single => "single",
            NonExpandedMode::Group => "group",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AbstractionParams {
    pub eps_a: f64,
    pub eps_t: f64,
    pub mode: NonExpandedMode,
    /// Visits between abstraction updates of one Q node.
    pub recency_k: u32,
}

impl Default for AbstractionParams {
    fn default() -> Self {
        AbstractionParams { eps_a: 0.0, eps_t: 0.0, mode: NonExpandedMode::Single, recency_k: 3 }
    }
}

impl AbstractionParams {
    pub fn new(eps_a: f64, eps_t: f64, mode: NonExpandedMode) -> Self {
        AbstractionParams { eps_a, eps_t, mode, ..Default::default() }
    }

    /// The coarsest setting: every pair of Q nodes in a layer is similar.
    pub fn coarsest() -> Self {
        Self::new(f64::INFINITY, 2.0, NonExpandedMode::Group)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps_a.is_nan() || self.eps_a < 0.0 {
            return Err(Error::Config(format!("eps_a = {} must be >= 0", self.eps_a)));
        }
        if !(0.0..=2.0).contains(&self.eps_t) {
            return Err(Error::Config(format!("eps_t = {} must lie in [0, 2]", self.eps_t)));
        }
        if self.recency_k == 0 {
            return Err(Error::Config("recency K must be at least 1".into()));
        }
        Ok(())
    }
}

/// L1 distance between two empirical successor distributions after summing
/// probability mass per class.
///
/// Each input lists `(class, count)` entries, possibly repeating a class; the
/// distribution is the counts normalized by their total. The sum is formed on
/// integer cross products, so identical class distributions give exactly 0.
pub fn transition_distance(a: &[(u32, u64)], b: &[(u32, u64)]) -> f64 {
    let na: u64 = a.iter().map(|e| e.1).sum();
    let nb: u64 = b.iter().map(|e| e.1).sum();
    if na == 0 || nb == 0 {
        return if na == nb { 0.0 } else { 2.0 };
    }
    let mut merged: Vec<(u32, i128, i128)> = Vec::with_capacity(a.len() + b.len());
    merged.extend(a.iter().map(|&(c, k)| (c, k as i128, 0)));
    merged.extend(b.iter().map(|&(c, k)| (c, 0, k as i128)));
    merged.sort_unstable_by_key(|e| e.0);
    let (na, nb) = (na as i128, nb as i128);
    let mut numer: i128 = 0;
    let mut i = 0;
    while i < merged.len() {
        let class = merged[i].0;
        let (mut ca, mut cb) = (0i128, 0i128);
        while i < merged.len() && merged[i].0 == class {
            ca += merged[i].1;
            cb += merged[i].2;
            i += 1;
        }
        numer += (ca * nb - cb * na).abs();
    }
    numer as f64 / (na as f64 * nb as f64)
}

/// Similarity of two Q nodes given their rewards and transition distance.
/// The distance is the larger of the reward gap and `f`.
pub fn pair_similar(r1: f64, r2: f64, f: f64, params: &AbstractionParams) -> (bool, f64) {
    let dr = (r1 - r2).abs();
    (dr <= params.eps_a && f <= params.eps_t, dr.max(f))
}
