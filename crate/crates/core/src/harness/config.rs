use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::abstraction::{AbstractionParams, NonExpandedMode};
use crate::domains::{DomainName, DomainSpec};
use crate::dropping::{CadRule, DropPolicy};
use crate::error::{Error, Result};
use crate::search::{Recommend, SearchConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Mcts,
    Oga,
    OgaIaad,
    OgaIsd,
    OgaCad,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] =
        [Algorithm::Mcts, Algorithm::Oga, Algorithm::OgaIaad, Algorithm::OgaIsd, Algorithm::OgaCad];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Mcts => "mcts",
            Algorithm::Oga => "oga",
            Algorithm::OgaIaad => "oga_iaad",
            Algorithm::OgaIsd => "oga_isd",
            Algorithm::OgaCad => "oga_cad",
        }
    }

    pub fn uses_abstraction(&self) -> bool {
        *self != Algorithm::Mcts
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm '{s}'")))
    }
}

/// Rollout noise setting. `High` runs one playout to the horizon; `Low`
/// averages ten playouts of a per-domain length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    #[default]
    High,
    Low,
}

impl VarianceMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            VarianceMode::High => "high",
            VarianceMode::Low => "low",
        }
    }
}

impl std::str::FromStr for VarianceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "high" => Ok(VarianceMode::High),
            "low" => Ok(VarianceMode::Low),
            _ => Err(Error::Config(format!("unknown variance mode '{s}'"))),
        }
    }
}

pub const LOW_VARIANCE_REPEATS: u32 = 10;

/// Tuned exploration constants, low-variance rollout length and reward
/// threshold grid of one domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainDefaults {
    pub lambda_high: f64,
    pub lambda_low: f64,
    pub rollout_low: u32,
    pub eps_a_grid: &'static [f64],
}

pub fn domain_defaults(name: DomainName) -> DomainDefaults {
    let (lambda_high, lambda_low, rollout_low, eps_a_grid): (f64, f64, u32, &'static [f64]) = match name {
        DomainName::Sysadmin => (2.0, 4.0, 5, &[0.0, 1.0, 2.0]),
        DomainName::GameOfLife => (1.0, 2.0, 5, &[0.0, 1.0, 2.0]),
        DomainName::AcademicAdvising => (4.0, 8.0, 20, &[0.0]),
        DomainName::Navigation => (8.0, 1.0, 20, &[0.0]),
        DomainName::Racetrack => (4.0, 0.25, 20, &[0.0]),
        DomainName::SailingWind => (2.0, 0.5, 10, &[0.0, 1.0, 2.0]),
        DomainName::TriangleTireworld => (2.0, 4.0, 20, &[0.0]),
    };
    DomainDefaults { lambda_high, lambda_low, rollout_low, eps_a_grid }
}

/// Reward threshold; infinite means every reward gap is accepted.
/// Reads a number or one of the strings `"max"`, `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsA(pub f64);

impl EpsA {
    pub const MAX: EpsA = EpsA(f64::INFINITY);
}

impl std::str::FromStr for EpsA {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" | "inf" | "infinity" => Ok(EpsA::MAX),
            _ => s.parse::<f64>().map(EpsA).map_err(|_| Error::Config(format!("bad eps_a '{s}'"))),
        }
    }
}

impl fmt::Display for EpsA {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            f.write_str("max")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for EpsA {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("max")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for EpsA {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(EpsA(x)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

fn default_horizon() -> u32 {
    50
}

fn default_gamma() -> f64 {
    1.0
}

fn default_episodes() -> u64 {
    1000
}

fn default_base_seed() -> u64 {
    42
}

fn default_resamples() -> usize {
    10_000
}

fn default_confidence() -> f64 {
    0.99
}

/// One benchmark configuration. Optional parameters fall back to the domain
/// defaults (λ, rollout length) or to the controller defaults; abstraction and
/// drop parameters may only be given to algorithms that use them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainSpec,
    pub algorithm: Algorithm,
    pub iterations: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_a: Option<EpsA>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<NonExpandedMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_hat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_check: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cad_rule: Option<CadRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recommend: Option<Recommend>,
    #[serde(default = "default_horizon")]
    pub horizon: u32,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub variance: VarianceMode,
    /// Overrides the per-domain playout length of the low-variance mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollout_limit: Option<u32>,
    #[serde(default = "default_episodes")]
    pub episodes: u64,
    #[serde(default = "default_base_seed")]
    pub base_seed: u64,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
}

impl RunConfig {
    pub fn new(domain: DomainSpec, algorithm: Algorithm, iterations: u64) -> Self {
        RunConfig {
            domain,
            algorithm,
            iterations,
            lambda: None,
            eps_a: None,
            eps_t: None,
            mode: None,
            k: None,
            tau: None,
            c_hat: None,
            n_check: None,
            p: None,
            cad_rule: None,
            recommend: None,
            horizon: default_horizon(),
            gamma: default_gamma(),
            variance: VarianceMode::High,
            rollout_limit: None,
            episodes: default_episodes(),
            base_seed: default_base_seed(),
            bootstrap_resamples: default_resamples(),
            confidence: default_confidence(),
            run_id: None,
        }
    }

    pub fn defaults(&self) -> DomainDefaults {
        domain_defaults(self.domain.name)
    }

    pub fn resolved_lambda(&self) -> f64 {
        self.lambda.unwrap_or_else(|| match self.variance {
            VarianceMode::High => self.defaults().lambda_high,
            VarianceMode::Low => self.defaults().lambda_low,
        })
    }

    pub fn abstraction_params(&self) -> Option<AbstractionParams> {
        self.algorithm.uses_abstraction().then(|| AbstractionParams {
            eps_a: self.eps_a.map_or(0.0, |e| e.0),
            eps_t: self.eps_t.unwrap_or(0.0),
            mode: self.mode.unwrap_or_default(),
            recency_k: self.k.unwrap_or(3),
        })
    }

    pub fn drop_policy(&self) -> DropPolicy {
        match self.algorithm {
            Algorithm::Mcts | Algorithm::Oga => DropPolicy::None,
            Algorithm::OgaIaad => {
                let DropPolicy::Iaad { tau, c_hat, n_check } = DropPolicy::DEFAULT_IAAD else { unreachable!() };
                DropPolicy::Iaad {
                    tau: self.tau.unwrap_or(tau),
                    c_hat: self.c_hat.unwrap_or(c_hat),
                    n_check: self.n_check.unwrap_or(n_check),
                }
            }
            Algorithm::OgaIsd => {
                let DropPolicy::Isd { tau } = DropPolicy::DEFAULT_ISD else { unreachable!() };
                DropPolicy::Isd { tau: self.tau.unwrap_or(tau) }
            }
            Algorithm::OgaCad => {
                let DropPolicy::Cad { p, rule } = DropPolicy::DEFAULT_CAD else { unreachable!() };
                DropPolicy::Cad { p: self.p.unwrap_or(p), rule: self.cad_rule.unwrap_or(rule) }
            }
        }
    }

    /// Planner settings for every decision of an episode.
    pub fn search_config(&self) -> SearchConfig {
        let (rollout_repeats, rollout_limit) = match self.variance {
            VarianceMode::High => (1, self.rollout_limit),
            VarianceMode::Low => {
                (LOW_VARIANCE_REPEATS, Some(self.rollout_limit.unwrap_or(self.defaults().rollout_low)))
            }
        };
        SearchConfig {
            iterations: self.iterations,
            lambda: self.resolved_lambda(),
            horizon: self.horizon,
            rollout_repeats,
            rollout_limit,
            abstraction: self.abstraction_params(),
            drop: self.drop_policy(),
            recommend: self.recommend.unwrap_or_default(),
            check_invariants: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma != 1.0 {
            return Err(Error::Config(format!("gamma = {}; only undiscounted returns are supported", self.gamma)));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be at least 1".into()));
        }
        let abstraction_given = self.eps_a.is_some() || self.eps_t.is_some() || self.mode.is_some() || self.k.is_some();
        if abstraction_given && !self.algorithm.uses_abstraction() {
            return Err(Error::Config("mcts takes no abstraction parameters".into()));
        }
        let allowed: &[&str] = match self.algorithm {
            Algorithm::Mcts | Algorithm::Oga => &[],
            Algorithm::OgaIaad => &["tau", "c_hat", "n_check"],
            Algorithm::OgaIsd => &["tau"],
            Algorithm::OgaCad => &["p", "cad_rule"],
        };
        let given = [
            ("tau", self.tau.is_some()),
            ("c_hat", self.c_hat.is_some()),
            ("n_check", self.n_check.is_some()),
            ("p", self.p.is_some()),
            ("cad_rule", self.cad_rule.is_some()),
        ];
        if let Some((name, _)) = given.iter().find(|(n, set)| *set && !allowed.contains(n)) {
            return Err(Error::Config(format!("{} takes no '{name}' parameter", self.algorithm)));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::Config(format!("confidence {} must lie in (0, 1)", self.confidence)));
        }
        if self.bootstrap_resamples < 1000 {
            return Err(Error::Config("at least 1000 bootstrap resamples are required".into()));
        }
        self.search_config().validate()
    }

    /// Config as a single JSON line, used to group runs and in summaries.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("run config serializes")
    }
}
