//! Controllers that decide when the search stops trusting the abstraction,
//! plus compression and drop-ratio instrumentation.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::abstraction::Partition;
use crate::error::{Error, Result};
use crate::search::tree::{QNode, SearchTree};

/// Which side of the confidence interval the CAD test drops on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CadRule {
    /// `r/2 < min(|Qa - (Qo - r)|, |Qa - (Qo + r)|)`, as written. This also
    /// drops when the abstract value sits near the centre of the interval.
    Literal,
    /// Only drop when the abstract value lies more than `r/2` outside the
    /// interval, so an abstraction that agrees with the node is kept.
    #[default]
    OutsideOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum DropPolicy {
    /// Keep the abstraction for the whole search.
    #[default]
    None,
    /// Stop maintaining the abstraction once the compression rate stays low.
    Iaad { tau: f64, c_hat: f64, n_check: u64 },
    /// Abandon the abstraction after a fixed fraction of the iterations.
    Isd { tau: f64 },
    /// Per-node drop decision from a confidence interval on the own Q value.
    Cad { p: f64, rule: CadRule },
}

impl DropPolicy {
    pub const DEFAULT_IAAD: DropPolicy = DropPolicy::Iaad { tau: 0.25, c_hat: 1.01, n_check: 10 };
    pub const DEFAULT_ISD: DropPolicy = DropPolicy::Isd { tau: 0.5 };
    pub const DEFAULT_CAD: DropPolicy = DropPolicy::Cad { p: 0.9, rule: CadRule::OutsideOnly };

    pub fn name(&self) -> &'static str {
        match self {
            DropPolicy::None => "none",
            DropPolicy::Iaad { .. } => "iaad",
            DropPolicy::Isd { .. } => "isd",
            DropPolicy::Cad { .. } => "cad",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fraction = |tau: f64| {
            if (0.0..=1.0).contains(&tau) {
                Ok(())
            } else {
                Err(Error::Config(format!("tau = {tau} must lie in [0, 1]")))
            }
        };
        match *self {
            DropPolicy::None => Ok(()),
            DropPolicy::Iaad { tau, c_hat, n_check } => {
                fraction(tau)?;
                if c_hat.is_nan() || c_hat < 1.0 {
                    return Err(Error::Config(format!("c_hat = {c_hat} must be >= 1")));
                }
                if n_check == 0 {
                    return Err(Error::Config("n_check must be at least 1".into()));
                }
                Ok(())
            }
            DropPolicy::Isd { tau } => fraction(tau),
            DropPolicy::Cad { p, .. } => {
                if (0.0..=1.0).contains(&p) {
                    Ok(())
                } else {
                    Err(Error::Config(format!("p = {p} must lie in [0, 1]")))
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressionStats {
    pub state_nodes: usize,
    pub abstract_state_classes: usize,
    pub q_nodes: usize,
    pub abstract_q_classes: usize,
    pub cs: f64,
    pub ca: f64,
    pub c: f64,
}

impl CompressionStats {
    /// Ratios of node counts to class counts; zero classes count as a ratio of 1.
    pub fn from_counts(state_nodes: usize, state_classes: usize, q_nodes: usize, q_classes: usize) -> Self {
        let ratio = |n: usize, k: usize| if n == 0 || k == 0 { 1.0 } else { n as f64 / k as f64 };
        let cs = ratio(state_nodes, state_classes);
        let ca = ratio(q_nodes, q_classes);
        CompressionStats {
            state_nodes,
            abstract_state_classes: state_classes,
            q_nodes,
            abstract_q_classes: q_classes,
            cs,
            ca,
            c: cs.max(ca),
        }
    }

    pub fn trivial(tree: &SearchTree) -> Self {
        Self::from_counts(tree.num_states(), tree.num_states(), tree.num_qnodes(), tree.num_qnodes())
    }
}

/// Compression of the tree under `partition`. Nodes without a class (created
/// after the abstraction was frozen) count as singleton classes.
pub fn compression_rate(tree: &SearchTree, partition: &Partition) -> CompressionStats {
    let unclassed_s = tree.states.iter().filter(|s| s.class.is_none()).count();
    let unclassed_q = tree.qnodes.iter().filter(|q| q.class.is_none()).count();
    CompressionStats::from_counts(
        tree.num_states(),
        partition.num_state_classes() + unclassed_s,
        tree.num_qnodes(),
        partition.num_q_classes() + unclassed_q,
    )
}

/// Whether IAAD stops the abstraction before iteration `iteration` (0-based).
pub fn iaad_decide(
    iteration: u64,
    total_n: u64,
    c: f64,
    tau: f64,
    c_hat: f64,
    n_check: u64,
    already_stopped: bool,
) -> bool {
    !already_stopped && iteration as f64 >= tau * total_n as f64 && iteration.is_multiple_of(n_check) && c < c_hat
}

/// Whether ISD still uses the abstraction at iteration `iteration` (0-based).
pub fn isd_active_abstraction(iteration: u64, total_n: u64, tau: f64) -> bool {
    (iteration as f64) < (tau * total_n as f64).ceil()
}

/// Two-sided standard normal quantile for confidence `p`.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf((1.0 + p) / 2.0)
}

/// Half-width of the normal-approximation confidence interval of a Q node's
/// mean return at confidence `p`.
pub fn cad_radius(q: &QNode, p: f64) -> f64 {
    radius_from_moments(q.visits, q.value_sum, q.value_sq_sum, p)
}

pub fn radius_from_moments(n: u64, sum: f64, sq_sum: f64, p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if n < 2 || p >= 1.0 {
        return f64::INFINITY;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = (sq_sum / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
    normal_quantile(p) * (var / nf).sqrt()
}

/// The CAD drop test for own value `q_own`, radius `r` and abstract value `q_abs`.
pub fn cad_should_drop(q_own: f64, r: f64, q_abs: f64, rule: CadRule) -> bool {
    if r.is_infinite() {
        return false;
    }
    let near = (q_abs - (q_own - r)).abs().min((q_abs - (q_own + r)).abs());
    match rule {
        CadRule::Literal => r / 2.0 < near,
        CadRule::OutsideOnly => (q_abs - q_own).abs() > r && r / 2.0 < near,
    }
}

/// Ratio of dropped to eligible Q nodes in one layer group; `None` when no Q
/// node of the group belongs to a class with two or more members.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct LayerDrops {
    pub eligible: usize,
    pub dropped: usize,
}

impl LayerDrops {
    pub fn ratio(&self) -> Option<f64> {
        (self.eligible > 0).then(|| self.dropped as f64 / self.eligible as f64)
    }
}

/// Drop counts for Q layers 1, 2 and 3+ (root actions are layer 1).
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct DropStats {
    pub layers: [LayerDrops; 3],
}

impl DropStats {
    pub fn ratios(&self) -> [Option<f64>; 3] {
        [self.layers[0].ratio(), self.layers[1].ratio(), self.layers[2].ratio()]
    }
}

pub fn collect_drop_stats(tree: &SearchTree, partition: &Partition) -> DropStats {
    let mut stats = DropStats::default();
    for (i, q) in tree.qnodes.iter().enumerate() {
        if partition.class_size(tree, i as u32) < 2 {
            continue;
        }
        let layer = (tree.state(q.parent).depth() as usize).min(2);
        stats.layers[layer].eligible += 1;
        if q.cad_dropped {
            stats.layers[layer].dropped += 1;
        }
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compression_examples() {
        assert_eq!(CompressionStats::from_counts(4, 4, 6, 6).c, 1.0);
        assert_eq!(CompressionStats::from_counts(10, 5, 8, 8).c, 2.0);
        assert_eq!(CompressionStats::from_counts(3, 3, 6, 2).c, 3.0);
        assert_eq!(CompressionStats::from_counts(0, 0, 0, 0).c, 1.0);
    }

    #[test]
    fn iaad_examples() {
        assert!(iaad_decide(500, 2000, 1.005, 0.25, 1.01, 10, false));
        assert!(iaad_decide(610, 2000, 1.005, 0.25, 1.01, 10, false));
        assert!(!iaad_decide(605, 2000, 1.005, 0.25, 1.01, 10, false));
        assert!(!iaad_decide(500, 2000, 1.005, 0.25, 1.01, 10, true));
        // before tau * n
        assert!(!iaad_decide(400, 2000, 1.005, 0.25, 1.01, 10, false));
        assert!(!iaad_decide(500, 2000, 1.02, 0.25, 1.01, 10, false));
        for it in 0..2000 {
            assert!(!iaad_decide(it, 2000, 1.0, 0.25, 1.0, 10, false));
            assert!(!iaad_decide(it, 2000, 1.0, 1.0, 1.01, 10, false));
        }
    }

    #[test]
    fn isd_examples() {
        assert!(isd_active_abstraction(999, 2000, 0.5));
        assert!(!isd_active_abstraction(1000, 2000, 0.5));
        assert!((0..2000).all(|i| isd_active_abstraction(i, 2000, 1.0)));
        assert!((0..2000).all(|i| !isd_active_abstraction(i, 2000, 0.0)));
    }

    #[test]
    fn radius_examples() {
        assert_eq!(radius_from_moments(2, 4.0, 10.0, 1.0), f64::INFINITY);
        assert_eq!(radius_from_moments(2, 4.0, 10.0, 0.0), 0.0);
        assert_eq!(radius_from_moments(1, 4.0, 16.0, 0.9), f64::INFINITY);
        let r = radius_from_moments(2, 4.0, 10.0, 0.9);
        assert!((r - 1.6448536269514722).abs() < 1e-9, "{r}");
    }

    #[test]
    fn drop_examples() {
        assert!(cad_should_drop(0.0, 2.0, 10.0, CadRule::Literal));
        assert!(!cad_should_drop(0.0, 2.0, 2.0, CadRule::Literal));
        assert!(!cad_should_drop(0.0, f64::INFINITY, 100.0, CadRule::Literal));
        // the printed rule also fires at the centre of the interval
        assert!(cad_should_drop(0.0, 2.0, 0.0, CadRule::Literal));
        assert!(!cad_should_drop(0.0, 2.0, 0.0, CadRule::OutsideOnly));
        assert!(cad_should_drop(0.0, 2.0, 3.5, CadRule::OutsideOnly));
    }

    #[test]
    fn policy_validation() {
        assert!(DropPolicy::DEFAULT_IAAD.validate().is_ok());
        assert!(DropPolicy::Iaad { tau: 0.2, c_hat: 0.5, n_check: 10 }.validate().is_err());
        assert!(DropPolicy::Isd { tau: 1.5 }.validate().is_err());
        assert!(DropPolicy::Cad { p: -0.1, rule: CadRule::Literal }.validate().is_err());
    }
}
