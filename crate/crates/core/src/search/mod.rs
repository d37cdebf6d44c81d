//! UCT on the layered search DAG.
//!
//! Each decision builds a fresh tree and runs a fixed number of iterations of
//! select, expand, rollout and backup. The exploration constant is `lambda`
//! times the standard deviation of the Q-node means currently in the tree.
//! With an abstraction configured, the tree policy reads class aggregates
//! instead of a Q node's own statistics, subject to the drop policy.

pub mod tree;

use std::time::{Duration, Instant};

use rand::Rng;

use crate::abstraction::{AbstractionParams, LayerCounts, Partition};
use crate::dropping::{
    cad_radius, cad_should_drop, collect_drop_stats, compression_rate, iaad_decide, isd_active_abstraction,
    CompressionStats, DropPolicy, DropStats,
};
use crate::error::{Error, Result};
use crate::mdp::{Action, MdpModel, SimRng, State};
use tree::{QId, SearchTree, StateId, ROOT};

/// How the root action is chosen once the iterations are spent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recommend {
    /// Highest own mean; ties to more visits, then the lower action index.
    MaxMean,
    /// Most visits; ties to the higher mean, then the lower action index.
    MaxVisits,
    /// Highest mean as UCB sees it: class aggregates for classed, undropped
    /// children. Ties as in `MaxMean`. Without abstraction this is `MaxMean`.
    #[default]
    Ucb,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    pub iterations: u64,
    pub lambda: f64,
    pub horizon: u32,
    /// Playouts averaged per rollout.
    pub rollout_repeats: u32,
    /// Maximum playout length; `None` runs to the horizon.
    pub rollout_limit: Option<u32>,
    pub abstraction: Option<AbstractionParams>,
    pub drop: DropPolicy,
    pub recommend: Recommend,
    /// Check tree and partition invariants after every iteration (slow).
    pub check_invariants: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            iterations: 1000,
            lambda: 1.0,
            horizon: 50,
            rollout_repeats: 1,
            rollout_limit: None,
            abstraction: None,
            drop: DropPolicy::None,
            recommend: Recommend::Ucb,
            check_invariants: false,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda = {} must be positive", self.lambda)));
        }
        if self.rollout_repeats == 0 {
            return Err(Error::Config("rollout repeats must be at least 1".into()));
        }
        if let Some(p) = &self.abstraction {
            p.validate()?;
        } else if self.drop != DropPolicy::None {
            return Err(Error::Config("a drop policy needs an abstraction".into()));
        }
        self.drop.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanDiagnostics {
    pub iterations: u64,
    pub elapsed: Duration,
    pub state_nodes: usize,
    pub q_nodes: usize,
    pub compression: CompressionStats,
    pub drops: DropStats,
    /// Iteration at which IAAD or ISD switched the abstraction off.
    pub abstraction_stopped_at: Option<u64>,
    /// Live classes per layer of the final partition (empty without abstraction).
    pub layer_classes: Vec<LayerCounts>,
}

/// One decision's search: the tree, its abstraction and controller state.
pub struct Search<'a> {
    model: &'a dyn MdpModel,
    cfg: &'a SearchConfig,
    pub tree: SearchTree,
    pub partition: Option<Partition>,
    active: bool,
    stopped_at: Option<u64>,
}

impl<'a> Search<'a> {
    pub fn new(model: &'a dyn MdpModel, root: State, depth: u32, cfg: &'a SearchConfig) -> Result<Self> {
        cfg.validate()?;
        model.validate(&root)?;
        if depth >= cfg.horizon || model.is_terminal(&root) {
            return Err(Error::Contract("plan called on a terminal or horizon state".into()));
        }
        let mut tree = SearchTree::new(model, root, depth, cfg.horizon);
        let mut partition = cfg.abstraction.map(Partition::new);
        let mut active = partition.is_some();
        let mut stopped_at = None;
        if let DropPolicy::Isd { tau } = cfg.drop {
            if !isd_active_abstraction(0, cfg.iterations, tau) {
                active = false;
                stopped_at = Some(0);
            }
        }
        if active {
            partition.as_mut().unwrap().derive_state(&mut tree, ROOT);
        }
        Ok(Search { model, cfg, tree, partition, active, stopped_at })
    }

    /// The partition while it is maintained; `None` once dropped.
    pub fn live_partition(&self) -> Option<&Partition> {
        if self.active {
            self.partition.as_ref()
        } else {
            None
        }
    }

    /// True while the abstraction is maintained and read by the tree policy.
    pub fn abstraction_active(&self) -> bool {
        self.active
    }

    fn controller_hook(&mut self) {
        if !self.active {
            return;
        }
        let it = self.tree.iterations;
        let n = self.cfg.iterations;
        let stop = match self.cfg.drop {
            DropPolicy::Iaad { tau, c_hat, n_check } => {
                let p = self.partition.as_ref().unwrap();
                let c = CompressionStats::from_counts(
                    self.tree.num_states(),
                    p.num_state_classes(),
                    self.tree.num_qnodes(),
                    p.num_q_classes(),
                )
                .c;
                iaad_decide(it, n, c, tau, c_hat, n_check, false)
            }
            DropPolicy::Isd { tau } => !isd_active_abstraction(it, n, tau),
            _ => false,
        };
        if stop {
            self.active = false;
            self.stopped_at = Some(it);
        }
    }

    fn node_for(&mut self, state: State, depth: u32) -> StateId {
        let (id, fresh) = self.tree.get_or_insert(self.model, state, depth);
        if fresh && self.active {
            self.partition.as_mut().unwrap().derive_state(&mut self.tree, id);
        }
        id
    }

    /// Run one select/expand/rollout/backup iteration.
    pub fn iterate(&mut self, rng: &mut SimRng) {
        self.controller_hook();
        let c = self.cfg.lambda * self.tree.sigma();
        let mut path: Vec<(QId, StateId)> = Vec::new();
        let mut s = ROOT;
        let leaf_value;
        loop {
            let node = self.tree.state(s);
            if node.terminal {
                leaf_value = 0.0;
                break;
            }
            let depth = node.depth();
            if !node.fully_expanded() {
                let q = self.tree.expand(self.model, s);
                self.tree.states[s as usize].visits += 1;
                let next = self.model.sample_next(&self.tree.state(s).key.state, self.tree.q(q).action, rng);
                let child = self.node_for(next, depth + 1);
                path.push((q, child));
                let abs_depth = self.tree.root_depth + depth + 1;
                leaf_value = rollout(self.model, &self.tree.state(child).key.state, abs_depth, self.cfg, rng);
                break;
            }
            let use_abs = if self.active { self.partition.as_ref() } else { None };
            if let (Some(p), DropPolicy::Cad { p: conf, rule }) = (use_abs, self.cfg.drop) {
                refresh_cad_flags(&mut self.tree, p, s, conf, rule);
            }
            let q = select_child_ucb(&self.tree, use_abs, s, c);
            self.tree.states[s as usize].visits += 1;
            let next = self.model.sample_next(&self.tree.state(s).key.state, self.tree.q(q).action, rng);
            let child = self.node_for(next, depth + 1);
            path.push((q, child));
            s = child;
        }
        self.backpropagate(&path, leaf_value, rng);
        self.tree.iterations += 1;
        if self.cfg.check_invariants {
            self.tree.check_consistency().expect("tree invariant");
            if let Some(p) = &self.partition {
                p.validate(&self.tree, self.active).expect("partition invariant");
            }
        }
    }

    /// Back up `leaf_value` along `path` (root first), then fire abstraction
    /// updates for Q nodes whose recency reached K or that saw a new successor.
    pub fn backpropagate(&mut self, path: &[(QId, StateId)], leaf_value: f64, rng: &mut SimRng) {
        let mut g = leaf_value;
        for &(q, succ) in path.iter().rev() {
            g += self.tree.q(q).reward;
            let fresh = self.tree.record(q, succ, g);
            if self.active {
                let p = self.partition.as_mut().unwrap();
                p.record_visit(&self.tree, q, g);
                let node = self.tree.q(q);
                if fresh || node.class.is_none() || node.recency >= p.params.recency_k {
                    p.oga_update_qnode(&mut self.tree, q, rng);
                }
            }
        }
    }

    pub fn diagnostics(&self, elapsed: Duration) -> PlanDiagnostics {
        let (compression, drops, layer_classes) = match &self.partition {
            Some(p) => (compression_rate(&self.tree, p), collect_drop_stats(&self.tree, p), p.layer_counts()),
            None => (CompressionStats::trivial(&self.tree), DropStats::default(), Vec::new()),
        };
        PlanDiagnostics {
            iterations: self.tree.iterations,
            elapsed,
            state_nodes: self.tree.num_states(),
            q_nodes: self.tree.num_qnodes(),
            compression,
            drops,
            abstraction_stopped_at: self.stopped_at,
            layer_classes,
        }
    }
}

/// Plan one decision from `root`, which is `depth` steps into the episode.
pub fn plan(
    model: &dyn MdpModel,
    root: State,
    depth: u32,
    cfg: &SearchConfig,
    rng: &mut SimRng,
) -> Result<(Action, PlanDiagnostics)> {
    let start = Instant::now();
    let mut search = Search::new(model, root, depth, cfg)?;
    for _ in 0..cfg.iterations {
        search.iterate(rng);
    }
    let action = recommend_root_action(&search.tree, search.live_partition(), cfg.recommend)?;
    let elapsed = start.elapsed();
    Ok((action, search.diagnostics(elapsed)))
}

/// Recompute the CAD flag of every classed child of `s` in a class of two or more.
pub fn refresh_cad_flags(
    tree: &mut SearchTree,
    partition: &Partition,
    s: StateId,
    p: f64,
    rule: crate::dropping::CadRule,
) {
    for i in 0..tree.state(s).children.len() {
        let q = tree.state(s).children[i];
        let Some(class) = tree.q(q).class.and_then(|c| partition.qclass(c)) else {
            continue;
        };
        if class.members.len() < 2 {
            tree.qnodes[q as usize].cad_dropped = false;
            continue;
        }
        let node = tree.q(q);
        let r = cad_radius(node, p);
        let drop = cad_should_drop(node.mean(), r, class.mean(), rule);
        tree.qnodes[q as usize].cad_dropped = drop;
    }
}

/// UCB choice among the children of the fully expanded state `s`.
///
/// With `partition`, a classed child that is not CAD-dropped is scored with its
/// class aggregates. The log term always uses the parent's own visit count.
/// Unvisited children score infinity. Ties go to the child with fewer own
/// visits, then to the lowest action index; members of one class always tie,
/// and this lets each of them be revisited and reclassified.
pub fn select_child_ucb(tree: &SearchTree, partition: Option<&Partition>, s: StateId, c: f64) -> QId {
    let node = tree.state(s);
    let log_n = (node.visits.max(1) as f64).ln();
    let mut best = (f64::NEG_INFINITY, node.children[0]);
    for &q in &node.children {
        let qn = tree.q(q);
        let (n, sum) = match (partition, qn.class) {
            (Some(p), Some(cid)) if !qn.cad_dropped => {
                let class = p.qclass(cid).expect("live class");
                (class.visits, class.value_sum)
            }
            _ => (qn.visits, qn.value_sum),
        };
        let score = if n == 0 {
            f64::INFINITY
        } else {
            let nf = n as f64;
            sum / nf + c * (log_n / nf).sqrt()
        };
        if score > best.0 || (score == best.0 && qn.visits < tree.q(best.1).visits) {
            best = (score, q);
        }
    }
    best.1
}

/// Population standard deviation of the own means of all visited Q nodes.
pub fn compute_sigma(tree: &SearchTree) -> f64 {
    let means: Vec<f64> = tree.qnodes.iter().filter(|q| q.visits > 0).map(|q| q.mean()).collect();
    if means.len() < 2 {
        return 0.0;
    }
    let n = means.len() as f64;
    let mu = means.iter().sum::<f64>() / n;
    (means.iter().map(|m| (m - mu) * (m - mu)).sum::<f64>() / n).sqrt()
}

/// Mean return of `cfg.rollout_repeats` uniformly random playouts from `state`,
/// which sits at absolute depth `depth`.
pub fn rollout(model: &dyn MdpModel, state: &State, depth: u32, cfg: &SearchConfig, rng: &mut SimRng) -> f64 {
    if depth >= cfg.horizon || model.is_terminal(state) {
        return 0.0;
    }
    let steps = (cfg.horizon - depth).min(cfg.rollout_limit.unwrap_or(u32::MAX));
    if steps == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for _ in 0..cfg.rollout_repeats {
        let mut s = state.clone();
        for _ in 0..steps {
            if model.is_terminal(&s) {
                break;
            }
            let actions = model.actions(&s);
            let a = actions[rng.gen_range(0..actions.len())];
            total += model.reward(&s, a);
            s = model.sample_next(&s, a, rng);
        }
    }
    total / cfg.rollout_repeats as f64
}

/// Root action by `rule` over the visited root children.
pub fn recommend_root_action(tree: &SearchTree, partition: Option<&Partition>, rule: Recommend) -> Result<Action> {
    let mut best: Option<(QId, f64, u64)> = None;
    for &q in &tree.root().children {
        let node = tree.q(q);
        if node.visits == 0 {
            continue;
        }
        let (mean, visits) = match (rule, partition, node.class) {
            (Recommend::Ucb, Some(p), Some(cid)) if !node.cad_dropped => {
                let class = p.qclass(cid).expect("live class");
                (class.value_sum / class.visits.max(1) as f64, node.visits)
            }
            _ => (node.mean(), node.visits),
        };
        let better = match best {
            None => true,
            Some((_, bm, bv)) => match rule {
                Recommend::MaxMean | Recommend::Ucb => mean > bm || (mean == bm && visits > bv),
                Recommend::MaxVisits => visits > bv || (visits == bv && mean > bm),
            },
        };
        if better {
            best = Some((q, mean, visits));
        }
    }
    best.map(|(q, _, _)| tree.q(q).action).ok_or_else(|| Error::Contract("root has no visited child".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::NonExpandedMode;
    use crate::domains::fixtures::{bernoulli_bandit, two_state_chain, TableAction, TableMdp};
    use crate::domains::{build_domain, DomainName, DomainSpec};
    use crate::mdp::seeded_rng;

    fn one_step(rewards: &[f64]) -> TableMdp {
        TableMdp::new(
            "one_step",
            vec![(0, 1.0)],
            vec![false, true],
            vec![rewards.iter().map(|&r| TableAction { reward: r, next: vec![(1, 1.0)] }).collect(), Vec::new()],
        )
        .unwrap()
    }

    #[test]
    fn single_iteration_structure() {
        let m = two_state_chain();
        let cfg = SearchConfig { iterations: 1, horizon: 5, ..Default::default() };
        let mut search = Search::new(&m, TableMdp::state(0), 0, &cfg).unwrap();
        search.iterate(&mut seeded_rng(0, 1));
        assert_eq!(search.tree.num_qnodes(), 1);
        assert_eq!(search.tree.num_states(), 2);
        let q = search.tree.q(0);
        // reward 1 at the root plus a 4-step rollout of reward 1
        assert_eq!((q.visits, q.value_sum), (1, 5.0));
        search.tree.check_consistency().unwrap();
    }

    #[test]
    fn dominant_arm_wins() {
        let m = one_step(&[1.0, 0.0]);
        let cfg = SearchConfig { iterations: 100, ..Default::default() };
        let (a, _) = plan(&m, TableMdp::state(0), 0, &cfg, &mut seeded_rng(1, 1)).unwrap();
        assert_eq!(a, Action(0));
    }

    #[test]
    fn ucb_examples() {
        let m = one_step(&[0.2, 0.9]);
        let cfg = SearchConfig { iterations: 2, horizon: 1, ..Default::default() };
        let mut search = Search::new(&m, TableMdp::state(0), 0, &cfg).unwrap();
        let mut rng = seeded_rng(0, 1);
        search.iterate(&mut rng);
        search.iterate(&mut rng);
        assert_eq!(select_child_ucb(&search.tree, None, ROOT, 0.0), 1);
        assert!((compute_sigma(&search.tree) - 0.35).abs() < 1e-12);
        assert!((search.tree.sigma() - 0.35).abs() < 1e-12);
    }

    #[test]
    fn unvisited_child_is_selected() {
        let m = one_step(&[5.0, 0.0]);
        let cfg = SearchConfig { iterations: 2, horizon: 1, ..Default::default() };
        let mut search = Search::new(&m, TableMdp::state(0), 0, &cfg).unwrap();
        let mut rng = seeded_rng(0, 1);
        search.iterate(&mut rng);
        search.iterate(&mut rng);
        search.tree.qnodes[1].visits = 0;
        search.tree.qnodes[1].value_sum = 0.0;
        assert_eq!(select_child_ucb(&search.tree, None, ROOT, 1.0), 1);
    }

    #[test]
    fn rollout_examples() {
        let m = two_state_chain();
        let cfg = SearchConfig { horizon: 5, ..Default::default() };
        let mut rng = seeded_rng(0, 1);
        assert_eq!(rollout(&m, &TableMdp::state(0), 0, &cfg, &mut rng), 5.0);
        let limited = SearchConfig { rollout_limit: Some(0), ..cfg.clone() };
        assert_eq!(rollout(&m, &TableMdp::state(0), 0, &limited, &mut rng), 0.0);
        assert_eq!(rollout(&m, &TableMdp::state(0), 5, &cfg, &mut rng), 0.0);
    }

    #[test]
    fn recommendation_rules() {
        let m = one_step(&[1.0, 0.5]);
        let cfg = SearchConfig { iterations: 2, horizon: 1, ..Default::default() };
        let mut search = Search::new(&m, TableMdp::state(0), 0, &cfg).unwrap();
        let mut rng = seeded_rng(0, 1);
        search.iterate(&mut rng);
        search.iterate(&mut rng);
        search.tree.qnodes[0].visits = 10;
        search.tree.qnodes[0].value_sum = 10.0;
        search.tree.qnodes[1].visits = 90;
        search.tree.qnodes[1].value_sum = 45.0;
        assert_eq!(recommend_root_action(&search.tree, None, Recommend::MaxMean).unwrap(), Action(0));
        assert_eq!(recommend_root_action(&search.tree, None, Recommend::MaxVisits).unwrap(), Action(1));
        search.tree.qnodes[1].value_sum = 90.0;
        assert_eq!(recommend_root_action(&search.tree, None, Recommend::MaxMean).unwrap(), Action(1));
    }

    #[test]
    fn ucb_recommendation_reads_class_means() {
        let m = one_step(&[1.0, 1.0]);
        let cfg = SearchConfig {
            iterations: 2,
            horizon: 1,
            abstraction: Some(AbstractionParams::default()),
            ..Default::default()
        };
        let mut search = Search::new(&m, TableMdp::state(0), 0, &cfg).unwrap();
        let mut rng = seeded_rng(0, 1);
        search.iterate(&mut rng);
        search.iterate(&mut rng);
        assert_eq!(search.tree.qnodes[0].class, search.tree.qnodes[1].class);
        search.tree.qnodes[0].value_sum = 5.0;
        search.tree.qnodes[1].visits = 3;
        search.tree.qnodes[1].value_sum = 3.0;
        let p = search.partition.as_ref();
        assert_eq!(recommend_root_action(&search.tree, p, Recommend::MaxMean).unwrap(), Action(0));
        // equal class means, so the more visited member wins
        assert_eq!(recommend_root_action(&search.tree, p, Recommend::Ucb).unwrap(), Action(1));
        assert_eq!(recommend_root_action(&search.tree, None, Recommend::Ucb).unwrap(), Action(0));
    }

    #[test]
    fn backup_arithmetic() {
        let m = one_step(&[2.0]);
        let cfg = SearchConfig { iterations: 1, horizon: 1, ..Default::default() };
        let mut search = Search::new(&m, TableMdp::state(0), 0, &cfg).unwrap();
        let mut rng = seeded_rng(0, 1);
        let q = search.tree.expand(&m, ROOT);
        let (leaf, _) = search.tree.get_or_insert(&m, TableMdp::state(1), 1);
        search.tree.states[0].visits += 1;
        search.backpropagate(&[(q, leaf)], 3.0, &mut rng);
        let node = search.tree.q(q);
        assert_eq!((node.visits, node.value_sum, node.value_sq_sum), (1, 5.0, 25.0));
    }

    #[test]
    fn transpositions_share_nodes() {
        let m = build_domain(&DomainSpec::small(DomainName::Navigation)).unwrap();
        let cfg = SearchConfig { iterations: 500, horizon: 10, ..Default::default() };
        let mut rng = seeded_rng(4, 1);
        let root = m.initial_state(&mut rng);
        let mut search = Search::new(m.as_ref(), root, 0, &cfg).unwrap();
        for _ in 0..cfg.iterations {
            search.iterate(&mut rng);
        }
        search.tree.check_consistency().unwrap();
        // far fewer distinct (state, depth) nodes than visited edges
        let edges: u64 = search.tree.qnodes.iter().map(|q| q.successors.len() as u64).sum();
        assert!((search.tree.num_states() as u64) < edges);
    }

    #[test]
    fn abstraction_invariants_hold_during_search() {
        for (name, mode) in
            [(DomainName::Sysadmin, NonExpandedMode::Single), (DomainName::Navigation, NonExpandedMode::Group)]
        {
            let m = build_domain(&DomainSpec::small(name)).unwrap();
            for params in [
                AbstractionParams::new(0.0, 0.0, mode),
                AbstractionParams::new(1.0, 0.4, mode),
                AbstractionParams::coarsest(),
            ] {
                let cfg = SearchConfig {
                    iterations: 300,
                    horizon: 8,
                    abstraction: Some(params),
                    check_invariants: true,
                    ..Default::default()
                };
                let mut rng = seeded_rng(8, 1);
                let root = m.initial_state(&mut rng);
                plan(m.as_ref(), root, 0, &cfg, &mut rng).unwrap();
            }
        }
    }

    #[test]
    fn bernoulli_regret() {
        let m = bernoulli_bandit(&[0.8, 0.2]);
        let cfg = SearchConfig { iterations: 10_000, horizon: 2, lambda: 1.0, ..Default::default() };
        let mut rng = seeded_rng(3, 1);
        let mut search = Search::new(&m, TableMdp::state(0), 0, &cfg).unwrap();
        for _ in 0..cfg.iterations {
            search.iterate(&mut rng);
        }
        let best = search.tree.q(search.tree.root().children[0]).visits as f64;
        assert!(best / cfg.iterations as f64 > 0.9);
    }
}
