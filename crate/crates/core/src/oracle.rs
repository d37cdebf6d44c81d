//! Exact reference solvers used as ground truth by tests and acceptance runs.

use std::collections::{BTreeSet, HashMap};

use crate::abstraction::{
    pair_similar, transition_distance, AbstractionParams, NonExpandedMode, SnapPartition, TreeSnapshot,
};
use crate::error::{Error, Result};
use crate::mdp::{enumerate_next, legal_actions, Action, LayeredStateKey, MdpModel, State};

pub const DEFAULT_STATE_CAP: usize = 2_000_000;
const MAX_SWEEPS: usize = 1000;

/// Optimal finite-horizon action values over the layered state space reachable
/// from one root. Depth is counted from that root.
#[derive(Clone, Debug, Default)]
pub struct QTable {
    pub horizon: u32,
    entries: HashMap<LayeredStateKey, Vec<(Action, f64)>>,
}

impl QTable {
    /// Action values of a non-terminal key; `None` for unknown, terminal or
    /// horizon keys.
    pub fn actions(&self, key: &LayeredStateKey) -> Option<&[(Action, f64)]> {
        self.entries.get(key).map(|v| v.as_slice())
    }

    pub fn q(&self, key: &LayeredStateKey, action: Action) -> Option<f64> {
        self.actions(key)?.iter().find(|e| e.0 == action).map(|e| e.1)
    }

    /// Optimal value; zero for keys without actions.
    pub fn value(&self, key: &LayeredStateKey) -> f64 {
        self.actions(key).map_or(0.0, max_value)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &LayeredStateKey> {
        self.entries.keys()
    }

    /// Largest Bellman residual over all entries, recomputed from the model.
    pub fn bellman_residual(&self, model: &dyn MdpModel) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (key, acts) in &self.entries {
            for &(a, q) in acts {
                let mut target = model.reward(&key.state, a);
                for (next, p) in enumerate_next(model, &key.state, a)? {
                    target += p * self.value(&key.successor(next));
                }
                worst = worst.max((target - q).abs());
            }
        }
        Ok(worst)
    }
}

fn max_value(acts: &[(Action, f64)]) -> f64 {
    acts.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max)
}

/// Backward induction from `root` over `horizon` steps with the default cap.
pub fn value_iteration(model: &dyn MdpModel, root: &State, horizon: u32) -> Result<QTable> {
    value_iteration_capped(model, root, horizon, DEFAULT_STATE_CAP)
}

/// As [`value_iteration`], failing once more than `cap` layered states are reached.
pub fn value_iteration_capped(model: &dyn MdpModel, root: &State, horizon: u32, cap: usize) -> Result<QTable> {
    if !model.supports_enumeration() {
        return Err(Error::Capability(format!("{} does not enumerate transitions", model.name())));
    }
    model.validate(root)?;
    let mut table = QTable { horizon, entries: HashMap::new() };
    if horizon == 0 || model.is_terminal(root) {
        return Ok(table);
    }
    // forward pass: reachable non-terminal states per layer with their transitions
    type Trans = Vec<(Action, f64, Vec<(usize, f64)>)>;
    let mut layers: Vec<Vec<State>> = vec![vec![root.clone()]];
    let mut trans: Vec<Vec<Trans>> = Vec::new();
    let mut total = 1usize;
    for d in 0..horizon as usize {
        let mut next_index: HashMap<State, usize> = HashMap::new();
        let mut next_layer: Vec<State> = Vec::new();
        let mut layer_trans = Vec::with_capacity(layers[d].len());
        for s in &layers[d] {
            let mut st: Trans = Vec::new();
            if !model.is_terminal(s) {
                for a in legal_actions(model, s)? {
                    let succ = enumerate_next(model, s, a)?
                        .into_iter()
                        .map(|(n, p)| {
                            let i = *next_index.entry(n.clone()).or_insert_with(|| {
                                next_layer.push(n);
                                next_layer.len() - 1
                            });
                            (i, p)
                        })
                        .collect();
                    st.push((a, model.reward(s, a), succ));
                }
            }
            layer_trans.push(st);
        }
        total += next_layer.len();
        if total > cap {
            return Err(Error::Resource(format!(
                "{}: more than {cap} layered states within horizon {horizon}",
                model.name()
            )));
        }
        trans.push(layer_trans);
        layers.push(next_layer);
    }
    // backward pass; the horizon layer has value 0
    let mut below = vec![0.0; layers[horizon as usize].len()];
    for d in (0..horizon as usize).rev() {
        let mut values = vec![0.0; layers[d].len()];
        for (i, s) in layers[d].iter().enumerate() {
            let st = &trans[d][i];
            if st.is_empty() {
                continue;
            }
            let acts: Vec<(Action, f64)> =
                st.iter().map(|(a, r, succ)| (*a, r + succ.iter().map(|&(j, p)| p * below[j]).sum::<f64>())).collect();
            values[i] = max_value(&acts);
            table.entries.insert(LayeredStateKey::new(s.clone(), d as u32), acts);
        }
        below = values;
    }
    Ok(table)
}

/// Actions within `1e-9` of the best value at `root`.
pub fn optimal_root_actions(table: &QTable, root: &LayeredStateKey) -> Result<BTreeSet<Action>> {
    let acts = table.actions(root).ok_or_else(|| Error::Contract(format!("{root:?} has no entry in the table")))?;
    let best = max_value(acts);
    Ok(acts.iter().filter(|e| best - e.1 <= 1e-9).map(|e| e.0).collect())
}

/// Reference fixpoint: whole-tree sweeps (Q classes from state classes, then
/// state classes from Q classes) from the initial relation until a sweep
/// leaves the partition unchanged.
///
/// The initial relation puts the terminal states of a layer in one class, the
/// other states of a layer in another, and all Q nodes of a layer together.
pub fn naive_asap_fixpoint(snap: &TreeSnapshot, params: &AbstractionParams) -> Result<SnapPartition> {
    let layer_of = |s: usize| snap.states[s].layer;
    let mut part = SnapPartition {
        state_class: snap.states.iter().map(|s| 2 * s.layer + u32::from(s.terminal)).collect(),
        q_class: snap.qnodes.iter().map(|q| layer_of(q.parent)).collect(),
    };
    for _ in 0..MAX_SWEEPS {
        let next = sweep(snap, params, &part);
        if next.canonical() == part.canonical() {
            return Ok(next);
        }
        part = next;
    }
    Err(Error::Internal(format!("no fixpoint after {MAX_SWEEPS} sweeps")))
}

fn sweep(snap: &TreeSnapshot, params: &AbstractionParams, cur: &SnapPartition) -> SnapPartition {
    let mut next = SnapPartition { state_class: vec![0; snap.states.len()], q_class: vec![0; snap.qnodes.len()] };
    let succ_classes = |q: usize| -> Vec<(u32, u64)> {
        snap.qnodes[q].successors.iter().map(|&(s, k)| (cur.state_class[s], k)).collect()
    };
    // Q step: greedy by index within each layer
    let mut reps: Vec<(u32, usize, u32)> = Vec::new(); // (layer, representative, id)
    for q in 0..snap.qnodes.len() {
        let layer = snap.states[snap.qnodes[q].parent].layer;
        let own = succ_classes(q);
        let mut best: Option<(f64, u32)> = None;
        for &(l, rep, id) in &reps {
            if l != layer {
                continue;
            }
            let f = transition_distance(&own, &succ_classes(rep));
            let (sim, d) = pair_similar(snap.qnodes[q].reward, snap.qnodes[rep].reward, f, params);
            if sim && best.is_none_or(|b| d < b.0) {
                best = Some((d, id));
            }
        }
        next.q_class[q] = match best {
            Some((_, id)) => id,
            None => {
                let id = reps.len() as u32;
                reps.push((layer, q, id));
                id
            }
        };
    }
    // state step
    let child_set = |s: usize| -> Vec<u32> {
        let set: BTreeSet<u32> = snap.states[s].children.iter().map(|&q| next.q_class[q]).collect();
        set.into_iter().collect()
    };
    let mut labels: HashMap<(u32, u8, Vec<u32>), u32> = HashMap::new();
    let mut label = |key: (u32, u8, Vec<u32>)| {
        let n = labels.len() as u32;
        *labels.entry(key).or_insert(n)
    };
    // expanded signatures per layer, in order of their smallest member
    let mut expanded: Vec<(u32, Vec<u32>)> = Vec::new();
    for (i, s) in snap.states.iter().enumerate() {
        if s.terminal {
            next.state_class[i] = label((s.layer, 0, Vec::new()));
        } else if s.expanded {
            let sig = child_set(i);
            if !expanded.iter().any(|e| e.0 == s.layer && e.1 == sig) {
                expanded.push((s.layer, sig.clone()));
            }
            next.state_class[i] = label((s.layer, 1, sig));
        }
    }
    for (i, s) in snap.states.iter().enumerate() {
        if s.terminal || s.expanded {
            continue;
        }
        next.state_class[i] = match params.mode {
            NonExpandedMode::Single => label((s.layer, 2, vec![i as u32])),
            NonExpandedMode::Group => {
                let own = child_set(i);
                let host = expanded.iter().find(|(l, sig)| *l == s.layer && own.iter().all(|c| sig.contains(c)));
                match host {
                    Some((_, sig)) => label((s.layer, 1, sig.clone())),
                    None => label((s.layer, 3, Vec::new())),
                }
            }
        };
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::compute_asap_fixpoint;
    use crate::domains::fixtures::{five_state_chain, four_arm_game, random_micro_mdp, two_state_chain, TableMdp};
    use crate::domains::Navigation;
    use crate::mdp::seeded_rng;

    fn root_key(s: State) -> LayeredStateKey {
        LayeredStateKey::new(s, 0)
    }

    #[test]
    fn horizon_zero_is_empty() {
        let m = two_state_chain();
        let t = value_iteration(&m, &TableMdp::state(0), 0).unwrap();
        assert!(t.is_empty());
        assert_eq!(t.value(&root_key(TableMdp::state(0))), 0.0);
    }

    #[test]
    fn chain_unrolls() {
        let m = two_state_chain();
        let t = value_iteration(&m, &TableMdp::state(0), 3).unwrap();
        assert_eq!(t.value(&root_key(TableMdp::state(0))), 3.0);
        assert!(t.bellman_residual(&m).unwrap() < 1e-9);
    }

    #[test]
    fn navigation_shortest_path() {
        let nav = Navigation::with_reset_probabilities(3, 3, vec![0.0; 9]).unwrap();
        let start = nav.encode(nav.start());
        let t = value_iteration(&nav, &start, 20).unwrap();
        let (s, g) = (nav.start(), nav.goal());
        let dist = s.0.abs_diff(g.0) + s.1.abs_diff(g.1);
        assert_eq!(t.value(&root_key(start)), -(dist as f64));
    }

    #[test]
    fn four_arm_optimum() {
        let m = four_arm_game(1.0);
        let t = value_iteration(&m, &TableMdp::state(0), 50).unwrap();
        let best = optimal_root_actions(&t, &root_key(TableMdp::state(0))).unwrap();
        assert_eq!(best.into_iter().collect::<Vec<_>>(), vec![Action(3)]);
    }

    #[test]
    fn ties_are_kept() {
        // both arms pay the same
        let m = crate::domains::fixtures::bernoulli_bandit(&[0.5, 0.5]);
        let t = value_iteration(&m, &TableMdp::state(0), 5).unwrap();
        assert_eq!(optimal_root_actions(&t, &root_key(TableMdp::state(0))).unwrap().len(), 2);
    }

    #[test]
    fn chain_prefers_advancing() {
        let m = five_state_chain();
        let t = value_iteration(&m, &TableMdp::state(0), 50).unwrap();
        let best = optimal_root_actions(&t, &root_key(TableMdp::state(0))).unwrap();
        assert_eq!(best.into_iter().collect::<Vec<_>>(), vec![Action(0)]);
        assert!(t.bellman_residual(&m).unwrap() < 1e-9);
    }

    fn brute_force(m: &TableMdp, s: &State, steps: u32) -> f64 {
        if steps == 0 || m.is_terminal(s) {
            return 0.0;
        }
        m.actions(s)
            .into_iter()
            .map(|a| {
                let tail: f64 = m.successors(s, a).unwrap().iter().map(|(n, p)| p * brute_force(m, n, steps - 1)).sum();
                m.reward(s, a) + tail
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn agrees_with_exhaustive_enumeration() {
        let mut rng = seeded_rng(21, 0);
        for _ in 0..100 {
            let m = random_micro_mdp(&mut rng, 5, 3, 3);
            let root = TableMdp::state(0);
            for h in 0..=4 {
                let t = value_iteration(&m, &root, h).unwrap();
                let expect = brute_force(&m, &root, h);
                assert!((t.value(&root_key(root.clone())) - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn cap_and_capability_errors() {
        let m = two_state_chain();
        assert!(matches!(value_iteration_capped(&m, &TableMdp::state(0), 10, 5), Err(Error::Resource(_))));
        let gol =
            crate::domains::build_domain(&crate::domains::DomainSpec::desk(crate::domains::DomainName::GameOfLife))
                .unwrap();
        if !gol.supports_enumeration() {
            let mut rng = seeded_rng(1, 0);
            let s = gol.initial_state(&mut rng);
            assert!(matches!(value_iteration(gol.as_ref(), &s, 3), Err(Error::Capability(_))));
        }
    }

    #[test]
    fn naive_matches_batch_and_is_idempotent() {
        let mut rng = seeded_rng(5, 0);
        for _ in 0..60 {
            let layers = 1 + (rand::Rng::gen_range(&mut rng, 0..5));
            let snap = TreeSnapshot::random(&mut rng, layers, 6);
            for params in [
                AbstractionParams::default(),
                AbstractionParams::new(0.0, 0.4, NonExpandedMode::Group),
                AbstractionParams::coarsest(),
            ] {
                let naive = naive_asap_fixpoint(&snap, &params).unwrap();
                assert_eq!(naive.canonical(), compute_asap_fixpoint(&snap, &params).canonical());
                assert_eq!(sweep(&snap, &params, &naive).canonical(), naive.canonical());
            }
        }
    }

    #[test]
    fn single_layer_keeps_initial_relation() {
        let mut rng = seeded_rng(6, 0);
        let snap = TreeSnapshot::random(&mut rng, 1, 4);
        let p = naive_asap_fixpoint(&snap, &AbstractionParams::default()).unwrap();
        assert_eq!(p.canonical().states, vec![vec![0]]);
    }
}
