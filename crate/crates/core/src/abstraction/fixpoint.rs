use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use super::{pair_similar, transition_distance, AbstractionParams, NonExpandedMode};
use crate::mdp::SimRng;
use crate::search::tree::SearchTree;

#[derive(Clone, Debug, PartialEq)]
pub struct SnapState {
    pub layer: u32,
    /// Terminal or at the horizon; such states have no children.
    pub terminal: bool,
    /// Every legal action has a child.
    pub expanded: bool,
    pub children: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnapQ {
    pub parent: usize,
    pub reward: f64,
    /// Successor states (next layer) with observed counts.
    pub successors: Vec<(usize, u64)>,
}

/// Frozen copy of the local layered tree: the input of the batch fixpoint
/// computation and of its reference implementation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TreeSnapshot {
    pub states: Vec<SnapState>,
    pub qnodes: Vec<SnapQ>,
}

/// Class labels for every state and Q node of a snapshot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SnapPartition {
    pub state_class: Vec<u32>,
    pub q_class: Vec<u32>,
}

/// Partition as sorted member lists, independent of class labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CanonicalPartition {
    pub states: Vec<Vec<usize>>,
    pub qnodes: Vec<Vec<usize>>,
}

fn canonical_groups(labels: &[u32]) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort();
    out
}

impl SnapPartition {
    pub fn canonical(&self) -> CanonicalPartition {
        CanonicalPartition { states: canonical_groups(&self.state_class), qnodes: canonical_groups(&self.q_class) }
    }
}

impl CanonicalPartition {
    /// Number of state and Q classes per layer.
    pub fn per_layer(&self, snap: &TreeSnapshot) -> Vec<(usize, usize)> {
        let mut out = vec![(0, 0); snap.num_layers()];
        for g in &self.states {
            out[snap.states[g[0]].layer as usize].0 += 1;
        }
        for g in &self.qnodes {
            out[snap.states[snap.qnodes[g[0]].parent].layer as usize].1 += 1;
        }
        out
    }
}

impl TreeSnapshot {
    pub fn from_tree(tree: &SearchTree) -> Self {
        TreeSnapshot {
            states: tree
                .states
                .iter()
                .map(|s| SnapState {
                    layer: s.depth(),
                    terminal: s.terminal,
                    expanded: s.fully_expanded(),
                    children: s.children.iter().map(|&q| q as usize).collect(),
                })
                .collect(),
            qnodes: tree
                .qnodes
                .iter()
                .map(|q| SnapQ {
                    parent: q.parent as usize,
                    reward: q.reward,
                    successors: q.successors.iter().map(|&(s, k)| (s as usize, k)).collect(),
                })
                .collect(),
        }
    }

    pub fn num_layers(&self) -> usize {
        self.states.iter().map(|s| s.layer as usize + 1).max().unwrap_or(0)
    }

    /// Structural checks: children point back, successors sit one layer down,
    /// counts are positive, terminal states are childless and expanded ones are not.
    pub fn validate(&self) -> Result<(), String> {
        for (i, s) in self.states.iter().enumerate() {
            if s.terminal && (s.expanded || !s.children.is_empty()) {
                return Err(format!("terminal state {i} has children"));
            }
            if s.expanded && s.children.is_empty() {
                return Err(format!("expanded state {i} has no children"));
            }
            if s.children.iter().any(|&q| self.qnodes.get(q).map(|q| q.parent) != Some(i)) {
                return Err(format!("state {i} child list is inconsistent"));
            }
        }
        for (i, q) in self.qnodes.iter().enumerate() {
            let layer = self.states[q.parent].layer;
            if q.successors.is_empty() || q.successors.iter().any(|&(s, k)| k == 0 || self.states[s].layer != layer + 1)
            {
                return Err(format!("q {i} has bad successors"));
            }
            if !self.states[q.parent].children.contains(&i) {
                return Err(format!("q {i} missing from its parent"));
            }
        }
        Ok(())
    }

    /// Random layered tree with `layers` layers (at least 1) and at most
    /// `max_width` states per layer. Rewards and counts come from small ranges
    /// so that exact ties and symmetric branches are common.
    pub fn random(rng: &mut SimRng, layers: usize, max_width: usize) -> Self {
        let mut snap = TreeSnapshot::default();
        let mut layer_states: Vec<Vec<usize>> = Vec::new();
        for l in 0..layers {
            let width = if l == 0 { 1 } else { rng.gen_range(1..=max_width) };
            let ids: Vec<usize> = (0..width).map(|k| snap.states.len() + k).collect();
            for _ in 0..width {
                snap.states.push(SnapState { layer: l as u32, terminal: false, expanded: false, children: Vec::new() });
            }
            layer_states.push(ids);
        }
        for l in 0..layers {
            for &s in &layer_states[l] {
                let last = l + 1 == layers;
                if last || (l > 0 && rng.gen_bool(0.15)) {
                    // leaf: terminal or not yet expanded
                    snap.states[s].terminal = rng.gen_bool(0.5);
                    continue;
                }
                let actions = rng.gen_range(1..=3);
                let made = if rng.gen_bool(0.7) { actions } else { rng.gen_range(0..actions) };
                snap.states[s].expanded = made == actions;
                let next = &layer_states[l + 1];
                for _ in 0..made {
                    let q = snap.qnodes.len();
                    let k = rng.gen_range(1..=3.min(next.len()));
                    let mut succ: Vec<(usize, u64)> = Vec::with_capacity(k);
                    while succ.len() < k {
                        let t = next[rng.gen_range(0..next.len())];
                        if !succ.iter().any(|e| e.0 == t) {
                            succ.push((t, rng.gen_range(1..=3)));
                        }
                    }
                    snap.qnodes.push(SnapQ { parent: s, reward: rng.gen_range(0..3) as f64, successors: succ });
                    snap.states[s].children.push(q);
                }
            }
        }
        snap
    }
}

/// Converged abstraction of a snapshot, computed bottom-up one layer at a time.
///
/// The deepest layer starts from the initial relation (terminal states of a
/// layer together, non-expanded states per `params.mode`). Each layer's Q
/// nodes are then grouped greedily in index order: a Q node joins the existing
/// class whose representative is similar and closest (lowest creation id on
/// ties), otherwise it opens a class and becomes its representative. States of
/// the layer are lifted from their child classes. Because each layer depends
/// only on the one below, a single pass converges; a second pass is run and
/// must reproduce the first.
pub fn compute_asap_fixpoint(snap: &TreeSnapshot, params: &AbstractionParams) -> SnapPartition {
    let first = bottom_up_pass(snap, params);
    debug_assert_eq!(first.canonical(), bottom_up_pass(snap, params).canonical());
    first
}

fn bottom_up_pass(snap: &TreeSnapshot, params: &AbstractionParams) -> SnapPartition {
    let layers = snap.num_layers();
    let mut by_layer_states: Vec<Vec<usize>> = vec![Vec::new(); layers];
    for (i, s) in snap.states.iter().enumerate() {
        by_layer_states[s.layer as usize].push(i);
    }
    let mut by_layer_q: Vec<Vec<usize>> = vec![Vec::new(); layers];
    for (i, q) in snap.qnodes.iter().enumerate() {
        by_layer_q[snap.states[q.parent].layer as usize].push(i);
    }
    let mut part =
        SnapPartition { state_class: vec![u32::MAX; snap.states.len()], q_class: vec![u32::MAX; snap.qnodes.len()] };
    let mut next_q_id = 0u32;
    let mut next_s_id = 0u32;
    for l in (0..layers).rev() {
        // Q classes of this layer from the (final) state classes of layer l + 1
        let mut reps: Vec<(u32, usize)> = Vec::new();
        for &q in &by_layer_q[l] {
            let dist = class_counts(snap, &part, q);
            let mut best: Option<(f64, u32)> = None;
            for &(id, rep) in &reps {
                let f = transition_distance(&dist, &class_counts(snap, &part, rep));
                let (sim, d) = pair_similar(snap.qnodes[q].reward, snap.qnodes[rep].reward, f, params);
                if sim && best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, id));
                }
            }
            part.q_class[q] = match best {
                Some((_, id)) => id,
                None => {
                    reps.push((next_q_id, q));
                    next_q_id += 1;
                    next_q_id - 1
                }
            };
        }
        // state classes of this layer
        let mut terminal: Option<u32> = None;
        let mut sig_class: HashMap<Vec<u32>, u32> = HashMap::new();
        // expanded classes in order of their smallest member, with signatures
        let mut expanded: Vec<(Vec<u32>, u32)> = Vec::new();
        for &s in &by_layer_states[l] {
            let st = &snap.states[s];
            if st.terminal {
                let id = *terminal.get_or_insert_with(|| fresh(&mut next_s_id));
                part.state_class[s] = id;
            } else if st.expanded {
                let sig = child_set(snap, &part, s);
                let id = match sig_class.get(&sig) {
                    Some(&id) => id,
                    None => {
                        let id = fresh(&mut next_s_id);
                        sig_class.insert(sig.clone(), id);
                        expanded.push((sig, id));
                        id
                    }
                };
                part.state_class[s] = id;
            }
        }
        let mut clump: Option<u32> = None;
        for &s in &by_layer_states[l] {
            let st = &snap.states[s];
            if st.terminal || st.expanded {
                continue;
            }
            part.state_class[s] = match params.mode {
                NonExpandedMode::Single => fresh(&mut next_s_id),
                NonExpandedMode::Group => {
                    let own = child_set(snap, &part, s);
                    match expanded.iter().find(|(sig, _)| own.iter().all(|c| sig.binary_search(c).is_ok())) {
                        Some(&(_, id)) => id,
                        None => *clump.get_or_insert_with(|| fresh(&mut next_s_id)),
                    }
                }
            };
        }
    }
    part
}

fn fresh(next: &mut u32) -> u32 {
    *next += 1;
    *next - 1
}

fn class_counts(snap: &TreeSnapshot, part: &SnapPartition, q: usize) -> Vec<(u32, u64)> {
    snap.qnodes[q].successors.iter().map(|&(s, k)| (part.state_class[s], k)).collect()
}

fn child_set(snap: &TreeSnapshot, part: &SnapPartition, s: usize) -> Vec<u32> {
    let mut set: Vec<u32> = snap.states[s].children.iter().map(|&q| part.q_class[q]).collect();
    set.sort_unstable();
    set.dedup();
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::seeded_rng;

    fn state(layer: u32, terminal: bool, expanded: bool, children: Vec<usize>) -> SnapState {
        SnapState { layer, terminal, expanded, children }
    }

    fn q(parent: usize, reward: f64, successors: Vec<(usize, u64)>) -> SnapQ {
        SnapQ { parent, reward, successors }
    }

    /// Root with two actions leading to states 1 and 2; each of those has one
    /// action of reward `r1`/`r2` into terminal states 3 and 4.
    fn symmetric(r1: f64, r2: f64) -> TreeSnapshot {
        TreeSnapshot {
            states: vec![
                state(0, false, true, vec![0, 1]),
                state(1, false, true, vec![2]),
                state(1, false, true, vec![3]),
                state(2, true, false, vec![]),
                state(2, true, false, vec![]),
            ],
            qnodes: vec![
                q(0, 0.0, vec![(1, 2)]),
                q(0, 0.0, vec![(2, 3)]),
                q(1, r1, vec![(3, 2)]),
                q(2, r2, vec![(4, 2)]),
            ],
        }
    }

    #[test]
    fn symmetric_branches_share_a_class() {
        let snap = symmetric(1.0, 1.0);
        snap.validate().unwrap();
        let p = compute_asap_fixpoint(&snap, &AbstractionParams::default());
        assert_eq!(p.state_class[1], p.state_class[2]);
        assert_eq!(p.q_class[0], p.q_class[1]);
        let p = compute_asap_fixpoint(&symmetric(1.0, 2.0), &AbstractionParams::default());
        assert_ne!(p.state_class[1], p.state_class[2]);
        assert_ne!(p.q_class[0], p.q_class[1]);
    }

    #[test]
    fn extra_unmatched_action_splits_states() {
        let mut snap = symmetric(1.0, 1.0);
        snap.qnodes.push(q(2, 5.0, vec![(4, 1)]));
        snap.states[2].children.push(4);
        let p = compute_asap_fixpoint(&snap, &AbstractionParams::default());
        assert_ne!(p.state_class[1], p.state_class[2]);
    }

    #[test]
    fn coarsest_collapses_layers() {
        let mut rng = seeded_rng(9, 0);
        for _ in 0..50 {
            let snap = TreeSnapshot::random(&mut rng, 4, 6);
            snap.validate().unwrap();
            let canon = compute_asap_fixpoint(&snap, &AbstractionParams::coarsest()).canonical();
            for (l, &(sc, qc)) in canon.per_layer(&snap).iter().enumerate() {
                assert!(qc <= 1, "layer {l}");
                let kinds = snap
                    .states
                    .iter()
                    .filter(|s| s.layer as usize == l)
                    .fold((false, false), |acc, s| (acc.0 || s.terminal, acc.1 || !s.terminal));
                // terminal states never share a class with non-terminal ones
                assert_eq!(sc, kinds.0 as usize + kinds.1 as usize, "layer {l}");
            }
        }
    }
}
