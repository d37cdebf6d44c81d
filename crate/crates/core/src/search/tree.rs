use std::collections::HashMap;

use crate::mdp::{Action, LayeredStateKey, MdpModel, State};

pub type StateId = u32;
pub type QId = u32;

#[derive(Clone, Debug)]
pub struct StateNode {
    /// State and depth relative to the search root.
    pub key: LayeredStateKey,
    /// Legal actions in model order; empty for terminal and horizon states.
    pub actions: Vec<Action>,
    /// Q nodes created so far, one per action prefix of `actions`.
    pub children: Vec<QId>,
    pub visits: u64,
    /// Terminal in the model or at the planning horizon.
    pub terminal: bool,
    pub class: Option<u32>,
    pub(crate) class_pos: u32,
}

impl StateNode {
    pub fn depth(&self) -> u32 {
        self.key.depth
    }

    /// Every legal action has a (visited) Q node.
    pub fn fully_expanded(&self) -> bool {
        !self.terminal && self.children.len() == self.actions.len()
    }
}

#[derive(Clone, Debug)]
pub struct QNode {
    pub parent: StateId,
    pub action: Action,
    pub reward: f64,
    pub visits: u64,
    pub value_sum: f64,
    pub value_sq_sum: f64,
    /// Observed successors with counts, in discovery order.
    pub successors: Vec<(StateId, u64)>,
    pub class: Option<u32>,
    pub(crate) class_pos: u32,
    /// Visits since the last abstraction update.
    pub recency: u32,
    pub cad_dropped: bool,
}

impl QNode {
    pub fn mean(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.value_sum / self.visits as f64
        }
    }
}

/// Layered search DAG. State nodes are keyed by `(state, depth)`, so two paths
/// reaching the same state at the same depth share one node.
#[derive(Clone, Debug, Default)]
pub struct SearchTree {
    pub states: Vec<StateNode>,
    pub qnodes: Vec<QNode>,
    index: HashMap<LayeredStateKey, StateId>,
    /// Absolute depth of the root within the episode.
    pub root_depth: u32,
    pub horizon: u32,
    pub iterations: u64,
    // running sums over own Q means of visited Q nodes
    mean_count: u64,
    mean_sum: f64,
    mean_sq_sum: f64,
}

pub const ROOT: StateId = 0;

impl SearchTree {
    pub fn new(model: &dyn MdpModel, root: State, root_depth: u32, horizon: u32) -> Self {
        let mut tree = SearchTree { root_depth, horizon, ..Default::default() };
        tree.get_or_insert(model, root, 0);
        tree
    }

    pub fn root(&self) -> &StateNode {
        &self.states[ROOT as usize]
    }

    pub fn state(&self, s: StateId) -> &StateNode {
        &self.states[s as usize]
    }

    pub fn q(&self, q: QId) -> &QNode {
        &self.qnodes[q as usize]
    }

    pub fn lookup(&self, key: &LayeredStateKey) -> Option<StateId> {
        self.index.get(key).copied()
    }

    /// Return the node for `(state, depth)`, creating it if needed. The flag is
    /// true when the node is new.
    pub fn get_or_insert(&mut self, model: &dyn MdpModel, state: State, depth: u32) -> (StateId, bool) {
        let key = LayeredStateKey::new(state, depth);
        if let Some(&id) = self.index.get(&key) {
            return (id, false);
        }
        let terminal = self.root_depth + depth >= self.horizon || model.is_terminal(&key.state);
        let actions = if terminal { Vec::new() } else { model.actions(&key.state) };
        let id = self.states.len() as StateId;
        self.index.insert(key.clone(), id);
        self.states.push(StateNode {
            key,
            actions,
            children: Vec::new(),
            visits: 0,
            terminal,
            class: None,
            class_pos: 0,
        });
        (id, true)
    }

    /// Create the Q node for the next unexpanded action of `s`.
    pub fn expand(&mut self, model: &dyn MdpModel, s: StateId) -> QId {
        let node = &self.states[s as usize];
        let action = node.actions[node.children.len()];
        let reward = model.reward(&node.key.state, action);
        let id = self.qnodes.len() as QId;
        self.qnodes.push(QNode {
            parent: s,
            action,
            reward,
            visits: 0,
            value_sum: 0.0,
            value_sq_sum: 0.0,
            successors: Vec::new(),
            class: None,
            class_pos: 0,
            recency: 0,
            cad_dropped: false,
        });
        self.states[s as usize].children.push(id);
        id
    }

    /// Record one sampled return `g` through `q` into `succ`. Returns true if
    /// `succ` had not been observed from `q` before.
    pub fn record(&mut self, q: QId, succ: StateId, g: f64) -> bool {
        let node = &mut self.qnodes[q as usize];
        let old_mean = (node.visits > 0).then(|| node.mean());
        node.visits += 1;
        node.value_sum += g;
        node.value_sq_sum += g * g;
        node.recency += 1;
        let new_mean = node.mean();
        let fresh = match node.successors.iter_mut().find(|e| e.0 == succ) {
            Some(e) => {
                e.1 += 1;
                false
            }
            None => {
                node.successors.push((succ, 1));
                true
            }
        };
        match old_mean {
            Some(m) => {
                self.mean_sum += new_mean - m;
                self.mean_sq_sum += new_mean * new_mean - m * m;
            }
            None => {
                self.mean_count += 1;
                self.mean_sum += new_mean;
                self.mean_sq_sum += new_mean * new_mean;
            }
        }
        fresh
    }

    /// Population standard deviation of own Q means, from the running sums.
    pub fn sigma(&self) -> f64 {
        if self.mean_count < 2 {
            return 0.0;
        }
        let n = self.mean_count as f64;
        let mu = self.mean_sum / n;
        (self.mean_sq_sum / n - mu * mu).max(0.0).sqrt()
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_qnodes(&self) -> usize {
        self.qnodes.len()
    }

    /// Check structural invariants; returns a description of the first violation.
    pub fn check_consistency(&self) -> Result<(), String> {
        for (i, s) in self.states.iter().enumerate() {
            let child_visits: u64 = s.children.iter().map(|&q| self.q(q).visits).sum();
            if child_visits != s.visits {
                return Err(format!("state {i}: visits {} but children sum {child_visits}", s.visits));
            }
            if self.index.get(&s.key) != Some(&(i as StateId)) {
                return Err(format!("state {i} missing from index"));
            }
        }
        for (i, q) in self.qnodes.iter().enumerate() {
            let total: u64 = q.successors.iter().map(|e| e.1).sum();
            if total != q.visits {
                return Err(format!("q {i}: visits {} but successor counts {total}", q.visits));
            }
            let depth = self.state(q.parent).depth();
            if q.successors.iter().any(|&(s, _)| self.state(s).depth() != depth + 1) {
                return Err(format!("q {i}: successor outside the next layer"));
            }
            if q.visits > 0
                && q.value_sq_sum + 1e-9 * q.value_sq_sum.abs().max(1.0) < q.value_sum * q.value_sum / q.visits as f64
            {
                return Err(format!("q {i}: second moment below squared mean"));
            }
        }
        Ok(())
    }
}
