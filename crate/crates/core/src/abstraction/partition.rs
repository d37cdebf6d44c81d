use std::cell::RefCell;
use std::collections::HashMap;

use rand::Rng;

use super::{pair_similar, transition_distance, AbstractionParams, NonExpandedMode};
use crate::mdp::SimRng;
use crate::search::tree::{QId, SearchTree, StateId};

#[derive(Clone, Debug)]
pub struct QClass {
    /// Creation index; also the slot in the class table.
    pub id: u32,
    pub layer: u32,
    pub members: Vec<QId>,
    pub representative: QId,
    pub visits: u64,
    pub value_sum: f64,
}

impl QClass {
    pub fn mean(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.value_sum / self.visits as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StateClassKind {
    /// Terminal and horizon states of one layer.
    Terminal,
    /// Fully expanded states whose child Q classes are exactly this sorted set.
    Expanded(Vec<u32>),
    /// Non-expanded states of a layer with no matching expanded class (group mode).
    Clump,
    /// One non-expanded state (single mode).
    Single,
}

#[derive(Clone, Debug)]
pub struct StateClass {
    pub id: u32,
    pub layer: u32,
    pub kind: StateClassKind,
    pub members: Vec<StateId>,
}

#[derive(Clone, Debug, Default)]
struct LayerIndex {
    q: Vec<u32>,
    expanded: Vec<u32>,
    by_sig: HashMap<Vec<u32>, u32>,
    terminal: Option<u32>,
    clump: Option<u32>,
    state_classes: usize,
}

/// Number of live classes in one layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct LayerCounts {
    pub state_classes: usize,
    pub q_classes: usize,
}

/// Dense per-key counters for comparing one query Q node against many others
/// without sorting. A key is a state class id, or `offset + state` for an
/// unclassed state.
#[derive(Clone, Debug, Default)]
struct DistanceScratch {
    a: Vec<u64>,
    b: Vec<u64>,
    a_keys: Vec<usize>,
    b_keys: Vec<usize>,
    na: u64,
    offset: usize,
}

impl DistanceScratch {
    fn key(&self, tree: &SearchTree, s: StateId) -> usize {
        tree.state(s).class.map_or(self.offset + s as usize, |c| c as usize)
    }

    fn load(&mut self, tree: &SearchTree, num_sclasses: usize, q: QId) {
        for &k in &self.a_keys {
            self.a[k] = 0;
        }
        self.a_keys.clear();
        self.offset = num_sclasses;
        let len = num_sclasses + tree.states.len();
        if self.a.len() < len {
            self.a.resize(len, 0);
            self.b.resize(len, 0);
        }
        self.na = 0;
        for &(s, k) in &tree.q(q).successors {
            let key = self.key(tree, s);
            if self.a[key] == 0 {
                self.a_keys.push(key);
            }
            self.a[key] += k;
            self.na += k;
        }
    }

    /// Transition distance between the loaded node and `q`.
    fn distance(&mut self, tree: &SearchTree, q: QId) -> f64 {
        let mut nb = 0;
        for &(s, k) in &tree.q(q).successors {
            let key = self.key(tree, s);
            if self.b[key] == 0 {
                self.b_keys.push(key);
            }
            self.b[key] += k;
            nb += k;
        }
        let na = self.na;
        let f = if na == 0 || nb == 0 {
            if na == nb {
                0.0
            } else {
                2.0
            }
        } else {
            let (wa, wb) = (nb as i128, na as i128);
            let mut numer: i128 = 0;
            for &k in &self.a_keys {
                numer += (self.a[k] as i128 * wa - self.b[k] as i128 * wb).abs();
            }
            for &k in &self.b_keys {
                if self.a[k] == 0 {
                    numer += self.b[k] as i128 * wb;
                }
            }
            numer as f64 / (na as f64 * nb as f64)
        };
        for &k in &self.b_keys {
            self.b[k] = 0;
        }
        self.b_keys.clear();
        f
    }
}

enum Target {
    Existing(u32),
    New(StateClassKind),
}

/// Incrementally maintained abstraction of a [`SearchTree`].
///
/// Class references live on the tree nodes; the partition owns the classes and
/// per-layer lookup tables. Q classes are formed around representatives: a Q
/// node belongs to a class only while it is similar to that class's
/// representative (or is the representative).
#[derive(Clone, Debug)]
pub struct Partition {
    pub params: AbstractionParams,
    qclasses: Vec<Option<QClass>>,
    sclasses: Vec<Option<StateClass>>,
    layers: Vec<LayerIndex>,
    live_q: usize,
    live_s: usize,
    scratch: RefCell<DistanceScratch>,
}

/// Visits and value sum used for `q` in the tree policy: the class aggregate
/// if `q` is classed, its own statistics otherwise.
pub fn abstract_stats(tree: &SearchTree, partition: &Partition, q: QId) -> (u64, f64) {
    let node = tree.q(q);
    match node.class.and_then(|c| partition.qclass(c)) {
        Some(class) => (class.visits, class.value_sum),
        None => (node.visits, node.value_sum),
    }
}

impl Partition {
    pub fn new(params: AbstractionParams) -> Self {
        Partition {
            params,
            qclasses: Vec::new(),
            sclasses: Vec::new(),
            layers: Vec::new(),
            live_q: 0,
            live_s: 0,
            scratch: RefCell::default(),
        }
    }

    pub fn qclass(&self, id: u32) -> Option<&QClass> {
        self.qclasses.get(id as usize).and_then(|c| c.as_ref())
    }

    pub fn sclass(&self, id: u32) -> Option<&StateClass> {
        self.sclasses.get(id as usize).and_then(|c| c.as_ref())
    }

    pub fn num_q_classes(&self) -> usize {
        self.live_q
    }

    pub fn num_state_classes(&self) -> usize {
        self.live_s
    }

    pub fn q_classes(&self) -> impl Iterator<Item = &QClass> {
        self.qclasses.iter().flatten()
    }

    pub fn state_classes(&self) -> impl Iterator<Item = &StateClass> {
        self.sclasses.iter().flatten()
    }

    /// Size of the class holding `q`, or 1 when `q` is unclassed.
    pub fn class_size(&self, tree: &SearchTree, q: QId) -> usize {
        tree.q(q).class.and_then(|c| self.qclass(c)).map_or(1, |c| c.members.len())
    }

    pub fn layer_counts(&self) -> Vec<LayerCounts> {
        self.layers.iter().map(|l| LayerCounts { state_classes: l.state_classes, q_classes: l.q.len() }).collect()
    }

    fn layer_mut(&mut self, layer: u32) -> &mut LayerIndex {
        let l = layer as usize;
        if self.layers.len() <= l {
            self.layers.resize_with(l + 1, LayerIndex::default);
        }
        &mut self.layers[l]
    }

    fn sc(&self, id: u32) -> &StateClass {
        self.sclasses[id as usize].as_ref().expect("live state class")
    }

    fn sc_mut(&mut self, id: u32) -> &mut StateClass {
        self.sclasses[id as usize].as_mut().expect("live state class")
    }

    fn qc(&self, id: u32) -> &QClass {
        self.qclasses[id as usize].as_ref().expect("live q class")
    }

    fn qc_mut(&mut self, id: u32) -> &mut QClass {
        self.qclasses[id as usize].as_mut().expect("live q class")
    }

    // ---- state classes ----

    fn new_sclass(&mut self, layer: u32, kind: StateClassKind) -> u32 {
        let id = self.sclasses.len() as u32;
        let idx = self.layer_mut(layer);
        idx.state_classes += 1;
        match &kind {
            StateClassKind::Terminal => idx.terminal = Some(id),
            StateClassKind::Clump => idx.clump = Some(id),
            StateClassKind::Expanded(sig) => {
                idx.by_sig.insert(sig.clone(), id);
                idx.expanded.push(id);
            }
            StateClassKind::Single => {}
        }
        self.sclasses.push(Some(StateClass { id, layer, kind, members: Vec::new() }));
        self.live_s += 1;
        id
    }

    fn delete_sclass(&mut self, id: u32) -> StateClass {
        let class = self.sclasses[id as usize].take().expect("live state class");
        let idx = &mut self.layers[class.layer as usize];
        idx.state_classes -= 1;
        match &class.kind {
            StateClassKind::Terminal => idx.terminal = None,
            StateClassKind::Clump => idx.clump = None,
            StateClassKind::Expanded(sig) => {
                idx.by_sig.remove(sig);
                idx.expanded.retain(|&c| c != id);
            }
            StateClassKind::Single => {}
        }
        self.live_s -= 1;
        class
    }

    fn detach_state(&mut self, tree: &mut SearchTree, s: StateId) -> Option<u32> {
        let node = &mut tree.states[s as usize];
        let c = node.class.take()?;
        let pos = node.class_pos as usize;
        let members = &mut self.sc_mut(c).members;
        members.swap_remove(pos);
        if let Some(&moved) = members.get(pos) {
            tree.states[moved as usize].class_pos = pos as u32;
        }
        Some(c)
    }

    fn attach_state(&mut self, tree: &mut SearchTree, s: StateId, c: u32) {
        let members = &mut self.sc_mut(c).members;
        tree.states[s as usize].class = Some(c);
        tree.states[s as usize].class_pos = members.len() as u32;
        members.push(s);
    }

    fn child_classes(tree: &SearchTree, s: StateId) -> Vec<u32> {
        let mut set: Vec<u32> = tree.state(s).children.iter().filter_map(|&q| tree.q(q).class).collect();
        set.sort_unstable();
        set.dedup();
        set
    }

    fn target(&self, tree: &SearchTree, s: StateId) -> Target {
        let node = tree.state(s);
        let layer = node.depth() as usize;
        let idx = self.layers.get(layer);
        if node.terminal {
            return match idx.and_then(|l| l.terminal) {
                Some(c) => Target::Existing(c),
                None => Target::New(StateClassKind::Terminal),
            };
        }
        let children = Self::child_classes(tree, s);
        if node.fully_expanded() {
            return match idx.and_then(|l| l.by_sig.get(&children)) {
                Some(&c) => Target::Existing(c),
                None => Target::New(StateClassKind::Expanded(children)),
            };
        }
        match self.params.mode {
            NonExpandedMode::Single => match node.class {
                Some(c) if self.sc(c).kind == StateClassKind::Single => Target::Existing(c),
                _ => Target::New(StateClassKind::Single),
            },
            NonExpandedMode::Group => {
                if let Some(l) = idx {
                    for &c in &l.expanded {
                        if let StateClassKind::Expanded(sig) = &self.sc(c).kind {
                            if is_subset(&children, sig) {
                                return Target::Existing(c);
                            }
                        }
                    }
                    if let Some(c) = l.clump {
                        return Target::Existing(c);
                    }
                }
                Target::New(StateClassKind::Clump)
            }
        }
    }

    /// Put `s` into the class prescribed by its current children and expansion
    /// status, creating or dissolving classes as needed.
    pub fn derive_state(&mut self, tree: &mut SearchTree, s: StateId) {
        let layer = tree.state(s).depth();
        let (c, created_expanded) = match self.target(tree, s) {
            Target::Existing(c) => (c, false),
            Target::New(kind) => {
                let expanded = matches!(kind, StateClassKind::Expanded(_));
                (self.new_sclass(layer, kind), expanded)
            }
        };
        let old = tree.state(s).class;
        if old == Some(c) {
            return;
        }
        self.detach_state(tree, s);
        self.attach_state(tree, s, c);
        if let Some(o) = old {
            self.cleanup_sclass(tree, o);
        }
        if created_expanded && self.params.mode == NonExpandedMode::Group {
            if let Some(clump) = self.layers[layer as usize].clump {
                let members = self.sc(clump).members.clone();
                for m in members {
                    self.derive_state(tree, m);
                }
            }
        }
    }

    fn cleanup_sclass(&mut self, tree: &mut SearchTree, id: u32) {
        let Some(class) = self.sclass(id) else { return };
        if class.members.is_empty() {
            self.delete_sclass(id);
            return;
        }
        let expanded = matches!(class.kind, StateClassKind::Expanded(_));
        if expanded && !class.members.iter().any(|&m| tree.state(m).fully_expanded()) {
            let class = self.delete_sclass(id);
            for &m in &class.members {
                tree.states[m as usize].class = None;
            }
            for m in class.members {
                self.derive_state(tree, m);
            }
        }
    }

    // ---- Q classes ----

    fn new_qclass(&mut self, tree: &mut SearchTree, layer: u32, q: QId) -> u32 {
        let id = self.qclasses.len() as u32;
        self.layer_mut(layer).q.push(id);
        self.qclasses.push(Some(QClass {
            id,
            layer,
            members: Vec::new(),
            representative: q,
            visits: 0,
            value_sum: 0.0,
        }));
        self.live_q += 1;
        self.attach_q(tree, q, id);
        id
    }

    fn delete_qclass(&mut self, id: u32) {
        let class = self.qclasses[id as usize].take().expect("live q class");
        self.layers[class.layer as usize].q.retain(|&c| c != id);
        self.live_q -= 1;
    }

    fn attach_q(&mut self, tree: &mut SearchTree, q: QId, c: u32) {
        let node = &mut tree.qnodes[q as usize];
        let (visits, value_sum) = (node.visits, node.value_sum);
        let class = self.qclasses[c as usize].as_mut().expect("live q class");
        node.class = Some(c);
        node.class_pos = class.members.len() as u32;
        class.members.push(q);
        class.visits += visits;
        class.value_sum += value_sum;
    }

    fn detach_q(&mut self, tree: &mut SearchTree, q: QId) -> Option<u32> {
        let node = &mut tree.qnodes[q as usize];
        let c = node.class.take()?;
        let pos = node.class_pos as usize;
        let (visits, value_sum) = (node.visits, node.value_sum);
        let class = self.qclasses[c as usize].as_mut().expect("live q class");
        class.members.swap_remove(pos);
        class.visits -= visits;
        class.value_sum -= value_sum;
        if let Some(&moved) = class.members.get(pos) {
            tree.qnodes[moved as usize].class_pos = pos as u32;
        }
        Some(c)
    }

    /// Add one sampled return of `q` to its class aggregate.
    pub fn record_visit(&mut self, tree: &SearchTree, q: QId, g: f64) {
        if let Some(c) = tree.q(q).class {
            let class = self.qc_mut(c);
            class.visits += 1;
            class.value_sum += g;
        }
    }

    /// Successor counts of `q` keyed by the class of each successor state.
    /// Unclassed successors are kept apart from each other.
    pub fn successor_classes(&self, tree: &SearchTree, q: QId) -> Vec<(u32, u64)> {
        let mut out = Vec::new();
        self.fill_successor_classes(tree, q, &mut out);
        out
    }

    fn fill_successor_classes(&self, tree: &SearchTree, q: QId, out: &mut Vec<(u32, u64)>) {
        out.clear();
        out.extend(tree.q(q).successors.iter().map(|&(s, k)| (tree.state(s).class.unwrap_or(u32::MAX - s), k)));
    }

    /// Pair similarity of two Q nodes of one layer under the current state classes.
    pub fn similar(&self, tree: &SearchTree, q1: QId, q2: QId) -> (bool, f64) {
        let f = transition_distance(&self.successor_classes(tree, q1), &self.successor_classes(tree, q2));
        pair_similar(tree.q(q1).reward, tree.q(q2).reward, f, &self.params)
    }

    /// Closest accepted class of `layer` whose representative is similar to
    /// the node loaded in the scratch.
    fn best_class(&self, tree: &SearchTree, layer: u32, reward: f64, accept: impl Fn(&QClass) -> bool) -> Option<u32> {
        let ids = &self.layers.get(layer as usize)?.q;
        let mut scratch = self.scratch.borrow_mut();
        let mut best: Option<(f64, u32)> = None;
        for &c in ids {
            let class = self.qc(c);
            if !accept(class) {
                continue;
            }
            let rep = tree.q(class.representative);
            if (rep.reward - reward).abs() > self.params.eps_a {
                continue;
            }
            let f = scratch.distance(tree, class.representative);
            let (sim, d) = pair_similar(reward, rep.reward, f, &self.params);
            if sim && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, c));
            }
        }
        best.map(|b| b.1)
    }

    /// Incremental update of the class of `q`, then of its parent state.
    ///
    /// A representative moves to a similar class that is larger, or equally
    /// large with a higher id; its old class then draws a new representative
    /// uniformly from `rng`. Any other Q node (or one never classed) stays
    /// while it is similar to its representative and otherwise joins the
    /// closest class with a similar representative, or opens a new class.
    /// Ties between equally close classes go to the lowest id.
    pub fn oga_update_qnode(&mut self, tree: &mut SearchTree, q: QId, rng: &mut SimRng) {
        let parent = tree.q(q).parent;
        let layer = tree.state(parent).depth();
        let reward = tree.q(q).reward;
        self.scratch.borrow_mut().load(tree, self.sclasses.len(), q);
        match tree.q(q).class {
            None => match self.best_class(tree, layer, reward, |_| true) {
                Some(c) => self.attach_q(tree, q, c),
                None => {
                    self.new_qclass(tree, layer, q);
                }
            },
            Some(c) if self.qc(c).representative == q => {
                let (size, id) = (self.qc(c).members.len(), c);
                let target = self.best_class(tree, layer, reward, |o| {
                    o.id != id && (o.members.len() > size || (o.members.len() == size && o.id > id))
                });
                if let Some(t) = target {
                    self.detach_q(tree, q);
                    self.attach_q(tree, q, t);
                    let remaining = self.qc(c).members.len();
                    if remaining == 0 {
                        self.delete_qclass(c);
                    } else {
                        let rep = self.qc(c).members[rng.gen_range(0..remaining)];
                        self.qc_mut(c).representative = rep;
                    }
                }
            }
            Some(c) => {
                let rep = self.qc(c).representative;
                let f = self.scratch.borrow_mut().distance(tree, rep);
                if !pair_similar(reward, tree.q(rep).reward, f, &self.params).0 {
                    self.detach_q(tree, q);
                    match self.best_class(tree, layer, reward, |o| o.id != c) {
                        Some(t) => self.attach_q(tree, q, t),
                        None => {
                            self.new_qclass(tree, layer, q);
                        }
                    }
                }
            }
        }
        tree.qnodes[q as usize].recency = 0;
        self.derive_state(tree, parent);
    }

    /// Check partition well-formedness against `tree`. With `complete`, every
    /// node must be classed.
    pub fn validate(&self, tree: &SearchTree, complete: bool) -> Result<(), String> {
        for (i, s) in tree.states.iter().enumerate() {
            let Some(c) = s.class else {
                if complete {
                    return Err(format!("state {i} unclassed"));
                }
                continue;
            };
            let class = self.sclass(c).ok_or(format!("state {i} in dead class {c}"))?;
            if class.members.get(s.class_pos as usize) != Some(&(i as StateId)) {
                return Err(format!("state {i} not at its member slot"));
            }
            if class.layer != s.depth() {
                return Err(format!("state {i} in class of layer {}", class.layer));
            }
            match &class.kind {
                StateClassKind::Terminal if !s.terminal => return Err(format!("state {i} in terminal class")),
                StateClassKind::Expanded(sig) => {
                    if s.fully_expanded() && *sig != Self::child_classes(tree, i as StateId) {
                        return Err(format!("state {i} signature mismatch"));
                    }
                    if !s.fully_expanded() && self.params.mode == NonExpandedMode::Single {
                        return Err(format!("non-expanded state {i} grouped with expanded ones"));
                    }
                }
                StateClassKind::Single | StateClassKind::Clump if s.fully_expanded() || s.terminal => {
                    return Err(format!("state {i} in a non-expanded class"))
                }
                _ => {}
            }
        }
        for (i, q) in tree.qnodes.iter().enumerate() {
            let Some(c) = q.class else {
                if complete {
                    return Err(format!("q {i} unclassed"));
                }
                continue;
            };
            let class = self.qclass(c).ok_or(format!("q {i} in dead class {c}"))?;
            if class.members.get(q.class_pos as usize) != Some(&(i as QId)) {
                return Err(format!("q {i} not at its member slot"));
            }
            if class.layer != tree.state(q.parent).depth() {
                return Err(format!("q {i} in class of another layer"));
            }
        }
        let mut live_s = 0;
        for (i, class) in self.sclasses.iter().enumerate() {
            let Some(class) = class else { continue };
            live_s += 1;
            if class.id as usize != i || class.members.is_empty() {
                return Err(format!("state class {i} malformed"));
            }
            if class.members.iter().any(|&m| tree.state(m).class != Some(class.id)) {
                return Err(format!("state class {i} lists a foreign member"));
            }
        }
        let mut live_q = 0;
        for (i, class) in self.qclasses.iter().enumerate() {
            let Some(class) = class else { continue };
            live_q += 1;
            if class.id as usize != i || class.members.is_empty() {
                return Err(format!("q class {i} malformed"));
            }
            if class.members.iter().any(|&m| tree.q(m).class != Some(class.id)) {
                return Err(format!("q class {i} lists a foreign member"));
            }
            if !class.members.contains(&class.representative) {
                return Err(format!("q class {i} representative is not a member"));
            }
            let visits: u64 = class.members.iter().map(|&m| tree.q(m).visits).sum();
            let value: f64 = class.members.iter().map(|&m| tree.q(m).value_sum).sum();
            let scale: f64 = class.members.iter().map(|&m| tree.q(m).value_sum.abs()).sum::<f64>().max(1.0);
            if visits != class.visits || (value - class.value_sum).abs() > 1e-9 * scale {
                return Err(format!("q class {i} aggregates are stale"));
            }
        }
        if live_s != self.live_s || live_q != self.live_q {
            return Err("live class counters out of sync".into());
        }
        Ok(())
    }
}

/// Both slices sorted ascending.
fn is_subset(small: &[u32], big: &[u32]) -> bool {
    let mut j = 0;
    for &x in small {
        while j < big.len() && big[j] < x {
            j += 1;
        }
        if j == big.len() || big[j] != x {
            return false;
        }
        j += 1;
    }
    true
}
