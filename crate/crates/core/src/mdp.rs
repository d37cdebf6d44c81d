//! Finite MDP interface shared by every domain and by the planners.
//!
//! A model is a generative simulator over canonical byte-encoded states.
//! Rewards are a deterministic function `R(s, a)` of the pre-transition
//! state and the action; they never depend on the sampled successor.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Counter-based generator handed explicitly to every stochastic call.
pub type SimRng = ChaCha8Rng;

/// Build the generator for `(seed, stream)`. Distinct streams of one seed are
/// independent, which lets the environment and the planner draw from separate
/// sequences without coordinating.
pub fn seeded_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Canonical state encoding. Two states are the same state iff their bytes match.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State(SmallVec<[u8; 24]>);

impl State {
    pub fn from_bytes(bytes: &[u8]) -> Self {
        State(SmallVec::from_slice(bytes))
    }

    pub fn bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Debug for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "State{:?}", self.0.as_slice())
    }
}

impl From<Vec<u8>> for State {
    fn from(v: Vec<u8>) -> Self {
        State(SmallVec::from_vec(v))
    }
}

/// Domain-specific action identifier.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Action(pub u32);

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A state tagged with the number of steps taken since the root of a layered MDP.
#[derive(Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct LayeredStateKey {
    pub state: State,
    pub depth: u32,
}

impl LayeredStateKey {
    pub fn new(state: State, depth: u32) -> Self {
        LayeredStateKey { state, depth }
    }

    pub fn successor(&self, state: State) -> Self {
        LayeredStateKey { state, depth: self.depth + 1 }
    }
}

/// Generative model of a finite MDP `(S, mu0, A_f, P, R, T)`.
///
/// The unchecked methods assume a valid, non-terminal state and a legal action;
/// the free functions [`legal_actions`], [`step`] and [`enumerate_next`] validate
/// their inputs first. Implementations are immutable after construction.
pub trait MdpModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// Sample from the initial-state distribution.
    fn initial_state(&self, rng: &mut SimRng) -> State;

    /// Check that `state` is a well-formed encoding for this model.
    fn validate(&self, state: &State) -> Result<()>;

    fn is_terminal(&self, state: &State) -> bool;

    /// Ordered action set. Empty only for terminal states.
    fn actions(&self, state: &State) -> Vec<Action>;

    fn reward(&self, state: &State, action: Action) -> f64;

    fn sample_next(&self, state: &State, action: Action, rng: &mut SimRng) -> State;

    /// Exact successor distribution, if the model can enumerate it. Entries may
    /// repeat a state; [`enumerate_next`] merges them.
    fn successors(&self, _state: &State, _action: Action) -> Option<Vec<(State, f64)>> {
        None
    }

    fn supports_enumeration(&self) -> bool {
        false
    }
}

/// Ordered legal actions of a validated state.
pub fn legal_actions(model: &dyn MdpModel, state: &State) -> Result<Vec<Action>> {
    model.validate(state)?;
    if model.is_terminal(state) {
        return Ok(Vec::new());
    }
    let actions = model.actions(state);
    if actions.is_empty() {
        return Err(Error::Internal(format!("{}: non-terminal state {:?} has no actions", model.name(), state)));
    }
    Ok(actions)
}

fn check_legal(model: &dyn MdpModel, state: &State, action: Action) -> Result<()> {
    model.validate(state)?;
    if model.is_terminal(state) {
        return Err(Error::Contract(format!("step from terminal state {state:?}")));
    }
    if !model.actions(state).contains(&action) {
        return Err(Error::Contract(format!("action {action} is not legal in {state:?}")));
    }
    Ok(())
}

/// Sample one transition: `(next, R(s, a))`.
pub fn step(model: &dyn MdpModel, state: &State, action: Action, rng: &mut SimRng) -> Result<(State, f64)> {
    check_legal(model, state, action)?;
    let reward = model.reward(state, action);
    let next = model.sample_next(state, action, rng);
    Ok((next, reward))
}

/// Exact successor distribution, merged by state and sorted by encoding.
pub fn enumerate_next(model: &dyn MdpModel, state: &State, action: Action) -> Result<Vec<(State, f64)>> {
    if !model.supports_enumeration() {
        return Err(Error::Capability(format!("{} does not enumerate transitions", model.name())));
    }
    check_legal(model, state, action)?;
    let raw = model
        .successors(state, action)
        .ok_or_else(|| Error::Capability(format!("{}: no enumeration", model.name())))?;
    Ok(merge_distribution(raw))
}

/// Merge duplicate states and drop zero-probability entries.
pub fn merge_distribution(mut raw: Vec<(State, f64)>) -> Vec<(State, f64)> {
    raw.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out: Vec<(State, f64)> = Vec::with_capacity(raw.len());
    for (s, p) in raw {
        if p <= 0.0 {
            continue;
        }
        match out.last_mut() {
            Some((last, q)) if *last == s => *q += p,
            _ => out.push((s, p)),
        }
    }
    out
}

/// Sample an index from a discrete distribution given as weights summing to one.
pub(crate) fn sample_index(probs: &[f64], rng: &mut SimRng) -> usize {
    use rand::Rng;
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Bernoulli draw used by the factored domains.
#[inline]
pub(crate) fn bernoulli(p: f64, rng: &mut SimRng) -> bool {
    use rand::Rng;
    if p >= 1.0 {
        true
    } else if p <= 0.0 {
        false
    } else {
        rng.gen::<f64>() < p
    }
}

/// Enumerate the joint distribution of independent bits with success
/// probabilities `probs`; bits with probability 0 or 1 do not branch.
pub(crate) fn enumerate_bits(probs: &[f64]) -> Vec<(Vec<bool>, f64)> {
    let mut out = vec![(Vec::with_capacity(probs.len()), 1.0)];
    for &p in probs {
        let mut next = Vec::with_capacity(out.len() * 2);
        for (bits, w) in out {
            if p >= 1.0 {
                let mut b = bits;
                b.push(true);
                next.push((b, w));
            } else if p <= 0.0 {
                let mut b = bits;
                b.push(false);
                next.push((b, w));
            } else {
                let mut on = bits.clone();
                on.push(true);
                next.push((on, w * p));
                let mut off = bits;
                off.push(false);
                next.push((off, w * (1.0 - p)));
            }
        }
        out = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_combines_duplicates() {
        let a = State::from_bytes(&[1]);
        let b = State::from_bytes(&[0]);
        let merged = merge_distribution(vec![(a.clone(), 0.25), (b.clone(), 0.5), (a.clone(), 0.25)]);
        assert_eq!(merged, vec![(b, 0.5), (a, 0.5)]);
    }

    #[test]
    fn bit_enumeration_sums_to_one() {
        let dist = enumerate_bits(&[0.3, 1.0, 0.5, 0.0]);
        assert_eq!(dist.len(), 4);
        let total: f64 = dist.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(dist.iter().all(|(bits, _)| bits[1] && !bits[3]));
    }

    #[test]
    fn streams_are_independent() {
        use rand::RngCore;
        let mut a = seeded_rng(42, 0);
        let mut b = seeded_rng(42, 1);
        let mut c = seeded_rng(42, 0);
        let x = a.next_u64();
        assert_ne!(x, b.next_u64());
        assert_eq!(x, c.next_u64());
    }

    #[test]
    fn layered_key_successor_depth() {
        let k = LayeredStateKey::new(State::from_bytes(&[3, 4]), 7);
        let s = k.successor(State::from_bytes(&[5]));
        assert_eq!(s.depth, 8);
    }
}
