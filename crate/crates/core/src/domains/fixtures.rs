//! Small hand-built MDPs with known answers, used by tests and acceptance runs.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::{sample_index, Action, MdpModel, SimRng, State};

/// One action of a [`TableMdp`] state.
#[derive(Clone, Debug, PartialEq)]
pub struct TableAction {
    pub reward: f64,
    pub next: Vec<(usize, f64)>,
}

/// Explicit tabular MDP. States are `0..n` encoded as two little-endian bytes;
/// action `i` of a state is the `i`-th entry of its action list.
#[derive(Clone, Debug)]
pub struct TableMdp {
    name: String,
    initial: Vec<(usize, f64)>,
    terminal: Vec<bool>,
    table: Vec<Vec<TableAction>>,
}

impl TableMdp {
    pub fn new(
        name: &str,
        initial: Vec<(usize, f64)>,
        terminal: Vec<bool>,
        table: Vec<Vec<TableAction>>,
    ) -> Result<Self> {
        let n = table.len();
        if n == 0 || n > u16::MAX as usize || terminal.len() != n {
            return Err(Error::Config("table MDP needs matching, non-empty tables".into()));
        }
        let check = |dist: &[(usize, f64)]| -> Result<()> {
            let total: f64 = dist.iter().map(|d| d.1).sum();
            if dist.is_empty() || dist.iter().any(|&(s, p)| s >= n || p <= 0.0) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("bad distribution {dist:?}")));
            }
            Ok(())
        };
        check(&initial)?;
        for (s, acts) in table.iter().enumerate() {
            if !terminal[s] && acts.is_empty() {
                return Err(Error::Config(format!("non-terminal state {s} has no actions")));
            }
            for a in acts {
                check(&a.next)?;
            }
        }
        Ok(TableMdp { name: name.to_string(), initial, terminal, table })
    }

    pub fn state(i: usize) -> State {
        State::from_bytes(&(i as u16).to_le_bytes())
    }

    pub fn index(s: &State) -> usize {
        let b = s.bytes();
        u16::from_le_bytes([b[0], b[1]]) as usize
    }

    pub fn num_states(&self) -> usize {
        self.table.len()
    }
}

impl MdpModel for TableMdp {
    fn name(&self) -> &str {
        &self.name
    }

    fn initial_state(&self, rng: &mut SimRng) -> State {
        let probs: Vec<f64> = self.initial.iter().map(|d| d.1).collect();
        Self::state(self.initial[sample_index(&probs, rng)].0)
    }

    fn validate(&self, s: &State) -> Result<()> {
        if s.len() != 2 || Self::index(s) >= self.table.len() {
            return Err(Error::InvalidState(format!("{} {s:?}", self.name)));
        }
        Ok(())
    }

    fn is_terminal(&self, s: &State) -> bool {
        self.terminal[Self::index(s)]
    }

    fn actions(&self, s: &State) -> Vec<Action> {
        (0..self.table[Self::index(s)].len() as u32).map(Action).collect()
    }

    fn reward(&self, s: &State, a: Action) -> f64 {
        self.table[Self::index(s)][a.0 as usize].reward
    }

    fn sample_next(&self, s: &State, a: Action, rng: &mut SimRng) -> State {
        let next = &self.table[Self::index(s)][a.0 as usize].next;
        if next.len() == 1 {
            return Self::state(next[0].0);
        }
        let probs: Vec<f64> = next.iter().map(|d| d.1).collect();
        Self::state(next[sample_index(&probs, rng)].0)
    }

    fn successors(&self, s: &State, a: Action) -> Option<Vec<(State, f64)>> {
        Some(self.table[Self::index(s)][a.0 as usize].next.iter().map(|&(t, p)| (Self::state(t), p)).collect())
    }

    fn supports_enumeration(&self) -> bool {
        true
    }
}

fn act(reward: f64, next: Vec<(usize, f64)>) -> TableAction {
    TableAction { reward, next }
}

/// Two states alternating deterministically with reward 1 per step.
pub fn two_state_chain() -> TableMdp {
    TableMdp::new(
        "two_state_chain",
        vec![(0, 1.0)],
        vec![false, false],
        vec![vec![act(1.0, vec![(1, 1.0)])], vec![act(1.0, vec![(0, 1.0)])]],
    )
    .unwrap()
}

/// Five-state chain: in states 0..=3 one may `advance` (action 0, no reward;
/// moves right with probability 0.8, otherwise falls back to state 0) or `quit`
/// (action 1, reward 3, ends the episode). Advancing out of state 3 pays 10 and
/// ends the episode in state 4.
pub fn five_state_chain() -> TableMdp {
    let mut table = Vec::new();
    for s in 0..4 {
        let advance = if s == 3 {
            act(10.0, vec![(4, 1.0)])
        } else if s == 0 {
            act(0.0, vec![(1, 0.8), (0, 0.2)])
        } else {
            act(0.0, vec![(s + 1, 0.8), (0, 0.2)])
        };
        table.push(vec![advance, act(3.0, vec![(4, 1.0)])]);
    }
    table.push(Vec::new());
    TableMdp::new("five_state_chain", vec![(0, 1.0)], vec![false, false, false, false, true], table).unwrap()
}

/// Depth-two bandit. Arm `i` pays `arms[i].0` immediately and then moves to a
/// payout state drawn from `arms[i].1` (pairs of payout value and probability).
/// Payout states are shared between arms by value; each has one action paying
/// its value, after which the episode ends.
pub fn payout_bandit(name: &str, arms: &[(f64, Vec<(f64, f64)>)]) -> TableMdp {
    let mut payouts: Vec<f64> = Vec::new();
    for (_, dist) in arms {
        for &(v, _) in dist {
            if !payouts.contains(&v) {
                payouts.push(v);
            }
        }
    }
    let end = 1 + payouts.len();
    let mut table = vec![arms
        .iter()
        .map(|(mu, dist)| {
            let next = dist.iter().map(|&(v, p)| (1 + payouts.iter().position(|&x| x == v).unwrap(), p)).collect();
            act(*mu, next)
        })
        .collect::<Vec<_>>()];
    for &v in &payouts {
        table.push(vec![act(v, vec![(end, 1.0)])]);
    }
    table.push(Vec::new());
    let mut terminal = vec![false; end + 1];
    terminal[end] = true;
    TableMdp::new(name, vec![(0, 1.0)], terminal, table).unwrap()
}

/// Bernoulli bandit: arm `i` pays 1 with probability `probs[i]`, else 0.
pub fn bernoulli_bandit(probs: &[f64]) -> TableMdp {
    let arms: Vec<(f64, Vec<(f64, f64)>)> = probs
        .iter()
        .map(|&p| {
            let dist = [(1.0, p), (0.0, 1.0 - p)].into_iter().filter(|d| d.1 > 0.0).collect();
            (0.0, dist)
        })
        .collect();
    payout_bandit("bernoulli_bandit", &arms)
}

/// Arm means of [`four_arm_game`].
pub const FOUR_ARM_MEANS: [f64; 4] = [0.0, 0.1, 0.5, 0.6];
/// Reward threshold under which arms {0, 1} and {2, 3} are each similar.
pub const FOUR_ARM_EPS_A: f64 = 0.15;

/// Depth-one game with four noisy arms. Arm `i` pays `FOUR_ARM_MEANS[i]` plus
/// zero-mean noise of `+-noise`; the noise outcomes are shared by all arms, so
/// with `eps_t = 2` and `eps_a = FOUR_ARM_EPS_A` the abstraction groups the two
/// weak arms and the two strong arms. Only the last arm is optimal.
pub fn four_arm_game(noise: f64) -> TableMdp {
    let dist = vec![(noise, 0.5), (-noise, 0.5)];
    let arms: Vec<(f64, Vec<(f64, f64)>)> = FOUR_ARM_MEANS.iter().map(|&m| (m, dist.clone())).collect();
    payout_bandit("four_arm_game", &arms)
}

/// Random tabular MDP for oracle cross-checks: every state has between one and
/// `max_actions` actions with up to `max_succ` successors; state `n - 1` is terminal.
pub fn random_micro_mdp(rng: &mut SimRng, n: usize, max_actions: usize, max_succ: usize) -> TableMdp {
    let mut table = Vec::with_capacity(n);
    for s in 0..n {
        if s + 1 == n {
            table.push(Vec::new());
            continue;
        }
        let k = rng.gen_range(1..=max_actions);
        let acts = (0..k)
            .map(|_| {
                let m = rng.gen_range(1..=max_succ);
                let mut targets: Vec<usize> = (0..m).map(|_| rng.gen_range(0..n)).collect();
                targets.sort_unstable();
                targets.dedup();
                let weights: Vec<f64> = targets.iter().map(|_| rng.gen_range(0.1..1.0)).collect();
                let total: f64 = weights.iter().sum();
                let mut next: Vec<(usize, f64)> = targets.into_iter().zip(weights.iter().map(|w| w / total)).collect();
                // renormalize the last entry so the sum is exact up to one rounding
                let head: f64 = next[..next.len() - 1].iter().map(|d| d.1).sum();
                next.last_mut().unwrap().1 = 1.0 - head;
                act(rng.gen_range(-2.0..2.0_f64).round(), next)
            })
            .collect();
        table.push(acts);
    }
    let mut terminal = vec![false; n];
    terminal[n - 1] = true;
    TableMdp::new("random_micro_mdp", vec![(0, 1.0)], terminal, table).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{enumerate_next, seeded_rng, step};

    #[test]
    fn bandit_payout_states_are_shared() {
        let m = bernoulli_bandit(&[0.8, 0.2]);
        assert_eq!(m.num_states(), 4);
        let root = TableMdp::state(0);
        let d0 = enumerate_next(&m, &root, Action(0)).unwrap();
        let d1 = enumerate_next(&m, &root, Action(1)).unwrap();
        assert_eq!(d0.len(), 2);
        assert_eq!(d0.iter().map(|d| &d.0).collect::<Vec<_>>(), d1.iter().map(|d| &d.0).collect::<Vec<_>>());
    }

    #[test]
    fn four_arm_rewards() {
        let m = four_arm_game(1.0);
        let root = TableMdp::state(0);
        for (i, &mu) in FOUR_ARM_MEANS.iter().enumerate() {
            assert_eq!(m.reward(&root, Action(i as u32)), mu);
        }
        let mut rng = seeded_rng(3, 0);
        let (payout, _) = step(&m, &root, Action(3), &mut rng).unwrap();
        let (end, r) = step(&m, &payout, Action(0), &mut rng).unwrap();
        assert!(r == 1.0 || r == -1.0);
        assert!(m.is_terminal(&end));
    }

    #[test]
    fn micro_mdps_are_valid() {
        let mut rng = seeded_rng(11, 0);
        for _ in 0..50 {
            let m = random_micro_mdp(&mut rng, 5, 3, 3);
            for s in 0..4 {
                for a in m.actions(&TableMdp::state(s)) {
                    let total: f64 = enumerate_next(&m, &TableMdp::state(s), a).unwrap().iter().map(|d| d.1).sum();
                    assert!((total - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(TableMdp::new("x", vec![(0, 1.0)], vec![false], vec![Vec::new()]).is_err());
        assert!(TableMdp::new("x", vec![(0, 0.5)], vec![true], vec![Vec::new()]).is_err());
    }
}
