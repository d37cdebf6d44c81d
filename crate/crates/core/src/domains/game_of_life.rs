use super::Params;
use crate::error::{Error, Result};
use crate::mdp::{bernoulli, enumerate_bits, Action, MdpModel, SimRng, State};

/// Noisy Conway automaton on a bounded `size x size` grid.
///
/// Action 0 does nothing; action `1 + i` protects the alive cell `i`, which is
/// then alive next step with `protect_prob`. Every other cell follows Conway's
/// rule and is flipped with probability `noise`. Reward is the number of alive
/// cells in the current board.
#[derive(Debug, Clone)]
pub struct GameOfLife {
    size: usize,
    noise: f64,
    protect_prob: f64,
    initial: Vec<u8>,
    /// Bit mask of the neighbours of each cell.
    neighbours: Vec<u16>,
}

pub const NOOP: Action = Action(0);

const MAX_CELLS: usize = 16;

impl GameOfLife {
    pub(crate) fn from_params(p: &mut Params) -> Result<Self> {
        let size = p.positive("size", 3)?;
        let noise = p.prob("noise", 0.1)?;
        let protect_prob = p.prob("protect_prob", 0.9)?;
        if size > 4 {
            return Err(Error::Config("game_of_life supports grids up to 4x4".into()));
        }
        // glider-like seed pattern clipped to the grid
        let mut initial = vec![0u8; size * size];
        for &(r, c) in &[(0usize, 1usize), (1, 2), (2, 0), (2, 1), (2, 2)] {
            if r < size && c < size {
                initial[r * size + c] = 1;
            }
        }
        if size < 3 {
            initial.iter_mut().step_by(2).for_each(|b| *b = 1);
        }
        let mut neighbours = vec![0u16; size * size];
        for r in 0..size {
            for c in 0..size {
                for rr in r.saturating_sub(1)..(r + 2).min(size) {
                    for cc in c.saturating_sub(1)..(c + 2).min(size) {
                        if rr != r || cc != c {
                            neighbours[r * size + c] |= 1 << (rr * size + cc);
                        }
                    }
                }
            }
        }
        Ok(GameOfLife { size, noise, protect_prob, initial, neighbours })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Conway's deterministic successor of `cells` (row-major, bounded grid).
    pub fn conway(&self, cells: &[u8]) -> Vec<u8> {
        let mut next = [0u8; MAX_CELLS];
        self.conway_into(cells, &mut next);
        next[..cells.len()].to_vec()
    }

    fn conway_into(&self, cells: &[u8], next: &mut [u8; MAX_CELLS]) {
        let board = cells.iter().enumerate().fold(0u16, |acc, (i, &b)| acc | (u16::from(b) << i));
        for (i, &mask) in self.neighbours.iter().enumerate() {
            let alive = (board & mask).count_ones();
            next[i] = u8::from(alive == 3 || (alive == 2 && cells[i] == 1));
        }
    }

    fn alive_prob(&self, i: usize, alive: u8, protected: Option<usize>) -> f64 {
        if Some(i) == protected {
            self.protect_prob
        } else if alive == 1 {
            1.0 - self.noise
        } else {
            self.noise
        }
    }

    fn alive_probs(&self, s: &State, a: Action) -> Vec<f64> {
        let protected = (a.0 as usize).checked_sub(1);
        self.conway(s.bytes()).into_iter().enumerate().map(|(i, alive)| self.alive_prob(i, alive, protected)).collect()
    }
}

impl MdpModel for GameOfLife {
    fn name(&self) -> &str {
        "game_of_life"
    }

    fn initial_state(&self, _rng: &mut SimRng) -> State {
        State::from(self.initial.clone())
    }

    fn validate(&self, s: &State) -> Result<()> {
        if s.len() != self.size * self.size || s.bytes().iter().any(|&b| b > 1) {
            return Err(Error::InvalidState(format!("game_of_life {s:?}")));
        }
        Ok(())
    }

    fn is_terminal(&self, _s: &State) -> bool {
        false
    }

    fn actions(&self, s: &State) -> Vec<Action> {
        let mut acts = vec![NOOP];
        acts.extend(s.bytes().iter().enumerate().filter(|(_, &b)| b == 1).map(|(i, _)| Action(1 + i as u32)));
        acts
    }

    fn reward(&self, s: &State, _a: Action) -> f64 {
        s.bytes().iter().map(|&b| b as f64).sum()
    }

    fn sample_next(&self, s: &State, a: Action, rng: &mut SimRng) -> State {
        let protected = (a.0 as usize).checked_sub(1);
        let cells = s.bytes();
        let mut next = [0u8; MAX_CELLS];
        self.conway_into(cells, &mut next);
        for (i, b) in next[..cells.len()].iter_mut().enumerate() {
            *b = bernoulli(self.alive_prob(i, *b, protected), rng) as u8;
        }
        State::from_bytes(&next[..cells.len()])
    }

    fn successors(&self, s: &State, a: Action) -> Option<Vec<(State, f64)>> {
        let probs = self.alive_probs(s, a);
        Some(
            enumerate_bits(&probs)
                .into_iter()
                .map(|(bits, p)| (State::from(bits.into_iter().map(u8::from).collect::<Vec<_>>()), p))
                .collect(),
        )
    }

    fn supports_enumeration(&self) -> bool {
        self.size <= 3
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{build_domain, DomainName, DomainSpec};
    use crate::mdp::{legal_actions, seeded_rng, step};

    #[test]
    fn dead_board_earns_nothing() {
        let m = build_domain(&DomainSpec::desk(DomainName::GameOfLife).with_param("size", 3)).unwrap();
        let dead = State::from(vec![0u8; 9]);
        let mut rng = seeded_rng(5, 0);
        let acts = legal_actions(m.as_ref(), &dead).unwrap();
        assert_eq!(acts, vec![NOOP]);
        for a in acts {
            assert_eq!(step(m.as_ref(), &dead, a, &mut rng).unwrap().1, 0.0);
        }
    }

    #[test]
    fn protect_actions_follow_alive_cells() {
        let m = build_domain(&DomainSpec::desk(DomainName::GameOfLife)).unwrap();
        let s = State::from(vec![1, 0, 0, 0, 1, 0, 0, 0, 1]);
        assert_eq!(legal_actions(m.as_ref(), &s).unwrap(), vec![NOOP, Action(1), Action(5), Action(9)]);
    }

    #[test]
    fn blinker_oscillates_without_noise() {
        let spec = DomainSpec::desk(DomainName::GameOfLife).with_param("noise", 0.0);
        let m = build_domain(&spec).unwrap();
        let vertical = State::from(vec![0, 1, 0, 0, 1, 0, 0, 1, 0]);
        let horizontal = State::from(vec![0, 0, 0, 1, 1, 1, 0, 0, 0]);
        let mut rng = seeded_rng(0, 0);
        assert_eq!(step(m.as_ref(), &vertical, NOOP, &mut rng).unwrap().0, horizontal);
        assert_eq!(step(m.as_ref(), &horizontal, NOOP, &mut rng).unwrap().0, vertical);
    }
}
