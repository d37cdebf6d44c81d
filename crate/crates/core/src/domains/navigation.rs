use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Params;
use crate::error::{Error, Result};
use crate::mdp::{bernoulli, Action, MdpModel, SimRng, State};

pub const UP: Action = Action(0);
pub const DOWN: Action = Action(1);
pub const LEFT: Action = Action(2);
pub const RIGHT: Action = Action(3);

/// Grid navigation with per-tile reset probabilities.
///
/// Rows are numbered top to bottom. The robot starts in the bottom-left cell
/// and must reach the bottom-right cell. Moving into a tile resets the robot
/// to the start with that tile's probability; bumping into the border keeps it
/// in place (and still risks the current tile). Every step costs 1.
#[derive(Debug, Clone)]
pub struct Navigation {
    rows: usize,
    cols: usize,
    reset: Vec<f64>,
}

impl Navigation {
    pub(crate) fn from_params(p: &mut Params, seed: u64) -> Result<Self> {
        let rows = p.positive("rows", 4)?;
        let cols = p.positive("cols", 5)?;
        let lo = p.prob("reset_min", 0.0)?;
        let hi = p.prob("reset_max", 0.4)?;
        if lo > hi {
            return Err(Error::Config("reset_min exceeds reset_max".into()));
        }
        if rows > 200 || cols > 200 {
            return Err(Error::Config("navigation grid larger than 200".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut reset: Vec<f64> = (0..rows * cols).map(|_| if hi > lo { rng.gen_range(lo..=hi) } else { lo }).collect();
        let nav = Navigation { rows, cols, reset: Vec::new() };
        reset[nav.index(nav.start())] = 0.0;
        reset[nav.index(nav.goal())] = 0.0;
        Ok(Navigation { reset, ..nav })
    }

    /// Grid with explicit reset probabilities in row-major order.
    pub fn with_reset_probabilities(rows: usize, cols: usize, reset: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || reset.len() != rows * cols {
            return Err(Error::Config("reset table does not match the grid".into()));
        }
        if reset.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("reset probability outside [0, 1]".into()));
        }
        Ok(Navigation { rows, cols, reset })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn start(&self) -> (usize, usize) {
        (self.rows - 1, 0)
    }

    pub fn goal(&self) -> (usize, usize) {
        (self.rows - 1, self.cols - 1)
    }

    pub fn reset_probability(&self, cell: (usize, usize)) -> f64 {
        self.reset[self.index(cell)]
    }

    pub fn encode(&self, cell: (usize, usize)) -> State {
        State::from_bytes(&[cell.0 as u8, cell.1 as u8])
    }

    pub fn decode(&self, s: &State) -> (usize, usize) {
        (s.bytes()[0] as usize, s.bytes()[1] as usize)
    }

    fn index(&self, cell: (usize, usize)) -> usize {
        cell.0 * self.cols + cell.1
    }

    /// Cell the robot attempts to enter.
    pub fn target(&self, cell: (usize, usize), a: Action) -> (usize, usize) {
        let (r, c) = cell;
        match a {
            UP if r > 0 => (r - 1, c),
            DOWN if r + 1 < self.rows => (r + 1, c),
            LEFT if c > 0 => (r, c - 1),
            RIGHT if c + 1 < self.cols => (r, c + 1),
            _ => cell,
        }
    }
}

impl MdpModel for Navigation {
    fn name(&self) -> &str {
        "navigation"
    }

    fn initial_state(&self, _rng: &mut SimRng) -> State {
        self.encode(self.start())
    }

    fn validate(&self, s: &State) -> Result<()> {
        let b = s.bytes();
        if b.len() != 2 || b[0] as usize >= self.rows || b[1] as usize >= self.cols {
            return Err(Error::InvalidState(format!("navigation {s:?}")));
        }
        Ok(())
    }

    fn is_terminal(&self, s: &State) -> bool {
        self.decode(s) == self.goal()
    }

    fn actions(&self, _s: &State) -> Vec<Action> {
        vec![UP, DOWN, LEFT, RIGHT]
    }

    fn reward(&self, _s: &State, _a: Action) -> f64 {
        -1.0
    }

    fn sample_next(&self, s: &State, a: Action, rng: &mut SimRng) -> State {
        let target = self.target(self.decode(s), a);
        if bernoulli(self.reset_probability(target), rng) {
            self.encode(self.start())
        } else {
            self.encode(target)
        }
    }

    fn successors(&self, s: &State, a: Action) -> Option<Vec<(State, f64)>> {
        let target = self.target(self.decode(s), a);
        let q = self.reset_probability(target);
        Some(vec![(self.encode(target), 1.0 - q), (self.encode(self.start()), q)])
    }

    fn supports_enumeration(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{enumerate_next, legal_actions, seeded_rng};

    fn grid(rows: usize, cols: usize, q: f64) -> Navigation {
        let mut reset = vec![q; rows * cols];
        reset[(rows - 1) * cols] = 0.0;
        reset[rows * cols - 1] = 0.0;
        Navigation::with_reset_probabilities(rows, cols, reset).unwrap()
    }

    #[test]
    fn interior_has_four_actions_and_goal_is_terminal() {
        let nav = grid(4, 4, 0.1);
        let interior = nav.encode((1, 1));
        assert_eq!(legal_actions(&nav, &interior).unwrap(), vec![UP, DOWN, LEFT, RIGHT]);
        let goal = nav.encode((3, 3));
        assert!(nav.is_terminal(&goal));
        assert!(legal_actions(&nav, &goal).unwrap().is_empty());
    }

    #[test]
    fn step_costs_one() {
        let nav = grid(3, 3, 0.3);
        let mut rng = seeded_rng(1, 0);
        for a in [UP, DOWN, LEFT, RIGHT] {
            let (_, r) = crate::mdp::step(&nav, &nav.encode((0, 1)), a, &mut rng).unwrap();
            assert_eq!(r, -1.0);
        }
    }

    #[test]
    fn reset_enumeration() {
        let nav = grid(3, 3, 0.25);
        let dist = enumerate_next(&nav, &nav.encode((1, 1)), UP).unwrap();
        let target = nav.encode((0, 1));
        let start = nav.encode((2, 0));
        assert_eq!(dist.len(), 2);
        for (s, p) in dist {
            if s == target {
                assert!((p - 0.75).abs() < 1e-12);
            } else {
                assert_eq!(s, start);
                assert!((p - 0.25).abs() < 1e-12);
            }
        }
        // moving into the start cell merges both outcomes
        let merged = enumerate_next(&nav, &nav.encode((1, 0)), DOWN).unwrap();
        assert_eq!(merged, vec![(start, 1.0)]);
    }

    #[test]
    fn illegal_state_rejected() {
        let nav = grid(3, 3, 0.0);
        assert!(legal_actions(&nav, &State::from_bytes(&[3, 0])).is_err());
    }

    #[test]
    fn instance_seed_is_reproducible() {
        let spec = super::super::DomainSpec::desk(super::super::DomainName::Navigation).with_seed(9);
        let a = super::super::build_domain(&spec).unwrap();
        let b = super::super::build_domain(&spec).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
}
