use rand::Rng;

use super::Params;
use crate::error::{Error, Result};
use crate::mdp::{sample_index, Action, MdpModel, SimRng, State};

/// Compass directions, clockwise from north.
const DIRS: [(i32, i32); 8] = [(0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1)];

/// Sail a boat across an `n x n` grid from `(0, 0)` to `(n-1, n-1)`.
///
/// The wind blows from one of eight directions and turns by 45 degrees to
/// either side with probability `(1 - wind_stay) / 2` each step, independent of
/// the action. In the seven-action variant every heading except straight into
/// the wind is available; the two-action variant only offers east and north.
/// The cost of a move depends on the angle between heading and wind: 1 running
/// downwind up to 4 close-hauled (5 into the wind, two-action variant only).
/// Moves that would leave the grid keep the boat in place.
#[derive(Debug, Clone)]
pub struct SailingWind {
    size: usize,
    seven_actions: bool,
    wind_stay: f64,
}

impl SailingWind {
    pub(crate) fn from_params(p: &mut Params) -> Result<Self> {
        let size = p.positive("size", 5)?;
        let actions = p.size("actions", 7)?;
        let wind_stay = p.prob("wind_stay", 0.4)?;
        if actions != 7 && actions != 2 {
            return Err(Error::Config("sailing_wind actions must be 7 or 2".into()));
        }
        if size > 100 {
            return Err(Error::Config("sailing_wind grid larger than 100".into()));
        }
        Ok(SailingWind { size, seven_actions: actions == 7, wind_stay })
    }

    pub fn encode(&self, x: usize, y: usize, wind: usize) -> State {
        State::from_bytes(&[x as u8, y as u8, wind as u8])
    }

    fn decode(s: &State) -> (usize, usize, usize) {
        let b = s.bytes();
        (b[0] as usize, b[1] as usize, b[2] as usize)
    }

    /// Wind directions reachable in one step, with probabilities.
    pub fn wind_transitions(&self, wind: usize) -> Vec<(usize, f64)> {
        let turn = (1.0 - self.wind_stay) / 2.0;
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(3);
        for (w, p) in [(wind, self.wind_stay), ((wind + 1) % 8, turn), ((wind + 7) % 8, turn)] {
            if p > 0.0 {
                out.push((w, p));
            }
        }
        out
    }

    fn angle(heading: usize, wind: usize) -> usize {
        let d = (heading + 8 - wind) % 8;
        d.min(8 - d)
    }

    fn moved(&self, x: usize, y: usize, heading: usize) -> (usize, usize) {
        let (dx, dy) = DIRS[heading];
        let nx = x as i32 + dx;
        let ny = y as i32 + dy;
        let n = self.size as i32;
        if nx < 0 || ny < 0 || nx >= n || ny >= n {
            (x, y)
        } else {
            (nx as usize, ny as usize)
        }
    }
}

impl MdpModel for SailingWind {
    fn name(&self) -> &str {
        "sailing_wind"
    }

    fn initial_state(&self, rng: &mut SimRng) -> State {
        self.encode(0, 0, rng.gen_range(0..8))
    }

    fn validate(&self, s: &State) -> Result<()> {
        let b = s.bytes();
        if b.len() != 3 || b[0] as usize >= self.size || b[1] as usize >= self.size || b[2] >= 8 {
            return Err(Error::InvalidState(format!("sailing_wind {s:?}")));
        }
        Ok(())
    }

    fn is_terminal(&self, s: &State) -> bool {
        let (x, y, _) = Self::decode(s);
        x + 1 == self.size && y + 1 == self.size
    }

    fn actions(&self, s: &State) -> Vec<Action> {
        if self.seven_actions {
            let (_, _, wind) = Self::decode(s);
            (0..8u32).filter(|&h| h as usize != wind).map(Action).collect()
        } else {
            vec![Action(2), Action(0)]
        }
    }

    fn reward(&self, s: &State, a: Action) -> f64 {
        let (_, _, wind) = Self::decode(s);
        match Self::angle(a.0 as usize, wind) {
            0 => -5.0,
            1 => -4.0,
            2 => -3.0,
            3 => -2.0,
            _ => -1.0,
        }
    }

    fn sample_next(&self, s: &State, a: Action, rng: &mut SimRng) -> State {
        let (x, y, wind) = Self::decode(s);
        let (nx, ny) = self.moved(x, y, a.0 as usize);
        let winds = self.wind_transitions(wind);
        let probs: Vec<f64> = winds.iter().map(|w| w.1).collect();
        let w = winds[sample_index(&probs, rng)].0;
        self.encode(nx, ny, w)
    }

    fn successors(&self, s: &State, a: Action) -> Option<Vec<(State, f64)>> {
        let (x, y, wind) = Self::decode(s);
        let (nx, ny) = self.moved(x, y, a.0 as usize);
        Some(self.wind_transitions(wind).into_iter().map(|(w, p)| (self.encode(nx, ny, w), p)).collect())
    }

    fn supports_enumeration(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{build_domain, DomainName, DomainSpec};
    use crate::mdp::{enumerate_next, legal_actions};

    #[test]
    fn heading_into_wind_is_excluded() {
        let m = build_domain(&DomainSpec::desk(DomainName::SailingWind)).unwrap();
        for wind in 0..8u8 {
            let s = State::from_bytes(&[1, 1, wind]);
            let acts = legal_actions(m.as_ref(), &s).unwrap();
            assert_eq!(acts.len(), 7);
            assert!(!acts.contains(&Action(wind as u32)));
        }
    }

    #[test]
    fn successor_count_matches_wind_chain() {
        let m = build_domain(&DomainSpec::desk(DomainName::SailingWind)).unwrap();
        let s = State::from_bytes(&[2, 0, 3]);
        let dist = enumerate_next(m.as_ref(), &s, Action(2)).unwrap();
        assert_eq!(dist.len(), 3);
        let calm = build_domain(&DomainSpec::desk(DomainName::SailingWind).with_param("wind_stay", 1.0)).unwrap();
        assert_eq!(enumerate_next(calm.as_ref(), &s, Action(2)).unwrap().len(), 1);
    }

    #[test]
    fn two_action_variant() {
        let m = build_domain(&DomainSpec::desk(DomainName::SailingWind).with_param("actions", 2)).unwrap();
        let s = State::from_bytes(&[0, 0, 2]);
        let acts = legal_actions(m.as_ref(), &s).unwrap();
        assert_eq!(acts.len(), 2);
        // heading east straight into an easterly wind
        assert_eq!(m.reward(&s, Action(2)), -5.0);
        assert_eq!(m.reward(&s, Action(0)), -3.0);
    }

    #[test]
    fn downwind_is_cheapest() {
        let m = build_domain(&DomainSpec::desk(DomainName::SailingWind)).unwrap();
        let s = State::from_bytes(&[0, 0, 0]);
        assert_eq!(m.reward(&s, Action(4)), -1.0);
        assert_eq!(m.reward(&s, Action(1)), -4.0);
    }
}
