use super::Params;
use crate::error::{Error, Result};
use crate::mdp::{bernoulli, Action, MdpModel, SimRng, State};

pub const MOVE_EAST: Action = Action(0);
pub const MOVE_NORTH: Action = Action(1);
pub const MOVE_SOUTHEAST: Action = Action(2);
pub const CHANGE_TIRE: Action = Action(3);
pub const LOAD_TIRE: Action = Action(4);
pub const WAIT: Action = Action(5);

/// Triangle tireworld on the lattice `{(x, y) : x + y < side}`.
///
/// The car starts at `(0, 0)` and must reach `(side - 1, 0)`. Roads lead east,
/// north and south-east. Every move flattens the tire with `flat_prob`; a flat
/// car can only change to a carried spare. Spares lie along the west edge and
/// the hypotenuse, so the short road along the base has none. Moving onto the
/// goal earns `goal_reward`; every other action costs 1. Waiting is always
/// possible, so a stranded car still has an action.
#[derive(Debug, Clone)]
pub struct TriangleTireworld {
    side: usize,
    nodes: Vec<(usize, usize)>,
    initial_spares: Vec<bool>,
    flat_prob: f64,
    goal_reward: f64,
}

// encoding: [node, flat, has_spare, spare bitmap bytes...]
impl TriangleTireworld {
    pub(crate) fn from_params(p: &mut Params) -> Result<Self> {
        let side = p.size("side", 4)?;
        let flat_prob = p.prob("flat_prob", 0.5)?;
        let goal_reward = p.f64("goal_reward", 100.0)?;
        if !(2..=12).contains(&side) {
            return Err(Error::Config("triangle_tireworld side must be in 2..=12".into()));
        }
        let mut nodes = Vec::new();
        for y in 0..side {
            for x in 0..side - y {
                nodes.push((x, y));
            }
        }
        let initial_spares = nodes.iter().map(|&(x, y)| y > 0 && (x == 0 || x + y == side - 1)).collect();
        Ok(TriangleTireworld { side, nodes, initial_spares, flat_prob, goal_reward })
    }

    fn node_index(&self, x: usize, y: usize) -> Option<usize> {
        if x + y >= self.side {
            return None;
        }
        self.nodes.iter().position(|&n| n == (x, y))
    }

    fn goal(&self) -> usize {
        self.node_index(self.side - 1, 0).unwrap()
    }

    fn spare_bytes(&self) -> usize {
        self.nodes.len().div_ceil(8)
    }

    pub fn encode(&self, node: usize, flat: bool, has_spare: bool, spares: &[bool]) -> State {
        let mut b = vec![node as u8, flat as u8, has_spare as u8];
        let mut bits = vec![0u8; self.spare_bytes()];
        for (i, &s) in spares.iter().enumerate() {
            if s {
                bits[i / 8] |= 1 << (i % 8);
            }
        }
        b.extend(bits);
        State::from(b)
    }

    fn decode(&self, s: &State) -> (usize, bool, bool, Vec<bool>) {
        let b = s.bytes();
        let spares = (0..self.nodes.len()).map(|i| b[3 + i / 8] & (1 << (i % 8)) != 0).collect();
        (b[0] as usize, b[1] == 1, b[2] == 1, spares)
    }

    fn destination(&self, node: usize, a: Action) -> Option<usize> {
        let (x, y) = self.nodes[node];
        match a {
            MOVE_EAST => self.node_index(x + 1, y),
            MOVE_NORTH => self.node_index(x, y + 1),
            MOVE_SOUTHEAST if y > 0 => self.node_index(x + 1, y - 1),
            _ => None,
        }
    }

    /// Deterministic part of the transition and whether the tire may go flat.
    fn apply(&self, s: &State, a: Action) -> (State, bool) {
        let (node, flat, has_spare, mut spares) = self.decode(s);
        match a {
            CHANGE_TIRE => (self.encode(node, false, false, &spares), false),
            LOAD_TIRE => {
                spares[node] = false;
                (self.encode(node, flat, true, &spares), false)
            }
            WAIT => (s.clone(), false),
            _ => {
                let dest = self.destination(node, a).expect("legal move");
                (self.encode(dest, false, has_spare, &spares), true)
            }
        }
    }

    fn flatten(&self, s: &State) -> State {
        let mut b = s.bytes().to_vec();
        b[1] = 1;
        State::from(b)
    }
}

impl MdpModel for TriangleTireworld {
    fn name(&self) -> &str {
        "triangle_tireworld"
    }

    fn initial_state(&self, _rng: &mut SimRng) -> State {
        self.encode(0, false, false, &self.initial_spares)
    }

    fn validate(&self, s: &State) -> Result<()> {
        let b = s.bytes();
        if b.len() != 3 + self.spare_bytes() || b[0] as usize >= self.nodes.len() || b[1] > 1 || b[2] > 1 {
            return Err(Error::InvalidState(format!("triangle_tireworld {s:?}")));
        }
        Ok(())
    }

    fn is_terminal(&self, s: &State) -> bool {
        s.bytes()[0] as usize == self.goal()
    }

    fn actions(&self, s: &State) -> Vec<Action> {
        let (node, flat, has_spare, spares) = self.decode(s);
        let mut acts = Vec::with_capacity(4);
        if !flat {
            for a in [MOVE_EAST, MOVE_NORTH, MOVE_SOUTHEAST] {
                if self.destination(node, a).is_some() {
                    acts.push(a);
                }
            }
        }
        if flat && has_spare {
            acts.push(CHANGE_TIRE);
        }
        if spares[node] && !has_spare {
            acts.push(LOAD_TIRE);
        }
        acts.push(WAIT);
        acts
    }

    fn reward(&self, s: &State, a: Action) -> f64 {
        let node = s.bytes()[0] as usize;
        if self.destination(node, a) == Some(self.goal()) {
            self.goal_reward
        } else {
            -1.0
        }
    }

    fn sample_next(&self, s: &State, a: Action, rng: &mut SimRng) -> State {
        let (next, may_flat) = self.apply(s, a);
        if may_flat && bernoulli(self.flat_prob, rng) {
            self.flatten(&next)
        } else {
            next
        }
    }

    fn successors(&self, s: &State, a: Action) -> Option<Vec<(State, f64)>> {
        let (next, may_flat) = self.apply(s, a);
        if may_flat {
            let flat = self.flatten(&next);
            Some(vec![(next, 1.0 - self.flat_prob), (flat, self.flat_prob)])
        } else {
            Some(vec![(next, 1.0)])
        }
    }

    fn supports_enumeration(&self) -> bool {
        true
    }
}
