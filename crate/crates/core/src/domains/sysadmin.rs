use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Params;
use crate::error::{Error, Result};
use crate::mdp::{bernoulli, enumerate_bits, Action, MdpModel, SimRng, State};

/// Network of machines that fail and get rebooted.
///
/// The topology is a ring plus `extra_edges` random chords drawn from the
/// instance seed. A running machine keeps running with probability
/// `0.45 + 0.5 * (1 + running neighbours) / (1 + neighbours)`; a failed machine
/// restarts on its own with `restart_prob`; the rebooted machine is running
/// next step with `reboot_prob`. Reward is the number of running machines.
#[derive(Debug, Clone)]
pub struct SysAdmin {
    neighbours: Vec<Vec<usize>>,
    reboot_prob: f64,
    restart_prob: f64,
}

impl SysAdmin {
    pub(crate) fn from_params(p: &mut Params, seed: u64) -> Result<Self> {
        let n = p.positive("machines", 6)?;
        let extra = p.size("extra_edges", 2)?;
        let reboot_prob = p.prob("reboot_prob", 0.9)?;
        let restart_prob = p.prob("restart_prob", 0.05)?;
        if n > 20 {
            return Err(Error::Config("sysadmin supports at most 20 machines".into()));
        }
        let mut edges = vec![Vec::new(); n];
        let link = |a: usize, b: usize, edges: &mut Vec<Vec<usize>>| {
            if a != b && !edges[a].contains(&b) {
                edges[a].push(b);
                edges[b].push(a);
            }
        };
        if n > 1 {
            for i in 0..n {
                link(i, (i + 1) % n, &mut edges);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if n > 2 {
            for _ in 0..extra {
                let a = rng.gen_range(0..n);
                let b = rng.gen_range(0..n);
                link(a, b, &mut edges);
            }
        }
        for e in &mut edges {
            e.sort_unstable();
        }
        Ok(SysAdmin { neighbours: edges, reboot_prob, restart_prob })
    }

    pub fn machines(&self) -> usize {
        self.neighbours.len()
    }

    pub fn neighbours(&self, i: usize) -> &[usize] {
        &self.neighbours[i]
    }

    fn running_probs(&self, s: &State, a: Action) -> Vec<f64> {
        let up = s.bytes();
        (0..self.machines())
            .map(|i| {
                if i == a.0 as usize {
                    self.reboot_prob
                } else if up[i] == 1 {
                    let nb = &self.neighbours[i];
                    let running = nb.iter().filter(|&&j| up[j] == 1).count();
                    0.45 + 0.5 * (1 + running) as f64 / (1 + nb.len()) as f64
                } else {
                    self.restart_prob
                }
            })
            .collect()
    }
}

impl MdpModel for SysAdmin {
    fn name(&self) -> &str {
        "sysadmin"
    }

    fn initial_state(&self, _rng: &mut SimRng) -> State {
        State::from(vec![1u8; self.machines()])
    }

    fn validate(&self, s: &State) -> Result<()> {
        if s.len() != self.machines() || s.bytes().iter().any(|&b| b > 1) {
            return Err(Error::InvalidState(format!("sysadmin {s:?}")));
        }
        Ok(())
    }

    fn is_terminal(&self, _s: &State) -> bool {
        false
    }

    fn actions(&self, _s: &State) -> Vec<Action> {
        (0..self.machines() as u32).map(Action).collect()
    }

    fn reward(&self, s: &State, _a: Action) -> f64 {
        s.bytes().iter().filter(|&&b| b == 1).count() as f64
    }

    fn sample_next(&self, s: &State, a: Action, rng: &mut SimRng) -> State {
        let probs = self.running_probs(s, a);
        State::from(probs.iter().map(|&p| bernoulli(p, rng) as u8).collect::<Vec<_>>())
    }

    fn successors(&self, s: &State, a: Action) -> Option<Vec<(State, f64)>> {
        let probs = self.running_probs(s, a);
        Some(
            enumerate_bits(&probs)
                .into_iter()
                .map(|(bits, p)| (State::from(bits.into_iter().map(u8::from).collect::<Vec<_>>()), p))
                .collect(),
        )
    }

    fn supports_enumeration(&self) -> bool {
        true
    }
}
