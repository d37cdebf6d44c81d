use rand::Rng;

use super::Params;
use crate::error::{Error, Result};
use crate::mdp::{Action, MdpModel, SimRng, State};

const SMALL_TRACK: &str = "\
#######
#S....#
####..#
####GG#
#######";

const DESK_TRACK: &str = "\
############
#S.........#
#S.........#
#######....#
#######....#
#GG........#
############";

/// Racetrack on a character map (`#` wall, `.` road, `S` start, `G` goal).
///
/// State is position and velocity. Each of the nine actions adds a vector from
/// `{-1, 0, 1}^2` to the velocity, except that with probability `slip` the
/// acceleration is replaced by zero. Velocity components are clamped to
/// `[-max_speed, max_speed]`; the car then moves along the straight segment to
/// its new position. Touching a goal cell ends the episode; hitting a wall or
/// the border resets the car to a uniformly chosen start cell at rest. Every
/// step costs 1.
#[derive(Debug, Clone)]
pub struct Racetrack {
    width: usize,
    height: usize,
    cells: Vec<u8>,
    starts: Vec<(usize, usize)>,
    slip: f64,
    max_speed: i32,
}

enum Outcome {
    Moved(usize, usize),
    Goal(usize, usize),
    Crash,
}

impl Racetrack {
    pub(crate) fn from_params(p: &mut Params) -> Result<Self> {
        let track = p.string("track", "desk")?;
        let slip = p.prob("slip", 0.2)?;
        let max_speed = p.positive("max_speed", 2)? as i32;
        let map = match track.as_str() {
            "small" => SMALL_TRACK,
            "desk" => DESK_TRACK,
            other => return Err(Error::Config(format!("unknown racetrack track '{other}'"))),
        };
        Self::from_map(map, slip, max_speed)
    }

    pub fn from_map(map: &str, slip: f64, max_speed: i32) -> Result<Self> {
        let rows: Vec<&[u8]> = map.lines().map(str::as_bytes).collect();
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        if height == 0 || width == 0 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::Config("racetrack map must be a non-empty rectangle".into()));
        }
        if max_speed > 60 {
            return Err(Error::Config("max_speed too large".into()));
        }
        let mut cells = Vec::with_capacity(width * height);
        let mut starts = Vec::new();
        for (y, row) in rows.iter().enumerate() {
            for (x, &c) in row.iter().enumerate() {
                if !b"#.SG".contains(&c) {
                    return Err(Error::Config(format!("bad racetrack cell '{}'", c as char)));
                }
                if c == b'S' {
                    starts.push((x, y));
                }
                cells.push(c);
            }
        }
        if starts.is_empty() || !cells.contains(&b'G') {
            return Err(Error::Config("racetrack map needs start and goal cells".into()));
        }
        Ok(Racetrack { width, height, cells, starts, slip, max_speed })
    }

    pub fn starts(&self) -> &[(usize, usize)] {
        &self.starts
    }

    pub fn max_speed(&self) -> i32 {
        self.max_speed
    }

    pub fn encode(&self, pos: (usize, usize), vel: (i32, i32)) -> State {
        let m = self.max_speed;
        State::from_bytes(&[pos.0 as u8, pos.1 as u8, (vel.0 + m) as u8, (vel.1 + m) as u8])
    }

    pub fn decode(&self, s: &State) -> ((usize, usize), (i32, i32)) {
        let b = s.bytes();
        let m = self.max_speed;
        ((b[0] as usize, b[1] as usize), (b[2] as i32 - m, b[3] as i32 - m))
    }

    fn cell(&self, x: i32, y: i32) -> u8 {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            b'#'
        } else {
            self.cells[y as usize * self.width + x as usize]
        }
    }

    /// Acceleration encoded by an action index in `0..9`.
    pub fn acceleration(a: Action) -> (i32, i32) {
        (a.0 as i32 % 3 - 1, a.0 as i32 / 3 - 1)
    }

    fn drive(&self, pos: (usize, usize), vel: (i32, i32)) -> Outcome {
        let (x0, y0) = (pos.0 as i32, pos.1 as i32);
        let steps = vel.0.abs().max(vel.1.abs());
        for k in 1..=steps {
            let t = k as f64 / steps as f64;
            let x = x0 + (vel.0 as f64 * t).round() as i32;
            let y = y0 + (vel.1 as f64 * t).round() as i32;
            match self.cell(x, y) {
                b'#' => return Outcome::Crash,
                b'G' => return Outcome::Goal(x as usize, y as usize),
                _ => {}
            }
        }
        Outcome::Moved((x0 + vel.0) as usize, (y0 + vel.1) as usize)
    }

    fn outcome_states(&self, s: &State, accel: (i32, i32)) -> Vec<(State, f64)> {
        let (pos, vel) = self.decode(s);
        let m = self.max_speed;
        let v = ((vel.0 + accel.0).clamp(-m, m), (vel.1 + accel.1).clamp(-m, m));
        match self.drive(pos, v) {
            Outcome::Moved(x, y) | Outcome::Goal(x, y) => vec![(self.encode((x, y), v), 1.0)],
            Outcome::Crash => {
                let p = 1.0 / self.starts.len() as f64;
                self.starts.iter().map(|&st| (self.encode(st, (0, 0)), p)).collect()
            }
        }
    }
}

impl MdpModel for Racetrack {
    fn name(&self) -> &str {
        "racetrack"
    }

    fn initial_state(&self, rng: &mut SimRng) -> State {
        let st = self.starts[rng.gen_range(0..self.starts.len())];
        self.encode(st, (0, 0))
    }

    fn validate(&self, s: &State) -> Result<()> {
        let b = s.bytes();
        let span = 2 * self.max_speed as u8;
        if b.len() != 4
            || b[0] as usize >= self.width
            || b[1] as usize >= self.height
            || b[2] > span
            || b[3] > span
            || self.cell(b[0] as i32, b[1] as i32) == b'#'
        {
            return Err(Error::InvalidState(format!("racetrack {s:?}")));
        }
        Ok(())
    }

    fn is_terminal(&self, s: &State) -> bool {
        let b = s.bytes();
        self.cell(b[0] as i32, b[1] as i32) == b'G'
    }

    fn actions(&self, _s: &State) -> Vec<Action> {
        (0..9).map(Action).collect()
    }

    fn reward(&self, _s: &State, _a: Action) -> f64 {
        -1.0
    }

    fn sample_next(&self, s: &State, a: Action, rng: &mut SimRng) -> State {
        let accel = if self.slip > 0.0 && rng.gen::<f64>() < self.slip { (0, 0) } else { Self::acceleration(a) };
        let outcomes = self.outcome_states(s, accel);
        if outcomes.len() == 1 {
            outcomes.into_iter().next().unwrap().0
        } else {
            let i = rng.gen_range(0..outcomes.len());
            outcomes.into_iter().nth(i).unwrap().0
        }
    }

    fn successors(&self, s: &State, a: Action) -> Option<Vec<(State, f64)>> {
        let mut out: Vec<(State, f64)> = self
            .outcome_states(s, Self::acceleration(a))
            .into_iter()
            .map(|(st, p)| (st, p * (1.0 - self.slip)))
            .collect();
        if self.slip > 0.0 {
            out.extend(self.outcome_states(s, (0, 0)).into_iter().map(|(st, p)| (st, p * self.slip)));
        }
        Some(out)
    }

    fn supports_enumeration(&self) -> bool {
        true
    }
}
