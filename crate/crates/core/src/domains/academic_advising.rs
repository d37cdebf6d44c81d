use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Params;
use crate::error::{Error, Result};
use crate::mdp::{sample_index, Action, MdpModel, SimRng, State};

pub const NOT_TAKEN: u8 = 0;
pub const FAILED: u8 = 1;
pub const LOW: u8 = 2;
pub const HIGH: u8 = 3;

/// A student choosing courses until every course is passed.
///
/// Course `i > 0` has up to two prerequisites among lower-numbered courses,
/// drawn from the instance seed; the first `mandatory` courses are mandatory.
/// Taking a course passes it with probability `0.15 + 0.7 * w`, where `w` is
/// the mean prerequisite credit (1 for a high grade, 0.6 for a low grade, 0
/// otherwise; courses without prerequisites use `w = 1`). A pass is a high
/// grade half of the time. Each step costs `course_cost`, plus `penalty`
/// while a mandatory course is still open.
#[derive(Debug, Clone)]
pub struct AcademicAdvising {
    prereqs: Vec<Vec<usize>>,
    mandatory: usize,
    course_cost: f64,
    penalty: f64,
}

impl AcademicAdvising {
    pub(crate) fn from_params(p: &mut Params, seed: u64) -> Result<Self> {
        let n = p.positive("courses", 5)?;
        let mandatory = p.size("mandatory", 3)?;
        let course_cost = p.f64("course_cost", 1.0)?;
        let penalty = p.f64("penalty", 4.0)?;
        if mandatory > n {
            return Err(Error::Config("more mandatory courses than courses".into()));
        }
        if n > 24 {
            return Err(Error::Config("academic_advising supports at most 24 courses".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prereqs = (0..n)
            .map(|i| {
                if i == 0 {
                    return Vec::new();
                }
                let k = rng.gen_range(0..=2usize.min(i));
                let mut pre: Vec<usize> = (0..k).map(|_| rng.gen_range(0..i)).collect();
                pre.sort_unstable();
                pre.dedup();
                pre
            })
            .collect();
        Ok(AcademicAdvising { prereqs, mandatory, course_cost, penalty })
    }

    pub fn courses(&self) -> usize {
        self.prereqs.len()
    }

    pub fn prerequisites(&self, course: usize) -> &[usize] {
        &self.prereqs[course]
    }

    fn passed(grade: u8) -> bool {
        grade == LOW || grade == HIGH
    }

    pub fn pass_probability(&self, s: &State, course: usize) -> f64 {
        let pre = &self.prereqs[course];
        if pre.is_empty() {
            return 0.85;
        }
        let credit: f64 = pre
            .iter()
            .map(|&j| match s.bytes()[j] {
                HIGH => 1.0,
                LOW => 0.6,
                _ => 0.0,
            })
            .sum();
        0.15 + 0.7 * credit / pre.len() as f64
    }

    fn outcomes(&self, s: &State, a: Action) -> [(State, f64); 3] {
        let course = a.0 as usize;
        let pass = self.pass_probability(s, course);
        let with = |grade: u8| {
            let mut b = s.bytes().to_vec();
            b[course] = grade;
            State::from(b)
        };
        [(with(FAILED), 1.0 - pass), (with(LOW), pass / 2.0), (with(HIGH), pass / 2.0)]
    }
}

impl MdpModel for AcademicAdvising {
    fn name(&self) -> &str {
        "academic_advising"
    }

    fn initial_state(&self, _rng: &mut SimRng) -> State {
        State::from(vec![NOT_TAKEN; self.courses()])
    }

    fn validate(&self, s: &State) -> Result<()> {
        if s.len() != self.courses() || s.bytes().iter().any(|&b| b > HIGH) {
            return Err(Error::InvalidState(format!("academic_advising {s:?}")));
        }
        Ok(())
    }

    fn is_terminal(&self, s: &State) -> bool {
        s.bytes().iter().all(|&g| Self::passed(g))
    }

    fn actions(&self, s: &State) -> Vec<Action> {
        s.bytes().iter().enumerate().filter(|(_, &g)| !Self::passed(g)).map(|(i, _)| Action(i as u32)).collect()
    }

    fn reward(&self, s: &State, _a: Action) -> f64 {
        let open = s.bytes()[..self.mandatory].iter().any(|&g| !Self::passed(g));
        -self.course_cost - if open { self.penalty } else { 0.0 }
    }

    fn sample_next(&self, s: &State, a: Action, rng: &mut SimRng) -> State {
        let outs = self.outcomes(s, a);
        let probs = [outs[0].1, outs[1].1, outs[2].1];
        let i = sample_index(&probs, rng);
        outs[i].0.clone()
    }

    fn successors(&self, s: &State, a: Action) -> Option<Vec<(State, f64)>> {
        Some(self.outcomes(s, a).to_vec())
    }

    fn supports_enumeration(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{build_domain, DomainName, DomainSpec};
    use crate::mdp::legal_actions;

    #[test]
    fn passed_courses_are_not_offered() {
        let m = build_domain(&DomainSpec::small(DomainName::AcademicAdvising)).unwrap();
        let s = State::from(vec![HIGH, FAILED, NOT_TAKEN]);
        assert_eq!(legal_actions(m.as_ref(), &s).unwrap(), vec![Action(1), Action(2)]);
        assert!(m.is_terminal(&State::from(vec![HIGH, LOW, HIGH])));
    }

    #[test]
    fn penalty_only_while_mandatory_open() {
        let m = build_domain(&DomainSpec::small(DomainName::AcademicAdvising)).unwrap();
        assert_eq!(m.reward(&State::from(vec![HIGH, NOT_TAKEN, NOT_TAKEN]), Action(1)), -5.0);
        assert_eq!(m.reward(&State::from(vec![HIGH, LOW, NOT_TAKEN]), Action(2)), -1.0);
    }
}
