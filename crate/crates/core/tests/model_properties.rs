use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use absdrop::domains::{build_domain, DomainName, DomainSpec, Racetrack};
use absdrop::harness::{run_episode, Algorithm, RunConfig};
use absdrop::mdp::{enumerate_next, legal_actions, seeded_rng, step, MdpModel};
use absdrop::oracle::value_iteration;
use absdrop::{Action, LayeredStateKey, SimRng, State};
use proptest::prelude::*;
use rand::Rng;

fn small_models() -> Vec<Arc<dyn MdpModel>> {
    DomainName::ALL.iter().map(|&n| build_domain(&DomainSpec::small(n)).unwrap()).collect()
}

/// States visited by a uniformly random walk, restarting at terminals.
fn random_states(model: &dyn MdpModel, rng: &mut SimRng, count: usize) -> Vec<State> {
    let mut out = Vec::with_capacity(count);
    let mut s = model.initial_state(rng);
    while out.len() < count {
        if model.is_terminal(&s) {
            s = model.initial_state(rng);
            continue;
        }
        out.push(s.clone());
        let acts = model.actions(&s);
        let a = acts[rng.gen_range(0..acts.len())];
        s = model.sample_next(&s, a, rng);
    }
    out
}

#[test]
fn rewards_are_deterministic() {
    let mut rng = seeded_rng(1, 0);
    for m in small_models() {
        for s in random_states(m.as_ref(), &mut rng, 1000) {
            let acts = legal_actions(m.as_ref(), &s).unwrap();
            let a = acts[rng.gen_range(0..acts.len())];
            let first = step(m.as_ref(), &s, a, &mut rng).unwrap().1;
            for _ in 0..9 {
                assert_eq!(step(m.as_ref(), &s, a, &mut rng).unwrap().1, first, "{}", m.name());
            }
        }
    }
}

#[test]
fn enumerations_are_distributions_covering_samples() {
    let mut rng = seeded_rng(2, 0);
    for m in small_models().into_iter().filter(|m| m.supports_enumeration()) {
        for s in random_states(m.as_ref(), &mut rng, 40) {
            for a in legal_actions(m.as_ref(), &s).unwrap() {
                let dist = enumerate_next(m.as_ref(), &s, a).unwrap();
                let total: f64 = dist.iter().map(|d| d.1).sum();
                assert!((total - 1.0).abs() < 1e-9, "{} sums to {total}", m.name());
                assert!(dist.iter().all(|d| d.1 > 0.0));
                assert!(dist.windows(2).all(|w| w[0].0 < w[1].0), "not deduplicated");
                for _ in 0..250 {
                    let next = m.sample_next(&s, a, &mut rng);
                    assert!(dist.binary_search_by(|d| d.0.cmp(&next)).is_ok(), "{} sample outside support", m.name());
                }
            }
        }
    }
}

#[test]
fn sample_frequencies_match_enumeration() {
    // 100k draws of one stochastic transition per enumerable domain
    let mut rng = seeded_rng(3, 0);
    for m in small_models().into_iter().filter(|m| m.supports_enumeration()) {
        let s = random_states(m.as_ref(), &mut rng, 5).pop().unwrap();
        let a = legal_actions(m.as_ref(), &s).unwrap()[0];
        let dist = enumerate_next(m.as_ref(), &s, a).unwrap();
        let n = 100_000;
        let mut counts = vec![0u64; dist.len()];
        for _ in 0..n {
            let next = m.sample_next(&s, a, &mut rng);
            counts[dist.binary_search_by(|d| d.0.cmp(&next)).unwrap()] += 1;
        }
        for ((_, p), k) in dist.iter().zip(counts) {
            let se = (p * (1.0 - p) / n as f64).sqrt();
            let freq = k as f64 / n as f64;
            assert!((freq - p).abs() <= 3.0 * se + 1e-12, "{}: {freq} vs {p}", m.name());
        }
    }
}

fn hash_of<T: Hash>(v: &T) -> u64 {
    let mut h = DefaultHasher::new();
    v.hash(&mut h);
    h.finish()
}

proptest! {
    #[test]
    fn layered_key_hash_agrees_with_equality(a in proptest::collection::vec(0u8..3, 0..4),
                                             b in proptest::collection::vec(0u8..3, 0..4),
                                             da in 0u32..3, db in 0u32..3) {
        let ka = LayeredStateKey::new(State::from_bytes(&a), da);
        let kb = LayeredStateKey::new(State::from_bytes(&b), db);
        prop_assert_eq!(ka == kb, a == b && da == db);
        if ka == kb {
            prop_assert_eq!(hash_of(&ka), hash_of(&kb));
        }
    }

    #[test]
    fn racetrack_without_slip_moves_by_new_velocity(seed in 0u64..10_000) {
        let track = Racetrack::from_map("#########\n#S......#\n#.......#\n#......G#\n#########", 0.0, 2).unwrap();
        let mut rng = seeded_rng(seed, 0);
        let mut s = track.initial_state(&mut rng);
        for _ in 0..20 {
            if track.is_terminal(&s) {
                break;
            }
            let acts = track.actions(&s);
            let a = acts[rng.gen_range(0..acts.len())];
            let (pos, _) = track.decode(&s);
            let next = track.sample_next(&s, a, &mut rng);
            let (npos, nvel) = track.decode(&next);
            let crashed = nvel == (0, 0) && track.starts().contains(&npos) && npos != pos;
            if !crashed && !track.is_terminal(&next) {
                prop_assert_eq!(npos.0 as i32, pos.0 as i32 + nvel.0);
                prop_assert_eq!(npos.1 as i32, pos.1 as i32 + nvel.1);
            }
            s = next;
        }
    }
}

/// Independent Conway step on a bounded grid, written cell by cell.
fn naive_life(cells: &[u8], n: usize) -> Vec<u8> {
    let get = |r: isize, c: isize| -> u8 {
        if r < 0 || c < 0 || r >= n as isize || c >= n as isize {
            0
        } else {
            cells[r as usize * n + c as usize]
        }
    };
    let mut out = Vec::with_capacity(n * n);
    for r in 0..n as isize {
        for c in 0..n as isize {
            let neighbours: u8 = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
                .iter()
                .map(|(dr, dc)| get(r + dr, c + dc))
                .sum();
            let alive = get(r, c) == 1;
            out.push(u8::from(neighbours == 3 || (alive && neighbours == 2)));
        }
    }
    out
}

#[test]
fn noiseless_life_is_conway() {
    let spec = DomainSpec::new(DomainName::GameOfLife).with_param("size", 4).with_param("noise", 0.0);
    let model = build_domain(&spec).unwrap();
    let mut rng = seeded_rng(4, 0);
    for _ in 0..20 {
        let cells: Vec<u8> = (0..16).map(|_| rng.gen_range(0..2)).collect();
        let s = State::from(cells.clone());
        // action 0 is the noop
        let next = model.sample_next(&s, Action(0), &mut rng);
        assert_eq!(next.bytes(), naive_life(&cells, 4).as_slice());
    }
}

#[test]
fn navigation_value_bounds() {
    use absdrop::domains::Navigation;
    for (rows, cols) in [(2, 2), (3, 3), (2, 4)] {
        let nav = Navigation::with_reset_probabilities(rows, cols, vec![0.0; rows * cols]).unwrap();
        let start = nav.encode(nav.start());
        let h = 12;
        let t = value_iteration(&nav, &start, h).unwrap();
        let v = t.value(&LayeredStateKey::new(start, 0));
        let dist = nav.start().0.abs_diff(nav.goal().0) + nav.start().1.abs_diff(nav.goal().1);
        assert!(v >= -(h as f64) && v <= -(dist as f64));
    }
}

#[test]
fn episodes_stop_at_the_horizon() {
    for name in DomainName::ALL {
        let mut cfg = RunConfig::new(DomainSpec::small(name), Algorithm::Mcts, 20);
        cfg.horizon = 7;
        let ep = run_episode(&cfg, 0).unwrap();
        assert!(ep.decisions <= 7, "{name}");
    }
}
