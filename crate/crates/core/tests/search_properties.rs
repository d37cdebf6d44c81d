use std::collections::{HashMap, HashSet};

use absdrop::abstraction::AbstractionParams;
use absdrop::domains::fixtures::five_state_chain;
use absdrop::domains::{build_domain, DomainName, DomainSpec};
use absdrop::dropping::DropPolicy;
use absdrop::mdp::{seeded_rng, MdpModel};
use absdrop::search::{plan, Search, SearchConfig};

fn config(abstraction: bool, drop: DropPolicy) -> SearchConfig {
    SearchConfig {
        iterations: 500,
        lambda: 2.0,
        horizon: 15,
        abstraction: abstraction.then(AbstractionParams::default),
        drop,
        ..Default::default()
    }
}

#[test]
fn plans_are_reproducible_under_a_seed() {
    for name in DomainName::ALL {
        let model = build_domain(&DomainSpec::small(name)).unwrap();
        for (abs, drop) in [(false, DropPolicy::None), (true, DropPolicy::None), (true, DropPolicy::DEFAULT_CAD)] {
            let cfg = config(abs, drop);
            let run = || {
                let mut rng = seeded_rng(11, 1);
                let root = model.initial_state(&mut rng);
                let (a, d) = plan(model.as_ref(), root, 0, &cfg, &mut rng).unwrap();
                (a, d.state_nodes, d.q_nodes, d.drops)
            };
            assert_eq!(run(), run(), "{name}");
        }
    }
}

#[test]
fn equal_states_at_equal_depth_share_one_node() {
    let model = build_domain(&DomainSpec::small(DomainName::Navigation)).unwrap();
    let cfg = config(false, DropPolicy::None);
    let mut rng = seeded_rng(12, 1);
    let root = model.initial_state(&mut rng);
    let mut search = Search::new(model.as_ref(), root, 0, &cfg).unwrap();
    for _ in 0..2000 {
        search.iterate(&mut rng);
    }
    let tree = &search.tree;
    let keys: HashSet<_> = tree.states.iter().map(|s| s.key.clone()).collect();
    assert_eq!(keys.len(), tree.states.len());
    // some state is reached through two different Q nodes
    let mut parents: HashMap<u32, HashSet<u32>> = HashMap::new();
    for (i, q) in tree.qnodes.iter().enumerate() {
        for &(s, _) in &q.successors {
            parents.entry(s).or_default().insert(i as u32);
        }
    }
    assert!(parents.values().any(|p| p.len() > 1));
}

#[test]
fn visit_counts_add_up() {
    let model = five_state_chain();
    let cfg = config(true, DropPolicy::DEFAULT_CAD);
    let mut rng = seeded_rng(13, 1);
    let root = model.initial_state(&mut rng);
    let mut search = Search::new(&model, root, 0, &cfg).unwrap();
    for _ in 0..cfg.iterations {
        search.iterate(&mut rng);
    }
    let tree = &search.tree;
    assert_eq!(tree.root().visits, cfg.iterations);
    for q in &tree.qnodes {
        assert_eq!(q.successors.iter().map(|e| e.1).sum::<u64>(), q.visits);
    }
    for s in &tree.states {
        let child_visits: u64 = s.children.iter().map(|&q| tree.q(q).visits).sum();
        assert_eq!(child_visits, s.visits);
    }
}
