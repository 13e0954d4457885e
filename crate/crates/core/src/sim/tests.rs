use super::*;

fn small(mode: Mode, n: usize, view_len: usize, cycles: u64) -> ScenarioConfig {
    ScenarioConfig {
        params: ProtocolParams {
            n,
            view_len,
            swap_len: 3.min(view_len),
            ..ProtocolParams::default()
        },
        mode,
        cycles,
        ..ScenarioConfig::default()
    }
}

fn check_views(sim: &Simulation) {
    for p in sim.peers().iter().filter(|p| p.alive) {
        let v = p.view();
        assert!(v.len() <= v.capacity());
        let mut keys = FxHashSet::default();
        for e in v.iter() {
            assert_ne!(e.creator(), p.id, "self link");
            assert!(keys.insert(e.descriptor.key()), "duplicate key");
        }
    }
}

#[test]
fn bootstrap_fills_views() {
    for mode in [Mode::Legacy, Mode::Secure] {
        let sim = Simulation::new(small(mode, 200, 20, 0)).unwrap();
        check_views(&sim);
        assert!(sim.peers().iter().all(|p| p.view().is_full()));
        if mode == Mode::Secure {
            for p in sim.peers() {
                for e in p.view().iter() {
                    assert_eq!(e.descriptor.current_owner(), p.id);
                    assert!(e.descriptor.verify_chain(sim.scheme()));
                    assert!(e.swappable);
                }
            }
        }
    }
}

#[test]
fn degenerate_network_sizes() {
    let sim = Simulation::new(small(Mode::Secure, 2, 5, 0)).unwrap();
    assert!(sim.peers().iter().all(|p| p.view().len() == 1));
}

#[test]
fn two_nodes_flip_their_link() {
    for mode in [Mode::Legacy, Mode::Secure] {
        let mut cfg = small(mode, 2, 1, 10);
        cfg.params.swap_len = 1;
        let mut sim = Simulation::new(cfg).unwrap();
        for _ in 0..10 {
            sim.step();
            check_views(&sim);
            let total: usize = sim.peers().iter().map(|p| p.view().len()).sum();
            assert!(total >= 1, "{mode:?}: the only link vanished");
            let s = sim.series().last().unwrap();
            assert_eq!(s.proofs_generated, 0);
        }
    }
}

#[test]
fn same_seed_same_csv() {
    let mut cfg = small(Mode::Secure, 100, 8, 30);
    cfg.attack = Some(AttackPlan {
        malicious_count: Some(5),
        start_cycle: 10,
        ..AttackPlan::default()
    });
    let a = run(&cfg).unwrap().to_csv();
    let b = run(&cfg).unwrap().to_csv();
    assert_eq!(a, b);
    cfg.seed += 1;
    assert_ne!(run(&cfg).unwrap().to_csv(), a);
}

#[test]
fn one_snapshot_per_cycle_and_conservation() {
    let mut sim = Simulation::new(small(Mode::Secure, 100, 8, 20)).unwrap();
    sim.run_to_end();
    let s = sim.series();
    assert_eq!(s.snapshots.len(), 20);
    for (i, snap) in s.snapshots.iter().enumerate() {
        assert_eq!(snap.cycle, i as u64);
        let mass: u64 = snap.indegree_histogram.iter().enumerate().map(|(k, n)| k as u64 * n).sum();
        assert_eq!(mass as f64, snap.view_occupancy * snap.alive_correct as f64);
        assert_eq!(snap.proofs_generated, 0);
        assert_eq!(snap.malicious_link_fraction, 0.0);
    }
}

#[test]
fn rejects_invalid_configs() {
    let mut cfg = small(Mode::Secure, 10, 4, 1);
    cfg.message_loss = 1.0;
    assert!(Simulation::new(cfg.clone()).is_err());
    cfg.message_loss = 0.0;
    cfg.params.swap_len = 9;
    assert!(matches!(Simulation::new(cfg.clone()), Err(ConfigError::Params(_))));
    cfg.params.swap_len = 2;
    cfg.attack = Some(AttackPlan {
        malicious_fraction: 1.0,
        ..AttackPlan::default()
    });
    assert!(Simulation::new(cfg.clone()).is_err());
    cfg.attack = None;
    cfg.mode = Mode::Legacy;
    cfg.attack = Some(AttackPlan {
        strategy: Strategy::LinkDepletion,
        malicious_count: Some(2),
        ..AttackPlan::default()
    });
    assert!(Simulation::new(cfg).is_err());
}

#[test]
fn failures_leave_dead_links_that_heal() {
    let mut cfg = small(Mode::Legacy, 300, 10, 60);
    cfg.churn = vec![ChurnEvent::Fail { cycle: 10, fraction: 0.1 }];
    let s = run(&cfg).unwrap();
    assert_eq!(s.at(9).unwrap().dead_link_fraction, 0.0);
    let hit = s.at(10).unwrap();
    assert_eq!(hit.alive_correct, 270);
    assert!(hit.dead_link_fraction > 0.05);
    assert!(s.last().unwrap().dead_link_fraction < 0.01);
}

#[test]
fn joins_receive_nonswappable_links() {
    let mut cfg = small(Mode::Secure, 100, 8, 12);
    cfg.churn = vec![ChurnEvent::Join { cycle: 5, count: 3 }];
    let mut sim = Simulation::new(cfg).unwrap();
    for _ in 0..5 {
        sim.step();
    }
    let before = sim.peers().len();
    sim.step();
    assert_eq!(sim.peers().len(), before + 3);
    assert_eq!(sim.series().last().unwrap().alive_correct, 103);
    sim.run_to_end();
    check_views(&sim);
    let joined = &sim.peers()[before];
    assert!(!joined.view().is_empty());
    assert_eq!(sim.series().last().unwrap().proofs_generated, 0);
}

#[test]
fn legacy_hub_attack_spreads() {
    let mut cfg = small(Mode::Legacy, 200, 10, 60);
    cfg.attack = Some(AttackPlan {
        malicious_count: Some(4),
        start_cycle: 10,
        claimed_age: Some(10),
        ..AttackPlan::default()
    });
    let s = run(&cfg).unwrap();
    let before = s.at(9).unwrap().malicious_link_fraction;
    assert!(before < 0.1);
    assert!(s.last().unwrap().malicious_link_fraction > 0.9);
}
