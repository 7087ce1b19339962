use overtake_core::sim::{collision_check, overtake_detect, side_switches, vehicle_gap};
use overtake_core::{run_scenario, EvState, ScenarioConfig, TvState, VehicleGeometry};

fn short(mut cfg: ScenarioConfig, steps: usize) -> ScenarioConfig {
    cfg.sim.max_steps = steps;
    cfg
}

#[test]
fn same_seed_is_bit_identical() {
    let cfg = short(ScenarioConfig::paper_scenario(), 25);
    let a = run_scenario(&cfg, 4).unwrap();
    let b = run_scenario(&cfg, 4).unwrap();
    assert_eq!(a, b);
    let c = run_scenario(&cfg, 5).unwrap();
    assert_ne!(a.records, c.records);
}

#[test]
fn tracks_the_reference_without_an_opponent() {
    let mut cfg = short(ScenarioConfig::paper_scenario(), 60);
    cfg.tv.initial = [10_000.0, 60.0, 0.0, 0.0];
    cfg.ev.initial = [0.0, 1.5, 0.0, 57.0];
    let run = run_scenario(&cfg, 0).unwrap();
    assert!(!run.collision);
    assert_eq!(run.infeasible_cycles, 0);
    for r in &run.records[30..] {
        assert!(r.ev.d.abs() < 0.1, "d = {}", r.ev.d);
        assert!((r.ev.v - 60.0).abs() < 0.5, "v = {}", r.ev.v);
    }
}

#[test]
fn paper_scenario_overtakes() {
    let cfg = ScenarioConfig::paper_scenario();
    let run = run_scenario(&cfg, 0).unwrap();
    assert!(run.overtake_success);
    assert!(!run.collision);
    assert!(run.failure.is_none());
    assert!(run.final_ev.s - run.final_tv.x > cfg.vehicle.l_veh);
    assert!(run.min_gap > 0.0);
    assert!(side_switches(&run.records) >= 1);
}

#[test]
fn collision_examples() {
    let g = VehicleGeometry::default();
    let tv = TvState::new(50.0, 50.0, 1.0, 0.0);
    assert!(collision_check(
        &EvState::new(50.0, 1.0, 0.0, 60.0),
        &tv,
        &g
    ));
    assert!(!collision_check(
        &EvState::new(50.0, 4.0, 0.0, 60.0),
        &tv,
        &g
    ));
    assert!(collision_check(
        &EvState::new(50.0, 3.0, 0.0, 60.0),
        &tv,
        &g
    ));
    assert!((vehicle_gap(&EvState::new(50.0, 4.0, 0.0, 60.0), &tv, &g) - 1.0).abs() < 1e-12);
    // Yaw widens the EV footprint.
    let straight = vehicle_gap(&EvState::new(50.0, 4.0, 0.0, 60.0), &tv, &g);
    let yawed = vehicle_gap(&EvState::new(50.0, 4.0, 0.1, 60.0), &tv, &g);
    assert!(yawed < straight);
}

#[test]
fn overtake_needs_a_settled_lead() {
    let tv = [0.0; 6];
    assert_eq!(
        overtake_detect(&[0.0, 6.0, 6.0, 4.0, 6.0, 6.0], &tv, 5.0, 2),
        Some(1)
    );
    assert_eq!(
        overtake_detect(&[0.0, 6.0, 4.0, 6.0, 4.0, 6.0], &tv, 5.0, 2),
        None
    );
}
