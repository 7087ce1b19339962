//! Fixtures shared by the planner benchmarks.

use overtake_core::gp::{gp_fit, GpDataset, GpModel};
use overtake_core::smpc::{build_qp, MpcQp, SmpcController};
use overtake_core::tv::{tv_reference, tv_step};
use overtake_core::vehicle::ev_linearize_discretize;
use overtake_core::{EvInput, EvState, HalfPlaneConstraint, ScenarioConfig};

/// The condensed QP of the first planning cycle of the paper scenario with a
/// lateral collision constraint on every step.
pub fn scenario_qp() -> MpcQp {
    let cfg = ScenarioConfig::paper_scenario();
    let smpc = cfg.smpc_config().expect("valid scenario");
    let ev0 = cfg.ev_initial();
    let model = ev_linearize_discretize(&ev0, &smpc.geometry, smpc.dt);
    let refs: Vec<EvState> = (1..=smpc.horizon)
        .map(|k| EvState {
            s: ev0.s + smpc.reference.v * k as f64 * smpc.dt,
            ..smpc.reference
        })
        .collect();
    let mut collision = vec![HalfPlaneConstraint::INACTIVE];
    collision.extend((1..=smpc.horizon).map(|_| HalfPlaneConstraint {
        q_y: -1.0,
        q_x: 0.0,
        q_t: -0.5,
        active: true,
    }));
    build_qp(
        &model,
        &ev0,
        &EvInput::ZERO,
        &refs,
        &smpc.weights,
        &smpc.bounds,
        &smpc.road,
        &collision,
        smpc.regularization,
    )
    .expect("consistent dimensions")
}

/// A GP trained on `n` transitions of a TV drifting towards the EV.
pub fn trained_gp(n: usize) -> GpModel {
    let cfg = ScenarioConfig::paper_scenario();
    let mut policy = cfg.tv_policy();
    let mut data = GpDataset::new(cfg.gp.capacity.max(n));
    let mut tv = cfg.tv_initial();
    let mut ev = cfg.ev_initial();
    ev.d = 1.5;
    for _ in 0..n {
        let reference = tv_reference(&ev, &tv, &mut policy);
        let next = tv_step(&tv, &reference, &policy.gain, &policy.bounds, cfg.sim.dt);
        data.push_transition(&ev, &tv, &next);
        tv = next;
        ev.s += ev.v * cfg.sim.dt;
    }
    gp_fit(data, cfg.gp.scaled_kernels()).expect("fit")
}

pub fn fresh_controller() -> SmpcController {
    SmpcController::new(EvInput::ZERO)
}
