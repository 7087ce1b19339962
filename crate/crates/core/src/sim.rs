//! Closed-loop simulation of the EV planner against the blocking TV.

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::constraints::ConstraintCase;
use crate::error::Result;
use crate::gp::{
    constant_velocity_prediction, gp_observe, sample_tv_trajectories, GpModel, TvPredictionStats,
};
use crate::qp::QpStatus;
use crate::smpc::SmpcController;
use crate::tv::{tv_reference, tv_step, CommittedDirection};
use crate::vehicle::{ev_integrate, EvInput, EvState, TvState, VehicleGeometry};

/// One closed-loop cycle: the state at `time`, what was planned from it and
/// the input that was applied.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub ev: EvState,
    pub input: EvInput,
    pub tv: TvState,
    pub status: QpStatus,
    pub used_fallback: bool,
    pub case: ConstraintCase,
    /// TV commitment after this cycle's reference update.
    pub committed: CommittedDirection,
    pub gp_size: usize,
    /// Whether the prediction came from the GP rather than the warmup model.
    pub gp_active: bool,
    /// Box clearance at this state, see [`vehicle_gap`].
    pub gap: f64,
    pub objective: f64,
    pub qp_iterations: usize,
    pub pred_means: Vec<TvState>,
    pub pred_vars: Vec<Vector4<f64>>,
    /// Planned EV states `x_0..x_N`.
    pub planned: Vec<EvState>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub records: Vec<StepRecord>,
    /// State after the last recorded input.
    pub final_ev: EvState,
    pub final_tv: TvState,
    pub overtake_success: bool,
    pub overtake_step: Option<usize>,
    pub min_gap: f64,
    pub collision: bool,
    pub infeasible_cycles: usize,
    /// Set when the run stopped on a numerical failure.
    pub failure: Option<String>,
}

/// Serializable per-run summary without the trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub steps: usize,
    pub overtake_success: bool,
    pub overtake_step: Option<usize>,
    pub min_gap: f64,
    pub collision: bool,
    pub infeasible_cycles: usize,
    pub case_switches: usize,
    pub final_gap_s: f64,
    pub failure: Option<String>,
}

impl RunResult {
    pub fn summary(&self) -> RunSummary {
        RunSummary {
            seed: self.seed,
            steps: self.records.len(),
            overtake_success: self.overtake_success,
            overtake_step: self.overtake_step,
            min_gap: self.min_gap,
            collision: self.collision,
            infeasible_cycles: self.infeasible_cycles,
            case_switches: side_switches(&self.records),
            final_gap_s: self.final_ev.s - self.final_tv.x,
            failure: self.failure.clone(),
        }
    }
}

/// Half extents of the axis-aligned box bounding the EV rotated by `phi`.
fn ev_half_extents(phi: f64, geom: &VehicleGeometry) -> (f64, f64) {
    let (s, c) = (phi.sin().abs(), phi.cos().abs());
    (
        0.5 * (geom.length * c + geom.width * s),
        0.5 * (geom.length * s + geom.width * c),
    )
}

/// Separation between the EV's bounding box and the TV box: positive when
/// they are apart, zero when touching, negative when overlapping.
pub fn vehicle_gap(ev: &EvState, tv: &TvState, geom: &VehicleGeometry) -> f64 {
    let (hx, hy) = ev_half_extents(ev.phi, geom);
    let dx = (ev.s - tv.x).abs() - (hx + 0.5 * geom.length);
    let dy = (ev.d - tv.y).abs() - (hy + 0.5 * geom.width);
    dx.max(dy)
}

/// Closed-box overlap test of the two vehicle footprints.
pub fn collision_check(ev: &EvState, tv: &TvState, geom: &VehicleGeometry) -> bool {
    vehicle_gap(ev, tv, geom) <= 0.0
}

/// First index `k` with `ev_s[j] - tv_x[j] > l_veh` for all
/// `j in k..k + settle_steps`.
pub fn overtake_detect(
    ev_s: &[f64],
    tv_x: &[f64],
    l_veh: f64,
    settle_steps: usize,
) -> Option<usize> {
    let mut run = 0usize;
    for (k, (s, x)) in ev_s.iter().zip(tv_x).enumerate() {
        if s - x > l_veh {
            run += 1;
            if run >= settle_steps.max(1) {
                return Some(k + 1 - run);
            }
        } else {
            run = 0;
        }
    }
    None
}

/// Number of changes between the cases {B, D} and {C, E}, ignoring cycles
/// without a constraint.
pub fn side_switches(records: &[StepRecord]) -> usize {
    let mut last = None;
    let mut count = 0;
    for r in records {
        if let Some(side) = r.case.ev_side() {
            if last.is_some_and(|l| l != side) {
                count += 1;
            }
            last = Some(side);
        }
    }
    count
}

/// Mix a run seed and a step index into a sampler seed.
pub fn step_seed(seed: u64, step: usize) -> u64 {
    let mut z = seed ^ (step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Run one closed-loop episode.
pub fn run_scenario(config: &ScenarioConfig, seed: u64) -> Result<RunResult> {
    config.validate()?;
    let smpc_cfg = config.smpc_config()?;
    let geom = config.vehicle.geometry();
    let sim = &config.sim;
    let horizon = sim.horizon;
    let std_rate = config.warmup_std_rate();

    let mut ev = config.ev_initial();
    let mut tv = config.tv_initial();
    let mut policy = config.tv_policy();
    let mut gp = GpModel::empty(config.gp.scaled_kernels(), config.gp.capacity)?;
    let mut controller = SmpcController::new(EvInput::ZERO);

    let mut records = Vec::with_capacity(sim.max_steps);
    let mut ev_s = Vec::with_capacity(sim.max_steps + 1);
    let mut tv_x = Vec::with_capacity(sim.max_steps + 1);
    let mut min_gap = vehicle_gap(&ev, &tv, &geom);
    let mut collision = min_gap <= 0.0;
    let mut overtake_step = None;
    let mut failure = None;

    for step in 0..sim.max_steps {
        if collision {
            break;
        }
        let gp_active = step >= sim.n_warmup && gp.is_fitted();
        let stats: TvPredictionStats = if gp_active {
            let plan = controller.ev_proxy(&ev, horizon, sim.dt);
            match sample_tv_trajectories(
                &gp,
                &plan,
                &tv,
                config.gp.samples,
                horizon,
                step_seed(seed, step),
                false,
            ) {
                Ok(s) => s,
                Err(e) => {
                    failure = Some(format!("step {step}: GP sampling failed: {e}"));
                    break;
                }
            }
        } else {
            constant_velocity_prediction(&tv, horizon, sim.dt, &std_rate)
        };

        let out = controller.step(&ev, &tv, &stats, &smpc_cfg);
        let reference = tv_reference(&ev, &tv, &mut policy);
        let ev_next = ev_integrate(&ev, &out.input, &geom, sim.dt);
        let tv_next = tv_step(&tv, &reference, &policy.gain, &policy.bounds, sim.dt);

        records.push(StepRecord {
            step,
            time: step as f64 * sim.dt,
            ev,
            input: out.input,
            tv,
            status: out.diagnostics.status,
            used_fallback: out.diagnostics.used_fallback,
            case: out.diagnostics.case,
            committed: policy.committed,
            gp_size: gp.len(),
            gp_active,
            gap: vehicle_gap(&ev, &tv, &geom),
            objective: out.diagnostics.objective,
            qp_iterations: out.diagnostics.iterations,
            pred_means: stats.means,
            pred_vars: stats.variances,
            planned: out.planned,
        });
        ev_s.push(ev.s);
        tv_x.push(tv.x);

        match gp_observe(&gp, &ev, &tv, &tv_next) {
            Ok(next) => gp = next,
            Err(e) => {
                failure = Some(format!("step {step}: GP update failed: {e}"));
                ev = ev_next;
                tv = tv_next;
                break;
            }
        }
        ev = ev_next;
        tv = tv_next;
        if !(ev.is_finite() && tv.is_finite()) {
            failure = Some(format!("step {step}: non-finite vehicle state"));
            break;
        }

        let gap = vehicle_gap(&ev, &tv, &geom);
        min_gap = min_gap.min(gap);
        collision = gap <= 0.0;

        let mut s_all = ev_s.clone();
        s_all.push(ev.s);
        let mut x_all = tv_x.clone();
        x_all.push(tv.x);
        if let Some(k) = overtake_detect(&s_all, &x_all, geom.length, sim.settle_steps) {
            overtake_step = Some(k);
            break;
        }
    }

    let overtake_success = overtake_step.is_some() && !collision && failure.is_none();
    let infeasible_cycles = records.iter().filter(|r| r.used_fallback).count();
    Ok(RunResult {
        seed,
        records,
        final_ev: ev,
        final_tv: tv,
        overtake_success,
        overtake_step: if overtake_success {
            overtake_step
        } else {
            None
        },
        min_gap,
        collision,
        infeasible_cycles,
        failure,
    })
}
