//! Stochastic MPC for the EV.
//!
//! Each cycle the bicycle model is linearized at the current EV state, the
//! TV prediction is turned into one tightened half-plane per prediction step
//! and the resulting deterministic problem is condensed onto the stacked
//! input sequence `U = [u_0; ...; u_{N-1}]`:
//!
//! ```text
//! x_k = phi_k + Gamma_k U,   k = 1..N
//! min 1/2 U^T H U + g^T U    s.t.  A U <= b
//! ```
//!
//! The QP objective is half the tracking cost
//! `sum_k |x_k - r_k|_Q + |u_{k-1}|_R + |du_{k-1}|_S` up to a constant.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::constraints::{
    anchor_to, base_rectangle, classify_case, constraint_line, tighten_rectangle, CaseThresholds,
    ConstraintCase, HalfPlaneConstraint, RiskParams, RoadBounds, SafetyRectangle, Side,
    VariancePairing,
};
use crate::error::{Error, Result};
use crate::gp::TvPredictionStats;
use crate::qp::{solve_qp, QpProblem, QpSettings, QpSolution, QpStatus};
use crate::vehicle::{
    ev_linearize_discretize_with, DiscreteEvModel, Discretization, EvInput, EvState, TvState,
    VehicleGeometry,
};

/// Cost weights on state error, input and input rate.
#[derive(Clone, Debug, PartialEq)]
pub struct MpcWeights {
    pub q: Matrix4<f64>,
    pub r: Matrix2<f64>,
    pub s: Matrix2<f64>,
}

impl MpcWeights {
    pub fn diagonal(q: [f64; 4], r: [f64; 2], s: [f64; 2]) -> Self {
        Self {
            q: Matrix4::from_diagonal(&Vector4::from(q)),
            r: Matrix2::from_diagonal(&nalgebra::Vector2::from(r)),
            s: Matrix2::from_diagonal(&nalgebra::Vector2::from(s)),
        }
    }

    pub fn zero() -> Self {
        Self {
            q: Matrix4::zeros(),
            r: Matrix2::zeros(),
            s: Matrix2::zeros(),
        }
    }
}

/// Input box and per-step rate limits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputBounds {
    pub u_min: EvInput,
    pub u_max: EvInput,
    pub du_min: EvInput,
    pub du_max: EvInput,
}

impl InputBounds {
    pub fn unbounded() -> Self {
        let inf = EvInput::new(f64::INFINITY, f64::INFINITY);
        let neg = EvInput::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        Self {
            u_min: neg,
            u_max: inf,
            du_min: neg,
            du_max: inf,
        }
    }
}

/// Condensed prediction `x_k = phi[k-1] + gamma[k-1] U` for `k = 1..N`.
#[derive(Clone, Debug)]
pub struct Condensed {
    pub phi: Vec<Vector4<f64>>,
    pub gamma: Vec<DMatrix<f64>>,
}

impl Condensed {
    pub fn new(model: &DiscreteEvModel, x0: &Vector4<f64>, horizon: usize) -> Self {
        let nu = 2 * horizon;
        let mut phi = Vec::with_capacity(horizon);
        let mut gamma = Vec::with_capacity(horizon);
        let mut p = *x0;
        let mut g = DMatrix::<f64>::zeros(4, nu);
        for k in 0..horizon {
            p = model.affine + model.a_d * p;
            let mut next = DMatrix::from_fn(4, nu, |i, j| {
                (0..4).map(|l| model.a_d[(i, l)] * g[(l, j)]).sum::<f64>()
            });
            for i in 0..4 {
                next[(i, 2 * k)] += model.b_d[(i, 0)];
                next[(i, 2 * k + 1)] += model.b_d[(i, 1)];
            }
            g = next;
            phi.push(p);
            gamma.push(g.clone());
        }
        Self { phi, gamma }
    }

    pub fn horizon(&self) -> usize {
        self.phi.len()
    }

    /// Predicted states `x_1..x_N` for input sequence `u`.
    pub fn states(&self, u: &DVector<f64>) -> Vec<Vector4<f64>> {
        self.phi
            .iter()
            .zip(&self.gamma)
            .map(|(p, g)| {
                let gu = g * u;
                p + Vector4::new(gu[0], gu[1], gu[2], gu[3])
            })
            .collect()
    }
}

/// Problem data for one planning cycle together with the prediction used to
/// build it.
#[derive(Clone, Debug)]
pub struct MpcQp {
    pub qp: QpProblem,
    pub condensed: Condensed,
    /// Constant dropped from the half cost.
    pub cost_offset: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn build_qp(
    model: &DiscreteEvModel,
    ev0: &EvState,
    u_prev: &EvInput,
    refs: &[EvState],
    weights: &MpcWeights,
    bounds: &InputBounds,
    road: &RoadBounds,
    collision: &[HalfPlaneConstraint],
    regularization: f64,
) -> Result<MpcQp> {
    let horizon = refs.len();
    if horizon == 0 {
        return Err(Error::Dimension("horizon must be at least 1".into()));
    }
    if collision.len() != horizon + 1 {
        return Err(Error::Dimension(format!(
            "expected {} collision constraints, got {}",
            horizon + 1,
            collision.len()
        )));
    }
    let nu = 2 * horizon;
    let x0 = ev0.to_vector();
    let condensed = Condensed::new(model, &x0, horizon);

    let mut h = DMatrix::<f64>::identity(nu, nu) * regularization;
    let mut g = DVector::<f64>::zeros(nu);
    let mut cost_offset = 0.0;
    for k in 0..horizon {
        let gk = &condensed.gamma[k];
        let err = condensed.phi[k] - refs[k].to_vector();
        let q = DMatrix::from_column_slice(4, 4, weights.q.as_slice());
        let qg = &q * gk;
        h += gk.transpose() * &qg;
        g += qg.transpose() * DVector::from_column_slice(err.as_slice());
        cost_offset += 0.5 * err.dot(&(weights.q * err));
    }
    for k in 0..horizon {
        for i in 0..2 {
            for j in 0..2 {
                h[(2 * k + i, 2 * k + j)] += weights.r[(i, j)];
            }
        }
    }
    // Rate penalty: du_k = u_k - u_{k-1}, with u_{-1} = u_prev.
    let mut d = DMatrix::<f64>::zeros(nu, nu);
    for k in 0..horizon {
        for i in 0..2 {
            d[(2 * k + i, 2 * k + i)] = 1.0;
            if k > 0 {
                d[(2 * k + i, 2 * (k - 1) + i)] = -1.0;
            }
        }
    }
    let mut s_bar = DMatrix::<f64>::zeros(nu, nu);
    for k in 0..horizon {
        for i in 0..2 {
            for j in 0..2 {
                s_bar[(2 * k + i, 2 * k + j)] = weights.s[(i, j)];
            }
        }
    }
    h += d.transpose() * &s_bar * &d;
    let mut e_prev = DVector::<f64>::zeros(nu);
    e_prev[0] = u_prev.a;
    e_prev[1] = u_prev.delta;
    g -= d.transpose() * (&s_bar * &e_prev);
    cost_offset += 0.5 * e_prev.dot(&(&s_bar * &e_prev));
    h = (&h + h.transpose()) * 0.5;

    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut push = |row: DVector<f64>, rhs: f64| {
        if rhs.is_finite() {
            rows.push((row, rhs));
        }
    };
    let unit = |k: usize, i: usize| {
        let mut r = DVector::zeros(nu);
        r[2 * k + i] = 1.0;
        r
    };
    let lo = [bounds.u_min.a, bounds.u_min.delta];
    let hi = [bounds.u_max.a, bounds.u_max.delta];
    let dlo = [bounds.du_min.a, bounds.du_min.delta];
    let dhi = [bounds.du_max.a, bounds.du_max.delta];
    let prev = [u_prev.a, u_prev.delta];
    for k in 0..horizon {
        for i in 0..2 {
            push(unit(k, i), hi[i]);
            push(-unit(k, i), -lo[i]);
        }
    }
    for k in 0..horizon {
        for i in 0..2 {
            let mut r = unit(k, i);
            let offset = if k == 0 {
                prev[i]
            } else {
                r[2 * (k - 1) + i] = -1.0;
                0.0
            };
            push(r.clone(), dhi[i] + offset);
            push(-r, -dlo[i] - offset);
        }
    }
    let state_row = |k: usize, c: &Vector4<f64>| -> (DVector<f64>, f64) {
        let gk = &condensed.gamma[k];
        let row = DVector::from_fn(nu, |j, _| (0..4).map(|i| c[i] * gk[(i, j)]).sum());
        (row, c.dot(&condensed.phi[k]))
    };
    for k in 0..horizon {
        let (r, c) = state_row(k, &Vector4::new(0.0, 1.0, 0.0, 0.0));
        push(r.clone(), road.d_max - c);
        push(-r, c - road.d_min);
        let (r, c) = state_row(k, &Vector4::new(0.0, 0.0, 0.0, -1.0));
        push(r, -c);
    }
    for (k, hp) in collision.iter().enumerate() {
        if !hp.active {
            continue;
        }
        let c = Vector4::new(hp.q_x, hp.q_y, 0.0, 0.0);
        if k == 0 {
            // The current state is fixed; lines through it are satisfied up to round-off.
            let value = c.dot(&x0) + hp.q_t;
            let tol = 1e-9 * (1.0 + (c.dot(&x0)).abs() + hp.q_t.abs());
            push(
                DVector::zeros(nu),
                if value.abs() <= tol { 0.0 } else { -value },
            );
        } else {
            let (r, off) = state_row(k - 1, &c);
            push(r, -(off + hp.q_t));
        }
    }

    let m = rows.len();
    let mut a = DMatrix::zeros(m, nu);
    let mut b = DVector::zeros(m);
    for (i, (r, rhs)) in rows.into_iter().enumerate() {
        a.row_mut(i).copy_from(&r.transpose());
        b[i] = rhs;
    }
    Ok(MpcQp {
        qp: QpProblem::new(h, g, a, b)?,
        condensed,
        cost_offset,
    })
}

/// Everything the controller needs besides the measured states.
#[derive(Clone, Debug)]
pub struct SmpcConfig {
    pub horizon: usize,
    pub dt: f64,
    pub geometry: VehicleGeometry,
    pub weights: MpcWeights,
    pub bounds: InputBounds,
    pub road: RoadBounds,
    pub reference: EvState,
    pub eps_safe: f64,
    pub t_headway: f64,
    pub risk: RiskParams,
    pub pairing: VariancePairing,
    pub thresholds: CaseThresholds,
    pub eps_anchor: f64,
    pub regularization: f64,
    pub discretization: Discretization,
    pub qp: QpSettings,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmpcDiagnostics {
    pub status: QpStatus,
    pub case: ConstraintCase,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub used_fallback: bool,
    pub constraints: Vec<HalfPlaneConstraint>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmpcOutput {
    pub input: EvInput,
    /// Planned EV states `x_0..x_N` (the prediction model's view).
    pub planned: Vec<EvState>,
    pub diagnostics: SmpcDiagnostics,
}

/// Receding-horizon controller state.
#[derive(Clone, Debug, Default)]
pub struct SmpcController {
    pub u_prev: EvInput,
    /// Remaining inputs of the last optimal solution.
    pub fallback: VecDeque<EvInput>,
    /// Remaining planned states matching `fallback`.
    pub plan: Vec<EvState>,
    /// Side chosen after a D/E switch, kept until the next case A.
    pub side_lock: Option<Side>,
}

impl SmpcController {
    pub fn new(u_prev: EvInput) -> Self {
        Self {
            u_prev,
            ..Self::default()
        }
    }

    /// EV states to pair with the TV prediction: the current state followed
    /// by the shifted previous plan, padded at constant velocity.
    pub fn ev_proxy(&self, ev0: &EvState, horizon: usize, dt: f64) -> Vec<EvState> {
        let mut out = Vec::with_capacity(horizon);
        out.push(*ev0);
        for k in 1..horizon {
            let s = self.plan.get(k + 1).copied().unwrap_or_else(|| {
                let base = out[k - 1];
                EvState {
                    s: base.s + base.v * base.phi.cos() * dt,
                    d: base.d + base.v * base.phi.sin() * dt,
                    ..base
                }
            });
            out.push(s);
        }
        out
    }

    /// Build the per-step constraints from the TV prediction and solve.
    pub fn step(
        &mut self,
        ev0: &EvState,
        tv_now: &TvState,
        stats: &TvPredictionStats,
        cfg: &SmpcConfig,
    ) -> SmpcOutput {
        let horizon = cfg.horizon;
        let mut rects: Vec<SafetyRectangle> = Vec::with_capacity(horizon + 1);
        rects.push(base_rectangle(
            ev0,
            tv_now,
            &cfg.geometry,
            cfg.eps_safe,
            cfg.t_headway,
        ));
        for k in 0..horizon {
            let tv_k = stats.means.get(k).copied().unwrap_or(*tv_now);
            let var_k = stats
                .variances
                .get(k)
                .copied()
                .unwrap_or_else(Vector4::zeros);
            let base = base_rectangle(ev0, &tv_k, &cfg.geometry, cfg.eps_safe, cfg.t_headway);
            rects.push(tighten_rectangle(&base, &var_k, &cfg.risk, cfg.pairing));
        }

        let case = self.classify(ev0, tv_now, &rects, cfg);
        let v_long = ev0.longitudinal_speed();
        let collision: Vec<HalfPlaneConstraint> = rects
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let line = constraint_line(case, ev0, r, ev0.s + v_long * k as f64 * cfg.dt);
                // Only the fixed current state needs anchoring; later steps
                // keep the full edge so a lost margin is won back.
                if k == 0 {
                    anchor_to(line, ev0, cfg.eps_anchor)
                } else {
                    line
                }
            })
            .collect();
        self.step_with_constraints(ev0, case, collision, cfg)
    }

    fn classify(
        &mut self,
        ev0: &EvState,
        tv_now: &TvState,
        rects: &[SafetyRectangle],
        cfg: &SmpcConfig,
    ) -> ConstraintCase {
        let top = rects
            .iter()
            .map(SafetyRectangle::top)
            .fold(f64::NEG_INFINITY, f64::max);
        let bottom = rects
            .iter()
            .map(SafetyRectangle::bottom)
            .fold(f64::INFINITY, f64::min);
        let envelope = SafetyRectangle {
            center_x: tv_now.x,
            center_y: 0.5 * (top + bottom),
            half_length: rects[0].half_length,
            half_width: 0.5 * (top - bottom),
        };
        let case = classify_case(ev0, tv_now, &cfg.road, &envelope, &cfg.thresholds);
        // After a switch the EV keeps to the chosen side until the
        // encounter ends.
        let left = ev0.d >= tv_now.y;
        match (case, self.side_lock) {
            (ConstraintCase::A, _) => {
                self.side_lock = None;
                case
            }
            (_, Some(Side::Right)) => {
                if left {
                    ConstraintCase::D
                } else {
                    ConstraintCase::C
                }
            }
            (_, Some(Side::Left)) => {
                if left {
                    ConstraintCase::B
                } else {
                    ConstraintCase::E
                }
            }
            (ConstraintCase::D, None) => {
                self.side_lock = Some(Side::Right);
                case
            }
            (ConstraintCase::E, None) => {
                self.side_lock = Some(Side::Left);
                case
            }
            _ => case,
        }
    }

    /// Solve with explicit collision constraints (`horizon + 1` of them) and
    /// apply the fallback rule when the problem is not solved.
    pub fn step_with_constraints(
        &mut self,
        ev0: &EvState,
        case: ConstraintCase,
        mut collision: Vec<HalfPlaneConstraint>,
        cfg: &SmpcConfig,
    ) -> SmpcOutput {
        let model = ev_linearize_discretize_with(ev0, &cfg.geometry, cfg.dt, cfg.discretization);
        let refs: Vec<EvState> = (1..=cfg.horizon)
            .map(|k| EvState {
                s: ev0.s + cfg.reference.v * k as f64 * cfg.dt,
                ..cfg.reference
            })
            .collect();
        if let Some(first) = collision.get_mut(1) {
            reanchor_first_step(
                first,
                &model,
                ev0,
                &self.u_prev,
                &cfg.bounds,
                cfg.eps_anchor,
            );
        }
        let built = build_qp(
            &model,
            ev0,
            &self.u_prev,
            &refs,
            &cfg.weights,
            &cfg.bounds,
            &cfg.road,
            &collision,
            cfg.regularization,
        );
        let solution = built.as_ref().ok().map(|b| (b, solve_qp(&b.qp, &cfg.qp)));
        match solution {
            Some((built, sol)) if sol.status == QpStatus::Optimal => {
                self.accept(ev0, case, collision, built, sol, cfg)
            }
            other => {
                let (status, iterations, kkt) = other
                    .map_or((QpStatus::Infeasible, 0, f64::NAN), |(_, s)| {
                        (s.status, s.iterations, s.kkt_residual)
                    });
                self.fall_back(ev0, case, collision, status, iterations, kkt, cfg)
            }
        }
    }

    fn accept(
        &mut self,
        ev0: &EvState,
        case: ConstraintCase,
        collision: Vec<HalfPlaneConstraint>,
        built: &MpcQp,
        sol: QpSolution,
        cfg: &SmpcConfig,
    ) -> SmpcOutput {
        let inputs: Vec<EvInput> = (0..cfg.horizon)
            .map(|k| {
                EvInput::new(sol.x[2 * k], sol.x[2 * k + 1])
                    .clamp(cfg.bounds.u_min, cfg.bounds.u_max)
            })
            .collect();
        let mut planned = vec![*ev0];
        planned.extend(
            built
                .condensed
                .states(&sol.x)
                .iter()
                .map(EvState::from_vector),
        );
        let input = inputs[0];
        self.fallback = inputs.into_iter().skip(1).collect();
        self.plan = planned.clone();
        self.u_prev = input;
        SmpcOutput {
            input,
            planned,
            diagnostics: SmpcDiagnostics {
                status: QpStatus::Optimal,
                case,
                objective: sol.objective,
                iterations: sol.iterations,
                kkt_residual: sol.kkt_residual,
                used_fallback: false,
                constraints: collision,
            },
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn fall_back(
        &mut self,
        ev0: &EvState,
        case: ConstraintCase,
        collision: Vec<HalfPlaneConstraint>,
        status: QpStatus,
        iterations: usize,
        kkt_residual: f64,
        cfg: &SmpcConfig,
    ) -> SmpcOutput {
        let input = self
            .fallback
            .pop_front()
            .unwrap_or(EvInput::ZERO)
            .clamp(cfg.bounds.u_min, cfg.bounds.u_max);
        if !self.plan.is_empty() {
            self.plan.remove(0);
        }
        let mut planned = vec![*ev0];
        planned.extend(self.plan.iter().skip(1).copied());
        self.u_prev = input;
        SmpcOutput {
            input,
            planned,
            diagnostics: SmpcDiagnostics {
                status,
                case,
                objective: f64::NAN,
                iterations,
                kkt_residual,
                used_fallback: true,
                constraints: collision,
            },
        }
    }
}

/// Free function form of [`SmpcController::step`].
pub fn smpc_step(
    controller: &mut SmpcController,
    ev0: &EvState,
    tv_now: &TvState,
    stats: &TvPredictionStats,
    cfg: &SmpcConfig,
) -> SmpcOutput {
    controller.step(ev0, tv_now, stats, cfg)
}

/// The state after the first step depends only on `u_0`, so the step-1
/// half-plane gets the same treatment as the fixed current state: if no
/// input inside the amplitude and rate boxes reaches it, the line is shifted
/// until the best reachable state clears it by `eps_anchor`. Later steps keep
/// their full constraint.
fn reanchor_first_step(
    hp: &mut HalfPlaneConstraint,
    model: &DiscreteEvModel,
    ev0: &EvState,
    u_prev: &EvInput,
    bounds: &InputBounds,
    eps_anchor: f64,
) {
    if !hp.active {
        return;
    }
    let lo = [
        bounds.u_min.a.max(u_prev.a + bounds.du_min.a),
        bounds.u_min.delta.max(u_prev.delta + bounds.du_min.delta),
    ];
    let hi = [
        bounds.u_max.a.min(u_prev.a + bounds.du_max.a),
        bounds.u_max.delta.min(u_prev.delta + bounds.du_max.delta),
    ];
    let hold = u_prev.clamp(bounds.u_min, bounds.u_max).to_vector();
    let free = model.step(&ev0.to_vector(), &Vector2::zeros());
    let mut value = hp.value(free[0], free[1]);
    for j in 0..2 {
        let g = hp.q_x * model.b_d[(0, j)] + hp.q_y * model.b_d[(1, j)];
        // The boxes can miss each other when u_prev lies outside the
        // amplitude limits; use the nearest admissible amplitude then.
        let (l, h) = if lo[j] <= hi[j] {
            (lo[j], hi[j])
        } else {
            (hold[j], hold[j])
        };
        value += if g > 0.0 { g * l } else { g * h };
    }
    if value.is_finite() && value > -eps_anchor {
        hp.q_t -= value + eps_anchor;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle::ev_linearize_discretize;

    fn geom() -> VehicleGeometry {
        VehicleGeometry::default()
    }

    #[test]
    fn empty_cost_gives_regularized_identity() {
        let ev0 = EvState::new(0.0, 0.0, 0.0, 60.0);
        let model = ev_linearize_discretize(&ev0, &geom(), 0.2);
        let refs = vec![ev0; 3];
        let built = build_qp(
            &model,
            &ev0,
            &EvInput::ZERO,
            &refs,
            &MpcWeights::zero(),
            &InputBounds::unbounded(),
            &RoadBounds {
                d_min: f64::NEG_INFINITY,
                d_max: f64::INFINITY,
            },
            &[HalfPlaneConstraint::INACTIVE; 4],
            1e-8,
        )
        .unwrap();
        assert_eq!(built.qp.h, DMatrix::identity(6, 6) * 1e-8);
        assert!(built.qp.g.iter().all(|v| *v == 0.0));
        // Only the v >= 0 rows remain.
        assert_eq!(built.qp.rows(), 3);
    }

    #[test]
    fn single_step_hessian() {
        let ev0 = EvState::new(0.0, 0.0, 0.0, 60.0);
        let model = ev_linearize_discretize(&ev0, &geom(), 0.2);
        let w = MpcWeights::diagonal([0.0, 0.25, 0.2, 10.0], [0.33, 5.0], [0.33, 15.0]);
        let built = build_qp(
            &model,
            &ev0,
            &EvInput::ZERO,
            &[ev0],
            &w,
            &InputBounds::unbounded(),
            &RoadBounds {
                d_min: -6.0,
                d_max: 6.0,
            },
            &[HalfPlaneConstraint::INACTIVE; 2],
            0.0,
        )
        .unwrap();
        let b = model.b_d;
        let expected = b.transpose() * w.q * b + w.r + w.s;
        for i in 0..2 {
            for j in 0..2 {
                assert!((built.qp.h[(i, j)] - expected[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn condensed_matches_stepwise() {
        let ev0 = EvState::new(3.0, 0.5, 0.05, 55.0);
        let model = ev_linearize_discretize(&ev0, &geom(), 0.2);
        let cond = Condensed::new(&model, &ev0.to_vector(), 6);
        let u = DVector::from_fn(12, |i, _| 0.01 * (i as f64 - 5.0));
        let states = cond.states(&u);
        let mut x = ev0.to_vector();
        for k in 0..6 {
            x = model.step(&x, &nalgebra::Vector2::new(u[2 * k], u[2 * k + 1]));
            assert!((x - states[k]).amax() < 1e-9);
        }
    }

    #[test]
    fn reanchoring_relaxes_only_unreachable_first_step() {
        let ev0 = EvState::new(0.0, 0.0, 0.0, 60.0);
        let model = ev_linearize_discretize(&ev0, &geom(), 0.2);
        let bounds = InputBounds {
            u_min: EvInput::new(-15.0, -0.2),
            u_max: EvInput::new(10.0, 0.2),
            du_min: EvInput::new(-5.0, -0.1),
            du_max: EvInput::new(5.0, 0.1),
        };
        // Demands d_1 >= 5; the rate limit caps steering at 0.1 rad, which
        // reaches d_1 = 0.6 at best.
        let mut hp = HalfPlaneConstraint {
            q_y: -1.0,
            q_x: 0.0,
            q_t: 5.0,
            active: true,
        };
        reanchor_first_step(&mut hp, &model, &ev0, &EvInput::ZERO, &bounds, 0.01);
        let best = model.step(&ev0.to_vector(), &nalgebra::Vector2::new(0.0, 0.1));
        assert!((best[1] - 0.6).abs() < 1e-12);
        assert!((hp.value(best[0], best[1]) + 0.01).abs() < 1e-9);
        // Reachable with some steering: kept even though holding violates it.
        let mut reach = HalfPlaneConstraint {
            q_y: -1.0,
            q_x: 0.0,
            q_t: 0.3,
            active: true,
        };
        reanchor_first_step(&mut reach, &model, &ev0, &EvInput::ZERO, &bounds, 0.01);
        assert_eq!(reach.q_t, 0.3);
        // Already satisfied lines are left alone.
        let mut ok = HalfPlaneConstraint {
            q_y: -1.0,
            q_x: 0.0,
            q_t: -1.0,
            active: true,
        };
        reanchor_first_step(&mut ok, &model, &ev0, &EvInput::ZERO, &bounds, 0.01);
        assert_eq!(ok.q_t, -1.0);
    }
}
