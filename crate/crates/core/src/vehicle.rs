//! Vehicle models.
//!
//! The ego vehicle (EV) uses a kinematic bicycle model in road coordinates
//! `[s, d, phi, v]` with inputs `[a, delta]`. The target vehicle (TV) is a
//! pair of decoupled double integrators in `[x, vx, y, vy]` ordering.

use nalgebra::{Matrix2x4, Matrix4, Matrix4x2, SMatrix, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// EV state in road coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvState {
    /// Longitudinal position along the road (m).
    pub s: f64,
    /// Lateral deviation from the centerline (m), positive to the left.
    pub d: f64,
    /// Heading relative to the road (rad).
    pub phi: f64,
    /// Speed (m/s).
    pub v: f64,
}

impl EvState {
    pub const fn new(s: f64, d: f64, phi: f64, v: f64) -> Self {
        Self { s, d, phi, v }
    }

    pub fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.s, self.d, self.phi, self.v)
    }

    pub fn from_vector(x: &Vector4<f64>) -> Self {
        Self::new(x[0], x[1], x[2], x[3])
    }

    pub fn is_finite(&self) -> bool {
        self.s.is_finite() && self.d.is_finite() && self.phi.is_finite() && self.v.is_finite()
    }

    /// Speed component along the road.
    pub fn longitudinal_speed(&self) -> f64 {
        self.v * self.phi.cos()
    }
}

/// EV input: acceleration and front steering angle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvInput {
    pub a: f64,
    pub delta: f64,
}

impl EvInput {
    pub const ZERO: Self = Self { a: 0.0, delta: 0.0 };

    pub const fn new(a: f64, delta: f64) -> Self {
        Self { a, delta }
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.a, self.delta)
    }

    /// Elementwise clamp into `[min, max]`.
    pub fn clamp(self, min: EvInput, max: EvInput) -> Self {
        Self {
            a: self.a.clamp(min.a, max.a),
            delta: self.delta.clamp(min.delta, max.delta),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleGeometry {
    /// CoG to front axle (m).
    pub l_f: f64,
    /// CoG to rear axle (m).
    pub l_r: f64,
    /// Body length (m).
    pub length: f64,
    /// Body width (m).
    pub width: f64,
}

impl Default for VehicleGeometry {
    fn default() -> Self {
        Self {
            l_f: 2.0,
            l_r: 2.0,
            length: 5.0,
            width: 2.0,
        }
    }
}

impl VehicleGeometry {
    pub fn validate(&self) -> Result<()> {
        let all = [self.l_f, self.l_r, self.length, self.width];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("vehicle geometry entries must be positive"));
        }
        if self.l_f + self.l_r > self.length {
            return Err(Error::invalid(
                "l_f + l_r must not exceed the vehicle length",
            ));
        }
        Ok(())
    }

    /// Slip angle at the center of gravity for steering angle `delta`.
    pub fn slip_angle(&self, delta: f64) -> f64 {
        (self.l_r / (self.l_r + self.l_f) * delta.tan()).atan()
    }
}

/// Continuous-time kinematic bicycle dynamics `f^c(state, input)`.
pub fn ev_dynamics_continuous(
    state: &EvState,
    input: &EvInput,
    geom: &VehicleGeometry,
) -> Vector4<f64> {
    let alpha = geom.slip_angle(input.delta);
    let v = state.v;
    Vector4::new(
        v * (state.phi + alpha).cos(),
        v * (state.phi + alpha).sin(),
        v / geom.l_r * alpha.sin(),
        input.a,
    )
}

/// One classical RK4 step of the bicycle model with the input held constant.
///
/// The speed is clamped at zero afterwards.
pub fn ev_integrate(state: &EvState, input: &EvInput, geom: &VehicleGeometry, dt: f64) -> EvState {
    let x0 = state.to_vector();
    let f = |x: &Vector4<f64>| ev_dynamics_continuous(&EvState::from_vector(x), input, geom);
    let k1 = f(&x0);
    let k2 = f(&(x0 + k1 * (dt / 2.0)));
    let k3 = f(&(x0 + k2 * (dt / 2.0)));
    let k4 = f(&(x0 + k3 * dt));
    let x1 = x0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    let mut next = EvState::from_vector(&x1);
    next.v = next.v.max(0.0);
    next
}

/// Analytic Jacobians of the bicycle model at `(state, input)`.
///
/// Returns `(df/dstate, df/dinput)`.
pub fn ev_jacobians(
    state: &EvState,
    input: &EvInput,
    geom: &VehicleGeometry,
) -> (Matrix4<f64>, Matrix4x2<f64>) {
    let ratio = geom.l_r / (geom.l_r + geom.l_f);
    let tan_d = input.delta.tan();
    let alpha = (ratio * tan_d).atan();
    // d(alpha)/d(delta) = ratio * sec^2(delta) / (1 + (ratio tan delta)^2)
    let dalpha = ratio * (1.0 + tan_d * tan_d) / (1.0 + ratio * ratio * tan_d * tan_d);
    let (sin_h, cos_h) = (state.phi + alpha).sin_cos();
    let v = state.v;

    let a = Matrix4::new(
        0.0,
        0.0,
        -v * sin_h,
        cos_h,
        0.0,
        0.0,
        v * cos_h,
        sin_h,
        0.0,
        0.0,
        0.0,
        alpha.sin() / geom.l_r,
        0.0,
        0.0,
        0.0,
        0.0,
    );
    let b = Matrix4x2::new(
        0.0,
        -v * sin_h * dalpha,
        0.0,
        v * cos_h * dalpha,
        0.0,
        v / geom.l_r * alpha.cos() * dalpha,
        1.0,
        0.0,
    );
    (a, b)
}

/// Affine discrete EV prediction model linearized at `(state0, u = 0)`.
///
/// `x_{k+1} = affine + a_d x_k + b_d u_k`, where
/// `affine = x0 + T f^c(x0, 0) - a_d x0`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteEvModel {
    pub a_d: Matrix4<f64>,
    pub b_d: Matrix4x2<f64>,
    pub affine: Vector4<f64>,
    pub dt: f64,
}

impl DiscreteEvModel {
    pub fn step(&self, x: &Vector4<f64>, u: &Vector2<f64>) -> Vector4<f64> {
        self.affine + self.a_d * x + self.b_d * u
    }
}

/// How the linearized EV model is turned into a discrete one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discretization {
    /// `A_d = I + T A_c`, `B_d = T B_c`.
    #[default]
    Euler,
    /// Zero-order hold on the input, from
    /// `exp([A_c B_c f; 0 0 0] T)`. At `u = 0` the bicycle Jacobian is
    /// nilpotent, so `A_d` and the drift agree with Euler and only `B_d`
    /// gains the `T^2/2 A_c B_c` heading term.
    Exact,
}

/// Linearize the bicycle model at `state0` with zero input and discretize it
/// with forward Euler: `A_d = I + T A_c`, `B_d = T B_c`.
pub fn ev_linearize_discretize(
    state0: &EvState,
    geom: &VehicleGeometry,
    dt: f64,
) -> DiscreteEvModel {
    ev_linearize_discretize_with(state0, geom, dt, Discretization::Euler)
}

pub fn ev_linearize_discretize_with(
    state0: &EvState,
    geom: &VehicleGeometry,
    dt: f64,
    scheme: Discretization,
) -> DiscreteEvModel {
    let (a_c, b_c) = ev_jacobians(state0, &EvInput::ZERO, geom);
    let x0 = state0.to_vector();
    let drift = ev_dynamics_continuous(state0, &EvInput::ZERO, geom);
    let (a_d, b_d, step_drift) = match scheme {
        Discretization::Euler => (Matrix4::identity() + a_c * dt, b_c * dt, drift * dt),
        Discretization::Exact => {
            let mut m = SMatrix::<f64, 7, 7>::zeros();
            m.fixed_view_mut::<4, 4>(0, 0).copy_from(&a_c);
            m.fixed_view_mut::<4, 2>(0, 4).copy_from(&b_c);
            m.fixed_view_mut::<4, 1>(0, 6).copy_from(&drift);
            let e = (m * dt).exp();
            (
                e.fixed_view::<4, 4>(0, 0).into_owned(),
                e.fixed_view::<4, 2>(0, 4).into_owned(),
                e.fixed_view::<4, 1>(0, 6).into_owned(),
            )
        }
    };
    let affine = x0 + step_drift - a_d * x0;
    DiscreteEvModel {
        a_d,
        b_d,
        affine,
        dt,
    }
}

/// TV state `[x, vx, y, vy]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TvState {
    pub x: f64,
    pub vx: f64,
    pub y: f64,
    pub vy: f64,
}

impl TvState {
    pub const fn new(x: f64, vx: f64, y: f64, vy: f64) -> Self {
        Self { x, vx, y, vy }
    }

    pub fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.x, self.vx, self.y, self.vy)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.vx.is_finite() && self.y.is_finite() && self.vy.is_finite()
    }
}

/// Double-integrator TV model matrices for sampling time `dt`.
pub fn tv_model_matrices(dt: f64) -> (Matrix4<f64>, Matrix4x2<f64>) {
    let a = Matrix4::new(
        1.0, dt, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, dt, 0.0, 0.0, 0.0, 1.0,
    );
    let half = 0.5 * dt * dt;
    let b = Matrix4x2::new(half, 0.0, dt, 0.0, 0.0, half, 0.0, dt);
    (a, b)
}

/// TV state feedback gain, `u = K (x - x_ref)`.
pub type TvGain = Matrix2x4<f64>;
