//! Simulated opponent: saturated state feedback towards a blocking reference,
//! limited to a single lateral maneuver.

use serde::{Deserialize, Serialize};

use crate::vehicle::{tv_model_matrices, EvState, TvGain, TvState};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommittedDirection {
    #[default]
    None,
    /// Towards positive lateral position.
    Left,
    Right,
    Straight,
}

impl CommittedDirection {
    pub fn label(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Left => "left",
            Self::Right => "right",
            Self::Straight => "straight",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Self::None),
            "left" => Some(Self::Left),
            "right" => Some(Self::Right),
            "straight" => Some(Self::Straight),
            _ => None,
        }
    }
}

/// Saturation limits of the TV inputs `[u_x, u_y]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvInputBounds {
    pub u_min: [f64; 2],
    pub u_max: [f64; 2],
}

impl Default for TvInputBounds {
    fn default() -> Self {
        Self {
            u_min: [-15.0, -0.4],
            u_max: [10.0, 0.4],
        }
    }
}

pub fn default_tv_gain() -> TvGain {
    TvGain::new(0.0, -0.55, 0.0, 0.0, 0.0, 0.0, -0.63, -1.15)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TvPolicyState {
    pub committed: CommittedDirection,
    pub gain: TvGain,
    pub bounds: TvInputBounds,
    /// Longitudinal velocity held throughout the run.
    pub vx_ref: f64,
    /// Lateral offset (m) a desired move must exceed to count as the maneuver.
    pub commit_threshold: f64,
    /// Last reference handed to the feedback.
    pub reference: TvState,
}

impl TvPolicyState {
    pub fn new(tv0: &TvState, gain: TvGain, bounds: TvInputBounds, commit_threshold: f64) -> Self {
        Self {
            committed: CommittedDirection::None,
            gain,
            bounds,
            vx_ref: tv0.vx,
            commit_threshold,
            reference: TvState::new(tv0.x, tv0.vx, tv0.y, 0.0),
        }
    }
}

/// Blocking reference for the current step; may fix the committed direction.
pub fn tv_reference(ev: &EvState, tv: &TvState, policy: &mut TvPolicyState) -> TvState {
    let hold = tv.y;
    let y_ref = if ev.s >= tv.x {
        if policy.committed == CommittedDirection::None {
            policy.committed = CommittedDirection::Straight;
        }
        hold
    } else {
        let desired = ev.d;
        let offset = desired - tv.y;
        if policy.committed == CommittedDirection::None && offset.abs() > policy.commit_threshold {
            policy.committed = if offset > 0.0 {
                CommittedDirection::Left
            } else {
                CommittedDirection::Right
            };
        }
        match policy.committed {
            CommittedDirection::Left if offset > 0.0 => desired,
            CommittedDirection::Right if offset < 0.0 => desired,
            _ => hold,
        }
    };
    let reference = TvState::new(tv.x, policy.vx_ref, y_ref, 0.0);
    policy.reference = reference;
    reference
}

/// Saturated feedback input `clamp(K (xi - xi_ref))`.
pub fn tv_input(
    tv: &TvState,
    reference: &TvState,
    gain: &TvGain,
    bounds: &TvInputBounds,
) -> [f64; 2] {
    let u = gain * (tv.to_vector() - reference.to_vector());
    [
        u[0].clamp(bounds.u_min[0], bounds.u_max[0]),
        u[1].clamp(bounds.u_min[1], bounds.u_max[1]),
    ]
}

pub fn tv_step(
    tv: &TvState,
    reference: &TvState,
    gain: &TvGain,
    bounds: &TvInputBounds,
    dt: f64,
) -> TvState {
    let (a, b) = tv_model_matrices(dt);
    let u = tv_input(tv, reference, gain, bounds);
    TvState::from_vector(&(a * tv.to_vector() + b * nalgebra::Vector2::new(u[0], u[1])))
}
