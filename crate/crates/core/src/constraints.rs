//! Safety rectangle, case-based linear collision constraints and their
//! chance-constraint tightening.
//!
//! The rectangle around the TV is described by its semi-axes: an EV center
//! point strictly inside `|s - x| < half_length, |d - y| < half_width` is
//! unsafe. Its base semi-axes are `a_r = l_veh + a_tilde` and
//! `b_r = w_veh + eps_safe`.

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vehicle::{EvState, TvState, VehicleGeometry};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SafetyRectangle {
    pub center_x: f64,
    pub center_y: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl SafetyRectangle {
    pub fn rear(&self) -> f64 {
        self.center_x - self.half_length
    }

    pub fn front(&self) -> f64 {
        self.center_x + self.half_length
    }

    pub fn top(&self) -> f64 {
        self.center_y + self.half_width
    }

    pub fn bottom(&self) -> f64 {
        self.center_y - self.half_width
    }

    /// Open-set membership of an EV center point.
    pub fn contains_strictly(&self, s: f64, d: f64) -> bool {
        (s - self.center_x).abs() < self.half_length && (d - self.center_y).abs() < self.half_width
    }
}

/// `q_y d + q_x s + q_t <= 0` when active.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfPlaneConstraint {
    pub q_y: f64,
    pub q_x: f64,
    pub q_t: f64,
    pub active: bool,
}

impl HalfPlaneConstraint {
    pub const INACTIVE: Self = Self {
        q_y: 0.0,
        q_x: 0.0,
        q_t: 0.0,
        active: false,
    };

    /// Constraint value at `(s, d)`; non-positive means satisfied.
    pub fn value(&self, s: f64, d: f64) -> f64 {
        self.q_y * d + self.q_x * s + self.q_t
    }

    pub fn is_satisfied(&self, s: f64, d: f64) -> bool {
        !self.active || self.value(s, d) <= 0.0
    }
}

/// Chance-constraint level and the matching 2-dof chi-squared quantile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiskParams {
    pub beta: f64,
    pub eta: f64,
}

impl RiskParams {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::invalid("beta out of (0,1)"));
        }
        Ok(Self {
            beta,
            eta: chi2_2dof_quantile(beta),
        })
    }
}

/// Quantile of the chi-squared distribution with two degrees of freedom,
/// whose CDF is `1 - exp(-x/2)`.
pub fn chi2_2dof_quantile(p: f64) -> f64 {
    -2.0 * (-p).ln_1p()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintCase {
    /// Far away or already past: no constraint.
    A,
    /// EV left of the TV: pass on the left.
    B,
    /// EV right of the TV: pass on the right.
    C,
    /// EV left of the TV but the left side is blocked: pass on the right.
    D,
    /// EV right of the TV but the right side is blocked: pass on the left.
    E,
}

impl ConstraintCase {
    pub fn label(self) -> &'static str {
        match self {
            Self::A => "A",
            Self::B => "B",
            Self::C => "C",
            Self::D => "D",
            Self::E => "E",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "A" => Some(Self::A),
            "B" => Some(Self::B),
            "C" => Some(Self::C),
            "D" => Some(Self::D),
            "E" => Some(Self::E),
            _ => None,
        }
    }

    /// Side of the TV the EV is on when the case is chosen: B and D are
    /// picked from the left, C and E from the right.
    pub fn ev_side(self) -> Option<Side> {
        match self {
            Self::A => None,
            Self::B | Self::D => Some(Side::Left),
            Self::C | Self::E => Some(Side::Right),
        }
    }

    /// Side of the TV the generated constraint keeps the EV on.
    pub fn pass_side(self) -> Option<Side> {
        match self {
            Self::A => None,
            Self::B | Self::E => Some(Side::Left),
            Self::C | Self::D => Some(Side::Right),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Lateral road limits for the EV center.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadBounds {
    pub d_min: f64,
    pub d_max: f64,
}

impl RoadBounds {
    pub fn from_lane_width(w_lane: f64) -> Self {
        Self {
            d_min: -w_lane / 2.0,
            d_max: w_lane / 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CaseThresholds {
    /// Case A applies beyond `far_factor * half_length` of longitudinal gap.
    pub far_factor: f64,
    /// Minimum lateral room (m) to the road limit for a pass on that side.
    pub margin_switch: f64,
}

impl CaseThresholds {
    pub fn for_geometry(geom: &VehicleGeometry, eps_safe: f64) -> Self {
        Self {
            far_factor: 3.0,
            margin_switch: geom.width / 2.0 + eps_safe,
        }
    }
}

/// Which TV variance component widens the rectangle laterally.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariancePairing {
    /// Lateral variance widens, longitudinal variance lengthens.
    #[default]
    Lateral,
    /// The literal subscript pairing: longitudinal variance widens.
    Literal,
}

/// Untightened rectangle around the predicted TV.
///
/// The length term grows with the closing speed:
/// `a_tilde = t_headway * max(0, v cos(phi) - vx_tv)`.
pub fn base_rectangle(
    ev: &EvState,
    tv_pred: &TvState,
    geom: &VehicleGeometry,
    eps_safe: f64,
    t_headway: f64,
) -> SafetyRectangle {
    let closing = (ev.longitudinal_speed() - tv_pred.vx).max(0.0);
    SafetyRectangle {
        center_x: tv_pred.x,
        center_y: tv_pred.y,
        half_length: geom.length + t_headway * closing,
        half_width: geom.width + eps_safe,
    }
}

/// Grow the rectangle by `sqrt(var * eta)` in each direction.
pub fn tighten_rectangle(
    rect: &SafetyRectangle,
    variance: &Vector4<f64>,
    risk: &RiskParams,
    pairing: VariancePairing,
) -> SafetyRectangle {
    let (lat, lon) = match pairing {
        VariancePairing::Lateral => (variance[2], variance[0]),
        VariancePairing::Literal => (variance[0], variance[2]),
    };
    let root_eta = risk.eta.sqrt();
    SafetyRectangle {
        half_width: rect.half_width + lat.max(0.0).sqrt() * root_eta,
        half_length: rect.half_length + lon.max(0.0).sqrt() * root_eta,
        ..*rect
    }
}

/// Table-driven choice of the constraint shape for this planning cycle.
///
/// `rect` supplies the lateral extent to test for blocked sides; the
/// controller passes the envelope of the tightened rectangles over the
/// horizon. A side switch (D/E) is only offered while the EV is still behind
/// the rectangle.
pub fn classify_case(
    ev: &EvState,
    tv: &TvState,
    road: &RoadBounds,
    rect: &SafetyRectangle,
    thresholds: &CaseThresholds,
) -> ConstraintCase {
    let gap = tv.x - ev.s;
    if gap > thresholds.far_factor * rect.half_length || -gap > rect.half_length {
        return ConstraintCase::A;
    }
    let left = ev.d >= tv.y;
    if ev.s >= tv.x - rect.half_length {
        // Alongside: keep the current side.
        return if left {
            ConstraintCase::B
        } else {
            ConstraintCase::C
        };
    }
    let margin = thresholds.margin_switch;
    if left {
        let room = (road.d_max - ev.d).min(road.d_max - rect.top());
        if room > margin {
            ConstraintCase::B
        } else {
            ConstraintCase::D
        }
    } else {
        let room = (ev.d - road.d_min).min(rect.bottom() - road.d_min);
        if room > margin {
            ConstraintCase::C
        } else {
            ConstraintCase::E
        }
    }
}

/// Half-plane for one prediction step, anchored so that the current EV
/// position is feasible: a line violated by `ev0` is shifted to pass
/// `eps_anchor` away from it. See [`constraint_line`] for the shape.
pub fn build_constraint(
    case: ConstraintCase,
    ev0: &EvState,
    rect_k: &SafetyRectangle,
    s_nominal: f64,
    eps_anchor: f64,
) -> HalfPlaneConstraint {
    anchor_to(
        constraint_line(case, ev0, rect_k, s_nominal),
        ev0,
        eps_anchor,
    )
}

/// Shift an active half-plane so that `ev0` satisfies it with `eps_anchor`
/// to spare. Satisfied constraints are returned unchanged.
pub fn anchor_to(
    mut c: HalfPlaneConstraint,
    ev0: &EvState,
    eps_anchor: f64,
) -> HalfPlaneConstraint {
    if c.active {
        let v = c.value(ev0.s, ev0.d);
        if v > 0.0 {
            c.q_t -= v + eps_anchor;
        }
    }
    c
}

/// The unanchored line: through the current EV position and the rear corner
/// of `rect_k` on the passing side, horizontal at the rectangle edge once the
/// nominal EV position `s_nominal` is beyond the corner (or the EV is already
/// at or past the edge level).
pub fn constraint_line(
    case: ConstraintCase,
    ev0: &EvState,
    rect_k: &SafetyRectangle,
    s_nominal: f64,
) -> HalfPlaneConstraint {
    let Some(side) = case.pass_side() else {
        return HalfPlaneConstraint::INACTIVE;
    };
    // Work in a frame where the EV passes above the rectangle; `sign`
    // maps lateral coordinates back.
    let sign = match side {
        Side::Left => 1.0,
        Side::Right => -1.0,
    };
    let d0 = sign * ev0.d;
    let edge = match side {
        Side::Left => rect_k.top(),
        Side::Right => -rect_k.bottom(),
    };
    let corner_s = rect_k.rear();

    // EV above: -d + m s + c <= 0 in the reflected frame.
    let (slope, intercept) = if ev0.s >= corner_s || s_nominal >= corner_s || d0 >= edge {
        (0.0, edge)
    } else {
        let m = (edge - d0) / (corner_s - ev0.s);
        (m, d0 - m * ev0.s)
    };
    HalfPlaneConstraint {
        q_y: -sign,
        q_x: slope,
        q_t: intercept,
        active: true,
    }
}
