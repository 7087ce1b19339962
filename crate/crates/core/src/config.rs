//! Scenario configuration: a TOML file with one section per subsystem.
//!
//! Every key has a default (the shipped scenario), unknown keys are
//! rejected, and [`ScenarioConfig::canonical_toml`] gives the byte string the
//! config hash is computed over.

use std::path::Path;

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constraints::{CaseThresholds, RiskParams, RoadBounds, VariancePairing};
use crate::error::{Error, Result};
use crate::gp::{KernelParams, OUTPUT_DIM};
use crate::qp::QpSettings;
use crate::smpc::{InputBounds, MpcWeights, SmpcConfig};
use crate::tv::{TvInputBounds, TvPolicyState};
use crate::vehicle::{Discretization, EvInput, EvState, TvGain, TvState, VehicleGeometry};

/// Noise variance below which kernel matrices are considered too brittle.
pub const NOISE_FLOOR: f64 = 1e-6;

/// The shipped scenario.
pub const PAPER_SCENARIO: &str = include_str!("../scenarios/paper_scenario.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    /// Sampling time T (s).
    pub dt: f64,
    /// Prediction horizon N.
    pub horizon: usize,
    pub max_steps: usize,
    pub settle_steps: usize,
    /// Steps that use the constant-velocity TV prediction.
    pub n_warmup: usize,
    pub seeds: Vec<u64>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            dt: 0.2,
            horizon: 10,
            max_steps: 150,
            settle_steps: 10,
            n_warmup: 5,
            seeds: (0..20).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleSection {
    pub l_f: f64,
    pub l_r: f64,
    pub l_veh: f64,
    pub w_veh: f64,
}

impl Default for VehicleSection {
    fn default() -> Self {
        Self {
            l_f: 2.0,
            l_r: 2.0,
            l_veh: 5.0,
            w_veh: 2.0,
        }
    }
}

impl VehicleSection {
    pub fn geometry(&self) -> VehicleGeometry {
        VehicleGeometry {
            l_f: self.l_f,
            l_r: self.l_r,
            length: self.l_veh,
            width: self.w_veh,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoadSection {
    pub w_lane: f64,
}

impl Default for RoadSection {
    fn default() -> Self {
        Self { w_lane: 12.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvSection {
    /// `[s, d, phi, v]`.
    pub initial: [f64; 4],
    pub v_ref: f64,
    pub d_ref: f64,
    pub phi_ref: f64,
}

impl Default for EvSection {
    fn default() -> Self {
        Self {
            initial: [0.0, 0.0, 0.0, 60.0],
            v_ref: 60.0,
            d_ref: 0.0,
            phi_ref: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmpcSection {
    pub q: [f64; 4],
    pub r: [f64; 2],
    pub s: [f64; 2],
    /// `[a, delta]` limits.
    pub u_min: [f64; 2],
    pub u_max: [f64; 2],
    /// Per-step rate limits on `[a, delta]`.
    pub du_min: [f64; 2],
    pub du_max: [f64; 2],
    pub eps_anchor: f64,
    pub regularization: f64,
    pub discretization: Discretization,
    pub qp_tol: f64,
    pub qp_max_iter: usize,
}

impl Default for SmpcSection {
    fn default() -> Self {
        Self {
            q: [0.0, 0.25, 0.2, 10.0],
            r: [0.33, 5.0],
            s: [0.33, 15.0],
            u_min: [-15.0, -0.2],
            u_max: [10.0, 0.2],
            du_min: [-5.0, -0.1],
            du_max: [5.0, 0.1],
            eps_anchor: 0.01,
            regularization: 1e-8,
            discretization: Discretization::Exact,
            qp_tol: 1e-6,
            qp_max_iter: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintsSection {
    pub eps_safe: f64,
    pub t_headway: f64,
    pub beta: f64,
    pub variance_pairing: VariancePairing,
    pub far_factor: f64,
    /// Lateral room needed to pass on a side; `w_veh / 2 + eps_safe` when absent.
    pub margin_switch: Option<f64>,
}

impl Default for ConstraintsSection {
    fn default() -> Self {
        Self {
            eps_safe: 0.5,
            t_headway: 1.0,
            beta: 0.8,
            variance_pairing: VariancePairing::Lateral,
            far_factor: 6.0,
            margin_switch: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpSection {
    /// Number of sampled TV trajectories M.
    pub samples: usize,
    pub capacity: usize,
    /// Multiplies every lengthscale.
    pub lengthscale_scale: f64,
    /// Kernels for the increments of `[x, vx, y, vy]`.
    pub kernels: [KernelParams; OUTPUT_DIM],
    /// Standard deviation growth per second of the warmup prediction.
    pub warmup_std_rate: [f64; 4],
}

impl Default for GpSection {
    fn default() -> Self {
        //        s       d    phi   v     x       vx    y    vy
        let ls = [1000.0, 3.0, 0.5, 10.0, 1000.0, 10.0, 3.0, 1.0];
        let kernel = |sigma2: f64| KernelParams {
            sigma2,
            lengthscales: ls,
            noise2: NOISE_FLOOR,
        };
        Self {
            samples: 20,
            capacity: 300,
            lengthscale_scale: 1.0,
            kernels: [kernel(100.0), kernel(0.01), kernel(0.04), kernel(0.0025)],
            warmup_std_rate: [0.5, 0.5, 0.5, 0.5],
        }
    }
}

impl GpSection {
    /// Kernels with the lengthscale scale applied.
    pub fn scaled_kernels(&self) -> [KernelParams; OUTPUT_DIM] {
        let mut out = self.kernels.clone();
        for k in out.iter_mut() {
            for l in k.lengthscales.iter_mut() {
                *l *= self.lengthscale_scale;
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TvSection {
    /// `[x, vx, y, vy]`.
    pub initial: [f64; 4],
    /// Rows of the 2x4 feedback matrix.
    pub gain: [[f64; 4]; 2],
    pub u_min: [f64; 2],
    pub u_max: [f64; 2],
    pub commit_threshold: f64,
}

impl Default for TvSection {
    fn default() -> Self {
        Self {
            initial: [80.0, 50.0, -2.5, 0.0],
            gain: [[0.0, -0.55, 0.0, 0.0], [0.0, 0.0, -0.63, -1.15]],
            u_min: [-15.0, -0.4],
            u_max: [10.0, 0.4],
            commit_threshold: 0.5,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub sim: SimSection,
    pub vehicle: VehicleSection,
    pub road: RoadSection,
    pub ev: EvSection,
    pub smpc: SmpcSection,
    pub constraints: ConstraintsSection,
    pub gp: GpSection,
    pub tv: TvSection,
}

/// Config keys accepted by parameter sweeps.
pub const SWEEPABLE: [&str; 5] = [
    "beta",
    "M",
    "t_headway",
    "commit_threshold",
    "lengthscale_scale",
];

impl ScenarioConfig {
    pub fn paper_scenario() -> Self {
        Self::from_toml_str(PAPER_SCENARIO, Path::new("paper_scenario.toml"))
            .expect("shipped scenario is valid")
    }

    /// Parse and validate; `origin` only labels error messages.
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::ConfigParse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn canonical_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigInvalid(m.to_string()));
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let s = &self.sim;
        if !pos(s.dt) {
            return bad("dt must be positive");
        }
        if s.horizon < 1 {
            return bad("horizon must be at least 1");
        }
        if s.max_steps < 1 {
            return bad("max_steps must be at least 1");
        }
        if s.settle_steps < 1 {
            return bad("settle_steps must be at least 1");
        }
        self.vehicle
            .geometry()
            .validate()
            .map_err(|e| Error::ConfigInvalid(format!("vehicle: {e}")))?;
        if !pos(self.road.w_lane) {
            return bad("w_lane must be positive");
        }
        if self.ev.initial.iter().any(|v| !v.is_finite()) || self.ev.initial[3] < 0.0 {
            return bad("ev.initial must be finite with non-negative speed");
        }
        if ![self.ev.v_ref, self.ev.d_ref, self.ev.phi_ref]
            .iter()
            .all(|v| v.is_finite())
        {
            return bad("ev references must be finite");
        }
        let m = &self.smpc;
        if m.q
            .iter()
            .chain(&m.r)
            .chain(&m.s)
            .any(|w| !(w.is_finite() && *w >= 0.0))
        {
            return bad("weights must be non-negative");
        }
        for i in 0..2 {
            if !(m.u_min[i] <= m.u_max[i]) {
                return bad("smpc bounds must satisfy u_min <= u_max");
            }
            if !(m.du_min[i] <= 0.0 && 0.0 <= m.du_max[i]) {
                return bad("smpc rate bounds must satisfy du_min <= 0 <= du_max");
            }
            if !(self.tv.u_min[i] <= self.tv.u_max[i]) {
                return bad("tv bounds must satisfy u_min <= u_max");
            }
        }
        if !(m.eps_anchor >= 0.0 && m.regularization >= 0.0 && pos(m.qp_tol) && m.qp_max_iter > 0) {
            return bad("smpc solver settings out of range");
        }
        let c = &self.constraints;
        if !(c.beta > 0.0 && c.beta < 1.0) {
            return bad("beta out of (0,1)");
        }
        if !(c.eps_safe >= 0.0 && c.t_headway >= 0.0 && pos(c.far_factor)) {
            return bad("eps_safe, t_headway and far_factor must be non-negative");
        }
        if c.margin_switch.is_some_and(|v| !(v >= 0.0)) {
            return bad("margin_switch must be non-negative");
        }
        let g = &self.gp;
        if g.samples < 2 {
            return bad("gp.samples (M) must be at least 2");
        }
        if g.capacity < 1 {
            return bad("gp.capacity must be at least 1");
        }
        if !pos(g.lengthscale_scale) {
            return bad("gp.lengthscale_scale must be positive");
        }
        for k in &g.kernels {
            k.validate()
                .map_err(|e| Error::ConfigInvalid(format!("gp kernel: {e}")))?;
            if k.noise2 < NOISE_FLOOR {
                return bad("gp kernel noise2 below 1e-6");
            }
        }
        if g.warmup_std_rate
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return bad("gp.warmup_std_rate must be non-negative");
        }
        if self
            .tv
            .initial
            .iter()
            .chain(self.tv.gain.iter().flatten())
            .any(|v| !v.is_finite())
        {
            return bad("tv state and gain must be finite");
        }
        if !(self.tv.commit_threshold >= 0.0) {
            return bad("commit_threshold must be non-negative");
        }
        Ok(())
    }

    /// Copy with one sweepable parameter replaced.
    pub fn with_param(&self, name: &str, value: f64) -> Result<Self> {
        let mut cfg = self.clone();
        match name {
            "beta" => cfg.constraints.beta = value,
            "M" | "m" | "samples" => {
                if !(value.fract() == 0.0 && value >= 0.0) {
                    return Err(Error::ConfigInvalid(format!(
                        "M must be an integer, got {value}"
                    )));
                }
                cfg.gp.samples = value as usize;
            }
            "t_headway" => cfg.constraints.t_headway = value,
            "commit_threshold" => cfg.tv.commit_threshold = value,
            "lengthscale_scale" => cfg.gp.lengthscale_scale = value,
            _ => {
                return Err(Error::ConfigInvalid(format!(
                    "unknown sweep parameter {name:?}; sweepable: {}",
                    SWEEPABLE.join(", ")
                )))
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn is_sweepable(name: &str) -> bool {
        SWEEPABLE.contains(&name) || matches!(name, "m" | "samples")
    }

    pub fn ev_initial(&self) -> EvState {
        let [s, d, phi, v] = self.ev.initial;
        EvState::new(s, d, phi, v)
    }

    pub fn tv_initial(&self) -> TvState {
        let [x, vx, y, vy] = self.tv.initial;
        TvState::new(x, vx, y, vy)
    }

    pub fn tv_policy(&self) -> TvPolicyState {
        let g = self.tv.gain;
        let gain = TvGain::new(
            g[0][0], g[0][1], g[0][2], g[0][3], g[1][0], g[1][1], g[1][2], g[1][3],
        );
        let bounds = TvInputBounds {
            u_min: self.tv.u_min,
            u_max: self.tv.u_max,
        };
        TvPolicyState::new(&self.tv_initial(), gain, bounds, self.tv.commit_threshold)
    }

    pub fn warmup_std_rate(&self) -> Vector4<f64> {
        Vector4::from(self.gp.warmup_std_rate)
    }

    pub fn smpc_config(&self) -> Result<SmpcConfig> {
        let geometry = self.vehicle.geometry();
        let m = &self.smpc;
        let c = &self.constraints;
        let mut thresholds = CaseThresholds::for_geometry(&geometry, c.eps_safe);
        thresholds.far_factor = c.far_factor;
        if let Some(margin) = c.margin_switch {
            thresholds.margin_switch = margin;
        }
        let input = |v: [f64; 2]| EvInput::new(v[0], v[1]);
        Ok(SmpcConfig {
            horizon: self.sim.horizon,
            dt: self.sim.dt,
            geometry,
            weights: MpcWeights::diagonal(m.q, m.r, m.s),
            bounds: InputBounds {
                u_min: input(m.u_min),
                u_max: input(m.u_max),
                du_min: input(m.du_min),
                du_max: input(m.du_max),
            },
            road: RoadBounds::from_lane_width(self.road.w_lane),
            reference: EvState::new(0.0, self.ev.d_ref, self.ev.phi_ref, self.ev.v_ref),
            eps_safe: c.eps_safe,
            t_headway: c.t_headway,
            risk: RiskParams::new(c.beta)
                .map_err(|_| Error::ConfigInvalid("beta out of (0,1)".into()))?,
            pairing: c.variance_pairing,
            thresholds,
            eps_anchor: m.eps_anchor,
            regularization: m.regularization,
            discretization: m.discretization,
            qp: QpSettings {
                tol_kkt: m.qp_tol,
                tol_feas: m.qp_tol,
                max_iter: m.qp_max_iter,
                ..QpSettings::default()
            },
        })
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ScenarioConfig::from_toml_str(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_scenario_values() {
        let cfg = ScenarioConfig::paper_scenario();
        assert_eq!(cfg.sim.dt, 0.2);
        assert_eq!(cfg.sim.horizon, 10);
        assert_eq!(cfg.ev.initial, [0.0, 0.0, 0.0, 60.0]);
        assert_eq!(cfg.tv.initial, [80.0, 50.0, -2.5, 0.0]);
    }

    #[test]
    fn beta_out_of_range() {
        let err = ScenarioConfig::from_toml_str("[constraints]\nbeta = 1.5\n", Path::new("x.toml"))
            .unwrap_err();
        assert!(err.to_string().contains("beta out of (0,1)"), "{err}");
    }

    #[test]
    fn missing_t_headway_defaults() {
        let cfg = ScenarioConfig::from_toml_str("[constraints]\nbeta = 0.9\n", Path::new("x.toml"))
            .unwrap();
        assert_eq!(cfg.constraints.t_headway, 1.0);
    }

    #[test]
    fn unknown_key_rejected() {
        let err =
            ScenarioConfig::from_toml_str("[sim]\nhorizn = 3\n", Path::new("x.toml")).unwrap_err();
        assert!(matches!(err, Error::ConfigParse { .. }));
        assert!(err.to_string().contains("horizn"), "{err}");
    }

    #[test]
    fn canonical_round_trip() {
        let cfg = ScenarioConfig::paper_scenario();
        let again =
            ScenarioConfig::from_toml_str(&cfg.canonical_toml(), Path::new("x.toml")).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
    }

    #[test]
    fn sweep_param_names() {
        let cfg = ScenarioConfig::default();
        assert_eq!(cfg.with_param("beta", 0.95).unwrap().constraints.beta, 0.95);
        assert_eq!(cfg.with_param("M", 7.0).unwrap().gp.samples, 7);
        assert!(cfg.with_param("gamma", 1.0).is_err());
        assert!(cfg.with_param("beta", 1.0).is_err());
    }
}
