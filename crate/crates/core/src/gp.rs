//! Gaussian-process model of the TV transition dynamics.
//!
//! Inputs are the concatenated EV and TV states `(s, d, phi, v, x, vx, y, vy)`,
//! outputs are TV state increments over one sampling period. Each of the four
//! output dimensions is an independent zero-mean GP with a squared-exponential
//! kernel and its own hyperparameters.
//!
//! Every per-dimension model keeps the lower Cholesky factor `L` of
//! `K + noise2 I` together with the whitened targets `w = L^{-1} gamma`, so
//! the posterior at a query `x*` is
//!
//! ```text
//! v    = L^{-1} kappa(x*)
//! mean = v . w            (= kappa^T K^{-1} gamma)
//! var  = kappa(x*, x*) - v . v
//! ```
//!
//! Appending a point only adds one row to `L`, which is what the sequential
//! trajectory sampler exploits.

use nalgebra::{DMatrix, DVector, SVector, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vehicle::{EvState, TvState};

pub const INPUT_DIM: usize = 8;
pub const OUTPUT_DIM: usize = 4;

pub type GpInput = SVector<f64, INPUT_DIM>;

/// Jitter escalation stops once the diagonal noise would exceed this value.
pub const MAX_JITTER: f64 = 1e-2;
const MIN_JITTER: f64 = 1e-10;

pub fn gp_input(ev: &EvState, tv: &TvState) -> GpInput {
    GpInput::from([ev.s, ev.d, ev.phi, ev.v, tv.x, tv.vx, tv.y, tv.vy])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    /// Signal variance.
    pub sigma2: f64,
    /// Per-input lengthscales, the diagonal of `L`.
    pub lengthscales: [f64; INPUT_DIM],
    /// Observation noise / jitter variance.
    pub noise2: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            sigma2: 1.0,
            lengthscales: [10.0; INPUT_DIM],
            noise2: 1e-6,
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(Error::invalid("kernel sigma2 must be positive"));
        }
        if self
            .lengthscales
            .iter()
            .any(|l| !(l.is_finite() && *l > 0.0))
        {
            return Err(Error::invalid("kernel lengthscales must be positive"));
        }
        if !(self.noise2.is_finite() && self.noise2 >= 0.0) {
            return Err(Error::invalid("kernel noise2 must be non-negative"));
        }
        Ok(())
    }

    pub fn eval(&self, a: &GpInput, b: &GpInput) -> f64 {
        let mut r2 = 0.0;
        for i in 0..INPUT_DIM {
            let t = (a[i] - b[i]) / self.lengthscales[i];
            r2 += t * t;
        }
        self.sigma2 * (-0.5 * r2).exp()
    }
}

/// Squared-exponential kernel `sigma2 exp(-(x-x')^T L^-2 (x-x') / 2)`.
pub fn kernel_eval(a: &GpInput, b: &GpInput, params: &KernelParams) -> f64 {
    params.eval(a, b)
}

/// Gram matrix `K_ij = k(x_i, x_j)` without any noise term.
pub fn gram_matrix(inputs: &[GpInput], params: &KernelParams) -> DMatrix<f64> {
    let n = inputs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = params.eval(&inputs[i], &inputs[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Training pairs `(x_n, y_n)` with a bounded capacity.
#[derive(Clone, Debug, PartialEq)]
pub struct GpDataset {
    pub inputs: Vec<GpInput>,
    pub outputs: Vec<Vector4<f64>>,
    pub capacity: usize,
}

impl GpDataset {
    pub fn new(capacity: usize) -> Self {
        Self {
            inputs: Vec::new(),
            outputs: Vec::new(),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Append a transition `(ev, tv) -> tv_next`. Returns true when the oldest
    /// point had to be evicted.
    pub fn push_transition(&mut self, ev: &EvState, tv: &TvState, tv_next: &TvState) -> bool {
        self.push(gp_input(ev, tv), tv_next.to_vector() - tv.to_vector())
    }

    pub fn push(&mut self, x: GpInput, y: Vector4<f64>) -> bool {
        self.inputs.push(x);
        self.outputs.push(y);
        if self.inputs.len() > self.capacity {
            self.inputs.remove(0);
            self.outputs.remove(0);
            true
        } else {
            false
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.len() != self.outputs.len() {
            return Err(Error::Dimension(
                "dataset inputs and outputs differ in length".into(),
            ));
        }
        let finite = self.inputs.iter().all(|x| x.iter().all(|v| v.is_finite()))
            && self.outputs.iter().all(|y| y.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        Ok(())
    }

    fn targets(&self, dim: usize) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.outputs.iter().map(|y| y[dim]))
    }
}

/// Factorization for one output dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct DimFactor {
    /// Lower Cholesky factor of `K + noise2 I`.
    pub chol: DMatrix<f64>,
    /// Noise actually placed on the diagonal (after jitter escalation).
    pub noise2: f64,
    /// `L^{-1} gamma_d`.
    pub whitened: DVector<f64>,
    /// `K^{-1} gamma_d`.
    pub alpha: DVector<f64>,
}

impl DimFactor {
    fn fit(inputs: &[GpInput], targets: &DVector<f64>, params: &KernelParams) -> Result<Self> {
        let gram = gram_matrix(inputs, params);
        let n = inputs.len();
        let mut noise2 = params.noise2;
        loop {
            let mut k = gram.clone();
            for i in 0..n {
                k[(i, i)] += noise2;
            }
            if let Some(chol) = cholesky_lower(&k) {
                let whitened = forward_solve(&chol, targets.as_slice());
                let alpha = backward_solve_transposed(&chol, &whitened);
                return Ok(Self {
                    chol,
                    noise2,
                    whitened: DVector::from_vec(whitened),
                    alpha: DVector::from_vec(alpha),
                });
            }
            if noise2 >= MAX_JITTER {
                return Err(Error::NotPositiveDefinite { noise2 });
            }
            noise2 = (noise2 * 10.0).clamp(MIN_JITTER, MAX_JITTER);
        }
    }

    /// Append one point via a rank-1 extension of the factor. Returns `false`
    /// when the extension is numerically unsafe and a refit is needed.
    fn extend(&mut self, k_vec: &[f64], k_self: f64, target: f64) -> bool {
        let n = self.chol.nrows();
        let l = forward_solve(&self.chol, k_vec);
        let r = k_self + self.noise2 - dot(&l, &l);
        if !(r > 1e-12 * (k_self + self.noise2)) {
            return false;
        }
        let diag = r.sqrt();
        let mut chol = self.chol.clone().resize(n + 1, n + 1, 0.0);
        for (j, lj) in l.iter().enumerate() {
            chol[(n, j)] = *lj;
        }
        chol[(n, n)] = diag;
        let w_new = (target - dot(&l, self.whitened.as_slice())) / diag;
        let whitened = self.whitened.clone().push(w_new);
        self.alpha = DVector::from_vec(backward_solve_transposed(&chol, whitened.as_slice()));
        self.chol = chol;
        self.whitened = whitened;
        true
    }
}

/// Four independent GPs over a shared dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct GpModel {
    pub params: [KernelParams; OUTPUT_DIM],
    pub dataset: GpDataset,
    /// Empty until the model holds at least one training point.
    pub dims: Vec<DimFactor>,
}

impl GpModel {
    /// A model without data. Posterior queries fail until the first
    /// observation arrives.
    pub fn empty(params: [KernelParams; OUTPUT_DIM], capacity: usize) -> Result<Self> {
        for p in &params {
            p.validate()?;
        }
        if capacity == 0 {
            return Err(Error::invalid("dataset capacity must be at least 1"));
        }
        Ok(Self {
            params,
            dataset: GpDataset::new(capacity),
            dims: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }

    pub fn is_fitted(&self) -> bool {
        !self.dims.is_empty()
    }

    /// Posterior mean and (clamped) variance of each output dimension.
    pub fn posterior(&self, x: &GpInput) -> Result<(Vector4<f64>, Vector4<f64>)> {
        let (mean, var) = self.posterior_unclamped(x)?;
        Ok((mean, var.map(|v| v.max(0.0))))
    }

    /// Like [`GpModel::posterior`] but without clamping round-off negative
    /// variances to zero.
    pub fn posterior_unclamped(&self, x: &GpInput) -> Result<(Vector4<f64>, Vector4<f64>)> {
        if !self.is_fitted() {
            return Err(Error::Unfitted);
        }
        let mut mean = Vector4::zeros();
        let mut var = Vector4::zeros();
        for (d, factor) in self.dims.iter().enumerate() {
            let p = &self.params[d];
            let kappa: Vec<f64> = self.dataset.inputs.iter().map(|xi| p.eval(xi, x)).collect();
            mean[d] = dot(&kappa, factor.alpha.as_slice());
            let v = forward_solve(&factor.chol, &kappa);
            var[d] = p.sigma2 - dot(&v, &v);
        }
        Ok((mean, var))
    }

    /// Log marginal likelihood summed over output dimensions.
    pub fn log_marginal_likelihood(&self) -> Result<f64> {
        if !self.is_fitted() {
            return Err(Error::Unfitted);
        }
        let n = self.len() as f64;
        Ok(self
            .dims
            .iter()
            .map(|f| {
                let log_det: f64 = (0..f.chol.nrows()).map(|i| f.chol[(i, i)].ln()).sum();
                -0.5 * f.whitened.norm_squared()
                    - log_det
                    - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
            })
            .sum())
    }
}

/// Fit the four per-dimension GPs on `dataset`.
pub fn gp_fit(dataset: GpDataset, params: [KernelParams; OUTPUT_DIM]) -> Result<GpModel> {
    if dataset.is_empty() {
        return Err(Error::invalid("cannot fit a GP on an empty dataset"));
    }
    dataset.validate()?;
    let mut model = GpModel::empty(params, dataset.capacity.max(dataset.len()))?;
    model.dataset = dataset;
    refit(&mut model)?;
    Ok(model)
}

fn refit(model: &mut GpModel) -> Result<()> {
    model.dims = (0..OUTPUT_DIM)
        .map(|d| {
            DimFactor::fit(
                &model.dataset.inputs,
                &model.dataset.targets(d),
                &model.params[d],
            )
        })
        .collect::<Result<_>>()?;
    Ok(())
}

/// Posterior of `model` at `x`.
pub fn gp_posterior(model: &GpModel, x: &GpInput) -> Result<(Vector4<f64>, Vector4<f64>)> {
    model.posterior(x)
}

/// Add the realized transition `(ev, tv) -> tv_next` and return the updated
/// model. Uses a rank-1 factor extension unless the capacity forces an
/// eviction (or the extension is ill-conditioned), in which case the model is
/// refit from scratch.
pub fn gp_observe(
    model: &GpModel,
    ev: &EvState,
    tv: &TvState,
    tv_next: &TvState,
) -> Result<GpModel> {
    let mut next = model.clone();
    let x = gp_input(ev, tv);
    let y = tv_next.to_vector() - tv.to_vector();
    if !(x.iter().all(|v| v.is_finite()) && y.iter().all(|v| v.is_finite())) {
        return Err(Error::invalid("observation contains non-finite values"));
    }
    let evicted = next.dataset.push(x, y);
    if evicted || !next.is_fitted() {
        refit(&mut next)?;
        return Ok(next);
    }
    let n = next.dataset.len() - 1;
    let mut ok = true;
    for d in 0..OUTPUT_DIM {
        let p = &next.params[d];
        let k_vec: Vec<f64> = next.dataset.inputs[..n]
            .iter()
            .map(|xi| p.eval(xi, &x))
            .collect();
        let k_self = p.sigma2;
        if !next.dims[d].extend(&k_vec, k_self, y[d]) {
            ok = false;
            break;
        }
    }
    if !ok {
        refit(&mut next)?;
    }
    Ok(next)
}

/// Pick the lengthscale multiplier from `scales` that maximizes the log
/// marginal likelihood on `dataset`.
pub fn grid_search_lengthscales(
    dataset: &GpDataset,
    params: &[KernelParams; OUTPUT_DIM],
    scales: &[f64],
) -> Result<[KernelParams; OUTPUT_DIM]> {
    let mut best: Option<(f64, [KernelParams; OUTPUT_DIM])> = None;
    for &scale in scales {
        let mut candidate = params.clone();
        for p in candidate.iter_mut() {
            for l in p.lengthscales.iter_mut() {
                *l *= scale;
            }
        }
        let Ok(model) = gp_fit(dataset.clone(), candidate.clone()) else {
            continue;
        };
        let lml = model.log_marginal_likelihood()?;
        if best.as_ref().is_none_or(|(b, _)| lml > *b) {
            best = Some((lml, candidate));
        }
    }
    best.map(|(_, p)| p)
        .ok_or_else(|| Error::invalid("no lengthscale candidate could be fitted"))
}

/// Per-step statistics of the sampled TV trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct TvPredictionStats {
    /// Sample means for steps `1..=N`.
    pub means: Vec<TvState>,
    /// Unbiased sample variances `[x, vx, y, vy]` for steps `1..=N`.
    pub variances: Vec<Vector4<f64>>,
    /// `samples[m][k]`, only filled when requested.
    pub samples: Option<Vec<Vec<TvState>>>,
}

impl TvPredictionStats {
    pub fn horizon(&self) -> usize {
        self.means.len()
    }

    /// Statistics of an explicit sample grid `samples[m][k]`.
    pub fn from_samples(samples: Vec<Vec<TvState>>, retain: bool) -> Self {
        let m = samples.len();
        let horizon = samples.first().map_or(0, Vec::len);
        let mut means = Vec::with_capacity(horizon);
        let mut variances = Vec::with_capacity(horizon);
        for k in 0..horizon {
            let mean = samples
                .iter()
                .map(|t| t[k].to_vector())
                .sum::<Vector4<f64>>()
                / m as f64;
            let var = if m > 1 {
                samples
                    .iter()
                    .map(|t| (t[k].to_vector() - mean).map(|e| e * e))
                    .sum::<Vector4<f64>>()
                    / (m - 1) as f64
            } else {
                Vector4::zeros()
            };
            means.push(TvState::from_vector(&mean));
            variances.push(var);
        }
        Self {
            means,
            variances,
            samples: retain.then_some(samples),
        }
    }
}

/// Extra rows appended to a base factor while sampling one trajectory.
struct ConditionedDim<'a> {
    base: &'a DimFactor,
    rows: Vec<Vec<f64>>,
    whitened: Vec<f64>,
}

impl ConditionedDim<'_> {
    /// Returns `(v, mean, var)` with `v = L^{-1} kappa`.
    fn predict(&self, kappa: &[f64], k_self: f64) -> (Vec<f64>, f64, f64) {
        let n = self.base.chol.nrows();
        let mut v = forward_solve(&self.base.chol, &kappa[..n]);
        for (j, row) in self.rows.iter().enumerate() {
            let idx = n + j;
            let s = dot(&row[..idx], &v);
            v.push((kappa[idx] - s) / row[idx]);
        }
        let mean = dot(&v[..n], self.base.whitened.as_slice()) + dot(&v[n..], &self.whitened);
        let var = k_self - dot(&v, &v);
        (v, mean, var)
    }

    fn condition(&mut self, mut v: Vec<f64>, mean: f64, var: f64, value: f64) {
        let diag = (var.max(0.0) + self.base.noise2).sqrt();
        self.whitened.push((value - mean) / diag);
        v.push(diag);
        self.rows.push(v);
    }
}

fn sample_one(
    model: &GpModel,
    ev_plan: &[EvState],
    tv0: &TvState,
    horizon: usize,
    seed: u64,
) -> Vec<TvState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dims: Vec<ConditionedDim> = model
        .dims
        .iter()
        .map(|base| ConditionedDim {
            base,
            rows: Vec::new(),
            whitened: Vec::new(),
        })
        .collect();
    let mut inputs: Vec<GpInput> = model.dataset.inputs.clone();
    let mut tv = *tv0;
    let mut out = Vec::with_capacity(horizon);
    for ev in ev_plan.iter().take(horizon) {
        let x = gp_input(ev, &tv);
        let mut delta = Vector4::zeros();
        for (d, dim) in dims.iter_mut().enumerate() {
            let p = &model.params[d];
            let kappa: Vec<f64> = inputs.iter().map(|xi| p.eval(xi, &x)).collect();
            let (v, mean, var) = dim.predict(&kappa, p.sigma2);
            let z: f64 = StandardNormal.sample(&mut rng);
            let value = mean + var.max(0.0).sqrt() * z;
            dim.condition(v, mean, var, value);
            delta[d] = value;
        }
        inputs.push(x);
        tv = TvState::from_vector(&(tv.to_vector() + delta));
        out.push(tv);
    }
    out
}

/// Draw `m` TV trajectories of length `horizon` by sequentially sampling the
/// GP posterior and conditioning a per-trajectory copy of the model on each
/// drawn transition.
///
/// `ev_plan[k]` is the EV state paired with the TV state at step `k`. Each
/// trajectory uses its own generator seeded with `seed + index`, so the
/// result does not depend on how the work is scheduled.
pub fn sample_tv_trajectories(
    model: &GpModel,
    ev_plan: &[EvState],
    tv0: &TvState,
    m: usize,
    horizon: usize,
    seed: u64,
    retain_samples: bool,
) -> Result<TvPredictionStats> {
    if !model.is_fitted() {
        return Err(Error::Unfitted);
    }
    if m < 2 {
        return Err(Error::invalid(
            "at least two sample trajectories are required",
        ));
    }
    if horizon == 0 {
        return Err(Error::invalid("prediction horizon must be at least 1"));
    }
    if ev_plan.len() < horizon {
        return Err(Error::Dimension(format!(
            "EV plan has {} states, horizon needs {horizon}",
            ev_plan.len()
        )));
    }
    let samples: Vec<Vec<TvState>> = (0..m)
        .into_par_iter()
        .map(|i| sample_one(model, ev_plan, tv0, horizon, seed.wrapping_add(i as u64)))
        .collect();
    if samples.iter().flatten().any(|s| !s.is_finite()) {
        return Err(Error::NotPositiveDefinite {
            noise2: model.dims[0].noise2,
        });
    }
    Ok(TvPredictionStats::from_samples(samples, retain_samples))
}

/// Constant-velocity TV prediction with a linearly growing standard
/// deviation, used before the GP has seen enough data.
pub fn constant_velocity_prediction(
    tv0: &TvState,
    horizon: usize,
    dt: f64,
    std_rate: &Vector4<f64>,
) -> TvPredictionStats {
    let mut means = Vec::with_capacity(horizon);
    let mut variances = Vec::with_capacity(horizon);
    for k in 1..=horizon {
        let t = k as f64 * dt;
        means.push(TvState::new(
            tv0.x + tv0.vx * t,
            tv0.vx,
            tv0.y + tv0.vy * t,
            tv0.vy,
        ));
        variances.push(std_rate.map(|r| (r * t) * (r * t)));
    }
    TvPredictionStats {
        means,
        variances,
        samples: None,
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower Cholesky factor, `None` if the matrix is not numerically positive
/// definite.
pub(crate) fn cholesky_lower(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return None;
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}

/// Solve `L z = b` for lower-triangular `L`.
pub(crate) fn forward_solve(l: &DMatrix<f64>, b: &[f64]) -> Vec<f64> {
    let n = l.nrows();
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for (k, zk) in z.iter().enumerate().take(i) {
            s -= l[(i, k)] * zk;
        }
        z[i] = s / l[(i, i)];
    }
    z
}

/// Solve `L^T z = b` for lower-triangular `L`.
pub(crate) fn backward_solve_transposed(l: &DMatrix<f64>, b: &[f64]) -> Vec<f64> {
    let n = l.nrows();
    let mut z = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * z[k];
        }
        z[i] = s / l[(i, i)];
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(sigma2: f64, ls: f64, noise2: f64) -> [KernelParams; 4] {
        let p = KernelParams {
            sigma2,
            lengthscales: [ls; INPUT_DIM],
            noise2,
        };
        [p.clone(), p.clone(), p.clone(), p]
    }

    fn point(v: f64) -> GpInput {
        GpInput::from([v, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    }

    #[test]
    fn kernel_values() {
        let p = KernelParams {
            sigma2: 2.0,
            lengthscales: [1.0; 8],
            noise2: 0.0,
        };
        assert_eq!(p.eval(&point(3.0), &point(3.0)), 2.0);
        let unit = KernelParams {
            sigma2: 1.0,
            ..p.clone()
        };
        let a = GpInput::from([1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((unit.eval(&a, &GpInput::zeros()) - (-1.0f64).exp()).abs() < 1e-15);
        assert!(unit.eval(&point(1e3), &point(0.0)) < 1e-300);
        assert_eq!(
            p.eval(&point(1.0), &point(2.5)),
            p.eval(&point(2.5), &point(1.0))
        );
    }

    #[test]
    fn single_point_gram() {
        let mut ds = GpDataset::new(10);
        ds.push(point(1.0), Vector4::new(1.0, 2.0, 3.0, 4.0));
        let model = gp_fit(ds, params(1.5, 1.0, 0.25)).unwrap();
        assert!((model.dims[0].chol[(0, 0)].powi(2) - 1.75).abs() < 1e-14);
    }

    #[test]
    fn duplicate_inputs_escalate_jitter() {
        let mut ds = GpDataset::new(10);
        for _ in 0..3 {
            ds.push(point(1.0), Vector4::new(1.0, 0.0, 0.0, 0.0));
        }
        let model = gp_fit(ds, params(1.0, 1.0, 0.0)).unwrap();
        assert!(model.dims[0].noise2 > 0.0);
        assert!(model.dims[0].noise2 <= MAX_JITTER);
    }

    #[test]
    fn empty_model_is_unfitted() {
        let model = GpModel::empty(params(1.0, 1.0, 1e-6), 5).unwrap();
        assert!(matches!(model.posterior(&point(0.0)), Err(Error::Unfitted)));
        assert!(gp_fit(GpDataset::new(3), params(1.0, 1.0, 1e-6)).is_err());
    }

    #[test]
    fn prior_recovered_far_from_data() {
        let mut ds = GpDataset::new(10);
        ds.push(point(0.0), Vector4::new(1.0, 2.0, 3.0, 4.0));
        ds.push(point(1.0), Vector4::new(2.0, 2.0, 3.0, 4.0));
        let model = gp_fit(ds, params(0.7, 1.0, 1e-6)).unwrap();
        let (mean, var) = model.posterior(&point(1e4)).unwrap();
        assert!(mean.norm() < 1e-12);
        for v in var.iter() {
            assert!((v - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn observe_shrinks_variance_and_evicts() {
        let ev = EvState::new(0.0, 0.0, 0.0, 60.0);
        let tv = TvState::new(80.0, 50.0, -2.5, 0.0);
        let mut model = GpModel::empty(params(1.0, 10.0, 1e-6), 3).unwrap();
        model = gp_observe(&model, &ev, &tv, &TvState::new(90.0, 50.0, -2.5, 0.0)).unwrap();
        let probe_ev = EvState::new(5.0, 1.0, 0.0, 60.0);
        let before = model.posterior(&gp_input(&probe_ev, &tv)).unwrap().1;
        model = gp_observe(&model, &probe_ev, &tv, &TvState::new(90.0, 50.0, -2.4, 0.5)).unwrap();
        let after = model.posterior(&gp_input(&probe_ev, &tv)).unwrap().1;
        for d in 0..4 {
            assert!(after[d] < before[d]);
        }
        for i in 0..3 {
            let e = EvState::new(10.0 * (i + 2) as f64, 0.0, 0.0, 60.0);
            model = gp_observe(&model, &e, &tv, &tv).unwrap();
        }
        assert_eq!(model.len(), 3);
        assert_eq!(model.dataset.inputs[0][0], 20.0);
    }

    #[test]
    fn cholesky_helpers_agree_with_nalgebra() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 0.4, 2.0, 5.0, 1.0, 0.4, 1.0, 3.0]);
        let l = cholesky_lower(&a).unwrap();
        let reference = a.clone().cholesky().unwrap().l();
        assert!((l - reference).abs().max() < 1e-14);
        let b = [1.0, -2.0, 0.5];
        let z = forward_solve(&cholesky_lower(&a).unwrap(), &b);
        let x = backward_solve_transposed(&cholesky_lower(&a).unwrap(), &z);
        let ax = &a * DVector::from_vec(x);
        for i in 0..3 {
            assert!((ax[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cv_prediction() {
        let stats = constant_velocity_prediction(
            &TvState::new(0.0, 50.0, 1.0, 0.5),
            3,
            0.2,
            &Vector4::new(1.0, 0.0, 0.5, 0.0),
        );
        assert_eq!(stats.horizon(), 3);
        assert!((stats.means[2].x - 30.0).abs() < 1e-12);
        assert!((stats.means[2].y - 1.3).abs() < 1e-12);
        assert!((stats.variances[0][0] - 0.04).abs() < 1e-12);
    }

    #[test]
    fn sample_variance_uses_m_minus_one() {
        let s = |y: f64| vec![TvState::new(0.0, 0.0, y, 0.0)];
        let stats = TvPredictionStats::from_samples(vec![s(1.0), s(2.0), s(6.0)], false);
        assert_eq!(stats.means[0].y, 3.0);
        // ((1-3)^2 + (2-3)^2 + (6-3)^2) / 2 = 7
        assert_eq!(stats.variances[0][2], 7.0);
    }
}
