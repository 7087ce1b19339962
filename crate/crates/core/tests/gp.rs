use nalgebra::Vector4;
use overtake_core::gp::{
    gp_fit, gp_input, gp_observe, gp_posterior, sample_tv_trajectories, GpDataset, GpInput,
    GpModel, KernelParams, OUTPUT_DIM,
};
use overtake_core::{EvState, TvState};
use proptest::prelude::*;

fn se(a: &GpInput, b: &GpInput, sigma2: f64, ls: &[f64; 8]) -> f64 {
    let mut r2 = 0.0;
    for i in 0..8 {
        r2 += ((a[i] - b[i]) / ls[i]).powi(2);
    }
    sigma2 * (-0.5 * r2).exp()
}

fn params(sigma2: f64, ls: f64, noise2: f64) -> [KernelParams; OUTPUT_DIM] {
    std::array::from_fn(|d| KernelParams {
        sigma2: sigma2 * (d + 1) as f64,
        lengthscales: [ls; 8],
        noise2,
    })
}

fn point(t: f64) -> GpInput {
    GpInput::from([
        t,
        0.5 * t,
        0.01 * t,
        60.0 - t,
        80.0 + t,
        50.0,
        -2.5 + 0.3 * t,
        0.1 * t,
    ])
}

fn two_point_model(noise2: f64) -> (GpModel, [GpInput; 2], [Vector4<f64>; 2]) {
    let xs = [point(0.0), point(1.3)];
    let ys = [
        Vector4::new(10.0, -0.2, 0.15, 0.03),
        Vector4::new(9.5, 0.1, -0.4, 0.2),
    ];
    let mut data = GpDataset::new(10);
    for (x, y) in xs.iter().zip(ys) {
        data.push(*x, y);
    }
    (gp_fit(data, params(0.7, 2.0, noise2)).unwrap(), xs, ys)
}

#[test]
fn two_point_posterior_matches_closed_form() {
    let noise2 = 1e-3;
    let (model, xs, ys) = two_point_model(noise2);
    let query = point(0.6);
    let (mean, var) = gp_posterior(&model, &query).unwrap();
    for d in 0..OUTPUT_DIM {
        let p = &model.params[d];
        let (s2, ls) = (p.sigma2, &p.lengthscales);
        let a = s2 + noise2;
        let b = se(&xs[0], &xs[1], s2, ls);
        let det = a * a - b * b;
        let k0 = se(&xs[0], &query, s2, ls);
        let k1 = se(&xs[1], &query, s2, ls);
        // K^-1 = [[a, -b], [-b, a]] / det
        let w0 = (a * k0 - b * k1) / det;
        let w1 = (a * k1 - b * k0) / det;
        let expected_mean = w0 * ys[0][d] + w1 * ys[1][d];
        let expected_var = s2 - (w0 * k0 + w1 * k1);
        assert!((mean[d] - expected_mean).abs() < 1e-10, "dim {d}");
        assert!((var[d] - expected_var).abs() < 1e-10, "dim {d}");
    }
}

#[test]
fn interpolates_training_points() {
    let (model, xs, ys) = two_point_model(1e-8);
    for (x, y) in xs.iter().zip(ys) {
        let (mean, var) = gp_posterior(&model, x).unwrap();
        for d in 0..OUTPUT_DIM {
            assert!((mean[d] - y[d]).abs() < 1e-3);
            assert!(var[d] <= 1e-6 * model.params[d].sigma2);
        }
    }
}

#[test]
fn far_queries_recover_the_prior() {
    let (model, _, _) = two_point_model(1e-6);
    let (mean, var) = gp_posterior(&model, &point(1e4)).unwrap();
    for d in 0..OUTPUT_DIM {
        assert!(mean[d].abs() < 1e-12);
        assert!((var[d] - model.params[d].sigma2).abs() < 1e-12);
    }
}

#[test]
fn rank_one_update_matches_refit() {
    let ps = params(0.5, 3.0, 1e-6);
    let ev = EvState::new(0.0, 0.0, 0.0, 60.0);
    let mut tv = TvState::new(80.0, 50.0, -2.5, 0.0);
    let mut model = GpModel::empty(ps.clone(), 50).unwrap();
    let mut data = GpDataset::new(50);
    for k in 0..12 {
        let ev_k = EvState {
            s: ev.s + 12.0 * k as f64,
            d: 0.1 * k as f64,
            ..ev
        };
        let next = TvState::new(tv.x + 10.0, 50.0, tv.y + 0.05 * k as f64, 0.05 * k as f64);
        model = gp_observe(&model, &ev_k, &tv, &next).unwrap();
        data.push_transition(&ev_k, &tv, &next);
        tv = next;
    }
    let refit = gp_fit(data, ps).unwrap();
    for d in 0..OUTPUT_DIM {
        assert!((&model.dims[d].chol - &refit.dims[d].chol).amax() < 1e-8);
    }
}

#[test]
fn observing_reduces_variance_at_the_datum() {
    let (model, _, _) = two_point_model(1e-6);
    let ev = EvState::new(5.0, 1.0, 0.0, 60.0);
    let tv = TvState::new(70.0, 50.0, 0.0, 0.0);
    let x = gp_input(&ev, &tv);
    let (_, before) = gp_posterior(&model, &x).unwrap();
    let after_model = gp_observe(&model, &ev, &tv, &TvState::new(80.0, 50.0, 0.1, 0.0)).unwrap();
    let (_, after) = gp_posterior(&after_model, &x).unwrap();
    for d in 0..OUTPUT_DIM {
        assert!(after[d] < before[d]);
    }
}

#[test]
fn capacity_evicts_the_oldest_point() {
    let mut model = GpModel::empty(params(1.0, 2.0, 1e-6), 3).unwrap();
    let ev = EvState::new(0.0, 0.0, 0.0, 60.0);
    let tvs: Vec<TvState> = (0..5)
        .map(|k| TvState::new(80.0 + k as f64, 50.0, 0.0, 0.0))
        .collect();
    for w in tvs.windows(2) {
        model = gp_observe(&model, &ev, &w[0], &w[1]).unwrap();
    }
    assert_eq!(model.len(), 3);
    assert_eq!(model.dataset.inputs[0], gp_input(&ev, &tvs[1]));
}

#[test]
fn one_step_samples_converge_to_the_posterior() {
    let (model, _, _) = two_point_model(1e-4);
    let ev = EvState::new(0.4, 0.2, 0.004, 59.6);
    let tv0 = TvState::new(80.4, 50.0, -2.38, 0.04);
    let m = 10_000;
    let stats = sample_tv_trajectories(&model, &[ev], &tv0, m, 1, 99, false).unwrap();
    let (mean, var) = gp_posterior(&model, &gp_input(&ev, &tv0)).unwrap();
    let expected = tv0.to_vector() + mean;
    let got = stats.means[0].to_vector();
    for d in 0..OUTPUT_DIM {
        let tol = 3.0 * var[d].sqrt() / (m as f64).sqrt();
        assert!(
            (got[d] - expected[d]).abs() <= tol,
            "dim {d}: {} vs {}",
            got[d],
            expected[d]
        );
        assert!(
            (stats.variances[0][d] - var[d]).abs() <= 0.1 * var[d],
            "dim {d}"
        );
    }
}

#[test]
fn degenerate_prior_gives_identical_samples() {
    let mut data = GpDataset::new(4);
    data.push(point(0.0), Vector4::new(10.0, 0.0, 0.0, 0.0));
    let model = gp_fit(data, params(1e-30, 2.0, 1e-6)).unwrap();
    let ev = EvState::new(0.0, 0.0, 0.0, 60.0);
    let tv0 = TvState::new(80.0, 50.0, -2.5, 0.0);
    let stats = sample_tv_trajectories(&model, &[ev; 3], &tv0, 8, 3, 1, true).unwrap();
    let samples = stats.samples.unwrap();
    for s in &samples {
        for (a, b) in s.iter().zip(&samples[0]) {
            assert!((a.to_vector() - b.to_vector()).amax() < 1e-12);
        }
    }
    assert!(stats.variances.iter().all(|v| v.amax() < 1e-20));
}

#[test]
fn sampling_is_deterministic_per_seed() {
    let (model, _, _) = two_point_model(1e-4);
    let plan = vec![EvState::new(0.0, 0.0, 0.0, 60.0); 5];
    let tv0 = TvState::new(80.0, 50.0, -2.5, 0.0);
    let a = sample_tv_trajectories(&model, &plan, &tv0, 20, 5, 3, true).unwrap();
    let b = sample_tv_trajectories(&model, &plan, &tv0, 20, 5, 3, true).unwrap();
    assert_eq!(a, b);
    let c = sample_tv_trajectories(&model, &plan, &tv0, 20, 5, 4, true).unwrap();
    assert_ne!(a, c);
}

proptest! {
    #[test]
    fn posterior_variance_stays_within_the_prior(t in -5.0f64..5.0, noise in 1e-6f64..1e-2) {
        let (model, _, _) = two_point_model(noise);
        let (_, var) = gp_posterior(&model, &point(t)).unwrap();
        for d in 0..OUTPUT_DIM {
            prop_assert!(var[d] >= 0.0);
            prop_assert!(var[d] <= model.params[d].sigma2 + 1e-12);
        }
    }

    #[test]
    fn kernel_is_symmetric_and_bounded(a in prop::array::uniform8(-10.0f64..10.0), b in prop::array::uniform8(-10.0f64..10.0)) {
        let p = KernelParams { sigma2: 2.0, lengthscales: [1.5; 8], noise2: 0.0 };
        let (a, b) = (GpInput::from(a), GpInput::from(b));
        prop_assert_eq!(p.eval(&a, &b), p.eval(&b, &a));
        prop_assert!(p.eval(&a, &b) <= p.eval(&a, &a));
        prop_assert!((p.eval(&a, &b) - se(&a, &b, 2.0, &[1.5; 8])).abs() < 1e-14);
    }
}
