use overtake_core::tv::{default_tv_gain, tv_input, tv_reference, tv_step, TvInputBounds};
use overtake_core::{CommittedDirection, EvState, TvPolicyState, TvState};
use proptest::prelude::*;

fn policy(tv0: &TvState) -> TvPolicyState {
    TvPolicyState::new(tv0, default_tv_gain(), TvInputBounds::default(), 0.5)
}

#[test]
fn feedback_examples() {
    let gain = default_tv_gain();
    let bounds = TvInputBounds::default();
    let reference = TvState::new(80.0, 50.0, -2.5, 0.0);
    assert_eq!(tv_input(&reference, &reference, &gain, &bounds), [0.0, 0.0]);
    let fast = TvState {
        vx: 60.0,
        ..reference
    };
    assert!((tv_input(&fast, &reference, &gain, &bounds)[0] + 5.5).abs() < 1e-12);
    let low = TvState {
        y: -5.0,
        ..reference
    };
    assert_eq!(tv_input(&low, &reference, &gain, &bounds)[1], 0.4);
}

#[test]
fn reference_examples() {
    let tv = TvState::new(150.0, 50.0, -1.0, 0.0);
    let mut p = policy(&tv);
    let r = tv_reference(&EvState::new(200.0, 3.0, 0.0, 60.0), &tv, &mut p);
    assert_eq!((r.y, r.vx), (-1.0, 50.0));

    let tv = TvState::new(80.0, 50.0, -2.5, 0.0);
    let mut p = policy(&tv);
    let r = tv_reference(&EvState::new(0.0, 0.0, 0.0, 60.0), &tv, &mut p);
    assert_eq!(p.committed, CommittedDirection::Left);
    assert_eq!(r.y, 0.0);
    let r = tv_reference(&EvState::new(10.0, -4.0, 0.0, 60.0), &tv, &mut p);
    assert_eq!(p.committed, CommittedDirection::Left);
    assert_eq!(r.y, tv.y);
}

#[test]
fn constant_reference_converges() {
    let gain = default_tv_gain();
    let bounds = TvInputBounds::default();
    let reference = TvState::new(0.0, 50.0, 0.0, 0.0);
    let mut tv = TvState::new(0.0, 50.3, 0.3, 0.0);
    let mut errors = Vec::new();
    for _ in 0..200 {
        let r = TvState {
            x: tv.x,
            ..reference
        };
        let u = gain * (tv.to_vector() - r.to_vector());
        assert!(u[0] > bounds.u_min[0] && u[0] < bounds.u_max[0]);
        assert!(u[1] > bounds.u_min[1] && u[1] < bounds.u_max[1]);
        tv = tv_step(&tv, &r, &gain, &bounds, 0.2);
        errors.push(((tv.vx - 50.0).powi(2) + tv.y.powi(2) + tv.vy.powi(2)).sqrt());
        assert!((tv.vx - 50.0).abs() <= 1.0);
    }
    let early = errors[..100].iter().cloned().fold(0.0, f64::max);
    let late = errors[100..].iter().cloned().fold(0.0, f64::max);
    assert!(late < 1e-3 * early);
    assert!(errors[199] < 1e-6);
}

proptest! {
    #[test]
    fn applied_inputs_respect_bounds(
        x in -100.0f64..100.0, vx in 0.0f64..100.0, y in -6.0f64..6.0, vy in -5.0f64..5.0,
        ry in -6.0f64..6.0, rvx in 0.0f64..100.0,
    ) {
        let bounds = TvInputBounds::default();
        let u = tv_input(&TvState::new(x, vx, y, vy), &TvState::new(x, rvx, ry, 0.0), &default_tv_gain(), &bounds);
        for i in 0..2 {
            prop_assert!(u[i] >= bounds.u_min[i] && u[i] <= bounds.u_max[i]);
        }
    }

    #[test]
    fn commitment_changes_at_most_once(path in prop::collection::vec((-6.0f64..6.0, 0.0f64..30.0), 1..60)) {
        let mut tv = TvState::new(80.0, 50.0, -2.5, 0.0);
        let mut p = policy(&tv);
        let mut ev_s = 0.0;
        let mut history = vec![p.committed];
        for (d, ds) in path {
            ev_s += ds;
            let ev = EvState::new(ev_s, d, 0.0, 60.0);
            let r = tv_reference(&ev, &tv, &mut p);
            tv = tv_step(&tv, &r, &p.gain, &p.bounds, 0.2);
            history.push(p.committed);
        }
        let changes = history.windows(2).filter(|w| w[0] != w[1]).count();
        prop_assert!(changes <= 1);
        if changes == 1 {
            prop_assert_eq!(history[0], CommittedDirection::None);
        }
    }
}
