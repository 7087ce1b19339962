//! Reference QP solutions for `min 1/2 x'Hx + g'x  s.t.  Ax <= b` with
//! positive definite `H`.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub struct Reference {
    pub x: DVector<f64>,
    pub objective: f64,
}

pub fn objective(h: &DMatrix<f64>, g: &DVector<f64>, x: &DVector<f64>) -> f64 {
    0.5 * x.dot(&(h * x)) + g.dot(x)
}

/// Try every working set of at most `n` rows, solve its equality KKT system
/// and keep the primal and dual feasible point with the lowest objective.
/// `None` when no working set qualifies (the problem is infeasible).
pub fn enumerate(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Option<Reference> {
    let n = h.nrows();
    let m = a.nrows();
    assert!(m <= 20, "enumeration over {m} rows is too large");
    let tol = 1e-8;
    let mut best: Option<Reference> = None;
    for mask in 0u32..(1u32 << m) {
        let rows: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let k = rows.len();
        if k > n {
            continue;
        }
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(h);
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-g));
        for (j, &r) in rows.iter().enumerate() {
            for c in 0..n {
                kkt[(n + j, c)] = a[(r, c)];
                kkt[(c, n + j)] = a[(r, c)];
            }
            rhs[n + j] = b[r];
        }
        let Some(sol) = kkt.clone().lu().solve(&rhs) else {
            continue;
        };
        if (&kkt * &sol - &rhs).amax() > 1e-8 * (1.0 + rhs.amax()) {
            continue;
        }
        let x = sol.rows(0, n).into_owned();
        let lambda = sol.rows(n, k);
        if lambda.iter().any(|l| *l < -tol) {
            continue;
        }
        let slack = b - a * &x;
        if slack.iter().any(|s| *s < -tol * (1.0 + b.amax())) {
            continue;
        }
        let f = objective(h, g, &x);
        if best.as_ref().is_none_or(|r| f < r.objective) {
            best = Some(Reference { x, objective: f });
        }
    }
    best
}

/// Random symmetric positive definite matrix with eigenvalues in `[0.1, 10.1]`.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let q = m.qr().q();
    let d = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.random_range(0.1..10.1)));
    let h = &q * d * q.transpose();
    (&h + h.transpose()) * 0.5
}

pub struct Planted {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub reference: Reference,
}

/// A problem built around a chosen optimum: pick `x*`, an active set with
/// positive multipliers and strictly slack inactive rows, then set `g` and
/// `b` so that `x*` satisfies the KKT conditions. With `H` positive definite
/// `x*` is the unique minimizer.
pub fn planted<R: Rng>(rng: &mut R, n: usize, m: usize) -> Planted {
    let h = random_spd(rng, n);
    let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let x = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    let active = rng.random_range(0..=m.min(n));
    let mut y = DVector::zeros(m);
    let mut b = &a * &x;
    for i in 0..m {
        if i < active {
            y[i] = rng.random_range(0.1..2.0);
        } else {
            b[i] += rng.random_range(0.1..2.0);
        }
    }
    let g = -(&h * &x) - a.transpose() * &y;
    let f = objective(&h, &g, &x);
    Planted {
        h,
        g,
        a,
        b,
        reference: Reference { x, objective: f },
    }
}
