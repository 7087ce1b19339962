//! Dense convex QP solver.
//!
//! Solves
//!
//! ```text
//! minimize    1/2 x^T H x + g^T x
//! subject to  A x <= b
//! ```
//!
//! with an operator-splitting (ADMM) iteration on a Ruiz-equilibrated copy of
//! the problem, adaptive step size `rho`, and a final active-set polish that
//! solves the reduced KKT system exactly. Primal infeasibility is declared
//! when the dual iterate differences form a certificate `dy >= 0`,
//! `A^T dy ~ 0`, `b^T dy < 0` for several consecutive checks.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl QpProblem {
    pub fn new(h: DMatrix<f64>, g: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let n = h.nrows();
        if h.ncols() != n || g.len() != n {
            return Err(Error::Dimension(format!(
                "Hessian {}x{} vs gradient {}",
                h.nrows(),
                h.ncols(),
                g.len()
            )));
        }
        if a.nrows() != b.len() || (a.nrows() > 0 && a.ncols() != n) {
            return Err(Error::Dimension(format!(
                "constraint matrix {}x{} vs bounds {} for {n} variables",
                a.nrows(),
                a.ncols(),
                b.len()
            )));
        }
        let a = if a.nrows() == 0 {
            DMatrix::zeros(0, n)
        } else {
            a
        };
        Ok(Self { h, g, a, b })
    }

    pub fn unconstrained(h: DMatrix<f64>, g: DVector<f64>) -> Result<Self> {
        let n = g.len();
        Self::new(h, g, DMatrix::zeros(0, n), DVector::zeros(0))
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn rows(&self) -> usize {
        self.b.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.g.dot(x)
    }

    /// Largest constraint violation `max(0, max_i (A x - b)_i)`.
    pub fn primal_violation(&self, x: &DVector<f64>) -> f64 {
        (&self.a * x - &self.b)
            .iter()
            .fold(0.0f64, |m, v| m.max(*v))
    }

    /// Combined KKT residual for a primal/dual pair: stationarity, dual
    /// feasibility and complementary slackness (infinity norms).
    pub fn kkt_residual(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let stat = (&self.h * x + &self.g + self.a.transpose() * y).amax();
        let dual = y.iter().fold(0.0f64, |m, v| m.max(-v));
        let slack = &self.b - &self.a * x;
        let comp = y
            .iter()
            .zip(slack.iter())
            .fold(0.0f64, |m, (yi, si)| m.max((yi * si).abs()));
        stat.max(dual).max(comp)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

impl QpStatus {
    pub fn label(self) -> &'static str {
        match self {
            Self::Optimal => "optimal",
            Self::Infeasible => "infeasible",
            Self::MaxIter => "max_iter",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "optimal" => Some(Self::Optimal),
            "infeasible" => Some(Self::Infeasible),
            "max_iter" => Some(Self::MaxIter),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers of the inequality rows.
    pub y: DVector<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub primal_residual: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSettings {
    pub tol_kkt: f64,
    pub tol_feas: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation parameter in (0, 2).
    pub alpha: f64,
    pub adaptive_rho: bool,
    pub polish: bool,
    pub check_every: usize,
    pub infeasibility_tol: f64,
    /// Consecutive checks the certificate must hold for.
    pub infeasibility_window: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol_kkt: 1e-6,
            tol_feas: 1e-6,
            max_iter: 20_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            adaptive_rho: true,
            polish: true,
            check_every: 10,
            infeasibility_tol: 1e-6,
            infeasibility_window: 3,
        }
    }
}

struct Scaled {
    p: DMatrix<f64>,
    q: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    /// Variable scaling `x = d x_hat`.
    d: DVector<f64>,
    /// Row scaling `A_hat = e A d`.
    e: DVector<f64>,
    /// Cost scaling.
    c: f64,
}

fn equilibrate(qp: &QpProblem) -> Scaled {
    let n = qp.dim();
    let m = qp.rows();
    let mut p = qp.h.clone();
    let mut q = qp.g.clone();
    let mut a = qp.a.clone();
    let mut d = DVector::from_element(n, 1.0);
    let mut e = DVector::from_element(m, 1.0);
    let clip = |v: f64| if v < 1e-4 { 1.0 } else { v.min(1e4) };
    for _ in 0..15 {
        let mut dd = DVector::zeros(n);
        for j in 0..n {
            let mut norm = p.column(j).amax();
            if m > 0 {
                norm = norm.max(a.column(j).amax());
            }
            dd[j] = 1.0 / clip(norm).sqrt();
        }
        let mut de = DVector::zeros(m);
        for i in 0..m {
            de[i] = 1.0 / clip(a.row(i).amax()).sqrt();
        }
        for j in 0..n {
            for i in 0..n {
                p[(i, j)] *= dd[i] * dd[j];
            }
            for i in 0..m {
                a[(i, j)] *= de[i] * dd[j];
            }
            q[j] *= dd[j];
        }
        d.component_mul_assign(&dd);
        e.component_mul_assign(&de);
    }
    let mean_col = if n > 0 {
        (0..n).map(|j| p.column(j).amax()).sum::<f64>() / n as f64
    } else {
        1.0
    };
    let c = 1.0 / clip(mean_col.max(q.amax()));
    p *= c;
    q *= c;
    let b = qp.b.component_mul(&e);
    Scaled {
        p,
        q,
        a,
        b,
        d,
        e,
        c,
    }
}

fn factor(s: &Scaled, sigma: f64, rho: f64) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let n = s.p.nrows();
    let mut k = &s.p + DMatrix::identity(n, n) * sigma;
    if s.a.nrows() > 0 {
        k += s.a.transpose() * &s.a * rho;
    }
    k.cholesky()
}

/// Solve `qp` with the given settings.
pub fn solve_qp(qp: &QpProblem, settings: &QpSettings) -> QpSolution {
    let n = qp.dim();
    let m = qp.rows();
    if n == 0 {
        return finish(
            qp,
            DVector::zeros(0),
            DVector::zeros(m),
            QpStatus::Optimal,
            0,
        );
    }
    let s = equilibrate(qp);
    let mut rho = settings.rho;
    let Some(mut kkt) = factor(&s, settings.sigma, rho) else {
        return finish(
            qp,
            DVector::zeros(n),
            DVector::zeros(m),
            QpStatus::MaxIter,
            0,
        );
    };
    let alpha = settings.alpha;
    let mut x = DVector::zeros(n);
    let mut z = (&s.a * &x).zip_map(&s.b, |v, b| v.min(b));
    let mut y = DVector::zeros(m);
    let mut certificate_hits = 0usize;
    let mut eps = settings.tol_kkt.min(settings.tol_feas);
    let mut best: Option<(f64, DVector<f64>, DVector<f64>)> = None;

    for iter in 1..=settings.max_iter {
        let rhs = &x * settings.sigma - &s.q + s.a.transpose() * (&z * rho - &y);
        let x_tilde = kkt.solve(&rhs);
        let z_tilde = &s.a * &x_tilde;
        let x_new = &x_tilde * alpha + &x * (1.0 - alpha);
        let z_relax = &z_tilde * alpha + &z * (1.0 - alpha);
        let z_new = (&z_relax + &y / rho).zip_map(&s.b, |v, b| v.min(b));
        let y_new = &y + (&z_relax - &z_new) * rho;
        let dy = &y_new - &y;
        x = x_new;
        z = z_new;
        y = y_new;

        if iter % settings.check_every != 0 {
            continue;
        }

        // Infeasibility certificate on the scaled dual step.
        if m > 0 {
            let dy_norm = dy.amax();
            if dy_norm > 1e-12 {
                let tol = settings.infeasibility_tol * dy_norm;
                let at_dy = (s.a.transpose() * &dy).amax();
                let bt_dy = s.b.dot(&dy);
                let nonneg = dy.iter().all(|v| *v >= -tol);
                if nonneg && at_dy <= tol && bt_dy < -tol {
                    certificate_hits += 1;
                    if certificate_hits >= settings.infeasibility_window {
                        let xu = x.component_mul(&s.d);
                        let yu = DVector::zeros(m);
                        return finish(qp, xu, yu, QpStatus::Infeasible, iter);
                    }
                } else {
                    certificate_hits = 0;
                }
            } else {
                certificate_hits = 0;
            }
        }

        // Residuals in unscaled units.
        let xu = x.component_mul(&s.d);
        let yu = y.component_mul(&s.e) / s.c;
        let ax = &qp.a * &xu;
        let zu = z.component_div(&s.e);
        let r_prim = if m > 0 { (&ax - &zu).amax() } else { 0.0 };
        let hx = &qp.h * &xu;
        let aty = qp.a.transpose() * &yu;
        let r_dual = (&hx + &qp.g + &aty).amax();
        let prim_scale = if m > 0 { ax.amax().max(zu.amax()) } else { 0.0 };
        let dual_scale = hx.amax().max(aty.amax()).max(qp.g.amax());

        // The polished point is verified exactly, so trying it early is safe.
        let loose = 1e-3;
        if settings.polish
            && iter % (5 * settings.check_every) == 0
            && r_prim <= loose * (1.0 + prim_scale)
            && r_dual <= loose * (1.0 + dual_scale)
        {
            if let Some((xp, yp)) = polish(qp, &yu.map(|v| v.max(0.0)), &zu) {
                if accept(qp, &xp, &yp, settings) {
                    return finish(qp, xp, yp, QpStatus::Optimal, iter);
                }
            }
        }

        if r_prim <= eps * (1.0 + prim_scale) && r_dual <= eps * (1.0 + dual_scale) {
            let yc = yu.map(|v| v.max(0.0));
            if settings.polish {
                if let Some((xp, yp)) = polish(qp, &yc, &zu) {
                    if accept(qp, &xp, &yp, settings) {
                        return finish(qp, xp, yp, QpStatus::Optimal, iter);
                    }
                }
            }
            if accept(qp, &xu, &yc, settings) {
                return finish(qp, xu, yc, QpStatus::Optimal, iter);
            }
            let score = qp.primal_violation(&xu).max(qp.kkt_residual(&xu, &yc));
            if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
                best = Some((score, xu.clone(), yc.clone()));
            }
            eps = (eps * 0.1).max(1e-13);
        }

        if settings.adaptive_rho && m > 0 {
            // Balance the normalized residuals of the scaled problem.
            let ax_s = &s.a * &x;
            let px_s = &s.p * &x;
            let aty_s = s.a.transpose() * &y;
            let prim_ratio = (&ax_s - &z).amax() / ax_s.amax().max(z.amax()).max(1e-10);
            let dual_ratio = (&px_s + &s.q + &aty_s).amax()
                / px_s.amax().max(aty_s.amax()).max(s.q.amax()).max(1e-10);
            let new_rho = (rho * (prim_ratio / dual_ratio.max(1e-30)).sqrt()).clamp(1e-6, 1e6);
            if new_rho > 5.0 * rho || new_rho < 0.2 * rho {
                if let Some(f) = factor(&s, settings.sigma, new_rho) {
                    rho = new_rho;
                    kkt = f;
                }
            }
        }
    }
    let (x, y) = match best {
        Some((_, x, y)) => (x, y),
        None => (
            x.component_mul(&s.d),
            y.component_mul(&s.e).map(|v| (v / s.c).max(0.0)),
        ),
    };
    finish(qp, x, y, QpStatus::MaxIter, settings.max_iter)
}

fn accept(qp: &QpProblem, x: &DVector<f64>, y: &DVector<f64>, settings: &QpSettings) -> bool {
    qp.primal_violation(x) <= settings.tol_feas && qp.kkt_residual(x, y) <= settings.tol_kkt
}

fn finish(
    qp: &QpProblem,
    x: DVector<f64>,
    y: DVector<f64>,
    status: QpStatus,
    iterations: usize,
) -> QpSolution {
    QpSolution {
        objective: qp.objective(&x),
        primal_residual: qp.primal_violation(&x),
        kkt_residual: qp.kkt_residual(&x, &y),
        x,
        y,
        status,
        iterations,
    }
}

/// Solve the equality-constrained QP on a guessed active set and refine the
/// set a few times (drop negative multipliers, add violated rows).
fn polish(
    qp: &QpProblem,
    y: &DVector<f64>,
    z: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let m = qp.rows();
    let mut active: Vec<bool> = (0..m).map(|i| qp.b[i] - z[i] < y[i]).collect();
    let mut best: Option<(f64, DVector<f64>, DVector<f64>)> = None;
    for _ in 0..(m + 5).min(50) {
        let (xp, yp) = solve_active(qp, &active)?;
        let viol = qp.primal_violation(&xp);
        let neg = yp.iter().fold(0.0f64, |acc, v| acc.max(-v));
        let score = viol.max(qp.kkt_residual(&xp, &yp.map(|v| v.max(0.0))));
        if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            best = Some((score, xp.clone(), yp.map(|v| v.max(0.0))));
        }
        if viol <= 1e-9 && neg <= 1e-9 {
            break;
        }
        // Refine the working set: release the most negative multiplier
        // first, otherwise add the most violated row.
        let ax = &qp.a * &xp - &qp.b;
        if neg > 1e-9 {
            let (i, _) = yp.iter().enumerate().filter(|(i, _)| active[*i]).fold(
                (usize::MAX, 0.0),
                |acc, (i, v)| {
                    if *v < acc.1 {
                        (i, *v)
                    } else {
                        acc
                    }
                },
            );
            if i == usize::MAX {
                break;
            }
            active[i] = false;
        } else {
            let (i, _) = ax.iter().enumerate().filter(|(i, _)| !active[*i]).fold(
                (usize::MAX, 0.0),
                |acc, (i, v)| {
                    if *v > acc.1 {
                        (i, *v)
                    } else {
                        acc
                    }
                },
            );
            if i == usize::MAX {
                break;
            }
            active[i] = true;
        }
    }
    best.map(|(_, x, y)| (x, y))
}

/// Regularized KKT solve with iterative refinement on the active rows.
fn solve_active(qp: &QpProblem, active: &[bool]) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = qp.dim();
    let rows: Vec<usize> = (0..qp.rows()).filter(|i| active[*i]).collect();
    let k = rows.len();
    let delta = 1e-9;
    let mut kkt = DMatrix::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(&qp.h);
    for (r, &i) in rows.iter().enumerate() {
        for j in 0..n {
            kkt[(n + r, j)] = qp.a[(i, j)];
            kkt[(j, n + r)] = qp.a[(i, j)];
        }
    }
    let exact = kkt.clone();
    for i in 0..n {
        kkt[(i, i)] += delta;
    }
    for r in 0..k {
        kkt[(n + r, n + r)] -= delta;
    }
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(&(-&qp.g));
    for (r, &i) in rows.iter().enumerate() {
        rhs[n + r] = qp.b[i];
    }
    let lu = kkt.lu();
    let mut sol = lu.solve(&rhs)?;
    for _ in 0..5 {
        let res = &rhs - &exact * &sol;
        sol += lu.solve(&res)?;
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let x = sol.rows(0, n).into_owned();
    let mut y = DVector::zeros(qp.rows());
    for (r, &i) in rows.iter().enumerate() {
        y[i] = sol[n + r];
    }
    Some((x, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_minimum() {
        let qp =
            QpProblem::unconstrained(DMatrix::identity(2, 2), DVector::from_vec(vec![-1.0, -1.0]))
                .unwrap();
        let sol = solve_qp(&qp, &QpSettings::default());
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-9 && (sol.x[1] - 1.0).abs() < 1e-9);
        assert!((sol.objective + 1.0).abs() < 1e-9);
    }

    #[test]
    fn clipped_by_upper_bounds() {
        let qp = QpProblem::new(
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![-1.0, -1.0]),
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![0.5, 0.5]),
        )
        .unwrap();
        let sol = solve_qp(&qp, &QpSettings::default());
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.x[0] - 0.5).abs() < 1e-9 && (sol.x[1] - 0.5).abs() < 1e-9);
        // Active-set hand solve: multipliers 0.5 on both rows.
        assert!((sol.y[0] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let qp = QpProblem::new(
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            DVector::from_vec(vec![-1.0, -1.0]),
        )
        .unwrap();
        assert_eq!(
            solve_qp(&qp, &QpSettings::default()).status,
            QpStatus::Infeasible
        );
    }

    #[test]
    fn zero_row_with_negative_bound_is_infeasible() {
        let qp = QpProblem::new(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::zeros(1, 2),
            DVector::from_vec(vec![-0.5]),
        )
        .unwrap();
        assert_eq!(
            solve_qp(&qp, &QpSettings::default()).status,
            QpStatus::Infeasible
        );
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let err = QpProblem::new(
            DMatrix::identity(2, 2),
            DVector::zeros(3),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
        );
        assert!(matches!(err, Err(Error::Dimension(_))));
    }
}
