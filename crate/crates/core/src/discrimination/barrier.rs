//! Log-det barrier method for small dense semidefinite programs of the form
//!
//! ```text
//! maximize  cᵀx   subject to   F_b(x) = A_b0 + Σ_k x_k A_bk ⪰ 0   (every block b)
//!                              C x = d
//! ```
//!
//! Centering uses damped Newton steps, which stay inside the Dikin ellipsoid
//! of the self-concordant barrier, so no objective evaluations are needed in
//! the line search. The starting point must be strictly feasible and satisfy
//! the equality constraints.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

const GROWTH: f64 = 8.0;
const MAX_CENTERING_STEPS: usize = 60;
const MAX_OUTER: usize = 40;
const STALL_DECREMENT: f64 = 1e-8;
/// Newton decrement² at which a point counts as centred.
const CENTERED: f64 = 1e-11;

/// One linear matrix inequality `A0 + Σ x_k A_k ⪰ 0`.
#[derive(Debug, Clone)]
pub(crate) struct Lmi {
    pub constant: DMatrix<f64>,
    pub coefficients: Vec<DMatrix<f64>>,
}

impl Lmi {
    pub fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (xk, a) in x.iter().zip(&self.coefficients) {
            if *xk != 0.0 {
                m += a * *xk;
            }
        }
        m
    }

    fn dim(&self) -> usize {
        self.constant.nrows()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BarrierProblem {
    pub objective: DVector<f64>,
    pub lmis: Vec<Lmi>,
    pub equality: Option<(DMatrix<f64>, DVector<f64>)>,
}

#[derive(Debug, Clone)]
pub(crate) struct BarrierSolution {
    pub x: DVector<f64>,
    pub newton_steps: usize,
}

fn all_positive_definite(lmis: &[Lmi], x: &DVector<f64>) -> bool {
    lmis.iter().all(|l| l.eval(x).cholesky().is_some())
}

pub(crate) fn maximize(
    problem: &BarrierProblem,
    x0: DVector<f64>,
    tol: f64,
    solver: &'static str,
) -> Result<BarrierSolution> {
    let n = x0.len();
    let degree: usize = problem.lmis.iter().map(Lmi::dim).sum();
    let fail = |steps: usize, residual: f64| Error::NonConvergence {
        solver,
        newton_steps: steps,
        residual,
    };

    let mut x = x0;
    if !all_positive_definite(&problem.lmis, &x) {
        return Err(fail(0, f64::INFINITY));
    }
    let mut t = 1.0;
    let mut steps = 0;

    for _ in 0..MAX_OUTER {
        let mut previous = f64::INFINITY;
        for _ in 0..MAX_CENTERING_STEPS {
            let mut grad = &problem.objective * t;
            let mut hess = DMatrix::<f64>::zeros(n, n);
            for lmi in &problem.lmis {
                let f = lmi.eval(&x);
                let finv = f
                    .cholesky()
                    .ok_or_else(|| fail(steps, degree as f64 / t))?
                    .inverse();
                let b: Vec<DMatrix<f64>> = lmi.coefficients.iter().map(|a| &finv * a).collect();
                for k in 0..n {
                    grad[k] += b[k].trace();
                    for l in 0..=k {
                        // tr(B_k B_l)
                        let v = b[k].component_mul(&b[l].transpose()).sum();
                        hess[(k, l)] -= v;
                        if l != k {
                            hess[(l, k)] -= v;
                        }
                    }
                }
            }

            let dx = match &problem.equality {
                None => (-&hess)
                    .cholesky()
                    .ok_or_else(|| fail(steps, degree as f64 / t))?
                    .solve(&grad),
                Some((c, _)) => {
                    let p = c.nrows();
                    let mut kkt = DMatrix::<f64>::zeros(n + p, n + p);
                    kkt.view_mut((0, 0), (n, n)).copy_from(&hess);
                    kkt.view_mut((0, n), (n, p)).copy_from(&c.transpose());
                    kkt.view_mut((n, 0), (p, n)).copy_from(c);
                    let mut rhs = DVector::<f64>::zeros(n + p);
                    rhs.rows_mut(0, n).copy_from(&(-&grad));
                    let sol = kkt
                        .lu()
                        .solve(&rhs)
                        .ok_or_else(|| fail(steps, degree as f64 / t))?;
                    sol.rows(0, n).into_owned()
                }
            };

            let decrement2 = -(dx.dot(&(&hess * &dx)));
            if !decrement2.is_finite() {
                return Err(fail(steps, degree as f64 / t));
            }
            if decrement2 <= CENTERED {
                break;
            }
            if decrement2 < STALL_DECREMENT && decrement2 > 0.25 * previous {
                // Rounding floor near a rank-deficient optimum: more Newton
                // steps or a larger t cannot improve the point.
                return Ok(BarrierSolution { x, newton_steps: steps });
            }
            previous = decrement2;
            steps += 1;
            let lambda = decrement2.max(0.0).sqrt();
            let mut s = if lambda < 0.25 { 1.0 } else { 1.0 / (1.0 + lambda) };
            loop {
                let trial = &x + &dx * s;
                if all_positive_definite(&problem.lmis, &trial) {
                    x = trial;
                    break;
                }
                s *= 0.5;
                if s < 1e-30 {
                    return Err(fail(steps, degree as f64 / t));
                }
            }
        }
        if degree as f64 / t < tol {
            return Ok(BarrierSolution {
                x,
                newton_steps: steps,
            });
        }
        t *= GROWTH;
    }
    Err(fail(steps, degree as f64 / t))
}
