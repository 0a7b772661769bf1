//! Eve's per-signal measurement on the three-state COW ensemble.
//!
//! The states are embedded in a real 3-dimensional space through the
//! Cholesky factor `L` of the Gram matrix (state `j` is row `j` of `L`).
//! All three measurement families are small semidefinite programs in that
//! space and are solved with the log-det barrier method in [`barrier`].

mod barrier;

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen, Vector3};
use serde::Serialize;

use crate::states::{build_ensemble, ProtocolParams, SignalEnsemble};
use crate::{Error, Result};

use barrier::{maximize, BarrierProblem, Lmi};

/// Ensembles with `|α|²` below this are treated as a single state.
pub const DEGENERATE_ALPHA2: f64 = 1e-6;

const GAP_TOL: f64 = 1e-12;
/// Conclusive probabilities below this are snapped to zero in the USD solution.
const USD_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminationProblem {
    pub ensemble: SignalEnsemble,
    /// Lower-triangular `L` with `L Lᵀ = gram`.
    pub embedding: Matrix3<f64>,
    degenerate: bool,
}

impl DiscriminationProblem {
    pub fn new(ensemble: SignalEnsemble) -> Result<Self> {
        if ensemble.alpha2() < DEGENERATE_ALPHA2 {
            // Every state collapses onto the first axis.
            let embedding = Matrix3::from_columns(&[Vector3::repeat(1.0), Vector3::zeros(), Vector3::zeros()]);
            return Ok(DiscriminationProblem {
                ensemble,
                embedding,
                degenerate: true,
            });
        }
        let embedding = ensemble
            .gram
            .cholesky()
            .ok_or_else(|| Error::param("alpha2", ensemble.alpha2(), "Gram matrix is not positive definite"))?
            .l();
        Ok(DiscriminationProblem {
            ensemble,
            embedding,
            degenerate: false,
        })
    }

    pub fn from_params(p: &ProtocolParams) -> Result<Self> {
        Self::new(build_ensemble(p)?)
    }

    /// True when the states are numerically indistinguishable.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Embedded state vector of signal `j`.
    pub fn state(&self, j: usize) -> Vector3<f64> {
        self.embedding.row(j).transpose()
    }

    pub fn priors(&self) -> [f64; 3] {
        self.ensemble.priors
    }

    fn density(&self, j: usize) -> Matrix3<f64> {
        let s = self.state(j);
        s * s.transpose()
    }

    fn average_state(&self) -> Matrix3<f64> {
        (0..3).map(|j| self.density(j) * self.ensemble.priors[j]).sum()
    }
}

/// Measurement operators in the embedded space.
#[derive(Debug, Clone, PartialEq)]
pub struct Povm {
    /// `identify[i]` reports signal `i`.
    pub identify: [Matrix3<f64>; 3],
    pub inconclusive: Matrix3<f64>,
}

impl Povm {
    /// Smallest eigenvalue over all four operators.
    pub fn min_eigenvalue(&self) -> f64 {
        self.identify
            .iter()
            .chain(std::iter::once(&self.inconclusive))
            .map(|e| e.symmetric_eigenvalues().min())
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest entry of `|Σ E - I|`.
    pub fn completeness_residual(&self) -> f64 {
        let total: Matrix3<f64> = self.identify.iter().sum::<Matrix3<f64>>() + self.inconclusive;
        (total - Matrix3::identity()).abs().max()
    }
}

/// Eve's per-signal measurement statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasurementModel {
    pub q_inc: f64,
    /// `c_j`: probability of a conclusive outcome given signal `j`.
    pub conclusive_prob: [f64; 3],
    /// `confusion[i][j]`: probability of reporting `i` given signal `j` and a
    /// conclusive outcome. Columns with `c_j = 0` are set to the identity.
    pub confusion: [[f64; 3]; 3],
    pub avg_error: f64,
    #[serde(skip)]
    pub povm: Option<Povm>,
}

impl MeasurementModel {
    fn from_joint(q_inc: f64, priors: &[f64; 3], joint: [[f64; 3]; 3], povm: Option<Povm>) -> Self {
        // joint[i][j] = P(report i | signal j)
        let mut conclusive_prob = [0.0; 3];
        let mut confusion = [[0.0; 3]; 3];
        for j in 0..3 {
            let c: f64 = (0..3).map(|i| joint[i][j].max(0.0)).sum();
            conclusive_prob[j] = c.min(1.0);
            for (i, row) in confusion.iter_mut().enumerate() {
                row[j] = if c > 0.0 {
                    joint[i][j].max(0.0) / c
                } else {
                    (i == j) as u8 as f64
                };
            }
        }
        let mut model = MeasurementModel {
            q_inc,
            conclusive_prob,
            confusion,
            avg_error: 0.0,
            povm,
        };
        model.avg_error = model.error_from_parts(priors);
        model
    }

    fn error_from_parts(&self, priors: &[f64; 3]) -> f64 {
        let mut wrong = 0.0;
        let mut total = 0.0;
        for j in 0..3 {
            let mass = priors[j] * self.conclusive_prob[j];
            total += mass;
            wrong += mass * (1.0 - self.confusion[j][j]);
        }
        if total > 0.0 {
            (wrong / total).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }

    /// Prior-averaged inconclusive probability implied by `conclusive_prob`.
    pub fn inconclusive_rate(&self, priors: &[f64; 3]) -> f64 {
        (0..3).map(|j| priors[j] * (1.0 - self.conclusive_prob[j])).sum()
    }

    /// True when no conclusive outcome can be wrong.
    pub fn is_error_free(&self) -> bool {
        (0..3).all(|j| (0..3).all(|i| i == j || self.confusion[i][j] == 0.0))
    }
}

/// Optimal unambiguous discrimination.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UsdSolution {
    pub q_usd: f64,
    /// Conclusive probability for each signal.
    pub p: [f64; 3],
    pub degenerate: bool,
}

fn usd_povm(prob: &DiscriminationProblem, p: &[f64; 3]) -> Povm {
    let recip = prob
        .embedding
        .try_inverse()
        .unwrap_or_else(Matrix3::zeros);
    let identify: [Matrix3<f64>; 3] = std::array::from_fn(|j| {
        let v = recip.column(j);
        v * v.transpose() * p[j]
    });
    let inconclusive = Matrix3::identity() - identify.iter().sum::<Matrix3<f64>>();
    Povm { identify, inconclusive }
}

/// Optimal USD: maximise `Σ π_j p_j` subject to `G - diag(p) ⪰ 0`, `p ≥ 0`.
pub fn usd_solution(prob: &DiscriminationProblem) -> Result<UsdSolution> {
    if prob.degenerate {
        return Ok(UsdSolution {
            q_usd: 1.0,
            p: [0.0; 3],
            degenerate: true,
        });
    }
    let priors = prob.priors();
    let gram = DMatrix::from_iterator(3, 3, prob.ensemble.gram.iter().copied());
    let unit = |k: usize| {
        let mut m = DMatrix::zeros(3, 3);
        m[(k, k)] = -1.0;
        m
    };
    let scalar = |v: f64| DMatrix::from_element(1, 1, v);
    let mut lmis = vec![Lmi {
        constant: gram,
        coefficients: (0..3).map(unit).collect(),
    }];
    for k in 0..3 {
        lmis.push(Lmi {
            constant: scalar(0.0),
            coefficients: (0..3).map(|l| scalar((l == k) as u8 as f64)).collect(),
        });
    }
    let problem = BarrierProblem {
        objective: DVector::from_row_slice(&priors),
        lmis,
        equality: None,
    };
    let start = prob.ensemble.gram.symmetric_eigenvalues().min() / 2.0;
    let sol = maximize(&problem, DVector::repeat(3, start), GAP_TOL, "usd")?;
    let p: [f64; 3] = std::array::from_fn(|j| {
        let v = sol.x[j];
        if v < USD_SNAP {
            0.0
        } else {
            v.min(1.0)
        }
    });
    let q_usd = 1.0 - (0..3).map(|j| priors[j] * p[j]).sum::<f64>();
    Ok(UsdSolution {
        q_usd: q_usd.clamp(0.0, 1.0),
        p,
        degenerate: false,
    })
}

/// Minimum prior-averaged inconclusive probability of an error-free measurement.
pub fn usd_failure_probability(prob: &DiscriminationProblem) -> Result<f64> {
    usd_solution(prob).map(|s| s.q_usd)
}

/// Basis of real symmetric 3×3 matrices: three diagonal units, then
/// off-diagonal pairs (0,1), (0,2), (1,2).
fn symmetric_basis() -> [Matrix3<f64>; 6] {
    let mut basis = [Matrix3::zeros(); 6];
    for k in 0..3 {
        basis[k][(k, k)] = 1.0;
    }
    for (n, (a, b)) in [(0, 1), (0, 2), (1, 2)].into_iter().enumerate() {
        basis[3 + n][(a, b)] = 1.0;
        basis[3 + n][(b, a)] = 1.0;
    }
    basis
}

fn to_dmatrix(m: &Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_iterator(3, 3, m.iter().copied())
}

fn unpack(x: &DVector<f64>, offset: usize) -> Matrix3<f64> {
    symmetric_basis()
        .iter()
        .enumerate()
        .map(|(k, b)| b * x[offset + k])
        .sum()
}

fn joint_from_povm(prob: &DiscriminationProblem, povm: &Povm) -> [[f64; 3]; 3] {
    let states: [Vector3<f64>; 3] = std::array::from_fn(|j| prob.state(j));
    std::array::from_fn(|i| std::array::from_fn(|j| states[j].dot(&(povm.identify[i] * states[j]))))
}

fn degenerate_guess(prob: &DiscriminationProblem, q_inc: f64) -> MeasurementModel {
    let priors = prob.priors();
    let best = (0..3).fold(0, |b, j| if priors[j] > priors[b] { j } else { b });
    let joint = std::array::from_fn(|i| [if i == best { 1.0 - q_inc } else { 0.0 }; 3]);
    MeasurementModel::from_joint(q_inc, &priors, joint, None)
}

/// Minimum-error discrimination (always conclusive).
pub fn med_measurement(prob: &DiscriminationProblem) -> Result<MeasurementModel> {
    if prob.degenerate {
        return Ok(degenerate_guess(prob, 0.0));
    }
    let priors = prob.priors();
    let basis = symmetric_basis();
    let rho: [Matrix3<f64>; 3] = std::array::from_fn(|j| prob.density(j));

    // x = (E0, E1) with E2 = I - E0 - E1.
    let mut objective = DVector::zeros(12);
    for (e, range) in [(0, 0..6), (1, 6..12)] {
        for (k, idx) in range.enumerate() {
            objective[idx] = (priors[e] * rho[e] - priors[2] * rho[2]).component_mul(&basis[k]).sum();
        }
    }
    let block = |e: usize| Lmi {
        constant: DMatrix::zeros(3, 3),
        coefficients: (0..12)
            .map(|v| if v / 6 == e { to_dmatrix(&basis[v % 6]) } else { DMatrix::zeros(3, 3) })
            .collect(),
    };
    let rest = Lmi {
        constant: DMatrix::identity(3, 3),
        coefficients: (0..12).map(|v| to_dmatrix(&-basis[v % 6])).collect(),
    };
    let problem = BarrierProblem {
        objective,
        lmis: vec![block(0), block(1), rest],
        equality: None,
    };
    let mut x0 = DVector::zeros(12);
    for k in 0..3 {
        x0[k] = 1.0 / 3.0;
        x0[6 + k] = 1.0 / 3.0;
    }
    let sol = maximize(&problem, x0, GAP_TOL, "med")?;
    let e0 = unpack(&sol.x, 0);
    let e1 = unpack(&sol.x, 6);
    let povm = Povm {
        identify: [e0, e1, Matrix3::identity() - e0 - e1],
        inconclusive: Matrix3::zeros(),
    };
    let joint = joint_from_povm(prob, &povm);
    let model = MeasurementModel::from_joint(0.0, &priors, joint, Some(povm));
    let pgm = pgm_error(prob);
    if model.avg_error > pgm + 1e-9 {
        return Err(Error::NonConvergence {
            solver: "med",
            newton_steps: sol.newton_steps,
            residual: model.avg_error - pgm,
        });
    }
    Ok(model)
}

fn zero_error_model(prob: &DiscriminationProblem, usd: &UsdSolution, q_inc: f64) -> MeasurementModel {
    let priors = prob.priors();
    if usd.degenerate || usd.q_usd >= 1.0 {
        // Only the all-inconclusive measurement is error free.
        return MeasurementModel::from_joint(1.0, &priors, [[0.0; 3]; 3], None);
    }
    let scale = (1.0 - q_inc) / (1.0 - usd.q_usd);
    let p: [f64; 3] = std::array::from_fn(|j| usd.p[j] * scale);
    let joint = std::array::from_fn(|i| std::array::from_fn(|j| if i == j { p[j] } else { 0.0 }));
    let mut model = MeasurementModel::from_joint(q_inc, &priors, joint, Some(usd_povm(prob, &p)));
    model.avg_error = 0.0;
    model
}

/// Measurement minimising the conclusive-conditioned error at a prescribed
/// prior-averaged inconclusive probability.
pub fn intermediate_measurement(prob: &DiscriminationProblem, q_inc: f64) -> Result<MeasurementModel> {
    if !(0.0..=1.0).contains(&q_inc) {
        return Err(Error::param("q_inc", q_inc, "must lie in [0, 1]"));
    }
    if q_inc == 0.0 {
        return med_measurement(prob);
    }
    let usd = usd_solution(prob)?;
    if q_inc >= usd.q_usd {
        return Ok(zero_error_model(prob, &usd, q_inc));
    }
    if prob.degenerate {
        return Ok(degenerate_guess(prob, q_inc));
    }
    let priors = prob.priors();
    let basis = symmetric_basis();
    let rho: [Matrix3<f64>; 3] = std::array::from_fn(|j| prob.density(j));
    let rho_bar = prob.average_state();

    let mut objective = DVector::zeros(18);
    let mut constraint = DMatrix::zeros(1, 18);
    for v in 0..18 {
        let (e, k) = (v / 6, v % 6);
        objective[v] = priors[e] * rho[e].component_mul(&basis[k]).sum();
        constraint[(0, v)] = rho_bar.component_mul(&basis[k]).sum();
    }
    let block = |e: usize| Lmi {
        constant: DMatrix::zeros(3, 3),
        coefficients: (0..18)
            .map(|v| if v / 6 == e { to_dmatrix(&basis[v % 6]) } else { DMatrix::zeros(3, 3) })
            .collect(),
    };
    let rest = Lmi {
        constant: DMatrix::identity(3, 3),
        coefficients: (0..18).map(|v| to_dmatrix(&-basis[v % 6])).collect(),
    };
    let problem = BarrierProblem {
        objective,
        lmis: vec![block(0), block(1), block(2), rest],
        equality: Some((constraint, DVector::from_element(1, 1.0 - q_inc))),
    };
    let mut x0 = DVector::zeros(18);
    for e in 0..3 {
        for k in 0..3 {
            x0[6 * e + k] = (1.0 - q_inc) / 3.0;
        }
    }
    let sol = maximize(&problem, x0, GAP_TOL, "intermediate")?;
    let identify: [Matrix3<f64>; 3] = std::array::from_fn(|e| unpack(&sol.x, 6 * e));
    let inconclusive = Matrix3::identity() - identify.iter().sum::<Matrix3<f64>>();
    let povm = Povm { identify, inconclusive };
    let joint = joint_from_povm(prob, &povm);
    Ok(MeasurementModel::from_joint(q_inc, &priors, joint, Some(povm)))
}

/// Error probability of the pretty-good (square-root) measurement, an upper
/// bound on the minimum error.
pub fn pgm_error(prob: &DiscriminationProblem) -> f64 {
    let priors = prob.priors();
    let eig = SymmetricEigen::new(prob.average_state());
    let floor = 1e-14 * eig.eigenvalues.max().max(0.0);
    let inv_sqrt_diag = eig.eigenvalues.map(|l| if l > floor { 1.0 / l.sqrt() } else { 0.0 });
    let inv_sqrt = eig.eigenvectors * Matrix3::from_diagonal(&inv_sqrt_diag) * eig.eigenvectors.transpose();
    let success: f64 = (0..3)
        .map(|j| {
            let v = inv_sqrt * prob.state(j);
            let overlap = prob.state(j).dot(&v);
            priors[j] * priors[j] * overlap * overlap
        })
        .sum();
    (1.0 - success).clamp(0.0, 1.0)
}
