//! Brute-force reference computations, independent of the library solvers.
//! They only rely on eigenvalues and direct search.
#![allow(dead_code)]

use nalgebra::{Matrix3, Rotation3, SymmetricEigen, UnitQuaternion, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gram matrix and priors built from the overlap formulas directly.
pub fn cow_gram(alpha2: f64, f: f64) -> (Matrix3<f64>, [f64; 3]) {
    let a = (-alpha2).exp();
    let b = (-alpha2 / 2.0).exp();
    let g = Matrix3::new(1.0, a, b, a, 1.0, b, b, b, 1.0);
    (g, [(1.0 - f) / 2.0, (1.0 - f) / 2.0, f])
}

fn min_eig(m: &Matrix3<f64>) -> f64 {
    SymmetricEigen::new(*m).eigenvalues.min()
}

/// Largest decoy conclusive probability compatible with `(p0, p1)`, or
/// `None` when `(p0, p1)` is already infeasible.
fn max_pd(g: &Matrix3<f64>, p0: f64, p1: f64) -> Option<f64> {
    let feasible = |pd: f64| min_eig(&(g - Matrix3::from_diagonal(&Vector3::new(p0, p1, pd)))) >= 0.0;
    if !feasible(0.0) {
        return None;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    if feasible(hi) {
        return Some(hi);
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

/// Optimal USD failure probability by a zooming grid over the two bit-signal
/// scalings, with the decoy scaling maximised by bisection.
pub fn usd_grid(alpha2: f64, f: f64) -> f64 {
    let (g, pri) = cow_gram(alpha2, f);
    let value = |p0: f64, p1: f64| {
        max_pd(&g, p0, p1).map(|pd| pri[0] * p0 + pri[1] * p1 + pri[2] * pd)
    };
    let (mut c0, mut c1, mut half) = (0.5, 0.5, 0.5);
    let mut best = f64::NEG_INFINITY;
    const N: usize = 40;
    for _ in 0..24 {
        let (mut b0, mut b1) = (c0, c1);
        for i in 0..=N {
            for j in 0..=N {
                let p0 = (c0 - half + 2.0 * half * i as f64 / N as f64).clamp(0.0, 1.0);
                let p1 = (c1 - half + 2.0 * half * j as f64 / N as f64).clamp(0.0, 1.0);
                if let Some(v) = value(p0, p1) {
                    if v > best {
                        best = v;
                        b0 = p0;
                        b1 = p1;
                    }
                }
            }
        }
        c0 = b0;
        c1 = b1;
        half /= 4.0;
    }
    1.0 - best
}

/// Failure of the pulse-by-pulse construction: each pulse is resolved as
/// vacuum or `α` by two-state USD, and the signal is named only when the
/// pulse results imply it. A feasible point, hence an upper bound on `q_usd`.
pub fn per_pulse_usd_failure(alpha2: f64, f: f64) -> f64 {
    let s2 = (-alpha2).exp();
    // (1 - p_vac)(1 - p_alpha) >= s², saturated.
    let mut best = 1.0f64;
    const N: usize = 200_000;
    for k in 0..=N {
        let p_alpha = (1.0 - s2) * k as f64 / N as f64;
        let p_vac = 1.0 - s2 / (1.0 - p_alpha);
        // Bits are named by their empty pulse, decoys need both pulses.
        let failure = (1.0 - f) * (1.0 - p_vac) + f * (1.0 - p_alpha * p_alpha);
        best = best.min(failure);
    }
    best
}

/// Embedded state vectors with the given Gram matrix, built from its
/// eigendecomposition (not the Cholesky factor the library uses).
pub fn embed(g: &Matrix3<f64>) -> [Vector3<f64>; 3] {
    let eig = SymmetricEigen::new(*g);
    let root = eig.eigenvectors
        * Matrix3::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()))
        * eig.eigenvectors.transpose();
    std::array::from_fn(|j| root.column(j).into_owned())
}

fn success(states: &[Vector3<f64>; 3], pri: &[f64; 3], r: &Rotation3<f64>) -> f64 {
    let m = r.matrix();
    (0..3).map(|j| pri[j] * m.column(j).dot(&states[j]).powi(2)).sum()
}

/// Minimum error by search over projective rank-one measurements, which
/// are optimal for linearly independent pure states.
pub fn med_search(alpha2: f64, f: f64, seed: u64) -> f64 {
    let (g, pri) = cow_gram(alpha2, f);
    let states = embed(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_rotation = |rng: &mut ChaCha8Rng| {
        let q = Vector4::from_fn(|_, _| rng.random::<f64>() * 2.0 - 1.0);
        UnitQuaternion::from_quaternion(nalgebra::Quaternion::from_vector(q)).to_rotation_matrix()
    };
    let mut starts: Vec<(f64, Rotation3<f64>)> = (0..4000)
        .map(|_| {
            let r = random_rotation(&mut rng);
            (success(&states, &pri, &r), r)
        })
        .collect();
    starts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = f64::NEG_INFINITY;
    for (mut val, mut r) in starts.into_iter().take(8) {
        let mut step = 0.3;
        while step > 1e-9 {
            let mut improved = false;
            for _ in 0..40 {
                let axis = Vector3::from_fn(|_, _| rng.random::<f64>() * 2.0 - 1.0);
                let trial = Rotation3::new(axis.normalize() * step) * r;
                let v = success(&states, &pri, &trial);
                if v > val {
                    val = v;
                    r = trial;
                    improved = true;
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        best = best.max(val);
    }
    1.0 - best
}

/// Conclusive-conditioned error of mixing the minimum-error measurement with
/// the USD measurement so the inconclusive rate equals `q`.
pub fn mixture_error(q: f64, q_usd: f64, med_error: f64) -> f64 {
    if q >= q_usd {
        return 0.0;
    }
    (1.0 - q / q_usd) * med_error / (1.0 - q)
}
