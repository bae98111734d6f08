//! Minimum of `0.5 g^T Q g` over the probability simplex, solved exactly by
//! enumerating every support and solving its KKT system.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest task count accepted by the enumeration.
pub const MAX_TASKS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpTolerances {
    /// Candidates with a coordinate below `-feasibility` are rejected.
    pub feasibility: f64,
    /// Eigenvalues down to `-psd` are clipped to zero; lower ones are an error.
    pub psd: f64,
    /// A support whose KKT system leaves a residual above this is inconsistent.
    pub consistency: f64,
    /// Objectives closer than this are treated as tied.
    pub tie: f64,
}

impl Default for QpTolerances {
    fn default() -> Self {
        Self {
            feasibility: 1e-12,
            psd: 1e-8,
            consistency: 1e-9,
            tie: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskWeights {
    pub gamma: Vec<f64>,
    /// `0.5 gamma^T Q gamma`.
    pub objective: f64,
    pub fallback: bool,
}

fn quad(q: &DMatrix<f64>, g: &[f64]) -> f64 {
    let k = g.len();
    let mut s = 0.0;
    for i in 0..k {
        for j in 0..k {
            s += g[i] * q[(i, j)] * g[j];
        }
    }
    0.5 * s
}

fn to_matrix(q: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let k = q.len();
    if k == 0 || k > MAX_TASKS || q.iter().any(|r| r.len() != k) {
        return Err(Error::Shape(format!(
            "Gram matrix must be square with 1..={MAX_TASKS} rows"
        )));
    }
    if q.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Gram matrix".into()));
    }
    Ok(DMatrix::from_fn(k, k, |i, j| q[i][j]))
}

/// Symmetrizes `q` and clips slightly negative eigenvalues.
fn regularize(q: &[Vec<f64>], tol: &QpTolerances) -> Result<DMatrix<f64>> {
    let m = to_matrix(q)?;
    let sym = (&m + m.transpose()) * 0.5;
    if (&m - &sym).amax() > 1e-9 {
        return Err(Error::InvalidArgument("Gram matrix is not symmetric".into()));
    }
    let eig = SymmetricEigen::new(sym.clone());
    let min = eig.eigenvalues.min();
    if min < -tol.psd {
        return Err(Error::InvalidArgument(format!(
            "Gram matrix is not positive semidefinite (eigenvalue {min:e})"
        )));
    }
    if min >= 0.0 {
        return Ok(sym);
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    Ok((&rebuilt + rebuilt.transpose()) * 0.5)
}

/// Minimum-norm solution of `[Q_SS 1; 1^T 0] [g; nu] = [0; 1]`, or `None`
/// when that system has no solution.
fn solve_support(q: &DMatrix<f64>, support: &[usize], tol: &QpTolerances) -> Option<Vec<f64>> {
    let s = support.len();
    let mut a = DMatrix::zeros(s + 1, s + 1);
    for (i, &si) in support.iter().enumerate() {
        for (j, &sj) in support.iter().enumerate() {
            a[(i, j)] = q[(si, sj)];
        }
        a[(i, s)] = 1.0;
        a[(s, i)] = 1.0;
    }
    let mut b = DVector::zeros(s + 1);
    b[s] = 1.0;
    // The KKT matrix is symmetric; its eigendecomposition gives the
    // pseudo-inverse far more accurately than the general SVD does here.
    let eig = SymmetricEigen::new(a.clone());
    let cutoff = 1e-12 * eig.eigenvalues.amax().max(1.0);
    let coeffs = eig.eigenvectors.transpose() * &b;
    let scaled = DVector::from_fn(s + 1, |i, _| {
        let l = eig.eigenvalues[i];
        if l.abs() > cutoff { coeffs[i] / l } else { 0.0 }
    });
    let x = &eig.eigenvectors * scaled;
    if (&a * &x - &b).amax() > tol.consistency {
        return None;
    }
    Some(x.iter().take(s).copied().collect())
}

fn better(cand: &(f64, Vec<f64>), best: &(f64, Vec<f64>), tie: f64) -> bool {
    if cand.0 < best.0 - tie {
        return true;
    }
    if cand.0 > best.0 + tie {
        return false;
    }
    let n = |g: &[f64]| g.iter().map(|v| v * v).sum::<f64>();
    let (nc, nb) = (n(&cand.1), n(&best.1));
    if nc < nb - tie {
        return true;
    }
    if nc > nb + tie {
        return false;
    }
    cand.1.partial_cmp(&best.1) == Some(std::cmp::Ordering::Less)
}

pub fn solve_simplex_qp(q: &[Vec<f64>]) -> Result<TaskWeights> {
    solve_simplex_qp_with(q, &QpTolerances::default())
}

pub fn solve_simplex_qp_with(q: &[Vec<f64>], tol: &QpTolerances) -> Result<TaskWeights> {
    let m = regularize(q, tol)?;
    let k = q.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << k) {
        let support: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let Some(sol) = solve_support(&m, &support, tol) else {
            continue;
        };
        if sol.iter().any(|&v| v < -tol.feasibility) {
            continue;
        }
        let mut gamma = vec![0.0; k];
        for (&i, &v) in support.iter().zip(&sol) {
            gamma[i] = v.max(0.0);
        }
        let total: f64 = gamma.iter().sum();
        if !(total > 0.0) {
            continue;
        }
        gamma.iter_mut().for_each(|v| *v /= total);
        let cand = (quad(&m, &gamma), gamma);
        if best.as_ref().is_none_or(|b| better(&cand, b, tol.tie)) {
            best = Some(cand);
        }
    }
    Ok(match best {
        Some((objective, gamma)) => TaskWeights {
            gamma,
            objective,
            fallback: false,
        },
        None => {
            let gamma = vec![1.0 / k as f64; k];
            TaskWeights {
                objective: quad(&m, &gamma),
                gamma,
                fallback: true,
            }
        }
    })
}

/// Largest violation of the simplex KKT conditions at `gamma`: feasibility,
/// equal marginal cost `(Q gamma)_i` on the support, and no cheaper
/// coordinate outside it.
pub fn kkt_residual(q: &[Vec<f64>], gamma: &[f64], support_tol: f64) -> f64 {
    let k = gamma.len();
    let qg: Vec<f64> = (0..k).map(|i| (0..k).map(|j| q[i][j] * gamma[j]).sum()).collect();
    let lambda: f64 = gamma.iter().zip(&qg).map(|(a, b)| a * b).sum();
    let mut worst = (gamma.iter().sum::<f64>() - 1.0).abs();
    for i in 0..k {
        worst = worst.max(-gamma[i]);
        if gamma[i] > support_tol {
            worst = worst.max((qg[i] - lambda).abs());
        } else {
            worst = worst.max(lambda - qg[i]);
        }
    }
    worst
}

/// Brute-force minimum over the simplex grid with spacing `1/steps`.
pub fn grid_search(q: &[Vec<f64>], steps: usize) -> (Vec<f64>, f64) {
    let k = q.len();
    let m = DMatrix::from_fn(k, k, |i, j| q[i][j]);
    let mut best = (vec![0.0; k], f64::INFINITY);
    let mut counts = vec![0usize; k];
    fn walk(
        m: &DMatrix<f64>,
        counts: &mut Vec<usize>,
        pos: usize,
        left: usize,
        steps: usize,
        best: &mut (Vec<f64>, f64),
    ) {
        let k = counts.len();
        if pos == k - 1 {
            counts[pos] = left;
            let g: Vec<f64> = counts.iter().map(|&c| c as f64 / steps as f64).collect();
            let v = quad(m, &g);
            if v < best.1 {
                *best = (g, v);
            }
            return;
        }
        for c in 0..=left {
            counts[pos] = c;
            walk(m, counts, pos + 1, left - c, steps, best);
        }
    }
    walk(&m, &mut counts, 0, steps, steps, &mut best);
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn identity_gives_uniform() {
        let q = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let w = solve_simplex_qp(&q).unwrap();
        assert!(close(&w.gamma, &[1.0 / 3.0; 3], 1e-12));
        assert!((w.objective - 1.0 / 6.0).abs() < 1e-12);
        assert!(!w.fallback);
    }

    #[test]
    fn duplicated_gradients_split_evenly() {
        let q = vec![vec![1.0, 1.0, 0.0], vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let w = solve_simplex_qp(&q).unwrap();
        assert!(close(&w.gamma, &[0.25, 0.25, 0.5], 1e-12), "{:?}", w.gamma);
        let (_, grid) = grid_search(&q, 100);
        assert!(w.objective <= grid + 1e-12);
    }

    #[test]
    fn opposing_gradients_cancel() {
        let q = vec![vec![1.0, -1.0, 0.0], vec![-1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let w = solve_simplex_qp(&q).unwrap();
        assert!(close(&w.gamma, &[0.5, 0.5, 0.0], 1e-12), "{:?}", w.gamma);
        assert!(w.objective.abs() < 1e-15);
    }

    #[test]
    fn single_task_is_trivial() {
        let w = solve_simplex_qp(&[vec![0.7]]).unwrap();
        assert_eq!(w.gamma, vec![1.0]);
    }

    #[test]
    fn rejects_indefinite_and_ragged() {
        assert!(solve_simplex_qp(&[vec![1.0, 2.0], vec![2.0, 1.0]]).is_err());
        assert!(solve_simplex_qp(&[vec![1.0, 0.0], vec![0.0]]).is_err());
        assert!(solve_simplex_qp(&[vec![1.0, 0.5], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn kkt_residual_flags_bad_points() {
        let q = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(kkt_residual(&q, &[0.5, 0.5], 1e-12) < 1e-15);
        assert!(kkt_residual(&q, &[1.0, 0.0], 1e-12) > 0.5);
    }
}
