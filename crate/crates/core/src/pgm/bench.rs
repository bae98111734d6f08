//! Randomized comparison of the simplex QP solver against grid search.

use std::fmt;

use super::qp::{grid_search, kkt_residual, solve_simplex_qp};
use crate::error::{Error, Result};
use crate::numeric::Rng;

pub const OBJECTIVE_SLACK: f64 = 1e-6;
pub const KKT_LIMIT: f64 = 1e-8;
const SUPPORT_TOL: f64 = 1e-9;

/// Worst cases over a batch of random 3x3 Gram matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct QpBenchReport {
    pub trials: usize,
    pub grid: f64,
    /// Largest `solver - grid` objective gap; negative means the solver always won.
    pub worst_gap: f64,
    pub worst_kkt: f64,
    pub fallbacks: usize,
    pub failures: usize,
}

impl QpBenchReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

impl fmt::Display for QpBenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "trials={} grid={} worst_gap={:.3e} worst_kkt={:.3e} fallbacks={} failures={}",
            self.trials, self.grid, self.worst_gap, self.worst_kkt, self.fallbacks, self.failures
        )
    }
}

/// `G G^T` for `G` with 3 rows and 1 to 4 random columns, so rank-deficient
/// and ill-scaled cases occur.
pub fn random_gram(rng: &mut Rng) -> Vec<Vec<f64>> {
    let cols = 1 + rng.below(4);
    let scale = 10f64.powf(rng.uniform_range(-2.0, 1.0));
    let g: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..cols).map(|_| scale * rng.normal()).collect())
        .collect();
    (0..3)
        .map(|i| (0..3).map(|j| g[i].iter().zip(&g[j]).map(|(a, b)| a * b).sum()).collect())
        .collect()
}

pub fn run_qpbench(trials: usize, grid: f64, seed: u64) -> Result<QpBenchReport> {
    let steps = (1.0 / grid).round();
    if !(grid > 0.0) || steps < 1.0 || ((steps * grid) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("grid step {grid} must divide 1")));
    }
    let root = Rng::new(seed).split_named("qpbench");
    let mut report = QpBenchReport {
        trials,
        grid,
        worst_gap: f64::NEG_INFINITY,
        worst_kkt: 0.0,
        fallbacks: 0,
        failures: 0,
    };
    for t in 0..trials {
        let q = random_gram(&mut root.split(t as u64));
        let sol = solve_simplex_qp(&q)?;
        let (_, grid_obj) = grid_search(&q, steps as usize);
        let gap = sol.objective - grid_obj;
        let kkt = kkt_residual(&q, &sol.gamma, SUPPORT_TOL);
        report.worst_gap = report.worst_gap.max(gap);
        report.worst_kkt = report.worst_kkt.max(kkt);
        report.fallbacks += usize::from(sol.fallback);
        if gap > OBJECTIVE_SLACK || kkt >= KKT_LIMIT || sol.fallback {
            report.failures += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_grams_are_symmetric_psd() {
        let mut rng = Rng::new(3);
        for _ in 0..20 {
            let q = random_gram(&mut rng);
            for i in 0..3 {
                assert!(q[i][i] >= 0.0);
                for j in 0..3 {
                    assert_eq!(q[i][j], q[j][i]);
                }
            }
        }
    }

    #[test]
    fn small_bench_passes() {
        let r = run_qpbench(30, 0.05, 1).unwrap();
        assert!(r.passed(), "{r}");
        assert!(run_qpbench(5, 0.3, 1).is_err());
    }
}
