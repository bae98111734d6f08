//! Pareto gradient modulation: per-batch task weights from the min-norm point
//! of the normalized task gradients' convex hull.

pub mod bench;
pub mod qp;

pub use bench::{run_qpbench, QpBenchReport};
pub use qp::{grid_search, kkt_residual, solve_simplex_qp, solve_simplex_qp_with, QpTolerances, TaskWeights};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::linalg::{dot, norm};
use crate::numeric::{Adam, Gradients, ParamId, ParamStore, Rng};

/// Gradients with a norm below this are degenerate.
pub const GRAD_EPS: f64 = 1e-12;
/// Combined directions shorter than this trigger the fallback weights.
pub const DIRECTION_EPS: f64 = 1e-8;

/// Normalized task gradients over the shared parameters and their Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub g: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
    pub degenerate: Vec<bool>,
    pub q: Vec<Vec<f64>>,
}

impl GradientBundle {
    /// Normalizes each raw gradient; degenerate ones become zero vectors.
    pub fn new(raw: Vec<Vec<f64>>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::InvalidArgument("no task gradients".into()));
        }
        let len = raw[0].len();
        if raw.iter().any(|g| g.len() != len) {
            return Err(Error::Shape("task gradients differ in length".into()));
        }
        if raw.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("task gradient".into()));
        }
        let mut g = Vec::with_capacity(raw.len());
        let mut norms = Vec::with_capacity(raw.len());
        let mut degenerate = Vec::with_capacity(raw.len());
        for mut v in raw {
            let n = norm(&v);
            let bad = n < GRAD_EPS;
            if bad {
                v.iter_mut().for_each(|x| *x = 0.0);
            } else {
                v.iter_mut().for_each(|x| *x /= n);
            }
            g.push(v);
            norms.push(n);
            degenerate.push(bad);
        }
        let q = build_gram(&g);
        Ok(Self { g, norms, degenerate, q })
    }

    pub fn tasks(&self) -> usize {
        self.g.len()
    }

    /// `sum_i gamma_i g_i`.
    pub fn combine(&self, gamma: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; self.g[0].len()];
        for (gi, &w) in self.g.iter().zip(gamma) {
            for (a, b) in d.iter_mut().zip(gi) {
                *a += w * b;
            }
        }
        d
    }

    /// `min_i <d, g_i> - <d, d>`; non-negative at the min-norm point.
    pub fn pareto_slack(&self, gamma: &[f64]) -> f64 {
        let d = self.combine(gamma);
        let dd = dot(&d, &d);
        self.g.iter().map(|gi| dot(&d, gi) - dd).fold(f64::INFINITY, f64::min)
    }
}

/// `Q_il = <g_i, g_l>`, each pair computed once.
pub fn build_gram(g: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = g.len();
    let mut q = vec![vec![0.0; k]; k];
    for i in 0..k {
        for l in i..k {
            let v = dot(&g[i], &g[l]);
            q[i][l] = v;
            q[l][i] = v;
        }
    }
    q
}

/// `sum_i gamma_i L_i`.
pub fn composite_loss(gamma: &[f64], losses: &[f64]) -> f64 {
    gamma.iter().zip(losses).map(|(g, l)| g * l).sum()
}

/// The decision applied at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoChoice {
    /// Raw QP answer.
    pub qp: TaskWeights,
    /// Weights actually used.
    pub gamma: Vec<f64>,
    pub direction_norm: f64,
    pub fallback: bool,
}

/// Solves the QP and applies the degenerate-direction fallback `(1, 0, ...)`.
pub fn pareto_weights(bundle: &GradientBundle) -> Result<ParetoChoice> {
    let k = bundle.tasks();
    let qp = if k == 1 {
        TaskWeights {
            gamma: vec![1.0],
            objective: 0.5 * bundle.q[0][0],
            fallback: false,
        }
    } else {
        solve_simplex_qp(&bundle.q)?
    };
    let direction_norm = norm(&bundle.combine(&qp.gamma));
    let all_degenerate = bundle.degenerate.iter().all(|&d| d);
    if direction_norm < DIRECTION_EPS || all_degenerate || qp.fallback {
        let mut gamma = vec![0.0; k];
        gamma[0] = 1.0;
        return Ok(ParetoChoice {
            qp,
            gamma,
            direction_norm,
            fallback: true,
        });
    }
    Ok(ParetoChoice {
        gamma: qp.gamma.clone(),
        qp,
        direction_norm,
        fallback: false,
    })
}

/// A model trained on several losses that share parameters.
pub trait MultiTaskObjective {
    type Input;
    type Pass;

    /// Number of active tasks `k`.
    fn tasks(&self) -> usize;

    fn forward(&self, store: &ParamStore, input: &Self::Input, rng: Option<&mut Rng>) -> Result<Self::Pass>;

    fn task_losses(&self, pass: &Self::Pass) -> Vec<f64>;

    /// Full gradient of `sum_i weights[i] * L_i` from one backward pass.
    fn weighted_gradients(&self, store: &ParamStore, pass: &Self::Pass, weights: &[f64]) -> Gradients;

    /// Parameters reached by at least two active tasks, in registry order.
    fn shared_params(&self, store: &ParamStore) -> Vec<ParamId>;
}

/// How task weights are chosen at each step.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightMode {
    Pareto,
    /// Task gradients are still collected for logging, but these weights apply.
    Pinned(Vec<f64>),
    /// Fixed weights with a single backward pass.
    Static(Vec<f64>),
}

/// One optimization step's log entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub gamma: Vec<f64>,
    pub direction_norm: Option<f64>,
    pub fallback: bool,
    pub losses: Vec<f64>,
    pub pareto_slack: Option<f64>,
}

/// Forward once, choose task weights, backward the weighted loss once more
/// and take one optimizer step. Returns the log entry and the forward pass.
pub fn pgm_step<O: MultiTaskObjective>(
    objective: &O,
    store: &mut ParamStore,
    input: &O::Input,
    optimizer: &mut Adam,
    rng: Option<&mut Rng>,
    mode: &WeightMode,
    step: u64,
) -> Result<(StepRecord, O::Pass)> {
    let k = objective.tasks();
    let pass = objective.forward(store, input, rng)?;
    let losses = objective.task_losses(&pass);
    if losses.len() != k {
        return Err(Error::Shape(format!("expected {k} task losses, got {}", losses.len())));
    }
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFiniteLoss { step });
    }
    let mut task_grads = Vec::new();
    let (gamma, direction_norm, fallback, pareto_slack) = match mode {
        WeightMode::Static(w) => (w.clone(), None, false, None),
        WeightMode::Pareto | WeightMode::Pinned(_) => {
            let shared = objective.shared_params(store);
            let mut raw = Vec::with_capacity(k);
            for i in 0..k {
                let mut e = vec![0.0; k];
                e[i] = 1.0;
                let g = objective.weighted_gradients(store, &pass, &e);
                raw.push(g.flatten(&shared));
                task_grads.push(g);
            }
            let bundle = GradientBundle::new(raw)?;
            let choice = pareto_weights(&bundle)?;
            match mode {
                WeightMode::Pinned(w) => (w.clone(), Some(norm(&bundle.combine(w))), false, None),
                _ => {
                    let slack = (!choice.fallback).then(|| bundle.pareto_slack(&choice.gamma));
                    (choice.gamma, Some(choice.direction_norm), choice.fallback, slack)
                }
            }
        }
    };
    if gamma.len() != k {
        return Err(Error::Shape(format!("expected {k} task weights, got {}", gamma.len())));
    }
    // The update is linear in the weights, so per-task gradients already at
    // hand are combined instead of running another backward pass.
    let grads = if task_grads.is_empty() {
        objective.weighted_gradients(store, &pass, &gamma)
    } else {
        let mut total = Gradients::zeros_like(store);
        for (g, &w) in task_grads.iter().zip(&gamma) {
            total.axpy(w, g);
        }
        total
    };
    if !grads.is_finite() {
        return Err(Error::NonFinite(format!("gradient at step {step}")));
    }
    store.set_grads(&grads)?;
    optimizer.step(store);
    let record = StepRecord {
        step,
        gamma,
        direction_norm,
        fallback,
        losses,
        pareto_slack,
    };
    Ok((record, pass))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{AdamConfig, Tensor};

    #[test]
    fn normalization_and_gram() {
        let b = GradientBundle::new(vec![vec![2.0, 4.0], vec![2.0, 4.0], vec![0.0, 0.0]]).unwrap();
        let s = 5f64.sqrt();
        assert!((b.g[0][0] - 1.0 / s).abs() < 1e-15 && (b.g[0][1] - 2.0 / s).abs() < 1e-15);
        assert!((b.q[0][1] - 1.0).abs() < 1e-15);
        assert_eq!(b.degenerate, vec![false, false, true]);
        assert_eq!(b.q[2], vec![0.0; 3]);
        let q = build_gram(&[vec![1.0, 0.0], vec![0.6, 0.8]]);
        assert!((q[0][1] - 0.6).abs() < 1e-15);
        let q = build_gram(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(q, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn composite_examples() {
        assert_eq!(composite_loss(&[1.0, 0.0, 0.0], &[1.3, 2.0, 4.0]), 1.3);
        assert_eq!(composite_loss(&[1.0 / 3.0; 3], &[0.9; 3]), 0.9 * (3.0 / 3.0) * (1.0 / 3.0) * 3.0);
        assert_eq!(composite_loss(&[0.25, 0.25, 0.5], &[1.0, 2.0, 4.0]), 2.75);
    }

    #[test]
    fn opposing_gradients_fall_back_to_primary() {
        let b = GradientBundle::new(vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let c = pareto_weights(&b).unwrap();
        assert!(c.fallback);
        assert_eq!(c.gamma, vec![1.0, 0.0, 0.0]);
        assert!((c.qp.gamma[0] - 0.5).abs() < 1e-12 && (c.qp.gamma[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn scaling_a_task_gradient_leaves_gram_unchanged() {
        let a = GradientBundle::new(vec![vec![1.0, 2.0, 0.5], vec![-0.3, 1.0, 2.0]]).unwrap();
        let b = GradientBundle::new(vec![vec![7.0, 14.0, 3.5], vec![-0.3, 1.0, 2.0]]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((a.q[i][j] - b.q[i][j]).abs() < 1e-15);
            }
        }
    }

    /// Two scalars `x, y` with `L1 = x^2 + y^2`, `L2 = (x - 1)^2` and `L3 = 3 y`.
    struct Toy;

    impl MultiTaskObjective for Toy {
        type Input = ();
        type Pass = (f64, f64);

        fn tasks(&self) -> usize {
            3
        }

        fn forward(&self, store: &ParamStore, _: &(), _: Option<&mut Rng>) -> Result<(f64, f64)> {
            let v = store.value(ParamId(0)).data();
            Ok((v[0], v[1]))
        }

        fn task_losses(&self, &(x, y): &(f64, f64)) -> Vec<f64> {
            vec![x * x + y * y, (x - 1.0) * (x - 1.0), 3.0 * y]
        }

        fn weighted_gradients(&self, store: &ParamStore, &(x, y): &(f64, f64), w: &[f64]) -> Gradients {
            let mut g = Gradients::zeros_like(store);
            let s = g.slot(ParamId(0));
            s[0] = w[0] * 2.0 * x + w[1] * 2.0 * (x - 1.0);
            s[1] = w[0] * 2.0 * y + w[2] * 3.0;
            g
        }

        fn shared_params(&self, _: &ParamStore) -> Vec<ParamId> {
            vec![ParamId(0)]
        }
    }

    #[test]
    fn step_uses_the_analytic_qp_answer() {
        let mut store = ParamStore::new();
        store.add("xy", Tensor::vector(vec![2.0, 1.0])).unwrap();
        let mut adam = Adam::new(AdamConfig::default()).unwrap();
        let (rec, _) = pgm_step(&Toy, &mut store, &(), &mut adam, None, &WeightMode::Pareto, 0).unwrap();
        // raw gradients at (2, 1): (4, 2), (2, 0), (0, 3)
        let s5 = 5f64.sqrt();
        let g = [[2.0 / s5, 1.0 / s5], [1.0, 0.0], [0.0, 1.0]];
        let q: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..3).map(|j| g[i][0] * g[j][0] + g[i][1] * g[j][1]).collect())
            .collect();
        let want = solve_simplex_qp(&q).unwrap();
        for i in 0..3 {
            assert!((rec.gamma[i] - want.gamma[i]).abs() < 1e-14);
        }
        assert!(!rec.fallback);
        assert!(rec.pareto_slack.unwrap() >= -1e-8);
    }

    #[test]
    fn pinned_uniform_matches_static_uniform() {
        let mut a = ParamStore::new();
        a.add("xy", Tensor::vector(vec![0.4, -1.5])).unwrap();
        let mut b = a.clone();
        let u = vec![1.0 / 3.0; 3];
        let mut oa = Adam::new(AdamConfig::default()).unwrap();
        let mut ob = oa.clone();
        pgm_step(&Toy, &mut a, &(), &mut oa, None, &WeightMode::Pinned(u.clone()), 0).unwrap();
        pgm_step(&Toy, &mut b, &(), &mut ob, None, &WeightMode::Static(u), 0).unwrap();
        assert_eq!(a.value(ParamId(0)).data(), b.value(ParamId(0)).data());
    }
}
