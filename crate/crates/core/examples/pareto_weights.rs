//! Task weights from the min-norm point of normalized task gradients.
//!
//! `cargo run --release --example pareto_weights`

use cross_synergy::numeric::linalg::norm;
use cross_synergy::pgm::{kkt_residual, solve_simplex_qp, GradientBundle, DIRECTION_EPS};

fn show(label: &str, raw: Vec<Vec<f64>>) -> cross_synergy::Result<()> {
    let bundle = GradientBundle::new(raw)?;
    let w = solve_simplex_qp(&bundle.q)?;
    let d = bundle.combine(&w.gamma);
    println!(
        "{label:12} gamma {:.4?} |d| {:.4} slack {:+.2e} kkt {:.1e}{}",
        w.gamma,
        norm(&d),
        bundle.pareto_slack(&w.gamma),
        kkt_residual(&bundle.q, &w.gamma, 1e-9),
        if norm(&d) < DIRECTION_EPS { "  (no common descent direction)" } else { "" }
    );
    Ok(())
}

fn main() -> cross_synergy::Result<()> {
    show("orthogonal", vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]])?;
    show("duplicated", vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![0.0, 5.0]])?;
    show("conflicting", vec![vec![1.0, 0.2], vec![-1.0, 0.3], vec![0.1, 1.0]])?;
    show("opposing", vec![vec![1.0, 0.0], vec![-1.0, 0.0]])?;
    show("aligned", vec![vec![1.0, 1.0], vec![3.0, 2.9], vec![0.5, 0.52]])?;
    Ok(())
}
