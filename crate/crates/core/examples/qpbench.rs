//! Compares the simplex QP solver with a 0.01 grid on random Gram matrices.

use cross_synergy::pgm::run_qpbench;

fn main() -> cross_synergy::Result<()> {
    let report = run_qpbench(200, 0.01, 0)?;
    println!("{report}");
    println!("{}", if report.passed() { "PASS" } else { "FAIL" });
    Ok(())
}
