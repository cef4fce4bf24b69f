//! Solve three small linearized subproblems with an explicit curvature
//! matrix, one for each solver case.

use s3po::trpo::{solve_subproblem, CgConfig, Subproblem};

fn main() -> s3po::Result<()> {
    let h = [[2.0, 0.3, 0.0], [0.3, 1.0, 0.1], [0.0, 0.1, 0.5]];
    let hvp = |v: &[f64]| -> Vec<f64> { h.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect() };
    let cg = CgConfig { iters: 20, tol: 1e-12, damping: 0.0 };
    let g = vec![1.0, -0.5, 0.25];
    let b = vec![0.2, 0.4, -0.1];
    for (label, c) in [("loose constraint", -1.0), ("active constraint", 0.06), ("out of reach", 5.0)] {
        let sp = Subproblem { g: g.clone(), b: b.clone(), c, delta: 0.02 };
        let out = solve_subproblem(&sp, &hvp, &cg)?;
        let gain: f64 = g.iter().zip(&out.direction).map(|(a, x)| a * x).sum();
        let lin: f64 = c + b.iter().zip(&out.direction).map(|(a, x)| a * x).sum::<f64>();
        println!(
            "{label:18} case={:13} g.x={gain:+.4} c+b.x={lin:+.4} kl~{:.4} nu={:.4}",
            out.case.name(),
            out.predicted_kl,
            out.nu
        );
    }
    Ok(())
}
