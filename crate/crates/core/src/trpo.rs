//! Linearized constrained trust-region step.
//!
//! Solves
//!
//! ```text
//! max_x  gᵀx   s.t.  ½ xᵀHx ≤ δ,   c + bᵀx ≤ 0
//! ```
//!
//! using only products with `H`. With `q = gᵀH⁻¹g`, `r = gᵀH⁻¹b`,
//! `s = bᵀH⁻¹b` and `A = q − r²/s`, the two-multiplier dual has the closed
//! form
//!
//! ```text
//! ν = max(0, r/s + c·√(A / (s(2δs − c²))))
//! λ = √((q − 2νr + ν²s) / 2δ)
//! x = H⁻¹(g − νb) / λ
//! ```
//!
//! When no point of the trust region satisfies the linear constraint
//! (`c > 0` and `2δs < c²`) the step is the pure constraint-descent
//! direction `−√(2δ/s)·H⁻¹b`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn scaled(a: &[f64], k: f64) -> Vec<f64> {
    a.iter().map(|x| k * x).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgConfig {
    pub iters: usize,
    pub tol: f64,
    pub damping: f64,
}

impl Default for CgConfig {
    fn default() -> Self {
        CgConfig {
            iters: 10,
            tol: 1e-8,
            damping: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `‖rhs − Hx‖ / ‖rhs‖` as tracked by the recursion.
    pub relative_residual: f64,
}

pub fn conjugate_gradient(hvp: &dyn Fn(&[f64]) -> Vec<f64>, rhs: &[f64], iters: usize, tol: f64) -> CgResult {
    let n = rhs.len();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut p = rhs.to_vec();
    let mut rr = dot(&r, &r);
    let norm_b = rr.sqrt();
    if norm_b == 0.0 {
        return CgResult {
            x,
            iterations: 0,
            relative_residual: 0.0,
        };
    }
    let mut it = 0;
    while it < iters && rr.sqrt() > tol * norm_b {
        let ap = hvp(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
        it += 1;
    }
    CgResult {
        x,
        iterations: it,
        relative_residual: rr.sqrt() / norm_b,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subproblem {
    pub g: Vec<f64>,
    pub b: Vec<f64>,
    pub c: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveCase {
    Unconstrained,
    ConstrainedFeasible,
    InfeasibleRecovery,
}

impl SolveCase {
    pub fn code(self) -> u8 {
        match self {
            SolveCase::Unconstrained => 0,
            SolveCase::ConstrainedFeasible => 1,
            SolveCase::InfeasibleRecovery => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SolveCase::Unconstrained => "unconstrained",
            SolveCase::ConstrainedFeasible => "constrained",
            SolveCase::InfeasibleRecovery => "recovery",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub direction: Vec<f64>,
    pub case: SolveCase,
    pub lambda: f64,
    pub nu: f64,
    /// `½ xᵀHx` measured with one extra operator product.
    pub predicted_kl: f64,
}

const TINY: f64 = 1e-12;

pub fn solve_subproblem(sp: &Subproblem, hvp: &dyn Fn(&[f64]) -> Vec<f64>, cg: &CgConfig) -> Result<SolveOutcome> {
    if sp.g.len() != sp.b.len() {
        return Err(Error::Contract(format!("g has {} entries, b has {}", sp.g.len(), sp.b.len())));
    }
    if !(sp.delta > 0.0) || !sp.c.is_finite() {
        return Err(Error::Contract(format!("bad subproblem: delta {} c {}", sp.delta, sp.c)));
    }
    let two_delta = 2.0 * sp.delta;
    let hinv_g = conjugate_gradient(hvp, &sp.g, cg.iters, cg.tol).x;
    let q = dot(&sp.g, &hinv_g);
    let b_zero = sp.b.iter().all(|&v| v == 0.0);
    let (hinv_b, r, s) = if b_zero {
        (vec![0.0; sp.b.len()], 0.0, 0.0)
    } else {
        let hinv_b = conjugate_gradient(hvp, &sp.b, cg.iters, cg.tol).x;
        let r = dot(&sp.g, &hinv_b);
        let s = dot(&sp.b, &hinv_b);
        (hinv_b, r, s)
    };
    for (name, v) in [("q", q), ("r", r), ("s", s)] {
        if !v.is_finite() {
            return Err(Error::Solver(format!("non-finite dual quantity {name} = {v}")));
        }
    }

    let trpo_scale = if q > TINY { (two_delta / q).sqrt() } else { 0.0 };
    let (direction, case, lambda, nu) = if sp.c + trpo_scale * r <= 0.0 {
        let lambda = if q > TINY { (q / two_delta).sqrt() } else { 0.0 };
        (scaled(&hinv_g, trpo_scale), SolveCase::Unconstrained, lambda, 0.0)
    } else if sp.c > 0.0 && (s <= TINY || two_delta * s < sp.c * sp.c) {
        if s <= TINY {
            return Err(Error::Solver(format!(
                "constraint violated (c = {}) with vanishing constraint gradient",
                sp.c
            )));
        }
        let x = scaled(&hinv_b, -(two_delta / s).sqrt());
        (x, SolveCase::InfeasibleRecovery, 0.0, 0.0)
    } else {
        constrained(sp, &hinv_g, &hinv_b, q, r, s)?
    };

    let hx = hvp(&direction);
    let mut predicted_kl = 0.5 * dot(&direction, &hx);
    let mut direction = direction;
    if predicted_kl > sp.delta {
        let k = (sp.delta / predicted_kl).sqrt();
        direction.iter_mut().for_each(|v| *v *= k);
        predicted_kl = sp.delta;
    }
    if direction.iter().any(|v| !v.is_finite()) || !predicted_kl.is_finite() {
        return Err(Error::Solver(format!(
            "non-finite direction (q {q}, r {r}, s {s}, c {}, case {case:?})",
            sp.c
        )));
    }
    Ok(SolveOutcome {
        direction,
        case,
        lambda,
        nu,
        predicted_kl,
    })
}

fn constrained(
    sp: &Subproblem,
    hinv_g: &[f64],
    hinv_b: &[f64],
    q: f64,
    r: f64,
    s: f64,
) -> Result<(Vec<f64>, SolveCase, f64, f64)> {
    let two_delta = 2.0 * sp.delta;
    let a = (q - r * r / s).max(0.0);
    let denom = s * (two_delta * s - sp.c * sp.c);
    if denom <= 0.0 {
        // tangent contact: the only feasible point is the recovery step
        let x = scaled(hinv_b, -(two_delta / s).sqrt());
        return Ok((x, SolveCase::ConstrainedFeasible, 0.0, 0.0));
    }
    let nu = (r / s + sp.c * (a / denom).sqrt()).max(0.0);
    let big_q = (q - 2.0 * nu * r + nu * nu * s).max(0.0);
    if big_q <= TINY * q.max(1.0) {
        // g parallel to b: the objective is fixed along the constraint
        let x = scaled(hinv_b, -sp.c / s);
        return Ok((x, SolveCase::ConstrainedFeasible, 0.0, nu));
    }
    let lambda = (big_q / two_delta).sqrt();
    let x = hinv_g.iter().zip(hinv_b).map(|(gi, bi)| (gi - nu * bi) / lambda).collect();
    Ok((x, SolveCase::ConstrainedFeasible, lambda, nu))
}

/// Values measured at a line-search candidate, relative to the current
/// policy on the same batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub kl: f64,
    pub reward_change: f64,
    pub cost_change: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Acceptance {
    pub delta: f64,
    /// Upper bound on the cost-surrogate change; `None` disables the test.
    pub cost_limit: Option<f64>,
    pub require_reward_improvement: bool,
}

impl Acceptance {
    /// Scheduled rule: KL ball, cost change ≤ max(−c, 0) and, past `k_safe`,
    /// no decrease of the reward surrogate.
    pub fn scheduled(delta: f64, c: f64, epoch: usize, k_safe: usize) -> Self {
        Acceptance {
            delta,
            cost_limit: Some((-c).max(0.0)),
            require_reward_improvement: epoch > k_safe,
        }
    }

    pub fn reward_only(delta: f64) -> Self {
        Acceptance {
            delta,
            cost_limit: None,
            require_reward_improvement: true,
        }
    }

    pub fn accepts(&self, c: &Candidate) -> bool {
        let kl_ok = c.kl.is_finite() && c.kl <= self.delta;
        let cost_ok = self.cost_limit.is_none_or(|lim| c.cost_change <= lim);
        let reward_ok = !self.require_reward_improvement || c.reward_change >= 0.0;
        kl_ok && cost_ok && reward_ok
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchOutcome {
    pub accepted: bool,
    /// Number of shrinkages before acceptance; equals `max_backtracks` on
    /// rejection.
    pub depth: usize,
    pub step_scale: f64,
    pub candidate: Option<Candidate>,
}

/// Tries `ξ^j` for `j = 0..max_backtracks` and returns the first candidate
/// accepted by `rule`. `evaluate(scale)` measures the candidate
/// `θ_k + scale·Δθ`.
pub fn line_search(
    evaluate: &mut dyn FnMut(f64) -> Candidate,
    rule: &Acceptance,
    xi: f64,
    max_backtracks: usize,
) -> LineSearchOutcome {
    let mut scale = 1.0;
    for j in 0..max_backtracks {
        let cand = evaluate(scale);
        if rule.accepts(&cand) {
            return LineSearchOutcome {
                accepted: true,
                depth: j,
                step_scale: scale,
                candidate: Some(cand),
            };
        }
        scale *= xi;
    }
    LineSearchOutcome {
        accepted: false,
        depth: max_backtracks,
        step_scale: 0.0,
        candidate: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;

    fn random_spd(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &m * m.transpose() + DMatrix::identity(n, n) * 0.5
    }

    fn op(h: &DMatrix<f64>) -> impl Fn(&[f64]) -> Vec<f64> + '_ {
        move |v: &[f64]| (h * DVector::from_column_slice(v)).as_slice().to_vec()
    }

    fn exact_cg(n: usize) -> CgConfig {
        CgConfig {
            iters: 4 * n,
            tol: 1e-12,
            damping: 0.0,
        }
    }

    #[test]
    fn cg_identity_returns_rhs() {
        let rhs = vec![1.0, -2.0, 0.5];
        let out = conjugate_gradient(&|v: &[f64]| v.to_vec(), &rhs, 10, 1e-10);
        assert_eq!(out.iterations, 1);
        for (a, b) in out.x.iter().zip(&rhs) {
            assert_close!(*a, *b, 1e-15);
        }
    }

    #[test]
    fn cg_matches_dense_solve() {
        let mut rng = crate::rng::stream(30, &[]);
        let h = random_spd(&mut rng, 30);
        let rhs: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = conjugate_gradient(&op(&h), &rhs, 200, 1e-12);
        let dense = h.clone().cholesky().unwrap().solve(&DVector::from_column_slice(&rhs));
        for (a, b) in out.x.iter().zip(dense.iter()) {
            assert_close!(*a, *b, 1e-6);
        }
        assert!(out.relative_residual <= 1e-12);
    }

    #[test]
    fn vacuous_constraint_gives_trpo_step() {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5, 1.0]));
        let sp = Subproblem {
            g: vec![1.0, 1.0, -1.0],
            b: vec![0.0; 3],
            c: -0.1,
            delta: 0.02,
        };
        let out = solve_subproblem(&sp, &op(&h), &exact_cg(3)).unwrap();
        assert_eq!(out.case, SolveCase::Unconstrained);
        let hinv_g = [0.5, 2.0, -1.0];
        let q: f64 = 0.5 + 2.0 + 1.0;
        let k = (0.04 / q).sqrt();
        for (a, b) in out.direction.iter().zip(hinv_g) {
            assert_close!(*a, k * b, 1e-12);
        }
        assert_close!(out.predicted_kl, 0.02, 1e-12);
    }

    #[test]
    fn infeasible_classification_and_recovery_descends() {
        let h = DMatrix::identity(2, 2);
        let sp = Subproblem {
            g: vec![1.0, 0.0],
            b: vec![0.0, 0.1],
            c: 0.5,
            delta: 0.02,
        };
        // 2δs = 0.04·0.01 < c² = 0.25
        let out = solve_subproblem(&sp, &op(&h), &exact_cg(2)).unwrap();
        assert_eq!(out.case, SolveCase::InfeasibleRecovery);
        assert!(dot(&sp.b, &out.direction) < 0.0);
        assert_close!(out.direction[1], -0.2, 1e-12);
    }

    /// Dense oracle: whiten with the Cholesky factor so the trust region is a
    /// ball of radius √(2δ). A linear objective over the ball cut by a
    /// half-space peaks on the sphere, in the plane spanned by the whitened
    /// g and b; scan that circle by angle, then bisect onto the constraint
    /// boundary next to the best feasible grid angle.
    fn oracle(h: &DMatrix<f64>, sp: &Subproblem) -> (bool, f64) {
        let l = h.clone().cholesky().unwrap().l();
        let gw = l.solve_lower_triangular(&DVector::from_column_slice(&sp.g)).unwrap();
        let bw = l.solve_lower_triangular(&DVector::from_column_slice(&sp.b)).unwrap();
        let radius = (2.0 * sp.delta).sqrt();
        let min_constraint = sp.c - radius * bw.norm();
        if min_constraint > 0.0 {
            return (false, min_constraint);
        }
        let e1 = gw.normalize();
        let ortho = &bw - &e1 * e1.dot(&bw);
        let e2 = if ortho.norm() < 1e-12 { DVector::zeros(e1.len()) } else { ortho.normalize() };
        let point = |t: f64| (&e1 * t.cos() + &e2 * t.sin()) * radius;
        let constraint = |t: f64| sp.c + bw.dot(&point(t));
        let n = 20_000;
        let step = 2.0 * std::f64::consts::PI / n as f64;
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 0..n {
            let t = -std::f64::consts::PI + step * i as f64;
            if constraint(t) <= 0.0 && gw.dot(&point(t)) > best.0 {
                best = (gw.dot(&point(t)), t);
            }
        }
        let mut value = best.0;
        for dir in [-1.0, 1.0] {
            let (mut a, mut b) = (best.1, best.1 + dir * step);
            if constraint(b) > 0.0 {
                for _ in 0..100 {
                    let m = 0.5 * (a + b);
                    if constraint(m) <= 0.0 {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                value = value.max(gw.dot(&point(a)));
            }
        }
        (true, value.max(if constraint(0.0) <= 0.0 { gw.norm() * radius } else { f64::NEG_INFINITY }))
    }

    #[test]
    fn random_instances_match_dense_oracle() {
        let mut rng = crate::rng::stream(77, &[]);
        let mut counts = [0usize; 3];
        for trial in 0..200 {
            let n = rng.random_range(2..=30);
            let h = random_spd(&mut rng, n);
            let g: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let delta = rng.random_range(0.005..0.05);
            let c = rng.random_range(-0.5..0.5);
            let sp = Subproblem { g, b, c, delta };
            let out = solve_subproblem(&sp, &op(&h), &exact_cg(n)).unwrap();
            counts[out.case.code() as usize] += 1;
            let (feasible, value) = oracle(&h, &sp);
            assert_eq!(feasible, out.case != SolveCase::InfeasibleRecovery, "trial {trial}");
            if feasible {
                assert_close!(dot(&sp.g, &out.direction), value, 1e-4);
                assert!(sp.c + dot(&sp.b, &out.direction) <= 1e-8, "trial {trial}");
                assert!(out.predicted_kl <= sp.delta * (1.0 + 1e-6));
                assert!(out.nu >= 0.0 && out.lambda >= 0.0);
                if out.case == SolveCase::ConstrainedFeasible {
                    let slack = sp.c + dot(&sp.b, &out.direction);
                    assert!((out.nu * slack).abs() <= 1e-6, "trial {trial}");
                }
            } else {
                assert_close!(sp.c + dot(&sp.b, &out.direction), value, 1e-4);
            }
        }
        assert!(counts.iter().all(|&k| k > 0), "case coverage {counts:?}");
    }

    fn quad_candidate(scale: f64) -> Candidate {
        Candidate {
            kl: 0.05 * scale * scale,
            reward_change: scale,
            cost_change: -scale,
        }
    }

    #[test]
    fn zero_direction_is_accepted_immediately() {
        let rule = Acceptance::scheduled(0.02, -0.1, 0, 10);
        let out = line_search(
            &mut |_| Candidate {
                kl: 0.0,
                reward_change: 0.0,
                cost_change: 0.0,
            },
            &rule,
            0.8,
            100,
        );
        assert!(out.accepted);
        assert_eq!(out.depth, 0);
    }

    #[test]
    fn backtracks_until_kl_fits() {
        // KL at scale 1 is 0.05 > 0.04; at 0.8 it is 0.032
        let rule = Acceptance::scheduled(0.04, -0.1, 0, 10);
        let out = line_search(&mut quad_candidate, &rule, 0.8, 100);
        assert!(out.accepted);
        assert_eq!(out.depth, 1);
        assert!(out.candidate.unwrap().kl <= 0.04);
    }

    #[test]
    fn schedule_controls_reward_test() {
        let cand = Candidate {
            kl: 0.001,
            reward_change: -0.2,
            cost_change: -0.3,
        };
        assert!(Acceptance::scheduled(0.02, 0.5, 3, 10).accepts(&cand));
        assert!(!Acceptance::scheduled(0.02, 0.5, 11, 10).accepts(&cand));
        assert!(!Acceptance::reward_only(0.02).accepts(&cand));
        let out = line_search(&mut |_| cand, &Acceptance::scheduled(0.02, 0.5, 11, 10), 0.8, 7);
        assert!(!out.accepted);
        assert_eq!(out.depth, 7);
    }
}
