//! Energy-function safety index and the implicit safe-set projection.
//!
//! The index is
//!
//! ```text
//! phi(s) = max_obstacles ( sigma + d_min^n - d^n - k * d_dot )
//! ```
//!
//! with `d` the surface distance and `d_dot` its rate. An action is safe when
//! its one-step successor satisfies `phi(f(s, a)) <= max(phi(s) - eta, 0)`.
//! The dynamics `f` are only ever queried as a black box.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env2d::{relative_kinematics, Action, Env2d, EnvState, LayoutConfig, Vec2};
use crate::error::{Error, Result};
use crate::rng;

/// Parameters of the safety index. Constructed only through [`SafetyIndexParams::new`],
/// so every value in circulation satisfies `n >= 1`, `k > 0`, `sigma >= 0`,
/// `eta >= 0`, `d_min > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawIndexParams", into = "RawIndexParams")]
pub struct SafetyIndexParams {
    exponent: u32,
    k: f64,
    sigma: f64,
    eta: f64,
    d_min: f64,
}

#[derive(Serialize, Deserialize)]
struct RawIndexParams {
    n: u32,
    k: f64,
    sigma: f64,
    eta: f64,
    d_min: f64,
}

impl TryFrom<RawIndexParams> for SafetyIndexParams {
    type Error = Error;
    fn try_from(r: RawIndexParams) -> Result<Self> {
        SafetyIndexParams::new(r.n, r.k, r.sigma, r.eta, r.d_min)
    }
}

impl From<SafetyIndexParams> for RawIndexParams {
    fn from(p: SafetyIndexParams) -> Self {
        RawIndexParams {
            n: p.exponent,
            k: p.k,
            sigma: p.sigma,
            eta: p.eta,
            d_min: p.d_min,
        }
    }
}

impl Default for SafetyIndexParams {
    fn default() -> Self {
        SafetyIndexParams::new(2, 2.0, 0.05, 0.001, 0.75).expect("default index is valid")
    }
}

impl SafetyIndexParams {
    pub fn new(exponent: u32, k: f64, sigma: f64, eta: f64, d_min: f64) -> Result<Self> {
        let ok = exponent >= 1
            && k > 0.0
            && k.is_finite()
            && sigma >= 0.0
            && sigma.is_finite()
            && eta >= 0.0
            && eta.is_finite()
            && d_min > 0.0
            && d_min.is_finite();
        if !ok {
            return Err(Error::Config(format!(
                "invalid safety index: n = {exponent}, k = {k}, sigma = {sigma}, eta = {eta}, \
                 d_min = {d_min} (need n >= 1, k > 0, sigma >= 0, eta >= 0, d_min > 0)"
            )));
        }
        Ok(SafetyIndexParams {
            exponent,
            k,
            sigma,
            eta,
            d_min,
        })
    }

    pub fn exponent(&self) -> u32 {
        self.exponent
    }
    pub fn k(&self) -> f64 {
        self.k
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    /// Surface distance at which a stationary robot sits exactly on `phi = 0`.
    pub fn rest_radius(&self) -> f64 {
        let n = f64::from(self.exponent);
        (self.sigma + self.d_min.powf(n)).powf(1.0 / n)
    }

    fn term(&self, d: f64, d_dot: f64) -> f64 {
        let n = self.exponent as i32;
        // odd extension keeps the index monotone in d inside an obstacle
        let d_pow = d.signum() * d.abs().powi(n);
        self.sigma + self.d_min.powi(n) - d_pow - self.k * d_dot
    }
}

/// Raw safety specification `max (d_min - d)`. Without obstacles the state
/// is trivially safe and `-inf` is returned.
pub fn phi0(state: &EnvState, d_min: f64) -> f64 {
    state
        .obstacles
        .iter()
        .map(|o| d_min - relative_kinematics(state, o).0)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn phi(state: &EnvState, params: &SafetyIndexParams) -> f64 {
    state
        .obstacles
        .iter()
        .map(|o| {
            let (d, d_dot) = relative_kinematics(state, o);
            params.term(d, d_dot)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Right-hand side of the discrete safe-control condition.
pub fn safe_threshold(phi_now: f64, params: &SafetyIndexParams) -> f64 {
    (phi_now - params.eta).max(0.0)
}

/// Black-box one-step lookahead `f(s, a)`.
pub trait Dynamics {
    fn predict(&self, state: &EnvState, action: &Action) -> Result<EnvState>;
}

impl Dynamics for Env2d {
    fn predict(&self, state: &EnvState, action: &Action) -> Result<EnvState> {
        self.dynamics(state, action)
    }
}

impl<F> Dynamics for F
where
    F: Fn(&EnvState, &Action) -> Result<EnvState>,
{
    fn predict(&self, state: &EnvState, action: &Action) -> Result<EnvState> {
        self(state, action)
    }
}

pub fn is_safe_action(
    state: &EnvState,
    action: &Action,
    params: &SafetyIndexParams,
    dynamics: &impl Dynamics,
) -> Result<bool> {
    let threshold = safe_threshold(phi(state, params), params);
    let next = dynamics.predict(state, action)?;
    Ok(phi(&next, params) <= threshold)
}

/// Query limits for [`issa_project`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionBudget {
    pub max_queries: usize,
    pub rays: usize,
    pub bisection_steps: usize,
    /// Side of the fallback action grid scanned when every ray fails.
    pub fallback_grid: usize,
}

impl Default for ProjectionBudget {
    fn default() -> Self {
        ProjectionBudget {
            max_queries: 2048,
            rays: 32,
            bisection_steps: 20,
            fallback_grid: 41,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    pub safe_action: Action,
    pub triggered: bool,
    /// `phi(f(s, a)) - phi(f(s, a*))`, zero when untriggered.
    pub imaginary_cost: f64,
    pub queries_used: usize,
}

/// Counts dynamics queries and evaluates `phi` of the successor.
struct Oracle<'a, D> {
    state: &'a EnvState,
    params: &'a SafetyIndexParams,
    dynamics: &'a D,
    threshold: f64,
    queries: usize,
    max_queries: usize,
}

impl<D: Dynamics> Oracle<'_, D> {
    fn exhausted(&self) -> bool {
        self.queries >= self.max_queries
    }

    fn next_phi(&mut self, action: &Action) -> Result<f64> {
        self.queries += 1;
        let next = self.dynamics.predict(self.state, action)?;
        Ok(phi(&next, self.params))
    }

    fn feasible(&mut self, action: &Action) -> Result<Option<f64>> {
        let p = self.next_phi(action)?;
        Ok((p <= self.threshold).then_some(p))
    }
}

/// Largest `t` such that `origin + t * dir` stays inside [-1, 1]^2.
fn ray_exit(origin: [f64; 2], dir: [f64; 2]) -> f64 {
    let mut t = f64::INFINITY;
    for i in 0..2 {
        if dir[i] > 1e-12 {
            t = t.min((1.0 - origin[i]) / dir[i]);
        } else if dir[i] < -1e-12 {
            t = t.min((-1.0 - origin[i]) / dir[i]);
        }
    }
    t.max(0.0)
}

/// Project a nominal action onto the discrete safe control set.
///
/// Safe nominal actions pass through untouched. Otherwise a deterministic
/// boundary search runs: along each of `budget.rays` evenly spaced directions
/// around the nominal action the step length doubles from 1/64 until a
/// feasible point (or the action-box edge) is reached, and the bracket is
/// then bisected. The same search also runs along the four edges of the
/// action box, outward from the point nearest the nominal action. The
/// closest feasible candidate wins. If every search fails a full grid scan
/// of the action box is the fallback.
pub fn issa_project(
    state: &EnvState,
    nominal: &Action,
    params: &SafetyIndexParams,
    dynamics: &impl Dynamics,
    budget: &ProjectionBudget,
) -> Result<ProjectionResult> {
    let nominal = Action::new(nominal.accel_cmd, nominal.turn_cmd);
    let phi_now = phi(state, params);
    let mut oracle = Oracle {
        state,
        params,
        dynamics,
        threshold: safe_threshold(phi_now, params),
        queries: 0,
        max_queries: budget.max_queries.max(1),
    };

    let phi_nominal = oracle.next_phi(&nominal)?;
    if phi_nominal <= oracle.threshold {
        return Ok(ProjectionResult {
            safe_action: nominal,
            triggered: false,
            imaginary_cost: 0.0,
            queries_used: oracle.queries,
        });
    }

    // (distance, action, phi of successor)
    let mut best: Option<(f64, Action, f64)> = None;

    let origin = nominal.to_array();
    let mut lines: Vec<([f64; 2], [f64; 2])> = (0..budget.rays)
        .map(|i| {
            let theta = 2.0 * PI * i as f64 / budget.rays as f64;
            (origin, [theta.cos(), theta.sin()])
        })
        .collect();
    // Rays leave the box through an edge, so the nearest safe point on an
    // edge is searched for separately, starting at the nominal's foot point.
    for axis in 0..2 {
        for side in [-1.0, 1.0] {
            let mut foot = origin;
            foot[axis] = side;
            let mut along = [0.0; 2];
            along[1 - axis] = 1.0;
            lines.push((foot, along));
            along[1 - axis] = -1.0;
            lines.push((foot, along));
        }
    }

    for (start, dir) in lines {
        if oracle.exhausted() {
            break;
        }
        let at = |t: f64| Action::new(start[0] + t * dir[0], start[1] + t * dir[1]);
        let dist_at = |t: f64| at(t).distance(nominal);
        if best.is_some_and(|(d, _, _)| dist_at(0.0) >= d) {
            continue;
        }
        let t_exit = ray_exit(start, dir);
        let mut t_lo = 0.0;
        let mut t = if start == origin { (1.0f64 / 64.0).min(t_exit) } else { 0.0 };
        let bracket = loop {
            if oracle.exhausted() {
                break None;
            }
            if let Some(p) = oracle.feasible(&at(t))? {
                break Some((t, p));
            }
            if t >= t_exit {
                break None;
            }
            t_lo = t;
            t = if t == 0.0 { (1.0f64 / 64.0).min(t_exit) } else { (2.0 * t).min(t_exit) };
        };
        let Some((mut t_hi, mut p_hi)) = bracket else {
            continue;
        };
        if best.is_some_and(|(d, _, _)| dist_at(t_lo) >= d) {
            continue;
        }
        if t_hi > 0.0 {
            for _ in 0..budget.bisection_steps {
                if oracle.exhausted() {
                    break;
                }
                let mid = 0.5 * (t_lo + t_hi);
                match oracle.feasible(&at(mid))? {
                    Some(p) => {
                        t_hi = mid;
                        p_hi = p;
                    }
                    None => t_lo = mid,
                }
            }
        }
        let dist = dist_at(t_hi);
        if best.is_none_or(|(d, _, _)| dist < d) {
            best = Some((dist, at(t_hi), p_hi));
        }
    }

    if best.is_none() && budget.fallback_grid >= 2 {
        let n = budget.fallback_grid;
        'grid: for i in 0..n {
            for j in 0..n {
                if oracle.exhausted() {
                    break 'grid;
                }
                let a = Action::new(
                    -1.0 + 2.0 * i as f64 / (n - 1) as f64,
                    -1.0 + 2.0 * j as f64 / (n - 1) as f64,
                );
                if let Some(p) = oracle.feasible(&a)? {
                    let dist = a.distance(nominal);
                    if best.is_none_or(|(d, _, _)| dist < d) {
                        best = Some((dist, a, p));
                    }
                }
            }
        }
    }

    match best {
        Some((_, safe_action, phi_safe)) => Ok(ProjectionResult {
            safe_action,
            triggered: true,
            imaginary_cost: phi_nominal - phi_safe,
            queries_used: oracle.queries,
        }),
        None => Err(Error::InfeasibleProjection {
            queries: oracle.queries,
            phi: phi_now,
            state: Box::new(state.clone()),
        }),
    }
}

/// `phi(f(s, a)) - phi(f(s, a*))` recomputed from two fresh dynamics queries.
pub fn imaginary_cost(
    state: &EnvState,
    nominal: &Action,
    safe_action: &Action,
    dynamics: &impl Dynamics,
    params: &SafetyIndexParams,
) -> Result<f64> {
    let a = phi(&dynamics.predict(state, nominal)?, params);
    let b = phi(&dynamics.predict(state, safe_action)?, params);
    Ok(a - b)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Counterexample {
    pub state: EnvState,
    pub phi: f64,
    /// `threshold - min_a phi(f(s, a))` over the grid; negative here.
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub params: SafetyIndexParams,
    pub n_samples: usize,
    pub n_feasible: usize,
    pub n_boundary: usize,
    pub n_positive: usize,
    pub feasible_fraction: f64,
    pub worst_margin: f64,
    pub counterexamples: Vec<Counterexample>,
    pub passed: bool,
}

const VALIDATION_GRID: usize = 41;
const MAX_COUNTEREXAMPLES: usize = 16;

/// Numerically check that the safe control set is non-empty.
///
/// Samples are drawn from layouts produced by `reset` and cycle through three
/// families: arbitrary states outside the `d_min` shell, states with `phi`
/// just below zero, and states with `phi > 0` (where the index must decay by
/// `eta`). Each sample is checked against a 41x41 grid of the action box.
pub fn validate_index(
    params: &SafetyIndexParams,
    layout: &LayoutConfig,
    n_samples: usize,
) -> Result<ValidationReport> {
    validate_index_seeded(params, layout, n_samples, 0)
}

pub fn validate_index_seeded(
    params: &SafetyIndexParams,
    layout: &LayoutConfig,
    n_samples: usize,
    seed: u64,
) -> Result<ValidationReport> {
    if n_samples == 0 {
        return Err(Error::Config("index validation needs at least one sample".into()));
    }
    let env = Env2d::new(layout.clone())?;
    let mut rng = rng::stream(seed, &[rng::tag::VALIDATION]);
    let grid: Vec<Action> = (0..VALIDATION_GRID * VALIDATION_GRID)
        .map(|idx| {
            let (i, j) = (idx / VALIDATION_GRID, idx % VALIDATION_GRID);
            let step = 2.0 / (VALIDATION_GRID - 1) as f64;
            Action::new(-1.0 + step * i as f64, -1.0 + step * j as f64)
        })
        .collect();

    let mut report = ValidationReport {
        params: *params,
        n_samples,
        n_feasible: 0,
        n_boundary: 0,
        n_positive: 0,
        feasible_fraction: 0.0,
        worst_margin: f64::INFINITY,
        counterexamples: Vec::new(),
        passed: false,
    };

    for i in 0..n_samples {
        let (base, _) = env.reset(rng.random())?;
        let state = sample_state(&env, params, &base, i % 3, &mut rng);
        let phi_now = phi(&state, params);
        if phi_now > 0.0 {
            report.n_positive += 1;
        } else if phi_now > -0.05 {
            report.n_boundary += 1;
        }
        let threshold = safe_threshold(phi_now, params);
        let mut best = f64::INFINITY;
        for a in &grid {
            let p = phi(&env.dynamics(&state, a)?, params);
            best = best.min(p);
        }
        let margin = threshold - best;
        report.worst_margin = report.worst_margin.min(margin);
        if margin >= 0.0 {
            report.n_feasible += 1;
        } else if report.counterexamples.len() < MAX_COUNTEREXAMPLES {
            report.counterexamples.push(Counterexample {
                state,
                phi: phi_now,
                margin,
            });
        }
    }
    report.feasible_fraction = report.n_feasible as f64 / n_samples as f64;
    report.passed = report.n_feasible == n_samples;
    Ok(report)
}

/// One validation sample. `family`: 0 = free state, 1 = just inside the
/// zero level set, 2 = strictly positive index.
fn sample_state(
    env: &Env2d,
    params: &SafetyIndexParams,
    base: &EnvState,
    family: usize,
    rng: &mut impl Rng,
) -> EnvState {
    let cfg = env.config();
    let l = cfg.arena_half_size;
    let n = f64::from(params.exponent());
    loop {
        let mut s = base.clone();
        s.heading = rng.random_range(-PI..PI);
        s.speed = rng.random_range(-cfg.v_max..=cfg.v_max);
        if family == 0 {
            s.position = Vec2::new(rng.random_range(-l..=l), rng.random_range(-l..=l));
        } else {
            let o = s.obstacles[rng.random_range(0..s.obstacles.len())];
            let bearing = rng.random_range(-PI..PI);
            let outward = Vec2::from_angle(bearing);
            let d_dot = s.speed * Vec2::from_angle(s.heading).dot(outward);
            let target = if family == 1 {
                rng.random_range(-0.05..=0.0)
            } else {
                rng.random_range(0.0..=1.0)
            };
            // solve sigma + d_min^n - d^n - k d_dot = target for d
            let d_pow = params.sigma() + params.d_min().powf(n) - params.k() * d_dot - target;
            if d_pow <= 0.0 {
                continue;
            }
            let d = d_pow.powf(1.0 / n);
            s.position = o.center + outward * (o.radius + d);
        }
        let inside = s.position.x.abs() <= l && s.position.y.abs() <= l;
        if inside && phi0(&s, params.d_min()) <= 0.0 {
            return s;
        }
    }
}
