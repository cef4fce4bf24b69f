//! Deterministic 2D navigation environment.
//!
//! A second-order unicycle (acceleration and turn-rate commands) drives
//! towards a goal inside a square arena populated by hazards (trespassable
//! circles that incur a penetration cost) and pillars (rigid circles that
//! incur a contact cost). Every operation is a pure function of its inputs:
//! the goal respawn draws from a stream derived from the episode seed and
//! the number of goals reached so far, so `step` needs no external RNG.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const LIDAR_BINS: usize = 16;
/// goal compass (2) + goal distance (1) + ego velocity (2) + two lidars.
pub const OBS_DIM: usize = 5 + 2 * LIDAR_BINS;
pub const ACTION_DIM: usize = 2;

const MAX_PLACEMENT_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Vec2::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Express a world-frame vector in the frame rotated by `heading`.
    pub fn to_ego(self, heading: f64) -> Vec2 {
        let (s, c) = heading.sin_cos();
        Vec2::new(self.x * c + self.y * s, -self.x * s + self.y * c)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

/// Wrap an angle into [-pi, pi).
pub fn wrap_angle(theta: f64) -> f64 {
    let t = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if t >= PI {
        t - 2.0 * PI
    } else {
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObstacleKind {
    Hazard,
    Pillar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub kind: ObstacleKind,
    pub center: Vec2,
    pub radius: f64,
}

impl Obstacle {
    pub fn new(kind: ObstacleKind, center: Vec2, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !center.is_finite() {
            return Err(Error::Contract(format!(
                "obstacle radius must be positive and center finite (radius = {radius})"
            )));
        }
        Ok(Obstacle {
            kind,
            center,
            radius,
        })
    }

    pub fn hazard(x: f64, y: f64, radius: f64) -> Self {
        Obstacle::new(ObstacleKind::Hazard, Vec2::new(x, y), radius).expect("valid hazard")
    }

    pub fn pillar(x: f64, y: f64, radius: f64) -> Self {
        Obstacle::new(ObstacleKind::Pillar, Vec2::new(x, y), radius).expect("valid pillar")
    }
}

/// Scaled control command. Both components live in [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub accel_cmd: f64,
    pub turn_cmd: f64,
}

impl Action {
    pub const ZERO: Action = Action {
        accel_cmd: 0.0,
        turn_cmd: 0.0,
    };

    /// Clamps both components into [-1, 1]. NaN components are kept so that
    /// `dynamics` can reject them.
    pub fn new(accel_cmd: f64, turn_cmd: f64) -> Self {
        Action {
            accel_cmd: accel_cmd.clamp(-1.0, 1.0),
            turn_cmd: turn_cmd.clamp(-1.0, 1.0),
        }
    }

    pub fn from_slice(raw: &[f64]) -> Self {
        Action::new(raw[0], raw[1])
    }

    pub fn to_array(self) -> [f64; ACTION_DIM] {
        [self.accel_cmd, self.turn_cmd]
    }

    pub fn distance(self, other: Action) -> f64 {
        (self.accel_cmd - other.accel_cmd).hypot(self.turn_cmd - other.turn_cmd)
    }

    pub fn is_finite(self) -> bool {
        self.accel_cmd.is_finite() && self.turn_cmd.is_finite()
    }
}

/// Arena layout and motion parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutConfig {
    pub hazards: usize,
    pub pillars: usize,
    pub hazard_radius: f64,
    pub pillar_radius: f64,
    pub goal_radius: f64,
    /// Half side length L of the square arena [-L, L]^2.
    pub arena_half_size: f64,
    pub dt: f64,
    pub a_max: f64,
    pub omega_max: f64,
    pub v_max: f64,
    pub lidar_range: f64,
    /// Minimum surface distance kept between every obstacle and the robot
    /// start, the walls, the goal, and the other obstacles' clearance disks.
    pub placement_clearance: f64,
    /// Minimum distance between a freshly placed goal and the robot.
    pub goal_min_distance: f64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            hazards: 1,
            pillars: 0,
            hazard_radius: 0.7,
            pillar_radius: 0.2,
            goal_radius: 0.3,
            arena_half_size: 3.0,
            dt: 0.02,
            a_max: 2.0,
            omega_max: 2.0,
            v_max: 1.0,
            lidar_range: 3.0,
            placement_clearance: 0.8,
            goal_min_distance: 1.0,
        }
    }
}

impl LayoutConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hazard_radius", self.hazard_radius),
            ("pillar_radius", self.pillar_radius),
            ("goal_radius", self.goal_radius),
            ("arena_half_size", self.arena_half_size),
            ("dt", self.dt),
            ("a_max", self.a_max),
            ("omega_max", self.omega_max),
            ("v_max", self.v_max),
            ("lidar_range", self.lidar_range),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("env.{name} must be positive, got {v}")));
            }
        }
        if !(self.placement_clearance >= 0.0) || !(self.goal_min_distance >= 0.0) {
            return Err(Error::Config(
                "env.placement_clearance and env.goal_min_distance must be non-negative".into(),
            ));
        }
        if self.hazards + self.pillars == 0 {
            return Err(Error::Config("layout needs at least one obstacle".into()));
        }
        Ok(())
    }
}

/// Full simulator state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub position: Vec2,
    pub heading: f64,
    pub speed: f64,
    pub goal_position: Vec2,
    pub obstacles: Arc<[Obstacle]>,
    pub step_index: u64,
    pub prev_goal_distance: f64,
    /// Seed of the episode; goal respawns are derived from it.
    pub episode_seed: u64,
    pub goals_reached: u32,
}

impl EnvState {
    pub fn velocity(&self) -> Vec2 {
        Vec2::from_angle(self.heading) * self.speed
    }

    pub fn goal_distance(&self) -> f64 {
        (self.goal_position - self.position).norm()
    }

    fn is_finite(&self) -> bool {
        self.position.is_finite()
            && self.heading.is_finite()
            && self.speed.is_finite()
            && self.goal_position.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub goal_compass: [f64; 2],
    pub goal_distance: f64,
    pub velocity_ego: [f64; 2],
    pub hazard_lidar: [f64; LIDAR_BINS],
    pub pillar_lidar: [f64; LIDAR_BINS],
}

impl Observation {
    /// Flat feature vector fed to the networks.
    pub fn features(&self) -> [f64; OBS_DIM] {
        let mut out = [0.0; OBS_DIM];
        out[0] = self.goal_compass[0];
        out[1] = self.goal_compass[1];
        out[2] = self.goal_distance;
        out[3] = self.velocity_ego[0];
        out[4] = self.velocity_ego[1];
        out[5..5 + LIDAR_BINS].copy_from_slice(&self.hazard_lidar);
        out[5 + LIDAR_BINS..].copy_from_slice(&self.pillar_lidar);
        out
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: EnvState,
    pub observation: Observation,
    pub reward: f64,
    pub cost: f64,
    pub goal_met: bool,
}

/// Surface distance `d` to an obstacle and its rate of change `d_dot`.
///
/// When the robot sits exactly on the obstacle center the outward direction
/// is undefined and `d_dot` is reported as `-|speed|`, the worst case.
pub fn relative_kinematics(state: &EnvState, obstacle: &Obstacle) -> (f64, f64) {
    let rel = state.position - obstacle.center;
    let dist = rel.norm();
    let d = dist - obstacle.radius;
    if dist == 0.0 {
        return (d, -state.speed.abs());
    }
    let outward = rel * (1.0 / dist);
    (d, state.velocity().dot(outward))
}

/// The environment: a layout plus pure operations over [`EnvState`].
#[derive(Debug, Clone)]
pub struct Env2d {
    config: LayoutConfig,
}

impl Env2d {
    pub fn new(config: LayoutConfig) -> Result<Self> {
        config.validate()?;
        Ok(Env2d { config })
    }

    pub fn config(&self) -> &LayoutConfig {
        &self.config
    }

    pub fn reset(&self, seed: u64) -> Result<(EnvState, Observation)> {
        let cfg = &self.config;
        let mut rng = rng::stream(seed, &[rng::tag::EPISODE]);
        let heading = rng.random_range(-PI..PI);
        let l = cfg.arena_half_size;
        let clearance = cfg.placement_clearance;

        let kinds = std::iter::repeat_n((ObstacleKind::Hazard, cfg.hazard_radius), cfg.hazards)
            .chain(std::iter::repeat_n(
                (ObstacleKind::Pillar, cfg.pillar_radius),
                cfg.pillars,
            ));
        let mut obstacles: Vec<Obstacle> = Vec::with_capacity(cfg.hazards + cfg.pillars);
        let mut budget = MAX_PLACEMENT_SAMPLES;
        for (kind, radius) in kinds {
            let half = l - radius - clearance;
            if half <= 0.0 {
                return Err(Error::Config(format!(
                    "arena too small for obstacle radius {radius} with clearance {clearance}"
                )));
            }
            let placed = loop {
                if budget == 0 {
                    return Err(Error::Config(
                        "obstacle placement failed after 10000 samples: arena too crowded".into(),
                    ));
                }
                budget -= 1;
                let c = Vec2::new(rng.random_range(-half..half), rng.random_range(-half..half));
                let clear_of_start = c.norm() >= radius + clearance;
                let clear_of_others = obstacles.iter().all(|o| {
                    (o.center - c).norm() >= o.radius + radius + 2.0 * clearance
                });
                if clear_of_start && clear_of_others {
                    break Obstacle::new(kind, c, radius)?;
                }
            };
            obstacles.push(placed);
        }

        let obstacles: Arc<[Obstacle]> = obstacles.into();
        let goal = self.sample_goal(&mut rng, &obstacles, Vec2::ZERO)?;
        let state = EnvState {
            position: Vec2::ZERO,
            heading,
            speed: 0.0,
            goal_position: goal,
            obstacles,
            step_index: 0,
            prev_goal_distance: goal.norm(),
            episode_seed: seed,
            goals_reached: 0,
        };
        let obs = self.observe(&state);
        Ok((state, obs))
    }

    fn sample_goal(&self, rng: &mut impl Rng, obstacles: &[Obstacle], robot: Vec2) -> Result<Vec2> {
        let cfg = &self.config;
        let half = cfg.arena_half_size - cfg.goal_radius;
        for _ in 0..MAX_PLACEMENT_SAMPLES {
            let g = Vec2::new(rng.random_range(-half..half), rng.random_range(-half..half));
            let clear = obstacles
                .iter()
                .all(|o| (g - o.center).norm() - o.radius >= cfg.placement_clearance);
            if clear && (g - robot).norm() >= cfg.goal_min_distance {
                return Ok(g);
            }
        }
        Err(Error::Config(
            "goal placement failed after 10000 samples: arena too crowded".into(),
        ))
    }

    /// One semi-implicit Euler step of the unicycle. Walls clamp the position
    /// and stop the robot; pillar overlap is resolved by radial projection
    /// onto the pillar surface, also stopping the robot.
    pub fn dynamics(&self, state: &EnvState, action: &Action) -> Result<EnvState> {
        if !state.is_finite() || !action.is_finite() {
            return Err(Error::Contract("non-finite state or action".into()));
        }
        let cfg = &self.config;
        let action = Action::new(action.accel_cmd, action.turn_cmd);
        let heading = wrap_angle(state.heading + action.turn_cmd * cfg.omega_max * cfg.dt);
        let mut speed =
            (state.speed + action.accel_cmd * cfg.a_max * cfg.dt).clamp(-cfg.v_max, cfg.v_max);
        let mut position = state.position + Vec2::from_angle(heading) * (speed * cfg.dt);

        let l = cfg.arena_half_size;
        if position.x.abs() > l || position.y.abs() > l {
            position = Vec2::new(position.x.clamp(-l, l), position.y.clamp(-l, l));
            speed = 0.0;
        }
        for o in state.obstacles.iter().filter(|o| o.kind == ObstacleKind::Pillar) {
            let rel = position - o.center;
            let dist = rel.norm();
            if dist < o.radius {
                let dir = if dist > 0.0 {
                    rel * (1.0 / dist)
                } else {
                    Vec2::from_angle(heading) * -1.0
                };
                position = o.center + dir * o.radius;
                speed = 0.0;
            }
        }

        Ok(EnvState {
            position,
            heading,
            speed,
            goal_position: state.goal_position,
            obstacles: Arc::clone(&state.obstacles),
            step_index: state.step_index + 1,
            prev_goal_distance: state.prev_goal_distance,
            episode_seed: state.episode_seed,
            goals_reached: state.goals_reached,
        })
    }

    pub fn observe(&self, state: &EnvState) -> Observation {
        let cfg = &self.config;
        let rel_goal = (state.goal_position - state.position).to_ego(state.heading);
        let goal_distance = rel_goal.norm();
        let goal_compass = if goal_distance > 0.0 {
            [rel_goal.x / goal_distance, rel_goal.y / goal_distance]
        } else {
            [0.0, 0.0]
        };

        let mut hazard_lidar = [0.0f64; LIDAR_BINS];
        let mut pillar_lidar = [0.0f64; LIDAR_BINS];
        let sector = 2.0 * PI / LIDAR_BINS as f64;
        for o in state.obstacles.iter() {
            let rel = (o.center - state.position).to_ego(state.heading);
            let angle = rel.y.atan2(rel.x).rem_euclid(2.0 * PI);
            let bin = ((angle / sector) as usize).min(LIDAR_BINS - 1);
            let surface = rel.norm() - o.radius;
            let value = (1.0 - surface / cfg.lidar_range).clamp(0.0, 1.0);
            let lidar = match o.kind {
                ObstacleKind::Hazard => &mut hazard_lidar,
                ObstacleKind::Pillar => &mut pillar_lidar,
            };
            lidar[bin] = lidar[bin].max(value);
        }

        Observation {
            goal_compass,
            goal_distance,
            velocity_ego: [state.speed, 0.0],
            hazard_lidar,
            pillar_lidar,
        }
    }

    /// Hazard penetration cost plus one per pillar in contact.
    pub fn cost(&self, state: &EnvState) -> f64 {
        let mut hazard: f64 = 0.0;
        let mut contacts = 0.0;
        for o in state.obstacles.iter() {
            let dist = (state.position - o.center).norm();
            match o.kind {
                ObstacleKind::Hazard => hazard = hazard.max(o.radius - dist),
                ObstacleKind::Pillar => {
                    if dist <= o.radius * (1.0 + 1e-9) {
                        contacts += 1.0;
                    }
                }
            }
        }
        hazard.max(0.0) + contacts
    }

    pub fn step(&self, state: &EnvState, action: &Action) -> Result<StepOutcome> {
        let mut next = self.dynamics(state, action)?;
        let distance = next.goal_distance();
        let goal_met = distance < self.config.goal_radius;
        let reward = state.prev_goal_distance - distance + if goal_met { 1.0 } else { 0.0 };
        let cost = self.cost(&next);

        if goal_met {
            next.goals_reached += 1;
            let mut rng = rng::stream(
                next.episode_seed,
                &[rng::tag::GOAL, u64::from(next.goals_reached)],
            );
            next.goal_position = self.sample_goal(&mut rng, &next.obstacles, next.position)?;
            next.prev_goal_distance = next.goal_distance();
        } else {
            next.prev_goal_distance = distance;
        }

        let observation = self.observe(&next);
        Ok(StepOutcome {
            state: next,
            observation,
            reward,
            cost,
            goal_met,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env() -> Env2d {
        Env2d::new(LayoutConfig::default()).unwrap()
    }

    fn bare_state(obstacles: Vec<Obstacle>) -> EnvState {
        EnvState {
            position: Vec2::ZERO,
            heading: 0.0,
            speed: 0.0,
            goal_position: Vec2::new(2.0, 0.0),
            obstacles: obstacles.into(),
            step_index: 0,
            prev_goal_distance: 2.0,
            episode_seed: 0,
            goals_reached: 0,
        }
    }

    #[test]
    fn reset_is_deterministic_and_starts_at_center() {
        let e = env();
        let (s1, o1) = e.reset(0).unwrap();
        let (s2, o2) = e.reset(0).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(o1, o2);
        assert_eq!(s1.position, Vec2::ZERO);
        assert_eq!(s1.speed, 0.0);
        assert_eq!(s1.obstacles.len(), 1);
    }

    #[test]
    fn different_seeds_give_different_goals() {
        let e = env();
        let (a, _) = e.reset(1).unwrap();
        let (b, _) = e.reset(2).unwrap();
        assert_ne!(a.goal_position, b.goal_position);
    }

    #[test]
    fn crowded_arena_is_a_configuration_error() {
        let cfg = LayoutConfig {
            hazards: 8,
            ..LayoutConfig::default()
        };
        let err = Env2d::new(cfg).unwrap().reset(0).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn zero_action_at_rest_is_a_fixed_point() {
        let e = env();
        let s = bare_state(vec![Obstacle::hazard(2.0, 2.0, 0.7)]);
        let n = e.dynamics(&s, &Action::ZERO).unwrap();
        assert_eq!(n.position, s.position);
        assert_eq!(n.heading, s.heading);
        assert_eq!(n.speed, 0.0);
    }

    #[test]
    fn full_accel_from_rest_hand_evaluated() {
        let cfg = LayoutConfig {
            a_max: 1.0,
            ..LayoutConfig::default()
        };
        let e = Env2d::new(cfg).unwrap();
        let s = bare_state(vec![Obstacle::hazard(2.0, 2.0, 0.7)]);
        let n = e.dynamics(&s, &Action::new(1.0, 0.0)).unwrap();
        assert_close!(n.speed, 0.02, 1e-15);
        assert_close!(n.position.x, 0.0004, 1e-15);
        assert_eq!(n.position.y, 0.0);
    }

    #[test]
    fn dynamics_rejects_non_finite_input() {
        let e = env();
        let s = bare_state(vec![Obstacle::hazard(2.0, 2.0, 0.7)]);
        let bad = Action {
            accel_cmd: f64::NAN,
            turn_cmd: 0.0,
        };
        assert!(matches!(e.dynamics(&s, &bad), Err(Error::Contract(_))));
    }

    #[test]
    fn walls_clamp_and_stop() {
        let e = env();
        let mut s = bare_state(vec![Obstacle::hazard(-2.0, -2.0, 0.7)]);
        s.position = Vec2::new(2.999, 0.0);
        s.speed = 1.0;
        let n = e.dynamics(&s, &Action::new(1.0, 0.0)).unwrap();
        assert_eq!(n.position.x, 3.0);
        assert_eq!(n.speed, 0.0);
    }

    #[test]
    fn pillar_overlap_is_projected_to_surface() {
        let e = env();
        let mut s = bare_state(vec![Obstacle::pillar(0.21, 0.0, 0.2)]);
        s.speed = 1.0;
        let n = e.dynamics(&s, &Action::ZERO).unwrap();
        let dist = (n.position - Vec2::new(0.21, 0.0)).norm();
        assert_close!(dist, 0.2, 1e-12);
        assert_eq!(n.speed, 0.0);
        assert_eq!(e.cost(&n), 1.0);
    }

    #[test]
    fn lidar_dead_ahead_hazard() {
        let e = env();
        let s = bare_state(vec![Obstacle::hazard(2.0, 0.0, 0.5)]);
        let o = e.observe(&s);
        assert_close!(o.hazard_lidar[0], 0.5, 1e-12);
        assert!(o.hazard_lidar[1..].iter().all(|&v| v == 0.0));
        assert!(o.pillar_lidar.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lidar_bins_follow_ego_frame() {
        let e = env();
        let mut s = bare_state(vec![Obstacle::hazard(0.0, 2.0, 0.5)]);
        // obstacle is to the left in world frame; facing +y puts it dead ahead
        s.heading = PI / 2.0;
        let o = e.observe(&s);
        assert_close!(o.hazard_lidar[0], 0.5, 1e-12);
        s.heading = 0.0;
        let o = e.observe(&s);
        assert!(o.hazard_lidar[4] > 0.0, "{:?}", o.hazard_lidar);
    }

    #[test]
    fn goal_compass_is_unit_and_zero_at_goal() {
        let e = env();
        let mut s = bare_state(vec![Obstacle::hazard(2.0, 2.0, 0.7)]);
        let o = e.observe(&s);
        assert_close!(o.goal_compass[0].hypot(o.goal_compass[1]), 1.0, 1e-12);
        s.position = s.goal_position;
        let o = e.observe(&s);
        assert_eq!(o.goal_distance, 0.0);
    }

    #[test]
    fn hazard_cost_cases() {
        let e = env();
        let mut s = bare_state(vec![Obstacle::hazard(2.0, 2.0, 0.7)]);
        assert_eq!(e.cost(&s), 0.0);
        s.position = Vec2::new(2.0, 2.0);
        assert_close!(e.cost(&s), 0.7, 1e-15);
    }

    #[test]
    fn reward_for_moving_towards_goal() {
        // 5 m/s for 0.02 s covers 0.1 m straight at the goal
        let cfg = LayoutConfig {
            v_max: 5.0,
            ..LayoutConfig::default()
        };
        let e = Env2d::new(cfg).unwrap();
        let mut s = bare_state(vec![Obstacle::hazard(-2.0, -2.0, 0.7)]);
        s.speed = 5.0;
        let out = e.step(&s, &Action::ZERO).unwrap();
        assert_close!(out.reward, 0.1, 1e-12);
        assert!(!out.goal_met);
    }

    #[test]
    fn relative_kinematics_cases() {
        let mut s = bare_state(vec![]);
        let o = Obstacle::hazard(-2.0, 0.0, 0.5);
        assert_eq!(relative_kinematics(&s, &o), (1.5, 0.0));
        s.speed = 1.0; // heading 0 points away from the obstacle
        let (_, d_dot) = relative_kinematics(&s, &o);
        assert_close!(d_dot, 1.0, 1e-15);
        s.position = o.center;
        assert_eq!(relative_kinematics(&s, &o).1, -1.0);
    }

    #[test]
    fn goal_respawn_rebases_distance() {
        let e = env();
        let mut s = bare_state(vec![Obstacle::hazard(-2.0, -2.0, 0.7)]);
        s.goal_position = Vec2::new(0.1, 0.0);
        s.prev_goal_distance = 0.1;
        let out = e.step(&s, &Action::ZERO).unwrap();
        assert!(out.goal_met);
        assert_close!(out.reward, 1.0, 1e-15);
        assert_eq!(out.state.goals_reached, 1);
        assert_close!(out.state.prev_goal_distance, out.state.goal_distance(), 0.0);
        assert_eq!(out.state.obstacles, s.obstacles);
    }

    #[test]
    fn wrap_angle_range() {
        for t in [-10.0, -PI, 0.0, PI, 7.0, 3.0 * PI] {
            let w = wrap_angle(t);
            assert!((-PI..PI).contains(&w), "{t} -> {w}");
        }
    }
}
