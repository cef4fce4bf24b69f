//! Drive straight at a hazard and watch the projection step in.

use s3po::env2d::{Action, Env2d, LayoutConfig};
use s3po::safety::{issa_project, phi, phi0, ProjectionBudget, SafetyIndexParams};

fn main() -> s3po::Result<()> {
    let env = Env2d::new(LayoutConfig::default())?;
    let index = SafetyIndexParams::default();
    let budget = ProjectionBudget::default();
    let (mut state, _) = env.reset(3)?;
    let hazard = state.obstacles[0].center;
    // put the robot 2.5 m from the hazard, heading at it at full speed
    let offset = state.position.x - hazard.x;
    state.position.x = hazard.x + if offset >= 0.0 { 2.5 } else { -2.5 };
    state.position.y = hazard.y;
    state.heading = if offset >= 0.0 { std::f64::consts::PI } else { 0.0 };
    state.speed = env.config().v_max;

    let full_throttle = Action::new(1.0, 0.0);
    let mut triggers = 0;
    for t in 0..120 {
        let p = issa_project(&state, &full_throttle, &index, &env, &budget)?;
        if p.triggered {
            triggers += 1;
            if triggers <= 3 {
                println!(
                    "t={t:3} phi={:+.4} nominal ({:+.2},{:+.2}) -> safe ({:+.3},{:+.3}), imaginary cost {:.4}",
                    phi(&state, &index),
                    full_throttle.accel_cmd,
                    full_throttle.turn_cmd,
                    p.safe_action.accel_cmd,
                    p.safe_action.turn_cmd,
                    p.imaginary_cost
                );
            }
        }
        state = env.step(&state, &p.safe_action)?.state;
        assert!(phi0(&state, index.d_min()) <= 0.0);
    }
    println!("{triggers} of 120 steps filtered; closest approach kept outside d_min = {}", index.d_min());
    Ok(())
}
