//! Roll a uniformly random controller through the navigation task and
//! report what the environment hands back.

use rand::Rng;
use s3po::env2d::{Action, Env2d, LayoutConfig};
use s3po::rng;

fn main() -> s3po::Result<()> {
    let env = Env2d::new(LayoutConfig::default())?;
    let (mut state, obs) = env.reset(11)?;
    println!("robot at ({:.2}, {:.2}), goal at ({:.2}, {:.2})", state.position.x, state.position.y, state.goal_position.x, state.goal_position.y);
    println!("observation has {} features", obs.features().len());

    let mut noise = rng::stream(11, &[]);
    let (mut reward, mut cost, mut hits) = (0.0, 0.0, 0);
    for _ in 0..500 {
        let a = Action::new(noise.random_range(-1.0..=1.0), noise.random_range(-1.0..=1.0));
        let out = env.step(&state, &a)?;
        reward += out.reward;
        cost += out.cost;
        hits += usize::from(out.goal_met);
        state = out.state;
    }
    println!("500 random steps: return {reward:.3}, summed cost {cost:.3}, goals reached {hits}");
    Ok(())
}
