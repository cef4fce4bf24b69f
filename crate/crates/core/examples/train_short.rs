//! A few epochs of S-3PO at toy scale, written to a temporary run directory.
//!
//! `cargo run --release --example train_short -- [epochs]`

use s3po::config::parse_str;
use s3po::harness::train;

fn main() -> s3po::Result<()> {
    let epochs: usize = std::env::args().nth(1).and_then(|e| e.parse().ok()).unwrap_or(5);
    let cfg = parse_str(&format!(
        "[run]\nepochs = {epochs}\nsteps_per_epoch = 2000\nmax_episode_len = 250\neval_steps = 1000\n\
         validation_samples = 300\nlemma1_seeds = 20\n[algo]\nname = s3po\n"
    ))?;
    let dir = std::env::temp_dir().join("s3po_train_short");
    let summary = train(&cfg, &dir)?;
    println!("epoch      J_r      M_c  trigger   J_D      case");
    for m in &summary.metrics {
        println!(
            "{:5} {:8.3} {:8.3} {:8.4} {:7.4}  {}",
            m.epoch, m.j_r, m.m_c, m.trigger_rate, m.j_d, m.solver_case
        );
    }
    println!("lemma1: {} of {} untriggered", summary.lemma1.n_untriggered, summary.lemma1.n_rollouts);
    println!("artifacts in {}", dir.display());
    Ok(())
}
