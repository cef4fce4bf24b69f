//! Train TRPO and TRPO-ISSA briefly and overlay their curves.

use s3po::cli::compare_table;
use s3po::config::parse_str;
use s3po::harness::{emit_plots, train};

fn main() -> s3po::Result<()> {
    let root = std::env::temp_dir().join("s3po_compare_runs");
    let mut dirs = Vec::new();
    for name in ["trpo", "trpo_issa"] {
        let cfg = parse_str(&format!(
            "[run]\nepochs = 4\nsteps_per_epoch = 1500\nmax_episode_len = 250\neval_steps = 500\n\
             validation_samples = 60\nlemma1_seeds = 5\n[algo]\nname = {name}\n"
        ))?;
        let dir = root.join(name);
        train(&cfg, &dir)?;
        dirs.push(dir);
    }
    print!("{}", compare_table(&dirs, 2)?);
    for p in emit_plots(&dirs, &root.join("overlay"))? {
        println!("{}", p.display());
    }
    Ok(())
}
