use s3po::config;
use s3po::harness::train;

fn cfg(workers: usize) -> config::RunConfig {
    config::parse_str(&format!(
        "[run]\nepochs = 2\nsteps_per_epoch = 300\nmax_episode_len = 80\neval_steps = 160\nworkers = {workers}\n\
         validation_samples = 30\nlemma1_seeds = 4\n[algo]\nname = s3po\nhidden = 8\nvalue_iters = 5\n"
    ))
    .unwrap()
}

fn metrics(c: &config::RunConfig) -> Vec<u8> {
    let dir = tempfile::tempdir().unwrap();
    train(c, dir.path()).unwrap();
    std::fs::read(dir.path().join("metrics.csv")).unwrap()
}

#[test]
fn parallel_workers_are_reproducible() {
    let four = cfg(4);
    assert_eq!(metrics(&four), metrics(&four));
}

#[test]
fn worker_count_changes_the_stream_partition() {
    assert_ne!(metrics(&cfg(1)), metrics(&cfg(3)));
}
