//! Layer the desk preset, a config text and command-line style overrides,
//! then print the resolved configuration.

use s3po::config::{parse_str, Assignments, DESK_PRESET};

fn main() -> s3po::Result<()> {
    let mut a = Assignments::default();
    a.parse_text(DESK_PRESET, "desk")?;
    a.apply_override("algo.name=trpo_issa")?;
    a.apply_override("algo.beta=0.05")?;
    let cfg = a.resolve()?;
    let text = cfg.to_text();
    print!("{text}");
    assert_eq!(parse_str(&text)?, cfg);

    let mut clash = Assignments::default();
    clash.apply_override("algo.delta=0.01")?;
    if let Err(e) = clash.apply_override("algo.delta=0.03") {
        println!("\nrejected: {e}");
    }
    Ok(())
}
