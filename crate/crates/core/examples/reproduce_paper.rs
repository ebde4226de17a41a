//! Runs every stage on the shipped fixture and prints the summary table,
//! the same as `sfwm reproduce-paper`.
//!
//! ```bash
//! cargo run --release -p sfwm --example reproduce_paper [out_dir]
//! ```

use std::path::PathBuf;

use sfwm::cli::{cmd_reproduce, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("sfwm-reproduce"));
    let config = RunConfig {
        run_out: out.clone(),
        ..RunConfig::default()
    };
    config.validate()?;
    cmd_reproduce(&config, &out)?;
    print!("{}", std::fs::read_to_string(out.join("summary.txt"))?);
    Ok(())
}
