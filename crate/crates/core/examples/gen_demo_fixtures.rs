//! Regenerate the bundled demo replay store from the exact solver.
//!
//! Usage: cargo run -p edbench-core --example gen_demo_fixtures [-- <path>]
//! (defaults to demo/replay.jsonl relative to the working directory).

use edbench_core::demo::{demo_model_names, write_oracle_fixtures};
use edbench_core::prompt::Strategy;
use edbench_core::{PowerSystem, ScenarioSpec};

fn main() -> edbench_core::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "demo/replay.jsonl".to_string());
    let sys = PowerSystem::bundled_ieee118();
    let written = write_oracle_fixtures(
        &sys,
        &ScenarioSpec::default(),
        &demo_model_names(),
        &Strategy::ALL,
        std::path::Path::new(&out),
    )?;
    eprintln!("wrote {written} fixtures to {out}");
    Ok(())
}
