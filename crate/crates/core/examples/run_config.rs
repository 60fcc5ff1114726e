//! Build a run config in code and drive the command layer with it.

use ptca_sense::app::{cmd_simulate, Context, RunConfig};
use ptca_sense::plant::Scenario;

fn main() -> ptca_sense::Result<()> {
    let cfg = RunConfig {
        seed: Some(42),
        scenarios: vec![Scenario::isobaric_sweep(), Scenario::cyclic_estimation()],
        ..RunConfig::default()
    };
    println!("{}", serde_json::to_string_pretty(&cfg.scenarios[0])?);
    let out = std::env::temp_dir().join("ptca-sense-example");
    let ctx = Context::new(cfg, &out, 2)?;
    for run in cmd_simulate(&ctx)? {
        println!(
            "{} -> {} ({} samples)",
            run.scenario,
            out.join(&run.file).display(),
            run.samples
        );
    }
    Ok(())
}
