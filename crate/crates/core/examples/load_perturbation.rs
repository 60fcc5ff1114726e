//! Hold length on self-sensed feedback while weights are added and removed.

use ptca_sense::control::{run_perturbation, Bench};
use ptca_sense::plant::{PlantConfig, Scenario};

fn main() -> ptca_sense::Result<()> {
    let bench = Bench::identify(PlantConfig::default())?;
    let r = run_perturbation(&Scenario::load_perturbation(), &bench)?;
    for e in &r.schedule.events {
        let dir = if e.on { "add" } else { "remove" };
        println!("t = {:>5.2} s  {dir} {:.2} N", e.t, e.weight);
    }
    println!(
        "force error: max {:.4} N, RMSE {:.4} N, final drift {:.4} N",
        r.max_abs_error, r.rmse, r.drift
    );
    println!("length RMSE {:.3} mm", r.length_rmse * 1e3);
    Ok(())
}
