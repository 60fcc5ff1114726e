//! Identify both models from a simulated calibration grid.

use ptca_sense::ident::{fit_dynamic, fit_inductance, Bounds, FitOptions};
use ptca_sense::model::InductanceParams;
use ptca_sense::plant::{run_scenario, PlantConfig, Scenario};

fn main() -> ptca_sense::Result<()> {
    let plant = PlantConfig::default();
    let data = run_scenario(&Scenario::calibration_grid(), &plant)?;
    println!("{} samples", data.len());

    let dynamic = fit_dynamic(&data)?;
    let d = dynamic.params;
    println!(
        "force model: k = {:.3}, x0 = {:.5}, c = {:.4}  (R2 {:.4})",
        d.k, d.x0, d.c, dynamic.r2
    );

    // start away from the truth
    let mut start = plant.inductance.p;
    for v in &mut start {
        *v *= 1.15;
    }
    let init = InductanceParams::new(start)?;
    let fit = fit_inductance(&data, &init, &Bounds::default(), &FitOptions::default())?;
    println!(
        "inductance map: RMSE {:.4} uH, R2 {:.4}, {} iterations, converged {}",
        fit.rmse, fit.r2, fit.iterations, fit.converged
    );
    println!("noise floor sigma_L = {} uH", plant.noise_l);
    Ok(())
}
