//! Run the observer over a cyclic stretching record and score it.

use ptca_sense::control::Bench;
use ptca_sense::ident::goodness;
use ptca_sense::observer::Observer;
use ptca_sense::plant::{run_scenario, PlantConfig, Scenario};

fn main() -> ptca_sense::Result<()> {
    let plant = PlantConfig::default();
    let bench = Bench::identify(plant.clone())?;
    let data = run_scenario(&Scenario::cyclic_estimation(), &plant)?;

    let mut obs = Observer::new(
        bench.observer,
        bench.inductance,
        bench.dynamic,
        &bench.filter,
        None,
    )?;
    let (mut f_hat, mut x_hat) = (Vec::new(), Vec::new());
    for s in &data.samples {
        let e = obs.step(s.l, s.p)?;
        f_hat.push(e.f_hat);
        x_hat.push(e.x_hat);
    }
    let f_true: Vec<f64> = data.samples.iter().filter_map(|s| s.f_true).collect();
    let x_true: Vec<f64> = data.samples.iter().filter_map(|s| s.x).collect();
    let gf = goodness(&f_hat, &f_true)?;
    let gx = goodness(&x_hat, &x_true)?;
    println!("force:  RMSE {:.4} N   NRMSE {:.2}%", gf.rmse, gf.nrmse);
    println!(
        "length: RMSE {:.3} mm  NRMSE {:.2}%",
        gx.rmse * 1e3,
        gx.nrmse
    );
    Ok(())
}
