//! Slow stretch and release at constant pressure: loading and unloading
//! forces differ at the same length.

use ptca_sense::plant::{Drive, Plant, PlantCommand, PlantConfig};

fn main() -> ptca_sense::Result<()> {
    let cfg = PlantConfig {
        valve_tau: 0.0,
        noise_l: 0.0,
        noise_f: 0.0,
        noise_x: 0.0,
        ..PlantConfig::default()
    };
    let mut plant = Plant::new(cfg)?;
    let (x0, amp, dt) = (0.11, 0.02, 0.01);
    let n = 2000;
    let mut path = Vec::with_capacity(2 * n);
    for i in 0..2 * n {
        let s = if i < n { i } else { 2 * n - i } as f64 / n as f64;
        let x = x0 + amp * s;
        let out = plant.step(
            PlantCommand {
                p_cmd: 0.3,
                drive: Drive::Length(x),
            },
            dt,
        )?;
        path.push((x, out.truth.f));
    }
    // trapezoidal loop area over the closed path
    let area: f64 = path
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * 0.5 * (w[1].1 + w[0].1))
        .sum();
    let mid = x0 + 0.5 * amp;
    let (up, down) = (path[n / 2].1, path[3 * n / 2].1);
    println!("at x = {mid:.3} m: loading {up:.4} N, unloading {down:.4} N");
    println!("dissipated per cycle: {:.3} mJ", area * 1e3);
    Ok(())
}
