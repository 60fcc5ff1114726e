//! Inductance against force at a few pressures, with the peak of each curve.

use ptca_sense::model::{eval_coeffs, eval_dynamic_force, DynamicParams};
use ptca_sense::plant::reference_inductance_params;

fn main() -> ptca_sense::Result<()> {
    let params = reference_inductance_params();
    for p in [0.0, 0.2, 0.4, 0.6] {
        let c = eval_coeffs(&params, p)?;
        let peak = c.peak_force().unwrap_or(f64::NAN);
        print!("P = {p:.1} MPa  peak at {peak:.2} N  L(F):");
        for f in [0.0, 0.5, 1.0, 2.0, 3.0, 4.0] {
            print!(" {:.3}", c.inductance(f));
        }
        println!();
    }

    let d = DynamicParams::reference();
    println!(
        "\nforce model k = {} N/m, x0 = {} m, c = {} N/MPa",
        d.k, d.x0, d.c
    );
    for (x, p) in [(0.10, 0.0), (0.12, 0.0), (0.12, 0.3)] {
        println!(
            "  F({x:.2} m, {p:.1} MPa) = {:.4} N",
            eval_dynamic_force(&d, x, p)
        );
    }
    Ok(())
}
