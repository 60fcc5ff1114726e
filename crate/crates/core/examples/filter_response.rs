//! Magnitude response of the default low-pass and a streaming step test.

use ptca_sense::signal::{design, FilterSpec};

fn main() -> ptca_sense::Result<()> {
    let spec = FilterSpec::default();
    let mut filt = design(&spec)?;
    println!(
        "order {} cutoff {} Hz at {} Hz",
        spec.order, spec.cutoff_hz, spec.sample_rate_hz
    );
    for f in [1.0, 5.0, 10.0, 20.0, 40.0, 49.0] {
        println!("  {f:>5.1} Hz  {:>8.2} dB", filt.magnitude_db(f));
    }
    let step: Vec<f64> = filt.filter(&[1.0; 30]);
    println!("step response, first 10 samples:");
    for y in &step[..10] {
        println!("  {y:.4}");
    }
    Ok(())
}
