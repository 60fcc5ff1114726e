//! Open-loop, sensor feedback and self-sensing feedback on the standard
//! tracking trajectories.

use ptca_sense::control::{compare, format_table, Bench};
use ptca_sense::plant::{PlantConfig, Scenario};

fn main() -> ptca_sense::Result<()> {
    let bench = Bench::identify(PlantConfig::default())?;
    let groups = Scenario::tracking_suite()
        .iter()
        .map(|s| compare(s, &bench))
        .collect::<ptca_sense::Result<Vec<_>>>()?;
    print!("{}", format_table(&groups));
    Ok(())
}
