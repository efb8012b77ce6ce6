//! How a realistic layout of missing values changes record indicators.

use recbreak::records::{missing_impact_study, reference_gap_mask, SimulatedSeriesConfig};
use recbreak::rng::seeded;

fn main() -> recbreak::Result<()> {
    let cfg = SimulatedSeriesConfig::ldm(0.035, 3.56, 62, 40, 365, 0);
    let mask = reference_gap_mask(1);
    let s = missing_impact_study(&cfg, &mask, 50, &mut seeded(7))?;
    println!("{} missing values", mask.len());
    println!("indicators changed: mean {:.1} (90% range {:.0} to {:.0})", s.mean_diff, s.q05, s.q95);
    println!("net change in record count: mean {:.1}", s.record_count_delta.mean);
    Ok(())
}
