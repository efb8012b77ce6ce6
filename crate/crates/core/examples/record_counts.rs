//! Record indicators of simulated i.i.d. and drifting series against the
//! stationary law `P(record at t) = 1/t`.

use recbreak::eda::empirical_p_hat;
use recbreak::records::{expected_stationary_records, extract_records, simulate_series, SimulatedSeriesConfig};

fn main() -> recbreak::Result<()> {
    let years = 62;
    for cfg in [
        SimulatedSeriesConfig::crm(years, 40, 365, 1),
        SimulatedSeriesConfig::ldm(0.035, 3.56, years, 40, 365, 1),
    ] {
        let tensor = extract_records(&simulate_series(&cfg)?)?;
        let mut nbar = 1.0;
        println!("{:?}: ties {}", cfg.model, tensor.count_ties());
        for t in 2..=years {
            let p = empirical_p_hat(&tensor, t)?;
            nbar += p;
            if t % 10 == 0 {
                println!("  t {t:2}  p_hat {p:.4}  1/t {:.4}", 1.0 / t as f64);
            }
        }
        println!("  mean records by t = {years}: {nbar:.3} (stationary {:.3})", expected_stationary_records(1, years)?);
    }
    Ok(())
}
