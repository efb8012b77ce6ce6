//! Yearly record rates, persistence log odds ratios and AIC of nested logit
//! models on drifting series.

use recbreak::eda::{compare_nested_models, yearly_summary};
use recbreak::records::{extract_records, simulate_series, SimulatedSeriesConfig};

fn main() -> recbreak::Result<()> {
    let panel = simulate_series(&SimulatedSeriesConfig::ldm(0.05, 2.0, 40, 12, 365, 3))?;
    let tensor = extract_records(&panel)?;
    for y in yearly_summary(&tensor)?.iter().step_by(8) {
        println!("t {:2}  p_hat {:.4}  lor1 {:6.3}", y.t, y.p_hat, y.lor1);
    }
    let dists: Vec<f64> = panel.sites().iter().map(|s| s.dist_coast_km).collect();
    for m in compare_nested_models(&tensor, &dists)? {
        println!("{:20} dof {:2}  aic {:.1}", m.model.name(), m.fit.dof, m.fit.aic);
    }
    Ok(())
}
