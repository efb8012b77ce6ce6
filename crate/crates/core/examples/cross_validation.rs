//! Spatial cross-validation of the stationary and fixed-effects models.

use recbreak::diagnostics::{default_periods, run_crossval, AucMode, CvPlan};
use recbreak::mcmc::{ModelSpec, Variant};
use recbreak::records::{extract_records, simulate_series, SimulatedSeriesConfig};

fn main() -> recbreak::Result<()> {
    let panel = simulate_series(&SimulatedSeriesConfig::ldm(0.08, 1.0, 20, 8, 40, 5))?;
    let tensor = extract_records(&panel)?;
    let sites = panel.sites().to_vec();
    let plan = CvPlan::random(sites.len(), 4, 1)?;
    let specs: Vec<ModelSpec> = [Variant::M0, Variant::M1]
        .map(|v| ModelSpec { iterations: 400, burn_in: 200, chains: 1, ..ModelSpec::new(v) })
        .to_vec();
    let table = run_crossval(&specs, &tensor, &sites, &plan, &default_periods(20), AucMode::FoldAverage)?;
    for s in &table.summary {
        println!("{} period {}  BS {:.4}  AUC {:.3}", s.model, s.period, s.bs, s.auc);
    }
    Ok(())
}
