//! Writes posterior draws and a run manifest, then reads the draws back.

use recbreak::io::{load_draws, persist_draws, RunManifest};
use recbreak::mcmc::{fit, ModelSpec, Variant};
use recbreak::records::{extract_records, simulate_series, SimulatedSeriesConfig};

fn main() -> recbreak::Result<()> {
    let panel = simulate_series(&SimulatedSeriesConfig::crm(10, 5, 20, 1))?;
    let tensor = extract_records(&panel)?;
    let spec = ModelSpec { iterations: 60, burn_in: 30, ..ModelSpec::new(Variant::M2) };
    let result = fit(&spec, &tensor, panel.sites())?;

    let dir = std::env::temp_dir().join("recbreak-persistence-example");
    let files = persist_draws(&result.draws, &dir)?;
    let manifest = RunManifest::new("example", Some(spec.seed), serde_json::to_value(&spec)?).write(&dir, &files)?;
    let back = load_draws(&dir)?;
    println!("wrote {} files and {}", files.len(), manifest.display());
    println!("round trip exact: {}", back == result.draws);
    Ok(())
}
