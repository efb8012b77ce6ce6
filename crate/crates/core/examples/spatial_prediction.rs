//! Fits a spatial model and simulates record statistics on a grid of
//! unobserved locations.

use recbreak::krige::{coords_of, ers_bar, nbar, ratio, simulate_predictive, GridCell, PredictionGrid};
use recbreak::mcmc::simulate::{sample_truth, simulate_indicators, TruthHyper};
use recbreak::mcmc::{run_chains, FitData, ModelSpec, Variant};
use recbreak::records::Site;
use recbreak::stats::Summary;

fn main() -> recbreak::Result<()> {
    let sites: Vec<Site> = (0..12).map(|i| Site::new(format!("s{i}"), (i * 37 % 100) as f64, (i * 53 % 100) as f64, 5.0 + 15.0 * i as f64)).collect();
    let betas = [vec![0.0; 20], vec![-8.0, 1.0], vec![-8.0, 1.0]];
    let hyper = TruthHyper { beta0: -3.0, sigma0_sq: 0.5, sigma1_sq: 0.3, phi0: 0.05 };
    let truth = sample_truth(Variant::M3, betas, hyper, &coords_of(&sites), 20, 30, 1)?;
    let data = FitData::new(simulate_indicators(Variant::M3, &truth, &sites, 20, 30, 2)?, sites)?;
    let fit = run_chains(&ModelSpec { iterations: 800, burn_in: 400, ..ModelSpec::new(Variant::M3) }, &data, &[])?;

    let cells = (0..4)
        .map(|k| GridCell { id: format!("g{k}"), x_km: 20.0 * k as f64 + 10.0, y_km: 50.0, dist_coast_km: 30.0, block: Some("centre".into()) })
        .collect();
    let grid = PredictionGrid::new(cells)?;
    let field = simulate_predictive(&fit.draws, &grid, 20, 3)?;
    for c in 0..grid.len() {
        let n = Summary::of(&nbar(&field, 11, 20, 1, 30, c)?);
        let r = Summary::of(&ratio(&field, 11, 20, 1, 30, c)?);
        println!("{}  nbar {:.3}  ratio {:.2} ({:.2}, {:.2})", grid.cells[c].id, n.mean, r.mean, r.q05, r.q95);
    }
    let days: Vec<usize> = (1..=30).collect();
    let all: Vec<usize> = grid.block_cells("centre");
    println!("ERS in year 20: {:.4}", Summary::of(&ers_bar(&field, 20, &days, &all)?).mean);
    Ok(())
}
