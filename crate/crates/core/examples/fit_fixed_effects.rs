//! Fits the fixed-effects model to simulated indicators and reports raw-scale
//! posterior summaries against the truth.

use nalgebra::DVector;
use recbreak::design::Block;
use recbreak::krige::coords_of;
use recbreak::mcmc::simulate::{sample_truth, simulate_indicators, TruthHyper};
use recbreak::mcmc::{run_chains, FitData, ModelSpec, Variant};
use recbreak::records::Site;
use recbreak::stats::Summary;

fn main() -> recbreak::Result<()> {
    let sites: Vec<Site> = (0..10).map(|i| Site::new(format!("s{i}"), (i * 37 % 100) as f64, (i * 53 % 100) as f64, 5.0 + 20.0 * i as f64)).collect();
    let mut main = vec![0.0; 21];
    main[..5].copy_from_slice(&[-3.0, -8.0, 3.0, 1.2, 0.6]);
    let betas = [main.clone(), vec![-3.0, -8.0, 1.0], vec![-3.0, -8.0, 1.0]];
    let hyper = TruthHyper { beta0: 0.0, sigma0_sq: 1.0, sigma1_sq: 1.0, phi0: 0.1 };
    let truth = sample_truth(Variant::M1, betas, hyper, &coords_of(&sites), 30, 40, 1)?;
    let data = FitData::new(simulate_indicators(Variant::M1, &truth, &sites, 30, 40, 2)?, sites)?;

    let spec = ModelSpec { iterations: 1500, burn_in: 500, ..ModelSpec::new(Variant::M1) };
    let fit = run_chains(&spec, &data, &[])?;
    let sc = &data.blocks[0].scaling;
    let raw: Vec<DVector<f64>> = fit.draws.flat().map(|d| sc.back_transform(&DVector::from_vec(d.blocks[0].beta.clone()))).collect();
    for j in 0..6 {
        let s = Summary::of(&raw.iter().map(|b| b[j]).collect::<Vec<_>>());
        println!("{:10} truth {:5.2}  mean {:6.2}  90% ({:6.2}, {:6.2})", Block::Main.names()[j], main[j], s.mean, s.q05, s.q95);
    }
    println!("DIC {:.1}, p_D {:.1}", fit.dic.dic, fit.dic.p_d);
    Ok(())
}
