//! Scoring rules, PIT histogram and convergence diagnostics on small inputs.

use recbreak::diagnostics::{auc, brier, dic, pit_histogram, pit_steps, psrf};
use recbreak::rng::seeded;
use rand::Rng;

fn main() -> recbreak::Result<()> {
    let p = [0.1, 0.4, 0.35, 0.8, 0.7];
    let y = [0, 0, 1, 1, 1];
    println!("Brier {:.4}  AUC {:.4}", brier(&p, &y)?, auc(&p, &y)?);
    let draws = vec![p.to_vec(), vec![0.15, 0.35, 0.4, 0.75, 0.65]];
    let d = dic(&draws, &y)?;
    println!("DIC {:.3} = D(theta_hat) {:.3} + 2 p_D {:.3}", d.dic, d.d_hat, 2.0 * d.p_d);

    let mut rng = seeded(2);
    let steps: Vec<(f64, f64)> = (0..2000)
        .map(|_| {
            let q: f64 = rng.random();
            let sample: Vec<f64> = (0..100).map(|_| (rng.random::<f64>() < q) as u8 as f64).collect();
            pit_steps(&sample, (rng.random::<f64>() < q) as u8 as f64)
        })
        .collect::<recbreak::Result<_>>()?;
    println!("PIT masses {:?}", pit_histogram(&steps)?.iter().map(|m| format!("{m:.3}")).collect::<Vec<_>>());

    let mixed: Vec<Vec<f64>> = (0..2).map(|_| (0..500).map(|_| rng.random()).collect()).collect();
    let apart: Vec<Vec<f64>> = (0..2).map(|c| (0..500).map(|_| c as f64 + rng.random::<f64>()).collect()).collect();
    println!("PSRF mixed {:.3}, separated {:.3}", psrf(&mixed)?, psrf(&apart)?);
    Ok(())
}
