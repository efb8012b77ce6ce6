//! Building blocks of the Gibbs sampler: Kolmogorov-Smirnov and truncated
//! normal draws, and the adaptive random-walk update.

use recbreak::rng::seeded;
use recbreak::samplers::{adaptive_rw_step, sample_ks, sample_truncated_normal, AdaptiveRwState};
use recbreak::stats::mean;

fn main() -> recbreak::Result<()> {
    let mut rng = seeded(1);
    let n = 200_000;
    println!("KS mean {:.4} (0.8687)", mean((0..n).map(|_| sample_ks(&mut rng))));
    let tn: Vec<f64> = (0..n).map(|_| sample_truncated_normal(0.0, 1.0, 0.0, f64::INFINITY, &mut rng)).collect::<recbreak::Result<_>>()?;
    println!("half-normal mean {:.4} (0.7979)", mean(tn));

    // log-normal target for a positive parameter
    let mut state = AdaptiveRwState::new(1.0, 2.0);
    let log_target = |x: f64| Ok(-x.ln().powi(2) / 2.0 - x.ln());
    for i in 0..6000 {
        if i == 3000 {
            state.freeze();
        }
        adaptive_rw_step(&mut state, log_target, &mut rng)?;
    }
    println!("proposal sd {:.3}, acceptance after adaptation {:.2}", state.proposal_sd(), state.acceptance_rate());
    Ok(())
}
