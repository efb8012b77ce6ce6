//! Covariate rows of the three blocks and the scaling used by the sampler.

use nalgebra::DMatrix;
use recbreak::design::{raw_row, Block, OrthoPolyBasis, ScalingSpec};

fn main() -> recbreak::Result<()> {
    let basis = OrthoPolyBasis::new(30)?;
    for (block, day) in [(Block::Day1, 1), (Block::Day2, 2), (Block::Main, 120)] {
        let row = raw_row(block, 10, day, 1.0, 0.0, 25.0, &basis)?;
        println!("{}:", block.label());
        for (name, v) in block.names().iter().zip(&row.0) {
            println!("  {name:18} {v:9.4}");
        }
    }
    let rows: Vec<Vec<f64>> = (2..=30).map(|t| raw_row(Block::Day1, t, 1, (t % 3 == 0) as u8 as f64, 0.0, 1.0, &basis).map(|r| r.0)).collect::<recbreak::Result<_>>()?;
    let x = DMatrix::from_fn(rows.len(), 3, |i, j| rows[i][j]);
    let sc = ScalingSpec::fit(&x)?;
    println!("day1 scaling: {sc:?}");
    Ok(())
}
