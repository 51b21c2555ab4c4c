//! Learn edge weights for one image block and inspect the transform they
//! induce.
//!
//! Usage: cargo run --release --example learn_block

use gto::graph::{eigendecompose, gft, igft};
use gto::{classify_block, default_params, learn_weights, Geometry, Mode, Thresholds};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let side = 16usize;

    // Piecewise-smooth content: a gentle ramp with a 60-level vertical step
    // through the middle. The step is what a fixed transform struggles with
    // and what a learned graph can absorb by weakening the edges across it.
    let mut u = vec![0.0f64; side * side];
    for r in 0..side {
        for c in 0..side {
            let ramp = 80.0 + 2.0 * r as f64 + c as f64;
            let step = if c >= side / 2 { 60.0 } else { 0.0 };
            u[r * side + c] = ramp + step;
        }
    }

    let geo = Geometry::shared(side)?;
    let class = classify_block(&u, side, Mode::Natural, &Thresholds::default())?;
    let params = default_params(Mode::Natural, class)?;
    println!(
        "block class {class}: alpha = {}, beta = {}",
        params.alpha, params.beta
    );

    let res = learn_weights(&geo.grid, &geo.dual_spectrum, &u, &params)?;
    println!(
        "learned {} weights in {} iterations (converged = {}, residual = {:.2e})",
        res.weights.len(),
        res.iterations,
        res.converged,
        res.residual
    );
    let weak = res.weights.iter().filter(|w| **w < 0.99).count();
    println!("{weak} of {} weights pulled below 1", res.weights.len());

    // Energy compaction of the learned transform against the uniform grid,
    // measured on the AC coefficients (index 0 is the constant vector and
    // carries the block mean either way).
    let lap = geo.grid.laplacian(&res.weights)?;
    let spec = eigendecompose(&lap)?;
    let learned = gft(&spec, &u)?;
    let uniform = gft(&geo.uniform_spectrum, &u)?;
    let head32 = |xh: &[f64]| {
        let ac: f64 = xh[1..].iter().map(|v| v * v).sum();
        let lead: f64 = xh[1..33].iter().map(|v| v * v).sum();
        100.0 * lead / ac
    };
    println!(
        "AC energy in first 32 coefficients: learned {:.2}%, uniform grid {:.2}%",
        head32(&learned),
        head32(&uniform)
    );

    // The transform pair is exact: analysis then synthesis returns the block.
    let back = igft(&spec, &learned)?;
    let err = u
        .iter()
        .zip(&back)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("max round-trip error {err:.2e}");
    Ok(())
}
