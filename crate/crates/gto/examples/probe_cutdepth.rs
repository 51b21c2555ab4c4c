// Scratch probe: where the cut survives along the coding ladder.
use gto::entropy::{dequantize, quantize};
use gto::graph::{eigendecompose, gft, igft, Geometry};
use gto::learn::{learn_weights, LearnParams};

fn stats(tag: &str, geo: &Geometry, w: &[f64], u: &[f64], q: f64, cut_edges: &[usize]) {
    let spec = eigendecompose(&geo.grid.laplacian(w).unwrap()).unwrap();
    let u_hat = gft(&spec, u).unwrap();
    let qu = quantize(&u_hat, q).unwrap();
    let u_deq = dequantize(&qu);
    let d: f64 = u_hat.iter().zip(&u_deq).map(|(a, b)| (a - b) * (a - b)).sum();
    let nz = qu.indices.iter().filter(|&&k| k != 0).count();
    let last = qu.indices.iter().rposition(|&k| k != 0).map_or(0, |p| p + 1);
    let cuts: Vec<f64> = cut_edges.iter().map(|&e| w[e]).collect();
    let cmin = cuts.iter().cloned().fold(f64::INFINITY, f64::min);
    let cmax = cuts.iter().cloned().fold(0.0, f64::max);
    println!("{tag:<26} D={d:>7.1} u_nz={nz:>3} u_last={last:>3} cut_w=[{cmin:.4},{cmax:.4}]");
}

fn main() {
    let side = 16usize;
    let u: Vec<f64> = (0..256).map(|i| if i % 16 >= 8 { 255.0 } else { 0.0 }).collect();
    let q = 10.0;
    let geo = Geometry::shared(side).unwrap();
    let m = geo.grid.edge_count();

    // Edges whose endpoints straddle the step (column 7 to column 8).
    let cut_edges: Vec<usize> = (0..m)
        .filter(|&e| {
            let (a, b) = geo.grid.edges()[e];
            let (ca, cb) = (a % side, b % side);
            ca.min(cb) == 7 && ca.max(cb) == 8
        })
        .collect();
    println!("{} crossing edges", cut_edges.len());

    let uniform = vec![1.0; m];
    stats("uniform", &geo, &uniform, &u, q, &cut_edges);

    let mut ideal = vec![1.0; m];
    for &e in &cut_edges {
        ideal[e] = 1e-4;
    }
    stats("ideal cut (no coding)", &geo, &ideal, &u, q, &cut_edges);

    // Ideal cut pushed through truncation at m_tilde, no quantization.
    for m_tilde in [64usize, 256] {
        let w_hat = gft(&geo.dual_spectrum, &ideal).unwrap();
        let mut padded = w_hat[..m_tilde].to_vec();
        padded.resize(m, 0.0);
        let w_rec = igft(&geo.dual_spectrum, &padded).unwrap();
        let w_t: Vec<f64> = w_rec.iter().map(|v| v.clamp(1e-4, 1.0)).collect();
        stats(&format!("ideal cut, trunc {m_tilde}"), &geo, &w_t, &u, q, &cut_edges);
    }

    // Learned weights, unit peak, truncation only (no quantization).
    let params = LearnParams::new(400.0, 1.0);
    let res = learn_weights(&geo.grid, &geo.dual_spectrum, &u, &params).unwrap();
    let peak = res.weights.iter().cloned().fold(0.0, f64::max);
    let w_unit: Vec<f64> = res.weights.iter().map(|v| v / peak).collect();
    stats("learned, exact", &geo, &w_unit, &u, q, &cut_edges);
    let w_hat = gft(&geo.dual_spectrum, &w_unit).unwrap();
    let mut padded = w_hat[..256].to_vec();
    padded.resize(m, 0.0);
    let w_rec = igft(&geo.dual_spectrum, &padded).unwrap();
    let w_t: Vec<f64> = w_rec.iter().map(|v| v.clamp(1e-4, 1.0)).collect();
    stats("learned, trunc 256", &geo, &w_t, &u, q, &cut_edges);
}
