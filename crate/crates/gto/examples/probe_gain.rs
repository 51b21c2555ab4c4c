// Scratch probe: affine dip amplification of the learned weight signal.
use gto::entropy::{dequantize, quantize};
use gto::graph::{eigendecompose, gft, igft, Geometry};
use gto::learn::{learn_weights, LearnParams};

fn main() {
    let side = 16usize;
    let u: Vec<f64> = (0..256).map(|i| if i % 16 >= 8 { 255.0 } else { 0.0 }).collect();
    let q = 10.0;
    let geo = Geometry::shared(side).unwrap();
    let m = geo.grid.edge_count();
    let cut_edges: Vec<usize> = (0..m)
        .filter(|&e| {
            let (a, b) = geo.grid.edges()[e];
            (a % side).min(b % side) == 7 && (a % side).max(b % side) == 8
        })
        .collect();

    let params = LearnParams::new(400.0, 1.0);
    let res = learn_weights(&geo.grid, &geo.dual_spectrum, &u, &params).unwrap();
    let peak = res.weights.iter().cloned().fold(0.0, f64::max);
    let w_unit: Vec<f64> = res.weights.iter().map(|v| v / peak).collect();

    for g in [1.0f64, 1.3, 1.6, 2.0, 3.0] {
        let w_code: Vec<f64> = w_unit.iter().map(|&v| 1.0 + g * (v - 1.0)).collect();
        for delta in [0.04, 0.12, 0.2, 0.35, 0.6] {
            let w_hat = gft(&geo.dual_spectrum, &w_code).unwrap();
            let qw = quantize(&w_hat[..256], delta).unwrap();
            let w_nz = qw.indices.iter().filter(|&&x| x != 0).count();
            let w_last = qw.indices.iter().rposition(|&x| x != 0).map_or(0, |p| p + 1);
            let mut padded = dequantize(&qw);
            padded.resize(m, 0.0);
            let w_rec = igft(&geo.dual_spectrum, &padded).unwrap();
            let w_t: Vec<f64> = w_rec.iter().map(|v| v.clamp(1e-4, 1.0)).collect();
            let spec = eigendecompose(&geo.grid.laplacian(&w_t).unwrap()).unwrap();
            let u_hat = gft(&spec, &u).unwrap();
            let qu = quantize(&u_hat, q).unwrap();
            let u_deq = dequantize(&qu);
            let d: f64 = u_hat.iter().zip(&u_deq).map(|(a, b)| (a - b) * (a - b)).sum();
            let u_nz = qu.indices.iter().filter(|&&x| x != 0).count();
            let u_last = qu.indices.iter().rposition(|&x| x != 0).map_or(0, |p| p + 1);
            let cmax = cut_edges.iter().map(|&e| w_t[e]).fold(0.0f64, f64::max);
            let frag = (0..m)
                .filter(|e| !cut_edges.contains(e))
                .filter(|&e| w_t[e] < 0.01)
                .count();
            println!(
                "g={g:<3} delta={delta:<4} D={d:>7.1} u_nz={u_nz:>3} u_last={u_last:>3} w_nz={w_nz:>3} w_last={w_last:>3} cut_max={cmax:.4} bg_floor={frag}"
            );
        }
    }
}
