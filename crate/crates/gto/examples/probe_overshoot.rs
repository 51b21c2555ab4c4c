// Scratch probe: cut-preserving encodings of the weight signal.
use gto::entropy::{dequantize, quantize};
use gto::graph::{eigendecompose, gft, igft, Geometry};
use gto::learn::{learn_weights, LearnParams};

fn through_codec(geo: &Geometry, w_code: &[f64], m_tilde: usize, delta: f64) -> Vec<f64> {
    let m = w_code.len();
    let w_hat = gft(&geo.dual_spectrum, w_code).unwrap();
    let qw = quantize(&w_hat[..m_tilde], delta).unwrap();
    let mut padded = dequantize(&qw);
    padded.resize(m, 0.0);
    let w_rec = igft(&geo.dual_spectrum, &padded).unwrap();
    w_rec.iter().map(|v| v.clamp(1e-4, 1.0)).collect()
}

fn wnz(geo: &Geometry, w_code: &[f64], m_tilde: usize, delta: f64) -> usize {
    let w_hat = gft(&geo.dual_spectrum, w_code).unwrap();
    let qw = quantize(&w_hat[..m_tilde], delta).unwrap();
    qw.indices.iter().filter(|&&k| k != 0).count()
}

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
    let bmin = (0..w.len())
        .filter(|e| !cut_edges.contains(e))
        .map(|e| w[e])
        .fold(f64::INFINITY, f64::min);
    println!(
        "{tag:<34} D={d:>7.1} u_nz={nz:>3} u_last={last:>3} cut=[{cmin:.4},{cmax:.4}] bg_min={bmin:.3}"
    );
}

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

    for k in [0.0, 1.0, 2.0, 4.0] {
        let w_code: Vec<f64> =
            w_unit.iter().map(|&v| if v < 0.5 { -k } else { v }).collect();
        for delta in [0.04, 0.12, 0.35, 0.6] {
            let w_t = through_codec(&geo, &w_code, 256, delta);
            let nz = wnz(&geo, &w_code, 256, delta);
            stats(
                &format!("overshoot k={k} delta={delta} w_nz={nz}"),
                &geo,
                &w_t,
                &u,
                q,
                &cut_edges,
            );
        }
    }

    // Moat: min over the closed dual neighborhood, no overshoot.
    let mut moat = w_unit.clone();
    for &(a, b) in geo.dual.edges() {
        let lo = w_unit[a].min(w_unit[b]);
        moat[a] = moat[a].min(lo);
        moat[b] = moat[b].min(lo);
    }
    for delta in [0.04, 0.12, 0.35] {
        let w_t = through_codec(&geo, &moat, 256, delta);
        let nz = wnz(&geo, &moat, 256, delta);
        stats(&format!("moat delta={delta} w_nz={nz}"), &geo, &w_t, &u, q, &cut_edges);
    }
}
