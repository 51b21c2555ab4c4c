// Scratch probe: per-candidate RD numbers for a depth step block.
use gto::entropy::{dequantize, quantize};
use gto::graph::{eigendecompose, gft, igft, Geometry};
use gto::learn::{classify_block, default_params, learn_weights, Mode, Thresholds};

fn main() {
    let side = 16usize;
    let u: Vec<f64> = (0..256).map(|i| if i % 16 >= 8 { 255.0 } else { 0.0 }).collect();
    let q = 10.0f64;
    let geo = Geometry::shared(side).unwrap();
    let class = classify_block(&u, side, Mode::Depth, &Thresholds::default()).unwrap();
    println!("class = {class}");
    let params = default_params(Mode::Depth, class).unwrap();
    let res = learn_weights(&geo.grid, &geo.dual_spectrum, &u, &params).unwrap();
    println!("converged={} iters={}", res.converged, res.iterations);
    let w = &res.weights;
    let cut: Vec<f64> = w.iter().cloned().filter(|&v| v < 0.01).collect();
    println!(
        "w: min={:.2e} max={:.4} below 0.01: {} values",
        w.iter().cloned().fold(f64::INFINITY, f64::min),
        w.iter().cloned().fold(0.0, f64::max),
        cut.len()
    );
    let peak = w.iter().cloned().fold(0.0, f64::max);
    let w_unit: Vec<f64> = w.iter().map(|v| v / peak).collect();
    let w_hat = gft(&geo.dual_spectrum, &w_unit).unwrap();
    let m = w_hat.len();
    let m_tilde = 256.min(m);
    println!("m={m} m_tilde={m_tilde}");
    let tail_energy: f64 = w_hat[m_tilde..].iter().map(|v| v * v).sum();
    let total_energy: f64 = w_hat.iter().map(|v| v * v).sum();
    println!("dual spectrum tail energy fraction = {:.4}", tail_energy / total_energy);

    // DCT numbers
    let y = gto::dct::dct2_forward(&u, side).unwrap();
    let zz = gto::dct::zigzag_order(side);
    let y_scan: Vec<f64> = zz.iter().map(|&i| y[i]).collect();
    let qy = quantize(&y_scan, q).unwrap();
    let y_deq = dequantize(&qy);
    let d_dct: f64 = y_scan.iter().zip(&y_deq).map(|(a, b)| (a - b) * (a - b)).sum();
    let nz_dct = qy.indices.iter().filter(|&&k| k != 0).count();
    let last_dct = qy.indices.iter().rposition(|&k| k != 0).map_or(0, |p| p + 1);
    println!("DCT: D={d_dct:.1} nonzeros={nz_dct} lastpos={last_dct}");

    let gamma = 0.85 / 12.0 * q * q;
    println!("gamma = {gamma:.3}");

    for &delta in &[0.01, 0.02, 0.04, 0.08, 0.12, 0.2, 0.35, 0.6] {
        let qw = quantize(&w_hat[..m_tilde], delta).unwrap();
        let mut padded = dequantize(&qw);
        padded.resize(m, 0.0);
        let w_full = igft(&geo.dual_spectrum, &padded).unwrap();
        let w_t: Vec<f64> = w_full.iter().map(|v| v.clamp(1e-4, 1.0)).collect();
        let cut_rec = w_t.iter().filter(|&&v| v < 0.01).count();
        let spec = eigendecompose(&geo.grid.laplacian(&w_t).unwrap()).unwrap();
        let u_hat = gft(&spec, &u).unwrap();
        let qu = quantize(&u_hat, q).unwrap();
        let u_deq = dequantize(&qu);
        let d: f64 = u_hat.iter().zip(&u_deq).map(|(a, b)| (a - b) * (a - b)).sum();
        let nz_w = qw.indices.iter().filter(|&&k| k != 0).count();
        let nz_u = qu.indices.iter().filter(|&&k| k != 0).count();
        let last_u = qu.indices.iter().rposition(|&k| k != 0).map_or(0, |p| p + 1);
        let last_w = qw.indices.iter().rposition(|&k| k != 0).map_or(0, |p| p + 1);
        println!(
            "delta={delta:<5} D={d:>8.1} w_nz={nz_w:>3} w_last={last_w:>3} u_nz={nz_u:>3} u_last={last_u:>3} w_cut_rec={cut_rec:>2} w_rec_min={:.3}",
            w_full.iter().cloned().fold(f64::INFINITY, f64::min)
        );
    }
}
