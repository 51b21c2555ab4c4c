// Scratch probe: exact cold-start syntax costs for step-block candidates.
use gto::entropy::{
    dequantize, encode_lastpos_bitplane, encode_sigmap, quantize, BitplaneContexts, Prob,
    RangeEncoder, SigmapContexts,
};
use gto::graph::{eigendecompose, gft, igft, Geometry};
use gto::learn::{learn_weights, LearnParams};

fn gft_bits(w_idx: &[i64], u_idx: &[i64]) -> f64 {
    let mut e = RangeEncoder::new();
    let mut flag = Prob::default();
    let mut ws = SigmapContexts::default();
    let mut ub = BitplaneContexts::default();
    e.encode_bit(&mut flag, true);
    e.encode_bypass_bits(0, 3);
    encode_sigmap(&mut e, &mut ws, w_idx).unwrap();
    encode_lastpos_bitplane(&mut e, &mut ub, u_idx).unwrap();
    8.0 * e.finish().len() as f64
}

fn dct_bits(u_idx: &[i64]) -> f64 {
    let mut e = RangeEncoder::new();
    let mut flag = Prob::default();
    let mut ub = BitplaneContexts::default();
    e.encode_bit(&mut flag, false);
    encode_lastpos_bitplane(&mut e, &mut ub, u_idx).unwrap();
    8.0 * e.finish().len() as f64
}

fn main() {
    let side = 16usize;
    let u: Vec<f64> = (0..256).map(|i| if i % 16 >= 8 { 255.0 } else { 0.0 }).collect();
    let q = 10.0;
    let gamma = 0.85 / 12.0 * q * q;
    let geo = Geometry::shared(side).unwrap();
    let m = geo.grid.edge_count();

    let y = gto::dct::dct2_forward(&u, side).unwrap();
    let zz = gto::dct::zigzag_order(side);
    let y_scan: Vec<f64> = zz.iter().map(|&i| y[i]).collect();
    let qy = quantize(&y_scan, q).unwrap();
    let y_deq = dequantize(&qy);
    let d_dct: f64 = y_scan.iter().zip(&y_deq).map(|(a, b)| (a - b) * (a - b)).sum();
    let b_dct = dct_bits(&qy.indices);
    println!("DCT   D={d_dct:>6.1} bits={b_dct:>5.0} cost={:>7.0}", d_dct + gamma * b_dct);

    let params = LearnParams::new(400.0, 1.0);
    let res = learn_weights(&geo.grid, &geo.dual_spectrum, &u, &params).unwrap();
    let peak = res.weights.iter().cloned().fold(0.0, f64::max);

    for g in [1.3f64, 1.6, 2.0] {
        let w_code: Vec<f64> =
            res.weights.iter().map(|&v| 1.0 + g * (v / peak - 1.0)).collect();
        let w_hat = gft(&geo.dual_spectrum, &w_code).unwrap();
        for delta in [0.04f64, 0.12, 0.2, 0.35, 0.6] {
            let qw = quantize(&w_hat[..256], delta).unwrap();
            let mut padded = dequantize(&qw);
            padded.resize(m, 0.0);
            let w_rec = igft(&geo.dual_spectrum, &padded).unwrap();
            let w_t: Vec<f64> = w_rec.iter().map(|v| v.clamp(1e-4, 1.0)).collect();
            let spec = eigendecompose(&geo.grid.laplacian(&w_t).unwrap()).unwrap();
            let u_hat = gft(&spec, &u).unwrap();
            let qu = quantize(&u_hat, q).unwrap();
            let u_deq = dequantize(&qu);
            let d: f64 = u_hat.iter().zip(&u_deq).map(|(a, b)| (a - b) * (a - b)).sum();
            let bits = gft_bits(&qw.indices, &qu.indices);
            println!(
                "g={g:<3} delta={delta:<4} D={d:>6.1} bits={bits:>5.0} cost={:>7.0}",
                d + gamma * bits
            );
        }
    }
}
