// Scratch probe: gain x step sweep on the 0|255 step block, net bits vs DCT.
use gto::entropy::{
    dequantize, encode_lastpos_bitplane, encode_sigmap, quantize, BitplaneContexts, RangeEncoder,
    SigmapContexts,
};
use gto::graph::{eigendecompose, gft, igft, Geometry};
use gto::learn::{learn_weights, LearnParams};

fn sigmap_cost(idx: &[i64]) -> f64 {
    let mut e = RangeEncoder::new();
    let mut cx = SigmapContexts::default();
    encode_sigmap(&mut e, &mut cx, idx).unwrap();
    8.0 * e.finish().len() as f64 - 40.0
}

fn bitplane_cost(idx: &[i64]) -> f64 {
    let mut e = RangeEncoder::new();
    let mut cx = BitplaneContexts::default();
    encode_lastpos_bitplane(&mut e, &mut cx, idx).unwrap();
    8.0 * e.finish().len() as f64 - 40.0
}

fn main() {
    let side = 16usize;
    let u: Vec<f64> = (0..256).map(|i| if i % 16 >= 8 { 255.0 } else { 0.0 }).collect();
    let q = 10.0;
    let geo = Geometry::shared(side).unwrap();
    let m = geo.grid.edge_count();

    let y = gto::dct::dct2_forward(&u, side).unwrap();
    let zz = gto::dct::zigzag_order(side);
    let y_scan: Vec<f64> = zz.iter().map(|&i| y[i]).collect();
    let qy = quantize(&y_scan, q).unwrap();
    let dct_deq = dequantize(&qy);
    let dct_d: f64 = y_scan.iter().zip(&dct_deq).map(|(a, b)| (a - b) * (a - b)).sum();
    let dct_bits = bitplane_cost(&qy.indices);
    println!("DCT: D={dct_d:.1} net={dct_bits:.0} bits");

    let cut: Vec<usize> = geo
        .grid
        .edges()
        .iter()
        .enumerate()
        .filter(|(_, &(a, b))| (a % 16 < 8) != (b % 16 < 8))
        .map(|(e, _)| e)
        .collect();

    let params = LearnParams::new(400.0, 1.0);
    let res = learn_weights(&geo.grid, &geo.dual_spectrum, &u, &params).unwrap();
    let peak = res.weights.iter().cloned().fold(0.0, f64::max);
    for g in [1.6f64] {
        let w_code: Vec<f64> = res.weights.iter().map(|&v| 1.0 + g * (v / peak - 1.0)).collect();
        let w_hat = gft(&geo.dual_spectrum, &w_code).unwrap();
        for (delta, prune) in
            [(0.6f64, false), (0.6, true), (1.0, false), (1.0, true), (1.4, false), (1.4, true)]
        {
            let mut qw = quantize(&w_hat[..256], delta).unwrap();
            if prune {
                for i in 1..qw.indices.len() {
                    if qw.indices[i].abs() == 1 {
                        qw.indices[i] = 0;
                    }
                }
            }
            let mut padded = dequantize(&qw);
            padded.resize(m, 0.0);
            let w_rec = igft(&geo.dual_spectrum, &padded).unwrap();
            let w_t: Vec<f64> = w_rec.iter().map(|v| v.clamp(1e-4, 1.0)).collect();
            let spec = eigendecompose(&geo.grid.laplacian(&w_t).unwrap()).unwrap();
            let u_hat = gft(&spec, &u).unwrap();
            let qu = quantize(&u_hat, q).unwrap();
            let u_deq = dequantize(&qu);
            let d: f64 = u_hat.iter().zip(&u_deq).map(|(a, b)| (a - b) * (a - b)).sum();
            let w_bits = sigmap_cost(&qw.indices);
            let u_bits = bitplane_cost(&qu.indices);
            let w_nz = qw.indices.iter().filter(|&&x| x != 0).count();
            let u_nz = qu.indices.iter().filter(|&&x| x != 0).count();
            // Cut integrity: worst surviving cut weight, worst background dip.
            let cut_max = cut.iter().map(|&e| w_t[e]).fold(0.0f64, f64::max);
            let bg_min = (0..m)
                .filter(|e| !cut.contains(e))
                .map(|e| w_t[e])
                .fold(f64::INFINITY, f64::min);
            let total = 4.0 + w_bits + u_bits;
            let mark = if total < dct_bits && d < dct_d { " <== WIN" } else { "" };
            println!(
                "g={g:<3} delta={delta:<4} D={d:>6.1} w_sig={w_bits:>4.0} u={u_bits:>4.0} \
                 tot={total:>4.0} w_nz={w_nz:>2} u_nz={u_nz:>2} cutmax={cut_max:.4} bgmin={bg_min:.4}{mark}"
            );
        }
    }
}
