// Scratch probe: per-component syntax costs, each from a fresh coder.
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
    println!("DCT u payload: {:>5.0} bits (bitplane)", bitplane_cost(&qy.indices));

    let params = LearnParams::new(400.0, 1.0);
    let res = learn_weights(&geo.grid, &geo.dual_spectrum, &u, &params).unwrap();
    let peak = res.weights.iter().cloned().fold(0.0, f64::max);
    let g = 1.3f64;
    let w_code: Vec<f64> = res.weights.iter().map(|&v| 1.0 + g * (v / peak - 1.0)).collect();
    let w_hat = gft(&geo.dual_spectrum, &w_code).unwrap();
    for delta in [0.2f64, 0.35, 0.6, 1.0] {
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
        let w_bits = sigmap_cost(&qw.indices);
        let wb_alt = bitplane_cost(&qw.indices);
        let u_bits = bitplane_cost(&qu.indices);
        let nz = qw.indices.iter().filter(|&&x| x != 0).count();
        println!(
            "delta={delta:<4} D={d:>6.1} w_sigmap={w_bits:>4.0} w_bitplane={wb_alt:>4.0} u_bitplane={u_bits:>4.0} w_nz={nz}"
        );
    }
}
