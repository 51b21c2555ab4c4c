// Scratch probe: smoothed widened overshot dip as the coded weight signal.
use gto::entropy::{dequantize, quantize};
use gto::graph::{eigendecompose, gft, igft, Geometry};
use gto::learn::{learn_weights, LearnParams};

fn main() {
    let side = 16usize;
    let u: Vec<f64> = (0..256).map(|i| if i % 16 >= 8 { 255.0 } else { 0.0 }).collect();
    let q = 10.0;
    let geo = Geometry::shared(side).unwrap();
    let m = geo.grid.edge_count();

    let params = LearnParams::new(400.0, 1.0);
    let res = learn_weights(&geo.grid, &geo.dual_spectrum, &u, &params).unwrap();
    let peak = res.weights.iter().cloned().fold(0.0, f64::max);
    let w_unit: Vec<f64> = res.weights.iter().map(|v| v / peak).collect();

    // Dual adjacency lists.
    let mut nbrs = vec![Vec::new(); m];
    for &(a, b) in geo.dual.edges() {
        nbrs[a].push(b);
        nbrs[b].push(a);
    }

    let cut: Vec<bool> = w_unit.iter().map(|&v| v < 0.5).collect();
    for widen in [0usize, 1] {
        let mut chi: Vec<f64> = cut.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect();
        for _ in 0..widen {
            let prev = chi.clone();
            for e in 0..m {
                if nbrs[e].iter().any(|&n| prev[n] > 0.5) {
                    chi[e] = 1.0;
                }
            }
        }
        for smooth in [0usize, 1, 2] {
            let mut s = chi.clone();
            for _ in 0..smooth {
                let prev = s.clone();
                for e in 0..m {
                    let avg: f64 =
                        nbrs[e].iter().map(|&n| prev[n]).sum::<f64>() / nbrs[e].len() as f64;
                    s[e] = 0.5 * prev[e] + 0.5 * avg;
                }
            }
            for k in [1.0f64, 2.0] {
                let w_code: Vec<f64> = s.iter().map(|&x| 1.0 - (1.0 + k) * x).collect();
                for delta in [0.12, 0.2, 0.35, 0.6] {
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
                    let d: f64 =
                        u_hat.iter().zip(&u_deq).map(|(a, b)| (a - b) * (a - b)).sum();
                    let u_nz = qu.indices.iter().filter(|&&x| x != 0).count();
                    let u_last = qu.indices.iter().rposition(|&x| x != 0).map_or(0, |p| p + 1);
                    println!(
                        "widen={widen} smooth={smooth} k={k} delta={delta:<4} D={d:>7.1} u_nz={u_nz:>3} u_last={u_last:>3} w_nz={w_nz:>3} w_last={w_last:>3}"
                    );
                }
            }
        }
    }
}
