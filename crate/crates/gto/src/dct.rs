//! Orthonormal 2-D type-II DCT on square blocks, plus the zigzag scan that
//! orders its coefficients by ascending diagonal frequency for entropy
//! coding.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Orthonormal 1-D DCT-II basis, rows indexed by frequency:
/// `C[k][n] = s(k) cos(pi (2n+1) k / (2 side))` with `s(0) = sqrt(1/side)`
/// and `s(k) = sqrt(2/side)` otherwise. `C C^T = I`.
fn basis(side: usize) -> Arc<DMatrix<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<DMatrix<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(c) = cache.lock().unwrap().get(&side) {
        return c.clone();
    }
    let n = side as f64;
    let built = Arc::new(DMatrix::from_fn(side, side, |k, j| {
        let s = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        s * (std::f64::consts::PI * (2.0 * j as f64 + 1.0) * k as f64 / (2.0 * n)).cos()
    }));
    let mut map = cache.lock().unwrap();
    map.entry(side).or_insert(built).clone()
}

fn check_block(x: &[f64], side: usize) -> Result<()> {
    if side == 0 || x.len() != side * side {
        return Err(Error::Dimension(format!(
            "block has {} entries, expected {side}x{side}",
            x.len()
        )));
    }
    Ok(())
}

/// Separable forward transform `Y = C X C^T`, row-major in and out.
pub fn dct2_forward(x: &[f64], side: usize) -> Result<Vec<f64>> {
    check_block(x, side)?;
    let c = basis(side);
    let xm = DMatrix::from_row_slice(side, side, x);
    let y = &*c * xm * c.transpose();
    Ok((0..side * side).map(|i| y[(i / side, i % side)]).collect())
}

/// Inverse transform `X = C^T Y C`; exact inverse of `dct2_forward` up to
/// rounding.
pub fn dct2_inverse(y: &[f64], side: usize) -> Result<Vec<f64>> {
    check_block(y, side)?;
    let c = basis(side);
    let ym = DMatrix::from_row_slice(side, side, y);
    let x = c.transpose() * ym * &*c;
    Ok((0..side * side).map(|i| x[(i / side, i % side)]).collect())
}

/// Scan order over a `side x side` coefficient grid by ascending diagonal,
/// alternating direction within each diagonal. Returns row-major indices;
/// the result is a permutation of `0..side*side` starting at DC.
pub fn zigzag_order(side: usize) -> Vec<usize> {
    let mut order = Vec::with_capacity(side * side);
    for d in 0..(2 * side).saturating_sub(1) {
        let lo = d.saturating_sub(side - 1);
        let hi = d.min(side - 1);
        if d % 2 == 1 {
            for i in lo..=hi {
                order.push(i * side + (d - i));
            }
        } else {
            for i in (lo..=hi).rev() {
                order.push(i * side + (d - i));
            }
        }
    }
    order
}
