//! Grid graphs, Laplacians, and the graph Fourier transform.
//!
//! A block of pixels is a signal on a 4-connected grid graph. The Laplacian
//! of that graph, `L = B diag(w) B^T` with `B` the oriented incidence matrix,
//! is symmetric positive semidefinite, so it diagonalizes as `L = Psi
//! Lambda Psi^T` with orthonormal `Psi`. The columns of `Psi` are the
//! transform basis: `gft` analyzes a signal into that basis and `igft`
//! resynthesizes it.
//!
//! Everything here is deterministic. Encoder and decoder both rebuild the
//! basis from decoded edge weights, so two runs over the same weights must
//! agree bit for bit. The eigendecomposition therefore runs sequentially and
//! its output is put into a canonical form: eigenvalues ascending, each
//! eigenvector's first significant entry positive, exact ties ordered by
//! column comparison.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Magnitude below which an eigenvector entry is ignored when fixing signs.
const SIGN_EPS: f64 = 1e-12;

/// 4-connected rectangular grid graph with a canonical edge enumeration:
/// all horizontal edges in row-major order, then all vertical edges in
/// row-major order. Each edge is stored `(i, j)` with `i < j`, which also
/// fixes the incidence orientation (+1 at `i`, -1 at `j`).
///
/// Blocks use the square `side x side` form; degenerate rectangles such as
/// `1 x 3` (a path) exist for solver fixtures and oracles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridGraph {
    rows: usize,
    cols: usize,
    edges: Vec<(usize, usize)>,
}

impl GridGraph {
    /// Builds the square `side x side` grid. `side` must be at least 1.
    pub fn new(side: usize) -> Result<Self> {
        Self::rect(side, side)
    }

    /// Builds a `rows x cols` grid. Both dimensions must be at least 1.
    pub fn rect(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter("grid dimensions must be >= 1".into()));
        }
        let at = |r: usize, c: usize| r * cols + c;
        let mut edges = Vec::with_capacity(rows * (cols - 1) + (rows - 1) * cols);
        for r in 0..rows {
            for c in 0..cols - 1 {
                edges.push((at(r, c), at(r, c + 1)));
            }
        }
        for r in 0..rows - 1 {
            for c in 0..cols {
                edges.push((at(r, c), at(r + 1, c)));
            }
        }
        Ok(Self { rows, cols, edges })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of nodes `N = rows * cols`.
    pub fn node_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Number of edges; `2 side (side - 1)` for a square grid.
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in canonical order, each as `(i, j)` with `i < j`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Oriented incidence matrix `B` (`N x M`), +1 at the lower-indexed
    /// endpoint of each edge. Used by tests and oracles; the Laplacian
    /// is assembled directly.
    pub fn incidence(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.node_count(), self.edge_count());
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            b[(i, e)] = 1.0;
            b[(j, e)] = -1.0;
        }
        b
    }

    /// Laplacian `L = B diag(w) B^T` for nonnegative edge weights.
    pub fn laplacian(&self, w: &[f64]) -> Result<DMatrix<f64>> {
        if w.len() != self.edge_count() {
            return Err(Error::Dimension(format!(
                "weight vector has {} entries, grid has {} edges",
                w.len(),
                self.edge_count()
            )));
        }
        if let Some(bad) = w.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::Domain(format!("edge weight {bad} is not a finite nonnegative number")));
        }
        let n = self.node_count();
        let mut l = DMatrix::zeros(n, n);
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            let we = w[e];
            l[(i, i)] += we;
            l[(j, j)] += we;
            l[(i, j)] -= we;
            l[(j, i)] -= we;
        }
        Ok(l)
    }

    /// Smoothness (Dirichlet energy) `x^T L x = sum_e w_e (x_i - x_j)^2`,
    /// evaluated in the edge-sum form.
    pub fn smoothness(&self, w: &[f64], x: &[f64]) -> Result<f64> {
        if w.len() != self.edge_count() {
            return Err(Error::Dimension(format!(
                "weight vector has {} entries, grid has {} edges",
                w.len(),
                self.edge_count()
            )));
        }
        if x.len() != self.node_count() {
            return Err(Error::Dimension(format!(
                "signal has {} entries, grid has {} nodes",
                x.len(),
                self.node_count()
            )));
        }
        Ok(self
            .edges
            .iter()
            .enumerate()
            .map(|(e, &(i, j))| {
                let d = x[i] - x[j];
                w[e] * d * d
            })
            .sum())
    }

    /// Squared pixel differences `c_e = (x_i - x_j)^2` per edge, the data
    /// term of the weight-learning objective.
    pub fn edge_costs(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.node_count() {
            return Err(Error::Dimension(format!(
                "signal has {} entries, grid has {} nodes",
                x.len(),
                self.node_count()
            )));
        }
        Ok(self
            .edges
            .iter()
            .map(|&(i, j)| {
                let d = x[i] - x[j];
                d * d
            })
            .collect())
    }
}

/// Dual graph of a grid: one node per primal edge, adjacent iff the primal
/// edges share exactly one endpoint. Unweighted; its topology (and spectrum)
/// depend only on the grid shape.
#[derive(Debug, Clone)]
pub struct DualGraph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
}

impl DualGraph {
    /// Builds the dual of `g`. Two distinct grid edges never share both
    /// endpoints, so adjacency is co-incidence at a node: for every grid
    /// node, all pairs of its incident edges are adjacent in the dual.
    pub fn new(g: &GridGraph) -> Self {
        let mut incident: Vec<Vec<usize>> = vec![Vec::new(); g.node_count()];
        for (e, &(i, j)) in g.edges().iter().enumerate() {
            incident[i].push(e);
            incident[j].push(e);
        }
        let mut edges = Vec::new();
        for list in &incident {
            for a in 0..list.len() {
                for b in a + 1..list.len() {
                    let (x, y) = (list[a].min(list[b]), list[a].max(list[b]));
                    edges.push((x, y));
                }
            }
        }
        edges.sort_unstable();
        Self { node_count: g.edge_count(), edges }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Degree of each dual node.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.node_count];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    /// Unweighted Laplacian `L_d = D - A` of the dual graph.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.node_count;
        let mut l = DMatrix::zeros(n, n);
        for &(i, j) in &self.edges {
            l[(i, i)] += 1.0;
            l[(j, j)] += 1.0;
            l[(i, j)] -= 1.0;
            l[(j, i)] -= 1.0;
        }
        l
    }
}

/// Eigendecomposition of a symmetric matrix in canonical form: eigenvalues
/// ascending, basis columns orthonormal, each column's first entry with
/// magnitude above 1e-12 made positive.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: DVector<f64>,
    /// Columns are eigenvectors: `basis[(i, l)]` is entry `i` of eigenvector `l`.
    pub basis: DMatrix<f64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.len() == 0
    }
}

/// Flips `col` if its first significant entry is negative.
fn fix_sign(col: &mut [f64]) {
    for &v in col.iter() {
        if v.abs() > SIGN_EPS {
            if v < 0.0 {
                for x in col.iter_mut() {
                    *x = -*x;
                }
            }
            return;
        }
    }
}

/// Orders two sign-fixed columns with equal eigenvalues: the column that is
/// larger at the first differing entry sorts first. Since sign fixing makes
/// first significant entries positive, this puts `e_0` before `e_1`, so the
/// zero matrix decomposes to the identity basis.
fn tie_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match y.partial_cmp(x) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(ord) => return ord,
        }
    }
    std::cmp::Ordering::Equal
}

/// Maximum QR iterations before `eigendecompose` reports failure.
const EIGEN_MAX_ITER: usize = 4096;

/// Symmetric eigendecomposition with deterministic output conventions.
///
/// The input must be symmetric to within `1e-9 * (1 + max |entry|)`; it is
/// exactly symmetrized before factorization so equal inputs can never
/// diverge. Sequential tridiagonalization + implicit QR; identical inputs on
/// identical builds produce bit-identical spectra, which is what lets the
/// decoder rebuild the encoder's basis from decoded weights.
pub fn eigendecompose(l: &DMatrix<f64>) -> Result<Spectrum> {
    let (rows, cols) = l.shape();
    if rows != cols {
        return Err(Error::Dimension(format!("matrix is {rows}x{cols}, expected square")));
    }
    let scale = l.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let mut sym = DMatrix::zeros(rows, rows);
    for i in 0..rows {
        for j in i..rows {
            let a = l[(i, j)];
            let b = l[(j, i)];
            if (a - b).abs() > 1e-9 * (1.0 + scale) {
                return Err(Error::Domain(format!(
                    "matrix is not symmetric: entries ({i},{j}) = {a} and ({j},{i}) = {b}"
                )));
            }
            let v = 0.5 * (a + b);
            sym[(i, j)] = v;
            sym[(j, i)] = v;
        }
    }

    let se = nalgebra::SymmetricEigen::try_new(sym, f64::EPSILON, EIGEN_MAX_ITER).ok_or_else(|| {
        Error::Numerical(format!("eigendecomposition did not converge within {EIGEN_MAX_ITER} iterations"))
    })?;

    let n = rows;
    let mut cols_fixed: Vec<Vec<f64>> =
        (0..n).map(|c| se.eigenvectors.column(c).iter().copied().collect()).collect();
    for col in &mut cols_fixed {
        fix_sign(col);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        se.eigenvalues[a]
            .partial_cmp(&se.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| tie_cmp(&cols_fixed[a], &cols_fixed[b]))
    });

    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| se.eigenvalues[i]));
    let mut basis = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            basis[(r, dst)] = cols_fixed[src][r];
        }
    }
    Ok(Spectrum { eigenvalues, basis })
}

/// Forward transform `x_hat = Psi^T x`.
pub fn gft(s: &Spectrum, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != s.len() {
        return Err(Error::Dimension(format!(
            "signal has {} entries, basis is {}-dimensional",
            x.len(),
            s.len()
        )));
    }
    let xv = DVector::from_column_slice(x);
    Ok(s.basis.tr_mul(&xv).iter().copied().collect())
}

/// Inverse transform `x = Psi x_hat`.
pub fn igft(s: &Spectrum, xhat: &[f64]) -> Result<Vec<f64>> {
    if xhat.len() != s.len() {
        return Err(Error::Dimension(format!(
            "coefficient vector has {} entries, basis is {}-dimensional",
            xhat.len(),
            s.len()
        )));
    }
    let xv = DVector::from_column_slice(xhat);
    Ok((&s.basis * xv).iter().copied().collect())
}

/// Everything that depends only on the block side: the grid, its dual, the
/// dual spectrum (used to compress edge weights), and the spectrum of the
/// uniform-weight grid (reused analytically whenever a decoded weight vector
/// is uniform, and as the transform model for DCT-coded blocks).
#[derive(Debug)]
pub struct Geometry {
    pub grid: GridGraph,
    pub dual: DualGraph,
    pub dual_spectrum: Spectrum,
    pub uniform_spectrum: Spectrum,
}

impl Geometry {
    pub fn new(side: usize) -> Result<Self> {
        let grid = GridGraph::new(side)?;
        let dual = DualGraph::new(&grid);
        let dual_spectrum = eigendecompose(&dual.laplacian())?;
        let uniform = grid.laplacian(&vec![1.0; grid.edge_count()])?;
        let uniform_spectrum = eigendecompose(&uniform)?;
        Ok(Self { grid, dual, dual_spectrum, uniform_spectrum })
    }

    /// Shared, lazily built geometry per side. The spectra are computed once
    /// per process and reused by every block of every image.
    pub fn shared(side: usize) -> Result<Arc<Geometry>> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Geometry>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(g) = cache.lock().unwrap().get(&side) {
            return Ok(g.clone());
        }
        // Built outside the lock: a 480-node dual spectrum takes a moment and
        // other sides should not wait on it. Concurrent builds are identical;
        // the first insert wins.
        let built = Arc::new(Geometry::new(side)?);
        let mut map = cache.lock().unwrap();
        Ok(map.entry(side).or_insert(built).clone())
    }
}
