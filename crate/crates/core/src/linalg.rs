//! Dense symmetric eigensolves and a sparse path for the lowest eigenpairs.
//!
//! The sparse path factorizes gasket-structured matrices by eliminating the
//! side midpoints of every cell level by level, finest first. Midpoints of
//! different cells never couple directly, so each level reduces to
//! independent 3×3 blocks and the Schur complement keeps the sparsity of the
//! coarser graph. The factorization drives shift-invert Lanczos.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;

use crate::error::{LabError, Result};
use crate::gasket::GasketGraph;
use crate::rng::{self, Tag};

/// Eigenvalues in ascending order with optional orthonormal eigenvectors
/// (columns, Euclidean gauge).
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Option<DMatrix<f64>>,
}

/// Dense symmetric eigensolve.
pub fn eigh(mat: DMatrix<f64>, with_vectors: bool) -> Result<Eigen> {
    if mat.nrows() != mat.ncols() {
        return Err(LabError::Solver("eigensolve needs a square matrix".into()));
    }
    if mat.nrows() == 0 {
        return Ok(Eigen { values: vec![], vectors: with_vectors.then(|| DMatrix::zeros(0, 0)) });
    }
    if !with_vectors {
        let mut values: Vec<f64> = mat.symmetric_eigenvalues().iter().copied().collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LabError::Solver("non-finite eigenvalue".into()));
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        return Ok(Eigen { values, vectors: None });
    }
    let eig = nalgebra::SymmetricEigen::new(mat);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(LabError::Solver("non-finite eigenvalue".into()));
    }
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(k));
    }
    Ok(Eigen { values, vectors: Some(vectors) })
}

/// `V f(Λ) Vᵀ` for a stored decomposition.
pub fn apply_function<F: Fn(f64) -> f64>(eig: &Eigen, f: F) -> Result<DMatrix<f64>> {
    let v = eig
        .vectors
        .as_ref()
        .ok_or_else(|| LabError::Solver("matrix function needs eigenvectors".into()))?;
    let mut scaled = v.clone();
    for (k, &lam) in eig.values.iter().enumerate() {
        let fk = f(lam);
        scaled.column_mut(k).scale_mut(fk);
    }
    Ok(&scaled * v.transpose())
}

/// Symmetric sparse matrix with explicit diagonal and off-diagonal pairs.
#[derive(Debug, Clone)]
pub struct SparseSym {
    diag: Vec<f64>,
    start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSym {
    /// Builds from the diagonal and upper or lower off-diagonal entries;
    /// repeated pairs are summed.
    pub fn new(diag: Vec<f64>, pairs: &[(usize, usize, f64)]) -> SparseSym {
        let n = diag.len();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in pairs {
            debug_assert!(i != j);
            rows[i].push((j, v));
            rows[j].push((i, v));
        }
        let mut start = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        start.push(0);
        for row in &mut rows {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for &(j, v) in row.iter() {
                if last == Some(j) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(j);
                    vals.push(v);
                    last = Some(j);
                }
            }
            start.push(cols.len());
        }
        SparseSym { diag, start, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.start[i]..self.start[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.dim() {
            let mut acc = self.diag[i] * x[i];
            for (j, v) in self.row(i) {
                acc += v * x[j];
            }
            y[i] = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Adds `v` to the diagonal.
    pub fn add_diag(&mut self, v: &[f64]) {
        for (d, x) in self.diag.iter_mut().zip(v) {
            *d += x;
        }
    }

    /// Replaces inactive rows and columns by the identity, decoupling them.
    pub fn deactivate(&mut self, active: &[bool]) {
        for i in 0..self.dim() {
            if !active[i] {
                self.diag[i] = 1.0;
            }
            for k in self.start[i]..self.start[i + 1] {
                if !active[i] || !active[self.cols[k]] {
                    self.vals[k] = 0.0;
                }
            }
        }
    }
}

struct CellBlock {
    mids: [usize; 3],
    corners: [usize; 3],
    binv: Matrix3<f64>,
    c: Matrix3<f64>,
}

/// Exact factorization of `A − σI` for a matrix whose off-diagonal pattern
/// is the gasket graph.
pub struct CellSolver {
    blocks: Vec<CellBlock>,
    top: [usize; 3],
    top_inv: Matrix3<f64>,
    dim: usize,
}

fn pair(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl CellSolver {
    pub fn new(g: &GasketGraph, a: &SparseSym, shift: f64) -> Result<CellSolver> {
        let nv = g.num_vertices();
        if a.dim() != nv {
            return Err(LabError::Config("matrix does not match the graph".into()));
        }
        let mut diag: Vec<f64> = a.diag().iter().map(|d| d - shift).collect();
        let mut off: HashMap<(usize, usize), f64> = HashMap::with_capacity(nv * 2);
        for i in 0..nv {
            for (j, v) in a.row(i) {
                if i < j {
                    *off.entry((i, j)).or_insert(0.0) += v;
                }
            }
        }
        let depth = g.m() + g.n();
        let mut blocks = Vec::with_capacity(nv);
        for level in 0..depth {
            let s = 1u64 << (level + 1);
            let h = s / 2;
            let start_cells = blocks.len();
            let cells = cell_corners_at(g, s)?;
            for (ll, corners) in cells {
                let mids = [
                    vertex(g, (ll.0 + h, ll.1))?,
                    vertex(g, (ll.0 + h, ll.1 + h))?,
                    vertex(g, (ll.0, ll.1 + h))?,
                ];
                let mut b = Matrix3::zeros();
                let mut c = Matrix3::zeros();
                for r in 0..3 {
                    b[(r, r)] = diag[mids[r]];
                    for q in 0..3 {
                        if q != r {
                            b[(r, q)] = off.get(&pair(mids[r], mids[q])).copied().unwrap_or(0.0);
                        }
                        c[(r, q)] = off.get(&pair(mids[r], corners[q])).copied().unwrap_or(0.0);
                    }
                }
                let binv = b
                    .try_inverse()
                    .ok_or_else(|| LabError::Solver("singular cell block in elimination".into()))?;
                let schur = c.transpose() * binv * c;
                for r in 0..3 {
                    diag[corners[r]] -= schur[(r, r)];
                    for q in (r + 1)..3 {
                        *off.entry(pair(corners[r], corners[q])).or_insert(0.0) -= schur[(r, q)];
                    }
                }
                blocks.push(CellBlock { mids, corners, binv, c });
            }
            debug_assert!(blocks.len() > start_cells);
        }
        let top = g.boundary();
        let mut t = Matrix3::zeros();
        for r in 0..3 {
            t[(r, r)] = diag[top[r]];
            for q in 0..3 {
                if q != r {
                    t[(r, q)] = off.get(&pair(top[r], top[q])).copied().unwrap_or(0.0);
                }
            }
        }
        let top_inv = t
            .try_inverse()
            .ok_or_else(|| LabError::Solver("singular corner block in elimination".into()))?;
        Ok(CellSolver { blocks, top, top_inv, dim: nv })
    }

    /// Solves `(A − σI) x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(b.len(), self.dim);
        let mut x = b.to_vec();
        for blk in &self.blocks {
            let bm = Vector3::new(x[blk.mids[0]], x[blk.mids[1]], x[blk.mids[2]]);
            let upd = blk.c.transpose() * (blk.binv * bm);
            for r in 0..3 {
                x[blk.corners[r]] -= upd[r];
            }
        }
        let bt = Vector3::new(x[self.top[0]], x[self.top[1]], x[self.top[2]]);
        let xt = self.top_inv * bt;
        for r in 0..3 {
            x[self.top[r]] = xt[r];
        }
        for blk in self.blocks.iter().rev() {
            let bm = Vector3::new(x[blk.mids[0]], x[blk.mids[1]], x[blk.mids[2]]);
            let xc = Vector3::new(x[blk.corners[0]], x[blk.corners[1]], x[blk.corners[2]]);
            let xm = blk.binv * (bm - blk.c * xc);
            for r in 0..3 {
                x[blk.mids[r]] = xm[r];
            }
        }
        x
    }
}

fn vertex(g: &GasketGraph, p: (u64, u64)) -> Result<usize> {
    g.vertex_at(p)
        .ok_or_else(|| LabError::Config(format!("lattice point {p:?} missing from graph")))
}

/// Gasket cells of side `s` lattice units with their corner vertex ids.
fn cell_corners_at(g: &GasketGraph, s: u64) -> Result<Vec<((u64, u64), [usize; 3])>> {
    let per_side = g.side_units() / s;
    let mut out = Vec::new();
    for ti in 0..per_side {
        for tj in 0..(per_side - ti) {
            if ti & tj != 0 {
                continue;
            }
            let ll = (ti * s, tj * s);
            let corners = [vertex(g, ll)?, vertex(g, (ll.0 + s, ll.1))?, vertex(g, (ll.0, ll.1 + s))?];
            out.push((ll, corners));
        }
    }
    Ok(out)
}

/// Lowest eigenpairs from shift-invert Lanczos.
#[derive(Debug, Clone)]
pub struct LowestPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    /// `‖A x − λ x‖` for each returned pair.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// Lowest `k` eigenpairs of `a` restricted to the active vertices, using the
/// cell solver at shift `sigma` (below the spectrum).
pub fn lowest_eigenpairs(
    g: &GasketGraph,
    a: &SparseSym,
    active: &[bool],
    k: usize,
    sigma: f64,
    tol: f64,
) -> Result<LowestPairs> {
    let n = a.dim();
    let n_active = active.iter().filter(|&&b| b).count();
    if k == 0 || k > n_active {
        return Err(LabError::Config(format!("cannot extract {k} eigenpairs from dimension {n_active}")));
    }
    let mut m = a.clone();
    m.deactivate(active);
    let solver = CellSolver::new(g, &m, sigma)?;
    let max_iter = n_active.min(400);
    let mut rng = rng::stream(0x1a2c, Tag::Scratch, n as u64, k as u64);
    let mut q: Vec<f64> = (0..n)
        .map(|i| if active[i] { 1.0 + 0.5 * rng.random::<f64>() } else { 0.0 })
        .collect();
    normalize(&mut q);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut av = vec![0.0; n];
    let mut last_err = f64::INFINITY;
    for it in 0..max_iter {
        let mut w = solver.solve(&basis[it]);
        for (i, wi) in w.iter_mut().enumerate() {
            if !active[i] {
                *wi = 0.0;
            }
        }
        let a_it = dot(&w, &basis[it]);
        alpha.push(a_it);
        for _ in 0..2 {
            for v in &basis {
                let c = dot(&w, v);
                axpy(-c, v, &mut w);
            }
        }
        let b_it = dot(&w, &w).sqrt();
        let size = alpha.len();
        let check = size >= k && (size % 5 == 0 || b_it < 1e-12 || size == max_iter);
        if check {
            let t = tridiagonal(&alpha, &beta);
            let eig = nalgebra::SymmetricEigen::new(t);
            let mut order: Vec<usize> = (0..size).collect();
            order.sort_by(|&x, &y| eig.eigenvalues[y].partial_cmp(&eig.eigenvalues[x]).unwrap());
            let top = &order[..k];
            let worst = top
                .iter()
                .map(|&j| (b_it * eig.eigenvectors[(size - 1, j)]).abs() / eig.eigenvalues[j].abs())
                .fold(0.0, f64::max);
            last_err = worst;
            if worst < tol || b_it < 1e-12 {
                let mut values = Vec::with_capacity(k);
                let mut vectors = Vec::with_capacity(k);
                let mut residuals = Vec::with_capacity(k);
                for &j in top {
                    let theta = eig.eigenvalues[j];
                    let lam = sigma + 1.0 / theta;
                    let mut x = vec![0.0; n];
                    for (c, v) in basis.iter().enumerate() {
                        axpy(eig.eigenvectors[(c, j)], v, &mut x);
                    }
                    normalize(&mut x);
                    m.matvec(&x, &mut av);
                    let r: f64 = av
                        .iter()
                        .zip(&x)
                        .enumerate()
                        .filter(|(i, _)| active[*i])
                        .map(|(_, (ax, xi))| (ax - lam * xi).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    values.push(lam);
                    vectors.push(x);
                    residuals.push(r);
                }
                let mut idx: Vec<usize> = (0..k).collect();
                idx.sort_by(|&x, &y| values[x].partial_cmp(&values[y]).unwrap());
                return Ok(LowestPairs {
                    values: idx.iter().map(|&i| values[i]).collect(),
                    vectors: idx.iter().map(|&i| vectors[i].clone()).collect(),
                    residuals: idx.iter().map(|&i| residuals[i]).collect(),
                    iterations: size,
                });
            }
        }
        if b_it < 1e-300 {
            break;
        }
        beta.push(b_it);
        for wi in w.iter_mut() {
            *wi /= b_it;
        }
        basis.push(w);
    }
    Err(LabError::Solver(format!(
        "Lanczos did not converge in {max_iter} steps, relative residual estimate {last_err:.3e}"
    )))
}

fn tridiagonal(alpha: &[f64], beta: &[f64]) -> DMatrix<f64> {
    let n = alpha.len();
    let mut t = DMatrix::zeros(n, n);
    for i in 0..n {
        t[(i, i)] = alpha[i];
        if i + 1 < n {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    t
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(c: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

fn normalize(x: &mut [f64]) {
    let nrm = dot(x, x).sqrt();
    for v in x.iter_mut() {
        *v /= nrm;
    }
}

/// Converts a slice to a column vector.
pub fn column(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gasket::build_graph;

    fn laplacian(g: &GasketGraph) -> SparseSym {
        let diag = vec![1.0; g.num_vertices()];
        let pairs: Vec<(usize, usize, f64)> = g
            .edges()
            .iter()
            .map(|&(a, b)| (a, b, -1.0 / ((g.degree(a) * g.degree(b)) as f64).sqrt()))
            .collect();
        SparseSym::new(diag, &pairs)
    }

    #[test]
    fn cell_solver_inverts() {
        let g = build_graph(1, 3).unwrap();
        let mut a = laplacian(&g);
        let v: Vec<f64> = (0..g.num_vertices()).map(|i| 0.1 + (i % 7) as f64 * 0.05).collect();
        a.add_diag(&v);
        let solver = CellSolver::new(&g, &a, -0.3).unwrap();
        let b: Vec<f64> = (0..g.num_vertices()).map(|i| (i as f64).sin()).collect();
        let x = solver.solve(&b);
        let mut ax = vec![0.0; b.len()];
        a.matvec(&x, &mut ax);
        for i in 0..b.len() {
            assert!((ax[i] + 0.3 * x[i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn lanczos_matches_dense() {
        let g = build_graph(0, 4).unwrap();
        let a = laplacian(&g);
        let mut active = vec![true; g.num_vertices()];
        for b in g.boundary() {
            active[b] = false;
        }
        let low = lowest_eigenpairs(&g, &a, &active, 3, -0.01, 1e-12).unwrap();
        let keep: Vec<usize> = (0..g.num_vertices()).filter(|&i| active[i]).collect();
        let dense = a.to_dense().select_rows(&keep).select_columns(&keep);
        let eig = eigh(dense, false).unwrap();
        for k in 0..3 {
            assert!((low.values[k] - eig.values[k]).abs() < 1e-9, "{k}: {} vs {}", low.values[k], eig.values[k]);
            assert!(low.residuals[k] < 1e-6);
        }
    }
}
