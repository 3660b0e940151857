//! Minimal CSR matrices and a Jacobi-preconditioned conjugate gradient.
//!
//! The Newton systems assembled from P1 elements are symmetric positive
//! definite, small-bandwidth and re-assembled every iteration, so a
//! pattern-reusing CSR plus PCG is all that is needed. All reductions run in
//! a fixed order: dot products accumulate over fixed-size chunks regardless
//! of the thread count, and the threaded matrix-vector product writes each
//! output row independently, so results are bit-identical across runs and
//! across `threads` settings.

use crate::{Error, Result};

const DOT_CHUNK: usize = 1024;

/// Sparsity pattern shared between re-assemblies.
#[derive(Debug, Clone)]
pub struct CsrPattern {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
}

impl CsrPattern {
    /// Builds a pattern from undirected adjacency lists (self-loops added).
    pub fn from_adjacency(n: usize, neighbors: &[Vec<usize>]) -> CsrPattern {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for (i, nbrs) in neighbors.iter().enumerate() {
            let mut cols: Vec<usize> = nbrs.clone();
            cols.push(i);
            cols.sort_unstable();
            cols.dedup();
            col_idx.extend_from_slice(&cols);
            row_ptr.push(col_idx.len());
        }
        CsrPattern { n, row_ptr, col_idx }
    }

    /// Index of (row, col) in the value array.
    pub fn entry(&self, row: usize, col: usize) -> Option<usize> {
        let lo = self.row_ptr[row];
        let hi = self.row_ptr[row + 1];
        self.col_idx[lo..hi].binary_search(&col).ok().map(|k| lo + k)
    }
}

/// CSR matrix over a shared pattern.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub pattern: std::sync::Arc<CsrPattern>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(pattern: std::sync::Arc<CsrPattern>) -> CsrMatrix {
        let nnz = pattern.col_idx.len();
        CsrMatrix { pattern, values: vec![0.0; nnz] }
    }

    pub fn reset(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        let k = self
            .pattern
            .entry(row, col)
            .unwrap_or_else(|| panic!("entry ({row},{col}) outside pattern"));
        self.values[k] += value;
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64], threads: usize) {
        let n = self.pattern.n;
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(y.len(), n);
        if threads <= 1 || n < 2 * threads {
            for row in 0..n {
                y[row] = self.row_dot(row, x);
            }
            return;
        }
        let chunk = n.div_ceil(threads);
        std::thread::scope(|scope| {
            for (ci, y_chunk) in y.chunks_mut(chunk).enumerate() {
                let start = ci * chunk;
                scope.spawn(move || {
                    for (k, out) in y_chunk.iter_mut().enumerate() {
                        *out = self.row_dot(start + k, x);
                    }
                });
            }
        });
    }

    #[inline]
    fn row_dot(&self, row: usize, x: &[f64]) -> f64 {
        let lo = self.pattern.row_ptr[row];
        let hi = self.pattern.row_ptr[row + 1];
        let mut acc = 0.0;
        for k in lo..hi {
            acc += self.values[k] * x[self.pattern.col_idx[k]];
        }
        acc
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.pattern.n];
        for (row, slot) in d.iter_mut().enumerate() {
            if let Some(k) = self.pattern.entry(row, row) {
                *slot = self.values[k];
            }
        }
        d
    }
}

/// Chunked dot product with a thread-independent summation order.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut total = 0.0;
    for (ca, cb) in a.chunks(DOT_CHUNK).zip(b.chunks(DOT_CHUNK)) {
        let mut partial = 0.0;
        for (x, y) in ca.iter().zip(cb) {
            partial += x * y;
        }
        total += partial;
    }
    total
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outcome of a PCG solve.
#[derive(Debug, Clone, Copy)]
pub struct CgStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Jacobi-preconditioned conjugate gradient for SPD systems.
///
/// Solves in place starting from `x`; converges when the residual norm drops
/// below `rtol * ||b|| + atol`.
pub fn pcg(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    atol: f64,
    max_iter: usize,
    threads: usize,
) -> Result<CgStats> {
    let n = b.len();
    let diag = a.diagonal();
    let minv: Vec<f64> = diag
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut r = vec![0.0; n];
    a.matvec(x, &mut r, threads);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let target = rtol * norm2(b) + atol;
    let mut res = norm2(&r);
    if res <= target {
        return Ok(CgStats { iterations: 0, residual: res });
    }

    let mut z: Vec<f64> = (0..n).map(|i| minv[i] * r[i]).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];

    for iter in 1..=max_iter {
        a.matvec(&p, &mut q, threads);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(Error::NonConvergence {
                residual: res,
                tolerance: target,
                iterations: iter,
                history: vec![res],
                last_iterate: x.to_vec(),
            });
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        res = norm2(&r);
        if res <= target {
            return Ok(CgStats { iterations: iter, residual: res });
        }
        for i in 0..n {
            z[i] = minv[i] * r[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rz = rz_new;
    }
    Err(Error::NonConvergence {
        residual: res,
        tolerance: target,
        iterations: max_iter,
        history: vec![res],
        last_iterate: x.to_vec(),
    })
}
