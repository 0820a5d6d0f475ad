//! Column-stacked superoperator form of the master equation.
//!
//! `vec(rho)[col * D + row] = rho[row, col]`, so `vec(A X B) = (Bᵀ ⊗ A) vec(X)`
//! and
//!
//! `L = I ⊗ K + conj(K) ⊗ I + sum_k rate_k conj(O_k) ⊗ O_k`,
//! `K = -i H - (1/2) sum_k rate_k O_k† O_k`,
//!
//! which expands to `-i(I⊗H - Hᵀ⊗I) + sum rate (Ō⊗O - ½ I⊗O†O - ½ (O†O)ᵀ⊗I)`.

use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use super::LindbladModel;
use crate::error::{Error, Result};
use crate::hilbert::{Space, C64, I, ZERO};

/// Sparse `D² x D²` generator acting on column-stacked density matrices.
#[derive(Clone)]
pub struct Liouvillian {
    space: Space,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<C64>,
}

impl std::fmt::Debug for Liouvillian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Liouvillian")
            .field("space", &self.space)
            .field("nnz", &self.nnz())
            .finish()
    }
}

pub fn vectorize(m: &Mat<C64>) -> Vec<C64> {
    let d = m.nrows();
    let mut v = Vec::with_capacity(d * d);
    for c in 0..m.ncols() {
        for r in 0..d {
            v.push(m[(r, c)]);
        }
    }
    v
}

pub fn unvectorize(v: &[C64], d: usize) -> Mat<C64> {
    assert_eq!(v.len(), d * d, "vector length must be D²");
    Mat::from_fn(d, d, |r, c| v[c * d + r])
}

/// Builds the sparse Liouvillian of `model`.
pub fn liouvillian(model: &LindbladModel) -> Liouvillian {
    let space = model.space();
    let d = space.dim();
    let h = model.hamiltonian().matrix();

    // K = -iH - ½ Σ rate O†O
    let mut k = Mat::from_fn(d, d, |i, j| -I * h[(i, j)]);
    for ch in model.active_channels() {
        let o = ch.op.matrix();
        let odo = o.adjoint() * o;
        k = Mat::from_fn(d, d, |i, j| k[(i, j)] - odo[(i, j)] * (0.5 * ch.rate));
    }
    let k_nz = nonzeros(&k);

    let mut trip: Vec<(usize, usize, C64)> = Vec::new();
    // I ⊗ K: block-diagonal copies of K.
    for c in 0..d {
        for &(r, r2, v) in &k_nz {
            trip.push((c * d + r, c * d + r2, v));
        }
    }
    // conj(K) ⊗ I
    for &(c, c2, v) in &k_nz {
        for r in 0..d {
            trip.push((c * d + r, c2 * d + r, v.conj()));
        }
    }
    for ch in model.active_channels() {
        let o_nz = nonzeros(ch.op.matrix());
        for &(c, c2, u) in &o_nz {
            let uc = u.conj() * ch.rate;
            for &(r, r2, v) in &o_nz {
                trip.push((c * d + r, c2 * d + r2, uc * v));
            }
        }
    }
    Liouvillian::from_triplets(space, trip)
}

fn nonzeros(m: &Mat<C64>) -> Vec<(usize, usize, C64)> {
    let mut out = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != ZERO {
                out.push((i, j, v));
            }
        }
    }
    out
}

impl Liouvillian {
    fn from_triplets(space: Space, mut trip: Vec<(usize, usize, C64)>) -> Self {
        let n = space.dim() * space.dim();
        trip.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(trip.len());
        let mut values: Vec<C64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            if last == Some((r, c)) {
                *values.last_mut().expect("merged entry exists") += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self { space, row_ptr, col_idx, values }
    }

    pub fn space(&self) -> Space {
        self.space
    }

    /// Hilbert-space dimension D.
    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    /// Superoperator dimension D².
    pub fn size(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `y = L x`.
    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.size());
        assert_eq!(y.len(), self.size());
        for (r, out) in y.iter_mut().enumerate() {
            let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
            let mut acc = ZERO;
            for (c, v) in self.col_idx[lo..hi].iter().zip(&self.values[lo..hi]) {
                acc += v * x[*c];
            }
            *out = acc;
        }
    }

    pub fn apply_vec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.size()];
        self.apply(x, &mut y);
        y
    }

    /// `L` applied to an unvectorized matrix.
    pub fn apply_matrix(&self, rho: &Mat<C64>) -> Result<Mat<C64>> {
        let d = self.dim();
        if rho.nrows() != d || rho.ncols() != d {
            return Err(Error::InvalidSpace(format!("expected a {d}x{d} matrix")));
        }
        Ok(unvectorize(&self.apply_vec(&vectorize(rho)), d))
    }

    /// Stored entries `(row, col, value)` in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.size()).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    /// Compressed-column copy with row `replace_row` swapped for the trace
    /// functional `sum_i rho[i, i]`.
    pub(crate) fn to_constrained_csc(&self, replace_row: usize) -> Result<SparseColMat<usize, C64>> {
        let d = self.dim();
        let n = self.size();
        let mut trip: Vec<Triplet<usize, usize, C64>> = self
            .entries()
            .filter(|&(r, _, _)| r != replace_row)
            .map(|(r, c, v)| Triplet::new(r, c, v))
            .collect();
        trip.extend((0..d).map(|i| Triplet::new(replace_row, i * d + i, C64::new(1.0, 0.0))));
        SparseColMat::try_new_from_triplets(n, n, &trip)
            .map_err(|e| Error::Numerical(format!("sparse assembly failed: {e:?}")))
    }
}
