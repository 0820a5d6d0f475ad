//! Truncated Fock-space operator algebra.
//!
//! Composite (two-oscillator) spaces use the basis ordering
//! `|n1> ⊗ |n2>` with site 1 as the slow index, i.e. the composite index of
//! `|n1, n2>` is `n1 * N2 + n2`. Partial traces depend on this ordering.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use faer::{Mat, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Hilbert space of one oscillator or of an ordered pair of oscillators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Space {
    Single(usize),
    Composite(usize, usize),
}

impl Space {
    pub fn dim(&self) -> usize {
        match *self {
            Space::Single(n) => n,
            Space::Composite(n1, n2) => n1 * n2,
        }
    }

    /// Cutoff of the given site. A single space only has `Site::One`.
    pub fn cutoff(&self, site: Site) -> Result<usize> {
        match (*self, site) {
            (Space::Single(n), Site::One) => Ok(n),
            (Space::Composite(n1, _), Site::One) => Ok(n1),
            (Space::Composite(_, n2), Site::Two) => Ok(n2),
            (Space::Single(_), Site::Two) => {
                Err(Error::InvalidSpace("single-oscillator space has no second site".into()))
            }
        }
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Space::Single(n) => write!(f, "Single({n})"),
            Space::Composite(a, b) => write!(f, "Composite({a}, {b})"),
        }
    }
}

/// Oscillator index in a composite space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Site {
    One,
    Two,
}

impl Site {
    pub fn other(self) -> Site {
        match self {
            Site::One => Site::Two,
            Site::Two => Site::One,
        }
    }
}

/// Numerical slack used when validating states and operators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Maximum entrywise deviation from Hermiticity.
    pub hermitian: f64,
    /// Maximum deviation of the trace from one.
    pub trace: f64,
    /// Most negative eigenvalue tolerated (truncation-induced slack).
    pub psd: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { hermitian: 1e-10, trace: 1e-8, psd: 1e-8 }
    }
}

/// Complex matrix acting on a truncated Fock space.
#[derive(Clone)]
pub struct FockOperator {
    space: Space,
    matrix: Mat<C64>,
}

impl fmt::Debug for FockOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FockOperator").field("space", &self.space).finish_non_exhaustive()
    }
}

fn check_cutoff(n: usize) -> Result<()> {
    if n < 2 {
        Err(Error::InvalidCutoff(n))
    } else {
        Ok(())
    }
}

impl FockOperator {
    /// Wraps a matrix; its dimension must match `space`.
    pub fn from_matrix(space: Space, matrix: Mat<C64>) -> Result<Self> {
        let d = space.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::InvalidSpace(format!(
                "matrix is {}x{}, space {space} needs {d}x{d}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { space, matrix })
    }

    pub fn zeros(space: Space) -> Self {
        let d = space.dim();
        Self { space, matrix: Mat::zeros(d, d) }
    }

    pub fn identity(space: Space) -> Self {
        let d = space.dim();
        Self { space, matrix: Mat::identity(d, d) }
    }

    /// Bosonic annihilation operator: `a|n> = sqrt(n)|n-1>`.
    pub fn annihilation(n: usize) -> Result<Self> {
        check_cutoff(n)?;
        let matrix = Mat::from_fn(n, n, |i, j| {
            if j == i + 1 {
                C64::new((j as f64).sqrt(), 0.0)
            } else {
                ZERO
            }
        });
        Ok(Self { space: Space::Single(n), matrix })
    }

    pub fn creation(n: usize) -> Result<Self> {
        Ok(Self::annihilation(n)?.adjoint())
    }

    /// Number operator `a†a = diag(0, 1, ..., N-1)`.
    pub fn number(n: usize) -> Result<Self> {
        check_cutoff(n)?;
        let matrix =
            Mat::from_fn(n, n, |i, j| if i == j { C64::new(i as f64, 0.0) } else { ZERO });
        Ok(Self { space: Space::Single(n), matrix })
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn matrix(&self) -> &Mat<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Mat<C64> {
        self.matrix
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        Self { space: self.space, matrix: self.matrix.adjoint().to_owned() }
    }

    pub fn scale(&self, factor: C64) -> Self {
        let matrix = Mat::from_fn(self.dim(), self.dim(), |i, j| self.matrix[(i, j)] * factor);
        Self { space: self.space, matrix }
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.matrix[(i, i)]).sum()
    }

    /// Largest entrywise deviation `|A - A†|`.
    pub fn hermiticity_error(&self) -> f64 {
        max_antihermitian(&self.matrix)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    /// Matrix product, checked for matching spaces.
    pub fn try_mul(&self, rhs: &FockOperator) -> Result<Self> {
        same_space(self.space, rhs.space)?;
        Ok(Self { space: self.space, matrix: &self.matrix * &rhs.matrix })
    }

    pub fn try_add(&self, rhs: &FockOperator) -> Result<Self> {
        same_space(self.space, rhs.space)?;
        Ok(Self { space: self.space, matrix: &self.matrix + &rhs.matrix })
    }

    /// Iterator over the structurally nonzero entries `(row, col, value)`.
    pub fn nonzeros(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        let d = self.dim();
        (0..d).flat_map(move |j| {
            (0..d).filter_map(move |i| {
                let v = self.matrix[(i, j)];
                (v != ZERO).then_some((i, j, v))
            })
        })
    }
}

fn same_space(a: Space, b: Space) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::InvalidSpace(format!("operand spaces differ: {a} vs {b}")))
    }
}

impl Mul for &FockOperator {
    type Output = FockOperator;

    /// Panics on mismatched spaces; use [`FockOperator::try_mul`] otherwise.
    fn mul(self, rhs: &FockOperator) -> FockOperator {
        self.try_mul(rhs).expect("operator product on mismatched spaces")
    }
}

impl Add for &FockOperator {
    type Output = FockOperator;

    fn add(self, rhs: &FockOperator) -> FockOperator {
        self.try_add(rhs).expect("operator sum on mismatched spaces")
    }
}

impl Sub for &FockOperator {
    type Output = FockOperator;

    fn sub(self, rhs: &FockOperator) -> FockOperator {
        same_space(self.space, rhs.space).expect("operator difference on mismatched spaces");
        FockOperator { space: self.space, matrix: &self.matrix - &rhs.matrix }
    }
}

impl Mul<C64> for &FockOperator {
    type Output = FockOperator;

    fn mul(self, rhs: C64) -> FockOperator {
        self.scale(rhs)
    }
}

impl Mul<f64> for &FockOperator {
    type Output = FockOperator;

    fn mul(self, rhs: f64) -> FockOperator {
        self.scale(C64::new(rhs, 0.0))
    }
}

/// Kronecker product of two single-site operators, giving an operator on
/// `Composite(N1, N2)`.
pub fn tensor(a: &FockOperator, b: &FockOperator) -> Result<FockOperator> {
    let (n1, n2) = match (a.space, b.space) {
        (Space::Single(n1), Space::Single(n2)) => (n1, n2),
        _ => {
            return Err(Error::InvalidSpace(
                "tensor products are formed from single-site operators".into(),
            ))
        }
    };
    let matrix = kron(&a.matrix, &b.matrix);
    Ok(FockOperator { space: Space::Composite(n1, n2), matrix })
}

/// Lifts a single-site operator onto the composite space, with the identity
/// on the other site.
pub fn embed(op: &FockOperator, site: Site, other_cutoff: usize) -> Result<FockOperator> {
    check_cutoff(other_cutoff)?;
    let id = FockOperator::identity(Space::Single(other_cutoff));
    match site {
        Site::One => tensor(op, &id),
        Site::Two => tensor(&id, op),
    }
}

pub(crate) fn kron(a: &Mat<C64>, b: &Mat<C64>) -> Mat<C64> {
    let (ra, ca) = (a.nrows(), a.ncols());
    let (rb, cb) = (b.nrows(), b.ncols());
    Mat::from_fn(ra * rb, ca * cb, |i, j| a[(i / rb, j / cb)] * b[(i % rb, j % cb)])
}

pub(crate) fn max_antihermitian(m: &Mat<C64>) -> f64 {
    let d = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..d {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Hermitian, unit-trace, positive semidefinite state of one or two oscillators.
#[derive(Clone)]
pub struct DensityMatrix {
    space: Space,
    matrix: Mat<C64>,
}

impl fmt::Debug for DensityMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensityMatrix")
            .field("space", &self.space)
            .field("trace", &self.trace())
            .finish_non_exhaustive()
    }
}

impl DensityMatrix {
    /// Validates Hermiticity, trace and positivity against `tol`.
    pub fn new(space: Space, matrix: Mat<C64>, tol: &Tolerances) -> Result<Self> {
        let rho = Self::new_unchecked(space, matrix)?;
        rho.validate(tol)?;
        Ok(rho)
    }

    /// Checks only the dimensions.
    pub fn new_unchecked(space: Space, matrix: Mat<C64>) -> Result<Self> {
        let op = FockOperator::from_matrix(space, matrix)?;
        Ok(Self { space, matrix: op.matrix })
    }

    /// Pure Fock state `|n><n|` of a single oscillator.
    pub fn fock(cutoff: usize, n: usize) -> Result<Self> {
        let mut p = vec![0.0; cutoff];
        if n >= cutoff {
            return Err(Error::InvalidState(format!("level {n} outside cutoff {cutoff}")));
        }
        p[n] = 1.0;
        Self::diagonal(&p)
    }

    pub fn vacuum(cutoff: usize) -> Result<Self> {
        Self::fock(cutoff, 0)
    }

    /// Diagonal single-oscillator state with the given Fock populations.
    pub fn diagonal(populations: &[f64]) -> Result<Self> {
        let n = populations.len();
        check_cutoff(n)?;
        if populations.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::InvalidState("populations must be finite and nonnegative".into()));
        }
        let matrix = Mat::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(populations[i], 0.0)
            } else {
                ZERO
            }
        });
        Self::new(Space::Single(n), matrix, &Tolerances::default())
    }

    /// Maximally mixed state `I / d`.
    pub fn maximally_mixed(space: Space) -> Self {
        let d = space.dim();
        let w = 1.0 / d as f64;
        let matrix = Mat::from_fn(d, d, |i, j| if i == j { C64::new(w, 0.0) } else { ZERO });
        Self { space, matrix }
    }

    /// Product state `rho1 ⊗ rho2`.
    pub fn product(first: &DensityMatrix, second: &DensityMatrix) -> Result<Self> {
        let (n1, n2) = match (first.space, second.space) {
            (Space::Single(a), Space::Single(b)) => (a, b),
            _ => return Err(Error::InvalidSpace("product states need single-site factors".into())),
        };
        Ok(Self { space: Space::Composite(n1, n2), matrix: kron(&first.matrix, &second.matrix) })
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn matrix(&self) -> &Mat<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Mat<C64> {
        self.matrix
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.matrix[(i, i)]).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        max_antihermitian(&self.matrix)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let herm = hermitian_part(&self.matrix);
        let evals = herm
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Numerical(format!("Hermitian eigenvalue solver failed: {e:?}")))?;
        Ok(evals.first().copied().unwrap_or(0.0))
    }

    pub fn validate(&self, tol: &Tolerances) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > tol.hermitian {
            return Err(Error::InvalidState(format!("not Hermitian (max deviation {herm:.3e})")));
        }
        let tr = self.trace();
        if (tr - ONE).norm() > tol.trace {
            return Err(Error::InvalidState(format!("trace is {tr}, expected 1")));
        }
        let min = self.min_eigenvalue()?;
        if min < -tol.psd {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(())
    }

    /// Populations `<n|rho|n>` in the full basis.
    pub fn diagonal_populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).collect()
    }
}

pub(crate) fn hermitian_part(m: &Mat<C64>) -> Mat<C64> {
    let d = m.nrows();
    Mat::from_fn(d, d, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5)
}

/// Reduced state of one oscillator of a composite state.
pub fn partial_trace(rho: &DensityMatrix, keep: Site) -> Result<DensityMatrix> {
    let (n1, n2) = match rho.space {
        Space::Composite(n1, n2) => (n1, n2),
        Space::Single(_) => {
            return Err(Error::InvalidSpace("partial trace needs a composite state".into()))
        }
    };
    let m = &rho.matrix;
    let reduced = match keep {
        Site::One => Mat::from_fn(n1, n1, |i, j| (0..n2).map(|k| m[(i * n2 + k, j * n2 + k)]).sum()),
        Site::Two => Mat::from_fn(n2, n2, |i, j| (0..n1).map(|k| m[(k * n2 + i, k * n2 + j)]).sum()),
    };
    let n = if keep == Site::One { n1 } else { n2 };
    Ok(DensityMatrix { space: Space::Single(n), matrix: reduced })
}

/// `Tr(rho O)`.
pub fn expectation(rho: &DensityMatrix, op: &FockOperator) -> Result<C64> {
    if rho.space != op.space {
        return Err(Error::InvalidSpace(format!(
            "state lives on {}, operator on {}",
            rho.space, op.space
        )));
    }
    let d = rho.dim();
    let mut acc = ZERO;
    for i in 0..d {
        for k in 0..d {
            acc += rho.matrix[(i, k)] * op.matrix[(k, i)];
        }
    }
    Ok(acc)
}
