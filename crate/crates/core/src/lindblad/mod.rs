//! Lindblad master equation for one oscillator and for the mean-field
//! coupled pair with revival parameter.
//!
//! The right-hand side is `-i[H, rho] + sum_k rate_k D[O_k](rho)` with
//! `D[O](rho) = O rho O† - (O†O rho + rho O†O) / 2`.

mod evolve;
mod krylov;
mod liouvillian;
mod steady;

pub use evolve::{evolve, evolve_to_steady, EvolveOptions, Trajectory};
pub use krylov::{gmres, GmresOptions, GmresOutcome};
pub use liouvillian::{liouvillian, unvectorize, vectorize, Liouvillian};
pub use steady::{
    memory_estimate, steady_state, steady_state_with, SteadyMethod, SteadyOptions, SteadyReport,
};

use faer::Mat;

use crate::error::{Error, Result};
use crate::hilbert::{
    embed, expectation, partial_trace, DensityMatrix, FockOperator, Site, Space, Tolerances, C64,
    I,
};
use crate::params::SystemParams;

/// One dissipative channel `rate * D[op]`.
#[derive(Debug, Clone)]
pub struct Channel {
    pub rate: f64,
    pub op: FockOperator,
}

/// Hamiltonian plus dissipative channels on a common space.
#[derive(Debug, Clone)]
pub struct LindbladModel {
    hamiltonian: FockOperator,
    channels: Vec<Channel>,
}

impl LindbladModel {
    /// Checks that `hamiltonian` is Hermitian, that all operators share its
    /// space and that every rate is nonnegative.
    pub fn new(hamiltonian: FockOperator, channels: Vec<Channel>) -> Result<Self> {
        let tol = Tolerances::default().hermitian;
        let err = hamiltonian.hermiticity_error();
        if err > tol {
            return Err(Error::InvalidParams(format!(
                "Hamiltonian is not Hermitian (max deviation {err:.3e})"
            )));
        }
        let model = Self { hamiltonian, channels: Vec::new() };
        channels.into_iter().try_fold(model, |m, c| m.with_channel(c.rate, c.op))
    }

    pub fn with_channel(mut self, rate: f64, op: FockOperator) -> Result<Self> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::InvalidParams(format!("channel rate must be >= 0 (got {rate})")));
        }
        if op.space() != self.hamiltonian.space() {
            return Err(Error::InvalidSpace(format!(
                "channel operator on {}, Hamiltonian on {}",
                op.space(),
                self.hamiltonian.space()
            )));
        }
        self.channels.push(Channel { rate, op });
        Ok(self)
    }

    pub fn space(&self) -> Space {
        self.hamiltonian.space()
    }

    pub fn hamiltonian(&self) -> &FockOperator {
        &self.hamiltonian
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    /// Channels with a strictly positive rate.
    pub fn active_channels(&self) -> impl Iterator<Item = &Channel> {
        self.channels.iter().filter(|c| c.rate > 0.0)
    }

    /// Direct (superoperator-free) evaluation of the master-equation
    /// right-hand side.
    pub fn rhs(&self, rho: &Mat<C64>) -> Result<Mat<C64>> {
        let d = self.space().dim();
        if rho.nrows() != d || rho.ncols() != d {
            return Err(Error::InvalidSpace(format!(
                "state is {}x{}, model needs {d}x{d}",
                rho.nrows(),
                rho.ncols()
            )));
        }
        let h = self.hamiltonian.matrix();
        let comm = h * rho - rho * h;
        let mut out = Mat::from_fn(d, d, |i, j| -I * comm[(i, j)]);
        for ch in self.active_channels() {
            let dis = dissipator_matrix(ch.op.matrix(), rho);
            out = Mat::from_fn(d, d, |i, j| out[(i, j)] + dis[(i, j)] * ch.rate);
        }
        Ok(out)
    }
}

fn dissipator_matrix(o: &Mat<C64>, rho: &Mat<C64>) -> Mat<C64> {
    let od = o.adjoint().to_owned();
    let odo = &od * o;
    let jump = o * rho * &od;
    let anti = &odo * rho + rho * &odo;
    let d = rho.nrows();
    Mat::from_fn(d, d, |i, j| jump[(i, j)] - anti[(i, j)] * 0.5)
}

/// `D[O](rho) = O rho O† - (O†O rho + rho O†O) / 2`.
pub fn dissipator_action(op: &FockOperator, rho: &DensityMatrix) -> Result<Mat<C64>> {
    if op.space() != rho.space() {
        return Err(Error::InvalidSpace(format!(
            "operator on {}, state on {}",
            op.space(),
            rho.space()
        )));
    }
    Ok(dissipator_matrix(op.matrix(), rho.matrix()))
}

/// Single quantum van der Pol oscillator: `H = omega a†a`, channels
/// `(k1, a†)` and `(k2, a²)`.
///
/// Only rate nonnegativity is enforced, so `k1 = 0` gives a pure two-boson
/// loss model.
pub fn build_single(params: &SystemParams, cutoff: usize) -> Result<LindbladModel> {
    let a = FockOperator::annihilation(cutoff)?;
    let ad = a.adjoint();
    let h = &(&ad * &a) * params.omega;
    LindbladModel::new(h, Vec::new())?
        .with_channel(params.k1, ad)?
        .with_channel(params.k2, &a * &a)
}

/// Two identical oscillators under weighted mean-field diffusive coupling
/// with revival parameter `gamma`, `cutoff` levels per site.
///
/// Hamiltonian:
/// `omega (a1†a1 + a2†a2) + (i eps / 4) [q (a1†a2† - a1 a2)
///  + (q/2 - gamma)(a1†² + a2†² - a1² - a2²)]`.
/// Channels: `(k1, a_j†)`, `(k2, a_j²)`, `(q eps / 2, (a1 + a2)†)`,
/// `(eps gamma, a_j)`.
pub fn build_coupled(params: &SystemParams, cutoff: usize) -> Result<LindbladModel> {
    let a = FockOperator::annihilation(cutoff)?;
    let a1 = embed(&a, Site::One, cutoff)?;
    let a2 = embed(&a, Site::Two, cutoff)?;
    let a1d = a1.adjoint();
    let a2d = a2.adjoint();

    let number = &(&a1d * &a1) + &(&a2d * &a2);
    let pair = &(&a1d * &a2d) - &(&a1 * &a2);
    let squeeze = &(&(&a1d * &a1d) + &(&a2d * &a2d)) - &(&(&a1 * &a1) + &(&a2 * &a2));
    let coupling = &(&pair * params.q) + &(&squeeze * (params.q / 2.0 - params.gamma));
    // i * (i eps / 4) * anti-Hermitian block is Hermitian.
    let h = &(&number * params.omega) + &coupling.scale(I * (params.eps / 4.0));
    let h = hermitize(h);

    let sum = (&a1 + &a2).adjoint();
    LindbladModel::new(h, Vec::new())?
        .with_channel(params.k1, a1d)?
        .with_channel(params.k1, a2d)?
        .with_channel(params.k2, &a1 * &a1)?
        .with_channel(params.k2, &a2 * &a2)?
        .with_channel(params.q * params.eps / 2.0, sum)?
        .with_channel(params.eps * params.gamma, a1)?
        .with_channel(params.eps * params.gamma, a2)
}

/// Removes rounding asymmetry from an operator that is Hermitian in exact
/// arithmetic.
fn hermitize(op: FockOperator) -> FockOperator {
    let d = op.dim();
    let m = op.matrix();
    let sym = Mat::from_fn(d, d, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5);
    FockOperator::from_matrix(op.space(), sym).expect("dimensions preserved")
}

/// `<a†a>` of the given oscillator.
pub fn mean_phonon(rho: &DensityMatrix, site: Site) -> Result<f64> {
    let reduced = reduced_state(rho, site)?;
    let n = reduced.dim();
    let num = FockOperator::number(n)?;
    Ok(expectation(&reduced, &num)?.re)
}

/// Fock-level occupation of the given oscillator.
pub fn fock_populations(rho: &DensityMatrix, site: Site) -> Result<Vec<f64>> {
    Ok(reduced_state(rho, site)?.diagonal_populations())
}

/// Single-oscillator state for `site`: the state itself for a single space,
/// the partial trace otherwise.
pub fn reduced_state(rho: &DensityMatrix, site: Site) -> Result<DensityMatrix> {
    match rho.space() {
        Space::Single(_) if site == Site::One => Ok(rho.clone()),
        Space::Single(_) => {
            Err(Error::InvalidSpace("single-oscillator state has no second site".into()))
        }
        Space::Composite(..) => partial_trace(rho, site),
    }
}


#[cfg(test)]
mod tests;
