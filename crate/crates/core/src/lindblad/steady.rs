//! Steady states `L vec(rho) = 0`, `Tr rho = 1`.
//!
//! Three routes, chosen by size and memory budget:
//! * `Direct`: sparse LU of `L` with one row replaced by the trace functional.
//! * `Krylov`: GMRES preconditioned by the best Kronecker-sum approximation
//!   `L_A ⊗ I + I ⊗ L_B` of a two-site Liouvillian, inverted exactly through
//!   per-site eigendecompositions. Used when the LU fill would not fit.
//! * `Evolve`: time integration until `|d rho/dt|_inf` drops below tolerance.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::Mat;
use serde::{Deserialize, Serialize};

use super::evolve::evolve_to_steady;
use super::krylov::{gmres, GmresOptions};
use super::liouvillian::{liouvillian, unvectorize, vectorize, Liouvillian};
use super::LindbladModel;
use crate::error::{Error, Result};
use crate::hilbert::{hermitian_part, DensityMatrix, Space, C64, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteadyMethod {
    Auto,
    Direct,
    Krylov,
    Evolve,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteadyOptions {
    pub method: SteadyMethod,
    /// Upper bound on solver working memory.
    pub memory_budget_bytes: u64,
    /// Largest superoperator dimension D² sent to sparse LU by `Auto`.
    /// Two-site problems above it go to GMRES, which is far cheaper there.
    pub direct_max_unknowns: usize,
    /// Required `|L vec(rho)|_inf` of the normalized result.
    pub residual_tol: f64,
    pub krylov_restart: usize,
    pub krylov_max_iter: usize,
    /// Shift keeping the Kronecker-sum preconditioner away from its zero mode.
    pub krylov_shift: f64,
    /// Convergence threshold on `|d rho/dt|_inf` for the evolution route.
    pub evolve_tol: f64,
    pub evolve_t_max: f64,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            method: SteadyMethod::Auto,
            memory_budget_bytes: 4 << 30,
            direct_max_unknowns: 2_500,
            residual_tol: 1e-10,
            krylov_restart: 60,
            krylov_max_iter: 1500,
            krylov_shift: 0.1,
            evolve_tol: 1e-9,
            evolve_t_max: 1e5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SteadyReport {
    pub rho: DensityMatrix,
    /// Route that produced `rho`.
    pub method: SteadyMethod,
    /// `|L vec(rho)|_inf` of the returned state.
    pub residual: f64,
    /// GMRES iterations, when the Krylov route ran.
    pub iterations: usize,
}

/// Steady state with default options.
pub fn steady_state(model: &LindbladModel) -> Result<DensityMatrix> {
    Ok(steady_state_with(model, &SteadyOptions::default())?.rho)
}

/// Rough working-set estimates in bytes. The direct estimate follows the
/// `O(n^1.5)` fill of nested-dissection orderings on the lattice-like
/// sparsity of Fock-space Liouvillians.
fn direct_bytes(unknowns: usize, nnz: usize) -> u64 {
    (128.0 * (unknowns as f64).powf(1.5)) as u64 + 32 * nnz as u64
}

fn krylov_bytes(unknowns: usize, site_super_dims: (usize, usize), restart: usize) -> u64 {
    let (a, b) = site_super_dims;
    let vecs = 16 * unknowns as u64 * (2 * restart as u64 + 8);
    let dense = 16 * (3 * (a * a + b * b) + 3 * a * b) as u64;
    vecs + dense
}

fn evolve_bytes(unknowns: usize) -> u64 {
    16 * unknowns as u64 * 12
}

/// Working-set estimate for the route `Auto` would take on `space`,
/// assuming about 30 Liouvillian entries per row.
pub fn memory_estimate(space: Space, opts: &SteadyOptions) -> u64 {
    let n = space.dim() * space.dim();
    let nnz = 30 * n;
    let lmem = 32 * nnz as u64;
    match space {
        _ if n <= opts.direct_max_unknowns => direct_bytes(n, nnz),
        Space::Composite(n1, n2) => lmem + krylov_bytes(n, (n1 * n1, n2 * n2), opts.krylov_restart),
        Space::Single(_) => lmem + evolve_bytes(n),
    }
}

pub fn steady_state_with(model: &LindbladModel, opts: &SteadyOptions) -> Result<SteadyReport> {
    if model.active_channels().next().is_none() {
        // A purely Hamiltonian flow keeps every stationary state stationary.
        return Err(Error::DegenerateSteadyState { residual: f64::INFINITY });
    }
    let l = liouvillian(model);
    let n = l.size();
    let budget = opts.memory_budget_bytes;
    let lmem = 32 * l.nnz() as u64;

    let method = match opts.method {
        SteadyMethod::Auto => {
            if n <= opts.direct_max_unknowns && direct_bytes(n, l.nnz()) <= budget {
                SteadyMethod::Direct
            } else if let Space::Composite(n1, n2) = model.space() {
                if lmem + krylov_bytes(n, (n1 * n1, n2 * n2), opts.krylov_restart) <= budget {
                    SteadyMethod::Krylov
                } else {
                    SteadyMethod::Evolve
                }
            } else {
                SteadyMethod::Evolve
            }
        }
        m => m,
    };

    match method {
        SteadyMethod::Direct => {
            if direct_bytes(n, l.nnz()) > budget {
                return Err(Error::ResourceBudget(format!(
                    "sparse LU for {n} unknowns needs ~{} MiB, budget {} MiB",
                    direct_bytes(n, l.nnz()) >> 20,
                    budget >> 20
                )));
            }
            solve_direct(model, &l, opts)
        }
        SteadyMethod::Krylov => {
            let Space::Composite(n1, n2) = model.space() else {
                return Err(Error::InvalidSpace("the Krylov route needs a two-site model".into()));
            };
            if lmem + krylov_bytes(n, (n1 * n1, n2 * n2), opts.krylov_restart) > budget {
                return Err(Error::ResourceBudget(format!(
                    "GMRES workspace for {n} unknowns exceeds the {} MiB budget",
                    budget >> 20
                )));
            }
            match solve_krylov(model, &l, (n1, n2), opts) {
                Ok(report) => Ok(report),
                Err(Error::Numerical(_)) => solve_evolve(model, &l, opts),
                Err(e) => Err(e),
            }
        }
        SteadyMethod::Evolve => solve_evolve(model, &l, opts),
        SteadyMethod::Auto => unreachable!("resolved above"),
    }
}

fn solve_evolve(model: &LindbladModel, l: &Liouvillian, opts: &SteadyOptions) -> Result<SteadyReport> {
    let n = l.size();
    if evolve_bytes(n) + 32 * l.nnz() as u64 > opts.memory_budget_bytes {
        return Err(Error::ResourceBudget(format!(
            "time integration of {n} unknowns exceeds the {} MiB budget",
            opts.memory_budget_bytes >> 20
        )));
    }
    let rho0 = DensityMatrix::maximally_mixed(model.space());
    let (rho, _) = evolve_to_steady(&rho0, model, opts.evolve_tol, opts.evolve_t_max)?;
    finish(model.space(), vectorize(rho.matrix()), l, SteadyMethod::Evolve, 0)
}

/// Hermitizes, normalizes and measures the residual of a candidate.
fn finish(space: Space, x: Vec<C64>, l: &Liouvillian, method: SteadyMethod, iterations: usize) -> Result<SteadyReport> {
    let d = space.dim();
    let m = hermitian_part(&unvectorize(&x, d));
    let tr: f64 = (0..d).map(|i| m[(i, i)].re).sum();
    if !tr.is_finite() || tr.abs() < 1e-300 {
        return Err(Error::DegenerateSteadyState { residual: f64::INFINITY });
    }
    let m = Mat::from_fn(d, d, |i, j| m[(i, j)] / tr);
    let v = vectorize(&m);
    let residual = l.apply_vec(&v).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let rho = DensityMatrix::new_unchecked(space, m)?;
    Ok(SteadyReport { rho, method, residual, iterations })
}

fn solve_direct(model: &LindbladModel, l: &Liouvillian, opts: &SteadyOptions) -> Result<SteadyReport> {
    let n = l.size();
    let a = l.to_constrained_csc(0)?;
    let lu = a
        .sp_lu()
        .map_err(|_| Error::DegenerateSteadyState { residual: f64::INFINITY })?;
    let mut b = faer::Col::<C64>::zeros(n);
    b[0] = C64::new(1.0, 0.0);
    let x = lu.solve(&b);
    let xv: Vec<C64> = (0..n).map(|i| x[i]).collect();
    if xv.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::DegenerateSteadyState { residual: f64::INFINITY });
    }
    let report = finish(model.space(), xv, l, SteadyMethod::Direct, 0)?;
    // A unique steady state solves the constrained system to rounding
    // accuracy; a large residual means the null space is not one-dimensional.
    if report.residual > opts.residual_tol.max(1e-8) * 100.0 {
        return Err(Error::DegenerateSteadyState { residual: report.residual });
    }
    Ok(report)
}

/// Exact inverse of `L_A ⊗ I + I ⊗ L_B - (c + shift) I` in the site-split
/// ordering, where `L_A`, `L_B` are the normalized partial traces of `L`
/// over the other site's superoperator space.
struct KronSumPreconditioner {
    alpha: Vec<u32>,
    beta: Vec<u32>,
    va: Mat<C64>,
    va_inv: Mat<C64>,
    vb_t: Mat<C64>,
    vb_inv_t: Mat<C64>,
    inv_denom: Mat<C64>,
}

impl KronSumPreconditioner {
    fn new(l: &Liouvillian, (n1, n2): (usize, usize), shift: f64) -> Result<Self> {
        let d = n1 * n2;
        let (da, db) = (n1 * n1, n2 * n2);
        let n = d * d;
        let mut alpha = Vec::with_capacity(n);
        let mut beta = Vec::with_capacity(n);
        for v in 0..n {
            let (col, row) = (v / d, v % d);
            let (r1, r2) = (row / n2, row % n2);
            let (c1, c2) = (col / n2, col % n2);
            alpha.push((r1 * n1 + c1) as u32);
            beta.push((r2 * n2 + c2) as u32);
        }

        let mut la = Mat::<C64>::zeros(da, da);
        let mut lb = Mat::<C64>::zeros(db, db);
        let mut trace = ZERO;
        for (r, c, v) in l.entries() {
            let (ar, br) = (alpha[r] as usize, beta[r] as usize);
            let (ac, bc) = (alpha[c] as usize, beta[c] as usize);
            if br == bc {
                la[(ar, ac)] += v;
            }
            if ar == ac {
                lb[(br, bc)] += v;
            }
            if r == c {
                trace += v;
            }
        }
        let (wa, wb) = (1.0 / db as f64, 1.0 / da as f64);
        let la = Mat::from_fn(da, da, |i, j| la[(i, j)] * wa);
        let lb = Mat::from_fn(db, db, |i, j| lb[(i, j)] * wb);
        let c0 = trace / n as f64;

        let ea = la.eigen().map_err(|e| Error::Numerical(format!("site eigensolver failed: {e:?}")))?;
        let eb = lb.eigen().map_err(|e| Error::Numerical(format!("site eigensolver failed: {e:?}")))?;
        let va = ea.U().to_owned();
        let vb = eb.U().to_owned();
        let va_inv = va.partial_piv_lu().inverse();
        let vb_inv = vb.partial_piv_lu().inverse();
        let lam: Vec<C64> = (0..da).map(|i| ea.S()[i]).collect();
        let mu: Vec<C64> = (0..db).map(|i| eb.S()[i]).collect();
        let inv_denom = Mat::from_fn(da, db, |i, j| {
            C64::new(1.0, 0.0) / (lam[i] + mu[j] - c0 - C64::new(shift, 0.0))
        });
        let finite = (0..db).all(|j| (0..da).all(|i| inv_denom[(i, j)].is_finite()));
        if !finite {
            return Err(Error::Numerical("singular Kronecker-sum preconditioner".into()));
        }
        Ok(Self {
            alpha,
            beta,
            vb_t: vb.transpose().to_owned(),
            vb_inv_t: vb_inv.transpose().to_owned(),
            va,
            va_inv,
            inv_denom,
        })
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        let (da, db) = (self.va.nrows(), self.vb_t.nrows());
        let mut r = Mat::<C64>::zeros(da, db);
        for (v, z) in x.iter().enumerate() {
            r[(self.alpha[v] as usize, self.beta[v] as usize)] = *z;
        }
        let mut t = &self.va_inv * &r * &self.vb_inv_t;
        for j in 0..db {
            for i in 0..da {
                t[(i, j)] *= self.inv_denom[(i, j)];
            }
        }
        let y = &self.va * &t * &self.vb_t;
        (0..x.len()).map(|v| y[(self.alpha[v] as usize, self.beta[v] as usize)]).collect()
    }
}

fn solve_krylov(
    model: &LindbladModel,
    l: &Liouvillian,
    sites: (usize, usize),
    opts: &SteadyOptions,
) -> Result<SteadyReport> {
    let space = model.space();
    let prec = KronSumPreconditioner::new(l, sites, opts.krylov_shift)?;
    // Solve L y = -L x0 from the maximally mixed state; x0 + y is then a
    // null vector of L.
    let x0 = vectorize(DensityMatrix::maximally_mixed(space).matrix());
    let b: Vec<C64> = l.apply_vec(&x0).into_iter().map(|z| -z).collect();
    let gopts = GmresOptions { restart: opts.krylov_restart, max_iter: opts.krylov_max_iter, rel_tol: 1e-13 };
    let mut y = vec![ZERO; x0.len()];
    let mut iterations = 0;
    for _ in 0..4 {
        let out = gmres(|v| l.apply_vec(v), |v| prec.apply(v), &b, y, &gopts);
        iterations += out.iterations;
        y = out.x;
        let x: Vec<C64> = x0.iter().zip(&y).map(|(a, c)| a + c).collect();
        let report = finish(space, x, l, SteadyMethod::Krylov, iterations)?;
        if report.residual <= opts.residual_tol {
            return Ok(report);
        }
        if iterations >= opts.krylov_max_iter {
            break;
        }
    }
    Err(Error::Numerical(format!("GMRES did not converge in {iterations} iterations")))
}
