//! Restarted GMRES with right preconditioning.

use crate::hilbert::{C64, ZERO};

#[derive(Debug, Clone, Copy)]
pub struct GmresOptions {
    /// Krylov subspace size between restarts.
    pub restart: usize,
    /// Total inner-iteration cap.
    pub max_iter: usize,
    /// Stop when `|b - A x|_2 <= rel_tol * |b|_2`.
    pub rel_tol: f64,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self { restart: 60, max_iter: 2000, rel_tol: 1e-13 }
    }
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<C64>,
    pub iterations: usize,
    /// Final true relative residual `|b - A x| / |b|`.
    pub rel_residual: f64,
    pub converged: bool,
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Solves `A x = b` starting from `x0`, with `A` and the right
/// preconditioner `M⁻¹` given as closures (`A M⁻¹ u = b`, `x = M⁻¹ u`).
pub fn gmres<A, P>(apply: A, precondition: P, b: &[C64], x0: Vec<C64>, opts: &GmresOptions) -> GmresOutcome
where
    A: Fn(&[C64]) -> Vec<C64>,
    P: Fn(&[C64]) -> Vec<C64>,
{
    let n = b.len();
    let m = opts.restart.max(1);
    let b_norm = norm(b).max(f64::MIN_POSITIVE);
    let mut x = x0;
    let mut iterations = 0;

    loop {
        let ax = apply(&x);
        let r: Vec<C64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let beta = norm(&r);
        let rel = beta / b_norm;
        if rel <= opts.rel_tol || iterations >= opts.max_iter {
            return GmresOutcome { x, iterations, rel_residual: rel, converged: rel <= opts.rel_tol };
        }

        let mut basis: Vec<Vec<C64>> = vec![r.iter().map(|z| z / beta).collect()];
        let mut precond_basis: Vec<Vec<C64>> = Vec::with_capacity(m);
        let mut h = vec![vec![ZERO; m]; m + 1];
        let mut cs = vec![ZERO; m];
        let mut sn = vec![ZERO; m];
        let mut g = vec![ZERO; m + 1];
        g[0] = C64::new(beta, 0.0);
        let mut k = 0;

        for j in 0..m {
            iterations += 1;
            let z = precondition(&basis[j]);
            let mut w = apply(&z);
            precond_basis.push(z);
            // Modified Gram-Schmidt, twice for stability.
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let hij = dot(v, &w);
                    h[i][j] += hij;
                    w.iter_mut().zip(v).for_each(|(wk, vk)| *wk -= hij * vk);
                }
            }
            let hn = norm(&w);
            h[j + 1][j] = C64::new(hn, 0.0);
            for i in 0..j {
                let t = cs[i].conj() * h[i][j] + sn[i].conj() * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let den = (h[j][j].norm_sqr() + h[j + 1][j].norm_sqr()).sqrt();
            if den == 0.0 {
                k = j;
                break;
            }
            cs[j] = h[j][j] / den;
            sn[j] = h[j + 1][j] / den;
            h[j][j] = C64::new(den, 0.0);
            h[j + 1][j] = ZERO;
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j].conj() * g[j];
            k = j + 1;
            if g[j + 1].norm() / b_norm <= opts.rel_tol * 0.5 || hn == 0.0 || iterations >= opts.max_iter {
                break;
            }
            basis.push(w.into_iter().map(|z| z / hn).collect());
        }

        let mut y = vec![ZERO; k];
        for i in (0..k).rev() {
            let s = (i + 1..k).fold(g[i], |acc, l| acc - h[i][l] * y[l]);
            y[i] = s / h[i][i];
        }
        for (yi, z) in y.iter().zip(&precond_basis) {
            x.iter_mut().zip(z).for_each(|(xk, zk)| *xk += yi * zk);
        }
        debug_assert_eq!(x.len(), n);
    }
}
