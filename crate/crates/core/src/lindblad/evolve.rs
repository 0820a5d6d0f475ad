//! Adaptive Dormand-Prince 5(4) integration of the master equation.

use super::liouvillian::{liouvillian, unvectorize, vectorize, Liouvillian};
use super::LindbladModel;
use crate::error::{Error, Result};
use crate::hilbert::{DensityMatrix, C64, ZERO};

#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    pub t_final: f64,
    pub dt_initial: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Number of equally spaced output intervals; states are reported at
    /// `k * t_final / n_samples` for `k = 0..=n_samples`.
    pub n_samples: usize,
    /// Steps smaller than this (relative to `max(1, t)`) abort the run.
    pub dt_min: f64,
}

impl EvolveOptions {
    pub fn new(t_final: f64, dt_initial: f64) -> Self {
        Self { t_final, dt_initial, rtol: 1e-9, atol: 1e-11, n_samples: 1, dt_min: 1e-12 }
    }

    pub fn with_samples(mut self, n: usize) -> Self {
        self.n_samples = n.max(1);
        self
    }

    pub fn with_tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

impl Trajectory {
    pub fn last(&self) -> &DensityMatrix {
        self.states.last().expect("trajectory holds the initial state")
    }
}

// Dormand-Prince tableau. The generator is time independent, so the nodes are unused.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Stepper state shared by [`evolve`] and [`evolve_to_steady`].
struct Stepper<'a> {
    l: &'a Liouvillian,
    d: usize,
    rtol: f64,
    atol: f64,
    dt_min: f64,
    k: Vec<Vec<C64>>,
    stage: Vec<C64>,
}

impl<'a> Stepper<'a> {
    fn new(l: &'a Liouvillian, rtol: f64, atol: f64, dt_min: f64) -> Self {
        let n = l.size();
        Self { l, d: l.dim(), rtol, atol, dt_min, k: vec![vec![ZERO; n]; 7], stage: vec![ZERO; n] }
    }

    /// Attempts steps until one of size at most `dt_max` is accepted.
    /// Returns `(dt_taken, dt_next)`. `self.k[0]` must hold `L x`.
    fn step(&mut self, x: &mut Vec<C64>, t: f64, mut dt: f64, dt_max: f64) -> Result<(f64, f64)> {
        loop {
            dt = dt.min(dt_max);
            if dt < self.dt_min * t.abs().max(1.0) {
                return Err(Error::StiffnessFailure { t, dt });
            }
            for s in 1..7 {
                for (i, out) in self.stage.iter_mut().enumerate() {
                    let mut acc = x[i];
                    for (j, a) in A[s].iter().enumerate().take(s) {
                        if *a != 0.0 {
                            acc += self.k[j][i] * (a * dt);
                        }
                    }
                    *out = acc;
                }
                self.l.apply(&self.stage, &mut self.k[s]);
            }
            let mut err_sq = 0.0;
            let n = x.len();
            let mut next = vec![ZERO; n];
            for i in 0..n {
                let mut hi = ZERO;
                let mut lo = ZERO;
                for s in 0..7 {
                    hi += self.k[s][i] * B5[s];
                    lo += self.k[s][i] * B4[s];
                }
                next[i] = x[i] + hi * dt;
                let scale = self.atol + self.rtol * x[i].norm().max(next[i].norm());
                err_sq += ((hi - lo) * dt).norm_sqr() / (scale * scale);
            }
            let err = (err_sq / n as f64).sqrt();
            if err <= 1.0 {
                *x = next;
                project_physical(x, self.d);
                self.l.apply(x, &mut self.k[0]);
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                return Ok((dt, dt * fac));
            }
            dt *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
        }
    }
}

/// Hermitian symmetrization `(rho + rho†)/2` followed by trace normalization.
fn project_physical(x: &mut [C64], d: usize) {
    for c in 0..d {
        for r in 0..=c {
            let a = x[c * d + r];
            let b = x[r * d + c];
            let avg = (a + b.conj()) * 0.5;
            x[c * d + r] = avg;
            x[r * d + c] = avg.conj();
        }
    }
    let tr: f64 = (0..d).map(|i| x[i * d + i].re).sum();
    if tr.abs() > 0.0 {
        x.iter_mut().for_each(|z| *z /= tr);
    }
}

fn check_initial(rho0: &DensityMatrix, model: &LindbladModel) -> Result<()> {
    if rho0.space() != model.space() {
        return Err(Error::InvalidSpace(format!(
            "initial state on {}, model on {}",
            rho0.space(),
            model.space()
        )));
    }
    rho0.validate(&Default::default())
}

/// Integrates `d rho / dt = L rho` from `rho0` up to `opts.t_final`.
pub fn evolve(rho0: &DensityMatrix, model: &LindbladModel, opts: &EvolveOptions) -> Result<Trajectory> {
    check_initial(rho0, model)?;
    if !(opts.t_final >= 0.0 && opts.dt_initial > 0.0) {
        return Err(Error::InvalidParams("need t_final >= 0 and dt_initial > 0".into()));
    }
    let l = liouvillian(model);
    let d = l.dim();
    let space = model.space();
    let mut x = vectorize(rho0.matrix());
    let mut stepper = Stepper::new(&l, opts.rtol, opts.atol, opts.dt_min);
    l.apply(&x, &mut stepper.k[0]);

    let mut times = vec![0.0];
    let mut states = vec![rho0.clone()];
    let mut t = 0.0;
    let mut dt = opts.dt_initial;
    let n = opts.n_samples.max(1);
    for s in 1..=n {
        let target = opts.t_final * s as f64 / n as f64;
        while t < target - 1e-14 * target.max(1.0) {
            let (taken, next) = stepper.step(&mut x, t, dt, target - t)?;
            t += taken;
            dt = next;
        }
        t = target;
        times.push(t);
        states.push(DensityMatrix::new_unchecked(space, unvectorize(&x, d))?);
    }
    Ok(Trajectory { times, states })
}

/// Integrates until `|d rho / dt|_inf < tol` or `t_max` is reached.
/// Returns the final state and the time at which convergence was detected.
pub fn evolve_to_steady(
    rho0: &DensityMatrix,
    model: &LindbladModel,
    tol: f64,
    t_max: f64,
) -> Result<(DensityMatrix, f64)> {
    check_initial(rho0, model)?;
    let l = liouvillian(model);
    let d = l.dim();
    let mut x = vectorize(rho0.matrix());
    let mut stepper = Stepper::new(&l, 1e-10, 1e-13, 1e-12);
    l.apply(&x, &mut stepper.k[0]);
    let mut t = 0.0;
    let mut dt = 1e-3;
    loop {
        let rate = stepper.k[0].iter().map(|z| z.norm()).fold(0.0, f64::max);
        if rate < tol {
            return Ok((DensityMatrix::new_unchecked(model.space(), unvectorize(&x, d))?, t));
        }
        if t >= t_max {
            return Err(Error::Numerical(format!(
                "evolution did not reach |d rho/dt| < {tol:.1e} by t = {t_max} (rate {rate:.3e})"
            )));
        }
        let (taken, next) = stepper.step(&mut x, t, dt, f64::INFINITY)?;
        t += taken;
        dt = next;
    }
}
