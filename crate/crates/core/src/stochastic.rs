//! Noisy-classical tier: the truncated Fokker-Planck description of the
//! coupled pair, integrated as an Itô SDE `dX = mu dt + sigma dW` with
//! Euler-Maruyama, and ensemble statistics of `|alpha_1|²`.
//!
//! State layout is `[x1, y1, x2, y2]` as in [`crate::classical`].

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::PhaseState;
use crate::error::{Error, Result};
use crate::params::SystemParams;

pub type Mat4 = [[f64; 4]; 4];

/// Rounding slack below which a negative `lambda_minus` is treated as zero.
pub const LAMBDA_CLAMP: f64 = 1e-12;

/// Below this `eps q` the two sites decouple and `sigma` is diagonal.
pub const DECOUPLED_EPS_Q: f64 = 1e-12;

/// Drift vector:
/// `mu_xj = omega y_j + [k1/2 - k2 (r_j² - 1) - (eps gamma - eps q / 2)] x_j + (eps q / 2) x_j'`,
/// `mu_yj = -omega x_j + [k1/2 - k2 (r_j² - 1)] y_j`.
pub fn drift(s: &PhaseState, p: &SystemParams) -> PhaseState {
    let mut mu = [0.0; 4];
    for j in 0..2 {
        let (x, y) = (s[2 * j], s[2 * j + 1]);
        let xo = s[2 * (1 - j)];
        let gain = 0.5 * p.k1 - p.k2 * (x * x + y * y - 1.0);
        mu[2 * j] = p.omega * y + (gain - (p.eps * p.gamma - 0.5 * p.eps * p.q)) * x + 0.5 * p.eps * p.q * xo;
        mu[2 * j + 1] = -p.omega * x + gain * y;
    }
    mu
}

/// `nu_j = k1/2 + k2 (2 r_j² - 1) + eps q / 4 + eps gamma / 2`.
pub fn nu(s: &PhaseState, p: &SystemParams) -> [f64; 2] {
    std::array::from_fn(|j| {
        let r2 = s[2 * j] * s[2 * j] + s[2 * j + 1] * s[2 * j + 1];
        0.5 * p.k1 + p.k2 * (2.0 * r2 - 1.0) + 0.25 * p.eps * p.q + 0.5 * p.eps * p.gamma
    })
}

/// Diffusion matrix `D = 1/2 [[nu1, 0, c, 0], [0, nu1, 0, c], [c, 0, nu2, 0], [0, c, 0, nu2]]`
/// with `c = eps q / 4`, together with `(nu1, nu2)`.
pub fn diffusion(s: &PhaseState, p: &SystemParams) -> (Mat4, [f64; 2]) {
    let n = nu(s, p);
    (diffusion_from_nu(n, p.eps * p.q), n)
}

pub fn diffusion_from_nu(n: [f64; 2], eps_q: f64) -> Mat4 {
    let c = 0.125 * eps_q;
    [
        [0.5 * n[0], 0.0, c, 0.0],
        [0.0, 0.5 * n[0], 0.0, c],
        [c, 0.0, 0.5 * n[1], 0.0],
        [0.0, c, 0.0, 0.5 * n[1]],
    ]
}

/// Closed-form square root of the diffusion matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseDecomposition {
    pub sigma: Mat4,
    /// `(lambda_minus, lambda_plus)`, each doubly degenerate in `D`.
    pub lambdas: (f64, f64),
    /// `(u_minus, u_plus)`; `None` on the decoupled path.
    pub u: Option<(f64, f64)>,
}

fn sigma_pattern(s1: f64, s2: f64, s3: f64) -> Mat4 {
    [[s1, 0.0, s3, 0.0], [0.0, s1, 0.0, s3], [s3, 0.0, s2, 0.0], [0.0, s3, 0.0, s2]]
}

fn clamp_lambda(l: f64) -> Result<f64> {
    if l >= 0.0 {
        Ok(l)
    } else if l > -LAMBDA_CLAMP {
        Ok(0.0)
    } else {
        Err(Error::NegativeDiffusion { lambda_minus: l })
    }
}

/// `sigma = U sqrt(D_diag) U^-1` with
/// `lambda_± = [nu1 + nu2 ± S] / 4`, `u_± = 2 (nu1 - nu2 ± S) / (eps q)`,
/// `S = sqrt((nu1 - nu2)² + (eps q / 2)²)`, giving
/// `sigma1 = (u+ √λ+ - u- √λ-) / (u+ - u-)`, `sigma2 = (u+ √λ- - u- √λ+) / (u+ - u-)`,
/// `sigma3 = (√λ+ - √λ-) / (u+ - u-)`.
///
/// Since `u+ u- = -1`, the root of `u_±` that would cancel is taken from
/// the other one.
pub fn sigma_decompose(n: [f64; 2], eps_q: f64) -> Result<NoiseDecomposition> {
    let [n1, n2] = n;
    if eps_q.abs() < DECOUPLED_EPS_Q {
        let (lo, hi) = (n1.min(n2) / 2.0, n1.max(n2) / 2.0);
        let lo = clamp_lambda(lo)?;
        let sigma = sigma_pattern((n1 / 2.0).max(0.0).sqrt(), (n2 / 2.0).max(0.0).sqrt(), 0.0);
        return Ok(NoiseDecomposition { sigma, lambdas: (lo, hi), u: None });
    }
    let delta = n1 - n2;
    let s = delta.hypot(0.5 * eps_q);
    let lam_p = 0.25 * (n1 + n2 + s);
    let lam_m = clamp_lambda(0.25 * (n1 + n2 - s))?;
    let (u_m, u_p) = if delta >= 0.0 {
        let u_p = 2.0 * (delta + s) / eps_q;
        (-1.0 / u_p, u_p)
    } else {
        let u_m = 2.0 * (delta - s) / eps_q;
        (u_m, -1.0 / u_m)
    };
    let (rp, rm) = (lam_p.sqrt(), lam_m.sqrt());
    let den = u_p - u_m;
    let sigma = sigma_pattern((u_p * rp - u_m * rm) / den, (u_p * rm - u_m * rp) / den, (rp - rm) / den);
    Ok(NoiseDecomposition { sigma, lambdas: (lam_m, lam_p), u: Some((u_m, u_p)) })
}

/// Drift, diffusion and noise matrix at one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftDiffusion {
    pub mu: PhaseState,
    pub d: Mat4,
    pub nu: [f64; 2],
    pub noise: NoiseDecomposition,
}

pub fn drift_diffusion(s: &PhaseState, p: &SystemParams) -> Result<DriftDiffusion> {
    let (d, n) = diffusion(s, p);
    Ok(DriftDiffusion { mu: drift(s, p), d, nu: n, noise: sigma_decompose(n, p.eps * p.q)? })
}

/// Euler-Maruyama update `X + mu dt + sigma dW`; `dw` holds four
/// independent increments of variance `dt`.
pub fn em_step(s: &PhaseState, p: &SystemParams, dt: f64, dw: &[f64; 4]) -> Result<PhaseState> {
    let mu = drift(s, p);
    let sig = sigma_decompose(nu(s, p), p.eps * p.q)?.sigma;
    Ok(std::array::from_fn(|i| {
        s[i] + mu[i] * dt + (0..4).map(|k| sig[i][k] * dw[k]).sum::<f64>()
    }))
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleOptions {
    pub n_realizations: usize,
    pub t_final: f64,
    pub dt: f64,
    pub base_seed: u64,
    /// Initial conditions are uniform on `[-init_half_width, init_half_width]^4`.
    pub init_half_width: f64,
    /// Trailing fraction of the run averaged as the steady window.
    pub steady_fraction: f64,
    /// Spacing of the time-resolved output.
    pub sample_interval: f64,
    /// `false` switches the noise off (deterministic drift flow).
    pub noise: bool,
    /// Norm beyond which a realization is declared divergent.
    pub blowup_norm: f64,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self {
            n_realizations: 1000,
            t_final: 200.0,
            dt: 1e-3,
            base_seed: 0,
            init_half_width: 2.0,
            steady_fraction: 0.2,
            sample_interval: 1.0,
            noise: true,
            blowup_norm: 1e6,
        }
    }
}

impl EnsembleOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_realizations == 0 {
            return Err(Error::InvalidParams("need at least one realization".into()));
        }
        if !(self.dt > 0.0 && self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidParams("need dt > 0 and finite t_final > 0".into()));
        }
        if !(self.steady_fraction > 0.0 && self.steady_fraction <= 1.0) {
            return Err(Error::InvalidParams("steady_fraction must lie in (0, 1]".into()));
        }
        if !(self.sample_interval > 0.0 && self.init_half_width >= 0.0) {
            return Err(Error::InvalidParams("need sample_interval > 0 and init_half_width >= 0".into()));
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.t_final / self.dt).round().max(1.0) as usize
    }

    fn sample_every(&self) -> usize {
        ((self.sample_interval / self.dt).round() as usize).max(1)
    }
}

/// Output of one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realization {
    pub index: usize,
    pub initial: PhaseState,
    pub final_state: PhaseState,
    /// `|alpha_1|²` at the sample instants, starting with `t = 0`.
    pub samples: Vec<f64>,
    /// Time average of `|alpha_1|²` over the steady window.
    pub steady_mean: f64,
}

/// Independent stream for realization `index`.
pub fn realization_rng(base_seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index as u64);
    rng
}

pub fn run_realization(p: &SystemParams, opts: &EnsembleOptions, index: usize) -> Result<Realization> {
    let mut rng = realization_rng(opts.base_seed, index);
    let w = opts.init_half_width;
    let initial: PhaseState = std::array::from_fn(|_| if w > 0.0 { rng.random_range(-w..=w) } else { 0.0 });
    let steps = opts.steps();
    let every = opts.sample_every();
    let window_start = steps - ((opts.steady_fraction * steps as f64).round() as usize).clamp(1, steps);
    let sq_dt = opts.dt.sqrt();
    let amp = |s: &PhaseState| s[0] * s[0] + s[1] * s[1];

    let mut s = initial;
    let mut samples = vec![amp(&s)];
    let mut window = KahanSum::default();
    for k in 1..=steps {
        let dw: [f64; 4] = if opts.noise {
            std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal) * sq_dt)
        } else {
            [0.0; 4]
        };
        s = em_step(&s, p, opts.dt, &dw)?;
        let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > opts.blowup_norm {
            return Err(Error::Blowup { t: k as f64 * opts.dt, norm });
        }
        if k > window_start {
            window.add(amp(&s));
        }
        if k % every == 0 {
            samples.push(amp(&s));
        }
    }
    Ok(Realization {
        index,
        initial,
        final_state: s,
        samples,
        steady_mean: window.value() / (steps - window_start) as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    /// Ensemble mean of `|alpha_1|²` at each instant.
    pub mean_sq_amp: Vec<f64>,
    /// Standard error of that mean.
    pub stderr: Vec<f64>,
    /// Ensemble mean of the per-realization steady-window averages.
    pub steady_mean: f64,
    pub steady_stderr: f64,
    pub n_realizations: usize,
    pub seed: u64,
    pub params: SystemParams,
    pub options: EnsembleOptions,
}

fn mean_and_stderr(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mut sum = KahanSum::default();
    values.clone().for_each(|v| sum.add(v));
    let mean = sum.value() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let mut var = KahanSum::default();
    values.for_each(|v| var.add((v - mean) * (v - mean)));
    (mean, (var.value() / (n - 1) as f64 / n as f64).sqrt())
}

impl EnsembleStats {
    /// Reduces realizations in the order given.
    pub fn from_realizations(
        runs: &[Realization],
        p: &SystemParams,
        opts: &EnsembleOptions,
    ) -> Result<Self> {
        let n = runs.len();
        if n == 0 {
            return Err(Error::InvalidParams("no realizations to reduce".into()));
        }
        let len = runs[0].samples.len();
        if runs.iter().any(|r| r.samples.len() != len) {
            return Err(Error::InvalidState("realizations have different sample counts".into()));
        }
        let every = opts.sample_every() as f64 * opts.dt;
        let times = (0..len).map(|i| i as f64 * every).collect();
        let (mut mean_sq_amp, mut stderr) = (Vec::with_capacity(len), Vec::with_capacity(len));
        for i in 0..len {
            let (m, e) = mean_and_stderr(runs.iter().map(|r| r.samples[i]), n);
            mean_sq_amp.push(m);
            stderr.push(e);
        }
        let (steady_mean, steady_stderr) = mean_and_stderr(runs.iter().map(|r| r.steady_mean), n);
        Ok(Self {
            times,
            mean_sq_amp,
            stderr,
            steady_mean,
            steady_stderr,
            n_realizations: n,
            seed: opts.base_seed,
            params: *p,
            options: *opts,
        })
    }

    /// Writes `time,mean,stderr` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["time", "mean", "stderr"])?;
        for i in 0..self.times.len() {
            wtr.serialize((self.times[i], self.mean_sq_amp[i], self.stderr[i]))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Runs all realizations in parallel and reduces them in index order.
pub fn ensemble_run(p: &SystemParams, opts: &EnsembleOptions) -> Result<EnsembleStats> {
    opts.validate()?;
    let runs: Vec<Realization> = (0..opts.n_realizations)
        .into_par_iter()
        .map(|i| run_realization(p, opts, i))
        .collect::<Result<_>>()?;
    EnsembleStats::from_realizations(&runs, p, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::{Mat, Side};
    use proptest::prelude::*;

    fn weak() -> SystemParams {
        SystemParams::weak_regime()
    }

    fn mat4_mul(a: &Mat4, b: &Mat4) -> Mat4 {
        std::array::from_fn(|i| std::array::from_fn(|j| (0..4).map(|k| a[i][k] * b[k][j]).sum()))
    }

    fn frob_diff(a: &Mat4, b: &Mat4) -> f64 {
        (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).map(|(i, j)| (a[i][j] - b[i][j]).powi(2)).sum::<f64>().sqrt()
    }

    /// Symmetric square root through a general eigensolver.
    fn sqrtm_oracle(d: &Mat4) -> Mat4 {
        let m = Mat::from_fn(4, 4, |i, j| d[i][j]);
        let evd = m.self_adjoint_eigen(Side::Lower).unwrap();
        let (u, s) = (evd.U(), evd.S());
        std::array::from_fn(|i| {
            std::array::from_fn(|j| (0..4).map(|k| u[(i, k)] * s[k].max(0.0).sqrt() * u[(j, k)]).sum())
        })
    }

    #[test]
    fn drift_examples() {
        let p = weak();
        assert_eq!(drift(&[0.0; 4], &p.with_eps(3.5)), [0.0; 4]);
        let mu = drift(&[1.0, 0.0, 0.0, 0.0], &p);
        assert!((mu[0] - 0.5).abs() < 1e-15 && (mu[1] + 2.0).abs() < 1e-15);
        assert_eq!(&mu[2..], &[0.0, 0.0]);
    }

    #[test]
    fn drift_decouples_into_single_oscillators() {
        let p = weak();
        let s = [0.4, -0.3, 1.2, 0.9];
        let mu = drift(&s, &p);
        let single = |x: f64, y: f64| {
            let g = 0.5 * p.k1 - p.k2 * (x * x + y * y - 1.0);
            [p.omega * y + g * x, -p.omega * x + g * y]
        };
        assert_eq!([mu[0], mu[1]], single(s[0], s[1]));
        assert_eq!([mu[2], mu[3]], single(s[2], s[3]));
    }

    #[test]
    fn diffusion_examples() {
        let (d, n) = diffusion(&[0.0; 4], &weak());
        assert!((n[0] - 0.3).abs() < 1e-15 && (n[1] - 0.3).abs() < 1e-15);
        for i in 0..4 {
            assert!((d[i][i] - 0.15).abs() < 1e-15);
        }
        let p = weak().with_eps(3.5);
        let s = [0.6, 0.8, 0.6, 0.8];
        let n = nu(&s, &p);
        assert_eq!(n[0], n[1]);
        let expected = 0.5 + 0.2 + 3.5 * 0.2 / 4.0 + 3.5 / 2.0;
        assert!((n[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn symmetric_nu_gives_simple_lambdas() {
        let dec = sigma_decompose([0.9, 0.9], 0.7).unwrap();
        assert!((dec.lambdas.0 - 0.25 * (1.8 - 0.35)).abs() < 1e-15);
        assert!((dec.lambdas.1 - 0.25 * (1.8 + 0.35)).abs() < 1e-15);
    }

    #[test]
    fn decoupled_sigma_is_diagonal() {
        let dec = sigma_decompose([0.6, 1.4], 0.0).unwrap();
        assert!(dec.u.is_none());
        assert_eq!(dec.sigma, sigma_pattern(0.3f64.sqrt(), 0.7f64.sqrt(), 0.0));
        // The coupled formula approaches the same limit.
        let near = sigma_decompose([0.6, 1.4], 1e-9).unwrap();
        assert!(frob_diff(&near.sigma, &dec.sigma) < 1e-8);
    }

    #[test]
    fn u_product_is_minus_one() {
        let (um, up) = sigma_decompose([0.4, 1.1], 0.9).unwrap().u.unwrap();
        assert!((um * up + 1.0).abs() < 1e-14);
    }

    #[test]
    fn negative_diffusion_is_reported_or_clamped() {
        // lambda_- = (nu1 + nu2 - S) / 4 < 0 when eps q dominates.
        let err = sigma_decompose([0.1, 0.1], 2.0).unwrap_err();
        assert_eq!(err.tag(), "negative-diffusion");
        assert_eq!(sigma_decompose([-0.2, 0.4], 0.0).unwrap_err().tag(), "negative-diffusion");
        // Exactly singular x-block: 4 nu1 nu2 = (eps q / 2)².
        let dec = sigma_decompose([0.5, 0.5], 2.0).unwrap();
        assert_eq!(dec.lambdas.0, 0.0);
        let d = diffusion_from_nu([0.5, 0.5], 2.0);
        assert!(frob_diff(&mat4_mul(&dec.sigma, &dec.sigma), &d) < 1e-12);
    }

    #[test]
    fn zero_noise_step_is_euler() {
        let p = weak().with_eps(3.5).with_gamma(0.4);
        let s = [0.3, -0.2, 0.7, 0.1];
        let next = em_step(&s, &p, 1e-2, &[0.0; 4]).unwrap();
        let mu = drift(&s, &p);
        for i in 0..4 {
            assert_eq!(next[i], s[i] + mu[i] * 1e-2);
        }
    }

    #[test]
    fn noiseless_ensemble_follows_drift() {
        let p = weak().with_eps(3.5).with_gamma(0.4);
        let opts = EnsembleOptions { n_realizations: 1, t_final: 2.0, noise: false, ..EnsembleOptions::default() };
        let stats = ensemble_run(&p, &opts).unwrap();
        let run = run_realization(&p, &opts, 0).unwrap();
        let mut s = run.initial;
        for _ in 0..2000 {
            let mu = drift(&s, &p);
            s = std::array::from_fn(|i| s[i] + mu[i] * 1e-3);
        }
        assert_eq!(s, run.final_state);
        assert_eq!(*stats.mean_sq_amp.last().unwrap(), s[0] * s[0] + s[1] * s[1]);
        assert_eq!(stats.stderr[0], 0.0);
    }

    #[test]
    fn ensembles_are_reproducible() {
        let p = weak().with_eps(3.5);
        let opts = EnsembleOptions { n_realizations: 8, t_final: 5.0, base_seed: 42, ..EnsembleOptions::default() };
        let a = ensemble_run(&p, &opts).unwrap();
        let b = ensemble_run(&p, &opts).unwrap();
        assert_eq!(a, b);
        let c = ensemble_run(&p, &EnsembleOptions { base_seed: 43, ..opts }).unwrap();
        assert_ne!(a.mean_sq_amp, c.mean_sq_amp);
        assert_eq!(a.times.len(), 6);
        assert!(a.mean_sq_amp.iter().all(|&v| v >= 0.0));
        // Streams differ between realizations of one seed.
        let r0 = run_realization(&p, &opts, 0).unwrap();
        let r1 = run_realization(&p, &opts, 1).unwrap();
        assert_ne!(r0.initial, r1.initial);
        assert!(r0.initial.iter().all(|v| v.abs() <= 2.0));
    }

    #[test]
    fn reduction_is_order_independent() {
        let p = weak().with_eps(3.5).with_gamma(0.6);
        let opts = EnsembleOptions { n_realizations: 40, t_final: 4.0, base_seed: 7, ..EnsembleOptions::default() };
        let mut runs: Vec<Realization> = (0..40).map(|i| run_realization(&p, &opts, i).unwrap()).collect();
        let a = EnsembleStats::from_realizations(&runs, &p, &opts).unwrap();
        runs.reverse();
        runs.swap(3, 17);
        let b = EnsembleStats::from_realizations(&runs, &p, &opts).unwrap();
        assert!((a.steady_mean - b.steady_mean).abs() <= 1e-12);
        for (x, y) in a.mean_sq_amp.iter().zip(&b.mean_sq_amp) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn stationary_amplitude_is_step_size_stable() {
        // Cross-discretization oracle: halving the step with independent
        // noise leaves the stationary <x1² + y1²> within 3 standard errors.
        let p = weak();
        let base = EnsembleOptions {
            n_realizations: 200,
            t_final: 60.0,
            steady_fraction: 0.5,
            dt: 2e-3,
            base_seed: 1,
            ..EnsembleOptions::default()
        };
        let coarse = ensemble_run(&p, &base).unwrap();
        let fine = ensemble_run(&p, &EnsembleOptions { dt: 1e-3, base_seed: 2, ..base }).unwrap();
        let se = coarse.steady_stderr.hypot(fine.steady_stderr);
        assert!((coarse.steady_mean - fine.steady_mean).abs() < 3.0 * se, "{} vs {} (se {se})", coarse.steady_mean, fine.steady_mean);
    }

    #[test]
    fn rejects_bad_options() {
        let p = weak();
        for opts in [
            EnsembleOptions { n_realizations: 0, ..EnsembleOptions::default() },
            EnsembleOptions { dt: 0.0, ..EnsembleOptions::default() },
            EnsembleOptions { steady_fraction: 1.5, ..EnsembleOptions::default() },
        ] {
            assert_eq!(ensemble_run(&p, &opts).unwrap_err().tag(), "invalid-params");
        }
    }

    #[test]
    fn csv_and_json_outputs() {
        let p = weak();
        let opts = EnsembleOptions { n_realizations: 3, t_final: 2.0, ..EnsembleOptions::default() };
        let stats = ensemble_run(&p, &opts).unwrap();
        let mut buf = Vec::new();
        stats.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,mean,stderr\n0.0,"));
        assert_eq!(text.lines().count(), 4);
        let json: serde_json::Value = serde_json::from_str(&stats.to_json().unwrap()).unwrap();
        assert_eq!(json["seed"], 0);
        assert_eq!(json["params"]["k2"], 0.2);
    }

    #[test]
    fn kahan_sum_recovers_small_terms() {
        let mut k = KahanSum::default();
        k.add(1e16);
        for _ in 0..1000 {
            k.add(1.0);
        }
        k.add(-1e16);
        assert_eq!(k.value(), 1000.0);
    }

    fn valid_nu() -> impl Strategy<Value = ([f64; 2], f64)> {
        (0.0f64..5.0, 0.0f64..5.0, 0.0f64..5.0)
            .prop_filter("lambda_minus >= 0", |(a, b, c)| 4.0 * a * b >= 0.25 * c * c)
            .prop_map(|(a, b, c)| ([a, b], c))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn sigma_squares_to_diffusion((n, eq) in valid_nu()) {
            let dec = sigma_decompose(n, eq).unwrap();
            let d = diffusion_from_nu(n, eq);
            let sig = dec.sigma;
            prop_assert!(frob_diff(&mat4_mul(&sig, &sig), &d) < 1e-10);
            for i in 0..4 {
                for j in 0..4 {
                    prop_assert_eq!(sig[i][j], sig[j][i]);
                }
            }
            prop_assert!(dec.lambdas.1 >= dec.lambdas.0);
            // x-block [[nu1/2, eps q/8], [eps q/8, nu2/2]] eigenvalues.
            let xb = Mat::from_fn(2, 2, |i, j| if i == j { 0.5 * n[i] } else { 0.125 * eq });
            let ev = xb.self_adjoint_eigenvalues(Side::Lower).unwrap();
            prop_assert!((ev[0].max(0.0) - dec.lambdas.0).abs() < 1e-12);
            prop_assert!((ev[1] - dec.lambdas.1).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn sigma_matches_general_square_root(
            s in proptest::array::uniform4(-2.0f64..2.0),
            eps in 0.0f64..6.0, q in 0.0f64..=1.0, gamma in 0.05f64..=1.0,
        ) {
            let p = SystemParams { eps, q, gamma, ..SystemParams::weak_regime() };
            let dd = drift_diffusion(&s, &p).unwrap();
            prop_assert!(frob_diff(&dd.noise.sigma, &sqrtm_oracle(&dd.d)) < 1e-10);
            for i in 0..4 {
                for j in 0..4 {
                    prop_assert!((dd.d[i][j] - dd.d[j][i]).abs() < 1e-12);
                }
            }
        }
    }
}
