//! Classical van der Pol oscillators: the planar equations, the averaged
//! amplitude equations, the pair under weighted mean-field diffusive
//! coupling with revival parameter `gamma`, their fixed points and the
//! Hopf and pitchfork thresholds of the origin.
//!
//! Phase-space states are fixed-size arrays: `[x, y]` for one oscillator,
//! `[x1, y1, x2, y2]` for the pair. A complex amplitude `alpha = x + i y`
//! maps onto the same layout.

use std::io::Write;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::C64;
use crate::params::SystemParams;

pub type PhaseState = [f64; 4];

/// `x' = omega y`, `y' = -omega x + (k1 - 8 k2 x²) y`.
pub fn vdp_rhs(s: &[f64; 2], p: &SystemParams) -> [f64; 2] {
    let [x, y] = *s;
    [p.omega * y, -p.omega * x + (p.k1 - 8.0 * p.k2 * x * x) * y]
}

/// `alpha' = -i omega alpha + (k1/2 - k2 |alpha|²) alpha`.
pub fn amplitude_rhs(alpha: C64, p: &SystemParams) -> C64 {
    C64::new(0.0, -p.omega) * alpha + alpha * (0.5 * p.k1 - p.k2 * alpha.norm_sqr())
}

/// Stable orbit radius `sqrt(k1 / (2 k2))` of the amplitude equation.
pub fn limit_cycle_radius(p: &SystemParams) -> f64 {
    (p.k1 / (2.0 * p.k2)).sqrt()
}

/// Coupled pair:
/// `x_j' = omega y_j + eps (q/2 (x1 + x2) - gamma x_j)`,
/// `y_j' = -omega x_j + (k1 - 8 k2 x_j²) y_j`.
pub fn coupled_rhs(s: &PhaseState, p: &SystemParams) -> PhaseState {
    let mean = 0.5 * p.q * (s[0] + s[2]);
    let mut out = [0.0; 4];
    for j in 0..2 {
        let (x, y) = (s[2 * j], s[2 * j + 1]);
        out[2 * j] = p.omega * y + p.eps * (mean - p.gamma * x);
        out[2 * j + 1] = -p.omega * x + (p.k1 - 8.0 * p.k2 * x * x) * y;
    }
    out
}

/// Amplitude equations of the coupled pair. The coupling enters through
/// both `alpha` and `alpha*`:
/// `alpha_j' = -i omega alpha_j + (k1/2 - k2 |alpha_j|²) alpha_j
///  + eps/2 (q/2 sum alpha_m - gamma alpha_j) + eps/2 (q/2 sum alpha_m* - gamma alpha_j*)`.
pub fn coupled_amplitude_rhs(a: &[C64; 2], p: &SystemParams) -> [C64; 2] {
    let sum = a[0] + a[1];
    let sum_c = sum.conj();
    let mut out = [C64::new(0.0, 0.0); 2];
    for j in 0..2 {
        let own = amplitude_rhs(a[j], p);
        let direct = (sum * (0.5 * p.q) - a[j] * p.gamma) * (0.5 * p.eps);
        let conj = (sum_c * (0.5 * p.q) - a[j].conj() * p.gamma) * (0.5 * p.eps);
        out[j] = own + direct + conj;
    }
    out
}

/// `coupled_amplitude_rhs` on the real layout `[Re a1, Im a1, Re a2, Im a2]`.
pub fn coupled_amplitude_rhs_real(s: &PhaseState, p: &SystemParams) -> PhaseState {
    let d = coupled_amplitude_rhs(&[C64::new(s[0], s[1]), C64::new(s[2], s[3])], p);
    [d[0].re, d[0].im, d[1].re, d[1].im]
}

/// `amplitude_rhs` on the real layout `[Re alpha, Im alpha]`.
pub fn amplitude_rhs_real(s: &[f64; 2], p: &SystemParams) -> [f64; 2] {
    let d = amplitude_rhs(C64::new(s[0], s[1]), p);
    [d.re, d.im]
}

/// Jacobian of [`coupled_rhs`], row-major.
pub fn coupled_jacobian(s: &PhaseState, p: &SystemParams) -> [[f64; 4]; 4] {
    let mut j = [[0.0; 4]; 4];
    for k in 0..2 {
        let (x, y) = (s[2 * k], s[2 * k + 1]);
        let (rx, ry) = (2 * k, 2 * k + 1);
        let other = 2 * (1 - k);
        j[rx][rx] = p.eps * (0.5 * p.q - p.gamma);
        j[rx][other] = 0.5 * p.eps * p.q;
        j[rx][ry] = p.omega;
        j[ry][rx] = -p.omega - 16.0 * p.k2 * x * y;
        j[ry][ry] = p.k1 - 8.0 * p.k2 * x * x;
    }
    j
}

/// Eigenvalues of the coupled Jacobian at `s`.
pub fn jacobian_eigenvalues(s: &PhaseState, p: &SystemParams) -> Result<Vec<C64>> {
    let j = coupled_jacobian(s, p);
    let m = Mat::from_fn(4, 4, |r, c| j[r][c]);
    m.eigenvalues().map_err(|e| Error::Numerical(format!("Jacobian eigensolver failed: {e:?}")))
}

/// Largest real part among the Jacobian eigenvalues at the origin.
pub fn origin_spectral_abscissa(p: &SystemParams) -> Result<f64> {
    Ok(jacobian_eigenvalues(&[0.0; 4], p)?.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Largest real part among the Jacobian eigenvalues at the origin that
/// come in complex-conjugate pairs; `-inf` when all are real.
pub fn origin_oscillatory_abscissa(p: &SystemParams) -> Result<f64> {
    Ok(jacobian_eigenvalues(&[0.0; 4], p)?
        .iter()
        .filter(|z| z.im.abs() > 1e-9)
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

fn bisect_sign_change(
    f: impl Fn(f64) -> Result<f64>,
    eps_lo: f64,
    eps_hi: f64,
    tol: f64,
) -> Result<f64> {
    let (mut lo, mut hi) = (eps_lo, eps_hi);
    let (flo, fhi) = (f(lo)?, f(hi)?);
    if (flo > 0.0) == (fhi > 0.0) {
        return Err(Error::Numerical(format!(
            "no stability change of the origin between eps = {lo} and {hi}"
        )));
    }
    let lo_unstable = flo > 0.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if (f(mid)? > 0.0) == lo_unstable {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Locates the coupling in `[eps_lo, eps_hi]` where the origin changes
/// linear stability, by bisection on the spectral abscissa.
pub fn stability_crossing(p: &SystemParams, eps_lo: f64, eps_hi: f64, tol: f64) -> Result<f64> {
    bisect_sign_change(|eps| origin_spectral_abscissa(&p.with_eps(eps)), eps_lo, eps_hi, tol)
}

/// Numerical Hopf point: the coupling at which a complex-conjugate pair of
/// the origin's Jacobian crosses the imaginary axis, bracketed by
/// `[0, 2 eps_HB]`. Real eigenvalues (the pitchfork branch) are ignored.
pub fn detect_hopf(p: &SystemParams, tol: f64) -> Result<f64> {
    let hb = hopf_threshold(p)?;
    bisect_sign_change(|eps| origin_oscillatory_abscissa(&p.with_eps(eps)), 0.0, 2.0 * hb, tol)
}

/// `eps_HB = k1 / (gamma - q)`, defined for `gamma > q`.
pub fn hopf_threshold(p: &SystemParams) -> Result<f64> {
    if p.gamma <= p.q {
        return Err(Error::NoHopfThreshold { gamma: p.gamma, q: p.q });
    }
    Ok(p.k1 / (p.gamma - p.q))
}

/// `eps_PB = omega² / (k1 gamma)`.
pub fn pitchfork_threshold(p: &SystemParams) -> Result<f64> {
    if !(p.k1 > 0.0 && p.gamma > 0.0) {
        return Err(Error::InvalidParams("pitchfork threshold needs k1 > 0 and gamma > 0".into()));
    }
    Ok(p.omega * p.omega / (p.k1 * p.gamma))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSet {
    /// Homogeneous steady state, always the origin.
    pub hss: PhaseState,
    /// Both sign branches `(x*, y*, -x*, -y*)` of the inhomogeneous state.
    pub ihss: Option<[PhaseState; 2]>,
    pub exists_ihss: bool,
}

/// Fixed points of [`coupled_rhs`]. The inhomogeneous pair exists when
/// `(k1 eps² gamma² / omega² - eps gamma) / (8 k2) > 0`, i.e. for
/// `eps > eps_PB`; then `y* = ±sqrt(radicand)`, `x* = omega y* / (eps gamma)`.
pub fn fixed_points(p: &SystemParams) -> FixedPointSet {
    let hss = [0.0; 4];
    let eg = p.eps * p.gamma;
    if !(eg > 0.0) || p.omega == 0.0 {
        return FixedPointSet { hss, ihss: None, exists_ihss: false };
    }
    let radicand = (p.k1 * eg * eg / (p.omega * p.omega) - eg) / (8.0 * p.k2);
    if !(radicand > 0.0) {
        return FixedPointSet { hss, ihss: None, exists_ihss: false };
    }
    let y = radicand.sqrt();
    let x = p.omega * y / eg;
    FixedPointSet { hss, ihss: Some([[x, y, -x, -y], [-x, -y, x, y]]), exists_ihss: true }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrateOptions {
    pub t_final: f64,
    pub dt: f64,
    /// Record every `stride`-th step (the final state is always recorded).
    pub stride: usize,
    /// Norm beyond which the run is declared divergent.
    pub blowup_norm: f64,
}

impl IntegrateOptions {
    pub fn new(t_final: f64, dt: f64) -> Self {
        Self { t_final, dt, stride: 1, blowup_norm: 1e6 }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride.max(1);
        self
    }
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self::new(200.0, 1e-3)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<const N: usize> {
    pub times: Vec<f64>,
    pub states: Vec<[f64; N]>,
}

impl<const N: usize> Trajectory<N> {
    pub fn last(&self) -> &[f64; N] {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// Samples with `t >= t_from`.
    pub fn tail(&self, t_from: f64) -> impl Iterator<Item = (f64, &[f64; N])> {
        self.times.iter().copied().zip(&self.states).filter(move |(t, _)| *t >= t_from)
    }

    /// Writes `t` and one column per coordinate under the given names.
    pub fn write_csv<W: Write>(&self, out: W, names: &[&str; N]) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["t"];
        header.extend_from_slice(names);
        wtr.write_record(&header)?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let mut row = vec![t.to_string()];
            row.extend(s.iter().map(|v| v.to_string()));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn axpy<const N: usize>(x: &[f64; N], a: f64, k: &[f64; N]) -> [f64; N] {
    std::array::from_fn(|i| x[i] + a * k[i])
}

fn norm<const N: usize>(x: &[f64; N]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// One classical RK4 step.
pub fn rk4_step<const N: usize>(rhs: &impl Fn(&[f64; N]) -> [f64; N], x: &[f64; N], dt: f64) -> [f64; N] {
    let k1 = rhs(x);
    let k2 = rhs(&axpy(x, 0.5 * dt, &k1));
    let k3 = rhs(&axpy(x, 0.5 * dt, &k2));
    let k4 = rhs(&axpy(x, dt, &k3));
    std::array::from_fn(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Fixed-step RK4 from `x0` up to `t_final`; the last step is shortened to
/// land on `t_final` exactly.
pub fn integrate<const N: usize>(
    rhs: impl Fn(&[f64; N]) -> [f64; N],
    x0: [f64; N],
    opts: &IntegrateOptions,
) -> Result<Trajectory<N>> {
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidState("initial state must be finite".into()));
    }
    if !(opts.dt > 0.0 && opts.t_final >= 0.0 && opts.t_final.is_finite()) {
        return Err(Error::InvalidParams("need dt > 0 and finite t_final >= 0".into()));
    }
    let steps = (opts.t_final / opts.dt - 1e-9).ceil().max(0.0) as usize;
    let stride = opts.stride.max(1);
    let mut times = vec![0.0];
    let mut states = vec![x0];
    let mut x = x0;
    for k in 1..=steps {
        let t_prev = (k - 1) as f64 * opts.dt;
        let t = if k == steps { opts.t_final } else { k as f64 * opts.dt };
        x = rk4_step(&rhs, &x, t - t_prev);
        let n = norm(&x);
        if !n.is_finite() || n > opts.blowup_norm {
            return Err(Error::Blowup { t, norm: n });
        }
        if k % stride == 0 || k == steps {
            times.push(t);
            states.push(x);
        }
    }
    Ok(Trajectory { times, states })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dynamics {
    /// `|state| < 1e-6` throughout the last 10 time units.
    DecayToOrigin,
    /// Peak-to-peak `x1` above `1e-3` over the final 20% of the run.
    Oscillation,
    /// Settled away from the origin.
    Stationary,
}

/// Classifies the late-time behaviour of a trajectory.
pub fn classify<const N: usize>(traj: &Trajectory<N>) -> Dynamics {
    let t_end = *traj.times.last().expect("nonempty");
    let decayed = traj.tail(t_end - 10.0).all(|(_, s)| norm(s) < 1e-6);
    if decayed {
        return Dynamics::DecayToOrigin;
    }
    let (lo, hi) = traj
        .tail(0.8 * t_end)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, s)| (lo.min(s[0]), hi.max(s[0])));
    if hi - lo > 1e-3 {
        Dynamics::Oscillation
    } else {
        Dynamics::Stationary
    }
}

/// Time average of `x1² + y1²` over the final `fraction` of the run.
pub fn tail_mean_sq_amplitude<const N: usize>(traj: &Trajectory<N>, fraction: f64) -> f64 {
    let t_end = *traj.times.last().expect("nonempty");
    let (sum, n) = traj
        .tail(t_end * (1.0 - fraction))
        .fold((0.0, 0usize), |(s, n), (_, x)| (s + x[0] * x[0] + x[1] * x[1], n + 1));
    sum / n.max(1) as f64
}
