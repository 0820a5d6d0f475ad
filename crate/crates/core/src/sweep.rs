//! Parameter scans and cross-tier comparisons.
//!
//! A sweep evaluates the selected tiers on a one- or two-axis grid and emits
//! one record per (point, observable). Failures become records with an error
//! tag instead of being dropped, so gaps stay visible downstream.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{self, IntegrateOptions, PhaseState};
use crate::error::{Error, Result};
use crate::hilbert::{Site, Space};
use crate::lindblad::{
    build_coupled, fock_populations, mean_phonon, memory_estimate, reduced_state, steady_state_with, SteadyMethod,
    SteadyOptions,
};
use crate::params::SystemParams;
use crate::stochastic::{ensemble_run, EnsembleOptions};
use crate::wigner::{delta_x, wigner, PeakRule, WignerGridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Classical,
    Noisy,
    Quantum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    EpsOverK1,
    Gamma,
    Q,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::EpsOverK1 => "eps_over_k1",
            Axis::Gamma => "gamma",
            Axis::Q => "q",
        }
    }

    pub fn apply(self, p: SystemParams, value: f64) -> SystemParams {
        match self {
            Axis::EpsOverK1 => p.with_eps_over_k1(value),
            Axis::Gamma => p.with_gamma(value),
            Axis::Q => p.with_q(value),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// Quantum `<a1† a1>`.
    MeanPhonon,
    /// Tail average of `|alpha1|²` on the mean-field flow.
    MeanSqAmpClassical,
    /// Ensemble steady-window average of `|alpha1|²` with noise.
    MeanSqAmpNoisy,
    /// Peak separation of the site-one Wigner x-marginal.
    DeltaX,
    /// Site-one Fock distribution; the scalar value is the vacuum population.
    FockPopulations,
}

impl Observable {
    pub fn tier(self) -> Tier {
        match self {
            Observable::MeanSqAmpClassical => Tier::Classical,
            Observable::MeanSqAmpNoisy => Tier::Noisy,
            Observable::MeanPhonon | Observable::DeltaX | Observable::FockPopulations => Tier::Quantum,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Observable::MeanPhonon => "mean_phonon",
            Observable::MeanSqAmpClassical => "mean_sq_amp_classical",
            Observable::MeanSqAmpNoisy => "mean_sq_amp_noisy",
            Observable::DeltaX => "delta_x",
            Observable::FockPopulations => "fock_populations",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub axis: Axis,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl AxisSpec {
    pub fn new(axis: Axis, min: f64, max: f64, count: usize) -> Self {
        Self { axis, min, max, count }
    }

    /// Evenly spaced samples including both ends; a single sample sits at `min`.
    pub fn values(&self) -> Vec<f64> {
        linspace(self.min, self.max, self.count)
    }
}

/// `n` evenly spaced samples on `[lo, hi]`, endpoints exact.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

/// Fock cutoff used when none is given: 20 levels per site, enough to keep
/// the top three levels below `1e-6` across both regimes' default lines.
pub fn default_cutoff(_p: &SystemParams) -> usize {
    20
}

pub fn default_wigner_grid(p: &SystemParams) -> WignerGridSpec {
    if p.is_deep_regime() {
        WignerGridSpec::deep_default()
    } else {
        WignerGridSpec::weak_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantumNumerics {
    /// Levels per site; `None` picks [`default_cutoff`].
    pub cutoff: Option<usize>,
    pub steady: SteadyOptions,
    /// `None` picks [`default_wigner_grid`].
    pub wigner_grid: Option<WignerGridSpec>,
    pub peak_rule: PeakRule,
    /// Upper bound on the top-level population of site one; larger values
    /// fail the point as `cutoff-too-small`.
    pub max_tail_population: f64,
    /// Re-solve at a 25% larger cutoff and record the shift in `<n1>`.
    pub convergence_check: bool,
}

impl Default for QuantumNumerics {
    fn default() -> Self {
        Self {
            cutoff: None,
            steady: SteadyOptions::default(),
            wigner_grid: None,
            peak_rule: PeakRule::default(),
            max_tail_population: 1e-2,
            convergence_check: false,
        }
    }
}

impl QuantumNumerics {
    pub fn cutoff_for(&self, p: &SystemParams) -> usize {
        self.cutoff.unwrap_or_else(|| default_cutoff(p))
    }

    pub fn grid_for(&self, p: &SystemParams) -> WignerGridSpec {
        self.wigner_grid.unwrap_or_else(|| default_wigner_grid(p))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(n) = self.cutoff {
            if n < 2 {
                return Err(Error::InvalidCutoff(n));
            }
        }
        if let Some(g) = &self.wigner_grid {
            g.validate()?;
        }
        if !(self.max_tail_population > 0.0) {
            return Err(Error::InvalidParams("max_tail_population must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassicalNumerics {
    pub integrate: IntegrateOptions,
    pub initial: PhaseState,
    /// Trailing fraction of the run averaged for `|alpha1|²`.
    pub tail_fraction: f64,
}

impl Default for ClassicalNumerics {
    fn default() -> Self {
        Self {
            integrate: IntegrateOptions::new(200.0, 1e-3).with_stride(10),
            initial: [1.0, 0.5, -0.5, 0.2],
            tail_fraction: 0.2,
        }
    }
}

impl ClassicalNumerics {
    pub fn validate(&self) -> Result<()> {
        if !(self.integrate.dt > 0.0 && self.integrate.t_final > 0.0 && self.integrate.t_final.is_finite()) {
            return Err(Error::InvalidParams("classical run needs dt > 0 and finite t_final > 0".into()));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(Error::InvalidParams("tail_fraction must lie in (0, 1]".into()));
        }
        if self.initial.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidState("classical initial state must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub tiers: Vec<Tier>,
    pub axes: Vec<AxisSpec>,
    pub params: SystemParams,
    pub observables: Vec<Observable>,
    #[serde(default)]
    pub quantum: QuantumNumerics,
    #[serde(default)]
    pub classical: ClassicalNumerics,
    #[serde(default)]
    pub noisy: EnsembleOptions,
    /// Upper bound on concurrently evaluated points; 0 means the rayon default.
    #[serde(default)]
    pub max_workers: usize,
}

impl SweepSpec {
    /// 21×21 map of `<n1>` over `eps/k1 ∈ [0, 6]`, `gamma ∈ [0.1, 1]` in the
    /// weak regime at `q = 0.2`.
    pub fn weak_colormap() -> Self {
        Self {
            tiers: vec![Tier::Quantum],
            axes: vec![AxisSpec::new(Axis::EpsOverK1, 0.0, 6.0, 21), AxisSpec::new(Axis::Gamma, 0.1, 1.0, 21)],
            params: SystemParams::weak_regime().with_q(0.2),
            observables: vec![Observable::MeanPhonon],
            quantum: QuantumNumerics::default(),
            classical: ClassicalNumerics::default(),
            noisy: EnsembleOptions::default(),
            max_workers: 0,
        }
    }

    /// 21×21 map of `<n1>` and `Delta X` in the deep regime (`k2 = 3`, `q = 0.6`).
    pub fn deep_colormap() -> Self {
        Self {
            axes: vec![AxisSpec::new(Axis::EpsOverK1, 0.0, 20.0, 21), AxisSpec::new(Axis::Gamma, 0.1, 1.0, 21)],
            params: SystemParams::deep_regime(),
            observables: vec![Observable::MeanPhonon, Observable::DeltaX],
            ..Self::weak_colormap()
        }
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        let mut pts = vec![vec![]];
        for a in &self.axes {
            let vals = a.values();
            pts = pts
                .into_iter()
                .flat_map(|p| {
                    vals.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push(*v);
                        q
                    })
                })
                .collect();
        }
        pts
    }

    pub fn n_points(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn params_at(&self, point: &[f64]) -> SystemParams {
        self.axes.iter().zip(point).fold(self.params, |p, (a, v)| a.axis.apply(p, *v))
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(Error::InvalidParams("a sweep needs one or two axes".into()));
        }
        if self.axes.len() == 2 && self.axes[0].axis == self.axes[1].axis {
            return Err(Error::InvalidParams("the two sweep axes must differ".into()));
        }
        for a in &self.axes {
            if a.count == 0 || !a.min.is_finite() || !a.max.is_finite() {
                return Err(Error::InvalidParams(format!(
                    "axis {} needs a finite range and count >= 1",
                    a.axis.name()
                )));
            }
        }
        if self.observables.is_empty() {
            return Err(Error::InvalidParams("no observables requested".into()));
        }
        for o in &self.observables {
            if !self.tiers.contains(&o.tier()) {
                return Err(Error::InvalidParams(format!(
                    "observable {} needs the {:?} tier, which is not selected",
                    o.name(),
                    o.tier()
                )));
            }
        }
        for pt in self.points() {
            self.params_at(&pt).validate()?;
        }
        self.quantum.validate()?;
        self.classical.validate()?;
        if self.tiers.contains(&Tier::Noisy) {
            self.noisy.validate()?;
        }
        Ok(())
    }

    fn wants(&self, tier: Tier) -> bool {
        self.observables.iter().any(|o| o.tier() == tier)
    }

    /// Number of points evaluated at once: the worker bound, further capped
    /// so concurrent quantum solves fit in the steady-state memory budget.
    pub fn concurrency(&self) -> usize {
        let mut workers = if self.max_workers == 0 { rayon::current_num_threads() } else { self.max_workers };
        if self.wants(Tier::Quantum) {
            let n = self.quantum.cutoff.unwrap_or(20);
            let per = memory_estimate(Space::Composite(n, n), &self.quantum.steady).max(1);
            workers = workers.min((self.quantum.steady.memory_budget_bytes / per).max(1) as usize);
        }
        workers.max(1)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SteadyMethod>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_population: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff_shift: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peaks: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    /// Row-major grid index (first axis slowest).
    pub index: usize,
    /// Axis values in the order of `SweepSpec::axes`.
    pub point: Vec<f64>,
    pub observable: Observable,
    /// `None` when the point failed.
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f64>>,
    /// `"ok"` or the error tag.
    pub status: String,
    pub diagnostics: Diagnostics,
}

impl SweepRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Analytic Hopf and pitchfork thresholds at one sampled `gamma`, in units of `k1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlayPoint {
    pub gamma: f64,
    /// Absent for `gamma <= q`, where there is no Hopf threshold.
    pub eps_hb_over_k1: Option<f64>,
    pub eps_pb_over_k1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub spec: SweepSpec,
    pub code_version: String,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub provenance: Provenance,
    pub records: Vec<SweepRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlay: Option<Vec<OverlayPoint>>,
}

impl SweepResult {
    /// Long format: one row per record with the axis values, observable,
    /// value, standard error and status. Failed points have an empty value.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let axes = &self.provenance.spec.axes;
        let mut header: Vec<&str> = axes.iter().map(|a| a.axis.name()).collect();
        header.extend(["observable", "value", "stderr", "status"]);
        wtr.write_record(&header)?;
        for r in &self.records {
            let mut row: Vec<String> = r.point.iter().map(|v| v.to_string()).collect();
            row.push(r.observable.name().into());
            row.push(r.value.map(|v| v.to_string()).unwrap_or_default());
            row.push(r.diagnostics.stderr.map(|v| v.to_string()).unwrap_or_default());
            row.push(r.status.clone());
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn records_for(&self, obs: Observable) -> impl Iterator<Item = &SweepRecord> {
        self.records.iter().filter(move |r| r.observable == obs)
    }
}

/// Hopf and pitchfork curves at each `gamma`, with `q`, `k1`, `omega` from `p`.
pub fn overlay(p: &SystemParams, gammas: &[f64]) -> Result<Vec<OverlayPoint>> {
    gammas
        .iter()
        .map(|&g| {
            let pg = p.with_gamma(g);
            let hb = match classical::hopf_threshold(&pg) {
                Ok(v) => Some(v / p.k1),
                Err(Error::NoHopfThreshold { .. }) => None,
                Err(e) => return Err(e),
            };
            Ok(OverlayPoint { gamma: g, eps_hb_over_k1: hb, eps_pb_over_k1: classical::pitchfork_threshold(&pg)? / p.k1 })
        })
        .collect()
}

/// Site-one quantum observables at one parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumPoint {
    pub mean_phonon: f64,
    pub populations: Vec<f64>,
    pub solver: SteadyMethod,
    pub residual: f64,
    pub iterations: usize,
    pub cutoff: usize,
    pub cutoff_shift: Option<f64>,
}

impl QuantumPoint {
    pub fn tail_population(&self) -> f64 {
        *self.populations.last().expect("cutoff >= 2")
    }
}

/// Coupled steady state reduced to site one.
pub fn quantum_point(p: &SystemParams, numerics: &QuantumNumerics) -> Result<(QuantumPoint, crate::DensityMatrix)> {
    let cutoff = numerics.cutoff_for(p);
    let solve = |n: usize| -> Result<_> {
        let report = steady_state_with(&build_coupled(p, n)?, &numerics.steady)?;
        let rho1 = reduced_state(&report.rho, Site::One)?;
        Ok((report, rho1))
    };
    let (report, rho1) = solve(cutoff)?;
    let n1 = mean_phonon(&rho1, Site::One)?;
    let populations = fock_populations(&rho1, Site::One)?;
    let top = *populations.last().expect("cutoff >= 2");
    if top > numerics.max_tail_population {
        return Err(Error::CutoffTooSmall {
            level: cutoff - 1,
            population: top,
            tolerance: numerics.max_tail_population,
        });
    }
    let cutoff_shift = if numerics.convergence_check {
        let (_, bigger) = solve(larger_cutoff(cutoff))?;
        Some((mean_phonon(&bigger, Site::One)? - n1).abs())
    } else {
        None
    };
    let point = QuantumPoint {
        mean_phonon: n1,
        populations,
        solver: report.method,
        residual: report.residual,
        iterations: report.iterations,
        cutoff,
        cutoff_shift,
    };
    Ok((point, rho1))
}

/// Cutoff about 25% above `n`.
pub fn larger_cutoff(n: usize) -> usize {
    (n * 5).div_ceil(4).max(n + 1)
}

/// Tail average of `|alpha1|²` on the mean-field flow.
pub fn classical_point(p: &SystemParams, numerics: &ClassicalNumerics) -> Result<f64> {
    let traj = classical::integrate(|s| classical::coupled_rhs(s, p), numerics.initial, &numerics.integrate)?;
    Ok(classical::tail_mean_sq_amplitude(&traj, numerics.tail_fraction))
}

fn failed(index: usize, point: &[f64], obs: Observable, e: &Error) -> SweepRecord {
    SweepRecord {
        index,
        point: point.to_vec(),
        observable: obs,
        value: None,
        vector: None,
        status: e.tag().into(),
        diagnostics: Diagnostics { message: Some(e.to_string()), ..Default::default() },
    }
}

fn ok(index: usize, point: &[f64], obs: Observable, value: f64, diagnostics: Diagnostics) -> SweepRecord {
    SweepRecord {
        index,
        point: point.to_vec(),
        observable: obs,
        value: Some(value),
        vector: None,
        status: "ok".into(),
        diagnostics,
    }
}

fn evaluate_point(spec: &SweepSpec, index: usize, point: &[f64]) -> Vec<SweepRecord> {
    let p = spec.params_at(point);
    let quantum = spec.wants(Tier::Quantum).then(|| quantum_point(&p, &spec.quantum));
    let classical = spec.wants(Tier::Classical).then(|| classical_point(&p, &spec.classical));
    let noisy = spec.wants(Tier::Noisy).then(|| ensemble_run(&p, &spec.noisy));

    let qdiag = |q: &QuantumPoint| Diagnostics {
        solver: Some(q.solver),
        residual: Some(q.residual),
        iterations: Some(q.iterations),
        cutoff: Some(q.cutoff),
        tail_population: Some(q.tail_population()),
        cutoff_shift: q.cutoff_shift,
        ..Default::default()
    };

    spec.observables
        .iter()
        .map(|&obs| match obs {
            Observable::MeanPhonon => match quantum.as_ref().expect("quantum tier evaluated") {
                Ok((q, _)) => ok(index, point, obs, q.mean_phonon, qdiag(q)),
                Err(e) => failed(index, point, obs, e),
            },
            Observable::FockPopulations => match quantum.as_ref().expect("quantum tier evaluated") {
                Ok((q, _)) => {
                    let mut r = ok(index, point, obs, q.populations[0], qdiag(q));
                    r.vector = Some(q.populations.clone());
                    r
                }
                Err(e) => failed(index, point, obs, e),
            },
            Observable::DeltaX => match quantum.as_ref().expect("quantum tier evaluated") {
                Ok((q, rho1)) => match wigner(rho1, &spec.quantum.grid_for(&p)) {
                    Ok(w) => {
                        let b = delta_x(&w, &spec.quantum.peak_rule);
                        ok(index, point, obs, b.delta_x, Diagnostics { peaks: Some(b.peak_positions), ..qdiag(q) })
                    }
                    Err(e) => failed(index, point, obs, &e),
                },
                Err(e) => failed(index, point, obs, e),
            },
            Observable::MeanSqAmpClassical => match classical.as_ref().expect("classical tier evaluated") {
                Ok(v) => ok(index, point, obs, *v, Diagnostics::default()),
                Err(e) => failed(index, point, obs, e),
            },
            Observable::MeanSqAmpNoisy => match noisy.as_ref().expect("noisy tier evaluated") {
                Ok(st) => ok(
                    index,
                    point,
                    obs,
                    st.steady_mean,
                    Diagnostics { stderr: Some(st.steady_stderr), ..Default::default() },
                ),
                Err(e) => failed(index, point, obs, e),
            },
        })
        .collect()
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    run_sweep_with_progress(spec, |_, _| {})
}

/// Like [`run_sweep`], calling `progress(done, total)` after each point.
///
/// The noisy tier uses the same base seed at every point (common random
/// numbers), so differences between points are not masked by sampling noise.
pub fn run_sweep_with_progress(spec: &SweepSpec, progress: impl Fn(usize, usize) + Sync) -> Result<SweepResult> {
    spec.validate()?;
    let points = spec.points();
    let total = points.len();
    let done = AtomicUsize::new(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.concurrency())
        .build()
        .map_err(|e| Error::Numerical(format!("worker pool: {e}")))?;
    let per_point: Vec<Vec<SweepRecord>> = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(i, pt)| {
                let recs = evaluate_point(spec, i, pt);
                progress(done.fetch_add(1, Ordering::Relaxed) + 1, total);
                recs
            })
            .collect()
    });

    let axes: Vec<Axis> = spec.axes.iter().map(|a| a.axis).collect();
    let overlay = match axes.as_slice() {
        [Axis::EpsOverK1, Axis::Gamma] | [Axis::Gamma, Axis::EpsOverK1] => {
            let g = spec.axes.iter().find(|a| a.axis == Axis::Gamma).expect("gamma axis");
            Some(overlay(&spec.params, &g.values())?)
        }
        _ => None,
    };
    let seeds = if spec.tiers.contains(&Tier::Noisy) { vec![spec.noisy.base_seed] } else { vec![] };
    Ok(SweepResult {
        provenance: Provenance { spec: spec.clone(), code_version: crate::VERSION.into(), seeds },
        records: per_point.into_iter().flatten().collect(),
        overlay,
    })
}

/// Fraction of grid points whose `<n1>` falls on the side of the threshold
/// predicted by the Hopf curve: amplitude death (low `<n1>`) for
/// `eps/k1 > k1/(gamma - q)`, oscillation otherwise.
///
/// The threshold is the midpoint between the uncoupled value (mean over the
/// `eps = 0` column) and the lowest value on the grid. Needs an
/// `(eps/k1, gamma)` sweep with `mean_phonon`; failed points count as misses.
pub fn hopf_region_agreement(result: &SweepResult) -> Result<RegionAgreement> {
    let spec = &result.provenance.spec;
    let ie = spec.axes.iter().position(|a| a.axis == Axis::EpsOverK1);
    let ig = spec.axes.iter().position(|a| a.axis == Axis::Gamma);
    let (Some(ie), Some(ig)) = (ie, ig) else {
        return Err(Error::InvalidParams("region agreement needs eps_over_k1 and gamma axes".into()));
    };
    let recs: Vec<&SweepRecord> = result.records_for(Observable::MeanPhonon).collect();
    if recs.is_empty() {
        return Err(Error::InvalidParams("region agreement needs mean_phonon records".into()));
    }
    let eps0: Vec<f64> = recs.iter().filter(|r| r.point[ie] == 0.0).filter_map(|r| r.value).collect();
    if eps0.is_empty() {
        return Err(Error::InvalidParams("region agreement needs an eps = 0 column".into()));
    }
    let uncoupled = eps0.iter().sum::<f64>() / eps0.len() as f64;
    let floor = recs.iter().filter_map(|r| r.value).fold(f64::INFINITY, f64::min);
    let threshold = 0.5 * (uncoupled + floor);
    let p = spec.params;
    let agree = recs
        .iter()
        .filter(|r| {
            let (e, g) = (r.point[ie], r.point[ig]);
            let predicted_death = g > p.q && e * p.k1 > p.k1 / (g - p.q);
            r.value.is_some_and(|v| (v < threshold) == predicted_death)
        })
        .count();
    Ok(RegionAgreement { uncoupled, floor, threshold, agree, total: recs.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionAgreement {
    pub uncoupled: f64,
    pub floor: f64,
    pub threshold: f64,
    pub agree: usize,
    pub total: usize,
}

impl RegionAgreement {
    pub fn fraction(&self) -> f64 {
        self.agree as f64 / self.total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSpec {
    /// `eps`, `q` and the oscillator constants; `gamma` is overridden per row.
    pub params: SystemParams,
    pub gammas: Vec<f64>,
    #[serde(default)]
    pub quantum: QuantumNumerics,
    #[serde(default)]
    pub classical: ClassicalNumerics,
    #[serde(default)]
    pub noisy: EnsembleOptions,
}

impl Default for CompareSpec {
    /// Weak regime at `eps/k1 = 3.5`, `q = 0.2`, 17 values of `gamma` on `[0.1, 1]`.
    fn default() -> Self {
        Self {
            params: SystemParams::weak_regime().with_eps_over_k1(3.5).with_q(0.2),
            gammas: linspace(0.1, 1.0, 17),
            quantum: QuantumNumerics::default(),
            classical: ClassicalNumerics::default(),
            noisy: EnsembleOptions::default(),
        }
    }
}

impl CompareSpec {
    pub fn validate(&self) -> Result<()> {
        if self.gammas.is_empty() {
            return Err(Error::InvalidParams("compare needs at least one gamma".into()));
        }
        if self.params.is_deep_regime() {
            return Err(Error::InvalidParams("compare expects weak-regime parameters (k2 <= k1)".into()));
        }
        for &g in &self.gammas {
            self.params.with_gamma(g).validate()?;
        }
        self.quantum.validate()?;
        self.classical.validate()?;
        self.noisy.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub gamma: f64,
    pub classical: f64,
    pub noisy: f64,
    pub noisy_stderr: f64,
    pub quantum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FockEndpoint {
    pub gamma: f64,
    pub populations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareTable {
    pub rows: Vec<CompareRow>,
    /// Site-one Fock distributions at the smallest and largest `gamma`.
    pub endpoints: Vec<FockEndpoint>,
    /// `q + k1/eps`, where the mean-field flow leaves amplitude death.
    pub classical_onset_gamma: Option<f64>,
}

impl CompareTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        for r in &self.rows {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Classical, noisy and quantum `|alpha1|²` along a line of `gamma`.
pub fn compare_models(spec: &CompareSpec) -> Result<CompareTable> {
    compare_models_with_progress(spec, |_, _| {})
}

pub fn compare_models_with_progress(spec: &CompareSpec, progress: impl Fn(usize, usize)) -> Result<CompareTable> {
    spec.validate()?;
    let n = spec.gammas.len();
    let mut rows = Vec::with_capacity(n);
    let mut pops = Vec::with_capacity(n);
    for (i, &g) in spec.gammas.iter().enumerate() {
        let p = spec.params.with_gamma(g);
        let classical = classical_point(&p, &spec.classical)?;
        let noisy = ensemble_run(&p, &spec.noisy)?;
        let (q, _) = quantum_point(&p, &spec.quantum)?;
        rows.push(CompareRow {
            gamma: g,
            classical,
            noisy: noisy.steady_mean,
            noisy_stderr: noisy.steady_stderr,
            quantum: q.mean_phonon,
        });
        pops.push(q.populations);
        progress(i + 1, n);
    }
    let lo = (0..n).min_by(|&a, &b| spec.gammas[a].total_cmp(&spec.gammas[b])).expect("nonempty");
    let hi = (0..n).max_by(|&a, &b| spec.gammas[a].total_cmp(&spec.gammas[b])).expect("nonempty");
    let mut ends = vec![lo];
    if hi != lo {
        ends.push(hi);
    }
    let endpoints =
        ends.into_iter().map(|i| FockEndpoint { gamma: spec.gammas[i], populations: pops[i].clone() }).collect();
    let p = spec.params;
    let classical_onset_gamma = (p.eps > 0.0).then(|| p.q + p.k1 / p.eps);
    Ok(CompareTable { rows, endpoints, classical_onset_gamma })
}

/// Locates the `gamma` at which the simulated mean-field flow switches
/// between decay to the origin and a sustained oscillation, by bisection on
/// `[lo, hi]`. A run counts as oscillating when its tail `|alpha1|²` exceeds
/// `1e-8`; `numerics` should use a horizon long enough to resolve the slow
/// decay near threshold.
pub fn classical_onset_gamma(
    p: &SystemParams,
    lo: f64,
    hi: f64,
    tol: f64,
    numerics: &ClassicalNumerics,
) -> Result<f64> {
    let alive = |g: f64| classical_point(&p.with_gamma(g), numerics).map(|v| v > 1e-8);
    let (mut a, mut b) = (lo, hi);
    let fa = alive(a)?;
    if fa == alive(b)? {
        return Err(Error::Numerical(format!("no change of dynamics on gamma in [{lo}, {hi}]")));
    }
    while b - a > tol {
        let m = 0.5 * (a + b);
        if alive(m)? == fa {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BifurcationSpec {
    pub params: SystemParams,
    pub gammas: Vec<f64>,
    #[serde(default)]
    pub quantum: QuantumNumerics,
}

impl Default for BifurcationSpec {
    /// Deep regime (`k2/k1 = 3`, `q = 0.6`, `eps/k1 = 20`) with 17 values of
    /// `gamma` on `[0.1, 1]`.
    fn default() -> Self {
        Self {
            params: SystemParams::deep_regime().with_eps_over_k1(20.0),
            gammas: linspace(0.1, 1.0, 17),
            quantum: QuantumNumerics::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationRow {
    pub gamma: f64,
    pub delta_x: f64,
    pub peaks: Vec<f64>,
    pub mean_phonon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationScan {
    pub rows: Vec<BifurcationRow>,
    /// Wigner grid spacing along x.
    pub cell: f64,
    /// Largest `gamma` with `Delta X` above one grid cell.
    pub gamma_c: Option<f64>,
}

impl BifurcationScan {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["gamma", "delta_x", "mean_phonon", "peaks"])?;
        for r in &self.rows {
            let peaks = r.peaks.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";");
            wtr.write_record([r.gamma.to_string(), r.delta_x.to_string(), r.mean_phonon.to_string(), peaks])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `Delta X` of the site-one Wigner function along a line of `gamma`.
pub fn bifurcation_scan(spec: &BifurcationSpec) -> Result<BifurcationScan> {
    bifurcation_scan_with_progress(spec, |_, _| {})
}

pub fn bifurcation_scan_with_progress(
    spec: &BifurcationSpec,
    progress: impl Fn(usize, usize),
) -> Result<BifurcationScan> {
    if spec.gammas.is_empty() {
        return Err(Error::InvalidParams("bifurcation scan needs at least one gamma".into()));
    }
    spec.quantum.validate()?;
    let grid = spec.quantum.grid_for(&spec.params);
    grid.validate()?;
    let n = spec.gammas.len();
    let mut rows = Vec::with_capacity(n);
    for (i, &g) in spec.gammas.iter().enumerate() {
        let p = spec.params.with_gamma(g);
        p.validate()?;
        let (q, rho1) = quantum_point(&p, &spec.quantum)?;
        let b = delta_x(&wigner(&rho1, &grid)?, &spec.quantum.peak_rule);
        rows.push(BifurcationRow { gamma: g, delta_x: b.delta_x, peaks: b.peak_positions, mean_phonon: q.mean_phonon });
        progress(i + 1, n);
    }
    let cell = grid.dx();
    let gamma_c = rows.iter().filter(|r| r.delta_x > cell).map(|r| r.gamma).fold(None, |m: Option<f64>, g| {
        Some(m.map_or(g, |m| m.max(g)))
    });
    Ok(BifurcationScan { rows, cell, gamma_c })
}
