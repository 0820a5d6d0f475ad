use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use qvdp_core::classical::{self, IntegrateOptions};
use qvdp_core::stochastic::EnsembleOptions;
use qvdp_core::sweep::{
    self, BifurcationSpec, ClassicalNumerics, CompareSpec, QuantumNumerics, SweepSpec,
};
use qvdp_core::wigner::{delta_x, marginal_x, wigner};
use qvdp_core::{
    build_coupled, build_single, fock_populations, mean_phonon, reduced_state, steady_state_with, DensityMatrix,
    Site,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Command, Format, Model, RunConfig};
use crate::error::CliError;

type CsvFn<'a> = Box<dyn FnOnce(&mut dyn Write) -> qvdp_core::Result<()> + 'a>;

/// Where a command's artifacts go.
pub struct Sink<'a> {
    cfg: &'a RunConfig,
}

impl<'a> Sink<'a> {
    pub fn new(cfg: &'a RunConfig) -> Self {
        Self { cfg }
    }

    /// Sidecar holding provenance and summary next to a CSV file.
    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    /// Paths this run will write.
    pub fn targets(&self) -> Vec<PathBuf> {
        match (&self.cfg.output.path, self.cfg.output.format) {
            (None, _) => vec![],
            (Some(p), Format::Json) => vec![p.clone()],
            (Some(p), Format::Csv) => vec![p.clone(), Self::sidecar_path(p)],
        }
    }

    /// CSV: the table to the output path (or stdout) plus a sidecar with
    /// provenance and summary. JSON: `{provenance, data}` where `data` is the
    /// summary merged with `payload`.
    fn emit(&self, csv: CsvFn<'_>, summary: Value, payload: Value) -> Result<(), CliError> {
        match self.cfg.output.format {
            Format::Csv => {
                match &self.cfg.output.path {
                    Some(p) => {
                        write_file(p, |w| csv(w).map_err(CliError::from))?;
                        let side = json!({ "provenance": self.cfg, "summary": summary });
                        write_file(&Self::sidecar_path(p), |w| write_json(w, &side))?;
                    }
                    None => {
                        let stdout = std::io::stdout();
                        let mut lock = stdout.lock();
                        csv(&mut lock)?;
                        eprintln!("{}", json!({ "summary": summary }));
                    }
                }
                Ok(())
            }
            Format::Json => {
                let mut data = summary;
                if let (Value::Object(d), Value::Object(p)) = (&mut data, payload) {
                    d.extend(p);
                }
                let doc = json!({ "provenance": self.cfg, "data": data });
                match &self.cfg.output.path {
                    Some(p) => write_file(p, |w| write_json(w, &doc)),
                    None => write_json(&mut std::io::stdout().lock(), &doc),
                }
            }
        }
    }
}

fn write_json(w: &mut dyn Write, v: &impl Serialize) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *w, v).map_err(qvdp_core::Error::from)?;
    writeln!(w).map_err(|e| CliError::Io { path: "<output>".into(), source: e })
}

fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<(), CliError>) -> Result<(), CliError> {
    let io = |e| CliError::Io { path: path.display().to_string(), source: e };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    body(&mut w)?;
    w.flush().map_err(io)
}

fn to_value(v: &impl Serialize) -> Value {
    serde_json::to_value(v).expect("output types serialize")
}

fn progress(cmd: &str) -> impl Fn(usize, usize) + Sync + '_ {
    move |done, total| eprintln!("[{cmd}] {done}/{total}")
}

fn quantum_numerics(cfg: &RunConfig) -> QuantumNumerics {
    let n = &cfg.numerics;
    QuantumNumerics {
        cutoff: Some(n.cutoff),
        steady: n.steady,
        wigner_grid: Some(cfg.grid()),
        peak_rule: n.peak_rule,
        max_tail_population: n.max_tail_population,
        convergence_check: false,
    }
}

fn classical_numerics(cfg: &RunConfig) -> ClassicalNumerics {
    let n = &cfg.numerics;
    ClassicalNumerics {
        integrate: IntegrateOptions::new(n.t_final, n.dt).with_stride(n.stride),
        initial: n.initial,
        tail_fraction: n.steady_fraction,
    }
}

fn ensemble_options(cfg: &RunConfig) -> EnsembleOptions {
    let n = &cfg.numerics;
    EnsembleOptions {
        n_realizations: n.n_realizations,
        t_final: n.t_final,
        dt: n.dt,
        base_seed: cfg.seed(),
        init_half_width: n.init_half_width,
        steady_fraction: n.steady_fraction,
        sample_interval: n.sample_interval,
        ..Default::default()
    }
}

pub fn sweep_spec(cfg: &RunConfig) -> SweepSpec {
    let n = &cfg.numerics;
    SweepSpec {
        tiers: n.tiers.clone(),
        axes: n.axes.clone(),
        params: cfg.params,
        observables: n.observables.clone(),
        quantum: quantum_numerics(cfg),
        classical: classical_numerics(cfg),
        noisy: ensemble_options(cfg),
        max_workers: n.threads,
    }
}

/// Resolved grid and point count for `sweep2d --dry-run`.
pub fn dry_run(cfg: &RunConfig) -> Result<Value, CliError> {
    let spec = sweep_spec(cfg);
    spec.validate()?;
    let axes: Vec<Value> = spec
        .axes
        .iter()
        .map(|a| json!({ "axis": a.axis.name(), "values": a.values() }))
        .collect();
    Ok(json!({
        "axes": axes,
        "points": spec.n_points(),
        "records": spec.n_points() * spec.observables.len(),
        "concurrency": spec.concurrency(),
    }))
}

fn single_site_state(cfg: &RunConfig) -> Result<(DensityMatrix, Value), CliError> {
    let n = cfg.numerics.cutoff;
    let model = match cfg.numerics.model {
        Model::Single => build_single(&cfg.params, n)?,
        Model::Coupled => build_coupled(&cfg.params, n)?,
    };
    let report = steady_state_with(&model, &cfg.numerics.steady)?;
    let rho1 = reduced_state(&report.rho, Site::One)?;
    let info = json!({
        "mean_phonon": mean_phonon(&rho1, Site::One)?,
        "solver": report.method,
        "residual": report.residual,
        "iterations": report.iterations,
        "cutoff": n,
    });
    Ok((rho1, info))
}

pub fn dispatch(cfg: &RunConfig) -> Result<(), CliError> {
    let sink = Sink::new(cfg);
    let p = &cfg.params;
    let n = &cfg.numerics;
    match cfg.command {
        Command::SingleSteady => {
            let report = steady_state_with(&build_single(p, n.cutoff)?, &n.steady)?;
            let pops = fock_populations(&report.rho, Site::One)?;
            let summary = json!({
                "mean_phonon": mean_phonon(&report.rho, Site::One)?,
                "solver": report.method,
                "residual": report.residual,
                "iterations": report.iterations,
                "cutoff": n.cutoff,
            });
            let rows = pops.clone();
            sink.emit(
                Box::new(move |w| {
                    let mut wtr = csv::Writer::from_writer(w);
                    wtr.write_record(["level", "population"])?;
                    for (k, v) in rows.iter().enumerate() {
                        wtr.write_record([k.to_string(), v.to_string()])?;
                    }
                    wtr.flush()?;
                    Ok(())
                }),
                summary,
                json!({ "populations": pops }),
            )
        }
        Command::CoupledSteady => {
            let report = steady_state_with(&build_coupled(p, n.cutoff)?, &n.steady)?;
            let p1 = fock_populations(&report.rho, Site::One)?;
            let p2 = fock_populations(&report.rho, Site::Two)?;
            let summary = json!({
                "mean_phonon_1": mean_phonon(&report.rho, Site::One)?,
                "mean_phonon_2": mean_phonon(&report.rho, Site::Two)?,
                "solver": report.method,
                "residual": report.residual,
                "iterations": report.iterations,
                "cutoff": n.cutoff,
            });
            let (c1, c2) = (p1.clone(), p2.clone());
            sink.emit(
                Box::new(move |w| {
                    let mut wtr = csv::Writer::from_writer(w);
                    wtr.write_record(["level", "population_1", "population_2"])?;
                    for (k, (a, b)) in c1.iter().zip(&c2).enumerate() {
                        wtr.write_record([k.to_string(), a.to_string(), b.to_string()])?;
                    }
                    wtr.flush()?;
                    Ok(())
                }),
                summary,
                json!({ "populations_1": p1, "populations_2": p2 }),
            )
        }
        Command::Wigner | Command::DeltaX => {
            let (rho1, mut summary) = single_site_state(cfg)?;
            let w = wigner(&rho1, &cfg.grid())?;
            let b = delta_x(&w, &n.peak_rule);
            let (ax, ay, aw) = w.argmax();
            let extra = json!({
                "delta_x": b.delta_x,
                "peak_positions": b.peak_positions,
                "peak_heights": b.peak_heights,
                "integral": w.integral(),
                "argmax": { "x": ax, "y": ay, "w": aw },
                "grid": cfg.grid(),
            });
            if let (Value::Object(s), Value::Object(e)) = (&mut summary, extra) {
                s.extend(e);
            }
            if cfg.command == Command::Wigner {
                let payload = json!({ "wigner": to_value(&w) });
                sink.emit(Box::new(move |out| w.write_csv(out)), summary, payload)
            } else {
                let m = marginal_x(&w);
                let payload = json!({ "marginal": to_value(&m) });
                sink.emit(
                    Box::new(move |out| {
                        let mut wtr = csv::Writer::from_writer(out);
                        wtr.write_record(["x", "density"])?;
                        for (x, d) in m.x.iter().zip(&m.density) {
                            wtr.write_record([x.to_string(), d.to_string()])?;
                        }
                        wtr.flush()?;
                        Ok(())
                    }),
                    summary,
                    payload,
                )
            }
        }
        Command::ClassicalRun => {
            let cn = classical_numerics(cfg);
            let traj = classical::integrate(|s| classical::coupled_rhs(s, p), cn.initial, &cn.integrate)?;
            let summary = json!({
                "dynamics": classical::classify(&traj),
                "tail_mean_sq_amplitude": classical::tail_mean_sq_amplitude(&traj, cn.tail_fraction),
                "final_state": traj.last(),
                "eps_hb": classical::hopf_threshold(p).ok(),
                "eps_pb": classical::pitchfork_threshold(p).ok(),
            });
            let payload = json!({ "times": traj.times, "states": traj.states });
            sink.emit(Box::new(move |w| traj.write_csv(w, &["x1", "y1", "x2", "y2"])), summary, payload)
        }
        Command::NoisyEnsemble => {
            let stats = qvdp_core::ensemble_run(p, &ensemble_options(cfg))?;
            let summary = json!({
                "steady_mean": stats.steady_mean,
                "steady_stderr": stats.steady_stderr,
                "n_realizations": stats.n_realizations,
                "seed": stats.seed,
            });
            let payload = json!({ "times": stats.times, "mean_sq_amp": stats.mean_sq_amp, "stderr": stats.stderr });
            sink.emit(Box::new(move |w| stats.write_csv(w)), summary, payload)
        }
        Command::Sweep2d => {
            let res = sweep::run_sweep_with_progress(&sweep_spec(cfg), progress("sweep2d"))?;
            let failed = res.records.iter().filter(|r| !r.is_ok()).count();
            let summary = json!({
                "records": res.records.len(),
                "failed": failed,
                "overlay": res.overlay,
            });
            let payload = json!({ "sweep": to_value(&res) });
            sink.emit(Box::new(move |w| res.write_csv(w)), summary, payload)
        }
        Command::Compare => {
            let spec = CompareSpec {
                params: *p,
                gammas: n.gammas.clone(),
                quantum: quantum_numerics(cfg),
                classical: classical_numerics(cfg),
                noisy: ensemble_options(cfg),
            };
            let table = sweep::compare_models_with_progress(&spec, progress("compare"))?;
            let summary = json!({
                "endpoints": table.endpoints,
                "classical_onset_gamma": table.classical_onset_gamma,
            });
            let payload = json!({ "rows": table.rows });
            sink.emit(Box::new(move |w| table.write_csv(w)), summary, payload)
        }
        Command::Bifurcation => {
            let spec = BifurcationSpec { params: *p, gammas: n.gammas.clone(), quantum: quantum_numerics(cfg) };
            let scan = sweep::bifurcation_scan_with_progress(&spec, progress("bifurcation"))?;
            let summary = json!({ "gamma_c": scan.gamma_c, "cell": scan.cell });
            let payload = json!({ "rows": scan.rows });
            sink.emit(Box::new(move |w| scan.write_csv(w)), summary, payload)
        }
    }
}
