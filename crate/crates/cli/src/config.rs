//! Run configuration: command defaults, overlaid by a JSON file, overlaid by
//! flags, then resolved and validated.

use std::path::PathBuf;

use qvdp_core::sweep::{linspace, Axis, AxisSpec, Observable, Tier};
use qvdp_core::{PeakRule, SteadyOptions, SystemParams, WignerGridSpec};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SingleSteady,
    CoupledSteady,
    Wigner,
    DeltaX,
    ClassicalRun,
    NoisyEnsemble,
    Sweep2d,
    Compare,
    Bifurcation,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SingleSteady => "single-steady",
            Command::CoupledSteady => "coupled-steady",
            Command::Wigner => "wigner",
            Command::DeltaX => "delta-x",
            Command::ClassicalRun => "classical-run",
            Command::NoisyEnsemble => "noisy-ensemble",
            Command::Sweep2d => "sweep2d",
            Command::Compare => "compare",
            Command::Bifurcation => "bifurcation",
        }
    }

    /// Parameter set a command starts from before the file and flags apply.
    pub fn default_params(self) -> SystemParams {
        match self {
            Command::Compare => SystemParams::weak_regime().with_eps_over_k1(3.5).with_q(0.2),
            Command::Bifurcation => SystemParams::deep_regime().with_eps_over_k1(20.0),
            _ => SystemParams::weak_regime(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

/// State that `wigner` and `delta-x` take the Wigner function of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// One oscillator.
    Single,
    /// Site one of the coupled pair.
    Coupled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    /// Fock levels per site.
    pub cutoff: usize,
    /// Seed for every random draw; `null` draws one from the OS.
    pub seed: Option<u64>,
    pub dt: f64,
    pub t_final: f64,
    pub n_realizations: usize,
    /// Worker threads; 0 uses all cores.
    pub threads: usize,
    pub model: Model,
    pub steady: SteadyOptions,
    /// `null` picks the regime default grid.
    pub wigner_grid: Option<WignerGridSpec>,
    pub peak_rule: PeakRule,
    pub max_tail_population: f64,
    /// `gamma` samples for `compare` and `bifurcation`.
    pub gammas: Vec<f64>,
    /// Axes, tiers and observables for `sweep2d`.
    pub axes: Vec<AxisSpec>,
    pub tiers: Vec<Tier>,
    pub observables: Vec<Observable>,
    /// Classical initial state `[x1, y1, x2, y2]`.
    pub initial: [f64; 4],
    /// Record every `stride`-th classical step.
    pub stride: usize,
    /// Trailing fraction averaged for steady values.
    pub steady_fraction: f64,
    pub init_half_width: f64,
    pub sample_interval: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            cutoff: 20,
            seed: None,
            dt: 1e-3,
            t_final: 200.0,
            n_realizations: 1000,
            threads: 0,
            model: Model::Coupled,
            steady: SteadyOptions::default(),
            wigner_grid: None,
            peak_rule: PeakRule::default(),
            max_tail_population: 1e-2,
            gammas: linspace(0.1, 1.0, 17),
            axes: vec![AxisSpec::new(Axis::EpsOverK1, 0.0, 6.0, 21), AxisSpec::new(Axis::Gamma, 0.1, 1.0, 21)],
            tiers: vec![Tier::Quantum],
            observables: vec![Observable::MeanPhonon],
            initial: [1.0, 0.5, -0.5, 0.2],
            stride: 10,
            steady_fraction: 0.2,
            init_half_width: 2.0,
            sample_interval: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    /// `null` streams the data to standard output.
    pub path: Option<PathBuf>,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub params: SystemParams,
    pub numerics: Numerics,
    pub output: Output,
    /// Version of the program that resolved the config.
    pub version: String,
}

impl RunConfig {
    pub fn defaults(command: Command) -> Self {
        Self {
            command,
            params: command.default_params(),
            numerics: Numerics::default(),
            output: Output { path: None, format: Format::Csv },
            version: qvdp_core::VERSION.into(),
        }
    }

    /// Merges `file` then `flags` over the command defaults, fills the
    /// remaining `null`s and validates the result.
    pub fn resolve(command: Command, file: Option<Value>, flags: Value) -> Result<Self, CliError> {
        let mut merged = serde_json::to_value(Self::defaults(command)).expect("config serializes");
        if let Some(mut file) = file {
            // An output document carries its config under `provenance`.
            if let Some(p) = file.get("provenance").cloned() {
                if p.is_object() {
                    file = p;
                }
            }
            check_keys(&merged, &file, "")?;
            if let Some(c) = file.get("command") {
                let named: Command = serde_json::from_value(c.clone())
                    .map_err(|e| CliError::Usage(format!("command: {e}")))?;
                if named != command {
                    return Err(CliError::Usage(format!(
                        "config file is for `{}` but `{}` was invoked",
                        named.name(),
                        command.name()
                    )));
                }
            }
            merge(&mut merged, file);
        }
        check_keys(&merged, &flags, "")?;
        merge(&mut merged, flags);
        let mut cfg: RunConfig =
            serde_json::from_value(merged).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        if cfg.version != qvdp_core::VERSION {
            eprintln!("note: config written by version {}, running {}", cfg.version, qvdp_core::VERSION);
            cfg.version = qvdp_core::VERSION.into();
        }
        if cfg.numerics.seed.is_none() {
            cfg.numerics.seed = Some(rand::random());
        }
        if cfg.numerics.wigner_grid.is_none() {
            cfg.numerics.wigner_grid = Some(qvdp_core::sweep::default_wigner_grid(&cfg.params));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn seed(&self) -> u64 {
        self.numerics.seed.expect("resolved config has a seed")
    }

    pub fn grid(&self) -> WignerGridSpec {
        self.numerics.wigner_grid.expect("resolved config has a grid")
    }

    fn validate(&self) -> Result<(), CliError> {
        let n = &self.numerics;
        let invalid = |m: String| Err(CliError::Usage(m));
        if self.command != Command::Sweep2d {
            self.params.validate().map_err(|e| CliError::Usage(format!("params: {e}")))?;
        }
        if n.cutoff < 2 {
            return invalid(format!("numerics.cutoff must be >= 2 (got {})", n.cutoff));
        }
        if !(n.dt > 0.0 && n.dt.is_finite()) {
            return invalid(format!("numerics.dt must be > 0 (got {})", n.dt));
        }
        if !(n.t_final > 0.0 && n.t_final.is_finite()) {
            return invalid(format!("numerics.t_final must be > 0 (got {})", n.t_final));
        }
        if n.n_realizations == 0 {
            return invalid("numerics.n_realizations must be >= 1".into());
        }
        if !(n.steady_fraction > 0.0 && n.steady_fraction <= 1.0) {
            return invalid(format!("numerics.steady_fraction must lie in (0, 1] (got {})", n.steady_fraction));
        }
        if !(n.max_tail_population > 0.0) {
            return invalid("numerics.max_tail_population must be > 0".into());
        }
        if n.stride == 0 {
            return invalid("numerics.stride must be >= 1".into());
        }
        if !(n.sample_interval > 0.0 && n.init_half_width >= 0.0) {
            return invalid("numerics.sample_interval must be > 0 and init_half_width >= 0".into());
        }
        if n.initial.iter().any(|v| !v.is_finite()) {
            return invalid("numerics.initial must be finite".into());
        }
        self.grid().validate().map_err(|e| CliError::Usage(format!("numerics.wigner_grid: {e}")))?;
        if matches!(self.command, Command::Compare | Command::Bifurcation) {
            if n.gammas.is_empty() {
                return invalid("numerics.gammas must not be empty".into());
            }
            for &g in &n.gammas {
                self.params.with_gamma(g).validate().map_err(|e| CliError::Usage(format!("numerics.gammas: {e}")))?;
            }
        }
        if self.command == Command::Compare && self.params.is_deep_regime() {
            return invalid("compare expects weak-regime parameters (k2 <= k1)".into());
        }
        Ok(())
    }
}

/// Recursive merge: objects merge key by key, anything else replaces.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

/// Rejects keys of `given` that `reference` does not have, naming the closest
/// valid key. Objects under a `null` reference are left to the deserializer.
fn check_keys(reference: &Value, given: &Value, path: &str) -> Result<(), CliError> {
    let (Value::Object(r), Value::Object(g)) = (reference, given) else {
        return Ok(());
    };
    for (k, v) in g {
        let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
        match r.get(k) {
            Some(sub) => check_keys(sub, v, &here)?,
            None => return Err(CliError::Usage(unknown_key_message(&here, k, r))),
        }
    }
    Ok(())
}

fn unknown_key_message(full: &str, key: &str, valid: &Map<String, Value>) -> String {
    let nearest = valid
        .keys()
        .map(|c| (strsim::jaro_winkler(key, c), c))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c.as_str());
    match nearest {
        Some(c) => format!("unknown key `{full}`; did you mean `{c}`?"),
        None => format!("unknown key `{full}`"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn resolve(cmd: Command, file: Option<Value>, flags: Value) -> Result<RunConfig, CliError> {
        RunConfig::resolve(cmd, file, flags)
    }

    #[test]
    fn empty_file_gives_weak_single_oscillator() {
        let c = resolve(Command::SingleSteady, Some(json!({})), json!({})).unwrap();
        assert_eq!((c.params.omega, c.params.k1, c.params.k2), (2.0, 1.0, 0.2));
        assert_eq!(c.params.eps, 0.0);
        assert!(c.numerics.seed.is_some());
    }

    #[test]
    fn flags_override_file() {
        let file = json!({"params": {"gamma": 1.0, "eps": 2.0}});
        let c = resolve(Command::CoupledSteady, Some(file), json!({"params": {"gamma": 0.2}})).unwrap();
        assert_eq!(c.params.gamma, 0.2);
        assert_eq!(c.params.eps, 2.0);
    }

    #[test]
    fn out_of_range_q_is_rejected() {
        let err = resolve(Command::SingleSteady, None, json!({"params": {"q": 1.5}})).unwrap_err();
        assert!(err.to_string().contains("q must lie in [0, 1]"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn unknown_key_names_nearest() {
        let err = resolve(Command::SingleSteady, Some(json!({"params": {"gama": 0.5}})), json!({})).unwrap_err();
        assert!(err.to_string().contains("`params.gama`; did you mean `gamma`"), "{err}");
        let err = resolve(Command::SingleSteady, Some(json!({"numerics": {"cutof": 8}})), json!({})).unwrap_err();
        assert!(err.to_string().contains("did you mean `cutoff`"), "{err}");
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = resolve(Command::Wigner, None, json!({"numerics": {"seed": 5}})).unwrap();
        let again = resolve(Command::Wigner, Some(serde_json::to_value(&c).unwrap()), json!({})).unwrap();
        assert_eq!(c, again);
        let doc = json!({"provenance": c, "data": {}});
        assert_eq!(resolve(Command::Wigner, Some(doc), json!({})).unwrap(), c);
    }

    #[test]
    fn command_mismatch_is_usage_error() {
        let err = resolve(Command::Compare, Some(json!({"command": "wigner"})), json!({})).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn command_defaults_match_their_regimes() {
        let c = resolve(Command::Compare, None, json!({})).unwrap();
        assert_eq!((c.params.eps, c.params.q), (3.5, 0.2));
        let b = resolve(Command::Bifurcation, None, json!({})).unwrap();
        assert_eq!((b.params.k2, b.params.q, b.params.eps), (3.0, 0.6, 20.0));
        assert_eq!(b.grid(), WignerGridSpec::deep_default());
    }

    #[test]
    fn merge_is_recursive() {
        let mut a = json!({"x": {"y": 1, "z": 2}, "w": [1, 2]});
        merge(&mut a, json!({"x": {"y": 5}, "w": [3]}));
        assert_eq!(a, json!({"x": {"y": 5, "z": 2}, "w": [3]}));
    }
}
