//! Quantum and classical van der Pol oscillators: Lindblad steady states,
//! Wigner functions, mean-field and noisy amplitude dynamics, and parameter
//! sweeps over coupled pairs.

pub mod classical;
pub mod error;
pub mod hilbert;
pub mod lindblad;
pub mod params;
pub mod stochastic;
pub mod sweep;
pub mod wigner;

/// Crate version, recorded in output provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
pub use hilbert::{
    embed, expectation, partial_trace, tensor, DensityMatrix, FockOperator, Site, Space, Tolerances, C64,
};
pub use lindblad::{
    build_coupled, build_single, evolve, evolve_to_steady, fock_populations, liouvillian, mean_phonon,
    reduced_state, steady_state, steady_state_with, Channel, EvolveOptions, LindbladModel, Liouvillian,
    SteadyMethod, SteadyOptions, SteadyReport, Trajectory,
};
pub use classical::{
    classify, detect_hopf, fixed_points, hopf_threshold, integrate, pitchfork_threshold, Dynamics, FixedPointSet,
    IntegrateOptions, PhaseState,
};
pub use params::SystemParams;
pub use stochastic::{ensemble_run, sigma_decompose, EnsembleOptions, EnsembleStats, NoiseDecomposition};
pub use sweep::{
    bifurcation_scan, compare_models, run_sweep, Axis, AxisSpec, BifurcationScan, BifurcationSpec, CompareSpec,
    CompareTable, Observable, SweepResult, SweepSpec, Tier,
};
pub use wigner::{
    delta_x, marginal_x, wigner, BimodalityResult, Marginal, PeakRule, WignerGrid, WignerGridSpec,
};
