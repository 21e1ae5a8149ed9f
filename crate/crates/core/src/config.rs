//! TOML experiment configuration.
//!
//! Top-level keys `experiment` and `seed`, then one table per concern:
//! `[grid]`, `[physics]`, `[initial]`, `[cone]`, `[fitting]`, `[kernels]`,
//! `[rescale]`, `[duhamel]`, `[output]`. Unknown keys are rejected. Each
//! experiment names the tables it needs; the rest are ignored.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    TransformCheck,
    FitSingularity,
    VerifyKernels,
    RescaleAudit,
    DuhamelResidual,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::TransformCheck => "transform-check",
            Experiment::FitSingularity => "fit-singularity",
            Experiment::VerifyKernels => "verify-kernels",
            Experiment::RescaleAudit => "rescale-audit",
            Experiment::DuhamelResidual => "duhamel-residual",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    #[serde(default)]
    pub seed: u64,
    pub grid: Option<GridSection>,
    pub physics: Option<PhysicsSection>,
    pub initial: Option<InitialSection>,
    pub cone: Option<ConeSection>,
    pub fitting: Option<FittingSection>,
    pub kernels: Option<KernelSection>,
    pub rescale: Option<RescaleSection>,
    pub duhamel: Option<DuhamelSection>,
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    pub nu: f64,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "one")]
    pub save_every: usize,
    /// Largest accepted relative gap in the energy-equality audit.
    #[serde(default = "default_hopf_tolerance")]
    pub hopf_tolerance: f64,
}

fn one() -> usize {
    1
}

fn default_hopf_tolerance() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    TaylorGreen,
    /// Taylor-Green plus `harmonic * sin(4 pi y)` in the first component.
    TaylorGreenHarmonic,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub kind: InitialKind,
    #[serde(default = "unit")]
    pub amplitude: f64,
    #[serde(default = "half")]
    pub harmonic: f64,
    #[serde(default = "default_band")]
    pub band: i64,
    #[serde(default = "unit")]
    pub norm: f64,
    #[serde(default)]
    pub decay: f64,
}

fn unit() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn default_band() -> i64 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeSection {
    pub t_s: f64,
    pub x_s: Vec<f64>,
    pub t_1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FittingSection {
    /// Directory holding `manifest.toml` and snapshot files of a synthetic singular field.
    pub samples: Option<PathBuf>,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_mus")]
    pub mus: Vec<f64>,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_tol_exact")]
    pub tolerance_exact: f64,
    #[serde(default = "default_tol_noisy")]
    pub tolerance_noisy: f64,
    #[serde(default = "default_levels")]
    pub time_levels: usize,
    #[serde(default = "default_levels")]
    pub radial_levels: usize,
    #[serde(default = "default_gap_min")]
    pub gap_min: f64,
    #[serde(default = "default_gap_min")]
    pub fraction_min: f64,
}

fn default_lambdas() -> Vec<f64> {
    vec![0.2, 0.7, 1.4]
}

fn default_mus() -> Vec<f64> {
    vec![0.1, 0.3, 0.45, 0.0]
}

fn default_amplitude() -> f64 {
    3.0
}

fn default_noise() -> f64 {
    0.05
}

fn default_tol_exact() -> f64 {
    0.02
}

fn default_tol_noisy() -> f64 {
    0.10
}

fn default_levels() -> usize {
    16
}

fn default_gap_min() -> f64 {
    1e-2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "default_nus")]
    pub nus: Vec<f64>,
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
}

fn default_deltas() -> Vec<f64> {
    vec![0.25, 0.5, 0.75, 0.9]
}

fn default_nus() -> Vec<f64> {
    vec![0.01, 0.1, 1.0]
}

fn default_dims() -> Vec<usize> {
    vec![2, 3]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RescaleSection {
    #[serde(default)]
    pub t0: f64,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<f64>,
    #[serde(default = "unit")]
    pub c_m: f64,
    #[serde(default = "default_scale_constant")]
    pub scale_constant: f64,
    #[serde(default = "half")]
    pub delta: f64,
    #[serde(default = "default_eps0")]
    pub eps0: f64,
    #[serde(default = "default_ladder")]
    pub ladder: Vec<f64>,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default = "default_rescale_nu")]
    pub nu: f64,
    #[serde(default = "default_sweep")]
    pub sweep_points: usize,
}

fn default_horizons() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}

fn default_scale_constant() -> f64 {
    crate::rescale::DEFAULT_SCALE_CONSTANT
}

fn default_eps0() -> f64 {
    0.1
}

fn default_ladder() -> Vec<f64> {
    vec![0.02, 0.01, 0.005]
}

fn default_substeps() -> usize {
    20
}

fn default_rescale_nu() -> f64 {
    0.05
}

fn default_sweep() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DuhamelSection {
    #[serde(default = "default_nu_eff")]
    pub nu_eff: f64,
    #[serde(default = "half")]
    pub r_0: f64,
    #[serde(default = "unit")]
    pub t_in: f64,
    #[serde(default = "default_elapsed")]
    pub elapsed: f64,
    #[serde(default = "default_spacing")]
    pub spacing_fraction: f64,
    #[serde(default = "default_levels")]
    pub time_steps: usize,
    #[serde(default = "default_boundary_points")]
    pub boundary_points: usize,
    #[serde(default = "default_series_order")]
    pub series_order: usize,
    /// Gaussian datum width parameter `beta` in `exp(-|y - c|^2/(4 beta))`.
    #[serde(default = "default_beta")]
    pub beta: f64,
}

fn default_nu_eff() -> f64 {
    0.02
}

fn default_elapsed() -> f64 {
    0.1
}

fn default_spacing() -> f64 {
    1.0 / 16.0
}

fn default_boundary_points() -> usize {
    64
}

fn default_series_order() -> usize {
    6
}

fn default_beta() -> f64 {
    0.004
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T> {
        section
            .as_ref()
            .ok_or_else(|| Error::Config(format!("missing table [{name}]")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_simulate_config() {
        let cfg = ExperimentConfig::parse(
            r#"
            experiment = "simulate"
            seed = 9
            [grid]
            dim = 2
            n = 32
            [physics]
            nu = 0.1
            dt = 1e-3
            t_end = 0.5
            [initial]
            kind = "taylor-green"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.experiment, Some(Experiment::Simulate));
        assert_eq!(cfg.physics.unwrap().save_every, 1);
        assert_eq!(cfg.initial.unwrap().amplitude, 1.0);
    }

    #[test]
    fn missing_viscosity_names_the_field() {
        let err = ExperimentConfig::parse("[physics]\ndt = 1e-3\nt_end = 1.0\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("nu"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::parse("[grid]\ndim = 2\nn = 8\nsize = 3\n").is_err());
        assert!(ExperimentConfig::parse("experiment = \"teleport\"\n").is_err());
    }
}
