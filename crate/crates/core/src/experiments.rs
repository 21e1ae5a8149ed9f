//! Experiment pipelines behind the `nslb` command line.
//!
//! Each pipeline reads its tables from an [`ExperimentConfig`], runs the
//! library audits, and fills a [`Report`] whose checks decide the exit status.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cone::{
    divergence_max, dtau_dt, sample_w, t_of_tau, tau_of_t, time_to_singularity, transformed_residual, ConeSpec,
    CylinderGrid, CylinderSpec, TrajectorySource,
};
use crate::config::{
    ConeSection, DuhamelSection, Experiment, ExperimentConfig, FittingSection, GridSection, InitialKind,
    InitialSection, KernelSection, RescaleSection,
};
use crate::dynamics::{hopf_energy_check, simulate, SolverConfig, Termination, Trajectory};
use crate::error::{Error, Result};
use crate::flows::{random_solenoidal, taylor_green, SpectrumShape, TaylorGreen2d};
use crate::heat::{
    boundary_kernel_series, chapman_kolmogorov, duhamel_residual, elliptic_integral_check, kernel_bound_check,
    symmetric_convolution, BoundScan, BoundarySign, DuhamelQuadrature, GaussianBump, KernelSpec, KernelVariant,
    SeriesQuadrature, SpaceTimeField,
};
use crate::report::{write_series, Check, Provenance, Report, SeriesRow, CSV_VERSION};
use crate::rescale::{growth_exponent, increment_bound_check, max_s, mu_of_s, r_policy, s_of_t, RescaleParams};
use crate::singularity::{
    bootstrap_ledger, ckn_gate, ckn_gate_fit, cone_points, fit_singularity_orders, ledger_is_consistent,
    recovery_grid, singular_value, ConeLayout, ConeSample, SobolevSpace, DEFAULT_GRADIENT_EPS, TIP_EXCLUSION,
};
use crate::snapshot::Snapshot;
use crate::spectral::{PhysicalField, SpectralField, TorusGrid};

/// Where a run writes its artifacts and how relative paths in the config resolve.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Directory of the config file; relative data paths are resolved against it.
    pub base_dir: PathBuf,
    /// Overrides the config seed when set.
    pub seed: Option<u64>,
}

/// Runs `experiment`, writes `report.json` plus experiment artifacts into
/// `opts.out_dir`, and returns the report.
pub fn run(experiment: Experiment, cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Report> {
    let mut cfg = cfg.clone();
    cfg.experiment = Some(experiment);
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    fs::create_dir_all(&opts.out_dir).map_err(|source| Error::Io {
        path: opts.out_dir.clone(),
        source,
    })?;
    let mut report = Report::new(experiment.name(), cfg.seed, cfg.clone());
    log::info!("running {} with seed {}", experiment.name(), cfg.seed);
    match experiment {
        Experiment::Simulate => run_simulate(&cfg, opts, &mut report)?,
        Experiment::TransformCheck => run_transform_check(&cfg, &mut report)?,
        Experiment::FitSingularity => run_fit_singularity(&cfg, opts, &mut report)?,
        Experiment::VerifyKernels => run_verify_kernels(&cfg, &mut report)?,
        Experiment::RescaleAudit => run_rescale_audit(&cfg, &mut report)?,
        Experiment::DuhamelResidual => run_duhamel_residual(&cfg, &mut report)?,
    }
    report.artifacts.sort();
    report.write(&opts.out_dir)?;
    Ok(report)
}

fn defaulted<T: DeserializeOwned + Clone>(section: &Option<T>, name: &str) -> Result<T> {
    match section {
        Some(s) => Ok(s.clone()),
        None => toml::from_str("").map_err(|e| Error::Config(format!("table [{name}] has required keys: {e}"))),
    }
}

fn torus(grid: &GridSection) -> Result<TorusGrid> {
    TorusGrid::new(grid.dim, grid.n).map_err(|e| Error::Config(format!("[grid]: {e}")))
}

fn cone_spec(c: &ConeSection) -> Result<ConeSpec> {
    ConeSpec::new(c.t_s, c.x_s.clone(), c.t_1).map_err(|e| Error::Config(format!("[cone]: {e}")))
}

/// Initial velocity described by the `[initial]` table.
pub fn initial_field(grid: &TorusGrid, init: &InitialSection, seed: u64) -> Result<SpectralField> {
    match init.kind {
        InitialKind::TaylorGreen => taylor_green(grid, init.amplitude),
        InitialKind::TaylorGreenHarmonic => {
            if grid.dim() != 2 {
                return Err(Error::Config("taylor-green-harmonic needs dim = 2".into()));
            }
            let (a, h, k) = (init.amplitude, init.harmonic, 2.0 * PI);
            PhysicalField::from_fn(grid, 2, |x, out| {
                out[0] = a * (k * x[0]).cos() * (k * x[1]).sin() + h * (2.0 * k * x[1]).sin();
                out[1] = -a * (k * x[0]).sin() * (k * x[1]).cos();
            })
            .to_modes()
        }
        InitialKind::Random => {
            random_solenoidal(grid, SpectrumShape::with_decay(init.band, init.decay), init.norm, seed)
        }
    }
}

/// Time series row for one saved state.
pub fn series_row(time: f64, energy: f64, v: &SpectralField) -> Result<SeriesRow> {
    Ok(SeriesRow {
        time,
        energy,
        enstrophy: 0.5 * v.gradient_norm_sq(),
        divergence_max: v.divergence()?.to_grid().max_abs(),
        h1: v.sobolev_norm(1.0),
        h2: v.sobolev_norm(2.0),
    })
}

fn run_simulate(cfg: &ExperimentConfig, opts: &RunOptions, report: &mut Report) -> Result<()> {
    let grid = torus(ExperimentConfig::require(&cfg.grid, "grid")?)?;
    let phys = ExperimentConfig::require(&cfg.physics, "physics")?;
    let init = ExperimentConfig::require(&cfg.initial, "initial")?;
    let solver = SolverConfig::new(phys.nu, phys.dt, phys.t_end)
        .map_err(|e| Error::Config(format!("[physics]: {e}")))?
        .with_save_every(phys.save_every);
    let v0 = initial_field(&grid, init, cfg.seed)?;
    let traj = simulate(&v0, &solver)?;

    let rows: Vec<SeriesRow> = traj
        .times
        .iter()
        .zip(&traj.energies)
        .zip(&traj.snapshots)
        .map(|((&t, &e), v)| series_row(t, e, v))
        .collect::<Result<_>>()?;
    write_series(&opts.out_dir.join("series.csv"), &rows)?;
    report.artifacts.push("series.csv".into());
    if let Some(last) = traj.snapshots.last() {
        let snap = Snapshot {
            time: *traj.times.last().unwrap_or(&0.0),
            field: last.to_grid(),
        };
        snap.write(&opts.out_dir.join("final.nslb"))?;
        report.artifacts.push("final.nslb".into());
    }

    report.check(Check::holds("no_blow_up", traj.termination == Termination::Completed));
    let e0 = traj.energies.first().copied().unwrap_or(0.0);
    let rise = traj
        .energies
        .windows(2)
        .map(|w| (w[1] - w[0]) / e0.max(f64::MIN_POSITIVE))
        .fold(0.0f64, f64::max);
    report.check(Check::at_most("energy_non_increasing", rise, 1e-12, Provenance::Calibrated));
    let div = rows.iter().map(|r| r.divergence_max).fold(0.0f64, f64::max);
    report.check(Check::at_most("divergence_max", div, 1e-10, Provenance::Calibrated));
    let hopf = hopf_energy_check(&traj, phys.nu)?;
    report.check(Check::at_most(
        "energy_equality_gap",
        hopf.max_relative_gap,
        phys.hopf_tolerance,
        Provenance::Calibrated,
    ));

    if init.kind == InitialKind::TaylorGreen && grid.dim() == 2 {
        let tg = TaylorGreen2d {
            amplitude: init.amplitude,
            nu: phys.nu,
        };
        let norm0 = (2.0 * e0).sqrt();
        let worst = traj
            .times
            .iter()
            .zip(&traj.energies)
            .map(|(&t, &e)| {
                let predicted = norm0 * (-tg.decay_rate() * t).exp();
                ((2.0 * e).sqrt() - predicted).abs() / predicted
            })
            .fold(0.0f64, f64::max);
        report.check(Check::at_most("taylor_green_l2_decay", worst, 1e-5, Provenance::Calibrated));
        report.constant("taylor_green_decay_rate", tg.decay_rate(), Provenance::PaperWindow);
    }

    report.constant("blow_up_threshold", crate::dynamics::BLOW_UP_THRESHOLD, Provenance::Calibrated);
    report.constant("csv_version", CSV_VERSION as f64, Provenance::Calibrated);
    report.result("steps", &solver.steps().0)?;
    report.result("saved_states", &traj.len())?;
    report.result("termination", &traj.termination)?;
    report.result("stability_ratio", &solver.stability_ratio(&grid))?;
    report.result("energy_initial", &e0)?;
    report.result("energy_final", &traj.energies.last())?;
    report.result("hopf_max_violation", &hopf.max_violation)?;
    report.result("hopf_max_relative_gap", &hopf.max_relative_gap)?;
    Ok(())
}

fn log_ladder(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi / lo).ln() * i as f64 / (n - 1).max(1) as f64).exp())
        .collect()
}

fn min_order(errors: &[f64]) -> f64 {
    errors
        .windows(2)
        .map(|p| (p[0] / p[1]).log2())
        .fold(f64::INFINITY, f64::min)
}

fn run_transform_check(cfg: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let cone = cone_spec(ExperimentConfig::require(&cfg.cone, "cone")?)?;
    let phys = ExperimentConfig::require(&cfg.physics, "physics")?;
    let grid_cfg = ExperimentConfig::require(&cfg.grid, "grid")?;
    let init = cfg.initial.clone().unwrap_or(InitialSection {
        kind: InitialKind::Random,
        amplitude: 1.0,
        harmonic: 0.5,
        band: 3,
        norm: 1.0,
        decay: 0.0,
    });
    if cone.dim() != grid_cfg.dim {
        return Err(Error::Config(format!(
            "[cone] x_s has {} coordinates but [grid] dim = {}",
            cone.dim(),
            grid_cfg.dim
        )));
    }
    let t_s = cone.t_s();

    let taus: Vec<f64> = std::iter::once(0.0).chain(log_ladder(1e-3, 1e6, 91)).collect();
    let mut identity = 0.0f64;
    for &tau in &taus {
        let t = t_of_tau(tau, &cone)?;
        let err = ((t_s - t) - time_to_singularity(tau, &cone)).abs() / t_s;
        identity = identity.max(err);
        if t > 0.0 {
            let back = tau_of_t(t, &cone)?;
            identity = identity.max(((t_s - t_of_tau(back, &cone)?) - (t_s - t)).abs() / t_s);
        }
    }
    report.check(Check::at_most("time_identity", identity, 1e-14, Provenance::Calibrated));

    let mut fd = 0.0f64;
    for frac in [0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99] {
        let t = frac * t_s;
        let h = 1e-5 * (t_s - t);
        let exact = dtau_dt(t, &cone)?;
        let approx = ((t + h) / (t_s - t - h) - (t - h) / (t_s - t + h)) / (2.0 * h);
        fd = fd.max((approx - exact).abs() / exact);
    }
    report.check(Check::at_most("dtau_dt_finite_difference", fd, 1e-6, Provenance::Calibrated));

    let coarse = TorusGrid::new(grid_cfg.dim, grid_cfg.n).map_err(|e| Error::Config(format!("[grid]: {e}")))?;
    let band = init.band.min(grid_cfg.n as i64 / 2 - 1).max(1);
    let v = random_solenoidal(&coarse, SpectrumShape::with_decay(band, init.decay), init.norm, cfg.seed)?;
    let t_mid = 0.5 * (cone.t_1() + t_s);
    let tau_mid = tau_of_t(t_mid, &cone)?;
    let mut divergence = Vec::new();
    for level in 0..3 {
        let n = grid_cfg.n << level;
        let g = TorusGrid::new(grid_cfg.dim, n)?;
        let fine = v.resample(n)?;
        let traj = Trajectory::from_snapshots(vec![0.0, t_s], vec![fine.clone(), fine])?;
        let src = TrajectorySource::new(&traj)?;
        let cg = CylinderGrid::aligned(&cone, &g, t_mid)?;
        divergence.push(divergence_max(&sample_w(&src, &cone, tau_mid, &cg)?));
    }
    report.check(Check::at_least(
        "incompressibility_order",
        min_order(&divergence),
        1.8,
        Provenance::Calibrated,
    ));
    report.result("incompressibility_divergence", &divergence)?;

    if grid_cfg.dim == 2 {
        let tg = TaylorGreen2d {
            amplitude: 1.0,
            nu: phys.nu,
        };
        let tau = cone.cylinder().t_in + 0.5;
        let mut norms = Vec::new();
        for h in [0.04, 0.02, 0.01] {
            let cg = CylinderGrid::new(2, cone.cylinder().r_0, h)?;
            norms.push(transformed_residual(&tg, &cone, tg.nu, tau, &cg, h)?.l2);
        }
        report.check(Check::at_least(
            "transformed_residual_order",
            min_order(&norms),
            1.8,
            Provenance::Calibrated,
        ));
        report.result("transformed_residual_l2", &norms)?;
    }
    report.result("cylinder", &cone.cylinder())?;
    Ok(())
}

/// Description of a bundled synthetic singular field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotManifest {
    pub c: f64,
    pub lambda: f64,
    pub mu: f64,
    pub t_s: f64,
    pub x_s: Vec<f64>,
    pub t_1: f64,
    pub n: usize,
    /// Smallest `t_s - t` among the snapshots; times are log-spaced up to `t_s - t_1`.
    pub gap_min: f64,
    pub snapshots: Vec<String>,
}

/// Grid snapshots of `c/((t_s - t)^mu |x - x_s|^lambda)`, one per manifest
/// entry, in increasing time. Nodes inside the tip exclusion hold 0.
pub fn synthetic_snapshot_set(m: &SnapshotManifest) -> Result<Vec<Snapshot>> {
    let cone = ConeSpec::new(m.t_s, m.x_s.clone(), m.t_1)?;
    let grid = TorusGrid::new(cone.dim(), m.n)?;
    let dim = cone.dim();
    log_ladder(m.gap_min, m.t_s - m.t_1, m.snapshots.len())
        .into_iter()
        .rev()
        .map(|gap| {
            let t = m.t_s - gap;
            let field = PhysicalField::from_fn(&grid, 1, |x, out| {
                let r: f64 = x[..dim].iter().zip(cone.x_s()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                out[0] = if r < TIP_EXCLUSION {
                    0.0
                } else {
                    singular_value(m.c, m.lambda, m.mu, &cone, t, &x[..dim])
                };
            });
            Ok(Snapshot { time: t, field })
        })
        .collect()
}

/// Cone samples from grid snapshots: every node inside the cone and outside the tip exclusion.
pub fn samples_from_snapshots(snaps: &[Snapshot], cone: &ConeSpec) -> Vec<ConeSample> {
    let mut out = Vec::new();
    for snap in snaps {
        let gap = cone.t_s() - snap.time;
        if gap < TIP_EXCLUSION || snap.time < cone.t_1() * (1.0 - 1e-12) {
            continue;
        }
        let grid = snap.field.grid();
        let dim = grid.dim();
        for idx in 0..grid.len() {
            let p = grid.point(idx);
            let x = &p[..dim];
            let r: f64 = x.iter().zip(cone.x_s()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let value = snap.field.component(0)[idx];
            if r >= TIP_EXCLUSION && r <= gap && value != 0.0 && value.is_finite() {
                out.push(ConeSample {
                    t: snap.time,
                    x: x.to_vec(),
                    value,
                });
            }
        }
    }
    out
}

fn layout(f: &FittingSection) -> ConeLayout {
    ConeLayout {
        time_levels: f.time_levels,
        gap_min: f.gap_min,
        radial_levels: f.radial_levels,
        fraction_min: f.fraction_min,
    }
}

fn run_fit_singularity(cfg: &ExperimentConfig, opts: &RunOptions, report: &mut Report) -> Result<()> {
    let fitting = defaulted(&cfg.fitting, "fitting")?;
    report.constant("velocity_gate_mu", 3.0 / 8.0, Provenance::PaperWindow);
    report.constant("velocity_gate_lambda", 3.0 / 4.0, Provenance::PaperWindow);
    report.constant("gradient_gate_mu", 0.5, Provenance::PaperWindow);
    report.constant("gradient_gate_lambda", 1.5, Provenance::PaperWindow);
    report.constant("gradient_gate_eps", DEFAULT_GRADIENT_EPS, Provenance::Calibrated);
    report.constant("tip_exclusion", TIP_EXCLUSION, Provenance::Calibrated);

    if let Some(dir) = &fitting.samples {
        let dir = if dir.is_absolute() { dir.clone() } else { opts.base_dir.join(dir) };
        let manifest_path = dir.join("manifest.toml");
        let text = fs::read_to_string(&manifest_path).map_err(|source| Error::Io {
            path: manifest_path.clone(),
            source,
        })?;
        let manifest: SnapshotManifest =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", manifest_path.display())))?;
        let cone = cone_spec(&ConeSection {
            t_s: manifest.t_s,
            x_s: manifest.x_s.clone(),
            t_1: manifest.t_1,
        })?;
        let snaps: Vec<Snapshot> = manifest
            .snapshots
            .iter()
            .map(|name| Snapshot::read(&dir.join(name)))
            .collect::<Result<_>>()?;
        let samples = samples_from_snapshots(&snaps, &cone);
        let fit = fit_singularity_orders(&samples, &cone)?;
        let rel = |fitted: f64, truth: f64| {
            if truth == 0.0 {
                fitted.abs()
            } else {
                (fitted - truth).abs() / truth
            }
        };
        report.check(Check::at_most(
            "snapshot_lambda_recovery",
            rel(fit.lambda, manifest.lambda),
            fitting.tolerance_exact,
            Provenance::Calibrated,
        ));
        report.check(Check::at_most(
            "snapshot_mu_recovery",
            rel(fit.mu, manifest.mu),
            fitting.tolerance_exact,
            Provenance::Calibrated,
        ));
        report.check(Check::holds(
            "snapshot_gates_agree",
            ckn_gate_fit(&fit, DEFAULT_GRADIENT_EPS) == ckn_gate(manifest.lambda, manifest.mu, DEFAULT_GRADIENT_EPS),
        ));
        report.result("snapshot_manifest", &manifest)?;
        report.result("snapshot_fit", &fit)?;
        report.result("snapshot_gates", &ckn_gate_fit(&fit, DEFAULT_GRADIENT_EPS))?;
    }

    let cone = match &cfg.cone {
        Some(c) => cone_spec(c)?,
        None => ConeSpec::new(1.0, vec![0.1, 0.2], 0.01)?,
    };
    let lay = layout(&fitting);
    let exact = recovery_grid(
        &fitting.lambdas,
        &fitting.mus,
        fitting.amplitude,
        &cone,
        &lay,
        0.0,
        fitting.tolerance_exact,
        cfg.seed,
    )?;
    let noisy = recovery_grid(
        &fitting.lambdas,
        &fitting.mus,
        fitting.amplitude,
        &cone,
        &lay,
        fitting.noise,
        fitting.tolerance_noisy,
        cfg.seed,
    )?;
    let count = |cases: &[crate::singularity::RecoveryCase], f: fn(&crate::singularity::RecoveryCase) -> bool| {
        cases.iter().filter(|c| f(c)).count() as f64
    };
    let total = exact.len() as f64;
    report.check(Check::at_least("recovered_noiseless", count(&exact, |c| c.recovered), total, Provenance::Measured));
    report.check(Check::at_least("recovered_noisy", count(&noisy, |c| c.recovered), total, Provenance::Measured));
    report.check(Check::at_least(
        "gates_classify_noiseless",
        count(&exact, |c| c.gates_agree),
        total,
        Provenance::Measured,
    ));
    report.check(Check::at_least("gates_classify_noisy", count(&noisy, |c| c.gates_agree), total, Provenance::Measured));
    report.check(Check::at_least(
        "ray_scan_flags_singular",
        count(&exact, |c| c.scan_flags_singular && (c.lambda > 0.0 || c.mu > 0.0)),
        count(&exact, |c| c.lambda > 0.0 || c.mu > 0.0),
        Provenance::Measured,
    ));
    report.result("recovery_noiseless", &exact)?;
    report.result("recovery_noisy", &noisy)?;

    if cone.dim() == 2 {
        let control_cone = ConeSpec::new(0.5, cone.x_s().to_vec(), 0.4)?;
        let control_layout = ConeLayout {
            gap_min: 1e-3,
            ..lay
        };
        let tg = TaylorGreen2d { amplitude: 1.0, nu: 0.05 };
        let samples: Vec<ConeSample> = cone_points(&control_cone, &control_layout)?
            .into_iter()
            .map(|(t, x)| {
                let mut v = [0.0; 2];
                tg.velocity(t, &x, &mut v);
                ConeSample {
                    t,
                    x,
                    value: v[0].hypot(v[1]),
                }
            })
            .collect();
        let fit = fit_singularity_orders(&samples, &control_cone)?;
        report.check(Check::at_most("smooth_control_lambda", fit.lambda, 0.05, Provenance::Calibrated));
        report.check(Check::at_most("smooth_control_mu", fit.mu, 0.05, Provenance::Calibrated));
        report.result("smooth_control_fit", &fit)?;
    }

    let ledger = bootstrap_ledger(SobolevSpace { s: 0.0, p: 3.0 }, 2, 3, 0.01)?;
    report.check(Check::holds("bootstrap_ledger_consistent", ledger_is_consistent(&ledger, 3)));
    report.result("bootstrap_ledger", &ledger)?;
    Ok(())
}

fn run_verify_kernels(cfg: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let kc: KernelSection = defaulted(&cfg.kernels, "kernels")?;
    let scan = BoundScan::default();
    let mut bounds = Vec::new();
    for &dim in &kc.dims {
        for &delta in &kc.deltas {
            for variant in [KernelVariant::Derivative, KernelVariant::Kernel] {
                let reports = kc
                    .nus
                    .iter()
                    .map(|&nu| kernel_bound_check(delta, &KernelSpec::new(nu, dim)?, variant, &scan))
                    .collect::<Result<Vec<_>>>()?;
                let tag = format!("{}_n{dim}_delta{delta}", variant_name(variant));
                let worst = reports
                    .iter()
                    .map(|r| r.c_observed - r.c_predicted)
                    .fold(f64::NEG_INFINITY, f64::max);
                report.check(Check::at_most(format!("bound_{tag}"), worst, 1e-6, Provenance::Calibrated));
                let lo = reports.iter().map(|r| r.c_observed).fold(f64::INFINITY, f64::min);
                let hi = reports.iter().map(|r| r.c_observed).fold(0.0f64, f64::max);
                report.check(Check::at_most(
                    format!("viscosity_independent_{tag}"),
                    hi / lo - 1.0,
                    1e-3,
                    Provenance::Calibrated,
                ));
                if let Some(r) = reports.first() {
                    report.constant(&format!("c_predicted_{tag}"), r.c_predicted, Provenance::Calibrated);
                }
                bounds.extend(reports);
            }
        }
    }
    report.result("kernel_bounds", &bounds)?;

    let elliptic = elliptic_integral_check(2.0, 0.5, 3, 10.0, &[0.1, 0.5, 1.0])?;
    let slope = elliptic.slope.unwrap_or(f64::NAN);
    report.check(Check::at_most(
        "elliptic_slope_relative_error",
        (slope - 0.5).abs() / 0.5,
        0.15,
        Provenance::Calibrated,
    ));
    report.check(Check::holds("elliptic_bound_holds", elliptic.bound_holds));
    report.result("elliptic", &elliptic)?;

    let k = KernelSpec::new(0.05, 2)?;
    let series = boundary_kernel_series(
        6,
        0.25,
        &k,
        (1.5, &[0.1, 0.0]),
        (1.0, &[0.0, 0.05]),
        SeriesQuadrature {
            spacing: 0.025,
            steps: 24,
        },
    )?;
    let t = &series.terms;
    report.check(Check::holds(
        "series_terms_decay",
        series.converging && t.len() >= 3 && t.windows(2).skip(t.len() - 3).all(|w| w[0] > w[1]),
    ));
    report.result("boundary_series", &series)?;

    let (composed, direct) = chapman_kolmogorov(&k, 0.2, 0.3, &[0.1, -0.2], &[0.0, 0.1])?;
    report.check(Check::at_most(
        "chapman_kolmogorov",
        (composed - direct).abs() / direct,
        1e-6,
        Provenance::Calibrated,
    ));

    let linear = |u: &[f64]| u[0];
    let conv = symmetric_convolution(&linear, 1.0, &[0.1, 0.1], 0, 0.2, &KernelSpec::new(0.1, 2)?, 200)?;
    report.check(Check::at_most(
        "symmetric_convolution_linear",
        (conv.value - 1.0).abs(),
        1e-6,
        Provenance::Calibrated,
    ));
    report.check(Check::holds(
        "symmetric_convolution_bound",
        conv.value.abs() <= conv.bound * (1.0 + 1e-6),
    ));
    report.result("symmetric_convolution", &conv)?;
    Ok(())
}

fn variant_name(v: KernelVariant) -> &'static str {
    match v {
        KernelVariant::Kernel => "kernel",
        KernelVariant::Derivative => "derivative",
    }
}

fn run_rescale_audit(cfg: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let rc: RescaleSection = defaulted(&cfg.rescale, "rescale")?;
    if rc.sweep_points < 2 {
        return Err(Error::Config("[rescale] sweep_points must be at least 2".into()));
    }
    #[derive(Serialize)]
    struct Sweep {
        horizon: f64,
        r: f64,
        min_mu_over_lower: f64,
        max_mu_over_upper: f64,
    }
    let mut sweeps = Vec::new();
    for &horizon in &rc.horizons {
        let r = r_policy(rc.c_m, horizon, rc.scale_constant)?;
        let mut p = RescaleParams::new(r, rc.t0, horizon).map_err(|e| Error::Config(format!("[rescale]: {e}")))?;
        p.c_m = rc.c_m;
        p.delta = rc.delta;
        p.eps0 = rc.eps0;
        p.validate().map_err(|e| Error::Config(format!("[rescale]: {e}")))?;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        let mut all_ok = true;
        for i in 0..rc.sweep_points {
            let s = max_s() * i as f64 / (rc.sweep_points - 1) as f64;
            let a = mu_of_s(s, &p)?;
            lo = lo.min(a.mu / a.lower_bound);
            hi = hi.max(a.mu / a.upper_bound);
            all_ok &= a.lower_ok && a.upper_ok;
        }
        report.check(Check::at_least(
            format!("mu_lower_bound_T{horizon}"),
            lo,
            1.0 - 1e-12,
            Provenance::PaperWindow,
        ));
        report.check(Check::holds(format!("mu_bounds_T{horizon}"), all_ok));
        let err = (s_of_t(rc.t0 + 0.5, &p)? - 1.0 / 3f64.sqrt()).abs();
        report.check(Check::at_most(format!("s_of_t_window_T{horizon}"), err, 1e-14, Provenance::Calibrated));
        report.constant(&format!("r_T{horizon}"), r, Provenance::Calibrated);
        sweeps.push(Sweep {
            horizon,
            r,
            min_mu_over_lower: lo,
            max_mu_over_upper: hi,
        });
    }
    report.result("mu_sweeps", &sweeps)?;
    report.constant("scale_constant", rc.scale_constant, Provenance::Calibrated);
    report.constant("mu_lower_bound_factor", 3.0 * 3f64.sqrt() / 8.0, Provenance::PaperWindow);

    let mut alpha_min = f64::INFINITY;
    for i in 1..100 {
        for j in 0..50 {
            let (delta, eps0) = (i as f64 / 100.0, j as f64 / 100.0);
            alpha_min = alpha_min.min(growth_exponent(delta, eps0)?);
        }
    }
    report.check(Check::at_least(
        "growth_exponent_min",
        alpha_min,
        1.0 + f64::EPSILON,
        Provenance::PaperWindow,
    ));

    let grid = match &cfg.grid {
        Some(g) => torus(g)?,
        None => TorusGrid::new(2, 32)?,
    };
    let init = cfg.initial.clone().unwrap_or(InitialSection {
        kind: InitialKind::TaylorGreenHarmonic,
        amplitude: 1.0,
        harmonic: 0.5,
        band: 3,
        norm: 1.0,
        decay: 0.0,
    });
    let v0 = initial_field(&grid, &init, cfg.seed)?;
    let horizon = rc.horizons.iter().copied().fold(rc.t0 + 1.0, f64::max);
    let mut p = RescaleParams::new(r_policy(rc.c_m, horizon, rc.scale_constant)?, rc.t0, horizon)?;
    p.delta = rc.delta;
    p.eps0 = rc.eps0;
    let inc = increment_bound_check(&v0, rc.nu, &rc.ladder, rc.substeps, &p)?;
    report.check(Check::at_least(
        "increment_slope",
        inc.slope.unwrap_or(f64::NAN),
        1.2,
        Provenance::Calibrated,
    ));
    report.constant("alpha0", inc.predicted_alpha0, Provenance::PaperWindow);
    report.result("increments", &inc)?;
    Ok(())
}

fn run_duhamel_residual(cfg: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let dc: DuhamelSection = defaulted(&cfg.duhamel, "duhamel")?;
    let k = KernelSpec::new(dc.nu_eff, 2).map_err(|e| Error::Config(format!("[duhamel]: {e}")))?;
    let cyl = CylinderSpec {
        t_in: dc.t_in,
        r_0: dc.r_0,
    };
    let bump = GaussianBump {
        amplitude: 1.0,
        centre: vec![0.1 * dc.r_0, -0.04 * dc.r_0],
        beta: dc.beta,
    };
    let probes: Vec<Vec<f64>> = [[0.0, 0.0], [0.2, 0.0], [0.0, -0.2], [-0.16, 0.12]]
        .iter()
        .map(|p| p.iter().map(|c| c * dc.r_0).collect())
        .collect();
    let quad = DuhamelQuadrature {
        spacing_fraction: dc.spacing_fraction,
        time_steps: dc.time_steps,
        boundary_points: dc.boundary_points,
        series_order: dc.series_order,
    };
    let nu = dc.nu_eff;
    let t_in = dc.t_in;
    let tau = t_in + dc.elapsed;
    let range = (t_in, tau + 1.0);
    let heat = |t: f64, x: &[f64]| bump.evolved(nu, t - t_in, x);
    let zero = |_: f64, _: &[f64]| 0.0;
    let field = SpaceTimeField { range, eval: &heat };
    let none = SpaceTimeField { range, eval: &zero };

    let base = duhamel_residual(&field, &none, &field, &cyl, &k, tau, &probes, quad, BoundarySign::Printed, true)?;
    report.check(Check::at_most("pure_heat_residual", base.residual, 1e-4, Provenance::Calibrated));
    report.result("pure_heat", &base)?;

    let refinement: Vec<f64> = [4usize, 8, 16]
        .iter()
        .map(|&steps| {
            let q = DuhamelQuadrature {
                time_steps: steps,
                ..quad
            };
            duhamel_residual(&field, &none, &field, &cyl, &k, tau, &probes, q, BoundarySign::Printed, true)
                .map(|r| r.residual)
        })
        .collect::<Result<_>>()?;
    let floor = refinement.iter().copied().fold(0.0f64, f64::max);
    if floor < 1e-12 {
        report.check(Check::at_most("pure_heat_refinement_floor", floor, 1e-12, Provenance::Calibrated));
    } else {
        report.check(Check::at_least(
            "pure_heat_refinement_order",
            min_order(&refinement),
            1.8,
            Provenance::Calibrated,
        ));
    }
    report.result("pure_heat_refinement", &refinement)?;

    let (c, omega) = (0.3, 20.0);
    let forced = |t: f64, x: &[f64]| bump.evolved(nu, t - t_in, x) + c / omega * (omega * (t - t_in)).sin();
    let forcing = |t: f64, _: &[f64]| c * (omega * (t - t_in)).cos();
    let forced_field = SpaceTimeField { range, eval: &forced };
    let forcing_field = SpaceTimeField { range, eval: &forcing };
    let centre = [vec![0.0, 0.0]];
    let forced_residuals: Vec<f64> = [4usize, 8, 16]
        .iter()
        .map(|&steps| {
            let q = DuhamelQuadrature {
                time_steps: steps,
                series_order: 2,
                ..quad
            };
            duhamel_residual(
                &forced_field,
                &forcing_field,
                &forced_field,
                &cyl,
                &k,
                tau,
                &centre,
                q,
                BoundarySign::Printed,
                true,
            )
            .map(|r| r.residual)
        })
        .collect::<Result<_>>()?;
    report.check(Check::at_least(
        "forced_time_order",
        min_order(&forced_residuals),
        1.8,
        Provenance::Calibrated,
    ));
    report.result("forced_refinement", &forced_residuals)?;
    report.constant("formal_time_order", 2.0, Provenance::Calibrated);

    let edge = GaussianBump {
        amplitude: 1.0,
        centre: vec![0.7 * dc.r_0, 0.0],
        beta: dc.beta,
    };
    let edge_heat = |t: f64, x: &[f64]| edge.evolved(nu, t - t_in, x) + c / omega * (omega * (t - t_in)).sin();
    let edge_field = SpaceTimeField {
        range,
        eval: &edge_heat,
    };
    let edge_probes = vec![vec![0.6 * dc.r_0, 0.0], vec![0.8 * dc.r_0, 0.0]];
    let mut signs = Vec::new();
    for sign in [BoundarySign::Printed, BoundarySign::Consistent] {
        signs.push(duhamel_residual(
            &edge_field,
            &forcing_field,
            &edge_field,
            &cyl,
            &k,
            tau,
            &edge_probes,
            quad,
            sign,
            true,
        )?);
    }
    report.result("boundary_sign_comparison", &signs)?;
    Ok(())
}

/// Writes a fresh synthetic snapshot set and its manifest into `dir`.
pub fn write_synthetic_set(dir: &Path, manifest: &SnapshotManifest) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let snaps = synthetic_snapshot_set(manifest)?;
    for (name, snap) in manifest.snapshots.iter().zip(&snaps) {
        snap.write(&dir.join(name))?;
    }
    let text = toml::to_string(manifest).map_err(|e| Error::invalid(format!("manifest: {e}")))?;
    crate::report::write_text(&dir.join("manifest.toml"), &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> SnapshotManifest {
        SnapshotManifest {
            c: 3.0,
            lambda: 0.5,
            mu: 0.3,
            t_s: 1.0,
            x_s: vec![0.0, 0.0],
            t_1: 0.5,
            n: 32,
            gap_min: 0.03,
            snapshots: (0..8).map(|i| format!("s{i}.nslb")).collect(),
        }
    }

    #[test]
    fn synthetic_snapshots_fit_back_to_their_exponents() {
        let m = manifest();
        let snaps = synthetic_snapshot_set(&m).unwrap();
        assert!(snaps.windows(2).all(|w| w[0].time < w[1].time));
        let cone = ConeSpec::new(m.t_s, m.x_s.clone(), m.t_1).unwrap();
        let samples = samples_from_snapshots(&snaps, &cone);
        let fit = fit_singularity_orders(&samples, &cone).unwrap();
        assert!((fit.lambda - 0.5).abs() < 1e-9 && (fit.mu - 0.3).abs() < 1e-9, "{fit:?}");
    }

    #[test]
    fn missing_required_tables_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let opts = RunOptions {
            out_dir: dir.path().to_path_buf(),
            base_dir: dir.path().to_path_buf(),
            seed: None,
        };
        let cfg = ExperimentConfig::parse("[grid]\ndim = 2\nn = 16\n").unwrap();
        let err = run(Experiment::Simulate, &cfg, &opts).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("physics")), "{err}");
    }
}
