//! Time integration of the projected Navier-Stokes system and energy-class diagnostics.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::leray::leray_project;
use crate::spectral::{PhysicalField, SpectralField, TorusGrid};

/// Grid maximum beyond which a run is declared blown up.
pub const BLOW_UP_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    pub nu: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Keep every `save_every`-th step (the final state is always kept).
    pub save_every: usize,
    /// Multiplies the advection term; 1 for the physical equation.
    pub advection_scale: f64,
}

impl SolverConfig {
    pub fn new(nu: f64, dt: f64, t_end: f64) -> Result<Self> {
        let cfg = Self {
            nu,
            dt,
            t_end,
            save_every: 1,
            advection_scale: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_save_every(mut self, every: usize) -> Self {
        self.save_every = every.max(1);
        self
    }

    pub fn with_advection_scale(mut self, scale: f64) -> Self {
        self.advection_scale = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::invalid(format!("viscosity must be positive, got {}", self.nu)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::invalid(format!("horizon must be non-negative, got {}", self.t_end)));
        }
        if !self.advection_scale.is_finite() {
            return Err(Error::invalid("advection scale must be finite"));
        }
        Ok(())
    }

    /// `dt nu (2 pi N/2)^2`, the diffusive stiffness absorbed by the integrating factor.
    pub fn stability_ratio(&self, grid: &TorusGrid) -> f64 {
        let kmax = std::f64::consts::PI * grid.n() as f64;
        self.dt * self.nu * kmax * kmax
    }

    /// Number of steps and the uniform step that lands exactly on `t_end`.
    pub fn steps(&self) -> (usize, f64) {
        if self.t_end == 0.0 {
            return (0, self.dt);
        }
        let n = (self.t_end / self.dt - 1e-9).ceil().max(1.0) as usize;
        (n, self.t_end / n as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Termination {
    Completed,
    BlowUp { time: f64, grid_max: f64 },
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<SpectralField>,
    /// `1/2 ||v||_2^2` per saved time.
    pub energies: Vec<f64>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn grid(&self) -> Option<&TorusGrid> {
        self.snapshots.first().map(|s| s.grid())
    }

    /// Builds a trajectory from externally produced snapshots.
    pub fn from_snapshots(times: Vec<f64>, snapshots: Vec<SpectralField>) -> Result<Self> {
        if times.len() != snapshots.len() {
            return Err(Error::invalid(format!(
                "{} times for {} snapshots",
                times.len(),
                snapshots.len()
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("trajectory times must increase strictly"));
        }
        if let Some(first) = snapshots.first() {
            if snapshots.iter().any(|s| s.grid() != first.grid()) {
                return Err(Error::GridMismatch("snapshots live on different grids".into()));
            }
        }
        let energies = snapshots.iter().map(|s| 0.5 * s.l2_norm_sq()).collect();
        Ok(Self {
            times,
            snapshots,
            energies,
            termination: Termination::Completed,
        })
    }
}

/// `-P[(v . grad) v]` with two-thirds dealiasing of input and product.
pub fn nonlinear_term(v: &SpectralField) -> Result<SpectralField> {
    let grid = v.grid().clone();
    let dim = grid.dim();
    if v.components() != dim {
        return Err(Error::invalid(format!(
            "velocity needs {dim} components, got {}",
            v.components()
        )));
    }
    let u = v.dealias();
    let vel = u.to_grid();
    let mut adv = vec![vec![0.0; grid.len()]; dim];
    for i in 0..dim {
        for k in 0..dim {
            let d = u.derivative(i, k)?.to_grid();
            let dvals = d.component(0);
            let vk = vel.component(k);
            for (out, (a, b)) in adv[i].iter_mut().zip(vk.iter().zip(dvals)) {
                *out += a * b;
            }
        }
    }
    let product = PhysicalField::new(grid, adv)?.to_modes()?.dealias();
    Ok(leray_project(&product)?.scaled(-1.0))
}

/// `nu Delta v - s P[(v . grad) v]` with `s` the advection scale.
pub fn rhs(v: &SpectralField, cfg: &SolverConfig) -> Result<SpectralField> {
    let nl = nonlinear_term(v)?;
    v.laplacian().scaled(cfg.nu).axpy(cfg.advection_scale, &nl)
}

fn integrating_factor(v: &SpectralField, nu: f64, h: f64) -> SpectralField {
    v.map_modes(|idx| (-nu * v.wavenumber_sq(idx) * h).exp())
}

fn grid_max(v: &SpectralField) -> f64 {
    let g = v.to_grid();
    g.values()
        .iter()
        .flat_map(|c| c.iter())
        .fold(0.0f64, |m, x| if x.is_finite() { m.max(x.abs()) } else { f64::INFINITY })
}

/// One integrating-factor RK4 step of length `h`.
pub fn step(u: &SpectralField, cfg: &SolverConfig, h: f64) -> Result<SpectralField> {
    let s = cfg.advection_scale;
    let n = |w: &SpectralField| -> Result<SpectralField> { Ok(nonlinear_term(w)?.scaled(s)) };
    let half = |w: &SpectralField| integrating_factor(w, cfg.nu, 0.5 * h);
    let full = |w: &SpectralField| integrating_factor(w, cfg.nu, h);

    let k1 = n(u)?;
    let k2 = n(&half(&u.axpy(0.5 * h, &k1)?))?;
    let eu_half = half(u);
    let k3 = n(&eu_half.axpy(0.5 * h, &k2)?)?;
    let k4 = n(&full(u).axpy(h, &half(&k3))?)?;
    let mid = half(&k2.axpy(1.0, &k3)?);
    full(u)
        .axpy(h / 6.0, &full(&k1))?
        .axpy(h / 3.0, &mid)?
        .axpy(h / 6.0, &k4)
}

/// Integrates from `v0` to `cfg.t_end`.
///
/// The initial data is dealiased and projected. A run whose grid maximum
/// exceeds [`BLOW_UP_THRESHOLD`] or turns non-finite stops early and returns
/// the states saved so far.
pub fn simulate(v0: &SpectralField, cfg: &SolverConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let mut u = leray_project(&v0.dealias())?;
    let (steps, h) = cfg.steps();
    let mut times = vec![0.0];
    let mut energies = vec![0.5 * u.l2_norm_sq()];
    let mut snapshots = vec![u.clone()];
    let mut termination = Termination::Completed;
    for k in 1..=steps {
        u = step(&u, cfg, h)?;
        let t = k as f64 * h;
        let m = grid_max(&u);
        if m > BLOW_UP_THRESHOLD {
            log::warn!("run stopped at t={t:.6e}: grid max {m:.3e}");
            termination = Termination::BlowUp { time: t, grid_max: m };
            break;
        }
        if k % cfg.save_every == 0 || k == steps {
            times.push(t);
            energies.push(0.5 * u.l2_norm_sq());
            snapshots.push(u.clone());
        }
    }
    Ok(Trajectory {
        times,
        snapshots,
        energies,
        termination,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HopfReport {
    /// `1/2 ||v(t)||^2 + nu int_0^t ||grad v||^2` per saved time.
    pub lhs: Vec<f64>,
    /// `1/2 ||v(0)||^2`.
    pub rhs: f64,
    /// `max_t (lhs - rhs)`, positive when the inequality is violated.
    pub max_violation: f64,
    /// `max_t |lhs - rhs| / rhs` (0 for a zero field).
    pub max_relative_gap: f64,
}

/// Energy inequality audit with trapezoidal time quadrature.
pub fn hopf_energy_check(traj: &Trajectory, nu: f64) -> Result<HopfReport> {
    if traj.is_empty() {
        return Err(Error::invalid("empty trajectory"));
    }
    let dissipation: Vec<f64> = traj.snapshots.iter().map(|s| s.gradient_norm_sq()).collect();
    let rhs = traj.energies[0];
    let mut lhs = Vec::with_capacity(traj.len());
    let mut integral = 0.0;
    for k in 0..traj.len() {
        if k > 0 {
            let h = traj.times[k] - traj.times[k - 1];
            integral += 0.5 * h * (dissipation[k] + dissipation[k - 1]);
        }
        lhs.push(traj.energies[k] + nu * integral);
    }
    let max_violation = lhs.iter().map(|l| l - rhs).fold(f64::NEG_INFINITY, f64::max);
    let max_relative_gap = if rhs > 0.0 {
        lhs.iter().map(|l| (l - rhs).abs() / rhs).fold(0.0, f64::max)
    } else {
        0.0
    };
    Ok(HopfReport {
        lhs,
        rhs,
        max_violation,
        max_relative_gap,
    })
}

/// `(int |v|^4)^{1/4}` evaluated on a grid fine enough for band-limited `v`.
pub fn l4_norm(v: &SpectralField) -> Result<f64> {
    let fine = v.resample(2 * v.grid().n())?.to_grid();
    let vol = fine.grid().cell_volume();
    let len = fine.grid().len();
    let mut total = 0.0;
    for idx in 0..len {
        let m2: f64 = fine.values().iter().map(|c| c[idx] * c[idx]).sum();
        total += m2 * m2;
    }
    Ok((total * vol).powf(0.25))
}

#[derive(Debug, Clone, Serialize)]
pub struct WeakStrongReport {
    /// Integrability exponent on `||v||_{L^4}`: 4 for n=2, 8 for n=3.
    pub p: u32,
    /// `||a(t) - b(t)||_2^2`.
    pub gap: Vec<f64>,
    /// `int_0^t (||b||_{L^4}^p + ||b||_{L^4}^2)`.
    pub integral: Vec<f64>,
    /// Smallest `C >= 0` for which the Gronwall bound holds at every sampled
    /// time; `None` when no finite constant works.
    pub c_min: Option<f64>,
    /// True when the initial gap is zero and stays zero.
    pub identical: bool,
}

/// Calibrates the constant in
/// `||a-b||^2(t) <= ||a-b||^2(0) exp(C int_0^t (||b||_{L^4}^p + ||b||_{L^4}^2))`,
/// where `b` plays the regular solution.
pub fn weak_strong_bound(a: &Trajectory, b: &Trajectory) -> Result<WeakStrongReport> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::GridMismatch(format!(
            "trajectories have {} and {} samples",
            a.len(),
            b.len()
        )));
    }
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch("trajectories live on different grids".into()));
    }
    if a.times.iter().zip(&b.times).any(|(x, y)| (x - y).abs() > 1e-12 * x.abs().max(1.0)) {
        return Err(Error::GridMismatch("trajectories are sampled at different times".into()));
    }
    let dim = a.grid().map(|g| g.dim()).unwrap_or(2);
    let p: u32 = if dim == 2 { 4 } else { 8 };
    let mut gap = Vec::with_capacity(a.len());
    let mut weight = Vec::with_capacity(a.len());
    for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
        gap.push(x.sub(y)?.l2_norm_sq());
        let n4 = l4_norm(y)?;
        weight.push(n4.powi(p as i32) + n4 * n4);
    }
    let mut integral = vec![0.0; a.len()];
    for k in 1..a.len() {
        let h = a.times[k] - a.times[k - 1];
        integral[k] = integral[k - 1] + 0.5 * h * (weight[k] + weight[k - 1]);
    }
    let g0 = gap[0];
    let identical = g0 == 0.0 && gap.iter().all(|&g| g == 0.0);
    let mut c_min = Some(0.0f64);
    if !identical {
        for k in 1..a.len() {
            let grows = gap[k] > g0;
            if !grows {
                continue;
            }
            if g0 == 0.0 || integral[k] == 0.0 {
                c_min = None;
                break;
            }
            let c = (gap[k] / g0).ln() / integral[k];
            c_min = c_min.map(|m| m.max(c));
        }
    }
    Ok(WeakStrongReport {
        p,
        gap,
        integral,
        c_min,
        identical,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::{random_solenoidal, taylor_green, SpectrumShape, TaylorGreen2d};
    use std::f64::consts::PI;

    fn grid2(n: usize) -> TorusGrid {
        TorusGrid::new(2, n).unwrap()
    }

    #[test]
    fn zero_field_has_zero_rhs_and_trajectory() {
        let g = grid2(16);
        let z = SpectralField::zeros(&g, 2);
        let cfg = SolverConfig::new(0.1, 1e-2, 0.05).unwrap();
        assert_eq!(rhs(&z, &cfg).unwrap().max_mode_abs(), 0.0);
        let traj = simulate(&z, &cfg).unwrap();
        assert!(traj.snapshots.iter().all(|s| s.max_mode_abs() == 0.0));
        let hopf = hopf_energy_check(&traj, cfg.nu).unwrap();
        assert!(hopf.max_violation <= 0.0);
    }

    #[test]
    fn taylor_green_rhs_is_pure_diffusion() {
        let g = grid2(32);
        let v = taylor_green(&g, 1.0).unwrap();
        let cfg = SolverConfig::new(0.1, 1e-3, 0.1).unwrap();
        let expected = v.scaled(-cfg.nu * 8.0 * PI * PI);
        let got = rhs(&v, &cfg).unwrap();
        assert!(got.sub(&expected).unwrap().max_mode_abs() < 1e-12);
    }

    #[test]
    fn advection_conserves_energy() {
        let g = grid2(16);
        let mut v = SpectralField::zeros(&g, 2);
        v.set_mode(0, &[0, 1], num_complex::Complex64::new(0.3, 0.1)).unwrap();
        v.set_mode(1, &[2, 0], num_complex::Complex64::new(-0.2, 0.4)).unwrap();
        let v = leray_project(&v).unwrap();
        let nl = nonlinear_term(&v).unwrap();
        assert!(v.inner(&nl).unwrap().abs() < 1e-10);
        let r = random_solenoidal(&g, SpectrumShape::band(4), 1.0, 9).unwrap();
        let nl = nonlinear_term(&r).unwrap();
        assert!(r.inner(&nl).unwrap().abs() < 1e-10);
        assert!(nl.divergence().unwrap().max_mode_abs() < 1e-12);
    }

    #[test]
    fn taylor_green_energy_decay() {
        let g = grid2(32);
        let tg = TaylorGreen2d { amplitude: 1.0, nu: 0.1 };
        let cfg = SolverConfig::new(tg.nu, 1e-3, 0.5).unwrap().with_save_every(50);
        let traj = simulate(&taylor_green(&g, 1.0).unwrap(), &cfg).unwrap();
        for (t, e) in traj.times.iter().zip(&traj.energies) {
            let exact = tg.energy_l2_sq(*t);
            assert!(((e * 2.0) - exact).abs() / exact < 1e-6, "t={t}");
        }
    }

    #[test]
    fn random_run_dissipates_energy_and_stays_solenoidal() {
        let g = grid2(32);
        let v0 = random_solenoidal(&g, SpectrumShape::band(3), 1.0, 4).unwrap();
        let cfg = SolverConfig::new(0.05, 1e-4, 0.05).unwrap();
        let traj = simulate(&v0, &cfg).unwrap();
        assert_eq!(traj.termination, Termination::Completed);
        for w in traj.energies.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-10));
        }
        for s in &traj.snapshots {
            assert!(s.divergence().unwrap().max_mode_abs() < 1e-10);
        }
        let hopf = hopf_energy_check(&traj, cfg.nu).unwrap();
        assert!(hopf.max_violation <= 1e-6 * 2.0 * traj.energies[0], "{}", hopf.max_violation);
    }

    #[test]
    fn taylor_green_saturates_energy_inequality() {
        let g = grid2(32);
        let cfg = SolverConfig::new(0.05, 1e-3, 0.5).unwrap();
        let traj = simulate(&taylor_green(&g, 1.0).unwrap(), &cfg).unwrap();
        let hopf = hopf_energy_check(&traj, cfg.nu).unwrap();
        assert!(hopf.max_relative_gap < 1e-5, "{}", hopf.max_relative_gap);
    }

    #[test]
    fn rk4_converges_at_high_order() {
        // A superposition makes the nonlinearity active.
        let g = grid2(32);
        let base = taylor_green(&g, 1.0).unwrap();
        let extra = random_solenoidal(&g, SpectrumShape::band(3), 0.5, 2).unwrap();
        let v0 = base.axpy(1.0, &extra).unwrap();
        let run = |dt: f64| {
            let cfg = SolverConfig::new(0.05, dt, 0.2).unwrap().with_save_every(10_000);
            simulate(&v0, &cfg).unwrap().snapshots.pop().unwrap()
        };
        let reference = run(1.25e-4);
        let e1 = run(4e-3).sub(&reference).unwrap().l2_norm_sq().sqrt();
        let e2 = run(2e-3).sub(&reference).unwrap().l2_norm_sq().sqrt();
        assert!(e1 / e2 >= 8.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn blow_up_guard_returns_partial_trajectory() {
        let g = grid2(16);
        let v0 = random_solenoidal(&g, SpectrumShape::band(3), 1e11, 1).unwrap();
        let cfg = SolverConfig::new(0.01, 1e-3, 1.0).unwrap();
        let traj = simulate(&v0, &cfg).unwrap();
        assert!(matches!(traj.termination, Termination::BlowUp { .. }));
        assert!(traj.len() < 1001);
    }

    #[test]
    fn weak_strong_reductions() {
        let g = grid2(16);
        let v0 = taylor_green(&g, 1.0).unwrap();
        let cfg = SolverConfig::new(0.1, 1e-3, 0.05).unwrap();
        let a = simulate(&v0, &cfg).unwrap();
        let same = weak_strong_bound(&a, &a).unwrap();
        assert!(same.identical);
        assert_eq!(same.c_min, Some(0.0));
        assert_eq!(same.p, 4);

        let zero = simulate(&SpectralField::zeros(&g, 2), &cfg).unwrap();
        let r = weak_strong_bound(&a, &zero).unwrap();
        for (gap, e) in r.gap.iter().zip(&a.energies) {
            assert!((gap - 2.0 * e).abs() < 1e-14);
        }
        assert!(r.integral.iter().all(|&i| i == 0.0));
        assert_eq!(r.c_min, Some(0.0));

        let other = SolverConfig::new(0.1, 1e-3, 0.06).unwrap();
        let b = simulate(&v0, &other).unwrap();
        assert!(weak_strong_bound(&a, &b).is_err());
    }
}
