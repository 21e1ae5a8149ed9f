//! Bookkeeping for the rescaled global scheme: the `s`-time map, the
//! coefficient functions `mu(s)`, `mu^{tau,k}(s)`, the spatial scale `r`, the
//! growth exponent and the measured step increments.

use serde::Serialize;

use crate::dynamics::{simulate, SolverConfig, Termination};
use crate::error::{Error, Result};
use crate::spectral::SpectralField;

/// Default `c(n, m)` in the scale policy; calibrated, not derived.
pub const DEFAULT_SCALE_CONSTANT: f64 = 32.0;

/// Length of the time window covered by `s in [0, 1/sqrt 3]`.
pub const WINDOW: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RescaleParams {
    pub r: f64,
    pub t0: f64,
    /// Horizon `T >= t0 + 1/2`.
    pub horizon: f64,
    pub m: u32,
    pub c_m: f64,
    pub delta: f64,
    pub eps0: f64,
}

impl RescaleParams {
    pub fn new(r: f64, t0: f64, horizon: f64) -> Result<Self> {
        let p = Self {
            r,
            t0,
            horizon,
            m: 2,
            c_m: 1.0,
            delta: 0.5,
            eps0: 0.1,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::invalid(format!("scale r must be positive, got {}", self.r)));
        }
        if !(self.t0 >= 0.0 && self.horizon >= self.t0 + WINDOW) {
            return Err(Error::invalid(format!(
                "need 0 <= t0 and t0 + 1/2 <= T, got t0={}, T={}",
                self.t0, self.horizon
            )));
        }
        if self.m < 2 {
            return Err(Error::invalid(format!("regularity order m={} must be at least 2", self.m)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) || !(0.0..0.5).contains(&self.eps0) {
            return Err(Error::invalid("need delta in (0,1) and eps0 in [0, 1/2)"));
        }
        if !(self.c_m >= 0.0) {
            return Err(Error::invalid("data bound C_m must be non-negative"));
        }
        Ok(())
    }
}

/// `s = (t - t0)/sqrt(1 - (t - t0)^2)`.
pub fn s_of_t(t: f64, p: &RescaleParams) -> Result<f64> {
    let d = t - p.t0;
    if d >= 1.0 {
        return Err(Error::OutOfRange(format!("t - t0 = {d} >= 1 makes the time map singular")));
    }
    if !(0.0..=WINDOW).contains(&d) {
        return Err(Error::OutOfRange(format!("t - t0 = {d} outside [0, 1/2]")));
    }
    Ok(d / (1.0 - d * d).sqrt())
}

/// Inverse map `t = t0 + s/sqrt(1 + s^2)`.
pub fn t_of_s(s: f64, p: &RescaleParams) -> Result<f64> {
    if !(0.0..=max_s() * (1.0 + 1e-15)).contains(&s) {
        return Err(Error::OutOfRange(format!("s = {s} outside [0, 1/sqrt 3]")));
    }
    Ok(p.t0 + s / (1.0 + s * s).sqrt())
}

pub fn max_s() -> f64 {
    1.0 / 3f64.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoeffAudit {
    pub s: f64,
    pub mu: f64,
    /// `mu^{tau,k} = (1 + t(s))^k mu` for `k = 1, 2`.
    pub mu_tau_k: [f64; 2],
    /// `3 sqrt 3/(8 (1 + T))`.
    pub lower_bound: f64,
    /// `r (1 + T)`, the bound on `r mu^{tau,k}`.
    pub upper_bound: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
}

/// `mu(s) = sqrt(1 - (t(s) - t0)^2)^3/(1 + t(s))` and its bounds.
pub fn mu_of_s(s: f64, p: &RescaleParams) -> Result<CoeffAudit> {
    let t = t_of_s(s, p)?;
    let d = t - p.t0;
    let mu = (1.0 - d * d).sqrt().powi(3) / (1.0 + t);
    let mu_tau_k = [(1.0 + t) * mu, (1.0 + t).powi(2) * mu];
    let lower_bound = 3.0 * 3f64.sqrt() / (8.0 * (1.0 + p.horizon));
    let upper_bound = p.r * (1.0 + p.horizon);
    Ok(CoeffAudit {
        s,
        mu,
        mu_tau_k,
        lower_bound,
        upper_bound,
        lower_ok: mu >= lower_bound * (1.0 - 1e-12),
        upper_ok: mu_tau_k.iter().all(|m| p.r * m <= upper_bound * (1.0 + 1e-12)),
    })
}

/// `r = 1/(c (C_m + 1)^2 (1 + T))`.
pub fn r_policy(c_m: f64, horizon: f64, c: f64) -> Result<f64> {
    if !(c > 0.0 && c_m >= 0.0 && horizon >= 0.0) {
        return Err(Error::invalid("scale policy needs c > 0, C_m >= 0, T >= 0"));
    }
    Ok(1.0 / (c * (c_m + 1.0).powi(2) * (1.0 + horizon)))
}

/// `alpha0 = 2 (1 - eps0) delta + 1 - delta`.
pub fn growth_exponent(delta: f64, eps0: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) || !(0.0..0.5).contains(&eps0) {
        return Err(Error::OutOfRange(format!("delta={delta}, eps0={eps0}")));
    }
    Ok(2.0 * (1.0 - eps0) * delta + 1.0 - delta)
}

/// `(1 + t) u(s, r x)` for the comparison value `u`.
pub fn reconstruct(u: f64, s: f64, p: &RescaleParams) -> Result<f64> {
    Ok((1.0 + t_of_s(s, p)?) * u)
}

/// `u(s, y) = v(t, y/r)/(1 + t)`.
pub fn comparison_value(v: f64, t: f64) -> f64 {
    v / (1.0 + t)
}

/// `H^2 cap C^2` proxy: `||f||_{H^2}` plus grid maxima of all derivatives up to order 2.
pub fn h2_proxy(f: &SpectralField) -> Result<f64> {
    let dim = f.grid().dim();
    let mut total = f.sobolev_norm(2.0) + f.to_grid().max_abs();
    for c in 0..f.components() {
        for a in 0..dim {
            let d = f.derivative(c, a)?;
            total += d.to_grid().max_abs();
            for b in a..dim {
                total += d.derivative(0, b)?.to_grid().max_abs();
            }
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Serialize)]
pub struct IncrementReport {
    pub steps: Vec<f64>,
    pub scales: Vec<f64>,
    pub increments: Vec<f64>,
    /// Log-log slope of increment against step; `None` when all increments vanish.
    pub slope: Option<f64>,
    pub predicted_alpha0: f64,
    pub pass: bool,
}

/// Margin required above linear growth.
pub const INCREMENT_MARGIN: f64 = 0.2;

/// Runs the scaled equation `v_t + r (v.grad) v = nu r^2 Delta v` over each
/// step `D` of the ladder, with `r = D^{(1 - eps0)/2}`, and measures
/// `|v(D) - v(0) * G_{nu r^2}(D)|` in the `H^2` proxy.
pub fn increment_bound_check(
    v0: &SpectralField,
    nu: f64,
    ladder: &[f64],
    substeps: usize,
    p: &RescaleParams,
) -> Result<IncrementReport> {
    p.validate()?;
    if ladder.len() < 2 || ladder.iter().any(|&d| !(d > 0.0 && d <= WINDOW)) || substeps == 0 {
        return Err(Error::invalid("ladder needs at least two steps in (0, 1/2] and substeps > 0"));
    }
    let mut scales = Vec::new();
    let mut increments = Vec::new();
    for &d in ladder {
        let r = d.powf((1.0 - p.eps0) / 2.0);
        let nu_r = nu * r * r;
        let cfg = SolverConfig::new(nu_r, d / substeps as f64, d)?
            .with_save_every(substeps)
            .with_advection_scale(r);
        let traj = simulate(v0, &cfg)?;
        if let Termination::BlowUp { time, grid_max } = traj.termination {
            return Err(Error::Unstable(format!(
                "scaled run with step {d} blew up at t={time} (grid max {grid_max:.3e})"
            )));
        }
        let end = traj.snapshots.last().expect("simulate keeps the final state");
        let start = &traj.snapshots[0];
        let heat = start.map_modes(|idx| (-nu_r * start.wavenumber_sq(idx) * d).exp());
        increments.push(h2_proxy(&end.sub(&heat)?)?);
        scales.push(r);
    }
    let pts: Vec<(f64, f64)> = ladder
        .iter()
        .zip(&increments)
        .filter(|(_, &i)| i > 0.0)
        .map(|(d, i)| (d.ln(), i.ln()))
        .collect();
    let slope = (pts.len() == ladder.len()).then(|| {
        let m = pts.len() as f64;
        let mx = pts.iter().map(|q| q.0).sum::<f64>() / m;
        let my = pts.iter().map(|q| q.1).sum::<f64>() / m;
        pts.iter().map(|q| (q.0 - mx) * (q.1 - my)).sum::<f64>() / pts.iter().map(|q| (q.0 - mx).powi(2)).sum::<f64>()
    });
    let predicted_alpha0 = growth_exponent(p.delta, p.eps0)?;
    let pass = match slope {
        Some(s) => s >= 1.0 + INCREMENT_MARGIN,
        None => increments.iter().all(|&i| i == 0.0),
    };
    Ok(IncrementReport {
        steps: ladder.to_vec(),
        scales,
        increments,
        slope,
        predicted_alpha0,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::taylor_green;
    use crate::spectral::{PhysicalField, TorusGrid};
    use std::f64::consts::PI;

    fn params(t0: f64, horizon: f64) -> RescaleParams {
        RescaleParams::new(0.01, t0, horizon).unwrap()
    }

    #[test]
    fn time_map_examples() {
        let p = params(0.3, 1.0);
        assert_eq!(s_of_t(0.3, &p).unwrap(), 0.0);
        assert!((s_of_t(0.8, &p).unwrap() - 1.0 / 3f64.sqrt()).abs() <= 1e-14);
        assert!(s_of_t(1.3, &p).is_err());
        assert!(s_of_t(0.2, &p).is_err());
        for i in 0..=100 {
            let t = 0.3 + 0.005 * i as f64;
            let back = t_of_s(s_of_t(t, &p).unwrap(), &p).unwrap();
            assert!((back - t).abs() <= 1e-14, "{t} {back}");
        }
    }

    #[test]
    fn coefficient_bounds_hold_on_dense_sweeps() {
        for horizon in [0.5, 1.0, 2.0] {
            let p = params(0.0, horizon);
            for i in 0..1000 {
                let s = max_s() * i as f64 / 999.0;
                let a = mu_of_s(s, &p).unwrap();
                assert!(a.lower_ok && a.upper_ok, "{a:?}");
            }
        }
        let p = params(0.0, 1.0);
        let a = mu_of_s(0.0, &p).unwrap();
        assert_eq!(a.mu, 1.0);
        assert_eq!(a.mu_tau_k[1], 1.0);
        assert!((a.lower_bound - 3.0 * 3f64.sqrt() / 16.0).abs() < 1e-15);
        assert!((a.lower_bound - 0.3248).abs() < 1e-4);
    }

    #[test]
    fn scale_policy_examples() {
        assert_eq!(r_policy(1.0, 1.0, DEFAULT_SCALE_CONSTANT).unwrap(), 1.0 / 256.0);
        let base = r_policy(2.0, 1.0, 32.0).unwrap();
        assert!((r_policy(2.0, 3.0, 32.0).unwrap() - base / 2.0).abs() < 1e-18);
        assert!(r_policy(3.0, 1.0, 32.0).unwrap() < base);
    }

    #[test]
    fn growth_exponent_examples() {
        assert_eq!(growth_exponent(0.5, 0.0).unwrap(), 1.5);
        assert!((growth_exponent(0.9, 0.1).unwrap() - 1.72).abs() < 1e-14);
        for i in 1..100 {
            let delta = i as f64 / 100.0;
            assert!((growth_exponent(delta, 0.0).unwrap() - (1.0 + delta)).abs() < 1e-15);
            for j in 0..=40 {
                assert!(growth_exponent(delta, j as f64 / 100.0).unwrap() > 1.0);
            }
        }
    }

    #[test]
    fn reconstruction_is_exact() {
        let p = params(0.2, 1.0);
        let v = |t: f64, x: f64| (2.0 * PI * x).sin() * (-t).exp() + t * x * x;
        for i in 0..=20 {
            let t = 0.2 + 0.025 * i as f64;
            let s = s_of_t(t, &p).unwrap();
            for x in [-0.3, 0.1, 0.45] {
                let u = comparison_value(v(t, x), t);
                let back = reconstruct(u, s, &p).unwrap();
                assert!((back - v(t, x)).abs() <= 1e-12 * v(t, x).abs().max(1.0));
            }
        }
    }

    fn tg_plus_harmonic(grid: &TorusGrid) -> SpectralField {
        let k = 2.0 * PI;
        PhysicalField::from_fn(grid, 2, |x, out| {
            out[0] = (k * x[0]).cos() * (k * x[1]).sin() + 0.5 * (2.0 * k * x[1]).sin();
            out[1] = -(k * x[0]).sin() * (k * x[1]).cos();
        })
        .to_modes()
        .unwrap()
    }

    #[test]
    fn increments_grow_superlinearly() {
        let grid = TorusGrid::new(2, 32).unwrap();
        let p = params(0.0, 1.0);
        let zero = SpectralField::zeros(&grid, 2);
        let z = increment_bound_check(&zero, 0.05, &[0.02, 0.01, 0.005], 20, &p).unwrap();
        assert!(z.increments.iter().all(|&i| i == 0.0) && z.pass);

        let report = increment_bound_check(&tg_plus_harmonic(&grid), 0.05, &[0.02, 0.01, 0.005], 20, &p).unwrap();
        let slope = report.slope.unwrap();
        assert!(slope >= 1.2, "{report:?}");
        assert!(report.pass);
        assert!((report.predicted_alpha0 - 1.4).abs() < 1e-12);

        // Pure Taylor-Green is an exact heat solution, so its increment is roundoff.
        let tg = increment_bound_check(&taylor_green(&grid, 1.0).unwrap(), 0.05, &[0.02, 0.01], 20, &p).unwrap();
        assert!(tg.increments.iter().all(|&i| i < 1e-9), "{:?}", tg.increments);
    }
}
