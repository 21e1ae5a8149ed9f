//! Singularity orders from the left: synthetic singular fields, log-space
//! exponent fits, CKN exponent windows, damped fields, bounded-ray scans and
//! the Sobolev bootstrap ledger.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cone::{t_of_tau, ConeSpec};
use crate::error::{Error, Result};

/// Samples closer than this to the tip in time or space are excluded.
pub const TIP_EXCLUSION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub value: f64,
}

impl ConeSample {
    fn gap(&self, cone: &ConeSpec) -> f64 {
        cone.t_s() - self.t
    }

    fn radius(&self, cone: &ConeSpec) -> f64 {
        self.x
            .iter()
            .zip(cone.x_s())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// `c / ((t_s - t)^mu |x - x_s|^lambda)`.
pub fn singular_value(c: f64, lambda: f64, mu: f64, cone: &ConeSpec, t: f64, x: &[f64]) -> f64 {
    let r: f64 = x.iter().zip(cone.x_s()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    c / ((cone.t_s() - t).powf(mu) * r.powf(lambda))
}

/// Log-spaced sample positions inside the cone `|x - x_s| <= t_s - t`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConeLayout {
    /// Number of time levels, log-spaced in `t_s - t` over `[gap_min, t_s - t_1]`.
    pub time_levels: usize,
    pub gap_min: f64,
    /// Number of radii per level, log-spaced in `|x - x_s|/(t_s - t)` over `[fraction_min, 1]`.
    pub radial_levels: usize,
    pub fraction_min: f64,
}

impl Default for ConeLayout {
    fn default() -> Self {
        Self {
            time_levels: 16,
            gap_min: 1e-2,
            radial_levels: 16,
            fraction_min: 1e-2,
        }
    }
}

fn log_levels(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    (0..n)
        .map(|i| (lo.ln() + (hi / lo).ln() * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Sample points `(t, x)` of the layout; points inside the tip exclusion are dropped.
pub fn cone_points(cone: &ConeSpec, layout: &ConeLayout) -> Result<Vec<(f64, Vec<f64>)>> {
    let gap_max = cone.t_s() - cone.t_1();
    if !(layout.gap_min > 0.0 && layout.gap_min < gap_max) {
        return Err(Error::invalid(format!(
            "gap_min {} must lie in (0, t_s - t_1 = {gap_max})",
            layout.gap_min
        )));
    }
    if !(layout.fraction_min > 0.0 && layout.fraction_min <= 1.0) || layout.time_levels == 0 || layout.radial_levels == 0 {
        return Err(Error::invalid("layout needs positive level counts and fraction_min in (0,1]"));
    }
    let dim = cone.dim();
    let mut points = Vec::new();
    let mut turn = 0usize;
    for gap in log_levels(layout.gap_min, gap_max, layout.time_levels) {
        for frac in log_levels(layout.fraction_min, 1.0, layout.radial_levels) {
            let r = gap * frac;
            if gap < TIP_EXCLUSION * (1.0 - 1e-9) || r < TIP_EXCLUSION * (1.0 - 1e-9) {
                continue;
            }
            // Rotate directions so samples do not share a single ray.
            let angle = 2.399963229728653 * turn as f64;
            turn += 1;
            let dir: Vec<f64> = match dim {
                1 => vec![if turn.is_multiple_of(2) { 1.0 } else { -1.0 }],
                2 => vec![angle.cos(), angle.sin()],
                _ => {
                    let zc = 1.0 - 2.0 * ((turn as f64 * 0.618033988749895) % 1.0);
                    let s = (1.0 - zc * zc).sqrt();
                    vec![s * angle.cos(), s * angle.sin(), zc]
                }
            };
            let x = cone.x_s().iter().zip(&dir).map(|(c, d)| c + r * d).collect();
            points.push((cone.t_s() - gap, x));
        }
    }
    Ok(points)
}

/// Samples `c/((t_s - t)^mu |x - x_s|^lambda)` with multiplicative noise
/// `1 + noise U(-1, 1)` drawn from a seeded stream.
pub fn synthesize_singular_field(
    c: f64,
    lambda: f64,
    mu: f64,
    cone: &ConeSpec,
    layout: &ConeLayout,
    noise: f64,
    seed: u64,
) -> Result<Vec<ConeSample>> {
    if !(lambda >= 0.0 && mu >= 0.0) {
        return Err(Error::invalid(format!("exponents must be non-negative, got lambda={lambda}, mu={mu}")));
    }
    if !(c > 0.0) || !(0.0..1.0).contains(&noise) {
        return Err(Error::invalid("amplitude must be positive and noise in [0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(cone_points(cone, layout)?
        .into_iter()
        .map(|(t, x)| {
            let factor = if noise > 0.0 { 1.0 + noise * rng.gen_range(-1.0..1.0) } else { 1.0 };
            let value = singular_value(c, lambda, mu, cone, t, &x) * factor;
            ConeSample { t, x, value }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingularityFit {
    pub lambda: f64,
    pub mu: f64,
    pub c: f64,
    /// RMS misfit of `log |f|`.
    pub residual: f64,
    pub sample_count: usize,
    /// Set when a regression exponent came out negative and was clamped to 0.
    pub clamped: bool,
}

/// Least squares on `log |f| = log c - mu log(t_s - t) - lambda log |x - x_s|`.
pub fn fit_singularity_orders(samples: &[ConeSample], cone: &ConeSpec) -> Result<SingularityFit> {
    if samples.len() < 30 {
        return Err(Error::Degenerate(format!("{} samples, need at least 30", samples.len())));
    }
    let mut rows = Vec::with_capacity(samples.len());
    for s in samples {
        let (gap, r) = (s.gap(cone), s.radius(cone));
        if gap < TIP_EXCLUSION * (1.0 - 1e-6) || r < TIP_EXCLUSION * (1.0 - 1e-6) {
            return Err(Error::OutOfRange(format!("sample at t={}, |x-x_s|={r} lies inside the tip exclusion", s.t)));
        }
        if !(s.value.is_finite() && s.value != 0.0) {
            return Err(Error::Degenerate(format!("sample value {} has no logarithm", s.value)));
        }
        rows.push((gap.ln(), r.ln(), s.value.abs().ln()));
    }
    let span = |f: fn(&(f64, f64, f64)) -> f64| {
        let (lo, hi) = rows.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        (hi - lo) / std::f64::consts::LN_10
    };
    let (gap_decades, radius_decades) = (span(|r| r.0), span(|r| r.1));
    if gap_decades < 1.0 - 1e-9 || radius_decades < 1.0 - 1e-9 {
        return Err(Error::Degenerate(format!(
            "samples span {gap_decades:.2} decades in t_s - t and {radius_decades:.2} in |x - x_s|, need 1"
        )));
    }
    let m = rows.len() as f64;
    let mean = |f: fn(&(f64, f64, f64)) -> f64| rows.iter().map(f).sum::<f64>() / m;
    let (ma, mb, my) = (mean(|r| r.0), mean(|r| r.1), mean(|r| r.2));
    let (mut saa, mut sab, mut sbb, mut say, mut sby) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(a, b, y) in &rows {
        let (a, b, y) = (a - ma, b - mb, y - my);
        saa += a * a;
        sab += a * b;
        sbb += b * b;
        say += a * y;
        sby += b * y;
    }
    let det = saa * sbb - sab * sab;
    if det <= 1e-10 * saa * sbb {
        return Err(Error::Degenerate("time and radius regressors are collinear".into()));
    }
    let slope_gap = (sbb * say - sab * sby) / det;
    let slope_r = (saa * sby - sab * say) / det;
    let (mu_raw, lambda_raw) = (-slope_gap, -slope_r);
    let log_c = my - slope_gap * ma - slope_r * mb;
    let residual = (rows
        .iter()
        .map(|&(a, b, y)| (y - log_c - slope_gap * a - slope_r * b).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    Ok(SingularityFit {
        lambda: lambda_raw.max(0.0),
        mu: mu_raw.max(0.0),
        c: log_c.exp(),
        residual,
        sample_count: rows.len(),
        clamped: lambda_raw < 0.0 || mu_raw < 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    Velocity,
    Gradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CknVerdict {
    /// `mu < 3/8` and `lambda < 3/4`.
    pub velocity_ok: bool,
    /// `mu < 1/2` and `lambda < 3/2 + eps`.
    pub gradient_ok: bool,
}

impl CknVerdict {
    pub fn passes(&self, kind: GateKind) -> bool {
        match kind {
            GateKind::Velocity => self.velocity_ok,
            GateKind::Gradient => self.gradient_ok,
        }
    }
}

pub const DEFAULT_GRADIENT_EPS: f64 = 0.01;

pub fn ckn_gate(lambda: f64, mu: f64, eps: f64) -> CknVerdict {
    CknVerdict {
        velocity_ok: mu < 3.0 / 8.0 && lambda < 3.0 / 4.0,
        gradient_ok: mu < 0.5 && lambda < 1.5 + eps,
    }
}

pub fn ckn_gate_fit(fit: &SingularityFit, eps: f64) -> CknVerdict {
    ckn_gate(fit.lambda, fit.mu, eps)
}

/// `(t_s - t)^mu |x - x_s|^lambda v` at every sample.
pub fn damped_field(samples: &[ConeSample], lambda: f64, mu: f64, cone: &ConeSpec) -> Vec<f64> {
    samples
        .iter()
        .map(|s| s.gap(cone).powf(mu) * s.radius(cone).powf(lambda) * s.value)
        .collect()
}

/// Largest `|u|` of a damped field; infinite input values propagate.
pub fn damped_max(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[derive(Debug, Clone, Serialize)]
pub struct UniformBoundReport {
    pub taus: Vec<f64>,
    pub running_sup: Vec<f64>,
    pub sup: f64,
    /// Growth of the running sup across the last decade of the ladder.
    pub last_decade_increment: f64,
    /// Log-log slope of `|w|` against `1 + tau` over the last decade.
    pub growth_slope: f64,
    pub bounded: bool,
}

/// Increment below which the running sup counts as converged.
pub const SCAN_INCREMENT_TOL: f64 = 1e-3;
/// Growth slope above which a scan is classified as singular.
pub const SCAN_SLOPE_TOL: f64 = 0.05;

/// Values `|w(tau, z0)|` along a fixed ray of comparison coordinates, i.e.
/// `|v(t(tau), x_s + (t_s - t) z0)|`.
pub fn ray_values(
    v: &dyn Fn(f64, &[f64]) -> f64,
    cone: &ConeSpec,
    taus: &[f64],
    z0: &[f64],
) -> Result<Vec<f64>> {
    taus.iter()
        .map(|&tau| {
            let t = t_of_tau(tau, cone)?;
            let mut x = vec![0.0; cone.dim()];
            cone.x_of_z(t, z0, &mut x);
            Ok(v(t, &x).abs())
        })
        .collect()
}

/// Running sup of `|w|` along an increasing `tau` ladder spanning at least two decades in `1 + tau`.
pub fn uniform_bound_scan(taus: &[f64], values: &[f64]) -> Result<UniformBoundReport> {
    if taus.len() != values.len() || taus.len() < 3 {
        return Err(Error::invalid("ladder and values must match and hold at least 3 points"));
    }
    if taus.windows(2).any(|w| !(w[1] > w[0])) || taus[0] < 0.0 {
        return Err(Error::invalid("tau ladder must be non-negative and strictly increasing"));
    }
    let last = *taus.last().unwrap();
    if (1.0 + last) / (1.0 + taus[0]) < 100.0 * (1.0 - 1e-12) {
        return Err(Error::invalid("tau ladder must cover two decades in 1 + tau"));
    }
    let mut running = Vec::with_capacity(values.len());
    let mut sup = 0.0f64;
    for v in values {
        sup = sup.max(v.abs());
        running.push(sup);
    }
    let cut = (1.0 + last) / 10.0 - 1.0;
    let start = taus.iter().position(|&t| t >= cut).unwrap_or(0);
    let base = if start == 0 { running[0] } else { running[start - 1] };
    let last_decade_increment = sup - base;
    let pts: Vec<(f64, f64)> = taus[start..]
        .iter()
        .zip(&values[start..])
        .filter(|(_, v)| v.abs() > 0.0)
        .map(|(t, v)| ((1.0 + t).ln(), v.abs().ln()))
        .collect();
    let growth_slope = if pts.len() >= 2 { slope(&pts) } else { 0.0 };
    let bounded = sup.is_finite() && growth_slope <= SCAN_SLOPE_TOL && last_decade_increment < SCAN_INCREMENT_TOL;
    Ok(UniformBoundReport {
        taus: taus.to_vec(),
        running_sup: running,
        sup,
        last_decade_increment,
        growth_slope,
        bounded,
    })
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 { 0.0 } else { sxy / sxx }
}

/// `H^{r,q} subset H^{s,p}` criterion `1/q - 1/p = (r - s)/n`, to 1e-12.
pub fn embedding_gain(r: f64, q: f64, s: f64, p: f64, n: usize) -> Result<bool> {
    if !(q >= 1.0 && p >= 1.0) {
        return Err(Error::invalid(format!("integrability exponents must be >= 1, got q={q}, p={p}")));
    }
    Ok((1.0 / q - 1.0 / p - (r - s) / n as f64).abs() <= 1e-12)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SobolevSpace {
    pub s: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LedgerStep {
    Start,
    /// Same-scaling move into the `L^2` scale.
    Embedding,
    /// One smoothing pass of the representation, gaining at most one derivative.
    DerivativeGain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LedgerEntry {
    pub space: SobolevSpace,
    pub step: LedgerStep,
}

/// Regularity ladder for the velocity gradient: the start space, its `L^2`
/// embedding image, then `H^{k - eps}` for `k = 1..=steps`.
pub fn bootstrap_ledger(start: SobolevSpace, steps: usize, n: usize, eps: f64) -> Result<Vec<LedgerEntry>> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::invalid(format!("eps={eps} must lie in (0, 0.5)")));
    }
    let mut out = vec![LedgerEntry { space: start, step: LedgerStep::Start }];
    if steps == 0 {
        return Ok(out);
    }
    let s_emb = start.s - n as f64 * (1.0 / start.p - 0.5);
    out.push(LedgerEntry {
        space: SobolevSpace { s: s_emb, p: 2.0 },
        step: LedgerStep::Embedding,
    });
    for k in 1..=steps {
        out.push(LedgerEntry {
            space: SobolevSpace { s: k as f64 - eps, p: 2.0 },
            step: LedgerStep::DerivativeGain,
        });
    }
    Ok(out)
}

/// Checks that each ledger move is an embedding identity or an `L^2` gain of at most one derivative.
pub fn ledger_is_consistent(ledger: &[LedgerEntry], n: usize) -> bool {
    ledger.windows(2).all(|w| {
        let (a, b) = (w[0].space, w[1].space);
        match w[1].step {
            LedgerStep::Start => false,
            LedgerStep::Embedding => embedding_gain(a.s, a.p, b.s, b.p, n).unwrap_or(false),
            LedgerStep::DerivativeGain => b.p == 2.0 && a.p == 2.0 && b.s > a.s && b.s - a.s <= 1.0 + 1e-12,
        }
    })
}

/// Absolute error allowed when the true exponent is 0, where a relative tolerance is void.
pub const RECOVERY_ZERO_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Serialize)]
pub struct RecoveryCase {
    pub lambda: f64,
    pub mu: f64,
    pub noise: f64,
    pub fit: SingularityFit,
    pub recovered: bool,
    /// Velocity and gradient gates on the fit agree with the gates on the true exponents.
    pub gates_agree: bool,
    /// The bounded-ray scan flags the field as unbounded.
    pub scan_flags_singular: bool,
}

fn within(fitted: f64, truth: f64, tol: f64) -> bool {
    if truth == 0.0 {
        fitted.abs() <= RECOVERY_ZERO_FLOOR
    } else {
        (fitted - truth).abs() <= tol * truth
    }
}

/// Synthesizes, fits, gates and scans every `(lambda, mu)` pair.
#[allow(clippy::too_many_arguments)]
pub fn recovery_grid(
    lambdas: &[f64],
    mus: &[f64],
    c: f64,
    cone: &ConeSpec,
    layout: &ConeLayout,
    noise: f64,
    tol: f64,
    seed: u64,
) -> Result<Vec<RecoveryCase>> {
    let taus: Vec<f64> = log_levels(1.0, 1e5, 101).into_iter().map(|t| t - 1.0).collect();
    let mut ray = vec![0.0; cone.dim()];
    ray[0] = 0.6;
    let mut cases = Vec::new();
    for (i, &lambda) in lambdas.iter().enumerate() {
        for (j, &mu) in mus.iter().enumerate() {
            let case_seed = seed.wrapping_add((i * mus.len() + j) as u64);
            let samples = synthesize_singular_field(c, lambda, mu, cone, layout, noise, case_seed)?;
            let fit = fit_singularity_orders(&samples, cone)?;
            let recovered = within(fit.lambda, lambda, tol) && within(fit.mu, mu, tol);
            let gates_agree = ckn_gate_fit(&fit, DEFAULT_GRADIENT_EPS) == ckn_gate(lambda, mu, DEFAULT_GRADIENT_EPS);
            let v = |t: f64, x: &[f64]| singular_value(c, lambda, mu, cone, t, x);
            let scan = uniform_bound_scan(&taus, &ray_values(&v, cone, &taus, &ray)?)?;
            cases.push(RecoveryCase {
                lambda,
                mu,
                noise,
                fit,
                recovered,
                gates_agree,
                scan_flags_singular: !scan.bounded,
            });
        }
    }
    Ok(cases)
}
