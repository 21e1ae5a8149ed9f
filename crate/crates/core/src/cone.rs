//! Cone-to-cylinder change of variables around a candidate singular point.
//!
//! With `tau = t/(t_s - t)` and `z = (x - x_s)/(t_s - t)`, a backward cone with
//! apex `(t_s, x_s)` becomes a cylinder `[t_in, inf) x Omega` over the ball of
//! radius `r_0 = t_s - t_1`. The comparison field is `w(tau, z) = v(t, x)`, and
//! it satisfies
//!
//! ```text
//! w_tau + mu1 sum_j (w_j + z_j) w_{i,j} = mu2 nu Delta w_i - mu1 d_i p^w,
//! Delta p^w = -sum_{i,j} w_{i,j} w_{j,i},
//! ```
//!
//! with `mu1 = 1/(1+tau)`, `mu2 = 1/t_s` and `p^w(tau, z) = p(t, x)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::flows::TaylorGreen2d;
use crate::leray::poisson_pressure;
use crate::spectral::{PhysicalField, TorusGrid};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeSpec {
    t_s: f64,
    x_s: Vec<f64>,
    t_1: f64,
}

impl ConeSpec {
    pub fn new(t_s: f64, x_s: Vec<f64>, t_1: f64) -> Result<Self> {
        Self::with_rho(t_s, x_s, t_1, 1.0)
    }

    /// Only `rho = 1` is supported.
    pub fn with_rho(t_s: f64, x_s: Vec<f64>, t_1: f64, rho: f64) -> Result<Self> {
        if rho != 1.0 {
            return Err(Error::invalid(format!("cone exponent rho={rho} is not supported")));
        }
        if !(t_1 > 0.0 && t_1 < t_s && t_s.is_finite()) {
            return Err(Error::invalid(format!(
                "need 0 < t_1 < t_s, got t_1={t_1}, t_s={t_s}"
            )));
        }
        if !(2..=3).contains(&x_s.len()) || x_s.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("singular point needs 2 or 3 finite coordinates"));
        }
        Ok(Self { t_s, x_s, t_1 })
    }

    pub fn t_s(&self) -> f64 {
        self.t_s
    }

    pub fn x_s(&self) -> &[f64] {
        &self.x_s
    }

    pub fn t_1(&self) -> f64 {
        self.t_1
    }

    pub fn rho(&self) -> f64 {
        1.0
    }

    pub fn dim(&self) -> usize {
        self.x_s.len()
    }

    pub fn cylinder(&self) -> CylinderSpec {
        CylinderSpec {
            t_in: self.t_1 / (self.t_s - self.t_1),
            r_0: self.t_s - self.t_1,
        }
    }

    /// Physical point for cylinder coordinate `z` at time `t`.
    pub fn x_of_z(&self, t: f64, z: &[f64], out: &mut [f64]) {
        let scale = self.t_s - t;
        for ((o, xs), zj) in out.iter_mut().zip(&self.x_s).zip(z) {
            *o = xs + scale * zj;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CylinderSpec {
    pub t_in: f64,
    pub r_0: f64,
}

/// `tau = t/(t_s - t)`; rejects `t >= t_s` and negative `t`.
pub fn tau_of_t(t: f64, cone: &ConeSpec) -> Result<f64> {
    if !(t >= 0.0) || t >= cone.t_s {
        return Err(Error::OutOfRange(format!(
            "t={t} outside [0, t_s={})",
            cone.t_s
        )));
    }
    Ok(t / (cone.t_s - t))
}

/// `t = t_s tau/(1 + tau)`.
pub fn t_of_tau(tau: f64, cone: &ConeSpec) -> Result<f64> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::OutOfRange(format!("tau={tau} must be finite and >= 0")));
    }
    Ok(cone.t_s * tau / (1.0 + tau))
}

/// `t_s - t(tau) = t_s/(1 + tau)`, evaluated without cancellation.
pub fn time_to_singularity(tau: f64, cone: &ConeSpec) -> f64 {
    cone.t_s / (1.0 + tau)
}

/// `d tau / d t = t_s/(t_s - t)^2`.
pub fn dtau_dt(t: f64, cone: &ConeSpec) -> Result<f64> {
    if t >= cone.t_s {
        return Err(Error::OutOfRange(format!("t={t} at or beyond t_s")));
    }
    let gap = cone.t_s - t;
    Ok(cone.t_s / (gap * gap))
}

/// `(mu1, mu2) = ((t_s - t)/t_s, 1/t_s) = (1/(1+tau), 1/t_s)`.
pub fn mu_coeffs(tau: f64, cone: &ConeSpec) -> (f64, f64) {
    (1.0 / (1.0 + tau), 1.0 / cone.t_s)
}

/// `(t_s - t)^{-|alpha|} = ((1+tau)/t_s)^{|alpha|}`.
pub fn derivative_rescale(order: &[u32], tau: f64, cone: &ConeSpec) -> f64 {
    let k: u32 = order.iter().sum();
    ((1.0 + tau) / cone.t_s).powi(k as i32)
}

/// Velocity and pressure of a flow on the unit torus.
pub trait FlowSource: Sync {
    fn dim(&self) -> usize;
    /// Closed interval of times at which the source can be evaluated.
    fn time_range(&self) -> (f64, f64);
    fn velocity(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()>;
    fn pressure(&self, t: f64, x: &[f64]) -> Result<f64>;
}

impl FlowSource for TaylorGreen2d {
    fn dim(&self) -> usize {
        2
    }

    fn time_range(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    fn velocity(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        TaylorGreen2d::velocity(self, t, x, out);
        Ok(())
    }

    fn pressure(&self, t: f64, x: &[f64]) -> Result<f64> {
        Ok(TaylorGreen2d::pressure(self, t, x))
    }
}

/// Periodic multilinear interpolation of gridded values.
fn interpolate(grid: &TorusGrid, values: &[f64], x: &[f64]) -> f64 {
    let n = grid.n();
    let dim = grid.dim();
    let mut base = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for d in 0..dim {
        let u = (x[d] + 0.5) * n as f64;
        let f = u.floor();
        base[d] = (f as i64).rem_euclid(n as i64) as usize;
        frac[d] = u - f;
    }
    let mut acc = 0.0;
    for corner in 0..(1usize << dim) {
        let mut w = 1.0;
        let mut multi = [0usize; 3];
        for d in 0..dim {
            let bit = (corner >> d) & 1;
            multi[d] = (base[d] + bit) % n;
            w *= if bit == 1 { frac[d] } else { 1.0 - frac[d] };
        }
        if w != 0.0 {
            acc += w * values[grid.flat_index(&multi[..dim])];
        }
    }
    acc
}

/// Saved velocity and pressure of a run, interpolated linearly in time.
pub struct TrajectorySource {
    times: Vec<f64>,
    velocity: Vec<PhysicalField>,
    pressure: Vec<PhysicalField>,
}

impl TrajectorySource {
    pub fn new(traj: &Trajectory) -> Result<Self> {
        if traj.is_empty() {
            return Err(Error::invalid("empty trajectory"));
        }
        let velocity = traj.snapshots.par_iter().map(|s| s.to_grid()).collect();
        let pressure = traj
            .snapshots
            .par_iter()
            .map(|s| poisson_pressure(s).map(|p| p.to_grid()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            times: traj.times.clone(),
            velocity,
            pressure,
        })
    }

    fn bracket(&self, t: f64) -> Result<(usize, usize, f64)> {
        let (lo, hi) = self.time_range();
        if t < lo || t > hi {
            return Err(Error::OutOfRange(format!(
                "t={t} outside trajectory range [{lo}, {hi}]"
            )));
        }
        if self.times.len() == 1 {
            return Ok((0, 0, 0.0));
        }
        let k = self.times.partition_point(|&s| s <= t).clamp(1, self.times.len() - 1);
        let (a, b) = (self.times[k - 1], self.times[k]);
        Ok((k - 1, k, (t - a) / (b - a)))
    }
}

impl FlowSource for TrajectorySource {
    fn dim(&self) -> usize {
        self.velocity[0].grid().dim()
    }

    fn time_range(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().expect("non-empty"))
    }

    fn velocity(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let (a, b, s) = self.bracket(t)?;
        let (fa, fb) = (&self.velocity[a], &self.velocity[b]);
        for (i, o) in out.iter_mut().enumerate().take(fa.components()) {
            let va = interpolate(fa.grid(), fa.component(i), x);
            let vb = interpolate(fb.grid(), fb.component(i), x);
            *o = (1.0 - s) * va + s * vb;
        }
        Ok(())
    }

    fn pressure(&self, t: f64, x: &[f64]) -> Result<f64> {
        let (a, b, s) = self.bracket(t)?;
        let (pa, pb) = (&self.pressure[a], &self.pressure[b]);
        Ok((1.0 - s) * interpolate(pa.grid(), pa.component(0), x)
            + s * interpolate(pb.grid(), pb.component(0), x))
    }
}

/// Cartesian box of cylinder coordinates `z` with the ball `|z| <= r_0` masked in.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderGrid {
    dim: usize,
    half: usize,
    spacing: f64,
    r_0: f64,
}

impl CylinderGrid {
    /// Nodes `z = k h`, `|k_d| <= half`, with two layers of nodes beyond the ball.
    pub fn new(dim: usize, r_0: f64, spacing: f64) -> Result<Self> {
        if !(2..=3).contains(&dim) || !(r_0 > 0.0) || !(spacing > 0.0) {
            return Err(Error::invalid(format!(
                "cylinder grid needs dim 2 or 3 and positive sizes, got {dim}, {r_0}, {spacing}"
            )));
        }
        let half = (r_0 / spacing).ceil() as usize + 2;
        Ok(Self {
            dim,
            half,
            spacing,
            r_0,
        })
    }

    /// Spacing chosen so that nodes land on torus grid points at time `t`.
    pub fn aligned(cone: &ConeSpec, torus: &TorusGrid, t: f64) -> Result<Self> {
        Self::new(cone.dim(), cone.cylinder().r_0, torus.spacing() / (cone.t_s - t))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn r_0(&self) -> f64 {
        self.r_0
    }

    pub fn side(&self) -> usize {
        2 * self.half + 1
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn multi(&self, mut idx: usize) -> [usize; 3] {
        let side = self.side();
        let mut m = [0usize; 3];
        for d in (0..self.dim).rev() {
            m[d] = idx % side;
            idx /= side;
        }
        m
    }

    fn flat(&self, m: &[usize; 3]) -> usize {
        let side = self.side();
        (0..self.dim).fold(0, |acc, d| acc * side + m[d])
    }

    pub fn point(&self, idx: usize) -> [f64; 3] {
        let m = self.multi(idx);
        let mut z = [0.0; 3];
        for d in 0..self.dim {
            z[d] = (m[d] as f64 - self.half as f64) * self.spacing;
        }
        z
    }

    /// True for nodes inside the closed ball `|z| <= r_0`.
    pub fn in_ball(&self, idx: usize) -> bool {
        let z = self.point(idx);
        let r2: f64 = z[..self.dim].iter().map(|c| c * c).sum();
        r2 <= self.r_0 * self.r_0 * (1.0 + 1e-12)
    }

    fn neighbor(&self, idx: usize, axis: usize, step: isize) -> Option<usize> {
        let mut m = self.multi(idx);
        let k = m[axis] as isize + step;
        if k < 0 || k >= self.side() as isize {
            return None;
        }
        m[axis] = k as usize;
        Some(self.flat(&m))
    }

    /// Second-order first derivative, one-sided at the box edge.
    pub fn d1(&self, f: &[f64], idx: usize, axis: usize) -> f64 {
        let h = self.spacing;
        match (self.neighbor(idx, axis, -1), self.neighbor(idx, axis, 1)) {
            (Some(a), Some(b)) => (f[b] - f[a]) / (2.0 * h),
            (None, Some(b)) => {
                let c = self.neighbor(idx, axis, 2).expect("box has at least 3 nodes");
                (-3.0 * f[idx] + 4.0 * f[b] - f[c]) / (2.0 * h)
            }
            (Some(a), None) => {
                let c = self.neighbor(idx, axis, -2).expect("box has at least 3 nodes");
                (3.0 * f[idx] - 4.0 * f[a] + f[c]) / (2.0 * h)
            }
            (None, None) => 0.0,
        }
    }

    /// Second-order second derivative, one-sided at the box edge.
    pub fn d2(&self, f: &[f64], idx: usize, axis: usize) -> f64 {
        let h2 = self.spacing * self.spacing;
        match (self.neighbor(idx, axis, -1), self.neighbor(idx, axis, 1)) {
            (Some(a), Some(b)) => (f[a] - 2.0 * f[idx] + f[b]) / h2,
            (None, _) | (_, None) => {
                let dir = if self.neighbor(idx, axis, 1).is_some() { 1 } else { -1 };
                let p: Vec<f64> = (1..=3)
                    .map(|k| f[self.neighbor(idx, axis, dir * k).expect("box has 4 nodes")])
                    .collect();
                (2.0 * f[idx] - 5.0 * p[0] + 4.0 * p[1] - p[2]) / h2
            }
        }
    }
}

/// Samples of `w` (and of the outer pressure) on a cylinder grid at one `tau`.
#[derive(Debug, Clone)]
pub struct ComparisonField {
    pub tau: f64,
    pub grid: CylinderGrid,
    /// `values[i][node]` is `w_i`.
    pub values: Vec<Vec<f64>>,
    /// `p(t, x(z))` on every node, used as Dirichlet data outside the ball.
    pub pressure: Vec<f64>,
}

/// `w_i(tau, z) = v_i(t(tau), x_s + (t_s - t) z)` on every node of `grid`.
pub fn sample_w(
    source: &dyn FlowSource,
    cone: &ConeSpec,
    tau: f64,
    grid: &CylinderGrid,
) -> Result<ComparisonField> {
    if source.dim() != cone.dim() || grid.dim() != cone.dim() {
        return Err(Error::GridMismatch(format!(
            "source dim {}, cone dim {}, grid dim {}",
            source.dim(),
            cone.dim(),
            grid.dim()
        )));
    }
    let t = t_of_tau(tau, cone)?;
    let (lo, hi) = source.time_range();
    if t < lo || t > hi {
        return Err(Error::OutOfRange(format!(
            "tau={tau} maps to t={t}, outside [{lo}, {hi}]"
        )));
    }
    let dim = cone.dim();
    let samples: Vec<(Vec<f64>, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let z = grid.point(idx);
            let mut x = [0.0; 3];
            cone.x_of_z(t, &z[..dim], &mut x[..dim]);
            let mut v = vec![0.0; dim];
            source.velocity(t, &x[..dim], &mut v)?;
            let p = source.pressure(t, &x[..dim])?;
            Ok((v, p))
        })
        .collect::<Result<_>>()?;
    let mut values = vec![vec![0.0; grid.len()]; dim];
    let mut pressure = vec![0.0; grid.len()];
    for (idx, (v, p)) in samples.into_iter().enumerate() {
        for i in 0..dim {
            values[i][idx] = v[i];
        }
        pressure[idx] = p;
    }
    Ok(ComparisonField {
        tau,
        grid: grid.clone(),
        values,
        pressure,
    })
}

/// Largest finite-difference divergence `|sum_i w_{i,i}|` over ball nodes.
pub fn divergence_max(w: &ComparisonField) -> f64 {
    let g = &w.grid;
    (0..g.len())
        .filter(|&idx| g.in_ball(idx))
        .map(|idx| {
            (0..g.dim())
                .map(|i| g.d1(&w.values[i], idx, i))
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max)
}

/// Conjugate-gradient solve of `-Delta_h p = b` on ball nodes, with the
/// prescribed values of `p` kept fixed on every other node.
fn solve_ball_poisson(grid: &CylinderGrid, b: &[f64], p: &mut [f64]) -> Result<()> {
    let dim = grid.dim();
    let h2 = grid.spacing() * grid.spacing();
    let inside: Vec<usize> = (0..grid.len()).filter(|&i| grid.in_ball(i)).collect();
    let mut slot = vec![usize::MAX; grid.len()];
    for (k, &idx) in inside.iter().enumerate() {
        slot[idx] = k;
    }
    for &idx in &inside {
        p[idx] = 0.0;
    }
    // Neighbours are interior to the box because of the two padding layers.
    let apply = |x: &[f64], out: &mut [f64]| {
        for (k, &idx) in inside.iter().enumerate() {
            let mut acc = 2.0 * dim as f64 * x[k];
            for axis in 0..dim {
                for step in [-1isize, 1] {
                    let nb = grid.neighbor(idx, axis, step).expect("padded box");
                    if slot[nb] != usize::MAX {
                        acc -= x[slot[nb]];
                    }
                }
            }
            out[k] = acc / h2;
        }
    };
    let mut rhs: Vec<f64> = inside.iter().map(|&idx| b[idx]).collect();
    for (k, &idx) in inside.iter().enumerate() {
        for axis in 0..dim {
            for step in [-1isize, 1] {
                let nb = grid.neighbor(idx, axis, step).expect("padded box");
                if slot[nb] == usize::MAX {
                    rhs[k] += p[nb] / h2;
                }
            }
        }
    }
    let m = inside.len();
    let mut x = vec![0.0; m];
    let mut r = rhs.clone();
    let mut d = r.clone();
    let mut ad = vec![0.0; m];
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let norm_b = dot(&rhs, &rhs).sqrt().max(f64::MIN_POSITIVE);
    let mut rr = dot(&r, &r);
    let mut converged = rr.sqrt() <= 1e-13 * norm_b;
    for _ in 0..(10 * m + 100) {
        if converged {
            break;
        }
        apply(&d, &mut ad);
        let alpha = rr / dot(&d, &ad);
        for k in 0..m {
            x[k] += alpha * d[k];
            r[k] -= alpha * ad[k];
        }
        let rr_new = dot(&r, &r);
        converged = rr_new.sqrt() <= 1e-13 * norm_b;
        let beta = rr_new / rr;
        rr = rr_new;
        for k in 0..m {
            d[k] = r[k] + beta * d[k];
        }
    }
    if !converged {
        return Err(Error::Unstable("ball Poisson solve did not converge".into()));
    }
    for (k, &idx) in inside.iter().enumerate() {
        p[idx] = x[k];
    }
    Ok(())
}

/// `mu2 nu Delta w_i - mu1 sum_j (w_j + z_j) w_{i,j} - mu1 d_i p^w` on ball nodes
/// (zero elsewhere), with `p^w` from the ball Poisson problem whose boundary
/// data is the sampled outer pressure.
pub fn transformed_rhs(w: &ComparisonField, cone: &ConeSpec, nu: f64) -> Result<Vec<Vec<f64>>> {
    let g = &w.grid;
    let dim = g.dim();
    let (mu1, mu2) = mu_coeffs(w.tau, cone);
    let mut source = vec![0.0; g.len()];
    for (idx, s) in source.iter_mut().enumerate() {
        if !g.in_ball(idx) {
            continue;
        }
        let mut q = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                q += g.d1(&w.values[i], idx, j) * g.d1(&w.values[j], idx, i);
            }
        }
        *s = q;
    }
    let mut p = w.pressure.clone();
    solve_ball_poisson(g, &source, &mut p)?;
    let mut out = vec![vec![0.0; g.len()]; dim];
    for idx in 0..g.len() {
        if !g.in_ball(idx) {
            continue;
        }
        let z = g.point(idx);
        for i in 0..dim {
            let lap: f64 = (0..dim).map(|j| g.d2(&w.values[i], idx, j)).sum();
            let drift: f64 = (0..dim)
                .map(|j| (w.values[j][idx] + z[j]) * g.d1(&w.values[i], idx, j))
                .sum();
            out[i][idx] = mu2 * nu * lap - mu1 * drift - mu1 * g.d1(&p, idx, i);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResidualReport {
    pub tau: f64,
    pub spacing: f64,
    /// Discrete `L^2(Omega)` norm of `w_tau - rhs`.
    pub l2: f64,
    pub max: f64,
}

/// Residual of the transformed equation for `w` sampled from `source`, with
/// `w_tau` from a centred difference of step `dtau`.
pub fn transformed_residual(
    source: &dyn FlowSource,
    cone: &ConeSpec,
    nu: f64,
    tau: f64,
    grid: &CylinderGrid,
    dtau: f64,
) -> Result<ResidualReport> {
    let w = sample_w(source, cone, tau, grid)?;
    let ahead = sample_w(source, cone, tau + dtau, grid)?;
    let behind = sample_w(source, cone, tau - dtau, grid)?;
    let rhs = transformed_rhs(&w, cone, nu)?;
    let cell = grid.spacing().powi(grid.dim() as i32);
    let mut sum = 0.0;
    let mut max = 0.0f64;
    for idx in (0..grid.len()).filter(|&i| grid.in_ball(i)) {
        for i in 0..grid.dim() {
            let dt = (ahead.values[i][idx] - behind.values[i][idx]) / (2.0 * dtau);
            let r = dt - rhs[i][idx];
            sum += r * r * cell;
            max = max.max(r.abs());
        }
    }
    Ok(ResidualReport {
        tau,
        spacing: grid.spacing(),
        l2: sum.sqrt(),
        max,
    })
}
