//! Reference velocity fields: Taylor-Green vortices and random solenoidal data.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::leray::leray_project;
use crate::spectral::{PhysicalField, SpectralField, TorusGrid};

/// Taylor-Green cell `A (cos 2 pi x sin 2 pi y, -sin 2 pi x cos 2 pi y)` in 2-D.
///
/// In 3-D this returns the classical `(sin x cos y cos z, -cos x sin y cos z, 0)`
/// pattern (with `2 pi` wavenumbers), which is divergence-free but not steady.
pub fn taylor_green(grid: &TorusGrid, amplitude: f64) -> Result<SpectralField> {
    let k = 2.0 * PI;
    let field = match grid.dim() {
        2 => PhysicalField::from_fn(grid, 2, |x, out| {
            out[0] = amplitude * (k * x[0]).cos() * (k * x[1]).sin();
            out[1] = -amplitude * (k * x[0]).sin() * (k * x[1]).cos();
        }),
        _ => PhysicalField::from_fn(grid, 3, |x, out| {
            out[0] = amplitude * (k * x[0]).sin() * (k * x[1]).cos() * (k * x[2]).cos();
            out[1] = -amplitude * (k * x[0]).cos() * (k * x[1]).sin() * (k * x[2]).cos();
            out[2] = 0.0;
        }),
    };
    field.to_modes()
}

/// Exact 2-D Taylor-Green solution of the Navier-Stokes equations.
#[derive(Debug, Clone, Copy)]
pub struct TaylorGreen2d {
    pub amplitude: f64,
    pub nu: f64,
}

impl TaylorGreen2d {
    /// Velocity decay rate `nu |k|^2 = 8 pi^2 nu`.
    pub fn decay_rate(&self) -> f64 {
        8.0 * PI * PI * self.nu
    }

    pub fn velocity(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let k = 2.0 * PI;
        let a = self.amplitude * (-self.decay_rate() * t).exp();
        out[0] = a * (k * x[0]).cos() * (k * x[1]).sin();
        out[1] = -a * (k * x[0]).sin() * (k * x[1]).cos();
    }

    /// `p = -(A(t)^2 / 4)(cos 4 pi x + cos 4 pi y)`.
    pub fn pressure(&self, t: f64, x: &[f64]) -> f64 {
        let a = self.amplitude * (-self.decay_rate() * t).exp();
        -0.25 * a * a * ((4.0 * PI * x[0]).cos() + (4.0 * PI * x[1]).cos())
    }

    /// `||v(t)||_2^2` on the unit torus.
    pub fn energy_l2_sq(&self, t: f64) -> f64 {
        let a = self.amplitude * (-self.decay_rate() * t).exp();
        0.5 * a * a
    }
}

/// Spectral envelope for random solenoidal fields.
#[derive(Debug, Clone, Copy)]
pub struct SpectrumShape {
    /// Largest `|alpha_k|` that receives energy.
    pub band: i64,
    /// Coefficient moduli scale as `<alpha>^-decay`.
    pub decay: f64,
}

impl SpectrumShape {
    pub fn band(band: i64) -> Self {
        Self { band, decay: 0.0 }
    }

    pub fn with_decay(band: i64, decay: f64) -> Self {
        Self { band, decay }
    }
}

/// Random divergence-free field normalized to `||v||_2 = l2_norm`.
///
/// Phases and moduli are drawn from a seeded ChaCha stream, so equal seeds
/// give bit-identical fields.
pub fn random_solenoidal(
    grid: &TorusGrid,
    shape: SpectrumShape,
    l2_norm: f64,
    seed: u64,
) -> Result<SpectralField> {
    if shape.band < 1 || shape.band >= (grid.n() / 2) as i64 {
        return Err(Error::invalid(format!(
            "band {} must lie in [1, N/2)",
            shape.band
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = grid.dim();
    let mut data = vec![vec![Complex64::new(0.0, 0.0); grid.len()]; dim];
    for idx in 0..grid.len() {
        let a = grid.mode(idx);
        if a[..dim].iter().any(|k| k.abs() > shape.band) || a.iter().all(|&k| k == 0) {
            continue;
        }
        let a2: i64 = a.iter().map(|k| k * k).sum();
        let envelope = (1.0 + a2 as f64).powf(-shape.decay / 2.0);
        for comp in data.iter_mut() {
            let modulus: f64 = rng.gen_range(0.5..1.0) * envelope;
            let phase: f64 = rng.gen_range(0.0..2.0 * PI);
            comp[idx] = Complex64::from_polar(modulus, phase);
        }
    }
    let raw = SpectralField::from_coefficients(grid, data)?;
    let projected = leray_project(&raw)?;
    let norm = projected.l2_norm_sq().sqrt();
    if norm == 0.0 {
        return Err(Error::Degenerate("random field projected to zero".into()));
    }
    Ok(projected.scaled(l2_norm / norm))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taylor_green_is_solenoidal() {
        for dim in [2, 3] {
            let grid = TorusGrid::new(dim, 16).unwrap();
            let v = taylor_green(&grid, 1.0).unwrap();
            assert!(v.divergence().unwrap().max_mode_abs() < 1e-14);
        }
    }

    #[test]
    fn taylor_green_energy_matches_formula() {
        let grid = TorusGrid::new(2, 16).unwrap();
        let v = taylor_green(&grid, 2.0).unwrap();
        let tg = TaylorGreen2d {
            amplitude: 2.0,
            nu: 0.1,
        };
        assert!((v.l2_norm_sq() - tg.energy_l2_sq(0.0)).abs() < 1e-13);
    }

    #[test]
    fn random_fields_are_reproducible_and_solenoidal() {
        let grid = TorusGrid::new(2, 16).unwrap();
        let a = random_solenoidal(&grid, SpectrumShape::band(4), 0.5, 3).unwrap();
        let b = random_solenoidal(&grid, SpectrumShape::band(4), 0.5, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.divergence().unwrap().max_mode_abs() < 1e-14);
        assert!((a.l2_norm_sq().sqrt() - 0.5).abs() < 1e-14);
        assert!(a.is_dealiased());
    }
}
