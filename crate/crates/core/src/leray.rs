//! Pressure elimination and the Leray projection on the torus.
//!
//! The quadratic source `Q = sum_{j,k} v_{j,k} v_{k,j}` is evaluated on a
//! zero-padded grid of `2N` points per axis, which reproduces the truncated
//! convolution `sum_gamma` exactly for every retained output mode. Nyquist
//! slots of the input are ignored and Nyquist slots of the output are zero.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::SpectralField;

/// Divergence level above which pressure routines log a warning.
pub const DIVERGENCE_WARN_LEVEL: f64 = 1e-8;

fn check_vector(v: &SpectralField) -> Result<()> {
    if v.components() != v.grid().dim() {
        return Err(Error::invalid(format!(
            "expected {} velocity components, got {}",
            v.grid().dim(),
            v.components()
        )));
    }
    Ok(())
}

fn warn_if_divergent(v: &SpectralField) {
    if let Ok(div) = v.divergence() {
        let level = div.max_mode_abs();
        if level > DIVERGENCE_WARN_LEVEL {
            log::warn!("pressure requested for a field with divergence {level:.3e}");
        }
    }
}

/// Modes of `sum_{j,k} v_{j,k} v_{k,j}` on the original grid.
pub fn velocity_gradient_product(v: &SpectralField) -> Result<SpectralField> {
    check_vector(v)?;
    let dim = v.grid().dim();
    let padded_n = 2 * v.grid().n();
    let mut grads = Vec::with_capacity(dim * dim);
    for j in 0..dim {
        for k in 0..dim {
            let d = v.derivative(j, k)?.resample(padded_n)?.to_grid();
            grads.push(d.into_values().pop().expect("scalar field"));
        }
    }
    let len = grads[0].len();
    let mut q = vec![0.0; len];
    for j in 0..dim {
        for k in 0..dim {
            let a = &grads[j * dim + k];
            let b = &grads[k * dim + j];
            for (out, (x, y)) in q.iter_mut().zip(a.iter().zip(b)) {
                *out += x * y;
            }
        }
    }
    let padded_grid = crate::spectral::TorusGrid::new(dim, padded_n)?;
    let q = crate::spectral::PhysicalField::new(padded_grid, vec![q])?.to_modes()?;
    q.resample(v.grid().n())
}

/// Zero-mean solution of `Delta p = -sum_{i,j} v_{i,j} v_{j,i}`.
pub fn poisson_pressure(v: &SpectralField) -> Result<SpectralField> {
    warn_if_divergent(v);
    let q = velocity_gradient_product(v)?;
    Ok(q.map_modes(|idx| {
        let k2 = q.wavenumber_sq(idx);
        if idx == 0 || k2 == 0.0 {
            0.0
        } else {
            1.0 / k2
        }
    }))
}

/// Modes of `d p / d x_i`:
/// `p_{,i alpha} = 2 pi i alpha_i 1_{alpha != 0} Q_alpha / (4 pi^2 |alpha|^2)`.
pub fn pressure_gradient_modes(v: &SpectralField, component: usize) -> Result<SpectralField> {
    if component >= v.grid().dim() {
        return Err(Error::OutOfRange(format!(
            "pressure gradient component {component}"
        )));
    }
    poisson_pressure(v)?.derivative(0, component)
}

/// Orthogonal projection onto divergence-free fields:
/// `f_alpha - alpha (alpha . f_alpha) / |alpha|^2`.
///
/// Nyquist components of `alpha` are treated as zero, matching
/// [`SpectralField::derivative`], so the output divergence vanishes mode-wise.
pub fn leray_project(f: &SpectralField) -> Result<SpectralField> {
    check_vector(f)?;
    let grid = f.grid();
    let dim = grid.dim();
    let half = (grid.n() / 2) as i64;
    let mut data: Vec<Vec<Complex64>> = (0..dim).map(|i| f.coefficients(i).to_vec()).collect();
    for idx in 0..grid.len() {
        let a = grid.mode(idx);
        let mut k = [0.0f64; 3];
        for d in 0..dim {
            if a[d] != half {
                k[d] = 2.0 * PI * a[d] as f64;
            }
        }
        let k2: f64 = k.iter().map(|x| x * x).sum();
        if k2 == 0.0 {
            continue;
        }
        let dot: Complex64 = (0..dim).map(|d| data[d][idx] * k[d]).sum();
        for d in 0..dim {
            data[d][idx] -= dot * (k[d] / k2);
        }
    }
    SpectralField::from_coefficients(grid, data)
}

/// Shell-wise partial sums of `sum_alpha |p_{,i alpha}|^2`, ordered by `|alpha|`.
#[derive(Debug, Clone)]
pub struct PressureTailAudit {
    /// `(shell radius, cumulative sum up to that radius)`.
    pub partial_sums: Vec<(f64, f64)>,
    /// Largest single-shell increment among shells with `|alpha| > cutoff`.
    pub tail_increment: f64,
    /// Total of `sum |p_{,i alpha}|^2` over the grid.
    pub total: f64,
}

/// Square-summability audit for the pressure gradient of `v`.
pub fn pressure_tail_audit(
    v: &SpectralField,
    component: usize,
    cutoff: f64,
) -> Result<PressureTailAudit> {
    let pg = pressure_gradient_modes(v, component)?;
    let grid = pg.grid();
    let mut shells: std::collections::BTreeMap<i64, f64> = std::collections::BTreeMap::new();
    for idx in 0..grid.len() {
        let a = grid.mode(idx);
        let r2: i64 = a.iter().map(|k| k * k).sum();
        *shells.entry(r2).or_insert(0.0) += pg.coefficients(0)[idx].norm_sqr();
    }
    let mut acc = 0.0;
    let mut partial_sums = Vec::with_capacity(shells.len());
    let mut tail_increment = 0.0f64;
    for (r2, contribution) in shells {
        acc += contribution;
        let r = (r2 as f64).sqrt();
        if r > cutoff {
            tail_increment = tail_increment.max(contribution);
        }
        partial_sums.push((r, acc));
    }
    Ok(PressureTailAudit {
        partial_sums,
        tail_increment,
        total: acc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::{random_solenoidal, taylor_green, SpectrumShape};
    use crate::spectral::{PhysicalField, TorusGrid};

    /// Direct double sum over all mode pairs of the truncated lattice.
    fn brute_force_pressure_gradient(v: &SpectralField, i: usize) -> SpectralField {
        let grid = v.grid();
        let dim = grid.dim();
        let half = (grid.n() / 2) as i64;
        let retained: Vec<usize> = (0..grid.len()).filter(|&x| !grid.is_nyquist(x)).collect();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.len()];
        for &target in &retained {
            let alpha = grid.mode(target);
            if alpha[..dim].iter().all(|&a| a == 0) {
                continue;
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for &src in &retained {
                let gamma = grid.mode(src);
                let mut rest = [0i64; 3];
                let mut ok = true;
                for d in 0..dim {
                    rest[d] = alpha[d] - gamma[d];
                    if rest[d].abs() >= half {
                        ok = false;
                    }
                }
                if !ok {
                    continue;
                }
                let other = grid.mode_index(&rest).unwrap();
                for j in 0..dim {
                    for k in 0..dim {
                        // v_{j,k} has modes 2 pi i gamma_k v_{j gamma}; v_{k,j} has 2 pi i (alpha-gamma)_j v_{k, alpha-gamma}.
                        let w = -4.0 * PI * PI * gamma[k] as f64 * rest[j] as f64;
                        acc += v.coefficients(j)[src] * v.coefficients(k)[other] * w;
                    }
                }
            }
            let a2: i64 = alpha.iter().map(|a| a * a).sum();
            let p = acc / (4.0 * PI * PI * a2 as f64);
            coeffs[target] = p * Complex64::new(0.0, 2.0 * PI * alpha[i] as f64);
        }
        SpectralField::from_coefficients(grid, vec![coeffs]).unwrap()
    }

    #[test]
    fn zero_field_has_zero_pressure() {
        let grid = TorusGrid::new(2, 8).unwrap();
        let v = SpectralField::zeros(&grid, 2);
        assert_eq!(pressure_gradient_modes(&v, 0).unwrap().max_mode_abs(), 0.0);
        assert_eq!(poisson_pressure(&v).unwrap().max_mode_abs(), 0.0);
    }

    #[test]
    fn single_mode_pair_matches_double_sum() {
        let grid = TorusGrid::new(2, 16).unwrap();
        let mut v = SpectralField::zeros(&grid, 2);
        v.set_mode(0, &[1, 2], Complex64::new(0.3, -0.2)).unwrap();
        v.set_mode(1, &[1, 2], Complex64::new(-0.15, 0.1)).unwrap();
        v.set_mode(0, &[2, 1], Complex64::new(0.1, 0.4)).unwrap();
        v.set_mode(1, &[2, 1], Complex64::new(-0.2, -0.8)).unwrap();
        for i in 0..2 {
            let fast = pressure_gradient_modes(&v, i).unwrap();
            let slow = brute_force_pressure_gradient(&v, i);
            assert!(fast.sub(&slow).unwrap().max_mode_abs() < 1e-10);
        }
    }

    #[test]
    fn random_field_matches_double_sum() {
        let grid = TorusGrid::new(2, 16).unwrap();
        let v = random_solenoidal(&grid, SpectrumShape::band(7), 1.0, 42).unwrap();
        for i in 0..2 {
            let fast = pressure_gradient_modes(&v, i).unwrap();
            let slow = brute_force_pressure_gradient(&v, i);
            let err = fast.sub(&slow).unwrap().max_mode_abs();
            assert!(err < 1e-10, "component {i}: {err}");
        }
    }

    #[test]
    fn taylor_green_pressure_is_analytic() {
        let amp = 1.7;
        let grid = TorusGrid::new(2, 16).unwrap();
        let v = taylor_green(&grid, amp).unwrap();
        let expect = PhysicalField::from_fn(&grid, 2, |x, out| {
            // p = -(A^2/4)(cos 4 pi x + cos 4 pi y)
            out[0] = amp * amp * PI * (4.0 * PI * x[0]).sin();
            out[1] = amp * amp * PI * (4.0 * PI * x[1]).sin();
        });
        for i in 0..2 {
            let pg = pressure_gradient_modes(&v, i).unwrap().to_grid();
            for (a, b) in pg.component(0).iter().zip(expect.component(i)) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn poisson_and_gradient_paths_agree() {
        let grid = TorusGrid::new(3, 8).unwrap();
        let v = random_solenoidal(&grid, SpectrumShape::band(3), 1.0, 5).unwrap();
        let p = poisson_pressure(&v).unwrap();
        assert_eq!(p.coefficients(0)[0], Complex64::new(0.0, 0.0));
        for i in 0..3 {
            let a = p.derivative(0, i).unwrap();
            let b = pressure_gradient_modes(&v, i).unwrap();
            assert!(a.sub(&b).unwrap().max_mode_abs() < 1e-10);
        }
    }

    #[test]
    fn poisson_residual_against_grid_products() {
        let grid = TorusGrid::new(2, 16).unwrap();
        // Band below N/4 so that grid products are alias-free.
        let v = random_solenoidal(&grid, SpectrumShape::band(3), 1.0, 9).unwrap();
        let lap = poisson_pressure(&v).unwrap().laplacian().to_grid();
        let mut q = vec![0.0; grid.len()];
        let grads: Vec<Vec<Vec<f64>>> = (0..2)
            .map(|j| {
                (0..2)
                    .map(|k| v.derivative(j, k).unwrap().to_grid().into_values().remove(0))
                    .collect()
            })
            .collect();
        for j in 0..2 {
            for k in 0..2 {
                for (o, (a, b)) in q.iter_mut().zip(grads[j][k].iter().zip(&grads[k][j])) {
                    *o += a * b;
                }
            }
        }
        let residual: f64 = lap
            .component(0)
            .iter()
            .zip(&q)
            .map(|(l, q)| (l + q).powi(2))
            .sum::<f64>()
            * grid.cell_volume();
        assert!(residual.sqrt() <= 1e-10, "{}", residual.sqrt());
    }

    #[test]
    fn projection_properties() {
        let grid = TorusGrid::new(3, 8).unwrap();
        let arbitrary = PhysicalField::from_fn(&grid, 3, |x, out| {
            out[0] = (2.0 * PI * x[0]).sin() + (2.0 * PI * x[1]).cos();
            out[1] = (4.0 * PI * x[2]).sin() * (2.0 * PI * x[0]).cos();
            out[2] = x[0] * x[1];
        })
        .to_modes()
        .unwrap();
        let p = leray_project(&arbitrary).unwrap();
        assert!(p.divergence().unwrap().max_mode_abs() <= 1e-12);
        let pp = leray_project(&p).unwrap();
        assert!(pp.sub(&p).unwrap().max_mode_abs() <= 1e-12);

        let solenoidal = random_solenoidal(&grid, SpectrumShape::band(3), 1.0, 1).unwrap();
        let fixed = leray_project(&solenoidal).unwrap();
        assert!(fixed.sub(&solenoidal).unwrap().max_mode_abs() <= 1e-12);

        let phi = PhysicalField::from_fn(&grid, 1, |x, out| {
            out[0] = (2.0 * PI * (x[0] + 2.0 * x[1])).sin() + (6.0 * PI * x[2]).cos()
        })
        .to_modes()
        .unwrap();
        let grad = phi.gradient().unwrap();
        assert!(leray_project(&grad).unwrap().max_mode_abs() <= 1e-12);
    }

    fn power_law_field(n: usize, decay: f64) -> SpectralField {
        use rand::{Rng, SeedableRng};
        let grid = TorusGrid::new(2, n).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut data = vec![vec![Complex64::new(0.0, 0.0); grid.len()]; 2];
        for idx in 0..grid.len() {
            let a = grid.mode(idx);
            let env = (1.0 + (a[0] * a[0] + a[1] * a[1]) as f64).powf(-decay / 2.0);
            for c in data.iter_mut() {
                c[idx] = Complex64::from_polar(env, rng.gen_range(0.0..2.0 * PI));
            }
        }
        leray_project(&SpectralField::from_coefficients(&grid, data).unwrap()).unwrap()
    }

    #[test]
    fn pressure_tail_converges_for_fast_decay() {
        let audit = pressure_tail_audit(&power_law_field(64, 3.0), 0, 32.0).unwrap();
        assert!(audit.tail_increment < 1e-6, "{}", audit.tail_increment);
        let coarse = pressure_tail_audit(&power_law_field(32, 3.0), 0, 16.0).unwrap();
        assert!(audit.tail_increment < coarse.tail_increment);
    }

    #[test]
    fn pressure_tail_grows_for_slow_decay() {
        // <alpha>^-1.05 coefficients give a pressure gradient outside L^2.
        let coarse = pressure_tail_audit(&power_law_field(32, 1.05), 0, 16.0).unwrap();
        let fine = pressure_tail_audit(&power_law_field(64, 1.05), 0, 32.0).unwrap();
        assert!(fine.total > 2.0 * coarse.total);
        assert!(fine.tail_increment > 1e-6);
    }
}
