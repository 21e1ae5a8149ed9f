//! Fourier representation of real vector fields on the unit torus `[-0.5, 0.5)^n`.
//!
//! Grid point `j` along an axis sits at `x_j = -0.5 + j / N`. Mode coefficients
//! are defined relative to the origin, `v_alpha = N^-n sum_x f(x) exp(-2 pi i alpha.x)`,
//! so `sin(2 pi x_1)` has coefficients `-i/2` at `alpha = e_1` and `+i/2` at `-e_1`.
//! All `2 pi` factors live in the mode formulas.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Clone)]
struct FftPair {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Uniform tensor grid on the n-torus (n = 2 or 3) with `N` points per axis.
#[derive(Clone)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
    fft: FftPair,
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid")
            .field("dim", &self.dim)
            .field("n", &self.n)
            .finish()
    }
}

impl PartialEq for TorusGrid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.n == other.n
    }
}

impl Eq for TorusGrid {}

impl TorusGrid {
    /// `dim` must be 2 or 3 and `n` even and at least 8.
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::invalid(format!("dimension must be 2 or 3, got {dim}")));
        }
        if n < 8 || !n.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "modes per dimension must be even and >= 8, got {n}"
            )));
        }
        let mut planner = FftPlanner::new();
        let fft = FftPair {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        };
        Ok(Self { dim, n, fft })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points (and modes) per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of grid points, `N^n`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Volume weight of one grid cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn coord(&self, j: usize) -> f64 {
        -0.5 + j as f64 / self.n as f64
    }

    /// Signed wavenumber stored at FFT slot `j`; slot `N/2` holds `+N/2`.
    pub fn wavenumber(&self, j: usize) -> i64 {
        let n = self.n as i64;
        let j = j as i64;
        if j <= n / 2 {
            j
        } else {
            j - n
        }
    }

    pub fn multi_index(&self, mut idx: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        for k in (0..self.dim).rev() {
            out[k] = idx % self.n;
            idx /= self.n;
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi[..self.dim]
            .iter()
            .fold(0usize, |acc, &j| acc * self.n + j)
    }

    /// Coordinates of grid point `idx` in `[-0.5, 0.5)^n` (unused axes are 0).
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let m = self.multi_index(idx);
        let mut x = [0.0; 3];
        for k in 0..self.dim {
            x[k] = self.coord(m[k]);
        }
        x
    }

    /// Wavevector stored at flat slot `idx`.
    pub fn mode(&self, idx: usize) -> [i64; 3] {
        let m = self.multi_index(idx);
        let mut a = [0i64; 3];
        for k in 0..self.dim {
            a[k] = self.wavenumber(m[k]);
        }
        a
    }

    /// Flat slot of wavevector `alpha`, if representable (`|alpha_k| <= N/2`).
    pub fn mode_index(&self, alpha: &[i64]) -> Option<usize> {
        let n = self.n as i64;
        let mut idx = 0usize;
        for &a in &alpha[..self.dim] {
            if a.abs() > n / 2 {
                return None;
            }
            idx = idx * self.n + a.rem_euclid(n) as usize;
        }
        Some(idx)
    }

    /// True when any component of the stored wavevector is the Nyquist index.
    pub fn is_nyquist(&self, idx: usize) -> bool {
        let half = (self.n / 2) as i64;
        self.mode(idx)[..self.dim].contains(&half)
    }

    /// Flat slot of `-alpha` for the wavevector stored at `idx`.
    pub fn conjugate_index(&self, idx: usize) -> usize {
        let m = self.multi_index(idx);
        let mut out = 0usize;
        for &j in &m[..self.dim] {
            out = out * self.n + (self.n - j) % self.n;
        }
        out
    }

    fn phase_sign(&self, idx: usize) -> f64 {
        let a = self.mode(idx);
        let s: i64 = a[..self.dim].iter().sum();
        if s.rem_euclid(2) == 0 {
            1.0
        } else {
            -1.0
        }
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let plan = if inverse {
            &self.fft.inverse
        } else {
            &self.fft.forward
        };
        let mut line = vec![ZERO; n];
        let mut scratch = vec![ZERO; plan.get_inplace_scratch_len()];
        for axis in 0..self.dim {
            let stride = n.pow((self.dim - 1 - axis) as u32);
            let outer = self.len() / (n * stride);
            for o in 0..outer {
                for s in 0..stride {
                    let base = o * n * stride + s;
                    for (j, slot) in line.iter_mut().enumerate() {
                        *slot = buf[base + j * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (j, value) in line.iter().enumerate() {
                        buf[base + j * stride] = *value;
                    }
                }
            }
        }
    }
}

/// Real-valued vector field sampled on a [`TorusGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalField {
    grid: TorusGrid,
    values: Vec<Vec<f64>>,
}

impl PhysicalField {
    pub fn new(grid: TorusGrid, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("field needs at least one component"));
        }
        for (i, comp) in values.iter().enumerate() {
            if comp.len() != grid.len() {
                return Err(Error::GridMismatch(format!(
                    "component {i} has {} values, grid has {}",
                    comp.len(),
                    grid.len()
                )));
            }
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: &TorusGrid, components: usize) -> Self {
        Self {
            values: vec![vec![0.0; grid.len()]; components],
            grid: grid.clone(),
        }
    }

    /// Samples `f(x, out)` at every grid point.
    pub fn from_fn<F>(grid: &TorusGrid, components: usize, f: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]),
    {
        let mut values = vec![vec![0.0; grid.len()]; components];
        let mut out = vec![0.0; components];
        for idx in 0..grid.len() {
            let x = grid.point(idx);
            f(&x[..grid.dim()], &mut out);
            for (c, v) in out.iter().enumerate() {
                values[c][idx] = *v;
            }
        }
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.values.len()
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Vec<f64>> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Quadrature L2 norm over the unit torus.
    pub fn l2_norm(&self) -> f64 {
        let sum: f64 = self
            .values
            .iter()
            .flat_map(|c| c.iter())
            .map(|v| v * v)
            .sum();
        (sum * self.grid.cell_volume()).sqrt()
    }

    /// Analyses the field into Fourier modes. Rejects non-finite samples.
    pub fn to_modes(&self) -> Result<SpectralField> {
        for (component, comp) in self.values.iter().enumerate() {
            if let Some(index) = comp.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { component, index });
            }
        }
        let scale = 1.0 / self.grid.len() as f64;
        let data = self
            .values
            .iter()
            .map(|comp| {
                let mut buf: Vec<Complex64> =
                    comp.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                self.grid.transform(&mut buf, false);
                for (idx, c) in buf.iter_mut().enumerate() {
                    *c *= scale * self.grid.phase_sign(idx);
                }
                buf
            })
            .collect();
        let mut field = SpectralField {
            grid: self.grid.clone(),
            data,
        };
        field.symmetrize();
        Ok(field)
    }
}

/// Truncated Fourier representation of an n-component real field.
///
/// Coefficients are stored for every FFT slot; conjugate symmetry
/// `v_{-alpha} = conj(v_alpha)` is restored on every constructor.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: TorusGrid,
    data: Vec<Vec<Complex64>>,
}

impl SpectralField {
    pub fn zeros(grid: &TorusGrid, components: usize) -> Self {
        Self {
            grid: grid.clone(),
            data: vec![vec![ZERO; grid.len()]; components],
        }
    }

    /// Builds a field from raw slot-ordered coefficients and symmetrizes it.
    pub fn from_coefficients(grid: &TorusGrid, data: Vec<Vec<Complex64>>) -> Result<Self> {
        for (i, comp) in data.iter().enumerate() {
            if comp.len() != grid.len() {
                return Err(Error::GridMismatch(format!(
                    "component {i} has {} modes, grid has {}",
                    comp.len(),
                    grid.len()
                )));
            }
        }
        let mut field = Self {
            grid: grid.clone(),
            data,
        };
        field.symmetrize();
        Ok(field)
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.data.len()
    }

    pub fn coefficients(&self, i: usize) -> &[Complex64] {
        &self.data[i]
    }

    pub fn mode(&self, i: usize, alpha: &[i64]) -> Option<Complex64> {
        self.grid.mode_index(alpha).map(|idx| self.data[i][idx])
    }

    /// Sets `v_{i,alpha} = value` and `v_{i,-alpha} = conj(value)`.
    pub fn set_mode(&mut self, i: usize, alpha: &[i64], value: Complex64) -> Result<()> {
        let idx = self
            .grid
            .mode_index(alpha)
            .ok_or_else(|| Error::OutOfRange(format!("mode {alpha:?} not representable")))?;
        let conj = self.grid.conjugate_index(idx);
        if conj == idx {
            self.data[i][idx] = Complex64::new(value.re, 0.0);
        } else {
            self.data[i][idx] = value;
            self.data[i][conj] = value.conj();
        }
        Ok(())
    }

    /// Projects the coefficients onto the conjugate-symmetric subspace.
    pub fn symmetrize(&mut self) {
        let grid = self.grid.clone();
        for comp in &mut self.data {
            for idx in 0..grid.len() {
                let conj = grid.conjugate_index(idx);
                if conj < idx {
                    continue;
                }
                if conj == idx {
                    comp[idx].im = 0.0;
                } else {
                    let avg = (comp[idx] + comp[conj].conj()) * 0.5;
                    comp[idx] = avg;
                    comp[conj] = avg.conj();
                }
            }
        }
    }

    /// Largest deviation from conjugate symmetry, for audits.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for comp in &self.data {
            for idx in 0..self.grid.len() {
                let conj = self.grid.conjugate_index(idx);
                worst = worst.max((comp[idx] - comp[conj].conj()).norm());
            }
        }
        worst
    }

    /// Synthesizes grid values.
    pub fn to_grid(&self) -> PhysicalField {
        let values = self
            .data
            .iter()
            .map(|comp| {
                let mut buf: Vec<Complex64> = comp
                    .iter()
                    .enumerate()
                    .map(|(idx, c)| c * self.grid.phase_sign(idx))
                    .collect();
                self.grid.transform(&mut buf, true);
                buf.into_iter().map(|c| c.re).collect()
            })
            .collect();
        PhysicalField {
            grid: self.grid.clone(),
            values,
        }
    }

    /// Scalar field `d v_i / d x_k`: mode `alpha` becomes `2 pi i alpha_k v_{i,alpha}`.
    ///
    /// The Nyquist slot carries no real-valued derivative and is set to zero.
    pub fn derivative(&self, component: usize, direction: usize) -> Result<SpectralField> {
        if component >= self.components() || direction >= self.grid.dim() {
            return Err(Error::OutOfRange(format!(
                "derivative of component {component} along axis {direction}"
            )));
        }
        let half = (self.grid.n() / 2) as i64;
        let out = self.data[component]
            .iter()
            .enumerate()
            .map(|(idx, c)| {
                let a = self.grid.mode(idx)[direction];
                if a == half {
                    ZERO
                } else {
                    c * Complex64::new(0.0, 2.0 * PI * a as f64)
                }
            })
            .collect();
        Ok(SpectralField {
            grid: self.grid.clone(),
            data: vec![out],
        })
    }

    /// `sqrt(sum_i sum_alpha |v_{i,alpha}|^2 <alpha>^{2s})`, `<alpha> = (1+|alpha|^2)^{1/2}`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        let weights: Vec<f64> = (0..self.grid.len())
            .map(|idx| {
                let a = self.grid.mode(idx);
                let a2: i64 = a.iter().map(|k| k * k).sum();
                (1.0 + a2 as f64).powf(s)
            })
            .collect();
        self.data
            .iter()
            .map(|comp| {
                comp.iter()
                    .zip(&weights)
                    .map(|(c, w)| c.norm_sqr() * w)
                    .sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }

    /// `||v||_2^2` over the unit torus (Parseval).
    pub fn l2_norm_sq(&self) -> f64 {
        self.data
            .iter()
            .flat_map(|c| c.iter())
            .map(|c| c.norm_sqr())
            .sum()
    }

    /// `||grad v||_2^2 = sum |2 pi alpha|^2 |v_alpha|^2`, Nyquist excluded.
    pub fn gradient_norm_sq(&self) -> f64 {
        let mut total = 0.0;
        for idx in 0..self.grid.len() {
            if self.grid.is_nyquist(idx) {
                continue;
            }
            let k2 = self.wavenumber_sq(idx);
            for comp in &self.data {
                total += k2 * comp[idx].norm_sqr();
            }
        }
        total
    }

    /// `|2 pi alpha|^2` for slot `idx`.
    pub fn wavenumber_sq(&self, idx: usize) -> f64 {
        let a = self.grid.mode(idx);
        let a2: i64 = a.iter().map(|k| k * k).sum();
        4.0 * PI * PI * a2 as f64
    }

    /// Scalar field `sum_k 2 pi i alpha_k v_{k,alpha}`.
    pub fn divergence(&self) -> Result<SpectralField> {
        if self.components() != self.grid.dim() {
            return Err(Error::invalid(format!(
                "divergence needs {} components, field has {}",
                self.grid.dim(),
                self.components()
            )));
        }
        let mut out = vec![ZERO; self.grid.len()];
        for k in 0..self.grid.dim() {
            let d = self.derivative(k, k)?;
            for (o, v) in out.iter_mut().zip(&d.data[0]) {
                *o += v;
            }
        }
        Ok(SpectralField {
            grid: self.grid.clone(),
            data: vec![out],
        })
    }

    /// Spectral Laplacian of every component.
    pub fn laplacian(&self) -> SpectralField {
        let mut out = self.clone();
        for comp in &mut out.data {
            for (idx, c) in comp.iter_mut().enumerate() {
                *c *= -self.wavenumber_sq(idx);
            }
        }
        out
    }

    /// Gradient of a scalar field (Nyquist slots zeroed).
    pub fn gradient(&self) -> Result<SpectralField> {
        if self.components() != 1 {
            return Err(Error::invalid("gradient needs a scalar field"));
        }
        let data = (0..self.grid.dim())
            .map(|k| self.derivative(0, k).map(|d| d.data.into_iter().next().unwrap()))
            .collect::<Result<Vec<_>>>()?;
        Ok(SpectralField {
            grid: self.grid.clone(),
            data,
        })
    }

    /// Two-thirds rule: zero every slot with `3 |alpha_k| >= N` for some `k`.
    pub fn dealias(&self) -> SpectralField {
        let mut out = self.clone();
        let n = self.grid.n() as i64;
        for idx in 0..self.grid.len() {
            let a = self.grid.mode(idx);
            if a[..self.grid.dim()].iter().any(|k| 3 * k.abs() >= n) {
                for comp in &mut out.data {
                    comp[idx] = ZERO;
                }
            }
        }
        out
    }

    /// True when every slot the two-thirds rule would zero is already zero.
    pub fn is_dealiased(&self) -> bool {
        self.dealias() == *self
    }

    /// Re-expresses the field on a grid with `new_n` points per axis.
    ///
    /// Modes with `|alpha_k| < min(N, new_n) / 2` are carried over; Nyquist
    /// slots of either grid are dropped.
    pub fn resample(&self, new_n: usize) -> Result<SpectralField> {
        let grid = TorusGrid::new(self.grid.dim(), new_n)?;
        let limit = (self.grid.n().min(new_n) / 2) as i64;
        let mut out = SpectralField::zeros(&grid, self.components());
        for idx in 0..self.grid.len() {
            let a = self.grid.mode(idx);
            if a[..self.grid.dim()].iter().any(|k| k.abs() >= limit) {
                continue;
            }
            let target = grid.mode_index(&a).expect("mode fits by construction");
            for (c, comp) in self.data.iter().enumerate() {
                out.data[c][target] = comp[idx];
            }
        }
        Ok(out)
    }

    pub fn component_field(&self, i: usize) -> SpectralField {
        SpectralField {
            grid: self.grid.clone(),
            data: vec![self.data[i].clone()],
        }
    }

    /// Stacks scalar fields into a vector field.
    pub fn stack(parts: &[SpectralField]) -> Result<SpectralField> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("cannot stack zero fields"))?;
        let mut data = Vec::new();
        for p in parts {
            if p.grid != first.grid {
                return Err(Error::GridMismatch("stacked fields differ in grid".into()));
            }
            data.extend(p.data.iter().cloned());
        }
        Ok(SpectralField {
            grid: first.grid.clone(),
            data,
        })
    }

    pub fn scaled(&self, factor: f64) -> SpectralField {
        let mut out = self.clone();
        for comp in &mut out.data {
            for c in comp.iter_mut() {
                *c *= factor;
            }
        }
        out
    }

    /// `self + factor * other`.
    pub fn axpy(&self, factor: f64, other: &SpectralField) -> Result<SpectralField> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y * factor;
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField> {
        self.axpy(-1.0, other)
    }

    /// Multiplies slot `idx` of every component by `f(idx)`.
    pub fn map_modes<F: Fn(usize) -> f64>(&self, f: F) -> SpectralField {
        let mut out = self.clone();
        let weights: Vec<f64> = (0..self.grid.len()).map(f).collect();
        for comp in &mut out.data {
            for (c, w) in comp.iter_mut().zip(&weights) {
                *c *= *w;
            }
        }
        out
    }

    /// Largest coefficient modulus over all components and modes.
    pub fn max_mode_abs(&self) -> f64 {
        self.data
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |m, c| m.max(c.norm()))
    }

    /// Hermitian inner product `sum_i sum_alpha conj(a) b`, real part.
    pub fn inner(&self, other: &SpectralField) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .flat_map(|(a, b)| a.iter().zip(b.iter()))
            .map(|(x, y)| (x.conj() * y).re)
            .sum())
    }

    fn check_compatible(&self, other: &SpectralField) -> Result<()> {
        if self.grid != other.grid || self.components() != other.components() {
            return Err(Error::GridMismatch(format!(
                "fields differ: {:?}x{} vs {:?}x{}",
                self.grid,
                self.components(),
                other.grid,
                other.components()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: &TorusGrid, comps: usize, seed: u64) -> PhysicalField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..comps)
            .map(|_| (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        PhysicalField::new(grid.clone(), values).unwrap()
    }

    #[test]
    fn grid_rejects_bad_shapes() {
        assert!(TorusGrid::new(1, 16).is_err());
        assert!(TorusGrid::new(4, 16).is_err());
        assert!(TorusGrid::new(2, 6).is_err());
        assert!(TorusGrid::new(2, 9).is_err());
        assert_eq!(TorusGrid::new(3, 8).unwrap().len(), 512);
    }

    #[test]
    fn constant_field_has_only_mean_mode() {
        let grid = TorusGrid::new(2, 8).unwrap();
        let f = PhysicalField::from_fn(&grid, 1, |_, out| out[0] = 1.0);
        let m = f.to_modes().unwrap();
        for idx in 0..grid.len() {
            let expect = if idx == 0 { 1.0 } else { 0.0 };
            assert!((m.coefficients(0)[idx] - Complex64::new(expect, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn sine_has_analytic_coefficients() {
        for dim in [2, 3] {
            let grid = TorusGrid::new(dim, 8).unwrap();
            let f = PhysicalField::from_fn(&grid, 1, |x, out| out[0] = (2.0 * PI * x[0]).sin());
            let m = f.to_modes().unwrap();
            let mut plus = [0i64; 3];
            plus[0] = 1;
            let mut minus = [0i64; 3];
            minus[0] = -1;
            assert!((m.mode(0, &plus).unwrap() - Complex64::new(0.0, -0.5)).norm() < 1e-15);
            assert!((m.mode(0, &minus).unwrap() - Complex64::new(0.0, 0.5)).norm() < 1e-15);
            let rest: f64 = (0..grid.len())
                .filter(|&i| i != grid.mode_index(&plus).unwrap())
                .filter(|&i| i != grid.mode_index(&minus).unwrap())
                .map(|i| m.coefficients(0)[i].norm())
                .sum();
            assert!(rest < 1e-14, "leakage {rest}");
        }
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let grid = TorusGrid::new(2, 8).unwrap();
        let mut values = vec![vec![0.0; grid.len()]];
        values[0][5] = f64::NAN;
        let f = PhysicalField::new(grid, values).unwrap();
        assert!(matches!(
            f.to_modes(),
            Err(Error::NonFinite {
                component: 0,
                index: 5
            })
        ));
    }

    #[test]
    fn random_field_round_trip_and_symmetry() {
        let grid = TorusGrid::new(3, 8).unwrap();
        let f = random_field(&grid, 3, 7);
        let m = f.to_modes().unwrap();
        assert_eq!(m.symmetry_defect(), 0.0);
        let back = m.to_grid();
        for (a, b) in f.values().iter().zip(back.values()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-12 * f.max_abs());
            }
        }
        for c in 0..3 {
            assert_eq!(m.coefficients(c)[0].im, 0.0);
        }
    }

    #[test]
    fn derivative_of_sine_is_cosine() {
        let grid = TorusGrid::new(2, 16).unwrap();
        let f = PhysicalField::from_fn(&grid, 1, |x, out| out[0] = (2.0 * PI * x[0]).sin());
        let d = f.to_modes().unwrap().derivative(0, 0).unwrap().to_grid();
        for idx in 0..grid.len() {
            let x = grid.point(idx);
            let expect = 2.0 * PI * (2.0 * PI * x[0]).cos();
            assert!((d.component(0)[idx] - expect).abs() < 1e-12);
        }
        let dy = f.to_modes().unwrap().derivative(0, 1).unwrap();
        assert!(dy.max_mode_abs() < 1e-15);
        assert!(f.to_modes().unwrap().derivative(0, 2).is_err());
    }

    #[test]
    fn constant_has_zero_derivative() {
        let grid = TorusGrid::new(3, 8).unwrap();
        let f = PhysicalField::from_fn(&grid, 1, |_, out| out[0] = 3.5);
        let m = f.to_modes().unwrap();
        for k in 0..3 {
            assert_eq!(m.derivative(0, k).unwrap().max_mode_abs(), 0.0);
        }
    }

    #[test]
    fn sobolev_norm_examples() {
        let grid = TorusGrid::new(3, 8).unwrap();
        let zero = SpectralField::zeros(&grid, 3);
        assert_eq!(zero.sobolev_norm(2.5), 0.0);
        let mut single = SpectralField::zeros(&grid, 1);
        // Only the +alpha slot so the sum is exactly <alpha>^2 = 2.
        let idx = grid.mode_index(&[1, 0, 0]).unwrap();
        let mut data = vec![vec![ZERO; grid.len()]];
        data[0][idx] = Complex64::new(1.0, 0.0);
        single.data = data;
        assert!((single.sobolev_norm(1.0) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn parseval_matches_grid_quadrature() {
        let grid = TorusGrid::new(2, 32).unwrap();
        let f = random_field(&grid, 2, 11);
        let m = f.to_modes().unwrap();
        assert!((m.sobolev_norm(0.0) - f.l2_norm()).abs() < 1e-10);
    }

    #[test]
    fn divergence_examples() {
        let grid = TorusGrid::new(2, 16).unwrap();
        // Curl of a stream function is divergence-free.
        let psi = PhysicalField::from_fn(&grid, 1, |x, out| {
            out[0] = (2.0 * PI * x[0]).sin() * (4.0 * PI * x[1]).cos() + (2.0 * PI * x[1]).cos()
        })
        .to_modes()
        .unwrap();
        let u = psi.derivative(0, 1).unwrap();
        let v = psi.derivative(0, 0).unwrap().scaled(-1.0);
        let vel = SpectralField::stack(&[u, v]).unwrap();
        assert!(vel.divergence().unwrap().max_mode_abs() < 1e-12);

        let s = PhysicalField::from_fn(&grid, 2, |x, out| {
            out[0] = (2.0 * PI * x[0]).sin();
            out[1] = 0.0;
        });
        let div = s.to_modes().unwrap().divergence().unwrap().to_grid();
        for idx in 0..grid.len() {
            let x = grid.point(idx);
            assert!((div.component(0)[idx] - 2.0 * PI * (2.0 * PI * x[0]).cos()).abs() < 1e-12);
        }
        let zero = SpectralField::zeros(&grid, 2);
        assert_eq!(zero.divergence().unwrap().max_mode_abs(), 0.0);
        assert!(SpectralField::zeros(&grid, 3).divergence().is_err());
    }

    #[test]
    fn dealias_examples() {
        let grid = TorusGrid::new(2, 8).unwrap();
        let mut f = SpectralField::zeros(&grid, 1);
        f.set_mode(0, &[3, 0], Complex64::new(1.0, 0.5)).unwrap();
        f.set_mode(0, &[1, 2], Complex64::new(0.25, 0.0)).unwrap();
        let d = f.dealias();
        assert_eq!(d.mode(0, &[3, 0]).unwrap(), ZERO);
        assert_eq!(d.mode(0, &[-3, 0]).unwrap(), ZERO);
        assert_eq!(d.mode(0, &[1, 2]).unwrap(), Complex64::new(0.25, 0.0));

        let mut low = SpectralField::zeros(&grid, 2);
        low.set_mode(1, &[2, -1], Complex64::new(0.1, 0.2)).unwrap();
        assert_eq!(low.dealias(), low);
        let zero = SpectralField::zeros(&grid, 2);
        assert_eq!(zero.dealias(), zero);
    }

    #[test]
    fn resample_preserves_band_limited_content() {
        let grid = TorusGrid::new(2, 16).unwrap();
        let f = random_field(&grid, 1, 3).to_modes().unwrap().dealias();
        let up = f.resample(32).unwrap();
        let down = up.resample(16).unwrap();
        assert!(down.sub(&f).unwrap().max_mode_abs() < 1e-15);
        assert!((up.l2_norm_sq() - f.l2_norm_sq()).abs() < 1e-15);
    }
}
