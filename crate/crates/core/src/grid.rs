//! Periodic box discretization of ℝ^N, spectral transforms and quadrature.
//!
//! The box is `[-L, L)^N` sampled with `n_axis` points per axis. Data is stored
//! row-major with axis 0 slowest. Forward transforms are unnormalized, inverse
//! transforms carry the `1/n_axis^N` factor, so `inverse(forward(f)) == f`.
//!
//! Integrals are Riemann sums with cell volume `dx^N`; for smooth periodic data
//! they are spectrally accurate. If a state carries non-negligible mass (say
//! more than `1e-8` of the total) near the box boundary, enlarge `L`: the
//! periodic images then start to interact. [`Field::boundary_mass_fraction`]
//! measures exactly that.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Default cap on the number of grid points (per component).
pub const DEFAULT_MAX_POINTS: usize = 1 << 24;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub n_axis: usize,
    /// Box half-width `L`; the domain is `[-L, L)^N`.
    pub half_width: f64,
    #[serde(default = "default_max_points")]
    pub max_points: usize,
}

fn default_max_points() -> usize {
    DEFAULT_MAX_POINTS
}

impl GridSpec {
    pub fn new(dim: usize, n_axis: usize, half_width: f64) -> Self {
        GridSpec {
            dim,
            n_axis,
            half_width,
            max_points: DEFAULT_MAX_POINTS,
        }
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.n_axis as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1, 2 or 3 (got {})",
                self.dim
            )));
        }
        if !self.n_axis.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of 2 (got {})",
                self.n_axis
            )));
        }
        if self.n_axis < 8 {
            return Err(Error::InvalidGrid(format!(
                "need at least 8 points per axis (got {})",
                self.n_axis
            )));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "half-width must be positive (got {})",
                self.half_width
            )));
        }
        let total = (self.n_axis as u128).pow(self.dim as u32);
        if total > self.max_points as u128 {
            return Err(Error::InvalidGrid(format!(
                "{total} points exceed the memory budget of {} points",
                self.max_points
            )));
        }
        Ok(())
    }
}

/// Immutable grid: coordinates, wavenumbers and transform plans.
pub struct Grid {
    spec: GridSpec,
    dx: f64,
    len: usize,
    coords: Vec<f64>,
    wavenumbers: Vec<f64>,
    k_squared: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("spec", &self.spec)
            .field("dx", &self.dx)
            .finish()
    }
}

/// Builds a grid, validating the spec.
pub fn make_grid(spec: GridSpec) -> Result<Arc<Grid>> {
    Grid::new(spec).map(Arc::new)
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.n_axis;
        let dx = spec.dx();
        let coords = (0..n).map(|i| -spec.half_width + i as f64 * dx).collect();
        let dk = std::f64::consts::PI / spec.half_width;
        let wavenumbers: Vec<f64> = (0..n)
            .map(|j| {
                let j = j as i64;
                let signed = if j < (n / 2) as i64 { j } else { j - n as i64 };
                signed as f64 * dk
            })
            .collect();
        let len = n.pow(spec.dim as u32);
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let mut grid = Grid {
            spec,
            dx,
            len,
            coords,
            wavenumbers,
            k_squared: Vec::new(),
            forward,
            inverse,
        };
        grid.k_squared = (0..len)
            .map(|idx| (0..grid.dim()).map(|a| grid.wavenumber(idx, a).powi(2)).sum())
            .collect();
        Ok(grid)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn n_axis(&self) -> usize {
        self.spec.n_axis
    }

    pub fn half_width(&self) -> f64 {
        self.spec.half_width
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Quadrature weight `dx^N`.
    pub fn cell_volume(&self) -> f64 {
        self.dx.powi(self.dim() as i32)
    }

    /// Total number of points `n_axis^N`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Axis coordinates `-L + i dx`.
    pub fn axis_coords(&self) -> &[f64] {
        &self.coords
    }

    /// Axis wavenumbers in transform order, integer multiples of `π/L`.
    pub fn axis_wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// `|k|²` at each point of frequency space.
    pub fn k_squared(&self) -> &[f64] {
        &self.k_squared
    }

    /// Largest `|k|²` on the grid.
    pub fn k_squared_max(&self) -> f64 {
        let kn = std::f64::consts::PI / self.dx;
        kn * kn * self.dim() as f64
    }

    fn stride(&self, axis: usize) -> usize {
        self.spec.n_axis.pow((self.dim() - 1 - axis) as u32)
    }

    pub fn axis_index(&self, flat: usize, axis: usize) -> usize {
        (flat / self.stride(axis)) % self.spec.n_axis
    }

    pub fn coordinate(&self, flat: usize, axis: usize) -> f64 {
        self.coords[self.axis_index(flat, axis)]
    }

    /// Physical position of a grid point (unused axes are zero).
    pub fn position(&self, flat: usize) -> [f64; 3] {
        let mut x = [0.0; 3];
        for (a, xa) in x.iter_mut().enumerate().take(self.dim()) {
            *xa = self.coordinate(flat, a);
        }
        x
    }

    pub fn wavenumber(&self, flat: usize, axis: usize) -> f64 {
        self.wavenumbers[self.axis_index(flat, axis)]
    }

    fn transform_axes(&self, data: &mut [C64], plan: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.len, "buffer length does not match grid");
        let n = self.spec.n_axis;
        let mut scratch = vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        for axis in 0..self.dim() {
            let stride = self.stride(axis);
            if stride == 1 {
                plan.process_with_scratch(data, &mut scratch);
                continue;
            }
            let block = n * stride;
            let mut lines = vec![C64::new(0.0, 0.0); block];
            for chunk in data.chunks_mut(block) {
                for o in 0..stride {
                    for k in 0..n {
                        lines[o * n + k] = chunk[o + k * stride];
                    }
                }
                plan.process_with_scratch(&mut lines, &mut scratch);
                for o in 0..stride {
                    for k in 0..n {
                        chunk[o + k * stride] = lines[o * n + k];
                    }
                }
            }
        }
    }

    /// In-place unnormalized forward transform over all axes.
    pub fn forward(&self, data: &mut [C64]) {
        self.transform_axes(data, &self.forward);
    }

    /// In-place inverse transform over all axes, normalized.
    pub fn inverse(&self, data: &mut [C64]) {
        self.transform_axes(data, &self.inverse);
        let scale = 1.0 / self.len as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }

    /// Applies a Fourier multiplier `symbol(flat index in frequency space)`.
    pub fn apply_multiplier(&self, data: &[C64], symbol: impl Fn(usize) -> C64) -> Vec<C64> {
        let mut buf = data.to_vec();
        self.forward(&mut buf);
        for (idx, z) in buf.iter_mut().enumerate() {
            *z *= symbol(idx);
        }
        self.inverse(&mut buf);
        buf
    }

    /// Spectral partial derivative along `axis`.
    pub fn derivative(&self, data: &[C64], axis: usize) -> Vec<C64> {
        self.apply_multiplier(data, |idx| C64::new(0.0, self.wavenumber(idx, axis)))
    }

    /// Spectral gradient: one forward transform, `N` inverse transforms.
    pub fn spectral_gradient(&self, data: &[C64]) -> Vec<Vec<C64>> {
        let mut hat = data.to_vec();
        self.forward(&mut hat);
        (0..self.dim())
            .map(|axis| {
                let mut d: Vec<C64> = hat
                    .iter()
                    .enumerate()
                    .map(|(idx, z)| z * C64::new(0.0, self.wavenumber(idx, axis)))
                    .collect();
                self.inverse(&mut d);
                d
            })
            .collect()
    }

    /// `∫ conj(a) b` by Riemann sum.
    pub fn inner(&self, a: &[C64], b: &[C64]) -> C64 {
        let s: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
        s * self.cell_volume()
    }

    pub fn norm2_sq(&self, a: &[C64]) -> f64 {
        a.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.cell_volume()
    }

    /// `‖a‖₂²` evaluated in frequency space (Parseval).
    pub fn norm2_sq_spectral(&self, a: &[C64]) -> f64 {
        let mut hat = a.to_vec();
        self.forward(&mut hat);
        hat.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.cell_volume() / self.len as f64
    }

    /// Minimal-image offset of a grid point from the origin along each axis.
    pub fn periodic_offset(&self, flat: usize) -> [f64; 3] {
        let n = self.spec.n_axis;
        let mut r = [0.0; 3];
        for (a, ra) in r.iter_mut().enumerate().take(self.dim()) {
            let i = self.axis_index(flat, a);
            let signed = if i < n / 2 { i as i64 } else { i as i64 - n as i64 };
            *ra = signed as f64 * self.dx;
        }
        r
    }
}

/// `L^p` norm of one component on the grid; `p = ∞` is the max modulus.
pub fn component_lp_norm(grid: &Grid, data: &[C64], p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidArgument(format!("L^p norm needs p >= 1 (got {p})")));
    }
    if p.is_infinite() {
        return Ok(data.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    let sum: f64 = if p == 2.0 {
        data.iter().map(|z| z.norm_sqr()).sum()
    } else {
        data.iter().map(|z| z.norm().powf(p)).sum()
    };
    Ok((sum * grid.cell_volume()).powf(1.0 / p))
}

/// Per-component `L^p` norms and the vector norm `(Σ ‖Φ_i‖²_{L^p})^{1/2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct LpNorm {
    pub components: Vec<f64>,
    pub aggregate: f64,
}

pub fn lp_norm(field: &Field, p: f64) -> Result<LpNorm> {
    let components = field
        .components()
        .iter()
        .map(|c| component_lp_norm(field.grid(), c, p))
        .collect::<Result<Vec<_>>>()?;
    let aggregate = components.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(LpNorm {
        components,
        aggregate,
    })
}

/// An `m`-component complex field sharing one grid.
#[derive(Clone)]
pub struct Field {
    grid: Arc<Grid>,
    data: Vec<Vec<C64>>,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field")
            .field("components", &self.data.len())
            .field("grid", &self.grid.spec)
            .finish()
    }
}

impl Field {
    pub fn zeros(grid: Arc<Grid>, m: usize) -> Self {
        let len = grid.len();
        Field {
            grid,
            data: vec![vec![C64::new(0.0, 0.0); len]; m],
        }
    }

    pub fn from_components(grid: Arc<Grid>, data: Vec<Vec<C64>>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Shape("a field needs at least one component".into()));
        }
        for (j, c) in data.iter().enumerate() {
            if c.len() != grid.len() {
                return Err(Error::Shape(format!(
                    "component {j} has {} values, grid has {}",
                    c.len(),
                    grid.len()
                )));
            }
        }
        let field = Field { grid, data };
        field.check_finite()?;
        Ok(field)
    }

    /// Samples `f(component, position)` at every grid point.
    pub fn from_fn(grid: Arc<Grid>, m: usize, f: impl Fn(usize, &[f64]) -> C64) -> Self {
        let dim = grid.dim();
        let data = (0..m)
            .map(|j| {
                (0..grid.len())
                    .map(|idx| {
                        let x = grid.position(idx);
                        f(j, &x[..dim])
                    })
                    .collect()
            })
            .collect();
        Field { grid, data }
    }

    pub(crate) fn from_parts_unchecked(grid: Arc<Grid>, data: Vec<Vec<C64>>) -> Self {
        Field { grid, data }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn m(&self) -> usize {
        self.data.len()
    }

    pub fn components(&self) -> &[Vec<C64>] {
        &self.data
    }

    pub fn component(&self, j: usize) -> &[C64] {
        &self.data[j]
    }

    pub fn component_mut(&mut self, j: usize) -> &mut Vec<C64> {
        &mut self.data[j]
    }

    pub fn into_components(self) -> Vec<Vec<C64>> {
        self.data
    }

    pub fn check_finite(&self) -> Result<()> {
        for (component, c) in self.data.iter().enumerate() {
            if let Some(index) = c.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
                return Err(Error::NonFinite { component, index });
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.check_finite().is_ok()
    }

    pub fn same_shape(&self, other: &Field) -> Result<()> {
        if self.m() != other.m() || self.grid.spec != other.grid.spec {
            return Err(Error::Shape(format!(
                "fields differ: {} components on {:?} vs {} on {:?}",
                self.m(),
                self.grid.spec,
                other.m(),
                other.grid.spec
            )));
        }
        Ok(())
    }

    /// Per-component charges `‖Φ_j‖₂²`.
    pub fn charges(&self) -> Vec<f64> {
        self.data.iter().map(|c| self.grid.norm2_sq(c)).collect()
    }

    pub fn norm_sq(&self) -> f64 {
        self.charges().iter().sum()
    }

    /// `ℒ²` norm of the whole field.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `Σ_j ∫ conj(self_j) other_j`.
    pub fn inner(&self, other: &Field) -> C64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| self.grid.inner(a, b))
            .sum()
    }

    /// Real `ℒ²` inner product `Re ⟨self, other⟩`.
    pub fn real_inner(&self, other: &Field) -> f64 {
        self.inner(other).re
    }

    pub fn scale(&mut self, s: C64) {
        for c in &mut self.data {
            for z in c.iter_mut() {
                *z *= s;
            }
        }
    }

    pub fn scaled(&self, s: C64) -> Field {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: C64, other: &Field) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += alpha * y;
            }
        }
    }

    pub fn sub(&self, other: &Field) -> Field {
        let mut out = self.clone();
        out.axpy(C64::new(-1.0, 0.0), other);
        out
    }

    pub fn add(&self, other: &Field) -> Field {
        let mut out = self.clone();
        out.axpy(C64::new(1.0, 0.0), other);
        out
    }

    pub fn distance(&self, other: &Field) -> f64 {
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>())
            .sum();
        (sum * self.grid.cell_volume()).sqrt()
    }

    pub fn map_components(&self, f: impl Fn(usize, &[C64]) -> Vec<C64>) -> Field {
        let data = self.data.iter().enumerate().map(|(j, c)| f(j, c)).collect();
        Field {
            grid: self.grid.clone(),
            data,
        }
    }

    pub fn conj(&self) -> Field {
        self.map_components(|_, c| c.iter().map(|z| z.conj()).collect())
    }

    pub fn max_modulus(&self) -> f64 {
        self.data
            .iter()
            .flat_map(|c| c.iter().map(|z| z.norm()))
            .fold(0.0, f64::max)
    }

    /// Fraction of the total charge within `width` of the box boundary.
    pub fn boundary_mass_fraction(&self, width: f64) -> f64 {
        let total = self.norm_sq();
        if total == 0.0 {
            return 0.0;
        }
        let edge = self.grid.half_width() - width;
        let mut near = 0.0;
        for c in &self.data {
            for (idx, z) in c.iter().enumerate() {
                let x = self.grid.position(idx);
                if x[..self.grid.dim()].iter().any(|xa| xa.abs() >= edge) {
                    near += z.norm_sqr();
                }
            }
        }
        near * self.grid.cell_volume() / total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid(dim: usize, n: usize, l: f64) -> Arc<Grid> {
        make_grid(GridSpec::new(dim, n, l)).unwrap()
    }

    #[test]
    fn one_dimensional_grid_spacing_and_wavenumbers() {
        let g = grid(1, 8, PI);
        assert!((g.dx() - PI / 4.0).abs() < 1e-15);
        let mut k: Vec<i64> = g.axis_wavenumbers().iter().map(|k| k.round() as i64).collect();
        k.sort();
        assert_eq!(k, (-4..=3).collect::<Vec<_>>());
    }

    #[test]
    fn two_dimensional_grid_size() {
        let g = grid(2, 64, 10.0);
        assert_eq!(g.len(), 4096);
        assert!((g.dx() - 0.3125).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(matches!(make_grid(GridSpec::new(1, 6, 1.0)), Err(Error::InvalidGrid(_))));
        assert!(make_grid(GridSpec::new(4, 8, 1.0)).is_err());
        assert!(make_grid(GridSpec::new(0, 8, 1.0)).is_err());
        assert!(make_grid(GridSpec::new(1, 4, 1.0)).is_err());
        assert!(make_grid(GridSpec::new(1, 8, -1.0)).is_err());
        let mut big = GridSpec::new(3, 512, 1.0);
        big.max_points = 1 << 20;
        assert!(make_grid(big).is_err());
    }

    #[test]
    fn lp_norm_of_constant_and_point() {
        let g = grid(1, 64, 1.0);
        let f = Field::from_fn(g.clone(), 1, |_, _| C64::new(1.0, 0.0));
        let n = lp_norm(&f, 2.0).unwrap();
        assert!((n.components[0] - 2f64.sqrt()).abs() < 1e-14);

        let mut spike = Field::zeros(g, 1);
        spike.component_mut(0)[17] = C64::new(1.0, 0.0);
        assert_eq!(lp_norm(&spike, f64::INFINITY).unwrap().components[0], 1.0);
        assert!(lp_norm(&spike, 0.5).is_err());
    }

    #[test]
    fn lp_norm_aggregate_is_squared_sum() {
        let g = grid(1, 32, 2.0);
        let f = Field::from_fn(g, 2, |j, x| C64::new((j + 1) as f64 * (-x[0] * x[0]).exp(), 0.0));
        let n = lp_norm(&f, 4.0).unwrap();
        let expect = (n.components[0].powi(2) + n.components[1].powi(2)).sqrt();
        assert!((n.aggregate - expect).abs() < 1e-15);
    }

    #[test]
    fn gaussian_l2_norm_matches_quadrature() {
        // ∫ e^{-x²} dx = √π, so ‖e^{-x²/2}‖₂ = π^{1/4}.
        let g = grid(1, 512, 20.0);
        let f = Field::from_fn(g, 1, |_, x| C64::new((-x[0] * x[0] / 2.0).exp(), 0.0));
        let n = lp_norm(&f, 2.0).unwrap().components[0];
        assert!((n - PI.powf(0.25)).abs() < 1e-10, "{n}");
    }

    #[test]
    fn derivative_of_plane_wave_and_sine() {
        let g = grid(1, 32, PI);
        let e = Field::from_fn(g.clone(), 1, |_, x| C64::new(0.0, x[0]).exp());
        let d = g.derivative(e.component(0), 0);
        for (idx, z) in d.iter().enumerate() {
            let x = g.coordinate(idx, 0);
            assert!((z - C64::new(0.0, 1.0) * C64::new(0.0, x).exp()).norm() < 1e-13);
        }
        let s = Field::from_fn(g.clone(), 1, |_, x| C64::new((2.0 * x[0]).sin(), 0.0));
        let d = g.spectral_gradient(s.component(0));
        for (idx, z) in d[0].iter().enumerate() {
            let x = g.coordinate(idx, 0);
            assert!((z - C64::new(2.0 * (2.0 * x).cos(), 0.0)).norm() < 1e-13);
        }
    }

    /// Dense spectral differentiation matrix built from explicit DFT sums.
    fn dense_derivative_oracle(n: usize, l: f64, f: &[C64]) -> Vec<C64> {
        let dk = PI / l;
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (i, o) in out.iter_mut().enumerate() {
            for (j, fj) in f.iter().enumerate() {
                let mut entry = C64::new(0.0, 0.0);
                for q in 0..n {
                    let kq = if q < n / 2 { q as f64 } else { q as f64 - n as f64 };
                    let phase = 2.0 * PI * (q as f64) * (i as f64 - j as f64) / n as f64;
                    entry += C64::new(0.0, kq * dk) * C64::new(0.0, phase).exp();
                }
                *o += entry / n as f64 * fj;
            }
        }
        out
    }

    #[test]
    fn derivative_matches_dense_matrix() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 16;
        let l = 3.0;
        let g = grid(1, n, l);
        let f: Vec<C64> = (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let fast = g.derivative(&f, 0);
        let slow = dense_derivative_oracle(n, l, &f);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn three_dimensional_round_trip_and_gradient() {
        let g = grid(3, 32, 8.0);
        let f = Field::from_fn(g.clone(), 1, |_, x| {
            C64::new((-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 2.0).exp(), 0.3 * x[2].sin())
        });
        let mut buf = f.component(0).to_vec();
        g.forward(&mut buf);
        g.inverse(&mut buf);
        for (a, b) in buf.iter().zip(f.component(0)) {
            assert!((a - b).norm() < 1e-13);
        }
        let grad = g.spectral_gradient(f.component(0));
        // ∂_y of the Gaussian part at an interior point.
        let idx = (16 * 32 + 20) * 32 + 16;
        let x = g.position(idx);
        let expect = -x[1] * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 2.0).exp();
        assert!((grad[1][idx].re - expect).abs() < 1e-6);
    }

    fn random_field(seed: u64, dim: usize, n: usize) -> Field {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = grid(dim, n, 5.0);
        let data = vec![(0..g.len())
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()];
        Field::from_components(g, data).unwrap()
    }

    proptest! {
        #[test]
        fn parseval_and_round_trip(seed in 0u64..1000, dim in 1usize..=3) {
            let n = if dim == 3 { 8 } else { 32 };
            let f = random_field(seed, dim, n);
            let g = f.grid().clone();
            let phys = g.norm2_sq(f.component(0));
            let spec = g.norm2_sq_spectral(f.component(0));
            prop_assert!((phys - spec).abs() <= 1e-12 * phys);
            let mut buf = f.component(0).to_vec();
            g.forward(&mut buf);
            g.inverse(&mut buf);
            let err: f64 = buf.iter().zip(f.component(0)).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            let size: f64 = f.component(0).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            prop_assert!(err <= 1e-13 * size);
        }

        #[test]
        fn lp_norm_monotone_in_modulus(seed in 0u64..1000, p in prop_oneof![Just(1.0), Just(2.0), Just(3.5), Just(f64::INFINITY)], boost in 0.0f64..2.0) {
            let f = random_field(seed, 1, 32);
            let bigger = f.map_components(|_, c| c.iter().enumerate().map(|(i, z)| z * (1.0 + boost * ((i % 3) as f64))).collect());
            let a = lp_norm(&f, p).unwrap().aggregate;
            let b = lp_norm(&bigger, p).unwrap().aggregate;
            prop_assert!(b >= a * (1.0 - 1e-14));
        }
    }

    #[test]
    fn boundary_mass_detects_wide_state() {
        let g = grid(1, 256, 10.0);
        let narrow = Field::from_fn(g.clone(), 1, |_, x| C64::new((-x[0] * x[0]).exp(), 0.0));
        let wide = Field::from_fn(g, 1, |_, x| C64::new((-x[0] * x[0] / 40.0).exp(), 0.0));
        assert!(narrow.boundary_mass_fraction(2.5) < 1e-8);
        assert!(wide.boundary_mass_fraction(2.5) > 1e-3);
    }

    #[test]
    fn non_finite_fields_are_rejected() {
        let g = grid(1, 8, 1.0);
        let mut data = vec![vec![C64::new(0.0, 0.0); 8]];
        data[0][3] = C64::new(f64::NAN, 0.0);
        assert!(matches!(
            Field::from_components(g, data),
            Err(Error::NonFinite { component: 0, index: 3 })
        ));
    }
}
