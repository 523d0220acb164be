//! Magnetic Schrödinger operator `L_A = (∇/i − A)²` on the periodic grid.
//!
//! `L_A` is applied as `Σ_d D_d D_d` with the covariant derivative
//! `D_d = −i∂_d − A_d`. On the grid this is Hermitian and nonnegative to
//! roundoff, with `⟨L_AΦ, Φ⟩ = Σ_d ‖D_dΦ‖²`. The expansion
//! `−Δ − (2/i)A·∇ + |A|² − (1/i)div A` is [`apply_la_expanded`]; it agrees
//! on resolved data.

use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, C64};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Sampled electromagnetic data on a grid.
#[derive(Clone, Debug)]
pub struct PotentialSet {
    grid: Arc<Grid>,
    /// Vector potential, one real array per axis.
    pub a: Vec<Vec<f64>>,
    /// Scalar (electric) potential.
    pub v: Vec<f64>,
    /// Spectral divergence of `A`.
    pub div_a: Vec<f64>,
    /// Coefficients `∂_iA_j − ∂_jA_i` for `i < j`, in lexicographic order.
    pub b: Vec<Vec<f64>>,
    pub inf_v: f64,
    uniform_a: Option<Vec<f64>>,
}

impl PotentialSet {
    pub fn new(grid: Arc<Grid>, a: Vec<Vec<f64>>, v: Vec<f64>) -> Result<Self> {
        let dim = grid.dim();
        if a.len() != dim {
            return Err(Error::Shape(format!("A needs {dim} components, got {}", a.len())));
        }
        for arr in a.iter().chain(std::iter::once(&v)) {
            if arr.len() != grid.len() {
                return Err(Error::Shape(format!(
                    "potential array has {} samples, grid has {}",
                    arr.len(),
                    grid.len()
                )));
            }
            if arr.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument("potential samples must be finite".into()));
            }
        }
        let grads: Vec<Vec<Vec<f64>>> = a.iter().map(|ai| real_gradient(&grid, ai)).collect();
        let mut div_a = vec![0.0; grid.len()];
        for (d, g) in grads.iter().enumerate() {
            for (acc, x) in div_a.iter_mut().zip(&g[d]) {
                *acc += x;
            }
        }
        let mut b = Vec::new();
        for i in 0..dim {
            for j in (i + 1)..dim {
                b.push(
                    grads[j][i]
                        .iter()
                        .zip(&grads[i][j])
                        .map(|(di_aj, dj_ai)| di_aj - dj_ai)
                        .collect(),
                );
            }
        }
        let inf_v = v.iter().copied().fold(f64::INFINITY, f64::min);
        let uniform_a = a
            .iter()
            .map(|ai| {
                let first = ai[0];
                let scale = ai.iter().fold(1.0f64, |s, x| s.max(x.abs()));
                ai.iter()
                    .all(|x| (x - first).abs() <= 1e-14 * scale)
                    .then_some(first)
            })
            .collect::<Option<Vec<f64>>>();
        Ok(PotentialSet {
            grid,
            a,
            v,
            div_a,
            b,
            inf_v,
            uniform_a,
        })
    }

    /// `A = 0`, `V = 0`.
    pub fn zero(grid: Arc<Grid>) -> Self {
        let len = grid.len();
        let dim = grid.dim();
        Self::new(grid, vec![vec![0.0; len]; dim], vec![0.0; len]).expect("zero potentials are valid")
    }

    pub fn from_fns(
        grid: Arc<Grid>,
        a: impl Fn(&[f64]) -> Vec<f64>,
        v: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        let dim = grid.dim();
        let mut av = vec![Vec::with_capacity(grid.len()); dim];
        let mut vv = Vec::with_capacity(grid.len());
        for idx in 0..grid.len() {
            let x = grid.position(idx);
            let ax = a(&x[..dim]);
            if ax.len() != dim {
                return Err(Error::Shape(format!("A(x) must have {dim} components")));
            }
            for (d, val) in ax.into_iter().enumerate() {
                av[d].push(val);
            }
            vv.push(v(&x[..dim]));
        }
        Self::new(grid, av, vv)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// `Some(a)` when `A` is spatially constant; then `L_A` is the Fourier
    /// multiplier `|k − a|²`.
    pub fn uniform_a(&self) -> Option<&[f64]> {
        self.uniform_a.as_deref()
    }

    pub fn is_magnetic(&self) -> bool {
        self.a.iter().any(|ai| ai.iter().any(|x| *x != 0.0))
    }

    /// Same `A`, different `V`.
    pub fn with_v(&self, v: Vec<f64>) -> Result<Self> {
        Self::new(self.grid.clone(), self.a.clone(), v)
    }

    pub fn sup_v(&self) -> f64 {
        self.v.iter().fold(0.0f64, |s, x| s.max(x.abs()))
    }

    fn check(&self, len: usize) {
        assert_eq!(len, self.grid.len(), "field and potentials live on different grids");
    }
}

fn real_gradient(grid: &Grid, f: &[f64]) -> Vec<Vec<f64>> {
    let data: Vec<C64> = f.iter().map(|&x| C64::new(x, 0.0)).collect();
    grid.spectral_gradient(&data)
        .into_iter()
        .map(|d| d.into_iter().map(|z| z.re).collect())
        .collect()
}

/// Built-in vector potential families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VectorPotentialFamily {
    Zero,
    Constant { value: Vec<f64> },
    /// `A = B(−y, x, 0)/2`, a uniform field `B` normal to the `xy` plane.
    /// Not periodic: the box edge carries a spurious flux, keep states
    /// away from it.
    HarmonicGauge { b: f64 },
    /// Whitespace separated samples, one grid point per line, `N` columns.
    Custom { path: PathBuf },
}

/// Built-in scalar potential families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarPotentialFamily {
    Constant { value: f64 },
    /// `V = offset + ω²|x|²`.
    Harmonic { omega: f64, #[serde(default)] offset: f64 },
    /// Whitespace separated samples, one value per grid point.
    File { path: PathBuf },
}

impl Default for VectorPotentialFamily {
    fn default() -> Self {
        VectorPotentialFamily::Zero
    }
}

impl Default for ScalarPotentialFamily {
    fn default() -> Self {
        ScalarPotentialFamily::Constant { value: 0.0 }
    }
}

fn read_samples(path: &PathBuf, expect: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let values = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(|l| l.split_whitespace())
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| Error::Config(format!("{}: bad number {tok:?}", path.display())))
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != expect {
        return Err(Error::Config(format!(
            "{}: expected {expect} samples, found {}",
            path.display(),
            values.len()
        )));
    }
    Ok(values)
}

/// Samples the chosen families on `grid`.
pub fn build_potentials(
    grid: Arc<Grid>,
    a: &VectorPotentialFamily,
    v: &ScalarPotentialFamily,
) -> Result<PotentialSet> {
    let dim = grid.dim();
    let len = grid.len();
    let a_arrays: Vec<Vec<f64>> = match a {
        VectorPotentialFamily::Zero => vec![vec![0.0; len]; dim],
        VectorPotentialFamily::Constant { value } => {
            if value.len() != dim {
                return Err(Error::Config(format!(
                    "constant A needs {dim} components, got {}",
                    value.len()
                )));
            }
            value.iter().map(|&c| vec![c; len]).collect()
        }
        VectorPotentialFamily::HarmonicGauge { b } => {
            if dim < 2 {
                return Err(Error::Config("harmonic gauge needs N >= 2".into()));
            }
            let mut arrays = vec![vec![0.0; len]; dim];
            for idx in 0..len {
                let x = grid.position(idx);
                arrays[0][idx] = -0.5 * b * x[1];
                arrays[1][idx] = 0.5 * b * x[0];
            }
            arrays
        }
        VectorPotentialFamily::Custom { path } => {
            let flat = read_samples(path, dim * len)?;
            (0..dim)
                .map(|d| (0..len).map(|idx| flat[idx * dim + d]).collect())
                .collect()
        }
    };
    let v_array: Vec<f64> = match v {
        ScalarPotentialFamily::Constant { value } => vec![*value; len],
        ScalarPotentialFamily::Harmonic { omega, offset } => (0..len)
            .map(|idx| {
                let x = grid.position(idx);
                offset + omega * omega * x[..dim].iter().map(|c| c * c).sum::<f64>()
            })
            .collect(),
        ScalarPotentialFamily::File { path } => read_samples(path, len)?,
    };
    PotentialSet::new(grid, a_arrays, v_array)
}

/// Measured proxies for the smoothness/decay assumptions on `A`, `B`, `V`.
/// Descriptive only: a finite box cannot certify a supremum over ℝ^N.
#[derive(Clone, Debug, Serialize)]
pub struct AssumptionReport {
    /// `max |∂_j A_i|` over the grid.
    pub sup_first_derivatives_a: f64,
    /// `max |∂_j ∂_k A_i|` over the grid.
    pub sup_second_derivatives_a: f64,
    /// Fitted `e` in `max_{|x|≈r} |∂B| ~ ⟨r⟩^{−e}`; `None` when `B` vanishes.
    pub b_derivative_decay_exponent: Option<f64>,
    /// `e > 1` (or `B ≡ 0`).
    pub b_decay_ok: bool,
    pub sup_b: f64,
    pub inf_v: f64,
    pub sup_v: f64,
    /// Exponent `p` used for `V`: bounded samples give `p = ∞`.
    pub v_exponent: f64,
    /// `V` does not grow toward the box edge (compatible with `L^p + L^∞`).
    pub v_bounded_at_edge: bool,
}

pub fn assumption_report(pot: &PotentialSet) -> AssumptionReport {
    let grid = pot.grid();
    let dim = grid.dim();
    let mut sup1 = 0.0f64;
    let mut sup2 = 0.0f64;
    for ai in &pot.a {
        for d in real_gradient(grid, ai) {
            sup1 = d.iter().fold(sup1, |s, x| s.max(x.abs()));
            for dd in real_gradient(grid, &d) {
                sup2 = dd.iter().fold(sup2, |s, x| s.max(x.abs()));
            }
        }
    }
    let sup_b = pot
        .b
        .iter()
        .flat_map(|c| c.iter())
        .fold(0.0f64, |s, x| s.max(x.abs()));

    // Shell maxima of |∂B| against ⟨r⟩ on the inner 90% of the box.
    let shells = 12usize;
    let rmax = 0.9 * grid.half_width();
    let mut shell_max = vec![0.0f64; shells];
    for bc in &pot.b {
        for d in real_gradient(grid, bc) {
            for (idx, val) in d.iter().enumerate() {
                let x = grid.position(idx);
                let r = x[..dim].iter().map(|c| c * c).sum::<f64>().sqrt();
                if r < rmax {
                    let s = ((r / rmax) * shells as f64) as usize;
                    shell_max[s.min(shells - 1)] = shell_max[s.min(shells - 1)].max(val.abs());
                }
            }
        }
    }
    let pts: Vec<(f64, f64)> = shell_max
        .iter()
        .enumerate()
        .skip(shells / 3)
        .filter(|(_, m)| **m > 1e-300)
        .map(|(s, m)| {
            let r = (s as f64 + 0.5) * rmax / shells as f64;
            ((1.0 + r * r).sqrt().ln(), m.ln())
        })
        .collect();
    let exponent = if shell_max.iter().all(|m| *m <= 1e-12) || pts.len() < 2 {
        None
    } else {
        Some(-fit_slope(&pts))
    };
    let b_decay_ok = exponent.is_none_or(|e| e > 1.0);

    let edge = 0.9 * grid.half_width();
    let mut outer = 0.0f64;
    let mut inner = 0.0f64;
    for (idx, val) in pot.v.iter().enumerate() {
        let x = grid.position(idx);
        let r = x[..dim].iter().fold(0.0f64, |s, c| s.max(c.abs()));
        if r >= edge {
            outer = outer.max(val.abs());
        } else if r <= 0.5 * grid.half_width() {
            inner = inner.max(val.abs());
        }
    }
    AssumptionReport {
        sup_first_derivatives_a: sup1,
        sup_second_derivatives_a: sup2,
        b_derivative_decay_exponent: exponent,
        b_decay_ok,
        sup_b,
        inf_v: pot.inf_v,
        sup_v: pot.sup_v(),
        v_exponent: f64::INFINITY,
        v_bounded_at_edge: outer <= 1.5 * inner.max(1e-300) || outer == 0.0,
    }
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// `D_d u = −i∂_d u − A_d u` for every axis `d`.
pub fn covariant_derivative(u: &[C64], pot: &PotentialSet) -> Vec<Vec<C64>> {
    pot.check(u.len());
    let grid = pot.grid();
    let mut hat = u.to_vec();
    grid.forward(&mut hat);
    (0..grid.dim())
        .map(|d| covariant_from_hat(grid, &hat, u, &pot.a[d], d))
        .collect()
}

fn covariant_from_hat(grid: &Grid, hat: &[C64], u: &[C64], a: &[f64], axis: usize) -> Vec<C64> {
    let mut w: Vec<C64> = hat
        .iter()
        .enumerate()
        .map(|(idx, z)| z * grid.wavenumber(idx, axis))
        .collect();
    grid.inverse(&mut w);
    for ((wi, ui), ai) in w.iter_mut().zip(u).zip(a) {
        *wi -= ui * ai;
    }
    w
}

/// `L_A` on one component.
pub fn apply_la_component(u: &[C64], pot: &PotentialSet) -> Vec<C64> {
    pot.check(u.len());
    let grid = pot.grid();
    if let Some(a) = pot.uniform_a() {
        return grid.apply_multiplier(u, |idx| {
            let s: f64 = a
                .iter()
                .enumerate()
                .map(|(d, ad)| (grid.wavenumber(idx, d) - ad).powi(2))
                .sum();
            C64::new(s, 0.0)
        });
    }
    let mut hat = u.to_vec();
    grid.forward(&mut hat);
    let mut out = vec![C64::new(0.0, 0.0); u.len()];
    for d in 0..grid.dim() {
        let w = covariant_from_hat(grid, &hat, u, &pot.a[d], d);
        let mut what = w.clone();
        grid.forward(&mut what);
        let dw = covariant_from_hat(grid, &what, &w, &pot.a[d], d);
        for (o, x) in out.iter_mut().zip(dw) {
            *o += x;
        }
    }
    out
}

pub fn apply_la(field: &Field, pot: &PotentialSet) -> Field {
    field.map_components(|_, c| apply_la_component(c, pot))
}

/// The expanded four-term form `−Δφ − (2/i)A·∇φ + |A|²φ − (1/i)(div A)φ`.
pub fn apply_la_expanded(field: &Field, pot: &PotentialSet) -> Field {
    let grid = pot.grid().clone();
    field.map_components(|_, u| {
        pot.check(u.len());
        let lap = grid.apply_multiplier(u, |idx| C64::new(grid.k_squared()[idx], 0.0));
        let grad = grid.spectral_gradient(u);
        (0..u.len())
            .map(|idx| {
                let mut a_dot_grad = C64::new(0.0, 0.0);
                let mut a2 = 0.0;
                for d in 0..grid.dim() {
                    a_dot_grad += grad[d][idx] * pot.a[d][idx];
                    a2 += pot.a[d][idx].powi(2);
                }
                lap[idx] + 2.0 * I * a_dot_grad + u[idx] * a2 + I * pot.div_a[idx] * u[idx]
            })
            .collect()
    })
}

/// `½ Σ_j Σ_d ‖D_dΦ_j‖²`.
pub fn kinetic_energy(field: &Field, pot: &PotentialSet) -> f64 {
    let grid = field.grid();
    0.5 * field
        .components()
        .iter()
        .map(|c| {
            covariant_derivative(c, pot)
                .iter()
                .map(|d| grid.norm2_sq(d))
                .sum::<f64>()
        })
        .sum::<f64>()
}

/// Regularization of `|u|` used before differentiating it.
pub const MODULUS_EPS: f64 = 1e-12;

/// `(‖∇|u|‖₂², ‖(∇/i − A)u‖₂²)`; the diamagnetic inequality says `lhs ≤ rhs`.
pub fn diamagnetic_pair(u: &[C64], pot: &PotentialSet) -> (f64, f64) {
    pot.check(u.len());
    let grid = pot.grid();
    let modulus: Vec<C64> = u
        .iter()
        .map(|z| C64::new((z.norm_sqr() + MODULUS_EPS * MODULUS_EPS).sqrt() - MODULUS_EPS, 0.0))
        .collect();
    let lhs = grid
        .spectral_gradient(&modulus)
        .iter()
        .map(|d| grid.norm2_sq(d))
        .sum();
    let rhs = covariant_derivative(u, pot)
        .iter()
        .map(|d| grid.norm2_sq(d))
        .sum();
    (lhs, rhs)
}

/// Options of the conjugate-gradient resolvent solve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgOptions {
    /// Relative residual target.
    pub tol: f64,
    /// Defaults to `10 · n_axis`.
    pub max_iter: Option<usize>,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            tol: 1e-12,
            max_iter: None,
        }
    }
}

/// `J_n^A f = (I + L_A/n)^{-1} f`, per component.
pub fn yosida_apply(f: &Field, n: u64, pot: &PotentialSet, opts: &CgOptions) -> Result<Field> {
    if n == 0 {
        return Err(Error::InvalidArgument("Yosida index n must be >= 1".into()));
    }
    let data = f
        .components()
        .iter()
        .map(|c| yosida_component(c, n as f64, pot, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(Field::from_parts_unchecked(f.grid().clone(), data))
}

fn yosida_component(f: &[C64], n: f64, pot: &PotentialSet, opts: &CgOptions) -> Result<Vec<C64>> {
    pot.check(f.len());
    let grid = pot.grid();
    if let Some(a) = pot.uniform_a() {
        return Ok(grid.apply_multiplier(f, |idx| {
            let s: f64 = a
                .iter()
                .enumerate()
                .map(|(d, ad)| (grid.wavenumber(idx, d) - ad).powi(2))
                .sum();
            C64::new(1.0 / (1.0 + s / n), 0.0)
        }));
    }
    let dot = |a: &[C64], b: &[C64]| -> C64 { a.iter().zip(b).map(|(x, y)| x.conj() * y).sum() };
    let norm = |a: &[C64]| a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let fnorm = norm(f);
    if fnorm == 0.0 {
        return Ok(vec![C64::new(0.0, 0.0); f.len()]);
    }
    let op = |x: &[C64]| -> Vec<C64> {
        let lx = apply_la_component(x, pot);
        x.iter().zip(lx).map(|(xi, li)| xi + li / n).collect()
    };
    // Free resolvent as preconditioner.
    let precond = |r: &[C64]| grid.apply_multiplier(r, |idx| C64::new(1.0 / (1.0 + grid.k_squared()[idx] / n), 0.0));
    let max_iter = opts.max_iter.unwrap_or(10 * grid.n_axis());
    let mut x = precond(f);
    let ax = op(&x);
    let mut r: Vec<C64> = f.iter().zip(&ax).map(|(a, b)| a - b).collect();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z).re;
    let mut res = norm(&r) / fnorm;
    for _ in 0..max_iter {
        if res <= opts.tol {
            return Ok(x);
        }
        let ap = op(&p);
        let alpha = rz / dot(&p, &ap).re;
        for ((xi, ri), (pi, api)) in x.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&ap)) {
            *xi += pi * alpha;
            *ri -= api * alpha;
        }
        res = norm(&r) / fnorm;
        if !res.is_finite() {
            break;
        }
        z = precond(&r);
        let rz_new = dot(&r, &z).re;
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + *pi * beta;
        }
    }
    if res <= opts.tol {
        return Ok(x);
    }
    Err(Error::SolverFailure {
        iterations: max_iter,
        residual: res,
    })
}

/// Default Krylov subspace dimension for non-uniform `A`.
pub const DEFAULT_KRYLOV_DIM: usize = 30;
/// Local error target of one Krylov substep, relative to the vector norm.
pub const KRYLOV_TOL: f64 = 1e-10;

/// `T(t) = e^{−itL_A}` applied to every component.
///
/// Uniform `A` (including `A = 0`) uses the exact multiplier `e^{−it|k−a|²}`;
/// otherwise a Lanczos approximation with adaptive substeps is used.
pub fn propagate_free(field: &Field, t: f64, pot: &PotentialSet, krylov_dim: usize) -> Result<Field> {
    FreePropagator::new(pot, t, krylov_dim).apply(field)
}

/// `T(dt)` for a fixed `dt`, caching the Fourier multiplier when available.
pub struct FreePropagator<'a> {
    pot: &'a PotentialSet,
    dt: f64,
    krylov_dim: usize,
    multiplier: Option<Vec<C64>>,
}

impl<'a> FreePropagator<'a> {
    pub fn new(pot: &'a PotentialSet, dt: f64, krylov_dim: usize) -> Self {
        let grid = pot.grid();
        let multiplier = pot.uniform_a().map(|a| {
            (0..grid.len())
                .map(|idx| {
                    let s: f64 = a
                        .iter()
                        .enumerate()
                        .map(|(d, ad)| (grid.wavenumber(idx, d) - ad).powi(2))
                        .sum();
                    C64::new(0.0, -dt * s).exp()
                })
                .collect()
        });
        FreePropagator {
            pot,
            dt,
            krylov_dim: krylov_dim.max(2),
            multiplier,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn apply_component(&self, u: &[C64]) -> Result<Vec<C64>> {
        self.pot.check(u.len());
        if self.dt == 0.0 {
            return Ok(u.to_vec());
        }
        match &self.multiplier {
            Some(mult) => {
                let grid = self.pot.grid();
                let mut buf = u.to_vec();
                grid.forward(&mut buf);
                for (z, m) in buf.iter_mut().zip(mult) {
                    *z *= m;
                }
                grid.inverse(&mut buf);
                Ok(buf)
            }
            None => krylov_expm(u, self.dt, self.pot, self.krylov_dim),
        }
    }

    pub fn apply(&self, field: &Field) -> Result<Field> {
        let data = field
            .components()
            .iter()
            .map(|c| self.apply_component(c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Field::from_parts_unchecked(field.grid().clone(), data))
    }
}

/// Lanczos approximation of `e^{−itL_A} u` with substeps chosen so that the
/// a posteriori error estimate stays below [`KRYLOV_TOL`].
fn krylov_expm(u: &[C64], t: f64, pot: &PotentialSet, dim: usize) -> Result<Vec<C64>> {
    let dot = |a: &[C64], b: &[C64]| -> C64 { a.iter().zip(b).map(|(x, y)| x.conj() * y).sum() };
    let norm = |a: &[C64]| a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut v = u.to_vec();
    let mut remaining = t;
    let min_step = 1e-12 * t.abs();
    while remaining != 0.0 {
        let beta0 = norm(&v);
        if beta0 == 0.0 {
            return Ok(v);
        }
        let mut basis: Vec<Vec<C64>> = vec![v.iter().map(|z| z / beta0).collect()];
        let mut alpha = Vec::with_capacity(dim);
        let mut beta: Vec<f64> = Vec::with_capacity(dim);
        let mut breakdown = false;
        let mut tail = 0.0;
        for j in 0..dim {
            let mut w = apply_la_component(&basis[j], pot);
            let a = dot(&basis[j], &w).re;
            alpha.push(a);
            // Full reorthogonalization, twice.
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(b, &w);
                    for (wi, bi) in w.iter_mut().zip(b) {
                        *wi -= bi * c;
                    }
                }
            }
            let bnext = norm(&w);
            if !bnext.is_finite() {
                return Err(Error::Krylov("non-finite Lanczos vector".into()));
            }
            let scale = a.abs().max(beta.last().copied().unwrap_or(0.0)).max(1.0);
            if bnext <= 1e-13 * scale {
                breakdown = true;
                break;
            }
            if j + 1 == dim {
                tail = bnext;
                break;
            }
            beta.push(bnext);
            basis.push(w.into_iter().map(|z| z / bnext).collect());
        }
        let k = alpha.len();
        let mut tmat = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            tmat[(i, i)] = alpha[i];
            if i + 1 < k {
                tmat[(i, i + 1)] = beta[i];
                tmat[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(tmat);
        let coeffs = |h: f64| -> Vec<C64> {
            (0..k)
                .map(|row| {
                    (0..k)
                        .map(|c| {
                            eig.eigenvectors[(row, c)]
                                * eig.eigenvectors[(0, c)]
                                * C64::new(0.0, -h * eig.eigenvalues[c]).exp()
                        })
                        .sum()
                })
                .collect()
        };
        let mut h = remaining;
        let mut y = coeffs(h);
        if !breakdown {
            while tail * y[k - 1].norm() > KRYLOV_TOL {
                h *= 0.5;
                if h.abs() < min_step {
                    return Err(Error::Krylov(format!(
                        "step fell below {min_step:e} with Krylov dimension {dim}"
                    )));
                }
                y = coeffs(h);
            }
        }
        let mut next = vec![C64::new(0.0, 0.0); v.len()];
        for (yj, b) in y.iter().zip(&basis) {
            let c = yj * beta0;
            for (ni, bi) in next.iter_mut().zip(b) {
                *ni += bi * c;
            }
        }
        v = next;
        remaining -= h;
        if remaining.abs() <= 1e-15 * t.abs() {
            break;
        }
    }
    Ok(v)
}
