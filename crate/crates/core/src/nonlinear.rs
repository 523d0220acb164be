//! Local and nonlocal nonlinearities, their energies, and the exponent
//! bookkeeping of the local well-posedness theory.
//!
//! Local family (with sign `s = ±1`):
//!
//! ```text
//! g_j = a_j |Φ_j|^{l_j} + Σ_{i≠j} β_ij |Φ_i|²
//! G   = Σ_j a_j/(l_j+2) |Φ_j|^{l_j+2} + ¼ Σ_{i≠j} β_ij |Φ_i|²|Φ_j|²
//! ```
//!
//! The `ℒ²` gradient of `s∫G` is `s·g_jΦ_j`.
//!
//! Nonlocal family: `W_ij(r) = w_ij · max(r, r₀)^{−γ}`, `h(s) = s^μ`, with
//! weak-integrability index `q = N/γ`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, C64};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    #[default]
    Focusing,
    Defocusing,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Focusing => 1.0,
            Sign::Defocusing => -1.0,
        }
    }
}

/// Power and coupled-quadratic local nonlinearity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalSpec {
    pub a: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    pub l: Vec<f64>,
    #[serde(default)]
    pub sign: Sign,
}

impl LocalSpec {
    /// No local nonlinearity on `m` components.
    pub fn none(m: usize) -> Self {
        LocalSpec {
            a: vec![0.0; m],
            beta: vec![vec![0.0; m]; m],
            l: vec![2.0; m],
            sign: Sign::Focusing,
        }
    }

    /// `s·|Φ_j|^l Φ_j` on every component, no coupling.
    pub fn power(m: usize, l: f64, sign: Sign) -> Self {
        LocalSpec {
            a: vec![1.0; m],
            beta: vec![vec![0.0; m]; m],
            l: vec![l; m],
            sign,
        }
    }

    pub fn m(&self) -> usize {
        self.a.len()
    }

    pub fn is_trivial(&self) -> bool {
        self.a.iter().all(|x| *x == 0.0) && self.beta.iter().flatten().all(|x| *x == 0.0)
    }

    fn has_coupling(&self) -> bool {
        self.beta
            .iter()
            .enumerate()
            .any(|(i, row)| row.iter().enumerate().any(|(j, b)| i != j && *b != 0.0))
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let m = self.m();
        if m == 0 {
            return Err(Error::condition("(g)", "need at least one component"));
        }
        if self.l.len() != m || self.beta.len() != m || self.beta.iter().any(|r| r.len() != m) {
            return Err(Error::condition(
                "(g)",
                format!("a, l and beta must all describe {m} components"),
            ));
        }
        if self.a.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::condition("(G)", "coefficients a_j must be >= 0"));
        }
        for i in 0..m {
            for j in 0..m {
                let b = self.beta[i][j];
                if !(b.is_finite() && b >= 0.0) {
                    return Err(Error::condition("(G)", "coupling beta must be >= 0"));
                }
                if (b - self.beta[j][i]).abs() > 1e-14 * b.abs().max(1.0) {
                    return Err(Error::condition("(g)", "coupling matrix beta must be symmetric"));
                }
            }
        }
        for (j, &l) in self.l.iter().enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::condition("(G)", format!("exponent l_{j} must be > 0")));
            }
            if dim >= 3 && l >= 4.0 / (dim as f64 - 2.0) {
                return Err(Error::condition(
                    "(G)",
                    format!("l_{j} = {l} must be < 4/(N-2) = {}", 4.0 / (dim as f64 - 2.0)),
                ));
            }
        }
        let alpha = self.lipschitz_exponent();
        if dim >= 3 && alpha >= 4.0 / (dim as f64 - 2.0) {
            return Err(Error::condition(
                "(g)",
                format!("Lipschitz exponent {alpha} must be < 4/(N-2)"),
            ));
        }
        Ok(())
    }

    /// `α` of the local Lipschitz bound: `max l_j`, and at least 2 when
    /// components are coupled.
    pub fn lipschitz_exponent(&self) -> f64 {
        let lmax = self
            .a
            .iter()
            .zip(&self.l)
            .filter(|(a, _)| **a != 0.0)
            .map(|(_, l)| *l)
            .fold(0.0, f64::max);
        if self.has_coupling() {
            lmax.max(2.0)
        } else {
            lmax
        }
    }

    /// `K` with `0 ≤ G ≤ K(Σ s_j + Σ s_j^{(l_j+2)/2})`, `s_j = |Φ_j|²`.
    /// `None` when a coupled component has `l_j < 2` (the bound fails for
    /// large amplitudes).
    pub fn growth_constant(&self) -> Option<f64> {
        let m = self.m();
        let mut k = 0.0f64;
        for j in 0..m {
            let row: f64 = (0..m).filter(|&i| i != j).map(|i| self.beta[i][j]).sum();
            if row > 0.0 && self.l[j] < 2.0 {
                return None;
            }
            k = k.max(self.a[j] / (self.l[j] + 2.0) + 0.25 * row);
        }
        Some(k)
    }

    /// Local densities `g_j(|Φ|²)` at every point, sign included.
    pub fn densities(&self, field: &Field) -> Vec<Vec<f64>> {
        let s = self.sign.value();
        let m = field.m();
        let len = field.grid().len();
        let moduli_sq: Vec<Vec<f64>> = field
            .components()
            .iter()
            .map(|c| c.iter().map(|z| z.norm_sqr()).collect())
            .collect();
        (0..m)
            .map(|j| {
                (0..len)
                    .map(|idx| {
                        let mut g = 0.0;
                        if self.a[j] != 0.0 {
                            g += self.a[j] * moduli_sq[j][idx].powf(0.5 * self.l[j]);
                        }
                        for i in 0..m {
                            if i != j && self.beta[i][j] != 0.0 {
                                g += self.beta[i][j] * moduli_sq[i][idx];
                            }
                        }
                        s * g
                    })
                    .collect()
            })
            .collect()
    }
}

/// `f_j = s·g_j(|Φ|²)Φ_j`.
pub fn eval_local(field: &Field, spec: &LocalSpec) -> Field {
    let dens = spec.densities(field);
    field.map_components(|j, c| c.iter().zip(&dens[j]).map(|(z, g)| z * g).collect())
}

/// `s·∫G(|Φ₁|²,…,|Φ_m|²)`.
pub fn eval_local_energy(field: &Field, spec: &LocalSpec) -> f64 {
    let m = field.m();
    let len = field.grid().len();
    let comps = field.components();
    let mut total = 0.0;
    for idx in 0..len {
        let mut g = 0.0;
        for j in 0..m {
            let sj = comps[j][idx].norm_sqr();
            if spec.a[j] != 0.0 {
                g += spec.a[j] / (spec.l[j] + 2.0) * sj.powf(0.5 * spec.l[j] + 1.0);
            }
            for i in 0..m {
                if i != j && spec.beta[i][j] != 0.0 {
                    g += 0.25 * spec.beta[i][j] * comps[i][idx].norm_sqr() * sj;
                }
            }
        }
        total += g;
    }
    spec.sign.value() * total * field.grid().cell_volume()
}

/// Hartree-type nonlocal term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlocalSpec {
    pub w: Vec<Vec<f64>>,
    pub gamma: f64,
    #[serde(default)]
    pub r0: f64,
    pub mu: f64,
}

impl NonlocalSpec {
    /// Weak-integrability index `q = N/γ` of `r^{−γ}`.
    pub fn q(&self, dim: usize) -> f64 {
        dim as f64 / self.gamma
    }

    pub fn m(&self) -> usize {
        self.w.len()
    }

    pub fn kernel(&self, r: f64) -> f64 {
        r.max(self.r0).powf(-self.gamma)
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let m = self.m();
        if m == 0 || self.w.iter().any(|r| r.len() != m) {
            return Err(Error::condition("(W)", "w must be a square matrix"));
        }
        for i in 0..m {
            for j in 0..m {
                let w = self.w[i][j];
                if !(w.is_finite() && w >= 0.0) {
                    return Err(Error::condition("(W)", "kernel weights must be >= 0"));
                }
                if (w - self.w[j][i]).abs() > 1e-14 * w.abs().max(1.0) {
                    return Err(Error::condition("(W)", "W_ij = W_ji violated"));
                }
            }
        }
        if !(self.r0.is_finite() && self.r0 >= 0.0) {
            return Err(Error::condition("(W)", "core radius r0 must be >= 0"));
        }
        let n = dim as f64;
        if !(self.gamma > 0.0) || self.gamma >= n {
            return Err(Error::condition(
                "(W)",
                format!("gamma = {} must lie in (0, N) for a locally integrable kernel", self.gamma),
            ));
        }
        let q = self.q(dim);
        if q <= 1.0f64.max(n / 4.0) {
            return Err(Error::condition(
                "(W)",
                format!("q = N/gamma = {q} must exceed max(1, N/4)"),
            ));
        }
        let upper = mu_upper_bound(dim, q);
        if !(self.mu >= 2.0 && self.mu <= upper + 1e-12) {
            return Err(Error::condition(
                "(restrh-localwp)",
                format!("mu = {} out of range [2, {upper}]", self.mu),
            ));
        }
        Ok(())
    }
}

/// Upper end of the admissible `μ` range, `(6q−1)/(2q) − (N−2)/N`.
pub fn mu_upper_bound(dim: usize, q: f64) -> f64 {
    let n = dim as f64;
    (6.0 * q - 1.0) / (2.0 * q) - (n - 2.0) / n
}

/// Gagliardo–Nirenberg exponent `σ = N l / (2(l+2))`.
pub fn gn_sigma(dim: usize, l: f64) -> f64 {
    dim as f64 * l / (2.0 * (l + 2.0))
}

fn hls_core(q: f64, mu: f64) -> f64 {
    0.5 - (2.0 * q - 1.0) / (2.0 * q * mu)
}

/// Power of `‖(∇/i − A)Φ‖` in the nonlocal energy bound:
/// `2Nμ(½ − (2q−1)/(2qμ))`.
pub fn hls_kinetic_power(dim: usize, q: f64, mu: f64) -> f64 {
    2.0 * dim as f64 * mu * hls_core(q, mu)
}

/// Power of each charge `m_i` in the nonlocal energy bound:
/// `μ/2 [1 − N(½ − (2q−1)/(2qμ))]`.
pub fn hls_mass_power(dim: usize, q: f64, mu: f64) -> f64 {
    0.5 * mu * (1.0 - dim as f64 * hls_core(q, mu))
}

/// Kernel sampled on a grid, with its transform cached.
#[derive(Clone, Debug)]
pub struct NonlocalKernel {
    spec: NonlocalSpec,
    grid: Arc<Grid>,
    samples: Vec<f64>,
    hat: Vec<C64>,
}

/// Subsamples per axis for the origin-cell average.
pub const ORIGIN_SUBSAMPLES: usize = 16;

impl NonlocalKernel {
    pub fn new(spec: NonlocalSpec, grid: Arc<Grid>) -> Result<Self> {
        spec.validate(grid.dim())?;
        let dim = grid.dim();
        let dx = grid.dx();
        let samples: Vec<f64> = (0..grid.len())
            .map(|idx| {
                if idx == 0 {
                    origin_cell_average(&spec, dim, dx)
                } else {
                    let r = grid.periodic_offset(idx);
                    spec.kernel(r[..dim].iter().map(|c| c * c).sum::<f64>().sqrt())
                }
            })
            .collect();
        let mut hat: Vec<C64> = samples.iter().map(|&k| C64::new(k, 0.0)).collect();
        grid.forward(&mut hat);
        Ok(NonlocalKernel {
            spec,
            grid,
            samples,
            hat,
        })
    }

    pub fn spec(&self) -> &NonlocalSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Kernel values at minimal-image offsets (index 0 is the origin cell).
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Discrete periodic convolution `Σ_b K(x_a − x_b) f(x_b) dx^N`.
    pub fn convolve(&self, f: &[f64]) -> Vec<f64> {
        let mut buf: Vec<C64> = f.iter().map(|&x| C64::new(x, 0.0)).collect();
        self.grid.forward(&mut buf);
        for (z, k) in buf.iter_mut().zip(&self.hat) {
            *z *= k;
        }
        self.grid.inverse(&mut buf);
        let dv = self.grid.cell_volume();
        buf.into_iter().map(|z| z.re * dv).collect()
    }

    /// `K ∗ |Φ_i|^μ` for every component (without the weights `w_ij`).
    fn potentials(&self, field: &Field) -> Vec<Vec<f64>> {
        let mu = self.spec.mu;
        field
            .components()
            .iter()
            .map(|c| {
                let h: Vec<f64> = c.iter().map(|z| h_of(z.norm(), mu)).collect();
                self.convolve(&h)
            })
            .collect()
    }

    /// `Σ_i (W_ij ∗ h(|Φ_i|)) · h'(|Φ_j|)/|Φ_j|` at every point.
    pub fn densities(&self, field: &Field) -> Vec<Vec<f64>> {
        let pots = self.potentials(field);
        let mu = self.spec.mu;
        let m = field.m();
        (0..m)
            .map(|j| {
                field
                    .component(j)
                    .iter()
                    .enumerate()
                    .map(|(idx, z)| {
                        let conv: f64 = (0..m).map(|i| self.spec.w[i][j] * pots[i][idx]).sum();
                        conv * h_prime_over_s(z.norm(), mu)
                    })
                    .collect()
            })
            .collect()
    }
}

fn origin_cell_average(spec: &NonlocalSpec, dim: usize, dx: f64) -> f64 {
    let s = ORIGIN_SUBSAMPLES;
    let offsets: Vec<f64> = (0..s).map(|k| ((k as f64 + 0.5) / s as f64 - 0.5) * dx).collect();
    let total = s.pow(dim as u32);
    let mut sum = 0.0;
    for flat in 0..total {
        let mut r2 = 0.0;
        let mut rest = flat;
        for _ in 0..dim {
            let c = offsets[rest % s];
            rest /= s;
            r2 += c * c;
        }
        sum += spec.kernel(r2.sqrt());
    }
    sum / total as f64
}

/// `h(s) = s^μ`.
pub fn h_of(s: f64, mu: f64) -> f64 {
    if mu == 2.0 {
        s * s
    } else {
        s.powf(mu)
    }
}

/// `h'(s)/s = μ s^{μ−2}`, with the value 0 at `s = 0` for `μ > 2`.
pub fn h_prime_over_s(s: f64, mu: f64) -> f64 {
    if mu == 2.0 {
        2.0
    } else if s == 0.0 {
        0.0
    } else {
        mu * s.powf(mu - 2.0)
    }
}

/// Component `j` gets `Σ_i (W_ij ∗ |Φ_i|^μ) μ|Φ_j|^{μ−2} Φ_j`.
pub fn eval_nonlocal(field: &Field, kernel: &NonlocalKernel) -> Field {
    let dens = kernel.densities(field);
    field.map_components(|j, c| c.iter().zip(&dens[j]).map(|(z, d)| z * d).collect())
}

/// `½ Σ_ij ⟨W_ij ∗ |Φ_i|^μ, |Φ_j|^μ⟩`.
pub fn eval_nonlocal_energy(field: &Field, kernel: &NonlocalKernel) -> f64 {
    let pots = kernel.potentials(field);
    let mu = kernel.spec.mu;
    let m = field.m();
    let dv = field.grid().cell_volume();
    let mut total = 0.0;
    for j in 0..m {
        let hj: Vec<f64> = field.component(j).iter().map(|z| h_of(z.norm(), mu)).collect();
        for i in 0..m {
            let w = kernel.spec.w[i][j];
            if w != 0.0 {
                total += w * pots[i].iter().zip(&hj).map(|(p, h)| p * h).sum::<f64>() * dv;
            }
        }
    }
    0.5 * total
}

/// Energy decomposition of a state.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub t: f64,
    pub charge: Vec<f64>,
    #[serde(rename = "E_kin")]
    pub e_kin: f64,
    #[serde(rename = "E_V")]
    pub e_v: f64,
    #[serde(rename = "E_loc")]
    pub e_loc: f64,
    #[serde(rename = "E_nonloc")]
    pub e_nonloc: f64,
    #[serde(rename = "F_A")]
    pub f_a: f64,
    #[serde(rename = "H1A_norm")]
    pub h1a_norm: f64,
}

impl Diagnostics {
    pub fn total_charge(&self) -> f64 {
        self.charge.iter().sum()
    }
}

/// Inputs of the exponent bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentParams {
    pub dim: usize,
    /// `V ∈ L^p + L^∞`; `∞` for bounded `V`.
    pub p: f64,
    /// Local Lipschitz exponent.
    pub alpha: f64,
    /// `(μ, q)` of the nonlocal term, if present.
    pub nonlocal: Option<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExponentClass {
    pub k: usize,
    pub r: f64,
    pub rho: f64,
    /// `1 − N(½ − 1/r)`.
    pub alpha: f64,
    /// `1 − N(½ − 1/ρ)`.
    pub beta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentTable {
    pub dim: usize,
    pub classes: Vec<ExponentClass>,
    /// `max_k β_k`.
    pub beta: f64,
}

impl ExponentTable {
    pub fn class(&self, k: usize) -> Option<&ExponentClass> {
        self.classes.iter().find(|c| c.k == k)
    }
}

/// Critical Sobolev exponent `2N/(N−2)` (infinite for `N ≤ 2`).
pub fn sobolev_critical(dim: usize) -> f64 {
    if dim <= 2 {
        f64::INFINITY
    } else {
        2.0 * dim as f64 / (dim as f64 - 2.0)
    }
}

fn holder_weight(dim: usize, r: f64) -> f64 {
    1.0 - dim as f64 * (0.5 - 1.0 / r)
}

fn check_range(name: &str, condition: &str, value: f64, dim: usize) -> Result<()> {
    let crit = sobolev_critical(dim);
    if !(value >= 2.0 - 1e-12 && value < crit && value.is_finite()) {
        return Err(Error::condition(
            condition,
            format!("{name} = {value} not in [2, {crit})"),
        ));
    }
    Ok(())
}

/// Computes `r_k, ρ_k, α_k, β_k` for the potential (`k=1`), local (`k=2`)
/// and nonlocal (`k=3`) terms.
pub fn exponent_table(params: &ExponentParams) -> Result<ExponentTable> {
    let dim = params.dim;
    let n = dim as f64;
    let p = params.p;
    if !(p >= 1.0 && p >= n / 2.0) {
        return Err(Error::condition("(V)", format!("p = {p} must satisfy p >= 1 and p >= N/2")));
    }
    let rho1 = if p.is_infinite() { 2.0 } else { 2.0 * p / (p - 1.0) };
    check_range("rho_1", "(V)", rho1, dim)?;
    let mut classes = vec![ExponentClass {
        k: 1,
        r: rho1,
        rho: rho1,
        alpha: holder_weight(dim, rho1),
        beta: holder_weight(dim, rho1),
    }];

    let alpha = params.alpha;
    if !(alpha >= 0.0) {
        return Err(Error::condition("(g)", format!("alpha = {alpha} must be >= 0")));
    }
    let r2 = alpha + 2.0;
    check_range("r_2", "(g)", r2, dim)?;
    classes.push(ExponentClass {
        k: 2,
        r: r2,
        rho: r2,
        alpha: holder_weight(dim, r2),
        beta: holder_weight(dim, r2),
    });

    if let Some((mu, q)) = params.nonlocal {
        if q <= 1.0f64.max(n / 4.0) {
            return Err(Error::condition("(W)", format!("q = {q} must exceed max(1, N/4)")));
        }
        let upper = mu_upper_bound(dim, q);
        if !(mu >= 2.0 && mu <= upper + 1e-12) {
            return Err(Error::condition(
                "(restrh-localwp)",
                format!("mu = {mu} out of range [2, {upper}]"),
            ));
        }
        let rho3 = 4.0 * q / (2.0 * q - 1.0);
        let crit = sobolev_critical(dim);
        let lower = if crit.is_infinite() {
            rho3
        } else {
            4.0 * q * crit / (crit * (2.0 * q - 1.0) - 4.0 * q * (mu - 2.0))
        };
        let denom = 6.0 * q - 1.0 - 2.0 * q * mu;
        let upper_r = if denom > 0.0 { 4.0 * q / denom } else { f64::INFINITY };
        let r3 = lower.max(2.0);
        if r3 > upper_r * (1.0 + 1e-12) {
            return Err(Error::condition(
                "(restrh-localwp)",
                format!("no admissible r_3: lower {r3} exceeds upper {upper_r}"),
            ));
        }
        check_range("rho_3", "(W)", rho3, dim)?;
        check_range("r_3", "(restrh-localwp)", r3, dim)?;
        classes.push(ExponentClass {
            k: 3,
            r: r3,
            rho: rho3,
            alpha: holder_weight(dim, r3),
            beta: holder_weight(dim, rho3),
        });
    }
    for c in &classes {
        for (name, v) in [("alpha", c.alpha), ("beta", c.beta)] {
            if !(v > 0.0 && v <= 1.0 + 1e-12) {
                return Err(Error::condition(
                    "(g)",
                    format!("{name}_{} = {v} not in (0, 1]", c.k),
                ));
            }
        }
    }
    let beta = classes.iter().map(|c| c.beta).fold(0.0, f64::max);
    Ok(ExponentTable { dim, classes, beta })
}
