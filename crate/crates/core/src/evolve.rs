//! Time evolution: Strang splitting, the Yosida-regularized Duhamel–Picard
//! construction, blow-up detection, the global-existence gate and the
//! energy-bound audit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, C64};
use crate::magnetic::FreePropagator;
use crate::nonlinear::{gn_sigma, hls_kinetic_power, hls_mass_power, Diagnostics, LocalSpec, NonlocalSpec, Sign};
use crate::system::System;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Integrator {
    Strang,
    PicardYosida {
        n: u64,
        slab_steps: usize,
        picard_tol: f64,
        picard_max_iter: usize,
    },
}

impl Default for Integrator {
    fn default() -> Self {
        Integrator::Strang
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub integrator: Integrator,
    /// `H¹_A` norm above which a growing solution counts as blowing up.
    pub blowup_threshold: f64,
    /// Keep a field snapshot every this many steps (0 disables).
    #[serde(default)]
    pub snapshot_stride: usize,
    #[serde(default = "one")]
    pub diagnostics_stride: usize,
}

fn one() -> usize {
    1
}

impl EvolveConfig {
    pub fn strang(dt: f64, t_end: f64) -> Self {
        EvolveConfig {
            dt,
            t_end,
            integrator: Integrator::Strang,
            blowup_threshold: f64::INFINITY,
            snapshot_stride: 0,
            diagnostics_stride: 1,
        }
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end = {} must be >= 0", self.t_end)));
        }
        if self.diagnostics_stride == 0 {
            return Err(Error::Config("diagnostics_stride must be >= 1".into()));
        }
        if !(self.blowup_threshold > 0.0) {
            return Err(Error::Config("blowup_threshold must be positive".into()));
        }
        if let Integrator::PicardYosida {
            n,
            slab_steps,
            picard_tol,
            picard_max_iter,
        } = self.integrator
        {
            if n == 0 || slab_steps == 0 || picard_max_iter == 0 {
                return Err(Error::Config("picard n, slab_steps and picard_max_iter must be >= 1".into()));
            }
            if !(picard_tol > 0.0 && picard_tol <= 1e-4) {
                return Err(Error::Config(format!("picard_tol = {picard_tol} must lie in (0, 1e-4]")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    Completed,
    BlowupDetected { t_star: f64 },
    SolverFailure { t: f64, message: String },
}

/// Outcome of one Picard slab.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlabReport {
    pub t_start: f64,
    pub steps: usize,
    pub iterations: usize,
    /// `max_i ‖u^{(k+1)}(t_i) − u^{(k)}(t_i)‖₂` per iteration.
    pub distances: Vec<f64>,
    /// Regularized energy at the slab start and end.
    pub energy_start: f64,
    pub energy_end: f64,
}

impl SlabReport {
    pub fn ratios(&self) -> Vec<f64> {
        self.distances.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub diagnostics: Vec<Diagnostics>,
    pub status: Status,
    pub snapshots: Vec<(f64, Field)>,
    pub slabs: Vec<SlabReport>,
    pub final_field: Field,
}

impl TrajectoryRecord {
    /// Largest relative per-component charge change over the record.
    pub fn max_charge_drift(&self) -> f64 {
        let first = &self.diagnostics[0].charge;
        self.diagnostics
            .iter()
            .flat_map(|d| {
                d.charge
                    .iter()
                    .zip(first)
                    .map(|(c, c0)| if *c0 == 0.0 { c.abs() } else { ((c - c0) / c0).abs() })
            })
            .fold(0.0, f64::max)
    }

    /// `|F_A(end) − F_A(start)|`.
    pub fn energy_drift(&self) -> f64 {
        let first = self.diagnostics.first().map_or(0.0, |d| d.f_a);
        let last = self.diagnostics.last().map_or(0.0, |d| d.f_a);
        (last - first).abs()
    }

    pub fn max_h1a(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.h1a_norm).fold(0.0, f64::max)
    }
}

/// Cached Strang stepper for a fixed `dt`.
pub struct StrangStepper<'a> {
    system: &'a System,
    dt: f64,
    free: FreePropagator<'a>,
}

impl<'a> StrangStepper<'a> {
    pub fn new(system: &'a System, dt: f64) -> Self {
        StrangStepper {
            system,
            dt,
            free: system.propagator(dt),
        }
    }

    fn rotate(&self, field: &Field, tau: f64) -> Field {
        let theta = self.system.phase_density(field);
        field.map_components(|j, c| {
            c.iter()
                .zip(&theta[j])
                .map(|(z, th)| z * C64::from_polar(1.0, tau * th))
                .collect()
        })
    }

    pub fn step(&self, field: &Field) -> Result<Field> {
        let half = self.rotate(field, 0.5 * self.dt);
        let moved = self.free.apply(&half)?;
        Ok(self.rotate(&moved, 0.5 * self.dt))
    }
}

/// One Strang step: half nonlinear phase rotation, full free flight, half rotation.
pub fn strang_step(system: &System, field: &Field, dt: f64) -> Result<Field> {
    StrangStepper::new(system, dt).step(field)
}

/// Consecutive iterations with ratio at least this count as non-contracting.
pub const NON_CONTRACTION_RATIO: f64 = 0.95;
const NON_CONTRACTION_RUN: usize = 3;

/// Picard iterate of the regularized Duhamel formula over one slab.
/// Returns the fields at `t_1..t_steps` and the slab report.
pub fn picard_yosida_slab(
    system: &System,
    phi0: &Field,
    dt: f64,
    steps: usize,
    n: u64,
    picard_tol: f64,
    max_iter: usize,
) -> Result<(Vec<Field>, SlabReport)> {
    if steps == 0 {
        return Err(Error::InvalidArgument("slab needs at least one step".into()));
    }
    let free = system.propagator(dt);
    let mut base = Vec::with_capacity(steps + 1);
    base.push(phi0.clone());
    for i in 0..steps {
        base.push(free.apply(&base[i])?);
    }
    let mut u = base.clone();
    let mut distances = Vec::new();
    let mut run = 0;
    let half = C64::new(0.5 * dt, 0.0);
    let i_unit = C64::new(0.0, 1.0);
    for iter in 1..=max_iter {
        let g: Vec<Field> = u
            .iter()
            .map(|ui| system.g_tilde_regularized(ui, n))
            .collect::<Result<_>>()?;
        let mut next = Vec::with_capacity(steps + 1);
        next.push(phi0.clone());
        let mut s = Field::zeros(phi0.grid().clone(), phi0.m());
        let mut dist = 0.0f64;
        for i in 1..=steps {
            let mut acc = free.apply(&s.add(&g[i - 1].scaled(half)))?;
            acc.axpy(half, &g[i]);
            s = acc;
            let mut ui = base[i].clone();
            ui.axpy(i_unit, &s);
            if !ui.is_finite() {
                return Err(Error::SlabTooLong {
                    slab_length: dt * steps as f64,
                    ratios: vec![f64::INFINITY],
                });
            }
            dist = dist.max(ui.distance(&u[i]));
            next.push(ui);
        }
        u = next;
        distances.push(dist);
        if dist <= picard_tol {
            let energy_start = system.regularized_energy(phi0, n)?;
            let energy_end = system.regularized_energy(&u[steps], n)?;
            u.remove(0);
            return Ok((
                u,
                SlabReport {
                    t_start: 0.0,
                    steps,
                    iterations: iter,
                    distances,
                    energy_start,
                    energy_end,
                },
            ));
        }
        if let [.., prev, last] = distances[..] {
            if last >= NON_CONTRACTION_RATIO * prev {
                run += 1;
            } else {
                run = 0;
            }
            if run >= NON_CONTRACTION_RUN {
                let k = distances.len();
                let ratios = distances[k - NON_CONTRACTION_RUN - 1..]
                    .windows(2)
                    .map(|w| w[1] / w[0])
                    .collect();
                return Err(Error::SlabTooLong {
                    slab_length: dt * steps as f64,
                    ratios,
                });
            }
        }
    }
    Err(Error::PicardExhausted {
        iterations: max_iter,
        distance: *distances.last().unwrap_or(&f64::INFINITY),
        tol: picard_tol,
    })
}

/// Threshold crossing with a strictly increasing trend over the last three
/// samples. Returns the first crossing time.
pub fn detect_blowup(times: &[f64], norms: &[f64], threshold: f64) -> Option<f64> {
    let k = norms.len();
    if k < 3 || norms[k - 1] <= threshold {
        return None;
    }
    if !(norms[k - 3] < norms[k - 2] && norms[k - 2] < norms[k - 1]) {
        return None;
    }
    let first = norms.iter().position(|&h| h > threshold)?;
    Some(times[first])
}

/// A recorded point of a trajectory, as seen by an observer.
pub struct Sample<'a> {
    pub step: usize,
    pub diagnostics: &'a Diagnostics,
    pub field: &'a Field,
    pub snapshot: bool,
}

struct Recorder<'o> {
    cfg: EvolveConfig,
    times: Vec<f64>,
    diagnostics: Vec<Diagnostics>,
    norms: Vec<f64>,
    snapshots: Vec<(f64, Field)>,
    observer: &'o mut dyn FnMut(&Sample),
}

impl Recorder<'_> {
    /// Records step `step` if due; returns a blow-up time when detected.
    fn visit(&mut self, system: &System, step: usize, field: &Field, last: bool) -> Result<Option<f64>> {
        let t = step as f64 * self.cfg.dt;
        let snap = self.cfg.snapshot_stride > 0 && step % self.cfg.snapshot_stride == 0;
        let diag_due = step % self.cfg.diagnostics_stride == 0 || last;
        if !(diag_due || snap) {
            return Ok(None);
        }
        let mut d = system.energy(field)?;
        d.t = t;
        if snap {
            self.snapshots.push((t, field.clone()));
        }
        (self.observer)(&Sample {
            step,
            diagnostics: &d,
            field,
            snapshot: snap,
        });
        if !diag_due {
            return Ok(None);
        }
        self.times.push(t);
        self.norms.push(d.h1a_norm);
        self.diagnostics.push(d);
        Ok(detect_blowup(&self.times, &self.norms, self.cfg.blowup_threshold))
    }

    fn finish(self, status: Status, final_field: Field, slabs: Vec<SlabReport>) -> TrajectoryRecord {
        TrajectoryRecord {
            times: self.times,
            diagnostics: self.diagnostics,
            status,
            snapshots: self.snapshots,
            slabs,
            final_field,
        }
    }
}

pub fn evolve(system: &System, phi0: &Field, cfg: &EvolveConfig) -> Result<TrajectoryRecord> {
    evolve_observed(system, phi0, cfg, &mut |_| {})
}

/// Runs to `t_end` or until blow-up or failure, calling `observer` on every
/// recorded sample. Errors only for invalid input; run-time failures end up
/// in the record's status.
pub fn evolve_observed(
    system: &System,
    phi0: &Field,
    cfg: &EvolveConfig,
    observer: &mut dyn FnMut(&Sample),
) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    phi0.check_finite()?;
    let total = cfg.steps();
    let mut rec = Recorder {
        cfg: cfg.clone(),
        times: Vec::new(),
        diagnostics: Vec::new(),
        norms: Vec::new(),
        snapshots: Vec::new(),
        observer,
    };
    let mut field = phi0.clone();
    let mut slabs = Vec::new();
    if let Some(t_star) = rec.visit(system, 0, &field, total == 0)? {
        return Ok(rec.finish(Status::BlowupDetected { t_star }, field, slabs));
    }
    let failure = |step: usize, e: &dyn std::fmt::Display| Status::SolverFailure {
        t: step as f64 * cfg.dt,
        message: e.to_string(),
    };
    match cfg.integrator {
        Integrator::Strang => {
            let stepper = StrangStepper::new(system, cfg.dt);
            for step in 1..=total {
                field = match stepper.step(&field) {
                    Ok(f) if f.is_finite() => f,
                    Ok(_) => {
                        let status = failure(step, &"non-finite field");
                        return Ok(rec.finish(status, field, slabs));
                    }
                    Err(e) => return Ok(rec.finish(failure(step, &e), field, slabs)),
                };
                match rec.visit(system, step, &field, step == total) {
                    Ok(Some(t_star)) => return Ok(rec.finish(Status::BlowupDetected { t_star }, field, slabs)),
                    Ok(None) => {}
                    Err(e) => return Ok(rec.finish(failure(step, &e), field, slabs)),
                }
            }
        }
        Integrator::PicardYosida {
            n,
            slab_steps,
            picard_tol,
            picard_max_iter,
        } => {
            let mut slab = slab_steps;
            let mut step = 0;
            while step < total {
                let k = slab.min(total - step);
                match picard_yosida_slab(system, &field, cfg.dt, k, n, picard_tol, picard_max_iter) {
                    Ok((fields, mut report)) => {
                        report.t_start = step as f64 * cfg.dt;
                        slabs.push(report);
                        for f in fields {
                            step += 1;
                            field = f;
                            match rec.visit(system, step, &field, step == total) {
                                Ok(Some(t_star)) => {
                                    return Ok(rec.finish(Status::BlowupDetected { t_star }, field, slabs))
                                }
                                Ok(None) => {}
                                Err(e) => return Ok(rec.finish(failure(step, &e), field, slabs)),
                            }
                        }
                    }
                    Err(Error::SlabTooLong { .. }) if k > 1 => slab = k / 2,
                    Err(e) => return Ok(rec.finish(failure(step, &e), field, slabs)),
                }
            }
        }
    }
    Ok(rec.finish(Status::Completed, field, slabs))
}

/// Largest `‖Φ(t) − Φ(s)‖₂ / |t − s|^{1/2}` over snapshot pairs with `t ≠ s`.
pub fn holder_half_check(snapshots: &[(f64, Field)]) -> Result<f64> {
    if snapshots.len() < 2 {
        return Err(Error::InvalidArgument("need at least two snapshots".into()));
    }
    let mut worst = 0.0f64;
    for (i, (t, a)) in snapshots.iter().enumerate() {
        for (s, b) in &snapshots[i + 1..] {
            if t == s {
                continue;
            }
            worst = worst.max(a.distance(b) / (t - s).abs().sqrt());
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GateCondition {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GateReport {
    pub conditions: Vec<GateCondition>,
    pub global: bool,
}

impl GateReport {
    pub fn violated(&self) -> impl Iterator<Item = &GateCondition> {
        self.conditions.iter().filter(|c| !c.holds)
    }

    pub fn verdict(&self) -> String {
        if self.global {
            "global existence guaranteed by Theorem (solGlobal)".to_string()
        } else {
            let names: Vec<String> = self
                .violated()
                .map(|c| format!("{} ({})", c.name, c.detail))
                .collect();
            format!("Theorem (solGlobal) conditions violated: {}", names.join("; "))
        }
    }
}

/// Upper bound on `μ` for global existence, `2 − 1/q + 2/N`.
pub fn global_mu_bound(dim: usize, q: f64) -> f64 {
    2.0 - 1.0 / q + 2.0 / dim as f64
}

/// Arithmetic check of the global-existence conditions.
pub fn global_existence_gate(local: &LocalSpec, nonlocal: Option<&NonlocalSpec>, inf_v: f64, dim: usize) -> GateReport {
    let n = dim as f64;
    let mut conditions = Vec::new();
    let lmax = local.l.iter().copied().fold(0.0, f64::max);
    let lmin = local.l.iter().copied().fold(f64::INFINITY, f64::min);
    conditions.push(GateCondition {
        name: "0 < l_j < 4/N".into(),
        holds: lmin > 0.0 && lmax < 4.0 / n,
        detail: format!("max l_j = {lmax}, 4/N = {}", 4.0 / n),
    });
    if let Some(spec) = nonlocal {
        let q = spec.q(dim);
        let bound = global_mu_bound(dim, q);
        conditions.push(GateCondition {
            name: "mu < 2 - 1/q + 2/N".into(),
            holds: spec.mu < bound,
            detail: format!("mu = {}, bound = {bound}", spec.mu),
        });
    }
    conditions.push(GateCondition {
        name: "inf V > 0".into(),
        holds: inf_v > 0.0,
        detail: format!("inf V = {inf_v}"),
    });
    let k = local.growth_constant();
    conditions.push(GateCondition {
        name: "(G) growth bound".into(),
        holds: k.is_some(),
        detail: match k {
            Some(k) => format!("K = {k}"),
            None => "coupled components need l_j >= 2".into(),
        },
    });
    let global = conditions.iter().all(|c| c.holds);
    GateReport { conditions, global }
}

/// Measured constants entering the energy bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditConstants {
    /// Gagliardo–Nirenberg constant per component.
    pub gn: Vec<f64>,
    /// `c` with `E_nonloc ≤ c Σ_ij w_ij m_i^e m_j^e ‖Φ‖_{H¹_A}^κ`.
    pub hls: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`.
    pub margin: f64,
    pub epsilon: f64,
    /// Power of `‖Φ‖_{H¹_A}` carried by the nonlocal term.
    pub kappa: f64,
    pub kappa_subquadratic: bool,
}

/// Evaluates both sides of
///
/// ```text
/// (c_V − 2K Σ_j (N l_j/4) ε^{4/(N l_j)}) ‖Φ‖²
///     ≤ 2F₀ + 2K·mass + 2K Σ_j (1/q_j)(c_j^{l_j+2} m_j^{(1−σ_j)(l_j+2)/2} / ε)^{q_j} + C₃ ‖Φ‖^κ
/// ```
///
/// with `‖Φ‖ = ‖Φ‖_{H¹_A}`, `c_V = min(1, inf V)`, `1/p_j + 1/q_j = 1`,
/// `p_j = 4/(N l_j)`, and `ε` chosen so the prefactor equals `c_V/2`.
pub fn energy_bound_audit(
    diag: &Diagnostics,
    f0: f64,
    local: &LocalSpec,
    nonlocal: Option<&NonlocalSpec>,
    inf_v: f64,
    dim: usize,
    constants: &AuditConstants,
) -> AuditReport {
    let n = dim as f64;
    let c_v = inf_v.min(1.0);
    let x = diag.h1a_norm;
    let mass: f64 = diag.charge.iter().sum();
    let focusing = local.sign == Sign::Focusing && !local.is_trivial();
    let k = if focusing {
        local.growth_constant().unwrap_or(f64::INFINITY)
    } else {
        0.0
    };
    let m = local.m();
    let eps_sum = |eps: f64| -> f64 {
        (0..m)
            .map(|j| {
                let l = local.l[j];
                n * l / 4.0 * eps.powf(4.0 / (n * l))
            })
            .sum::<f64>()
    };
    let epsilon = if k > 0.0 {
        let target = c_v / (4.0 * k);
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while eps_sum(hi) < target {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if eps_sum(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    } else {
        1.0
    };
    let prefactor = c_v - 2.0 * k * eps_sum(epsilon);
    let lhs = prefactor * x * x;

    let mut rhs = 2.0 * f0;
    if k > 0.0 {
        rhs += 2.0 * k * mass;
        for j in 0..m {
            let l = local.l[j];
            let p = 4.0 / (n * l);
            let q = p / (p - 1.0);
            let sigma = gn_sigma(dim, l);
            let a = constants.gn[j].powf(l + 2.0) * diag.charge[j].powf((1.0 - sigma) * (l + 2.0) / 2.0);
            rhs += 2.0 * k / q * (a / epsilon).powf(q);
        }
    }
    let mut kappa = 0.0;
    if let Some(spec) = nonlocal {
        let q = spec.q(dim);
        kappa = hls_kinetic_power(dim, q, spec.mu);
        let e = hls_mass_power(dim, q, spec.mu);
        let mut weights = 0.0;
        for i in 0..m {
            for j in 0..m {
                weights += spec.w[i][j] * diag.charge[i].powf(e) * diag.charge[j].powf(e);
            }
        }
        rhs += 2.0 * constants.hls * weights * x.powf(kappa);
    }
    AuditReport {
        t: diag.t,
        lhs,
        rhs,
        margin: rhs - lhs,
        epsilon,
        kappa,
        kappa_subquadratic: kappa < 2.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, GridSpec};
    use crate::magnetic::{propagate_free, PotentialSet};

    fn gaussian(dim: usize, n: usize, l: f64, amp: f64, width: f64, m: usize) -> Field {
        let g = make_grid(GridSpec::new(dim, n, l)).unwrap();
        Field::from_fn(g, m, |j, x| {
            let r2: f64 = x.iter().map(|c| c * c).sum();
            C64::from_polar(amp * (-r2 / (2.0 * width * width)).exp(), 0.3 * x[0] + j as f64)
        })
    }

    #[test]
    fn strang_without_nonlinearity_is_free_flight() {
        let f = gaussian(1, 128, 10.0, 1.0, 1.0, 1);
        let sys = System::free(f.grid().clone(), 1);
        let a = strang_step(&sys, &f, 0.3).unwrap();
        let b = propagate_free(&f, 0.3, &sys.potentials, 30).unwrap();
        assert!(a.distance(&b) < 1e-14);
    }

    #[test]
    fn strang_is_reversible_and_charge_preserving() {
        let f = gaussian(1, 128, 10.0, 1.2, 1.0, 2);
        let pot = PotentialSet::from_fns(f.grid().clone(), |x| vec![0.2 * x[0].sin()], |x| 0.5 + 0.1 * x[0].cos()).unwrap();
        let local = LocalSpec {
            a: vec![1.0, 1.0],
            beta: vec![vec![0.0, 0.5], vec![0.5, 0.0]],
            l: vec![2.0, 2.0],
            sign: Sign::Focusing,
        };
        let sys = System::new(pot, local, None).unwrap();
        let fwd = StrangStepper::new(&sys, 1e-2);
        let back = StrangStepper::new(&sys, -1e-2);
        let mut u = f.clone();
        for _ in 0..50 {
            u = fwd.step(&u).unwrap();
        }
        let c0 = f.charges();
        for (c, c0) in u.charges().iter().zip(&c0) {
            assert!(((c - c0) / c0).abs() < 1e-12);
        }
        for _ in 0..50 {
            u = back.step(&u).unwrap();
        }
        assert!(u.distance(&f) < 1e-6);
    }

    #[test]
    fn picard_free_slab_matches_free_flow() {
        let f = gaussian(1, 64, 8.0, 1.0, 1.0, 1);
        let sys = System::free(f.grid().clone(), 1);
        let (fields, report) = picard_yosida_slab(&sys, &f, 0.01, 5, 10, 1e-10, 20).unwrap();
        assert!(report.iterations <= 2);
        let exact = propagate_free(&f, 0.05, &sys.potentials, 30).unwrap();
        assert!(fields[4].distance(&exact) < 1e-10);
    }

    #[test]
    fn picard_contracts_on_short_slab() {
        let f = gaussian(1, 64, 8.0, 0.8, 1.0, 1);
        let sys = System::new(
            PotentialSet::zero(f.grid().clone()),
            LocalSpec::power(1, 2.0, Sign::Focusing),
            None,
        )
        .unwrap();
        let (_, report) = picard_yosida_slab(&sys, &f, 0.005, 10, 100, 1e-12, 50).unwrap();
        let ratios = report.ratios();
        assert!(ratios.len() >= 2);
        assert!(ratios.iter().all(|r| *r < 0.9), "{ratios:?}");
        // The regularized energy drifts only through the trapezoid rule, at second order.
        let drift = (report.energy_end - report.energy_start).abs();
        let (_, fine) = picard_yosida_slab(&sys, &f, 0.0025, 20, 100, 1e-12, 50).unwrap();
        let fine_drift = (fine.energy_end - fine.energy_start).abs();
        assert!(drift < 1e-7);
        assert!((drift / fine_drift - 4.0).abs() < 0.5, "{drift} {fine_drift}");
    }

    #[test]
    fn picard_reports_non_contraction() {
        let f = gaussian(1, 64, 8.0, 6.0, 1.0, 1);
        let sys = System::new(
            PotentialSet::zero(f.grid().clone()),
            LocalSpec::power(1, 4.0, Sign::Focusing),
            None,
        )
        .unwrap();
        let err = picard_yosida_slab(&sys, &f, 0.05, 40, 100, 1e-10, 200).unwrap_err();
        assert!(matches!(err, Error::SlabTooLong { .. }), "{err}");
    }

    #[test]
    fn blowup_detector_on_manufactured_sequences() {
        let times = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(detect_blowup(&times, &[1.0, 2.0, 5.0, 8.0, 12.0], 4.0), Some(2.0));
        assert_eq!(detect_blowup(&times, &[1.0, 2.0, 5.0, 4.5, 12.0], 4.0), None);
        assert_eq!(detect_blowup(&times[..2], &[5.0, 6.0], 4.0), None);
        assert_eq!(detect_blowup(&times, &[1.0, 1.1, 1.2, 1.3, 1.4], 4.0), None);
    }

    #[test]
    fn free_gaussian_run_conserves_charge() {
        let f = gaussian(1, 128, 12.0, 1.0, 1.0, 1);
        let sys = System::free(f.grid().clone(), 1);
        let rec = evolve(&sys, &f, &EvolveConfig::strang(0.01, 1.0)).unwrap();
        assert_eq!(rec.status, Status::Completed);
        assert!(rec.max_charge_drift() < 1e-9);
        assert_eq!(rec.times.len(), 101);
        assert!(rec.times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn runs_are_deterministic() {
        let f = gaussian(1, 64, 8.0, 1.0, 1.0, 1);
        let sys = System::new(
            PotentialSet::zero(f.grid().clone()),
            LocalSpec::power(1, 2.0, Sign::Defocusing),
            None,
        )
        .unwrap();
        let cfg = EvolveConfig::strang(0.01, 0.5);
        let a = evolve(&sys, &f, &cfg).unwrap();
        let b = evolve(&sys, &f, &cfg).unwrap();
        assert_eq!(a.diagnostics, b.diagnostics);
        assert_eq!(a.final_field.components(), b.final_field.components());
    }

    #[test]
    fn holder_constant_of_phase_rotation() {
        let f = gaussian(1, 32, 5.0, 1.0, 1.0, 1);
        let lambda: f64 = 0.8;
        let snaps: Vec<(f64, Field)> = (0..6)
            .map(|k| {
                let t = 0.1 * k as f64;
                (t, f.scaled(C64::from_polar(1.0, lambda * t)))
            })
            .collect();
        let worst = holder_half_check(&snaps).unwrap();
        let mut expect = 0.0f64;
        for (i, (t, _)) in snaps.iter().enumerate() {
            for (s, _) in &snaps[i + 1..] {
                let dt = s - t;
                expect = expect.max(2.0 * (lambda * dt / 2.0).sin().abs() * f.norm() / dt.sqrt());
            }
        }
        assert!((worst - expect).abs() < 1e-12);
        let mut dup = snaps.clone();
        dup.push(snaps[0].clone());
        assert_eq!(holder_half_check(&dup).unwrap(), worst);
        assert!(holder_half_check(&snaps[..1]).is_err());
    }

    #[test]
    fn gate_arithmetic() {
        assert!((global_mu_bound(3, 2.0) - 13.0 / 6.0).abs() < 1e-15);
        assert!((global_mu_bound(2, 3.0) - 8.0 / 3.0).abs() < 1e-15);
        let local = LocalSpec::power(1, 1.9, Sign::Focusing);
        let nl = NonlocalSpec {
            w: vec![vec![1.0]],
            gamma: 2.0 / 3.0,
            r0: 0.0,
            mu: 2.0,
        };
        let ok = global_existence_gate(&local, Some(&nl), 0.5, 2);
        assert!(ok.global, "{}", ok.verdict());
        let bad = global_existence_gate(&local, Some(&nl), 0.0, 2);
        assert!(!bad.global);
        assert_eq!(bad.violated().map(|c| c.name.as_str()).collect::<Vec<_>>(), vec!["inf V > 0"]);
        assert!(bad.verdict().contains("Theorem (solGlobal)"));
        let critical = global_existence_gate(&LocalSpec::power(1, 2.0, Sign::Focusing), None, 1.0, 2);
        assert!(!critical.global);
    }

    #[test]
    fn audit_exponent_and_zero_field() {
        let local = LocalSpec::power(1, 1.0, Sign::Focusing);
        let nl = NonlocalSpec {
            w: vec![vec![1.0]],
            gamma: 1.5,
            r0: 0.0,
            mu: 2.0,
        };
        let zero = Diagnostics {
            charge: vec![0.0],
            ..Diagnostics::default()
        };
        let consts = AuditConstants { gn: vec![1.0], hls: 1.0 };
        let r = energy_bound_audit(&zero, 0.0, &local, Some(&nl), 1.0, 3, &consts);
        assert!((r.kappa - 1.5).abs() < 1e-15);
        assert!(r.kappa_subquadratic);
        assert_eq!(r.lhs, 0.0);
        assert!(r.margin >= 0.0);
    }
}
