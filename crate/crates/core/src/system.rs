//! A complete model: potentials, local and nonlocal nonlinearities, and the
//! solver options shared by every integrator.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::magnetic::{
    apply_la, kinetic_energy, yosida_apply, CgOptions, FreePropagator, PotentialSet,
    DEFAULT_KRYLOV_DIM,
};
use crate::nonlinear::{
    eval_local, eval_local_energy, eval_nonlocal, eval_nonlocal_energy, exponent_table,
    Diagnostics, ExponentParams, ExponentTable, LocalSpec, NonlocalKernel, NonlocalSpec,
};

#[derive(Clone, Debug)]
pub struct System {
    pub potentials: PotentialSet,
    pub local: LocalSpec,
    pub nonlocal: Option<NonlocalKernel>,
    pub cg: CgOptions,
    pub krylov_dim: usize,
}

impl System {
    pub fn new(potentials: PotentialSet, local: LocalSpec, nonlocal: Option<NonlocalSpec>) -> Result<Self> {
        let grid = potentials.grid().clone();
        local.validate(grid.dim())?;
        let nonlocal = match nonlocal {
            Some(spec) => {
                if spec.m() != local.m() {
                    return Err(Error::Shape(format!(
                        "nonlocal weights describe {} components, local spec {}",
                        spec.m(),
                        local.m()
                    )));
                }
                Some(NonlocalKernel::new(spec, grid)?)
            }
            None => None,
        };
        Ok(System {
            potentials,
            local,
            nonlocal,
            cg: CgOptions::default(),
            krylov_dim: DEFAULT_KRYLOV_DIM,
        })
    }

    /// No potentials, no nonlinearity.
    pub fn free(grid: Arc<Grid>, m: usize) -> Self {
        Self::new(PotentialSet::zero(grid), LocalSpec::none(m), None).expect("free system is valid")
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.potentials.grid()
    }

    pub fn m(&self) -> usize {
        self.local.m()
    }

    pub fn nonlocal_spec(&self) -> Option<&NonlocalSpec> {
        self.nonlocal.as_ref().map(|k| k.spec())
    }

    fn check(&self, field: &Field) -> Result<()> {
        if field.m() != self.m() {
            return Err(Error::Shape(format!(
                "field has {} components, system {}",
                field.m(),
                self.m()
            )));
        }
        if field.grid().spec() != self.grid().spec() {
            return Err(Error::Shape("field lives on a different grid".into()));
        }
        Ok(())
    }

    pub fn apply_la(&self, field: &Field) -> Field {
        apply_la(field, &self.potentials)
    }

    /// Pointwise real multiplier `Θ_j` with `g̃_j(Φ) = Θ_j Φ_j`.
    pub fn phase_density(&self, field: &Field) -> Vec<Vec<f64>> {
        let mut theta = self.local.densities(field);
        if let Some(k) = &self.nonlocal {
            for (t, d) in theta.iter_mut().zip(k.densities(field)) {
                for (ti, di) in t.iter_mut().zip(d) {
                    *ti += di;
                }
            }
        }
        for t in theta.iter_mut() {
            for (ti, v) in t.iter_mut().zip(&self.potentials.v) {
                *ti -= v;
            }
        }
        theta
    }

    /// `g̃(Φ) = −VΦ + f_local(Φ) + f_nonlocal(Φ)`.
    pub fn g_tilde(&self, field: &Field) -> Result<Field> {
        self.check(field)?;
        let v = &self.potentials.v;
        let mut out = eval_local(field, &self.local);
        if let Some(k) = &self.nonlocal {
            out = out.add(&eval_nonlocal(field, k));
        }
        for j in 0..field.m() {
            let src = field.component(j);
            for ((o, z), vi) in out.component_mut(j).iter_mut().zip(src).zip(v) {
                *o -= z * vi;
            }
        }
        Ok(out)
    }

    /// `F_A'(Φ) = L_AΦ − g̃(Φ)`.
    pub fn gradient(&self, field: &Field) -> Result<Field> {
        Ok(self.apply_la(field).sub(&self.g_tilde(field)?))
    }

    pub fn potential_energy(&self, field: &Field) -> f64 {
        let dv = field.grid().cell_volume();
        0.5 * field
            .components()
            .iter()
            .map(|c| c.iter().zip(&self.potentials.v).map(|(z, v)| v * z.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            * dv
    }

    /// `½∫V|Φ|² − s∫G − E_nonloc`.
    fn non_kinetic_energy(&self, field: &Field) -> f64 {
        let nonloc = self
            .nonlocal
            .as_ref()
            .map_or(0.0, |k| eval_nonlocal_energy(field, k));
        self.potential_energy(field) - eval_local_energy(field, &self.local) - nonloc
    }

    pub fn energy(&self, field: &Field) -> Result<Diagnostics> {
        self.check(field)?;
        let charge = field.charges();
        let e_kin = kinetic_energy(field, &self.potentials);
        let e_v = self.potential_energy(field);
        let e_loc = eval_local_energy(field, &self.local);
        let e_nonloc = self
            .nonlocal
            .as_ref()
            .map_or(0.0, |k| eval_nonlocal_energy(field, k));
        let mass: f64 = charge.iter().sum();
        Ok(Diagnostics {
            t: 0.0,
            charge,
            e_kin,
            e_v,
            e_loc,
            e_nonloc,
            f_a: e_kin + e_v - e_loc - e_nonloc,
            h1a_norm: (2.0 * e_kin + mass).sqrt(),
        })
    }

    pub fn yosida(&self, field: &Field, n: u64) -> Result<Field> {
        yosida_apply(field, n, &self.potentials, &self.cg)
    }

    /// `g̃_n(Φ) = J_n g̃(J_n Φ)`.
    pub fn g_tilde_regularized(&self, field: &Field, n: u64) -> Result<Field> {
        let inner = self.yosida(field, n)?;
        self.yosida(&self.g_tilde(&inner)?, n)
    }

    /// `F^n(Φ) = E_kin(Φ) + ½∫V|J_nΦ|² − s∫G(J_nΦ) − E_nonloc(J_nΦ)`,
    /// conserved by the regularized flow.
    pub fn regularized_energy(&self, field: &Field, n: u64) -> Result<f64> {
        self.check(field)?;
        let inner = self.yosida(field, n)?;
        Ok(kinetic_energy(field, &self.potentials) + self.non_kinetic_energy(&inner))
    }

    pub fn propagator(&self, dt: f64) -> FreePropagator<'_> {
        FreePropagator::new(&self.potentials, dt, self.krylov_dim)
    }

    /// Exponent bookkeeping for this system, with `V ∈ L^p + L^∞`.
    pub fn exponent_params(&self, p: f64) -> ExponentParams {
        let dim = self.grid().dim();
        ExponentParams {
            dim,
            p,
            alpha: self.local.lipschitz_exponent(),
            nonlocal: self.nonlocal_spec().map(|s| (s.mu, s.q(dim))),
        }
    }

    pub fn exponent_table(&self, p: f64) -> Result<ExponentTable> {
        exponent_table(&self.exponent_params(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, GridSpec, C64};
    use crate::nonlinear::Sign;
    use rand::{Rng, SeedableRng};

    fn smooth_random(g: &Arc<Grid>, m: usize, seed: u64, width: f64) -> Field {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..m)
            .map(|_| {
                let mut hat: Vec<C64> = (0..g.len())
                    .map(|idx| {
                        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                            * (-g.k_squared()[idx] / width).exp()
                    })
                    .collect();
                g.inverse(&mut hat);
                let scale = (g.len() as f64).sqrt();
                hat.into_iter().map(|z| z * scale).collect()
            })
            .collect();
        Field::from_components(g.clone(), data).unwrap()
    }

    fn full_system(g: &Arc<Grid>) -> System {
        let pot = PotentialSet::from_fns(
            g.clone(),
            |x| vec![0.3 * x[1].sin(), -0.2 * x[0].cos()],
            |x| 1.0 + 0.1 * (x[0] * x[0] + x[1] * x[1]).cos(),
        )
        .unwrap();
        let local = LocalSpec {
            a: vec![1.0, 0.5],
            beta: vec![vec![0.0, 0.3], vec![0.3, 0.0]],
            l: vec![2.0, 3.0],
            sign: Sign::Focusing,
        };
        let nl = NonlocalSpec {
            w: vec![vec![0.4, 0.1], vec![0.1, 0.2]],
            gamma: 1.0,
            r0: 0.5,
            mu: 2.2,
        };
        System::new(pot, local, Some(nl)).unwrap()
    }

    #[test]
    fn g_tilde_trivial_cases() {
        let g = make_grid(GridSpec::new(1, 32, 4.0)).unwrap();
        let pot = PotentialSet::from_fns(g.clone(), |_| vec![0.0], |_| 1.0).unwrap();
        let sys = System::new(pot, LocalSpec::none(1), None).unwrap();
        let f = smooth_random(&g, 1, 1, 2.0);
        let gt = sys.g_tilde(&f).unwrap();
        assert!(gt.add(&f).norm() < 1e-15);
        let zero = Field::zeros(g.clone(), 1);
        assert_eq!(sys.g_tilde(&zero).unwrap().norm(), 0.0);
    }

    #[test]
    fn gauge_identity_holds_pointwise() {
        let g = make_grid(GridSpec::new(2, 16, 4.0)).unwrap();
        let sys = full_system(&g);
        let f = smooth_random(&g, 2, 7, 2.0);
        let gt = sys.g_tilde(&f).unwrap();
        let scale = f.max_modulus().powi(2);
        for j in 0..2 {
            for (a, b) in gt.component(j).iter().zip(f.component(j)) {
                assert!((a * b.conj()).im.abs() <= 1e-12 * scale.max(1.0) * 10.0);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = make_grid(GridSpec::new(2, 16, 4.0)).unwrap();
        let sys = full_system(&g);
        let f = smooth_random(&g, 2, 11, 2.0);
        let d = smooth_random(&g, 2, 12, 2.0);
        let h = 1e-5;
        let e = |x: &Field| sys.energy(x).unwrap().f_a;
        let fd = (e(&f.add(&d.scaled(C64::new(h, 0.0)))) - e(&f.sub(&d.scaled(C64::new(h, 0.0))))) / (2.0 * h);
        let analytic = sys.gradient(&f).unwrap().real_inner(&d);
        assert!((fd - analytic).abs() <= 1e-6 * analytic.abs(), "{fd} vs {analytic}");
    }

    #[test]
    fn energy_of_constant_potential_state() {
        let g = make_grid(GridSpec::new(1, 64, 5.0)).unwrap();
        let v0 = 0.7;
        let pot = PotentialSet::from_fns(g.clone(), |_| vec![0.0], |_| v0).unwrap();
        let sys = System::new(pot, LocalSpec::none(1), None).unwrap();
        let mut f = smooth_random(&g, 1, 3, 2.0);
        f.scale(C64::new(1.0 / f.norm(), 0.0));
        let d = sys.energy(&f).unwrap();
        assert!((d.f_a - (d.e_kin + v0 / 2.0)).abs() < 1e-13);
        let zero = sys.energy(&Field::zeros(g, 1)).unwrap();
        assert_eq!(zero.f_a, 0.0);
        assert_eq!(zero.h1a_norm, 0.0);
    }

    #[test]
    fn regularized_nonlinearity_properties() {
        let g = make_grid(GridSpec::new(1, 64, 6.0)).unwrap();
        let pot = PotentialSet::from_fns(g.clone(), |x| vec![0.4 * x[0].sin()], |_| 0.5).unwrap();
        let sys = System::new(pot, LocalSpec::power(1, 2.0, Sign::Focusing), None).unwrap();
        let f = smooth_random(&g, 1, 5, 1.0);
        let gn = sys.g_tilde_regularized(&f, 3).unwrap();
        let orth = gn.real_inner(&f.scaled(C64::new(0.0, 1.0)));
        assert!(orth.abs() <= 1e-9 * f.norm_sq(), "{orth}");

        let exact = sys.g_tilde(&f).unwrap();
        let errs: Vec<f64> = [1u64, 10, 100]
            .iter()
            .map(|&n| sys.g_tilde_regularized(&f, n).unwrap().distance(&exact))
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
        assert_eq!(sys.g_tilde_regularized(&Field::zeros(g, 1), 5).unwrap().norm(), 0.0);
    }

    #[test]
    fn rejects_mismatched_fields() {
        let g = make_grid(GridSpec::new(1, 16, 2.0)).unwrap();
        let sys = System::free(g.clone(), 2);
        assert!(sys.g_tilde(&Field::zeros(g, 1)).is_err());
        let other = make_grid(GridSpec::new(1, 32, 2.0)).unwrap();
        assert!(sys.energy(&Field::zeros(other, 2)).is_err());
    }
}
