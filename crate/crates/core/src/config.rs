//! TOML run configuration.
//!
//! ```toml
//! [grid]
//! dim = 1
//! n_axis = 256
//! half_width = 20.0
//!
//! [potentials]
//! a = { kind = "zero" }
//! v = { kind = "constant", value = 1.0 }
//!
//! [local]
//! a = [1.0]
//! beta = [[0.0]]
//! l = [2.0]
//! sign = "focusing"
//!
//! [initial]
//! kind = "gaussian"
//! amplitude = [1.0]
//! width = 1.0
//!
//! [evolve]
//! dt = 1e-3
//! t_end = 1.0
//! blowup_threshold = 100.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::EvolveConfig;
use crate::grid::{make_grid, Field, GridSpec, C64};
use crate::groundstate::{gaussian_guess, GroundStateConfig, InitialGuess};
use crate::magnetic::{build_potentials, ScalarPotentialFamily, VectorPotentialFamily};
use crate::nonlinear::{LocalSpec, NonlocalSpec};
use crate::snapshot;
use crate::system::System;
use crate::verify::{DecayConfig, VerifyConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialsConfig {
    #[serde(default)]
    pub a: VectorPotentialFamily,
    #[serde(default)]
    pub v: ScalarPotentialFamily,
    /// `V ∈ L^p + L^∞`; bounded potentials use the default `inf`.
    #[serde(default = "infinite")]
    pub p: f64,
}

fn infinite() -> f64 {
    f64::INFINITY
}

impl Default for PotentialsConfig {
    fn default() -> Self {
        PotentialsConfig {
            a: VectorPotentialFamily::default(),
            v: ScalarPotentialFamily::default(),
            p: infinite(),
        }
    }
}

/// Initial data of an evolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// `a_j exp(−|x − c|²/(2w²) + i k·x)` on component `j`.
    Gaussian {
        amplitude: Vec<f64>,
        width: f64,
        #[serde(default)]
        center: Vec<f64>,
        #[serde(default)]
        momentum: Vec<f64>,
    },
    /// A snapshot written by this crate.
    File { path: PathBuf },
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::Gaussian {
            amplitude: vec![1.0],
            width: 1.0,
            center: Vec::new(),
            momentum: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSpec,
    #[serde(default)]
    pub potentials: PotentialsConfig,
    pub local: LocalSpec,
    pub nonlocal: Option<NonlocalSpec>,
    #[serde(default)]
    pub initial: InitialSpec,
    pub evolve: Option<EvolveConfig>,
    pub groundstate: Option<GroundStateConfig>,
    pub verify: Option<VerifyConfig>,
    pub decay: Option<DecayConfig>,
}

fn padded(v: &[f64], dim: usize, what: &str) -> Result<[f64; 3]> {
    let mut out = [0.0; 3];
    match v.len() {
        0 => {}
        n if n == dim => out[..dim].copy_from_slice(v),
        n => return Err(Error::Config(format!("initial {what} has {n} entries, grid has N = {dim}"))),
    }
    Ok(out)
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Samples the potentials and validates every spec against the grid.
    pub fn build_system(&self) -> Result<System> {
        let grid = make_grid(self.grid.clone())?;
        let pot = build_potentials(grid, &self.potentials.a, &self.potentials.v)?;
        System::new(pot, self.local.clone(), self.nonlocal.clone())
    }

    /// Checks the exponent bookkeeping for the configured system.
    pub fn validate(&self, system: &System) -> Result<()> {
        system.exponent_table(self.potentials.p).map(|_| ())
    }

    pub fn initial_field(&self, system: &System) -> Result<Field> {
        let grid = system.grid().clone();
        let m = system.m();
        match &self.initial {
            InitialSpec::Gaussian {
                amplitude,
                width,
                center,
                momentum,
            } => {
                if amplitude.len() != m {
                    return Err(Error::Config(format!(
                        "initial amplitude has {} entries for {m} components",
                        amplitude.len()
                    )));
                }
                if !(*width > 0.0) {
                    return Err(Error::Config("initial width must be positive".into()));
                }
                let dim = grid.dim();
                let c = padded(center, dim, "center")?;
                let k = padded(momentum, dim, "momentum")?;
                Field::from_components(
                    grid.clone(),
                    (0..m)
                        .map(|j| {
                            (0..grid.len())
                                .map(|idx| {
                                    let x = grid.position(idx);
                                    let r2: f64 = (0..dim).map(|d| (x[d] - c[d]).powi(2)).sum();
                                    let phase: f64 = (0..dim).map(|d| k[d] * x[d]).sum();
                                    C64::from_polar(amplitude[j] * (-r2 / (2.0 * width * width)).exp(), phase)
                                })
                                .collect()
                        })
                        .collect(),
                )
            }
            InitialSpec::File { path } => {
                let f = snapshot::load(path)?;
                if f.grid().spec() != grid.spec() {
                    return Err(Error::Config(format!(
                        "{}: snapshot grid does not match the configured grid",
                        path.display()
                    )));
                }
                if f.m() != m {
                    return Err(Error::Config(format!("snapshot has {} components, system {m}", f.m())));
                }
                Field::from_components(grid, f.into_components())
            }
        }
    }

    /// Initial guess of the ground-state flow.
    pub fn groundstate_guess(&self, system: &System, cfg: &GroundStateConfig) -> Result<Field> {
        match &cfg.initial {
            InitialGuess::Gaussian { width } => gaussian_guess(system.grid(), &cfg.masses, *width),
            InitialGuess::File { path } => {
                let f = snapshot::load(path)?;
                if f.grid().spec() != system.grid().spec() || f.m() != system.m() {
                    return Err(Error::Config(format!("{path}: snapshot does not match the configured grid")));
                }
                Field::from_components(system.grid().clone(), f.into_components())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::Integrator;
    use crate::nonlinear::Sign;

    const SAMPLE: &str = r#"
[grid]
dim = 2
n_axis = 16
half_width = 4.0

[potentials]
a = { kind = "harmonic_gauge", b = 0.5 }
v = { kind = "harmonic", omega = 1.0, offset = 0.5 }

[local]
a = [1.0, 1.0]
beta = [[0.0, 0.5], [0.5, 0.0]]
l = [2.0, 2.0]
sign = "defocusing"

[nonlocal]
w = [[1.0, 0.2], [0.2, 1.0]]
gamma = 1.0
r0 = 0.1
mu = 2.0

[initial]
kind = "gaussian"
amplitude = [1.0, 0.5]
width = 1.0
momentum = [0.5, 0.0]

[evolve]
dt = 0.01
t_end = 0.1
blowup_threshold = 50.0
integrator = { kind = "picard_yosida", n = 100, slab_steps = 5, picard_tol = 1e-10, picard_max_iter = 30 }
"#;

    #[test]
    fn parses_and_builds() {
        let cfg = RunConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(cfg.local.sign, Sign::Defocusing);
        assert!(matches!(cfg.evolve.as_ref().unwrap().integrator, Integrator::PicardYosida { n: 100, .. }));
        assert_eq!(cfg.potentials.p, f64::INFINITY);
        let sys = cfg.build_system().unwrap();
        cfg.validate(&sys).unwrap();
        let f = cfg.initial_field(&sys).unwrap();
        assert_eq!(f.m(), 2);
        assert!((f.max_modulus() - 1.0).abs() < 0.05);
        let again = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(again, cfg);

        let bare = RunConfig::from_toml_str("[grid]\ndim = 1\nn_axis = 8\nhalf_width = 1.0\n[local]\na = [1.0]\nbeta = [[0.0]]\nl = [2.0]\n").unwrap();
        assert_eq!(bare.potentials, PotentialsConfig::default());
        assert_eq!(PotentialsConfig::default().p, f64::INFINITY);
    }

    #[test]
    fn reports_violated_conditions() {
        let bad = SAMPLE.replace("mu = 2.0", "mu = 3.5");
        let cfg = RunConfig::from_toml_str(&bad).unwrap();
        let err = cfg.build_system().unwrap_err();
        assert!(err.to_string().contains("(restrh-localwp)"), "{err}");
        assert!(RunConfig::from_toml_str("[grid]\ndim = 1").is_err());
        let typo = SAMPLE.replace("[initial]", "[initial]\nwidht = 2.0");
        assert!(RunConfig::from_toml_str(&typo).is_err());
    }

    #[test]
    fn snapshot_initial_data() {
        let cfg = RunConfig::from_toml_str(SAMPLE).unwrap();
        let sys = cfg.build_system().unwrap();
        let f = cfg.initial_field(&sys).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("init.bin");
        snapshot::save(&path, &f).unwrap();
        let mut from_file = cfg.clone();
        from_file.initial = InitialSpec::File { path };
        assert_eq!(from_file.initial_field(&sys).unwrap().components(), f.components());
    }
}
