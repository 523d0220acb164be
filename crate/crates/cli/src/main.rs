//! `magnls` command-line driver.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use magnls::config::RunConfig;
use magnls::evolve::{evolve_observed, global_existence_gate, EvolveConfig, Integrator, Status};
use magnls::groundstate::{solve, FlowStatus};
use magnls::snapshot;
use magnls::verify::{dispersive_decay, run_suite, DecayConfig, VerifyConfig};
use serde_json::json;

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "magnls", version, about = "Coupled magnetic NLS simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed of the randomized audits.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for NDJSON, snapshots and the summary.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Refuse to run unless global existence is guaranteed.
    #[arg(long, global = true)]
    require_global: bool,
    #[arg(long, global = true)]
    snapshot_stride: Option<usize>,
    #[arg(long, global = true, value_enum)]
    integrator: Option<IntegratorChoice>,
}

#[derive(Clone, Copy, ValueEnum)]
enum IntegratorChoice {
    Strang,
    Picard,
}

#[derive(Subcommand)]
enum Command {
    /// Time evolution from the configured initial data.
    Evolve,
    /// Normalized gradient flow towards a ground state.
    Groundstate,
    /// Randomized audit of the functional inequalities.
    Verify,
    /// Free dispersive decay table and fitted slope.
    Decay {
        /// Space dimension when no `[decay]` section is configured.
        #[arg(long, default_value_t = 1)]
        dim: usize,
    },
}

struct Failure {
    code: u8,
    message: String,
}

fn config_error(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: e.to_string(),
    }
}

fn runtime_error(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_RUNTIME,
        message: e.to_string(),
    }
}

/// Writes NDJSON to stdout and, with `--out`, to a file as well.
struct Output {
    dir: Option<PathBuf>,
    ndjson: Option<BufWriter<File>>,
    stdout: io::StdoutLock<'static>,
}

impl Output {
    fn new(dir: Option<&Path>, ndjson_name: &str) -> Result<Self, Failure> {
        let ndjson = match dir {
            Some(d) => {
                fs::create_dir_all(d).map_err(|e| config_error(format!("cannot create {}: {e}", d.display())))?;
                let path = d.join(ndjson_name);
                Some(BufWriter::new(
                    File::create(&path).map_err(|e| config_error(format!("{}: {e}", path.display())))?,
                ))
            }
            None => None,
        };
        Ok(Output {
            dir: dir.map(Path::to_path_buf),
            ndjson,
            stdout: io::stdout().lock(),
        })
    }

    fn line(&mut self, value: &serde_json::Value) -> io::Result<()> {
        writeln!(self.stdout, "{value}")?;
        if let Some(f) = &mut self.ndjson {
            writeln!(f, "{value}")?;
        }
        Ok(())
    }

    fn summary(&mut self, text: &str) -> Result<(), Failure> {
        eprint!("{text}");
        if let Some(d) = &self.dir {
            fs::write(d.join("summary.txt"), text).map_err(runtime_error)?;
        }
        if let Some(f) = &mut self.ndjson {
            f.flush().map_err(runtime_error)?;
        }
        Ok(())
    }
}

fn load_config(common: &Common) -> Result<RunConfig, Failure> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| config_error("--config PATH is required for this subcommand"))?;
    RunConfig::load(path).map_err(config_error)
}

fn cmd_evolve(common: &Common) -> Result<u8, Failure> {
    let cfg = load_config(common)?;
    let sys = cfg.build_system().map_err(config_error)?;
    cfg.validate(&sys).map_err(config_error)?;
    let gate = global_existence_gate(&sys.local, sys.nonlocal_spec(), sys.potentials.inf_v, sys.grid().dim());
    if common.require_global && !gate.global {
        return Err(config_error(gate.verdict()));
    }
    let mut ecfg: EvolveConfig = cfg
        .evolve
        .clone()
        .ok_or_else(|| config_error("missing [evolve] section"))?;
    if let Some(stride) = common.snapshot_stride {
        ecfg.snapshot_stride = stride;
    }
    match common.integrator {
        Some(IntegratorChoice::Strang) => ecfg.integrator = Integrator::Strang,
        Some(IntegratorChoice::Picard) if !matches!(ecfg.integrator, Integrator::PicardYosida { .. }) => {
            ecfg.integrator = Integrator::PicardYosida {
                n: 10_000,
                slab_steps: 16,
                picard_tol: 1e-10,
                picard_max_iter: 50,
            };
        }
        _ => {}
    }
    ecfg.validate().map_err(config_error)?;
    let phi0 = cfg.initial_field(&sys).map_err(config_error)?;

    let mut out = Output::new(common.out.as_deref(), "diagnostics.ndjson")?;
    let snap_dir = out.dir.as_ref().map(|d| d.join("snapshots"));
    if let Some(d) = &snap_dir {
        if ecfg.snapshot_stride > 0 {
            fs::create_dir_all(d).map_err(config_error)?;
        }
    }
    let mut io_error: Option<String> = None;
    let rec = evolve_observed(&sys, &phi0, &ecfg, &mut |s| {
        if io_error.is_some() {
            return;
        }
        let mut result = out.line(&json!(s.diagnostics)).map_err(|e| e.to_string());
        if s.snapshot {
            if let (Some(d), Ok(())) = (&snap_dir, &result) {
                result = snapshot::save(d.join(format!("step_{:08}.bin", s.step)), s.field).map_err(|e| e.to_string());
            }
        }
        io_error = result.err();
    })
    .map_err(config_error)?;
    if let Some(e) = io_error {
        return Err(runtime_error(format!("output: {e}")));
    }
    if let Some(d) = &out.dir {
        snapshot::save(d.join("final.bin"), &rec.final_field).map_err(runtime_error)?;
    }

    let status_json = serde_json::to_string(&rec.status).map_err(runtime_error)?;
    let mut text = format!("status: {status_json}\n{}\n", gate.verdict());
    text += &format!(
        "steps recorded: {}\nmax relative charge drift: {:e}\n|F_A(end) - F_A(0)|: {:e}\nmax H1A norm: {}\n",
        rec.diagnostics.len(),
        rec.max_charge_drift(),
        rec.energy_drift(),
        rec.max_h1a()
    );
    if !rec.slabs.is_empty() {
        let iters: usize = rec.slabs.iter().map(|s| s.iterations).sum();
        text += &format!("picard slabs: {}, total iterations: {iters}\n", rec.slabs.len());
    }
    out.summary(&text)?;
    match rec.status {
        Status::SolverFailure { t, message } => Err(runtime_error(format!("solver failure at t = {t}: {message}"))),
        _ => Ok(0),
    }
}

fn cmd_groundstate(common: &Common) -> Result<u8, Failure> {
    let cfg = load_config(common)?;
    let sys = cfg.build_system().map_err(config_error)?;
    cfg.validate(&sys).map_err(config_error)?;
    let gcfg = cfg
        .groundstate
        .clone()
        .ok_or_else(|| config_error("missing [groundstate] section"))?;
    gcfg.validate().map_err(config_error)?;
    let u0 = cfg.groundstate_guess(&sys, &gcfg).map_err(config_error)?;
    let gs = solve(&sys, &u0, &gcfg).map_err(runtime_error)?;

    let mut out = Output::new(common.out.as_deref(), "groundstate.ndjson")?;
    if let Some(d) = &out.dir {
        snapshot::save(d.join("groundstate.bin"), &gs.field).map_err(runtime_error)?;
    }
    let record = json!({
        "lambda": gs.lambda,
        "residual": gs.residual,
        "F_A": gs.energy,
        "iterations": gs.iterations,
        "status": gs.status,
    });
    out.line(&record).map_err(runtime_error)?;
    out.summary(&format!(
        "status: {:?}\nlambda: {:?}\nresidual: {:e}\nF_A: {}\niterations: {}\n",
        gs.status, gs.lambda, gs.residual, gs.energy, gs.iterations
    ))?;
    match gs.status {
        FlowStatus::Converged => Ok(0),
        s => Err(runtime_error(format!("gradient flow ended without convergence ({s:?})"))),
    }
}

fn cmd_verify(common: &Common) -> Result<u8, Failure> {
    let vcfg = match &common.config {
        Some(_) => load_config(common)?.verify.unwrap_or_default(),
        None => VerifyConfig::default(),
    };
    let reports = run_suite(&vcfg, common.seed).map_err(config_error)?;
    let mut out = Output::new(common.out.as_deref(), "verify.ndjson")?;
    let mut text = String::new();
    for r in &reports {
        out.line(&json!(r)).map_err(runtime_error)?;
        text += &format!(
            "{} {}: worst margin {:e} (seed {})\n",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.worst_margin,
            r.witness_seed
        );
    }
    out.summary(&text)?;
    Ok(if reports.iter().all(|r| r.pass) { 0 } else { EXIT_CHECK_FAILED })
}

fn cmd_decay(common: &Common, dim: usize) -> Result<u8, Failure> {
    let dcfg = match &common.config {
        Some(_) => load_config(common)?.decay.unwrap_or_else(|| DecayConfig::standard(dim)),
        None => DecayConfig::standard(dim),
    };
    let res = dispersive_decay(&dcfg, None).map_err(config_error)?;
    let mut out = Output::new(common.out.as_deref(), "decay.ndjson")?;
    for &(t, norm) in &res.table {
        out.line(&json!({ "t": t, "norm": norm })).map_err(runtime_error)?;
    }
    out.line(&json!({
        "slope": res.slope,
        "expected": res.expected,
        "boundary_mass": res.boundary_mass,
    }))
    .map_err(runtime_error)?;
    out.summary(&format!(
        "fitted slope: {}\nexpected slope: {}\nboundary mass: {:e}\n",
        res.slope, res.expected, res.boundary_mass
    ))?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Evolve => cmd_evolve(&cli.common),
        Command::Groundstate => cmd_groundstate(&cli.common),
        Command::Verify => cmd_verify(&cli.common),
        Command::Decay { dim } => cmd_decay(&cli.common, dim),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
