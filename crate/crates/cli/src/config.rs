//! Run configuration: an optional TOML file provides defaults, command-line
//! flags override individual fields, and built-in benchmark names resolve to
//! their packaged schedules.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::Args;
use ratsyn::bench::{self, Benchmark};
use ratsyn::synth::{SynthesisConfig, SystemModel, SystemProvider};
use ratsyn::verify::SimOptions;
use ratsyn::{parse_poly, Polynomial};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Proposed,
    Traditional,
    PolynomialOnly,
    Cancellation,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Mode> {
        match s {
            "proposed" => Ok(Mode::Proposed),
            "traditional" => Ok(Mode::Traditional),
            "polynomial-only" => Ok(Mode::PolynomialOnly),
            "cancellation" => Ok(Mode::Cancellation),
            other => bail!(
                "unknown mode {other:?}: expected proposed, traditional, \
                 polynomial-only or cancellation"
            ),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Mode::Proposed => "proposed",
            Mode::Traditional => "traditional",
            Mode::PolynomialOnly => "polynomial-only",
            Mode::Cancellation => "cancellation",
        }
    }
}

/// Flags shared by every command. Any field left unset falls back to the
/// config file and then to the benchmark (or global) default.
#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in benchmark name (pendulum, rational2d, poly3d) or a system
    /// TOML path.
    #[arg(long)]
    pub system: Option<String>,
    /// proposed | traditional | polynomial-only | cancellation.
    #[arg(long)]
    pub mode: Option<String>,
    /// Iteration budget.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Seed for all randomized sampling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Initial linear gain, one polynomial per input (required for file
    /// systems; built-ins carry their own).
    #[arg(long)]
    pub k0: Vec<String>,
    #[arg(long)]
    pub r0: Option<f64>,
    #[arg(long)]
    pub r_inc: Option<f64>,
    #[arg(long)]
    pub gamma0: Option<f64>,
    #[arg(long)]
    pub gamma_inc: Option<f64>,
    /// Saturate inputs at ±cap during simulation.
    #[arg(long)]
    pub input_cap: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub t_final: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    system: Option<String>,
    mode: Option<String>,
    iters: Option<usize>,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    k0: Option<Vec<String>>,
    r0: Option<f64>,
    r_inc: Option<f64>,
    gamma0: Option<f64>,
    gamma_inc: Option<f64>,
    input_cap: Option<f64>,
    dt: Option<f64>,
    t_final: Option<f64>,
}

/// Fully resolved run: system provider, schedule, simulation options.
pub struct RunConfig {
    pub system: String,
    pub mode: Mode,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub provider: Arc<dyn SystemProvider + Send + Sync>,
    pub k0: Vec<Polynomial>,
    pub synth: SynthesisConfig,
    pub sim: SimOptions,
}

impl RunConfig {
    pub fn model(&self) -> SystemModel {
        self.provider.model(self.synth.r0)
    }
}

fn load_file(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

pub fn resolve(args: &CommonArgs) -> Result<RunConfig> {
    let file = match &args.config {
        Some(p) => load_file(p)?,
        None => FileConfig::default(),
    };
    let system = args
        .system
        .clone()
        .or(file.system)
        .context("no system given: pass --system or set it in the config file")?;
    let mode = Mode::parse(
        args.mode.as_deref().or(file.mode.as_deref()).unwrap_or("proposed"),
    )?;

    // a builtin name supplies provider, gain and schedule; a path supplies
    // the model only
    let (provider, k0_default, mut synth, mut sim): (
        Arc<dyn SystemProvider + Send + Sync>,
        Vec<Polynomial>,
        SynthesisConfig,
        SimOptions,
    ) = match bench::builtin(&system) {
        Some(Benchmark { provider, k0, config, sim, .. }) => (provider, k0, config, sim),
        None => {
            let path = Path::new(&system);
            if !path.exists() {
                bail!(
                    "system {system:?} is neither a built-in benchmark \
                     ({:?}) nor an existing file",
                    bench::BUILTIN_NAMES
                );
            }
            let model = ratsyn::load_system(path)
                .with_context(|| format!("loading system {}", path.display()))?;
            let issues = model.check()?;
            if !issues.is_empty() {
                bail!("system {}: {}", path.display(), issues.join("; "));
            }
            (Arc::new(model), Vec::new(), SynthesisConfig::default(), SimOptions::default())
        }
    };

    let k0_srcs: Option<Vec<String>> = if args.k0.is_empty() { file.k0 } else { Some(args.k0.clone()) };
    let vars = provider.model(synth.r0).vars;
    let k0 = match k0_srcs {
        Some(srcs) => srcs
            .iter()
            .map(|s| parse_poly(s, &vars).map_err(anyhow::Error::from))
            .collect::<Result<Vec<_>>>()?,
        None => k0_default,
    };
    if k0.len() != vars.n_inputs() {
        bail!(
            "initial gain has {} entries but the system has {} inputs \
             (pass --k0 once per input)",
            k0.len(),
            vars.n_inputs()
        );
    }

    if let Some(v) = args.iters.or(file.iters) {
        synth.iter_max = v;
    }
    if let Some(v) = args.r0.or(file.r0) {
        synth.r0 = v;
    }
    if let Some(v) = args.r_inc.or(file.r_inc) {
        synth.r_inc = v;
    }
    if let Some(v) = args.gamma0.or(file.gamma0) {
        synth.gamma0 = v;
    }
    if let Some(v) = args.gamma_inc.or(file.gamma_inc) {
        synth.gamma_inc = v;
    }
    synth.polynomial_only = mode == Mode::PolynomialOnly;

    if let Some(v) = args.dt.or(file.dt) {
        sim.dt = v;
    }
    if let Some(v) = args.t_final.or(file.t_final) {
        sim.t_final = v;
    }
    if let Some(v) = args.input_cap.or(file.input_cap) {
        sim.input_cap = Some(v);
    }

    Ok(RunConfig {
        system,
        mode,
        seed: args.seed.or(file.seed).unwrap_or(0),
        output_dir: args.out.clone().or(file.output_dir).unwrap_or_else(|| PathBuf::from(".")),
        provider,
        k0,
        synth,
        sim,
    })
}
