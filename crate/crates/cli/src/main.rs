//! Command-line front end: synthesis, simulation, region-of-attraction
//! reports, rational-vs-polynomial comparison, and SDPA export for the
//! packaged benchmarks or user-supplied system files.

mod config;
mod doc;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ratsyn::synth::{
    cancellation_for_system, compile_step1, compile_step2, run_step1, synthesize,
    traditional_iterate, wrap_initial, RationalController, StepResult, SynthesisResult,
    SystemModel,
};
use ratsyn::verify::{
    certified_roa_level, roa_sample, settling_time, simulate, total_cost, SimOptions,
};
use ratsyn::{export_sdpa, Polynomial};
use serde::Serialize;

use config::{CommonArgs, Mode, RunConfig};
use doc::ControllerDoc;

#[derive(Parser)]
#[command(name = "ratsyn", about = "Rational state-feedback controller synthesis")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize a controller and write the controller document.
    Synth(SynthArgs),
    /// Simulate a controller from one point or a grid; write CSVs.
    Simulate(SimulateArgs),
    /// Sample a convergence grid and certify a Lyapunov sublevel set.
    Roa(RoaArgs),
    /// Run rational and polynomial-only synthesis side by side.
    Compare(CompareArgs),
    /// Export one step's semidefinite program in SDPA sparse format.
    ExportSdpa(ExportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Controller document produced by `synth`.
    #[arg(long)]
    controller: PathBuf,
    /// Initial state as comma-separated values; repeatable.
    #[arg(long)]
    x0: Vec<String>,
    /// Per-dimension grid resolution over the certified region (used when
    /// no --x0 is given; default 5).
    #[arg(long)]
    grid: Option<usize>,
    /// Grid radius override (defaults to the certified radius).
    #[arg(long)]
    radius: Option<f64>,
}

#[derive(Args)]
struct RoaArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    controller: PathBuf,
    /// Per-dimension resolution (default 41 for 2 states, 21 for 3, 9 above).
    #[arg(long)]
    per_dim: Option<usize>,
    #[arg(long)]
    radius: Option<f64>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Which convex step to compile (1 or 2).
    #[arg(long)]
    step: u8,
    /// Certified iterate index (defaults to the last one).
    #[arg(long)]
    iter: Option<usize>,
    /// Output file (defaults to stepN_iterK.dat-s in the output directory).
    #[arg(long)]
    file: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Synth(a) => cmd_synth(&a),
        Cmd::Simulate(a) => cmd_simulate(&a),
        Cmd::Roa(a) => cmd_roa(&a),
        Cmd::Compare(a) => cmd_compare(&a),
        Cmd::ExportSdpa(a) => cmd_export_sdpa(&a),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn ensure_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn run_synthesis(cfg: &RunConfig) -> Result<SynthesisResult> {
    match cfg.mode {
        Mode::Proposed | Mode::PolynomialOnly => {
            Ok(synthesize(cfg.provider.as_ref(), &cfg.k0, &cfg.synth)?)
        }
        Mode::Traditional => Ok(traditional_iterate(cfg.provider.as_ref(), &cfg.k0, &cfg.synth)?),
        Mode::Cancellation => bail!("cancellation mode has no iteration; use `synth`"),
    }
}

#[derive(Serialize)]
struct HistoryEntry {
    outer: usize,
    inner: usize,
    step: u8,
    r: f64,
    gamma: f64,
    feasible: bool,
    warning: bool,
    solver_iterations: u32,
    detail: String,
}

fn write_history(res: &SynthesisResult, path: &Path) -> Result<()> {
    let entries: Vec<HistoryEntry> = res
        .history
        .iter()
        .map(|h| HistoryEntry {
            outer: h.outer,
            inner: h.inner,
            step: h.step,
            r: h.r,
            gamma: h.gamma,
            feasible: h.feasible,
            warning: h.warning,
            solver_iterations: h.solver_iterations,
            detail: h.detail.clone(),
        })
        .collect();
    std::fs::write(path, serde_json::to_string_pretty(&entries)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<ExitCode> {
    let cfg = config::resolve(&args.common)?;
    ensure_out(&cfg.output_dir)?;
    let doc_path = cfg.output_dir.join("controller.json");

    if cfg.mode == Mode::Cancellation {
        return synth_cancellation(&cfg, &doc_path);
    }

    let res = run_synthesis(&cfg)?;
    for h in &res.history {
        println!(
            "[{}] round {}.{} step {} R={:.4} gamma={:.4}: {}",
            if h.feasible { "ok" } else { "--" },
            h.outer,
            h.inner,
            h.step,
            h.r,
            h.gamma,
            h.detail
        );
    }
    let doc = ControllerDoc::from_result(&cfg.system, cfg.mode.name(), cfg.seed, &res);
    doc.write(&doc_path)?;
    write_history(&res, &cfg.output_dir.join("history.json"))?;
    println!(
        "{}: {} feasible iterations, certified R {:?}; controller written to {}",
        cfg.system,
        res.feasible_iterations,
        res.max_certified_r(),
        doc_path.display()
    );
    Ok(if res.cert.is_some() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

/// Cancellation construction: certify a Lyapunov function for the initial
/// gain, then cancel `grad(V)·g` against the dynamics. No positivity
/// certificate for the resulting denominator is produced.
fn synth_cancellation(cfg: &RunConfig, doc_path: &Path) -> Result<ExitCode> {
    let sys = cfg.model();
    let ctrl = wrap_initial(&cfg.k0)?;
    let mut degrees = cfg.synth.degrees;
    let art = loop {
        match run_step1(&sys, &ctrl, &cfg.synth, &degrees, cfg.synth.r0)? {
            StepResult::Feasible(a) => break a,
            StepResult::Infeasible { detail, .. } => {
                if degrees.at_max(&cfg.synth) {
                    bail!("initial gain not certifiable at R={}: {detail}", cfg.synth.r0);
                }
                degrees.escalate(&cfg.synth);
            }
        }
    };
    let mut w = Polynomial::zero(&sys.vars);
    for i in 0..sys.vars.n_states() {
        let xi = Polynomial::var(&sys.vars, i);
        w = &w + &(&xi * &xi);
    }
    // the law's denominator may vanish away from (or at) the origin, so it
    // is stored as raw polynomials rather than a certified controller
    let law = cancellation_for_system(&sys, &art.cert.v, &w)?.reduced();
    let vars = &sys.vars;
    let doc = ControllerDoc {
        system: cfg.system.clone(),
        mode: cfg.mode.name().to_string(),
        seed: cfg.seed,
        state_vars: vars.state_names().to_vec(),
        input_vars: vars.input_names().to_vec(),
        aux_vars: vars.aux_names().to_vec(),
        p: vec![doc::poly_to_doc(&law.p)],
        q: vec![doc::poly_to_doc(&law.q)],
        lyapunov: Some(doc::poly_to_doc(&art.cert.v)),
        feasible_iterations: 0,
        certified_r: None,
        final_r: cfg.synth.r0,
        final_gamma: cfg.synth.gamma0,
        certified: law.sign_certified,
    };
    doc.write(doc_path)?;
    println!(
        "cancellation controller written to {} (denominator sign not certified)",
        doc_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn parse_x0(src: &str, nx: usize) -> Result<Vec<f64>> {
    let vals = src
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| anyhow::anyhow!("bad x0 entry {t:?}: {e}")))
        .collect::<Result<Vec<f64>>>()?;
    if vals.len() != nx {
        bail!("x0 {src:?} has {} entries, system has {nx} states", vals.len());
    }
    Ok(vals)
}

#[derive(Serialize)]
struct SimRow {
    index: usize,
    x0: Vec<f64>,
    converged: bool,
    truncated: bool,
    denominator_violation: bool,
    input_cap_hit: bool,
    total_cost: f64,
    settling_time: Option<f64>,
}

fn write_trajectory_csv(
    path: &Path,
    sys: &SystemModel,
    traj: &ratsyn::verify::Trajectory,
) -> Result<()> {
    let mut out = String::new();
    let _ = write!(out, "t");
    for n in sys.vars.state_names() {
        let _ = write!(out, ",{n}");
    }
    for n in sys.vars.input_names() {
        let _ = write!(out, ",{n}");
    }
    let _ = writeln!(out);
    for k in 0..traj.times.len() {
        let _ = write!(out, "{}", traj.times[k]);
        for v in &traj.states[k] {
            let _ = write!(out, ",{v}");
        }
        for v in &traj.inputs[k] {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(out);
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<ExitCode> {
    let cfg = config::resolve(&args.common)?;
    ensure_out(&cfg.output_dir)?;
    let doc = ControllerDoc::read(&args.controller)?;
    let radius = args.radius.or(doc.certified_r).unwrap_or(cfg.synth.r0);
    let sys = cfg.provider.model(radius);
    let ctrl = doc.controller(&sys.vars)?;

    let points: Vec<Vec<f64>> = if args.x0.is_empty() {
        let per_dim = args.grid.unwrap_or(5);
        roa_sample(&sys, &ctrl, radius, per_dim, &cfg.sim).points
    } else {
        args.x0
            .iter()
            .map(|s| parse_x0(s, sys.n_states()))
            .collect::<Result<Vec<_>>>()?
    };
    if points.is_empty() {
        bail!("no initial states: empty grid at radius {radius}");
    }

    let mut rows = Vec::with_capacity(points.len());
    let mut all_completed = true;
    for (i, x0) in points.iter().enumerate() {
        let traj = simulate(&sys, &ctrl, x0, &cfg.sim);
        write_trajectory_csv(&cfg.output_dir.join(format!("traj_{i:03}.csv")), &sys, &traj)?;
        all_completed &= !traj.truncated;
        rows.push(SimRow {
            index: i,
            x0: x0.clone(),
            converged: traj.converged,
            truncated: traj.truncated,
            denominator_violation: traj.denominator_violation,
            input_cap_hit: traj.input_cap_hit,
            total_cost: total_cost(&traj),
            settling_time: settling_time(&traj, 0.01),
        });
    }
    std::fs::write(
        cfg.output_dir.join("summary.json"),
        serde_json::to_string_pretty(&rows)?,
    )?;
    let converged = rows.iter().filter(|r| r.converged).count();
    println!(
        "{} runs, {} converged; summary and CSVs in {}",
        rows.len(),
        converged,
        cfg.output_dir.display()
    );
    Ok(if all_completed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

#[derive(Serialize)]
struct RoaDoc {
    radius: f64,
    per_dim: usize,
    fraction_converged: f64,
    certified_level: Option<f64>,
    points: Vec<Vec<f64>>,
    verdicts: Vec<bool>,
}

fn cmd_roa(args: &RoaArgs) -> Result<ExitCode> {
    let cfg = config::resolve(&args.common)?;
    ensure_out(&cfg.output_dir)?;
    let doc = ControllerDoc::read(&args.controller)?;
    let radius = args.radius.or(doc.certified_r).unwrap_or(cfg.synth.r0);
    if radius <= 0.0 {
        bail!("empty grid: radius must be positive, got {radius}");
    }
    let sys = cfg.provider.model(radius);
    let ctrl = doc.controller(&sys.vars)?;
    let per_dim = args.per_dim.unwrap_or(match sys.n_states() {
        0..=2 => 41,
        3 => 21,
        _ => 9,
    });
    let mut report = roa_sample(&sys, &ctrl, radius, per_dim, &cfg.sim);
    if let Some(v) = doc.lyapunov_poly(&sys.vars)? {
        report.certified_level = Some(certified_roa_level(&v, radius, cfg.seed)?);
    }
    let out = RoaDoc {
        radius,
        per_dim,
        fraction_converged: report.fraction_converged,
        certified_level: report.certified_level,
        points: report.points,
        verdicts: report.verdicts,
    };
    let path = cfg.output_dir.join("roa.json");
    std::fs::write(&path, serde_json::to_string_pretty(&out)?)?;
    println!(
        "{} points, {:.1}% converged, certified level {:?}; report in {}",
        out.points.len(),
        100.0 * out.fraction_converged,
        out.certified_level,
        path.display()
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct CompareDoc {
    iters: usize,
    rational_feasible: usize,
    polynomial_feasible: usize,
    rational_radius: Option<f64>,
    polynomial_radius: Option<f64>,
    /// Grid costs of the two controllers at the matched iterate index.
    matched_iterate: usize,
    rational_cost: f64,
    polynomial_cost: f64,
}

fn grid_cost(sys: &SystemModel, ctrl: &RationalController, r: f64, sim: &SimOptions) -> f64 {
    roa_sample(sys, ctrl, r, 5, sim)
        .points
        .iter()
        .map(|x0| total_cost(&simulate(sys, ctrl, x0, sim)))
        .sum()
}

fn cmd_compare(args: &CompareArgs) -> Result<ExitCode> {
    let cfg = config::resolve(&args.common)?;
    ensure_out(&cfg.output_dir)?;
    let mut synth_cfg = cfg.synth.clone();
    synth_cfg.polynomial_only = false;
    let rational = synthesize(cfg.provider.as_ref(), &cfg.k0, &synth_cfg)?;
    synth_cfg.polynomial_only = true;
    let polynomial = synthesize(cfg.provider.as_ref(), &cfg.k0, &synth_cfg)?;

    if rational.iterates.is_empty() || polynomial.iterates.is_empty() {
        bail!("one of the runs certified no controller; nothing to compare");
    }
    // cost comparison at the matched schedule point, over the initial region
    let matched = rational.iterates.len().min(polynomial.iterates.len());
    let sys = cfg.provider.model(cfg.synth.r0);
    let rc = &rational.iterates[matched - 1].controller;
    let pc = &polynomial.iterates[matched - 1].controller;
    let out = CompareDoc {
        iters: cfg.synth.iter_max,
        rational_feasible: rational.feasible_iterations,
        polynomial_feasible: polynomial.feasible_iterations,
        rational_radius: rational.max_certified_r(),
        polynomial_radius: polynomial.max_certified_r(),
        matched_iterate: matched,
        rational_cost: grid_cost(&sys, rc, cfg.synth.r0, &cfg.sim),
        polynomial_cost: grid_cost(&sys, pc, cfg.synth.r0, &cfg.sim),
    };
    let path = cfg.output_dir.join("compare.json");
    std::fs::write(&path, serde_json::to_string_pretty(&out)?)?;
    println!("            rational    polynomial");
    println!(
        "feasible    {:<11} {}",
        out.rational_feasible, out.polynomial_feasible
    );
    println!(
        "radius      {:<11.4} {:.4}",
        out.rational_radius.unwrap_or(f64::NAN),
        out.polynomial_radius.unwrap_or(f64::NAN)
    );
    println!(
        "cost@{:<6} {:<11.4} {:.4}",
        out.matched_iterate, out.rational_cost, out.polynomial_cost
    );
    println!("written to {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_export_sdpa(args: &ExportArgs) -> Result<ExitCode> {
    let cfg = config::resolve(&args.common)?;
    ensure_out(&cfg.output_dir)?;
    if !matches!(args.step, 1 | 2) {
        bail!("--step must be 1 or 2, got {}", args.step);
    }
    let res = run_synthesis(&cfg)?;
    if res.iterates.is_empty() {
        bail!("history is empty: no certified iterate to export");
    }
    let idx = args.iter.unwrap_or(res.iterates.len() - 1);
    let snap = res
        .iterates
        .get(idx)
        .with_context(|| format!("unknown snapshot {idx} (have {})", res.iterates.len()))?;
    let sys = cfg.provider.model(snap.r);
    let sdp = if args.step == 1 {
        compile_step1(&sys, &snap.controller, &cfg.synth, &cfg.synth.degrees, snap.r)?
    } else {
        compile_step2(&sys, &snap.cert.lambda, &cfg.synth, &cfg.synth.degrees, snap.r, snap.gamma)?
    };
    let text = export_sdpa(&sdp)?;
    let path = args
        .file
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join(format!("step{}_iter{idx}.dat-s", args.step)));
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("exported step {} at iterate {idx} to {}", args.step, path.display());
    Ok(ExitCode::SUCCESS)
}
