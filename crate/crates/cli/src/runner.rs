//! Subcommand orchestration: load the config, run, write artifacts and the
//! manifest, and map failures to exit codes.

use crate::config::{ConfigError, InitialState, RunConfig};
use crate::manifest::{sha256_hex, CheckOutcome, OutputDir, RunManifest};
use anyhow::Context;
use bdf_core::checkpoint;
use bdf_core::critical::{estimate_h, estimate_v_c};
use bdf_core::dynamics::{energy_derivative_check, propagate_with, ExternalCharge, Record};
use bdf_core::free::{effective_velocity, g_function};
use bdf_core::invariants::check_state;
use bdf_core::linalg;
use bdf_core::mean_field::{exchange_operator, ExchangeKernel};
use bdf_core::scf::{solve_ground_state, solve_ground_state_from, ScfIteration};
use bdf_core::state::{coulomb_energy, projector_defect, random_admissible_state};
use bdf_core::{BdfError, GridSpec, Model, OperatorKernel};
use log::info;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Gfunc,
    Veff,
    Critical,
    Scf,
    Evolve,
    Check,
    Bench,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Gfunc => "gfunc",
            Subcommand::Veff => "veff",
            Subcommand::Critical => "critical",
            Subcommand::Scf => "scf",
            Subcommand::Evolve => "evolve",
            Subcommand::Check => "check",
            Subcommand::Bench => "bench",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const RUNTIME: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const NON_CONVERGENCE: i32 = 3;
    pub const INVARIANT: i32 = 4;
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    NonConvergence(String),
    /// Names of the violated checks.
    Invariant(Vec<String>),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => exit::CONFIG,
            Failure::NonConvergence(_) => exit::NON_CONVERGENCE,
            Failure::Invariant(_) => exit::INVARIANT,
            Failure::Runtime(_) => exit::RUNTIME,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::NonConvergence(m) => write!(f, "solver did not converge: {m}"),
            Failure::Invariant(names) => write!(f, "invariant violated: {}", names.join(", ")),
            Failure::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<BdfError> for Failure {
    fn from(e: BdfError) -> Self {
        match e {
            BdfError::InvalidGrid(_) | BdfError::InvalidParameter(_) | BdfError::Scenario(_) | BdfError::Checkpoint(_) => {
                Failure::Config(e.to_string())
            }
            BdfError::NonConvergence { .. }
            | BdfError::StepFailure { .. }
            | BdfError::Bracket { .. }
            | BdfError::Resolution { .. }
            | BdfError::Quadrature { .. } => Failure::NonConvergence(e.to_string()),
            other => Failure::Runtime(other.into()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn num(x: f64) -> String {
    // adding 0.0 turns -0.0 into 0.0
    format!("{:.15e}", x + 0.0)
}

/// One CSV line: integer columns first, then floating-point columns.
fn csv_row(ints: &[usize], fields: &[f64]) -> String {
    let mut cols: Vec<String> = ints.iter().map(|i| i.to_string()).collect();
    cols.extend(fields.iter().map(|x| num(*x)));
    let mut line = cols.join(",");
    line.push('\n');
    line
}

fn csv_line(fields: &[f64]) -> String {
    csv_row(&[], fields)
}

struct Run<'a> {
    config: &'a RunConfig,
    out: OutputDir,
    seed: u64,
    checks: Vec<CheckOutcome>,
}

impl Run<'_> {
    fn check(&mut self, name: impl Into<String>, value: f64, bound: f64, passed: bool, enforced: bool) {
        self.checks.push(CheckOutcome { name: name.into(), passed, value, bound, enforced });
    }

    fn violations(&self) -> Vec<String> {
        self.checks.iter().filter(|c| c.enforced && !c.passed).map(|c| c.name.clone()).collect()
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.out.write(name, &bytes)
    }

    fn model(&self) -> Result<Model, Failure> {
        Ok(Model::new(self.config.grid, self.config.params.fermi_velocity)?)
    }

    fn external(&self, model: &Model) -> Result<ExternalCharge, Failure> {
        Ok(ExternalCharge::new(self.config.scenario, model.lattice())?)
    }
}

/// Run a subcommand end to end and return the process exit code.
pub fn run(command: Subcommand, options: &RunOptions) -> i32 {
    let started = chrono::Utc::now();
    let (config, raw) = match RunConfig::load(&options.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            // Without a parsed config the output directory is only known
            // from the command line.
            if let Some(dir) = &options.out {
                let failure = Failure::Config(e.0.clone());
                let _ = finish_early(command, dir, options, &failure, started);
            }
            return exit::CONFIG;
        }
    };
    let seed = options.seed.unwrap_or(config.seed);
    let dir = options.out.clone().or_else(|| config.output_dir.clone()).unwrap_or_else(|| PathBuf::from("bdf-out"));
    let out = match OutputDir::create(&dir) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{e:#}");
            return exit::RUNTIME;
        }
    };
    let mut run = Run { config: &config, out, seed, checks: Vec::new() };
    info!("{} -> {}", command.name(), dir.display());
    let result = run.out.write("config.json", &raw).map_err(Failure::from).and_then(|_| dispatch(command, &mut run));
    let result = result.and_then(|_| {
        let violated = run.violations();
        if violated.is_empty() {
            Ok(())
        } else {
            Err(Failure::Invariant(violated))
        }
    });
    let (code, status) = match &result {
        Ok(()) => (exit::SUCCESS, "ok".to_string()),
        Err(f) => {
            eprintln!("{f}");
            (f.exit_code(), f.to_string())
        }
    };
    let manifest = RunManifest {
        artifact: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        subcommand: command.name().to_string(),
        config_sha256: sha256_hex(&raw),
        seed,
        started_at: started.to_rfc3339(),
        finished_at: chrono::Utc::now().to_rfc3339(),
        exit_code: code,
        status,
        violations: run.violations(),
        checks: run.checks.clone(),
        files: run.out.files().to_vec(),
    };
    if let Err(e) = run.out.write_manifest(&manifest) {
        eprintln!("failed to write manifest: {e:#}");
        return exit::RUNTIME;
    }
    code
}

fn finish_early(
    command: Subcommand,
    dir: &Path,
    options: &RunOptions,
    failure: &Failure,
    started: chrono::DateTime<chrono::Utc>,
) -> anyhow::Result<()> {
    let out = OutputDir::create(dir)?;
    let raw = std::fs::read(&options.config).unwrap_or_default();
    let manifest = RunManifest {
        artifact: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        subcommand: command.name().to_string(),
        config_sha256: sha256_hex(&raw),
        seed: options.seed.unwrap_or(0),
        started_at: started.to_rfc3339(),
        finished_at: chrono::Utc::now().to_rfc3339(),
        exit_code: failure.exit_code(),
        status: failure.to_string(),
        checks: Vec::new(),
        violations: Vec::new(),
        files: Vec::new(),
    };
    out.write_manifest(&manifest)
}

fn dispatch(command: Subcommand, run: &mut Run) -> Outcome {
    match command {
        Subcommand::Gfunc => gfunc(run),
        Subcommand::Veff => veff(run),
        Subcommand::Critical => critical(run),
        Subcommand::Scf => scf(run),
        Subcommand::Evolve => evolve(run),
        Subcommand::Check => check(run),
        Subcommand::Bench => bench(run),
    }
}

fn gfunc(run: &mut Run) -> Outcome {
    let cfg = run.config.gfunc;
    let mut csv = String::from("R,g,g_minus_quarter_log_R\n");
    for r in cfg.ladder.values() {
        let g = g_function(r, cfg.tol)?;
        csv.push_str(&csv_line(&[r, g, g - 0.25 * r.ln()]));
    }
    run.out.write("gfunc.csv", csv.as_bytes())?;
    let g1 = g_function(1.0, cfg.tol)?;
    // Published anchor; reported, not enforced.
    run.check("g1_reference_0.1234", g1, 0.1234, (g1 - 0.1234).abs() <= 5e-4, false);
    Ok(())
}

fn veff(run: &mut Run) -> Outcome {
    let params = run.config.params;
    let mut csv = String::from("p_over_cutoff,p,v_eff,deviation_from_quarter_log\n");
    let mut worst = 0.0f64;
    for ratio in run.config.veff.ladder.values() {
        let p = ratio * params.cutoff;
        let v = effective_velocity([p, 0.0], &params)?;
        let dev = v - params.fermi_velocity - 0.25 * (1.0 / ratio).ln();
        worst = worst.max(dev.abs());
        csv.push_str(&csv_line(&[ratio, p, v, dev]));
    }
    run.out.write("veff.csv", csv.as_bytes())?;
    run.check("kohn_deviation_bounded", worst, 0.5, worst < 0.5, true);
    Ok(())
}

fn critical(run: &mut Run) -> Outcome {
    let c = run.config.critical.clone();
    let start = Instant::now();
    let report = estimate_v_c(c.tol_v, c.radial_resolution, c.m_max, &c.v_f_grid)?;
    info!("v_c = {} after {:.1?}", report.v_c, start.elapsed());
    run.write_json("critical.json", &report)?;
    let mut csv = String::from("v_f,h");
    for m in 0..=c.m_max {
        let _ = write!(csv, ",h_m{m}");
    }
    csv.push('\n');
    for (k, v) in report.v_f_grid.iter().enumerate() {
        let mut row = vec![*v, report.h_values[k]];
        row.extend(report.channel_table.iter().map(|ch| ch.h[k]));
        csv.push_str(&csv_line(&row));
    }
    run.out.write("critical_ladder.csv", csv.as_bytes())?;
    run.check("resolution_stability", report.resolution_change, 0.01, report.resolution_change <= 0.01, true);
    let monotone = report.h_values.windows(2).zip(report.v_f_grid.windows(2)).all(|(h, v)| (v[1] > v[0]) == (h[1] < h[0]));
    run.check("h_decreasing_in_v", if monotone { 0.0 } else { 1.0 }, 0.0, monotone, true);
    run.check("v_c_below_2.056", report.v_c, 2.056, report.v_c < 2.056, false);
    run.check("v_c_reference_window_0.30_0.42", report.v_c, 0.42, (0.30..=0.42).contains(&report.v_c), false);
    Ok(())
}

fn history_csv(history: &[ScfIteration]) -> String {
    let mut csv = String::from("iteration,step_norm,commutator_norm,energy,mixing\n");
    for h in history {
        csv.push_str(&csv_row(&[h.iteration], &[h.step_norm, h.commutator_norm, h.energy, h.mixing]));
    }
    csv
}

#[derive(Serialize)]
struct ScfSummary {
    iterations: usize,
    energy: bdf_core::energy::EnergyBreakdown,
    q_operator_norm: f64,
    q_frobenius_norm: f64,
    projector_defect: f64,
    commutator_norm: f64,
    external_coulomb_energy: f64,
    warnings: Vec<String>,
}

fn scf(run: &mut Run) -> Outcome {
    let model = run.model()?;
    let ext = run.external(&model)?;
    let nu = ext.density(0.0);
    let cfg = run.config.scf;
    let result = match solve_ground_state(&model, &nu, &cfg) {
        Ok(r) => r,
        Err(BdfError::NonConvergence { iterations, reason, history }) => {
            let mut csv = String::from("iteration,step_norm,commutator_norm\n");
            for (k, [s, c]) in history.iter().enumerate() {
                csv.push_str(&csv_row(&[k + 1], &[*s, *c]));
            }
            run.out.write("scf_history.csv", csv.as_bytes())?;
            return Err(Failure::NonConvergence(format!("{reason} after {iterations} iterations")));
        }
        Err(e) => return Err(e.into()),
    };
    run.out.write("scf_history.csv", history_csv(&result.history).as_bytes())?;
    let last = result.history.last().copied();
    let summary = ScfSummary {
        iterations: result.iterations,
        energy: result.energy,
        q_operator_norm: linalg::operator_norm(result.q.matrix()),
        q_frobenius_norm: result.q.frobenius(),
        projector_defect: projector_defect(&result.gamma),
        commutator_norm: last.map_or(0.0, |l| l.commutator_norm),
        external_coulomb_energy: coulomb_energy(&nu),
        warnings: result.warnings.clone(),
    };
    run.check("projector_defect", summary.projector_defect, cfg.tol_projector, summary.projector_defect <= cfg.tol_projector, true);
    run.check("commutator", summary.commutator_norm, cfg.tol_commutator, summary.commutator_norm <= cfg.tol_commutator, true);
    let floor = -0.5 * summary.external_coulomb_energy;
    run.check("energy_lower_bound", floor - result.energy.total, 1e-8, result.energy.total >= floor - 1e-8, true);
    run.check("energy_not_above_free_sea", result.energy.total, 1e-10, result.energy.total <= 1e-10, true);
    if run.config.scenario.defect().is_none() {
        run.check("free_sea_fixed_point", summary.q_operator_norm, 1e-10, summary.q_operator_norm <= 1e-10, true);
    }
    run.write_json("scf_summary.json", &summary)?;
    checkpoint::save(&run.out.path("ground_state.bin"), &model, &result.gamma)?;
    run.out.record("ground_state.bin")?;
    Ok(())
}

fn initial_state(run: &Run, model: &Model, ext: &ExternalCharge) -> Result<OperatorKernel, Failure> {
    Ok(match &run.config.initial {
        InitialState::FreeSea => model.free_sea(),
        InitialState::Random { strength } => random_admissible_state(model, run.seed, *strength),
        InitialState::GroundState => solve_ground_state_from(model, model.free_sea(), &ext.density(0.0), &run.config.scf)?.gamma,
        InitialState::Checkpoint { path } => checkpoint::load(path, model)?,
    })
}

enum Message {
    Row(String),
    Checkpoint { name: String, bytes: Vec<u8> },
}

const TRAJECTORY_HEADER: &str = "step,t,kinetic,external,direct,exchange,energy,lyapunov,gronwall_bound,coulomb_residual,\
projector_defect,kinetic_trace_norm,hs_weighted_norm,coulomb_norm\n";

fn trajectory_row(r: &Record) -> String {
    let e = &r.energy;
    let n = &r.norms;
    csv_row(
        &[r.step],
        &[
            r.t,
            e.kinetic,
            e.external,
            e.direct,
            e.exchange,
            e.total,
            r.lyapunov,
            r.gronwall_bound,
            r.coulomb_residual,
            r.projector_defect,
            n.kinetic_trace_norm,
            n.hs_weighted_norm,
            n.coulomb_norm,
        ],
    )
}

#[derive(Serialize)]
struct EvolveSummary {
    scenario: &'static str,
    steps: usize,
    records: usize,
    max_projector_defect: f64,
    max_energy_drift: f64,
    gronwall_violations: Vec<usize>,
    max_energy_derivative_residual: Option<f64>,
    failure: Option<String>,
}

fn evolve(run: &mut Run) -> Outcome {
    let model = run.model()?;
    let ext = run.external(&model)?;
    let gamma0 = initial_state(run, &model, &ext)?;
    let prop = run.config.propagator;
    let checkpoint_every = run.config.checkpoint_every;
    let (grid, params) = (*model.grid().spec(), *model.params());

    // All file output goes through one writer thread.
    let csv_path = run.out.path("trajectory.csv");
    let root = run.out.root().to_path_buf();
    let (tx, rx) = mpsc::sync_channel::<Message>(256);
    let writer = thread::spawn(move || -> anyhow::Result<Vec<String>> {
        let file = std::fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
        let mut w = BufWriter::new(file);
        w.write_all(TRAJECTORY_HEADER.as_bytes())?;
        let mut checkpoints = Vec::new();
        for msg in rx {
            match msg {
                Message::Row(line) => w.write_all(line.as_bytes())?,
                Message::Checkpoint { name, bytes } => {
                    crate::manifest::write_atomic(&root.join(&name), &bytes)?;
                    checkpoints.push(name);
                }
            }
        }
        w.flush()?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        Ok(checkpoints)
    });

    let mut count = 0usize;
    let result = propagate_with(&model, &gamma0, &ext, &prop, |record, gamma| {
        let _ = tx.send(Message::Row(trajectory_row(record)));
        if let Some(k) = checkpoint_every {
            if count % k == 0 {
                let bytes = checkpoint::encode(&grid, &params, gamma.matrix());
                let _ = tx.send(Message::Checkpoint { name: format!("checkpoint_{:06}.bin", record.step), bytes });
            }
        }
        count += 1;
    });
    drop(tx);
    let checkpoints = writer.join().map_err(|_| anyhow::anyhow!("writer thread panicked"))??;
    run.out.record("trajectory.csv")?;
    for name in &checkpoints {
        run.out.record(name)?;
    }
    let traj = result?;
    checkpoint::save(&run.out.path("final_state.bin"), &model, &traj.final_state)?;
    run.out.record("final_state.bin")?;

    let e0 = traj.records[0].energy.total;
    let drift = traj.records.iter().map(|r| (r.energy.total - e0).abs()).fold(0.0, f64::max);
    let residual = if prop.record_every == 1 { energy_derivative_check(&traj, &ext)?.into_iter().reduce(f64::max) } else { None };
    let summary = EvolveSummary {
        scenario: ext.id(),
        steps: prop.steps(),
        records: traj.records.len(),
        max_projector_defect: traj.max_projector_defect(),
        max_energy_drift: drift,
        gronwall_violations: traj.gronwall_violations.clone(),
        max_energy_derivative_residual: residual,
        failure: traj.failure.clone(),
    };
    run.write_json("evolve_summary.json", &summary)?;
    let pd = summary.max_projector_defect;
    run.check("projector_defect", pd, prop.max_projector_defect, pd <= prop.max_projector_defect, true);
    let nviol = summary.gronwall_violations.len() as f64;
    run.check("gronwall_envelope", nviol, 0.0, nviol == 0.0, true);
    Ok(())
}

fn check(run: &mut Run) -> Outcome {
    let model = run.model()?;
    let ext = run.external(&model)?;
    let nu = ext.density(0.0);
    let cfg = run.config.check;
    let h = match cfg.h {
        Some(h) => h,
        None => {
            let c = &run.config.critical;
            estimate_h(model.params().fermi_velocity, c.radial_resolution, c.m_max)?.h
        }
    };
    let mut csv = String::from("state,seed,check,value,bound,passed\n");
    // name -> (all passed, worst value - bound, value, bound)
    let mut summary: BTreeMap<&'static str, (bool, f64, f64, f64)> = BTreeMap::new();
    let mut order = Vec::new();
    for k in 0..cfg.states {
        let seed = run.seed.wrapping_add(k as u64);
        let gamma = random_admissible_state(&model, seed, cfg.strength);
        for c in check_state(&model, &gamma, &nu, h)? {
            let _ = writeln!(csv, "{k},{seed},{},{},{},{}", c.name, num(c.value), num(c.bound), c.passed);
            let entry = summary.entry(c.name).or_insert_with(|| {
                order.push(c.name);
                (true, f64::NEG_INFINITY, c.value, c.bound)
            });
            entry.0 &= c.passed;
            if c.value - c.bound > entry.1 {
                *entry = (entry.0, c.value - c.bound, c.value, c.bound);
            }
        }
    }
    run.out.write("checks.csv", csv.as_bytes())?;
    run.check("h_used", h, h, true, false);
    for name in order {
        let (passed, _, value, bound) = summary[name];
        run.check(name, value, bound, passed, true);
    }
    Ok(())
}

fn bench(run: &mut Run) -> Outcome {
    let cfg = run.config.bench.clone();
    let mut csv = String::from("points_per_axis,dim,naive_seconds,blocked_seconds,speedup,max_difference\n");
    let mut worst = 0.0f64;
    let mut last_speedup = f64::NAN;
    for &n in &cfg.points_per_axis {
        let model = Model::new(GridSpec { points_per_axis: n, ..run.config.grid }, run.config.params.fermi_velocity)?;
        let q = bdf_core::state::deviation(&model, &random_admissible_state(&model, run.seed, 0.5));
        let (mut naive_t, mut blocked_t) = (f64::INFINITY, f64::INFINITY);
        let mut diff = 0.0f64;
        for _ in 0..cfg.repeats {
            let t = Instant::now();
            let a = exchange_operator(&model, &q, ExchangeKernel::Naive);
            naive_t = naive_t.min(t.elapsed().as_secs_f64());
            let t = Instant::now();
            let b = exchange_operator(&model, &q, ExchangeKernel::Blocked);
            blocked_t = blocked_t.min(t.elapsed().as_secs_f64());
            diff = diff.max(linalg::frobenius(&(a.matrix() - b.matrix())));
        }
        worst = worst.max(diff);
        last_speedup = naive_t / blocked_t;
        csv.push_str(&csv_row(&[n, model.dim()], &[naive_t, blocked_t, last_speedup, diff]));
    }
    run.out.write("bench.csv", csv.as_bytes())?;
    run.check("kernels_agree", worst, 1e-10, worst <= 1e-10, true);
    run.check("blocked_speedup_at_largest_grid", last_speedup, 2.0, last_speedup >= 2.0, false);
    Ok(())
}
