//! Command dispatch and artifact writing for the `myoarm` binary.
//!
//! Every command writes under `{out}/{command}/`, with one directory per
//! condition. Each directory gets the effective `config.toml`, and each
//! experiment gets a `run_summary.json` free of timestamps so two runs with
//! the same config and seed compare byte for byte.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;

use crate::config::{parse_config_with_env, ExperimentConfig};
use crate::error::{Error, Result};
use crate::harness::{
    compute_metrics, disturbance_sweep, lowpass_attenuation_test, non_decreasing, pid_baseline, run_ilc,
    run_trial, tune_pid, IlcRun, KeptIteration, LogPolicy, TrialLog, ZeroController,
};
use crate::muscle::force_velocity;

pub const TRIAL_SCHEMA: &str = "# schema: myoarm-trial v1";
pub const CURVES_SCHEMA: &str = "# schema: myoarm-curves v1";
pub const ESTIMATOR_SCHEMA: &str = "# schema: myoarm-estimator v1";
pub const FEEDFORWARD_SCHEMA: &str = "# schema: myoarm-feedforward v1";
pub const SWEEP_SCHEMA: &str = "# schema: myoarm-sweep v1";
pub const SUMMARY_SCHEMA: &str = "myoarm-summary v1";

#[derive(Debug, Parser)]
#[command(name = "myoarm", version, about = "Muscle-driven arm simulator with data-driven iterative learning control")]
pub struct Cli {
    /// Experiment config (TOML). Defaults apply when absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Overrides `run.out`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overrides `arm.preset`.
    #[arg(long, global = true, value_name = "NAME")]
    pub preset: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimController {
    /// Neutral commands throughout.
    Zero,
    /// The PID baseline with `pid.gains`.
    Pid,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dump the muscle and tendon curves as CSV.
    Curves {
        #[arg(long, default_value_t = 199)]
        points: usize,
    },
    /// Run one trial without learning.
    Simulate {
        #[arg(long, value_enum, default_value_t = SimController::Zero)]
        controller: SimController,
    },
    /// Run the learning controller for `run.iterations` trials.
    Ilc,
    /// Learn, then replay the final commands under each load fraction.
    Sweep {
        /// Comma-separated load fractions; overrides `run.fractions`.
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
    },
    /// Learning controller against the PID baseline.
    Compare,
    /// Low- and high-frequency excitation tone response of one muscle.
    Lowpass,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Curves { .. } => "curves",
            Command::Simulate { .. } => "simulate",
            Command::Ilc => "ilc",
            Command::Sweep { .. } => "sweep",
            Command::Compare => "compare",
            Command::Lowpass => "lowpass",
        }
    }
}

/// Config file, environment overrides, then command-line flags.
pub fn load_config<I>(cli: &Cli, env: I) -> Result<ExperimentConfig>
where
    I: IntoIterator<Item = (String, String)>,
{
    let text = match &cli.config {
        Some(path) => fs::read_to_string(path).map_err(|e| Error::io(path, e))?,
        None => String::new(),
    };
    let mut cfg = parse_config_with_env(&text, env)?;
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.run.out = out.display().to_string();
    }
    if let Some(p) = &cli.preset {
        cfg.arm.preset = p.clone();
    }
    if let Command::Sweep { fractions: Some(f) } = &cli.command {
        cfg.run.fractions = f.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parse arguments, run, and report. Returns the process exit code.
pub fn main_entry<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            eprintln!("{}", json!({"error": {"kind": "usage", "message": e.to_string().trim()}}));
            return 2;
        }
    };
    match run(&cli, std::env::vars()) {
        Ok(dir) => {
            println!("{}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            1
        }
    }
}

/// Machine-readable error report.
pub fn error_json(e: &Error) -> serde_json::Value {
    let mut body = json!({"kind": e.kind(), "message": e.to_string()});
    match e {
        Error::ConfigParse { line, .. } => body["line"] = json!(line),
        Error::ConfigInvalid { field, .. } => body["field"] = json!(field),
        _ => {}
    }
    json!({ "error": body })
}

/// Run `cli.command`, returning the experiment directory.
pub fn run<I>(cli: &Cli, env: I) -> Result<PathBuf>
where
    I: IntoIterator<Item = (String, String)>,
{
    let cfg = load_config(cli, env)?;
    let dir = Path::new(&cfg.run.out).join(cli.command.name());
    let out = Output::new(&dir, &cfg)?;
    let results = match &cli.command {
        Command::Curves { points } => curves(&cfg, &out, *points)?,
        Command::Simulate { controller } => simulate(&cfg, &out, *controller)?,
        Command::Ilc => ilc(&cfg, &out)?,
        Command::Sweep { .. } => sweep(&cfg, &out)?,
        Command::Compare => compare(&cfg, &out)?,
        Command::Lowpass => lowpass(&cfg)?,
    };
    out.summary(cli.command.name(), &cfg, results)?;
    Ok(dir)
}

struct Output {
    root: PathBuf,
    config_text: String,
}

impl Output {
    fn new(root: &Path, cfg: &ExperimentConfig) -> Result<Self> {
        let out = Self {
            root: root.to_path_buf(),
            config_text: cfg.to_toml()?,
        };
        out.dir(None)?;
        Ok(out)
    }

    /// Create `root/condition` with its config echo.
    fn dir(&self, condition: Option<&str>) -> Result<PathBuf> {
        let d = match condition {
            Some(c) => self.root.join(c),
            None => self.root.clone(),
        };
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        write_file(&d.join("config.toml"), self.config_text.as_bytes())?;
        Ok(d)
    }

    fn summary(&self, command: &str, cfg: &ExperimentConfig, results: serde_json::Value) -> Result<()> {
        let doc = json!({
            "schema": SUMMARY_SCHEMA,
            "command": command,
            "seed": cfg.run.seed,
            "config": cfg,
            "results": results,
        });
        let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Serialize(e.to_string()))?;
        text.push('\n');
        write_file(&self.root.join("run_summary.json"), text.as_bytes())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Error::Serialize(e.to_string()))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn csv_writer(path: &Path) -> Result<BufWriter<fs::File>> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(BufWriter::new(f))
}

fn header(prefix: &str, n: usize) -> String {
    (1..=n).map(|i| format!(",{prefix}{i}")).collect()
}

/// Per-tick trial log. Force columns are empty on the last tick, which
/// has no outgoing step.
pub fn write_trial_csv(path: &Path, log: &TrialLog) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = csv_writer(path)?;
    let nq = log.q.first().map_or(0, |q| q.len());
    let nd = log.y_d.first().map_or(0, |y| y.len());
    let nu = log.u.first().map_or(0, |u| u.len());
    let nc = log.commands.first().map_or(0, |c| c.len());
    let nf = log.forces.first().map_or(0, |f| f.len());
    writeln!(w, "{TRIAL_SCHEMA}").map_err(io)?;
    writeln!(
        w,
        "t{}{}{}{}{}{}{}",
        header("q", nq),
        header("qdot", nq),
        header("p", nd),
        header("p_desired", nd),
        header("u", nu),
        header("c", nc),
        header("f", nf),
    )
    .map_err(io)?;
    let mut line = String::new();
    for t in 0..log.len() {
        line.clear();
        let _ = write!(line, "{}", log.time(t));
        let cols = log.q[t]
            .iter()
            .chain(log.qdot[t].iter())
            .chain(log.y[t].iter())
            .chain(log.y_d[t].iter())
            .chain(log.u[t].iter())
            .chain(log.commands[t].iter());
        for v in cols {
            let _ = write!(line, ",{v}");
        }
        match log.forces.get(t) {
            Some(f) => f.iter().for_each(|v| {
                let _ = write!(line, ",{v}");
            }),
            None => line.push_str(&",".repeat(nf)),
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn write_learning(dir: &Path, kept: &KeptIteration) -> Result<()> {
    let k = kept.iteration;
    let path = dir.join(format!("estimator_{k}.csv"));
    let mut text = format!("{ESTIMATOR_SCHEMA}\nmatrix,row,col,value\n");
    for (name, m) in [("phi_hat", &kept.learning.phi_hat), ("xi_hat", &kept.learning.xi_hat)] {
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let _ = writeln!(text, "{name},{r},{c},{}", m[(r, c)]);
            }
        }
    }
    write_file(&path, text.as_bytes())?;

    let path = dir.join(format!("feedforward_{k}.csv"));
    let io = |e| Error::io(&path, e);
    let mut w = csv_writer(&path)?;
    let m = kept.learning.u_ff.first().map_or(0, |u| u.len());
    writeln!(w, "{FEEDFORWARD_SCHEMA}\nt{}", header("uff", m)).map_err(io)?;
    for (t, u) in kept.learning.u_ff.iter().enumerate() {
        let mut line = format!("{}", kept.log.time(t));
        u.iter().for_each(|v| {
            let _ = write!(line, ",{v}");
        });
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

fn curves(cfg: &ExperimentConfig, out: &Output, points: usize) -> Result<serde_json::Value> {
    if points < 2 {
        return Err(Error::ConfigInvalid {
            field: "points".into(),
            message: format!("must be >= 2, got {points}"),
        });
    }
    let p = &cfg.muscle;
    let (lo, hi) = (0.01, 1.99);
    let mut text = format!("{CURVES_SCHEMA}\nx,fl,fpe,fv,ft\n");
    for i in 0..points {
        let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
        let _ = writeln!(
            text,
            "{x},{},{},{},{}",
            p.active_force_length(x)?,
            p.passive_force_length(x)?,
            force_velocity(x - 1.0)?,
            p.tendon_force(p.eps0_t * x),
        );
    }
    write_file(&out.root.join("curves.csv"), text.as_bytes())?;
    Ok(json!({
        "points": points,
        "eps_toe": p.eps_toe(),
        "k_lin": p.k_lin(),
        "fv_at_zero": force_velocity(0.0)?,
    }))
}

fn simulate(cfg: &ExperimentConfig, out: &Output, controller: SimController) -> Result<serde_json::Value> {
    let setup = cfg.setup()?;
    let seed = cfg.run.seed;
    let (name, log) = match controller {
        SimController::Zero => ("zero", run_trial(&setup, &mut ZeroController, &cfg.disturbance, seed)?),
        SimController::Pid => ("pid", pid_baseline(&setup, cfg.pid.gains, &cfg.disturbance, seed)?),
    };
    let dir = out.dir(Some(name))?;
    write_trial_csv(&dir.join("iter_1.csv"), &log)?;
    Ok(json!({
        "controller": name,
        "completed": log.completed(),
        "diverged_at": log.diverged,
        "metrics": compute_metrics(&log)?,
        "muscle_diagnostics": log.muscle_diagnostics,
        "limit_hits": log.limit_hits,
    }))
}

fn ilc_results(run: &IlcRun) -> Result<serde_json::Value> {
    Ok(json!({
        "iterations": run.records.len(),
        "error_curve_mm": run.error_curve(),
        "final_metrics": run.final_metrics(),
        "records": to_value(&run.records)?,
        "monitor_events": to_value(&run.events)?,
        "sensitivity": matrix_rows(&run.sensitivity),
    }))
}

fn learn(cfg: &ExperimentConfig, policy: LogPolicy) -> Result<(crate::harness::Setup, IlcRun)> {
    let setup = cfg.setup()?;
    let run = run_ilc(
        &setup,
        &cfg.controller,
        &cfg.disturbance,
        cfg.run.iterations,
        cfg.run.seed,
        policy,
    )?;
    Ok((setup, run))
}

fn write_kept(out: &Output, condition: &str, run: &IlcRun) -> Result<()> {
    if run.kept.is_empty() {
        return Ok(());
    }
    let dir = out.dir(Some(condition))?;
    for kept in &run.kept {
        write_trial_csv(&dir.join(format!("iter_{}.csv", kept.iteration)), &kept.log)?;
        write_learning(&dir, kept)?;
    }
    Ok(())
}

fn ilc(cfg: &ExperimentConfig, out: &Output) -> Result<serde_json::Value> {
    let (_, run) = learn(cfg, cfg.run.log_iterations)?;
    write_kept(out, "nominal", &run)?;
    ilc_results(&run)
}

fn condition_name(fraction: f64) -> String {
    format!("load_{fraction}")
}

fn sweep(cfg: &ExperimentConfig, out: &Output) -> Result<serde_json::Value> {
    let (setup, run) = learn(cfg, LogPolicy::None)?;
    let fractions = &cfg.run.fractions;
    for f in fractions {
        out.dir(Some(&condition_name(*f)))?;
    }
    let file = format!("iter_{}.csv", cfg.run.iterations);
    let write_log = |i: usize, log: &TrialLog| write_trial_csv(&out.root.join(condition_name(fractions[i])).join(&file), log);
    let rows = disturbance_sweep(
        &setup,
        &run.final_commands,
        &cfg.disturbance,
        fractions,
        cfg.run.repetitions,
        cfg.run.seed,
        &write_log,
    )?;
    let mut table = format!("{SWEEP_SCHEMA}\nfraction,load_kg,mean_abs_mm,std_mm,mse_mm2,repetitions,diverged\n");
    for r in &rows {
        let _ = writeln!(
            table,
            "{},{},{},{},{},{},{}",
            r.fraction, r.load_kg, r.mean_abs_mm, r.std_mm, r.mse_mm2, r.repetitions, r.diverged
        );
    }
    write_file(&out.root.join("sweep.csv"), table.as_bytes())?;
    let means: Vec<f64> = rows.iter().map(|r| r.mean_abs_mm).collect();
    Ok(json!({
        "learning": ilc_results(&run)?,
        "rows": to_value(&rows)?,
        "non_decreasing": non_decreasing(&means, 0.0),
    }))
}

fn compare(cfg: &ExperimentConfig, out: &Output) -> Result<serde_json::Value> {
    let (setup, run) = learn(cfg, cfg.run.log_iterations)?;
    write_kept(out, "ddilc", &run)?;
    let (gains, tuned) = if cfg.pid.tune {
        let (g, _) = tune_pid(&setup, &cfg.pid.grid, &cfg.disturbance, cfg.run.seed)?;
        (g, true)
    } else {
        (cfg.pid.gains, false)
    };
    let log = pid_baseline(&setup, gains, &cfg.disturbance, cfg.run.seed)?;
    let pid = compute_metrics(&log)?;
    if cfg.run.log_iterations != LogPolicy::None {
        let dir = out.dir(Some("pid"))?;
        write_trial_csv(&dir.join("iter_1.csv"), &log)?;
    }
    let ddilc = run.final_metrics();
    Ok(json!({
        "ddilc": ilc_results(&run)?,
        "pid": {
            "gains": gains,
            "tuned": tuned,
            "completed": log.completed(),
            "metrics": pid,
        },
        "ratio": ddilc.mean_abs_mm / pid.mean_abs_mm,
    }))
}

fn lowpass(cfg: &ExperimentConfig) -> Result<serde_json::Value> {
    to_value(&lowpass_attenuation_test(&cfg.muscle, &cfg.lowpass)?)
}
