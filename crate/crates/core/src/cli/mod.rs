//! Batch entry point behind the `tcsde` binary.
//!
//! Every command reads the flat configuration, applies `--set` overrides,
//! writes its data files plus a JSON report into the output directory and
//! maps the outcome to an exit status: 0 pass, 1 statistical failure,
//! 2 usage or domain error.

pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

pub use config::Config;

use crate::convergence::{strong_error, validate_inverse_moments, validate_solution_moment_bound};
use crate::error::{Error, Result};
use crate::models::{audit, AuditConfig, CoefficientModel};
use crate::par::with_workers;
use crate::rng::{derive, Label};
use crate::subordinator::{generate_path, StableSpec};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "TCSDE_OUT_DIR";

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "tcsde", version, about = "Time-changed Lévy SDE simulation and convergence experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat key=value configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed (overrides the `seed` key).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: $TCSDE_OUT_DIR, else ./tcsde-out).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every processor.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Clone, Copy, Debug, Subcommand)]
enum Command {
    /// Sample one subordinator path and its inverse on an evaluation grid.
    Sample,
    /// Check inverse-subordinator moments and the solution moment bound.
    Validate,
    /// Estimate strong errors on the step ladder and fit the order.
    Converge,
    /// Audit the configured model against its declared constants.
    Audit,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::Validate => "validate",
            Command::Converge => "converge",
            Command::Audit => "audit",
        }
    }
}

/// Parses arguments, runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_PASS };
        }
    };
    let out = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("tcsde-out"));
    let name = cli.command.name();
    let outcome = load_config(&cli).and_then(|cfg| {
        let command = cli.command;
        let result = with_workers(cli.workers, || execute(command, &cfg, &out));
        result.map(|pass| (pass, cfg))
    });
    match outcome {
        Ok((pass, _)) => {
            if pass {
                EXIT_PASS
            } else {
                EXIT_FAIL
            }
        }
        Err(e) => {
            eprintln!("tcsde {name}: {e}");
            let report = json!({ "schema_version": SCHEMA_VERSION, "command": name, "error": e.to_string() });
            let _ = std::fs::create_dir_all(&out).and_then(|_| {
                std::fs::write(out.join(format!("{name}.json")), pretty(&report))
            });
            EXIT_ERROR
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = Config::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    for pair in &cli.set {
        cfg.set_pair(pair)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| Error::Io { path, source })
}

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("reports serialize")
}

/// Runs `command`; `Ok(true)` means every check passed.
fn execute(command: Command, cfg: &Config, out: &Path) -> Result<bool> {
    let name = command.name();
    let (report, data, pass) = match command {
        Command::Sample => cmd_sample(cfg)?,
        Command::Validate => cmd_validate(cfg)?,
        Command::Converge => cmd_converge(cfg)?,
        Command::Audit => cmd_audit(cfg)?,
    };
    let mut report = report;
    report["schema_version"] = json!(SCHEMA_VERSION);
    report["command"] = json!(name);
    report["config"] = cfg.pairs().into_iter().map(|(k, v)| (k.to_string(), Value::String(v))).collect();
    report["pass"] = json!(pass);
    if let Some(csv) = data {
        write(out, &format!("{name}.csv"), &csv)?;
    }
    write(out, &format!("{name}.cfg"), &cfg.to_text())?;
    write(out, &format!("{name}.json"), &pretty(&report))?;
    Ok(pass.unwrap_or(true))
}

type CommandOutput = (Value, Option<String>, Option<bool>);

fn cmd_sample(cfg: &Config) -> Result<CommandOutput> {
    let spec = StableSpec::new(cfg.alpha, cfg.delta, cfg.horizon)?;
    let path = generate_path(spec, cfg.seed)?;
    let values = path.values();
    let last = values.len() - 1;
    let mut csv = String::from("n,t_grid,D,E_tilde\n");
    for (n, &d) in values.iter().enumerate() {
        let t = cfg.horizon * n as f64 / last as f64;
        csv.push_str(&format!("{n},{t:?},{d:?},{:?}\n", path.inverse_at(t)?));
    }
    let report = json!({
        "n_steps": path.n_steps(),
        "e_tilde_T": path.inverse_at(cfg.horizon)?,
        "overshoot": values[last],
    });
    Ok((report, Some(csv), None))
}

fn cmd_validate(cfg: &Config) -> Result<CommandOutput> {
    let model = cfg.model()?;
    let scheme = cfg.scheme()?;
    let checks: Vec<_> = validate_inverse_moments(cfg.alpha, cfg.horizon, &cfg.moments, cfg.n_paths, cfg.delta, cfg.seed)?
        .into_iter()
        .map(|c| c.rescaled(cfg.oracle_scale))
        .collect();
    let bound = validate_solution_moment_bound(&model, cfg.alpha, cfg.horizon, cfg.n_paths, &scheme, cfg.seed)?
        .rescaled(cfg.bound_scale);
    let pass = checks.iter().all(|c| c.pass) && bound.pass;
    let mut csv = String::from("check,p,oracle,estimate,std_error,bias,z_score,pass\n");
    for c in &checks {
        csv.push_str(&format!(
            "inverse_moment,{:?},{:?},{:?},{:?},{:?},{:?},{}\n",
            c.p, c.oracle, c.estimate, c.std_error, c.bias, c.z_score, c.pass
        ));
    }
    let z = (bound.estimate - bound.bound) / bound.std_error;
    csv.push_str(&format!(
        "solution_bound,{:?},{:?},{:?},{:?},0.0,{:?},{}\n",
        2.0 * model.constants().h,
        bound.bound,
        bound.estimate,
        bound.std_error,
        z,
        bound.pass
    ));
    let report = json!({ "inverse_moments": to_value(&checks), "solution_bound": to_value(&bound) });
    Ok((report, Some(csv), Some(pass)))
}

fn cmd_converge(cfg: &Config) -> Result<CommandOutput> {
    let model = cfg.model()?;
    let rep = strong_error(&model, &cfg.strong_error_config()?)?;
    let fit = rep.fit;
    let report = json!({
        "fitted_order": fit.map(|f| f.slope),
        "ci_low": fit.map(|f| f.ci_low),
        "ci_high": fit.map(|f| f.ci_high),
        "r2": fit.map(|f| f.r2),
        "predicted_order": rep.predicted_order,
        "binding_exponent": rep.binding_exponent,
        "degenerate": rep.degenerate,
        "tolerance": cfg.tolerance,
        "reference_delta": rep.reference_delta,
        "failed_paths": rep.failed_paths,
        "warnings": rep.warnings,
        "levels": to_value(&rep.levels),
    });
    Ok((report, Some(rep.to_csv()), rep.within(cfg.tolerance)))
}

fn cmd_audit(cfg: &Config) -> Result<CommandOutput> {
    let model = cfg.model()?;
    let mut ac = AuditConfig::new(cfg.audit_radius, cfg.audit_samples, cfg.horizon);
    ac.slack = cfg.audit_slack;
    let rep = audit(&model, &ac, &mut derive(cfg.seed, 0, Label::Auxiliary));
    let pass = rep.passed();
    let mut csv = String::from("condition,constant,declared,worst_ratio,pass\n");
    for e in &rep.entries {
        let verdict = e.pass.map_or("info".to_string(), |p| p.to_string());
        csv.push_str(&format!("{},{},{:?},{:?},{}\n", e.condition, e.constant, e.declared, e.worst_ratio, verdict));
    }
    let report = json!({ "audit": to_value(&rep), "constants": to_value(model.constants()) });
    Ok((report, Some(csv), Some(pass)))
}
