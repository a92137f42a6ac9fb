//! Argument parsing and dispatch.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::commands::{self, CommandOutput};
use crate::config::{parse_list, parse_param, Config, ModelFile};
use crate::manifest::{timestamp_now, write_all, RunManifest};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "twoscale",
    version,
    about = "Homogenization and large-deviation toolkit for two-scale volatility models"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by all commands. Each can also be set through the
/// environment variable shown in `--help`.
#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true, env = "TWOSCALE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Directory receiving all outputs.
    #[arg(long, global = true, env = "TWOSCALE_OUT_DIR", default_value = ".")]
    pub out_dir: PathBuf,
    /// Model file (`name`, `params`, `alpha`), or a catalog name when no such file exists.
    #[arg(long, global = true, env = "TWOSCALE_MODEL")]
    pub model: Option<String>,
    /// Catalog model name.
    #[arg(
        long,
        global = true,
        env = "TWOSCALE_CATALOG",
        conflicts_with = "model"
    )]
    pub catalog: Option<String>,
    /// Model parameter `key=value`, applied after the model file; repeatable.
    #[arg(long = "param", global = true, value_parser = parse_param)]
    pub params: Vec<(String, f64)>,
    /// Scale separation exponent.
    #[arg(long, global = true, env = "TWOSCALE_ALPHA")]
    pub alpha: Option<f64>,
    #[arg(long, global = true, env = "TWOSCALE_SEED")]
    pub seed: Option<u64>,
    /// Cell and invariant-measure solver tolerance.
    #[arg(long, global = true, env = "TWOSCALE_TOL")]
    pub tol: Option<f64>,
    /// Fast torus nodes per axis.
    #[arg(long, global = true, env = "TWOSCALE_RESOLUTION")]
    pub resolution: Option<usize>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "TWOSCALE_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check periodicity and ellipticity of a model.
    Validate {
        #[arg(long)]
        probe_resolution: Option<usize>,
    },
    /// Invariant measure of the fast process.
    Invariant,
    /// Effective Hamiltonian on a momentum grid with regime cross-checks.
    Hamiltonian {
        /// Comma-separated positions.
        #[arg(long, value_parser = parse_list)]
        x: Option<Vec<f64>>,
        #[arg(long, allow_negative_numbers = true)]
        p_min: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        p_max: Option<f64>,
        #[arg(long)]
        p_count: Option<usize>,
    },
    /// Rate function on a grid of end points.
    Rate {
        #[arg(long, allow_negative_numbers = true)]
        x0: Option<f64>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        x_min: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        x_max: Option<f64>,
        #[arg(long)]
        x_count: Option<usize>,
        #[arg(long)]
        segments: Option<usize>,
    },
    /// Effective Hamilton–Jacobi equation against the Hopf–Lax formula.
    Pde {
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long)]
        cfl: Option<f64>,
    },
    /// Monte Carlo check of the large-deviation rate.
    #[command(name = "ldp-verify")]
    LdpVerify {
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        threshold: Option<f64>,
        /// Comma-separated, decreasing.
        #[arg(long, value_parser = parse_list)]
        eps: Option<Vec<f64>>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long, default_value = "ldp.csv")]
        out: String,
    },
    /// Monte Carlo implied volatilities against the short-maturity limit.
    Smile {
        #[arg(long)]
        s0: Option<f64>,
        /// Comma-separated strikes.
        #[arg(long, value_parser = parse_list)]
        strikes: Option<Vec<f64>>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, value_parser = parse_list)]
        eps: Option<Vec<f64>>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long, default_value = "smile.csv")]
        out: String,
    },
    /// All of the above for one model and alpha, with a pass/fail report.
    Pipeline {
        /// Extra copy of the report.
        #[arg(long)]
        json_report: Option<PathBuf>,
    },
    /// Repeat the run recorded in a manifest.
    Rerun { manifest: PathBuf },
}

fn resolve(global: &GlobalArgs) -> Result<Config, CliError> {
    let mut cfg = match &global.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    match (&global.model, &global.catalog) {
        (Some(m), _) if Path::new(m).is_file() => ModelFile::load(Path::new(m))?.apply(&mut cfg),
        (Some(name), _) | (None, Some(name)) => cfg.model = name.clone(),
        (None, None) => {}
    }
    for (k, v) in &global.params {
        cfg.params.insert(k.clone(), *v);
    }
    if let Some(a) = global.alpha {
        cfg.alpha = a;
    }
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    if let Some(t) = global.tol {
        cfg.tol = t;
    }
    if let Some(r) = global.resolution {
        cfg.resolution = r;
    }
    Ok(cfg)
}

fn set<T: Clone>(target: &mut T, v: &Option<T>) {
    if let Some(v) = v {
        *target = v.clone();
    }
}

/// Applies command flags and returns the manifest name and the CSV name of
/// single-table commands.
fn apply(cmd: &Command, cfg: &mut Config) -> (&'static str, Option<String>) {
    match cmd {
        Command::Validate { probe_resolution } => {
            set(&mut cfg.probe_resolution, probe_resolution);
            ("validate", None)
        }
        Command::Invariant => ("invariant", None),
        Command::Hamiltonian {
            x,
            p_min,
            p_max,
            p_count,
        } => {
            let h = &mut cfg.hamiltonian;
            set(&mut h.x, x);
            set(&mut h.p_min, p_min);
            set(&mut h.p_max, p_max);
            set(&mut h.p_count, p_count);
            ("hamiltonian", None)
        }
        Command::Rate {
            x0,
            t,
            x_min,
            x_max,
            x_count,
            segments,
        } => {
            let r = &mut cfg.rate;
            set(&mut r.x0, x0);
            set(&mut r.t, t);
            set(&mut r.x_min, x_min);
            set(&mut r.x_max, x_max);
            set(&mut r.x_count, x_count);
            set(&mut r.segments, segments);
            ("rate", None)
        }
        Command::Pde { t, nodes, cfl } => {
            set(&mut cfg.pde.t, t);
            set(&mut cfg.pde.nodes, nodes);
            set(&mut cfg.pde.cfl, cfl);
            ("pde", None)
        }
        Command::LdpVerify {
            t,
            threshold,
            eps,
            paths,
            out,
        } => {
            let l = &mut cfg.ldp;
            set(&mut l.t, t);
            set(&mut l.threshold, threshold);
            set(&mut l.eps, eps);
            set(&mut l.paths, paths);
            ("ldp-verify", Some(out.clone()))
        }
        Command::Smile {
            s0,
            strikes,
            t,
            eps,
            paths,
            out,
        } => {
            let s = &mut cfg.smile;
            set(&mut s.s0, s0);
            set(&mut s.strikes, strikes);
            set(&mut s.t, t);
            set(&mut s.eps, eps);
            set(&mut s.paths, paths);
            ("smile", Some(out.clone()))
        }
        Command::Pipeline { .. } => ("pipeline", None),
        Command::Rerun { .. } => ("rerun", None),
    }
}

/// Runs a named command on a resolved configuration.
pub fn execute(
    command: &str,
    cfg: &Config,
    table: Option<&str>,
) -> Result<CommandOutput, CliError> {
    cfg.check()?;
    match command {
        "validate" => commands::validate(cfg),
        "invariant" => commands::invariant(cfg),
        "hamiltonian" => commands::hamiltonian(cfg),
        "rate" => commands::rate(cfg),
        "pde" => commands::pde(cfg),
        "ldp-verify" => commands::ldp_verify(cfg, table.unwrap_or("ldp.csv")),
        "smile" => commands::smile(cfg, table.unwrap_or("smile.csv")),
        "pipeline" => commands::pipeline(cfg),
        other => Err(CliError::Config(format!("unknown command `{other}`"))),
    }
}

fn print_checks(out: &CommandOutput) {
    for c in &out.checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        println!(
            "{tag} {}: {} (threshold {}) {}",
            c.name, c.value, c.threshold, c.detail
        );
    }
}

fn finish(
    command: &str,
    cfg: &Config,
    out_dir: &Path,
    timestamp: String,
    out: CommandOutput,
    json_report: Option<&PathBuf>,
) -> Result<(), CliError> {
    print_checks(&out);
    let manifest = write_all(out_dir, command, cfg, timestamp, &out.artifacts)?;
    println!("manifest {}", manifest.display());
    if let Some(path) = json_report {
        if let Some(report) = out.artifacts.iter().find(|a| a.name == "report.json") {
            std::fs::write(path, &report.bytes)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        }
    }
    let failed: Vec<&str> = out
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    if command == "pipeline" && !failed.is_empty() {
        return Err(CliError::Verification(failed.join(", ")));
    }
    Ok(())
}

fn run_parsed(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.global.threads {
        // a second initialization in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    if let Command::Rerun { manifest } = &cli.command {
        let m = RunManifest::load(manifest)?;
        let table = match m.command.as_str() {
            "ldp-verify" | "smile" => m.outputs.first().map(|o| o.file.clone()),
            _ => None,
        };
        let out = execute(&m.command, &m.config, table.as_deref())?;
        return finish(
            &m.command,
            &m.config,
            &cli.global.out_dir,
            m.timestamp.clone(),
            out,
            None,
        );
    }
    let mut cfg = resolve(&cli.global)?;
    let (name, table) = apply(&cli.command, &mut cfg);
    let out = execute(name, &cfg, table.as_deref())?;
    let json_report = match &cli.command {
        Command::Pipeline { json_report } => json_report.as_ref(),
        _ => None,
    };
    finish(
        name,
        &cfg,
        &cli.global.out_dir,
        timestamp_now(),
        out,
        json_report,
    )
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_parsed(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.record());
            e.exit_code()
        }
    }
}
