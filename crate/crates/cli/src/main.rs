//! `mixed-greens`: command-line driver for semiclassical Green functions.

mod commands;
mod config;
mod selftest;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use serde::Serialize;

use commands::{Artifacts, Failure};
use config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    Greens,
    Scan,
    OracleCompare,
    Uniformize,
    Selftest,
}

#[derive(Parser)]
#[command(name = "mixed-greens", version, about = "Semiclassical Green functions in mixed position/momentum representations")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing); overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Settings {
    t_max: f64,
    truncation: mixed_greens::greens::Truncation,
    prefactor: mixed_greens::greens::PrefactorExponent,
    fd_step: f64,
    step: f64,
}

#[derive(Serialize)]
struct Metadata<'a> {
    tool: &'static str,
    version: &'static str,
    command: Command,
    status: &'static str,
    config: &'a serde_json::Value,
    settings: Settings,
    outputs: Vec<String>,
    diagnostics: Vec<String>,
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("MIXED_GREENS_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Failure::Usage(format!("MIXED_GREENS_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Usage(format!("cannot size the thread pool: {e}")))
}

fn execute(command: Command, cfg: &RunConfig) -> Result<Artifacts, Failure> {
    match command {
        Command::Greens => commands::greens(cfg),
        Command::Scan => commands::scan(cfg),
        Command::OracleCompare => commands::oracle_compare(cfg),
        Command::Uniformize => commands::run_uniformize(cfg),
        Command::Selftest => {
            let checks = selftest::run();
            let mut summary = String::new();
            for c in &checks {
                let verdict = if c.passed { "PASS" } else { "FAIL" };
                let _ = writeln!(summary, "{verdict} {} (worst {:.3e}, tolerance {:.1e})", c.name, c.worst, c.tolerance);
            }
            let mut report = serde_json::to_string_pretty(&checks).expect("serializable");
            report.push('\n');
            Ok(Artifacts {
                files: vec![("selftest.json".into(), report)],
                stdout: Some(summary),
                failed: checks.iter().any(|c| !c.passed),
                diagnostics: Vec::new(),
            })
        }
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    std::fs::write(dir.join(name), contents)
        .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", dir.join(name).display())))
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    configure_threads()?;
    let (cfg, echo) = config::load(&cli.config)?;
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", out.display())))?;
    let settings = Settings {
        t_max: cfg.search.t_max,
        truncation: cfg.assemble.truncation,
        prefactor: cfg.assemble.prefactor,
        fd_step: cfg.assemble.fd_step,
        step: cfg.search.step,
    };
    let result = execute(cli.command, &cfg);
    let (status, outputs, diagnostics) = match &result {
        Ok(a) => (
            if a.failed { "failed" } else { "ok" },
            a.files.iter().map(|(name, _)| name.clone()).collect(),
            a.diagnostics.clone(),
        ),
        Err(Failure::Usage(m)) => ("usage-error", Vec::new(), vec![m.clone()]),
        Err(Failure::Compute(m)) => ("error", Vec::new(), vec![m.clone()]),
    };
    let metadata = Metadata {
        tool: "mixed-greens",
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command,
        status,
        config: &echo,
        settings,
        outputs,
        diagnostics,
    };
    let mut meta = serde_json::to_string_pretty(&metadata).expect("serializable");
    meta.push('\n');
    write(&out, "metadata.json", &meta)?;
    let artifacts = result?;
    for (name, contents) in &artifacts.files {
        write(&out, name, contents)?;
    }
    for d in &artifacts.diagnostics {
        eprintln!("note: {d}");
    }
    if let Some(s) = &artifacts.stdout {
        print!("{s}");
    }
    Ok(!artifacts.failed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Compute(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
