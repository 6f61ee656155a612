use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use fockspec::config::RunConfig;
use fockspec::{Error, GridMode, Result};

mod commands;
mod output;

use commands::Outcome;
use output::RunReport;

#[derive(Parser)]
#[command(name = "fockspec", version, about = "Spectral checks for the truncated Fock-space operator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Overrides,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Coupling thresholds and regime of each channel.
    Classify,
    /// Two-particle branches, zero sets and vanishing orders (CSV per channel).
    Branches,
    /// Essential spectrum, Σ, discrete eigenvalues below m and channel embeddings.
    Spectrum,
    /// Weinberg operator: signs, block norms, continuity and fixed points.
    Weinberg,
    /// All of the above in one report.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::Branches => "branches",
            Command::Spectrum => "spectrum",
            Command::Weinberg => "weinberg",
            Command::Report => "report",
        }
    }
}

#[derive(Args)]
struct Overrides {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for reports and CSV files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    grid_n: Option<usize>,
    /// `base` or `double`.
    #[arg(long, global = true)]
    grid_mode: Option<String>,
    /// Comma-separated grid sizes, e.g. "2,4".
    #[arg(long, global = true)]
    refine: Option<String>,
    /// Comma-separated spectral parameters, e.g. "-0.5,-3".
    #[arg(long, global = true, allow_hyphen_values = true)]
    z_list: Option<String>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

fn split<T: std::str::FromStr>(flag: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse().map_err(|_| Error::Config {
                line: 0,
                message: format!("--{flag}: cannot parse `{t}`"),
            })
        })
        .collect()
}

fn load_config(o: &Overrides) -> Result<RunConfig> {
    let mut cfg = match &o.config {
        Some(path) => {
            if !path.is_file() {
                return Err(Error::Config {
                    line: 0,
                    message: format!("config file {} does not exist", path.display()),
                });
            }
            RunConfig::load(path)?
        }
        None => RunConfig::default(),
    };
    if let Some(n) = o.grid_n {
        cfg.grid_n = n;
    }
    if let Some(m) = &o.grid_mode {
        cfg.grid_mode = GridMode::parse(m).map_err(|e| Error::Config {
            line: 0,
            message: e.to_string(),
        })?;
    }
    if let Some(r) = &o.refine {
        cfg.refine = split("refine", r)?;
    }
    if let Some(z) = &o.z_list {
        cfg.z_list = split("z-list", z)?;
    }
    if o.tol.is_some() {
        cfg.tol = o.tol;
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(&cli.opts)?;
    let started = Instant::now();
    let outcome = match cli.command {
        Command::Classify => commands::classify(&cfg)?,
        Command::Branches => commands::branches(&cfg)?,
        Command::Spectrum => commands::spectrum(&cfg)?,
        Command::Weinberg => commands::weinberg(&cfg)?,
        Command::Report => {
            let parts = [
                ("classify", commands::classify(&cfg)?),
                ("branches", commands::branches(&cfg)?),
                ("spectrum", commands::spectrum(&cfg)?),
                ("weinberg", commands::weinberg(&cfg)?),
            ];
            let mut files = Vec::new();
            let mut results = serde_json::Map::new();
            for (name, o) in parts {
                results.insert(name.to_string(), o.results);
                files.extend(o.files);
            }
            Outcome {
                results: results.into(),
                files,
            }
        }
    };
    let name = cli.command.name();
    let report = RunReport::new(name, &cfg, outcome.results, started.elapsed().as_secs_f64());
    std::fs::create_dir_all(&cli.opts.out)?;
    for (file, body) in &outcome.files {
        output::write_atomic(&cli.opts.out.join(file), body.as_bytes())?;
    }
    let path = cli.opts.out.join(format!("{name}.json"));
    output::write_atomic(&path, report.to_json()?.as_bytes())?;
    println!("{}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fockspec: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
