use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use fluxtune::config::{parse_config, RunConfig};
use fluxtune::run::{run, Subcommand};
use fluxtune::table::{self, Format};
use fluxtune::{EngineKind, FluxtuneError, Result};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Derive,
    Validate,
    Schedule,
    Spectrum,
    Couplings,
    Noise,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::Derive => Self::Derive,
            Command::Validate => Self::Validate,
            Command::Schedule => Self::Schedule,
            Command::Spectrum => Self::Spectrum,
            Command::Couplings => Self::Couplings,
            Command::Noise => Self::Noise,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Engine {
    Exact,
    Perturbative,
}

/// Spectrum, tunable coupling and decoherence budget of a two-dc-SQUID artificial atom.
///
/// Reads a JSON configuration; flags override individual fields.
/// FLUXTUNE_THREADS caps the number of worker threads.
#[derive(Debug, Parser)]
#[command(name = "fluxtune", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON configuration file, or `-` for stdin.
    #[arg(long)]
    config: String,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutFormat,
    #[arg(long, value_enum)]
    engine: Option<Engine>,
    /// Oscillator Fock cutoff.
    #[arg(long)]
    nb: Option<usize>,
    /// Charge cutoff: n₋ ∈ [−M, M].
    #[arg(long)]
    ncharge: Option<usize>,
}

fn read_config(src: &str) -> Result<String> {
    let mut text = String::new();
    if src == "-" {
        std::io::stdin()
            .read_to_string(&mut text)
            .map_err(|source| FluxtuneError::Io {
                path: "<stdin>".into(),
                source,
            })?;
    } else {
        text = std::fs::read_to_string(src).map_err(|source| FluxtuneError::Io {
            path: src.into(),
            source,
        })?;
    }
    Ok(text)
}

fn apply_overrides(cfg: &mut RunConfig, cli: &Cli) {
    if let Some(e) = cli.engine {
        cfg.engine = match e {
            Engine::Exact => EngineKind::Exact,
            Engine::Perturbative => EngineKind::Perturbative,
        };
    }
    if let Some(n) = cli.nb {
        cfg.truncation.n_fock = n;
    }
    if let Some(m) = cli.ncharge {
        cfg.truncation.n_charge = m;
    }
}

fn init_threads() -> Result<()> {
    faer::set_global_parallelism(faer::Par::Seq);
    let Ok(v) = std::env::var("FLUXTUNE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| FluxtuneError::Config {
            path: "FLUXTUNE_THREADS".into(),
            message: format!("`{v}` is not a positive integer"),
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| FluxtuneError::Config {
            path: "FLUXTUNE_THREADS".into(),
            message: e.to_string(),
        })
}

fn execute(cli: &Cli) -> Result<()> {
    init_threads()?;
    let mut cfg = parse_config(&read_config(&cli.config)?)?;
    apply_overrides(&mut cfg, cli);
    let table = run(cli.command.into(), &cfg)?;
    let format = match cli.format {
        OutFormat::Csv => Format::Csv,
        OutFormat::Json => Format::Json,
    };
    match &cli.out {
        Some(path) => table::emit(&table, format, path),
        None => {
            let text = table::render(&table, format)?;
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|source| FluxtuneError::Io {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{body}");
            ExitCode::FAILURE
        }
    }
}
