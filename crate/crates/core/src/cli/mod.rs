//! Command-line front end: `simulate`, `verify`, `lab` and `probe`.
//!
//! Every command except `probe` writes its outputs under `--out` together
//! with a `manifest.toml`. Passing that manifest back as `--config`
//! re-runs the command with the recorded seed and resolved configuration.

pub mod commands;
pub mod config;
pub mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use config::ConfigFile;
use manifest::{Manifest, ManifestHeader, OutDir, MANIFEST_FILE};

#[derive(Debug, Parser)]
#[command(name = "lmcollapse", version, about = "Recursive-training collapse experiments")]
pub struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Run seed; overrides the config and manifest seeds.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML config file, or a manifest from an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Iterate the recurrence for one context and scan for convergence.
    Simulate,
    /// Randomized oracle-equivalence suites.
    Verify(VerifyArgs),
    /// Recursive training of a count model on its own samples.
    Lab,
    /// Print p(target | context) from a saved model.
    Probe(ProbeArgs),
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub n_max: Option<u64>,
    /// Accumulate rates, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<f64>>,
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    /// Model artifact written by `lab`.
    pub model: PathBuf,
    /// Target token label.
    #[arg(long)]
    pub target: String,
    /// Context token labels, oldest first.
    pub context: Vec<String>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Verify(_) => "verify",
            Command::Lab => "lab",
            Command::Probe(_) => "probe",
        }
    }
}

/// A command's result as far as the manifest and exit status care.
#[derive(Debug, Default)]
pub struct Outcome {
    pub passed: bool,
    pub warnings: Vec<String>,
    pub inputs: Vec<PathBuf>,
}

struct Loaded {
    file: ConfigFile,
    verbatim: String,
    base: PathBuf,
    seed: Option<u64>,
}

fn load(cli: &Cli) -> Result<Loaded> {
    let Some(path) = &cli.config else {
        return Ok(Loaded {
            file: ConfigFile::default(),
            verbatim: String::new(),
            base: std::env::current_dir().map_err(|e| Error::io(".", e))?,
            seed: None,
        });
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let origin = path.display().to_string();
    let base = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let base = fs::canonicalize(&base).map_err(|e| Error::io(&base, e))?;
    if Manifest::detect(&text) {
        let m = Manifest::parse(&text, &origin)?;
        if m.manifest.command != cli.command.name() {
            return Err(Error::Config(format!(
                "manifest records `{}`, not `{}`",
                m.manifest.command,
                cli.command.name()
            )));
        }
        return Ok(Loaded {
            file: ConfigFile::parse(&m.manifest.resolved, &origin)?,
            verbatim: m.manifest.config,
            base,
            seed: Some(m.manifest.seed),
        });
    }
    let file = ConfigFile::parse(&text, &origin)?;
    Ok(Loaded {
        seed: file.seed,
        file,
        verbatim: text,
        base,
    })
}

/// Runs one invocation. `Ok(false)` means a verification failure.
pub fn run(cli: &Cli) -> Result<bool> {
    if let Command::Probe(args) = &cli.command {
        println!("{}", commands::probe(args)?);
        return Ok(true);
    }
    let loaded = load(cli)?;
    let seed = cli.seed.or(loaded.seed).unwrap_or(0);
    if seed > config::TOML_INT_MAX {
        return Err(Error::Config(format!("seed must be at most {}", config::TOML_INT_MAX)));
    }
    let mut resolved = ConfigFile {
        seed: Some(seed),
        ..ConfigFile::default()
    };
    let mut out = OutDir::create(&cli.out)?;
    let outcome = match &cli.command {
        Command::Simulate => {
            let mut cfg = loaded.file.simulate.clone().ok_or_else(|| {
                Error::Config("simulate needs a [simulate] section in --config".into())
            })?;
            cfg.resolve(&loaded.base, seed);
            resolved.simulate = Some(cfg.clone());
            commands::simulate(&cfg, seed, &mut out)?
        }
        Command::Verify(args) => {
            let mut cfg = loaded.file.verify.clone().unwrap_or_default();
            cfg.trials = args.trials.or(cfg.trials);
            cfg.n_max = args.n_max.or(cfg.n_max);
            cfg.ks = args.k.clone().or(cfg.ks);
            cfg.inject_fault |= args.inject_fault;
            resolved.verify = Some(cfg.clone());
            commands::verify(&cfg, seed, &mut out)?
        }
        Command::Lab => {
            let mut cfg = loaded.file.lab.clone().unwrap_or_default();
            cfg.resolve(&loaded.base, seed);
            resolved.lab = Some(cfg.clone());
            commands::lab(&cfg, seed, &mut out)?
        }
        Command::Probe(_) => unreachable!("handled above"),
    };
    let resolved = resolved.to_toml()?;
    let inputs: Vec<&Path> = outcome.inputs.iter().map(PathBuf::as_path).collect();
    let manifest = Manifest {
        manifest: ManifestHeader {
            command: cli.command.name().to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            artifact_version: crate::lab::model::ARTIFACT_VERSION,
            seed,
            input_sha256: manifest::input_hash(&resolved, seed, &inputs)?,
            created: manifest::timestamp(),
            warnings: outcome.warnings.clone(),
            config: loaded.verbatim,
            resolved,
        },
        outputs: out.digests().clone(),
    };
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    let path = out.root().join(MANIFEST_FILE);
    fs::write(&path, manifest.to_toml()?).map_err(|e| Error::io(&path, e))?;
    Ok(outcome.passed)
}

/// Parses the process arguments and maps the result to an exit code:
/// 0 success, 1 verification failure, 2 usage or runtime error.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
