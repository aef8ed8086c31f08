use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nmq_cli::config::Experiment;
use nmq_cli::pipeline;
use nmq_cli::presets::{self, Case};
use nmq_cli::{load_config, CliError};

/// Non-Markovian qubit dynamics: rates, dynamical maps and experiment signatures.
#[derive(Debug, Parser)]
#[command(name = "nmq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate γ±, the Lamb shift and the canonical rates.
    Rates(RunArgs),
    /// Propagate the dynamical map and write Γ, Z, φ, x±, CP flags and Bloch components.
    Evolve(RunArgs),
    /// Complete-positivity certificates only, with a verdict line.
    CpCheck(RunArgs),
    /// Precession spectra of ⟨σx⟩, non-Markovian and Markovian side by side.
    Spectrum(RunArgs),
    /// Ramsey X/Y ground-state probability difference over the delay time.
    Ramsey(RunArgs),
    /// Run the oracle suite, write a JSON report and fail on any violation.
    Verify(RunArgs),
    /// Run the experiment selected in the configuration.
    Run(RunArgs),
    /// List the built-in presets with their parameters.
    ListPresets,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false, id = "source")]
struct Source {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset name.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    /// Output directory; falls back to the config, then NMQ_OUT_DIR, then `.`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Multiplies every solver and quadrature tolerance.
    #[arg(long, default_value_t = 1.0)]
    tolerance_scale: f64,
}

fn cases(source: &Source) -> Result<Vec<Case>, CliError> {
    if let Some(path) = &source.config {
        let config = load_config(path)?;
        let label = path
            .file_stem()
            .map_or_else(|| "run".to_string(), |s| s.to_string_lossy().into_owned());
        return Ok(vec![Case { label, config }]);
    }
    let name = source.preset.as_deref().unwrap_or_default();
    presets::find(name).map(|p| p.cases).ok_or_else(|| CliError::Config {
        field: "--preset".into(),
        message: format!(
            "unknown preset `{name}` (available: {})",
            presets::presets().iter().map(|p| p.name).collect::<Vec<_>>().join(", ")
        ),
    })
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let io = |e: std::io::Error| CliError::Io {
        path: dir.join(name),
        message: e.to_string(),
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(io)?;
    Ok(path)
}

fn execute(args: &RunArgs, experiment: Option<Experiment>) -> Result<(), CliError> {
    if !(args.tolerance_scale > 0.0 && args.tolerance_scale.is_finite()) {
        return Err(CliError::Config {
            field: "--tolerance-scale".into(),
            message: format!("must be > 0, got {}", args.tolerance_scale),
        });
    }
    let mut passed = true;
    for mut case in cases(&args.source)? {
        case.config.solver = case.config.solver.scaled(args.tolerance_scale);
        let resolved = case.config.resolve()?;
        let dir = args
            .out
            .clone()
            .or_else(|| case.config.output_dir.clone())
            .or_else(|| std::env::var_os("NMQ_OUT_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        let which = experiment.unwrap_or(case.config.experiment);
        let outcome = pipeline::run(&resolved, which, &case.label)?;
        for out in &outcome.outputs {
            let path = write(&dir, &out.file_name, &out.contents)?;
            println!("wrote {}", path.display());
        }
        for m in &outcome.messages {
            println!("{m}");
        }
        passed &= outcome.passed;
    }
    if passed {
        Ok(())
    } else {
        Err(CliError::VerifyFailed)
    }
}

fn list_presets() {
    for p in presets::presets() {
        println!("{}: {}", p.name, p.description);
        for c in &p.cases {
            println!("  [{}]", c.label);
            for line in c.config.to_toml().lines().filter(|l| !l.is_empty()) {
                println!("    {line}");
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Rates(a) => execute(a, Some(Experiment::Rates)),
        Command::Evolve(a) => execute(a, Some(Experiment::Evolve)),
        Command::CpCheck(a) => execute(a, Some(Experiment::CpCheck)),
        Command::Spectrum(a) => execute(a, Some(Experiment::Spectrum)),
        Command::Ramsey(a) => execute(a, Some(Experiment::Ramsey)),
        Command::Verify(a) => execute(a, Some(Experiment::Verify)),
        Command::Run(a) => execute(a, None),
        Command::ListPresets => {
            list_presets();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nmq: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
