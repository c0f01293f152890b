use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tiltcert_runner::{run_config, validate_config, ExperimentConfig, RunError, RunOptions};

/// Spectra, ramps, dephasing and certification plans for tilted Hubbard arrays.
#[derive(Debug, Parser)]
#[command(name = "tiltcert", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Labelled low-energy eigenstates at one tilt.
    Spectrum(Shared),
    /// Eigenstates over a tilt grid, gap minima and anti-crossings.
    Sweep(Shared),
    /// Closed-system tilt ramps with fidelity tracking.
    Evolve(Shared),
    /// Tilt ramps under charge dephasing.
    Lindblad(Shared),
    /// Tilt planning and protocol Monte Carlo.
    Certify(Shared),
    /// Checks a config without running it.
    Validate(Shared),
}

#[derive(Debug, Args)]
struct Shared {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Leave the creation time out of file headers.
    #[arg(long)]
    no_timestamp: bool,
}

fn error_line(code: &str, message: String) -> String {
    let message = serde_json::to_string(&message).expect("strings serialize");
    format!("{{\"status\":\"error\",\"code\":\"{code}\",\"message\":{message}}}")
}

/// Runs one command; `Ok` holds stdout lines, `Err` the JSON error line.
fn execute(cli: Cli) -> Result<Vec<String>, String> {
    let (expected, shared) = match &cli.command {
        Command::Spectrum(s) => (Some("spectrum"), s),
        Command::Sweep(s) => (Some("sweep"), s),
        Command::Evolve(s) => (Some("evolve"), s),
        Command::Lindblad(s) => (Some("lindblad"), s),
        Command::Certify(s) => (Some("certify"), s),
        Command::Validate(s) => (None, s),
    };
    let path = shared.config.display();
    let text = std::fs::read_to_string(&shared.config).map_err(|e| error_line("io", format!("{path}: {e}")))?;
    let config = ExperimentConfig::from_toml(&text).map_err(|e| error_line("parse", format!("{path}: {e}")))?;
    let Some(kind) = expected else {
        validate_config(&config).map_err(|errors| RunError::Invalid(errors).json_line())?;
        return Ok(vec!["{\"status\":\"ok\"}".to_string()]);
    };
    if config.experiment.name() != kind {
        return Err(error_line(
            "validation",
            format!("experiment.kind: config describes {:?}, not {kind:?}", config.experiment.name()),
        ));
    }
    let opts = RunOptions {
        seed: shared.seed,
        output_dir: shared.out.clone(),
        threads: shared.threads,
        timestamps: !shared.no_timestamp,
    };
    let report = run_config(&config, &opts).map_err(|e| e.json_line())?;
    Ok(report.notes.into_iter().chain(report.files.iter().map(|f| format!("wrote {}", f.display()))).collect())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(line) => {
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> Result<Vec<String>, String> {
        execute(Cli::try_parse_from(std::iter::once("tiltcert").chain(args.iter().copied())).unwrap())
    }

    #[test]
    fn errors_come_back_as_one_json_line() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.toml");
        std::fs::write(&bad, "[geometry]\nkind = \"chain\"\nsites = 4\n[params]\nU = -1.0\n[experiment]\nkind = \"spectrum\"\n")
            .unwrap();
        let out = dir.path().join("o");
        let err = run(&["spectrum", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]).unwrap_err();
        assert_eq!(err.lines().count(), 1);
        assert!(err.starts_with("{\"status\":\"error\",\"code\":\"validation\""), "{err}");
        assert!(err.contains("\"field\":\"params.U\""));
        assert!(!out.exists());
        assert!(run(&["validate", "--config", bad.to_str().unwrap()]).unwrap_err().contains("params.U"));

        let missing = dir.path().join("missing.toml");
        assert!(run(&["validate", "--config", missing.to_str().unwrap()]).unwrap_err().contains("\"code\":\"io\""));
        std::fs::write(&bad, "[geometry]\nkind = \"chain\"\n").unwrap();
        assert!(run(&["validate", "--config", bad.to_str().unwrap()]).unwrap_err().contains("\"code\":\"parse\""));
    }

    #[test]
    fn subcommand_must_match_the_config_and_flags_override_it() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("good.toml");
        std::fs::write(&good, "[geometry]\nkind = \"chain\"\nsites = 4\n[experiment]\nkind = \"spectrum\"\neps = 35.0\n").unwrap();
        let g = good.to_str().unwrap();
        assert!(run(&["sweep", "--config", g]).unwrap_err().contains("experiment.kind"));
        assert_eq!(run(&["validate", "--config", g]).unwrap(), ["{\"status\":\"ok\"}"]);
        let o = dir.path().join("o");
        let lines =
            run(&["spectrum", "--config", g, "--out", o.to_str().unwrap(), "--seed", "9", "--threads", "1", "--no-timestamp"])
                .unwrap();
        assert_eq!(lines, [format!("wrote {}", o.join("spectrum.csv").display())]);
        let text = std::fs::read_to_string(o.join("spectrum.csv")).unwrap();
        assert!(text.contains("# seed = 9"));
        assert!(!text.contains("created_unix"));
        assert_eq!(tiltcert_runner::read_table(&o.join("spectrum.csv")).unwrap().rows.len(), 6);
    }
}
