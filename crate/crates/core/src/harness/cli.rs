use std::ffi::OsString;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use super::config::parse_override;
use super::{emit_trace, run_experiment, run_sweep, write_file, ExperimentConfig, HarnessError, SweepSpec};
use crate::channel::{calibrate_score_model, sample_scores, FrameScores};
use crate::codec::{encode_message_stream, LedWaveform, Payload};
use crate::decoder::decode_stream;
use crate::ecc::{ecc_decode, ecc_encode};
use crate::metrics::roc_auc;

#[derive(Debug, Parser)]
#[command(name = "uvclink", version, about = "LED blink messaging: encode, simulate, decode, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Experiment configuration (JSON). Defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config field by dotted path, e.g. `--set channel.seed=7`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn overrides(&self) -> Result<Vec<(String, Value)>, HarnessError> {
        self.set.iter().map(|s| parse_override(s)).collect()
    }

    fn load(&self) -> Result<ExperimentConfig, HarnessError> {
        ExperimentConfig::load(self.config.as_deref(), &self.overrides()?)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode payloads into a waveform (text on stdout).
    Encode {
        #[command(flatten)]
        config: ConfigArgs,
        /// Payload to send; repeatable. Defaults to the config's payload set.
        #[arg(long)]
        payload: Vec<String>,
        /// Treat each payload as a 4-bit datum and send its SECDED codeword.
        #[arg(long)]
        ecc: bool,
    },
    /// Run a waveform through the simulated channel (score CSV on stdout).
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Waveform text file, `-` for stdin.
        #[arg(long, default_value = "-")]
        input: PathBuf,
    },
    /// Decode a score CSV (one JSON report per line on stdout).
    Decode {
        #[command(flatten)]
        config: ConfigArgs,
        /// Score CSV file, `-` for stdin.
        #[arg(long, default_value = "-")]
        input: PathBuf,
        /// Draw the first synchronized packet as an SVG.
        #[arg(long)]
        trace_svg: Option<PathBuf>,
        /// Interpret payloads as SECDED codewords.
        #[arg(long)]
        ecc: bool,
    },
    /// Run an experiment and write stats.csv and reports.jsonl.
    Experiment {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run a parameter sweep and write sweep.csv.
    Sweep {
        /// Sweep specification (JSON).
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "PATH=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// ROC curve of a score CSV with truth; prints the AUC.
    Roc {
        #[arg(long, default_value = "-")]
        input: PathBuf,
        /// Where to write the curve points as CSV.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fit the beta score surrogate to a target AUC and accuracy.
    Calibrate {
        #[arg(long, default_value_t = 0.9888)]
        target_auc: f64,
        #[arg(long, default_value_t = 0.951)]
        target_acc: f64,
        #[arg(long, default_value_t = 0.005)]
        tol: f64,
    },
}

fn read_input(path: &Path, stdin: &mut dyn Read) -> Result<String, HarnessError> {
    let mut text = String::new();
    if path.as_os_str() == "-" {
        stdin
            .read_to_string(&mut text)
            .map_err(|e| HarnessError::io(Path::new("<stdin>"), e))?;
    } else {
        text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    }
    Ok(text)
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), HarnessError> {
    out.write_all(text.as_bytes())
        .map_err(|e| HarnessError::io(Path::new("<stdout>"), e))
}

fn parse_payload(text: &str) -> Result<Payload, HarnessError> {
    text.parse::<Payload>()
        .map_err(|e| HarnessError::Config(format!("payload `{text}`: {e}")))
}

fn run(command: Command, stdin: &mut dyn Read, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), HarnessError> {
    match command {
        Command::Encode { config, payload, ecc } => {
            let cfg = config.load()?;
            cfg.line_code.validate()?;
            let mut payloads = if payload.is_empty() {
                cfg.payload_set.payloads()
            } else {
                payload.iter().map(|p| parse_payload(p)).collect::<Result<_, _>>()?
            };
            if ecc {
                payloads = payloads
                    .into_iter()
                    .map(|p| {
                        if p.0 > 15 {
                            Err(HarnessError::Config(format!("{p} does not fit in 4 bits")))
                        } else {
                            Ok(ecc_encode(p.0).into())
                        }
                    })
                    .collect::<Result<_, _>>()?;
            }
            let wave = encode_message_stream(&payloads, &cfg.line_code)?;
            emit(stdout, &wave.to_text())
        }
        Command::Simulate { config, input } => {
            let cfg = config.load()?;
            let wave = LedWaveform::from_text(&read_input(&input, stdin)?)?;
            let scores = sample_scores(&wave, &cfg.channel)?;
            emit(stdout, &scores.to_csv())
        }
        Command::Decode {
            config,
            input,
            trace_svg,
            ecc,
        } => {
            let cfg = config.load()?;
            let decoder = cfg.decoder_config();
            let scores = FrameScores::from_csv(&read_input(&input, stdin)?, cfg.line_code.fps)?;
            let reports = decode_stream(&scores, &decoder)?;
            if let Some(path) = trace_svg {
                let first = reports
                    .iter()
                    .find(|r| r.clock.is_some())
                    .ok_or_else(|| HarnessError::Trace("no packet was synchronized".into()))?;
                emit_trace(first, &scores, &path)?;
            }
            let mut out = String::new();
            for r in &reports {
                if ecc {
                    let mut v = serde_json::to_value(r.record()).expect("report serializes");
                    v["ecc"] = match r.payload {
                        Some(p) => serde_json::to_value(ecc_decode(p.0)).expect("ecc result serializes"),
                        None => Value::Null,
                    };
                    out.push_str(&v.to_string());
                } else {
                    out.push_str(&r.to_json());
                }
                out.push('\n');
            }
            emit(stdout, &out)
        }
        Command::Experiment { config, output_dir } => {
            let mut cfg = config.load()?;
            if let Some(dir) = output_dir {
                cfg.output_dir = dir;
            }
            let outcome = run_experiment(&cfg)?;
            emit(stdout, &outcome.stats_csv())
        }
        Command::Sweep { config, set, output_dir } => {
            let overrides = set.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>, _>>()?;
            let mut spec = SweepSpec::load(&config, &overrides)?;
            if let Some(dir) = output_dir {
                spec.base.output_dir = dir;
            }
            let outcome = run_sweep(&spec)?;
            for w in &outcome.warnings {
                let _ = writeln!(stderr, "warning: {w}");
            }
            emit(stdout, &outcome.to_csv())
        }
        Command::Roc { input, output } => {
            let scores = FrameScores::from_csv(&read_input(&input, stdin)?, 30.0)?;
            let truth = scores
                .truth
                .as_ref()
                .ok_or_else(|| HarnessError::Config("the score trace has no truth column".into()))?;
            let curve = roc_auc(&scores.scores, truth).map_err(|e| HarnessError::Config(e.to_string()))?;
            if let Some(path) = output {
                write_file(&path, &curve.to_csv())?;
            }
            emit(stdout, &format!("auc={}\n", curve.auc))
        }
        Command::Calibrate {
            target_auc,
            target_acc,
            tol,
        } => {
            let cal = calibrate_score_model(target_auc, target_acc, tol)?;
            emit(stdout, &format!("{}\n", serde_json::to_string(&cal).expect("calibration serializes")))
        }
    }
}

/// Runs the command line with explicit streams and returns the exit code:
/// 0 on success, 1 on usage or validation errors, 2 on I/O errors.
pub fn cli_main_with<I, T>(args: I, stdin: &mut dyn Read, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = stderr.write_all(text.as_bytes());
                    1
                }
            };
        }
    };
    match run(cli.command, stdin, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

/// [`cli_main_with`] on the process's standard streams.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    cli_main_with(args, &mut stdin.lock(), &mut stdout.lock(), &mut stderr.lock())
}
