//! Command-line front end: `run`, `sweep`, `selftest`.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use qkd_core::alphabets::ReceiverKind;
use qkd_core::protocols::{EveSpec, Protocol};

use crate::config::{parse_number, ExperimentConfig, Format, Seeds, Values};
use crate::runner::{run_experiment, write_artifacts};
use crate::sweep::{sweep, SweepParam};
use crate::{acceptance, CliError, EXIT_ABORT, EXIT_ACCEPTANCE, EXIT_OK, EXIT_USAGE};

#[derive(Parser, Debug)]
#[command(
    name = "qkd-sim",
    version,
    about = "Seeded BB84, B92 and EPR key distribution experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one session per seed and report per-seed and aggregate statistics.
    Run(ConfigArgs),
    /// Run the experiment once per value of a parameter; CSV table out.
    Sweep(SweepArgs),
    /// Run the acceptance suite.
    Selftest(SelftestArgs),
}

fn parse_receiver(s: &str) -> Result<ReceiverKind, String> {
    match s {
        "projective" => Ok(ReceiverKind::Projective),
        "povm" => Ok(ReceiverKind::Povm),
        _ => Err(format!("unknown receiver {s:?} (expected projective or povm)")),
    }
}

/// A JSON config file, then per-field overrides. Nested fields use their own name.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    protocol: Option<Protocol>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seeds: Option<Seeds>,
    /// none, opaque:λ, translucent:s or entangled:a,b,g
    #[arg(long)]
    eve: Option<EveSpec>,
    #[arg(long)]
    p_flip: Option<f64>,
    #[arg(long)]
    p_loss: Option<f64>,
    /// Accepts multiples of pi, e.g. pi/8.
    #[arg(long, value_parser = parse_number)]
    theta: Option<f64>,
    #[arg(long, value_parser = parse_receiver)]
    receiver: Option<ReceiverKind>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    sample_fraction: Option<f64>,
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long)]
    bell_sigmas: Option<f64>,
    #[arg(long)]
    block_len: Option<usize>,
    #[arg(long)]
    step1_rounds: Option<usize>,
    #[arg(long)]
    step2_stop_n: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<Format>,
}

impl ConfigArgs {
    fn build(&self) -> Result<ExperimentConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag.clone() { c.$($field).+ = v; })*
            };
        }
        set! {
            protocol => protocol, n => n, seeds => seeds, eve => eve,
            p_flip => channel.p_flip, p_loss => channel.p_loss, theta => theta,
            receiver => receiver, m => m, sample_fraction => sample_fraction,
            r_max => r_max, bell_sigmas => bell_sigmas,
            step1_rounds => reconcile.step1_rounds, step2_stop_n => reconcile.step2_stop_n,
            s => amplify.s, format => output.format,
        }
        if self.block_len.is_some() {
            c.reconcile.block_len = self.block_len;
        }
        if self.k.is_some() {
            c.amplify.k = self.k;
        }
        if self.out.is_some() {
            c.output.out = self.out.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// lambda, theta, strength, p_flip, s or m
    #[arg(long, visible_alias = "param")]
    parameter: SweepParam,
    /// Comma list or lo:hi:count.
    #[arg(long, allow_hyphen_values = true)]
    values: Values,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args, Debug)]
struct SelftestArgs {
    /// Criterion numbers to run; all when omitted.
    #[arg(long, value_delimiter = ',')]
    only: Vec<usize>,
}

fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    // a closed pipe is not worth a panic
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn exec(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Run(args) => {
            let cfg = args.build()?;
            let (report, outcomes) = run_experiment(&cfg)?;
            match &cfg.output.out {
                Some(dir) => write_artifacts(dir, &report, &outcomes)?,
                None => emit(&(report.to_json(cfg.output.format) + "\n")),
            }
            for a in &report.aborts {
                eprintln!("seed {}: aborted: {}", a.seed, a.reason);
            }
            Ok(if report.all_aborted { EXIT_ABORT } else { EXIT_OK })
        }
        Command::Sweep(args) => {
            let cfg = args.config.build()?;
            let table = sweep(&cfg, args.parameter, &args.values.0)?;
            let csv = table.to_csv();
            match &cfg.output.out {
                Some(dir) => {
                    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
                    let path = dir.join("sweep.csv");
                    std::fs::write(&path, csv).map_err(|e| CliError::io(&path, e))?;
                }
                None => emit(&csv),
            }
            Ok(EXIT_OK)
        }
        Command::Selftest(args) => {
            let mut all = true;
            for c in acceptance::CRITERIA {
                if !args.only.is_empty() && !args.only.contains(&c.id) {
                    continue;
                }
                let r = (c.check)();
                all &= r.pass;
                emit(&format!("{}\n", r.line(&c)));
            }
            Ok(if all { EXIT_OK } else { EXIT_ACCEPTANCE })
        }
    }
}

/// Parses `args` (program name first) and runs; returns the exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match exec(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("qkd-sim: {e}");
            EXIT_USAGE
        }
    }
}
