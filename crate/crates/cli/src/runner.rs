//! Seeds fanned out over a worker pool, joined, then aggregated.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use qkd_core::protocols::{run_session, write_csv, SessionOutcome, SessionReport};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::config::{ExperimentConfig, Format};
use crate::CliError;

pub const THREADS_VAR: &str = "QKD_SIM_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Stat {
    pub count: usize,
    pub mean: f64,
    pub stddev: f64,
    pub stderr: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let stddev = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self {
            count: xs.len(),
            mean,
            stddev,
            stderr: stddev / n.sqrt(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Abort {
    pub seed: u64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub sessions: Vec<SessionReport>,
    /// Mean and spread per numeric statistic; booleans count as 0/1.
    pub aggregate: BTreeMap<String, Stat>,
    pub aborts: Vec<Abort>,
    pub all_aborted: bool,
}

impl ExperimentReport {
    pub fn mean(&self, stat: &str) -> Option<f64> {
        self.aggregate.get(stat).map(|s| s.mean)
    }

    pub fn to_json(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string(self),
            Format::Pretty => serde_json::to_string_pretty(self),
        }
        .expect("reports serialise")
    }
}

/// Numeric leaves of a session report, arrays flattened as `name_i`.
fn numeric_fields(report: &SessionReport) -> Vec<(String, f64)> {
    let Value::Object(map) = serde_json::to_value(report).expect("reports serialise") else {
        unreachable!()
    };
    let mut out = Vec::new();
    for (key, v) in map {
        if key == "seed" {
            continue;
        }
        match v {
            Value::Number(x) => out.push((key, x.as_f64().unwrap_or(f64::NAN))),
            Value::Bool(b) => out.push((key, f64::from(u8::from(b)))),
            Value::Array(items) => {
                for (i, x) in items.iter().enumerate() {
                    if let Some(x) = x.as_f64() {
                        out.push((format!("{key}_{i}"), x));
                    }
                }
            }
            _ => {}
        }
    }
    out
}

pub fn aggregate(reports: &[SessionReport]) -> BTreeMap<String, Stat> {
    let mut cols: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in reports {
        for (k, v) in numeric_fields(r) {
            cols.entry(k).or_default().push(v);
        }
    }
    cols.into_iter().filter_map(|(k, v)| Some((k, Stat::of(&v)?))).collect()
}

/// Worker count from `QKD_SIM_THREADS`; `None` leaves the pool default.
pub fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_VAR) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!(
                "{THREADS_VAR}: expected a positive integer, got {v:?}"
            ))),
        },
    }
}

fn pool() -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CliError::Usage(format!("{THREADS_VAR}: {e}")))
}

/// Runs every seed. Outcomes come back in seed-list order whatever the scheduling.
pub fn run_sessions(cfg: &ExperimentConfig) -> Result<Vec<SessionOutcome>, CliError> {
    cfg.validate()?;
    pool()?.install(|| {
        cfg.seeds
            .0
            .par_iter()
            .map(|&seed| run_session(&cfg.session(seed)).map_err(CliError::from))
            .collect()
    })
}

pub fn summarize(cfg: &ExperimentConfig, outcomes: &[SessionOutcome]) -> ExperimentReport {
    let sessions: Vec<SessionReport> = outcomes.iter().map(|o| o.report.clone()).collect();
    let aborts: Vec<Abort> = sessions
        .iter()
        .filter_map(|r| {
            r.aborted.as_ref().map(|reason| Abort {
                seed: r.seed,
                reason: reason.clone(),
            })
        })
        .collect();
    ExperimentReport {
        config: cfg.clone(),
        aggregate: aggregate(&sessions),
        all_aborted: !sessions.is_empty() && aborts.len() == sessions.len(),
        sessions,
        aborts,
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(ExperimentReport, Vec<SessionOutcome>), CliError> {
    let outcomes = run_sessions(cfg)?;
    Ok((summarize(cfg, &outcomes), outcomes))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value).expect("artifacts serialise");
    f.flush().map_err(|e| CliError::io(path, e))
}

/// `report.json` plus, per seed, the slot CSV, JSONL transcript, Eve ledger
/// and reconciliation trace.
pub fn write_artifacts(dir: &Path, report: &ExperimentReport, outcomes: &[SessionOutcome]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join("report.json");
    fs::write(&path, report.to_json(report.config.output.format)).map_err(|e| CliError::io(&path, e))?;
    for o in outcomes {
        let stem = format!("seed-{}", o.report.seed);
        let path = dir.join(format!("{stem}.csv"));
        let mut f = create(&path)?;
        write_csv(&o.records, &mut f)
            .and_then(|_| f.flush())
            .map_err(|e| CliError::io(&path, e))?;
        let path = dir.join(format!("{stem}.transcript.jsonl"));
        let mut f = create(&path)?;
        o.transcript
            .write_jsonl(&mut f)
            .and_then(|_| f.flush())
            .map_err(|e| CliError::io(&path, e))?;
        write_json(&dir.join(format!("{stem}.ledger.json")), &o.ledger)?;
        write_json(&dir.join(format!("{stem}.trace.json")), &o.trace)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Seeds;
    use qkd_core::protocols::{EveSpec, Protocol};

    #[test]
    fn stat_of_small_samples() {
        assert_eq!(Stat::of(&[]), None);
        let s = Stat::of(&[2.0]).unwrap();
        assert_eq!((s.mean, s.stddev), (2.0, 0.0));
        let s = Stat::of(&[1.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!((s.stddev - 2f64.sqrt()).abs() < 1e-15);
        assert!((s.stderr - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reports_come_back_in_seed_order() {
        let cfg = ExperimentConfig {
            n: 500,
            seeds: Seeds(vec![5, 1, 3]),
            ..Default::default()
        };
        let (report, _) = run_experiment(&cfg).unwrap();
        let seeds: Vec<u64> = report.sessions.iter().map(|r| r.seed).collect();
        assert_eq!(seeds, vec![5, 1, 3]);
        assert_eq!(report.aggregate["n_sent"].mean, 500.0);
        assert_eq!(report.aggregate["keys_match"].mean, 1.0);
    }

    #[test]
    fn all_aborted_is_flagged() {
        let cfg = ExperimentConfig {
            n: 2000,
            seeds: Seeds(vec![1, 2]),
            eve: EveSpec::Opaque { lambda: 1.0 },
            ..Default::default()
        };
        let (report, _) = run_experiment(&cfg).unwrap();
        assert!(report.all_aborted);
        assert_eq!(report.aborts.len(), 2);
    }

    #[test]
    fn artifacts_are_written() {
        let dir = std::env::temp_dir().join(format!("qkd-sim-artifacts-{}", std::process::id()));
        let cfg = ExperimentConfig {
            protocol: Protocol::Bb84Noisy,
            n: 4000,
            seeds: Seeds(vec![2]),
            channel: qkd_core::channel::QuantumChannelConfig {
                p_flip: 0.05,
                p_loss: 0.0,
            },
            ..Default::default()
        };
        let (report, outcomes) = run_experiment(&cfg).unwrap();
        write_artifacts(&dir, &report, &outcomes).unwrap();
        let csv = fs::read_to_string(dir.join("seed-2.csv")).unwrap();
        assert_eq!(csv.lines().next().unwrap(), qkd_core::protocols::CSV_HEADER);
        assert_eq!(csv.lines().count(), 4001);
        let trace: Value = serde_json::from_str(&fs::read_to_string(dir.join("seed-2.trace.json")).unwrap()).unwrap();
        let first = &trace[0];
        for k in ["round", "block", "parity_a", "parity_b", "action"] {
            assert!(first.get(k).is_some(), "{k}");
        }
        let jsonl = fs::read_to_string(dir.join("seed-2.transcript.jsonl")).unwrap();
        assert!(jsonl.lines().all(|l| serde_json::from_str::<Value>(l).is_ok()));
        let back: Value = serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
        assert_eq!(back["config"]["n"], 4000);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn documented_runs() {
        let bb84 = ExperimentConfig {
            n: 100_000,
            seeds: "1..10".parse().unwrap(),
            ..Default::default()
        };
        let (r, _) = run_experiment(&bb84).unwrap();
        assert!((r.aggregate["pre_sift_accuracy"].mean - 0.75).abs() <= 0.01);
        assert_eq!(r.aggregate["pre_sift_accuracy"].count, 10);

        let epr = ExperimentConfig {
            protocol: Protocol::Epr,
            n: 100_000,
            ..Default::default()
        };
        let (r, _) = run_experiment(&epr).unwrap();
        assert!((r.aggregate["bell_beta"].mean + 0.5).abs() <= 0.02);

        let tapped = ExperimentConfig {
            eve: EveSpec::Opaque { lambda: 1.0 },
            m: 200,
            ..Default::default()
        };
        let (r, _) = run_experiment(&tapped).unwrap();
        let p = r.aggregate["p_false"].mean;
        assert!(p > 1e-26 && p < 1e-24, "{p}");
    }
}
