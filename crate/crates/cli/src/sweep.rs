//! One aggregated row per parameter value.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use qkd_core::protocols::EveSpec;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::runner::{run_experiment, ExperimentReport};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Lambda,
    Theta,
    Strength,
    PFlip,
    S,
    M,
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lambda" | "λ" => Ok(Self::Lambda),
            "theta" | "θ" => Ok(Self::Theta),
            "strength" => Ok(Self::Strength),
            "p_flip" | "p-flip" => Ok(Self::PFlip),
            "s" => Ok(Self::S),
            "m" => Ok(Self::M),
            _ => Err(format!(
                "parameter {s:?} is not sweepable (expected lambda, theta, strength, p_flip, s or m)"
            )),
        }
    }
}

fn as_count(p: SweepParam, v: f64) -> Result<usize, CliError> {
    if v >= 0.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(CliError::Usage(format!("{p:?}: {v} is not a non-negative integer")))
    }
}

impl SweepParam {
    /// Writes `v` into the config. `lambda` and `strength` replace Eve.
    pub fn apply(self, cfg: &mut ExperimentConfig, v: f64) -> Result<(), CliError> {
        match self {
            Self::Lambda => cfg.eve = EveSpec::Opaque { lambda: v },
            Self::Theta => cfg.theta = v,
            Self::Strength => cfg.eve = EveSpec::Translucent { strength: v },
            Self::PFlip => cfg.channel.p_flip = v,
            Self::S => cfg.amplify.s = as_count(self, v)?,
            Self::M => cfg.m = as_count(self, v)?,
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub report: ExperimentReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepTable {
    pub param: SweepParam,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Statistic names present in any row, sorted.
    pub fn columns(&self) -> Vec<String> {
        let names: BTreeSet<&String> = self.rows.iter().flat_map(|r| r.report.aggregate.keys()).collect();
        names.into_iter().cloned().collect()
    }

    pub fn mean(&self, row: usize, stat: &str) -> Option<f64> {
        self.rows[row].report.mean(stat)
    }

    /// `value`, one column per statistic mean, then `<stat>_stderr` columns.
    pub fn to_csv(&self) -> String {
        let cols = self.columns();
        let mut out = String::from("value");
        for c in &cols {
            write!(out, ",{c}").unwrap();
        }
        for c in &cols {
            write!(out, ",{c}_stderr").unwrap();
        }
        out.push('\n');
        for row in &self.rows {
            write!(out, "{}", row.value).unwrap();
            let agg = &row.report.aggregate;
            for c in &cols {
                out.push(',');
                if let Some(s) = agg.get(c) {
                    write!(out, "{}", s.mean).unwrap();
                }
            }
            for c in &cols {
                out.push(',');
                if let Some(s) = agg.get(c) {
                    write!(out, "{}", s.stderr).unwrap();
                }
            }
            out.push('\n');
        }
        out
    }
}

pub fn sweep(base: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<SweepTable, CliError> {
    if values.is_empty() {
        return Err(CliError::Usage("values: nothing to sweep".into()));
    }
    let rows = values
        .iter()
        .map(|&value| {
            let mut cfg = base.clone();
            param.apply(&mut cfg, value)?;
            let (report, _) = run_experiment(&cfg)?;
            Ok(SweepRow { value, report })
        })
        .collect::<Result<_, CliError>>()?;
    Ok(SweepTable { param, rows })
}
