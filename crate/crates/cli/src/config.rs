//! Experiment configuration: a JSON document plus command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use qkd_core::alphabets::ReceiverKind;
use qkd_core::channel::QuantumChannelConfig;
use qkd_core::postprocess::{AmplifyConfig, ReconcileConfig};
use qkd_core::protocols::{EveSpec, Protocol, SessionConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Seeds to run, in order. Accepts `7`, `1,2,5`, `1..10` (inclusive) or a JSON list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SeedsRepr", into = "Vec<u64>")]
pub struct Seeds(pub Vec<u64>);

#[derive(Deserialize)]
#[serde(untagged)]
enum SeedsRepr {
    List(Vec<u64>),
    One(u64),
    Text(String),
}

impl TryFrom<SeedsRepr> for Seeds {
    type Error = String;

    fn try_from(r: SeedsRepr) -> Result<Self, String> {
        match r {
            SeedsRepr::List(v) => Ok(Self(v)),
            SeedsRepr::One(s) => Ok(Self(vec![s])),
            SeedsRepr::Text(t) => t.parse(),
        }
    }
}

impl From<Seeds> for Vec<u64> {
    fn from(s: Seeds) -> Self {
        s.0
    }
}

impl FromStr for Seeds {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let num = |x: &str| x.trim().parse::<u64>().map_err(|e| format!("bad seed {x:?}: {e}"));
        if let Some((lo, hi)) = s.split_once("..") {
            let (lo, hi) = (num(lo)?, num(hi.trim_start_matches('='))?);
            if hi < lo {
                return Err(format!("empty seed range {s:?}"));
            }
            return Ok(Self((lo..=hi).collect()));
        }
        s.split(',').map(num).collect::<Result<_, _>>().map(Self)
    }
}

impl Default for Seeds {
    fn default() -> Self {
        Self(vec![0])
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Json,
    Pretty,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(Self::Json),
            "pretty" => Ok(Self::Pretty),
            _ => Err(format!("unknown format {s:?} (expected json or pretty)")),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory for the report and per-seed artifacts; standard output when absent.
    pub out: Option<PathBuf>,
    pub format: Format,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    pub n: usize,
    pub seeds: Seeds,
    pub eve: EveSpec,
    pub channel: QuantumChannelConfig,
    pub theta: f64,
    pub receiver: ReceiverKind,
    pub m: usize,
    pub sample_fraction: f64,
    pub r_max: f64,
    pub bell_sigmas: f64,
    pub reconcile: ReconcileConfig,
    pub amplify: AmplifyConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let s = SessionConfig::default();
        Self {
            protocol: s.protocol,
            n: s.n,
            seeds: Seeds::default(),
            eve: s.eve,
            channel: s.channel,
            theta: s.theta,
            receiver: s.receiver,
            m: s.m,
            sample_fraction: s.sample_fraction,
            r_max: s.r_max,
            bell_sigmas: s.bell_sigmas,
            reconcile: s.reconcile,
            amplify: s.amplify,
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn session(&self, seed: u64) -> SessionConfig {
        SessionConfig {
            protocol: self.protocol,
            n: self.n,
            seed,
            eve: self.eve,
            channel: self.channel,
            theta: self.theta,
            receiver: self.receiver,
            m: self.m,
            sample_fraction: self.sample_fraction,
            r_max: self.r_max,
            bell_sigmas: self.bell_sigmas,
            reconcile: self.reconcile,
            amplify: self.amplify,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let Some(&first) = self.seeds.0.first() else {
            return Err(CliError::Usage("seeds: the seed list is empty".into()));
        };
        self.session(first)
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        // theta only matters to B92 and translucent Eve, but a bad value is still a mistake
        if self.protocol == Protocol::B92 || self.eve.is_translucent() {
            qkd_core::alphabets::check_b92_angle(self.theta).map_err(|e| CliError::Usage(format!("theta: {e}")))?;
            self.eve
                .build(self.theta)
                .map_err(|e| CliError::Usage(format!("eve: {e}")))?;
        }
        Ok(())
    }
}

/// A number, optionally a multiple of π: `0.3`, `pi/8`, `3pi/16`, `2*π/5`.
pub fn parse_number(s: &str) -> Result<f64, String> {
    let t = s.trim().replace('π', "pi");
    let Some((coef, rest)) = t.split_once("pi") else {
        return t.parse().map_err(|e| format!("bad number {s:?}: {e}"));
    };
    let coef = coef.trim().trim_end_matches('*').trim();
    let c = if coef.is_empty() {
        1.0
    } else {
        coef.parse::<f64>().map_err(|e| format!("bad number {s:?}: {e}"))?
    };
    let rest = rest.trim();
    let d = match rest.strip_prefix('/') {
        Some(d) => d.trim().parse::<f64>().map_err(|e| format!("bad number {s:?}: {e}"))?,
        None if rest.is_empty() => 1.0,
        None => return Err(format!("bad number {s:?}")),
    };
    Ok(c * std::f64::consts::PI / d)
}

/// A value list: `0,0.25,0.5` or `lo:hi:count` (inclusive, evenly spaced).
#[derive(Clone, Debug, PartialEq)]
pub struct Values(pub Vec<f64>);

impl FromStr for Values {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if let [lo, hi, count] = parts.as_slice() {
            let (lo, hi) = (parse_number(lo)?, parse_number(hi)?);
            let count: usize = count.trim().parse().map_err(|e| format!("bad count in {s:?}: {e}"))?;
            if count == 0 {
                return Err("values: zero points".into());
            }
            let step = if count > 1 { (hi - lo) / (count - 1) as f64 } else { 0.0 };
            return Ok(Self((0..count).map(|i| lo + step * i as f64).collect()));
        }
        s.split(',').map(parse_number).collect::<Result<_, _>>().map(Self)
    }
}

impl fmt::Display for Values {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        f.write_str(&v.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_forms() {
        assert_eq!("1..4".parse::<Seeds>().unwrap().0, vec![1, 2, 3, 4]);
        assert_eq!("1..=2".parse::<Seeds>().unwrap().0, vec![1, 2]);
        assert_eq!("3,1".parse::<Seeds>().unwrap().0, vec![3, 1]);
        assert!("5..1".parse::<Seeds>().is_err());
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"seeds": "2..3"}"#).unwrap();
        assert_eq!(cfg.seeds.0, vec![2, 3]);
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"seeds": [9]}"#).unwrap();
        assert_eq!(cfg.seeds.0, vec![9]);
    }

    #[test]
    fn numbers_with_pi() {
        use std::f64::consts::PI;
        assert_eq!(parse_number("pi/8").unwrap(), PI / 8.0);
        assert_eq!(parse_number("3pi/16").unwrap(), 3.0 * PI / 16.0);
        assert_eq!(parse_number("2*π").unwrap(), 2.0 * PI);
        assert_eq!(parse_number("0.25").unwrap(), 0.25);
        assert!(parse_number("pix").is_err());
        assert_eq!("0:1:5".parse::<Values>().unwrap().0, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn config_round_trips_and_rejects_unknown_fields() {
        let cfg = ExperimentConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), cfg);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"nn": 3}"#).is_err());
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"protocol": "b92", "eve": {"kind": "translucent", "strength": 0.5}}"#).unwrap();
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn validation_names_the_field() {
        let cfg = ExperimentConfig {
            seeds: Seeds(vec![]),
            ..Default::default()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("seeds"));
        let mut cfg = ExperimentConfig::default();
        cfg.channel.p_loss = 2.0;
        assert!(cfg.validate().unwrap_err().to_string().contains("p_loss"));
    }
}
