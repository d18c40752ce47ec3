//! One complete seeded session: quantum stage, public phases, report.

use std::f64::consts::FRAC_PI_8;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    b92_sift, b92_stage1, bb84_stage1, bell_test, detect_noiseless, disagreement, epr_split, epr_stage1,
    estimate_error, pre_sift_accuracy, sift, BobOutcome, EprSource, KeyMaterial, KeyStage, TransmissionRecord,
};
use crate::alphabets::ReceiverKind;
use crate::channel::{PublicTranscript, QuantumChannelConfig};
use crate::eavesdrop::{build_translucent, build_translucent_entangled, EveLedger, EveStrategy};
use crate::error::{Error, Result};
use crate::postprocess::{
    agreement_rate, amplify_from_transcript, predict_final_key, privacy_amplify, reconcile, AmplifyConfig,
    ReconcileConfig, TraceEntry,
};
use crate::rng::SessionRngs;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Bb84,
    Bb84Noisy,
    B92,
    Epr,
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "bb84" => Ok(Self::Bb84),
            "bb84-noisy" => Ok(Self::Bb84Noisy),
            "b92" => Ok(Self::B92),
            "epr" => Ok(Self::Epr),
            _ => Err(format!(
                "unknown protocol {s:?} (expected bb84, bb84-noisy, b92 or epr)"
            )),
        }
    }
}

/// Eve as configured; turned into an [`EveStrategy`] per session.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EveSpec {
    None,
    Opaque { lambda: f64 },
    Translucent { strength: f64 },
    TranslucentEntangled { a: f64, b: f64, probe_overlap: f64 },
}

impl EveSpec {
    pub fn build(&self, theta: f64) -> Result<EveStrategy> {
        match *self {
            Self::None => Ok(EveStrategy::none()),
            Self::Opaque { lambda } => EveStrategy::opaque(lambda),
            Self::Translucent { strength } => build_translucent(theta, strength),
            Self::TranslucentEntangled { a, b, probe_overlap } => {
                build_translucent_entangled(theta, a, b, probe_overlap)
            }
        }
    }

    pub fn is_translucent(&self) -> bool {
        matches!(self, Self::Translucent { .. } | Self::TranslucentEntangled { .. })
    }
}

/// `none`, `opaque:λ`, `translucent:s` or `entangled:a,b,g`.
impl FromStr for EveSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (kind, args) = s.split_once(':').unwrap_or((s, ""));
        let nums = || -> std::result::Result<Vec<f64>, String> {
            args.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|e| format!("bad number {x:?} in eve spec: {e}"))
                })
                .collect()
        };
        let one = || -> std::result::Result<f64, String> {
            match nums()?.as_slice() {
                [x] => Ok(*x),
                _ => Err(format!("eve spec {s:?} takes one number")),
            }
        };
        match kind {
            "none" if args.is_empty() => Ok(Self::None),
            "opaque" => Ok(Self::Opaque { lambda: one()? }),
            "translucent" => Ok(Self::Translucent { strength: one()? }),
            "entangled" => match nums()?.as_slice() {
                [a, b, g] => Ok(Self::TranslucentEntangled {
                    a: *a,
                    b: *b,
                    probe_overlap: *g,
                }),
                _ => Err(format!("eve spec {s:?} takes a,b,g")),
            },
            _ => Err(format!(
                "unknown eve spec {s:?} (expected none, opaque:λ, translucent:s or entangled:a,b,g)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub protocol: Protocol,
    pub n: usize,
    pub seed: u64,
    pub eve: EveSpec,
    pub channel: QuantumChannelConfig,
    pub theta: f64,
    pub receiver: ReceiverKind,
    pub m: usize,
    pub sample_fraction: f64,
    pub r_max: f64,
    /// Eve is flagged when `β ≥ −bell_sigmas · SE(β)`.
    pub bell_sigmas: f64,
    pub reconcile: ReconcileConfig,
    pub amplify: AmplifyConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            protocol: Protocol::Bb84,
            n: 10_000,
            seed: 0,
            eve: EveSpec::None,
            channel: QuantumChannelConfig::ideal(),
            theta: FRAC_PI_8,
            receiver: ReceiverKind::Povm,
            m: 200,
            sample_fraction: 0.1,
            r_max: 0.12,
            bell_sigmas: 2.0,
            reconcile: ReconcileConfig::default(),
            amplify: AmplifyConfig::default(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter {
                name: "n",
                reason: "at least one slot is required".into(),
            });
        }
        self.channel.validate()?;
        if !(self.sample_fraction > 0.0 && self.sample_fraction < 1.0) {
            return Err(Error::InvalidParameter {
                name: "sample_fraction",
                reason: format!("{} outside (0, 1)", self.sample_fraction),
            });
        }
        if !(0.0..=1.0).contains(&self.r_max) {
            return Err(Error::ProbabilityOutOfRange {
                name: "r_max",
                value: self.r_max,
            });
        }
        self.reconcile.validate()?;
        self.amplify.validate()?;
        if self.protocol != Protocol::B92 && self.eve.is_translucent() {
            return Err(Error::InvalidParameter {
                name: "eve",
                reason: "translucent probes are defined for the B92 alphabet only".into(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SessionReport {
    pub protocol: Option<Protocol>,
    pub seed: u64,
    pub n_sent: usize,
    pub n_received: usize,
    pub pre_sift_accuracy: Option<f64>,
    pub pre_sift_error: Option<f64>,
    pub erasure_rate: Option<f64>,
    pub raw_key_length: usize,
    /// Ground-truth disagreement of the raw keys (simulation-only knowledge).
    pub raw_disagreement: Option<f64>,
    pub raw_error_rate_estimate: Option<f64>,
    /// Fraction of raw-key slots where Eve holds a guess and it equals Alice's bit.
    pub eve_raw_agreement: Option<f64>,
    /// `1 − |⟨Ψ_θ|Ψ_θ̄⟩|` of the probe coupling, when Eve is translucent.
    pub eve_information: Option<f64>,
    pub p_false: Option<f64>,
    pub p_false_assumption: Option<String>,
    pub bell_beta: Option<f64>,
    pub bell_beta_se: Option<f64>,
    pub bell_deltas: Option<[f64; 3]>,
    pub eve_detected: Option<bool>,
    pub block_len: Option<usize>,
    pub reconciled_length: Option<usize>,
    pub leaked_parities: usize,
    pub k_estimate: Option<usize>,
    pub k_model_mismatch: bool,
    pub final_key_length: usize,
    pub keys_match: Option<bool>,
    pub wrong_bits: Option<usize>,
    pub eve_prediction_rate: Option<f64>,
    pub aborted: Option<String>,
}

impl SessionReport {
    pub fn is_aborted(&self) -> bool {
        self.aborted.is_some()
    }
}

#[derive(Clone, Debug)]
pub struct SessionOutcome {
    pub report: SessionReport,
    pub records: Vec<TransmissionRecord>,
    pub transcript: PublicTranscript,
    pub ledger: EveLedger,
    pub trace: Vec<TraceEntry>,
    pub alice_key: Option<KeyMaterial>,
    pub bob_key: Option<KeyMaterial>,
}

/// Failures that end a session early but are not configuration mistakes.
fn is_abort(e: &Error) -> bool {
    matches!(
        e,
        Error::KeyExhausted(_) | Error::NotEnoughKey { .. } | Error::EmptySample | Error::MissingOperatorPair(..)
    )
}

struct Run<'a> {
    cfg: &'a SessionConfig,
    rngs: SessionRngs,
    eve: EveStrategy,
    transcript: PublicTranscript,
    report: SessionReport,
    trace: Vec<TraceEntry>,
    keys: Option<(KeyMaterial, KeyMaterial)>,
}

pub fn run_session(cfg: &SessionConfig) -> Result<SessionOutcome> {
    cfg.validate()?;
    let mut run = Run {
        cfg,
        rngs: SessionRngs::new(cfg.seed),
        eve: cfg.eve.build(cfg.theta)?,
        transcript: PublicTranscript::new(),
        report: SessionReport {
            protocol: Some(cfg.protocol),
            seed: cfg.seed,
            k_model_mismatch: cfg.eve.is_translucent(),
            ..Default::default()
        },
        trace: Vec::new(),
        keys: None,
    };
    let records = run.stage1()?;
    match run.stage2(&records) {
        Ok(()) => {}
        Err(e) if is_abort(&e) => run.report.aborted = Some(e.to_string()),
        Err(e) => return Err(e),
    }
    let (alice_key, bob_key) = run.keys.unzip();
    Ok(SessionOutcome {
        report: run.report,
        records,
        transcript: run.transcript,
        ledger: run.eve.ledger,
        trace: run.trace,
        alice_key,
        bob_key,
    })
}

impl Run<'_> {
    fn stage1(&mut self) -> Result<Vec<TransmissionRecord>> {
        let cfg = self.cfg;
        let records = match cfg.protocol {
            Protocol::Bb84 | Protocol::Bb84Noisy => bb84_stage1(cfg.n, &cfg.channel, &mut self.eve, &mut self.rngs)?,
            Protocol::B92 => b92_stage1(
                cfg.n,
                cfg.theta,
                cfg.receiver,
                &cfg.channel,
                &mut self.eve,
                &mut self.rngs,
            )?,
            Protocol::Epr => epr_stage1(cfg.n, &EprSource::new(), &mut self.eve, &mut self.rngs)?,
        };
        let r = &mut self.report;
        r.n_sent = cfg.n;
        r.n_received = records
            .iter()
            .filter(|x| x.bob_outcome != BobOutcome::NonReception)
            .count();
        if cfg.protocol != Protocol::Epr {
            let acc = pre_sift_accuracy(&records);
            r.pre_sift_accuracy = Some(acc);
            r.pre_sift_error = Some(1.0 - acc);
        }
        if cfg.protocol == Protocol::B92 {
            r.erasure_rate = Some(super::b92::erasure_rate(&records));
        }
        Ok(records)
    }

    fn stage2(&mut self, records: &[TransmissionRecord]) -> Result<()> {
        match self.cfg.protocol {
            Protocol::Bb84 => self.noiseless(records),
            Protocol::Bb84Noisy => {
                let keys = sift(records, &mut self.transcript);
                self.noisy(keys)
            }
            Protocol::B92 => {
                let keys = b92_sift(records, &mut self.transcript);
                self.noisy(keys)
            }
            Protocol::Epr => self.epr(records),
        }
    }

    fn note_raw(&mut self, alice: &KeyMaterial, bob: &KeyMaterial) {
        self.report.raw_key_length = alice.len();
        self.report.raw_disagreement = Some(disagreement(alice, bob));
        let ledger = &self.eve.ledger;
        let (mut held, mut right) = (0usize, 0usize);
        for (&slot, &bit) in alice.slots.iter().zip(&alice.bits) {
            if let Some(g) = ledger.guess_for(slot) {
                held += 1;
                right += usize::from(g == bit);
            }
        }
        self.report.eve_raw_agreement = (held > 0).then(|| right as f64 / held as f64);
        self.report.eve_information = self.eve.coupling().map(|c| c.distinguishability());
    }

    fn finish(&mut self, alice: KeyMaterial, bob: KeyMaterial) {
        let wrong = alice.bits.iter().zip(&bob.bits).filter(|(a, b)| a != b).count();
        let r = &mut self.report;
        r.final_key_length = alice.len();
        r.wrong_bits = Some(wrong);
        r.keys_match = Some(wrong == 0 && alice.len() == bob.len());
        r.leaked_parities = alice.leaked_parities;
        self.keys = Some((alice, bob));
    }

    /// Eve's per-bit guess at a key whose bits come straight from slots.
    fn predict_direct(&mut self, key: &KeyMaterial) -> f64 {
        let guesses: Vec<u8> = key
            .slots
            .iter()
            .map(|&s| {
                self.eve
                    .ledger
                    .guess_for(s)
                    .unwrap_or_else(|| u8::from(self.rngs.eve.gen_bool(0.5)))
            })
            .collect();
        agreement_rate(&guesses, &key.bits)
    }

    fn noiseless(&mut self, records: &[TransmissionRecord]) -> Result<()> {
        let (mut alice, mut bob) = sift(records, &mut self.transcript);
        self.note_raw(&alice, &bob);
        let lambda = self.eve.opaque_intensity().unwrap_or(0.0);
        let d = detect_noiseless(
            &mut alice,
            &mut bob,
            self.cfg.m,
            lambda,
            &mut self.rngs.public,
            &mut self.transcript,
        )?;
        self.report.p_false = Some(d.p_false);
        self.report.p_false_assumption = Some(format!("Eve intercepts each slot independently with lambda = {lambda}"));
        self.report.eve_detected = Some(!d.clean);
        alice.advance(KeyStage::Final)?;
        bob.advance(KeyStage::Final)?;
        if !d.clean {
            self.report.aborted = Some(format!(
                "{} of {} compared bits disagree: eavesdropping detected, return to stage 1",
                d.mismatches, self.cfg.m
            ));
            return Ok(());
        }
        self.report.eve_prediction_rate = Some(self.predict_direct(&alice));
        self.finish(alice, bob);
        Ok(())
    }

    fn noisy(&mut self, (mut alice, mut bob): (KeyMaterial, KeyMaterial)) -> Result<()> {
        let cfg = self.cfg;
        self.note_raw(&alice, &bob);
        let est = estimate_error(
            &mut alice,
            &mut bob,
            cfg.sample_fraction,
            cfg.r_max,
            &mut self.rngs.public,
            &mut self.transcript,
        )?;
        self.report.raw_error_rate_estimate = Some(est.r);
        if !est.proceed {
            self.report.aborted = Some(format!(
                "error rate estimate {} exceeds r_max {}: return to stage 1",
                est.r, cfg.r_max
            ));
            return Ok(());
        }
        let block_len = cfg.reconcile.block_len_for(est.r);
        self.report.block_len = Some(block_len);
        let stats = reconcile(
            &mut alice,
            &mut bob,
            &cfg.reconcile,
            block_len,
            &mut self.rngs.public,
            &mut self.transcript,
        )?;
        self.trace = stats.trace;
        self.report.reconciled_length = Some(alice.len());
        self.report.leaked_parities = alice.leaked_parities;

        let k = cfg.amplify.k_for(est.r, alice.len());
        self.report.k_estimate = Some(k);
        let final_a = privacy_amplify(&alice, k, cfg.amplify.s, &mut self.transcript, &mut self.rngs.public)?;
        let final_b = amplify_from_transcript(&bob, &self.transcript)?;
        let guess = predict_final_key(&self.eve.ledger, &alice.slots, &self.transcript, &mut self.rngs.eve);
        self.report.eve_prediction_rate = Some(agreement_rate(&guess, &final_a.bits));
        self.finish(final_a, final_b);
        Ok(())
    }

    fn epr(&mut self, records: &[TransmissionRecord]) -> Result<()> {
        let (mut alice, mut bob, rejected) = epr_split(records, &mut self.transcript);
        self.note_raw(&alice, &bob);
        let bell = bell_test(&rejected, self.cfg.bell_sigmas)?;
        let r = &mut self.report;
        r.bell_beta = Some(bell.beta);
        r.bell_beta_se = Some(bell.se);
        r.bell_deltas = Some(bell.deltas);
        r.eve_detected = Some(bell.eve_detected);
        if bell.eve_detected {
            r.aborted = Some(format!(
                "Bell statistic {:.4} >= -{}*SE ({:.4}): consistent with local hidden variables, eavesdropping assumed",
                bell.beta, self.cfg.bell_sigmas, bell.se
            ));
            return Ok(());
        }
        alice.advance(KeyStage::Final)?;
        bob.advance(KeyStage::Final)?;
        self.report.eve_prediction_rate = Some(self.predict_direct(&alice));
        self.finish(alice, bob);
        Ok(())
    }
}
