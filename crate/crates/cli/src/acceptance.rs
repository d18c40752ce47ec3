//! The acceptance suite: fifteen numbered checks with fixed seeds and
//! tolerances. Shared by `qkd-sim selftest` and the `acceptance` test target.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, FRAC_PI_8};

use qkd_core::alphabets::ReceiverKind;
use qkd_core::channel::{PublicTranscript, QuantumChannelConfig};
use qkd_core::hilbert::{bracket, polar, random, uncertainty_product, Ket2, Operator2, C64, SUM_TOL};
use qkd_core::nogo::{
    cloning_feasibility, random_carrier_preserving, translucent_sweep, undetectable_implies_uninformed,
    CloningInstance, CloningVerdict, ProbeVerdict,
};
use qkd_core::postprocess::{
    amplify_from_transcript, choose_block_len, privacy_amplify, reconcile, replay_discards, ReconcileConfig,
};
use qkd_core::protocols::bb84::p_false;
use qkd_core::protocols::{write_csv, BobOutcome, EveSpec, KeyMaterial, KeyStage, Protocol};
use qkd_core::rng::seeded;
use rand::Rng;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Seeds};
use crate::runner::{run_experiment, ExperimentReport};
use crate::sweep::{sweep, SweepParam};
use crate::CliError;

pub struct Criterion {
    pub id: usize,
    pub name: &'static str,
    pub check: fn() -> Verdict,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn line(&self, c: &Criterion) -> String {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        format!("criterion {:>2} {tag} {}: {}", c.id, c.name, self.detail)
    }
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

/// Errors count as failures, with the message as the detail.
fn guarded(f: impl FnOnce() -> Result<Verdict, CliError>) -> Verdict {
    f().unwrap_or_else(|e| verdict(false, format!("error: {e}")))
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn experiment(cfg: ExperimentConfig) -> Result<ExperimentReport, CliError> {
    Ok(run_experiment(&cfg)?.0)
}

fn stat(report: &ExperimentReport, name: &str) -> Result<f64, CliError> {
    report
        .mean(name)
        .ok_or_else(|| CliError::Usage(format!("report has no {name}")))
}

fn one(protocol: Protocol, n: usize, seed: u64, eve: EveSpec) -> ExperimentConfig {
    ExperimentConfig {
        protocol,
        n,
        seeds: Seeds(vec![seed]),
        eve,
        ..Default::default()
    }
}

pub const CRITERIA: [Criterion; 15] = [
    Criterion {
        id: 1,
        name: "bracket table",
        check: bracket_table,
    },
    Criterion {
        id: 2,
        name: "BB84 reception probability",
        check: bb84_reception,
    },
    Criterion {
        id: 3,
        name: "error-rate jump",
        check: error_rate_jump,
    },
    Criterion {
        id: 4,
        name: "raw-key disagreement",
        check: raw_disagreement,
    },
    Criterion {
        id: 5,
        name: "detection probability",
        check: detection_probability,
    },
    Criterion {
        id: 6,
        name: "B92 projective receiver",
        check: b92_projective,
    },
    Criterion {
        id: 7,
        name: "B92 POVM receiver",
        check: b92_povm,
    },
    Criterion {
        id: 8,
        name: "EPR Bell statistic",
        check: epr_bell,
    },
    Criterion {
        id: 9,
        name: "EPR raw-key agreement",
        check: epr_agreement,
    },
    Criterion {
        id: 10,
        name: "reconciliation",
        check: reconciliation,
    },
    Criterion {
        id: 11,
        name: "privacy amplification",
        check: privacy_amplification,
    },
    Criterion {
        id: 12,
        name: "no-cloning",
        check: no_cloning,
    },
    Criterion {
        id: 13,
        name: "undetectable probes learn nothing",
        check: carrier_preserving_probes,
    },
    Criterion {
        id: 14,
        name: "uncertainty inequality",
        check: uncertainty,
    },
    Criterion {
        id: 15,
        name: "determinism",
        check: determinism,
    },
];

/// Bracket products `⟨row|column⟩` as tabulated, in the order ↕ ↔ ↗ ↖ ↻ ↺.
fn tabulated_brackets() -> [[C64; 6]; 6] {
    let r = FRAC_1_SQRT_2;
    let c = |re: f64, im: f64| C64::new(re, im);
    let (one, zero) = (c(1.0, 0.0), c(0.0, 0.0));
    let (p, m) = (c(0.5, 0.5), c(0.5, -0.5));
    [
        [one, zero, c(r, 0.0), c(r, 0.0), c(r, 0.0), c(r, 0.0)],
        [zero, one, c(r, 0.0), c(-r, 0.0), c(0.0, -r), c(0.0, r)],
        [c(r, 0.0), c(r, 0.0), one, zero, p, m],
        [c(r, 0.0), c(-r, 0.0), zero, one, m, p],
        [c(r, 0.0), c(0.0, r), m, p, one, zero],
        [c(r, 0.0), c(0.0, -r), p, m, zero, one],
    ]
}

const SYMBOLS: [&str; 6] = ["↕", "↔", "↗", "↖", "↻", "↺"];

fn bracket_table() -> Verdict {
    let kets = [
        polar::vertical(),
        polar::horizontal(),
        polar::diagonal(),
        polar::antidiagonal(),
        polar::right_circular(),
        polar::left_circular(),
    ];
    let table = tabulated_brackets();
    let mut bad = Vec::new();
    for (i, row) in table.iter().enumerate() {
        for (j, want) in row.iter().enumerate() {
            let got = bracket(&kets[i], &kets[j]);
            if (got - want).norm() > 1e-12 {
                bad.push(format!("<{}|{}> = {:.4} vs {:.4}", SYMBOLS[i], SYMBOLS[j], got, want));
            }
        }
    }
    let shown = bad.iter().take(2).cloned().collect::<Vec<_>>().join("; ");
    verdict(
        bad.is_empty(),
        format!(
            "{} of 36 products match within 1e-12 {}",
            36 - bad.len(),
            if bad.is_empty() {
                String::new()
            } else {
                format!("(first mismatches: {shown})")
            }
        ),
    )
}

fn bb84_reception() -> Verdict {
    guarded(|| {
        let acc = stat(
            &experiment(one(Protocol::Bb84, 100_000, 1, EveSpec::None))?,
            "pre_sift_accuracy",
        )?;
        Ok(verdict(
            within(acc, 0.75, 0.01),
            format!("pre-sift accuracy {acc:.4} (0.75 ± 0.01)"),
        ))
    })
}

fn error_rate_jump() -> Verdict {
    guarded(|| {
        let base = one(Protocol::Bb84, 100_000, 2, EveSpec::None);
        let lambdas = [0.0, 0.5, 1.0];
        let table = sweep(&base, SweepParam::Lambda, &lambdas)?;
        let mut pass = true;
        let mut parts = Vec::new();
        for (i, &l) in lambdas.iter().enumerate() {
            let e = table.mean(i, "pre_sift_error").unwrap_or(f64::NAN);
            let want = 0.25 + l / 8.0;
            pass &= within(e, want, 0.01);
            parts.push(format!("λ={l}: {e:.4} vs {want:.4}"));
        }
        Ok(verdict(pass, format!("pre-sift error {} (± 0.01)", parts.join(", "))))
    })
}

fn raw_disagreement() -> Verdict {
    guarded(|| {
        let r = experiment(one(Protocol::Bb84, 110_000, 3, EveSpec::Opaque { lambda: 1.0 }))?;
        let len = stat(&r, "raw_key_length")?;
        let d = stat(&r, "raw_disagreement")?;
        Ok(verdict(
            len >= 50_000.0 && within(d, 0.25, 0.01),
            format!("{len} sifted bits, disagreement {d:.4} (0.25 ± 0.01)"),
        ))
    })
}

fn detection_probability() -> Verdict {
    guarded(|| {
        let cfg = ExperimentConfig {
            n: 100,
            m: 20,
            seeds: Seeds((0..10_000).collect()),
            eve: EveSpec::Opaque { lambda: 1.0 },
            ..Default::default()
        };
        let freq = stat(&experiment(cfg)?, "eve_detected")?;
        let want = 1.0 - 0.75f64.powi(20);
        let closed = experiment(ExperimentConfig {
            n: 2000,
            m: 200,
            ..one(Protocol::Bb84, 2000, 4, EveSpec::Opaque { lambda: 1.0 })
        })?;
        let p200 = closed.sessions[0].p_false.unwrap_or(f64::NAN);
        let exact = 0.75f64.powi(200);
        let rel = (p200 - exact).abs() / exact;
        let formula = (p_false(1.0, 200) - exact).abs() / exact;
        Ok(verdict(
            within(freq, want, 0.005) && rel <= 1e-6 && formula <= 1e-6,
            format!("detected in {freq:.5} of 10^4 sessions ({want:.5} ± 0.005); p_false(m=200) = {p200:.6e}, relative error {rel:.1e}"),
        ))
    })
}

fn b92_counts(kind: ReceiverKind, seed: u64) -> Result<(f64, f64, usize), CliError> {
    let cfg = ExperimentConfig {
        receiver: kind,
        theta: FRAC_PI_8,
        ..one(Protocol::B92, 100_000, seed, EveSpec::None)
    };
    let (report, outcomes) = run_experiment(&cfg)?;
    let records = &outcomes[0].records;
    let erasure = stat(&report, "erasure_rate")?;
    let right = records
        .iter()
        .filter(|r| r.bob_outcome.bit() == Some(r.alice_bit))
        .count();
    let wrong = records
        .iter()
        .filter(|r| matches!(r.bob_outcome, BobOutcome::Bit(b) if b != r.alice_bit))
        .count();
    Ok((erasure, right as f64 / records.len() as f64, wrong))
}

fn b92_projective() -> Verdict {
    guarded(|| {
        let (erasure, right, _) = b92_counts(ReceiverKind::Projective, 6)?;
        Ok(verdict(
            within(erasure, 0.75, 0.01) && within(right, 0.25, 0.01),
            format!("erasure {erasure:.4} (0.75 ± 0.01), correct reception {right:.4} (0.25 ± 0.01)"),
        ))
    })
}

fn b92_povm() -> Verdict {
    guarded(|| {
        let (inconclusive, _, wrong) = b92_counts(ReceiverKind::Povm, 7)?;
        let want = FRAC_PI_4.cos();
        Ok(verdict(
            within(inconclusive, want, 0.01) && wrong == 0,
            format!("inconclusive {inconclusive:.4} ({want:.4} ± 0.01), {wrong} wrong bits in 10^5 slots"),
        ))
    })
}

fn epr_bell() -> Verdict {
    guarded(|| {
        let clean = experiment(one(Protocol::Epr, 100_000, 8, EveSpec::None))?;
        let beta = stat(&clean, "bell_beta")?;
        let tapped = experiment(one(Protocol::Epr, 100_000, 9, EveSpec::Opaque { lambda: 1.0 }))?;
        let (tb, se) = (stat(&tapped, "bell_beta")?, stat(&tapped, "bell_beta_se")?);
        Ok(verdict(
            within(beta, -0.5, 0.02) && tb >= -2.0 * se,
            format!(
                "β = {beta:.4} without Eve (−0.5 ± 0.02); β = {tb:.4} ≥ −2·SE = {:.4} with full intercept",
                -2.0 * se
            ),
        ))
    })
}

fn epr_agreement() -> Verdict {
    guarded(|| {
        let (report, _) = run_experiment(&one(Protocol::Epr, 100_000, 10, EveSpec::None))?;
        let s = &report.sessions[0];
        let d = s.raw_disagreement.unwrap_or(f64::NAN);
        Ok(verdict(
            d == 0.0 && s.raw_key_length > 0,
            format!("{} equal-operator slots, disagreement {d}", s.raw_key_length),
        ))
    })
}

const RECONCILE_N: usize = 10_000;
const RECONCILE_P: f64 = 0.05;

/// Reconciles one seeded pair of keys; returns (identical, audit matches).
fn reconcile_once(seed: u64, cfg: &ReconcileConfig) -> (bool, bool) {
    let mut rng = seeded(seed);
    let a: Vec<u8> = (0..RECONCILE_N).map(|_| rng.gen_range(0..2)).collect();
    let b: Vec<u8> = a.iter().map(|&x| x ^ u8::from(rng.gen_bool(RECONCILE_P))).collect();
    let key = |bits| {
        let mut k = KeyMaterial::raw(bits, (0..RECONCILE_N).collect());
        k.advance(KeyStage::Estimated).expect("raw to estimated");
        k
    };
    let (mut ka, mut kb) = (key(a), key(b));
    let mut t = PublicTranscript::new();
    let l = cfg.block_len_for(RECONCILE_P);
    match reconcile(&mut ka, &mut kb, cfg, l, &mut rng, &mut t) {
        Ok(_) => (ka.bits == kb.bits, RECONCILE_N - ka.len() == replay_discards(&t)),
        Err(_) => (false, true),
    }
}

fn reconciliation() -> Verdict {
    let tally = |cfg: ReconcileConfig| -> (usize, usize) {
        let runs: Vec<(bool, bool)> = (0..100u64).into_par_iter().map(|s| reconcile_once(s, &cfg)).collect();
        (runs.iter().filter(|r| r.0).count(), runs.iter().filter(|r| r.1).count())
    };
    let cfg = ReconcileConfig {
        step1_rounds: 3,
        ..Default::default()
    };
    let (same, audited) = tally(cfg);
    let (same2, _) = tally(ReconcileConfig::default());
    verdict(
        same >= 99 && audited == 100,
        format!(
            "ℓ = {}, 3 bisection rounds: {same}/100 identical (≥ 99), discard audit exact in {audited}/100; 2 rounds: {same2}/100 identical",
            choose_block_len(RECONCILE_P)
        ),
    )
}

/// Full-pipeline setting for the Eve prediction check.
pub fn pipeline_config() -> ExperimentConfig {
    ExperimentConfig {
        protocol: Protocol::Bb84Noisy,
        n: 20_000,
        seeds: Seeds((0..100).collect()),
        eve: EveSpec::Opaque { lambda: 0.5 },
        r_max: 0.2,
        ..Default::default()
    }
}

fn privacy_amplification() -> Verdict {
    guarded(|| {
        let mut rng = seeded(11);
        let mut exact = 0;
        for _ in 0..100 {
            let s = rng.gen_range(1..=40);
            let k = rng.gen_range(0..200);
            let n = k + s + rng.gen_range(1..500);
            let mut key = KeyMaterial::raw((0..n).map(|_| rng.gen_range(0..2)).collect(), (0..n).collect());
            key.advance(KeyStage::Estimated)?;
            key.advance(KeyStage::Reconciled)?;
            let mut t = PublicTranscript::new();
            let f = privacy_amplify(&key, k, s, &mut t, &mut rng)?;
            let g = amplify_from_transcript(&key, &t)?;
            exact += usize::from(f.len() == n - k - s && g.bits == f.bits);
        }
        let report = experiment(pipeline_config())?;
        let finished = report.sessions.iter().filter(|r| r.aborted.is_none()).count();
        let rate = stat(&report, "eve_prediction_rate")?;
        Ok(verdict(
            exact == 100 && finished == 100 && rate <= 0.52,
            format!("length n−k−s exact on {exact}/100 triples; Eve predicts {rate:.4} of final bits (≤ 0.52) over {finished}/100 completed sessions at s = 30"),
        ))
    })
}

fn no_cloning() -> Verdict {
    let mut rng = seeded(12);
    let mut infeasible = 0;
    let mut min_omega = f64::INFINITY;
    for _ in 0..10_000 {
        if let CloningVerdict::Infeasible { omega_norm, .. } =
            cloning_feasibility(&CloningInstance::random_non_orthogonal(&mut rng))
        {
            if omega_norm > 1.0 {
                infeasible += 1;
            }
            min_omega = min_omega.min(omega_norm);
        }
    }
    verdict(
        infeasible == 10_000,
        format!("{infeasible}/10^4 pairs need |ω| = 1/|<u|v>| > 1 (smallest {min_omega:.6})"),
    )
}

fn carrier_preserving_probes() -> Verdict {
    guarded(|| {
        let mut rng = seeded(13);
        let mut ok = 0;
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let inst = CloningInstance::random_non_orthogonal(&mut rng);
            let probe: Ket2 = random::ket(&mut rng);
            let u = random_carrier_preserving(&inst.u, &inst.v, &probe, &mut rng)?;
            if let ProbeVerdict::Undetectable { deviation, .. } =
                undetectable_implies_uninformed(&u, &inst.u, &inst.v, &probe, 1e-10)?
            {
                worst = worst.max(deviation);
                ok += usize::from(deviation <= 1e-10);
            }
        }
        let sweep = translucent_sweep(FRAC_PI_8, 10)?;
        let together = sweep.iter().all(|p| (p.information > 1e-12) == (p.residual > 1e-12));
        let monotone = sweep
            .windows(2)
            .all(|w| w[1].information >= w[0].information - 1e-12 && w[1].residual >= w[0].residual - 1e-12);
        let zero = sweep[0].information.abs() < 1e-12 && sweep[0].residual.abs() < 1e-12;
        Ok(verdict(
            ok == 1000 && together && monotone && zero,
            format!(
                "{ok}/1000 probe overlaps equal 1 within 1e-10 (worst {worst:.1e}); translucent sweep: vanish together {together}, monotone {monotone}"
            ),
        ))
    })
}

fn uncertainty() -> Verdict {
    guarded(|| {
        let mut rng = seeded(14);
        let mut held = 0;
        for _ in 0..10_000 {
            let a: Operator2 = random::hermitian(&mut rng);
            let b: Operator2 = random::hermitian(&mut rng);
            let psi: Ket2 = random::ket(&mut rng);
            let (lhs, rhs) = uncertainty_product(&a, &b, &psi)?;
            held += usize::from(lhs >= rhs - SUM_TOL);
        }
        Ok(verdict(
            held == 10_000,
            format!("{held}/10^4 triples satisfy the bound within 1e-10"),
        ))
    })
}

/// Report JSON, slot CSVs and transcripts of a small battery of runs.
fn battery() -> Result<Vec<u8>, CliError> {
    let noisy = QuantumChannelConfig {
        p_flip: 0.04,
        p_loss: 0.1,
    };
    let configs = [
        ExperimentConfig {
            seeds: Seeds(vec![1, 2, 3]),
            ..one(Protocol::Bb84, 5000, 0, EveSpec::Opaque { lambda: 0.2 })
        },
        ExperimentConfig {
            channel: noisy,
            seeds: Seeds(vec![4, 5]),
            ..one(Protocol::Bb84Noisy, 20_000, 0, EveSpec::Opaque { lambda: 0.2 })
        },
        ExperimentConfig {
            channel: noisy,
            r_max: 0.3,
            ..one(Protocol::B92, 20_000, 6, EveSpec::Translucent { strength: 0.5 })
        },
        one(Protocol::Epr, 20_000, 7, EveSpec::Opaque { lambda: 0.5 }),
    ];
    let mut bytes = Vec::new();
    for cfg in &configs {
        let (report, outcomes) = run_experiment(cfg)?;
        bytes.extend(report.to_json(Default::default()).into_bytes());
        for o in &outcomes {
            write_csv(&o.records, &mut bytes).map_err(|e| CliError::Usage(e.to_string()))?;
            o.transcript
                .write_jsonl(&mut bytes)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            bytes.extend(serde_json::to_vec(&o.ledger).expect("ledger serialises"));
            bytes.extend(serde_json::to_vec(&o.trace).expect("trace serialises"));
        }
    }
    let base = one(Protocol::B92, 5000, 8, EveSpec::None);
    bytes.extend(
        sweep(&base, SweepParam::Strength, &[0.0, 0.5, 1.0])?
            .to_csv()
            .into_bytes(),
    );
    Ok(bytes)
}

fn determinism() -> Verdict {
    guarded(|| {
        let (a, b) = (battery()?, battery()?);
        Ok(verdict(
            a == b,
            format!(
                "two runs of the battery: {} vs {} bytes, identical {}",
                a.len(),
                b.len(),
                a == b
            ),
        ))
    })
}
