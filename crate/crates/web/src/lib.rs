//! Browser bindings: each export runs seeded sessions and returns JSON.

use qkd_core::alphabets::ReceiverKind;
use qkd_core::protocols::{run_session, EveSpec, Protocol, SessionConfig};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn session(cfg: SessionConfig) -> Result<Value, String> {
    let out = run_session(&cfg).map_err(|e| e.to_string())?;
    serde_json::to_value(&out.report).map_err(|e| e.to_string())
}

/// Pre-sift error of BB84 against intercept intensity, `points` values of λ in [0, 1].
pub fn error_curve(n: usize, seed: u64, points: usize) -> Result<Value, String> {
    let points = points.max(2);
    let rows = (0..points)
        .map(|i| {
            let lambda = i as f64 / (points - 1) as f64;
            let r = session(SessionConfig {
                n,
                seed: seed + i as u64,
                eve: EveSpec::Opaque { lambda },
                ..Default::default()
            })?;
            Ok(json!({
                "lambda": lambda,
                "measured": r["pre_sift_error"],
                "expected": 0.25 + lambda / 8.0,
                "detected": r["eve_detected"],
            }))
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(Value::Array(rows))
}

/// B92 erasure and error rates for one angle.
pub fn b92(theta: f64, n: usize, seed: u64, povm: bool, strength: f64) -> Result<Value, String> {
    let eve = if strength > 0.0 {
        EveSpec::Translucent { strength }
    } else {
        EveSpec::None
    };
    let receiver = if povm {
        ReceiverKind::Povm
    } else {
        ReceiverKind::Projective
    };
    let r = session(SessionConfig {
        protocol: Protocol::B92,
        n,
        seed,
        theta,
        receiver,
        eve,
        r_max: 1.0,
        ..Default::default()
    })?;
    let c = (2.0 * theta).cos();
    Ok(json!({
        "theta": theta,
        "erasure": r["erasure_rate"],
        "expected_erasure": if povm { c } else { (1.0 + c * c) / 2.0 },
        "raw_key_length": r["raw_key_length"],
        "raw_error": r["raw_disagreement"],
        "eve_information": r["eve_information"],
    }))
}

/// The Bell statistic with an intercept-resend Eve of intensity `lambda`.
pub fn bell(n: usize, seed: u64, lambda: f64) -> Result<Value, String> {
    let r = session(SessionConfig {
        protocol: Protocol::Epr,
        n,
        seed,
        eve: EveSpec::Opaque { lambda },
        ..Default::default()
    })?;
    Ok(json!({
        "lambda": lambda,
        "beta": r["bell_beta"],
        "se": r["bell_beta_se"],
        "deltas": r["bell_deltas"],
        "eve_detected": r["eve_detected"],
        "raw_key_length": r["raw_key_length"],
    }))
}

fn to_js(v: Result<Value, String>) -> Result<String, JsValue> {
    v.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = errorCurve)]
pub fn error_curve_js(n: usize, seed: u32, points: usize) -> Result<String, JsValue> {
    to_js(error_curve(n, seed.into(), points))
}

#[wasm_bindgen(js_name = b92Rates)]
pub fn b92_js(theta: f64, n: usize, seed: u32, povm: bool, strength: f64) -> Result<String, JsValue> {
    to_js(b92(theta, n, seed.into(), povm, strength))
}

#[wasm_bindgen(js_name = bellTest)]
pub fn bell_js(n: usize, seed: u32, lambda: f64) -> Result<String, JsValue> {
    to_js(bell(n, seed.into(), lambda))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_endpoints() {
        let v = error_curve(20_000, 1, 3).unwrap();
        let rows = v.as_array().unwrap();
        assert_eq!(rows.len(), 3);
        for r in rows {
            let (m, e) = (r["measured"].as_f64().unwrap(), r["expected"].as_f64().unwrap());
            assert!((m - e).abs() < 0.02);
        }
        assert_eq!(rows[2]["detected"], true);
    }

    #[test]
    fn b92_povm_rate() {
        let v = b92(std::f64::consts::FRAC_PI_8, 20_000, 2, true, 0.0).unwrap();
        let (m, e) = (v["erasure"].as_f64().unwrap(), v["expected_erasure"].as_f64().unwrap());
        assert!((m - e).abs() < 0.02);
        assert_eq!(v["raw_error"].as_f64(), Some(0.0));
    }

    #[test]
    fn bell_without_eve_violates() {
        let v = bell(30_000, 3, 0.0).unwrap();
        assert!(v["beta"].as_f64().unwrap() < -0.4);
        assert_eq!(v["eve_detected"], false);
    }

    #[test]
    fn bad_angle_is_an_error() {
        assert!(b92(1.0, 100, 0, true, 0.0).is_err());
    }
}
