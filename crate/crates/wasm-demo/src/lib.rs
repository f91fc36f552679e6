//! wasm-bindgen surface for the static demo page in `www/`.
//!
//! Each export returns a JSON string. The `*_json` functions hold the logic
//! and report errors as plain strings so they can be tested natively.

use bpr_core::analysis::{
    beamspace_pattern, db_to_linear, mgf_ber_bpsk, mgf_ber_mpsk, mgf_ber_mqam, MpskForm,
};
use bpr_core::beamformer::{kappa, Scheme};
use bpr_core::channel::{sample_mmwave_channel, SteeringConfig};
use bpr_core::harness::beamformer_for;
use serde_json::json;
use wasm_bindgen::prelude::*;

const MAX_DEMO_Q: u32 = 6;
const MAX_POINTS: usize = 4001;

fn check_q(q: u32) -> Result<(), String> {
    if (1..=MAX_DEMO_Q).contains(&q) {
        Ok(())
    } else {
        Err(format!("q must be in 1..={MAX_DEMO_Q}"))
    }
}

/// Per-column gains of one scheme over `points` angles in [−π/2, π/2].
/// BPR uses greedy rotations for the mmWave channel drawn from `seed`.
pub fn beam_pattern_json(scheme: &str, q: u32, points: usize, seed: u64) -> Result<String, String> {
    check_q(q)?;
    if !(2..=MAX_POINTS).contains(&points) {
        return Err(format!("points must be in 2..={MAX_POINTS}"));
    }
    let scheme: Scheme = scheme.parse().map_err(|e: bpr_core::Error| e.to_string())?;
    let cfg = SteeringConfig::default();
    let n = 1usize << q;
    let h = sample_mmwave_channel(3, n, &cfg, seed)
        .map_err(|e| e.to_string())?
        .h;
    let bf = beamformer_for(scheme, q, &h).map_err(|e| e.to_string())?;
    let theta: Vec<f64> = (0..points)
        .map(|i| {
            -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * i as f64 / (points - 1) as f64
        })
        .collect();
    let p = beamspace_pattern(&bf.f, &theta, &cfg).map_err(|e| e.to_string())?;
    Ok(json!({
        "scheme": scheme.name(),
        "q": q,
        "kappa": bf.kappa,
        "theta": p.theta,
        "gains": p.gains,
        "peak_theta": p.peak_theta,
        "spread_3db": p.spread_3db,
    })
    .to_string())
}

/// κ of every scheme for `q`.
pub fn kappa_table_json(q: u32) -> Result<String, String> {
    check_q(q)?;
    let rows: Vec<_> = Scheme::ALL
        .iter()
        .map(|&s| {
            kappa(s, q).map(
                |k| json!({ "scheme": s.name(), "kappa": k, "array_gain": k * (1u32 << q) as f64 }),
            )
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    Ok(json!({ "q": q, "rows": rows }).to_string())
}

/// Rayleigh-fading MGF error curves with γ̄ = κγ₀/2 for every scheme at `q = 2`.
pub fn ber_curves_json(
    modulation: usize,
    start_db: f64,
    stop_db: f64,
    step_db: f64,
) -> Result<String, String> {
    if step_db.is_nan()
        || step_db <= 0.0
        || stop_db.is_nan()
        || start_db.is_nan()
        || stop_db < start_db
        || (stop_db - start_db) / step_db > 1000.0
    {
        return Err("need step > 0, stop ≥ start and at most 1000 points".into());
    }
    let n = ((stop_db - start_db) / step_db).floor() as usize;
    let snr: Vec<f64> = (0..=n).map(|i| start_db + step_db * i as f64).collect();
    let mut curves = Vec::new();
    for s in Scheme::ALL {
        let k = kappa(s, 2).map_err(|e| e.to_string())?;
        let values: Vec<f64> = snr
            .iter()
            .map(|&db| {
                let g = k * db_to_linear(db) / 2.0;
                match modulation {
                    2 => mgf_ber_bpsk(g),
                    8 => mgf_ber_mpsk(g, 8, MpskForm::Standard),
                    m => mgf_ber_mqam(g, m),
                }
            })
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        curves.push(json!({ "scheme": s.name(), "kappa": k, "values": values }));
    }
    Ok(json!({ "modulation": modulation, "gamma0_db": snr, "curves": curves }).to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = beamPattern)]
pub fn beam_pattern(scheme: &str, q: u32, points: usize, seed: u64) -> Result<String, JsError> {
    js(beam_pattern_json(scheme, q, points, seed))
}

#[wasm_bindgen(js_name = kappaTable)]
pub fn kappa_table(q: u32) -> Result<String, JsError> {
    js(kappa_table_json(q))
}

#[wasm_bindgen(js_name = berCurves)]
pub fn ber_curves(
    modulation: usize,
    start_db: f64,
    stop_db: f64,
    step_db: f64,
) -> Result<String, JsError> {
    js(ber_curves_json(modulation, start_db, stop_db, step_db))
}
