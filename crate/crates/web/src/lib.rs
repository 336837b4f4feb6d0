//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export returns a JSON string; the page parses and draws it.

use std::collections::BTreeMap;

use momask_core::masked_gen::{iterative_decode, DecodeConfig, MaskSchedule, Sampling};
use momask_core::metrics::{jerk, sjpe, sjpe_trace};
use momask_core::motion::{patch, synth_motion_with, JointLayout, MotionSequence, SynthKind};
use momask_core::predictor::{Condition, OraclePredictor};
use momask_core::rvq::{train_rvq, RvqConfig};
use momask_core::seeded_rng;
use rand::Rng;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const MAX_TOKENS: usize = 256;
const MAX_ITERATIONS: usize = 64;

/// Decodes `n` tokens from random per-position distributions over `vocab`
/// tokens and reports the state after every iteration (`-1` = masked).
pub fn decode_trace(n: usize, iterations: usize, vocab: usize, temperature: f64, greedy: bool, seed: u64) -> Result<Value, String> {
    if n == 0 || n > MAX_TOKENS || iterations == 0 || iterations > MAX_ITERATIONS || vocab == 0 {
        return Err(format!("need 1 <= n <= {MAX_TOKENS}, 1 <= iterations <= {MAX_ITERATIONS}, vocab >= 1"));
    }
    let mut rng = seeded_rng(seed);
    let rows = (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..vocab).map(|_| rng.random::<f64>().powi(3) + 1e-3).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / total).collect()
        })
        .collect();
    let oracle = OraclePredictor::unconditional(rows).map_err(|e| e.to_string())?;
    let cfg = DecodeConfig {
        iterations,
        temperature,
        seed,
        sampling: if greedy { Sampling::Greedy } else { Sampling::Categorical },
        ..DecodeConfig::default()
    };
    let out = iterative_decode(&oracle, n, &Condition::Null, &cfg, &BTreeMap::new()).map_err(|e| e.to_string())?;
    let history: Vec<Vec<i64>> = out
        .history
        .iter()
        .map(|h| h.tokens().iter().map(|t| t.map_or(-1, |v| v as i64)).collect())
        .collect();
    Ok(json!({
        "schedule": MaskSchedule::Cosine.masked_counts(n, iterations),
        "masked_counts": out.masked_counts,
        "history": history,
        "tokens": out.tokens,
    }))
}

/// Trains a small residual quantizer on synthetic clips and reports the mean
/// reconstruction error after each layer.
pub fn rvq_layers(clips: usize, residual_layers: usize, codebook_size: usize, seed: u64) -> Result<Value, String> {
    if clips == 0 || clips > 64 || residual_layers > 8 || !(2..=128).contains(&codebook_size) {
        return Err("need 1..=64 clips, at most 8 residual layers, codebook size 2..=128".into());
    }
    let mut layout = JointLayout::packed(1);
    layout.total_dims = 4;
    let data = (0..clips)
        .map(|i| {
            let seq = synth_motion_with(SynthKind::RandomSmooth, 64, seed + i as u64, &layout, 20.0).map_err(|e| e.to_string())?;
            patch(&seq, 2).map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, _>>()?;
    let cfg = RvqConfig { num_residual_layers: residual_layers, codebook_size, code_dim: 8, ..RvqConfig::default() };
    let stack = train_rvq(&data, &cfg, 4, 512, seed).map_err(|e| e.to_string())?.stack;
    let layers = cfg.num_layers();
    let mut mse = vec![0.0; layers];
    for lat in &data {
        let trace = stack.encode(lat, layers).map_err(|e| e.to_string())?;
        for (k, m) in mse.iter_mut().enumerate() {
            *m += trace.mse_after(k + 1) / data.len() as f64;
        }
    }
    Ok(json!({ "mse": mse }))
}

/// Compares a synthetic clip against a box-smoothed and noise-perturbed copy
/// of itself and returns the sJPE report with a per-frame trace.
pub fn jerk_report(kind: &str, smoothing: usize, noise: f64, seed: u64) -> Result<Value, String> {
    let kind: SynthKind = kind.parse().map_err(|e: momask_core::motion::MotionError| e.to_string())?;
    if smoothing > 16 || !(0.0..=1.0).contains(&noise) {
        return Err("smoothing must be at most 16 and noise within 0..=1".into());
    }
    let layout = JointLayout::packed(1);
    let gt = synth_motion_with(kind, 60, seed, &layout, 20.0).map_err(|e| e.to_string())?;
    let (frames, dims) = (gt.len(), layout.total_dims);
    let mut values = gt.values().to_vec();
    let mut rng = seeded_rng(seed.wrapping_add(1));
    for _ in 0..smoothing {
        let prev = values.clone();
        for t in 1..frames - 1 {
            for c in 0..dims {
                values[t * dims + c] = (prev[(t - 1) * dims + c] + prev[t * dims + c] + prev[(t + 1) * dims + c]) / 3.0;
            }
        }
    }
    for v in &mut values {
        *v += noise * (rng.random::<f64>() - 0.5);
    }
    let pred = MotionSequence::new(values, gt.fps(), layout).map_err(|e| e.to_string())?;
    let (jp, jg) = (jerk(&pred).map_err(|e| e.to_string())?, jerk(&gt).map_err(|e| e.to_string())?);
    let report = sjpe(&jp, &jg).map_err(|e| e.to_string())?;
    let trace = sjpe_trace(&jp, &jg).map_err(|e| e.to_string())?;
    Ok(json!({
        "total": report.total,
        "noise": report.noise,
        "static": report.r#static,
        "gt_jerk": trace.iter().map(|f| f.gt_jerk).collect::<Vec<_>>(),
        "pred_jerk": trace.iter().map(|f| f.pred_jerk).collect::<Vec<_>>(),
        "sign": trace.iter().map(|f| f.sign).collect::<Vec<_>>(),
    }))
}

fn to_js(r: Result<Value, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = decodeTrace)]
pub fn decode_trace_js(n: usize, iterations: usize, vocab: usize, temperature: f64, greedy: bool, seed: u32) -> Result<String, JsError> {
    to_js(decode_trace(n, iterations, vocab, temperature, greedy, seed as u64))
}

#[wasm_bindgen(js_name = rvqLayers)]
pub fn rvq_layers_js(clips: usize, residual_layers: usize, codebook_size: usize, seed: u32) -> Result<String, JsError> {
    to_js(rvq_layers(clips, residual_layers, codebook_size, seed as u64))
}

#[wasm_bindgen(js_name = jerkReport)]
pub fn jerk_report_js(kind: &str, smoothing: usize, noise: f64, seed: u32) -> Result<String, JsError> {
    to_js(jerk_report(kind, smoothing, noise, seed as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_trace_follows_the_schedule() {
        let v = decode_trace(20, 5, 4, 1.0, false, 3).unwrap();
        assert_eq!(v["schedule"], v["masked_counts"]);
        let history = v["history"].as_array().unwrap();
        assert_eq!(history.len(), 5);
        assert!(history[4].as_array().unwrap().iter().all(|t| t.as_i64().unwrap() >= 0));
        assert!(decode_trace(0, 5, 4, 1.0, false, 3).is_err());
    }

    #[test]
    fn rvq_error_never_rises_with_layers() {
        let mse: Vec<f64> = serde_json::from_value(rvq_layers(6, 3, 8, 1).unwrap()["mse"].clone()).unwrap();
        assert_eq!(mse.len(), 4);
        assert!(mse.windows(2).all(|w| w[1] <= w[0]), "{mse:?}");
    }

    #[test]
    fn smoothing_reads_as_static_error() {
        let v = jerk_report("random_smooth", 8, 0.0, 2).unwrap();
        assert!(v["static"].as_f64().unwrap() > v["noise"].as_f64().unwrap());
        let same = jerk_report("cubic", 0, 0.0, 2).unwrap();
        assert_eq!(same["total"], 0.0);
        assert!(jerk_report("zigzag", 0, 0.0, 2).is_err());
    }
}
