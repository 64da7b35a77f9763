//! Browser bindings: three small operations returning JSON strings.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use ulam_core::pipeline::{compute_budget, recover_instance, PipelineConfig, RecoveryInstance};
use ulam_core::schedule;

fn render(v: Result<Value, String>) -> String {
    match v {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

/// Epsilon chain for an input defect `eps` and step constant `k`.
#[wasm_bindgen]
pub fn budget_json(eps: f64, k: f64) -> String {
    render(
        compute_budget(eps, k)
            .map_err(|e| e.to_string())
            .and_then(|b| serde_json::to_value(b).map_err(|e| e.to_string())),
    )
}

/// `(κ_n, log2 δ_n)` for `n ≤ levels`.
#[wasm_bindgen]
pub fn schedule_json(eps1: f64, levels: usize) -> String {
    render(schedule(eps1, levels.min(60)).map_err(|e| e.to_string()).map(|s| {
        let rows: Vec<Value> = s
            .levels
            .iter()
            .zip(&s.log2_delta)
            .enumerate()
            .map(|(n, (&(k, _), &ld))| json!({ "n": n, "kappa": k, "log2_delta": ld }))
            .collect();
        json!({ "eps1": s.eps1, "partial_sum": s.partial_sum, "limit": 8.0 * s.eps1, "levels": rows })
    }))
}

/// Perturb a Haar-conjugated exact map by `eta` and run the pipeline on it.
/// `shape` and `multiplicities` are comma-separated block sizes.
#[wasm_bindgen]
pub fn recover_json(shape: &str, multiplicities: &str, eta: f64, seed: u64) -> String {
    render(recover(shape, multiplicities, eta, seed))
}

fn recover(shape: &str, multiplicities: &str, eta: f64, seed: u64) -> Result<Value, String> {
    let mut cfg = PipelineConfig::default();
    // keep the browser responsive
    for (k, v) in [("probes", "60"), ("width", "128"), ("probe_pairs", "8")] {
        cfg.set(k, v).map_err(|e| e.to_string())?;
    }
    cfg.set("shape", shape).map_err(|e| e.to_string())?;
    cfg.set("multiplicities", multiplicities)
        .map_err(|e| e.to_string())?;
    cfg.set("eta", &eta.to_string())
        .map_err(|e| e.to_string())?;
    cfg.seed = seed;
    cfg.validate().map_err(|e| e.to_string())?;
    let inst = RecoveryInstance {
        shape: cfg.shape.clone(),
        multiplicities: cfg.multiplicities.clone(),
        padding: 0,
        eta,
        seed,
    };
    let (row, out) = recover_instance("web", &inst, &cfg).map_err(|a| a.to_string())?;
    let r = &out.report;
    let stages: Vec<Value> = r
        .stages
        .iter()
        .map(|s| json!({ "name": s.name, "movement": s.movement }))
        .collect();
    Ok(json!({
        "n": r.n,
        "eps": r.eps,
        "stages": stages,
        "block_dims": r.block_dims,
        "final_distance": r.final_distance,
        "truth_distance": row.truth_distance,
        "ratio_linear": row.ratio_linear,
        "ratio_sqrt": row.ratio_sqrt,
        "relation_residual": r.relation_residual,
        "passed": row.passed && r.passed,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_values() {
        let v: Value = serde_json::from_str(&budget_json(2f64.powi(-20), 50.0)).unwrap();
        assert_eq!(v["eps1"].as_f64(), Some(2f64.powi(-18)));
        let e: Value = serde_json::from_str(&budget_json(0.5, 50.0)).unwrap();
        assert!(e["error"].is_string());
    }

    #[test]
    fn schedule_levels() {
        let v: Value = serde_json::from_str(&schedule_json(1.0 / 1024.0, 5)).unwrap();
        assert_eq!(v["levels"].as_array().unwrap().len(), 6);
        assert!(v["partial_sum"].as_f64().unwrap() < v["limit"].as_f64().unwrap());
    }

    #[test]
    fn recover_small() {
        let v: Value = serde_json::from_str(&recover_json("2", "2", 1e-3, 1)).unwrap();
        assert_eq!(v["passed"], true, "{v}");
        let bad: Value = serde_json::from_str(&recover_json("0", "1", 1e-3, 1)).unwrap();
        assert!(bad["error"].is_string());
    }
}
