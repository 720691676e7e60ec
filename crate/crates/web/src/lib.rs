//! wasm-bindgen surface for the browser demo in `www/`.

use edtsc::config::{ScenarioKind, SimConfig};
use edtsc::fis::Fis;
use edtsc::harness::{run_scenario, Record, SimLog};
use edtsc::metrics::{compare, compute_metrics};
use wasm_bindgen::prelude::*;

/// One finished simulation, kept on the Rust side.
#[wasm_bindgen]
pub struct Run {
    log: SimLog,
}

#[wasm_bindgen]
impl Run {
    /// A logged signal by its CSV column name, or `undefined`.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = Record::COLUMNS.iter().position(|c| *c == name)?;
        Some(self.log.records.iter().map(|r| r.values()[idx]).collect())
    }

    /// `key=value` lines, as in metrics.txt.
    pub fn metrics(&self) -> String {
        compute_metrics(&self.log).to_key_values()
    }
}

fn config(scenario: &str, speed_kmh: f64, fis: bool, duration: f64) -> Result<SimConfig, JsError> {
    let mut cfg = SimConfig::default();
    cfg.sim.scenario = scenario.parse::<ScenarioKind>().map_err(|e| JsError::new(&e.to_string()))?;
    cfg.sim.speed_kmh = speed_kmh;
    cfg.sim.fis = fis;
    cfg.sim.duration = duration;
    cfg.validate().map_err(|e| JsError::new(&e.to_string()))?;
    Ok(cfg)
}

/// Runs `track` or `dlc` with the shipped defaults.
#[wasm_bindgen]
pub fn simulate(scenario: &str, speed_kmh: f64, fis: bool, duration: f64) -> Result<Run, JsError> {
    let cfg = config(scenario, speed_kmh, fis, duration)?;
    let log = run_scenario(&cfg).map_err(|e| JsError::new(&e.to_string()))?;
    Ok(Run { log })
}

/// Reductions of `on` against `off`, as `key=value` lines.
#[wasm_bindgen]
pub fn compare_runs(on: &Run, off: &Run) -> Result<String, JsError> {
    compare(&on.log, &off.log).map(|c| c.to_key_values()).map_err(|e| JsError::new(&e))
}

/// Left or right FIS correction on an `n x n` grid of normalised inputs,
/// row-major with slip in `[0, 1]` down the rows and yaw-rate error in
/// `[-1, 1]` across the columns.
#[wasm_bindgen]
pub fn fis_surface(n: usize, left: bool) -> Vec<f64> {
    let fis = Fis::default();
    let n = n.max(2);
    let at = |k: usize| k as f64 / (n - 1) as f64;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let o = fis.infer(at(i), 2.0 * at(j) - 1.0);
            out.push(if left { o.v_corr_l } else { o.v_corr_r });
        }
    }
    out
}

/// Physical input scales: `[slip_scale, yaw_error_scale]`.
#[wasm_bindgen]
pub fn fis_scales() -> Vec<f64> {
    let fis = Fis::default();
    vec![fis.slip_scale, fis.yaw_error_scale]
}
