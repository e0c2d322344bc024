//! WebAssembly bindings for the demo page in `www/`.
//!
//! Build with `wasm-pack build crates/wasm --target web --out-dir www/pkg`.
//! Results are returned as flat arrays or JSON strings; errors come back as
//! thrown strings.

use serde_json::json;
use wasm_bindgen::prelude::*;

use posecal::calibration::ConfidenceLevels;
use posecal::pose::{from_repr, to_repr, ReprTag, RotationRepr};
use posecal::simulate::{simulate_report, simulate_ucs, SimulationConfig};

fn config(size: u32, sigma_true: f64, outlier_fraction: f64, seed: u32) -> SimulationConfig {
    SimulationConfig {
        dataset_size: size as usize,
        sigma_true,
        outlier_fraction,
        seed: seed as u64,
        ..Default::default()
    }
}

/// UCS over a grid of predicted sigmas, as `[sigma_0, ucs_0, sigma_1, ucs_1, ...]`.
#[wasm_bindgen]
pub fn ucs_curve(
    size: u32,
    sigma_true: f64,
    sigma_pred: &[f64],
    outlier_fraction: f64,
    seed: u32,
) -> Result<Vec<f64>, String> {
    let cfg = SimulationConfig {
        sigma_pred_grid: sigma_pred.to_vec(),
        ..config(size, sigma_true, outlier_fraction, seed)
    };
    let curve = simulate_ucs(&cfg).map_err(|e| e.to_string())?;
    Ok(curve.points.iter().flat_map(|p| [p.sigma_pred, p.ucs]).collect())
}

/// Reliability diagram of one synthetic run as JSON:
/// `{"expected": [...], "observed": [...], "area": a, "ucs": u}`.
#[wasm_bindgen]
pub fn reliability_diagram(
    size: u32,
    sigma_true: f64,
    sigma_pred: f64,
    dp: f64,
    seed: u32,
) -> Result<String, String> {
    let levels = ConfidenceLevels::uniform(dp).map_err(|e| e.to_string())?;
    let cfg = SimulationConfig { levels, ..config(size, sigma_true, 0.0, seed) };
    let r = simulate_report(&cfg, sigma_pred).map_err(|e| e.to_string())?;
    Ok(json!({
        "expected": r.diagram.expected,
        "observed": r.diagram.observed,
        "area": r.area,
        "ucs": r.ucs,
        "raw_ucs": r.raw_ucs,
    })
    .to_string())
}

/// All four encodings of the rotation with the given yaw, pitch and roll
/// (radians, intrinsic Z-Y-X), as JSON keyed by representation name, plus
/// a `gimbal_lock` flag.
#[wasm_bindgen]
pub fn rotation_reprs(yaw: f64, pitch: f64, roll: f64) -> String {
    let r = from_repr(&RotationRepr::Euler([yaw, pitch, roll])).expect("Euler angles always give a rotation");
    let mut out = serde_json::Map::new();
    for tag in ReprTag::ALL {
        out.insert(tag.name().into(), json!(to_repr(&r, tag).values()));
    }
    out.insert("gimbal_lock".into(), json!(to_repr(&r, ReprTag::Euler).gimbal_lock()));
    serde_json::Value::Object(out).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_is_flat_pairs() {
        let c = ucs_curve(2000, 0.3, &[0.1, 0.3, 1.0], 0.0, 1).unwrap();
        assert_eq!(c.len(), 6);
        assert_eq!((c[0], c[2], c[4]), (0.1, 0.3, 1.0));
        assert!(c[3] > c[1] && c[3] > c[5], "{c:?}");
        assert!(ucs_curve(10, 0.3, &[], 0.0, 1).is_err());
    }

    #[test]
    fn diagram_json() {
        let v: serde_json::Value = serde_json::from_str(&reliability_diagram(1000, 0.3, 0.3, 0.1, 2).unwrap()).unwrap();
        assert_eq!(v["expected"].as_array().unwrap().len(), 11);
        assert_eq!(v["observed"].as_array().unwrap().len(), 11);
        assert!(v["ucs"].as_f64().unwrap() > 0.9);
        assert!(reliability_diagram(1000, 0.3, 0.3, 0.0, 2).is_err());
    }

    #[test]
    fn rotation_json() {
        let v: serde_json::Value = serde_json::from_str(&rotation_reprs(0.0, 0.0, 0.0)).unwrap();
        let q: Vec<f64> = serde_json::from_value(v["quat"].clone()).unwrap();
        assert_eq!(q, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(v["matrix"].as_array().unwrap().len(), 9);
        assert_eq!(v["gimbal_lock"], false);
        let v: serde_json::Value =
            serde_json::from_str(&rotation_reprs(0.1, std::f64::consts::FRAC_PI_2, 0.0)).unwrap();
        assert_eq!(v["gimbal_lock"], true);
    }
}
