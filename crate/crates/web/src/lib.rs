//! Browser bindings for three small demos. Every export takes plain numbers or a
//! JSON string and returns a JSON string; errors come back as the message text.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use cbdkit::commutator::{expand_commutator, nested_commutator, psi_factorization};
use cbdkit::domination::convex_membership;
use cbdkit::grid::Grid;
use cbdkit::harness::generate::{random_kernel, random_symbols, random_vector_field, random_weight, rng_from_seed};
use cbdkit::weights::ap_characteristic;

fn out(v: cbdkit::Result<Value>) -> Result<String, String> {
    v.map(|v| v.to_string()).map_err(|e| e.to_string())
}

/// A random matrix weight on `[0,1)` and its `[W]_{A_p}`, with the log-eigenvalues per cell for plotting.
#[wasm_bindgen]
pub fn weight_profile(seed: u32, n: usize, level: u32, amplitude: f64, p: f64) -> Result<String, String> {
    out((|| {
        let grid = Grid::new(1, level)?;
        let w = random_weight(&mut rng_from_seed(seed as u64), grid, n, amplitude);
        let ap = ap_characteristic(&w, None, p)?;
        let eigs: Vec<Vec<f64>> = (0..grid.cells()).map(|c| w.cell(c).eigenvalues().iter().map(|e| e.ln()).collect()).collect();
        Ok(json!({ "ap": ap.value, "cube": ap.cube, "log_eigs": eigs }))
    })())
}

/// Gauge of `(gx, gy)` for the body `⟪f⟫_r` spanned by the planar points `[[x,y],…]`,
/// plus `steps` boundary points of the body.
#[wasm_bindgen]
pub fn membership_outline(points: &str, gx: f64, gy: f64, r: f64, steps: usize) -> Result<String, String> {
    let f: Vec<Vec<f64>> = serde_json::from_str(points).map_err(|e| format!("points: {e}"))?;
    if f.is_empty() || f.iter().any(|p| p.len() != 2) {
        return Err("points must be a non-empty list of [x, y] pairs".into());
    }
    out((|| {
        let cert = convex_membership(&f, &[gx, gy], r)?;
        let mut outline = Vec::with_capacity(steps);
        for k in 0..steps {
            let t = std::f64::consts::TAU * k as f64 / steps as f64;
            let e = [t.cos(), t.sin()];
            let rho = convex_membership(&f, &e, r)?.norm;
            if rho.is_finite() && rho > 0.0 {
                outline.push([e[0] / rho, e[1] / rho]);
            }
        }
        Ok(json!({ "norm": cert.norm, "member": cert.member, "phi": cert.phi, "outline": outline }))
    })())
}

/// Relative gap between the nested commutator and its two closed forms for a random instance.
#[wasm_bindgen]
pub fn commutator_residuals(seed: u32, n: usize, m: usize, level: u32) -> Result<String, String> {
    out((|| {
        let grid = Grid::new(1, level)?;
        let mut rng = rng_from_seed(seed as u64);
        let b = random_symbols(&mut rng, grid, n, m, 1.0);
        let op = random_kernel(&mut rng, grid, n, 1.0);
        let f = random_vector_field(&mut rng, grid, n);
        let nested = nested_commutator(&op, &b, &f)?;
        Ok(json!({
            "expansion": nested.relative_distance(&expand_commutator(&op, &b, &f)?),
            "psi": nested.relative_distance(&psi_factorization(&op, &b, &f)?),
            "size": nested.sup_norm(),
        }))
    })())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: Result<String, String>) -> Value {
        serde_json::from_str(&s.unwrap()).unwrap()
    }

    #[test]
    fn flat_weight_has_unit_ap() {
        let v = parse(weight_profile(7, 2, 3, 0.0, 2.0));
        assert!((v["ap"].as_f64().unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(v["log_eigs"].as_array().unwrap().len(), 8);
    }

    #[test]
    fn outline_surrounds_members() {
        let pts = "[[1,0],[0,1],[-1,-1]]";
        let v = parse(membership_outline(pts, 0.1, 0.1, 1.0, 36));
        assert_eq!(v["member"], json!(true));
        assert_eq!(v["outline"].as_array().unwrap().len(), 36);
        let far = parse(membership_outline(pts, 5.0, 5.0, 2.0, 8));
        assert_eq!(far["member"], json!(false));
        assert!(membership_outline("[[1,2,3]]", 0.0, 0.0, 1.0, 4).is_err());
    }

    #[test]
    fn residuals_are_rounding_error() {
        let v = parse(commutator_residuals(3, 2, 3, 3));
        assert!(v["expansion"].as_f64().unwrap() < 1e-10);
        assert!(v["psi"].as_f64().unwrap() < 1e-10);
    }
}
