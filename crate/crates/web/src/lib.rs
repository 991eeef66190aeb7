//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Requests and results cross the boundary as JSON strings or flat
//! `Float64Array`s; errors become JavaScript exceptions carrying the
//! machine-readable error name.

pub mod ops;

use wasm_bindgen::prelude::*;

fn js_error(e: invisible_eit::Error) -> JsValue {
    JsValue::from_str(&format!("{}: {e}", e.name()))
}

/// Raster of `u_index` (or `ψ_index` when `psi` is set) for electrodes at
/// `degrees`.
#[wasm_bindgen(js_name = potentialRaster)]
pub fn potential_raster(degrees: Vec<f64>, index: usize, psi: bool, size: usize) -> Result<Vec<f64>, JsValue> {
    ops::potential_raster(&degrees, index, psi, size).map(|r| r.values).map_err(js_error)
}

/// Runs the construction for a JSON request; returns the outcome as JSON.
#[wasm_bindgen]
pub fn construct(request: &str) -> Result<String, JsValue> {
    let req = ops::Request::parse(request).map_err(js_error)?;
    let out = ops::construct(&req).map_err(js_error)?;
    Ok(serde_json::to_string(&out).expect("outcome serializes"))
}

/// Raster of the dual function `κ̃_k` for a JSON request.
#[wasm_bindgen(js_name = dualBasisRaster)]
pub fn dual_basis_raster(request: &str) -> Result<Vec<f64>, JsValue> {
    let req = ops::Request::parse(request).map_err(js_error)?;
    ops::dual_basis_raster(&req).map(|r| r.values).map_err(js_error)
}
