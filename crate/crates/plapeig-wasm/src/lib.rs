//! Browser bindings for the balanced inverse iteration.
//!
//! Three operations are exported to JavaScript, sized for interactive
//! use on meshes up to 96x96: [`api::run_iterations_json`] runs the full
//! iteration and returns the trace plus the final iterate for rendering,
//! [`api::balance_curve_json`] samples the two part quotients across the
//! load split to show the root the balance search finds, and
//! [`api::counterexample_terms`] produces the bounded recurrence whose
//! running means never settle.
//!
//! The JSON layer is plain Rust and tested on the host; only the thin
//! `wasm_bindgen` wrappers are target-gated. Build the browser package
//! with `wasm-pack build crates/plapeig-wasm --target web`.

pub mod api;

#[cfg(target_arch = "wasm32")]
mod bindings {
    use wasm_bindgen::prelude::*;

    /// Runs the iteration and returns `{p, nx, alpha_star, stop, states,
    /// values, ...}` as a JSON string.
    #[wasm_bindgen]
    pub fn run_iterations(
        p: f64,
        nx: u32,
        guess: String,
        beta: String,
        iters: u32,
    ) -> Result<String, JsError> {
        crate::api::run_iterations_json(p, nx, &guess, &beta, iters)
            .map_err(|e| JsError::new(&e))
    }

    /// Samples R⁺ and R⁻ over the load split alpha and locates the
    /// balanced alpha; returns a JSON string.
    #[wasm_bindgen]
    pub fn balance_curve(
        p: f64,
        nx: u32,
        guess: String,
        samples: u32,
    ) -> Result<String, JsError> {
        crate::api::balance_curve_json(p, nx, &guess, samples).map_err(|e| JsError::new(&e))
    }

    /// First `n` terms of the bounded recurrence with non-convergent
    /// running means.
    #[wasm_bindgen]
    pub fn counterexample(n: u32) -> Result<Vec<f64>, JsError> {
        crate::api::counterexample_terms(n as usize).map_err(|e| JsError::new(&e))
    }
}
