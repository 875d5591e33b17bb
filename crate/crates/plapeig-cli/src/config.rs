//! Experiment configuration: a flat TOML document, parsed and validated
//! into an [`ExperimentSpec`].
//!
//! The format is round-trippable: [`ExperimentSpec::to_toml`] emits a
//! document that parses back to an equal spec. Full schema, with the
//! optional parts marked:
//!
//! ```toml
//! p_values = [2.0, 3.0]    # each exponent in (1, inf), no duplicates
//! beta = "linear"          # "linear" or "power"; optional, default linear
//! u0 = "midline"           # midline | diagonal | circle
//!                          # | first_eig_product | first_eig_product:M,N
//! iters = 5                # sweep budget per exponent, at least 1
//!
//! [mesh]
//! kind = "rect"            # "rect" or "interval"
//! nx = 64
//! ny = 64                  # rect only
//! width = 1.0              # optional, default 1; interval length in 1d
//! height = 1.0             # rect only; optional, default 1
//!
//! [tolerances]             # optional table, every key optional
//! newton_tol = 1e-10       # inner solver, relative residual
//! rq_stop_tol = 1e-8       # stop when the Rayleigh decrement falls below
//! diff_stop_tol = 1e-7     # stop on relative iterate difference
//! root_f_tol = 1e-7        # balance residual acceptance
//! root_alpha_tol = 1e-9    # balance bracket width
//!
//! [outputs]
//! trace_csv = "trace.csv"  # per-exponent traces: trace_p{p}.csv
//! summary = "summary.csv"  # one row per exponent
//! dump_every = 5           # optional; nodal dumps every that many sweeps
//! ```
//!
//! Unset tolerances fall back to the library defaults. Relative output
//! paths are resolved against the output directory (`PLAPEIG_OUT_DIR` or
//! the working directory).

use std::str::FromStr;

use plapeig::{BetaMap, InitialGuess, RunConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    /// Syntax and type errors, with the parser's line/column diagnostics.
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    /// Well-formed document with out-of-range or missing values.
    #[error("invalid config: {0}")]
    Validation(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Validation(msg.into())
}

/// Mesh selection, mirroring the two builders of the library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    /// "rect" or "interval".
    pub kind: String,
    /// Cells along x (or along the interval).
    pub nx: u32,
    /// Cells along y; required for "rect", rejected for "interval".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ny: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub height: Option<f64>,
}

/// Optional per-run overrides; `None` keeps the library default.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub newton_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rq_stop_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diff_stop_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub root_f_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub root_alpha_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Per-exponent trace files; `_p{p}` is inserted before the extension.
    pub trace_csv: String,
    /// Summary CSV, one row per exponent, written after all runs finish.
    pub summary: String,
    /// Write "x y value" nodal dumps every this many sweeps (and at k = 0).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dump_every: Option<u32>,
}

/// A validated experiment: one mesh, one guess, one sweep budget, applied
/// to every exponent in `p_values`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub p_values: Vec<f64>,
    /// "linear" or "power".
    pub beta: String,
    /// Initial guess name, `first_eig_product:M,N` carries its parameters.
    pub u0: String,
    pub iters: u32,
    pub mesh: MeshSpec,
    #[serde(skip_serializing_if = "Tolerances::is_default")]
    pub tolerances: Tolerances,
    pub outputs: OutputSpec,
}

impl Tolerances {
    fn is_default(&self) -> bool {
        *self == Tolerances::default()
    }
}

/// Raw document shape: everything optional so that missing required keys
/// surface as validation errors, not parser errors.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    p_values: Option<Vec<f64>>,
    beta: Option<String>,
    u0: Option<String>,
    iters: Option<u32>,
    mesh: Option<MeshSpec>,
    tolerances: Option<Tolerances>,
    outputs: Option<OutputSpec>,
}

/// Parses and validates a config document. Defaults are filled, so the
/// result is ready to run.
pub fn parse_config(text: &str) -> Result<ExperimentSpec, ConfigError> {
    let raw: RawSpec = toml::from_str(text)?;
    let mesh = raw.mesh.ok_or_else(|| invalid("missing [mesh] table"))?;
    validate_mesh(&mesh)?;

    let p_values = raw.p_values.ok_or_else(|| invalid("missing p_values"))?;
    if p_values.is_empty() {
        return Err(invalid("p_values must not be empty"));
    }
    for &p in &p_values {
        if !(p > 1.0) || !p.is_finite() {
            return Err(invalid(format!("p = {p} is outside (1, inf)")));
        }
    }
    for (i, &p) in p_values.iter().enumerate() {
        if p_values[..i].iter().any(|&q| q == p) {
            return Err(invalid(format!(
                "duplicate p = {p}; per-exponent output files would collide"
            )));
        }
    }

    let beta = raw.beta.unwrap_or_else(|| "linear".to_string());
    if beta != "linear" && beta != "power" {
        return Err(invalid(format!(
            "beta must be \"linear\" or \"power\", got \"{beta}\""
        )));
    }

    let u0 = raw.u0.ok_or_else(|| invalid("missing u0 (initial guess)"))?;
    let guess = InitialGuess::from_str(&u0)
        .map_err(|e| invalid(format!("u0: {e}")))?;
    if mesh.kind == "interval"
        && matches!(guess, InitialGuess::Diagonal | InitialGuess::Circle)
    {
        return Err(invalid(format!("u0 = \"{u0}\" needs a 2d mesh")));
    }

    let iters = raw.iters.ok_or_else(|| invalid("missing iters"))?;
    if iters == 0 {
        return Err(invalid("iters must be at least 1"));
    }

    let tolerances = raw.tolerances.unwrap_or_default();
    for (name, v) in [
        ("newton_tol", tolerances.newton_tol),
        ("rq_stop_tol", tolerances.rq_stop_tol),
        ("diff_stop_tol", tolerances.diff_stop_tol),
        ("root_f_tol", tolerances.root_f_tol),
        ("root_alpha_tol", tolerances.root_alpha_tol),
    ] {
        if let Some(v) = v {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
    }

    let outputs = raw.outputs.ok_or_else(|| invalid("missing [outputs] table"))?;
    if outputs.trace_csv.is_empty() || outputs.summary.is_empty() {
        return Err(invalid("output paths must not be empty"));
    }
    if outputs.dump_every == Some(0) {
        return Err(invalid("dump_every must be at least 1; omit it to disable"));
    }

    Ok(ExperimentSpec { p_values, beta, u0, iters, mesh, tolerances, outputs })
}

fn validate_mesh(mesh: &MeshSpec) -> Result<(), ConfigError> {
    match mesh.kind.as_str() {
        "rect" => {
            let ny = mesh.ny.ok_or_else(|| invalid("mesh.ny is required for kind = \"rect\""))?;
            if mesh.nx < 2 || ny < 2 {
                return Err(invalid("rect mesh needs nx >= 2 and ny >= 2 for interior nodes"));
            }
        }
        "interval" => {
            if mesh.nx < 2 {
                return Err(invalid("interval mesh needs nx >= 2 for interior nodes"));
            }
            if mesh.ny.is_some() || mesh.height.is_some() {
                return Err(invalid("mesh.ny and mesh.height do not apply to an interval"));
            }
        }
        other => {
            return Err(invalid(format!(
                "mesh.kind must be \"rect\" or \"interval\", got \"{other}\""
            )))
        }
    }
    for (name, v) in [("width", mesh.width), ("height", mesh.height)] {
        if let Some(v) = v {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(format!("mesh.{name} must be positive, got {v}")));
            }
        }
    }
    Ok(())
}

impl ExperimentSpec {
    /// Serializes back to the documented TOML shape. Exercised by the
    /// round-trip test; kept public as part of the config contract.
    #[cfg_attr(not(test), allow(dead_code))]
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes to TOML")
    }

    pub fn guess(&self) -> InitialGuess {
        InitialGuess::from_str(&self.u0).expect("validated at parse time")
    }

    pub fn beta_map(&self, p: f64) -> BetaMap {
        match self.beta.as_str() {
            "power" => BetaMap::Power { p },
            _ => BetaMap::Linear,
        }
    }

    /// Library run configuration for one exponent, overrides applied.
    pub fn run_config(&self, p: f64) -> RunConfig {
        let mut cfg = RunConfig::new(p, self.beta_map(p));
        cfg.max_iters = self.iters;
        let t = &self.tolerances;
        if let Some(v) = t.newton_tol {
            cfg.solver.newton_tol = v;
        }
        if let Some(v) = t.rq_stop_tol {
            cfg.rq_stop_tol = v;
        }
        if let Some(v) = t.diff_stop_tol {
            cfg.diff_stop_tol = v;
        }
        if let Some(v) = t.root_f_tol {
            cfg.root.f_tol = v;
        }
        if let Some(v) = t.root_alpha_tol {
            cfg.root.alpha_tol = v;
        }
        cfg
    }
}
