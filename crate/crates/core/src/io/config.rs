//! TOML run configuration.
//!
//! ```toml
//! [grid]
//! cells = [32, 32, 1]        # two entries mean a 2D run
//! extent = [1.0, 1.0, 1.0]   # default unit box
//! advection = "upwind"       # or "minmod"
//!
//! [model]
//! alpha = 1.0                # required
//! chi0 = 1.0
//! s0_slope = 0.5             # omit for a constant signal response
//! rotation = 0.0             # θ in [0, π/2]
//! eps = 0.0                  # cutoffs and Yosida smoothing
//!
//! [fluid]
//! kappa = 1.0
//! phi_gradient = [0.0, -1.0, 0.0]   # default: −1 along the last active axis
//! solver_tol = 1e-10
//! solver_maxit = 500
//!
//! [time]
//! t_end = 10.0
//! dt = 0.01                  # fixed step; omit for the adaptive policy
//! safety = 0.4               # adaptive only
//! dt_max = 0.01              # adaptive only
//! max_steps = 100000
//!
//! [diagnostics]
//! every = 10
//! p = 3.0                    # default max(2, 2α + 1)
//! convergence_tol = 1e-3     # enables the convergence stop
//!
//! [initial]
//! n = { mean = 2.0, modes = [{ amplitude = 0.5, k = [1, 0, 0] }] }
//! c = { mean = 0.0 }
//! m = { mean = 1.0, bumps = [{ amplitude = 0.3, center = [0.5, 0.5, 0.5], width = 0.1 }] }
//! vortex = 0.0
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::Grid;
use crate::fluid::FluidParams;
use crate::operators::{AdvectionScheme, StencilConfig};
use crate::sensitivity::{SensitivityParams, SignalResponse};
use crate::stepping::{DiagnosticsConfig, DtPolicy, InitialData, ProfileSpec, SimConfig};

pub const DEFAULT_KAPPA: f64 = 1.0;
pub const DEFAULT_SAFETY: f64 = 0.4;
pub const DEFAULT_DT_MAX: f64 = 0.01;
pub const DEFAULT_SOLVER_TOL: f64 = 1e-10;
pub const DEFAULT_SOLVER_MAXIT: usize = 500;

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    grid: RawGrid,
    model: RawModel,
    #[serde(default)]
    fluid: RawFluid,
    time: RawTime,
    #[serde(default)]
    diagnostics: RawDiagnostics,
    #[serde(default)]
    initial: RawInitial,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    cells: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    extent: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    advection: Option<AdvectionScheme>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    chi0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    s0_slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rotation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFluid {
    #[serde(skip_serializing_if = "Option::is_none")]
    kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    phi_gradient: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver_maxit: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    t_end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    safety: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dt_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_steps: Option<u64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    convergence_tol: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<ProfileSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<ProfileSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<ProfileSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    vortex: Option<f64>,
}

fn triple<T: Copy>(v: &[T], fill: T, what: &str) -> Result<[T; 3]> {
    match v.len() {
        2 => Ok([v[0], v[1], fill]),
        3 => Ok([v[0], v[1], v[2]]),
        k => Err(Error::Config(format!("[grid] {what} needs 2 or 3 entries, got {k}"))),
    }
}

/// Default ∇φ: unit gravity along the last active axis.
pub fn default_phi_gradient(grid: &Grid) -> [f64; 3] {
    let mut g = [0.0; 3];
    if let Some(a) = grid.active_axes().last() {
        g[a] = -1.0;
    }
    g
}

/// Default functional exponent max(2, 2α + 1).
pub fn default_p(alpha: f64) -> f64 {
    2f64.max(2.0 * alpha + 1.0)
}

/// Parses and fully resolves a configuration.
pub fn parse_config(text: &str) -> Result<SimConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;

    let dims = triple(&raw.grid.cells, 1, "cells")?;
    let extent = match &raw.grid.extent {
        Some(e) => triple(e, 1.0, "extent")?,
        None => [1.0; 3],
    };
    let grid = Grid::new(dims, extent)?;

    let alpha = raw
        .model
        .alpha
        .ok_or_else(|| Error::Config("[model] alpha is required".into()))?;
    if !(alpha >= 0.0) {
        return Err(Error::Config(format!("[model] alpha = {alpha} violates α >= 0")));
    }
    if alpha == 0.0 {
        log::warn!("alpha = 0: saturation is off; the boundedness and convergence results assume α > 0");
    }
    let eps = raw.model.eps.unwrap_or(0.0);
    let sensitivity = SensitivityParams {
        alpha,
        chi0: raw.model.chi0.unwrap_or(1.0),
        response: match raw.model.s0_slope {
            Some(slope) => SignalResponse::Affine { slope },
            None => SignalResponse::Constant,
        },
        rotation: raw.model.rotation.unwrap_or(0.0),
        eps,
    };

    let fluid = FluidParams {
        kappa: raw.fluid.kappa.unwrap_or(DEFAULT_KAPPA),
        eps,
        phi_gradient: raw.fluid.phi_gradient.unwrap_or_else(|| default_phi_gradient(&grid)),
        solver_tol: raw.fluid.solver_tol.unwrap_or(DEFAULT_SOLVER_TOL),
        solver_maxit: raw.fluid.solver_maxit.unwrap_or(DEFAULT_SOLVER_MAXIT),
    };

    let t = &raw.time;
    let t_end = t.t_end.ok_or_else(|| Error::Config("[time] t_end is required".into()))?;
    let dt = match t.dt {
        Some(dt) => {
            if t.safety.is_some() || t.dt_max.is_some() {
                return Err(Error::Config(
                    "[time] dt selects a fixed step; safety and dt_max apply only to the adaptive policy".into(),
                ));
            }
            DtPolicy::Fixed { dt }
        }
        None => DtPolicy::Adaptive {
            safety: t.safety.unwrap_or(DEFAULT_SAFETY),
            dt_max: t.dt_max.unwrap_or(DEFAULT_DT_MAX),
        },
    };

    let d = &raw.diagnostics;
    let defaults = InitialData::default();
    let cfg = SimConfig {
        grid,
        sensitivity,
        fluid,
        stencil: StencilConfig {
            advection: raw.grid.advection.unwrap_or_default(),
        },
        dt,
        t_end,
        max_steps: t.max_steps,
        diagnostics: DiagnosticsConfig {
            every: d.every.unwrap_or(1),
            p: d.p.unwrap_or_else(|| default_p(alpha)),
            convergence_tol: d.convergence_tol,
        },
        initial: InitialData {
            n: raw.initial.n.unwrap_or(defaults.n),
            c: raw.initial.c.unwrap_or(defaults.c),
            m: raw.initial.m.unwrap_or(defaults.m),
            vortex: raw.initial.vortex.unwrap_or(0.0),
        },
    };
    cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(cfg)
}

/// Emits every resolved parameter; `parse_config(&emit_config(c)) == c`.
pub fn emit_config(cfg: &SimConfig) -> Result<String> {
    let (dt, safety, dt_max) = match cfg.dt {
        DtPolicy::Fixed { dt } => (Some(dt), None, None),
        DtPolicy::Adaptive { safety, dt_max } => (None, Some(safety), Some(dt_max)),
    };
    let s = &cfg.sensitivity;
    let raw = RawConfig {
        grid: RawGrid {
            cells: cfg.grid.dims().to_vec(),
            extent: Some(cfg.grid.extent().to_vec()),
            advection: Some(cfg.stencil.advection),
        },
        model: RawModel {
            alpha: Some(s.alpha),
            chi0: Some(s.chi0),
            s0_slope: match s.response {
                SignalResponse::Constant => None,
                SignalResponse::Affine { slope } => Some(slope),
            },
            rotation: Some(s.rotation),
            eps: Some(s.eps),
        },
        fluid: RawFluid {
            kappa: Some(cfg.fluid.kappa),
            phi_gradient: Some(cfg.fluid.phi_gradient),
            solver_tol: Some(cfg.fluid.solver_tol),
            solver_maxit: Some(cfg.fluid.solver_maxit),
        },
        time: RawTime {
            t_end: Some(cfg.t_end),
            dt,
            safety,
            dt_max,
            max_steps: cfg.max_steps,
        },
        diagnostics: RawDiagnostics {
            every: Some(cfg.diagnostics.every),
            p: Some(cfg.diagnostics.p),
            convergence_tol: cfg.diagnostics.convergence_tol,
        },
        initial: RawInitial {
            n: Some(cfg.initial.n.clone()),
            c: Some(cfg.initial.c.clone()),
            m: Some(cfg.initial.m.clone()),
            vortex: Some(cfg.initial.vortex),
        },
    };
    toml::to_string(&raw).map_err(|e| Error::Config(e.to_string()))
}

/// Reads and parses a configuration file.
pub fn load_config(path: &std::path::Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}
