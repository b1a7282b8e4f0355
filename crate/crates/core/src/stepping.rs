//! Coupled time integrator.
//!
//! One step runs four stages in order: fluid, explicit transport, implicit
//! diffusion, reaction. The reaction stage removes the same amount `R` from
//! n and m in every cell, so ∫n − ∫m is conserved to round-off.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{record, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::fields::{compensated_sum, integrate, lp_norm, Grid, Norm, ScalarField, VectorField};
use crate::fluid::{FluidParams, FluidSolver, PressureField};
use crate::linalg::{norm2, pcg, AxisBasis, AxisKind, SeparableSolver};
use crate::operators::{
    advect_conservative, chemotactic_flux_div, chemotactic_velocity, grad_norm_sq, laplacian_neumann,
    max_outflow_rate, StencilConfig,
};
use crate::sensitivity::{SensitivityEvaluator, SensitivityParams};

/// Values below `-NEGATIVE_TOLERANCE * scale` are treated as a scheme bug.
pub const NEGATIVE_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "lowercase")]
pub enum DtPolicy {
    Fixed { dt: f64 },
    /// dt = min(dt_max, safety / outflow rate).
    Adaptive { safety: f64, dt_max: f64 },
}

/// `amplitude · Π_a cos(k_a π x_a / L_a)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosineMode {
    pub amplitude: f64,
    pub k: [u32; 3],
}

/// `amplitude · exp(−|x − center|² / (2 width²))`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub amplitude: f64,
    pub center: [f64; 3],
    pub width: f64,
}

/// Scalar initial profile: mean plus cosine modes plus Gaussian bumps.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub mean: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modes: Vec<CosineMode>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bumps: Vec<Bump>,
}

impl ProfileSpec {
    pub fn constant(mean: f64) -> Self {
        Self {
            mean,
            ..Self::default()
        }
    }

    pub fn eval(&self, grid: &Grid, x: [f64; 3]) -> f64 {
        let l = grid.extent();
        let mut v = self.mean;
        for m in &self.modes {
            v += m.amplitude
                * (0..3)
                    .map(|a| (m.k[a] as f64 * std::f64::consts::PI * x[a] / l[a]).cos())
                    .product::<f64>();
        }
        for b in &self.bumps {
            let r2: f64 = (0..3)
                .filter(|&a| grid.is_active(a))
                .map(|a| (x[a] - b.center[a]).powi(2))
                .sum();
            v += b.amplitude * (-r2 / (2.0 * b.width * b.width)).exp();
        }
        v
    }

    pub fn sample(&self, grid: &Grid) -> Result<ScalarField> {
        crate::fields::set_from_function(grid, |x| self.eval(grid, x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub n: ProfileSpec,
    pub c: ProfileSpec,
    pub m: ProfileSpec,
    /// Amplitude of a single stream-function vortex in the first two axes,
    /// projected before use; 0 gives u₀ = 0.
    pub vortex: f64,
}

impl Default for InitialData {
    fn default() -> Self {
        Self {
            n: ProfileSpec::constant(2.0),
            c: ProfileSpec::constant(0.0),
            m: ProfileSpec::constant(1.0),
            vortex: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    /// Emit a record every this many steps (the initial and final states are
    /// always recorded).
    pub every: usize,
    /// Exponent of the weighted functional.
    pub p: f64,
    /// Stop once ‖n − n̂‖∞ + ‖m − m̂‖∞ + ‖u‖₂ drops below this.
    pub convergence_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub grid: Grid,
    pub sensitivity: SensitivityParams,
    pub fluid: FluidParams,
    pub stencil: StencilConfig,
    pub dt: DtPolicy,
    pub t_end: f64,
    pub max_steps: Option<u64>,
    pub diagnostics: DiagnosticsConfig,
    pub initial: InitialData,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.sensitivity.validate()?;
        self.fluid.validate()?;
        if self.fluid.eps != self.sensitivity.eps {
            return Err(Error::param("eps", "fluid and sensitivity regularization must match"));
        }
        match self.dt {
            DtPolicy::Fixed { dt } => {
                if !(dt > 0.0 && dt.is_finite()) {
                    return Err(Error::param("dt", format!("need dt > 0, got {dt}")));
                }
            }
            DtPolicy::Adaptive { safety, dt_max } => {
                if !(safety > 0.0 && safety <= 1.0) {
                    return Err(Error::param("safety", format!("need σ in (0, 1], got {safety}")));
                }
                if !(dt_max > 0.0 && dt_max.is_finite()) {
                    return Err(Error::param("dt_max", format!("need dt_max > 0, got {dt_max}")));
                }
            }
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::param("t_end", format!("need t_end >= 0, got {}", self.t_end)));
        }
        if self.diagnostics.every == 0 {
            return Err(Error::param("every", "record cadence must be at least 1"));
        }
        let p = self.diagnostics.p;
        let floor = 1f64.max(2.0 * self.sensitivity.alpha);
        if !(p.is_finite() && p > floor) {
            return Err(Error::param("p", format!("need p > max(1, 2α) = {floor}, got {p}")));
        }
        if let Some(tol) = self.diagnostics.convergence_tol {
            if !(tol > 0.0) {
                return Err(Error::param("convergence_tol", format!("need tol > 0, got {tol}")));
            }
        }
        Ok(())
    }
}

/// Integral summary of the initial data; needed by every bound the
/// diagnostics check.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InitialSummary {
    pub mass_n: f64,
    pub mass_c: f64,
    pub mass_m: f64,
    pub max_n: f64,
    pub max_c: f64,
    pub max_m: f64,
    /// ∫ m₀²
    pub m_sq: f64,
    pub volume: f64,
}

impl InitialSummary {
    pub fn from_fields(n: &ScalarField, c: &ScalarField, m: &ScalarField) -> Self {
        Self {
            mass_n: integrate(n),
            mass_c: integrate(c),
            mass_m: integrate(m),
            max_n: n.max_abs(),
            max_c: c.max_abs(),
            max_m: m.max_abs(),
            m_sq: integrate(&m.map(|v| v * v)),
            volume: n.grid().volume(),
        }
    }

    /// (n̂, m̂)
    pub fn equilibrium(&self) -> (f64, f64) {
        let d = (self.mass_n - self.mass_m) / self.volume;
        (d.max(0.0), (-d).max(0.0))
    }
}

/// Running space-time integrals ∫₀ᵗ∫ of nm, |∇m|², |∇c|², |∇u|².
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Accumulators {
    pub nm: f64,
    pub grad_m: f64,
    pub grad_c: f64,
    pub grad_u: f64,
}

/// Per-step solver monitors. Window maxima cover the steps since the last
/// emitted record.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Monitors {
    pub last_dt: f64,
    pub transport_substeps: u64,
    pub div_residual: f64,
    pub energy_residual: f64,
    pub yosida_ratio: f64,
}

impl Monitors {
    fn reset_window(&mut self) {
        self.div_residual = 0.0;
        self.energy_residual = f64::NEG_INFINITY;
        self.yosida_ratio = 0.0;
        self.transport_substeps = 0;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub step: u64,
    pub n: ScalarField,
    pub c: ScalarField,
    pub m: ScalarField,
    pub u: VectorField,
    pub pressure: PressureField,
    pub acc: Accumulators,
    pub initial: InitialSummary,
    pub monitors: Monitors,
}

impl SimState {
    pub fn grid(&self) -> &Grid {
        self.n.grid()
    }

    /// Samples and checks the configured initial data.
    pub fn initial(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.grid;
        let n = cfg.initial.n.sample(&grid)?;
        let c = cfg.initial.c.sample(&grid)?;
        let m = cfg.initial.m.sample(&grid)?;
        for (name, f) in [("n0", &n), ("c0", &c), ("m0", &m)] {
            if f.min() < 0.0 {
                return Err(Error::Config(format!(
                    "initial {name} must be >= 0 everywhere (min sampled value {:.6e})",
                    f.min()
                )));
            }
        }
        if n.max() == 0.0 {
            log::warn!("n0 vanishes identically; the coupled system reduces to signal decay");
        }
        let fluid = FluidSolver::new(&grid, cfg.fluid)?;
        let u = if cfg.initial.vortex != 0.0 {
            fluid.project(&crate::mms::stream_velocity(&grid, cfg.initial.vortex))?.u
        } else {
            VectorField::zeros(&grid)
        };
        let initial = InitialSummary::from_fields(&n, &c, &m);
        let mut monitors = Monitors::default();
        monitors.reset_window();
        Ok(Self {
            t: 0.0,
            step: 0,
            n,
            c,
            m,
            u,
            pressure: PressureField::zeros(&grid),
            acc: Accumulators::default(),
            initial,
            monitors,
        })
    }
}

/// Receives records at the configured cadence.
pub trait DiagnosticsSink {
    fn emit(&mut self, state: &SimState, record: &DiagnosticsRecord) -> Result<()>;

    /// Called after every step, before any record for that step.
    fn after_step(&mut self, _state: &SimState) -> Result<()> {
        Ok(())
    }
}

impl DiagnosticsSink for Vec<DiagnosticsRecord> {
    fn emit(&mut self, _state: &SimState, record: &DiagnosticsRecord) -> Result<()> {
        self.push(record.clone());
        Ok(())
    }
}

/// Discards everything.
pub struct NullSink;

impl DiagnosticsSink for NullSink {
    fn emit(&mut self, _: &SimState, _: &DiagnosticsRecord) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EndTime,
    Converged,
    MaxSteps,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: SimState,
    pub stop: StopReason,
    pub records: usize,
}

/// Owns the cached solvers for one configuration.
#[derive(Debug, Clone)]
pub struct Stepper {
    cfg: SimConfig,
    sens: SensitivityEvaluator,
    fluid: FluidSolver,
    heat: SeparableSolver,
}

impl Stepper {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.grid;
        let (dims, h) = (grid.dims(), grid.spacing());
        let heat = SeparableSolver::new([0, 1, 2].map(|a| {
            if grid.is_active(a) {
                AxisBasis::new(Some(AxisKind::NeumannCells), dims[a], h[a])
            } else {
                AxisBasis::new(None, 1, h[a])
            }
        }));
        Ok(Self {
            cfg: cfg.clone(),
            sens: SensitivityEvaluator::new(cfg.sensitivity, &grid)?,
            fluid: FluidSolver::new(&grid, cfg.fluid)?,
            heat,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn fluid(&self) -> &FluidSolver {
        &self.fluid
    }

    pub fn sensitivity(&self) -> &SensitivityEvaluator {
        &self.sens
    }

    /// Largest per-cell outflow rate of the transport stage for `n`, scaled
    /// by the advection scheme's CFL factor.
    pub fn transport_rate(&self, u: &VectorField, n: &ScalarField, c: &ScalarField) -> (f64, usize) {
        let drift = chemotactic_velocity(n, c, &self.sens);
        let (rate, cell) = max_outflow_rate(&[u, &drift]);
        (rate / self.cfg.stencil.advection.cfl_factor(), cell)
    }

    /// σ / rate capped by `dt_max`; the fixed step for a fixed policy.
    pub fn stable_dt(&self, state: &SimState) -> f64 {
        match self.cfg.dt {
            DtPolicy::Fixed { dt } => dt,
            DtPolicy::Adaptive { safety, dt_max } => {
                let (rate, _) = self.transport_rate(&state.u, &state.n, &state.c);
                if rate > 0.0 {
                    dt_max.min(safety / rate)
                } else {
                    dt_max
                }
            }
        }
    }

    /// Advances `state` by one step of size `dt`.
    pub fn step_dt(&self, state: &mut SimState, dt: f64) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", format!("need dt > 0, got {dt}")));
        }
        let grid = *state.grid();
        let vol = grid.cell_volume();

        let fs = self.fluid.fluid_step(&state.u, &state.n, &state.m, dt)?;
        let mon = &mut state.monitors;
        mon.last_dt = dt;
        mon.div_residual = mon.div_residual.max(fs.div_residual);
        mon.energy_residual = mon.energy_residual.max(fs.relative_energy_residual());
        if let Some(r) = fs.yosida_ratio {
            mon.yosida_ratio = mon.yosida_ratio.max(r);
        }
        state.u = fs.u;
        state.pressure = fs.pressure;
        state.acc.grad_u += dt * fs.grad_sq;

        self.transport(state, dt)?;

        state.n = self.diffuse(&state.n, dt, "n")?;
        state.c = self.diffuse(&state.c, dt, "c")?;
        state.m = self.diffuse(&state.m, dt, "m")?;
        state.acc.grad_c += dt * grad_norm_sq(&state.c);
        state.acc.grad_m += dt * grad_norm_sq(&state.m);

        let decay = (-dt).exp();
        let mut removed = Vec::with_capacity(grid.num_cells());
        let (nv, mv, cv) = (state.n.values_mut(), state.m.values_mut(), state.c.values_mut());
        for i in 0..nv.len() {
            let (n, m) = (nv[i], mv[i]);
            let r = (dt * n * m / (1.0 + dt * n.max(m))).min(n).min(m);
            nv[i] = n - r;
            mv[i] = m - r;
            removed.push(r);
            cv[i] = decay * cv[i] + (1.0 - decay) * 0.5 * (m + mv[i]);
        }
        state.acc.nm += vol * compensated_sum(removed);

        state.t += dt;
        state.step += 1;
        for (name, f) in [("n", &state.n), ("c", &state.c), ("m", &state.m)] {
            if !f.is_finite() {
                return Err(Error::NonFinite(name));
            }
        }
        Ok(())
    }

    /// One step with the policy's dt, clipped to land on `t_end`.
    pub fn step(&self, state: &mut SimState) -> Result<()> {
        let mut dt = self.stable_dt(state);
        let remaining = self.cfg.t_end - state.t;
        if remaining > 0.0 && remaining < dt * (1.0 + 1e-9) {
            dt = remaining;
        }
        self.step_dt(state, dt)
    }

    fn transport(&self, state: &mut SimState, dt: f64) -> Result<()> {
        let scheme = self.cfg.stencil.advection;
        let adaptive = matches!(self.cfg.dt, DtPolicy::Adaptive { .. });
        let mut remaining = dt;
        while remaining > 0.0 {
            let (rate, cell) = self.transport_rate(&state.u, &state.n, &state.c);
            let mut h = remaining;
            if rate * h > 1.0 {
                if !adaptive {
                    return Err(Error::CflViolation {
                        dt,
                        limit: 1.0 / rate,
                        speed: rate * state.grid().min_spacing(),
                        cell,
                    });
                }
                h = 1.0 / rate;
            }
            if remaining - h <= 1e-12 * dt {
                h = remaining;
            }
            let dn = advect_conservative(&state.u, &state.n, scheme)
                .lincomb(1.0, &chemotactic_flux_div(&state.n, &state.c, &self.sens), 1.0);
            let dc = advect_conservative(&state.u, &state.c, scheme);
            let dm = advect_conservative(&state.u, &state.m, scheme);
            state.n = checked(state.n.lincomb(1.0, &dn, -h), "n")?;
            state.c = checked(state.c.lincomb(1.0, &dc, -h), "c")?;
            state.m = checked(state.m.lincomb(1.0, &dm, -h), "m")?;
            state.monitors.transport_substeps += 1;
            remaining -= h;
        }
        Ok(())
    }

    /// Backward Euler `(I − dt Δ_N) x = b`, mass-corrected.
    fn diffuse(&self, b: &ScalarField, dt: f64, name: &'static str) -> Result<ScalarField> {
        let grid = *b.grid();
        let bn = norm2(b.values());
        if bn == 0.0 {
            return Ok(b.clone());
        }
        let apply = |x: &[f64], out: &mut [f64]| {
            let f = ScalarField::from_values(&grid, x.to_vec()).expect("shape");
            for ((o, l), xi) in out.iter_mut().zip(laplacian_neumann(&f).values()).zip(x) {
                *o = xi - dt * l;
            }
        };
        let precond = |r: &[f64], z: &mut [f64]| self.heat.solve(1.0, dt, r, z);
        let mut x = b.values().to_vec();
        let tol = self.cfg.fluid.solver_tol * bn;
        pcg(apply, precond, b.values(), &mut x, tol, self.cfg.fluid.solver_maxit).map_err(|rep| {
            Error::SolverNotConverged {
                solver: "scalar diffusion",
                iterations: rep.iterations,
                residual: rep.residual,
                target: tol,
            }
        })?;
        // The exact solution conserves Σx = Σb; remove the solver's drift.
        let shift = (compensated_sum(b.values().iter().copied()) - compensated_sum(x.iter().copied())) / x.len() as f64;
        x.iter_mut().for_each(|v| *v += shift);
        checked(ScalarField::from_values(&grid, x)?, name)
    }
}

/// Clamps round-off negatives to zero; larger negatives are an error.
fn checked(mut f: ScalarField, name: &'static str) -> Result<ScalarField> {
    let scale = f.max_abs();
    for (i, v) in f.values_mut().iter_mut().enumerate() {
        if *v < 0.0 {
            if *v < -NEGATIVE_TOLERANCE * scale {
                return Err(Error::NegativeDensity {
                    field: name,
                    value: *v,
                    cell: i,
                    scale,
                });
            }
            *v = 0.0;
        }
    }
    Ok(f)
}

/// Distance to the homogeneous equilibrium used by the convergence stop.
pub fn equilibrium_distance(state: &SimState) -> Result<f64> {
    let (n_hat, m_hat) = state.initial.equilibrium();
    let dn = state.n.map(|v| v - n_hat);
    let dm = state.m.map(|v| v - m_hat);
    Ok(lp_norm(&dn, Norm::Inf)? + lp_norm(&dm, Norm::Inf)? + state.u.l2_norm())
}

/// Single step with a fresh stepper.
pub fn step(state: &SimState, cfg: &SimConfig) -> Result<SimState> {
    let mut next = state.clone();
    Stepper::new(cfg)?.step(&mut next)?;
    Ok(next)
}

/// Stable step size for `state` under `cfg`.
pub fn stable_dt(state: &SimState, cfg: &SimConfig) -> Result<f64> {
    Ok(Stepper::new(cfg)?.stable_dt(state))
}

/// Initializes from `cfg` and integrates to `t_end` (or convergence).
pub fn run(cfg: &SimConfig, sink: &mut dyn DiagnosticsSink) -> Result<RunOutcome> {
    let state = SimState::initial(cfg)?;
    run_from(state, cfg, sink)
}

/// Continues from `state`. The starting state is recorded first.
pub fn run_from(mut state: SimState, cfg: &SimConfig, sink: &mut dyn DiagnosticsSink) -> Result<RunOutcome> {
    let stepper = Stepper::new(cfg)?;
    let mut records = 0;
    let mut emit = |state: &mut SimState, sink: &mut dyn DiagnosticsSink| -> Result<()> {
        let rec = record(state, cfg)?;
        sink.emit(state, &rec)?;
        state.monitors.reset_window();
        records += 1;
        Ok(())
    };
    emit(&mut state, sink)?;
    let converged = |s: &SimState| -> Result<bool> {
        Ok(match cfg.diagnostics.convergence_tol {
            Some(tol) => equilibrium_distance(s)? < tol,
            None => false,
        })
    };
    let stop = loop {
        if converged(&state)? {
            break StopReason::Converged;
        }
        if state.t >= cfg.t_end {
            break StopReason::EndTime;
        }
        if cfg.max_steps.is_some_and(|cap| state.step >= cap) {
            break StopReason::MaxSteps;
        }
        stepper.step(&mut state)?;
        sink.after_step(&state)?;
        if state.step % cfg.diagnostics.every as u64 == 0 {
            emit(&mut state, sink)?;
        }
    };
    if state.step % cfg.diagnostics.every as u64 != 0 {
        emit(&mut state, sink)?;
    }
    Ok(RunOutcome { state, stop, records })
}
