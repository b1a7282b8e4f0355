//! Manufactured solutions for measuring the spatial order of the scalar
//! operators.
//!
//! Targets are products of cosine modes, which satisfy the zero-flux wall
//! condition exactly, so the measured error is the interior truncation error.
//! Velocities come from a stream function sampled at grid nodes and
//! differenced, which makes them exactly discretely divergence-free with zero
//! wall-normal component.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{for_each_interior_face, set_from_function, Grid, ScalarField, VectorField};
use crate::linalg::{norm2, AxisBasis, AxisKind, SeparableSolver};
use crate::operators::{advect_conservative, laplacian_neumann, AdvectionScheme};

/// ψ(x, y) = U·sin(πx/Lx)·sin(πy/Ly), in the first two axes.
pub fn stream_function(grid: &Grid, amplitude: f64, x: [f64; 3]) -> f64 {
    let l = grid.extent();
    amplitude * (PI * x[0] / l[0]).sin() * (PI * x[1] / l[1]).sin()
}

/// Continuous velocity (∂ψ/∂y, −∂ψ/∂x, 0).
pub fn stream_velocity_exact(grid: &Grid, amplitude: f64, x: [f64; 3]) -> [f64; 3] {
    let l = grid.extent();
    let (kx, ky) = (PI / l[0], PI / l[1]);
    [
        amplitude * ky * (kx * x[0]).sin() * (ky * x[1]).cos(),
        -amplitude * kx * (kx * x[0]).cos() * (ky * x[1]).sin(),
        0.0,
    ]
}

/// Face velocity from node differences of ψ; uniform along the third axis.
/// Needs both of the first two axes active.
pub fn stream_velocity(grid: &Grid, amplitude: f64) -> VectorField {
    let h = grid.spacing();
    let psi = |i: usize, j: usize| stream_function(grid, amplitude, [i as f64 * h[0], j as f64 * h[1], 0.0]);
    let mut v = VectorField::zeros(grid);
    if !(grid.is_active(0) && grid.is_active(1)) {
        return v;
    }
    let ux = v.component_mut(0);
    for_each_interior_face(grid, 0, |i, j, _, idx| ux[idx] = (psi(i, j + 1) - psi(i, j)) / h[1]);
    let uy = v.component_mut(1);
    for_each_interior_face(grid, 1, |i, j, _, idx| uy[idx] = -(psi(i + 1, j) - psi(i, j)) / h[0]);
    v
}

/// q(x, t) = A·e^{−decay·t}·Π_a cos(k_a π x_a / L_a).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManufacturedSolution {
    pub amplitude: f64,
    pub modes: [u32; 3],
    pub decay: f64,
}

impl ManufacturedSolution {
    fn wavenumbers(&self, grid: &Grid) -> [f64; 3] {
        let l = grid.extent();
        [0, 1, 2].map(|a| self.modes[a] as f64 * PI / l[a])
    }

    pub fn value(&self, grid: &Grid, x: [f64; 3], t: f64) -> f64 {
        let k = self.wavenumbers(grid);
        self.amplitude * (-self.decay * t).exp() * (0..3).map(|a| (k[a] * x[a]).cos()).product::<f64>()
    }

    pub fn gradient(&self, grid: &Grid, x: [f64; 3], t: f64) -> [f64; 3] {
        let k = self.wavenumbers(grid);
        let amp = self.amplitude * (-self.decay * t).exp();
        [0, 1, 2].map(|a| {
            let mut g = -amp * k[a] * (k[a] * x[a]).sin();
            for b in (0..3).filter(|&b| b != a) {
                g *= (k[b] * x[b]).cos();
            }
            g
        })
    }

    /// Δq = −|k|² q.
    pub fn laplacian(&self, grid: &Grid, x: [f64; 3], t: f64) -> f64 {
        let k = self.wavenumbers(grid);
        -(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) * self.value(grid, x, t)
    }

    pub fn sample(&self, grid: &Grid, t: f64) -> Result<ScalarField> {
        set_from_function(grid, |x| self.value(grid, x, t))
    }
}

/// Lower-order terms appended to the heat operator: `γ q + u·∇q` with the
/// stream-function velocity of amplitude `velocity`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MmsTerms {
    pub reaction: f64,
    pub velocity: f64,
}

/// Source `f = ∂_t q − Δq + γq + u·∇q` sampled at cell centers.
pub fn mms_sources(q: &ManufacturedSolution, terms: MmsTerms, grid: &Grid, t: f64) -> Result<ScalarField> {
    set_from_function(grid, |x| {
        let v = q.value(grid, x, t);
        let mut f = -q.decay * v - q.laplacian(grid, x, t) + terms.reaction * v;
        if terms.velocity != 0.0 {
            let u = stream_velocity_exact(grid, terms.velocity, x);
            let g = q.gradient(grid, x, t);
            f += u[0] * g[0] + u[1] * g[1] + u[2] * g[2];
        }
        f
    })
}

/// Errors per level and fitted orders for both paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub cells: Vec<usize>,
    pub diffusion_errors: Vec<f64>,
    pub advection_errors: Vec<f64>,
    pub diffusion_order: f64,
    pub advection_order: f64,
}

const REACTION: f64 = 10.0;
const VELOCITY: f64 = 1.0;

fn neumann_solver(grid: &Grid) -> SeparableSolver {
    let (dims, h) = (grid.dims(), grid.spacing());
    SeparableSolver::new([0, 1, 2].map(|a| {
        if grid.is_active(a) {
            AxisBasis::new(Some(AxisKind::NeumannCells), dims[a], h[a])
        } else {
            AxisBasis::new(None, 1, h[a])
        }
    }))
}

fn relative_error(num: &ScalarField, exact: &ScalarField) -> f64 {
    norm2(num.lincomb(1.0, exact, -1.0).values()) / norm2(exact.values())
}

/// Steady `(I − Δ_h) q = f`; returns the relative discrete L² error.
pub fn diffusion_error(grid: &Grid) -> Result<f64> {
    let q = ManufacturedSolution {
        amplitude: 1.0,
        modes: [1, 1, 0],
        decay: 0.0,
    };
    let f = mms_sources(&q, MmsTerms { reaction: 1.0, velocity: 0.0 }, grid, 0.0)?;
    let mut x = vec![0.0; grid.num_cells()];
    neumann_solver(grid).solve(1.0, 1.0, f.values(), &mut x);
    let num = ScalarField::from_values(grid, x)?;
    // the separable solve is exact; confirm against the stencil
    let res = num.lincomb(1.0, &laplacian_neumann(&num), -1.0).lincomb(1.0, &f, -1.0);
    debug_assert!(norm2(res.values()) <= 1e-9 * norm2(f.values()));
    Ok(relative_error(&num, &q.sample(grid, 0.0)?))
}

/// Steady `γq − Δ_h q + ∇_h·(u q) = f` with donor-cell fluxes, solved by the
/// fixed point `q ← (γ − Δ_h)⁻¹ (f − ∇_h·(u q))`.
pub fn advection_error(grid: &Grid) -> Result<f64> {
    let q = ManufacturedSolution {
        amplitude: 1.0,
        modes: [1, 1, 0],
        decay: 0.0,
    };
    let f = mms_sources(&q, MmsTerms { reaction: REACTION, velocity: VELOCITY }, grid, 0.0)?;
    let u = stream_velocity(grid, VELOCITY);
    let solver = neumann_solver(grid);
    let mut x = vec![0.0; grid.num_cells()];
    solver.solve(REACTION, 1.0, f.values(), &mut x);
    let fnorm = norm2(f.values());
    for _ in 0..500 {
        let cur = ScalarField::from_values(grid, x.clone())?;
        let adv = advect_conservative(&u, &cur, AdvectionScheme::Upwind);
        let rhs = f.lincomb(1.0, &adv, -1.0);
        solver.solve(REACTION, 1.0, rhs.values(), &mut x);
        let step: Vec<f64> = x.iter().zip(cur.values()).map(|(a, b)| a - b).collect();
        if norm2(&step) <= 1e-13 * fnorm {
            return Ok(relative_error(&ScalarField::from_values(grid, x)?, &q.sample(grid, 0.0)?));
        }
    }
    Err(Error::SolverNotConverged {
        solver: "manufactured advection fixed point",
        iterations: 500,
        residual: f64::NAN,
        target: 1e-13,
    })
}

/// Least-squares slope of log(error) against log(1/h).
pub fn fitted_order(cells: &[usize], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = cells.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    -num / den
}

/// Runs both paths on 2D unit squares with the given cells per axis.
pub fn convergence_study(levels: &[usize]) -> Result<ConvergenceReport> {
    if levels.len() < 2 {
        return Err(Error::param("levels", "need at least two grid levels"));
    }
    let mut diffusion_errors = Vec::new();
    let mut advection_errors = Vec::new();
    for &n in levels {
        let grid = Grid::new_2d(n, n, 1.0, 1.0)?;
        diffusion_errors.push(diffusion_error(&grid)?);
        advection_errors.push(advection_error(&grid)?);
    }
    Ok(ConvergenceReport {
        cells: levels.to_vec(),
        diffusion_order: fitted_order(levels, &diffusion_errors),
        advection_order: fitted_order(levels, &advection_errors),
        diffusion_errors,
        advection_errors,
    })
}

/// `k` levels 16, 32, 64, ...
pub fn default_levels(k: usize) -> Vec<usize> {
    (0..k).map(|i| 16 << i).collect()
}
