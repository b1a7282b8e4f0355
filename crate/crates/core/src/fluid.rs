//! Incompressible Navier–Stokes substep on the MAC grid.
//!
//! The discrete Stokes operator is `A = P(−Δ_D)` where `Δ_D` is the
//! componentwise vector Laplacian with no-slip walls and `P` is the discrete
//! Helmholtz projection. One fluid step is
//!
//! ```text
//! b     = P(u + dt·((n+m)∇φ − κ (Y_ε u · ∇) u))
//! u_new = (I + dt·A)⁻¹ b            (solved on the divergence-free subspace)
//! ```
//!
//! with `Y_ε = (I + εA)⁻¹` solved by the same resolvent. Because `u_new` is
//! the exact minimizer on the divergence-free subspace, testing with `u_new`
//! gives the discrete energy inequality for κ = 0 up to solver tolerance.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{for_each_interior_face, Grid, ScalarField, VectorField};
use crate::linalg::{norm2, pcg, AxisBasis, AxisKind, SeparableSolver};
use crate::operators::{divergence_cells, gradient_faces, laplacian_neumann};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidParams {
    /// Convection strength κ; 0 gives Stokes flow.
    pub kappa: f64,
    /// Yosida parameter ε ≥ 0 for the convecting velocity.
    pub eps: f64,
    /// Constant potential gradient ∇φ.
    pub phi_gradient: [f64; 3],
    /// Relative residual target for every linear solve.
    pub solver_tol: f64,
    pub solver_maxit: usize,
}

impl Default for FluidParams {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            eps: 0.0,
            phi_gradient: [0.0, 0.0, -1.0],
            solver_tol: 1e-10,
            solver_maxit: 500,
        }
    }
}

impl FluidParams {
    pub fn validate(&self) -> Result<()> {
        if !self.kappa.is_finite() {
            return Err(Error::param("kappa", "must be finite"));
        }
        if !(self.eps.is_finite() && self.eps >= 0.0) {
            return Err(Error::param("eps", format!("Yosida parameter must be >= 0, got {}", self.eps)));
        }
        if self.phi_gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::param("phi_gradient", "must be finite"));
        }
        if !(self.solver_tol > 0.0 && self.solver_tol <= 1e-4) {
            return Err(Error::param("solver_tol", format!("need 0 < tol <= 1e-4, got {}", self.solver_tol)));
        }
        if self.solver_maxit == 0 {
            return Err(Error::param("solver_maxit", "need at least one iteration"));
        }
        Ok(())
    }
}

/// Cell-centered pressure in the mean-zero gauge.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureField {
    field: ScalarField,
}

impl PressureField {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            field: ScalarField::zeros(grid),
        }
    }

    /// Shifts `field` to mean zero.
    pub fn from_field(field: ScalarField) -> Self {
        let mean = field.mean();
        Self {
            field: field.map(|v| v - mean),
        }
    }

    /// Wraps `field` as-is, without re-gauging.
    pub(crate) fn from_raw(field: ScalarField) -> Self {
        Self { field }
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }
}

/// Output of [`FluidSolver::project`].
#[derive(Debug, Clone)]
pub struct Projection {
    /// Divergence-free part.
    pub u: VectorField,
    /// Mean-zero potential `q` with `u_star = u + ∇q`.
    pub potential: ScalarField,
    /// ‖div u‖₂ / ‖u_star‖₂.
    pub div_residual: f64,
}

/// One fluid substep and the quantities the energy monitor needs.
#[derive(Debug, Clone)]
pub struct FluidStep {
    pub u: VectorField,
    pub pressure: PressureField,
    /// ‖∇u_new‖₂²
    pub grad_sq: f64,
    /// ∫ (n+m)∇φ · u_new
    pub force_work: f64,
    /// (‖u_new‖² − ‖u‖²)/(2dt) + ‖∇u_new‖² − ∫ f·u_new
    pub energy_residual: f64,
    /// Sum of the magnitudes of the terms in `energy_residual`; the force term
    /// enters as ‖f‖‖u_new‖ since its gradient part cancels only to solver
    /// tolerance.
    pub energy_scale: f64,
    /// ‖Y_ε u‖/‖u‖ when smoothing ran.
    pub yosida_ratio: Option<f64>,
    pub div_residual: f64,
}

impl FluidStep {
    pub fn relative_energy_residual(&self) -> f64 {
        if self.energy_scale > 0.0 {
            self.energy_residual / self.energy_scale
        } else {
            0.0
        }
    }
}

/// Fluid operators and cached fast solvers for one grid.
#[derive(Debug, Clone)]
pub struct FluidSolver {
    grid: Grid,
    params: FluidParams,
    poisson: SeparableSolver,
    helmholtz: [Option<SeparableSolver>; 3],
}

impl FluidSolver {
    pub fn new(grid: &Grid, params: FluidParams) -> Result<Self> {
        params.validate()?;
        let dims = grid.dims();
        let h = grid.spacing();
        let basis = |axis: usize, kind: AxisKind| {
            if grid.is_active(axis) {
                AxisBasis::new(Some(kind), dims[axis], h[axis])
            } else {
                AxisBasis::new(None, 1, h[axis])
            }
        };
        let poisson = SeparableSolver::new([0, 1, 2].map(|a| basis(a, AxisKind::NeumannCells)));
        let helmholtz = [0, 1, 2].map(|comp| {
            grid.is_active(comp).then(|| {
                SeparableSolver::new([0, 1, 2].map(|a| {
                    basis(a, if a == comp { AxisKind::DirichletFaces } else { AxisKind::DirichletCells })
                }))
            })
        });
        Ok(Self {
            grid: *grid,
            params,
            poisson,
            helmholtz,
        })
    }

    pub fn params(&self) -> &FluidParams {
        &self.params
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Solves `Δ_N q = rhs` in the mean-zero gauge (the mean of `rhs` is
    /// discarded). Stops when `‖Δ_N q − rhs‖₂ ≤ abs_tol` in plain 2-norm.
    pub(crate) fn solve_poisson(&self, rhs: &ScalarField, abs_tol: f64) -> Result<ScalarField> {
        let grid = self.grid;
        let mean = rhs.mean();
        let b: Vec<f64> = rhs.values().iter().map(|v| -(v - mean)).collect();
        let mut x = vec![0.0; b.len()];
        self.poisson.solve(0.0, 1.0, &b, &mut x);
        let apply = |v: &[f64], out: &mut [f64]| {
            let f = ScalarField::from_values(&grid, v.to_vec()).expect("shape");
            for (o, l) in out.iter_mut().zip(laplacian_neumann(&f).values()) {
                *o = -l;
            }
        };
        let precond = |r: &[f64], z: &mut [f64]| self.poisson.solve(0.0, 1.0, r, z);
        pcg(apply, precond, &b, &mut x, abs_tol, self.params.solver_maxit).map_err(|rep| {
            Error::SolverNotConverged {
                solver: "pressure Poisson",
                iterations: rep.iterations,
                residual: rep.residual,
                target: abs_tol,
            }
        })?;
        let q = ScalarField::from_values(&grid, x).expect("shape");
        let qm = q.mean();
        Ok(q.map(|v| v - qm))
    }

    /// Helmholtz projection onto discretely divergence-free fields with zero
    /// wall-normal velocity.
    pub fn project(&self, u_star: &VectorField) -> Result<Projection> {
        let mut u_star = u_star.clone();
        zero_walls(&mut u_star);
        let norm = norm2(&u_star.flat());
        if norm == 0.0 {
            return Ok(Projection {
                u: u_star,
                potential: ScalarField::zeros(&self.grid),
                div_residual: 0.0,
            });
        }
        let div = divergence_cells(&u_star);
        let q = self.solve_poisson(&div, self.params.solver_tol * norm)?;
        let u = u_star.lincomb(1.0, &gradient_faces(&q), -1.0);
        let div_residual = norm2(divergence_cells(&u).values()) / norm;
        Ok(Projection {
            u,
            potential: q,
            div_residual,
        })
    }

    /// `v − s Δ_D v`
    pub fn helmholtz_apply(&self, v: &VectorField, s: f64) -> VectorField {
        v.lincomb(1.0, &vector_laplacian_dirichlet(v), -s)
    }

    /// Exact `(I − s Δ_D)⁻¹ b`, componentwise.
    pub fn helmholtz_solve(&self, b: &VectorField, s: f64) -> VectorField {
        let grid = self.grid;
        let mut out = VectorField::zeros(&grid);
        for a in 0..3 {
            let Some(solver) = &self.helmholtz[a] else { continue };
            let src = b.component(a);
            let mut buf = Vec::with_capacity(solver.len());
            for_each_interior_face(&grid, a, |_, _, _, idx| buf.push(src[idx]));
            let mut sol = vec![0.0; buf.len()];
            solver.solve(1.0, s, &buf, &mut sol);
            let dst = out.component_mut(a);
            let mut it = sol.into_iter();
            for_each_interior_face(&grid, a, |_, _, _, idx| dst[idx] = it.next().expect("len"));
        }
        out
    }

    /// Discrete Stokes operator `A v = P(−Δ_D v)`.
    pub fn stokes_apply(&self, v: &VectorField) -> Result<VectorField> {
        Ok(self.project(&vector_laplacian_dirichlet(v).scale(-1.0))?.u)
    }

    /// Solves `(I + sA) w = b` for divergence-free `b`, stopping when the
    /// residual drops below `solver_tol · reference` (plain 2-norm).
    fn resolvent(&self, b: &VectorField, s: f64, reference: f64) -> Result<VectorField> {
        let grid = self.grid;
        let bf = b.flat();
        if s == 0.0 || norm2(&bf) == 0.0 {
            return Ok(b.clone());
        }
        let failure: RefCell<Option<Error>> = RefCell::new(None);
        let project = |v: VectorField| -> VectorField {
            match self.project(&v) {
                Ok(p) => p.u,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    v
                }
            }
        };
        let apply = |x: &[f64], out: &mut [f64]| {
            let v = VectorField::from_flat(&grid, x);
            out.copy_from_slice(&project(self.helmholtz_apply(&v, s)).flat());
        };
        let precond = |r: &[f64], z: &mut [f64]| {
            let v = project(VectorField::from_flat(&grid, r));
            z.copy_from_slice(&project(self.helmholtz_solve(&v, s)).flat());
        };
        let mut x = vec![0.0; bf.len()];
        precond(&bf, &mut x);
        let tol = self.params.solver_tol * reference;
        let outcome = pcg(apply, precond, &bf, &mut x, tol, self.params.solver_maxit);
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        outcome.map_err(|rep| Error::SolverNotConverged {
            solver: "Stokes resolvent",
            iterations: rep.iterations,
            residual: rep.residual,
            target: tol,
        })?;
        Ok(self.project(&VectorField::from_flat(&grid, &x))?.u)
    }

    /// Yosida smoothing `Y_ε u = (I + εA)⁻¹ P u`; the projection makes the
    /// right-hand side consistent when `u` is not solenoidal.
    pub fn yosida_smooth(&self, u: &VectorField, eps: f64) -> Result<VectorField> {
        if eps == 0.0 {
            return Ok(u.clone());
        }
        let b = self.project(u)?.u;
        self.resolvent(&b, eps, norm2(&u.flat()))
    }

    /// (n+m)∇φ on interior faces, with face-averaged densities.
    pub fn buoyancy(&self, n: &ScalarField, m: &ScalarField) -> VectorField {
        let grid = self.grid;
        let rho = n.lincomb(1.0, m, 1.0);
        let rv = rho.values();
        let mut f = VectorField::zeros(&grid);
        for a in grid.active_axes().collect::<Vec<_>>() {
            let g = self.params.phi_gradient[a];
            if g == 0.0 {
                continue;
            }
            let comp = f.component_mut(a);
            let s = grid.cell_stride(a);
            for_each_interior_face(&grid, a, |i, j, k, idx| {
                let r = grid.cell_index(i, j, k);
                comp[idx] = 0.5 * (rv[r - s] + rv[r]) * g;
            });
        }
        f
    }

    pub fn fluid_step(&self, u: &VectorField, n: &ScalarField, m: &ScalarField, dt: f64) -> Result<FluidStep> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", format!("need dt > 0, got {dt}")));
        }
        let force = self.buoyancy(n, m);
        let mut rhs = u.lincomb(1.0, &force, dt);
        let mut yosida_ratio = None;
        let kappa = self.params.kappa;
        if kappa != 0.0 {
            let w = self.yosida_smooth(u, self.params.eps)?;
            if self.params.eps > 0.0 {
                let un = u.l2_norm();
                yosida_ratio = Some(if un > 0.0 { w.l2_norm() / un } else { 0.0 });
            }
            rhs = rhs.lincomb(1.0, &convect(&w, u), -dt * kappa);
        }
        let reference = norm2(&rhs.flat());
        let b = self.project(&rhs)?.u;
        let u_new = self.resolvent(&b, dt, reference)?;
        let div_residual = if reference > 0.0 {
            norm2(divergence_cells(&u_new).values()) / reference
        } else {
            0.0
        };

        // dt ∇P = rhs − (I − dt Δ_D) u_new
        let remainder = rhs.lincomb(1.0, &self.helmholtz_apply(&u_new, dt), -1.0);
        let pressure = PressureField::from_field(self.project(&remainder)?.potential.map(|q| q / dt));

        let grad_sq = dirichlet_energy(&u_new);
        let force_work = force.dot(&u_new);
        let (new_sq, old_sq) = (u_new.dot(&u_new), u.dot(u));
        let energy_residual = (new_sq - old_sq) / (2.0 * dt) + grad_sq - force_work;
        let energy_scale = (new_sq + old_sq) / (2.0 * dt) + grad_sq + force.l2_norm() * new_sq.sqrt();
        Ok(FluidStep {
            u: u_new,
            pressure,
            grad_sq,
            force_work,
            energy_residual,
            energy_scale,
            yosida_ratio,
            div_residual,
        })
    }
}

fn zero_walls(v: &mut VectorField) {
    let grid = *v.grid();
    for a in 0..3 {
        let d = grid.face_dims(a);
        let comp = v.component_mut(a);
        let mut idx = 0;
        for k in 0..d[2] {
            for j in 0..d[1] {
                for i in 0..d[0] {
                    let along = [i, j, k][a];
                    if along == 0 || along == d[a] - 1 {
                        comp[idx] = 0.0;
                    }
                    idx += 1;
                }
            }
        }
    }
}

/// Componentwise Laplacian with no-slip walls: wall-normal faces hold zero,
/// tangential walls use a negating ghost so the wall value is zero.
pub fn vector_laplacian_dirichlet(v: &VectorField) -> VectorField {
    let grid = *v.grid();
    let dims = grid.dims();
    let h = grid.spacing();
    let active: Vec<usize> = grid.active_axes().collect();
    let mut out = VectorField::zeros(&grid);
    for &a in &active {
        let src = v.component(a);
        let dst = out.component_mut(a);
        for_each_interior_face(&grid, a, |i, j, k, idx| {
            let pos = [i, j, k];
            let mut acc = 0.0;
            for &e in &active {
                let s = grid.face_stride(a, e);
                let here = src[idx];
                let (lo, hi) = if e == a {
                    (src[idx - s], src[idx + s])
                } else {
                    let lo = if pos[e] > 0 { src[idx - s] } else { -here };
                    let hi = if pos[e] + 1 < dims[e] { src[idx + s] } else { -here };
                    (lo, hi)
                };
                acc += (lo - 2.0 * here + hi) / (h[e] * h[e]);
            }
            dst[idx] = acc;
        });
    }
    out
}

/// ‖∇u‖₂² := −(Δ_D u, u), the Dirichlet form of the solver's own stencil.
pub fn dirichlet_energy(u: &VectorField) -> f64 {
    -vector_laplacian_dirichlet(u).dot(u)
}

/// (w·∇)u at every interior face, donor-cell differences upwinded by w.
/// Tangential components of w are averaged from the four surrounding faces.
pub fn convect(w: &VectorField, u: &VectorField) -> VectorField {
    let grid = *u.grid();
    let dims = grid.dims();
    let h = grid.spacing();
    let active: Vec<usize> = grid.active_axes().collect();
    let mut out = VectorField::zeros(&grid);
    for &a in &active {
        let src = u.component(a);
        let dst = out.component_mut(a);
        for_each_interior_face(&grid, a, |i, j, k, idx| {
            let pos = [i, j, k];
            let right = [i, j, k];
            let mut left = right;
            left[a] -= 1;
            let mut acc = 0.0;
            for &e in &active {
                let we = if e == a {
                    w.component(a)[idx]
                } else {
                    let comp = w.component(e);
                    let se = grid.face_stride(e, e);
                    let fl = grid.face_index(e, left[0], left[1], left[2]);
                    let fr = grid.face_index(e, right[0], right[1], right[2]);
                    0.25 * (comp[fl] + comp[fl + se] + comp[fr] + comp[fr + se])
                };
                if we == 0.0 {
                    continue;
                }
                let s = grid.face_stride(a, e);
                let here = src[idx];
                let d = if we > 0.0 {
                    let prev = if e == a || pos[e] > 0 { src[idx - s] } else { -here };
                    (here - prev) / h[e]
                } else {
                    let next = if e == a || pos[e] + 1 < dims[e] { src[idx + s] } else { -here };
                    (next - here) / h[e]
                };
                acc += we * d;
            }
            dst[idx] = acc;
        });
    }
    out
}

/// One-shot projection with a fresh solver.
pub fn project(u_star: &VectorField, tol: f64) -> Result<(VectorField, PressureField)> {
    let params = FluidParams {
        solver_tol: tol,
        ..FluidParams::default()
    };
    let p = FluidSolver::new(u_star.grid(), params)?.project(u_star)?;
    Ok((p.u, PressureField::from_field(p.potential)))
}

/// One-shot Yosida smoothing with a fresh solver.
pub fn yosida_smooth(u: &VectorField, eps: f64, tol: f64) -> Result<VectorField> {
    let params = FluidParams {
        solver_tol: tol,
        ..FluidParams::default()
    };
    FluidSolver::new(u.grid(), params)?.yosida_smooth(u, eps)
}

/// One-shot fluid step with a fresh solver.
pub fn fluid_step(
    u: &VectorField,
    n: &ScalarField,
    m: &ScalarField,
    params: FluidParams,
    dt: f64,
) -> Result<(VectorField, PressureField)> {
    let step = FluidSolver::new(u.grid(), params)?.fluid_step(u, n, m, dt)?;
    Ok((step.u, step.pressure))
}

/// ∫ u₃ over the box; zero for any discretely divergence-free field.
pub fn vertical_momentum(u: &VectorField) -> f64 {
    crate::fields::compensated_sum(u.component(2).iter().copied()) * u.grid().cell_volume()
}
