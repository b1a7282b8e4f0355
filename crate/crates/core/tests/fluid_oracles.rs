//! Dense saddle-point solves on tiny grids as independent references for
//! the iterative fluid solvers.

use nalgebra::{DMatrix, DVector};

use coralsim::fields::{Grid, ScalarField, VectorField};
use coralsim::fluid::{fluid_step, vector_laplacian_dirichlet, yosida_smooth, FluidParams, FluidSolver};
use coralsim::operators::{divergence_cells, gradient_faces};

/// Interior (non-wall) faces as (axis, flat index).
fn interior_faces(grid: &Grid) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in grid.active_axes() {
        let d = grid.face_dims(a);
        for k in 0..d[2] {
            for j in 0..d[1] {
                for i in 0..d[0] {
                    let p = [i, j, k][a];
                    if p > 0 && p < d[a] - 1 {
                        out.push((a, grid.face_index(a, i, j, k)));
                    }
                }
            }
        }
    }
    out
}

fn unit_vector(grid: &Grid, axis: usize, idx: usize) -> VectorField {
    let mut v = VectorField::zeros(grid);
    v.component_mut(axis)[idx] = 1.0;
    v
}

fn gather(v: &VectorField, faces: &[(usize, usize)]) -> DVector<f64> {
    DVector::from_iterator(faces.len(), faces.iter().map(|&(a, i)| v.component(a)[i]))
}

fn scatter(grid: &Grid, x: &[f64], faces: &[(usize, usize)]) -> VectorField {
    let mut v = VectorField::zeros(grid);
    for (k, &(a, i)) in faces.iter().enumerate() {
        v.component_mut(a)[i] = x[k];
    }
    v
}

/// Solves (I − s L_D) u + G p = b, D u = 0, Σp = 0 densely; returns u.
fn dense_resolvent(grid: &Grid, b: &VectorField, s: f64) -> VectorField {
    let faces = interior_faces(grid);
    let (nf, nc) = (faces.len(), grid.num_cells());
    let size = nf + nc + 1;
    let mut k = DMatrix::<f64>::zeros(size, size);
    for (col, &(a, i)) in faces.iter().enumerate() {
        let e = unit_vector(grid, a, i);
        let le = gather(&vector_laplacian_dirichlet(&e), &faces);
        for row in 0..nf {
            k[(row, col)] = -s * le[row];
        }
        k[(col, col)] += 1.0;
        let de = divergence_cells(&e);
        for (r, v) in de.values().iter().enumerate() {
            k[(nf + r, col)] = *v;
        }
    }
    for c in 0..nc {
        let mut p = vec![0.0; nc];
        p[c] = 1.0;
        let gp = gather(&gradient_faces(&ScalarField::from_values(grid, p).unwrap()), &faces);
        for row in 0..nf {
            k[(row, nf + c)] = gp[row];
        }
        k[(size - 1, nf + c)] = 1.0;
        k[(nf + c, size - 1)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(size);
    rhs.rows_mut(0, nf).copy_from(&gather(b, &faces));
    let x = k.lu().solve(&rhs).expect("saddle-point system is nonsingular");
    scatter(grid, &x.as_slice()[..nf], &faces)
}

fn rel_diff(a: &VectorField, b: &VectorField) -> f64 {
    a.lincomb(1.0, b, -1.0).l2_norm() / b.l2_norm().max(1e-300)
}

fn wavy(grid: &Grid) -> VectorField {
    VectorField::from_function(grid, |x| {
        [
            (3.0 * x[1]).sin() + x[2] * x[0],
            (2.0 * x[0] + x[2]).cos(),
            x[0] * x[1] - 0.3,
        ]
    })
    .unwrap()
}

#[test]
fn yosida_matches_dense_saddle_point() {
    let grid = Grid::unit_cube(4).unwrap();
    let u = wavy(&grid);
    for eps in [0.01, 0.1, 1.0] {
        let dense = dense_resolvent(&grid, &u, eps);
        let iterative = yosida_smooth(&u, eps, 1e-12).unwrap();
        let err = rel_diff(&iterative, &dense);
        assert!(err < 1e-8, "ε = {eps}: relative difference {err:e}");
    }
}

#[test]
fn yosida_on_eigenmode_scales_by_resolvent() {
    let grid = Grid::new_2d(12, 10, 1.0, 0.8).unwrap();
    let solver = FluidSolver::new(&grid, FluidParams::default()).unwrap();
    // inverse iteration with Y_1 converges to the lowest Stokes mode
    let mut v = solver.project(&wavy(&grid)).unwrap().u;
    for _ in 0..200 {
        v = solver.yosida_smooth(&v, 1.0).unwrap();
        v = v.scale(1.0 / v.l2_norm());
    }
    let av = solver.stokes_apply(&v).unwrap();
    let lambda = av.dot(&v);
    let eig_res = av.lincomb(1.0, &v, -lambda).l2_norm() / lambda;
    assert!(eig_res < 1e-6, "eigen residual {eig_res:e}");
    for eps in [0.05, 0.2] {
        let y = solver.yosida_smooth(&v, eps).unwrap();
        let expect = v.scale(1.0 / (1.0 + eps * lambda));
        let err = rel_diff(&y, &expect);
        assert!(err < 1e-5, "ε = {eps}: {err:e}");
        assert!(y.l2_norm() <= v.l2_norm());
    }
}

#[test]
fn buoyant_bump_sinks_and_matches_dense() {
    // κ = 0, one step from rest under a dense bump of n: (I − dt L_D) u + dt ∇P = dt f
    let grid = Grid::unit_cube(4).unwrap();
    let n = coralsim::fields::set_from_function(&grid, |x| {
        let r2 = (x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2) + (x[2] - 0.5).powi(2);
        1.0 + 4.0 * (-r2 / 0.05).exp()
    })
    .unwrap();
    let m = ScalarField::constant(&grid, 1.0);
    let dt = 0.1;
    let params = FluidParams {
        kappa: 0.0,
        phi_gradient: [0.0, 0.0, -1.0],
        solver_tol: 1e-13,
        ..FluidParams::default()
    };
    let (u, _) = fluid_step(&VectorField::zeros(&grid), &n, &m, params, dt).unwrap();

    let solver = FluidSolver::new(&grid, params).unwrap();
    let force = solver.buoyancy(&n, &m);
    let dense = dense_resolvent(&grid, &force.scale(dt), dt);
    let err = rel_diff(&u, &dense);
    assert!(err < 1e-8, "relative difference {err:e}");

    // central column: vertical faces at x, y cell centers 1 and 2, z index 2
    let uz = u.component(2);
    for (i, j) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
        let w = uz[grid.face_index(2, i, j, 2)];
        assert!(w < 0.0, "u_z = {w} under the bump at ({i}, {j})");
    }
    let vol = grid.cell_volume();
    let total: f64 = uz.iter().sum::<f64>() * vol;
    assert!(total.abs() < 1e-12, "∫u_z = {total:e} for a solenoidal field");
}
