//! Box discretization and the cell/face arrays the solver works on.
//!
//! Scalars (n, c, m, pressure) live at cell centers. Velocity components live
//! on the faces normal to their axis (MAC layout): component `a` has
//! `dims[a] + 1` entries along axis `a`, the first and last of which sit on
//! the walls and are held at zero. An axis with a single cell is inactive:
//! it contributes no differences to any operator, which is how 2D runs work.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[0, Lx] x [0, Ly] x [0, Lz]` split into uniform cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dims: [usize; 3],
    extent: [f64; 3],
    spacing: [f64; 3],
}

impl Grid {
    pub fn new(dims: [usize; 3], extent: [f64; 3]) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidGrid(format!("cell counts must be >= 1, got {dims:?}")));
        }
        if dims.iter().all(|&d| d < 2) {
            return Err(Error::InvalidGrid("at least one axis needs >= 2 cells".into()));
        }
        if extent.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
            return Err(Error::InvalidGrid(format!("extents must be finite and > 0, got {extent:?}")));
        }
        let spacing = [
            extent[0] / dims[0] as f64,
            extent[1] / dims[1] as f64,
            extent[2] / dims[2] as f64,
        ];
        Ok(Self { dims, extent, spacing })
    }

    /// Unit-depth 2D grid (`nz = 1`, `Lz = 1`), so `volume()` is the area.
    pub fn new_2d(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        Self::new([nx, ny, 1], [lx, ly, 1.0])
    }

    pub fn unit_cube(n: usize) -> Result<Self> {
        Self::new([n, n, n], [1.0; 3])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn extent(&self) -> [f64; 3] {
        self.extent
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn is_active(&self, axis: usize) -> bool {
        self.dims[axis] > 1
    }

    pub fn active_axes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..3).filter(move |&a| self.is_active(a))
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    /// |Ω|, the box volume.
    pub fn volume(&self) -> f64 {
        self.extent[0] * self.extent[1] * self.extent[2]
    }

    pub fn num_cells(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Smallest spacing over the active axes.
    pub fn min_spacing(&self) -> f64 {
        self.active_axes().map(|a| self.spacing[a]).fold(f64::INFINITY, f64::min)
    }

    #[inline]
    pub fn cell_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn cell_stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.dims[0],
            _ => self.dims[0] * self.dims[1],
        }
    }

    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            (i as f64 + 0.5) * self.spacing[0],
            (j as f64 + 0.5) * self.spacing[1],
            (k as f64 + 0.5) * self.spacing[2],
        ]
    }

    /// Shape of the face array holding the velocity component normal to `axis`.
    pub fn face_dims(&self, axis: usize) -> [usize; 3] {
        let mut d = self.dims;
        d[axis] += 1;
        d
    }

    pub fn face_count(&self, axis: usize) -> usize {
        self.face_dims(axis).iter().product()
    }

    #[inline]
    pub fn face_index(&self, axis: usize, i: usize, j: usize, k: usize) -> usize {
        let d = self.face_dims(axis);
        i + d[0] * (j + d[1] * k)
    }

    #[inline]
    pub fn face_stride(&self, axis: usize, along: usize) -> usize {
        let d = self.face_dims(axis);
        match along {
            0 => 1,
            1 => d[0],
            _ => d[0] * d[1],
        }
    }

    pub fn face_center(&self, axis: usize, i: usize, j: usize, k: usize) -> [f64; 3] {
        let mut x = self.cell_center(i, j, k);
        x[axis] -= 0.5 * self.spacing[axis];
        x
    }

    /// Distance from `x` to the nearest wall, counting only active axes.
    pub fn distance_to_boundary(&self, x: [f64; 3]) -> f64 {
        self.active_axes()
            .map(|a| x[a].min(self.extent[a] - x[a]))
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
    }
}

/// Visit every cell as `(i, j, k, flat_index)`, x fastest.
pub(crate) fn for_each_cell(grid: &Grid, mut f: impl FnMut(usize, usize, usize, usize)) {
    let [nx, ny, nz] = grid.dims();
    let mut idx = 0;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                f(i, j, k, idx);
                idx += 1;
            }
        }
    }
}

/// Visit every face of the `axis` array that is not on a wall.
pub(crate) fn for_each_interior_face(
    grid: &Grid,
    axis: usize,
    mut f: impl FnMut(usize, usize, usize, usize),
) {
    let d = grid.face_dims(axis);
    let mut idx = 0;
    for k in 0..d[2] {
        for j in 0..d[1] {
            for i in 0..d[0] {
                let along = [i, j, k][axis];
                if along >= 1 && along < d[axis] - 1 {
                    f(i, j, k, idx);
                }
                idx += 1;
            }
        }
    }
}

/// Neumaier-compensated sum; mass identities are checked near machine precision.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// One value per cell, cell-centered.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        Self {
            grid: *grid,
            values: vec![value; grid.num_cells()],
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_cells() {
            return Err(Error::InvalidGrid(format!(
                "scalar field needs {} values, got {}",
                grid.num_cells(),
                values.len()
            )));
        }
        Ok(Self { grid: *grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// `a*self + b*other`
    pub fn lincomb(&self, a: f64, other: &Self, b: f64) -> Self {
        self.zip_map(other, |x, y| a * x + b * y)
    }

    pub fn mean(&self) -> f64 {
        integrate(self) / self.grid.volume()
    }
}

/// Face-centered velocity-like field in the MAC layout.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    comps: [Vec<f64>; 3],
}

impl VectorField {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            grid: *grid,
            comps: [0, 1, 2].map(|a| vec![0.0; grid.face_count(a)]),
        }
    }

    pub fn from_components(grid: &Grid, comps: [Vec<f64>; 3]) -> Result<Self> {
        for (a, c) in comps.iter().enumerate() {
            if c.len() != grid.face_count(a) {
                return Err(Error::InvalidGrid(format!(
                    "velocity component {a} needs {} values, got {}",
                    grid.face_count(a),
                    c.len()
                )));
            }
        }
        Ok(Self { grid: *grid, comps })
    }

    /// Sample `f(x)[a]` at every interior face of component `a`; wall faces stay zero.
    pub fn from_function(grid: &Grid, f: impl Fn([f64; 3]) -> [f64; 3]) -> Result<Self> {
        let mut v = Self::zeros(grid);
        for a in 0..3 {
            let comp = &mut v.comps[a];
            let mut bad = false;
            for_each_interior_face(grid, a, |i, j, k, idx| {
                let val = f(grid.face_center(a, i, j, k))[a];
                bad |= !val.is_finite();
                comp[idx] = val;
            });
            if bad {
                return Err(Error::NonFinite("sampled velocity"));
            }
        }
        Ok(v)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.comps[axis]
    }

    pub fn component_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.comps[axis]
    }

    pub fn into_components(self) -> [Vec<f64>; 3] {
        self.comps
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().flatten().all(|v| v.is_finite())
    }

    /// `a*self + b*other`
    pub fn lincomb(&self, a: f64, other: &Self, b: f64) -> Self {
        let comps = [0, 1, 2].map(|ax| {
            self.comps[ax]
                .iter()
                .zip(&other.comps[ax])
                .map(|(&x, &y)| a * x + b * y)
                .collect()
        });
        Self { grid: self.grid, comps }
    }

    pub fn scale(&self, s: f64) -> Self {
        let comps = [0, 1, 2].map(|ax| self.comps[ax].iter().map(|&x| s * x).collect());
        Self { grid: self.grid, comps }
    }

    /// Volume-weighted inner product over faces.
    pub fn dot(&self, other: &Self) -> f64 {
        let s = compensated_sum(
            (0..3).flat_map(|a| self.comps[a].iter().zip(&other.comps[a]).map(|(x, y)| x * y)),
        );
        s * self.grid.cell_volume()
    }

    /// Discrete ‖u‖_{L²}.
    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest |value| on any wall face (zero for a valid velocity).
    pub fn max_wall_normal(&self) -> f64 {
        let mut worst = 0.0_f64;
        for a in 0..3 {
            let d = self.grid.face_dims(a);
            let mut idx = 0;
            for k in 0..d[2] {
                for j in 0..d[1] {
                    for i in 0..d[0] {
                        let along = [i, j, k][a];
                        if along == 0 || along == d[a] - 1 {
                            worst = worst.max(self.comps[a][idx].abs());
                        }
                        idx += 1;
                    }
                }
            }
        }
        worst
    }

    pub(crate) fn flat(&self) -> Vec<f64> {
        self.comps.iter().flatten().copied().collect()
    }

    pub(crate) fn from_flat(grid: &Grid, flat: &[f64]) -> Self {
        let mut off = 0;
        let comps = [0, 1, 2].map(|a| {
            let n = grid.face_count(a);
            let c = flat[off..off + n].to_vec();
            off += n;
            c
        });
        Self { grid: *grid, comps }
    }
}

/// ∫_Ω f dx as a cell-volume-weighted sum.
pub fn integrate(f: &ScalarField) -> f64 {
    compensated_sum(f.values.iter().copied()) * f.grid.cell_volume()
}

/// Exponent selector for [`lp_norm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Norm {
    L(f64),
    Inf,
}

/// ‖f‖_{Lᵖ(Ω)}; `Norm::Inf` (or `Norm::L(f64::INFINITY)`) gives max |f|.
pub fn lp_norm(f: &ScalarField, p: Norm) -> Result<f64> {
    match p {
        Norm::Inf => Ok(f.max_abs()),
        Norm::L(p) if p == f64::INFINITY => Ok(f.max_abs()),
        Norm::L(p) if p.is_nan() || p < 1.0 => Err(Error::param("p", format!("norm exponent must be >= 1, got {p}"))),
        Norm::L(p) => {
            let s = compensated_sum(f.values.iter().map(|v| v.abs().powf(p)));
            Ok((s * f.grid.cell_volume()).powf(1.0 / p))
        }
    }
}

/// Sample `phi` at cell centers.
pub fn set_from_function(grid: &Grid, phi: impl Fn([f64; 3]) -> f64) -> Result<ScalarField> {
    let mut values = vec![0.0; grid.num_cells()];
    let mut bad = None;
    for_each_cell(grid, |i, j, k, idx| {
        let v = phi(grid.cell_center(i, j, k));
        if !v.is_finite() && bad.is_none() {
            bad = Some(idx);
        }
        values[idx] = v;
    });
    if bad.is_some() {
        return Err(Error::NonFinite("sampled initial data"));
    }
    Ok(ScalarField { grid: *grid, values })
}
