//! Tensor-valued, saturating, cut-off chemotactic sensitivity
//! S_ε(x, n, c) = ρ_ε(x) χ_ε(n) S(x, n, c).
//!
//! The uncut tensor is `(1+n)^{-α} S₀(c) [cos θ I + sin θ R]` where `R` is the
//! rotation generator about the third axis (R e₁ = e₂, R e₂ = −e₁, R e₃ = 0).
//! `θ = 0` is classical Keller–Segel; `θ > 0` adds a flux component
//! perpendicular to ∇c. The bracket has spectral norm 1 and Frobenius norm
//! at most √3, so |S| ≤ (1+n)^{-α} S₀(c) holds in the operator norm and the
//! Frobenius norm is bounded by √3 times that.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::Grid;

pub type Mat3 = [[f64; 3]; 3];

/// Frobenius-norm normalization of the identity/rotation bracket.
pub const FROBENIUS_NORMALIZATION: f64 = 1.732_050_807_568_877_2;

/// Signal response S₀(c), nondecreasing on [0, ∞).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SignalResponse {
    /// S₀(c) = χ₀
    Constant,
    /// S₀(c) = χ₀ + slope·c, slope ≥ 0
    Affine { slope: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityParams {
    /// Saturation exponent α ≥ 0.
    pub alpha: f64,
    /// Base magnitude χ₀ > 0.
    pub chi0: f64,
    pub response: SignalResponse,
    /// Rotation angle θ ∈ [0, π/2].
    pub rotation: f64,
    /// Regularization ε ∈ [0, 1]; 0 disables both cutoffs.
    pub eps: f64,
}

impl SensitivityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::param("alpha", format!("need α >= 0, got {}", self.alpha)));
        }
        if !(self.chi0.is_finite() && self.chi0 > 0.0) {
            return Err(Error::param("chi0", format!("need χ₀ > 0, got {}", self.chi0)));
        }
        if let SignalResponse::Affine { slope } = self.response {
            if !(slope.is_finite() && slope >= 0.0) {
                return Err(Error::param("s0_slope", format!("S₀ must be nondecreasing (slope >= 0), got {slope}")));
            }
        }
        if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&self.rotation) {
            return Err(Error::param("rotation", format!("need θ in [0, π/2], got {}", self.rotation)));
        }
        if !(0.0..=1.0).contains(&self.eps) {
            return Err(Error::param("eps", format!("need ε in [0, 1], got {}", self.eps)));
        }
        Ok(())
    }

    pub fn signal_response(&self, c: f64) -> f64 {
        match self.response {
            SignalResponse::Constant => self.chi0,
            SignalResponse::Affine { slope } => self.chi0 + slope * c,
        }
    }

    /// C_S = sup_{0 ≤ s ≤ c_max} S₀(s).
    pub fn sup_response(&self, c_max: f64) -> f64 {
        self.signal_response(c_max.max(0.0))
    }

    /// (1+n)^{-α} S₀(c): the right-hand side of the sensitivity bound.
    pub fn bound(&self, n: f64, c: f64) -> f64 {
        (1.0 + n).powf(-self.alpha) * self.signal_response(c)
    }
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// ρ_ε(x): 0 within ε/2 of the wall, 1 beyond ε, C¹ cubic blend between.
pub fn cutoff_rho(grid: &Grid, x: [f64; 3], eps: f64) -> f64 {
    if eps == 0.0 {
        return 1.0;
    }
    let d = grid.distance_to_boundary(x);
    smoothstep((d - 0.5 * eps) / (0.5 * eps))
}

/// χ_ε(n): 1 on [0, 1/ε − 1], 0 on [1/ε, ∞), cubic blend between.
pub fn cutoff_chi(n: f64, eps: f64) -> f64 {
    if eps == 0.0 {
        return 1.0;
    }
    smoothstep(1.0 / eps - n)
}

/// Immutable evaluator for S_ε on one grid.
#[derive(Debug, Clone)]
pub struct SensitivityEvaluator {
    params: SensitivityParams,
    grid: Grid,
    bracket: Mat3,
    /// Dual-cell averages of ρ_ε per face, per axis; empty when ε = 0.
    face_rho: [Vec<f64>; 3],
}

impl SensitivityEvaluator {
    pub fn new(params: SensitivityParams, grid: &Grid) -> Result<Self> {
        params.validate()?;
        let (s, c) = params.rotation.sin_cos();
        let bracket = [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, c]];
        let face_rho = if params.eps > 0.0 {
            [0, 1, 2].map(|a| face_rho_averages(grid, a, params.eps))
        } else {
            Default::default()
        };
        Ok(Self {
            params,
            grid: *grid,
            bracket,
            face_rho,
        })
    }

    pub fn params(&self) -> &SensitivityParams {
        &self.params
    }

    pub fn eval_tensor(&self, x: [f64; 3], n: f64, c: f64) -> Result<Mat3> {
        if !(n >= 0.0) {
            return Err(Error::param("n", format!("sensitivity needs n >= 0, got {n}")));
        }
        if !(c >= 0.0) {
            return Err(Error::param("c", format!("sensitivity needs c >= 0, got {c}")));
        }
        Ok(self.tensor_unchecked(x, n, c))
    }

    /// Same as [`eval_tensor`](Self::eval_tensor) without the sign checks;
    /// negative arguments are clamped to zero.
    #[inline]
    pub(crate) fn tensor_unchecked(&self, x: [f64; 3], n: f64, c: f64) -> Mat3 {
        let (n, c) = (n.max(0.0), c.max(0.0));
        let p = &self.params;
        let mut scale = p.bound(n, c);
        if p.eps > 0.0 {
            scale *= cutoff_rho(&self.grid, x, p.eps) * cutoff_chi(n, p.eps);
        }
        self.bracket.map(|row| row.map(|v| scale * v))
    }

    /// Discrete tensor on face `idx` normal to `axis`: ρ_ε is replaced by its
    /// average over the face's dual cell so that a cutoff layer thinner than
    /// a cell still enters in proportion to its width.
    #[inline]
    pub(crate) fn tensor_on_face(&self, axis: usize, idx: usize, n: f64, c: f64) -> Mat3 {
        let (n, c) = (n.max(0.0), c.max(0.0));
        let p = &self.params;
        let mut scale = p.bound(n, c);
        if p.eps > 0.0 {
            scale *= self.face_rho[axis][idx] * cutoff_chi(n, p.eps);
        }
        self.bracket.map(|row| row.map(|v| scale * v))
    }
}

/// Midpoint-rule average of ρ_ε over each face's dual cell. Faces whose dual
/// cell lies at least ε from every wall get exactly 1.
fn face_rho_averages(grid: &Grid, axis: usize, eps: f64) -> Vec<f64> {
    let h = grid.spacing();
    let active: Vec<usize> = grid.active_axes().collect();
    let samples = active
        .iter()
        .map(|&b| (8.0 * h[b] / eps).ceil().clamp(2.0, 32.0) as usize)
        .collect::<Vec<_>>();
    let total: usize = samples.iter().product();
    let [fx, fy, fz] = grid.face_dims(axis);
    let mut out = vec![1.0; grid.face_count(axis)];
    for k in 0..fz {
        for j in 0..fy {
            for i in 0..fx {
                let x = grid.face_center(axis, i, j, k);
                let reach = active.iter().map(|&b| 0.5 * h[b]).fold(0.0, f64::max);
                if grid.distance_to_boundary(x) - reach >= eps {
                    continue;
                }
                let mut sum = 0.0;
                for s in 0..total {
                    let mut y = x;
                    let mut rem = s;
                    for (q, &b) in active.iter().enumerate() {
                        let m = samples[q];
                        let off = ((rem % m) as f64 + 0.5) / m as f64 - 0.5;
                        rem /= m;
                        y[b] = (x[b] + off * h[b]).clamp(0.0, grid.extent()[b]);
                    }
                    sum += cutoff_rho(grid, y, eps);
                }
                out[grid.face_index(axis, i, j, k)] = sum / total as f64;
            }
        }
    }
    out
}

pub fn frobenius_norm(m: &Mat3) -> f64 {
    m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(alpha: f64, theta: f64, eps: f64) -> SensitivityParams {
        SensitivityParams {
            alpha,
            chi0: 1.0,
            response: SignalResponse::Constant,
            rotation: theta,
            eps,
        }
    }

    fn grid() -> Grid {
        Grid::unit_cube(8).unwrap()
    }

    #[test]
    fn rho_examples() {
        let g = grid();
        assert_eq!(cutoff_rho(&g, [0.5, 0.5, 0.5], 0.0), 1.0);
        assert_eq!(cutoff_rho(&g, [0.0, 0.5, 0.5], 0.1), 0.0);
        assert!((cutoff_rho(&g, [0.075, 0.5, 0.5], 0.1) - 0.5).abs() < 1e-12);
        assert_eq!(cutoff_rho(&g, [0.2, 0.5, 0.5], 0.1), 1.0);
    }

    #[test]
    fn chi_examples() {
        assert_eq!(cutoff_chi(1e6, 0.0), 1.0);
        assert_eq!(cutoff_chi(0.0, 0.5), 1.0);
        assert_eq!(cutoff_chi(3.0, 0.5), 0.0);
        assert!((cutoff_chi(1.5, 0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tensor_examples() {
        let g = grid();
        let chi0 = 2.5;
        let ev = SensitivityEvaluator::new(SensitivityParams { chi0, ..params(0.0, 0.0, 0.0) }, &g).unwrap();
        let s = ev.eval_tensor([0.3, 0.3, 0.3], 4.0, 1.0).unwrap();
        assert_eq!(s, [[chi0, 0.0, 0.0], [0.0, chi0, 0.0], [0.0, 0.0, chi0]]);

        let ev = SensitivityEvaluator::new(params(1.0, 0.0, 0.0), &g).unwrap();
        let s = ev.eval_tensor([0.3, 0.3, 0.3], 1.0, 123.0).unwrap();
        assert_eq!(s, [[0.5, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 0.5]]);

        // saturation: ‖S‖ (1+n) stays fixed as n grows
        for n in [1e2, 1e4, 1e6] {
            let s = ev.eval_tensor([0.3; 3], n, 0.0).unwrap();
            assert!((frobenius_norm(&s) * (1.0 + n) - 3f64.sqrt()).abs() < 1e-9);
        }

        assert!(ev.eval_tensor([0.3; 3], -1.0, 0.0).is_err());
        assert!(ev.eval_tensor([0.3; 3], 1.0, -0.1).is_err());
    }

    #[test]
    fn rotation_generator_orientation() {
        let ev = SensitivityEvaluator::new(params(0.0, std::f64::consts::FRAC_PI_2, 0.0), &grid()).unwrap();
        let s = ev.eval_tensor([0.5; 3], 0.0, 0.0).unwrap();
        // R e1 = e2, R e2 = −e1
        assert!((s[1][0] - 1.0).abs() < 1e-15 && s[0][0].abs() < 1e-15);
        assert!((s[0][1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        let g = grid();
        assert!(SensitivityEvaluator::new(params(-0.5, 0.0, 0.0), &g).is_err());
        assert!(SensitivityEvaluator::new(params(1.0, 2.0, 0.0), &g).is_err());
        assert!(SensitivityEvaluator::new(params(1.0, 0.0, 1.5), &g).is_err());
        let p = SensitivityParams {
            response: SignalResponse::Affine { slope: -1.0 },
            ..params(1.0, 0.0, 0.0)
        };
        assert!(SensitivityEvaluator::new(p, &g).is_err());
    }

    #[test]
    fn regularization_converges_pointwise() {
        let g = grid();
        let exact = SensitivityEvaluator::new(params(0.5, 0.4, 0.0), &g).unwrap();
        let x = [0.08, 0.5, 0.5];
        let target = exact.eval_tensor(x, 3.0, 0.7).unwrap();
        let mut prev = f64::INFINITY;
        for eps in [0.2, 0.1, 0.05] {
            let ev = SensitivityEvaluator::new(params(0.5, 0.4, eps), &g).unwrap();
            let s = ev.eval_tensor(x, 3.0, 0.7).unwrap();
            let diff: f64 = s.iter().flatten().zip(target.iter().flatten()).map(|(a, b)| (a - b).abs()).sum();
            assert!(diff <= prev);
            prev = diff;
        }
        assert_eq!(prev, 0.0);
    }

    proptest! {
        #[test]
        fn frobenius_and_spectral_bounds(
            x in prop::array::uniform3(0.0f64..1.0),
            n in 0.0f64..50.0,
            c in 0.0f64..10.0,
            alpha in 0.0f64..3.0,
            theta in 0.0f64..std::f64::consts::FRAC_PI_2,
            eps in 0.0f64..1.0,
            slope in 0.0f64..2.0,
        ) {
            let p = SensitivityParams { alpha, chi0: 1.3, response: SignalResponse::Affine { slope }, rotation: theta, eps };
            let ev = SensitivityEvaluator::new(p, &grid()).unwrap();
            let s = ev.eval_tensor(x, n, c).unwrap();
            let bound = p.bound(n, c);
            prop_assert!(frobenius_norm(&s) <= bound * FROBENIUS_NORMALIZATION * (1.0 + 1e-14));
            // spectral norm: largest singular value of the in-plane 2x2 block and |s33|
            let a = s[0][0]; let b = s[0][1];
            let sigma = (a * a + b * b).sqrt();
            prop_assert!(sigma.max(s[2][2].abs()) <= bound * (1.0 + 1e-14));
        }
    }
}
