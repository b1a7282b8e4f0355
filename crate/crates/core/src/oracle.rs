//! Closed-form reference for spatially homogeneous data.
//!
//! With constant fields every spatial term vanishes and the system reduces to
//! `n' = −nm`, `m' = −nm`, `c' = −c + m`. Since `n − m ≡ d` is conserved,
//! `m' = −m(m + d)`, a logistic equation with solution
//! `m(t) = d·m₀ / (n₀·(e^{dt} − 1) + d)` (and `m₀/(1 + m₀t)` when `d = 0`).
//! The signal is the convolution `c(t) = c₀e^{−t} + ∫₀ᵗ e^{−(t−s)} m(s) ds`,
//! evaluated by adaptive Simpson quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousIC {
    pub n0: f64,
    pub m0: f64,
    pub c0: f64,
}

impl HomogeneousIC {
    pub fn new(n0: f64, m0: f64, c0: f64) -> Result<Self> {
        for (name, v) in [("n0", n0), ("m0", m0), ("c0", c0)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(name, format!("homogeneous data must be finite and >= 0, got {v}")));
            }
        }
        Ok(Self { n0, m0, c0 })
    }

    pub fn d(&self) -> f64 {
        self.n0 - self.m0
    }

    /// m(t) in closed form.
    pub fn m(&self, t: f64) -> f64 {
        let (n0, m0, d) = (self.n0, self.m0, self.d());
        if m0 == 0.0 {
            return 0.0;
        }
        if d == 0.0 {
            return m0 / (1.0 + m0 * t);
        }
        d * m0 / (n0 * (d * t).exp_m1() + d)
    }

    /// n(t) = m(t) + d.
    pub fn n(&self, t: f64) -> f64 {
        if self.m0 == 0.0 {
            return self.n0;
        }
        (self.m(t) + self.d()).max(0.0)
    }

    /// c(t) by adaptive quadrature of the convolution integral.
    pub fn c(&self, t: f64) -> f64 {
        if t == 0.0 {
            return self.c0;
        }
        let integrand = |s: f64| (-(t - s)).exp() * self.m(s);
        self.c0 * (-t).exp() + adaptive_simpson(&integrand, 0.0, t, 1e-14 * self.m0.max(1e-300))
    }
}

/// (n, m, c) at time `t ≥ 0`.
pub fn homogeneous_solution(ic: &HomogeneousIC, t: f64) -> Result<(f64, f64, f64)> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::param("t", format!("need t >= 0, got {t}")));
    }
    Ok((ic.n(t), ic.m(t), ic.c(t)))
}

/// Adaptive Simpson quadrature with Richardson correction.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    recurse(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 48)
}
