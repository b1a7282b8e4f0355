//! Functionals tracked along a run and the end-of-run verdict.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{integrate, lp_norm, Norm, ScalarField};
use crate::fluid::dirichlet_energy;
use crate::operators::grad_norm_sq;
use crate::stepping::{SimConfig, SimState};

/// e^{1/8}, the upper bound of the weight.
pub fn mu0() -> f64 {
    0.125f64.exp()
}

/// Weight `g(s) = e^{βs²}` with `β = 1/(8‖c₀‖∞²)`, or `g ≡ 1` when c₀ ≡ 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightParams {
    pub c0_max: f64,
    /// None in the degenerate case c₀ ≡ 0.
    pub beta: Option<f64>,
    pub p: f64,
}

impl WeightParams {
    pub fn new(c0_max: f64, p: f64) -> Result<Self> {
        if !(c0_max.is_finite() && c0_max >= 0.0) {
            return Err(Error::param("c0_max", format!("need ‖c₀‖∞ >= 0, got {c0_max}")));
        }
        if !(p.is_finite() && p > 1.0) {
            return Err(Error::param("p", format!("need p > 1, got {p}")));
        }
        let beta = (c0_max > 0.0).then(|| 1.0 / (8.0 * c0_max * c0_max));
        Ok(Self { c0_max, beta, p })
    }

    /// Also enforces the standing assumption p > 2α.
    pub fn for_alpha(c0_max: f64, p: f64, alpha: f64) -> Result<Self> {
        if !(p > 2.0 * alpha) {
            return Err(Error::param("p", format!("need p > max(1, 2α) = {}, got {p}", 1f64.max(2.0 * alpha))));
        }
        Self::new(c0_max, p)
    }

    /// Bound on g' over [0, ‖c₀‖∞]: e^{1/8}/(4‖c₀‖∞), or 0 when g ≡ 1.
    pub fn mu1(&self) -> f64 {
        if self.beta.is_some() {
            mu0() / (4.0 * self.c0_max)
        } else {
            0.0
        }
    }

    /// Whether `s` lies in [0, ‖c₀‖∞], where the weight bounds hold.
    pub fn in_domain(&self, s: f64) -> bool {
        (0.0..=self.c0_max).contains(&s)
    }
}

pub fn weight_g(s: f64, wp: &WeightParams) -> f64 {
    match wp.beta {
        Some(beta) => (beta * s * s).exp(),
        None => 1.0,
    }
}

pub fn weight_g_prime(s: f64, wp: &WeightParams) -> f64 {
    match wp.beta {
        Some(beta) => 2.0 * beta * s * (beta * s * s).exp(),
        None => 0.0,
    }
}

/// (1/p) ∫ nᵖ g(c)
pub fn weighted_functional(n: &ScalarField, c: &ScalarField, wp: &WeightParams) -> f64 {
    let integrand = n.zip_map(c, |nv, cv| nv.max(0.0).powf(wp.p) * weight_g(cv, wp));
    integrate(&integrand) / wp.p
}

/// n̂ = {∫n₀ − ∫m₀}₊/|Ω|, m̂ = {∫m₀ − ∫n₀}₊/|Ω|.
pub fn equilibrium_values(n0: &ScalarField, m0: &ScalarField) -> (f64, f64) {
    let d = (integrate(n0) - integrate(m0)) / n0.grid().volume();
    (d.max(0.0), (-d).max(0.0))
}

/// One row of the diagnostics series. Column order of the CSV follows the
/// field order here.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub step: u64,
    pub dt: f64,
    pub mass_n: f64,
    pub mass_c: f64,
    pub mass_m: f64,
    pub mass_diff: f64,
    pub max_n: f64,
    pub max_c: f64,
    pub max_m: f64,
    pub min_n: f64,
    pub min_c: f64,
    pub min_m: f64,
    /// ‖m‖₂
    pub m_l2: f64,
    pub u_l2: f64,
    pub grad_c_l2: f64,
    pub grad_m_l2: f64,
    pub grad_u_l2: f64,
    pub lp_functional: f64,
    pub acc_nm: f64,
    pub acc_grad_m: f64,
    pub acc_grad_c: f64,
    pub acc_grad_u: f64,
    /// Worst relative divergence residual since the previous record.
    pub div_residual: f64,
    /// Worst relative fluid energy residual since the previous record.
    pub energy_residual: f64,
    /// Worst ‖Y_ε u‖/‖u‖ since the previous record (0 if no smoothing ran).
    pub yosida_ratio: f64,
    pub dist_n: f64,
    pub dist_m: f64,
    pub dist_c: f64,
}

impl DiagnosticsRecord {
    pub const COLUMNS: [&'static str; 29] = [
        "t",
        "step",
        "dt",
        "mass_n",
        "mass_c",
        "mass_m",
        "mass_diff",
        "max_n",
        "max_c",
        "max_m",
        "min_n",
        "min_c",
        "min_m",
        "m_l2",
        "u_l2",
        "grad_c_l2",
        "grad_m_l2",
        "grad_u_l2",
        "lp_functional",
        "acc_nm",
        "acc_grad_m",
        "acc_grad_c",
        "acc_grad_u",
        "div_residual",
        "energy_residual",
        "yosida_ratio",
        "dist_n",
        "dist_m",
        "dist_c",
    ];

    /// Real-valued columns in [`COLUMNS`](Self::COLUMNS) order, with `step`
    /// converted to f64.
    pub fn values(&self) -> [f64; 29] {
        [
            self.t,
            self.step as f64,
            self.dt,
            self.mass_n,
            self.mass_c,
            self.mass_m,
            self.mass_diff,
            self.max_n,
            self.max_c,
            self.max_m,
            self.min_n,
            self.min_c,
            self.min_m,
            self.m_l2,
            self.u_l2,
            self.grad_c_l2,
            self.grad_m_l2,
            self.grad_u_l2,
            self.lp_functional,
            self.acc_nm,
            self.acc_grad_m,
            self.acc_grad_c,
            self.acc_grad_u,
            self.div_residual,
            self.energy_residual,
            self.yosida_ratio,
            self.dist_n,
            self.dist_m,
            self.dist_c,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

/// Evaluates every tracked functional on `state`.
pub fn record(state: &SimState, cfg: &SimConfig) -> Result<DiagnosticsRecord> {
    let wp = WeightParams::new(state.initial.max_c, cfg.diagnostics.p)?;
    let (n_hat, m_hat) = state.initial.equilibrium();
    let (mass_n, mass_m) = (integrate(&state.n), integrate(&state.m));
    let mon = &state.monitors;
    let finite_or_zero = |v: f64| if v.is_finite() { v } else { 0.0 };
    Ok(DiagnosticsRecord {
        t: state.t,
        step: state.step,
        dt: mon.last_dt,
        mass_n,
        mass_c: integrate(&state.c),
        mass_m,
        mass_diff: mass_n - mass_m,
        max_n: state.n.max_abs(),
        max_c: state.c.max_abs(),
        max_m: state.m.max_abs(),
        min_n: state.n.min(),
        min_c: state.c.min(),
        min_m: state.m.min(),
        m_l2: lp_norm(&state.m, Norm::L(2.0))?,
        u_l2: state.u.l2_norm(),
        grad_c_l2: grad_norm_sq(&state.c).sqrt(),
        grad_m_l2: grad_norm_sq(&state.m).sqrt(),
        grad_u_l2: dirichlet_energy(&state.u).max(0.0).sqrt(),
        lp_functional: weighted_functional(&state.n, &state.c, &wp),
        acc_nm: state.acc.nm,
        acc_grad_m: state.acc.grad_m,
        acc_grad_c: state.acc.grad_c,
        acc_grad_u: state.acc.grad_u,
        div_residual: mon.div_residual,
        energy_residual: finite_or_zero(mon.energy_residual),
        yosida_ratio: mon.yosida_ratio,
        dist_n: state.n.map(|v| (v - n_hat).abs()).max(),
        dist_m: state.m.map(|v| (v - m_hat).abs()).max(),
        dist_c: state.c.map(|v| (v - m_hat).abs()).max(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub status: CheckStatus,
    /// Largest violation measure seen (≤ 0 or below tolerance when passing).
    pub worst: f64,
    pub tolerance: f64,
    pub first_failure: Option<f64>,
    pub note: String,
}

/// Reported, not asserted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub lp_sup: f64,
    pub lp_tail_growth: f64,
    /// Share of ∫∫nm accumulated during the last 20% of records.
    pub nm_tail_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub checks: Vec<CheckResult>,
    pub report: Report,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Optional checks.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VerdictOptions {
    /// Assert the fluid energy inequality (meaningful for κ = 0).
    pub energy: bool,
    /// Assert convergence to the homogeneous equilibrium at the last record.
    pub converged: bool,
}

impl VerdictOptions {
    pub fn for_config(cfg: &SimConfig) -> Self {
        Self {
            energy: cfg.fluid.kappa == 0.0,
            converged: cfg.diagnostics.convergence_tol.is_some(),
        }
    }
}

pub const MASS_TOL: f64 = 1e-12;
pub const MONOTONE_TOL: f64 = 1e-12;
pub const MAX_PRINCIPLE_TOL: f64 = 1e-12;
pub const DISSIPATION_TOL: f64 = 1e-6;
pub const DIVERGENCE_TOL: f64 = 1e-8;
pub const ENERGY_TOL: f64 = 1e-8;
pub const YOSIDA_TOL: f64 = 1e-12;
pub const LP_TAIL_TOL: f64 = 1e-6;
/// Distances at the final record for a converged run: n, m, u, c.
pub const CONVERGENCE_TARGETS: [f64; 4] = [1e-2, 1e-3, 1e-3, 1e-2];

struct Tracker {
    name: &'static str,
    tolerance: f64,
    worst: f64,
    first_failure: Option<f64>,
    note: String,
}

impl Tracker {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            worst: f64::NEG_INFINITY,
            first_failure: None,
            note: String::new(),
        }
    }

    /// `violation` is a normalized excess; fails when it exceeds `tolerance`.
    fn observe(&mut self, t: f64, violation: f64) {
        if violation.is_nan() || violation > self.worst {
            self.worst = violation;
        }
        if (violation.is_nan() || violation > self.tolerance) && self.first_failure.is_none() {
            self.first_failure = Some(t);
        }
    }

    fn finish(self) -> CheckResult {
        let status = if self.worst == f64::NEG_INFINITY {
            CheckStatus::Skipped
        } else if self.first_failure.is_some() {
            CheckStatus::Fail
        } else {
            CheckStatus::Pass
        };
        CheckResult {
            name: self.name.to_string(),
            status,
            worst: if self.worst == f64::NEG_INFINITY { 0.0 } else { self.worst },
            tolerance: self.tolerance,
            first_failure: self.first_failure,
            note: self.note,
        }
    }
}

fn rel(excess: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        excess / scale
    } else if excess > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Checks a record series. The first record must be the initial state.
pub fn verdict(series: &[DiagnosticsRecord], opts: VerdictOptions) -> Result<Verdict> {
    if series.len() < 2 {
        return Err(Error::Diagnostics(format!("verdict needs at least 2 records, got {}", series.len())));
    }
    let r0 = &series[0];
    let mut finite = Tracker::new("finite", 0.0);
    let mut mass = Tracker::new("mass_difference", MASS_TOL);
    let mut m_mono = Tracker::new("m_mass_monotone", MONOTONE_TOL);
    let mut c_mono = Tracker::new("c_mass_monotone", MONOTONE_TOL);
    let mut m_max = Tracker::new("max_principle_m", MAX_PRINCIPLE_TOL);
    let mut c_max = Tracker::new("max_principle_c", MAX_PRINCIPLE_TOL);
    let mut nonneg = Tracker::new("nonnegativity", 0.0);
    let mut dissip = Tracker::new("dissipation_cap", DISSIPATION_TOL);
    let mut acc = Tracker::new("accumulators_nondecreasing", 0.0);
    let mut div = Tracker::new("divergence", DIVERGENCE_TOL);
    let mut yosida = Tracker::new("yosida_contraction", YOSIDA_TOL);
    let mut energy = Tracker::new("energy_inequality", ENERGY_TOL);
    let mut lp = Tracker::new("lp_functional_bounded", LP_TAIL_TOL);
    let mut conv = Tracker::new("convergence", 0.0);

    let mass_scale = r0.mass_n + r0.mass_m;
    let c_check = r0.mass_c >= r0.mass_m;
    if !c_check {
        c_mono.note = "skipped: ∫c₀ < ∫m₀, where ∫c may rise".into();
    }
    let dissip_cap = 0.5 * r0.m_l2 * r0.m_l2;
    let mut m_sup = r0.max_m;

    for (k, r) in series.iter().enumerate() {
        let t = r.t;
        finite.observe(t, if r.is_finite() { 0.0 } else { f64::INFINITY });
        // the stored column and the one implied by the mass columns must both hold
        let stored = (r.mass_diff - r0.mass_diff).abs();
        let implied = ((r.mass_n - r.mass_m) - (r0.mass_n - r0.mass_m)).abs();
        mass.observe(t, rel(stored.max(implied), mass_scale));
        m_max.observe(t, rel(r.max_m - r0.max_m, r0.max_m));
        m_sup = m_sup.max(r.max_m);
        let c_bound = r0.max_c.max(m_sup);
        c_max.observe(t, rel(r.max_c - c_bound, c_bound));
        nonneg.observe(t, -(r.min_n.min(r.min_c).min(r.min_m)));
        dissip.observe(t, rel(r.acc_grad_m - dissip_cap, dissip_cap));
        if k == 0 {
            continue;
        }
        let p = &series[k - 1];
        m_mono.observe(t, rel(r.mass_m - p.mass_m, p.mass_m.abs()));
        if c_check {
            c_mono.observe(t, rel(r.mass_c - p.mass_c, p.mass_c.abs()));
        }
        let dec = [
            p.acc_nm - r.acc_nm,
            p.acc_grad_m - r.acc_grad_m,
            p.acc_grad_c - r.acc_grad_c,
            p.acc_grad_u - r.acc_grad_u,
        ];
        acc.observe(t, dec.into_iter().fold(f64::NEG_INFINITY, f64::max));
        div.observe(t, r.div_residual);
        if r.yosida_ratio > 0.0 {
            yosida.observe(t, r.yosida_ratio - 1.0);
        }
        if opts.energy {
            energy.observe(t, r.energy_residual);
        }
    }
    if !opts.energy {
        energy.note = "not requested".into();
    }

    let lp_sup = series.iter().map(|r| r.lp_functional).fold(f64::NEG_INFINITY, f64::max);
    let tail_start = series.len() - (series.len() / 5).max(1) - 1;
    let tail = &series[tail_start..];
    let (l_first, l_last) = (tail[0].lp_functional, tail[tail.len() - 1].lp_functional);
    let lp_tail_growth = rel(l_last - l_first, l_first.abs().max(lp_sup.abs()));
    lp.observe(series[series.len() - 1].t, if lp_sup.is_finite() { lp_tail_growth } else { f64::INFINITY });
    lp.note = format!("sup L = {lp_sup:.6e}");

    let last = &series[series.len() - 1];
    if opts.converged {
        let dists = [last.dist_n, last.dist_m, last.u_l2, last.dist_c];
        let worst = dists
            .iter()
            .zip(CONVERGENCE_TARGETS)
            .map(|(d, target)| d / target - 1.0)
            .fold(f64::NEG_INFINITY, f64::max);
        conv.observe(last.t, worst);
        conv.note = format!(
            "‖n−n̂‖∞ = {:.3e}, ‖m−m̂‖∞ = {:.3e}, ‖u‖₂ = {:.3e}, ‖c−m̂‖∞ = {:.3e}",
            dists[0], dists[1], dists[2], dists[3]
        );
    } else {
        conv.note = "not requested".into();
    }

    let nm_total = last.acc_nm;
    let nm_tail_share = rel(last.acc_nm - tail[0].acc_nm, nm_total);

    Ok(Verdict {
        checks: vec![
            finite.finish(),
            mass.finish(),
            m_mono.finish(),
            c_mono.finish(),
            m_max.finish(),
            c_max.finish(),
            nonneg.finish(),
            dissip.finish(),
            acc.finish(),
            div.finish(),
            yosida.finish(),
            energy.finish(),
            lp.finish(),
            conv.finish(),
        ],
        report: Report {
            lp_sup,
            lp_tail_growth,
            nm_tail_share,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid;
    use proptest::prelude::*;

    #[test]
    fn equilibrium_examples() {
        let g = Grid::unit_cube(4).unwrap();
        let (n, m) = equilibrium_values(&ScalarField::constant(&g, 2.0), &ScalarField::constant(&g, 1.0));
        assert!((n - 1.0).abs() < 1e-15 && m == 0.0);
        let (n, m) = equilibrium_values(&ScalarField::constant(&g, 1.5), &ScalarField::constant(&g, 1.5));
        assert_eq!((n, m), (0.0, 0.0));
        let g2 = Grid::new([4, 4, 4], [2.0, 1.0, 1.0]).unwrap();
        // ∫n₀ = 1, ∫m₀ = 3, |Ω| = 2
        let (n, m) = equilibrium_values(&ScalarField::constant(&g2, 0.5), &ScalarField::constant(&g2, 1.5));
        assert!(n == 0.0 && (m - 1.0).abs() < 1e-15);
    }

    #[test]
    fn weight_examples() {
        let wp = WeightParams::new(1.0, 2.0).unwrap();
        assert_eq!(weight_g(0.0, &wp), 1.0);
        assert!((weight_g(1.0, &wp) - mu0()).abs() < 1e-15);
        assert!((mu0() - 1.133_148_453_066_826_4).abs() < 1e-15);
        assert!((weight_g_prime(1.0, &wp) - 0.25 * mu0()).abs() < 1e-15);
        assert!((wp.mu1() - 0.25 * mu0()).abs() < 1e-15);
        let flat = WeightParams::new(0.0, 2.0).unwrap();
        assert_eq!(weight_g(5.0, &flat), 1.0);
        assert_eq!(weight_g_prime(5.0, &flat), 0.0);
        assert!(WeightParams::for_alpha(1.0, 2.0, 1.0).is_err());
        assert!(WeightParams::new(1.0, 1.0).is_err());
    }

    #[test]
    fn functional_examples() {
        let g = Grid::unit_cube(4).unwrap();
        let wp = WeightParams::new(1.0, 2.0).unwrap();
        let zero = ScalarField::zeros(&g);
        let one = ScalarField::constant(&g, 1.0);
        assert_eq!(weighted_functional(&zero, &one, &wp), 0.0);
        assert!((weighted_functional(&one, &zero, &wp) - 0.5).abs() < 1e-15);
        assert!((weighted_functional(&one, &one, &wp) - 0.5 * mu0()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn weight_bounds_hold_on_domain(c0 in 1e-3f64..50.0, frac in 0.0f64..=1.0) {
            let wp = WeightParams::new(c0, 2.0).unwrap();
            let s = frac * c0;
            let g = weight_g(s, &wp);
            prop_assert!((1.0..=mu0() * (1.0 + 1e-15)).contains(&g));
            prop_assert!(weight_g_prime(s, &wp) <= wp.mu1() * (1.0 + 1e-14));
        }

        #[test]
        fn functional_sandwich(vals in prop::collection::vec((0.0f64..5.0, 0.0f64..1.0), 27), p in 1.1f64..5.0) {
            let g = Grid::unit_cube(3).unwrap();
            let n = ScalarField::from_values(&g, vals.iter().map(|v| v.0).collect()).unwrap();
            let c_raw: Vec<f64> = vals.iter().map(|v| v.1).collect();
            let cmax = c_raw.iter().cloned().fold(0.0, f64::max);
            let c = ScalarField::from_values(&g, c_raw).unwrap();
            let wp = WeightParams::new(cmax, p).unwrap();
            let l = weighted_functional(&n, &c, &wp);
            let np = lp_norm(&n, Norm::L(p)).unwrap().powf(p) / p;
            prop_assert!(l >= np * (1.0 - 1e-12));
            prop_assert!(l <= mu0() * np * (1.0 + 1e-12));
        }

        #[test]
        fn equilibrium_identities(a in 0.0f64..5.0, b in 0.0f64..5.0) {
            let g = Grid::unit_cube(2).unwrap();
            let (n, m) = equilibrium_values(&ScalarField::constant(&g, a), &ScalarField::constant(&g, b));
            prop_assert_eq!(n * m, 0.0);
            prop_assert!(((n - m) - (a - b)).abs() < 1e-14);
        }
    }

    fn toy_series() -> Vec<DiagnosticsRecord> {
        (0..10)
            .map(|k| {
                let t = k as f64 * 0.1;
                let m = (-t).exp();
                DiagnosticsRecord {
                    t,
                    step: k,
                    mass_n: 1.0 + m,
                    mass_m: m,
                    mass_c: 2.0 - t * 0.1,
                    mass_diff: 1.0,
                    max_n: 1.0 + m,
                    max_m: m,
                    max_c: 2.0,
                    m_l2: m,
                    lp_functional: 1.0 / (1.0 + t),
                    acc_nm: t,
                    acc_grad_m: 0.01 * t,
                    div_residual: 1e-12,
                    ..DiagnosticsRecord::default()
                }
            })
            .collect()
    }

    #[test]
    fn clean_series_passes_and_is_pure() {
        let s = toy_series();
        let v = verdict(&s, VerdictOptions::default()).unwrap();
        assert!(v.passed(), "{v:#?}");
        assert_eq!(v, verdict(&s, VerdictOptions::default()).unwrap());
    }

    #[test]
    fn corrupted_mass_is_caught_at_the_right_time() {
        let mut s = toy_series();
        s[6].mass_diff += 1e-6;
        let v = verdict(&s, VerdictOptions::default()).unwrap();
        let c = v.check("mass_difference").unwrap();
        assert_eq!(c.status, CheckStatus::Fail);
        assert_eq!(c.first_failure, Some(s[6].t));
        assert_eq!(v.failures().count(), 1);
    }

    #[test]
    fn single_record_is_an_error() {
        assert!(verdict(&toy_series()[..1], VerdictOptions::default()).is_err());
    }
}
