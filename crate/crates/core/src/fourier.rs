//! Characteristic functions of the summand pair and the inversion integral
//! for `P(S_N = m)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::conditional::exact_condition_probability;
use crate::error::{Error, Result};
use crate::exact::ConditioningSpec;
use crate::model::{ModelSpec, Moments, JOINT_TRUNCATION};
use crate::quad::integrate_adaptive;

/// Absolute tolerance of the inversion integral.
pub const PSI_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
struct XGroup {
    dx: f64,
    px: f64,
    /// (centered y, P(y | x))
    ys: Vec<(f64, f64)>,
}

/// Evaluates `φ(s, t) = E exp(i s (X - E X) + i t (Y - E Y))` from a
/// truncated joint table grouped by the value of `X`.
#[derive(Debug, Clone)]
pub struct CfEvaluator {
    groups: Vec<XGroup>,
    moments: Moments,
    truncation_mass: f64,
}

/// `φ(·, t)` for a fixed `t`: one complex weight per value of `X`.
#[derive(Debug, Clone)]
pub struct CfSlice {
    terms: Vec<(f64, Complex64)>,
}

impl CfSlice {
    #[inline]
    pub fn eval(&self, s: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &(dx, w) in &self.terms {
            acc += w * Complex64::cis(s * dx);
        }
        acc
    }
}

impl CfEvaluator {
    pub fn new(model: &ModelSpec) -> Result<Self> {
        let table = model.joint_table(JOINT_TRUNCATION)?;
        if table.truncation_mass > 1e-10 {
            return Err(Error::Input(format!(
                "joint table leaves out {} > 1e-10",
                table.truncation_mass
            )));
        }
        let moments = table.moments();
        let mut groups: Vec<XGroup> = Vec::new();
        for a in &table.atoms {
            let dx = a.x as f64 - moments.mean_x;
            let dy = a.y - moments.mean_y;
            match groups.last_mut() {
                Some(g) if g.dx == dx => {
                    g.px += a.p;
                    g.ys.push((dy, a.p));
                }
                _ => groups.push(XGroup {
                    dx,
                    px: a.p,
                    ys: vec![(dy, a.p)],
                }),
            }
        }
        for g in &mut groups {
            for y in &mut g.ys {
                y.1 /= g.px;
            }
        }
        Ok(Self {
            groups,
            moments,
            truncation_mass: table.truncation_mass,
        })
    }

    pub fn moments(&self) -> &Moments {
        &self.moments
    }

    pub fn truncation_mass(&self) -> f64 {
        self.truncation_mass
    }

    pub fn slice(&self, t: f64) -> CfSlice {
        let terms = self
            .groups
            .iter()
            .map(|g| {
                let w: Complex64 = if t == 0.0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    g.ys.iter().map(|&(dy, p)| Complex64::cis(t * dy) * p).sum()
                };
                (g.dx, w * g.px)
            })
            .collect();
        CfSlice { terms }
    }

    pub fn phi(&self, s: f64, t: f64) -> Complex64 {
        self.slice(t).eval(s)
    }
}

pub fn joint_cf(model: &ModelSpec, s: f64, t: f64) -> Result<Complex64> {
    Ok(CfEvaluator::new(model)?.phi(s, t))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PsiValue {
    pub re: f64,
    pub im: f64,
    pub error: f64,
    pub panels: usize,
}

impl PsiValue {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// `ψ(t) = ∫_{-π}^{π} e^{-is(m - N E X)} φ(s, t)^N ds`.
pub fn psi_quadrature_with(cf: &CfEvaluator, cond: &ConditioningSpec, t: f64) -> Result<PsiValue> {
    let n = cond.n_summands;
    let shift = cond.m as f64 - n as f64 * cf.moments.mean_x;
    let slice = cf.slice(t);
    let panels = (4.0 * (n as f64).sqrt() + shift.abs() / 4.0)
        .ceil()
        .clamp(16.0, 4096.0) as usize;
    let r = integrate_adaptive(
        |s| Complex64::cis(-s * shift) * slice.eval(s).powu(n as u32),
        -PI,
        PI,
        PSI_TOLERANCE,
        panels,
    )?;
    Ok(PsiValue {
        re: r.value.re,
        im: r.value.im,
        error: r.error,
        panels: r.panels,
    })
}

pub fn psi_quadrature(model: &ModelSpec, cond: &ConditioningSpec, t: f64) -> Result<PsiValue> {
    psi_quadrature_with(&CfEvaluator::new(model)?, cond, t)
}

#[derive(Debug, Clone, Serialize)]
pub struct LltReport {
    #[serde(rename = "N")]
    pub n_summands: u64,
    pub m: i64,
    pub p_exact: f64,
    pub p_gaussian: f64,
    pub ratio: f64,
    pub v_n: f64,
    pub sigma_x: f64,
    /// `ψ(0) σ_X √N e^{v_n²/2}`, which tends to √(2π).
    pub psi0_scaled: Option<f64>,
    pub psi0: Option<f64>,
}

/// Exact `P(S_N = m)` against `e^{-v²/2} / (σ_X √(2πN))`.
pub fn llt_check(model: &ModelSpec, cond: &ConditioningSpec) -> Result<LltReport> {
    let mo = model.moments()?;
    let nf = cond.n_summands as f64;
    let scale = mo.sigma_x * nf.sqrt();
    let v = (cond.m as f64 - nf * mo.mean_x) / scale;
    let p_exact = exact_condition_probability(model, cond)?;
    let p_gauss = (-0.5 * v * v).exp() / (scale * (2.0 * PI).sqrt());
    Ok(LltReport {
        n_summands: cond.n_summands,
        m: cond.m,
        p_exact,
        p_gaussian: p_gauss,
        ratio: p_exact / p_gauss,
        v_n: v,
        sigma_x: mo.sigma_x,
        psi0_scaled: None,
        psi0: None,
    })
}

/// [`llt_check`] plus the inversion integral at `t = 0`.
pub fn llt_check_with_psi(model: &ModelSpec, cond: &ConditioningSpec) -> Result<LltReport> {
    let mut r = llt_check(model, cond)?;
    let psi = psi_quadrature(model, cond, 0.0)?;
    let scale = r.sigma_x * (cond.n_summands as f64).sqrt();
    r.psi0 = Some(psi.re);
    r.psi0_scaled = Some(psi.re * scale * (0.5 * r.v_n * r.v_n).exp());
    Ok(r)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnvelopeGrid {
    pub ns: usize,
    pub nt: usize,
}

impl Default for EnvelopeGrid {
    fn default() -> Self {
        Self { ns: 101, nt: 101 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeSample {
    pub s: f64,
    pub t: f64,
    #[serde(rename = "N")]
    pub n_summands: u64,
    pub l: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub on_grid: bool,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    /// Grid minimum of `(1 - |φ|) / (σ_X² s² + σ_Y² t²)`; not a certified
    /// infimum.
    pub c5_hat: f64,
    pub argmin: (f64, f64),
    pub eta0: f64,
    pub grid: EnvelopeGrid,
    pub sigma_x: f64,
    pub sigma_y: f64,
    /// The ratio at `s = t = 1e-3`.
    pub small_st_ratio: f64,
    /// `Var(sX + tY) / (2 (σ_X² s² + σ_Y² t²))` at the same point, the
    /// second-order limit of the ratio.
    pub small_st_limit: f64,
    /// `(1 - |r|) / 2`.
    pub small_st_lower: f64,
    pub samples: Vec<EnvelopeSample>,
    pub grid_violations: usize,
    pub off_grid_violations: usize,
}

/// Grid estimate of the constant `c5` in
/// `|E e^{i(sX + tY)}| <= 1 - c5 (σ_X² s² + σ_Y² t²)` on
/// `[-π, π] × [0, η0]`, and a check of the induced exponential envelope
/// `|φ^{N-l}(s/(σ_X√N), t/(σ_Y√N))| <= exp(-(s²+t²) c5 (N-l)/N)`.
///
/// The model is normally the decorrelated one (see [`ModelSpec::y_prime`]).
pub fn cf_envelope_check(
    model: &ModelSpec,
    eta0: f64,
    grid: EnvelopeGrid,
) -> Result<EnvelopeReport> {
    if !(eta0 > 0.0) || grid.ns < 2 || grid.nt < 2 {
        return Err(Error::Input(
            "envelope grid needs eta0 > 0 and at least 2x2 points".into(),
        ));
    }
    let cf = CfEvaluator::new(model)?;
    let mo = *cf.moments();
    let (vx, vy) = (mo.sigma_x.powi(2), mo.sigma_y.powi(2));
    let ratio = |phi: Complex64, s: f64, t: f64| (1.0 - phi.norm()) / (vx * s * s + vy * t * t);

    let s_at = |i: usize| -PI + 2.0 * PI * i as f64 / (grid.ns - 1) as f64;
    let t_at = |j: usize| eta0 * j as f64 / (grid.nt - 1) as f64;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for j in 0..grid.nt {
        let t = t_at(j);
        let slice = cf.slice(t);
        for i in 0..grid.ns {
            let s = s_at(i);
            if s == 0.0 && t == 0.0 {
                continue;
            }
            let r = ratio(slice.eval(s), s, t);
            if r < best.0 {
                best = (r, s, t);
            }
        }
    }
    let c5 = best.0;

    let (s0, t0) = (1e-3, 1e-3);
    let small = ratio(cf.phi(s0, t0), s0, t0);
    let q = vx * s0 * s0 + 2.0 * mo.cov * s0 * t0 + vy * t0 * t0;
    let limit = q / (2.0 * (vx * s0 * s0 + vy * t0 * t0));

    // envelope at grid points (rescaled to the N-dependent variables) and at
    // deterministic off-grid points
    let mut samples = Vec::new();
    for &n in &[10u64, 100, 1000] {
        let root = (n as f64).sqrt();
        for &l in &[0, 1, n / 2] {
            for &(i, j) in &[(60usize, 10usize), (55, 50), (80, 100), (100, 0), (51, 1)] {
                let (i, j) = (i * (grid.ns - 1) / 100, j * (grid.nt - 1) / 100);
                let (a, b) = (s_at(i), t_at(j));
                if a == 0.0 && b == 0.0 {
                    continue;
                }
                samples.push(envelope_sample(&cf, &mo, c5, a, b, n, l, root, true));
            }
            for k in 0..5 {
                let a = -PI + 2.0 * PI * ((k as f64 + 0.37) * 0.61803398875).fract();
                let b = eta0 * ((k as f64 + 0.11) * 0.41421356237).fract();
                samples.push(envelope_sample(&cf, &mo, c5, a, b, n, l, root, false));
            }
        }
    }
    let grid_violations = samples.iter().filter(|s| s.on_grid && !s.holds).count();
    let off_grid_violations = samples.iter().filter(|s| !s.on_grid && !s.holds).count();
    if !(c5 > 0.0) {
        return Err(Error::Hypothesis(format!(
            "grid minimum c5 = {c5} <= 0 at (s, t) = ({}, {})",
            best.1, best.2
        )));
    }
    Ok(EnvelopeReport {
        c5_hat: c5,
        argmin: (best.1, best.2),
        eta0,
        grid,
        sigma_x: mo.sigma_x,
        sigma_y: mo.sigma_y,
        small_st_ratio: small,
        small_st_limit: limit,
        small_st_lower: (1.0 - mo.r.abs()) / 2.0,
        samples,
        grid_violations,
        off_grid_violations,
    })
}

#[allow(clippy::too_many_arguments)]
fn envelope_sample(
    cf: &CfEvaluator,
    mo: &Moments,
    c5: f64,
    a: f64,
    b: f64,
    n: u64,
    l: u64,
    root: f64,
    on_grid: bool,
) -> EnvelopeSample {
    let s = a * mo.sigma_x * root;
    let t = b * mo.sigma_y * root;
    let lhs = cf.phi(a, b).norm().powf((n - l) as f64);
    let rhs = (-(s * s + t * t) * c5 * (n - l) as f64 / n as f64).exp();
    EnvelopeSample {
        s,
        t,
        n_summands: n,
        l,
        lhs,
        rhs,
        on_grid,
        holds: lhs <= rhs * (1.0 + 1e-12),
    }
}
