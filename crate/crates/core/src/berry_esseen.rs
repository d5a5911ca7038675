//! Normal approximation of the conditioned sum: predicted moments,
//! Kolmogorov distance, the explicit constants of the Berry-Esseen bound and
//! an audit of its hypotheses on a concrete model.

use std::f64::consts::PI;

use serde::Serialize;

use crate::conditional::dkw_epsilon;
use crate::error::{Error, Result};
use crate::exact::{exact_conditional_law, ConditioningSpec};
use crate::fourier::{cf_envelope_check, llt_check, EnvelopeGrid, EnvelopeReport};
use crate::model::{ModelSpec, Moments};
use crate::normal::normal_cdf;
use crate::numeric::KahanSum;
use crate::pmf::Pmf;
use crate::quad::{gl32, integrate_real};

/// Constant of the smoothing lemma for the joint characteristic function.
pub const C0: f64 = 98.0;

/// Replaces `Y` by `Y - E Y - (Cov(X,Y)/σ_X²)(X - E X)`.
pub fn y_prime_transform(model: &ModelSpec) -> Result<ModelSpec> {
    model.y_prime()
}

/// `(N E Y + (Cov/σ_X²)(m - N E X), N τ²)`.
pub fn predicted_moments_from(mo: &Moments, cond: &ConditioningSpec) -> (f64, f64) {
    let n = cond.n_summands as f64;
    let slope = mo.cov / (mo.sigma_x * mo.sigma_x);
    (
        n * mo.mean_y + slope * (cond.m as f64 - n * mo.mean_x),
        n * mo.tau * mo.tau,
    )
}

pub fn predicted_moments(model: &ModelSpec, cond: &ConditioningSpec) -> Result<(f64, f64)> {
    Ok(predicted_moments_from(&model.moments()?, cond))
}

/// `sup_x |P((U - mean)/sd <= x) - Φ(x)|` for a lattice law, evaluated at
/// each atom from both sides.
pub fn kolmogorov_distance(law: &Pmf, mean: f64, sd: f64) -> Result<f64> {
    if !(sd > 0.0) {
        return Err(Error::Input(format!(
            "standard deviation {sd} must be positive"
        )));
    }
    let mut cum = 0.0;
    let mut d: f64 = 0.0;
    for (x, p) in law.iter() {
        let phi = normal_cdf((x as f64 - mean) / sd);
        d = d.max((cum - phi).abs());
        cum += p;
        d = d.max((cum - phi).abs());
    }
    Ok(d)
}

/// Kolmogorov distance of an empirical sample with its DKW half-width at
/// level `alpha`.
pub fn kolmogorov_distance_sample(
    values: &[i64],
    mean: f64,
    sd: f64,
    alpha: f64,
) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Input("empty sample".into()));
    }
    let w = 1.0 / values.len() as f64;
    let law = Pmf::from_pairs(values.iter().map(|&v| (v, w)), 0.0)?;
    Ok((
        kolmogorov_distance(&law, mean, sd)?,
        dkw_epsilon(values.len() as u64, alpha),
    ))
}

/// Model bounds entering the constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct Bounds {
    pub c1_tilde: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3_tilde: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c5_tilde: f64,
    pub c6: f64,
    pub eta0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantSet {
    pub bounds: Bounds,
    pub eta: f64,
    pub epsilon: f64,
    #[serde(rename = "C0")]
    pub c0: f64,
    #[serde(rename = "C1")]
    pub big_c1: f64,
    #[serde(rename = "C2")]
    pub big_c2: f64,
    #[serde(rename = "C3")]
    pub big_c3: f64,
    #[serde(rename = "C")]
    pub big_c: f64,
    pub c7: f64,
    pub c8_second: f64,
    pub c8_third: f64,
    pub c8: f64,
    /// Bound for the distance standardized by the exact conditional moments.
    #[serde(rename = "C_tilde")]
    pub big_c_tilde: f64,
    #[serde(rename = "N0")]
    pub n0: u64,
    #[serde(rename = "N0_tilde")]
    pub n0_tilde: u64,
}

/// `∫ |s|^a e^{-s²/24} ds` over the real line.
fn abs_moment_24(a: u32) -> f64 {
    let k = (a as f64 + 1.0) / 2.0;
    24f64.powf(k) * libm::tgamma(k)
}

/// `∬ (|s| + |u| + 1)³ e^{-(s² + u²)/24} ds du` by expanding the cube.
pub fn smoothing_integral_closed_form() -> f64 {
    let mut acc = 0.0;
    for i in 0..=3u32 {
        for j in 0..=(3 - i) {
            let k = 3 - i - j;
            let multinomial = 6.0
                / ((1..=i).product::<u32>() * (1..=j).product::<u32>() * (1..=k).product::<u32>())
                    as f64;
            acc += multinomial * abs_moment_24(i) * abs_moment_24(j);
        }
    }
    acc
}

/// The same integral by a tensor Gauss-Legendre rule on `[0, 60]²`, using
/// the symmetry in both variables.
pub fn smoothing_integral_quadrature() -> f64 {
    let rule = gl32();
    let panels = 12;
    let width = 60.0 / panels as f64;
    let mut pts = Vec::with_capacity(panels * rule.nodes().len());
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * width;
        for (x, w) in rule.nodes().iter().zip(rule.weights()) {
            pts.push((mid + x * width / 2.0, w * width / 2.0));
        }
    }
    let mut acc = KahanSum::new();
    for &(s, ws) in &pts {
        for &(u, wu) in &pts {
            acc.add(ws * wu * (s + u + 1.0).powi(3) * (-(s * s + u * u) / 24.0).exp());
        }
    }
    4.0 * acc.value()
}

/// Gaussian integrals used by the moment constants, closed form and by
/// quadrature: `∫s²e^{-cs²/2}`, `∫s⁴e^{-cs²/3}`, `∫|s|e^{-cs²/2}`.
#[derive(Debug, Clone, Serialize)]
pub struct GaussianIntegral {
    pub name: &'static str,
    pub closed_form: f64,
    pub quadrature: f64,
}

pub fn gaussian_integrals(c: f64) -> Result<Vec<GaussianIntegral>> {
    let span = 60.0 / c.sqrt().min(1.0);
    let entry = |name: &'static str,
                 closed_form: f64,
                 f: &(dyn Fn(f64) -> f64 + Sync)|
     -> Result<GaussianIntegral> {
        Ok(GaussianIntegral {
            name,
            closed_form,
            quadrature: integrate_real(f, -span, span, 1e-12 * closed_form)?,
        })
    };
    Ok(vec![
        entry(
            "s^2 exp(-c s^2/2)",
            (2.0 * PI).sqrt() * c.powf(-1.5),
            &|s| s * s * (-c * s * s / 2.0).exp(),
        )?,
        entry(
            "s^4 exp(-c s^2/3)",
            0.75 * PI.sqrt() * (3.0 / c).powf(2.5),
            &|s| s.powi(4) * (-c * s * s / 3.0).exp(),
        )?,
        entry("|s| exp(-c s^2/2)", 2.0 / c, &|s| {
            s.abs() * (-c * s * s / 2.0).exp()
        })?,
    ])
}

/// `sup_x (|x| + 1) exp(-(|x|/2 - b)²/2)` for `b >= 0`.
fn sup_shifted_gaussian(b: f64) -> f64 {
    let f = |x: f64| (x + 1.0) * (-(x / 2.0 - b).powi(2) / 2.0).exp();
    let hi = 2.0 * b + 40.0;
    let steps = 200_000;
    (0..=steps)
        .map(|i| f(hi * i as f64 / steps as f64))
        .fold(0.0, f64::max)
}

/// Evaluates every constant of the Berry-Esseen bound from model bounds.
pub fn constant_set(b: &Bounds) -> Result<ConstantSet> {
    let all = [
        b.c1_tilde, b.c1, b.c2, b.c3_tilde, b.c3, b.c4, b.c5, b.c5_tilde, b.c6, b.eta0,
    ];
    if all.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Hypothesis(format!(
            "all bounds must be positive and finite: {b:?}"
        )));
    }
    if b.c6 >= 1.0 {
        return Err(Error::Hypothesis(format!("c6 = {} must be < 1", b.c6)));
    }
    let eta = (2.0 / 9.0 * b.c3 * b.c4.powi(3)).min(b.eta0);
    let epsilon = (2.0 / 9.0 * b.c1 * b.c2.powi(3)).min(PI);
    let big_c1 = C0 * (b.c2.powi(3) + b.c4.powi(3)) * smoothing_integral_quadrature() / b.c5_tilde;
    let mc = b.c5.min(1.0);
    let big_c2 = 2.0 / (b.c5_tilde * b.c5)
        * ((2.0 * PI).sqrt() / mc.sqrt() + 2.0 / (mc * epsilon * b.c1_tilde));
    let big_c3 = b.c5 * epsilon * epsilon * b.c1_tilde * b.c1_tilde / 2.0;
    let loeve = 24.0 / (b.c3_tilde * PI * (2.0 * PI).sqrt()) / eta;
    let big_c = big_c1 + big_c2 / big_c3.sqrt() * 0.5f64.sqrt() * (-0.5f64).exp() + loeve;

    let c7 = b.c2.powi(2) * b.c3 * b.c4 / (2.0 * b.c5_tilde) * (2.0 * PI).sqrt() * b.c5.powf(-1.5);
    let c8_second = b.c2.powi(4) * b.c3.powi(2) * b.c4.powi(2) / (4.0 * b.c5_tilde)
        * 0.75
        * PI.sqrt()
        * (3.0 / b.c5).powf(2.5);
    let c8_third = b.c3 / b.c5_tilde * (1.0 + b.c2 * b.c4.powi(2)) * 2.0 / b.c5;
    let c8 = c7 + c8_second + c8_third;

    let k = (c8 / b.c3_tilde).max(c7 / b.c3_tilde);
    let big_c_tilde = big_c + k * sup_shifted_gaussian(c7 / b.c3_tilde);

    let n0 = 3f64.max(b.c2.powi(6)).max(b.c4.powi(6)).ceil() as u64;
    let n0_tilde = n0.max((4.0 * c8 * c8 / (b.c3_tilde * b.c3_tilde)).ceil() as u64);
    Ok(ConstantSet {
        bounds: *b,
        eta,
        epsilon,
        c0: C0,
        big_c1,
        big_c2,
        big_c3,
        big_c,
        c7,
        c8_second,
        c8_third,
        c8,
        big_c_tilde,
        n0,
        n0_tilde,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub hypothesis: String,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisAudit {
    pub moments: Moments,
    pub moments_y_prime: Moments,
    /// Bounds with the response constants taken from `Y'`; these feed the
    /// constants.
    pub bounds: Bounds,
    /// Bounds with the response constants taken from the original `Y`.
    pub bounds_original_y: Bounds,
    pub k_offset: f64,
    /// `τ² - c̃² (1 - c6²)` with `c̃` read as `c̃3` and as `c̃1`.
    pub tau_margin_c3_reading: f64,
    pub tau_margin_c1_reading: f64,
    pub lemma_sigma_floor: f64,
    pub l1: f64,
    pub l2: f64,
    pub envelope: EnvelopeReport,
    pub violations: Vec<Violation>,
}

/// Tightest bounds for the given model and conditioning.
pub fn hypothesis_audit(
    model: &ModelSpec,
    cond: &ConditioningSpec,
    eta0: f64,
) -> Result<HypothesisAudit> {
    let mo = model.moments()?;
    if !(mo.sigma_x > 0.0) {
        return Err(Error::Degenerate("σ_X = 0".into()));
    }
    let yp = model.y_prime()?;
    let mp = yp.moments()?;
    let envelope = cf_envelope_check(&yp, eta0, EnvelopeGrid::default())?;
    let llt = llt_check(model, cond)?;
    let nf = cond.n_summands as f64;
    let c5_tilde = 2.0 * PI * llt.p_exact * mo.sigma_x * nf.sqrt();
    let c2 = mo.rho_x.cbrt() / mo.sigma_x;
    let bounds = Bounds {
        c1_tilde: mo.sigma_x,
        c1: mo.sigma_x,
        c2,
        c3_tilde: mp.sigma_y,
        c3: mp.sigma_y,
        c4: mp.rho_y.cbrt() / mp.sigma_y,
        c5: envelope.c5_hat,
        c5_tilde,
        c6: mo.r.abs(),
        eta0,
    };
    let bounds_original_y = Bounds {
        c3_tilde: mo.sigma_y,
        c3: mo.sigma_y,
        c4: mo.rho_y.cbrt() / mo.sigma_y,
        ..bounds
    };
    let tau2 = mo.tau * mo.tau;
    let c6sq = 1.0 - bounds.c6 * bounds.c6;
    let tau_margin_c3 = tau2 - bounds_original_y.c3_tilde.powi(2) * c6sq;
    let tau_margin_c1 = tau2 - bounds.c1_tilde.powi(2) * c6sq;
    let sigma_floor = 1.0 / (4.0 * c2.powi(3));
    let l1 = mo.rho_x / mo.sigma_x.powi(3) / nf.sqrt();
    let l2 = mp.rho_y / mp.sigma_y.powi(3) / nf.sqrt();

    let mut violations = Vec::new();
    let mut flag = |h: &str, d: String| {
        violations.push(Violation {
            hypothesis: h.into(),
            detail: d,
        })
    };
    if !(mp.sigma_y > 0.0) {
        flag("response variance", "σ_Y' = 0".into());
    }
    if bounds.c6 >= 1.0 {
        flag("correlation", format!("|r| = {} >= 1", bounds.c6));
    }
    if mo.sigma_x < sigma_floor {
        flag(
            "third moment of X",
            format!("σ_X = {} < (4 c2³)^-1 = {sigma_floor}", mo.sigma_x),
        );
    }
    if envelope.grid_violations > 0 {
        flag(
            "characteristic function envelope",
            format!("{} grid samples violate", envelope.grid_violations),
        );
    }
    let tau_slack = 1e-12 * tau2.max(f64::MIN_POSITIVE);
    if tau_margin_c3 < -tau_slack {
        flag(
            "τ floor (c̃ read as c̃3)",
            format!("τ² - c̃3²(1-c6²) = {tau_margin_c3}"),
        );
    }
    if tau_margin_c1 < -tau_slack {
        flag(
            "τ floor (c̃ read as c̃1)",
            format!("τ² - c̃1²(1-c6²) = {tau_margin_c1}"),
        );
    }
    if l1 > 1.0 || l2 > 1.0 {
        flag(
            "smoothing region",
            format!("l1 = {l1}, l2 = {l2} must be <= 1"),
        );
    }
    Ok(HypothesisAudit {
        moments: mo,
        moments_y_prime: mp,
        bounds,
        bounds_original_y,
        k_offset: llt.v_n.abs(),
        tau_margin_c3_reading: tau_margin_c3,
        tau_margin_c1_reading: tau_margin_c1,
        lemma_sigma_floor: sigma_floor,
        l1,
        l2,
        envelope,
        violations,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentGaps {
    pub exact_mean: f64,
    pub exact_var: f64,
    pub mean_pred: f64,
    pub var_pred: f64,
    pub mean_gap: f64,
    pub var_gap: f64,
    pub c7: f64,
    pub c8_sqrt_n: f64,
    pub mean_within_c7: bool,
    pub var_within_c8: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BerryEsseenReport {
    #[serde(rename = "N")]
    pub n_summands: u64,
    pub m: i64,
    pub bounds: Bounds,
    pub violations: Vec<Violation>,
    pub constants: ConstantSet,
    pub constants_original_y: Option<ConstantSet>,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "D_times_sqrtN")]
    pub d_times_sqrt_n: f64,
    /// Distance after standardizing by the exact conditional moments.
    #[serde(rename = "D_exact_moments")]
    pub d_exact_moments: f64,
    pub moment_gaps: MomentGaps,
    pub audit: HypothesisAudit,
}

/// Full report on an exactly computable conditional law.
pub fn berry_esseen_report(
    model: &ModelSpec,
    cond: &ConditioningSpec,
    eta0: f64,
) -> Result<BerryEsseenReport> {
    let audit = hypothesis_audit(model, cond, eta0)?;
    let constants = constant_set(&audit.bounds)?;
    let constants_original_y = constant_set(&audit.bounds_original_y).ok();
    let law = exact_conditional_law(model, cond)?.law;
    let (mean_pred, var_pred) = predicted_moments_from(&audit.moments, cond);
    let d = kolmogorov_distance(&law, mean_pred, var_pred.sqrt())?;
    let exact_mean = law.mean();
    let exact_var = law.variance();
    let d_exact = kolmogorov_distance(&law, exact_mean, exact_var.sqrt())?;
    let nf = cond.n_summands as f64;
    let mean_gap = (exact_mean - mean_pred).abs();
    let var_gap = (exact_var - var_pred).abs();
    Ok(BerryEsseenReport {
        n_summands: cond.n_summands,
        m: cond.m,
        bounds: audit.bounds,
        violations: audit.violations.clone(),
        constants,
        constants_original_y,
        d,
        d_times_sqrt_n: d * nf.sqrt(),
        d_exact_moments: d_exact,
        moment_gaps: MomentGaps {
            exact_mean,
            exact_var,
            mean_pred,
            var_pred,
            mean_gap,
            var_gap,
            c7: constants.c7,
            c8_sqrt_n: constants.c8 * nf.sqrt(),
            mean_within_c7: mean_gap <= constants.c7,
            var_within_c8: var_gap <= constants.c8 * nf.sqrt(),
        },
        audit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_mass_distance() {
        assert_eq!(
            kolmogorov_distance(&Pmf::point_mass(3), 3.0, 1.0).unwrap(),
            0.5
        );
    }

    #[test]
    fn smoothing_integral_agrees() {
        let a = smoothing_integral_closed_form();
        let b = smoothing_integral_quadrature();
        assert!(((a - b) / a).abs() < 1e-8, "{a} vs {b}");
    }

    #[test]
    fn gaussian_integrals_agree() {
        for c in [0.1, 1.0, 2.5] {
            for g in gaussian_integrals(c).unwrap() {
                assert!(
                    ((g.closed_form - g.quadrature) / g.closed_form).abs() < 1e-8,
                    "{c} {}",
                    g.name
                );
            }
        }
    }

    #[test]
    fn rejects_bad_bounds() {
        let b = Bounds {
            c1_tilde: 1.0,
            c1: 1.0,
            c2: 1.0,
            c3_tilde: 1.0,
            c3: 1.0,
            c4: 1.0,
            c5: 0.1,
            c5_tilde: 0.5,
            c6: 1.0,
            eta0: 1.0,
        };
        assert!(constant_set(&b).is_err());
        assert!(constant_set(&Bounds {
            c6: 0.5,
            c5: 0.0,
            ..b
        })
        .is_err());
    }
}
