//! Tail behaviour of the hashing model: Borel and displacement tails, the
//! combinatorial lower bound for long blocks, and a Monte Carlo view of the
//! single-big-jump mechanism behind conditional large deviations.

use std::io::Write;

use serde::Serialize;

use crate::conditional::rejection_sample_chunked;
use crate::distributions::{borel_kappa, ln_borel_pmf, ln_borel_tail_bound};
use crate::error::{Error, Result};
use crate::exact::{
    displacement_law, expected_displacement, ConditioningSpec, DISPLACEMENT_DP_MAX,
};
use crate::model::{ModelSpec, Response, XLaw};
use crate::numeric::{fmt_f64, ln_factorial, log_add_exp};

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Exponents {
    pub mu: f64,
    pub kappa: f64,
    /// `κ√2`, the rate the upper-bound argument actually delivers.
    pub alpha_proof: f64,
    /// `(1 + ln µ - µ)√2` as stated; negative on `(0,1)`.
    pub alpha_stated: f64,
    /// `4 + ln 2 + 2 ln µ - 2µ` as stated.
    pub beta_stated: f64,
    pub alpha_stated_negative: bool,
}

pub fn exponents(mu: f64) -> Result<Exponents> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::Parameter(format!("mu={mu} outside (0,1)")));
    }
    let kappa = borel_kappa(mu);
    let alpha_stated = (1.0 + mu.ln() - mu) * std::f64::consts::SQRT_2;
    Ok(Exponents {
        mu,
        kappa,
        alpha_proof: kappa * std::f64::consts::SQRT_2,
        alpha_stated,
        beta_stated: 4.0 + 2f64.ln() + 2.0 * mu.ln() - 2.0 * mu,
        alpha_stated_negative: alpha_stated < 0.0,
    })
}

/// `ln P(X >= l)` for Borel `X`, with an upper bound on the neglected part.
pub fn ln_borel_tail(mu: f64, l: u64) -> Result<(f64, f64)> {
    if l <= 1 {
        ln_borel_pmf(mu, 1)?;
        return Ok((0.0, 0.0));
    }
    let mut acc = f64::NEG_INFINITY;
    let mut k = l;
    loop {
        let t = ln_borel_pmf(mu, k)?;
        acc = log_add_exp(acc, t);
        k += 1;
        if t < acc - 40.0 {
            break;
        }
    }
    let rem = ln_borel_tail_bound(mu, k)?;
    Ok((log_add_exp(acc, rem), (rem - acc).exp()))
}

#[derive(Debug, Clone, Serialize)]
pub struct XTailRow {
    pub l: u64,
    pub p: f64,
    pub ln_p: f64,
    /// Relative size of the analytic remainder that was added.
    pub remainder: f64,
    pub exponent: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct XTailReport {
    pub mu: f64,
    pub kappa: f64,
    pub rows: Vec<XTailRow>,
}

/// `-ln P(X >= l)/l` along `l_grid`, to be compared with `κ`.
pub fn x_tail_check(mu: f64, l_grid: &[u64]) -> Result<XTailReport> {
    if l_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Input("l grid must be increasing".into()));
    }
    let rows = l_grid
        .iter()
        .map(|&l| {
            let (ln_p, remainder) = ln_borel_tail(mu, l)?;
            Ok(XTailRow {
                l,
                p: ln_p.exp(),
                ln_p,
                remainder,
                exponent: if l == 0 { 0.0 } else { -ln_p / l as f64 },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(XTailReport {
        mu,
        kappa: borel_kappa(mu),
        rows,
    })
}

/// `⌈√(2u + 1/4) + 3/2⌉`, the shortest block that can reach displacement `u`.
pub fn n_u(u: f64) -> u64 {
    ((2.0 * u + 0.25).sqrt() + 1.5).ceil() as u64
}

/// `ln((l-1)! / (2^k l^{l-1}))`.
fn ln_construction_bound(l: u64, k: u64) -> f64 {
    ln_factorial(l - 1) - k as f64 * 2f64.ln() - (l - 1) as f64 * (l as f64).ln()
}

#[derive(Debug, Clone, Serialize)]
pub struct HashBound {
    pub a: u64,
    pub l: u64,
    pub k: u64,
    /// Displacement `k(l-1-k)` the construction actually reaches.
    pub threshold: u64,
    pub bound: f64,
    pub ln_bound: f64,
    pub exact_at_threshold: Option<f64>,
    pub exact_at_a: Option<f64>,
    pub holds_at_threshold: Option<bool>,
    pub holds_at_a: Option<bool>,
}

/// `l = 1 + ⌈√a⌉`, `k = ⌊√a⌋` and the bound `(l-1)!/(2^k l^{l-1})`, checked
/// against the exact law of `d_{l,l-1}` when it is available.
pub fn hash_lower_bound(a: u64) -> Result<HashBound> {
    if a == 0 {
        return Err(Error::Input("a must be positive".into()));
    }
    let k = a.isqrt();
    let l = 1 + if k * k == a { k } else { k + 1 };
    let threshold = k * (l - 1).saturating_sub(k);
    let ln_bound = ln_construction_bound(l, k);
    let bound = ln_bound.exp();
    let (exact_at_threshold, exact_at_a) = if l <= DISPLACEMENT_DP_MAX {
        let law = displacement_law(l)?;
        (
            Some(law.upper_tail(threshold as i64)),
            Some(law.upper_tail(a as i64)),
        )
    } else {
        (None, None)
    };
    let slack = 1e-12;
    Ok(HashBound {
        a,
        l,
        k,
        threshold,
        bound,
        ln_bound,
        exact_at_threshold,
        exact_at_a,
        holds_at_threshold: exact_at_threshold.map(|p| p >= bound * (1.0 - slack)),
        holds_at_a: exact_at_a.map(|p| p >= bound * (1.0 - slack)),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct YTailRow {
    pub u: f64,
    pub n_u: u64,
    pub p_exact: Option<f64>,
    /// Mass of blocks longer than the exact laws cover.
    pub p_exact_remainder: Option<f64>,
    pub p_upper: f64,
    pub p_lower: f64,
    /// Block length and `k` of the best single construction term.
    pub lower_l: u64,
    pub lower_k: u64,
    pub exp_exact: Option<f64>,
    pub exp_upper: f64,
    pub exp_lower: f64,
    pub kappa_sqrt2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct YTailReport {
    pub exponents: Exponents,
    pub exact_l_max: u64,
    pub rows: Vec<YTailRow>,
}

impl YTailReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "u,p_exact,p_upper,p_lower,exp_exact,exp_upper,exp_lower,kappa_sqrt2"
        )?;
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                fmt_f64(r.u),
                opt(r.p_exact),
                fmt_f64(r.p_upper),
                fmt_f64(r.p_lower),
                opt(r.exp_exact),
                fmt_f64(r.exp_upper),
                fmt_f64(r.exp_lower),
                fmt_f64(r.kappa_sqrt2)
            )?;
        }
        Ok(())
    }
}

/// Best single term `P(X = l)(l-1)!/(2^k l^{l-1})` over constructions with
/// `k(l-1-k) >= u`, as `(ln value, l, k)`.
fn best_lower_term(mu: f64, u: f64) -> Result<(f64, u64, u64)> {
    let start = n_u(u).max(2);
    let mut best = (f64::NEG_INFINITY, start, 0);
    for l in start..start * 4 + 64 {
        // smallest k with k(l-1-k) >= u; k(l-1-k) is maximal at k = (l-1)/2
        let half = (l - 1) / 2;
        if ((half * (l - 1 - half)) as f64) < u {
            continue;
        }
        let mut lo = 0u64;
        let mut hi = half;
        while lo < hi {
            let mid = (lo + hi) / 2;
            if ((mid * (l - 1 - mid)) as f64) >= u {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let v = ln_borel_pmf(mu, l)? + ln_construction_bound(l, lo);
        if v > best.0 {
            best = (v, l, lo);
        }
    }
    Ok(best)
}

/// Upper bound `P(X >= n_u)`, construction lower bound, and the exact tail
/// `Σ_l P(X=l) P(d_{l,l-1} >= u)` over blocks up to `exact_l_max`.
pub fn y_tail_bracket(mu: f64, u_grid: &[f64], exact_l_max: u64) -> Result<YTailReport> {
    let ex = exponents(mu)?;
    if u_grid.iter().any(|u| !(*u > 0.0)) {
        return Err(Error::Input("u grid must be positive".into()));
    }
    let exact_l_max = exact_l_max.min(DISPLACEMENT_DP_MAX);
    let rows = u_grid
        .iter()
        .map(|&u| {
            let nu = n_u(u);
            let (ln_upper, _) = ln_borel_tail(mu, nu)?;
            let (ln_lower, lower_l, lower_k) = best_lower_term(mu, u)?;
            let (p_exact, p_exact_remainder) = if nu <= exact_l_max {
                let mut acc = 0.0;
                for l in nu..=exact_l_max {
                    acc += ln_borel_pmf(mu, l)?.exp()
                        * displacement_law(l)?.upper_tail(u.ceil() as i64);
                }
                let rem = ln_borel_tail(mu, exact_l_max + 1)?.0.exp();
                if rem <= 1e-6 * acc {
                    (Some(acc), Some(rem))
                } else {
                    (None, Some(rem))
                }
            } else {
                (None, None)
            };
            let s = u.sqrt();
            Ok(YTailRow {
                u,
                n_u: nu,
                p_exact,
                p_exact_remainder,
                p_upper: ln_upper.exp(),
                p_lower: ln_lower.exp(),
                lower_l,
                lower_k,
                exp_exact: p_exact.map(|p| -p.ln() / s),
                exp_upper: -ln_upper / s,
                exp_lower: -ln_lower / s,
                kappa_sqrt2: ex.alpha_proof,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(YTailReport {
        exponents: ex,
        exact_l_max,
        rows,
    })
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * nf)) / (1.0 + z2 / nf);
    let half = z / (1.0 + z2 / nf) * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct McTailReport {
    #[serde(rename = "N")]
    pub n_summands: u64,
    pub m: i64,
    pub y: f64,
    pub seed: u64,
    pub attempts: u64,
    pub accepted: u64,
    pub centre: f64,
    pub centre_is_exact: bool,
    pub threshold: f64,
    pub exceedances: u64,
    pub p_hat: f64,
    pub p_low: f64,
    pub p_high: f64,
    /// Fraction of exceedances with some single `Y_i >= N y`.
    pub single_jump_fraction: Option<f64>,
    /// `(1/√N) ln P` at the estimate and at the Wilson endpoints.
    pub normalized: Option<f64>,
    pub normalized_low: f64,
    pub normalized_high: f64,
    pub bracket_low: f64,
    pub bracket_high: f64,
    pub within_bracket: Option<bool>,
    /// True when `N y` exceeds the largest possible deviation, in which case
    /// the probability is exactly zero and nothing was sampled.
    pub impossible: bool,
}

fn hashing_mu(model: &ModelSpec) -> Option<f64> {
    match (&model.x, &model.response, &model.projection) {
        (XLaw::Borel { mu }, Response::Displacement, None) => Some(*mu),
        _ => None,
    }
}

/// Largest attainable `T` given `S_N = m`, when known in closed form.
fn max_total(model: &ModelSpec, cond: &ConditioningSpec) -> Option<f64> {
    match (&model.response, &model.projection) {
        (Response::Displacement, None) if matches!(model.x, XLaw::Borel { .. }) => {
            let n = (cond.m - cond.n_summands as i64) as f64;
            Some(n * (n - 1.0) / 2.0)
        }
        (Response::Indicator { .. }, None) => Some(cond.n_summands as f64),
        _ => None,
    }
}

/// Monte Carlo estimate of `P(T - E[T|S=m] >= N y | S = m)` and the share of
/// exceedances carried by one large summand.
pub fn tail_mc_decomposition(
    model: &ModelSpec,
    cond: &ConditioningSpec,
    y: f64,
    seed: u64,
    attempts: u64,
    chunk_size: u64,
) -> Result<McTailReport> {
    if !(y > 0.0) {
        return Err(Error::Input("y must be positive".into()));
    }
    let nf = cond.n_summands as f64;
    let z = nf * y;
    let mu = hashing_mu(model);
    let exact_centre = mu.and_then(|_| {
        let n = cond.m - cond.n_summands as i64;
        (n >= 1).then(|| expected_displacement(cond.m as u64, n as u64))
    });
    let (beta, alpha) = match mu {
        Some(mu) => {
            let ex = exponents(mu)?;
            (ex.beta_stated, ex.alpha_proof)
        }
        None => (f64::NAN, f64::NAN),
    };
    let bracket_low = -beta * y.sqrt();
    let bracket_high = -alpha * y.sqrt();
    if let (Some(c), Some(t_max)) = (exact_centre, max_total(model, cond)) {
        if c + z > t_max {
            return Ok(McTailReport {
                n_summands: cond.n_summands,
                m: cond.m,
                y,
                seed,
                attempts: 0,
                accepted: 0,
                centre: c,
                centre_is_exact: true,
                threshold: c + z,
                exceedances: 0,
                p_hat: 0.0,
                p_low: 0.0,
                p_high: 0.0,
                single_jump_fraction: None,
                normalized: None,
                normalized_low: f64::NEG_INFINITY,
                normalized_high: f64::NEG_INFINITY,
                bracket_low,
                bracket_high,
                within_bracket: None,
                impossible: true,
            });
        }
    }
    let batch = rejection_sample_chunked(
        model,
        cond,
        attempts.max(1),
        Some(attempts),
        seed,
        chunk_size,
    )?;
    if batch.accepted == 0 {
        return Err(Error::Input(format!(
            "no acceptances in {attempts} attempts"
        )));
    }
    let centre = exact_centre.unwrap_or_else(|| batch.mean());
    let threshold = centre + z;
    let mut exceed = 0u64;
    let mut single = 0u64;
    for (&t, &top) in batch.values.iter().zip(&batch.max_summands) {
        if t as f64 >= threshold {
            exceed += 1;
            if top as f64 >= z {
                single += 1;
            }
        }
    }
    let (p_low, p_high) = wilson_interval(exceed, batch.accepted, Z95);
    let p_hat = exceed as f64 / batch.accepted as f64;
    let norm = |p: f64| p.ln() / nf.sqrt();
    let normalized_low = norm(p_low);
    let normalized_high = norm(p_high);
    let within_bracket =
        mu.map(|_| normalized_high >= bracket_low && normalized_low <= bracket_high);
    Ok(McTailReport {
        n_summands: cond.n_summands,
        m: cond.m,
        y,
        seed,
        attempts: batch.attempts,
        accepted: batch.accepted,
        centre,
        centre_is_exact: exact_centre.is_some(),
        threshold,
        exceedances: exceed,
        p_hat,
        p_low,
        p_high,
        single_jump_fraction: (exceed > 0).then(|| single as f64 / exceed as f64),
        normalized: (exceed > 0).then(|| norm(p_hat)),
        normalized_low,
        normalized_high,
        bracket_low,
        bracket_high,
        within_bracket: if exceed > 0 { within_bracket } else { None },
        impossible: false,
    })
}
