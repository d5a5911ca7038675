//! Exact laws: the displacement `d_{m,n}`, N-fold convolutions, conditioned
//! sums `T_N | S_N = m`, and the classical occupancy law.

use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, Response};
use crate::numeric::{kahan_sum, ln_factorial, KahanSum};
use crate::pmf::{DenseAccumulator, Pmf};

/// Largest multiset count the enumeration oracle accepts.
pub const MULTISET_LIMIT: u128 = 100_000_000;

/// Largest block length for which the parking-function recursion is run.
pub const DISPLACEMENT_DP_MAX: u64 = 200;

/// The event `S_N = m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditioningSpec {
    #[serde(rename = "N")]
    pub n_summands: u64,
    pub m: i64,
}

impl ConditioningSpec {
    pub fn new(n_summands: u64, m: i64) -> Result<Self> {
        if n_summands == 0 {
            return Err(Error::Input("N must be at least 1".into()));
        }
        Ok(Self { n_summands, m })
    }
}

fn binomial_u128(n: u128, k: u128) -> Option<u128> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

/// Number of multisets of size `n` from `m` urns.
pub fn multiset_count(m: u64, n: u64) -> Option<u128> {
    if m == 0 {
        return Some((n == 0) as u128);
    }
    binomial_u128(m as u128 + n as u128 - 1, n as u128)
}

/// Total displacement from urn counts: carries around the circle settle
/// after two laps because some urn stays empty (or the table is full and the
/// minimal carry is zero).
fn displacement_from_counts(h: &[u32]) -> u64 {
    let mut carry: u64 = 0;
    for &c in h {
        carry = (carry + c as u64).saturating_sub(1);
    }
    let mut total = 0;
    for &c in h {
        carry = (carry + c as u64).saturating_sub(1);
        total += carry;
    }
    total
}

fn enumerate_counts(
    h: &mut Vec<u32>,
    pos: usize,
    remaining: u32,
    weight: u128,
    acc: &mut Vec<u128>,
) -> Result<()> {
    let m = h.len();
    if pos == m - 1 {
        h[pos] = remaining;
        let d = displacement_from_counts(h) as usize;
        if acc.len() <= d {
            acc.resize(d + 1, 0);
        }
        acc[d] = acc[d]
            .checked_add(weight)
            .ok_or_else(|| Error::TooLarge("sequence count overflow".into()))?;
        return Ok(());
    }
    for c in 0..=remaining {
        h[pos] = c;
        let w = binomial_u128(remaining as u128, c as u128)
            .and_then(|b| b.checked_mul(weight))
            .ok_or_else(|| Error::TooLarge("multinomial overflow".into()))?;
        enumerate_counts(h, pos + 1, remaining - c, w, acc)?;
    }
    Ok(())
}

/// Law of `d_{m,n}` under uniform addresses, by enumerating address
/// multisets weighted by their multinomial coefficients. Counts are exact
/// integers; each probability is one rounding of `count / m^n`.
pub fn exact_displacement_pmf(m: u64, n: u64) -> Result<Pmf> {
    if m == 0 {
        return Err(Error::Input("m must be positive".into()));
    }
    if n > m {
        return Err(Error::Capacity {
            balls: n as usize,
            urns: m as usize,
        });
    }
    match multiset_count(m, n) {
        Some(c) if c <= MULTISET_LIMIT => {}
        _ => {
            return Err(Error::TooLarge(format!(
                "d_{{{m},{n}}}: C(m+n-1, n) exceeds {MULTISET_LIMIT} multisets"
            )))
        }
    }
    if n == 0 || m == 1 {
        return Ok(Pmf::point_mass(0));
    }
    let total = (m as u128)
        .checked_pow(n as u32)
        .ok_or_else(|| Error::TooLarge(format!("{m}^{n} overflows")))?;
    // chunk by the count in urn 1; chunks are reduced in index order
    let chunks: Vec<Result<Vec<u128>>> = (0..=n as u32)
        .into_par_iter()
        .map(|c0| {
            let mut h = vec![0u32; m as usize];
            h[0] = c0;
            let w = binomial_u128(n as u128, c0 as u128)
                .ok_or_else(|| Error::TooLarge("multinomial overflow".into()))?;
            let mut acc = Vec::new();
            enumerate_counts(&mut h, 1, n as u32 - c0, w, &mut acc)?;
            Ok(acc)
        })
        .collect();
    let mut counts: Vec<u128> = Vec::new();
    for chunk in chunks {
        let chunk = chunk?;
        if counts.len() < chunk.len() {
            counts.resize(chunk.len(), 0);
        }
        for (a, b) in counts.iter_mut().zip(chunk) {
            *a += b;
        }
    }
    debug_assert_eq!(counts.iter().sum::<u128>(), total);
    let tf = total as f64;
    Pmf::from_pairs(
        counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(d, &c)| (d as i64, c as f64 / tf)),
        0.0,
    )
}

/// Mean of `d_{m,n}`: `(n/2) (Q0(m, n-1) - 1)` with
/// `Q0(m, k) = sum_j k(k-1)...(k-j+1) / m^j`.
pub fn expected_displacement(m: u64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let k = n - 1;
    let mf = m as f64;
    let mut term = 1.0;
    let mut q = KahanSum::new();
    q.add(1.0);
    for j in 0..k {
        term *= (k - j) as f64 / mf;
        if term == 0.0 {
            break;
        }
        q.add(term);
    }
    0.5 * n as f64 * (q.value() - 1.0)
}

/// Laws of `d_{l,l-1}` for `l = 1..=l_max`.
///
/// Rotating a sequence of `n` addresses in `n+1` urns so the empty urn is
/// last turns it into a parking function of length `n`, and displacement is
/// rotation invariant. A parking function is determined up to order by the
/// urn counts `h_1..h_n` with prefix sums `c_j >= j`; it has
/// `n!/prod(h_j!)` orderings and displacement `sum_j (c_j - j)`. The
/// recursion runs over urns with state `(c, D)` and weight `prod 1/h_j!`, and
/// the law for length `n` is read at urn `n`, count `c = n`.
pub fn parking_displacement_laws(l_max: u64) -> Result<Vec<Pmf>> {
    if l_max == 0 {
        return Ok(Vec::new());
    }
    if l_max > DISPLACEMENT_DP_MAX {
        return Err(Error::TooLarge(format!(
            "d_{{l,l-1}} recursion limited to l <= {DISPLACEMENT_DP_MAX}, asked {l_max}"
        )));
    }
    let nmax = (l_max - 1) as usize;
    let dcap = nmax * nmax.saturating_sub(1) / 2;
    let inv_fact: Vec<f64> = (0..=nmax)
        .map(|h| (-ln_factorial(h as u64)).exp())
        .collect();
    let mut out = vec![Pmf::point_mass(0)];

    // layer[c] holds weights over D for the current urn index j
    let mut layer: Vec<Vec<f64>> = vec![Vec::new(); nmax + 1];
    layer[0] = vec![1.0];
    for j in 0..nmax {
        let next_j = j + 1;
        let next: Vec<Vec<f64>> = (0..=nmax)
            .into_par_iter()
            .map(|c2| {
                if c2 < next_j {
                    return Vec::new();
                }
                let shift = c2 - next_j;
                let mut acc: Vec<f64> = Vec::new();
                for c in j..=c2 {
                    let src = &layer[c];
                    if src.is_empty() {
                        continue;
                    }
                    let w = inv_fact[c2 - c];
                    if w == 0.0 {
                        continue;
                    }
                    let len = (src.len() + shift).min(dcap + 1);
                    if len <= shift {
                        continue;
                    }
                    if acc.len() < len {
                        acc.resize(len, 0.0);
                    }
                    for (a, &s) in acc[shift..len].iter_mut().zip(src) {
                        *a += w * s;
                    }
                }
                for a in acc.iter_mut() {
                    if *a < 1e-290 {
                        *a = 0.0;
                    }
                }
                while acc.last() == Some(&0.0) {
                    acc.pop();
                }
                acc
            })
            .collect();
        layer = next;
        let n = next_j;
        let ln_scale = ln_factorial(n as u64) - (n as f64 - 1.0) * ((n + 1) as f64).ln();
        let row = &layer[n];
        let probs: Vec<f64> = row
            .iter()
            .map(|&w| {
                if w > 0.0 {
                    (w.ln() + ln_scale).exp()
                } else {
                    0.0
                }
            })
            .collect();
        out.push(Pmf::from_dense(0, &probs, 0.0)?);
    }
    Ok(out)
}

static DISPLACEMENT_CACHE: Mutex<Vec<Arc<Pmf>>> = Mutex::new(Vec::new());

/// Cached law of `d_{l,l-1}`.
pub fn displacement_law(l: u64) -> Result<Arc<Pmf>> {
    if l == 0 {
        return Err(Error::Input("block length must be positive".into()));
    }
    let mut cache = DISPLACEMENT_CACHE.lock().unwrap_or_else(|e| e.into_inner());
    if (l as usize) <= cache.len() {
        return Ok(cache[l as usize - 1].clone());
    }
    let target = l
        .div_ceil(32)
        .saturating_mul(32)
        .min(DISPLACEMENT_DP_MAX)
        .max(l);
    let laws = parking_displacement_laws(target)?;
    *cache = laws.into_iter().map(Arc::new).collect();
    Ok(cache[l as usize - 1].clone())
}

/// Probability that `N` i.i.d. copies of `x_law` sum into `[lo, hi]`,
/// tabulated on that range. Partial sums that can no longer reach the range
/// are dropped and their mass added to the truncation mass, together with the
/// mass `x_law` itself leaves out.
pub fn exact_sum_pmf(x_law: &Pmf, n_summands: u64, value_range: (i64, i64)) -> Result<Pmf> {
    if n_summands == 0 {
        return Err(Error::Input("N must be at least 1".into()));
    }
    if x_law.is_empty() {
        return Err(Error::Input("empty summand law".into()));
    }
    let (lo, hi) = value_range;
    if lo > hi {
        return Err(Error::Input(format!("empty range [{lo}, {hi}]")));
    }
    let xmin = x_law.min_value().unwrap();
    let xmax = x_law.max_value().unwrap();
    let n = n_summands as i64;
    let pairs = x_law.pairs();

    let mut dropped = KahanSum::new();
    let mut cur_lo = 0i64;
    let mut cur: Vec<f64> = vec![1.0];
    for i in 1..=n {
        let rest = n - i;
        let keep_lo = (cur_lo + xmin).max(lo - rest * xmax);
        let keep_hi = (cur_lo + cur.len() as i64 - 1 + xmax).min(hi - rest * xmin);
        let mut next = if keep_hi >= keep_lo {
            DenseAccumulator::new(keep_lo, keep_hi)
        } else {
            DenseAccumulator::new(0, -1)
        };
        for (k, &p) in cur.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let s = cur_lo + k as i64;
            for &(x, px) in &pairs {
                let t = s + x;
                if t < keep_lo || t > keep_hi {
                    dropped.add(p * px);
                } else {
                    next.add(t, p * px);
                }
            }
        }
        cur_lo = keep_lo;
        cur = next.values();
    }
    let own = -(n as f64 * (-x_law.truncation_mass()).ln_1p()).exp_m1();
    let trunc = dropped.value() + own;
    Pmf::from_dense(cur_lo, &cur, trunc.max(0.0))
}

/// Law of `T_N` given `S_N = m`, with `P(S_N = m)`.
#[derive(Debug, Clone)]
pub struct ConditionalLaw {
    pub law: Pmf,
    pub p_condition: f64,
}

fn x_range_for(model: &ModelSpec, cond: &ConditioningSpec) -> Result<Pmf> {
    let xmin = model.x.min_support();
    let hi = cond.m - (cond.n_summands as i64 - 1) * xmin;
    if hi < xmin {
        return Err(Error::EmptyCondition {
            n: cond.n_summands as usize,
            m: cond.m,
        });
    }
    model.x.table_upto(hi)
}

/// Exact law of `T_N = sum Y_i` given `S_N = sum X_i = m`.
///
/// Indicator responses use the binomial split on the number of `X_i = k`;
/// other responses go through [`exact_conditional_law_dp`].
pub fn exact_conditional_law(model: &ModelSpec, cond: &ConditioningSpec) -> Result<ConditionalLaw> {
    match model.response {
        Response::Indicator { k } if model.x.min_support() >= 0 && !model.is_projected() => {
            indicator_conditional_law(model, cond, k)
        }
        _ => exact_conditional_law_dp(model, cond),
    }
}

/// The generic recursion over (summands, partial S, partial T).
pub fn exact_conditional_law_dp(
    model: &ModelSpec,
    cond: &ConditioningSpec,
) -> Result<ConditionalLaw> {
    if model.is_projected() {
        return Err(Error::Input(
            "conditional law is defined for the unprojected response; shift by Projection::conditional_shift".into(),
        ));
    }
    let xt = x_range_for(model, cond)?;
    let xmin = xt.min_value().unwrap_or(0);
    let n = cond.n_summands as i64;
    let m = cond.m;
    if n * xmin > m {
        return Err(Error::EmptyCondition { n: n as usize, m });
    }
    let atoms: Vec<(i64, f64, Arc<Pmf>)> = xt
        .iter()
        .filter(|&(_, p)| p > 0.0)
        .map(|(x, p)| model.y_law_given(x).map(|y| (x, p, y)))
        .collect::<Result<_>>()?;
    let ymin = atoms
        .iter()
        .filter_map(|a| a.2.min_value())
        .min()
        .unwrap_or(0);
    if ymin < 0 {
        return Err(Error::Input("negative responses are not supported".into()));
    }

    // states[s - s_lo] is a dense vector over T
    let mut s_lo = 0i64;
    let mut states: Vec<Vec<KahanSum>> = vec![vec![{
        let mut k = KahanSum::new();
        k.add(1.0);
        k
    }]];
    for i in 1..=n {
        let s_hi_next = m - (n - i) * xmin;
        let s_lo_next = s_lo + xmin;
        if s_hi_next < s_lo_next {
            return Err(Error::EmptyCondition { n: n as usize, m });
        }
        let width = (s_hi_next - s_lo_next + 1) as usize;
        let mut next: Vec<Vec<KahanSum>> = vec![Vec::new(); width];
        for (si, tvec) in states.iter().enumerate() {
            let s = s_lo + si as i64;
            if tvec.is_empty() {
                continue;
            }
            for (x, px, ylaw) in &atoms {
                let s2 = s + x;
                if s2 > s_hi_next {
                    break;
                }
                let dst = &mut next[(s2 - s_lo_next) as usize];
                let need = tvec.len() + ylaw.max_value().unwrap_or(0) as usize;
                if dst.len() < need {
                    dst.resize(need, KahanSum::new());
                }
                for (t, pt) in tvec.iter().enumerate() {
                    let pt = pt.value();
                    if pt == 0.0 {
                        continue;
                    }
                    let base = pt * px;
                    for (y, py) in ylaw.iter() {
                        dst[t + y as usize].add(base * py);
                    }
                }
            }
        }
        states = next;
        s_lo = s_lo_next;
    }
    let idx = m - s_lo;
    if idx < 0 || idx as usize >= states.len() {
        return Err(Error::EmptyCondition { n: n as usize, m });
    }
    let row: Vec<f64> = states[idx as usize].iter().map(|k| k.value()).collect();
    finish_conditional(row, n as usize, m)
}

fn finish_conditional(row: Vec<f64>, n: usize, m: i64) -> Result<ConditionalLaw> {
    let p = kahan_sum(row.iter().copied());
    if !(p > 0.0) {
        return Err(Error::EmptyCondition { n, m });
    }
    let probs: Vec<f64> = row.iter().map(|v| v / p).collect();
    Ok(ConditionalLaw {
        law: Pmf::from_dense(0, &probs, 0.0)?,
        p_condition: p,
    })
}

/// `Y = 1{X = k}`: with `J` the number of summands equal to `k`,
/// `P(T = j, S = m) = C(N, j) p^j (1-p)^{N-j} P(B_1 + ... + B_{N-j} = m - jk)`
/// where `B` is `X` conditioned on `X != k`.
fn indicator_conditional_law(
    model: &ModelSpec,
    cond: &ConditioningSpec,
    k: i64,
) -> Result<ConditionalLaw> {
    let n = cond.n_summands as usize;
    let m = cond.m;
    if m < 0 {
        return Err(Error::EmptyCondition { n, m });
    }
    let xt = x_range_for(model, cond)?;
    let pk = model.x.pmf(k);
    let q = 1.0 - pk;
    let b: Vec<(usize, f64)> = xt
        .iter()
        .filter(|&(x, p)| x != k && p > 0.0)
        .map(|(x, p)| (x as usize, p / q))
        .collect();
    let mu = m as usize;
    let ln_pk = pk.ln();
    let ln_q = q.ln();

    let mut row = vec![0.0; n + 1];
    // power[s] = P(B_1 + ... + B_r = s), s <= m
    let mut power = vec![0.0; mu + 1];
    power[0] = 1.0;
    for r in 0..=n {
        let j = n - r;
        let target = m - (j as i64) * k;
        if target >= 0 && (target as usize) <= mu {
            let pb = power[target as usize];
            if pb > 0.0 {
                let ln_w = ln_factorial(n as u64) - ln_factorial(j as u64) - ln_factorial(r as u64)
                    + if j > 0 { j as f64 * ln_pk } else { 0.0 }
                    + if r > 0 { r as f64 * ln_q } else { 0.0 };
                row[j] = (ln_w).exp() * pb;
            }
        }
        if r == n {
            break;
        }
        let mut next = vec![0.0; mu + 1];
        for (s, &ps) in power.iter().enumerate() {
            if ps == 0.0 {
                continue;
            }
            for &(x, px) in &b {
                let t = s + x;
                if t > mu {
                    break;
                }
                next[t] += ps * px;
            }
        }
        for v in next.iter_mut() {
            if *v < 1e-300 {
                *v = 0.0;
            }
        }
        power = next;
    }
    finish_conditional(row, n, m)
}

/// Law of the number of empty urns after `m_balls` uniform throws into
/// `n_urns` urns, by inclusion-exclusion in exact integer arithmetic.
pub fn occupancy_exact_pmf(m_balls: u64, n_urns: u64) -> Result<Pmf> {
    if n_urns == 0 {
        return Err(Error::Input("need at least one urn".into()));
    }
    let too_large = || Error::TooLarge(format!("occupancy with {m_balls} balls in {n_urns} urns"));
    let nn = n_urns as i128;
    let pow = |b: i128| -> Option<i128> { b.checked_pow(u32::try_from(m_balls).ok()?) };
    let total = pow(nn).ok_or_else(too_large)?;
    let binom = |a: i128, b: i128| -> Option<i128> {
        binomial_u128(a as u128, b as u128).and_then(|v| i128::try_from(v).ok())
    };
    let mut pairs = Vec::new();
    for j in 0..=nn {
        let mut acc: i128 = 0;
        for i in 0..=(nn - j) {
            let term = binom(nn - j, i)
                .and_then(|c| pow(nn - j - i).and_then(|p| c.checked_mul(p)))
                .ok_or_else(too_large)?;
            acc = if i % 2 == 0 {
                acc.checked_add(term)
            } else {
                acc.checked_sub(term)
            }
            .ok_or_else(too_large)?;
        }
        let count = binom(nn, j)
            .and_then(|c| c.checked_mul(acc))
            .ok_or_else(too_large)?;
        if count > 0 {
            pairs.push((j as i64, count as f64 / total as f64));
        }
    }
    Pmf::from_pairs(pairs, 0.0)
}
