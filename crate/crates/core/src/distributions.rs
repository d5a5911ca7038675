//! Borel, Poisson and geometric laws, their truncated tables, and samplers.

use crate::error::{Error, Result};
use crate::numeric::ln_factorial;
use crate::pmf::Pmf;
use crate::probing::total_displacement_raw;
use crate::rng::RngStream;

/// Residual mass allowed outside truncated tables of infinite-support laws.
pub const DEFAULT_TRUNCATION: f64 = 1e-15;

fn check_mu(mu: f64) -> Result<()> {
    if mu > 0.0 && mu < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "Borel parameter mu={mu} outside (0,1)"
        )))
    }
}

/// Tail exponent of the Borel law, `mu - ln(mu) - 1`.
pub fn borel_kappa(mu: f64) -> f64 {
    mu - mu.ln() - 1.0
}

pub fn ln_borel_pmf(mu: f64, l: u64) -> Result<f64> {
    check_mu(mu)?;
    if l == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    let lf = l as f64;
    Ok(-mu * lf + (lf - 1.0) * (mu * lf).ln() - ln_factorial(l))
}

/// P(X = l) = e^{-mu l} (mu l)^{l-1} / l!, evaluated in log space.
pub fn borel_pmf(mu: f64, l: u64) -> Result<f64> {
    ln_borel_pmf(mu, l).map(f64::exp)
}

pub fn borel_mean(mu: f64) -> f64 {
    1.0 / (1.0 - mu)
}

pub fn borel_variance(mu: f64) -> f64 {
    mu / (1.0 - mu).powi(3)
}

/// Upper bound on P(X >= l): consecutive pmf ratios never exceed e^{-kappa}.
pub fn ln_borel_tail_bound(mu: f64, l: u64) -> Result<f64> {
    let lp = ln_borel_pmf(mu, l.max(1))?;
    Ok(lp - (-(-borel_kappa(mu)).exp_m1()).ln())
}

/// Smallest `L` with P(X >= L) < eps by the ratio bound.
pub fn borel_truncation_point(mu: f64, eps: f64) -> Result<u64> {
    check_mu(mu)?;
    let target = eps.ln();
    let mut l = 1u64;
    // the pmf is unimodal at l=1 for mu<1, so the bound decreases monotonically
    while ln_borel_tail_bound(mu, l)? >= target {
        l += 1;
        if l > 100_000_000 {
            return Err(Error::TooLarge(format!("Borel truncation for mu={mu}")));
        }
    }
    Ok(l)
}

/// Borel law on `1..L` where the mass beyond `L` is below `eps`.
pub fn borel_law(mu: f64, eps: f64) -> Result<Pmf> {
    let l = borel_truncation_point(mu, eps)?;
    let tail = ln_borel_tail_bound(mu, l)?.exp();
    let pairs = (1..l).map(|k| (k as i64, borel_pmf(mu, k).unwrap()));
    Pmf::from_pairs(pairs, tail)
}

/// Borel law cut at an explicit last value `l_max`; the truncation mass is
/// the analytic tail bound beyond it.
pub fn borel_law_capped(mu: f64, l_max: u64) -> Result<Pmf> {
    check_mu(mu)?;
    let tail = ln_borel_tail_bound(mu, l_max + 1)?.exp();
    Pmf::from_pairs(
        (1..=l_max).map(|k| (k as i64, borel_pmf(mu, k).unwrap())),
        tail,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StandardLaw {
    Poisson {
        lambda: f64,
    },
    /// Support `{0, 1, ...}`, P(k) = p (1-p)^k.
    Geometric {
        p: f64,
    },
}

impl StandardLaw {
    fn check(&self) -> Result<()> {
        match *self {
            StandardLaw::Poisson { lambda } if lambda > 0.0 && lambda.is_finite() => Ok(()),
            StandardLaw::Geometric { p } if p > 0.0 && p < 1.0 => Ok(()),
            other => Err(Error::Parameter(format!("{other:?}"))),
        }
    }

    pub fn ln_pmf(&self, k: i64) -> Result<f64> {
        self.check()?;
        if k < 0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(match *self {
            StandardLaw::Poisson { lambda } => {
                -lambda + k as f64 * lambda.ln() - ln_factorial(k as u64)
            }
            StandardLaw::Geometric { p } => p.ln() + k as f64 * (-p).ln_1p(),
        })
    }

    pub fn mean(&self) -> f64 {
        match *self {
            StandardLaw::Poisson { lambda } => lambda,
            StandardLaw::Geometric { p } => (1.0 - p) / p,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            StandardLaw::Poisson { lambda } => lambda,
            StandardLaw::Geometric { p } => (1.0 - p) / (p * p),
        }
    }

    /// Upper bound on P(X >= k): Chernoff for Poisson, exact for geometric.
    pub fn ln_tail_bound(&self, k: i64) -> f64 {
        match *self {
            StandardLaw::Poisson { lambda } => {
                let kf = k as f64;
                if kf <= lambda {
                    0.0
                } else {
                    -lambda + kf * (lambda.ln() + 1.0 - kf.ln())
                }
            }
            StandardLaw::Geometric { p } => k.max(0) as f64 * (-p).ln_1p(),
        }
    }

    /// Table on `0..K` with mass beyond `K` below `eps`.
    pub fn law(&self, eps: f64) -> Result<Pmf> {
        self.check()?;
        let target = eps.ln();
        let mut k = 1i64;
        while self.ln_tail_bound(k) >= target {
            k += 1;
        }
        let tail = self.ln_tail_bound(k).exp();
        Pmf::from_pairs((0..k).map(|j| (j, self.ln_pmf(j).unwrap().exp())), tail)
    }
}

pub fn standard_pmf(law: StandardLaw, k: i64) -> Result<f64> {
    law.ln_pmf(k).map(f64::exp)
}

/// Inversion sampler over a finite table. Residual mass (truncation and
/// rounding) is folded into the last atom.
#[derive(Debug, Clone)]
pub struct TableSampler {
    values: Vec<i64>,
    cdf: Vec<f64>,
}

impl TableSampler {
    pub fn new(law: &Pmf) -> Result<Self> {
        if law.is_empty() {
            return Err(Error::Input("cannot sample an empty table".into()));
        }
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = law
            .probs()
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        *cdf.last_mut().unwrap() = f64::INFINITY;
        Ok(Self {
            values: law.support().to_vec(),
            cdf,
        })
    }

    #[inline]
    pub fn sample(&self, rng: &mut RngStream) -> i64 {
        let u = rng.uniform();
        let i = self.cdf.partition_point(|&c| c <= u);
        self.values[i]
    }
}

/// Exact Borel sampler by inversion on the table truncated where the tail
/// bound drops below 1e-12.
#[derive(Debug, Clone)]
pub struct BorelSampler {
    inner: TableSampler,
}

impl BorelSampler {
    pub fn new(mu: f64) -> Result<Self> {
        let law = borel_law(mu, 1e-12)?;
        Ok(Self {
            inner: TableSampler::new(&law)?,
        })
    }

    pub fn sample(&self, rng: &mut RngStream) -> u64 {
        self.inner.sample(rng) as u64
    }
}

pub fn borel_sample(mu: f64, rng: &mut RngStream) -> Result<u64> {
    Ok(BorelSampler::new(mu)?.sample(rng))
}

/// Sampler for d_{l,l-1}: throws `l-1` uniform balls into `l` urns.
#[derive(Debug, Default, Clone)]
pub struct DisplacementSampler {
    addresses: Vec<usize>,
    scratch: Vec<bool>,
}

impl DisplacementSampler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sample(&mut self, l: u64, rng: &mut RngStream) -> u64 {
        if l <= 2 {
            return 0;
        }
        let l = l as usize;
        self.addresses.clear();
        for _ in 0..l - 1 {
            self.addresses.push(rng.below(l as u64) as usize);
        }
        self.scratch.resize(l, false);
        total_displacement_raw(&self.addresses, &mut self.scratch[..l])
    }
}

pub fn displacement_sample(l: u64, rng: &mut RngStream) -> u64 {
    DisplacementSampler::new().sample(l, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::kahan_sum;

    fn direct_borel(mu: f64, l: u64) -> f64 {
        let fact: f64 = (1..=l).map(|k| k as f64).product();
        (-mu * l as f64).exp() * (mu * l as f64).powi(l as i32 - 1) / fact
    }

    #[test]
    fn borel_small_values() {
        assert!((borel_pmf(0.5, 1).unwrap() - 0.606_530_659_712_633_4).abs() < 1e-15);
        assert!((borel_pmf(0.5, 2).unwrap() - 0.183_939_720_585_721_2).abs() < 1e-15);
    }

    #[test]
    fn borel_log_space_matches_direct() {
        for &mu in &[0.1, 0.3, 0.5, 0.8, 0.95] {
            for l in 1..=20 {
                let a = borel_pmf(mu, l).unwrap();
                let b = direct_borel(mu, l);
                assert!(((a - b) / b).abs() < 1e-12, "mu={mu} l={l}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn borel_large_l_finite() {
        let p = borel_pmf(0.5, 1_000_000).unwrap();
        assert!(p >= 0.0 && p.is_finite());
        assert!(ln_borel_pmf(0.5, 1_000_000).unwrap().is_finite());
    }

    #[test]
    fn borel_rejects_mu() {
        assert!(borel_pmf(1.0, 1).is_err());
        assert!(borel_pmf(0.0, 1).is_err());
    }

    #[test]
    fn borel_mean_by_summation() {
        let law = borel_law(0.5, 1e-16).unwrap();
        let mean = kahan_sum(law.iter().map(|(l, p)| l as f64 * p));
        assert!((mean - 2.0).abs() < 1e-9);
        assert!(law.is_full_law(1e-12));
        let var = kahan_sum(law.iter().map(|(l, p)| (l as f64 - 2.0).powi(2) * p));
        assert!((var - borel_variance(0.5)).abs() < 1e-9);
    }

    #[test]
    fn truncation_bound_dominates_tail() {
        let mu = 0.5;
        let l = borel_truncation_point(mu, 1e-12).unwrap();
        let tail = kahan_sum((l..l + 2000).map(|k| borel_pmf(mu, k).unwrap()));
        assert!(tail < 1e-12);
        assert!(ln_borel_tail_bound(mu, l).unwrap().exp() >= tail);
    }

    #[test]
    fn standard_values() {
        let pois = StandardLaw::Poisson { lambda: 1.0 };
        assert!((standard_pmf(pois, 0).unwrap() - 0.36787944117144233).abs() < 1e-15);
        let geo = StandardLaw::Geometric { p: 0.5 };
        assert_eq!(standard_pmf(geo, 0).unwrap(), 0.5);
        let s = kahan_sum((0..=40).map(|k| standard_pmf(pois, k).unwrap()));
        assert!((s - 1.0).abs() < 1e-12);
        assert!(standard_pmf(StandardLaw::Poisson { lambda: -1.0 }, 0).is_err());
        assert!(standard_pmf(StandardLaw::Geometric { p: 1.0 }, 0).is_err());
    }

    #[test]
    fn standard_tables_are_full_laws() {
        for law in [
            StandardLaw::Poisson { lambda: 1.0 },
            StandardLaw::Poisson { lambda: 37.5 },
            StandardLaw::Geometric { p: 0.3 },
        ] {
            let t = law.law(1e-15).unwrap();
            assert!(t.is_full_law(1e-12), "{law:?}");
            assert!(t.truncation_mass() < 1e-15);
        }
    }

    #[test]
    fn borel_sampler_moments() {
        let s = BorelSampler::new(0.5).unwrap();
        let mut rng = RngStream::new(11, 0);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| s.sample(&mut rng) as f64).collect();
        assert!(draws.iter().all(|&x| x >= 1.0));
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se_mean = (4.0 / n as f64).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * se_mean, "mean {mean}");
        // SE of the sample variance from the fourth central moment
        let law = borel_law(0.5, 1e-16).unwrap();
        let m4 = kahan_sum(law.iter().map(|(l, p)| (l as f64 - 2.0).powi(4) * p));
        let se_var = ((m4 - 16.0) / n as f64).sqrt();
        assert!((var - 4.0).abs() < 3.0 * se_var, "var {var} se {se_var}");
    }

    #[test]
    fn displacement_sampler_small_l() {
        let mut rng = RngStream::new(5, 0);
        let mut s = DisplacementSampler::new();
        for _ in 0..1000 {
            assert_eq!(s.sample(1, &mut rng), 0);
            assert_eq!(s.sample(2, &mut rng), 0);
        }
        let n = 90_000;
        let ones = (0..n).filter(|_| s.sample(3, &mut rng) == 1).count() as f64;
        let se = (n as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        assert!((ones - n as f64 / 3.0).abs() < 4.0 * se);
    }
}
