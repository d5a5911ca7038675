//! Model factory for the classical conditioned-sum examples.
//!
//! | kind            | X                         | Y             | conditioning        |
//! |-----------------|---------------------------|---------------|---------------------|
//! | `hashing`       | Borel(µ), µ = n/m          | d_{X,X-1}     | N = m - n, S = m    |
//! | `occupancy`     | Poisson(λ), λ = m/N        | 1{X = 0}      | S = m balls         |
//! | `bose_einstein` | geometric on {0,1,..}      | 1{X = k}      | S = n balls         |
//! | `branching`     | offspring law, mean 1      | 1{X = 3}      | N = n, S = n - 1    |
//! | `random_forest` | Borel(µ), µe^{-µ} = λ      | 1{X = K}      | N trees, S = m      |

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::ConditioningSpec;
use crate::model::{ModelKind, ModelSpec, Response, XLaw};
use crate::pmf::Pmf;
use crate::rng::RngStream;

/// Offspring law of a critical Galton-Watson tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Offspring {
    /// Poisson(1).
    Poisson,
    /// Geometric(1/2) on {0, 1, ...}.
    Geometric,
    /// P(0) = P(2) = 1/2.
    Binary,
    /// Explicit probabilities of 0, 1, 2, ... children.
    Table(Vec<f64>),
}

impl Offspring {
    pub fn law(&self) -> Result<XLaw> {
        let law = match self {
            Offspring::Poisson => XLaw::Poisson { lambda: 1.0 },
            Offspring::Geometric => XLaw::Geometric { p: 0.5 },
            Offspring::Binary => XLaw::Table {
                pmf: Pmf::from_pairs([(0, 0.5), (2, 0.5)], 0.0)?,
            },
            Offspring::Table(probs) => XLaw::Table {
                pmf: Pmf::from_dense(0, probs, 0.0)?,
            },
        };
        law.validate()?;
        if (law.mean() - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!(
                "offspring mean {} differs from 1",
                law.mean()
            )));
        }
        Ok(law)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Balls (hashing, Bose-Einstein) or total progeny (branching).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    /// Value whose indicator is the response.
    #[serde(default, skip_serializing_if = "Option::is_none", alias = "K")]
    pub k: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offspring: Option<Offspring>,
}

/// JSON document `{kind, params{}, N, m, y, grids{}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    #[serde(default)]
    pub params: Params,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub big_n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    #[serde(default)]
    pub grids: BTreeMap<String, Vec<f64>>,
}

impl ModelConfig {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            params: Params::default(),
            big_n: None,
            m: None,
            y: None,
            grids: BTreeMap::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Input(format!("model config: {e}")))
    }
}

fn need<T>(v: Option<T>, what: &str, kind: &str) -> Result<T> {
    v.ok_or_else(|| Error::Input(format!("{kind} model needs `{what}`")))
}

/// Solves µ e^{-µ} = λ on (0, 1) by bisection.
pub fn forest_mu_from_lambda(lambda: f64) -> Result<f64> {
    let top = (-1.0f64).exp();
    if !(lambda > 0.0 && lambda < top) {
        return Err(Error::Parameter(format!(
            "forest λ={lambda} must lie in (0, e^-1); λ = e^-1 gives the critical µ = 1"
        )));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if mid * (-mid).exp() < lambda {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Builds the summand model and the conditioning event for a config.
pub fn build_model(config: &ModelConfig) -> Result<(ModelSpec, ConditioningSpec)> {
    let p = &config.params;
    match config.kind {
        ModelKind::Hashing => {
            let (big_n, m, mu) = match p.n {
                Some(n) => {
                    let m = need(config.m, "m", "hashing")?;
                    if m <= n as i64 {
                        return Err(Error::Capacity {
                            balls: n as usize,
                            urns: m.max(0) as usize,
                        });
                    }
                    let mu = p.mu.unwrap_or(n as f64 / m as f64);
                    ((m - n as i64) as u64, m, mu)
                }
                None => (
                    need(config.big_n, "N", "hashing")?,
                    need(config.m, "m", "hashing")?,
                    need(p.mu, "params.mu", "hashing")?,
                ),
            };
            let model = ModelSpec::new(
                ModelKind::Hashing,
                format!("hashing mu={mu}"),
                XLaw::Borel { mu },
                Response::Displacement,
            )?;
            Ok((model, ConditioningSpec::new(big_n, m)?))
        }
        ModelKind::Occupancy => {
            let big_n = need(config.big_n, "N", "occupancy")?;
            let m = need(config.m, "m", "occupancy")?;
            let lambda = p.lambda.unwrap_or(m as f64 / big_n as f64);
            let model = ModelSpec::new(
                ModelKind::Occupancy,
                format!("occupancy lambda={lambda}"),
                XLaw::Poisson { lambda },
                Response::Indicator { k: 0 },
            )?;
            Ok((model, ConditioningSpec::new(big_n, m)?))
        }
        ModelKind::BoseEinstein => {
            let big_n = need(config.big_n, "N", "bose_einstein")?;
            let balls = match (p.n, config.m) {
                (Some(n), _) => n as i64,
                (None, Some(m)) => m,
                _ => {
                    return Err(Error::Input(
                        "bose_einstein model needs `params.n` or `m`".into(),
                    ))
                }
            };
            let prob = p.p.unwrap_or(big_n as f64 / (big_n as f64 + balls as f64));
            let k = p.k.unwrap_or(0);
            let model = ModelSpec::new(
                ModelKind::BoseEinstein,
                format!("bose-einstein p={prob} k={k}"),
                XLaw::Geometric { p: prob },
                Response::Indicator { k },
            )?;
            Ok((model, ConditioningSpec::new(big_n, balls)?))
        }
        ModelKind::Branching => {
            let n = need(p.n, "params.n", "branching")?;
            if n == 0 {
                return Err(Error::Input("total progeny must be at least 1".into()));
            }
            let x = p.offspring.clone().unwrap_or(Offspring::Poisson).law()?;
            let k = p.k.unwrap_or(3);
            let model = ModelSpec::new(
                ModelKind::Branching,
                format!("branching n={n} k={k}"),
                x,
                Response::Indicator { k },
            )?;
            Ok((model, ConditioningSpec::new(n, n as i64 - 1)?))
        }
        ModelKind::RandomForest => {
            let big_n = need(config.big_n, "N", "random_forest")?;
            let m = need(config.m, "m", "random_forest")?;
            let mu = match (p.mu, p.lambda) {
                (Some(mu), _) => mu,
                (None, Some(lambda)) => forest_mu_from_lambda(lambda)?,
                (None, None) => {
                    if m <= big_n as i64 {
                        return Err(Error::Parameter(format!(
                            "forest with N={big_n} trees needs m > N vertices"
                        )));
                    }
                    1.0 - big_n as f64 / m as f64
                }
            };
            let k = p.k.unwrap_or(1);
            let model = ModelSpec::new(
                ModelKind::RandomForest,
                format!("forest mu={mu} K={k}"),
                XLaw::Borel { mu },
                Response::Indicator { k },
            )?;
            Ok((model, ConditioningSpec::new(big_n, m)?))
        }
        ModelKind::Custom => Err(Error::Input("custom models are built in code".into())),
    }
}

/// Probability of the event `S_k >= k for 0 <= k < n, S_n = n - 1` for
/// partial sums of offspring counts (exact, by recursion over `S_k`).
pub fn gw_event_exact(offspring: &XLaw, n: u64) -> Result<f64> {
    let n = n as usize;
    let table = offspring.table_upto(n as i64)?;
    let mut cur = vec![0.0; n + 1];
    cur[0] = 1.0;
    for k in 1..=n {
        let mut next = vec![0.0; n + 1];
        for (s, &ps) in cur.iter().enumerate() {
            if ps == 0.0 {
                continue;
            }
            for (x, px) in table.iter() {
                let t = s + x as usize;
                if t <= n {
                    next[t] += ps * px;
                }
            }
        }
        if k < n {
            for (s, v) in next.iter_mut().enumerate() {
                if s < k {
                    *v = 0.0;
                }
            }
        }
        cur = next;
    }
    Ok(cur[n - 1])
}

#[derive(Debug, Clone, Serialize)]
pub struct ProgenyReport {
    pub n: u64,
    pub samples: u64,
    /// Monte Carlo frequency of the partial-sum event.
    pub p_event_mc: f64,
    /// Monte Carlo frequency of total progeny `n` in direct simulation.
    pub p_progeny_mc: f64,
    pub se_event: f64,
    pub se_progeny: f64,
    pub p_event_exact: f64,
    /// Difference of the two estimates in units of its standard error.
    pub z_difference: f64,
}

/// Compares the partial-sum characterisation of total progeny `n` with a
/// direct breadth-first Galton-Watson simulation.
pub fn branching_total_progeny_check(
    offspring: &XLaw,
    n: u64,
    rng: &mut RngStream,
    samples: u64,
) -> Result<ProgenyReport> {
    if n == 0 || n > 64 {
        return Err(Error::Input(
            "total progeny check expects 1 <= n <= 64".into(),
        ));
    }
    if samples == 0 {
        return Err(Error::Input("need at least one sample".into()));
    }
    let sampler = ModelSpec::new(
        ModelKind::Branching,
        "offspring",
        offspring.clone(),
        Response::Indicator { k: 0 },
    )?
    .sampler()?;
    let mut ev_rng = rng.substream(rng.stream_index().wrapping_mul(2));
    let mut gw_rng = rng.substream(rng.stream_index().wrapping_mul(2) + 1);
    let nn = n as i64;
    let mut hits_event = 0u64;
    let mut hits_progeny = 0u64;
    for _ in 0..samples {
        let mut s = 0i64;
        let mut ok = true;
        for k in 1..=nn {
            s += sampler.sample_x(&mut ev_rng);
            if (k < nn && s < k) || (k == nn && s != nn - 1) {
                ok = false;
                break;
            }
        }
        hits_event += ok as u64;

        // explore individuals one at a time; `alive` counts unexplored ones
        let mut alive = 1i64;
        let mut explored = 0i64;
        while alive > 0 && explored <= nn {
            alive += sampler.sample_x(&mut gw_rng) - 1;
            explored += 1;
        }
        hits_progeny += (alive == 0 && explored == nn) as u64;
    }
    let sf = samples as f64;
    let pe = hits_event as f64 / sf;
    let pp = hits_progeny as f64 / sf;
    let se_e = (pe * (1.0 - pe) / sf).sqrt();
    let se_p = (pp * (1.0 - pp) / sf).sqrt();
    let se = (se_e * se_e + se_p * se_p).sqrt();
    Ok(ProgenyReport {
        n,
        samples,
        p_event_mc: pe,
        p_progeny_mc: pp,
        se_event: se_e,
        se_progeny: se_p,
        p_event_exact: gw_event_exact(offspring, n)?,
        z_difference: if se > 0.0 { (pe - pp) / se } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: ModelKind) -> ModelConfig {
        ModelConfig::new(kind)
    }

    #[test]
    fn hashing_from_balls_and_urns() {
        let mut c = cfg(ModelKind::Hashing);
        c.params.n = Some(8);
        c.m = Some(10);
        let (model, cond) = build_model(&c).unwrap();
        assert_eq!(model.x, XLaw::Borel { mu: 0.8 });
        assert_eq!(cond.n_summands, 2);
        assert!((model.x.mean() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn occupancy_default_lambda() {
        let mut c = cfg(ModelKind::Occupancy);
        c.big_n = Some(100);
        c.m = Some(100);
        let (model, _) = build_model(&c).unwrap();
        assert_eq!(model.x, XLaw::Poisson { lambda: 1.0 });
        assert!((model.moments().unwrap().mean_x - 1.0).abs() < 1e-10);
    }

    #[test]
    fn factory_means_match_scheme() {
        let mut c = cfg(ModelKind::BoseEinstein);
        c.big_n = Some(7);
        c.params.n = Some(20);
        let (model, cond) = build_model(&c).unwrap();
        assert!((model.moments().unwrap().mean_x - 20.0 / 7.0).abs() < 1e-10);
        assert_eq!(cond.m, 20);

        let mut c = cfg(ModelKind::RandomForest);
        c.big_n = Some(10);
        c.m = Some(25);
        let (model, _) = build_model(&c).unwrap();
        assert!((model.moments().unwrap().mean_x - 2.5).abs() < 1e-10);

        let mut c = cfg(ModelKind::Branching);
        c.params.n = Some(9);
        let (model, cond) = build_model(&c).unwrap();
        assert_eq!((cond.n_summands, cond.m), (9, 8));
        assert!((model.moments().unwrap().mean_x - 1.0).abs() < 1e-10);
    }

    #[test]
    fn forest_inversion() {
        let mu = forest_mu_from_lambda(0.25).unwrap();
        assert!((mu - 0.35740).abs() < 1e-5);
        assert!((mu * (-mu).exp() - 0.25).abs() < 1e-10);
        assert!(forest_mu_from_lambda((-1.0f64).exp()).is_err());
        assert!(forest_mu_from_lambda(0.5).is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let text = r#"{"kind":"hashing","params":{"n":4},"m":6,"grids":{"u":[1,2]}}"#;
        let c = ModelConfig::from_json(text).unwrap();
        assert_eq!(c.params.n, Some(4));
        assert_eq!(c.grids["u"], vec![1.0, 2.0]);
        let back = ModelConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(ModelConfig::from_json(r#"{"kind":"hashing","bogus":1}"#).is_err());
    }

    #[test]
    fn gw_event_small_n() {
        let pois = XLaw::Poisson { lambda: 1.0 };
        assert!((gw_event_exact(&pois, 1).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!((gw_event_exact(&pois, 2).unwrap() - (-2.0f64).exp()).abs() < 1e-15);
        let three = (-3.0f64).exp() * 9.0 / 6.0;
        assert!((gw_event_exact(&pois, 3).unwrap() - three).abs() < 1e-15);
    }

    #[test]
    fn progeny_mc_agrees() {
        let pois = XLaw::Poisson { lambda: 1.0 };
        let mut rng = RngStream::new(3, 0);
        let r = branching_total_progeny_check(&pois, 3, &mut rng, 200_000).unwrap();
        assert!((r.p_event_mc - 0.0746806).abs() < 3.0 * r.se_event);
        assert!((r.p_progeny_mc - 0.0746806).abs() < 3.0 * r.se_progeny);
    }
}
