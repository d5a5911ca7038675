//! Joint laws of a summand pair `(X, Y)`.
//!
//! A [`ModelSpec`] pairs an integer law for `X` with a response `Y` that is
//! either an indicator of `X` or the linear probing displacement of a block
//! of length `X`. A model may additionally carry the affine projection
//! `Y' = Y - E Y - b (X - E X)`, which decorrelates `Y'` from `X`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::distributions::{
    borel_law, borel_mean, borel_pmf, borel_variance, ln_borel_tail_bound, StandardLaw,
    TableSampler,
};
use crate::error::{Error, Result};
use crate::exact::displacement_law;
use crate::numeric::KahanSum;
use crate::pmf::Pmf;
use crate::rng::RngStream;

/// Law of the summand `X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum XLaw {
    Borel {
        mu: f64,
    },
    Poisson {
        lambda: f64,
    },
    /// Support `{0, 1, ...}`.
    Geometric {
        p: f64,
    },
    /// Finite table, e.g. an explicit offspring law.
    Table {
        pmf: Pmf,
    },
}

impl XLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            XLaw::Borel { mu } => borel_pmf(*mu, 1).map(|_| ()),
            XLaw::Poisson { lambda } => StandardLaw::Poisson { lambda: *lambda }
                .ln_pmf(0)
                .map(|_| ()),
            XLaw::Geometric { p } => StandardLaw::Geometric { p: *p }.ln_pmf(0).map(|_| ()),
            XLaw::Table { pmf } => {
                if pmf.is_empty() || !pmf.is_full_law(1e-9) {
                    Err(Error::Parameter(
                        "explicit X table must be a full law".into(),
                    ))
                } else {
                    Ok(())
                }
            }
        }
    }

    fn standard(&self) -> Option<StandardLaw> {
        match *self {
            XLaw::Poisson { lambda } => Some(StandardLaw::Poisson { lambda }),
            XLaw::Geometric { p } => Some(StandardLaw::Geometric { p }),
            _ => None,
        }
    }

    pub fn pmf(&self, k: i64) -> f64 {
        match self {
            XLaw::Borel { mu } => {
                if k < 1 {
                    0.0
                } else {
                    borel_pmf(*mu, k as u64).unwrap_or(0.0)
                }
            }
            XLaw::Table { pmf } => pmf.prob(k),
            other => other
                .standard()
                .unwrap()
                .ln_pmf(k)
                .map(f64::exp)
                .unwrap_or(0.0),
        }
    }

    pub fn min_support(&self) -> i64 {
        match self {
            XLaw::Borel { .. } => 1,
            XLaw::Table { pmf } => pmf.min_value().unwrap_or(0),
            _ => 0,
        }
    }

    /// Largest value with positive mass, if finite.
    pub fn max_support(&self) -> Option<i64> {
        match self {
            XLaw::Table { pmf } => pmf.max_value(),
            _ => None,
        }
    }

    /// Upper bound on P(X >= k).
    pub fn tail_bound(&self, k: i64) -> f64 {
        match self {
            XLaw::Borel { mu } => {
                if k <= 1 {
                    1.0
                } else {
                    ln_borel_tail_bound(*mu, k as u64)
                        .map(f64::exp)
                        .unwrap_or(1.0)
                }
            }
            XLaw::Table { pmf } => pmf.upper_tail(k),
            other => other.standard().unwrap().ln_tail_bound(k).exp().min(1.0),
        }
    }

    /// Table with mass beyond the last atom below `eps`.
    pub fn table(&self, eps: f64) -> Result<Pmf> {
        match self {
            XLaw::Borel { mu } => borel_law(*mu, eps),
            XLaw::Table { pmf } => Ok(pmf.clone()),
            other => other.standard().unwrap().law(eps),
        }
    }

    /// Exact values on `[min_support, hi]`; the truncation mass bounds the
    /// law beyond `hi`.
    pub fn table_upto(&self, hi: i64) -> Result<Pmf> {
        let lo = self.min_support();
        let hi = match self.max_support() {
            Some(top) => hi.min(top),
            None => hi,
        };
        let pairs = (lo..=hi)
            .map(|k| (k, self.pmf(k)))
            .filter(|&(_, p)| p > 0.0);
        Pmf::from_pairs(pairs, self.tail_bound(hi + 1))
    }

    /// Closed-form mean where one exists.
    pub fn mean(&self) -> f64 {
        match self {
            XLaw::Borel { mu } => borel_mean(*mu),
            XLaw::Table { pmf } => pmf.mean(),
            other => other.standard().unwrap().mean(),
        }
    }

    /// Closed-form variance where one exists.
    pub fn variance(&self) -> f64 {
        match self {
            XLaw::Borel { mu } => borel_variance(*mu),
            XLaw::Table { pmf } => pmf.variance(),
            other => other.standard().unwrap().variance(),
        }
    }
}

/// The response `Y` as a function of `X` (plus independent randomness).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "response", rename_all = "snake_case")]
pub enum Response {
    /// `Y = 1{X = k}`.
    Indicator { k: i64 },
    /// `Y | X = l ~ d_{l, l-1}`.
    Displacement,
}

/// `Y' = Y - mean_y - slope (X - mean_x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub mean_x: f64,
    pub mean_y: f64,
    pub slope: f64,
}

impl Projection {
    #[inline]
    pub fn apply(&self, x: i64, y: f64) -> f64 {
        y - self.mean_y - self.slope * (x as f64 - self.mean_x)
    }

    /// On the event `S_N = m`, `T' = T - shift`.
    pub fn conditional_shift(&self, n_summands: u64, m: i64) -> f64 {
        let nf = n_summands as f64;
        nf * self.mean_y + self.slope * (m as f64 - nf * self.mean_x)
    }
}

/// One atom of the joint law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointAtom {
    pub x: i64,
    pub y: f64,
    pub p: f64,
}

#[derive(Debug, Clone)]
pub struct JointTable {
    pub atoms: Vec<JointAtom>,
    pub truncation_mass: f64,
}

impl JointTable {
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.p).collect::<KahanSum>().value()
    }

    fn expect(&self, f: impl Fn(&JointAtom) -> f64) -> f64 {
        let mut k = KahanSum::new();
        for a in &self.atoms {
            k.add(a.p * f(a));
        }
        k.value() / self.total_mass()
    }

    pub fn moments(&self) -> Moments {
        let ex = self.expect(|a| a.x as f64);
        let ey = self.expect(|a| a.y);
        let vx = self.expect(|a| (a.x as f64 - ex).powi(2));
        let vy = self.expect(|a| (a.y - ey).powi(2));
        let cov = self.expect(|a| (a.x as f64 - ex) * (a.y - ey));
        let rho_x = self.expect(|a| (a.x as f64 - ex).abs().powi(3));
        let rho_y = self.expect(|a| (a.y - ey).abs().powi(3));
        let sigma_x = vx.sqrt();
        let sigma_y = vy.sqrt();
        let r = if sigma_x > 0.0 && sigma_y > 0.0 {
            cov / (sigma_x * sigma_y)
        } else {
            0.0
        };
        Moments {
            mean_x: ex,
            sigma_x,
            rho_x,
            mean_y: ey,
            sigma_y,
            rho_y,
            cov,
            r,
            tau: (vy * (1.0 - r * r)).max(0.0).sqrt(),
        }
    }
}

/// Moments of `(X, Y)`; `rho` are third absolute central moments, `r` the
/// correlation and `tau^2 = sigma_y^2 (1 - r^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean_x: f64,
    pub sigma_x: f64,
    pub rho_x: f64,
    pub mean_y: f64,
    pub sigma_y: f64,
    pub rho_y: f64,
    pub cov: f64,
    pub r: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Hashing,
    Occupancy,
    BoseEinstein,
    Branching,
    RandomForest,
    Custom,
}

/// Mass allowed outside joint tables used for moments and transforms.
pub const JOINT_TRUNCATION: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub label: String,
    pub x: XLaw,
    pub response: Response,
    pub projection: Option<Projection>,
}

impl ModelSpec {
    pub fn new(
        kind: ModelKind,
        label: impl Into<String>,
        x: XLaw,
        response: Response,
    ) -> Result<Self> {
        x.validate()?;
        Ok(Self {
            kind,
            label: label.into(),
            x,
            response,
            projection: None,
        })
    }

    pub fn is_projected(&self) -> bool {
        self.projection.is_some()
    }

    /// Integer law of the unprojected `Y` given `X = x`.
    pub fn y_law_given(&self, x: i64) -> Result<Arc<Pmf>> {
        match self.response {
            Response::Indicator { k } => Ok(Arc::new(Pmf::point_mass((x == k) as i64))),
            Response::Displacement => {
                if x < 1 {
                    return Err(Error::Input(format!("block length {x} < 1")));
                }
                displacement_law(x as u64)
            }
        }
    }

    /// Joint table of `(X, Y)` (projected if the model carries a projection),
    /// truncated where the `X` tail drops below `eps`.
    pub fn joint_table(&self, eps: f64) -> Result<JointTable> {
        let xt = self.x.table(eps)?;
        let mut atoms = Vec::new();
        for (x, px) in xt.iter() {
            if px == 0.0 {
                continue;
            }
            let yl = self.y_law_given(x)?;
            for (y, py) in yl.iter() {
                let y = y as f64;
                let y = match &self.projection {
                    Some(pr) => pr.apply(x, y),
                    None => y,
                };
                atoms.push(JointAtom { x, y, p: px * py });
            }
        }
        Ok(JointTable {
            atoms,
            truncation_mass: xt.truncation_mass(),
        })
    }

    pub fn moments(&self) -> Result<Moments> {
        Ok(self.joint_table(JOINT_TRUNCATION)?.moments())
    }

    /// The decorrelated model with `Y' = Y - E Y - (Cov/σ_X²)(X - E X)`.
    pub fn y_prime(&self) -> Result<ModelSpec> {
        if self.is_projected() {
            return Ok(self.clone());
        }
        let mo = self.moments()?;
        if !(mo.sigma_x > 0.0) {
            return Err(Error::Degenerate("σ_X = 0".into()));
        }
        let mut out = self.clone();
        out.label = format!("{} (projected)", self.label);
        out.projection = Some(Projection {
            mean_x: mo.mean_x,
            mean_y: mo.mean_y,
            slope: mo.cov / (mo.sigma_x * mo.sigma_x),
        });
        Ok(out)
    }

    pub fn sampler(&self) -> Result<ModelSampler> {
        let table = match &self.x {
            XLaw::Borel { mu } => borel_law(*mu, 1e-12)?,
            other => other.table(1e-15)?,
        };
        Ok(ModelSampler {
            x: TableSampler::new(&table)?,
            response: self.response,
            disp: Default::default(),
        })
    }
}

/// Draws `X` by inversion and `Y` given `X` on demand.
#[derive(Debug, Clone)]
pub struct ModelSampler {
    x: TableSampler,
    response: Response,
    disp: crate::distributions::DisplacementSampler,
}

impl ModelSampler {
    #[inline]
    pub fn sample_x(&self, rng: &mut RngStream) -> i64 {
        self.x.sample(rng)
    }

    #[inline]
    pub fn sample_y(&mut self, x: i64, rng: &mut RngStream) -> i64 {
        match self.response {
            Response::Indicator { k } => (x == k) as i64,
            Response::Displacement => self.disp.sample(x.max(1) as u64, rng) as i64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn occupancy(lambda: f64) -> ModelSpec {
        ModelSpec::new(
            ModelKind::Occupancy,
            "occ",
            XLaw::Poisson { lambda },
            Response::Indicator { k: 0 },
        )
        .unwrap()
    }

    #[test]
    fn occupancy_moments() {
        let mo = occupancy(1.0).moments().unwrap();
        let e = (-1.0f64).exp();
        assert!((mo.mean_x - 1.0).abs() < 1e-12);
        assert!((mo.sigma_x - 1.0).abs() < 1e-12);
        assert!((mo.mean_y - e).abs() < 1e-12);
        assert!((mo.cov + e).abs() < 1e-12);
        assert!((mo.r.abs() - 0.7628).abs() < 1e-4);
        assert!((mo.tau.powi(2) - (e * (1.0 - e) - e * e)).abs() < 1e-12);
    }

    #[test]
    fn projection_decorrelates() {
        let m = occupancy(1.0).y_prime().unwrap();
        let mo = m.moments().unwrap();
        assert!(mo.mean_y.abs() < 1e-10);
        assert!(mo.cov.abs() < 1e-10);
        let e = (-1.0f64).exp();
        assert!((mo.sigma_y.powi(2) - (e * (1.0 - e) - e * e)).abs() < 1e-12);
        assert!((mo.sigma_y.powi(2) - 0.097208874698217).abs() < 1e-12);
    }

    #[test]
    fn hashing_moments_match_closed_forms() {
        let m = ModelSpec::new(
            ModelKind::Hashing,
            "h",
            XLaw::Borel { mu: 0.5 },
            Response::Displacement,
        )
        .unwrap();
        let mo = m.moments().unwrap();
        assert!((mo.mean_x - 2.0).abs() < 1e-9);
        assert!((mo.sigma_x - 2.0).abs() < 1e-9);
    }

    #[test]
    fn table_upto_is_exact_prefix() {
        let x = XLaw::Borel { mu: 0.5 };
        let t = x.table_upto(5).unwrap();
        assert_eq!(t.support(), &[1, 2, 3, 4, 5]);
        assert_eq!(t.prob(2), borel_pmf(0.5, 2).unwrap());
        assert!(t.truncation_mass() >= 1.0 - t.total_mass() - 1e-15);
    }
}
