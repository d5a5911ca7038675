//! Finite-support probability tables with explicit truncation bookkeeping.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{fmt_f64, kahan_sum, tv_distance, KahanSum};

/// Probability table on an integer lattice.
///
/// `truncation_mass` bounds the probability that lies outside `support`.
/// A full law satisfies `sum(probs) + truncation_mass ≈ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pmf {
    support: Vec<i64>,
    probs: Vec<f64>,
    truncation_mass: f64,
}

impl Pmf {
    /// Builds a table from (value, prob) pairs. Values are sorted and
    /// duplicates merged.
    pub fn from_pairs<I>(pairs: I, truncation_mass: f64) -> Result<Self>
    where
        I: IntoIterator<Item = (i64, f64)>,
    {
        let mut v: Vec<(i64, f64)> = pairs.into_iter().collect();
        if let Some(&(x, p)) = v.iter().find(|(_, p)| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::Input(format!("probability {p} at value {x}")));
        }
        if !(truncation_mass >= 0.0) {
            return Err(Error::Input(format!("truncation mass {truncation_mass}")));
        }
        v.sort_by_key(|&(x, _)| x);
        let mut support = Vec::with_capacity(v.len());
        let mut probs: Vec<f64> = Vec::with_capacity(v.len());
        for (x, p) in v {
            if support.last() == Some(&x) {
                *probs.last_mut().unwrap() += p;
            } else {
                support.push(x);
                probs.push(p);
            }
        }
        Ok(Self {
            support,
            probs,
            truncation_mass,
        })
    }

    /// Dense table `probs[i]` at value `offset + i`, dropping exact zeros.
    pub fn from_dense(offset: i64, probs: &[f64], truncation_mass: f64) -> Result<Self> {
        Self::from_pairs(
            probs
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(i, &p)| (offset + i as i64, p)),
            truncation_mass,
        )
    }

    pub fn point_mass(value: i64) -> Self {
        Self {
            support: vec![value],
            probs: vec![1.0],
            truncation_mass: 0.0,
        }
    }

    pub fn support(&self) -> &[i64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn truncation_mass(&self) -> f64 {
        self.truncation_mass
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.support.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn pairs(&self) -> Vec<(i64, f64)> {
        self.iter().collect()
    }

    pub fn min_value(&self) -> Option<i64> {
        self.support.first().copied()
    }

    pub fn max_value(&self) -> Option<i64> {
        self.support.last().copied()
    }

    pub fn prob(&self, value: i64) -> f64 {
        match self.support.binary_search(&value) {
            Ok(i) => self.probs[i],
            Err(_) => 0.0,
        }
    }

    pub fn total_mass(&self) -> f64 {
        kahan_sum(self.probs.iter().copied())
    }

    /// Checks the full-law invariant `sum + truncation ∈ [1 - tol, 1 + tol]`.
    pub fn is_full_law(&self, tol: f64) -> bool {
        let s = self.total_mass() + self.truncation_mass;
        (s - 1.0).abs() <= tol
    }

    /// P(X >= value) over the listed support.
    pub fn upper_tail(&self, value: i64) -> f64 {
        let start = self.support.partition_point(|&x| x < value);
        kahan_sum(self.probs[start..].iter().copied())
    }

    pub fn mean(&self) -> f64 {
        self.moment_about(0.0, 1)
    }

    /// E[(X - c)^k] over the listed support, normalized by the listed mass.
    pub fn moment_about(&self, c: f64, k: i32) -> f64 {
        let mass = self.total_mass();
        kahan_sum(self.iter().map(|(x, p)| p * (x as f64 - c).powi(k))) / mass
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.moment_about(m, 2)
    }

    /// Rescales the listed probabilities to sum to one.
    pub fn normalized(&self) -> Self {
        let mass = self.total_mass();
        Self {
            support: self.support.clone(),
            probs: self.probs.iter().map(|p| p / mass).collect(),
            truncation_mass: 0.0,
        }
    }

    pub fn tv_distance(&self, other: &Pmf) -> f64 {
        tv_distance(&self.pairs(), &other.pairs())
    }

    /// Writes `value,prob` rows followed by a `# truncation_mass=` footer.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "value,prob")?;
        for (x, p) in self.iter() {
            writeln!(w, "{},{}", x, fmt_f64(p))?;
        }
        writeln!(w, "# truncation_mass={}", fmt_f64(self.truncation_mass))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec");
        String::from_utf8(buf).expect("ascii")
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut trunc = 0.0;
        let mut saw_header = false;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("truncation_mass=") {
                    trunc = v
                        .trim()
                        .parse()
                        .map_err(|_| Error::Input(format!("bad truncation footer: {line}")))?;
                }
                continue;
            }
            if !saw_header {
                if line != "value,prob" {
                    return Err(Error::Input(format!(
                        "expected header `value,prob`, got `{line}`"
                    )));
                }
                saw_header = true;
                continue;
            }
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| Error::Input(format!("line {}: `{line}`", lineno + 1)))?;
            let x: i64 = a
                .trim()
                .parse()
                .map_err(|_| Error::Input(format!("line {}: bad value `{a}`", lineno + 1)))?;
            let p: f64 = b
                .trim()
                .parse()
                .map_err(|_| Error::Input(format!("line {}: bad prob `{b}`", lineno + 1)))?;
            pairs.push((x, p));
        }
        Self::from_pairs(pairs, trunc)
    }
}

/// Accumulates probability mass on a dense integer range with compensated
/// summation per cell.
#[derive(Debug, Clone)]
pub(crate) struct DenseAccumulator {
    offset: i64,
    cells: Vec<KahanSum>,
}

impl DenseAccumulator {
    pub(crate) fn new(lo: i64, hi: i64) -> Self {
        let n = (hi - lo + 1).max(0) as usize;
        Self {
            offset: lo,
            cells: vec![KahanSum::new(); n],
        }
    }

    #[inline]
    pub(crate) fn add(&mut self, value: i64, p: f64) {
        let i = (value - self.offset) as usize;
        self.cells[i].add(p);
    }

    pub(crate) fn values(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.value()).collect()
    }
}
