//! Rejection sampling of `T_N` given `S_N = m`.
//!
//! Attempts are grouped in fixed-size chunks and chunk `c` always draws from
//! stream `c` of the master seed. Chunks are merged in index order and the
//! batch is cut at the `target`-th acceptance, so the output depends only on
//! the seed and the chunk size, not on how many threads ran the chunks.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{exact_sum_pmf, ConditioningSpec};
use crate::model::ModelSpec;
use crate::pmf::Pmf;
use crate::rng::RngStream;

/// Attempts per chunk.
pub const DEFAULT_CHUNK: u64 = 1 << 14;

/// Attempts allowed per requested acceptance when no budget is given.
pub const DEFAULT_BUDGET_FACTOR: u64 = 10_000;

/// Chunks dispatched per parallel wave.
const WAVE: u64 = 64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleBatch {
    pub values: Vec<i64>,
    /// Largest single `Y_i` of each accepted vector.
    pub max_summands: Vec<i64>,
    pub attempts: u64,
    pub accepted: u64,
    pub master_seed: u64,
    pub chunk_size: u64,
    /// False when the budget ran out before the target was reached.
    pub complete: bool,
}

impl SampleBatch {
    pub fn acceptance_rate(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.accepted as f64 / self.attempts as f64
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum::<f64>() / self.values.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let n = self.values.len() as f64;
        self.values
            .iter()
            .map(|&v| (v as f64 - m).powi(2))
            .sum::<f64>()
            / (n - 1.0)
    }

    /// Empirical law of the accepted values.
    pub fn empirical(&self) -> Result<Pmf> {
        let w = 1.0 / self.values.len() as f64;
        Pmf::from_pairs(self.values.iter().map(|&v| (v, w)), 0.0)
    }

    /// CSV with a single `value` column.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "value")?;
        for v in &self.values {
            writeln!(w, "{v}")?;
        }
        Ok(())
    }

    pub fn metadata_json(&self) -> serde_json::Value {
        serde_json::json!({
            "attempts": self.attempts,
            "accepted": self.accepted,
            "seed": self.master_seed,
            "chunk_size": self.chunk_size,
            "complete": self.complete,
        })
    }
}

/// One accepted attempt: its index within the chunk and the summands.
struct Hit {
    attempt: u64,
    xs: Vec<i64>,
}

/// Accepted attempt index, `T` and the largest `Y_i`.
type ChunkHits = Vec<(u64, i64, i64)>;

fn run_chunk(
    model: &ModelSpec,
    cond: &ConditioningSpec,
    seed: u64,
    chunk: u64,
    attempts: u64,
) -> Result<(ChunkHits, u64)> {
    let mut sampler = model.sampler()?;
    let mut rng = RngStream::new(seed, chunk);
    let n = cond.n_summands as usize;
    let m = cond.m;
    let xmin = model.x.min_support();
    let mut hits = Vec::new();
    let mut xs = Vec::with_capacity(n);
    for a in 0..attempts {
        xs.clear();
        let mut s = 0i64;
        let mut alive = true;
        for i in 0..n {
            let x = sampler.sample_x(&mut rng);
            s += x;
            xs.push(x);
            // remaining summands add at least xmin each
            if s + (n - 1 - i) as i64 * xmin > m {
                alive = false;
                break;
            }
        }
        if alive && s == m {
            hits.push(Hit {
                attempt: a,
                xs: xs.clone(),
            });
        }
    }
    // responses are drawn only for accepted vectors, from the same stream
    let mut out = Vec::with_capacity(hits.len());
    for h in hits {
        let mut t = 0i64;
        let mut top = i64::MIN;
        for &x in &h.xs {
            let y = sampler.sample_y(x, &mut rng);
            t += y;
            top = top.max(y);
        }
        out.push((h.attempt, t, top));
    }
    Ok((out, attempts))
}

/// Draws i.i.d. vectors `(X_i, Y_i)` and keeps `T = sum Y_i` whenever
/// `sum X_i = m`, until `target` acceptances or `budget` attempts.
pub fn rejection_sample(
    model: &ModelSpec,
    cond: &ConditioningSpec,
    target: u64,
    budget: Option<u64>,
    seed: u64,
) -> Result<SampleBatch> {
    rejection_sample_chunked(model, cond, target, budget, seed, DEFAULT_CHUNK)
}

pub fn rejection_sample_chunked(
    model: &ModelSpec,
    cond: &ConditioningSpec,
    target: u64,
    budget: Option<u64>,
    seed: u64,
    chunk_size: u64,
) -> Result<SampleBatch> {
    if target == 0 {
        return Err(Error::Input("target must be at least 1".into()));
    }
    if chunk_size == 0 {
        return Err(Error::Input("chunk size must be positive".into()));
    }
    if model.is_projected() {
        return Err(Error::Input("sample the unprojected model".into()));
    }
    let budget = budget.unwrap_or(target.saturating_mul(DEFAULT_BUDGET_FACTOR));
    let n_chunks = budget.div_ceil(chunk_size);
    let mut values = Vec::new();
    let mut max_summands = Vec::new();
    let mut attempts = 0u64;
    let mut next_chunk = 0u64;
    while next_chunk < n_chunks {
        let wave_end = (next_chunk + WAVE).min(n_chunks);
        let results: Vec<Result<(ChunkHits, u64)>> = (next_chunk..wave_end)
            .into_par_iter()
            .map(|c| {
                let len = chunk_size.min(budget - c * chunk_size);
                run_chunk(model, cond, seed, c, len)
            })
            .collect();
        for r in results {
            let (hits, len) = r?;
            for (a, t, top) in hits {
                values.push(t);
                max_summands.push(top);
                if values.len() as u64 == target {
                    return Ok(SampleBatch {
                        accepted: target,
                        values,
                        max_summands,
                        attempts: attempts + a + 1,
                        master_seed: seed,
                        chunk_size,
                        complete: true,
                    });
                }
            }
            attempts += len;
        }
        next_chunk = wave_end;
    }
    Ok(SampleBatch {
        accepted: values.len() as u64,
        values,
        max_summands,
        attempts,
        master_seed: seed,
        chunk_size,
        complete: false,
    })
}

/// Exact P(S_N = m) when the convolution is affordable.
pub fn exact_condition_probability(model: &ModelSpec, cond: &ConditioningSpec) -> Result<f64> {
    let xmin = model.x.min_support();
    let hi = cond.m - (cond.n_summands as i64 - 1) * xmin;
    if hi < xmin {
        return Ok(0.0);
    }
    let table = model.x.table_upto(hi)?;
    let work = cond.n_summands as f64 * (hi - xmin + 1) as f64 * table.len() as f64;
    if work > 2e9 {
        return Err(Error::TooLarge(format!(
            "P(S_N = m) convolution of {work:.1e} steps"
        )));
    }
    let s = exact_sum_pmf(&table, cond.n_summands, (cond.m, cond.m))?;
    Ok(s.prob(cond.m))
}

#[derive(Debug, Clone, Serialize)]
pub struct AcceptanceReport {
    pub attempts: u64,
    pub accepted: u64,
    pub rate: f64,
    pub p_exact: Option<f64>,
    pub sigma_x: f64,
    /// `rate * 2π σ_X √N`, comparable with the lower constant of the local
    /// limit theorem.
    pub rate_times_2pi_sigma_sqrt_n: f64,
    /// `rate * σ_X √(2πN)`, close to `exp(-v²/2)` under the local limit.
    pub rate_times_sigma_sqrt_2pi_n: f64,
    pub v_n: f64,
}

pub fn acceptance_audit(
    batch: &SampleBatch,
    model: &ModelSpec,
    cond: &ConditioningSpec,
) -> Result<AcceptanceReport> {
    if batch.attempts == 0 {
        return Err(Error::Input("empty batch".into()));
    }
    let mo = model.moments()?;
    let nf = cond.n_summands as f64;
    let rate = batch.acceptance_rate();
    let p_exact = exact_condition_probability(model, cond).ok();
    let scale = mo.sigma_x * nf.sqrt();
    Ok(AcceptanceReport {
        attempts: batch.attempts,
        accepted: batch.accepted,
        rate,
        p_exact,
        sigma_x: mo.sigma_x,
        rate_times_2pi_sigma_sqrt_n: rate * 2.0 * std::f64::consts::PI * scale,
        rate_times_sigma_sqrt_2pi_n: rate * scale * (2.0 * std::f64::consts::PI).sqrt(),
        v_n: (cond.m as f64 - nf * mo.mean_x) / scale,
    })
}

/// Half-width of the DKW band for `n` samples at level `alpha`.
pub fn dkw_epsilon(n: u64, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// Sup distance between the empirical CDF of integer samples and an
/// integer-supported law.
pub fn ks_distance_to_law(values: &[i64], law: &Pmf) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len() as f64;
    let mut points: Vec<i64> = v.clone();
    points.extend_from_slice(law.support());
    points.sort_unstable();
    points.dedup();
    let mut d: f64 = 0.0;
    let mut i = 0;
    let mut j = 0;
    let mut f_law = 0.0;
    let support = law.support();
    let probs = law.probs();
    for &x in &points {
        while i < v.len() && v[i] <= x {
            i += 1;
        }
        while j < support.len() && support[j] <= x {
            f_law += probs[j];
            j += 1;
        }
        d = d.max((i as f64 / n - f_law).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelKind, Response, XLaw};

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
    fn forced_event() {
        let b = rejection_sample(
            &occupancy(1.0),
            &ConditioningSpec::new(2, 0).unwrap(),
            500,
            None,
            1,
        )
        .unwrap();
        assert!(b.complete);
        assert!(b.values.iter().all(|&v| v == 2));
        let r =
            acceptance_audit(&b, &occupancy(1.0), &ConditioningSpec::new(2, 0).unwrap()).unwrap();
        assert!((r.p_exact.unwrap() - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn chunking_changes_nothing_but_layout() {
        let m = occupancy(1.0);
        let c = ConditioningSpec::new(5, 5).unwrap();
        let a = rejection_sample_chunked(&m, &c, 300, None, 9, 1000).unwrap();
        let b = rejection_sample_chunked(&m, &c, 300, None, 9, 1000).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.values.len(), 300);
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let b = rejection_sample(
            &occupancy(1.0),
            &ConditioningSpec::new(50, 0).unwrap(),
            10,
            Some(1000),
            1,
        )
        .unwrap();
        assert!(!b.complete);
        assert_eq!(b.attempts, 1000);
    }

    #[test]
    fn dkw_value() {
        assert!((dkw_epsilon(100_000, 0.001) - 0.006163).abs() < 1e-5);
    }
}
