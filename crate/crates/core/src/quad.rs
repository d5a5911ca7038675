//! Gauss-Legendre quadrature with adaptive panel splitting.

use std::sync::OnceLock;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::KahanSum;

/// Nodes and weights of the n-point rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Roots of P_n by Newton iteration from the Chebyshev-like guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                let pn = if n == 1 { x } else { p1 };
                let pm = if n == 1 { 1.0 } else { p0 };
                dp = nf * (x * pn - pm) / (x * x - 1.0);
                let dx = pn / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate<F: Fn(f64) -> Complex64>(&self, f: &F, a: f64, b: f64) -> Complex64 {
        let h = 0.5 * (b - a);
        let c = 0.5 * (a + b);
        let mut re = KahanSum::new();
        let mut im = KahanSum::new();
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            let v = f(c + h * x) * w;
            re.add(v.re);
            im.add(v.im);
        }
        Complex64::new(re.value(), im.value()) * h
    }
}

/// The 32-point rule used by the adaptive integrator.
pub fn gl32() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(32))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: Complex64,
    /// Sum of per-panel error estimates.
    pub error: f64,
    pub panels: usize,
}

const MAX_ROUNDS: usize = 40;

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Each panel is compared with the sum over its two halves; panels whose
/// difference exceeds their share of `tol` are split. Panels of a round are
/// evaluated in parallel and summed in left-to-right order.
pub fn integrate_adaptive<F>(
    f: F,
    a: f64,
    b: f64,
    tol: f64,
    initial_panels: usize,
) -> Result<QuadResult>
where
    F: Fn(f64) -> Complex64 + Sync,
{
    let rule = gl32();
    let width = b - a;
    let p0 = initial_panels.max(1);
    let mut pending: Vec<(f64, f64)> = (0..p0)
        .map(|i| {
            (
                a + width * i as f64 / p0 as f64,
                a + width * (i + 1) as f64 / p0 as f64,
            )
        })
        .collect();
    let mut done: Vec<(f64, Complex64, f64)> = Vec::new();
    for round in 0..MAX_ROUNDS {
        if pending.is_empty() {
            break;
        }
        let last = round + 1 == MAX_ROUNDS;
        let evals: Vec<(f64, f64, Complex64, f64)> = pending
            .par_iter()
            .map(|&(lo, hi)| {
                let mid = 0.5 * (lo + hi);
                let whole = rule.integrate(&f, lo, hi);
                let halves = rule.integrate(&f, lo, mid) + rule.integrate(&f, mid, hi);
                (lo, hi, halves, (whole - halves).norm())
            })
            .collect();
        let mut next = Vec::new();
        for (lo, hi, v, err) in evals {
            let share = tol * (hi - lo) / width;
            if err <= share || last {
                done.push((lo, v, err));
            } else {
                let mid = 0.5 * (lo + hi);
                next.push((lo, mid));
                next.push((mid, hi));
            }
        }
        pending = next;
    }
    done.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut re = KahanSum::new();
    let mut im = KahanSum::new();
    let mut err = 0.0;
    for (_, v, e) in &done {
        re.add(v.re);
        im.add(v.im);
        err += e;
    }
    let value = Complex64::new(re.value(), im.value());
    if err > tol {
        return Err(Error::Quadrature {
            estimate: value.re,
            error: err,
        });
    }
    Ok(QuadResult {
        value,
        error: err,
        panels: done.len(),
    })
}

pub fn integrate_real<F>(f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64 + Sync,
{
    integrate_adaptive(|x| Complex64::new(f(x), 0.0), a, b, tol, 8).map(|r| r.value.re)
}
