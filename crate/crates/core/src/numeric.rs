//! Small numeric helpers shared across modules.

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut k = KahanSum::new();
        for x in iter {
            k.add(x);
        }
        k
    }
}

pub fn kahan_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<KahanSum>().value()
}

pub fn ln_factorial(n: u64) -> f64 {
    libm::lgamma(n as f64 + 1.0)
}

/// log(exp(a) + exp(b)) without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Total-variation distance between two integer-supported tables given as
/// sorted (value, prob) pairs.
pub fn tv_distance(a: &[(i64, f64)], b: &[(i64, f64)]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut acc = KahanSum::new();
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(&(va, pa)), Some(&(vb, pb))) if va == vb => {
                acc.add((pa - pb).abs());
                i += 1;
                j += 1;
            }
            (Some(&(va, pa)), Some(&(vb, _))) if va < vb => {
                acc.add(pa.abs());
                i += 1;
            }
            (Some(_), Some(&(_, pb))) => {
                acc.add(pb.abs());
                j += 1;
            }
            (Some(&(_, pa)), None) => {
                acc.add(pa.abs());
                i += 1;
            }
            (None, Some(&(_, pb))) => {
                acc.add(pb.abs());
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    0.5 * acc.value()
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    format!("{x:.16e}")
}
