//! Log-domain arithmetic shared by every module.

use serde::{Deserialize, Serialize};

/// `log(sum(exp(values)))`; empty or all `-inf` input gives `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    let mut acc = Neumaier::default();
    for &v in values {
        acc.add((v - max).exp());
    }
    max + acc.total().ln()
}

pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY || hi == f64::INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `log(exp(a) - exp(b))` for `a >= b`; `-inf` when they coincide.
pub fn log_sub_exp(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    if b >= a {
        return f64::NEG_INFINITY;
    }
    a + (-(b - a).exp()).ln_1p()
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        if !self.sum.is_finite() {
            return self.sum;
        }
        self.sum + self.comp
    }
}

pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = Neumaier::default();
    for v in values {
        acc.add(v);
    }
    acc.total()
}

/// A log-domain value known only to lie in `[lo, hi]`; `lo == hi` for exact values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogBracket {
    pub lo: f64,
    pub hi: f64,
}

impl LogBracket {
    pub fn exact(v: f64) -> Self {
        LogBracket { lo: v, hi: v }
    }

    pub fn zero() -> Self {
        Self::exact(f64::NEG_INFINITY)
    }

    pub fn is_exact(&self) -> bool {
        self.lo == self.hi
    }

    /// Log of the linear midpoint of the bracket.
    pub fn central(&self) -> f64 {
        if self.is_exact() {
            return self.lo;
        }
        log_add_exp(self.lo, self.hi) - std::f64::consts::LN_2
    }

    /// Sum of the underlying linear quantities.
    #[allow(clippy::should_implement_trait)]
    pub fn add(self, other: LogBracket) -> LogBracket {
        LogBracket {
            lo: log_add_exp(self.lo, other.lo),
            hi: log_add_exp(self.hi, other.hi),
        }
    }

    /// Product with a positive exactly known factor `exp(log_factor)`.
    pub fn scale(self, log_factor: f64) -> LogBracket {
        LogBracket {
            lo: self.lo + log_factor,
            hi: self.hi + log_factor,
        }
    }

    /// Bracket of the quotient `self / den`.
    pub fn ratio(self, den: LogBracket) -> LogBracket {
        LogBracket {
            lo: self.lo - den.hi,
            hi: self.hi - den.lo,
        }
    }

    pub fn sum(items: impl IntoIterator<Item = LogBracket>) -> LogBracket {
        let (mut lo, mut hi) = (Vec::new(), Vec::new());
        for b in items {
            lo.push(b.lo);
            hi.push(b.hi);
        }
        LogBracket {
            lo: log_sum_exp(&lo),
            hi: log_sum_exp(&hi),
        }
    }
}
