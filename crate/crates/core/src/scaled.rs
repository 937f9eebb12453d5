//! Scaled-point arithmetic: reals written as `sum s_i * b^{m_i} * y_i + offset`.
//!
//! The representation exists so that the position of a point inside its
//! log-period `[b^M, b^{M+1})` stays exact even when the point itself is far
//! beyond binary64 range or when a small perturbation sits on top of a huge
//! dip center.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two terms are merged when the smaller is at least this fraction of the larger
/// and their sum is exact in binary64.
pub const DOMINANCE: f64 = 1.0 / 1_048_576.0;

/// Largest log-magnitude for which a term set is summed in plain binary64.
const PLAIN_LN_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub sign: i8,
    pub scale: i64,
    pub mantissa: f64,
}

impl Term {
    fn ln_mag(&self, ln_b: f64) -> f64 {
        self.scale as f64 * ln_b + self.mantissa.ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledSum {
    base: f64,
    terms: Vec<Term>,
    offset: f64,
}

/// Written as `+4^8*2+0.3`; the offset is omitted when zero.
impl std::fmt::Display for ScaledSum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "{}", self.offset);
        }
        for t in &self.terms {
            let s = if t.sign < 0 { '-' } else { '+' };
            write!(f, "{s}{}^{}*{}", self.base, t.scale, t.mantissa)?;
        }
        if self.offset != 0.0 {
            write!(f, "{:+}", self.offset)?;
        }
        Ok(())
    }
}

/// Split a positive finite `v` into `(k, y)` with `v = b^k * y`, `y` in `[1, b)`.
pub(crate) fn decompose(base: f64, v: f64) -> (i64, f64) {
    debug_assert!(v > 0.0 && v.is_finite());
    let mut k = (v.ln() / base.ln()).floor() as i64;
    let mut y = scale_by_pow(v, base, -k);
    while y >= base {
        y /= base;
        k += 1;
    }
    while y < 1.0 {
        y *= base;
        k -= 1;
    }
    (k, y)
}

/// `v * b^k` without intermediate overflow of `b^k`.
fn scale_by_pow(v: f64, base: f64, k: i64) -> f64 {
    let mut out = v;
    let mut rem = k;
    while rem != 0 {
        let step = rem.clamp(-256, 256);
        out *= base.powi(step as i32);
        rem -= step;
    }
    out
}

impl ScaledSum {
    pub fn zero(base: f64) -> Self {
        ScaledSum {
            base,
            terms: Vec::new(),
            offset: 0.0,
        }
    }

    /// `b^scale * mantissa + offset`, normalized.
    pub fn new(base: f64, scale: i64, mantissa: f64, offset: f64) -> Result<Self> {
        Self::from_parts(
            base,
            vec![Term {
                sign: 1,
                scale,
                mantissa,
            }],
            offset,
        )
    }

    pub fn from_parts(base: f64, terms: Vec<Term>, offset: f64) -> Result<Self> {
        if !(base > 1.0 && base.is_finite()) {
            return Err(Error::Parameter(format!(
                "scaled base must be finite and > 1, got {base}"
            )));
        }
        if !offset.is_finite() || terms.iter().any(|t| !t.mantissa.is_finite() || t.sign.abs() != 1) {
            return Err(Error::Contract("non-finite or unsigned scaled term".into()));
        }
        let mut s = ScaledSum { base, terms, offset };
        s.normalize();
        Ok(s)
    }

    pub fn from_f64(base: f64, v: f64) -> Self {
        assert!(v.is_finite(), "ScaledSum::from_f64 needs a finite value");
        let mut s = ScaledSum {
            base,
            terms: Vec::new(),
            offset: v,
        };
        s.normalize();
        s
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn dominant(&self) -> Option<Term> {
        self.terms.first().copied()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty() && self.offset == 0.0
    }

    /// Checks the canonical-form invariants; every constructor establishes them.
    pub fn is_normalized(&self) -> bool {
        let ln_b = self.base.ln();
        let mantissas_ok = self
            .terms
            .iter()
            .all(|t| t.mantissa >= 1.0 && t.mantissa < self.base && t.sign.abs() == 1);
        let ordered = self.terms.windows(2).all(|w| w[1].ln_mag(ln_b) <= w[0].ln_mag(ln_b));
        let dominated_offset = match self.terms.first() {
            Some(t) => self.offset.abs() < 1.0 && self.offset.abs().ln() - t.ln_mag(ln_b) < DOMINANCE.ln(),
            None => self.offset.abs() < 1.0,
        };
        self.offset.is_finite() && mantissas_ok && ordered && dominated_offset
    }

    fn normalize(&mut self) {
        let base = self.base;
        let ln_b = base.ln();
        let mut terms: Vec<Term> = Vec::with_capacity(self.terms.len() + 1);
        for t in self.terms.drain(..) {
            if t.mantissa == 0.0 {
                continue;
            }
            let sign = if t.mantissa < 0.0 { -t.sign } else { t.sign };
            let (k, y) = decompose(base, t.mantissa.abs());
            terms.push(Term {
                sign,
                scale: t.scale + k,
                mantissa: y,
            });
        }
        let mut offset = self.offset;
        loop {
            let mut changed = false;
            if offset != 0.0 {
                let top = terms.iter().map(|t| t.ln_mag(ln_b)).fold(f64::NEG_INFINITY, f64::max);
                if offset.abs() >= 1.0 || offset.abs().ln() - top >= DOMINANCE.ln() {
                    let (k, y) = decompose(base, offset.abs());
                    terms.push(Term {
                        sign: if offset < 0.0 { -1 } else { 1 },
                        scale: k,
                        mantissa: y,
                    });
                    offset = 0.0;
                    changed = true;
                }
            }
            terms.sort_by(|a, b| b.ln_mag(ln_b).total_cmp(&a.ln_mag(ln_b)));
            let mut out: Vec<Term> = Vec::with_capacity(terms.len());
            for t in terms.drain(..) {
                if let Some(last) = out.last_mut() {
                    if t.ln_mag(ln_b) - last.ln_mag(ln_b) >= DOMINANCE.ln() {
                        let shift = f64::from(t.sign) * scale_by_pow(t.mantissa, base, t.scale - last.scale);
                        let lead = f64::from(last.sign) * last.mantissa;
                        let v = lead + shift;
                        // Merge only when lossless: a rounded merge would move the
                        // point, and with it the dip distance it encodes.
                        let bv = v - lead;
                        if (lead - (v - bv)) + (shift - bv) != 0.0 {
                            out.push(t);
                            continue;
                        }
                        changed = true;
                        if v == 0.0 {
                            out.pop();
                        } else {
                            let (k, y) = decompose(base, v.abs());
                            *last = Term {
                                sign: if v < 0.0 { -1 } else { 1 },
                                scale: last.scale + k,
                                mantissa: y,
                            };
                        }
                        continue;
                    }
                }
                out.push(t);
            }
            terms = out;
            if !changed {
                break;
            }
        }
        self.terms = terms;
        self.offset = offset;
    }

    pub fn neg(&self) -> Self {
        ScaledSum {
            base: self.base,
            terms: self.terms.iter().map(|t| Term { sign: -t.sign, ..*t }).collect(),
            offset: -self.offset,
        }
    }

    pub fn add(&self, other: &ScaledSum) -> ScaledSum {
        assert_eq!(self.base, other.base, "ScaledSum bases differ");
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        let mut s = ScaledSum {
            base: self.base,
            terms,
            offset: self.offset + other.offset,
        };
        s.normalize();
        s
    }

    pub fn sub(&self, other: &ScaledSum) -> ScaledSum {
        self.add(&other.neg())
    }

    pub fn add_f64(&self, v: f64) -> ScaledSum {
        self.add(&ScaledSum::from_f64(self.base, v))
    }

    /// Multiplies by `b^k`.
    pub fn mul_pow(&self, k: i64) -> ScaledSum {
        let mut terms: Vec<Term> = self
            .terms
            .iter()
            .map(|t| Term {
                scale: t.scale + k,
                ..*t
            })
            .collect();
        if self.offset != 0.0 {
            let (j, y) = decompose(self.base, self.offset.abs());
            terms.push(Term {
                sign: if self.offset < 0.0 { -1 } else { 1 },
                scale: j + k,
                mantissa: y,
            });
        }
        let mut s = ScaledSum {
            base: self.base,
            terms,
            offset: 0.0,
        };
        s.normalize();
        s
    }

    /// -1, 0 or 1.
    pub fn signum(&self) -> i8 {
        match self.terms.first() {
            Some(t) => t.sign,
            None if self.offset > 0.0 => 1,
            None if self.offset < 0.0 => -1,
            None => 0,
        }
    }

    /// Nearest binary64 value; `+-inf` when out of range.
    pub fn to_f64(&self) -> f64 {
        let mut acc = crate::logspace::Neumaier::default();
        acc.add(self.offset);
        for t in self.terms.iter().rev() {
            acc.add(f64::from(t.sign) * scale_by_pow(t.mantissa, self.base, t.scale));
        }
        acc.total()
    }

    /// `ln |x|`; `-inf` for zero.
    pub fn ln_abs(&self) -> f64 {
        let Some(d) = self.terms.first() else {
            return self.offset.abs().ln();
        };
        let ln_b = self.base.ln();
        let rest = self.rest();
        let rel = rest.relative_to(d.scale, ln_b);
        d.scale as f64 * ln_b + (d.mantissa + f64::from(d.sign) * rel).ln()
    }

    /// Everything except the dominant term.
    pub fn rest(&self) -> ScaledSum {
        ScaledSum {
            base: self.base,
            terms: self.terms.iter().skip(1).copied().collect(),
            offset: self.offset,
        }
    }

    /// `self * b^{-scale}` as binary64 (underflows to zero gracefully).
    fn relative_to(&self, scale: i64, ln_b: f64) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let s = f64::from(self.signum());
        s * (self.ln_abs() - scale as f64 * ln_b).exp()
    }

    /// Whether the value fits binary64 comfortably.
    pub fn is_plain(&self) -> bool {
        self.ln_abs() < PLAIN_LN_LIMIT
    }

    pub fn cmp_value(&self, other: &ScaledSum) -> std::cmp::Ordering {
        self.sub(other).signum().cmp(&0)
    }
}

/// Phase of `anchor + t` inside its log-period, computed without forming the sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    /// Period index: the point lies in `[b^scale, b^{scale+1})`.
    pub scale: i64,
    /// Mantissa in `[1, b)`.
    pub mantissa: f64,
    /// `ln(anchor + t)`.
    pub log_x: f64,
    /// `ln |mantissa - center|`, exact when the anchor is centered; `-inf` at the center.
    pub ln_dist: f64,
}

/// Precomputed decomposition of an anchor for repeated phase evaluation at `anchor + t`.
///
/// When the anchor's dominant mantissa equals `center` exactly, the distance to
/// the center is carried as `ln |rest + t| - M ln b`, which keeps full relative
/// precision for perturbations far below binary64 resolution of the anchor.
#[derive(Debug, Clone)]
pub struct PhaseFrame {
    base: f64,
    ln_b: f64,
    center: f64,
    sign: f64,
    scale: i64,
    mantissa: f64,
    rest_rel: f64,
    rest_plain: Option<f64>,
    rest_ln: f64,
    centered: bool,
}

impl PhaseFrame {
    pub fn new(anchor: &ScaledSum, center: f64) -> Self {
        let base = anchor.base;
        let ln_b = base.ln();
        let (sign, scale, mantissa) = match anchor.dominant() {
            Some(t) => (f64::from(t.sign), t.scale, t.mantissa),
            None => (0.0, 0, 0.0),
        };
        let rest = anchor.rest();
        let rest_ln = rest.ln_abs();
        let rest_plain = (rest_ln < PLAIN_LN_LIMIT).then(|| rest.to_f64());
        let rest_rel = match rest_plain {
            Some(r) if scale.abs() <= 256 => r * base.powi(-scale as i32),
            _ => rest.relative_to(scale, ln_b),
        };
        PhaseFrame {
            base,
            ln_b,
            center,
            sign,
            scale,
            mantissa,
            rest_rel,
            rest_plain,
            rest_ln,
            centered: sign > 0.0 && mantissa == center,
        }
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    /// Phase of `anchor + t`, or `None` when that point is not positive.
    pub fn at(&self, t: f64) -> Option<Phase> {
        let t_rel = if t == 0.0 {
            0.0
        } else if self.scale.abs() <= 256 {
            t * self.base.powi(-self.scale as i32)
        } else {
            t.signum() * (t.abs().ln() - self.scale as f64 * self.ln_b).exp()
        };
        let y_raw = self.sign * self.mantissa + self.rest_rel + t_rel;
        if !(y_raw > 0.0) {
            return None;
        }
        let (k, y) = if self.sign > 0.0 && y_raw >= 1.0 && y_raw < self.base {
            (0, y_raw)
        } else {
            decompose(self.base, y_raw)
        };
        let scale = self.scale + k;
        let ln_dist = if self.centered && k == 0 {
            match self.rest_plain {
                Some(r) => (r + t).abs().ln() - self.scale as f64 * self.ln_b,
                None => self.rest_ln - self.scale as f64 * self.ln_b,
            }
        } else {
            (y - self.center).abs().ln()
        };
        Some(Phase {
            scale,
            mantissa: y,
            log_x: scale as f64 * self.ln_b + y.ln(),
            ln_dist,
        })
    }
}
