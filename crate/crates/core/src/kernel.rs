//! Compactly supported piecewise-linear probability kernels and their self-convolutions.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

/// A linear piece on `[a, b)` running from `va` to `vb`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub a: f64,
    pub b: f64,
    pub va: f64,
    pub vb: f64,
}

impl Piece {
    fn eval(&self, s: f64) -> f64 {
        self.va + (self.vb - self.va) * (s - self.a) / (self.b - self.a)
    }

    fn integral_to(&self, s: f64) -> f64 {
        let s = s.clamp(self.a, self.b);
        0.5 * (s - self.a) * (self.va + self.eval(s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    Linear {
        pieces: Vec<Piece>,
    },
    /// `f * f` for a piecewise-linear `f`; piecewise cubic, evaluated exactly.
    SelfConv {
        pieces: Vec<Piece>,
    },
}

const GL3_X: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GL3_W: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

impl Kernel {
    pub fn linear(pieces: Vec<Piece>) -> Result<Kernel> {
        if pieces.is_empty() {
            return param("kernel needs at least one piece");
        }
        for w in pieces.windows(2) {
            if w[1].a < w[0].b {
                return param("kernel pieces must be ordered and non-overlapping");
            }
        }
        let mut mass = 0.0;
        for p in &pieces {
            if !(p.b > p.a) || p.va < 0.0 || p.vb < 0.0 || !p.va.is_finite() || !p.vb.is_finite() {
                return param("kernel pieces need b > a and finite non-negative values");
            }
            mass += 0.5 * (p.b - p.a) * (p.va + p.vb);
        }
        if (mass - 1.0).abs() > 1e-12 {
            return param(format!("kernel must integrate to 1, got {mass}"));
        }
        Ok(Kernel::Linear { pieces })
    }

    /// Symmetric triangle density on `[0, width]`.
    pub fn triangle(width: f64) -> Kernel {
        let h = 2.0 / width;
        Kernel::linear(vec![
            Piece {
                a: 0.0,
                b: 0.5 * width,
                va: 0.0,
                vb: h,
            },
            Piece {
                a: 0.5 * width,
                b: width,
                va: h,
                vb: 0.0,
            },
        ])
        .expect("triangle is a density")
    }

    /// `c^{-1} 1[0, c)`.
    pub fn uniform(c: f64) -> Kernel {
        Kernel::linear(vec![Piece {
            a: 0.0,
            b: c,
            va: 1.0 / c,
            vb: 1.0 / c,
        }])
        .expect("uniform is a density")
    }

    pub fn self_convolved(&self) -> Result<Kernel> {
        match self {
            Kernel::Linear { pieces } => Ok(Kernel::SelfConv { pieces: pieces.clone() }),
            Kernel::SelfConv { .. } => param("only piecewise-linear kernels can be self-convolved"),
        }
    }

    fn pieces(&self) -> &[Piece] {
        match self {
            Kernel::Linear { pieces } | Kernel::SelfConv { pieces } => pieces,
        }
    }

    /// Support `[lo, hi)`.
    pub fn support(&self) -> (f64, f64) {
        let p = self.pieces();
        let (lo, hi) = (p[0].a, p[p.len() - 1].b);
        match self {
            Kernel::Linear { .. } => (lo, hi),
            Kernel::SelfConv { .. } => (2.0 * lo, 2.0 * hi),
        }
    }

    fn base_knots(&self) -> Vec<f64> {
        let mut k: Vec<f64> = self.pieces().iter().flat_map(|p| [p.a, p.b]).collect();
        k.sort_by(f64::total_cmp);
        k.dedup();
        k
    }

    /// Points where the kernel or one of its derivatives may jump.
    pub fn knots(&self) -> Vec<f64> {
        let base = self.base_knots();
        match self {
            Kernel::Linear { .. } => base,
            Kernel::SelfConv { .. } => {
                let mut k: Vec<f64> = base.iter().flat_map(|a| base.iter().map(move |b| a + b)).collect();
                k.sort_by(f64::total_cmp);
                k.dedup();
                k
            }
        }
    }

    fn piece_at(pieces: &[Piece], s: f64) -> Option<&Piece> {
        pieces.iter().find(|p| p.a <= s && s < p.b)
    }

    pub fn density(&self, s: f64) -> f64 {
        match self {
            Kernel::Linear { pieces } => Self::piece_at(pieces, s).map_or(0.0, |p| p.eval(s)),
            Kernel::SelfConv { pieces } => {
                let (lo, hi) = (pieces[0].a, pieces[pieces.len() - 1].b);
                let (vlo, vhi) = (lo.max(s - hi), hi.min(s - lo));
                if !(vlo < vhi) {
                    return 0.0;
                }
                let mut cuts: Vec<f64> = self
                    .base_knots()
                    .into_iter()
                    .flat_map(|k| [k, s - k])
                    .filter(|&v| v > vlo && v < vhi)
                    .collect();
                cuts.push(vlo);
                cuts.push(vhi);
                cuts.sort_by(f64::total_cmp);
                let mut acc = 0.0;
                for w in cuts.windows(2) {
                    let (p, q) = (w[0], w[1]);
                    if q <= p {
                        continue;
                    }
                    let m = 0.5 * (p + q);
                    let (Some(f1), Some(f2)) = (Self::piece_at(pieces, m), Self::piece_at(pieces, s - m)) else {
                        continue;
                    };
                    // Product of two linear functions: Simpson is exact.
                    let g = |v: f64| f1.eval(v) * f2.eval(s - v);
                    acc += (q - p) / 6.0 * (g(p) + 4.0 * g(m) + g(q));
                }
                acc
            }
        }
    }

    pub fn cdf(&self, s: f64) -> f64 {
        match self {
            Kernel::Linear { pieces } => pieces.iter().map(|p| p.integral_to(s)).sum(),
            Kernel::SelfConv { .. } => {
                let (lo, hi) = self.support();
                if s <= lo {
                    return 0.0;
                }
                if s >= hi {
                    return 1.0;
                }
                let knots = self.knots();
                let mut acc = 0.0;
                let mut prev = lo;
                for &k in knots.iter().filter(|&&k| k > lo).chain(std::iter::once(&s)) {
                    let q = k.min(s);
                    if q > prev {
                        let (c, r) = (0.5 * (prev + q), 0.5 * (q - prev));
                        acc += r * GL3_X
                            .iter()
                            .zip(GL3_W)
                            .map(|(x, w)| w * self.density(c + r * x))
                            .sum::<f64>();
                        prev = q;
                    }
                    if k >= s {
                        break;
                    }
                }
                acc.min(1.0)
            }
        }
    }

    /// Kernel mass of `(lo, hi]`.
    pub fn mass(&self, lo: f64, hi: f64) -> f64 {
        if !(hi > lo) {
            return 0.0;
        }
        (self.cdf(hi) - self.cdf(lo)).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_basics() {
        let k = Kernel::triangle(2.0);
        assert_eq!(k.density(1.0), 1.0);
        assert_eq!(k.density(0.5), 0.5);
        assert_eq!(k.density(2.0), 0.0);
        assert!((k.cdf(1.0) - 0.5).abs() < 1e-15);
        assert!((k.mass(0.0, 2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_self_convolution_is_triangle() {
        let k = Kernel::uniform(1.0).self_convolved().unwrap();
        let t = Kernel::triangle(2.0);
        for i in 0..=40 {
            let s = -0.5 + 3.0 * i as f64 / 40.0;
            assert!((k.density(s) - t.density(s)).abs() < 1e-14, "s = {s}");
            assert!((k.cdf(s) - t.cdf(s)).abs() < 1e-14, "s = {s}");
        }
    }

    #[test]
    fn triangle_self_convolution_integrates_to_one() {
        let k = Kernel::triangle(1.0).self_convolved().unwrap();
        assert!((k.cdf(2.0) - 1.0).abs() < 1e-14);
        assert!((k.cdf(1.0) - 0.5).abs() < 1e-14);
        // Peak value of the triangle's self-convolution: int f(v)^2 dv = 4/3.
        assert!((k.density(1.0) - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_density() {
        assert!(Kernel::linear(vec![Piece {
            a: 0.0,
            b: 1.0,
            va: 1.0,
            vb: 2.0
        }])
        .is_err());
    }
}
