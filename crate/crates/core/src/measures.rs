//! Probability measures as finite mixtures over a closed set of component kinds.
//!
//! Every query reduces to one primitive, [`Component::weighted_window`]: the log of
//! `\int T(u - x) comp(du)` for a test function `T` in shifted coordinates. Local
//! masses, kernel smoothing, tilts and convolution integrands are all instances.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::kernel::Kernel;
use crate::logspace::{log_add_exp, log_sub_exp, log_sum_exp};
use crate::model::{ModelParams, PeriodicProfile};
use crate::quadrature::{integrate_log, QuadratureSpec};
use crate::scaled::PhaseFrame;
use crate::scaled::ScaledSum;

/// Window `(x, x + c]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub c: f64,
}

impl WindowSpec {
    pub fn new(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return param(format!("window width must be positive, got {c}"));
        }
        Ok(WindowSpec { c })
    }
}

/// Test functions in shifted coordinates `s = u - x`.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFn {
    /// Indicator of `(lo, hi]`.
    Window { lo: f64, hi: f64 },
    /// `K(shift - s)`.
    KernelDensity { kernel: Arc<Kernel>, shift: f64 },
    /// `K((lo - s, hi - s])`.
    KernelWindow { kernel: Arc<Kernel>, lo: f64, hi: f64 },
    /// `K((at - s, inf))`, restricted to `s <= at`.
    KernelTail { kernel: Arc<Kernel>, at: f64 },
    /// `inner(s) * exp(gamma * (origin + s))`.
    Exp {
        inner: Box<TestFn>,
        gamma: f64,
        origin: f64,
    },
}

impl TestFn {
    pub fn window(c: f64) -> TestFn {
        TestFn::Window { lo: 0.0, hi: c }
    }

    /// `s -> T(s + u)`.
    pub fn shifted(&self, u: f64) -> TestFn {
        match self {
            TestFn::Window { lo, hi } => TestFn::Window { lo: lo - u, hi: hi - u },
            TestFn::KernelDensity { kernel, shift } => TestFn::KernelDensity {
                kernel: kernel.clone(),
                shift: shift - u,
            },
            TestFn::KernelWindow { kernel, lo, hi } => TestFn::KernelWindow {
                kernel: kernel.clone(),
                lo: lo - u,
                hi: hi - u,
            },
            TestFn::KernelTail { kernel, at } => TestFn::KernelTail {
                kernel: kernel.clone(),
                at: at - u,
            },
            TestFn::Exp { inner, gamma, origin } => TestFn::Exp {
                inner: Box::new(inner.shifted(u)),
                gamma: *gamma,
                origin: origin + u,
            },
        }
    }

    /// Support as `(lo, hi]`.
    pub fn support(&self) -> (f64, f64) {
        match self {
            TestFn::Window { lo, hi } => (*lo, *hi),
            TestFn::KernelDensity { kernel, shift } => {
                let (kl, kh) = kernel.support();
                (shift - kh, shift - kl)
            }
            TestFn::KernelWindow { kernel, lo, hi } => {
                let (kl, kh) = kernel.support();
                (lo - kh, hi - kl)
            }
            TestFn::KernelTail { kernel, at } => {
                let (_, kh) = kernel.support();
                (at - kh, *at)
            }
            TestFn::Exp { inner, .. } => inner.support(),
        }
    }

    pub fn log_value(&self, s: f64) -> f64 {
        let (lo, hi) = self.support();
        if !(s > lo && s <= hi) {
            return f64::NEG_INFINITY;
        }
        match self {
            TestFn::Window { .. } => 0.0,
            TestFn::KernelDensity { kernel, shift } => kernel.density(shift - s).ln(),
            TestFn::KernelWindow { kernel, lo, hi } => kernel.mass(lo - s, hi - s).ln(),
            TestFn::KernelTail { kernel, at } => (1.0 - kernel.cdf(at - s)).max(0.0).ln(),
            TestFn::Exp { inner, gamma, origin } => inner.log_value(s) + gamma * (origin + s),
        }
    }

    pub fn breaks(&self) -> Vec<f64> {
        match self {
            TestFn::Window { lo, hi } => vec![*lo, *hi],
            TestFn::KernelDensity { kernel, shift } => kernel.knots().into_iter().map(|k| shift - k).collect(),
            TestFn::KernelWindow { kernel, lo, hi } => {
                kernel.knots().into_iter().flat_map(|k| [lo - k, hi - k]).collect()
            }
            TestFn::KernelTail { kernel, at } => kernel.knots().into_iter().map(|k| at - k).collect(),
            TestFn::Exp { inner, .. } => inner.breaks(),
        }
    }

    /// `ln \int T(s) ds` when `T` is a bounded-mass test function with unit peak scale.
    pub fn log_mass(&self) -> Option<f64> {
        match self {
            TestFn::Window { lo, hi } => Some((hi - lo).ln()),
            TestFn::KernelDensity { .. } => Some(0.0),
            TestFn::KernelWindow { lo, hi, .. } => Some((hi - lo).ln()),
            TestFn::KernelTail { .. } | TestFn::Exp { .. } => None,
        }
    }

    /// `ln sup T`, for analytic remainder bounds.
    pub fn log_sup(&self) -> Option<f64> {
        match self {
            TestFn::Window { .. } | TestFn::KernelWindow { .. } | TestFn::KernelTail { .. } => Some(0.0),
            TestFn::KernelDensity { kernel, .. } => {
                let top = kernel
                    .knots()
                    .into_iter()
                    .map(|k| kernel.density(k))
                    .fold(0.0, f64::max);
                Some(top.ln())
            }
            TestFn::Exp { .. } => None,
        }
    }

    fn as_interval(&self) -> Option<(f64, f64)> {
        match self {
            TestFn::Window { lo, hi } => Some((*lo, *hi)),
            _ => None,
        }
    }
}

/// Which part of a component a query refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    All,
    Continuous,
    Atoms,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Component {
    /// `phi / M` on `[1, inf)`.
    PhiAC {
        params: ModelParams,
        normalizer: f64,
    },
    /// Uniform density on `[left, left + width)`.
    UniformAC {
        left: f64,
        width: f64,
    },
    /// Density `alpha (1 + x)^{-alpha - 1}` on `[0, inf)`.
    LomaxAC {
        alpha: f64,
    },
    /// `K * base`, an absolutely continuous smoothing.
    KernelAC {
        kernel: Arc<Kernel>,
        base: Arc<MixtureDistribution>,
    },
    /// Atoms at scaled locations.
    AtomSeries {
        locations: Vec<ScaledSum>,
        weights: Vec<f64>,
    },
    PointMass {
        location: f64,
    },
    /// `exp(gamma u) base(du) / exp(log_normalizer)`.
    Tilted {
        gamma: f64,
        base: Arc<MixtureDistribution>,
        log_normalizer: f64,
    },
}

/// Kinks of the `phi` density in shifted coordinates `t in (lo, hi)` around `x`.
pub fn phi_breaks(params: &ModelParams, hints: &[f64], x: &ScaledSum, lo: f64, hi: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let edge = ScaledSum::from_f64(params.b, 1.0).sub(x).to_f64();
    if edge > lo && edge < hi {
        out.push(edge);
    }
    let abs_hi = x.add_f64(hi);
    if abs_hi.signum() <= 0 || abs_hi.ln_abs() <= 0.0 {
        return out;
    }
    let abs_lo = x.add_f64(lo);
    let ln_b = params.ln_b();
    let m_lo = if abs_lo.signum() > 0 && abs_lo.ln_abs() > 0.0 {
        (abs_lo.ln_abs() / ln_b).floor() as i64 - 1
    } else {
        0
    }
    .max(0);
    let m_hi = (abs_hi.ln_abs() / ln_b).ceil() as i64 + 1;
    let mut phases = vec![params.x0 - params.delta, params.x0, params.x0 + params.delta];
    phases.extend(hints.iter().copied().filter(|&y| y > 1.0 && y < params.b));
    for m in m_lo..=m_hi {
        for &y in &phases {
            let t = params.point(m, y).sub(x).to_f64();
            if t > lo && t < hi {
                out.push(t);
            }
        }
    }
    out
}

/// `ln \int_lo^hi phi(x + t) dt`: plateau segments in closed form, dip segments by quadrature.
fn phi_interval(
    profile: &PeriodicProfile,
    frame: &PhaseFrame,
    x: &ScaledSum,
    lo: f64,
    hi: f64,
    mut cuts: Vec<f64>,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let alpha = profile.params.alpha;
    cuts.push(lo);
    cuts.push(hi);
    cuts.retain(|t| *t >= lo && *t <= hi);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut parts = Vec::with_capacity(cuts.len());
    let mut dips = Vec::new();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if profile.in_dip(frame, 0.5 * (a + b)) {
            dips.push((a, b));
        } else {
            // K \int_a^b v^{-1-alpha} dv with v = x + t
            let ln_va = x.add_f64(a).ln_abs();
            let ln_r = (b - a).ln() - ln_va;
            // 1 - (1 + r)^{-alpha}, which is alpha r to first order once r underflows
            let ln_frac = if ln_r < -40.0 {
                alpha.ln() + ln_r
            } else {
                (-(-alpha * ln_r.exp().ln_1p()).exp_m1()).ln()
            };
            parts.push(profile.plateau.ln() - alpha * ln_va - alpha.ln() + ln_frac);
        }
    }
    if let (Some(first), Some(last)) = (dips.first(), dips.last()) {
        // One call for all dip pieces, so a sliver touching a center is judged
        // against the whole dip contribution rather than on its own.
        let inside = |t: f64| dips.iter().any(|(a, b)| t >= *a && t <= *b);
        let br: Vec<f64> = dips.iter().flat_map(|(a, b)| [*a, *b]).collect();
        parts.push(integrate_log(
            |t| {
                if inside(t) {
                    profile.log_phi(frame, t)
                } else {
                    f64::NEG_INFINITY
                }
            },
            first.0,
            last.1,
            &br,
            quad,
        )?);
    }
    Ok(log_sum_exp(&parts))
}

impl Component {
    pub fn has_continuous(&self) -> bool {
        match self {
            Component::PhiAC { .. }
            | Component::UniformAC { .. }
            | Component::LomaxAC { .. }
            | Component::KernelAC { .. } => true,
            Component::AtomSeries { .. } | Component::PointMass { .. } => false,
            Component::Tilted { base, .. } => base.has_continuous(),
        }
    }

    pub fn has_atoms(&self) -> bool {
        match self {
            Component::AtomSeries { .. } | Component::PointMass { .. } => true,
            Component::Tilted { base, .. } => base.has_atoms(),
            _ => false,
        }
    }

    /// Absolute support hull `[lo, hi]`; infinite ends allowed.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Component::PhiAC { .. } => (1.0, f64::INFINITY),
            Component::UniformAC { left, width } => (*left, left + width),
            Component::LomaxAC { .. } => (0.0, f64::INFINITY),
            Component::KernelAC { kernel, base } => {
                let (kl, kh) = kernel.support();
                let (bl, bh) = base.support();
                (bl + kl, bh + kh)
            }
            Component::AtomSeries { locations, .. } => {
                let v: Vec<f64> = locations.iter().map(|l| l.to_f64()).collect();
                (
                    v.iter().copied().fold(f64::INFINITY, f64::min),
                    v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                )
            }
            Component::PointMass { location } => (*location, *location),
            Component::Tilted { base, .. } => base.support(),
        }
    }

    /// Atoms as `(location, ln weight)`, plain locations expressed in scaled base `base`.
    pub fn atoms(&self, base: f64) -> Result<Vec<(ScaledSum, f64)>> {
        match self {
            Component::AtomSeries { locations, weights } => Ok(locations
                .iter()
                .zip(weights)
                .filter(|(_, w)| **w > 0.0)
                .map(|(l, w)| (l.clone(), w.ln()))
                .collect()),
            Component::PointMass { location } => Ok(vec![(ScaledSum::from_f64(base, *location), 0.0)]),
            Component::Tilted {
                gamma,
                base: inner,
                log_normalizer,
            } => {
                let mut out = Vec::new();
                for (w, c) in &inner.components {
                    for (loc, lw) in c.atoms(base)? {
                        let a = loc.to_f64();
                        if !a.is_finite() {
                            return Err(Error::Unsupported("tilting an atom beyond binary64 range".into()));
                        }
                        out.push((loc, lw + w.ln() + gamma * a - log_normalizer));
                    }
                }
                Ok(out)
            }
            _ => Ok(Vec::new()),
        }
    }

    /// Kinks of the continuous part's density at `x + t`, `t in (lo, hi)`.
    pub fn breaks(&self, x: &ScaledSum, lo: f64, hi: f64, quad: &QuadratureSpec) -> Vec<f64> {
        let xf = x.to_f64();
        let keep = |v: &f64| *v > lo && *v < hi;
        match self {
            Component::PhiAC { params, .. } => phi_breaks(params, &quad.hints, x, lo, hi),
            Component::UniformAC { left, width } => [left - xf, left + width - xf].into_iter().filter(keep).collect(),
            Component::LomaxAC { .. } => [-xf].into_iter().filter(keep).collect(),
            Component::KernelAC { kernel, base } => {
                let (kl, kh) = kernel.support();
                let knots = kernel.knots();
                let mut inner = base.breaks(x, lo - kh, hi - kl, quad);
                for (_, c) in &base.components {
                    if let Ok(atoms) = c.atoms(x.base()) {
                        inner.extend(atoms.iter().map(|(a, _)| a.sub(x).to_f64()));
                    }
                }
                inner
                    .into_iter()
                    .flat_map(|r| knots.iter().map(move |k| r + k))
                    .filter(keep)
                    .collect()
            }
            Component::AtomSeries { .. } | Component::PointMass { .. } => Vec::new(),
            Component::Tilted { base, .. } => base.breaks(x, lo, hi, quad),
        }
    }

    /// `ln` of the continuous part's density at `x + t`.
    pub fn log_density(&self, x: &ScaledSum, t: f64, quad: &QuadratureSpec) -> Result<f64> {
        Ok(match self {
            Component::PhiAC { params, normalizer } => {
                let profile = params.profile();
                profile.log_phi(&profile.frame(x), t) - normalizer.ln()
            }
            Component::UniformAC { left, width } => {
                let v = x.to_f64() + t;
                if v >= *left && v < left + width {
                    -width.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Component::LomaxAC { alpha } => {
                let v = x.to_f64() + t;
                if v >= 0.0 {
                    alpha.ln() - (alpha + 1.0) * v.ln_1p()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Component::KernelAC { kernel, base } => base.weighted_window(
                x,
                &TestFn::KernelDensity {
                    kernel: kernel.clone(),
                    shift: t,
                },
                quad,
            )?,
            Component::AtomSeries { .. } | Component::PointMass { .. } => f64::NEG_INFINITY,
            Component::Tilted {
                gamma,
                base,
                log_normalizer,
            } => {
                let xf = finite_anchor(x)?;
                base.log_density(x, t, quad)? + gamma * (xf + t) - log_normalizer
            }
        })
    }

    /// `ln \int T(u - x) comp(du)`.
    pub fn weighted_window(&self, x: &ScaledSum, test: &TestFn, quad: &QuadratureSpec) -> Result<f64> {
        self.weighted_window_part(x, test, Part::All, quad)
    }

    pub fn weighted_window_part(&self, x: &ScaledSum, test: &TestFn, part: Part, quad: &QuadratureSpec) -> Result<f64> {
        let (tlo, thi) = test.support();
        if !(tlo < thi) {
            return Ok(f64::NEG_INFINITY);
        }
        let continuous = part != Part::Atoms;
        let atoms = part != Part::Continuous;
        match self {
            Component::PhiAC { params, normalizer } => {
                if !continuous {
                    return Ok(f64::NEG_INFINITY);
                }
                let edge = ScaledSum::from_f64(params.b, 1.0).sub(x).to_f64();
                let lo = tlo.max(edge);
                if !(lo < thi) {
                    return Ok(f64::NEG_INFINITY);
                }
                if !thi.is_finite() {
                    return Err(Error::Unsupported("unbounded test function against phi".into()));
                }
                let profile = params.profile();
                let frame = profile.frame(x);
                let mut br = phi_breaks(params, &quad.hints, x, lo, thi);
                let ln_m = normalizer.ln();
                if test.as_interval().is_some() {
                    return phi_interval(&profile, &frame, x, lo, thi, br, quad).map(|v| v - ln_m);
                }
                br.extend(test.breaks());
                integrate_log(
                    |t| profile.log_phi(&frame, t) + test.log_value(t) - ln_m,
                    lo,
                    thi,
                    &br,
                    quad,
                )
            }
            Component::UniformAC { left, width } => {
                if !continuous {
                    return Ok(f64::NEG_INFINITY);
                }
                let xf = finite_anchor(x)?;
                let lo = tlo.max(left - xf);
                let hi = thi.min(left + width - xf);
                if !(lo < hi) {
                    return Ok(f64::NEG_INFINITY);
                }
                if test.as_interval().is_some() {
                    return Ok((hi - lo).ln() - width.ln());
                }
                let lw = width.ln();
                integrate_log(|t| test.log_value(t) - lw, lo, hi, &test.breaks(), quad)
            }
            Component::LomaxAC { alpha } => {
                if !continuous {
                    return Ok(f64::NEG_INFINITY);
                }
                let xf = finite_anchor(x)?;
                let lo = tlo.max(-xf);
                if !(lo < thi) {
                    return Ok(f64::NEG_INFINITY);
                }
                if test.as_interval().is_some() {
                    let ls = |t: f64| -alpha * (xf + t).ln_1p();
                    return Ok(if thi.is_finite() {
                        log_sub_exp(ls(lo), ls(thi))
                    } else {
                        ls(lo)
                    });
                }
                if !thi.is_finite() {
                    return Err(Error::Unsupported(
                        "unbounded test function against a Lomax density".into(),
                    ));
                }
                let la = alpha.ln();
                integrate_log(
                    |t| la - (alpha + 1.0) * (xf + t).ln_1p() + test.log_value(t),
                    lo,
                    thi,
                    &test.breaks(),
                    quad,
                )
            }
            Component::KernelAC { kernel, base } => {
                if !continuous {
                    return Ok(f64::NEG_INFINITY);
                }
                if let Some((lo, hi)) = test.as_interval() {
                    // int 1(lo < u - x <= hi) (K * base)(du) = int K((x + lo - v, x + hi - v]) base(dv)
                    return base.weighted_window(
                        x,
                        &TestFn::KernelWindow {
                            kernel: kernel.clone(),
                            lo,
                            hi,
                        },
                        quad,
                    );
                }
                if !thi.is_finite() {
                    return Err(Error::Unsupported(
                        "unbounded test function against a smoothed density".into(),
                    ));
                }
                let (clo, chi) = self.support();
                let xf = x.to_f64();
                let (lo, hi) = if xf.is_finite() {
                    (tlo.max(clo - xf), thi.min(chi - xf))
                } else {
                    (tlo, thi)
                };
                if !(lo < hi) {
                    return Ok(f64::NEG_INFINITY);
                }
                let mut br = self.breaks(x, lo, hi, quad);
                br.extend(test.breaks());
                let inner = quad.inner();
                let failure = std::cell::RefCell::new(None);
                let v = integrate_log(
                    |t| {
                        let lt = test.log_value(t);
                        if lt == f64::NEG_INFINITY {
                            return lt;
                        }
                        match self.log_density(x, t, &inner) {
                            Ok(d) => d + lt,
                            Err(e) => {
                                failure.borrow_mut().get_or_insert(e);
                                f64::NEG_INFINITY
                            }
                        }
                    },
                    lo,
                    hi,
                    &br,
                    quad,
                );
                match failure.into_inner() {
                    Some(e) => Err(e),
                    None => v,
                }
            }
            Component::AtomSeries { locations, weights } => {
                if !atoms {
                    return Ok(f64::NEG_INFINITY);
                }
                let terms: Vec<f64> = locations
                    .iter()
                    .zip(weights)
                    .map(|(l, w)| w.ln() + test.log_value(l.sub(x).to_f64()))
                    .collect();
                Ok(log_sum_exp(&terms))
            }
            Component::PointMass { location } => {
                if !atoms {
                    return Ok(f64::NEG_INFINITY);
                }
                let t = ScaledSum::from_f64(x.base(), *location).sub(x).to_f64();
                Ok(test.log_value(t))
            }
            Component::Tilted {
                gamma,
                base,
                log_normalizer,
            } => {
                let xf = finite_anchor(x)?;
                let tilted = TestFn::Exp {
                    inner: Box::new(test.clone()),
                    gamma: *gamma,
                    origin: xf,
                };
                Ok(base.weighted_window_part(x, &tilted, part, quad)? - log_normalizer)
            }
        }
    }

    /// `ln comp((x, inf))`.
    pub fn log_tail(&self, x: &ScaledSum, quad: &QuadratureSpec) -> Result<f64> {
        match self {
            Component::PhiAC { params, normalizer } => phi_log_tail(params, *normalizer, x, quad),
            Component::UniformAC { left, width } => {
                let xf = x.to_f64();
                Ok(((left + width - xf.max(*left)) / width).clamp(0.0, 1.0).ln())
            }
            Component::LomaxAC { alpha } => {
                let xf = x.to_f64();
                Ok(if xf <= 0.0 { 0.0 } else { -alpha * xf.ln_1p() })
            }
            Component::KernelAC { kernel, base } => {
                let above = base.log_tail(x, quad)?;
                let straddle = base.weighted_window(
                    x,
                    &TestFn::KernelTail {
                        kernel: kernel.clone(),
                        at: 0.0,
                    },
                    quad,
                )?;
                Ok(log_add_exp(above, straddle))
            }
            Component::AtomSeries { locations, weights } => {
                let terms: Vec<f64> = locations
                    .iter()
                    .zip(weights)
                    .filter(|(l, _)| l.sub(x).signum() > 0)
                    .map(|(_, w)| w.ln())
                    .collect();
                Ok(log_sum_exp(&terms))
            }
            Component::PointMass { location } => {
                let above = ScaledSum::from_f64(x.base(), *location).sub(x).signum() > 0;
                Ok(if above { 0.0 } else { f64::NEG_INFINITY })
            }
            Component::Tilted {
                gamma,
                base,
                log_normalizer,
            } => {
                let xf = finite_anchor(x)?;
                let v = chunked(base, x, xf, *gamma, quad)?;
                Ok(v - log_normalizer)
            }
        }
    }

    /// `ln \int e^{gamma u} comp(du)`.
    pub fn log_exp_moment(&self, gamma: f64, quad: &QuadratureSpec) -> Result<f64> {
        if gamma == 0.0 {
            return Ok(0.0);
        }
        match self {
            Component::PhiAC { params, .. } => {
                if gamma > 0.0 {
                    return Err(Error::DivergentMoment { gamma });
                }
                let m = MixtureDistribution::single(self.clone());
                chunked(&m, &ScaledSum::from_f64(params.b, 1.0), 1.0, gamma, quad)
            }
            Component::UniformAC { left, width } => {
                let gw = gamma * width;
                Ok(gamma * left + (gw.exp_m1() / gw).ln())
            }
            Component::LomaxAC { .. } => {
                if gamma > 0.0 {
                    return Err(Error::DivergentMoment { gamma });
                }
                let m = MixtureDistribution::single(self.clone());
                chunked(&m, &ScaledSum::zero(4.0), 0.0, gamma, quad)
            }
            Component::KernelAC { kernel, base } => {
                let (kl, kh) = kernel.support();
                let k = kernel.clone();
                let mut br = kernel.knots();
                br.retain(|v| *v > kl && *v < kh);
                let mk = integrate_log(|s| k.density(s).ln() + gamma * s, kl, kh, &br, quad)?;
                Ok(mk + base.log_exp_moment(gamma, quad)?)
            }
            Component::AtomSeries { locations, weights } => {
                let mut terms = Vec::with_capacity(weights.len());
                for (l, w) in locations.iter().zip(weights) {
                    let a = l.to_f64();
                    if !a.is_finite() {
                        return Err(Error::Unsupported(
                            "exponential moment of an atom beyond binary64 range".into(),
                        ));
                    }
                    terms.push(w.ln() + gamma * a);
                }
                Ok(log_sum_exp(&terms))
            }
            Component::PointMass { location } => Ok(gamma * location),
            Component::Tilted {
                gamma: g,
                base,
                log_normalizer,
            } => Ok(base.log_exp_moment(g + gamma, quad)? - log_normalizer),
        }
    }
}

fn finite_anchor(x: &ScaledSum) -> Result<f64> {
    let xf = x.to_f64();
    if xf.is_finite() {
        Ok(xf)
    } else {
        Err(Error::Unsupported(
            "anchor beyond binary64 range for a plain-coordinate component".into(),
        ))
    }
}

/// `ln \int_{(x, inf)} e^{gamma (u - x) + gamma x} dist(du)` by geometric chunking.
fn chunked(dist: &MixtureDistribution, x: &ScaledSum, xf: f64, gamma: f64, quad: &QuadratureSpec) -> Result<f64> {
    let (_, sup_hi) = dist.support();
    let mut width = if gamma != 0.0 {
        (4.0 / gamma.abs()).max(1.0)
    } else {
        1.0
    };
    let mut lo = 0.0;
    let mut total = f64::NEG_INFINITY;
    for _ in 0..200 {
        let hi = lo + width;
        let test = TestFn::Exp {
            inner: Box::new(TestFn::Window { lo, hi }),
            gamma,
            origin: xf,
        };
        let piece = dist.weighted_window(x, &test, quad)?;
        let before = total;
        total = log_add_exp(total, piece);
        let done_support = xf + hi >= sup_hi;
        if done_support || (piece - total < (quad.rel_tol * 1e-3).ln() && before > f64::NEG_INFINITY) {
            return Ok(total);
        }
        lo = hi;
        width *= 2.0;
    }
    Err(Error::Parameter(
        "tail integral did not settle within 200 chunks".into(),
    ))
}

/// `ln mu((x, inf))` by self-similarity: `phi(b^k v) = b^{-k(1+alpha)} phi(v)`.
fn phi_log_tail(params: &ModelParams, normalizer: f64, x: &ScaledSum, quad: &QuadratureSpec) -> Result<f64> {
    let profile = params.profile();
    let frame = profile.frame(x);
    let ph = match frame.at(0.0) {
        Some(ph) if ph.scale >= 0 => ph,
        _ => return Ok(0.0),
    };
    let zero = profile.frame(&ScaledSum::zero(params.b));
    let br = [params.x0 - params.delta, params.x0, params.x0 + params.delta];
    let partial = integrate_log(|v| profile.log_phi(&zero, v), ph.mantissa, params.b, &br, quad)?;
    let whole = log_add_exp(partial, -params.alpha * params.ln_b() + normalizer.ln());
    Ok(whole - ph.scale as f64 * params.alpha * params.ln_b() - normalizer.ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureDistribution {
    pub components: Vec<(f64, Component)>,
}

impl MixtureDistribution {
    pub fn new(components: Vec<(f64, Component)>) -> Result<Self> {
        if components.is_empty() {
            return param("mixture needs at least one component");
        }
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        if components.iter().any(|(w, _)| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return param(format!("mixture weights must be >= 0 and sum to 1, got {total}"));
        }
        for (_, c) in &components {
            validate_component(c)?;
        }
        Ok(MixtureDistribution { components })
    }

    pub fn single(c: Component) -> Self {
        MixtureDistribution {
            components: vec![(1.0, c)],
        }
    }

    pub fn has_continuous(&self) -> bool {
        self.components.iter().any(|(w, c)| *w > 0.0 && c.has_continuous())
    }

    pub fn has_atoms(&self) -> bool {
        self.components.iter().any(|(w, c)| *w > 0.0 && c.has_atoms())
    }

    pub fn support(&self) -> (f64, f64) {
        self.components
            .iter()
            .filter(|(w, _)| *w > 0.0)
            .map(|(_, c)| c.support())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (c, d)| {
                (a.min(c), b.max(d))
            })
    }

    pub fn breaks(&self, x: &ScaledSum, lo: f64, hi: f64, quad: &QuadratureSpec) -> Vec<f64> {
        self.components
            .iter()
            .filter(|(w, _)| *w > 0.0)
            .flat_map(|(_, c)| c.breaks(x, lo, hi, quad))
            .collect()
    }

    fn combine(&self, f: impl Fn(&Component) -> Result<f64>) -> Result<f64> {
        let mut terms = Vec::with_capacity(self.components.len());
        for (w, c) in &self.components {
            if *w > 0.0 {
                terms.push(w.ln() + f(c)?);
            }
        }
        Ok(log_sum_exp(&terms))
    }

    pub fn weighted_window(&self, x: &ScaledSum, test: &TestFn, quad: &QuadratureSpec) -> Result<f64> {
        self.combine(|c| c.weighted_window(x, test, quad))
    }

    pub fn weighted_window_part(&self, x: &ScaledSum, test: &TestFn, part: Part, quad: &QuadratureSpec) -> Result<f64> {
        self.combine(|c| c.weighted_window_part(x, test, part, quad))
    }

    pub fn log_density(&self, x: &ScaledSum, t: f64, quad: &QuadratureSpec) -> Result<f64> {
        self.combine(|c| c.log_density(x, t, quad))
    }

    pub fn log_tail(&self, x: &ScaledSum, quad: &QuadratureSpec) -> Result<f64> {
        self.combine(|c| c.log_tail(x, quad))
    }

    pub fn log_exp_moment(&self, gamma: f64, quad: &QuadratureSpec) -> Result<f64> {
        self.combine(|c| c.log_exp_moment(gamma, quad))
    }

    pub fn atoms(&self, base: f64) -> Result<Vec<(ScaledSum, f64)>> {
        let mut out = Vec::new();
        for (w, c) in &self.components {
            if *w > 0.0 {
                out.extend(c.atoms(base)?.into_iter().map(|(l, lw)| (l, lw + w.ln())));
            }
        }
        Ok(out)
    }
}

fn validate_component(c: &Component) -> Result<()> {
    match c {
        Component::PhiAC { params, normalizer } => {
            params.validate()?;
            if !(*normalizer > 0.0 && normalizer.is_finite()) {
                return param("phi normalizer must be positive");
            }
        }
        Component::UniformAC { left, width } => {
            if !(left.is_finite() && *width > 0.0 && width.is_finite()) {
                return param("uniform component needs finite left and positive width");
            }
        }
        Component::LomaxAC { alpha } => {
            if !(*alpha > 0.0 && alpha.is_finite()) {
                return param("Lomax index must be positive");
            }
        }
        Component::KernelAC { .. } => {}
        Component::AtomSeries { locations, weights } => {
            if locations.len() != weights.len() || locations.is_empty() {
                return param("atom series needs one weight per location");
            }
            let total: f64 = weights.iter().sum();
            if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-12 {
                return param(format!("atom weights must be >= 0 and sum to 1, got {total}"));
            }
        }
        Component::PointMass { location } => {
            if !location.is_finite() {
                return param("point mass location must be finite");
            }
        }
        Component::Tilted { log_normalizer, .. } => {
            if !log_normalizer.is_finite() {
                return param("tilt normalizer must be finite and positive");
            }
        }
    }
    Ok(())
}

/// `M = \int_1^inf phi`, exactly `I_cell / (1 - b^{-alpha})` with `I_cell` over one period.
pub fn normalizer_m(params: &ModelParams, quad: &QuadratureSpec) -> Result<f64> {
    params.validate()?;
    quad.validate()?;
    let profile = params.profile();
    let zero = profile.frame(&ScaledSum::zero(params.b));
    let mut br = vec![params.x0 - params.delta, params.x0, params.x0 + params.delta];
    br.extend(quad.hints.iter().copied());
    let cell = integrate_log(|v| profile.log_phi(&zero, v), 1.0, params.b, &br, quad)?;
    Ok(cell.exp() / -(-params.alpha * params.ln_b()).exp_m1())
}

pub fn local_mass(dist: &MixtureDistribution, x: &ScaledSum, w: WindowSpec, quad: &QuadratureSpec) -> Result<f64> {
    WindowSpec::new(w.c)?;
    dist.weighted_window(x, &TestFn::window(w.c), quad)
}

/// `ln (c^{-1} dist((x - c, x]))`.
pub fn local_density(dist: &MixtureDistribution, x: &ScaledSum, c: f64, quad: &QuadratureSpec) -> Result<f64> {
    WindowSpec::new(c)?;
    Ok(dist.weighted_window(x, &TestFn::Window { lo: -c, hi: 0.0 }, quad)? - c.ln())
}

pub fn tail(dist: &MixtureDistribution, x: &ScaledSum, quad: &QuadratureSpec) -> Result<f64> {
    dist.log_tail(x, quad)
}

/// `ln rho_hat(gamma)`; divergence is reported as [`Error::DivergentMoment`].
pub fn exp_moment(dist: &MixtureDistribution, gamma: f64, quad: &QuadratureSpec) -> Result<f64> {
    dist.log_exp_moment(gamma, quad)
}

/// Exponential tilt `e^{gamma x} dist(dx) / rho_hat(gamma)`.
pub fn tilt(dist: &MixtureDistribution, gamma: f64, quad: &QuadratureSpec) -> Result<MixtureDistribution> {
    if !gamma.is_finite() {
        return param("tilt exponent must be finite");
    }
    if let [(_, Component::PointMass { .. })] = dist.components.as_slice() {
        return Ok(dist.clone());
    }
    let log_normalizer = exp_moment(dist, gamma, quad)?;
    if !log_normalizer.is_finite() {
        return Err(Error::DivergentMoment { gamma });
    }
    Ok(MixtureDistribution::single(Component::Tilted {
        gamma,
        base: Arc::new(dist.clone()),
        log_normalizer,
    }))
}

pub fn uniform(left: f64, width: f64) -> MixtureDistribution {
    MixtureDistribution::single(Component::UniformAC { left, width })
}

pub fn point_mass(location: f64) -> MixtureDistribution {
    MixtureDistribution::single(Component::PointMass { location })
}

pub fn mu(params: &ModelParams, quad: &QuadratureSpec) -> Result<MixtureDistribution> {
    let normalizer = normalizer_m(params, quad)?;
    MixtureDistribution::new(vec![(
        1.0,
        Component::PhiAC {
            params: *params,
            normalizer,
        },
    )])
}

/// `K * base` as a one-component mixture.
pub fn smoothed(kernel: Kernel, base: MixtureDistribution) -> MixtureDistribution {
    MixtureDistribution::single(Component::KernelAC {
        kernel: Arc::new(kernel),
        base: Arc::new(base),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn normalizer_envelope() {
        let p = ModelParams::default();
        let m = normalizer_m(&p, &q()).unwrap();
        let plateau = p.profile().plateau;
        assert!(m > 0.0 && m < plateau / p.alpha);
        let p10 = ModelParams { alpha: 10.0, ..p };
        let m10 = normalizer_m(&p10, &q()).unwrap();
        assert!(m10 < plateau / 10.0 * (1.0 + 1e-12));
    }

    #[test]
    fn uniform_window_and_tail() {
        let u = uniform(0.0, 1.0);
        let v = local_density(&u, &ScaledSum::from_f64(4.0, 0.5), 0.25, &q()).unwrap();
        assert!(v.abs() < 1e-15);
        let t = tail(&u, &ScaledSum::from_f64(4.0, 0.25), &q()).unwrap();
        assert!((t - 0.75f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn point_mass_inclusion() {
        let d = point_mass(0.0);
        let v = local_mass(&d, &ScaledSum::from_f64(4.0, -0.5), WindowSpec { c: 1.0 }, &q()).unwrap();
        assert_eq!(v, 0.0);
        let v = local_mass(&d, &ScaledSum::from_f64(4.0, 0.0), WindowSpec { c: 1.0 }, &q()).unwrap();
        assert_eq!(v, f64::NEG_INFINITY);
    }

    #[test]
    fn moments() {
        let p = ModelParams::default();
        let m = mu(&p, &q()).unwrap();
        assert_eq!(exp_moment(&m, 0.0, &q()).unwrap(), 0.0);
        assert!(matches!(exp_moment(&m, 0.1, &q()), Err(Error::DivergentMoment { .. })));
        let u = uniform(0.0, 1.0);
        let v = exp_moment(&u, 1.0, &q()).unwrap();
        assert!((v - (1f64.exp() - 1.0).ln()).abs() < 1e-14);
    }

    #[test]
    fn mixture_weights_checked() {
        let bad = MixtureDistribution::new(vec![(0.5, Component::PointMass { location: 0.0 })]);
        assert!(bad.is_err());
    }
}
