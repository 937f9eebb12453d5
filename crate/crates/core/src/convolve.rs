//! Convolutions of mixtures: window masses, density values and a brute-force oracle.

use std::cell::RefCell;
use std::sync::Arc;

use crate::error::{param, Error, Result};
use crate::kernel::Kernel;
use crate::logspace::{log_sum_exp, LogBracket, Neumaier};
use crate::measures::{Component, MixtureDistribution, Part, TestFn, WindowSpec};
use crate::model::ModelParams;
use crate::quadrature::{integrate_log, QuadratureSpec};
use crate::scaled::ScaledSum;

/// How component pairs are convolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvPlan {
    /// Near/far split at `(ln x)^beta`.
    pub beta: f64,
    /// Above this, `phi (x) phi` pairs switch to near-field quadrature plus a certified far bound.
    pub bracket_threshold: f64,
}

impl ConvPlan {
    pub fn new(params: &ModelParams) -> Result<Self> {
        if !(params.alpha * params.beta > 1.0) {
            return param("convolution split needs alpha * beta > 1");
        }
        Ok(ConvPlan {
            beta: params.beta,
            bracket_threshold: 1e10,
        })
    }
}

impl Default for ConvPlan {
    fn default() -> Self {
        ConvPlan {
            beta: 2.0,
            bracket_threshold: 1e10,
        }
    }
}

fn zero_like(x: &ScaledSum) -> ScaledSum {
    ScaledSum::zero(x.base())
}

/// Runs an integrand that may fail; the first inner error wins over the quadrature result.
fn integrate_fallible<F>(f: F, lo: f64, hi: f64, breaks: &[f64], quad: &QuadratureSpec) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let failure = RefCell::new(None);
    let v = integrate_log(
        |t| match f(t) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NEG_INFINITY
            }
        },
        lo,
        hi,
        breaks,
        quad,
    );
    match failure.into_inner() {
        Some(e) => Err(e),
        None => v,
    }
}

/// `ln \int\int T(u + w - x) a(du) b(dw)`.
pub fn pair_integral(
    a: &Component,
    b: &Component,
    x: &ScaledSum,
    test: &TestFn,
    quad: &QuadratureSpec,
    plan: &ConvPlan,
) -> Result<LogBracket> {
    let base = x.base();
    let mut parts = Vec::new();
    for (loc, lw) in a.atoms(base)? {
        parts.push(LogBracket::exact(b.weighted_window(&x.sub(&loc), test, quad)? + lw));
    }
    if a.has_continuous() {
        for (loc, lw) in b.atoms(base)? {
            let v = a.weighted_window_part(&x.sub(&loc), test, Part::Continuous, quad)?;
            parts.push(LogBracket::exact(v + lw));
        }
        if b.has_continuous() {
            parts.push(continuous_pair(a, b, x, test, quad, plan)?);
        }
    }
    Ok(LogBracket::sum(parts))
}

fn continuous_pair(
    a: &Component,
    b: &Component,
    x: &ScaledSum,
    test: &TestFn,
    quad: &QuadratureSpec,
    plan: &ConvPlan,
) -> Result<LogBracket> {
    let xf = x.to_f64();
    if let (
        Component::PhiAC {
            params: pa,
            normalizer: ma,
        },
        Component::PhiAC {
            params: pb,
            normalizer: mb,
        },
    ) = (a, b)
    {
        if !(xf <= plan.bracket_threshold) {
            return phi_pair_bracketed(pa, *ma, pb, *mb, x, test, quad, plan);
        }
    }
    if !xf.is_finite() {
        return Err(Error::Unsupported(
            "continuous convolution at an anchor beyond binary64 range".into(),
        ));
    }
    let (al, ah) = a.support();
    let (bl, bh) = b.support();
    let (sl, sh) = test.support();
    let lo = al.max(sl + xf - bh);
    let hi = ah.min(sh + xf - bl);
    if !(lo < hi) {
        return Ok(LogBracket::zero());
    }
    if !hi.is_finite() || !lo.is_finite() {
        return Err(Error::Unsupported(
            "unbounded outer range in a continuous convolution".into(),
        ));
    }
    let zero = zero_like(x);
    let mut br = a.breaks(&zero, lo, hi, quad);
    let inner_b = b.breaks(x, sl - hi, sh - lo, quad);
    let mut edges = inner_b;
    edges.push(bl - xf);
    edges.push(bh - xf);
    for tau in test.breaks() {
        br.extend(edges.iter().map(|p| tau - p).filter(|u| *u > lo && *u < hi));
    }
    let inner = quad.inner();
    let v = integrate_fallible(
        |u| {
            let da = a.log_density(&zero, u, &inner)?;
            if da == f64::NEG_INFINITY {
                return Ok(da);
            }
            // Re-anchoring at x - u keeps b's dip centers exact in the inner coordinates.
            Ok(da + b.weighted_window_part(&x.add_f64(-u), test, Part::Continuous, &inner)?)
        },
        lo,
        hi,
        &br,
        quad,
    )?;
    Ok(LogBracket::exact(v))
}

/// Near field over `[1, U]` on both sides plus the far remainder bound
/// `|T| (sup_a * tail_b(U) + sup_b * tail_a(U))`.
#[allow(clippy::too_many_arguments)]
fn phi_pair_bracketed(
    pa: &ModelParams,
    ma: f64,
    pb: &ModelParams,
    mb: f64,
    x: &ScaledSum,
    test: &TestFn,
    quad: &QuadratureSpec,
    plan: &ConvPlan,
) -> Result<LogBracket> {
    let (sl, _) = test.support();
    let ln_x = x.ln_abs();
    let u_max = ln_x.powf(plan.beta);
    let ln_span = x.add_f64(sl).ln_abs();
    if !((2.0 * u_max).ln() < ln_span) || u_max <= 1.0 {
        return Err(Error::Unsupported(
            "near-field split does not separate from the anchor".into(),
        ));
    }
    let log_mass = test
        .log_mass()
        .ok_or_else(|| Error::Unsupported("far-field bound needs a finite-mass test function".into()))?;
    let ca = Component::PhiAC {
        params: *pa,
        normalizer: ma,
    };
    let cb = Component::PhiAC {
        params: *pb,
        normalizer: mb,
    };
    let near_a = near_field(&ca, &cb, x, test, u_max, quad)?;
    let near_b = near_field(&cb, &ca, x, test, u_max, quad)?;
    let cut = ScaledSum::from_f64(x.base(), u_max);
    let half = ln_span - std::f64::consts::LN_2;
    let sup = |p: &ModelParams, m: f64| p.profile().plateau.ln() - m.ln() - (1.0 + p.alpha) * half;
    let far = log_mass
        + log_sum_exp(&[
            sup(pa, ma) + cb.log_tail(&cut, quad)?,
            sup(pb, mb) + ca.log_tail(&cut, quad)?,
        ]);
    let near = log_sum_exp(&[near_a, near_b]);
    Ok(LogBracket {
        lo: near,
        hi: log_sum_exp(&[near, far]),
    })
}

/// `ln \int_1^{U} a(u) \int T(u + w - x) b(dw) du`.
fn near_field(
    a: &Component,
    b: &Component,
    x: &ScaledSum,
    test: &TestFn,
    u_max: f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let zero = zero_like(x);
    let (sl, sh) = test.support();
    let mut br = a.breaks(&zero, 1.0, u_max, quad);
    let inner_b = b.breaks(x, sl - u_max, sh - 1.0, quad);
    for tau in test.breaks() {
        br.extend(inner_b.iter().map(|p| tau - p).filter(|u| *u > 1.0 && *u < u_max));
    }
    let inner = quad.inner();
    integrate_fallible(
        |u| {
            let da = a.log_density(&zero, u, &inner)?;
            if da == f64::NEG_INFINITY {
                return Ok(da);
            }
            Ok(da + b.weighted_window(&x.add_f64(-u), test, &inner)?)
        },
        1.0,
        u_max,
        &br,
        quad,
    )
}

/// `ln phi(x)phi(x)` (unnormalized self-convolution density) as
/// `2 \int_1^{x/2} phi(x - u) phi(u) du`, bracketed above the plan threshold.
pub fn phi_self_conv_at(
    params: &ModelParams,
    x: &ScaledSum,
    quad: &QuadratureSpec,
    plan: &ConvPlan,
) -> Result<LogBracket> {
    let profile = params.profile();
    let fx = profile.frame(x);
    let f0 = profile.frame(&zero_like(x));
    let xf = x.to_f64();
    let integrand = |u: f64| profile.log_phi(&fx, -u) + profile.log_phi(&f0, u);
    let ln2 = std::f64::consts::LN_2;
    if xf <= plan.bracket_threshold {
        let hi = 0.5 * xf;
        if !(hi > 1.0) {
            return Ok(LogBracket::zero());
        }
        let mut br = crate::measures::phi_breaks(params, &quad.hints, &zero_like(x), 1.0, hi);
        br.extend(
            crate::measures::phi_breaks(params, &quad.hints, x, -hi, -1.0)
                .into_iter()
                .map(|t| -t),
        );
        let v = integrate_log(integrand, 1.0, hi, &br, quad)?;
        return Ok(LogBracket::exact(v + ln2));
    }
    let ln_x = x.ln_abs();
    let u_max = ln_x.powf(plan.beta);
    if !((2.0 * u_max).ln() < ln_x) {
        return Err(Error::Unsupported(
            "near-field split does not separate from the anchor".into(),
        ));
    }
    let mut br = crate::measures::phi_breaks(params, &quad.hints, &zero_like(x), 1.0, u_max);
    br.extend(
        crate::measures::phi_breaks(params, &quad.hints, x, -u_max, -1.0)
            .into_iter()
            .map(|t| -t),
    );
    let near = integrate_log(integrand, 1.0, u_max, &br, quad)? + ln2;
    // 2 K^2 (2/x)^{1+alpha} alpha^{-1} U^{-alpha}
    let k = profile.plateau;
    let far = ln2 + 2.0 * k.ln() + (1.0 + params.alpha) * (ln2 - ln_x) - params.alpha.ln() - params.alpha * u_max.ln();
    Ok(LogBracket {
        lo: near,
        hi: log_sum_exp(&[near, far]),
    })
}

fn mixture_pairs(
    d1: &MixtureDistribution,
    d2: &MixtureDistribution,
    x: &ScaledSum,
    test: &TestFn,
    quad: &QuadratureSpec,
    plan: &ConvPlan,
) -> Result<LogBracket> {
    let mut parts = Vec::new();
    for (w1, c1) in &d1.components {
        for (w2, c2) in &d2.components {
            if *w1 > 0.0 && *w2 > 0.0 {
                parts.push(pair_integral(c1, c2, x, test, quad, plan)?.scale(w1.ln() + w2.ln()));
            }
        }
    }
    Ok(LogBracket::sum(parts))
}

/// `ln (d1 * d2)((x, x + c])`.
pub fn conv_local_mass(
    d1: &MixtureDistribution,
    d2: &MixtureDistribution,
    x: &ScaledSum,
    w: WindowSpec,
    quad: &QuadratureSpec,
    plan: &ConvPlan,
) -> Result<LogBracket> {
    WindowSpec::new(w.c)?;
    mixture_pairs(d1, d2, x, &TestFn::window(w.c), quad, plan)
}

/// `ln \int\int T(u + w - x) d1(du) d2(dw)` for an arbitrary test function.
pub fn conv_weighted_window(
    d1: &MixtureDistribution,
    d2: &MixtureDistribution,
    x: &ScaledSum,
    test: &TestFn,
    quad: &QuadratureSpec,
    plan: &ConvPlan,
) -> Result<LogBracket> {
    mixture_pairs(d1, d2, x, test, quad, plan)
}

/// `ln dist^{n*}((x, x + c])` for `n` in `1..=3`.
pub fn nfold_local_mass(
    dist: &MixtureDistribution,
    n: u32,
    x: &ScaledSum,
    w: WindowSpec,
    quad: &QuadratureSpec,
    plan: &ConvPlan,
) -> Result<LogBracket> {
    WindowSpec::new(w.c)?;
    match n {
        1 => Ok(LogBracket::exact(crate::measures::local_mass(dist, x, w, quad)?)),
        2 => conv_local_mass(dist, dist, x, w, quad, plan),
        3 => {
            let exact = |b: LogBracket| {
                if b.is_exact() {
                    Ok(b.lo)
                } else {
                    Err(Error::Unsupported(
                        "three-fold convolution needs exact inner masses".into(),
                    ))
                }
            };
            let mut parts = Vec::new();
            for (loc, lw) in dist.atoms(x.base())? {
                parts.push(lw + exact(conv_local_mass(dist, dist, &x.sub(&loc), w, quad, plan)?)?);
            }
            let xf = x.to_f64();
            for (wt, c) in &dist.components {
                if *wt <= 0.0 || !c.has_continuous() {
                    continue;
                }
                let (lo, hi) = c.support();
                let (dl, dh) = dist.support();
                let lo = lo.max(xf - 2.0 * dh);
                let hi = hi.min(xf + w.c - 2.0 * dl);
                if !(lo < hi) {
                    continue;
                }
                if !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::Unsupported(
                        "unbounded outer range in a three-fold convolution".into(),
                    ));
                }
                let zero = zero_like(x);
                let inner = quad.inner();
                let mut br = c.breaks(&zero, lo, hi, quad);
                br.extend([
                    xf - 2.0 * dh,
                    xf - 2.0 * dl,
                    xf + w.c - 2.0 * dh,
                    xf + w.c - 2.0 * dl,
                    xf - dl - dh,
                    xf + w.c - dl - dh,
                ]);
                let v = integrate_fallible(
                    |u| {
                        let d = c.log_density(&zero, u, &inner)?;
                        if d == f64::NEG_INFINITY {
                            return Ok(d);
                        }
                        Ok(d + exact(conv_local_mass(dist, dist, &x.add_f64(-u), w, &inner, plan)?)?)
                    },
                    lo,
                    hi,
                    &br,
                    quad,
                )?;
                parts.push(wt.ln() + v);
            }
            Ok(LogBracket::exact(log_sum_exp(&parts)))
        }
        _ => param(format!("n-fold convolution supports n in 1..=3, got {n}")),
    }
}

/// `ln q(x)` with `q(x) = \int K(x - u) base(du)`.
pub fn smoothed_density(
    kernel: &Arc<Kernel>,
    base: &MixtureDistribution,
    x: &ScaledSum,
    quad: &QuadratureSpec,
) -> Result<f64> {
    base.weighted_window(
        x,
        &TestFn::KernelDensity {
            kernel: kernel.clone(),
            shift: 0.0,
        },
        quad,
    )
}

/// Fixed-step evaluation tables used to cross-check the adaptive paths.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleTable {
    pub x: Vec<f64>,
    pub value: Vec<f64>,
}

/// Largest number of grid evaluations an oracle call may spend.
pub const ORACLE_BUDGET: f64 = 2e9;

/// Plain binary64 density, written independently of the scaled-point path.
fn plain_density(c: &Component, v: f64) -> Result<f64> {
    Ok(match c {
        Component::PhiAC { params, normalizer } => {
            if v < 1.0 {
                return Ok(0.0);
            }
            let k = (v.ln() / params.b.ln()).floor();
            let mut y = v / params.b.powf(k);
            if y >= params.b {
                y /= params.b;
            }
            if y < 1.0 {
                y *= params.b;
            }
            let d = (y - params.x0).abs();
            let h = if d == 0.0 {
                0.0
            } else if d < params.delta {
                -1.0 / d.ln()
            } else {
                -1.0 / params.delta.ln()
            };
            v.powf(-1.0 - params.alpha) * h / normalizer
        }
        Component::UniformAC { left, width } => {
            if v >= *left && v < left + width {
                1.0 / width
            } else {
                0.0
            }
        }
        Component::LomaxAC { alpha } => {
            if v >= 0.0 {
                alpha * (1.0 + v).powf(-alpha - 1.0)
            } else {
                0.0
            }
        }
        Component::Tilted {
            gamma,
            base,
            log_normalizer,
        } => {
            let mut acc = 0.0;
            for (w, c) in &base.components {
                acc += w * plain_density(c, v)?;
            }
            acc * (gamma * v - log_normalizer).exp()
        }
        Component::AtomSeries { .. } | Component::PointMass { .. } => 0.0,
        Component::KernelAC { .. } => {
            return Err(Error::Unsupported(
                "oracle densities do not cover kernel smoothings".into(),
            ))
        }
    })
}

fn plain_mixture_density(d: &MixtureDistribution, v: f64) -> Result<f64> {
    let mut acc = 0.0;
    for (w, c) in &d.components {
        acc += w * plain_density(c, v)?;
    }
    Ok(acc)
}

fn plain_atoms(d: &MixtureDistribution) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for (loc, lw) in d.atoms(4.0)? {
        let a = loc.to_f64();
        if a.is_finite() && a.abs() <= 1e6 {
            out.push((a, lw.exp()));
        }
    }
    Ok(out)
}

/// Density of `d1 * d2` at each point of `xs` by a midpoint rule of the given step.
///
/// Supports are truncated to `[-1e6, 1e6]`.
pub fn brute_force_conv_oracle(
    d1: &MixtureDistribution,
    d2: &MixtureDistribution,
    xs: &[f64],
    step: f64,
) -> Result<OracleTable> {
    if !(step > 0.0 && step <= 1e-3) {
        return param(format!("oracle step must lie in (0, 1e-3], got {step}"));
    }
    let (l1, h1) = d1.support();
    let (l2, h2) = d2.support();
    let lo = l1.max(-1e6);
    let hi = h1.min(1e6);
    let xmax = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let xmin = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let span_lo = lo.max(xmin - h2.min(1e6));
    let span_hi = hi.min(xmax - l2.max(-1e6));
    let cells = ((span_hi - span_lo).max(0.0) / step).ceil();
    if cells * xs.len() as f64 > ORACLE_BUDGET {
        return param(format!(
            "oracle grid of {cells} cells x {} points exceeds the budget",
            xs.len()
        ));
    }
    let atoms1 = plain_atoms(d1)?;
    let atoms2 = plain_atoms(d2)?;
    let mut value = Vec::with_capacity(xs.len());
    for &x in xs {
        let mut acc = Neumaier::default();
        let a = lo.max(x - h2);
        let b = hi.min(x - l2);
        if a < b {
            let n = ((b - a) / step).ceil() as usize;
            let hstep = (b - a) / n as f64;
            for k in 0..n {
                let u = a + (k as f64 + 0.5) * hstep;
                acc.add(plain_mixture_density(d1, u)? * plain_mixture_density(d2, x - u)? * hstep);
            }
        }
        for &(p, w) in &atoms1 {
            acc.add(w * plain_mixture_density(d2, x - p)?);
        }
        for &(p, w) in &atoms2 {
            acc.add(w * plain_mixture_density(d1, x - p)?);
        }
        value.push(acc.total());
    }
    Ok(OracleTable { x: xs.to_vec(), value })
}

/// `(d1 * d2)((x, x + c])` by a midpoint rule over the window of the oracle density,
/// using outer cells ten times the inner step.
///
/// Exact for piecewise linear densities whose breaks fall on the outer grid.
pub fn brute_force_conv_local_mass(
    d1: &MixtureDistribution,
    d2: &MixtureDistribution,
    x: f64,
    c: f64,
    step: f64,
) -> Result<f64> {
    WindowSpec::new(c)?;
    let n = (c / (10.0 * step)).ceil().max(1.0) as usize;
    let h = c / n as f64;
    let xs: Vec<f64> = (0..n).map(|k| x + (k as f64 + 0.5) * h).collect();
    let table = brute_force_conv_oracle(d1, d2, &xs, step)?;
    let mut acc = Neumaier::default();
    for v in table.value {
        acc.add(v * h);
    }
    Ok(acc.total())
}

/// `dist((x, x + c])` by a midpoint rule plus exact atom counting.
pub fn brute_force_local_mass(dist: &MixtureDistribution, x: f64, c: f64, step: f64) -> Result<f64> {
    if !(step > 0.0 && step <= 1e-3) {
        return param(format!("oracle step must lie in (0, 1e-3], got {step}"));
    }
    let n = (c / step).ceil();
    if n > ORACLE_BUDGET {
        return param("oracle window exceeds the budget");
    }
    let n = n as usize;
    let h = c / n as f64;
    let mut acc = Neumaier::default();
    for k in 0..n {
        acc.add(plain_mixture_density(dist, x + (k as f64 + 0.5) * h)? * h);
    }
    for (p, w) in plain_atoms(dist)? {
        if p > x && p <= x + c {
            acc.add(w);
        }
    }
    Ok(acc.total())
}
