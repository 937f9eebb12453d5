//! Ratio-sequence probes of the asymptotic class definitions, with trend classification.
//!
//! Every probe evaluates a numerator and a denominator in log form at each point of a
//! structured sequence. Entries are computed in parallel and assembled by index, so a
//! series is a deterministic function of its inputs whatever the thread count.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::convolve::{conv_local_mass, conv_weighted_window, phi_self_conv_at, smoothed_density, ConvPlan};
use crate::error::{param, Error, Result};
use crate::kernel::Kernel;
use crate::logspace::LogBracket;
use crate::measures::{exp_moment, local_mass, mu, tilt, MixtureDistribution, Part, TestFn, WindowSpec};
use crate::model::{make_sequence, phi_log_value, ModelParams, SequenceSpec};
use crate::quadrature::{integrate_log, QuadratureSpec};
use crate::scaled::ScaledSum;

const LN_2: f64 = std::f64::consts::LN_2;

/// Everything a probe needs besides its target.
#[derive(Debug, Clone)]
pub struct ProbeContext {
    pub params: ModelParams,
    pub quad: QuadratureSpec,
    pub plan: ConvPlan,
}

impl ProbeContext {
    pub fn new(params: ModelParams, quad: QuadratureSpec) -> Result<Self> {
        params.validate()?;
        quad.validate()?;
        let plan = ConvPlan::new(&params)?;
        Ok(ProbeContext { params, quad, plan })
    }

    pub fn sequence(&self, seq: &SequenceSpec) -> Result<Vec<ScaledSum>> {
        make_sequence(&self.params, seq)
    }

    pub fn mu(&self) -> Result<MixtureDistribution> {
        mu(&self.params, &self.quad)
    }

    fn ln_m(&self) -> Result<f64> {
        Ok(crate::measures::normalizer_m(&self.params, &self.quad)?.ln())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    Ok,
    /// Numerator or denominator is only known to lie in a bracket.
    Bracketed,
    ZeroDenominator,
    /// Quadrature gave up; both logs are set to the uninformative `[-inf, inf]`.
    QuadratureFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioEntry {
    pub label: String,
    pub n: i64,
    pub m: i64,
    pub x: ScaledSum,
    pub c: f64,
    pub a: f64,
    pub log_num: LogBracket,
    pub log_den: LogBracket,
    pub status: EntryStatus,
}

impl RatioEntry {
    pub fn log_ratio(&self) -> LogBracket {
        self.log_num.ratio(self.log_den)
    }

    /// Point value of the ratio: exact when both sides are, else the bracket midpoint in log.
    pub fn central_log_ratio(&self) -> f64 {
        match self.status {
            EntryStatus::Ok => self.log_num.lo - self.log_den.lo,
            EntryStatus::Bracketed => {
                let r = self.log_ratio();
                0.5 * (r.lo + r.hi)
            }
            EntryStatus::ZeroDenominator | EntryStatus::QuadratureFailed => f64::NAN,
        }
    }

    pub fn ratio(&self) -> f64 {
        self.central_log_ratio().exp()
    }

    pub fn is_usable(&self) -> bool {
        matches!(self.status, EntryStatus::Ok | EntryStatus::Bracketed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioSeries {
    pub probe: String,
    pub regime: String,
    pub entries: Vec<RatioEntry>,
}

impl RatioSeries {
    pub fn ratios(&self) -> Vec<f64> {
        self.entries.iter().map(RatioEntry::ratio).collect()
    }

    /// The entry for index `n` carrying `label`, if present.
    pub fn find(&self, n: i64, label: &str) -> Option<&RatioEntry> {
        self.entries.iter().find(|e| e.n == n && e.label == label)
    }

    pub fn with_label(&self, label: &str) -> RatioSeries {
        RatioSeries {
            probe: self.probe.clone(),
            regime: self.regime.clone(),
            entries: self.entries.iter().filter(|e| e.label == label).cloned().collect(),
        }
    }
}

/// One point to evaluate: the fields copied into the resulting entry.
#[derive(Debug, Clone)]
struct Site {
    label: String,
    n: i64,
    m: i64,
    x: ScaledSum,
    c: f64,
    a: f64,
}

fn evaluate<F>(sites: Vec<Site>, f: F) -> Result<Vec<RatioEntry>>
where
    F: Fn(&Site) -> Result<(LogBracket, LogBracket)> + Sync,
{
    sites
        .into_par_iter()
        .map(|s| {
            let (log_num, log_den, status) = match f(&s) {
                Ok((num, den)) => {
                    let status = if den.hi == f64::NEG_INFINITY {
                        EntryStatus::ZeroDenominator
                    } else if num.is_exact() && den.is_exact() {
                        EntryStatus::Ok
                    } else {
                        EntryStatus::Bracketed
                    };
                    (num, den, status)
                }
                Err(Error::Quadrature(_)) => {
                    let unknown = LogBracket {
                        lo: f64::NEG_INFINITY,
                        hi: f64::INFINITY,
                    };
                    (unknown, unknown, EntryStatus::QuadratureFailed)
                }
                Err(e) => return Err(e),
            };
            Ok(RatioEntry {
                label: s.label,
                n: s.n,
                m: s.m,
                x: s.x,
                c: s.c,
                a: s.a,
                log_num,
                log_den,
                status,
            })
        })
        .collect()
}

fn sites_along(ctx: &ProbeContext, seq: &SequenceSpec, label: &str, c: f64, a: f64) -> Result<Vec<Site>> {
    let xs = ctx.sequence(seq)?;
    Ok(seq
        .indices()
        .into_iter()
        .zip(xs)
        .map(|(n, x)| Site {
            label: label.to_string(),
            n,
            m: seq.m_of(n),
            x,
            c,
            a,
        })
        .collect())
}

/// What a long-tail probe compares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LongTailMode {
    /// `rho((x + a, x + a + c]) / rho((x, x + c])`.
    Local { c: f64 },
    /// `g(x + a) / g(x)`.
    Density,
    /// `rho((x + a, inf)) / rho((x, inf))`.
    Tail,
}

pub fn long_tail_probe(
    ctx: &ProbeContext,
    dist: &MixtureDistribution,
    mode: LongTailMode,
    a: f64,
    seq: &SequenceSpec,
) -> Result<RatioSeries> {
    if !(-5.0..=5.0).contains(&a) {
        return param(format!("shift a must lie in [-5, 5], got {a}"));
    }
    let c = match mode {
        LongTailMode::Local { c } => WindowSpec::new(c)?.c,
        _ => 0.0,
    };
    let q = &ctx.quad;
    let entries = evaluate(sites_along(ctx, seq, &format!("a={a}"), c, a)?, |s| {
        let (num, den) = match mode {
            LongTailMode::Local { c } => (
                dist.weighted_window(&s.x, &TestFn::Window { lo: a, hi: a + c }, q)?,
                dist.weighted_window(&s.x, &TestFn::Window { lo: 0.0, hi: c }, q)?,
            ),
            LongTailMode::Density => (dist.log_density(&s.x, a, q)?, dist.log_density(&s.x, 0.0, q)?),
            LongTailMode::Tail => (dist.log_tail(&s.x.add_f64(a), q)?, dist.log_tail(&s.x, q)?),
        };
        Ok((LogBracket::exact(num), LogBracket::exact(den)))
    })?;
    Ok(RatioSeries {
        probe: "long_tail".into(),
        regime: seq.label(),
        entries,
    })
}

/// `(rho * rho)((x, x + c]) / rho((x, x + c])`, which tends to 2 for locally subexponential `rho`.
pub fn conv_ratio_probe(
    ctx: &ProbeContext,
    dist: &MixtureDistribution,
    c: f64,
    seq: &SequenceSpec,
) -> Result<RatioSeries> {
    let w = WindowSpec::new(c)?;
    let entries = evaluate(sites_along(ctx, seq, &format!("c={c}"), c, 0.0)?, |s| {
        let num = conv_local_mass(dist, dist, &s.x, w, &ctx.quad, &ctx.plan)?;
        let den = local_mass(dist, &s.x, w, &ctx.quad)?;
        Ok((num, LogBracket::exact(den)))
    })?;
    Ok(RatioSeries {
        probe: "conv".into(),
        regime: seq.label(),
        entries,
    })
}

/// A density whose self-convolution can be evaluated.
#[derive(Debug, Clone)]
pub enum DensityHandle {
    /// `phi / M` for the context's model.
    Phi,
    /// `q(x) = \int K(x - u) base(du)` with a piecewise-linear `K`.
    Smoothed {
        kernel: Arc<Kernel>,
        base: MixtureDistribution,
    },
}

impl DensityHandle {
    pub fn smoothed(kernel: Kernel, base: MixtureDistribution) -> Self {
        DensityHandle::Smoothed {
            kernel: Arc::new(kernel),
            base,
        }
    }

    /// `ln g(x + t)`.
    pub fn log_value(&self, ctx: &ProbeContext, x: &ScaledSum, t: f64) -> Result<f64> {
        match self {
            DensityHandle::Phi => {
                let profile = ctx.params.profile();
                Ok(profile.log_phi(&profile.frame(x), t) - ctx.ln_m()?)
            }
            DensityHandle::Smoothed { kernel, base } => smoothed_density(kernel, base, &x.add_f64(t), &ctx.quad),
        }
    }

    /// `ln g(x)g(x)` (self-convolution density).
    pub fn log_self_conv(&self, ctx: &ProbeContext, x: &ScaledSum) -> Result<LogBracket> {
        match self {
            DensityHandle::Phi => Ok(phi_self_conv_at(&ctx.params, x, &ctx.quad, &ctx.plan)?.scale(-2.0 * ctx.ln_m()?)),
            DensityHandle::Smoothed { kernel, base } => {
                let test = TestFn::KernelDensity {
                    kernel: Arc::new(kernel.self_convolved()?),
                    shift: 0.0,
                };
                conv_weighted_window(base, base, x, &test, &ctx.quad, &ctx.plan)
            }
        }
    }

    fn breaks(&self, ctx: &ProbeContext, x: &ScaledSum, lo: f64, hi: f64) -> Vec<f64> {
        match self {
            DensityHandle::Phi => crate::measures::phi_breaks(&ctx.params, &ctx.quad.hints, x, lo, hi),
            DensityHandle::Smoothed { kernel, base } => {
                let c = crate::measures::Component::KernelAC {
                    kernel: kernel.clone(),
                    base: Arc::new(base.clone()),
                };
                c.breaks(x, lo, hi, &ctx.quad)
            }
        }
    }
}

/// `g(x)g(x) / (2 g(x))`.
///
/// For [`DensityHandle::Phi`] the denominator is `2 M \int_x^{x+1} phi`, since `phi`
/// itself vanishes at dip anchors.
pub fn sd_probe(ctx: &ProbeContext, handle: &DensityHandle, seq: &SequenceSpec) -> Result<RatioSeries> {
    let sites = sites_along(ctx, seq, "sd", 1.0, 0.0)?;
    sd_at(ctx, handle, sites, seq.label())
}

/// [`sd_probe`] at explicitly given anchors, labelled by position.
pub fn sd_probe_at(
    ctx: &ProbeContext,
    handle: &DensityHandle,
    anchors: &[(i64, ScaledSum)],
    regime: &str,
) -> Result<RatioSeries> {
    let sites = anchors
        .iter()
        .map(|(n, x)| Site {
            label: "sd".into(),
            n: *n,
            m: 0,
            x: x.clone(),
            c: 1.0,
            a: 0.0,
        })
        .collect();
    sd_at(ctx, handle, sites, regime.to_string())
}

fn sd_at(ctx: &ProbeContext, handle: &DensityHandle, sites: Vec<Site>, regime: String) -> Result<RatioSeries> {
    let mu = match handle {
        DensityHandle::Phi => Some(ctx.mu()?),
        _ => None,
    };
    let entries = evaluate(sites, |s| {
        let num = handle.log_self_conv(ctx, &s.x)?;
        let den = match &mu {
            Some(mu) => LN_2 + local_mass(mu, &s.x, WindowSpec { c: 1.0 }, &ctx.quad)?,
            None => LN_2 + handle.log_value(ctx, &s.x, 0.0)?,
        };
        Ok((num, LogBracket::exact(den)))
    })?;
    Ok(RatioSeries {
        probe: "sd".into(),
        regime,
        entries,
    })
}

fn finite_point(x: &ScaledSum) -> Result<f64> {
    let xf = x.to_f64();
    if !(xf.is_finite() && xf <= 1e15) {
        return Err(Error::Unsupported(
            "truncated functionals need anchors below 1e15".into(),
        ));
    }
    Ok(xf)
}

/// `g(x)^{-1} \int_A^{x-A} g(x - u) g(u) du`; zero when the range is empty.
pub fn truncated_tail_density(ctx: &ProbeContext, handle: &DensityHandle, a_cut: f64, x: &ScaledSum) -> Result<f64> {
    if !(a_cut >= 1.0) {
        return param(format!("truncation A must be >= 1, got {a_cut}"));
    }
    let xf = finite_point(x)?;
    let hi = 0.5 * xf;
    if !(a_cut < hi) {
        return Ok(0.0);
    }
    let zero = ScaledSum::zero(x.base());
    let mut br = handle.breaks(ctx, &zero, a_cut, hi);
    br.extend(handle.breaks(ctx, x, -hi, -a_cut).into_iter().map(|t| -t));
    let inner = ctx.quad.inner();
    let failure = std::cell::RefCell::new(None);
    let v = integrate_log(
        |u| {
            let r = handle
                .log_value(ctx, &zero, u)
                .and_then(|g| Ok(g + handle.log_value(ctx, x, -u)?));
            r.unwrap_or_else(|e| {
                failure.borrow_mut().get_or_insert(e);
                f64::NEG_INFINITY
            })
        },
        a_cut,
        hi,
        &br,
        &if matches!(handle, DensityHandle::Phi) {
            ctx.quad.clone()
        } else {
            inner.clone()
        },
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let gx = handle.log_value(ctx, x, 0.0)?;
    if gx == f64::NEG_INFINITY {
        return Err(Error::Precondition("density vanishes at the anchor".into()));
    }
    Ok((LN_2 + v? - gx).exp())
}

/// `rho((x, x+c])^{-1} \int_{(A, x-A)} rho((x - u, x + c - u]) rho(du)`; zero when the range is empty.
pub fn truncated_tail_local(
    ctx: &ProbeContext,
    dist: &MixtureDistribution,
    a_cut: f64,
    x: &ScaledSum,
    c: f64,
) -> Result<f64> {
    if !(a_cut >= 1.0) {
        return param(format!("truncation A must be >= 1, got {a_cut}"));
    }
    let w = WindowSpec::new(c)?;
    let xf = finite_point(x)?;
    let (lo, hi) = (a_cut, xf - a_cut);
    if !(lo < hi) {
        return Ok(0.0);
    }
    let q = &ctx.quad;
    let window = TestFn::window(w.c);
    let mut parts = Vec::new();
    for (loc, lw) in dist.atoms(x.base())? {
        let u = loc.to_f64();
        if u > lo && u < hi {
            parts.push(lw + dist.weighted_window(&x.sub(&loc), &window, q)?);
        }
    }
    let zero = ScaledSum::zero(x.base());
    let inner = q.inner();
    for (wt, comp) in &dist.components {
        if *wt <= 0.0 || !comp.has_continuous() {
            continue;
        }
        let (sl, sh) = comp.support();
        let (l, h) = (lo.max(sl), hi.min(sh));
        if !(l < h) {
            continue;
        }
        let mut br = comp.breaks(&zero, l, h, q);
        let targets = dist.breaks(&zero, l - c, xf - l + c, q);
        br.extend(targets.iter().flat_map(|p| [xf - p, xf + c - p]));
        let failure = std::cell::RefCell::new(None);
        let v = integrate_log(
            |u| {
                let r = comp.log_density(&zero, u, &inner).and_then(|d| {
                    if d == f64::NEG_INFINITY {
                        return Ok(d);
                    }
                    Ok(d + dist.weighted_window_part(&x.add_f64(-u), &window, Part::All, &inner)?)
                });
                r.unwrap_or_else(|e| {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NEG_INFINITY
                })
            },
            l,
            h,
            &br,
            q,
        );
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        parts.push(wt.ln() + v?);
    }
    let num = crate::logspace::log_sum_exp(&parts);
    if num == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let den = local_mass(dist, x, w, q)?;
    if den == f64::NEG_INFINITY {
        return Err(Error::Precondition("window mass vanishes at the anchor".into()));
    }
    Ok((num - den).exp())
}

/// Truncated local functional over an `(A, x)` grid; rows follow `a_values`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncatedMatrix {
    pub a_values: Vec<f64>,
    pub x: Vec<ScaledSum>,
    pub c: f64,
    pub values: Vec<Vec<f64>>,
}

/// Runs [`truncated_tail_local`] over a grid after checking that `dist` looks long-tailed
/// on the same anchors; the functional is meaningless otherwise.
pub fn truncated_tail_matrix(
    ctx: &ProbeContext,
    dist: &MixtureDistribution,
    a_values: &[f64],
    xs: &[ScaledSum],
    c: f64,
) -> Result<TruncatedMatrix> {
    for x in xs {
        let q = &ctx.quad;
        let den = dist.weighted_window(x, &TestFn::window(c), q)?;
        let num = dist.weighted_window(x, &TestFn::Window { lo: 1.0, hi: 1.0 + c }, q)?;
        if den == f64::NEG_INFINITY || !((num - den).abs() < 0.5) {
            return Err(Error::Precondition(format!(
                "long-tail check failed at x = {x}: the truncated functional needs a long-tailed distribution"
            )));
        }
    }
    let values = a_values
        .par_iter()
        .map(|&a| {
            xs.iter()
                .map(|x| truncated_tail_local(ctx, dist, a, x, c))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TruncatedMatrix {
        a_values: a_values.to_vec(),
        x: xs.to_vec(),
        c,
        values,
    })
}

/// How the window exponent `m` follows the anchor index `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowExponent {
    Fixed(i64),
    /// `m(n) = n`.
    Diagonal,
}

/// `r(n, m) = [c^{-1} rho((x, x+c])] / rho((x, x+1])` with `c = b^{-m}` at `x = b^n x0`.
pub fn uniformity_probe(
    ctx: &ProbeContext,
    dist: &MixtureDistribution,
    ns: &[i64],
    m_choice: WindowExponent,
) -> Result<RatioSeries> {
    let p = &ctx.params;
    let sites = ns
        .iter()
        .map(|&n| {
            let m = match m_choice {
                WindowExponent::Fixed(m) => m,
                WindowExponent::Diagonal => n,
            };
            if m < 0 {
                return param("window exponent must be >= 0");
            }
            Ok(Site {
                label: match m_choice {
                    WindowExponent::Fixed(m) => format!("m={m}"),
                    WindowExponent::Diagonal => "m=n".into(),
                },
                n,
                m,
                x: p.point(n, p.x0),
                c: p.b.powi(-(m as i32)),
                a: 0.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let entries = evaluate(sites, |s| {
        let num = dist.weighted_window(&s.x, &TestFn::window(s.c), &ctx.quad)? - s.c.ln();
        let den = dist.weighted_window(&s.x, &TestFn::window(1.0), &ctx.quad)?;
        Ok((LogBracket::exact(num), LogBracket::exact(den)))
    })?;
    Ok(RatioSeries {
        probe: "uniformity".into(),
        regime: format!("x=b^n*{}", p.x0),
        entries,
    })
}

/// `rho((x - c, x]) / (c rho((x - 1, x]))` per `c`.
pub fn scaling_probe(
    ctx: &ProbeContext,
    dist: &MixtureDistribution,
    cs: &[f64],
    seq: &SequenceSpec,
) -> Result<RatioSeries> {
    let mut sites = Vec::new();
    for &c in cs {
        WindowSpec::new(c)?;
        sites.extend(sites_along(ctx, seq, &format!("c={c}"), c, 0.0)?);
    }
    let entries = evaluate(sites, |s| {
        let num = dist.weighted_window(&s.x, &TestFn::Window { lo: -s.c, hi: 0.0 }, &ctx.quad)?;
        let den = s.c.ln() + dist.weighted_window(&s.x, &TestFn::Window { lo: -1.0, hi: 0.0 }, &ctx.quad)?;
        Ok((LogBracket::exact(num), LogBracket::exact(den)))
    })?;
    Ok(RatioSeries {
        probe: "scaling".into(),
        regime: seq.label(),
        entries,
    })
}

/// `q(x) / rho((x - 1, x])` with `q(x) = \int K(x - u) rho(du)`.
pub fn smoothing_probe(
    ctx: &ProbeContext,
    kernel: &Arc<Kernel>,
    dist: &MixtureDistribution,
    seq: &SequenceSpec,
) -> Result<RatioSeries> {
    let entries = evaluate(sites_along(ctx, seq, "smoothing", 1.0, 0.0)?, |s| {
        let num = smoothed_density(kernel, dist, &s.x, &ctx.quad)?;
        let den = dist.weighted_window(&s.x, &TestFn::Window { lo: -1.0, hi: 0.0 }, &ctx.quad)?;
        Ok((LogBracket::exact(num), LogBracket::exact(den)))
    })?;
    Ok(RatioSeries {
        probe: "smoothing".into(),
        regime: seq.label(),
        entries,
    })
}

/// `J1`, the middle ratio and `J2` along one sequence, labelled `j1`, `mid`, `j2`.
pub fn sandwich_probe(
    ctx: &ProbeContext,
    dist: &MixtureDistribution,
    c: f64,
    c1: f64,
    a: f64,
    seq: &SequenceSpec,
) -> Result<RatioSeries> {
    WindowSpec::new(c)?;
    WindowSpec::new(c1)?;
    let smear = Arc::new(Kernel::uniform(c));
    // P(x + lo < X + X_c <= x + hi) with X_c uniform on [0, c]
    let y = |x: &ScaledSum, lo: f64, hi: f64| {
        dist.weighted_window(
            x,
            &TestFn::KernelWindow {
                kernel: smear.clone(),
                lo,
                hi,
            },
            &ctx.quad,
        )
    };
    let plain = |x: &ScaledSum, lo: f64, hi: f64| dist.weighted_window(x, &TestFn::Window { lo, hi }, &ctx.quad);
    let mut sites = Vec::new();
    for label in ["j1", "mid", "j2"] {
        sites.extend(sites_along(ctx, seq, label, c, a)?);
    }
    let entries = evaluate(sites, |s| {
        let x = &s.x;
        let (num, den) = match s.label.as_str() {
            "j1" => (y(x, a, c1 + a)?, y(x, 0.0, c1 + c)?),
            "mid" => (plain(x, a, c1 + a)?, plain(x, 0.0, c1)?),
            _ => (y(x, a, c1 + c + a)?, y(x, 0.0, c1)?),
        };
        Ok((LogBracket::exact(num), LogBracket::exact(den)))
    })?;
    Ok(RatioSeries {
        probe: "sandwich".into(),
        regime: format!("{},c={c},c1={c1}", seq.label()),
        entries,
    })
}

/// Whether `J1 <= mid <= J2` holds at every index, up to a relative slack.
pub fn sandwich_ordered(series: &RatioSeries, slack: f64) -> bool {
    let mid = series.with_label("mid");
    mid.entries
        .iter()
        .all(|m| match (series.find(m.n, "j1"), series.find(m.n, "j2")) {
            (Some(j1), Some(j2)) => {
                let r = m.ratio();
                j1.ratio() <= r * (1.0 + slack) && r <= j2.ratio() * (1.0 + slack)
            }
            _ => false,
        })
}

/// `rho_<gamma>((x, x+c]) / [(c gamma / rho_hat(gamma)) e^{gamma x} rho((x, inf))]` per `(x, c)`.
pub fn tilt_identity_probe(
    ctx: &ProbeContext,
    rho: &MixtureDistribution,
    gamma: f64,
    cs: &[f64],
    xs: &[f64],
) -> Result<RatioSeries> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return param(format!("tilt probe needs gamma > 0, got {gamma}"));
    }
    if !rho.has_continuous() {
        return Err(Error::Precondition(
            "the tail of a purely atomic measure vanishes beyond its atoms".into(),
        ));
    }
    let q = &ctx.quad;
    let log_hat = exp_moment(rho, gamma, q)?;
    let tilted = tilt(rho, gamma, q)?;
    let b = ctx.params.b;
    let mut sites = Vec::new();
    for &c in cs {
        WindowSpec::new(c)?;
        for (i, &x) in xs.iter().enumerate() {
            sites.push(Site {
                label: format!("c={c}"),
                n: i as i64,
                m: 0,
                x: ScaledSum::from_f64(b, x),
                c,
                a: 0.0,
            });
        }
    }
    let entries = evaluate(sites, |s| {
        let xf = s.x.to_f64();
        let tail = rho.log_tail(&s.x, q)?;
        if tail == f64::NEG_INFINITY {
            return Err(Error::Precondition(format!("rho has no mass beyond x = {xf}")));
        }
        let num = local_mass(&tilted, &s.x, WindowSpec { c: s.c }, q)?;
        let den = s.c.ln() + gamma.ln() - log_hat + gamma * xf + tail;
        Ok((LogBracket::exact(num), LogBracket::exact(den)))
    })?;
    Ok(RatioSeries {
        probe: "tilt".into(),
        regime: format!("gamma={gamma}"),
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum Verdict {
    ConvergesTo { limit: f64, residual: f64 },
    Diverges { last_factor: f64 },
    Inconclusive { limit: f64, residual: f64 },
}

/// Divergence factor between successive entries.
pub const DIVERGENCE_FACTOR: f64 = 1.3;

/// Default tolerance of [`classify_limit`].
pub const VERDICT_TOL: f64 = 0.05;

/// Classifies the trend of the usable entries, in index order.
///
/// Diverges when each of the last two steps grows by at least [`DIVERGENCE_FACTOR`].
/// Otherwise the log-ratios of the last half are fitted against `1/n` and `1/ln x`;
/// the better fit's intercept is the limit, which converges when the fit residual is
/// within `tol` and the limit lies within `tol` plus the spread of that half of the last value.
pub fn classify_limit(series: &RatioSeries, tol: f64) -> Verdict {
    let pts: Vec<(f64, f64, f64)> = series
        .entries
        .iter()
        .filter(|e| e.is_usable())
        .map(|e| (e.n as f64, e.x.ln_abs(), e.central_log_ratio()))
        .filter(|p| p.2.is_finite())
        .collect();
    let nan = Verdict::Inconclusive {
        limit: f64::NAN,
        residual: f64::NAN,
    };
    if pts.len() < 3 {
        return nan;
    }
    let r: Vec<f64> = pts.iter().map(|p| p.2.exp()).collect();
    let k = r.len();
    let f1 = r[k - 2] / r[k - 3];
    let f2 = r[k - 1] / r[k - 2];
    if f1 >= DIVERGENCE_FACTOR && f2 >= DIVERGENCE_FACTOR {
        return Verdict::Diverges { last_factor: f2 };
    }
    let tail = &pts[k / 2..];
    let tail = if tail.len() < 2 { &pts[k - 2..] } else { tail };
    let mut best: Option<(f64, f64)> = None;
    // Candidate decay shapes: 1/n, 1/ln x and 1/x.
    type Shape = fn(&(f64, f64, f64)) -> f64;
    let shapes: [Shape; 3] = [|p| 1.0 / p.0.max(1.0), |p| 1.0 / p.1.max(1e-300), |p| (-p.1).exp()];
    for z in shapes {
        let (intercept, residual) = fit_line(tail.iter().map(|p| (z(p), p.2)));
        if best.is_none_or(|(_, r)| residual < r) {
            best = Some((intercept, residual));
        }
    }
    let (intercept, residual) = best.expect("two fits");
    let limit = intercept.exp();
    let half: Vec<f64> = tail.iter().map(|p| p.2.exp()).collect();
    let spread =
        half.iter().copied().fold(f64::NEG_INFINITY, f64::max) - half.iter().copied().fold(f64::INFINITY, f64::min);
    let last = r[k - 1];
    if residual <= tol && (limit - last).abs() <= tol + spread {
        Verdict::ConvergesTo { limit, residual }
    } else {
        Verdict::Inconclusive { limit, residual }
    }
}

/// Least-squares `v = c0 + c1 z`; returns the intercept and the RMS residual.
fn fit_line(points: impl Iterator<Item = (f64, f64)>) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = points.collect();
    let n = pts.len() as f64;
    let mz = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mv = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let szz: f64 = pts.iter().map(|p| (p.0 - mz).powi(2)).sum();
    let szv: f64 = pts.iter().map(|p| (p.0 - mz) * (p.1 - mv)).sum();
    let slope = if szz > 0.0 { szv / szz } else { 0.0 };
    let c0 = mv - slope * mz;
    let rss: f64 = pts.iter().map(|p| (p.1 - c0 - slope * p.0).powi(2)).sum();
    (c0, (rss / n).sqrt())
}

/// `ln phi(x)` minus `ln M`: the log of the normalized density at `x`.
pub fn mu_log_density(ctx: &ProbeContext, x: &ScaledSum) -> Result<f64> {
    Ok(phi_log_value(&ctx.params, x) - ctx.ln_m()?)
}
