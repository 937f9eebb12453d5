//! The counterexample distributions and their theorem-level reports.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convolve::{conv_local_mass, conv_weighted_window};
use crate::error::{param, Result};
use crate::kernel::Kernel;
use crate::logspace::LogBracket;
use crate::measures::{exp_moment, local_mass, Component, MixtureDistribution, TestFn, WindowSpec};
use crate::model::{ModelParams, Regime, SequenceSpec};
use crate::probes::{
    classify_limit, conv_ratio_probe, long_tail_probe, sandwich_probe, sd_probe, smoothing_probe, tilt_identity_probe,
    uniformity_probe, DensityHandle, EntryStatus, LongTailMode, ProbeContext, RatioEntry, RatioSeries, Verdict,
    WindowExponent, VERDICT_TOL,
};
use crate::quadrature::QuadratureSpec;
use crate::scaled::{ScaledSum, Term};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GallerySpec {
    pub params: ModelParams,
    /// Number of atoms kept in `mu_1`; the last one absorbs the remaining mass.
    pub k_max: u32,
    pub n_start: i64,
    pub n_end: i64,
    pub quad: QuadratureSpec,
}

impl Default for GallerySpec {
    fn default() -> Self {
        GallerySpec {
            params: ModelParams::default(),
            k_max: 5,
            n_start: 4,
            n_end: 8,
            quad: QuadratureSpec::default(),
        }
    }
}

impl GallerySpec {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.quad.validate()?;
        if !(1..=6).contains(&self.k_max) {
            return param(format!("k_max must lie in 1..=6, got {}", self.k_max));
        }
        if self.n_start < 1 || self.n_end < self.n_start {
            return param(format!("bad index range {}..={}", self.n_start, self.n_end));
        }
        Ok(())
    }

    pub fn context(&self) -> Result<ProbeContext> {
        self.validate()?;
        ProbeContext::new(self.params, self.quad.clone())
    }

    fn fixed_y(&self, y: f64) -> SequenceSpec {
        SequenceSpec::fixed_y(y, self.n_start, self.n_end)
    }
}

/// `n_k = 4^k`.
pub fn n_k(k: u32) -> i64 {
    4i64.pow(k)
}

/// `B_k = (-b^{n_k} x2, -b^{n_k} x1]` and `D_k = (b^{n_k} x0, b^{n_k} x0 + 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalFamily {
    pub k: u32,
    pub n_k: i64,
    pub b_lo: ScaledSum,
    pub b_hi: ScaledSum,
    pub d_lo: ScaledSum,
    pub d_hi: ScaledSum,
}

fn scaled_term(params: &ModelParams, sign: i8, scale: i64, value: f64) -> Result<ScaledSum> {
    ScaledSum::from_parts(
        params.b,
        vec![Term {
            sign,
            scale,
            mantissa: value,
        }],
        0.0,
    )
}

impl IntervalFamily {
    pub fn new(params: &ModelParams, k: u32) -> Result<Self> {
        let n = n_k(k);
        let d_lo = scaled_term(params, 1, n, params.x0)?;
        Ok(IntervalFamily {
            k,
            n_k: n,
            b_lo: scaled_term(params, -1, n, params.x2)?,
            b_hi: scaled_term(params, -1, n, params.x1)?,
            d_hi: d_lo.add_f64(1.0),
            d_lo,
        })
    }
}

pub fn build_mu(spec: &GallerySpec) -> Result<MixtureDistribution> {
    spec.context()?.mu()
}

/// Atoms at `-b^{n_k}(x1 + x2)/2` with weights `2^{-k}`; the last atom also carries the remainder.
pub fn build_mu1(spec: &GallerySpec) -> Result<MixtureDistribution> {
    spec.validate()?;
    let p = &spec.params;
    let mid = 0.5 * (p.x1 + p.x2);
    let mut locations = Vec::new();
    let mut weights = Vec::new();
    for k in 1..=spec.k_max {
        locations.push(scaled_term(p, -1, n_k(k), mid)?);
        weights.push(0.5f64.powi(k as i32));
    }
    *weights.last_mut().expect("k_max >= 1") *= 2.0;
    MixtureDistribution::new(vec![(1.0, Component::AtomSeries { locations, weights })])
}

/// `rho_1 = (delta_0 + mu)/2` and `rho_2 = (mu_1 + mu)/2`.
pub fn build_rho1_rho2(spec: &GallerySpec) -> Result<(MixtureDistribution, MixtureDistribution)> {
    let mu = build_mu(spec)?;
    let mu1 = build_mu1(spec)?;
    let phi = mu.components[0].1.clone();
    let atoms = mu1.components[0].1.clone();
    Ok((
        MixtureDistribution::new(vec![(0.5, Component::PointMass { location: 0.0 }), (0.5, phi.clone())])?,
        MixtureDistribution::new(vec![(0.5, atoms), (0.5, phi)])?,
    ))
}

/// Symmetric triangle density on `[0, 1]`.
pub fn default_kernel() -> Kernel {
    Kernel::triangle(1.0)
}

/// `p_i = f * rho_i` as density handles.
pub fn build_p1_p2(spec: &GallerySpec, f: &Kernel) -> Result<(DensityHandle, DensityHandle)> {
    let (lo, hi) = f.support();
    if lo < 0.0 || hi > 1.0 {
        return param("the smoothing kernel must live on [0, 1]");
    }
    let (r1, r2) = build_rho1_rho2(spec)?;
    Ok((
        DensityHandle::smoothed(f.clone(), r1),
        DensityHandle::smoothed(f.clone(), r2),
    ))
}

/// Density proportional to `e^{-gamma x}(1 + x)^{-2}` on `[0, inf)`.
pub fn build_tilt_example(gamma: f64, quad: &QuadratureSpec) -> Result<MixtureDistribution> {
    let lomax = MixtureDistribution::single(Component::LomaxAC { alpha: 1.0 });
    let log_normalizer = exp_moment(&lomax, -gamma, quad)?;
    MixtureDistribution::new(vec![(
        1.0,
        Component::Tilted {
            gamma: -gamma,
            base: Arc::new(lomax),
            log_normalizer,
        },
    )])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedVerdict {
    pub probe: String,
    pub regime: String,
    pub label: String,
    pub verdict: Verdict,
}

/// A predicted value attached to a series entry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub probe: String,
    pub label: String,
    pub n: i64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub name: String,
    pub params: ModelParams,
    pub notes: Vec<String>,
    pub series: Vec<RatioSeries>,
    pub verdicts: Vec<NamedVerdict>,
    pub predictions: Vec<Prediction>,
}

impl Report {
    fn new(name: &str, params: ModelParams) -> Self {
        Report {
            name: name.into(),
            params,
            notes: Vec::new(),
            series: Vec::new(),
            verdicts: Vec::new(),
            predictions: Vec::new(),
        }
    }

    /// Adds a series and one verdict per label in it.
    fn push(&mut self, s: RatioSeries) {
        let mut labels: Vec<String> = Vec::new();
        for e in &s.entries {
            if !labels.contains(&e.label) {
                labels.push(e.label.clone());
            }
        }
        for l in labels {
            self.verdicts.push(NamedVerdict {
                probe: s.probe.clone(),
                regime: s.regime.clone(),
                label: l.clone(),
                verdict: classify_limit(&s.with_label(&l), VERDICT_TOL),
            });
        }
        self.series.push(s);
    }

    pub fn find(&self, probe: &str, regime: &str) -> Option<&RatioSeries> {
        self.series.iter().find(|s| s.probe == probe && s.regime == regime)
    }

    /// Whether any entry failed quadrature or is only bracketed.
    pub fn has_incomplete(&self) -> bool {
        self.series
            .iter()
            .flat_map(|s| &s.entries)
            .any(|e| e.status == EntryStatus::QuadratureFailed)
    }
}

pub const REPORT_NAMES: [&str; 5] = ["thm11", "thm12", "lem32", "prop11", "tilt"];

pub fn run_report(spec: &GallerySpec, name: &str) -> Result<Report> {
    match name {
        "thm11" => thm11_report(spec),
        "thm12" => thm12_report(spec),
        "lem32" => lem32_report(spec),
        "prop11" => prop11_report(spec),
        "tilt" => tilt_report(spec),
        _ => param(format!("unknown report {name:?}; expected one of {REPORT_NAMES:?}")),
    }
}

/// Local subexponentiality of `mu`, subexponentiality of its square's density, and the
/// failure of uniformity at dip anchors.
pub fn thm11_report(spec: &GallerySpec) -> Result<Report> {
    let ctx = spec.context()?;
    let mu = ctx.mu()?;
    let mut r = Report::new("thm11", spec.params);
    let y3 = spec.fixed_y(3.0);
    r.push(long_tail_probe(&ctx, &mu, LongTailMode::Local { c: 1.0 }, 1.0, &y3)?);
    for c in [0.5, 1.0, 2.0] {
        r.push(conv_ratio_probe(&ctx, &mu, c, &y3)?);
    }
    r.push(sd_probe(&ctx, &DensityHandle::Phi, &y3)?);
    let ns: Vec<i64> = (spec.n_start..=spec.n_end).collect();
    let diag = uniformity_probe(&ctx, &mu, &ns, WindowExponent::Diagonal)?;
    let fixed = uniformity_probe(&ctx, &mu, &ns, WindowExponent::Fixed(2))?;
    for &n in &ns {
        r.predictions.push(Prediction {
            probe: "uniformity".into(),
            label: "m=n".into(),
            n,
            value: 0.5,
        });
        r.predictions.push(Prediction {
            probe: "uniformity".into(),
            label: "m=2".into(),
            n,
            value: n as f64 / (n as f64 + 2.0),
        });
    }
    let mut merged = diag;
    merged.entries.extend(fixed.entries);
    r.push(merged);
    r.notes
        .push("conv ratios are (mu*mu)((x,x+c]) / mu((x,x+c]) and tend to 2".into());
    r.notes
        .push("uniformity: r(n,n) stays near 1/2 instead of 1; r(n,2) follows n/(n+2)".into());
    Ok(r)
}

/// `R_k = (mu * mu_1)(D_k + c) / mu(D_k + c)` for `k = 1..=k_max`, labelled `R` (`c = 0`)
/// and `R_shift` (`c = 1`), plus per-atom terms labelled `term` with `m = j`.
pub fn r_k_series(spec: &GallerySpec) -> Result<RatioSeries> {
    let ctx = spec.context()?;
    let mu = ctx.mu()?;
    let mu1 = build_mu1(spec)?;
    let w = WindowSpec { c: 1.0 };
    let atoms = mu1.atoms(spec.params.b)?;
    let mut jobs = Vec::new();
    for k in 1..=spec.k_max {
        jobs.push((k, "R", 0usize, 0.0));
        jobs.push((k, "R_shift", 0usize, 1.0));
        for j in 1..=atoms.len() {
            jobs.push((k, "term", j, 0.0));
        }
    }
    let entries = jobs
        .into_par_iter()
        .map(|(k, label, j, shift)| {
            let fam = IntervalFamily::new(&spec.params, k)?;
            let x = fam.d_lo.add_f64(shift);
            let den = local_mass(&mu, &x, w, &ctx.quad)?;
            let num = if label == "term" {
                let (loc, lw) = &atoms[j - 1];
                LogBracket::exact(lw + local_mass(&mu, &x.sub(loc), w, &ctx.quad)?)
            } else {
                conv_local_mass(&mu1, &mu, &x, w, &ctx.quad, &ctx.plan)?
            };
            Ok(RatioEntry {
                label: label.into(),
                n: k as i64,
                m: j as i64,
                x,
                c: 1.0,
                a: shift,
                log_num: num,
                log_den: LogBracket::exact(den),
                status: if num.is_exact() {
                    EntryStatus::Ok
                } else {
                    EntryStatus::Bracketed
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RatioSeries {
        probe: "r_k".into(),
        regime: "D_k".into(),
        entries,
    })
}

/// `\int_{D_k} p_2 p_2 / \int_{D_k} p_2` for `k = 1..=k_max.min(4)`.
/// Tolerance floor for the smoothed failure series.
pub const P2_REL_TOL: f64 = 1e-7;

pub fn p2_failure_series(spec: &GallerySpec, f: &Kernel) -> Result<RatioSeries> {
    let ctx = spec.context()?;
    let (_, r2) = build_rho1_rho2(spec)?;
    let f = Arc::new(f.clone());
    let ff = Arc::new(f.self_convolved()?);
    // Nested generic kernel windows over dip cusps are costly; the ratios grow by whole units per step.
    let quad = QuadratureSpec {
        rel_tol: ctx.quad.rel_tol.max(P2_REL_TOL),
        ..ctx.quad.clone()
    };
    let entries = (1..=spec.k_max.min(4))
        .into_par_iter()
        .map(|k| {
            let x = IntervalFamily::new(&spec.params, k)?.d_lo;
            let num = conv_weighted_window(
                &r2,
                &r2,
                &x,
                &TestFn::KernelWindow {
                    kernel: ff.clone(),
                    lo: 0.0,
                    hi: 1.0,
                },
                &quad,
                &ctx.plan,
            )?;
            let den = r2.weighted_window(
                &x,
                &TestFn::KernelWindow {
                    kernel: f.clone(),
                    lo: 0.0,
                    hi: 1.0,
                },
                &quad,
            )?;
            Ok(RatioEntry {
                label: "p2".into(),
                n: k as i64,
                m: 0,
                x,
                c: 1.0,
                a: 0.0,
                log_num: num,
                log_den: LogBracket::exact(den),
                status: if num.is_exact() {
                    EntryStatus::Ok
                } else {
                    EntryStatus::Bracketed
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RatioSeries {
        probe: "p2_sd_failure".into(),
        regime: "D_k".into(),
        entries,
    })
}

/// Leading-order `R_k - 1` under the model: `2^{-k} (x0 / s)^{1+alpha} n_k ln b h(s)` with
/// `s = x0 + (x1 + x2)/2`.
pub fn r_k_leading(params: &ModelParams, k: u32) -> f64 {
    let s = params.x0 + 0.5 * (params.x1 + params.x2);
    let h = params.profile().at_mantissa(s);
    0.5f64.powi(k as i32) * (params.x0 / s).powf(1.0 + params.alpha) * n_k(k) as f64 * params.ln_b() * h
}

/// Divergence of `mu * mu_1` along `D_k` and the failure of `p_2` next to `p_1`.
pub fn thm12_report(spec: &GallerySpec) -> Result<Report> {
    let ctx = spec.context()?;
    let mut r = Report::new("thm12", spec.params);
    let rk = r_k_series(spec)?;
    for k in 1..=spec.k_max {
        r.predictions.push(Prediction {
            probe: "r_k".into(),
            label: "R".into(),
            n: k as i64,
            value: 1.0 + r_k_leading(&spec.params, k),
        });
    }
    r.push(rk);
    let f = default_kernel();
    r.push(p2_failure_series(spec, &f)?);
    let (p1, _) = build_p1_p2(spec, &f)?;
    r.push(sd_probe(&ctx, &p1, &spec.fixed_y(3.0))?);
    r.notes.push(format!(
        "mu_1 keeps k_max = {} atoms; the last atom absorbs the remaining mass",
        spec.k_max
    ));
    r.notes.push(
        "the p2 failure is checked through the single-window ratio on D_k, not through the full Fatou bound over u in [0, 2]"
            .into(),
    );
    Ok(r)
}

/// Bridges between densities and window masses.
pub fn prop11_report(spec: &GallerySpec) -> Result<Report> {
    let ctx = spec.context()?;
    let mu = ctx.mu()?;
    let mut r = Report::new("prop11", spec.params);
    let y3 = spec.fixed_y(3.0);
    let local = DensityHandle::smoothed(Kernel::uniform(1.0), mu.clone());
    r.push(sd_probe(&ctx, &local, &y3)?);
    r.push(smoothing_probe(&ctx, &Arc::new(default_kernel()), &mu, &y3)?);
    r.push(sandwich_probe(&ctx, &mu, 0.25, 1.0, 1.0, &y3)?);
    r.notes
        .push("sd on x -> mu((x-1, x]); smoothing uses the triangle kernel on [0, 1]".into());
    r.notes
        .push("sandwich limits: J1 -> c1/(c1+c) = 0.8, J2 -> (c1+c)/c1 = 1.25".into());
    Ok(r)
}

/// `sd` along the three regimes of the self-convolution asymptotics, with each regime's
/// predicted profile factor.
pub fn lem32_report(spec: &GallerySpec) -> Result<Report> {
    let ctx = spec.context()?;
    let p = spec.params;
    let mut r = Report::new("lem32", p);
    let regimes = [
        Regime::FixedY { y: 3.0 },
        Regime::Gamma { gamma: Some(1.0) },
        Regime::Gamma { gamma: None },
    ];
    for regime in regimes {
        let seq = SequenceSpec {
            regime: regime.clone(),
            n_start: spec.n_start,
            n_end: spec.n_end,
            m_scale: 1,
        };
        let s = sd_probe(&ctx, &DensityHandle::Phi, &seq)?;
        for e in &s.entries {
            let value = match regime {
                Regime::FixedY { y } => p.profile().at_mantissa(y),
                Regime::Gamma { gamma: Some(_) } => 1.0 / (e.m as f64 * p.ln_b()),
                _ => {
                    let lambda = crate::model::lambda_of(&p, &e.x);
                    -1.0 / (lambda.ln() - e.m as f64 * p.ln_b())
                }
            };
            r.predictions.push(Prediction {
                probe: "sd".into(),
                label: seq.label(),
                n: e.n,
                value,
            });
        }
        r.push(s);
    }
    r.notes.push(
        "predictions are the profile factor of the regime's denominator: h(ln y), 1/(m ln b), -1/ln|y_n - x0|".into(),
    );
    Ok(r)
}

/// The tilt identity for `rho ~ e^{-x}(1+x)^{-2}` and the matching long-tail shift.
pub fn tilt_report(spec: &GallerySpec) -> Result<Report> {
    let ctx = spec.context()?;
    let gamma = 1.0;
    let rho = build_tilt_example(gamma, &spec.quad)?;
    let xs: Vec<f64> = (2..=6).map(|k| 10.0 * k as f64).collect();
    let mut r = Report::new("tilt", spec.params);
    r.push(tilt_identity_probe(&ctx, &rho, gamma, &[0.1, 1.0], &xs)?);
    let seq = SequenceSpec {
        regime: Regime::Explicit { points: xs.clone() },
        n_start: 0,
        n_end: 0,
        m_scale: 1,
    };
    r.push(long_tail_probe(&ctx, &rho, LongTailMode::Tail, 1.0, &seq)?);
    r.predictions.push(Prediction {
        probe: "long_tail".into(),
        label: "a=1".into(),
        n: xs.len() as i64 - 1,
        value: (-gamma).exp(),
    });
    r.notes
        .push("rho has density proportional to e^{-x}(1+x)^{-2}; x = 20..60".into());
    Ok(r)
}
