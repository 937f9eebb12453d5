//! Construction constants, the log-periodic profile `h` and the density `phi`.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::scaled::{Phase, PhaseFrame, ScaledSum};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub b: f64,
    pub x0: f64,
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub x1: f64,
    pub x2: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            b: 4.0,
            x0: 2.0,
            delta: 0.25,
            alpha: 1.0,
            beta: 2.0,
            x1: 0.5,
            x2: 1.5,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let p = self;
        let all = [p.b, p.x0, p.delta, p.alpha, p.beta, p.x1, p.x2];
        if all.iter().any(|v| !v.is_finite()) {
            return param("model constants must be finite");
        }
        if !(1.0 < p.x0 && p.x0 < p.b) {
            return param(format!("need 1 < x0 < b, got x0 = {}, b = {}", p.x0, p.b));
        }
        if !(p.delta > 0.0 && p.delta < 1.0 && p.delta < (p.x0 - 1.0).min(p.b - p.x0)) {
            return param(format!("need 0 < delta < min(x0 - 1, b - x0, 1), got {}", p.delta));
        }
        if !(p.alpha > 0.0 && p.alpha * p.beta > 1.0) {
            return param(format!(
                "need alpha > 0 and alpha * beta > 1, got {} * {}",
                p.alpha, p.beta
            ));
        }
        if !(0.0 < p.x1 && p.x1 < p.x2 && p.x0 + p.x2 < p.b) {
            return param(format!(
                "need 0 < x1 < x2 and x0 + x2 < b, got x1 = {}, x2 = {}",
                p.x1, p.x2
            ));
        }
        if p.x1 <= p.delta {
            return param(format!(
                "x0 + x1 must clear the dip: x1 = {} <= delta = {}",
                p.x1, p.delta
            ));
        }
        Ok(())
    }

    pub fn ln_b(&self) -> f64 {
        self.b.ln()
    }

    /// `b^scale * mantissa` as a scaled point.
    pub fn point(&self, scale: i64, mantissa: f64) -> ScaledSum {
        ScaledSum::new(self.b, scale, mantissa, 0.0).expect("validated base")
    }

    pub fn plain(&self, v: f64) -> ScaledSum {
        ScaledSum::from_f64(self.b, v)
    }

    pub fn profile(&self) -> PeriodicProfile {
        PeriodicProfile::new(*self)
    }
}

/// The periodic function `h`: zero at the dip center, `-1/ln|y - x0|` inside the
/// dip and the constant `-1/ln(delta)` elsewhere in the period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicProfile {
    pub params: ModelParams,
    pub plateau: f64,
}

impl PeriodicProfile {
    pub fn new(params: ModelParams) -> Self {
        PeriodicProfile {
            params,
            plateau: -1.0 / params.delta.ln(),
        }
    }

    /// `h` at a phase already located in its period.
    pub fn at_phase(&self, phase: &Phase) -> f64 {
        if phase.ln_dist < self.params.delta.ln() {
            -1.0 / phase.ln_dist
        } else {
            self.plateau
        }
    }

    /// `h` evaluated directly at a mantissa `y` in `[1, b)`.
    pub fn at_mantissa(&self, y: f64) -> f64 {
        let d = (y - self.params.x0).abs();
        if d < self.params.delta {
            -1.0 / d.ln()
        } else {
            self.plateau
        }
    }

    pub fn frame(&self, anchor: &ScaledSum) -> PhaseFrame {
        PhaseFrame::new(anchor, self.params.x0)
    }

    /// `ln phi(anchor + t)` through a prepared frame; `-inf` off the support and at dip centers.
    pub fn log_phi(&self, frame: &PhaseFrame, t: f64) -> f64 {
        match frame.at(t) {
            Some(ph) if ph.scale >= 0 => {
                let h = self.at_phase(&ph);
                -(1.0 + self.params.alpha) * ph.log_x + h.ln()
            }
            _ => f64::NEG_INFINITY,
        }
    }

    /// Whether `anchor + t` falls inside the dip neighborhood of its period.
    pub fn in_dip(&self, frame: &PhaseFrame, t: f64) -> bool {
        frame.at(t).is_some_and(|ph| ph.ln_dist < self.params.delta.ln())
    }
}

pub fn profile_value(profile: &PeriodicProfile, x: &ScaledSum) -> Result<f64> {
    if !x.is_normalized() || x.base() != profile.params.b {
        return Err(Error::Contract(
            "scaled point is not normalized in the model base".into(),
        ));
    }
    match profile.frame(x).at(0.0) {
        Some(ph) => Ok(profile.at_phase(&ph)),
        None => Err(Error::Contract("h is defined through log x and needs x > 0".into())),
    }
}

/// `ln phi(x)` with `phi(x) = x^{-1-alpha} h(ln x)` on `[1, inf)`.
pub fn phi_log_value(params: &ModelParams, x: &ScaledSum) -> f64 {
    let profile = params.profile();
    profile.log_phi(&profile.frame(x), 0.0)
}

/// How the mantissa sequence approaches (or avoids) the dip center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum Regime {
    /// `x_n = b^{m_n} y` with a fixed mantissa.
    FixedY { y: f64 },
    /// `x_n = b^{m_n} x0 + side * lambda_n`; `lambda = None` realizes the infinite target as `lambda_n = n`.
    Lambda { lambda: Option<f64>, side: f64 },
    /// `x_n = b^{m_n} x0 + gamma_n (ln x_n)^beta`; `gamma = None` means `gamma_n = n`.
    Gamma { gamma: Option<f64> },
    /// Plain points, for probes of measures without log-periodic structure.
    Explicit { points: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    #[serde(flatten)]
    pub regime: Regime,
    pub n_start: i64,
    pub n_end: i64,
    /// `m_n = m_scale * n`.
    #[serde(default = "one")]
    pub m_scale: i64,
}

fn one() -> i64 {
    1
}

impl SequenceSpec {
    pub fn fixed_y(y: f64, n_start: i64, n_end: i64) -> Self {
        SequenceSpec {
            regime: Regime::FixedY { y },
            n_start,
            n_end,
            m_scale: 1,
        }
    }

    pub fn with_m_scale(mut self, m_scale: i64) -> Self {
        self.m_scale = m_scale;
        self
    }

    pub fn indices(&self) -> Vec<i64> {
        match &self.regime {
            Regime::Explicit { points } => (0..points.len() as i64).collect(),
            _ => (self.n_start..=self.n_end).collect(),
        }
    }

    pub fn m_of(&self, n: i64) -> i64 {
        match self.regime {
            Regime::Explicit { .. } => 0,
            _ => self.m_scale * n,
        }
    }

    pub fn label(&self) -> String {
        match &self.regime {
            Regime::FixedY { y } => format!("y={y}"),
            Regime::Lambda { lambda: Some(l), side } => format!("lambda={l},side={side}"),
            Regime::Lambda { lambda: None, side } => format!("lambda=inf,side={side}"),
            Regime::Gamma { gamma: Some(g) } => format!("gamma={g}"),
            Regime::Gamma { gamma: None } => "gamma=inf".into(),
            Regime::Explicit { .. } => "explicit".into(),
        }
    }
}

pub fn make_sequence(params: &ModelParams, spec: &SequenceSpec) -> Result<Vec<ScaledSum>> {
    params.validate()?;
    if spec.m_scale < 1 {
        return param("m_scale must be >= 1");
    }
    if !matches!(spec.regime, Regime::Explicit { .. }) && (spec.n_start < 0 || spec.n_end < spec.n_start) {
        return param(format!("bad index range {}..={}", spec.n_start, spec.n_end));
    }
    let ln_b = params.ln_b();
    match &spec.regime {
        Regime::Explicit { points } => {
            if points.iter().any(|p| !p.is_finite()) {
                return param("explicit points must be finite");
            }
            Ok(points.iter().map(|&p| params.plain(p)).collect())
        }
        Regime::FixedY { y } => {
            if !(*y >= 1.0 && *y <= params.b) {
                return param(format!("target mantissa {y} outside [1, b]"));
            }
            Ok(spec
                .indices()
                .into_iter()
                .map(|n| params.point(spec.m_of(n), *y))
                .collect())
        }
        Regime::Lambda { lambda, side } => {
            if lambda.is_some_and(|l| !(l >= 0.0 && l.is_finite())) || !(side.abs() == 1.0) {
                return param("lambda target must be finite and >= 0, side must be +1 or -1");
            }
            spec.indices()
                .into_iter()
                .map(|n| {
                    let lam = lambda.unwrap_or(n as f64);
                    let x = ScaledSum::new(params.b, spec.m_of(n), params.x0, side * lam)?;
                    check_mantissa(params, &x)?;
                    Ok(x)
                })
                .collect()
        }
        Regime::Gamma { gamma } => {
            if gamma.is_some_and(|g| !(g >= 0.0 && g.is_finite())) {
                return param("gamma target must be finite and >= 0");
            }
            spec.indices()
                .into_iter()
                .map(|n| {
                    let g = gamma.unwrap_or(n as f64);
                    let m = spec.m_of(n);
                    let base_ln = m as f64 * ln_b + params.x0.ln();
                    let mut ln_x = base_ln;
                    let mut off = 0.0;
                    for _ in 0..50 {
                        off = g * ln_x.powf(params.beta);
                        let next = base_ln + (off * (-base_ln).exp()).ln_1p();
                        if next == ln_x {
                            break;
                        }
                        ln_x = next;
                    }
                    let x = ScaledSum::new(params.b, m, params.x0, off)?;
                    check_mantissa(params, &x)?;
                    Ok(x)
                })
                .collect()
        }
    }
}

fn check_mantissa(params: &ModelParams, x: &ScaledSum) -> Result<()> {
    let frame = PhaseFrame::new(x, params.x0);
    match frame.at(0.0) {
        Some(_) if x.signum() > 0 => Ok(()),
        _ => param("sequence point is not positive"),
    }
}

/// `lambda_n = |x - b^M x0|` for the dip decomposition of `x` with `M` its period index.
pub fn lambda_of(params: &ModelParams, x: &ScaledSum) -> f64 {
    let frame = params.profile().frame(x);
    let ph = frame.at(0.0).expect("positive point");
    let center = params.point(ph.scale, params.x0);
    x.sub(&center).to_f64().abs()
}

/// `gamma_n = lambda_n (ln x)^{-beta}`.
pub fn gamma_of(params: &ModelParams, x: &ScaledSum) -> f64 {
    lambda_of(params, x) / x.ln_abs().powf(params.beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ModelParams::default().validate().unwrap();
        let bad = ModelParams {
            delta: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ModelParams {
            x1: 0.2,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn profile_examples() {
        let p = ModelParams::default();
        let prof = p.profile();
        let h = profile_value(&prof, &p.plain(2.1)).unwrap();
        // h(2.1) = -1/ln 0.1
        assert!((h - 1.0 / 10f64.ln()).abs() < 1e-15);
        assert_eq!(profile_value(&prof, &p.plain(2.0)).unwrap(), 0.0);
        let h2 = profile_value(&prof, &p.plain(8.4)).unwrap();
        assert!((h2 - h).abs() < 1e-12 * h);
        assert!((prof.plateau - 1.0 / 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn phi_examples() {
        let p = ModelParams::default();
        let v = phi_log_value(&p, &p.plain(3.0));
        assert!((v - 0.0801498_f64.ln()).abs() < 1e-6);
        assert_eq!(phi_log_value(&p, &p.plain(0.5)), f64::NEG_INFINITY);
        assert_eq!(phi_log_value(&p, &p.plain(2.0)), f64::NEG_INFINITY);
        assert!(phi_log_value(&p, &p.plain(1.0)).is_finite());
    }

    #[test]
    fn sequence_examples() {
        let p = ModelParams::default();
        let xs = make_sequence(&p, &SequenceSpec::fixed_y(3.0, 1, 8)).unwrap();
        assert_eq!(xs[0].to_f64(), 12.0);
        assert_eq!(xs[1].to_f64(), 48.0);
        assert_eq!(xs[2].to_f64(), 192.0);
        let spec = SequenceSpec {
            regime: Regime::Lambda {
                lambda: Some(0.0),
                side: 1.0,
            },
            n_start: 1,
            n_end: 30,
            m_scale: 1,
        };
        for x in make_sequence(&p, &spec).unwrap() {
            assert_eq!(x.terms().len(), 1);
            assert_eq!(x.dominant().unwrap().mantissa, 2.0);
        }
        let bad = SequenceSpec::fixed_y(4.5, 1, 3);
        assert!(make_sequence(&p, &bad).is_err());
    }

    #[test]
    fn gamma_sequence_reproduces_target() {
        let p = ModelParams::default();
        let spec = SequenceSpec {
            regime: Regime::Gamma { gamma: Some(1.0) },
            n_start: 4,
            n_end: 40,
            m_scale: 1,
        };
        for x in make_sequence(&p, &spec).unwrap() {
            let g = gamma_of(&p, &x);
            assert!((g - 1.0).abs() < 1e-12, "gamma_n = {g} at {x:?}");
        }
    }
}
