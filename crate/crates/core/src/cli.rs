//! Command-line front end: configuration, command execution and CSV/JSON emission.
//!
//! A run is one JSON document with the keys `model`, `quadrature`, `probe` and `output`,
//! all optional. Positional `key=value` arguments patch the `probe` object before it is
//! parsed, with dotted keys reaching nested objects (`sequence.n_end=6`).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::convolve::{
    brute_force_conv_local_mass, brute_force_conv_oracle, brute_force_local_mass, conv_local_mass, phi_self_conv_at,
    ConvPlan,
};
use crate::error::Error;
use crate::gallery::{
    build_tilt_example, default_kernel, run_report, GallerySpec, NamedVerdict, Prediction, REPORT_NAMES,
};
use crate::kernel::Kernel;
use crate::logspace::LogBracket;
use crate::measures::{local_mass, normalizer_m, uniform, WindowSpec};
use crate::model::{make_sequence, phi_log_value, profile_value, ModelParams, SequenceSpec};
use crate::probes::{
    classify_limit, conv_ratio_probe, long_tail_probe, sandwich_probe, scaling_probe, sd_probe, smoothing_probe,
    tilt_identity_probe, uniformity_probe, DensityHandle, EntryStatus, LongTailMode, ProbeContext, RatioSeries,
    WindowExponent, VERDICT_TOL,
};
use crate::quadrature::QuadratureSpec;
use crate::scaled::ScaledSum;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_QUADRATURE: i32 = 3;

/// Linear ratios are clipped to `[1e-300, 1e300]`; the log columns are authoritative.
pub const RATIO_CLIP: f64 = 1e300;

pub const PROBE_NAMES: [&str; 8] = [
    "long_tail",
    "conv",
    "sd",
    "uniformity",
    "scaling",
    "smoothing",
    "sandwich",
    "tilt",
];
pub const ORACLE_CASES: [&str; 3] = ["uniform", "phi", "mu_mass"];

#[derive(Debug, Parser)]
#[command(name = "subexp", version, about = "Numerical probes of local subexponentiality")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration; every key is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate phi, h and unit-window masses of mu along a sequence.
    Eval {
        #[arg(value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run one probe against mu (or the tilt example).
    Probe {
        name: String,
        #[arg(value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run a named report: thm11, thm12, lem32, prop11 or tilt.
    Gallery {
        name: String,
        #[arg(value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Compare adaptive results with fixed-step sums: uniform, phi or mu_mass.
    Oracle {
        case: String,
        #[arg(value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub sequence: SequenceSpec,
    /// Shift of the long-tail probe.
    pub a: f64,
    /// Window width.
    pub c: f64,
    /// Window widths of the scaling and tilt probes; the scaling probe falls back to `[c]`
    /// and the tilt probe to `[0.1, 1]`.
    pub cs: Option<Vec<f64>>,
    /// Outer window of the sandwich probe.
    pub c1: f64,
    /// Uniformity window exponent; absent means `m = n`.
    pub m: Option<i64>,
    /// Long-tail comparison: `local`, `density` or `tail`.
    pub mode: String,
    /// `mu` or `smoothed` (mu smoothed by a unit uniform), for the sd probe.
    pub target: String,
    pub gamma: f64,
    /// Plain anchors of the tilt probe.
    pub points: Vec<f64>,
    pub k_max: u32,
    /// Grid step of the oracles.
    pub step: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            sequence: SequenceSpec::fixed_y(3.0, 4, 8),
            a: 1.0,
            c: 1.0,
            cs: None,
            c1: 1.0,
            m: None,
            mode: "local".into(),
            target: "mu".into(),
            gamma: 1.0,
            points: vec![20.0, 30.0, 40.0, 50.0, 60.0],
            k_max: 5,
            step: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams,
    pub quadrature: QuadratureSpec,
    pub probe: ProbeConfig,
    pub output: OutputConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Compute(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("output encoding failed: {0}")]
    Encode(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Compute(Error::Quadrature(_)) => EXIT_QUADRATURE,
            CliError::Compute(_) => EXIT_CONFIG,
            CliError::Io(_) | CliError::Encode(_) => EXIT_IO,
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(config_err(format!("bad override key {key:?}")));
        }
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| config_err(format!("override {key:?} descends into a non-object")))?;
        if i + 1 == parts.len() {
            obj.insert((*part).to_string(), value);
            return Ok(());
        }
        cur = obj.entry(*part).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split yields at least one part")
}

/// Reads the config file (if any), applies `key=value` overrides to `probe` and validates.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut doc: Value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", p.display())))?
        }
        None => Value::Object(Default::default()),
    };
    if !doc.is_object() {
        return Err(config_err("the configuration must be a JSON object"));
    }
    if !overrides.is_empty() {
        // Seed the probe object with its defaults so dotted keys patch rather than replace.
        let probe = doc
            .as_object_mut()
            .expect("checked above")
            .remove("probe")
            .unwrap_or(Value::Object(Default::default()));
        let mut probe = merge(serde_json::to_value(ProbeConfig::default()).expect("plain data"), probe);
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| config_err(format!("expected KEY=VALUE, got {o:?}")))?;
            let v = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
            set_path(&mut probe, k, v)?;
        }
        doc.as_object_mut()
            .expect("checked above")
            .insert("probe".into(), probe);
    }
    let cfg: RunConfig = serde_json::from_value(doc).map_err(|e| config_err(e.to_string()))?;
    cfg.model.validate().map_err(|e| config_err(e.to_string()))?;
    cfg.quadrature.validate().map_err(|e| config_err(e.to_string()))?;
    ConvPlan::new(&cfg.model).map_err(|e| config_err(e.to_string()))?;
    Ok(cfg)
}

/// Overlays `top` on `base`, recursing into objects. A sequence override replaces
/// the whole sequence when it changes regime, since regime fields do not mix.
fn merge(base: Value, top: Value) -> Value {
    match (base, top) {
        (Value::Object(mut b), Value::Object(t)) => {
            for (k, v) in t {
                let keep_base = k != "sequence" || v.get("regime").is_none();
                let next = match b.remove(&k) {
                    Some(old) if keep_base => merge(old, v),
                    _ => v,
                };
                b.insert(k, next);
            }
            Value::Object(b)
        }
        (_, t) => t,
    }
}

/// One CSV/JSON row per ratio entry, carrying the model constants that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioRow {
    pub probe: String,
    pub n: i64,
    pub m: i64,
    pub c: f64,
    pub log_num: f64,
    pub log_den: f64,
    pub ratio: f64,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    pub regime: String,
    pub label: String,
    pub a: f64,
    pub x: String,
    pub log_ratio: f64,
    pub status: EntryStatus,
    pub bracketed: bool,
    pub b: f64,
    pub x0: f64,
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub x1: f64,
    pub x2: f64,
}

fn clip_exp(l: f64) -> f64 {
    if l.is_nan() {
        return f64::NAN;
    }
    l.exp().clamp(1.0 / RATIO_CLIP, RATIO_CLIP)
}

pub fn ratio_rows(series: &RatioSeries, p: &ModelParams) -> Vec<RatioRow> {
    series
        .entries
        .iter()
        .map(|e| {
            let br = e.log_ratio();
            let log_ratio = e.central_log_ratio();
            RatioRow {
                probe: series.probe.clone(),
                n: e.n,
                m: e.m,
                c: e.c,
                log_num: e.log_num.central(),
                log_den: e.log_den.central(),
                ratio: clip_exp(log_ratio),
                bracket_lo: clip_exp(br.lo),
                bracket_hi: clip_exp(br.hi),
                regime: series.regime.clone(),
                label: e.label.clone(),
                a: e.a,
                x: e.x.to_string(),
                log_ratio,
                status: e.status,
                bracketed: e.status != EntryStatus::Ok,
                b: p.b,
                x0: p.x0,
                delta: p.delta,
                alpha: p.alpha,
                beta: p.beta,
                x1: p.x1,
                x2: p.x2,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub n: i64,
    pub m: i64,
    pub x: String,
    pub ln_x: f64,
    pub h: f64,
    pub log_phi: f64,
    pub c: f64,
    pub log_local_mass: f64,
    pub local_mass: f64,
    pub b: f64,
    pub x0: f64,
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub x1: f64,
    pub x2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub case: String,
    pub x: f64,
    pub c: f64,
    pub adaptive: f64,
    pub oracle: f64,
    pub rel_err: f64,
    pub step: f64,
    pub b: f64,
    pub x0: f64,
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub x1: f64,
    pub x2: f64,
}

/// Everything one command produces. CSV output carries only `rows`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table<R> {
    pub command: String,
    pub name: String,
    pub params: ModelParams,
    pub rows: Vec<R>,
    pub verdicts: Vec<NamedVerdict>,
    pub predictions: Vec<Prediction>,
    pub notes: Vec<String>,
}

impl<R: Serialize> Table<R> {
    fn new(command: &str, name: &str, params: ModelParams, rows: Vec<R>) -> Self {
        Table {
            command: command.into(),
            name: name.into(),
            params,
            rows,
            verdicts: Vec::new(),
            predictions: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn render(&self, format: Format) -> Result<Vec<u8>, CliError> {
        match format {
            Format::Json => {
                let mut out = serde_json::to_vec_pretty(self).map_err(|e| CliError::Encode(e.to_string()))?;
                out.push(b'\n');
                Ok(out)
            }
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                for r in &self.rows {
                    w.serialize(r).map_err(|e| CliError::Encode(e.to_string()))?;
                }
                w.into_inner().map_err(|e| CliError::Encode(e.to_string()))
            }
        }
    }
}

fn params_of<R>(p: &ModelParams, f: impl FnOnce(f64, f64, f64, f64, f64, f64, f64) -> R) -> R {
    f(p.b, p.x0, p.delta, p.alpha, p.beta, p.x1, p.x2)
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<Table<EvalRow>, CliError> {
    let p = cfg.model;
    let q = &cfg.quadrature;
    let seq = &cfg.probe.sequence;
    let c = cfg.probe.c;
    WindowSpec::new(c)?;
    let xs = make_sequence(&p, seq)?;
    let mu = crate::measures::mu(&p, q)?;
    let profile = p.profile();
    let mut rows = Vec::new();
    for (n, x) in seq.indices().into_iter().zip(xs) {
        let lm = local_mass(&mu, &x, WindowSpec { c }, q)?;
        let h = if x.cmp_value(&ScaledSum::from_f64(p.b, 1.0)).is_ge() {
            profile_value(&profile, &x)?
        } else {
            0.0
        };
        rows.push(params_of(&p, |b, x0, delta, alpha, beta, x1, x2| EvalRow {
            n,
            m: seq.m_of(n),
            x: x.to_string(),
            ln_x: x.ln_abs(),
            h,
            log_phi: phi_log_value(&p, &x),
            c,
            log_local_mass: lm,
            local_mass: lm.exp(),
            b,
            x0,
            delta,
            alpha,
            beta,
            x1,
            x2,
        }));
    }
    Ok(Table::new("eval", &seq.label(), p, rows))
}

pub fn cmd_probe(cfg: &RunConfig, name: &str) -> Result<Table<RatioRow>, CliError> {
    let pc = &cfg.probe;
    let ctx = ProbeContext::new(cfg.model, cfg.quadrature.clone())?;
    let seq = &pc.sequence;
    let series = match name {
        "long_tail" => {
            let mode = match pc.mode.as_str() {
                "local" => LongTailMode::Local { c: pc.c },
                "density" => LongTailMode::Density,
                "tail" => LongTailMode::Tail,
                other => return Err(config_err(format!("unknown long-tail mode {other:?}"))),
            };
            long_tail_probe(&ctx, &ctx.mu()?, mode, pc.a, seq)?
        }
        "conv" => conv_ratio_probe(&ctx, &ctx.mu()?, pc.c, seq)?,
        "sd" => {
            let handle = match pc.target.as_str() {
                "mu" => DensityHandle::Phi,
                "smoothed" => DensityHandle::smoothed(Kernel::uniform(1.0), ctx.mu()?),
                other => return Err(config_err(format!("unknown sd target {other:?}"))),
            };
            sd_probe(&ctx, &handle, seq)?
        }
        "uniformity" => {
            let m = match pc.m {
                Some(m) => WindowExponent::Fixed(m),
                None => WindowExponent::Diagonal,
            };
            uniformity_probe(&ctx, &ctx.mu()?, &seq.indices(), m)?
        }
        "scaling" => scaling_probe(&ctx, &ctx.mu()?, pc.cs.as_deref().unwrap_or(&[pc.c]), seq)?,
        "smoothing" => smoothing_probe(&ctx, &Arc::new(default_kernel()), &ctx.mu()?, seq)?,
        "sandwich" => sandwich_probe(&ctx, &ctx.mu()?, pc.c, pc.c1, pc.a, seq)?,
        "tilt" => {
            let rho = build_tilt_example(pc.gamma, &ctx.quad)?;
            tilt_identity_probe(
                &ctx,
                &rho,
                pc.gamma,
                pc.cs.as_deref().unwrap_or(&[0.1, 1.0]),
                &pc.points,
            )?
        }
        other => {
            return Err(config_err(format!(
                "unknown probe {other:?}; expected one of {PROBE_NAMES:?}"
            )))
        }
    };
    let mut t = Table::new("probe", name, cfg.model, ratio_rows(&series, &cfg.model));
    let mut labels: Vec<&str> = Vec::new();
    for e in &series.entries {
        if !labels.contains(&e.label.as_str()) {
            labels.push(&e.label);
        }
    }
    for l in labels {
        t.verdicts.push(NamedVerdict {
            probe: series.probe.clone(),
            regime: series.regime.clone(),
            label: l.into(),
            verdict: classify_limit(&series.with_label(l), VERDICT_TOL),
        });
    }
    Ok(t)
}

pub fn cmd_gallery(cfg: &RunConfig, name: &str) -> Result<Table<RatioRow>, CliError> {
    if !REPORT_NAMES.contains(&name) {
        return Err(config_err(format!(
            "unknown report {name:?}; expected one of {REPORT_NAMES:?}"
        )));
    }
    let seq = &cfg.probe.sequence;
    let spec = GallerySpec {
        params: cfg.model,
        k_max: cfg.probe.k_max,
        n_start: seq.n_start,
        n_end: seq.n_end,
        quad: cfg.quadrature.clone(),
    };
    spec.validate().map_err(|e| config_err(e.to_string()))?;
    let report = run_report(&spec, name)?;
    let rows = report
        .series
        .iter()
        .flat_map(|s| ratio_rows(s, &report.params))
        .collect();
    let mut t = Table::new("gallery", name, report.params, rows);
    t.verdicts = report.verdicts;
    t.predictions = report.predictions;
    t.notes = report.notes;
    Ok(t)
}

pub fn cmd_oracle(cfg: &RunConfig, case: &str) -> Result<Table<OracleRow>, CliError> {
    let p = cfg.model;
    let q = &cfg.quadrature;
    let step = cfg.probe.step;
    let plan = ConvPlan::new(&p)?;
    let b = p.b;
    let mut out = Vec::new();
    let mut push = |x: f64, c: f64, adaptive: f64, oracle: f64| {
        out.push(params_of(&p, |b, x0, delta, alpha, beta, x1, x2| OracleRow {
            case: case.into(),
            x,
            c,
            adaptive,
            oracle,
            rel_err: ((adaptive - oracle) / oracle).abs(),
            step,
            b,
            x0,
            delta,
            alpha,
            beta,
            x1,
            x2,
        }));
    };
    match case {
        "uniform" => {
            let u = uniform(0.0, 1.0);
            let c = 0.25;
            for x in [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75] {
                let a = conv_local_mass(&u, &u, &ScaledSum::from_f64(b, x), WindowSpec { c }, q, &plan)?;
                push(
                    x,
                    c,
                    exact(a, x)?.exp(),
                    brute_force_conv_local_mass(&u, &u, x, c, step)?,
                );
            }
        }
        "phi" => {
            let ln_m = normalizer_m(&p, q)?.ln();
            let mu = crate::measures::mu(&p, q)?;
            let xs = [10.0, 100.0, 1000.0];
            let table = brute_force_conv_oracle(&mu, &mu, &xs, step)?;
            for (&x, &o) in xs.iter().zip(&table.value) {
                let a = phi_self_conv_at(&p, &ScaledSum::from_f64(b, x), q, &plan)?;
                push(x, 0.0, (exact(a, x)? - 2.0 * ln_m).exp(), o);
            }
        }
        "mu_mass" => {
            let mu = crate::measures::mu(&p, q)?;
            let c = cfg.probe.c;
            WindowSpec::new(c)?;
            for x in [1.0, 3.0, 10.0, 100.0, 1000.0, 8191.5, 10000.0] {
                let a = local_mass(&mu, &ScaledSum::from_f64(b, x), WindowSpec { c }, q)?.exp();
                let o = brute_force_local_mass(&mu, x, c, step)?;
                push(x, c, a, o);
            }
        }
        other => {
            return Err(config_err(format!(
                "unknown oracle case {other:?}; expected one of {ORACLE_CASES:?}"
            )))
        }
    }
    Ok(Table::new("oracle", case, p, out))
}

fn exact(v: LogBracket, x: f64) -> Result<f64, CliError> {
    if v.is_exact() {
        Ok(v.lo)
    } else {
        Err(Error::Contract(format!("value at x = {x} is only bracketed")).into())
    }
}

fn emit(bytes: &[u8], path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes)?,
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(bytes)?;
            so.flush()?;
        }
    }
    Ok(())
}

/// Runs a parsed command line and returns the process exit code.
///
/// Output is written once, after the computation; a run with failed quadrature
/// entries still writes its table and exits with [`EXIT_QUADRATURE`].
pub fn run(cli: Cli) -> i32 {
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("subexp: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let overrides = match &cli.command {
        Command::Eval { overrides }
        | Command::Probe { overrides, .. }
        | Command::Gallery { overrides, .. }
        | Command::Oracle { overrides, .. } => overrides,
    };
    let cfg = load_config(cli.config.as_deref(), overrides)?;
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(config_err("--threads must be >= 1"));
        }
        // A second initialization in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let format = cli.format.unwrap_or(cfg.output.format);
    let path = cli.out.clone().or_else(|| cfg.output.path.clone());
    let (bytes, failed) = match &cli.command {
        Command::Eval { .. } => (cmd_eval(&cfg)?.render(format)?, false),
        Command::Probe { name, .. } => {
            let t = cmd_probe(&cfg, name)?;
            (t.render(format)?, any_failed(&t.rows))
        }
        Command::Gallery { name, .. } => {
            let t = cmd_gallery(&cfg, name)?;
            (t.render(format)?, any_failed(&t.rows))
        }
        Command::Oracle { case, .. } => (cmd_oracle(&cfg, case)?.render(format)?, false),
    };
    emit(&bytes, path.as_deref())?;
    Ok(if failed { EXIT_QUADRATURE } else { EXIT_OK })
}

fn any_failed(rows: &[RatioRow]) -> bool {
    rows.iter().any(|r| r.status == EntryStatus::QuadratureFailed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Regime;

    #[test]
    fn overrides_patch_nested_keys() {
        let cfg = load_config(None, &["c=0.5".into(), "sequence.n_end=6".into()]).unwrap();
        assert_eq!(cfg.probe.c, 0.5);
        assert_eq!(cfg.probe.sequence.n_end, 6);
        assert_eq!(cfg.probe.sequence.regime, Regime::FixedY { y: 3.0 });
    }

    #[test]
    fn regime_override_replaces_sequence() {
        let cfg = load_config(
            None,
            &[r#"sequence={"regime":"lambda","lambda":0,"side":1,"n_start":4,"n_end":6}"#.into()],
        )
        .unwrap();
        assert_eq!(
            cfg.probe.sequence.regime,
            Regime::Lambda {
                lambda: Some(0.0),
                side: 1.0
            }
        );
    }

    #[test]
    fn unknown_keys_and_bad_constants_are_config_errors() {
        let e = load_config(None, &["bogus=1".into()]).unwrap_err();
        assert_eq!(e.exit_code(), EXIT_CONFIG);
        let e = load_config(None, &["noequals".into()]).unwrap_err();
        assert_eq!(e.exit_code(), EXIT_CONFIG);
    }

    #[test]
    fn clip_keeps_log_authoritative() {
        assert_eq!(clip_exp(1000.0), RATIO_CLIP);
        assert_eq!(clip_exp(-1000.0), 1.0 / RATIO_CLIP);
        assert!(clip_exp(f64::NAN).is_nan());
    }
}
