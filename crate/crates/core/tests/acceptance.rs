//! Acceptance criteria, one test each. Every test writes a `PASS`/`FAIL` line straight to
//! stderr (bypassing the harness capture) before asserting.

use std::io::Write;

use subexp::convolve::{
    brute_force_conv_local_mass, brute_force_conv_oracle, brute_force_local_mass, conv_local_mass,
    conv_weighted_window, phi_self_conv_at, ConvPlan,
};
use subexp::gallery::{
    build_p1_p2, build_tilt_example, default_kernel, run_report, GallerySpec, IntervalFamily, Report,
};
use subexp::measures::{
    local_mass, mu, normalizer_m, tilt, uniform, Component, MixtureDistribution, TestFn, WindowSpec,
};
use subexp::probes::{
    conv_ratio_probe, long_tail_probe, sandwich_ordered, sd_probe, tilt_identity_probe, uniformity_probe, LongTailMode,
    ProbeContext, RatioSeries, WindowExponent,
};
use subexp::{phi_log_value, profile_value, ModelParams, QuadratureSpec, Regime, ScaledSum, SequenceSpec};

fn verdict(criterion: u32, name: &str, ok: bool, detail: &str) {
    let tag = if ok { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{tag} criterion {criterion} ({name}): {detail}");
    assert!(ok, "criterion {criterion} ({name}) failed: {detail}");
}

fn p() -> ModelParams {
    ModelParams::default()
}

fn q() -> QuadratureSpec {
    QuadratureSpec::default()
}

fn plain(x: f64) -> ScaledSum {
    ScaledSum::from_f64(4.0, x)
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn ctx() -> ProbeContext {
    ProbeContext::new(p(), q()).unwrap()
}

fn at(series: &RatioSeries, n: i64, label: &str) -> f64 {
    series
        .find(n, label)
        .unwrap_or_else(|| panic!("no entry n={n} {label}"))
        .ratio()
}

fn series<'a>(r: &'a Report, probe: &str, regime: &str) -> &'a RatioSeries {
    r.find(probe, regime)
        .unwrap_or_else(|| panic!("report lacks {probe}/{regime}"))
}

#[test]
fn criterion_01_oracle_equivalence() {
    let tol = 1e-5;
    let mut worst: Vec<(String, f64)> = Vec::new();
    let plan = ConvPlan::new(&p()).unwrap();

    let u = uniform(0.0, 1.0);
    let tri_cdf = |t: f64| match t {
        t if t <= 0.0 => 0.0,
        t if t <= 1.0 => t * t / 2.0,
        t if t <= 2.0 => 1.0 - (2.0 - t) * (2.0 - t) / 2.0,
        _ => 1.0,
    };
    let mut e = 0.0f64;
    for x in [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75] {
        let got = conv_local_mass(&u, &u, &plain(x), WindowSpec { c: 0.25 }, &q(), &plan)
            .unwrap()
            .lo
            .exp();
        let grid = brute_force_conv_local_mass(&u, &u, x, 0.25, 1e-4).unwrap();
        let exact = tri_cdf(x + 0.25) - tri_cdf(x);
        e = e.max(rel(got, grid)).max(rel(got, exact));
    }
    worst.push(("uniform*uniform".into(), e));

    let mu = mu(&p(), &q()).unwrap();
    let ln_m = normalizer_m(&p(), &q()).unwrap().ln();
    let xs = [10.0, 100.0, 1000.0];
    let grid = brute_force_conv_oracle(&mu, &mu, &xs, 1e-4).unwrap();
    let mut e = 0.0f64;
    for (x, want) in xs.iter().zip(&grid.value) {
        let got = (phi_self_conv_at(&p(), &plain(*x), &q(), &plan).unwrap().lo - 2.0 * ln_m).exp();
        e = e.max(rel(got, *want));
    }
    worst.push(("phi*phi at 10, 100, 1000".into(), e));

    let mut e = 0.0f64;
    for x in [1.0, 2.5, 7.9, 31.5, 127.0, 511.8, 2047.9, 8191.5, 10_000.0] {
        for c in [0.25, 1.0] {
            let got = local_mass(&mu, &plain(x), WindowSpec { c }, &q()).unwrap().exp();
            e = e.max(rel(got, brute_force_local_mass(&mu, x, c, 1e-6).unwrap()));
        }
    }
    worst.push(("mu local masses, x <= 1e4".into(), e));

    let ok = worst.iter().all(|(_, e)| *e < tol);
    let detail = worst
        .iter()
        .map(|(n, e)| format!("{n}: {e:.2e}"))
        .collect::<Vec<_>>()
        .join("; ");
    verdict(1, "oracle equivalence", ok, &detail);
}

#[test]
fn criterion_02_local_long_tail() {
    let ctx = ctx();
    let mu = ctx.mu().unwrap();
    let regimes = [
        SequenceSpec::fixed_y(3.0, 4, 8),
        SequenceSpec {
            regime: Regime::Lambda {
                lambda: Some(0.0),
                side: 1.0,
            },
            n_start: 4,
            n_end: 8,
            m_scale: 8,
        },
        SequenceSpec {
            regime: Regime::Lambda {
                lambda: None,
                side: 1.0,
            },
            n_start: 4,
            n_end: 8,
            m_scale: 8,
        },
        SequenceSpec {
            regime: Regime::Gamma { gamma: Some(1.0) },
            n_start: 4,
            n_end: 8,
            m_scale: 8,
        },
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for seq in &regimes {
        for a in [1.0, -1.0] {
            let s = long_tail_probe(&ctx, &mu, LongTailMode::Local { c: 0.5 }, a, seq).unwrap();
            let label = format!("a={a}");
            let d4 = (at(&s, 4, &label) - 1.0).abs();
            let d8 = (at(&s, 8, &label) - 1.0).abs();
            ok &= d8 < d4 && d8 < 0.05;
            detail.push(format!("{} a={a}: |r-1| {d4:.2e} -> {d8:.2e}", seq.label()));
        }
    }
    verdict(2, "mu is locally long-tailed", ok, &detail.join("; "));
}

#[test]
fn criterion_03_local_subexponential() {
    let ctx = ctx();
    let mu = ctx.mu().unwrap();
    let y3 = conv_ratio_probe(&ctx, &mu, 1.0, &SequenceSpec::fixed_y(3.0, 4, 8)).unwrap();
    let r8 = at(&y3, 8, "c=1");
    let fixed_ok = (r8 / 2.0 - 1.0).abs() < 0.05;
    let lam = SequenceSpec {
        regime: Regime::Lambda {
            lambda: Some(0.0),
            side: 1.0,
        },
        n_start: 4,
        n_end: 8,
        m_scale: 1,
    };
    let s = conv_ratio_probe(&ctx, &mu, 1.0, &lam).unwrap();
    let dist: Vec<f64> = s.ratios().iter().map(|r| (r - 2.0).abs()).collect();
    let lam_ok = s.entries.iter().all(|e| e.is_usable()) && dist.windows(2).all(|w| w[1] < w[0]);
    verdict(
        3,
        "conv ratio tends to 2",
        fixed_ok && lam_ok,
        &format!("y=3 r(8) = {r8:.6}; lambda=0 ratios {:?}", s.ratios()),
    );
}

#[test]
fn criterion_04_uniformity_fails() {
    let ctx = ctx();
    let mu = ctx.mu().unwrap();
    let ns = [6, 8];
    let diag = uniformity_probe(&ctx, &mu, &ns, WindowExponent::Diagonal).unwrap();
    let fixed = uniformity_probe(&ctx, &mu, &ns, WindowExponent::Fixed(2)).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for n in ns {
        let rd = at(&diag, n, "m=n");
        let rf = at(&fixed, n, "m=2");
        let want = n as f64 / (n as f64 + 2.0);
        ok &= (rd - 0.5).abs() < 0.1 && (rf - want).abs() < 0.1;
        detail.push(format!("n={n}: r(n,n) = {rd:.4}, r(n,2) = {rf:.4} vs {want:.4}"));
    }
    verdict(4, "window densities are not uniform", ok, &detail.join("; "));
}

#[test]
fn criterion_05_divergence() {
    let spec = GallerySpec::default();
    let report = run_report(&spec, "thm12").unwrap();
    let rk = series(&report, "r_k", "D_k");
    let r: Vec<f64> = (1..=4).map(|k| at(rk, k, "R")).collect();
    let increasing = r.windows(2).all(|w| w[1] > w[0]);
    let factors: Vec<f64> = r.windows(2).map(|w| (w[1] - 1.0) / (w[0] - 1.0)).collect();
    let in_band = factors.iter().all(|f| (1.4..=2.6).contains(f));
    let p2 = series(&report, "p2_sd_failure", "D_k");
    let p2r: Vec<f64> = (1..=4).map(|k| at(p2, k, "p2")).collect();
    let p2_up = p2r.windows(2).all(|w| w[1] > w[0]);
    let p1 = series(&report, "sd", "y=3");
    let p1_last = p1.entries.last().unwrap().ratio();
    let p1_first = p1.entries[0].ratio();
    let p1_ok = (p1_last - 1.0).abs() < (p1_first - 1.0).abs() && (p1_last - 1.0).abs() < 0.05;
    verdict(
        5,
        "R_k and the smoothed failure diverge",
        increasing && in_band && p2_up && p1_ok,
        &format!(
            "R_1..4 = {r:?}; (R_k+1 - 1)/(R_k - 1) = {factors:?} (band [1.4, 2.6]); p2 ratios {p2r:?}; p1 sd {p1_first:.5} -> {p1_last:.5}"
        ),
    );
}

#[test]
fn criterion_06_equal_tails() {
    let spec = GallerySpec::default();
    let ctx = spec.context().unwrap();
    let (p1, p2) = build_p1_p2(&spec, &default_kernel()).unwrap();
    let mut far: Vec<ScaledSum> = [1.0 + 1e-9, 1.5, 2.0, 3.3, 10.0, 77.7, 1e4]
        .iter()
        .map(|&x| plain(x))
        .collect();
    far.push(p().point(8, 3.0));
    far.push(IntervalFamily::new(&p(), 2).unwrap().d_lo.add_f64(0.5));
    let mut same = true;
    for x in &far {
        let a = p1.log_value(&ctx, x, 0.0).unwrap();
        let b = p2.log_value(&ctx, x, 0.0).unwrap();
        same &= a.to_bits() == b.to_bits();
    }
    let near: Vec<f64> = (1..10).map(|i| 0.1 * i as f64).collect();
    let differ = near.iter().any(|&x| {
        let a = p1.log_value(&ctx, &plain(x), 0.0).unwrap();
        let b = p2.log_value(&ctx, &plain(x), 0.0).unwrap();
        a != b
    });
    verdict(
        6,
        "p1 = p2 beyond 1",
        same && differ,
        &format!(
            "bitwise equal at {} points > 1: {same}; differ on [0, 1]: {differ}",
            far.len()
        ),
    );
}

#[test]
fn criterion_07_smoothing() {
    let spec = GallerySpec::default();
    let report = run_report(&spec, "prop11").unwrap();
    let s = series(&report, "smoothing", "y=3");
    let r8 = s.entries.iter().find(|e| e.n == 8).unwrap().ratio();
    verdict(
        7,
        "smoothed density tracks the window mass",
        (r8 - 1.0).abs() < 0.05,
        &format!("r(8) = {r8:.8}"),
    );
}

#[test]
fn criterion_08_sandwich() {
    let spec = GallerySpec::default();
    let report = run_report(&spec, "prop11").unwrap();
    let s = series(&report, "sandwich", "y=3,c=0.25,c1=1");
    let (c, c1) = (0.25, 1.0);
    let j1 = at(s, 8, "j1");
    let j2 = at(s, 8, "j2");
    let ordered = sandwich_ordered(s, 1e-9);
    let ok = (j1 - c1 / (c1 + c)).abs() < 0.05 && (j2 - (c1 + c) / c1).abs() < 0.05 && ordered;
    verdict(
        8,
        "sandwich limits",
        ok,
        &format!("J1(8) = {j1:.6} vs 0.8; J2(8) = {j2:.6} vs 1.25; ordered: {ordered}"),
    );
}

#[test]
fn criterion_09_tilt_identity() {
    let ctx = ctx();
    let gamma = 1.0;
    let rho = build_tilt_example(gamma, &q()).unwrap();
    let s = tilt_identity_probe(&ctx, &rho, gamma, &[0.1, 1.0], &[60.0]).unwrap();
    let r01 = at(&s, 0, "c=0.1");
    let r1 = at(&s, 0, "c=1");
    let ratio_ok = (r01 - 1.0).abs() < 0.02 && (r1 - 1.0).abs() < 0.02;

    let tight = QuadratureSpec::with_rel_tol(1e-12);
    let plan = ConvPlan::default();
    let lomax = MixtureDistribution::single(Component::LomaxAC { alpha: 1.0 });
    let u = uniform(0.0, 2.0);
    let mut round = 0.0f64;
    let mut commute = 0.0f64;
    for g in [-1.0, -0.3] {
        let back = tilt(&tilt(&lomax, g, &q()).unwrap(), -g, &q()).unwrap();
        for x in [0.0, 3.5, 20.0] {
            let w = WindowSpec { c: 0.7 };
            let a = local_mass(&lomax, &plain(x), w, &q()).unwrap();
            let b = local_mass(&back, &plain(x), w, &q()).unwrap();
            round = round.max((a - b).exp_m1().abs());
            let exp_test = TestFn::Exp {
                inner: Box::new(TestFn::window(0.7)),
                gamma: g,
                origin: x,
            };
            let lhs = conv_weighted_window(&u, &lomax, &plain(x), &exp_test, &tight, &plan)
                .unwrap()
                .lo
                - u.log_exp_moment(g, &tight).unwrap()
                - lomax.log_exp_moment(g, &tight).unwrap();
            let t1 = tilt(&u, g, &tight).unwrap();
            let t2 = tilt(&lomax, g, &tight).unwrap();
            let rhs = conv_local_mass(&t1, &t2, &plain(x), w, &tight, &plan).unwrap().lo;
            commute = commute.max((lhs - rhs).exp_m1().abs());
        }
    }
    let ok = ratio_ok && round < 1e-8 && commute < 1e-8;
    verdict(
        9,
        "tilt identity",
        ok,
        &format!(
            "x=60: c=0.1 ratio {r01:.6}, c=1 ratio {r1:.6} (tol 0.02); round trip {round:.1e}; commuting {commute:.1e}"
        ),
    );
}

#[test]
fn criterion_10_invariant_suites() {
    let params = p();
    let prof = params.profile();
    let mut checks: Vec<(&str, bool)> = Vec::new();

    let mut periodic = true;
    for i in 0..200 {
        let y = 1.0 + 3.0 * (i as f64 + 0.5) / 200.0;
        let h0 = profile_value(&prof, &plain(y)).unwrap();
        for k in 1..=10 {
            let hk = profile_value(&prof, &plain(y * 4f64.powi(k))).unwrap();
            periodic &= if h0 == 0.0 { hk == 0.0 } else { rel(hk, h0) < 1e-12 };
        }
    }
    checks.push(("periodicity", periodic));

    let mut naive_ok = true;
    for i in 0..400 {
        let x = 2f64.powf(40.0 * i as f64 / 399.0);
        let mut y = x;
        while y >= 4.0 {
            y /= 4.0;
        }
        let d = (y - 2.0).abs();
        let h = if d < 0.25 { -1.0 / d.ln() } else { -1.0 / 0.25f64.ln() };
        let naive = -2.0 * x.ln() + h.ln();
        naive_ok &= (phi_log_value(&params, &plain(x)) - naive).exp_m1().abs() < 1e-10;
    }
    checks.push(("scaled vs naive", naive_ok));

    let mu = mu(&params, &q()).unwrap();
    let mass = mu.log_tail(&plain(0.0), &q()).unwrap();
    let smooth = subexp::measures::smoothed(default_kernel(), mu.clone());
    let smass = smooth.log_tail(&plain(0.0), &q()).unwrap();
    checks.push(("mass normalization", mass.abs() < 1e-9 && smass.abs() < 1e-9));

    let plan = ConvPlan::new(&params).unwrap();
    let tight = QuadratureSpec::with_rel_tol(1e-12);
    let others = [
        uniform(0.0, 1.5),
        MixtureDistribution::single(Component::LomaxAC { alpha: 2.0 }),
    ];
    let mut commutes = true;
    for d in &others {
        for x in [0.5, 4.0, 33.3] {
            let w = WindowSpec { c: 0.6 };
            let ab = conv_local_mass(&mu, d, &plain(x), w, &tight, &plan).unwrap().lo;
            let ba = conv_local_mass(d, &mu, &plain(x), w, &tight, &plan).unwrap().lo;
            commutes &= (ab - ba).exp_m1().abs() < 1e-10;
        }
    }
    checks.push(("commutativity", commutes));

    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let ctx = ctx();
                let mu = ctx.mu().unwrap();
                conv_ratio_probe(&ctx, &mu, 1.0, &SequenceSpec::fixed_y(3.0, 3, 7)).unwrap()
            })
    };
    checks.push(("thread-count determinism", run(1) == run(5)));

    let spec = GallerySpec::default();
    let det = run_report(&spec, "lem32").unwrap() == run_report(&spec, "lem32").unwrap();
    checks.push(("report determinism", det));

    let ctx = ctx();
    let sd = sd_probe(
        &ctx,
        &subexp::probes::DensityHandle::Phi,
        &SequenceSpec::fixed_y(3.0, 4, 6),
    )
    .unwrap();
    checks.push(("sd probe entries usable", sd.entries.iter().all(|e| e.is_usable())));

    let ok = checks.iter().all(|c| c.1);
    let detail = checks
        .iter()
        .map(|(n, b)| format!("{n}: {}", if *b { "ok" } else { "broken" }))
        .collect::<Vec<_>>()
        .join("; ");
    verdict(10, "invariant suites", ok, &detail);
}
