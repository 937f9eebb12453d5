//! Invariants of the numerical core, as properties over sampled inputs.

use proptest::prelude::*;
use subexp::convolve::{conv_local_mass, conv_weighted_window, ConvPlan};
use subexp::gallery::{build_mu1, build_rho1_rho2, build_tilt_example, run_report, GallerySpec, IntervalFamily};
use subexp::measures::{
    local_mass, mu, point_mass, tail, tilt, uniform, Component, MixtureDistribution, TestFn, WindowSpec,
};
use subexp::model::{gamma_of, lambda_of};
use subexp::probes::{
    conv_ratio_probe, long_tail_probe, scaling_probe, truncated_tail_density, DensityHandle, LongTailMode, ProbeContext,
};
use subexp::scaled::Term;
use subexp::{
    make_sequence, phi_log_value, profile_value, ModelParams, QuadratureSpec, Regime, ScaledSum, SequenceSpec,
};

fn p() -> ModelParams {
    ModelParams::default()
}

fn q() -> QuadratureSpec {
    QuadratureSpec::default()
}

fn tight() -> QuadratureSpec {
    QuadratureSpec::with_rel_tol(1e-12)
}

fn lse(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `x^{-1-alpha} h(ln x)` evaluated directly in binary64.
fn naive_log_phi(params: &ModelParams, x: f64) -> f64 {
    let mut y = x;
    while y >= params.b {
        y /= params.b;
    }
    let d = (y - params.x0).abs();
    let h = if d < params.delta {
        -1.0 / d.ln()
    } else {
        -1.0 / params.delta.ln()
    };
    -(1.0 + params.alpha) * x.ln() + h.ln()
}

fn plain(x: f64) -> ScaledSum {
    ScaledSum::from_f64(4.0, x)
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn profile_is_periodic(y in 1.0f64..4.0, k in 0i32..=10) {
        let prof = p().profile();
        let h0 = profile_value(&prof, &plain(y)).unwrap();
        let hk = profile_value(&prof, &plain(y * 4f64.powi(k))).unwrap();
        if h0 == 0.0 {
            prop_assert_eq!(hk, 0.0);
        } else {
            prop_assert!(rel(hk, h0) < 1e-12, "{} vs {}", hk, h0);
        }
    }

    #[test]
    fn scaled_matches_naive(u in 0.0f64..1.0) {
        let x = 2f64.powf(40.0 * u);
        let a = phi_log_value(&p(), &plain(x));
        let b = naive_log_phi(&p(), x);
        prop_assert!((a - b).exp_m1().abs() < 1e-10, "x = {}: {} vs {}", x, a, b);
    }

    #[test]
    fn lambda_and_gamma_targets_recompute(l in 0.0f64..50.0, g in 0.0f64..5.0, side in prop::bool::ANY) {
        let side = if side { 1.0 } else { -1.0 };
        let seq = SequenceSpec { regime: Regime::Lambda { lambda: Some(l), side }, n_start: 4, n_end: 12, m_scale: 1 };
        for x in make_sequence(&p(), &seq).unwrap() {
            prop_assert!((lambda_of(&p(), &x) - l).abs() <= 1e-9 * l.max(1.0));
        }
        let seq = SequenceSpec { regime: Regime::Gamma { gamma: Some(g) }, n_start: 4, n_end: 12, m_scale: 1 };
        for x in make_sequence(&p(), &seq).unwrap() {
            prop_assert!((gamma_of(&p(), &x) - g).abs() <= 1e-9 * g.max(1.0));
        }
    }

    #[test]
    fn mixture_masses_add(x in -2.0f64..40.0, c in 0.05f64..3.0, w in 0.05f64..0.95) {
        let mu = mu(&p(), &q()).unwrap();
        let u = uniform(0.5, 2.0);
        let mix = MixtureDistribution::new(vec![
            (w, mu.components[0].1.clone()),
            (1.0 - w, u.components[0].1.clone()),
        ]).unwrap();
        let win = WindowSpec { c };
        let direct = local_mass(&mix, &plain(x), win, &q()).unwrap();
        let parts = lse(&[
            w.ln() + local_mass(&mu, &plain(x), win, &q()).unwrap(),
            (1.0 - w).ln() + local_mass(&u, &plain(x), win, &q()).unwrap(),
        ]);
        if parts == f64::NEG_INFINITY {
            prop_assert_eq!(direct, parts);
        } else {
            prop_assert!((direct - parts).abs() < 1e-12);
        }
    }

    #[test]
    fn windows_tile(x in 0.0f64..100.0, c in 0.1f64..2.0, pieces in 2usize..6) {
        let mu = mu(&p(), &q()).unwrap();
        let whole = local_mass(&mu, &plain(x), WindowSpec { c: c * pieces as f64 }, &q()).unwrap().exp();
        let sum: f64 = (0..pieces)
            .map(|j| local_mass(&mu, &plain(x + j as f64 * c), WindowSpec { c }, &q()).unwrap().exp())
            .sum();
        prop_assert!(rel(sum, whole) < 1e-9, "{} vs {}", sum, whole);
    }

    #[test]
    fn tail_is_non_increasing(x in 0.0f64..1e4, dx in 0.0f64..50.0) {
        let mu = mu(&p(), &q()).unwrap();
        let a = tail(&mu, &plain(x), &q()).unwrap();
        let b = tail(&mu, &plain(x + dx), &q()).unwrap();
        prop_assert!(b <= a + 1e-12);
    }

    #[test]
    fn convolution_commutes(x in -1.0f64..60.0, c in 0.1f64..2.0, pick in 0usize..4) {
        let mu = mu(&p(), &q()).unwrap();
        let others = [
            uniform(0.0, 1.5),
            point_mass(0.7),
            MixtureDistribution::single(Component::LomaxAC { alpha: 2.0 }),
            MixtureDistribution::single(Component::AtomSeries {
                locations: vec![plain(-3.0), plain(0.25), plain(5.5)],
                weights: vec![0.2, 0.5, 0.3],
            }),
        ];
        let d2 = &others[pick];
        let plan = ConvPlan::default();
        let w = WindowSpec { c };
        let ab = conv_local_mass(&mu, d2, &plain(x), w, &tight(), &plan).unwrap();
        let ba = conv_local_mass(d2, &mu, &plain(x), w, &tight(), &plan).unwrap();
        prop_assert!(ab.is_exact() && ba.is_exact());
        if ab.lo == f64::NEG_INFINITY {
            prop_assert_eq!(ba.lo, ab.lo);
        } else {
            prop_assert!((ab.lo - ba.lo).exp_m1().abs() < 1e-10, "{} vs {}", ab.lo, ba.lo);
        }
    }

    #[test]
    fn tilt_round_trips(x in 0.0f64..30.0, c in 0.1f64..2.0, gamma in 0.1f64..2.0) {
        let lomax = MixtureDistribution::single(Component::LomaxAC { alpha: 1.5 });
        let down = tilt(&lomax, -gamma, &q()).unwrap();
        let back = tilt(&down, gamma, &q()).unwrap();
        let w = WindowSpec { c };
        let a = local_mass(&lomax, &plain(x), w, &q()).unwrap();
        let b = local_mass(&back, &plain(x), w, &q()).unwrap();
        prop_assert!((a - b).exp_m1().abs() < 1e-8, "{} vs {}", a, b);
    }

    #[test]
    fn tilt_commutes_with_convolution(x in 0.0f64..20.0, c in 0.2f64..2.0, gamma in -1.5f64..-0.1) {
        let d1 = uniform(0.0, 2.0);
        let d2 = MixtureDistribution::single(Component::LomaxAC { alpha: 1.0 });
        let plan = ConvPlan::default();
        let quad = tight();
        let xs = plain(x);
        // (d1 * d2)<gamma>((x, x + c]) = E[e^{gamma S}; S in window] / (hat d1 * hat d2)
        let exp_test = TestFn::Exp { inner: Box::new(TestFn::window(c)), gamma, origin: x };
        let num = conv_weighted_window(&d1, &d2, &xs, &exp_test, &quad, &plan).unwrap();
        let lhs = num.lo - d1.log_exp_moment(gamma, &quad).unwrap() - d2.log_exp_moment(gamma, &quad).unwrap();
        let t1 = tilt(&d1, gamma, &quad).unwrap();
        let t2 = tilt(&d2, gamma, &quad).unwrap();
        let rhs = conv_local_mass(&t1, &t2, &xs, WindowSpec { c }, &quad, &plan).unwrap();
        prop_assert!((lhs - rhs.lo).exp_m1().abs() < 1e-8, "{} vs {}", lhs, rhs.lo);
    }

    #[test]
    fn renormalized_points_give_identical_masses(k in 2i64..40, y in 1.0f64..4.0, off in -3.0f64..3.0) {
        let mu = mu(&p(), &q()).unwrap();
        let a = ScaledSum::new(4.0, k, y, off).unwrap();
        // the same value written with an unnormalized mantissa and split offset
        let b = ScaledSum::from_parts(4.0, vec![Term { sign: 1, scale: k - 1, mantissa: 4.0 * y }], 0.0)
            .unwrap()
            .add_f64(off);
        prop_assert!(a.cmp_value(&b).is_eq());
        let w = WindowSpec { c: 0.5 };
        prop_assert_eq!(local_mass(&mu, &a, w, &q()).unwrap(), local_mass(&mu, &b, w, &q()).unwrap());
    }
}

#[test]
fn profile_is_continuous_away_from_cusps() {
    let prof = p().profile();
    let ln_b = 4f64.ln();
    let (x0, d) = (2.0f64, 0.25f64);
    let cusps = [(x0 - d).ln(), x0.ln(), (x0 + d).ln()];
    let step = 1e-6;
    let n = (ln_b / step) as usize;
    let mut prev = profile_value(&prof, &plain(1.0)).unwrap();
    let mut worst = 0.0f64;
    for i in 1..=n {
        let s = i as f64 * step;
        let h = profile_value(&prof, &plain(s.exp())).unwrap();
        if cusps.iter().all(|c| (s - c).abs() > 1e-4) {
            worst = worst.max((h - prev).abs());
        }
        prev = h;
    }
    assert!(worst < 1e-3, "max jump {worst}");
}

#[test]
fn convolution_mass_is_conserved() {
    let plan = ConvPlan::default();
    let u1 = uniform(0.0, 1.0);
    let u3 = uniform(-1.0, 3.0);
    let mut total = 0.0;
    for j in 0..10 {
        let x = plain(-1.5 + 0.5 * j as f64);
        total += conv_local_mass(&u1, &u3, &x, WindowSpec { c: 0.5 }, &q(), &plan)
            .unwrap()
            .lo
            .exp();
    }
    assert!((total - 1.0).abs() < 1e-10, "{total}");

    // restricted to (0, 50]: partition sum equals the mass of the union
    let lomax = MixtureDistribution::single(Component::LomaxAC { alpha: 3.0 });
    let union = conv_local_mass(&u1, &lomax, &plain(0.0), WindowSpec { c: 50.0 }, &q(), &plan)
        .unwrap()
        .lo
        .exp();
    let parts: f64 = (0..50)
        .map(|j| {
            conv_local_mass(&u1, &lomax, &plain(j as f64), WindowSpec { c: 1.0 }, &q(), &plan)
                .unwrap()
                .lo
                .exp()
        })
        .sum();
    assert!(rel(parts, union) < 1e-9);
    assert!((union - 1.0).abs() < 1e-4);
}

fn log_total_mass(d: &MixtureDistribution, symbolic: bool) -> f64 {
    let far_left = if symbolic {
        ScaledSum::from_parts(
            4.0,
            vec![Term {
                sign: -1,
                scale: 5000,
                mantissa: 1.0,
            }],
            0.0,
        )
        .unwrap()
    } else {
        plain(-1.0)
    };
    d.log_tail(&far_left, &q()).unwrap()
}

#[test]
fn gallery_measures_have_unit_mass() {
    let spec = GallerySpec::default();
    let (r1, r2) = build_rho1_rho2(&spec).unwrap();
    // atoms of mu_1 sit near -4^1024 and need a symbolic left end
    let ds = [
        (mu(&p(), &q()).unwrap(), false),
        (build_mu1(&spec).unwrap(), true),
        (r1, false),
        (r2, true),
        (build_tilt_example(1.0, &q()).unwrap(), false),
    ];
    for (d, symbolic) in &ds {
        let l = log_total_mass(d, *symbolic);
        assert!(l.abs() < 1e-9, "log mass {l}");
    }
}

#[test]
fn shifted_anchor_mantissas_take_the_right_branch() {
    let params = p();
    let prof = params.profile();
    let plateau = -1.0 / params.delta.ln();
    let mu1 = build_mu1(&GallerySpec::default()).unwrap();
    let atoms = mu1.atoms(params.b).unwrap();
    for k in 1..=4u32 {
        let d = IntervalFamily::new(&params, k).unwrap().d_lo;
        for (j, (loc, _)) in atoms.iter().enumerate().take(k as usize) {
            let h = profile_value(&prof, &d.sub(loc)).unwrap();
            if j + 1 == k as usize {
                // mantissa x0 + (x1 + x2)/2 = 3 sits on the plateau
                assert_eq!(h, plateau);
            } else {
                assert!(h < plateau && h > 0.0, "k={k} j={} h={h}", j + 1);
            }
        }
    }
}

#[test]
fn zero_shift_and_unit_window_are_exactly_one() {
    let ctx = ProbeContext::new(p(), q()).unwrap();
    let mu = ctx.mu().unwrap();
    let seq = SequenceSpec::fixed_y(2.5, 3, 6);
    let s = long_tail_probe(&ctx, &mu, LongTailMode::Local { c: 0.5 }, 0.0, &seq).unwrap();
    assert!(s.ratios().iter().all(|&r| r == 1.0));
    let s = scaling_probe(&ctx, &mu, &[1.0], &seq).unwrap();
    assert!(s.ratios().iter().all(|&r| r == 1.0));
}

#[test]
fn truncated_tail_agrees_with_sd_direction() {
    // On phi the sd ratio tends to 1, so the truncated functional must vanish as A grows at large x.
    let ctx = ProbeContext::new(p(), q()).unwrap();
    let xs = make_sequence(&p(), &SequenceSpec::fixed_y(3.0, 6, 8)).unwrap();
    for x in &xs {
        let v: Vec<f64> = [4.0, 16.0, 64.0, 256.0]
            .iter()
            .map(|&a| truncated_tail_density(&ctx, &DensityHandle::Phi, a, x).unwrap())
            .collect();
        assert!(v.windows(2).all(|w| w[1] < w[0]), "{v:?}");
        assert!(v[3] < 0.05 * v[0], "{v:?}");
    }
}

#[test]
fn probes_do_not_depend_on_thread_count() {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let ctx = ProbeContext::new(p(), q()).unwrap();
            let mu = ctx.mu().unwrap();
            conv_ratio_probe(&ctx, &mu, 0.5, &SequenceSpec::fixed_y(3.0, 2, 6)).unwrap()
        })
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one, four);
    for (a, b) in one.entries.iter().zip(&four.entries) {
        assert_eq!(a.log_num.lo.to_bits(), b.log_num.lo.to_bits());
    }
}

#[test]
fn reports_are_deterministic() {
    let spec = GallerySpec::default();
    let a = run_report(&spec, "lem32").unwrap();
    let b = run_report(&spec, "lem32").unwrap();
    assert_eq!(a, b);
}

#[test]
fn kernel_smoothing_is_a_density() {
    let mu = mu(&p(), &q()).unwrap();
    let smooth = subexp::measures::smoothed(subexp::kernel::Kernel::triangle(1.0), mu);
    assert!(log_total_mass(&smooth, false).abs() < 1e-9);
}
