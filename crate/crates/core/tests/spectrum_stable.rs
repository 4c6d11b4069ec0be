use std::f64::consts::PI;

use levy_hjb::mc::Moments;
use levy_hjb::quad::QuadSpec;
use levy_hjb::spectrum::{make_heat_dirichlet_model, validate_hypothesis, BetaSchedule, SpectralModel};
use levy_hjb::stable::{
    ecf_check, kernel_scale, levy_constant, levy_khintchine_integral, sample_standard, StableLaw,
};
use levy_hjb::{Error, RngStream};

/// Composite Simpson rule, independent of the crate's adaptive quadrature.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn heat_dirichlet_schedules() {
    let m = make_heat_dirichlet_model(3, 1.5, 0.7, BetaSchedule::Cylindrical).unwrap();
    let pi2 = PI * PI;
    assert_eq!(m.gammas, vec![pi2, 4.0 * pi2, 9.0 * pi2]);
    assert_eq!(m.betas, vec![1.0; 3]);

    let m = make_heat_dirichlet_model(1, 1.5, 2.0 / 3.0, BetaSchedule::Critical).unwrap();
    assert!((m.betas[0] - 1.0).abs() < 1e-15);

    let m = make_heat_dirichlet_model(2, 1.25, 0.9, BetaSchedule::Critical).unwrap();
    let want = ((4.0 * pi2).ln() * (0.8 - 0.9)).exp();
    assert!((m.betas[1] - want).abs() < 1e-14);
}

#[test]
fn constructor_errors_name_the_bound() {
    match make_heat_dirichlet_model(2, 1.5, 0.5, BetaSchedule::Critical) {
        Err(Error::ParameterOutOfRange { name, .. }) => assert_eq!(name, "gamma_smooth"),
        other => panic!("unexpected {other:?}"),
    }
    assert!(make_heat_dirichlet_model(0, 1.5, 0.7, BetaSchedule::Critical).is_err());
    assert!(make_heat_dirichlet_model(2, 2.0, 0.7, BetaSchedule::Critical).is_err());
}

#[test]
fn cylindrical_series_partial_sums_approach_basel_limit() {
    let m = make_heat_dirichlet_model(50, 1.5, 0.7, BetaSchedule::Cylindrical).unwrap();
    let r = validate_hypothesis(&m, 100).unwrap();
    let exact: f64 = (1..=50).map(|n| 1.0 / ((n * n) as f64 * PI * PI)).sum();
    assert!((r.series_partial - exact).abs() < 1e-14);
    assert!(r.series_converges && r.pointwise_ok);
    // sum over all n of 1/(n^2 pi^2) = 1/6
    assert!(r.series_partial <= 1.0 / 6.0);
    assert!(r.series_partial + r.tail_bound >= 1.0 / 6.0 - 1e-12);
}

#[test]
fn critical_series_terms_follow_exponent_arithmetic() {
    let (alpha, gamma) = (1.5, 0.8);
    let m = make_heat_dirichlet_model(20, alpha, gamma, BetaSchedule::Critical).unwrap();
    let r = validate_hypothesis(&m, 50).unwrap();
    let exact: f64 = m.gammas.iter().map(|g| g.powf(-alpha * gamma)).sum();
    assert!((r.series_partial - exact).abs() < 1e-12 * exact);
    assert!(r.series_converges);
    // integral test: sum_{n > N} (n pi)^{-2p} <= pi^{-2p} N^{1-2p} / (2p - 1)
    let p = alpha * gamma;
    let oracle_tail: f64 = (21..200_000).map(|n| (n as f64 * PI).powf(-2.0 * p)).sum();
    assert!(r.tail_bound >= oracle_tail);
    assert!(r.tail_bound <= 3.0 * oracle_tail);
}

#[test]
fn zeroed_coefficient_breaks_pointwise_bound() {
    let mut m = make_heat_dirichlet_model(3, 1.5, 0.7, BetaSchedule::Critical).unwrap();
    m.betas[0] = 0.0;
    assert!(!validate_hypothesis(&m, 10).unwrap().pointwise_ok);
}

#[test]
fn custom_models_report_partial_sum_only() {
    let m = SpectralModel::custom(vec![1.0, 2.0], vec![1.0, 1.0], 1.5, 0.7, 1.0).unwrap();
    let r = validate_hypothesis(&m, 10).unwrap();
    assert!(r.partial_only);
    assert!(!r.series_converges);
}

#[test]
fn semigroup_factor_examples() {
    let m = make_heat_dirichlet_model(4, 1.5, 0.7, BetaSchedule::Critical).unwrap();
    assert_eq!(m.semigroup_factor(0.0).unwrap(), vec![1.0; 4]);
    let f = m.semigroup_factor(1.0 / (PI * PI)).unwrap();
    assert!((f[0] - (-1.0f64).exp()).abs() < 1e-16);
    // log of the factor is -gamma_n 1e6, far below ln(1e-300)
    let f = m.semigroup_factor(1e6).unwrap();
    for (v, g) in f.iter().zip(&m.gammas) {
        assert!(-g * 1e6 < (1e-300f64).ln());
        assert_eq!(*v, 0.0);
    }
    assert!(m.semigroup_factor(-1.0).is_err());
}

#[test]
fn levy_constant_matches_closed_form_gamma() {
    // Gamma(-3/2) = 4 sqrt(pi) / 3, cos(3 pi / 4) = -sqrt(2) / 2
    let g = 4.0 * PI.sqrt() / 3.0;
    let want = 0.5 / (-g * -(2f64.sqrt() / 2.0));
    let c = levy_constant(1.5).unwrap();
    assert!((c - want).abs() < 1e-12);
    assert!((c - 0.29921).abs() < 5e-6);
}

#[test]
fn levy_khintchine_identity_by_independent_quadrature() {
    for alpha in [1.2, 1.5, 1.8] {
        let c = levy_constant(alpha).unwrap();
        let lib = levy_khintchine_integral(alpha, c, &QuadSpec::default()).unwrap();
        assert!((lib - 1.0).abs() < 1e-6, "alpha {alpha}: {lib}");

        // 2 c int_0^inf (1 - cos x) x^(-1-alpha) dx, split at 1; near 0 use
        // x = u^(1/(2 - alpha)) to remove the singularity.
        let s = 2.0 - alpha;
        let head = simpson(
            |u| {
                if u == 0.0 {
                    return 0.5 / s;
                }
                let x = u.powf(1.0 / s);
                // 1 - cos x without cancellation
                2.0 * (0.5 * x).sin().powi(2) / (x * x) / s
            },
            0.0,
            1.0,
            20_000,
        );
        let mut body = 0.0;
        let cut = 2.0 * PI * 2000.0;
        let mut a = 1.0;
        while a < cut {
            let b = (a + 0.5).min(cut);
            body += simpson(|x| (1.0 - x.cos()) * x.powf(-1.0 - alpha), a, b, 16);
            a = b;
        }
        // tail: int_X^inf x^(-1-alpha) dx, the cosine part is O(X^(-1-alpha))
        let tail = cut.powf(-alpha) / alpha;
        let total = 2.0 * c * (head + body + tail);
        assert!((total - 1.0).abs() < 1e-5, "alpha {alpha}: {total}");
    }
}

#[test]
fn levy_constant_positive_on_grid() {
    for i in 0..50 {
        let alpha = 1.01 + 0.98 * i as f64 / 49.0;
        assert!(levy_constant(alpha).unwrap() > 0.0);
    }
}

#[test]
fn kernel_scale_is_the_l_alpha_norm_of_the_kernel() {
    let (gn, bn, alpha, t) = (1.0, 1.0, 1.5, 1.0);
    let want = ((1.0 - (-1.5f64).exp()) / 1.5).powf(2.0 / 3.0);
    let lib = kernel_scale(gn, bn, alpha, t).unwrap();
    assert!((lib - want).abs() < 1e-14);
    let norm = simpson(|s| (-(gn * (t - s))).exp().powf(alpha), 0.0, t, 2000).powf(1.0 / alpha);
    assert!((lib - norm).abs() < 1e-10);

    assert_eq!(kernel_scale(3.0, 2.0, 1.5, 0.0).unwrap(), 0.0);
    let flat = kernel_scale(1e-14, 2.0, 1.5, 0.7).unwrap();
    assert!((flat - 2.0 * 0.7f64.powf(1.0 / 1.5)).abs() < 1e-10);
    let zero_rate = kernel_scale(0.0, 2.0, 1.5, 0.7).unwrap();
    assert!((zero_rate - 2.0 * 0.7f64.powf(1.0 / 1.5)).abs() < 1e-14);
}

#[test]
fn kernel_scale_increases_to_its_stationary_limit() {
    let (gn, bn, alpha) = (PI * PI, 0.9, 1.5);
    let limit = bn * (alpha * gn).powf(-1.0 / alpha);
    let mut prev = 0.0;
    for i in 1..60 {
        let s = kernel_scale(gn, bn, alpha, 0.01 * i as f64).unwrap();
        assert!(s > prev && s < limit);
        prev = s;
    }
    assert!((kernel_scale(gn, bn, alpha, 50.0).unwrap() - limit).abs() < 1e-14);
}

#[test]
fn ecf_of_standard_draws_at_one() {
    let r = ecf_check(1.5, &[0.0, 1.0], 1_000_000, RngStream::new(11, 0)).unwrap();
    assert_eq!(r.rows[0].abs_error, 0.0);
    assert!((r.rows[1].real - (-1.0f64).exp()).abs() < 0.01);
    assert!(r.rows[1].imag.abs() < 3.0 / 1000.0);
}

#[test]
fn ecf_check_requires_enough_samples() {
    assert!(ecf_check(1.5, &[1.0], 9_999, RngStream::new(1, 0)).is_err());
}

#[test]
fn draws_are_sign_symmetric() {
    let mut g = RngStream::new(5, 2).generator();
    let n = 200_000;
    let pos = (0..n).filter(|_| sample_standard(1.3, &mut g).unwrap() > 0.0).count();
    let se = (0.25 / n as f64).sqrt();
    assert!((pos as f64 / n as f64 - 0.5).abs() < 3.0 * se);
    assert!(sample_standard(2.0, &mut g).is_err());
}

fn ecf(xs: &[f64], h: f64) -> (f64, f64) {
    let mut m = Moments::default();
    for x in xs {
        m.push((h * x).cos());
    }
    (m.mean, m.std_error())
}

#[test]
fn scaling_and_summation_stability_in_law() {
    let alpha = 1.5;
    let n = 200_000;
    let mut g = RngStream::new(21, 0).generator();
    let a = StableLaw::new(alpha, 0.6).unwrap();
    let b = StableLaw::new(alpha, 0.9).unwrap();
    let sums: Vec<f64> = (0..n).map(|_| a.sample(&mut g) + b.sample(&mut g)).collect();
    let scale = (0.6f64.powf(alpha) + 0.9f64.powf(alpha)).powf(1.0 / alpha);
    let scaled: Vec<f64> = (0..n).map(|_| 2.5 * a.sample(&mut g)).collect();
    for h in [0.5, 1.5] {
        let (m, se) = ecf(&sums, h);
        assert!((m - (-(scale * h).powf(alpha)).exp()).abs() < 4.0 * se, "sum h={h}");
        let (m, se) = ecf(&scaled, h);
        assert!((m - (-(1.5 * h).powf(alpha)).exp()).abs() < 4.0 * se, "scaled h={h}");
    }
}

#[test]
fn identical_streams_reproduce_bitwise() {
    let draw = |s: RngStream| {
        let mut g = s.generator();
        (0..1000).map(|_| sample_standard(1.7, &mut g).unwrap().to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(draw(RngStream::new(3, 4)), draw(RngStream::new(3, 4)));
    assert_ne!(draw(RngStream::new(3, 4)), draw(RngStream::new(3, 5)));
}
