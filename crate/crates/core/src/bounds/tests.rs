use proptest::prelude::*;

use super::*;
use crate::channel::{analyze, make_bsc, make_common_output_pair, BroadcastChannel, InputDistribution};
use crate::walks::{increment_law, stopping_time_cdf, Provenance, Rounding, ScaledProb, Walk};

fn bsc_analysis(k: usize) -> crate::channel::ChannelAnalysis {
    analyze(&BroadcastChannel::replicate("bsc", &make_bsc(0.11).unwrap(), k).unwrap(), 1e-10).unwrap()
}

#[test]
fn simple_eps_examples() {
    let p = ScaledProb { scaled: 1.0, log_scale: 100f64.ln() };
    assert!((achievability_eps(p, 0.0, 2.0) - 0.01).abs() < 1e-15);
    assert_eq!(achievability_eps(p, 0.2, 1.0), 0.2);
    assert_eq!(max_log_m(p, 0.01, 0.0), Some(2f64.ln()));
    assert_eq!(max_log_m(p, 0.2, 0.2), None);
}

#[test]
fn inversion_is_tight() {
    for &(g, eps, q) in &[(5.0, 1e-3, 0.0), (9.3, 0.05, 0.01), (3.1, 0.4, 0.3)] {
        let p = ScaledProb { scaled: 0.7, log_scale: g };
        let m = max_log_m(p, eps, q).unwrap().exp().round();
        assert!(achievability_eps(p, q, m) <= eps + 1e-15);
        assert!(achievability_eps(p, q, m + 1.0) > eps);
    }
}

#[test]
fn tight_mode_below_simple_at_gamma_20() {
    let an = bsc_analysis(1);
    let walk = WalkSettings::default();
    let t = evaluate_gamma(&an, 20.0, Mode::Tight, walk, None).unwrap();
    let s = evaluate_gamma(&an, 20.0, Mode::Simple, walk, None).unwrap();
    let m = 15f64.exp();
    assert!(achievability_eps(t.crossing, 0.0, m) <= achievability_eps(s.crossing, 0.0, m));
    assert!(t.crossing.ln() < s.crossing.ln());
    assert_eq!(t.expected_max, s.expected_max);
}

#[test]
fn tight_mode_refused_for_asymmetric_codeword_law() {
    let w = crate::channel::Dmc::new(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
    let an = analyze(&BroadcastChannel::new("bac", vec![w]).unwrap(), 1e-10).unwrap();
    assert!(matches!(evaluate_gamma(&an, 5.0, Mode::Tight, WalkSettings::default(), None), Err(crate::Error::Scope(_))));
    evaluate_gamma(&an, 5.0, Mode::Simple, WalkSettings::default(), None).unwrap();
    // Block time sharing of two BSCs has an output-free codeword law.
    let fig = analyze(&make_common_output_pair(0.01, 0.40, 0.15, 0.10).unwrap(), 1e-10).unwrap();
    evaluate_gamma(&fig, 5.0, Mode::Tight, WalkSettings { step_h: 1e-2, ..Default::default() }, None).unwrap();
}

#[test]
fn g_closed_forms() {
    let v: Vec<f64> = (0..50).map(|t| if t < 20 { 0.0 } else { 1.0 }).collect();
    for k in 1..4 {
        let e = 0.1;
        assert!((converse_g(e, &v, k) - (1.0 - e.powi(k as i32)) * 20.0).abs() < 1e-12);
        assert_eq!(converse_g(1.0, &v, k), 0.0);
        let table = GTable::new(v.clone(), k);
        assert!((table.eval(e) - converse_g(e, &v, k)).abs() < 1e-12);
    }
}

#[test]
fn g_at_zero_is_running_max_mean() {
    let w = make_bsc(0.11).unwrap();
    let law = increment_law(&InputDistribution::uniform(2), &w, Provenance::ConverseUniformQ { input: 0 }).unwrap();
    let walk = Walk::new(&law, 1e-4, Rounding::Ceil).unwrap();
    let s = stopping_time_cdf(&walk, 12.0, 1e-14, None).unwrap();
    let an = bsc_analysis(1);
    let v = crossing_profile(&an, 12.0, WalkSettings { tail_tol: 1e-14, ..Default::default() }, None).unwrap();
    assert!((converse_g(0.0, &v, 1) - s.truncated_mean()).abs() < 1e-9);
}

#[test]
fn converse_trivial_regions() {
    let an = bsc_analysis(2);
    let s = ConverseSettings::default();
    assert_eq!(converse_ell(&an, 30.0, 0.8, 0.25, &s, None).unwrap().ell_lower_bound, 0.0);
    let a = converse_ell(&an, 30.0, 1e-3, 0.01, &s, None).unwrap().ell_lower_bound;
    let b = converse_ell(&an, 35.0, 1e-3, 0.01, &s, None).unwrap().ell_lower_bound;
    assert!(a > 0.0 && b >= a);
    let tiny = converse_ell(&an, 30.0, 1e-3, 1e-13, &s, None).unwrap().ell_lower_bound;
    assert!(tiny < a);
}

#[test]
fn envelope_below_samples() {
    let an = bsc_analysis(3);
    let p = converse_ell(&an, 60.0, 1e-3, 0.02, &ConverseSettings::default(), None).unwrap();
    let v = crossing_profile(&an, 60.0 + 0.02f64.ln(), WalkSettings::default(), None).unwrap();
    for i in 0..=200 {
        let e = i as f64 / 200.0;
        assert!(envelope_at(&p.envelope_vertices, e) <= converse_g(e, &v, 3) + 1e-9);
    }
    assert!(p.envelope_vertices.windows(3).all(|w| {
        let s1 = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
        let s2 = (w[2].1 - w[1].1) / (w[2].0 - w[1].0);
        s1 <= s2 + 1e-9
    }));
}

#[test]
fn converse_scope_refused() {
    let an = analyze(&make_common_output_pair(0.01, 0.40, 0.15, 0.10).unwrap(), 1e-10).unwrap();
    assert!(matches!(converse_ell(&an, 10.0, 1e-3, 0.01, &ConverseSettings::default(), None), Err(crate::Error::Scope(_))));
}

#[test]
fn oracle_at_time_zero() {
    let ch = BroadcastChannel::replicate("bsc", &make_bsc(0.11).unwrap(), 3).unwrap();
    let r = converse_lt_bruteforce(&ch, 5.0, 0.1, 0, &[0.1, 0.2, 0.3]).unwrap();
    assert!((r.value - 0.1 * 0.2 * 0.3).abs() < 1e-15);
}

#[test]
fn oracle_refuses_large_instances() {
    let ch = BroadcastChannel::replicate("bsc", &make_bsc(0.11).unwrap(), 1).unwrap();
    assert!(converse_lt_bruteforce(&ch, 5.0, 0.1, 21, &[0.1]).is_err());
}

#[test]
fn small_curves_are_ordered() {
    let ells = [150.0, 300.0];
    let eps = 1e-3;
    let settings = AchievabilitySettings { gamma_points: 24, refine_iters: 8, ..Default::default() };
    let an = bsc_analysis(2);
    let simple = achievability_curve(&an, eps, &ells, Mode::Simple, &settings, None).unwrap();
    let tight = achievability_curve(&an, eps, &ells, Mode::Tight, &settings, None).unwrap();
    let conv = converse_curve(&an, eps, &ells, &ConverseSettings::default(), None).unwrap();
    assert_eq!(simple.points.len(), 2);
    for ((s, t), c) in simple.points.iter().zip(&tight.points).zip(&conv) {
        assert!(t.log_m >= s.log_m);
        assert!(t.log_m <= c.log_m, "{} vs {}", t.log_m, c.log_m);
        assert!(c.ell_lower_bound > c.ell);
        assert!(s.q < eps);
    }
    assert!(simple.points[0].log_m <= simple.points[1].log_m);
    assert!(conv[0].log_m <= conv[1].log_m);
}

#[test]
fn zero_blocklength_has_no_achievable_point() {
    let an = bsc_analysis(1);
    let settings = AchievabilitySettings { gamma_points: 8, refine_iters: 0, ..Default::default() };
    let c = achievability_curve(&an, 1e-3, &[0.0], Mode::Simple, &settings, None).unwrap();
    assert!(c.points.is_empty() && c.diagnostics.len() == 1);
}

#[test]
fn cache_round_trip_gives_identical_curves() {
    let dir = tempfile::tempdir().unwrap();
    let cache = crate::cache::Cache::open(dir.path()).unwrap();
    let an = bsc_analysis(2);
    let s = ConverseSettings::default();
    let a = converse_curve(&an, 1e-3, &[200.0], &s, Some(&cache)).unwrap();
    assert!(std::fs::read_dir(dir.path()).unwrap().count() > 0);
    let b = converse_curve(&an, 1e-3, &[200.0], &s, Some(&cache)).unwrap();
    let c = converse_curve(&an, 1e-3, &[200.0], &s, None).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn table_matches_direct_sum(raw in prop::collection::vec(0.0f64..1.0, 1..60), e in 0.0f64..1.0, k in 1usize..6) {
        let mut v = raw;
        v.sort_by(f64::total_cmp);
        let table = GTable::new(v.clone(), k);
        prop_assert!((table.eval(e) - converse_g(e, &v, k)).abs() < 1e-10);
    }

    #[test]
    fn step_hull_is_below_monotone_function(a in 0.5f64..5.0, b in 1.0f64..20.0, n in 3usize..40) {
        let f = |x: f64| b * (1.0 - x).powf(a);
        let grid: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let vals: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
        let hull = lower_hull(&step_lower_points(&grid, &vals));
        for i in 0..=500 {
            let x = i as f64 / 500.0;
            prop_assert!(envelope_at(&hull, x) <= f(x) + 1e-12);
        }
    }
}
