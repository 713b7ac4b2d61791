use super::*;
use crate::channel::{analyze, make_bsc, make_common_output_pair, BroadcastChannel, Direction};

fn fig3() -> ChannelAnalysis {
    analyze(&make_common_output_pair(0.01, 0.40, 0.15, 0.10).unwrap(), 1e-10).unwrap()
}

fn bsc_pair() -> ChannelAnalysis {
    analyze(&BroadcastChannel::replicate("bsc", &make_bsc(0.11).unwrap(), 2).unwrap(), 1e-10).unwrap()
}

fn fast() -> AsymptoticSettings {
    AsymptoticSettings { grid_n: 1025, ..Default::default() }
}

#[test]
fn emax_closed_forms() {
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let (one, e1) = emax_gaussians_certified(&[0.0], &[1.0]).unwrap();
    assert!(one.abs() < 1e-12 && e1 < 1e-12);
    let (two, e2) = emax_gaussians_certified(&[0.0; 2], &[1.0; 2]).unwrap();
    assert!((two - 1.0 / sqrt_pi).abs() < 1e-12 && e2 < 1e-12);
    let three = emax_gaussians(&[0.0; 3], &[1.0; 3]).unwrap();
    assert!((three - 1.5 / sqrt_pi).abs() < 1e-12);
    // Two Gaussians: μ₁Φ(d) + μ₂Φ(−d) + θφ(d), θ² = σ₁² + σ₂², d = (μ₁ − μ₂)/θ.
    let (m1, m2, s1, s2) = (0.3f64, -0.4f64, 0.7f64, 1.6f64);
    let th = (s1 * s1 + s2 * s2).sqrt();
    let d = (m1 - m2) / th;
    let exact = m1 * crate::special::cdf(d) + m2 * crate::special::cdf(-d) + th * crate::special::pdf(d);
    assert!((emax_gaussians(&[m1, m2], &[s1, s2]).unwrap() - exact).abs() < 1e-12);
}

#[test]
fn emax_gradient_is_attainment_probability() {
    let means = [0.2, -0.5, 0.1];
    let sds = [1.0, 0.6, 1.4];
    let probs = max_attainment_probs(&means, &sds).unwrap();
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    let h = 1e-5;
    for k in 0..3 {
        let mut up = means;
        let mut dn = means;
        up[k] += h;
        dn[k] -= h;
        let fd = (emax_gaussians(&up, &sds).unwrap() - emax_gaussians(&dn, &sds).unwrap()) / (2.0 * h);
        assert!((fd - probs[k]).abs() < 1e-6, "k={k}: {fd} vs {}", probs[k]);
    }
}

#[test]
fn emax_rejects_bad_input() {
    assert!(emax_gaussians(&[], &[]).is_err());
    assert!(emax_gaussians(&[0.0], &[0.0]).is_err());
    assert!(emax_gaussians(&[0.0, 1.0], &[1.0]).is_err());
}

#[test]
fn psi_properties() {
    assert!((psi(0.0) - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-15);
    for i in 0..=600 {
        let x = -30.0 + 0.1 * i as f64;
        let d = psi_prime(x);
        assert!(d > -1.0 && d < 0.0, "ψ′({x}) = {d}");
        assert!(psi_second(x) > 0.0, "ψ″({x})");
    }
    for i in 0..=200 {
        let x = -10.0 + 0.1 * i as f64;
        assert!((psi_inv(psi(x)).unwrap() - x).abs() < 1e-10, "x = {x}");
    }
    for &x in &[0.01, 0.3, 1.0, 4.0, 12.0] {
        for &b in &[1.01, 1.5, 3.0, 10.0] {
            let lhs = b * psi_prime(psi_inv(x).unwrap());
            let rhs = psi_prime(psi_inv(b * x).unwrap());
            assert!(lhs < rhs, "x={x} β={b}");
        }
    }
}

#[test]
fn identical_pair_constants_coincide() {
    let an = bsc_pair();
    let c = second_order_constants(&an, &fast()).unwrap();
    let target = 1.0 / std::f64::consts::PI.sqrt();
    assert!((c.xi_a.value - target).abs() < 1e-9);
    assert!((c.xi_c.value - target).abs() < 1e-6);
    assert_eq!(c.equality_case, EqualityCase::SharedCaid);
    assert!(c.xi_c.profile.directions.iter().all(|d| d.components().iter().all(|x| *x == 0.0)));
}

#[test]
fn single_user_is_shared_caid() {
    let an = analyze(&BroadcastChannel::new("one", vec![make_bsc(0.2).unwrap()]).unwrap(), 1e-10).unwrap();
    assert_eq!(check_corollary4(&an, VarianceKind::Unconditional).unwrap(), EqualityCase::SharedCaid);
}

#[test]
fn fig3_constants() {
    let an = fig3();
    let c = second_order_constants(&an, &AsymptoticSettings::default()).unwrap();
    assert!((c.xi_a.value - 0.3175).abs() < 2e-3, "Ξa = {}", c.xi_a.value);
    assert!((c.xi_c.value - 0.2630).abs() < 2e-3, "Ξc = {}", c.xi_c.value);
    assert!(c.xi_a.converged());
    assert_eq!(c.equality_case, EqualityCase::None);
    let bar = c.xi_a_bar.as_ref().unwrap_or_else(|| panic!("{:?}", c.xi_a_bar_note));
    assert!((bar.value - c.xi_c.value).abs() < 2e-3);
    assert!(c.xi_c.profile.stationarity_residuals.iter().all(|r| *r < 1e-9));
}

#[test]
fn fig3_profile_is_continuous_and_monotone() {
    let an = fig3();
    let x = xi_c(&an, &fast()).unwrap();
    let p = &x.profile;
    let h = p.w_grid[1] - p.w_grid[0];
    for pair in p.directions.windows(2) {
        let gap = pair[0]
            .components()
            .iter()
            .zip(pair[1].components())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(gap < 2.0 * h, "jump {gap}");
    }
    for f in &p.cdf_values {
        assert!(f.windows(2).all(|w| w[1] >= w[0]));
        assert!(f.last().unwrap() > &(1.0 - 1e-12));
    }
}

#[test]
fn hatv_matches_scalar_block_solution() {
    let an = fig3();
    let rep = lemma1_check(&an, VarianceKind::Unconditional, 4.0, 9).unwrap();
    let v0 = rep.points[4].v;
    assert_eq!(rep.points[4].w, 0.0);
    let h = hatv(&an, 0.0, VarianceKind::Unconditional).unwrap();
    let p = an.pstar.probs();
    for (x, comp) in h.direction.components().iter().enumerate() {
        let (alpha, sign) = if x < 2 { (p[0] + p[1], 1.0) } else { (p[2] + p[3], -1.0) };
        let expected = sign * v0 * p[x] / alpha;
        assert!((comp - expected).abs() < 1e-8, "x={x}: {comp} vs {expected}");
    }
    assert!(h.residual < 1e-9);
}

#[test]
fn hatv_large_w_saturates() {
    let an = fig3();
    let h = hatv(&an, 40.0, VarianceKind::Unconditional).unwrap();
    assert!(h.cdf.iter().all(|f| *f > 1.0 - 1e-12));
}

#[test]
fn constant_profile_reduces_to_fixed_direction() {
    let an = fig3();
    let v = Direction::new(vec![0.3, 0.3, -0.3, -0.3]).unwrap();
    let prof = ProfileFunction::constant(v.clone(), 12.0, 2049).unwrap();
    let bar = xi_a_bar(&an, &prof, VarianceKind::Unconditional).unwrap();
    let rho = an.rho(VarianceKind::Unconditional);
    let means: Vec<f64> = (0..2).map(|k| -an.directional_derivative(k, &v).unwrap()).collect();
    let direct = emax_gaussians(&means, &rho).unwrap();
    assert!((bar.value - direct).abs() < 1e-8, "{} vs {direct}", bar.value);
}

#[test]
fn infeasible_profile_rejected() {
    let an = fig3();
    let grid: Vec<f64> = (0..101).map(|i| -5.0 + 0.1 * i as f64).collect();
    let dirs = grid.iter().map(|w| Direction::new(vec![*w, *w, -*w, -*w]).unwrap()).collect();
    let prof = ProfileFunction::tabulated(grid, dirs).unwrap();
    assert!(matches!(xi_a_bar(&an, &prof, VarianceKind::Unconditional), Err(crate::Error::InvalidParameter(_))));
}

#[test]
fn lemma1_on_fig3() {
    let rep = lemma1_check(&fig3(), VarianceKind::Unconditional, 12.0, 241).unwrap();
    assert!(rep.region_ok && rep.sign_ok && rep.vprime_ok, "{rep:?}");
    assert!(rep.balance > 0.0 && rep.d < 0.0);
    assert!(rep.fd_mismatch < 1e-3);
}

#[test]
fn lemma1_balanced_case_is_linear() {
    let rho = [1.0, 1.25];
    let delta = [0.2, -0.2 * 1.25];
    let d = lemma1_d(delta, rho);
    let grid: Vec<f64> = (0..41).map(|i| -4.0 + 0.2 * i as f64).collect();
    for p in lemma1_profile(delta, rho, &grid).unwrap() {
        assert!((p.v - d * p.w).abs() < 1e-9, "w={}: {} vs {}", p.w, p.v, d * p.w);
        assert!((p.slope - d).abs() < 1e-9);
    }
}

#[test]
fn lemma1_rejects_swapped_users() {
    let ch = make_common_output_pair(0.15, 0.10, 0.01, 0.40).unwrap();
    let an = analyze(&ch, 1e-10).unwrap();
    assert!(matches!(
        lemma1_check(&an, VarianceKind::Unconditional, 12.0, 11),
        Err(crate::Error::InvalidParameter(_))
    ));
}

#[test]
fn normal_approx_family() {
    let c = 0.3466;
    assert!((normal_approx_value(c, 0.43, 0.0, 1e-3, 500.0).unwrap() - c * 500.0 / 0.999).abs() < 1e-9);
    let mut prev = f64::INFINITY;
    for k in 2..=8 {
        let xi = emax_gaussians(&vec![0.0; k], &vec![1.0; k]).unwrap();
        let v = normal_approx_value(c, 0.43, xi, 1e-3, 1000.0).unwrap();
        assert!(v < prev);
        prev = v;
    }
    assert!(normal_approx_value(c, 0.43, 0.5, 1.0, 100.0).is_err());
    assert!(normal_approx_value(c, 0.43, 0.5, 0.1, 0.0).is_err());
}

#[test]
fn band_orders_with_constants() {
    let an = fig3();
    let consts = second_order_constants(&an, &fast()).unwrap();
    let (lo, hi) = normal_approx_band(&an, &consts, 1e-3, 1000.0).unwrap();
    assert!(lo <= hi);
    assert_eq!(hi, normal_approx(&an, &consts, 1e-3, 1000.0).unwrap());
}

#[test]
fn cached_profile_round_trips() {
    let an = fig3();
    let dir = tempfile::tempdir().unwrap();
    let cache = crate::cache::Cache::open(dir.path()).unwrap();
    let first = xi_c_cached(&an, &fast(), Some(&cache)).unwrap();
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    let second = xi_c_cached(&an, &fast(), Some(&cache)).unwrap();
    assert_eq!(first.value.to_bits(), second.value.to_bits());
    assert_eq!(first.profile, second.profile);
}
