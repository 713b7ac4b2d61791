use vlsf_core::bounds::WalkSettings;
use vlsf_core::channel::{analyze, make_bsc, make_identity, BroadcastChannel, ChannelAnalysis};
use vlsf_core::simulator::{run_vlsf, trace_trial, validate_against_bounds, RateEstimate, SimConfig};

fn bsc_pair() -> ChannelAnalysis {
    analyze(&BroadcastChannel::replicate("bsc", &make_bsc(0.11).unwrap(), 2).unwrap(), 1e-10).unwrap()
}

fn identity(n: usize, k: usize) -> ChannelAnalysis {
    analyze(&BroadcastChannel::replicate("id", &make_identity(n).unwrap(), k).unwrap(), 1e-10).unwrap()
}

#[test]
fn single_message_never_errs_and_matches_prediction() {
    let an = bsc_pair();
    let cfg = SimConfig::from_analysis(&an, 1, 5.0, 0.0, 20_000, 11);
    let rep = validate_against_bounds(&cfg, &an, WalkSettings::default()).unwrap();
    assert_eq!(rep.sim.any_error.count, 0);
    assert_eq!(rep.sim.truncation_count, 0);
    assert_eq!(rep.simple_bound, 0.0);
    let block = rep.checks.iter().find(|c| c.name == "blocklength vs prediction").unwrap();
    assert!(block.passed, "{block:?}");
}

#[test]
fn shared_stop_outputs_last_message() {
    let an = bsc_pair();
    let cfg = SimConfig::from_analysis(&an, 4, 8.0, 1.0, 20_000, 3);
    let res = run_vlsf(&cfg).unwrap();
    assert_eq!(res.mean_max_tau, 0.0);
    for r in &res.per_user_error {
        assert!(r.lower <= 0.75 && 0.75 <= r.upper, "{r:?}");
    }
}

#[test]
fn reruns_are_bit_identical() {
    let an = bsc_pair();
    let cfg = SimConfig::from_analysis(&an, 16, 6.0, 0.1, 5_000, 99);
    let a = run_vlsf(&cfg).unwrap();
    let b = run_vlsf(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.mean_max_tau.to_bits(), b.mean_max_tau.to_bits());
    let c = run_vlsf(&SimConfig { seed: 100, ..cfg.clone() }).unwrap();
    assert_ne!(a.mean_max_tau.to_bits(), c.mean_max_tau.to_bits());
    let fixed = SimConfig { fixed_codebook: true, ..cfg };
    assert_eq!(run_vlsf(&fixed).unwrap(), run_vlsf(&fixed).unwrap());
}

#[test]
fn decoders_never_read_past_their_stopping_time() {
    let an = bsc_pair();
    let cfg = SimConfig::from_analysis(&an, 32, 7.0, 0.0, 1, 5);
    for t in 0..200 {
        let tr = trace_trial(&cfg, t).unwrap();
        for (user, samples) in tr.samples.iter().enumerate() {
            let (tau, _) = tr.decisions[user].expect("horizon is generous");
            assert_eq!(samples.len(), tau);
            assert!(samples.iter().enumerate().all(|(i, n)| *n == i + 1));
        }
    }
}

#[test]
fn noiseless_channel_has_deterministic_blocklength() {
    let an = identity(4, 2);
    let gamma = 3.0 * 4f64.ln() - 1e-6;
    let cfg = SimConfig::from_analysis(&an, 8, gamma, 0.0, 4_000, 1);
    let res = run_vlsf(&cfg).unwrap();
    assert_eq!(res.mean_max_tau, 3.0);
    assert_eq!(res.se_max_tau, 0.0);
    let rep = validate_against_bounds(&cfg, &an, WalkSettings::default()).unwrap();
    assert!(rep.failures().is_empty(), "{:?}", rep.failures());
}

#[test]
fn ties_go_to_the_largest_index() {
    // One binary symbol; every codeword whose first symbol matches crosses at once.
    // The true message j wins only if no larger index matches: P = (2 − 2^{1−M})/M.
    let an = identity(2, 1);
    let m = 8;
    let cfg = SimConfig::from_analysis(&an, m, 0.5, 0.0, 40_000, 8);
    let res = run_vlsf(&cfg).unwrap();
    let success = (2.0 - 2f64.powi(1 - m as i32)) / m as f64;
    let r = res.per_user_error[0];
    assert!(r.lower <= 1.0 - success && 1.0 - success <= r.upper, "{r:?}");
    assert_eq!(res.mean_max_tau, 1.0);
}

#[test]
fn monotone_in_threshold() {
    let an = bsc_pair();
    let mut prev: Option<(RateEstimate, f64, f64)> = None;
    for gamma in [3.0, 5.0, 7.0, 9.0] {
        let res = run_vlsf(&SimConfig::from_analysis(&an, 64, gamma, 0.0, 20_000, 21)).unwrap();
        let err = res.any_error;
        if let Some((pe, pm, ps)) = prev {
            let sd = ((pe.rate * (1.0 - pe.rate) + err.rate * (1.0 - err.rate)) / 20_000.0).sqrt();
            assert!(err.rate <= pe.rate + 3.0 * sd, "error rose at γ = {gamma}");
            assert!(res.mean_max_tau + 3.0 * (ps * ps + res.se_max_tau.powi(2)).sqrt() >= pm);
        }
        prev = Some((err, res.mean_max_tau, res.se_max_tau));
    }
}

#[test]
fn bounds_hold_at_moderate_size() {
    let an = bsc_pair();
    let gamma = (63.0f64 * 1000.0).ln();
    let cfg = SimConfig::from_analysis(&an, 64, gamma, 0.0, 20_000, 2024);
    let rep = validate_against_bounds(&cfg, &an, WalkSettings::default()).unwrap();
    let tight = rep.tight_bound.unwrap();
    assert!(tight <= rep.simple_bound);
    // 20 000 trials cannot push the upper edge below 1e-3; the bounds must at least not be rejected.
    for r in &rep.sim.per_user_error {
        assert!(r.lower <= tight && r.rate <= rep.simple_bound, "{r:?}");
    }
    let block = rep.checks.iter().find(|c| c.name == "blocklength vs prediction").unwrap();
    assert!(block.passed, "{block:?}");
}

#[test]
fn wilson_interval_contains_estimate() {
    for (c, n) in [(0, 10), (3, 10), (10, 10), (1, 100_000)] {
        let r = RateEstimate::wilson(c, n);
        assert!(r.lower <= r.rate && r.rate <= r.upper);
        assert!(r.lower >= 0.0 && r.upper <= 1.0);
    }
}

#[test]
fn rejects_bad_configs() {
    let an = bsc_pair();
    let base = SimConfig::from_analysis(&an, 4, 3.0, 0.0, 10, 0);
    assert!(run_vlsf(&SimConfig { m: 0, ..base.clone() }).is_err());
    assert!(run_vlsf(&SimConfig { trials: 0, ..base.clone() }).is_err());
    assert!(run_vlsf(&SimConfig { q: 1.5, ..base.clone() }).is_err());
    assert!(run_vlsf(&SimConfig { horizon_cap: 0, ..base }).is_err());
}
