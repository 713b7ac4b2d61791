//! Subcommand implementations.

use std::io::Write;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use vlsf_core::asymptotics::{
    normal_approx_value, second_order_constants_cached, AsymptoticSettings, SecondOrderConstants, VarianceKind,
};
use vlsf_core::bounds::{
    achievability_curve, converse_curve, converse_lt_bruteforce, AchievabilitySettings, ConverseSettings, Mode,
    WalkSettings,
};
use vlsf_core::cache::Cache;
use vlsf_core::channel::{analyze, load_channel, make_bsc, make_common_output_pair, BroadcastChannel, ChannelAnalysis};
use vlsf_core::simulator::{default_horizon, validate_against_bounds, SimConfig};

use crate::output::{sink, write_rows, CurveRow};
use crate::{Command, ModeArg, OracleArgs, Opts, SimArgs, Usage, VarianceArg};

const SOLVER_TOL: f64 = 1e-10;
const FIG_DELTA: f64 = 0.11;
const FIG_EPS: f64 = 1e-3;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

pub fn run(cmd: Command, o: &Opts) -> Result<()> {
    if !(o.eps > 0.0 && o.eps < 1.0) {
        return Err(usage(format!("--eps must lie in (0, 1), got {}", o.eps)));
    }
    match cmd {
        Command::Analyze => cmd_analyze(o),
        Command::Achieve => cmd_achieve(o),
        Command::Converse => cmd_converse(o),
        Command::Approx => cmd_approx(o),
        Command::Constants => cmd_constants(o),
        Command::Simulate(a) => cmd_simulate(o, &a),
        Command::Figure2 => cmd_figure2(o),
        Command::Oracle(a) => cmd_oracle(o, &a),
    }
}

fn builtin(spec: &str) -> Option<Result<BroadcastChannel>> {
    let parse = |s: &str| -> Result<Vec<f64>> {
        s.split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|e| usage(format!("bad number '{x}': {e}"))))
            .collect()
    };
    if let Some(rest) = spec.strip_prefix("bsc:") {
        return Some(parse(rest).and_then(|v| match v.as_slice() {
            [d] => Ok(BroadcastChannel::new(format!("bsc{d}"), vec![make_bsc(*d).map_err(|e| usage(e.to_string()))?])?),
            _ => Err(usage("bsc:<δ> takes one crossover probability")),
        }));
    }
    if let Some(rest) = spec.strip_prefix("pair:") {
        return Some(parse(rest).and_then(|v| match v.as_slice() {
            [a, b, c, d] => make_common_output_pair(*a, *b, *c, *d).map_err(|e| usage(e.to_string())),
            _ => Err(usage("pair:<δ11>,<δ12>,<δ21>,<δ22> takes four crossover probabilities")),
        }));
    }
    None
}

fn channel(o: &Opts) -> Result<BroadcastChannel> {
    let spec = o.channel.as_deref().ok_or_else(|| usage("--channel is required"))?;
    let ch = match builtin(spec) {
        Some(r) => r?,
        None => load_channel(spec).map_err(|e| usage(format!("cannot load channel '{spec}': {e}")))?,
    };
    match o.replicate_k {
        None => Ok(ch),
        Some(0) => Err(usage("--replicate-K must be at least 1")),
        Some(k) => {
            if !ch.identical_users() {
                return Err(usage("--replicate-K needs a channel whose users are identical"));
            }
            Ok(BroadcastChannel::replicate(ch.name.clone(), ch.user(0), k)?)
        }
    }
}

fn analysis(ch: &BroadcastChannel) -> Result<ChannelAnalysis> {
    Ok(analyze(ch, SOLVER_TOL)?)
}

fn cache(o: &Opts) -> Result<Option<Cache>> {
    if o.no_cache {
        return Ok(None);
    }
    let dir = o.cache_dir.clone().or_else(|| std::env::var_os("VLSF_CACHE_DIR").map(PathBuf::from));
    match dir {
        Some(d) => Ok(Some(Cache::open(&d).with_context(|| format!("cannot open cache at {}", d.display()))?)),
        None => Ok(None),
    }
}

fn ell_grid(o: &Opts, default: (f64, f64, f64)) -> Result<Vec<f64>> {
    let grid = if !o.ell.is_empty() {
        o.ell.clone()
    } else {
        let lo = o.ell_min.unwrap_or(default.0);
        let hi = o.ell_max.unwrap_or(default.1);
        let step = o.ell_step.unwrap_or(default.2);
        if !(step > 0.0) || !(hi >= lo) {
            return Err(usage(format!("bad blocklength grid {lo}..{hi} step {step}")));
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| lo + step * i as f64).collect()
    };
    if grid.is_empty() || grid.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
        return Err(usage("blocklengths must be positive; the feasible grid is empty"));
    }
    Ok(grid)
}

fn walk_settings(o: &Opts) -> WalkSettings {
    let d = WalkSettings::default();
    WalkSettings { step_h: o.lattice_h.unwrap_or(d.step_h), tail_tol: o.tail_tol.unwrap_or(d.tail_tol) }
}

fn achievability_settings(o: &Opts) -> AchievabilitySettings {
    let d = AchievabilitySettings::default();
    AchievabilitySettings { walk: walk_settings(o), gamma_points: o.gamma_points.unwrap_or(d.gamma_points), ..d }
}

fn converse_settings(o: &Opts) -> ConverseSettings {
    let d = ConverseSettings::default();
    ConverseSettings { walk: walk_settings(o), eta_points: o.eta_points.unwrap_or(d.eta_points), ..d }
}

fn variance(v: VarianceArg) -> VarianceKind {
    match v {
        VarianceArg::Conditional => VarianceKind::Conditional,
        VarianceArg::Unconditional => VarianceKind::Unconditional,
    }
}

fn variance_name(v: VarianceKind) -> &'static str {
    match v {
        VarianceKind::Conditional => "conditional",
        VarianceKind::Unconditional => "unconditional",
    }
}

fn asymptotic_settings(o: &Opts, kind: VarianceKind) -> AsymptoticSettings {
    let d = AsymptoticSettings::default();
    AsymptoticSettings {
        variance: kind,
        w_max: o.w_max.unwrap_or(d.w_max),
        grid_n: o.grid_n.unwrap_or(d.grid_n),
        ..d
    }
}

fn mode(m: ModeArg) -> Mode {
    match m {
        ModeArg::Simple => Mode::Simple,
        ModeArg::Tight => Mode::Tight,
    }
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.10}")).collect::<Vec<_>>().join(",")
}

fn cmd_analyze(o: &Opts) -> Result<()> {
    let an = analysis(&channel(o)?)?;
    let mut out = sink(o.out.as_deref())?;
    writeln!(out, "channel={}", an.channel.name)?;
    writeln!(out, "users={}", an.num_users())?;
    writeln!(out, "capacity_nats={:.10}", an.capacity)?;
    if o.bits {
        writeln!(out, "capacity_bits={:.10}", an.capacity / std::f64::consts::LN_2)?;
    }
    writeln!(out, "pstar={}", fmt_vec(an.pstar.probs()))?;
    writeln!(out, "V_geomean={:.10}", an.v_geomean)?;
    for (k, u) in an.users.iter().enumerate() {
        let p = format!("user{}", k + 1);
        writeln!(out, "{p}.capacity={:.10}", u.capacity)?;
        writeln!(out, "{p}.info_at_pstar={:.10}", u.info_at_pstar)?;
        writeln!(out, "{p}.dispersion={:.10}", u.dispersion)?;
        writeln!(out, "{p}.uncond_variance={:.10}", u.uncond_variance)?;
        writeln!(out, "{p}.divergences={}", fmt_vec(&u.divergences))?;
    }
    let f = an.flags;
    writeln!(out, "flags.all_users_active={}", f.all_users_active)?;
    writeln!(out, "flags.positive_dispersion={}", f.positive_dispersion)?;
    writeln!(out, "flags.full_support={}", f.full_support)?;
    writeln!(out, "flags.converse_condition={}", f.converse_condition)?;
    writeln!(out, "flags.all={}", f.all())?;
    writeln!(out, "walks_independent={}", an.walks_independent())?;
    for w in &an.warnings {
        writeln!(out, "warning={w}")?;
    }
    Ok(())
}

fn achievability_rows(
    an: &ChannelAnalysis,
    eps: f64,
    ells: &[f64],
    m: Mode,
    s: &AchievabilitySettings,
    cache: Option<&Cache>,
) -> Result<Vec<CurveRow>> {
    let curve = achievability_curve(an, eps, ells, m, s, cache)?;
    for d in &curve.diagnostics {
        eprintln!("note: {d}");
    }
    let kind = match m {
        Mode::Simple => "achievability_simple",
        Mode::Tight => "achievability",
    };
    Ok(curve
        .points
        .iter()
        .map(|p| CurveRow { gamma: Some(p.gamma), q: Some(p.q), ..CurveRow::new(kind, an.num_users(), p.ell, eps, p.log_m) })
        .collect())
}

fn converse_rows(
    an: &ChannelAnalysis,
    eps: f64,
    ells: &[f64],
    s: &ConverseSettings,
    cache: Option<&Cache>,
) -> Result<Vec<CurveRow>> {
    Ok(converse_curve(an, eps, ells, s, cache)?
        .iter()
        .map(|p| CurveRow { eta: Some(p.eta), ..CurveRow::new("converse", an.num_users(), p.ell, eps, p.log_m) })
        .collect())
}

fn approx_rows(an: &ChannelAnalysis, c: &SecondOrderConstants, eps: f64, ells: &[f64]) -> Result<Vec<CurveRow>> {
    let k = an.num_users();
    let mut rows = Vec::with_capacity(2 * ells.len());
    for (kind, xi) in [("approx_c", c.xi_c.value), ("approx_a", c.xi_a.value)] {
        for &ell in ells {
            let v = normal_approx_value(an.capacity, c.v, xi, eps, ell)?;
            rows.push(CurveRow::new(kind, k, ell, eps, v));
        }
    }
    Ok(rows)
}

const DEFAULT_GRID: (f64, f64, f64) = (100.0, 2000.0, 50.0);

fn cmd_achieve(o: &Opts) -> Result<()> {
    let ells = ell_grid(o, DEFAULT_GRID)?;
    let an = analysis(&channel(o)?)?;
    let cache = cache(o)?;
    let rows = achievability_rows(&an, o.eps, &ells, mode(o.mode), &achievability_settings(o), cache.as_ref())?;
    write_rows(sink(o.out.as_deref())?, &rows)
}

fn cmd_converse(o: &Opts) -> Result<()> {
    let ells = ell_grid(o, DEFAULT_GRID)?;
    let an = analysis(&channel(o)?)?;
    let cache = cache(o)?;
    let rows = converse_rows(&an, o.eps, &ells, &converse_settings(o), cache.as_ref())?;
    write_rows(sink(o.out.as_deref())?, &rows)
}

fn cmd_approx(o: &Opts) -> Result<()> {
    let ells = ell_grid(o, DEFAULT_GRID)?;
    let an = analysis(&channel(o)?)?;
    let cache = cache(o)?;
    let c = second_order_constants_cached(&an, &asymptotic_settings(o, variance(o.variance)), cache.as_ref())?;
    write_rows(sink(o.out.as_deref())?, &approx_rows(&an, &c, o.eps, &ells)?)
}

fn cmd_constants(o: &Opts) -> Result<()> {
    let an = analysis(&channel(o)?)?;
    let cache = cache(o)?;
    let selected = variance(o.variance);
    let mut out = sink(o.out.as_deref())?;
    writeln!(out, "capacity={:.10}", an.capacity)?;
    if o.bits {
        writeln!(out, "capacity_bits={:.10}", an.capacity / std::f64::consts::LN_2)?;
    }
    for kind in [selected, other(selected)] {
        let c = second_order_constants_cached(&an, &asymptotic_settings(o, kind), cache.as_ref())?;
        if kind == selected {
            writeln!(out, "variance={}", variance_name(kind))?;
            writeln!(out, "xi_a={:.6}", c.xi_a.value)?;
            writeln!(out, "xi_c={:.6}", c.xi_c.value)?;
        }
        let p = variance_name(kind);
        writeln!(out, "{p}.V={:.10}", c.v)?;
        writeln!(out, "{p}.rho={}", fmt_vec(&c.rho))?;
        writeln!(out, "{p}.xi_a={:.10}", c.xi_a.value)?;
        writeln!(out, "{p}.xi_a_converged={}", c.xi_a.converged())?;
        writeln!(out, "{p}.xi_a_direction={}", fmt_vec(c.xi_a.direction.components()))?;
        writeln!(out, "{p}.xi_c={:.10}", c.xi_c.value)?;
        writeln!(out, "{p}.xi_c_quadrature_error={:.3e}", c.xi_c.quadrature_error)?;
        writeln!(out, "{p}.xi_c_tail_bound={:.3e}", c.xi_c.tail_bound)?;
        match (&c.xi_a_bar, &c.xi_a_bar_note) {
            (Some(b), _) => writeln!(out, "{p}.xi_a_bar={:.10}", b.value)?,
            (None, note) => writeln!(out, "{p}.xi_a_bar=unavailable ({})", note.as_deref().unwrap_or("infeasible"))?,
        }
        writeln!(out, "{p}.emax_gauss={:.10}", c.emax_gauss)?;
        writeln!(out, "{p}.equality_case={:?}", c.equality_case)?;
    }
    Ok(())
}

fn other(k: VarianceKind) -> VarianceKind {
    match k {
        VarianceKind::Conditional => VarianceKind::Unconditional,
        VarianceKind::Unconditional => VarianceKind::Conditional,
    }
}

fn cmd_simulate(o: &Opts, a: &SimArgs) -> Result<()> {
    if a.m == 0 || o.trials == 0 {
        return Err(usage("--m and --trials must be at least 1"));
    }
    if !(0.0..=1.0).contains(&a.q) {
        return Err(usage("--q must lie in [0, 1]"));
    }
    let an = analysis(&channel(o)?)?;
    let k = an.num_users();
    let mut header = vec!["gamma".to_string(), "M".into(), "q".into(), "trials".into(), "seed".into()];
    for u in 1..=k {
        header.push(format!("error_user{u}"));
        header.push(format!("error_user{u}_upper99"));
    }
    header.extend(
        ["any_error", "mean_max_tau", "se_max_tau", "truncations", "simple_bound", "tight_bound", "predicted_blocklength"]
            .map(String::from),
    );
    let mut csv_rows = Vec::new();
    for &gamma in &a.gamma {
        let cfg = SimConfig {
            horizon_cap: a.horizon_cap.unwrap_or_else(|| default_horizon(gamma, an.capacity)),
            fixed_codebook: a.fixed_codebook,
            ..SimConfig::from_analysis(&an, a.m, gamma, a.q, o.trials, o.seed)
        };
        let rep = validate_against_bounds(&cfg, &an, walk_settings(o))?;
        let s = &rep.sim;
        println!("gamma={gamma:.6} M={} q={} trials={} seed={}", a.m, a.q, s.trials, s.seed);
        for (u, r) in s.per_user_error.iter().enumerate() {
            println!("  user{}: error {:.3e} (99% CI {:.3e}..{:.3e})", u + 1, r.rate, r.lower, r.upper);
        }
        println!("  E[max tau*] = {:.4} ± {:.4}; predicted {:.4}", s.mean_max_tau, s.se_max_tau, rep.predicted_blocklength);
        println!("  truncated trials: {}", s.truncation_count);
        match rep.tight_bound {
            Some(t) => println!("  bounds: simple {:.3e}, tight {t:.3e}", rep.simple_bound),
            None => println!(
                "  bounds: simple {:.3e}, tight unavailable ({})",
                rep.simple_bound,
                rep.tight_note.as_deref().unwrap_or("")
            ),
        }
        for c in &rep.checks {
            println!("  [{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
        }
        let mut row = vec![gamma.to_string(), a.m.to_string(), a.q.to_string(), s.trials.to_string(), s.seed.to_string()];
        for r in &s.per_user_error {
            row.push(r.rate.to_string());
            row.push(r.upper.to_string());
        }
        row.push(s.any_error.rate.to_string());
        row.push(s.mean_max_tau.to_string());
        row.push(s.se_max_tau.to_string());
        row.push(s.truncation_count.to_string());
        row.push(rep.simple_bound.to_string());
        row.push(rep.tight_bound.map(|t| t.to_string()).unwrap_or_default());
        row.push(rep.predicted_blocklength.to_string());
        csv_rows.push(row);
    }
    if let Some(path) = &o.out {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
        w.write_record(&header)?;
        for r in csv_rows {
            w.write_record(&r)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn cmd_figure2(o: &Opts) -> Result<()> {
    if o.channel.is_some() || o.replicate_k.is_some() {
        return Err(usage("figure2 always uses BSC(0.11); drop --channel and --replicate-K"));
    }
    let ells = ell_grid(o, DEFAULT_GRID)?;
    let dir = o.out.clone().unwrap_or_else(|| PathBuf::from("figure2"));
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let cache = cache(o)?;
    let cache = cache.as_ref();
    let bsc = make_bsc(FIG_DELTA)?;
    let family = |k: usize| -> Result<ChannelAnalysis> { analysis(&BroadcastChannel::replicate(format!("bsc{FIG_DELTA}"), &bsc, k)?) };
    let ach_settings = achievability_settings(o);
    let conv_settings = converse_settings(o);
    let m = mode(o.mode);

    let mut ach = Vec::new();
    let mut conv = Vec::new();
    for k in 2..=4 {
        let an = family(k)?;
        ach.extend(achievability_rows(&an, FIG_EPS, &ells, m, &ach_settings, cache)?);
        conv.extend(converse_rows(&an, FIG_EPS, &ells, &conv_settings, cache)?);
    }
    let mut approx = Vec::new();
    for k in 2..=8 {
        let an = family(k)?;
        let c = second_order_constants_cached(&an, &asymptotic_settings(o, variance(o.variance)), cache)?;
        approx.extend(approx_rows(&an, &c, FIG_EPS, &ells)?.into_iter().filter(|r| r.kind == "approx_c").map(|r| CurveRow { kind: "approx", ..r }));
    }
    let single = family(1)?;
    let mut reference = achievability_rows(&single, FIG_EPS, &ells, m, &ach_settings, cache)?;
    reference.extend(converse_rows(&single, FIG_EPS, &ells, &conv_settings, cache)?);
    for &ell in &ells {
        let v = normal_approx_value(single.capacity, single.v_geomean, 0.0, FIG_EPS, ell)?;
        reference.push(CurveRow::new("approx", 1, ell, FIG_EPS, v));
    }

    let files: [(&str, &[CurveRow]); 4] = [
        ("fig2a_achievability.csv", &ach),
        ("fig2b_converse.csv", &conv),
        ("fig2c_approximation.csv", &approx),
        ("fig2d_single_user.csv", &reference),
    ];
    for (name, rows) in files {
        let path = dir.join(name);
        write_rows(sink(Some(&path))?, rows)?;
        println!("wrote {}", path.display());
    }
    check_ordering(&ach, &conv)
}

/// Every achievability point must lie below the converse at the same K and ℓ.
fn check_ordering(ach: &[CurveRow], conv: &[CurveRow]) -> Result<()> {
    for a in ach {
        if let Some(c) = conv.iter().find(|c| c.k == a.k && c.ell == a.ell) {
            if a.log_m_nats > c.log_m_nats {
                bail!(
                    "achievability {:.4} exceeds converse {:.4} at K = {}, ℓ = {}",
                    a.log_m_nats,
                    c.log_m_nats,
                    a.k,
                    a.ell
                );
            }
        }
    }
    Ok(())
}

fn cmd_oracle(o: &Opts, a: &OracleArgs) -> Result<()> {
    if !(a.eta > 0.0) {
        return Err(usage("--eta must be positive"));
    }
    let ch = channel(o)?;
    let eps = vec![o.eps; ch.num_users()];
    let r = converse_lt_bruteforce(&ch, a.log_m, a.eta, a.t, &eps).map_err(|e| match e {
        vlsf_core::Error::InvalidParameter(m) => usage(m),
        other => anyhow!(other),
    })?;
    let mut out = sink(o.out.as_deref())?;
    writeln!(out, "value={:.15}", r.value)?;
    writeln!(out, "argmax={}", r.argmax.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","))?;
    writeln!(out, "crossing={}", fmt_vec(&r.crossing))?;
    Ok(())
}
