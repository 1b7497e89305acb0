//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use lpfrontier::cfmm::{excess_pnl_cfmm, lvr_decomposition, LevelSetCurve};
use lpfrontier::demand::{DemandCurve, IntensityParams, Side, SizeMeasure};
use lpfrontier::harness::{self, frontier_at_std, pooled_se, ExperimentSpec, FrontierPoint, Scenario, SeriesResult};
use lpfrontier::hjb::{extract_markups, reduced_solve, solve, HjbProblem, ValueGrid};
use lpfrontier::sim::rate_path;
use lpfrontier::strategies::{Market, MemoryGrids, StrategyRegistry};
use lpfrontier::units::annual_vol_to_daily;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn new(summary: impl Into<String>) -> Self {
        Outcome {
            pass: true,
            summary: summary.into(),
            details: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        if !ok {
            self.pass = false;
            if self.details.len() < 20 {
                self.details.push(detail());
            }
        }
    }
}

fn reference_params() -> IntensityParams {
    IntensityParams::new(100.0, -1.8, 1300.0).unwrap()
}

fn reference_demand() -> DemandCurve {
    let p = reference_params();
    DemandCurve::uniform(SizeMeasure::dirac(4000.0).unwrap(), p, p).unwrap()
}

fn reference_problem(gamma: f64, n_time: usize) -> HjbProblem {
    let mut p = HjbProblem::with_default_grid(0.0, annual_vol_to_daily(1.0), gamma, 0.5, reference_demand()).unwrap();
    p.n_time = n_time;
    p
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

fn criterion_1() -> Outcome {
    let p = reference_params();
    let mut o = Outcome::new("");
    let mut got = Vec::new();
    for (delta, expected) in [(0.0, 85.81), (-0.0010, 95.72), (0.0010, 62.25)] {
        let v = p.intensity(delta);
        got.push(format!("{v:.2}"));
        o.check((v - expected).abs() <= 0.5, || {
            format!("intensity at {delta} is {v}, expected {expected}")
        });
    }
    o.summary = format!("trades/day at 0, -10bps, +10bps = {} (tol 0.5)", got.join(", "));
    o
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut o = Outcome::new("");
    let mut worst_rel = 0.0f64;
    for _ in 0..10_000 {
        let s0 = log_uniform(&mut rng, 1e-2, 1e4);
        let k = log_uniform(&mut rng, 1e2, 1e12);
        let q1 = log_uniform(&mut rng, 1e-2, 1e6);
        let magnitude: f64 = rng.random_range(1e-3..3.0);
        let r = if rng.random::<bool>() { magnitude.exp() } else { (-magnitude).exp() };
        let st = s0 * r;
        let curve = LevelSetCurve::constant_product(k / q1, q1).unwrap();
        let scale = (k * s0).sqrt();
        let v = excess_pnl_cfmm(&curve, s0, st).unwrap();
        let closed = -scale * (r.sqrt() - 1.0).powi(2);
        let rel = (v - closed).abs() / closed.abs();
        worst_rel = worst_rel.max(rel);
        o.check(v < 0.0, || format!("excess {v} not negative at s0={s0} st={st} k={k}"));
        o.check(rel <= 1e-9, || format!("closed form {closed} vs {v} (rel {rel:e})"));
        let flat = excess_pnl_cfmm(&curve, s0, s0).unwrap();
        o.check(flat.abs() <= 1e-12 * scale, || format!("excess {flat} at st = s0 = {s0}"));
    }
    o.summary = format!("10000 triples, worst closed-form rel error {worst_rel:.1e} (tol 1e-9)");
    o
}

fn criterion_3() -> Outcome {
    let mut o = Outcome::new("");
    let curves = [
        ("cpmm", LevelSetCurve::constant_product(2_000_000.0, 1250.0).unwrap()),
        ("stableswap", LevelSetCurve::stableswap(100.0, 2_000_000.0, 1250.0, 1600.0).unwrap()),
    ];
    let horizons = [("half day", 0.5), ("one year", 365.0)];
    let mut worst = 0.0f64;
    for (name, curve) in &curves {
        let value0 = curve.legendre_value(1600.0).unwrap().pool_value();
        for (hname, horizon) in horizons {
            let market = Market {
                s0: 1600.0,
                mu: 0.0,
                sigma: annual_vol_to_daily(1.0),
                horizon,
            };
            let path = rate_path(&market, horizon / 1e5, 100_000, 3);
            let d = lvr_decomposition(curve, &path).unwrap();
            let exact = excess_pnl_cfmm(curve, 1600.0, *path.last().unwrap()).unwrap();
            let err = (d.total() - exact).abs() / value0;
            worst = worst.max(err);
            o.check(err < 0.005, || {
                format!("{name} {hname}: legs {} vs excess {exact} ({:.3}% of pool value)", d.total(), 100.0 * err)
            });
        }
        let steps = if *name == "cpmm" { 100_000 } else { 10_000 };
        for i in 0..100 {
            let market = Market {
                s0: 1600.0,
                mu: 0.0,
                sigma: annual_vol_to_daily(1.0),
                horizon: 365.0,
            };
            let path = rate_path(&market, 365.0 / steps as f64, steps, 1000 + i);
            let d = lvr_decomposition(curve, &path).unwrap();
            o.check(d.lvr_leg <= 0.0, || format!("{name} path {i}: lvr leg {}", d.lvr_leg));
        }
    }
    o.summary = format!(
        "1e5-step paths, worst closure error {:.2e} of pool value (tol 5e-3); LVR leg <= 0 on 2 x 100 paths",
        worst
    );
    o
}

/// Exhaustive search on `[-floor, hi]`, refined by the vertex of the
/// parabola through the best grid point and its neighbours.
fn grid_search(params: &IntensityParams, p: f64, hi: f64, step: f64) -> (f64, f64) {
    let f = |d: f64| params.intensity(d) * (d - p);
    let lo = -params.floor;
    let n = ((hi - lo) / step).round() as usize;
    let (mut best_i, mut best) = (0, f64::NEG_INFINITY);
    for i in 0..=n {
        let v = f(lo + i as f64 * step);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let d0 = lo + best_i as f64 * step;
    if best_i == 0 || best_i == n {
        return (d0, best);
    }
    let (fm, fp) = (f(d0 - step), f(d0 + step));
    let denom = fm - 2.0 * best + fp;
    if denom >= 0.0 {
        return (d0, best);
    }
    let vertex = d0 + 0.5 * step * (fm - fp) / denom;
    (vertex, f(vertex).max(best))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut o = Outcome::new("");
    let (mut worst_d, mut worst_v) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let lambda = log_uniform(&mut rng, 20.0, 500.0);
        let alpha = rng.random_range(-3.0..0.0);
        let beta = rng.random_range(500.0..3000.0);
        let p = rng.random_range(-0.005..0.01);
        let params = IntensityParams::new(lambda, alpha, beta).unwrap();
        let h = params.hamiltonian(4000.0, p).unwrap();
        let (d, v) = grid_search(&params, p, p.max(0.0) + 0.06, 1e-6);
        let dd = (h.maximizer - d).abs();
        let dv = (h.value - v).abs() / v.abs();
        worst_d = worst_d.max(dd);
        worst_v = worst_v.max(dv);
        o.check(dd <= 2e-6 && dv <= 1e-9, || {
            format!("lambda={lambda} alpha={alpha} beta={beta} p={p}: newton ({}, {}) grid ({d}, {v})", h.maximizer, h.value)
        });
    }
    o.summary = format!(
        "100 draws, worst |d delta| {worst_d:.1e} (tol 2e-6), worst rel value {worst_v:.1e} (tol 1e-9)"
    );
    o
}

fn criterion_5() -> Outcome {
    let mut o = Outcome::new("");
    let gammas = [1e-6, 1e-5, 1e-4];
    let grids: Vec<ValueGrid> = gammas.iter().map(|&g| solve(&reference_problem(g, 5000)).unwrap()).collect();
    let mid = grids[0].n_ys() / 2;
    let mut worst_sym = 0.0f64;
    for (g, grid) in gammas.iter().zip(&grids) {
        let last = grid.row(grid.n_times() - 1);
        o.check(last.iter().all(|v| *v == 0.0), || format!("gamma={g}: terminal row not zero"));
        let scale = grid.row(0).iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for n in 0..grid.n_times() {
            let row = grid.row(n);
            for i in 0..row.len() {
                let d = (row[i] - row[row.len() - 1 - i]).abs() / scale;
                worst_sym = worst_sym.max(d);
            }
        }
    }
    o.check(worst_sym <= 1e-9, || format!("symmetry defect {worst_sym:e}"));
    for w in 0..gammas.len() - 1 {
        let (a, b) = (&grids[w], &grids[w + 1]);
        let mut violations = 0usize;
        for n in 0..a.n_times() {
            for (x, y) in a.row(n).iter().zip(b.row(n)) {
                if x < y {
                    violations += 1;
                }
            }
        }
        o.check(violations == 0, || {
            format!("theta(gamma={}) < theta(gamma={}) at {violations} nodes", gammas[w], gammas[w + 1])
        });
    }
    let mut worst_conv = 0.0f64;
    for (g, grid) in gammas.iter().zip(&grids) {
        let fine = solve(&reference_problem(*g, 10_000)).unwrap();
        let (c, f) = (grid.at(0, mid), fine.at(0, mid));
        let rel = (f / c - 1.0).abs();
        worst_conv = worst_conv.max(rel);
        o.check(rel < 0.005, || format!("gamma={g}: theta(0,0) {c} vs {f} with doubled time steps"));
    }
    o.summary = format!(
        "terminal zero, symmetry defect {worst_sym:.1e} (tol 1e-9), monotone in gamma, time refinement change {:.3}% (tol 0.5%)",
        100.0 * worst_conv
    );
    o
}

fn criterion_6() -> Outcome {
    let mut o = Outcome::new("");
    let base = reference_problem(1e-5, 5000);
    let mut doubled = reference_problem(2e-5, 10_000);
    doubled.demand = base.demand.scale_lambda(2.0);
    let a = reduced_solve(&base).unwrap();
    let b = reduced_solve(&doubled).unwrap();
    let ta = extract_markups(&base, &a).unwrap();
    let tb = extract_markups(&doubled, &b).unwrap();
    let (mut worst_theta, mut worst_markup) = (0.0f64, 0.0f64);
    // Node N_b - k of the doubled problem sits at time T - k T / 10000; the
    // rescaled time T - 2 k T / 10000 is node N_a - k of the base problem.
    for k in 0..=5000 {
        let (na, nb) = (5000 - k, 10_000 - k);
        for i in 0..a.n_ys() {
            let (x, y) = (a.at(na, i), b.at(nb, i));
            let scale = x.abs().max(y.abs());
            if scale > 0.0 {
                worst_theta = worst_theta.max((x - y).abs() / scale);
            }
            if na < ta.n_times() && nb < tb.n_times() {
                for side in Side::BOTH {
                    let (da, db) = (ta.get(na, i, 0, side), tb.get(nb, i, 0, side));
                    if da.is_infinite() || db.is_infinite() {
                        o.check(da == db, || format!("refusal mismatch at k={k} i={i}"));
                    } else {
                        worst_markup = worst_markup.max((da - db).abs());
                    }
                }
            }
        }
    }
    o.check(worst_theta <= 1e-3, || format!("theta rel mismatch {worst_theta:e}"));
    o.check(worst_markup <= 1e-5, || format!("markup mismatch {:.3} bp", worst_markup * 1e4));
    o.summary = format!(
        "(2 lambda, 2 gamma) vs rescaled (lambda, gamma): theta rel {worst_theta:.1e} (tol 1e-3), markups {:.1e} bp (tol 0.1 bp)",
        worst_markup * 1e4
    );
    o
}

fn by_gamma(series: &SeriesResult) -> BTreeMap<u64, FrontierPoint> {
    series
        .points()
        .into_iter()
        .map(|p| (p.gamma.expect("risk aversion").to_bits(), p))
        .collect()
}

fn sorted_by_gamma(series: &SeriesResult) -> Vec<FrontierPoint> {
    let mut pts = series.points();
    pts.sort_by(|a, b| a.gamma.unwrap().total_cmp(&b.gamma.unwrap()));
    pts
}

fn study_spec() -> ExperimentSpec {
    let scenario = Scenario::reference();
    let mut series = Vec::new();
    let mut take = |fig: u32, names: &[&str]| {
        let spec = harness::figure(fig, &scenario).unwrap();
        for s in spec.series {
            if names.contains(&s.name.as_str()) {
                series.push(s);
            }
        }
    };
    take(1, &["frontier", "cpmm"]);
    take(2, &["lambda50"]);
    take(3, &["sigma1.2"]);
    take(5, &["lag0s", "lag10s", "lag30s", "lag60s", "lag300s", "lag1800s"]);
    take(6, &["lag10s_arb", "cpmm_arb"]);
    ExperimentSpec {
        name: "acceptance".into(),
        scenario,
        series,
    }
}

fn criterion_7(frontier: &SeriesResult, cpmm: &SeriesResult) -> Outcome {
    let mut o = Outcome::new("");
    let fpts = frontier.points();
    let mut worst_gap = f64::INFINITY;
    for c in cpmm.points() {
        let (m, se) = frontier_at_std(&fpts, c.std);
        let gap = (m - c.mean) / pooled_se(c.se_mean, se);
        worst_gap = worst_gap.min(gap);
        o.check(c.mean < 0.0, || format!("(a) {} mean {} not negative", c.label, c.mean));
        o.check(gap >= 2.0, || format!("(a) {} only {gap:.2} pooled SE below frontier", c.label));
    }
    let pts = sorted_by_gamma(frontier);
    let mut worst_step = f64::INFINITY;
    for w in pts.windows(2) {
        let (lo, hi) = (&w[0], &w[1]);
        let z = (lo.mean - hi.mean) / pooled_se(lo.se_mean, hi.se_mean);
        worst_step = worst_step.min(z);
        o.check(z >= -2.0, || {
            format!("(b) mean {} at {} below {} at {} by {:.2} SE", lo.mean, lo.label, hi.mean, hi.label, -z)
        });
    }
    let zero = &pts[0];
    let large = &pts[pts.len() - 1];
    let (rm, rs) = (large.mean.abs() / zero.mean.abs(), large.std / zero.std);
    o.check(rm < 0.05 && rs < 0.05, || {
        format!("(c) {}: |mean| {:.1}% and std {:.1}% of gamma=0", large.label, 100.0 * rm, 100.0 * rs)
    });
    o.summary = format!(
        "(a) CPMM gap >= {worst_gap:.1} pooled SE (need 2); (b) worst adjacent step {worst_step:.2} SE (need >= -2); (c) {} at {:.1}% mean, {:.1}% std (need < 5%)",
        large.label,
        100.0 * rm,
        100.0 * rs
    );
    o
}

fn criterion_8(frontier: &SeriesResult, misspecified: &[&SeriesResult]) -> Outcome {
    let mut o = Outcome::new("");
    let fpts = frontier.points();
    let mut worst = 0.0f64;
    for s in misspecified {
        for p in s.points() {
            let (m, se) = frontier_at_std(&fpts, p.std);
            let z = (p.mean - m) / pooled_se(p.se_mean, se);
            worst = worst.max(z.abs());
            o.check(z.abs() <= 2.0, || {
                format!("{}: mean {:.2} vs frontier {:.2} at std {:.2} ({z:.2} SE)", p.label, p.mean, m, p.std)
            });
        }
    }
    o.summary = format!("lambda50 and sigma1.2 points within {worst:.2} pooled SE of the frontier (tol 2)");
    o
}

fn criterion_9(lags: &[&SeriesResult], lag10: &SeriesResult, lag10_arb: &SeriesResult, cpmm_arb: &SeriesResult) -> Outcome {
    let mut o = Outcome::new("");
    let maps: Vec<BTreeMap<u64, FrontierPoint>> = lags.iter().map(|s| by_gamma(s)).collect();
    let mut worst_lag = f64::INFINITY;
    for g in maps[0].keys() {
        for w in 0..maps.len() - 1 {
            let (a, b) = (&maps[w][g], &maps[w + 1][g]);
            let z = (a.mean - b.mean) / pooled_se(a.se_mean, b.se_mean);
            worst_lag = worst_lag.min(z);
            o.check(z >= -2.0, || {
                format!(
                    "{} -> {}: {} mean rises {:.2} -> {:.2} ({:.2} SE)",
                    lags[w].name, lags[w + 1].name, a.label, a.mean, b.mean, -z
                )
            });
        }
    }
    let (plain, arb) = (by_gamma(lag10), by_gamma(lag10_arb));
    let (mut worst_mean, mut worst_std) = (f64::INFINITY, f64::INFINITY);
    for (g, a) in &plain {
        let b = &arb[g];
        let zm = (b.mean - a.mean) / pooled_se(a.se_mean, b.se_mean);
        let zs = (a.std - b.std) / pooled_se(a.se_std, b.se_std);
        worst_mean = worst_mean.min(zm);
        worst_std = worst_std.min(zs);
        o.check(zm >= -2.0, || format!("{}: arbitrage lowers mean {:.2} -> {:.2}", a.label, a.mean, b.mean));
        o.check(zs >= -2.0, || format!("{}: arbitrage raises std {:.2} -> {:.2}", a.label, a.std, b.std));
    }
    let mut band = 0.0f64;
    for p in cpmm_arb.points() {
        band = band.max(p.max_band_excess);
        o.check(p.max_band_excess <= 1e-6, || format!("{}: band excess {:e}", p.label, p.max_band_excess));
        o.check(p.arbitrage_cap_hits == 0, || format!("{}: {} arbitrage cap hits", p.label, p.arbitrage_cap_hits));
    }
    o.summary = format!(
        "lag steps >= {worst_lag:.2} SE (need >= -2); arb at 10s: mean {worst_mean:.2} SE, std {worst_std:.2} SE (need >= -2); CPMM band excess {band:.1e} (tol 1e-6)"
    );
    o
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn criterion_10() -> Outcome {
    let mut o = Outcome::new("");
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("small.toml");
    fs::write(
        &config,
        r#"
seed = 7
paths = 12

[hjb]
half_width_steps = 40
n_time = 200
gamma = 1e-5

[frontier]
gammas = [0.0, 1e-5, 1e-3]

[[series]]
name = "lagged"
lag = "10s"
arbitrage_cost = "7.5bps"

[[series.strategies]]
kind = "hjb"
gamma = 1e-5

[[series.strategies]]
kind = "cpmm"
fee = "30bps"

[[series.strategies]]
kind = "constant"
markup = "10bps"
"#,
    )
    .unwrap();
    let commands: [&[&str]; 5] = [
        &["solve"],
        &["frontier"],
        &["figure", "--figure", "6"],
        &["run"],
        &["cfmm-payoff", "--curve", "stableswap"],
    ];
    let mut files = 0;
    for (c, args) in commands.iter().enumerate() {
        let mut snaps = Vec::new();
        for run in 0..2 {
            let out = tmp.path().join(format!("out{c}_{run}"));
            let cache = tmp.path().join(format!("cache{c}_{run}"));
            let status = Command::new(env!("CARGO_BIN_EXE_lpfrontier"))
                .args(*args)
                .arg("--config")
                .arg(&config)
                .arg("--out")
                .arg(&out)
                .arg("--cache")
                .arg(&cache)
                .arg("--event-log")
                .output()
                .unwrap();
            o.check(status.status.success(), || {
                format!("{args:?} failed: {}", String::from_utf8_lossy(&status.stderr))
            });
            snaps.push(snapshot(&out));
        }
        let csvs = snaps[0].keys().filter(|k| k.ends_with(".csv")).count();
        files += snaps[0].len();
        o.check(csvs > 0, || format!("{args:?} wrote no CSV files"));
        o.check(snaps[0] == snaps[1], || format!("{args:?} outputs differ between runs"));
    }
    o.summary = format!("5 commands run twice, {files} output files byte-identical");
    o
}

fn main() {
    let started = Instant::now();
    let mut results: Vec<(&str, &str, Outcome)> = Vec::new();
    let mut run = |id: &'static str, name: &'static str, f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let mut o = f();
        o.summary = format!("{} [{:.1}s]", o.summary, t.elapsed().as_secs_f64());
        report(id, name, &o);
        results.push((id, name, o));
    };
    run("1", "demand calibration", &criterion_1);
    run("2", "impermanent loss", &criterion_2);
    run("3", "LVR closure", &criterion_3);
    run("4", "Hamiltonian oracle", &criterion_4);
    run("5", "HJB structure", &criterion_5);
    run("6", "scaling law", &criterion_6);

    let t = Instant::now();
    let spec = study_spec();
    let grids = Arc::new(MemoryGrids::default());
    let study = harness::run_study(&spec, &StrategyRegistry::with_builtins(), grids).unwrap();
    println!("study of {} series simulated in {:.1}s", study.series.len(), t.elapsed().as_secs_f64());
    let s = |name: &str| study.series(name).unwrap();
    let lags: Vec<&SeriesResult> = ["lag0s", "lag10s", "lag30s", "lag60s", "lag300s", "lag1800s"]
        .iter()
        .map(|n| s(n))
        .collect();
    run("7", "frontier shape", &|| criterion_7(s("frontier"), s("cpmm")));
    run("8", "misspecification", &|| criterion_8(s("frontier"), &[s("lambda50"), s("sigma1.2")]));
    run("9", "lag and arbitrage", &|| criterion_9(&lags, s("lag10s"), s("lag10s_arb"), s("cpmm_arb")));
    run("10", "determinism", &criterion_10);

    let failed: Vec<&str> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria passed in {:.0}s",
        results.len() - failed.len(),
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("acceptance: failing criteria {}", failed.join(", "));
        std::process::exit(1);
    }
}

fn report(id: &str, name: &str, o: &Outcome) {
    println!("criterion {id} ({name}): {} {}", if o.pass { "PASS" } else { "FAIL" }, o.summary);
    for d in &o.details {
        println!("    {d}");
    }
}
