//! Acceptance suite. Runs every criterion, prints one line each and fails
//! the target if any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use canard_core::flow::reference::rk4_transit;
use canard_core::numerics::{geometric_grid, linear_fit, median, TWO_PI};
use canard_core::retmap::*;
use canard_core::wayinout::*;
use canard_core::windows::*;
use canard_core::{transit, IntegratorConfig, Offsets, Result, TorusModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model() -> TorusModel {
    TorusModel::cosine_oval(1.5, 0.0, Offsets::Fraction(0.15)).unwrap()
}

fn model_with_delta(d: f64) -> TorusModel {
    TorusModel::cosine_oval(1.5, 0.0, Offsets::Explicit { plus: d, minus: d }).unwrap()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn integrator_oracle() -> Result<Outcome> {
    let m = model();
    let cfg = IntegratorConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut dx, mut dl) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let eps = rng.random_range(0.2..0.5);
        let x0 = rng.random_range(-PI..PI);
        let a = rng.random_range(-PI..PI);
        let b = rng.random_range(-PI..PI);
        let r = transit(m.sys(), eps, a, b, x0, &cfg)?;
        let (x, l) = rk4_transit(m.sys(), eps, a, b, x0, 10 * r.steps.max(1));
        dx = dx.max((r.x_lifted - x).abs());
        dl = dl.max((r.log_jacobian - l).abs());
    }
    let h = 1e-6;
    let mut fd_rel = 0.0f64;
    for i in 0..16 {
        let x0 = -PI + TWO_PI * i as f64 / 16.0;
        let c = transit(m.sys(), 0.3, -PI, PI, x0, &cfg)?;
        let p = transit(m.sys(), 0.3, -PI, PI, x0 + h, &cfg)?;
        let q = transit(m.sys(), 0.3, -PI, PI, x0 - h, &cfg)?;
        let fd = (p.x_lifted - q.x_lifted) / (2.0 * h);
        let d = c.log_jacobian.exp();
        fd_rel = fd_rel.max(((fd - d) / d).abs());
    }
    outcome(
        dx < 1e-8 && dl < 1e-6 && fd_rel < 1e-3,
        format!("max dx {dx:.2e}, max dlogJ {dl:.2e}, fd rel {fd_rel:.2e}"),
    )
}

fn shape() -> Result<Outcome> {
    let m = model();
    let s = MapSettings::default();
    let es = geometric_grid(0.05, 0.3, 8);
    let inv: Vec<f64> = es.iter().map(|e| 1.0 / e).collect();
    let mut lw = Vec::new();
    let mut top = Vec::new();
    let mut ring_fail = 0;
    for &eps in &es {
        let rm = ReturnMap::new(&m, eps, s)?;
        lw.push(rm.segments.width_plus.ln());
        let scan = rm.scan()?;
        top.push(scan.outside.iter().map(|r| r.log_j).fold(f64::NEG_INFINITY, f64::max));
        ring_fail += rm.ring_violations(50)?.len();
    }
    let wf = linear_fit(&inv, &lw).unwrap();
    let sf = linear_fit(&inv, &top).unwrap();
    outcome(
        wf.slope < 0.0 && wf.r_squared >= 0.98 && sf.slope < 0.0 && sf.r_squared >= 0.98 && ring_fail == 0,
        format!(
            "width slope {:.4} R2 {:.4}; outside slope {:.4} R2 {:.4}; ring violations {ring_fail}",
            wf.slope, wf.r_squared, sf.slope, sf.r_squared
        ),
    )
}

fn monotonicity() -> Result<Outcome> {
    let m = model();
    let s = MapSettings::default();
    let es = geometric_grid(0.03, 0.4, 60);
    let g: Vec<(f64, f64)> = gap_profile(&m, Corner::EMinus, &es, &s)?;
    let decreasing = g.windows(2).all(|w| w[1].1 < w[0].1);
    let slope = |e: f64| -> Result<f64> {
        let h = 1e-5 * e;
        let p = corner_gap(&m, e + h, Corner::EMinus, &s)?;
        let q = corner_gap(&m, e - h, Corner::EMinus, &s)?;
        Ok(((p - q) / (2.0 * h)).abs())
    };
    let ratio = slope(0.05)? / slope(0.3)?;
    let low: Vec<f64> = g.iter().filter(|(e, _)| *e <= 0.06).map(|(e, v)| e * v).collect();
    let (mn, mx) = low.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let var = (mx - mn) / mn;
    outcome(
        decreasing && ratio >= 3.0 && var < 0.2,
        format!(
            "strictly decreasing {decreasing}, slope ratio {ratio:.2}, eps*gap variation {:.1}%",
            100.0 * var
        ),
    )
}

fn convexity() -> Result<Outcome> {
    let m = model();
    let s = MapSettings::default();
    let mut bad = Vec::new();
    for i in 0..10 {
        let eps = 0.04 + 0.11 * i as f64 / 9.0;
        let arcs = unit_slope_set(&m, eps, &s)?;
        let lm = landmarks(&m, eps, &s)?;
        let ok = arcs.len() == 2
            && arcs.iter().all(|a| a.inside_segment)
            && arcs[0].increasing != arcs[1].increasing
            && lm.slope_one_roots == (1, 1);
        if !ok {
            bad.push(format!("{eps:.3}"));
        }
    }
    outcome(bad.is_empty(), format!("failing eps: [{}]", bad.join(", ")))
}

fn structure(windows: &[WindowRecord], between: &[CensusRecord]) -> Result<Outcome> {
    let mut ns: Vec<i64> = windows.iter().map(|w| w.n).collect();
    ns.sort();
    let consecutive = ns.len() >= 3 && ns.windows(2).all(|w| w[1] == w[0] + 1);
    // sorted by decreasing eps, so the next window has the next larger n
    let ordered = windows
        .windows(2)
        .all(|w| w[1].beta < w[0].alpha && w[1].n == w[0].n + 1);
    let between_ok = between.iter().all(|c| {
        c.hyperbolic_count() == 2
            && c.unstable().is_some_and(|u| u.canard)
            && c.stable().is_some()
            && c.rotation_number.is_some_and(|r| r.fract() == 0.0)
    });
    let mut inside = 0;
    let inside_ok = windows.iter().flat_map(|w| &w.census).all(|c| {
        inside += 1;
        c.hyperbolic_count() == 2 && c.cycles.iter().all(|k| k.canard) && c.stable().is_some() && c.unstable().is_some()
    });
    outcome(
        consecutive && ordered && between_ok && inside_ok && inside > 0,
        format!(
            "windows n = {ns:?}; disjoint and ordered {ordered}; between-window census ok {between_ok} ({}); inside census ok {inside_ok} ({inside})",
            between.len()
        ),
    )
}

fn scalings(windows: &[WindowRecord]) -> Result<Outcome> {
    let r = scaling_report(windows);
    let an: Vec<f64> = windows.iter().map(|w| w.alpha * w.n as f64).collect();
    let med = median(&an).unwrap_or(f64::NAN);
    let band = an.iter().all(|v| (v - med).abs() <= 0.5 * med);
    let Some(f) = r.log_width_fit else {
        return outcome(false, "insufficient data".into());
    };
    outcome(
        f.slope < 0.0 && f.r_squared >= 0.95 && band,
        format!(
            "ln|R_n| slope {:.4} R2 {:.4}; alpha*n {an:.4?}, median {med:.4}",
            f.slope, f.r_squared
        ),
    )
}

fn balance_and_jumps() -> Result<Outcome> {
    let m = model();
    let s = MapSettings::default();
    let bal = balance_point(&m, 1e-10)?;
    let yb = bal.y_balance;
    let mut d = Vec::new();
    for eps in [0.2, 0.14, 0.1, 0.07, 0.05] {
        let (_, j) = slope_one_jump(&m, eps, false, DEFAULT_TUBE, &s)?;
        d.push((j.y_plus - yb).abs());
    }
    let mono = d.windows(2).all(|w| w[1] < w[0]);
    let last = *d.last().unwrap();
    outcome(
        yb.abs() <= 1e-8 && mono && last < 0.1,
        format!("y_b {yb:.2e}; |y+ - y_b| {d:.4?}; decreasing {mono}; final {last:.4}"),
    )
}

fn derivative_fit() -> Result<Outcome> {
    let s = MapSettings::default();
    let es = [0.16, 0.08, 0.04, 0.02];
    let mut consts = Vec::new();
    let mut cauchy = true;
    let mut spreads = Vec::new();
    for f in [0.08, 0.1, 0.12] {
        let fit = derivative_asymptotics(&model_with_delta(f * PI), &es, &s)?;
        cauchy &= fit.is_cauchy();
        spreads.push(fit.rows.last().unwrap().spread);
        consts.push(fit.constant().unwrap_or(f64::NAN));
    }
    let grows = consts.windows(2).all(|w| w[1].abs() > w[0].abs());
    let spread_ok = spreads.iter().all(|s| *s <= 0.1);
    outcome(
        cauchy && grows && spread_ok,
        format!("Cauchy {cauchy}; spread at eps=0.02 {spreads:.3?}; constants {consts:.4?}"),
    )
}

fn slow_manifold() -> Result<Outcome> {
    let m = model();
    let fit = slow_manifold_error(
        &m,
        &[0.02, 0.01, 0.005, 0.0025],
        FoldEnd::Lower,
        &IntegratorConfig::default(),
    )?;
    let q = fit.q.unwrap_or(f64::NAN);
    outcome((0.5..=1.1).contains(&q), format!("q {q:.3}"))
}

fn report_bytes(m: &TorusModel) -> Result<Vec<u8>> {
    let s = MapSettings::default();
    let c = census(m, 0.214, &WindowSettings::default())?;
    let g = graph_sample(m, 0.15, &s)?;
    let b = balance_point(m, 1e-10)?;
    Ok(serde_json::to_vec(&(c, g, b)).unwrap())
}

fn determinism_and_symmetry() -> Result<Outcome> {
    let m = model();
    let same = report_bytes(&m)? == report_bytes(&m)?;
    let rm = ReturnMap::new(&m, 0.1, MapSettings::default())?;
    let scan = rm.scan()?;
    let us = symmetry_sample_points(&scan, 20);
    let mut worst = 0.0f64;
    for &u in &us {
        worst = worst.max(rm.symmetry_defect(u)?);
    }
    outcome(
        same && us.len() == 20 && worst < 1e-6,
        format!(
            "identical reports {same}; symmetry defect {worst:.2e} at {} points",
            us.len()
        ),
    )
}

/// `ACCEPTANCE_ONLY=7,8` restricts the run to the listed criteria.
fn selected(n: usize) -> bool {
    match std::env::var("ACCEPTANCE_ONLY") {
        Ok(v) => v.split(',').any(|s| s.trim().parse() == Ok(n)),
        Err(_) => true,
    }
}

fn run(n: usize, f: impl FnOnce() -> Result<Outcome>) -> bool {
    if !selected(n) {
        return true;
    }
    let t = Instant::now();
    let (pass, detail) = match f() {
        Ok(o) => (o.pass, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("criterion {n:>2} {tag} ({:.0} s): {detail}", t.elapsed().as_secs_f64());
    pass
}

fn main() {
    // `cargo test -- --list` and friends
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut ok = true;
    ok &= run(1, integrator_oracle);
    ok &= run(2, shape);
    ok &= run(3, monotonicity);
    ok &= run(4, convexity);

    let mut located = Vec::new();
    ok &= run(5, || {
        let m = model();
        let ws = WindowSettings::default();
        located = find_windows(&m, (5, 9), (0.04, 0.3), &ws)?;
        let between = located
            .windows(2)
            .map(|p| census(&m, 0.5 * (p[0].alpha + p[1].beta), &ws))
            .collect::<Result<Vec<_>>>()?;
        structure(&located, &between)
    });
    if selected(5) {
        ok &= run(6, || scalings(&located));
    }

    ok &= run(7, balance_and_jumps);
    ok &= run(8, derivative_fit);
    ok &= run(9, slow_manifold);
    ok &= run(10, determinism_and_symmetry);
    if !ok {
        std::process::exit(1);
    }
}
