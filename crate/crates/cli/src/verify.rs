//! Property suite behind `canard verify`.

use std::f64::consts::PI;

use serde::Serialize;

use canard_core::numerics::{geometric_grid, linear_fit};
use canard_core::retmap::{landmarks, unit_slope_set, Corner, MapSettings, ReturnMap};
use canard_core::wayinout::{balance_point, derivative_asymptotics};
use canard_core::windows::gap_profile;
use canard_core::{Offsets, Result, RunConfig, TorusModel};

pub const PROPERTIES: [&str; 5] = ["shape", "monotonicity", "convexity", "balance", "derivative"];

#[derive(Debug, Clone, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn result(name: &str, passed: bool, detail: String) -> Result<PropertyResult> {
    Ok(PropertyResult {
        name: name.into(),
        passed,
        detail,
    })
}

fn shape(cfg: &RunConfig, m: &TorusModel, s: &MapSettings) -> Result<PropertyResult> {
    let es = cfg.sweep.values();
    let inv: Vec<f64> = es.iter().map(|e| 1.0 / e).collect();
    let (mut lw, mut top, mut bad) = (Vec::new(), Vec::new(), 0);
    for &eps in &es {
        let rm = ReturnMap::new(m, eps, *s)?;
        lw.push(rm.segments.width_plus.ln());
        let scan = rm.scan()?;
        top.push(scan.outside.iter().map(|r| r.log_j).fold(f64::NEG_INFINITY, f64::max));
        bad += rm.ring_violations(50)?.len();
    }
    let (Some(w), Some(o)) = (linear_fit(&inv, &lw), linear_fit(&inv, &top)) else {
        return result("shape", false, "need at least two eps values".into());
    };
    result(
        "shape",
        w.slope < 0.0 && w.r_squared >= 0.98 && o.slope < 0.0 && o.r_squared >= 0.98 && bad == 0,
        format!(
            "ln|D+| vs 1/eps slope {:.4} R2 {:.4}; outside max logJ slope {:.4} R2 {:.4}; ring violations {bad}",
            w.slope, w.r_squared, o.slope, o.r_squared
        ),
    )
}

fn monotonicity(m: &TorusModel, s: &MapSettings) -> Result<PropertyResult> {
    let g = gap_profile(m, Corner::EMinus, &geometric_grid(0.03, 0.4, 60), s)?;
    let bad = g.windows(2).filter(|w| w[1].1 >= w[0].1).count();
    result(
        "monotonicity",
        bad == 0,
        format!("{bad} non-decreasing steps of gap(E-) on 60 points"),
    )
}

fn convexity(m: &TorusModel, s: &MapSettings) -> Result<PropertyResult> {
    let mut bad = Vec::new();
    for i in 0..10 {
        let eps = 0.04 + 0.11 * i as f64 / 9.0;
        let arcs = unit_slope_set(m, eps, s)?;
        let ok = arcs.len() == 2
            && arcs.iter().all(|a| a.inside_segment)
            && arcs[0].increasing != arcs[1].increasing
            && landmarks(m, eps, s)?.slope_one_roots == (1, 1);
        if !ok {
            bad.push(format!("{eps:.4}"));
        }
    }
    result("convexity", bad.is_empty(), format!("failing eps [{}]", bad.join(", ")))
}

fn balance(cfg: &RunConfig, m: &TorusModel) -> Result<PropertyResult> {
    let tol = cfg.system.tolerances.quad;
    let b = balance_point(m, tol)?;
    let residual = (b.phi_plus_at_balance - b.phi_minus_at_balance).abs();
    let symmetric = cfg.system.delta_plus == cfg.system.delta_minus;
    let ok = residual <= 10.0 * tol && (!symmetric || b.y_balance.abs() <= 1e-8);
    result(
        "balance",
        ok,
        format!("y_b {:.3e}, residual {residual:.2e}", b.y_balance),
    )
}

fn derivative(cfg: &RunConfig, s: &MapSettings) -> Result<PropertyResult> {
    let es = [0.16, 0.08, 0.04, 0.02];
    let mut consts = Vec::new();
    let mut ok = true;
    let mut spreads = Vec::new();
    for f in [0.08, 0.1, 0.12] {
        let d = f * PI;
        let m = TorusModel::new(
            std::sync::Arc::new(canard_core::system::CosineOval::new(cfg.system.k, cfg.system.g_amp)),
            Offsets::Explicit { plus: d, minus: d },
            cfg.system.tolerances.curve,
        )?;
        let fit = derivative_asymptotics(&m, &es, s)?;
        let spread = fit.rows.last().map_or(f64::NAN, |r| r.spread);
        ok &= fit.is_cauchy() && spread <= 0.1;
        spreads.push(spread);
        consts.push(fit.constant().unwrap_or(f64::NAN));
    }
    ok &= consts.windows(2).all(|w| w[1].abs() > w[0].abs());
    result(
        "derivative",
        ok,
        format!("constants {consts:.4?} for delta+ = 0.08, 0.1, 0.12 pi; spread at smallest eps {spreads:.3?}"),
    )
}

pub fn run(cfg: &RunConfig, m: &TorusModel, subset: &[String]) -> Result<Vec<PropertyResult>> {
    let s = cfg.map_settings();
    let mut out = Vec::new();
    for &p in PROPERTIES
        .iter()
        .filter(|p| subset.is_empty() || subset.iter().any(|s| s == *p))
    {
        out.push(match p {
            "shape" => shape(cfg, m, &s)?,
            "monotonicity" => monotonicity(m, &s)?,
            "convexity" => convexity(m, &s)?,
            "balance" => balance(cfg, m)?,
            _ => derivative(cfg, &s)?,
        });
    }
    Ok(out)
}
