//! Canard windows `R_n = [alpha_n, beta_n]` in the parameter `eps`, the
//! sub-intervals where a stable canard cycle exists, and the regime census.
//!
//! All corner gaps decrease in `eps`, so each window endpoint is a single
//! bisection in `eps` on a gap equation `gap(eps) = 2 pi n`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::EPS_FLOOR;
use crate::numerics::{bisect, geometric_grid, linear_fit, median, LinearFit, TWO_PI};
use crate::retmap::{Corner, CycleRecord, GraphLandmarks, MapSettings, ReturnMap};
use crate::system::TorusModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowSettings {
    pub map: MapSettings,
    /// Relative tolerance of the window endpoints `alpha_n`, `beta_n`.
    pub rel_tol_window: f64,
    /// Relative tolerance of the endpoints of the stable-canard intervals.
    pub rel_tol_sub: f64,
    pub tol_tangent: f64,
    /// Census samples in the interior of each stable-canard interval.
    pub census_samples: usize,
    pub eps_floor: f64,
}

impl Default for WindowSettings {
    fn default() -> Self {
        Self {
            map: MapSettings::default(),
            rel_tol_window: 1e-14,
            rel_tol_sub: 1e-12,
            tol_tangent: 1e-6,
            census_samples: 5,
            eps_floor: EPS_FLOOR,
        }
    }
}

/// Lifted gap `(y - x)` of a landmark of the graph at `eps`.
pub fn corner_gap(model: &TorusModel, eps: f64, which: Corner, settings: &MapSettings) -> Result<f64> {
    ReturnMap::new(model, eps, *settings)?.corner_gap(which)
}

/// One `eps` classified into the five cases for the position of the
/// diagonal relative to the graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusRecord {
    pub eps: f64,
    pub regime: u8,
    /// Regime implied by the landmark gaps alone.
    pub regime_by_gaps: Option<u8>,
    /// Window index whose rectangle the diagonal meets, or the branch of the
    /// cycles outside every window. Inside `R_n` the cycles near `A-` sit on
    /// branch `n - 1` of the lift, those near `A+` on branch `n`.
    pub n: i64,
    pub cycles: Vec<CycleRecord>,
    pub gaps: BTreeMap<String, f64>,
    /// Integer branch of a hyperbolic fixed point, if any.
    pub rotation_number: Option<f64>,
}

impl CensusRecord {
    pub fn hyperbolic_count(&self) -> usize {
        self.cycles.iter().filter(|c| c.hyperbolic).count()
    }

    pub fn stable(&self) -> Option<&CycleRecord> {
        self.cycles.iter().find(|c| c.stable)
    }

    pub fn unstable(&self) -> Option<&CycleRecord> {
        self.cycles.iter().find(|c| !c.stable)
    }
}

fn regime_from_gaps(lm: &GraphLandmarks, target: f64, tol_tangent: f64) -> Option<u8> {
    let g = |c| lm.gap(c);
    let (em, ep) = (g(Corner::EMinus)?, g(Corner::EPlus)?);
    if target < ep || target > em {
        return Some(1);
    }
    let (bm, bp) = (g(Corner::BMinus)?, g(Corner::BPlus)?);
    if (target - bm).abs() < tol_tangent || (target - bp).abs() < tol_tangent {
        return Some(4);
    }
    let (am, ap) = (g(Corner::AMinus)?, g(Corner::APlus)?);
    if (bm < target && target < am) || (ap < target && target < bp) {
        return Some(3);
    }
    if bp < target && target < bm {
        return Some(5);
    }
    Some(2)
}

/// Classify `eps` into one of the regimes 1-5 and attach the cycles.
pub fn census(model: &TorusModel, eps: f64, settings: &WindowSettings) -> Result<CensusRecord> {
    let rm = ReturnMap::new(model, eps, settings.map)?;
    let scan = rm.scan()?;
    let lm = rm.landmarks_from_scan(&scan)?;
    let cycles = rm.fixed_points_from_scan(&scan)?;
    let ep = lm.gap(Corner::EPlus).unwrap_or(f64::NAN);
    let em = lm.gap(Corner::EMinus).unwrap_or(f64::NAN);
    let n_in = (ep / TWO_PI).ceil() as i64;
    let inside = TWO_PI * n_in as f64 <= em;
    let n = if inside { n_in } else { (ep / TWO_PI).floor() as i64 };
    let target = TWO_PI * n as f64;

    let by_gaps = regime_from_gaps(&lm, target, settings.tol_tangent);
    let stable_in_k = cycles.iter().any(|c| c.stable && lm.segments.contains_plus(c.x_fixed));
    let tangent = [Corner::BMinus, Corner::BPlus]
        .iter()
        .filter_map(|&c| lm.gap(c))
        .any(|g| (g - target).abs() < settings.tol_tangent);
    let regime = if !inside {
        1
    } else if cycles.is_empty() {
        5
    } else if tangent {
        4
    } else if stable_in_k {
        3
    } else {
        2
    };
    let mut gaps = BTreeMap::new();
    for c in Corner::ALL {
        if let Some(g) = lm.gap(c) {
            gaps.insert(c.name().to_string(), g);
        }
    }
    let rotation_number = cycles.iter().find(|c| c.hyperbolic).map(|c| c.winding_n as f64);
    Ok(CensusRecord {
        eps,
        regime,
        regime_by_gaps: by_gaps,
        n,
        cycles,
        gaps,
        rotation_number,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub n: i64,
    pub alpha: f64,
    pub beta: f64,
    pub width: f64,
    /// `C~-`: stable canard near `A-`.
    pub c_minus: Option<[f64; 2]>,
    /// `C~+`: stable canard near `A+`.
    pub c_plus: Option<[f64; 2]>,
    pub census: Vec<CensusRecord>,
}

/// Bisection in `eps` on `gap(eps) - 2 pi n`, which decreases in `eps`.
fn solve_gap(
    model: &TorusModel,
    n: i64,
    which: Corner,
    lo: f64,
    hi: f64,
    rel_tol: f64,
    settings: &MapSettings,
) -> Result<f64> {
    let target = TWO_PI * n as f64;
    let f = |e: f64| -> Result<f64> { Ok(corner_gap(model, e, which, settings)? - target) };
    let (flo, fhi) = (f(lo)?, f(hi)?);
    if !(flo >= 0.0 && fhi <= 0.0) {
        return Err(Error::BracketInvalid {
            lo,
            hi,
            reason: format!(
                "gap({}) - 2 pi n has signs {flo:e}, {fhi:e}; expected decreasing through zero",
                which.name()
            ),
        });
    }
    bisect(f, lo, hi, rel_tol * lo, 200)
}

/// Locate `R_n` given a bracket on `beta_n` (the root of `gap(E-) = 2 pi n`).
pub fn find_window(model: &TorusModel, n: i64, bracket: (f64, f64), settings: &WindowSettings) -> Result<WindowRecord> {
    let map = &settings.map;
    let (lo, hi) = (bracket.0.min(bracket.1), bracket.0.max(bracket.1));
    if hi < settings.eps_floor {
        return Err(Error::WindowBelowFloor {
            floor: settings.eps_floor,
        });
    }
    let lo = lo.max(settings.eps_floor);
    let beta = solve_gap(model, n, Corner::EMinus, lo, hi, settings.rel_tol_window, map)?;
    // alpha_n < beta_n: walk the lower end down until gap(E+) exceeds 2 pi n
    let target = TWO_PI * n as f64;
    let mut a_lo = lo.min(beta);
    while corner_gap(model, a_lo, Corner::EPlus, map)? < target {
        a_lo *= 0.97;
        if a_lo < settings.eps_floor {
            return Err(Error::WindowBelowFloor {
                floor: settings.eps_floor,
            });
        }
    }
    let alpha = solve_gap(model, n, Corner::EPlus, a_lo, beta, settings.rel_tol_window, map)?;

    let sub = |c: Corner, lo: f64, hi: f64| solve_gap(model, n, c, lo, hi, settings.rel_tol_sub, map);
    let (eam, eap) = rayon::join(|| sub(Corner::AMinus, alpha, beta), || sub(Corner::APlus, alpha, beta));
    let (c_minus, c_plus) = match (eam, eap) {
        (Ok(eam), Ok(eap)) => {
            let (ebm, ebp) = rayon::join(|| sub(Corner::BMinus, eap, eam), || sub(Corner::BPlus, eap, eam));
            (ebm.ok().map(|b| [b, eam]), ebp.ok().map(|b| [eap, b]))
        }
        _ => (None, None),
    };

    let mut samples = Vec::new();
    for iv in [c_minus, c_plus].iter().flatten() {
        let k = settings.census_samples;
        for i in 0..k {
            samples.push(iv[0] + (iv[1] - iv[0]) * (i + 1) as f64 / (k + 1) as f64);
        }
    }
    let census = samples
        .par_iter()
        .map(|&e| census(model, e, settings))
        .collect::<Result<Vec<_>>>()?;
    Ok(WindowRecord {
        n,
        alpha,
        beta,
        width: beta - alpha,
        c_minus,
        c_plus,
        census,
    })
}

/// Brackets on `beta_n` for every `n` in `n_range` whose root lies in
/// `eps_range`, from a coarse geometric scan of `gap(E-)`.
pub fn window_brackets(
    model: &TorusModel,
    n_range: (i64, i64),
    eps_range: (f64, f64),
    n_grid: usize,
    settings: &MapSettings,
) -> Result<Vec<(i64, (f64, f64))>> {
    let grid = geometric_grid(eps_range.0, eps_range.1, n_grid.max(2));
    let gaps = grid
        .par_iter()
        .map(|&e| corner_gap(model, e, Corner::EMinus, settings))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for n in n_range.0..=n_range.1 {
        let t = TWO_PI * n as f64;
        for i in 0..grid.len() - 1 {
            if gaps[i] >= t && gaps[i + 1] <= t {
                out.push((n, (grid[i], grid[i + 1])));
                break;
            }
        }
    }
    Ok(out)
}

/// All windows with index in `n_range` and `beta_n` in `eps_range`, ordered
/// by decreasing `eps`.
pub fn find_windows(
    model: &TorusModel,
    n_range: (i64, i64),
    eps_range: (f64, f64),
    settings: &WindowSettings,
) -> Result<Vec<WindowRecord>> {
    let brackets = window_brackets(model, n_range, eps_range, 48, &settings.map)?;
    let mut out = brackets
        .par_iter()
        .map(|&(n, b)| find_window(model, n, b, settings))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| b.beta.total_cmp(&a.beta));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: i64,
    pub alpha: f64,
    pub beta: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    /// `ln |R_n|` against `n`; the decay constant is `-slope`.
    pub log_width_fit: Option<LinearFit>,
    pub alpha_times_n_median: Option<f64>,
    /// Largest `|alpha_n n / median - 1|`.
    pub alpha_times_n_spread: Option<f64>,
    pub insufficient_data: bool,
}

pub fn scaling_report(windows: &[WindowRecord]) -> ScalingReport {
    let mut rows: Vec<ScalingRow> = windows
        .iter()
        .map(|w| ScalingRow {
            n: w.n,
            alpha: w.alpha,
            beta: w.beta,
            width: w.width,
        })
        .collect();
    rows.sort_by_key(|r| r.n);
    if rows.len() < 3 {
        return ScalingReport {
            rows,
            log_width_fit: None,
            alpha_times_n_median: None,
            alpha_times_n_spread: None,
            insufficient_data: true,
        };
    }
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let lw: Vec<f64> = rows.iter().map(|r| r.width.ln()).collect();
    let an: Vec<f64> = rows.iter().map(|r| r.alpha * r.n as f64).collect();
    let med = median(&an);
    let spread = med.map(|m| an.iter().map(|v| (v / m - 1.0).abs()).fold(0.0, f64::max));
    ScalingReport {
        rows,
        log_width_fit: linear_fit(&ns, &lw),
        alpha_times_n_median: med,
        alpha_times_n_spread: spread,
        insufficient_data: false,
    }
}

/// `(eps, gap)` over a grid, evaluated in parallel.
pub fn gap_profile(model: &TorusModel, which: Corner, eps: &[f64], settings: &MapSettings) -> Result<Vec<(f64, f64)>> {
    eps.par_iter()
        .map(|&e| Ok((e, corner_gap(model, e, which, settings)?)))
        .collect()
}
