//! Slow-manifold asymptotics: the first-order true slow curves, the
//! linear coefficient `a(y, eps)`, the entry-exit integrals `Phi+-` and their
//! balance point, measured jump heights of canards, and the fits of the
//! derivative and slow-manifold asymptotics.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{integrate, trajectory, IntegratorConfig};
use crate::numerics::{bisect, integrate as quad, linear_fit, wrap_angle, LinearFit};
use crate::retmap::{MapSettings, ReturnMap};
use crate::system::{Branch, TorusModel};

/// Default distance kept from the folds, where the first-order correction
/// blows up.
pub const DEFAULT_MARGIN: f64 = 0.05;
pub const STRIP_SCALE: f64 = 2.0;

/// `s(y, eps) = s0(y) + eps s1(y)` with `s1 = g s0' / f_x`, from the
/// invariance equation `f(s, y, eps) = eps g s'`.
#[derive(Debug, Clone, Copy)]
pub struct SlowManifoldModel<'a> {
    pub model: &'a TorusModel,
    pub branch: Branch,
    pub margin: f64,
}

impl<'a> SlowManifoldModel<'a> {
    pub fn new(model: &'a TorusModel, branch: Branch) -> Self {
        Self {
            model,
            branch,
            margin: DEFAULT_MARGIN,
        }
    }

    /// Strip at `eps = 0`.
    pub fn strip(&self) -> (f64, f64) {
        self.strip_at(0.0)
    }

    /// The correction grows like `eps / d` at distance `d` from a fold, so
    /// the strip also keeps `STRIP_SCALE eps^(2/3)` away from the folds.
    pub fn strip_at(&self, eps: f64) -> (f64, f64) {
        let g = &self.model.geometry;
        let m = self.margin.max(STRIP_SCALE * eps.max(0.0).powf(2.0 / 3.0));
        (g.tau_plus() + m, g.tau_minus() - m)
    }

    fn check(&self, y: f64, eps: f64) -> Result<()> {
        let (lo, hi) = self.strip_at(eps);
        if y < lo || y > hi || !y.is_finite() {
            return Err(Error::OutOfStrip { y, lo, hi });
        }
        Ok(())
    }

    /// Branch of the slow curve, `s0(y)`.
    pub fn s0(&self, y: f64) -> Result<f64> {
        self.model.curve.solve(self.model.sys(), y, self.branch)
    }

    /// `(s0, s0', s1)` at `y`.
    fn parts(&self, y: f64) -> Result<(f64, f64, f64)> {
        let s0 = self.s0(y)?;
        let j = self.model.sys().jet(s0, y, 0.0);
        let ds0 = -j.f_y / j.f_x;
        Ok((s0, ds0, j.g * ds0 / j.f_x))
    }

    pub fn s(&self, y: f64, eps: f64) -> Result<f64> {
        self.check(y, eps)?;
        let (s0, _, s1) = self.parts(y)?;
        Ok(s0 + eps * s1)
    }

    /// Invariance residual `f(s, y, eps) - eps g(s, y, eps) s'(y)`.
    pub fn residual(&self, y: f64, eps: f64) -> Result<f64> {
        self.check(y, eps)?;
        let h = 1e-5;
        let (s0, ds0, s1) = self.parts(y)?;
        let (_, _, s1p) = self.parts(y + h)?;
        let (_, _, s1m) = self.parts(y - h)?;
        let ds1 = (s1p - s1m) / (2.0 * h);
        let s = s0 + eps * s1;
        let j = self.model.sys().jet(s, y, eps);
        Ok(j.f - eps * j.g * (ds0 + eps * ds1))
    }
}

/// `f_x` at the first-order slow-manifold point.
pub fn a_coefficient(model: &TorusModel, eps: f64, y: f64, branch: Branch) -> Result<f64> {
    let sm = SlowManifoldModel::new(model, branch);
    let s = sm.s(y, eps)?;
    Ok(model.sys().jet(s, y, eps).f_x)
}

/// `Phi+(y) = int_{alpha+}^y a+` and `Phi-(y) = int_{alpha-}^y a-` at
/// `eps = 0`, and the root of their difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceData {
    pub alpha_plus: f64,
    pub alpha_minus: f64,
    pub y_balance: f64,
    pub phi_plus_at_balance: f64,
    pub phi_minus_at_balance: f64,
    /// `I = 2 Phi+(y_balance)`
    pub i_value: f64,
    /// `(y, Phi+, Phi-)` on a uniform grid over `[alpha+, alpha-]`.
    pub table: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Copy)]
pub struct EntryExit<'a> {
    pub model: &'a TorusModel,
    pub tol: f64,
}

impl<'a> EntryExit<'a> {
    pub fn new(model: &'a TorusModel, tol: f64) -> Self {
        Self { model, tol }
    }

    fn a0(&self, y: f64, branch: Branch) -> Result<f64> {
        let s0 = self.model.curve.solve(self.model.sys(), y, branch)?;
        Ok(self.model.sys().jet(s0, y, 0.0).f_x)
    }

    pub fn phi_plus(&self, y: f64) -> Result<f64> {
        quad(
            |v| self.a0(v, Branch::Unstable),
            self.model.geometry.alpha_plus,
            y,
            self.tol,
        )
    }

    pub fn phi_minus(&self, y: f64) -> Result<f64> {
        quad(
            |v| self.a0(v, Branch::Stable),
            self.model.geometry.alpha_minus,
            y,
            self.tol,
        )
    }
}

pub fn balance_point(model: &TorusModel, tol_quad: f64) -> Result<BalanceData> {
    let ee = EntryExit::new(model, tol_quad);
    let g = &model.geometry;
    let (lo, hi) = (g.alpha_plus, g.alpha_minus);
    let y = bisect(|y| Ok(ee.phi_plus(y)? - ee.phi_minus(y)?), lo, hi, 1e-13, 200).map_err(|e| match e {
        Error::BracketInvalid { .. } => Error::NoRoot { lo, hi },
        e => e,
    })?;
    let pp = ee.phi_plus(y)?;
    let pm = ee.phi_minus(y)?;
    let n = 33;
    let table = (0..n)
        .into_par_iter()
        .map(|i| {
            let v = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            Ok([v, ee.phi_plus(v)?, ee.phi_minus(v)?])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BalanceData {
        alpha_plus: lo,
        alpha_minus: hi,
        y_balance: y,
        phi_plus_at_balance: pp,
        phi_minus_at_balance: pm,
        i_value: 2.0 * pp,
        table,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpDirection {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpHeight {
    pub y_plus: f64,
    pub direction: JumpDirection,
}

pub const DEFAULT_TUBE: f64 = 0.1;

/// The unstable slow manifold between `alpha+` and the top of the strip,
/// sampled uniformly in `y`. It attracts in reverse time, so the backward
/// solution from `s(y, eps)` at the top converges onto it.
struct ManifoldTrack {
    y_top: f64,
    h: f64,
    xs: Vec<f64>,
}

impl ManifoldTrack {
    const SAMPLES: usize = 4001;

    fn new(model: &TorusModel, eps: f64, cfg: &IntegratorConfig) -> Result<Self> {
        let sm = SlowManifoldModel::new(model, Branch::Unstable);
        let (_, y_top) = sm.strip_at(eps);
        let y_bot = model.geometry.alpha_plus;
        let tr = trajectory(model.sys(), eps, y_top, y_bot, sm.s(y_top, eps)?, Self::SAMPLES, cfg)?;
        Ok(Self {
            y_top,
            h: (y_top - y_bot) / (Self::SAMPLES - 1) as f64,
            xs: tr.iter().map(|p| p.x_lifted).collect(),
        })
    }

    fn at(&self, y: f64) -> f64 {
        let t = ((self.y_top - y) / self.h).clamp(0.0, (self.xs.len() - 1) as f64);
        let i = (t.floor() as usize).min(self.xs.len() - 2);
        let f = t - i as f64;
        self.xs[i] + f * (self.xs[i + 1] - self.xs[i])
    }
}

/// First `y >= alpha+` at which the trajectory through `(x0, y0)` leaves the
/// tube `|x - s+(y, eps)| <= b` around the unstable slow manifold.
fn jump_from(model: &TorusModel, eps: f64, x0: f64, y0: f64, b: f64, cfg: &IntegratorConfig) -> Result<JumpHeight> {
    let track = ManifoldTrack::new(model, eps, cfg)?;
    let strip_hi = track.y_top;
    let alpha = model.geometry.alpha_plus;
    let dev = |x: f64, y: f64| -> Result<f64> { Ok(wrap_angle(x - track.at(y))) };
    if y0 >= alpha {
        let d = dev(x0, y0)?;
        if d.abs() > b {
            return Ok(exit(y0, d));
        }
    }
    let mut found: Option<Result<JumpHeight>> = None;
    integrate(model.sys(), eps, y0, strip_hi, x0, cfg, |s| {
        if s.y1 < alpha {
            return true;
        }
        let ya = s.y0.max(alpha);
        let (xa, _) = if ya == s.y0 { (s.x0, s.l0) } else { s.interpolate(ya) };
        let d1 = match dev(s.x1, s.y1) {
            Ok(v) => v,
            Err(e) => {
                found = Some(Err(e));
                return false;
            }
        };
        if d1.abs() <= b {
            return true;
        }
        let da = match dev(xa, ya) {
            Ok(v) => v,
            Err(e) => {
                found = Some(Err(e));
                return false;
            }
        };
        if da.abs() > b {
            found = Some(Ok(exit(ya, da)));
            return false;
        }
        let g = |y: f64| -> Result<f64> {
            let (x, _) = s.interpolate(y);
            Ok(dev(x, y)?.abs() - b)
        };
        found = Some(bisect(g, ya, s.y1, 1e-12, 100).map(|y| {
            let (x, _) = s.interpolate(y);
            exit(y, dev(x, y).unwrap_or(d1))
        }));
        false
    })?;
    found.unwrap_or(Err(Error::NeverExits))
}

fn exit(y: f64, d: f64) -> JumpHeight {
    JumpHeight {
        y_plus: y,
        direction: if d > 0.0 {
            JumpDirection::Up
        } else {
            JumpDirection::Down
        },
    }
}

/// Jump height of the trajectory starting at `(x0, -pi)`.
pub fn jump_height(model: &TorusModel, eps: f64, x0: f64, b: f64, cfg: &IntegratorConfig) -> Result<JumpHeight> {
    jump_from(model, eps, x0, -PI, b, cfg)
}

/// Jump height of the trajectory through `(u, alpha+)`. Starting on `J+`
/// avoids the `exp(C/eps)` amplification of errors in the initial `x`.
pub fn jump_height_on_section(
    model: &TorusModel,
    eps: f64,
    u: f64,
    b: f64,
    cfg: &IntegratorConfig,
) -> Result<JumpHeight> {
    jump_from(model, eps, u, model.geometry.alpha_plus, b, cfg)
}

/// Jump height of the slope-one canard `B-` (`B+` with `plus`).
pub fn slope_one_jump(
    model: &TorusModel,
    eps: f64,
    plus: bool,
    b: f64,
    settings: &MapSettings,
) -> Result<(f64, JumpHeight)> {
    let rm = ReturnMap::new(model, eps, *settings)?;
    let u = rm.slope_one_chart(plus)?;
    Ok((u, jump_height_on_section(model, eps, u, b, &settings.integrator)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeRow {
    pub eps: f64,
    /// `eps ln Q'(x)` at the quartiles and midpoint of `D+`.
    pub products: [f64; 3],
    /// `(max - min) / |mean|` of the three products.
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeFit {
    pub rows: Vec<DerivativeRow>,
    /// `|p(eps_{k+1}) - p(eps_k)|` of the midpoint product.
    pub successive_differences: Vec<f64>,
    /// Midpoint product against `eps`; the intercept estimates the limit.
    pub fit: Option<LinearFit>,
}

impl DerivativeFit {
    pub fn constant(&self) -> Option<f64> {
        self.fit.map(|f| f.intercept)
    }

    pub fn is_cauchy(&self) -> bool {
        self.successive_differences.windows(2).all(|w| w[1] < w[0])
    }
}

/// `ln Q'(x)` for the forward transit `Q` from `y = -pi` to `y = alpha+`, at
/// the points of `D+` a fraction `t` of the way from `p+` to `q+`.
fn section_log_derivative(rm: &ReturnMap<'_>, t: f64) -> Result<f64> {
    let s = rm.segments;
    let target = s.p_plus + t * s.width_plus;
    let (lo, hi) = rm.model.geometry.j_plus();
    let cfg = rm.settings.integrator;
    let back = |u: f64| crate::flow::transit(rm.model.sys(), rm.eps, rm.model.geometry.alpha_plus, -PI, u, &cfg);
    let u = bisect(|u| Ok(back(u)?.x_lifted - s.shift - target), lo, hi, 0.0, 200)?;
    Ok(-back(u)?.log_jacobian)
}

pub fn derivative_asymptotics(model: &TorusModel, eps_list: &[f64], settings: &MapSettings) -> Result<DerivativeFit> {
    let rows = eps_list
        .par_iter()
        .map(|&eps| {
            let rm = ReturnMap::new(model, eps, *settings)?;
            let mut p = [0.0; 3];
            for (k, t) in [0.25, 0.5, 0.75].iter().enumerate() {
                p[k] = eps * section_log_derivative(&rm, *t)?;
            }
            let (mn, mx) = p
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            let mean = p.iter().sum::<f64>() / 3.0;
            Ok(DerivativeRow {
                eps,
                products: p,
                spread: (mx - mn) / mean.abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mids: Vec<f64> = rows.iter().map(|r| r.products[1]).collect();
    let successive_differences = mids.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let es: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    Ok(DerivativeFit {
        fit: linear_fit(&es, &mids),
        rows,
        successive_differences,
    })
}

/// Which fold the slow-manifold error is measured at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldEnd {
    /// Unstable branch in reverse time, approaching `G+` from above.
    Lower,
    /// Stable branch in forward time, approaching `G-` from below.
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowManifoldRow {
    pub eps: f64,
    /// Largest `|x - s0|` over the window `eps^(1/3) .. delta` from the fold.
    pub window_error: f64,
    /// `|x - s0|` at distance `delta` from the fold.
    pub fixed_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowManifoldFit {
    pub fold: FoldEnd,
    pub rows: Vec<SlowManifoldRow>,
    /// Exponent `q` of `window_error ~ eps^q`.
    pub q: Option<f64>,
    /// Exponent of `fixed_error`.
    pub q_fixed: Option<f64>,
}

/// Deviation of the attracting trajectory from the slow curve near a fold.
///
/// The trajectory starts on the first-order slow manifold in the middle of
/// the strip and runs toward the fold in the direction in which its branch
/// attracts.
pub fn slow_manifold_error(
    model: &TorusModel,
    eps_list: &[f64],
    fold: FoldEnd,
    cfg: &IntegratorConfig,
) -> Result<SlowManifoldFit> {
    let g = model.geometry;
    let (branch, fold_y, delta, dir) = match fold {
        FoldEnd::Lower => (Branch::Unstable, g.tau_plus(), g.delta_plus, 1.0),
        FoldEnd::Upper => (Branch::Stable, g.tau_minus(), g.delta_minus, -1.0),
    };
    let sm = SlowManifoldModel::new(model, branch);
    let y_start = 0.5 * (g.tau_plus() + g.tau_minus());
    if let Some(&eps) = eps_list.iter().find(|&&e| !(e > 0.0) || e.powf(1.0 / 3.0) >= delta) {
        return Err(Error::InvalidArgument(format!(
            "eps = {eps}: the window eps^(1/3) .. {delta} from the fold is empty"
        )));
    }
    let rows = eps_list
        .par_iter()
        .map(|&eps| {
            let near = fold_y + dir * eps.powf(1.0 / 3.0);
            let far = fold_y + dir * delta;
            let x0 = sm.s(y_start, eps)?;
            let n = 2001;
            let tr = trajectory(model.sys(), eps, y_start, near, x0, n, cfg)?;
            let mut window_error: f64 = 0.0;
            for p in &tr {
                let inside = if dir > 0.0 {
                    p.y <= far && p.y >= near
                } else {
                    p.y >= far && p.y <= near
                };
                if inside {
                    let d = wrap_angle(p.x_lifted - sm.s0(p.y)?).abs();
                    window_error = window_error.max(d);
                }
            }
            let at_far = crate::flow::transit(model.sys(), eps, y_start, far, x0, cfg)?;
            let fixed_error = wrap_angle(at_far.x_lifted - sm.s0(far)?).abs();
            Ok(SlowManifoldRow {
                eps,
                window_error,
                fixed_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let le: Vec<f64> = rows.iter().map(|r| r.eps.ln()).collect();
    let lw: Vec<f64> = rows.iter().map(|r| r.window_error.ln()).collect();
    let lf: Vec<f64> = rows.iter().map(|r| r.fixed_error.ln()).collect();
    Ok(SlowManifoldFit {
        fold,
        q: linear_fit(&le, &lw).map(|f| f.slope),
        q_fixed: linear_fit(&le, &lf).map(|f| f.slope),
        rows,
    })
}

/// Log-derivative of the transit along a branch between `y1` and `y2`
/// predicted by the linear normal form, `(1/eps) int a / g`.
pub fn normal_form_log_derivative(
    model: &TorusModel,
    eps: f64,
    branch: Branch,
    y1: f64,
    y2: f64,
    tol: f64,
) -> Result<f64> {
    let sm = SlowManifoldModel::new(model, branch);
    let v = quad(
        |y| {
            let s = sm.s(y, eps)?;
            let j = model.sys().jet(s, y, eps);
            Ok(j.f_x / j.g)
        },
        y1,
        y2,
        tol,
    )?;
    Ok(v / eps)
}

/// Starting point on the first-order slow manifold for a branch transit.
pub fn manifold_point(model: &TorusModel, eps: f64, branch: Branch, y: f64) -> Result<f64> {
    SlowManifoldModel::new(model, branch).s(y, eps)
}
