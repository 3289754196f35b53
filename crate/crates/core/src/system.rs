//! Slow-fast vector fields on the two-torus
//!
//! ```text
//!     x' = f(x, y, eps),   y' = eps * g(x, y, eps),   (x, y) in T^2
//! ```
//!
//! together with the slow curve `M = {f(x, y, 0) = 0}`, its two fold points,
//! the section geometry built around them and a validator for the
//! genericity conditions the rest of the crate relies on.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{bisect, bisect_newton, wrap_angle, TWO_PI};

/// A point of the torus, both coordinates reduced into `[-pi, pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    pub x: f64,
    pub y: f64,
}

impl TorusPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self {
            x: wrap_angle(x),
            y: wrap_angle(y),
        }
    }
}

/// A point of the universal cover `R^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftedPoint {
    pub x: f64,
    pub y: f64,
}

impl LiftedPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn project(&self) -> TorusPoint {
        TorusPoint::new(self.x, self.y)
    }
}

/// Field values and the partial derivatives used by the integrator and the
/// slow-curve solvers, all evaluated at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub f: f64,
    pub g: f64,
    pub f_x: f64,
    pub f_y: f64,
    pub f_xx: f64,
    pub g_x: f64,
}

/// A slow-fast system on the torus. Implementations supply analytic partial
/// derivatives; every function must be 2pi-periodic in `x` and `y`.
pub trait SlowFastSystem: Send + Sync + fmt::Debug {
    fn jet(&self, x: f64, y: f64, eps: f64) -> Jet;

    /// Named parameters of the family, for reports.
    fn family_params(&self) -> Vec<(String, f64)> {
        Vec::new()
    }

    fn f(&self, x: f64, y: f64, eps: f64) -> f64 {
        self.jet(x, y, eps).f
    }

    fn g(&self, x: f64, y: f64, eps: f64) -> f64 {
        self.jet(x, y, eps).g
    }
}

impl<S: SlowFastSystem + ?Sized> SlowFastSystem for Arc<S> {
    fn jet(&self, x: f64, y: f64, eps: f64) -> Jet {
        (**self).jet(x, y, eps)
    }
    fn family_params(&self) -> Vec<(String, f64)> {
        (**self).family_params()
    }
}

/// `(f, g)` at a torus point.
pub fn eval_field(sys: &dyn SlowFastSystem, p: TorusPoint, eps: f64) -> (f64, f64) {
    let j = sys.jet(p.x, p.y, eps);
    (j.f, j.g)
}

/// The built-in family
///
/// ```text
///     f = cos x + cos y - k,   g = 1 + g_amp * cos(x - y)
/// ```
///
/// For `1 < k < 2` the slow curve is the oval `cos x + cos y = k`, which sits
/// inside the region where cosine is concave and is therefore convex, with
/// folds at `(0, -+arccos(k - 1))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineOval {
    pub k: f64,
    pub g_amp: f64,
}

impl Default for CosineOval {
    fn default() -> Self {
        Self { k: 1.5, g_amp: 0.0 }
    }
}

impl CosineOval {
    pub fn new(k: f64, g_amp: f64) -> Self {
        Self { k, g_amp }
    }
}

impl SlowFastSystem for CosineOval {
    fn jet(&self, x: f64, y: f64, _eps: f64) -> Jet {
        let (sx, cx) = x.sin_cos();
        let (sy, cy) = y.sin_cos();
        let (sd, cd) = (x - y).sin_cos();
        Jet {
            f: cx + cy - self.k,
            g: 1.0 + self.g_amp * cd,
            f_x: -sx,
            f_y: -sy,
            f_xx: -cx,
            g_x: -self.g_amp * sd,
        }
    }

    fn family_params(&self) -> Vec<(String, f64)> {
        vec![("k".into(), self.k), ("g_amp".into(), self.g_amp)]
    }
}

/// Orientation of the x-axis relative to the sign convention
/// `f_y(G+) < 0 < f_y(G-)`, `f_xx(G+-) > 0` used downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Direct,
    Flipped,
    Undetermined,
}

/// Jet of `-f(-x, y)`, `g(-x, y)` given the jet of `f, g` at `(-x, y)`.
fn flip_jet(j: Jet) -> Jet {
    Jet {
        f: -j.f,
        g: j.g,
        f_x: j.f_x,
        f_y: -j.f_y,
        f_xx: -j.f_xx,
        g_x: -j.g_x,
    }
}

/// A system viewed through `x -> -x` when `flipped` is set:
/// `f~(x, y) = -f(-x, y)`, `g~(x, y) = g(-x, y)`.
#[derive(Debug, Clone)]
pub struct Oriented {
    inner: Arc<dyn SlowFastSystem>,
    flipped: bool,
}

impl Oriented {
    pub fn new(inner: Arc<dyn SlowFastSystem>, flipped: bool) -> Self {
        Self { inner, flipped }
    }

    pub fn is_flipped(&self) -> bool {
        self.flipped
    }
}

impl SlowFastSystem for Oriented {
    fn jet(&self, x: f64, y: f64, eps: f64) -> Jet {
        if !self.flipped {
            return self.inner.jet(x, y, eps);
        }
        flip_jet(self.inner.jet(-x, y, eps))
    }

    fn family_params(&self) -> Vec<(String, f64)> {
        self.inner.family_params()
    }
}

/// Fold points and the derived sections.
///
/// `G+ = (sigma+, tau+)` is the lower fold, `G- = (sigma-, tau-)` the upper
/// one (the fold reached by slow drift along the stable branch).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionGeometry {
    pub g_plus: TorusPoint,
    pub g_minus: TorusPoint,
    pub delta_plus: f64,
    pub delta_minus: f64,
    pub alpha_plus: f64,
    pub alpha_minus: f64,
}

impl SectionGeometry {
    pub fn new(g_plus: TorusPoint, g_minus: TorusPoint, delta_plus: f64, delta_minus: f64) -> Result<Self> {
        if !(delta_plus > 0.0 && delta_minus > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "section offsets must be positive (got {delta_plus}, {delta_minus})"
            )));
        }
        let alpha_plus = g_plus.y + delta_plus;
        let alpha_minus = g_minus.y - delta_minus;
        if !(g_plus.y < alpha_plus && alpha_plus < alpha_minus && alpha_minus < g_minus.y) {
            return Err(Error::InvalidArgument(format!(
                "sections must satisfy tau+ < alpha+ < alpha- < tau- (got {} < {} < {} < {})",
                g_plus.y, alpha_plus, alpha_minus, g_minus.y
            )));
        }
        Ok(Self {
            g_plus,
            g_minus,
            delta_plus,
            delta_minus,
            alpha_plus,
            alpha_minus,
        })
    }

    /// Offsets `delta+- = fraction * (tau- - tau+)`.
    pub fn symmetric(g_plus: TorusPoint, g_minus: TorusPoint, fraction: f64) -> Result<Self> {
        let d = fraction * (g_minus.y - g_plus.y);
        Self::new(g_plus, g_minus, d, d)
    }

    pub fn sigma_plus(&self) -> f64 {
        self.g_plus.x
    }
    pub fn sigma_minus(&self) -> f64 {
        self.g_minus.x
    }
    pub fn tau_plus(&self) -> f64 {
        self.g_plus.y
    }
    pub fn tau_minus(&self) -> f64 {
        self.g_minus.y
    }

    /// `J+ = [sigma+, pi]` on the section `y = alpha+`.
    pub fn j_plus(&self) -> (f64, f64) {
        (self.g_plus.x, PI)
    }

    /// `J- = [-pi, sigma-]` on the section `y = alpha-`.
    pub fn j_minus(&self) -> (f64, f64) {
        (-PI, self.g_minus.x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `f_x < 0`
    Stable,
    /// `f_x > 0`
    Unstable,
}

const FOLD_GRID: usize = 720;

/// Critical points of `x -> f(x, y, 0)`: roots of `f_x` on a uniform grid,
/// refined by bisection.
pub fn critical_points(sys: &dyn SlowFastSystem, y: f64) -> Vec<f64> {
    let h = TWO_PI / FOLD_GRID as f64;
    let mut out = Vec::new();
    let mut x0 = -PI;
    let mut d0 = sys.jet(x0, y, 0.0).f_x;
    for i in 1..=FOLD_GRID {
        let x1 = -PI + i as f64 * h;
        let d1 = sys.jet(x1, y, 0.0).f_x;
        if d0 == 0.0 {
            out.push(x0);
        } else if d0.signum() != d1.signum() && d1 != 0.0 {
            if let Ok(r) = bisect(|x| Ok(sys.jet(x, y, 0.0).f_x), x0, x1, 1e-15, 200) {
                out.push(r);
            }
        }
        x0 = x1;
        d0 = d1;
    }
    out
}

/// Critical point of `f(., y, 0)` near `guess` (bracket grown outward).
fn critical_point_near(sys: &dyn SlowFastSystem, y: f64, guess: f64, tol: f64) -> Option<f64> {
    let fx = |x: f64| sys.jet(x, y, 0.0).f_x;
    let mut d = 1e-3;
    while d < PI {
        let (a, b) = (guess - d, guess + d);
        if fx(a).signum() != fx(b).signum() {
            return bisect(|x| Ok(fx(x)), a, b, tol, 200).ok();
        }
        d *= 2.0;
    }
    None
}

fn circular_distance(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

/// Locate the two fold points of the slow curve (`f = f_x = 0`).
///
/// Returns `(G+, G-)`: `G-` is the upper fold in `y`, reached by the forward
/// slow drift along the stable branch since `g > 0`.
pub fn find_folds(sys: &dyn SlowFastSystem, tol: f64) -> Result<(TorusPoint, TorusPoint)> {
    let ny = FOLD_GRID;
    let hy = TWO_PI / ny as f64;
    let rows: Vec<(f64, Vec<(f64, f64)>)> = (0..=ny)
        .map(|i| {
            let y = -PI + i as f64 * hy;
            let cps = critical_points(sys, y)
                .into_iter()
                .map(|x| (x, sys.jet(x, y, 0.0).f))
                .collect();
            (y, cps)
        })
        .collect();

    let mut folds: Vec<TorusPoint> = Vec::new();
    for w in rows.windows(2) {
        let (y0, ref c0) = w[0];
        let (y1, ref c1) = w[1];
        for &(x0, f0) in c0 {
            // match the critical point continued to the next row
            let Some(&(x1, f1)) = c1
                .iter()
                .min_by(|a, b| circular_distance(a.0, x0).total_cmp(&circular_distance(b.0, x0)))
            else {
                continue;
            };
            // a zero exactly on a grid row is handled by the row that ends on it
            if circular_distance(x1, x0) > 0.25 || f0 == 0.0 || (f1 != 0.0 && f0.signum() == f1.signum()) {
                continue;
            }
            let fold_value = |y: f64| -> Result<f64> {
                let xc = critical_point_near(sys, y, x0, 1e-15).ok_or(Error::NoFolds)?;
                Ok(sys.jet(xc, y, 0.0).f)
            };
            let yf = bisect(fold_value, y0, y1, tol.min(1e-13), 200)?;
            let xf = critical_point_near(sys, yf, x0, 1e-15).ok_or(Error::NoFolds)?;
            let p = TorusPoint::new(xf, yf);
            if !folds
                .iter()
                .any(|q| circular_distance(q.x, p.x) < 1e-6 && circular_distance(q.y, p.y) < 1e-6)
            {
                folds.push(p);
            }
        }
    }
    match folds.len() {
        0 => Err(Error::NoFolds),
        2 => {
            folds.sort_by(|a, b| a.y.total_cmp(&b.y));
            Ok((folds[0], folds[1]))
        }
        n => Err(Error::TooManyFolds { found: n }),
    }
}

/// Dense samples of the two branches of `M` between the folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowCurveModel {
    pub g_plus: TorusPoint,
    pub g_minus: TorusPoint,
    /// Sample heights, first and last at the folds.
    pub ys: Vec<f64>,
    pub stable: Vec<f64>,
    pub unstable: Vec<f64>,
    /// Sign `s` such that `s * f(., y, 0)` has a local minimum between the
    /// branches (the sign of `f_xx` at the folds).
    pub inside_sign: f64,
    pub tol: f64,
}

impl SlowCurveModel {
    fn center_guess(&self, y: f64) -> f64 {
        let t = (y - self.g_plus.y) / (self.g_minus.y - self.g_plus.y);
        self.g_plus.x + t * (self.g_minus.x - self.g_plus.x)
    }

    fn interp(&self, y: f64, values: &[f64]) -> f64 {
        let i = match self.ys.binary_search_by(|v| v.total_cmp(&y)) {
            Ok(i) => return values[i],
            Err(i) => i.clamp(1, self.ys.len() - 1),
        };
        let (y0, y1) = (self.ys[i - 1], self.ys[i]);
        let t = (y - y0) / (y1 - y0);
        values[i - 1] + t * (values[i] - values[i - 1])
    }

    /// Interpolated branch value; cheap, accurate to the sample spacing.
    pub fn interpolate(&self, y: f64, branch: Branch) -> f64 {
        match branch {
            Branch::Stable => self.interp(y, &self.stable),
            Branch::Unstable => self.interp(y, &self.unstable),
        }
    }

    /// Branch value at an arbitrary height in `[tau+, tau-]`, solved to
    /// `tol` by bisection from the interior minimum of `s * f`.
    pub fn solve(&self, sys: &dyn SlowFastSystem, y: f64, branch: Branch) -> Result<f64> {
        let (lo, hi) = (self.g_plus.y, self.g_minus.y);
        if y <= lo {
            return Ok(self.g_plus.x);
        }
        if y >= hi {
            return Ok(self.g_minus.x);
        }
        let pair = solve_branches(sys, y, self.inside_sign, self.center_guess(y), self.tol)?;
        Ok(match branch {
            Branch::Stable => pair.0,
            Branch::Unstable => pair.1,
        })
    }
}

/// Both roots of `f(., y, 0)` on the convex oval at height `y`, returned as
/// `(stable, unstable)`.
fn solve_branches(sys: &dyn SlowFastSystem, y: f64, inside_sign: f64, guess: f64, tol: f64) -> Result<(f64, f64)> {
    let h = |x: f64| inside_sign * sys.jet(x, y, 0.0).f;
    let xc = critical_point_near(sys, y, guess, 1e-15).ok_or(Error::BranchLost { y })?;
    if h(xc) >= 0.0 {
        return Err(Error::BranchLost { y });
    }
    let step = TWO_PI / 512.0;
    let walk = |dir: f64| -> Result<f64> {
        let mut a = xc;
        let mut travelled = 0.0;
        while travelled < TWO_PI {
            let b = a + dir * step;
            if h(b) >= 0.0 {
                let f = |x: f64| sys.jet(x, y, 0.0).f;
                let fx = |x: f64| sys.jet(x, y, 0.0).f_x;
                return bisect_newton(f, fx, a, b, tol);
            }
            a = b;
            travelled += step;
        }
        Err(Error::BranchLost { y })
    };
    let left = walk(-1.0)?;
    let right = walk(1.0)?;
    let fx_left = sys.jet(left, y, 0.0).f_x;
    if fx_left < 0.0 {
        Ok((left, right))
    } else {
        Ok((right, left))
    }
}

/// Sample both branches of `M` at `n_samples` heights from `tau+` to `tau-`
/// (fold heights included, where the branches coincide).
pub fn compute_slow_curve(
    sys: &dyn SlowFastSystem,
    folds: (TorusPoint, TorusPoint),
    n_samples: usize,
    tol: f64,
) -> Result<SlowCurveModel> {
    let (gp, gm) = folds;
    let n = n_samples.max(3);
    let f_xx = sys.jet(gp.x, gp.y, 0.0).f_xx;
    let inside_sign = if f_xx >= 0.0 { 1.0 } else { -1.0 };
    let mut ys = Vec::with_capacity(n);
    let mut stable = Vec::with_capacity(n);
    let mut unstable = Vec::with_capacity(n);
    let mut guess = gp.x;
    for i in 0..n {
        let y = gp.y + (gm.y - gp.y) * i as f64 / (n - 1) as f64;
        let (s, u) = if i == 0 {
            (gp.x, gp.x)
        } else if i == n - 1 {
            (gm.x, gm.x)
        } else {
            let t = i as f64 / (n - 1) as f64;
            let g = if i == 1 { gp.x + t * (gm.x - gp.x) } else { guess };
            let pair = solve_branches(sys, y, inside_sign, g, tol)?;
            guess = 0.5 * (pair.0 + pair.1);
            pair
        };
        ys.push(y);
        stable.push(s);
        unstable.push(u);
    }
    Ok(SlowCurveModel {
        g_plus: gp,
        g_minus: gm,
        ys,
        stable,
        unstable,
        inside_sign,
        tol,
    })
}

/// Outcome of one genericity condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub conditions: Vec<ConditionResult>,
    pub orientation: Orientation,
    /// Fold points in the normalized orientation, when found.
    pub folds: Option<(TorusPoint, TorusPoint)>,
    pub min_g: f64,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.conditions.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&ConditionResult> {
        self.conditions.iter().filter(|c| !c.passed).collect()
    }
}

const VALIDATION_GRID: usize = 256;
const NONDEGENERACY_FLOOR: f64 = 1e-6;

fn cond(id: u8, name: &str, passed: bool, detail: impl Into<String>) -> ConditionResult {
    ConditionResult {
        id,
        name: name.to_string(),
        passed,
        detail: detail.into(),
    }
}

/// Check the five genericity conditions and pick the orientation of the
/// x-axis that puts the fold signs into the convention used downstream.
pub fn validate_genericity(sys: &dyn SlowFastSystem, tol_curve: f64) -> ValidationReport {
    let n = VALIDATION_GRID;
    let h = TWO_PI / n as f64;
    let grid = |i: usize| -PI + i as f64 * h;

    // (1) g bounded away from zero
    let mut min_g = f64::INFINITY;
    for &eps in &[0.0, 0.5] {
        for i in 0..n {
            for j in 0..n {
                min_g = min_g.min(sys.jet(grid(i), grid(j), eps).g);
            }
        }
    }
    let mut conditions = vec![cond(
        1,
        "slow speed positive",
        min_g > 0.0,
        format!("min g over a {n}x{n} grid = {min_g:.6e}"),
    )];

    // is the slow curve empty at all?
    let (mut pos, mut neg) = (false, false);
    for i in 0..n {
        for j in 0..n {
            let f = sys.jet(grid(i), grid(j), 0.0).f;
            pos |= f > 0.0;
            neg |= f < 0.0;
        }
    }
    let fail_rest = |mut conditions: Vec<ConditionResult>, why: &str, min_g: f64| {
        conditions.push(cond(2, "slow curve smooth", false, why));
        conditions.push(cond(3, "slow curve convex and contained", false, why));
        conditions.push(cond(4, "branches nondegenerate", false, why));
        conditions.push(cond(5, "folds nondegenerate", false, why));
        ValidationReport {
            conditions,
            orientation: Orientation::Undetermined,
            folds: None,
            min_g,
        }
    };
    if !(pos && neg) {
        return fail_rest(conditions, "slow curve M is empty (f has constant sign)", min_g);
    }

    let folds = match find_folds(sys, tol_curve) {
        Ok(f) => f,
        Err(e) => return fail_rest(conditions, &format!("fold search failed: {e}"), min_g),
    };
    let (gp, gm) = folds;
    let jp = sys.jet(gp.x, gp.y, 0.0);
    let jm = sys.jet(gm.x, gm.y, 0.0);

    // (5) fold nondegeneracy and sign pattern
    let magnitudes_ok = [jp.f_xx, jp.f_y, jm.f_xx, jm.f_y]
        .iter()
        .all(|v| v.abs() > NONDEGENERACY_FLOOR);
    let orientation = if jp.f_xx > 0.0 && jm.f_xx > 0.0 && jp.f_y < 0.0 && jm.f_y > 0.0 {
        Orientation::Direct
    } else if jp.f_xx < 0.0 && jm.f_xx < 0.0 && jp.f_y > 0.0 && jm.f_y < 0.0 {
        Orientation::Flipped
    } else {
        Orientation::Undetermined
    };
    let detail5 = format!(
        "f_xx(G+) = {:.4e}, f_y(G+) = {:.4e}, f_xx(G-) = {:.4e}, f_y(G-) = {:.4e}; orientation {:?}",
        jp.f_xx, jp.f_y, jm.f_xx, jm.f_y, orientation
    );
    let cond5 = cond(
        5,
        "folds nondegenerate",
        magnitudes_ok && orientation != Orientation::Undetermined,
        detail5,
    );

    // continue in the normalized orientation
    let flipped = orientation == Orientation::Flipped;
    let flip = |p: TorusPoint| if flipped { TorusPoint::new(-p.x, p.y) } else { p };
    let nfolds = (flip(gp), flip(gm));
    let oriented = NormalizedView { inner: sys, flipped };

    let curve = compute_slow_curve(&oriented, nfolds, 401, tol_curve);
    let curve = match curve {
        Ok(c) => c,
        Err(e) => {
            let why = format!("slow curve sampling failed: {e}");
            conditions.push(cond(2, "slow curve smooth", false, why.clone()));
            conditions.push(cond(3, "slow curve convex and contained", false, why.clone()));
            conditions.push(cond(4, "branches nondegenerate", false, why));
            conditions.push(cond5);
            return ValidationReport {
                conditions,
                orientation,
                folds: Some(nfolds),
                min_g,
            };
        }
    };

    // (2) regular level set: gradient nonzero along M
    let mut min_grad = f64::INFINITY;
    let points: Vec<(f64, f64)> = curve
        .ys
        .iter()
        .zip(curve.stable.iter())
        .map(|(&y, &x)| (x, y))
        .chain(curve.ys.iter().zip(curve.unstable.iter()).map(|(&y, &x)| (x, y)))
        .collect();
    for &(x, y) in &points {
        let j = oriented.jet(x, y, 0.0);
        min_grad = min_grad.min(j.f_x.hypot(j.f_y));
    }
    conditions.push(cond(
        2,
        "slow curve smooth",
        min_grad > NONDEGENERACY_FLOOR,
        format!("min |grad f| on M = {min_grad:.4e}"),
    ));

    // (3) single closed convex curve inside the open fundamental square
    let margin = 1e-9;
    let contained = points
        .iter()
        .all(|&(x, y)| x.abs() < PI - margin && y.abs() < PI - margin);
    let mut stray_rows = 0usize;
    for i in 0..n {
        let y = grid(i);
        let mut changes = 0;
        let mut prev = oriented.jet(-PI, y, 0.0).f;
        for j in 1..=n {
            let cur = oriented.jet(grid(0) + j as f64 * h, y, 0.0).f;
            if prev.signum() != cur.signum() {
                changes += 1;
            }
            prev = cur;
        }
        let inside_strip = y > nfolds.0.y && y < nfolds.1.y;
        let expected = if inside_strip { 2 } else { 0 };
        // rows within one grid step of a fold may see a tangential pair
        let near_fold = (y - nfolds.0.y).abs() < h || (y - nfolds.1.y).abs() < h;
        if changes != expected && !near_fold {
            stray_rows += 1;
        }
    }
    // closed polygon: stable branch upward, unstable branch downward
    let mut polygon: Vec<(f64, f64)> = curve.ys.iter().zip(&curve.stable).map(|(&y, &x)| (x, y)).collect();
    polygon.extend(
        curve
            .ys
            .iter()
            .zip(&curve.unstable)
            .rev()
            .skip(1)
            .map(|(&y, &x)| (x, y)),
    );
    polygon.pop();
    let (mut turns_pos, mut turns_neg) = (0usize, 0usize);
    let m = polygon.len();
    for i in 0..m {
        let a = polygon[i];
        let b = polygon[(i + 1) % m];
        let c = polygon[(i + 2) % m];
        let cross = (b.0 - a.0) * (c.1 - b.1) - (b.1 - a.1) * (c.0 - b.0);
        if cross > 1e-14 {
            turns_pos += 1;
        } else if cross < -1e-14 {
            turns_neg += 1;
        }
    }
    let convex = turns_pos == 0 || turns_neg == 0;
    conditions.push(cond(
        3,
        "slow curve convex and contained",
        contained && convex && stray_rows == 0,
        format!(
            "contained in |x|,|y| < pi: {contained}; polygon turns +{turns_pos}/-{turns_neg}; rows with stray zeros: {stray_rows}"
        ),
    ));

    // (4) f_x has the branch sign away from the folds
    let mut worst = f64::INFINITY;
    let mut wrong_sign = 0usize;
    for i in 1..curve.ys.len() - 1 {
        let y = curve.ys[i];
        let s = oriented.jet(curve.stable[i], y, 0.0).f_x;
        let u = oriented.jet(curve.unstable[i], y, 0.0).f_x;
        if !(s < 0.0 && u > 0.0) {
            wrong_sign += 1;
        }
        worst = worst.min(s.abs()).min(u.abs());
    }
    conditions.push(cond(
        4,
        "branches nondegenerate",
        wrong_sign == 0 && worst > 0.0,
        format!("min |f_x| at interior samples = {worst:.4e}; wrong-sign samples: {wrong_sign}"),
    ));
    conditions.push(cond5);
    conditions.sort_by_key(|c| c.id);

    ValidationReport {
        conditions,
        orientation,
        folds: Some(nfolds),
        min_g,
    }
}

/// Borrowed counterpart of [`Oriented`] used inside the validator.
#[derive(Debug)]
struct NormalizedView<'a> {
    inner: &'a dyn SlowFastSystem,
    flipped: bool,
}

impl SlowFastSystem for NormalizedView<'_> {
    fn jet(&self, x: f64, y: f64, eps: f64) -> Jet {
        if !self.flipped {
            return self.inner.jet(x, y, eps);
        }
        flip_jet(self.inner.jet(-x, y, eps))
    }
}

/// A validated system in normalized orientation together with its slow
/// curve and sections: everything the return-map machinery needs.
#[derive(Debug, Clone)]
pub struct TorusModel {
    pub system: Arc<Oriented>,
    pub geometry: SectionGeometry,
    pub curve: SlowCurveModel,
    pub report: ValidationReport,
}

/// How the section offsets are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Offsets {
    /// `delta+- = fraction * (tau- - tau+)`
    Fraction(f64),
    Explicit {
        plus: f64,
        minus: f64,
    },
}

pub const DEFAULT_OFFSET_FRACTION: f64 = 0.15;
pub const DEFAULT_TOL_CURVE: f64 = 1e-12;

impl TorusModel {
    pub fn new(raw: Arc<dyn SlowFastSystem>, offsets: Offsets, tol_curve: f64) -> Result<Self> {
        let report = validate_genericity(raw.as_ref(), tol_curve);
        if !report.all_passed() {
            let msg = report
                .failures()
                .iter()
                .map(|c| format!("({}) {}: {}", c.id, c.name, c.detail))
                .collect::<Vec<_>>()
                .join("; ");
            return Err(Error::NotGeneric(msg));
        }
        let system = Arc::new(Oriented::new(raw, report.orientation == Orientation::Flipped));
        let folds = report.folds.ok_or(Error::NoFolds)?;
        let curve = compute_slow_curve(system.as_ref(), folds, 401, tol_curve)?;
        let geometry = match offsets {
            Offsets::Fraction(fr) => SectionGeometry::symmetric(folds.0, folds.1, fr)?,
            Offsets::Explicit { plus, minus } => SectionGeometry::new(folds.0, folds.1, plus, minus)?,
        };
        let model = Self {
            system,
            geometry,
            curve,
            report,
        };
        model.check_sections()?;
        Ok(model)
    }

    /// The default built-in system: cosine oval with `k = 1.5`, `g_amp = 0`.
    pub fn cosine_oval(k: f64, g_amp: f64, offsets: Offsets) -> Result<Self> {
        Self::new(Arc::new(CosineOval::new(k, g_amp)), offsets, DEFAULT_TOL_CURVE)
    }

    pub fn sys(&self) -> &dyn SlowFastSystem {
        self.system.as_ref()
    }

    /// `J+` must meet the unstable branch and miss the stable one; the
    /// mirror statement for `J-`.
    fn check_sections(&self) -> Result<()> {
        let g = &self.geometry;
        let sys = self.sys();
        let up = self.curve.solve(sys, g.alpha_plus, Branch::Unstable)?;
        let sp = self.curve.solve(sys, g.alpha_plus, Branch::Stable)?;
        let um = self.curve.solve(sys, g.alpha_minus, Branch::Unstable)?;
        let sm = self.curve.solve(sys, g.alpha_minus, Branch::Stable)?;
        let in_j_plus = |x: f64| x >= g.sigma_plus() && x <= PI;
        let in_j_minus = |x: f64| x >= -PI && x <= g.sigma_minus();
        if !(in_j_plus(up) && !in_j_plus(sp) && in_j_minus(sm) && !in_j_minus(um)) {
            return Err(Error::InvalidArgument(format!(
                "sections do not separate the branches: M+ at alpha+ = {up}, M- at alpha+ = {sp}, \
                 M- at alpha- = {sm}, M+ at alpha- = {um}"
            )));
        }
        Ok(())
    }
}
