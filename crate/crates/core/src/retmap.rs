//! The global return map `P` of the section `y = -pi` onto itself, its lift,
//! the canard segments and the landmarks of its graph.
//!
//! Inside `D+` the map is evaluated through the chart `u -> (x(u), y(u))`
//! where `u` runs over `J+` on the section `y = alpha+`: `x(u)` is the
//! reverse-time transit down to `-pi` and `y(u)` the forward transit up to
//! `+pi`. Both are well conditioned, while `x -> P(x)` on `D+` amplifies
//! rounding by `exp(C/eps)`. The log-slope of the graph is
//! `L_forward(u) - L_backward(u)`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{transit, IntegratorConfig, TransitResult};
use crate::numerics::{bisect, wrap_angle, TWO_PI};
use crate::system::{LiftedPoint, SectionGeometry, SlowFastSystem, TorusModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapSettings {
    pub integrator: IntegratorConfig,
    /// Uniform samples on the complement of `D+`.
    pub n_scan: usize,
    /// Samples inside `D+`, split between the two flanks.
    pub n_refine: usize,
    /// Samples per flank when only the slope-one points are needed.
    pub n_flank_coarse: usize,
    pub tol_fix: f64,
    pub tol_hyp: f64,
    pub tol_slope: f64,
}

impl Default for MapSettings {
    fn default() -> Self {
        Self {
            integrator: IntegratorConfig::default(),
            n_scan: 256,
            n_refine: 256,
            n_flank_coarse: 32,
            tol_fix: 1e-9,
            tol_hyp: 1e-3,
            tol_slope: 1e-6,
        }
    }
}

/// `P` from `y = -pi` to `y = +pi`: lifted image and log-derivative.
pub fn poincare_map(sys: &dyn SlowFastSystem, eps: f64, x0: f64, cfg: &IntegratorConfig) -> Result<(f64, f64)> {
    let r = transit(sys, eps, -PI, PI, x0, cfg)?;
    Ok((r.x_lifted, r.log_jacobian))
}

/// `D+ = [p+, q+]` on `y = -pi` and `D- = [p-, q-]` on `y = +pi`.
///
/// `D+` is lifted so that `p+` lies in `[-pi, pi)`; `shift` is the multiple
/// of `2 pi` removed from the raw reverse-time transit. `D-` is lifted so that
/// it contains `P(q+)`; with this anchor the window `R_n` is bordered by
/// parameter ranges of rotation number `n` (below) and `n - 1` (above).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanardSegments {
    pub p_plus: f64,
    pub q_plus: f64,
    pub p_minus: f64,
    pub q_minus: f64,
    pub width_plus: f64,
    pub width_minus: f64,
    pub shift: f64,
}

impl CanardSegments {
    /// Whether `x` (any lift) lies in `D+`.
    pub fn contains_plus(&self, x: f64) -> bool {
        let r = (x - self.p_plus).rem_euclid(TWO_PI);
        r <= self.width_plus
    }

    /// Whether `y` (any lift) lies in `D-`.
    pub fn contains_minus(&self, y: f64) -> bool {
        let r = (y - self.p_minus).rem_euclid(TWO_PI);
        r <= self.width_minus
    }

    /// Centre of `D-`, the anchor of the K-lift.
    pub fn minus_center(&self) -> f64 {
        0.5 * (self.p_minus + self.q_minus)
    }

    /// Reduce `y` by a multiple of `2 pi` to the lift nearest the centre of
    /// `D-`.
    pub fn k_lift(&self, y: f64) -> f64 {
        let c = self.minus_center();
        y - TWO_PI * ((y - c) / TWO_PI).round()
    }
}

pub fn canard_segments(
    sys: &dyn SlowFastSystem,
    eps: f64,
    geom: &SectionGeometry,
    cfg: &IntegratorConfig,
) -> Result<CanardSegments> {
    let (sp, sm) = (geom.sigma_plus(), geom.sigma_minus());
    let jobs = [
        (geom.alpha_plus, -PI, sp),
        (geom.alpha_plus, -PI, PI),
        (geom.alpha_minus, PI, -PI),
        (geom.alpha_minus, PI, sm),
        (geom.alpha_plus, PI, PI),
    ];
    let r: Vec<TransitResult> = jobs
        .par_iter()
        .map(|&(a, b, x)| transit(sys, eps, a, b, x, cfg))
        .collect::<Result<_>>()?;
    let shift = r[0].x_lifted - wrap_angle(r[0].x_lifted);
    let p_plus = r[0].x_lifted - shift;
    let q_plus = r[1].x_lifted - shift;
    let y_anchor = r[4].x_lifted - shift;
    let m = ((y_anchor - 0.5 * (r[2].x_lifted + r[3].x_lifted)) / TWO_PI).round();
    let p_minus = r[2].x_lifted + TWO_PI * m;
    let q_minus = r[3].x_lifted + TWO_PI * m;
    Ok(CanardSegments {
        p_plus,
        q_plus,
        p_minus,
        q_minus,
        width_plus: q_plus - p_plus,
        width_minus: q_minus - p_minus,
        shift,
    })
}

/// A point of the graph inside `D+` in chart form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    /// Position on `J+`.
    pub u: f64,
    /// Lifted abscissa on `y = -pi`.
    pub x: f64,
    /// Lifted image `P(x)`, same lift as `x` (not K-reduced).
    pub y: f64,
    /// `ln P'(x)`
    pub log_j: f64,
}

impl ChartPoint {
    pub fn gap(&self) -> f64 {
        self.y - self.x
    }
}

/// Corners and slope-one points of the graph. Ordinates are K-lifted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corner {
    EMinus,
    EPlus,
    AMinus,
    APlus,
    BMinus,
    BPlus,
}

impl Corner {
    pub const ALL: [Corner; 6] = [
        Corner::EMinus,
        Corner::EPlus,
        Corner::AMinus,
        Corner::APlus,
        Corner::BMinus,
        Corner::BPlus,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Corner::EMinus => "E-",
            Corner::EPlus => "E+",
            Corner::AMinus => "A-",
            Corner::APlus => "A+",
            Corner::BMinus => "B-",
            Corner::BPlus => "B+",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphLandmarks {
    pub eps: f64,
    pub segments: CanardSegments,
    pub a_minus: LiftedPoint,
    pub a_plus: LiftedPoint,
    pub e_minus: LiftedPoint,
    pub e_plus: LiftedPoint,
    pub b_minus: Option<LiftedPoint>,
    pub b_plus: Option<LiftedPoint>,
    /// Chart position of the maximal canard (where the jump direction flips).
    pub u_max_canard: Option<f64>,
    /// Number of slope-one roots found on the left and right flanks.
    pub slope_one_roots: (usize, usize),
}

impl GraphLandmarks {
    pub fn point(&self, c: Corner) -> Option<LiftedPoint> {
        match c {
            Corner::EMinus => Some(self.e_minus),
            Corner::EPlus => Some(self.e_plus),
            Corner::AMinus => Some(self.a_minus),
            Corner::APlus => Some(self.a_plus),
            Corner::BMinus => self.b_minus,
            Corner::BPlus => self.b_plus,
        }
    }

    /// `(y - x)` of the landmark.
    pub fn gap(&self, c: Corner) -> Option<f64> {
        self.point(c).map(|p| p.y - p.x)
    }

    /// Whether `p` lies in the rectangle `K = D+ x D-` (lifted).
    pub fn in_rectangle(&self, p: &LiftedPoint) -> bool {
        let s = &self.segments;
        s.contains_plus(p.x) && s.contains_minus(p.y)
    }
}

/// A fixed point of `P` on the branch `P(x) - x = 2 pi n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub x_fixed: f64,
    pub winding_n: i64,
    pub log_multiplier: f64,
    pub stable: bool,
    pub hyperbolic: bool,
    pub canard: bool,
    /// `|P(x) - x - 2 pi n|` at the returned point.
    pub residual: f64,
    /// Distance to the true fixed point implied by the residual,
    /// `residual / |P'(x) - 1|`.
    pub x_error: f64,
}

/// A connected arc of `U = {ln P' in [-ln 2, ln 2]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeArc {
    pub x_start: f64,
    pub x_end: f64,
    /// Whether `ln P'` increases with `x` along the arc.
    pub increasing: bool,
    pub inside_segment: bool,
}

/// One row of the plotted graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphRow {
    pub x_lifted: f64,
    #[serde(rename = "Px_lifted")]
    pub px_lifted: f64,
    #[serde(rename = "logJ")]
    pub log_j: f64,
}

/// The return map at one value of `eps`, with its canard segments.
#[derive(Debug, Clone)]
pub struct ReturnMap<'a> {
    pub model: &'a TorusModel,
    pub eps: f64,
    pub settings: MapSettings,
    pub segments: CanardSegments,
}

/// Dense data of the graph used by the fixed-point and convexity analyses.
#[derive(Debug, Clone)]
pub struct GraphScan {
    pub u_max_canard: f64,
    /// Chart samples from `sigma+` up to the maximal canard.
    pub left: Vec<ChartPoint>,
    /// Chart samples from the maximal canard up to `pi`.
    pub right: Vec<ChartPoint>,
    /// `(x, P(x), ln P')` on the complement of `D+`, from `q+` to `p+ + 2 pi`.
    pub outside: Vec<GraphRow>,
}

impl<'a> ReturnMap<'a> {
    pub fn new(model: &'a TorusModel, eps: f64, settings: MapSettings) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
        }
        let segments = canard_segments(model.sys(), eps, &model.geometry, &settings.integrator)?;
        Ok(Self {
            model,
            eps,
            settings,
            segments,
        })
    }

    fn sys(&self) -> &dyn SlowFastSystem {
        self.model.sys()
    }

    fn cfg(&self) -> &IntegratorConfig {
        &self.settings.integrator
    }

    /// `P(x)` in the lift of the segments.
    pub fn map(&self, x: f64) -> Result<(f64, f64)> {
        poincare_map(self.sys(), self.eps, x, self.cfg())
    }

    /// Reverse transit of `u` from `alpha+` to `-pi`, shifted.
    fn backward(&self, u: f64) -> Result<TransitResult> {
        let mut r = transit(self.sys(), self.eps, self.model.geometry.alpha_plus, -PI, u, self.cfg())?;
        r.x_lifted -= self.segments.shift;
        Ok(r)
    }

    /// Forward transit of `u` from `alpha+` to `+pi`, shifted.
    fn forward(&self, u: f64) -> Result<TransitResult> {
        let mut r = transit(self.sys(), self.eps, self.model.geometry.alpha_plus, PI, u, self.cfg())?;
        r.x_lifted -= self.segments.shift;
        Ok(r)
    }

    pub fn chart(&self, u: f64) -> Result<ChartPoint> {
        let (b, f) = rayon::join(|| self.backward(u), || self.forward(u));
        let (b, f) = (b?, f?);
        Ok(ChartPoint {
            u,
            x: b.x_lifted,
            y: f.x_lifted,
            log_j: f.log_jacobian - b.log_jacobian,
        })
    }

    /// Chart position of the maximal canard: the trajectory through `J+`
    /// whose neighbours on either side jump in opposite directions. Found as
    /// the point where `y(u)` crosses the middle of its range over `J+`.
    pub fn maximal_canard(&self) -> Result<f64> {
        let (lo, hi) = self.model.geometry.j_plus();
        let (a, b) = rayon::join(|| self.forward(lo), || self.forward(hi));
        let mid = 0.5 * (a?.x_lifted + b?.x_lifted);
        bisect(|u| Ok(self.forward(u)?.x_lifted - mid), lo, hi, 0.0, 200)
    }

    /// Log-spaced chart samples approaching `u0` from the left (`side < 0`)
    /// or right (`side > 0`), ordered by increasing `u`.
    fn flank(&self, u0: f64, side: f64, n: usize) -> Result<Vec<ChartPoint>> {
        let (lo, hi) = self.model.geometry.j_plus();
        let (t_lo, t_hi) = self.flank_range(u0, side);
        let n = n.max(2);
        let mut ts: Vec<f64> = (0..n)
            .map(|i| t_lo + (t_hi - t_lo) * i as f64 / (n - 1) as f64)
            .collect();
        if side > 0.0 {
            ts.reverse();
        }
        ts.par_iter()
            .map(|&t| {
                let u = if side < 0.0 { u0 - (-t).exp() } else { u0 + (-t).exp() };
                self.chart(u.clamp(lo, hi))
            })
            .collect()
    }

    /// `t` runs from the end of `J+` (`t_lo`) to a few ulps from `u0`.
    fn flank_range(&self, u0: f64, side: f64) -> (f64, f64) {
        let (lo, hi) = self.model.geometry.j_plus();
        let span = if side < 0.0 { u0 - lo } else { hi - u0 };
        let ulp = u0.abs().max(1.0) * f64::EPSILON;
        (-span.ln(), -(8.0 * ulp).ln())
    }

    fn flank_point(&self, u0: f64, side: f64, t: f64) -> Result<ChartPoint> {
        let (lo, hi) = self.model.geometry.j_plus();
        let u = if side < 0.0 { u0 - (-t).exp() } else { u0 + (-t).exp() };
        self.chart(u.clamp(lo, hi))
    }

    /// Roots of `ln P' = level` on a flank, located on the samples and
    /// refined by bisection in the log-distance to `u0`.
    fn flank_crossings(&self, u0: f64, side: f64, samples: &[ChartPoint], level: f64) -> Result<Vec<ChartPoint>> {
        let to_t = |u: f64| -(u - u0).abs().ln();
        let mut out = Vec::new();
        for w in samples.windows(2) {
            let (a, b) = (w[0].log_j - level, w[1].log_j - level);
            if a == 0.0 {
                out.push(w[0]);
                continue;
            }
            if a.signum() == b.signum() || b == 0.0 {
                continue;
            }
            let (ta, tb) = (to_t(w[0].u), to_t(w[1].u));
            let t = bisect(|t| Ok(self.flank_point(u0, side, t)?.log_j - level), ta, tb, 1e-13, 100)?;
            out.push(self.flank_point(u0, side, t)?);
        }
        if let Some(last) = samples.last() {
            if last.log_j == level {
                out.push(*last);
            }
        }
        Ok(out)
    }

    fn corner_points(&self) -> Result<(LiftedPoint, LiftedPoint, LiftedPoint, LiftedPoint)> {
        let s = &self.segments;
        let (lo, hi) = self.model.geometry.j_plus();
        let (a, b) = rayon::join(|| self.forward(lo), || self.forward(hi));
        let a_minus = LiftedPoint::new(s.p_plus, s.k_lift(a?.x_lifted));
        let a_plus = LiftedPoint::new(s.q_plus, s.k_lift(b?.x_lifted));
        let e_minus = LiftedPoint::new(s.p_plus, s.q_minus);
        let e_plus = LiftedPoint::new(s.q_plus, s.p_minus);
        Ok((a_minus, a_plus, e_minus, e_plus))
    }

    /// Landmarks from `n` chart samples per flank (`n_flank_coarse` when
    /// only the slope-one points are needed).
    pub fn landmarks_with(&self, n_per_flank: usize) -> Result<GraphLandmarks> {
        let (a_minus, a_plus, e_minus, e_plus) = self.corner_points()?;
        let u0 = self.maximal_canard()?;
        let left = self.flank(u0, -1.0, n_per_flank)?;
        let right = self.flank(u0, 1.0, n_per_flank)?;
        self.assemble(a_minus, a_plus, e_minus, e_plus, u0, &left, &right)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        &self,
        a_minus: LiftedPoint,
        a_plus: LiftedPoint,
        e_minus: LiftedPoint,
        e_plus: LiftedPoint,
        u0: f64,
        left: &[ChartPoint],
        right: &[ChartPoint],
    ) -> Result<GraphLandmarks> {
        let s = &self.segments;
        let bl = self.flank_crossings(u0, -1.0, left, 0.0)?;
        let br = self.flank_crossings(u0, 1.0, right, 0.0)?;
        let lift = |c: &ChartPoint| LiftedPoint::new(c.x, s.k_lift(c.y));
        Ok(GraphLandmarks {
            eps: self.eps,
            segments: *s,
            a_minus,
            a_plus,
            e_minus,
            e_plus,
            // nearest the maximal canard if a flank has several roots
            b_minus: bl.last().map(lift),
            b_plus: br.first().map(lift),
            u_max_canard: Some(u0),
            slope_one_roots: (bl.len(), br.len()),
        })
    }

    /// Chart coordinate `u` on `J+` of `B-` (left flank) or `B+` (right).
    pub fn slope_one_chart(&self, plus: bool) -> Result<f64> {
        let u0 = self.maximal_canard()?;
        let side = if plus { 1.0 } else { -1.0 };
        let samples = self.flank(u0, side, self.settings.n_flank_coarse)?;
        let roots = self.flank_crossings(u0, side, &samples, 0.0)?;
        let r = if plus { roots.first() } else { roots.last() };
        r.map(|c| c.u).ok_or(Error::SlopeOneNotFound { eps: self.eps })
    }

    /// Gap of a single landmark; the cheap corners skip the flank scan.
    pub fn corner_gap(&self, c: Corner) -> Result<f64> {
        let s = &self.segments;
        match c {
            Corner::EMinus => Ok(s.q_minus - s.p_plus),
            Corner::EPlus => Ok(s.p_minus - s.q_plus),
            Corner::AMinus | Corner::APlus => {
                let (am, ap, _, _) = self.corner_points()?;
                let p = if c == Corner::AMinus { am } else { ap };
                Ok(p.y - p.x)
            }
            Corner::BMinus | Corner::BPlus => {
                let lm = self.landmarks_with(self.settings.n_flank_coarse)?;
                lm.gap(c).ok_or(Error::SlopeOneNotFound { eps: self.eps })
            }
        }
    }

    /// Dense samples of the whole graph.
    pub fn scan(&self) -> Result<GraphScan> {
        let u0 = self.maximal_canard()?;
        let per = (self.settings.n_refine / 2).max(8);
        let left = self.flank(u0, -1.0, per)?;
        let right = self.flank(u0, 1.0, per)?;
        let s = self.segments;
        let n = self.settings.n_scan.max(2);
        let outside = (0..=n)
            .into_par_iter()
            .map(|i| {
                let x = s.q_plus + (s.p_plus + TWO_PI - s.q_plus) * i as f64 / n as f64;
                let (y, l) = self.map(x)?;
                Ok(GraphRow {
                    x_lifted: x,
                    px_lifted: y,
                    log_j: l,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GraphScan {
            u_max_canard: u0,
            left,
            right,
            outside,
        })
    }

    pub fn landmarks_from_scan(&self, scan: &GraphScan) -> Result<GraphLandmarks> {
        let (a_minus, a_plus, e_minus, e_plus) = self.corner_points()?;
        self.assemble(
            a_minus,
            a_plus,
            e_minus,
            e_plus,
            scan.u_max_canard,
            &scan.left,
            &scan.right,
        )
    }

    /// Points of `n` uniform samples of the open complement of `D+` whose
    /// image misses `D-`.
    pub fn ring_violations(&self, n: usize) -> Result<Vec<f64>> {
        let s = self.segments;
        let len = s.p_plus + TWO_PI - s.q_plus;
        let xs: Vec<f64> = (0..n).map(|i| s.q_plus + len * (i as f64 + 0.5) / n as f64).collect();
        let images = xs
            .par_iter()
            .map(|&x| self.map(x).map(|r| r.0))
            .collect::<Result<Vec<_>>>()?;
        Ok(xs
            .into_iter()
            .zip(images)
            .filter(|(_, y)| !s.contains_minus(*y))
            .map(|(x, _)| x)
            .collect())
    }

    /// Definition test: the trajectory from `(x, -pi)` crosses `J+`.
    pub fn crosses_j_plus(&self, x: f64) -> Result<bool> {
        let g = &self.model.geometry;
        let r = transit(self.sys(), self.eps, -PI, g.alpha_plus, x, self.cfg())?;
        let u = wrap_angle(r.x_lifted);
        Ok(u >= g.sigma_plus() || u == -PI)
    }

    /// Both canard tests: `(crossing, membership)`.
    pub fn canard_tests(&self, x: f64) -> Result<(bool, bool)> {
        Ok((self.crosses_j_plus(x)?, self.segments.contains_plus(x)))
    }

    /// Fixed points of `P` on every branch `n` met by the sampled
    /// displacement.
    pub fn fixed_points_from_scan(&self, scan: &GraphScan) -> Result<Vec<CycleRecord>> {
        let mut inside: Vec<ChartPoint> = scan.left.clone();
        inside.extend(scan.right.iter().copied());
        let all_gaps = inside
            .iter()
            .map(|c| c.gap())
            .chain(scan.outside.iter().map(|r| r.px_lifted - r.x_lifted));
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for d in all_gaps {
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let (n_lo, n_hi) = ((lo / TWO_PI).ceil() as i64, (hi / TWO_PI).floor() as i64);
        let mut out = Vec::new();
        for n in n_lo..=n_hi {
            let target = TWO_PI * n as f64;
            for w in inside.windows(2) {
                let (a, b) = (w[0].gap() - target, w[1].gap() - target);
                if a.signum() == b.signum() && a != 0.0 {
                    continue;
                }
                let u = bisect(|u| Ok(self.chart(u)?.gap() - target), w[0].u, w[1].u, 0.0, 200)?;
                let c = self.chart(u)?;
                out.push(self.record(c.x, c.gap(), c.log_j, n, true));
            }
            for w in scan.outside.windows(2) {
                let (a, b) = (
                    w[0].px_lifted - w[0].x_lifted - target,
                    w[1].px_lifted - w[1].x_lifted - target,
                );
                if a.signum() == b.signum() && a != 0.0 {
                    continue;
                }
                let x = bisect(
                    |x| Ok(self.map(x)?.0 - x - target),
                    w[0].x_lifted,
                    w[1].x_lifted,
                    1e-14,
                    200,
                )?;
                let (y, l) = self.map(x)?;
                let canard = self.crosses_j_plus(x)?;
                out.push(self.record(x, y - x, l, n, canard));
            }
        }
        out.sort_by(|a, b| a.x_fixed.total_cmp(&b.x_fixed));
        out.dedup_by(|a, b| a.winding_n == b.winding_n && (a.x_fixed - b.x_fixed).abs() < self.settings.tol_fix);
        Ok(out)
    }

    fn record(&self, x: f64, gap: f64, log_j: f64, n: i64, canard: bool) -> CycleRecord {
        let residual = (gap - TWO_PI * n as f64).abs();
        let denom = (log_j.exp() - 1.0).abs();
        CycleRecord {
            x_fixed: x,
            winding_n: n,
            log_multiplier: log_j,
            stable: log_j < 0.0,
            hyperbolic: log_j.abs() > self.settings.tol_hyp,
            canard,
            residual,
            x_error: if denom > 0.0 { residual / denom } else { f64::INFINITY },
        }
    }

    /// Arcs of `U` from a scan.
    pub fn unit_slope_arcs(&self, scan: &GraphScan) -> Result<Vec<SlopeArc>> {
        let ln2 = std::f64::consts::LN_2;
        let mut arcs = Vec::new();
        for (side, samples) in [(-1.0, &scan.left), (1.0, &scan.right)] {
            let lower = self.flank_crossings(scan.u_max_canard, side, samples, -ln2)?;
            let upper = self.flank_crossings(scan.u_max_canard, side, samples, ln2)?;
            let mut ends: Vec<ChartPoint> = lower.into_iter().chain(upper).collect();
            ends.sort_by(|a, b| a.u.total_cmp(&b.u));
            let inside = |c: &ChartPoint| c.log_j.abs() <= ln2;
            // walk the samples, opening and closing arcs at the crossings
            let mut pts: Vec<(ChartPoint, bool)> = samples.iter().map(|c| (*c, false)).collect();
            pts.extend(ends.iter().map(|c| (*c, true)));
            pts.sort_by(|a, b| a.0.u.total_cmp(&b.0.u));
            let mut start: Option<ChartPoint> = None;
            let mut prev: Option<ChartPoint> = None;
            for (c, _) in &pts {
                let within = inside(c) || (c.log_j.abs() - ln2).abs() < 1e-9;
                match (start, within) {
                    (None, true) => start = Some(*c),
                    (Some(s), false) => {
                        let e = prev.unwrap_or(s);
                        arcs.push(self.arc(&s, &e));
                        start = None;
                    }
                    _ => {}
                }
                prev = Some(*c);
            }
            if let (Some(s), Some(e)) = (start, prev) {
                arcs.push(self.arc(&s, &e));
            }
        }
        // arcs on the complement of D+, resolved only to the sample spacing
        let mut start: Option<GraphRow> = None;
        let mut prev: Option<GraphRow> = None;
        for r in &scan.outside {
            let within = r.log_j.abs() <= ln2;
            match (start, within) {
                (None, true) => start = Some(*r),
                (Some(s), false) => {
                    let e = prev.unwrap_or(s);
                    arcs.push(SlopeArc {
                        x_start: s.x_lifted,
                        x_end: e.x_lifted,
                        increasing: e.log_j >= s.log_j,
                        inside_segment: false,
                    });
                    start = None;
                }
                _ => {}
            }
            prev = Some(*r);
        }
        if let (Some(s), Some(e)) = (start, prev) {
            arcs.push(SlopeArc {
                x_start: s.x_lifted,
                x_end: e.x_lifted,
                increasing: e.log_j >= s.log_j,
                inside_segment: false,
            });
        }
        arcs.sort_by(|a, b| a.x_start.total_cmp(&b.x_start));
        Ok(arcs)
    }

    fn arc(&self, s: &ChartPoint, e: &ChartPoint) -> SlopeArc {
        SlopeArc {
            x_start: s.x,
            x_end: e.x,
            increasing: e.log_j >= s.log_j,
            inside_segment: self.segments.contains_plus(s.x) && self.segments.contains_plus(e.x),
        }
    }

    /// Graph rows over one period: `D+` in chart order, then the complement
    /// by increasing `x`. Near the maximal canard `x` is resolved only to the
    /// integrator tolerance, so sorting by `x` there would scramble `P(x)`.
    pub fn graph_rows(&self, scan: &GraphScan) -> Vec<GraphRow> {
        let mut rows: Vec<GraphRow> = scan
            .left
            .iter()
            .chain(scan.right.iter())
            .map(|c| GraphRow {
                x_lifted: c.x,
                px_lifted: c.y,
                log_j: c.log_j,
            })
            .collect();
        // the first complement sample is q+, the last chart sample
        rows.extend(
            scan.outside
                .iter()
                .skip(1)
                .take(scan.outside.len().saturating_sub(2))
                .copied(),
        );
        rows
    }

    /// Defect `|P(-P(x)) + x|` at a chart point, for systems invariant under
    /// `(x, y) -> (-x, -y)`.
    ///
    /// `P(x)` comes from the chart; `-P(x)` is pulled back to `J+` by
    /// bisection on the contracting reverse transit, and its image is read
    /// off the chart again. Both steps stay well conditioned while
    /// `ln P'` is moderate at `x`.
    pub fn symmetry_defect(&self, u: f64) -> Result<f64> {
        let c = self.chart(u)?;
        let target = -c.y;
        let (lo, hi) = self.model.geometry.j_plus();
        // the reverse transit over J+ covers exactly one period of lifts
        let (b_lo, b_hi) = rayon::join(|| self.backward(lo), || self.backward(hi));
        let b_lo = b_lo?.x_lifted;
        let b_hi = b_hi?.x_lifted;
        let k = ((target - b_lo) / TWO_PI).floor();
        let t = target - TWO_PI * k;
        if t > b_hi {
            return Err(Error::InvalidArgument(format!(
                "-P(x) = {target} is outside D+; the symmetry check needs moderate slope"
            )));
        }
        let u2 = bisect(|v| Ok(self.backward(v)?.x_lifted - t), lo, hi, 0.0, 200)?;
        let y2 = self.forward(u2)?.x_lifted + TWO_PI * k;
        Ok((y2 + c.x).abs())
    }
}

/// Sample points for the symmetry check: chart positions spread over the
/// two arcs of moderate slope.
pub fn symmetry_sample_points(scan: &GraphScan, n: usize) -> Vec<f64> {
    let band = 2.0f64.ln();
    let us: Vec<f64> = scan
        .left
        .iter()
        .chain(scan.right.iter())
        .filter(|c| c.log_j.abs() <= 2.0 * band)
        .map(|c| c.u)
        .collect();
    if us.is_empty() || n == 0 {
        return vec![];
    }
    (0..n).map(|i| us[i * us.len() / n]).collect()
}

pub fn fixed_points(model: &TorusModel, eps: f64, settings: &MapSettings) -> Result<Vec<CycleRecord>> {
    let rm = ReturnMap::new(model, eps, *settings)?;
    let scan = rm.scan()?;
    let cycles = rm.fixed_points_from_scan(&scan)?;
    if cycles.is_empty() {
        let lm = rm.landmarks_from_scan(&scan)?;
        let c = 0.5 * (lm.gap(Corner::EMinus).unwrap_or(0.0) + lm.gap(Corner::EPlus).unwrap_or(0.0));
        return Err(Error::NoBracket {
            n: (c / TWO_PI).round() as i64,
        });
    }
    Ok(cycles)
}

pub fn is_canard(model: &TorusModel, eps: f64, x_fixed: f64, settings: &MapSettings) -> Result<bool> {
    let rm = ReturnMap::new(model, eps, *settings)?;
    rm.crosses_j_plus(x_fixed)
}

pub fn landmarks(model: &TorusModel, eps: f64, settings: &MapSettings) -> Result<GraphLandmarks> {
    let rm = ReturnMap::new(model, eps, *settings)?;
    rm.landmarks_with((settings.n_refine / 2).max(8))
}

pub fn unit_slope_set(model: &TorusModel, eps: f64, settings: &MapSettings) -> Result<Vec<SlopeArc>> {
    let rm = ReturnMap::new(model, eps, *settings)?;
    let scan = rm.scan()?;
    rm.unit_slope_arcs(&scan)
}

pub fn graph_sample(model: &TorusModel, eps: f64, settings: &MapSettings) -> Result<Vec<GraphRow>> {
    let rm = ReturnMap::new(model, eps, *settings)?;
    let scan = rm.scan()?;
    Ok(rm.graph_rows(&scan))
}

/// Rotation number of the lifted map, `(P^n(x0) - x0) / (2 pi n)` from
/// `x0 = 0`, or the branch index when a hyperbolic fixed point exists.
pub fn rotation_number(model: &TorusModel, eps: f64, n_iter: usize, settings: &MapSettings) -> Result<f64> {
    if n_iter == 0 {
        return Err(Error::InvalidArgument("n_iter must be at least 1".into()));
    }
    match fixed_points(model, eps, settings) {
        Ok(cycles) => {
            if let Some(c) = cycles.iter().find(|c| c.hyperbolic) {
                return Ok(c.winding_n as f64);
            }
        }
        Err(Error::NoBracket { .. }) => {}
        Err(e) => return Err(e),
    }
    rotation_by_iteration(model.sys(), eps, n_iter, &settings.integrator)
}

pub fn rotation_by_iteration(sys: &dyn SlowFastSystem, eps: f64, n_iter: usize, cfg: &IntegratorConfig) -> Result<f64> {
    let mut x = 0.0;
    for _ in 0..n_iter {
        x = poincare_map(sys, eps, x, cfg)?.0;
    }
    Ok(x / (TWO_PI * n_iter as f64))
}
