//! The fast equation with `y` as independent variable,
//!
//! ```text
//!     dx/dy = f / (eps g),     dL/dy = (1/eps) d/dx [f / g],
//! ```
//!
//! integrated on the universal cover. `L` is the logarithm of the derivative
//! of the flow map with respect to the initial `x`; the multiplier itself
//! reaches `exp(+-C/eps)` and is never formed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::wrap_angle;
use crate::system::SlowFastSystem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    pub initial_step: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_steps: 10_000_000,
            initial_step: 1e-3,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0 && self.max_steps > 0 && self.initial_step > 0.0) {
            return Err(Error::Config(format!("invalid integrator config {self:?}")));
        }
        Ok(())
    }
}

/// Endpoint of a transit between two horizontal sections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitResult {
    pub x_lifted: f64,
    /// `x_lifted - x0`
    pub winding: f64,
    /// `ln(d x_lifted / d x0)`
    pub log_jacobian: f64,
    pub steps: usize,
    /// Largest accepted local error estimate in `x`.
    pub est_error: f64,
}

/// Below this, double precision cannot separate points of the canard segment.
pub const EPS_FLOOR: f64 = 0.02;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Deriv {
    pub dx: f64,
    pub dl: f64,
}

#[inline]
pub(crate) fn rhs(sys: &dyn SlowFastSystem, eps: f64, x: f64, y: f64) -> Deriv {
    let j = sys.jet(wrap_angle(x), wrap_angle(y), eps);
    let inv_g = 1.0 / j.g;
    let v = j.f * inv_g;
    Deriv {
        dx: v / eps,
        dl: (j.f_x - v * j.g_x) * inv_g / eps,
    }
}

/// One accepted step, with enough data for cubic Hermite interpolation.
#[derive(Debug, Clone, Copy)]
pub struct Step {
    pub y0: f64,
    pub y1: f64,
    pub x0: f64,
    pub x1: f64,
    pub l0: f64,
    pub l1: f64,
    pub dx0: f64,
    pub dx1: f64,
    pub dl0: f64,
    pub dl1: f64,
}

impl Step {
    /// `(x, L)` at `y` inside the step.
    pub fn interpolate(&self, y: f64) -> (f64, f64) {
        let h = self.y1 - self.y0;
        let t = (y - self.y0) / h;
        let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
        let h10 = t * (1.0 - t) * (1.0 - t);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        (
            h00 * self.x0 + h10 * h * self.dx0 + h01 * self.x1 + h11 * h * self.dx1,
            h00 * self.l0 + h10 * h * self.dl0 + h01 * self.l1 + h11 * h * self.dl1,
        )
    }
}

// Dormand-Prince 5(4)
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Adaptive Dormand-Prince integration from `y_from` to `y_to`, calling
/// `observe` after every accepted step. Returning `false` from the observer
/// stops the integration early (the returned result is then at the last
/// accepted step).
///
/// The step is accepted when the local error of each component is below
/// `abs_tol + rel_tol * |increment over the step|`, so the accumulated error
/// scales with the total winding rather than with the lift offset.
pub fn integrate<O>(
    sys: &dyn SlowFastSystem,
    eps: f64,
    y_from: f64,
    y_to: f64,
    x0: f64,
    cfg: &IntegratorConfig,
    mut observe: O,
) -> Result<TransitResult>
where
    O: FnMut(&Step) -> bool,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    if !(x0.is_finite() && y_from.is_finite() && y_to.is_finite()) {
        return Err(Error::NonFiniteState { y: y_from });
    }
    let span = y_to - y_from;
    let mut out = TransitResult {
        x_lifted: x0,
        winding: 0.0,
        log_jacobian: 0.0,
        steps: 0,
        est_error: 0.0,
    };
    if span == 0.0 {
        return Ok(out);
    }
    let dir = span.signum();
    let mut y = y_from;
    let mut x = x0;
    let mut l = 0.0;
    let mut k1 = rhs(sys, eps, x, y);
    let mut h = dir * cfg.initial_step.min(span.abs());
    let mut attempts = 0usize;
    let mut accepted = 0usize;
    let mut max_err = 0.0f64;
    let min_step = 1e-14 * (1.0 + y_from.abs().max(y_to.abs()));

    loop {
        let remaining = y_to - y;
        if remaining * dir <= min_step {
            break;
        }
        if (h.abs()) >= remaining.abs() {
            h = remaining;
        }
        attempts += 1;
        if attempts > cfg.max_steps {
            return Err(Error::StepLimitExceeded {
                max_steps: cfg.max_steps,
                y,
                eps,
            });
        }

        let k2 = rhs(sys, eps, x + h * A21 * k1.dx, y + C2 * h);
        let k3 = rhs(sys, eps, x + h * (A31 * k1.dx + A32 * k2.dx), y + C3 * h);
        let k4 = rhs(sys, eps, x + h * (A41 * k1.dx + A42 * k2.dx + A43 * k3.dx), y + C4 * h);
        let k5 = rhs(
            sys,
            eps,
            x + h * (A51 * k1.dx + A52 * k2.dx + A53 * k3.dx + A54 * k4.dx),
            y + C5 * h,
        );
        let k6 = rhs(
            sys,
            eps,
            x + h * (A61 * k1.dx + A62 * k2.dx + A63 * k3.dx + A64 * k4.dx + A65 * k5.dx),
            y + h,
        );
        let dx = h * (B1 * k1.dx + B3 * k3.dx + B4 * k4.dx + B5 * k5.dx + B6 * k6.dx);
        let dl = h * (B1 * k1.dl + B3 * k3.dl + B4 * k4.dl + B5 * k5.dl + B6 * k6.dl);
        let x_new = x + dx;
        let l_new = l + dl;
        let y_new = y + h;
        let k7 = rhs(sys, eps, x_new, y_new);

        let ex = h * (E1 * k1.dx + E3 * k3.dx + E4 * k4.dx + E5 * k5.dx + E6 * k6.dx + E7 * k7.dx);
        let el = h * (E1 * k1.dl + E3 * k3.dl + E4 * k4.dl + E5 * k5.dl + E6 * k6.dl + E7 * k7.dl);
        let sx = cfg.abs_tol + cfg.rel_tol * dx.abs();
        let sl = cfg.abs_tol + cfg.rel_tol * dl.abs();
        let err = (ex.abs() / sx).max(el.abs() / sl);

        if !err.is_finite() || !x_new.is_finite() || !l_new.is_finite() {
            if h.abs() <= min_step {
                return Err(Error::NonFiniteState { y });
            }
            h *= 0.25;
            continue;
        }

        if err <= 1.0 {
            let step = Step {
                y0: y,
                y1: y_new,
                x0: x,
                x1: x_new,
                l0: l,
                l1: l_new,
                dx0: k1.dx,
                dx1: k7.dx,
                dl0: k1.dl,
                dl1: k7.dl,
            };
            y = y_new;
            x = x_new;
            l = l_new;
            k1 = k7;
            accepted += 1;
            max_err = max_err.max(ex.abs());
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h *= factor;
            if !observe(&step) {
                break;
            }
        } else {
            h *= (0.9 * err.powf(-0.25)).clamp(0.1, 0.9);
            if h.abs() < min_step {
                return Err(Error::StepLimitExceeded {
                    max_steps: cfg.max_steps,
                    y,
                    eps,
                });
            }
        }
    }

    out.x_lifted = x;
    out.winding = x - x0;
    out.log_jacobian = l;
    out.steps = accepted;
    out.est_error = max_err;
    Ok(out)
}

/// Flow map between the sections `y = y_from` and `y = y_to` (either order;
/// `y_to < y_from` runs in reverse time).
pub fn transit(
    sys: &dyn SlowFastSystem,
    eps: f64,
    y_from: f64,
    y_to: f64,
    x0: f64,
    cfg: &IntegratorConfig,
) -> Result<TransitResult> {
    integrate(sys, eps, y_from, y_to, x0, cfg, |_| true)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub y: f64,
    pub x_lifted: f64,
    pub log_jacobian: f64,
}

/// Dense output at `n_samples` uniformly spaced heights, endpoints included.
pub fn trajectory(
    sys: &dyn SlowFastSystem,
    eps: f64,
    y_from: f64,
    y_to: f64,
    x0: f64,
    n_samples: usize,
    cfg: &IntegratorConfig,
) -> Result<Vec<TrajectorySample>> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument("trajectory needs at least two samples".into()));
    }
    let ys: Vec<f64> = (0..n_samples)
        .map(|i| y_from + (y_to - y_from) * i as f64 / (n_samples - 1) as f64)
        .collect();
    let mut out = Vec::with_capacity(n_samples);
    out.push(TrajectorySample {
        y: y_from,
        x_lifted: x0,
        log_jacobian: 0.0,
    });
    let dir = (y_to - y_from).signum();
    let mut next = 1usize;
    let end = integrate(sys, eps, y_from, y_to, x0, cfg, |s| {
        while next < n_samples - 1 && (ys[next] - s.y1) * dir <= 0.0 {
            let (x, l) = s.interpolate(ys[next]);
            out.push(TrajectorySample {
                y: ys[next],
                x_lifted: x,
                log_jacobian: l,
            });
            next += 1;
        }
        true
    })?;
    out.push(TrajectorySample {
        y: y_to,
        x_lifted: end.x_lifted,
        log_jacobian: end.log_jacobian,
    });
    Ok(out)
}

/// Fixed-step classical Runge-Kutta, kept separate from the adaptive scheme
/// as an independent reference.
pub mod reference {
    use super::rhs;
    use crate::system::SlowFastSystem;

    /// `(x, L)` at `y_to` after `n_steps` equal RK4 steps.
    pub fn rk4_transit(
        sys: &dyn SlowFastSystem,
        eps: f64,
        y_from: f64,
        y_to: f64,
        x0: f64,
        n_steps: usize,
    ) -> (f64, f64) {
        let h = (y_to - y_from) / n_steps as f64;
        let (mut x, mut l) = (x0, 0.0);
        for i in 0..n_steps {
            let y = y_from + i as f64 * h;
            let k1 = rhs(sys, eps, x, y);
            let k2 = rhs(sys, eps, x + 0.5 * h * k1.dx, y + 0.5 * h);
            let k3 = rhs(sys, eps, x + 0.5 * h * k2.dx, y + 0.5 * h);
            let k4 = rhs(sys, eps, x + h * k3.dx, y + h);
            x += h / 6.0 * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx);
            l += h / 6.0 * (k1.dl + 2.0 * k2.dl + 2.0 * k3.dl + k4.dl);
        }
        (x, l)
    }
}
