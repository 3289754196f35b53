use std::f64::consts::PI;

use canard_core::flow::{reference::rk4_transit, trajectory, transit, IntegratorConfig};
use canard_core::system::SlowFastSystem;
use canard_core::{Offsets, TorusModel};
use proptest::prelude::*;

const TWO_PI: f64 = 2.0 * PI;

fn model(g_amp: f64) -> TorusModel {
    TorusModel::cosine_oval(1.5, g_amp, Offsets::Fraction(0.15)).unwrap()
}

#[test]
fn identity_transit() {
    let m = model(0.0);
    let r = transit(m.sys(), 0.1, 0.3, 0.3, 1.25, &IntegratorConfig::default()).unwrap();
    assert_eq!((r.x_lifted, r.winding, r.log_jacobian), (1.25, 0.0, 0.0));
}

#[test]
fn round_trip_returns_home() {
    let m = model(0.3);
    let cfg = IntegratorConfig::default();
    // the reverse leg amplifies errors by exp(-L), so small eps only over
    // spans without strong contraction
    for (eps, a, b, x0) in [(0.3, -PI, PI, 0.0), (0.1, -PI, PI, 2.0), (0.05, -PI, -1.2, -1.0)] {
        let f = transit(m.sys(), eps, a, b, x0, &cfg).unwrap();
        let b = transit(m.sys(), eps, b, a, f.x_lifted, &cfg).unwrap();
        let tol = 10.0 * (cfg.rel_tol * f.winding.abs() + cfg.abs_tol);
        // backward runs through the expanding direction, allow its amplification
        let amp = (-f.log_jacobian).exp().max(1.0);
        assert!((b.x_lifted - x0).abs() < tol * amp, "eps={eps}: {} vs {x0}", b.x_lifted);
        assert!((f.log_jacobian + b.log_jacobian).abs() < 1e-6 * f.log_jacobian.abs().max(1.0));
    }
}

#[test]
fn matches_fixed_step_reference_to_fold() {
    let m = model(0.0);
    let cfg = IntegratorConfig::default();
    let tau = m.geometry.tau_plus();
    let r = transit(m.sys(), 0.3, -PI, tau, 0.0, &cfg).unwrap();
    let (x, l) = rk4_transit(m.sys(), 0.3, -PI, tau, 0.0, 10 * r.steps);
    assert!((r.x_lifted - x).abs() < 1e-8, "{} {}", r.x_lifted, x);
    assert!((r.log_jacobian - l).abs() < 1e-6);
}

#[test]
fn variational_matches_finite_difference() {
    let m = model(0.3);
    let cfg = IntegratorConfig::default();
    let h = 1e-6;
    for eps in [0.2, 0.3, 0.5] {
        for x0 in [-2.0, 0.0, 1.0, 2.5] {
            let c = transit(m.sys(), eps, -PI, PI, x0, &cfg).unwrap();
            let p = transit(m.sys(), eps, -PI, PI, x0 + h, &cfg).unwrap();
            let q = transit(m.sys(), eps, -PI, PI, x0 - h, &cfg).unwrap();
            let fd = (p.x_lifted - q.x_lifted) / (2.0 * h);
            let d = c.log_jacobian.exp();
            assert!(((fd - d) / d).abs() < 1e-3, "eps={eps} x0={x0}: {fd} {d}");
        }
    }
}

#[test]
fn group_law() {
    let m = model(0.3);
    let cfg = IntegratorConfig::default();
    let (a, b, c) = (-PI, -0.4, 1.7);
    for x0 in [-1.0, 0.5, 3.0] {
        let ac = transit(m.sys(), 0.1, a, c, x0, &cfg).unwrap();
        let ab = transit(m.sys(), 0.1, a, b, x0, &cfg).unwrap();
        let bc = transit(m.sys(), 0.1, b, c, ab.x_lifted, &cfg).unwrap();
        let tol = 1e-7 * ac.log_jacobian.exp().max(1.0);
        assert!((ac.x_lifted - bc.x_lifted).abs() < tol);
        assert!((ac.log_jacobian - ab.log_jacobian - bc.log_jacobian).abs() < 1e-6);
    }
}

#[test]
fn transit_is_increasing() {
    let m = model(0.3);
    let cfg = IntegratorConfig::default();
    let xs: Vec<f64> = (0..64).map(|i| -PI + TWO_PI * i as f64 / 64.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| transit(m.sys(), 0.15, -PI, PI, x, &cfg).unwrap().x_lifted)
        .collect();
    for w in ys.windows(2) {
        assert!(w[1] > w[0]);
    }
    assert!(ys[63] - ys[0] < TWO_PI);
}

/// `max |d/dx (f/g)|` on a fine grid, with a margin for the grid spacing.
fn rate_bound(sys: &dyn SlowFastSystem, eps: f64) -> f64 {
    let n = 400;
    let mut c: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let x = -PI + TWO_PI * i as f64 / n as f64;
            let y = -PI + TWO_PI * j as f64 / n as f64;
            let q = sys.jet(x, y, eps);
            c = c.max(((q.f_x * q.g - q.f * q.g_x) / (q.g * q.g)).abs());
        }
    }
    c * 1.01
}

#[test]
fn log_jacobian_rough_bound() {
    let m = model(0.3);
    let cfg = IntegratorConfig::default();
    for eps in [0.3, 0.1, 0.05] {
        let c = rate_bound(m.sys(), eps);
        for (a, b, x0) in [(-PI, PI, 0.0), (-1.0, 0.2, 2.0), (PI, -PI, -1.0)] {
            let r = transit(m.sys(), eps, a, b, x0, &cfg).unwrap();
            assert!(r.log_jacobian.abs() < c * (b - a).abs() / eps);
        }
    }
}

#[test]
fn trajectory_endpoints_and_sampling() {
    let m = model(0.0);
    let cfg = IntegratorConfig::default();
    let t = trajectory(m.sys(), 0.2, -PI, 1.0, 0.4, 2, &cfg).unwrap();
    let r = transit(m.sys(), 0.2, -PI, 1.0, 0.4, &cfg).unwrap();
    assert_eq!(t.len(), 2);
    assert_eq!(t[0].x_lifted, 0.4);
    assert!((t[1].x_lifted - r.x_lifted).abs() <= r.est_error.max(1e-14));
    let t = trajectory(m.sys(), 0.2, 1.0, -2.0, 0.4, 101, &cfg).unwrap();
    for w in t.windows(2) {
        assert!(w[1].y < w[0].y);
    }
}

#[test]
fn backward_from_j_plus_winds_down_off_the_oval() {
    // f > 0 wherever |y| > pi/3 in the normalized family, so reverse time
    // moves x down there
    let m = model(0.0);
    let g = m.geometry;
    let u = 0.5 * (g.sigma_plus() + PI);
    let t = trajectory(m.sys(), 0.2, g.alpha_plus, -PI, u, 400, &IntegratorConfig::default()).unwrap();
    let off: Vec<_> = t.iter().filter(|s| s.y < -PI / 3.0).collect();
    assert!(off.len() > 100);
    for w in off.windows(2) {
        assert!(w[1].x_lifted < w[0].x_lifted);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_round_trips(eps in 0.1f64..0.5, x0 in -PI..PI, a in -PI..PI, b in -PI..PI) {
        let m = model(0.2);
        let cfg = IntegratorConfig::default();
        let f = transit(m.sys(), eps, a, b, x0, &cfg).unwrap();
        let r = transit(m.sys(), eps, b, a, f.x_lifted, &cfg).unwrap();
        let amp = (-f.log_jacobian).exp().max(1.0);
        prop_assert!((r.x_lifted - x0).abs() < 1e-7 * amp);
        prop_assert!((f.log_jacobian + r.log_jacobian).abs() < 1e-6);
    }
}
