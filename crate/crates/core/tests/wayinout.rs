use std::f64::consts::PI;

use canard_core::retmap::MapSettings;
use canard_core::wayinout::*;
use canard_core::{IntegratorConfig, Offsets, TorusModel};

fn model() -> TorusModel {
    TorusModel::cosine_oval(1.5, 0.0, Offsets::Fraction(0.15)).unwrap()
}

// 2 int_{alpha+}^0 f_x(s0+(v), v) dv by arbitrary-precision quadrature, frozen
const I_ORACLE: f64 = 1.177990765129194761944796988458690801698;

// int_{tau+}^{alpha+} a+(v, 0) dv for delta+ = 0.08 pi, 0.1 pi, 0.12 pi
const A_PLUS_ORACLE: [f64; 3] = [0.104494762594915, 0.143921813275876, 0.186421372984898];

#[test]
fn balance_point_matches_oracle() {
    let b = balance_point(&model(), 1e-12).unwrap();
    assert!(b.y_balance.abs() < 1e-10);
    assert!((b.i_value - I_ORACLE).abs() < 1e-10, "{}", b.i_value);
    assert!((b.phi_plus_at_balance - b.phi_minus_at_balance).abs() < 1e-10);
    assert_eq!(b.table.len(), 33);
}

#[test]
fn derivative_products_approach_branch_integral() {
    let s = MapSettings::default();
    for (f, oracle) in [0.08, 0.1, 0.12].iter().zip(A_PLUS_ORACLE) {
        let d = f * PI;
        let m = TorusModel::cosine_oval(1.5, 0.0, Offsets::Explicit { plus: d, minus: d }).unwrap();
        let fit = derivative_asymptotics(&m, &[0.04, 0.02], &s).unwrap();
        let mid = fit.rows[1].products[1];
        assert!(((mid - oracle) / oracle).abs() < 0.1, "delta {f} pi: {mid} vs {oracle}");
        let c = fit.constant().unwrap();
        assert!(((c - oracle) / oracle).abs() < 0.1, "delta {f} pi: {c} vs {oracle}");
    }
}

#[test]
fn slow_manifold_exponent() {
    let m = model();
    let cfg = IntegratorConfig::default();
    let lower = slow_manifold_error(&m, &[0.02, 0.01, 0.005], FoldEnd::Lower, &cfg).unwrap();
    let upper = slow_manifold_error(&m, &[0.02, 0.01, 0.005], FoldEnd::Upper, &cfg).unwrap();
    let (ql, qu) = (lower.q.unwrap(), upper.q.unwrap());
    assert!((0.5..=1.1).contains(&ql), "{ql}");
    assert!((ql - qu).abs() < 1e-3, "{ql} {qu}");
    // at a fixed distance from the fold the error is first order
    assert!((lower.q_fixed.unwrap() - 1.0).abs() < 0.1);
    for w in lower.rows.windows(2) {
        assert!(w[1].window_error < w[0].window_error);
    }
}

#[test]
fn jump_height_scales_with_eps() {
    let m = model();
    let s = MapSettings::default();
    let y = |eps: f64, b: f64| slope_one_jump(&m, eps, false, b, &s).unwrap().1;
    let (j1, j2) = (y(0.05, DEFAULT_TUBE), y(0.025, DEFAULT_TUBE));
    assert_eq!(j1.direction, JumpDirection::Down);
    assert!(j2.y_plus < 0.0 && j2.y_plus > j1.y_plus);
    // y+ is of order eps ln b
    let r = (j1.y_plus / 0.05) / (j2.y_plus / 0.025);
    assert!((r - 1.0).abs() < 0.05, "{r}");
    assert!(y(0.05, 0.2).y_plus > j1.y_plus);
    let up = slope_one_jump(&m, 0.05, true, DEFAULT_TUBE, &s).unwrap().1;
    assert_eq!(up.direction, JumpDirection::Up);
}
