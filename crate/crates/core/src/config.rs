//! Run configuration shared by the command-line tools.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{IntegratorConfig, EPS_FLOOR};
use crate::retmap::MapSettings;
use crate::system::{CosineOval, Offsets, TorusModel, DEFAULT_OFFSET_FRACTION, DEFAULT_TOL_CURVE};
use crate::windows::WindowSettings;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub curve: f64,
    pub fix: f64,
    pub hyp: f64,
    pub slope: f64,
    pub tangent: f64,
    pub quad: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            curve: DEFAULT_TOL_CURVE,
            fix: 1e-9,
            hyp: 1e-3,
            slope: 1e-6,
            tangent: 1e-6,
            quad: 1e-10,
        }
    }
}

impl Tolerances {
    /// All tolerances multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            curve: self.curve * factor,
            fix: self.fix * factor,
            hyp: self.hyp * factor,
            slope: self.slope * factor,
            tangent: self.tangent * factor,
            quad: self.quad * factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub family: String,
    pub k: f64,
    pub g_amp: f64,
    /// Offsets of the sections `J+-` from the folds; `None` uses
    /// `0.15 (tau- - tau+)`.
    pub delta_plus: Option<f64>,
    pub delta_minus: Option<f64>,
    pub tolerances: Tolerances,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            family: "cosine_oval".into(),
            k: 1.5,
            g_amp: 0.0,
            delta_plus: None,
            delta_minus: None,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpsGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Default for EpsGrid {
    fn default() -> Self {
        Self {
            min: 0.05,
            max: 0.3,
            count: 8,
        }
    }
}

impl EpsGrid {
    pub fn values(&self) -> Vec<f64> {
        crate::numerics::geometric_grid(self.min, self.max, self.count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowSearch {
    pub n_min: u32,
    pub n_max: u32,
    pub eps_min: f64,
    pub eps_max: f64,
}

impl Default for WindowSearch {
    fn default() -> Self {
        Self {
            n_min: 5,
            n_max: 9,
            eps_min: 0.04,
            eps_max: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub integrator: IntegratorConfig,
    pub sweep: EpsGrid,
    pub windows: WindowSearch,
    /// Working floor on `eps`.
    pub eps_floor: f64,
    /// Tube half-width for jump heights.
    pub tube: f64,
    pub output_dir: String,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig::default(),
            integrator: IntegratorConfig::default(),
            sweep: EpsGrid::default(),
            windows: WindowSearch::default(),
            eps_floor: EPS_FLOOR,
            tube: crate::wayinout::DEFAULT_TUBE,
            output_dir: "out".into(),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Canonical serialization; the config hash is taken over these bytes.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        if s.family != "cosine_oval" {
            return Err(Error::Config(format!("unknown system family {:?}", s.family)));
        }
        // whether k gives a usable slow curve is a genericity question
        if !s.k.is_finite() {
            return Err(Error::Config(format!("k = {} is not finite", s.k)));
        }
        if !(0.0..=0.9).contains(&s.g_amp) {
            return Err(Error::Config(format!("g_amp = {} is outside [0, 0.9]", s.g_amp)));
        }
        let t = &s.tolerances;
        for (name, v) in [
            ("curve", t.curve),
            ("fix", t.fix),
            ("hyp", t.hyp),
            ("slope", t.slope),
            ("tangent", t.tangent),
            ("quad", t.quad),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("tolerance {name} must be positive, got {v}")));
            }
        }
        for d in [s.delta_plus, s.delta_minus].into_iter().flatten() {
            if !(d > 0.0) {
                return Err(Error::Config(format!("section offset must be positive, got {d}")));
            }
        }
        if s.delta_plus.is_some() != s.delta_minus.is_some() {
            return Err(Error::Config(
                "delta_plus and delta_minus must be given together".into(),
            ));
        }
        self.integrator.validate()?;
        let g = &self.sweep;
        if !(g.min > 0.0 && g.min <= g.max && g.count > 0) {
            return Err(Error::Config(format!("invalid eps grid {g:?}")));
        }
        let w = &self.windows;
        if !(w.n_min >= 1 && w.n_min <= w.n_max && w.eps_min > 0.0 && w.eps_min < w.eps_max) {
            return Err(Error::Config(format!("invalid window search {w:?}")));
        }
        if !(self.eps_floor > 0.0 && self.tube > 0.0) {
            return Err(Error::Config("eps_floor and tube must be positive".into()));
        }
        Ok(())
    }

    pub fn offsets(&self) -> Offsets {
        match (self.system.delta_plus, self.system.delta_minus) {
            (Some(plus), Some(minus)) => Offsets::Explicit { plus, minus },
            _ => Offsets::Fraction(DEFAULT_OFFSET_FRACTION),
        }
    }

    pub fn model(&self) -> Result<TorusModel> {
        let s = &self.system;
        TorusModel::new(
            Arc::new(CosineOval::new(s.k, s.g_amp)),
            self.offsets(),
            s.tolerances.curve,
        )
    }

    pub fn map_settings(&self) -> MapSettings {
        let t = &self.system.tolerances;
        MapSettings {
            integrator: self.integrator,
            tol_fix: t.fix,
            tol_hyp: t.hyp,
            tol_slope: t.slope,
            ..MapSettings::default()
        }
    }

    pub fn window_settings(&self) -> WindowSettings {
        WindowSettings {
            map: self.map_settings(),
            tol_tangent: self.system.tolerances.tangent,
            eps_floor: self.eps_floor,
            ..WindowSettings::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        let c = RunConfig::from_json("{}").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            RunConfig::from_json(r#"{"sytem": {}}"#),
            Err(Error::Config(_))
        ));
        assert!(RunConfig::from_json(r#"{"system": {"tolerances": {"fixx": 1.0}}}"#).is_err());
    }

    #[test]
    fn ranges_checked() {
        assert!(RunConfig::from_json(r#"{"system": {"k": 2.5}}"#)
            .unwrap()
            .model()
            .is_err());
        assert!(RunConfig::from_json(r#"{"system": {"family": "vdp"}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"system": {"delta_plus": 0.3}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"windows": {"n_min": 4, "n_max": 3}}"#).is_err());
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::default();
        c.system.delta_plus = Some(0.3);
        c.system.delta_minus = Some(0.3);
        let back = RunConfig::from_json(&c.to_canonical_json()).unwrap();
        assert_eq!(back, c);
        let m = back.model().unwrap();
        assert_eq!(m.geometry.delta_plus, 0.3);
    }

    #[test]
    fn tolerances_flow_into_settings() {
        let mut c = RunConfig::default();
        c.system.tolerances = c.system.tolerances.scaled(1e-3);
        let w = c.window_settings();
        approx::assert_relative_eq!(w.map.tol_fix, 1e-12, max_relative = 1e-12);
        approx::assert_relative_eq!(w.tol_tangent, 1e-9, max_relative = 1e-12);
    }
}
