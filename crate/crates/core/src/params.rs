//! Collapse-model constants.
//!
//! Units throughout the crate: lengths in nm, times in s, ħ = 1 so that
//! Hamiltonian entries are angular frequencies (rad/s).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Localization length conventionally quoted for CSL (nm).
pub const DEFAULT_RC_NM: f64 = 100.0;
/// Hitting-rate constant conventionally quoted for CSL (nm³/s).
pub const DEFAULT_GAMMA_NM3_PER_S: f64 = 1e-9;

/// CSL parameters: `alpha = 1/r_c²` (nm⁻²), `gamma` (nm^d/s) and the
/// spatial dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct CslParams {
    alpha: f64,
    gamma: f64,
    dim: usize,
}

#[derive(Deserialize)]
struct RawParams {
    alpha: f64,
    gamma: f64,
    dim: usize,
}

impl TryFrom<RawParams> for CslParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        CslParams::new(raw.alpha, raw.gamma, raw.dim)
    }
}

impl CslParams {
    pub fn new(alpha: f64, gamma: f64, dim: usize) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::Validation(format!("alpha must be finite and > 0, got {alpha}")));
        }
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::Validation(format!("gamma must be finite and >= 0, got {gamma}")));
        }
        if !(1..=3).contains(&dim) {
            return Err(Error::Validation(format!("spatial dimension must be 1, 2 or 3, got {dim}")));
        }
        let rc = 1.0 / alpha.sqrt();
        if !(rc.is_finite() && rc > 0.0) {
            return Err(Error::Validation(format!("r_c = 1/sqrt(alpha) is not finite for alpha = {alpha}")));
        }
        Ok(CslParams { alpha, gamma, dim })
    }

    /// Parameters from a localization length `r_c` (nm) instead of `alpha`.
    pub fn from_rc(rc: f64, gamma: f64, dim: usize) -> Result<Self> {
        if !(rc.is_finite() && rc > 0.0) {
            return Err(Error::Validation(format!("r_c must be finite and > 0, got {rc}")));
        }
        Self::new(1.0 / (rc * rc), gamma, dim)
    }

    /// `r_c = 100 nm`, `gamma = 1e-9 nm³/s`, three dimensions.
    pub fn standard() -> Self {
        Self::from_rc(DEFAULT_RC_NM, DEFAULT_GAMMA_NM3_PER_S, 3).expect("standard parameters are valid")
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rc(&self) -> f64 {
        1.0 / self.alpha.sqrt()
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.alpha, gamma, self.dim)
    }

    pub fn with_dim(&self, dim: usize) -> Result<Self> {
        Self::new(self.alpha, self.gamma, dim)
    }

    /// Peak of the smearing kernel, `(alpha/2π)^{d/2}`.
    pub fn kernel_peak(&self) -> f64 {
        (self.alpha / (2.0 * PI)).powf(self.dim as f64 / 2.0)
    }

    /// Self-overlap of the smearing kernel, `(alpha/4π)^{d/2}`.
    pub fn overlap_peak(&self) -> f64 {
        (self.alpha / (4.0 * PI)).powf(self.dim as f64 / 2.0)
    }

    /// Single-particle localization rate `lambda = gamma (alpha/4π)^{d/2}` (s⁻¹):
    /// the asymptotic dephasing rate of a one-particle superposition whose
    /// branches are separated by many `r_c`.
    pub fn localization_rate(&self) -> f64 {
        self.gamma * self.overlap_peak()
    }

    /// Positional tolerance used for configuration equality, `1e-12 r_c`.
    pub fn position_tolerance(&self) -> f64 {
        1e-12 * self.rc()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_values() {
        assert!(CslParams::new(0.0, 1.0, 3).is_err());
        assert!(CslParams::new(-1.0, 1.0, 3).is_err());
        assert!(CslParams::new(1.0, -1e-30, 3).is_err());
        assert!(CslParams::new(1.0, f64::NAN, 3).is_err());
        assert!(CslParams::new(1.0, 1.0, 0).is_err());
        assert!(CslParams::new(1.0, 1.0, 4).is_err());
        assert!(CslParams::new(1.0, 0.0, 1).is_ok());
    }

    #[test]
    fn rc_round_trip() {
        let p = CslParams::from_rc(250.0, 1e-9, 2).unwrap();
        assert!((p.rc() - 250.0).abs() < 1e-12);
        assert!((p.alpha() - 1.6e-5).abs() < 1e-18);
    }

    #[test]
    fn unit_kernel_peak() {
        let p = CslParams::new(2.0 * PI, 1.0, 3).unwrap();
        assert!((p.kernel_peak() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn json_validates() {
        let ok: CslParams = serde_json::from_str(r#"{"alpha":1.0,"gamma":2.0,"dim":2}"#).unwrap();
        assert_eq!(ok.dim(), 2);
        assert!(serde_json::from_str::<CslParams>(r#"{"alpha":-1.0,"gamma":2.0,"dim":2}"#).is_err());
    }
}
