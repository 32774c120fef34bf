//! Collapse-rate arithmetic: `λ = γ (α/4π)^{d/2}`, the center-of-mass rate
//! `Γ = λ n² N`, and log-spaced scans over `(λ, r_c)`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::CslParams;

const NM_TO_M: f64 = 1e-9;

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::Validation(format!("{name} must be finite and >= 0, got {v}")));
    }
    Ok(())
}

/// Single-particle localization rate `λ` (s⁻¹) for hitting rate `gamma`
/// (nm^d s⁻¹) at the localization length of `params`.
pub fn lambda_from_gamma(gamma: f64, params: &CslParams) -> Result<f64> {
    check_nonneg("gamma", gamma)?;
    Ok(gamma * params.overlap_peak())
}

pub fn gamma_from_lambda(lambda: f64, params: &CslParams) -> Result<f64> {
    check_nonneg("lambda", lambda)?;
    Ok(lambda / params.overlap_peak())
}

/// `Γ = λ n² N` (s⁻¹).
pub fn collapse_rate(lambda: f64, n: f64, n_volumes: f64) -> Result<f64> {
    check_nonneg("lambda", lambda)?;
    check_nonneg("n", n)?;
    check_nonneg("n_volumes", n_volumes)?;
    Ok(lambda * n * n * n_volumes)
}

/// `1/Γ`, or `None` when nothing collapses.
pub fn coherence_limit(gamma_collapse: f64) -> Option<f64> {
    (gamma_collapse > 0.0).then(|| 1.0 / gamma_collapse)
}

/// Constituents per `r_c³` volume for a density in m⁻³ GHz⁻¹ over a
/// frequency window in GHz.
pub fn constituents_per_volume(density: f64, window_ghz: f64, rc_nm: f64) -> f64 {
    let side = rc_nm * NM_TO_M;
    density * window_ghz * side * side * side
}

/// Closed rectangle in `(λ, r_c)` marked as excluded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub rc_min: f64,
    pub rc_max: f64,
}

impl Exclusion {
    pub fn contains(&self, lambda: f64, rc: f64) -> bool {
        (self.lambda_min..=self.lambda_max).contains(&lambda) && (self.rc_min..=self.rc_max).contains(&rc)
    }
}

/// Reads a JSON list of [`Exclusion`] rectangles.
pub fn read_exclusions(path: impl AsRef<std::path::Path>) -> Result<Vec<Exclusion>> {
    let list: Vec<Exclusion> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    for e in &list {
        if !(e.lambda_min <= e.lambda_max && e.rc_min <= e.rc_max) {
            return Err(Error::Validation(format!("exclusion {e:?} has inverted bounds")));
        }
    }
    Ok(list)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRecord {
    pub lambda: f64,
    pub rc: f64,
    pub density: f64,
    pub n_per_volume: f64,
    pub n_volumes: f64,
    pub gamma_collapse: f64,
    pub coherence_limit: Option<f64>,
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub rc_min: f64,
    pub rc_max: f64,
    /// Grid points per axis, endpoints included.
    pub cells: usize,
    /// TLS densities in m⁻³ GHz⁻¹.
    pub densities: Vec<f64>,
    pub window_ghz: f64,
    pub n_volumes: f64,
    pub exclusions: Vec<Exclusion>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            lambda_min: 1e-20,
            lambda_max: 1e-10,
            rc_min: 1.0,
            rc_max: 1e6,
            cells: 64,
            densities: vec![1e20],
            window_ghz: 1.0,
            n_volumes: 1.0,
            exclusions: Vec::new(),
        }
    }
}

impl ScanConfig {
    fn validate(&self) -> Result<()> {
        for (name, lo, hi) in [("lambda", self.lambda_min, self.lambda_max), ("rc", self.rc_min, self.rc_max)] {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
                return Err(Error::Validation(format!("{name} range [{lo}, {hi}] must be positive with min < max")));
            }
        }
        if self.cells < 2 {
            return Err(Error::Validation(format!("need at least 2 cells per axis, got {}", self.cells)));
        }
        if self.densities.is_empty() {
            return Err(Error::Validation("no densities given".into()));
        }
        for &d in &self.densities {
            check_nonneg("density", d)?;
        }
        check_nonneg("window_ghz", self.window_ghz)?;
        check_nonneg("n_volumes", self.n_volumes)?;
        Ok(())
    }
}

/// `cells` log-spaced values from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, cells: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..cells)
        .map(|i| match i {
            0 => lo,
            i if i + 1 == cells => hi,
            i => (a + (b - a) * i as f64 / (cells - 1) as f64).exp(),
        })
        .collect()
}

/// Every `(λ, r_c, density)` combination, λ-major, then `r_c`, then density.
pub fn scan(config: &ScanConfig) -> Result<Vec<ScanRecord>> {
    config.validate()?;
    let lambdas = log_space(config.lambda_min, config.lambda_max, config.cells);
    let rcs = log_space(config.rc_min, config.rc_max, config.cells);
    let rows: Vec<Vec<ScanRecord>> = lambdas
        .par_iter()
        .map(|&lambda| {
            let mut row = Vec::with_capacity(rcs.len() * config.densities.len());
            for &rc in &rcs {
                let excluded = config.exclusions.iter().any(|e| e.contains(lambda, rc));
                for &density in &config.densities {
                    let n = constituents_per_volume(density, config.window_ghz, rc);
                    let gamma_collapse = lambda * n * n * config.n_volumes;
                    row.push(ScanRecord {
                        lambda,
                        rc,
                        density,
                        n_per_volume: n,
                        n_volumes: config.n_volumes,
                        gamma_collapse,
                        coherence_limit: coherence_limit(gamma_collapse),
                        excluded,
                    });
                }
            }
            row
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

pub const SCAN_CSV_HEADER: &str = "lambda_s^-1,rc_nm,density_m^-3GHz^-1,n,N_volumes,Gamma_s^-1,coherence_s,excluded";

/// Nine significant digits in scientific notation; the coherence column is
/// empty when `Γ = 0`.
pub fn write_scan_csv<W: Write>(mut out: W, records: &[ScanRecord]) -> Result<()> {
    writeln!(out, "{SCAN_CSV_HEADER}")?;
    for r in records {
        let coherence = r.coherence_limit.map(|c| format!("{c:.8e}")).unwrap_or_default();
        writeln!(
            out,
            "{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{},{}",
            r.lambda, r.rc, r.density, r.n_per_volume, r.n_volumes, r.gamma_collapse, coherence, r.excluded
        )?;
    }
    Ok(())
}
