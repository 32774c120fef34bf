//! Time evolution under a Lindblad master equation.
//!
//! Two paths: a dense fixed-step RK4 integrator for arbitrary models, and the
//! exact elementwise solution on the configuration basis, where CSL acts as
//! pure dephasing `ρ_ij(t) = ρ_ij(0) exp(-i(h_i - h_j)t - D_ij t)`.

use std::io::Write;

use num_complex::Complex64 as C64;

use crate::config::ParticleConfiguration;
use crate::csl::DephasingMatrix;
use crate::error::{Error, Result};
use crate::model::{hermiticity_deviation, min_eigenvalue, CMatrix, DensityMatrix, LindbladModel};

/// Certified bounds for a completed run.
pub const TRACE_DRIFT_BOUND: f64 = 1e-8;
pub const HERMITICITY_BOUND: f64 = 1e-10;
pub const MIN_EIGENVALUE_BOUND: f64 = -1e-7;

/// Mid-run abort thresholds.
const ABORT_TRACE: f64 = 1e-6;
const ABORT_HERMITICITY: f64 = 1e-6;
const ABORT_EIGENVALUE: f64 = -1e-4;

/// Largest accepted `dt` times the generator's spectral scale.
pub const MAX_STEP_SCALE: f64 = 0.1;

/// `½ Σ_νμ a_νμ ([F_ν, ρ F_μ†] + [F_ν ρ, F_μ†])`.
pub fn dissipator(rho: &CMatrix, model: &LindbladModel) -> Result<CMatrix> {
    let k = model.dim();
    if rho.nrows() != k || rho.ncols() != k {
        return Err(Error::shape("density matrix vs model", format!("{k}x{k}"), format!("{}x{}", rho.nrows(), rho.ncols())));
    }
    Ok(Generator::new(model).dissipator(rho))
}

/// Precomputed pieces of `dρ/dt = -i[H, ρ] + L[ρ]`.
struct Generator<'a> {
    model: &'a LindbladModel,
    adjoints: Vec<CMatrix>,
    /// `Σ_νμ a_νμ F_μ† F_ν`.
    anti: CMatrix,
}

impl<'a> Generator<'a> {
    fn new(model: &'a LindbladModel) -> Self {
        let k = model.dim();
        let ops = model.jump_ops();
        let a = model.coupling();
        let adjoints: Vec<CMatrix> = ops.iter().map(|f| f.adjoint()).collect();
        let mut anti = CMatrix::zeros(k, k);
        for (nu, f_nu) in ops.iter().enumerate() {
            for (mu, f_mu_dag) in adjoints.iter().enumerate() {
                let c = a[(nu, mu)];
                if c != C64::new(0.0, 0.0) {
                    anti += (f_mu_dag * f_nu) * c;
                }
            }
        }
        Generator { model, adjoints, anti }
    }

    fn dissipator(&self, rho: &CMatrix) -> CMatrix {
        let ops = self.model.jump_ops();
        let a = self.model.coupling();
        let k = rho.nrows();
        let f_rho: Vec<CMatrix> = ops.iter().map(|f| f * rho).collect();
        let mut out = CMatrix::zeros(k, k);
        for (mu, f_mu_dag) in self.adjoints.iter().enumerate() {
            let mut s = CMatrix::zeros(k, k);
            let mut any = false;
            for (nu, fr) in f_rho.iter().enumerate() {
                let c = a[(nu, mu)];
                if c != C64::new(0.0, 0.0) {
                    s += fr * c;
                    any = true;
                }
            }
            if any {
                out += s * f_mu_dag;
            }
        }
        out -= (&self.anti * rho + rho * &self.anti).scale(0.5);
        out
    }

    fn rhs(&self, rho: &CMatrix) -> CMatrix {
        let h = self.model.hamiltonian();
        let unitary = (h * rho - rho * h) * C64::new(0.0, -1.0);
        unitary + self.dissipator(rho)
    }
}

/// Worst-case invariant deviations seen during a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub max_trace_deviation: f64,
    pub max_hermiticity_deviation: f64,
    pub min_eigenvalue: f64,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Diagnostics {
            max_trace_deviation: 0.0,
            max_hermiticity_deviation: 0.0,
            min_eigenvalue: f64::INFINITY,
        }
    }
}

impl Diagnostics {
    fn observe(&mut self, rho: &CMatrix) {
        let tr = rho.trace();
        self.max_trace_deviation = self.max_trace_deviation.max((tr - C64::new(1.0, 0.0)).norm());
        self.max_hermiticity_deviation = self.max_hermiticity_deviation.max(hermiticity_deviation(rho));
        self.min_eigenvalue = self.min_eigenvalue.min(min_eigenvalue(rho));
    }

    pub fn within_certified_bounds(&self) -> bool {
        self.max_trace_deviation <= TRACE_DRIFT_BOUND
            && self.max_hermiticity_deviation <= HERMITICITY_BOUND
            && self.min_eigenvalue >= MIN_EIGENVALUE_BOUND
    }

    fn abort_reason(&self, rho: &CMatrix) -> Option<String> {
        if rho.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Some("non-finite density matrix entry".into());
        }
        if self.max_trace_deviation > ABORT_TRACE {
            return Some(format!("trace drift {:.3e}", self.max_trace_deviation));
        }
        if self.max_hermiticity_deviation > ABORT_HERMITICITY {
            return Some(format!("Hermiticity drift {:.3e}", self.max_hermiticity_deviation));
        }
        if self.min_eigenvalue < ABORT_EIGENVALUE {
            return Some(format!("negative eigenvalue {:.3e}", self.min_eigenvalue));
        }
        None
    }
}

/// Sampled density matrices of one run.
#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub times: Vec<f64>,
    pub states: Vec<CMatrix>,
    pub diagnostics: Diagnostics,
}

impl EvolutionResult {
    /// `ρ_ij(t)` at every recorded time.
    pub fn entry(&self, i: usize, j: usize) -> Vec<C64> {
        self.states.iter().map(|s| s[(i, j)]).collect()
    }

    pub fn final_state(&self) -> &CMatrix {
        self.states.last().expect("at least the initial state is recorded")
    }

    /// CSV with header `t,rho_i_j_abs,rho_i_j_arg,...`, one row per time.
    pub fn write_csv<W: Write>(&self, mut out: W, entries: &[(usize, usize)]) -> Result<()> {
        write!(out, "t")?;
        for (i, j) in entries {
            write!(out, ",rho_{i}_{j}_abs,rho_{i}_{j}_arg")?;
        }
        writeln!(out)?;
        for (t, s) in self.times.iter().zip(&self.states) {
            write!(out, "{t:.8e}")?;
            for &(i, j) in entries {
                let z = s[(i, j)];
                write!(out, ",{:.8e},{:.8e}", z.norm(), z.arg())?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

fn step_count(t_max: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::StepSize(format!("dt must be finite and > 0, got {dt}")));
    }
    if !(t_max.is_finite() && t_max >= 0.0) {
        return Err(Error::StepSize(format!("t_max must be finite and >= 0, got {t_max}")));
    }
    if t_max == 0.0 {
        return Ok((0, dt));
    }
    let n = (t_max / dt - 1e-9).ceil().max(1.0);
    if n > 1e8 {
        return Err(Error::StepSize(format!("{n} steps requested")));
    }
    Ok((n as usize, t_max / n))
}

/// Fixed-step classic RK4 on `dρ/dt = -i[H, ρ] + L[ρ]`, recording every
/// step. The trace is never renormalized; drift shows up in the diagnostics.
///
/// The step count is `ceil(t_max/dt)` with the step shrunk so that the last
/// sample lands on `t_max`.
pub fn evolve(model: &LindbladModel, rho0: &DensityMatrix, t_max: f64, dt: f64) -> Result<EvolutionResult> {
    let report = model.validate();
    if !report.is_valid() {
        return Err(Error::Validation(format!("invalid model: {:?}", report.violations)));
    }
    if rho0.dim() != model.dim() {
        return Err(Error::shape("initial state vs model", model.dim(), rho0.dim()));
    }
    let (n, h) = step_count(t_max, dt)?;
    let scale = model.rate_scale();
    if h * scale > MAX_STEP_SCALE {
        return Err(Error::StepSize(format!(
            "dt = {h:.3e} too large for generator scale {scale:.3e} (dt * scale must be <= {MAX_STEP_SCALE})"
        )));
    }

    let gen = Generator::new(model);
    let mut rho = rho0.matrix().clone();
    let mut diagnostics = Diagnostics::default();
    diagnostics.observe(&rho);
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    times.push(0.0);
    states.push(rho.clone());

    for step in 1..=n {
        let k1 = gen.rhs(&rho);
        let k2 = gen.rhs(&(&rho + &k1 * C64::new(0.5 * h, 0.0)));
        let k3 = gen.rhs(&(&rho + &k2 * C64::new(0.5 * h, 0.0)));
        let k4 = gen.rhs(&(&rho + &k3 * C64::new(h, 0.0)));
        rho += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * C64::new(h / 6.0, 0.0);
        diagnostics.observe(&rho);
        let t = step as f64 * h;
        if let Some(reason) = diagnostics.abort_reason(&rho) {
            return Err(Error::Aborted { time: t, reason });
        }
        times.push(t);
        states.push(rho.clone());
    }
    Ok(EvolutionResult { times, states, diagnostics })
}

/// Exact pure-dephasing evolution on the configuration basis:
/// `ρ_ij(t) = ρ_ij(0) exp(-i(h_i - h_j)t - D_ij t)`, sampled on the same time
/// grid as [`evolve`].
pub fn evolve_config_basis(
    basis: &[ParticleConfiguration],
    dephasing: &DephasingMatrix,
    hamiltonian_diag: Option<&[f64]>,
    rho0: &DensityMatrix,
    t_max: f64,
    dt: f64,
) -> Result<EvolutionResult> {
    let k = basis.len();
    if dephasing.dim() != k {
        return Err(Error::shape("dephasing matrix vs basis", k, dephasing.dim()));
    }
    if rho0.dim() != k {
        return Err(Error::shape("initial state vs basis", k, rho0.dim()));
    }
    let zeros = vec![0.0; k];
    let h = match hamiltonian_diag {
        Some(h) if h.len() != k => return Err(Error::shape("hamiltonian diagonal", k, h.len())),
        Some(h) => h,
        None => &zeros,
    };
    let (n, step) = step_count(t_max, dt)?;
    let rho_init = rho0.matrix();
    let mut diagnostics = Diagnostics::default();
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    for s in 0..=n {
        let t = s as f64 * step;
        let rho = CMatrix::from_fn(k, k, |i, j| {
            if i == j {
                rho_init[(i, i)]
            } else {
                let phase = C64::new(-dephasing.get(i, j) * t, -(h[i] - h[j]) * t);
                rho_init[(i, j)] * phase.exp()
            }
        });
        diagnostics.observe(&rho);
        times.push(t);
        states.push(rho);
    }
    Ok(EvolutionResult { times, states, diagnostics })
}

/// Least-squares fit of `-ln|v(t)| = rate * t + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub rate: f64,
    pub intercept: f64,
    /// RMS deviation of `-ln|v|` from the fitted line.
    pub residual: f64,
    pub samples_used: usize,
    /// The trajectory underflowed below `1e-14` and the tail was dropped.
    pub truncated: bool,
}

pub const UNDERFLOW_FLOOR: f64 = 1e-14;
pub const MIN_FIT_SAMPLES: usize = 10;

pub fn extract_decay_rate(times: &[f64], values: &[C64]) -> Result<DecayFit> {
    if times.len() != values.len() {
        return Err(Error::shape("trajectory", times.len(), values.len()));
    }
    if times.len() < MIN_FIT_SAMPLES {
        return Err(Error::Fit(format!("need at least {MIN_FIT_SAMPLES} samples, got {}", times.len())));
    }
    if values[0].norm() < UNDERFLOW_FLOOR {
        return Err(Error::Fit("trajectory starts at zero".into()));
    }
    let cut = values.iter().position(|v| v.norm() < UNDERFLOW_FLOOR).unwrap_or(values.len());
    let truncated = cut < values.len();
    if cut < 3 {
        return Err(Error::Fit(format!("only {cut} samples above the underflow floor")));
    }
    let t = &times[..cut];
    // Offsetting by the first sample keeps a constant trajectory exactly flat.
    let y0 = -values[0].norm().ln();
    let y: Vec<f64> = values[..cut].iter().map(|v| -v.norm().ln() - y0).collect();
    let n = cut as f64;
    let t_mean = t.iter().sum::<f64>() / n;
    let y_mean = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (ti, yi) in t.iter().zip(&y) {
        sxx += (ti - t_mean) * (ti - t_mean);
        sxy += (ti - t_mean) * (yi - y_mean);
    }
    if sxx <= 0.0 {
        return Err(Error::Fit("sample times are all equal".into()));
    }
    let rate = sxy / sxx;
    let intercept = y_mean - rate * t_mean;
    let sq: f64 = t.iter().zip(&y).map(|(ti, yi)| (yi - rate * ti - intercept).powi(2)).sum();
    Ok(DecayFit {
        rate,
        intercept: intercept + y0,
        residual: (sq / n).sqrt(),
        samples_used: cut,
        truncated,
    })
}
