//! Dense density matrices and Lindblad models.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-9;

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// `max |m - m†|`.
pub fn hermiticity_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Eigenvalues of the Hermitian part of `m`, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let herm = (m + m.adjoint()).scale(0.5);
    let mut ev: Vec<f64> = SymmetricEigen::new(herm).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m).first().copied().unwrap_or(0.0)
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// A Hermitian, positive semidefinite, unit-trace matrix over a labelled basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: CMatrix,
    labels: Vec<String>,
}

impl DensityMatrix {
    pub fn new(entries: CMatrix) -> Result<Self> {
        let labels = (0..entries.nrows()).map(|i| i.to_string()).collect();
        Self::with_labels(entries, labels)
    }

    pub fn with_labels(entries: CMatrix, labels: Vec<String>) -> Result<Self> {
        let k = entries.nrows();
        if k == 0 || entries.ncols() != k {
            return Err(Error::shape("density matrix", "non-empty square", format!("{}x{}", k, entries.ncols())));
        }
        if labels.len() != k {
            return Err(Error::shape("density matrix labels", k, labels.len()));
        }
        let scale = max_abs(&entries).max(1.0);
        let herm = hermiticity_deviation(&entries);
        if herm > HERMITIAN_TOL * scale {
            return Err(Error::Validation(format!("density matrix not Hermitian (deviation {herm:.3e})")));
        }
        let tr = entries.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::Validation(format!("density matrix trace {tr} differs from 1")));
        }
        let min_ev = min_eigenvalue(&entries);
        if min_ev < -PSD_TOL {
            return Err(Error::Validation(format!("density matrix has negative eigenvalue {min_ev:.3e}")));
        }
        Ok(DensityMatrix { entries, labels })
    }

    /// `|psi><psi|` for the normalized `psi`.
    pub fn pure(psi: &CVector) -> Result<Self> {
        let norm = psi.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Validation("state vector has zero or non-finite norm".into()));
        }
        let v = psi.unscale(norm);
        Self::new(&v * v.adjoint())
    }

    /// Uniform mixture over the span of `basis` (columns need not be orthonormal).
    pub fn maximally_mixed_on(basis: &[CVector]) -> Result<Self> {
        let q = orthonormalize(basis)?;
        let m = q.ncols() as f64;
        Self::new((&q * q.adjoint()).unscale(m))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_matrix(self) -> CMatrix {
        self.entries
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn purity(&self) -> f64 {
        purity(&self.entries)
    }
}

/// `Tr ρ²` for a Hermitian `ρ`.
pub fn purity(rho: &CMatrix) -> f64 {
    rho.iter().map(|z| z.norm_sqr()).sum()
}

/// Orthonormal columns spanning `vectors`; fails on rank deficiency.
pub fn orthonormalize(vectors: &[CVector]) -> Result<CMatrix> {
    let first = vectors.first().ok_or_else(|| Error::Precondition("empty basis".into()))?;
    let k = first.len();
    let mut out: Vec<CVector> = Vec::with_capacity(vectors.len());
    for (idx, v) in vectors.iter().enumerate() {
        if v.len() != k {
            return Err(Error::shape(format!("basis vector {idx}"), k, v.len()));
        }
        let scale = v.norm();
        // Two passes of Gram-Schmidt.
        let mut w = v.clone();
        for _ in 0..2 {
            for u in &out {
                let proj = u.dotc(&w);
                w -= u * proj;
            }
        }
        let n = w.norm();
        if !(n > 1e-10 * scale) || scale == 0.0 {
            return Err(Error::Precondition(format!("basis is rank deficient at vector {idx}")));
        }
        out.push(w.unscale(n));
    }
    Ok(CMatrix::from_columns(&out))
}

/// `H`, jump operators `F_ν` and the coupling matrix `a_νμ` of a Lindblad
/// master equation. `ħ = 1`, so `H` is in rad/s.
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladModel {
    hamiltonian: CMatrix,
    jump_ops: Vec<CMatrix>,
    coupling: CMatrix,
}

/// One failed invariant of a [`LindbladModel`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    NonHermitianHamiltonian { deviation: f64 },
    NonHermitianCoupling { deviation: f64 },
    CouplingNotPsd { min_eigenvalue: f64 },
    NonFinite { what: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl LindbladModel {
    /// Checks shapes only; use [`validate_model`] for the physical invariants.
    pub fn new(hamiltonian: CMatrix, jump_ops: Vec<CMatrix>, coupling: CMatrix) -> Result<Self> {
        let k = hamiltonian.nrows();
        if k == 0 || hamiltonian.ncols() != k {
            return Err(Error::shape(
                "hamiltonian",
                "non-empty square",
                format!("{}x{}", k, hamiltonian.ncols()),
            ));
        }
        for (idx, f) in jump_ops.iter().enumerate() {
            if f.nrows() != k || f.ncols() != k {
                return Err(Error::shape(
                    format!("jump operator {idx}"),
                    format!("{k}x{k}"),
                    format!("{}x{}", f.nrows(), f.ncols()),
                ));
            }
        }
        let m = jump_ops.len();
        if coupling.nrows() != m || coupling.ncols() != m {
            return Err(Error::shape(
                "coupling",
                format!("{m}x{m}"),
                format!("{}x{}", coupling.nrows(), coupling.ncols()),
            ));
        }
        Ok(LindbladModel { hamiltonian, jump_ops, coupling })
    }

    /// Jump operators with independent channels, `a = diag(rates)`.
    pub fn diagonal_coupling(hamiltonian: CMatrix, jump_ops: Vec<CMatrix>, rates: &[f64]) -> Result<Self> {
        if rates.len() != jump_ops.len() {
            return Err(Error::shape("rates", jump_ops.len(), rates.len()));
        }
        let coupling = CMatrix::from_diagonal(&CVector::from_iterator(
            rates.len(),
            rates.iter().map(|&r| C64::new(r, 0.0)),
        ));
        Self::new(hamiltonian, jump_ops, coupling)
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        &self.hamiltonian
    }

    pub fn jump_ops(&self) -> &[CMatrix] {
        &self.jump_ops
    }

    pub fn coupling(&self) -> &CMatrix {
        &self.coupling
    }

    pub fn validate(&self) -> ValidationReport {
        validate_model(self)
    }

    /// Upper bound on the generator's spectral scale: `‖H‖_∞` plus
    /// `Σ |a_νμ| ‖F_ν‖_∞ ‖F_μ‖_∞`.
    pub fn rate_scale(&self) -> f64 {
        let row_norm = |m: &CMatrix| {
            (0..m.nrows())
                .map(|i| m.row(i).iter().map(|z| z.norm()).sum::<f64>())
                .fold(0.0, f64::max)
        };
        let f_norms: Vec<f64> = self.jump_ops.iter().map(row_norm).collect();
        let mut diss = 0.0;
        for (nu, fnu) in f_norms.iter().enumerate() {
            for (mu, fmu) in f_norms.iter().enumerate() {
                diss += self.coupling[(nu, mu)].norm() * fnu * fmu;
            }
        }
        row_norm(&self.hamiltonian) + diss
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        let model = file.into_model()?;
        let report = model.validate();
        if !report.is_valid() {
            return Err(Error::Validation(format!("invalid model: {:?}", report.violations)));
        }
        Ok(model)
    }

    /// Loads `{"hamiltonian": [[[re,im],...],...], "jump_ops": [...], "coupling": [...]}`
    /// and rejects models that fail [`validate_model`].
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        let file = ModelFile {
            hamiltonian: matrix_to_nested(&self.hamiltonian),
            jump_ops: self.jump_ops.iter().map(matrix_to_nested).collect(),
            coupling: matrix_to_nested(&self.coupling),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }
}

/// Lists every violated invariant: Hermitian `H` and `a` (to 1e-12 relative),
/// positive semidefinite `a` (minimum eigenvalue ≥ -1e-9 relative).
pub fn validate_model(model: &LindbladModel) -> ValidationReport {
    let mut report = ValidationReport::default();
    let finite = |m: &CMatrix| m.iter().all(|z| z.re.is_finite() && z.im.is_finite());
    if !finite(&model.hamiltonian) {
        report.violations.push(Violation::NonFinite { what: "hamiltonian".into() });
    }
    if !finite(&model.coupling) {
        report.violations.push(Violation::NonFinite { what: "coupling".into() });
    }
    for (i, f) in model.jump_ops.iter().enumerate() {
        if !finite(f) {
            report.violations.push(Violation::NonFinite { what: format!("jump operator {i}") });
        }
    }
    if !report.is_valid() {
        return report;
    }

    let h_scale = max_abs(&model.hamiltonian).max(1.0);
    let h_dev = hermiticity_deviation(&model.hamiltonian);
    if h_dev > HERMITIAN_TOL * h_scale {
        report.violations.push(Violation::NonHermitianHamiltonian { deviation: h_dev });
    }
    if model.coupling.nrows() > 0 {
        let a_scale = max_abs(&model.coupling).max(1.0);
        let a_dev = hermiticity_deviation(&model.coupling);
        if a_dev > HERMITIAN_TOL * a_scale {
            report.violations.push(Violation::NonHermitianCoupling { deviation: a_dev });
        }
        let min_ev = min_eigenvalue(&model.coupling);
        if min_ev < -PSD_TOL * a_scale {
            report.violations.push(Violation::CouplingNotPsd { min_eigenvalue: min_ev });
        }
    }
    report
}

type NestedMatrix = Vec<Vec<[f64; 2]>>;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    hamiltonian: NestedMatrix,
    #[serde(default)]
    jump_ops: Vec<NestedMatrix>,
    #[serde(default)]
    coupling: NestedMatrix,
}

impl ModelFile {
    fn into_model(self) -> Result<LindbladModel> {
        let h = nested_to_matrix(&self.hamiltonian, "hamiltonian")?;
        let ops = self
            .jump_ops
            .iter()
            .enumerate()
            .map(|(i, m)| nested_to_matrix(m, &format!("jump operator {i}")))
            .collect::<Result<Vec<_>>>()?;
        let coupling = if self.coupling.is_empty() {
            CMatrix::zeros(0, 0)
        } else {
            nested_to_matrix(&self.coupling, "coupling")?
        };
        LindbladModel::new(h, ops, coupling)
    }
}

fn nested_to_matrix(rows: &NestedMatrix, what: &str) -> Result<CMatrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != m {
            return Err(Error::shape(format!("{what} row {i}"), m, r.len()));
        }
    }
    Ok(CMatrix::from_fn(n, m, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))
}

fn matrix_to_nested(m: &CMatrix) -> NestedMatrix {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

/// Real diagonal matrix.
pub fn diag(values: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_iterator(
        values.len(),
        values.iter().map(|&v| C64::new(v, 0.0)),
    ))
}

/// Computational basis vector `e_i` of length `k`.
pub fn basis_vector(k: usize, i: usize) -> CVector {
    let mut v = CVector::zeros(k);
    v[i] = C64::new(1.0, 0.0);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn real(rows: &[&[f64]]) -> CMatrix {
        CMatrix::from_fn(rows.len(), rows[0].len(), |i, j| C64::new(rows[i][j], 0.0))
    }

    #[test]
    fn identity_coupling_is_valid() {
        let m = LindbladModel::new(CMatrix::zeros(2, 2), vec![diag(&[1.0, -1.0]), diag(&[0.0, 1.0])], CMatrix::identity(2, 2))
            .unwrap();
        assert!(validate_model(&m).is_valid());
    }

    #[test]
    fn indefinite_coupling_is_invalid() {
        let m = LindbladModel::new(
            CMatrix::zeros(2, 2),
            vec![diag(&[1.0, -1.0]), diag(&[0.0, 1.0])],
            real(&[&[0.0, 1.0], &[1.0, 0.0]]),
        )
        .unwrap();
        let report = validate_model(&m);
        assert_eq!(report.violations.len(), 1);
        match report.violations[0] {
            Violation::CouplingNotPsd { min_eigenvalue } => assert!((min_eigenvalue + 1.0).abs() < 1e-12),
            ref v => panic!("unexpected violation {v:?}"),
        }
    }

    #[test]
    fn small_hamiltonian_asymmetry_is_reported() {
        let h = real(&[&[1.0, 0.5 + 1e-6], &[0.5, -1.0]]);
        let m = LindbladModel::new(h, vec![], CMatrix::zeros(0, 0)).unwrap();
        let report = validate_model(&m);
        assert!(matches!(report.violations[..], [Violation::NonHermitianHamiltonian { deviation }] if (deviation - 1e-6).abs() < 1e-12));
    }

    #[test]
    fn shape_mismatch_names_operator() {
        let err = LindbladModel::new(CMatrix::zeros(2, 2), vec![CMatrix::zeros(2, 2), CMatrix::zeros(3, 3)], CMatrix::identity(2, 2))
            .unwrap_err();
        assert!(err.to_string().contains("jump operator 1"), "{err}");
        assert!(LindbladModel::new(CMatrix::zeros(2, 2), vec![CMatrix::zeros(2, 2)], CMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn json_round_trip_and_rejection() {
        let text = r#"{"hamiltonian": [[[0,0],[0,0]],[[0,0],[0,0]]],
                       "jump_ops": [[[[1,0],[0,0]],[[0,0],[-1,0]]]],
                       "coupling": [[[1,0]]]}"#;
        let m = LindbladModel::from_json_str(text).unwrap();
        assert_eq!(m.jump_ops().len(), 1);
        let again = LindbladModel::from_json_str(&m.to_json_string().unwrap()).unwrap();
        assert_eq!(m, again);
        let bad = text.replace("[[[1,0]]]", "[[[-1,0]]]");
        assert!(LindbladModel::from_json_str(&bad).is_err());
    }

    #[test]
    fn density_matrix_checks() {
        assert!(DensityMatrix::new(diag(&[0.5, 0.5])).is_ok());
        assert!(DensityMatrix::new(diag(&[0.6, 0.5])).is_err());
        assert!(DensityMatrix::new(diag(&[1.5, -0.5])).is_err());
        let mut m = diag(&[0.5, 0.5]);
        m[(0, 1)] = C64::new(0.1, 0.0);
        assert!(DensityMatrix::new(m).is_err());
    }

    #[test]
    fn rank_deficient_basis_rejected() {
        let a = basis_vector(3, 0);
        let b = a.scale(2.0);
        assert!(orthonormalize(&[a, b]).is_err());
    }
}
