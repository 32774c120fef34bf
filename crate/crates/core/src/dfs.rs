//! Decoherence-free subspace search for commuting Hermitian jump operators.
//!
//! A subspace is decoherence-free iff every vector in it is an eigenvector of
//! every jump operator with one eigenvalue per operator. For a commuting
//! Hermitian family the candidates are exactly the joint eigenspaces, found
//! here by sequential refinement: diagonalize the first operator, split into
//! eigenvalue clusters, project the next operator into each cluster, and
//! repeat.

use nalgebra::SymmetricEigen;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};

use crate::config::{bounding_box, ParticleConfiguration, Position};
use crate::csl::{self, DensityKind, ProbePoint};
use crate::error::{Error, Result};
use crate::lindblad::dissipator;
use crate::model::{
    commutator, hermiticity_deviation, max_abs, orthonormalize, CMatrix, CVector, DensityMatrix, LindbladModel,
};
use crate::params::CslParams;

/// Relative gap below which two eigenvalues are treated as degenerate.
pub const DEGENERACY_RTOL: f64 = 1e-9;
pub const DEGENERACY_ATOL: f64 = 1e-300;
/// Eigenvector residual tolerance, scaled by `1 + |c|`.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-8;
pub const HERMITIAN_INPUT_TOL: f64 = 1e-10;
pub const COMMUTATOR_TOL: f64 = 1e-8;

/// Orthonormal basis of a joint eigenspace and the scalar `c_ν` by which each
/// operator acts on it.
#[derive(Debug, Clone, PartialEq)]
pub struct JointEigenspace {
    pub basis: Vec<CVector>,
    pub eigenvalues: Vec<C64>,
}

impl JointEigenspace {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Orthogonal projector onto the subspace.
    pub fn projector(&self) -> CMatrix {
        let q = CMatrix::from_columns(&self.basis);
        &q * q.adjoint()
    }
}

fn check_family(ops: &[CMatrix]) -> Result<usize> {
    let k = ops.first().map_or(0, |m| m.nrows());
    for (i, op) in ops.iter().enumerate() {
        if op.nrows() != k || op.ncols() != k || k == 0 {
            return Err(Error::shape(format!("operator {i}"), format!("{k}x{k}"), format!("{}x{}", op.nrows(), op.ncols())));
        }
        let dev = hermiticity_deviation(op);
        if dev > HERMITIAN_INPUT_TOL * max_abs(op).max(1.0) {
            return Err(Error::Precondition(format!("operator {i} is not Hermitian (deviation {dev:.3e})")));
        }
    }
    for i in 0..ops.len() {
        for j in (i + 1)..ops.len() {
            let scale = (max_abs(&ops[i]) * max_abs(&ops[j])).max(f64::MIN_POSITIVE);
            let norm = max_abs(&commutator(&ops[i], &ops[j]));
            if norm > COMMUTATOR_TOL * scale {
                return Err(Error::NonCommuting { first: i, second: j, norm });
            }
        }
    }
    Ok(k)
}

fn is_diagonal(m: &CMatrix) -> bool {
    let n = m.nrows();
    (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == C64::new(0.0, 0.0)))
}

/// Groups sorted-by-value indices into clusters, chaining neighbours whose gap
/// is within `max(rtol * max(|a|,|b|), atol)`.
fn cluster_sorted(order: &[usize], values: &[f64], atol: f64) -> Vec<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (pos, &idx) in order.iter().enumerate() {
        if pos > 0 {
            let prev = values[order[pos - 1]];
            let cur = values[idx];
            let tol = (DEGENERACY_RTOL * prev.abs().max(cur.abs())).max(atol);
            if (cur - prev).abs() <= tol {
                clusters.last_mut().expect("cluster exists").push(idx);
                continue;
            }
        }
        clusters.push(vec![idx]);
    }
    clusters
}

fn sorted_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    order
}

/// Index groups with equal value tuples across every diagonal.
///
/// `diagonals[ν][i]` is the `i`-th diagonal entry of operator `ν`. Groups come
/// back sorted by value tuple.
pub fn joint_degenerate_diagonal(diagonals: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let k = diagonals.first().map_or(0, Vec::len);
    let mut blocks: Vec<Vec<usize>> = vec![(0..k).collect()];
    for values in diagonals {
        let mut next = Vec::new();
        for block in blocks {
            let local: Vec<f64> = block.iter().map(|&i| values[i]).collect();
            let order = sorted_order(&local);
            for cluster in cluster_sorted(&order, &local, DEGENERACY_ATOL) {
                let mut members: Vec<usize> = cluster.iter().map(|&c| block[c]).collect();
                members.sort_unstable();
                next.push(members);
            }
        }
        blocks = next;
    }
    blocks.sort_by(|a, b| {
        for values in diagonals {
            match values[a[0]].total_cmp(&values[b[0]]) {
                std::cmp::Ordering::Equal => continue,
                ord => return ord,
            }
        }
        a[0].cmp(&b[0])
    });
    blocks
}

/// Joint eigenspaces of a commuting Hermitian family. The returned subspaces
/// partition the full space; those of dimension ≥ 2 are DFS candidates.
pub fn joint_degenerate_subspaces(ops: &[CMatrix]) -> Result<Vec<JointEigenspace>> {
    if ops.is_empty() {
        return Err(Error::Precondition("need at least one operator".into()));
    }
    let k = check_family(ops)?;

    if ops.iter().all(is_diagonal) {
        let diagonals: Vec<Vec<f64>> = ops.iter().map(|m| m.diagonal().iter().map(|z| z.re).collect()).collect();
        return Ok(joint_degenerate_diagonal(&diagonals)
            .into_iter()
            .map(|members| {
                let eigenvalues = ops
                    .iter()
                    .map(|m| {
                        let s: C64 = members.iter().map(|&i| m[(i, i)]).sum();
                        s / members.len() as f64
                    })
                    .collect();
                let basis = members.iter().map(|&i| crate::model::basis_vector(k, i)).collect();
                JointEigenspace { basis, eigenvalues }
            })
            .collect());
    }

    let mut blocks: Vec<CMatrix> = vec![CMatrix::identity(k, k)];
    for op in ops {
        let atol = (64.0 * f64::EPSILON * op.norm()).max(DEGENERACY_ATOL);
        let mut next = Vec::new();
        for q in blocks {
            let projected = q.adjoint() * op * &q;
            let herm = (&projected + projected.adjoint()).scale(0.5);
            let eig = SymmetricEigen::new(herm);
            let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            let order = sorted_order(&values);
            for cluster in cluster_sorted(&order, &values, atol) {
                let cols: Vec<CVector> = cluster.iter().map(|&c| eig.eigenvectors.column(c).into_owned()).collect();
                next.push(&q * CMatrix::from_columns(&cols));
            }
        }
        blocks = next;
    }

    let mut spaces: Vec<JointEigenspace> = blocks
        .into_iter()
        .map(|q| {
            let m = q.ncols() as f64;
            let eigenvalues = ops.iter().map(|op| (q.adjoint() * op * &q).trace() / m).collect();
            let basis = (0..q.ncols()).map(|c| q.column(c).into_owned()).collect();
            JointEigenspace { basis, eigenvalues }
        })
        .collect();
    spaces.sort_by(|a, b| {
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            match x.re.total_cmp(&y.re) {
                std::cmp::Ordering::Equal => continue,
                ord => return ord,
            }
        }
        std::cmp::Ordering::Equal
    });
    Ok(spaces)
}

/// Outcome of [`is_dfs`].
#[derive(Debug, Clone, PartialEq)]
pub struct DfsCheck {
    pub is_dfs: bool,
    /// `max_{ν,k} |F_ν k̃ - c_ν k̃|` over the normalized basis vectors.
    pub residual: f64,
    /// Common eigenvalue `c_ν` per operator (mean Rayleigh quotient).
    pub eigenvalues: Vec<C64>,
    /// Frobenius norm of the dissipator on the uniform superposition of the
    /// orthonormalized basis.
    pub lindblad_residual: f64,
}

/// Checks whether `span(basis)` is decoherence-free for `ops` with coupling
/// matrix `coupling`.
pub fn is_dfs(basis: &[CVector], ops: &[CMatrix], coupling: &CMatrix) -> Result<DfsCheck> {
    let q = orthonormalize(basis)?;
    let k = q.nrows();
    for (i, op) in ops.iter().enumerate() {
        if op.nrows() != k || op.ncols() != k {
            return Err(Error::shape(format!("operator {i}"), format!("{k}x{k}"), format!("{}x{}", op.nrows(), op.ncols())));
        }
    }
    let m = q.ncols() as f64;
    let mut residual = 0.0_f64;
    let mut ok = true;
    let mut eigenvalues = Vec::with_capacity(ops.len());
    for op in ops {
        let c = (q.adjoint() * op * &q).trace() / m;
        let mut worst = 0.0_f64;
        for v in basis {
            let v = v.unscale(v.norm());
            worst = worst.max((op * &v - &v * c).norm());
        }
        if worst > EIGEN_RESIDUAL_TOL * (1.0 + c.norm()) {
            ok = false;
        }
        residual = residual.max(worst);
        eigenvalues.push(c);
    }

    let model = LindbladModel::new(CMatrix::zeros(k, k), ops.to_vec(), coupling.clone())?;
    let mut psi = CVector::zeros(k);
    for c in 0..q.ncols() {
        psi += q.column(c);
    }
    let rho = DensityMatrix::pure(&psi)?;
    let lindblad_residual = dissipator(rho.matrix(), &model)?.norm();

    Ok(DfsCheck { is_dfs: ok, residual, eigenvalues, lindblad_residual })
}

/// Frobenius norm of the dissipator of `model` at `rho`; zero for states
/// supported on a decoherence-free subspace.
pub fn lindblad_residual(rho: &DensityMatrix, model: &LindbladModel) -> Result<f64> {
    Ok(dissipator(rho.matrix(), model)?.norm())
}

fn serialize_complex_list<S: Serializer>(values: &[C64], s: S) -> std::result::Result<S::Ok, S::Error> {
    let pairs: Vec<[f64; 2]> = values.iter().map(|z| [z.re, z.im]).collect();
    pairs.serialize(s)
}

fn serialize_basis<S: Serializer>(basis: &Option<Vec<CVector>>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let nested: Option<Vec<Vec<[f64; 2]>>> = basis
        .as_ref()
        .map(|b| b.iter().map(|v| v.iter().map(|z| [z.re, z.im]).collect()).collect());
    nested.serialize(s)
}

/// One subspace of a [`DfsReport`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubspaceSummary {
    pub dim: usize,
    #[serde(serialize_with = "serialize_complex_list")]
    pub eigenvalues: Vec<C64>,
    pub residual: f64,
    /// Orthonormal basis (dense path).
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "serialize_basis")]
    pub basis: Option<Vec<CVector>>,
    /// Indices of configuration-basis states (diagonal path).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub members: Option<Vec<usize>>,
}

/// Joint eigenspaces with their Lindbladian residuals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DfsReport {
    pub subspaces: Vec<SubspaceSummary>,
    pub max_dimension: usize,
}

impl DfsReport {
    pub fn candidates(&self) -> impl Iterator<Item = &SubspaceSummary> {
        self.subspaces.iter().filter(|s| s.dim >= 2)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Joint eigenspaces of `model`'s jump operators, each with the dissipator
/// residual of its uniform superposition under `model`'s coupling.
pub fn dfs_report(model: &LindbladModel) -> Result<DfsReport> {
    let spaces = joint_degenerate_subspaces(model.jump_ops())?;
    let k = model.dim();
    let bare = LindbladModel::new(CMatrix::zeros(k, k), model.jump_ops().to_vec(), model.coupling().clone())?;
    let mut subspaces = Vec::with_capacity(spaces.len());
    for space in spaces {
        let mut psi = CVector::zeros(k);
        for v in &space.basis {
            psi += v;
        }
        let rho = DensityMatrix::pure(&psi)?;
        let residual = lindblad_residual(&rho, &bare)?;
        subspaces.push(SubspaceSummary {
            dim: space.dim(),
            eigenvalues: space.eigenvalues,
            residual,
            basis: Some(space.basis),
            members: None,
        });
    }
    let max_dimension = subspaces.iter().map(|s| s.dim).max().unwrap_or(0);
    Ok(DfsReport { subspaces, max_dimension })
}

/// DFS search for CSL restricted to finitely many probe operators `N(x_k)`.
///
/// All `N(x_k)` are diagonal on the configuration basis, so the search groups
/// basis states by their eigenvalue tuples. Residuals are dissipator norms of
/// the uniform superposition of each group, with operators normalized by the
/// kernel peak and unit coupling.
pub fn csl_dfs_scan(
    basis: &[ParticleConfiguration],
    probes: &[ProbePoint],
    params: &CslParams,
    kind: DensityKind<'_>,
) -> Result<DfsReport> {
    if probes.is_empty() {
        return Err(Error::Precondition("csl_dfs_scan needs at least one probe point".into()));
    }
    let diagonals = probes
        .iter()
        .map(|x| csl::density_diagonal(x, basis, params, kind))
        .collect::<Result<Vec<_>>>()?;
    let peak = params.kernel_peak();
    let groups = joint_degenerate_diagonal(&diagonals);
    let subspaces: Vec<SubspaceSummary> = groups
        .into_iter()
        .map(|members| {
            let m = members.len() as f64;
            let eigenvalues = diagonals
                .iter()
                .map(|d| C64::new(members.iter().map(|&i| d[i]).sum::<f64>() / m, 0.0))
                .collect();
            // L_ij = -1/2 Σ_k |f_k,i - f_k,j|² ρ_ij with ρ_ij = 1/m.
            let mut sq = 0.0;
            for &i in &members {
                for &j in &members {
                    let rate: f64 = diagonals.iter().map(|d| ((d[i] - d[j]) / peak).powi(2)).sum::<f64>() * 0.5;
                    sq += (rate / m).powi(2);
                }
            }
            SubspaceSummary {
                dim: members.len(),
                eigenvalues,
                residual: sq.sqrt(),
                basis: None,
                members: Some(members),
            }
        })
        .collect();
    let max_dimension = subspaces.iter().map(|s| s.dim).max().unwrap_or(0);
    Ok(DfsReport { subspaces, max_dimension })
}

/// Every particle center in the basis, followed by `extra` uniform points in
/// the bounding box inflated by `6 r_c`.
pub fn default_probes(basis: &[ParticleConfiguration], params: &CslParams, extra: usize, seed: u64) -> Vec<ProbePoint> {
    let mut probes: Vec<ProbePoint> = basis.iter().flat_map(|q| q.positions().cloned()).collect();
    let (lo, hi) = bounding_box(basis);
    if lo.is_empty() {
        return probes;
    }
    let margin = 6.0 * params.rc();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..extra {
        let coords = lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| rng.random_range((l - margin)..(h + margin)))
            .collect();
        probes.push(Position::new(coords).expect("finite random probe"));
    }
    probes
}
