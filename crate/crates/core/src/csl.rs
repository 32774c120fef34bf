//! CSL smearing kernel, number- and mass-density eigenvalues on the
//! configuration basis, and the pure-dephasing rates they induce.
//!
//! In the configuration basis every density operator `N(x)` is diagonal, so
//! the CSL dissipator acts entrywise:
//!
//! ```text
//! dρ_ab/dt = -D_ab ρ_ab,    D_ab = (γ/2) ∫ dx (n(x, q_a) - n(x, q_b))²
//! ```
//!
//! The integral is evaluated either in closed form (expanding the square
//! into Gaussian overlaps) or by midpoint quadrature on a [`QuadratureGrid`].

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::config::{bounding_box, ParticleConfiguration, Position, SpeciesTable};
use crate::error::{Error, Result};
use crate::model::{diag, CMatrix, LindbladModel};
use crate::params::CslParams;

/// Location at which a density operator `N(x)` is evaluated.
pub type ProbePoint = Position;

/// Hard cap on quadrature grid size.
pub const MAX_GRID_POINTS: usize = 400_000_000;

/// Which density operator drives the collapse.
#[derive(Debug, Clone, Copy, Default)]
pub enum DensityKind<'a> {
    /// Every particle counts once.
    #[default]
    Number,
    /// Every particle counts with its mass ratio `m_k / m_0`.
    Mass(&'a SpeciesTable),
}

impl DensityKind<'_> {
    fn weight(&self, species: u32) -> Result<f64> {
        match self {
            DensityKind::Number => Ok(1.0),
            DensityKind::Mass(table) => table.ratio(species),
        }
    }

    fn weights(&self, q: &ParticleConfiguration) -> Result<Vec<f64>> {
        q.particles().iter().map(|p| self.weight(p.species)).collect()
    }
}

fn check_dim(what: &str, found: usize, params: &CslParams) -> Result<()> {
    if found != params.dim() {
        return Err(Error::shape(what, params.dim(), found));
    }
    Ok(())
}

/// `g(x) = (α/2π)^{d/2} exp(-α|x|²/2)` for a displacement `x`.
///
/// # Panics
/// If `x` does not have `params.dim()` components.
pub fn gaussian_weight(x: &Position, params: &CslParams) -> f64 {
    assert_eq!(x.dim(), params.dim(), "displacement dimension differs from params");
    params.kernel_peak() * (-0.5 * params.alpha() * x.norm_sq()).exp()
}

#[inline]
fn kernel_at(center: &Position, x: &Position, params: &CslParams) -> f64 {
    params.kernel_peak() * (-0.5 * params.alpha() * center.distance_sq(x)).exp()
}

/// Number-density eigenvalue `n(x, q) = Σ_i g(q_i - x)`. Spin and species
/// labels do not enter.
///
/// # Panics
/// If the probe or configuration dimension differs from `params.dim()`.
pub fn density_eigenvalue(x: &ProbePoint, q: &ParticleConfiguration, params: &CslParams) -> f64 {
    assert_eq!(x.dim(), params.dim(), "probe dimension differs from params");
    assert_eq!(q.dim(), params.dim(), "configuration dimension differs from params");
    q.positions().map(|p| kernel_at(p, x, params)).sum()
}

/// Mass-density eigenvalue `Σ_j (m_{k_j}/m_0) g(q_j - x)`.
pub fn mass_density_eigenvalue(
    x: &ProbePoint,
    q: &ParticleConfiguration,
    species: &SpeciesTable,
    params: &CslParams,
) -> Result<f64> {
    profile_eigenvalue(x, q, params, DensityKind::Mass(species))
}

/// Eigenvalue of the density operator selected by `kind`.
pub fn profile_eigenvalue(
    x: &ProbePoint,
    q: &ParticleConfiguration,
    params: &CslParams,
    kind: DensityKind<'_>,
) -> Result<f64> {
    check_dim("probe", x.dim(), params)?;
    check_dim("configuration", q.dim(), params)?;
    let mut total = 0.0;
    for p in q.particles() {
        total += kind.weight(p.species)? * kernel_at(&p.pos, x, params);
    }
    Ok(total)
}

/// `∫ g(u-x) g(v-x) dx = (α/4π)^{d/2} exp(-α|u-v|²/4)`.
pub fn gaussian_overlap(u: &Position, v: &Position, params: &CslParams) -> f64 {
    params.overlap_peak() * (-0.25 * params.alpha() * u.distance_sq(v)).exp()
}

/// `∫ n(x, q_a) n(x, q_b) dx`, the Gram entry of two density profiles.
pub fn profile_overlap(
    qa: &ParticleConfiguration,
    qb: &ParticleConfiguration,
    params: &CslParams,
    kind: DensityKind<'_>,
) -> Result<f64> {
    check_dim("configuration", qa.dim(), params)?;
    check_dim("configuration", qb.dim(), params)?;
    let wa = kind.weights(qa)?;
    let wb = kind.weights(qb)?;
    let mut total = 0.0;
    for (pa, wa) in qa.positions().zip(&wa) {
        for (pb, wb) in qb.positions().zip(&wb) {
            total += wa * wb * gaussian_overlap(pa, pb, params);
        }
    }
    Ok(total)
}

/// How the spatial integral of a dephasing rate is evaluated.
#[derive(Debug, Clone, Default)]
pub enum RateMethod {
    #[default]
    ClosedForm,
    Quadrature(QuadratureGrid),
}

/// Off-diagonal decay rate `D_ab = (γ/2) ∫ (n(x,q_a) - n(x,q_b))² dx` (s⁻¹).
///
/// Configurations equal as multisets (within `1e-12 r_c`) give exactly 0.
pub fn pairwise_dephasing_rate(
    qa: &ParticleConfiguration,
    qb: &ParticleConfiguration,
    params: &CslParams,
    method: &RateMethod,
    kind: DensityKind<'_>,
) -> Result<f64> {
    check_dim("configuration", qa.dim(), params)?;
    check_dim("configuration", qb.dim(), params)?;
    let wa = kind.weights(qa)?;
    let wb = kind.weights(qb)?;
    if qa.same_multiset(qb, params.position_tolerance()) {
        return Ok(0.0);
    }
    let integral = match method {
        RateMethod::ClosedForm => closed_form_difference_sq(qa, &wa, qb, &wb, params),
        RateMethod::Quadrature(grid) => {
            grid.check_covers([qa, qb], 5.0 * params.rc())?;
            grid.difference_sq(qa, &wa, qb, &wb, params)?
        }
    };
    Ok((0.5 * params.gamma() * integral).max(0.0))
}

/// `∫ (n_a - n_b)²` from Gaussian overlaps.
///
/// When both configurations have the same size, particles are paired by
/// nearest neighbour and each pair's diagonal contribution is written with
/// `expm1`, which keeps nearly coincident configurations accurate.
fn closed_form_difference_sq(
    qa: &ParticleConfiguration,
    wa: &[f64],
    qb: &ParticleConfiguration,
    wb: &[f64],
    params: &CslParams,
) -> f64 {
    let a: Vec<&Position> = qa.positions().collect();
    let b: Vec<&Position> = qb.positions().collect();
    let c = params.overlap_peak();
    let alpha = params.alpha();
    let ov = |u: &Position, v: &Position| c * (-0.25 * alpha * u.distance_sq(v)).exp();

    if a.len() != b.len() {
        let mut total = 0.0;
        for i in 0..a.len() {
            for j in 0..a.len() {
                total += wa[i] * wa[j] * ov(a[i], a[j]);
            }
        }
        for i in 0..b.len() {
            for j in 0..b.len() {
                total += wb[i] * wb[j] * ov(b[i], b[j]);
            }
        }
        for i in 0..a.len() {
            for j in 0..b.len() {
                total -= 2.0 * wa[i] * wb[j] * ov(a[i], b[j]);
            }
        }
        return total;
    }

    // Greedy nearest-neighbour pairing of b onto a.
    let n = a.len();
    let mut perm = vec![usize::MAX; n];
    let mut used = vec![false; n];
    for i in 0..n {
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for j in 0..n {
            if !used[j] {
                let d = a[i].distance_sq(b[j]);
                if d < best_d {
                    best_d = d;
                    best = Some(j);
                }
            }
        }
        let j = best.expect("unused partner exists");
        used[j] = true;
        perm[i] = j;
    }
    let bp: Vec<&Position> = perm.iter().map(|&j| b[j]).collect();
    let wbp: Vec<f64> = perm.iter().map(|&j| wb[j]).collect();

    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j && wa[i] == wbp[i] {
                total += -2.0 * wa[i] * wa[i] * c * (-0.25 * alpha * a[i].distance_sq(bp[i])).exp_m1();
            } else {
                total += wa[i] * wa[j] * ov(a[i], a[j]) + wbp[i] * wbp[j] * ov(bp[i], bp[j])
                    - wa[i] * wbp[j] * ov(a[i], bp[j])
                    - wbp[i] * wa[j] * ov(bp[i], a[j]);
            }
        }
    }
    total
}

/// Uniform midpoint-rule grid over an axis-aligned box.
///
/// The number of cells per axis is `ceil(extent / spacing)`; the effective
/// cell width is `extent / cells` and therefore never exceeds `spacing`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    spacing: f64,
}

impl QuadratureGrid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, spacing: f64) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() || lower.len() > 3 {
            return Err(Error::shape("grid corners", lower.len(), upper.len()));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::Validation(format!("grid spacing must be > 0, got {spacing}")));
        }
        for (axis, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || hi - lo < 2.0 * spacing {
                return Err(Error::Validation(format!(
                    "grid axis {axis} must span at least two spacings ({lo} .. {hi}, spacing {spacing})"
                )));
            }
        }
        let grid = QuadratureGrid { lower, upper, spacing };
        if grid.point_count() > MAX_GRID_POINTS {
            return Err(Error::Validation(format!(
                "grid has {} points, more than {MAX_GRID_POINTS}",
                grid.point_count()
            )));
        }
        Ok(grid)
    }

    /// Bounding box of every particle inflated by `margin`.
    pub fn covering<'a, I>(configs: I, spacing: f64, margin: f64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a ParticleConfiguration>,
    {
        let (lo, hi) = bounding_box(configs);
        if lo.is_empty() {
            return Err(Error::Validation("no particles to cover".into()));
        }
        Self::new(
            lo.iter().map(|x| x - margin).collect(),
            hi.iter().map(|x| x + margin).collect(),
            spacing,
        )
    }

    /// Spacing `r_c/8`, margin `6 r_c`.
    pub fn default_for<'a, I>(configs: I, params: &CslParams) -> Result<Self>
    where
        I: IntoIterator<Item = &'a ParticleConfiguration>,
    {
        Self::covering(configs, params.rc() / 8.0, 6.0 * params.rc())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn cells(&self, axis: usize) -> usize {
        ((self.upper[axis] - self.lower[axis]) / self.spacing - 1e-9).ceil().max(1.0) as usize
    }

    pub fn point_count(&self) -> usize {
        (0..self.dim()).map(|a| self.cells(a)).product()
    }

    pub fn cell_width(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / self.cells(axis) as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.cell_width(a)).product()
    }

    /// Cell midpoints along one axis.
    pub fn axis_points(&self, axis: usize) -> Vec<f64> {
        let h = self.cell_width(axis);
        (0..self.cells(axis)).map(|i| self.lower[axis] + (i as f64 + 0.5) * h).collect()
    }

    /// Every cell midpoint, first axis slowest.
    pub fn points(&self) -> Vec<Position> {
        let axes: Vec<Vec<f64>> = (0..self.dim()).map(|a| self.axis_points(a)).collect();
        let mut out: Vec<Vec<f64>> = vec![Vec::new()];
        for axis in &axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&x| {
                        let mut p = prefix.clone();
                        p.push(x);
                        p
                    })
                })
                .collect();
        }
        out.into_iter().map(|c| Position::new(c).expect("grid points are finite")).collect()
    }

    /// Fails unless every particle, inflated by `margin`, lies inside the grid.
    pub fn check_covers<'a, I>(&self, configs: I, margin: f64) -> Result<()>
    where
        I: IntoIterator<Item = &'a ParticleConfiguration>,
    {
        for q in configs {
            if q.dim() != self.dim() {
                return Err(Error::shape("configuration vs grid", self.dim(), q.dim()));
            }
            for p in q.positions() {
                for (axis, &x) in p.coords().iter().enumerate() {
                    if x - margin < self.lower[axis] || x + margin > self.upper[axis] {
                        return Err(Error::Coverage(format!(
                            "particle at {p} with margin {margin} (axis {axis} spans {} .. {})",
                            self.lower[axis], self.upper[axis]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Midpoint sum of `(n_a - n_b)²` over the grid.
    ///
    /// The Gaussian factorizes over axes, so per-particle 1D tables are built
    /// once. Slices along the first axis are summed in parallel and combined
    /// in index order, which makes the result independent of thread count.
    fn difference_sq(
        &self,
        qa: &ParticleConfiguration,
        wa: &[f64],
        qb: &ParticleConfiguration,
        wb: &[f64],
        params: &CslParams,
    ) -> Result<f64> {
        check_dim("grid", self.dim(), params)?;
        let half_alpha = 0.5 * params.alpha();
        let signed: Vec<(&Position, f64)> = qa
            .positions()
            .zip(wa.iter().copied())
            .chain(qb.positions().zip(wb.iter().map(|w| -w)))
            .collect();

        // tables[axis][particle][index]; missing axes are a single unit cell.
        let mut tables: Vec<Vec<Vec<f64>>> = Vec::with_capacity(3);
        for axis in 0..3 {
            if axis < self.dim() {
                let xs = self.axis_points(axis);
                tables.push(
                    signed
                        .iter()
                        .map(|(p, _)| {
                            let c = p.coords()[axis];
                            xs.iter().map(|x| (-half_alpha * (x - c) * (x - c)).exp()).collect()
                        })
                        .collect(),
                );
            } else {
                tables.push(vec![vec![1.0]; signed.len()]);
            }
        }
        let counts: Vec<usize> = tables.iter().map(|t| t[0].len()).collect();
        let weights: Vec<f64> = signed.iter().map(|(_, w)| *w).collect();

        let slices: Vec<f64> = (0..counts[0])
            .into_par_iter()
            .map(|i0| {
                let mut t01 = vec![0.0; weights.len()];
                let mut slice_sum = 0.0;
                for i1 in 0..counts[1] {
                    for (p, t) in t01.iter_mut().enumerate() {
                        *t = weights[p] * tables[0][p][i0] * tables[1][p][i1];
                    }
                    let mut row = 0.0;
                    for i2 in 0..counts[2] {
                        let mut diff = 0.0;
                        for (p, t) in t01.iter().enumerate() {
                            diff += t * tables[2][p][i2];
                        }
                        row += diff * diff;
                    }
                    slice_sum += row;
                }
                slice_sum
            })
            .collect();
        let peak = params.kernel_peak();
        Ok(slices.iter().sum::<f64>() * peak * peak * self.cell_volume())
    }
}

fn check_basis(basis: &[ParticleConfiguration], params: &CslParams) -> Result<()> {
    if basis.is_empty() {
        return Err(Error::Basis("basis is empty".into()));
    }
    let tol = params.position_tolerance();
    for (i, q) in basis.iter().enumerate() {
        check_dim(&format!("basis configuration {i}"), q.dim(), params)?;
        for (j, r) in basis.iter().enumerate().take(i) {
            if q.same_multiset(r, tol) {
                return Err(Error::Basis(format!("configurations {j} and {i} are duplicates")));
            }
        }
    }
    Ok(())
}

/// Diagonal entries of `N(x)` (or `M(x)`) over the configuration basis.
pub fn density_diagonal(
    x: &ProbePoint,
    basis: &[ParticleConfiguration],
    params: &CslParams,
    kind: DensityKind<'_>,
) -> Result<Vec<f64>> {
    check_basis(basis, params)?;
    basis.iter().map(|q| profile_eigenvalue(x, q, params, kind)).collect()
}

/// `N(x)` as a `K×K` diagonal matrix over a duplicate-free configuration basis.
pub fn build_density_operator(
    x: &ProbePoint,
    basis: &[ParticleConfiguration],
    params: &CslParams,
    kind: DensityKind<'_>,
) -> Result<CMatrix> {
    Ok(diag(&density_diagonal(x, basis, params, kind)?))
}

/// Symmetric, nonnegative, zero-diagonal matrix of pairwise dephasing rates.
#[derive(Debug, Clone, PartialEq)]
pub struct DephasingMatrix {
    rates: DMatrix<f64>,
}

impl DephasingMatrix {
    pub fn from_rates(rates: DMatrix<f64>) -> Result<Self> {
        let k = rates.nrows();
        if rates.ncols() != k {
            return Err(Error::shape("dephasing matrix", "square", format!("{}x{}", k, rates.ncols())));
        }
        for i in 0..k {
            if rates[(i, i)] != 0.0 {
                return Err(Error::Validation(format!("D[{i},{i}] = {} is not zero", rates[(i, i)])));
            }
            for j in 0..k {
                let d = rates[(i, j)];
                if !(d.is_finite() && d >= 0.0) {
                    return Err(Error::Validation(format!("D[{i},{j}] = {d} is not a nonnegative rate")));
                }
                if d != rates[(j, i)] {
                    return Err(Error::Validation(format!("D is not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(DephasingMatrix { rates })
    }

    pub fn dim(&self) -> usize {
        self.rates.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rates[(i, j)]
    }

    pub fn rates(&self) -> &DMatrix<f64> {
        &self.rates
    }

    /// Smallest off-diagonal rate with its indices, `None` for `K = 1`.
    pub fn min_off_diagonal(&self) -> Option<(f64, usize, usize)> {
        let k = self.dim();
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..k {
            for j in (i + 1)..k {
                let d = self.rates[(i, j)];
                if best.is_none_or(|(b, _, _)| d < b) {
                    best = Some((d, i, j));
                }
            }
        }
        best
    }
}

/// `D_ij = pairwise_dephasing_rate(q_i, q_j)` for every pair of a
/// duplicate-free basis.
pub fn build_dephasing_matrix(
    basis: &[ParticleConfiguration],
    params: &CslParams,
    method: &RateMethod,
    kind: DensityKind<'_>,
) -> Result<DephasingMatrix> {
    check_basis(basis, params)?;
    let k = basis.len();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| ((i + 1)..k).map(move |j| (i, j))).collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| pairwise_dephasing_rate(&basis[i], &basis[j], params, method, kind))
        .collect::<Result<Vec<f64>>>()?;
    let mut rates = DMatrix::zeros(k, k);
    for (&(i, j), d) in pairs.iter().zip(values) {
        rates[(i, j)] = d;
        rates[(j, i)] = d;
    }
    DephasingMatrix::from_rates(rates)
}

/// Gram matrix `G_ij = ∫ n(x,q_i) n(x,q_j) dx` of the density profiles.
pub fn profile_gram(
    basis: &[ParticleConfiguration],
    params: &CslParams,
    kind: DensityKind<'_>,
) -> Result<DMatrix<f64>> {
    let k = basis.len();
    let mut g = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v = profile_overlap(&basis[i], &basis[j], params, kind)?;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

fn hamiltonian_from_diag(k: usize, hamiltonian_diag: Option<&[f64]>) -> Result<CMatrix> {
    match hamiltonian_diag {
        None => Ok(CMatrix::zeros(k, k)),
        Some(h) if h.len() == k => Ok(diag(h)),
        Some(h) => Err(Error::shape("hamiltonian diagonal", k, h.len())),
    }
}

/// Dense Lindblad model equivalent to CSL on the configuration basis.
///
/// The integral `γ ∫ dx N(x) ρ N(x)` only depends on the Gram matrix `G`, so
/// factoring `G = Σ_r μ_r u_r u_rᵀ` gives at most `K` diagonal jump
/// operators `diag(u_r)` with coupling `a = diag(γ μ_r)` that reproduce
/// the CSL dissipator exactly.
pub fn csl_lindblad_model(
    basis: &[ParticleConfiguration],
    params: &CslParams,
    kind: DensityKind<'_>,
    hamiltonian_diag: Option<&[f64]>,
) -> Result<LindbladModel> {
    check_basis(basis, params)?;
    let k = basis.len();
    let h = hamiltonian_from_diag(k, hamiltonian_diag)?;
    let eig = SymmetricEigen::new(profile_gram(basis, params, kind)?);
    let mut ops = Vec::with_capacity(k);
    let mut rates = Vec::with_capacity(k);
    for r in 0..k {
        let u = eig.eigenvectors.column(r);
        ops.push(CMatrix::from_diagonal(&u.map(|v| C64::new(v, 0.0))));
        rates.push(params.gamma() * eig.eigenvalues[r].max(0.0));
    }
    LindbladModel::diagonal_coupling(h, ops, &rates)
}

/// Dense Lindblad model with one jump operator `N(x_k)` per grid midpoint and
/// coupling `a_kk = γ Δx^d`, the quadrature discretization of the CSL
/// integral. Its dephasing converges to [`csl_lindblad_model`] as the grid is
/// refined.
pub fn csl_probe_model(
    basis: &[ParticleConfiguration],
    grid: &QuadratureGrid,
    params: &CslParams,
    kind: DensityKind<'_>,
    hamiltonian_diag: Option<&[f64]>,
) -> Result<LindbladModel> {
    check_basis(basis, params)?;
    check_dim("grid", grid.dim(), params)?;
    let h = hamiltonian_from_diag(basis.len(), hamiltonian_diag)?;
    let points = grid.points();
    let ops = points
        .iter()
        .map(|x| build_density_operator(x, basis, params, kind))
        .collect::<Result<Vec<_>>>()?;
    let rates = vec![params.gamma() * grid.cell_volume(); ops.len()];
    LindbladModel::diagonal_coupling(h, ops, &rates)
}
