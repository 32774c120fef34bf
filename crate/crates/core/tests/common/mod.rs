//! Reference evaluations written directly from the CSL formulas, sharing no
//! code with the library.
#![allow(dead_code)]

use std::f64::consts::PI;

pub fn kernel(r2: f64, alpha: f64, d: usize) -> f64 {
    (alpha / (2.0 * PI)).powf(d as f64 / 2.0) * (-alpha * r2 / 2.0).exp()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Weighted density `Σ w_i g(q_i - x)`.
pub fn density(x: &[f64], q: &[Vec<f64>], w: &[f64], alpha: f64) -> f64 {
    q.iter().zip(w).map(|(qi, wi)| wi * kernel(dist2(qi, x), alpha, x.len())).sum()
}

pub fn ones(n: usize) -> Vec<f64> {
    vec![1.0; n]
}

/// `(γ/2) Σ_x (n_a - n_b)² Δx^d` on a midpoint grid covering both
/// configurations with the given margin.
#[allow(clippy::too_many_arguments)]
pub fn quadrature_rate(qa: &[Vec<f64>], wa: &[f64], qb: &[Vec<f64>], wb: &[f64], alpha: f64, gamma: f64, h: f64, margin: f64) -> f64 {
    let d = qa[0].len();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in qa.iter().chain(qb) {
        for k in 0..d {
            lo[k] = lo[k].min(p[k] - margin);
            hi[k] = hi[k].max(p[k] + margin);
        }
    }
    let counts: Vec<usize> = (0..d).map(|k| ((hi[k] - lo[k]) / h).ceil() as usize).collect();
    let total: usize = counts.iter().product();
    let mut sum = 0.0;
    let mut x = vec![0.0; d];
    for flat in 0..total {
        let mut rem = flat;
        for k in 0..d {
            x[k] = lo[k] + (rem % counts[k]) as f64 * h + 0.5 * h;
            rem /= counts[k];
        }
        let diff = density(&x, qa, wa, alpha) - density(&x, qb, wb, alpha);
        sum += diff * diff;
    }
    0.5 * gamma * sum * h.powi(d as i32)
}

/// `(γ/2)(G_aa + G_bb - 2 G_ab)` from pairwise Gaussian overlaps.
pub fn gram_rate(qa: &[Vec<f64>], wa: &[f64], qb: &[Vec<f64>], wb: &[f64], alpha: f64, gamma: f64) -> f64 {
    let d = qa[0].len();
    let overlap = |u: &[f64], v: &[f64]| (alpha / (4.0 * PI)).powf(d as f64 / 2.0) * (-alpha * dist2(u, v) / 4.0).exp();
    let g = |p: &[Vec<f64>], wp: &[f64], q: &[Vec<f64>], wq: &[f64]| {
        let mut s = 0.0;
        for (pi, wi) in p.iter().zip(wp) {
            for (qj, wj) in q.iter().zip(wq) {
                s += wi * wj * overlap(pi, qj);
            }
        }
        s
    };
    0.5 * gamma * (g(qa, wa, qa, wa) + g(qb, wb, qb, wb) - 2.0 * g(qa, wa, qb, wb))
}

/// `γ (α/4π)^{3/2}` with `α = 1/r_c²`.
pub fn lambda3(gamma: f64, rc: f64) -> f64 {
    gamma * (1.0 / (4.0 * PI * rc * rc)).powf(1.5)
}

/// Single-particle rate `λ (1 - exp(-α s²/4))` in three dimensions.
pub fn single_particle_rate(gamma: f64, rc: f64, s: f64) -> f64 {
    lambda3(gamma, rc) * (1.0 - (-s * s / (4.0 * rc * rc)).exp())
}

use cslab::model::CMatrix;
use cslab::{DensityMatrix, LindbladModel};
use num_complex::Complex64 as C64;
use rand::Rng;

pub fn random_matrix<R: Rng>(rng: &mut R, k: usize, scale: f64) -> CMatrix {
    CMatrix::from_fn(k, k, |_, _| C64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale)))
}

pub fn random_hermitian<R: Rng>(rng: &mut R, k: usize, scale: f64) -> CMatrix {
    let a = random_matrix(rng, k, scale);
    (&a + a.adjoint()).scale(0.5)
}

/// Hermitian `H`, 1-3 arbitrary jump operators, coupling `B B†`.
pub fn random_model<R: Rng>(rng: &mut R, k: usize) -> LindbladModel {
    let m = rng.random_range(1..=3);
    let h = random_hermitian(rng, k, 1.0);
    let ops = (0..m).map(|_| random_matrix(rng, k, 0.5)).collect();
    let b = random_matrix(rng, m, 0.7);
    LindbladModel::new(h, ops, &b * b.adjoint()).unwrap()
}

/// Random state of the given rank (1 = pure).
pub fn random_state<R: Rng>(rng: &mut R, k: usize, rank: usize) -> DensityMatrix {
    let v = CMatrix::from_fn(k, rank, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let rho = &v * v.adjoint();
    let tr = rho.trace();
    let mut rho = rho / tr;
    // Exact Hermiticity after the division.
    rho = (&rho + rho.adjoint()).scale(0.5);
    DensityMatrix::new(rho).unwrap()
}
