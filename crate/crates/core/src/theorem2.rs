//! Constructive checks that CSL admits no decoherence-free subspace on the
//! configuration basis.
//!
//! Two configurations can share their density eigenvalue at a chosen point
//! `p1` (sphere and mirror constructions), but a DFS would need them to agree
//! at every point. [`find_witness`] exhibits a second point where they differ,
//! and [`brute_force_no_dfs`] enumerates small lattices exhaustively.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{bounding_box, Particle, ParticleConfiguration, Position};
use crate::csl::{density_eigenvalue, pairwise_dephasing_rate, DensityKind, ProbePoint, RateMethod};
use crate::dfs::csl_dfs_scan;
use crate::error::{Error, Result};
use crate::params::CslParams;

/// Relative eigenvalue gap at `p1` tolerated for a degenerate pair.
pub const ANCHOR_RTOL: f64 = 1e-10;
/// Relative eigenvalue gap required of a witness.
pub const WITNESS_RTOL: f64 = 1e-8;
pub const DEFAULT_RANDOM_PROBES: usize = 64;
/// Largest lattice enumeration accepted by [`brute_force_no_dfs`].
pub const MAX_BRUTE_CONFIGS: u128 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Construction {
    Sphere,
    Mirror,
    Custom,
}

impl std::str::FromStr for Construction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sphere" => Ok(Construction::Sphere),
            "mirror" => Ok(Construction::Mirror),
            "custom" => Ok(Construction::Custom),
            other => Err(Error::Validation(format!("unknown construction {other:?}"))),
        }
    }
}

/// Two configurations with equal density eigenvalue at `anchor`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegeneratePair {
    pub q_a: ParticleConfiguration,
    pub q_b: ParticleConfiguration,
    pub anchor: ProbePoint,
    pub construction: Construction,
}

impl DegeneratePair {
    /// Checks the anchor degeneracy; `q_a` and `q_b` may coincide.
    pub fn custom(q_a: ParticleConfiguration, q_b: ParticleConfiguration, anchor: ProbePoint, params: &CslParams) -> Result<Self> {
        let pair = DegeneratePair { q_a, q_b, anchor, construction: Construction::Custom };
        pair.check(params)?;
        Ok(pair)
    }

    /// `|n(p1,q_a) - n(p1,q_b)| / max(n(p1,q_a), n(p1,q_b))`.
    pub fn anchor_gap(&self, params: &CslParams) -> f64 {
        relative_gap(&self.anchor, &self.q_a, &self.q_b, params).0
    }

    pub fn is_trivial(&self, params: &CslParams) -> bool {
        self.q_a.same_multiset(&self.q_b, params.position_tolerance())
    }

    fn check(&self, params: &CslParams) -> Result<()> {
        for (what, dim) in [("q_a", self.q_a.dim()), ("q_b", self.q_b.dim()), ("anchor", self.anchor.dim())] {
            if dim != params.dim() {
                return Err(Error::shape(what, params.dim(), dim));
            }
        }
        let gap = self.anchor_gap(params);
        if gap > ANCHOR_RTOL {
            return Err(Error::Construction(format!("pair not degenerate at anchor: relative gap {gap:.3e}")));
        }
        Ok(())
    }
}

/// Relative gap and absolute difference of the two eigenvalues at `x`.
fn relative_gap(x: &Position, qa: &ParticleConfiguration, qb: &ParticleConfiguration, params: &CslParams) -> (f64, f64) {
    let na = density_eigenvalue(x, qa, params);
    let nb = density_eigenvalue(x, qb, params);
    let delta = (na - nb).abs();
    let scale = na.max(nb);
    if scale > 0.0 {
        (delta / scale, delta)
    } else {
        (0.0, 0.0)
    }
}

fn check_length(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::Validation(format!("{name} must be finite and > 0, got {v}")));
    }
    Ok(())
}

fn unit_vector<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// `n_configs` distinct configurations whose particles all lie on the
/// `(d-1)`-sphere of radius `r` about `p`, so every one has density eigenvalue
/// `n_particles (α/2π)^{d/2} exp(-αr²/2)` at `p`.
///
/// In one dimension the sphere is the two points `p ± r` and particles may not
/// share a site, so only `C(2, n_particles)` configurations exist.
pub fn sphere_construction(
    p: &ProbePoint,
    r: f64,
    n_particles: usize,
    n_configs: usize,
    seed: u64,
    params: &CslParams,
) -> Result<Vec<ParticleConfiguration>> {
    check_length("radius", r)?;
    if n_particles == 0 {
        return Err(Error::Validation("n_particles must be >= 1".into()));
    }
    if n_configs < 2 {
        return Err(Error::Validation("n_configs must be >= 2".into()));
    }
    if p.dim() != params.dim() {
        return Err(Error::shape("sphere center", params.dim(), p.dim()));
    }
    let d = p.dim();
    if d == 1 {
        let sites = [p.offset(&[-1.0], r), p.offset(&[1.0], r)];
        let subsets: Vec<Vec<&Position>> = match n_particles {
            1 => vec![vec![&sites[0]], vec![&sites[1]]],
            2 => vec![vec![&sites[0], &sites[1]]],
            _ => {
                return Err(Error::Construction(format!(
                    "a 0-sphere holds 2 points; cannot place {n_particles} distinct particles"
                )))
            }
        };
        if n_configs > subsets.len() {
            return Err(Error::Construction(format!(
                "a 0-sphere admits only {} distinct configurations of {n_particles} particles",
                subsets.len()
            )));
        }
        return subsets
            .into_iter()
            .take(n_configs)
            .map(|s| ParticleConfiguration::new(s.into_iter().cloned().map(Particle::new).collect()))
            .collect();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = params.position_tolerance();
    let mut configs: Vec<ParticleConfiguration> = Vec::with_capacity(n_configs);
    let mut attempts = 0;
    while configs.len() < n_configs {
        attempts += 1;
        if attempts > 100 * n_configs {
            return Err(Error::Construction("could not draw distinct sphere configurations".into()));
        }
        let particles = (0..n_particles)
            .map(|_| Particle::new(p.offset(&unit_vector(&mut rng, d), r)))
            .collect();
        let q = ParticleConfiguration::new(particles)?.canonicalize();
        if configs.iter().all(|c| !c.same_multiset(&q, tol)) {
            configs.push(q);
        }
    }
    Ok(configs)
}

/// Reflects selected coordinates of `q_b` through `p`: component `j` of
/// particle `i` becomes `2 p_j - q_b[i][j]` where `flip_mask[i][j]` is set.
/// Every particle keeps its distance to `p`, so the pair is degenerate there.
pub fn mirror_construction(p: &ProbePoint, q_b: &ParticleConfiguration, flip_mask: &[Vec<bool>], params: &CslParams) -> Result<DegeneratePair> {
    if p.dim() != params.dim() || q_b.dim() != params.dim() {
        return Err(Error::shape("mirror inputs", params.dim(), if p.dim() != params.dim() { p.dim() } else { q_b.dim() }));
    }
    if flip_mask.len() != q_b.len() {
        return Err(Error::shape("flip mask rows", q_b.len(), flip_mask.len()));
    }
    if let Some(row) = flip_mask.iter().find(|row| row.len() != p.dim()) {
        return Err(Error::shape("flip mask row", p.dim(), row.len()));
    }
    if !flip_mask.iter().flatten().any(|&f| f) {
        return Err(Error::Construction("flip mask selects no component".into()));
    }
    let pc = p.coords();
    let particles = q_b
        .particles()
        .iter()
        .zip(flip_mask)
        .map(|(particle, row)| {
            let coords = particle
                .pos
                .coords()
                .iter()
                .zip(row)
                .enumerate()
                .map(|(j, (&x, &flip))| if flip { 2.0 * pc[j] - x } else { x })
                .collect();
            Ok(Particle { pos: Position::new(coords)?, ..particle.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    let q_a = ParticleConfiguration::new(particles)?;
    if q_a.same_multiset(q_b, params.position_tolerance()) {
        return Err(Error::Construction("mirror image coincides with the original configuration".into()));
    }
    let pair = DegeneratePair { q_a, q_b: q_b.clone(), anchor: p.clone(), construction: Construction::Mirror };
    pair.check(params)?;
    Ok(pair)
}

/// Outcome of a witness search. `witness` is `None` when every probe was
/// exhausted; `delta` is then the largest difference seen.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessReport {
    pub witness: Option<ProbePoint>,
    pub delta: f64,
    pub relative_gap: f64,
    pub probes_tried: usize,
    pub symmetry_note: Option<String>,
}

/// A hyperplane `{x : n·x = c}` whose reflection maps `q_b` onto `q_a`.
fn reflection_symmetry(qa: &ParticleConfiguration, qb: &ParticleConfiguration, params: &CslParams) -> Option<(Vec<f64>, f64)> {
    let tol = 1e-9 * params.rc();
    let a0 = qa.particles().first()?;
    for b in qb.particles().iter().filter(|b| b.species == a0.species) {
        let diff: Vec<f64> = a0.pos.coords().iter().zip(b.pos.coords()).map(|(x, y)| x - y).collect();
        let len = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len <= tol {
            continue;
        }
        let n: Vec<f64> = diff.iter().map(|x| x / len).collect();
        let c: f64 = n
            .iter()
            .zip(a0.pos.coords().iter().zip(b.pos.coords()))
            .map(|(ni, (x, y))| ni * 0.5 * (x + y))
            .sum();
        let reflected: Option<Vec<Particle>> = qb
            .particles()
            .iter()
            .map(|q| {
                let s: f64 = n.iter().zip(q.pos.coords()).map(|(ni, x)| ni * x).sum::<f64>() - c;
                let coords = q.pos.coords().iter().zip(&n).map(|(x, ni)| x - 2.0 * s * ni).collect();
                Position::new(coords).ok().map(|pos| Particle { pos, ..q.clone() })
            })
            .collect();
        if let Some(image) = reflected.and_then(|ps| ParticleConfiguration::new(ps).ok()) {
            if image.same_multiset(qa, tol) {
                return Some((n, c));
            }
        }
    }
    None
}

/// Searches for `p2 != p1` where the pair's eigenvalues differ by more than
/// `1e-8` relative. Probes every particle center of `q_a ∪ q_b` first, then up
/// to `max_random_probes` uniform points in their bounding box inflated by
/// `3 r_c`.
pub fn find_witness(pair: &DegeneratePair, params: &CslParams, seed: u64, max_random_probes: usize) -> WitnessReport {
    let symmetry_note = reflection_symmetry(&pair.q_a, &pair.q_b, params).map(|(n, c)| {
        let normal: Vec<String> = n.iter().map(|x| format!("{x:.6}")).collect();
        format!(
            "q_a is the mirror image of q_b through the plane n.x = {c:.6} with n = ({}); the eigenvalues agree on that whole plane",
            normal.join(", ")
        )
    });
    let skip_tol = params.position_tolerance();
    let mut tried = 0;
    let mut best = (0.0, 0.0);
    let mut test = |x: &Position, tried: &mut usize| -> Option<WitnessReport> {
        if x.distance(&pair.anchor) <= skip_tol {
            return None;
        }
        *tried += 1;
        let (rel, delta) = relative_gap(x, &pair.q_a, &pair.q_b, params);
        if delta > best.1 {
            best = (rel, delta);
        }
        (rel > WITNESS_RTOL).then(|| WitnessReport {
            witness: Some(x.clone()),
            delta,
            relative_gap: rel,
            probes_tried: *tried,
            symmetry_note: None,
        })
    };
    for x in pair.q_a.positions().chain(pair.q_b.positions()) {
        if let Some(mut r) = test(x, &mut tried) {
            r.symmetry_note = symmetry_note;
            return r;
        }
    }
    let (lo, hi) = bounding_box([&pair.q_a, &pair.q_b]);
    let margin = 3.0 * params.rc();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..max_random_probes {
        let coords = lo.iter().zip(&hi).map(|(l, h)| rng.random_range((l - margin)..(h + margin))).collect();
        let x = Position::new(coords).expect("finite random probe");
        if let Some(mut r) = test(&x, &mut tried) {
            r.symmetry_note = symmetry_note;
            return r;
        }
    }
    WitnessReport { witness: None, delta: best.1, relative_gap: best.0, probes_tried: tried, symmetry_note }
}

/// Central-difference gradient of `n(x,q_a) - n(x,q_b)` at the anchor with
/// step `r_c 1e-4`.
pub fn degeneracy_gradient(pair: &DegeneratePair, params: &CslParams) -> Vec<f64> {
    let h = params.rc() * 1e-4;
    let delta = |x: &Position| density_eigenvalue(x, &pair.q_a, params) - density_eigenvalue(x, &pair.q_b, params);
    (0..pair.anchor.dim())
        .map(|axis| {
            let mut e = vec![0.0; pair.anchor.dim()];
            e[axis] = 1.0;
            (delta(&pair.anchor.offset(&e, h)) - delta(&pair.anchor.offset(&e, -h))) / (2.0 * h)
        })
        .collect()
}

fn uniform_point<R: Rng>(rng: &mut R, dim: usize, half_width: f64) -> Position {
    Position::new((0..dim).map(|_| rng.random_range(-half_width..half_width)).collect()).expect("finite point")
}

/// A randomized degenerate pair of `n_particles`-particle configurations.
///
/// Sphere: center uniform in `[-r_c, r_c]^d`, radius uniform in
/// `[r_c/4, 2 r_c]`. Mirror: anchor uniform in `[-r_c, r_c]^d`, `q_b` uniform in
/// `[-2 r_c, 2 r_c]^d`, and a random nonempty flip mask.
pub fn random_pair(construction: Construction, n_particles: usize, params: &CslParams, seed: u64) -> Result<DegeneratePair> {
    if n_particles == 0 {
        return Err(Error::Validation("n_particles must be >= 1".into()));
    }
    let d = params.dim();
    let rc = params.rc();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match construction {
        Construction::Sphere => {
            let p = uniform_point(&mut rng, d, rc);
            let r = rng.random_range(0.25 * rc..2.0 * rc);
            let mut configs = sphere_construction(&p, r, n_particles, 2, rng.next_u64(), params)?;
            let q_b = configs.pop().expect("two configurations");
            let q_a = configs.pop().expect("two configurations");
            let pair = DegeneratePair { q_a, q_b, anchor: p, construction };
            pair.check(params)?;
            Ok(pair)
        }
        Construction::Mirror => {
            let p = uniform_point(&mut rng, d, rc);
            for _ in 0..16 {
                let q_b = ParticleConfiguration::new((0..n_particles).map(|_| Particle::new(uniform_point(&mut rng, d, 2.0 * rc))).collect())?;
                let mut mask: Vec<Vec<bool>> = (0..n_particles).map(|_| (0..d).map(|_| rng.random_bool(0.5)).collect()).collect();
                if !mask.iter().flatten().any(|&f| f) {
                    mask[rng.random_range(0..n_particles)][rng.random_range(0..d)] = true;
                }
                match mirror_construction(&p, &q_b, &mask, params) {
                    Err(Error::Construction(_)) => continue,
                    other => return other,
                }
            }
            Err(Error::Construction("mirror construction kept reproducing the original".into()))
        }
        Construction::Custom => Err(Error::Construction("custom pairs cannot be generated".into())),
    }
}

/// One seeded witness trial.
#[derive(Debug, Clone, Serialize)]
pub struct WitnessTrial {
    pub trial: usize,
    pub pair: DegeneratePair,
    pub anchor_gap: f64,
    pub report: WitnessReport,
    /// Recomputed gap at the reported witness exceeds the threshold.
    pub verified: bool,
}

impl WitnessTrial {
    /// Distinct configurations that exhausted every probe.
    pub fn is_anomaly(&self, params: &CslParams) -> bool {
        !self.pair.is_trivial(params) && !self.verified
    }
}

/// Runs `trials` independent constructions. Trial `t` draws from stream `t`
/// of a generator seeded with `seed`, so results do not depend on scheduling.
pub fn witness_trials(construction: Construction, n_particles: usize, trials: usize, seed: u64, params: &CslParams) -> Result<Vec<WitnessTrial>> {
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64);
            let pair = random_pair(construction, n_particles, params, rng.next_u64())?;
            let report = find_witness(&pair, params, rng.next_u64(), DEFAULT_RANDOM_PROBES);
            let verified = report
                .witness
                .as_ref()
                .is_some_and(|w| w.distance(&pair.anchor) > 0.0 && relative_gap(w, &pair.q_a, &pair.q_b, params).0 > WITNESS_RTOL);
            Ok(WitnessTrial { trial, anchor_gap: pair.anchor_gap(params), pair, report, verified })
        })
        .collect()
}

/// `C(n, k)`, or `None` once it exceeds `cap`.
pub fn binomial_capped(n: usize, k: usize, cap: u128) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k) as u128;
    let n = n as u128;
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
        if acc > cap {
            return None;
        }
    }
    Some(acc)
}

/// Every placement of `n_particles` identical particles on distinct sites,
/// in lexicographic order of site indices.
pub fn lattice_configurations(sites: &[Position], n_particles: usize) -> Result<Vec<ParticleConfiguration>> {
    if n_particles == 0 {
        return Err(Error::Validation("n_particles must be >= 1".into()));
    }
    if n_particles > sites.len() {
        return Err(Error::Validation(format!("{n_particles} particles do not fit on {} sites", sites.len())));
    }
    let count = binomial_capped(sites.len(), n_particles, MAX_BRUTE_CONFIGS)
        .ok_or(Error::TooLarge { count: binomial_capped(sites.len(), n_particles, u128::MAX).unwrap_or(u128::MAX), bound: MAX_BRUTE_CONFIGS })?;
    let mut out = Vec::with_capacity(count as usize);
    let mut idx: Vec<usize> = (0..n_particles).collect();
    loop {
        out.push(ParticleConfiguration::new(idx.iter().map(|&i| Particle::new(sites[i].clone())).collect())?);
        let Some(pos) = (0..n_particles).rev().find(|&i| idx[i] < sites.len() - n_particles + i) else {
            break;
        };
        idx[pos] += 1;
        for i in pos + 1..n_particles {
            idx[i] = idx[i - 1] + 1;
        }
    }
    Ok(out)
}

/// Sites of a rectangular lattice with `shape[k]` sites along axis `k`,
/// starting at the origin.
pub fn rectangular_lattice(shape: &[usize], spacing: f64) -> Result<Vec<Position>> {
    check_length("lattice spacing", spacing)?;
    if shape.is_empty() || shape.len() > 3 || shape.contains(&0) {
        return Err(Error::Validation(format!("lattice shape {shape:?} must have 1-3 positive extents")));
    }
    let mut sites = vec![Vec::new()];
    for &m in shape {
        sites = sites
            .into_iter()
            .flat_map(|prefix: Vec<f64>| {
                (0..m).map(move |i| {
                    let mut c = prefix.clone();
                    c.push(i as f64 * spacing);
                    c
                })
            })
            .collect();
    }
    sites.into_iter().map(Position::new).collect()
}

/// Result of exhaustively checking a lattice for CSL-protected subspaces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub n_configs: usize,
    pub n_pairs: usize,
    /// Smallest off-diagonal dephasing rate (s⁻¹); `None` for one configuration.
    pub min_pairwise_rate: Option<f64>,
    pub min_pair: Option<[usize; 2]>,
    /// Largest joint eigenspace over all `N(site)` probes.
    pub dfs_max_dimension: usize,
    pub seed: Option<u64>,
    /// Every pairwise rate is positive and no subspace of dimension ≥ 2 exists.
    pub holds: bool,
}

impl Certificate {
    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Enumerates every placement of `n_particles` on `sites`, finds the minimum
/// closed-form dephasing rate over all pairs, and runs the DFS scan with every
/// site as a probe.
pub fn brute_force_no_dfs(sites: &[Position], n_particles: usize, params: &CslParams) -> Result<Certificate> {
    let configs = lattice_configurations(sites, n_particles)?;
    let k = configs.len();
    let min = (0..k)
        .into_par_iter()
        .map(|i| -> Result<Option<(f64, usize, usize)>> {
            let mut best: Option<(f64, usize, usize)> = None;
            for j in i + 1..k {
                let d = pairwise_dephasing_rate(&configs[i], &configs[j], params, &RateMethod::ClosedForm, DensityKind::Number)?;
                if best.is_none_or(|(b, _, _)| d < b) {
                    best = Some((d, i, j));
                }
            }
            Ok(best)
        })
        .try_reduce(
            || None,
            |a, b| {
                Ok(match (a, b) {
                    (Some(x), Some(y)) => Some(if (y.0, y.1, y.2) < (x.0, x.1, x.2) { y } else { x }),
                    (x, None) => x,
                    (None, y) => y,
                })
            },
        )?;
    let scan = csl_dfs_scan(&configs, sites, params, DensityKind::Number)?;
    let min_pairwise_rate = min.map(|m| m.0);
    let holds = min_pairwise_rate.is_none_or(|d| d > 0.0) && scan.max_dimension <= 1;
    Ok(Certificate {
        n_configs: k,
        n_pairs: k * k.saturating_sub(1) / 2,
        min_pairwise_rate,
        min_pair: min.map(|m| [m.1, m.2]),
        dfs_max_dimension: scan.max_dimension,
        seed: None,
        holds,
    })
}
