//! Particle positions, configurations (the labels of the number-density
//! eigenbasis) and species mass ratios.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in 1-3 dimensional space, coordinates in nm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Position(Vec<f64>);

impl Position {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if !(1..=3).contains(&coords.len()) {
            return Err(Error::Validation(format!(
                "position must have 1 to 3 coordinates, got {}",
                coords.len()
            )));
        }
        if let Some(c) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::Validation(format!("non-finite coordinate {c}")));
        }
        Ok(Position(coords))
    }

    pub fn origin(dim: usize) -> Self {
        Position(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn distance_sq(&self, other: &Position) -> f64 {
        assert_eq!(self.dim(), other.dim(), "position dimensions differ");
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    pub fn distance(&self, other: &Position) -> f64 {
        self.distance_sq(other).sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum()
    }

    /// `self + scale * dir`, with `dir` given as raw components.
    pub fn offset(&self, dir: &[f64], scale: f64) -> Position {
        assert_eq!(self.dim(), dir.len(), "offset dimension differs");
        Position(self.0.iter().zip(dir).map(|(a, d)| a + scale * d).collect())
    }

    fn lex_cmp(&self, other: &Position) -> Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.total_cmp(b) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.dim().cmp(&other.dim())
    }
}

impl TryFrom<Vec<f64>> for Position {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Position::new(v)
    }
}

impl From<Position> for Vec<f64> {
    fn from(p: Position) -> Self {
        p.0
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// One localized excitation. The spin label is carried along but never
/// enters a density eigenvalue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub pos: Position,
    #[serde(default)]
    pub species: u32,
    #[serde(default)]
    pub spin: i32,
}

impl Particle {
    pub fn new(pos: Position) -> Self {
        Particle { pos, species: 0, spin: 0 }
    }

    pub fn with_species(pos: Position, species: u32) -> Self {
        Particle { pos, species, spin: 0 }
    }

    fn canonical_cmp(&self, other: &Particle) -> Ordering {
        self.species
            .cmp(&other.species)
            .then_with(|| self.pos.lex_cmp(&other.pos))
            .then_with(|| self.spin.cmp(&other.spin))
    }
}

/// An ordered list of `N >= 1` particles sharing one spatial dimension.
///
/// Two configurations are the same physical state when they agree as
/// multisets of `(position, species)`; see [`ParticleConfiguration::same_multiset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfiguration", into = "RawConfiguration")]
pub struct ParticleConfiguration {
    particles: Vec<Particle>,
    canonical: bool,
}

#[derive(Serialize, Deserialize)]
struct RawConfiguration {
    particles: Vec<Particle>,
}

impl TryFrom<RawConfiguration> for ParticleConfiguration {
    type Error = Error;

    fn try_from(raw: RawConfiguration) -> Result<Self> {
        ParticleConfiguration::new(raw.particles)
    }
}

impl From<ParticleConfiguration> for RawConfiguration {
    fn from(c: ParticleConfiguration) -> Self {
        RawConfiguration { particles: c.particles }
    }
}

impl ParticleConfiguration {
    pub fn new(particles: Vec<Particle>) -> Result<Self> {
        let first = particles
            .first()
            .ok_or_else(|| Error::Validation("configuration needs at least one particle".into()))?;
        let dim = first.pos.dim();
        for (i, p) in particles.iter().enumerate() {
            if p.pos.dim() != dim {
                return Err(Error::Validation(format!(
                    "particle {i} has dimension {}, expected {dim}",
                    p.pos.dim()
                )));
            }
            if p.pos.coords().iter().any(|c| !c.is_finite()) {
                return Err(Error::Validation(format!("particle {i} has a non-finite coordinate")));
            }
        }
        Ok(ParticleConfiguration { particles, canonical: false })
    }

    /// Species-0, spin-0 particles at the given coordinates.
    pub fn from_coords<I, C>(coords: I) -> Result<Self>
    where
        I: IntoIterator<Item = C>,
        C: Into<Vec<f64>>,
    {
        let particles = coords
            .into_iter()
            .map(|c| Position::new(c.into()).map(Particle::new))
            .collect::<Result<Vec<_>>>()?;
        Self::new(particles)
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.particles[0].pos.dim()
    }

    pub fn is_canonical(&self) -> bool {
        self.canonical
    }

    pub fn positions(&self) -> impl Iterator<Item = &Position> {
        self.particles.iter().map(|p| &p.pos)
    }

    /// Particles sorted lexicographically by `(species, coordinates, spin)`.
    pub fn canonicalize(&self) -> ParticleConfiguration {
        let mut particles = self.particles.clone();
        particles.sort_by(Particle::canonical_cmp);
        ParticleConfiguration { particles, canonical: true }
    }

    /// Multiset equality of `(position, species)` pairs, positions compared
    /// with Euclidean tolerance `tol`. Spin labels are ignored.
    pub fn same_multiset(&self, other: &ParticleConfiguration, tol: f64) -> bool {
        if self.len() != other.len() || self.dim() != other.dim() {
            return false;
        }
        let tol_sq = tol * tol;
        let mut used = vec![false; other.len()];
        'outer: for p in &self.particles {
            for (j, q) in other.particles.iter().enumerate() {
                if !used[j] && p.species == q.species && p.pos.distance_sq(&q.pos) <= tol_sq {
                    used[j] = true;
                    continue 'outer;
                }
            }
            return false;
        }
        true
    }

    /// Smallest axis-aligned box containing every particle.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        bounding_box(std::iter::once(self))
    }
}

/// Bounding box over every particle of every configuration.
pub fn bounding_box<'a, I>(configs: I) -> (Vec<f64>, Vec<f64>)
where
    I: IntoIterator<Item = &'a ParticleConfiguration>,
{
    let mut lo: Vec<f64> = Vec::new();
    let mut hi: Vec<f64> = Vec::new();
    for c in configs {
        for p in c.positions() {
            if lo.is_empty() {
                lo = p.coords().to_vec();
                hi = p.coords().to_vec();
                continue;
            }
            for (k, &x) in p.coords().iter().enumerate() {
                lo[k] = lo[k].min(x);
                hi[k] = hi[k].max(x);
            }
        }
    }
    (lo, hi)
}

/// Reads a configuration-basis file:
/// `[{"particles":[{"pos":[x,y,z],"species":0,"spin":0},...]},...]`.
pub fn read_basis(path: impl AsRef<Path>) -> Result<Vec<ParticleConfiguration>> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_basis(path: impl AsRef<Path>, basis: &[ParticleConfiguration]) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(basis)?)?;
    Ok(())
}

/// Mass ratios `m_k / m_0` by species label. Label 0 is the reference
/// species and always maps to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesTable {
    ratios: BTreeMap<u32, f64>,
}

impl Default for SpeciesTable {
    fn default() -> Self {
        let mut ratios = BTreeMap::new();
        ratios.insert(0, 1.0);
        SpeciesTable { ratios }
    }
}

impl SpeciesTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_species(mut self, label: u32, ratio: f64) -> Result<Self> {
        self.insert(label, ratio)?;
        Ok(self)
    }

    pub fn insert(&mut self, label: u32, ratio: f64) -> Result<()> {
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(Error::Validation(format!("mass ratio must be finite and > 0, got {ratio}")));
        }
        if label == 0 && ratio != 1.0 {
            return Err(Error::Validation("species 0 is the reference and must have ratio 1".into()));
        }
        self.ratios.insert(label, ratio);
        Ok(())
    }

    pub fn ratio(&self, label: u32) -> Result<f64> {
        self.ratios.get(&label).copied().ok_or(Error::UnknownSpecies(label))
    }
}
