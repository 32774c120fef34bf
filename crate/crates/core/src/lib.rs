//! Numerical laboratory for open-system dynamics under continuous spontaneous
//! localization (CSL): Lindblad evolution, CSL density operators on the
//! configuration basis, decoherence-free subspace search, and constructive
//! checks that no configuration subspace is protected against CSL collapse.

pub mod config;
pub mod csl;
pub mod dfs;
pub mod error;
pub mod lindblad;
pub mod model;
pub mod params;
pub mod rates;
pub mod theorem2;

pub use config::{Particle, ParticleConfiguration, Position, SpeciesTable};
pub use csl::{DensityKind, DephasingMatrix, ProbePoint, QuadratureGrid, RateMethod};
pub use error::{Error, Result};
pub use model::{DensityMatrix, LindbladModel, ValidationReport};
pub use params::CslParams;
pub use theorem2::{Certificate, Construction, DegeneratePair, WitnessReport};
pub use rates::{ScanConfig, ScanRecord};
pub use lindblad::{DecayFit, EvolutionResult};
pub use dfs::{DfsReport, JointEigenspace};
