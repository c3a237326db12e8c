//! Numerical toolkit for conformal uniformization of countably connected domains.

pub mod domain;
pub mod error;
pub mod exhaust;
pub mod fixtures;
pub mod gap;
pub mod geom;
pub mod grid;
pub mod koebe;
pub mod modulus;
pub mod render;
pub mod zipper;

pub use domain::{ComplementComponent, DomainSpec, NondegeneracyReport, Shape};
pub use error::{Error, Result};
pub use exhaust::{ExhaustionPlan, ExhaustionTrace, KernelReport, StageRecord, WitnessMetricReport};
pub use gap::RadiiLadder;
pub use geom::{ExtPoint, Mobius, PlanePoint};
pub use grid::{ExtendedMetric, QuotientGrid, Refinement, Window};
pub use koebe::{CircleDomain, KoebeOptions, KoebeOutcome, NumericMap};
pub use modulus::{ELResult, FamilySpec};
