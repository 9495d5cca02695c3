//! Rearrangements, Choquet integrals, Bessel-type kernels and numerical
//! discreteness criteria for the spectrum of `-Delta + V`.
//!
//! Every module works on finite discretizations: weighted samples, cell
//! grids of cubes and balls, and finite dense systems of boxes. Exact
//! rational arithmetic is available wherever the [`Scalar`] trait appears.

pub mod choquet;
pub mod criteria;
pub mod error;
pub mod extremal;
pub mod kernels;
pub mod measure_space;
pub mod partitions;
pub mod potentials;
pub mod rearrange;
pub mod scalar;

pub use choquet::{FiniteMeasureVector, MonotoneSetFunction};
pub use criteria::{CriterionReport, GammaFunction, MadicSetup, MadicStrategy};
pub use error::{Error, Result};
pub use extremal::ExtremalInstance;
pub use kernels::{Kernel, KernelKind, KernelMatrix, KernelSpec, QuadratureSettings};
pub use measure_space::{Cell, DensityLabel, DensityMeasure, DiscreteMeasureSpace, DomainKind};
pub use num_rational::BigRational;
pub use partitions::{DenseSystem, Interval, Parallelepiped, VerifierReport};
pub use potentials::{GrowthProfile, PotentialSpec, ValphaParams};
pub use rearrange::{DecreasingProfile, Matrix2D, WeightedSample};
pub use scalar::Scalar;
