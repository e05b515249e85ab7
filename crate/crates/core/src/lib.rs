//! Ruelle–Pollicott resonances of chaotic flows and maps via viscosity
//! regularization: Fourier–Galerkin generators `(1/i)V + iεΔ`, noisy Koopman
//! operators, non-Hermitian eigensolvers, ε → 0 continuation, contour
//! projectors, correlation expansions and trajectory diagnostics.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod continuation;
pub mod correlation;
pub mod dynamics;
pub mod eigen;
pub mod error;
pub mod linalg;
pub mod models;
pub mod projector;

pub use assembly::{AssemblyOptions, FourierTruncation, OperatorKind, OperatorMatrix, Storage, StoragePolicy};
pub use continuation::{Branch, BranchStatus, KPolicy, SpectralSystem, SweepResult};
pub use correlation::{CorrelationTrace, McConfig, Observable};
pub use dynamics::{SectionCrossings, SeedClass};
pub use eigen::{ResonanceSet, Window};
pub use error::{Error, Result};
pub use linalg::{CMatrix, C64};
pub use models::{FlowField, MapSystem, TrigPoly};
pub use projector::Projector;
