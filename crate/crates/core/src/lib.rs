//! Construction and evaluation of optimum experimental designs for full
//! second-order response-surface models.
//!
//! The crate covers four areas:
//!
//! * [`model`]: polynomial model expansion, designs, candidate sets and
//!   degrees-of-freedom accounting;
//! * [`region`] and [`numerics`]: region moment matrices, F quantiles and the
//!   symmetric linear-algebra kernels behind the criteria;
//! * [`criteria`]: the single criteria `D_S`, `(DP)_S`, `A_S`, `(AP)_S`, `I`,
//!   `(IP)`, `I_D`, `(I_DP)`, the weighted compound criterion that combines
//!   them, and efficiency tables over sets of competing designs;
//! * [`optimizer`] and [`graphs`]: multistart candidate-set point exchange,
//!   and data generation for variance dispersion (VDG/DVDG) and
//!   fraction-of-design-space (FDS/DFDS) plots.
//!
//! All numeric kernels are generic over the [`Scalar`] type; `f64` is the
//! default type parameter everywhere and what the CLI uses.

pub mod criteria;
pub mod error;
pub mod graphs;
pub mod io;
pub mod model;
pub mod numerics;
pub mod optimizer;
pub mod region;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use criteria::{CriterionConfig, CriterionKind, CriterionValue, EfficiencyTable};
pub use graphs::{GraphAxis, GraphConfig, GraphScale, GraphSeries, GraphVariant};
pub use model::{CandidateSet, Design, FactorPoint, ModelSpec, Term};
pub use optimizer::{SearchConfig, SearchResult, VerifyReport};
pub use region::{MomentMatrix, Region};

/// Default concrete scalar used by the CLI and the type aliases below.
pub type Real = f64;

/// `f64` design, the form every CLI path works with.
pub type DesignF64 = Design<f64>;
/// `f64` region.
pub type RegionF64 = Region<f64>;
/// `f64` criterion configuration.
pub type CriterionConfigF64 = CriterionConfig<f64>;
