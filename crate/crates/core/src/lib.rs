//! Butterfly compression of associated Legendre transforms.
//!
//! The crate builds multilevel interpolative representations of the
//! unitary matrices that map Legendre coefficients of a fixed order to
//! weighted values at Gauss-Jacobi nodes, and applies them (and their
//! transposes) in near-linear time.
//!
//! * [`id`] computes interpolative decompositions of dense blocks.
//! * [`legendre`] evaluates normalized associated Legendre functions by
//!   exponent-tracked recurrence.
//! * [`quadrature`] finds the positive zeros and weights of those functions.
//! * [`butterfly`] compresses any matrix available column by column.
//! * [`transform`] binds the pieces into forward and inverse transforms.
//! * [`oracle`] holds slow, independent reference computations.

pub mod butterfly;
pub mod error;
pub mod id;
pub mod legendre;
pub mod oracle;
pub mod quadrature;
pub mod scaled;
pub mod transform;

pub use butterfly::{build_plan, ButterflyPlan, ColumnSource, DenseSource, PlanStats};
pub use error::{Error, Result};
pub use id::InterpolativeDecomposition;
pub use legendre::{DegreeSweep, Parity, RecurrenceCoefficients};
pub use quadrature::{QuadratureCache, QuadratureRule};
pub use scaled::ScaledReal;
pub use transform::{Scaling, TransformPlan};
