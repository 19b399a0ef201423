//! Numerical Finsler geometry: metrics, tensors, geodesics, Jacobi fields and
//! checks of nonpositive-curvature comparison results.

pub mod dsl;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod jet;
pub mod metric;
pub mod ode;
pub mod profile;
pub mod sampling;
pub mod scalar;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
pub use metric::{catalog_metric, product_metric, MetricDefinition, Params, TangentVector};
pub use profile::ToleranceProfile;
pub use tensor::BerwaldMetric;
