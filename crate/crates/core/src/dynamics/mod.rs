//! Geodesics, distance, parallel transport, Jacobi fields and rank.

mod geodesic;
mod jacobi;
mod rank;
mod rauch;
mod transport;

pub use geodesic::{distance, geodesic_bvp, geodesic_ivp, GeodesicPath};
pub use rauch::{rauch_check, RauchReport};
pub use rank::{rank_estimate, RankEstimate};
pub use transport::{parallel_transport, Bezier, Curve, Polyline, TransportResult};
pub use jacobi::{classify_jacobi, jacobi_ivp, JacobiClass, JacobiSolution};

/// Locale-free decimal with 17 significant digits.
pub fn csv_number(v: f64) -> String {
    format!("{v:.16e}")
}
