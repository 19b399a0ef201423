//! Numerical checks of the nonpositive-curvature comparison results:
//! distance convexity, the chord angle, behaviour toward infinity, flat
//! strips and the uniformity constant.

mod angle;
mod convexity;
mod strip;
mod uniformity;

use rayon::prelude::*;
use serde::Serialize;

pub use angle::{
    angle, check_angle_monotonicity_to_infinity, check_chord_monotonicity, tits_distance_estimate,
    AngleInfinityReport, AngleReport, ChordReport, TitsReport,
};
pub use convexity::{check_distance_convexity, ConvexityReport};
pub use strip::{detect_flat_strip, FlatStripReport};
pub use uniformity::{uniformity_constant, UniformityReport};

use crate::dynamics::GeodesicPath;
use crate::error::{Error, Result};
use crate::metric::MetricDefinition;
use crate::profile::ToleranceProfile;

/// Initial data and parameter interval of a geodesic, for reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeodesicSummary {
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub t_start: f64,
    pub t_end: f64,
}

impl From<&GeodesicPath> for GeodesicSummary {
    fn from(p: &GeodesicPath) -> Self {
        GeodesicSummary {
            x0: p.x0.clone(),
            y0: p.y0.clone(),
            t_start: p.t_start(),
            t_end: p.t_end(),
        }
    }
}

/// A grid node whose boundary-value problem failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeFailure {
    pub index: usize,
    pub t: f64,
    pub error: String,
}

/// Evaluates `f` on every item, possibly concurrently, in input order.
pub(crate) fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}

/// `d(a, b)` at each pair, keeping failures per index.
pub(crate) fn distances(
    m: &MetricDefinition,
    pairs: &[(Vec<f64>, Vec<f64>)],
    profile: &ToleranceProfile,
) -> Vec<Result<f64>> {
    par_map(pairs, |(a, b)| crate::dynamics::distance(m, a, b, profile))
}

pub(crate) fn unit_check(m: &MetricDefinition, p: &[f64], v: &[f64], name: &str, profile: &ToleranceProfile) -> Result<()> {
    let f = m.check_slit(p, v, profile.slit_epsilon)?;
    if (f - 1.0).abs() > 1e-9 {
        return Err(Error::Precondition(format!("{name} must be a unit vector, F = {f}")));
    }
    Ok(())
}

/// `F_p(b − a)`, zero when the vectors coincide.
pub(crate) fn chord(m: &MetricDefinition, p: &[f64], a: &[f64], b: &[f64]) -> Result<f64> {
    let d: Vec<f64> = b.iter().zip(a).map(|(b, a)| b - a).collect();
    if d.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    Ok(m.eval_norm(p, &d)?)
}
