use serde::Serialize;

use super::{distances, par_map, GeodesicSummary};
use crate::dynamics::{geodesic_bvp, GeodesicPath};
use crate::error::{Error, Result};
use crate::profile::ToleranceProfile;
use crate::tensor::{flag_ratio, BerwaldMetric, Curvature};

const WIDTH_NODES: usize = 9;
const S_NODES: usize = 9;
const T_NODES: usize = 5;

#[derive(Debug, Clone, Serialize)]
pub struct FlatStripReport {
    pub alpha: GeodesicSummary,
    pub beta: GeodesicSummary,
    pub times: Vec<f64>,
    /// `d(α(t), β(t))`
    pub widths: Vec<f64>,
    /// `(max − min) / max(1, max)` of the widths.
    pub width_variation: f64,
    pub parallel: bool,
    /// Largest relative excess of the summed neighbour distances along an
    /// s-curve of the variation over the distance between its ends; zero
    /// exactly when the sampled s-curve lies on a geodesic.
    pub geodesic_residual: Option<f64>,
    /// Largest `|K|` on the flags spanned by the t- and s-velocities.
    pub flatness_residual: Option<f64>,
    pub strip: bool,
}

fn lerp(a: f64, b: f64, k: usize, count: usize) -> f64 {
    if k + 1 == count {
        b
    } else {
        a + (b - a) * k as f64 / (count - 1) as f64
    }
}

/// Tests whether `α` and `β` stay at constant distance and, if so, whether
/// the variation by connecting geodesics is a flat, totally geodesic strip.
///
/// With `γ` joining `α(a)` to `β(a)` and `δ` joining `α(b)` to `β(b)`, the
/// variation is `Σ(t, s)`: the geodesic from `γ(s)` to `δ(s)` at parameter
/// `(t − a)/(b − a)`.
pub fn detect_flat_strip(
    m: &BerwaldMetric,
    alpha: &GeodesicPath,
    beta: &GeodesicPath,
    profile: &ToleranceProfile,
) -> Result<FlatStripReport> {
    let a = alpha.t_start().max(beta.t_start());
    let b = alpha.t_end().min(beta.t_end());
    if !(b > a) {
        return Err(Error::Precondition("geodesics share no parameter interval".into()));
    }
    let tol = profile.verifier_tol;
    let times: Vec<f64> = (0..WIDTH_NODES).map(|k| lerp(a, b, k, WIDTH_NODES)).collect();
    let mut pairs = Vec::new();
    for &t in &times {
        pairs.push((alpha.position(t)?, beta.position(t)?));
    }
    let widths = distances(m, &pairs, profile).into_iter().collect::<Result<Vec<f64>>>()?;
    let wmax = widths.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let wmin = widths.iter().copied().fold(f64::INFINITY, f64::min);
    let width_variation = (wmax - wmin) / wmax.max(1.0);
    let parallel = width_variation < tol && wmin > 0.0;

    let mut report = FlatStripReport {
        alpha: alpha.into(),
        beta: beta.into(),
        times,
        widths,
        width_variation,
        parallel,
        geodesic_residual: None,
        flatness_residual: None,
        strip: false,
    };
    if !parallel {
        return Ok(report);
    }

    let n = m.dim();
    let gamma = geodesic_bvp(m, &alpha.position(a)?, &beta.position(a)?, profile)?;
    let delta = geodesic_bvp(m, &alpha.position(b)?, &beta.position(b)?, profile)?;
    let s_grid: Vec<f64> = (0..S_NODES).map(|k| lerp(0.0, 1.0, k, S_NODES)).collect();
    let t_curves = par_map(&s_grid, |&s| -> Result<GeodesicPath> {
        geodesic_bvp(m, &gamma.position(s)?, &delta.position(s)?, profile)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let u_grid: Vec<f64> = (1..=T_NODES).map(|k| k as f64 / (T_NODES + 1) as f64).collect();
    // Σ(u, s_j) at the interior parameters
    let mut sigma = Vec::with_capacity(T_NODES);
    for &u in &u_grid {
        let row = t_curves.iter().map(|c| c.position(u)).collect::<Result<Vec<_>>>()?;
        sigma.push(row);
    }

    let mut geodesic_residual: f64 = 0.0;
    for row in &sigma {
        let mut links: Vec<(Vec<f64>, Vec<f64>)> = row.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect();
        links.push((row[0].clone(), row[S_NODES - 1].clone()));
        let ds = distances(m, &links, profile).into_iter().collect::<Result<Vec<f64>>>()?;
        let total = ds[S_NODES - 1];
        let summed: f64 = ds[..S_NODES - 1].iter().sum();
        geodesic_residual = geodesic_residual.max((summed - total) / total.max(1.0));
    }

    let mut flatness: f64 = 0.0;
    for (i, &u) in u_grid.iter().enumerate() {
        for j in 0..S_NODES {
            let x = &sigma[i][j];
            let pole = t_curves[j].velocity(u)?;
            let (lo, hi) = (j.saturating_sub(1), (j + 1).min(S_NODES - 1));
            let edge: Vec<f64> = (0..n).map(|k| sigma[i][hi][k] - sigma[i][lo][k]).collect();
            let c = Curvature::at(m.metric(), x, &pole)?;
            match flag_ratio(&c, &pole, &edge, profile.flag_degeneracy) {
                Ok(k) => flatness = flatness.max(k.abs()),
                Err(Error::DegenerateFlag { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
    }
    report.geodesic_residual = Some(geodesic_residual);
    report.flatness_residual = Some(flatness);
    report.strip = geodesic_residual < tol && flatness < tol;
    Ok(report)
}
