use serde::Serialize;

use super::{distances, GeodesicSummary, NodeFailure};
use crate::dynamics::GeodesicPath;
use crate::error::{Error, Result};
use crate::profile::ToleranceProfile;
use crate::tensor::BerwaldMetric;

#[derive(Debug, Clone, Serialize)]
pub struct ConvexityReport {
    pub alpha: GeodesicSummary,
    pub beta: GeodesicSummary,
    pub grid: Vec<f64>,
    /// `d(α(t_i), β(t_i))`, null where the boundary-value problem failed.
    pub distances: Vec<Option<f64>>,
    /// Gap between the chord through the neighbours and the value at each
    /// interior node; nonnegative for a convex function.
    pub second_differences: Vec<f64>,
    pub min_second_difference: f64,
    /// Tolerance actually applied, `verifier_tol · max(1, max d)`.
    pub threshold: f64,
    /// Interior node with the smallest gap.
    pub witness: Option<usize>,
    pub failures: Vec<NodeFailure>,
    pub pass: bool,
}

/// Discrete convexity of `t ↦ d(α(t), β(t))` on `grid`.
pub fn check_distance_convexity(
    m: &BerwaldMetric,
    alpha: &GeodesicPath,
    beta: &GeodesicPath,
    grid: &[f64],
    profile: &ToleranceProfile,
) -> Result<ConvexityReport> {
    if grid.len() < 3 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("grid needs three or more increasing nodes".into()));
    }
    let mut pairs = Vec::with_capacity(grid.len());
    for &t in grid {
        pairs.push((alpha.position(t)?, beta.position(t)?));
    }
    let ds = distances(m, &pairs, profile);
    let mut failures = Vec::new();
    let values: Vec<Option<f64>> = ds
        .into_iter()
        .enumerate()
        .map(|(i, r)| match r {
            Ok(d) => Some(d),
            Err(e) => {
                failures.push(NodeFailure {
                    index: i,
                    t: grid[i],
                    error: e.to_string(),
                });
                None
            }
        })
        .collect();

    let scale = values.iter().flatten().fold(1.0f64, |a, b| a.max(*b));
    let threshold = profile.verifier_tol * scale;
    let mut second = Vec::new();
    let mut witness = None;
    let mut min = f64::INFINITY;
    for i in 1..grid.len() - 1 {
        let (Some(a), Some(b), Some(c)) = (values[i - 1], values[i], values[i + 1]) else {
            continue;
        };
        let (h0, h1) = (grid[i] - grid[i - 1], grid[i + 1] - grid[i]);
        let gap = (h1 * a + h0 * c) / (h0 + h1) - b;
        if gap < min {
            min = gap;
            witness = Some(i);
        }
        second.push(gap);
    }
    Ok(ConvexityReport {
        alpha: alpha.into(),
        beta: beta.into(),
        grid: grid.to_vec(),
        distances: values,
        second_differences: second,
        min_second_difference: min,
        threshold,
        witness,
        pass: failures.is_empty() && min >= -threshold,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::geodesic_ivp;
    use crate::metric::{catalog_metric, Params, TangentVector};

    fn berwald(name: &str) -> BerwaldMetric {
        BerwaldMetric::certify(&catalog_metric(name, &Params::new()).unwrap(), &ToleranceProfile::default(), 1)
            .unwrap()
    }

    fn grid(a: f64, b: f64, k: usize) -> Vec<f64> {
        (0..=k).map(|i| a + (b - a) * i as f64 / k as f64).collect()
    }

    #[test]
    fn euclidean_lines() {
        let prof = ToleranceProfile::default();
        let m = berwald("euclidean");
        let a = geodesic_ivp(&m, &TangentVector::new(vec![0.0, 0.0], vec![1.0, 0.0]), (0.0, 2.0), &prof).unwrap();
        let b = geodesic_ivp(&m, &TangentVector::new(vec![0.0, 1.0], vec![-0.5, 0.2]), (0.0, 2.0), &prof).unwrap();
        let r = check_distance_convexity(&m, &a, &b, &grid(0.0, 2.0, 8), &prof).unwrap();
        assert!(r.pass, "{r:?}");
        for (t, d) in r.grid.iter().zip(&r.distances) {
            let exact = ((1.5 * t).powi(2) + (1.0 + 0.2 * t).powi(2)).sqrt();
            assert!((d.unwrap() - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn radial_hyperbolic_geodesics() {
        let prof = ToleranceProfile::default();
        let m = berwald("poincare_disk");
        let th = 0.9f64;
        let a = geodesic_ivp(&m, &TangentVector::new(vec![0.0, 0.0], vec![0.5, 0.0]), (0.0, 3.0), &prof).unwrap();
        let b = geodesic_ivp(&m, &TangentVector::new(vec![0.0, 0.0], vec![0.5 * th.cos(), 0.5 * th.sin()]), (0.0, 3.0), &prof)
            .unwrap();
        let r = check_distance_convexity(&m, &a, &b, &grid(0.0, 3.0, 10), &prof).unwrap();
        assert!(r.pass, "{r:?}");
        // hyperbolic law of cosines
        for (t, d) in r.grid.iter().zip(&r.distances) {
            let exact = (t.cosh().powi(2) - t.sinh().powi(2) * th.cos()).acosh();
            assert!((d.unwrap() - exact).abs() < 1e-8, "{t} {d:?} {exact}");
        }
    }

    #[test]
    fn sphere_fails_with_witness() {
        let prof = ToleranceProfile::default();
        let m = berwald("round_sphere_chart");
        let a = geodesic_ivp(&m, &TangentVector::new(vec![0.0, 0.0], vec![0.5, 0.0]), (0.0, 2.5), &prof).unwrap();
        let b = geodesic_ivp(&m, &TangentVector::new(vec![0.0, 0.0], vec![0.0, 0.5]), (0.0, 2.5), &prof).unwrap();
        let r = check_distance_convexity(&m, &a, &b, &grid(0.0, 2.5, 10), &prof).unwrap();
        assert!(!r.pass);
        assert!(r.witness.is_some() && r.min_second_difference < -1e-3);
    }
}
