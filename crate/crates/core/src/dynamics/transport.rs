use serde::Serialize;

use super::geodesic::GeodesicPath;
use crate::error::{Error, Result};
use crate::ode::{integrate, OdeOptions};
use crate::profile::ToleranceProfile;
use crate::tensor::{chern_flat, BerwaldMetric};

/// A parametrized chart curve.
pub trait Curve {
    fn dim(&self) -> usize;
    fn span(&self) -> (f64, f64);
    fn position(&self, t: f64) -> Result<Vec<f64>>;
    fn velocity(&self, t: f64) -> Result<Vec<f64>>;
    /// Parameters where the velocity may jump, strictly inside the span.
    fn breaks(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Piecewise-linear curve through `points`, vertex `k` at `t = k`.
#[derive(Debug, Clone, Serialize)]
pub struct Polyline {
    pub points: Vec<Vec<f64>>,
}

impl Polyline {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidArgument("a polyline needs two points".into()));
        }
        let n = points[0].len();
        if let Some(p) = points.iter().find(|p| p.len() != n) {
            return Err(Error::Dimension {
                expected: n,
                found: p.len(),
            });
        }
        Ok(Polyline { points })
    }

    fn piece(&self, t: f64) -> (usize, f64) {
        let k = (t.floor().max(0.0) as usize).min(self.points.len() - 2);
        (k, t - k as f64)
    }
}

impl Curve for Polyline {
    fn dim(&self) -> usize {
        self.points[0].len()
    }

    fn span(&self) -> (f64, f64) {
        (0.0, (self.points.len() - 1) as f64)
    }

    fn position(&self, t: f64) -> Result<Vec<f64>> {
        let (k, u) = self.piece(t);
        let (a, b) = (&self.points[k], &self.points[k + 1]);
        Ok(a.iter().zip(b).map(|(a, b)| a + u * (b - a)).collect())
    }

    fn velocity(&self, t: f64) -> Result<Vec<f64>> {
        let (k, _) = self.piece(t);
        let (a, b) = (&self.points[k], &self.points[k + 1]);
        Ok(a.iter().zip(b).map(|(a, b)| b - a).collect())
    }

    fn breaks(&self) -> Vec<f64> {
        (1..self.points.len() - 1).map(|k| k as f64).collect()
    }
}

/// Cubic Bézier curve on `[0, 1]`.
#[derive(Debug, Clone, Serialize)]
pub struct Bezier {
    pub control: [Vec<f64>; 4],
}

impl Curve for Bezier {
    fn dim(&self) -> usize {
        self.control[0].len()
    }

    fn span(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn position(&self, t: f64) -> Result<Vec<f64>> {
        let s = 1.0 - t;
        let w = [s * s * s, 3.0 * s * s * t, 3.0 * s * t * t, t * t * t];
        Ok((0..self.dim())
            .map(|i| (0..4).map(|k| w[k] * self.control[k][i]).sum())
            .collect())
    }

    fn velocity(&self, t: f64) -> Result<Vec<f64>> {
        let s = 1.0 - t;
        let w = [3.0 * s * s, 6.0 * s * t, 3.0 * t * t];
        let c = &self.control;
        Ok((0..self.dim())
            .map(|i| (0..3).map(|k| w[k] * (c[k + 1][i] - c[k][i])).sum())
            .collect())
    }
}

impl Curve for GeodesicPath {
    fn dim(&self) -> usize {
        self.metric().dim()
    }

    fn span(&self) -> (f64, f64) {
        (self.t_start(), self.t_end())
    }

    fn position(&self, t: f64) -> Result<Vec<f64>> {
        GeodesicPath::position(self, t)
    }

    fn velocity(&self, t: f64) -> Result<Vec<f64>> {
        GeodesicPath::velocity(self, t)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TransportResult {
    pub initial: Vec<f64>,
    #[serde(rename = "final")]
    pub final_vector: Vec<f64>,
    /// `|F(end) − F(start)|`
    pub norm_drift: f64,
    /// Largest `|F(t) − F(start)|` over the integrator nodes.
    pub max_drift: f64,
    /// F-length of the curve.
    pub length: f64,
    /// `max_drift / max(length, 1)`.
    pub drift_per_length: f64,
    /// `(t, x…, W…)` at the integrator nodes.
    #[serde(skip)]
    pub samples: Vec<Vec<f64>>,
}

/// Solves `dW/dt + Γ^i_jk(x) W^j ẋ^k = 0` along `curve` from `w0`.
pub fn parallel_transport(
    m: &BerwaldMetric,
    curve: &dyn Curve,
    w0: &[f64],
    profile: &ToleranceProfile,
) -> Result<TransportResult> {
    let n = m.dim();
    if curve.dim() != n || w0.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: if curve.dim() != n { curve.dim() } else { w0.len() },
        });
    }
    let (a, b) = curve.span();
    let mut knots = vec![a];
    knots.extend(curve.breaks().into_iter().filter(|t| *t > a && *t < b));
    knots.push(b);
    let opts = OdeOptions::new(profile.integrator_atol, profile.integrator_rtol, profile.integrator_max_steps);
    let metric = m.metric();
    // Berwald coefficients do not depend on the direction they are read at
    let mut reference = vec![0.0; n];
    reference[0] = 1.0;

    let start = curve.position(a)?;
    m.check_point(&start)?;
    let f0 = metric.eval_norm(&start, w0)?;
    let mut w = w0.to_vec();
    // state: (W, arc length)
    let mut samples = Vec::new();
    let mut length = 0.0;
    let mut max_drift: f64 = 0.0;
    for piece in knots.windows(2) {
        let (lo, hi) = (piece[0], piece[1]);
        // velocities on a piece are taken from its interior so polyline
        // corners use the incoming and outgoing sides respectively
        let eps = 1e-12 * (hi - lo);
        let rhs = |t: f64, s: &[f64], d: &mut [f64]| -> Result<()> {
            let tc = t.clamp(lo + eps, hi - eps);
            let x = curve.position(t)?;
            let v = curve.velocity(tc)?;
            if !metric.contains(&x) {
                return Err(Error::ChartViolation { point: x });
            }
            let gam = chern_flat(metric, &x, &reference)?;
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    for k in 0..n {
                        acc += gam[(i * n + j) * n + k] * s[j] * v[k];
                    }
                }
                d[i] = -acc;
            }
            d[n] = metric.eval_norm(&x, &v)?;
            Ok(())
        };
        let mut s0 = w.clone();
        s0.push(length);
        let traj = integrate(rhs, lo, &s0, hi, &opts)?;
        for (t, s) in traj.times.iter().zip(&traj.states) {
            let x = curve.position(*t)?;
            let f = metric.eval_norm(&x, &s[..n])?;
            max_drift = max_drift.max((f - f0).abs());
            let mut row = vec![*t];
            row.extend_from_slice(&x);
            row.extend_from_slice(&s[..n]);
            samples.push(row);
        }
        let end = traj.states.last().expect("nonempty");
        w = end[..n].to_vec();
        length = end[n];
    }
    let end = curve.position(b)?;
    let f1 = metric.eval_norm(&end, &w)?;
    Ok(TransportResult {
        initial: w0.to_vec(),
        final_vector: w,
        norm_drift: (f1 - f0).abs(),
        max_drift,
        length,
        drift_per_length: max_drift / length.max(1.0),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{catalog_metric, Params};
    use crate::tensor::{fundamental_matrix, inner};

    fn berwald(name: &str) -> BerwaldMetric {
        BerwaldMetric::certify(&catalog_metric(name, &Params::new()).unwrap(), &ToleranceProfile::default(), 1)
            .unwrap()
    }

    #[test]
    fn flat_transport_is_constant() {
        let prof = ToleranceProfile::default();
        let curve = Bezier {
            control: [vec![0.0, 0.0], vec![1.0, 2.0], vec![-1.0, 1.5], vec![0.5, -0.3]],
        };
        for name in ["euclidean", "minkowski_quartic", "randers_flat"] {
            let m = berwald(name);
            let r = parallel_transport(&m, &curve, &[0.4, -0.7], &prof).unwrap();
            assert!((r.final_vector[0] - 0.4).abs() < 1e-14 && (r.final_vector[1] + 0.7).abs() < 1e-14);
            assert_eq!(r.norm_drift, 0.0);
        }
    }

    /// Hyperbolic area of `[a, b] × [c, d]` by tensor Simpson.
    fn hyperbolic_area(a: f64, b: f64, c: f64, d: f64) -> f64 {
        let k = 400;
        let w = |i: usize| if i == 0 || i == k { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let (hx, hy) = ((b - a) / k as f64, (d - c) / k as f64);
        let mut acc = 0.0;
        for i in 0..=k {
            for j in 0..=k {
                let (x, y) = (a + hx * i as f64, c + hy * j as f64);
                acc += w(i) * w(j) * 4.0 / (1.0 - x * x - y * y).powi(2);
            }
        }
        acc * hx * hy / 9.0
    }

    #[test]
    fn hyperbolic_holonomy_is_area() {
        let prof = ToleranceProfile::default();
        let m = berwald("poincare_disk");
        let (a, b) = (-0.3, 0.4);
        let square = Polyline::new(vec![vec![a, a], vec![b, a], vec![b, b], vec![a, b], vec![a, a]]).unwrap();
        let w0 = [0.2, 0.0];
        let r = parallel_transport(&m, &square, &w0, &prof).unwrap();
        let g = fundamental_matrix(&m, &[a, a], &w0).unwrap();
        let (u, v) = (&r.initial, &r.final_vector);
        let cos = inner(&g, u, v) / (inner(&g, u, u) * inner(&g, v, v)).sqrt();
        let cross = u[0] * v[1] - u[1] * v[0];
        let angle = cos.clamp(-1.0, 1.0).acos() * cross.signum();
        let area = hyperbolic_area(a, b, a, b);
        // counterclockwise loop in curvature −1 turns vectors clockwise by the area
        assert!((angle + area).abs() < 1e-8, "{angle} vs {area}");
        assert!(r.drift_per_length < 1e-7);
    }

    #[test]
    fn transport_is_linear() {
        let prof = ToleranceProfile::default();
        let m = berwald("round_sphere_chart");
        let curve = Bezier {
            control: [vec![0.1, 0.0], vec![1.0, 0.8], vec![-0.6, 1.2], vec![0.3, -0.4]],
        };
        let u = parallel_transport(&m, &curve, &[1.0, 0.0], &prof).unwrap().final_vector;
        let w = parallel_transport(&m, &curve, &[0.0, 1.0], &prof).unwrap().final_vector;
        let c = parallel_transport(&m, &curve, &[2.0, -3.0], &prof).unwrap().final_vector;
        for i in 0..2 {
            assert!((c[i] - (2.0 * u[i] - 3.0 * w[i])).abs() < 1e-9);
        }
    }
}
