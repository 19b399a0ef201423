use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use super::geodesic::{check_state, metric_weight, RESOLUTION_LIMIT};
use super::geodesic::ode_options;
use crate::error::{Error, Result};
use crate::metric::TangentVector;
use crate::ode::{integrate_window, MetricScale, Trajectory};
use crate::profile::ToleranceProfile;
use crate::tensor::{inner, BerwaldMetric, Curvature};

#[derive(Debug, Clone, Serialize)]
pub struct RankEstimate {
    pub vector: TangentVector,
    pub horizon: f64,
    /// Singular values of the form on `[−T, T]`, largest first.
    pub singular_values: Vec<f64>,
    /// Same at `2T`.
    pub singular_values_doubled: Vec<f64>,
    pub rank: usize,
    /// Rank unchanged when the horizon is doubled.
    pub stable: bool,
}

/// Geodesic through `v` with the coordinate basis parallel-transported
/// along it: state `(x, y, E_1, …, E_n)`.
fn parallel_frame(m: &BerwaldMetric, v: &TangentVector, t: f64, profile: &ToleranceProfile) -> Result<Trajectory> {
    let n = m.dim();
    let mut s0 = v.base.clone();
    s0.extend_from_slice(&v.components);
    for i in 0..n {
        s0.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
    }
    let metric = m.metric();
    let rhs = |_: f64, s: &[f64], d: &mut [f64]| -> Result<()> {
        check_state(metric, s, RESOLUTION_LIMIT)?;
        let (x, y) = (&s[..n], &s[n..2 * n]);
        let c = Curvature::at(metric, x, y)?;
        d[..n].copy_from_slice(y);
        let a = c.connection(y, y);
        for i in 0..n {
            d[n + i] = -a[i];
        }
        for f in 0..n {
            let o = 2 * n + n * f;
            let ge = c.connection(&s[o..o + n], y);
            for i in 0..n {
                d[o + i] = -ge[i];
            }
        }
        Ok(())
    };
    let weight = metric_weight(metric);
    let scale = MetricScale {
        scale: &weight,
        positions: n,
        vectors: n + n * n,
    };
    integrate_window(rhs, Some(&scale), 0.0, &s0, -t, t, &ode_options(profile))
}

/// `Q_ab = (1/2T) ∫_{−T}^{T} −g_T(R(E_a, T)T, E_b) dt` by composite Simpson.
///
/// Under nonpositive flag curvature `Q` is positive semidefinite and its
/// nullspace is the set of parallel fields that are also Jacobi fields,
/// i.e. the parallel Jacobi fields.
fn curvature_form(m: &BerwaldMetric, frame: &Trajectory, t: f64) -> Result<DMatrix<f64>> {
    let n = m.dim();
    let intervals = ((2.0 * t * 20.0).ceil() as usize).max(200);
    let intervals = intervals + intervals % 2;
    let h = 2.0 * t / intervals as f64;
    let mut q = DMatrix::zeros(n, n);
    for k in 0..=intervals {
        let tk = if k == intervals { t } else { -t + h * k as f64 };
        let s = frame.eval(tk)?;
        let (x, y) = (&s[..n], &s[n..2 * n]);
        let c = Curvature::at(m.metric(), x, y)?;
        let w = if k == 0 || k == intervals {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let frame_vec = |a: usize| &s[2 * n + n * a..2 * n + n * (a + 1)];
        for a in 0..n {
            let r = c.jacobi_operator(frame_vec(a), y);
            for b in 0..n {
                q[(a, b)] -= w * inner(&c.g, &r, frame_vec(b));
            }
        }
    }
    q *= h / 3.0 / (2.0 * t);
    Ok(0.5 * (&q + q.transpose()))
}

fn singular_values(q: DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = SymmetricEigen::new(q).eigenvalues.iter().map(|v| v.abs()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn count_small(s: &[f64], cutoff: f64) -> usize {
    let scale = s.first().copied().unwrap_or(0.0).max(1.0);
    s.iter().filter(|v| **v <= cutoff * scale).count()
}

/// Dimension of the space of parallel Jacobi fields along the geodesic of
/// the unit vector `v`, estimated on `[−T, T]` and checked at `2T`.
pub fn rank_estimate(
    m: &BerwaldMetric,
    v: &TangentVector,
    horizon: f64,
    profile: &ToleranceProfile,
) -> Result<RankEstimate> {
    let f = m.check_slit(&v.base, &v.components, profile.slit_epsilon)?;
    if (f - 1.0).abs() > 1e-9 {
        return Err(Error::Precondition(format!("rank needs a unit vector, F(v) = {f}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    let frame = parallel_frame(m, v, 2.0 * horizon, profile)?;
    let s1 = singular_values(curvature_form(m, &frame, horizon)?);
    let s2 = singular_values(curvature_form(m, &frame, 2.0 * horizon)?);
    let r1 = count_small(&s1, profile.rank_cutoff);
    let r2 = count_small(&s2, profile.rank_cutoff);
    Ok(RankEstimate {
        vector: v.clone(),
        horizon,
        singular_values: s1,
        singular_values_doubled: s2,
        rank: r1,
        stable: r1 == r2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{catalog_metric, product_metric, Params};

    fn berwald(m: &crate::MetricDefinition) -> BerwaldMetric {
        BerwaldMetric::certify(m, &ToleranceProfile::default(), 1).unwrap()
    }

    fn unit(m: &crate::MetricDefinition, x: Vec<f64>, y: Vec<f64>) -> TangentVector {
        let f = m.eval_norm(&x, &y).unwrap();
        TangentVector::new(x, y.iter().map(|c| c / f).collect())
    }

    #[test]
    fn catalog_ranks() {
        let prof = ToleranceProfile::default();
        let cases = [
            (catalog_metric("poincare_disk", &Params::new()).unwrap(), 1),
            (catalog_metric("euclidean", &Params::new()).unwrap(), 2),
            (catalog_metric("minkowski_quartic", &Params::new()).unwrap(), 2),
        ];
        for (m, want) in cases {
            let b = berwald(&m);
            for (x, y) in [(vec![0.0, 0.0], vec![1.0, 0.0]), (vec![0.2, -0.1], vec![0.3, 0.7])] {
                let r = rank_estimate(&b, &unit(&m, x, y), prof.horizon, &prof).unwrap();
                assert_eq!(r.rank, want, "{} {:?}", m.label(), r.singular_values);
                assert!(r.stable);
            }
        }
        let e1 = catalog_metric("euclidean", &Params::new().with("n", 1.0)).unwrap();
        let p = product_metric(&catalog_metric("poincare_disk", &Params::new()).unwrap(), &e1);
        let b = berwald(&p);
        let r = rank_estimate(&b, &unit(&p, vec![0.1, 0.0, 0.3], vec![0.2, 0.5, 0.0]), prof.horizon, &prof).unwrap();
        assert_eq!(r.rank, 2, "{:?}", r.singular_values);
        assert!(r.stable);
    }
}
