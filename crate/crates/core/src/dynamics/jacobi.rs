use serde::Serialize;

use super::csv_number;
use super::geodesic::{check_state, metric_weight, GeodesicPath, RESOLUTION_LIMIT};
use crate::error::{Error, Result};
use crate::ode::{integrate_window, MetricScale, OdeOptions, Trajectory};
use crate::profile::ToleranceProfile;
use crate::tensor::{inner, BerwaldMetric, Curvature};

/// Jacobi fields are exponentially sensitive to early errors, so they are
/// integrated well below the geodesic tolerances.
pub(crate) fn jacobi_options(profile: &ToleranceProfile) -> OdeOptions {
    OdeOptions::new(
        (profile.integrator_atol * 1e-3).max(1e-14),
        (profile.integrator_rtol * 1e-3).max(1e-14),
        profile.integrator_max_steps,
    )
}

/// The geodesic through `(x0, y0)` integrated together with `k` Jacobi
/// fields in covariant form: `J' = P − Γ(J, T)`, `P' = −R(J, T)T − Γ(P, T)`
/// with `P = D_T J`. State layout `(x, y, J_1, P_1, …, J_k, P_k)`.
#[derive(Debug, Clone)]
pub(crate) struct JacobiBundle {
    pub n: usize,
    pub k: usize,
    pub traj: Trajectory,
}

impl JacobiBundle {
    pub fn integrate(
        m: &BerwaldMetric,
        x0: &[f64],
        y0: &[f64],
        fields: &[(Vec<f64>, Vec<f64>)],
        window: (f64, f64),
        opts: &OdeOptions,
    ) -> Result<Self> {
        let n = m.dim();
        let k = fields.len();
        let mut s0 = x0.to_vec();
        s0.extend_from_slice(y0);
        for (j, p) in fields {
            if j.len() != n || p.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    found: j.len().max(p.len()),
                });
            }
            s0.extend_from_slice(j);
            s0.extend_from_slice(p);
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
            for f in 0..k {
                let o = 2 * n + 2 * n * f;
                let (j, p) = (&s[o..o + n], &s[o + n..o + 2 * n]);
                let gj = c.connection(j, y);
                let gp = c.connection(p, y);
                let r = c.jacobi_operator(j, y);
                for i in 0..n {
                    d[o + i] = p[i] - gj[i];
                    d[o + n + i] = -r[i] - gp[i];
                }
            }
            Ok(())
        };
        let weight = metric_weight(metric);
        let scale = MetricScale {
            scale: &weight,
            positions: n,
            vectors: n + 2 * n * k,
        };
        let traj = integrate_window(rhs, Some(&scale), 0.0, &s0, window.0, window.1, opts)?;
        Ok(JacobiBundle { n, k, traj })
    }

    /// `(x, y)` and the combination `Σ c_f (J_f, P_f)` at `t`.
    pub fn combine(&self, t: f64, c: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
        let s = self.traj.eval(t)?;
        Ok(self.combine_state(&s, c))
    }

    fn combine_state(&self, s: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut j = vec![0.0; n];
        let mut p = vec![0.0; n];
        for (f, cf) in c.iter().enumerate().take(self.k) {
            let o = 2 * n + 2 * n * f;
            for i in 0..n {
                j[i] += cf * s[o + i];
                p[i] += cf * s[o + n + i];
            }
        }
        (s[..n].to_vec(), s[n..2 * n].to_vec(), j, p)
    }
}

/// `‖w‖_T = sqrt(g_T(w, w))` with the geodesic velocity as reference.
pub(crate) fn norm_t(m: &BerwaldMetric, x: &[f64], y: &[f64], w: &[f64]) -> Result<f64> {
    let g = crate::tensor::fundamental_matrix(m.metric(), x, y)?;
    Ok(inner(&g, w, w).max(0.0).sqrt())
}

/// A Jacobi field along a geodesic, with `J' = D_T J`.
#[derive(Debug, Clone)]
pub struct JacobiSolution {
    path: GeodesicPath,
    metric: BerwaldMetric,
    bundle: JacobiBundle,
    norms: Vec<f64>,
}

impl JacobiSolution {
    pub fn path(&self) -> &GeodesicPath {
        &self.path
    }

    pub fn t_start(&self) -> f64 {
        self.bundle.traj.t_start()
    }

    pub fn t_end(&self) -> f64 {
        self.bundle.traj.t_end()
    }

    pub fn times(&self) -> &[f64] {
        &self.bundle.traj.times
    }

    /// `‖J(t_i)‖_T` at the integrator nodes.
    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn field(&self, t: f64) -> Result<Vec<f64>> {
        Ok(self.bundle.combine(t, &[1.0])?.2)
    }

    pub fn derivative(&self, t: f64) -> Result<Vec<f64>> {
        Ok(self.bundle.combine(t, &[1.0])?.3)
    }

    pub fn norm(&self, t: f64) -> Result<f64> {
        let (x, y, j, _) = self.bundle.combine(t, &[1.0])?;
        norm_t(&self.metric, &x, &y, &j)
    }

    /// `t,J0..,Jp0..,norm_T` at every integrator node.
    pub fn to_csv(&self) -> String {
        let n = self.bundle.n;
        let mut out = String::from("t");
        for i in 0..n {
            out.push_str(&format!(",J{i}"));
        }
        for i in 0..n {
            out.push_str(&format!(",Jp{i}"));
        }
        out.push_str(",norm_T\n");
        for ((t, s), nm) in self.bundle.traj.times.iter().zip(&self.bundle.traj.states).zip(&self.norms) {
            let mut row = vec![csv_number(*t)];
            row.extend(s[2 * n..4 * n].iter().map(|v| csv_number(*v)));
            row.push(csv_number(*nm));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Jacobi field along `path` with `J(0) = j0`, `D_T J(0) = jp0`, over the
/// time span of the path.
pub fn jacobi_ivp(
    m: &BerwaldMetric,
    path: &GeodesicPath,
    j0: &[f64],
    jp0: &[f64],
    profile: &ToleranceProfile,
) -> Result<JacobiSolution> {
    let bundle = JacobiBundle::integrate(
        m,
        &path.x0,
        &path.y0,
        &[(j0.to_vec(), jp0.to_vec())],
        (path.t_start(), path.t_end()),
        &jacobi_options(profile),
    )?;
    let n = m.dim();
    let norms = bundle
        .traj
        .states
        .iter()
        .map(|s| norm_t(m, &s[..n], &s[n..2 * n], &s[2 * n..3 * n]))
        .collect::<Result<Vec<_>>>()?;
    Ok(JacobiSolution {
        path: path.clone(),
        metric: m.clone(),
        bundle,
        norms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JacobiClass {
    Stable,
    Unstable,
    Parallel,
    Mixed,
}

const CLASSIFY_SAMPLES: usize = 400;

/// Labels a Jacobi field by the behaviour of `‖J(t)‖_T` on
/// `[−horizon, horizon]`, or on `[0, horizon]` for a solution that starts
/// at `t = 0`.
pub fn classify_jacobi(sol: &JacobiSolution, horizon: f64, tol: f64) -> Result<JacobiClass> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    let lo = if sol.t_start() == 0.0 { 0.0 } else { -horizon };
    if sol.t_start() > lo || sol.t_end() < horizon {
        return Err(Error::WindowTooShort {
            start: sol.t_start(),
            end: sol.t_end(),
            horizon,
        });
    }
    let norms = (0..=CLASSIFY_SAMPLES)
        .map(|k| sol.norm(lo + (horizon - lo) * k as f64 / CLASSIFY_SAMPLES as f64))
        .collect::<Result<Vec<_>>>()?;
    let top = norms.iter().cloned().fold(0.0, f64::max);
    let bottom = norms.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = top.max(f64::MIN_POSITIVE);
    if (top - bottom) / scale < tol {
        return Ok(JacobiClass::Parallel);
    }
    let non_increasing = norms.windows(2).all(|w| w[1] - w[0] <= tol * scale);
    let non_decreasing = norms.windows(2).all(|w| w[0] - w[1] <= tol * scale);
    Ok(match (non_increasing, non_decreasing) {
        (true, _) => JacobiClass::Stable,
        (_, true) => JacobiClass::Unstable,
        _ => JacobiClass::Mixed,
    })
}
