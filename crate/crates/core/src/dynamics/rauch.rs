use rand::Rng;
use serde::Serialize;

use super::geodesic::GeodesicPath;
use super::jacobi::{jacobi_options, norm_t, JacobiBundle};
use crate::error::{Error, Result};
use crate::profile::ToleranceProfile;
use crate::sampling::{random_unit, stream_rng};
use crate::tensor::{flag_ratio, inner, BerwaldMetric, Curvature};

const FLAG_TIMES: usize = 32;
const FLAGS_PER_TIME: usize = 4;

#[derive(Debug, Clone, Serialize)]
pub struct RauchReport {
    pub ok: bool,
    /// Largest relative amount by which a sampled ratio left
    /// `[t₂/t₁, s_b(t₂)/s_b(t₁)]`; negative when every sample is inside.
    pub worst_ratio_violation: f64,
    pub violations: usize,
    pub trials: usize,
    pub b: f64,
    pub curvature_min: f64,
    pub curvature_max: f64,
}

fn s_b(b: f64, t: f64) -> f64 {
    if b == 0.0 {
        t
    } else {
        (b * t).sinh() / b
    }
}

/// Checks `t₂/t₁ ≤ ‖J(t₂)‖/‖J(t₁)‖ ≤ s_b(t₂)/s_b(t₁)` for random Jacobi
/// fields with `J(0) = 0`, `g_T(T, J'(0)) = 0` along the forward part of
/// `path`, after confirming `−b² ≤ K ≤ 0` on sampled flags.
pub fn rauch_check(
    m: &BerwaldMetric,
    path: &GeodesicPath,
    trials: usize,
    b: f64,
    profile: &ToleranceProfile,
    seed: u64,
) -> Result<RauchReport> {
    let n = m.dim();
    if n < 2 {
        return Err(Error::Precondition("Rauch comparison needs dimension at least 2".into()));
    }
    if !(b >= 0.0 && b.is_finite()) {
        return Err(Error::InvalidArgument("b must be finite and nonnegative".into()));
    }
    let t_end = path.t_end();
    if !(t_end > 0.0) || path.t_start() > 0.0 {
        return Err(Error::InvalidArgument("path must extend forward from t = 0".into()));
    }
    let tol = profile.verifier_tol;
    let speed = path.speed();
    let mut rng = stream_rng(seed, 4);

    let (mut kmin, mut kmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..=FLAG_TIMES {
        let t = t_end * i as f64 / FLAG_TIMES as f64;
        let s = path.state(t)?;
        let (x, y) = (&s[..n], &s[n..]);
        let c = Curvature::at(m.metric(), x, y)?;
        for _ in 0..FLAGS_PER_TIME {
            let v = random_unit(&mut rng, n);
            match flag_ratio(&c, y, &v, profile.flag_degeneracy) {
                Ok(k) => {
                    kmin = kmin.min(k);
                    kmax = kmax.max(k);
                }
                Err(Error::DegenerateFlag { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
    }
    if kmax > tol || kmin < -b * b - tol {
        return Err(Error::Precondition(format!(
            "flag curvature in [{kmin}, {kmax}] is not within [-{}, 0]",
            b * b
        )));
    }

    let basis: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            (vec![0.0; n], e)
        })
        .collect();
    let bundle = JacobiBundle::integrate(m, &path.x0, &path.y0, &basis, (0.0, t_end), &jacobi_options(profile))?;

    let g0 = crate::tensor::fundamental_matrix(m.metric(), &path.x0, &path.y0)?;
    let tt = inner(&g0, &path.y0, &path.y0);
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0;
    for _ in 0..trials {
        let mut c = random_unit(&mut rng, n);
        let k = inner(&g0, &c, &path.y0) / tt;
        for (ci, yi) in c.iter_mut().zip(&path.y0) {
            *ci -= k * yi;
        }
        if inner(&g0, &c, &c) < 1e-12 {
            continue;
        }
        let mut u = [rng.gen_range(1e-3..=1.0), rng.gen_range(1e-3..=1.0)];
        u.sort_by(f64::total_cmp);
        let (t1, t2) = (t_end * u[0], t_end * u[1]);
        let norm_at = |t: f64| -> Result<f64> {
            let (x, y, j, _) = bundle.combine(t, &c)?;
            norm_t(m, &x, &y, &j)
        };
        let ratio = norm_at(t2)? / norm_at(t1)?;
        let lower = t2 / t1;
        let upper = s_b(b, speed * t2) / s_b(b, speed * t1);
        let v = ((lower - ratio) / lower).max((ratio - upper) / upper);
        worst = worst.max(v);
        if v > tol {
            violations += 1;
        }
    }
    Ok(RauchReport {
        ok: violations == 0,
        worst_ratio_violation: worst,
        violations,
        trials,
        b,
        curvature_min: kmin,
        curvature_max: kmax,
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

    #[test]
    fn comparison_bounds() {
        let prof = ToleranceProfile::default();
        let v = TangentVector::new(vec![0.1, 0.2], vec![0.3, -0.1]);
        let e = berwald("euclidean");
        let path = geodesic_ivp(&e, &v, (0.0, 3.0), &prof).unwrap();
        let r = rauch_check(&e, &path, 50, 0.0, &prof, 3).unwrap();
        assert!(r.ok && r.worst_ratio_violation.abs() < 1e-10, "{r:?}");

        let p = berwald("poincare_disk");
        let f = p.eval_norm(&v.base, &v.components).unwrap();
        let unit = TangentVector::new(v.base.clone(), v.components.iter().map(|c| c / f).collect());
        let path = geodesic_ivp(&p, &unit, (0.0, 6.0), &prof).unwrap();
        let r = rauch_check(&p, &path, 200, 1.0, &prof, 3).unwrap();
        // the upper bound is attained, so the worst margin sits at zero
        assert!(r.ok && r.worst_ratio_violation.abs() < 1e-8, "{r:?}");

        let s = berwald("round_sphere_chart");
        let path = geodesic_ivp(&s, &v, (0.0, 2.0), &prof).unwrap();
        assert!(matches!(rauch_check(&s, &path, 10, 1.0, &prof, 3), Err(Error::Precondition(_))));
    }
}
