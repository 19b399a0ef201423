use serde::Serialize;

use super::{chord, distances, par_map, unit_check, GeodesicSummary, NodeFailure};
use crate::dynamics::{geodesic_bvp, geodesic_ivp, GeodesicPath};
use crate::error::{Error, Result};
use crate::metric::{MetricDefinition, TangentVector};
use crate::profile::ToleranceProfile;
use crate::tensor::BerwaldMetric;

const ANGLE_T0: f64 = 0.5;
const ANGLE_LEVELS: usize = 7;
const ANGLE_RETRIES: usize = 4;
const FAR_SCALE: f64 = 100.0;

#[derive(Debug, Clone, Serialize)]
pub struct AngleReport {
    pub base: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// `(t, d(c₁(t), c₂(t)) / t)` for `t = t₀ 2^{−k}`.
    pub samples: Vec<[f64; 2]>,
    pub limit: f64,
    pub closed_form: f64,
    pub discrepancy: f64,
    /// `limit ≤ 2 + 1e−9`.
    pub bounded: bool,
    pub pass: bool,
}

fn retryable(e: &Error) -> bool {
    e.is_nonconvergence() || matches!(e, Error::ChartExit { .. } | Error::ChartViolation { .. })
}

fn ray(m: &MetricDefinition, p: &[f64], u: &[f64], t: f64, profile: &ToleranceProfile) -> Result<GeodesicPath> {
    geodesic_ivp(m, &TangentVector::new(p.to_vec(), u.to_vec()), (0.0, t), profile)
}

fn ratios(m: &MetricDefinition, p: &[f64], u: &[f64], v: &[f64], t0: f64, profile: &ToleranceProfile) -> Result<Vec<[f64; 2]>> {
    let c1 = ray(m, p, u, t0, profile)?;
    let c2 = ray(m, p, v, t0, profile)?;
    let ts: Vec<f64> = (0..ANGLE_LEVELS).map(|k| t0 / (1u64 << k) as f64).collect();
    let mut pairs = Vec::new();
    for &t in &ts {
        pairs.push((c1.position(t)?, c2.position(t)?));
    }
    let ds = distances(m, &pairs, profile);
    ts.iter().zip(ds).map(|(t, d)| Ok([*t, d? / t])).collect()
}

/// Richardson extrapolation to `t = 0` of values at `t₀ 2^{−k}` whose
/// error expands in integer powers of `t`.
fn richardson(values: &[f64]) -> f64 {
    let mut row = values.to_vec();
    for j in 1..row.len() {
        let f = (1u64 << j) as f64 - 1.0;
        for k in (j..row.len()).rev() {
            row[k] += (row[k] - row[k - 1]) / f;
        }
    }
    *row.last().expect("nonempty")
}

/// `lim_{t→0} d(exp_p(tu), exp_p(tv)) / t` and its closed form `F_p(v − u)`.
pub fn angle(m: &MetricDefinition, p: &[f64], u: &[f64], v: &[f64], profile: &ToleranceProfile) -> Result<AngleReport> {
    unit_check(m, p, u, "u", profile)?;
    unit_check(m, p, v, "v", profile)?;
    let closed_form = chord(m, p, u, v)?;
    let mut t0 = ANGLE_T0;
    let mut last = None;
    let mut samples = None;
    for _ in 0..ANGLE_RETRIES {
        match ratios(m, p, u, v, t0, profile) {
            Ok(s) => {
                samples = Some(s);
                break;
            }
            Err(e) if retryable(&e) => {
                last = Some(e);
                t0 *= 0.25;
            }
            Err(e) => return Err(e),
        }
    }
    let Some(samples) = samples else {
        return Err(last.expect("a failed attempt"));
    };
    let values: Vec<f64> = samples.iter().map(|s| s[1]).collect();
    let limit = richardson(&values);
    let discrepancy = (limit - closed_form).abs();
    Ok(AngleReport {
        base: p.to_vec(),
        u: u.to_vec(),
        v: v.to_vec(),
        samples,
        limit,
        closed_form,
        discrepancy,
        bounded: limit <= 2.0 + 1e-9,
        pass: discrepancy < profile.verifier_tol,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ChordReport {
    pub base: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub grid: Vec<f64>,
    pub distances: Vec<f64>,
    pub ratios: Vec<f64>,
    /// `F_p(v − u)`
    pub chord: f64,
    /// Largest decrease of `d/t` between neighbours, or shortfall of
    /// `d` below `t F_p(v − u)`, whichever is worse.
    pub worst_violation: f64,
    pub pass: bool,
}

/// `t ↦ d(c₁(t), c₂(t))/t` is nondecreasing and bounded below by the chord.
pub fn check_chord_monotonicity(
    m: &BerwaldMetric,
    p: &[f64],
    u: &[f64],
    v: &[f64],
    grid: &[f64],
    profile: &ToleranceProfile,
) -> Result<ChordReport> {
    unit_check(m, p, u, "u", profile)?;
    unit_check(m, p, v, "v", profile)?;
    if grid.is_empty() || grid[0] <= 0.0 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("grid must be positive and increasing".into()));
    }
    let t_max = *grid.last().expect("nonempty");
    let c1 = ray(m, p, u, t_max, profile)?;
    let c2 = ray(m, p, v, t_max, profile)?;
    let mut pairs = Vec::new();
    for &t in grid {
        pairs.push((c1.position(t)?, c2.position(t)?));
    }
    let ds = distances(m, &pairs, profile).into_iter().collect::<Result<Vec<f64>>>()?;
    let c = chord(m, p, u, v)?;
    let ratios: Vec<f64> = ds.iter().zip(grid).map(|(d, t)| d / t).collect();
    let mut worst = f64::NEG_INFINITY;
    for w in ratios.windows(2) {
        worst = worst.max(w[0] - w[1]);
    }
    for (d, t) in ds.iter().zip(grid) {
        worst = worst.max((t * c - d) / t.max(1.0));
    }
    Ok(ChordReport {
        base: p.to_vec(),
        u: u.to_vec(),
        v: v.to_vec(),
        grid: grid.to_vec(),
        distances: ds,
        ratios,
        chord: c,
        worst_violation: worst,
        pass: worst <= profile.verifier_tol,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AngleInfinityReport {
    pub geodesic: GeodesicSummary,
    pub far_point: Vec<f64>,
    pub grid: Vec<f64>,
    /// `F_{γ(t)}(w(t) − γ'(t)/|γ'|)` with `w(t)` the unit direction toward
    /// the far point.
    pub angles: Vec<Option<f64>>,
    /// `d(γ(t₀), far point)` divided by the F-length of `γ` over the grid.
    pub proxy_ratio: f64,
    pub warning: Option<String>,
    pub worst_decrease: f64,
    pub failures: Vec<NodeFailure>,
    pub pass: bool,
}

/// Angle between the geodesic and the direction toward a far point is
/// nondecreasing along the geodesic.
///
/// The angle is read from its closed form `F(w − v)`, which `angle`
/// certifies numerically.
pub fn check_angle_monotonicity_to_infinity(
    m: &BerwaldMetric,
    gamma: &GeodesicPath,
    far_point: &[f64],
    grid: &[f64],
    profile: &ToleranceProfile,
) -> Result<AngleInfinityReport> {
    m.check_point(far_point)?;
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("grid needs two or more increasing nodes".into()));
    }
    let nodes: Vec<f64> = grid.to_vec();
    let results = par_map(&nodes, |&t| -> Result<(f64, f64)> {
        let x = gamma.position(t)?;
        let y = gamma.velocity(t)?;
        let f = m.eval_norm(&x, &y)?;
        let v: Vec<f64> = y.iter().map(|c| c / f).collect();
        let path = geodesic_bvp(m, &x, far_point, profile)?;
        let w: Vec<f64> = path.y0.iter().map(|c| c / path.speed()).collect();
        Ok((chord(m, &x, &v, &w)?, path.length()))
    });
    let mut failures = Vec::new();
    let mut angles = Vec::new();
    let mut reach = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((a, d)) => {
                if i == 0 {
                    reach = Some(d);
                }
                angles.push(Some(a));
            }
            Err(e) => {
                failures.push(NodeFailure {
                    index: i,
                    t: grid[i],
                    error: e.to_string(),
                });
                angles.push(None);
            }
        }
    }
    let span = gamma.speed() * (grid[grid.len() - 1] - grid[0]);
    let proxy_ratio = reach.map_or(f64::NAN, |d| d / span);
    let warning = (!(proxy_ratio >= FAR_SCALE)).then(|| {
        format!("far point is only {proxy_ratio:.3} geodesic spans away; the proxy for a point at infinity is weak")
    });
    let present: Vec<f64> = angles.iter().flatten().copied().collect();
    let worst = present.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max);
    Ok(AngleInfinityReport {
        geodesic: gamma.into(),
        far_point: far_point.to_vec(),
        grid: grid.to_vec(),
        angles,
        proxy_ratio,
        warning,
        worst_decrease: worst,
        pass: failures.is_empty() && worst <= profile.verifier_tol,
        failures,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TitsSeries {
    pub base: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// `d(α(t), β(t)) / t`, null from the first failed horizon on.
    pub ratios: Vec<Option<f64>>,
    /// Slope of `d` between the last two successful horizons, which removes
    /// the `C/t` term of `d(t) = L t + C + o(1)`.
    pub limit: f64,
    /// `|limit − last ratio|`
    pub convergence: f64,
    pub largest_successful_horizon: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TitsReport {
    pub horizons: Vec<f64>,
    pub primary: TitsSeries,
    pub secondary: TitsSeries,
    /// Time along each ray of the far points that fix the directions at the
    /// second base point.
    pub proxy_horizon: f64,
    pub warning: Option<String>,
    /// `|primary.limit − secondary.limit|`
    pub discrepancy: f64,
}

fn tits_series(m: &MetricDefinition, p: &[f64], u: &[f64], v: &[f64], horizons: &[f64], profile: &ToleranceProfile) -> TitsSeries {
    let t_max = *horizons.last().expect("nonempty");
    let mut ratios = vec![None; horizons.len()];
    let mut dist = Vec::new();
    let mut failure = None;
    let run = || -> Result<(GeodesicPath, GeodesicPath)> { Ok((ray(m, p, u, t_max, profile)?, ray(m, p, v, t_max, profile)?)) };
    match run() {
        Ok((a, b)) => {
            let pairs: Result<Vec<_>> = horizons.iter().map(|&t| Ok((a.position(t)?, b.position(t)?))).collect();
            match pairs {
                Ok(pairs) => {
                    for (i, d) in distances(m, &pairs, profile).into_iter().enumerate() {
                        match d {
                            Ok(d) => {
                                ratios[i] = Some(d / horizons[i]);
                                dist.push((horizons[i], d));
                            }
                            Err(e) => {
                                failure = Some(format!("horizon {}: {e}", horizons[i]));
                                break;
                            }
                        }
                    }
                }
                Err(e) => failure = Some(e.to_string()),
            }
        }
        Err(e) => failure = Some(e.to_string()),
    }
    let (limit, convergence) = match dist.len() {
        0 => (f64::NAN, f64::NAN),
        1 => (dist[0].1 / dist[0].0, f64::NAN),
        k => {
            let ((t1, d1), (t2, d2)) = (dist[k - 2], dist[k - 1]);
            let l = (d2 - d1) / (t2 - t1);
            (l, (l - d2 / t2).abs())
        }
    };
    TitsSeries {
        base: p.to_vec(),
        u: u.to_vec(),
        v: v.to_vec(),
        ratios,
        limit,
        convergence,
        largest_successful_horizon: dist.last().map(|d| d.0),
        failure,
    }
}

/// A point far along the ray from `p` in direction `u`: `FAR_SCALE` times
/// the horizon, or just short of where the ray leaves the resolvable chart.
fn far_along(m: &MetricDefinition, p: &[f64], u: &[f64], horizon: f64, profile: &ToleranceProfile) -> Result<(Vec<f64>, f64)> {
    let mut t = FAR_SCALE * horizon;
    for _ in 0..8 {
        match ray(m, p, u, t, profile) {
            Ok(path) => return Ok((path.position(t)?, t)),
            Err(Error::ChartExit { t: te }) | Err(Error::StepSizeCollapse { t: te }) if te > horizon => t = 0.95 * te,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Precondition("no far point along the ray".into()))
}

/// `d(α(t), β(t))/t` for the rays from `p` along `u`, `v` at each horizon,
/// repeated from `p2` with the directions toward far points of the same
/// rays.
pub fn tits_distance_estimate(
    m: &BerwaldMetric,
    p: &[f64],
    u: &[f64],
    v: &[f64],
    horizons: &[f64],
    p2: &[f64],
    profile: &ToleranceProfile,
) -> Result<TitsReport> {
    unit_check(m, p, u, "u", profile)?;
    unit_check(m, p, v, "v", profile)?;
    m.check_point(p2)?;
    if horizons.is_empty() || horizons[0] <= 0.0 || horizons.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("horizons must be positive and increasing".into()));
    }
    let t_max = *horizons.last().expect("nonempty");
    let primary = tits_series(m, p, u, v, horizons, profile);

    let (xu, tu) = far_along(m, p, u, t_max, profile)?;
    let (xv, tv) = far_along(m, p, v, t_max, profile)?;
    let toward = |x: &[f64]| -> Result<Vec<f64>> {
        let path = geodesic_bvp(m, p2, x, profile)?;
        Ok(path.y0.iter().map(|c| c / path.speed()).collect())
    };
    let u2 = toward(&xu)?;
    let v2 = toward(&xv)?;
    let secondary = tits_series(m, p2, &u2, &v2, horizons, profile);
    let proxy_horizon = tu.min(tv);
    let warning = (proxy_horizon < FAR_SCALE * t_max).then(|| {
        format!(
            "far points sit {:.3} horizons out; directions at the second base point are approximate",
            proxy_horizon / t_max
        )
    });
    Ok(TitsReport {
        horizons: horizons.to_vec(),
        discrepancy: (primary.limit - secondary.limit).abs(),
        primary,
        secondary,
        proxy_horizon,
        warning,
    })
}
