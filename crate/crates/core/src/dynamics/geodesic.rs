use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::metric::{MetricDefinition, TangentVector};
use crate::ode::{integrate_weighted, integrate_window, MetricScale, OdeOptions, Trajectory};
use crate::profile::ToleranceProfile;
use crate::sampling::sphere_directions;
use crate::tensor::{spray, spray_with_jacobian};

use super::csv_number;

pub(crate) fn ode_options(profile: &ToleranceProfile) -> OdeOptions {
    OdeOptions::new(
        profile.integrator_atol,
        profile.integrator_rtol,
        profile.integrator_max_steps,
    )
}

/// `max(1, F(x, y) / |y|)` for a state starting with `(x, y)`: coordinate
/// errors are magnified by this factor when measured with the metric.
pub(crate) fn metric_weight(m: &MetricDefinition) -> impl Fn(&[f64]) -> f64 + '_ {
    let n = m.dim();
    move |s| {
        let (x, y) = (&s[..n], &s[n..2 * n]);
        let e = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        match m.eval_norm(x, y) {
            Ok(f) if e > 0.0 && f.is_finite() => (f / e).max(1.0),
            _ => 1.0,
        }
    }
}

/// Fails when `x` leaves the chart or when one ulp of `x` is longer than
/// `limit` in the metric, which is how an asymptotic exit shows up.
pub(crate) fn check_state(m: &MetricDefinition, s: &[f64], limit: f64) -> Result<()> {
    let n = m.dim();
    let x = &s[..n];
    if !m.contains(x) {
        return Err(Error::ChartViolation { point: x.to_vec() });
    }
    let e = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if 4.0 * f64::EPSILON * e * metric_weight(m)(s) > limit {
        return Err(Error::ChartViolation { point: x.to_vec() });
    }
    Ok(())
}

/// `(x, y)' = (y, a(x, y))`, failing outside the resolvable chart.
pub(crate) fn geodesic_rhs(
    m: &MetricDefinition,
    limit: f64,
) -> impl FnMut(f64, &[f64], &mut [f64]) -> Result<()> + '_ {
    let n = m.dim();
    move |_, s, d| {
        check_state(m, s, limit)?;
        let (x, y) = s.split_at(n);
        let a = spray(m, x, y)?;
        d[..n].copy_from_slice(y);
        d[n..].copy_from_slice(&a);
        Ok(())
    }
}

/// Tolerances for quantities that only steer Newton iterations.
fn loose(opts: &OdeOptions) -> OdeOptions {
    OdeOptions {
        atol: opts.atol.max(1e-7),
        rtol: opts.rtol.max(1e-7),
        ..*opts
    }
}

/// Largest metric length of one coordinate ulp that still counts as inside.
pub(crate) const RESOLUTION_LIMIT: f64 = 1e-6;

/// A constant-speed geodesic with dense output.
#[derive(Debug, Clone)]
pub struct GeodesicPath {
    metric: MetricDefinition,
    traj: Trajectory,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    speed: f64,
    /// Endpoint mismatch of the shooting solve, for boundary-value paths.
    pub bvp_residual: Option<f64>,
}

impl GeodesicPath {
    pub fn metric(&self) -> &MetricDefinition {
        &self.metric
    }

    pub fn t_start(&self) -> f64 {
        self.traj.t_start()
    }

    pub fn t_end(&self) -> f64 {
        self.traj.t_end()
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    /// `speed · (t_end − t_start)`.
    pub fn length(&self) -> f64 {
        self.speed * (self.t_end() - self.t_start())
    }

    pub fn times(&self) -> &[f64] {
        &self.traj.times
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.traj.states
    }

    pub fn state(&self, t: f64) -> Result<Vec<f64>> {
        self.traj.eval(t)
    }

    pub fn position(&self, t: f64) -> Result<Vec<f64>> {
        let mut s = self.traj.eval(t)?;
        s.truncate(self.metric.dim());
        Ok(s)
    }

    pub fn velocity(&self, t: f64) -> Result<Vec<f64>> {
        let s = self.traj.eval(t)?;
        Ok(s[self.metric.dim()..].to_vec())
    }

    /// Largest `|F(x_i, y_i) − F(x_0, y_0)|` over the nodes.
    pub fn max_speed_drift(&self) -> Result<f64> {
        let n = self.metric.dim();
        let mut worst: f64 = 0.0;
        for s in &self.traj.states {
            let f = self.metric.eval_norm(&s[..n], &s[n..])?;
            worst = worst.max((f - self.speed).abs());
        }
        Ok(worst)
    }

    /// `∫ F(γ, γ') dt` by composite Simpson on a uniform grid.
    pub fn length_by_quadrature(&self, intervals: usize) -> Result<f64> {
        let m = intervals.max(2) & !1;
        let (a, b) = (self.t_start(), self.t_end());
        let h = (b - a) / m as f64;
        let n = self.metric.dim();
        let mut acc = 0.0;
        for k in 0..=m {
            let s = self.traj.eval(if k == m { b } else { a + h * k as f64 })?;
            let w = if k == 0 || k == m {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * self.metric.eval_norm(&s[..n], &s[n..])?;
        }
        Ok(acc * h / 3.0)
    }

    /// `t,x0..,y0..,speed` at every integrator node.
    pub fn to_csv(&self) -> Result<String> {
        let n = self.metric.dim();
        let mut out = String::from("t");
        for i in 0..n {
            out.push_str(&format!(",x{i}"));
        }
        for i in 0..n {
            out.push_str(&format!(",y{i}"));
        }
        out.push_str(",speed\n");
        for (t, s) in self.traj.times.iter().zip(&self.traj.states) {
            let f = self.metric.eval_norm(&s[..n], &s[n..])?;
            let mut row = vec![csv_number(*t)];
            row.extend(s.iter().map(|v| csv_number(*v)));
            row.push(csv_number(f));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        Ok(out)
    }
}

/// Integrates the geodesic through `v` at `t = 0` over `t_span`, which must
/// contain 0.
pub fn geodesic_ivp(
    m: &MetricDefinition,
    v: &TangentVector,
    t_span: (f64, f64),
    profile: &ToleranceProfile,
) -> Result<GeodesicPath> {
    let speed = m.check_slit(&v.base, &v.components, profile.slit_epsilon)?;
    let (lo, hi) = t_span;
    if !(lo <= 0.0 && hi >= 0.0 && lo < hi && lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "time span [{lo}, {hi}] must be finite and contain 0"
        )));
    }
    let mut s0 = v.base.clone();
    s0.extend_from_slice(&v.components);
    let opts = ode_options(profile);
    let traj = integrate_window(
        geodesic_rhs(m, RESOLUTION_LIMIT),
        Some(&MetricScale {
            scale: &metric_weight(m),
            positions: m.dim(),
            vectors: m.dim(),
        }),
        0.0,
        &s0,
        lo,
        hi,
        &opts,
    )?;
    Ok(GeodesicPath {
        metric: m.clone(),
        traj,
        x0: v.base.clone(),
        y0: v.components.clone(),
        speed,
        bvp_residual: None,
    })
}

/// Flow of the geodesic equation over time `dt` plus the Jacobian
/// `∂(x, y)(dt) / ∂(x, y)(0)` (row-major `2n × 2n`).
fn flow_with_jacobian(
    m: &MetricDefinition,
    x: &[f64],
    v: &[f64],
    dt: f64,
    opts: &OdeOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = m.dim();
    let w = 2 * n;
    let mut s0 = x.to_vec();
    s0.extend_from_slice(v);
    for r in 0..w {
        for c in 0..w {
            s0.push(if r == c { 1.0 } else { 0.0 });
        }
    }
    let rhs = |_: f64, s: &[f64], d: &mut [f64]| -> Result<()> {
        check_state(m, &s[..w], RESOLUTION_LIMIT)?;
        let (x, rest) = s.split_at(n);
        let (y, phi) = rest.split_at(n);
        let (a, jac) = spray_with_jacobian(m, x, y)?;
        d[..n].copy_from_slice(y);
        d[n..w].copy_from_slice(&a);
        let dphi = &mut d[w..];
        // top block: Φ_y rows; bottom: J · Φ
        for r in 0..n {
            for c in 0..w {
                dphi[r * w + c] = phi[(n + r) * w + c];
            }
        }
        for r in 0..n {
            for c in 0..w {
                let mut acc = 0.0;
                for k in 0..w {
                    acc += jac[r * w + k] * phi[k * w + c];
                }
                dphi[(n + r) * w + c] = acc;
            }
        }
        Ok(())
    };
    let scale = MetricScale {
        scale: &metric_weight(m),
        positions: n,
        vectors: n,
    };
    let traj = integrate_weighted(rhs, Some(&scale), 0.0, &s0, dt, opts)?;
    let end = traj.states.last().expect("nonempty");
    Ok((end[..w].to_vec(), end[w..].to_vec()))
}

struct Shooting<'a> {
    m: &'a MetricDefinition,
    p: Vec<f64>,
    q: Vec<f64>,
    k: usize,
    opts: OdeOptions,
}

struct Evaluation {
    residual: Vec<f64>,
    /// Mismatch measured with the metric at the matching points.
    weighted: f64,
    /// Sum of squared metric-sized mismatches, used by the line search.
    merit: f64,
    /// Metric length of a few coordinate ulps at the matching points; no
    /// mismatch below it can be resolved.
    floor: f64,
    segments: Vec<Trajectory>,
}

/// `8 ε |x| max_i F_sym(x, e_i)`.
fn resolution_floor(m: &MetricDefinition, x: &[f64]) -> f64 {
    let n = m.dim();
    let mag = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        worst = worst.max(sym_norm(m, x, &e));
    }
    8.0 * f64::EPSILON * mag * worst
}

fn sym_norm(m: &MetricDefinition, x: &[f64], d: &[f64]) -> f64 {
    if d.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    let neg: Vec<f64> = d.iter().map(|v| -v).collect();
    let a = m.eval_norm(x, d).unwrap_or(f64::INFINITY);
    let b = m.eval_norm(x, &neg).unwrap_or(f64::INFINITY);
    let e = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    // outside the chart fall back to the coordinate norm
    if a.is_finite() && b.is_finite() {
        a.max(b)
    } else {
        e
    }
}

impl<'a> Shooting<'a> {
    fn unknowns(&self) -> usize {
        let n = self.m.dim();
        n + 2 * n * (self.k - 1)
    }

    fn node(&self, z: &[f64], k: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.m.dim();
        if k == 0 {
            (self.p.clone(), z[..n].to_vec())
        } else {
            let o = n + 2 * n * (k - 1);
            (z[o..o + n].to_vec(), z[o + n..o + 2 * n].to_vec())
        }
    }

    fn evaluate(&self, z: &[f64]) -> Result<Evaluation> {
        let n = self.m.dim();
        let dt = 1.0 / self.k as f64;
        let mut residual = vec![0.0; self.unknowns()];
        let mut weighted: f64 = 0.0;
        let mut merit = 0.0;
        let mut floor = resolution_floor(self.m, &self.q);
        let mut segments = Vec::with_capacity(self.k);
        for seg in 0..self.k {
            let (x, v) = self.node(z, seg);
            if !self.m.contains(&x) {
                return Err(Error::ChartViolation { point: x });
            }
            let mut s0 = x;
            s0.extend_from_slice(&v);
            let t0 = seg as f64 * dt;
            let t1 = if seg + 1 == self.k { 1.0 } else { (seg + 1) as f64 * dt };
            let traj = integrate_weighted(
                geodesic_rhs(self.m, RESOLUTION_LIMIT),
                Some(&MetricScale {
                    scale: &metric_weight(self.m),
                    positions: n,
                    vectors: n,
                }),
                t0,
                &s0,
                t1,
                &self.opts,
            )?;
            let end = traj.states.last().expect("nonempty").clone();
            let o = 2 * n * seg;
            if seg + 1 == self.k {
                for i in 0..n {
                    residual[o + i] = end[i] - self.q[i];
                }
                let a = sym_norm(self.m, &self.q, &residual[o..o + n]);
                weighted = weighted.max(a);
                merit += a * a;
            } else {
                let (xn, vn) = self.node(z, seg + 1);
                floor = floor.max(resolution_floor(self.m, &xn));
                for i in 0..n {
                    residual[o + i] = end[i] - xn[i];
                    residual[o + n + i] = end[n + i] - vn[i];
                }
                let a = sym_norm(self.m, &xn, &residual[o..o + n]);
                let b = dt * sym_norm(self.m, &xn, &residual[o + n..o + 2 * n]);
                weighted = weighted.max(a).max(b);
                merit += a * a + b * b;
            }
            segments.push(traj);
        }
        Ok(Evaluation {
            residual,
            weighted,
            merit,
            floor,
            segments,
        })
    }

    fn jacobian(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.m.dim();
        let w = 2 * n;
        let size = self.unknowns();
        let dt = 1.0 / self.k as f64;
        let mut jac = DMatrix::zeros(size, size);
        for seg in 0..self.k {
            let (x, v) = self.node(z, seg);
            let (_, phi) = flow_with_jacobian(self.m, &x, &v, dt, &loose(&self.opts))?;
            let row0 = 2 * n * seg;
            let rows = if seg + 1 == self.k { n } else { w };
            // columns of this segment's own unknowns
            let (col0, first_c) = if seg == 0 { (0, n) } else { (n + w * (seg - 1), 0) };
            for r in 0..rows {
                for c in first_c..w {
                    jac[(row0 + r, col0 + c - first_c)] = phi[r * w + c];
                }
            }
            if seg + 1 < self.k {
                let nxt = n + w * seg;
                for r in 0..w {
                    jac[(row0 + r, nxt + r)] = -1.0;
                }
            }
        }
        Ok(jac)
    }

    /// Damped Newton from `z`. Returns the best iterate and its evaluation.
    fn solve(&self, mut z: Vec<f64>, tol: f64, max_iter: usize) -> (Vec<f64>, Option<Evaluation>, bool) {
        let Ok(mut cur) = self.evaluate(&z) else {
            return (z, None, false);
        };
        let mut best = cur.weighted;
        let mut stalled = 0;
        for _ in 0..max_iter {
            if cur.weighted < tol.max(cur.floor) {
                return (z, Some(cur), true);
            }
            // four iterations without progress: the seed is outside the basin
            if stalled >= 4 {
                break;
            }
            let Ok(jac) = self.jacobian(&z) else {
                break;
            };
            let rhs = -DVector::from_column_slice(&cur.residual);
            let dz = match jac.clone().lu().solve(&rhs) {
                Some(d) if d.iter().all(|v| v.is_finite()) => d,
                _ => match jac.svd(true, true).solve(&rhs, 1e-14) {
                    Ok(d) => d,
                    Err(_) => break,
                },
            };
            let base = cur.merit;
            let mut lam = 1.0;
            let mut accepted = None;
            while lam > 1e-6 {
                let trial: Vec<f64> = z.iter().zip(dz.iter()).map(|(a, d)| a + lam * d).collect();
                if let Ok(e) = self.evaluate(&trial) {
                    if e.merit < (1.0 - 1e-4 * lam) * base || e.weighted < tol.max(e.floor) {
                        accepted = Some((trial, e));
                        break;
                    }
                }
                lam *= 0.5;
            }
            let Some((nz, e)) = accepted else {
                break;
            };
            z = nz;
            cur = e;
            if cur.weighted < 0.9 * best {
                best = cur.weighted;
                stalled = 0;
            } else {
                stalled += 1;
            }
        }
        let ok = cur.weighted < tol.max(cur.floor);
        (z, Some(cur), ok)
    }
}

const MAX_SEGMENTS: usize = 64;

/// F-length of the straight chart segment from `p` to `q` and the parameter
/// values splitting it into `k` pieces of equal F-length.
fn chord(m: &MetricDefinition, p: &[f64], q: &[f64], k: usize) -> Result<(f64, Vec<f64>)> {
    let d: Vec<f64> = q.iter().zip(p).map(|(a, b)| a - b).collect();
    let at = |u: f64| -> Result<f64> {
        let x: Vec<f64> = p.iter().zip(&d).map(|(a, b)| a + u * b).collect();
        Ok(m.eval_norm(&x, &d)?)
    };
    // adaptive Simpson; `knots` collects (u, cumulative length)
    fn refine(
        at: &dyn Fn(f64) -> Result<f64>,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: usize,
        knots: &mut Vec<(f64, f64)>,
    ) -> Result<()> {
        let m = 0.5 * (a + b);
        let flm = at(0.5 * (a + m))?;
        let frm = at(0.5 * (m + b))?;
        let left = (m - a) * (fa + 4.0 * flm + fm) / 6.0;
        let right = (b - m) * (fm + 4.0 * frm + fb) / 6.0;
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            let base = knots.last().expect("seeded").1;
            knots.push((m, base + left));
            knots.push((b, base + left + right));
            return Ok(());
        }
        refine(at, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, knots)?;
        refine(at, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, knots)
    }
    let mut knots = vec![(0.0, 0.0)];
    let (f0, fm, f1) = (at(0.0)?, at(0.5)?, at(1.0)?);
    let rough = (f0 + 4.0 * fm + f1) / 6.0;
    refine(&at, 0.0, 1.0, f0, fm, f1, rough, 1e-8 * rough.max(1e-12), 40, &mut knots)?;
    let total = knots.last().expect("nonempty").1;
    let mut us = Vec::with_capacity(k + 1);
    for j in 0..=k {
        let target = total * j as f64 / k as f64;
        let i = knots.partition_point(|kn| kn.1 < target).clamp(1, knots.len() - 1);
        let ((u0, c0), (u1, c1)) = (knots[i - 1], knots[i]);
        let frac = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
        us.push(u0 + frac * (u1 - u0));
    }
    Ok((total, us))
}

fn chord_seed(m: &MetricDefinition, p: &[f64], q: &[f64], k: usize) -> Result<(Vec<f64>, f64)> {
    let n = m.dim();
    let (total, us) = chord(m, p, q, k)?;
    let d: Vec<f64> = q.iter().zip(p).map(|(a, b)| a - b).collect();
    let mut z = Vec::with_capacity(n + 2 * n * (k - 1));
    for (j, u) in us.iter().enumerate().take(k) {
        let x: Vec<f64> = p.iter().zip(&d).map(|(a, b)| a + u * b).collect();
        let f = m.eval_norm(&x, &d)?;
        let v: Vec<f64> = d.iter().map(|c| c * total / f).collect();
        if j > 0 {
            z.extend_from_slice(&x);
        }
        z.extend_from_slice(&v);
    }
    Ok((z, total))
}

fn concat(mut parts: Vec<Trajectory>) -> Trajectory {
    let mut acc = parts.remove(0);
    for p in parts {
        acc = Trajectory::merge(acc, p);
    }
    acc
}

/// Geodesic with `γ(0) = p`, `γ(1) = q` by damped Newton shooting.
///
/// Long chords are split into segments of bounded F-length (multiple
/// shooting); a stalled single shot is restarted from perturbed directions
/// and then with twice as many segments.
pub fn geodesic_bvp(
    m: &MetricDefinition,
    p: &[f64],
    q: &[f64],
    profile: &ToleranceProfile,
) -> Result<GeodesicPath> {
    m.check_point(p)?;
    m.check_point(q)?;
    if p == q {
        return Err(Error::InvalidArgument(
            "boundary-value problem needs distinct endpoints".into(),
        ));
    }
    let n = m.dim();
    let opts = ode_options(profile);
    let (_, chord_len) = chord_seed(m, p, q, 1)?;
    let k0 = ((chord_len / profile.bvp_segment_length).ceil() as usize).clamp(1, MAX_SEGMENTS / 2);
    let tol = profile.bvp_tol * (1.0 + chord_len);
    let mut best = f64::INFINITY;

    let mut attempts: Vec<(usize, Vec<f64>)> = Vec::new();
    let (z, _) = chord_seed(m, p, q, k0)?;
    attempts.push((k0, z.clone()));
    if k0 == 1 {
        let base = &z[..n];
        for d in sphere_directions(n, profile.bvp_multistarts) {
            let f = m.eval_norm(p, &d)?;
            let v: Vec<f64> = base
                .iter()
                .zip(&d)
                .map(|(b, di)| 0.5 * b + 0.5 * chord_len * di / f)
                .collect();
            attempts.push((1, v));
        }
    }

    for (k, z0) in attempts {
        let shot = Shooting {
            m,
            p: p.to_vec(),
            q: q.to_vec(),
            k,
            opts,
        };
        let (z, eval, ok) = shot.solve(z0, tol, profile.bvp_max_iterations);
        if let Some(e) = eval {
            best = best.min(e.weighted);
            if ok {
                let v0 = z[..n].to_vec();
                let speed = m.eval_norm(p, &v0)?;
                return Ok(GeodesicPath {
                    metric: m.clone(),
                    traj: concat(e.segments),
                    x0: p.to_vec(),
                    y0: v0,
                    speed,
                    bvp_residual: Some(e.weighted),
                });
            }
        }
    }
    let ks = if k0 > 1 { vec![k0, 2 * k0] } else { vec![2] };
    for k in ks {
        match continuation(m, p, q, k, tol, profile) {
            Ok(path) => return Ok(path),
            Err(Error::Nonconvergence { best_residual }) => best = best.min(best_residual),
            Err(e) => return Err(e),
        }
    }
    Err(Error::Nonconvergence {
        best_residual: best,
    })
}

/// Walks the far endpoint from `p` to `q` along the chord, reusing each
/// solution as the seed of the next problem.
fn continuation(
    m: &MetricDefinition,
    p: &[f64],
    q: &[f64],
    k: usize,
    tol: f64,
    profile: &ToleranceProfile,
) -> Result<GeodesicPath> {
    let n = m.dim();
    let opts = ode_options(profile);
    let (_, us) = chord(m, p, q, k)?;
    let d: Vec<f64> = q.iter().zip(p).map(|(a, b)| a - b).collect();
    let target = |u: f64| -> Vec<f64> { p.iter().zip(&d).map(|(a, b)| a + u * b).collect() };
    let mut stops: Vec<f64> = us[1..].to_vec();
    stops.reverse();
    let mut done = 0.0;
    let mut z = chord_seed(m, p, &target(stops[stops.len() - 1]), k)?.0;
    let mut best = f64::INFINITY;
    let mut budget = 8 * k;
    while let Some(&u) = stops.last() {
        let end = if stops.len() == 1 { q.to_vec() } else { target(u) };
        let shot = Shooting {
            m,
            p: p.to_vec(),
            q: end,
            k,
            opts: if stops.len() == 1 { opts } else { loose(&opts) },
        };
        let stage_tol = if stops.len() == 1 { tol } else { tol.max(1e-6) };
        let (nz, eval, ok) = shot.solve(z.clone(), stage_tol, profile.bvp_max_iterations);
        if ok {
            stops.pop();
            done = u;
            z = nz;
            if stops.is_empty() {
                let e = eval.expect("converged");
                let v0 = z[..n].to_vec();
                let speed = m.eval_norm(p, &v0)?;
                return Ok(GeodesicPath {
                    metric: m.clone(),
                    traj: concat(e.segments),
                    x0: p.to_vec(),
                    y0: v0,
                    speed,
                    bvp_residual: Some(e.weighted),
                });
            }
        } else {
            if let Some(e) = eval {
                best = best.min(e.weighted);
            }
            if budget == 0 {
                break;
            }
            budget -= 1;
            stops.push(0.5 * (done + u));
        }
    }
    Err(Error::Nonconvergence {
        best_residual: best,
    })
}

/// `d(p, q)`: the F-length of the connecting geodesic.
pub fn distance(m: &MetricDefinition, p: &[f64], q: &[f64], profile: &ToleranceProfile) -> Result<f64> {
    m.check_point(p)?;
    m.check_point(q)?;
    if p == q {
        return Ok(0.0);
    }
    Ok(geodesic_bvp(m, p, q, profile)?.length())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{catalog_metric, Params};

    fn cat(name: &str) -> MetricDefinition {
        catalog_metric(name, &Params::new()).unwrap()
    }

    #[test]
    fn minkowski_lines() {
        let q = cat("minkowski_quartic");
        let prof = ToleranceProfile::default();
        let path = geodesic_ivp(&q, &TangentVector::new(vec![0.0, 0.0], vec![0.6, -0.3]), (0.0, 3.0), &prof).unwrap();
        for t in [0.5, 1.7, 3.0] {
            let x = path.position(t).unwrap();
            assert!((x[0] - 0.6 * t).abs() < 1e-12 && (x[1] + 0.3 * t).abs() < 1e-12);
        }
    }

    #[test]
    fn poincare_radial_ivp() {
        let p = cat("poincare_disk");
        let prof = ToleranceProfile::default();
        let path = geodesic_ivp(&p, &TangentVector::new(vec![0.0, 0.0], vec![0.5, 0.0]), (-4.0, 6.0), &prof).unwrap();
        assert_eq!(path.speed(), 1.0);
        for k in 0..=20 {
            let t = -4.0 + 0.5 * k as f64;
            let x = path.position(t).unwrap();
            assert!((x[0] - (t / 2.0).tanh()).abs() < 1e-9, "{t}");
            assert!(x[1].abs() < 1e-14);
        }
        assert!(path.max_speed_drift().unwrap() < 1e-9);
    }

    #[test]
    fn poincare_exit_is_reported() {
        let p = cat("poincare_disk");
        let prof = ToleranceProfile::default();
        // unit speed: tanh(t/2) rounds to 1 well before t = 80
        let res = geodesic_ivp(&p, &TangentVector::new(vec![0.0, 0.0], vec![0.5, 0.0]), (0.0, 80.0), &prof);
        assert!(matches!(res, Err(Error::ChartExit { .. }) | Err(Error::StepSizeCollapse { .. })), "{res:?}");
    }

    #[test]
    fn bvp_examples() {
        let prof = ToleranceProfile::default();
        let e = cat("euclidean");
        let d = distance(&e, &[0.0, 0.0], &[1.0, 2.0], &prof).unwrap();
        assert!((d - 5f64.sqrt()).abs() < 1e-10);
        let q = cat("minkowski_quartic");
        let d = distance(&q, &[0.3, -0.2], &[-0.5, 1.1], &prof).unwrap();
        let f = q.eval_norm(&[0.0, 0.0], &[-0.8, 1.3]).unwrap();
        assert!((d - f).abs() < 1e-10 * f);
        let p = cat("poincare_disk");
        for r in [0.1, 0.5, 0.9, 0.99] {
            let path = geodesic_bvp(&p, &[0.0, 0.0], &[r, 0.0], &prof).unwrap();
            let exact = 2.0 * f64::atanh(r);
            assert!((path.length() - exact).abs() < 1e-9 * exact, "{r}: {}", path.length());
            let quad = path.length_by_quadrature(2000).unwrap();
            assert!((quad - path.length()).abs() < 1e-8 * exact);
        }
        assert_eq!(distance(&p, &[0.2, 0.1], &[0.2, 0.1], &prof).unwrap(), 0.0);
    }

    #[test]
    fn randers_asymmetry() {
        let prof = ToleranceProfile::default();
        let r = catalog_metric("randers_flat", &Params::new().with("b0", 0.3)).unwrap();
        let a = distance(&r, &[0.0, 0.0], &[1.0, 0.0], &prof).unwrap();
        let b = distance(&r, &[1.0, 0.0], &[0.0, 0.0], &prof).unwrap();
        assert!((a - 1.3).abs() < 1e-10 && (b - 0.7).abs() < 1e-10);
    }

    #[test]
    fn far_points_in_poincare_use_segments() {
        let prof = ToleranceProfile::default();
        let p = cat("poincare_disk");
        let r = (8.0f64).tanh();
        let a = [r, 0.0];
        let th = 2.6f64;
        let b = [r * th.cos(), r * th.sin()];
        let d = distance(&p, &a, &b, &prof).unwrap();
        // hyperbolic law of cosines with both points at distance 16 from 0
        let s = 16.0f64;
        let exact = (s.cosh().powi(2) - s.sinh().powi(2) * th.cos()).acosh();
        assert!((d - exact).abs() < 1e-6, "{d} vs {exact}");
    }
}
