//! Dormand–Prince 5(4) with step-size control and 4th-order continuous
//! extension.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub atol: f64,
    pub rtol: f64,
    pub max_steps: usize,
    /// Largest step magnitude; `f64::INFINITY` for none.
    pub max_step: f64,
}

impl OdeOptions {
    pub fn new(atol: f64, rtol: f64, max_steps: usize) -> Self {
        OdeOptions {
            atol,
            rtol,
            max_steps,
            max_step: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone)]
struct Step {
    t_old: f64,
    h: f64,
    r: [Vec<f64>; 5],
}

impl Step {
    fn lo(&self) -> f64 {
        self.t_old.min(self.t_old + self.h)
    }

    fn eval(&self, t: f64) -> Vec<f64> {
        let th = (t - self.t_old) / self.h;
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.r;
        (0..r1.len())
            .map(|i| r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i]))))
            .collect()
    }
}

/// Accepted nodes in increasing time plus the dense interpolant between them.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    steps: Vec<Step>,
}

impl Trajectory {
    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn covers(&self, t: f64) -> bool {
        t >= self.t_start() && t <= self.t_end()
    }

    /// State at `t`; nodes are reproduced exactly.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        if !self.covers(t) {
            return Err(Error::InvalidArgument(format!(
                "t = {t} outside [{}, {}]",
                self.t_start(),
                self.t_end()
            )));
        }
        let k = self.times.partition_point(|&s| s <= t);
        if k > 0 && self.times[k - 1] == t {
            return Ok(self.states[k - 1].clone());
        }
        let step = &self.steps[(k - 1).min(self.steps.len() - 1)];
        Ok(step.eval(t))
    }

    /// Joins a backward trajectory from `t0` with a forward one from `t0`.
    pub fn merge(backward: Trajectory, forward: Trajectory) -> Trajectory {
        debug_assert_eq!(backward.t_end(), forward.t_start());
        let mut times = backward.times;
        let mut states = backward.states;
        times.pop();
        states.pop();
        times.extend(forward.times);
        states.extend(forward.states);
        let mut steps = backward.steps;
        steps.extend(forward.steps);
        Trajectory {
            times,
            states,
            steps,
        }
    }

    fn from_run(mut times: Vec<f64>, mut states: Vec<Vec<f64>>, mut steps: Vec<Step>) -> Self {
        if times.len() > 1 && times[1] < times[0] {
            times.reverse();
            states.reverse();
            steps.reverse();
        }
        debug_assert!(steps.windows(2).all(|w| w[0].lo() <= w[1].lo()));
        Trajectory {
            times,
            states,
            steps,
        }
    }
}

fn axpy(out: &mut [f64], y: &[f64], h: f64, terms: &[(f64, &[f64])]) {
    for i in 0..y.len() {
        let mut s = 0.0;
        for (c, k) in terms {
            s += c * k[i];
        }
        out[i] = y[i] + h * s;
    }
}

const MAX_FAILURES: usize = 64;

/// Integrates `y' = f(t, y)` from `t0` to `t1` (either direction).
///
/// When `f` fails (for instance the state leaves the chart) the step is
/// retried with a smaller size; if that cannot get past the failure the
/// result is [`Error::ChartExit`] at the last accepted time.
pub fn integrate<F>(f: F, t0: f64, y0: &[f64], t1: f64, opts: &OdeOptions) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    integrate_weighted(f, None, t0, y0, t1, opts)
}

/// Error weighting for states `(x, v_1, v_2, …, aux)` whose coordinate
/// errors are magnified by a state-dependent factor `σ ≥ 1` when measured
/// with a metric.
///
/// The first `positions` components get tolerance
/// `(atol + rtol |x_i|) / σ`, floored at a few ulps; the next `vectors` get
/// `atol / σ + rtol |v_i|`, floored at `16 ε σ |v_i|` since the vector field
/// itself is only known to about `ε σ` relative; the rest keep the plain
/// tolerance.
pub struct MetricScale<'a> {
    pub scale: &'a dyn Fn(&[f64]) -> f64,
    pub positions: usize,
    pub vectors: usize,
}

/// As [`integrate`], with the error norm adjusted by `scale`.
pub fn integrate_weighted<F>(
    mut f: F,
    scale: Option<&MetricScale>,
    t0: f64,
    y0: &[f64],
    t1: f64,
    opts: &OdeOptions,
) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y0.len();
    if t1 == t0 {
        return Ok(Trajectory {
            times: vec![t0],
            states: vec![y0.to_vec()],
            steps: Vec::new(),
        });
    }
    let dir = (t1 - t0).signum();
    let span = (t1 - t0).abs();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    f(t, &y, &mut k1)?;

    let sk = |a: f64, b: f64| opts.atol + opts.rtol * a.abs().max(b.abs());
    // starting step (Hairer–Wanner II.4)
    let mut h = {
        let d0 = (y.iter().map(|v| (v / sk(*v, 0.0)).powi(2)).sum::<f64>() / n as f64).sqrt();
        let d1 = (k1
            .iter()
            .zip(&y)
            .map(|(k, v)| (k / sk(*v, 0.0)).powi(2))
            .sum::<f64>()
            / n as f64)
            .sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span).min(opts.max_step);
        let mut y1 = vec![0.0; n];
        axpy(&mut y1, &y, dir * h0, &[(1.0, &k1)]);
        let mut f1 = vec![0.0; n];
        let h1 = match f(t + dir * h0, &y1, &mut f1) {
            Ok(()) => {
                let d2 = (f1
                    .iter()
                    .zip(&k1)
                    .zip(&y)
                    .map(|((a, b), v)| ((a - b) / sk(*v, 0.0)).powi(2))
                    .sum::<f64>()
                    / n as f64)
                    .sqrt()
                    / h0;
                let m = d1.max(d2);
                if m <= 1e-15 {
                    (h0 * 1e-3).max(1e-6)
                } else {
                    (0.01 / m).powf(0.2)
                }
            }
            Err(_) => h0,
        };
        (100.0 * h0).min(h1).min(span).min(opts.max_step)
    };

    let mut times = vec![t];
    let mut states = vec![y.clone()];
    let mut steps = Vec::new();
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut rejected_last = false;
    let mut count = 0usize;
    let mut failures = 0usize;

    while (t1 - t) * dir > 0.0 {
        count += 1;
        if count > opts.max_steps {
            return Err(Error::StepSizeCollapse { t });
        }
        let last = h >= (t1 - t).abs() * (1.0 - 1e-12);
        if last {
            h = (t1 - t).abs();
        }
        let hs = dir * h;
        let stages = (|| -> Result<()> {
            axpy(&mut tmp, &y, hs, &[(A21, &k1)]);
            f(t + C2 * hs, &tmp, &mut k2)?;
            axpy(&mut tmp, &y, hs, &[(A31, &k1), (A32, &k2)]);
            f(t + C3 * hs, &tmp, &mut k3)?;
            axpy(&mut tmp, &y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
            f(t + C4 * hs, &tmp, &mut k4)?;
            axpy(&mut tmp, &y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
            f(t + C5 * hs, &tmp, &mut k5)?;
            axpy(
                &mut tmp,
                &y,
                hs,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            );
            f(t + hs, &tmp, &mut k6)?;
            axpy(
                &mut y_new,
                &y,
                hs,
                &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
            );
            f(t + hs, &y_new, &mut k7)?;
            Ok(())
        })();
        if stages.is_err() {
            h *= 0.25;
            rejected_last = true;
            failures += 1;
            // repeated failures mean the solution is creeping up on the edge
            if h < 1e-13 * t.abs().max(1.0) || failures > MAX_FAILURES {
                return Err(Error::ChartExit { t });
            }
            continue;
        }
        let (sigma, pos, vecs) = match scale {
            Some(sc) => ((sc.scale)(&y_new).max(1.0), sc.positions, sc.vectors),
            None => (1.0, 0, 0),
        };
        let mut err = 0.0;
        for i in 0..n {
            let e = hs
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let mag = y[i].abs().max(y_new[i].abs());
            let tol = if i < pos {
                ((opts.atol + opts.rtol * mag) / sigma).max(4.0 * f64::EPSILON * mag)
            } else if i < pos + vecs {
                (opts.atol / sigma + opts.rtol * mag).max(16.0 * f64::EPSILON * sigma * mag)
            } else {
                sk(y[i], y_new[i])
            };
            err += (e / tol).powi(2);
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() {
            h *= 0.25;
            rejected_last = true;
            continue;
        }
        let mut fac = 0.9 * err.powf(-0.2);
        if err <= 1.0 {
            let mut r5 = vec![0.0; n];
            let mut ydiff = vec![0.0; n];
            let mut r3 = vec![0.0; n];
            let mut r4 = vec![0.0; n];
            for i in 0..n {
                ydiff[i] = y_new[i] - y[i];
                r3[i] = hs * k1[i] - ydiff[i];
                r4[i] = ydiff[i] - hs * k7[i] - r3[i];
                r5[i] = hs
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            steps.push(Step {
                t_old: t,
                h: hs,
                r: [y.clone(), ydiff, r3, r4, r5],
            });
            t = if last { t1 } else { t + hs };
            y.copy_from_slice(&y_new);
            k1.copy_from_slice(&k7);
            times.push(t);
            states.push(y.clone());
            if rejected_last {
                fac = fac.min(1.0);
            }
            rejected_last = false;
            h *= fac.clamp(0.2, 10.0);
            h = h.min(opts.max_step);
        } else {
            rejected_last = true;
            h *= fac.clamp(0.2, 1.0);
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepSizeCollapse { t });
        }
    }
    Ok(Trajectory::from_run(times, states, steps))
}

/// Integrates backward to `t_lo` and forward to `t_hi` from `(t0, y0)`.
pub fn integrate_window<F>(
    mut f: F,
    scale: Option<&MetricScale>,
    t0: f64,
    y0: &[f64],
    t_lo: f64,
    t_hi: f64,
    opts: &OdeOptions,
) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let fwd = integrate_weighted(&mut f, scale, t0, y0, t_hi, opts)?;
    if t_lo >= t0 {
        return Ok(fwd);
    }
    let back = integrate_weighted(&mut f, scale, t0, y0, t_lo, opts)?;
    Ok(Trajectory::merge(back, fwd))
}
