//! `verify`: every verifier on seeded random instances.

use finsler_core::dynamics::{geodesic_ivp, rauch_check, GeodesicPath};
use finsler_core::sampling::{random_unit, stream_rng};
use finsler_core::verify::{
    angle, check_angle_monotonicity_to_infinity, check_chord_monotonicity, check_distance_convexity,
    detect_flat_strip, tits_distance_estimate, uniformity_constant,
};
use finsler_core::{BerwaldMetric, Error, MetricDefinition, TangentVector, ToleranceProfile};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::{CliError, CliResult};

pub const CHECKS: [&str; 8] = [
    "convexity",
    "chord",
    "angle",
    "infinity",
    "tits",
    "strip",
    "uniformity",
    "rauch",
];

const CONVEXITY_SPAN: f64 = 2.0;
const CONVEXITY_NODES: usize = 9;
const CHORD_GRID: [f64; 5] = [0.25, 0.5, 1.0, 1.5, 2.0];
const INFINITY_GRID: [f64; 5] = [0.0, 0.025, 0.05, 0.075, 0.1];
const INFINITY_REACH: f64 = 12.0;
const TITS_TOL: f64 = 1e-2;
const UNIFORMITY_POINTS: usize = 4;
const UNIFORMITY_DIRECTIONS: usize = 64;
const SPREAD_TOL: f64 = 1e-6;
const RAUCH_SPAN: f64 = 3.0;
const RAUCH_TRIALS: usize = 50;

#[derive(Debug, Clone, Serialize)]
pub struct Instance {
    pub index: usize,
    /// `pass`, `fail`, `error` or `skipped`.
    pub status: &'static str,
    /// Check-specific badness; larger is worse.
    pub score: Option<f64>,
    pub message: Option<String>,
    pub report: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckSummary {
    pub name: &'static str,
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
    pub worst_score: Option<f64>,
    pub worst_instance: Option<usize>,
    pub instances: Vec<Instance>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckSummary>,
    pub instances: usize,
    pub pass: bool,
}

struct Ctx<'a> {
    m: &'a MetricDefinition,
    berwald: Option<&'a BerwaldMetric>,
    not_berwald: Option<String>,
    profile: &'a ToleranceProfile,
    b: f64,
}

enum Verdict {
    Done { pass: bool, score: f64, report: serde_json::Value },
    Skip(String),
}

fn unit_at(m: &MetricDefinition, p: &[f64], rng: &mut ChaCha8Rng) -> finsler_core::Result<Vec<f64>> {
    let d = random_unit(rng, m.dim());
    let f = m.eval_norm(p, &d)?;
    Ok(d.iter().map(|c| c / f).collect())
}

/// A point near `p` that stays in the chart.
fn nearby(m: &MetricDefinition, p: &[f64], r: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let d = random_unit(rng, m.dim());
        let s = r * rng.gen_range(0.5..1.0);
        let q: Vec<f64> = p.iter().zip(&d).map(|(a, b)| a + s * b).collect();
        if m.contains(&q) {
            return q;
        }
    }
}

fn ray(m: &MetricDefinition, p: &[f64], u: &[f64], t: f64, prof: &ToleranceProfile) -> finsler_core::Result<GeodesicPath> {
    geodesic_ivp(m, &TangentVector::new(p.to_vec(), u.to_vec()), (0.0, t), prof)
}

fn value<T: Serialize>(r: &T) -> serde_json::Value {
    serde_json::to_value(r).unwrap_or(serde_json::Value::Null)
}

fn run_one(name: &str, ctx: &Ctx, rng: &mut ChaCha8Rng) -> finsler_core::Result<Verdict> {
    let (m, prof) = (ctx.m, ctx.profile);
    let needs_berwald = !matches!(name, "angle" | "uniformity");
    let bm = match (needs_berwald, ctx.berwald) {
        (true, None) => return Ok(Verdict::Skip(ctx.not_berwald.clone().unwrap_or_default())),
        (_, b) => b,
    };
    let p = m.sample_point(rng);
    Ok(match name {
        "convexity" => {
            let bm = bm.expect("Berwald");
            let q = nearby(m, &p, 0.3, rng);
            let (u, v) = (unit_at(m, &p, rng)?, unit_at(m, &q, rng)?);
            let a = ray(m, &p, &u, CONVEXITY_SPAN, prof)?;
            let b = ray(m, &q, &v, CONVEXITY_SPAN, prof)?;
            let grid: Vec<f64> = (0..CONVEXITY_NODES)
                .map(|i| CONVEXITY_SPAN * i as f64 / (CONVEXITY_NODES - 1) as f64)
                .collect();
            let r = check_distance_convexity(bm, &a, &b, &grid, prof)?;
            Verdict::Done {
                pass: r.pass,
                score: -r.min_second_difference,
                report: value(&r),
            }
        }
        "chord" => {
            let (u, v) = (unit_at(m, &p, rng)?, unit_at(m, &p, rng)?);
            let r = check_chord_monotonicity(bm.expect("Berwald"), &p, &u, &v, &CHORD_GRID, prof)?;
            Verdict::Done {
                pass: r.pass,
                score: r.worst_violation,
                report: value(&r),
            }
        }
        "angle" => {
            let (u, v) = (unit_at(m, &p, rng)?, unit_at(m, &p, rng)?);
            let r = angle(m, &p, &u, &v, prof)?;
            Verdict::Done {
                pass: r.pass,
                score: r.discrepancy,
                report: value(&r),
            }
        }
        "infinity" => {
            let u = unit_at(m, &p, rng)?;
            let w = unit_at(m, &p, rng)?;
            let span = INFINITY_GRID[INFINITY_GRID.len() - 1];
            let g = ray(m, &p, &u, span, prof)?;
            let far = ray(m, &p, &w, INFINITY_REACH, prof)?.position(INFINITY_REACH)?;
            let r = check_angle_monotonicity_to_infinity(bm.expect("Berwald"), &g, &far, &INFINITY_GRID, prof)?;
            Verdict::Done {
                pass: r.pass,
                score: r.worst_decrease,
                report: value(&r),
            }
        }
        "tits" => {
            let p: Vec<f64> = p.iter().map(|c| 0.2 * c).collect();
            let p2 = nearby(m, &p, 0.1, rng);
            let (u, v) = (unit_at(m, &p, rng)?, unit_at(m, &p, rng)?);
            let h = prof.horizon;
            let r = tits_distance_estimate(bm.expect("Berwald"), &p, &u, &v, &[0.25 * h, 0.5 * h, h], &p2, prof)?;
            let complete = r.primary.failure.is_none() && r.secondary.failure.is_none();
            Verdict::Done {
                pass: complete && r.discrepancy < TITS_TOL,
                score: r.discrepancy,
                report: value(&r),
            }
        }
        "strip" => {
            let q = nearby(m, &p, 0.3, rng);
            let u = unit_at(m, &p, rng)?;
            let a = ray(m, &p, &u, CONVEXITY_SPAN, prof)?;
            let b = ray(m, &q, &u, CONVEXITY_SPAN, prof)?;
            let r = detect_flat_strip(bm.expect("Berwald"), &a, &b, prof)?;
            let flat = r.flatness_residual.unwrap_or(0.0);
            // a reported strip must be flat
            Verdict::Done {
                pass: !(r.strip && flat >= prof.verifier_tol),
                score: flat,
                report: value(&r),
            }
        }
        "uniformity" => {
            let mut pts = vec![p];
            while pts.len() < UNIFORMITY_POINTS {
                pts.push(m.sample_point(rng));
            }
            let r = uniformity_constant(m, &pts, UNIFORMITY_DIRECTIONS)?;
            let spread_ok = ctx.berwald.is_none() || r.spread < SPREAD_TOL;
            Verdict::Done {
                pass: r.global >= 1.0 - 1e-12 && spread_ok,
                score: r.spread,
                report: value(&r),
            }
        }
        "rauch" => {
            let u = unit_at(m, &p, rng)?;
            let path = ray(m, &p, &u, RAUCH_SPAN, prof)?;
            let seed = rng.gen();
            let r = rauch_check(bm.expect("Berwald"), &path, RAUCH_TRIALS, ctx.b, prof, seed)?;
            Verdict::Done {
                pass: r.ok,
                score: r.worst_ratio_violation,
                report: value(&r),
            }
        }
        other => unreachable!("unknown check {other}"),
    })
}

fn instance(name: &'static str, check: usize, index: usize, ctx: &Ctx, seed: u64) -> Instance {
    let mut rng = stream_rng(seed, ((check as u64 + 1) << 32) | index as u64);
    let (status, score, message, report) = match run_one(name, ctx, &mut rng) {
        Ok(Verdict::Done { pass, score, report }) => (if pass { "pass" } else { "fail" }, Some(score), None, Some(report)),
        Ok(Verdict::Skip(why)) => ("skipped", None, Some(why), None),
        Err(Error::Precondition(why)) => ("skipped", None, Some(why), None),
        Err(e) => ("error", None, Some(e.to_string()), None),
    };
    Instance {
        index,
        status,
        score,
        message,
        report,
    }
}

pub fn run_verify(
    m: &MetricDefinition,
    cfg: &RunConfig,
    checks: Option<&str>,
    instances: usize,
    b: f64,
) -> CliResult<VerifyReport> {
    if instances == 0 {
        return Err(CliError::Input("--instances must be positive".into()));
    }
    let selected: Vec<&'static str> = match checks {
        None => CHECKS.to_vec(),
        Some(list) => list
            .split(',')
            .map(|s| {
                let s = s.trim();
                CHECKS
                    .iter()
                    .find(|c| **c == s)
                    .copied()
                    .ok_or_else(|| CliError::Input(format!("unknown check `{s}`; known: {}", CHECKS.join(", "))))
            })
            .collect::<CliResult<_>>()?,
    };
    let certified = BerwaldMetric::certify(m, &cfg.profile, cfg.seed);
    let (berwald, not_berwald) = match certified {
        Ok(b) => (Some(b), None),
        Err(e @ Error::NotBerwald { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let ctx = Ctx {
        m,
        berwald: berwald.as_ref(),
        not_berwald,
        profile: &cfg.profile,
        b,
    };
    let jobs: Vec<(usize, &'static str, usize)> = selected
        .iter()
        .flat_map(|name| {
            let check = CHECKS.iter().position(|c| c == name).expect("known");
            (0..instances).map(move |i| (check, *name, i))
        })
        .collect();
    let results: Vec<Instance> = jobs
        .par_iter()
        .map(|(check, name, i)| instance(name, *check, *i, &ctx, cfg.seed))
        .collect();

    let mut summaries = Vec::new();
    for (k, name) in selected.iter().enumerate() {
        let list: Vec<Instance> = results[k * instances..(k + 1) * instances].to_vec();
        let passed = list.iter().filter(|i| i.status == "pass").count();
        let skipped = list.iter().filter(|i| i.status == "skipped").count();
        let worst = list
            .iter()
            .filter_map(|i| i.score.map(|s| (s, i.index)))
            .fold(None, |acc: Option<(f64, usize)>, (s, i)| match acc {
                Some((w, _)) if w >= s => acc,
                _ => Some((s, i)),
            });
        summaries.push(CheckSummary {
            name,
            passed,
            failed: list.len() - passed - skipped,
            skipped,
            worst_score: worst.map(|w| w.0),
            worst_instance: worst.map(|w| w.1),
            instances: list,
        });
    }
    let pass = summaries.iter().all(|s| s.failed == 0);
    Ok(VerifyReport {
        checks: summaries,
        instances,
        pass,
    })
}
