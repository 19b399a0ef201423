use std::path::PathBuf;

use clap::{Parser, Subcommand};
use finsler_core::dynamics::{
    classify_jacobi, csv_number, distance, geodesic_bvp, geodesic_ivp, jacobi_ivp, parallel_transport, rank_estimate,
    Bezier, Curve, Polyline,
};
use finsler_core::metric::classify;
use finsler_core::sampling::{random_unit, stream_rng};
use finsler_core::tensor::{connection_data, finsler_volume_density, flag_curvature, Flag};
use finsler_core::verify::angle;
use finsler_core::{BerwaldMetric, Error, MetricDefinition, TangentVector};
use serde::Serialize;
use serde_json::json;

use crate::config::{load_profile, parse_points, parse_vector, Format, RunConfig};
use crate::metric_spec::load_metric;
use crate::output::{emit, report_json, Emitted};
use crate::{CliError, CliResult, Outcome};

const CURVATURE_STREAM: u64 = 5;

#[derive(Debug, Parser)]
#[command(name = "finsler-forge", version, about = "Numerical Finsler and Berwald geometry")]
pub struct Cli {
    /// Metric: JSON file, inline JSON, or `name(key=value,...)` joined by `*`.
    #[arg(long, global = true)]
    pub metric: Option<String>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; reports go to stdout without it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "json")]
    pub format: Format,
    /// Tolerance profile JSON; unspecified keys keep their defaults.
    #[arg(long, global = true)]
    pub profile: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

type Vector = Vec<f64>;

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pointwise tensors at (x, y).
    Inspect {
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        x: Vector,
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        y: Vector,
    },
    /// Reversible, Riemannian and Berwald flags.
    Classify,
    /// Geodesic through (x, y) over [t0, t1].
    Geodesic {
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        x: Vector,
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        y: Vector,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        t0: f64,
        #[arg(long)]
        t1: f64,
    },
    /// Geodesic from p to q on [0, 1].
    Connect {
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        p: Vector,
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        q: Vector,
    },
    Distance {
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        p: Vector,
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        q: Vector,
    },
    /// Parallel transport of w along a polyline or a cubic Bézier curve.
    Transport {
        /// Polyline vertices `x,y;x,y;...`.
        #[arg(long, allow_hyphen_values = true)]
        points: Option<String>,
        /// Four Bézier control points `x,y;x,y;x,y;x,y`.
        #[arg(long, allow_hyphen_values = true)]
        bezier: Option<String>,
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        w: Vector,
    },
    /// Jacobi field with J(t0 = 0) = j0, J'(0) = jp0 along the geodesic of (x, y).
    Jacobi {
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        x: Vector,
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        y: Vector,
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        j0: Vector,
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        jp0: Vector,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        t0: f64,
        #[arg(long)]
        t1: f64,
        /// Classification horizon; defaults to the largest the window allows.
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Parallel-Jacobi rank of the unit vector (x, y).
    Rank {
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        x: Vector,
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        y: Vector,
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Flag curvature on random flags, optionally at a fixed base point and pole.
    Curvature {
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        x: Option<Vector>,
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        y: Option<Vector>,
    },
    /// Finsler volume density at x.
    Volume {
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        x: Vector,
        #[arg(long, default_value_t = 4096)]
        samples: usize,
    },
    /// Chord angle between unit vectors u, v at p.
    Angle {
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        p: Vector,
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        u: Vector,
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        v: Vector,
    },
    /// Runs the verifiers on random instances.
    Verify {
        /// Comma-separated subset of the checks; all by default.
        #[arg(long)]
        checks: Option<String>,
        #[arg(long, default_value_t = 2)]
        instances: usize,
        /// Curvature bound for the Rauch check, K ≥ −b².
        #[arg(long, default_value_t = 1.0)]
        b: f64,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Inspect { .. } => "inspect",
            Command::Classify => "classify",
            Command::Geodesic { .. } => "geodesic",
            Command::Connect { .. } => "connect",
            Command::Distance { .. } => "distance",
            Command::Transport { .. } => "transport",
            Command::Jacobi { .. } => "jacobi",
            Command::Rank { .. } => "rank",
            Command::Curvature { .. } => "curvature",
            Command::Volume { .. } => "volume",
            Command::Angle { .. } => "angle",
            Command::Verify { .. } => "verify",
        }
    }
}

fn berwald(m: &MetricDefinition, cfg: &RunConfig) -> CliResult<BerwaldMetric> {
    Ok(BerwaldMetric::certify(m, &cfg.profile, cfg.seed)?)
}

#[derive(Serialize)]
struct GeodesicSummary {
    x0: Vec<f64>,
    y0: Vec<f64>,
    t_start: f64,
    t_end: f64,
    speed: f64,
    length: f64,
    max_speed_drift: f64,
    end: Vec<f64>,
    bvp_residual: Option<f64>,
}

fn geodesic_summary(p: &finsler_core::dynamics::GeodesicPath) -> CliResult<GeodesicSummary> {
    Ok(GeodesicSummary {
        x0: p.x0.clone(),
        y0: p.y0.clone(),
        t_start: p.t_start(),
        t_end: p.t_end(),
        speed: p.speed(),
        length: p.length(),
        max_speed_drift: p.max_speed_drift()?,
        end: p.state(p.t_end())?,
        bvp_residual: p.bvp_residual,
    })
}

fn transport_csv(n: usize, samples: &[Vec<f64>]) -> String {
    let mut out = String::from("t");
    for i in 0..n {
        out.push_str(&format!(",x{i}"));
    }
    for i in 0..n {
        out.push_str(&format!(",W{i}"));
    }
    out.push('\n');
    for row in samples {
        out.push_str(&row.iter().map(|v| csv_number(*v)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct FlagSample {
    base: Vec<f64>,
    pole: Vec<f64>,
    edge: Vec<f64>,
    k: f64,
}

fn curvature_samples(
    m: &BerwaldMetric,
    cfg: &RunConfig,
    count: usize,
    x: Option<&Vector>,
    y: Option<&Vector>,
) -> CliResult<Vec<FlagSample>> {
    let n = m.dim();
    let mut rng = stream_rng(cfg.seed, CURVATURE_STREAM);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > 10 * count + 100 {
            return Err(CliError::Input("could not find nondegenerate flags".into()));
        }
        let base = match x {
            Some(x) => x.clone(),
            None => m.sample_point(&mut rng),
        };
        let pole = match y {
            Some(y) => y.clone(),
            None => random_unit(&mut rng, n),
        };
        let edge = random_unit(&mut rng, n);
        let flag = Flag { base, pole, edge };
        match flag_curvature(m, &flag, &cfg.profile) {
            Ok(k) => out.push(FlagSample {
                base: flag.base,
                pole: flag.pole,
                edge: flag.edge,
                k,
            }),
            Err(Error::DegenerateFlag { .. }) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

fn curvature_csv(n: usize, flags: &[FlagSample]) -> String {
    let mut head: Vec<String> = Vec::new();
    for prefix in ["x", "y", "V"] {
        head.extend((0..n).map(|i| format!("{prefix}{i}")));
    }
    head.push("K".into());
    let mut out = head.join(",") + "\n";
    for f in flags {
        let row: Vec<String> = f
            .base
            .iter()
            .chain(&f.pole)
            .chain(&f.edge)
            .chain(std::iter::once(&f.k))
            .map(|v| csv_number(*v))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Runs one subcommand and writes its report.
pub fn run(cli: Cli) -> CliResult<Outcome> {
    let cfg = RunConfig {
        metric: cli.metric.clone(),
        seed: cli.seed,
        out: cli.out.clone(),
        format: cli.format,
        profile: load_profile(cli.profile.as_ref())?,
    };
    let name = cli.command.name();
    let m = match &cfg.metric {
        Some(s) => load_metric(s)?,
        None => return Err(CliError::Input("--metric is required".into())),
    };
    let label = m.label().to_string();
    let prof = &cfg.profile;
    let mut outcome = Outcome::Ok;
    let (result, csv): (serde_json::Value, Option<String>) = match &cli.command {
        Command::Inspect { x, y } => {
            let v = TangentVector::new(x.clone(), y.clone());
            let f = m.check_slit(x, y, prof.slit_epsilon)?;
            let data = connection_data(&m, &v, prof)?;
            (json!({ "norm": f, "tensors": data }), None)
        }
        Command::Classify => (serde_json::to_value(classify(&m, prof, cfg.seed)?)?, None),
        Command::Geodesic { x, y, t0, t1 } => {
            let path = geodesic_ivp(&m, &TangentVector::new(x.clone(), y.clone()), (*t0, *t1), prof)?;
            (serde_json::to_value(geodesic_summary(&path)?)?, Some(path.to_csv()?))
        }
        Command::Connect { p, q } => {
            let path = geodesic_bvp(&m, p, q, prof)?;
            (serde_json::to_value(geodesic_summary(&path)?)?, Some(path.to_csv()?))
        }
        Command::Distance { p, q } => (json!({ "p": p, "q": q, "distance": distance(&m, p, q, prof)? }), None),
        Command::Transport { points, bezier, w } => {
            let b = berwald(&m, &cfg)?;
            let curve: Box<dyn Curve> = match (points, bezier) {
                (Some(s), None) => Box::new(Polyline::new(parse_points(s)?)?),
                (None, Some(s)) => {
                    let pts = parse_points(s)?;
                    let control: [Vec<f64>; 4] = pts
                        .try_into()
                        .map_err(|_| CliError::Input("--bezier needs exactly four points".into()))?;
                    Box::new(Bezier { control })
                }
                _ => return Err(CliError::Input("give exactly one of --points and --bezier".into())),
            };
            let r = parallel_transport(&b, curve.as_ref(), w, prof)?;
            let csv = transport_csv(b.dim(), &r.samples);
            (serde_json::to_value(&r)?, Some(csv))
        }
        Command::Jacobi {
            x,
            y,
            j0,
            jp0,
            t0,
            t1,
            horizon,
        } => {
            let b = berwald(&m, &cfg)?;
            let path = geodesic_ivp(&b, &TangentVector::new(x.clone(), y.clone()), (*t0, *t1), prof)?;
            let sol = jacobi_ivp(&b, &path, j0, jp0, prof)?;
            let h = horizon.unwrap_or_else(|| if *t0 == 0.0 { *t1 } else { t1.min(-t0) });
            let class = classify_jacobi(&sol, h, prof.verifier_tol)?;
            let result = json!({
                "t_start": sol.t_start(),
                "t_end": sol.t_end(),
                "horizon": h,
                "class": class,
                "final_field": sol.field(sol.t_end())?,
                "final_derivative": sol.derivative(sol.t_end())?,
                "final_norm": sol.norm(sol.t_end())?,
            });
            (result, Some(sol.to_csv()))
        }
        Command::Rank { x, y, horizon } => {
            let b = berwald(&m, &cfg)?;
            let r = rank_estimate(&b, &TangentVector::new(x.clone(), y.clone()), horizon.unwrap_or(prof.horizon), prof)?;
            if !r.stable {
                outcome = Outcome::Nonconvergence;
            }
            (serde_json::to_value(&r)?, None)
        }
        Command::Curvature { samples, x, y } => {
            let b = berwald(&m, &cfg)?;
            let flags = curvature_samples(&b, &cfg, *samples, x.as_ref(), y.as_ref())?;
            let ks: Vec<f64> = flags.iter().map(|f| f.k).collect();
            let min = ks.iter().copied().fold(f64::INFINITY, f64::min);
            let max = ks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean = ks.iter().sum::<f64>() / ks.len().max(1) as f64;
            let csv = curvature_csv(b.dim(), &flags);
            (json!({ "samples": flags.len(), "min": min, "max": max, "mean": mean, "flags": flags }), Some(csv))
        }
        Command::Volume { x, samples } => (serde_json::to_value(finsler_volume_density(&m, x, *samples)?)?, None),
        Command::Angle { p, u, v } => (serde_json::to_value(angle(&m, p, u, v, prof)?)?, None),
        Command::Verify { checks, instances, b } => {
            let report = crate::verify::run_verify(&m, &cfg, checks.as_deref(), *instances, *b)?;
            if !report.pass {
                outcome = Outcome::VerificationFailed;
            }
            (serde_json::to_value(&report)?, None)
        }
    };
    let json = report_json(&cfg, name, Some(&label), result)?;
    emit(&cfg, name, &Emitted { json, csv })?;
    Ok(outcome)
}
