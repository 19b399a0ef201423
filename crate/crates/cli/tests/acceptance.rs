//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when a criterion fails unexpectedly.

use std::process::Command;
use std::time::Instant;

use finsler_core::dynamics::{
    geodesic_ivp, jacobi_ivp, parallel_transport, rank_estimate, rauch_check, Bezier, GeodesicPath,
};
use finsler_core::metric::classify;
use finsler_core::sampling::{random_unit, stream_rng};
use finsler_core::tensor::{chern_coefficients, flag_curvature, fundamental_matrix, inner, Flag};
use finsler_core::verify::{
    angle, check_chord_monotonicity, check_distance_convexity, detect_flat_strip, tits_distance_estimate,
    uniformity_constant,
};
use finsler_core::{catalog_metric, product_metric, BerwaldMetric, MetricDefinition, Params, TangentVector, ToleranceProfile};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const SEED: u64 = 20240611;
const LOCAL_EXPR: &str = "sqrt(y0^2 + y1^2) + 0.2*sqrt(y0^2 + 4*y1^2)";

/// Criteria that cannot hold as written. The line still reads FAIL.
const KNOWN_UNATTAINABLE: [(usize, &str); 1] = [(
    7,
    "F_p(v - u) exceeds 2 for non-reversible Randers norms; the bound needs F(-u) = F(u)",
)];

type Outcome = Result<(bool, String), String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn catalog(name: &str) -> MetricDefinition {
    let params = if name == "locally_minkowski" {
        Params::new().with_expr(LOCAL_EXPR)
    } else {
        Params::new()
    };
    catalog_metric(name, &params).expect("catalog metric")
}

fn euclid(n: usize) -> MetricDefinition {
    catalog_metric("euclidean", &Params::new().with("n", n as f64)).expect("euclidean")
}

fn hyperbolic_cylinder() -> MetricDefinition {
    product_metric(&catalog("poincare_disk"), &euclid(1))
}

fn berwald(m: &MetricDefinition) -> BerwaldMetric {
    BerwaldMetric::certify(m, &ToleranceProfile::default(), SEED).expect("Berwald")
}

const BERWALD_CATALOG: [&str; 6] = [
    "euclidean",
    "minkowski_quartic",
    "poincare_disk",
    "round_sphere_chart",
    "randers_flat",
    "locally_minkowski",
];

const ALL_CATALOG: [&str; 7] = [
    "euclidean",
    "minkowski_quartic",
    "poincare_disk",
    "round_sphere_chart",
    "randers_flat",
    "randers_shear",
    "locally_minkowski",
];

fn unit(m: &MetricDefinition, x: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = random_unit(rng, m.dim());
    let f = m.eval_norm(x, &d).expect("norm");
    d.iter().map(|c| c / f).collect()
}

fn scaled(v: &[f64], s: f64) -> Vec<f64> {
    v.iter().map(|c| c * s).collect()
}

fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// A g_y-unit vector g_y-orthogonal to `y`.
fn normal(m: &MetricDefinition, x: &[f64], y: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let g = fundamental_matrix(m, x, y).expect("g");
    let w = random_unit(rng, m.dim());
    let c = inner(&g, &w, y) / inner(&g, y, y);
    let e: Vec<f64> = w.iter().zip(y).map(|(a, b)| a - c * b).collect();
    let s = inner(&g, &e, &e).sqrt();
    scaled(&e, 1.0 / s)
}

fn curvature_reduction() -> Outcome {
    let prof = ToleranceProfile::default();
    let mut worst: f64 = 0.0;
    for (name, k) in [("poincare_disk", -1.0), ("round_sphere_chart", 1.0)] {
        let m = catalog(name);
        let b = berwald(&m);
        let mut rng = stream_rng(SEED, 101);
        for _ in 0..100 {
            let base = m.sample_point(&mut rng);
            let flag = Flag {
                pole: random_unit(&mut rng, 2),
                edge: random_unit(&mut rng, 2),
                base,
            };
            let got = flag_curvature(&b, &flag, &prof).map_err(err)?;
            worst = worst.max((got - k).abs());
        }
    }
    Ok((worst < 1e-6, format!("max |K - K0| = {worst:.2e} over 200 flags")))
}

fn berwald_classification() -> Outcome {
    let prof = ToleranceProfile::default();
    let mut metrics: Vec<MetricDefinition> = ["euclidean", "poincare_disk", "minkowski_quartic"]
        .iter()
        .map(|n| catalog(n))
        .collect();
    metrics.push(hyperbolic_cylinder());
    metrics.push(product_metric(&catalog("minkowski_quartic"), &catalog("poincare_disk")));
    let mut worst: f64 = 0.0;
    let mut all = true;
    for m in &metrics {
        let c = classify(m, &prof, SEED).map_err(err)?;
        all &= c.berwald;
        worst = worst.max(c.berwald_residual);
    }
    let shear = classify(&catalog("randers_shear"), &prof, SEED).map_err(err)?;
    let pass = all && worst < 1e-10 && !shear.berwald && shear.berwald_residual > 1e-3;
    Ok((
        pass,
        format!("Berwald residual max {worst:.2e}; randers_shear residual {:.2e}", shear.berwald_residual),
    ))
}

fn transport_isometry() -> Outcome {
    let prof = ToleranceProfile::default();
    let mut worst: f64 = 0.0;
    for (k, name) in BERWALD_CATALOG.iter().enumerate() {
        let m = catalog(name);
        let b = berwald(&m);
        let drifts: Vec<Result<f64, String>> = (0..50u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(SEED, ((200 + k as u64) << 32) | i);
                // convex hull of chart points stays in the chart
                let control = [0, 1, 2, 3].map(|_| m.sample_point(&mut rng));
                let w = random_unit(&mut rng, 2);
                let r = parallel_transport(&b, &Bezier { control }, &w, &prof).map_err(err)?;
                Ok(r.drift_per_length)
            })
            .collect();
        for d in drifts {
            worst = worst.max(d?);
        }
    }
    Ok((worst < 1e-7, format!("max drift per unit length {worst:.2e} over 300 curves")))
}

/// `∂/∂s` at `s = 0` of the IVP geodesics through `(x0 + s j0, y0 + s w0)`:
/// central differences at `h0` and `2 h0` with one Richardson step.
fn variation_h(m: &MetricDefinition, x0: &[f64], y0: &[f64], j0: &[f64], w0: &[f64], times: &[f64], h0: f64) -> Result<Vec<Vec<f64>>, String> {
    let prof = ToleranceProfile::default().with_integrator_tol(1e-13);
    let t1 = times[times.len() - 1];
    let at = |s: f64| -> Result<Vec<Vec<f64>>, String> {
        let x: Vec<f64> = x0.iter().zip(j0).map(|(a, b)| a + s * b).collect();
        let y: Vec<f64> = y0.iter().zip(w0).map(|(a, b)| a + s * b).collect();
        let path = geodesic_ivp(m, &TangentVector::new(x, y), (0.0, t1), &prof).map_err(err)?;
        times.iter().map(|t| path.position(*t).map_err(err)).collect()
    };
    let diff = |h: f64| -> Result<Vec<Vec<f64>>, String> {
        let (p, q) = (at(h)?, at(-h)?);
        Ok(p.iter()
            .zip(&q)
            .map(|(a, b)| a.iter().zip(b).map(|(a, b)| (a - b) / (2.0 * h)).collect())
            .collect())
    };
    let (a, b) = (diff(2.0 * h0)?, diff(h0)?);
    Ok(a.iter()
        .zip(&b)
        .map(|(a, b)| a.iter().zip(b).map(|(a, b)| (4.0 * b - a) / 3.0).collect())
        .collect())
}

/// Halves the step until two successive estimates agree, since geodesics
/// that pass far out in a chart need smaller steps.
fn variation(m: &MetricDefinition, x0: &[f64], y0: &[f64], j0: &[f64], w0: &[f64], times: &[f64]) -> Result<Vec<Vec<f64>>, String> {
    let mut h = 1e-3;
    let mut prev = variation_h(m, x0, y0, j0, w0, times, h)?;
    loop {
        h /= 2.0;
        let next = variation_h(m, x0, y0, j0, w0, times, h)?;
        let gap = prev.iter().zip(&next).map(|(a, b)| sup(a, b)).fold(0.0, f64::max);
        if gap < 1e-6 || h < 3e-5 {
            return Ok(next);
        }
        prev = next;
    }
}

fn jacobi_oracle() -> Outcome {
    let prof = ToleranceProfile::default();
    let times: Vec<f64> = (1..=20).map(|k| 0.25 * k as f64).collect();
    let mut worst: f64 = 0.0;
    for (k, name) in BERWALD_CATALOG.iter().enumerate() {
        let m = catalog(name);
        let b = berwald(&m);
        let errs: Vec<Result<f64, String>> = (0..20u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(SEED, ((300 + k as u64) << 32) | i);
                let x0 = scaled(&m.sample_point(&mut rng), 0.5);
                let y0 = scaled(&unit(&m, &x0, &mut rng), rng.gen_range(0.3..1.0));
                let j0 = scaled(&random_unit(&mut rng, 2), 0.5);
                let w0 = scaled(&random_unit(&mut rng, 2), 0.5);
                // covariant initial derivative D_T J = dJ/dt + Γ(J, T)
                let con = chern_coefficients(&m, &TangentVector::new(x0.clone(), y0.clone())).map_err(err)?;
                let jp0: Vec<f64> = (0..2)
                    .map(|l| w0[l] + (0..2).flat_map(|a| (0..2).map(move |c| (a, c))).map(|(a, c)| con.chern[l][a][c] * j0[a] * y0[c]).sum::<f64>())
                    .collect();
                let path = geodesic_ivp(&m, &TangentVector::new(x0.clone(), y0.clone()), (0.0, 5.0), &prof).map_err(err)?;
                let sol = jacobi_ivp(&b, &path, &j0, &jp0, &prof).map_err(err)?;
                let oracle = variation(&m, &x0, &y0, &j0, &w0, &times)?;
                let mut e: f64 = 0.0;
                for (t, o) in times.iter().zip(&oracle) {
                    e = e.max(sup(&sol.field(*t).map_err(err)?, o));
                }
                Ok(e)
            })
            .collect();
        for e in errs {
            worst = worst.max(e?);
        }
    }
    Ok((worst < 1e-4, format!("max sup-norm gap {worst:.2e} over 120 fields")))
}

fn hyperbolic_growth() -> Outcome {
    let prof = ToleranceProfile::default();
    let m = catalog("poincare_disk");
    let b = berwald(&m);
    let mut rng = stream_rng(SEED, 500);
    let mut starts = vec![(vec![0.0, 0.0], vec![0.5, 0.0], vec![0.0, 0.5])];
    for _ in 0..5 {
        let x = scaled(&m.sample_point(&mut rng), 0.5);
        let y = unit(&m, &x, &mut rng);
        let e = normal(&m, &x, &y, &mut rng);
        starts.push((x, y, e));
    }
    let mut worst: f64 = 0.0;
    for (x, y, e) in &starts {
        let path = geodesic_ivp(&m, &TangentVector::new(x.clone(), y.clone()), (0.0, 10.0), &prof).map_err(err)?;
        let grow = jacobi_ivp(&b, &path, &[0.0, 0.0], e, &prof).map_err(err)?;
        let decay = jacobi_ivp(&b, &path, e, &scaled(e, -1.0), &prof).map_err(err)?;
        for k in 1..=200 {
            let t = 0.05 * k as f64;
            worst = worst.max((grow.norm(t).map_err(err)? / t.sinh() - 1.0).abs());
            worst = worst.max((decay.norm(t).map_err(err)? / (-t).exp() - 1.0).abs());
        }
    }
    let path = geodesic_ivp(&m, &TangentVector::new(vec![0.1, -0.2], vec![0.3, 0.35]), (0.0, 5.0), &prof).map_err(err)?;
    let speed = path.speed();
    let path = geodesic_ivp(&m, &TangentVector::new(vec![0.1, -0.2], scaled(&[0.3, 0.35], 1.0 / speed)), (0.0, 5.0), &prof)
        .map_err(err)?;
    let r = rauch_check(&b, &path, 200, 1.0, &prof, SEED).map_err(err)?;
    Ok((
        worst < 1e-5 && r.ok && r.violations == 0,
        format!("max relative error {worst:.2e}; Rauch violations {} of {}", r.violations, r.trials),
    ))
}

fn unit_at(m: &MetricDefinition, x: Vec<f64>, y: Vec<f64>) -> TangentVector {
    let f = m.eval_norm(&x, &y).expect("norm");
    TangentVector::new(x, scaled(&y, 1.0 / f))
}

fn ranks() -> Outcome {
    let prof = ToleranceProfile::default();
    let cases = [
        (catalog("poincare_disk"), vec![0.1, 0.2], vec![0.4, -0.3], 1),
        (euclid(2), vec![0.1, 0.2], vec![0.4, -0.3], 2),
        (catalog("minkowski_quartic"), vec![0.1, 0.2], vec![0.4, -0.3], 2),
        (hyperbolic_cylinder(), vec![0.1, 0.0, 0.3], vec![0.2, 0.5, 0.0], 2),
    ];
    let mut pass = true;
    let mut got = Vec::new();
    for (m, x, y, want) in cases {
        let r = rank_estimate(&berwald(&m), &unit_at(&m, x, y), prof.horizon, &prof).map_err(err)?;
        pass &= r.rank == want && r.stable;
        got.push(format!("{}{}", r.rank, if r.stable { "" } else { "?" }));
    }
    Ok((pass, format!("ranks [{}], expected [1, 2, 2, 2]", got.join(", "))))
}

fn angle_closed_form() -> Outcome {
    let prof = ToleranceProfile::default();
    let mut worst: f64 = 0.0;
    let mut reversible_max: f64 = 0.0;
    let mut overall_max: f64 = 0.0;
    let mut over = Vec::new();
    for (k, name) in ALL_CATALOG.iter().enumerate() {
        let m = catalog(name);
        let reversible = classify(&m, &prof, SEED).map_err(err)?.reversible;
        let reports: Vec<Result<(f64, f64), String>> = (0..100u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(SEED, ((700 + k as u64) << 32) | i);
                let p = m.sample_point(&mut rng);
                let (u, v) = (unit(&m, &p, &mut rng), unit(&m, &p, &mut rng));
                let r = angle(&m, &p, &u, &v, &prof).map_err(err)?;
                Ok((r.discrepancy, r.limit))
            })
            .collect();
        let mut count = 0;
        for r in reports {
            let (d, limit) = r?;
            worst = worst.max(d);
            overall_max = overall_max.max(limit);
            if reversible {
                reversible_max = reversible_max.max(limit);
            }
            if limit > 2.0 + 1e-9 {
                count += 1;
            }
        }
        if count > 0 {
            over.push(format!("{name}: {count}/100 above 2"));
        }
    }
    let pass = worst < 1e-5 && over.is_empty();
    Ok((
        pass,
        format!(
            "max |limit - F(v-u)| {worst:.2e}; max limit {overall_max:.4} (reversible metrics {reversible_max:.4}); {}",
            if over.is_empty() { "bound holds".to_string() } else { over.join(", ") }
        ),
    ))
}

fn ray(m: &MetricDefinition, p: &[f64], u: &[f64], t: f64, prof: &ToleranceProfile) -> Result<GeodesicPath, String> {
    geodesic_ivp(m, &TangentVector::new(p.to_vec(), u.to_vec()), (0.0, t), prof).map_err(err)
}

/// A point within `r` of `p` inside the chart.
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

fn convexity_and_chords() -> Outcome {
    let prof = ToleranceProfile::default();
    let grid: Vec<f64> = (0..9).map(|i| 0.25 * i as f64).collect();
    let chord_grid = [0.25, 0.5, 1.0, 1.5, 2.0];
    let mut metrics: Vec<MetricDefinition> = ["euclidean", "minkowski_quartic", "poincare_disk", "randers_flat", "locally_minkowski"]
        .iter()
        .map(|n| catalog(n))
        .collect();
    metrics.push(hyperbolic_cylinder());
    let mut failures = Vec::new();
    let mut worst_gap: f64 = f64::INFINITY;
    for (k, m) in metrics.iter().enumerate() {
        let b = berwald(m);
        let results: Vec<Result<(bool, bool, f64), String>> = (0..100u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(SEED, ((800 + k as u64) << 32) | i);
                let p = m.sample_point(&mut rng);
                let q = nearby(m, &p, 0.3, &mut rng);
                let (u, v) = (unit(m, &p, &mut rng), unit(m, &q, &mut rng));
                let a = ray(m, &p, &u, 2.0, &prof)?;
                let c = ray(m, &q, &v, 2.0, &prof)?;
                let conv = check_distance_convexity(&b, &a, &c, &grid, &prof).map_err(err)?;
                let w = unit(m, &p, &mut rng);
                let chord = check_chord_monotonicity(&b, &p, &u, &w, &chord_grid, &prof).map_err(err)?;
                Ok((conv.pass, chord.pass, conv.min_second_difference))
            })
            .collect();
        let (mut bad_conv, mut bad_chord) = (0, 0);
        for r in results {
            let (c, h, gap) = r?;
            bad_conv += usize::from(!c);
            bad_chord += usize::from(!h);
            worst_gap = worst_gap.min(gap);
        }
        if bad_conv + bad_chord > 0 {
            failures.push(format!("{}: convexity {bad_conv}, chord {bad_chord}", m.label()));
        }
    }
    let sphere = catalog("round_sphere_chart");
    let sb = berwald(&sphere);
    let a = ray(&sphere, &[0.0, 0.0], &[0.5, 0.0], 2.0, &prof)?;
    let c = ray(&sphere, &[0.0, 0.0], &[0.0, 0.5], 2.0, &prof)?;
    let s = check_distance_convexity(&sb, &a, &c, &grid, &prof).map_err(err)?;
    let witness = !s.pass && s.witness.is_some();
    Ok((
        failures.is_empty() && witness,
        format!(
            "600 pairs, {} ; min second difference {worst_gap:.2e}; sphere witness {:?} (min {:.3e})",
            if failures.is_empty() { "all pass".to_string() } else { failures.join("; ") },
            s.witness,
            s.min_second_difference
        ),
    ))
}

fn flat_strip() -> Outcome {
    let prof = ToleranceProfile::default();
    let m = hyperbolic_cylinder();
    let b = berwald(&m);
    let y = vec![0.3, 0.2, 0.0];
    let a = ray(&m, &[-0.1, 0.2, 0.0], &y, 2.0, &prof)?;
    let c = ray(&m, &[-0.1, 0.2, 1.0], &y, 2.0, &prof)?;
    let r = detect_flat_strip(&b, &a, &c, &prof).map_err(err)?;
    let geo = r.geodesic_residual.unwrap_or(f64::INFINITY);
    let flat = r.flatness_residual.unwrap_or(f64::INFINITY);
    let found = r.strip && geo < 1e-6 && flat < 1e-6;

    let h = catalog("poincare_disk");
    let hb = berwald(&h);
    let mut rejected = 0;
    for i in 0..5u64 {
        let mut rng = stream_rng(SEED, (900 << 32) | i);
        let p = h.sample_point(&mut rng);
        let q = nearby(&h, &p, 0.3, &mut rng);
        let u = unit(&h, &p, &mut rng);
        let v = unit(&h, &q, &mut rng);
        let r = detect_flat_strip(&hb, &ray(&h, &p, &u, 2.0, &prof)?, &ray(&h, &q, &v, 2.0, &prof)?, &prof).map_err(err)?;
        rejected += usize::from(!r.strip);
    }
    Ok((
        found && rejected == 5,
        format!("product strip {}, geodesic residual {geo:.2e}, flatness {flat:.2e}; hyperbolic pairs rejected {rejected}/5", r.strip),
    ))
}

fn uniformity() -> Outcome {
    let mut rng = stream_rng(SEED, 1000);
    let mut worst: f64 = 0.0;
    for name in ["euclidean", "poincare_disk", "round_sphere_chart"] {
        let m = catalog(name);
        let pts: Vec<Vec<f64>> = (0..4).map(|_| m.sample_point(&mut rng)).collect();
        let r = uniformity_constant(&m, &pts, 64).map_err(err)?;
        worst = worst.max((r.global - 1.0).abs());
    }
    let q = catalog("minkowski_quartic");
    let pts: Vec<Vec<f64>> = (0..4).map(|_| q.sample_point(&mut rng)).collect();
    let r = uniformity_constant(&q, &pts, 64).map_err(err)?;
    Ok((
        worst < 1e-10 && r.global > 1.0 && r.spread < 1e-6,
        format!("Riemannian |C0 - 1| {worst:.2e}; quartic C0 {:.10} spread {:.2e}", r.global, r.spread),
    ))
}

fn tits() -> Outcome {
    let prof = ToleranceProfile::default();
    let m = catalog("poincare_disk");
    let b = berwald(&m);
    let th: f64 = 2.8;
    let u = [0.5, 0.0];
    let v = [0.5 * th.cos(), 0.5 * th.sin()];
    let r = tits_distance_estimate(&b, &[0.0, 0.0], &u, &v, &[5.0, 10.0, 20.0], &[0.1, 0.05], &prof).map_err(err)?;
    let ratio = r.primary.ratios.last().copied().flatten();
    let pass = ratio.is_some_and(|x| (x - 2.0).abs() < 1e-2) && r.discrepancy < 1e-2;
    Ok((
        pass,
        format!("ratio at horizon 20 {ratio:?}; base-point discrepancy {:.2e}", r.discrepancy),
    ))
}

fn determinism() -> Outcome {
    let run = || -> Result<Vec<u8>, String> {
        let out = Command::new(env!("CARGO_BIN_EXE_finsler-forge"))
            .args(["--metric", "poincare_disk", "--seed", "7", "verify"])
            .output()
            .map_err(err)?;
        if !out.status.success() {
            return Err(format!("verify exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
        }
        Ok(out.stdout)
    };
    let (a, b) = (run()?, run()?);
    Ok((a == b && !a.is_empty(), format!("two runs, {} and {} bytes, identical {}", a.len(), b.len(), a == b)))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("Riemannian curvature reduction", curvature_reduction),
        ("Berwald classification", berwald_classification),
        ("transport isometry", transport_isometry),
        ("Jacobi variation oracle", jacobi_oracle),
        ("hyperbolic Jacobi growth and Rauch", hyperbolic_growth),
        ("rank", ranks),
        ("angle closed form", angle_closed_form),
        ("convexity and chord monotonicity", convexity_and_chords),
        ("flat strip", flat_strip),
        ("uniformity constant", uniformity),
        ("Tits estimate", tits),
        ("determinism", determinism),
    ];
    let mut unexpected = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        let start = Instant::now();
        let (pass, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let known = KNOWN_UNATTAINABLE.iter().find(|(k, _)| *k == n);
        let note = match (pass, known) {
            (false, Some((_, why))) => format!(" [known: {why}]"),
            _ => String::new(),
        };
        if !pass && known.is_none() {
            unexpected += 1;
        }
        println!(
            "criterion {n:>2} {}: {name}: {detail} ({:.1} s){note}",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if unexpected > 0 {
        println!("{unexpected} criteria failed");
        std::process::exit(1);
    }
}
