use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use super::par_map;
use crate::error::{Error, Result};
use crate::metric::MetricDefinition;
use crate::sampling::sphere_directions;
use crate::tensor::fundamental_matrix;

const MIN_DIRECTIONS: usize = 64;
const REFINE_START: usize = 4;

#[derive(Debug, Clone, Serialize)]
pub struct UniformityReport {
    pub base_points: Vec<Vec<f64>>,
    /// `C₀(p)` for each base point.
    pub per_point: Vec<f64>,
    pub global: f64,
    /// `max − min` of `per_point`.
    pub spread: f64,
    /// Directions per base point; every ordered pair is compared.
    pub directions: usize,
    /// Directions skipped because `g` could not be evaluated there.
    pub skipped: usize,
}

/// `√λ_max(g_v⁻¹ g_w)`: the smallest `c` with `‖·‖_w ≤ c ‖·‖_v`.
fn ratio(gw: &DMatrix<f64>, gv: &DMatrix<f64>) -> Result<f64> {
    let l = gv.clone().cholesky().ok_or(Error::Singular)?;
    let li = l.l().try_inverse().ok_or(Error::Singular)?;
    let s = &li * gw * li.transpose();
    let s = 0.5 * (&s + s.transpose());
    let top = SymmetricEigen::new(s).eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(top.max(0.0).sqrt())
}

fn g_at(m: &MetricDefinition, p: &[f64], d: &[f64]) -> Result<DMatrix<f64>> {
    let n = m.dim();
    Ok(DMatrix::from_row_slice(n, n, &fundamental_matrix(m, p, d)?))
}

fn normalize(v: &mut [f64]) {
    let r = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.iter_mut().for_each(|a| *a /= r);
}

/// Coordinate pattern search on the pair of directions, step halving
/// down to `1e−9`.
fn refine(m: &MetricDefinition, p: &[f64], mut w: Vec<f64>, mut v: Vec<f64>, mut best: f64) -> f64 {
    let n = m.dim();
    let eval = |w: &[f64], v: &[f64]| -> Option<f64> { ratio(&g_at(m, p, w).ok()?, &g_at(m, p, v).ok()?).ok() };
    let mut h = 0.1;
    while h > 1e-9 {
        let mut improved = false;
        for k in 0..2 * n {
            for sign in [1.0, -1.0] {
                let (mut w2, mut v2) = (w.clone(), v.clone());
                if k < n {
                    w2[k] += sign * h;
                    normalize(&mut w2);
                } else {
                    v2[k - n] += sign * h;
                    normalize(&mut v2);
                }
                if let Some(r) = eval(&w2, &v2) {
                    if r > best {
                        best = r;
                        w = w2;
                        v = v2;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    best
}

/// `C₀(p)` by comparing `g` over all ordered pairs of sampled directions,
/// followed by local refinement of the best pairs.
fn point_constant(m: &MetricDefinition, p: &[f64], dirs: &[Vec<f64>]) -> Result<(f64, usize)> {
    m.check_point(p)?;
    let mut gs = Vec::new();
    let mut skipped = 0;
    for d in dirs {
        match g_at(m, p, d) {
            Ok(g) => gs.push((d.clone(), g)),
            Err(Error::Eval(_)) | Err(Error::Slit { .. }) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if gs.len() < 2 {
        return Err(Error::Precondition("fewer than two usable directions".into()));
    }
    let mut scored = Vec::new();
    for (i, (_, gw)) in gs.iter().enumerate() {
        for (j, (_, gv)) in gs.iter().enumerate() {
            scored.push((ratio(gw, gv)?, i, j));
        }
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut best = scored[0].0;
    for &(r, i, j) in scored.iter().take(REFINE_START) {
        best = best.max(refine(m, p, gs[i].0.clone(), gs[j].0.clone(), r));
    }
    Ok((best, skipped))
}

/// Uniformity constant at each base point, its maximum and its spread.
pub fn uniformity_constant(m: &MetricDefinition, base_points: &[Vec<f64>], pair_samples: usize) -> Result<UniformityReport> {
    if pair_samples < MIN_DIRECTIONS {
        return Err(Error::InvalidArgument(format!("need at least {MIN_DIRECTIONS} directions per point")));
    }
    if base_points.is_empty() {
        return Err(Error::InvalidArgument("no base points".into()));
    }
    let dirs = sphere_directions(m.dim(), pair_samples);
    let results = par_map(base_points, |p| point_constant(m, p, &dirs));
    let mut per_point = Vec::new();
    let mut skipped = 0;
    for r in results {
        let (c, s) = r?;
        per_point.push(c);
        skipped += s;
    }
    let global = per_point.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let low = per_point.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(UniformityReport {
        base_points: base_points.to_vec(),
        per_point,
        global,
        spread: global - low,
        directions: dirs.len(),
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{catalog_metric, product_metric, Params};

    fn points() -> Vec<Vec<f64>> {
        vec![vec![0.0, 0.0], vec![0.3, -0.2], vec![-0.45, 0.1]]
    }

    /// Fundamental matrix of the quartic norm by central differences of
    /// `F²/2`, and a brute-force angle grid.
    fn quartic_oracle(lam: f64) -> f64 {
        let l = |a: f64, b: f64| 0.5 * ((a.powi(4) + b.powi(4)).sqrt() + lam * (a * a + b * b));
        let h = 1e-4;
        let g = |th: f64| {
            let (a, b) = (th.cos(), th.sin());
            let gaa = (l(a + h, b) - 2.0 * l(a, b) + l(a - h, b)) / (h * h);
            let gbb = (l(a, b + h) - 2.0 * l(a, b) + l(a, b - h)) / (h * h);
            let gab = (l(a + h, b + h) - l(a + h, b - h) - l(a - h, b + h) + l(a - h, b - h)) / (4.0 * h * h);
            [gaa, gab, gbb]
        };
        let k = 720;
        let gs: Vec<[f64; 3]> = (0..k).map(|i| g(std::f64::consts::TAU * i as f64 / k as f64)).collect();
        let mut best: f64 = 0.0;
        for w in &gs {
            for v in &gs {
                // generalized eigenvalues of (w, v) for 2×2 symmetric matrices
                let a = v[0] * v[2] - v[1] * v[1];
                let b = -(w[0] * v[2] + w[2] * v[0] - 2.0 * w[1] * v[1]);
                let c = w[0] * w[2] - w[1] * w[1];
                let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
                best = best.max((-b + disc) / (2.0 * a));
            }
        }
        best.sqrt()
    }

    #[test]
    fn riemannian_constant_is_one() {
        for name in ["euclidean", "poincare_disk", "round_sphere_chart"] {
            let m = catalog_metric(name, &Params::new()).unwrap();
            let r = uniformity_constant(&m, &points(), 64).unwrap();
            assert!((r.global - 1.0).abs() < 1e-10 && r.spread < 1e-10, "{name} {r:?}");
        }
    }

    #[test]
    fn quartic_constant() {
        let m = catalog_metric("minkowski_quartic", &Params::new()).unwrap();
        let r = uniformity_constant(&m, &points(), 64).unwrap();
        assert!(r.global > 1.0 && r.spread < 1e-12, "{r:?}");
        let oracle = quartic_oracle(1.0);
        assert!((r.global - oracle).abs() < 1e-5, "{} vs {oracle}", r.global);

        let h = catalog_metric("poincare_disk", &Params::new()).unwrap();
        let p = product_metric(&h, &m);
        let pts = vec![vec![0.0, 0.0, 0.0, 0.0], vec![0.3, -0.2, 1.0, 2.0], vec![-0.1, 0.5, -3.0, 0.5]];
        let r = uniformity_constant(&p, &pts, 256).unwrap();
        assert!((r.global - oracle).abs() < 1e-5 && r.spread < 1e-6, "{r:?}");
    }
}
