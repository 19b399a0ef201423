//! Finsler metrics on a single global chart: the built-in catalog, user
//! expressions and products, plus the pointwise validity checks.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::Serialize;

use crate::dsl::{parse_expr_with, EvalError, ParsedMetricExpr};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::profile::ToleranceProfile;
use crate::sampling::{sphere_directions, stream_rng};
use crate::tensor;

/// Where chart coordinates are valid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Chart {
    Whole,
    /// Open Euclidean ball around the origin.
    Ball {
        radius: f64,
    },
    /// `|x[coord]| < half_width`.
    Band {
        coord: usize,
        half_width: f64,
    },
}

const BALL_MARGIN: f64 = 1e-12;

impl Chart {
    fn contains(&self, x: &[f64]) -> bool {
        if x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            Chart::Whole => true,
            // points closer to the rim than rounding can resolve are outside
            Chart::Ball { radius } => {
                x.iter().map(|v| v * v).sum::<f64>() < radius * radius * (1.0 - BALL_MARGIN)
            }
            Chart::Band { coord, half_width } => x[*coord].abs() < *half_width,
        }
    }

    fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        match self {
            Chart::Whole => (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            Chart::Ball { radius } => loop {
                let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5) * radius).collect();
                if p.iter().map(|v| v * v).sum::<f64>() < 0.25 * radius * radius {
                    return p;
                }
            },
            Chart::Band { coord, half_width } => {
                let mut p: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                p[*coord] = rng.gen_range(-0.5..0.5) * half_width.min(2.0);
                p
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum MetricKind {
    Catalog {
        name: String,
        params: BTreeMap<String, f64>,
        expr: ParsedMetricExpr,
        chart: Chart,
    },
    Expression {
        expr: ParsedMetricExpr,
        chart: Chart,
    },
    Product(Arc<MetricDefinition>, Arc<MetricDefinition>),
}

#[derive(Debug, Clone)]
pub struct MetricDefinition {
    dim: usize,
    kind: MetricKind,
    label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TangentVector {
    pub base: Vec<f64>,
    pub components: Vec<f64>,
}

impl TangentVector {
    pub fn new(base: Vec<f64>, components: Vec<f64>) -> Self {
        TangentVector { base, components }
    }
}

/// Catalog parameters: numeric values plus the `F(y)` source for
/// `locally_minkowski`.
#[derive(Debug, Clone, Default)]
pub struct Params {
    pub values: BTreeMap<String, f64>,
    pub expr: Option<String>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.values.insert(key.to_string(), value);
        self
    }

    pub fn with_expr(mut self, source: &str) -> Self {
        self.expr = Some(source.to_string());
        self
    }
}

pub const CATALOG: [&str; 7] = [
    "euclidean",
    "minkowski_quartic",
    "poincare_disk",
    "round_sphere_chart",
    "randers_flat",
    "randers_shear",
    "locally_minkowski",
];

fn param_error(name: &str, reason: &str) -> Error {
    Error::Parameter {
        name: name.to_string(),
        reason: reason.to_string(),
    }
}

struct ParamReader<'a> {
    params: &'a Params,
    used: Vec<&'static str>,
}

impl<'a> ParamReader<'a> {
    fn new(params: &'a Params) -> Self {
        ParamReader {
            params,
            used: Vec::new(),
        }
    }

    fn get(&mut self, key: &'static str, default: f64) -> f64 {
        self.used.push(key);
        self.params.values.get(key).copied().unwrap_or(default)
    }

    fn dim(&mut self, key: &'static str, default: usize) -> Result<usize> {
        let v = self.get(key, default as f64);
        if v.fract() != 0.0 || !(1.0..=64.0).contains(&v) {
            return Err(param_error(key, "must be an integer in [1, 64]"));
        }
        Ok(v as usize)
    }

    fn finish(self, allow_extra: bool) -> Result<BTreeMap<String, f64>> {
        let mut rest = BTreeMap::new();
        for (k, v) in &self.params.values {
            if !v.is_finite() {
                return Err(param_error(k, "must be finite"));
            }
            if !self.used.contains(&k.as_str()) {
                if !allow_extra {
                    return Err(param_error(k, "unknown parameter"));
                }
                rest.insert(k.clone(), *v);
            }
        }
        Ok(rest)
    }
}

fn sum_of_squares(n: usize) -> String {
    (0..n)
        .map(|i| format!("y{i}^2"))
        .collect::<Vec<_>>()
        .join(" + ")
}

/// Builds a validated catalog metric.
pub fn catalog_metric(name: &str, params: &Params) -> Result<MetricDefinition> {
    let mut r = ParamReader::new(params);
    let no_params = BTreeMap::new();
    let (dim, source, bound, chart, label) = match name {
        "euclidean" => {
            let n = r.dim("n", 2)?;
            (
                n,
                format!("sqrt({})", sum_of_squares(n)),
                no_params.clone(),
                Chart::Whole,
                format!("euclidean(n={n})"),
            )
        }
        "minkowski_quartic" => {
            let lam = r.get("lambda", 1.0);
            if !(lam > 0.0) {
                return Err(param_error("lambda", "must be positive"));
            }
            (
                2,
                "sqrt(sqrt(y0^4 + y1^4) + lambda*(y0^2 + y1^2))".to_string(),
                BTreeMap::from([("lambda".to_string(), lam)]),
                Chart::Whole,
                format!("minkowski_quartic(lambda={lam})"),
            )
        }
        "poincare_disk" => (
            2,
            "2*sqrt(y0^2 + y1^2)/(1 - x0^2 - x1^2)".to_string(),
            no_params.clone(),
            Chart::Ball { radius: 1.0 },
            "poincare_disk".to_string(),
        ),
        "round_sphere_chart" => (
            2,
            "2*sqrt(y0^2 + y1^2)/(1 + x0^2 + x1^2)".to_string(),
            no_params.clone(),
            Chart::Whole,
            "round_sphere_chart".to_string(),
        ),
        "randers_flat" => {
            let b0 = r.get("b0", 0.3);
            let b1 = r.get("b1", 0.0);
            if b0 * b0 + b1 * b1 >= 1.0 {
                return Err(param_error("b0", "drift must satisfy |b| < 1"));
            }
            (
                2,
                "sqrt(y0^2 + y1^2) + b0*y0 + b1*y1".to_string(),
                BTreeMap::from([("b0".to_string(), b0), ("b1".to_string(), b1)]),
                Chart::Whole,
                format!("randers_flat(b0={b0},b1={b1})"),
            )
        }
        "randers_shear" => {
            let c = r.get("c", 0.3);
            if c == 0.0 {
                return Err(param_error("c", "must be nonzero"));
            }
            (
                2,
                "sqrt(y0^2 + y1^2) + c*x1*y0".to_string(),
                BTreeMap::from([("c".to_string(), c)]),
                Chart::Band {
                    coord: 1,
                    half_width: 0.9 / c.abs(),
                },
                format!("randers_shear(c={c})"),
            )
        }
        "locally_minkowski" => {
            let n = r.dim("n", 2)?;
            let source = params
                .expr
                .clone()
                .ok_or_else(|| param_error("expr", "locally_minkowski needs an F(y) expression"))?;
            let bound = r.finish(true)?;
            let expr = parse_expr_with(&source, n, &bound)?;
            if !expr.is_x_free() {
                return Err(param_error("expr", "must not depend on x"));
            }
            let m = MetricDefinition {
                dim: n,
                label: format!("locally_minkowski({source})"),
                kind: MetricKind::Catalog {
                    name: name.to_string(),
                    params: params.values.clone(),
                    expr,
                    chart: Chart::Whole,
                },
            };
            m.validate()?;
            return Ok(m);
        }
        other => return Err(Error::UnknownMetric(other.to_string())),
    };
    if params.expr.is_some() {
        return Err(param_error(
            "expr",
            "only locally_minkowski takes an expression",
        ));
    }
    r.finish(false)?;
    let expr = parse_expr_with(&source, dim, &bound)?;
    let m = MetricDefinition {
        dim,
        label,
        kind: MetricKind::Catalog {
            name: name.to_string(),
            params: params.values.clone(),
            expr,
            chart,
        },
    };
    m.validate()?;
    Ok(m)
}

/// A user expression `F(x, y)` on the whole chart.
pub fn expression_metric(
    source: &str,
    dim: usize,
    params: &BTreeMap<String, f64>,
) -> Result<MetricDefinition> {
    let expr = parse_expr_with(source, dim, params)?;
    let m = MetricDefinition {
        dim,
        label: format!("expr({source})"),
        kind: MetricKind::Expression {
            expr,
            chart: Chart::Whole,
        },
    };
    m.validate()?;
    Ok(m)
}

/// Same as [`expression_metric`] without the Minkowski-norm validation, for
/// probing degenerate expressions.
pub fn unchecked_expression_metric(source: &str, dim: usize) -> Result<MetricDefinition> {
    let expr = parse_expr_with(source, dim, &BTreeMap::new())?;
    Ok(MetricDefinition {
        dim,
        label: format!("expr({source})"),
        kind: MetricKind::Expression {
            expr,
            chart: Chart::Whole,
        },
    })
}

/// `F((xa, xb), (ya, yb)) = sqrt(Fa(xa, ya)² + Fb(xb, yb)²)`.
pub fn product_metric(a: &MetricDefinition, b: &MetricDefinition) -> MetricDefinition {
    MetricDefinition {
        dim: a.dim + b.dim,
        label: format!("{} x {}", a.label, b.label),
        kind: MetricKind::Product(Arc::new(a.clone()), Arc::new(b.clone())),
    }
}

impl MetricDefinition {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> &MetricKind {
        &self.kind
    }

    /// `½ F²`, the Lagrangian every tensor is derived from.
    pub fn half_square<T: Field>(&self, x: &[T], y: &[T]) -> Result<T, EvalError> {
        match &self.kind {
            MetricKind::Catalog { expr, .. } | MetricKind::Expression { expr, .. } => {
                for len in [x.len(), y.len()] {
                    if len != self.dim {
                        return Err(EvalError::Dimension {
                            expected: self.dim,
                            found: len,
                        });
                    }
                }
                expr.eval_half_square(x, y)
            }
            MetricKind::Product(a, b) => {
                let k = a.dim;
                let la = a.half_square(&x[..k], &y[..k])?;
                let lb = b.half_square(&x[k..], &y[k..])?;
                Ok(la.add(&lb))
            }
        }
    }

    /// `F(x, y)` without chart or dimension checks.
    pub fn eval_norm(&self, x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
        match &self.kind {
            MetricKind::Catalog { expr, .. } | MetricKind::Expression { expr, .. } => {
                expr.eval(x, y)
            }
            MetricKind::Product(a, b) => {
                let k = a.dim;
                let fa = a.eval_norm(&x[..k], &y[..k])?;
                let fb = b.eval_norm(&x[k..], &y[k..])?;
                Ok((fa * fa + fb * fb).sqrt())
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim {
            return false;
        }
        match &self.kind {
            MetricKind::Catalog { chart, .. } | MetricKind::Expression { chart, .. } => {
                chart.contains(x)
            }
            MetricKind::Product(a, b) => a.contains(&x[..a.dim]) && b.contains(&x[a.dim..]),
        }
    }

    /// A random base point well inside the chart.
    pub fn sample_point<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match &self.kind {
            MetricKind::Catalog { chart, .. } | MetricKind::Expression { chart, .. } => {
                chart.sample(self.dim, rng)
            }
            MetricKind::Product(a, b) => {
                let mut p = a.sample_point(rng);
                p.extend(b.sample_point(rng));
                p
            }
        }
    }

    /// No explicit base-point dependence anywhere in the definition.
    pub fn is_locally_minkowski(&self) -> bool {
        match &self.kind {
            MetricKind::Catalog { expr, .. } | MetricKind::Expression { expr, .. } => {
                expr.is_x_free()
            }
            MetricKind::Product(a, b) => a.is_locally_minkowski() && b.is_locally_minkowski(),
        }
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: x.len(),
            });
        }
        if !self.contains(x) {
            return Err(Error::ChartViolation { point: x.to_vec() });
        }
        Ok(())
    }

    /// Chart check plus the slit guard `F(x, y) > slit_epsilon`.
    pub fn check_slit(&self, x: &[f64], y: &[f64], slit_epsilon: f64) -> Result<f64> {
        self.check_point(x)?;
        if y.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: y.len(),
            });
        }
        if y.iter().all(|v| *v == 0.0) {
            return Err(Error::Slit { norm: 0.0 });
        }
        let f = self.eval_norm(x, y)?;
        if !(f > slit_epsilon) {
            return Err(Error::Slit { norm: f });
        }
        Ok(f)
    }

    fn validate(&self) -> Result<()> {
        let mut rng = stream_rng(0x5eed_0f_f1e1d, 0);
        for _ in 0..32 {
            let x = self.sample_point(&mut rng);
            let cert = certify_minkowski_norm(self, &x, 16)?;
            if !cert.ok {
                return Err(Error::NotMinkowski(format!(
                    "{}: Hessian of F²/2 degenerates at x = {:?}, y = {:?}",
                    self.label,
                    x,
                    cert.witness.unwrap_or_default()
                )));
            }
        }
        Ok(())
    }
}

/// `F(x, y)` with chart and dimension checks.
pub fn norm(m: &MetricDefinition, v: &TangentVector) -> Result<f64> {
    m.check_point(&v.base)?;
    if v.components.len() != m.dim() {
        return Err(Error::Dimension {
            expected: m.dim(),
            found: v.components.len(),
        });
    }
    Ok(m.eval_norm(&v.base, &v.components)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct MinkowskiCertificate {
    pub ok: bool,
    pub min_hessian_eigenvalue: f64,
    pub max_hessian_eigenvalue: f64,
    /// First direction whose Hessian failed the eigenvalue-ratio test.
    pub witness: Option<Vec<f64>>,
}

pub fn certify_minkowski_norm(
    m: &MetricDefinition,
    x: &[f64],
    samples: usize,
) -> Result<MinkowskiCertificate> {
    certify_with_ratio(m, x, samples, ToleranceProfile::default().hessian_ratio)
}

pub fn certify_with_ratio(
    m: &MetricDefinition,
    x: &[f64],
    samples: usize,
    ratio: f64,
) -> Result<MinkowskiCertificate> {
    m.check_point(x)?;
    let n = m.dim();
    let mut min_eig = f64::INFINITY;
    let mut max_eig: f64 = 0.0;
    let mut witness = None;
    for y in sphere_directions(n, samples.max(1)) {
        let g = tensor::fundamental_matrix(m, x, &y)?;
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(n, n, &g)).eigenvalues;
        let lo = eig.min();
        let hi = eig.max();
        if witness.is_none() && !(lo > ratio * hi.abs()) {
            witness = Some(y.clone());
        }
        min_eig = min_eig.min(lo);
        max_eig = max_eig.max(hi);
    }
    Ok(MinkowskiCertificate {
        ok: witness.is_none(),
        min_hessian_eigenvalue: min_eig,
        max_hessian_eigenvalue: max_eig,
        witness,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FlagCheck {
    pub flag: bool,
    pub residual: f64,
    pub samples: usize,
}

/// Sampled `max |F(x, −y) − F(x, y)| / F(x, y)`.
pub fn classify_reversible(
    m: &MetricDefinition,
    samples: usize,
    tol: f64,
    seed: u64,
) -> Result<FlagCheck> {
    let mut rng = stream_rng(seed, 1);
    let dirs = sphere_directions(m.dim(), samples.max(1));
    let mut residual: f64 = 0.0;
    for y in &dirs {
        let x = m.sample_point(&mut rng);
        let f = m.eval_norm(&x, y)?;
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let fr = m.eval_norm(&x, &neg)?;
        residual = residual.max((fr - f).abs() / f);
    }
    Ok(FlagCheck {
        flag: residual < tol,
        residual,
        samples: dirs.len(),
    })
}

/// Sampled sup of the Cartan tensor in a `g_y`-orthonormal frame at `F(y) = 1`.
pub fn classify_riemannian(
    m: &MetricDefinition,
    samples: usize,
    tol: f64,
    seed: u64,
) -> Result<FlagCheck> {
    let mut rng = stream_rng(seed, 2);
    let dirs = sphere_directions(m.dim(), samples.max(1));
    let mut residual: f64 = 0.0;
    for y in &dirs {
        let x = m.sample_point(&mut rng);
        residual = residual.max(tensor::cartan_frame_norm(m, &x, y)?);
    }
    Ok(FlagCheck {
        flag: residual < tol,
        residual,
        samples: dirs.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricClassification {
    pub reversible: bool,
    pub riemannian: bool,
    pub berwald: bool,
    pub reversible_residual: f64,
    pub riemannian_residual: f64,
    pub berwald_residual: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Runs the reversibility, Riemannian and Berwald classifiers.
pub fn classify(
    m: &MetricDefinition,
    profile: &ToleranceProfile,
    seed: u64,
) -> Result<MetricClassification> {
    let samples = profile.classifier_directions;
    let rev = classify_reversible(m, samples, profile.reversible_tol, seed)?;
    let riem = classify_riemannian(m, samples, profile.riemannian_tol, seed)?;
    let berwald = tensor::is_berwald(
        m,
        profile.classifier_base_points,
        (samples / profile.classifier_base_points).max(2),
        profile.berwald_tol,
        seed,
    )?;
    Ok(MetricClassification {
        reversible: rev.flag,
        riemannian: riem.flag,
        berwald: berwald.berwald || riem.flag,
        reversible_residual: rev.residual,
        riemannian_residual: riem.residual,
        berwald_residual: berwald.residual,
        samples,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quartic(lam: f64) -> Result<MetricDefinition> {
        catalog_metric("minkowski_quartic", &Params::new().with("lambda", lam))
    }

    #[test]
    fn catalog_norms() {
        let e = catalog_metric("euclidean", &Params::new()).unwrap();
        assert_eq!(
            norm(&e, &TangentVector::new(vec![0.3, 0.1], vec![3.0, 4.0])).unwrap(),
            5.0
        );
        let q = quartic(1.0).unwrap();
        let v = norm(&q, &TangentVector::new(vec![0.0, 0.0], vec![1.0, 0.0])).unwrap();
        assert!((v - 2f64.sqrt()).abs() < 1e-15);
        let p = catalog_metric("poincare_disk", &Params::new()).unwrap();
        assert_eq!(
            norm(&p, &TangentVector::new(vec![0.0, 0.0], vec![1.0, 0.0])).unwrap(),
            2.0
        );
    }

    #[test]
    fn parameter_errors() {
        assert!(matches!(quartic(0.0), Err(Error::Parameter { .. })));
        assert!(matches!(quartic(-1.0), Err(Error::Parameter { .. })));
        assert!(matches!(
            catalog_metric("nope", &Params::new()),
            Err(Error::UnknownMetric(_))
        ));
        assert!(matches!(
            catalog_metric("euclidean", &Params::new().with("m", 2.0)),
            Err(Error::Parameter { .. })
        ));
        assert!(catalog_metric("randers_flat", &Params::new().with("b0", 1.0)).is_err());
    }

    #[test]
    fn chart_violation() {
        let p = catalog_metric("poincare_disk", &Params::new()).unwrap();
        assert!(matches!(
            norm(&p, &TangentVector::new(vec![1.0, 0.0], vec![1.0, 0.0])),
            Err(Error::ChartViolation { .. })
        ));
    }

    #[test]
    fn products_add_squares() {
        let e1 = catalog_metric("euclidean", &Params::new().with("n", 1.0)).unwrap();
        let e2 = catalog_metric("euclidean", &Params::new()).unwrap();
        let prod = product_metric(&e1, &e1);
        let mut rng = stream_rng(3, 0);
        for _ in 0..20 {
            let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a = prod.eval_norm(&x, &y).unwrap();
            let b = e2.eval_norm(&x, &y).unwrap();
            assert!((a - b).abs() <= 1e-15 * b);
        }
    }

    #[test]
    fn certify_examples() {
        let e = catalog_metric("euclidean", &Params::new()).unwrap();
        let c = certify_minkowski_norm(&e, &[0.2, -0.4], 32).unwrap();
        assert!(c.ok);
        assert!((c.min_hessian_eigenvalue - 1.0).abs() < 1e-13);

        let lin = unchecked_expression_metric("y0 + y1", 2).unwrap();
        let c = certify_minkowski_norm(&lin, &[0.0, 0.0], 32).unwrap();
        assert!(!c.ok);
        assert!(c.witness.is_some());
        assert!(expression_metric("y0 + y1", 2, &BTreeMap::new()).is_err());
    }

    #[test]
    fn reversibility() {
        let e = catalog_metric("euclidean", &Params::new()).unwrap();
        assert!(classify_reversible(&e, 64, 1e-12, 0).unwrap().flag);
        assert!(
            classify_reversible(&quartic(1.0).unwrap(), 64, 1e-12, 0)
                .unwrap()
                .flag
        );
        for b in [0.05, 0.3, -0.7, 0.95] {
            let r = catalog_metric("randers_flat", &Params::new().with("b0", b)).unwrap();
            assert!(!classify_reversible(&r, 64, 1e-12, 0).unwrap().flag);
        }
    }

    #[test]
    fn riemannian_flag() {
        let p = catalog_metric("poincare_disk", &Params::new()).unwrap();
        assert!(classify_riemannian(&p, 32, 1e-8, 0).unwrap().flag);
        let e = catalog_metric("euclidean", &Params::new()).unwrap();
        assert!(classify_riemannian(&e, 32, 1e-8, 0).unwrap().flag);
        assert!(
            !classify_riemannian(&quartic(1.0).unwrap(), 32, 1e-8, 0)
                .unwrap()
                .flag
        );
    }

    #[test]
    fn locally_minkowski_rejects_x() {
        let p = Params::new().with_expr("sqrt(y0^2 + y1^2) + 0.1*x0*y0");
        assert!(catalog_metric("locally_minkowski", &p).is_err());
        let p = Params::new()
            .with("lam", 2.0)
            .with_expr("sqrt(sqrt(y0^4 + y1^4) + lam*(y0^2 + y1^2))");
        let m = catalog_metric("locally_minkowski", &p).unwrap();
        assert!(m.is_locally_minkowski());
    }
}
