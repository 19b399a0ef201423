//! Scalar expressions `F(x, y)` over chart coordinates.
//!
//! Grammar (precedence climbing, loosest first):
//!
//! ```text
//! expr   := expr ('+' | '-') expr | expr ('*' | '/') expr | '-' expr | power
//! power  := atom '^' expr          (right-associative, binds tighter than unary '-')
//! atom   := number | x<i> | y<i> | param | sqrt(expr) | abs(expr) | '(' expr ')'
//! ```
//!
//! Exponents must fold to a finite constant at parse time. Parameters are
//! bound to values when parsing; the tree never refers back to the map.

mod lexer;
mod parser;

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::field::{DomainFault, Field};
use crate::sampling::{random_unit, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    fn join(self, other: Span) -> Span {
        Span::new(self.start.min(other.start), self.end.max(other.end))
    }
}

#[derive(Debug, Clone)]
pub struct ExprNode {
    pub kind: NodeKind,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub enum NodeKind {
    Const(f64),
    Param { name: String, value: f64 },
    X(usize),
    Y(usize),
    Add(Box<ExprNode>, Box<ExprNode>),
    Sub(Box<ExprNode>, Box<ExprNode>),
    Mul(Box<ExprNode>, Box<ExprNode>),
    Div(Box<ExprNode>, Box<ExprNode>),
    Pow(Box<ExprNode>, f64),
    Sqrt(Box<ExprNode>),
    Abs(Box<ExprNode>),
    Neg(Box<ExprNode>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("unrecognised input `{lexeme}`")]
    Lexical { lexeme: String },
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("unexpected `{lexeme}`")]
    UnexpectedToken { lexeme: String },
    #[error("unknown identifier `{name}`")]
    UnknownIdentifier { name: String },
    #[error("`{name}` is out of range for dimension {dim}")]
    IndexOutOfRange { name: String, dim: usize },
    #[error("`{function}` takes exactly one argument, found {found}")]
    Arity { function: String, found: usize },
    #[error("exponent must be a finite constant")]
    NonConstantExponent,
    #[error("invalid parameter `{name}`")]
    InvalidParameter { name: String },
    #[error("dimension must be at least 1")]
    ZeroDimension,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parse error at byte {offset}: {kind}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("domain error in `{start}..{end}`: {fault}", start = span.start, end = span.end)]
    Domain { span: Span, fault: DomainFault },
    #[error("expected {expected} coordinates, found {found}")]
    Dimension { expected: usize, found: usize },
}

impl ExprNode {
    /// Value of a subtree that does not mention `x` or `y`.
    pub fn constant_value(&self) -> Option<f64> {
        use NodeKind::*;
        Some(match &self.kind {
            Const(v) => *v,
            Param { value, .. } => *value,
            X(_) | Y(_) => return None,
            Add(a, b) => a.constant_value()? + b.constant_value()?,
            Sub(a, b) => a.constant_value()? - b.constant_value()?,
            Mul(a, b) => a.constant_value()? * b.constant_value()?,
            Div(a, b) => a.constant_value()? / b.constant_value()?,
            Pow(a, e) => a.constant_value()?.powf(*e),
            Sqrt(a) => a.constant_value()?.sqrt(),
            Abs(a) => a.constant_value()?.abs(),
            Neg(a) => -a.constant_value()?,
        })
    }

    /// Structural equality, ignoring source spans.
    pub fn same_structure(&self, other: &ExprNode) -> bool {
        use NodeKind::*;
        match (&self.kind, &other.kind) {
            (Const(a), Const(b)) => a == b,
            (
                Param {
                    name: n1,
                    value: v1,
                },
                Param {
                    name: n2,
                    value: v2,
                },
            ) => n1 == n2 && v1 == v2,
            (X(i), X(j)) | (Y(i), Y(j)) => i == j,
            (Add(a1, b1), Add(a2, b2))
            | (Sub(a1, b1), Sub(a2, b2))
            | (Mul(a1, b1), Mul(a2, b2))
            | (Div(a1, b1), Div(a2, b2)) => a1.same_structure(a2) && b1.same_structure(b2),
            (Pow(a1, e1), Pow(a2, e2)) => e1 == e2 && a1.same_structure(a2),
            (Sqrt(a1), Sqrt(a2)) | (Abs(a1), Abs(a2)) | (Neg(a1), Neg(a2)) => a1.same_structure(a2),
            _ => false,
        }
    }

    pub fn eval<T: Field>(&self, x: &[T], y: &[T]) -> Result<T, EvalError> {
        use NodeKind::*;
        let fault = |fault| EvalError::Domain {
            span: self.span,
            fault,
        };
        Ok(match &self.kind {
            Const(v) | Param { value: v, .. } => y[0].lift(*v),
            X(i) => x[*i].clone(),
            Y(i) => y[*i].clone(),
            Add(a, b) => a.eval(x, y)?.add(&b.eval(x, y)?),
            Sub(a, b) => a.eval(x, y)?.sub(&b.eval(x, y)?),
            Mul(a, b) => a.eval(x, y)?.mul(&b.eval(x, y)?),
            Div(a, b) => a.eval(x, y)?.div(&b.eval(x, y)?).map_err(fault)?,
            Pow(a, e) => a.eval(x, y)?.pow(*e).map_err(fault)?,
            Sqrt(a) => a.eval(x, y)?.sqrt().map_err(fault)?,
            Abs(a) => a.eval(x, y)?.abs().map_err(fault)?,
            Neg(a) => a.eval(x, y)?.neg(),
        })
    }

    /// The square of this node, with `sqrt(e)² = e`, `|e|² = e²` and the
    /// square pushed through products and quotients, so that ½F² of a
    /// Riemannian expression stays smooth at `y = 0`.
    pub fn eval_square<T: Field>(&self, x: &[T], y: &[T]) -> Result<T, EvalError> {
        use NodeKind::*;
        let fault = |fault| EvalError::Domain {
            span: self.span,
            fault,
        };
        match &self.kind {
            Sqrt(a) => {
                let v = a.eval(x, y)?;
                if v.value() < 0.0 {
                    return Err(fault(DomainFault::SqrtNegative));
                }
                Ok(v)
            }
            Abs(a) | Neg(a) => a.eval_square(x, y),
            Mul(a, b) => Ok(a.eval_square(x, y)?.mul(&b.eval_square(x, y)?)),
            Div(a, b) => a.eval_square(x, y)?.div(&b.eval_square(x, y)?).map_err(fault),
            _ => {
                let v = self.eval(x, y)?;
                Ok(v.mul(&v))
            }
        }
    }

    fn mentions_x(&self) -> bool {
        use NodeKind::*;
        match &self.kind {
            X(_) => true,
            Const(_) | Param { .. } | Y(_) => false,
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => a.mentions_x() || b.mentions_x(),
            Pow(a, _) | Sqrt(a) | Abs(a) | Neg(a) => a.mentions_x(),
        }
    }
}

/// Fully parenthesised form; re-parsing it gives a structurally identical tree.
impl fmt::Display for ExprNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use NodeKind::*;
        match &self.kind {
            Const(v) => write!(f, "{v}"),
            Param { name, .. } => write!(f, "{name}"),
            X(i) => write!(f, "x{i}"),
            Y(i) => write!(f, "y{i}"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "({a} * {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Pow(a, e) => write!(f, "({a})^({e})"),
            Sqrt(a) => write!(f, "sqrt({a})"),
            Abs(a) => write!(f, "abs({a})"),
            Neg(a) => write!(f, "(-{a})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParsedMetricExpr {
    pub root: ExprNode,
    pub dim: usize,
    pub params: BTreeMap<String, f64>,
    pub source: String,
}

fn valid_param_name(name: &str) -> bool {
    let mut chars = name.chars();
    let head_ok = chars
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_');
    let is_coordinate = (name.starts_with('x') || name.starts_with('y'))
        && name.len() > 1
        && name[1..].bytes().all(|b| b.is_ascii_digit());
    head_ok
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !is_coordinate
        && name != "sqrt"
        && name != "abs"
}

pub fn parse_expr(source: &str, dim: usize) -> Result<ParsedMetricExpr, ParseError> {
    parse_expr_with(source, dim, &BTreeMap::new())
}

pub fn parse_expr_with(
    source: &str,
    dim: usize,
    params: &BTreeMap<String, f64>,
) -> Result<ParsedMetricExpr, ParseError> {
    if dim == 0 {
        return Err(ParseError {
            offset: 0,
            kind: ParseErrorKind::ZeroDimension,
        });
    }
    if let Some((name, _)) = params
        .iter()
        .find(|(k, v)| !valid_param_name(k) || !v.is_finite())
    {
        return Err(ParseError {
            offset: 0,
            kind: ParseErrorKind::InvalidParameter { name: name.clone() },
        });
    }
    let root = parser::Parser::new(source, dim, params)?.parse()?;
    Ok(ParsedMetricExpr {
        root,
        dim,
        params: params.clone(),
        source: source.to_string(),
    })
}

impl ParsedMetricExpr {
    pub fn eval<T: Field>(&self, x: &[T], y: &[T]) -> Result<T, EvalError> {
        for len in [x.len(), y.len()] {
            if len != self.dim {
                return Err(EvalError::Dimension {
                    expected: self.dim,
                    found: len,
                });
            }
        }
        self.root.eval(x, y)
    }

    /// `½ F²` through [`ExprNode::eval_square`].
    pub fn eval_half_square<T: Field>(&self, x: &[T], y: &[T]) -> Result<T, EvalError> {
        let f2 = self.root.eval_square(x, y)?;
        Ok(f2.mul(&f2.lift(0.5)))
    }

    /// True when the expression has no explicit base-point dependence.
    pub fn is_x_free(&self) -> bool {
        !self.root.mentions_x()
    }
}

pub fn eval_expr(expr: &ParsedMetricExpr, x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    expr.eval(x, y)
}

#[derive(Debug, Clone, Serialize)]
pub struct HomogeneityReport {
    pub positively_homogeneous: bool,
    pub absolutely_homogeneous: bool,
    pub positive_residual: f64,
    pub absolute_residual: f64,
    pub worst_residual: f64,
}

/// Samples `(x, y, λ)` and measures `|F(x, λy) − |λ| F(x, y)|` relative to
/// `max(F(x, y), F(x, −y))`, separately for `λ ∈ (0, 10]` and `λ ∈ [−10, 0)`.
pub fn check_homogeneity(
    expr: &ParsedMetricExpr,
    samples: usize,
    tol: f64,
    seed: u64,
) -> Result<HomogeneityReport, EvalError> {
    let n = expr.dim;
    let mut rng = stream_rng(seed, 0);
    let mut pos: f64 = 0.0;
    let mut abs: f64 = 0.0;
    for _ in 0..samples.max(1) {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let r: f64 = rng.gen_range(0.1..2.0);
        let y: Vec<f64> = random_unit(&mut rng, n).iter().map(|v| v * r).collect();
        let lam: f64 = 10.0 * (1.0 - rng.gen::<f64>());
        let f = expr.eval(&x, &y)?;
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        // F(y) can cancel to nearly zero on degenerate norms; F(−y) keeps
        // the scale of the rounding error
        let scale = f
            .abs()
            .max(expr.eval(&x, &neg)?.abs())
            .max(f64::MIN_POSITIVE);
        let ys: Vec<f64> = y.iter().map(|v| v * lam).collect();
        pos = pos.max((expr.eval(&x, &ys)? - lam * f).abs() / scale);
        let yn: Vec<f64> = y.iter().map(|v| -v * lam).collect();
        abs = abs.max((expr.eval(&x, &yn)? - lam * f).abs() / scale);
    }
    Ok(HomogeneityReport {
        positively_homogeneous: pos < tol,
        absolutely_homogeneous: pos < tol && abs < tol,
        positive_residual: pos,
        absolute_residual: abs,
        worst_residual: pos.max(abs),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quartic_params() -> BTreeMap<String, f64> {
        BTreeMap::from([("lam".to_string(), 1.0)])
    }

    #[test]
    fn euclidean_norm_tree() {
        let e = parse_expr("sqrt(y0^2 + y1^2)", 2).unwrap();
        match &e.root.kind {
            NodeKind::Sqrt(inner) => assert!(matches!(inner.kind, NodeKind::Add(_, _))),
            other => panic!("unexpected root {other:?}"),
        }
        assert_eq!(eval_expr(&e, &[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
    }

    #[test]
    fn quartic_example_evaluates() {
        let e = parse_expr_with(
            "sqrt(sqrt(y0^4 + y1^4) + lam*(y0^2 + y1^2))",
            2,
            &quartic_params(),
        )
        .unwrap();
        let v = eval_expr(&e, &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((v - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn truncated_input_points_at_end() {
        let err = parse_expr("sqrt(y0^2 +", 2).unwrap_err();
        assert_eq!(err.offset, 11);
        assert_eq!(err.kind, ParseErrorKind::UnexpectedEnd);
    }

    #[test]
    fn error_locations() {
        let err = parse_expr("y0 + $", 2).unwrap_err();
        assert_eq!(err.offset, 5);
        assert!(matches!(err.kind, ParseErrorKind::Lexical { .. }));

        let err = parse_expr("y0 + z", 2).unwrap_err();
        assert_eq!(err.offset, 5);
        assert!(matches!(err.kind, ParseErrorKind::UnknownIdentifier { .. }));

        let err = parse_expr("y0 + y2", 2).unwrap_err();
        assert_eq!(err.offset, 5);
        assert!(matches!(err.kind, ParseErrorKind::IndexOutOfRange { .. }));

        let err = parse_expr("sqrt(y0, y1)", 2).unwrap_err();
        assert_eq!(err.offset, 0);
        assert_eq!(
            err.kind,
            ParseErrorKind::Arity {
                function: "sqrt".into(),
                found: 2
            }
        );

        let err = parse_expr("y0^y1", 2).unwrap_err();
        assert_eq!(err.offset, 3);
        assert_eq!(err.kind, ParseErrorKind::NonConstantExponent);

        let err = parse_expr("y0 y1", 2).unwrap_err();
        assert_eq!(err.offset, 3);
    }

    #[test]
    fn precedence_and_associativity() {
        let e = parse_expr("-y0^2", 1).unwrap();
        assert_eq!(eval_expr(&e, &[0.0], &[3.0]).unwrap(), -9.0);
        let e = parse_expr("2^3^2", 1).unwrap();
        assert_eq!(eval_expr(&e, &[0.0], &[1.0]).unwrap(), 512.0);
        let e = parse_expr("1 - 2 - 3", 1).unwrap();
        assert_eq!(eval_expr(&e, &[0.0], &[1.0]).unwrap(), -4.0);
        let e = parse_expr("y0^-1*2", 1).unwrap();
        assert_eq!(eval_expr(&e, &[0.0], &[4.0]).unwrap(), 0.5);
        let e = parse_expr("y0^(1/2)", 1).unwrap();
        assert_eq!(eval_expr(&e, &[0.0], &[4.0]).unwrap(), 2.0);
    }

    #[test]
    fn domain_errors_carry_location() {
        let e = parse_expr("y0 + sqrt(y1 - 1)", 2).unwrap();
        match eval_expr(&e, &[0.0, 0.0], &[1.0, 0.0]).unwrap_err() {
            EvalError::Domain { span, fault } => {
                assert_eq!(span, Span::new(5, 17));
                assert_eq!(fault, DomainFault::SqrtNegative);
            }
            other => panic!("{other:?}"),
        }
        let e = parse_expr("1 / y0", 1).unwrap();
        assert!(eval_expr(&e, &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn homogeneity_flags() {
        let e = parse_expr("sqrt(y0^2 + y1^2)", 2).unwrap();
        let r = check_homogeneity(&e, 64, 1e-12, 1).unwrap();
        assert!(r.positively_homogeneous && r.absolutely_homogeneous);

        let q = parse_expr_with(
            "sqrt(sqrt(y0^4 + y1^4) + lam*(y0^2 + y1^2))",
            2,
            &quartic_params(),
        )
        .unwrap();
        let r = check_homogeneity(&q, 64, 1e-12, 1).unwrap();
        assert!(r.positively_homogeneous && r.absolutely_homogeneous);

        let randers = parse_expr("y0 + sqrt(y0^2+y1^2)", 2).unwrap();
        let r = check_homogeneity(&randers, 64, 1e-12, 1).unwrap();
        assert!(r.positively_homogeneous);
        assert!(!r.absolutely_homogeneous);
        // direct check of the sign flip
        let f = |y: [f64; 2]| eval_expr(&randers, &[0.0, 0.0], &y).unwrap();
        assert!((f([1.0, 0.0]) - 2.0).abs() < 1e-15);
        assert!(f([-1.0, 0.0]).abs() < 1e-15);
    }

    #[test]
    fn parameter_names_are_validated() {
        let bad = BTreeMap::from([("x0".to_string(), 1.0)]);
        assert!(parse_expr_with("y0", 1, &bad).is_err());
        let bad = BTreeMap::from([("lam".to_string(), f64::NAN)]);
        assert!(parse_expr_with("y0", 1, &bad).is_err());
    }
}
