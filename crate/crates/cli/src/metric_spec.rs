//! Metric loading from a JSON file, inline JSON, or the inline form
//! `name(key=value, ...) * name(...)`.

use std::collections::BTreeMap;
use std::path::Path;

use finsler_core::metric::expression_metric;
use finsler_core::{catalog_metric, product_metric, MetricDefinition, Params};
use serde::Deserialize;

use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricFile {
    pub kind: String,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub expr: Option<String>,
    #[serde(default)]
    pub factors: Vec<MetricFile>,
}

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

pub fn build(spec: &MetricFile) -> CliResult<MetricDefinition> {
    match spec.kind.as_str() {
        "catalog" => {
            let name = spec.name.as_deref().ok_or_else(|| input("catalog metric needs `name`"))?;
            if spec.dim.is_some() || !spec.factors.is_empty() {
                return Err(input("catalog metric takes only `name`, `params` and `expr`"));
            }
            let mut params = Params::new();
            for (k, v) in &spec.params {
                params = params.with(k, *v);
            }
            if let Some(e) = &spec.expr {
                params = params.with_expr(e);
            }
            Ok(catalog_metric(name, &params)?)
        }
        "expr" => {
            let source = spec.expr.as_deref().ok_or_else(|| input("expression metric needs `expr`"))?;
            let dim = spec.dim.ok_or_else(|| input("expression metric needs `dim`"))?;
            if spec.name.is_some() || !spec.factors.is_empty() {
                return Err(input("expression metric takes only `dim`, `expr` and `params`"));
            }
            Ok(expression_metric(source, dim, &spec.params)?)
        }
        "product" => {
            if spec.factors.len() < 2 {
                return Err(input("product metric needs two or more `factors`"));
            }
            if spec.name.is_some() || spec.expr.is_some() || spec.dim.is_some() || !spec.params.is_empty() {
                return Err(input("product metric takes only `factors`"));
            }
            let mut acc = build(&spec.factors[0])?;
            for f in &spec.factors[1..] {
                acc = product_metric(&acc, &build(f)?);
            }
            Ok(acc)
        }
        other => Err(input(format!("unknown metric kind `{other}`"))),
    }
}

/// Splits on `sep` outside parentheses and double quotes.
fn split_top(s: &str, sep: char) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut quoted = false;
    let mut cur = String::new();
    for c in s.chars() {
        match c {
            '"' => quoted = !quoted,
            '(' if !quoted => depth += 1,
            ')' if !quoted => depth -= 1,
            _ => {}
        }
        if c == sep && depth == 0 && !quoted {
            out.push(std::mem::take(&mut cur));
        } else {
            cur.push(c);
        }
    }
    out.push(cur);
    out
}

fn parse_factor(s: &str) -> CliResult<MetricFile> {
    let s = s.trim();
    let (name, args) = match s.find('(') {
        Some(i) => {
            let inner = s[i + 1..]
                .strip_suffix(')')
                .ok_or_else(|| input(format!("unbalanced parentheses in `{s}`")))?;
            (s[..i].trim(), inner)
        }
        None => (s, ""),
    };
    if name.is_empty() {
        return Err(input("empty metric name"));
    }
    let mut spec = MetricFile {
        kind: "catalog".into(),
        name: Some(name.to_string()),
        params: BTreeMap::new(),
        dim: None,
        expr: None,
        factors: Vec::new(),
    };
    for arg in split_top(args, ',') {
        let arg = arg.trim();
        if arg.is_empty() {
            continue;
        }
        let (k, v) = arg.split_once('=').ok_or_else(|| input(format!("expected key=value, got `{arg}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if k == "expr" {
            let e = v
                .strip_prefix('"')
                .and_then(|v| v.strip_suffix('"'))
                .ok_or_else(|| input("expr must be double-quoted"))?;
            spec.expr = Some(e.to_string());
        } else {
            let x: f64 = v.parse().map_err(|_| input(format!("parameter `{k}`: `{v}` is not a number")))?;
            spec.params.insert(k.to_string(), x);
        }
    }
    Ok(spec)
}

pub fn parse_inline(s: &str) -> CliResult<MetricFile> {
    let parts = split_top(s, '*');
    if parts.len() == 1 {
        return parse_factor(&parts[0]);
    }
    Ok(MetricFile {
        kind: "product".into(),
        name: None,
        params: BTreeMap::new(),
        dim: None,
        expr: None,
        factors: parts.iter().map(|p| parse_factor(p)).collect::<CliResult<_>>()?,
    })
}

/// `--metric` argument: inline JSON, a JSON file, or the inline form.
pub fn load_metric(arg: &str) -> CliResult<MetricDefinition> {
    let t = arg.trim();
    let spec: MetricFile = if t.starts_with('{') {
        serde_json::from_str(t)?
    } else if Path::new(t).is_file() {
        serde_json::from_str(&std::fs::read_to_string(t)?)?
    } else {
        parse_inline(t)?
    };
    build(&spec)
}
