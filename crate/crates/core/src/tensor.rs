//! Pointwise tensor calculus of a Finsler metric.
//!
//! Everything is derived from `L = ½F²` expanded as a truncated Taylor jet
//! around `(x, y)`, so derivatives are exact up to rounding. Connection
//! assembly is generic over [`Scalar`] so the same code yields connection
//! coefficients (`f64`), their x-derivatives (`Dual` over x) and the
//! Jacobian of the geodesic spray (`Dual` over `(x, y)`).

use std::ops::Deref;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::jet::{Jet, JetLayout};
use crate::metric::{MetricDefinition, TangentVector};
use crate::profile::ToleranceProfile;
use crate::sampling::{sphere_directions, stream_rng};
use crate::scalar::{Dual, Scalar};

pub type Matrix = Vec<Vec<f64>>;
pub type Array3 = Vec<Vec<Vec<f64>>>;
pub type Array4 = Vec<Vec<Vec<Vec<f64>>>>;

fn to_matrix(flat: &[f64], n: usize) -> Matrix {
    flat.chunks(n).map(|r| r.to_vec()).collect()
}

fn to_array3(flat: &[f64], n: usize) -> Array3 {
    flat.chunks(n * n).map(|b| to_matrix(b, n)).collect()
}

fn to_array4(flat: &[f64], n: usize) -> Array4 {
    flat.chunks(n * n * n).map(|b| to_array3(b, n)).collect()
}

fn values<S: Scalar>(v: &[S]) -> Vec<f64> {
    v.iter().map(|s| s.value()).collect()
}

/// `L = ½F²` as a jet in `(x, y)`. With `max_x == 0` only `y` is expanded.
fn lagrangian<S: Scalar>(
    m: &MetricDefinition,
    x: &[S],
    y: &[S],
    max_x: usize,
    max_y: usize,
    max_total: usize,
) -> Result<Jet<S>> {
    let n = m.dim();
    let n_x = if max_x == 0 { 0 } else { n };
    let layout = JetLayout::get(n_x, n, max_x, max_y, max_total);
    let xs: Vec<Jet<S>> = x
        .iter()
        .enumerate()
        .map(|(i, v)| {
            if n_x > 0 {
                Jet::x_var(&layout, i, v.clone())
            } else {
                Jet::constant(&layout, v.clone())
            }
        })
        .collect();
    let ys: Vec<Jet<S>> = y
        .iter()
        .enumerate()
        .map(|(i, v)| Jet::y_var(&layout, i, v.clone()))
        .collect();
    Ok(m.half_square(&xs, &ys)?)
}

struct Orders {
    x: Vec<u8>,
    y: Vec<u8>,
}

impl Orders {
    fn new(n_x: usize, n_y: usize) -> Self {
        Orders {
            x: vec![0; n_x],
            y: vec![0; n_y],
        }
    }

    fn take<S: Scalar>(&mut self, jet: &Jet<S>, xs: &[usize], ys: &[usize]) -> S {
        self.x.iter_mut().for_each(|o| *o = 0);
        self.y.iter_mut().for_each(|o| *o = 0);
        for &i in xs {
            self.x[i] += 1;
        }
        for &i in ys {
            self.y[i] += 1;
        }
        jet.derivative(&self.x, &self.y)
    }
}

/// Raw derivatives of `L` at one point.
struct Local<S> {
    n: usize,
    g: Vec<S>,
    /// `dg[(k n + i) n + j] = ∂g_ij / ∂x^k`
    dg: Vec<S>,
    /// `c[(i n + j) n + k] = C_ijk`
    c: Vec<S>,
}

fn local<S: Scalar>(m: &MetricDefinition, x: &[S], y: &[S], with_x: bool) -> Result<Local<S>> {
    let n = m.dim();
    let jet = if with_x {
        lagrangian(m, x, y, 1, 3, 3)?
    } else {
        lagrangian(m, x, y, 0, 3, 3)?
    };
    let n_x = if with_x { n } else { 0 };
    let mut ord = Orders::new(n_x, n);
    let zero = y[0].lift(0.0);
    let mut g = vec![zero.clone(); n * n];
    let mut c = vec![zero.clone(); n * n * n];
    let mut dg = vec![zero; n * n * n];
    for i in 0..n {
        for j in i..n {
            let v = ord.take(&jet, &[], &[i, j]);
            g[i * n + j] = v.clone();
            g[j * n + i] = v;
            for k in j..n {
                let v = ord.take(&jet, &[], &[i, j, k]).scale(0.5);
                for (a, b, d) in [
                    (i, j, k),
                    (i, k, j),
                    (j, i, k),
                    (j, k, i),
                    (k, i, j),
                    (k, j, i),
                ] {
                    c[(a * n + b) * n + d] = v.clone();
                }
            }
            if with_x {
                for k in 0..n {
                    let v = ord.take(&jet, &[k], &[i, j]);
                    dg[(k * n + i) * n + j] = v.clone();
                    dg[(k * n + j) * n + i] = v;
                }
            }
        }
    }
    Ok(Local { n, g, dg, c })
}

/// Gauss–Jordan inverse with partial pivoting on the leading values.
fn invert<S: Scalar>(a: &[S], n: usize) -> Result<Vec<S>> {
    let zero = a[0].lift(0.0);
    let mut m = a.to_vec();
    let mut inv = vec![zero; n * n];
    for i in 0..n {
        inv[i * n + i] = a[0].lift(1.0);
    }
    // per column, so blocks of very different size (products) stay regular
    let scales: Vec<f64> = (0..n)
        .map(|c| (0..n).map(|r| a[r * n + c].value().abs()).fold(0.0, f64::max))
        .collect();
    for col in 0..n {
        let scale = scales[col];
        let piv = (col..n)
            .max_by(|&r, &s| {
                m[r * n + col]
                    .value()
                    .abs()
                    .total_cmp(&m[s * n + col].value().abs())
            })
            .expect("nonempty");
        let pv = m[piv * n + col].value();
        if !(pv.abs() > 1e-14 * scale) {
            return Err(Error::Singular);
        }
        if piv != col {
            for k in 0..n {
                m.swap(col * n + k, piv * n + k);
                inv.swap(col * n + k, piv * n + k);
            }
        }
        let r = m[col * n + col].recip();
        for k in 0..n {
            m[col * n + k] = m[col * n + k].clone() * r.clone();
            inv[col * n + k] = inv[col * n + k].clone() * r.clone();
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = m[row * n + col].clone();
            if f.is_exact_zero() {
                continue;
            }
            for k in 0..n {
                m[row * n + k] = m[row * n + k].clone() - f.clone() * m[col * n + k].clone();
                inv[row * n + k] = inv[row * n + k].clone() - f.clone() * inv[col * n + k].clone();
            }
        }
    }
    Ok(inv)
}

/// All connection-level quantities at one `(x, y)`, flat row-major.
struct Connection<S> {
    g_inv: Vec<S>,
    /// `gamma[(i n + j) n + k] = γ^i_jk`
    gamma: Vec<S>,
    /// `nonlinear[i n + j] = N^i_j`
    nonlinear: Vec<S>,
    /// `chern[(l n + j) n + k] = Γ^l_jk`
    chern: Vec<S>,
}

fn sum<S: Scalar>(zero: &S, it: impl Iterator<Item = S>) -> S {
    it.fold(zero.clone(), |a, b| a + b)
}

fn assemble<S: Scalar>(loc: &Local<S>, y: &[S]) -> Result<Connection<S>> {
    let n = loc.n;
    let zero = y[0].lift(0.0);
    let g_inv = invert(&loc.g, n)?;
    let dg = |k: usize, i: usize, j: usize| loc.dg[(k * n + i) * n + j].clone();
    let c = |i: usize, j: usize, k: usize| loc.c[(i * n + j) * n + k].clone();

    let mut lowered = vec![zero.clone(); n * n * n];
    for s in 0..n {
        for j in 0..n {
            for k in j..n {
                let v = (dg(k, s, j) - dg(s, j, k) + dg(j, k, s)).scale(0.5);
                lowered[(s * n + j) * n + k] = v.clone();
                lowered[(s * n + k) * n + j] = v;
            }
        }
    }
    let mut gamma = vec![zero.clone(); n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in j..n {
                let v = sum(
                    &zero,
                    (0..n).map(|s| g_inv[i * n + s].clone() * lowered[(s * n + j) * n + k].clone()),
                );
                gamma[(i * n + j) * n + k] = v.clone();
                gamma[(i * n + k) * n + j] = v;
            }
        }
    }
    let gm = |i: usize, j: usize, k: usize| gamma[(i * n + j) * n + k].clone();

    // G^k = γ^k_rs y^r y^s
    let spray: Vec<S> = (0..n)
        .map(|k| {
            sum(
                &zero,
                (0..n)
                    .flat_map(|r| (0..n).map(move |s| (r, s)))
                    .map(|(r, s)| gm(k, r, s) * y[r].clone() * y[s].clone()),
            )
        })
        .collect();
    // C_lj^. G = C_ljk G^k
    let mut cg = vec![zero.clone(); n * n];
    for l in 0..n {
        for j in 0..n {
            cg[l * n + j] = sum(&zero, (0..n).map(|k| c(l, j, k) * spray[k].clone()));
        }
    }
    let mut nonlinear = vec![zero.clone(); n * n];
    for i in 0..n {
        for j in 0..n {
            let a = sum(&zero, (0..n).map(|k| gm(i, j, k) * y[k].clone()));
            let b = sum(
                &zero,
                (0..n).map(|l| g_inv[i * n + l].clone() * cg[l * n + j].clone()),
            );
            nonlinear[i * n + j] = a - b;
        }
    }
    let nl = |s: usize, k: usize| nonlinear[s * n + k].clone();

    // H_ijk = C_ijs N^s_k − C_jks N^s_i + C_kis N^s_j
    let mut cn = vec![zero.clone(); n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                cn[(i * n + j) * n + k] = sum(&zero, (0..n).map(|s| c(i, j, s) * nl(s, k)));
            }
        }
    }
    let cnf = |i: usize, j: usize, k: usize| cn[(i * n + j) * n + k].clone();
    let mut chern = vec![zero.clone(); n * n * n];
    for l in 0..n {
        for j in 0..n {
            for k in 0..n {
                let corr = sum(
                    &zero,
                    (0..n).map(|i| {
                        g_inv[l * n + i].clone() * (cnf(i, j, k) - cnf(j, k, i) + cnf(k, i, j))
                    }),
                );
                chern[(l * n + j) * n + k] = gm(l, j, k) - corr;
            }
        }
    }
    Ok(Connection {
        g_inv,
        gamma,
        nonlinear,
        chern,
    })
}

fn check(m: &MetricDefinition, v: &TangentVector, profile: &ToleranceProfile) -> Result<()> {
    m.check_slit(&v.base, &v.components, profile.slit_epsilon)?;
    Ok(())
}

/// `g_ij(x, y)` as a flat row-major matrix, without slit checks.
pub fn fundamental_matrix(m: &MetricDefinition, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let n = m.dim();
    let jet = lagrangian(m, x, y, 0, 2, 2)?;
    let mut ord = Orders::new(0, n);
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = ord.take(&jet, &[], &[i, j]);
            g[i * n + j] = v;
            g[j * n + i] = v;
        }
    }
    Ok(g)
}

/// `g_y(u, w)`.
pub fn inner(g: &[f64], u: &[f64], w: &[f64]) -> f64 {
    let n = u.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += g[i * n + j] * u[i] * w[j];
        }
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct FundamentalTensor {
    pub base: Vec<f64>,
    pub direction: Vec<f64>,
    pub g: Matrix,
    pub g_inv: Matrix,
}

#[derive(Debug, Clone, Serialize)]
pub struct CartanTensor {
    pub base: Vec<f64>,
    pub direction: Vec<f64>,
    pub c: Array3,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConnectionData {
    pub base: Vec<f64>,
    pub direction: Vec<f64>,
    pub g: Matrix,
    pub g_inv: Matrix,
    pub cartan: Array3,
    /// `formal_christoffels[i][j][k] = γ^i_jk`
    pub formal_christoffels: Array3,
    /// `nonlinear_connection[i][j] = N^i_j`
    pub nonlinear_connection: Matrix,
    /// `chern[l][j][k] = Γ^l_jk`
    pub chern: Array3,
}

pub fn fundamental_tensor(m: &MetricDefinition, v: &TangentVector) -> Result<FundamentalTensor> {
    check(m, v, &ToleranceProfile::default())?;
    let n = m.dim();
    let g = fundamental_matrix(m, &v.base, &v.components)?;
    let g_inv = invert(&g, n)?;
    Ok(FundamentalTensor {
        base: v.base.clone(),
        direction: v.components.clone(),
        g: to_matrix(&g, n),
        g_inv: to_matrix(&g_inv, n),
    })
}

pub fn cartan_tensor(m: &MetricDefinition, v: &TangentVector) -> Result<CartanTensor> {
    check(m, v, &ToleranceProfile::default())?;
    let loc = local(m, &v.base, &v.components, false)?;
    Ok(CartanTensor {
        base: v.base.clone(),
        direction: v.components.clone(),
        c: to_array3(&loc.c, m.dim()),
    })
}

/// Every pointwise tensor at `(x, y)` in one pass.
pub fn connection_data(
    m: &MetricDefinition,
    v: &TangentVector,
    profile: &ToleranceProfile,
) -> Result<ConnectionData> {
    check(m, v, profile)?;
    let n = m.dim();
    let loc = local(m, &v.base, &v.components, true)?;
    let con = assemble(&loc, &v.components)?;
    Ok(ConnectionData {
        base: v.base.clone(),
        direction: v.components.clone(),
        g: to_matrix(&loc.g, n),
        g_inv: to_matrix(&con.g_inv, n),
        cartan: to_array3(&loc.c, n),
        formal_christoffels: to_array3(&con.gamma, n),
        nonlinear_connection: to_matrix(&con.nonlinear, n),
        chern: to_array3(&con.chern, n),
    })
}

pub fn formal_christoffels(m: &MetricDefinition, v: &TangentVector) -> Result<Array3> {
    Ok(connection_data(m, v, &ToleranceProfile::default())?.formal_christoffels)
}

pub fn nonlinear_connection(m: &MetricDefinition, v: &TangentVector) -> Result<Matrix> {
    Ok(connection_data(m, v, &ToleranceProfile::default())?.nonlinear_connection)
}

pub fn chern_coefficients(m: &MetricDefinition, v: &TangentVector) -> Result<ConnectionData> {
    connection_data(m, v, &ToleranceProfile::default())
}

/// `Γ^l_jk(x, y)` flat, without slit checks.
pub(crate) fn chern_flat(m: &MetricDefinition, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let loc = local(m, x, y, true)?;
    Ok(assemble(&loc, y)?.chern)
}

/// Largest Cartan component in a `g_y`-orthonormal frame, with `y` scaled to
/// `F(x, y) = 1`.
pub fn cartan_frame_norm(m: &MetricDefinition, x: &[f64], y: &[f64]) -> Result<f64> {
    let n = m.dim();
    let f = m.eval_norm(x, y)?;
    let unit: Vec<f64> = y.iter().map(|v| v / f).collect();
    let loc = local(m, x, &unit, false)?;
    let g = DMatrix::from_row_slice(n, n, &loc.g);
    let eig = SymmetricEigen::new(g);
    // frame e_a = v_a / sqrt(λ_a)
    let mut frame = vec![0.0; n * n];
    for a in 0..n {
        let lam = eig.eigenvalues[a];
        if !(lam > 0.0) {
            return Err(Error::Singular);
        }
        for i in 0..n {
            frame[a * n + i] = eig.eigenvectors[(i, a)] / lam.sqrt();
        }
    }
    let mut worst: f64 = 0.0;
    for a in 0..n {
        for b in a..n {
            for d in b..n {
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            s += loc.c[(i * n + j) * n + k]
                                * frame[a * n + i]
                                * frame[b * n + j]
                                * frame[d * n + k];
                        }
                    }
                }
                worst = worst.max(s.abs());
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Serialize)]
pub struct BerwaldCheck {
    pub berwald: bool,
    /// `max ‖Γ(x, y₁) − Γ(x, y₂)‖_∞ / max(1, ‖Γ‖_∞)` over the samples.
    pub residual: f64,
    pub base_points: usize,
    pub directions: usize,
}

pub fn is_berwald(
    m: &MetricDefinition,
    base_samples: usize,
    dir_samples: usize,
    tol: f64,
    seed: u64,
) -> Result<BerwaldCheck> {
    if dir_samples < 2 || base_samples == 0 {
        return Err(Error::InvalidArgument(
            "Berwald test needs at least one base point and two directions".into(),
        ));
    }
    let n = m.dim();
    let dirs = sphere_directions(n, dir_samples);
    let mut rng = stream_rng(seed, 3);
    let mut residual: f64 = 0.0;
    for _ in 0..base_samples {
        let x = m.sample_point(&mut rng);
        let mut lo = vec![f64::INFINITY; n * n * n];
        let mut hi = vec![f64::NEG_INFINITY; n * n * n];
        for y in &dirs {
            let gam = chern_flat(m, &x, y)?;
            for (k, v) in gam.iter().enumerate() {
                lo[k] = lo[k].min(*v);
                hi[k] = hi[k].max(*v);
            }
        }
        let scale = lo
            .iter()
            .chain(hi.iter())
            .fold(1.0f64, |a, v| a.max(v.abs()));
        let spread = lo.iter().zip(&hi).fold(0.0f64, |a, (l, h)| a.max(h - l));
        residual = residual.max(spread / scale);
    }
    Ok(BerwaldCheck {
        berwald: residual < tol,
        residual,
        base_points: base_samples,
        directions: dirs.len(),
    })
}

/// A metric that passed the sampled Berwald test. Operations that need
/// y-independent connection coefficients only accept this type.
#[derive(Debug, Clone)]
pub struct BerwaldMetric {
    metric: MetricDefinition,
    residual: f64,
}

impl BerwaldMetric {
    pub fn certify(m: &MetricDefinition, profile: &ToleranceProfile, seed: u64) -> Result<Self> {
        let base = profile.classifier_base_points;
        let dirs = (profile.classifier_directions / base).max(2);
        let check = is_berwald(m, base, dirs, profile.berwald_tol, seed)?;
        if !check.berwald {
            return Err(Error::NotBerwald {
                residual: check.residual,
            });
        }
        Ok(BerwaldMetric {
            metric: m.clone(),
            residual: check.residual,
        })
    }

    pub fn metric(&self) -> &MetricDefinition {
        &self.metric
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }
}

impl Deref for BerwaldMetric {
    type Target = MetricDefinition;
    fn deref(&self) -> &MetricDefinition {
        &self.metric
    }
}

/// Connection and curvature along a reference direction `y` at `x`.
#[derive(Debug, Clone)]
pub(crate) struct Curvature {
    pub n: usize,
    /// `Γ^i_jk`
    pub chern: Vec<f64>,
    /// `r[((i n + j) n + k) n + l] = R^i_jkl`
    pub r: Vec<f64>,
    pub g: Vec<f64>,
}

impl Curvature {
    pub fn at(m: &MetricDefinition, x: &[f64], y: &[f64]) -> Result<Self> {
        let n = m.dim();
        let xd: Vec<Dual> = (0..n).map(|i| Dual::variable(x[i], i, n)).collect();
        let yd: Vec<Dual> = y.iter().map(|v| Dual::constant(*v, n)).collect();
        let loc = local(m, &xd, &yd, true)?;
        let con = assemble(&loc, &yd)?;
        let gam = |i: usize, j: usize, k: usize| &con.chern[(i * n + j) * n + k];
        let mut r = vec![0.0; n * n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let mut v = gam(i, j, l).grad[k] - gam(i, j, k).grad[l];
                        for s in 0..n {
                            v += gam(i, k, s).value * gam(s, j, l).value
                                - gam(i, l, s).value * gam(s, j, k).value;
                        }
                        r[((i * n + j) * n + k) * n + l] = v;
                    }
                }
            }
        }
        Ok(Curvature {
            n,
            chern: values(&con.chern),
            r,
            g: values(&loc.g),
        })
    }

    /// `Γ^i_jk a^j b^k`
    pub fn connection(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                let mut s = 0.0;
                for j in 0..n {
                    for k in 0..n {
                        s += self.chern[(i * n + j) * n + k] * a[j] * b[k];
                    }
                }
                s
            })
            .collect()
    }

    /// `R(J, T)T^i = R^i_jkl T^j J^k T^l`
    pub fn jacobi_operator(&self, j: &[f64], t: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                let mut s = 0.0;
                for a in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            s += self.r[((i * n + a) * n + k) * n + l] * t[a] * j[k] * t[l];
                        }
                    }
                }
                s
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvatureData {
    pub base: Vec<f64>,
    /// Reference direction the coefficients were evaluated at.
    pub reference: Vec<f64>,
    /// `r[i][j][k][l] = R^i_jkl`
    pub r: Array4,
}

/// hh-curvature of the x-only Chern connection.
pub fn hh_curvature(m: &BerwaldMetric, x: &[f64]) -> Result<CurvatureData> {
    m.check_point(x)?;
    let n = m.dim();
    let mut reference = vec![0.0; n];
    reference[0] = 1.0;
    let c = Curvature::at(m, x, &reference)?;
    Ok(CurvatureData {
        base: x.to_vec(),
        reference,
        r: to_array4(&c.r, n),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Flag {
    pub base: Vec<f64>,
    pub pole: Vec<f64>,
    pub edge: Vec<f64>,
}

pub fn flag_curvature(m: &BerwaldMetric, flag: &Flag, profile: &ToleranceProfile) -> Result<f64> {
    m.check_slit(&flag.base, &flag.pole, profile.slit_epsilon)?;
    if flag.edge.len() != m.dim() {
        return Err(Error::Dimension {
            expected: m.dim(),
            found: flag.edge.len(),
        });
    }
    let c = Curvature::at(m, &flag.base, &flag.pole)?;
    flag_ratio(&c, &flag.pole, &flag.edge, profile.flag_degeneracy)
}

pub(crate) fn flag_ratio(c: &Curvature, y: &[f64], v: &[f64], degeneracy: f64) -> Result<f64> {
    let gyy = inner(&c.g, y, y);
    let gvv = inner(&c.g, v, v);
    let gyv = inner(&c.g, y, v);
    let denom = gyy * gvv - gyv * gyv;
    if !(denom > degeneracy * gyy * gvv) {
        return Err(Error::DegenerateFlag {
            ratio: denom / (gyy * gvv),
        });
    }
    let rv = c.jacobi_operator(v, y);
    Ok(inner(&c.g, v, &rv) / denom)
}

#[derive(Debug, Clone, Serialize)]
pub struct VolumeDensity {
    pub base: Vec<f64>,
    pub value: f64,
    pub standard_error: f64,
    pub samples: usize,
}

/// `σ_F(x) = ∫_{F(x,y) ≤ 1} det g(x, y) dy / vol(Bⁿ)`, written in polar form
/// as the sphere average of `det g(θ) / F(θ)ⁿ`.
pub fn finsler_volume_density(
    m: &MetricDefinition,
    x: &[f64],
    samples: usize,
) -> Result<VolumeDensity> {
    if samples < 1000 {
        return Err(Error::InvalidArgument(
            "volume density needs at least 1000 samples".into(),
        ));
    }
    m.check_point(x)?;
    let n = m.dim();
    let mut vals = Vec::with_capacity(samples);
    for theta in sphere_directions(n, samples) {
        let g = fundamental_matrix(m, x, &theta)?;
        let det = DMatrix::from_row_slice(n, n, &g).determinant();
        let f = m.eval_norm(x, &theta)?;
        vals.push(det / f.powi(n as i32));
    }
    let k = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / k;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
    Ok(VolumeDensity {
        base: x.to_vec(),
        value: mean,
        standard_error: (var / k).sqrt(),
        samples: vals.len(),
    })
}

/// Geodesic spray `x'' = a(x, y)` from the Euler–Lagrange equations of `L`:
/// `g_lk a^k = L_{x^l} − L_{x^k y^l} y^k`.
fn spray_generic<S: Scalar>(m: &MetricDefinition, x: &[S], y: &[S]) -> Result<Vec<S>> {
    let n = m.dim();
    let jet = lagrangian(m, x, y, 1, 2, 2)?;
    let mut ord = Orders::new(n, n);
    let zero = y[0].lift(0.0);
    let mut g = vec![zero.clone(); n * n];
    let mut rhs = vec![zero.clone(); n];
    for l in 0..n {
        for k in l..n {
            let v = ord.take(&jet, &[], &[l, k]);
            g[l * n + k] = v.clone();
            g[k * n + l] = v;
        }
        let mut r = ord.take(&jet, &[l], &[]);
        for k in 0..n {
            r = r - ord.take(&jet, &[k], &[l]) * y[k].clone();
        }
        rhs[l] = r;
    }
    let g_inv = invert(&g, n)?;
    Ok((0..n)
        .map(|i| {
            sum(
                &zero,
                (0..n).map(|l| g_inv[i * n + l].clone() * rhs[l].clone()),
            )
        })
        .collect())
}

/// Geodesic acceleration at `(x, y)`.
pub fn spray(m: &MetricDefinition, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    spray_generic(m, x, y)
}

/// Acceleration plus its Jacobian `∂a^i/∂(x, y)` as an `n × 2n` row-major
/// matrix.
pub fn spray_with_jacobian(
    m: &MetricDefinition,
    x: &[f64],
    y: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = m.dim();
    let w = 2 * n;
    let xd: Vec<Dual> = (0..n).map(|i| Dual::variable(x[i], i, w)).collect();
    let yd: Vec<Dual> = (0..n).map(|i| Dual::variable(y[i], n + i, w)).collect();
    let a = spray_generic(m, &xd, &yd)?;
    let mut jac = Vec::with_capacity(n * w);
    for ai in &a {
        jac.extend_from_slice(&ai.grad[..w]);
    }
    Ok((values(&a), jac))
}
