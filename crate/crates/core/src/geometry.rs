//! Levi-Civita curvature on a single coordinate chart.
//!
//! Every field here is a jet-valued array. Derivatives consume one order, so
//! a metric of order `K` yields Christoffel symbols of order `K - 1` and a
//! Ricci tensor of order `K - 2`; residual norms only look at the orders that
//! are actually determined.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

use crate::expr::{self, ExprError};
use crate::jet::Jet;

/// Relative determinant threshold below which a metric counts as singular.
pub const SINGULAR_DET_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("metric is singular at the chart point (det = {det:e})")]
    SingularMetric { det: f64 },
    #[error("Einstein factor 2*lambda/(D-2) is undefined for D = 2 with lambda = {lambda}")]
    DimensionTwoWithNonzeroLambda { lambda: f64 },
    #[error("expected {expected} components, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("components are not symmetric: |g_{a}{b} - g_{b}{a}| = {gap:e}")]
    Asymmetric { a: usize, b: usize, gap: f64 },
    #[error("metric components live in {nvars} variables, chart has dimension {dim}")]
    VariableCount { dim: usize, nvars: usize },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Square array of jets, stored densely in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct JetMatrix {
    dim: usize,
    data: Vec<Jet>,
}

impl JetMatrix {
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Jet) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for a in 0..dim {
            for b in 0..dim {
                data.push(f(a, b));
            }
        }
        Self { dim, data }
    }

    /// Builds a symmetric matrix from the upper triangle produced by `f`.
    pub fn symmetric_from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Jet) -> Self {
        let mut upper = vec![None; dim * dim];
        for a in 0..dim {
            for b in a..dim {
                upper[a * dim + b] = Some(f(a, b));
            }
        }
        Self::from_fn(dim, |a, b| {
            let (i, j) = if a <= b { (a, b) } else { (b, a) };
            upper[i * dim + j].clone().expect("filled")
        })
    }

    pub fn from_rows(rows: Vec<Vec<Jet>>) -> Result<Self, GeometryError> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(GeometryError::Shape {
                    expected: dim,
                    got: row.len(),
                });
            }
            data.extend(row);
        }
        Ok(Self { dim, data })
    }

    pub fn identity(dim: usize, nvars: usize, order: usize) -> Self {
        Self::from_fn(dim, |a, b| {
            Jet::constant(nvars, order, if a == b { 1.0 } else { 0.0 })
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, a: usize, b: usize) -> &Jet {
        &self.data[a * self.dim + b]
    }

    pub fn set(&mut self, a: usize, b: usize, value: Jet) {
        self.data[a * self.dim + b] = value;
    }

    pub fn nvars(&self) -> usize {
        self.data[0].nvars()
    }

    /// Smallest component order.
    pub fn order(&self) -> usize {
        self.data.iter().map(Jet::order).min().unwrap_or(0)
    }

    pub fn entries(&self) -> impl Iterator<Item = &Jet> {
        self.data.iter()
    }

    pub fn map(&self, f: impl FnMut(&Jet) -> Jet) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, mut f: impl FnMut(&Jet, &Jet) -> Jet) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(a, b))
                .collect(),
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let d = self.dim;
        Self::from_fn(d, |a, b| {
            let mut acc = self.get(a, 0) * other.get(0, b);
            for c in 1..d {
                acc = &acc + &(self.get(a, c) * other.get(c, b));
            }
            acc
        })
    }

    pub fn constant_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |a, b| self.get(a, b).constant_term())
    }

    /// Value matrix at an offset from the expansion point.
    pub fn eval(&self, point: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |a, b| self.get(a, b).eval(point))
    }

    /// Largest `|M_ab - M_ba|` coefficient.
    pub fn asymmetry(&self) -> f64 {
        let mut gap = 0.0f64;
        for a in 0..self.dim {
            for b in (a + 1)..self.dim {
                gap = gap.max((self.get(a, b) - self.get(b, a)).max_abs());
            }
        }
        gap
    }

    /// Largest coefficient magnitude over all components.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, j| m.max(j.max_abs()))
    }

    /// Largest coefficient magnitude per total degree over all components.
    pub fn max_abs_by_degree(&self) -> Vec<f64> {
        let order = self.order();
        let mut out = vec![0.0f64; order + 1];
        for j in &self.data {
            for (o, v) in out.iter_mut().zip(j.truncate(order).max_abs_by_degree()) {
                *o = o.max(v);
            }
        }
        out
    }

    pub fn truncate(&self, order: usize) -> Self {
        self.map(|j| j.truncate(order))
    }

    /// Linear change of variables `x = A z` applied to every component
    /// (no tensor factors).
    pub fn substitute_linear(&self, a: &DMatrix<f64>) -> Self {
        let inner = linear_jets(a, self.order());
        self.map(|j| j.substitute(&inner).expect("matching variable counts"))
    }
}

/// Jets `x_k = sum_j A_kj z_j`.
pub fn linear_jets(a: &DMatrix<f64>, order: usize) -> Vec<Jet> {
    let n = a.ncols();
    (0..a.nrows())
        .map(|k| {
            let mut j = Jet::zero(n, order);
            if order >= 1 {
                for v in 0..n {
                    let mut e = vec![0u32; n];
                    e[v] = 1;
                    j.set_coeff(&e, a[(k, v)]);
                }
            }
            j
        })
        .collect()
}

/// Metric components `g_AB` on a chart, as jets in the chart variables.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartMetric {
    components: JetMatrix,
    signature: Vec<i8>,
}

impl ChartMetric {
    pub fn new(components: JetMatrix) -> Result<Self, GeometryError> {
        let dim = components.dim();
        if components.nvars() != dim {
            return Err(GeometryError::VariableCount {
                dim,
                nvars: components.nvars(),
            });
        }
        for a in 0..dim {
            for b in (a + 1)..dim {
                let gap = (components.get(a, b) - components.get(b, a)).max_abs();
                if gap > 1e-12 {
                    return Err(GeometryError::Asymmetric { a, b, gap });
                }
            }
        }
        let g0 = components.constant_matrix();
        let scale = g0.abs().max().max(f64::MIN_POSITIVE);
        let det = g0.determinant();
        if !det.is_finite() || det.abs() < SINGULAR_DET_TOL * scale.powi(dim as i32) {
            return Err(GeometryError::SingularMetric { det });
        }
        let eig = SymmetricEigen::new(g0);
        let mut signature: Vec<i8> = eig
            .eigenvalues
            .iter()
            .map(|&l| if l < 0.0 { -1 } else { 1 })
            .collect();
        signature.sort();
        Ok(Self {
            components,
            signature,
        })
    }

    pub fn from_rows(rows: Vec<Vec<Jet>>) -> Result<Self, GeometryError> {
        Self::new(JetMatrix::from_rows(rows)?)
    }

    /// Parses component formulas (row-major, full `D x D`) and expands them
    /// about `center`.
    pub fn from_exprs<S: AsRef<str>>(
        rows: &[Vec<S>],
        center: &[f64],
        order: usize,
    ) -> Result<Self, GeometryError> {
        let jets = rows
            .iter()
            .map(|row| {
                row.iter()
                    .map(|s| expr::expand(s.as_ref(), center, order))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_rows(jets)
    }

    /// Constant diagonal metric.
    pub fn diagonal(entries: &[f64], order: usize) -> Result<Self, GeometryError> {
        let d = entries.len();
        Self::new(JetMatrix::from_fn(d, |a, b| {
            Jet::constant(d, order, if a == b { entries[a] } else { 0.0 })
        }))
    }

    pub fn euclidean(dim: usize, order: usize) -> Self {
        Self::diagonal(&vec![1.0; dim], order).expect("identity is invertible")
    }

    pub fn dim(&self) -> usize {
        self.components.dim()
    }

    pub fn order(&self) -> usize {
        self.components.order()
    }

    pub fn get(&self, a: usize, b: usize) -> &Jet {
        self.components.get(a, b)
    }

    pub fn components(&self) -> &JetMatrix {
        &self.components
    }

    /// Sorted signs of the constant-term eigenvalues.
    pub fn signature(&self) -> &[i8] {
        &self.signature
    }

    /// Pulls the metric back through the linear map `x = A z`:
    /// `g'_ij(z) = A_ki A_lj g_kl(A z)`.
    pub fn linear_pullback(&self, a: &DMatrix<f64>) -> Result<Self, GeometryError> {
        let moved = self.components.substitute_linear(a);
        let d = self.dim();
        let out = JetMatrix::symmetric_from_fn(d, |i, j| {
            let mut acc = Jet::zero(d, moved.order());
            for k in 0..d {
                for l in 0..d {
                    let w = a[(k, i)] * a[(l, j)];
                    if w != 0.0 {
                        acc = &acc + &moved.get(k, l).scale(w);
                    }
                }
            }
            acc
        });
        Self::new(out)
    }
}

/// `g^{AB}` via a Neumann series about the constant-term inverse.
pub fn inverse_metric(g: &ChartMetric) -> Result<JetMatrix, GeometryError> {
    invert(g.components())
}

/// Inverts a jet matrix whose constant-term matrix is invertible.
pub fn invert(m: &JetMatrix) -> Result<JetMatrix, GeometryError> {
    let d = m.dim();
    let nv = m.nvars();
    let order = m.order();
    let g0 = m.constant_matrix();
    let det = g0.determinant();
    let scale = g0.abs().max().max(f64::MIN_POSITIVE);
    if !det.is_finite() || det.abs() < SINGULAR_DET_TOL * scale.powi(d as i32) {
        return Err(GeometryError::SingularMetric { det });
    }
    let g0inv = g0
        .try_inverse()
        .ok_or(GeometryError::SingularMetric { det })?;
    let inv0 = JetMatrix::from_fn(d, |a, b| Jet::constant(nv, order, g0inv[(a, b)]));
    // X = -g0^{-1} (m - g0), nilpotent in the truncation
    let h = m.truncate(order).map(|j| {
        let mut j = j.clone();
        j.coeffs_mut()[0] = 0.0;
        j
    });
    let x = inv0.matmul(&h).map(|j| -j);
    let id = JetMatrix::identity(d, nv, order);
    let mut s = id.clone();
    for _ in 0..order {
        s = id.zip_with(&x.matmul(&s), |a, b| a + b);
    }
    let inv = s.matmul(&inv0);
    Ok(JetMatrix::from_fn(d, |a, b| {
        (inv.get(a, b) + inv.get(b, a)).scale(0.5)
    }))
}

/// `Gamma^C_{AB}` stored upper index first.
#[derive(Clone, Debug, PartialEq)]
pub struct ChristoffelField {
    dim: usize,
    gamma: Vec<Jet>,
}

impl ChristoffelField {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, c: usize, a: usize, b: usize) -> &Jet {
        &self.gamma[(c * self.dim + a) * self.dim + b]
    }

    pub fn order(&self) -> usize {
        self.gamma.iter().map(Jet::order).min().unwrap_or(0)
    }

    /// Largest `|Gamma^C_AB - Gamma^C_BA|` coefficient.
    pub fn torsion(&self) -> f64 {
        let d = self.dim;
        let mut t = 0.0f64;
        for c in 0..d {
            for a in 0..d {
                for b in 0..d {
                    t = t.max((self.get(c, a, b) - self.get(c, b, a)).max_abs());
                }
            }
        }
        t
    }
}

/// `Gamma^C_{AB} = 1/2 g^{CM} (-d_M g_AB + d_A g_BM + d_B g_MA)`.
pub fn christoffel(g: &ChartMetric) -> Result<ChristoffelField, GeometryError> {
    let d = g.dim();
    let ginv = inverse_metric(g)?;
    // dg[(m * d + a) * d + b] = d_m g_ab
    let mut dg = Vec::with_capacity(d * d * d);
    for m in 0..d {
        for a in 0..d {
            for b in 0..d {
                dg.push(g.get(a, b).diff(m));
            }
        }
    }
    let at = |m: usize, a: usize, b: usize| &dg[(m * d + a) * d + b];
    let mut lowered = vec![None; d * d * d];
    for m in 0..d {
        for a in 0..d {
            for b in a..d {
                let t = &(at(a, b, m) + at(b, m, a)) - at(m, a, b);
                lowered[(m * d + a) * d + b] = Some(t);
            }
        }
    }
    let first_kind = |m: usize, a: usize, b: usize| {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        lowered[(m * d + a) * d + b].as_ref().expect("filled")
    };
    let mut gamma = Vec::with_capacity(d * d * d);
    for c in 0..d {
        for a in 0..d {
            for b in 0..d {
                let mut acc = ginv.get(c, 0) * first_kind(0, a, b);
                for m in 1..d {
                    acc = &acc + &(ginv.get(c, m) * first_kind(m, a, b));
                }
                gamma.push(acc.scale(0.5));
            }
        }
    }
    Ok(ChristoffelField { dim: d, gamma })
}

/// Ricci tensor `R_AB`.
#[derive(Clone, Debug, PartialEq)]
pub struct RicciField {
    pub ric: JetMatrix,
}

/// `R_AB = d_M Gamma^M_AB + Gamma^M_AB Gamma^N_MN - d_B Gamma^M_AM - Gamma^M_AN Gamma^N_MB`.
pub fn ricci(gamma: &ChristoffelField) -> RicciField {
    let d = gamma.dim();
    let trace: Vec<Jet> = (0..d)
        .map(|m| {
            let mut acc = gamma.get(0, m, 0).clone();
            for n in 1..d {
                acc = &acc + gamma.get(n, m, n);
            }
            acc
        })
        .collect();
    let ric = JetMatrix::from_fn(d, |a, b| {
        let mut acc = gamma.get(0, a, b).diff(0);
        for m in 1..d {
            acc = &acc + &gamma.get(m, a, b).diff(m);
        }
        for m in 0..d {
            acc = &acc + &(gamma.get(m, a, b) * &trace[m]);
        }
        acc = &acc - &trace[a].diff(b);
        for m in 0..d {
            for n in 0..d {
                acc = &acc - &(gamma.get(m, a, n) * gamma.get(n, m, b));
            }
        }
        acc
    });
    RicciField { ric }
}

/// Ricci tensor of a metric in one call.
pub fn ricci_of(g: &ChartMetric) -> Result<RicciField, GeometryError> {
    Ok(ricci(&christoffel(g)?))
}

/// Full contraction of a jet matrix with the inverse metric.
pub fn contract(ginv: &JetMatrix, t: &JetMatrix) -> Jet {
    let d = t.dim();
    let mut acc = ginv.get(0, 0) * t.get(0, 0);
    for a in 0..d {
        for b in 0..d {
            if a + b > 0 {
                acc = &acc + &(ginv.get(a, b) * t.get(a, b));
            }
        }
    }
    acc
}

/// `R = g^{AB} R_AB`.
pub fn scalar_curvature(g: &ChartMetric, ric: &RicciField) -> Result<Jet, GeometryError> {
    Ok(contract(&inverse_metric(g)?, &ric.ric))
}

/// `2 lambda / (D - 2)`, with the Ricci-flat case allowed in any dimension.
pub fn einstein_factor(dim: usize, lambda: f64) -> Result<f64, GeometryError> {
    if lambda == 0.0 {
        return Ok(0.0);
    }
    if dim == 2 {
        return Err(GeometryError::DimensionTwoWithNonzeroLambda { lambda });
    }
    Ok(2.0 * lambda / (dim as f64 - 2.0))
}

/// `Ric(g) - 2 lambda/(D-2) g`, truncated to the Ricci order.
pub fn einstein_residual(g: &ChartMetric, lambda: f64) -> Result<JetMatrix, GeometryError> {
    let factor = einstein_factor(g.dim(), lambda)?;
    let ric = ricci_of(g)?.ric;
    Ok(ric.zip_with(g.components(), |r, gab| r - &gab.scale(factor)))
}

/// Source term `k T` of the field equations.
#[derive(Clone, Debug, PartialEq)]
pub struct StressEnergy {
    pub t: JetMatrix,
    pub coupling: f64,
}

impl StressEnergy {
    pub fn vacuum(dim: usize, order: usize) -> Self {
        Self {
            t: JetMatrix::from_fn(dim, |_, _| Jet::zero(dim, order)),
            coupling: 0.0,
        }
    }
}

/// `Ric - 1/2 R g - k T + lambda g`, implemented as printed; sign
/// conventions that depend on the signature are the caller's concern.
pub fn field_equation_residual(
    g: &ChartMetric,
    source: &StressEnergy,
    lambda: f64,
) -> Result<JetMatrix, GeometryError> {
    let ric = ricci_of(g)?;
    let r = scalar_curvature(g, &ric)?;
    let d = g.dim();
    Ok(JetMatrix::from_fn(d, |a, b| {
        let gab = g.get(a, b);
        let mut out = ric.ric.get(a, b) - &(&r * gab).scale(0.5);
        out = &out - &source.t.get(a, b).scale(source.coupling);
        &out + &gab.scale(lambda)
    }))
}

/// Einstein tensor `G_AB = R_AB - 1/2 R g_AB`.
pub fn einstein_tensor(g: &ChartMetric) -> Result<JetMatrix, GeometryError> {
    field_equation_residual(g, &StressEnergy::vacuum(g.dim(), g.order()), 0.0)
}

/// Divergence `g^{AC} nabla_C G_AB`; identically zero by the contracted
/// Bianchi identity. Needs metric order at least 3 to be non-trivial.
pub fn bianchi_divergence(g: &ChartMetric) -> Result<Vec<Jet>, GeometryError> {
    let d = g.dim();
    let gamma = christoffel(g)?;
    let ginv = inverse_metric(g)?;
    let gt = einstein_tensor(g)?;
    let nabla = |c: usize, a: usize, b: usize| {
        let mut acc = gt.get(a, b).diff(c);
        for m in 0..d {
            acc = &acc - &(gamma.get(m, c, a) * gt.get(m, b));
            acc = &acc - &(gamma.get(m, c, b) * gt.get(a, m));
        }
        acc
    };
    Ok((0..d)
        .map(|b| {
            let mut acc: Option<Jet> = None;
            for a in 0..d {
                for c in 0..d {
                    let term = ginv.get(a, c) * &nabla(c, a, b);
                    acc = Some(match acc {
                        Some(s) => &s + &term,
                        None => term,
                    });
                }
            }
            acc.expect("dim >= 1")
        })
        .collect())
}

/// Per-degree residual summary used by certificates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualNorm {
    /// Highest total degree the residual determines.
    pub verifiable_degree: usize,
    pub by_degree: Vec<f64>,
    pub max: f64,
}

impl ResidualNorm {
    pub fn of(residual: &JetMatrix) -> Self {
        let by_degree = residual.max_abs_by_degree();
        let max = by_degree.iter().copied().fold(0.0, f64::max);
        Self {
            verifiable_degree: residual.order(),
            by_degree,
            max,
        }
    }

    /// Largest magnitude among degrees `<= degree`.
    pub fn through(&self, degree: usize) -> f64 {
        self.by_degree
            .iter()
            .take(degree + 1)
            .copied()
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn rows(src: &[&[&str]]) -> Vec<Vec<String>> {
        src.iter()
            .map(|r| r.iter().map(|s| s.to_string()).collect())
            .collect()
    }

    fn sphere2(order: usize) -> ChartMetric {
        ChartMetric::from_exprs(
            &rows(&[&["1", "0"], &["0", "sin(x1)^2"]]),
            &[FRAC_PI_2, 0.0],
            order,
        )
        .unwrap()
    }

    fn sphere3(order: usize) -> ChartMetric {
        ChartMetric::from_exprs(
            &rows(&[
                &["1", "0", "0"],
                &["0", "sin(x1)^2", "0"],
                &["0", "0", "sin(x1)^2*sin(x2)^2"],
            ]),
            &[FRAC_PI_2, FRAC_PI_2, 0.0],
            order,
        )
        .unwrap()
    }

    fn warped(h: f64, order: usize) -> ChartMetric {
        let w = format!("exp(2*{h}*y)");
        ChartMetric::from_exprs(
            &rows(&[&[&w, "0", "0"], &["0", &w, "0"], &["0", "0", "1"]]),
            &[0.0, 0.0, 0.0],
            order,
        )
        .unwrap()
    }

    #[test]
    fn flat_metric_inverse_and_christoffel() {
        let g = ChartMetric::euclidean(3, 4);
        assert_eq!(inverse_metric(&g).unwrap(), *g.components());
        let gamma = christoffel(&g).unwrap();
        assert!(gamma.gamma.iter().all(|j| j.max_abs() == 0.0));
        assert_eq!(ricci(&gamma).ric.max_abs(), 0.0);
        let r = scalar_curvature(&g, &ricci(&gamma)).unwrap();
        assert_eq!(r.max_abs(), 0.0);
        assert_eq!(einstein_residual(&g, 0.0).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn polar_inverse_multiplies_back() {
        let g =
            ChartMetric::from_exprs(&rows(&[&["1", "0"], &["0", "x1^2"]]), &[1.0, 0.0], 5).unwrap();
        let inv = inverse_metric(&g).unwrap();
        let prod = inv.matmul(g.components());
        let id = JetMatrix::identity(2, 2, 5);
        assert!(prod.zip_with(&id, |a, b| a - b).max_abs() < 1e-13);
        // 1/r^2 about r = 1: 1 - 2x + 3x^2 - ...
        assert!((inv.get(1, 1).coeff(&[1, 0]) + 2.0).abs() < 1e-14);
        assert!((inv.get(1, 1).coeff(&[2, 0]) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn singular_metric_is_rejected() {
        let m = JetMatrix::from_fn(2, |_, _| Jet::one(2, 2));
        assert!(matches!(
            ChartMetric::new(m.clone()),
            Err(GeometryError::SingularMetric { .. })
        ));
        assert!(matches!(
            invert(&m),
            Err(GeometryError::SingularMetric { .. })
        ));
    }

    #[test]
    fn asymmetric_metric_is_rejected() {
        let m = JetMatrix::from_fn(2, |a, b| {
            Jet::constant(
                2,
                1,
                if a == b {
                    1.0
                } else if a < b {
                    0.1
                } else {
                    0.0
                },
            )
        });
        assert!(matches!(
            ChartMetric::new(m),
            Err(GeometryError::Asymmetric { .. })
        ));
    }

    #[test]
    fn signature_is_reported() {
        let g = ChartMetric::diagonal(&[1.0, -1.0, 1.0], 2).unwrap();
        assert_eq!(g.signature(), &[-1, 1, 1]);
    }

    #[test]
    fn polar_christoffel_closed_form() {
        // r = 1 + x
        let g =
            ChartMetric::from_exprs(&rows(&[&["1", "0"], &["0", "x1^2"]]), &[1.0, 0.0], 5).unwrap();
        let gamma = christoffel(&g).unwrap();
        let r = Jet::coordinate(2, 4, 0, 1.0);
        assert!(gamma.get(0, 1, 1).approx_eq(&(-&r), 1e-13));
        let inv_r = r.reciprocal().unwrap();
        assert!(gamma.get(1, 0, 1).approx_eq(&inv_r, 1e-13));
        assert!(gamma.get(1, 1, 0).approx_eq(&inv_r, 1e-13));
        assert_eq!(gamma.torsion(), 0.0);
    }

    #[test]
    fn conformal_christoffel_order_zero() {
        let g = ChartMetric::from_exprs(
            &rows(&[&["exp(2*x1)", "0"], &["0", "exp(2*x1)"]]),
            &[0.0, 0.0],
            3,
        )
        .unwrap();
        let gamma = christoffel(&g).unwrap();
        assert!((gamma.get(0, 0, 0).constant_term() - 1.0).abs() < 1e-14);
        assert!((gamma.get(0, 1, 1).constant_term() + 1.0).abs() < 1e-14);
        assert!((gamma.get(1, 0, 1).constant_term() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn round_sphere_ricci_equals_metric() {
        let g = sphere2(6);
        let ric = ricci_of(&g).unwrap();
        assert_eq!(ric.ric.order(), 4);
        let diff = ric.ric.zip_with(g.components(), |a, b| a - b);
        assert!(diff.max_abs() < 1e-12);
        let r = scalar_curvature(&g, &ric).unwrap();
        assert!(r.approx_eq(&Jet::constant(2, 4, 2.0), 1e-12));
    }

    #[test]
    fn warped_hyperbolic_family_is_einstein() {
        for h in [0.25, 0.5, 1.0] {
            let g = warped(h, 6);
            let ric = ricci_of(&g).unwrap();
            let target = g.components().map(|j| j.scale(-2.0 * h * h));
            assert!(ric.ric.zip_with(&target, |a, b| a - b).max_abs() < 1e-11);
            let r = scalar_curvature(&g, &ric).unwrap();
            assert!((r.constant_term() + 6.0 * h * h).abs() < 1e-12);
            let res = einstein_residual(&g, -h * h).unwrap();
            assert!(res.max_abs() < 1e-11, "h = {h}: {}", res.max_abs());
        }
    }

    #[test]
    fn three_sphere_is_einstein_with_unit_lambda() {
        let g = sphere3(5);
        let res = einstein_residual(&g, 1.0).unwrap();
        assert!(res.max_abs() < 1e-11);
        let fe = field_equation_residual(&g, &StressEnergy::vacuum(3, 5), 1.0).unwrap();
        assert!(fe.max_abs() < 1e-11);
    }

    #[test]
    fn flat_with_lambda_leaves_the_metric_as_residual() {
        let g = ChartMetric::euclidean(3, 3);
        let fe = field_equation_residual(&g, &StressEnergy::vacuum(3, 3), 1.0).unwrap();
        assert!(
            fe.zip_with(&g.components().truncate(1), |a, b| a - b)
                .max_abs()
                < 1e-15
        );
        assert_eq!(fe.get(0, 0).constant_term(), 1.0);
    }

    #[test]
    fn dimension_two_rejects_nonzero_lambda() {
        let g = sphere2(4);
        assert_eq!(
            einstein_residual(&g, 1.0),
            Err(GeometryError::DimensionTwoWithNonzeroLambda { lambda: 1.0 })
        );
        // Ricci-flat reduction in D = 2
        let res = einstein_residual(&g, 0.0).unwrap();
        assert_eq!(res, ricci_of(&g).unwrap().ric);
    }

    #[test]
    fn residual_norm_by_degree() {
        let g = warped(0.5, 5);
        let res = einstein_residual(&g, 0.0).unwrap();
        let n = ResidualNorm::of(&res);
        assert_eq!(n.verifiable_degree, 3);
        assert_eq!(n.by_degree.len(), 4);
        assert!((n.through(0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bianchi_identity_holds_on_sphere() {
        let div = bianchi_divergence(&sphere3(4)).unwrap();
        for j in div {
            assert!(j.constant_term().abs() < 1e-12);
        }
    }
}
