//! Local codimension-one Einstein extensions.
//!
//! A seed metric `g_ij(x)` on `n` coordinates is extended to
//! `h_ij(x, y) dx^i dx^j + eps dy^2` (normal gauge, `phi = 1`). Writing
//! `h_ij = sum_k c^(k)_ij(x) y^k` with `c^(0) = g`, the `y^k` coefficient of
//! the `ij` Einstein residual is `-eps/2 (k+1)(k+2) c^(k+2) + F` with `F`
//! independent of `c^(k+2)`, so the series is filled order by order. The
//! first coefficient `c^(1)` is free data constrained by the `(i, y)` and
//! `(y, y)` equations on the slice `y = 0`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{
    einstein_residual, field_equation_residual, ricci_of, scalar_curvature, ChartMetric,
    GeometryError, JetMatrix, ResidualNorm, StressEnergy,
};
use crate::jet::Jet;

/// Certified bound on every Einstein residual coefficient.
pub const RESIDUAL_TOL: f64 = 1e-7;
/// Certified bound on the constraint components at `y = 0`.
pub const CONSTRAINT_TOL: f64 = 1e-8;
/// Newton stops once the constraint coefficients fall below this.
const NEWTON_TARGET: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 100;
const NEWTON_MIN_STEP: f64 = 1.0 / 1024.0;
const JACOBIAN_STEP: f64 = 1e-3;
const PINV_RTOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error(
        "constraint solve stalled after {iterations} iterations, best residual {best_residual:e}"
    )]
    ConstraintSolveFailed {
        best_residual: f64,
        iterations: usize,
    },
    #[error("recursion broke down at y-order {order}: {reason}")]
    RecursionBreakdown { order: usize, reason: String },
    #[error("bulk dimension 2 needs lambda = 0, got {lambda}")]
    DimensionTwoWithNonzeroLambda { lambda: f64 },
    #[error("truncation order {0} is below 2")]
    OrderTooLow(usize),
    #[error("seed jets have order {have}, need {need}")]
    SeedOrder { have: usize, need: usize },
    #[error("epsilon must be +1 or -1, got {0}")]
    BadEpsilon(f64),
    #[error("initial data has shape {got}, expected {expected}")]
    InitialDataShape { expected: usize, got: usize },
    #[error("certification failed: {0}")]
    CertificationFailed(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Analytic seed metric on `n` coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedMetric {
    pub g: ChartMetric,
}

impl SeedMetric {
    pub fn new(g: ChartMetric) -> Self {
        Self { g }
    }

    pub fn n(&self) -> usize {
        self.g.dim()
    }
}

/// `h_ij dx^i dx^j + eps phi^2 dy^2` in `n + 1` variables, `y` last.
#[derive(Clone, Debug, PartialEq)]
pub struct BulkChartMetric {
    pub base: JetMatrix,
    pub epsilon: f64,
    pub phi: Jet,
}

impl BulkChartMetric {
    pub fn n(&self) -> usize {
        self.base.dim()
    }

    pub fn order(&self) -> usize {
        self.base.order().min(self.phi.order())
    }

    /// `eps phi^2`.
    pub fn fiber_component(&self) -> Jet {
        (&self.phi * &self.phi).scale(self.epsilon)
    }

    pub fn to_chart_metric(&self) -> Result<ChartMetric, GeometryError> {
        let n = self.n();
        let order = self.order();
        let nv = n + 1;
        let gyy = self.fiber_component().truncate(order);
        ChartMetric::new(JetMatrix::from_fn(nv, |a, b| {
            if a < n && b < n {
                self.base.get(a, b).truncate(order)
            } else if a == n && b == n {
                gyy.clone()
            } else {
                Jet::zero(nv, order)
            }
        }))
    }

    /// Base block on the slice `y = 0`.
    pub fn slice(&self) -> JetMatrix {
        self.base.map(Jet::restrict_last)
    }
}

/// First `y`-coefficient `c^(1)` and how it was obtained.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialData {
    pub c1: JetMatrix,
    pub lambda0: f64,
    pub constraint_norm: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingResult {
    pub seed: SeedMetric,
    pub bulk: BulkChartMetric,
    pub lambda: f64,
    pub order: usize,
    pub residual_norm: f64,
    pub constraint_norm: f64,
    pub initial: InitialData,
}

fn check_inputs(
    seed: &SeedMetric,
    lambda: f64,
    epsilon: f64,
    order: usize,
) -> Result<(), EmbedError> {
    if order < 2 {
        return Err(EmbedError::OrderTooLow(order));
    }
    if epsilon != 1.0 && epsilon != -1.0 {
        return Err(EmbedError::BadEpsilon(epsilon));
    }
    if seed.n() + 1 == 2 && lambda != 0.0 {
        return Err(EmbedError::DimensionTwoWithNonzeroLambda { lambda });
    }
    if seed.g.order() < order {
        return Err(EmbedError::SeedOrder {
            have: seed.g.order(),
            need: order,
        });
    }
    Ok(())
}

/// `y^k` coefficient of a jet in `(x, y)`, as a jet in `x`.
pub fn y_coefficient(j: &Jet, k: usize) -> Jet {
    let nv = j.nvars();
    let n = nv - 1;
    let order = j.order().saturating_sub(k);
    let mut out = Jet::zero(n, order);
    for (e, c) in j.terms() {
        if e[n] as usize == k && c != 0.0 {
            out.set_coeff(&e[..n], c);
        }
    }
    out
}

/// `sum_k c^(k)(x) y^k` truncated at total degree `order`.
fn stack_y(coeffs: &[&Jet], order: usize) -> Jet {
    let n = coeffs[0].nvars();
    let mut out = Jet::zero(n + 1, order);
    let mut e = vec![0u32; n + 1];
    for (k, c) in coeffs.iter().enumerate() {
        for (src, v) in c.terms() {
            if v == 0.0 {
                continue;
            }
            e[..n].copy_from_slice(src);
            e[n] = k as u32;
            out.set_coeff(&e, v);
        }
    }
    out
}

/// Bulk metric from `y`-coefficient matrices `c^(0), c^(1), ...`.
fn assemble(coeffs: &[JetMatrix], epsilon: f64, order: usize) -> BulkChartMetric {
    let n = coeffs[0].dim();
    let base = JetMatrix::from_fn(n, |a, b| {
        let col: Vec<&Jet> = coeffs.iter().map(|c| c.get(a, b)).collect();
        stack_y(&col, order)
    });
    BulkChartMetric {
        base,
        epsilon,
        phi: Jet::one(n + 1, order),
    }
}

/// Constraint components on the slice: `(Ric - f g)_iy` for each `i` and
/// `(G + lambda g)_yy`, as jets in `x`.
fn constraint_jets(bulk: &BulkChartMetric, lambda: f64) -> Result<Vec<Jet>, GeometryError> {
    let g = bulk.to_chart_metric()?;
    let n = bulk.n();
    let p = einstein_residual(&g, lambda)?;
    let fe = field_equation_residual(&g, &StressEnergy::vacuum(n + 1, g.order()), lambda)?;
    let mut out: Vec<Jet> = (0..n).map(|i| p.get(i, n).restrict_last()).collect();
    out.push(fe.get(n, n).restrict_last());
    Ok(out)
}

struct ConstraintProblem<'a> {
    seed: &'a SeedMetric,
    lambda: f64,
    epsilon: f64,
    order: usize,
    g1: JetMatrix,
    template: Jet,
}

impl<'a> ConstraintProblem<'a> {
    fn new(seed: &'a SeedMetric, lambda: f64, epsilon: f64, order: usize) -> Self {
        let g1 = seed.g.components().truncate(order - 1);
        let template = Jet::zero(seed.n(), order - 1);
        Self {
            seed,
            lambda,
            epsilon,
            order,
            g1,
            template,
        }
    }

    fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.seed.n();
        (0..n).flat_map(|a| (a..n).map(move |b| (a, b))).collect()
    }

    fn unknowns(&self) -> usize {
        1 + self.pairs().len() * self.template.len()
    }

    /// `c^(1) = 2 (lambda0 g + s)`.
    fn c1(&self, u: &[f64]) -> JetMatrix {
        let n = self.seed.n();
        let len = self.template.len();
        let pairs = self.pairs();
        let mut s = vec![self.template.clone(); n * n];
        for (p, &(a, b)) in pairs.iter().enumerate() {
            let mut j = self.template.clone();
            j.coeffs_mut()
                .copy_from_slice(&u[1 + p * len..1 + (p + 1) * len]);
            s[a * n + b] = j.clone();
            s[b * n + a] = j;
        }
        JetMatrix::from_fn(n, |a, b| {
            (&self.g1.get(a, b).scale(u[0]) + &s[a * n + b]).scale(2.0)
        })
    }

    fn bulk(&self, c1: &JetMatrix) -> BulkChartMetric {
        let c0 = self.seed.g.components().truncate(self.order);
        assemble(&[c0, c1.clone()], self.epsilon, self.order)
    }

    fn residual(&self, u: &[f64]) -> Result<Vec<f64>, GeometryError> {
        let jets = constraint_jets(&self.bulk(&self.c1(u)), self.lambda)?;
        Ok(jets.iter().flat_map(|j| j.coeffs().to_vec()).collect())
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn pinv_solve(j: &DMatrix<f64>, r: &DVector<f64>) -> DVector<f64> {
    let svd = j.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = (PINV_RTOL * smax).max(f64::MIN_POSITIVE);
    svd.solve(r, eps).expect("both factors computed")
}

/// Damped Newton iteration with minimum-norm steps on the slice
/// constraints.
pub fn initial_data_solve(
    seed: &SeedMetric,
    lambda: f64,
    epsilon: f64,
    order: usize,
) -> Result<InitialData, EmbedError> {
    check_inputs(seed, lambda, epsilon, order)?;
    let n = seed.n();
    let prob = ConstraintProblem::new(seed, lambda, epsilon, order);
    let m = prob.unknowns();
    let mut u = vec![0.0; m];

    let lambda0_sq = if n >= 2 {
        let ric = ricci_of(&seed.g)?;
        let r0 = scalar_curvature(&seed.g, &ric)?.constant_term();
        (r0 - 2.0 * lambda) / (epsilon * (n * (n - 1)) as f64)
    } else {
        0.0
    };
    if lambda0_sq > 1e-14 {
        u[0] = lambda0_sq.sqrt();
    } else if lambda0_sq < -1e-14 {
        // no umbilic solution; start off the degenerate point
        let mut rng = ChaCha8Rng::seed_from_u64(0xc0ffee);
        for x in u.iter_mut().skip(1) {
            *x = rng.gen_range(-0.1..0.1);
        }
    }

    let mut r = prob.residual(&u)?;
    let mut norm = inf_norm(&r);
    let mut iterations = 0;
    while norm > NEWTON_TARGET && iterations < NEWTON_MAX_ITER {
        iterations += 1;
        // the constraint map is quadratic in u, so central differences are exact
        let mut jac = DMatrix::zeros(r.len(), m);
        for c in 0..m {
            let mut up = u.clone();
            let mut um = u.clone();
            up[c] += JACOBIAN_STEP;
            um[c] -= JACOBIAN_STEP;
            let rp = prob.residual(&up)?;
            let rm = prob.residual(&um)?;
            for (row, (a, b)) in rp.iter().zip(&rm).enumerate() {
                jac[(row, c)] = (a - b) / (2.0 * JACOBIAN_STEP);
            }
        }
        let step = pinv_solve(&jac, &DVector::from_vec(r.clone()));
        let mut t = 1.0;
        let mut accepted = false;
        while t >= NEWTON_MIN_STEP {
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(x, d)| x - t * d).collect();
            let rt = prob.residual(&trial)?;
            let nt = inf_norm(&rt);
            if nt.is_finite() && nt < norm {
                u = trial;
                r = rt;
                norm = nt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if !(norm <= CONSTRAINT_TOL) {
        return Err(EmbedError::ConstraintSolveFailed {
            best_residual: norm,
            iterations,
        });
    }
    Ok(InitialData {
        c1: prob.c1(&u),
        lambda0: u[0],
        constraint_norm: norm,
        iterations,
    })
}

/// Solves for initial data and extends the seed to order `K`.
pub fn extend_metric(
    seed: &SeedMetric,
    lambda: f64,
    epsilon: f64,
    order: usize,
) -> Result<EmbeddingResult, EmbedError> {
    let initial = initial_data_solve(seed, lambda, epsilon, order)?;
    extend_with_initial_data(seed, lambda, epsilon, order, initial)
}

/// Extends the seed with caller-supplied `c^(1)` (jets in `x` of order at
/// least `K - 1`).
pub fn extend_with_c1(
    seed: &SeedMetric,
    lambda: f64,
    epsilon: f64,
    order: usize,
    c1: JetMatrix,
) -> Result<EmbeddingResult, EmbedError> {
    check_inputs(seed, lambda, epsilon, order)?;
    if c1.dim() != seed.n() {
        return Err(EmbedError::InitialDataShape {
            expected: seed.n(),
            got: c1.dim(),
        });
    }
    let c1 = c1.truncate(order - 1);
    let c0 = seed.g.components().truncate(order);
    let bulk = assemble(&[c0, c1.clone()], epsilon, order);
    let constraint_norm = constraint_jets(&bulk, lambda)?
        .iter()
        .fold(0.0f64, |m, j| m.max(j.max_abs()));
    let initial = InitialData {
        c1,
        lambda0: f64::NAN,
        constraint_norm,
        iterations: 0,
    };
    extend_with_initial_data(seed, lambda, epsilon, order, initial)
}

fn extend_with_initial_data(
    seed: &SeedMetric,
    lambda: f64,
    epsilon: f64,
    order: usize,
    initial: InitialData,
) -> Result<EmbeddingResult, EmbedError> {
    let n = seed.n();
    let mut coeffs = vec![seed.g.components().truncate(order), initial.c1.clone()];
    let breakdown = |k: usize, e: GeometryError| EmbedError::RecursionBreakdown {
        order: k,
        reason: e.to_string(),
    };
    for k in 0..=order - 2 {
        let next_order = order - k - 2;
        coeffs.push(JetMatrix::from_fn(n, |_, _| Jet::zero(n, next_order)));
        let bulk = assemble(&coeffs, epsilon, order);
        let g = bulk.to_chart_metric().map_err(|e| breakdown(k, e))?;
        let res = einstein_residual(&g, lambda).map_err(|e| breakdown(k, e))?;
        let scale = 2.0 * epsilon / ((k + 1) * (k + 2)) as f64;
        let next = JetMatrix::symmetric_from_fn(n, |a, b| {
            y_coefficient(res.get(a, b), k)
                .truncate(next_order)
                .scale(scale)
        });
        if next.entries().any(|j| !j.is_finite()) {
            return Err(EmbedError::RecursionBreakdown {
                order: k,
                reason: "non-finite coefficient".into(),
            });
        }
        *coeffs.last_mut().expect("pushed") = next;
    }
    let bulk = assemble(&coeffs, epsilon, order);
    let g = bulk.to_chart_metric()?;
    let residual_norm = einstein_residual(&g, lambda)?.max_abs();
    Ok(EmbeddingResult {
        seed: seed.clone(),
        bulk,
        lambda,
        order,
        residual_norm,
        constraint_norm: initial.constraint_norm,
        initial,
    })
}

/// Independent check of a finished extension.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmbeddingCertificate {
    /// Largest coefficient gap between the slice and the seed.
    pub slice_deviation: f64,
    pub residual: ResidualNorm,
    /// Largest `(A, y)` residual coefficient on `y = 0`.
    pub constraint_norm: f64,
    /// Largest fiber cross term, plus any gap between `g_yy` and `eps phi^2`.
    pub block_form_deviation: f64,
    pub epsilon: f64,
    pub residual_tolerance: f64,
    pub constraint_tolerance: f64,
    pub passed: bool,
}

impl EmbeddingCertificate {
    pub fn verdict(&self) -> Result<(), EmbedError> {
        if self.passed {
            return Ok(());
        }
        let worst = self
            .residual
            .by_degree
            .iter()
            .position(|&v| !(v <= self.residual_tolerance));
        Err(EmbedError::CertificationFailed(format!(
            "slice deviation {:e}, residual {:e} (first failing degree {:?}), constraints {:e}, block form {:e}",
            self.slice_deviation, self.residual.max, worst, self.constraint_norm, self.block_form_deviation
        )))
    }
}

/// Recomputes every claim from the finished bulk metric alone.
pub fn certify(result: &EmbeddingResult) -> EmbeddingCertificate {
    let n = result.bulk.n();
    let slice = result.bulk.slice();
    let seed = result.seed.g.components().truncate(slice.order());
    let slice_deviation = slice.zip_with(&seed, |a, b| a - b).max_abs();
    let bad = |msg: String| EmbeddingCertificate {
        slice_deviation,
        residual: ResidualNorm {
            verifiable_degree: 0,
            by_degree: vec![f64::INFINITY],
            max: f64::INFINITY,
        },
        constraint_norm: f64::INFINITY,
        block_form_deviation: if msg.is_empty() { 0.0 } else { f64::INFINITY },
        epsilon: result.bulk.epsilon,
        residual_tolerance: RESIDUAL_TOL,
        constraint_tolerance: CONSTRAINT_TOL,
        passed: false,
    };
    let g = match result.bulk.to_chart_metric() {
        Ok(g) => g,
        Err(e) => return bad(e.to_string()),
    };
    let res = match einstein_residual(&g, result.lambda) {
        Ok(r) => r,
        Err(e) => return bad(e.to_string()),
    };
    let residual = ResidualNorm::of(&res);
    let constraint_norm = (0..=n)
        .map(|a| res.get(a, n).restrict_last().max_abs())
        .fold(0.0, f64::max);
    let mut block_form_deviation = (&g.get(n, n).truncate(g.order())
        - &result.bulk.fiber_component().truncate(g.order()))
        .max_abs();
    for i in 0..n {
        block_form_deviation = block_form_deviation.max(g.get(i, n).max_abs());
    }
    let passed = slice_deviation == 0.0
        && residual.max <= RESIDUAL_TOL
        && constraint_norm <= CONSTRAINT_TOL
        && block_form_deviation == 0.0
        && (result.bulk.epsilon == 1.0 || result.bulk.epsilon == -1.0);
    EmbeddingCertificate {
        slice_deviation,
        residual,
        constraint_norm,
        block_form_deviation,
        epsilon: result.bulk.epsilon,
        residual_tolerance: RESIDUAL_TOL,
        constraint_tolerance: CONSTRAINT_TOL,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn flat(n: usize, order: usize) -> SeedMetric {
        SeedMetric::new(ChartMetric::euclidean(n, order))
    }

    fn sphere(order: usize) -> SeedMetric {
        let rows = vec![
            vec!["1".to_string(), "0".to_string()],
            vec!["0".to_string(), "sin(x1)^2".to_string()],
        ];
        SeedMetric::new(ChartMetric::from_exprs(&rows, &[FRAC_PI_2, 0.0], order).unwrap())
    }

    #[test]
    fn flat_line_extends_flat() {
        let r = extend_metric(&flat(1, 6), 0.0, 1.0, 6).unwrap();
        assert_eq!(r.initial.c1.max_abs(), 0.0);
        assert_eq!(r.residual_norm, 0.0);
        let g = r.bulk.to_chart_metric().unwrap();
        assert_eq!(g, ChartMetric::euclidean(2, 6));
        let c = certify(&r);
        assert!(c.passed);
        assert_eq!(c.slice_deviation, 0.0);
        assert_eq!(c.residual.max, 0.0);
    }

    #[test]
    fn refuses_lambda_in_bulk_dimension_two() {
        assert_eq!(
            extend_metric(&flat(1, 4), 1.0, 1.0, 4),
            Err(EmbedError::DimensionTwoWithNonzeroLambda { lambda: 1.0 })
        );
    }

    #[test]
    fn input_checks() {
        assert_eq!(
            extend_metric(&flat(2, 4), 0.0, 1.0, 1),
            Err(EmbedError::OrderTooLow(1))
        );
        assert_eq!(
            extend_metric(&flat(2, 4), 0.0, 0.5, 4),
            Err(EmbedError::BadEpsilon(0.5))
        );
        assert_eq!(
            extend_metric(&flat(2, 3), 0.0, 1.0, 4),
            Err(EmbedError::SeedOrder { have: 3, need: 4 })
        );
    }

    #[test]
    fn hyperbolic_ansatz_reproduces_exponential_family() {
        let h = 0.5;
        let seed = flat(2, 6);
        let c1 = seed.g.components().map(|j| j.truncate(5).scale(2.0 * h));
        let r = extend_with_c1(&seed, -h * h, 1.0, 6, c1).unwrap();
        assert!(r.constraint_norm < 1e-14);
        // e^{2hy} = sum (2h)^k y^k / k!
        let mut fact = 1.0;
        for k in 0..=6u32 {
            if k > 0 {
                fact *= k as f64;
            }
            let want = (2.0 * h).powi(k as i32) / fact;
            for a in 0..2 {
                let got = r.bulk.base.get(a, a).coeff(&[0, 0, k]);
                assert!((got - want).abs() < 1e-12, "k = {k}: {got} vs {want}");
            }
            assert_eq!(r.bulk.base.get(0, 1).coeff(&[0, 0, k]), 0.0);
        }
        assert!(certify(&r).passed);
    }

    #[test]
    fn solver_finds_umbilic_data_for_flat_hyperbolic_seed() {
        let d = initial_data_solve(&flat(2, 6), -0.25, 1.0, 6).unwrap();
        assert!((d.lambda0 - 0.5).abs() < 1e-12);
        assert!(d.constraint_norm <= CONSTRAINT_TOL);
    }

    #[test]
    fn sphere_seed_with_unit_lambda() {
        let r = extend_metric(&sphere(5), 1.0, 1.0, 5).unwrap();
        let c = certify(&r);
        assert!(c.passed, "{c:?}");
        assert_eq!(c.residual.verifiable_degree, 3);
        assert!(c.residual.through(3) <= 1e-7);
    }

    #[test]
    fn flat_seed_positive_lambda_needs_traceless_data() {
        let r = extend_metric(&flat(2, 4), 0.5, 1.0, 4).unwrap();
        assert!(r.initial.iterations > 0);
        let c = certify(&r);
        assert!(c.passed, "{c:?}");
    }

    #[test]
    fn corrupted_second_coefficient_is_flagged() {
        let mut r = extend_metric(&flat(2, 5), 0.0, 1.0, 5).unwrap();
        let mut j = r.bulk.base.get(0, 0).clone();
        j.set_coeff(&[0, 0, 2], 0.3);
        r.bulk.base.set(0, 0, j);
        let c = certify(&r);
        assert!(!c.passed);
        assert!(c.residual.by_degree[0] > 0.1);
        assert!(matches!(
            c.verdict(),
            Err(EmbedError::CertificationFailed(_))
        ));
    }

    #[test]
    fn lorentzian_fiber() {
        let r = extend_metric(&flat(2, 4), -0.25, -1.0, 4).unwrap();
        let c = certify(&r);
        assert!(c.passed, "{c:?}");
        assert_eq!(c.epsilon, -1.0);
    }
}
