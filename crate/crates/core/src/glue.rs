//! Global gluing over a product bulk `E = M x F`.
//!
//! The glued metric is `pi^* g_M + (sum_i f_i psi_i Theta_i) dy^2`. Its
//! fiber component is matched, chart by chart, against per-chart targets
//! `Phi_j` by solving a linear system in the unknown `psi` functions. The
//! functional equations are discretized: every `psi` is a polynomial in its
//! own coordinates, and each equation is imposed on the Taylor coefficients
//! (up to `coeff_order`) at a fixed set of sample points.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::bell::{Atlas, AtlasCover, BellFunction, CoverError};
use crate::embed::{certify, extend_metric, EmbedError, EmbeddingCertificate, SeedMetric};
use crate::expr::{self, Expr, ExprError};
use crate::geometry::{einstein_residual, ChartMetric, GeometryError, JetMatrix};
use crate::jet::{term_count, Jet};

/// Bound on `|A psi - Phi|` for an accepted solve.
pub const SOLVE_TOL: f64 = 1e-8;
/// Singular values below `RANK_RTOL * sigma_max` count as zero.
pub const RANK_RTOL: f64 = 1e-10;
/// Bound on the glued Einstein residual at sample points.
pub const GLUE_RESIDUAL_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GlueError {
    #[error("targets are inconsistent: least-squares residual {residual:e}")]
    InconsistentTargets { residual: f64 },
    #[error("solution needs singular values below {cutoff:e} (numerical rank {rank} of {cols}); residual at cutoff {residual:e}")]
    RankDeficiencyBeyondTolerance {
        rank: usize,
        cols: usize,
        cutoff: f64,
        residual: f64,
    },
    #[error("bell sum vanishes at {point:?}")]
    DegenerateFiberComponent { point: Vec<f64> },
    #[error("point {point:?} is not in chart {chart}")]
    PointOutsideChart { chart: usize, point: Vec<f64> },
    #[error("the overlap system has no rows")]
    EmptySystem,
    #[error("product bulk needs a fiber axis")]
    NotAProduct,
    #[error("base metric must be {dim}x{dim}")]
    BaseMetricShape { dim: usize },
    #[error("chart {chart}: {source}")]
    Embedding { chart: usize, source: EmbedError },
    #[error(transparent)]
    Cover(#[from] CoverError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// `M`, the number of equations across all subset systems, evaluated from
/// the closed form `2n + 5 + sum_{t=2}^{n} (n+3-t)...(n+2) / t!`.
pub fn count_equations(n: u32) -> u64 {
    assert!(n >= 1);
    let n = n as u128;
    let mut total = 2 * n + 5;
    for t in 2..=n {
        let mut num: u128 = 1;
        for f in (n + 3 - t)..=(n + 2) {
            num *= f;
        }
        let fact: u128 = (1..=t).product();
        total += num / fact;
    }
    total as u64
}

/// Metric on the base, as formulas in the global base coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseMetric {
    pub rows: Vec<Vec<String>>,
    parsed: Vec<Vec<Expr>>,
}

impl BaseMetric {
    pub fn new(rows: Vec<Vec<String>>) -> Result<Self, GlueError> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(GlueError::BaseMetricShape { dim });
        }
        let parsed = rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|s| expr::parse(s, dim))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { rows, parsed })
    }

    pub fn flat(dim: usize) -> Self {
        let rows = (0..dim)
            .map(|a| {
                (0..dim)
                    .map(|b| if a == b { "1" } else { "0" }.to_string())
                    .collect()
            })
            .collect();
        Self::new(rows).expect("constant formulas parse")
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Component jets about a base point.
    pub fn jets_at(&self, point: &[f64], order: usize) -> Result<ChartMetric, GlueError> {
        let jets = self
            .parsed
            .iter()
            .map(|r| {
                r.iter()
                    .map(|e| e.expand(point, order))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ChartMetric::from_rows(jets)?)
    }
}

/// `E = M x F` with an interval fiber as the last coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductBulk {
    pub atlas: Atlas,
    pub base_metric: BaseMetric,
}

impl ProductBulk {
    pub fn new(atlas: Atlas, base_metric: BaseMetric) -> Result<Self, GlueError> {
        let fiber = atlas.fiber_axis.ok_or(GlueError::NotAProduct)?;
        if fiber + 1 != atlas.dim() || base_metric.dim() != fiber {
            return Err(GlueError::BaseMetricShape { dim: fiber });
        }
        Ok(Self { atlas, base_metric })
    }

    /// Circle (two arcs) times an interval, flat base.
    pub fn circle_interval() -> Self {
        Self::new(
            Atlas::catalog("circle-x-interval").expect("catalog"),
            BaseMetric::flat(1),
        )
        .expect("catalog product")
    }

    /// Flat torus chart (2x2 grid) times an interval.
    pub fn torus_chart_interval() -> Self {
        Self::new(
            Atlas::catalog("torus-chart-x-interval").expect("catalog"),
            BaseMetric::flat(2),
        )
        .expect("catalog product")
    }

    /// Base dimension `n`.
    pub fn n(&self) -> usize {
        self.atlas.dim() - 1
    }

    /// Projection `pi` onto base coordinates.
    pub fn project<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[..self.n()]
    }
}

/// Fiber-fiber target of one chart.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartTarget {
    pub chart: usize,
    /// `Phi_j` about the chart center, in chart coordinates.
    pub phi: Jet,
    pub certificate: EmbeddingCertificate,
}

impl ChartTarget {
    /// `Phi_j` re-expanded about chart coordinates `x`.
    pub fn at(&self, x: &[f64], order: usize) -> Jet {
        self.phi.shift(x).truncate(order)
    }
}

/// Runs a certified local extension on every chart and reads off its
/// fiber component.
pub fn target_components(
    bulk: &ProductBulk,
    lambda: f64,
    epsilon: f64,
    order: usize,
) -> Result<Vec<ChartTarget>, GlueError> {
    let n = bulk.n();
    (0..bulk.atlas.charts.len())
        .map(|j| {
            let center = &bulk.atlas.charts[j].center[..n];
            let seed = SeedMetric::new(bulk.base_metric.jets_at(center, order)?);
            let wrap = |source| GlueError::Embedding { chart: j, source };
            let result = extend_metric(&seed, lambda, epsilon, order).map_err(wrap)?;
            let certificate = certify(&result);
            certificate.verdict().map_err(wrap)?;
            Ok(ChartTarget {
                chart: j,
                phi: result.bulk.fiber_component(),
                certificate,
            })
        })
        .collect()
}

/// Row label: which sample, chart and Taylor coefficient an equation
/// imposes, and the subset system it belongs to.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RowTag {
    pub sample: usize,
    pub chart: usize,
    pub exponent: Vec<u32>,
    /// `k` in `(Sigma k)`: `n + 3 - |charts containing the sample|`.
    pub pattern: usize,
}

/// Column label: bell index and monomial of its `psi`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ColumnTag {
    pub bell: usize,
    pub exponent: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OverlapSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub rows: Vec<RowTag>,
    pub columns: Vec<ColumnTag>,
    pub samples: Vec<Vec<f64>>,
    /// Polynomial degree of each `psi`.
    pub psi_degree: usize,
    pub coeff_order: usize,
    pub n_systems: usize,
    pub equation_count: u64,
}

impl OverlapSystem {
    /// Row counts per `(Sigma k)` pattern.
    pub fn pattern_counts(&self) -> BTreeMap<usize, usize> {
        let mut out = BTreeMap::new();
        for r in &self.rows {
            *out.entry(r.pattern).or_insert(0) += 1;
        }
        out
    }
}

/// Monomial exponents of total degree `<= degree` in `nvars` variables,
/// in jet layout order.
fn monomials(nvars: usize, degree: usize) -> Vec<Vec<u32>> {
    let j = Jet::zero(nvars, degree);
    (0..j.len()).map(|i| j.exponents_at(i).to_vec()).collect()
}

/// Jets of `(u - c) / r` at a point, in chart variables, where
/// `u = A x + b` are the bell's system coordinates.
fn scaled_system_jets(
    cover: &AtlasCover,
    bell: &BellFunction,
    p: &[f64],
    order: usize,
) -> Vec<Jet> {
    let u = cover.system_coords(bell, p).expect("bell positive at p");
    let a = &cover.classes[bell.class].systems[bell.system].linear;
    let d = u.len();
    (0..d)
        .map(|k| {
            let mut j = Jet::constant(d, order, (u[k] - bell.center[k]) / bell.radius);
            if order >= 1 {
                for v in 0..d {
                    let mut e = vec![0u32; d];
                    e[v] = 1;
                    j.set_coeff(&e, a[(k, v)] / bell.radius);
                }
            }
            j
        })
        .collect()
}

/// `Theta = (d(x^{n+1} o pr_F) / d y^{n+1})^2` for a bell's system.
fn theta(cover: &AtlasCover, bell: &BellFunction) -> f64 {
    let f = cover.atlas.fiber_axis.expect("product bulk");
    let a = cover.classes[bell.class].systems[bell.system].linear[(f, f)];
    a * a
}

/// Discretizes `Phi_j = sum f psi Theta` at every sample point and every
/// chart containing it. The `psi` degree is the smallest value
/// `>= coeff_order` that leaves more unknowns than rows.
pub fn build_system(
    cover: &AtlasCover,
    bells: &[BellFunction],
    targets: &[ChartTarget],
    samples: &[Vec<f64>],
    coeff_order: usize,
) -> Result<OverlapSystem, GlueError> {
    let atlas = &cover.atlas;
    let dim = atlas.dim();
    if atlas.fiber_axis.is_none() {
        return Err(GlueError::NotAProduct);
    }
    let n = dim - 1;
    let per_point = term_count(dim, coeff_order);
    let containing: Vec<Vec<usize>> = samples.iter().map(|p| atlas.charts_containing(p)).collect();
    for (p, s) in samples.iter().zip(&containing) {
        if s.is_empty() {
            return Err(CoverError::CoverageGap { point: p.clone() }.into());
        }
    }
    let n_rows: usize = containing.iter().map(|s| s.len() * per_point).sum();
    if n_rows == 0 {
        return Err(GlueError::EmptySystem);
    }
    let mut psi_degree = coeff_order;
    while bells.len() * term_count(dim, psi_degree) <= n_rows {
        psi_degree += 1;
    }
    let basis = monomials(dim, psi_degree);
    let out_exps = monomials(dim, coeff_order);
    let n_cols = bells.len() * basis.len();

    let mut matrix = DMatrix::zeros(n_rows, n_cols);
    let mut rhs = DVector::zeros(n_rows);
    let mut rows = Vec::with_capacity(n_rows);
    let mut row = 0;
    for (s, p) in samples.iter().enumerate() {
        // entries depend on the point only, since transitions are translations
        let mut block = DMatrix::zeros(per_point, n_cols);
        for (b, bell) in bells.iter().enumerate() {
            let fj = cover.bell_jet_in_chart(bell, p, coeff_order);
            if fj.max_abs() == 0.0 {
                continue;
            }
            let fj = fj.scale(theta(cover, bell));
            let lin = scaled_system_jets(cover, bell, p, coeff_order);
            let powers: Vec<Vec<Jet>> = lin
                .iter()
                .map(|l| {
                    let mut v = vec![Jet::one(dim, coeff_order)];
                    for k in 1..=psi_degree {
                        let next = &v[k - 1] * l;
                        v.push(next);
                    }
                    v
                })
                .collect();
            for (c, beta) in basis.iter().enumerate() {
                let mut m = fj.clone();
                for (v, &k) in beta.iter().enumerate() {
                    if k > 0 {
                        m = &m * &powers[v][k as usize];
                    }
                }
                for (r, coeff) in m.coeffs().iter().enumerate() {
                    block[(r, b * basis.len() + c)] = *coeff;
                }
            }
        }
        let pattern = n + 3 - containing[s].len().min(n + 2);
        for &j in &containing[s] {
            let x = atlas.local_coords(j, p).expect("contained");
            let target = targets[j].at(&x, coeff_order);
            for (r, e) in out_exps.iter().enumerate() {
                matrix.row_mut(row).copy_from(&block.row(r));
                rhs[row] = target.coeff(e);
                rows.push(RowTag {
                    sample: s,
                    chart: j,
                    exponent: e.clone(),
                    pattern,
                });
                row += 1;
            }
        }
    }
    let columns = bells
        .iter()
        .enumerate()
        .flat_map(|(b, _)| {
            basis.iter().map(move |e| ColumnTag {
                bell: b,
                exponent: e.clone(),
            })
        })
        .collect();
    Ok(OverlapSystem {
        matrix,
        rhs,
        rows,
        columns,
        samples: samples.to_vec(),
        psi_degree,
        coeff_order,
        n_systems: cover.n_systems,
        equation_count: count_equations(n as u32),
    })
}

/// Minimum-norm `psi` coefficients.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PsiSolution {
    pub degree: usize,
    /// Coefficients per bell, in monomial layout order.
    pub coeffs: Vec<Vec<f64>>,
    pub residual: f64,
    pub rank: usize,
    pub rows: usize,
    pub unknowns: usize,
    pub sigma_max: f64,
    /// Smallest singular value kept.
    pub sigma_min_kept: f64,
}

fn residual_inf(a: &DMatrix<f64>, x: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a * x - b).amax()
}

pub fn solve_psi(system: &OverlapSystem) -> Result<PsiSolution, GlueError> {
    let a = &system.matrix;
    let b = &system.rhs;
    let scale = b.amax().max(1.0);
    let svd = a.clone().svd(true, true);
    let sigma = &svd.singular_values;
    let sigma_max = sigma.max();
    let cutoff = RANK_RTOL * sigma_max;
    let rank = sigma.iter().filter(|&&s| s > cutoff).count();
    let x = svd.solve(b, cutoff).expect("factors computed");
    let residual = residual_inf(a, &x, b);
    if !(residual <= SOLVE_TOL * scale) {
        let floor = f64::EPSILON * sigma_max * a.nrows().max(a.ncols()) as f64;
        let x_all = svd.solve(b, floor).expect("factors computed");
        let r_all = residual_inf(a, &x_all, b);
        if r_all <= SOLVE_TOL * scale {
            return Err(GlueError::RankDeficiencyBeyondTolerance {
                rank,
                cols: a.ncols(),
                cutoff,
                residual,
            });
        }
        return Err(GlueError::InconsistentTargets { residual: r_all });
    }
    let per = term_count(dim_of(system), system.psi_degree);
    let coeffs = x.as_slice().chunks(per).map(|c| c.to_vec()).collect();
    let sigma_min_kept = sigma
        .iter()
        .copied()
        .filter(|&s| s > cutoff)
        .fold(f64::INFINITY, f64::min);
    Ok(PsiSolution {
        degree: system.psi_degree,
        coeffs,
        residual,
        rank,
        rows: a.nrows(),
        unknowns: a.ncols(),
        sigma_max,
        sigma_min_kept,
    })
}

fn dim_of(system: &OverlapSystem) -> usize {
    system
        .columns
        .first()
        .map(|c| c.exponent.len())
        .unwrap_or(1)
}

/// Everything needed to evaluate the glued metric anywhere.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalMetricSpec {
    pub bulk: ProductBulk,
    pub cover: AtlasCover,
    pub bells: Vec<BellFunction>,
    pub psi: PsiSolution,
}

impl GlobalMetricSpec {
    /// `sum f psi Theta` as a jet in chart variables about `p`.
    pub fn fiber_component(&self, p: &[f64], order: usize) -> Result<Jet, GlueError> {
        let dim = self.cover.atlas.dim();
        if self.cover.bell_sum(&self.bells, p) <= 0.0 {
            return Err(GlueError::DegenerateFiberComponent { point: p.to_vec() });
        }
        let basis = monomials(dim, self.psi.degree);
        let mut out = Jet::zero(dim, order);
        for (b, bell) in self.bells.iter().enumerate() {
            let fj = self.cover.bell_jet_in_chart(bell, p, order);
            if fj.max_abs() == 0.0 {
                continue;
            }
            let psi_poly = Jet::from_terms(
                dim,
                self.psi.degree,
                basis
                    .iter()
                    .zip(&self.psi.coeffs[b])
                    .map(|(e, c)| (e.as_slice(), *c)),
            );
            let lin = scaled_system_jets(&self.cover, bell, p, order);
            let psi = psi_poly.substitute(&lin).expect("matching variables");
            out = &out + &(&fj * &psi).scale(theta(&self.cover, bell));
        }
        Ok(out)
    }
}

/// Glued metric about `p` in the coordinates of chart `chart`:
/// `pi^* g_M` in the base block and `sum f psi Theta` in the fiber slot.
pub fn assemble_metric(
    spec: &GlobalMetricSpec,
    chart: usize,
    p: &[f64],
    order: usize,
) -> Result<ChartMetric, GlueError> {
    if spec.cover.atlas.local_coords(chart, p).is_none() {
        return Err(GlueError::PointOutsideChart {
            chart,
            point: p.to_vec(),
        });
    }
    let n = spec.bulk.n();
    let gyy = spec.fiber_component(p, order)?;
    let base = spec.bulk.base_metric.jets_at(spec.bulk.project(p), order)?;
    let m = JetMatrix::from_fn(n + 1, |a, b| {
        if a < n && b < n {
            base.get(a, b).extend_vars(n + 1)
        } else if a == n && b == n {
            gyy.clone()
        } else {
            Jet::zero(n + 1, order)
        }
    });
    ChartMetric::new(m).map_err(|e| match e {
        GeometryError::SingularMetric { .. } => {
            GlueError::DegenerateFiberComponent { point: p.to_vec() }
        }
        other => other.into(),
    })
}

/// Base block of the glued metric on `y = 0`, about the base point `x`.
pub fn restrict_to_base(
    spec: &GlobalMetricSpec,
    chart: usize,
    x: &[f64],
    order: usize,
) -> Result<ChartMetric, GlueError> {
    let mut p = x.to_vec();
    p.push(0.0);
    let g = assemble_metric(spec, chart, &p, order)?;
    let n = spec.bulk.n();
    let block = JetMatrix::from_fn(n, |a, b| g.get(a, b).restrict_last());
    Ok(ChartMetric::new(block)?)
}

/// Checks on a solved glue problem.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GlueCertificate {
    pub equation_count: u64,
    pub n_systems: usize,
    pub rows: usize,
    pub unknowns: usize,
    pub rank: usize,
    pub psi_degree: usize,
    pub solve_residual: f64,
    /// Largest Einstein residual of the glued metric over overlap samples.
    pub einstein_residual: f64,
    pub overlap_points: usize,
    /// Largest coefficient gap between the restricted metric and `g_M`.
    pub isometry_deviation: f64,
    pub pattern_counts: BTreeMap<usize, usize>,
    pub solve_tolerance: f64,
    pub residual_tolerance: f64,
    pub passed: bool,
}

/// Evaluates the glued metric at every sample lying in two or more charts,
/// in each chart containing it. The metric is taken to the same order the
/// system matched, so the residual is checked at degree 0.
pub fn certify_glue(
    spec: &GlobalMetricSpec,
    system: &OverlapSystem,
    lambda: f64,
) -> Result<GlueCertificate, GlueError> {
    let atlas = &spec.cover.atlas;
    let order = system.coeff_order.max(2);
    let mut worst = 0.0f64;
    let mut iso = 0.0f64;
    let mut count = 0;
    for p in &system.samples {
        let charts = atlas.charts_containing(p);
        for &j in &charts {
            let base = spec.bulk.base_metric.jets_at(spec.bulk.project(p), order)?;
            let restricted = restrict_to_base(spec, j, spec.bulk.project(p), order)?;
            iso = iso.max(
                restricted
                    .components()
                    .zip_with(base.components(), |a, b| a - b)
                    .max_abs(),
            );
            if charts.len() < 2 {
                continue;
            }
            let g = assemble_metric(spec, j, p, order)?;
            let res = einstein_residual(&g, lambda)?;
            worst = worst.max(
                res.entries()
                    .fold(0.0, |m, r| m.max(r.constant_term().abs())),
            );
        }
        if charts.len() >= 2 {
            count += 1;
        }
    }
    let passed = spec.psi.residual <= SOLVE_TOL && worst <= GLUE_RESIDUAL_TOL && iso == 0.0;
    Ok(GlueCertificate {
        equation_count: system.equation_count,
        n_systems: system.n_systems,
        rows: spec.psi.rows,
        unknowns: spec.psi.unknowns,
        rank: spec.psi.rank,
        psi_degree: spec.psi.degree,
        solve_residual: spec.psi.residual,
        einstein_residual: worst,
        overlap_points: count,
        isometry_deviation: iso,
        pattern_counts: system.pattern_counts(),
        solve_tolerance: SOLVE_TOL,
        residual_tolerance: GLUE_RESIDUAL_TOL,
        passed,
    })
}

/// Full pipeline: cover with `N = M + 1` systems per class, targets,
/// system, solve, certificate.
pub struct GluePipeline {
    pub spec: GlobalMetricSpec,
    pub system: OverlapSystem,
    pub targets: Vec<ChartTarget>,
    pub certificate: GlueCertificate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlueOptions {
    pub lambda: f64,
    pub epsilon: f64,
    pub order: usize,
    pub coeff_order: usize,
    pub per_pair: usize,
    pub per_chart: usize,
    /// Overrides `N = M + 1`.
    pub n_systems: Option<usize>,
    pub seed: u64,
}

impl Default for GlueOptions {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            epsilon: 1.0,
            order: 4,
            coeff_order: 2,
            per_pair: 8,
            per_chart: 4,
            n_systems: None,
            seed: 2024,
        }
    }
}

pub fn run_glue(bulk: &ProductBulk, opts: &GlueOptions) -> Result<GluePipeline, GlueError> {
    let n = bulk.n() as u32;
    let n_systems = opts.n_systems.unwrap_or(count_equations(n) as usize + 1);
    let grid = bulk.atlas.sample_grid(12);
    let cover = crate::bell::build_cover(&bulk.atlas, n_systems, &grid, opts.seed)?;
    let bells = cover.bells();
    let targets = target_components(bulk, opts.lambda, opts.epsilon, opts.order)?;
    let samples = cover.overlap_samples(opts.per_pair, opts.per_chart);
    let system = build_system(&cover, &bells, &targets, &samples, opts.coeff_order)?;
    let psi = solve_psi(&system)?;
    let spec = GlobalMetricSpec {
        bulk: bulk.clone(),
        cover,
        bells,
        psi,
    };
    let certificate = certify_glue(&spec, &system, opts.lambda)?;
    Ok(GluePipeline {
        spec,
        system,
        targets,
        certificate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equation_counts() {
        assert_eq!(count_equations(1), 7);
        assert_eq!(count_equations(2), 15);
        assert_eq!(count_equations(3), 31);
    }

    #[test]
    fn flat_targets_are_one() {
        let bulk = ProductBulk::circle_interval();
        let t = target_components(&bulk, 0.0, 1.0, 4).unwrap();
        assert_eq!(t.len(), 2);
        for c in &t {
            assert_eq!(c.phi, Jet::one(2, 4));
            assert!(c.certificate.passed);
        }
        let t = target_components(&ProductBulk::torus_chart_interval(), -0.25, 1.0, 4).unwrap();
        assert!(t.iter().all(|c| c.phi.approx_eq(&Jet::one(3, 4), 0.0)));
    }

    #[test]
    fn single_chart_single_point() {
        let atlas = Atlas::flat_patch(1, 1.0).times_interval(1.0, 0.3);
        let bulk = ProductBulk::new(atlas.clone(), BaseMetric::flat(1)).unwrap();
        let cover = crate::bell::build_cover(&atlas, 2, &atlas.sample_grid(4), 5).unwrap();
        let bells = cover.bells();
        let targets = target_components(&bulk, 0.0, 1.0, 2).unwrap();
        let p = vec![vec![0.1, 0.05]];
        let sys = build_system(&cover, &bells, &targets, &p, 0).unwrap();
        assert_eq!(sys.rows.len(), 1);
        assert_eq!(sys.columns.len(), 2);
        let sol = solve_psi(&sys).unwrap();
        assert!(sol.residual < 1e-14);
        let spec = GlobalMetricSpec {
            bulk,
            cover,
            bells,
            psi: sol,
        };
        let g = spec.fiber_component(&p[0], 0).unwrap();
        assert!((g.constant_term() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn circle_interval_pipeline() {
        let out = run_glue(&ProductBulk::circle_interval(), &GlueOptions::default()).unwrap();
        let c = &out.certificate;
        assert_eq!(c.equation_count, 7);
        assert_eq!(c.n_systems, 8);
        assert!(c.unknowns > c.rows);
        assert!(c.passed, "{c:?}");
    }

    #[test]
    fn torus_chart_interval_pipeline() {
        let out = run_glue(
            &ProductBulk::torus_chart_interval(),
            &GlueOptions::default(),
        )
        .unwrap();
        let c = &out.certificate;
        assert_eq!(c.equation_count, 15);
        assert_eq!(c.n_systems, 16);
        assert!(c.unknowns > c.rows);
        assert!(c.passed, "{c:?}");
    }

    #[test]
    fn corrupted_targets_are_inconsistent() {
        let out = run_glue(&ProductBulk::circle_interval(), &GlueOptions::default()).unwrap();
        let mut sys = out.system.clone();
        // same point, two charts, two different values
        let dup =
            sys.rows
                .iter()
                .enumerate()
                .find(|(i, r)| {
                    sys.rows.iter().skip(i + 1).any(|s| {
                        s.sample == r.sample && s.exponent == r.exponent && s.chart != r.chart
                    })
                })
                .map(|(i, _)| i)
                .unwrap();
        sys.rhs[dup] += 0.5;
        assert!(matches!(
            solve_psi(&sys),
            Err(GlueError::InconsistentTargets { .. })
        ));
    }

    #[test]
    fn outside_all_bells_is_degenerate() {
        let out = run_glue(&ProductBulk::circle_interval(), &GlueOptions::default()).unwrap();
        let far = vec![0.0, 1.95];
        assert!(matches!(
            assemble_metric(&out.spec, 0, &far, 2),
            Err(GlueError::DegenerateFiberComponent { .. })
        ));
        assert!(matches!(
            assemble_metric(&out.spec, 0, &[3.0, 0.0], 2),
            Err(GlueError::PointOutsideChart { .. })
        ));
    }
}
