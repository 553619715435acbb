//! Bell functions and the finite chart covers they live on.
//!
//! A manifold is a finite list of box charts in a global parameter space
//! with optional periodic axes; transition maps between charts are
//! translations. Each chart carries one class of `N` coordinate systems,
//! realized as expanding affine maps of the chart coordinates, and every
//! system carries a bell supported on a ball inside the chart.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::linear_jets;
use crate::jet::Jet;

/// Ratio `r / R` between a bell radius and the largest ball fitting in its
/// chart.
pub const RADIUS_FRACTION: f64 = 0.9;

/// Directions probed when searching for the largest inscribed ball.
const RADIUS_DIRECTIONS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BellError {
    #[error("expansion point at distance {distance} is outside the open ball of radius {radius}")]
    ExpansionOutsideSupport { distance: f64, radius: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoverError {
    #[error("sample point {point:?} lies in no chart")]
    CoverageGap { point: Vec<f64> },
    #[error("sample point {point:?} lies in {count} charts, bound is {bound}")]
    MultiplicityExceeded {
        point: Vec<f64>,
        count: usize,
        bound: usize,
    },
    #[error("need at least 2 coordinate systems per class, got {0}")]
    TooFewSystems(usize),
    #[error("unknown catalog manifold `{0}`")]
    UnknownManifold(String),
}

/// `exp(1/(|x - c|^2 - r^2))` on the open ball, zero elsewhere.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BellFunction {
    /// Class (and chart) index.
    pub class: usize,
    /// Coordinate system within the class.
    pub system: usize,
    pub center: Vec<f64>,
    pub radius: f64,
}

impl BellFunction {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        assert!(radius > 0.0, "bell radius must be positive");
        Self {
            class: 0,
            system: 0,
            center,
            radius,
        }
    }

    fn dist2(&self, p: &[f64]) -> f64 {
        self.center
            .iter()
            .zip(p)
            .map(|(c, x)| (x - c) * (x - c))
            .sum()
    }
}

pub fn bell_eval(f: &BellFunction, p: &[f64]) -> f64 {
    let q = f.dist2(p) - f.radius * f.radius;
    if q >= 0.0 {
        0.0
    } else {
        (1.0 / q).exp()
    }
}

/// Taylor expansion of the bell about an interior point, in variables
/// `x - about`.
pub fn bell_jet(f: &BellFunction, about: &[f64], order: usize) -> Result<Jet, BellError> {
    let d2 = f.dist2(about);
    if d2 >= f.radius * f.radius {
        return Err(BellError::ExpansionOutsideSupport {
            distance: d2.sqrt(),
            radius: f.radius,
        });
    }
    let n = about.len();
    let mut q = Jet::constant(n, order, -f.radius * f.radius);
    for v in 0..n {
        let u = Jet::coordinate(n, order, v, about[v] - f.center[v]);
        q = &q + &(&u * &u);
    }
    let inv = q
        .reciprocal()
        .map_err(|_| BellError::ExpansionOutsideSupport {
            distance: d2.sqrt(),
            radius: f.radius,
        })?;
    Ok(inv.exp())
}

/// Box chart `|p_k - center_k| < half_width_k` (differences wrapped on
/// periodic axes). Chart coordinates are `p - center`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub id: String,
    pub center: Vec<f64>,
    pub half_widths: Vec<f64>,
}

/// Finite chart list over a parameter space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atlas {
    pub name: String,
    pub periods: Vec<Option<f64>>,
    pub charts: Vec<Chart>,
    /// Region sampled on non-periodic axes; periodic axes use one period.
    pub sample_box: Vec<(f64, f64)>,
    /// Axis of the one-dimensional fiber for product bulks.
    pub fiber_axis: Option<usize>,
}

fn wrap(delta: f64, period: Option<f64>) -> f64 {
    match period {
        Some(p) => delta - p * (delta / p).round(),
        None => delta,
    }
}

impl Atlas {
    pub fn dim(&self) -> usize {
        self.periods.len()
    }

    /// Two arcs of half-width `pi/2 + overlap` centered at `0` and `pi`.
    pub fn circle(overlap: f64) -> Self {
        let h = std::f64::consts::FRAC_PI_2 + overlap;
        let pi = std::f64::consts::PI;
        Self {
            name: "circle".into(),
            periods: vec![Some(2.0 * pi)],
            charts: vec![
                Chart {
                    id: "arc0".into(),
                    center: vec![0.0],
                    half_widths: vec![h],
                },
                Chart {
                    id: "arc1".into(),
                    center: vec![pi],
                    half_widths: vec![h],
                },
            ],
            sample_box: vec![(-pi, pi)],
            fiber_axis: None,
        }
    }

    /// Flat torus with four product charts in a brick layout: two bands in
    /// the second angle, the lower band split at `0, pi`, the upper at
    /// `pi/2, 3pi/2`. Points lie in at most three charts.
    pub fn torus() -> Self {
        let pi = std::f64::consts::PI;
        let h = 2.3;
        let centers = [[0.0, 0.0], [pi, 0.0], [0.5 * pi, pi], [1.5 * pi, pi]];
        Self {
            name: "torus".into(),
            periods: vec![Some(2.0 * pi), Some(2.0 * pi)],
            charts: centers
                .iter()
                .enumerate()
                .map(|(i, c)| Chart {
                    id: format!("brick{i}"),
                    center: c.to_vec(),
                    half_widths: vec![h, h],
                })
                .collect(),
            sample_box: vec![(-pi, pi), (-pi, pi)],
            fiber_axis: None,
        }
    }

    /// Square patch `[-1, 1]^2` of the flat torus, covered by a 2x2 grid of
    /// charts.
    pub fn torus_patch() -> Self {
        let centers = [[-0.5, -0.5], [0.5, -0.5], [-0.5, 0.5], [0.5, 0.5]];
        Self {
            name: "torus-chart".into(),
            periods: vec![None, None],
            charts: centers
                .iter()
                .enumerate()
                .map(|(i, c)| Chart {
                    id: format!("cell{i}"),
                    center: c.to_vec(),
                    half_widths: vec![1.0, 1.0],
                })
                .collect(),
            sample_box: vec![(-1.0, 1.0), (-1.0, 1.0)],
            fiber_axis: None,
        }
    }

    /// One chart around the origin of `R^dim`.
    pub fn flat_patch(dim: usize, half_width: f64) -> Self {
        Self {
            name: format!("R{dim}"),
            periods: vec![None; dim],
            charts: vec![Chart {
                id: "patch".into(),
                center: vec![0.0; dim],
                half_widths: vec![half_width; dim],
            }],
            sample_box: vec![(-0.5 * half_width, 0.5 * half_width); dim],
            fiber_axis: None,
        }
    }

    /// Product with the interval `(-half_width, half_width)`, sampled on
    /// `|y| <= slab`. Every chart becomes (base chart) x (fiber chart).
    pub fn times_interval(&self, half_width: f64, slab: f64) -> Self {
        let mut out = self.clone();
        out.name = format!("{}-x-interval", self.name);
        out.periods.push(None);
        for c in &mut out.charts {
            c.center.push(0.0);
            c.half_widths.push(half_width);
        }
        out.sample_box.push((-slab, slab));
        out.fiber_axis = Some(self.dim());
        out
    }

    /// Catalog manifolds by id.
    pub fn catalog(id: &str) -> Result<Self, CoverError> {
        match id {
            "circle" | "S1" => Ok(Self::circle(0.3)),
            "torus" | "T2" => Ok(Self::torus()),
            "torus-chart" => Ok(Self::torus_patch()),
            "circle-x-interval" => Ok(Self::circle(0.3).times_interval(2.0, 0.3)),
            "torus-chart-x-interval" => Ok(Self::torus_patch().times_interval(1.0, 0.3)),
            other => {
                if let Some(d) = other.strip_prefix('R').and_then(|d| d.parse().ok()) {
                    if (1..=4).contains(&d) {
                        return Ok(Self::flat_patch(d, 1.0));
                    }
                }
                Err(CoverError::UnknownManifold(other.to_string()))
            }
        }
    }

    /// Chart coordinates of a global point, if it lies in the chart.
    pub fn local_coords(&self, chart: usize, p: &[f64]) -> Option<Vec<f64>> {
        let c = &self.charts[chart];
        let mut out = Vec::with_capacity(p.len());
        for k in 0..p.len() {
            let d = wrap(p[k] - c.center[k], self.periods[k]);
            if d.abs() >= c.half_widths[k] {
                return None;
            }
            out.push(d);
        }
        Some(out)
    }

    /// Global point with the given chart coordinates.
    pub fn global_point(&self, chart: usize, x: &[f64]) -> Vec<f64> {
        let c = &self.charts[chart];
        x.iter()
            .zip(&c.center)
            .zip(&self.periods)
            .map(|((x, c), p)| wrap(x + c, *p))
            .collect()
    }

    pub fn charts_containing(&self, p: &[f64]) -> Vec<usize> {
        (0..self.charts.len())
            .filter(|&j| self.local_coords(j, p).is_some())
            .collect()
    }

    fn axis_range(&self, k: usize) -> (f64, f64) {
        self.sample_box[k]
    }

    /// Tensor grid with `per_axis` points per axis (cell midpoints).
    pub fn sample_grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        let total = per_axis.pow(d as u32);
        (0..total)
            .map(|mut idx| {
                (0..d)
                    .map(|k| {
                        let i = idx % per_axis;
                        idx /= per_axis;
                        let (lo, hi) = self.axis_range(k);
                        lo + (hi - lo) * (i as f64 + 0.5) / per_axis as f64
                    })
                    .collect()
            })
            .collect()
    }

    /// The `i`-th point of a Halton sequence over the sample box.
    pub fn halton_point(&self, i: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|k| {
                let (lo, hi) = self.axis_range(k);
                lo + (hi - lo) * radical_inverse(i + 1, PRIMES[k % PRIMES.len()])
            })
            .collect()
    }

    pub fn halton_samples(&self, count: usize) -> Vec<Vec<f64>> {
        (0..count).map(|i| self.halton_point(i)).collect()
    }
}

const PRIMES: [usize; 6] = [2, 3, 5, 7, 11, 13];

fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// `u = A x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    pub linear: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineMap {
    pub fn identity(dim: usize) -> Self {
        Self {
            linear: DMatrix::identity(dim, dim),
            offset: DVector::zeros(dim),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (&self.linear * DVector::from_column_slice(x) + &self.offset)
            .iter()
            .copied()
            .collect()
    }

    pub fn det(&self) -> f64 {
        self.linear.determinant()
    }

    /// Smallest singular value of the linear part.
    pub fn min_stretch(&self) -> f64 {
        self.linear
            .singular_values()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Random `U diag(s) V^T` with `s` in `[1, 2]`, so the map never
    /// shrinks lengths. With a fiber axis the fiber coordinate is only
    /// translated.
    pub fn random_expanding(dim: usize, fiber_axis: Option<usize>, rng: &mut impl Rng) -> Self {
        let base_dim = if fiber_axis.is_some() { dim - 1 } else { dim };
        let block = random_expanding_block(base_dim, rng);
        let mut linear = DMatrix::zeros(dim, dim);
        let base_axes: Vec<usize> = (0..dim).filter(|&k| Some(k) != fiber_axis).collect();
        for (bi, &i) in base_axes.iter().enumerate() {
            for (bj, &j) in base_axes.iter().enumerate() {
                linear[(i, j)] = block[(bi, bj)];
            }
        }
        if let Some(f) = fiber_axis {
            linear[(f, f)] = 1.0;
        }
        let offset = DVector::from_fn(dim, |_, _| rng.gen_range(-0.5..0.5));
        Self { linear, offset }
    }
}

fn random_orthogonal(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    m.qr().q()
}

fn random_expanding_block(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let u = random_orthogonal(n, rng);
    let v = random_orthogonal(n, rng);
    let s = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.gen_range(1.0..2.0)));
    u * s * v.transpose()
}

/// One class `[W_i]`: a chart, an inscribed ball, and `N` coordinate
/// systems on it.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverClass {
    pub chart: usize,
    /// Ball center in chart coordinates.
    pub center: Vec<f64>,
    /// Largest inscribed radius `R_i`.
    pub max_radius: f64,
    /// Bell radius `r_i`.
    pub radius: f64,
    /// `systems[0]` is the chart itself.
    pub systems: Vec<AffineMap>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AtlasCover {
    pub atlas: Atlas,
    pub n_systems: usize,
    pub classes: Vec<CoverClass>,
    pub overlap_graph: Vec<(usize, usize)>,
    /// `histogram[k]` counts sample points lying in exactly `k` charts.
    pub multiplicity_histogram: Vec<usize>,
}

/// Serializable cover summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverSummary {
    pub manifold: String,
    pub charts: Vec<String>,
    pub centers: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
    pub systems_per_class: usize,
    pub overlaps: Vec<(usize, usize)>,
    pub multiplicity_histogram: Vec<usize>,
    pub multiplicity_bound: usize,
}

/// Largest `t` with `center + t d` inside the chart for all probed
/// directions `d`, by bisection.
fn inscribed_radius(atlas: &Atlas, chart: usize, center: &[f64]) -> f64 {
    let d = atlas.dim();
    let hw = &atlas.charts[chart].half_widths;
    let inside = |x: &[f64]| x.iter().zip(hw).all(|(x, h)| x.abs() < *h);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for k in 0..d {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; d];
            e[k] = s;
            dirs.push(e);
        }
    }
    while dirs.len() < RADIUS_DIRECTIONS.max(2 * d) {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            dirs.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    let upper = hw.iter().copied().fold(0.0, f64::max) * (d as f64).sqrt() + 1.0;
    dirs.iter()
        .map(|dir| {
            let (mut lo, mut hi) = (0.0, upper);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let x: Vec<f64> = center.iter().zip(dir).map(|(c, u)| c + mid * u).collect();
                if inside(&x) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        })
        .fold(f64::INFINITY, f64::min)
}

/// Builds the cover with `n_systems` coordinate systems per class and
/// checks coverage and the multiplicity bound `dim + 1` on the samples.
pub fn build_cover(
    atlas: &Atlas,
    n_systems: usize,
    samples: &[Vec<f64>],
    seed: u64,
) -> Result<AtlasCover, CoverError> {
    if n_systems < 2 {
        return Err(CoverError::TooFewSystems(n_systems));
    }
    let dim = atlas.dim();
    let bound = dim + 1;
    let mut histogram = vec![0usize; atlas.charts.len() + 1];
    let mut overlaps = std::collections::BTreeSet::new();
    for p in samples {
        let inside = atlas.charts_containing(p);
        if inside.is_empty() {
            return Err(CoverError::CoverageGap { point: p.clone() });
        }
        if inside.len() > bound {
            return Err(CoverError::MultiplicityExceeded {
                point: p.clone(),
                count: inside.len(),
                bound,
            });
        }
        histogram[inside.len()] += 1;
        for (a, &j) in inside.iter().enumerate() {
            for &k in &inside[a + 1..] {
                overlaps.insert((j, k));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = (0..atlas.charts.len())
        .map(|chart| {
            let center = vec![0.0; dim];
            let max_radius = inscribed_radius(atlas, chart, &center);
            let mut systems = vec![AffineMap::identity(dim)];
            while systems.len() < n_systems {
                systems.push(AffineMap::random_expanding(dim, atlas.fiber_axis, &mut rng));
            }
            CoverClass {
                chart,
                center,
                max_radius,
                radius: RADIUS_FRACTION * max_radius,
                systems,
            }
        })
        .collect();
    Ok(AtlasCover {
        atlas: atlas.clone(),
        n_systems,
        classes,
        overlap_graph: overlaps.into_iter().collect(),
        multiplicity_histogram: histogram,
    })
}

impl AtlasCover {
    /// One bell per coordinate system, centered at the image of the class
    /// center.
    pub fn bells(&self) -> Vec<BellFunction> {
        let mut out = Vec::new();
        for (i, c) in self.classes.iter().enumerate() {
            for (a, s) in c.systems.iter().enumerate() {
                out.push(BellFunction {
                    class: i,
                    system: a,
                    center: s.apply(&c.center),
                    radius: c.radius,
                });
            }
        }
        out
    }

    fn system(&self, f: &BellFunction) -> &AffineMap {
        &self.classes[f.class].systems[f.system]
    }

    /// System coordinates `u` of a global point, if it lies in the class
    /// chart.
    pub fn system_coords(&self, f: &BellFunction, p: &[f64]) -> Option<Vec<f64>> {
        let chart = self.classes[f.class].chart;
        self.atlas
            .local_coords(chart, p)
            .map(|x| self.system(f).apply(&x))
    }

    /// Bell value at a global point.
    pub fn bell_value(&self, f: &BellFunction, p: &[f64]) -> f64 {
        self.system_coords(f, p)
            .map(|u| bell_eval(f, &u))
            .unwrap_or(0.0)
    }

    /// Jet of the bell at a global point in the coordinates of `chart`
    /// (variables `y - y(p)`). Zero where the bell vanishes identically.
    pub fn bell_jet_in_chart(&self, f: &BellFunction, p: &[f64], order: usize) -> Jet {
        let dim = self.atlas.dim();
        match self.system_coords(f, p) {
            Some(u) if bell_eval(f, &u) > 0.0 => {
                let j = bell_jet(f, &u, order).expect("positive value means interior");
                // transitions are translations, so du = A dy
                j.substitute(&linear_jets(&self.system(f).linear, order))
                    .expect("matching variable counts")
            }
            _ => Jet::zero(dim, order),
        }
    }

    pub fn bell_sum(&self, bells: &[BellFunction], p: &[f64]) -> f64 {
        bells.iter().map(|f| self.bell_value(f, p)).sum()
    }

    pub fn summary(&self) -> CoverSummary {
        CoverSummary {
            manifold: self.atlas.name.clone(),
            charts: self.atlas.charts.iter().map(|c| c.id.clone()).collect(),
            centers: self
                .classes
                .iter()
                .map(|c| self.atlas.global_point(c.chart, &c.center))
                .collect(),
            radii: self.classes.iter().map(|c| c.radius).collect(),
            systems_per_class: self.n_systems,
            overlaps: self.overlap_graph.clone(),
            multiplicity_histogram: self.multiplicity_histogram.clone(),
            multiplicity_bound: self.atlas.dim() + 1,
        }
    }

    /// Sample points for overlap systems: `per_pair` Halton points in each
    /// pairwise overlap, then `per_chart` points in each chart.
    pub fn overlap_samples(&self, per_pair: usize, per_chart: usize) -> Vec<Vec<f64>> {
        const MAX_TRIES: usize = 20_000;
        let mut out = Vec::new();
        let mut take = |want: usize, pred: &dyn Fn(&[f64]) -> bool| {
            let mut got = 0;
            for i in 0..MAX_TRIES {
                if got == want {
                    break;
                }
                let p = self.atlas.halton_point(i);
                if pred(&p) {
                    out.push(p);
                    got += 1;
                }
            }
        };
        for &(j, k) in &self.overlap_graph {
            take(per_pair, &|p| {
                self.atlas.local_coords(j, p).is_some() && self.atlas.local_coords(k, p).is_some()
            });
        }
        for j in 0..self.atlas.charts.len() {
            take(per_chart, &|p| self.atlas.charts_containing(p) == [j]);
        }
        out.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
        out.dedup();
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PositivityReport {
    pub min_sum: f64,
    pub witness: Vec<f64>,
    pub samples: usize,
    pub passed: bool,
}

/// Minimum of the bell sum over the samples.
pub fn positivity_check(
    cover: &AtlasCover,
    bells: &[BellFunction],
    samples: &[Vec<f64>],
) -> PositivityReport {
    let mut min_sum = f64::INFINITY;
    let mut witness = Vec::new();
    for p in samples {
        let s = cover.bell_sum(bells, p);
        if s < min_sum {
            min_sum = s;
            witness = p.clone();
        }
    }
    PositivityReport {
        min_sum,
        witness,
        samples: samples.len(),
        passed: min_sum > 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bell_values() {
        let f = BellFunction::new(vec![0.0, 0.0], 1.0);
        assert!((bell_eval(&f, &[0.0, 0.0]) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(bell_eval(&f, &[1.0, 0.0]), 0.0);
        assert_eq!(bell_eval(&f, &[0.0, 3.0]), 0.0);
        let h = 0.5f64.sqrt();
        assert!((bell_eval(&f, &[h, 0.0]) - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn bell_jet_about_center() {
        let f = BellFunction::new(vec![0.0], 1.0);
        let j = bell_jet(&f, &[0.0], 2).unwrap();
        let e = (-1.0f64).exp();
        assert!((j.coeff(&[0]) - e).abs() < 1e-15);
        assert_eq!(j.coeff(&[1]), 0.0);
        // exp(-1/(1-x^2)) = e^{-1}(1 - x^2 + ...)
        assert!((j.coeff(&[2]) + e).abs() < 1e-14);
    }

    #[test]
    fn bell_jet_outside_support() {
        let f = BellFunction::new(vec![0.0], 1.0);
        assert!(matches!(
            bell_jet(&f, &[1.0], 3),
            Err(BellError::ExpansionOutsideSupport { .. })
        ));
        assert!(bell_jet(&f, &[2.0], 3).is_err());
    }

    #[test]
    fn circle_cover() {
        let atlas = Atlas::circle(0.3);
        let samples = atlas.sample_grid(200);
        let cover = build_cover(&atlas, 2, &samples, 1).unwrap();
        assert_eq!(cover.classes.len(), 2);
        assert_eq!(cover.multiplicity_histogram.len(), 3);
        assert!(cover.multiplicity_histogram[2] > 0);
        let r = positivity_check(&cover, &cover.bells(), &samples);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn torus_brick_cover_multiplicity() {
        let atlas = Atlas::torus();
        let samples = atlas.sample_grid(8);
        let cover = build_cover(&atlas, 3, &samples, 7).unwrap();
        assert_eq!(samples.len(), 64);
        let max = cover
            .multiplicity_histogram
            .iter()
            .rposition(|&c| c > 0)
            .unwrap();
        assert!(max <= 3);
        let fine = atlas.sample_grid(60);
        assert!(build_cover(&atlas, 3, &fine, 7).is_ok());
        assert!(positivity_check(&cover, &cover.bells(), &fine).passed);
    }

    #[test]
    fn coverage_gap_is_reported() {
        let mut atlas = Atlas::circle(0.3);
        atlas.charts.pop();
        let samples = atlas.sample_grid(50);
        assert!(matches!(
            build_cover(&atlas, 2, &samples, 0),
            Err(CoverError::CoverageGap { .. })
        ));
    }

    #[test]
    fn multiplicity_bound_is_enforced() {
        let mut atlas = Atlas::circle(0.3);
        atlas.charts.push(atlas.charts[0].clone());
        atlas.charts.push(atlas.charts[0].clone());
        let samples = atlas.sample_grid(50);
        assert!(matches!(
            build_cover(&atlas, 2, &samples, 0),
            Err(CoverError::MultiplicityExceeded { bound: 2, .. })
        ));
        assert_eq!(
            build_cover(&Atlas::circle(0.3), 1, &samples, 0),
            Err(CoverError::TooFewSystems(1))
        );
    }

    #[test]
    fn affine_systems_are_distinct_and_expanding() {
        let atlas = Atlas::circle(0.3).times_interval(2.0, 0.3);
        let cover = build_cover(&atlas, 8, &atlas.sample_grid(20), 3).unwrap();
        for c in &cover.classes {
            assert_eq!(c.systems.len(), 8);
            for (a, s) in c.systems.iter().enumerate() {
                assert!(s.det().abs() >= 0.1);
                assert!(s.min_stretch() >= 1.0 - 1e-12);
                assert_eq!(s.linear[(1, 1)], 1.0);
                assert_eq!(s.linear[(0, 1)], 0.0);
                for t in &c.systems[..a] {
                    assert!(s != t);
                }
            }
        }
    }

    #[test]
    fn inscribed_radius_of_box() {
        let atlas = Atlas::torus_patch().times_interval(1.0, 0.3);
        let cover = build_cover(&atlas, 2, &atlas.sample_grid(6), 0).unwrap();
        for c in &cover.classes {
            assert!((c.max_radius - 1.0).abs() < 1e-9);
            assert!((c.radius - 0.9).abs() < 1e-9);
        }
    }

    #[test]
    fn single_bell_on_half_circle_fails() {
        let atlas = Atlas::circle(0.3);
        let samples = atlas.sample_grid(1000);
        let cover = build_cover(&atlas, 2, &samples, 0).unwrap();
        let mut f = cover.bells()[0].clone();
        f.radius = std::f64::consts::FRAC_PI_2;
        let r = positivity_check(&cover, &[f], &samples);
        assert!(!r.passed);
        assert_eq!(r.min_sum, 0.0);
        assert!(r.witness[0].abs() > std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn chart_jet_matches_values() {
        let atlas = Atlas::circle(0.3).times_interval(2.0, 0.3);
        let cover = build_cover(&atlas, 3, &atlas.sample_grid(10), 11).unwrap();
        let p = vec![0.4, 0.1];
        for f in cover.bells() {
            let j = cover.bell_jet_in_chart(&f, &p, 4);
            let v = cover.bell_value(&f, &p);
            assert!((j.constant_term() - v).abs() < 1e-15);
            let h = 1e-3;
            let q = vec![p[0] + h, p[1] - h];
            let approx = j.eval(&[h, -h]);
            assert!((approx - cover.bell_value(&f, &q)).abs() < 1e-10 * v.max(1e-300) + 1e-14);
        }
    }

    #[test]
    fn overlap_samples_hit_overlaps() {
        let atlas = Atlas::circle(0.3).times_interval(2.0, 0.3);
        let cover = build_cover(&atlas, 2, &atlas.sample_grid(20), 0).unwrap();
        let s = cover.overlap_samples(8, 4);
        assert!(s.len() >= 12);
        let pair = s
            .iter()
            .filter(|p| atlas.charts_containing(p).len() == 2)
            .count();
        assert!(pair >= 8);
    }
}
