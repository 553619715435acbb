//! Manifest-driven runs and JSON reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use bulkembed::bell::{build_cover, positivity_check, Atlas, CoverSummary, PositivityReport};
use bulkembed::embed::{certify, extend_metric, EmbeddingCertificate, SeedMetric};
use bulkembed::expr::{self, ExprError};
use bulkembed::geometry::{
    christoffel, einstein_residual, field_equation_residual, ricci, scalar_curvature, ChartMetric,
    GeometryError, ResidualNorm, StressEnergy,
};
use bulkembed::glue::{
    run_glue, BaseMetric, GlueCertificate, GlueOptions, OverlapSystem, ProductBulk,
};
use bulkembed::homotopy::{self, GroupExpr, M_MAX};

pub const MANIFEST_VERSION: &str = "bulkembed-manifest/1";
pub const REPORT_SCHEMA: &str = "bulkembed-report/1";
/// Default output directory when `--out` is not given.
pub const OUT_ENV: &str = "BULKEMBED_OUT";

/// Einstein tolerance used by `verify`.
pub const VERIFY_TOL: f64 = 1e-8;
/// Ricci symmetry tolerance used by `ricci`.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Points in the bell-sum sweep of the glue task.
const POSITIVITY_SAMPLES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Ricci,
    EmbedLocal,
    Glue,
    Homotopy,
    Verify,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Ricci => "ricci",
            Task::EmbedLocal => "embed-local",
            Task::Glue => "glue",
            Task::Homotopy => "homotopy",
            Task::Verify => "verify",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ManifoldSpec {
    Catalog(String),
    Charts(Atlas),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverParams {
    /// Overrides `N = M + 1`.
    #[serde(default)]
    pub n_systems: Option<usize>,
    #[serde(default = "default_per_pair")]
    pub per_pair: usize,
    #[serde(default = "default_per_chart")]
    pub per_chart: usize,
    #[serde(default = "default_coeff_order")]
    pub coeff_order: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_per_pair() -> usize {
    8
}
fn default_per_chart() -> usize {
    4
}
fn default_coeff_order() -> usize {
    2
}
fn default_seed() -> u64 {
    2024
}
fn default_epsilon() -> f64 {
    1.0
}
fn default_order() -> usize {
    6
}

impl Default for CoverParams {
    fn default() -> Self {
        Self {
            n_systems: None,
            per_pair: default_per_pair(),
            per_chart: default_per_chart(),
            coeff_order: default_coeff_order(),
            seed: default_seed(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomotopySpec {
    pub base: String,
    pub fiber: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: String,
    #[serde(default)]
    pub manifold: Option<ManifoldSpec>,
    /// Metric components as formulas in `x1..xd` (and `y` for the last
    /// coordinate).
    #[serde(default)]
    pub metric: Option<Vec<Vec<String>>>,
    /// Expansion point for `ricci`, `embed-local` and `verify`.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default)]
    pub cover: CoverParams,
    #[serde(default)]
    pub homotopy: Option<HomotopySpec>,
    pub tasks: Vec<Task>,
}

/// Failure classes with their exit statuses.
#[derive(Debug, Clone, PartialEq)]
pub enum RunError {
    /// Unreadable or invalid manifest (exit 2).
    Schema(String),
    /// A module failed (exit 1).
    Computation { task: &'static str, message: String },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Schema(_) => 2,
            RunError::Computation { .. } => 1,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Schema(m) => write!(f, "manifest error: {m}"),
            RunError::Computation { task, message } => write!(f, "{task} failed: {message}"),
        }
    }
}

impl std::error::Error for RunError {}

fn schema(msg: impl Into<String>) -> RunError {
    RunError::Schema(msg.into())
}

fn describe_expr(row: usize, col: usize, e: &ExprError) -> String {
    match e {
        ExprError::Syntax { offset, message } => {
            format!("metric[{row}][{col}]: syntax error at offset {offset}: {message}")
        }
        ExprError::UnknownSymbol { name, offset } => {
            format!("metric[{row}][{col}]: unknown symbol `{name}` at offset {offset}")
        }
        other => format!("metric[{row}][{col}]: {other}"),
    }
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| schema(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.version != MANIFEST_VERSION {
            return Err(schema(format!(
                "version `{}` is not `{MANIFEST_VERSION}`",
                self.version
            )));
        }
        if self.order < 2 {
            return Err(schema(format!("order {} is below 2", self.order)));
        }
        if self.epsilon != 1.0 && self.epsilon != -1.0 {
            return Err(schema(format!("epsilon {} is not +1 or -1", self.epsilon)));
        }
        if !self.lambda.is_finite() {
            return Err(schema("lambda is not finite"));
        }
        if let Some(rows) = &self.metric {
            let d = rows.len();
            if d == 0 || rows.iter().any(|r| r.len() != d) {
                return Err(schema("metric must be a non-empty square array"));
            }
            for (i, r) in rows.iter().enumerate() {
                for (j, s) in r.iter().enumerate() {
                    expr::parse(s, d).map_err(|e| schema(describe_expr(i, j, &e)))?;
                }
            }
            if let Some(c) = &self.center {
                if c.len() != d {
                    return Err(schema(format!(
                        "center has {} coordinates, metric has dimension {d}",
                        c.len()
                    )));
                }
            }
        }
        for t in &self.tasks {
            match t {
                Task::Ricci | Task::EmbedLocal | Task::Verify if self.metric.is_none() => {
                    return Err(schema(format!("task `{}` needs a metric", t.name())));
                }
                Task::Glue => {
                    let atlas = self.atlas()?;
                    let Some(f) = atlas.fiber_axis else {
                        return Err(schema("glue needs a product manifold with a fiber axis"));
                    };
                    if let Some(rows) = &self.metric {
                        if rows.len() != f {
                            return Err(schema(format!(
                                "glue base metric must be {f}x{f}, got {}",
                                rows.len()
                            )));
                        }
                    }
                }
                Task::Homotopy => {
                    let Some(h) = &self.homotopy else {
                        return Err(schema("task `homotopy` needs a homotopy section"));
                    };
                    for id in [&h.base, &h.fiber] {
                        homotopy::lookup(id, 1).map_err(|e| schema(e.to_string()))?;
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn atlas(&self) -> Result<Atlas, RunError> {
        match &self.manifold {
            Some(ManifoldSpec::Catalog(id)) => {
                Atlas::catalog(id).map_err(|e| schema(e.to_string()))
            }
            Some(ManifoldSpec::Charts(a)) => {
                let d = a.periods.len();
                let ok = !a.charts.is_empty()
                    && a.sample_box.len() == d
                    && a.charts.iter().all(|c| {
                        c.center.len() == d
                            && c.half_widths.len() == d
                            && c.half_widths.iter().all(|h| *h > 0.0)
                    })
                    && a.fiber_axis.is_none_or(|f| f < d);
                if ok {
                    Ok(a.clone())
                } else {
                    Err(schema("chart list is inconsistent with its dimension"))
                }
            }
            None => Err(schema("glue needs a manifold")),
        }
    }

    fn chart_metric(&self) -> Result<ChartMetric, RunError> {
        let rows = self.metric.as_ref().expect("validated");
        let center = self.center.clone().unwrap_or_else(|| vec![0.0; rows.len()]);
        ChartMetric::from_exprs(rows, &center, self.order).map_err(|e| match e {
            GeometryError::Expr(e) => schema(e.to_string()),
            other => computation(Task::Ricci, other),
        })
    }
}

fn computation(task: Task, e: impl std::fmt::Display) -> RunError {
    RunError::Computation {
        task: task.name(),
        message: e.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub passed: bool,
    pub tolerances: BTreeMap<String, f64>,
}

impl Verdict {
    fn new(passed: bool, tols: &[(&str, f64)]) -> Self {
        Self {
            passed,
            tolerances: tols.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RicciSection {
    pub dim: usize,
    pub order: usize,
    pub christoffel_at_center: Vec<Vec<Vec<f64>>>,
    pub ricci_at_center: Vec<Vec<f64>>,
    pub scalar_curvature_at_center: f64,
    pub ricci_asymmetry: f64,
    /// Absent when `D = 2` and `lambda != 0`.
    pub einstein_residual: Option<ResidualNorm>,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmbedSection {
    pub n: usize,
    pub lambda: f64,
    pub epsilon: f64,
    pub order: usize,
    pub lambda0: f64,
    pub newton_iterations: usize,
    /// `y^k` coefficients of `h_ij` at `x = 0`, indexed `[i][j][k]`.
    pub y_series_at_origin: Vec<Vec<Vec<f64>>>,
    pub certificate: EmbeddingCertificate,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GlueSection {
    pub cover: CoverSummary,
    /// Einstein residual by degree of each chart's local extension.
    pub target_residuals: Vec<ResidualNorm>,
    pub positivity: PositivityReport,
    pub certificate: GlueCertificate,
    pub csv: Option<String>,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HomotopyLevel {
    pub m: u32,
    pub base: GroupExpr,
    pub fiber: GroupExpr,
    pub product: GroupExpr,
    pub display: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HomotopySection {
    pub base: String,
    pub fiber: String,
    pub levels: Vec<HomotopyLevel>,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifySection {
    pub dim: usize,
    pub lambda: f64,
    pub einstein_residual: Option<ResidualNorm>,
    pub field_equation_residual: ResidualNorm,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub generated_unix: u64,
    pub tasks: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ricci: Option<RicciSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embed_local: Option<EmbedSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub glue: Option<GlueSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub homotopy: Option<HomotopySection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySection>,
    pub passed: bool,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One line per task.
    pub fn summary(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut line = |name: &str, v: &Verdict| {
            out.push(format!(
                "{name}: {}",
                if v.passed { "pass" } else { "FAIL" }
            ));
        };
        if let Some(s) = &self.ricci {
            line("ricci", &s.verdict);
        }
        if let Some(s) = &self.embed_local {
            line("embed-local", &s.verdict);
        }
        if let Some(s) = &self.glue {
            line("glue", &s.verdict);
        }
        if let Some(s) = &self.homotopy {
            line("homotopy", &s.verdict);
        }
        if let Some(s) = &self.verify {
            line("verify", &s.verdict);
        }
        out
    }
}

/// Where reports and CSV dumps go.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub csv: bool,
}

fn ricci_task(m: &Manifest) -> Result<RicciSection, RunError> {
    let g = m.chart_metric()?;
    let d = g.dim();
    let err = |e| computation(Task::Ricci, e);
    let gamma = christoffel(&g).map_err(err)?;
    let ric = ricci(&gamma);
    let r = scalar_curvature(&g, &ric).map_err(err)?;
    let asym = ric.ric.asymmetry();
    let einstein = match einstein_residual(&g, m.lambda) {
        Ok(res) => Some(ResidualNorm::of(&res)),
        Err(GeometryError::DimensionTwoWithNonzeroLambda { .. }) => None,
        Err(e) => return Err(err(e)),
    };
    Ok(RicciSection {
        dim: d,
        order: g.order(),
        christoffel_at_center: (0..d)
            .map(|c| {
                (0..d)
                    .map(|a| (0..d).map(|b| gamma.get(c, a, b).constant_term()).collect())
                    .collect()
            })
            .collect(),
        ricci_at_center: (0..d)
            .map(|a| (0..d).map(|b| ric.ric.get(a, b).constant_term()).collect())
            .collect(),
        scalar_curvature_at_center: r.constant_term(),
        ricci_asymmetry: asym,
        einstein_residual: einstein,
        verdict: Verdict::new(asym <= SYMMETRY_TOL, &[("ricci_asymmetry", SYMMETRY_TOL)]),
    })
}

fn embed_task(m: &Manifest) -> Result<EmbedSection, RunError> {
    let g = m.chart_metric()?;
    let seed = SeedMetric::new(g);
    let res = extend_metric(&seed, m.lambda, m.epsilon, m.order)
        .map_err(|e| computation(Task::EmbedLocal, e))?;
    let cert = certify(&res);
    let n = seed.n();
    let series = (0..n)
        .map(|a| {
            (0..n)
                .map(|b| {
                    (0..=m.order)
                        .map(|k| {
                            let mut e = vec![0u32; n + 1];
                            e[n] = k as u32;
                            res.bulk.base.get(a, b).coeff(&e)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let verdict = Verdict::new(
        cert.passed,
        &[
            ("residual", cert.residual_tolerance),
            ("constraints", cert.constraint_tolerance),
            ("slice_deviation", 0.0),
        ],
    );
    Ok(EmbedSection {
        n,
        lambda: m.lambda,
        epsilon: m.epsilon,
        order: m.order,
        lambda0: res.initial.lambda0,
        newton_iterations: res.initial.iterations,
        y_series_at_origin: series,
        certificate: cert,
        verdict,
    })
}

/// Writes the overlap system as CSV: row tags, right-hand side, then one
/// column per unknown.
pub fn write_system_csv(system: &OverlapSystem, path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![
        "sample".to_string(),
        "chart".to_string(),
        "exponent".to_string(),
        "pattern".to_string(),
        "rhs".to_string(),
    ];
    header.extend(system.columns.iter().map(|c| {
        let e: Vec<String> = c.exponent.iter().map(u32::to_string).collect();
        format!("psi{}[{}]", c.bell, e.join(" "))
    }));
    w.write_record(&header)?;
    for (i, tag) in system.rows.iter().enumerate() {
        let e: Vec<String> = tag.exponent.iter().map(u32::to_string).collect();
        let mut rec = vec![
            tag.sample.to_string(),
            tag.chart.to_string(),
            e.join(" "),
            tag.pattern.to_string(),
            format!("{:e}", system.rhs[i]),
        ];
        rec.extend(system.matrix.row(i).iter().map(|v| format!("{v:e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn glue_task(m: &Manifest, opts: &RunOptions) -> Result<GlueSection, RunError> {
    let atlas = m.atlas()?;
    let n = atlas.fiber_axis.expect("validated");
    let base = match &m.metric {
        Some(rows) => BaseMetric::new(rows.clone()).map_err(|e| schema(e.to_string()))?,
        None => BaseMetric::flat(n),
    };
    let bulk = ProductBulk::new(atlas, base).map_err(|e| schema(e.to_string()))?;
    let gopts = GlueOptions {
        lambda: m.lambda,
        epsilon: m.epsilon,
        order: m.order,
        coeff_order: m.cover.coeff_order,
        per_pair: m.cover.per_pair,
        per_chart: m.cover.per_chart,
        n_systems: m.cover.n_systems,
        seed: m.cover.seed,
    };
    let out = run_glue(&bulk, &gopts).map_err(|e| computation(Task::Glue, e))?;
    let sweep = bulk.atlas.halton_samples(POSITIVITY_SAMPLES);
    let positivity = positivity_check(&out.spec.cover, &out.spec.bells, &sweep);
    // multiplicity on the sweep as well
    build_cover(&bulk.atlas, out.spec.cover.n_systems, &sweep, m.cover.seed)
        .map_err(|e| computation(Task::Glue, e))?;
    let csv = if opts.csv {
        let dir = opts.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir).map_err(|e| computation(Task::Glue, e))?;
        let path = dir.join("glue_system.csv");
        write_system_csv(&out.system, &path).map_err(|e| computation(Task::Glue, e))?;
        Some(path.display().to_string())
    } else {
        None
    };
    let c = out.certificate;
    let passed = c.passed && positivity.passed;
    Ok(GlueSection {
        cover: out.spec.cover.summary(),
        target_residuals: out
            .targets
            .iter()
            .map(|t| t.certificate.residual.clone())
            .collect(),
        positivity,
        verdict: Verdict::new(
            passed,
            &[
                ("solve_residual", c.solve_tolerance),
                ("einstein_residual", c.residual_tolerance),
                ("isometry_deviation", 0.0),
                ("min_bell_sum", 0.0),
            ],
        ),
        certificate: c,
        csv,
    })
}

fn homotopy_task(m: &Manifest) -> Result<HomotopySection, RunError> {
    let h = m.homotopy.as_ref().expect("validated");
    let err = |e| computation(Task::Homotopy, e);
    let levels = (1..=M_MAX)
        .map(|k| {
            let product = homotopy::split_product(&h.base, &h.fiber, k).map_err(err)?;
            Ok(HomotopyLevel {
                m: k,
                base: homotopy::lookup(&h.base, k).map_err(err)?,
                fiber: homotopy::lookup(&h.fiber, k).map_err(err)?,
                display: product.to_string(),
                product,
            })
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    Ok(HomotopySection {
        base: h.base.clone(),
        fiber: h.fiber.clone(),
        levels,
        verdict: Verdict::new(true, &[]),
    })
}

fn verify_task(m: &Manifest) -> Result<VerifySection, RunError> {
    let g = m.chart_metric()?;
    let d = g.dim();
    let err = |e| computation(Task::Verify, e);
    let fe =
        field_equation_residual(&g, &StressEnergy::vacuum(d, g.order()), m.lambda).map_err(err)?;
    let fe = ResidualNorm::of(&fe);
    let (einstein, passed) = match einstein_residual(&g, m.lambda) {
        Ok(res) => {
            let r = ResidualNorm::of(&res);
            let ok = r.max <= VERIFY_TOL;
            (Some(r), ok)
        }
        Err(e @ GeometryError::DimensionTwoWithNonzeroLambda { .. }) => return Err(err(e)),
        Err(e) => return Err(err(e)),
    };
    Ok(VerifySection {
        dim: d,
        lambda: m.lambda,
        einstein_residual: einstein,
        field_equation_residual: fe,
        verdict: Verdict::new(passed, &[("einstein_residual", VERIFY_TOL)]),
    })
}

/// Runs the given tasks (or the manifest's list) and builds the report.
pub fn run_manifest(
    m: &Manifest,
    only: Option<Task>,
    opts: &RunOptions,
) -> Result<Report, RunError> {
    let mut tasks: Vec<Task> = match only {
        Some(t) => vec![t],
        None => m.tasks.clone(),
    };
    tasks.sort();
    tasks.dedup();
    if let Some(t) = only {
        // a single verb still has to be runnable from this manifest
        let mut probe = m.clone();
        probe.tasks = vec![t];
        probe.validate()?;
    }
    let mut report = Report {
        schema: REPORT_SCHEMA,
        generated_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        tasks: tasks.iter().map(|t| t.name().to_string()).collect(),
        ricci: None,
        embed_local: None,
        glue: None,
        homotopy: None,
        verify: None,
        passed: true,
    };
    for t in tasks {
        match t {
            Task::Ricci => report.ricci = Some(ricci_task(m)?),
            Task::EmbedLocal => report.embed_local = Some(embed_task(m)?),
            Task::Glue => report.glue = Some(glue_task(m, opts)?),
            Task::Homotopy => report.homotopy = Some(homotopy_task(m)?),
            Task::Verify => report.verify = Some(verify_task(m)?),
        }
    }
    report.passed = [
        report.ricci.as_ref().map(|s| s.verdict.passed),
        report.embed_local.as_ref().map(|s| s.verdict.passed),
        report.glue.as_ref().map(|s| s.verdict.passed),
        report.homotopy.as_ref().map(|s| s.verdict.passed),
        report.verify.as_ref().map(|s| s.verdict.passed),
    ]
    .into_iter()
    .flatten()
    .all(|p| p);
    Ok(report)
}

/// Loads a manifest, runs it and writes `report.json` when an output
/// directory is configured. Returns the report and the exit status.
pub fn run(path: &Path, only: Option<Task>, opts: &RunOptions) -> Result<(Report, i32), RunError> {
    let m = Manifest::load(path)?;
    run_loaded(&m, only, opts)
}

pub fn run_loaded(
    m: &Manifest,
    only: Option<Task>,
    opts: &RunOptions,
) -> Result<(Report, i32), RunError> {
    let report = run_manifest(m, only, opts)?;
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir)
            .and_then(|_| std::fs::write(dir.join("report.json"), report.to_json()))
            .map_err(|e| RunError::Computation {
                task: "report",
                message: e.to_string(),
            })?;
    }
    let code = if report.passed { 0 } else { 1 };
    Ok((report, code))
}
