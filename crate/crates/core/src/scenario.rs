//! Scenario files and their runner. Each scenario kind calls exactly one
//! library operation, writes its artifacts and evaluates the invariant that
//! belongs to it.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::almostperiodic::{self, APSignal, ApError, Term};
use crate::estimates::{self, FactorContext};
use crate::flow::{self, BilliardState, TraceLimits};
use crate::geometry::{classify_rationality, shapes, ConvexPolytope};
use crate::io::{self, PolytopeFile};
use crate::rotations::{self, Isometry, OrbitSampling};
use crate::spectral::{self, Grid, TorusSection};
use crate::tol::Tolerance;
use crate::tubes::{self, EnumerationOptions, SearchBounds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Trace,
    Enumerate,
    AngleCheck,
    SumCheck,
    #[serde(rename = "density_N")]
    DensityN,
    Admissibility,
    AlmostPeriod,
    Bohr,
    Parseval,
    BoxMass,
    Hemisphere,
    TorusSpectrum,
    Observability,
}

impl ScenarioKind {
    fn default_artifact(self) -> &'static str {
        match self {
            Self::Trace => "trace.csv",
            Self::Enumerate => "atlas.json",
            Self::AngleCheck => "angle_check.csv",
            Self::SumCheck => "sum_check.csv",
            Self::DensityN => "density_n.csv",
            Self::Admissibility => "admissibility.json",
            Self::AlmostPeriod => "almost_periods.csv",
            Self::Bohr => "bohr.csv",
            Self::Parseval => "parseval.json",
            Self::BoxMass => "box_mass.csv",
            Self::Hemisphere => "hemisphere.csv",
            Self::TorusSpectrum => "torus_spectrum.csv",
            Self::Observability => "observability.csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub inputs: serde_json::Value,
    #[serde(default)]
    pub output_path: Option<String>,
    #[serde(default)]
    pub seed: u64,
    /// Geometry tolerance; the `--tol` flag and `POLYTUBE_TOL` take
    /// precedence in that order.
    #[serde(default)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PolytopeSource {
    /// Path relative to the scenario file.
    File(String),
    Builtin(Builtin),
    /// Axis-parallel box `prod [0, a_j]`.
    Box(Vec<f64>),
    Inline(PolytopeFile),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    UnitSquare,
    UnitCube,
    EquilateralTriangle,
    /// Unit-side equilateral prism of unit height.
    TriangularPrism,
    /// Unit-edge regular tetrahedron.
    RegularTetrahedron,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("check failed: {check} ({})", report.summary)]
    CheckFailed {
        check: String,
        report: Box<RunReport>,
    },
    #[error("computation failed: {0}")]
    Compute(String),
    #[error("cannot write artifact: {0}")]
    Io(#[from] std::io::Error),
}

impl ScenarioError {
    /// 2 parse, 3 missing input, 4 failed check, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Parse(_) => 2,
            Self::MissingInput(_) => 3,
            Self::CheckFailed { .. } => 4,
            Self::Compute(_) | Self::Io(_) => 1,
        }
    }
}

fn compute<E: std::fmt::Display>(e: E) -> ScenarioError {
    ScenarioError::Compute(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub kind: ScenarioKind,
    pub summary: String,
    pub artifacts: Vec<PathBuf>,
}

/// Command-line overrides and the directory relative paths resolve in.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub base_dir: PathBuf,
    pub out_dir: Option<PathBuf>,
    pub tol: Option<f64>,
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
}

/// Parses the kind-specific input block.
pub fn parse_inputs<T: DeserializeOwned>(s: &Scenario) -> Result<T, ScenarioError> {
    serde_json::from_value(s.inputs.clone())
        .map_err(|e| ScenarioError::Parse(format!("inputs: {e}")))
}

/// Checks the input block against its kind without running anything.
pub fn validate_inputs(s: &Scenario) -> Result<(), ScenarioError> {
    match s.kind {
        ScenarioKind::Trace => parse_inputs::<TraceInputs>(s).map(drop),
        ScenarioKind::Enumerate => parse_inputs::<EnumerateInputs>(s).map(drop),
        ScenarioKind::AngleCheck => parse_inputs::<AngleInputs>(s).map(drop),
        ScenarioKind::SumCheck => parse_inputs::<SumInputs>(s).map(drop),
        ScenarioKind::DensityN => parse_inputs::<DensityInputs>(s).map(drop),
        ScenarioKind::Admissibility => parse_inputs::<AdmissibilityInputs>(s).map(drop),
        ScenarioKind::AlmostPeriod => parse_inputs::<AlmostPeriodInputs>(s).map(drop),
        ScenarioKind::Bohr => parse_inputs::<BohrInputs>(s).map(drop),
        ScenarioKind::Parseval => parse_inputs::<ParsevalInputs>(s).map(drop),
        ScenarioKind::BoxMass => parse_inputs::<BoxMassInputs>(s).map(drop),
        ScenarioKind::Hemisphere => parse_inputs::<HemisphereInputs>(s).map(drop),
        ScenarioKind::TorusSpectrum => parse_inputs::<TorusInputs>(s).map(drop),
        ScenarioKind::Observability => parse_inputs::<ObservabilityInputs>(s).map(drop),
    }
}

/// Reads and runs a scenario file; relative paths resolve next to it.
pub fn run_file(
    path: &Path,
    out_dir: Option<PathBuf>,
    tol: Option<f64>,
) -> Result<RunReport, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ScenarioError::MissingInput(format!("{}: {e}", path.display())))?;
    let s = parse_scenario(&text)?;
    let opts = RunOptions {
        base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        out_dir,
        tol,
    };
    run(&s, &opts)
}

struct Ctx<'a> {
    s: &'a Scenario,
    opts: &'a RunOptions,
    tol: Tolerance,
    primary: PathBuf,
    artifacts: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn polytope(&self, src: &PolytopeSource) -> Result<ConvexPolytope, ScenarioError> {
        let t = &self.tol;
        let built = match src {
            PolytopeSource::File(f) => {
                let path = self.opts.base_dir.join(f);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| ScenarioError::MissingInput(format!("{}: {e}", path.display())))?;
                io::parse_polytope(&text, t)
                    .map_err(|e| ScenarioError::Parse(format!("{}: {e}", path.display())))?
            }
            PolytopeSource::Inline(pf) => pf
                .build(t)
                .map_err(|e| ScenarioError::Parse(e.to_string()))?,
            PolytopeSource::Box(dims) => {
                shapes::unit_box(dims).map_err(|e| ScenarioError::Parse(e.to_string()))?
            }
            PolytopeSource::Builtin(b) => match b {
                Builtin::UnitSquare => shapes::unit_box(&[1.0, 1.0]).map_err(compute)?,
                Builtin::UnitCube => shapes::unit_box(&[1.0, 1.0, 1.0]).map_err(compute)?,
                Builtin::EquilateralTriangle => shapes::equilateral_triangle(1.0),
                Builtin::TriangularPrism => shapes::triangular_prism(1.0, 1.0),
                Builtin::RegularTetrahedron => shapes::regular_tetrahedron(1.0),
            },
        };
        Ok(built)
    }

    fn write(&mut self, path: PathBuf, contents: &str) -> Result<(), ScenarioError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&path, contents)?;
        self.artifacts.push(path);
        Ok(())
    }

    fn write_primary(&mut self, contents: &str) -> Result<(), ScenarioError> {
        self.write(self.primary.clone(), contents)
    }

    /// Sibling of the primary artifact: `name.ext` becomes `name.suffix`.
    fn sibling(&self, suffix: &str) -> PathBuf {
        let stem = self
            .primary
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        self.primary.with_file_name(format!("{stem}.{suffix}"))
    }

    fn report(&self, summary: String) -> RunReport {
        RunReport {
            kind: self.s.kind,
            summary,
            artifacts: self.artifacts.clone(),
        }
    }

    fn finish(&self, summary: String, failed: Option<String>) -> Result<RunReport, ScenarioError> {
        let report = self.report(summary);
        match failed {
            None => Ok(report),
            Some(check) => Err(ScenarioError::CheckFailed {
                check,
                report: Box::new(report),
            }),
        }
    }

    fn factor_context(&self, p: &ConvexPolytope) -> FactorContext {
        let mut ctx = FactorContext::new(classify_rationality(p, 20_000).order().is_some());
        ctx.sampling.seed = self.s.seed;
        ctx
    }
}

fn resolve_tol(s: &Scenario, opts: &RunOptions) -> Tolerance {
    if let Some(t) = opts.tol {
        return Tolerance::with_geometry(t);
    }
    if std::env::var(crate::tol::TOL_ENV_VAR).is_ok() {
        return Tolerance::from_env();
    }
    s.tol.map(Tolerance::with_geometry).unwrap_or_default()
}

fn primary_path(s: &Scenario, opts: &RunOptions) -> PathBuf {
    let name = s
        .output_path
        .clone()
        .unwrap_or_else(|| s.kind.default_artifact().to_string());
    match &opts.out_dir {
        Some(dir) => dir.join(Path::new(&name).file_name().unwrap_or(name.as_ref())),
        None => opts.base_dir.join(name),
    }
}

fn f(x: f64) -> String {
    x.to_string()
}

// ------------------------------------------------------------ inputs

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct StartInput {
    pos: Vec<f64>,
    dir: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct LimitsInput {
    max_events: usize,
    #[serde(default)]
    max_length: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceInputs {
    polytope: PolytopeSource,
    start: StartInput,
    limits: LimitsInput,
    #[serde(default)]
    eps_stop: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnumerateInputs {
    polytope: PolytopeSource,
    eps: f64,
    max_word_period: usize,
    max_length: f64,
    #[serde(default)]
    force_sampling: bool,
    #[serde(default)]
    expect_count: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct AngleInputs {
    polytope: PolytopeSource,
    eps: f64,
    max_word_period: usize,
    max_length: f64,
}

fn default_spread() -> f64 {
    10.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SumInputs {
    polytope: PolytopeSource,
    eps_grid: Vec<f64>,
    max_word_period: usize,
    max_length: f64,
    /// Allowed max/min ratio across the grid.
    #[serde(default = "default_spread")]
    max_ratio_spread: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct DensityInputs {
    matrix: Vec<Vec<f64>>,
    eps_list: Vec<f64>,
    radius: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdmissibilityInputs {
    isometry: Isometry,
    eps: f64,
    k_max: i64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermInput {
    freq: f64,
    re: f64,
    #[serde(default)]
    im: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SignalInput {
    terms: Vec<TermInput>,
    window: (f64, f64),
}

impl SignalInput {
    fn build(&self) -> APSignal {
        APSignal::trig_polynomial(
            self.terms
                .iter()
                .map(|t| Term {
                    freq: t.freq,
                    coeff: vec![Complex64::new(t.re, t.im)],
                })
                .collect(),
            self.window,
        )
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct AlmostPeriodInputs {
    signal: SignalInput,
    eps: f64,
    tau_range: (f64, f64),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct BohrInputs {
    signal: SignalInput,
    lambdas: Vec<f64>,
    t_list: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParsevalInputs {
    signal: SignalInput,
    spectrum: Vec<f64>,
    t: f64,
    #[serde(default)]
    max_defect: Option<f64>,
}

fn default_agreement() -> f64 {
    1e-4
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxMassInputs {
    dims: Vec<f64>,
    index_bound: u32,
    eps_list: Vec<f64>,
    #[serde(default = "default_agreement")]
    agreement: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct HemisphereInputs {
    l_values: Vec<u32>,
    delta: f64,
}

fn default_pairs() -> usize {
    20
}

fn default_basis_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TorusInputs {
    section: TorusSection,
    #[serde(default)]
    alpha: f64,
    length: f64,
    count: usize,
    #[serde(default = "default_pairs")]
    check_pairs: usize,
    #[serde(default = "default_basis_tol")]
    basis_tol: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum SValues {
    List(Vec<f64>),
    Log { lo: f64, hi: f64, count: usize },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservabilityInputs {
    grid: Grid,
    omega_fraction: f64,
    s_values: SValues,
    #[serde(default)]
    cross_modes: Option<Vec<f64>>,
}

// ------------------------------------------------------------ runner

/// Runs a parsed scenario.
pub fn run(s: &Scenario, opts: &RunOptions) -> Result<RunReport, ScenarioError> {
    let mut cx = Ctx {
        s,
        opts,
        tol: resolve_tol(s, opts),
        primary: primary_path(s, opts),
        artifacts: Vec::new(),
    };
    match s.kind {
        ScenarioKind::Trace => run_trace(&mut cx),
        ScenarioKind::Enumerate => run_enumerate(&mut cx),
        ScenarioKind::AngleCheck => run_angle(&mut cx),
        ScenarioKind::SumCheck => run_sum(&mut cx),
        ScenarioKind::DensityN => run_density(&mut cx),
        ScenarioKind::Admissibility => run_admissibility(&mut cx),
        ScenarioKind::AlmostPeriod => run_almost_period(&mut cx),
        ScenarioKind::Bohr => run_bohr(&mut cx),
        ScenarioKind::Parseval => run_parseval(&mut cx),
        ScenarioKind::BoxMass => run_box_mass(&mut cx),
        ScenarioKind::Hemisphere => run_hemisphere(&mut cx),
        ScenarioKind::TorusSpectrum => run_torus(&mut cx),
        ScenarioKind::Observability => run_observability(&mut cx),
    }
}

fn run_trace(cx: &mut Ctx) -> Result<RunReport, ScenarioError> {
    let inp: TraceInputs = parse_inputs(cx.s)?;
    let p = cx.polytope(&inp.polytope)?;
    let limits = TraceLimits {
        max_events: inp.limits.max_events,
        max_length: inp.limits.max_length.unwrap_or(f64::INFINITY),
    };
    let state = BilliardState::new(inp.start.pos, inp.start.dir, None);
    let (t, w) = flow::trace(&p, &state, limits, inp.eps_stop).map_err(compute)?;
    cx.write_primary(&io::trajectory_csv(&t).map_err(compute)?)?;
    let summary = format!(
        "trace: {} events, length {}, terminated {:?}, periodic core {:?}",
        t.events.len(),
        t.total_length,
        t.terminated,
        w.core()
    );
    cx.finish(summary, None)
}

fn run_enumerate(cx: &mut Ctx) -> Result<RunReport, ScenarioError> {
    let inp: EnumerateInputs = parse_inputs(cx.s)?;
    let p = cx.polytope(&inp.polytope)?;
    let bounds = SearchBounds {
        max_word_period: inp.max_word_period,
        max_length: inp.max_length,
    };
    let opts = EnumerationOptions {
        force_sampling: inp.force_sampling,
        ..EnumerationOptions::default()
    };
    let atlas = tubes::enumerate_tubes_with(&p, inp.eps, bounds, &opts);
    cx.write_primary(&io::atlas_json(&atlas))?;
    let csv = io::atlas_summary_csv(std::slice::from_ref(&atlas)).map_err(compute)?;
    cx.write(cx.sibling("summary.csv"), &csv)?;
    let summary = format!(
        "enumerate: M({}) = {} tubes via {:?}, complete within bounds: {}",
        inp.eps,
        atlas.count(),
        atlas.method,
        atlas.complete_within_bounds
    );
    let failed = inp
        .expect_count
        .filter(|&c| c != atlas.count())
        .map(|c| format!("expected {c} tubes, found {}", atlas.count()));
    cx.finish(summary, failed)
}

fn run_angle(cx: &mut Ctx) -> Result<RunReport, ScenarioError> {
    let inp: AngleInputs = parse_inputs(cx.s)?;
    let p = cx.polytope(&inp.polytope)?;
    let bounds = SearchBounds {
        max_word_period: inp.max_word_period,
        max_length: inp.max_length,
    };
    let atlas = tubes::enumerate_tubes(&p, inp.eps, bounds);
    let r = estimates::atlas_angle_checks(&p, &atlas, &cx.factor_context(&p)).map_err(compute)?;
    let rows: Vec<Vec<String>> = r
        .checks
        .iter()
        .map(|c| {
            vec![
                format!("{:?}", c.words.0),
                format!("{:?}", c.words.1),
                f(c.sin_alpha),
                f(c.bound),
                c.factors.0.to_string(),
                c.factors.1.to_string(),
                c.pass.to_string(),
            ]
        })
        .collect();
    let csv = io::table_csv(
        &[
            "word_a",
            "word_b",
            "sin_alpha",
            "bound",
            "N_a",
            "N_b",
            "pass",
        ],
        &rows,
    )
    .map_err(compute)?;
    cx.write_primary(&csv)?;
    let summary = format!(
        "angle_check: {} tubes, {} intersecting pairs, {} without intersection, {} violations",
        atlas.count(),
        r.checks.len(),
        r.no_intersection,
        r.violations
    );
    let failed =
        (r.violations > 0).then(|| format!("angle bound violated by {} pairs", r.violations));
    cx.finish(summary, failed)
}

fn run_sum(cx: &mut Ctx) -> Result<RunReport, ScenarioError> {
    let inp: SumInputs = parse_inputs(cx.s)?;
    let p = cx.polytope(&inp.polytope)?;
    let bounds = SearchBounds {
        max_word_period: inp.max_word_period,
        max_length: inp.max_length,
    };
    let rows = estimates::sum_check(
        &p,
        &inp.eps_grid,
        bounds,
        &EnumerationOptions::default(),
        &cx.factor_context(&p),
    )
    .map_err(compute)?;
    cx.write_primary(&estimates::sum_check_csv(&rows).map_err(compute)?)?;
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).filter(|r| *r > 0.0).collect();
    let (lo, hi) = ratios
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(*r), b.max(*r)));
    let spread = if ratios.is_empty() {
        f64::INFINITY
    } else {
        hi / lo
    };
    let summary = format!(
        "sum_check: {} grid points, ratio spread {spread}",
        rows.len()
    );
    let failed = (spread >= inp.max_ratio_spread)
        .then(|| format!("ratio spread {spread} not below {}", inp.max_ratio_spread));
    cx.finish(summary, failed)
}

fn run_density(cx: &mut Ctx) -> Result<RunReport, ScenarioError> {
    let inp: DensityInputs = parse_inputs(cx.s)?;
    let n = inp.matrix.len();
    if inp.matrix.iter().any(|r| r.len() != n) {
        return Err(ScenarioError::Parse("matrix must be square".into()));
    }
    let r = DMatrix::from_fn(n, n, |i, j| inp.matrix[i][j]);
    let sampling = OrbitSampling {
        seed: cx.s.seed,
        ..OrbitSampling::default()
    };
    let mut rows = Vec::new();
    for &eps in &inp.eps_list {
        let d = rotations::orbit_density_n(&r, eps, inp.radius, &sampling).map_err(compute)?;
        rows.push(vec![f(eps), d.n.to_string()]);
    }
    cx.write_primary(&io::table_csv(&["eps", "N"], &rows).map_err(compute)?)?;
    let summary = format!("density_N: {} values at radius {}", rows.len(), inp.radius);
    cx.finish(summary, None)
}

#[derive(Debug, Serialize)]
struct AdmissibilityArtifact {
    eps: f64,
    k_max: i64,
    hits: usize,
    max_gap: Option<i64>,
    max_gap_doubled: Option<i64>,
}

fn run_admissibility(cx: &mut Ctx) -> Result<RunReport, ScenarioError> {
    let inp: AdmissibilityInputs = parse_inputs(cx.s)?;
    let a =
        rotations::admissibility_set(&inp.isometry, inp.eps, (0, inp.k_max)).map_err(compute)?;
    let b = rotations::admissibility_set(&inp.isometry, inp.eps, (0, 2 * inp.k_max))
        .map_err(compute)?;
    let art = AdmissibilityArtifact {
        eps: inp.eps,
        k_max: inp.k_max,
        hits: a.indices.len(),
        max_gap: a.max_gap,
        max_gap_doubled: b.max_gap,
    };
    cx.write_primary(&serde_json::to_string_pretty(&art).map_err(compute)?)?;
    let summary = format!(
        "admissibility: max gap {:?} on [0, K], {:?} on [0, 2K]",
        a.max_gap, b.max_gap
    );
    let failed = (a.max_gap.is_none() || a.max_gap != b.max_gap)
        .then(|| "max gap not stable under doubling".to_string());
    cx.finish(summary, failed)
}

fn run_almost_period(cx: &mut Ctx) -> Result<RunReport, ScenarioError> {
    let inp: AlmostPeriodInputs = parse_inputs(cx.s)?;
    let sig = inp.signal.build();
    let r = almostperiodic::almost_periods(&sig, inp.eps, inp.tau_range).map_err(compute)?;
    let rows: Vec<Vec<String>> = r
        .periods
        .iter()
        .map(|p| vec![f(p.tau), f(p.deviation)])
        .collect();
    cx.write_primary(&io::table_csv(&["tau", "deviation"], &rows).map_err(compute)?)?;
    let summary = format!(
        "almost_period: {} periods, inclusion length {} (doubled window {})",
        r.periods.len(),
        r.inclusion_length,
        r.inclusion_length_doubled_window
    );
    let failed =
        (!r.inclusion_length.is_finite()).then(|| "no relatively dense almost periods".to_string());
    cx.finish(summary, failed)
}

fn run_bohr(cx: &mut Ctx) -> Result<RunReport, ScenarioError> {
    let inp: BohrInputs = parse_inputs(cx.s)?;
    let sig = inp.signal.build();
    let mut rows = Vec::new();
    let mut failed = None;
    for &l in &inp.lambdas {
        match almostperiodic::bohr_coefficient(&sig, l, &inp.t_list) {
            Ok(b) => {
                for (t, v) in &b.estimates {
                    rows.push(vec![f(l), f(*t), f(v[0].re), f(v[0].im), f(v[0].norm())]);
                }
            }
            Err(ApError::NonConvergent { differences }) => {
                failed.get_or_insert(format!(
                    "Bohr mean at lambda = {l} does not settle: {differences:?}"
                ));
            }
            Err(e) => return Err(compute(e)),
        }
    }
    cx.write_primary(&io::table_csv(&["lambda", "T", "re", "im", "abs"], &rows).map_err(compute)?)?;
    let summary = format!(
        "bohr: {} frequencies over {} truncations",
        inp.lambdas.len(),
        inp.t_list.len()
    );
    cx.finish(summary, failed)
}

fn run_parseval(cx: &mut Ctx) -> Result<RunReport, ScenarioError> {
    let inp: ParsevalInputs = parse_inputs(cx.s)?;
    let sig = inp.signal.build();
    let r = almostperiodic::parseval_check(&sig, &inp.spectrum, inp.t).map_err(compute)?;
    cx.write_primary(&serde_json::to_string_pretty(&r).map_err(compute)?)?;
    let summary = format!(
        "parseval: mean square {}, coefficient mass {}, defect {}",
        r.mean_square, r.coeff_sum, r.defect
    );
    let failed = inp
        .max_defect
        .filter(|m| r.defect.abs() > *m)
        .map(|m| format!("defect {} exceeds {m}", r.defect));
    cx.finish(summary, failed)
}

fn run_box_mass(cx: &mut Ctx) -> Result<RunReport, ScenarioError> {
    let inp: BoxMassInputs = parse_inputs(cx.s)?;
    let mut rows = Vec::new();
    let mut failed = None;
    for &eps in &inp.eps_list {
        let m = spectral::box_mass_infimum(&inp.dims, inp.index_bound, eps).map_err(compute)?;
        let gap = (m.min - m.riemann_at_argmin).abs();
        rows.push(vec![
            f(eps),
            f(m.min),
            format!("{:?}", m.argmin),
            f(m.riemann_at_argmin),
        ]);
        if !(m.min > 0.0) {
            failed.get_or_insert(format!(
                "minimum mass {} at eps = {eps} is not positive",
                m.min
            ));
        } else if gap > inp.agreement {
            failed.get_or_insert(format!("quadratures differ by {gap} at eps = {eps}"));
        }
    }
    cx.write_primary(
        &io::table_csv(&["eps", "min_mass", "argmin", "riemann"], &rows).map_err(compute)?,
    )?;
    let summary = format!(
        "box_mass: {} eps values, index bound {}",
        rows.len(),
        inp.index_bound
    );
    cx.finish(summary, failed)
}

fn run_hemisphere(cx: &mut Ctx) -> Result<RunReport, ScenarioError> {
    let inp: HemisphereInputs = parse_inputs(cx.s)?;
    let mut l_values = inp.l_values.clone();
    l_values.sort_unstable();
    let res: Vec<spectral::HemisphereMass> = l_values
        .iter()
        .map(|&l| spectral::hemisphere_mode_mass(l, inp.delta))
        .collect::<Result<_, _>>()
        .map_err(compute)?;
    let rows: Vec<Vec<String>> = res
        .iter()
        .map(|h| {
            vec![
                h.l.to_string(),
                f(h.band_mass),
                f(h.c_l),
                f(h.normalization_ratio),
            ]
        })
        .collect();
    cx.write_primary(&io::table_csv(&["l", "band_mass", "c_l", "ratio"], &rows).map_err(compute)?)?;
    let monotone = res.windows(2).all(|w| w[1].band_mass >= w[0].band_mass);
    let summary = format!(
        "hemisphere: {} modes, band half-width {}",
        res.len(),
        inp.delta
    );
    cx.finish(
        summary,
        (!monotone).then(|| "band mass decreases in l".to_string()),
    )
}

fn run_torus(cx: &mut Ctx) -> Result<RunReport, ScenarioError> {
    let inp: TorusInputs = parse_inputs(cx.s)?;
    let spec = spectral::mapping_torus_spectrum(inp.section, inp.alpha, inp.length, inp.count)
        .map_err(compute)?;
    let rows: Vec<Vec<String>> = spec
        .eigendata
        .iter()
        .enumerate()
        .map(|(i, e)| {
            vec![
                i.to_string(),
                e.m.to_string(),
                e.j.to_string(),
                e.k.to_string(),
                f(e.mu),
                f(e.nu),
                f(e.eigenvalue),
            ]
        })
        .collect();
    cx.write_primary(
        &io::table_csv(&["index", "m", "j", "k", "mu", "nu", "eigenvalue"], &rows)
            .map_err(compute)?,
    )?;
    let c = spec.verify_basis(inp.check_pairs, cx.s.seed);
    let summary = format!(
        "torus_spectrum: {} eigenvalues, orthogonality defect {}, norm defect {}",
        rows.len(),
        c.max_orthogonality_defect,
        c.max_norm_defect
    );
    let failed = (c.max_orthogonality_defect > inp.basis_tol || c.max_norm_defect > inp.basis_tol)
        .then(|| "eigenbasis not orthogonal with squared norm L".to_string());
    cx.finish(summary, failed)
}

fn run_observability(cx: &mut Ctx) -> Result<RunReport, ScenarioError> {
    let inp: ObservabilityInputs = parse_inputs(cx.s)?;
    let s_values = match inp.s_values {
        SValues::List(v) => v,
        SValues::Log { lo, hi, count } => spectral::shifted_log_grid(lo, hi, count),
    };
    let omega = inp.grid.boundary_layer(inp.omega_fraction);
    let constants: Vec<f64> = match &inp.cross_modes {
        None => {
            spectral::observability_sweep(&inp.grid, &omega, &s_values)
                .map_err(compute)?
                .constants
        }
        Some(modes) => s_values
            .iter()
            .map(|&s| {
                spectral::product_observability(&inp.grid, &omega, modes, s).map(|r| r.constant)
            })
            .collect::<Result<_, _>>()
            .map_err(compute)?,
    };
    let rows: Vec<Vec<String>> = s_values
        .iter()
        .zip(&constants)
        .map(|(s, c)| vec![f(*s), f(*c)])
        .collect();
    cx.write_primary(&io::table_csv(&["s", "C"], &rows).map_err(compute)?)?;
    let sup = constants.iter().copied().fold(0.0, f64::max);
    let failed = if inp.cross_modes.is_none() {
        s_values
            .iter()
            .zip(&constants)
            .find(|(s, c)| **s <= -1.0 && **c > spectral::negative_shift_bound(**s).min(1.0) + 1e-9)
            .map(|(s, c)| format!("C({s}) = {c} exceeds the negative-shift bound"))
    } else {
        None
    };
    let summary = format!("observability: {} shifts, sup C = {sup}", rows.len());
    cx.finish(summary, failed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> PathBuf {
        let d =
            std::env::temp_dir().join(format!("polytube-scenario-{name}-{}", std::process::id()));
        std::fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn unknown_fields_rejected() {
        let e = parse_scenario(r#"{"kind": "trace", "inputs": {}, "bogus": 1}"#).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let s = parse_scenario(
            r#"{"kind": "hemisphere", "inputs": {"l_values": [2], "delta": 0.1, "x": 0}}"#,
        )
        .unwrap();
        let e = run(&s, &RunOptions::default()).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn shipped_scenarios_validate() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
        let mut seen = 0;
        for e in std::fs::read_dir(dir).unwrap() {
            let path = e.unwrap().path();
            if path.extension().is_some_and(|x| x == "json") {
                let s = parse_scenario(&std::fs::read_to_string(&path).unwrap()).unwrap();
                validate_inputs(&s).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
                seen += 1;
            }
        }
        assert!(seen >= 13);
    }

    #[test]
    fn missing_polytope_file() {
        let s = parse_scenario(
            r#"{"kind": "enumerate", "inputs": {"polytope": {"file": "nope.json"}, "eps": 0.2,
                "max_word_period": 4, "max_length": 5}}"#,
        )
        .unwrap();
        let e = run(&s, &RunOptions::default()).unwrap_err();
        assert_eq!(e.exit_code(), 3);
    }

    #[test]
    fn vertical_trace_alternates() {
        let d = tmp("trace");
        let s = parse_scenario(
            r#"{"kind": "trace", "inputs": {"polytope": {"builtin": "unit_square"},
                "start": {"pos": [0.3, 0.5], "dir": [0, 1]}, "limits": {"max_events": 6}}}"#,
        )
        .unwrap();
        let r = run(
            &s,
            &RunOptions {
                base_dir: d.clone(),
                ..Default::default()
            },
        )
        .unwrap();
        let text = std::fs::read_to_string(&r.artifacts[0]).unwrap();
        let facets: Vec<String> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(3).unwrap().to_string())
            .collect();
        assert_eq!(facets.len(), 6);
        assert!(facets.windows(2).all(|w| w[0] != w[1]));
        assert!(facets.iter().step_by(2).all(|x| *x == facets[0]));
    }
}
