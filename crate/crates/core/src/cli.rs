//! Command-line front end. [`run`] is the whole program; the binary only
//! forwards process arguments and streams to it.

use std::ffi::OsString;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bounds::{min_trace_bound, refine_q0, tangent_bound, verify_regularizer, FeasibilityReport, RefineOptions, RegularizerBase};
use crate::ellipsoid::{Direction, Ellipsoid, EllipsoidRecord};
use crate::error::{Error, Result};
use crate::linalg;
use crate::minkowski::{
    check_containment, make_direction_grid, sample_boundary, write_boundary_csv, BoundarySample, DirectionGrid,
    EllipsoidSum,
};
use crate::reachset::{
    boundedness_check, input_shape_matrices, project_ellipsoid, project_points, project_sum, reach_sum,
    settling_horizon, LtvSystem, ReachSpec, SystemRecord, SETTLING_DEFINITION,
};
use crate::svg::{ellipse_polyline, render_svg, Curve, PlotStyle, ELLIPSE_SEGMENTS};

pub const THREADS_ENV: &str = "ELLIPSUM_THREADS";
const DEFAULT_CHECK_TOL: f64 = 1e-9;
const DEFAULT_SETTLE_TOL: f64 = 1e-6;
const PLANE_GRID: usize = 720;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    SumBoundary,
    BoundTangent,
    BoundMinTrace,
    BoundRefineQ0,
    Check,
    Reach,
    ReachBound,
    Settle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "ellipsum", version, about = "Minkowski sums of ellipsoids, outer ellipsoidal bounds and reachable sets")]
pub struct RunConfig {
    pub command: Command,
    /// Input JSON; standard input when omitted or "-".
    #[arg(long = "in", value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long = "out", value_name = "PATH")]
    pub output: Option<PathBuf>,
    /// Number of grid directions (at least 4).
    #[arg(long, value_name = "N")]
    pub grid: Option<usize>,
    #[arg(long, value_name = "N", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "X")]
    pub tol: Option<f64>,
    /// Direction components for bound-tangent.
    #[arg(long, value_name = "V", num_args = 1.., allow_negative_numbers = true)]
    pub ell: Option<Vec<f64>>,
    /// 1-based coordinate pair for planar output.
    #[arg(long, value_name = "A B", num_args = 2)]
    pub axes: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Reach step k (default: horizon + 1).
    #[arg(long, value_name = "K")]
    pub steps: Option<usize>,
}

/// Ellipsoid input: an object with `ellipsoids` and optional `bound` / `q0`,
/// or a bare array of ellipsoids.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipsoidDoc {
    pub ellipsoids: Vec<EllipsoidRecord>,
    #[serde(default)]
    pub bound: Option<EllipsoidRecord>,
    #[serde(default)]
    pub q0: Option<Vec<Vec<f64>>>,
}

impl EllipsoidDoc {
    pub fn parse(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let doc = if value.is_array() {
            EllipsoidDoc {
                ellipsoids: serde_json::from_value(value).map_err(|e| Error::Parse(e.to_string()))?,
                bound: None,
                q0: None,
            }
        } else {
            serde_json::from_value(value).map_err(|e| Error::Parse(e.to_string()))?
        };
        Ok(doc)
    }

    pub fn sum(&self) -> Result<EllipsoidSum> {
        EllipsoidSum::new(self.ellipsoids.iter().map(Ellipsoid::from_record).collect::<Result<_>>()?)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityJson {
    pub pd_ok: bool,
    pub support_ok: bool,
    pub min_margin: f64,
    pub grid_count: usize,
}

impl From<&FeasibilityReport> for FeasibilityJson {
    fn from(r: &FeasibilityReport) -> Self {
        Self {
            pd_ok: r.pd_ok,
            support_ok: r.support_ok,
            min_margin: r.min_margin,
            grid_count: r.grid.count(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub shape: Vec<Vec<f64>>,
    pub center: Vec<f64>,
    pub trace: f64,
    pub q0: Vec<Vec<f64>>,
    pub feasibility: FeasibilityJson,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tangency_point: Option<Vec<f64>>,
}

impl BoundReport {
    fn new(bound: &Ellipsoid, q0: &DMatrix<f64>, certificate: &FeasibilityReport) -> Self {
        Self {
            shape: linalg::matrix_to_rows(bound.shape()),
            center: bound.center().iter().copied().collect(),
            trace: bound.trace(),
            q0: linalg::matrix_to_rows(q0),
            feasibility: certificate.into(),
            direction: None,
            tangency_point: None,
        }
    }
}

#[derive(Serialize)]
struct SampleJson<'a> {
    direction: &'a [f64],
    point: Vec<f64>,
    support: f64,
}

fn samples_json(samples: &[BoundarySample]) -> Vec<SampleJson<'_>> {
    samples
        .iter()
        .map(|s| SampleJson {
            direction: s.direction.as_slice(),
            point: s.point.iter().copied().collect(),
            support: s.support,
        })
        .collect()
}

/// Runs one command. Returns the process exit code; errors are reported as
/// JSON on `stderr`.
pub fn run<I, T>(args: I, stdin: &mut dyn Read, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            return report_error(&Error::InvalidArgument(e.kind().to_string() + ": " + &first_line(&e.to_string())), stderr);
        }
    };
    match configure_threads().and_then(|()| execute(&config, stdin, stdout)) {
        Ok(code) => code,
        Err(e) => report_error(&e, stderr),
    }
}

fn first_line(s: &str) -> String {
    s.lines().next().unwrap_or_default().trim_start_matches("error: ").to_string()
}

pub fn error_json(e: &Error) -> serde_json::Value {
    json!({
        "error": {
            "code": e.kind(),
            "category": e.category().as_str(),
            "message": e.to_string(),
        },
        "exit_code": e.category().exit_code(),
    })
}

fn report_error(e: &Error, stderr: &mut dyn Write) -> i32 {
    let _ = writeln!(stderr, "{}", error_json(e));
    e.category().exit_code()
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("{THREADS_ENV} must be a non-negative integer, got {raw:?}")))?;
    // a second initialization in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn read_input(config: &RunConfig, stdin: &mut dyn Read) -> Result<String> {
    match config.input.as_deref() {
        Some(p) if p != Path::new("-") => Ok(fs::read_to_string(p)?),
        _ => {
            let mut s = String::new();
            stdin.read_to_string(&mut s)?;
            Ok(s)
        }
    }
}

fn emit(config: &RunConfig, bytes: &[u8], stdout: &mut dyn Write) -> Result<()> {
    match &config.output {
        Some(p) => fs::write(p, bytes)?,
        None => stdout.write_all(bytes)?,
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s.into_bytes()
}

impl RunConfig {
    fn grid(&self, dim: usize) -> Result<DirectionGrid> {
        let count = self.grid.unwrap_or_else(|| DirectionGrid::default_count(dim));
        if count < 4 {
            return Err(Error::InvalidArgument(format!("--grid must be at least 4, got {count}")));
        }
        make_direction_grid(dim, count, self.seed)
    }

    fn tol(&self, default: f64) -> Result<f64> {
        let tol = self.tol.unwrap_or(default);
        if !tol.is_finite() || tol <= 0.0 {
            return Err(Error::InvalidArgument(format!("--tol must be positive, got {tol}")));
        }
        Ok(tol)
    }

    fn format(&self, default: Format, allowed: &[Format]) -> Result<Format> {
        let f = self.format.unwrap_or(default);
        if !allowed.contains(&f) {
            return Err(Error::InvalidArgument(format!(
                "--format {} is not supported by this command",
                f.to_possible_value().expect("no skipped variants").get_name()
            )));
        }
        Ok(f)
    }

    /// 0-based axes from the 1-based flag.
    fn axes(&self, dim: usize) -> Result<Option<(usize, usize)>> {
        match self.axes.as_deref() {
            None => Ok(None),
            Some(&[a, b]) => {
                if a == 0 || b == 0 || a == b || a > dim || b > dim {
                    return Err(Error::BadAxes { a, b, dim });
                }
                Ok(Some((a - 1, b - 1)))
            }
            Some(_) => Err(Error::InvalidArgument("--axes takes two coordinates".into())),
        }
    }

    /// Planes drawn when no `--axes` is given.
    fn planes(&self, dim: usize) -> Result<Vec<(usize, usize)>> {
        if let Some(axes) = self.axes(dim)? {
            return Ok(vec![axes]);
        }
        match dim {
            2 => Ok(vec![(0, 1)]),
            d if d >= 3 => Ok(vec![(0, 1), (0, 2), (1, 2)]),
            _ => Err(Error::InvalidArgument("planar output needs at least two coordinates".into())),
        }
    }
}

fn execute(config: &RunConfig, stdin: &mut dyn Read, stdout: &mut dyn Write) -> Result<i32> {
    let text = read_input(config, stdin)?;
    match config.command {
        Command::SumBoundary => sum_boundary(config, &text, stdout),
        Command::BoundTangent => bound_tangent(config, &text, stdout),
        Command::BoundMinTrace => bound_min_trace(config, &text, stdout),
        Command::BoundRefineQ0 => bound_refine(config, &text, stdout),
        Command::Check => check(config, &text, stdout),
        Command::Reach => reach(config, &text, stdout),
        Command::ReachBound => reach_bound(config, &text, stdout),
        Command::Settle => settle(config, &text, stdout),
    }
}

/// Planar figure: the exact sum boundary plus labeled ellipses.
fn plane_svg(
    sum: &EllipsoidSum,
    ellipses: &[(&str, &Ellipsoid)],
    extra: Vec<Curve>,
    axes: (usize, usize),
    title: String,
) -> Result<String> {
    let (sum2, full) = if sum.dim() == 2 && axes == (0, 1) {
        (sum.clone(), true)
    } else {
        (project_sum(sum, axes)?, false)
    };
    let grid = make_direction_grid(2, PLANE_GRID, 0)?;
    let boundary = sample_boundary(&sum2, &grid)?;
    let mut curves = vec![Curve::outline(
        "exact sum boundary",
        boundary.iter().map(|s| [s.point[0], s.point[1]]).collect(),
    )];
    for (label, e) in ellipses {
        let e2 = if full { (*e).clone() } else { project_ellipsoid(e, axes)? };
        curves.push(Curve::outline(*label, ellipse_polyline(&e2, ELLIPSE_SEGMENTS)?));
    }
    curves.extend(extra);
    let style = PlotStyle {
        title: Some(title),
        x_label: format!("x{}", axes.0 + 1),
        y_label: format!("x{}", axes.1 + 1),
        ..PlotStyle::default()
    };
    render_svg(&curves, &style)
}

fn single_plane(config: &RunConfig, dim: usize) -> Result<(usize, usize)> {
    match config.axes(dim)? {
        Some(a) => Ok(a),
        None if dim == 2 => Ok((0, 1)),
        None => Err(Error::InvalidArgument("--format svg needs --axes for inputs above two dimensions".into())),
    }
}

fn sum_boundary(config: &RunConfig, text: &str, stdout: &mut dyn Write) -> Result<i32> {
    let sum = EllipsoidDoc::parse(text)?.sum()?;
    let format = config.format(Format::Csv, &[Format::Csv, Format::Json, Format::Svg])?;
    let bytes = match format {
        Format::Csv => {
            let samples = sample_boundary(&sum, &config.grid(sum.dim())?)?;
            let mut buf = Vec::new();
            write_boundary_csv(&samples, &mut buf)?;
            buf
        }
        Format::Json => {
            let samples = sample_boundary(&sum, &config.grid(sum.dim())?)?;
            to_json(&json!({ "samples": samples_json(&samples) }))
        }
        Format::Svg => {
            let axes = single_plane(config, sum.dim())?;
            plane_svg(&sum, &[], vec![], axes, "Minkowski sum".into())?.into_bytes()
        }
    };
    emit(config, &bytes, stdout)?;
    Ok(0)
}

fn bound_output(
    config: &RunConfig,
    sum: &EllipsoidSum,
    report: &BoundReport,
    figure: &[(&str, &Ellipsoid)],
    title: &str,
    stdout: &mut dyn Write,
) -> Result<i32> {
    let bytes = match config.format(Format::Json, &[Format::Json, Format::Svg])? {
        Format::Svg => {
            let axes = single_plane(config, sum.dim())?;
            let mut extra = vec![];
            if let Some(p) = &report.tangency_point {
                extra.push(Curve::points("tangency point", vec![[p[axes.0], p[axes.1]]]));
            }
            plane_svg(sum, figure, extra, axes, title.into())?.into_bytes()
        }
        _ => to_json(report),
    };
    emit(config, &bytes, stdout)?;
    Ok(0)
}

fn bound_tangent(config: &RunConfig, text: &str, stdout: &mut dyn Write) -> Result<i32> {
    let doc = EllipsoidDoc::parse(text)?;
    let sum = doc.sum()?;
    let ell = config
        .ell
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("bound-tangent requires --ell".into()))?;
    if ell.len() != sum.dim() {
        return Err(Error::DimensionMismatch {
            expected: sum.dim(),
            found: ell.len(),
        });
    }
    let l = Direction::from_slice(ell)?;
    let q0 = doc.q0.as_ref().map(|rows| linalg::matrix_from_rows(rows)).transpose()?;
    let grid = config.grid(sum.dim())?;
    let t = tangent_bound(&sum, &l, q0.as_ref(), &grid)?;
    let mut report = BoundReport::new(&t.ellipsoid, &t.regularizer.matrix, &t.regularizer.certificate);
    report.direction = Some(l.as_slice().to_vec());
    report.tangency_point = Some(t.tangency_point.iter().copied().collect());
    bound_output(config, &sum, &report, &[("tangent bound", &t.ellipsoid)], "Tangent bound", stdout)
}

fn bound_min_trace(config: &RunConfig, text: &str, stdout: &mut dyn Write) -> Result<i32> {
    let sum = EllipsoidDoc::parse(text)?.sum()?;
    let bound = min_trace_bound(&sum)?;
    let zero = DMatrix::zeros(sum.dim(), sum.dim());
    let grid = config.grid(sum.dim())?;
    let cert = verify_regularizer(&sum, &zero, &RegularizerBase::Shape(bound.shape().clone()), &grid)?;
    let report = BoundReport::new(&bound, &zero, &cert);
    bound_output(config, &sum, &report, &[("minimum-trace bound", &bound)], "Minimum-trace bound", stdout)
}

fn bound_refine(config: &RunConfig, text: &str, stdout: &mut dyn Write) -> Result<i32> {
    let doc = EllipsoidDoc::parse(text)?;
    let sum = doc.sum()?;
    let base = match &doc.bound {
        Some(r) => Ellipsoid::from_record(r)?,
        None => min_trace_bound(&sum)?,
    };
    let grid = config.grid(sum.dim())?;
    let r = refine_q0(&sum, &base, &grid, &RefineOptions::default())?;
    let refined = Ellipsoid::new(base.shape() + &r.matrix, base.center().clone())?;
    let report = BoundReport::new(&refined, &r.matrix, &r.certificate);
    bound_output(
        config,
        &sum,
        &report,
        &[("base bound", &base), ("refined bound", &refined)],
        "Regularized bound",
        stdout,
    )
}

fn check(config: &RunConfig, text: &str, stdout: &mut dyn Write) -> Result<i32> {
    let doc = EllipsoidDoc::parse(text)?;
    let sum = doc.sum()?;
    let bound_rec = doc
        .bound
        .as_ref()
        .ok_or_else(|| Error::Parse("check needs a \"bound\" ellipsoid in the input".into()))?;
    let grid = config.grid(sum.dim())?;
    config.format(Format::Json, &[Format::Json])?;
    let (ok, value) = match &doc.q0 {
        // certify Q₀ against the bound's shape
        Some(rows) => {
            let q0 = linalg::matrix_from_rows(rows)?;
            let base_shape = linalg::matrix_from_rows(&bound_rec.shape)?;
            let cert = verify_regularizer(&sum, &q0, &RegularizerBase::Shape(base_shape), &grid)?;
            let value = json!({
                "pd_ok": cert.pd_ok,
                "support_ok": cert.support_ok,
                "min_margin": cert.min_margin,
                "min_direction": grid.directions()[cert.min_index].as_slice(),
                "trace_change": cert.trace_change,
                "tol": cert.tol,
                "grid_count": grid.count(),
            });
            (cert.feasible(), value)
        }
        None => {
            let bound = Ellipsoid::from_record(bound_rec)?;
            let r = check_containment(&bound, &sum, &grid, config.tol(DEFAULT_CHECK_TOL)?)?;
            let value = json!({
                "contained": r.contained,
                "min_margin": r.min_margin,
                "min_direction": r.min_direction.as_slice(),
                "tol": r.tol,
                "grid_count": r.grid_count,
            });
            (r.contained, value)
        }
    };
    emit(config, &to_json(&value), stdout)?;
    Ok(if ok { 0 } else { 2 })
}

fn load_system(text: &str) -> Result<LtvSystem> {
    let record: SystemRecord = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    LtvSystem::from_record(&record)
}

fn reach_step(config: &RunConfig, sys: &LtvSystem) -> usize {
    config.steps.unwrap_or(sys.horizon() + 1)
}

fn plane_path(out: &Path, axes: (usize, usize)) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("reach");
    out.with_file_name(format!("{stem}_x{}x{}.svg", axes.0 + 1, axes.1 + 1))
}

fn reach(config: &RunConfig, text: &str, stdout: &mut dyn Write) -> Result<i32> {
    let sys = load_system(text)?;
    let spec = ReachSpec::new(&sys, reach_step(config, &sys))?;
    let format = config.format(Format::Json, &[Format::Json, Format::Csv, Format::Svg])?;
    let table = input_shape_matrices(&spec);
    let sum = reach_sum(&spec)?;
    let grid = config.grid(sys.state_dim())?;
    let samples = sample_boundary(&sum, &grid)?;
    match format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_boundary_csv(&samples, &mut buf)?;
            emit(config, &buf, stdout)?;
        }
        Format::Json => {
            let bound = min_trace_bound(&sum)?;
            let warnings: Vec<_> = table
                .warnings
                .iter()
                .map(|w| json!({"channel": w.channel, "step": w.step, "reason": w.reason}))
                .collect();
            let value = json!({
                "k": spec.k(),
                "state_dim": sys.state_dim(),
                "terms": sum.len(),
                "warnings": warnings,
                "bound": {
                    "shape": linalg::matrix_to_rows(bound.shape()),
                    "center": bound.center().iter().copied().collect::<Vec<_>>(),
                    "trace": bound.trace(),
                },
                "samples": samples_json(&samples),
            });
            emit(config, &to_json(&value), stdout)?;
        }
        Format::Svg => {
            let bound = min_trace_bound(&sum)?;
            let planes = config.planes(sys.state_dim())?;
            if planes.len() > 1 && config.output.is_none() {
                return Err(Error::InvalidArgument(
                    "reach --format svg writes one file per plane and needs --out".into(),
                ));
            }
            for axes in planes {
                let pts = Curve::points("boundary samples", project_points(&samples, axes)?);
                let svg = plane_svg(
                    &sum,
                    &[("minimum-trace bound", &bound)],
                    vec![pts],
                    axes,
                    format!("Reachable set at k = {}", spec.k()),
                )?;
                match &config.output {
                    Some(out) if sys.state_dim() > 2 || config.axes.is_some() => {
                        fs::write(plane_path(out, axes), svg)?
                    }
                    _ => emit(config, svg.as_bytes(), stdout)?,
                }
            }
        }
    }
    Ok(0)
}

fn reach_bound(config: &RunConfig, text: &str, stdout: &mut dyn Write) -> Result<i32> {
    let sys = load_system(text)?;
    let spec = ReachSpec::new(&sys, reach_step(config, &sys))?;
    let sum = reach_sum(&spec)?;
    let bound = min_trace_bound(&sum)?;
    let zero = DMatrix::zeros(sum.dim(), sum.dim());
    let grid = config.grid(sum.dim())?;
    let cert = verify_regularizer(&sum, &zero, &RegularizerBase::Shape(bound.shape().clone()), &grid)?;
    let report = BoundReport::new(&bound, &zero, &cert);
    bound_output(config, &sum, &report, &[("minimum-trace bound", &bound)], "Reach bound", stdout)
}

fn settle(config: &RunConfig, text: &str, stdout: &mut dyn Write) -> Result<i32> {
    let sys = load_system(text)?;
    let tol = config.tol(DEFAULT_SETTLE_TOL)?;
    config.format(Format::Json, &[Format::Json])?;
    let k = reach_step(config, &sys);
    let report = boundedness_check(&sys, k, tol)?;
    let horizon = if sys.is_time_invariant() {
        Some(settling_horizon(&sys, tol, k.max(sys.horizon() + 1))?)
    } else {
        None
    };
    let value = json!({
        "settling_horizon": horizon,
        "definition": SETTLING_DEFINITION,
        "boundedness": report,
    });
    emit(config, &to_json(&value), stdout)?;
    Ok(0)
}

/// Parses an ellipsoid file the same way the CLI does.
pub fn read_ellipsoid_doc(path: &Path) -> Result<EllipsoidDoc> {
    EllipsoidDoc::parse(&fs::read_to_string(path)?)
}

