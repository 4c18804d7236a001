//! Experiment orchestration: reference grids, relative error reports,
//! convergence studies over the adaptive loops and uniform baselines.

pub mod export;

use std::collections::BTreeSet;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapt::{adapt_mesh, interpolate_state, AdaptConfig, AdaptRun, ConformingDegrees};
use crate::bands::BandProvider;
use crate::error::{Error, Result};
use crate::interp::{global_interpolate_bands, GlobalInterpolant};
use crate::mesh::WaveVector;
use crate::MAX_DEGREE;

/// Triangular lattice with `side` points per edge of the domain triangle.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceGrid {
    pub side: usize,
    pub points: Vec<WaveVector>,
}

impl ReferenceGrid {
    pub fn new(domain: [WaveVector; 3], side: usize) -> Result<Self> {
        if side == 0 {
            return Err(Error::InvalidInput("grid side must be >= 1".into()));
        }
        let d = (side - 1).max(1) as f64;
        let mut points = Vec::with_capacity(side * (side + 1) / 2);
        for i in 0..side {
            for j in 0..side - i {
                let (a, b) = (i as f64 / d, j as f64 / d);
                points.push(domain[0] * (1.0 - a - b) + domain[1] * a + domain[2] * b);
            }
        }
        Ok(Self { side, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Provider frequencies ω at every grid point, computed once.
#[derive(Clone, Debug)]
pub struct ReferenceValues {
    pub omega: Vec<Vec<f64>>,
}

impl ReferenceValues {
    pub fn compute(provider: &dyn BandProvider, grid: &ReferenceGrid) -> Result<Self> {
        let omega = grid
            .points
            .par_iter()
            .map(|&k| {
                provider.omega(k).map_err(|e| Error::Provider {
                    k,
                    msg: e.to_string(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { omega })
    }
}

/// Denominators below this are excluded from relative errors.
pub const MIN_DENOMINATOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ErrorLocation {
    pub band: usize,
    pub point: usize,
    pub k: WaveVector,
    pub element: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ErrorReport {
    /// e_i(k) per reported band (zero-based band index = position), `None`
    /// where the reference frequency is below [`MIN_DENOMINATOR`].
    pub errors: Vec<Vec<Option<f64>>>,
    pub error_inf: f64,
    pub argmax: Option<ErrorLocation>,
    /// Sampling-point count of the interpolants.
    pub n: usize,
    /// Grid evaluations where an interpolated λ was negative.
    pub clamped: usize,
}

impl ErrorReport {
    /// Max error of one band.
    pub fn band_max(&self, band: usize) -> f64 {
        self.errors[band].iter().flatten().copied().fold(0.0, f64::max)
    }
}

pub fn error_report(
    interpolants: &[GlobalInterpolant],
    provider: &dyn BandProvider,
    grid: &ReferenceGrid,
) -> Result<ErrorReport> {
    let reference = ReferenceValues::compute(provider, grid)?;
    error_report_with(interpolants, &reference, grid)
}

/// e_i(k) = |ω_i(k) - ω̂_i(k)| / ω_i(k) for interpolant i (band i).
pub fn error_report_with(
    interpolants: &[GlobalInterpolant],
    reference: &ReferenceValues,
    grid: &ReferenceGrid,
) -> Result<ErrorReport> {
    let first = interpolants
        .first()
        .ok_or_else(|| Error::InvalidInput("no interpolants".into()))?;
    if reference.omega.len() != grid.len() {
        return Err(Error::InvalidInput("reference values do not match grid".into()));
    }
    let mesh = first.mesh().clone();
    let elements: Vec<usize> = grid
        .points
        .par_iter()
        .map(|&k| mesh.locate(k))
        .collect::<Result<_>>()?;
    let mut errors = Vec::with_capacity(interpolants.len());
    let mut clamped = 0;
    for (i, gi) in interpolants.iter().enumerate() {
        if !Arc::ptr_eq(gi.mesh(), &mesh) && **gi.mesh() != *mesh {
            return Err(Error::InvalidInput("interpolants live on different meshes".into()));
        }
        let e: Vec<(Option<f64>, bool)> = grid
            .points
            .par_iter()
            .zip(elements.par_iter())
            .zip(reference.omega.par_iter())
            .map(|((&k, &el), row)| {
                let lam = gi.evaluate_in(el, k);
                let w = row[i];
                let e = (w.abs() >= MIN_DENOMINATOR).then(|| (w - lam.max(0.0).sqrt()).abs() / w);
                (e, lam < 0.0)
            })
            .collect();
        clamped += e.iter().filter(|x| x.1).count();
        errors.push(e.into_iter().map(|x| x.0).collect::<Vec<_>>());
    }
    let mut error_inf = 0.0;
    let mut argmax = None;
    for (band, e) in errors.iter().enumerate() {
        for (point, v) in e.iter().enumerate() {
            if let Some(v) = *v {
                if v > error_inf || argmax.is_none() {
                    error_inf = v;
                    argmax = Some(ErrorLocation {
                        band,
                        point,
                        k: grid.points[point],
                        element: elements[point],
                    });
                }
            }
        }
    }
    Ok(ErrorReport {
        errors,
        error_inf,
        argmax,
        n: first.num_samples(),
        clamped,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    #[serde(rename = "loop")]
    pub step: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "errorInf")]
    pub error_inf: f64,
}

#[derive(Clone, Debug)]
pub struct ConvergenceStudy {
    pub run: AdaptRun,
    pub rows: Vec<StudyRow>,
    pub reports: Vec<ErrorReport>,
}

/// Runs the adaptive loop once to `loops` and evaluates the interpolant of
/// every intermediate loop, reporting the first `report_bands` bands.
pub fn convergence_study(
    provider: &dyn BandProvider,
    config: &AdaptConfig,
    loops: usize,
    grid: &ReferenceGrid,
    report_bands: usize,
) -> Result<ConvergenceStudy> {
    if loops == 0 || loops > config.n_max {
        return Err(Error::InvalidInput(format!(
            "loops = {loops} must lie in 1..=nMax"
        )));
    }
    check_report_bands(config, report_bands)?;
    let cfg = AdaptConfig {
        n_max: loops,
        ..config.clone()
    };
    let run = adapt_mesh(provider, &cfg)?;
    let reference = ReferenceValues::compute(provider, grid)?;
    let mut rows = Vec::with_capacity(loops);
    let mut reports = Vec::with_capacity(loops);
    for n in 1..=loops {
        let state = run.state_at(n)?;
        let gi = interpolate_state(provider, &state, cfg.num_bands)?;
        let report = error_report_with(&gi[..report_bands], &reference, grid)?;
        rows.push(StudyRow {
            step: n,
            n: report.n,
            error_inf: report.error_inf,
        });
        reports.push(report);
    }
    Ok(ConvergenceStudy { run, rows, reports })
}

fn check_report_bands(config: &AdaptConfig, report_bands: usize) -> Result<()> {
    if report_bands == 0 || report_bands > config.num_bands - 1 {
        return Err(Error::InvalidInput(format!(
            "reportBands = {report_bands} must lie in 1..=L-1"
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    /// Degree 2 everywhere, every element bisected per step.
    UniformH,
    /// Fixed initial mesh, degree raised by one per step.
    UniformP,
}

impl std::str::FromStr for Baseline {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform-h" => Ok(Baseline::UniformH),
            "uniform-p" => Ok(Baseline::UniformP),
            _ => Err(Error::InvalidInput(format!("unknown baseline `{s}`"))),
        }
    }
}

/// Uniform baseline, stopping after the first step whose N exceeds
/// `budget_n` (so the budget is always covered).
pub fn baseline_study(
    provider: &dyn BandProvider,
    mode: Baseline,
    config: &AdaptConfig,
    budget_n: usize,
    grid: &ReferenceGrid,
    report_bands: usize,
) -> Result<Vec<StudyRow>> {
    config.validate()?;
    check_report_bands(config, report_bands)?;
    let reference = ReferenceValues::compute(provider, grid)?;
    let mut mesh = config.initial_mesh()?;
    let mut rows = Vec::new();
    let mut step = 1;
    loop {
        let degree = match mode {
            Baseline::UniformH => 2,
            Baseline::UniformP => step + 1,
        };
        if degree > MAX_DEGREE {
            break;
        }
        let degrees = ConformingDegrees::from_element_degrees(&mesh, vec![degree; mesh.num_elements()])?;
        let shared = Arc::new(mesh.clone());
        let gi = global_interpolate_bands(provider, shared, &degrees, 0..report_bands)?;
        let report = error_report_with(&gi, &reference, grid)?;
        rows.push(StudyRow {
            step,
            n: report.n,
            error_inf: report.error_inf,
        });
        if report.n > budget_n {
            break;
        }
        if mode == Baseline::UniformH {
            let all: BTreeSet<usize> = (0..mesh.num_elements()).collect();
            mesh = mesh.refine_marked(&all)?;
        }
        step += 1;
    }
    Ok(rows)
}

/// Least-squares line y = a x + b with coefficient of determination.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidInput("fit needs two or more paired points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("fit abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - slope * a - intercept).powi(2))
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(LineFit {
        slope,
        intercept,
        r2,
    })
}

/// Rows used by the asymptotic fits.
pub const FIT_ROWS: usize = 4;

fn tail(rows: &[StudyRow], count: usize) -> &[StudyRow] {
    &rows[rows.len().saturating_sub(count)..]
}

/// Slope of log errorInf against log N over the last [`FIT_ROWS`] rows.
pub fn loglog_slope(rows: &[StudyRow]) -> Result<LineFit> {
    let t = tail(rows, FIT_ROWS);
    let x: Vec<f64> = t.iter().map(|r| (r.n as f64).ln()).collect();
    let y: Vec<f64> = t.iter().map(|r| r.error_inf.ln()).collect();
    linear_fit(&x, &y)
}

/// Fit of log errorInf against N^{1/3} over the given rows.
pub fn cube_root_fit(rows: &[StudyRow]) -> Result<LineFit> {
    let x: Vec<f64> = rows.iter().map(|r| (r.n as f64).cbrt()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.error_inf.ln()).collect();
    linear_fit(&x, &y)
}

/// Baseline error at `n` by log-log interpolation between bracketing rows;
/// `None` outside the baseline's range.
pub fn interpolate_error(rows: &[StudyRow], n: usize) -> Option<f64> {
    let x = (n as f64).ln();
    rows.windows(2).find_map(|w| {
        let (a, b) = ((w[0].n as f64).ln(), (w[1].n as f64).ln());
        (a <= x && x <= b).then(|| {
            let t = if b > a { (x - a) / (b - a) } else { 0.0 };
            (w[0].error_inf.ln() * (1.0 - t) + w[1].error_inf.ln() * t).exp()
        })
    })
}

/// Adaptive and baseline errors at the largest adaptive N inside the
/// baseline's N range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchedComparison {
    pub n: usize,
    pub adaptive: f64,
    pub baseline: f64,
}

pub fn matched_comparison(adaptive: &[StudyRow], baseline: &[StudyRow]) -> Option<MatchedComparison> {
    adaptive.iter().rev().find_map(|r| {
        interpolate_error(baseline, r.n).map(|b| MatchedComparison {
            n: r.n,
            adaptive: r.error_inf,
            baseline: b,
        })
    })
}
