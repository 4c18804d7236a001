//! CSV and SVG artifacts for studies and error reports.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use super::{ErrorReport, ReferenceGrid, StudyRow};
use crate::adapt::{loop_log_csv, AdaptRun};
use crate::error::Result;
use crate::mesh::{ParamMesh, SvgFrame};

pub fn study_csv(rows: &[StudyRow]) -> String {
    let mut s = String::from("loop,N,errorInf\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{:.17e}", r.step, r.n, r.error_inf);
    }
    s
}

/// One line per grid point: `k1,k2,element,error` with an empty error where
/// the point was excluded.
pub fn band_errors_csv(report: &ErrorReport, grid: &ReferenceGrid, band: usize) -> String {
    let mut s = String::from("k1,k2,error\n");
    for (k, e) in grid.points.iter().zip(&report.errors[band]) {
        let e = e.map(|v| format!("{v:.17e}")).unwrap_or_default();
        let _ = writeln!(s, "{:.17e},{:.17e},{e}", k.k1, k.k2);
    }
    s
}

/// A named polyline of (N, error) pairs.
pub struct Series<'a> {
    pub name: &'a str,
    pub rows: &'a [StudyRow],
}

const COLORS: [&str; 4] = ["#264653", "#e76f51", "#2a9d8f", "#8d5fd3"];

/// Log-log plot of errorInf against N.
pub fn convergence_svg(series: &[Series]) -> String {
    let (w, h, m) = (640.0, 480.0, 60.0);
    let pts = series.iter().flat_map(|s| s.rows.iter()).filter(|r| r.error_inf > 0.0);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for r in pts {
        let (x, y) = ((r.n as f64).log10(), r.error_inf.log10());
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let (x0, x1, y0, y1) = (x0.floor(), x1.ceil().max(x0.floor() + 1.0), y0.floor(), y1.ceil().max(y0.floor() + 1.0));
    let map = |n: f64, e: f64| {
        (
            m + (n.log10() - x0) / (x1 - x0) * (w - 2.0 * m),
            h - m - (e.log10() - y0) / (y1 - y0) * (h - 2.0 * m),
        )
    };
    let mut s = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">
<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>
"#,
        w - 2.0 * m,
        h - 2.0 * m
    );
    for d in x0 as i32..=x1 as i32 {
        let (x, _) = map(10f64.powi(d), 1.0);
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" font-size="12" text-anchor="middle">1e{d}</text>"#, h - m + 18.0);
    }
    for d in y0 as i32..=y1 as i32 {
        let (_, y) = map(1.0, 10f64.powi(d));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{y:.1}" font-size="12" text-anchor="end">1e{d}</text>"#, m - 6.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">N</text>"#, w / 2.0, h - 15.0);
    let _ = writeln!(s, r#"<text x="15" y="{:.1}" font-size="13" transform="rotate(-90 15 {:.1})" text-anchor="middle">errorInf</text>"#, h / 2.0, h / 2.0);
    for (i, ser) in series.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let line: Vec<String> = ser
            .rows
            .iter()
            .filter(|r| r.error_inf > 0.0)
            .map(|r| {
                let (x, y) = map(r.n as f64, r.error_inf);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="1.5"/>"#, line.join(" "));
        for p in &line {
            let (x, y) = p.split_once(',').unwrap_or(("0", "0"));
            let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="3" fill="{c}"/>"#);
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" fill="{c}">{}</text>"#,
            w - m - 120.0,
            m + 18.0 * (i + 1) as f64,
            ser.name
        );
    }
    s.push_str("</svg>\n");
    s
}

/// One circle per grid point, coloured by log10 of the band error.
pub fn error_heat_svg(mesh: &ParamMesh, grid: &ReferenceGrid, report: &ErrorReport, band: usize) -> String {
    let frame = SvgFrame::new(&mesh.domain(), 800.0);
    let mut s = mesh.to_svg(&BTreeSet::new());
    s.truncate(s.len() - "</svg>\n".len());
    let logs: Vec<f64> = report.errors[band]
        .iter()
        .flatten()
        .filter(|e| **e > 0.0)
        .map(|e| e.log10())
        .collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for (k, e) in grid.points.iter().zip(&report.errors[band]) {
        let (x, y) = frame.map(*k);
        let fill = match e {
            Some(v) if *v > 0.0 && hi > lo => {
                let t = (v.log10() - lo) / (hi - lo);
                format!("rgb({},{},{})", (255.0 * t) as u8, 40, (255.0 * (1.0 - t)) as u8)
            }
            Some(_) => "rgb(0,40,255)".to_string(),
            None => "white".to_string(),
        };
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2" fill="{fill}"/>"#);
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `loops.csv`, `errors_band_i.csv` (final loop), `mesh_loop_n.svg`
/// per loop and `convergence.svg` into `dir`.
pub fn write_study(
    dir: &Path,
    run: &AdaptRun,
    rows: &[StudyRow],
    last: &ErrorReport,
    grid: &ReferenceGrid,
    baselines: &[Series],
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("loops.csv"), loop_log_csv(&run.log))?;
    std::fs::write(dir.join("study.csv"), study_csv(rows))?;
    for band in 0..last.errors.len() {
        std::fs::write(
            dir.join(format!("errors_band_{}.csv", band + 1)),
            band_errors_csv(last, grid, band),
        )?;
    }
    for (i, st) in run.states.iter().enumerate() {
        std::fs::write(
            dir.join(format!("mesh_loop_{}.svg", i + 1)),
            st.mesh.to_svg(&st.report.marked),
        )?;
    }
    if let Some(st) = run.states.last() {
        std::fs::write(dir.join("error_heat.svg"), error_heat_svg(&st.mesh, grid, last, 0))?;
    }
    let mut series = vec![Series { name: "adaptive", rows }];
    series.extend(baselines.iter().map(|b| Series { name: b.name, rows: b.rows }));
    std::fs::write(dir.join("convergence.svg"), convergence_svg(&series))?;
    Ok(())
}
