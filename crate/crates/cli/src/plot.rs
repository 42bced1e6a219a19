//! Figure data: one long-format CSV per metric, optionally an SVG.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use policysim_core::dgp::EFFECT_YEARS;
use policysim_core::{EstimatorId, MetricsRow, MetricsTable, Scenario};

use crate::CliError;

pub const PLOT_HEADER: [&str; 5] = ["figure", "scenario", "estimator", "event_time", "value"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Figure {
    Bias,
    Se,
    Coverage,
    Rmse,
}

impl Figure {
    pub const ALL: [Figure; 4] = [Figure::Bias, Figure::Se, Figure::Coverage, Figure::Rmse];

    pub fn label(self) -> &'static str {
        match self {
            Figure::Bias => "bias",
            Figure::Se => "se",
            Figure::Coverage => "coverage",
            Figure::Rmse => "rmse",
        }
    }

    fn title(self) -> &'static str {
        match self {
            Figure::Bias => "Standardized absolute bias",
            Figure::Se => "Empirical standard error",
            Figure::Coverage => "95% interval coverage",
            Figure::Rmse => "RMSE",
        }
    }

    fn value(self, row: &MetricsRow) -> Option<f64> {
        match self {
            Figure::Bias => row.std_abs_bias,
            Figure::Se => row.emp_se,
            Figure::Coverage => row.coverage,
            Figure::Rmse => row.rmse,
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One line of one figure panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub figure: Figure,
    pub scenario: Scenario,
    pub estimator: EstimatorId,
    /// Sorted by event time; undefined metric values are left out.
    pub points: Vec<(i32, f64)>,
}

/// Series of one figure, ordered by scenario (first appearance) then
/// estimator (first appearance). Only event times 1..5 are plotted.
pub fn series(table: &MetricsTable, figure: Figure) -> Vec<PlotSeries> {
    let mut keys: Vec<(Scenario, EstimatorId)> = Vec::new();
    let mut scenarios: Vec<Scenario> = Vec::new();
    let mut estimators: Vec<EstimatorId> = Vec::new();
    for r in &table.rows {
        if !scenarios.contains(&r.scenario) {
            scenarios.push(r.scenario);
        }
        if !estimators.contains(&r.estimator) {
            estimators.push(r.estimator);
        }
    }
    for &s in &scenarios {
        for &e in &estimators {
            if table.rows.iter().any(|r| r.scenario == s && r.estimator == e) {
                keys.push((s, e));
            }
        }
    }
    keys.into_iter()
        .map(|(scenario, estimator)| {
            let mut points: Vec<(i32, f64)> = table
                .rows
                .iter()
                .filter(|r| r.scenario == scenario && r.estimator == estimator)
                .filter(|r| (1..=EFFECT_YEARS as i32).contains(&r.event_time))
                .filter_map(|r| figure.value(r).map(|v| (r.event_time, v)))
                .collect();
            points.sort_by_key(|p| p.0);
            PlotSeries {
                figure,
                scenario,
                estimator,
                points,
            }
        })
        .collect()
}

pub fn write_series_csv(series: &[PlotSeries], path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(PLOT_HEADER)?;
    for s in series {
        for (e, v) in &s.points {
            w.write_record([
                s.figure.label().to_string(),
                s.scenario.label().to_string(),
                s.estimator.label().to_string(),
                e.to_string(),
                v.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Affine map from (event time, value) to SVG pixel coordinates; larger
/// values plot higher.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl Frame {
    pub fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let fx = (x - self.x_range.0) / (self.x_range.1 - self.x_range.0);
        let fy = (y - self.y_range.0) / (self.y_range.1 - self.y_range.0);
        (self.left + fx * self.width, self.top + (1.0 - fy) * self.height)
    }
}

/// Value range of the series, padded when flat so the map stays finite.
pub fn value_range(series: &[PlotSeries]) -> (f64, f64) {
    let values = series.iter().flat_map(|s| s.points.iter().map(|p| p.1));
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let lo = lo.min(0.0);
    if hi - lo < 1e-12 {
        (lo, lo + 1.0)
    } else {
        (lo, hi)
    }
}

const PANEL_W: f64 = 320.0;
const PANEL_H: f64 = 220.0;
const MARGIN: f64 = 48.0;
const LEGEND_W: f64 = 120.0;
const COLORS: [&str; 7] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d"];

/// Panel frames, two per row, sharing one value axis.
pub fn panel_frames(n_panels: usize, y_range: (f64, f64)) -> Vec<Frame> {
    (0..n_panels)
        .map(|i| Frame {
            x_range: (1.0, EFFECT_YEARS as f64),
            y_range,
            left: MARGIN + (i % 2) as f64 * (PANEL_W + MARGIN),
            top: MARGIN + (i / 2) as f64 * (PANEL_H + MARGIN),
            width: PANEL_W,
            height: PANEL_H,
        })
        .collect()
}

/// One panel per scenario, one polyline per estimator.
pub fn render_svg(figure: Figure, series: &[PlotSeries]) -> String {
    let mut scenarios: Vec<Scenario> = Vec::new();
    let mut estimators: Vec<EstimatorId> = Vec::new();
    for s in series {
        if !scenarios.contains(&s.scenario) {
            scenarios.push(s.scenario);
        }
        if !estimators.contains(&s.estimator) {
            estimators.push(s.estimator);
        }
    }
    let y_range = value_range(series);
    let frames = panel_frames(scenarios.len().max(1), y_range);
    let rows = scenarios.len().max(1).div_ceil(2);
    let width = 2.0 * (PANEL_W + MARGIN) + MARGIN + LEGEND_W;
    let height = rows as f64 * (PANEL_H + MARGIN) + MARGIN;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<text x="{MARGIN}" y="20" font-size="14">{}</text>"#, figure.title());
    for (scenario, frame) in scenarios.iter().zip(&frames) {
        let (x0, y0) = (frame.left, frame.top);
        let _ = writeln!(
            svg,
            r##"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="#999"/>"##,
            frame.width, frame.height
        );
        let _ = writeln!(svg, r#"<text x="{x0}" y="{}">{scenario}</text>"#, y0 - 6.0);
        for e in 1..=EFFECT_YEARS {
            let (x, y) = frame.map(e as f64, y_range.0);
            let _ = writeln!(svg, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{e}</text>"#, y + 14.0);
        }
        for v in [y_range.0, y_range.1] {
            let (x, y) = frame.map(1.0, v);
            let _ = writeln!(svg, r#"<text x="{:.2}" y="{y:.2}" text-anchor="end">{v:.3}</text>"#, x - 4.0);
        }
        for s in series.iter().filter(|s| s.scenario == *scenario) {
            let color = COLORS[estimators.iter().position(|e| *e == s.estimator).unwrap_or(0) % COLORS.len()];
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" data-estimator="{}" points="{}"/>"#,
                s.estimator,
                polyline_points(frame, &s.points)
            );
        }
    }
    let legend_x = 2.0 * (PANEL_W + MARGIN) + MARGIN / 2.0;
    for (i, e) in estimators.iter().enumerate() {
        let y = MARGIN + 16.0 * i as f64;
        let color = COLORS[i % COLORS.len()];
        let _ = writeln!(
            svg,
            r#"<line x1="{legend_x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{e}</text>"#,
            legend_x + 18.0,
            legend_x + 22.0,
            y + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// `points` attribute of a polyline: pixel pairs with two decimals.
pub fn polyline_points(frame: &Frame, points: &[(i32, f64)]) -> String {
    points
        .iter()
        .map(|&(e, v)| {
            let (x, y) = frame.map(e as f64, v);
            format!("{x:.2},{y:.2}")
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Files written by [`emit_plot_data`].
#[derive(Debug, Default)]
pub struct PlotOutput {
    pub csv: Vec<PathBuf>,
    pub svg: Vec<PathBuf>,
    pub series_per_figure: usize,
}

/// Writes `<stem>_<figure>.csv` (and `.svg` when asked) into `out_dir` for
/// each of the four figures.
pub fn emit_plot_data(metrics_path: &Path, out_dir: &Path, svg: bool) -> Result<PlotOutput, CliError> {
    let table = MetricsTable::load_csv(metrics_path).map_err(|e| CliError::Metrics {
        path: metrics_path.to_path_buf(),
        message: e.to_string(),
    })?;
    if table.rows.is_empty() {
        log::warn!("{} has no rows; plot files will be empty", metrics_path.display());
    }
    fs::create_dir_all(out_dir).map_err(|source| CliError::Write {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let stem = metrics_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "metrics".into());
    let mut output = PlotOutput::default();
    for figure in Figure::ALL {
        let lines = series(&table, figure);
        output.series_per_figure = lines.len();
        let path = out_dir.join(format!("{stem}_{figure}.csv"));
        write_series_csv(&lines, &path)?;
        output.csv.push(path);
        if svg {
            let path = out_dir.join(format!("{stem}_{figure}.svg"));
            fs::write(&path, render_svg(figure, &lines)).map_err(|source| CliError::Write {
                path: path.clone(),
                source,
            })?;
            output.svg.push(path);
        }
    }
    Ok(output)
}
