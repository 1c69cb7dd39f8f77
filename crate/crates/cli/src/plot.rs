//! The `plot` subcommand: render CSV artifacts to SVG charts.
//!
//! Everything is validated — version line, kind, columns, at least one
//! usable row — before the output file is created, so a failed plot never
//! leaves an empty or half-drawn SVG behind.

use std::fs;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::csv::CsvTable;
use crate::CliError;

/// Smoothing factor for the overlay on learning curves.
pub const EMA_ALPHA: f64 = 0.05;
/// Seconds between position marks on the pelvis track.
const MARK_EVERY_S: f64 = 1.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    LearningCurves,
    FootHeights,
    PelvisTrack,
}

impl PlotKind {
    pub fn csv_kind(self) -> &'static str {
        match self {
            PlotKind::LearningCurves => "training",
            PlotKind::FootHeights | PlotKind::PelvisTrack => "trajectory",
        }
    }

    pub fn file_stem(self) -> &'static str {
        match self {
            PlotKind::LearningCurves => "learning_curves",
            PlotKind::FootHeights => "foot_heights",
            PlotKind::PelvisTrack => "pelvis_track",
        }
    }
}

/// Exponential moving average over `(x, y)` points, seeded at the first y.
pub fn ema(points: &[(f64, f64)], alpha: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(points.len());
    let mut level = f64::NAN;
    for &(x, y) in points {
        level = if level.is_nan() { y } else { alpha * y + (1.0 - alpha) * level };
        out.push((x, level));
    }
    out
}

fn de(what: &str, e: impl std::fmt::Display) -> CliError {
    CliError::runtime(format!("{what}: {e}"))
}

/// `(min, max)` over finite values, padded so flat lines stay visible.
fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    let span = hi - lo;
    let pad = if span < 1e-9 { lo.abs().max(1.0) * 0.1 } else { span * 0.06 };
    (lo - pad, hi + pad)
}

/// Pair a shared x column with one y column, dropping rows whose y is NaN.
fn finite_points(xs: &[f64], ys: &[f64]) -> Vec<(f64, f64)> {
    xs.iter().zip(ys).filter(|(_, y)| y.is_finite()).map(|(&x, &y)| (x, y)).collect()
}

/// Validate and render; returns the path of the SVG it wrote.
pub fn render_plot(kind: PlotKind, csv: &Path, out_dir: &Path) -> Result<PathBuf, CliError> {
    let table = CsvTable::read(csv, kind.csv_kind())?;
    if table.rows.is_empty() {
        return Err(CliError::config(format!(
            "{}: no data rows; nothing to plot",
            table.path
        )));
    }
    match kind {
        PlotKind::LearningCurves => {
            let panels = learning_curve_panels(&table)?;
            fs::create_dir_all(out_dir).map_err(|e| crate::io_runtime("cannot create", out_dir, e))?;
            let out = out_dir.join(format!("{}.svg", kind.file_stem()));
            draw_learning_curves(&panels, &out)?;
            Ok(out)
        }
        PlotKind::FootHeights => {
            let data = first_episode(&table, &["t", "ref_l", "ref_r", "foot_l", "foot_r"])?;
            fs::create_dir_all(out_dir).map_err(|e| crate::io_runtime("cannot create", out_dir, e))?;
            let out = out_dir.join(format!("{}.svg", kind.file_stem()));
            draw_foot_heights(&data, &out)?;
            Ok(out)
        }
        PlotKind::PelvisTrack => {
            let data = first_episode(&table, &["t", "pelvis_x", "target_x", "step"])?;
            fs::create_dir_all(out_dir).map_err(|e| crate::io_runtime("cannot create", out_dir, e))?;
            let out = out_dir.join(format!("{}.svg", kind.file_stem()));
            draw_pelvis_track(&data, &out)?;
            Ok(out)
        }
    }
}

struct Panel {
    title: &'static str,
    raw: Vec<(f64, f64)>,
    smooth: Vec<(f64, f64)>,
}

fn learning_curve_panels(table: &CsvTable) -> Result<Vec<Panel>, CliError> {
    let steps = table.numeric_column("steps")?;
    let mut panels = Vec::new();
    for (title, column) in [
        ("nominal imitation reward", "mean_imit_nominal"),
        ("performance reward", "mean_perf"),
        ("episode length (steps)", "mean_ep_len"),
    ] {
        let ys = table.numeric_column(column)?;
        let raw = finite_points(&steps, &ys);
        if raw.is_empty() {
            return Err(CliError::config(format!(
                "{}: column '{column}' has no finite values (no episodes finished yet); \
                 nothing to plot",
                table.path
            )));
        }
        let smooth = ema(&raw, EMA_ALPHA);
        panels.push(Panel { title, raw, smooth });
    }
    Ok(panels)
}

fn draw_learning_curves(panels: &[Panel], out: &Path) -> Result<(), CliError> {
    let root = SVGBackend::new(out, (960, 1020)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| de("plot fill", e))?;
    let areas = root.split_evenly((panels.len(), 1));
    for (panel, area) in panels.iter().zip(areas.iter()) {
        let (x_lo, x_hi) = padded_range(panel.raw.iter().map(|p| p.0));
        let (y_lo, y_hi) = padded_range(panel.raw.iter().chain(&panel.smooth).map(|p| p.1));
        let mut chart = ChartBuilder::on(area)
            .caption(panel.title, ("sans-serif", 22))
            .margin(12)
            .x_label_area_size(42)
            .y_label_area_size(60)
            .build_cartesian_2d(x_lo..x_hi, y_lo..y_hi)
            .map_err(|e| de("plot layout", e))?;
        chart
            .configure_mesh()
            .x_desc("environment steps")
            .label_style(("sans-serif", 14))
            .draw()
            .map_err(|e| de("plot mesh", e))?;
        chart
            .draw_series(LineSeries::new(panel.raw.iter().copied(), &BLUE.mix(0.35)))
            .map_err(|e| de("plot series", e))?
            .label("per update")
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], BLUE.mix(0.35)));
        chart
            .draw_series(LineSeries::new(
                panel.smooth.iter().copied(),
                BLUE.stroke_width(2),
            ))
            .map_err(|e| de("plot series", e))?
            .label("smoothed")
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], BLUE.stroke_width(2)));
        chart
            .configure_series_labels()
            .border_style(BLACK)
            .background_style(WHITE.mix(0.8))
            .draw()
            .map_err(|e| de("plot legend", e))?;
    }
    root.present().map_err(|e| de("plot write", e))
}

/// Columns of the first episode in a trajectory table, keyed as requested.
fn first_episode(table: &CsvTable, columns: &[&str]) -> Result<Vec<Vec<f64>>, CliError> {
    let episodes = table.numeric_column("episode")?;
    let first = episodes[0];
    let keep: Vec<usize> =
        episodes.iter().enumerate().filter(|(_, e)| **e == first).map(|(i, _)| i).collect();
    let mut out = Vec::with_capacity(columns.len());
    for name in columns {
        let full = table.numeric_column(name)?;
        out.push(keep.iter().map(|&i| full[i]).collect());
    }
    Ok(out)
}

fn draw_foot_heights(data: &[Vec<f64>], out: &Path) -> Result<(), CliError> {
    let (t, ref_l, ref_r, foot_l, foot_r) = (&data[0], &data[1], &data[2], &data[3], &data[4]);
    let root = SVGBackend::new(out, (960, 680)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| de("plot fill", e))?;
    let areas = root.split_evenly((2, 1));
    for (area, title, reference, actual) in [
        (&areas[0], "left foot", ref_l, foot_l),
        (&areas[1], "right foot", ref_r, foot_r),
    ] {
        let (x_lo, x_hi) = padded_range(t.iter().copied());
        let (y_lo, y_hi) = padded_range(reference.iter().chain(actual).copied());
        let mut chart = ChartBuilder::on(area)
            .caption(title, ("sans-serif", 22))
            .margin(12)
            .x_label_area_size(42)
            .y_label_area_size(60)
            .build_cartesian_2d(x_lo..x_hi, y_lo..y_hi)
            .map_err(|e| de("plot layout", e))?;
        chart
            .configure_mesh()
            .x_desc("time (s)")
            .y_desc("foot height (m)")
            .label_style(("sans-serif", 14))
            .draw()
            .map_err(|e| de("plot mesh", e))?;
        chart
            .draw_series(LineSeries::new(
                t.iter().copied().zip(reference.iter().copied()),
                RED.stroke_width(2),
            ))
            .map_err(|e| de("plot series", e))?
            .label("reference")
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], RED.stroke_width(2)));
        chart
            .draw_series(LineSeries::new(
                t.iter().copied().zip(actual.iter().copied()),
                &BLUE,
            ))
            .map_err(|e| de("plot series", e))?
            .label("actual")
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], BLUE));
        chart
            .configure_series_labels()
            .border_style(BLACK)
            .background_style(WHITE.mix(0.8))
            .draw()
            .map_err(|e| de("plot legend", e))?;
    }
    root.present().map_err(|e| de("plot write", e))
}

fn draw_pelvis_track(data: &[Vec<f64>], out: &Path) -> Result<(), CliError> {
    let (t, pelvis_x, target_x, steps) = (&data[0], &data[1], &data[2], &data[3]);
    let root = SVGBackend::new(out, (960, 540)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| de("plot fill", e))?;
    let (x_lo, x_hi) = padded_range(t.iter().copied());
    let (y_lo, y_hi) = padded_range(pelvis_x.iter().chain(target_x).copied());
    let mut chart = ChartBuilder::on(&root)
        .caption("pelvis position vs command", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(42)
        .y_label_area_size(60)
        .build_cartesian_2d(x_lo..x_hi, y_lo..y_hi)
        .map_err(|e| de("plot layout", e))?;
    chart
        .configure_mesh()
        .x_desc("time (s)")
        .y_desc("x position (m)")
        .label_style(("sans-serif", 14))
        .draw()
        .map_err(|e| de("plot mesh", e))?;
    chart
        .draw_series(LineSeries::new(
            t.iter().copied().zip(pelvis_x.iter().copied()),
            &BLUE,
        ))
        .map_err(|e| de("plot series", e))?
        .label("pelvis")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], BLUE));
    chart
        .draw_series(LineSeries::new(
            t.iter().copied().zip(target_x.iter().copied()),
            RED.stroke_width(2),
        ))
        .map_err(|e| de("plot series", e))?
        .label("target")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], RED.stroke_width(2)));
    // Dots on the pelvis line at fixed wall-time intervals make speed
    // differences visible at a glance.
    let policy_dt = if t.len() > 1 { t[1] - t[0] } else { MARK_EVERY_S };
    let mark_every = (MARK_EVERY_S / policy_dt).round().max(1.0) as u64;
    let marks: Vec<(f64, f64)> = steps
        .iter()
        .zip(t.iter().zip(pelvis_x.iter()))
        .filter(|(s, _)| (**s as u64) % mark_every == 0)
        .map(|(_, (&x, &y))| (x, y))
        .collect();
    chart
        .draw_series(marks.iter().map(|&(x, y)| Circle::new((x, y), 4, BLUE.filled())))
        .map_err(|e| de("plot marks", e))?;
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.8))
        .draw()
        .map_err(|e| de("plot legend", e))?;
    root.present().map_err(|e| de("plot write", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csv::{num, CsvWriter, TRAINING_COLUMNS, TRAJECTORY_COLUMNS};

    fn training_csv(dir: &Path, rows: usize) -> PathBuf {
        let path = dir.join("training.csv");
        let mut w = CsvWriter::create(&path, "training", TRAINING_COLUMNS).unwrap();
        for i in 0..rows {
            let filled = i >= 2; // first rows have an empty episode window
            let v = if filled { i as f64 } else { f64::NAN };
            w.row(&[
                num((i + 1) as f64),
                num(((i + 1) * 4096) as f64),
                num(v),
                num(v * 10.0),
                num(v / 100.0),
                num(v / 50.0),
                num(0.01),
                num(0.5),
                num(0.1),
                num(0.02),
            ])
            .unwrap();
        }
        w.flush().unwrap();
        path
    }

    fn trajectory_csv(dir: &Path) -> PathBuf {
        let path = dir.join("traj.csv");
        let mut w = CsvWriter::create(&path, "trajectory", TRAJECTORY_COLUMNS).unwrap();
        for ep in 0..2 {
            for k in 1..=80u32 {
                let t = k as f64 * 0.03;
                w.row(&[
                    num(ep as f64),
                    num(k as f64),
                    num(t),
                    num(0.0),
                    num(1.0),
                    num(0.1),
                    num(0.05),
                    num(0.09),
                    num(0.06),
                    num(0.4 * t),
                    num(0.95),
                    num(0.01),
                    num(0.4),
                    num(0.4 * t),
                    num(0.8),
                    num(0.5),
                    num(0.7),
                    num(1.0),
                    num(0.0),
                ])
                .unwrap();
            }
        }
        w.flush().unwrap();
        path
    }

    #[test]
    fn ema_seeds_at_first_point() {
        let pts = [(0.0, 1.0), (1.0, 3.0)];
        let sm = ema(&pts, 0.05);
        assert_eq!(sm[0], (0.0, 1.0));
        assert!((sm[1].1 - (0.95 * 1.0 + 0.05 * 3.0)).abs() < 1e-15);
    }

    #[test]
    fn learning_curves_render_and_label_environment_steps() {
        let dir = tempfile::tempdir().unwrap();
        let csv = training_csv(dir.path(), 6);
        let out = render_plot(PlotKind::LearningCurves, &csv, dir.path()).unwrap();
        let svg = std::fs::read_to_string(&out).unwrap();
        assert!(svg.contains("environment steps"), "x axis must name its unit");
        assert!(svg.contains("nominal imitation reward"));
        assert!(svg.contains("episode length"));
    }

    #[test]
    fn trajectory_plots_render() {
        let dir = tempfile::tempdir().unwrap();
        let csv = trajectory_csv(dir.path());
        let feet = render_plot(PlotKind::FootHeights, &csv, dir.path()).unwrap();
        assert!(std::fs::read_to_string(&feet).unwrap().contains("right foot"));
        let track = render_plot(PlotKind::PelvisTrack, &csv, dir.path()).unwrap();
        let svg = std::fs::read_to_string(&track).unwrap();
        assert!(svg.contains("x position (m)"));
        assert!(svg.contains("circle"), "marks should be drawn");
    }

    #[test]
    fn empty_csv_errors_before_creating_any_file() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("empty.csv");
        let w = CsvWriter::create(&csv, "training", TRAINING_COLUMNS).unwrap();
        drop(w);
        let out_dir = dir.path().join("plots");
        let err = render_plot(PlotKind::LearningCurves, &csv, &out_dir).unwrap_err();
        assert!(err.to_string().contains("no data rows"), "{err}");
        assert!(!out_dir.join("learning_curves.svg").exists());
        assert!(!out_dir.exists(), "output directory should not be created on failure");
    }

    #[test]
    fn all_nan_column_errors_without_output() {
        let dir = tempfile::tempdir().unwrap();
        let csv = training_csv(dir.path(), 2); // both rows still NaN
        let out_dir = dir.path().join("plots");
        let err = render_plot(PlotKind::LearningCurves, &csv, &out_dir).unwrap_err();
        assert!(err.to_string().contains("no finite values"), "{err}");
        assert!(!out_dir.exists());
    }

    #[test]
    fn kind_and_schema_mismatches_are_precise() {
        let dir = tempfile::tempdir().unwrap();
        let csv = trajectory_csv(dir.path());
        let err = render_plot(PlotKind::LearningCurves, &csv, dir.path()).unwrap_err();
        assert!(err.to_string().contains("'training'"), "{err}");

        // right kind, wrong columns
        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "# singait-csv-v1 training\nupdate,foo\n1,2\n").unwrap();
        let err = render_plot(PlotKind::LearningCurves, &bad, dir.path()).unwrap_err();
        assert!(err.to_string().contains("'steps'"), "{err}");
    }
}
