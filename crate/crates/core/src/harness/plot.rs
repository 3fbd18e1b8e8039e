//! SVG line plots of aggregate CSVs: one file per metric, one series per
//! CSV, mean line over a shaded mean ± std band.
//!
//! The root element carries the data-to-pixel mapping as `data-*`
//! attributes so plotted values can be read back from the file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{AggregateRow, CSV_HEADER};
use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    AvgReward,
    Bound,
    KlHyper,
    TaskKlSum,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::AvgReward, Metric::Bound, Metric::KlHyper, Metric::TaskKlSum];

    pub fn file_stem(self) -> &'static str {
        match self {
            Metric::AvgReward => "avg_reward",
            Metric::Bound => "bound",
            Metric::KlHyper => "kl_hyper",
            Metric::TaskKlSum => "task_kl_sum",
        }
    }

    fn title(self) -> &'static str {
        match self {
            Metric::AvgReward => "average reward",
            Metric::Bound => "lower bound",
            Metric::KlHyper => "KL(hyperposterior || hyperprior)",
            Metric::TaskKlSum => "sum of expected task KL",
        }
    }

    /// `(mean, std)`; metrics without a std column get a zero band.
    fn value(self, r: &AggregateRow) -> (f64, f64) {
        match self {
            Metric::AvgReward => (r.mean_avg_reward, r.std_avg_reward),
            Metric::Bound => (r.mean_bound, r.std_bound),
            Metric::KlHyper => (r.mean_kl_hyper, 0.0),
            Metric::TaskKlSum => (r.mean_task_kl_sum, 0.0),
        }
    }
}

/// Reads an aggregate CSV, rejecting any header other than the exact schema.
pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregateRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    for (i, expected) in CSV_HEADER.iter().enumerate() {
        match header.get(i) {
            Some(got) if got == *expected => {}
            Some(got) => {
                return Err(Error::Schema(format!(
                    "{}: column {} is '{got}', expected '{expected}'",
                    path.display(),
                    i + 1
                )))
            }
            None => return Err(Error::Schema(format!("{}: missing column '{expected}'", path.display()))),
        }
    }
    if let Some(extra) = header.get(CSV_HEADER.len()) {
        return Err(Error::Schema(format!("{}: unexpected column '{extra}'", path.display())));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let field = |i: usize| -> Result<f64> {
            rec[i].trim().parse::<f64>().map_err(|_| {
                Error::Schema(format!(
                    "{}: column '{}' has non-numeric value '{}'",
                    path.display(),
                    CSV_HEADER[i],
                    &rec[i]
                ))
            })
        };
        let task_index = rec[0].trim().parse::<usize>().map_err(|_| {
            Error::Schema(format!("{}: column 'task_index' has value '{}'", path.display(), &rec[0]))
        })?;
        rows.push(AggregateRow {
            task_index,
            mean_avg_reward: field(1)?,
            std_avg_reward: field(2)?,
            mean_bound: field(3)?,
            std_bound: field(4)?,
            mean_kl_hyper: field(5)?,
            mean_task_kl_sum: field(6)?,
        });
    }
    Ok(rows)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values
        .filter(|v| v.is_finite())
        .fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
}

/// Renders one metric of several series as an SVG document.
pub fn render_svg(metric: Metric, series: &[(String, Vec<AggregateRow>)]) -> String {
    let points = || series.iter().flat_map(|(_, rows)| rows.iter());
    let (x_min, x_max) = range(points().map(|r| r.task_index as f64)).unwrap_or((0.0, 1.0));
    let (x_min, x_max) = if x_max > x_min { (x_min, x_max) } else { (x_min - 0.5, x_max + 0.5) };
    let ys = points().flat_map(|r| {
        let (m, s) = metric.value(r);
        [m - s, m + s]
    });
    let (y_min, y_max) = range(ys).unwrap_or((0.0, 1.0));
    let (y_min, y_max) = if y_max > y_min {
        let pad = 0.05 * (y_max - y_min);
        (y_min - pad, y_max + pad)
    } else {
        (y_min - 0.5, y_max + 0.5)
    };
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let py = |y: f64| TOP + (y_max - y) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" data-x-min="{x_min}" data-x-max="{x_max}" data-y-min="{y_min}" data-y-max="{y_max}" data-plot-left="{LEFT}" data-plot-top="{TOP}" data-plot-width="{plot_w}" data-plot-height="{plot_h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(metric.title())
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let fx = x_min + (x_max - x_min) * i as f64 / 4.0;
        let fy = y_min + (y_max - y_min) * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{:.0}</text>"#,
            px(fx),
            TOP + plot_h + 16.0,
            fx
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="11">{:.3}</text>"#,
            LEFT - 6.0,
            py(fy) + 4.0,
            fy
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">task</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );

    for (idx, (name, rows)) in series.iter().enumerate() {
        let color = COLORS[idx % COLORS.len()];
        let finite: Vec<(f64, f64, f64)> = rows
            .iter()
            .map(|r| {
                let (m, s) = metric.value(r);
                (r.task_index as f64, m, s)
            })
            .filter(|(_, m, s)| m.is_finite() && s.is_finite())
            .collect();
        let _ = writeln!(svg, r#"<g class="series" data-name="{}">"#, escape(name));
        if !finite.is_empty() {
            let upper = finite.iter().map(|(x, m, s)| format!("{},{}", px(*x), py(m + s)));
            let lower = finite.iter().rev().map(|(x, m, s)| format!("{},{}", px(*x), py(m - s)));
            let band: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(
                svg,
                r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                band.join(" ")
            );
            let line: Vec<String> = finite.iter().map(|(x, m, _)| format!("{},{}", px(*x), py(*m))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline class="mean" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                line.join(" ")
            );
        }
        let ly = TOP + 10.0 + 18.0 * idx as f64;
        let lx = LEFT + plot_w + 12.0;
        let _ = writeln!(
            svg,
            r#"<g class="legend-entry"><line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text></g>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(name)
        );
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes `<out_dir>/<metric>.svg` for every metric; series are named after
/// the CSV file stems.
pub fn plot_csvs(paths: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if paths.is_empty() {
        return Err(Error::Config("plot needs at least one CSV".into()));
    }
    let series = paths
        .iter()
        .map(|p| {
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            read_aggregate_csv(p).map(|rows| (name, rows))
        })
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for metric in Metric::ALL {
        let path = out_dir.join(format!("{}.svg", metric.file_stem()));
        std::fs::write(&path, render_svg(metric, &series))?;
        written.push(path);
    }
    Ok(written)
}
