//! Learning-curve aggregation and hand-emitted SVG line charts.
//!
//! Input: per-run metrics CSVs (grouped by env and method via their sibling
//! run summaries). Rows are binned onto a fixed frame grid per run, then
//! averaged across runs; the band is one standard deviation. The SVG uses
//! plain line/polygon primitives, no plotting dependency.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::{Error, Result};

/// The (frames, running-mean) series of one run.
#[derive(Debug, Clone)]
pub struct RunSeries {
    pub env: String,
    pub method: String,
    pub run_seed: u64,
    pub frames: Vec<f64>,
    pub values: Vec<f64>,
}

/// Read `frames` and `running_mean_100` from a metrics CSV, pulling env and
/// method labels from the sibling `summary_seed<K>.json` when present.
pub fn read_metrics_csv(path: &Path) -> Result<RunSeries> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{}: empty metrics file", path.display())))?;
    let cols: Vec<&str> = header.split(',').collect();
    let frames_idx = column(&cols, "frames", path)?;
    let mean_idx = column(&cols, "running_mean_100", path)?;

    let mut frames = Vec::new();
    let mut values = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        frames.push(parse_f64(fields.get(frames_idx), path)?);
        values.push(parse_f64(fields.get(mean_idx), path)?);
    }

    let (env, method, run_seed) = match sibling_summary(path) {
        Some((env, method, seed)) => (env, method, seed),
        None => (
            "unknown".to_string(),
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "run".to_string()),
            0,
        ),
    };
    Ok(RunSeries {
        env,
        method,
        run_seed,
        frames,
        values,
    })
}

fn column(cols: &[&str], name: &str, path: &Path) -> Result<usize> {
    cols.iter()
        .position(|c| *c == name)
        .ok_or_else(|| Error::Config(format!("{}: missing column {name}", path.display())))
}

fn parse_f64(field: Option<&&str>, path: &Path) -> Result<f64> {
    field
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Config(format!("{}: bad numeric field", path.display())))
}

fn sibling_summary(metrics_path: &Path) -> Option<(String, String, u64)> {
    let stem = metrics_path.file_stem()?.to_str()?;
    let seed = stem.strip_prefix("metrics_seed")?;
    let summary_path = metrics_path
        .parent()?
        .join(format!("summary_seed{seed}.json"));
    let text = std::fs::read_to_string(summary_path).ok()?;
    let v: serde_json::Value = serde_json::from_str(&text).ok()?;
    Some((
        v.get("env")?.as_str()?.to_string(),
        v.get("method")?.as_str()?.to_string(),
        v.get("run_seed")?.as_u64()?,
    ))
}

/// Mean and std across runs on a shared frame grid.
#[derive(Debug, Clone)]
pub struct AggregatedSeries {
    pub label: String,
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub runs: usize,
}

/// Bin each run's rows into `bin`-frame slots (keeping the last row per
/// slot), then average across runs over the common slot range.
pub fn aggregate(runs: &[RunSeries], bin: f64, label: &str) -> Option<AggregatedSeries> {
    if runs.is_empty() {
        return None;
    }
    let binned: Vec<BTreeMap<u64, f64>> = runs
        .iter()
        .map(|r| {
            let mut slots = BTreeMap::new();
            for (f, v) in r.frames.iter().zip(&r.values) {
                slots.insert((f / bin).floor() as u64, *v);
            }
            slots
        })
        .collect();
    let mut last_common = u64::MAX;
    for b in &binned {
        last_common = last_common.min(*b.keys().max()?);
    }

    let mut grid = Vec::new();
    let mut mean = Vec::new();
    let mut std = Vec::new();
    for slot in 0..=last_common {
        let vals: Vec<f64> = binned
            .iter()
            .filter_map(|b| b.range(..=slot).next_back().map(|(_, v)| *v))
            .collect();
        if vals.len() != binned.len() {
            continue; // slot precedes some run's first row
        }
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64;
        grid.push((slot + 1) as f64 * bin);
        mean.push(m);
        std.push(var.sqrt());
    }
    Some(AggregatedSeries {
        label: label.to_string(),
        grid,
        mean,
        std,
        runs: runs.len(),
    })
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
];

/// Render one panel: a mean line per series with a +-1 std band.
pub fn render_svg(title: &str, series: &[AggregatedSeries]) -> String {
    let (w, h) = (800.0, 480.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 40.0, 50.0);
    let plot_w = w - ml - mr;
    let plot_h = h - mt - mb;

    let x_max = series
        .iter()
        .flat_map(|s| s.grid.last().copied())
        .fold(1.0f64, f64::max);
    let y_max = series
        .iter()
        .flat_map(|s| s.mean.iter().zip(&s.std).map(|(m, sd)| m + sd))
        .fold(1.0f64, f64::max);
    let y_min = 0.0f64;

    let sx = move |x: f64| ml + x / x_max * plot_w;
    let sy = move |y: f64| mt + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        w / 2.0,
        title
    ));
    // Axes.
    out.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333\"/>\n",
        mt + plot_h,
        ml + plot_w,
        mt + plot_h
    ));
    out.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"#333\"/>\n",
        mt + plot_h
    ));
    for i in 0..=5 {
        let fx = x_max * i as f64 / 5.0;
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{:.0}</text>\n",
            sx(fx),
            mt + plot_h + 18.0,
            fx
        ));
        let fy = y_min + (y_max - y_min) * i as f64 / 5.0;
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.2}</text>\n",
            ml - 6.0,
            sy(fy) + 4.0,
            fy
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">frames</text>\n",
        ml + plot_w / 2.0,
        h - 12.0
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">mean return (last 100 episodes)</text>\n",
        mt + plot_h / 2.0,
        mt + plot_h / 2.0
    ));

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if s.grid.is_empty() {
            continue;
        }
        // Std band: upper path forward, lower path backward.
        let mut band = String::from("<polygon points=\"");
        for ((x, m), sd) in s.grid.iter().zip(&s.mean).zip(&s.std) {
            band.push_str(&format!("{:.2},{:.2} ", sx(*x), sy(m + sd)));
        }
        for ((x, m), sd) in s.grid.iter().zip(&s.mean).zip(&s.std).rev() {
            band.push_str(&format!("{:.2},{:.2} ", sx(*x), sy(m - sd)));
        }
        band.push_str(&format!("\" fill=\"{color}\" fill-opacity=\"0.15\" stroke=\"none\"/>\n"));
        out.push_str(&band);

        let mut line = String::from("<polyline points=\"");
        for (x, m) in s.grid.iter().zip(&s.mean) {
            line.push_str(&format!("{:.2},{:.2} ", sx(*x), sy(*m)));
        }
        line.push_str(&format!(
            "\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n"
        ));
        out.push_str(&line);

        let ly = mt + 16.0 + 16.0 * i as f64;
        out.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{color}\"/>\n",
            ml + 10.0,
            ly - 10.0
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\">{} ({} runs)</text>\n",
            ml + 28.0,
            ly,
            s.label,
            s.runs
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// Group metrics CSVs by environment, aggregate per method, and write one
/// SVG per environment into `out_dir`. Returns the written paths.
pub fn plot_files(inputs: &[PathBuf], out_dir: &Path, bin: f64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut by_env: BTreeMap<String, BTreeMap<String, Vec<RunSeries>>> = BTreeMap::new();
    for path in inputs {
        let series = read_metrics_csv(path)?;
        by_env
            .entry(series.env.clone())
            .or_default()
            .entry(series.method.clone())
            .or_default()
            .push(series);
    }
    if by_env.is_empty() {
        return Err(Error::Config("no metrics files to plot".into()));
    }
    let mut written = Vec::new();
    for (env, methods) in by_env {
        let mut panels = Vec::new();
        for (method, runs) in methods {
            if let Some(agg) = aggregate(&runs, bin, &method) {
                panels.push(agg);
            }
        }
        let svg = render_svg(&env, &panels);
        let path = out_dir.join(format!("plot_{}.svg", env.replace('/', "_")));
        std::fs::write(&path, svg)?;
        written.push(path);
    }
    Ok(written)
}
