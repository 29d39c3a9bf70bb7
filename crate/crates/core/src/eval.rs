//! Reconstruction scoring and report output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::{fmt_f64, write_json, Dataset};

/// `‖y − ŷ‖² / ‖y‖²`.
pub fn nmse(y: ArrayView1<f64>, y_hat: ArrayView1<f64>) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::shape(y.len(), y_hat.len()));
    }
    let denom = y.dot(&y);
    if denom == 0.0 {
        return Err(Error::Domain("NMSE of a zero-norm reference spectrum".into()));
    }
    let num: f64 = y.iter().zip(y_hat.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(num / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quartiles by linear interpolation; whiskers at the most extreme points
/// within 1.5·IQR of the box; everything beyond is an outlier.
pub fn boxplot_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::Validation("box statistics of an empty sample".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("box statistics of non-finite values".into()));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&s, 0.25);
    let median = quantile_sorted(&s, 0.5);
    let q3 = quantile_sorted(&s, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = s.iter().copied().filter(|v| *v >= lo_fence && *v <= hi_fence).collect();
    let outliers = s.iter().copied().filter(|v| *v < lo_fence || *v > hi_fence).collect();
    Ok(BoxStats {
        median,
        q1,
        q3,
        whisker_low: inside.first().copied().unwrap_or(q1),
        whisker_high: inside.last().copied().unwrap_or(q3),
        outliers,
        mean: s[0] + s.iter().map(|v| v - s[0]).sum::<f64>() / s.len() as f64,
        min: s[0],
        max: s[s.len() - 1],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// Noisy spectra in, clean spectra as the reference.
    #[default]
    Noisy,
    Clean,
}

/// A fitted model that maps standardized spectra to reconstructions.
pub trait Reconstructor {
    fn input_len(&self) -> usize;
    fn reconstruct_rows(&self, rows: ArrayView2<f64>) -> Result<Array2<f64>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_name: String,
    pub dataset_name: String,
    pub input_mode: InputMode,
    pub nmse: Vec<f64>,
    pub summary: BoxStats,
}

/// Per-row NMSE of the model's reconstructions against the clean spectra.
pub fn evaluate_model(
    model: &dyn Reconstructor,
    model_name: &str,
    dataset: &Dataset,
    input_mode: InputMode,
) -> Result<EvalReport> {
    if model.input_len() != dataset.n_bins() {
        return Err(Error::Incompatible(format!(
            "model {model_name} expects {} bins, dataset {} has {}",
            model.input_len(),
            dataset.spec.name,
            dataset.n_bins()
        )));
    }
    let inputs = match input_mode {
        InputMode::Noisy => &dataset.noisy,
        InputMode::Clean => &dataset.clean,
    };
    let recon = model.reconstruct_rows(inputs.view())?;
    let scores = nmse_rows(dataset.clean.view(), recon.view())?;
    let summary = boxplot_stats(&scores)?;
    Ok(EvalReport {
        model_name: model_name.to_string(),
        dataset_name: dataset.spec.name.clone(),
        input_mode,
        nmse: scores,
        summary,
    })
}

pub fn nmse_rows(targets: ArrayView2<f64>, recon: ArrayView2<f64>) -> Result<Vec<f64>> {
    if targets.dim() != recon.dim() {
        return Err(Error::shape(
            format!("{:?}", targets.dim()),
            format!("{:?}", recon.dim()),
        ));
    }
    targets
        .axis_iter(Axis(0))
        .zip(recon.axis_iter(Axis(0)))
        .map(|(t, r)| nmse(t, r))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReportBundle {
    pub reports: Vec<EvalReport>,
}

/// Writes `report.json`, `nmse.csv` and `boxplot.svg` into `out_dir`.
pub fn render_report(reports: &[EvalReport], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if reports.is_empty() {
        return Err(Error::Validation("no reports to render".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let json_path = out_dir.join("report.json");
    write_json(
        &json_path,
        &ReportBundle {
            reports: reports.to_vec(),
        },
    )?;

    let csv_path = out_dir.join("nmse.csv");
    let mut csv = String::from("model,dataset,row,nmse\n");
    for r in reports {
        for (i, v) in r.nmse.iter().enumerate() {
            let _ = writeln!(csv, "{},{},{i},{}", r.model_name, r.dataset_name, fmt_f64(*v));
        }
    }
    fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;

    let svg_path = out_dir.join("boxplot.svg");
    fs::write(&svg_path, boxplot_svg(reports)).map_err(|e| Error::io(&svg_path, e))?;
    Ok(vec![json_path, csv_path, svg_path])
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// One box-whisker glyph per report on a log10 NMSE axis.
pub fn boxplot_svg(reports: &[EvalReport]) -> String {
    const BOX_W: f64 = 80.0;
    const LEFT: f64 = 70.0;
    const TOP: f64 = 20.0;
    const PLOT_H: f64 = 320.0;
    const BOTTOM: f64 = 110.0;
    let width = LEFT + BOX_W * reports.len() as f64 + 20.0;
    let height = TOP + PLOT_H + BOTTOM;

    let floor = 1e-12;
    let logv = |v: f64| v.max(floor).log10();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in reports {
        lo = lo.min(logv(r.summary.min));
        hi = hi.max(logv(r.summary.max));
    }
    let (lo, hi) = (lo.floor(), hi.ceil().max(lo.floor() + 1.0));
    let y = |v: f64| TOP + PLOT_H * (hi - logv(v)) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#
    );
    let mut d = lo as i64;
    while d <= hi as i64 {
        let yy = y(10f64.powi(d as i32));
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"##,
            width - 20.0,
            LEFT - 6.0,
            yy + 4.0
        );
        d += 1;
    }
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" transform="rotate(-90 14 {:.2})" text-anchor="middle">NMSE</text>"#,
        TOP + PLOT_H / 2.0,
        TOP + PLOT_H / 2.0
    );
    for (i, r) in reports.iter().enumerate() {
        let b = &r.summary;
        let cx = LEFT + BOX_W * (i as f64 + 0.5);
        let half = BOX_W * 0.3;
        let _ = writeln!(s, r#"<g class="box" data-model="{}">"#, xml_escape(&r.model_name));
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            y(b.whisker_high),
            y(b.q3)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            y(b.q1),
            y(b.whisker_low)
        );
        for w in [b.whisker_low, b.whisker_high] {
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
                cx - half / 2.0,
                y(w),
                cx + half / 2.0,
                y(w)
            );
        }
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#9ecae1" stroke="black"/>"##,
            cx - half,
            y(b.q3),
            2.0 * half,
            (y(b.q1) - y(b.q3)).max(0.5)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            y(b.median),
            cx + half,
            y(b.median)
        );
        let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{:.2}" r="3" fill="red"/>"#, y(b.mean));
        for o in &b.outliers {
            let _ = writeln!(
                s,
                r#"<circle cx="{cx:.2}" cy="{:.2}" r="1.5" fill="none" stroke="gray"/>"#,
                y(*o)
            );
        }
        let ly = TOP + PLOT_H + 12.0;
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{ly:.2}" transform="rotate(40 {cx:.2} {ly:.2})">{} / {}</text>"#,
            xml_escape(&r.model_name),
            xml_escape(&r.dataset_name)
        );
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}
