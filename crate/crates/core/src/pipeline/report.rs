//! Aggregation of finished runs into tables and plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::manifest::{ExperimentManifest, MANIFEST_FILE};
use super::{METRICS_JSON, TOY_RUN_FILE};
use crate::error::{Error, Result};
use crate::metrics::{MeanSd, MetricReport};
use crate::toy::ToyRun;
use crate::util::write_atomic;

pub const TOY_SUMMARY_FILE: &str = "toy_summary.csv";
pub const SEQUENCE_SUMMARY_FILE: &str = "sequences_summary.csv";

const TOY_METRICS: [(&str, &str); 4] = [
    ("l1", "L1 to uniform"),
    ("true_modes", "true modes"),
    ("false_modes", "false modes"),
    ("new_modes", "new modes"),
];

/// Run directories among `paths`: each path itself when it holds a manifest,
/// otherwise its immediate subdirectories that do.
pub fn collect_run_dirs(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.join(MANIFEST_FILE).is_file() {
            out.push(p.clone());
            continue;
        }
        if !p.is_dir() {
            return Err(Error::MissingFile(p.clone()));
        }
        let mut subs: Vec<PathBuf> = std::fs::read_dir(p)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|d| d.join(MANIFEST_FILE).is_file())
            .collect();
        subs.sort();
        out.extend(subs);
    }
    Ok(out)
}

struct ToyGroupRow {
    group: String,
    budget: usize,
    n: usize,
    stats: [MeanSd; 4],
}

fn toy_values(run: &ToyRun) -> BTreeMap<usize, [f64; 4]> {
    run.curve
        .iter()
        .map(|p| {
            (
                p.budget,
                [
                    p.l1,
                    p.counts.true_modes as f64,
                    p.counts.false_modes as f64,
                    p.counts.new_modes as f64,
                ],
            )
        })
        .collect()
}

/// Writes summary tables and plots for the given run directories into `out`.
/// Returns the files written.
pub fn emit_report(paths: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>> {
    let dirs = collect_run_dirs(paths)?;
    if dirs.is_empty() {
        return Err(Error::EmptyInput("no run directories with a manifest".into()));
    }
    std::fs::create_dir_all(out)?;
    // group -> budget -> per-run values
    let mut toy: BTreeMap<String, BTreeMap<usize, Vec<[f64; 4]>>> = BTreeMap::new();
    let mut seq: BTreeMap<String, Vec<MetricReport>> = BTreeMap::new();
    for d in &dirs {
        let m = ExperimentManifest::load(d).ok_or_else(|| Error::Corrupt(format!("unreadable manifest in {}", d.display())))?;
        let group = m.sigma_mode().unwrap_or_else(|| "unknown".into());
        match m.task().as_deref() {
            Some("toy") => {
                let run: ToyRun = serde_json::from_slice(&read(&d.join(TOY_RUN_FILE))?)?;
                let g = toy.entry(group).or_default();
                for (b, v) in toy_values(&run) {
                    g.entry(b).or_default().push(v);
                }
            }
            _ => {
                let r: MetricReport = serde_json::from_slice(&read(&d.join(METRICS_JSON))?)?;
                seq.entry(group).or_default().push(r);
            }
        }
    }
    let mut written = Vec::new();
    if !toy.is_empty() {
        let rows = toy
            .iter()
            .flat_map(|(g, budgets)| {
                budgets.iter().map(move |(b, runs)| -> Result<ToyGroupRow> {
                    let col = |k: usize| MeanSd::of(&runs.iter().map(|v| v[k]).collect::<Vec<_>>());
                    Ok(ToyGroupRow {
                        group: g.clone(),
                        budget: *b,
                        n: runs.len(),
                        stats: [col(0)?, col(1)?, col(2)?, col(3)?],
                    })
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let path = out.join(TOY_SUMMARY_FILE);
        write_toy_summary(&path, &rows)?;
        written.push(path);
        for (k, (key, label)) in TOY_METRICS.iter().enumerate() {
            let mut series: BTreeMap<&str, Vec<(f64, MeanSd)>> = BTreeMap::new();
            for r in &rows {
                series.entry(&r.group).or_default().push((r.budget as f64, r.stats[k]));
            }
            let svg = line_plot(label, "samples", label, &series);
            let path = out.join(format!("toy_{key}.svg"));
            write_atomic(&path, svg.as_bytes())?;
            written.push(path);
        }
    }
    if !seq.is_empty() {
        let path = out.join(SEQUENCE_SUMMARY_FILE);
        write_sequence_summary(&path, &seq)?;
        written.push(path);
    }
    Ok(written)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

fn write_toy_summary(path: &Path, rows: &[ToyGroupRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["group".to_string(), "budget".into(), "runs".into()];
    for (k, _) in TOY_METRICS {
        header.push(format!("{k}_mean"));
        header.push(format!("{k}_sd"));
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.group.clone(), r.budget.to_string(), r.n.to_string()];
        for s in &r.stats {
            rec.push(s.mean.to_string());
            rec.push(s.sd.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_sequence_summary(path: &Path, groups: &BTreeMap<String, Vec<MetricReport>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "group", "runs", "U_mean", "U_sd", "ID_mean", "ID_sd", "ED_mean", "ED_sd", "WD_mean", "WD_sd", "HM_mean",
        "HM_sd",
    ])?;
    for (g, reports) in groups {
        let mut rec = vec![g.clone(), reports.len().to_string()];
        let mut push = |vals: Vec<Option<f64>>| -> Result<()> {
            // Absent in any run means absent in the summary.
            if vals.iter().any(Option::is_none) {
                rec.extend([String::new(), String::new()]);
            } else {
                let s = MeanSd::of(&vals.into_iter().flatten().collect::<Vec<_>>())?;
                rec.extend([s.mean.to_string(), s.sd.to_string()]);
            }
            Ok(())
        };
        push(reports.iter().map(|r| Some(r.uniqueness)).collect())?;
        push(reports.iter().map(|r| Some(r.intra_diversity)).collect())?;
        push(reports.iter().map(|r| Some(r.edit_distance_novelty)).collect())?;
        push(reports.iter().map(|r| r.wd_mean).collect())?;
        push(reports.iter().map(|r| r.hm.map(|h| h.mean)).collect())?;
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Line plot with a shaded ±sd band per series.
pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &BTreeMap<&str, Vec<(f64, MeanSd)>>) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 160.0, 40.0, 50.0);
    let pts = series.values().flatten();
    let xmin = pts.clone().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let xmax = pts.clone().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let ymin = pts.clone().map(|p| p.1.mean - p.1.sd).fold(f64::INFINITY, f64::min).min(0.0);
    let mut ymax = pts.map(|p| p.1.mean + p.1.sd).fold(f64::NEG_INFINITY, f64::max);
    if !(ymax > ymin) {
        ymax = ymin + 1.0;
    }
    let xspan = if xmax > xmin { xmax - xmin } else { 1.0 };
    let px = |x: f64| left + (x - xmin) / xspan * (w - left - right);
    let py = |y: f64| h - bottom - (y - ymin) / (ymax - ymin) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, w / 2.0, escape(title));
    let (x0, y0, x1, y1) = (left, h - bottom, w - right, top);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for i in 0..=4 {
        let fx = xmin + xspan * i as f64 / 4.0;
        let fy = ymin + (ymax - ymin) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            px(fx),
            y0 + 18.0,
            tick(fx)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            py(fy) + 4.0,
            tick(fy)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{x0}" y1="{:.1}" x2="{x1}" y2="{:.1}" stroke="#dddddd"/>"##,
            py(fy),
            py(fy)
        );
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, h - 12.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(ylabel)
    );
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut pts = pts.clone();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let upper: Vec<String> = pts.iter().map(|(x, m)| format!("{:.1},{:.1}", px(*x), py(m.mean + m.sd))).collect();
        let lower: Vec<String> = pts.iter().rev().map(|(x, m)| format!("{:.1},{:.1}", px(*x), py(m.mean - m.sd))).collect();
        let _ = writeln!(
            s,
            r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = pts.iter().map(|(x, m)| format!("{:.1},{:.1}", px(*x), py(m.mean))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        let ly = top + 16.0 + 18.0 * k as f64;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/>"#, x1 + 12.0, x1 + 32.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, x1 + 38.0, ly + 4.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
