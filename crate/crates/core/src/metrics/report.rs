use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::{Rgb, RgbImage};

use super::svg::{bar_chart, line_chart, Series};
use super::{GapStats, Group, OutcomeCounts, RunRecord};
use crate::render;
use crate::strategies::StrategyKind;

pub const RECORDS_CSV_VERSION: &str = "records/v1";
pub const STATS_CSV_VERSION: &str = "stats/v1";

const THUMB_PX: u32 = 256;
const SHEET_COLUMNS: u32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("image error on {path}: {reason}")]
    Image { path: String, reason: String },
}

fn write(path: &Path, contents: &[u8]) -> Result<(), ReportError> {
    fs::write(path, contents).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.9}")).unwrap_or_default()
}

fn records_csv(records: &[RunRecord]) -> String {
    let mut rows: Vec<(&RunRecord, String)> = records
        .iter()
        .map(|r| {
            let line = format!(
                "{RECORDS_CSV_VERSION},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.experiment_id,
                r.strategy,
                r.instance_id,
                r.n,
                r.group,
                r.status,
                opt(r.length),
                opt(r.gap_percent),
                r.counts.total(),
                r.counts.valid,
                r.counts.incorrect_ids,
                r.counts.incomplete,
                r.counts.unparseable,
                r.payload.as_deref().unwrap_or("")
            );
            (r, line)
        })
        .collect();
    rows.sort_by(|(a, la), (b, lb)| {
        (a.strategy, a.n, &a.instance_id, a.group, la).cmp(&(b.strategy, b.n, &b.instance_id, b.group, lb))
    });
    let mut out = String::from(
        "schema,experiment_id,strategy,instance_id,n,group,status,length,gap_percent,\
         attempts,valid,incorrect_ids,incomplete,unparseable,payload\n",
    );
    for (_, line) in rows {
        out.push_str(&line);
        out.push('\n');
    }
    out
}

fn stats_csv(stats: &GapStats) -> String {
    let mut out = String::from(
        "schema,strategy,n,group,rows,valid_count,invalid_count,median_gap,q1_gap,q3_gap,iqr_gap,\
         attempts,pct_valid,pct_incorrect_ids,pct_incomplete,pct_unparseable\n",
    );
    for g in &stats.groups {
        let _ = writeln!(
            out,
            "{STATS_CSV_VERSION},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            g.strategy,
            g.n,
            g.group,
            g.rows,
            g.valid_count,
            g.invalid_count,
            opt(g.median_gap),
            opt(g.q1_gap),
            opt(g.q3_gap),
            opt(g.iqr_gap),
            g.counts.total(),
            opt(g.pct_valid),
            opt(g.pct_incorrect_ids),
            opt(g.pct_incomplete),
            opt(g.pct_unparseable)
        );
    }
    out
}

/// Series of one statistic against n, one series per key.
fn series_by<K: Ord + Copy>(
    stats: &GapStats,
    key: impl Fn(StrategyKind, Group) -> Option<K>,
    label: impl Fn(K) -> String,
    value: impl Fn(&super::GroupStats) -> Option<f64>,
) -> Vec<Series> {
    let mut by_key: BTreeMap<K, Vec<(f64, f64)>> = BTreeMap::new();
    for g in &stats.groups {
        if let Some(k) = key(g.strategy, g.group) {
            if let Some(v) = value(g) {
                by_key.entry(k).or_default().push((g.n as f64, v));
            }
        }
    }
    by_key
        .into_iter()
        .map(|(k, points)| Series {
            name: label(k),
            points,
        })
        .collect()
}

fn final_iteration(stats: &GapStats, strategy: StrategyKind) -> Option<usize> {
    stats
        .groups
        .iter()
        .filter(|g| g.strategy == strategy)
        .filter_map(|g| match g.group {
            Group::Iteration(k) => Some(k),
            _ => None,
        })
        .max()
}

/// Attempt counts per (strategy, n) for the hallucination charts: the
/// single-shot cell, the largest ensemble, or all refine steps summed.
fn attempt_counts(stats: &GapStats) -> BTreeMap<(StrategyKind, usize), OutcomeCounts> {
    let mut largest_ensemble: BTreeMap<usize, usize> = BTreeMap::new();
    for g in &stats.groups {
        if let Group::Ensemble(s) = g.group {
            let e = largest_ensemble.entry(g.n).or_default();
            *e = (*e).max(s);
        }
    }
    let mut out: BTreeMap<(StrategyKind, usize), OutcomeCounts> = BTreeMap::new();
    for g in &stats.groups {
        let include = match g.group {
            Group::Single | Group::Iteration(_) => true,
            Group::Ensemble(s) => largest_ensemble.get(&g.n) == Some(&s),
        };
        if include {
            out.entry((g.strategy, g.n)).or_default().merge(&g.counts);
        }
    }
    out
}

fn hallucination_charts(stats: &GapStats) -> Vec<(&'static str, String)> {
    let counts = attempt_counts(stats);
    let ns: BTreeSet<usize> = counts.keys().map(|k| k.1).collect();
    let strategies: BTreeSet<StrategyKind> = counts.keys().map(|k| k.0).collect();
    let categories: Vec<String> = ns.iter().map(|n| n.to_string()).collect();
    let names: Vec<String> = strategies.iter().map(|s| s.to_string()).collect();
    type Pick = fn(&OutcomeCounts) -> u32;
    let kinds: [(&str, &str, Pick); 3] = [
        ("hallucinations_incorrect_ids.svg", "Incorrect node IDs", |c| c.incorrect_ids),
        ("hallucinations_incomplete_route.svg", "Incomplete route", |c| c.incomplete),
        ("hallucinations_unparseable.svg", "Unparseable replies", |c| c.unparseable),
    ];
    kinds
        .into_iter()
        .map(|(file, title, pick)| {
            let values: Vec<Vec<Option<f64>>> = strategies
                .iter()
                .map(|&s| {
                    ns.iter()
                        .map(|&n| {
                            counts.get(&(s, n)).and_then(|c| {
                                (c.total() > 0).then(|| 100.0 * pick(c) as f64 / c.total() as f64)
                            })
                        })
                        .collect()
                })
                .collect();
            (
                file,
                bar_chart(title, "problem size n", "% of attempts", &categories, &names, &values),
            )
        })
        .collect()
}

fn charts(stats: &GapStats) -> Vec<(&'static str, String)> {
    let single = |s: StrategyKind, g: Group| (s.is_single_shot() && g == Group::Single).then_some(s);
    let ensemble = |s: StrategyKind, g: Group| match (s, g) {
        (StrategyKind::Ensemble, Group::Ensemble(size)) => Some(size),
        _ => None,
    };
    let finals: BTreeMap<StrategyKind, usize> = [StrategyKind::Refine1, StrategyKind::Refine2]
        .into_iter()
        .filter_map(|s| final_iteration(stats, s).map(|k| (s, k)))
        .collect();
    let refine = |s: StrategyKind, g: Group| match g {
        Group::Iteration(k) if finals.get(&s) == Some(&k) => Some(s),
        _ => None,
    };
    let median = |g: &super::GroupStats| g.median_gap;
    let iqr = |g: &super::GroupStats| g.iqr_gap;
    let size_label = |s: usize| format!("S = {s}");

    let mut out = vec![
        (
            "median_gap.svg",
            line_chart(
                "Median gap by problem size",
                "problem size n",
                "median gap (%)",
                &series_by(stats, single, |s| s.to_string(), median),
            ),
        ),
        (
            "iqr_gap.svg",
            line_chart(
                "IQR of gap by problem size",
                "problem size n",
                "IQR gap (%)",
                &series_by(stats, single, |s| s.to_string(), iqr),
            ),
        ),
        (
            "ensemble_median_gap.svg",
            line_chart(
                "Self-ensemble median gap",
                "problem size n",
                "median gap (%)",
                &series_by(stats, ensemble, size_label, median),
            ),
        ),
        (
            "ensemble_iqr_gap.svg",
            line_chart(
                "Self-ensemble IQR of gap",
                "problem size n",
                "IQR gap (%)",
                &series_by(stats, ensemble, size_label, iqr),
            ),
        ),
        (
            "refine_median_gap.svg",
            line_chart(
                "Self-refine median gap",
                "problem size n",
                "median gap (%)",
                &series_by(stats, refine, |s| s.to_string(), median),
            ),
        ),
    ];
    out.extend(hallucination_charts(stats));
    out
}

/// Tiles the refine stills of one instance (`iter_*.png`, then `best.png`)
/// into a single PNG. Returns `None` when there are no stills.
pub fn write_contact_sheet(
    image_dir: &Path,
    out_path: &Path,
) -> Result<Option<PathBuf>, ReportError> {
    let mut stills: Vec<PathBuf> = match fs::read_dir(image_dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("iter_") && n.ends_with(".png"))
            })
            .collect(),
        Err(_) => return Ok(None),
    };
    stills.sort();
    let best = image_dir.join("best.png");
    if best.exists() {
        stills.push(best);
    }
    if stills.is_empty() {
        return Ok(None);
    }
    let count = stills.len() as u32;
    let rows = count.div_ceil(SHEET_COLUMNS);
    let cols = count.min(SHEET_COLUMNS);
    let mut sheet = RgbImage::from_pixel(cols * THUMB_PX, rows * THUMB_PX, Rgb([255, 255, 255]));
    for (i, path) in stills.iter().enumerate() {
        let img = image::open(path)
            .map_err(|e| ReportError::Image {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?
            .to_rgb8();
        let thumb = imageops::resize(&img, THUMB_PX, THUMB_PX, FilterType::Triangle);
        let (col, row) = (i as u32 % SHEET_COLUMNS, i as u32 / SHEET_COLUMNS);
        imageops::replace(&mut sheet, &thumb, (col * THUMB_PX) as i64, (row * THUMB_PX) as i64);
    }
    let png = render::encode(&sheet).map_err(|e| ReportError::Image {
        path: out_path.display().to_string(),
        reason: e.to_string(),
    })?;
    write(out_path, &png.bytes)?;
    Ok(Some(out_path.to_path_buf()))
}

/// Writes CSVs, every chart family (with "no data" panels where empty) and,
/// when `images_dir` is given, contact sheets for refine runs. Returns the
/// written paths in a fixed order.
pub fn emit_report(
    stats: &GapStats,
    records: &[RunRecord],
    out_dir: &Path,
    images_dir: Option<&Path>,
) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(out_dir).map_err(|source| ReportError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let mut written = Vec::new();
    let mut emit = |name: &str, contents: &[u8]| -> Result<(), ReportError> {
        let path = out_dir.join(name);
        write(&path, contents)?;
        written.push(path);
        Ok(())
    };
    emit("records.csv", records_csv(records).as_bytes())?;
    emit("stats.csv", stats_csv(stats).as_bytes())?;
    for (name, svg) in charts(stats) {
        emit(name, svg.as_bytes())?;
    }

    if let Some(images) = images_dir {
        let refine_ids: BTreeSet<&str> = records
            .iter()
            .filter(|r| r.strategy.is_refine())
            .map(|r| r.instance_id.as_str())
            .collect();
        if !refine_ids.is_empty() {
            let sheets = out_dir.join("contact_sheets");
            fs::create_dir_all(&sheets).map_err(|source| ReportError::Io {
                path: sheets.display().to_string(),
                source,
            })?;
            for id in refine_ids {
                if let Some(p) =
                    write_contact_sheet(&images.join(id), &sheets.join(format!("{id}.png")))?
                {
                    written.push(p);
                }
            }
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::summarize;

    #[test]
    fn empty_report_has_every_chart_with_no_data() {
        let dir = tempfile::tempdir().unwrap();
        let stats = summarize(&[]);
        let files = emit_report(&stats, &[], dir.path(), None).unwrap();
        let names: Vec<String> = files
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        for expected in [
            "records.csv",
            "stats.csv",
            "median_gap.svg",
            "iqr_gap.svg",
            "ensemble_median_gap.svg",
            "ensemble_iqr_gap.svg",
            "refine_median_gap.svg",
            "hallucinations_incorrect_ids.svg",
            "hallucinations_incomplete_route.svg",
        ] {
            assert!(names.iter().any(|n| n == expected), "missing {expected}");
        }
        let svg = fs::read_to_string(dir.path().join("median_gap.svg")).unwrap();
        assert!(svg.contains("no data"));
        let csv = fs::read_to_string(dir.path().join("records.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1);
    }
}
