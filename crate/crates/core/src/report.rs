//! Text tables, plot-ready CSV series and the structured run document.
//!
//! Every renderer is deterministic: rows follow grid order, subjects follow
//! table or input order, classes are sorted.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ReportError;
use crate::model::{
    enumerate_grid, BaselineSource, ClassificationRecord, ConditionGrid, FrameRecord,
    FrequencyTable, ScoreReport,
};
use crate::score::{marginal_scores, TargetedScores};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Three decimals, ties to even. Exact zero renders as `0`.
pub fn format_score(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let r = (x * 1000.0).round_ties_even() / 1000.0;
    // Avoid `-0.000` for tiny negatives.
    format!("{:.3}", if r == 0.0 { 0.0 } else { r })
}

/// `0.602` -> `.602`; values of 1 keep their leading digit.
pub fn format_confidence(c: f64) -> String {
    let s = format!("{c:.3}");
    s.strip_prefix('0').map(str::to_owned).unwrap_or(s)
}

/// Left-aligned columns two spaces apart; trailing whitespace is trimmed.
pub fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|i| {
            rows.iter()
                .filter_map(|r| r.get(i))
                .map(|c| c.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (i, cell) in row.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            line.push_str(cell);
            if i + 1 < row.len() {
                line.extend(std::iter::repeat_n(' ', widths[i] - cell.chars().count()));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// Count table with one row per grid condition and one column per subject.
///
/// Cells read `count (.ddd)`, or just `count` when it is 0. Baseline cells
/// borrowed from another condition carry a trailing `*`; absent cells read
/// `-`. An empty table renders only the header.
pub fn render_counts(table: &FrequencyTable, grid: &ConditionGrid) -> Result<String, ReportError> {
    let mut header: Vec<String> = grid.factors.iter().map(|f| f.name.clone()).collect();
    header.extend(table.subjects.iter().map(|s| s.label.clone()));
    let mut rows = vec![header];
    if table.is_empty() {
        return Ok(align(&rows));
    }
    let baseline = table.baseline().ok().map(|b| b.label.clone());
    for cond in enumerate_grid(grid).map_err(crate::error::ScoreError::from)? {
        let mut row: Vec<String> = grid
            .factors
            .iter()
            .map(|f| cond.get(&f.name).unwrap_or("").to_owned())
            .collect();
        for s in &table.subjects {
            let (cell, aliased) = if Some(&s.label) == baseline.as_ref() {
                match table.baseline_cell(&cond) {
                    Some((c, src)) => (Some(c), src != BaselineSource::Measured || c.aliased),
                    None => (None, false),
                }
            } else {
                (table.get(&s.label, &cond), false)
            };
            row.push(match cell {
                None => "-".into(),
                Some(c) => {
                    let star = if aliased { "*" } else { "" };
                    match c.mean_confidence.filter(|_| c.count > 0) {
                        Some(conf) => format!("{}{star} ({})", c.count, format_confidence(conf)),
                        None => format!("{}{star}", c.count),
                    }
                }
            });
        }
        rows.push(row);
    }
    Ok(align(&rows))
}

/// One row of the rounded score table; `score` keeps full precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub subject: String,
    pub display: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedScores {
    pub text: String,
    pub rows: Vec<ScoreRow>,
    pub json: String,
}

/// Overall scores, one line per report in the given order.
pub fn render_scores(reports: &[ScoreReport]) -> Result<RenderedScores, ReportError> {
    if reports.is_empty() {
        return Err(ReportError::Empty);
    }
    let rows: Vec<ScoreRow> = reports
        .iter()
        .map(|r| ScoreRow {
            subject: r.subject.label.clone(),
            display: format_score(r.overall),
            score: r.overall,
        })
        .collect();
    let mut table = vec![vec!["subject".to_owned(), "score".to_owned()]];
    table.extend(
        rows.iter()
            .map(|r| vec![r.subject.clone(), r.display.clone()]),
    );
    Ok(RenderedScores {
        text: align(&table),
        json: serde_json::to_string_pretty(reports)?,
        rows,
    })
}

/// Per-level marginal scores of one factor, subjects as columns.
pub fn render_marginals(reports: &[ScoreReport], factor: &str) -> Result<String, ReportError> {
    if reports.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut levels: Vec<&str> = Vec::new();
    for r in reports {
        for ls in r.per_factor.iter().filter(|l| l.factor == factor) {
            if !levels.contains(&ls.level.as_str()) {
                levels.push(&ls.level);
            }
        }
    }
    let mut rows = vec![std::iter::once(factor.to_owned())
        .chain(reports.iter().map(|r| r.subject.label.clone()))
        .collect::<Vec<_>>()];
    for level in levels {
        let mut row = vec![level.to_owned()];
        for r in reports {
            let ls = r
                .per_factor
                .iter()
                .find(|l| l.factor == factor && l.level == level);
            row.push(match ls {
                None => "-".into(),
                Some(l) => match &l.ci {
                    Some(ci) => format!(
                        "{} [{}, {}]",
                        format_score(l.score),
                        format_score(ci.lo),
                        format_score(ci.hi)
                    ),
                    None => format_score(l.score),
                },
            });
        }
        rows.push(row);
    }
    Ok(align(&rows))
}

/// Two-row table per model: source-class drop and target-class rise.
pub fn render_targeted(
    results: &[(String, TargetedScores)],
    source_class: &str,
    target_class: &str,
) -> Result<String, ReportError> {
    if results.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut rows = vec![std::iter::once("comparison".to_owned())
        .chain(results.iter().map(|(m, _)| m.clone()))
        .collect::<Vec<_>>()];
    rows.push(
        std::iter::once(format!("'{source_class}' comparison"))
            .chain(
                results
                    .iter()
                    .map(|(_, s)| format_score(s.source_comparison)),
            )
            .collect(),
    );
    rows.push(
        std::iter::once(format!("'{target_class}' comparison"))
            .chain(
                results
                    .iter()
                    .map(|(_, s)| format_score(s.target_comparison)),
            )
            .collect(),
    );
    Ok(align(&rows))
}

// ---------------------------------------------------------------------------
// Histograms

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// `log10(count + 1)`, so zero stays zero.
    #[default]
    Log10Plus1,
    Identity,
}

impl Transform {
    pub fn apply(self, count: u64) -> f64 {
        match self {
            Transform::Log10Plus1 => (count as f64 + 1.0).log10(),
            Transform::Identity => count as f64,
        }
    }
}

pub enum HistogramSource<'a> {
    /// Top-1 class of each record.
    Classifications(&'a [ClassificationRecord]),
    /// Class label of every detection in every frame.
    Frames(&'a [FrameRecord]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub subject: String,
    pub class: String,
    pub count: u64,
    pub display: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub transform: Transform,
    pub rows: Vec<HistogramRow>,
}

/// Counts per (subject, class) summed over all conditions. Subjects appear in
/// first-seen order, classes sorted within a subject; only observed classes
/// get a row.
pub fn classification_histogram(source: HistogramSource<'_>, transform: Transform) -> Histogram {
    let mut order: Vec<String> = Vec::new();
    let mut counts: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    let mut bump = |subject: &str, class: &str| {
        if !counts.contains_key(subject) {
            order.push(subject.to_owned());
        }
        *counts
            .entry(subject.to_owned())
            .or_default()
            .entry(class.to_owned())
            .or_default() += 1;
    };
    match source {
        HistogramSource::Classifications(recs) => recs
            .iter()
            .for_each(|r| bump(&r.subject.label, &r.top_class)),
        HistogramSource::Frames(frames) => {
            for f in frames {
                for d in &f.detections {
                    bump(&f.subject.label, &d.class_label);
                }
            }
        }
    }
    let rows = order
        .iter()
        .flat_map(|s| {
            counts[s].iter().map(move |(class, &count)| HistogramRow {
                subject: s.clone(),
                class: class.clone(),
                count,
                display: transform.apply(count),
            })
        })
        .collect();
    Histogram { transform, rows }
}

pub fn render_histogram(h: &Histogram) -> String {
    let mut rows = vec![vec![
        "subject".into(),
        "class".into(),
        "count".into(),
        "display".into(),
    ]];
    rows.extend(h.rows.iter().map(|r| {
        vec![
            r.subject.clone(),
            r.class.clone(),
            r.count.to_string(),
            format!("{:.3}", r.display),
        ]
    }));
    align(&rows)
}

// ---------------------------------------------------------------------------
// Plot series

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String, ReportError> {
    let bytes = w
        .into_inner()
        .map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Columnar CSV of marginal scores by level of `factor`, one column per
/// subject, full precision.
pub fn score_series_csv(
    table: &FrequencyTable,
    grid: &ConditionGrid,
    subjects: &[&str],
    factor: &str,
) -> Result<String, ReportError> {
    let levels = grid
        .levels_of(factor)
        .ok_or_else(|| crate::error::ScoreError::UnknownFactor(factor.to_owned()))?;
    let mut columns = Vec::with_capacity(subjects.len());
    for s in subjects {
        let m: BTreeMap<String, f64> = marginal_scores(table, grid, s, factor)?
            .into_iter()
            .collect();
        columns.push(m);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(std::iter::once(factor).chain(subjects.iter().copied()))?;
    for level in &levels {
        let mut rec = vec![level.clone()];
        rec.extend(
            columns
                .iter()
                .map(|m| m.get(level).map(|v| v.to_string()).unwrap_or_default()),
        );
        w.write_record(&rec)?;
    }
    finish_csv(w)
}

/// Columnar CSV of mean detection confidence by level of `factor`: the mean
/// of the per-cell mean confidences over cells with at least one detection.
/// Baseline cells resolve aliases.
pub fn mean_confidence_series_csv(
    table: &FrequencyTable,
    grid: &ConditionGrid,
    factor: &str,
) -> Result<String, ReportError> {
    let levels = grid
        .levels_of(factor)
        .ok_or_else(|| crate::error::ScoreError::UnknownFactor(factor.to_owned()))?;
    let conditions = enumerate_grid(grid).map_err(crate::error::ScoreError::from)?;
    let baseline = table.baseline().ok().map(|b| b.label.clone());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(std::iter::once(factor).chain(table.subjects.iter().map(|s| s.label.as_str())))?;
    for level in &levels {
        let mut rec = vec![level.clone()];
        for s in &table.subjects {
            let confs: Vec<f64> = conditions
                .iter()
                .filter(|c| c.get(factor) == Some(level.as_str()))
                .filter_map(|c| {
                    if Some(&s.label) == baseline.as_ref() {
                        table.baseline_cell(c).map(|(cell, _)| cell)
                    } else {
                        table.get(&s.label, c)
                    }
                })
                .filter(|cell| cell.count > 0)
                .filter_map(|cell| cell.mean_confidence)
                .collect();
            rec.push(if confs.is_empty() {
                String::new()
            } else {
                (confs.iter().sum::<f64>() / confs.len() as f64).to_string()
            });
        }
        w.write_record(&rec)?;
    }
    finish_csv(w)
}

// ---------------------------------------------------------------------------
// Bundle

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool_version: String,
    /// Effective configuration and flags of the run.
    pub config: serde_json::Value,
    /// SHA-256 of each input file, keyed by path as given.
    pub inputs: BTreeMap<String, String>,
}

/// Everything one run reports, serialized as a single JSON document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts_table: Option<String>,
    pub score_table: Vec<ScoreRow>,
    pub reports: Vec<ScoreReport>,
    /// Rendered per-level table for each factor.
    #[serde(default)]
    pub per_factor_tables: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<Histogram>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targeted: Vec<(String, TargetedScores)>,
    pub metadata: Metadata,
}

impl ReportBundle {
    pub fn from_reports(
        reports: Vec<ScoreReport>,
        grid: &ConditionGrid,
    ) -> Result<Self, ReportError> {
        let rendered = render_scores(&reports)?;
        let mut per_factor_tables = BTreeMap::new();
        for f in &grid.factors {
            per_factor_tables.insert(f.name.clone(), render_marginals(&reports, &f.name)?);
        }
        Ok(ReportBundle {
            score_table: rendered.rows,
            reports,
            per_factor_tables,
            metadata: Metadata {
                tool_version: TOOL_VERSION.into(),
                ..Metadata::default()
            },
            ..ReportBundle::default()
        })
    }

    pub fn to_json(&self) -> Result<String, ReportError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, ReportError> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Condition, CountCell, Factor, SubjectId};
    use crate::score::score_report;

    #[test]
    fn score_formatting() {
        assert_eq!(format_score(0.0), "0");
        assert_eq!(format_score(0.5359), "0.536");
        assert_eq!(format_score(-1.91), "-1.910");
        assert_eq!(format_score(0.0625), "0.062");
        assert_eq!(format_score(0.1875), "0.188");
        assert_eq!(format_score(-1e-9), "0.000");
        assert_eq!(format_confidence(0.602), ".602");
        assert_eq!(format_confidence(1.0), "1.000");
    }

    fn small() -> (FrequencyTable, ConditionGrid) {
        let grid = ConditionGrid::new(vec![Factor::new("bulb", ["Hlgn", "LED"]).unwrap()]).unwrap();
        let mut t = FrequencyTable::new(SubjectId::baseline("No-Patch"));
        let h = Condition::new().with("bulb", "Hlgn");
        let l = Condition::new().with("bulb", "LED");
        t.insert(
            CountCell::new(
                SubjectId::baseline("No-Patch"),
                h.clone(),
                500,
                500,
                Some(0.9),
            )
            .unwrap(),
        )
        .unwrap();
        t.insert(CountCell::new(SubjectId::baseline("No-Patch"), l.clone(), 0, 500, None).unwrap())
            .unwrap();
        t.insert(CountCell::new(SubjectId::adversary("P"), h, 0, 500, None).unwrap())
            .unwrap();
        t.insert(CountCell::new(SubjectId::adversary("P"), l, 955, 500, Some(0.602)).unwrap())
            .unwrap();
        (t, grid)
    }

    #[test]
    fn counts_cells() {
        let (t, grid) = small();
        let text = render_counts(&t, &grid).unwrap();
        assert_eq!(
            text,
            "bulb  No-Patch    P\nHlgn  500 (.900)  0\nLED   0           955 (.602)\n"
        );
    }

    #[test]
    fn empty_counts_is_header_only() {
        let grid = ConditionGrid::new(vec![Factor::new("bulb", ["Hlgn"]).unwrap()]).unwrap();
        let t = FrequencyTable::new(SubjectId::baseline("No-Patch"));
        assert_eq!(render_counts(&t, &grid).unwrap(), "bulb  No-Patch\n");
    }

    #[test]
    fn scores_text_and_json() {
        let (t, grid) = small();
        let reports = vec![
            score_report(&t, &grid, "No-Patch").unwrap(),
            score_report(&t, &grid, "P").unwrap(),
        ];
        let r = render_scores(&reports).unwrap();
        assert_eq!(r.text, "subject   score\nNo-Patch  0\nP         -0.455\n");
        let back: Vec<ScoreReport> = serde_json::from_str(&r.json).unwrap();
        assert_eq!(back, reports);
        assert!(matches!(render_scores(&[]), Err(ReportError::Empty)));
    }

    #[test]
    fn bundle_round_trip() {
        let (t, grid) = small();
        let reports = vec![score_report(&t, &grid, "P").unwrap()];
        let mut b = ReportBundle::from_reports(reports, &grid).unwrap();
        b.counts_table = Some(render_counts(&t, &grid).unwrap());
        assert_eq!(ReportBundle::from_json(&b.to_json().unwrap()).unwrap(), b);
    }

    fn rec(subject: &str, class: &str, i: u64) -> ClassificationRecord {
        ClassificationRecord {
            model_id: "m".into(),
            subject: SubjectId::adversary(subject),
            condition: Condition::new().with("d", "1in"),
            frame_index: i,
            top_class: class.into(),
            probability: 0.9,
        }
    }

    #[test]
    fn histogram_log_scale() {
        let recs: Vec<_> = (0..99).map(|i| rec("a", "teapot", i)).collect();
        let h = classification_histogram(
            HistogramSource::Classifications(&recs),
            Transform::Log10Plus1,
        );
        assert_eq!(h.rows.len(), 1);
        assert_eq!(h.rows[0].count, 99);
        assert!((h.rows[0].display - 2.0).abs() < 1e-15);
        assert_eq!(Transform::Log10Plus1.apply(0), 0.0);
    }

    #[test]
    fn histogram_disjoint_subjects() {
        let recs = vec![
            rec("a", "teapot", 0),
            rec("b", "goldfish", 0),
            rec("a", "teapot", 1),
        ];
        let h =
            classification_histogram(HistogramSource::Classifications(&recs), Transform::Identity);
        let keys: Vec<_> = h
            .rows
            .iter()
            .map(|r| (r.subject.as_str(), r.class.as_str(), r.count))
            .collect();
        assert_eq!(keys, [("a", "teapot", 2), ("b", "goldfish", 1)]);
    }

    #[test]
    fn series_csv() {
        let (t, grid) = small();
        let s = score_series_csv(&t, &grid, &["P"], "bulb").unwrap();
        assert_eq!(s, "bulb,P\nHlgn,1\nLED,-1.91\n");
        let m = mean_confidence_series_csv(&t, &grid, "bulb").unwrap();
        assert_eq!(m, "bulb,No-Patch,P\nHlgn,0.9,\nLED,,0.602\n");
    }
}
