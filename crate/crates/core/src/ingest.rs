//! Readers and writers for the three input schemas: line-delimited detection
//! logs, line-delimited classification logs and the aggregated counts CSV.
//!
//! The line-delimited readers are streaming iterators that hold one line at a
//! time, capped at [`DEFAULT_LINE_CAP`] bytes.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{IngestError, ModelError};
use crate::model::{
    BaselineAlias, BoundingBox, ClassificationRecord, Condition, ConditionGrid, CountCell,
    Detection, Factor, FrameRecord, FrequencyTable, SubjectId, SubjectKind,
};

pub const DEFAULT_LINE_CAP: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schema {
    Detections,
    Classifications,
    Counts,
}

/// Describes how to interpret one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema: Schema,
    pub grid: ConditionGrid,
    pub baseline_subject: String,
    pub target_class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_frames_expected: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_alias: Option<BaselineAlias>,
    /// Reject unknown keys and columns. Defaults to true.
    #[serde(default = "default_strict")]
    pub strict: bool,
}

fn default_strict() -> bool {
    true
}

impl DatasetManifest {
    pub fn new(
        schema: Schema,
        grid: ConditionGrid,
        baseline_subject: &str,
        target_class: &str,
    ) -> Self {
        DatasetManifest {
            schema,
            grid,
            baseline_subject: baseline_subject.to_owned(),
            target_class: target_class.to_owned(),
            n_frames_expected: None,
            baseline_alias: None,
            strict: true,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.grid.validate()?;
        if self.baseline_subject.is_empty() {
            return Err(ModelError::EmptyIdentifier("baseline_subject"));
        }
        if self.target_class.is_empty() {
            return Err(ModelError::EmptyIdentifier("target_class"));
        }
        if let Some(alias) = &self.baseline_alias {
            let f = self
                .grid
                .factor(&alias.factor)
                .ok_or_else(|| ModelError::UnknownFactor(alias.factor.clone()))?;
            if f.position(&alias.level).is_none() {
                return Err(ModelError::UnknownLevel {
                    factor: alias.factor.clone(),
                    level: alias.level.clone(),
                });
            }
        }
        Ok(())
    }

    fn subject(
        &self,
        label: String,
        kind: SubjectKind,
        line: usize,
    ) -> Result<SubjectId, IngestError> {
        let is_base = label == self.baseline_subject;
        if is_base != (kind == SubjectKind::Baseline) {
            return Err(IngestError::Malformed {
                line,
                message: format!(
                    "subject `{label}` has kind `{}` but the manifest baseline is `{}`",
                    kind.as_str(),
                    self.baseline_subject
                ),
            });
        }
        if label.is_empty() {
            return Err(IngestError::Model {
                line,
                source: ModelError::EmptyIdentifier("subject"),
            });
        }
        Ok(SubjectId { label, kind })
    }
}

// ---------------------------------------------------------------------------
// Line reader

/// Reads newline-terminated lines without buffering more than `cap` bytes.
struct LineReader<R> {
    inner: R,
    buf: Vec<u8>,
    line: usize,
    cap: usize,
}

impl<R: BufRead> LineReader<R> {
    fn new(inner: R, cap: usize) -> Self {
        LineReader {
            inner,
            buf: Vec::new(),
            line: 0,
            cap,
        }
    }

    /// Next non-blank line as (line number, text).
    fn next_line(&mut self) -> Option<Result<(usize, &str), IngestError>> {
        loop {
            self.buf.clear();
            self.line += 1;
            let read = (&mut self.inner)
                .take(self.cap as u64 + 1)
                .read_until(b'\n', &mut self.buf);
            match read {
                Err(e) => return Some(Err(e.into())),
                Ok(0) => return None,
                Ok(_) => {}
            }
            if self.buf.last() == Some(&b'\n') {
                self.buf.pop();
                if self.buf.last() == Some(&b'\r') {
                    self.buf.pop();
                }
            } else if self.buf.len() > self.cap {
                return Some(Err(IngestError::LineTooLong {
                    line: self.line,
                    cap: self.cap,
                }));
            }
            if self.buf.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let line = self.line;
            return Some(match std::str::from_utf8(&self.buf) {
                Ok(text) => Ok((line, text)),
                Err(e) => Err(IngestError::Malformed {
                    line,
                    message: format!("invalid UTF-8: {e}"),
                }),
            });
        }
    }
}

fn reject_unknown(
    extra: &BTreeMap<String, Value>,
    strict: bool,
    line: usize,
    prefix: &str,
) -> Result<(), IngestError> {
    if strict {
        if let Some(key) = extra.keys().next() {
            return Err(IngestError::UnknownField {
                line,
                field: format!("{prefix}{key}"),
            });
        }
    }
    Ok(())
}

fn unit_range(value: f64, field: &str, line: usize) -> Result<f64, IngestError> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(IngestError::Range {
            line,
            field: field.to_owned(),
            value,
        })
    }
}

fn check_condition(grid: &ConditionGrid, cond: &Condition, line: usize) -> Result<(), IngestError> {
    grid.check_condition(cond)
        .map_err(|source| IngestError::Model { line, source })
}

// ---------------------------------------------------------------------------
// Detection log

#[derive(Deserialize)]
struct RawDetection {
    class: String,
    confidence: f64,
    objectness: f64,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Deserialize)]
struct RawFrame {
    subject: String,
    kind: SubjectKind,
    condition: Condition,
    frame: u64,
    detections: Vec<RawDetection>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Serialize)]
struct WireDetection<'a> {
    class: &'a str,
    confidence: f64,
    objectness: f64,
    #[serde(rename = "box")]
    bbox: [f64; 4],
}

#[derive(Serialize)]
struct WireFrame<'a> {
    subject: &'a str,
    kind: SubjectKind,
    condition: &'a Condition,
    frame: u64,
    detections: Vec<WireDetection<'a>>,
}

/// Streaming reader over a detection log, one [`FrameRecord`] per line.
pub struct DetectionLogReader<'m, R> {
    lines: LineReader<R>,
    manifest: &'m DatasetManifest,
    seen: HashSet<(String, Condition, u64)>,
}

impl<'m, R: BufRead> DetectionLogReader<'m, R> {
    pub fn new(reader: R, manifest: &'m DatasetManifest) -> Self {
        Self::with_line_cap(reader, manifest, DEFAULT_LINE_CAP)
    }

    pub fn with_line_cap(reader: R, manifest: &'m DatasetManifest, cap: usize) -> Self {
        DetectionLogReader {
            lines: LineReader::new(reader, cap),
            manifest,
            seen: HashSet::new(),
        }
    }

    fn convert(&mut self, line: usize, raw: RawFrame) -> Result<FrameRecord, IngestError> {
        let strict = self.manifest.strict;
        reject_unknown(&raw.extra, strict, line, "")?;
        check_condition(&self.manifest.grid, &raw.condition, line)?;
        let subject = self.manifest.subject(raw.subject, raw.kind, line)?;
        if !self
            .seen
            .insert((subject.label.clone(), raw.condition.clone(), raw.frame))
        {
            return Err(IngestError::DuplicateFrame {
                line,
                subject: subject.label,
                condition: raw.condition.to_string(),
                frame: raw.frame,
            });
        }
        let mut detections = Vec::with_capacity(raw.detections.len());
        for (i, d) in raw.detections.into_iter().enumerate() {
            reject_unknown(&d.extra, strict, line, &format!("detections[{i}]."))?;
            let bbox = BoundingBox::new(d.bbox[0], d.bbox[1], d.bbox[2], d.bbox[3]);
            if !bbox.is_valid() {
                return Err(IngestError::Malformed {
                    line,
                    message: format!("detections[{i}].box has negative width or height"),
                });
            }
            detections.push(Detection {
                class_label: d.class,
                confidence: unit_range(d.confidence, &format!("detections[{i}].confidence"), line)?,
                objectness: unit_range(d.objectness, &format!("detections[{i}].objectness"), line)?,
                bbox,
            });
        }
        Ok(FrameRecord {
            subject,
            condition: raw.condition,
            frame_index: raw.frame,
            detections,
        })
    }
}

impl<R: BufRead> Iterator for DetectionLogReader<'_, R> {
    type Item = Result<FrameRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        let (line, parsed) = match self.lines.next_line()? {
            Ok((line, text)) => (line, serde_json::from_str::<RawFrame>(text)),
            Err(e) => return Some(Err(e)),
        };
        Some(match parsed {
            Ok(raw) => self.convert(line, raw),
            Err(e) => Err(IngestError::Malformed {
                line,
                message: e.to_string(),
            }),
        })
    }
}

/// Parses a whole detection log.
pub fn parse_detection_log<R: BufRead>(
    reader: R,
    manifest: &DatasetManifest,
) -> Result<Vec<FrameRecord>, IngestError> {
    DetectionLogReader::new(reader, manifest).collect()
}

pub fn write_frame_record<W: Write>(mut out: W, rec: &FrameRecord) -> std::io::Result<()> {
    let wire = WireFrame {
        subject: &rec.subject.label,
        kind: rec.subject.kind,
        condition: &rec.condition,
        frame: rec.frame_index,
        detections: rec
            .detections
            .iter()
            .map(|d| WireDetection {
                class: &d.class_label,
                confidence: d.confidence,
                objectness: d.objectness,
                bbox: [d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h],
            })
            .collect(),
    };
    serde_json::to_writer(&mut out, &wire)?;
    out.write_all(b"\n")
}

pub fn write_detection_log<'a, W: Write>(
    mut out: W,
    records: impl IntoIterator<Item = &'a FrameRecord>,
) -> std::io::Result<()> {
    for rec in records {
        write_frame_record(&mut out, rec)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Classification log

#[derive(Deserialize)]
struct RawClassification {
    model: String,
    subject: String,
    kind: SubjectKind,
    condition: Condition,
    frame: u64,
    top_class: String,
    probability: f64,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Serialize)]
struct WireClassification<'a> {
    model: &'a str,
    subject: &'a str,
    kind: SubjectKind,
    condition: &'a Condition,
    frame: u64,
    top_class: &'a str,
    probability: f64,
}

pub struct ClassificationLogReader<'m, R> {
    lines: LineReader<R>,
    manifest: &'m DatasetManifest,
    seen: HashSet<(String, String, Condition, u64)>,
}

impl<'m, R: BufRead> ClassificationLogReader<'m, R> {
    pub fn new(reader: R, manifest: &'m DatasetManifest) -> Self {
        Self::with_line_cap(reader, manifest, DEFAULT_LINE_CAP)
    }

    pub fn with_line_cap(reader: R, manifest: &'m DatasetManifest, cap: usize) -> Self {
        ClassificationLogReader {
            lines: LineReader::new(reader, cap),
            manifest,
            seen: HashSet::new(),
        }
    }

    fn convert(
        &mut self,
        line: usize,
        raw: RawClassification,
    ) -> Result<ClassificationRecord, IngestError> {
        reject_unknown(&raw.extra, self.manifest.strict, line, "")?;
        check_condition(&self.manifest.grid, &raw.condition, line)?;
        let subject = self.manifest.subject(raw.subject, raw.kind, line)?;
        if raw.top_class.is_empty() {
            return Err(IngestError::Malformed {
                line,
                message: "empty top_class".into(),
            });
        }
        let key = (
            raw.model.clone(),
            subject.label.clone(),
            raw.condition.clone(),
            raw.frame,
        );
        if !self.seen.insert(key) {
            return Err(IngestError::DuplicateFrame {
                line,
                subject: subject.label,
                condition: raw.condition.to_string(),
                frame: raw.frame,
            });
        }
        Ok(ClassificationRecord {
            model_id: raw.model,
            subject,
            condition: raw.condition,
            frame_index: raw.frame,
            top_class: raw.top_class,
            probability: unit_range(raw.probability, "probability", line)?,
        })
    }
}

impl<R: BufRead> Iterator for ClassificationLogReader<'_, R> {
    type Item = Result<ClassificationRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        let (line, parsed) = match self.lines.next_line()? {
            Ok((line, text)) => (line, serde_json::from_str::<RawClassification>(text)),
            Err(e) => return Some(Err(e)),
        };
        Some(match parsed {
            Ok(raw) => self.convert(line, raw),
            Err(e) => Err(IngestError::Malformed {
                line,
                message: e.to_string(),
            }),
        })
    }
}

pub fn parse_classification_log<R: BufRead>(
    reader: R,
    manifest: &DatasetManifest,
) -> Result<Vec<ClassificationRecord>, IngestError> {
    ClassificationLogReader::new(reader, manifest).collect()
}

pub fn write_classification_record<W: Write>(
    mut out: W,
    rec: &ClassificationRecord,
) -> std::io::Result<()> {
    let wire = WireClassification {
        model: &rec.model_id,
        subject: &rec.subject.label,
        kind: rec.subject.kind,
        condition: &rec.condition,
        frame: rec.frame_index,
        top_class: &rec.top_class,
        probability: rec.probability,
    };
    serde_json::to_writer(&mut out, &wire)?;
    out.write_all(b"\n")
}

pub fn write_classification_log<'a, W: Write>(
    mut out: W,
    records: impl IntoIterator<Item = &'a ClassificationRecord>,
) -> std::io::Result<()> {
    for rec in records {
        write_classification_record(&mut out, rec)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Counts CSV
//
// subject,kind,<factor1>,...,<factorK>,count,n_frames,mean_confidence,baseline_alias

const TRAILING_COLUMNS: [&str; 4] = ["count", "n_frames", "mean_confidence", "baseline_alias"];

struct CountsLayout {
    /// (column index, factor name) for grid factors.
    factor_columns: Vec<(usize, String)>,
    count: usize,
}

fn counts_layout(
    headers: &csv::StringRecord,
    grid: Option<&ConditionGrid>,
    strict: bool,
) -> Result<CountsLayout, IngestError> {
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 2 + TRAILING_COLUMNS.len() || cols[0] != "subject" || cols[1] != "kind" {
        return Err(IngestError::Header(format!(
            "expected `subject,kind,<factors...>,{}`, got `{}`",
            TRAILING_COLUMNS.join(","),
            cols.join(",")
        )));
    }
    let count = cols.len() - TRAILING_COLUMNS.len();
    if cols[count..] != TRAILING_COLUMNS {
        return Err(IngestError::Header(format!(
            "last columns must be `{}`",
            TRAILING_COLUMNS.join(",")
        )));
    }
    let mut factor_columns = Vec::new();
    for (i, name) in cols.iter().enumerate().take(count).skip(2) {
        match grid {
            Some(g) if g.factor(name).is_none() => {
                if strict {
                    return Err(IngestError::Header(format!(
                        "unknown factor column `{name}`"
                    )));
                }
            }
            _ => factor_columns.push((i, (*name).to_owned())),
        }
    }
    if let Some(g) = grid {
        for f in &g.factors {
            if !factor_columns.iter().any(|(_, n)| *n == f.name) {
                return Err(IngestError::Header(format!(
                    "missing factor column `{}`",
                    f.name
                )));
            }
        }
    }
    Ok(CountsLayout {
        factor_columns,
        count,
    })
}

fn parse_finite(field: &str, name: &str, line: usize) -> Result<f64, IngestError> {
    let v: f64 = field.trim().parse().map_err(|_| IngestError::Malformed {
        line,
        message: format!("`{name}` is not a number: `{field}`"),
    })?;
    if !v.is_finite() {
        return Err(IngestError::Range {
            line,
            field: name.to_owned(),
            value: v,
        });
    }
    Ok(v)
}

fn parse_uint(field: &str, name: &str, line: usize) -> Result<u64, IngestError> {
    field.trim().parse().map_err(|_| IngestError::Malformed {
        line,
        message: format!("`{name}` is not a nonnegative integer: `{field}`"),
    })
}

/// Parses the counts CSV into a [`FrequencyTable`].
pub fn parse_count_table<R: Read>(
    reader: R,
    manifest: &DatasetManifest,
) -> Result<FrequencyTable, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(reader);
    let mut records = rdr.records();
    let headers = match records.next() {
        None => return Err(IngestError::Empty),
        Some(h) => h?,
    };
    let layout = counts_layout(&headers, Some(&manifest.grid), manifest.strict)?;

    let mut table = FrequencyTable::new(SubjectId::baseline(manifest.baseline_subject.clone()));
    table.subjects.clear();
    if let Some(alias) = &manifest.baseline_alias {
        table.aliases.push(alias.clone());
    }
    for (row, record) in records.enumerate() {
        let line = row + 2;
        let record = record?;
        let get = |i: usize| record.get(i).unwrap_or("");
        let kind: SubjectKind = get(1)
            .trim()
            .parse()
            .map_err(|source| IngestError::Model { line, source })?;
        let subject = manifest.subject(get(0).trim().to_owned(), kind, line)?;
        let condition = Condition::from_pairs(
            layout
                .factor_columns
                .iter()
                .map(|(i, name)| (name.clone(), get(*i).trim().to_owned())),
        );
        check_condition(&manifest.grid, &condition, line)?;

        let c = layout.count;
        let count = parse_uint(get(c), "count", line)?;
        let n_frames = parse_uint(get(c + 1), "n_frames", line)?;
        let mean_confidence = match get(c + 2).trim() {
            "" => None,
            text => Some(unit_range(
                parse_finite(text, "mean_confidence", line)?,
                "mean_confidence",
                line,
            )?),
        };
        let aliased = match get(c + 3).trim() {
            "" | "0" => false,
            "1" => true,
            other => {
                return Err(IngestError::Malformed {
                    line,
                    message: format!("baseline_alias must be 0 or 1, got `{other}`"),
                })
            }
        };
        if aliased && !subject.is_baseline() {
            return Err(IngestError::Malformed {
                line,
                message: "baseline_alias set on a non-baseline row".into(),
            });
        }
        if let Some(expected) = manifest.n_frames_expected {
            if n_frames != expected {
                return Err(IngestError::Model {
                    line,
                    source: ModelError::FrameCountMismatch {
                        condition: condition.to_string(),
                        expected,
                        found: n_frames,
                    },
                });
            }
        }
        let cell = CountCell {
            subject,
            condition,
            count,
            n_frames,
            mean_confidence,
            aliased,
        };
        table
            .insert(cell)
            .map_err(|source| IngestError::Model { line, source })?;
    }
    if table.is_empty() {
        return Err(IngestError::Empty);
    }
    if table.baseline.is_none() {
        return Err(IngestError::Model {
            line: 1,
            source: ModelError::NoBaseline,
        });
    }
    Ok(table)
}

/// Builds a manifest from a counts CSV alone: factors from the header columns,
/// levels in order of first appearance, baseline from the `kind` column.
pub fn infer_counts_manifest<R: Read>(reader: R) -> Result<DatasetManifest, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(reader);
    let mut records = rdr.records();
    let headers = match records.next() {
        None => return Err(IngestError::Empty),
        Some(h) => h?,
    };
    let layout = counts_layout(&headers, None, true)?;
    let mut levels: Vec<Vec<String>> = vec![Vec::new(); layout.factor_columns.len()];
    let mut baseline: Option<String> = None;
    for (row, record) in records.enumerate() {
        let record = record?;
        let line = row + 2;
        for (slot, (i, _)) in levels.iter_mut().zip(&layout.factor_columns) {
            let level = record.get(*i).unwrap_or("").trim();
            if !slot.iter().any(|l| l == level) {
                slot.push(level.to_owned());
            }
        }
        if record.get(1).map(str::trim) == Some("baseline") {
            let label = record.get(0).unwrap_or("").trim().to_owned();
            match &baseline {
                Some(b) if *b != label => {
                    return Err(IngestError::Model {
                        line,
                        source: ModelError::MultipleBaselines(b.clone(), label),
                    })
                }
                _ => baseline = Some(label),
            }
        }
    }
    let baseline = baseline.ok_or(IngestError::Model {
        line: 1,
        source: ModelError::NoBaseline,
    })?;
    let factors = layout
        .factor_columns
        .iter()
        .zip(levels)
        .map(|((_, name), lv)| Factor::new(name.clone(), lv))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|source| IngestError::Model { line: 1, source })?;
    let grid =
        ConditionGrid::new(factors).map_err(|source| IngestError::Model { line: 1, source })?;
    Ok(DatasetManifest::new(
        Schema::Counts,
        grid,
        &baseline,
        "target",
    ))
}

/// Writes a counts CSV. Rows follow grid enumeration order, subjects in table
/// order within a condition; conditions outside the grid come last.
pub fn write_count_table<W: Write>(
    out: W,
    table: &FrequencyTable,
    grid: &ConditionGrid,
) -> Result<(), IngestError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    let mut header = vec!["subject".to_owned(), "kind".to_owned()];
    header.extend(grid.factors.iter().map(|f| f.name.clone()));
    header.extend(TRAILING_COLUMNS.iter().map(|s| (*s).to_owned()));
    w.write_record(&header)?;

    let mut cells: Vec<&CountCell> = table.cells().collect();
    let subject_pos = |s: &SubjectId| {
        table
            .subjects
            .iter()
            .position(|x| x == s)
            .unwrap_or(usize::MAX)
    };
    cells.sort_by_key(|c| {
        (
            grid.index_of(&c.condition).unwrap_or(usize::MAX),
            subject_pos(&c.subject),
        )
    });
    for cell in cells {
        let mut row = vec![
            cell.subject.label.clone(),
            cell.subject.kind.as_str().to_owned(),
        ];
        row.extend(
            grid.factors
                .iter()
                .map(|f| cell.condition.get(&f.name).unwrap_or("").to_owned()),
        );
        row.push(cell.count.to_string());
        row.push(cell.n_frames.to_string());
        row.push(
            cell.mean_confidence
                .map(|m| m.to_string())
                .unwrap_or_default(),
        );
        row.push(if cell.aliased { "1" } else { "0" }.to_owned());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> ConditionGrid {
        ConditionGrid::new(vec![
            Factor::new("distance", ["1in", "5in"]).unwrap(),
            Factor::new("bulb", ["Hlgn", "LED"]).unwrap(),
            Factor::new("location", ["center", "right"]).unwrap(),
        ])
        .unwrap()
    }

    fn manifest(schema: Schema) -> DatasetManifest {
        DatasetManifest::new(schema, grid(), "none", "vase")
    }

    const TWO_VASES: &str = r#"{"subject":"imagenet_cxo","kind":"adversary","condition":{"distance":"1in","bulb":"LED","location":"center"},"frame":12,"detections":[{"class":"vase","confidence":0.602,"objectness":0.81,"box":[10,20,30,40]},{"class":"vase","confidence":0.55,"objectness":0.7,"box":[10,70,30,40]}]}"#;

    #[test]
    fn parses_frame_with_two_detections() {
        let m = manifest(Schema::Detections);
        let recs = parse_detection_log(TWO_VASES.as_bytes(), &m).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].frame_index, 12);
        assert_eq!(recs[0].detections.len(), 2);
        assert_eq!(
            recs[0].detections[0].bbox,
            BoundingBox::new(10.0, 20.0, 30.0, 40.0)
        );
    }

    #[test]
    fn confidence_out_of_range_names_line_and_field() {
        let m = manifest(Schema::Detections);
        let text = format!("\n{}\n", TWO_VASES.replace("0.602", "1.3"));
        match parse_detection_log(text.as_bytes(), &m) {
            Err(IngestError::Range { line, field, value }) => {
                assert_eq!(line, 2);
                assert_eq!(field, "detections[0].confidence");
                assert_eq!(value, 1.3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_level_and_unknown_key() {
        let m = manifest(Schema::Detections);
        let err =
            parse_detection_log(TWO_VASES.replace("\"LED\"", "\"UV\"").as_bytes(), &m).unwrap_err();
        assert!(err.to_string().contains("`UV`"), "{err}");

        let extra = TWO_VASES.replacen("\"frame\"", "\"camera\":\"c1\",\"frame\"", 1);
        let err = parse_detection_log(extra.as_bytes(), &m).unwrap_err();
        assert!(matches!(err, IngestError::UnknownField { ref field, .. } if field == "camera"));
        let mut lenient = m.clone();
        lenient.strict = false;
        assert_eq!(
            parse_detection_log(extra.as_bytes(), &lenient)
                .unwrap()
                .len(),
            1
        );
    }

    #[test]
    fn malformed_line_reports_missing_field() {
        let m = manifest(Schema::Detections);
        let text = TWO_VASES.replace("\"frame\":12,", "");
        match parse_detection_log(text.as_bytes(), &m) {
            Err(IngestError::Malformed { line: 1, message }) => assert!(message.contains("frame")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_frame_rejected() {
        let m = manifest(Schema::Detections);
        let text = format!("{TWO_VASES}\n{TWO_VASES}\n");
        assert!(matches!(
            parse_detection_log(text.as_bytes(), &m),
            Err(IngestError::DuplicateFrame {
                line: 2,
                frame: 12,
                ..
            })
        ));
    }

    #[test]
    fn kind_must_agree_with_manifest_baseline() {
        let m = manifest(Schema::Detections);
        let text = TWO_VASES.replace("\"adversary\"", "\"baseline\"");
        assert!(parse_detection_log(text.as_bytes(), &m).is_err());
    }

    #[test]
    fn line_cap_bounds_a_single_record() {
        let m = manifest(Schema::Detections);
        let mut r = DetectionLogReader::with_line_cap(TWO_VASES.as_bytes(), &m, 64);
        assert!(matches!(
            r.next(),
            Some(Err(IngestError::LineTooLong { line: 1, cap: 64 }))
        ));
    }

    #[test]
    fn classification_record_maps_fields() {
        let m = manifest(Schema::Classifications);
        let line = r#"{"model":"densenet","subject":"teapot_adv","kind":"adversary","condition":{"distance":"5in","bulb":"Hlgn","location":"right"},"frame":3,"top_class":"goldfish","probability":0.91}"#;
        let recs = parse_classification_log(line.as_bytes(), &m).unwrap();
        assert_eq!(recs[0].top_class, "goldfish");
        assert_eq!(recs[0].probability, 0.91);
        assert_eq!(recs[0].model_id, "densenet");
        let mut out = Vec::new();
        write_classification_log(&mut out, &recs).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap().trim_end(),
            line.replace(
                r#"{"distance":"5in","bulb":"Hlgn","location":"right"}"#,
                r#"{"bulb":"Hlgn","distance":"5in","location":"right"}"#,
            )
        );
    }

    const COUNTS: &str =
        "subject,kind,location,bulb,distance,count,n_frames,mean_confidence,baseline_alias
none,baseline,center,LED,1in,0,500,,0
none,baseline,right,LED,1in,0,500,,1
p,adversary,center,LED,1in,955,500,0.602,0
";

    #[test]
    fn counts_zero_cell_has_no_confidence() {
        let m = manifest(Schema::Counts);
        let t = parse_count_table(COUNTS.as_bytes(), &m).unwrap();
        let c = Condition::new()
            .with("location", "center")
            .with("bulb", "LED")
            .with("distance", "1in");
        let base = t.get("none", &c).unwrap();
        assert_eq!((base.count, base.mean_confidence), (0, None));
        assert_eq!(t.get("p", &c).unwrap().count, 955);
        let right = c.clone().with("location", "right");
        assert!(t.get("none", &right).unwrap().aliased);
    }

    #[test]
    fn counts_errors() {
        let m = manifest(Schema::Counts);
        assert!(matches!(
            parse_count_table("".as_bytes(), &m),
            Err(IngestError::Empty)
        ));
        let dup = format!("{COUNTS}p,adversary,center,LED,1in,1,500,0.5,0\n");
        assert!(matches!(
            parse_count_table(dup.as_bytes(), &m),
            Err(IngestError::Model {
                line: 5,
                source: ModelError::DuplicateCell(_)
            })
        ));
        let conf_on_zero = COUNTS.replace(
            "0,500,,0\nnone,baseline,right",
            "0,500,0.4,0\nnone,baseline,right",
        );
        assert!(parse_count_table(conf_on_zero.as_bytes(), &m).is_err());
        let nan = COUNTS.replace("0.602", "NaN");
        assert!(matches!(
            parse_count_table(nan.as_bytes(), &m),
            Err(IngestError::Range { .. })
        ));
    }

    #[test]
    fn counts_manifest_inference() {
        let m = infer_counts_manifest(COUNTS.as_bytes()).unwrap();
        assert_eq!(m.baseline_subject, "none");
        assert_eq!(m.grid.factors.len(), 3);
        assert_eq!(
            m.grid.factor("location").unwrap().levels,
            ["center", "right"]
        );
    }
}
