//! Detector post-processing (objectness gate, IoU, greedy per-class NMS) and
//! reduction of frame streams into per-cell target counts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{
    BoundingBox, ClassificationRecord, Condition, CountCell, Detection, FrameRecord,
    FrequencyTable, SubjectId,
};
use crate::par::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountMode {
    /// Every target detection counts, so doubles count twice.
    #[default]
    Detections,
    /// A frame counts once if it has at least one target detection.
    Frames,
}

impl std::str::FromStr for CountMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "detections" => Ok(CountMode::Detections),
            "frames" => Ok(CountMode::Frames),
            other => Err(format!("unknown count mode `{other}` (detections|frames)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostprocessConfig {
    pub objectness_threshold: f64,
    pub nms_iou_threshold: f64,
    pub count_mode: CountMode,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        PostprocessConfig {
            objectness_threshold: 0.5,
            nms_iou_threshold: 0.4,
            count_mode: CountMode::Detections,
        }
    }
}

impl PostprocessConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (field, value) in [
            ("objectness_threshold", self.objectness_threshold),
            ("nms_iou_threshold", self.nms_iou_threshold),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ModelError::OutOfRange { field, value });
            }
        }
        Ok(())
    }
}

/// Intersection over union; 0 when the union is empty.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let iy = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Greedy per-class non-maximum suppression.
///
/// Candidates are visited by descending confidence (ties keep input order); a
/// candidate is dropped if a kept box of the same class overlaps it with
/// IoU above the threshold. Output is sorted by descending confidence.
pub fn nms(dets: &[Detection], cfg: &PostprocessConfig) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| dets[j].confidence.total_cmp(&dets[i].confidence));
    let mut kept: Vec<&Detection> = Vec::new();
    for i in order {
        let cand = &dets[i];
        let suppressed = kept.iter().any(|k| {
            k.class_label == cand.class_label && iou(&k.bbox, &cand.bbox) > cfg.nms_iou_threshold
        });
        if !suppressed {
            kept.push(cand);
        }
    }
    kept.into_iter().cloned().collect()
}

/// Keeps detections whose objectness is strictly above the threshold.
pub fn filter_objectness(dets: &[Detection], cfg: &PostprocessConfig) -> Vec<Detection> {
    dets.iter()
        .filter(|d| d.objectness > cfg.objectness_threshold)
        .cloned()
        .collect()
}

/// Objectness gate followed by NMS.
pub fn postprocess(dets: &[Detection], cfg: &PostprocessConfig) -> Vec<Detection> {
    nms(&filter_objectness(dets, cfg), cfg)
}

pub fn postprocess_frames(frames: &mut [FrameRecord], cfg: &PostprocessConfig) {
    for frame in frames {
        frame.detections = postprocess(&frame.detections, cfg);
    }
}

#[derive(Default)]
struct Tally {
    frames: u64,
    hit_frames: u64,
    detections: u64,
    confidence_sum: f64,
}

fn tally(frames: &[&FrameRecord], target_class: &str) -> Tally {
    let mut t = Tally::default();
    for frame in frames {
        t.frames += 1;
        let mut hits = 0u64;
        for d in frame
            .detections
            .iter()
            .filter(|d| d.class_label == target_class)
        {
            hits += 1;
            t.confidence_sum += d.confidence;
        }
        t.detections += hits;
        if hits > 0 {
            t.hit_frames += 1;
        }
    }
    t
}

type Groups<'a> = Vec<((SubjectId, Condition), Vec<&'a FrameRecord>)>;

fn group_frames(frames: &[FrameRecord]) -> Groups<'_> {
    let mut groups: BTreeMap<(SubjectId, Condition), Vec<&FrameRecord>> = BTreeMap::new();
    for f in frames {
        groups
            .entry((f.subject.clone(), f.condition.clone()))
            .or_default()
            .push(f);
    }
    groups.into_iter().collect()
}

fn first_seen_subjects<'a>(subjects: impl Iterator<Item = &'a SubjectId>) -> Vec<SubjectId> {
    let mut out: Vec<SubjectId> = Vec::new();
    for s in subjects {
        if !out.contains(s) {
            out.push(s.clone());
        }
    }
    out
}

/// Reduces frames to one [`CountCell`] per (subject, condition).
///
/// The mean confidence averages every target detection in the cell. Cells
/// with no frames simply do not appear; [`crate::model::validate_dataset`]
/// reports them.
pub fn aggregate(
    frames: &[FrameRecord],
    target_class: &str,
    cfg: &PostprocessConfig,
) -> Result<FrequencyTable, ModelError> {
    aggregate_with(frames, target_class, cfg, Exec::default())
}

pub fn aggregate_with(
    frames: &[FrameRecord],
    target_class: &str,
    cfg: &PostprocessConfig,
    exec: Exec,
) -> Result<FrequencyTable, ModelError> {
    let groups = group_frames(frames);
    let tallies = exec.map_slice(&groups, |(_, fs)| tally(fs, target_class));

    let mut table = FrequencyTable::default();
    table.subjects = first_seen_subjects(frames.iter().map(|f| &f.subject));
    for ((subject, condition), t) in groups.iter().map(|(k, _)| k).zip(tallies) {
        let count = match cfg.count_mode {
            CountMode::Detections => t.detections,
            CountMode::Frames => t.hit_frames,
        };
        let mean_confidence = (t.detections > 0).then(|| t.confidence_sum / t.detections as f64);
        table.insert(CountCell {
            subject: subject.clone(),
            condition: condition.clone(),
            count,
            n_frames: t.frames,
            mean_confidence: mean_confidence.filter(|_| count > 0),
            aliased: false,
        })?;
    }
    table.baseline()?;
    Ok(table)
}

/// Per-(subject, condition) counts of frames assigned to each tracked class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassFrequencies {
    pub baseline: SubjectId,
    pub subjects: Vec<SubjectId>,
    pub classes: Vec<String>,
    pub n_frames: BTreeMap<(String, Condition), u64>,
    /// (subject, condition) -> class -> frame count and summed top-1 probability.
    pub counts: BTreeMap<(String, Condition), BTreeMap<String, ClassTally>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassTally {
    pub frames: u64,
    pub probability_sum: f64,
}

impl ClassFrequencies {
    pub fn tracks(&self, class: &str) -> bool {
        self.classes.iter().any(|c| c == class)
    }

    /// Projects one class into a [`FrequencyTable`].
    pub fn for_class(&self, class: &str) -> Option<FrequencyTable> {
        if !self.tracks(class) {
            return None;
        }
        let mut table = FrequencyTable::new(self.baseline.clone());
        table.subjects = self.subjects.clone();
        for subject in &self.subjects {
            for ((label, cond), n) in self
                .n_frames
                .iter()
                .filter(|((l, _), _)| *l == subject.label)
            {
                let tally = self.counts[&(label.clone(), cond.clone())]
                    .get(class)
                    .copied()
                    .unwrap_or_default();
                table
                    .insert(CountCell {
                        subject: subject.clone(),
                        condition: cond.clone(),
                        count: tally.frames,
                        n_frames: *n,
                        mean_confidence: (tally.frames > 0)
                            .then(|| tally.probability_sum / tally.frames as f64),
                        aliased: false,
                    })
                    .ok()?;
            }
        }
        Some(table)
    }
}

/// Counts frames per tracked class for one model's classification records.
/// Records for other models are skipped when `model` is given.
pub fn aggregate_classifications(
    records: &[ClassificationRecord],
    classes: &[&str],
    model: Option<&str>,
) -> Result<ClassFrequencies, ModelError> {
    let selected: Vec<&ClassificationRecord> = records
        .iter()
        .filter(|r| model.is_none_or(|m| r.model_id == m))
        .collect();
    let subjects = first_seen_subjects(selected.iter().map(|r| &r.subject));
    let mut baselines = subjects.iter().filter(|s| s.is_baseline());
    let baseline = baselines.next().cloned().ok_or(ModelError::NoBaseline)?;
    if let Some(other) = baselines.next() {
        return Err(ModelError::MultipleBaselines(
            baseline.label,
            other.label.clone(),
        ));
    }
    let mut n_frames: BTreeMap<(String, Condition), u64> = BTreeMap::new();
    let mut counts: BTreeMap<(String, Condition), BTreeMap<String, ClassTally>> = BTreeMap::new();
    for r in selected {
        let key = (r.subject.label.clone(), r.condition.clone());
        *n_frames.entry(key.clone()).or_default() += 1;
        let row = counts.entry(key).or_default();
        if classes.contains(&r.top_class.as_str()) {
            let tally = row.entry(r.top_class.clone()).or_default();
            tally.frames += 1;
            tally.probability_sum += r.probability;
        }
    }
    Ok(ClassFrequencies {
        baseline,
        subjects,
        classes: classes.iter().map(|c| (*c).to_owned()).collect(),
        n_frames,
        counts,
    })
}
