//! Synthetic frame and classification streams with known per-cell
//! probabilities, and the closed-form expected scores they imply.
//!
//! Each (subject, condition) shard draws from its own ChaCha8 stream seeded
//! with `derive_seed(seed, shard)`, where shards are numbered subject-major in
//! grid order. Output is the same for any thread count.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detect::CountMode;
use crate::error::SimError;
use crate::model::{
    enumerate_grid, BoundingBox, ClassificationRecord, Condition, ConditionGrid, Detection,
    FrameRecord, SubjectId, SubjectKind,
};
use crate::par::{derive_seed, Exec};
use crate::score::TargetedScores;

/// Label of the always-present non-target detection in simulated frames.
pub const DISTRACTOR_CLASS: &str = "diningtable";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub detect_prob: f64,
    #[serde(default)]
    pub double_prob: f64,
    #[serde(default = "default_conf_mean")]
    pub confidence_mean: f64,
    #[serde(default = "default_conf_spread")]
    pub confidence_spread: f64,
    /// Categorical distribution of top-1 classes, sorted by class label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_dist: Option<Vec<(String, f64)>>,
}

fn default_conf_mean() -> f64 {
    0.8
}

fn default_conf_spread() -> f64 {
    0.1
}

impl CellParams {
    pub fn detection(detect_prob: f64, double_prob: f64) -> Self {
        CellParams {
            detect_prob,
            double_prob,
            confidence_mean: default_conf_mean(),
            confidence_spread: default_conf_spread(),
            class_dist: None,
        }
    }

    pub fn with_classes(
        mut self,
        dist: impl IntoIterator<Item = (impl Into<String>, f64)>,
    ) -> Self {
        let mut d: Vec<(String, f64)> = dist.into_iter().map(|(c, p)| (c.into(), p)).collect();
        d.sort_by(|a, b| a.0.cmp(&b.0));
        self.class_dist = Some(d);
        self
    }

    fn class_prob(&self, class: &str) -> f64 {
        self.class_dist
            .as_ref()
            .and_then(|d| d.iter().find(|(c, _)| c == class))
            .map_or(0.0, |(_, p)| *p)
    }
}

/// Fully specified simulation: parameters for every (subject, condition).
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub grid: ConditionGrid,
    pub subjects: Vec<SubjectId>,
    pub params: BTreeMap<(String, Condition), CellParams>,
    pub n_frames: u64,
    pub seed: u64,
    pub target_class: String,
    pub models: Vec<String>,
}

impl ScenarioSpec {
    /// Same parameters for every condition of each subject.
    pub fn uniform(
        grid: ConditionGrid,
        subjects: Vec<(SubjectId, CellParams)>,
        n_frames: u64,
        seed: u64,
    ) -> Result<Self, SimError> {
        let conditions = enumerate_grid(&grid)?;
        let mut params = BTreeMap::new();
        for (s, p) in &subjects {
            for c in &conditions {
                params.insert((s.label.clone(), c.clone()), p.clone());
            }
        }
        let spec = ScenarioSpec {
            grid,
            subjects: subjects.into_iter().map(|(s, _)| s).collect(),
            params,
            n_frames,
            seed,
            target_class: "vase".into(),
            models: vec!["sim".into()],
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn params(&self, subject: &str, cond: &Condition) -> Option<&CellParams> {
        self.params.get(&(subject.to_owned(), cond.clone()))
    }

    pub fn params_mut(&mut self, subject: &str, cond: &Condition) -> Option<&mut CellParams> {
        self.params.get_mut(&(subject.to_owned(), cond.clone()))
    }

    pub fn baseline(&self) -> Result<&SubjectId, SimError> {
        let mut it = self.subjects.iter().filter(|s| s.is_baseline());
        match (it.next(), it.next()) {
            (Some(b), None) => Ok(b),
            _ => Err(SimError::Baseline),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_frames == 0 {
            return Err(SimError::ZeroFrames);
        }
        self.baseline()?;
        let conditions = enumerate_grid(&self.grid)?;
        for s in &self.subjects {
            for c in &conditions {
                let (subject, condition) = (s.label.clone(), c.to_string());
                let p = self
                    .params(&s.label, c)
                    .ok_or_else(|| SimError::UnknownSubject(s.label.clone()))?;
                for (field, value) in [
                    ("detect_prob", p.detect_prob),
                    ("double_prob", p.double_prob),
                    ("confidence_mean", p.confidence_mean),
                    ("confidence_spread", p.confidence_spread),
                ] {
                    if !(0.0..=1.0).contains(&value) {
                        return Err(SimError::Probability {
                            field,
                            value,
                            subject,
                            condition,
                        });
                    }
                }
                if let Some(dist) = &p.class_dist {
                    if let Some((_, bad)) = dist.iter().find(|(_, q)| !(0.0..=1.0).contains(q)) {
                        return Err(SimError::Probability {
                            field: "class_dist",
                            value: *bad,
                            subject,
                            condition,
                        });
                    }
                    let sum: f64 = dist.iter().map(|(_, q)| q).sum();
                    if (sum - 1.0).abs() > 1e-9 {
                        return Err(SimError::ClassSum {
                            subject,
                            condition,
                            sum,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    fn shards(&self) -> Result<Vec<(usize, &SubjectId, Condition)>, SimError> {
        let conditions = enumerate_grid(&self.grid)?;
        Ok(self
            .subjects
            .iter()
            .flat_map(|s| conditions.iter().map(move |c| (s, c.clone())))
            .enumerate()
            .map(|(i, (s, c))| (i, s, c))
            .collect())
    }
}

fn bounded(rng: &mut ChaCha8Rng, mean: f64, spread: f64) -> f64 {
    (mean + spread * (2.0 * rng.gen::<f64>() - 1.0)).clamp(0.0, 1.0)
}

/// Objectness in (0.5, 1].
fn objectness_above_gate(rng: &mut ChaCha8Rng) -> f64 {
    1.0 - 0.5 * rng.gen::<f64>()
}

fn jitter(rng: &mut ChaCha8Rng) -> f64 {
    4.0 * rng.gen::<f64>() - 2.0
}

fn simulate_shard(
    spec: &ScenarioSpec,
    shard: usize,
    subject: &SubjectId,
    cond: &Condition,
) -> Vec<FrameRecord> {
    let p = &spec.params[&(subject.label.clone(), cond.clone())];
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, shard as u64));
    (0..spec.n_frames)
        .map(|frame_index| {
            let mut detections = Vec::with_capacity(3);
            let detected = rng.gen::<f64>() < p.detect_prob;
            let doubled = rng.gen::<f64>() < p.double_prob;
            if detected {
                // Lower and upper halves of the object; disjoint, so NMS keeps both.
                let (dx, dy) = (jitter(&mut rng), jitter(&mut rng));
                let boxes: &[(f64, f64)] = if doubled {
                    &[(200.0, 150.0), (200.0, 330.0)]
                } else {
                    &[(200.0, 150.0)]
                };
                for (x, y) in boxes {
                    detections.push(Detection::new(
                        spec.target_class.clone(),
                        bounded(&mut rng, p.confidence_mean, p.confidence_spread),
                        objectness_above_gate(&mut rng),
                        BoundingBox::new(x + dx, y + dy, 120.0, 160.0),
                    ));
                }
            }
            detections.push(Detection::new(
                DISTRACTOR_CLASS,
                rng.gen_range(0.2..0.9),
                rng.gen::<f64>(),
                BoundingBox::new(0.0, 400.0, 640.0, 80.0),
            ));
            FrameRecord {
                subject: subject.clone(),
                condition: cond.clone(),
                frame_index,
                detections,
            }
        })
        .collect()
}

/// Per frame: the target is detected with `detect_prob`; a detected target is
/// doubled with `double_prob`. One non-target distractor box is always
/// emitted with unconstrained objectness.
pub fn simulate_detections(spec: &ScenarioSpec) -> Result<Vec<FrameRecord>, SimError> {
    simulate_detections_with(spec, Exec::default())
}

pub fn simulate_detections_with(
    spec: &ScenarioSpec,
    exec: Exec,
) -> Result<Vec<FrameRecord>, SimError> {
    spec.validate()?;
    let shards = spec.shards()?;
    Ok(exec
        .map_slice(&shards, |(i, s, c)| simulate_shard(spec, *i, s, c))
        .into_iter()
        .flatten()
        .collect())
}

fn sample_class(rng: &mut ChaCha8Rng, dist: &[(String, f64)]) -> String {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (class, q) in dist {
        acc += q;
        if u < acc {
            return class.clone();
        }
    }
    // Rounding left u above the last cumulative sum.
    dist.iter()
        .rev()
        .find(|(_, q)| *q > 0.0)
        .map(|(c, _)| c.clone())
        .unwrap_or_default()
}

/// Top-1 class per frame drawn from `class_dist`, for every model in the spec.
pub fn simulate_classifications(
    spec: &ScenarioSpec,
) -> Result<Vec<ClassificationRecord>, SimError> {
    simulate_classifications_with(spec, Exec::default())
}

pub fn simulate_classifications_with(
    spec: &ScenarioSpec,
    exec: Exec,
) -> Result<Vec<ClassificationRecord>, SimError> {
    spec.validate()?;
    let shards = spec.shards()?;
    for (_, s, c) in &shards {
        if spec
            .params(&s.label, c)
            .and_then(|p| p.class_dist.as_ref())
            .is_none()
        {
            return Err(SimError::MissingClassDist {
                subject: s.label.clone(),
                condition: c.to_string(),
            });
        }
    }
    let per_model = shards.len();
    let jobs: Vec<(usize, &String, &SubjectId, &Condition)> = spec
        .models
        .iter()
        .enumerate()
        .flat_map(|(m, model)| {
            shards
                .iter()
                .map(move |(i, s, c)| (m * per_model + i, model, *s, c))
        })
        .collect();
    // Offset keeps classification streams independent of detection streams.
    let base_seed = derive_seed(spec.seed, u64::MAX);
    Ok(exec
        .map_slice(&jobs, |(shard, model, subject, cond)| {
            let p = &spec.params[&(subject.label.clone(), (*cond).clone())];
            let dist = p.class_dist.as_deref().unwrap_or_default();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(base_seed, *shard as u64));
            (0..spec.n_frames)
                .map(|frame_index| ClassificationRecord {
                    model_id: (*model).clone(),
                    subject: (*subject).clone(),
                    condition: (*cond).clone(),
                    frame_index,
                    top_class: sample_class(&mut rng, dist),
                    probability: bounded(&mut rng, p.confidence_mean, p.confidence_spread),
                })
                .collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
        .collect())
}

fn expected_rate(p: &CellParams, mode: CountMode) -> f64 {
    match mode {
        CountMode::Frames => p.detect_prob,
        CountMode::Detections => p.detect_prob * (1.0 + p.double_prob),
    }
}

/// Expected effectiveness score implied by the spec:
/// mean over `conditions` of `r_base,e - r_subject,e`, where `r` is the
/// detection probability (frames mode) or `p * (1 + double_prob)`
/// (detections mode).
pub fn true_score(
    spec: &ScenarioSpec,
    subject: &str,
    conditions: &[Condition],
    mode: CountMode,
) -> Result<f64, SimError> {
    let baseline = spec.baseline()?.label.clone();
    let lookup = |s: &str, c: &Condition| {
        spec.params(s, c)
            .ok_or_else(|| SimError::UnknownSubject(s.to_owned()))
    };
    let mut total = 0.0;
    for c in conditions {
        total +=
            expected_rate(lookup(&baseline, c)?, mode) - expected_rate(lookup(subject, c)?, mode);
    }
    Ok(total / conditions.len() as f64)
}

/// Expected targeted score pair implied by the class distributions.
pub fn true_targeted(
    spec: &ScenarioSpec,
    adv_subject: &str,
    source_class: &str,
    target_class: &str,
    conditions: &[Condition],
) -> Result<TargetedScores, SimError> {
    let baseline = spec.baseline()?.label.clone();
    let (mut src, mut tgt) = (0.0, 0.0);
    for c in conditions {
        let b = spec
            .params(&baseline, c)
            .ok_or_else(|| SimError::UnknownSubject(baseline.clone()))?;
        let a = spec
            .params(adv_subject, c)
            .ok_or_else(|| SimError::UnknownSubject(adv_subject.to_owned()))?;
        src += b.class_prob(source_class) - a.class_prob(source_class);
        tgt += a.class_prob(target_class) - b.class_prob(target_class);
    }
    let k = conditions.len() as f64;
    Ok(TargetedScores {
        source_comparison: src / k,
        target_comparison: tgt / k,
    })
}

// ---------------------------------------------------------------------------
// Declarative scenario files

/// Parameters that replace a subject's defaults wherever `when` matches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamOverride {
    pub when: Condition,
    #[serde(default)]
    pub detect_prob: Option<f64>,
    #[serde(default)]
    pub double_prob: Option<f64>,
    #[serde(default)]
    pub confidence_mean: Option<f64>,
    #[serde(default)]
    pub confidence_spread: Option<f64>,
    #[serde(default)]
    pub class_dist: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectSpec {
    pub label: String,
    pub kind: SubjectKind,
    #[serde(default)]
    pub detect_prob: f64,
    #[serde(default)]
    pub double_prob: f64,
    #[serde(default = "default_conf_mean")]
    pub confidence_mean: f64,
    #[serde(default = "default_conf_spread")]
    pub confidence_spread: f64,
    #[serde(default)]
    pub class_dist: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub overrides: Vec<ParamOverride>,
}

/// Serializable scenario: per-subject defaults plus condition-matched
/// overrides (later overrides win).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub grid: ConditionGrid,
    pub subjects: Vec<SubjectSpec>,
    pub n_frames: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_target")]
    pub target_class: String,
    #[serde(default = "default_models")]
    pub models: Vec<String>,
}

fn default_target() -> String {
    "vase".into()
}

fn default_models() -> Vec<String> {
    vec!["sim".into()]
}

impl ScenarioFile {
    pub fn into_spec(self) -> Result<ScenarioSpec, SimError> {
        let conditions = enumerate_grid(&self.grid)?;
        let mut params = BTreeMap::new();
        for s in &self.subjects {
            for c in &conditions {
                let mut p = CellParams {
                    detect_prob: s.detect_prob,
                    double_prob: s.double_prob,
                    confidence_mean: s.confidence_mean,
                    confidence_spread: s.confidence_spread,
                    class_dist: s
                        .class_dist
                        .as_ref()
                        .map(|d| d.iter().map(|(k, v)| (k.clone(), *v)).collect()),
                };
                for o in s.overrides.iter().filter(|o| c.matches(&o.when)) {
                    p.detect_prob = o.detect_prob.unwrap_or(p.detect_prob);
                    p.double_prob = o.double_prob.unwrap_or(p.double_prob);
                    p.confidence_mean = o.confidence_mean.unwrap_or(p.confidence_mean);
                    p.confidence_spread = o.confidence_spread.unwrap_or(p.confidence_spread);
                    if let Some(d) = &o.class_dist {
                        p.class_dist = Some(d.iter().map(|(k, v)| (k.clone(), *v)).collect());
                    }
                }
                params.insert((s.label.clone(), c.clone()), p);
            }
        }
        let spec = ScenarioSpec {
            grid: self.grid,
            subjects: self
                .subjects
                .iter()
                .map(|s| SubjectId {
                    label: s.label.clone(),
                    kind: s.kind,
                })
                .collect(),
            params,
            n_frames: self.n_frames,
            seed: self.seed,
            target_class: self.target_class,
            models: self.models,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{aggregate, PostprocessConfig};
    use crate::model::Factor;

    fn grid() -> ConditionGrid {
        ConditionGrid::new(vec![Factor::new("d", ["1in", "5in", "10in"]).unwrap()]).unwrap()
    }

    fn spec(base: CellParams, adv: CellParams, n: u64) -> ScenarioSpec {
        ScenarioSpec::uniform(
            grid(),
            vec![
                (SubjectId::baseline("none"), base),
                (SubjectId::adversary("p"), adv),
            ],
            n,
            11,
        )
        .unwrap()
    }

    #[test]
    fn certain_double_detection() {
        let s = spec(
            CellParams::detection(1.0, 0.0),
            CellParams::detection(1.0, 1.0),
            500,
        );
        let frames = simulate_detections(&s).unwrap();
        let c = Condition::new().with("d", "5in");
        assert!(frames.iter().filter(|f| f.subject.label == "p").all(|f| f
            .detections
            .iter()
            .filter(|d| d.class_label == "vase")
            .count()
            == 2));
        let t = aggregate(&frames, "vase", &PostprocessConfig::default()).unwrap();
        assert_eq!(t.get("p", &c).unwrap().count, 1000);
    }

    #[test]
    fn zero_probability_never_detects() {
        let s = spec(
            CellParams::detection(0.0, 0.5),
            CellParams::detection(0.0, 0.5),
            200,
        );
        let frames = simulate_detections(&s).unwrap();
        assert!(frames.iter().all(|f| f
            .detections
            .iter()
            .all(|d| d.class_label == DISTRACTOR_CLASS)));
    }

    #[test]
    fn emitted_targets_pass_the_objectness_gate() {
        let s = spec(
            CellParams::detection(0.7, 0.3),
            CellParams::detection(0.4, 0.2),
            300,
        );
        for f in simulate_detections(&s).unwrap() {
            for d in f.detections.iter().filter(|d| d.class_label == "vase") {
                assert!(d.objectness > 0.5 && d.objectness <= 1.0);
                assert!((0.0..=1.0).contains(&d.confidence));
            }
        }
    }

    #[test]
    fn true_score_closed_form() {
        let mut s = spec(
            CellParams::detection(1.0, 0.0),
            CellParams::detection(0.0, 0.0),
            10,
        );
        let conds = enumerate_grid(&s.grid).unwrap();
        assert_eq!(true_score(&s, "p", &conds, CountMode::Frames).unwrap(), 1.0);
        assert_eq!(
            true_score(&s, "none", &conds, CountMode::Frames).unwrap(),
            0.0
        );
        for (c, (pb, pa)) in conds.iter().zip([(0.9, 0.1), (0.8, 0.2), (0.7, 0.3)]) {
            s.params_mut("none", c).unwrap().detect_prob = pb;
            s.params_mut("p", c).unwrap().detect_prob = pa;
        }
        let expected = (0.8 + 0.6 + 0.4) / 3.0;
        assert!((true_score(&s, "p", &conds, CountMode::Frames).unwrap() - expected).abs() < 1e-15);
        s.params_mut("p", &conds[0]).unwrap().double_prob = 1.0;
        let with_double = true_score(&s, "p", &conds, CountMode::Detections).unwrap();
        assert!((with_double - (expected - 0.1 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn classification_point_mass_and_determinism() {
        let teapot = CellParams::detection(0.0, 0.0).with_classes([("teapot", 1.0)]);
        let s = spec(teapot.clone(), teapot, 50);
        let recs = simulate_classifications(&s).unwrap();
        assert_eq!(recs.len(), 300);
        assert!(recs.iter().all(|r| r.top_class == "teapot"));

        let mix = CellParams::detection(0.0, 0.0).with_classes([("a", 0.5), ("b", 0.5)]);
        let s1 = spec(mix.clone(), mix, 100);
        let mut s2 = s1.clone();
        s2.seed = 12;
        let r1 = simulate_classifications(&s1).unwrap();
        assert_eq!(r1, simulate_classifications(&s1).unwrap());
        assert_ne!(r1, simulate_classifications(&s2).unwrap());
    }

    #[test]
    fn missing_class_dist_is_an_error() {
        let s = spec(
            CellParams::detection(0.5, 0.0),
            CellParams::detection(0.5, 0.0),
            5,
        );
        assert!(matches!(
            simulate_classifications(&s),
            Err(SimError::MissingClassDist { .. })
        ));
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad = ScenarioSpec::uniform(
            grid(),
            vec![(SubjectId::baseline("none"), CellParams::detection(1.2, 0.0))],
            5,
            0,
        );
        assert!(matches!(
            bad,
            Err(SimError::Probability {
                field: "detect_prob",
                ..
            })
        ));
        let bad_sum = ScenarioSpec::uniform(
            grid(),
            vec![(
                SubjectId::baseline("none"),
                CellParams::detection(0.5, 0.0).with_classes([("a", 0.5), ("b", 0.4)]),
            )],
            5,
            0,
        );
        assert!(matches!(bad_sum, Err(SimError::ClassSum { .. })));
        let no_base = ScenarioSpec::uniform(
            grid(),
            vec![(SubjectId::adversary("p"), CellParams::detection(0.5, 0.0))],
            5,
            0,
        );
        assert_eq!(no_base.unwrap_err(), SimError::Baseline);
    }

    #[test]
    fn sharded_generation_matches_sequential() {
        let s = spec(
            CellParams::detection(0.6, 0.3),
            CellParams::detection(0.2, 0.1),
            400,
        );
        assert_eq!(
            simulate_detections_with(&s, Exec::Sequential).unwrap(),
            simulate_detections_with(&s, Exec::Parallel).unwrap()
        );
    }
}
