//! Domain vocabulary shared by every stage of the harness: factors and
//! condition grids, subjects, detections, per-cell counts and score reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// One environmental dimension with its ordered levels.
///
/// The first declared level is the reference level for one-hot encodings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    pub levels: Vec<String>,
}

impl Factor {
    pub fn new<S: Into<String>>(
        name: S,
        levels: impl IntoIterator<Item = impl Into<String>>,
    ) -> Result<Self, ModelError> {
        let factor = Factor {
            name: name.into(),
            levels: levels.into_iter().map(Into::into).collect(),
        };
        factor.validate()?;
        Ok(factor)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.name.is_empty() {
            return Err(ModelError::EmptyIdentifier("factor name"));
        }
        if self.levels.is_empty() {
            return Err(ModelError::NoLevels(self.name.clone()));
        }
        let mut seen = BTreeSet::new();
        for level in &self.levels {
            if !seen.insert(level.as_str()) {
                return Err(ModelError::DuplicateLevel {
                    factor: self.name.clone(),
                    level: level.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn position(&self, level: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == level)
    }
}

/// A point in environment space: exactly one level per varied factor.
///
/// Identity is the full assignment map. Factors that an experiment does not
/// vary do not appear.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Condition(BTreeMap<String, String>);

impl Condition {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with<K: Into<String>, V: Into<String>>(mut self, factor: K, level: V) -> Self {
        self.0.insert(factor.into(), level.into());
        self
    }

    pub fn from_pairs<K, V>(pairs: impl IntoIterator<Item = (K, V)>) -> Self
    where
        K: Into<String>,
        V: Into<String>,
    {
        Condition(
            pairs
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
        )
    }

    pub fn get(&self, factor: &str) -> Option<&str> {
        self.0.get(factor).map(String::as_str)
    }

    pub fn set(&mut self, factor: &str, level: &str) {
        self.0.insert(factor.to_owned(), level.to_owned());
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// True if every assignment in `partial` also holds here.
    pub fn matches(&self, partial: &Condition) -> bool {
        partial.iter().all(|(f, l)| self.get(f) == Some(l))
    }

    /// Renders the levels in the order of `factors`, e.g. `center/LED/1in`.
    pub fn label_in(&self, factors: &[Factor]) -> String {
        factors
            .iter()
            .map(|f| self.get(&f.name).unwrap_or("?"))
            .collect::<Vec<_>>()
            .join("/")
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|(k, v)| format!("{k}={v}")).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// A factorial lattice of conditions plus explicitly listed extra blocks.
///
/// Extra-block conditions must assign every factor, but may use levels that
/// are not part of the factorial (e.g. a single extra altitude).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionGrid {
    pub factors: Vec<Factor>,
    #[serde(default)]
    pub extra_blocks: Vec<Vec<Condition>>,
}

impl ConditionGrid {
    pub fn new(factors: Vec<Factor>) -> Result<Self, ModelError> {
        Self::with_extras(factors, Vec::new())
    }

    pub fn with_extras(
        factors: Vec<Factor>,
        extra_blocks: Vec<Vec<Condition>>,
    ) -> Result<Self, ModelError> {
        let grid = ConditionGrid {
            factors,
            extra_blocks,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.factors.is_empty() {
            return Err(ModelError::EmptyGrid);
        }
        let mut names = BTreeSet::new();
        for factor in &self.factors {
            factor.validate()?;
            if !names.insert(factor.name.as_str()) {
                return Err(ModelError::DuplicateFactor(factor.name.clone()));
            }
        }
        for block in &self.extra_blocks {
            for cond in block {
                for (name, _) in cond.iter() {
                    if !names.contains(name) {
                        return Err(ModelError::UnknownFactor(name.to_owned()));
                    }
                }
                if let Some(missing) = self.factors.iter().find(|f| cond.get(&f.name).is_none()) {
                    return Err(ModelError::IncompleteCondition {
                        condition: cond.to_string(),
                        factor: missing.name.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn factor(&self, name: &str) -> Option<&Factor> {
        self.factors.iter().find(|f| f.name == name)
    }

    pub fn factorial_size(&self) -> usize {
        self.factors.iter().map(|f| f.levels.len()).product()
    }

    pub fn size(&self) -> usize {
        self.factorial_size() + self.extra_blocks.iter().map(Vec::len).sum::<usize>()
    }

    /// All levels a factor takes anywhere in the grid: declared levels first,
    /// then levels that only occur in extra blocks, in order of appearance.
    pub fn levels_of(&self, factor: &str) -> Option<Vec<String>> {
        let f = self.factor(factor)?;
        let mut levels = f.levels.clone();
        for cond in self.extra_blocks.iter().flatten() {
            if let Some(level) = cond.get(factor) {
                if !levels.iter().any(|l| l == level) {
                    levels.push(level.to_owned());
                }
            }
        }
        Some(levels)
    }

    /// Checks that `cond` is a member of this grid.
    pub fn check_condition(&self, cond: &Condition) -> Result<(), ModelError> {
        for (name, _) in cond.iter() {
            if self.factor(name).is_none() {
                return Err(ModelError::UnknownFactor(name.to_owned()));
            }
        }
        let mut in_factorial = true;
        for f in &self.factors {
            match cond.get(&f.name) {
                None => {
                    return Err(ModelError::IncompleteCondition {
                        condition: cond.to_string(),
                        factor: f.name.clone(),
                    })
                }
                Some(level) if f.position(level).is_none() => in_factorial = false,
                Some(_) => {}
            }
        }
        if in_factorial || self.extra_blocks.iter().flatten().any(|c| c == cond) {
            return Ok(());
        }
        // Report the first level that is neither declared nor in an extra block.
        for f in &self.factors {
            let level = cond.get(&f.name).unwrap_or_default();
            let known = self
                .levels_of(&f.name)
                .is_some_and(|ls| ls.iter().any(|l| l == level));
            if !known {
                return Err(ModelError::UnknownLevel {
                    factor: f.name.clone(),
                    level: level.to_owned(),
                });
            }
        }
        Err(ModelError::NotInGrid(cond.to_string()))
    }

    /// Position of a condition in enumeration order, if it is a member.
    pub fn index_of(&self, cond: &Condition) -> Option<usize> {
        let mut idx = 0usize;
        let mut factorial = true;
        for f in &self.factors {
            match cond.get(&f.name).and_then(|l| f.position(l)) {
                Some(p) => idx = idx * f.levels.len() + p,
                None => {
                    factorial = false;
                    break;
                }
            }
        }
        if factorial && cond.len() == self.factors.len() {
            return Some(idx);
        }
        self.extra_blocks
            .iter()
            .flatten()
            .position(|c| c == cond)
            .map(|p| self.factorial_size() + p)
    }
}

/// Enumerates the grid: factorial block in lexicographic order over the factor
/// declaration order (first factor varies slowest, levels in declared order),
/// then each extra block in declaration order.
pub fn enumerate_grid(grid: &ConditionGrid) -> Result<Vec<Condition>, ModelError> {
    grid.validate()?;
    let mut out = Vec::with_capacity(grid.size());
    let radices: Vec<usize> = grid.factors.iter().map(|f| f.levels.len()).collect();
    let mut digits = vec![0usize; radices.len()];
    for _ in 0..grid.factorial_size() {
        out.push(Condition::from_pairs(
            grid.factors
                .iter()
                .zip(&digits)
                .map(|(f, &d)| (f.name.clone(), f.levels[d].clone())),
        ));
        for pos in (0..digits.len()).rev() {
            digits[pos] += 1;
            if digits[pos] < radices[pos] {
                break;
            }
            digits[pos] = 0;
        }
    }

    let mut seen: BTreeSet<&Condition> = BTreeSet::new();
    let mut duplicates = Vec::new();
    let factorial: BTreeSet<Condition> = out.iter().cloned().collect();
    for cond in grid.extra_blocks.iter().flatten() {
        if factorial.contains(cond) || !seen.insert(cond) {
            duplicates.push(cond.to_string());
        }
    }
    if !duplicates.is_empty() {
        return Err(ModelError::DuplicateConditions(duplicates));
    }
    out.extend(grid.extra_blocks.iter().flatten().cloned());
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubjectKind {
    Adversary,
    Baseline,
}

impl SubjectKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SubjectKind::Adversary => "adversary",
            SubjectKind::Baseline => "baseline",
        }
    }
}

impl std::str::FromStr for SubjectKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "adversary" => Ok(SubjectKind::Adversary),
            "baseline" => Ok(SubjectKind::Baseline),
            other => Err(ModelError::UnknownKind(other.to_owned())),
        }
    }
}

/// A patch or object under test, or the no-adversary baseline.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubjectId {
    pub label: String,
    pub kind: SubjectKind,
}

impl SubjectId {
    pub fn adversary(label: impl Into<String>) -> Self {
        SubjectId {
            label: label.into(),
            kind: SubjectKind::Adversary,
        }
    }

    pub fn baseline(label: impl Into<String>) -> Self {
        SubjectId {
            label: label.into(),
            kind: SubjectKind::Baseline,
        }
    }

    pub fn is_baseline(&self) -> bool {
        self.kind == SubjectKind::Baseline
    }
}

impl fmt::Display for SubjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// Axis-aligned box in pixels, top-left anchored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BoundingBox { x, y, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn is_valid(&self) -> bool {
        [self.x, self.y, self.w, self.h]
            .iter()
            .all(|v| v.is_finite())
            && self.w >= 0.0
            && self.h >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_label: String,
    pub confidence: f64,
    pub objectness: f64,
    pub bbox: BoundingBox,
}

impl Detection {
    pub fn new(
        class_label: impl Into<String>,
        confidence: f64,
        objectness: f64,
        bbox: BoundingBox,
    ) -> Self {
        Detection {
            class_label: class_label.into(),
            confidence,
            objectness,
            bbox,
        }
    }
}

/// One captured frame and the detector outputs logged for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub subject: SubjectId,
    pub condition: Condition,
    pub frame_index: u64,
    pub detections: Vec<Detection>,
}

/// Top-1 output of an image classifier for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRecord {
    pub model_id: String,
    pub subject: SubjectId,
    pub condition: Condition,
    pub frame_index: u64,
    pub top_class: String,
    pub probability: f64,
}

/// Target count for one (subject, condition).
///
/// `count` includes multiplicity, so it may exceed `n_frames` when the target
/// is detected twice in a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountCell {
    pub subject: SubjectId,
    pub condition: Condition,
    pub count: u64,
    pub n_frames: u64,
    pub mean_confidence: Option<f64>,
    /// Baseline cell measured at another level and reused here.
    #[serde(default)]
    pub aliased: bool,
}

impl CountCell {
    pub fn new(
        subject: SubjectId,
        condition: Condition,
        count: u64,
        n_frames: u64,
        mean_confidence: Option<f64>,
    ) -> Result<Self, ModelError> {
        let cell = CountCell {
            subject,
            condition,
            count,
            n_frames,
            mean_confidence,
            aliased: false,
        };
        cell.validate()?;
        Ok(cell)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_frames == 0 {
            return Err(ModelError::ZeroFrames(self.key_label()));
        }
        match (self.count, self.mean_confidence) {
            (0, Some(_)) => Err(ModelError::ConfidenceOnZeroCount(self.key_label())),
            (c, None) if c > 0 => Err(ModelError::MissingConfidence(self.key_label())),
            (_, Some(m)) if !(0.0..=1.0).contains(&m) => Err(ModelError::OutOfRange {
                field: "mean_confidence",
                value: m,
            }),
            _ => Ok(()),
        }
    }

    pub fn frequency(&self) -> f64 {
        self.count as f64 / self.n_frames as f64
    }

    fn key_label(&self) -> String {
        format!("{} @ {}", self.subject, self.condition)
    }
}

/// Maps every level of `factor` onto `level` when looking up baseline cells.
///
/// Used when the baseline was recorded at a single level of some factor and is
/// shared across the others.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineAlias {
    pub factor: String,
    pub level: String,
}

impl BaselineAlias {
    pub fn source_of(&self, cond: &Condition) -> Option<Condition> {
        let current = cond.get(&self.factor)?;
        if current == self.level {
            return None;
        }
        let mut source = cond.clone();
        source.set(&self.factor, &self.level);
        Some(source)
    }
}

/// Per-(subject, condition) target counts for one dataset.
///
/// Frame-count consistency across a condition is not enforced on insert; it
/// is reported by [`validate_dataset`] and enforced when scoring.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub baseline: Option<SubjectId>,
    /// Subjects in first-seen order.
    pub subjects: Vec<SubjectId>,
    cells: BTreeMap<String, BTreeMap<Condition, CountCell>>,
    #[serde(default)]
    pub aliases: Vec<BaselineAlias>,
}

/// Where a baseline value came from when it was looked up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineSource {
    Measured,
    /// Row stored in the table but flagged as a reuse of another level.
    StoredAlias,
    /// Resolved through a declared [`BaselineAlias`] rule.
    RuleAlias,
}

impl FrequencyTable {
    pub fn new(baseline: SubjectId) -> Self {
        FrequencyTable {
            baseline: Some(baseline.clone()),
            subjects: vec![baseline],
            ..Default::default()
        }
    }

    pub fn baseline(&self) -> Result<&SubjectId, ModelError> {
        self.baseline.as_ref().ok_or(ModelError::NoBaseline)
    }

    pub fn with_alias(mut self, alias: BaselineAlias) -> Self {
        self.aliases.push(alias);
        self
    }

    pub fn insert(&mut self, cell: CountCell) -> Result<(), ModelError> {
        cell.validate()?;
        if cell.subject.is_baseline() {
            match &self.baseline {
                Some(b) if *b != cell.subject => {
                    return Err(ModelError::MultipleBaselines(
                        b.label.clone(),
                        cell.subject.label.clone(),
                    ))
                }
                None => self.baseline = Some(cell.subject.clone()),
                _ => {}
            }
        }
        if let Some(existing) = self.subjects.iter().find(|s| s.label == cell.subject.label) {
            if existing.kind != cell.subject.kind {
                return Err(ModelError::KindConflict(cell.subject.label.clone()));
            }
        } else {
            self.subjects.push(cell.subject.clone());
        }
        let row = self.cells.entry(cell.subject.label.clone()).or_default();
        if row.contains_key(&cell.condition) {
            return Err(ModelError::DuplicateCell(cell.key_label()));
        }
        row.insert(cell.condition.clone(), cell);
        Ok(())
    }

    pub fn subject(&self, label: &str) -> Option<&SubjectId> {
        self.subjects.iter().find(|s| s.label == label)
    }

    pub fn adversaries(&self) -> impl Iterator<Item = &SubjectId> {
        self.subjects.iter().filter(|s| !s.is_baseline())
    }

    pub fn get(&self, subject: &str, cond: &Condition) -> Option<&CountCell> {
        self.cells.get(subject)?.get(cond)
    }

    pub fn cells(&self) -> impl Iterator<Item = &CountCell> {
        self.subjects
            .iter()
            .filter_map(|s| self.cells.get(&s.label))
            .flat_map(|row| row.values())
    }

    pub fn cells_of<'a>(&'a self, subject: &str) -> impl Iterator<Item = &'a CountCell> + 'a {
        self.cells
            .get(subject)
            .into_iter()
            .flat_map(|row| row.values())
    }

    pub fn len(&self) -> usize {
        self.cells.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every condition with at least one cell.
    pub fn conditions(&self) -> BTreeSet<&Condition> {
        self.cells.values().flat_map(|row| row.keys()).collect()
    }

    /// Baseline cell for `cond`, falling back to declared alias rules.
    pub fn baseline_cell(&self, cond: &Condition) -> Option<(&CountCell, BaselineSource)> {
        let baseline = self.baseline.as_ref()?;
        if let Some(cell) = self.get(&baseline.label, cond) {
            let source = if cell.aliased {
                BaselineSource::StoredAlias
            } else {
                BaselineSource::Measured
            };
            return Some((cell, source));
        }
        self.aliases
            .iter()
            .filter_map(|a| a.source_of(cond))
            .find_map(|src| self.get(&baseline.label, &src))
            .map(|cell| (cell, BaselineSource::RuleAlias))
    }
}

/// Two-sided test outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestStatistic {
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionScore {
    pub condition: Condition,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelScore {
    pub factor: String,
    pub level: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<ConfidenceInterval>,
}

/// Overall, per-condition and per-factor scores for one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub subject: SubjectId,
    pub overall: f64,
    pub per_condition: Vec<ConditionScore>,
    #[serde(default)]
    pub per_factor: Vec<LevelScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<ConfidenceInterval>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tests: BTreeMap<String, TestStatistic>,
}

/// Problems found when checking a table against its grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValidationIssue {
    MissingCell {
        subject: String,
        condition: String,
    },
    FrameCountMismatch {
        subject: String,
        condition: String,
        expected: u64,
        found: u64,
    },
    BaselineGap {
        condition: String,
    },
    OutsideGrid {
        subject: String,
        condition: String,
        reason: String,
    },
}

/// Outcome of [`validate_dataset`]. Aliased baseline cells are listed
/// separately and do not make the report non-empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
    pub aliased: Vec<String>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Checks that `table` covers every grid condition for every subject, with a
/// consistent frame count per condition and a baseline wherever an adversary
/// was measured.
pub fn validate_dataset(table: &FrequencyTable, grid: &ConditionGrid) -> ValidationReport {
    let mut report = ValidationReport::default();
    let conditions = match enumerate_grid(grid) {
        Ok(c) => c,
        Err(e) => {
            report.issues.push(ValidationIssue::OutsideGrid {
                subject: String::new(),
                condition: String::new(),
                reason: e.to_string(),
            });
            return report;
        }
    };

    for cell in table.cells() {
        if let Err(e) = grid.check_condition(&cell.condition) {
            report.issues.push(ValidationIssue::OutsideGrid {
                subject: cell.subject.label.clone(),
                condition: cell.condition.to_string(),
                reason: e.to_string(),
            });
        }
    }

    let baseline_label = table.baseline.as_ref().map(|b| b.label.as_str());
    for cond in &conditions {
        let label = cond.label_in(&grid.factors);
        let mut expected: Option<u64> = None;
        let mut any_adversary = false;
        for subject in &table.subjects {
            match table.get(&subject.label, cond) {
                Some(cell) => {
                    if !subject.is_baseline() {
                        any_adversary = true;
                    }
                    if cell.aliased {
                        report
                            .aliased
                            .push(format!("{} @ {}", subject.label, label));
                    }
                    match expected {
                        None => expected = Some(cell.n_frames),
                        Some(n) if n != cell.n_frames => {
                            report.issues.push(ValidationIssue::FrameCountMismatch {
                                subject: subject.label.clone(),
                                condition: label.clone(),
                                expected: n,
                                found: cell.n_frames,
                            })
                        }
                        Some(_) => {}
                    }
                }
                None if Some(subject.label.as_str()) == baseline_label => {}
                None => report.issues.push(ValidationIssue::MissingCell {
                    subject: subject.label.clone(),
                    condition: label.clone(),
                }),
            }
        }
        match table.baseline_cell(cond) {
            Some((_, BaselineSource::RuleAlias)) => {
                report
                    .aliased
                    .push(format!("{} @ {}", baseline_label.unwrap_or(""), label));
            }
            Some(_) => {}
            None if any_adversary || table.subjects.len() == 1 => {
                report.issues.push(ValidationIssue::BaselineGap {
                    condition: label.clone(),
                })
            }
            None => {}
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp1_grid() -> ConditionGrid {
        ConditionGrid::new(vec![
            Factor::new("location", ["center", "right"]).unwrap(),
            Factor::new("bulb", ["Hlgn", "LED"]).unwrap(),
            Factor::new("distance", ["1in", "5in", "10in", "15in", "20in"]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn exp1_grid_has_twenty_conditions() {
        let conds = enumerate_grid(&exp1_grid()).unwrap();
        assert_eq!(conds.len(), 20);
        assert_eq!(conds[0].label_in(&exp1_grid().factors), "center/Hlgn/1in");
        assert_eq!(conds[5].label_in(&exp1_grid().factors), "center/LED/1in");
        assert_eq!(conds[19].label_in(&exp1_grid().factors), "right/LED/20in");
    }

    #[test]
    fn exp2_grid_with_extra_block_has_180_scenes() {
        let azimuths: Vec<String> = (0..18).map(|i| format!("{}deg", i * 20)).collect();
        let objects = ["base", "adv"];
        let extra = objects
            .iter()
            .flat_map(|o| {
                azimuths.iter().map(move |a| {
                    Condition::new()
                        .with("distance", "6in")
                        .with("altitude", "43deg")
                        .with("azimuth", a.as_str())
                        .with("object", *o)
                })
            })
            .collect();
        let grid = ConditionGrid::with_extras(
            vec![
                Factor::new("distance", ["3in", "6in"]).unwrap(),
                Factor::new("altitude", ["0deg", "25deg"]).unwrap(),
                Factor::new("azimuth", azimuths.clone()).unwrap(),
                Factor::new("object", objects).unwrap(),
            ],
            vec![extra],
        )
        .unwrap();
        let conds = enumerate_grid(&grid).unwrap();
        assert_eq!(conds.len(), 180);
        assert_eq!(
            grid.levels_of("altitude").unwrap(),
            ["0deg", "25deg", "43deg"]
        );
        for (i, c) in conds.iter().enumerate() {
            assert_eq!(grid.index_of(c), Some(i));
        }
    }

    #[test]
    fn degenerate_grid_is_one_condition() {
        let grid = ConditionGrid::new(vec![Factor::new("only", ["x"]).unwrap()]).unwrap();
        assert_eq!(
            enumerate_grid(&grid).unwrap(),
            vec![Condition::new().with("only", "x")]
        );
    }

    #[test]
    fn duplicate_extra_condition_is_rejected() {
        let grid = ConditionGrid::with_extras(
            vec![Factor::new("a", ["1", "2"]).unwrap()],
            vec![vec![
                Condition::new().with("a", "2"),
                Condition::new().with("a", "3"),
                Condition::new().with("a", "3"),
            ]],
        )
        .unwrap();
        match enumerate_grid(&grid) {
            Err(ModelError::DuplicateConditions(d)) => assert_eq!(d, vec!["{a=2}", "{a=3}"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_levels_rejected() {
        assert!(matches!(
            Factor::new("a", ["x", "x"]),
            Err(ModelError::DuplicateLevel { .. })
        ));
    }

    #[test]
    fn zero_count_never_carries_confidence() {
        let c = Condition::new().with("a", "1");
        assert!(CountCell::new(SubjectId::adversary("p"), c.clone(), 0, 500, Some(0.5)).is_err());
        assert!(CountCell::new(SubjectId::adversary("p"), c.clone(), 3, 500, None).is_err());
        assert!(CountCell::new(SubjectId::adversary("p"), c, 0, 500, None).is_ok());
    }

    fn table_over(grid: &ConditionGrid, n: impl Fn(usize) -> u64) -> FrequencyTable {
        let mut t = FrequencyTable::new(SubjectId::baseline("none"));
        for (i, cond) in enumerate_grid(grid).unwrap().into_iter().enumerate() {
            for s in [SubjectId::baseline("none"), SubjectId::adversary("p")] {
                t.insert(CountCell {
                    subject: s,
                    condition: cond.clone(),
                    count: 1,
                    n_frames: n(i),
                    mean_confidence: Some(0.5),
                    aliased: false,
                })
                .unwrap();
            }
        }
        t
    }

    #[test]
    fn validation_reports_missing_cell_and_mismatch() {
        let grid = exp1_grid();
        let full = table_over(&grid, |_| 500);
        assert!(validate_dataset(&full, &grid).is_empty());

        let mut gap = full.clone();
        let first = enumerate_grid(&grid).unwrap()[3].clone();
        gap.cells.get_mut("p").unwrap().remove(&first);
        let report = validate_dataset(&gap, &grid);
        assert_eq!(report.issues.len(), 1);
        assert!(matches!(
            report.issues[0],
            ValidationIssue::MissingCell { .. }
        ));

        let mut odd = full.clone();
        odd.cells
            .get_mut("p")
            .unwrap()
            .get_mut(&first)
            .unwrap()
            .n_frames = 400;
        let report = validate_dataset(&odd, &grid);
        assert_eq!(report.issues.len(), 1);
        assert!(matches!(
            report.issues[0],
            ValidationIssue::FrameCountMismatch { found: 400, .. }
        ));
    }

    #[test]
    fn alias_rule_resolves_baseline() {
        let grid = exp1_grid();
        let mut t = FrequencyTable::new(SubjectId::baseline("none")).with_alias(BaselineAlias {
            factor: "location".into(),
            level: "center".into(),
        });
        for cond in enumerate_grid(&grid).unwrap() {
            if cond.get("location") == Some("center") {
                t.insert(
                    CountCell::new(
                        SubjectId::baseline("none"),
                        cond.clone(),
                        10,
                        500,
                        Some(0.9),
                    )
                    .unwrap(),
                )
                .unwrap();
            }
            t.insert(CountCell::new(SubjectId::adversary("p"), cond, 0, 500, None).unwrap())
                .unwrap();
        }
        let report = validate_dataset(&t, &grid);
        assert!(report.is_empty(), "{report:?}");
        assert_eq!(report.aliased.len(), 10);
        let right = Condition::new()
            .with("location", "right")
            .with("bulb", "LED")
            .with("distance", "5in");
        assert_eq!(
            t.baseline_cell(&right).unwrap().1,
            BaselineSource::RuleAlias
        );
    }
}
