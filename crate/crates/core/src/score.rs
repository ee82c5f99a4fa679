//! Baseline-relative effectiveness score.
//!
//! For a subject `P` and condition set `E`:
//!
//! ```text
//! S(P, E) = 1/|E| * sum_{e in E} (f_base,e - f_P,e) / n
//! ```
//!
//! where `f` are target counts and `n` the frames per condition. A score of 1
//! means a perfect baseline and a subject that was never detected; negative
//! scores mean the subject helped detection.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::detect::ClassFrequencies;
use crate::error::ScoreError;
use crate::model::{
    enumerate_grid, Condition, ConditionGrid, ConditionScore, FrequencyTable, LevelScore,
    ScoreReport, SubjectId,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreConfig {
    pub subject: String,
    pub conditions: Vec<Condition>,
    pub n_override: Option<u64>,
}

impl ScoreConfig {
    pub fn new(subject: impl Into<String>, conditions: Vec<Condition>) -> Self {
        ScoreConfig {
            subject: subject.into(),
            conditions,
            n_override: None,
        }
    }

    /// Every condition at which the subject has a cell.
    pub fn all_conditions(table: &FrequencyTable, subject: &str) -> Result<Self, ScoreError> {
        if table.subject(subject).is_none() {
            return Err(ScoreError::UnknownSubject(subject.to_owned()));
        }
        let conditions = table
            .cells_of(subject)
            .map(|c| c.condition.clone())
            .collect();
        Ok(ScoreConfig::new(subject, conditions))
    }
}

/// Baseline and subject counts plus the frame count at one condition.
#[derive(Debug, Clone, Copy, PartialEq)]
struct CellPair {
    baseline: u64,
    subject: u64,
    n: u64,
}

fn cell_pair(
    table: &FrequencyTable,
    subject: &str,
    cond: &Condition,
) -> Result<CellPair, ScoreError> {
    let adv = table
        .get(subject, cond)
        .ok_or_else(|| ScoreError::MissingCell {
            subject: subject.to_owned(),
            condition: cond.to_string(),
        })?;
    let (base, _) = table
        .baseline_cell(cond)
        .ok_or_else(|| ScoreError::MissingBaseline(cond.to_string()))?;
    if base.n_frames != adv.n_frames {
        return Err(ScoreError::NonuniformFrames(base.n_frames, adv.n_frames));
    }
    Ok(CellPair {
        baseline: base.count,
        subject: adv.count,
        n: adv.n_frames,
    })
}

fn singleton(pair: CellPair, n: u64) -> f64 {
    (pair.baseline as f64 - pair.subject as f64) / n as f64
}

/// Per-condition scores for the conditions in `cfg`, in the given order.
pub fn scores_over(table: &FrequencyTable, cfg: &ScoreConfig) -> Result<Vec<f64>, ScoreError> {
    if cfg.conditions.is_empty() {
        return Err(ScoreError::EmptyConditions);
    }
    let pairs = cfg
        .conditions
        .iter()
        .map(|c| cell_pair(table, &cfg.subject, c))
        .collect::<Result<Vec<_>, _>>()?;
    let n = match cfg.n_override {
        Some(n) => n,
        None => {
            let n = pairs[0].n;
            if let Some(other) = pairs.iter().find(|p| p.n != n) {
                return Err(ScoreError::NonuniformFrames(n, other.n));
            }
            n
        }
    };
    Ok(pairs.into_iter().map(|p| singleton(p, n)).collect())
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// `S(P, E)`: mean of per-condition scores over `cfg.conditions`.
pub fn effectiveness_score(table: &FrequencyTable, cfg: &ScoreConfig) -> Result<f64, ScoreError> {
    Ok(mean(&scores_over(table, cfg)?))
}

/// Score of each condition on its own (`E` a singleton), using each cell's own
/// frame count.
pub fn singleton_scores(
    table: &FrequencyTable,
    subject: &str,
) -> Result<BTreeMap<Condition, f64>, ScoreError> {
    if table.subject(subject).is_none() {
        return Err(ScoreError::UnknownSubject(subject.to_owned()));
    }
    table
        .cells_of(subject)
        .map(|cell| {
            let pair = cell_pair(table, subject, &cell.condition)?;
            Ok((cell.condition.clone(), singleton(pair, pair.n)))
        })
        .collect()
}

/// For each level of `factor`, the mean singleton score over the subject's
/// conditions at that level. Levels follow grid order; levels without data
/// are omitted.
pub fn marginal_scores(
    table: &FrequencyTable,
    grid: &ConditionGrid,
    subject: &str,
    factor: &str,
) -> Result<Vec<(String, f64)>, ScoreError> {
    let levels = grid
        .levels_of(factor)
        .ok_or_else(|| ScoreError::UnknownFactor(factor.to_owned()))?;
    let singles = singleton_scores(table, subject)?;
    Ok(levels
        .into_iter()
        .filter_map(|level| {
            let vals: Vec<f64> = singles
                .iter()
                .filter(|(c, _)| c.get(factor) == Some(level.as_str()))
                .map(|(_, s)| *s)
                .collect();
            (!vals.is_empty()).then(|| (level, mean(&vals)))
        })
        .collect())
}

/// Singleton scores grouped by level of `factor`, for ANOVA and bootstrap.
pub fn scores_by_level(
    table: &FrequencyTable,
    grid: &ConditionGrid,
    subject: &str,
    factor: &str,
) -> Result<Vec<(String, Vec<f64>)>, ScoreError> {
    let levels = grid
        .levels_of(factor)
        .ok_or_else(|| ScoreError::UnknownFactor(factor.to_owned()))?;
    let singles = singleton_scores(table, subject)?;
    let ordered = order_by_grid(grid, singles);
    Ok(levels
        .into_iter()
        .map(|level| {
            let vals = ordered
                .iter()
                .filter(|cs| cs.condition.get(factor) == Some(level.as_str()))
                .map(|cs| cs.score)
                .collect();
            (level, vals)
        })
        .filter(|(_, v): &(String, Vec<f64>)| !v.is_empty())
        .collect())
}

fn order_by_grid(grid: &ConditionGrid, scores: BTreeMap<Condition, f64>) -> Vec<ConditionScore> {
    let mut out: Vec<ConditionScore> = scores
        .into_iter()
        .map(|(condition, score)| ConditionScore { condition, score })
        .collect();
    out.sort_by_key(|cs| grid.index_of(&cs.condition).unwrap_or(usize::MAX));
    out
}

/// Overall, per-condition and per-factor scores for `subject`.
///
/// `E` is every grid condition where the subject was measured. Per-factor
/// entries cover every grid factor.
pub fn score_report(
    table: &FrequencyTable,
    grid: &ConditionGrid,
    subject: &str,
) -> Result<ScoreReport, ScoreError> {
    let id: SubjectId = table
        .subject(subject)
        .cloned()
        .ok_or_else(|| ScoreError::UnknownSubject(subject.to_owned()))?;
    let conditions: Vec<Condition> = enumerate_grid(grid)?
        .into_iter()
        .filter(|c| table.get(subject, c).is_some())
        .collect();
    let per_condition_values = scores_over(table, &ScoreConfig::new(subject, conditions.clone()))?;
    let overall = mean(&per_condition_values);
    let per_condition = conditions
        .into_iter()
        .zip(per_condition_values)
        .map(|(condition, score)| ConditionScore { condition, score })
        .collect();
    let mut per_factor = Vec::new();
    for f in &grid.factors {
        for (level, score) in marginal_scores(table, grid, subject, &f.name)? {
            per_factor.push(LevelScore {
                factor: f.name.clone(),
                level,
                score,
                ci: None,
            });
        }
    }
    Ok(ScoreReport {
        subject: id,
        overall,
        per_condition,
        per_factor,
        ci: None,
        tests: BTreeMap::new(),
    })
}

/// Score pair for a targeted attack that pushes a source class toward a
/// target class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetedScores {
    /// Mean drop in source-class hits, baseline minus adversary.
    pub source_comparison: f64,
    /// Mean rise in target-class hits, adversary minus baseline.
    pub target_comparison: f64,
}

/// Targeted score pair over `conditions` (every condition where the adversary
/// was measured when `None`).
pub fn targeted_scores(
    freqs: &ClassFrequencies,
    source_class: &str,
    target_class: &str,
    adv_subject: &str,
    conditions: Option<Vec<Condition>>,
) -> Result<TargetedScores, ScoreError> {
    let source = freqs
        .for_class(source_class)
        .ok_or_else(|| ScoreError::UntrackedClass(source_class.to_owned()))?;
    let target = freqs
        .for_class(target_class)
        .ok_or_else(|| ScoreError::UntrackedClass(target_class.to_owned()))?;
    let cfg = match conditions {
        Some(c) => ScoreConfig::new(adv_subject, c),
        None => ScoreConfig::all_conditions(&source, adv_subject)?,
    };
    Ok(TargetedScores {
        source_comparison: effectiveness_score(&source, &cfg)?,
        target_comparison: -effectiveness_score(&target, &cfg)?,
    })
}
