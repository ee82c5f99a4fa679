use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("empty {0}")]
    EmptyIdentifier(&'static str),
    #[error("factor `{0}` has no levels")]
    NoLevels(String),
    #[error("factor `{factor}` repeats level `{level}`")]
    DuplicateLevel { factor: String, level: String },
    #[error("factor `{0}` declared twice")]
    DuplicateFactor(String),
    #[error("grid has no factors")]
    EmptyGrid,
    #[error("unknown factor `{0}`")]
    UnknownFactor(String),
    #[error("unknown level `{level}` for factor `{factor}`")]
    UnknownLevel { factor: String, level: String },
    #[error("condition {condition} does not assign factor `{factor}`")]
    IncompleteCondition { condition: String, factor: String },
    #[error("condition {0} is not part of the grid")]
    NotInGrid(String),
    #[error("duplicate conditions in grid: {}", .0.join(", "))]
    DuplicateConditions(Vec<String>),
    #[error("unknown subject kind `{0}` (expected adversary or baseline)")]
    UnknownKind(String),
    #[error("cell {0} has zero frames")]
    ZeroFrames(String),
    #[error("cell {0} has count 0 but carries a mean confidence")]
    ConfidenceOnZeroCount(String),
    #[error("cell {0} has a nonzero count but no mean confidence")]
    MissingConfidence(String),
    #[error("{field} = {value} is outside [0, 1]")]
    OutOfRange { field: &'static str, value: f64 },
    #[error("duplicate cell {0}")]
    DuplicateCell(String),
    #[error("condition {condition}: n_frames {found} differs from {expected}")]
    FrameCountMismatch {
        condition: String,
        expected: u64,
        found: u64,
    },
    #[error("two baseline subjects: `{0}` and `{1}`")]
    MultipleBaselines(String, String),
    #[error("subject `{0}` appears with conflicting kinds")]
    KindConflict(String),
    #[error("dataset has no baseline subject")]
    NoBaseline,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: field `{field}` = {value} is out of range")]
    Range {
        line: usize,
        field: String,
        value: f64,
    },
    #[error("line {line}: unknown field `{field}` (strict mode)")]
    UnknownField { line: usize, field: String },
    #[error("line {line}: {source}")]
    Model {
        line: usize,
        #[source]
        source: ModelError,
    },
    #[error("line {line}: frame {frame} repeated for {subject} @ {condition}")]
    DuplicateFrame {
        line: usize,
        subject: String,
        condition: String,
        frame: u64,
    },
    #[error("line {line}: exceeds the {cap}-byte line cap")]
    LineTooLong { line: usize, cap: usize },
    #[error("input is empty")]
    Empty,
    #[error("bad header: {0}")]
    Header(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("no cell for subject `{subject}` at {condition}")]
    MissingCell { subject: String, condition: String },
    #[error("no baseline cell at {0}")]
    MissingBaseline(String),
    #[error("frame counts differ across conditions ({0} vs {1}); pass an explicit n")]
    NonuniformFrames(u64, u64),
    #[error("condition set is empty")]
    EmptyConditions,
    #[error("unknown subject `{0}`")]
    UnknownSubject(String),
    #[error("unknown factor `{0}`")]
    UnknownFactor(String),
    #[error("class `{0}` is not tracked by the count table")]
    UntrackedClass(String),
    #[error("nothing to report")]
    EmptyReport,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("input is empty")]
    Empty,
    #[error("confidence level {0} is not in (0, 1)")]
    BadLevel(f64),
    #[error("need at least {needed} {what}, got {got}")]
    TooFew {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("sample variance is zero")]
    ZeroVariance,
    #[error("weighted normal equations are singular; retry with a small ridge (e.g. 1e-6)")]
    Singular,
    #[error("ridge must be finite and nonnegative, got {0}")]
    BadRidge(f64),
    #[error("design has {rows} rows but {cols} columns; need rows >= columns without ridge")]
    Underdetermined { rows: usize, cols: usize },
    #[error("response must be 0 or 1, got {0}")]
    NonBinaryResponse(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("{field} = {value} is outside [0, 1] for {subject} @ {condition}")]
    Probability {
        field: &'static str,
        value: f64,
        subject: String,
        condition: String,
    },
    #[error("class distribution for {subject} @ {condition} sums to {sum}")]
    ClassSum {
        subject: String,
        condition: String,
        sum: f64,
    },
    #[error("no class distribution for {subject} @ {condition}")]
    MissingClassDist { subject: String, condition: String },
    #[error("scenario needs exactly one baseline subject")]
    Baseline,
    #[error("n_frames must be positive")]
    ZeroFrames,
    #[error("unknown subject `{0}`")]
    UnknownSubject(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("nothing to render")]
    Empty,
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
