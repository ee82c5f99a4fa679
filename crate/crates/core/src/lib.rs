//! Baseline-relative effectiveness scoring for physical adversarial objects.
//!
//! Detector or classifier logs captured over a factorial grid of scene
//! conditions are reduced to per-cell counts, scored against a no-patch
//! baseline, and summarized with bootstrap intervals, ANOVA, t-tests and
//! logistic regression over one-hot scene encodings.
//!
//! ```
//! use advscore::model::{Condition, ConditionGrid, CountCell, Factor, FrequencyTable, SubjectId};
//! use advscore::score::{effectiveness_score, ScoreConfig};
//!
//! let grid = ConditionGrid::new(vec![Factor::new("bulb", ["Hlgn", "LED"]).unwrap()]).unwrap();
//! let mut table = FrequencyTable::new(SubjectId::baseline("none"));
//! for (bulb, base, adv) in [("Hlgn", 500, 0), ("LED", 400, 100)] {
//!     let c = Condition::new().with("bulb", bulb);
//!     table.insert(CountCell::new(SubjectId::baseline("none"), c.clone(), base, 500, Some(0.9)).unwrap()).unwrap();
//!     table.insert(CountCell::new(SubjectId::adversary("patch"), c, adv, 500, (adv > 0).then_some(0.7)).unwrap()).unwrap();
//! }
//! let cfg = ScoreConfig::all_conditions(&table, "patch").unwrap();
//! assert!((effectiveness_score(&table, &cfg).unwrap() - 0.8).abs() < 1e-12);
//! # let _ = grid;
//! ```

pub mod detect;
pub mod error;
pub mod ingest;
pub mod model;
pub mod par;
pub mod report;
pub mod score;
pub mod sim;
pub mod stats;

pub use error::{IngestError, ModelError, ReportError, ScoreError, SimError, StatsError};
pub use par::Exec;
