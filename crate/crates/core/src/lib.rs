//! Survey pre-testing toolkit.
//!
//! Builds respondent prompts under four information regimes (baseline, demo,
//! mirror, omni), collects Likert answers from a pluggable completion backend,
//! estimates latent-variable path models with seeded bootstrap inference, and
//! compares generated against human response sets with distribution metrics.

pub mod bundled;
pub mod llm;
pub mod metrics;
pub mod pipeline;
pub mod plssem;
pub mod prompting;
pub mod report;
pub mod survey;
pub mod synth;

pub use survey::{
    LatentRole, LatentVariable, LikertScale, Respondent, ResponseMatrix, StructuralPath,
    SurveyError, SurveySpec,
};
