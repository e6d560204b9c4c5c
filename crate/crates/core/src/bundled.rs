//! Study definitions shipped with the toolkit.
//!
//! Three ready-to-use specs cover an online-advertising attitude survey and a
//! bank-customer loyalty survey in two structural variants (a single loyalty
//! regression, and the full mediation model through trust and satisfaction).

use std::sync::Arc;

use crate::survey::SurveySpec;

pub const STUDY1_JSON: &str = include_str!("../studies/study1.json");
pub const STUDY2_CASE1_JSON: &str = include_str!("../studies/study2_case1.json");
pub const STUDY2_CASE2_JSON: &str = include_str!("../studies/study2_case2.json");

fn parse(source: &str) -> Arc<SurveySpec> {
    Arc::new(SurveySpec::from_json(source).expect("bundled spec is valid"))
}

pub fn study1() -> Arc<SurveySpec> {
    parse(STUDY1_JSON)
}

pub fn study2_case1() -> Arc<SurveySpec> {
    parse(STUDY2_CASE1_JSON)
}

pub fn study2_case2() -> Arc<SurveySpec> {
    parse(STUDY2_CASE2_JSON)
}

/// Resolves a bundled spec by name (`study1`, `study2_case1`, `study2_case2`).
pub fn by_name(name: &str) -> Option<Arc<SurveySpec>> {
    match name {
        "study1" => Some(study1()),
        "study2_case1" => Some(study2_case1()),
        "study2_case2" => Some(study2_case2()),
        _ => None,
    }
}

pub fn names() -> &'static [&'static str] {
    &["study1", "study2_case1", "study2_case2"]
}
