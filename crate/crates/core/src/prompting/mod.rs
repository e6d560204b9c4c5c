//! Prompt assembly for the four information regimes, persona generation,
//! and parsing of model replies into validated Likert answers.
//!
//! Templates are versioned text assets with named placeholders; the regime
//! contract (which respondent facts each approach may carry) is enforced
//! structurally when the bundle is built, not by template inspection.

use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::llm::{BackendError, CompletionBackend, CompletionRequest, RequestDefaults, RequestPurpose, RequestTag};
use crate::survey::{LikertScale, Respondent, SurveySpec};

pub const TEMPLATE_VERSION: &str = "v1";
pub const RESPONDENT_TEMPLATE: &str = include_str!("templates/respondent_v1.txt");
pub const PERSONA_TEMPLATE: &str = include_str!("templates/persona_v1.txt");
pub const FORMAT_REMINDER_TEMPLATE: &str = include_str!("templates/format_reminder_v1.txt");
pub const SYSTEM_PROMPT: &str = include_str!("templates/system_v1.txt");

/// Parse retries before a respondent is recorded as failed.
pub const MAX_REPLY_RETRIES: usize = 3;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("approach `mirror` requires a persona")]
    PersonaMissing,
    #[error("approach `{0}` does not accept a persona")]
    PersonaUnexpected(&'static str),
    #[error("respondent `{respondent}` has no answer for prior item `{item}`")]
    MissingPriorAnswer { respondent: String, item: String },
    #[error("template placeholder `{0}` was not filled")]
    UnfilledPlaceholder(String),
    #[error("reply contains no bracketed integer answer block")]
    NoAnswerBlock,
    #[error("answer block has {got} integers, expected {expected}")]
    WrongAnswerCount { expected: usize, got: usize },
    #[error("answer {value} at position {position} outside Likert range [{min}, {max}]")]
    AnswerOutOfRange {
        position: usize,
        value: i64,
        min: i32,
        max: i32,
    },
    #[error("backend returned an empty persona for `{respondent}` after {attempts} attempts")]
    EmptyPersona { respondent: String, attempts: usize },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// The four information regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Approach {
    Baseline,
    Demo,
    Mirror,
    Omni,
}

impl Approach {
    pub fn all() -> [Approach; 4] {
        [
            Approach::Baseline,
            Approach::Demo,
            Approach::Mirror,
            Approach::Omni,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Approach::Baseline => "baseline",
            Approach::Demo => "demo",
            Approach::Mirror => "mirror",
            Approach::Omni => "omni",
        }
    }

    pub fn parse(name: &str) -> Option<Approach> {
        match name {
            "baseline" => Some(Approach::Baseline),
            "demo" => Some(Approach::Demo),
            "mirror" => Some(Approach::Mirror),
            "omni" => Some(Approach::Omni),
            _ => None,
        }
    }

    /// Which prompt ingredients this regime carries.
    pub fn ingredients(&self) -> IngredientFlags {
        match self {
            Approach::Baseline => IngredientFlags {
                survey_context: true,
                demographics: false,
                prior_qa: false,
                persona: false,
                questions: true,
            },
            Approach::Demo => IngredientFlags {
                survey_context: true,
                demographics: true,
                prior_qa: false,
                persona: false,
                questions: true,
            },
            Approach::Mirror => IngredientFlags {
                survey_context: true,
                demographics: false,
                prior_qa: false,
                persona: true,
                questions: true,
            },
            Approach::Omni => IngredientFlags {
                survey_context: true,
                demographics: true,
                prior_qa: true,
                persona: false,
                questions: true,
            },
        }
    }
}

impl std::fmt::Display for Approach {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngredientFlags {
    pub survey_context: bool,
    pub demographics: bool,
    pub prior_qa: bool,
    pub persona: bool,
    pub questions: bool,
}

/// Structured record of what actually went into a rendered prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptContext {
    pub survey_context: bool,
    pub demographics: Option<BTreeMap<String, String>>,
    pub prior_qa: Option<Vec<(String, i32)>>,
    pub persona: Option<String>,
    pub target_items: Vec<String>,
}

impl PromptContext {
    pub fn flags(&self) -> IngredientFlags {
        IngredientFlags {
            survey_context: self.survey_context,
            demographics: self.demographics.is_some(),
            prior_qa: self.prior_qa.is_some(),
            persona: self.persona.is_some(),
            questions: !self.target_items.is_empty(),
        }
    }
}

/// Assembled prompt for one respondent under one approach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub approach: Approach,
    pub respondent_id: String,
    pub template_version: String,
    pub rendered_text: String,
    pub context: PromptContext,
}

/// Generated character sketch standing in for a respondent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaText {
    pub respondent_id: String,
    pub text: String,
    /// Hash of the inputs that produced this persona: demographics, prior
    /// answers, template version, and backend identity.
    pub fingerprint: String,
}

/// Substitutes `{{name}}` placeholders; any placeholder left unfilled is an
/// error so template typos surface immediately.
pub fn render_template(template: &str, vars: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = template.to_string();
    for (key, value) in vars {
        out = out.replace(&format!("{{{{{key}}}}}"), value);
    }
    if let Some(start) = out.find("{{") {
        let rest = &out[start + 2..];
        let name = rest.split("}}").next().unwrap_or("").to_string();
        return Err(PromptError::UnfilledPlaceholder(name));
    }
    Ok(out)
}

/// The shared survey context paragraph.
fn context_paragraph(spec: &SurveySpec) -> String {
    format!(
        "You are a respondent taking part in a survey titled \"{}\". Answer every question on a scale from {} to {}, where {} means you strongly disagree and {} means you strongly agree.",
        spec.name, spec.scale.min, spec.scale.max, spec.scale.min, spec.scale.max
    )
}

fn demographics_block(respondent: &Respondent, spec: &SurveySpec) -> BTreeMap<String, String> {
    spec.demographics
        .iter()
        .map(|field| {
            let value = respondent
                .demographics
                .get(&field.name)
                .map(|v| v.render())
                .unwrap_or_else(|| "not provided".to_string());
            (field.name.clone(), value)
        })
        .collect()
}

fn demographics_lines(values: &BTreeMap<String, String>, spec: &SurveySpec) -> String {
    spec.demographics
        .iter()
        .map(|field| format!("- {}: {}", field.name, values[&field.name]))
        .collect::<Vec<_>>()
        .join("\n")
}

fn prior_qa_pairs(
    respondent: &Respondent,
    prior_items: &[String],
) -> Result<Vec<(String, i32)>, PromptError> {
    prior_items
        .iter()
        .map(|item| {
            respondent
                .answer(item)
                .map(|a| (item.clone(), a))
                .ok_or_else(|| PromptError::MissingPriorAnswer {
                    respondent: respondent.id.clone(),
                    item: item.clone(),
                })
        })
        .collect()
}

fn prior_qa_lines(pairs: &[(String, i32)], spec: &SurveySpec) -> String {
    pairs
        .iter()
        .map(|(item, answer)| {
            let text = spec.item(item).map(|i| i.text.as_str()).unwrap_or(item);
            format!("- Q: {text}\n  A: {answer}")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn questions_lines(target_items: &[String], spec: &SurveySpec) -> String {
    target_items
        .iter()
        .enumerate()
        .map(|(idx, item)| {
            let text = spec.item(item).map(|i| i.text.as_str()).unwrap_or(item);
            format!("{}. {text}", idx + 1)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// A well-formed example answer block for the instruction text.
fn example_block(n_questions: usize, scale: LikertScale) -> String {
    let cycle = [
        scale.midpoint().round() as i32,
        scale.min + 1,
        scale.max - 1,
    ];
    let values: Vec<String> = (0..n_questions)
        .map(|i| cycle[i % cycle.len()].to_string())
        .collect();
    format!("[{}]", values.join(", "))
}

/// Assembles the prompt for one respondent under one approach.
///
/// Sections appear in fixed order: survey context, demographics (demo/omni),
/// prior Q&A (omni), persona (mirror), the answer-format instruction, and the
/// numbered target questions.
pub fn build_prompt(
    approach: Approach,
    respondent: &Respondent,
    spec: &SurveySpec,
    target_items: &[String],
    persona: Option<&PersonaText>,
) -> Result<PromptBundle, PromptError> {
    let flags = approach.ingredients();
    match (flags.persona, persona) {
        (true, None) => return Err(PromptError::PersonaMissing),
        (false, Some(_)) => return Err(PromptError::PersonaUnexpected(approach.name())),
        _ => {}
    }

    let prior_items: Vec<String> = spec
        .item_order()
        .into_iter()
        .filter(|item| !target_items.contains(item))
        .collect();

    let demographics = flags
        .demographics
        .then(|| demographics_block(respondent, spec));
    let prior_qa = if flags.prior_qa {
        Some(prior_qa_pairs(respondent, &prior_items)?)
    } else {
        None
    };
    let persona_text = persona.map(|p| p.text.clone());

    let demographics_section = demographics
        .as_ref()
        .map(|values| {
            format!(
                "Your demographic profile:\n{}\n\n",
                demographics_lines(values, spec)
            )
        })
        .unwrap_or_default();
    let prior_section = prior_qa
        .as_ref()
        .map(|pairs| {
            format!(
                "Earlier in this survey you answered:\n{}\n\n",
                prior_qa_lines(pairs, spec)
            )
        })
        .unwrap_or_default();
    let persona_section = persona_text
        .as_ref()
        .map(|text| format!("{}\n\n", text.trim()))
        .unwrap_or_default();

    let rendered_text = render_template(
        RESPONDENT_TEMPLATE,
        &[
            ("context", context_paragraph(spec).as_str()),
            ("demographics", demographics_section.as_str()),
            ("prior_qa", prior_section.as_str()),
            ("persona", persona_section.as_str()),
            ("n_questions", target_items.len().to_string().as_str()),
            ("scale_min", spec.scale.min.to_string().as_str()),
            ("scale_max", spec.scale.max.to_string().as_str()),
            (
                "example",
                example_block(target_items.len(), spec.scale).as_str(),
            ),
            ("questions", questions_lines(target_items, spec).as_str()),
        ],
    )?;

    Ok(PromptBundle {
        approach,
        respondent_id: respondent.id.clone(),
        template_version: TEMPLATE_VERSION.to_string(),
        rendered_text,
        context: PromptContext {
            survey_context: true,
            demographics,
            prior_qa,
            persona: persona_text,
            target_items: target_items.to_vec(),
        },
    })
}

/// The prompt asking a backend to write a persona sketch from demographics
/// plus prior answers.
pub fn build_persona_prompt(
    respondent: &Respondent,
    prior_items: &[String],
    spec: &SurveySpec,
) -> Result<String, PromptError> {
    let demographics = demographics_block(respondent, spec);
    let pairs = prior_qa_pairs(respondent, prior_items)?;
    let factor_names: Vec<&str> = spec
        .latents
        .iter()
        .filter(|l| l.items.iter().any(|i| prior_items.contains(&i.id)))
        .map(|l| l.name.as_str())
        .collect();
    render_template(
        PERSONA_TEMPLATE,
        &[
            ("context", context_paragraph(spec).as_str()),
            (
                "demographics",
                demographics_lines(&demographics, spec).as_str(),
            ),
            ("prior_qa", prior_qa_lines(&pairs, spec).as_str()),
            ("scale_min", spec.scale.min.to_string().as_str()),
            ("scale_max", spec.scale.max.to_string().as_str()),
            ("factors", factor_names.join(", ").as_str()),
        ],
    )
}

/// Fingerprint of everything a persona was derived from.
pub fn persona_fingerprint(
    respondent: &Respondent,
    prior_items: &[String],
    spec: &SurveySpec,
    backend_identity: &str,
) -> String {
    let mut hasher = Sha256::new();
    hasher.update(respondent.id.as_bytes());
    hasher.update([0x1f]);
    for field in &spec.demographics {
        hasher.update(field.name.as_bytes());
        hasher.update(b"=");
        let value = respondent
            .demographics
            .get(&field.name)
            .map(|v| v.render())
            .unwrap_or_else(|| "not provided".to_string());
        hasher.update(value.as_bytes());
        hasher.update([0x1f]);
    }
    for item in prior_items {
        hasher.update(item.as_bytes());
        hasher.update(b"=");
        if let Some(answer) = respondent.answer(item) {
            hasher.update(answer.to_string().as_bytes());
        }
        hasher.update([0x1f]);
    }
    hasher.update(TEMPLATE_VERSION.as_bytes());
    hasher.update([0x1f]);
    hasher.update(backend_identity.as_bytes());
    hex::encode(hasher.finalize())
}

/// Generates a persona sketch through the backend, retrying empty replies.
pub fn generate_persona(
    respondent: &Respondent,
    prior_items: &[String],
    spec: &SurveySpec,
    backend: &dyn CompletionBackend,
    defaults: &RequestDefaults,
) -> Result<PersonaText, PromptError> {
    let base_prompt = build_persona_prompt(respondent, prior_items, spec)?;
    let mut prompt = base_prompt;
    let attempts = MAX_REPLY_RETRIES + 1;
    for attempt in 0..attempts {
        let request = CompletionRequest {
            model: defaults.model.clone(),
            prompt: prompt.clone(),
            temperature: defaults.temperature,
            max_tokens: defaults.max_tokens,
            tag: RequestTag {
                respondent_id: respondent.id.clone(),
                approach: Approach::Mirror,
                template_version: TEMPLATE_VERSION.to_string(),
                purpose: RequestPurpose::Persona,
            },
        };
        let reply = backend.complete(&request)?;
        if !reply.trim().is_empty() {
            return Ok(PersonaText {
                respondent_id: respondent.id.clone(),
                text: reply.trim().to_string(),
                fingerprint: persona_fingerprint(
                    respondent,
                    prior_items,
                    spec,
                    &backend.identity(),
                ),
            });
        }
        if attempt + 1 < attempts {
            prompt.push_str("\n\nYour previous reply was empty. Write the sketch now.");
        }
    }
    Err(PromptError::EmptyPersona {
        respondent: respondent.id.clone(),
        attempts,
    })
}

/// Formats an answer vector as the bracketed block the instruction mandates.
pub fn format_answer_block(answers: &[i32]) -> String {
    format!(
        "[{}]",
        answers
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    )
}

/// Extracts the mandated bracketed integer list from a model reply.
///
/// The last bracketed list in the reply wins, since models often restate the
/// requested format before answering.
pub fn parse_likert_reply(
    text: &str,
    n_questions: usize,
    scale: LikertScale,
) -> Result<Vec<i32>, PromptError> {
    let block = Regex::new(r"\[\s*-?\d+(?:\s*,\s*-?\d+)*\s*\]").expect("valid regex");
    let candidate = block
        .find_iter(text)
        .last()
        .ok_or(PromptError::NoAnswerBlock)?;
    let inner = &text[candidate.start() + 1..candidate.end() - 1];
    let values: Vec<i64> = inner
        .split(',')
        .map(|part| part.trim().parse::<i64>().expect("regex guarantees integers"))
        .collect();
    if values.len() != n_questions {
        return Err(PromptError::WrongAnswerCount {
            expected: n_questions,
            got: values.len(),
        });
    }
    let mut answers = Vec::with_capacity(values.len());
    for (idx, &value) in values.iter().enumerate() {
        if value < i64::from(scale.min) || value > i64::from(scale.max) {
            return Err(PromptError::AnswerOutOfRange {
                position: idx + 1,
                value,
                min: scale.min,
                max: scale.max,
            });
        }
        answers.push(value as i32);
    }
    Ok(answers)
}

/// The format reminder appended to a prompt after a parse failure.
pub fn format_reminder(n_questions: usize, scale: LikertScale) -> String {
    render_template(
        FORMAT_REMINDER_TEMPLATE,
        &[
            ("n_questions", n_questions.to_string().as_str()),
            ("scale_min", scale.min.to_string().as_str()),
            ("scale_max", scale.max.to_string().as_str()),
            ("example", example_block(n_questions, scale).as_str()),
        ],
    )
    .expect("reminder template placeholders are fixed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;
    use crate::survey::DemographicValue;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn study1_respondent() -> Respondent {
        let spec = bundled::study1();
        let mut answers = BTreeMap::new();
        for (idx, item) in spec.item_order().into_iter().enumerate() {
            answers.insert(item, (idx % 7) as i32 + 1);
        }
        Respondent {
            id: "r1".to_string(),
            demographics: [
                ("age".to_string(), DemographicValue::Numeric(34.0)),
                (
                    "gender".to_string(),
                    DemographicValue::Categorical("female".to_string()),
                ),
            ]
            .into_iter()
            .collect(),
            answers,
        }
    }

    fn study1_split() -> (Vec<String>, Vec<String>) {
        let spec = bundled::study1();
        let targets: BTreeSet<String> = ["attitude".to_string()].into_iter().collect();
        crate::survey::split_items(&spec, &targets).unwrap()
    }

    fn persona_for(respondent: &Respondent) -> PersonaText {
        PersonaText {
            respondent_id: respondent.id.clone(),
            text: "You are an even-tempered internet user who tolerates most ads.".to_string(),
            fingerprint: "abc".to_string(),
        }
    }

    #[test]
    fn baseline_carries_only_context_and_questions() {
        let spec = bundled::study1();
        let (_, target) = study1_split();
        let respondent = study1_respondent();
        let bundle =
            build_prompt(Approach::Baseline, &respondent, &spec, &target, None).unwrap();
        assert_eq!(bundle.context.flags(), Approach::Baseline.ingredients());
        assert!(bundle.context.demographics.is_none());
        assert!(bundle.context.prior_qa.is_none());
        assert!(bundle.context.persona.is_none());
    }

    #[test]
    fn omni_lists_every_prior_item_with_its_answer() {
        let spec = bundled::study1();
        let (prior, target) = study1_split();
        let respondent = study1_respondent();
        let bundle = build_prompt(Approach::Omni, &respondent, &spec, &target, None).unwrap();
        assert_eq!(bundle.context.flags(), Approach::Omni.ingredients());
        let pairs = bundle.context.prior_qa.as_ref().unwrap();
        assert_eq!(pairs.len(), 19);
        for item in &prior {
            let text = &spec.item(item).unwrap().text;
            assert_eq!(
                bundle.rendered_text.matches(text.as_str()).count(),
                1,
                "prior item {item} should appear exactly once"
            );
            let answer = respondent.answer(item).unwrap();
            assert!(bundle
                .rendered_text
                .contains(&format!("- Q: {text}\n  A: {answer}")));
        }
        // the 4 target questions follow, numbered
        for (idx, item) in target.iter().enumerate() {
            let text = &spec.item(item).unwrap().text;
            assert!(bundle
                .rendered_text
                .contains(&format!("{}. {text}", idx + 1)));
        }
    }

    #[test]
    fn mirror_carries_persona_and_no_raw_respondent_data() {
        let spec = bundled::study1();
        let (prior, target) = study1_split();
        let respondent = study1_respondent();
        let persona = persona_for(&respondent);
        let bundle =
            build_prompt(Approach::Mirror, &respondent, &spec, &target, Some(&persona)).unwrap();
        assert_eq!(bundle.context.flags(), Approach::Mirror.ingredients());
        assert!(bundle.rendered_text.contains(&persona.text));
        for field in &spec.demographics {
            // word-boundary match: plain `contains` would hit e.g. "age"
            // inside "messages"
            let pattern = Regex::new(&format!(r"\b{}\b", regex::escape(&field.name))).unwrap();
            assert!(
                !pattern.is_match(&bundle.rendered_text),
                "mirror prompt leaked demographic field `{}`",
                field.name
            );
        }
        for item in &prior {
            let text = &spec.item(item).unwrap().text;
            assert!(
                !bundle.rendered_text.contains(text.as_str()),
                "mirror prompt leaked prior item `{item}`"
            );
        }
    }

    #[test]
    fn every_target_question_appears_exactly_once() {
        let spec = bundled::study1();
        let (_, target) = study1_split();
        let respondent = study1_respondent();
        for approach in Approach::all() {
            let persona = persona_for(&respondent);
            let persona_opt =
                (approach == Approach::Mirror).then_some(&persona);
            let bundle =
                build_prompt(approach, &respondent, &spec, &target, persona_opt).unwrap();
            for item in &target {
                let text = &spec.item(item).unwrap().text;
                assert_eq!(bundle.rendered_text.matches(text.as_str()).count(), 1);
            }
        }
    }

    #[test]
    fn build_prompt_is_deterministic() {
        let spec = bundled::study1();
        let (_, target) = study1_split();
        let respondent = study1_respondent();
        let a = build_prompt(Approach::Omni, &respondent, &spec, &target, None).unwrap();
        let b = build_prompt(Approach::Omni, &respondent, &spec, &target, None).unwrap();
        assert_eq!(a.rendered_text, b.rendered_text);
    }

    #[test]
    fn persona_presence_is_enforced() {
        let spec = bundled::study1();
        let (_, target) = study1_split();
        let respondent = study1_respondent();
        assert!(matches!(
            build_prompt(Approach::Mirror, &respondent, &spec, &target, None),
            Err(PromptError::PersonaMissing)
        ));
        let persona = persona_for(&respondent);
        assert!(matches!(
            build_prompt(Approach::Omni, &respondent, &spec, &target, Some(&persona)),
            Err(PromptError::PersonaUnexpected(_))
        ));
    }

    #[test]
    fn omni_requires_all_prior_answers() {
        let spec = bundled::study1();
        let (_, target) = study1_split();
        let mut respondent = study1_respondent();
        respondent.answers.remove("ple1");
        let err = build_prompt(Approach::Omni, &respondent, &spec, &target, None).unwrap_err();
        assert!(matches!(
            err,
            PromptError::MissingPriorAnswer { item, .. } if item == "ple1"
        ));
    }

    #[test]
    fn parse_accepts_plain_block() {
        let scale = LikertScale { min: 1, max: 7 };
        assert_eq!(
            parse_likert_reply("[5, 3, 7, 1]", 4, scale).unwrap(),
            vec![5, 3, 7, 1]
        );
        // surrounding prose and a restated format are ignored
        assert_eq!(
            parse_likert_reply(
                "Sure — in the format [n, n]: my answers are [4, 6]",
                2,
                scale
            )
            .unwrap(),
            vec![4, 6]
        );
    }

    #[test]
    fn parse_reports_out_of_range_position() {
        let scale = LikertScale { min: 1, max: 7 };
        let err = parse_likert_reply("[5, 3, 8, 1]", 4, scale).unwrap_err();
        assert!(matches!(
            err,
            PromptError::AnswerOutOfRange { position: 3, value: 8, .. }
        ));
    }

    #[test]
    fn parse_reports_missing_block_and_wrong_count() {
        let scale = LikertScale { min: 1, max: 7 };
        assert!(matches!(
            parse_likert_reply("I think mostly agree overall.", 3, scale),
            Err(PromptError::NoAnswerBlock)
        ));
        assert!(matches!(
            parse_likert_reply("[1, 2]", 4, scale),
            Err(PromptError::WrongAnswerCount { expected: 4, got: 2 })
        ));
    }

    #[test]
    fn unfilled_placeholder_is_caught() {
        let err = render_template("hello {{name}}", &[]).unwrap_err();
        assert!(matches!(err, PromptError::UnfilledPlaceholder(name) if name == "name"));
    }

    proptest! {
        /// Formatting then parsing any valid answer vector is the identity.
        #[test]
        fn parse_inverts_format(answers in proptest::collection::vec(1i32..=7, 1..20)) {
            let scale = LikertScale { min: 1, max: 7 };
            let block = format_answer_block(&answers);
            let parsed = parse_likert_reply(&block, answers.len(), scale).unwrap();
            prop_assert_eq!(parsed, answers);
        }

        /// The regime contract holds for arbitrary respondents.
        #[test]
        fn ingredient_flags_match_regime(answer_seed in 0u64..1000) {
            let spec = bundled::study1();
            let (_, target) = study1_split();
            let mut respondent = study1_respondent();
            for (idx, answer) in respondent.answers.values_mut().enumerate() {
                *answer = ((answer_seed as usize + idx * 31) % 7) as i32 + 1;
            }
            for approach in Approach::all() {
                let persona = persona_for(&respondent);
                let persona_opt = (approach == Approach::Mirror).then_some(&persona);
                let bundle = build_prompt(approach, &respondent, &spec, &target, persona_opt).unwrap();
                prop_assert_eq!(bundle.context.flags(), approach.ingredients());
            }
        }
    }
}
