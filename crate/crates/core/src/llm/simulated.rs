//! Deterministic simulated respondent.
//!
//! Stands in for a remote model so end-to-end runs and the acceptance suite
//! need no network. Answers derive from the stored human respondent, but only
//! through the information the request's regime actually carries: nothing for
//! baseline, a demographic offset for demo, prior-latent means for omni, and
//! the persona's quantized latent means for mirror.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::prompting::{format_answer_block, Approach, PromptBundle};
use crate::survey::{Respondent, ResponseMatrix, SurveySpec};

use super::{BackendError, CompletionBackend, CompletionRequest, RequestPurpose};

/// Persona sketches quantize latent means to this step, and mirror answers
/// reuse the quantized value, so the persona text carries exactly the
/// information the mirror regime acts on.
const PERSONA_MEAN_STEP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedRespondentConfig {
    pub noise_scale: f64,
    pub seed: u64,
    /// Target latent -> weighted combination of prior-latent mean answers.
    pub answer_rule: BTreeMap<String, Vec<(String, f64)>>,
}

impl SimulatedRespondentConfig {
    /// Equal weights over every prior latent, summing to one per target.
    pub fn uniform_rule(
        spec: &SurveySpec,
        target_latents: &BTreeSet<String>,
        noise_scale: f64,
        seed: u64,
    ) -> Self {
        let priors: Vec<String> = spec
            .latents
            .iter()
            .filter(|l| !target_latents.contains(&l.name))
            .map(|l| l.name.clone())
            .collect();
        let weight = 1.0 / priors.len() as f64;
        let answer_rule = target_latents
            .iter()
            .map(|target| {
                (
                    target.clone(),
                    priors.iter().map(|p| (p.clone(), weight)).collect(),
                )
            })
            .collect();
        Self {
            noise_scale,
            seed,
            answer_rule,
        }
    }
}

/// Deterministic stand-in respondent population behind the backend trait.
pub struct SimulatedBackend {
    spec: Arc<SurveySpec>,
    target_latents: BTreeSet<String>,
    target_items: Vec<String>,
    prior_latents: Vec<String>,
    respondents: HashMap<String, Respondent>,
    config: SimulatedRespondentConfig,
}

impl SimulatedBackend {
    pub fn new(
        spec: Arc<SurveySpec>,
        target_latents: BTreeSet<String>,
        population: &ResponseMatrix,
        config: SimulatedRespondentConfig,
    ) -> Result<Self, BackendError> {
        for target in &target_latents {
            let rule = config.answer_rule.get(target).ok_or_else(|| {
                BackendError::Cache(format!("answer rule misses target latent `{target}`"))
            })?;
            if rule.iter().any(|(_, w)| !w.is_finite()) {
                return Err(BackendError::Cache(format!(
                    "answer rule for `{target}` contains non-finite weights"
                )));
            }
        }
        let target_items = spec
            .latents
            .iter()
            .filter(|l| target_latents.contains(&l.name))
            .flat_map(|l| l.items.iter().map(|i| i.id.clone()))
            .collect();
        let prior_latents = spec
            .latents
            .iter()
            .filter(|l| !target_latents.contains(&l.name))
            .map(|l| l.name.clone())
            .collect();
        let respondents = population
            .respondents()
            .iter()
            .map(|r| (r.id.clone(), r.clone()))
            .collect();
        Ok(Self {
            spec,
            target_latents,
            target_items,
            prior_latents,
            respondents,
            config,
        })
    }

    fn cell_rng(&self, approach: Approach, respondent: &str, item: &str) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.config.seed.to_le_bytes());
        hasher.update([0x1f]);
        hasher.update(approach.name().as_bytes());
        hasher.update([0x1f]);
        hasher.update(respondent.as_bytes());
        hasher.update([0x1f]);
        hasher.update(item.as_bytes());
        let digest = hasher.finalize();
        ChaCha8Rng::seed_from_u64(u64::from_le_bytes(digest[..8].try_into().unwrap()))
    }

    /// Fixed per-respondent offset derived from demographic values alone:
    /// one of {-1, -0.5, 0, 0.5, 1}. Demographics shift the answer level a
    /// little but carry none of the respondent's actual attitudes.
    fn demographic_offset(&self, respondent: &Respondent) -> f64 {
        let mut hasher = Sha256::new();
        hasher.update(self.config.seed.to_le_bytes());
        for field in &self.spec.demographics {
            if let Some(value) = respondent.demographics.get(&field.name) {
                hasher.update(value.render().as_bytes());
                hasher.update([0x1f]);
            }
        }
        let digest = hasher.finalize();
        let bucket = u64::from_le_bytes(digest[..8].try_into().unwrap()) % 5;
        (bucket as f64 - 2.0) * 0.5
    }

    fn latent_mean(&self, respondent: &Respondent, latent: &str, quantized: bool) -> f64 {
        let latent = self.spec.latent(latent).expect("rule names spec latents");
        let mean = respondent
            .latent_mean(latent)
            .expect("validated matrix covers all items");
        if quantized {
            (mean / PERSONA_MEAN_STEP).round() * PERSONA_MEAN_STEP
        } else {
            mean
        }
    }

    fn rule_value(&self, respondent: &Respondent, target_latent: &str, quantized: bool) -> f64 {
        self.config.answer_rule[target_latent]
            .iter()
            .map(|(prior, weight)| weight * self.latent_mean(respondent, prior, quantized))
            .sum()
    }

    /// Target answers for one respondent under one regime, canonical order.
    pub fn answers(&self, respondent: &Respondent, approach: Approach) -> Vec<i32> {
        let scale = self.spec.scale;
        self.target_items
            .iter()
            .map(|item| {
                let latent = self
                    .spec
                    .latent_of_item(item)
                    .expect("target items come from the spec")
                    .name
                    .clone();
                let base = match approach {
                    Approach::Baseline => scale.midpoint(),
                    Approach::Demo => scale.midpoint() + self.demographic_offset(respondent),
                    Approach::Omni => self.rule_value(respondent, &latent, false),
                    Approach::Mirror => self.rule_value(respondent, &latent, true),
                };
                let noise: f64 = if self.config.noise_scale > 0.0 {
                    let mut rng = self.cell_rng(approach, &respondent.id, item);
                    rng.sample::<f64, _>(StandardNormal) * self.config.noise_scale
                } else {
                    0.0
                };
                (base + noise)
                    .clamp(f64::from(scale.min), f64::from(scale.max))
                    .round() as i32
            })
            .collect()
    }

    /// Deterministic character sketch naming every prior latent factor; the
    /// per-factor averages are quantized, and mirror answers reuse exactly
    /// those quantized values.
    pub fn persona_text(&self, respondent: &Respondent) -> String {
        let scale = self.spec.scale;
        let described: Vec<String> = self
            .spec
            .demographics
            .iter()
            .filter_map(|field| respondent.demographics.get(&field.name))
            .map(|v| v.render())
            .collect();
        let mut lines = if described.is_empty() {
            vec!["You are a survey respondent.".to_string()]
        } else {
            vec![format!(
                "You are a survey respondent described as: {}.",
                described.join(", ")
            )]
        };
        for latent in &self.prior_latents {
            let mean = self.latent_mean(respondent, latent, true);
            let lean = if mean < scale.midpoint() - 0.5 {
                "toward disagreement"
            } else if mean > scale.midpoint() + 0.5 {
                "toward agreement"
            } else {
                "neither way strongly"
            };
            lines.push(format!(
                "Regarding {latent}, your answers average {mean:.1} out of {}, leaning {lean}.",
                scale.max
            ));
        }
        lines.join(" ")
    }

    /// Spec-level entry point: reply for one prompt bundle. The bundle and
    /// respondent must agree.
    pub fn respond(
        &self,
        bundle: &PromptBundle,
        respondent: &Respondent,
    ) -> Result<String, BackendError> {
        if bundle.respondent_id != respondent.id {
            return Err(BackendError::UnknownRespondent(bundle.respondent_id.clone()));
        }
        Ok(format_answer_block(
            &self.answers(respondent, bundle.approach),
        ))
    }

    pub fn target_latents(&self) -> &BTreeSet<String> {
        &self.target_latents
    }
}

impl CompletionBackend for SimulatedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let respondent = self
            .respondents
            .get(&request.tag.respondent_id)
            .ok_or_else(|| BackendError::UnknownRespondent(request.tag.respondent_id.clone()))?;
        match request.tag.purpose {
            RequestPurpose::Persona => Ok(self.persona_text(respondent)),
            RequestPurpose::Answer => Ok(format_answer_block(
                &self.answers(respondent, request.tag.approach),
            )),
        }
    }

    fn identity(&self) -> String {
        format!("simulated(seed={})", self.config.seed)
    }

    /// Simulated replies depend on the request tag (identical baseline
    /// prompts still answer per respondent), so the tag joins the cache key.
    fn cache_discriminator(&self, request: &CompletionRequest) -> String {
        format!(
            "{}|{}|{:?}",
            request.tag.respondent_id, request.tag.approach, request.tag.purpose
        )
    }
}
