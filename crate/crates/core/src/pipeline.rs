//! Full study orchestration: generate responses per approach through a
//! backend, fit the path model on human and generated data with a shared
//! bootstrap schedule, compare distributions, and assemble the report bundle.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundled;
use crate::llm::{
    BackendError, CachedBackend, CompletionBackend, CompletionRequest, HttpBackend,
    RequestDefaults, RequestPurpose, RequestTag, ResponseCache, SimulatedBackend,
    SimulatedRespondentConfig,
};
use crate::metrics::{compare_matrices, DistributionReport, MetricsError};
use crate::plssem::{fit, PlsError, PlsOptions, PlsResult};
use crate::prompting::{
    build_prompt, format_reminder, generate_persona, parse_likert_reply, Approach, PersonaText,
    PromptError, MAX_REPLY_RETRIES, TEMPLATE_VERSION,
};
use crate::survey::{
    load_responses, split_items, Respondent, ResponseMatrix, SurveyError, SurveySpec,
};
use crate::synth::SynthError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Survey(#[from] SurveyError),
    #[error(transparent)]
    Pls(#[from] PlsError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("run aborted during {stage}: {source}")]
    Aborted {
        stage: String,
        /// Serialized manifest of what completed before the abort.
        partial_manifest: String,
        #[source]
        source: Box<PipelineError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Simulated,
}

fn default_parallelism() -> usize {
    8
}

/// Backend selection plus its settings; simulated fields are ignored by the
/// HTTP backend and vice versa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub request: RequestDefaults,
    /// HTTP: chat-completion base URL; credential comes from `LLM_API_KEY`.
    #[serde(default)]
    pub base_url: Option<String>,
    /// Simulated: answer noise SD.
    #[serde(default)]
    pub noise_scale: f64,
    /// Simulated: RNG seed; defaults to the study's master seed.
    #[serde(default)]
    pub backend_seed: Option<u64>,
    /// Simulated: target latent -> weighted prior-latent combination.
    /// Defaults to equal weights over all prior latents.
    #[serde(default)]
    pub answer_rule: Option<BTreeMap<String, Vec<(String, f64)>>>,
    /// Maximum concurrent backend requests.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Reply cache directory; defaults to `<output_dir>/cache`.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Simulated,
            request: RequestDefaults::default(),
            base_url: None,
            noise_scale: 0.0,
            backend_seed: None,
            answer_rule: None,
            parallelism: default_parallelism(),
            cache_dir: None,
        }
    }
}

/// One full study run, as read from a config file or assembled from CLI flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    /// Study spec path, or a bundled name (`study1`, `study2_case1`,
    /// `study2_case2`).
    pub spec: String,
    /// Human responses CSV path.
    pub responses: String,
    /// Target latents; empty means the spec's outcome latents.
    #[serde(default)]
    pub targets: Vec<String>,
    pub approaches: Vec<Approach>,
    pub bootstrap_samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub backend: BackendConfig,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub kde_bandwidth: Option<f64>,
    #[serde(default)]
    pub pls: PlsOptions,
}

impl StudyConfig {
    pub fn from_json(source: &str) -> Result<Self, PipelineError> {
        Ok(serde_json::from_str(source)?)
    }
}

/// Resolves a spec argument: bundled name first, then filesystem path.
pub fn resolve_spec(spec: &str) -> Result<Arc<SurveySpec>, PipelineError> {
    if let Some(bundled) = bundled::by_name(spec) {
        return Ok(bundled);
    }
    let source = std::fs::read_to_string(spec)?;
    Ok(Arc::new(SurveySpec::from_json(&source)?))
}

pub fn load_matrix(path: &str, spec: &Arc<SurveySpec>) -> Result<ResponseMatrix, PipelineError> {
    let source = std::fs::read_to_string(path)?;
    Ok(load_responses(&source, spec)?)
}

/// Everything about a run that is not a result table: seeds, versions,
/// backend identity, cache traffic, and per-approach failures. Contains no
/// timestamps, so repeated warm-cache runs serialize identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub study: String,
    pub respondents: usize,
    pub target_latents: Vec<String>,
    pub target_items: Vec<String>,
    pub bootstrap_samples: usize,
    pub seed: u64,
    pub template_version: String,
    pub backend_identity: String,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub personas_generated: usize,
    /// Respondents excluded per approach, with the final parse error.
    pub failed_respondents: BTreeMap<String, Vec<(String, String)>>,
    /// Approaches whose failure share exceeded 10%.
    pub degraded_approaches: Vec<String>,
    pub completed_approaches: Vec<String>,
}

/// Results for one approach within a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApproachReport {
    pub approach: Approach,
    pub pls: PlsResult,
    pub distribution: DistributionReport,
    pub failed_respondents: Vec<(String, String)>,
    pub degraded: bool,
    /// Generated matrix in canonical CSV layout (human prior answers plus
    /// generated target answers).
    pub generated_csv: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportBundle {
    pub study: String,
    pub target_items: Vec<String>,
    /// Computed once per run; identical regardless of approaches selected.
    pub human: PlsResult,
    pub approaches: Vec<ApproachReport>,
    pub manifest: RunManifest,
}

fn pool(parallelism: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .expect("thread pool")
}

/// Obtains and parses one respondent's answers, retrying parse failures with
/// an appended format reminder. Backend errors propagate; parse errors after
/// the retry budget mark the respondent failed.
fn obtain_answers(
    backend: &dyn CompletionBackend,
    defaults: &RequestDefaults,
    rendered_prompt: &str,
    respondent_id: &str,
    approach: Approach,
    n_questions: usize,
    scale: crate::survey::LikertScale,
) -> Result<Vec<i32>, PromptError> {
    let mut prompt = rendered_prompt.to_string();
    let mut last_parse_error = None;
    for _ in 0..=MAX_REPLY_RETRIES {
        let request = CompletionRequest {
            model: defaults.model.clone(),
            prompt: prompt.clone(),
            temperature: defaults.temperature,
            max_tokens: defaults.max_tokens,
            tag: RequestTag {
                respondent_id: respondent_id.to_string(),
                approach,
                template_version: TEMPLATE_VERSION.to_string(),
                purpose: RequestPurpose::Answer,
            },
        };
        let reply = backend.complete(&request)?;
        match parse_likert_reply(&reply, n_questions, scale) {
            Ok(answers) => return Ok(answers),
            Err(error) => {
                prompt.push_str(&format_reminder(n_questions, scale));
                last_parse_error = Some(error);
            }
        }
    }
    Err(last_parse_error.expect("loop ran at least once"))
}

/// Generates personas for every respondent with bounded parallelism.
pub fn generate_personas(
    spec: &Arc<SurveySpec>,
    matrix: &ResponseMatrix,
    prior_items: &[String],
    backend: &dyn CompletionBackend,
    defaults: &RequestDefaults,
    parallelism: usize,
) -> Result<Vec<PersonaText>, PipelineError> {
    let results: Vec<Result<PersonaText, PromptError>> = pool(parallelism).install(|| {
        matrix
            .respondents()
            .par_iter()
            .map(|respondent| generate_persona(respondent, prior_items, spec, backend, defaults))
            .collect()
    });
    results
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(PipelineError::from)
}

/// Per-approach generation outcome before fitting.
struct GeneratedResponses {
    matrix: Option<ResponseMatrix>,
    failed: Vec<(String, String)>,
}

/// Builds prompts, collects replies, and assembles the generated matrix:
/// human prior answers plus generated target answers, excluding respondents
/// whose replies never parsed.
fn generate_for_approach(
    spec: &Arc<SurveySpec>,
    human: &ResponseMatrix,
    prior_items: &[String],
    target_items: &[String],
    approach: Approach,
    personas: Option<&BTreeMap<String, PersonaText>>,
    backend: &dyn CompletionBackend,
    defaults: &RequestDefaults,
    parallelism: usize,
) -> Result<GeneratedResponses, PipelineError> {
    let scale = spec.scale;
    let outcomes: Vec<Result<Result<(String, Vec<i32>), (String, String)>, PipelineError>> =
        pool(parallelism).install(|| {
            human
                .respondents()
                .par_iter()
                .map(|respondent| {
                    let persona = personas.and_then(|map| map.get(&respondent.id));
                    let bundle =
                        build_prompt(approach, respondent, spec, target_items, persona)
                            .map_err(PipelineError::from)?;
                    match obtain_answers(
                        backend,
                        defaults,
                        &bundle.rendered_text,
                        &respondent.id,
                        approach,
                        target_items.len(),
                        scale,
                    ) {
                        Ok(answers) => Ok(Ok((respondent.id.clone(), answers))),
                        Err(PromptError::Backend(error)) => Err(PipelineError::from(error)),
                        Err(parse_error) => {
                            Ok(Err((respondent.id.clone(), parse_error.to_string())))
                        }
                    }
                })
                .collect()
        });

    let mut failed = Vec::new();
    let mut answers_by_id: BTreeMap<String, Vec<i32>> = BTreeMap::new();
    for outcome in outcomes {
        match outcome? {
            Ok((id, answers)) => {
                answers_by_id.insert(id, answers);
            }
            Err(failure) => failed.push(failure),
        }
    }

    let respondents: Vec<Respondent> = human
        .respondents()
        .iter()
        .filter_map(|respondent| {
            let answers = answers_by_id.get(&respondent.id)?;
            let mut merged: BTreeMap<String, i32> = prior_items
                .iter()
                .map(|item| {
                    (
                        item.clone(),
                        respondent.answer(item).expect("validated human matrix"),
                    )
                })
                .collect();
            for (item, &answer) in target_items.iter().zip(answers) {
                merged.insert(item.clone(), answer);
            }
            Some(Respondent {
                id: respondent.id.clone(),
                demographics: respondent.demographics.clone(),
                answers: merged,
            })
        })
        .collect();

    let matrix = if respondents.is_empty() {
        None
    } else {
        Some(ResponseMatrix::new(Arc::clone(spec), respondents)?)
    };
    Ok(GeneratedResponses { matrix, failed })
}

/// Builds the configured backend wrapped in the reply cache.
pub fn build_backend(
    config: &StudyConfig,
    spec: &Arc<SurveySpec>,
    human: &ResponseMatrix,
    target_set: &BTreeSet<String>,
) -> Result<CachedBackend<Box<dyn CompletionBackend>>, PipelineError> {
    let inner: Box<dyn CompletionBackend> = match config.backend.kind {
        BackendKind::Simulated => {
            let rule = match &config.backend.answer_rule {
                Some(rule) => SimulatedRespondentConfig {
                    noise_scale: config.backend.noise_scale,
                    seed: config.backend.backend_seed.unwrap_or(config.seed),
                    answer_rule: rule.clone(),
                },
                None => SimulatedRespondentConfig::uniform_rule(
                    spec,
                    target_set,
                    config.backend.noise_scale,
                    config.backend.backend_seed.unwrap_or(config.seed),
                ),
            };
            Box::new(SimulatedBackend::new(
                Arc::clone(spec),
                target_set.clone(),
                human,
                rule,
            )?)
        }
        BackendKind::Http => {
            let base_url = config.backend.base_url.as_ref().ok_or_else(|| {
                PipelineError::InvalidConfig("http backend requires base_url".to_string())
            })?;
            Box::new(HttpBackend::from_env(base_url)?)
        }
    };
    let cache_dir = config
        .backend
        .cache_dir
        .clone()
        .unwrap_or_else(|| config.output_dir.join("cache"));
    Ok(CachedBackend::new(inner, ResponseCache::new(cache_dir)?))
}

/// Writes the partial-progress manifest carried by an aborted run.
pub fn emit_partial_manifest(
    output_dir: &std::path::Path,
    partial_manifest: &str,
) -> Result<PathBuf, PipelineError> {
    std::fs::create_dir_all(output_dir)?;
    let path = output_dir.join("manifest.partial.json");
    std::fs::write(&path, partial_manifest)?;
    Ok(path)
}

/// Resolved inputs shared by generation-only and full runs.
pub struct PreparedRun {
    pub spec: Arc<SurveySpec>,
    pub human: ResponseMatrix,
    pub target_latents: Vec<String>,
    pub prior_items: Vec<String>,
    pub target_items: Vec<String>,
    pub backend: CachedBackend<Box<dyn CompletionBackend>>,
}

/// Loads the spec and human data, resolves targets, and builds the backend.
pub fn prepare_run(config: &StudyConfig) -> Result<PreparedRun, PipelineError> {
    let spec = resolve_spec(&config.spec)?;
    let human = load_matrix(&config.responses, &spec)?;
    let target_latents: Vec<String> = if config.targets.is_empty() {
        spec.outcome_latents()
    } else {
        config.targets.clone()
    };
    let target_set: BTreeSet<String> = target_latents.iter().cloned().collect();
    let (prior_items, target_items) = split_items(&spec, &target_set)?;
    let backend = build_backend(config, &spec, &human, &target_set)?;
    Ok(PreparedRun {
        spec,
        human,
        target_latents,
        prior_items,
        target_items,
        backend,
    })
}

/// One approach's generated matrix plus its failed respondents.
pub struct GeneratedApproach {
    pub approach: Approach,
    pub matrix: Option<ResponseMatrix>,
    pub failed: Vec<(String, String)>,
}

/// Generation without fitting: produces the generated matrix per approach,
/// generating personas first where the mirror regime asks for them.
pub fn generate_responses(
    config: &StudyConfig,
) -> Result<Vec<GeneratedApproach>, PipelineError> {
    let prepared = prepare_run(config)?;
    let mut approaches = config.approaches.clone();
    approaches.sort_unstable();
    approaches.dedup();
    let defaults = &config.backend.request;
    let mut out = Vec::new();
    for approach in approaches {
        let personas = if approach == Approach::Mirror {
            let list = generate_personas(
                &prepared.spec,
                &prepared.human,
                &prepared.prior_items,
                &prepared.backend,
                defaults,
                config.backend.parallelism,
            )?;
            Some(
                list.into_iter()
                    .map(|p| (p.respondent_id.clone(), p))
                    .collect::<BTreeMap<_, _>>(),
            )
        } else {
            None
        };
        let generated = generate_for_approach(
            &prepared.spec,
            &prepared.human,
            &prepared.prior_items,
            &prepared.target_items,
            approach,
            personas.as_ref(),
            &prepared.backend,
            defaults,
            config.backend.parallelism,
        )?;
        out.push(GeneratedApproach {
            approach,
            matrix: generated.matrix,
            failed: generated.failed,
        });
    }
    Ok(out)
}

fn validate_config(config: &StudyConfig) -> Result<(), PipelineError> {
    if config.bootstrap_samples < 2 {
        return Err(PipelineError::InvalidConfig(
            "bootstrap_samples must be at least 2".to_string(),
        ));
    }
    if config.approaches.is_empty() {
        return Err(PipelineError::InvalidConfig(
            "at least one approach is required".to_string(),
        ));
    }
    Ok(())
}

/// Runs a full study: loads inputs, fits the human matrix once, then per
/// approach generates responses, fits with the same bootstrap schedule, and
/// compares distributions. Any component error aborts with a manifest of the
/// partial progress inside the error.
pub fn run_study(config: &StudyConfig) -> Result<ReportBundle, PipelineError> {
    validate_config(config)?;
    let PreparedRun {
        spec,
        human,
        target_latents,
        prior_items,
        target_items,
        backend,
    } = prepare_run(config)?;

    let mut approaches: Vec<Approach> = config.approaches.clone();
    approaches.sort_unstable();
    approaches.dedup();

    let defaults = &config.backend.request;
    let parallelism = config.backend.parallelism;

    let mut manifest = RunManifest {
        study: spec.name.clone(),
        respondents: human.len(),
        target_latents: target_latents.clone(),
        target_items: target_items.clone(),
        bootstrap_samples: config.bootstrap_samples,
        seed: config.seed,
        template_version: TEMPLATE_VERSION.to_string(),
        backend_identity: backend.identity(),
        cache_hits: 0,
        cache_misses: 0,
        personas_generated: 0,
        failed_respondents: BTreeMap::new(),
        degraded_approaches: Vec::new(),
        completed_approaches: Vec::new(),
    };
    let abort = |stage: &str, manifest: &RunManifest, source: PipelineError| {
        PipelineError::Aborted {
            stage: stage.to_string(),
            partial_manifest: serde_json::to_string_pretty(manifest).unwrap_or_default(),
            source: Box::new(source),
        }
    };

    // the human fit is shared by every approach and computed exactly once
    let human_fit = fit(
        &human,
        &spec,
        &config.pls,
        config.bootstrap_samples,
        config.seed,
    )
    .map_err(|e| abort("human fit", &manifest, e.into()))?;

    let mut approach_reports = Vec::new();
    for approach in approaches {
        let personas = if approach == Approach::Mirror {
            let list =
                generate_personas(&spec, &human, &prior_items, &backend, defaults, parallelism)
                    .map_err(|e| abort("persona generation", &manifest, e))?;
            manifest.personas_generated = list.len();
            Some(
                list.into_iter()
                    .map(|p| (p.respondent_id.clone(), p))
                    .collect::<BTreeMap<_, _>>(),
            )
        } else {
            None
        };

        let generated = generate_for_approach(
            &spec,
            &human,
            &prior_items,
            &target_items,
            approach,
            personas.as_ref(),
            &backend,
            defaults,
            parallelism,
        )
        .map_err(|e| abort(&format!("{approach} generation"), &manifest, e))?;

        manifest
            .failed_respondents
            .insert(approach.name().to_string(), generated.failed.clone());
        let degraded = generated.failed.len() * 10 > human.len();
        if degraded {
            manifest.degraded_approaches.push(approach.name().to_string());
        }

        let matrix = generated.matrix.ok_or_else(|| {
            abort(
                &format!("{approach} generation"),
                &manifest,
                PipelineError::InvalidConfig(format!(
                    "every respondent failed under approach {approach}"
                )),
            )
        })?;

        let pls = fit(
            &matrix,
            &spec,
            &config.pls,
            config.bootstrap_samples,
            config.seed,
        )
        .map_err(|e| abort(&format!("{approach} fit"), &manifest, e.into()))?;
        let distribution =
            compare_matrices(&human, &matrix, &target_items, config.kde_bandwidth)
                .map_err(|e| abort(&format!("{approach} metrics"), &manifest, e.into()))?;

        manifest.completed_approaches.push(approach.name().to_string());
        approach_reports.push(ApproachReport {
            approach,
            pls,
            distribution,
            failed_respondents: generated.failed,
            degraded,
            generated_csv: matrix.to_csv(),
        });
    }

    manifest.cache_hits = backend.cache().hits();
    manifest.cache_misses = backend.cache().misses();

    Ok(ReportBundle {
        study: spec.name.clone(),
        target_items,
        human: human_fit,
        approaches: approach_reports,
        manifest,
    })
}
