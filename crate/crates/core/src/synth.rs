//! Synthetic study generator: planted structural models with known path
//! coefficients, rendered both as continuous indicator columns and as a
//! Likert-discretized response matrix.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plssem::Dataset;
use crate::survey::{
    DemographicKind, DemographicValue, Respondent, ResponseMatrix, SurveyError, SurveySpec,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("no planted coefficient for path {0} -> {1}")]
    MissingBeta(String, String),
    #[error("planted coefficient for unknown path {0} -> {1}")]
    UnknownPath(String, String),
    #[error("endogenous latent `{0}` would have zero variance (all-zero betas and zero noise)")]
    ZeroEndogenousVariance(String),
    #[error("{0} must be at least 2")]
    TooFew(&'static str),
    #[error(transparent)]
    Survey(#[from] SurveyError),
}

/// Planted data-generating model aligned with a spec's path graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticModel {
    /// Planted coefficient per structural path, as `(from, to, beta)`.
    pub betas: Vec<(String, String, f64)>,
    /// Indicator loading applied to every item.
    pub loading: f64,
    /// Noise SD added to each endogenous latent.
    pub structural_noise_sd: f64,
    /// Noise SD added to each indicator.
    pub indicator_noise_sd: f64,
    pub respondents: usize,
    pub seed: u64,
}

/// Generated study data: true latent scores, continuous indicators, and the
/// discretized Likert matrix.
#[derive(Debug, Clone)]
pub struct SyntheticStudy {
    pub latent_scores: Vec<(String, Vec<f64>)>,
    pub continuous: Dataset,
    pub matrix: ResponseMatrix,
}

/// How many standard deviations of a z-scored indicator map onto the half
/// width of the Likert scale during discretization.
const DISCRETIZATION_SPAN: f64 = 2.5;

fn topological_order(spec: &SurveySpec) -> Vec<usize> {
    let n = spec.latents.len();
    let index_of = |name: &str| {
        spec.latents
            .iter()
            .position(|l| l.name == name)
            .expect("validated spec")
    };
    let mut incoming = vec![0usize; n];
    for path in &spec.paths {
        incoming[index_of(&path.to)] += 1;
    }
    let mut order = Vec::with_capacity(n);
    let mut ready: Vec<usize> = (0..n).filter(|&i| incoming[i] == 0).collect();
    while let Some(i) = ready.pop() {
        order.push(i);
        for path in &spec.paths {
            if index_of(&path.from) == i {
                let j = index_of(&path.to);
                incoming[j] -= 1;
                if incoming[j] == 0 {
                    ready.push(j);
                }
            }
        }
    }
    order
}

/// Samples exogenous latents standard-normal, propagates the planted betas
/// plus structural noise through the path graph, emits indicators as
/// `loading * latent + noise`, and discretizes them onto the Likert scale by
/// z-scoring, mapping ±2.5 SD onto the scale's half width, rounding, and
/// clamping. Deterministic under the seed.
pub fn generate_synthetic_study(
    spec: &Arc<SurveySpec>,
    model: &SyntheticModel,
) -> Result<SyntheticStudy, SynthError> {
    if model.respondents < 2 {
        return Err(SynthError::TooFew("respondents"));
    }
    let beta_map: BTreeMap<(&str, &str), f64> = model
        .betas
        .iter()
        .map(|(from, to, b)| ((from.as_str(), to.as_str()), *b))
        .collect();
    for (from, to, _) in &model.betas {
        if !spec.paths.iter().any(|p| &p.from == from && &p.to == to) {
            return Err(SynthError::UnknownPath(from.clone(), to.clone()));
        }
    }
    for path in &spec.paths {
        if !beta_map.contains_key(&(path.from.as_str(), path.to.as_str())) {
            return Err(SynthError::MissingBeta(path.from.clone(), path.to.clone()));
        }
    }
    for latent in spec.endogenous_latents() {
        let all_zero = spec
            .predecessors(&latent.name)
            .iter()
            .all(|pred| beta_map[&(*pred, latent.name.as_str())] == 0.0);
        if all_zero && model.structural_noise_sd == 0.0 {
            return Err(SynthError::ZeroEndogenousVariance(latent.name.clone()));
        }
    }

    let n = model.respondents;
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);

    // latent scores in topological order
    let mut latent_columns: Vec<Option<Vec<f64>>> = vec![None; spec.latents.len()];
    for idx in topological_order(spec) {
        let latent = &spec.latents[idx];
        let predecessors = spec.predecessors(&latent.name);
        let column: Vec<f64> = if predecessors.is_empty() {
            (0..n).map(|_| rng.sample(StandardNormal)).collect()
        } else {
            let pred_columns: Vec<Vec<f64>> = predecessors
                .iter()
                .map(|pred| {
                    let pred_idx = spec
                        .latents
                        .iter()
                        .position(|l| l.name == *pred)
                        .expect("validated spec");
                    latent_columns[pred_idx]
                        .clone()
                        .expect("topological order visits predecessors first")
                })
                .collect();
            (0..n)
                .map(|row| {
                    let structural: f64 = predecessors
                        .iter()
                        .zip(&pred_columns)
                        .map(|(pred, col)| beta_map[&(*pred, latent.name.as_str())] * col[row])
                        .sum();
                    structural + model.structural_noise_sd * rng.sample::<f64, _>(StandardNormal)
                })
                .collect()
        };
        latent_columns[idx] = Some(column);
    }
    let latent_scores: Vec<(String, Vec<f64>)> = spec
        .latents
        .iter()
        .zip(&latent_columns)
        .map(|(l, col)| (l.name.clone(), col.clone().expect("all latents generated")))
        .collect();

    // indicators
    let mut item_ids = Vec::new();
    let mut continuous_columns = Vec::new();
    for (latent_idx, latent) in spec.latents.iter().enumerate() {
        let scores = latent_columns[latent_idx].as_ref().expect("generated");
        for item in &latent.items {
            let column: Vec<f64> = scores
                .iter()
                .map(|&s| {
                    model.loading * s
                        + model.indicator_noise_sd * rng.sample::<f64, _>(StandardNormal)
                })
                .collect();
            item_ids.push(item.id.clone());
            continuous_columns.push(column);
        }
    }

    // discretization
    let scale = spec.scale;
    let midpoint = scale.midpoint();
    let half_width = f64::from(scale.max - scale.min) / 2.0;
    let discrete_columns: Vec<Vec<i32>> = continuous_columns
        .iter()
        .map(|col| {
            let mean = col.iter().sum::<f64>() / n as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0))
                .sqrt()
                .max(f64::MIN_POSITIVE);
            col.iter()
                .map(|&v| {
                    let z = (v - mean) / sd;
                    let scaled = midpoint + z * half_width / DISCRETIZATION_SPAN;
                    (scaled.round() as i32).clamp(scale.min, scale.max)
                })
                .collect()
        })
        .collect();

    // demographics: plausible filler so prompts and the demo regime have
    // respondent-specific values to work with
    let id_width = (n as f64).log10().ceil() as usize + 1;
    let respondents: Vec<Respondent> = (0..n)
        .map(|row| {
            let demographics = spec
                .demographics
                .iter()
                .map(|field| {
                    let value = match field.kind {
                        DemographicKind::Numeric => {
                            DemographicValue::Numeric(f64::from(rng.random_range(18..=80)))
                        }
                        DemographicKind::Categorical => DemographicValue::Categorical(format!(
                            "group_{}",
                            rng.random_range(1..=4)
                        )),
                    };
                    (field.name.clone(), value)
                })
                .collect();
            let answers = item_ids
                .iter()
                .zip(&discrete_columns)
                .map(|(item, col)| (item.clone(), col[row]))
                .collect();
            Respondent {
                id: format!("s{row:0id_width$}"),
                demographics,
                answers,
            }
        })
        .collect();

    let continuous = Dataset::from_columns(item_ids, continuous_columns)
        .expect("columns share the respondent count");
    let matrix = ResponseMatrix::new(Arc::clone(spec), respondents)?;
    Ok(SyntheticStudy {
        latent_scores,
        continuous,
        matrix,
    })
}
