//! Seeded bootstrap inference for path coefficients.
//!
//! Replicate RNG streams are derived from (seed, replicate index) only, so
//! results do not depend on worker-thread scheduling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::survey::{ResponseMatrix, SurveySpec};

use super::estimate::{estimate_scores_data, path_coefficients};
use super::{Dataset, LatentScores, PlsError, PlsOptions, PlsResult, SignificanceMark};

/// RNG stream for one bootstrap replicate, independent of every other stream.
fn replicate_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64 + 1);
    rng
}

/// Flips each replicate block whose outer weights point opposite to the
/// full-sample solution, so coefficient signs are comparable across replicates.
///
/// Outer weights are stored flat in canonical item order for both solutions,
/// so blocks are delimited by the spec's per-latent item counts.
fn align_block_signs(scores: &mut LatentScores, reference: &LatentScores, spec: &SurveySpec) {
    let mut position = 0usize;
    for (latent_idx, latent) in spec.latents.iter().enumerate() {
        let block_len = latent.items.len();
        let dot: f64 = (position..position + block_len)
            .map(|i| scores.outer_weights[i].1 * reference.outer_weights[i].1)
            .sum();
        if dot < 0.0 {
            for v in &mut scores.scores[latent_idx] {
                *v = -*v;
            }
            for i in position..position + block_len {
                scores.outer_weights[i].1 = -scores.outer_weights[i].1;
            }
        }
        position += block_len;
    }
}

fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (n - 1.0)).sqrt()
}

/// Full-sample estimation plus `b` resampled re-estimations.
///
/// `threads` pins the rayon pool size; `None` uses the global pool. Results
/// are identical for any value because replicate streams are index-derived
/// and collected in index order.
pub fn fit_data_with_threads(
    data: &Dataset,
    spec: &SurveySpec,
    options: &PlsOptions,
    b: usize,
    seed: u64,
    threads: Option<usize>,
) -> Result<PlsResult, PlsError> {
    if b < 2 {
        return Err(PlsError::TooFewReplicates(b));
    }
    let full_scores = estimate_scores_data(data, spec, options)?;
    let estimates = path_coefficients(&full_scores, spec)?;
    let n = data.rows();

    let run = || -> Vec<Option<Vec<f64>>> {
        (0..b)
            .into_par_iter()
            .map(|replicate| {
                let mut rng = replicate_rng(seed, replicate);
                let indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let resampled = data.resample(&indices);
                let mut scores = estimate_scores_data(&resampled, spec, options).ok()?;
                align_block_signs(&mut scores, &full_scores, spec);
                let replicate_estimates = path_coefficients(&scores, spec).ok()?;
                Some(
                    replicate_estimates
                        .paths
                        .iter()
                        .map(|p| p.coefficient)
                        .collect(),
                )
            })
            .collect()
    };
    let replicate_coefficients: Vec<Option<Vec<f64>>> = match threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .expect("thread pool")
            .install(run),
        None => run(),
    };

    let failed = replicate_coefficients.iter().filter(|r| r.is_none()).count();
    if failed * 20 > b {
        return Err(PlsError::TooManyFailedReplicates { failed, total: b });
    }

    let n_paths = estimates.paths.len();
    let successes: Vec<&Vec<f64>> = replicate_coefficients.iter().flatten().collect();
    let mut boot_sd = Vec::with_capacity(n_paths);
    for path_idx in 0..n_paths {
        let values: Vec<f64> = successes.iter().map(|c| c[path_idx]).collect();
        boot_sd.push(sample_sd(&values));
    }
    let marks = estimates
        .paths
        .iter()
        .zip(&boot_sd)
        .map(|(p, &sd)| SignificanceMark::from_ratio(p.coefficient, sd))
        .collect();

    Ok(PlsResult {
        estimates,
        boot_sd,
        marks,
        bootstrap_samples: b,
        seed,
        failed_replicates: failed,
        converged: full_scores.converged,
        iterations: full_scores.iterations,
        outer_weights: full_scores.outer_weights,
    })
}

pub fn bootstrap_data(
    data: &Dataset,
    spec: &SurveySpec,
    options: &PlsOptions,
    b: usize,
    seed: u64,
) -> Result<PlsResult, PlsError> {
    fit_data_with_threads(data, spec, options, b, seed, None)
}

/// Bootstrap over validated Likert responses.
pub fn bootstrap(
    data: &ResponseMatrix,
    spec: &SurveySpec,
    options: &PlsOptions,
    b: usize,
    seed: u64,
) -> Result<PlsResult, PlsError> {
    bootstrap_data(&Dataset::from_matrix(data), spec, options, b, seed)
}

/// Full estimation: scores, path coefficients, and bootstrap inference.
pub fn fit(
    data: &ResponseMatrix,
    spec: &SurveySpec,
    options: &PlsOptions,
    b: usize,
    seed: u64,
) -> Result<PlsResult, PlsError> {
    bootstrap(data, spec, options, b, seed)
}

pub fn fit_data(
    data: &Dataset,
    spec: &SurveySpec,
    options: &PlsOptions,
    b: usize,
    seed: u64,
) -> Result<PlsResult, PlsError> {
    bootstrap_data(data, spec, options, b, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::sync::Arc;

    fn chain_spec() -> Arc<SurveySpec> {
        Arc::new(
            SurveySpec::from_json(
                r#"{
                    "name": "chain",
                    "scale": {"min": 1, "max": 7},
                    "latents": [
                        {"name": "x", "role": "factor", "items": [
                            {"id": "x1", "text": "x1"}, {"id": "x2", "text": "x2"}, {"id": "x3", "text": "x3"}]},
                        {"name": "y", "role": "outcome", "items": [
                            {"id": "y1", "text": "y1"}, {"id": "y2", "text": "y2"}, {"id": "y3", "text": "y3"}]}
                    ],
                    "paths": [{"from": "x", "to": "y"}],
                    "demographics": []
                }"#,
            )
            .unwrap(),
        )
    }

    fn chain_data(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut columns = vec![Vec::with_capacity(n); 6];
        for _ in 0..n {
            let lx: f64 = rng.sample(StandardNormal);
            let ly = 0.6 * lx + 0.7 * rng.sample::<f64, _>(StandardNormal);
            for (idx, latent) in [(0, lx), (1, lx), (2, lx), (3, ly), (4, ly), (5, ly)] {
                columns[idx].push(0.9 * latent + 0.5 * rng.sample::<f64, _>(StandardNormal));
            }
        }
        Dataset::from_columns(
            ["x1", "x2", "x3", "y1", "y2", "y3"]
                .into_iter()
                .map(String::from)
                .collect(),
            columns,
        )
        .unwrap()
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let spec = chain_spec();
        let data = chain_data(150, 21);
        let a = fit_data(&data, &spec, &PlsOptions::default(), 50, 99).unwrap();
        let b = fit_data(&data, &spec, &PlsOptions::default(), 50, 99).unwrap();
        assert_eq!(a.boot_sd[0].to_bits(), b.boot_sd[0].to_bits());
        assert_eq!(a.marks, b.marks);
        assert_eq!(
            a.estimates.paths[0].coefficient.to_bits(),
            b.estimates.paths[0].coefficient.to_bits()
        );
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let spec = chain_spec();
        let data = chain_data(150, 22);
        let opts = PlsOptions::default();
        let one = fit_data_with_threads(&data, &spec, &opts, 60, 7, Some(1)).unwrap();
        let eight = fit_data_with_threads(&data, &spec, &opts, 60, 7, Some(8)).unwrap();
        for (a, b) in one.boot_sd.iter().zip(&eight.boot_sd) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn duplicated_block_gives_zero_sd() {
        // y block indicators are exact copies of the x block's, so every
        // resample regresses a column on itself: coefficient 1, SD 0.
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let n = 80;
        let x: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let mut columns = x.clone();
        columns.extend(x.clone());
        let data = Dataset::from_columns(
            ["x1", "x2", "x3", "y1", "y2", "y3"]
                .into_iter()
                .map(String::from)
                .collect(),
            columns,
        )
        .unwrap();
        let spec = chain_spec();
        let result = fit_data(&data, &spec, &PlsOptions::default(), 40, 4).unwrap();
        assert!((result.estimates.paths[0].coefficient - 1.0).abs() < 1e-9);
        assert!(result.boot_sd[0].abs() < 1e-9);
    }

    #[test]
    fn rejects_too_few_replicates() {
        let spec = chain_spec();
        let data = chain_data(60, 23);
        assert!(matches!(
            fit_data(&data, &spec, &PlsOptions::default(), 1, 5),
            Err(PlsError::TooFewReplicates(1))
        ));
    }

    #[test]
    fn bootstrap_sd_tracks_monte_carlo_sd() {
        // independent oracle: the spread of the estimator across freshly
        // generated datasets should match the bootstrap spread within 2x
        let spec = chain_spec();
        let data = chain_data(400, 40);
        let opts = PlsOptions::default();
        let result = fit_data(&data, &spec, &opts, 200, 11).unwrap();

        let mc: Vec<f64> = (0..200)
            .map(|i| {
                let fresh = chain_data(400, 5000 + i);
                let scores = estimate_scores_data(&fresh, &spec, &opts).unwrap();
                path_coefficients(&scores, &spec).unwrap().paths[0].coefficient
            })
            .collect();
        let mc_sd = sample_sd(&mc);
        let ratio = result.boot_sd[0] / mc_sd;
        assert!(
            (0.5..=2.0).contains(&ratio),
            "bootstrap sd {} vs monte carlo sd {mc_sd}",
            result.boot_sd[0]
        );
    }
}
