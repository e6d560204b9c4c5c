//! Acceptance suite: one test per release criterion, each printing a
//! PASS/WAIVED line on success. Tolerances are pinned here, not configurable.
//!
//! Criterion 6 (reproduction of published human-data results) only runs when
//! the original study datasets are present; see `human_data_paths`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pretest_core::bundled;
use pretest_core::llm::{SimulatedBackend, SimulatedRespondentConfig};
use pretest_core::metrics::{
    consistency, jensen_shannon, likert_histogram, wasserstein, LikertDistribution,
};
use pretest_core::pipeline::{run_study, BackendConfig, BackendKind, StudyConfig};
use pretest_core::plssem::{
    estimate_scores_data, fit_data, fit_data_with_threads, path_coefficients, Dataset,
    PlsOptions,
};
use pretest_core::prompting::{build_prompt, generate_persona, Approach};
use pretest_core::report::{emit_report, ReportFormat};
use pretest_core::survey::{
    DemographicValue, LikertScale, Respondent, ResponseMatrix, SurveySpec,
};
use pretest_core::synth::{generate_synthetic_study, SyntheticModel};

const SCALE_1_7: LikertScale = LikertScale { min: 1, max: 7 };

fn recovery_spec() -> Arc<SurveySpec> {
    Arc::new(
        SurveySpec::from_json(
            r#"{
                "name": "planted recovery",
                "scale": {"min": 1, "max": 7},
                "latents": [
                    {"name": "x1", "role": "factor", "items": [
                        {"id": "x1a", "text": "x1 a"}, {"id": "x1b", "text": "x1 b"}, {"id": "x1c", "text": "x1 c"}]},
                    {"name": "x2", "role": "factor", "items": [
                        {"id": "x2a", "text": "x2 a"}, {"id": "x2b", "text": "x2 b"}, {"id": "x2c", "text": "x2 c"}]},
                    {"name": "y", "role": "outcome", "items": [
                        {"id": "ya", "text": "y a"}, {"id": "yb", "text": "y b"}, {"id": "yc", "text": "y c"}]}
                ],
                "paths": [{"from": "x1", "to": "y"}, {"from": "x2", "to": "y"}],
                "demographics": [{"name": "age", "kind": "numeric"}]
            }"#,
        )
        .unwrap(),
    )
}

fn recovery_model(seed: u64) -> SyntheticModel {
    SyntheticModel {
        betas: vec![
            ("x1".to_string(), "y".to_string(), 0.5),
            ("x2".to_string(), "y".to_string(), 0.3),
        ],
        loading: 0.9,
        structural_noise_sd: 0.6,
        indicator_noise_sd: 0.6,
        respondents: 2000,
        seed,
    }
}

/// Closed-form OLS on two predictors; the independent oracle for the
/// planted-beta recovery check.
fn ols_two(x1: &[f64], x2: &[f64], y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let (m1, m2, my) = (mean(x1), mean(x2), mean(y));
    let mut s11 = 0.0;
    let mut s22 = 0.0;
    let mut s12 = 0.0;
    let mut s1y = 0.0;
    let mut s2y = 0.0;
    for i in 0..y.len() {
        let d1 = x1[i] - m1;
        let d2 = x2[i] - m2;
        let dy = y[i] - my;
        s11 += d1 * d1;
        s22 += d2 * d2;
        s12 += d1 * d2;
        s1y += d1 * dy;
        s2y += d2 * dy;
    }
    let det = s11 * s22 - s12 * s12;
    ((s22 * s1y - s12 * s2y) / det, (s11 * s2y - s12 * s1y) / det)
}

#[test]
fn criterion_1_pls_recovery_of_planted_model() {
    let spec = recovery_spec();
    let model = recovery_model(31);
    let study = generate_synthetic_study(&spec, &model).unwrap();

    // oracle: OLS on the generating latents recovers the planted betas
    let x1 = &study.latent_scores[0].1;
    let x2 = &study.latent_scores[1].1;
    let y = &study.latent_scores[2].1;
    let (oracle_b1, oracle_b2) = ols_two(x1, x2, y);
    assert!((oracle_b1 - 0.5).abs() < 0.05, "oracle b1 {oracle_b1}");
    assert!((oracle_b2 - 0.3).abs() < 0.05, "oracle b2 {oracle_b2}");

    let options = PlsOptions::default();
    let start = Instant::now();

    // continuous indicators: within ±0.05
    let continuous = fit_data(&study.continuous, &spec, &options, 500, 8).unwrap();
    let c1 = continuous.estimates.coefficient("x1", "y").unwrap();
    let c2 = continuous.estimates.coefficient("x2", "y").unwrap();
    assert!((c1 - 0.5).abs() < 0.05, "continuous b1 {c1}");
    assert!((c2 - 0.3).abs() < 0.05, "continuous b2 {c2}");

    // Likert-discretized: within ±0.10
    let discrete = fit_data(
        &Dataset::from_matrix(&study.matrix),
        &spec,
        &options,
        500,
        8,
    )
    .unwrap();
    let d1 = discrete.estimates.coefficient("x1", "y").unwrap();
    let d2 = discrete.estimates.coefficient("x2", "y").unwrap();
    assert!((d1 - 0.5).abs() < 0.10, "discretized b1 {d1}");
    assert!((d2 - 0.3).abs() < 0.10, "discretized b2 {d2}");

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs() < 60,
        "two B=500 bootstraps took {elapsed:?}"
    );
    println!(
        "ACCEPTANCE 1 (PLS recovery, B=500 in {:.1}s): PASS",
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_2_metric_exactness() {
    let two = LikertScale { min: 1, max: 2 };
    let half = LikertDistribution {
        scale: two,
        counts: vec![1, 1],
        probabilities: vec![0.5, 0.5],
    };
    let point = LikertDistribution {
        scale: two,
        counts: vec![2, 0],
        probabilities: vec![1.0, 0.0],
    };
    let jsd = jensen_shannon(&half, &point).unwrap();
    assert!((jsd - 0.311278).abs() < 1e-5, "jsd {jsd}");

    let d1 = likert_histogram(&[1], SCALE_1_7).unwrap();
    let d7 = likert_histogram(&[7], SCALE_1_7).unwrap();
    assert_eq!(jensen_shannon(&d1, &d7).unwrap(), 1.0);
    assert_eq!(wasserstein(&d1, &d7).unwrap(), 6.0);

    let uniform = likert_histogram(&[1, 2, 3, 4, 5, 6, 7], SCALE_1_7).unwrap();
    let d4 = likert_histogram(&[4], SCALE_1_7).unwrap();
    assert!((wasserstein(&uniform, &d4).unwrap() - 12.0 / 7.0).abs() < 1e-9);

    // hand-built 2x2 example: bins (D,N),(A,A) vs (D,A),(A,N) -> 50%
    let spec = Arc::new(
        SurveySpec::from_json(
            r#"{
                "name": "cells",
                "scale": {"min": 1, "max": 7},
                "latents": [{"name": "t", "role": "outcome", "items": [
                    {"id": "t1", "text": "one"}, {"id": "t2", "text": "two"}]}],
                "paths": [],
                "demographics": []
            }"#,
        )
        .unwrap(),
    );
    let matrix = |rows: &[[i32; 2]]| {
        ResponseMatrix::new(
            Arc::clone(&spec),
            rows.iter()
                .enumerate()
                .map(|(i, row)| Respondent {
                    id: format!("r{i}"),
                    demographics: BTreeMap::new(),
                    answers: [("t1".to_string(), row[0]), ("t2".to_string(), row[1])]
                        .into_iter()
                        .collect(),
                })
                .collect(),
        )
        .unwrap()
    };
    let human = matrix(&[[1, 4], [7, 7]]);
    let generated = matrix(&[[2, 5], [6, 4]]);
    let items = vec!["t1".to_string(), "t2".to_string()];
    assert_eq!(consistency(&human, &generated, &items).unwrap(), 50.0);
    println!("ACCEPTANCE 2 (metric exactness): PASS");
}

#[test]
fn criterion_3_invariance_suite() {
    let spec = recovery_spec();
    let study = generate_synthetic_study(&spec, &recovery_model(77)).unwrap();
    let options = PlsOptions::default();

    // indicator scale invariance within 1e-9
    let baseline_scores = estimate_scores_data(&study.continuous, &spec, &options).unwrap();
    let baseline = path_coefficients(&baseline_scores, &spec).unwrap();
    let mut rescaled = study.continuous.clone();
    rescaled.scale_column("x1b", 37.5);
    rescaled.scale_column("ya", 0.004);
    let rescaled_scores = estimate_scores_data(&rescaled, &spec, &options).unwrap();
    let rescaled_paths = path_coefficients(&rescaled_scores, &spec).unwrap();
    for (a, b) in baseline.paths.iter().zip(&rescaled_paths.paths) {
        assert!(
            (a.coefficient - b.coefficient).abs() < 1e-9,
            "scale invariance broke on {} -> {}: {} vs {}",
            a.from,
            a.to,
            a.coefficient,
            b.coefficient
        );
    }

    // bootstrap determinism: identical runs and 1 vs 8 worker threads
    let data = Dataset::from_matrix(&study.matrix);
    let run_a = fit_data(&data, &spec, &options, 120, 99).unwrap();
    let run_b = fit_data(&data, &spec, &options, 120, 99).unwrap();
    let one_thread = fit_data_with_threads(&data, &spec, &options, 120, 99, Some(1)).unwrap();
    let eight_threads = fit_data_with_threads(&data, &spec, &options, 120, 99, Some(8)).unwrap();
    for idx in 0..run_a.estimates.paths.len() {
        let bits = |r: &pretest_core::plssem::PlsResult| {
            (
                r.estimates.paths[idx].coefficient.to_bits(),
                r.boot_sd[idx].to_bits(),
            )
        };
        assert_eq!(bits(&run_a), bits(&run_b), "repeat run differed");
        assert_eq!(bits(&one_thread), bits(&eight_threads), "thread count leaked");
        assert_eq!(bits(&run_a), bits(&one_thread), "pool choice leaked");
    }

    // JSD / Wasserstein symmetry on 1000 random distribution pairs
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let sample = |rng: &mut ChaCha8Rng| -> Vec<i32> {
            let len = rng.random_range(1..40);
            (0..len).map(|_| rng.random_range(1..=7)).collect()
        };
        let p = likert_histogram(&sample(&mut rng), SCALE_1_7).unwrap();
        let q = likert_histogram(&sample(&mut rng), SCALE_1_7).unwrap();
        assert_eq!(
            jensen_shannon(&p, &q).unwrap().to_bits(),
            jensen_shannon(&q, &p).unwrap().to_bits()
        );
        assert_eq!(
            wasserstein(&p, &q).unwrap().to_bits(),
            wasserstein(&q, &p).unwrap().to_bits()
        );
    }
    println!("ACCEPTANCE 3 (invariance suite): PASS");
}

fn random_respondent(rng: &mut ChaCha8Rng, spec: &SurveySpec, idx: usize) -> Respondent {
    let answers = spec
        .item_order()
        .into_iter()
        .map(|item| (item, rng.random_range(spec.scale.min..=spec.scale.max)))
        .collect();
    let demographics = spec
        .demographics
        .iter()
        .map(|field| {
            let value = match field.kind {
                pretest_core::survey::DemographicKind::Numeric => {
                    DemographicValue::Numeric(f64::from(rng.random_range(18..=80)))
                }
                pretest_core::survey::DemographicKind::Categorical => {
                    let options = ["female", "male", "nonbinary"];
                    DemographicValue::Categorical(
                        options[rng.random_range(0..options.len())].to_string(),
                    )
                }
            };
            (field.name.clone(), value)
        })
        .collect();
    Respondent {
        id: format!("p{idx:03}"),
        demographics,
        answers,
    }
}

#[test]
fn criterion_4_information_regime_contract() {
    let spec = bundled::study1();
    let targets: BTreeSet<String> = ["attitude".to_string()].into_iter().collect();
    let (prior_items, target_items) =
        pretest_core::survey::split_items(&spec, &targets).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(4040);
    let respondents: Vec<Respondent> = (0..100)
        .map(|idx| random_respondent(&mut rng, &spec, idx))
        .collect();
    let matrix = ResponseMatrix::new(Arc::clone(&spec), respondents.clone()).unwrap();
    let backend = SimulatedBackend::new(
        Arc::clone(&spec),
        targets,
        &matrix,
        SimulatedRespondentConfig::uniform_rule(
            &spec,
            &["attitude".to_string()].into_iter().collect(),
            0.0,
            11,
        ),
    )
    .unwrap();
    let defaults = pretest_core::llm::RequestDefaults::default();

    let field_patterns: Vec<regex::Regex> = spec
        .demographics
        .iter()
        .map(|f| regex::Regex::new(&format!(r"\b{}\b", regex::escape(&f.name))).unwrap())
        .collect();

    for respondent in &respondents {
        for approach in Approach::all() {
            let persona = (approach == Approach::Mirror).then(|| {
                generate_persona(respondent, &prior_items, &spec, &backend, &defaults).unwrap()
            });
            let bundle =
                build_prompt(approach, respondent, &spec, &target_items, persona.as_ref())
                    .unwrap();
            assert_eq!(
                bundle.context.flags(),
                approach.ingredients(),
                "flag pattern mismatch for {approach}"
            );
            if approach == Approach::Mirror {
                for pattern in &field_patterns {
                    assert!(
                        !pattern.is_match(&bundle.rendered_text),
                        "mirror prompt leaked demographic field: {pattern}"
                    );
                }
                for item in &prior_items {
                    let text = &spec.item(item).unwrap().text;
                    assert!(
                        !bundle.rendered_text.contains(text.as_str()),
                        "mirror prompt leaked prior item {item}"
                    );
                }
            }
        }
    }
    println!("ACCEPTANCE 4 (information-regime contract, 100 x 4): PASS");
}

/// Planted Study-1-shaped model used for the qualitative replication run.
fn study1_planted_betas() -> Vec<(String, String, f64)> {
    vec![
        ("pleasure".to_string(), "attitude".to_string(), 0.4),
        ("credibility".to_string(), "attitude".to_string(), 0.25),
        ("economic".to_string(), "attitude".to_string(), 0.2),
        ("intrusiveness".to_string(), "attitude".to_string(), -0.15),
        ("clutter".to_string(), "attitude".to_string(), -0.1),
    ]
}

/// Answer rule proportional to the planted betas, normalized to sum to one so
/// informed answers stay centered on the scale.
fn informed_rule() -> BTreeMap<String, Vec<(String, f64)>> {
    let betas = study1_planted_betas();
    let total: f64 = betas.iter().map(|(_, _, b)| b).sum();
    let weights = betas
        .iter()
        .map(|(from, _, b)| (from.clone(), b / total))
        .collect();
    [("attitude".to_string(), weights)].into_iter().collect()
}

fn qualitative_config(dir: &std::path::Path, approaches: Vec<Approach>) -> StudyConfig {
    let spec = bundled::study1();
    // a sharp planted model: the simulated omni respondent answers with small
    // noise (0.3 per the criterion), so the human side gets low structural
    // noise too, keeping both fits in the same attenuation regime
    let model = SyntheticModel {
        betas: study1_planted_betas(),
        loading: 0.9,
        structural_noise_sd: 0.25,
        indicator_noise_sd: 0.6,
        respondents: 600,
        seed: 505,
    };
    let human = generate_synthetic_study(&spec, &model).unwrap().matrix;
    let responses = dir.join("human.csv");
    std::fs::write(&responses, human.to_csv()).unwrap();
    StudyConfig {
        spec: "study1".to_string(),
        responses: responses.to_string_lossy().into_owned(),
        targets: vec![],
        approaches,
        bootstrap_samples: 100,
        seed: 606,
        backend: BackendConfig {
            kind: BackendKind::Simulated,
            noise_scale: 0.3,
            answer_rule: Some(informed_rule()),
            ..BackendConfig::default()
        },
        output_dir: dir.to_path_buf(),
        kde_bandwidth: None,
        pls: PlsOptions::default(),
    }
}

#[test]
fn criterion_5_qualitative_replication_with_simulated_backend() {
    let dir = tempfile::tempdir().unwrap();
    let config = qualitative_config(
        dir.path(),
        vec![Approach::Baseline, Approach::Demo, Approach::Omni],
    );
    let bundle = run_study(&config).unwrap();
    let by_approach = |a: Approach| {
        bundle
            .approaches
            .iter()
            .find(|r| r.approach == a)
            .expect("approach present")
    };
    let baseline = by_approach(Approach::Baseline);
    let demo = by_approach(Approach::Demo);
    let omni = by_approach(Approach::Omni);

    assert!(
        omni.distribution.mean_jsd < demo.distribution.mean_jsd,
        "JSD: omni {} !< demo {}",
        omni.distribution.mean_jsd,
        demo.distribution.mean_jsd
    );
    assert!(
        omni.distribution.mean_jsd < baseline.distribution.mean_jsd,
        "JSD: omni {} !< baseline {}",
        omni.distribution.mean_jsd,
        baseline.distribution.mean_jsd
    );
    assert!(
        omni.distribution.mean_wasserstein < demo.distribution.mean_wasserstein,
        "W: omni {} !< demo {}",
        omni.distribution.mean_wasserstein,
        demo.distribution.mean_wasserstein
    );
    assert!(
        omni.distribution.mean_wasserstein < baseline.distribution.mean_wasserstein,
        "W: omni {} !< baseline {}",
        omni.distribution.mean_wasserstein,
        baseline.distribution.mean_wasserstein
    );

    for (idx, path) in bundle.human.estimates.paths.iter().enumerate() {
        let human_beta = path.coefficient;
        let omni_diff = (omni.pls.estimates.paths[idx].coefficient - human_beta).abs();
        let baseline_diff = (baseline.pls.estimates.paths[idx].coefficient - human_beta).abs();
        assert!(
            omni_diff < baseline_diff,
            "path {} -> {}: omni diff {omni_diff} !< baseline diff {baseline_diff}",
            path.from,
            path.to
        );
    }
    println!(
        "ACCEPTANCE 5 (qualitative replication; JSD baseline/demo/omni = {:.4}/{:.4}/{:.4}): PASS",
        baseline.distribution.mean_jsd, demo.distribution.mean_jsd, omni.distribution.mean_jsd
    );
}

struct ExpectedPath {
    from: &'static str,
    to: &'static str,
    coefficient: f64,
    significant: bool,
}

fn human_data_paths() -> (Option<PathBuf>, Option<PathBuf>) {
    let from_env = |var: &str, fallback: &str| -> Option<PathBuf> {
        let path = std::env::var(var)
            .map(PathBuf::from)
            .unwrap_or_else(|_| PathBuf::from(fallback));
        path.exists().then_some(path)
    };
    (
        from_env("PRETEST_STUDY1_DATA", "../../data/study1_human.csv"),
        from_env("PRETEST_STUDY2_DATA", "../../data/study2_human.csv"),
    )
}

#[test]
fn criterion_6_conditional_human_data_replication() {
    let (study1_path, study2_path) = human_data_paths();
    if study1_path.is_none() && study2_path.is_none() {
        println!(
            "ACCEPTANCE 6 (human-data replication): WAIVED — original study datasets \
             not present (set PRETEST_STUDY1_DATA / PRETEST_STUDY2_DATA to enable)"
        );
        return;
    }
    if let Some(path) = study1_path {
        let spec = bundled::study1();
        let source = std::fs::read_to_string(&path).unwrap();
        let matrix = pretest_core::survey::load_responses(&source, &spec).unwrap();
        let result =
            pretest_core::plssem::fit(&matrix, &spec, &PlsOptions::default(), 5000, 42).unwrap();
        let expected = [
            ExpectedPath { from: "pleasure", to: "attitude", coefficient: 0.3359, significant: true },
            ExpectedPath { from: "credibility", to: "attitude", coefficient: 0.2559, significant: true },
            ExpectedPath { from: "economic", to: "attitude", coefficient: 0.2507, significant: true },
            ExpectedPath { from: "intrusiveness", to: "attitude", coefficient: -0.1641, significant: true },
            ExpectedPath { from: "clutter", to: "attitude", coefficient: -0.0695, significant: true },
        ];
        check_expected(&result, &expected);
    }
    if let Some(path) = study2_path {
        let spec = bundled::study2_case1();
        let source = std::fs::read_to_string(&path).unwrap();
        let matrix = pretest_core::survey::load_responses(&source, &spec).unwrap();
        let result =
            pretest_core::plssem::fit(&matrix, &spec, &PlsOptions::default(), 10000, 42).unwrap();
        let expected = [
            ExpectedPath { from: "LIKE", to: "LOY", coefficient: 0.1623, significant: true },
            ExpectedPath { from: "COMP", to: "LOY", coefficient: 0.0157, significant: false },
            ExpectedPath { from: "TRUST", to: "LOY", coefficient: 0.3973, significant: true },
            ExpectedPath { from: "SAT", to: "LOY", coefficient: 0.2197, significant: true },
        ];
        check_expected(&result, &expected);
    }
    println!("ACCEPTANCE 6 (human-data replication): PASS");
}

fn check_expected(result: &pretest_core::plssem::PlsResult, expected: &[ExpectedPath]) {
    for want in expected {
        let idx = result
            .estimates
            .paths
            .iter()
            .position(|p| p.from == want.from && p.to == want.to)
            .unwrap_or_else(|| panic!("missing path {} -> {}", want.from, want.to));
        let got = result.estimates.paths[idx].coefficient;
        assert!(
            (got - want.coefficient).abs() < 0.05,
            "{} -> {}: got {got}, want {} ± 0.05",
            want.from,
            want.to,
            want.coefficient
        );
        assert_eq!(
            got.signum(),
            want.coefficient.signum(),
            "{} -> {} sign mismatch",
            want.from,
            want.to
        );
        let is_significant =
            result.marks[idx] != pretest_core::plssem::SignificanceMark::None;
        assert_eq!(
            is_significant, want.significant,
            "{} -> {} significance mismatch (mark {:?})",
            want.from, want.to, result.marks[idx]
        );
    }
}

#[test]
fn criterion_7_end_to_end_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let shared_cache = dir.path().join("cache");
    let mut config = qualitative_config(
        dir.path(),
        vec![Approach::Baseline, Approach::Mirror, Approach::Omni],
    );
    config.backend.cache_dir = Some(shared_cache);
    config.bootstrap_samples = 60;

    // cold run fills the cache; the two warm runs must agree byte for byte
    let cold = run_study(&config).unwrap();
    assert!(cold.manifest.cache_misses > 0);

    let out_a = dir.path().join("report_a");
    let out_b = dir.path().join("report_b");
    let warm_a = run_study(&config).unwrap();
    emit_report(&warm_a, ReportFormat::Markdown, &out_a).unwrap();
    let warm_b = run_study(&config).unwrap();
    emit_report(&warm_b, ReportFormat::Markdown, &out_b).unwrap();
    assert_eq!(warm_a.manifest.cache_misses, 0, "warm run hit the backend");
    assert_eq!(warm_b.manifest.cache_misses, 0, "warm run hit the backend");

    let mut compared = 0usize;
    let mut stack = vec![out_a.clone()];
    while let Some(current) = stack.pop() {
        for entry in std::fs::read_dir(&current).unwrap() {
            let path_a = entry.unwrap().path();
            let relative = path_a.strip_prefix(&out_a).unwrap();
            let path_b = out_b.join(relative);
            if path_a.is_dir() {
                stack.push(path_a);
                continue;
            }
            let bytes_a = std::fs::read(&path_a).unwrap();
            let bytes_b = std::fs::read(&path_b)
                .unwrap_or_else(|_| panic!("missing {} in second run", relative.display()));
            assert_eq!(
                bytes_a, bytes_b,
                "report file {} differs between warm runs",
                relative.display()
            );
            compared += 1;
        }
    }
    assert!(compared >= 10, "only {compared} files compared");
    println!("ACCEPTANCE 7 (end-to-end determinism, {compared} files byte-identical): PASS");
}
