//! `pretest`: survey pre-testing from the command line.
//!
//! Subcommands: `fit` (path model on a response matrix), `generate` (produce
//! backend responses per approach), `metrics` (compare two matrices),
//! `persona` (generate and inspect personas), `run` (full study), and
//! `synth` (synthetic study generator).

use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pretest_core::llm::{CompletionBackend, RequestDefaults};
use pretest_core::metrics::compare_matrices;
use pretest_core::pipeline::{
    emit_partial_manifest, generate_personas, generate_responses, load_matrix, prepare_run,
    resolve_spec, run_study, BackendConfig, BackendKind, PipelineError, StudyConfig,
};
use pretest_core::plssem::{
    fit_data_with_threads, Dataset, InnerScheme, PlsOptions, StdDenominator,
};
use pretest_core::prompting::Approach;
use pretest_core::report::{distribution_tables, emit_report, ReportFormat};
use pretest_core::survey::split_items;
use pretest_core::synth::{generate_synthetic_study, SyntheticModel};

#[derive(Parser)]
#[command(
    name = "pretest",
    version,
    about = "Survey pre-testing: simulated respondents, PLS path modeling, and distribution metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the path model (with bootstrap SDs) on a response matrix.
    Fit(FitArgs),
    /// Generate backend responses for one or more approaches.
    Generate(GenerateArgs),
    /// Compare a generated matrix against the human matrix.
    Metrics(MetricsArgs),
    /// Generate personas and inspect a sample.
    Persona(PersonaArgs),
    /// Full study: generate, fit, compare, and write reports.
    Run(RunArgs),
    /// Generate a synthetic study from a planted model.
    Synth(SynthArgs),
}

#[derive(Args)]
struct PlsFlags {
    /// Inner weighting scheme.
    #[arg(long, default_value = "centroid", value_parser = parse_scheme)]
    scheme: InnerScheme,
    #[arg(long, default_value_t = 100)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    /// Standardization denominator: `n` or `n_minus_1`.
    #[arg(long, default_value = "n_minus_1", value_parser = parse_denominator)]
    denominator: StdDenominator,
}

impl PlsFlags {
    fn options(&self) -> PlsOptions {
        PlsOptions {
            inner_scheme: self.scheme,
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            standardization_denominator: self.denominator,
        }
    }
}

#[derive(Args)]
struct BackendFlags {
    /// Backend: `simulated` or `http`.
    #[arg(long, default_value = "simulated", value_parser = parse_backend_kind)]
    backend: BackendKind,
    /// Chat-completion base URL (http backend; key from LLM_API_KEY).
    #[arg(long)]
    base_url: Option<String>,
    #[arg(long, default_value = "gpt-4o")]
    model: String,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    #[arg(long, default_value_t = 1024)]
    max_tokens: u32,
    /// Simulated backend answer noise SD.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Maximum concurrent backend requests.
    #[arg(long, default_value_t = 8)]
    parallelism: usize,
    /// Reply cache directory (defaults to <out>/cache).
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

impl BackendFlags {
    fn config(&self) -> BackendConfig {
        BackendConfig {
            kind: self.backend,
            request: RequestDefaults {
                model: self.model.clone(),
                temperature: self.temperature,
                max_tokens: self.max_tokens,
            },
            base_url: self.base_url.clone(),
            noise_scale: self.noise,
            backend_seed: None,
            answer_rule: None,
            parallelism: self.parallelism,
            cache_dir: self.cache_dir.clone(),
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// Study spec path or bundled name (study1, study2_case1, study2_case2).
    #[arg(long)]
    spec: String,
    /// Response matrix CSV.
    #[arg(long)]
    responses: String,
    /// Bootstrap sample count B.
    #[arg(long, default_value_t = 500)]
    bootstrap: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Bootstrap worker threads (defaults to the rayon global pool).
    #[arg(long)]
    threads: Option<usize>,
    /// Write fit.json and fit.txt here in addition to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    pls: PlsFlags,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    spec: String,
    /// Human responses CSV (demographics and prior answers come from here).
    #[arg(long)]
    responses: String,
    /// Target latents; defaults to the spec's outcome latents.
    #[arg(long, value_delimiter = ',')]
    targets: Vec<String>,
    /// Approach to run; repeatable.
    #[arg(long = "approach", required = true, value_parser = parse_approach)]
    approaches: Vec<Approach>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output directory for generated_<approach>.csv files.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    backend: BackendFlags,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    spec: String,
    /// Human responses CSV.
    #[arg(long)]
    responses: String,
    /// Generated responses CSV.
    #[arg(long)]
    generated: String,
    #[arg(long, value_delimiter = ',')]
    targets: Vec<String>,
    /// KDE bandwidth override (defaults to Silverman's rule per item).
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Write jsd/wasserstein/consistency tables here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "markdown", value_parser = parse_format)]
    format: ReportFormat,
}

#[derive(Args)]
struct PersonaArgs {
    #[arg(long)]
    spec: String,
    #[arg(long)]
    responses: String,
    #[arg(long, value_delimiter = ',')]
    targets: Vec<String>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Write personas.json here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the first N persona sketches.
    #[arg(long, default_value_t = 3)]
    show: usize,
    #[command(flatten)]
    backend: BackendFlags,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config mirroring the full study configuration; flags below
    /// override it when given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    spec: Option<String>,
    #[arg(long)]
    responses: Option<String>,
    #[arg(long, value_delimiter = ',')]
    targets: Vec<String>,
    #[arg(long = "approach", value_parser = parse_approach)]
    approaches: Vec<Approach>,
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "markdown", value_parser = parse_format)]
    format: ReportFormat,
    #[command(flatten)]
    backend: BackendFlags,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    spec: String,
    /// Respondent count.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Planted coefficient, `from:to=beta`; repeatable, one per spec path.
    #[arg(long = "beta", value_parser = parse_beta)]
    betas: Vec<(String, String, f64)>,
    #[arg(long, default_value_t = 0.9)]
    loading: f64,
    #[arg(long, default_value_t = 0.6)]
    structural_noise: f64,
    #[arg(long, default_value_t = 0.6)]
    indicator_noise: f64,
    /// Also write the continuous indicator columns and true latent scores.
    #[arg(long)]
    emit_continuous: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn parse_approach(s: &str) -> Result<Approach, String> {
    Approach::parse(s).ok_or_else(|| format!("unknown approach `{s}` (baseline|demo|mirror|omni)"))
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    ReportFormat::parse(s).ok_or_else(|| format!("unknown format `{s}` (markdown|csv|json)"))
}

fn parse_backend_kind(s: &str) -> Result<BackendKind, String> {
    match s {
        "http" => Ok(BackendKind::Http),
        "simulated" => Ok(BackendKind::Simulated),
        _ => Err(format!("unknown backend `{s}` (http|simulated)")),
    }
}

fn parse_scheme(s: &str) -> Result<InnerScheme, String> {
    match s {
        "centroid" => Ok(InnerScheme::Centroid),
        "factorial" => Ok(InnerScheme::Factorial),
        "path" => Ok(InnerScheme::Path),
        _ => Err(format!("unknown scheme `{s}` (centroid|factorial|path)")),
    }
}

fn parse_denominator(s: &str) -> Result<StdDenominator, String> {
    match s {
        "n" => Ok(StdDenominator::N),
        "n_minus_1" => Ok(StdDenominator::NMinus1),
        _ => Err(format!("unknown denominator `{s}` (n|n_minus_1)")),
    }
}

fn parse_beta(s: &str) -> Result<(String, String, f64), String> {
    let (path, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected from:to=beta, got `{s}`"))?;
    let (from, to) = path
        .split_once(':')
        .ok_or_else(|| format!("expected from:to=beta, got `{s}`"))?;
    let beta: f64 = value
        .parse()
        .map_err(|_| format!("`{value}` is not a number"))?;
    Ok((from.to_string(), to.to_string(), beta))
}

fn target_set(targets: &[String], spec: &pretest_core::survey::SurveySpec) -> BTreeSet<String> {
    if targets.is_empty() {
        spec.outcome_latents().into_iter().collect()
    } else {
        targets.iter().cloned().collect()
    }
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let spec = resolve_spec(&args.spec)?;
    let matrix = load_matrix(&args.responses, &spec)?;
    let dataset = Dataset::from_matrix(&matrix);
    let result = fit_data_with_threads(
        &dataset,
        &spec,
        &args.pls.options(),
        args.bootstrap,
        args.seed,
        args.threads,
    )?;
    if !result.converged {
        eprintln!(
            "warning: outer weights did not converge within {} iterations",
            result.iterations
        );
    }
    print!("{}", result.to_table());
    if let Some(out) = args.out {
        std::fs::create_dir_all(&out)?;
        std::fs::write(out.join("fit.json"), result.to_json())?;
        std::fs::write(out.join("fit.txt"), result.to_table())?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let config = StudyConfig {
        spec: args.spec,
        responses: args.responses,
        targets: args.targets,
        approaches: args.approaches,
        bootstrap_samples: 2,
        seed: args.seed,
        backend: args.backend.config(),
        output_dir: args.out.clone(),
        kde_bandwidth: None,
        pls: PlsOptions::default(),
    };
    std::fs::create_dir_all(&args.out)?;
    let generated = generate_responses(&config)?;
    for approach in generated {
        let path = args.out.join(format!("generated_{}.csv", approach.approach));
        match approach.matrix {
            Some(matrix) => {
                std::fs::write(&path, matrix.to_csv())?;
                println!(
                    "{}: {} respondents written to {} ({} failed)",
                    approach.approach,
                    matrix.len(),
                    path.display(),
                    approach.failed.len()
                );
            }
            None => println!(
                "{}: every respondent failed, nothing written",
                approach.approach
            ),
        }
        for (id, reason) in approach.failed {
            eprintln!("  failed {id}: {reason}");
        }
    }
    Ok(())
}

fn cmd_metrics(args: MetricsArgs) -> Result<()> {
    let spec = resolve_spec(&args.spec)?;
    let human = load_matrix(&args.responses, &spec)?;
    let generated = load_matrix(&args.generated, &spec)?;
    let targets = target_set(&args.targets, &spec);
    let (_, target_items) = split_items(&spec, &targets)?;
    let report = compare_matrices(&human, &generated, &target_items, args.bandwidth)?;
    let columns = vec![("generated".to_string(), &report)];
    let tables = distribution_tables(&target_items, &columns, args.format);
    for (name, content) in &tables {
        println!("## {name}\n\n{content}");
    }
    if let Some(out) = args.out {
        std::fs::create_dir_all(&out)?;
        let ext = match args.format {
            ReportFormat::Markdown => "md",
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        };
        for (name, content) in &tables {
            std::fs::write(out.join(format!("{name}.{ext}")), content)?;
        }
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn cmd_persona(args: PersonaArgs) -> Result<()> {
    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("personas"));
    let config = StudyConfig {
        spec: args.spec,
        responses: args.responses,
        targets: args.targets,
        approaches: vec![Approach::Mirror],
        bootstrap_samples: 2,
        seed: args.seed,
        backend: args.backend.config(),
        output_dir: out_dir.clone(),
        kde_bandwidth: None,
        pls: PlsOptions::default(),
    };
    let prepared = prepare_run(&config)?;
    let personas = generate_personas(
        &prepared.spec,
        &prepared.human,
        &prepared.prior_items,
        &prepared.backend,
        &config.backend.request,
        config.backend.parallelism,
    )?;
    println!(
        "generated {} personas via {}",
        personas.len(),
        prepared.backend.identity()
    );
    for persona in personas.iter().take(args.show) {
        println!("\n--- {} ({})\n{}", persona.respondent_id, persona.fingerprint, persona.text);
    }
    if args.out.is_some() {
        std::fs::create_dir_all(&out_dir)?;
        let path = out_dir.join("personas.json");
        std::fs::write(&path, serde_json::to_string_pretty(&personas)?)?;
        println!("\nwrote {}", path.display());
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => {
            let source = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            StudyConfig::from_json(&source)?
        }
        None => {
            let spec = args
                .spec
                .clone()
                .ok_or_else(|| anyhow!("--spec is required without --config"))?;
            let responses = args
                .responses
                .clone()
                .ok_or_else(|| anyhow!("--responses is required without --config"))?;
            if args.approaches.is_empty() {
                bail!("at least one --approach is required without --config");
            }
            StudyConfig {
                spec,
                responses,
                targets: args.targets.clone(),
                approaches: args.approaches.clone(),
                bootstrap_samples: args.bootstrap.unwrap_or(500),
                seed: args.seed.unwrap_or(42),
                backend: args.backend.config(),
                output_dir: args.out.clone().unwrap_or_else(|| PathBuf::from("report")),
                kde_bandwidth: None,
                pls: PlsOptions::default(),
            }
        }
    };
    // flag overrides on top of a config file
    if args.config.is_some() {
        if let Some(out) = &args.out {
            config.output_dir = out.clone();
        }
        if let Some(b) = args.bootstrap {
            config.bootstrap_samples = b;
        }
        if let Some(seed) = args.seed {
            config.seed = seed;
        }
        if !args.approaches.is_empty() {
            config.approaches = args.approaches.clone();
        }
    }

    let bundle = match run_study(&config) {
        Ok(bundle) => bundle,
        Err(PipelineError::Aborted {
            stage,
            partial_manifest,
            source,
        }) => {
            let path = emit_partial_manifest(&config.output_dir, &partial_manifest)?;
            bail!(
                "run aborted during {stage}: {source}\npartial manifest written to {}",
                path.display()
            );
        }
        Err(error) => return Err(error.into()),
    };
    let written = emit_report(&bundle, args.format, &config.output_dir)?;
    for report in &bundle.approaches {
        println!(
            "{}: mean JSD {:.4}, mean Wasserstein {:.4}, consistency {:.2}%{}",
            report.approach,
            report.distribution.mean_jsd,
            report.distribution.mean_wasserstein,
            report.distribution.consistency_pct,
            if report.degraded { " (degraded)" } else { "" }
        );
    }
    println!(
        "cache: {} hits / {} misses; wrote {} files to {}",
        bundle.manifest.cache_hits,
        bundle.manifest.cache_misses,
        written.len(),
        config.output_dir.display()
    );
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let spec = resolve_spec(&args.spec)?;
    let model = SyntheticModel {
        betas: args.betas,
        loading: args.loading,
        structural_noise_sd: args.structural_noise,
        indicator_noise_sd: args.indicator_noise,
        respondents: args.n,
        seed: args.seed,
    };
    let study = generate_synthetic_study(&spec, &model)?;
    std::fs::create_dir_all(&args.out)?;
    let matrix_path = args.out.join("synthetic.csv");
    std::fs::write(&matrix_path, study.matrix.to_csv())?;
    println!(
        "wrote {} ({} respondents, {} items)",
        matrix_path.display(),
        study.matrix.len(),
        study.matrix.item_order().len()
    );
    if args.emit_continuous {
        let mut continuous = study.continuous.items().join(",");
        continuous.push('\n');
        for row in 0..study.continuous.rows() {
            let cells: Vec<String> = study
                .continuous
                .columns()
                .iter()
                .map(|col| col[row].to_string())
                .collect();
            continuous.push_str(&cells.join(","));
            continuous.push('\n');
        }
        std::fs::write(args.out.join("continuous.csv"), continuous)?;

        let mut latents = study
            .latent_scores
            .iter()
            .map(|(name, _)| name.clone())
            .collect::<Vec<_>>()
            .join(",");
        latents.push('\n');
        for row in 0..args.n {
            let cells: Vec<String> = study
                .latent_scores
                .iter()
                .map(|(_, col)| col[row].to_string())
                .collect();
            latents.push_str(&cells.join(","));
            latents.push('\n');
        }
        std::fs::write(args.out.join("latent_scores.csv"), latents)?;
        println!("wrote continuous.csv and latent_scores.csv");
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Generate(args) => cmd_generate(args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::Persona(args) => cmd_persona(args),
        Command::Run(args) => cmd_run(args),
        Command::Synth(args) => cmd_synth(args),
    }
}
