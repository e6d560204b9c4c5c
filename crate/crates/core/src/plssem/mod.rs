//! Partial least squares path modeling: latent score estimation with the
//! classical iterative scheme (mode A outer estimation, selectable inner
//! weighting), structural path coefficients by ordinary least squares, and
//! seeded bootstrap standard errors.

mod bootstrap;
mod estimate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::survey::ResponseMatrix;

pub use bootstrap::{bootstrap, bootstrap_data, fit, fit_data, fit_data_with_threads};
pub use estimate::{
    estimate_scores, estimate_scores_data, path_coefficients, standardize, standardize_columns,
};

#[derive(Debug, Error)]
pub enum PlsError {
    #[error("column `{0}` has zero variance")]
    ZeroVariance(String),
    #[error("column `{0}` needs at least two rows")]
    TooFewRows(String),
    #[error("latent `{0}` is connected to no other latent; its inner proxy is undefined")]
    IsolatedLatent(String),
    #[error("degenerate block `{0}`: indicators carry no shared signal")]
    DegenerateBlock(String),
    #[error("latent `{latent}` has no item columns in the data")]
    MissingBlock { latent: String },
    #[error("singular predictor matrix when regressing `{0}` on its predecessors")]
    SingularPredictors(String),
    #[error("column length mismatch in dataset construction")]
    ColumnLengthMismatch,
    #[error("bootstrap needs B >= 2, got {0}")]
    TooFewReplicates(usize),
    #[error("{failed} of {total} bootstrap replicates failed (more than 5%)")]
    TooManyFailedReplicates { failed: usize, total: usize },
}

/// Inner weighting scheme for the iterative estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerScheme {
    /// Sign of the correlation between connected latent scores.
    Centroid,
    /// The correlation itself.
    Factorial,
    /// Regression coefficients toward predecessors, correlations toward successors.
    Path,
}

/// Denominator convention for standardization variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdDenominator {
    N,
    NMinus1,
}

fn default_scheme() -> InnerScheme {
    InnerScheme::Centroid
}
fn default_max_iterations() -> usize {
    100
}
fn default_tolerance() -> f64 {
    1e-6
}
fn default_denominator() -> StdDenominator {
    StdDenominator::NMinus1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlsOptions {
    #[serde(default = "default_scheme")]
    pub inner_scheme: InnerScheme,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_denominator")]
    pub standardization_denominator: StdDenominator,
}

impl Default for PlsOptions {
    fn default() -> Self {
        Self {
            inner_scheme: InnerScheme::Centroid,
            max_iterations: 100,
            tolerance: 1e-6,
            standardization_denominator: StdDenominator::NMinus1,
        }
    }
}

/// Respondent-by-item real matrix stored as one column per item.
///
/// `ResponseMatrix` data flows through this type, and synthetic or rescaled
/// columns can be fitted directly without Likert validation.
#[derive(Debug, Clone)]
pub struct Dataset {
    items: Vec<String>,
    columns: Vec<Vec<f64>>,
    rows: usize,
}

impl Dataset {
    pub fn from_columns(items: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self, PlsError> {
        let rows = columns.first().map(Vec::len).unwrap_or(0);
        if items.len() != columns.len() || columns.iter().any(|c| c.len() != rows) {
            return Err(PlsError::ColumnLengthMismatch);
        }
        Ok(Self {
            items,
            columns,
            rows,
        })
    }

    pub fn from_matrix(matrix: &ResponseMatrix) -> Self {
        let items = matrix.item_order().to_vec();
        let columns = items
            .iter()
            .map(|item| {
                matrix
                    .item_column(item)
                    .into_iter()
                    .map(f64::from)
                    .collect()
            })
            .collect();
        Self {
            rows: matrix.len(),
            items,
            columns,
        }
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn column(&self, item: &str) -> Option<&Vec<f64>> {
        self.items
            .iter()
            .position(|i| i == item)
            .map(|idx| &self.columns[idx])
    }

    /// Multiplies one column in place; used for scale-invariance checks.
    pub fn scale_column(&mut self, item: &str, factor: f64) {
        if let Some(idx) = self.items.iter().position(|i| i == item) {
            for v in &mut self.columns[idx] {
                *v *= factor;
            }
        }
    }

    /// New dataset whose rows are `indices` drawn from this one.
    pub fn resample(&self, indices: &[usize]) -> Self {
        let columns = self
            .columns
            .iter()
            .map(|col| indices.iter().map(|&i| col[i]).collect())
            .collect();
        Self {
            items: self.items.clone(),
            columns,
            rows: indices.len(),
        }
    }
}

/// Standardized latent score columns and the outer weights that produce them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatentScores {
    pub latents: Vec<String>,
    /// One standardized column per latent, in `latents` order.
    pub scores: Vec<Vec<f64>>,
    /// Normalized outer weight per item (canonical item order); latent scores
    /// equal the weighted sum of the standardized block indicators.
    pub outer_weights: Vec<(String, f64)>,
    pub converged: bool,
    pub iterations: usize,
}

impl LatentScores {
    pub fn score(&self, latent: &str) -> Option<&[f64]> {
        self.latents
            .iter()
            .position(|l| l == latent)
            .map(|idx| self.scores[idx].as_slice())
    }

    pub fn weight(&self, item: &str) -> Option<f64> {
        self.outer_weights
            .iter()
            .find(|(i, _)| i == item)
            .map(|&(_, w)| w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathCoefficient {
    pub from: String,
    pub to: String,
    pub coefficient: f64,
}

/// Structural regression results: one coefficient per declared path and an R²
/// per endogenous latent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEstimates {
    pub paths: Vec<PathCoefficient>,
    pub r_squared: Vec<(String, f64)>,
}

impl PathEstimates {
    pub fn coefficient(&self, from: &str, to: &str) -> Option<f64> {
        self.paths
            .iter()
            .find(|p| p.from == from && p.to == to)
            .map(|p| p.coefficient)
    }

    pub fn r2(&self, latent: &str) -> Option<f64> {
        self.r_squared
            .iter()
            .find(|(l, _)| l == latent)
            .map(|&(_, r2)| r2)
    }
}

// Two-sided standard normal quantiles for p < 0.05, 0.01, 0.001.
const Z_P05: f64 = 1.959963984540054;
const Z_P01: f64 = 2.5758293035489004;
const Z_P001: f64 = 3.2905267314918945;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignificanceMark {
    None,
    P05,
    P01,
    P001,
}

impl SignificanceMark {
    /// Mark from a bootstrap z statistic (coefficient over bootstrap SD).
    /// A zero SD with a nonzero coefficient counts as infinitely significant.
    pub fn from_ratio(coefficient: f64, sd: f64) -> Self {
        let z = if sd == 0.0 {
            if coefficient == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (coefficient / sd).abs()
        };
        if z >= Z_P001 {
            SignificanceMark::P001
        } else if z >= Z_P01 {
            SignificanceMark::P01
        } else if z >= Z_P05 {
            SignificanceMark::P05
        } else {
            SignificanceMark::None
        }
    }

    pub fn symbol(&self) -> &'static str {
        match self {
            SignificanceMark::None => "",
            SignificanceMark::P05 => "*",
            SignificanceMark::P01 => "**",
            SignificanceMark::P001 => "***",
        }
    }
}

/// Full estimation result: point estimates plus bootstrap inference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlsResult {
    pub estimates: PathEstimates,
    /// Bootstrap standard deviation per path, aligned with `estimates.paths`.
    pub boot_sd: Vec<f64>,
    pub marks: Vec<SignificanceMark>,
    pub bootstrap_samples: usize,
    pub seed: u64,
    pub failed_replicates: usize,
    pub converged: bool,
    pub iterations: usize,
    pub outer_weights: Vec<(String, f64)>,
}

impl PlsResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    /// One `coefficient*** (sd)` cell.
    pub fn cell(&self, idx: usize) -> String {
        format!(
            "{:.4}{} ({:.4})",
            self.estimates.paths[idx].coefficient,
            self.marks[idx].symbol(),
            self.boot_sd[idx]
        )
    }

    /// Plain text table: one row per path, coefficient with significance
    /// marks and the bootstrap SD in parentheses.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let label_width = self
            .estimates
            .paths
            .iter()
            .map(|p| p.from.len() + p.to.len() + 4)
            .max()
            .unwrap_or(8)
            .max(8);
        for (idx, path) in self.estimates.paths.iter().enumerate() {
            let label = format!("{} -> {}", path.from, path.to);
            out.push_str(&format!("{label:label_width$}  {}\n", self.cell(idx)));
        }
        for (latent, r2) in &self.r_squared() {
            out.push_str(&format!("R² {latent}: {r2:.4}\n"));
        }
        out.push_str(&format!(
            "bootstrap: B = {}, seed = {}, failed replicates = {}\n",
            self.bootstrap_samples, self.seed, self.failed_replicates
        ));
        out
    }

    fn r_squared(&self) -> Vec<(String, f64)> {
        self.estimates.r_squared.clone()
    }
}
