//! Latent score estimation and structural regressions.

use crate::survey::{ResponseMatrix, SurveySpec};

use super::{
    Dataset, InnerScheme, LatentScores, PathCoefficient, PathEstimates, PlsError, PlsOptions,
    StdDenominator,
};

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn variance_about(values: &[f64], center: f64, denominator: StdDenominator) -> f64 {
    let ss: f64 = values.iter().map(|v| (v - center).powi(2)).sum();
    let n = values.len() as f64;
    match denominator {
        StdDenominator::N => ss / n,
        StdDenominator::NMinus1 => ss / (n - 1.0),
    }
}

/// Pearson correlation; denominators cancel, so no convention is needed.
pub(crate) fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

fn standardize_column(
    values: &[f64],
    denominator: StdDenominator,
    label: &str,
) -> Result<Vec<f64>, PlsError> {
    if values.len() < 2 {
        return Err(PlsError::TooFewRows(label.to_string()));
    }
    let m = mean(values);
    let sd = variance_about(values, m, denominator).sqrt();
    if sd == 0.0 {
        return Err(PlsError::ZeroVariance(label.to_string()));
    }
    Ok(values.iter().map(|v| (v - m) / sd).collect())
}

/// Standardizes every column to mean 0 and unit variance under the chosen
/// denominator. Zero-variance columns are reported by index.
pub fn standardize_columns(
    columns: &[Vec<f64>],
    denominator: StdDenominator,
) -> Result<Vec<Vec<f64>>, PlsError> {
    columns
        .iter()
        .enumerate()
        .map(|(idx, col)| standardize_column(col, denominator, &format!("column {idx}")))
        .collect()
}

/// Standardizes a dataset column-wise; errors carry the offending item id.
pub fn standardize(data: &Dataset, denominator: StdDenominator) -> Result<Dataset, PlsError> {
    let columns = data
        .items
        .iter()
        .zip(&data.columns)
        .map(|(item, col)| standardize_column(col, denominator, item))
        .collect::<Result<Vec<_>, _>>()?;
    Dataset::from_columns(data.items.clone(), columns)
}

struct Block {
    latent: String,
    item_indices: Vec<usize>,
}

fn blocks_for(spec: &SurveySpec, data: &Dataset) -> Result<Vec<Block>, PlsError> {
    spec.latents
        .iter()
        .map(|latent| {
            let item_indices = latent
                .items
                .iter()
                .map(|item| {
                    data.items
                        .iter()
                        .position(|i| *i == item.id)
                        .ok_or_else(|| PlsError::MissingBlock {
                            latent: latent.name.clone(),
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Block {
                latent: latent.name.clone(),
                item_indices,
            })
        })
        .collect()
}

/// Undirected adjacency over the structural graph, as index pairs into the
/// latent list.
fn adjacency(spec: &SurveySpec) -> Vec<Vec<usize>> {
    let index_of = |name: &str| {
        spec.latents
            .iter()
            .position(|l| l.name == name)
            .expect("validated spec")
    };
    let mut adj = vec![Vec::new(); spec.latents.len()];
    for path in &spec.paths {
        let from = index_of(&path.from);
        let to = index_of(&path.to);
        adj[from].push(to);
        adj[to].push(from);
    }
    for neighbors in &mut adj {
        neighbors.sort_unstable();
        neighbors.dedup();
    }
    adj
}

/// Weighted sum of a block's standardized indicator columns, standardized.
/// Also returns the normalizing factor so callers can recover the weights
/// that reproduce the score directly.
fn outer_score(
    data: &Dataset,
    block: &Block,
    weights: &[f64],
    denominator: StdDenominator,
) -> Result<(Vec<f64>, f64), PlsError> {
    let mut combined = vec![0.0; data.rows()];
    for (&idx, &w) in block.item_indices.iter().zip(weights) {
        for (acc, &v) in combined.iter_mut().zip(&data.columns[idx]) {
            *acc += w * v;
        }
    }
    let m = mean(&combined);
    let sd = variance_about(&combined, m, denominator).sqrt();
    if sd == 0.0 || !sd.is_finite() {
        return Err(PlsError::DegenerateBlock(block.latent.clone()));
    }
    for v in &mut combined {
        *v = (*v - m) / sd;
    }
    Ok((combined, sd))
}

/// Solves the symmetric positive-definite system `a x = b` by Cholesky
/// factorization. `None` signals a singular or indefinite matrix.
fn solve_spd(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale: f64 = (0..n).map(|i| a[i][i].abs()).sum::<f64>() / n.max(1) as f64;
    let eps = 1e-12 * scale.max(f64::MIN_POSITIVE);
    // in-place Cholesky: a becomes L (lower triangle)
    for j in 0..n {
        let mut diag = a[j][j];
        for k in 0..j {
            diag -= a[j][k] * a[j][k];
        }
        if diag <= eps {
            return None;
        }
        let diag = diag.sqrt();
        a[j][j] = diag;
        for i in (j + 1)..n {
            let mut v = a[i][j];
            for k in 0..j {
                v -= a[i][k] * a[j][k];
            }
            a[i][j] = v / diag;
        }
    }
    // forward substitution L y = b
    for i in 0..n {
        for k in 0..i {
            b[i] -= a[i][k] * b[k];
        }
        b[i] /= a[i][i];
    }
    // back substitution L' x = y
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            b[i] -= a[k][i] * b[k];
        }
        b[i] /= a[i][i];
    }
    Some(b)
}

/// OLS of `y` on `predictors`; returns coefficients and R².
fn ols(predictors: &[&[f64]], y: &[f64]) -> Option<(Vec<f64>, f64)> {
    let p = predictors.len();
    let mut gram = vec![vec![0.0; p]; p];
    let mut moment = vec![0.0; p];
    for i in 0..p {
        for j in i..p {
            let dot: f64 = predictors[i]
                .iter()
                .zip(predictors[j])
                .map(|(&a, &b)| a * b)
                .sum();
            gram[i][j] = dot;
            gram[j][i] = dot;
        }
        moment[i] = predictors[i].iter().zip(y).map(|(&a, &b)| a * b).sum();
    }
    let coefficients = solve_spd(gram, moment)?;
    let my = mean(y);
    let sst: f64 = y.iter().map(|&v| (v - my).powi(2)).sum();
    let mut sse = 0.0;
    for row in 0..y.len() {
        let fitted: f64 = coefficients
            .iter()
            .zip(predictors)
            .map(|(&c, col)| c * col[row])
            .sum();
        sse += (y[row] - fitted).powi(2);
    }
    let r2 = if sst > 0.0 {
        (1.0 - sse / sst).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Some((coefficients, r2))
}

/// Iterative latent score estimation.
///
/// Outer weights start equal; each round forms block scores, builds inner
/// proxies from adjacent latents under the chosen scheme, and refreshes the
/// weights as indicator-proxy correlations (mode A) until the largest weight
/// change drops below tolerance or the iteration budget runs out.
pub fn estimate_scores_data(
    data: &Dataset,
    spec: &SurveySpec,
    options: &PlsOptions,
) -> Result<LatentScores, PlsError> {
    let standardized = standardize(data, options.standardization_denominator)?;
    let blocks = blocks_for(spec, &standardized)?;
    let adj = adjacency(spec);
    for (block, neighbors) in blocks.iter().zip(&adj) {
        if neighbors.is_empty() {
            return Err(PlsError::IsolatedLatent(block.latent.clone()));
        }
    }

    let mut weights: Vec<Vec<f64>> = blocks
        .iter()
        .map(|b| vec![1.0; b.item_indices.len()])
        .collect();
    let mut scores: Vec<Vec<f64>> = Vec::with_capacity(blocks.len());
    for (block, w) in blocks.iter().zip(&weights) {
        scores.push(outer_score(&standardized, block, w, options.standardization_denominator)?.0);
    }

    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..options.max_iterations {
        iterations += 1;
        let proxies = inner_proxies(spec, &blocks, &adj, &scores, options.inner_scheme)?;

        let mut max_change: f64 = 0.0;
        let mut next_weights = Vec::with_capacity(blocks.len());
        for (b, block) in blocks.iter().enumerate() {
            let w_new: Vec<f64> = block
                .item_indices
                .iter()
                .map(|&idx| pearson(&standardized.columns[idx], &proxies[b]))
                .collect();
            if w_new.iter().all(|&w| w == 0.0) {
                return Err(PlsError::DegenerateBlock(block.latent.clone()));
            }
            for (&old, &new) in weights[b].iter().zip(&w_new) {
                max_change = max_change.max((new - old).abs());
            }
            next_weights.push(w_new);
        }
        weights = next_weights;
        for (b, block) in blocks.iter().enumerate() {
            scores[b] =
                outer_score(&standardized, block, &weights[b], options.standardization_denominator)?
                    .0;
        }
        if max_change < options.tolerance {
            converged = true;
            break;
        }
    }

    // Normalize weights so each score equals the weighted sum of its block's
    // standardized indicators, then orient each block so its dominant
    // indicator loads positively.
    let mut outer_weights = Vec::new();
    for (b, block) in blocks.iter().enumerate() {
        let (_, sd) = outer_score(
            &standardized,
            block,
            &weights[b],
            options.standardization_denominator,
        )?;
        let mut normalized: Vec<f64> = weights[b].iter().map(|&w| w / sd).collect();
        let dominant = normalized
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| {
                a.abs()
                    .partial_cmp(&b.abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .map(|(i, _)| i)
            .unwrap_or(0);
        if normalized[dominant] < 0.0 {
            for w in &mut normalized {
                *w = -*w;
            }
            for v in &mut scores[b] {
                *v = -*v;
            }
        }
        for (&idx, &w) in block.item_indices.iter().zip(&normalized) {
            outer_weights.push((standardized.items[idx].clone(), w));
        }
    }

    Ok(LatentScores {
        latents: blocks.into_iter().map(|b| b.latent).collect(),
        scores,
        outer_weights,
        converged,
        iterations,
    })
}

/// Inner approximation: one proxy column per latent from its adjacent latents.
fn inner_proxies(
    spec: &SurveySpec,
    blocks: &[Block],
    adj: &[Vec<usize>],
    scores: &[Vec<f64>],
    scheme: InnerScheme,
) -> Result<Vec<Vec<f64>>, PlsError> {
    let rows = scores[0].len();
    let latent_index = |name: &str| {
        spec.latents
            .iter()
            .position(|l| l.name == name)
            .expect("validated spec")
    };
    let mut proxies = Vec::with_capacity(blocks.len());
    for (j, block) in blocks.iter().enumerate() {
        let mut inner_weights = vec![0.0; blocks.len()];
        match scheme {
            InnerScheme::Centroid => {
                for &i in &adj[j] {
                    inner_weights[i] = pearson(&scores[i], &scores[j]).signum();
                }
            }
            InnerScheme::Factorial => {
                for &i in &adj[j] {
                    inner_weights[i] = pearson(&scores[i], &scores[j]);
                }
            }
            InnerScheme::Path => {
                let predecessor_idx: Vec<usize> = spec
                    .predecessors(&block.latent)
                    .iter()
                    .map(|name| latent_index(name))
                    .collect();
                if !predecessor_idx.is_empty() {
                    let cols: Vec<&[f64]> = predecessor_idx
                        .iter()
                        .map(|&i| scores[i].as_slice())
                        .collect();
                    let (coefficients, _) = ols(&cols, &scores[j])
                        .ok_or_else(|| PlsError::SingularPredictors(block.latent.clone()))?;
                    for (&i, &c) in predecessor_idx.iter().zip(&coefficients) {
                        inner_weights[i] = c;
                    }
                }
                for &i in &adj[j] {
                    if !predecessor_idx.contains(&i) {
                        inner_weights[i] = pearson(&scores[i], &scores[j]);
                    }
                }
            }
        }
        let mut proxy = vec![0.0; rows];
        for (i, &w) in inner_weights.iter().enumerate() {
            if w != 0.0 {
                for (acc, &v) in proxy.iter_mut().zip(&scores[i]) {
                    *acc += w * v;
                }
            }
        }
        proxies.push(proxy);
    }
    Ok(proxies)
}

/// Latent score estimation from validated Likert responses.
pub fn estimate_scores(
    data: &ResponseMatrix,
    spec: &SurveySpec,
    options: &PlsOptions,
) -> Result<LatentScores, PlsError> {
    estimate_scores_data(&Dataset::from_matrix(data), spec, options)
}

/// Structural regressions: each endogenous latent's score column regressed on
/// its predecessors' columns; one coefficient per declared path, one R² per
/// endogenous latent.
pub fn path_coefficients(
    scores: &LatentScores,
    spec: &SurveySpec,
) -> Result<PathEstimates, PlsError> {
    let mut paths: Vec<PathCoefficient> = spec
        .paths
        .iter()
        .map(|p| PathCoefficient {
            from: p.from.clone(),
            to: p.to.clone(),
            coefficient: f64::NAN,
        })
        .collect();
    let mut r_squared = Vec::new();
    for endogenous in spec.endogenous_latents() {
        let predecessors = spec.predecessors(&endogenous.name);
        let y = scores
            .score(&endogenous.name)
            .ok_or_else(|| PlsError::MissingBlock {
                latent: endogenous.name.clone(),
            })?;
        let cols: Vec<&[f64]> = predecessors
            .iter()
            .map(|name| {
                scores.score(name).ok_or_else(|| PlsError::MissingBlock {
                    latent: (*name).to_string(),
                })
            })
            .collect::<Result<_, _>>()?;
        let (coefficients, r2) = ols(&cols, y)
            .ok_or_else(|| PlsError::SingularPredictors(endogenous.name.clone()))?;
        for (name, coefficient) in predecessors.iter().zip(coefficients) {
            let slot = paths
                .iter_mut()
                .find(|p| p.from == *name && p.to == endogenous.name)
                .expect("path exists by construction");
            slot.coefficient = coefficient;
        }
        r_squared.push((endogenous.name.clone(), r2));
    }
    Ok(PathEstimates { paths, r_squared })
}
