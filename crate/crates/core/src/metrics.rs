//! Distributional and individual-level comparison metrics between two Likert
//! response sets: Jensen-Shannon divergence, 1-D Wasserstein distance,
//! coarse-bin consistency, and Gaussian KDE curves.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::survey::{LikertScale, ResponseMatrix};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty response list")]
    EmptyInput,
    #[error("value {value} outside Likert range [{min}, {max}]")]
    OutOfRange { value: i32, min: i32, max: i32 },
    #[error("scale mismatch: [{0}, {1}] vs [{2}, {3}]")]
    ScaleMismatch(i32, i32, i32, i32),
    #[error("bandwidth must be positive, got {0}")]
    NonPositiveBandwidth(f64),
    #[error("respondent ids differ between the two matrices")]
    RespondentMismatch,
    #[error("item `{0}` is missing from one of the matrices")]
    ItemMismatch(String),
}

/// Response frequencies over every level of a Likert scale; zero-count levels
/// are retained so distributions over the same scale are always aligned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikertDistribution {
    pub scale: LikertScale,
    pub counts: Vec<u64>,
    pub probabilities: Vec<f64>,
}

impl LikertDistribution {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Counts responses per scale level.
pub fn likert_histogram(
    responses: &[i32],
    scale: LikertScale,
) -> Result<LikertDistribution, MetricsError> {
    if responses.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut counts = vec![0u64; scale.level_count()];
    for &value in responses {
        if !scale.contains(value) {
            return Err(MetricsError::OutOfRange {
                value,
                min: scale.min,
                max: scale.max,
            });
        }
        counts[(value - scale.min) as usize] += 1;
    }
    let total = responses.len() as f64;
    let probabilities = counts.iter().map(|&c| c as f64 / total).collect();
    Ok(LikertDistribution {
        scale,
        counts,
        probabilities,
    })
}

fn check_same_scale(
    p: &LikertDistribution,
    q: &LikertDistribution,
) -> Result<(), MetricsError> {
    if p.scale != q.scale {
        return Err(MetricsError::ScaleMismatch(
            p.scale.min,
            p.scale.max,
            q.scale.min,
            q.scale.max,
        ));
    }
    Ok(())
}

/// Jensen-Shannon divergence in base 2, so the result lies in [0, 1]:
/// 0 for identical distributions, 1 for disjoint supports.
pub fn jensen_shannon(
    p: &LikertDistribution,
    q: &LikertDistribution,
) -> Result<f64, MetricsError> {
    check_same_scale(p, q)?;
    let mut divergence = 0.0;
    for (&pk, &qk) in p.probabilities.iter().zip(&q.probabilities) {
        let mk = 0.5 * (pk + qk);
        // one commutative sum per level keeps JSD(P,Q) bit-equal to JSD(Q,P)
        let from_p = if pk > 0.0 { 0.5 * pk * (pk / mk).log2() } else { 0.0 };
        let from_q = if qk > 0.0 { 0.5 * qk * (qk / mk).log2() } else { 0.0 };
        divergence += from_p + from_q;
    }
    // guard against floating-point drift just outside [0, 1]
    Ok(divergence.clamp(0.0, 1.0))
}

/// First-order Wasserstein distance on the integer line with unit spacing:
/// the sum of absolute cumulative-distribution differences.
pub fn wasserstein(
    p: &LikertDistribution,
    q: &LikertDistribution,
) -> Result<f64, MetricsError> {
    check_same_scale(p, q)?;
    let mut cp = 0.0;
    let mut cq = 0.0;
    let mut distance = 0.0;
    let last = p.probabilities.len() - 1;
    for (k, (&pk, &qk)) in p.probabilities.iter().zip(&q.probabilities).enumerate() {
        if k == last {
            break;
        }
        cp += pk;
        cq += qk;
        distance += (cp - cq).abs();
    }
    Ok(distance)
}

/// Coarse agreement bin on a Likert scale: below the midpoint, at it, above it.
/// On a 1-7 scale this is disagreement (1-3), neutrality (4), agreement (5-7).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgreementBin {
    Disagree,
    Neutral,
    Agree,
}

pub fn agreement_bin(value: i32, scale: LikertScale) -> AgreementBin {
    let doubled_mid = scale.min + scale.max; // 2 * midpoint, stays integral
    match (2 * value).cmp(&doubled_mid) {
        std::cmp::Ordering::Less => AgreementBin::Disagree,
        std::cmp::Ordering::Equal => AgreementBin::Neutral,
        std::cmp::Ordering::Greater => AgreementBin::Agree,
    }
}

/// Percentage of respondent-item cells whose human and generated answers fall
/// in the same agreement bin, pooled over all cells.
pub fn consistency(
    human: &ResponseMatrix,
    generated: &ResponseMatrix,
    target_items: &[String],
) -> Result<f64, MetricsError> {
    let human_ids: BTreeSet<&str> = human.ids().into_iter().collect();
    let generated_ids: BTreeSet<&str> = generated.ids().into_iter().collect();
    if human_ids != generated_ids {
        return Err(MetricsError::RespondentMismatch);
    }
    let scale = human.spec().scale;
    let mut matched = 0u64;
    let mut total = 0u64;
    for respondent in human.respondents() {
        let other = generated
            .respondent(&respondent.id)
            .expect("id sets verified equal");
        for item in target_items {
            let h = respondent
                .answer(item)
                .ok_or_else(|| MetricsError::ItemMismatch(item.clone()))?;
            let g = other
                .answer(item)
                .ok_or_else(|| MetricsError::ItemMismatch(item.clone()))?;
            if agreement_bin(h, scale) == agreement_bin(g, scale) {
                matched += 1;
            }
            total += 1;
        }
    }
    if total == 0 {
        return Err(MetricsError::EmptyInput);
    }
    Ok(100.0 * matched as f64 / total as f64)
}

/// Silverman's rule-of-thumb bandwidth: `0.9 min(sd, IQR/1.34) n^(-1/5)`.
/// Falls back to 1.0 when the sample has no spread.
pub fn silverman_bandwidth(responses: &[i32]) -> f64 {
    let n = responses.len() as f64;
    if responses.len() < 2 {
        return 1.0;
    }
    let mean = responses.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let variance = responses
        .iter()
        .map(|&v| (f64::from(v) - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    let sd = variance.sqrt();

    let mut sorted: Vec<f64> = responses.iter().map(|&v| f64::from(v)).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quantile = |q: f64| -> f64 {
        let pos = q * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    };
    let iqr = quantile(0.75) - quantile(0.25);

    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * n.powf(-0.2);
    if h > 0.0 {
        h
    } else {
        1.0
    }
}

/// Evenly spaced evaluation points.
pub fn linspace(start: f64, stop: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![start];
    }
    let step = (stop - start) / (points - 1) as f64;
    (0..points).map(|i| start + step * i as f64).collect()
}

/// Default KDE grid for a scale: one unit of margin on each side, 0.05 spacing.
pub fn default_grid(scale: LikertScale) -> Vec<f64> {
    let start = f64::from(scale.min) - 1.0;
    let stop = f64::from(scale.max) + 1.0;
    let points = ((stop - start) / 0.05).round() as usize + 1;
    linspace(start, stop, points)
}

/// Gaussian-kernel density estimate evaluated on the grid.
pub fn kde_curve(
    responses: &[i32],
    bandwidth: f64,
    grid: &[f64],
) -> Result<Vec<(f64, f64)>, MetricsError> {
    if responses.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if bandwidth <= 0.0 {
        return Err(MetricsError::NonPositiveBandwidth(bandwidth));
    }
    let n = responses.len() as f64;
    let norm = 1.0 / (bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    let curve = grid
        .iter()
        .map(|&x| {
            let density = responses
                .iter()
                .map(|&xi| {
                    let u = (x - f64::from(xi)) / bandwidth;
                    norm * (-0.5 * u * u).exp()
                })
                .sum::<f64>()
                / n;
            (x, density)
        })
        .collect();
    Ok(curve)
}

/// JSD and Wasserstein for one target item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemMetrics {
    pub item: String,
    pub jsd: f64,
    pub wasserstein: f64,
}

/// KDE curves for one target item: the human sample and the generated sample
/// evaluated on the same grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemCurves {
    pub item: String,
    pub bandwidth_human: f64,
    pub bandwidth_generated: f64,
    pub human: Vec<(f64, f64)>,
    pub generated: Vec<(f64, f64)>,
}

/// Full distribution comparison between a human and a generated matrix over
/// the target items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub items: Vec<ItemMetrics>,
    pub mean_jsd: f64,
    pub mean_wasserstein: f64,
    pub consistency_pct: f64,
    pub curves: Vec<ItemCurves>,
}

/// Compares two matrices over the target items. Rows are restricted to the
/// intersection of respondent ids before any metric is computed; per-item
/// means weight items equally.
pub fn compare_matrices(
    human: &ResponseMatrix,
    generated: &ResponseMatrix,
    target_items: &[String],
    bandwidth_override: Option<f64>,
) -> Result<DistributionReport, MetricsError> {
    let shared: BTreeSet<String> = human
        .ids()
        .into_iter()
        .map(String::from)
        .collect::<BTreeSet<_>>()
        .intersection(&generated.ids().into_iter().map(String::from).collect())
        .cloned()
        .collect();
    if shared.is_empty() {
        return Err(MetricsError::RespondentMismatch);
    }
    let human = human
        .restrict_to_ids(&shared)
        .map_err(|_| MetricsError::RespondentMismatch)?;
    let generated = generated
        .restrict_to_ids(&shared)
        .map_err(|_| MetricsError::RespondentMismatch)?;
    let scale = human.spec().scale;
    let grid = default_grid(scale);

    let mut items = Vec::new();
    let mut curves = Vec::new();
    for item in target_items {
        let h_col = human.item_column(item);
        let g_col = generated.item_column(item);
        let h_dist = likert_histogram(&h_col, scale)?;
        let g_dist = likert_histogram(&g_col, scale)?;
        items.push(ItemMetrics {
            item: item.clone(),
            jsd: jensen_shannon(&h_dist, &g_dist)?,
            wasserstein: wasserstein(&h_dist, &g_dist)?,
        });
        let bw_h = bandwidth_override.unwrap_or_else(|| silverman_bandwidth(&h_col));
        let bw_g = bandwidth_override.unwrap_or_else(|| silverman_bandwidth(&g_col));
        curves.push(ItemCurves {
            item: item.clone(),
            bandwidth_human: bw_h,
            bandwidth_generated: bw_g,
            human: kde_curve(&h_col, bw_h, &grid)?,
            generated: kde_curve(&g_col, bw_g, &grid)?,
        });
    }
    let k = items.len() as f64;
    let mean_jsd = items.iter().map(|m| m.jsd).sum::<f64>() / k;
    let mean_wasserstein = items.iter().map(|m| m.wasserstein).sum::<f64>() / k;
    let consistency_pct = consistency(&human, &generated, target_items)?;
    Ok(DistributionReport {
        items,
        mean_jsd,
        mean_wasserstein,
        consistency_pct,
        curves,
    })
}
