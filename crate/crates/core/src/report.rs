//! Report emission: path-coefficient, divergence, distance, and consistency
//! tables in markdown, CSV, or JSON, plus KDE curve files and the run
//! manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::pipeline::{PipelineError, ReportBundle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl ReportFormat {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "markdown" | "md" => Some(ReportFormat::Markdown),
            "csv" => Some(ReportFormat::Csv),
            "json" => Some(ReportFormat::Json),
            _ => None,
        }
    }

    fn extension(&self) -> &'static str {
        match self {
            ReportFormat::Markdown => "md",
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

/// A rectangular table: header row plus body rows, rendered to any format.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    footnotes: Vec<String>,
}

impl Table {
    fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("| {} |\n", self.header.join(" | ")));
        out.push_str(&format!(
            "|{}\n",
            " --- |".repeat(self.header.len())
        ));
        for row in &self.rows {
            out.push_str(&format!("| {} |\n", row.join(" | ")));
        }
        for note in &self.footnotes {
            out.push_str(&format!("\n{note}\n"));
        }
        out
    }

    fn to_csv(&self) -> String {
        let quote = |cell: &str| {
            if cell.contains(',') || cell.contains('"') {
                format!("\"{}\"", cell.replace('"', "\"\""))
            } else {
                cell.to_string()
            }
        };
        let mut out = String::new();
        out.push_str(
            &self
                .header
                .iter()
                .map(|c| quote(c))
                .collect::<Vec<_>>()
                .join(","),
        );
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.iter().map(|c| quote(c)).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }

    fn to_json(&self) -> String {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|row| {
                let object: serde_json::Map<String, serde_json::Value> = self
                    .header
                    .iter()
                    .zip(row)
                    .map(|(key, value)| (key.clone(), json!(value)))
                    .collect();
                serde_json::Value::Object(object)
            })
            .collect();
        serde_json::to_string_pretty(&json!({
            "rows": rows,
            "footnotes": self.footnotes,
        }))
        .expect("table serializes")
    }

    fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Markdown => self.to_markdown(),
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Json => self.to_json(),
        }
    }
}

const SIGNIFICANCE_NOTE: &str = "Bootstrap SD in parentheses. \
*: p < 0.05, **: p < 0.01, ***: p < 0.001 (two-sided normal approximation on the bootstrap z).";

fn path_table(bundle: &ReportBundle) -> Table {
    let mut header = vec!["Path".to_string(), "Human".to_string()];
    header.extend(bundle.approaches.iter().map(|a| a.approach.name().to_string()));
    let rows = bundle
        .human
        .estimates
        .paths
        .iter()
        .enumerate()
        .map(|(idx, path)| {
            let mut row = vec![
                format!("{} -> {}", path.from, path.to),
                bundle.human.cell(idx),
            ];
            row.extend(bundle.approaches.iter().map(|a| a.pls.cell(idx)));
            row
        })
        .collect();
    let mut footnotes = vec![SIGNIFICANCE_NOTE.to_string()];
    for report in &bundle.approaches {
        if report.degraded {
            footnotes.push(format!(
                "Degraded: approach {} lost more than 10% of respondents ({} failed).",
                report.approach,
                report.failed_respondents.len()
            ));
        }
    }
    Table {
        header,
        rows,
        footnotes,
    }
}

fn metric_table(
    target_items: &[String],
    columns: &[(String, &crate::metrics::DistributionReport)],
    metric: fn(&crate::metrics::ItemMetrics) -> f64,
    mean: fn(&crate::metrics::DistributionReport) -> f64,
) -> Table {
    let mut header = vec!["Item".to_string()];
    header.extend(columns.iter().map(|(name, _)| name.clone()));
    let mut rows = Vec::new();
    for (item_idx, item) in target_items.iter().enumerate() {
        let mut row = vec![item.clone()];
        for (_, report) in columns {
            row.push(format!("{:.4}", metric(&report.items[item_idx])));
        }
        rows.push(row);
    }
    let mut mean_row = vec!["Mean".to_string()];
    for (_, report) in columns {
        mean_row.push(format!("{:.4}", mean(report)));
    }
    rows.push(mean_row);
    Table {
        header,
        rows,
        footnotes: vec!["Items weighted equally in the mean.".to_string()],
    }
}

fn consistency_table(columns: &[(String, &crate::metrics::DistributionReport)]) -> Table {
    let mut header = vec![String::new()];
    header.extend(columns.iter().map(|(name, _)| name.clone()));
    let mut row = vec!["Mean".to_string()];
    for (_, report) in columns {
        row.push(format!("{:.2}%", report.consistency_pct));
    }
    Table {
        header,
        rows: vec![row],
        footnotes: vec![
            "Share of respondent-item cells in the same agreement bin \
             (disagree / neutral / agree), pooled over all cells."
                .to_string(),
        ],
    }
}

fn distribution_columns(
    bundle: &ReportBundle,
) -> Vec<(String, &crate::metrics::DistributionReport)> {
    bundle
        .approaches
        .iter()
        .map(|a| (a.approach.name().to_string(), &a.distribution))
        .collect()
}

/// Renders the three distribution tables (JSD, Wasserstein, consistency) for
/// arbitrary named comparison columns.
pub fn distribution_tables(
    target_items: &[String],
    columns: &[(String, &crate::metrics::DistributionReport)],
    format: ReportFormat,
) -> Vec<(&'static str, String)> {
    vec![
        (
            "jsd",
            metric_table(target_items, columns, |m| m.jsd, |d| d.mean_jsd).render(format),
        ),
        (
            "wasserstein",
            metric_table(target_items, columns, |m| m.wasserstein, |d| d.mean_wasserstein)
                .render(format),
        ),
        ("consistency", consistency_table(columns).render(format)),
    ]
}

fn write(path: &Path, content: &str, written: &mut Vec<PathBuf>) -> Result<(), PipelineError> {
    std::fs::write(path, content)?;
    written.push(path.to_path_buf());
    Ok(())
}

/// Writes every report artifact into `out`: the four tables in the chosen
/// format, per-item KDE curve CSVs for the human sample and each approach,
/// generated matrices, and the run manifest. Returns the written paths.
pub fn emit_report(
    bundle: &ReportBundle,
    format: ReportFormat,
    out: &Path,
) -> Result<Vec<PathBuf>, PipelineError> {
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let ext = format.extension();

    write(
        &out.join(format!("path_coefficients.{ext}")),
        &path_table(bundle).render(format),
        &mut written,
    )?;
    let columns = distribution_columns(bundle);
    for (name, content) in distribution_tables(&bundle.target_items, &columns, format) {
        write(&out.join(format!("{name}.{ext}")), &content, &mut written)?;
    }

    let kde_dir = out.join("kde");
    std::fs::create_dir_all(&kde_dir)?;
    for report in &bundle.approaches {
        for curves in &report.distribution.curves {
            let mut generated = String::from("x,density\n");
            for (x, density) in &curves.generated {
                generated.push_str(&format!("{x},{density}\n"));
            }
            write(
                &kde_dir.join(format!("{}_{}.csv", report.approach, curves.item)),
                &generated,
                &mut written,
            )?;
        }
    }
    // the human curves are identical across approaches; take the first
    if let Some(report) = bundle.approaches.first() {
        for curves in &report.distribution.curves {
            let mut human = String::from("x,density\n");
            for (x, density) in &curves.human {
                human.push_str(&format!("{x},{density}\n"));
            }
            write(
                &kde_dir.join(format!("human_{}.csv", curves.item)),
                &human,
                &mut written,
            )?;
        }
    }

    for report in &bundle.approaches {
        write(
            &out.join(format!("generated_{}.csv", report.approach)),
            &report.generated_csv,
            &mut written,
        )?;
    }

    write(
        &out.join("manifest.json"),
        &serde_json::to_string_pretty(&bundle.manifest)?,
        &mut written,
    )?;
    if format == ReportFormat::Json {
        write(
            &out.join("report.json"),
            &serde_json::to_string_pretty(bundle)?,
            &mut written,
        )?;
    }
    Ok(written)
}
