//! Report assembly and rendering: a machine-readable summary (JSON), a
//! per-aspect/core/hard/drop table with role-conditioned rankings (text),
//! and an optional static SVG plot.

use anyhow::Result;
use serde::{Deserialize, Serialize};

use ninefold::ontology::Aspect;
use ninefold::tensor::{EvaluationTensor, ModelReport, SetTag};

use crate::ledger::{CostLedger, LedgerEntry};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub run_id: String,
    pub config_hash: String,
    pub records: usize,
    pub failed_cells: usize,
    pub models: Vec<ModelReport>,
    /// Role token -> models best-first.
    pub role_rankings: std::collections::BTreeMap<String, Vec<String>>,
    pub cost: CostSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostSummary {
    pub total_usd: f64,
    pub projected_per_1000: f64,
    pub budget_per_1000: f64,
    pub budget_warning: Option<String>,
    pub entries: Vec<LedgerEntry>,
}

impl Summary {
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        run_id: &str,
        config_hash: &str,
        tensor: &EvaluationTensor,
        ledger: &CostLedger,
        projected_per_1000: f64,
        budget_per_1000: f64,
        budget_warning: Option<String>,
        records: usize,
        failed_cells: usize,
    ) -> Result<Self> {
        let mut models = Vec::new();
        for model in tensor.models() {
            match tensor.model_report(&model) {
                Ok(report) => models.push(report),
                Err(e) => anyhow::bail!("no aggregable data for model `{model}`: {e}"),
            }
        }
        models.sort_by(|a, b| {
            let ka = a.core_score.unwrap_or(-1.0);
            let kb = b.core_score.unwrap_or(-1.0);
            kb.total_cmp(&ka).then(a.model.cmp(&b.model))
        });
        let mut role_rankings = std::collections::BTreeMap::new();
        for role in tensor.ontology().roles() {
            if let Ok(ranking) = tensor.role_weighted_rank(&role.token, SetTag::Core) {
                role_rankings.insert(
                    role.token.as_str().to_string(),
                    ranking.into_iter().map(|(m, _)| m).collect(),
                );
            }
        }
        Ok(Self {
            run_id: run_id.to_string(),
            config_hash: config_hash.to_string(),
            records,
            failed_cells,
            models,
            role_rankings,
            cost: CostSummary {
                total_usd: ledger.total_usd(),
                projected_per_1000,
                budget_per_1000,
                budget_warning,
                entries: ledger.entries().to_vec(),
            },
        })
    }
}

fn fmt_cell(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{:5.1}", v * 100.0),
        None => format!("{:>5}", "-"),
    }
}

/// Render the summary as a plain-text table (scores scaled to 0-100, drops
/// in percent to one decimal).
pub fn render_text(summary: &Summary) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "run {}  (config {})\n",
        summary.run_id, summary.config_hash
    ));
    out.push_str(&format!(
        "records: {}   failed cells: {}\n\n",
        summary.records, summary.failed_cells
    ));

    let name_width = summary
        .models
        .iter()
        .map(|m| m.model.len())
        .max()
        .unwrap_or(5)
        .max(5);
    out.push_str(&format!("{:<name_width$}", "model"));
    for aspect in Aspect::ALL {
        out.push_str(&format!(" {:>5}", aspect.token()));
    }
    out.push_str(&format!(" {:>5} {:>5} {:>6}\n", "Core", "Hard", "Drop%"));
    for model in &summary.models {
        out.push_str(&format!("{:<name_width$}", model.model));
        for aspect in Aspect::ALL {
            out.push_str(&format!(
                " {}",
                fmt_cell(model.aspect_means_core.get(&aspect).copied())
            ));
        }
        out.push_str(&format!(" {}", fmt_cell(model.core_score)));
        out.push_str(&format!(" {}", fmt_cell(model.hard_score)));
        match model.robustness_drop_pct {
            Some(drop) => out.push_str(&format!(" {drop:6.1}\n")),
            None => out.push_str(&format!(" {:>6}\n", "-")),
        }
    }

    out.push_str("\nrole-conditioned rankings (core set):\n");
    for (role, ranking) in &summary.role_rankings {
        out.push_str(&format!("  {role}: {}\n", ranking.join(" > ")));
    }

    // Aggregate-only summaries carry no ledger; skip the cost block.
    if !summary.cost.entries.is_empty() || summary.cost.budget_per_1000 > 0.0 {
        out.push_str(&format!(
            "\ncost: ${:.4} total, ${:.4} projected per 1,000 prompts (budget ${:.4})\n",
            summary.cost.total_usd, summary.cost.projected_per_1000, summary.cost.budget_per_1000
        ));
    }
    if let Some(warning) = &summary.cost.budget_warning {
        out.push_str(&format!("WARNING: {warning}\n"));
    }
    out
}

/// Minimal static bar chart of core scores, one bar per model.
pub fn render_core_svg(summary: &Summary) -> String {
    let bar_height = 22;
    let gap = 6;
    let label_width = 160;
    let chart_width = 420;
    let height = (bar_height + gap) * summary.models.len().max(1) + 30;
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{height}\" font-family=\"monospace\" font-size=\"12\">\n",
        label_width + chart_width + 60
    ));
    for (i, model) in summary.models.iter().enumerate() {
        let y = 15 + i * (bar_height + gap);
        let core = model.core_score.unwrap_or(0.0);
        let w = (core * chart_width as f64).round() as usize;
        out.push_str(&format!(
            "  <text x=\"4\" y=\"{}\">{}</text>\n",
            y + bar_height - 6,
            model.model
        ));
        out.push_str(&format!(
            "  <rect x=\"{label_width}\" y=\"{y}\" width=\"{w}\" height=\"{bar_height}\" fill=\"#4a7fb5\"/>\n"
        ));
        out.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\">{:.1}</text>\n",
            label_width + w + 6,
            y + bar_height - 6,
            core * 100.0
        ));
    }
    out.push_str("</svg>\n");
    out
}
