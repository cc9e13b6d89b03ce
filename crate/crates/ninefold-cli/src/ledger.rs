//! Per-service cost accounting. Budget enforcement is advisory: a run that
//! projects past its ceiling completes and carries a warning in its report.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LedgerEntry {
    pub service: String,
    pub calls: u64,
    pub est_usd: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CostLedger {
    entries: Vec<LedgerEntry>,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge(&mut self, service: &str, calls: u64, est_usd: f64) {
        debug_assert!(est_usd >= 0.0);
        if let Some(entry) = self.entries.iter_mut().find(|e| e.service == service) {
            entry.calls += calls;
            entry.est_usd += est_usd;
        } else {
            self.entries.push(LedgerEntry {
                service: service.to_string(),
                calls,
                est_usd,
            });
        }
    }

    pub fn total_usd(&self) -> f64 {
        // fold, not sum: an empty sum would yield -0.0.
        self.entries.iter().fold(0.0, |acc, e| acc + e.est_usd)
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    /// Projected cost per 1,000 prompts at the observed average.
    pub fn projected_per_1000(&self, prompt_count: usize) -> f64 {
        if prompt_count == 0 {
            return 0.0;
        }
        self.total_usd() / prompt_count as f64 * 1000.0
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&serde_json::to_string(entry)?);
            out.push('\n');
        }
        std::fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))
    }
}
