//! Evaluation reports in JSON and table form, as fractions and percentages.

use std::collections::BTreeMap;

use boxfuse_core::EvalReport;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryAp {
    pub ap50: f64,
    pub ap50_95: f64,
    pub ap50_pct: f64,
    pub ap50_95_pct: f64,
}

/// JSON report for one detection set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub name: String,
    pub map50: f64,
    pub map50_95: f64,
    pub map50_pct: f64,
    pub map50_95_pct: f64,
    /// Keyed by category id.
    pub per_category_ap: BTreeMap<String, CategoryAp>,
    pub iou_thresholds: Vec<f64>,
    pub map_per_threshold: Vec<f64>,
}

fn pct(v: f64) -> f64 {
    v * 100.0
}

impl EvalSummary {
    pub fn from_report(name: &str, r: &EvalReport) -> Self {
        let per_category_ap = r
            .per_category_ap
            .iter()
            .map(|(cat, aps)| {
                let ap50 = r
                    .iou_thresholds
                    .iter()
                    .position(|&t| t == 0.5)
                    .map_or(f64::NAN, |k| aps[k]);
                let ap50_95 = aps.iter().sum::<f64>() / aps.len().max(1) as f64;
                (
                    cat.0.to_string(),
                    CategoryAp {
                        ap50,
                        ap50_95,
                        ap50_pct: pct(ap50),
                        ap50_95_pct: pct(ap50_95),
                    },
                )
            })
            .collect();
        Self {
            name: name.to_string(),
            map50: r.map50,
            map50_95: r.map50_95,
            map50_pct: pct(r.map50),
            map50_95_pct: pct(r.map50_95),
            per_category_ap,
            iou_thresholds: r.iou_thresholds.clone(),
            map_per_threshold: r.map_per_threshold.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

/// Markdown table with one row per detection set, in the style of a results table.
pub fn comparison_table(rows: &[EvalSummary]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(5);
    let mut out = format!("| {:width$} | mAP50 (%) | mAP50-95 (%) |\n", "Model");
    out.push_str(&format!(
        "|{}|-----------|--------------|\n",
        "-".repeat(width + 2)
    ));
    for r in rows {
        out.push_str(&format!(
            "| {:width$} | {:>9.2} | {:>12.2} |\n",
            r.name, r.map50_pct, r.map50_95_pct
        ));
    }
    out
}
