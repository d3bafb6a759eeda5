use serde::{Deserialize, Serialize};

use super::{EpisodeResult, InteractionKind, MetricsError, MetricsReport};
use crate::preferences::PreferenceTable;

pub const METRIC_NAMES: [&str; 8] = ["ES", "OS", "SOS", "RQ", "MC", "MOC", "PPE", "steps"];

/// Among episodes with at least `k` placements, the fraction whose first `k`
/// placements each left the placed object Correct. `None` when no episode
/// has `k` placements or `k == 0`.
pub fn es_at_k(results: &[EpisodeResult], table: &PreferenceTable, k: usize) -> Option<f64> {
    if k == 0 {
        return None;
    }
    let mut eligible = 0usize;
    let mut good = 0usize;
    for r in results {
        let placements: Vec<bool> = r
            .interactions
            .iter()
            .filter(|i| i.kind == InteractionKind::Place)
            .map(|i| {
                let cat = r.objects.iter().find(|o| o.id == i.object).map_or("", |o| o.category.as_str());
                table.c_or(cat, &i.at.room, &i.at.category) > 0.5
            })
            .collect();
        if placements.len() >= k {
            eligible += 1;
            good += usize::from(placements[..k].iter().all(|c| *c));
        }
    }
    (eligible > 0).then(|| good as f64 / eligible as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub name: String,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub label: String,
    pub n: usize,
    pub metrics: Vec<MetricSummary>,
}

/// Mean and standard error (sample standard deviation over √n; 0 for a
/// single report) of every metric.
pub fn aggregate(label: &str, reports: &[MetricsReport]) -> Result<AggregateRow, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    let n = reports.len() as f64;
    let metrics = METRIC_NAMES
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let xs: Vec<f64> = reports.iter().map(|r| r.values()[k]).collect();
            let mean = xs.iter().sum::<f64>() / n;
            let stderr = if reports.len() > 1 {
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
                var.sqrt() / n.sqrt()
            } else {
                0.0
            };
            MetricSummary { name: name.to_string(), mean, stderr }
        })
        .collect();
    Ok(AggregateRow { label: label.to_string(), n: reports.len(), metrics })
}

impl AggregateRow {
    /// Aligned plain-text table, one row per aggregate.
    pub fn render_text(rows: &[AggregateRow]) -> String {
        let label_w = rows.iter().map(|r| r.label.len()).chain([5]).max().unwrap_or(5);
        let mut out = format!("{:<label_w$} {:>5}", "label", "n");
        for name in METRIC_NAMES {
            out.push_str(&format!(" {name:>15}"));
        }
        out.push('\n');
        for r in rows {
            out.push_str(&format!("{:<label_w$} {:>5}", r.label, r.n));
            for m in &r.metrics {
                out.push_str(&format!(" {:>15}", format!("{:.2}±{:.2}", m.mean, m.stderr)));
            }
            out.push('\n');
        }
        out
    }

    pub fn render_csv(rows: &[AggregateRow]) -> String {
        let mut out = String::from("label,n");
        for name in METRIC_NAMES {
            out.push_str(&format!(",{name}_mean,{name}_stderr"));
        }
        out.push('\n');
        for r in rows {
            out.push_str(&format!("{},{}", r.label, r.n));
            for m in &r.metrics {
                out.push_str(&format!(",{},{}", m.mean, m.stderr));
            }
            out.push('\n');
        }
        out
    }

    pub fn get(&self, name: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.name == name)
    }
}
