//! JSON and long-form CSV output.

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

use crate::config::RunConfig;
use crate::sim::{CostReport, RankEntry, SweepResult};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

/// Everything a run produced, plus the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub config: RunConfig,
    pub config_digest: String,
    pub reports: Vec<CostReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ranking: Option<Ranking>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub by_energy: Vec<RankEntry>,
    pub by_latency: Vec<RankEntry>,
}

impl RunOutput {
    pub fn single(config: &RunConfig, report: CostReport) -> Self {
        RunOutput {
            config: config.clone(),
            config_digest: config.digest(),
            reports: vec![report],
            ranking: None,
        }
    }

    pub fn sweep(config: &RunConfig, sweep: SweepResult) -> Self {
        RunOutput {
            config: config.clone(),
            config_digest: config.digest(),
            reports: sweep.reports,
            ranking: Some(Ranking {
                by_energy: sweep.by_energy,
                by_latency: sweep.by_latency,
            }),
        }
    }
}

pub const CSV_HEADER: [&str; 6] = [
    "dataflow",
    "phase",
    "stage_label",
    "operator_class",
    "metric",
    "value",
];

/// Metrics emitted for every stage row.
pub const STAGE_METRICS: [&str; 4] = [
    "cycles",
    "compute_energy_j",
    "memory_energy_j",
    "total_energy_j",
];

pub fn to_json(out: &RunOutput) -> Result<String, ReportError> {
    Ok(serde_json::to_string_pretty(out)? + "\n")
}

pub fn to_csv(out: &RunOutput) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    let mut row = |df: &str, phase: &str, label: &str, class: &str, metric: &str, value: String| {
        w.write_record([df, phase, label, class, metric, value.as_str()])
    };
    for r in &out.reports {
        let df = r.dataflow.as_str();
        for (lat, en) in r.latency.stages.iter().zip(&r.energy.stages) {
            let (phase, class) = (en.phase.as_str(), en.class.as_str());
            row(df, phase, &en.label, class, "cycles", lat.cycles.to_string())?;
            row(df, phase, &en.label, class, "compute_energy_j", en.compute_j.to_string())?;
            row(df, phase, &en.label, class, "memory_energy_j", en.memory_j.to_string())?;
            row(df, phase, &en.label, class, "total_energy_j", en.total_j.to_string())?;
        }
        for c in &r.energy.cells {
            let (phase, class) = (c.phase.as_str(), c.class.as_str());
            row(df, phase, "TOTAL", class, "compute_energy_j", c.compute_j.to_string())?;
            row(df, phase, "TOTAL", class, "memory_energy_j", c.memory_j.to_string())?;
            row(df, phase, "TOTAL", class, "total_energy_j", c.total_j.to_string())?;
        }
        for p in &r.latency.phases {
            row(df, p.phase.as_str(), "TOTAL", "ALL", "cycles", p.cycles.to_string())?;
        }
        let summary = [
            ("total_cycles", r.latency.total_cycles.to_string()),
            ("total_energy_j", r.energy.grand_total_j.to_string()),
            ("utilization", r.latency.utilization.to_string()),
            ("mm_utilization", r.latency.mm_utilization.to_string()),
            ("watts", r.power.watts.to_string()),
            ("tflops", r.power.tflops.to_string()),
            ("tflops_per_watt", r.power.tflops_per_watt.to_string()),
        ];
        for (metric, value) in summary {
            row(df, "ALL", "TOTAL", "ALL", metric, value)?;
        }
        if let Some(rk) = &out.ranking {
            for (metric, list) in [("energy_rank", &rk.by_energy), ("latency_rank", &rk.by_latency)] {
                if let Some(e) = list.iter().find(|e| e.dataflow == r.dataflow) {
                    row(df, "ALL", "TOTAL", "ALL", metric, e.rank.to_string())?;
                }
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn render(out: &RunOutput, format: Format) -> Result<String, ReportError> {
    match format {
        Format::Json => to_json(out),
        Format::Csv => to_csv(out),
    }
}

pub fn emit_report(out: &RunOutput, format: Format, path: &Path) -> Result<(), ReportError> {
    let text = render(out, format)?;
    let io = |source| ReportError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(text.as_bytes()).map_err(io)?;
    Ok(())
}
