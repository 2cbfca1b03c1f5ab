//! File formats. CSV reals carry 6 significant digits; JSON summaries keep
//! full precision.

use std::path::Path;

use fedcomm_core::gamma::GammaReport;
use fedcomm_core::{Dataset, FederatedConfig, PartitionPlan, RoundRecord, RunResult};
use serde::Serialize;

use crate::CliError;

pub const METRICS_HEADER: [&str; 8] = [
    "round",
    "strategy",
    "test_accuracy",
    "test_loss",
    "bits_up",
    "bits_down",
    "participants",
    "uploads_skipped",
];

pub const GAMMA_HEADER: [&str; 7] = [
    "mode",
    "s",
    "trials",
    "gamma_mean",
    "gamma_p25",
    "gamma_p50",
    "gamma_p75",
];

/// Accuracy level used for the rounds-to-target comparison column.
pub const COMPARE_TARGET: f64 = 0.8;

/// `x` with 6 significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&magnitude) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

fn opt(x: Option<f64>) -> String {
    x.map(sig6).unwrap_or_default()
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Output {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, bytes).map_err(|source| CliError::Output {
        path: path.to_path_buf(),
        source,
    })
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>, CliError> {
    w.into_inner()
        .map_err(|e| CliError::Csv(e.into_error().into()))
}

/// Long-format metrics: one row per round per labelled run.
pub fn metrics_csv(runs: &[(&str, &[RoundRecord])]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRICS_HEADER)?;
    for (label, records) in runs {
        for r in *records {
            w.write_record([
                r.round.to_string(),
                label.to_string(),
                opt(r.test_accuracy),
                opt(r.test_loss),
                r.bits_up.to_string(),
                r.bits_down.to_string(),
                r.participants.len().to_string(),
                r.uploads_skipped.to_string(),
            ])?;
        }
    }
    finish(w)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub strategy: String,
    pub rounds_run: usize,
    pub final_accuracy: Option<f64>,
    pub final_loss: Option<f64>,
    pub target_accuracy: Option<f64>,
    pub converged_at: Option<usize>,
    pub rounds_to_80: Option<usize>,
    pub total_bits_up: u64,
    pub total_bits_down: u64,
    pub uploads_skipped: usize,
    pub stalled_rounds: usize,
    pub config: FederatedConfig,
}

impl RunSummary {
    pub fn new(name: &str, run: &RunResult) -> Self {
        let last = run.records.iter().rev().find(|r| r.test_accuracy.is_some());
        Self {
            name: name.to_string(),
            strategy: run.strategy().to_string(),
            rounds_run: run.records.last().map_or(0, |r| r.round),
            final_accuracy: last.and_then(|r| r.test_accuracy),
            final_loss: last.and_then(|r| r.test_loss),
            target_accuracy: run.config.target_accuracy,
            converged_at: run.converged_at,
            rounds_to_80: run.rounds_to(COMPARE_TARGET),
            total_bits_up: run.total_bits_up(),
            total_bits_down: run.total_bits_down(),
            uploads_skipped: run.records.iter().map(|r| r.uploads_skipped).sum(),
            stalled_rounds: run.records.iter().filter(|r| r.stalled).count(),
            config: run.config.clone(),
        }
    }
}

pub fn summary_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("summaries are plain data");
    out.push(b'\n');
    out
}

/// One row per run: rounds to target and total bits, plus how many times
/// fewer rounds than federated averaging each run needs to reach 80%.
pub fn compare_table(rows: &[(String, RunSummary)]) -> Result<Vec<u8>, CliError> {
    let fedavg_80 = rows
        .iter()
        .find(|(_, s)| s.strategy == "fedavg")
        .and_then(|(_, s)| s.rounds_to_80);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "name",
        "strategy",
        "final_accuracy",
        "rounds_to_target",
        "rounds_to_80",
        "fedavg_over_this_rounds_to_80",
        "total_bits_up",
        "total_bits_down",
        "uploads_skipped",
    ])?;
    for (label, s) in rows {
        let ratio = match (fedavg_80, s.rounds_to_80) {
            (Some(a), Some(b)) if b > 0 => sig6(a as f64 / b as f64),
            _ => String::new(),
        };
        let opt_usize = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([
            label.clone(),
            s.strategy.clone(),
            opt(s.final_accuracy),
            opt_usize(s.converged_at),
            opt_usize(s.rounds_to_80),
            ratio,
            s.total_bits_up.to_string(),
            s.total_bits_down.to_string(),
            s.uploads_skipped.to_string(),
        ])?;
    }
    finish(w)
}

pub fn gamma_csv(report: &GammaReport) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(GAMMA_HEADER)?;
    for r in &report.rows {
        w.write_record([
            r.mode.name().to_string(),
            r.s.to_string(),
            r.trials.to_string(),
            sig6(r.gamma_mean),
            sig6(r.gamma_p25),
            sig6(r.gamma_p50),
            sig6(r.gamma_p75),
        ])?;
    }
    finish(w)
}

/// Per-client label counts and the number of distinct labels held.
pub fn histogram_csv(plan: &PartitionPlan, data: &Dataset) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["client".to_string(), "samples".to_string()];
    header.extend((0..data.class_count()).map(|c| format!("label_{c}")));
    header.push("distinct_labels".into());
    w.write_record(&header)?;
    for (client, hist) in plan.clients.iter().zip(plan.label_histograms(data)) {
        let mut row = vec![client.id.to_string(), client.indices.len().to_string()];
        row.extend(hist.iter().map(usize::to_string));
        row.push(hist.iter().filter(|&&c| c > 0).count().to_string());
        w.write_record(&row)?;
    }
    finish(w)
}
