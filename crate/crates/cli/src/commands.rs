use std::path::{Path, PathBuf};

use fedcomm_core::engine::{client_partition, run_federated};
use fedcomm_core::gamma::{
    gamma_estimate, gamma_report, pretrained_snapshot, GammaReport, ProbeMode, TrialPlan,
};
use fedcomm_core::nn::{init_model, ModelArch, TrainSettings};
use fedcomm_core::rng::{derive, Stream};
use fedcomm_core::{PartitionPlan, RunResult};
use serde::Serialize;

use crate::config::ExperimentSpec;
use crate::report::{
    compare_table, gamma_csv, histogram_csv, metrics_csv, summary_json, write_file, RunSummary,
};
use crate::CliError;

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const COMPARE_METRICS_FILE: &str = "compare_metrics.csv";
pub const COMPARE_SUMMARY_FILE: &str = "compare_summary.csv";
pub const GAMMA_FILE: &str = "gamma.csv";
pub const GAMMA_SUMMARY_FILE: &str = "gamma_summary.json";
pub const PARTITION_FILE: &str = "partition.json";
pub const HISTOGRAM_FILE: &str = "label_histogram.csv";

#[derive(Debug)]
pub struct RunOutput {
    pub metrics: PathBuf,
    pub summary: PathBuf,
    pub result: RunResult,
}

/// Runs one experiment and writes `metrics.csv` and `summary.json` to `out`.
pub fn cmd_run(spec: &ExperimentSpec, out: &Path) -> Result<RunOutput, CliError> {
    let cfg = spec.federated_config()?;
    let (train, test) = spec.load_data()?;
    let result = run_federated(&cfg, &train, &test)?;
    let metrics = out.join(METRICS_FILE);
    let summary = out.join(SUMMARY_FILE);
    let label = result.strategy().to_string();
    write_file(&metrics, &metrics_csv(&[(&label, &result.records)])?)?;
    write_file(
        &summary,
        &summary_json(&RunSummary::new(&spec.name, &result)),
    )?;
    Ok(RunOutput {
        metrics,
        summary,
        result,
    })
}

#[derive(Debug)]
pub struct CompareOutput {
    pub metrics: PathBuf,
    pub summary: PathBuf,
    pub runs: Vec<(String, RunResult)>,
}

/// Runs every spec on the same data and partition. Each run gets its own
/// subdirectory; the merged long-format CSV labels rows by strategy, or by
/// spec name when two specs share a strategy.
pub fn cmd_compare(specs: &[ExperimentSpec], out: &Path) -> Result<CompareOutput, CliError> {
    if specs.len() < 2 {
        return Err(CliError::Compare("at least two specs are needed".into()));
    }
    let first = &specs[0];
    for s in &specs[1..] {
        if s.resolved_data() != first.resolved_data() {
            return Err(CliError::Compare(format!(
                "{} and {} use different datasets",
                first.name, s.name
            )));
        }
        if s.partition != first.partition
            || s.federated.clients != first.federated.clients
            || s.seed != first.seed
        {
            return Err(CliError::Compare(format!(
                "{} and {} partition the data differently (partition, clients and seed must match)",
                first.name, s.name
            )));
        }
    }
    let mut names: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::Compare("spec names must be unique".into()));
    }
    let mut kinds: Vec<_> = specs.iter().map(|s| s.strategy.kind).collect();
    kinds.sort_by_key(|k| k.name());
    let by_name = kinds.windows(2).any(|w| w[0] == w[1]);

    let (train, test) = first.load_data()?;
    let mut runs = Vec::new();
    for spec in specs {
        let cfg = spec.federated_config()?;
        let result = run_federated(&cfg, &train, &test)?;
        let dir = out.join(&spec.name);
        write_file(
            &dir.join(METRICS_FILE),
            &metrics_csv(&[(result.strategy().name(), &result.records)])?,
        )?;
        write_file(
            &dir.join(SUMMARY_FILE),
            &summary_json(&RunSummary::new(&spec.name, &result)),
        )?;
        let label = if by_name {
            spec.name.clone()
        } else {
            result.strategy().to_string()
        };
        runs.push((label, result));
    }

    let merged: Vec<(&str, &[fedcomm_core::RoundRecord])> = runs
        .iter()
        .map(|(l, r)| (l.as_str(), r.records.as_slice()))
        .collect();
    let rows: Vec<(String, RunSummary)> = runs
        .iter()
        .zip(specs)
        .map(|((l, r), s)| (l.clone(), RunSummary::new(&s.name, r)))
        .collect();
    let metrics = out.join(COMPARE_METRICS_FILE);
    let summary = out.join(COMPARE_SUMMARY_FILE);
    write_file(&metrics, &metrics_csv(&merged)?)?;
    write_file(&summary, &compare_table(&rows)?)?;
    Ok(CompareOutput {
        metrics,
        summary,
        runs,
    })
}

#[derive(Debug, Serialize)]
struct GammaSummary<'a> {
    name: &'a str,
    kept_parameters: usize,
    rises_with_batch_size: Vec<(&'static str, bool)>,
}

#[derive(Debug)]
pub struct GammaOutput {
    pub csv: PathBuf,
    pub report: GammaReport,
}

/// Sign-agreement probe in both sampling modes on a briefly pretrained
/// model.
pub fn cmd_gamma(spec: &ExperimentSpec, out: &Path) -> Result<GammaOutput, CliError> {
    let cfg = spec.federated_config()?;
    let (train, _) = spec.load_data()?;
    let arch = ModelArch::mlp(train.dim(), &cfg.hidden_layers, train.class_count())?;
    let params = if spec.gamma.pretrain_epochs == 0 {
        init_model(&arch, derive(spec.seed, Stream::Init, 0, 0))
    } else {
        let settings = TrainSettings {
            epochs: spec.gamma.pretrain_epochs,
            batch_size: cfg.batch_size,
            eta: cfg.learning_rate,
        };
        pretrained_snapshot(&arch, &train, settings, spec.seed)?
    };
    let plan = TrialPlan::Random(spec.gamma.trials);
    let results = [ProbeMode::IidSample, ProbeMode::SingleClass]
        .into_iter()
        .map(|mode| {
            gamma_estimate(
                &params,
                &train,
                &spec.gamma.batch_sizes,
                plan,
                spec.seed,
                mode,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let report = gamma_report(&results);
    let csv = out.join(GAMMA_FILE);
    write_file(&csv, &gamma_csv(&report)?)?;
    let summary = GammaSummary {
        name: &spec.name,
        kept_parameters: results[0].kept_parameters,
        rises_with_batch_size: report.rises.iter().map(|(m, f)| (m.name(), *f)).collect(),
    };
    write_file(&out.join(GAMMA_SUMMARY_FILE), &summary_json(&summary))?;
    Ok(GammaOutput { csv, report })
}

#[derive(Debug)]
pub struct PartitionOutput {
    pub plan_file: PathBuf,
    pub histogram_file: PathBuf,
    pub plan: PartitionPlan,
}

/// Exports the client partition and its per-client label histogram.
pub fn cmd_partition(spec: &ExperimentSpec, out: &Path) -> Result<PartitionOutput, CliError> {
    let cfg = spec.federated_config()?;
    let (train, _) = spec.load_data()?;
    let (plan, data) = client_partition(&cfg, &train)?;
    let plan_file = out.join(PARTITION_FILE);
    let histogram_file = out.join(HISTOGRAM_FILE);
    write_file(&plan_file, plan.to_json().as_bytes())?;
    write_file(&histogram_file, &histogram_csv(&plan, &data)?)?;
    Ok(PartitionOutput {
        plan_file,
        histogram_file,
        plan,
    })
}
