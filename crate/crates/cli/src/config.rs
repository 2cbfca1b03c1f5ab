//! Experiment files: strict TOML, with the 100-client baseline defaults
//! for anything left out.
//!
//! ```toml
//! name = "fedavg-iid"
//! seed = 1
//!
//! [data]
//! source = "synthetic"   # or "idx" with train_images/train_labels/test_images/test_labels
//!
//! [federated]
//! rounds = 50
//!
//! [partition]
//! mode = "sorted"
//! shards_per_client = 1
//!
//! [strategy]
//! kind = "stc"
//! [strategy.stc]
//! k_frac = 0.01
//! ```

use std::path::{Path, PathBuf};

use fedcomm_core::data::{load_idx, synth_train_test};
use fedcomm_core::strategies::Bandwidth;
use fedcomm_core::{Dataset, FederatedConfig, PartitionSpec, StrategyConfig, StrategyKind};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Where outputs go unless `--out` is given; relative to the config file.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub data: DataSpec,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub federated: FederatedSpec,
    #[serde(default)]
    pub partition: PartitionSection,
    #[serde(default)]
    pub strategy: StrategySection,
    #[serde(default)]
    pub gamma: GammaSpec,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSpec {
    Synthetic {
        #[serde(default = "default_classes")]
        classes: usize,
        #[serde(default = "default_per_class")]
        per_class: usize,
        #[serde(default = "default_test_per_class")]
        test_per_class: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default)]
        seed: u64,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        /// Keep only the first `train_limit` training samples.
        #[serde(default)]
        train_limit: Option<usize>,
        #[serde(default)]
        test_limit: Option<usize>,
    },
}

fn default_classes() -> usize {
    10
}
fn default_per_class() -> usize {
    100
}
fn default_test_per_class() -> usize {
    50
}
fn default_dim() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Hidden widths; `[]` is logistic regression.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
}

fn default_hidden() -> Vec<usize> {
    vec![200]
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederatedSpec {
    pub clients: usize,
    pub participation: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub rounds: usize,
    pub target_accuracy: Option<f64>,
    pub eval_every: usize,
}

impl Default for FederatedSpec {
    fn default() -> Self {
        let d = FederatedConfig::default();
        Self {
            clients: d.n_clients,
            participation: d.participation,
            local_epochs: d.local_epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            rounds: d.rounds,
            target_accuracy: d.target_accuracy,
            eval_every: d.eval_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum PartitionSection {
    #[default]
    Iid,
    Sorted {
        #[serde(default = "default_shards")]
        shards_per_client: usize,
    },
}

fn default_shards() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategySection {
    pub kind: StrategyKind,
    pub stc: StcSpec,
    pub cmfl: CmflSpec,
    pub fedmmd: FedMmdSpec,
    pub feddropout: FedDropoutSpec,
    pub datashare: DatashareSpec,
    pub signsgd: SignSgdSpec,
}

impl Default for StrategySection {
    fn default() -> Self {
        let d = StrategyConfig::default();
        Self {
            kind: d.kind,
            stc: StcSpec { k_frac: d.k_frac },
            cmfl: CmflSpec {
                threshold: d.cmfl_threshold,
            },
            fedmmd: FedMmdSpec {
                lambda: d.mmd_lambda,
                bandwidth: BandwidthSpec::Named("median".into()),
            },
            feddropout: FedDropoutSpec {
                rate: d.dropout_rate,
            },
            datashare: DatashareSpec {
                gamma: d.shared_gamma,
                alpha: d.alpha,
                warmstart_epochs: d.warmstart_epochs,
            },
            signsgd: SignSgdSpec {
                downstream: d.sign_downstream,
            },
        }
    }
}

macro_rules! block_default {
    ($ty:ident, $field:ident) => {
        impl Default for $ty {
            fn default() -> Self {
                StrategySection::default().$field
            }
        }
    };
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StcSpec {
    pub k_frac: f64,
}
block_default!(StcSpec, stc);

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CmflSpec {
    pub threshold: f64,
}
block_default!(CmflSpec, cmfl);

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FedMmdSpec {
    pub lambda: f64,
    pub bandwidth: BandwidthSpec,
}
block_default!(FedMmdSpec, fedmmd);

/// `"median"` or a fixed positive kernel width.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum BandwidthSpec {
    Named(String),
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FedDropoutSpec {
    pub rate: f64,
}
block_default!(FedDropoutSpec, feddropout);

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatashareSpec {
    /// Fraction of the training set moved into the shared pool.
    pub gamma: f64,
    /// Fraction of the pool copied to every client.
    pub alpha: f64,
    pub warmstart_epochs: usize,
}
block_default!(DatashareSpec, datashare);

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignSgdSpec {
    pub downstream: bool,
}
block_default!(SignSgdSpec, signsgd);

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GammaSpec {
    pub batch_sizes: Vec<usize>,
    pub trials: usize,
    /// Epochs of plain SGD on the training set before probing.
    pub pretrain_epochs: usize,
}

impl Default for GammaSpec {
    fn default() -> Self {
        Self {
            batch_sizes: vec![1, 4, 16, 64],
            trials: 500,
            pretrain_epochs: 1,
        }
    }
}

fn invalid(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

/// Reads and validates an experiment file.
pub fn parse_config(path: &Path) -> Result<ExperimentSpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut spec = parse_config_str(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        e => e,
    })?;
    spec.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(spec)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentSpec, CliError> {
    let de = toml::Deserializer::parse(text).map_err(|e| CliError::Config(e.to_string()))?;
    let spec: ExperimentSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().message().to_string();
        if path == "." {
            CliError::Config(inner)
        } else {
            invalid(&path, inner)
        }
    })?;
    spec.federated_config()?;
    spec.validate_gamma()?;
    Ok(spec)
}

impl ExperimentSpec {
    /// The engine configuration, with every constraint checked against the
    /// key it came from.
    pub fn federated_config(&self) -> Result<FederatedConfig, CliError> {
        if self.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        let f = &self.federated;
        if f.clients == 0 {
            return Err(invalid("federated.clients", "must be at least 1"));
        }
        if !(f.participation > 0.0 && f.participation <= 1.0) {
            return Err(invalid(
                "federated.participation",
                format!("must lie in (0, 1], got {}", f.participation),
            ));
        }
        if f.local_epochs == 0 {
            return Err(invalid("federated.local_epochs", "must be at least 1"));
        }
        if f.batch_size == 0 {
            return Err(invalid("federated.batch_size", "must be at least 1"));
        }
        if !(f.learning_rate > 0.0 && f.learning_rate.is_finite()) {
            return Err(invalid("federated.learning_rate", "must be positive"));
        }
        if f.eval_every == 0 {
            return Err(invalid("federated.eval_every", "must be at least 1"));
        }
        if let Some(t) = f.target_accuracy {
            if !(0.0..=1.0).contains(&t) {
                return Err(invalid(
                    "federated.target_accuracy",
                    format!("must lie in [0, 1], got {t}"),
                ));
            }
        }
        if self.model.hidden.contains(&0) {
            return Err(invalid("model.hidden", "widths must be positive"));
        }
        let partition = match self.partition {
            PartitionSection::Iid => PartitionSpec::Iid,
            PartitionSection::Sorted {
                shards_per_client: 0,
            } => return Err(invalid("partition.shards_per_client", "must be at least 1")),
            PartitionSection::Sorted { shards_per_client } => {
                PartitionSpec::Sorted { shards_per_client }
            }
        };
        if let DataSpec::Synthetic {
            classes,
            per_class,
            test_per_class,
            dim,
            ..
        } = self.data
        {
            for (key, v) in [
                ("data.classes", classes),
                ("data.per_class", per_class),
                ("data.test_per_class", test_per_class),
                ("data.dim", dim),
            ] {
                if v == 0 {
                    return Err(invalid(key, "must be at least 1"));
                }
            }
        }

        let s = &self.strategy;
        let mut strategy = StrategyConfig::new(s.kind);
        strategy.k_frac = s.stc.k_frac;
        strategy.cmfl_threshold = s.cmfl.threshold;
        strategy.mmd_lambda = s.fedmmd.lambda;
        strategy.mmd_bandwidth = match &s.fedmmd.bandwidth {
            BandwidthSpec::Named(n) if n == "median" => Bandwidth::Median,
            BandwidthSpec::Named(n) => {
                return Err(invalid(
                    "strategy.fedmmd.bandwidth",
                    format!("expected \"median\" or a number, got {n:?}"),
                ))
            }
            BandwidthSpec::Fixed(v) => Bandwidth::Fixed(*v),
        };
        strategy.dropout_rate = s.feddropout.rate;
        strategy.shared_gamma = s.datashare.gamma;
        strategy.alpha = s.datashare.alpha;
        strategy.warmstart_epochs = s.datashare.warmstart_epochs;
        strategy.sign_downstream = s.signsgd.downstream;
        // only the selected strategy's block is checked
        let key = match s.kind {
            StrategyKind::Stc => "strategy.stc",
            StrategyKind::Cmfl => "strategy.cmfl",
            StrategyKind::Fedmmd => "strategy.fedmmd",
            StrategyKind::Feddropout => "strategy.feddropout",
            StrategyKind::Datashare => "strategy.datashare",
            StrategyKind::Signsgd => "strategy.signsgd",
            StrategyKind::Fedavg => "strategy",
        };
        strategy.validate().map_err(|e| invalid(key, e))?;
        if s.kind == StrategyKind::Feddropout && self.model.hidden.is_empty() {
            return Err(invalid(
                "model.hidden",
                "feddropout needs at least one hidden layer",
            ));
        }

        Ok(FederatedConfig {
            n_clients: f.clients,
            participation: f.participation,
            local_epochs: f.local_epochs,
            batch_size: f.batch_size,
            learning_rate: f.learning_rate,
            rounds: f.rounds,
            target_accuracy: f.target_accuracy,
            seed: self.seed,
            eval_every: f.eval_every,
            hidden_layers: self.model.hidden.clone(),
            partition,
            strategy,
        })
    }

    fn validate_gamma(&self) -> Result<(), CliError> {
        let g = &self.gamma;
        if g.trials == 0 {
            return Err(invalid("gamma.trials", "must be at least 1"));
        }
        if g.batch_sizes.contains(&0) {
            return Err(invalid("gamma.batch_sizes", "sizes must be positive"));
        }
        if g.batch_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("gamma.batch_sizes", "must be strictly increasing"));
        }
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// The data section with file paths made absolute, for comparing specs
    /// that live in different directories.
    pub fn resolved_data(&self) -> DataSpec {
        let mut d = self.data.clone();
        if let DataSpec::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            ..
        } = &mut d
        {
            for p in [train_images, train_labels, test_images, test_labels] {
                *p = self.resolve(p);
            }
        }
        d
    }

    /// Output directory: `--out` if given, else `out_dir`, else `out/<name>`.
    pub fn output_dir(&self, cli_out: Option<&Path>) -> PathBuf {
        match (cli_out, &self.out_dir) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(p)) => self.resolve(p),
            (None, None) => self.base_dir.join("out").join(&self.name),
        }
    }

    /// Loads `(train, test)`.
    pub fn load_data(&self) -> Result<(Dataset, Dataset), CliError> {
        match &self.data {
            DataSpec::Synthetic {
                classes,
                per_class,
                test_per_class,
                dim,
                seed,
            } => Ok(synth_train_test(
                *classes,
                *per_class,
                *test_per_class,
                *dim,
                *seed,
            )?),
            DataSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                train_limit,
                test_limit,
            } => {
                let mut train = load_idx(self.resolve(train_images), self.resolve(train_labels))?;
                let mut test = load_idx(self.resolve(test_images), self.resolve(test_labels))?;
                if let Some(n) = train_limit {
                    train = train.head(*n)?;
                }
                if let Some(n) = test_limit {
                    test = test.head(*n)?;
                }
                Ok((train, test))
            }
        }
    }
}
