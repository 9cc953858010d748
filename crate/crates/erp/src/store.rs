//! On-disk layout of a trained model directory.
//!
//! ```text
//! model.txt        key=value: kind, seeds, hyperparameters, model file list
//! model_<k>.erpm   one file per network
//! partition.csv    epoch_index,group   (ensembles only)
//! loss.csv         epoch,loss
//! ```

use std::path::Path;

use erp_core::ensemble::{self, EnsembleConfig, EnsembleMode, PartitionPlan, TrainedEnsemble};
use erp_core::nn::{Network, TrainConfig};
use erp_core::{EpochSet, Label};

use crate::dataio::{self, DataError, Result};
use crate::manifest::KeyValues;

pub const MODEL_MANIFEST: &str = "model.txt";
pub const PARTITION_FILE: &str = "partition.csv";
pub const LOSS_FILE: &str = "loss.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Ensemble(EnsembleMode),
    /// Plain minibatch SGD on the imbalanced set.
    Baseline,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Ensemble(m) => m.as_str(),
            ModelKind::Baseline => "baseline",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "baseline" => Some(ModelKind::Baseline),
            other => EnsembleMode::parse(other).map(ModelKind::Ensemble),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredModel {
    pub kind: ModelKind,
    pub config: EnsembleConfig,
    pub networks: Vec<Network>,
    /// `(non-target epoch index, group)`; empty for the baseline.
    pub assignments: Vec<(usize, usize)>,
    pub loss_trace: Vec<f64>,
}

impl StoredModel {
    pub fn from_ensemble(ens: &TrainedEnsemble) -> Self {
        Self {
            kind: ModelKind::Ensemble(ens.mode),
            config: ens.config,
            networks: ens.networks.clone(),
            assignments: ens.plan.assignments().collect(),
            loss_trace: ens.loss_trace.clone(),
        }
    }

    pub fn from_baseline(
        net: Network,
        loss_trace: Vec<f64>,
        train: TrainConfig,
        shuffle_seed: u64,
    ) -> Self {
        Self {
            kind: ModelKind::Baseline,
            config: EnsembleConfig {
                train,
                shuffle_seed,
                ..Default::default()
            },
            networks: vec![net],
            assignments: Vec::new(),
            loss_trace,
        }
    }

    /// Rebuilds the ensemble; `labels` are the training labels the plan refers to.
    pub fn to_ensemble(&self, labels: &[Label]) -> Result<TrainedEnsemble> {
        let ModelKind::Ensemble(mode) = self.kind else {
            return Err(erp_core::Error::InvalidArgument(
                "baseline model is not an ensemble".into(),
            )
            .into());
        };
        let plan = PartitionPlan::from_assignments(
            self.config.n_groups,
            self.config.shuffle_seed,
            labels,
            &self.assignments,
        )?;
        Ok(TrainedEnsemble {
            mode,
            networks: self.networks.clone(),
            plan,
            loss_trace: self.loss_trace.clone(),
            config: self.config,
        })
    }

    /// Mean probability over the stored networks.
    pub fn predict(&self, set: &EpochSet) -> Result<Vec<f64>> {
        Ok(ensemble::predict_networks(&self.networks, set)?)
    }

    pub fn model_file(k: usize) -> String {
        format!("model_{k}.erpm")
    }

    pub fn manifest(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("kind", self.kind.as_str());
        kv.set("n_models", self.networks.len());
        kv.set("n_groups", self.config.n_groups);
        kv.set("shuffle_seed", self.config.shuffle_seed);
        kv.set("init_seed", self.config.train.init_seed);
        kv.set("learning_rate", self.config.train.learning_rate);
        kv.set("epochs", self.config.train.epochs);
        kv.set("batch_size", self.config.train.batch_size);
        let files: Vec<String> = (0..self.networks.len()).map(Self::model_file).collect();
        kv.set("models", files.join(","));
        kv
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        for (k, net) in self.networks.iter().enumerate() {
            dataio::save_model(net, &dir.join(Self::model_file(k)))?;
        }
        if self.kind != ModelKind::Baseline {
            let mut csv = String::from("epoch_index,group\n");
            for (i, g) in &self.assignments {
                csv.push_str(&format!("{i},{g}\n"));
            }
            dataio::write_file(&dir.join(PARTITION_FILE), csv.as_bytes())?;
        }
        dataio::write_file(
            &dir.join(LOSS_FILE),
            format_loss(&self.loss_trace).as_bytes(),
        )?;
        self.manifest().save(&dir.join(MODEL_MANIFEST))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let kv = KeyValues::load(&dir.join(MODEL_MANIFEST))?;
        let missing = |k: &str| DataError::Parse {
            line: 0,
            msg: format!("{MODEL_MANIFEST}: missing key {k:?}"),
        };
        let kind_str = kv.get("kind").ok_or_else(|| missing("kind"))?;
        let kind = ModelKind::parse(kind_str).ok_or_else(|| DataError::Parse {
            line: 0,
            msg: format!("unknown model kind {kind_str:?}"),
        })?;
        let n_models: usize = req(&kv, "n_models")?;
        let train = TrainConfig {
            learning_rate: req(&kv, "learning_rate")?,
            epochs: req(&kv, "epochs")?,
            batch_size: req(&kv, "batch_size")?,
            init_seed: req(&kv, "init_seed")?,
        };
        let config = EnsembleConfig {
            mode: match kind {
                ModelKind::Ensemble(m) => m,
                ModelKind::Baseline => EnsembleMode::default(),
            },
            n_groups: req(&kv, "n_groups")?,
            train,
            shuffle_seed: req(&kv, "shuffle_seed")?,
        };
        let networks = (0..n_models)
            .map(|k| dataio::load_model(&dir.join(Self::model_file(k))))
            .collect::<Result<Vec<_>>>()?;
        if networks.is_empty() {
            return Err(erp_core::Error::InvalidArgument(
                "model directory holds no networks".into(),
            )
            .into());
        }
        let assignments = if kind == ModelKind::Baseline {
            Vec::new()
        } else {
            parse_pairs(
                &dataio::read_text(&dir.join(PARTITION_FILE))?,
                "epoch_index,group",
            )?
        };
        let loss_trace = parse_loss(&dataio::read_text(&dir.join(LOSS_FILE))?)?;
        Ok(Self {
            kind,
            config,
            networks,
            assignments,
            loss_trace,
        })
    }
}

fn req<T: std::str::FromStr>(kv: &KeyValues, key: &str) -> Result<T> {
    kv.parse_value(key)?.ok_or_else(|| DataError::Parse {
        line: 0,
        msg: format!("{MODEL_MANIFEST}: missing key {key:?}"),
    })
}

/// `epoch,loss` rows, epochs counted from 1. Values print in shortest round-trip form.
pub fn format_loss(trace: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in trace.iter().enumerate() {
        s.push_str(&format!("{},{}\n", i + 1, l));
    }
    s
}

pub fn parse_loss(text: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, h)| h.trim()) != Some("epoch,loss") {
        return Err(DataError::Parse {
            line: 1,
            msg: "expected header \"epoch,loss\"".into(),
        });
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split_once(',')
                .and_then(|(_, v)| v.trim().parse::<f64>().ok())
                .ok_or_else(|| DataError::Parse {
                    line: i + 1,
                    msg: format!("malformed row {l:?}"),
                })
        })
        .collect()
}

fn parse_pairs(text: &str, header: &str) -> Result<Vec<(usize, usize)>> {
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, h)| h.trim()) != Some(header) {
        return Err(DataError::Parse {
            line: 1,
            msg: format!("expected header {header:?}"),
        });
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let (a, b) = l.split_once(',').unwrap_or(("", ""));
            match (a.trim().parse(), b.trim().parse()) {
                (Ok(a), Ok(b)) => Ok((a, b)),
                _ => Err(DataError::Parse {
                    line: i + 1,
                    msg: format!("malformed row {l:?}"),
                }),
            }
        })
        .collect()
}
