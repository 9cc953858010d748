//! Balanced-partition ensemble for the 1:4 target/non-target imbalance.
//!
//! Non-target epochs are dealt into `n_groups` groups; every group is paired with
//! the full target set. Each training step draws one balanced batch per group
//! (half targets, half that group's non-targets) and
//!
//! - [`EnsembleMode::SharedWeights`]: averages the per-group mean gradients
//!   `g = (1/K) sum_k g_k` (groups summed in order 0..K) and updates one network;
//! - [`EnsembleMode::IndependentPredictors`]: updates network `k` with `g_k` only;
//!   predictions are the mean of the `K` probabilities.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::nn::{self, Architecture, Gradients, Network, TrainConfig};
use crate::rng;
use crate::signal::{EpochSet, Label};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnsembleMode {
    #[default]
    SharedWeights,
    IndependentPredictors,
}

impl EnsembleMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EnsembleMode::SharedWeights => "shared",
            EnsembleMode::IndependentPredictors => "independent",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "shared" | "shared_weights" => Some(EnsembleMode::SharedWeights),
            "independent" | "independent_predictors" => Some(EnsembleMode::IndependentPredictors),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig {
    pub mode: EnsembleMode,
    pub n_groups: usize,
    pub train: TrainConfig,
    /// Drives the partition and every per-epoch batch shuffle.
    pub shuffle_seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            mode: EnsembleMode::SharedWeights,
            n_groups: 4,
            train: TrainConfig::default(),
            shuffle_seed: 7,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_groups < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 groups, got {}",
                self.n_groups
            )));
        }
        self.train.validate()
    }
}

/// Group count matching the class ratio, `round(non_targets / targets)`, at least 2.
pub fn groups_for_ratio(labels: &[Label]) -> usize {
    let t = labels.iter().filter(|l| l.is_target()).count().max(1);
    let nt = labels.len() - labels.iter().filter(|l| l.is_target()).count();
    ((nt as f64 / t as f64) + 0.5).max(2.0) as usize
}

/// Assignment of every non-target epoch to one group. Targets are shared by all groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    n_groups: usize,
    shuffle_seed: u64,
    targets: Vec<usize>,
    /// Non-target epoch indices, ascending.
    non_targets: Vec<usize>,
    /// `groups[i]` is the group of `non_targets[i]`.
    groups: Vec<usize>,
}

impl PartitionPlan {
    /// Rebuilds a plan from stored assignments, e.g. a partition CSV.
    pub fn from_assignments(
        n_groups: usize,
        shuffle_seed: u64,
        labels: &[Label],
        assignments: &[(usize, usize)],
    ) -> Result<Self> {
        let targets: Vec<usize> = (0..labels.len())
            .filter(|&i| labels[i].is_target())
            .collect();
        let mut pairs = assignments.to_vec();
        pairs.sort_unstable();
        let non_targets: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let expected: Vec<usize> = (0..labels.len())
            .filter(|&i| !labels[i].is_target())
            .collect();
        if non_targets != expected {
            return Err(Error::invalid(
                "assignments must cover every non-target exactly once",
            ));
        }
        if let Some(p) = pairs.iter().find(|p| p.1 >= n_groups) {
            return Err(Error::invalid(format!("group {} out of range", p.1)));
        }
        let groups = pairs.iter().map(|p| p.1).collect();
        Ok(Self {
            n_groups,
            shuffle_seed,
            targets,
            non_targets,
            groups,
        })
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn shuffle_seed(&self) -> u64 {
        self.shuffle_seed
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    /// `(non-target epoch index, group)` pairs in ascending epoch order.
    pub fn assignments(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.non_targets
            .iter()
            .copied()
            .zip(self.groups.iter().copied())
    }

    /// Members of `group`, ascending.
    pub fn group_members(&self, group: usize) -> Vec<usize> {
        self.assignments()
            .filter(|&(_, g)| g == group)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_groups];
        for &g in &self.groups {
            sizes[g] += 1;
        }
        sizes
    }
}

/// Shuffles the non-target indices and deals them round-robin into `n_groups`.
pub fn partition(labels: &[Label], n_groups: usize, seed: u64) -> Result<PartitionPlan> {
    if n_groups == 0 {
        return Err(Error::invalid("need at least one group"));
    }
    let targets: Vec<usize> = (0..labels.len())
        .filter(|&i| labels[i].is_target())
        .collect();
    let non_targets: Vec<usize> = (0..labels.len())
        .filter(|&i| !labels[i].is_target())
        .collect();
    if targets.is_empty() {
        return Err(Error::SingleClass {
            targets: 0,
            non_targets: non_targets.len(),
        });
    }
    if non_targets.len() < n_groups {
        return Err(Error::invalid(format!(
            "{} non-target epochs cannot fill {n_groups} groups",
            non_targets.len()
        )));
    }
    let mut order: Vec<usize> = (0..non_targets.len()).collect();
    order.shuffle(&mut rng::seeded(seed));
    let mut groups = vec![0; non_targets.len()];
    for (slot, &pos) in order.iter().enumerate() {
        groups[pos] = slot % n_groups;
    }
    Ok(PartitionPlan {
        n_groups,
        shuffle_seed: seed,
        targets,
        non_targets,
        groups,
    })
}

/// One pass over `group`: its members shuffled and cut into chunks of
/// `batch_size / 2`, each chunk paired with as many targets. Targets come from a
/// shuffled stream that is reshuffled whenever it runs out. A final short chunk is
/// kept, so every member appears exactly once. Indices within a batch alternate
/// target, non-target.
pub fn balanced_batches(
    plan: &PartitionPlan,
    group: usize,
    batch_size: usize,
    epoch_seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if batch_size < 2 || !batch_size.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "batch size {batch_size} must be even and >= 2"
        )));
    }
    if group >= plan.n_groups {
        return Err(Error::invalid(format!("group {group} out of range")));
    }
    let mut members = plan.group_members(group);
    if members.is_empty() {
        return Err(Error::invalid(format!("group {group} is empty")));
    }
    let mut rng = rng::seeded(rng::derive_seed(epoch_seed, group as u64));
    members.shuffle(&mut rng);
    let mut stream: Vec<usize> = Vec::new();
    let mut next_target = || {
        if stream.is_empty() {
            stream = plan.targets.clone();
            stream.shuffle(&mut rng);
            stream.reverse();
        }
        stream.pop().expect("target set is non-empty")
    };
    let half = batch_size / 2;
    Ok(members
        .chunks(half)
        .map(|chunk| {
            let mut batch = Vec::with_capacity(2 * chunk.len());
            for &nt in chunk {
                batch.push(next_target());
                batch.push(nt);
            }
            batch
        })
        .collect())
}

/// Epoch data widened to `f64` once for training.
#[derive(Debug, Clone)]
pub struct Inputs {
    data: Vec<f64>,
    epoch_len: usize,
    labels: Vec<Label>,
}

impl Inputs {
    pub fn from_epochs(set: &EpochSet) -> Self {
        Self {
            data: set.to_f64(),
            epoch_len: set.epoch_len(),
            labels: set.labels().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn example(&self, i: usize) -> (&[f64], Label) {
        (
            &self.data[i * self.epoch_len..(i + 1) * self.epoch_len],
            self.labels[i],
        )
    }

    fn batch<'a>(&'a self, idx: &'a [usize]) -> impl Iterator<Item = (&'a [f64], Label)> + 'a {
        idx.iter().map(move |&i| self.example(i))
    }
}

/// Mean over `batches` of each batch's mean gradient, summed in batch order.
/// Returns the averaged gradient and the mean example loss.
pub fn averaged_gradient(
    net: &Network,
    data: &Inputs,
    batches: &[&[usize]],
) -> Result<(Gradients, f64)> {
    if batches.is_empty() {
        return Err(Error::invalid("no batches"));
    }
    let mut sum = Gradients::zeros(net.n_params());
    let mut loss = 0.0;
    let mut n = 0;
    for (k, b) in batches.iter().enumerate() {
        let (g, l) = nn::mean_gradient(net, data.batch(b))?;
        if let Some(param) = g.first_non_finite() {
            return Err(Error::invalid(format!(
                "non-finite gradient in group {k} at parameter {param}"
            )));
        }
        sum.add_assign(&g);
        loss += l * b.len() as f64;
        n += b.len();
    }
    sum.scale(1.0 / batches.len() as f64);
    Ok((sum, loss / n as f64))
}

/// One ensemble update. Shared mode takes one network and one batch per group;
/// independent mode takes one network per batch. Returns the mean example loss
/// before the update.
pub fn ensemble_train_step(
    networks: &mut [Network],
    batches: &[&[usize]],
    data: &Inputs,
    mode: EnsembleMode,
    lr: f64,
) -> Result<f64> {
    match mode {
        EnsembleMode::SharedWeights => {
            let [net] = networks else {
                return Err(Error::invalid("shared mode trains exactly one network"));
            };
            let (g, loss) = averaged_gradient(net, data, batches)?;
            net.apply_sgd(&g, lr)?;
            Ok(loss)
        }
        EnsembleMode::IndependentPredictors => {
            if networks.len() != batches.len() {
                return Err(Error::invalid(format!(
                    "{} networks for {} batches",
                    networks.len(),
                    batches.len()
                )));
            }
            let mut loss = 0.0;
            let mut n = 0;
            for (net, b) in networks.iter_mut().zip(batches) {
                let (g, l) = averaged_gradient(net, data, &[b])?;
                net.apply_sgd(&g, lr)?;
                loss += l * b.len() as f64;
                n += b.len();
            }
            Ok(loss / n as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedEnsemble {
    pub mode: EnsembleMode,
    /// One network in shared mode, `n_groups` in independent mode.
    pub networks: Vec<Network>,
    pub plan: PartitionPlan,
    /// Mean training loss of each epoch.
    pub loss_trace: Vec<f64>,
    pub config: EnsembleConfig,
}

fn check_dims(arch: &Architecture, set: &EpochSet) -> Result<()> {
    if arch.n_channels != set.n_channels() || arch.n_samples != set.n_samples() {
        return Err(Error::dims(format!(
            "model expects {} x {}, data is {} x {}",
            arch.n_channels,
            arch.n_samples,
            set.n_channels(),
            set.n_samples()
        )));
    }
    Ok(())
}

/// Seed for the batch shuffles of training epoch `epoch`.
pub fn epoch_seed(shuffle_seed: u64, epoch: usize) -> u64 {
    rng::derive_seed(shuffle_seed, 1 + epoch as u64)
}

pub fn train(set: &EpochSet, cfg: &EnsembleConfig) -> Result<TrainedEnsemble> {
    train_with_architecture(
        set,
        cfg,
        Architecture::new(set.n_channels(), set.n_samples()),
    )
}

/// Runs `cfg.train.epochs` passes. In each pass every group yields its balanced
/// batches; step `s` uses batch `s` of every group that still has one. All
/// networks start from the same initialisation.
pub fn train_with_architecture(
    set: &EpochSet,
    cfg: &EnsembleConfig,
    arch: Architecture,
) -> Result<TrainedEnsemble> {
    cfg.validate()?;
    set.require_both_classes()?;
    check_dims(&arch, set)?;
    let plan = partition(set.labels(), cfg.n_groups, cfg.shuffle_seed)?;
    let init = Network::init(arch, cfg.train.init_seed)?;
    let mut networks = match cfg.mode {
        EnsembleMode::SharedWeights => vec![init],
        EnsembleMode::IndependentPredictors => vec![init; cfg.n_groups],
    };
    let data = Inputs::from_epochs(set);
    let mut loss_trace = Vec::with_capacity(cfg.train.epochs);
    for epoch in 0..cfg.train.epochs {
        let seed = epoch_seed(cfg.shuffle_seed, epoch);
        let per_group = (0..cfg.n_groups)
            .map(|g| balanced_batches(&plan, g, cfg.train.batch_size, seed))
            .collect::<Result<Vec<_>>>()?;
        let steps = per_group.iter().map(Vec::len).max().unwrap_or(0);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for s in 0..steps {
            let active: Vec<usize> = (0..cfg.n_groups)
                .filter(|&g| s < per_group[g].len())
                .collect();
            let batches: Vec<&[usize]> =
                active.iter().map(|&g| per_group[g][s].as_slice()).collect();
            let n: usize = batches.iter().map(|b| b.len()).sum();
            let loss = match cfg.mode {
                EnsembleMode::SharedWeights => ensemble_train_step(
                    &mut networks,
                    &batches,
                    &data,
                    cfg.mode,
                    cfg.train.learning_rate,
                )?,
                EnsembleMode::IndependentPredictors => {
                    let mut subset: Vec<Network> =
                        active.iter().map(|&g| networks[g].clone()).collect();
                    let loss = ensemble_train_step(
                        &mut subset,
                        &batches,
                        &data,
                        cfg.mode,
                        cfg.train.learning_rate,
                    )?;
                    for (&g, net) in active.iter().zip(subset) {
                        networks[g] = net;
                    }
                    loss
                }
            };
            loss_sum += loss * n as f64;
            seen += n;
        }
        loss_trace.push(loss_sum / seen as f64);
    }
    Ok(TrainedEnsemble {
        mode: cfg.mode,
        networks,
        plan,
        loss_trace,
        config: *cfg,
    })
}

impl TrainedEnsemble {
    pub fn architecture(&self) -> &Architecture {
        self.networks[0].architecture()
    }
}

/// Probability of "target" per epoch: the shared network's output, or the mean
/// over the independent networks.
pub fn predict(ens: &TrainedEnsemble, set: &EpochSet) -> Result<Vec<f64>> {
    predict_networks(&ens.networks, set)
}

pub fn predict_networks(networks: &[Network], set: &EpochSet) -> Result<Vec<f64>> {
    if networks.is_empty() {
        return Err(Error::invalid("no networks"));
    }
    for net in networks {
        check_dims(net.architecture(), set)?;
    }
    let data = Inputs::from_epochs(set);
    (0..set.n_epochs())
        .map(|i| {
            let (x, _) = data.example(i);
            let mut sum = 0.0;
            for net in networks {
                sum += net.predict(x)?;
            }
            Ok(sum / networks.len() as f64)
        })
        .collect()
}

/// Baseline without rebalancing: plain minibatch SGD over the shuffled,
/// imbalanced training set with the same hyperparameters and initialisation.
pub fn train_baseline(
    set: &EpochSet,
    train: &TrainConfig,
    shuffle_seed: u64,
) -> Result<(Network, Vec<f64>)> {
    train.validate()?;
    set.require_both_classes()?;
    let mut net = Network::init(
        Architecture::new(set.n_channels(), set.n_samples()),
        train.init_seed,
    )?;
    let data = Inputs::from_epochs(set);
    let mut order: Vec<usize> = (0..set.n_epochs()).collect();
    let mut trace = Vec::with_capacity(train.epochs);
    for epoch in 0..train.epochs {
        order.shuffle(&mut rng::seeded(epoch_seed(shuffle_seed, epoch)));
        let mut loss_sum = 0.0;
        for batch in order.chunks(train.batch_size) {
            let (g, loss) = nn::mean_gradient(&net, data.batch(batch))?;
            net.apply_sgd(&g, train.learning_rate)?;
            loss_sum += loss * batch.len() as f64;
        }
        trace.push(loss_sum / order.len() as f64);
    }
    Ok((net, trace))
}
