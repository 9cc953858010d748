use erp_core::ensemble::{
    self, averaged_gradient, balanced_batches, ensemble_train_step, partition, EnsembleConfig,
    EnsembleMode, Inputs,
};
use erp_core::nn::{self, Architecture, Network, TrainConfig};
use erp_core::sigproc::PreprocessConfig;
use erp_core::synth::{self, SynthConfig};
use erp_core::{rng, EpochSet, Label};
use proptest::prelude::*;

/// `n` random 3 x 20 epochs, every fifth one a target.
fn small_set(n: usize, seed: u64) -> EpochSet {
    let mut r = rng::seeded(seed);
    let data = (0..n * 60).map(|_| rng::normal(&mut r) as f32).collect();
    let labels = (0..n)
        .map(|i| {
            if i % 5 == 0 {
                Label::Target
            } else {
                Label::NonTarget
            }
        })
        .collect();
    EpochSet::with_default_names(3, 20, 100.0, labels, data).unwrap()
}

fn small_net(seed: u64) -> Network {
    Network::init(Architecture::compact(3, 20), seed).unwrap()
}

fn labels_240_60() -> Vec<Label> {
    (0..300)
        .map(|i| {
            if i % 5 == 2 {
                Label::Target
            } else {
                Label::NonTarget
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn identical_batches_reduce_to_one_group(seed in any::<u64>(), k in 2usize..6) {
        let set = small_set(30, seed);
        let data = Inputs::from_epochs(&set);
        let net = small_net(seed ^ 1);
        let batch: Vec<usize> = vec![0, 1, 5, 2, 10, 3];
        let copies: Vec<&[usize]> = vec![&batch[..]; k];
        let (avg, _) = averaged_gradient(&net, &data, &copies).unwrap();
        let (single, _) = nn::mean_gradient(&net, batch.iter().map(|&i| data.example(i))).unwrap();
        prop_assert!(avg.max_abs_diff(&single) <= 1e-12);

        let mut shared = vec![net.clone()];
        ensemble_train_step(&mut shared, &copies, &data, EnsembleMode::SharedWeights, 0.01).unwrap();
        let plain = nn::sgd_step(&net, &single, 0.01).unwrap();
        let diff = shared[0].params().iter().zip(plain.params()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(diff <= 1e-12);
    }

    #[test]
    fn averaged_gradient_is_mean_of_groups(seed in any::<u64>()) {
        let set = small_set(40, seed);
        let data = Inputs::from_epochs(&set);
        let net = small_net(seed.wrapping_add(3));
        let batches: [&[usize]; 3] = [&[0, 1, 5, 2], &[10, 11, 15, 12, 20, 13], &[25, 26]];
        let (avg, _) = averaged_gradient(&net, &data, &batches).unwrap();
        let mut external = vec![0.0; net.n_params()];
        for b in batches {
            let (g, _) = nn::mean_gradient(&net, b.iter().map(|&i| data.example(i))).unwrap();
            for (e, v) in external.iter_mut().zip(g.values()) {
                *e += v / 3.0;
            }
        }
        let diff = avg.values().iter().zip(&external).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(diff <= 1e-12, "{diff}");
    }

    #[test]
    fn one_pass_covers_non_targets_once(seed in any::<u64>(), epoch_seed in any::<u64>()) {
        let labels = labels_240_60();
        let plan = partition(&labels, 4, seed).unwrap();
        prop_assert_eq!(plan.group_sizes(), vec![60; 4]);
        let mut seen = vec![0usize; labels.len()];
        for g in 0..4 {
            let batches = balanced_batches(&plan, g, 32, epoch_seed).unwrap();
            let mut targets_here = vec![0usize; labels.len()];
            for b in &batches {
                let t = b.iter().filter(|&&i| labels[i].is_target()).count();
                prop_assert_eq!(2 * t, b.len());
                for &i in b {
                    if labels[i].is_target() {
                        targets_here[i] += 1;
                    } else {
                        seen[i] += 1;
                        prop_assert!(plan.group_members(g).contains(&i));
                    }
                }
            }
            // 60 non-targets draw exactly one full pass of the 60 targets.
            for (i, l) in labels.iter().enumerate() {
                if l.is_target() {
                    prop_assert_eq!(targets_here[i], 1);
                }
            }
        }
        for (i, l) in labels.iter().enumerate() {
            if !l.is_target() {
                prop_assert_eq!(seen[i], 1, "non-target {} used {} times", i, seen[i]);
            }
        }
    }
}

#[test]
fn symmetric_runs_predict_alike() {
    let set = small_set(30, 4);
    let data = Inputs::from_epochs(&set);
    let init = small_net(9);
    let batch: Vec<usize> = vec![0, 1, 5, 2, 10, 3];
    let copies: Vec<&[usize]> = vec![&batch[..]; 4];
    let mut shared = vec![init.clone()];
    let mut independent = vec![init; 4];
    for _ in 0..3 {
        ensemble_train_step(
            &mut shared,
            &copies,
            &data,
            EnsembleMode::SharedWeights,
            0.05,
        )
        .unwrap();
        ensemble_train_step(
            &mut independent,
            &copies,
            &data,
            EnsembleMode::IndependentPredictors,
            0.05,
        )
        .unwrap();
    }
    let a = ensemble::predict_networks(&shared, &set).unwrap();
    let b = ensemble::predict_networks(&independent, &set).unwrap();
    assert_eq!(a.len(), set.n_epochs());
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-12);
        assert!(*x > 0.0 && *x < 1.0);
    }
    let single = ensemble::predict_networks(&independent[..1], &set).unwrap();
    for (x, y) in single.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-15);
    }
}

#[test]
fn independent_step_needs_one_network_per_batch() {
    let set = small_set(10, 1);
    let data = Inputs::from_epochs(&set);
    let batch: [&[usize]; 2] = [&[0, 1], &[5, 2]];
    let mut nets = vec![small_net(0)];
    assert!(ensemble_train_step(
        &mut nets,
        &batch,
        &data,
        EnsembleMode::IndependentPredictors,
        0.01
    )
    .is_err());
    let mut two = vec![small_net(0); 2];
    assert!(
        ensemble_train_step(&mut two, &batch, &data, EnsembleMode::SharedWeights, 0.01).is_err()
    );
}

fn synthetic(n_trials: usize, channels: usize, seed: u64) -> EpochSet {
    let cfg = SynthConfig {
        n_trials,
        n_channels: channels,
        seed,
        ..Default::default()
    };
    synth::generate_epochs(&cfg, &PreprocessConfig::default()).unwrap()
}

#[test]
fn training_is_deterministic_and_epochs_zero_is_init() {
    let set = synthetic(50, 4, 3);
    let cfg = EnsembleConfig {
        train: TrainConfig {
            epochs: 3,
            batch_size: 8,
            ..Default::default()
        },
        ..Default::default()
    };
    for mode in [
        EnsembleMode::SharedWeights,
        EnsembleMode::IndependentPredictors,
    ] {
        let cfg = EnsembleConfig { mode, ..cfg };
        let a = ensemble::train(&set, &cfg).unwrap();
        assert_eq!(a, ensemble::train(&set, &cfg).unwrap());
        assert_eq!(a.loss_trace.len(), 3);
        assert!(a.loss_trace.iter().all(|l| l.is_finite()));
        assert_eq!(
            a.networks.len(),
            if mode == EnsembleMode::SharedWeights {
                1
            } else {
                4
            }
        );

        let zero = ensemble::train(
            &set,
            &EnsembleConfig {
                train: TrainConfig {
                    epochs: 0,
                    ..cfg.train
                },
                ..cfg
            },
        )
        .unwrap();
        assert!(zero.loss_trace.is_empty());
        let init = Network::init(Architecture::new(4, 80), cfg.train.init_seed).unwrap();
        assert!(zero.networks.iter().all(|n| *n == init));
    }
}

#[test]
fn training_rejects_single_class_and_mismatched_prediction() {
    let set = synthetic(30, 4, 1);
    let targets: Vec<usize> = (0..set.n_epochs())
        .filter(|&i| set.labels()[i].is_target())
        .collect();
    let only = set.subset(&targets).unwrap();
    assert!(ensemble::train(&only, &EnsembleConfig::default()).is_err());

    let cfg = EnsembleConfig {
        train: TrainConfig {
            epochs: 1,
            batch_size: 8,
            ..Default::default()
        },
        ..Default::default()
    };
    let ens = ensemble::train(&set, &cfg).unwrap();
    assert!(ensemble::predict(&ens, &synthetic(30, 5, 1)).is_err());
}

#[test]
fn default_run_has_fifty_epoch_trace() {
    let set = synthetic(300, 32, 0);
    assert_eq!((set.n_epochs(), set.count(Label::Target)), (300, 60));
    let ens = ensemble::train(&set, &EnsembleConfig::default()).unwrap();
    assert_eq!(ens.loss_trace.len(), 50);
    assert!(ens.loss_trace[49] < ens.loss_trace[0]);
    assert_eq!(ens.plan.group_sizes(), vec![60; 4]);
}
