//! Deterministic oddball-paradigm generator.
//!
//! A recording holds `n_trials` stimuli separated by uniformly random
//! inter-stimulus intervals. Target trials carry a Gaussian positive deflection
//! (the P300 stand-in) on a posterior subset of channels, scaled per channel. Both
//! classes get independent white Gaussian noise. The optional gait artifact is a
//! label-independent periodic signal (step frequency plus two harmonics) shared by
//! every channel. Nothing here is meant to be physiologically realistic.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::rng;
use crate::signal::{
    default_channel_names, ContinuousRecording, EpochSet, Event, EventList, Label, Montage,
};
use crate::sigproc::{self, PreprocessConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitArtifact {
    pub step_freq_hz: f64,
    pub amplitude_uv: f64,
}

impl Default for GaitArtifact {
    /// About 2 steps per second, the cadence of brisk treadmill walking.
    fn default() -> Self {
        Self {
            step_freq_hz: 2.0,
            amplitude_uv: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_trials: usize,
    pub target_ratio: f64,
    pub fs_hz: f64,
    pub montage: Montage,
    /// Defaults to the montage's channel count. Other counts get generic labels.
    pub n_channels: usize,
    pub p300_latency_ms: f64,
    pub p300_amplitude_uv: f64,
    pub p300_width_ms: f64,
    pub noise_std_uv: f64,
    pub gait: Option<GaitArtifact>,
    /// Inter-stimulus interval range `[lo, hi)` (0.5 s stimulus plus 0.5-1.5 s rest).
    pub isi_ms: (f64, f64),
    /// Span over which the template is laid down, relative to stimulus onset.
    pub epoch_window_ms: (f64, f64),
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::for_montage(Montage::Scalp)
    }
}

impl SynthConfig {
    pub fn for_montage(montage: Montage) -> Self {
        Self {
            n_trials: 300,
            target_ratio: 0.2,
            fs_hz: 500.0,
            montage,
            n_channels: montage.n_channels(),
            p300_latency_ms: 300.0,
            p300_amplitude_uv: 5.0,
            p300_width_ms: 150.0,
            noise_std_uv: 2.5,
            gait: None,
            isi_ms: (1000.0, 2000.0),
            epoch_window_ms: (0.0, 800.0),
            seed: 0,
        }
    }

    /// Low-SNR preset for exploration (noise 10 uV).
    pub fn hard(montage: Montage) -> Self {
        Self {
            noise_std_uv: 10.0,
            ..Self::for_montage(montage)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_trials == 0 {
            return bad("n_trials must be positive".into());
        }
        if !(self.target_ratio > 0.0 && self.target_ratio < 1.0) {
            return bad(format!(
                "target ratio {} must lie in (0, 1)",
                self.target_ratio
            ));
        }
        if !(self.fs_hz.is_finite() && self.fs_hz > 0.0) || self.n_channels == 0 {
            return bad("sampling rate and channel count must be positive".into());
        }
        let non_negative = [
            self.p300_amplitude_uv,
            self.noise_std_uv,
            self.p300_width_ms,
        ];
        if non_negative.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("amplitudes, widths and noise must be finite and >= 0".into());
        }
        if let Some(g) = self.gait {
            if !(g.amplitude_uv.is_finite() && g.amplitude_uv >= 0.0 && g.step_freq_hz > 0.0) {
                return bad("gait artifact needs amplitude >= 0 and frequency > 0".into());
            }
        }
        let (lo, hi) = self.isi_ms;
        if !(lo > 0.0 && hi >= lo) {
            return bad(format!("ISI range {lo}..{hi} ms is invalid"));
        }
        let (ws, we) = self.epoch_window_ms;
        if !(we > ws && ws >= 0.0) {
            return bad(format!("template window {ws}..{we} ms is invalid"));
        }
        Ok(())
    }

    pub fn n_targets(&self) -> usize {
        libm::round(self.n_trials as f64 * self.target_ratio) as usize
    }

    pub fn channel_names(&self) -> Vec<String> {
        if self.n_channels == self.montage.n_channels() {
            self.montage
                .channel_names()
                .iter()
                .map(|s| String::from(*s))
                .collect()
        } else {
            default_channel_names(self.n_channels)
        }
    }

    fn window_samples(&self) -> (usize, usize) {
        let (ws, we) = self.epoch_window_ms;
        let start = libm::round(ws * self.fs_hz / 1000.0) as usize;
        let end = libm::round(we * self.fs_hz / 1000.0) as usize;
        (start, end - start)
    }
}

/// Per-channel template gain.
///
/// Scalp: centro-parietal and occipital sites, strongest at Pz. Ear: a weaker
/// response on the lower electrodes of each grid. Generic labels: the last third of
/// the channels at full gain.
pub fn template_gains(names: &[String]) -> Vec<f64> {
    let gain = |n: &str| match n {
        "Pz" => 1.0,
        "POz" => 0.9,
        "P3" | "P4" | "CPz" => 0.8,
        "CP1" | "CP2" | "PO3" | "PO4" => 0.7,
        "Cz" | "Oz" => 0.6,
        "P7" | "P8" | "PO7" | "PO8" | "O1" | "O2" => 0.5,
        "L4" | "L5" | "L6" | "R3" | "R4" | "R5" => 0.5,
        "L3" | "L7" | "R2" | "R6" => 0.3,
        _ => 0.0,
    };
    let mut gains: Vec<f64> = names.iter().map(|n| gain(n)).collect();
    if gains.iter().all(|&g| g == 0.0) {
        let n = gains.len();
        for g in &mut gains[n - n.div_ceil(3)..] {
            *g = 1.0;
        }
    }
    gains
}

/// Gaussian bump `A exp(-(t - latency)^2 / (2 sigma^2))` with `sigma = width / 4`,
/// sampled at `fs_hz` over the template window.
pub fn erp_template(cfg: &SynthConfig) -> Vec<f64> {
    let (_, len) = cfg.window_samples();
    let sigma = cfg.p300_width_ms / 4.0;
    (0..len)
        .map(|i| {
            let t = cfg.epoch_window_ms.0 + i as f64 * 1000.0 / cfg.fs_hz;
            let d = t - cfg.p300_latency_ms;
            if cfg.p300_amplitude_uv == 0.0 {
                0.0
            } else if sigma == 0.0 {
                if d == 0.0 {
                    cfg.p300_amplitude_uv
                } else {
                    0.0
                }
            } else {
                cfg.p300_amplitude_uv * libm::exp(-d * d / (2.0 * sigma * sigma))
            }
        })
        .collect()
}

/// A generated session: the continuous recording, its events and the labels in
/// trial order.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub recording: ContinuousRecording,
    pub events: EventList,
    pub labels: Vec<Label>,
}

/// Lead-in before the first stimulus and tail after the last window.
const MARGIN_MS: f64 = 1000.0;

pub fn generate(cfg: &SynthConfig) -> Result<Session> {
    cfg.validate()?;
    let n_targets = cfg.n_targets();
    let mut labels: Vec<Label> = (0..cfg.n_trials)
        .map(|i| {
            if i < n_targets {
                Label::Target
            } else {
                Label::NonTarget
            }
        })
        .collect();
    let mut order_rng = rng::seeded(rng::derive_seed(cfg.seed, 0));
    labels.shuffle(&mut order_rng);

    let ms_to_samples = |ms: f64| libm::round(ms * cfg.fs_hz / 1000.0) as usize;
    let mut onsets = Vec::with_capacity(cfg.n_trials);
    let mut at = ms_to_samples(MARGIN_MS);
    let (lo, hi) = cfg.isi_ms;
    for _ in 0..cfg.n_trials {
        onsets.push(at);
        let isi = if hi > lo {
            order_rng.random_range(lo..hi)
        } else {
            lo
        };
        at += ms_to_samples(isi).max(1);
    }
    let (win_start, win_len) = cfg.window_samples();
    let n_samples = onsets[cfg.n_trials - 1] + win_start + win_len + ms_to_samples(MARGIN_MS);

    let names = cfg.channel_names();
    let gains = template_gains(&names);
    let template = erp_template(cfg);

    let mut signal = vec![0.0f64; cfg.n_channels * n_samples];
    if cfg.noise_std_uv > 0.0 {
        let mut noise_rng = rng::seeded(rng::derive_seed(cfg.seed, 1));
        for v in &mut signal {
            *v = cfg.noise_std_uv * rng::normal(&mut noise_rng);
        }
    }
    if let Some(g) = cfg.gait {
        let w = 2.0 * PI * g.step_freq_hz / cfg.fs_hz;
        let artifact: Vec<f64> = (0..n_samples)
            .map(|s| {
                let x = w * s as f64;
                g.amplitude_uv
                    * (libm::sin(x) + 0.5 * libm::sin(2.0 * x) + 0.25 * libm::sin(3.0 * x))
            })
            .collect();
        for ch in signal.chunks_exact_mut(n_samples) {
            for (v, a) in ch.iter_mut().zip(&artifact) {
                *v += a;
            }
        }
    }
    for (&onset, label) in onsets.iter().zip(&labels) {
        if !label.is_target() {
            continue;
        }
        for (c, &gain) in gains.iter().enumerate() {
            if gain == 0.0 {
                continue;
            }
            let base = c * n_samples + onset + win_start;
            for (v, t) in signal[base..base + win_len].iter_mut().zip(&template) {
                *v += gain * t;
            }
        }
    }

    let data = signal.into_iter().map(|v| v as f32).collect();
    let recording =
        ContinuousRecording::new(cfg.n_channels, n_samples, cfg.fs_hz as f32, data, names)?;
    let events = EventList::new(
        onsets
            .iter()
            .zip(&labels)
            .map(|(&sample, &label)| Event { sample, label })
            .collect(),
    )?;
    Ok(Session {
        recording,
        events,
        labels,
    })
}

/// Generates and preprocesses one session.
pub fn generate_epochs(cfg: &SynthConfig, pre: &PreprocessConfig) -> Result<EpochSet> {
    let session = generate(cfg)?;
    Ok(sigproc::preprocess(&session.recording, &session.events, pre)?.epochs)
}

/// Train and test sets for one synthetic subject.
///
/// Both share every template parameter. The training session uses `cfg.seed` with
/// the gait artifact switched off; the test session uses `split_seed` and keeps
/// `cfg.gait`, mimicking training while standing and testing while walking.
pub fn generate_subject_pair(
    cfg: &SynthConfig,
    split_seed: u64,
    pre: &PreprocessConfig,
) -> Result<(EpochSet, EpochSet)> {
    let train_cfg = SynthConfig {
        gait: None,
        ..cfg.clone()
    };
    let test_cfg = SynthConfig {
        seed: split_seed,
        ..cfg.clone()
    };
    Ok((
        generate_epochs(&train_cfg, pre)?,
        generate_epochs(&test_cfg, pre)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval;

    #[test]
    fn template_shape() {
        let cfg = SynthConfig::default();
        let t = erp_template(&cfg);
        assert_eq!(t.len(), 400);
        assert_eq!(t[150], 5.0);
        // latency +- width/2 = 2 sigma -> exp(-2).
        assert!(t[150 - 38] < 0.15 * 5.0 && t[150 + 38] < 0.15 * 5.0);
        assert!((t[150 + 37] - 5.0 * libm::exp(-2.0 * (74.0f64 / 75.0).powi(2))).abs() < 1e-12);
        let flat = erp_template(&SynthConfig {
            p300_amplitude_uv: 0.0,
            ..cfg
        });
        assert!(flat.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn default_counts() {
        let s = generate(&SynthConfig::default()).unwrap();
        assert_eq!(s.events.len(), 300);
        assert_eq!(s.events.count(Label::Target), 60);
        assert_eq!(s.recording.n_channels(), 32);
        assert_eq!(s.recording.fs_hz(), 500.0);
        let ear = generate(&SynthConfig::for_montage(Montage::Ear)).unwrap();
        assert_eq!(ear.recording.n_channels(), 18);
        let odd = SynthConfig {
            n_trials: 7,
            target_ratio: 0.3,
            ..Default::default()
        };
        assert_eq!(generate(&odd).unwrap().events.count(Label::Target), 2);
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SynthConfig {
            n_trials: 40,
            seed: 5,
            ..Default::default()
        };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = SynthConfig {
            seed: 6,
            ..cfg.clone()
        };
        assert_ne!(
            generate(&cfg).unwrap().recording,
            generate(&other).unwrap().recording
        );
    }

    #[test]
    fn noiseless_epochs_are_scaled_templates() {
        let cfg = SynthConfig {
            n_trials: 30,
            noise_std_uv: 0.0,
            seed: 2,
            ..Default::default()
        };
        let s = generate(&cfg).unwrap();
        let pre = PreprocessConfig {
            target_fs_hz: 500.0,
            ..Default::default()
        };
        let ex = sigproc::extract_epochs(&s.recording, &s.events, &pre).unwrap();
        assert_eq!(ex.dropped, 0);
        let gains = template_gains(&cfg.channel_names());
        let template = erp_template(&cfg);
        let set = ex.epochs;
        for e in 0..set.n_epochs() {
            let ep = set.epoch(e);
            for c in 0..set.n_channels() {
                for i in 0..set.n_samples() {
                    let want = if set.labels()[e].is_target() {
                        (gains[c] * template[i]) as f32
                    } else {
                        0.0
                    };
                    assert_eq!(ep[c * set.n_samples() + i], want);
                }
            }
        }
        let (t, n) = eval::grand_average(&set, "Pz").unwrap();
        for i in 0..t.len() {
            assert_eq!(t[i], f64::from(template[i] as f32));
            assert_eq!(n[i], 0.0);
        }
        let (t, _) = eval::grand_average(&set, "Fp1").unwrap();
        assert!(t.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn generic_channel_gains() {
        let names = default_channel_names(7);
        assert_eq!(
            template_gains(&names),
            vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]
        );
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            SynthConfig {
                target_ratio: 1.5,
                ..Default::default()
            },
            SynthConfig {
                target_ratio: 0.0,
                ..Default::default()
            },
            SynthConfig {
                noise_std_uv: -1.0,
                ..Default::default()
            },
            SynthConfig {
                n_trials: 0,
                ..Default::default()
            },
        ] {
            assert!(generate(&cfg).is_err());
        }
    }

    #[test]
    fn pair_with_identical_seeds_is_identical() {
        let cfg = SynthConfig {
            n_trials: 20,
            seed: 9,
            ..Default::default()
        };
        let pre = PreprocessConfig::default();
        let (a, b) = generate_subject_pair(&cfg, 9, &pre).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_samples(), 80);
        assert_eq!(a.fs_hz(), 100.0);
    }
}
