//! Signal containers shared by every stage of the pipeline.
//!
//! Samples are stored as `f32` microvolts, matching the on-disk formats. All
//! arithmetic on them (filtering, training) is carried out in `f64`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::{Error, Result};

/// Cap electrodes of the scalp montage, 10-20 placement.
pub const SCALP_CHANNELS: [&str; 32] = [
    "Fp1", "Fp2", "AFz", "F7", "F3", "Fz", "F4", "F8", "FC5", "FC1", "FC2", "FC6", "C3", "Cz",
    "C4", "CP5", "CP1", "CP2", "CP6", "P7", "P3", "Pz", "P4", "P8", "PO7", "PO3", "POz", "PO4",
    "PO8", "O1", "Oz", "O2",
];

/// Around-the-ear grid: ten electrodes on the left, eight on the right.
pub const EAR_CHANNELS: [&str; 18] = [
    "L1", "L2", "L3", "L4", "L5", "L6", "L7", "L8", "L9", "L10", "R1", "R2", "R3", "R4", "R5",
    "R6", "R7", "R8",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Montage {
    Scalp,
    Ear,
}

impl Montage {
    pub fn channel_names(self) -> &'static [&'static str] {
        match self {
            Montage::Scalp => &SCALP_CHANNELS,
            Montage::Ear => &EAR_CHANNELS,
        }
    }

    pub fn n_channels(self) -> usize {
        self.channel_names().len()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Montage::Scalp => "scalp",
            Montage::Ear => "ear",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "scalp" => Some(Montage::Scalp),
            "ear" => Some(Montage::Ear),
            _ => None,
        }
    }
}

/// Channel labels for a recording with `n` channels.
///
/// Counts matching a known montage get that montage's labels, anything else is
/// labelled `ch1..chN`. The binary formats do not store labels, so loaders use this.
pub fn default_channel_names(n: usize) -> Vec<String> {
    for montage in [Montage::Scalp, Montage::Ear] {
        if montage.n_channels() == n {
            return montage
                .channel_names()
                .iter()
                .map(|s| s.to_string())
                .collect();
        }
    }
    (1..=n).map(|i| format!("ch{i}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    NonTarget = 0,
    Target = 1,
}

impl Label {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::NonTarget),
            1 => Some(Label::Target),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.as_u8())
    }

    pub fn is_target(self) -> bool {
        self == Label::Target
    }
}

fn check_finite(data: &[f32]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

fn check_names(names: &[String], n_channels: usize) -> Result<()> {
    if names.len() != n_channels {
        return Err(Error::dims(format!(
            "{} channel names for {} channels",
            names.len(),
            n_channels
        )));
    }
    Ok(())
}

/// Raw multichannel recording, `data[channel * n_samples + sample]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousRecording {
    n_channels: usize,
    n_samples: usize,
    fs_hz: f32,
    data: Vec<f32>,
    channel_names: Vec<String>,
}

impl ContinuousRecording {
    pub fn new(
        n_channels: usize,
        n_samples: usize,
        fs_hz: f32,
        data: Vec<f32>,
        channel_names: Vec<String>,
    ) -> Result<Self> {
        if n_channels == 0 || n_samples == 0 {
            return Err(Error::invalid(
                "recording must have at least one channel and sample",
            ));
        }
        if !(fs_hz.is_finite() && fs_hz > 0.0) {
            return Err(Error::invalid(format!(
                "sampling rate {fs_hz} must be positive"
            )));
        }
        if data.len() != n_channels * n_samples {
            return Err(Error::dims(format!(
                "{} values for {n_channels} x {n_samples}",
                data.len()
            )));
        }
        check_names(&channel_names, n_channels)?;
        check_finite(&data)?;
        Ok(Self {
            n_channels,
            n_samples,
            fs_hz,
            data,
            channel_names,
        })
    }

    /// Builds a recording labelled with [`default_channel_names`].
    pub fn with_default_names(
        n_channels: usize,
        n_samples: usize,
        fs_hz: f32,
        data: Vec<f32>,
    ) -> Result<Self> {
        Self::new(
            n_channels,
            n_samples,
            fs_hz,
            data,
            default_channel_names(n_channels),
        )
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn fs_hz(&self) -> f32 {
        self.fs_hz
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.data[c * self.n_samples..(c + 1) * self.n_samples]
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub sample: usize,
    pub label: Label,
}

/// Stimulus onsets in strictly increasing sample order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EventList {
    events: Vec<Event>,
}

impl EventList {
    pub fn new(events: Vec<Event>) -> Result<Self> {
        for (i, w) in events.windows(2).enumerate() {
            if w[1].sample <= w[0].sample {
                return Err(Error::NonMonotoneEvents(i + 1));
            }
        }
        Ok(Self { events })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Checks that every onset lies inside a recording of `n_samples`.
    pub fn check_bounds(&self, n_samples: usize) -> Result<()> {
        match self.events.iter().position(|e| e.sample >= n_samples) {
            Some(i) => Err(Error::invalid(format!(
                "event {i} at sample {} is past the recording end ({n_samples})",
                self.events[i].sample
            ))),
            None => Ok(()),
        }
    }

    pub fn count(&self, label: Label) -> usize {
        self.events.iter().filter(|e| e.label == label).count()
    }
}

/// Labelled epochs, `data[(epoch * n_channels + channel) * n_samples + sample]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSet {
    n_epochs: usize,
    n_channels: usize,
    n_samples: usize,
    fs_hz: f32,
    labels: Vec<Label>,
    data: Vec<f32>,
    channel_names: Vec<String>,
}

impl EpochSet {
    pub fn new(
        n_channels: usize,
        n_samples: usize,
        fs_hz: f32,
        labels: Vec<Label>,
        data: Vec<f32>,
        channel_names: Vec<String>,
    ) -> Result<Self> {
        let n_epochs = labels.len();
        if n_epochs == 0 {
            return Err(Error::invalid("epoch set must contain at least one epoch"));
        }
        if n_channels == 0 || n_samples == 0 {
            return Err(Error::invalid(
                "epochs must have at least one channel and sample",
            ));
        }
        if !(fs_hz.is_finite() && fs_hz > 0.0) {
            return Err(Error::invalid(format!(
                "sampling rate {fs_hz} must be positive"
            )));
        }
        if data.len() != n_epochs * n_channels * n_samples {
            return Err(Error::dims(format!(
                "{} values for {n_epochs} x {n_channels} x {n_samples}",
                data.len()
            )));
        }
        check_names(&channel_names, n_channels)?;
        check_finite(&data)?;
        Ok(Self {
            n_epochs,
            n_channels,
            n_samples,
            fs_hz,
            labels,
            data,
            channel_names,
        })
    }

    pub fn with_default_names(
        n_channels: usize,
        n_samples: usize,
        fs_hz: f32,
        labels: Vec<Label>,
        data: Vec<f32>,
    ) -> Result<Self> {
        Self::new(
            n_channels,
            n_samples,
            fs_hz,
            labels,
            data,
            default_channel_names(n_channels),
        )
    }

    pub fn n_epochs(&self) -> usize {
        self.n_epochs
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn fs_hz(&self) -> f32 {
        self.fs_hz
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn epoch_len(&self) -> usize {
        self.n_channels * self.n_samples
    }

    /// Channel-major slice of one epoch.
    pub fn epoch(&self, i: usize) -> &[f32] {
        let len = self.epoch_len();
        &self.data[i * len..(i + 1) * len]
    }

    pub fn channel_index(&self, name: &str) -> Result<usize> {
        self.channel_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownChannel(name.to_string()))
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Fails unless both classes are present.
    pub fn require_both_classes(&self) -> Result<()> {
        let targets = self.count(Label::Target);
        let non_targets = self.n_epochs - targets;
        if targets == 0 || non_targets == 0 {
            return Err(Error::SingleClass {
                targets,
                non_targets,
            });
        }
        Ok(())
    }

    /// All epochs widened to `f64`, in the same layout as [`EpochSet::data`].
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }

    /// Subset of epochs in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let len = self.epoch_len();
        let mut data = Vec::with_capacity(indices.len() * len);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n_epochs {
                return Err(Error::invalid(format!("epoch index {i} out of range")));
            }
            data.extend_from_slice(self.epoch(i));
            labels.push(self.labels[i]);
        }
        Self::new(
            self.n_channels,
            self.n_samples,
            self.fs_hz,
            labels,
            data,
            self.channel_names.clone(),
        )
    }
}
