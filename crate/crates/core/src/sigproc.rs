//! Preprocessing: FIR design and filtering, decimation, epoching, channel selection.
//!
//! The fixed chain is decimate (anti-alias lowpass, then keep every n-th sample),
//! high-pass the continuous signal, then cut stimulus-locked epochs.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::signal::{ContinuousRecording, EpochSet, Event, EventList};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirKind {
    Lowpass,
    Highpass,
}

impl FirKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FirKind::Lowpass => "lowpass",
            FirKind::Highpass => "highpass",
        }
    }
}

/// Linear-phase FIR filter with an odd number of symmetric taps.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    taps: Vec<f64>,
    kind: FirKind,
    cutoff_hz: f64,
    design_fs_hz: f64,
}

impl FirFilter {
    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn kind(&self) -> FirKind {
        self.kind
    }

    pub fn cutoff_hz(&self) -> f64 {
        self.cutoff_hz
    }

    pub fn design_fs_hz(&self) -> f64 {
        self.design_fs_hz
    }

    pub fn group_delay_samples(&self) -> usize {
        (self.taps.len() - 1) / 2
    }

    /// Magnitude of the frequency response at `freq_hz`.
    pub fn gain_at(&self, freq_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / self.design_fs_hz;
        let (mut re, mut im) = (0.0, 0.0);
        for (n, &h) in self.taps.iter().enumerate() {
            let phase = w * n as f64;
            re += h * libm::cos(phase);
            im -= h * libm::sin(phase);
        }
        libm::sqrt(re * re + im * im)
    }
}

fn hamming(n: usize, len: usize) -> f64 {
    0.54 - 0.46 * libm::cos(2.0 * PI * n as f64 / (len - 1) as f64)
}

/// Hamming-windowed sinc design.
///
/// The lowpass is normalised to unit DC gain. The highpass is the spectral
/// inversion `delta - lowpass` of the lowpass with the same cutoff, so its DC gain
/// is zero up to rounding.
pub fn design_fir(kind: FirKind, cutoff_hz: f64, n_taps: usize, fs_hz: f64) -> Result<FirFilter> {
    if n_taps < 3 || n_taps.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "tap count must be odd and >= 3, got {n_taps}"
        )));
    }
    if !(fs_hz.is_finite() && fs_hz > 0.0) {
        return Err(Error::invalid(format!(
            "sampling rate {fs_hz} must be positive"
        )));
    }
    if !(cutoff_hz > 0.0 && cutoff_hz < fs_hz / 2.0) {
        return Err(Error::invalid(format!(
            "cutoff {cutoff_hz} Hz must lie in (0, {}) Hz",
            fs_hz / 2.0
        )));
    }
    let fc = cutoff_hz / fs_hz;
    let mid = (n_taps - 1) / 2;
    let mut taps: Vec<f64> = (0..n_taps)
        .map(|n| {
            let x = n as f64 - mid as f64;
            let sinc = if n == mid {
                2.0 * fc
            } else {
                libm::sin(2.0 * PI * fc * x) / (PI * x)
            };
            sinc * hamming(n, n_taps)
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    // Mirror so both halves are bit-identical.
    for i in 0..mid {
        taps[n_taps - 1 - i] = taps[i];
    }
    if kind == FirKind::Highpass {
        for t in &mut taps {
            *t = -*t;
        }
        taps[mid] += 1.0;
    }
    Ok(FirFilter {
        taps,
        kind,
        cutoff_hz,
        design_fs_hz: fs_hz,
    })
}

/// Whole-sample symmetric reflection of `i` into `0..n` (the edge sample is not repeated).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

/// Filters one channel with reflection padding and removes the group delay, so
/// `out[n] = sum_k taps[k] * x[n + D - k]` with `D = (len - 1) / 2`.
pub fn filter_channel(taps: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let delay = (taps.len() - 1) / 2;
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    for i in 0..n {
        let base = i as isize + delay as isize;
        let mut acc = 0.0;
        for (k, &h) in taps.iter().enumerate() {
            let j = base - k as isize;
            let v = if j >= 0 && (j as usize) < n {
                x[j as usize]
            } else {
                x[reflect(j, n)]
            };
            acc += h * v;
        }
        out.push(acc);
    }
    out
}

pub fn apply_fir(x: &ContinuousRecording, f: &FirFilter) -> Result<ContinuousRecording> {
    let fs = f64::from(x.fs_hz());
    if (fs - f.design_fs_hz).abs() > 1e-9 * fs {
        return Err(Error::RateMismatch {
            filter: f.design_fs_hz,
            signal: fs,
        });
    }
    let mut data = Vec::with_capacity(x.data().len());
    let mut buf = Vec::with_capacity(x.n_samples());
    for c in 0..x.n_channels() {
        buf.clear();
        buf.extend(x.channel(c).iter().map(|&v| f64::from(v)));
        data.extend(filter_channel(&f.taps, &buf).into_iter().map(|v| v as f32));
    }
    ContinuousRecording::new(
        x.n_channels(),
        x.n_samples(),
        x.fs_hz(),
        data,
        x.channel_names().to_vec(),
    )
}

/// Preprocessing parameters. Defaults: 100 Hz target rate, 40 Hz / 101-tap
/// anti-alias lowpass at the source rate, 3 Hz / 251-tap highpass at the target
/// rate, epochs from 0 to 800 ms after each stimulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessConfig {
    pub target_fs_hz: f64,
    pub highpass_cutoff_hz: f64,
    pub highpass_taps: usize,
    pub antialias_cutoff_hz: f64,
    pub antialias_taps: usize,
    pub epoch_window_ms: (f64, f64),
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            target_fs_hz: 100.0,
            highpass_cutoff_hz: 3.0,
            highpass_taps: 251,
            antialias_cutoff_hz: 40.0,
            antialias_taps: 101,
            epoch_window_ms: (0.0, 800.0),
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_fs_hz.is_finite() && self.target_fs_hz > 0.0) {
            return Err(Error::invalid("target rate must be positive"));
        }
        let (start, end) = self.epoch_window_ms;
        if !(start.is_finite() && end.is_finite() && end > start) {
            return Err(Error::invalid(format!(
                "epoch window {start}:{end} ms is empty"
            )));
        }
        Ok(())
    }

    /// Epoch window in samples at `fs_hz`: (offset from the event, length).
    pub fn window_samples(&self, fs_hz: f64) -> Result<(isize, usize)> {
        self.validate()?;
        let (start, end) = self.epoch_window_ms;
        let offset = libm::round(start * fs_hz / 1000.0) as isize;
        let stop = libm::round(end * fs_hz / 1000.0) as isize;
        if stop <= offset {
            return Err(Error::invalid(format!(
                "epoch window {start}:{end} ms is shorter than one sample at {fs_hz} Hz"
            )));
        }
        Ok((offset, (stop - offset) as usize))
    }
}

/// Integer decimation factor from `source_hz` to `target_hz`.
pub fn decimation_factor(source_hz: f64, target_hz: f64) -> Result<usize> {
    let ratio = source_hz / target_hz;
    let rounded = libm::round(ratio);
    if !(rounded >= 1.0 && (ratio - rounded).abs() <= 1e-9 * ratio) {
        return Err(Error::NonIntegerRatio {
            source_hz,
            target_hz,
        });
    }
    Ok(rounded as usize)
}

/// Anti-alias lowpass at the source rate, then keeps every `fs / target_fs`-th sample.
///
/// A factor of one returns the input unchanged. Event onsets must be mapped with
/// [`rescale_events`] using the same factor.
pub fn decimate(x: &ContinuousRecording, cfg: &PreprocessConfig) -> Result<ContinuousRecording> {
    let fs = f64::from(x.fs_hz());
    let factor = decimation_factor(fs, cfg.target_fs_hz)?;
    if factor == 1 {
        return Ok(x.clone());
    }
    let lowpass = design_fir(
        FirKind::Lowpass,
        cfg.antialias_cutoff_hz,
        cfg.antialias_taps,
        fs,
    )?;
    let filtered = apply_fir(x, &lowpass)?;
    let n_out = x.n_samples().div_ceil(factor);
    let mut data = Vec::with_capacity(x.n_channels() * n_out);
    for c in 0..x.n_channels() {
        data.extend(filtered.channel(c).iter().step_by(factor).copied());
    }
    ContinuousRecording::new(
        x.n_channels(),
        n_out,
        cfg.target_fs_hz as f32,
        data,
        x.channel_names().to_vec(),
    )
}

/// Maps event onsets to the decimated time base (nearest output sample).
pub fn rescale_events(ev: &EventList, factor: usize) -> Result<EventList> {
    let events = ev
        .events()
        .iter()
        .map(|e| Event {
            sample: (e.sample + factor / 2) / factor,
            label: e.label,
        })
        .collect();
    EventList::new(events)
}

/// Epochs plus the number of events whose window fell outside the recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub epochs: EpochSet,
    pub dropped: usize,
}

pub fn extract_epochs(
    x: &ContinuousRecording,
    ev: &EventList,
    cfg: &PreprocessConfig,
) -> Result<Extraction> {
    let (offset, len) = cfg.window_samples(f64::from(x.fs_hz()))?;
    let n = x.n_samples() as isize;
    let mut labels = Vec::new();
    let mut data = Vec::new();
    let mut dropped = 0;
    for e in ev.events() {
        let start = e.sample as isize + offset;
        if start < 0 || start + len as isize > n {
            dropped += 1;
            continue;
        }
        let start = start as usize;
        for c in 0..x.n_channels() {
            data.extend_from_slice(&x.channel(c)[start..start + len]);
        }
        labels.push(e.label);
    }
    if labels.is_empty() {
        return Err(Error::NoEpochs { dropped });
    }
    let epochs = EpochSet::new(
        x.n_channels(),
        len,
        x.fs_hz(),
        labels,
        data,
        x.channel_names().to_vec(),
    )?;
    Ok(Extraction { epochs, dropped })
}

/// Restricts `set` to the named channels, in the requested order.
pub fn select_channels<S: AsRef<str>>(set: &EpochSet, names: &[S]) -> Result<EpochSet> {
    if names.is_empty() {
        return Err(Error::invalid("no channels requested"));
    }
    let idx = names
        .iter()
        .map(|n| set.channel_index(n.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let t = set.n_samples();
    let mut data = Vec::with_capacity(set.n_epochs() * idx.len() * t);
    for e in 0..set.n_epochs() {
        let epoch = set.epoch(e);
        for &c in &idx {
            data.extend_from_slice(&epoch[c * t..(c + 1) * t]);
        }
    }
    EpochSet::new(
        idx.len(),
        t,
        set.fs_hz(),
        set.labels().to_vec(),
        data,
        names.iter().map(|n| n.as_ref().to_string()).collect(),
    )
}

/// Full chain: decimate, high-pass the continuous signal, rescale events, epoch.
pub fn preprocess(
    x: &ContinuousRecording,
    ev: &EventList,
    cfg: &PreprocessConfig,
) -> Result<Extraction> {
    ev.check_bounds(x.n_samples())?;
    let factor = decimation_factor(f64::from(x.fs_hz()), cfg.target_fs_hz)?;
    let decimated = decimate(x, cfg)?;
    let highpass = design_fir(
        FirKind::Highpass,
        cfg.highpass_cutoff_hz,
        cfg.highpass_taps,
        f64::from(decimated.fs_hz()),
    )?;
    let filtered = apply_fir(&decimated, &highpass)?;
    let events = rescale_events(ev, factor)?;
    extract_epochs(&filtered, &events, cfg)
}
