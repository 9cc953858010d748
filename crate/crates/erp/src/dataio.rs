//! Binary and text file formats.
//!
//! All binary formats are little-endian with a 4-byte magic and a `u32` version.
//! The file size must equal the size implied by the header exactly.
//!
//! | file    | header                                                   | payload                       |
//! |---------|----------------------------------------------------------|-------------------------------|
//! | `.erpe` | `ERPE` ver n_epochs n_channels n_samples (u32) fs (f32)  | n_epochs label bytes, f32 data |
//! | `.erpc` | `ERPC` ver n_channels (u32) n_samples (u64) fs (f32)     | f32 data `[channel][sample]`  |
//! | `.erpm` | `ERPM` ver + 11 u32 architecture fields                  | f64 parameters                |
//!
//! The `.erpm` architecture fields are n_channels, n_samples, spatial kernels, then
//! kernels/length/pool for each temporal stage, the fully connected width and the
//! activation code (0 = ReLU, 1 = identity).

use std::fs;
use std::path::Path;

use erp_core::nn::{Activation, Architecture, Network, TemporalLayer};
use erp_core::signal::default_channel_names;
use erp_core::{ContinuousRecording, EpochSet, Event, EventList, Label};

use crate::manifest::KeyValues;

pub const VERSION: u32 = 1;
pub const EPOCHS_MAGIC: &[u8; 4] = b"ERPE";
pub const CONTINUOUS_MAGIC: &[u8; 4] = b"ERPC";
pub const MODEL_MAGIC: &[u8; 4] = b"ERPM";
pub const EVENTS_HEADER: &str = "sample_index,label";

pub const EPOCHS_HEADER_LEN: usize = 24;
pub const CONTINUOUS_HEADER_LEN: usize = 24;
pub const MODEL_HEADER_LEN: usize = 8 + 11 * 4;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported version {found} (expected {VERSION})")]
    Version { found: u32 },
    #[error("file is {actual} bytes but its header implies {expected}")]
    SizeMismatch { expected: u64, actual: u64 },
    #[error("non-finite value at payload index {index}")]
    NonFinite { index: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid architecture header: {0}")]
    Architecture(String),
    #[error(transparent)]
    Invalid(#[from] erp_core::Error),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Little-endian cursor over a byte buffer. Callers check the total size first.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or(DataError::SizeMismatch {
                expected: end as u64,
                actual: self.bytes.len() as u64,
            })?;
        self.pos = end;
        Ok(chunk.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        self.take::<4>().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64> {
        self.take::<8>().map(u64::from_le_bytes)
    }

    fn f32(&mut self) -> Result<f32> {
        self.take::<4>().map(f32::from_le_bytes)
    }

    fn rest(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }
}

fn check_preamble(r: &mut Reader<'_>, magic: &[u8; 4]) -> Result<()> {
    let found = r.take::<4>()?;
    if &found != magic {
        return Err(DataError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(&found).into_owned(),
        });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(DataError::Version { found: version });
    }
    Ok(())
}

fn check_size(expected: u128, actual: usize) -> Result<()> {
    if expected != actual as u128 {
        return Err(DataError::SizeMismatch {
            expected: expected.min(u64::MAX as u128) as u64,
            actual: actual as u64,
        });
    }
    Ok(())
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v)
        .map_err(|_| erp_core::Error::InvalidArgument(format!("{what} {v} exceeds u32")).into())
}

fn decode_f32s(bytes: &[u8]) -> Result<Vec<f32>> {
    bytes
        .chunks_exact(4)
        .enumerate()
        .map(|(i, c)| {
            let v = f32::from_le_bytes(c.try_into().expect("chunk of 4"));
            if v.is_finite() {
                Ok(v)
            } else {
                Err(DataError::NonFinite { index: i })
            }
        })
        .collect()
}

fn check_fs(fs_hz: f32) -> Result<()> {
    if !(fs_hz.is_finite() && fs_hz > 0.0) {
        return Err(erp_core::Error::InvalidArgument(format!(
            "sampling rate {fs_hz} must be positive"
        ))
        .into());
    }
    Ok(())
}

pub fn encode_epochs(set: &EpochSet) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(EPOCHS_HEADER_LEN + set.n_epochs() + 4 * set.data().len());
    out.extend_from_slice(EPOCHS_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(set.n_epochs(), "n_epochs")?.to_le_bytes());
    out.extend_from_slice(&to_u32(set.n_channels(), "n_channels")?.to_le_bytes());
    out.extend_from_slice(&to_u32(set.n_samples(), "n_samples")?.to_le_bytes());
    out.extend_from_slice(&set.fs_hz().to_le_bytes());
    out.extend(set.labels().iter().map(|l| l.as_u8()));
    for v in set.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Channel names come from the channel count (see [`default_channel_names`]).
pub fn decode_epochs(bytes: &[u8]) -> Result<EpochSet> {
    let mut r = Reader::new(bytes);
    check_preamble(&mut r, EPOCHS_MAGIC)?;
    let n_epochs = r.u32()? as usize;
    let n_channels = r.u32()? as usize;
    let n_samples = r.u32()? as usize;
    let fs_hz = r.f32()?;
    let payload = n_epochs as u128 * (1 + 4 * n_channels as u128 * n_samples as u128);
    check_size(EPOCHS_HEADER_LEN as u128 + payload, bytes.len())?;
    check_fs(fs_hz)?;
    let rest = r.rest();
    let (label_bytes, data_bytes) = rest.split_at(n_epochs);
    let labels = label_bytes
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            Label::from_u8(b).ok_or_else(|| DataError::Parse {
                line: 0,
                msg: format!("label byte {b} at epoch {i}"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let data = decode_f32s(data_bytes)?;
    Ok(EpochSet::new(
        n_channels,
        n_samples,
        fs_hz,
        labels,
        data,
        default_channel_names(n_channels),
    )?)
}

pub fn save_epochs(set: &EpochSet, path: &Path) -> Result<()> {
    write_file(path, &encode_epochs(set)?)
}

pub fn load_epochs(path: &Path) -> Result<EpochSet> {
    decode_epochs(&read_file(path)?)
}

pub fn encode_continuous(rec: &ContinuousRecording) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(CONTINUOUS_HEADER_LEN + 4 * rec.data().len());
    out.extend_from_slice(CONTINUOUS_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(rec.n_channels(), "n_channels")?.to_le_bytes());
    out.extend_from_slice(&(rec.n_samples() as u64).to_le_bytes());
    out.extend_from_slice(&rec.fs_hz().to_le_bytes());
    for v in rec.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_continuous(bytes: &[u8]) -> Result<ContinuousRecording> {
    let mut r = Reader::new(bytes);
    check_preamble(&mut r, CONTINUOUS_MAGIC)?;
    let n_channels = r.u32()? as usize;
    let n_samples = r.u64()?;
    let fs_hz = r.f32()?;
    check_size(
        CONTINUOUS_HEADER_LEN as u128 + 4 * n_channels as u128 * n_samples as u128,
        bytes.len(),
    )?;
    check_fs(fs_hz)?;
    let data = decode_f32s(r.rest())?;
    Ok(ContinuousRecording::with_default_names(
        n_channels,
        n_samples as usize,
        fs_hz,
        data,
    )?)
}

pub fn save_continuous(rec: &ContinuousRecording, path: &Path) -> Result<()> {
    write_file(path, &encode_continuous(rec)?)
}

pub fn load_continuous(path: &Path) -> Result<ContinuousRecording> {
    decode_continuous(&read_file(path)?)
}

pub fn format_events(events: &EventList) -> String {
    let mut s = String::from(EVENTS_HEADER);
    s.push('\n');
    for e in events.events() {
        s.push_str(&format!("{},{}\n", e.sample, e.label.as_u8()));
    }
    s
}

/// Parses an events CSV. Blank lines are ignored; line numbers in errors are 1-based.
pub fn parse_events(text: &str) -> Result<EventList> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == EVENTS_HEADER => {}
        Some((_, h)) => {
            return Err(DataError::Parse {
                line: 1,
                msg: format!("expected header {EVENTS_HEADER:?}, found {h:?}"),
            })
        }
        None => {
            return Err(DataError::Parse {
                line: 1,
                msg: "empty events file".into(),
            })
        }
    }
    let mut events = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| DataError::Parse { line: line_no, msg };
        let (sample, label) = line
            .split_once(',')
            .ok_or_else(|| bad(format!("malformed row {line:?}")))?;
        let sample: usize = sample
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad sample index {sample:?}")))?;
        let label = match label.trim() {
            "0" => Label::NonTarget,
            "1" => Label::Target,
            other => return Err(bad(format!("label {other:?} is not 0 or 1"))),
        };
        if let Some(prev) = events.last().map(|e: &Event| e.sample) {
            if sample <= prev {
                return Err(bad(format!(
                    "sample index {sample} does not increase (previous {prev})"
                )));
            }
        }
        events.push(Event { sample, label });
    }
    Ok(EventList::new(events)?)
}

pub fn save_events(events: &EventList, path: &Path) -> Result<()> {
    write_file(path, format_events(events).as_bytes())
}

pub fn load_events(path: &Path) -> Result<EventList> {
    parse_events(&read_text(path)?)
}

fn arch_fields(a: &Architecture) -> [usize; 11] {
    let [t1, t2] = a.temporal;
    [
        a.n_channels,
        a.n_samples,
        a.spatial_kernels,
        t1.kernels,
        t1.length,
        t1.pool,
        t2.kernels,
        t2.length,
        t2.pool,
        a.fc_inputs(),
        a.activation.code() as usize,
    ]
}

pub fn encode_model(net: &Network) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(MODEL_HEADER_LEN + 8 * net.n_params());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in arch_fields(net.architecture()) {
        out.extend_from_slice(&to_u32(v, "architecture field")?.to_le_bytes());
    }
    for p in net.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    Ok(out)
}

/// Validates the architecture header before touching the weights.
pub fn decode_model(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader::new(bytes);
    check_preamble(&mut r, MODEL_MAGIC)?;
    let mut f = [0usize; 11];
    for v in &mut f {
        *v = r.u32()? as usize;
    }
    let activation = Activation::from_code(f[10] as u32)
        .ok_or_else(|| DataError::Architecture(format!("activation code {}", f[10])))?;
    let arch = Architecture {
        n_channels: f[0],
        n_samples: f[1],
        spatial_kernels: f[2],
        temporal: [
            TemporalLayer {
                kernels: f[3],
                length: f[4],
                pool: f[5],
            },
            TemporalLayer {
                kernels: f[6],
                length: f[7],
                pool: f[8],
            },
        ],
        activation,
    };
    arch.validate()
        .map_err(|e| DataError::Architecture(e.to_string()))?;
    if arch.fc_inputs() != f[9] {
        return Err(DataError::Architecture(format!(
            "fc width {} disagrees with the derived width {}",
            f[9],
            arch.fc_inputs()
        )));
    }
    check_size(
        MODEL_HEADER_LEN as u128 + 8 * arch.n_params() as u128,
        bytes.len(),
    )?;
    let params: Vec<f64> = r
        .rest()
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    if let Some(index) = params.iter().position(|v| !v.is_finite()) {
        return Err(DataError::NonFinite { index });
    }
    Ok(Network::from_params(arch, params)?)
}

pub fn save_model(net: &Network, path: &Path) -> Result<()> {
    write_file(path, &encode_model(net)?)
}

pub fn load_model(path: &Path) -> Result<Network> {
    decode_model(&read_file(path)?)
}

/// One subject/condition entry pointing at its train and test epoch files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub subject_id: String,
    pub condition: String,
    pub montage: erp_core::Montage,
    pub train_path: String,
    pub test_path: String,
}

impl DatasetManifest {
    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("subject_id", &self.subject_id);
        kv.set("condition", &self.condition);
        kv.set("montage", self.montage.as_str());
        kv.set("train_path", &self.train_path);
        kv.set("test_path", &self.test_path);
        kv
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let get = |k: &str| {
            kv.get(k)
                .map(str::to_owned)
                .ok_or_else(|| DataError::Parse {
                    line: 0,
                    msg: format!("missing key {k:?}"),
                })
        };
        let montage = get("montage")?;
        Ok(Self {
            subject_id: get("subject_id")?,
            condition: get("condition")?,
            montage: erp_core::Montage::parse(&montage).ok_or_else(|| DataError::Parse {
                line: 0,
                msg: format!("unknown montage {montage:?}"),
            })?,
            train_path: get("train_path")?,
            test_path: get("test_path")?,
        })
    }

    /// Channel count of `set` must match the montage (scalp 32, ear 18).
    pub fn validate_against(&self, set: &EpochSet) -> Result<()> {
        if set.n_channels() != self.montage.n_channels() {
            return Err(erp_core::Error::DimensionMismatch(format!(
                "{} montage has {} channels, epoch file has {}",
                self.montage.as_str(),
                self.montage.n_channels(),
                set.n_channels()
            ))
            .into());
        }
        Ok(())
    }
}

pub fn save_manifest(m: &DatasetManifest, path: &Path) -> Result<()> {
    write_file(path, m.to_key_values().to_text().as_bytes())
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    DatasetManifest::from_key_values(&KeyValues::parse(&read_text(path)?)?)
}
