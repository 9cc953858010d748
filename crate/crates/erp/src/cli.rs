//! `erp` command-line driver.
//!
//! Every parameter resolves as flag, then `--config` file entry, then built-in
//! default. The effective values, seeds included, are written to
//! `<out>/resolved-config.txt` before the command runs, so any run can be replayed
//! with `--config <out>/resolved-config.txt`. Config keys are the long flag names
//! with `-` or `_`.
//!
//! Exit codes: 0 success, 1 runtime or data error, 2 usage error.

use std::fmt::Display;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use erp_core::ensemble::{self, EnsembleConfig, EnsembleMode};
use erp_core::eval::{self, EvalReport, StdConvention, SubjectAuc};
use erp_core::nn::{self, Architecture, TrainConfig};
use erp_core::sigproc::{self, PreprocessConfig};
use erp_core::synth::{self, GaitArtifact, SynthConfig};
use erp_core::Montage;

use crate::dataio;
use crate::manifest::KeyValues;
use crate::store::{ModelKind, StoredModel};

pub const RESOLVED_CONFIG: &str = "resolved-config.txt";
pub const LOCK_FILE: &str = ".erp.lock";
pub const RECORDING_FILE: &str = "recording.erpc";
pub const EVENTS_FILE: &str = "events.csv";
pub const EPOCHS_FILE: &str = "epochs.erpe";
pub const EVALUATION_FILE: &str = "evaluation.tsv";
pub const SCORES_FILE: &str = "scores.csv";
pub const REPORT_FILE: &str = "report.tsv";

#[derive(Debug, Parser)]
#[command(
    name = "erp",
    version,
    about = "ERP decoding pipeline: synthetic data, preprocessing, ensemble training, evaluation"
)]
pub struct Cli {
    /// key=value file supplying defaults for any flag.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Base seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Suppress summary output (warnings and errors still go to stderr).
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic oddball recording (.erpc + events CSV).
    Synth(SynthArgs),
    /// Decimate, highpass and epoch a recording into an .erpe file.
    Preprocess(PreprocessArgs),
    /// Train an ensemble (or the plain SGD baseline) on an .erpe file.
    Train(TrainArgs),
    /// Score a trained model on an .erpe file and report its AUC.
    Evaluate(EvaluateArgs),
    /// Check analytic gradients against central differences on small random nets.
    Gradcheck(GradcheckArgs),
    /// Aggregate per-subject AUC tables into mean±std and a scalp/ear t-test.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n_trials: Option<usize>,
    #[arg(long)]
    pub target_ratio: Option<f64>,
    /// Sampling rate before decimation.
    #[arg(long)]
    pub fs: Option<f64>,
    /// scalp or ear.
    #[arg(long)]
    pub montage: Option<String>,
    /// Channel count; defaults to the montage's.
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub latency_ms: Option<f64>,
    #[arg(long)]
    pub amplitude_uv: Option<f64>,
    #[arg(long)]
    pub width_ms: Option<f64>,
    #[arg(long)]
    pub noise_std: Option<f64>,
    /// Add the periodic gait artifact.
    #[arg(long)]
    pub gait: bool,
    #[arg(long)]
    pub gait_freq: Option<f64>,
    #[arg(long)]
    pub gait_amplitude: Option<f64>,
    /// Also write preprocessed epochs with the default preprocessing.
    #[arg(long)]
    pub epochs: bool,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Continuous .erpc input.
    #[arg(long)]
    pub recording: Option<PathBuf>,
    /// Events CSV input.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Epoch window in ms relative to onset, e.g. 0:800.
    #[arg(long)]
    pub window: Option<String>,
    #[arg(long)]
    pub target_fs: Option<f64>,
    #[arg(long)]
    pub highpass_hz: Option<f64>,
    #[arg(long)]
    pub highpass_taps: Option<usize>,
    #[arg(long)]
    pub antialias_hz: Option<f64>,
    #[arg(long)]
    pub antialias_taps: Option<usize>,
    /// Comma-separated channel names to keep.
    #[arg(long)]
    pub channels: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training .erpe file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub groups: Option<usize>,
    /// shared, independent or baseline.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub init_seed: Option<u64>,
    #[arg(long)]
    pub shuffle_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Model directory written by `train`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Test .erpe file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Write the ROC curve as CSV (fpr,tpr).
    #[arg(long, value_name = "PATH")]
    pub roc: Option<PathBuf>,
    #[arg(long)]
    pub subject: Option<String>,
    /// scalp or ear; defaults from the channel count.
    #[arg(long)]
    pub montage: Option<String>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub n_seeds: Option<usize>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Per-subject TSV files (subject, montage, auc rows).
    pub inputs: Vec<PathBuf>,
    /// population or sample.
    #[arg(long)]
    pub std: Option<String>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<dataio::DataError> for CliError {
    fn from(e: dataio::DataError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<erp_core::Error> for CliError {
    fn from(e: erp_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Flag > config file > default, recording every effective value.
struct Resolver {
    file: KeyValues,
    echo: KeyValues,
}

impl Resolver {
    fn new(file: KeyValues) -> Self {
        Self {
            file,
            echo: KeyValues::default(),
        }
    }

    fn file_value<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        let alt = key.replace('_', "-");
        match self.file.get(key).or_else(|| self.file.get(&alt)) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| usage(format!("config: bad value {v:?} for {key}"))),
        }
    }

    fn get<T: FromStr + Display>(
        &mut self,
        key: &str,
        flag: Option<T>,
        default: T,
    ) -> CliResult<T> {
        let v = match flag {
            Some(v) => v,
            None => self.file_value(key)?.unwrap_or(default),
        };
        self.echo.set(key, &v);
        Ok(v)
    }

    fn optional<T: FromStr + Display>(
        &mut self,
        key: &str,
        flag: Option<T>,
    ) -> CliResult<Option<T>> {
        let v = match flag {
            Some(v) => Some(v),
            None => self.file_value(key)?,
        };
        self.echo
            .set(key, v.as_ref().map(|v| v.to_string()).unwrap_or_default());
        Ok(v)
    }

    fn required<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> CliResult<T> {
        self.optional(key, flag)?
            .ok_or_else(|| usage(format!("--{} is required", key.replace('_', "-"))))
    }

    fn switch(&mut self, key: &str, flag: bool) -> CliResult<bool> {
        self.get(key, flag.then_some(true), false)
    }
}

/// Exclusive claim on an output directory, released on drop.
struct DirLock {
    path: PathBuf,
}

impl DirLock {
    fn acquire(dir: &Path) -> CliResult<Self> {
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(CliError::Runtime(format!(
                    "{} is in use by another run (delete {} if it is stale)",
                    dir.display(),
                    path.display()
                )))
            }
            Err(e) => Err(CliError::Runtime(format!("{}: {e}", path.display()))),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

struct Ctx {
    out: PathBuf,
    quiet: bool,
    seed: Option<u64>,
}

impl Ctx {
    fn say(&self, msg: impl Display) {
        if !self.quiet {
            println!("{msg}");
        }
    }
}

/// Parses `argv` and runs the command. Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("erp: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let file = match &cli.config {
        Some(p) => KeyValues::load(p).map_err(|e| usage(format!("config {}: {e}", p.display())))?,
        None => KeyValues::default(),
    };
    let mut r = Resolver::new(file);
    let out = match cli.out {
        Some(o) => o,
        None => r
            .file_value::<PathBuf>("out")?
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    let seed = match cli.seed {
        Some(s) => Some(s),
        None => r.file_value("seed")?,
    };
    let quiet = cli.quiet || r.file_value::<bool>("quiet")?.unwrap_or(false);
    let ctx = Ctx { out, quiet, seed };

    // Resolve everything before touching the output directory so usage errors
    // leave no trace.
    let job = resolve(&cli.command, &ctx, &mut r)?;
    fs::create_dir_all(&ctx.out)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", ctx.out.display())))?;
    let _lock = DirLock::acquire(&ctx.out)?;
    r.echo.set("out", ctx.out.display());
    r.echo.save(&ctx.out.join(RESOLVED_CONFIG))?;
    job.execute(&ctx)
}

enum Job {
    Synth {
        cfg: SynthConfig,
        epochs: Option<PreprocessConfig>,
    },
    Preprocess {
        recording: PathBuf,
        events: PathBuf,
        cfg: PreprocessConfig,
        channels: Option<Vec<String>>,
    },
    Train {
        data: PathBuf,
        kind: ModelKind,
        cfg: EnsembleConfig,
    },
    Evaluate {
        model: PathBuf,
        data: PathBuf,
        roc: Option<PathBuf>,
        subject: String,
        montage: Option<Montage>,
    },
    Gradcheck {
        seed: u64,
        n_seeds: usize,
        step: f64,
        tolerance: f64,
        channels: usize,
        samples: usize,
    },
    Report {
        inputs: Vec<PathBuf>,
        convention: StdConvention,
    },
}

fn parse_montage(s: &str) -> CliResult<Montage> {
    Montage::parse(s).ok_or_else(|| usage(format!("unknown montage {s:?} (scalp or ear)")))
}

fn parse_window(s: &str) -> CliResult<(f64, f64)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| usage(format!("window {s:?} must look like START:END")))?;
    match (a.trim().parse(), b.trim().parse()) {
        (Ok(a), Ok(b)) => Ok((a, b)),
        _ => Err(usage(format!(
            "window {s:?} must look like START:END in ms"
        ))),
    }
}

fn resolve(cmd: &Command, ctx: &Ctx, r: &mut Resolver) -> CliResult<Job> {
    match cmd {
        Command::Synth(a) => {
            r.echo.set("command", "synth");
            let montage = parse_montage(&r.get("montage", a.montage.clone(), "scalp".into())?)?;
            let d = SynthConfig::for_montage(montage);
            let gait = r.switch("gait", a.gait)?;
            let gd = GaitArtifact::default();
            let gait_freq = r.get("gait_freq", a.gait_freq, gd.step_freq_hz)?;
            let gait_amplitude = r.get("gait_amplitude", a.gait_amplitude, gd.amplitude_uv)?;
            let cfg = SynthConfig {
                n_trials: r.get("n_trials", a.n_trials, d.n_trials)?,
                target_ratio: r.get("target_ratio", a.target_ratio, d.target_ratio)?,
                fs_hz: r.get("fs", a.fs, d.fs_hz)?,
                montage,
                n_channels: r.get("channels", a.channels, d.n_channels)?,
                p300_latency_ms: r.get("latency_ms", a.latency_ms, d.p300_latency_ms)?,
                p300_amplitude_uv: r.get("amplitude_uv", a.amplitude_uv, d.p300_amplitude_uv)?,
                p300_width_ms: r.get("width_ms", a.width_ms, d.p300_width_ms)?,
                noise_std_uv: r.get("noise_std", a.noise_std, d.noise_std_uv)?,
                gait: gait.then_some(GaitArtifact {
                    step_freq_hz: gait_freq,
                    amplitude_uv: gait_amplitude,
                }),
                seed: r.get("seed", ctx.seed, 0)?,
                ..d
            };
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            let epochs = r
                .switch("epochs", a.epochs)?
                .then(PreprocessConfig::default);
            Ok(Job::Synth { cfg, epochs })
        }
        Command::Preprocess(a) => {
            r.echo.set("command", "preprocess");
            let d = PreprocessConfig::default();
            let recording = r.required(
                "recording",
                a.recording.as_ref().map(|p| p.display().to_string()),
            )?;
            let events =
                r.required("events", a.events.as_ref().map(|p| p.display().to_string()))?;
            let window = r.get(
                "window",
                a.window.clone(),
                format!("{}:{}", d.epoch_window_ms.0, d.epoch_window_ms.1),
            )?;
            let cfg = PreprocessConfig {
                target_fs_hz: r.get("target_fs", a.target_fs, d.target_fs_hz)?,
                highpass_cutoff_hz: r.get("highpass_hz", a.highpass_hz, d.highpass_cutoff_hz)?,
                highpass_taps: r.get("highpass_taps", a.highpass_taps, d.highpass_taps)?,
                antialias_cutoff_hz: r.get(
                    "antialias_hz",
                    a.antialias_hz,
                    d.antialias_cutoff_hz,
                )?,
                antialias_taps: r.get("antialias_taps", a.antialias_taps, d.antialias_taps)?,
                epoch_window_ms: parse_window(&window)?,
            };
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            let channels = r.optional("channels", a.channels.clone())?.map(|s| {
                s.split(',')
                    .map(|c| c.trim().to_owned())
                    .filter(|c| !c.is_empty())
                    .collect::<Vec<_>>()
            });
            Ok(Job::Preprocess {
                recording: recording.into(),
                events: events.into(),
                cfg,
                channels,
            })
        }
        Command::Train(a) => {
            r.echo.set("command", "train");
            let d = EnsembleConfig::default();
            let data = r.required("data", a.data.as_ref().map(|p| p.display().to_string()))?;
            let mode = r.get("mode", a.mode.clone(), d.mode.as_str().into())?;
            let kind = ModelKind::parse(&mode).ok_or_else(|| {
                usage(format!(
                    "unknown mode {mode:?} (shared, independent or baseline)"
                ))
            })?;
            let train = TrainConfig {
                learning_rate: r.get("lr", a.lr, d.train.learning_rate)?,
                epochs: r.get("epochs", a.epochs, d.train.epochs)?,
                batch_size: r.get("batch_size", a.batch_size, d.train.batch_size)?,
                init_seed: r.get(
                    "init_seed",
                    a.init_seed,
                    ctx.seed.unwrap_or(d.train.init_seed),
                )?,
            };
            let cfg = EnsembleConfig {
                mode: match kind {
                    ModelKind::Ensemble(m) => m,
                    ModelKind::Baseline => EnsembleMode::default(),
                },
                n_groups: r.get("groups", a.groups, d.n_groups)?,
                train,
                shuffle_seed: r.get(
                    "shuffle_seed",
                    a.shuffle_seed,
                    ctx.seed.unwrap_or(d.shuffle_seed),
                )?,
            };
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            Ok(Job::Train {
                data: data.into(),
                kind,
                cfg,
            })
        }
        Command::Evaluate(a) => {
            r.echo.set("command", "evaluate");
            let model = r.required("model", a.model.as_ref().map(|p| p.display().to_string()))?;
            let data = r.required("data", a.data.as_ref().map(|p| p.display().to_string()))?;
            let roc = r.optional("roc", a.roc.as_ref().map(|p| p.display().to_string()))?;
            let subject = r.get("subject", a.subject.clone(), "s01".into())?;
            let montage = r
                .optional("montage", a.montage.clone())?
                .map(|m| parse_montage(&m))
                .transpose()?;
            Ok(Job::Evaluate {
                model: model.into(),
                data: data.into(),
                roc: roc.map(Into::into),
                subject,
                montage,
            })
        }
        Command::Gradcheck(a) => {
            r.echo.set("command", "gradcheck");
            let job = Job::Gradcheck {
                seed: r.get("seed", ctx.seed, 0)?,
                n_seeds: r.get("n_seeds", a.n_seeds, 20)?,
                step: r.get("step", a.step, 1e-6)?,
                tolerance: r.get("tolerance", a.tolerance, 1e-6)?,
                channels: r.get("channels", a.channels, 3)?,
                samples: r.get("samples", a.samples, 20)?,
            };
            if let Job::Gradcheck { n_seeds, step, .. } = job {
                if n_seeds == 0 || !(step > 0.0 && step.is_finite()) {
                    return Err(usage("need n_seeds >= 1 and a positive step"));
                }
            }
            Ok(job)
        }
        Command::Report(a) => {
            r.echo.set("command", "report");
            let listed = if a.inputs.is_empty() {
                None
            } else {
                Some(join_paths(&a.inputs))
            };
            let inputs: Vec<PathBuf> = r
                .required("inputs", listed)?
                .split(',')
                .filter(|s| !s.is_empty())
                .map(PathBuf::from)
                .collect();
            let convention = match r.get("std", a.std.clone(), "population".into())?.as_str() {
                "population" => StdConvention::Population,
                "sample" => StdConvention::Sample,
                other => {
                    return Err(usage(format!(
                        "unknown std convention {other:?} (population or sample)"
                    )))
                }
            };
            Ok(Job::Report { inputs, convention })
        }
    }
}

fn join_paths(paths: &[PathBuf]) -> String {
    paths
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl Job {
    fn execute(self, ctx: &Ctx) -> CliResult<()> {
        match self {
            Job::Synth { cfg, epochs } => {
                let s = synth::generate(&cfg)?;
                dataio::save_continuous(&s.recording, &ctx.out.join(RECORDING_FILE))?;
                dataio::save_events(&s.events, &ctx.out.join(EVENTS_FILE))?;
                ctx.say(format_args!(
                    "synth: {} trials ({} targets), {} channels x {} samples at {} Hz -> {}",
                    s.events.len(),
                    s.events.count(erp_core::Label::Target),
                    s.recording.n_channels(),
                    s.recording.n_samples(),
                    s.recording.fs_hz(),
                    ctx.out.display()
                ));
                if let Some(pre) = epochs {
                    let ex = sigproc::preprocess(&s.recording, &s.events, &pre)?;
                    dataio::save_epochs(&ex.epochs, &ctx.out.join(EPOCHS_FILE))?;
                }
                Ok(())
            }
            Job::Preprocess {
                recording,
                events,
                cfg,
                channels,
            } => {
                let rec = dataio::load_continuous(&recording)?;
                let ev = dataio::load_events(&events)?;
                let ex = sigproc::preprocess(&rec, &ev, &cfg)?;
                let set = match channels {
                    Some(names) => sigproc::select_channels(&ex.epochs, &names)?,
                    None => ex.epochs,
                };
                dataio::save_epochs(&set, &ctx.out.join(EPOCHS_FILE))?;
                ctx.say(format_args!(
                    "preprocess: {} epochs ({} dropped), {} channels x {} samples at {} Hz",
                    set.n_epochs(),
                    ex.dropped,
                    set.n_channels(),
                    set.n_samples(),
                    set.fs_hz()
                ));
                Ok(())
            }
            Job::Train { data, kind, cfg } => {
                let set = dataio::load_epochs(&data)?;
                if cfg.train.epochs == 0 {
                    eprintln!("erp: warning: --epochs 0 saves the untrained initialisation");
                }
                let stored = match kind {
                    ModelKind::Ensemble(_) => {
                        StoredModel::from_ensemble(&ensemble::train(&set, &cfg)?)
                    }
                    ModelKind::Baseline => {
                        let (net, trace) =
                            ensemble::train_baseline(&set, &cfg.train, cfg.shuffle_seed)?;
                        StoredModel::from_baseline(net, trace, cfg.train, cfg.shuffle_seed)
                    }
                };
                stored.save(&ctx.out)?;
                let last = stored
                    .loss_trace
                    .last()
                    .map(|l| format!("{l:.6}"))
                    .unwrap_or_else(|| "n/a".into());
                ctx.say(format_args!(
                    "train: {} model, {} network(s), {} epochs, final loss {last}",
                    kind.as_str(),
                    stored.networks.len(),
                    stored.loss_trace.len()
                ));
                Ok(())
            }
            Job::Evaluate {
                model,
                data,
                roc,
                subject,
                montage,
            } => {
                let stored = StoredModel::load(&model)?;
                let set = dataio::load_epochs(&data)?;
                let montage = montage.unwrap_or(if set.n_channels() == Montage::Ear.n_channels() {
                    Montage::Ear
                } else {
                    Montage::Scalp
                });
                let scores = stored.predict(&set)?;
                let auc = eval::auc(&scores, set.labels())?;
                let mut csv = String::from("label,score\n");
                for (l, s) in set.labels().iter().zip(&scores) {
                    csv.push_str(&format!("{},{}\n", l.as_u8(), s));
                }
                dataio::write_file(&ctx.out.join(SCORES_FILE), csv.as_bytes())?;
                if let Some(path) = roc {
                    let curve = eval::roc_curve(&scores, set.labels())?;
                    let mut csv = String::from("fpr,tpr\n");
                    for (x, y) in &curve.points {
                        csv.push_str(&format!("{x},{y}\n"));
                    }
                    dataio::write_file(&path, csv.as_bytes())?;
                }
                let report = EvalReport::from_aucs(
                    vec![SubjectAuc {
                        subject: subject.clone(),
                        montage,
                        auc,
                    }],
                    StdConvention::default(),
                )?;
                dataio::write_file(&ctx.out.join(EVALUATION_FILE), report.to_tsv().as_bytes())?;
                ctx.say(format_args!(
                    "evaluate: subject {subject} ({}) auc={auc:.6}",
                    montage.as_str()
                ));
                Ok(())
            }
            Job::Gradcheck {
                seed,
                n_seeds,
                step,
                tolerance,
                channels,
                samples,
            } => {
                let arch = Architecture::compact(channels, samples);
                arch.validate().map_err(|e| usage(e.to_string()))?;
                let mut worst: f64 = 0.0;
                for s in seed..seed + n_seeds as u64 {
                    let (net, x, t) = nn::random_problem(arch, s)?;
                    let g = nn::finite_diff_check(&net, &x, t, step)?;
                    if !ctx.quiet && n_seeds <= 50 {
                        println!("seed {s}: max relative error {:.3e}", g.max_rel_error);
                    }
                    worst = worst.max(g.max_rel_error);
                }
                let pass = worst <= tolerance;
                ctx.say(format_args!(
                    "gradcheck: max relative error {worst:.3e} over {n_seeds} seed(s), step {step:e}, tolerance {tolerance:e}: {}",
                    if pass { "PASS" } else { "FAIL" }
                ));
                if pass {
                    Ok(())
                } else {
                    Err(CliError::Runtime(format!(
                        "gradient check failed ({worst:.3e} > {tolerance:e})"
                    )))
                }
            }
            Job::Report { inputs, convention } => {
                let mut rows = Vec::new();
                for p in &inputs {
                    rows.extend(
                        parse_auc_rows(&dataio::read_text(p)?)
                            .map_err(|m| CliError::Runtime(format!("{}: {m}", p.display())))?,
                    );
                }
                let report = EvalReport::from_aucs(rows, convention)?;
                let tsv = report.to_tsv();
                dataio::write_file(&ctx.out.join(REPORT_FILE), tsv.as_bytes())?;
                ctx.say(tsv.trim_end());
                Ok(())
            }
        }
    }
}

/// Reads `subject montage auc` rows from a TSV, skipping the header and the
/// summary rows that `evaluate` and `report` append.
pub fn parse_auc_rows(text: &str) -> Result<Vec<SubjectAuc>, String> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if line.trim().is_empty()
            || cols[0] == "subject"
            || matches!(cols[0], "mean" | "std" | "table" | "ttest")
        {
            continue;
        }
        let [subject, montage, auc] = cols[..] else {
            return Err(format!("line {}: expected 3 tab-separated columns", i + 1));
        };
        let montage = Montage::parse(montage)
            .ok_or_else(|| format!("line {}: unknown montage {montage:?}", i + 1))?;
        let auc = auc
            .parse()
            .map_err(|_| format!("line {}: bad AUC {auc:?}", i + 1))?;
        rows.push(SubjectAuc {
            subject: subject.to_owned(),
            montage,
            auc,
        });
    }
    Ok(rows)
}
