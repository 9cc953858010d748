//! Acceptance suite. Prints one PASS/FAIL line per criterion plus a summary.
//!
//! Run with `cargo test -p erp --test acceptance`. The process exits non-zero only
//! if a criterion cannot be evaluated at all (a crash or I/O failure); a criterion
//! that runs but misses its threshold is reported as FAIL. Every threshold checked
//! here is also asserted by the ordinary test targets, except the baseline
//! comparison in criterion 5.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use erp_core::ensemble::{
    averaged_gradient, balanced_batches, ensemble_train_step, partition, EnsembleMode, Inputs,
};
use erp_core::eval;
use erp_core::nn::{self, Architecture, Network};
use erp_core::sigproc::{design_fir, FirKind};
use erp_core::{rng, EpochSet, Label};
use rand::Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Check = Result<Outcome, String>;

fn erp(args: &[&str]) -> Result<Output, String> {
    Command::new(env!("CARGO_BIN_EXE_erp"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())
}

fn run_ok(args: &[&str]) -> Result<String, String> {
    let o = erp(args)?;
    if !o.status.success() {
        return Err(format!(
            "erp {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&o.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&o.stdout).into_owned())
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

fn value_after(text: &str, key: &str) -> Result<f64, String> {
    let at = text
        .find(key)
        .ok_or_else(|| format!("{key:?} missing in {text:?}"))?
        + key.len();
    text[at..]
        .split(|c: char| c.is_whitespace() || c == ',')
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| format!("no number after {key:?}"))
}

fn gradient_correctness() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let out = run_ok(&[
        "gradcheck",
        "--out",
        p(dir.path()),
        "--n-seeds",
        "20",
        "--step",
        "1e-6",
        "--seed",
        "0",
    ])?;
    let secs = start.elapsed().as_secs_f64();
    let worst = value_after(&out, "max relative error ")?;
    let seeds = out.lines().filter(|l| l.starts_with("seed ")).count();
    Ok(outcome(
        worst <= 1e-6 && seeds >= 20 && secs < 60.0,
        format!("max relative error {worst:.2e} over {seeds} seeds on a 3x20 net, {secs:.2} s"),
    ))
}

fn brute_force_auc(scores: &[f64], labels: &[Label]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, li) in labels.iter().enumerate() {
        for (j, lj) in labels.iter().enumerate() {
            if li.is_target() && !lj.is_target() {
                pairs += 1.0;
                wins += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs
}

fn auc_oracle() -> Check {
    let mut r = rng::seeded(2);
    let (mut worst_rank, mut worst_roc, mut with_ties) = (0.0f64, 0.0f64, 0);
    for _ in 0..200 {
        let n = r.random_range(2..=50);
        let scores: Vec<f64> = (0..n).map(|_| r.random_range(0..10) as f64 / 8.0).collect();
        let mut labels: Vec<Label> = (0..n)
            .map(|_| {
                if r.random_bool(0.3) {
                    Label::Target
                } else {
                    Label::NonTarget
                }
            })
            .collect();
        labels[0] = Label::Target;
        labels[1] = Label::NonTarget;
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        with_ties += usize::from(sorted.len() < n);
        let a = eval::auc(&scores, &labels).map_err(|e| e.to_string())?;
        let roc = eval::roc_curve(&scores, &labels).map_err(|e| e.to_string())?;
        worst_rank = worst_rank.max((a - brute_force_auc(&scores, &labels)).abs());
        worst_roc = worst_roc.max((roc.area() - a).abs());
    }
    Ok(outcome(
        worst_rank <= 1e-12 && worst_roc <= 1e-12,
        format!(
            "200 instances ({with_ties} with tied scores): |rank - pairwise| <= {worst_rank:.1e}, |trapezoid - rank| <= {worst_roc:.1e}"
        ),
    ))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn ensemble_identities() -> Check {
    let e = |x: erp_core::Error| x.to_string();
    let mut r = rng::seeded(3);
    let n = 40;
    let data: Vec<f32> = (0..n * 60).map(|_| rng::normal(&mut r) as f32).collect();
    let labels = (0..n)
        .map(|i| {
            if i % 5 == 0 {
                Label::Target
            } else {
                Label::NonTarget
            }
        })
        .collect();
    let set = EpochSet::with_default_names(3, 20, 100.0, labels, data).map_err(e)?;
    let inputs = Inputs::from_epochs(&set);
    let net = Network::init(Architecture::compact(3, 20), 5).map_err(e)?;

    // (a) identical batches in every group.
    let batch: Vec<usize> = vec![0, 1, 5, 2, 10, 3, 15, 4];
    let copies: Vec<&[usize]> = vec![&batch[..]; 4];
    let (avg, _) = averaged_gradient(&net, &inputs, &copies).map_err(e)?;
    let (single, _) =
        nn::mean_gradient(&net, batch.iter().map(|&i| inputs.example(i))).map_err(e)?;
    let da = avg.max_abs_diff(&single);
    let mut shared = vec![net.clone()];
    ensemble_train_step(
        &mut shared,
        &copies,
        &inputs,
        EnsembleMode::SharedWeights,
        0.01,
    )
    .map_err(e)?;
    let plain = nn::sgd_step(&net, &single, 0.01).map_err(e)?;
    let dsgd = max_diff(shared[0].params(), plain.params());

    // (b) distinct batches against an external mean.
    let groups: [&[usize]; 4] = [
        &[0, 1, 5, 2],
        &[10, 11, 15, 12],
        &[20, 21, 25, 22],
        &[30, 31, 35, 32, 0, 33],
    ];
    let (avg, _) = averaged_gradient(&net, &inputs, &groups).map_err(e)?;
    let mut external = vec![0.0; net.n_params()];
    for g in groups {
        let (grad, _) = nn::mean_gradient(&net, g.iter().map(|&i| inputs.example(i))).map_err(e)?;
        for (x, v) in external.iter_mut().zip(grad.values()) {
            *x += v / 4.0;
        }
    }
    let db = max_diff(avg.values(), &external);

    // (c) 240 non-targets / 60 targets, one pass.
    let labels: Vec<Label> = (0..300)
        .map(|i| {
            if i % 5 == 1 {
                Label::Target
            } else {
                Label::NonTarget
            }
        })
        .collect();
    let plan = partition(&labels, 4, 7).map_err(e)?;
    let mut uses = vec![0usize; 300];
    let mut balanced = true;
    for g in 0..4 {
        for b in balanced_batches(&plan, g, 32, 11).map_err(e)? {
            balanced &= 2 * b.iter().filter(|&&i| labels[i].is_target()).count() == b.len();
            for i in b {
                if !labels[i].is_target() {
                    uses[i] += 1;
                }
            }
        }
    }
    let once = (0..300)
        .filter(|&i| !labels[i].is_target())
        .all(|i| uses[i] == 1);
    let pass = da <= 1e-12 && dsgd <= 1e-12 && db <= 1e-12 && once && balanced;
    Ok(outcome(
        pass,
        format!(
            "(a) |avg - single| {da:.1e}, |shared step - SGD| {dsgd:.1e}; (b) |avg - external mean| {db:.1e}; (c) 240 non-targets each used once: {once}, batches balanced: {balanced}"
        ),
    ))
}

fn filter_response() -> Check {
    let f = design_fir(FirKind::Highpass, 3.0, 251, 100.0).map_err(|e| e.to_string())?;
    let gain_db = |freq: f64| {
        let (mut re, mut im) = (0.0, 0.0);
        for (k, h) in f.taps().iter().enumerate() {
            let w = 2.0 * std::f64::consts::PI * freq * k as f64 / 100.0;
            re += h * w.cos();
            im -= h * w.sin();
        }
        20.0 * (re * re + im * im).sqrt().log10()
    };
    let (dc, ten) = (gain_db(0.0), gain_db(10.0));
    Ok(outcome(
        dc <= -40.0 && ten.abs() <= 0.5,
        format!("DC {dc:.1} dB, 10 Hz {ten:+.4} dB (251-tap 3 Hz highpass at 100 Hz)"),
    ))
}

/// Pinned seed suite: training session seed `s`, held-out session seed `s + 1000`.
const SUITE: [u64; 3] = [1, 2, 3];

fn epochs_for(dir: &Path, seed: u64) -> Result<PathBuf, String> {
    let raw = dir.join(format!("raw{seed}"));
    let ep = dir.join(format!("ep{seed}"));
    let s = seed.to_string();
    run_ok(&["synth", "--quiet", "--out", p(&raw), "--seed", &s])?;
    run_ok(&[
        "preprocess",
        "--quiet",
        "--out",
        p(&ep),
        "--recording",
        p(&raw.join("recording.erpc")),
        "--events",
        p(&raw.join("events.csv")),
    ])?;
    Ok(ep.join("epochs.erpe"))
}

fn train_and_score(
    dir: &Path,
    name: &str,
    mode: &str,
    train: &Path,
    test: &Path,
) -> Result<f64, String> {
    let model = dir.join(name);
    run_ok(&[
        "train",
        "--quiet",
        "--out",
        p(&model),
        "--data",
        p(train),
        "--mode",
        mode,
        "--lr",
        "0.01",
        "--epochs",
        "50",
        "--batch-size",
        "32",
        "--groups",
        "4",
    ])?;
    let out = run_ok(&[
        "evaluate",
        "--out",
        p(&dir.join(format!("{name}-eval"))),
        "--model",
        p(&model),
        "--data",
        p(test),
    ])?;
    value_after(&out, "auc=")
}

fn end_to_end() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for seed in SUITE {
        let train = epochs_for(dir.path(), seed)?;
        let test = epochs_for(dir.path(), seed + 1000)?;
        let ens = train_and_score(
            dir.path(),
            &format!("shared{seed}"),
            "shared",
            &train,
            &test,
        )?;
        let base = train_and_score(
            dir.path(),
            &format!("baseline{seed}"),
            "baseline",
            &train,
            &test,
        )?;
        pass &= ens >= 0.9 && ens >= base;
        parts.push(format!(
            "seed {seed}: ensemble {ens:.4} vs baseline {base:.4}"
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 300.0;
    Ok(outcome(pass, format!("{} ({secs:.0} s)", parts.join("; "))))
}

const SCALP: [&str; 15] = [
    "0.900", "0.802", "0.776", "0.890", "0.674", "0.817", "0.709", "0.486", "0.759", "0.597",
    "0.730", "0.716", "0.652", "0.618", "0.796",
];
const EAR: [&str; 15] = [
    "0.592", "0.669", "0.573", "0.663", "0.738", "0.574", "0.514", "0.545", "0.731", "0.565",
    "0.618", "0.704", "0.679", "0.338", "0.477",
];

fn table_arithmetic() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut tsv = String::from("subject\tmontage\tauc\n");
    for (montage, col) in [("scalp", SCALP), ("ear", EAR)] {
        for (i, v) in col.iter().enumerate() {
            tsv.push_str(&format!("S{}\t{montage}\t{v}\n", i + 1));
        }
    }
    let input = dir.path().join("table.tsv");
    fs::write(&input, tsv).map_err(|e| e.to_string())?;
    let out = run_ok(&["report", "--out", p(&dir.path().join("r")), p(&input)])?;
    let cell = |m: &str| {
        out.lines()
            .find_map(|l| l.strip_prefix(&format!("table\t{m}\t")))
            .unwrap_or("?")
            .to_owned()
    };
    let (scalp, ear) = (cell("scalp"), cell("ear"));
    let t = value_after(&out, "t=")?;
    let pv = value_after(&out, "p=")?;

    // Reference: textbook paired t with statrs' Student t distribution.
    let d: Vec<f64> = SCALP
        .iter()
        .zip(EAR)
        .map(|(a, b)| a.parse::<f64>().unwrap() - b.parse::<f64>().unwrap())
        .collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let t_ref = mean / (sd / n.sqrt());
    let p_ref = 2.0
        * StudentsT::new(0.0, 1.0, n - 1.0)
            .map_err(|e| e.to_string())?
            .cdf(-t_ref.abs());
    let pass = scalp == "0.728±0.108"
        && ear == "0.599±0.103"
        && (t - t_ref).abs() <= 1e-6
        && (pv - p_ref).abs() <= 1e-6;
    Ok(outcome(
        pass,
        format!("scalp {scalp}, ear {ear}; t = {t:.6} (ref {t_ref:.6}), p = {pv:.6e} (ref {p_ref:.6e}), df 14"),
    ))
}

fn grand_average_shape() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = epochs_for(dir.path(), 0)?;
    let set = erp::dataio::load_epochs(&path).map_err(|e| e.to_string())?;
    let (target, non_target) = eval::grand_average(&set, "Pz").map_err(|e| e.to_string())?;
    let (i, peak) = eval::peak(&target).ok_or("empty wave")?;
    let ms = i as f64 * 1000.0 / set.fs_hz() as f64;
    let other = non_target[i];
    Ok(outcome(
        (ms - 300.0).abs() <= 50.0 && peak > 2.0 * other.abs(),
        format!("Pz target peak {peak:.2} uV at {ms:.0} ms; non-target {other:.2} uV there"),
    ))
}

type Criterion = (&'static str, fn() -> Check);

fn main() {
    let criteria: [Criterion; 7] = [
        ("gradient correctness", gradient_correctness),
        ("AUC oracle equivalence", auc_oracle),
        ("ensemble identities", ensemble_identities),
        ("filter response", filter_response),
        ("end-to-end synthetic regression", end_to_end),
        ("AUC table arithmetic", table_arithmetic),
        ("grand-average shape", grand_average_shape),
    ];
    let mut passed = 0;
    let mut broken = false;
    for (k, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(o) => {
                passed += usize::from(o.pass);
                println!(
                    "criterion {} {}: {}: {}",
                    k + 1,
                    if o.pass { "PASS" } else { "FAIL" },
                    name,
                    o.detail
                );
            }
            Err(e) => {
                broken = true;
                println!("criterion {} FAIL: {name}: could not run: {e}", k + 1);
            }
        }
    }
    println!(
        "criterion 8 NOTE: per-subject AUCs on real walking EEG and the walking-speed deterioration need the physical dataset; not evaluated"
    );
    println!("acceptance: {passed}/{} criteria passed", criteria.len());
    if broken {
        std::process::exit(1);
    }
}
