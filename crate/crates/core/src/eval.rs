//! Evaluation: rank AUC, ROC curves, paired t-tests, grand averages and the
//! per-subject summary table.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::signal::{EpochSet, Label, Montage};
use crate::{Error, Result};

fn class_counts(labels: &[Label]) -> Result<(usize, usize)> {
    let targets = labels.iter().filter(|l| l.is_target()).count();
    let non_targets = labels.len() - targets;
    if targets == 0 || non_targets == 0 {
        return Err(Error::SingleClass {
            targets,
            non_targets,
        });
    }
    Ok((targets, non_targets))
}

fn check_scores(scores: &[f64], labels: &[Label]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::dims(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    class_counts(labels)
}

/// Area under the ROC curve by the Mann-Whitney rank sum with midranks:
/// `(R_target - n_t (n_t + 1) / 2) / (n_t n_nt)`. Ties count one half.
pub fn auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let (n_t, n_nt) = check_scores(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j share their mean.
        let midrank = (i + 1 + j) as f64 / 2.0;
        let tied_targets = order[i..j]
            .iter()
            .filter(|&&k| labels[k].is_target())
            .count();
        rank_sum += midrank * tied_targets as f64;
        i = j;
    }
    let n_t_f = n_t as f64;
    Ok((rank_sum - n_t_f * (n_t_f + 1.0) / 2.0) / (n_t_f * n_nt as f64))
}

/// ROC curve from `(0, 0)` to `(1, 1)`, one point per distinct score.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)`.
    pub points: Vec<(f64, f64)>,
}

impl RocCurve {
    /// Trapezoidal area under the curve.
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
            .sum()
    }
}

/// Sweeps the threshold over the distinct scores in descending order; a sample
/// is called positive when its score is at or above the threshold.
pub fn roc_curve(scores: &[f64], labels: &[Label]) -> Result<RocCurve> {
    let (n_t, n_nt) = check_scores(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]].is_target() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n_nt as f64, tp as f64 / n_t as f64));
    }
    Ok(RocCurve { points })
}

/// Result of a two-tailed paired t-test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    pub p: f64,
}

/// Paired t-test on `d = a - b`: `t = mean(d) / (sd(d) / sqrt(n))`, `df = n - 1`.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::dims(format!(
            "paired samples of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::invalid("paired t-test needs at least two pairs"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let t = mean / libm::sqrt(var / n as f64);
    let df = n - 1;
    Ok(TTest {
        t,
        df,
        p: students_t_two_tailed(t, df as f64),
    })
}

/// Two-tailed p-value of Student's t: `I_{df / (df + t^2)}(df / 2, 1 / 2)`.
pub fn students_t_two_tailed(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / (df + t * t), df / 2.0, 0.5)
}

/// Regularised incomplete beta `I_x(a, b)`.
///
/// Uses the continued fraction
/// `I_x(a, b) = x^a (1 - x)^b / (a B(a, b)) * 1 / (1 + d1 / (1 + d2 / (1 + ...)))`
/// with `d_{2m+1} = -(a + m)(a + b + m) x / ((a + 2m)(a + 2m + 1))` and
/// `d_{2m} = m (b - m) x / ((a + 2m - 1)(a + 2m))`, evaluated by the modified Lentz
/// method. The fraction converges quickly for `x < (a + 1) / (a + b + 2)`; above
/// that the symmetry `I_x(a, b) = 1 - I_{1-x}(b, a)` is applied.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b)
        + a * libm::log(x)
        + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    const MAX_ITER: usize = 10_000;
    let guard = |v: f64| if v.abs() < TINY { TINY } else { v };
    let mut c = 1.0;
    let mut d = 1.0 / guard(1.0 - (a + b) * x / (a + 1.0));
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let even = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        d = 1.0 / guard(1.0 + even * d);
        c = guard(1.0 + even / c);
        h *= d * c;
        let odd = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
        d = 1.0 / guard(1.0 + odd * d);
        c = guard(1.0 + odd / c);
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Per-class mean waveform at `channel`: `(target, non_target)`.
pub fn grand_average(set: &EpochSet, channel: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let c = set.channel_index(channel)?;
    set.require_both_classes()?;
    let t = set.n_samples();
    let mut target = vec![0.0; t];
    let mut non_target = vec![0.0; t];
    for (e, label) in set.labels().iter().enumerate() {
        let slice = &set.epoch(e)[c * t..(c + 1) * t];
        let acc = if label.is_target() {
            &mut target
        } else {
            &mut non_target
        };
        for (a, &v) in acc.iter_mut().zip(slice) {
            *a += f64::from(v);
        }
    }
    let n_t = set.count(Label::Target) as f64;
    let n_nt = set.count(Label::NonTarget) as f64;
    target.iter_mut().for_each(|v| *v /= n_t);
    non_target.iter_mut().for_each(|v| *v /= n_nt);
    Ok((target, non_target))
}

/// Index and value of the largest sample.
pub fn peak(wave: &[f64]) -> Option<(usize, f64)> {
    wave.iter()
        .copied()
        .enumerate()
        .fold(None, |best, (i, v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((i, v)),
        })
}

/// Divisor used for the spread in summary rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StdConvention {
    /// Divide by `n`.
    #[default]
    Population,
    /// Divide by `n - 1`.
    Sample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectAuc {
    pub subject: String,
    pub montage: Montage,
    pub auc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MontageSummary {
    pub montage: Montage,
    pub n: usize,
    pub mean: f64,
    /// Missing when there are too few subjects for the chosen convention.
    pub std: Option<f64>,
}

impl MontageSummary {
    /// `mean±std` rounded to three decimals, e.g. `0.728±0.108`.
    pub fn table_cell(&self) -> String {
        match self.std {
            Some(s) => format!("{:.3}±{:.3}", self.mean, s),
            None => format!("{:.3}", self.mean),
        }
    }
}

/// One subject's raw evaluation output.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectResult {
    pub subject: String,
    pub montage: Montage,
    pub scores: Vec<f64>,
    pub labels: Vec<Label>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_subject: Vec<SubjectAuc>,
    /// One entry per montage present, scalp first.
    pub summaries: Vec<MontageSummary>,
    /// Scalp minus ear, paired by subject, when both montages are present.
    pub ttest: Option<TTest>,
}

fn summarize(montage: Montage, values: &[f64], convention: StdConvention) -> MontageSummary {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    let std = match convention {
        _ if n < 2 => None,
        StdConvention::Population => Some(libm::sqrt(ss / n as f64)),
        StdConvention::Sample => Some(libm::sqrt(ss / (n - 1) as f64)),
    };
    MontageSummary {
        montage,
        n,
        mean,
        std,
    }
}

impl EvalReport {
    /// Builds the table from precomputed AUCs.
    pub fn from_aucs(per_subject: Vec<SubjectAuc>, convention: StdConvention) -> Result<Self> {
        if per_subject.is_empty() {
            return Err(Error::invalid("report needs at least one subject"));
        }
        if let Some(r) = per_subject.iter().find(|r| !(0.0..=1.0).contains(&r.auc)) {
            return Err(Error::invalid(format!(
                "AUC {} of {} outside [0, 1]",
                r.auc, r.subject
            )));
        }
        let mut by_montage: BTreeMap<u8, BTreeMap<&str, f64>> = BTreeMap::new();
        for r in &per_subject {
            let key = r.montage as u8;
            if by_montage
                .entry(key)
                .or_default()
                .insert(&r.subject, r.auc)
                .is_some()
            {
                return Err(Error::invalid(format!(
                    "subject {} listed twice for {}",
                    r.subject,
                    r.montage.as_str()
                )));
            }
        }
        let mut summaries = Vec::new();
        for montage in [Montage::Scalp, Montage::Ear] {
            let values: Vec<f64> = per_subject
                .iter()
                .filter(|r| r.montage == montage)
                .map(|r| r.auc)
                .collect();
            if !values.is_empty() {
                summaries.push(summarize(montage, &values, convention));
            }
        }
        let ttest = match (
            by_montage.get(&(Montage::Scalp as u8)),
            by_montage.get(&(Montage::Ear as u8)),
        ) {
            (Some(scalp), Some(ear)) => {
                if scalp.len() != ear.len() || scalp.keys().any(|k| !ear.contains_key(k)) {
                    return Err(Error::invalid(
                        "scalp and ear columns cover different subjects",
                    ));
                }
                if scalp.len() < 2 {
                    None
                } else {
                    // Pairs in the order subjects first appear.
                    let mut a = Vec::new();
                    let mut b = Vec::new();
                    for r in per_subject.iter().filter(|r| r.montage == Montage::Scalp) {
                        a.push(r.auc);
                        b.push(ear[r.subject.as_str()]);
                    }
                    Some(paired_ttest(&a, &b)?)
                }
            }
            _ => None,
        };
        Ok(Self {
            per_subject,
            summaries,
            ttest,
        })
    }

    pub fn summary(&self, montage: Montage) -> Option<&MontageSummary> {
        self.summaries.iter().find(|s| s.montage == montage)
    }

    /// Tab-separated table: `subject montage auc` rows, then `mean`, `std` and
    /// `table` (`mean±std`) rows per montage, then an optional `ttest` row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("subject\tmontage\tauc\n");
        for r in &self.per_subject {
            let _ = writeln!(out, "{}\t{}\t{:.6}", r.subject, r.montage.as_str(), r.auc);
        }
        for s in &self.summaries {
            let m = s.montage.as_str();
            let _ = writeln!(out, "mean\t{m}\t{:.6}", s.mean);
            match s.std {
                Some(v) => {
                    let _ = writeln!(out, "std\t{m}\t{v:.6}");
                }
                None => {
                    let _ = writeln!(out, "std\t{m}\t");
                }
            }
            let _ = writeln!(out, "table\t{m}\t{}", s.table_cell());
        }
        if let Some(t) = &self.ttest {
            let _ = writeln!(out, "ttest\tt={:.10}\tdf={}\tp={:.10e}", t.t, t.df, t.p);
        }
        out
    }
}

/// AUC per subject, then [`EvalReport::from_aucs`].
pub fn build_report(results: &[SubjectResult], convention: StdConvention) -> Result<EvalReport> {
    let rows = results
        .iter()
        .map(|r| {
            Ok(SubjectAuc {
                subject: r.subject.clone(),
                montage: r.montage,
                auc: auc(&r.scores, &r.labels)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_aucs(rows, convention)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use Label::{NonTarget as N, Target as T};

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8, 0.1, 0.2], &[T, T, N, N]).unwrap(), 1.0);
        // Pairs: 0.8>0.5, 0.8>0.1, 0.3<0.5, 0.3>0.1 -> 3/4.
        assert_eq!(auc(&[0.8, 0.3, 0.5, 0.1], &[T, T, N, N]).unwrap(), 0.75);
        assert_eq!(auc(&[0.5, 0.5], &[T, N]).unwrap(), 0.5);
        assert!(matches!(
            auc(&[0.1, 0.2], &[T, T]),
            Err(Error::SingleClass { .. })
        ));
        assert!(auc(&[f64::NAN, 0.2], &[T, N]).is_err());
    }

    #[test]
    fn roc_examples() {
        let perfect = roc_curve(&[0.9, 0.8, 0.1, 0.2], &[T, T, N, N]).unwrap();
        assert!(perfect.points.contains(&(0.0, 1.0)));
        assert_eq!(perfect.area(), 1.0);
        let flat = roc_curve(&[0.3; 6], &[T, N, T, N, N, N]).unwrap();
        assert_eq!(flat.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(flat.area(), 0.5);
    }

    #[test]
    fn ttest_examples() {
        let r = paired_ttest(&[1.0, 0.0, 1.0, 0.0], &[0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.df, 3);
        assert_eq!(r.p, 1.0);
        assert_eq!(
            paired_ttest(&[0.3, 0.4], &[0.3, 0.4]),
            Err(Error::ZeroVariance)
        );
        assert_eq!(
            paired_ttest(&[1.0, 2.0], &[0.0, 1.0]),
            Err(Error::ZeroVariance)
        );
        assert!(paired_ttest(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn incomplete_beta_known_values() {
        // I_x(1, 1) = x; I_x(a, 1) = x^a; I_0.5(a, a) = 0.5.
        for x in [0.1, 0.37, 0.5, 0.93] {
            assert!((regularized_incomplete_beta(x, 1.0, 1.0) - x).abs() < 1e-14);
            assert!((regularized_incomplete_beta(x, 3.0, 1.0) - x * x * x).abs() < 1e-14);
        }
        assert!((regularized_incomplete_beta(0.5, 7.5, 7.5) - 0.5).abs() < 1e-14);
        // Tabulated two-tailed critical values: t_{0.975, 10} = 2.228139, t_{0.995, 1} = 63.65674.
        assert!((students_t_two_tailed(2.228_138_851_986_274, 10.0) - 0.05).abs() < 1e-9);
        assert!((students_t_two_tailed(63.656_741_162_871_6, 1.0) - 0.01).abs() < 1e-9);
    }

    #[test]
    fn grand_average_of_identical_targets() {
        let labels = vec![T, N, T];
        let data = vec![
            1.0, 2.0, 3.0, 9.0, 9.0, 9.0, // target: ch1, ch2
            0.0, 0.0, 0.0, 4.0, 4.0, 4.0, // non-target
            1.0, 2.0, 3.0, 7.0, 7.0, 7.0, // target
        ];
        let set = EpochSet::with_default_names(2, 3, 100.0, labels, data).unwrap();
        let (t, n) = grand_average(&set, "ch1").unwrap();
        assert_eq!(t, vec![1.0, 2.0, 3.0]);
        assert_eq!(n, vec![0.0; 3]);
        let (t2, _) = grand_average(&set, "ch2").unwrap();
        assert_eq!(t2, vec![8.0; 3]);
        assert!(matches!(
            grand_average(&set, "Cz"),
            Err(Error::UnknownChannel(_))
        ));
        assert_eq!(peak(&[0.0, 3.0, 3.0, -1.0]), Some((1, 3.0)));
    }

    fn row(subject: &str, montage: Montage, auc: f64) -> SubjectAuc {
        SubjectAuc {
            subject: subject.to_string(),
            montage,
            auc,
        }
    }

    #[test]
    fn single_subject_report() {
        let r = EvalReport::from_aucs(
            vec![row("S1", Montage::Scalp, 0.8)],
            StdConvention::Population,
        )
        .unwrap();
        assert_eq!(r.summaries[0].std, None);
        assert!(r.ttest.is_none());
        let tsv = r.to_tsv();
        assert!(tsv.contains("std\tscalp\t\n"), "{tsv}");
        assert!(!tsv.contains("ttest"));
    }

    #[test]
    fn report_requires_matching_subjects_for_ttest() {
        let rows = vec![
            row("S1", Montage::Scalp, 0.8),
            row("S2", Montage::Scalp, 0.7),
            row("S1", Montage::Ear, 0.6),
            row("S3", Montage::Ear, 0.5),
        ];
        assert!(EvalReport::from_aucs(rows, StdConvention::Population).is_err());
    }

    #[test]
    fn report_from_scores() {
        let results = vec![
            SubjectResult {
                subject: "S1".into(),
                montage: Montage::Scalp,
                scores: vec![0.8, 0.3, 0.5, 0.1],
                labels: vec![T, T, N, N],
            },
            SubjectResult {
                subject: "S2".into(),
                montage: Montage::Scalp,
                scores: vec![0.9, 0.8, 0.1, 0.2],
                labels: vec![T, T, N, N],
            },
        ];
        let r = build_report(&results, StdConvention::Sample).unwrap();
        assert_eq!(r.per_subject[0].auc, 0.75);
        assert_eq!(r.summaries[0].mean, 0.875);
        assert!((r.summaries[0].std.unwrap() - libm::sqrt(0.03125)).abs() < 1e-15);
        let tsv = r.to_tsv();
        assert!(tsv.starts_with("subject\tmontage\tauc\nS1\tscalp\t0.750000\n"));
    }
}
