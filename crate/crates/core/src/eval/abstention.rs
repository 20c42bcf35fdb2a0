//! Threshold abstention under a false-positive-rate cap.
//!
//! A task's top output is accepted iff its uncertainty `U <= tau`. A false
//! positive is an accepted incorrect output; FPR is taken over incorrect
//! tasks. Accuracy counts correct accepted plus incorrect abstained.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbstentionMetric {
    Sde,
    Dsde,
    ScEntropy,
}

impl AbstentionMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            AbstentionMetric::Sde => "sde",
            AbstentionMetric::Dsde => "dsde",
            AbstentionMetric::ScEntropy => "sc_entropy",
        }
    }
}

impl std::str::FromStr for AbstentionMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sde" => Ok(AbstentionMetric::Sde),
            "dsde" => Ok(AbstentionMetric::Dsde),
            "sc_entropy" | "sc-entropy" => Ok(AbstentionMetric::ScEntropy),
            other => Err(format!("unknown metric {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbstentionPolicy {
    /// `-inf` means abstain on everything. Infinities serialize as the
    /// strings `"inf"` and `"-inf"`.
    #[serde(with = "float_or_infinity")]
    pub tau: f64,
    pub metric: AbstentionMetric,
    pub fpr_cap: f64,
}

impl AbstentionPolicy {
    pub fn accepts(&self, score: f64) -> bool {
        score <= self.tau
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation across folds.
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len().max(1) as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    #[serde(with = "float_or_infinity")]
    pub tau: f64,
    /// The cap could only be met by abstaining on every training task.
    pub abstain_all: bool,
    pub train_accuracy: f64,
    pub train_fpr: f64,
    pub accuracy: f64,
    pub fpr: f64,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstentionReport {
    pub policy: AbstentionPolicy,
    pub folds: Vec<FoldResult>,
    pub accuracy: MeanStd,
    pub fpr: MeanStd,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AbstentionError {
    #[error("{0} scores but {1} labels")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 folds and at most one per task, got {folds} for {n} tasks")]
    InvalidFolds { folds: usize, n: usize },
    #[error("fpr cap {0} outside [0, 1]")]
    InvalidCap(f64),
    #[error("scores contain NaN")]
    NotANumber,
}

/// Accuracy and FPR of threshold `tau` on the given tasks. FPR is 0 when
/// there are no incorrect tasks.
pub fn evaluate_threshold(scores: &[f64], pass1: &[bool], tau: f64) -> (f64, f64) {
    let (mut good, mut incorrect, mut false_pos) = (0usize, 0usize, 0usize);
    for (&s, &ok) in scores.iter().zip(pass1) {
        let accept = s <= tau;
        if !ok {
            incorrect += 1;
            false_pos += accept as usize;
        }
        good += (accept == ok) as usize;
    }
    let accuracy = if scores.is_empty() { 0.0 } else { good as f64 / scores.len() as f64 };
    let fpr = if incorrect == 0 { 0.0 } else { false_pos as f64 / incorrect as f64 };
    (accuracy, fpr)
}

/// `-inf`, midpoints between consecutive distinct scores, `+inf`.
pub fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut out = Vec::with_capacity(sorted.len() + 1);
    out.push(f64::NEG_INFINITY);
    out.extend(sorted.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    out.push(f64::INFINITY);
    out
}

/// Threshold with the best accuracy among those whose FPR is within the
/// cap; ties go to the smallest threshold. `-inf` always meets the cap.
pub fn choose_threshold(scores: &[f64], pass1: &[bool], fpr_cap: f64) -> (f64, f64, f64) {
    let mut best = (f64::NEG_INFINITY, evaluate_threshold(scores, pass1, f64::NEG_INFINITY));
    for tau in candidate_thresholds(scores) {
        let (acc, fpr) = evaluate_threshold(scores, pass1, tau);
        if fpr <= fpr_cap && acc > best.1 .0 {
            best = (tau, (acc, fpr));
        }
    }
    (best.0, best.1 .0, best.1 .1)
}

/// Deterministic stratified assignment of tasks to folds.
pub fn stratified_folds(pass1: &[bool], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; pass1.len()];
    let mut next = 0;
    for class in [true, false] {
        let mut members: Vec<usize> = (0..pass1.len()).filter(|&i| pass1[i] == class).collect();
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    assignment
}

/// K-fold calibration: per fold the threshold is chosen on the training
/// part and scored on the held-out part. The returned policy's threshold
/// is refit on all tasks.
pub fn calibrate_abstention(
    scores: &[f64],
    pass1: &[bool],
    metric: AbstentionMetric,
    fpr_cap: f64,
    folds: usize,
    seed: u64,
) -> Result<AbstentionReport, AbstentionError> {
    if scores.len() != pass1.len() {
        return Err(AbstentionError::LengthMismatch(scores.len(), pass1.len()));
    }
    if folds < 2 || folds > scores.len() {
        return Err(AbstentionError::InvalidFolds { folds, n: scores.len() });
    }
    if !(0.0..=1.0).contains(&fpr_cap) {
        return Err(AbstentionError::InvalidCap(fpr_cap));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(AbstentionError::NotANumber);
    }
    let assignment = stratified_folds(pass1, folds, seed);
    let split = |fold: usize, held_out: bool| -> (Vec<f64>, Vec<bool>) {
        (0..scores.len())
            .filter(|&i| (assignment[i] == fold) == held_out)
            .map(|i| (scores[i], pass1[i]))
            .unzip()
    };
    let results: Vec<FoldResult> = (0..folds)
        .map(|fold| {
            let (train_s, train_y) = split(fold, false);
            let (test_s, test_y) = split(fold, true);
            let (tau, train_accuracy, train_fpr) = choose_threshold(&train_s, &train_y, fpr_cap);
            let (accuracy, fpr) = evaluate_threshold(&test_s, &test_y, tau);
            FoldResult {
                tau,
                abstain_all: tau == f64::NEG_INFINITY,
                train_accuracy,
                train_fpr,
                accuracy,
                fpr,
                n_test: test_s.len(),
            }
        })
        .collect();
    let accuracy = MeanStd::of(&results.iter().map(|r| r.accuracy).collect::<Vec<_>>());
    let fpr = MeanStd::of(&results.iter().map(|r| r.fpr).collect::<Vec<_>>());
    let (tau, _, _) = choose_threshold(scores, pass1, fpr_cap);
    Ok(AbstentionReport {
        policy: AbstentionPolicy { tau, metric, fpr_cap },
        folds: results,
        accuracy,
        fpr,
    })
}

mod float_or_infinity {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad threshold {t:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_case() {
        let scores: Vec<f64> = (0..20).map(|i| if i < 10 { i as f64 / 10.0 } else { i as f64 }).collect();
        let pass1: Vec<bool> = (0..20).map(|i| i < 10).collect();
        let r = calibrate_abstention(&scores, &pass1, AbstentionMetric::Dsde, 0.05, 5, 1).unwrap();
        assert_eq!(r.accuracy.mean, 1.0);
        assert_eq!(r.fpr.mean, 0.0);
        assert_eq!(r.policy.tau, 5.45);
        assert_eq!(r.folds.len(), 5);
    }

    #[test]
    fn all_incorrect_abstains_on_everything() {
        let scores = [0.1, 0.2, 0.3, 0.4];
        let r = calibrate_abstention(&scores, &[false; 4], AbstentionMetric::Sde, 0.05, 2, 0).unwrap();
        assert_eq!(r.policy.tau, f64::NEG_INFINITY);
        assert!(r.folds.iter().all(|f| f.abstain_all));
        assert_eq!(r.accuracy.mean, 1.0);
    }

    #[test]
    fn cap_binds_on_training_data() {
        // One incorrect task sits among the correct ones; with a zero cap
        // the threshold has to stay below it.
        let scores = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let pass1 = [true, true, false, true, true, false];
        let (tau, acc, fpr) = choose_threshold(&scores, &pass1, 0.0);
        assert_eq!((tau, fpr), (0.25, 0.0));
        assert!((acc - 4.0 / 6.0).abs() < 1e-15);
        let (tau, acc, fpr) = choose_threshold(&scores, &pass1, 0.5);
        assert_eq!((tau, fpr), (0.55, 0.5));
        assert!((acc - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn candidates_and_folds() {
        assert_eq!(candidate_thresholds(&[2.0, 1.0, 2.0]), vec![f64::NEG_INFINITY, 1.5, f64::INFINITY]);
        let pass1: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        let a = stratified_folds(&pass1, 5, 3);
        assert_eq!(a, stratified_folds(&pass1, 5, 3));
        for f in 0..5 {
            assert_eq!(a.iter().filter(|&&x| x == f).count(), 2);
        }
    }

    #[test]
    fn errors_and_serialization() {
        assert!(matches!(
            calibrate_abstention(&[1.0], &[true], AbstentionMetric::Sde, 0.1, 2, 0),
            Err(AbstentionError::InvalidFolds { .. })
        ));
        assert!(matches!(
            calibrate_abstention(&[1.0, 2.0], &[true, false], AbstentionMetric::Sde, 1.5, 2, 0),
            Err(AbstentionError::InvalidCap(_))
        ));
        let p = AbstentionPolicy {
            tau: f64::NEG_INFINITY,
            metric: AbstentionMetric::ScEntropy,
            fpr_cap: 0.05,
        };
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(text, r#"{"tau":"-inf","metric":"sc_entropy","fpr_cap":0.05}"#);
        assert_eq!(serde_json::from_str::<AbstentionPolicy>(&text).unwrap(), p);
    }
}
