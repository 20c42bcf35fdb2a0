//! Correctness targets, predictive statistics, weight learning and
//! abstention calibration.

mod abstention;
mod correctness;
mod stats;
mod summary;
mod weights;

pub use abstention::{
    calibrate_abstention, candidate_thresholds, choose_threshold, evaluate_threshold, stratified_folds, AbstentionError,
    AbstentionMetric, AbstentionPolicy, AbstentionReport, FoldResult, MeanStd,
};
pub use correctness::{correctness, CorrectnessError, CorrectnessTargets};
pub use stats::{auroc, mann_whitney_twice, midranks, pearson, spearman, StatError};
pub use summary::{stat_block, summarize, EvalError, EvalSummary, LabeledScores, Stat, StatBlock, WeightLearningBlock};
pub use weights::{evaluate_weights, learn_weights, train_test_split, LearnedWeights, TaskClusterData, WeightError, WeightGrid};
