//! Evaluation summary over a run report.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::abstention::AbstentionReport;
use super::stats::{auroc, pearson, spearman, StatError};
use super::weights::LearnedWeights;
use crate::corpus::{Difficulty, ReportRow};

/// A statistic, or an explicit marker when it is undefined (one label
/// class, constant input).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stat {
    Value(f64),
    Undefined,
}

impl Stat {
    fn from_result(r: Result<f64, StatError>) -> Self {
        r.map(Stat::Value).unwrap_or(Stat::Undefined)
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Stat::Value(x) => Some(x),
            Stat::Undefined => None,
        }
    }
}

impl Serialize for Stat {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Stat::Value(x) => s.serialize_f64(*x),
            Stat::Undefined => s.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for Stat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::Number(n) => n
                .as_f64()
                .map(Stat::Value)
                .ok_or_else(|| serde::de::Error::custom("bad number")),
            serde_json::Value::String(s) if s == "undefined" => Ok(Stat::Undefined),
            other => Err(serde::de::Error::custom(format!("expected number or \"undefined\", got {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatBlock {
    /// Failures (pass@1 false) are the positive class.
    pub auroc: Stat,
    /// Correlations are against partial_pass@1.
    pub pearson_r: Stat,
    pub spearman_rho: Stat,
    pub n_tasks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n_tasks: usize,
    /// Rows left out because the run flagged them as errors.
    pub n_skipped: usize,
    /// Keyed by score name: `sde`, `dsde`, `sc_entropy`.
    pub scores: BTreeMap<String, StatBlock>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_difficulty: BTreeMap<String, BTreeMap<String, StatBlock>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_learning: Option<WeightLearningBlock>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub abstention: Vec<AbstentionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightLearningBlock {
    pub learned: LearnedWeights,
    pub test_auroc_learned: Stat,
    pub test_auroc_default: Stat,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("report row {task_id:?} is missing {field}")]
    SchemaMismatch { task_id: String, field: &'static str },
}

/// Scores and labels of the usable rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScores {
    pub task_ids: Vec<String>,
    pub sde: Vec<f64>,
    pub dsde: Vec<f64>,
    pub sc_entropy: Vec<f64>,
    pub pass1: Vec<bool>,
    pub partial_pass1: Vec<f64>,
    pub n_skipped: usize,
}

impl LabeledScores {
    pub fn from_rows(rows: &[ReportRow]) -> Result<Self, EvalError> {
        let mut out = LabeledScores {
            task_ids: Vec::new(),
            sde: Vec::new(),
            dsde: Vec::new(),
            sc_entropy: Vec::new(),
            pass1: Vec::new(),
            partial_pass1: Vec::new(),
            n_skipped: 0,
        };
        for row in rows {
            if row.error.is_some() {
                out.n_skipped += 1;
                continue;
            }
            let need = |v: Option<f64>, field| {
                v.ok_or(EvalError::SchemaMismatch {
                    task_id: row.task_id.clone(),
                    field,
                })
            };
            out.sde.push(need(row.sde, "sde")?);
            out.dsde.push(need(row.dsde, "dsde")?);
            out.sc_entropy.push(need(row.baseline_sc_entropy, "baseline_sc_entropy")?);
            out.partial_pass1.push(need(row.partial_pass1, "partial_pass1")?);
            out.pass1.push(row.pass1.ok_or(EvalError::SchemaMismatch {
                task_id: row.task_id.clone(),
                field: "pass1",
            })?);
            out.task_ids.push(row.task_id.clone());
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.task_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.task_ids.is_empty()
    }

    pub fn named(&self) -> [(&'static str, &[f64]); 3] {
        [("sde", &self.sde), ("dsde", &self.dsde), ("sc_entropy", &self.sc_entropy)]
    }

    fn subset(&self, keep: &[usize]) -> LabeledScores {
        let pick = |v: &[f64]| keep.iter().map(|&i| v[i]).collect();
        LabeledScores {
            task_ids: keep.iter().map(|&i| self.task_ids[i].clone()).collect(),
            sde: pick(&self.sde),
            dsde: pick(&self.dsde),
            sc_entropy: pick(&self.sc_entropy),
            pass1: keep.iter().map(|&i| self.pass1[i]).collect(),
            partial_pass1: pick(&self.partial_pass1),
            n_skipped: 0,
        }
    }
}

pub fn stat_block(scores: &[f64], pass1: &[bool], partial_pass1: &[f64]) -> StatBlock {
    let failure: Vec<bool> = pass1.iter().map(|p| !p).collect();
    StatBlock {
        auroc: Stat::from_result(auroc(scores, &failure)),
        pearson_r: Stat::from_result(pearson(scores, partial_pass1)),
        spearman_rho: Stat::from_result(spearman(scores, partial_pass1)),
        n_tasks: scores.len(),
    }
}

fn blocks(data: &LabeledScores) -> BTreeMap<String, StatBlock> {
    data.named()
        .into_iter()
        .map(|(name, s)| (name.to_string(), stat_block(s, &data.pass1, &data.partial_pass1)))
        .collect()
}

/// Global statistics for every score, plus a per-difficulty breakdown for
/// tasks found in `difficulty`.
pub fn summarize(rows: &[ReportRow], difficulty: &BTreeMap<String, Difficulty>) -> Result<EvalSummary, EvalError> {
    let data = LabeledScores::from_rows(rows)?;
    let mut groups: BTreeMap<Difficulty, Vec<usize>> = BTreeMap::new();
    for (i, id) in data.task_ids.iter().enumerate() {
        if let Some(d) = difficulty.get(id) {
            groups.entry(*d).or_default().push(i);
        }
    }
    let per_difficulty = groups
        .into_iter()
        .map(|(d, keep)| (d.as_str().to_string(), blocks(&data.subset(&keep))))
        .collect();
    Ok(EvalSummary {
        n_tasks: data.len(),
        n_skipped: data.n_skipped,
        scores: blocks(&data),
        per_difficulty,
        weight_learning: None,
        abstention: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, dsde: f64, pass1: bool) -> ReportRow {
        ReportRow {
            task_id: id.into(),
            sde: Some(dsde / 2.0),
            dsde: Some(dsde),
            baseline_sc_entropy: Some(0.0),
            clusters: vec![10],
            dominant_index: Some(0),
            pass1: Some(pass1),
            partial_pass1: Some(if pass1 { 1.0 } else { 0.5 }),
            diagnostics: None,
            error: None,
        }
    }

    #[test]
    fn global_and_per_difficulty() {
        let rows = vec![
            row("a", 0.9, false),
            row("b", 0.1, true),
            row("c", 0.5, true),
            ReportRow::failed("d", "boom"),
        ];
        let diff: BTreeMap<String, Difficulty> =
            [("a".to_string(), Difficulty::Hard), ("b".to_string(), Difficulty::Easy), ("c".to_string(), Difficulty::Easy)].into();
        let s = summarize(&rows, &diff).unwrap();
        assert_eq!((s.n_tasks, s.n_skipped), (3, 1));
        assert_eq!(s.scores["dsde"].auroc, Stat::Value(1.0));
        assert_eq!(s.scores["sc_entropy"].auroc, Stat::Value(0.5));
        assert_eq!(s.scores["sc_entropy"].pearson_r, Stat::Undefined);
        assert_eq!(s.per_difficulty["easy"]["dsde"].auroc, Stat::Undefined);
        assert_eq!(s.per_difficulty["hard"]["dsde"].n_tasks, 1);
        let json = serde_json::to_value(&s).unwrap();
        assert_eq!(json["scores"]["sc_entropy"]["pearson_r"], "undefined");
        let back: EvalSummary = serde_json::from_value(json).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn missing_labels_are_a_schema_error() {
        let mut r = row("a", 0.1, true);
        r.pass1 = None;
        assert!(matches!(summarize(&[r], &BTreeMap::new()), Err(EvalError::SchemaMismatch { field: "pass1", .. })));
    }
}
