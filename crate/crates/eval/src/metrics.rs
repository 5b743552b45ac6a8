//! Per-sample scoring and exact aggregate rates.

use std::collections::{BTreeSet, HashSet};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

/// Scoring of one answer against its ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub corr: Vec<String>,
    pub fp: Vec<String>,
    pub success: bool,
    pub hallucination: bool,
}

/// An answer succeeds when it cites at least one true id and no false
/// one; it hallucinates when it cites any false id.
pub fn eval_sample<S: AsRef<str>>(truth_ids: &[S], resp_ids: &[String]) -> Verdict {
    let truth: HashSet<&str> = truth_ids.iter().map(AsRef::as_ref).collect();
    let (corr, fp): (Vec<String>, Vec<String>) = resp_ids
        .iter()
        .cloned()
        .partition(|i| truth.contains(i.as_str()));
    Verdict {
        success: !corr.is_empty() && fp.is_empty(),
        hallucination: !fp.is_empty(),
        corr,
        fp,
    }
}

/// One line of the per-sample results file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalResult {
    pub sample_id: String,
    pub truth_ids: Vec<String>,
    pub resp_ids: Vec<String>,
    pub corr: Vec<String>,
    pub fp: Vec<String>,
    pub success: bool,
    pub hallucination: bool,
    pub response: String,
    /// Set when the model could not be queried or decoding failed; the
    /// sample still counts, as neither success nor hallucination.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EvalResult {
    pub fn scored(
        sample_id: &str,
        truth_ids: &[String],
        resp_ids: Vec<String>,
        response: String,
    ) -> Self {
        let v = eval_sample(truth_ids, &resp_ids);
        Self {
            sample_id: sample_id.to_string(),
            truth_ids: truth_ids.to_vec(),
            resp_ids,
            corr: v.corr,
            fp: v.fp,
            success: v.success,
            hallucination: v.hallucination,
            response,
            error: None,
        }
    }

    pub fn failed(sample_id: &str, truth_ids: &[String], error: String) -> Self {
        Self {
            error: Some(error),
            ..Self::scored(sample_id, truth_ids, Vec::new(), String::new())
        }
    }
}

/// Rates as exact fractions, written `numerator/denominator`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactRates {
    pub success_rate: String,
    pub hallucination_rate: String,
    pub fp_reference_rate: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub turns: usize,
    pub samples: usize,
    pub failures: usize,
    pub successes: usize,
    pub hallucinations: usize,
    pub success_rate: f64,
    /// Fraction of samples citing at least one false id. This is also the
    /// sample-level false-positive rate.
    pub hallucination_rate: f64,
    pub fp_sample_rate: f64,
    /// Σ|fp| / Σ|resp_ids| over all samples, 0 when nothing was cited.
    pub fp_reference_rate: f64,
    pub exact: ExactRates,
    pub total_resp_ids: usize,
    pub total_corr: usize,
    pub total_fp: usize,
    pub total_refs: usize,
    pub unique_refs: usize,
    /// Scores from an LLM judge are not computed.
    pub judge_score: Option<f64>,
}

pub fn ratio(num: usize, den: usize) -> Ratio<u64> {
    if den == 0 {
        Ratio::from_integer(0)
    } else {
        Ratio::new(num as u64, den as u64)
    }
}

pub fn ratio_str(r: Ratio<u64>) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub fn ratio_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

pub fn parse_ratio(s: &str) -> Option<Ratio<u64>> {
    let (n, d) = s.split_once('/')?;
    let (n, d): (u64, u64) = (n.parse().ok()?, d.parse().ok()?);
    (d != 0).then(|| Ratio::new(n, d))
}

pub fn aggregate(turns: usize, results: &[EvalResult]) -> MetricsReport {
    let n = results.len();
    let count = |f: fn(&EvalResult) -> bool| results.iter().filter(|r| f(r)).count();
    let successes = count(|r| r.success);
    let hallucinations = count(|r| r.hallucination);
    let failures = count(|r| r.error.is_some());
    let sum = |f: fn(&EvalResult) -> usize| results.iter().map(f).sum::<usize>();
    let total_resp_ids = sum(|r| r.resp_ids.len());
    let total_fp = sum(|r| r.fp.len());
    let unique: BTreeSet<&str> = results
        .iter()
        .flat_map(|r| r.truth_ids.iter().map(String::as_str))
        .collect();
    let success = ratio(successes, n);
    let halluc = ratio(hallucinations, n);
    let fp_ref = ratio(total_fp, total_resp_ids);
    MetricsReport {
        turns,
        samples: n,
        failures,
        successes,
        hallucinations,
        success_rate: ratio_f64(success),
        hallucination_rate: ratio_f64(halluc),
        fp_sample_rate: ratio_f64(halluc),
        fp_reference_rate: ratio_f64(fp_ref),
        exact: ExactRates {
            success_rate: ratio_str(success),
            hallucination_rate: ratio_str(halluc),
            fp_reference_rate: ratio_str(fp_ref),
        },
        total_resp_ids,
        total_corr: sum(|r| r.corr.len()),
        total_fp,
        total_refs: sum(|r| r.truth_ids.len()),
        unique_refs: unique.len(),
        judge_score: None,
    }
}
