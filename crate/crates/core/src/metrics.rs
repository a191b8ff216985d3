//! Recognition metrics: word accuracy, average edit distance and edit
//! distance normalized by ground-truth length.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou, Quad};
use crate::pipeline::MergeCandidate;

/// Minimum IoU for a prediction to count as reading a ground-truth region.
pub const MATCH_IOU: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no samples to evaluate")]
    Empty,
    #[error("sample {0} has an empty ground truth")]
    EmptyGroundTruth(String),
}

/// Levenshtein distance over Unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSample {
    pub id: String,
    pub ground_truth: String,
    /// Empty when nothing was predicted.
    pub prediction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub accuracy: f64,
    pub avg_ed: f64,
    pub norm_ed: f64,
    pub n: usize,
}

pub fn evaluate(method: &str, samples: &[EvalSample], case_sensitive: bool) -> Result<EvalReport, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::Empty);
    }
    let fold = |s: &str| if case_sensitive { s.to_owned() } else { s.to_lowercase() };
    let mut correct = 0usize;
    let mut ed_sum = 0usize;
    let mut norm_sum = 0.0;
    for s in samples {
        let gt = fold(&s.ground_truth);
        let pred = fold(&s.prediction);
        let gt_len = gt.chars().count();
        if gt_len == 0 {
            return Err(EvalError::EmptyGroundTruth(s.id.clone()));
        }
        let ed = edit_distance(&gt, &pred);
        correct += usize::from(ed == 0);
        ed_sum += ed;
        norm_sum += ed as f64 / gt_len as f64;
    }
    let n = samples.len() as f64;
    Ok(EvalReport {
        method: method.to_owned(),
        accuracy: correct as f64 / n,
        avg_ed: ed_sum as f64 / n,
        norm_ed: norm_sum / n,
        n: samples.len(),
    })
}

/// A ground-truth region with its consensus text.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub id: String,
    pub quad: Quad,
    pub text: String,
}

/// Pairs ground truths with predictions greedily by descending IoU, each
/// prediction used at most once. Ground truths left without a partner of
/// IoU ≥ 0.5 get an empty prediction. Output follows the annotation order.
pub fn match_predictions(predictions: &[MergeCandidate], annotations: &[GroundTruth]) -> Vec<EvalSample> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (g, gt) in annotations.iter().enumerate() {
        for (p, pred) in predictions.iter().enumerate() {
            let overlap = iou(&gt.quad, &pred.quad);
            if overlap >= MATCH_IOU {
                pairs.push((overlap, g, p));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut gt_match: Vec<Option<usize>> = vec![None; annotations.len()];
    let mut pred_used = vec![false; predictions.len()];
    for (_, g, p) in pairs {
        if gt_match[g].is_none() && !pred_used[p] {
            gt_match[g] = Some(p);
            pred_used[p] = true;
        }
    }
    annotations
        .iter()
        .zip(gt_match)
        .map(|(gt, m)| EvalSample {
            id: gt.id.clone(),
            ground_truth: gt.text.clone(),
            prediction: m.map(|p| predictions[p].text.clone()).unwrap_or_default(),
        })
        .collect()
}

/// Aligned plain-text table, one row per method.
pub fn render_table(reports: &[EvalReport]) -> String {
    let width = reports
        .iter()
        .map(|r| r.method.chars().count())
        .chain(std::iter::once("Method".len()))
        .max()
        .unwrap_or(6);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>8}  {:>8}  {:>8}  {:>6}",
        "Method", "Acc. ↑", "Avg.ED ↓", "Norm.ED ↓", "n"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<width$}  {:>8.3}  {:>8.2}  {:>9.2}  {:>6}",
            r.method, r.accuracy, r.avg_ed, r.norm_ed, r.n
        );
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

pub fn render_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("method,accuracy,avg_ed,norm_ed,n\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{}",
            csv_field(&r.method),
            r.accuracy,
            r.avg_ed,
            r.norm_ed,
            r.n
        );
    }
    out
}
