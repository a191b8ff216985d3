//! Crop annotations: 5-way worker labels, majority-vote consensus,
//! confidence-based crop selection and orientation statistics.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{fold_degrees, Quad};

pub const WORKERS_PER_CROP: usize = 5;
/// Half-width of the band counted as horizontal, in degrees.
pub const HORIZONTAL_BAND: f64 = 15.0;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("expected {WORKERS_PER_CROP} worker labels, got {0}")]
    LabelCount(usize),
    #[error("{path}:{line}: {message}")]
    Schema {
        path: String,
        line: usize,
        message: String,
    },
    #[error("unresolved consensus for crops: {}", .0.join(", "))]
    Unresolved(Vec<String>),
    #[error("no annotations")]
    Empty,
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Consensus {
    Agreed(String),
    Unresolved,
}

/// Exact-string vote over the trimmed labels; a label needs at least 3 of
/// the 5 votes.
pub fn majority_vote<S: AsRef<str>>(labels: &[S]) -> Result<Consensus, DatasetError> {
    if labels.len() != WORKERS_PER_CROP {
        return Err(DatasetError::LabelCount(labels.len()));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l.as_ref().trim()).or_default() += 1;
    }
    Ok(counts
        .into_iter()
        .find(|&(_, n)| n * 2 > WORKERS_PER_CROP)
        .map_or(Consensus::Unresolved, |(label, _)| Consensus::Agreed(label.to_owned())))
}

/// Keeps candidates whose confidence is at least `threshold`, in input order.
pub fn select_crops<T: Clone>(candidates: &[(T, f64)], threshold: f64) -> Vec<(T, f64)> {
    candidates
        .iter()
        .filter(|(_, conf)| *conf >= threshold)
        .cloned()
        .collect()
}

/// One line of the annotation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropAnnotation {
    pub id: String,
    pub image: String,
    pub polygon: Vec<f64>,
    pub orientation: f64,
    pub workers: Vec<String>,
    pub consensus: Option<String>,
}

impl CropAnnotation {
    pub fn validate(&self) -> Result<(), String> {
        if self.workers.len() != WORKERS_PER_CROP {
            return Err(format!(
                "crop {}: expected {WORKERS_PER_CROP} worker labels, got {}",
                self.id,
                self.workers.len()
            ));
        }
        if !self.orientation.is_finite() {
            return Err(format!("crop {}: non-finite orientation", self.id));
        }
        self.quad().map(|_| ())
    }

    pub fn quad(&self) -> Result<Quad, String> {
        Quad::from_flat(&self.polygon).map_err(|e| format!("crop {}: polygon: {e}", self.id))
    }

    /// Fills `consensus` by majority vote unless it is already set (a
    /// manual resolution). Returns whether the crop ends up resolved.
    pub fn apply_majority(&mut self) -> Result<bool, DatasetError> {
        if self.consensus.is_some() {
            return Ok(true);
        }
        match majority_vote(&self.workers)? {
            Consensus::Agreed(label) => {
                self.consensus = Some(label);
                Ok(true)
            }
            Consensus::Unresolved => Ok(false),
        }
    }

    pub fn resolve_manually(&mut self, label: impl Into<String>) {
        self.consensus = Some(label.into());
    }
}

pub fn read_annotations(path: &Path) -> Result<Vec<CropAnnotation>, DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let schema = |message: String| DatasetError::Schema {
            path: path.display().to_string(),
            line: i + 1,
            message,
        };
        let ann: CropAnnotation = serde_json::from_str(&line).map_err(|e| schema(e.to_string()))?;
        ann.validate().map_err(schema)?;
        out.push(ann);
    }
    Ok(out)
}

/// Writes the file atomically: a temporary sibling is renamed over `path`.
pub fn write_annotations(path: &Path, anns: &[CropAnnotation]) -> Result<(), DatasetError> {
    let mut buf = Vec::new();
    for a in anns {
        serde_json::to_writer(&mut buf, a).expect("annotation serialization cannot fail");
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(contents).map_err(io_err)?;
    tmp.flush().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub crops: usize,
    pub distinct_words: usize,
    pub horizontal_fraction: f64,
    /// Case-folded consensus string → occurrences.
    pub word_frequencies: BTreeMap<String, usize>,
}

impl DatasetStats {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "crops: {}\ndistinct words: {}\nwithin ±{HORIZONTAL_BAND}° of horizontal: {:.3}\n",
            self.crops, self.distinct_words, self.horizontal_fraction
        );
        s.push_str("word frequencies:\n");
        for (w, n) in &self.word_frequencies {
            s.push_str(&format!("  {w}\t{n}\n"));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        s.push_str(&format!("crops,{}\n", self.crops));
        s.push_str(&format!("distinct_words,{}\n", self.distinct_words));
        s.push_str(&format!("horizontal_fraction,{:.6}\n", self.horizontal_fraction));
        s
    }
}

pub fn is_horizontal(orientation: f64) -> bool {
    fold_degrees(orientation).abs() <= HORIZONTAL_BAND
}

pub fn compute_stats(anns: &[CropAnnotation]) -> Result<DatasetStats, DatasetError> {
    if anns.is_empty() {
        return Err(DatasetError::Empty);
    }
    let unresolved: Vec<String> = anns
        .iter()
        .filter(|a| a.consensus.is_none())
        .map(|a| a.id.clone())
        .collect();
    if !unresolved.is_empty() {
        return Err(DatasetError::Unresolved(unresolved));
    }
    let mut word_frequencies = BTreeMap::new();
    for a in anns {
        let word = a.consensus.as_deref().unwrap_or_default().to_lowercase();
        *word_frequencies.entry(word).or_insert(0) += 1;
    }
    let horizontal = anns.iter().filter(|a| is_horizontal(a.orientation)).count();
    Ok(DatasetStats {
        crops: anns.len(),
        distinct_words: word_frequencies.len(),
        horizontal_fraction: horizontal as f64 / anns.len() as f64,
        word_frequencies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ann(id: &str, orientation: f64, consensus: Option<&str>) -> CropAnnotation {
        CropAnnotation {
            id: id.into(),
            image: "img".into(),
            polygon: vec![0.0, 0.0, 10.0, 0.0, 10.0, 5.0, 0.0, 5.0],
            orientation,
            workers: vec!["w".into(); 5],
            consensus: consensus.map(str::to_owned),
        }
    }

    #[test]
    fn vote_examples() {
        assert_eq!(
            majority_vote(&["olive oil", "olive oil", "olive oil", "olive", "oliveoil"]).unwrap(),
            Consensus::Agreed("olive oil".into())
        );
        assert_eq!(majority_vote(&["a", "a", "b", "b", "c"]).unwrap(), Consensus::Unresolved);
        assert_eq!(majority_vote(&["x"; 5]).unwrap(), Consensus::Agreed("x".into()));
        assert_eq!(
            majority_vote(&[" salt", "salt ", "salt", "Salt", "SALT"]).unwrap(),
            Consensus::Agreed("salt".into())
        );
        assert!(matches!(majority_vote(&["a", "b"]), Err(DatasetError::LabelCount(2))));
    }

    #[test]
    fn selection() {
        let c = [("a", 0.4), ("b", 0.6), ("c", 0.9)];
        assert_eq!(select_crops(&c, 0.0).len(), 3);
        assert!(select_crops(&c, 0.9 + 1e-9).is_empty());
        let kept = select_crops(&c, 0.5);
        assert_eq!(kept, vec![("b", 0.6), ("c", 0.9)]);
    }

    #[test]
    fn stats_examples() {
        let all_flat: Vec<_> = (0..10).map(|i| ann(&i.to_string(), 0.0, Some("x"))).collect();
        assert_eq!(compute_stats(&all_flat).unwrap().horizontal_fraction, 1.0);

        let quarter: Vec<_> = [0.0, 90.0, 180.0, 270.0]
            .iter()
            .enumerate()
            .map(|(i, &o)| ann(&i.to_string(), o, Some("x")))
            .collect();
        assert_eq!(compute_stats(&quarter).unwrap().horizontal_fraction, 0.25);

        let words = [ann("a", 0.0, Some("Salt")), ann("b", 0.0, Some("salt")), ann("c", 0.0, Some("pepper"))];
        let s = compute_stats(&words).unwrap();
        assert_eq!(s.distinct_words, 2);
        assert_eq!(s.word_frequencies["salt"], 2);
    }

    #[test]
    fn stats_reject_unresolved() {
        let anns = [ann("a", 0.0, Some("x")), ann("b", 0.0, None), ann("c", 3.0, None)];
        match compute_stats(&anns) {
            Err(DatasetError::Unresolved(ids)) => assert_eq!(ids, ["b", "c"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn band_edges() {
        assert!(is_horizontal(15.0));
        assert!(is_horizontal(345.0));
        assert!(!is_horizontal(15.01));
        assert!(!is_horizontal(180.0));
    }

    #[test]
    fn manual_override_survives_vote() {
        let mut a = ann("a", 0.0, None);
        a.workers = ["a", "a", "b", "b", "c"].map(String::from).to_vec();
        assert!(!a.apply_majority().unwrap());
        a.resolve_manually("a");
        assert!(a.apply_majority().unwrap());
        assert_eq!(a.consensus.as_deref(), Some("a"));
    }

    #[test]
    fn file_round_trip_and_schema_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ann.jsonl");
        let anns = vec![ann("a", 10.0, Some("salt")), ann("b", 200.0, None)];
        write_annotations(&path, &anns).unwrap();
        assert_eq!(read_annotations(&path).unwrap(), anns);

        std::fs::write(&path, "{\"id\":\"a\",\"image\":\"i\",\"polygon\":[0,0,1,0,1,1,0,1],\"orientation\":0,\"workers\":[\"a\"],\"consensus\":null}\n").unwrap();
        match read_annotations(&path) {
            Err(DatasetError::Schema { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(read_annotations(&dir.path().join("missing")), Err(DatasetError::Io { .. })));
    }

    proptest! {
        #[test]
        fn vote_permutation_invariant(labels in proptest::collection::vec("[ab]{1,2}", 5), rot in 0usize..5) {
            let mut rotated = labels.clone();
            rotated.rotate_left(rot);
            let mut reversed = labels.clone();
            reversed.reverse();
            let v = majority_vote(&labels).unwrap();
            prop_assert_eq!(&v, &majority_vote(&rotated).unwrap());
            prop_assert_eq!(&v, &majority_vote(&reversed).unwrap());
        }

        #[test]
        fn selection_monotone(confs in proptest::collection::vec(0.0..1.0f64, 0..20), t1 in 0.0..1.0f64, t2 in 0.0..1.0f64) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let items: Vec<(usize, f64)> = confs.iter().copied().enumerate().collect();
            let a = select_crops(&items, lo);
            let b = select_crops(&items, hi);
            prop_assert!(b.iter().all(|x| a.contains(x)));
            prop_assert!(a.windows(2).all(|w| w[0].0 < w[1].0));
        }
    }
}
