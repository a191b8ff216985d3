use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use rotmerge_core::dataset::{read_annotations, write_atomic, DatasetError};
use rotmerge_core::metrics::{evaluate, match_predictions, render_csv, render_table, EvalReport, GroundTruth};
use rotmerge_core::pipeline::MergeCandidate;

use crate::records::DetectionRecord;
use crate::{EvalArgs, Failure};

fn read_detections(path: &Path) -> Result<BTreeMap<String, Vec<MergeCandidate>>, Failure> {
    let file = std::fs::File::open(path).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
    let mut by_image: BTreeMap<String, Vec<MergeCandidate>> = BTreeMap::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let schema = |m: String| Failure::config(format!("{}:{}: {m}", path.display(), i + 1));
        let rec: DetectionRecord = serde_json::from_str(&line).map_err(|e| schema(e.to_string()))?;
        let cand = rec.to_candidate().map_err(schema)?;
        by_image.entry(rec.image).or_default().push(cand);
    }
    Ok(by_image)
}

fn split_label(spec: &str) -> (String, PathBuf) {
    match spec.split_once('=') {
        Some((label, path)) if !label.is_empty() => (label.to_owned(), PathBuf::from(path)),
        _ => {
            let p = PathBuf::from(spec);
            let label = p
                .parent()
                .and_then(|d| d.file_name())
                .or_else(|| p.file_stem())
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| spec.to_owned());
            (label, p)
        }
    }
}

pub fn execute(args: EvalArgs) -> Result<(), Failure> {
    let anns = read_annotations(&args.annotations).map_err(|e| match e {
        DatasetError::Io { .. } => Failure::runtime(e),
        other => Failure::config(other),
    })?;
    if anns.is_empty() {
        return Err(Failure::config("annotation file is empty"));
    }
    let unresolved: Vec<&str> = anns.iter().filter(|a| a.consensus.is_none()).map(|a| a.id.as_str()).collect();
    if !unresolved.is_empty() {
        return Err(Failure::config(format!(
            "annotations without consensus: {}; run `rotmerge consensus` first",
            unresolved.join(", ")
        )));
    }
    let mut truth: BTreeMap<&str, Vec<GroundTruth>> = BTreeMap::new();
    for a in &anns {
        truth.entry(a.image.as_str()).or_default().push(GroundTruth {
            id: a.id.clone(),
            quad: a.quad().map_err(Failure::config)?,
            text: a.consensus.clone().unwrap_or_default(),
        });
    }

    let mut reports: Vec<EvalReport> = Vec::new();
    for spec in &args.detections {
        let (label, path) = split_label(spec);
        let preds = read_detections(&path)?;
        let samples: Vec<_> = truth
            .iter()
            .flat_map(|(image, gts)| {
                let p = preds.get(*image).map(Vec::as_slice).unwrap_or(&[]);
                match_predictions(p, gts)
            })
            .collect();
        reports.push(evaluate(&label, &samples, args.case_sensitive).map_err(Failure::config)?);
    }

    let table = render_table(&reports);
    print!("{table}");
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out).map_err(|e| Failure::runtime(format!("{}: {e}", out.display())))?;
        write_atomic(&out.join("report.txt"), table.as_bytes()).map_err(Failure::runtime)?;
        write_atomic(&out.join("report.csv"), render_csv(&reports).as_bytes()).map_err(Failure::runtime)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(split_label("base=a/b.jsonl"), ("base".into(), PathBuf::from("a/b.jsonl")));
        assert_eq!(split_label("runs/rot15/detections.jsonl").0, "rot15");
        assert_eq!(split_label("det.jsonl").0, "det");
    }
}
