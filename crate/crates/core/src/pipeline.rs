//! Rotate-and-merge: run the backend on every rotation of the input, map
//! each detection back to the original frame, score it by the mean of its
//! detection and recognition confidences, and merge with greedy NMS.

use std::cmp::Ordering;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendConfig, BackendError};
use crate::geometry::{invert_transform, iou, transform_quad, GeometryError, Quad};
use crate::imaging::{rotate_image, ImageRef, ImagingError};

pub const DEFAULT_ROTATION_STEP: f64 = 15.0;
pub const DEFAULT_NMS_IOU: f64 = 0.5;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("backend failed on rotation {angle}°: {source}")]
    Backend {
        angle: f64,
        #[source]
        source: BackendError,
    },
    #[error("rotation {angle}°: {source}")]
    Imaging {
        angle: f64,
        #[source]
        source: ImagingError,
    },
    #[error("rotation {angle}°: cannot map detection back: {source}")]
    BackMap {
        angle: f64,
        #[source]
        source: GeometryError,
    },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// The views `{0, r, 2r, …}` below 360°.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationSet {
    step: f64,
    angles: Vec<f64>,
}

impl RotationSet {
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

/// Builds the rotation set for step `r`. `r` must divide 360; 360° itself
/// is the same view as 0° and is not repeated.
pub fn build_rotation_set(step: f64) -> Result<RotationSet, PipelineError> {
    if !(step > 0.0 && step <= 360.0) {
        return Err(PipelineError::Config(format!("rotation step {step} must lie in (0, 360]")));
    }
    let count = 360.0 / step;
    if (count - count.round()).abs() > 1e-9 {
        return Err(PipelineError::Config(format!("rotation step {step} does not divide 360")));
    }
    let count = count.round() as usize;
    Ok(RotationSet {
        step,
        angles: (0..count).map(|i| i as f64 * step).collect(),
    })
}

/// Fused confidence `(μ + ν) / 2`.
pub fn fuse_score(det_score: f64, rec_score: f64) -> Result<f64, PipelineError> {
    for v in [det_score, rec_score] {
        if !(0.0..=1.0).contains(&v) {
            return Err(PipelineError::InvalidInput(format!("score {v} outside [0, 1]")));
        }
    }
    Ok((det_score + rec_score) / 2.0)
}

/// A detection mapped back to the original frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeCandidate {
    pub quad: Quad,
    pub text: String,
    pub det_score: f64,
    pub rec_score: f64,
    pub score: f64,
    pub source_angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub rotation_step: f64,
    pub nms_iou: f64,
    pub backend: BackendConfig,
    /// Rotations processed concurrently; 0 means one per available core.
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            rotation_step: DEFAULT_ROTATION_STEP,
            nms_iou: DEFAULT_NMS_IOU,
            backend: BackendConfig::default(),
            jobs: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        build_rotation_set(self.rotation_step)?;
        if !(self.nms_iou > 0.0 && self.nms_iou < 1.0) {
            return Err(PipelineError::Config(format!(
                "NMS IoU threshold {} must lie in (0, 1)",
                self.nms_iou
            )));
        }
        self.backend
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))
    }
}

/// Per-rotation wall-clock time.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationTiming {
    pub angle: f64,
    pub elapsed: Duration,
    pub detections: usize,
}

/// Runs the pipeline against one backend instance, reusing its worker pool
/// across images.
pub struct Pipeline {
    config: PipelineConfig,
    rotations: RotationSet,
    backend: Backend,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let rotations = build_rotation_set(config.rotation_step)?;
        let width = if config.jobs == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            config.jobs
        };
        let backend = Backend::from_config(&config.backend, width)
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(width)
            .build()
            .map_err(|e| PipelineError::ThreadPool(e.to_string()))?;
        Ok(Self {
            config,
            rotations,
            backend,
            pool,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn rotations(&self) -> &RotationSet {
        &self.rotations
    }

    /// All back-mapped candidates in ascending-angle order, plus timings.
    pub fn collect_candidates(
        &self,
        img: &ImageRef,
    ) -> Result<(Vec<MergeCandidate>, Vec<RotationTiming>), PipelineError> {
        let per_angle: Vec<Result<(Vec<MergeCandidate>, RotationTiming), PipelineError>> = self.pool.install(|| {
            self.rotations
                .angles()
                .par_iter()
                .map(|&angle| self.candidates_for(img, angle))
                .collect()
        });
        // results are in angle order, so the first error is the lowest angle
        let mut cands = Vec::new();
        let mut timings = Vec::with_capacity(per_angle.len());
        for r in per_angle {
            let (c, t) = r?;
            cands.extend(c);
            timings.push(t);
        }
        Ok((cands, timings))
    }

    fn candidates_for(&self, img: &ImageRef, angle: f64) -> Result<(Vec<MergeCandidate>, RotationTiming), PipelineError> {
        let start = Instant::now();
        let (rotated, t) = rotate_image(img, angle).map_err(|source| PipelineError::Imaging { angle, source })?;
        let dets = self
            .backend
            .detect(&rotated)
            .map_err(|source| PipelineError::Backend { angle, source })?;
        let inv = invert_transform(&t);
        let cands = dets
            .into_iter()
            .map(|d| {
                let quad = transform_quad(&inv, &d.quad).map_err(|source| PipelineError::BackMap { angle, source })?;
                Ok(MergeCandidate {
                    quad,
                    score: fuse_score(d.det_score, d.rec_score)?,
                    text: d.text,
                    det_score: d.det_score,
                    rec_score: d.rec_score,
                    source_angle: angle,
                })
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        let timing = RotationTiming {
            angle,
            elapsed: start.elapsed(),
            detections: cands.len(),
        };
        Ok((cands, timing))
    }

    pub fn run(&self, img: &ImageRef) -> Result<Vec<MergeCandidate>, PipelineError> {
        self.run_timed(img).map(|(d, _)| d)
    }

    pub fn run_timed(&self, img: &ImageRef) -> Result<(Vec<MergeCandidate>, Vec<RotationTiming>), PipelineError> {
        let (cands, timings) = self.collect_candidates(img)?;
        Ok((nms_merge(cands, self.config.nms_iou), timings))
    }
}

/// Convenience wrapper building a one-off [`Pipeline`].
pub fn collect_candidates(img: &ImageRef, cfg: &PipelineConfig) -> Result<Vec<MergeCandidate>, PipelineError> {
    Pipeline::new(cfg.clone())?.collect_candidates(img).map(|(c, _)| c)
}

pub fn run_pipeline(img: &ImageRef, cfg: &PipelineConfig) -> Result<Vec<MergeCandidate>, PipelineError> {
    Pipeline::new(cfg.clone())?.run(img)
}

/// Total order used by NMS: score descending, then lower source angle,
/// then text, then box coordinates. The last key only separates
/// candidates that are otherwise indistinguishable, which keeps the
/// output independent of input order.
fn merge_order(a: &MergeCandidate, b: &MergeCandidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.source_angle.total_cmp(&b.source_angle))
        .then_with(|| a.text.cmp(&b.text))
        .then_with(|| {
            a.quad
                .to_flat()
                .iter()
                .zip(b.quad.to_flat().iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
        .then(a.det_score.total_cmp(&b.det_score))
}

/// Greedy non-maximum suppression: keep the best remaining candidate and
/// drop every other one whose IoU with it exceeds `iou_threshold`.
pub fn nms_merge(mut cands: Vec<MergeCandidate>, iou_threshold: f64) -> Vec<MergeCandidate> {
    cands.sort_by(merge_order);
    let mut suppressed = vec![false; cands.len()];
    let mut kept = Vec::new();
    for i in 0..cands.len() {
        if suppressed[i] {
            continue;
        }
        for j in i + 1..cands.len() {
            if !suppressed[j] && iou(&cands[i].quad, &cands[j].quad) > iou_threshold {
                suppressed[j] = true;
            }
        }
        kept.push(i);
    }
    let mut slots: Vec<Option<MergeCandidate>> = cands.into_iter().map(Some).collect();
    kept.into_iter().filter_map(|i| slots[i].take()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{fold_degrees, Point};
    use crate::imaging::{SceneDescriptor, TextInstance};

    fn cand(quad: Quad, score: f64, angle: f64, text: &str) -> MergeCandidate {
        MergeCandidate {
            quad,
            text: text.into(),
            det_score: score,
            rec_score: score,
            score,
            source_angle: angle,
        }
    }

    fn scene(orientations: &[f64]) -> ImageRef {
        let instances = orientations
            .iter()
            .enumerate()
            .map(|(i, &o)| TextInstance {
                text: format!("w{i}"),
                center: Point::new(200.0 + 400.0 * i as f64, 300.0),
                orientation: o,
                box_w: 150.0,
                box_h: 40.0,
            })
            .collect();
        ImageRef::scene("s", SceneDescriptor::new(1920, 1080, instances).unwrap())
    }

    fn config(step: f64, tolerance: f64) -> PipelineConfig {
        PipelineConfig {
            rotation_step: step,
            backend: BackendConfig::Mock {
                tolerance,
                corrupt: false,
            },
            jobs: 2,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn rotation_sets() {
        let r = build_rotation_set(15.0).unwrap();
        assert_eq!(r.len(), 24);
        assert_eq!(r.angles()[0], 0.0);
        assert_eq!(r.angles()[23], 345.0);
        assert_eq!(build_rotation_set(360.0).unwrap().angles(), &[0.0]);
        assert_eq!(build_rotation_set(90.0).unwrap().angles(), &[0.0, 90.0, 180.0, 270.0]);
        assert!(build_rotation_set(7.0).is_err());
        assert!(build_rotation_set(0.0).is_err());
        assert!(build_rotation_set(720.0).is_err());
        assert_eq!(build_rotation_set(22.5).unwrap().len(), 16);
    }

    #[test]
    fn fused_scores() {
        assert!((fuse_score(0.8, 0.6).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(fuse_score(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(fuse_score(0.0, 1.0).unwrap(), 0.5);
        assert!(fuse_score(1.2, 0.0).is_err());
        assert!(fuse_score(0.5, -0.1).is_err());
    }

    #[test]
    fn single_upright_instance_read_once() {
        // enumerate the 24 views: only those presenting the text within ±10°
        let expected = build_rotation_set(15.0)
            .unwrap()
            .angles()
            .iter()
            .filter(|&&a| fold_degrees(a).abs() <= 10.0)
            .count();
        let c = collect_candidates(&scene(&[0.0]), &config(15.0, 10.0)).unwrap();
        assert_eq!(c.len(), expected);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].source_angle, 0.0);
        assert_eq!(c[0].score, (0.95 + 0.9) / 2.0);
    }

    #[test]
    fn empty_scene() {
        assert!(collect_candidates(&scene(&[]), &config(15.0, 10.0)).unwrap().is_empty());
        assert!(run_pipeline(&scene(&[]), &config(15.0, 10.0)).unwrap().is_empty());
    }

    #[test]
    fn back_mapped_boxes_agree_across_views() {
        let img = scene(&[90.0]);
        let c = collect_candidates(&img, &config(15.0, 20.0)).unwrap();
        let angles: Vec<f64> = c.iter().map(|m| m.source_angle).collect();
        assert_eq!(angles, vec![255.0, 270.0, 285.0]);
        let truth = img.as_scene().unwrap().instances[0].quad().unwrap();
        for a in &c {
            assert!(iou(&a.quad, &truth) > 0.99);
            for b in &c {
                assert!(iou(&a.quad, &b.quad) > 0.99);
            }
        }
    }

    #[test]
    fn nms_examples() {
        let a = Quad::rect(0.0, 0.0, 10.0, 10.0).unwrap();
        assert_eq!(nms_merge(vec![cand(a, 0.9, 0.0, "a")], 0.5).len(), 1);

        // B overlaps A with IoU 0.8: 10×10 vs 10×10 shifted by 10/9
        let shift = 10.0 / 9.0;
        let b = Quad::rect(shift, 0.0, 10.0, 10.0).unwrap();
        assert!((iou(&a, &b) - 0.8).abs() < 1e-9);
        let c = Quad::rect(100.0, 100.0, 10.0, 10.0).unwrap();
        let out = nms_merge(
            vec![cand(c, 0.5, 0.0, "c"), cand(b, 0.7, 0.0, "b"), cand(a, 0.9, 0.0, "a")],
            0.5,
        );
        let texts: Vec<&str> = out.iter().map(|m| m.text.as_str()).collect();
        assert_eq!(texts, ["a", "c"]);
    }

    #[test]
    fn nms_matches_subset_enumeration() {
        // every keep/discard subset of {A, B, C}; the greedy answer is the
        // unique subset that is pairwise non-overlapping and covers each
        // discarded box by a kept one of higher score
        let a = Quad::rect(0.0, 0.0, 10.0, 10.0).unwrap();
        let b = Quad::rect(10.0 / 9.0, 0.0, 10.0, 10.0).unwrap();
        let c = Quad::rect(100.0, 100.0, 10.0, 10.0).unwrap();
        let all = [cand(a, 0.9, 0.0, "a"), cand(b, 0.7, 0.0, "b"), cand(c, 0.5, 0.0, "c")];
        let mut valid = Vec::new();
        for mask in 0u32..8 {
            let kept: Vec<usize> = (0..3).filter(|i| mask & (1 << i) != 0).collect();
            let sound = kept.iter().all(|&i| kept.iter().all(|&j| i == j || iou(&all[i].quad, &all[j].quad) <= 0.5));
            let covered = (0..3).filter(|i| !kept.contains(i)).all(|i| {
                kept.iter().any(|&k| all[k].score >= all[i].score && iou(&all[k].quad, &all[i].quad) > 0.5)
            });
            if sound && covered {
                valid.push(kept);
            }
        }
        assert_eq!(valid, vec![vec![0, 2]]);
        let got: Vec<String> = nms_merge(all.to_vec(), 0.5).into_iter().map(|m| m.text).collect();
        assert_eq!(got, ["a", "c"]);
    }

    #[test]
    fn nms_tie_break() {
        let q = Quad::rect(0.0, 0.0, 5.0, 5.0).unwrap();
        let out = nms_merge(
            vec![cand(q, 0.8, 30.0, "x"), cand(q, 0.8, 15.0, "z"), cand(q, 0.8, 15.0, "y")],
            0.5,
        );
        assert_eq!(out.len(), 1);
        assert_eq!((out[0].source_angle, out[0].text.as_str()), (15.0, "y"));
    }

    #[test]
    fn three_orientations_all_recovered() {
        let img = scene(&[0.0, 120.0, 240.0]);
        let out = run_pipeline(&img, &config(15.0, 10.0)).unwrap();
        let mut texts: Vec<String> = out.iter().map(|m| m.text.clone()).collect();
        texts.sort();
        assert_eq!(texts, ["w0", "w1", "w2"]);

        let base = run_pipeline(&img, &config(360.0, 10.0)).unwrap();
        assert_eq!(base.len(), 1);
        assert_eq!(base[0].text, "w0");
    }

    #[test]
    fn baseline_reduction() {
        let img = scene(&[3.0, 40.0, 357.0]);
        let cfg = config(360.0, 10.0);
        let direct = crate::backend::run_backend(&cfg.backend, &img).unwrap();
        let cands = direct
            .into_iter()
            .map(|d| MergeCandidate {
                score: fuse_score(d.det_score, d.rec_score).unwrap(),
                quad: d.quad,
                text: d.text,
                det_score: d.det_score,
                rec_score: d.rec_score,
                source_angle: 0.0,
            })
            .collect();
        assert_eq!(run_pipeline(&img, &cfg).unwrap(), nms_merge(cands, cfg.nms_iou));
    }

    #[test]
    fn backend_failure_carries_angle() {
        let img = ImageRef::raster("r", crate::imaging::RasterImage::black(8, 8).unwrap());
        match run_pipeline(&img, &config(90.0, 10.0)) {
            Err(PipelineError::Backend { angle, .. }) => assert_eq!(angle, 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = config(15.0, 10.0);
        cfg.nms_iou = 1.0;
        assert!(Pipeline::new(cfg).is_err());
        assert!(Pipeline::new(config(7.0, 10.0)).is_err());
        assert!(Pipeline::new(config(15.0, 0.0)).is_err());
    }
}
