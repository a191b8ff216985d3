//! Rotate-and-merge text recognition.
//!
//! An image is rotated through a grid of angles, a detect+recognize backend
//! runs on each view, detections are mapped back to the original frame and
//! merged with non-maximum suppression. The crate also carries the
//! recognition metrics, annotation tooling and a synthetic scene generator
//! used to exercise the pipeline without a model.

pub mod backend;
pub mod dataset;
pub mod geometry;
pub mod imaging;
pub mod metrics;
pub mod pipeline;
pub mod synth;

pub use backend::{Backend, BackendConfig, BackendError, Detection};
pub use geometry::{Point, Quad, RotationTransform};
pub use imaging::{ImageRef, SceneDescriptor, TextInstance};
pub use pipeline::{MergeCandidate, Pipeline, PipelineConfig, PipelineError, RotationSet};
