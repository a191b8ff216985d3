//! Detect+recognize backends: anything that maps an image to a list of
//! boxes with text, a detection score and a recognition score.
//!
//! Two kinds exist. [`MockBackend`] reads virtual scenes and "recognizes"
//! text only when it is close to upright, which makes rotation effects
//! observable without a model. [`SubprocessBackend`] drives an external
//! engine over line-delimited JSON (see [`wire`]).

mod mock;
mod subprocess;
pub mod wire;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Quad;
use crate::imaging::{ImageRef, ImagingError};

pub use mock::{corrupt_text, MockBackend};
pub use subprocess::SubprocessBackend;

pub const DEFAULT_MOCK_TOLERANCE: f64 = 10.0;
pub const DEFAULT_TIMEOUT_SECS: f64 = 60.0;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error("{0}")]
    UnsupportedImage(String),
    #[error("malformed response at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("backend reported an error for request {id}: {message}")]
    Remote { id: String, message: String },
    #[error("backend did not answer within {0} s")]
    Timeout(f64),
    #[error("backend process exited ({0})")]
    Exited(String),
    #[error("backend i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

/// One finding: a box in the coordinates of the image the backend was
/// given, its text, and the detector/recognizer confidences.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub quad: Quad,
    pub text: String,
    pub det_score: f64,
    pub rec_score: f64,
}

impl Detection {
    pub fn new(quad: Quad, text: impl Into<String>, det_score: f64, rec_score: f64) -> Result<Self, String> {
        let d = Self {
            quad,
            text: text.into(),
            det_score,
            rec_score,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("det_score", self.det_score), ("rec_score", self.rec_score)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} {v} outside [0, 1]"));
            }
        }
        if self.text.is_empty() && self.rec_score != 0.0 {
            return Err(format!("empty text with non-zero rec_score {}", self.rec_score));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Mock {
        /// Readable tolerance in degrees around upright.
        tolerance: f64,
        corrupt: bool,
    },
    Subprocess {
        command: Vec<String>,
        timeout_secs: f64,
    },
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Mock {
            tolerance: DEFAULT_MOCK_TOLERANCE,
            corrupt: false,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        match self {
            BackendConfig::Mock { tolerance, .. } => {
                if !(*tolerance > 0.0 && *tolerance <= 90.0) {
                    return Err(BackendError::Config(format!(
                        "mock tolerance {tolerance} must lie in (0, 90]"
                    )));
                }
            }
            BackendConfig::Subprocess {
                command,
                timeout_secs,
            } => {
                if command.is_empty() || command[0].is_empty() {
                    return Err(BackendError::Config("empty backend command".into()));
                }
                if !(*timeout_secs > 0.0 && timeout_secs.is_finite()) {
                    return Err(BackendError::Config(format!(
                        "timeout {timeout_secs} must be positive"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A ready-to-use backend built from a [`BackendConfig`].
pub enum Backend {
    Mock(MockBackend),
    Subprocess(SubprocessBackend),
}

impl Backend {
    /// `pool_size` bounds the number of child processes for the subprocess
    /// kind; it is ignored by the mock.
    pub fn from_config(cfg: &BackendConfig, pool_size: usize) -> Result<Self, BackendError> {
        cfg.validate()?;
        Ok(match cfg {
            BackendConfig::Mock { tolerance, corrupt } => Backend::Mock(MockBackend::new(*tolerance, *corrupt)?),
            BackendConfig::Subprocess {
                command,
                timeout_secs,
            } => Backend::Subprocess(SubprocessBackend::new(command.clone(), *timeout_secs, pool_size)?),
        })
    }

    pub fn detect(&self, img: &ImageRef) -> Result<Vec<Detection>, BackendError> {
        match self {
            Backend::Mock(m) => m.detect(img),
            Backend::Subprocess(s) => s.detect(img),
        }
    }
}

/// One-shot convenience: build the backend and run it on `img`.
pub fn run_backend(cfg: &BackendConfig, img: &ImageRef) -> Result<Vec<Detection>, BackendError> {
    Backend::from_config(cfg, 1)?.detect(img)
}
