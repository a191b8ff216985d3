//! Line-delimited JSON protocol spoken with external engines.
//!
//! ```text
//! request:  {"id": "...", "image_path": "/abs/path.png"}
//! response: {"id": "...", "detections": [{"polygon": [x1,y1,...,x4,y4],
//!            "text": "...", "det_score": 0.9, "rec_score": 0.8}]}
//! error:    {"id": "...", "error": "..."}
//! ```
//!
//! One object per line in each direction.

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::geometry::Quad;

use super::{BackendError, Detection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: String,
    pub image_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireDetection {
    pub polygon: Vec<f64>,
    pub text: String,
    pub det_score: f64,
    pub rec_score: f64,
}

impl From<&Detection> for WireDetection {
    fn from(d: &Detection) -> Self {
        Self {
            polygon: d.quad.to_flat().to_vec(),
            text: d.text.clone(),
            det_score: d.det_score,
            rec_score: d.rec_score,
        }
    }
}

impl WireDetection {
    pub fn to_detection(&self) -> Result<Detection, String> {
        if self.polygon.len() != 8 {
            return Err(format!(
                "polygon must hold 8 numbers (4 points), got {}",
                self.polygon.len()
            ));
        }
        let quad = Quad::from_flat(&self.polygon).map_err(|e| format!("polygon: {e}"))?;
        Detection::new(quad, self.text.clone(), self.det_score, self.rec_score)
    }
}

/// A parsed response line: either detections or a remote error.
#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub id: String,
    pub outcome: Result<Vec<Detection>, String>,
}

#[derive(Deserialize)]
struct RawResponse<'a> {
    id: Option<String>,
    #[serde(borrow)]
    detections: Option<Vec<&'a RawValue>>,
    error: Option<String>,
}

fn json_offset(line: &str, err: &serde_json::Error) -> usize {
    // serde_json reports 1-based line/column; rebase to a byte offset
    let line_start: usize = line
        .split_inclusive('\n')
        .take(err.line().saturating_sub(1))
        .map(str::len)
        .sum();
    (line_start + err.column().saturating_sub(1)).min(line.len())
}

/// Parses one response line. Either every detection is valid or the whole
/// line is rejected.
pub fn parse_response(line: &str) -> Result<Response, BackendError> {
    let line = line.trim_end_matches(['\r', '\n']);
    let raw: RawResponse = serde_json::from_str(line).map_err(|e| BackendError::Parse {
        offset: json_offset(line, &e),
        message: e.to_string(),
    })?;
    let id = raw.id.ok_or_else(|| BackendError::Parse {
        offset: 0,
        message: "missing field `id`".into(),
    })?;
    match (raw.detections, raw.error) {
        (Some(_), Some(_)) => Err(BackendError::Parse {
            offset: 0,
            message: "response carries both `detections` and `error`".into(),
        }),
        (None, None) => Err(BackendError::Parse {
            offset: 0,
            message: "missing field `detections`".into(),
        }),
        (None, Some(msg)) => Ok(Response {
            id,
            outcome: Err(msg),
        }),
        (Some(items), None) => {
            let mut dets = Vec::with_capacity(items.len());
            for (i, item) in items.iter().enumerate() {
                let text = item.get();
                let base = text.as_ptr() as usize - line.as_ptr() as usize;
                let wire: WireDetection = serde_json::from_str(text).map_err(|e| BackendError::Parse {
                    offset: base + json_offset(text, &e),
                    message: format!("detection {i}: {e}"),
                })?;
                let det = wire.to_detection().map_err(|message| BackendError::Parse {
                    offset: base,
                    message: format!("detection {i}: {message}"),
                })?;
                dets.push(det);
            }
            Ok(Response {
                id,
                outcome: Ok(dets),
            })
        }
    }
}

/// Parses a response line and returns its detections; a remote error
/// object becomes [`BackendError::Remote`].
pub fn validate_response(raw_line: &[u8]) -> Result<Vec<Detection>, BackendError> {
    let line = std::str::from_utf8(raw_line).map_err(|e| BackendError::Parse {
        offset: e.valid_up_to(),
        message: "response is not valid UTF-8".into(),
    })?;
    let resp = parse_response(line)?;
    resp.outcome.map_err(|message| BackendError::Remote { id: resp.id, message })
}

#[derive(Serialize)]
struct DetectionsOut<'a> {
    id: &'a str,
    detections: Vec<WireDetection>,
}

#[derive(Serialize)]
struct ErrorOut<'a> {
    id: &'a str,
    error: &'a str,
}

/// Serializes a success response as a single line without the newline.
pub fn format_response(id: &str, detections: &[Detection]) -> String {
    serde_json::to_string(&DetectionsOut {
        id,
        detections: detections.iter().map(WireDetection::from).collect(),
    })
    .expect("response serialization cannot fail")
}

pub fn format_error(id: &str, message: &str) -> String {
    serde_json::to_string(&ErrorOut { id, error: message }).expect("error serialization cannot fail")
}

pub fn format_request(req: &Request) -> String {
    serde_json::to_string(req).expect("request serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Quad;

    #[test]
    fn empty_detections() {
        assert!(validate_response(br#"{"id":"a","detections":[]}"#).unwrap().is_empty());
    }

    #[test]
    fn three_point_polygon_rejected() {
        let line = br#"{"id":"a","detections":[{"polygon":[0,0,1,0,1,1],"text":"x","det_score":0.5,"rec_score":0.5}]}"#;
        match validate_response(line) {
            Err(BackendError::Parse { offset, message }) => {
                assert_eq!(offset, 24);
                assert!(message.contains("8 numbers"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn score_out_of_range_rejects_whole_line() {
        let line = br#"{"id":"a","detections":[{"polygon":[0,0,1,0,1,1,0,1],"text":"ok","det_score":0.5,"rec_score":0.5},{"polygon":[0,0,1,0,1,1,0,1],"text":"x","det_score":1.5,"rec_score":0.5}]}"#;
        let err = validate_response(line).unwrap_err();
        assert!(matches!(err, BackendError::Parse { .. }), "{err}");
    }

    #[test]
    fn missing_fields() {
        assert!(matches!(validate_response(br#"{"detections":[]}"#), Err(BackendError::Parse { .. })));
        assert!(matches!(validate_response(br#"{"id":"a"}"#), Err(BackendError::Parse { .. })));
        let line = br#"{"id":"a","detections":[{"polygon":[0,0,1,0,1,1,0,1],"text":"x","det_score":0.5}]}"#;
        match validate_response(line) {
            Err(BackendError::Parse { message, .. }) => assert!(message.contains("rec_score")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_error_offset() {
        match validate_response(br#"{"id":"a","detections":[}"#) {
            Err(BackendError::Parse { offset, .. }) => assert_eq!(offset, 24),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_text_needs_zero_rec_score() {
        let bad = br#"{"id":"a","detections":[{"polygon":[0,0,1,0,1,1,0,1],"text":"","det_score":0.5,"rec_score":0.2}]}"#;
        assert!(validate_response(bad).is_err());
        let ok = br#"{"id":"a","detections":[{"polygon":[0,0,1,0,1,1,0,1],"text":"","det_score":0.5,"rec_score":0}]}"#;
        assert_eq!(validate_response(ok).unwrap().len(), 1);
    }

    #[test]
    fn error_object() {
        match validate_response(br#"{"id":"r7","error":"cuda oom"}"#) {
            Err(BackendError::Remote { id, message }) => {
                assert_eq!(id, "r7");
                assert_eq!(message, "cuda oom");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn format_then_parse() {
        let d = Detection::new(Quad::rect(1.0, 2.0, 30.0, 10.0).unwrap(), "oil", 0.25, 0.75).unwrap();
        let line = format_response("x", std::slice::from_ref(&d));
        let resp = parse_response(&line).unwrap();
        assert_eq!(resp.id, "x");
        assert_eq!(resp.outcome.unwrap(), vec![d]);
        assert_eq!(format_error("q", "boom"), r#"{"id":"q","error":"boom"}"#);
    }
}
