use crate::geometry::fold_degrees;
use crate::imaging::ImageRef;

use super::{BackendError, Detection};

/// Deterministic stand-in for an OCR engine operating on virtual scenes.
///
/// An instance is read when its orientation, folded to `(-180, 180]`, is
/// within `tolerance` degrees of upright. Scores fall linearly with the
/// residual angle: `det = 0.95 - 0.3·|θ|/τ`, `rec = 0.9 - 0.4·|θ|/τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MockBackend {
    tolerance: f64,
    corrupt: bool,
}

impl MockBackend {
    pub fn new(tolerance: f64, corrupt: bool) -> Result<Self, BackendError> {
        if !(tolerance > 0.0 && tolerance <= 90.0) {
            return Err(BackendError::Config(format!(
                "mock tolerance {tolerance} must lie in (0, 90]"
            )));
        }
        Ok(Self { tolerance, corrupt })
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn detect(&self, img: &ImageRef) -> Result<Vec<Detection>, BackendError> {
        let scene = img.as_scene().ok_or_else(|| {
            BackendError::UnsupportedImage("the mock backend only reads virtual scenes".into())
        })?;
        let mut out = Vec::new();
        for inst in &scene.instances {
            let residual = fold_degrees(inst.orientation).abs();
            if residual > self.tolerance {
                continue;
            }
            let frac = residual / self.tolerance;
            let text = if self.corrupt && residual > self.tolerance / 2.0 {
                corrupt_text(&inst.text)
            } else {
                inst.text.clone()
            };
            let quad = inst
                .quad()
                .map_err(|e| BackendError::UnsupportedImage(format!("instance {:?}: {e}", inst.text)))?;
            out.push(Detection {
                quad,
                text,
                det_score: 0.95 - 0.3 * frac,
                rec_score: 0.9 - 0.4 * frac,
            });
        }
        Ok(out)
    }
}

/// 64-bit FNV-1a over the UTF-8 bytes.
fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Replaces exactly one character, picked by a hash of the text, with a
/// character guaranteed to differ from it.
pub fn corrupt_text(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    if chars.is_empty() {
        return String::new();
    }
    let idx = (fnv1a(text) % chars.len() as u64) as usize;
    chars
        .iter()
        .enumerate()
        .map(|(i, &c)| match (i == idx, c) {
            (true, '?') => '!',
            (true, _) => '?',
            (false, c) => c,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::imaging::{RasterImage, SceneDescriptor, TextInstance};
    use crate::metrics::edit_distance;

    fn scene(orientations: &[f64]) -> ImageRef {
        let instances = orientations
            .iter()
            .enumerate()
            .map(|(i, &o)| TextInstance {
                text: format!("word{i}"),
                center: Point::new(100.0 + 200.0 * i as f64, 100.0),
                orientation: o,
                box_w: 120.0,
                box_h: 30.0,
            })
            .collect();
        ImageRef::scene("s", SceneDescriptor::new(2000, 400, instances).unwrap())
    }

    #[test]
    fn upright_instance_full_scores() {
        let d = MockBackend::new(10.0, false).unwrap().detect(&scene(&[0.0])).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].text, "word0");
        assert_eq!(d[0].det_score, 0.95);
        assert_eq!(d[0].rec_score, 0.9);
    }

    #[test]
    fn outside_tolerance_unseen() {
        let d = MockBackend::new(10.0, false).unwrap().detect(&scene(&[45.0])).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn half_tolerance_scores() {
        let d = MockBackend::new(10.0, false).unwrap().detect(&scene(&[5.0])).unwrap();
        assert!((d[0].det_score - 0.80).abs() < 1e-12);
        assert!((d[0].rec_score - 0.70).abs() < 1e-12);
        // negative residuals behave the same
        let d = MockBackend::new(10.0, false).unwrap().detect(&scene(&[355.0])).unwrap();
        assert!((d[0].det_score - 0.80).abs() < 1e-12);
    }

    #[test]
    fn count_matches_tolerance_band() {
        let orientations = [0.0, 9.9, 10.0, 10.1, 180.0, 350.0, 349.0, 270.0];
        let d = MockBackend::new(10.0, false).unwrap().detect(&scene(&orientations)).unwrap();
        let expected = orientations.iter().filter(|&&o| fold_degrees(o).abs() <= 10.0).count();
        assert_eq!(d.len(), expected);
        assert_eq!(expected, 4);
    }

    #[test]
    fn corruption_only_in_outer_band() {
        let m = MockBackend::new(10.0, true).unwrap();
        let d = m.detect(&scene(&[3.0, 8.0])).unwrap();
        assert_eq!(d[0].text, "word0");
        assert_ne!(d[1].text, "word1");
        assert_eq!(edit_distance(&d[1].text, "word1"), 1);
        assert_eq!(m.detect(&scene(&[3.0, 8.0])).unwrap(), d);
    }

    #[test]
    fn corrupt_text_changes_one_char() {
        for w in ["a", "?", "olive oil", "café", "??"] {
            let c = corrupt_text(w);
            assert_eq!(edit_distance(&c, w), 1, "{w} -> {c}");
            assert_eq!(c, corrupt_text(w));
        }
    }

    #[test]
    fn rejects_raster_and_bad_tolerance() {
        let m = MockBackend::new(10.0, false).unwrap();
        let img = ImageRef::raster("r", RasterImage::black(4, 4).unwrap());
        assert!(matches!(m.detect(&img), Err(BackendError::UnsupportedImage(_))));
        assert!(MockBackend::new(0.0, false).is_err());
        assert!(MockBackend::new(90.5, false).is_err());
        assert!(MockBackend::new(90.0, false).is_ok());
    }
}
