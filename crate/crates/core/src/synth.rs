//! Seeded generator of virtual scenes with a controlled share of
//! near-horizontal text, plus the scene file format.
//!
//! Each scene is drawn from its own ChaCha8 stream. The stream seed is
//! derived from the corpus seed and the scene index and is written into
//! the scene file, so any single scene can be regenerated on its own.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{CropAnnotation, WORKERS_PER_CROP};
use crate::geometry::{normalize_degrees, Point};
use crate::imaging::{ImageRef, SceneDescriptor, TextInstance};

/// Identifies the pseudo-random stream in scene file headers.
pub const GENERATOR: &str = "chacha8/rand_chacha-0.3";

pub const DEFAULT_WORDS: &[&str] = &[
    "salt", "pepper", "oil", "olive oil", "sugar", "flour", "milk", "butter", "rice", "pasta",
    "vinegar", "honey", "tea", "coffee", "soy sauce", "ketchup", "mustard", "yogurt", "cereal",
    "paprika",
];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator configuration: {0}")]
    Config(String),
    #[error("scene {scene}: could not place instance {instance} after {attempts} attempts; use a larger canvas or fewer instances")]
    Placement {
        scene: usize,
        instance: usize,
        attempts: usize,
    },
    #[error("scene file {path}: {message}")]
    SceneFile { path: String, message: String },
    #[error("cannot read scene file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub scenes: usize,
    pub instances_per_scene: usize,
    /// Probability that an instance lies within ±`band` of horizontal.
    pub p_horizontal: f64,
    pub band: f64,
    pub words: Vec<String>,
    pub canvas: (u32, u32),
    /// Box width per character, plus a fixed margin.
    pub char_width: f64,
    pub box_margin: f64,
    pub box_height: f64,
    pub max_attempts: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scenes: 200,
            instances_per_scene: 3,
            p_horizontal: 0.3,
            band: 15.0,
            words: DEFAULT_WORDS.iter().map(|w| w.to_string()).collect(),
            canvas: (1920, 1080),
            char_width: 24.0,
            box_margin: 16.0,
            box_height: 40.0,
            max_attempts: 1000,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(0.0..=1.0).contains(&self.p_horizontal) {
            return Err(SynthError::Config(format!("p_horizontal {} outside [0, 1]", self.p_horizontal)));
        }
        if !(self.band > 0.0 && self.band < 90.0) {
            return Err(SynthError::Config(format!("band {} outside (0, 90)", self.band)));
        }
        if self.words.is_empty() || self.words.iter().any(|w| w.is_empty()) {
            return Err(SynthError::Config("word list must be non-empty and contain no empty words".into()));
        }
        if self.canvas.0 == 0 || self.canvas.1 == 0 {
            return Err(SynthError::Config("canvas must be non-empty".into()));
        }
        if !(self.char_width > 0.0 && self.box_height > 0.0 && self.box_margin >= 0.0) {
            return Err(SynthError::Config("box dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// A generated scene, its file name stem and its stream seed.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScene {
    pub name: String,
    pub seed: u64,
    pub scene: SceneDescriptor,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn scene_seed(corpus_seed: u64, index: usize) -> u64 {
    splitmix64(corpus_seed ^ splitmix64(index as u64))
}

/// Orientation in `[0, 360)`: with probability `p` uniform in `[-band, band]`,
/// otherwise uniform in `[band, 360 - band]`.
pub fn sample_orientation<R: Rng>(rng: &mut R, p: f64, band: f64) -> f64 {
    let angle = if rng.gen_bool(p) {
        rng.gen_range(-band..=band)
    } else {
        rng.gen_range(band..=360.0 - band)
    };
    normalize_degrees(angle)
}

/// Generates scene `index` of a corpus from its stream seed.
pub fn generate_scene(cfg: &SynthConfig, index: usize, seed: u64) -> Result<SceneDescriptor, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (cw, ch) = (cfg.canvas.0 as f64, cfg.canvas.1 as f64);
    // axis-aligned slots sized by the box diagonal hold the box at any angle
    let mut slots: Vec<(f64, f64, f64)> = Vec::with_capacity(cfg.instances_per_scene);
    let mut instances = Vec::with_capacity(cfg.instances_per_scene);
    for k in 0..cfg.instances_per_scene {
        let orientation = sample_orientation(&mut rng, cfg.p_horizontal, cfg.band);
        let text = cfg.words[rng.gen_range(0..cfg.words.len())].clone();
        let box_w = cfg.char_width * text.chars().count() as f64 + cfg.box_margin;
        let box_h = cfg.box_height;
        let half = box_w.hypot(box_h) / 2.0;
        if 2.0 * half > cw || 2.0 * half > ch {
            return Err(SynthError::Placement {
                scene: index,
                instance: k,
                attempts: 0,
            });
        }
        let mut placed = None;
        for _ in 0..cfg.max_attempts {
            let x = rng.gen_range(half..=cw - half);
            let y = rng.gen_range(half..=ch - half);
            let free = slots
                .iter()
                .all(|&(sx, sy, sh)| (x - sx).abs() >= half + sh || (y - sy).abs() >= half + sh);
            if free {
                placed = Some((x, y));
                break;
            }
        }
        let (x, y) = placed.ok_or(SynthError::Placement {
            scene: index,
            instance: k,
            attempts: cfg.max_attempts,
        })?;
        slots.push((x, y, half));
        instances.push(TextInstance {
            text,
            center: Point::new(x, y),
            orientation,
            box_w,
            box_h,
        });
    }
    SceneDescriptor::new(cfg.canvas.0, cfg.canvas.1, instances)
        .map_err(|e| SynthError::Config(e.to_string()))
}

pub fn generate(cfg: &SynthConfig) -> Result<Vec<GeneratedScene>, SynthError> {
    cfg.validate()?;
    (0..cfg.scenes)
        .map(|i| {
            let seed = scene_seed(cfg.seed, i);
            Ok(GeneratedScene {
                name: format!("scene_{i:05}"),
                seed,
                scene: generate_scene(cfg, i, seed)?,
            })
        })
        .collect()
}

/// Ground-truth annotations for a generated scene: unanimous worker labels
/// and the instance rectangle as the crop polygon.
pub fn scene_annotations(name: &str, scene: &SceneDescriptor) -> Vec<CropAnnotation> {
    scene
        .instances
        .iter()
        .enumerate()
        .map(|(k, inst)| CropAnnotation {
            id: format!("{name}/{k}"),
            image: name.to_owned(),
            polygon: inst.quad().expect("generated instances are valid").to_flat().to_vec(),
            orientation: inst.orientation,
            workers: vec![inst.text.clone(); WORKERS_PER_CROP],
            consensus: Some(inst.text.clone()),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct InstanceRecord {
    text: String,
    center: [f64; 2],
    orientation: f64,
    #[serde(rename = "box")]
    box_size: [f64; 2],
}

/// On-disk scene: `{"canvas", "generator", "seed", "instances"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    canvas: [u32; 2],
    generator: String,
    seed: u64,
    instances: Vec<InstanceRecord>,
}

impl SceneFile {
    pub fn new(scene: &SceneDescriptor, generator: &str, seed: u64) -> Self {
        Self {
            canvas: [scene.width, scene.height],
            generator: generator.to_owned(),
            seed,
            instances: scene
                .instances
                .iter()
                .map(|i| InstanceRecord {
                    text: i.text.clone(),
                    center: [i.center.x, i.center.y],
                    orientation: i.orientation,
                    box_size: [i.box_w, i.box_h],
                })
                .collect(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn generator(&self) -> &str {
        &self.generator
    }

    pub fn to_scene(&self) -> Result<SceneDescriptor, String> {
        let instances = self
            .instances
            .iter()
            .map(|r| TextInstance {
                text: r.text.clone(),
                center: Point::new(r.center[0], r.center[1]),
                orientation: r.orientation,
                box_w: r.box_size[0],
                box_h: r.box_size[1],
            })
            .collect();
        SceneDescriptor::new(self.canvas[0], self.canvas[1], instances).map_err(|e| e.to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serialization cannot fail") + "\n"
    }
}

/// Loads a scene file as a virtual image named after the file stem.
pub fn load_scene(path: &Path) -> Result<ImageRef, SynthError> {
    let err = |message: String| SynthError::SceneFile {
        path: path.display().to_string(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|source| SynthError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: SceneFile = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
    let scene = file.to_scene().map_err(err)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(ImageRef::scene(id, scene))
}
