use std::path::{Path, PathBuf};

use rotmerge_core::backend::{BackendConfig, DEFAULT_MOCK_TOLERANCE, DEFAULT_TIMEOUT_SECS};
use rotmerge_core::dataset::write_atomic;
use rotmerge_core::imaging::{load_image, ImageRef};
use rotmerge_core::pipeline::{Pipeline, PipelineConfig, PipelineError, DEFAULT_NMS_IOU, DEFAULT_ROTATION_STEP};
use rotmerge_core::synth::{load_scene, SynthError};

use crate::records::{DetectionRecord, ImageDetections, InputKind, InputRecord, Manifest, RunConfig, TimingRecord};
use crate::{Failure, RunArgs};

pub const DETECTIONS_FILE: &str = "detections.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "timings.json";

fn parse_backend(spec: &str, tolerance: f64, corrupt: bool, timeout: f64) -> Result<BackendConfig, Failure> {
    if spec == "mock" {
        return Ok(BackendConfig::Mock { tolerance, corrupt });
    }
    if let Some(cmd) = spec.strip_prefix("cmd:") {
        let command: Vec<String> = cmd.split_whitespace().map(str::to_owned).collect();
        if command.is_empty() {
            return Err(Failure::config("`cmd:` backend needs a program"));
        }
        return Ok(BackendConfig::Subprocess {
            command,
            timeout_secs: timeout,
        });
    }
    Err(Failure::config(format!("unknown backend {spec:?}; use `mock` or `cmd:<program>`")))
}

fn collect_inputs(args: &RunArgs) -> Result<Vec<InputRecord>, Failure> {
    let mut inputs = Vec::new();
    let mut scenes: Vec<PathBuf> = args.scenes.clone();
    if let Some(dir) = &args.scenes_dir {
        let mut found: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Failure::runtime(format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        found.sort();
        scenes.extend(found);
    }
    let stem = |p: &Path| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    for p in scenes {
        inputs.push(InputRecord {
            id: stem(&p),
            kind: InputKind::Scene,
            path: p.display().to_string(),
        });
    }
    for p in &args.images {
        inputs.push(InputRecord {
            id: stem(p),
            kind: InputKind::Image,
            path: p.display().to_string(),
        });
    }
    Ok(inputs)
}

fn load_input(input: &InputRecord) -> Result<ImageRef, Failure> {
    let path = Path::new(&input.path);
    let mut img = match input.kind {
        InputKind::Scene => load_scene(path).map_err(|e| match e {
            SynthError::Io { .. } => Failure::runtime(e),
            other => Failure::config(other),
        })?,
        InputKind::Image => load_image(path).map_err(Failure::runtime)?,
    };
    img.id = input.id.clone();
    Ok(img)
}

fn pipeline_failure(e: PipelineError) -> Failure {
    match e {
        PipelineError::Config(_) => Failure::config(e),
        other => Failure::runtime(other),
    }
}

fn remove_outputs(out: &Path) {
    for f in [DETECTIONS_FILE, MANIFEST_FILE, TIMINGS_FILE] {
        let _ = std::fs::remove_file(out.join(f));
    }
}

pub fn execute(args: RunArgs) -> Result<(), Failure> {
    let (config, inputs) = match &args.from_manifest {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
            let m: Manifest = serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
            (m.config, m.inputs)
        }
        None => {
            let backend = parse_backend(
                args.backend.as_deref().unwrap_or("mock"),
                args.mock_tolerance.unwrap_or(DEFAULT_MOCK_TOLERANCE),
                args.mock_corrupt,
                args.timeout.unwrap_or(DEFAULT_TIMEOUT_SECS),
            )?;
            let config = RunConfig {
                rotation_step: args.rotation_step.unwrap_or(DEFAULT_ROTATION_STEP),
                nms_iou: args.nms_iou.unwrap_or(DEFAULT_NMS_IOU),
                backend,
            };
            (config, collect_inputs(&args)?)
        }
    };
    if inputs.is_empty() {
        return Err(Failure::config("no inputs; pass --scene, --scenes-dir or --image"));
    }
    let is_mock = matches!(config.backend, BackendConfig::Mock { .. });
    if is_mock && inputs.iter().any(|i| i.kind == InputKind::Image) {
        return Err(Failure::config("the mock backend reads scenes only; use a cmd: backend for images"));
    }
    let pipeline = Pipeline::new(PipelineConfig {
        rotation_step: config.rotation_step,
        nms_iou: config.nms_iou,
        backend: config.backend.clone(),
        jobs: args.jobs.unwrap_or(0),
    })
    .map_err(pipeline_failure)?;

    std::fs::create_dir_all(&args.out).map_err(|e| Failure::runtime(format!("{}: {e}", args.out.display())))?;
    let result = run_all(&pipeline, &config, &inputs, &args.out);
    if result.is_err() {
        remove_outputs(&args.out);
    }
    result
}

fn run_all(pipeline: &Pipeline, config: &RunConfig, inputs: &[InputRecord], out: &Path) -> Result<(), Failure> {
    let mut per_image = Vec::with_capacity(inputs.len());
    let mut timings = Vec::new();
    for input in inputs {
        let img = load_input(input)?;
        let (dets, t) = pipeline
            .run_timed(&img)
            .map_err(|e| Failure::runtime(format!("{}: {e}", input.id)))?;
        timings.extend(t.into_iter().map(|t| TimingRecord {
            image: input.id.clone(),
            angle: t.angle,
            millis: t.elapsed.as_secs_f64() * 1e3,
            detections: t.detections,
        }));
        per_image.push(ImageDetections {
            image: input.id.clone(),
            detections: dets.iter().map(|c| DetectionRecord::new(&input.id, c)).collect(),
        });
    }

    let mut jsonl = Vec::new();
    for rec in per_image.iter().flat_map(|i| &i.detections) {
        serde_json::to_writer(&mut jsonl, rec).expect("record serialization cannot fail");
        jsonl.push(b'\n');
    }
    let total: usize = per_image.iter().map(|i| i.detections.len()).sum();
    let manifest = Manifest {
        tool: "rotmerge".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        inputs: inputs.to_vec(),
        detections: per_image,
        timings_file: TIMINGS_FILE.into(),
    };
    let manifest_json = serde_json::to_string_pretty(&manifest).expect("manifest serialization cannot fail") + "\n";
    let timings_json = serde_json::to_string_pretty(&timings).expect("timing serialization cannot fail") + "\n";

    write_atomic(&out.join(DETECTIONS_FILE), &jsonl).map_err(Failure::runtime)?;
    write_atomic(&out.join(TIMINGS_FILE), timings_json.as_bytes()).map_err(Failure::runtime)?;
    write_atomic(&out.join(MANIFEST_FILE), manifest_json.as_bytes()).map_err(Failure::runtime)?;
    println!(
        "{} detections from {} inputs over {} rotations -> {}",
        total,
        inputs.len(),
        pipeline.rotations().len(),
        out.display()
    );
    Ok(())
}
