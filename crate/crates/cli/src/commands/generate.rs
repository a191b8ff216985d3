use rotmerge_core::dataset::{write_annotations, write_atomic};
use rotmerge_core::synth::{generate, scene_annotations, SceneFile, SynthConfig, SynthError, GENERATOR};

use crate::{Failure, GenerateArgs};

fn parse_canvas(s: &str) -> Option<(u32, u32)> {
    let (w, h) = s.split_once(['x', 'X'])?;
    Some((w.trim().parse().ok()?, h.trim().parse().ok()?))
}

pub fn execute(args: GenerateArgs) -> Result<(), Failure> {
    let canvas = parse_canvas(&args.canvas)
        .ok_or_else(|| Failure::config(format!("canvas {:?} is not WIDTHxHEIGHT", args.canvas)))?;
    let mut cfg = SynthConfig {
        seed: args.seed,
        scenes: args.scenes,
        instances_per_scene: args.instances,
        p_horizontal: args.p_horizontal,
        band: args.band,
        canvas,
        ..SynthConfig::default()
    };
    if let Some(path) = &args.words {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
        cfg.words = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_owned).collect();
    }
    let scenes = generate(&cfg).map_err(|e| match e {
        SynthError::Placement { .. } => Failure::runtime(e),
        other => Failure::config(other),
    })?;

    std::fs::create_dir_all(&args.out).map_err(|e| Failure::runtime(format!("{}: {e}", args.out.display())))?;
    let mut anns = Vec::new();
    for s in &scenes {
        let file = SceneFile::new(&s.scene, GENERATOR, s.seed);
        write_atomic(&args.out.join(format!("{}.json", s.name)), file.to_json().as_bytes()).map_err(Failure::runtime)?;
        anns.extend(scene_annotations(&s.name, &s.scene));
    }
    write_annotations(&args.out.join("annotations.jsonl"), &anns).map_err(Failure::runtime)?;
    println!("{} scenes, {} instances -> {}", scenes.len(), anns.len(), args.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canvas_parsing() {
        assert_eq!(parse_canvas("1920x1080"), Some((1920, 1080)));
        assert_eq!(parse_canvas("64X32"), Some((64, 32)));
        assert_eq!(parse_canvas("1920"), None);
        assert_eq!(parse_canvas("ax2"), None);
    }
}
