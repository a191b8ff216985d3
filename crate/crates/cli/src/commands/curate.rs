use rotmerge_core::dataset::{compute_stats, read_annotations, write_annotations, write_atomic, DatasetError};

use crate::{ConsensusArgs, Failure, StatsArgs};

fn load_failure(e: DatasetError) -> Failure {
    match e {
        DatasetError::Io { .. } => Failure::runtime(e),
        other => Failure::config(other),
    }
}

pub fn consensus(args: ConsensusArgs) -> Result<(), Failure> {
    let mut anns = read_annotations(&args.annotations).map_err(load_failure)?;
    let mut unresolved = Vec::new();
    for a in &mut anns {
        if !a.apply_majority().map_err(Failure::config)? {
            unresolved.push(a.id.clone());
        }
    }
    let out = args.out.as_deref().unwrap_or(&args.annotations);
    write_annotations(out, &anns).map_err(Failure::runtime)?;
    if unresolved.is_empty() {
        println!("{} crops, all resolved", anns.len());
        return Ok(());
    }
    for id in &unresolved {
        println!("unresolved\t{id}");
    }
    Err(Failure::unresolved(format!(
        "{} of {} crops need manual resolution",
        unresolved.len(),
        anns.len()
    )))
}

pub fn stats(args: StatsArgs) -> Result<(), Failure> {
    let anns = read_annotations(&args.annotations).map_err(load_failure)?;
    let stats = compute_stats(&anns).map_err(|e| match e {
        DatasetError::Unresolved(ref ids) => {
            for id in ids {
                println!("unresolved\t{id}");
            }
            Failure::unresolved(e)
        }
        other => Failure::config(other),
    })?;
    print!("{}", stats.to_text());
    if let Some(path) = &args.csv {
        write_atomic(path, stats.to_csv().as_bytes()).map_err(Failure::runtime)?;
    }
    Ok(())
}
