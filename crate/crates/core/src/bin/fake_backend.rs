//! Protocol test double: answers backend requests with canned detections.
//!
//! Non-black images get the fixture detections from
//! `tests/fixtures/golden_response.jsonl`; all-black images get none.
//!
//! Flags: `--sleep-ms N` delays every answer, `--exit-after N` exits with
//! status 3 after N answers, `--wrong-id` echoes a different id.

use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Duration;

use rotmerge_core::backend::wire::{format_error, format_response, parse_response, Request};
use rotmerge_core::imaging::load_image;

const GOLDEN: &str = include_str!("../../tests/fixtures/golden_response.jsonl");

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let flag = |name: &str| {
        args.iter()
            .position(|a| a == name)
            .and_then(|i| args.get(i + 1))
            .and_then(|v| v.parse::<u64>().ok())
    };
    let sleep = flag("--sleep-ms").map(Duration::from_millis);
    let exit_after = flag("--exit-after");
    let wrong_id = args.iter().any(|a| a == "--wrong-id");

    let canned = parse_response(GOLDEN.lines().next().unwrap_or_default())
        .ok()
        .and_then(|r| r.outcome.ok())
        .unwrap_or_default();

    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout().lock();
    for (served, line) in (0u64..).zip(stdin.lock().lines()) {
        let Ok(line) = line else { break };
        if exit_after == Some(served) {
            eprintln!("fake-backend: exiting after {served} requests");
            std::process::exit(3);
        }
        if let Some(d) = sleep {
            std::thread::sleep(d);
        }
        let reply = match serde_json::from_str::<Request>(&line) {
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|i| i.as_str()).map(str::to_owned))
                    .unwrap_or_else(|| "?".into());
                format_error(&id, &format!("malformed request: {e}"))
            }
            Ok(req) => {
                let id = if wrong_id { format!("{}-x", req.id) } else { req.id.clone() };
                match load_image(Path::new(&req.image_path)) {
                    Err(e) => format_error(&id, &e.to_string()),
                    Ok(img) => {
                        let blank = img.as_raster().is_some_and(|r| r.pixels().iter().all(|&p| p == 0));
                        if blank {
                            format_response(&id, &[])
                        } else {
                            format_response(&id, &canned)
                        }
                    }
                }
            }
        };
        if writeln!(stdout, "{reply}").and_then(|_| stdout.flush()).is_err() {
            break;
        }
    }
}
