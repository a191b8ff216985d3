use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use crate::imaging::{save_image, ImageRef};

use super::wire::{format_request, parse_response, Request};
use super::{BackendError, Detection};

/// A long-lived child process and the channel its stdout lines arrive on.
struct Worker {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
}

impl Worker {
    fn spawn(command: &[String]) -> Result<Self, BackendError> {
        let mut child = Command::new(&command[0])
            .args(&command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines: rx,
        })
    }

    fn exit_status(&mut self) -> String {
        // the reader saw EOF, so the child is exiting or already gone
        for _ in 0..50 {
            if let Ok(Some(status)) = self.child.try_wait() {
                return status.to_string();
            }
            thread::sleep(Duration::from_millis(10));
        }
        "closed its output".into()
    }

    fn round_trip(&mut self, request: &str, timeout: Duration) -> Result<String, BackendError> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| BackendError::Exited("stdin closed".into()))?;
        let sent = stdin
            .write_all(request.as_bytes())
            .and_then(|_| stdin.write_all(b"\n"))
            .and_then(|_| stdin.flush());
        if sent.is_err() {
            let status = self.exit_status();
            return Err(BackendError::Exited(status));
        }
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(BackendError::Io(e)),
            Err(RecvTimeoutError::Timeout) => Err(BackendError::Timeout(timeout.as_secs_f64())),
            Err(RecvTimeoutError::Disconnected) => Err(BackendError::Exited(self.exit_status())),
        }
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        drop(self.stdin.take());
        for _ in 0..100 {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(10));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Client for an external engine speaking the line protocol in
/// [`super::wire`].
///
/// Holds up to `pool_size` child processes, spawned on first use. Each
/// child serves one request at a time. A child that times out or fails is
/// discarded and respawned on the next request.
pub struct SubprocessBackend {
    command: Vec<String>,
    timeout: Duration,
    workers: Vec<Mutex<Option<Worker>>>,
    next_slot: AtomicUsize,
    next_id: AtomicU64,
    scratch: tempfile::TempDir,
}

impl SubprocessBackend {
    pub fn new(command: Vec<String>, timeout_secs: f64, pool_size: usize) -> Result<Self, BackendError> {
        if command.is_empty() || command[0].is_empty() {
            return Err(BackendError::Config("empty backend command".into()));
        }
        if !(timeout_secs > 0.0 && timeout_secs.is_finite()) {
            return Err(BackendError::Config(format!("timeout {timeout_secs} must be positive")));
        }
        Ok(Self {
            command,
            timeout: Duration::from_secs_f64(timeout_secs),
            workers: (0..pool_size.max(1)).map(|_| Mutex::new(None)).collect(),
            next_slot: AtomicUsize::new(0),
            next_id: AtomicU64::new(0),
            scratch: tempfile::tempdir()?,
        })
    }

    fn acquire(&self) -> std::sync::MutexGuard<'_, Option<Worker>> {
        for slot in &self.workers {
            if let Ok(guard) = slot.try_lock() {
                return guard;
            }
        }
        let i = self.next_slot.fetch_add(1, Ordering::Relaxed) % self.workers.len();
        self.workers[i].lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn detect(&self, img: &ImageRef) -> Result<Vec<Detection>, BackendError> {
        if img.as_raster().is_none() {
            return Err(BackendError::UnsupportedImage(
                "subprocess backends need raster images".into(),
            ));
        }
        let seq = self.next_id.fetch_add(1, Ordering::Relaxed);
        let id = format!("{}#{seq}", img.id);
        let path = self.scratch.path().join(format!("req-{seq}.png"));
        save_image(img, &path)?;
        let request = format_request(&Request {
            id: id.clone(),
            image_path: path.display().to_string(),
        });

        let result = {
            let mut slot = self.acquire();
            if slot.is_none() {
                *slot = Some(Worker::spawn(&self.command)?);
            }
            let worker = slot.as_mut().expect("worker spawned above");
            let res = worker.round_trip(&request, self.timeout);
            if res.is_err() {
                *slot = None;
            }
            res
        };
        let _ = std::fs::remove_file(&path);

        let resp = parse_response(&result?)?;
        if resp.id != id {
            return Err(BackendError::Parse {
                offset: 0,
                message: format!("response id {:?} does not match request id {id:?}", resp.id),
            });
        }
        resp.outcome.map_err(|message| BackendError::Remote { id, message })
    }
}
