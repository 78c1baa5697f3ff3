//! Judges answer pairwise queries: simulated Bernoulli judges for desk-scale
//! studies and an external process speaking newline-delimited JSON.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instances::{PairIndex, PreferenceInstance};
use crate::rng::RngState;

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("failed to spawn judge {command:?}: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("judge I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("judge did not answer query {seq} within {timeout:?}")]
    Timeout { seq: u64, timeout: Duration },
    #[error("judge exited before answering query {seq}")]
    Exited { seq: u64 },
    #[error("malformed judge response {line:?}: {reason}")]
    Malformed { line: String, reason: String },
    #[error("judge answered seq {got} while seq {expected} was pending")]
    SeqMismatch { expected: u64, got: u64 },
    #[error("judge was asked about non-canonical pair ({i}, {j})")]
    BadPair { i: usize, j: usize },
}

/// Answers duels between two policies. `true` means the lower-index policy
/// of the canonical pair won.
pub trait Judge {
    fn compare(&mut self, pair: PairIndex) -> Result<bool, JudgeError>;
}

impl<J: Judge + ?Sized> Judge for &mut J {
    fn compare(&mut self, pair: PairIndex) -> Result<bool, JudgeError> {
        (**self).compare(pair)
    }
}

impl<J: Judge + ?Sized> Judge for Box<J> {
    fn compare(&mut self, pair: PairIndex) -> Result<bool, JudgeError> {
        (**self).compare(pair)
    }
}

/// Bernoulli judge: pair `(i, j)` returns 1 with probability `mu(i, j)`.
/// Bradley-Terry judges are built from `StructuredModel::to_preferences`.
#[derive(Debug, Clone)]
pub struct SimulatedJudge {
    k: usize,
    upper: Vec<f64>,
    rng: RngState,
}

impl SimulatedJudge {
    pub fn new(mu: &PreferenceInstance, rng: RngState) -> Self {
        Self {
            k: mu.k(),
            upper: mu.upper(),
            rng,
        }
    }
}

impl Judge for SimulatedJudge {
    fn compare(&mut self, pair: PairIndex) -> Result<bool, JudgeError> {
        if pair.i >= pair.j || pair.j >= self.k {
            return Err(JudgeError::BadPair { i: pair.i, j: pair.j });
        }
        Ok(self.rng.bernoulli(self.upper[pair.id(self.k)]))
    }
}

#[derive(Serialize)]
struct CompareRequest {
    #[serde(rename = "type")]
    kind: &'static str,
    i: usize,
    j: usize,
    seq: u64,
}

#[derive(Deserialize)]
struct CompareResponse {
    seq: u64,
    winner: u8,
}

/// Child process judge.
///
/// Requests `{"type":"compare","i":..,"j":..,"seq":..}` go to the child's
/// stdin, one per line; the child answers `{"seq":..,"winner":0|1}` on
/// stdout, where `winner = 1` means policy `i` won. Sequence numbers start
/// at 0 and must be echoed in order.
pub struct ExternalJudge {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    seq: u64,
    timeout: Duration,
}

impl ExternalJudge {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

    /// Spawns `program` with `args`.
    pub fn spawn(program: &str, args: &[String], timeout: Duration) -> Result<Self, JudgeError> {
        let spawn_err = |source| JudgeError::Spawn {
            command: std::iter::once(program.to_string())
                .chain(args.iter().cloned())
                .collect::<Vec<_>>()
                .join(" "),
            source,
        };
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(spawn_err)?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let failed = line.is_err();
                if tx.send(line).is_err() || failed {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines: rx,
            seq: 0,
            timeout,
        })
    }

    /// Spawns a shell command line via `sh -c`.
    pub fn spawn_shell(command: &str, timeout: Duration) -> Result<Self, JudgeError> {
        Self::spawn("sh", &["-c".to_string(), command.to_string()], timeout)
    }

    /// Number of queries answered so far.
    pub fn answered(&self) -> u64 {
        self.seq
    }
}

impl Judge for ExternalJudge {
    fn compare(&mut self, pair: PairIndex) -> Result<bool, JudgeError> {
        if pair.i >= pair.j {
            return Err(JudgeError::BadPair { i: pair.i, j: pair.j });
        }
        let seq = self.seq;
        let request = CompareRequest {
            kind: "compare",
            i: pair.i,
            j: pair.j,
            seq,
        };
        let mut line = serde_json::to_string(&request).expect("request serializes");
        line.push('\n');
        if self.stdin.write_all(line.as_bytes()).and_then(|_| self.stdin.flush()).is_err() {
            return Err(JudgeError::Exited { seq });
        }
        let reply = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => return Err(JudgeError::Io(e)),
            Err(RecvTimeoutError::Timeout) => {
                return Err(JudgeError::Timeout {
                    seq,
                    timeout: self.timeout,
                })
            }
            Err(RecvTimeoutError::Disconnected) => return Err(JudgeError::Exited { seq }),
        };
        let response: CompareResponse = serde_json::from_str(reply.trim()).map_err(|e| JudgeError::Malformed {
            line: reply.clone(),
            reason: e.to_string(),
        })?;
        if response.seq != seq {
            return Err(JudgeError::SeqMismatch {
                expected: seq,
                got: response.seq,
            });
        }
        let won = match response.winner {
            0 => false,
            1 => true,
            other => {
                return Err(JudgeError::Malformed {
                    line: reply,
                    reason: format!("winner must be 0 or 1, got {other}"),
                })
            }
        };
        self.seq += 1;
        Ok(won)
    }
}

impl Drop for ExternalJudge {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
