use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use super::protocol::{OracleOp, OracleRequest, OracleResponse, VectorBatch};
use super::{Oracle, OracleError, OracleInfo};

/// Oracle session backed by a child process (`sh -c <command>`) speaking the
/// line protocol over its standard input/output.
///
/// A session that timed out or saw a protocol violation is poisoned: every
/// later call fails, since the stream can no longer be trusted to be aligned.
pub struct ExecOracle {
    command: String,
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
    timeout: Duration,
    info: Option<OracleInfo>,
    poisoned: Option<String>,
}

impl ExecOracle {
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self, OracleError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| OracleError::Spawn { command: command.to_string(), source })?;
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
        Ok(Self { command: command.to_string(), child, stdin, lines: rx, next_id: 1, timeout, info: None, poisoned: None })
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    fn crashed(&mut self, context: &str) -> OracleError {
        let status = match self.child.try_wait() {
            Ok(Some(status)) => status.to_string(),
            _ => "still running".to_string(),
        };
        let msg = format!("{context} ({status})");
        self.poisoned = Some(msg.clone());
        OracleError::Crashed(msg)
    }

    fn poison(&mut self, err: OracleError) -> OracleError {
        self.poisoned = Some(err.to_string());
        err
    }

    /// Sends one request and waits for its response.
    pub fn call(&mut self, op: OracleOp, vectors: Vec<Vec<f64>>) -> Result<OracleResponse, OracleError> {
        if let Some(reason) = &self.poisoned {
            return Err(OracleError::Crashed(format!("session unusable: {reason}")));
        }
        let id = self.next_id;
        self.next_id += 1;
        let request = OracleRequest { id, op, data: VectorBatch { vectors } };
        let mut line = serde_json::to_string(&request).expect("request serializes");
        line.push('\n');

        let written = match self.stdin.as_mut() {
            Some(stdin) => stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()),
            None => Err(std::io::Error::other("stdin closed")),
        };
        if written.is_err() {
            return Err(self.crashed("could not write request"));
        }

        let reply = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(_)) | Err(RecvTimeoutError::Disconnected) => return Err(self.crashed("output closed before a response")),
            Err(RecvTimeoutError::Timeout) => {
                let _ = self.child.kill();
                return Err(self.poison(OracleError::Timeout(self.timeout)));
            }
        };
        let response: OracleResponse = serde_json::from_str(&reply)
            .map_err(|e| OracleError::Protocol(format!("malformed response: {e}")))
            .map_err(|e| self.poison(e))?;
        if response.id != id {
            return Err(self.poison(OracleError::Protocol(format!("response id {} does not match request id {id}", response.id))));
        }
        Ok(response)
    }

    fn vectors(&mut self, op: OracleOp, input: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, OracleError> {
        let out = self.call(op, input.to_vec())?.vectors()?;
        if out.len() != input.len() {
            return Err(OracleError::Protocol(format!("sent {} vectors, received {}", input.len(), out.len())));
        }
        if out.iter().flatten().any(|v| !v.is_finite()) {
            return Err(OracleError::Protocol("response contains non-finite values".into()));
        }
        Ok(out)
    }
}

impl Oracle for ExecOracle {
    fn info(&mut self) -> Result<OracleInfo, OracleError> {
        if let Some(info) = self.info {
            return Ok(info);
        }
        let info = self.call(OracleOp::Info, Vec::new())?.info()?;
        self.info = Some(info);
        Ok(info)
    }

    fn map(&mut self, z: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, OracleError> {
        self.vectors(OracleOp::Map, z)
    }

    fn synthesize(&mut self, w: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, OracleError> {
        self.vectors(OracleOp::Synthesize, w)
    }

    fn embed(&mut self, observables: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, OracleError> {
        self.vectors(OracleOp::Embed, observables)
    }
}

impl Drop for ExecOracle {
    fn drop(&mut self) {
        drop(self.stdin.take());
        if !matches!(self.child.try_wait(), Ok(Some(_))) {
            let _ = self.child.kill();
        }
        let _ = self.child.wait();
    }
}
