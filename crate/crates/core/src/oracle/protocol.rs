//! Newline-delimited JSON protocol between the pipeline and an oracle process.
//!
//! ```text
//! -> {"id":1,"op":"embed","data":{"vectors":[[0.1,0.2]]}}
//! <- {"id":1,"ok":true,"data":{"vectors":[[0.447,0.894]]}}
//! <- {"id":1,"ok":false,"error":"zero vector"}
//! ```
//!
//! `info` answers with `{"latent_dim","observable_dim","embedding_dim","linear_synthesis"}`
//! as its `data`. Ids increase strictly within a session and at most one
//! request is in flight.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Oracle, OracleError, OracleInfo};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleOp {
    Info,
    Map,
    Synthesize,
    Embed,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VectorBatch {
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRequest {
    pub id: u64,
    pub op: OracleOp,
    #[serde(default)]
    pub data: VectorBatch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResponse {
    pub id: u64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl OracleResponse {
    pub fn success(id: u64, data: Value) -> Self {
        Self { id, ok: true, data: Some(data), error: None }
    }

    pub fn failure(id: u64, error: impl Into<String>) -> Self {
        Self { id, ok: false, data: None, error: Some(error.into()) }
    }

    /// Converts an `ok` response into its payload, or the remote error.
    pub fn into_result(self) -> Result<Value, OracleError> {
        if self.ok {
            self.data.ok_or_else(|| OracleError::Protocol("ok response without data".into()))
        } else {
            Err(OracleError::Remote(self.error.unwrap_or_else(|| "unspecified error".into())))
        }
    }

    pub fn info(self) -> Result<OracleInfo, OracleError> {
        serde_json::from_value(self.into_result()?).map_err(|e| OracleError::Protocol(format!("bad info payload: {e}")))
    }

    pub fn vectors(self) -> Result<Vec<Vec<f64>>, OracleError> {
        let batch: VectorBatch =
            serde_json::from_value(self.into_result()?).map_err(|e| OracleError::Protocol(format!("bad vector payload: {e}")))?;
        Ok(batch.vectors)
    }
}

fn vectors_value(vectors: Vec<Vec<f64>>) -> Value {
    serde_json::to_value(VectorBatch { vectors }).expect("vector batch serializes")
}

/// Evaluates one request against an in-process oracle.
pub fn respond<O: Oracle + ?Sized>(oracle: &mut O, request: &OracleRequest) -> OracleResponse {
    let id = request.id;
    let vectors = &request.data.vectors;
    let result = match request.op {
        OracleOp::Info => oracle.info().map(|info| serde_json::to_value(info).expect("info serializes")),
        OracleOp::Map => oracle.map(vectors).map(vectors_value),
        OracleOp::Synthesize => oracle.synthesize(vectors).map(vectors_value),
        OracleOp::Embed => oracle.embed(vectors).map(vectors_value),
    };
    match result {
        Ok(data) => OracleResponse::success(id, data),
        Err(e) => OracleResponse::failure(id, e.to_string()),
    }
}

/// Server-side session state: enforces strictly increasing ids.
#[derive(Debug, Default)]
pub struct ServerSession {
    last_id: Option<u64>,
}

impl ServerSession {
    /// Parses one request line and produces the response line (no trailing newline).
    pub fn handle<O: Oracle + ?Sized>(&mut self, oracle: &mut O, line: &str) -> String {
        let response = match serde_json::from_str::<OracleRequest>(line) {
            Ok(request) if self.last_id.is_some_and(|last| request.id <= last) => {
                OracleResponse::failure(request.id, format!("request id {} is not increasing", request.id))
            }
            Ok(request) => {
                self.last_id = Some(request.id);
                respond(oracle, &request)
            }
            Err(e) => {
                let id = serde_json::from_str::<Value>(line).ok().and_then(|v| v.get("id").and_then(Value::as_u64)).unwrap_or(0);
                OracleResponse::failure(id, format!("malformed request: {e}"))
            }
        };
        serde_json::to_string(&response).expect("response serializes")
    }
}

/// Stateless single-line variant of [`ServerSession::handle`].
pub fn serve_line<O: Oracle + ?Sized>(oracle: &mut O, line: &str) -> String {
    ServerSession::default().handle(oracle, line)
}

/// Answers requests from `input` until end of input. Blank lines are ignored.
pub fn serve<O: Oracle + ?Sized, R: BufRead, W: Write>(oracle: &mut O, input: R, mut output: W) -> io::Result<()> {
    let mut session = ServerSession::default();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = session.handle(oracle, &line);
        output.write_all(response.as_bytes())?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}
