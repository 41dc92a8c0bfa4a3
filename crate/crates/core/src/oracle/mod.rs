//! Generator and embedder oracles.
//!
//! The pipeline never touches images: it asks an [`Oracle`] to map `Z`
//! latents into `W`, synthesize observables from `W` latents, and embed
//! observables into unit-norm identity vectors. The built-in
//! [`ToyWorld`](crate::toy::ToyWorld) is one oracle; [`ExecOracle`] talks to
//! any external process speaking the line protocol in [`protocol`].

mod exec;
pub mod protocol;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use exec::ExecOracle;
pub use protocol::{serve, serve_line, OracleOp, OracleRequest, OracleResponse, VectorBatch};

use crate::toy::{ToyWorld, ToyWorldConfig, ToyWorldError};

/// Default per-request timeout for external oracles.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

/// Environment variable that supplies the default oracle command.
pub const ORACLE_ENV: &str = "LATENTFORGE_ORACLE";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleInfo {
    pub latent_dim: usize,
    pub observable_dim: usize,
    pub embedding_dim: usize,
    pub linear_synthesis: bool,
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("oracle process exited: {0}")]
    Crashed(String),
    #[error("oracle did not answer within {0:?}")]
    Timeout(Duration),
    #[error("oracle reported an error: {0}")]
    Remote(String),
    #[error("failed to start oracle `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid oracle spec `{0}` (expected `toy` or `exec:<command>`)")]
    BadSpec(String),
    #[error(transparent)]
    Toy(#[from] ToyWorldError),
}

/// Batched generator/embedder interface. Every call processes its inputs in
/// order and returns exactly one output per input.
pub trait Oracle {
    fn info(&mut self) -> Result<OracleInfo, OracleError>;
    fn map(&mut self, z: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, OracleError>;
    fn synthesize(&mut self, w: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, OracleError>;
    fn embed(&mut self, observables: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, OracleError>;

    /// `embed(synthesize(w))` for a batch of `W` latents.
    fn embed_latents(&mut self, w: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, OracleError> {
        let observables = self.synthesize(w)?;
        self.embed(&observables)
    }
}

impl<O: Oracle + ?Sized> Oracle for &mut O {
    fn info(&mut self) -> Result<OracleInfo, OracleError> {
        (**self).info()
    }
    fn map(&mut self, z: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, OracleError> {
        (**self).map(z)
    }
    fn synthesize(&mut self, w: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, OracleError> {
        (**self).synthesize(w)
    }
    fn embed(&mut self, observables: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, OracleError> {
        (**self).embed(observables)
    }
}

/// Where an oracle comes from: `toy` or `exec:<command line>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OracleSpec {
    Toy,
    Exec(String),
}

impl FromStr for OracleSpec {
    type Err = OracleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "toy" => Ok(OracleSpec::Toy),
            _ => match s.strip_prefix("exec:") {
                Some(cmd) if !cmd.trim().is_empty() => Ok(OracleSpec::Exec(cmd.to_string())),
                _ => Err(OracleError::BadSpec(s.to_string())),
            },
        }
    }
}

impl fmt::Display for OracleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleSpec::Toy => f.write_str("toy"),
            OracleSpec::Exec(cmd) => write!(f, "exec:{cmd}"),
        }
    }
}

/// A live oracle session of either kind.
pub enum OracleEndpoint {
    Toy(ToyWorld),
    External(ExecOracle),
}

impl OracleEndpoint {
    pub fn connect(spec: &OracleSpec, toy: &ToyWorldConfig, timeout: Duration) -> Result<Self, OracleError> {
        match spec {
            OracleSpec::Toy => Ok(OracleEndpoint::Toy(ToyWorld::new(toy.clone())?)),
            OracleSpec::Exec(cmd) => Ok(OracleEndpoint::External(ExecOracle::spawn(cmd, timeout)?)),
        }
    }

    /// Answers one wire request. External endpoints forward it verbatim
    /// (with their own session id); toy endpoints evaluate it in process.
    pub fn call(&mut self, request: &OracleRequest) -> Result<OracleResponse, OracleError> {
        match self {
            OracleEndpoint::Toy(world) => Ok(protocol::respond(world, request)),
            OracleEndpoint::External(exec) => exec.call(request.op, request.data.vectors.clone()),
        }
    }
}

impl Oracle for OracleEndpoint {
    fn info(&mut self) -> Result<OracleInfo, OracleError> {
        match self {
            OracleEndpoint::Toy(o) => o.info(),
            OracleEndpoint::External(o) => o.info(),
        }
    }
    fn map(&mut self, z: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, OracleError> {
        match self {
            OracleEndpoint::Toy(o) => o.map(z),
            OracleEndpoint::External(o) => o.map(z),
        }
    }
    fn synthesize(&mut self, w: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, OracleError> {
        match self {
            OracleEndpoint::Toy(o) => o.synthesize(w),
            OracleEndpoint::External(o) => o.synthesize(w),
        }
    }
    fn embed(&mut self, observables: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, OracleError> {
        match self {
            OracleEndpoint::Toy(o) => o.embed(observables),
            OracleEndpoint::External(o) => o.embed(observables),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_specs() {
        assert_eq!("toy".parse::<OracleSpec>().unwrap(), OracleSpec::Toy);
        assert_eq!("exec:python3 a.py --x".parse::<OracleSpec>().unwrap(), OracleSpec::Exec("python3 a.py --x".into()));
        assert!("exec:".parse::<OracleSpec>().is_err());
        assert!("gan".parse::<OracleSpec>().is_err());
        assert_eq!(OracleSpec::Exec("cat".into()).to_string(), "exec:cat");
    }

    #[test]
    fn toy_endpoint_info_matches_config() {
        let cfg = ToyWorldConfig { latent_dim: 16, ..ToyWorldConfig::default() };
        let mut ep = OracleEndpoint::connect(&OracleSpec::Toy, &cfg, DEFAULT_TIMEOUT).unwrap();
        let info = ep.info().unwrap();
        assert_eq!(info, OracleInfo { latent_dim: 16, observable_dim: 16, embedding_dim: 16, linear_synthesis: true });
    }
}
