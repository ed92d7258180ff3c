//! Statement checking against a machine-to-machine checker service.
//!
//! A statement is valid when the checker elaborates preamble plus statement
//! into an initial proof state. Nothing is ever proved.

pub mod protocol;
mod stub;

use std::fmt;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use protocol::{Reply, PROTOCOL_VERSION};
pub use stub::{judge_statement, FaultConfig, StubChecker, StubConfig, MARKER_MESSAGES};

pub const DEFAULT_CHECK_TIMEOUT: Duration = Duration::from_secs(60);
const CONNECT_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckRequest {
    pub preamble: String,
    pub statement: String,
    pub timeout: Duration,
}

impl CheckRequest {
    pub fn new(preamble: impl Into<String>, statement: impl Into<String>, timeout: Duration) -> Self {
        Self {
            preamble: preamble.into(),
            statement: statement.into(),
            timeout,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Valid,
    Invalid,
    Timeout,
    SessionError,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckResult {
    pub verdict: Verdict,
    /// Empty exactly when the verdict is `Valid`.
    pub message: String,
    pub elapsed: Duration,
}

impl CheckResult {
    fn new(verdict: Verdict, message: impl Into<String>, started: Instant) -> Self {
        let mut message = message.into();
        if verdict == Verdict::Valid {
            message.clear();
        } else if message.is_empty() {
            message = format!("checker reported {verdict:?} without a message");
        }
        Self {
            verdict,
            message,
            elapsed: started.elapsed(),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.verdict == Verdict::Valid
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("cannot connect to checker at {addr}: {source}")]
    Connect {
        addr: String,
        #[source]
        source: io::Error,
    },
    #[error("checker speaks protocol version {server}, client speaks {client}")]
    VersionMismatch { client: u32, server: u32 },
    #[error("handshake failed: {0}")]
    Handshake(String),
    #[error("checker i/o failure: {0}")]
    Io(#[from] io::Error),
    #[error("malformed reply from checker: {0}")]
    Malformed(String),
    #[error("reply id {got:?} does not match request id {expected}")]
    IdMismatch { expected: u64, got: Option<u64> },
    #[error("checker closed the connection")]
    Closed,
}

/// Something that can judge one statement at a time.
pub trait StatementChecker: Send {
    fn check(&mut self, req: &CheckRequest) -> CheckResult;
}

/// Opens fresh checker sessions; the orchestrator keeps one per worker.
pub trait CheckerFactory: Sync {
    fn open(&self) -> Result<Box<dyn StatementChecker>, SessionError>;
}

struct Connection {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

/// Client session. One request is in flight at a time; after a timeout or a
/// broken exchange the connection is dropped and re-established lazily with
/// a fresh handshake before the next request.
pub struct CheckerSession {
    addr: String,
    conn: Option<Connection>,
    next_id: u64,
}

impl CheckerSession {
    pub fn connect(addr: &str) -> Result<Self, SessionError> {
        let mut s = Self {
            addr: addr.to_string(),
            conn: None,
            next_id: 1,
        };
        s.reconnect()?;
        Ok(s)
    }

    pub fn address(&self) -> &str {
        &self.addr
    }

    fn reconnect(&mut self) -> Result<(), SessionError> {
        self.conn = None;
        let connect_err = |source| SessionError::Connect {
            addr: self.addr.clone(),
            source,
        };
        let sock = self
            .addr
            .to_socket_addrs()
            .map_err(connect_err)?
            .next()
            .ok_or_else(|| connect_err(io::Error::new(io::ErrorKind::NotFound, "address did not resolve")))?;
        let stream = TcpStream::connect_timeout(&sock, CONNECT_TIMEOUT).map_err(connect_err)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(CONNECT_TIMEOUT))?;
        let mut conn = Connection {
            reader: BufReader::new(stream.try_clone()?),
            writer: stream,
        };
        conn.writer
            .write_all(protocol::hello_line(PROTOCOL_VERSION).as_bytes())?;
        let reply = read_reply(&mut conn.reader)?;
        if let Some(e) = reply.error {
            return Err(SessionError::Handshake(e.message));
        }
        let server = reply
            .result
            .as_ref()
            .and_then(|r| r.get("proto"))
            .and_then(|p| p.as_u64())
            .ok_or_else(|| SessionError::Handshake("reply carries no protocol version".into()))?;
        if server != u64::from(PROTOCOL_VERSION) {
            return Err(SessionError::VersionMismatch {
                client: PROTOCOL_VERSION,
                server: u32::try_from(server).unwrap_or(u32::MAX),
            });
        }
        self.conn = Some(conn);
        Ok(())
    }

    pub fn check_statement(&mut self, req: &CheckRequest) -> CheckResult {
        let started = Instant::now();
        if self.conn.is_none() {
            if let Err(e) = self.reconnect() {
                return CheckResult::new(Verdict::SessionError, e.to_string(), started);
            }
        }
        let id = self.next_id;
        self.next_id += 1;
        match self.exchange(id, req) {
            Ok(result) => CheckResult {
                elapsed: started.elapsed(),
                ..result
            },
            Err(e) => {
                self.conn = None;
                let timed_out = matches!(&e, SessionError::Io(io) if matches!(io.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut));
                if timed_out {
                    CheckResult::new(
                        Verdict::Timeout,
                        format!("no verdict within {} ms", req.timeout.as_millis()),
                        started,
                    )
                } else {
                    CheckResult::new(Verdict::SessionError, e.to_string(), started)
                }
            }
        }
    }

    fn exchange(&mut self, id: u64, req: &CheckRequest) -> Result<CheckResult, SessionError> {
        let started = Instant::now();
        let conn = self.conn.as_mut().ok_or(SessionError::Closed)?;
        conn.writer
            .set_read_timeout(Some(req.timeout.max(Duration::from_millis(1))))?;
        conn.writer
            .write_all(protocol::check_line(id, &req.preamble, &req.statement).as_bytes())?;
        let reply = read_reply(&mut conn.reader)?;
        if reply.id != Some(id) {
            return Err(SessionError::IdMismatch {
                expected: id,
                got: reply.id,
            });
        }
        match (reply.result, reply.error) {
            (_, Some(e)) => Ok(CheckResult::new(Verdict::Invalid, e.message, started)),
            (Some(r), None) => match r.get("valid").and_then(|v| v.as_bool()) {
                Some(true) => Ok(CheckResult::new(Verdict::Valid, "", started)),
                Some(false) => Ok(CheckResult::new(
                    Verdict::Invalid,
                    "checker rejected the statement",
                    started,
                )),
                None => Err(SessionError::Malformed(format!("unexpected result {r}"))),
            },
            (None, None) => Err(SessionError::Malformed("reply has neither result nor error".into())),
        }
    }
}

impl StatementChecker for CheckerSession {
    fn check(&mut self, req: &CheckRequest) -> CheckResult {
        self.check_statement(req)
    }
}

fn read_reply(reader: &mut BufReader<TcpStream>) -> Result<Reply, SessionError> {
    let mut line = String::new();
    let n = reader.read_line(&mut line)?;
    if n == 0 || !line.ends_with('\n') {
        return Err(SessionError::Closed);
    }
    serde_json::from_str(line.trim_end()).map_err(|e| SessionError::Malformed(format!("{e}: {:?}", line.trim_end())))
}

/// Connects a new TCP session per worker, retrying a refused connection
/// `connect_retries` times.
#[derive(Debug, Clone)]
pub struct TcpCheckerFactory {
    pub address: String,
    pub connect_retries: u32,
}

impl TcpCheckerFactory {
    pub fn new(address: impl Into<String>) -> Self {
        Self {
            address: address.into(),
            connect_retries: 1,
        }
    }
}

impl CheckerFactory for TcpCheckerFactory {
    fn open(&self) -> Result<Box<dyn StatementChecker>, SessionError> {
        let mut attempt = 0;
        loop {
            match CheckerSession::connect(&self.address) {
                Ok(s) => return Ok(Box::new(s)),
                Err(e @ SessionError::Connect { .. }) if attempt < self.connect_retries => {
                    tracing::warn!("checker connection failed, retrying: {e}");
                    attempt += 1;
                    std::thread::sleep(Duration::from_millis(200));
                }
                Err(e) => return Err(e),
            }
        }
    }
}
