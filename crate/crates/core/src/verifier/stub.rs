//! Protocol-compatible stand-in for the real checker, used by tests and demos.
//!
//! Grammar: `Theorem|Lemma <ident> : <body>.` where the body has balanced
//! `()[]{}` and the final period is outside any string literal. The preamble
//! is accepted as is. Marker tokens in the body force specific error
//! messages or transport faults.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::protocol::{self, ErrorBody, Reply, Request, RequestBody, PROTOCOL_VERSION};

/// Body markers and the checker message each one produces.
pub const MARKER_MESSAGES: [(&str, &str); 6] = [
    (
        "__COMPLEX__",
        "The reference Cplx was not found in the current environment.",
    ),
    (
        "__BIGSUM__",
        "Unknown interpretation for notation \"\\sum_ ( _ <= _ < _ ) _\".",
    ),
    (
        "__PRIME__",
        "The reference prime was not found in the current environment.",
    ),
    (
        "__FLOOR__",
        "The reference floor was not found in the current environment.",
    ),
    (
        "__TYPEMISMATCH__",
        "The term x has type R while it is expected to have type nat",
    ),
    ("__UNKNOWN__", "Syntax error: illegal begin of vernac."),
];

/// Transport faults. Marker-driven faults fire when the statement contains
/// `__DISCONNECT__`, `__BADID__`, `__MALFORMED__` or `__SLOW__`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaultConfig {
    pub markers: bool,
    /// Drop the connection instead of answering every n-th check request.
    pub disconnect_every: Option<u64>,
    /// Extra delay applied to statements carrying `__SLOW__`.
    pub slow_marker_delay: Duration,
}

impl Default for FaultConfig {
    fn default() -> Self {
        Self {
            markers: true,
            disconnect_every: None,
            slow_marker_delay: Duration::from_millis(500),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StubConfig {
    /// Delay before every check reply.
    pub delay: Duration,
    /// Version announced in the handshake reply.
    pub proto_version: u32,
    pub faults: FaultConfig,
}

impl Default for StubConfig {
    fn default() -> Self {
        Self {
            delay: Duration::ZERO,
            proto_version: PROTOCOL_VERSION,
            faults: FaultConfig::default(),
        }
    }
}

/// Verdict of the stub grammar: `Ok(())` for valid, otherwise the error message.
pub fn judge_statement(statement: &str) -> Result<(), String> {
    let s = statement.trim();
    if s.is_empty() {
        return Err("empty statement".into());
    }
    let rest = ["Theorem", "Lemma"]
        .iter()
        .find_map(|kw| {
            s.strip_prefix(kw)
                .filter(|r| r.starts_with(|c: char| c.is_whitespace()))
        })
        .ok_or("Syntax error: expected Theorem or Lemma")?
        .trim_start();
    let ident_len = rest
        .char_indices()
        .find(|&(i, c)| !(c.is_alphabetic() || c == '_' || (i > 0 && (c.is_ascii_digit() || c == '\''))))
        .map_or(rest.len(), |(i, _)| i);
    if ident_len == 0 {
        return Err("Syntax error: missing theorem name".into());
    }
    let body = rest[ident_len..]
        .trim_start()
        .strip_prefix(':')
        .ok_or("Syntax error: expected ':' after the theorem name")?;

    // Walk the body once, tracking strings and delimiter depth.
    let mut stack = Vec::new();
    let mut in_string = false;
    let mut final_period = None;
    let mut unbalanced = false;
    let mut early_end = false;
    let chars: Vec<(usize, char)> = body.char_indices().collect();
    for (k, &(i, c)) in chars.iter().enumerate() {
        if in_string {
            if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '(' | '[' | '{' => stack.push(c),
            ')' | ']' | '}' => {
                let want = match c {
                    ')' => '(',
                    ']' => '[',
                    _ => '{',
                };
                if stack.pop() != Some(want) {
                    unbalanced = true;
                }
            }
            '.' => {
                let next = chars.get(k + 1).map(|&(_, n)| n);
                match next {
                    None => final_period = Some(i),
                    Some(n) if n.is_whitespace() => {
                        if body[i + 1..].trim().is_empty() {
                            final_period = Some(i);
                        } else if stack.is_empty() {
                            early_end = true;
                        }
                    }
                    _ => {}
                }
            }
            _ => {}
        }
        if final_period.is_some() {
            break;
        }
    }
    let Some(end) = final_period else {
        return Err("missing terminating period".into());
    };
    if unbalanced || !stack.is_empty() {
        return Err("unbalanced delimiter".into());
    }
    if early_end {
        return Err("Syntax error: unexpected text after the end of the statement".into());
    }
    let main = body[..end].trim();
    if main.is_empty() {
        return Err("Syntax error: empty statement body".into());
    }
    for (marker, message) in MARKER_MESSAGES {
        if main.contains(marker) {
            return Err(message.into());
        }
    }
    Ok(())
}

/// A running stub checker bound to a local address.
pub struct StubChecker {
    addr: SocketAddr,
    served: Arc<AtomicU64>,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
    connections: Arc<Mutex<Vec<TcpStream>>>,
}

impl StubChecker {
    pub fn spawn(listen: &str, config: StubConfig) -> io::Result<Self> {
        let listener = TcpListener::bind(listen)?;
        let addr = listener.local_addr()?;
        let served = Arc::new(AtomicU64::new(0));
        let stop = Arc::new(AtomicBool::new(false));
        let connections = Arc::new(Mutex::new(Vec::new()));
        let accept = {
            let served = Arc::clone(&served);
            let stop = Arc::clone(&stop);
            let connections = Arc::clone(&connections);
            let config = Arc::new(config);
            thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    if let Ok(clone) = stream.try_clone() {
                        connections.lock().unwrap_or_else(|e| e.into_inner()).push(clone);
                    }
                    let served = Arc::clone(&served);
                    let config = Arc::clone(&config);
                    thread::spawn(move || {
                        let _ = serve_connection(stream, &config, &served);
                    });
                }
            })
        };
        Ok(Self {
            addr,
            served,
            stop,
            accept: Some(accept),
            connections,
        })
    }

    pub fn address(&self) -> String {
        self.addr.to_string()
    }

    /// Check requests received so far (handshakes excluded).
    pub fn requests_served(&self) -> u64 {
        self.served.load(Ordering::SeqCst)
    }

    /// Blocks the calling thread for as long as the stub runs.
    pub fn join(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    pub fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        for c in self.connections.lock().unwrap_or_else(|e| e.into_inner()).drain(..) {
            let _ = c.shutdown(Shutdown::Both);
        }
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for StubChecker {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn serve_connection(stream: TcpStream, config: &StubConfig, served: &AtomicU64) -> io::Result<()> {
    let mut writer = stream.try_clone()?;
    let reader = BufReader::new(stream);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let request: Request = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(_) => {
                let id = serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|i| i.as_u64()));
                write_reply(&mut writer, id, Err("malformed request".into()))?;
                continue;
            }
        };
        match request.body {
            RequestBody::Hello(_) => {
                let reply = Reply {
                    id: None,
                    result: Some(serde_json::json!({ "proto": config.proto_version })),
                    error: None,
                };
                writer.write_all(protocol::line(&reply).as_bytes())?;
            }
            RequestBody::Check(params) => {
                let n = served.fetch_add(1, Ordering::SeqCst) + 1;
                let statement = &params.statement;
                let markers = config.faults.markers;
                if !config.delay.is_zero() {
                    thread::sleep(config.delay);
                }
                if markers && statement.contains("__SLOW__") {
                    thread::sleep(config.faults.slow_marker_delay);
                }
                let drop_now = config
                    .faults
                    .disconnect_every
                    .is_some_and(|k| k > 0 && n.is_multiple_of(k))
                    || (markers && statement.contains("__DISCONNECT__"));
                if drop_now {
                    let _ = writer.shutdown(Shutdown::Both);
                    return Ok(());
                }
                if markers && statement.contains("__MALFORMED__") {
                    writer.write_all(b"this is not json\n")?;
                    continue;
                }
                let id = if markers && statement.contains("__BADID__") {
                    request.id.map(|i| i + 1000)
                } else {
                    request.id
                };
                write_reply(&mut writer, id, judge_statement(statement))?;
            }
        }
    }
    Ok(())
}

fn write_reply(w: &mut TcpStream, id: Option<u64>, verdict: Result<(), String>) -> io::Result<()> {
    let reply = match verdict {
        Ok(()) => Reply {
            id,
            result: Some(serde_json::json!({ "valid": true })),
            error: None,
        },
        Err(message) => Reply {
            id,
            result: None,
            error: Some(ErrorBody { message }),
        },
    };
    w.write_all(protocol::line(&reply).as_bytes())
}
