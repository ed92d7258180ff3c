//! Newline-delimited JSON messages exchanged with a statement checker.
//!
//! ```text
//! -> {"method":"hello","params":{"proto":1}}
//! <- {"result":{"proto":1}}
//! -> {"id":1,"method":"check","params":{"preamble":"...","statement":"..."}}
//! <- {"id":1,"result":{"valid":true}}   |   {"id":1,"error":{"message":"..."}}
//! ```

use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HelloParams {
    pub proto: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckParams {
    pub preamble: String,
    pub statement: String,
}

/// Client-to-server line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", content = "params", rename_all = "lowercase")]
pub enum RequestBody {
    Hello(HelloParams),
    Check(CheckParams),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u64>,
    #[serde(flatten)]
    pub body: RequestBody,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub message: String,
}

/// Server-to-client line: exactly one of `result` or `error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reply {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

pub fn hello_line(proto: u32) -> String {
    line(&Request {
        id: None,
        body: RequestBody::Hello(HelloParams { proto }),
    })
}

pub fn check_line(id: u64, preamble: &str, statement: &str) -> String {
    line(&Request {
        id: Some(id),
        body: RequestBody::Check(CheckParams {
            preamble: preamble.to_string(),
            statement: statement.to_string(),
        }),
    })
}

pub fn line<T: Serialize>(msg: &T) -> String {
    let mut s = serde_json::to_string(msg).expect("protocol messages always serialize");
    s.push('\n');
    s
}
