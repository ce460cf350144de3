//! Framed binary wire protocol between clients and server.
//!
//! Frame layout: one type byte, a 4-byte big-endian payload length, then
//! the payload. Fixed-width fields throughout, all integers big-endian,
//! no varints, so every message has exactly one byte representation.
//!
//! ```text
//! REGISTER  0x01  user_id(8) || pk
//! OK        0x02  (empty)
//! ERR       0x03  reason(1)
//! REPORT    0x04  count(4) || count * (x || y)
//! FETCH     0x05  user_id(8) || day(4)
//! BATCH     0x06  day(4) || count(4) || count * (z || w)
//! ```

use std::io::{Read, Write};

use thiserror::Error;

use crate::group::Group;
use crate::protocol::{
    decode_rerand, decode_token, encode_rerand, encode_token, BroadcastToken, RerandToken,
};

/// Upper bound accepted for a declared payload length; a defense against
/// hostile length prefixes, far above any legitimate message.
pub const MAX_PAYLOAD: usize = 1 << 28;

/// FETCH day value meaning "the most recently closed day".
pub const LATEST_DAY: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("frame truncated")]
    Truncated,
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("declared payload length {0} exceeds the {MAX_PAYLOAD}-byte cap")]
    PayloadTooLarge(u64),
    #[error("{0} bytes left over after the declared payload")]
    TrailingBytes(usize),
    #[error("bad payload: {0}")]
    BadPayload(String),
    #[error("element rejected: {0}")]
    NonMember(#[from] crate::group::GroupError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageType {
    Register = 0x01,
    Ok = 0x02,
    Err = 0x03,
    Report = 0x04,
    Fetch = 0x05,
    Batch = 0x06,
}

impl MessageType {
    pub fn from_byte(b: u8) -> Result<MessageType, WireError> {
        match b {
            0x01 => Ok(MessageType::Register),
            0x02 => Ok(MessageType::Ok),
            0x03 => Ok(MessageType::Err),
            0x04 => Ok(MessageType::Report),
            0x05 => Ok(MessageType::Fetch),
            0x06 => Ok(MessageType::Batch),
            other => Err(WireError::UnknownType(other)),
        }
    }
}

/// One-byte reason codes carried by ERR replies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ErrorCode {
    BadLength = 0x01,
    NonMember = 0x02,
    DuplicateUser = 0x03,
    TooLarge = 0x04,
    UnknownUser = 0x05,
    NoSuchDay = 0x06,
}

impl ErrorCode {
    pub fn from_byte(b: u8) -> Option<ErrorCode> {
        match b {
            0x01 => Some(ErrorCode::BadLength),
            0x02 => Some(ErrorCode::NonMember),
            0x03 => Some(ErrorCode::DuplicateUser),
            0x04 => Some(ErrorCode::TooLarge),
            0x05 => Some(ErrorCode::UnknownUser),
            0x06 => Some(ErrorCode::NoSuchDay),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireMessage {
    pub msg_type: MessageType,
    pub payload: Vec<u8>,
}

/// Serialize a message to its frame bytes.
pub fn frame(msg: &WireMessage) -> Vec<u8> {
    assert!(msg.payload.len() <= u32::MAX as usize);
    let mut out = Vec::with_capacity(5 + msg.payload.len());
    out.push(msg.msg_type as u8);
    out.extend_from_slice(&(msg.payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&msg.payload);
    out
}

/// Parse exactly one frame from a byte slice; leftover bytes are an error.
pub fn deframe(bytes: &[u8]) -> Result<WireMessage, WireError> {
    if bytes.is_empty() {
        return Err(WireError::Truncated);
    }
    let msg_type = MessageType::from_byte(bytes[0])?;
    if bytes.len() < 5 {
        return Err(WireError::Truncated);
    }
    let len = u32::from_be_bytes(bytes[1..5].try_into().expect("4 bytes")) as usize;
    if len > MAX_PAYLOAD {
        return Err(WireError::PayloadTooLarge(len as u64));
    }
    let rest = &bytes[5..];
    if rest.len() < len {
        return Err(WireError::Truncated);
    }
    if rest.len() > len {
        return Err(WireError::TrailingBytes(rest.len() - len));
    }
    Ok(WireMessage {
        msg_type,
        payload: rest.to_vec(),
    })
}

/// Read one frame from a stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<WireMessage, WireError> {
    let mut head = [0u8; 5];
    r.read_exact(&mut head)?;
    let msg_type = MessageType::from_byte(head[0])?;
    let len = u32::from_be_bytes(head[1..5].try_into().expect("4 bytes")) as usize;
    if len > MAX_PAYLOAD {
        return Err(WireError::PayloadTooLarge(len as u64));
    }
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)?;
    Ok(WireMessage { msg_type, payload })
}

/// Write one frame to a stream.
pub fn write_frame<W: Write>(w: &mut W, msg: &WireMessage) -> Result<(), WireError> {
    w.write_all(&frame(msg))?;
    w.flush()?;
    Ok(())
}

/// A request as the server sees it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    Register { user_id: u64, pk: crate::group::GroupElement },
    Report { tokens: Vec<BroadcastToken> },
    Fetch { user_id: u64, day: u32 },
}

/// A reply as the client sees it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Response {
    Ok,
    Err(ErrorCode),
    Batch { day: u32, tokens: Vec<RerandToken> },
}

pub fn encode_request(group: &Group, req: &Request) -> WireMessage {
    match req {
        Request::Register { user_id, pk } => {
            let mut payload = user_id.to_be_bytes().to_vec();
            payload.extend_from_slice(&group.encode(pk));
            WireMessage {
                msg_type: MessageType::Register,
                payload,
            }
        }
        Request::Report { tokens } => {
            let mut payload = (tokens.len() as u32).to_be_bytes().to_vec();
            for t in tokens {
                payload.extend_from_slice(&encode_token(group, t));
            }
            WireMessage {
                msg_type: MessageType::Report,
                payload,
            }
        }
        Request::Fetch { user_id, day } => {
            let mut payload = user_id.to_be_bytes().to_vec();
            payload.extend_from_slice(&day.to_be_bytes());
            WireMessage {
                msg_type: MessageType::Fetch,
                payload,
            }
        }
    }
}

pub fn decode_request(group: &Group, msg: &WireMessage) -> Result<Request, WireError> {
    let p = &msg.payload;
    let w = group.element_width();
    let bad = |m: String| Err(WireError::BadPayload(m));
    match msg.msg_type {
        MessageType::Register => {
            if p.len() != 8 + w {
                return bad(format!("REGISTER payload must be {} bytes", 8 + w));
            }
            Ok(Request::Register {
                user_id: u64::from_be_bytes(p[..8].try_into().expect("8 bytes")),
                pk: group.decode(&p[8..])?,
            })
        }
        MessageType::Report => {
            if p.len() < 4 {
                return bad("REPORT payload shorter than its count field".into());
            }
            let count = u32::from_be_bytes(p[..4].try_into().expect("4 bytes")) as usize;
            let body = &p[4..];
            if body.len() != count * 2 * w {
                return bad(format!(
                    "REPORT declares {count} tokens but carries {} body bytes",
                    body.len()
                ));
            }
            let tokens = body
                .chunks(2 * w)
                .map(|c| decode_token(group, c))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| match e {
                    crate::protocol::ProtocolError::Group(g) => WireError::NonMember(g),
                    other => WireError::BadPayload(other.to_string()),
                })?;
            Ok(Request::Report { tokens })
        }
        MessageType::Fetch => {
            if p.len() != 12 {
                return bad("FETCH payload must be 12 bytes".into());
            }
            Ok(Request::Fetch {
                user_id: u64::from_be_bytes(p[..8].try_into().expect("8 bytes")),
                day: u32::from_be_bytes(p[8..12].try_into().expect("4 bytes")),
            })
        }
        other => bad(format!("{other:?} is not a request type")),
    }
}

pub fn encode_response(group: &Group, resp: &Response) -> WireMessage {
    match resp {
        Response::Ok => WireMessage {
            msg_type: MessageType::Ok,
            payload: Vec::new(),
        },
        Response::Err(code) => WireMessage {
            msg_type: MessageType::Err,
            payload: vec![*code as u8],
        },
        Response::Batch { day, tokens } => {
            let mut payload = day.to_be_bytes().to_vec();
            payload.extend_from_slice(&(tokens.len() as u32).to_be_bytes());
            for t in tokens {
                payload.extend_from_slice(&encode_rerand(group, t));
            }
            WireMessage {
                msg_type: MessageType::Batch,
                payload,
            }
        }
    }
}

pub fn decode_response(group: &Group, msg: &WireMessage) -> Result<Response, WireError> {
    let p = &msg.payload;
    let w = group.element_width();
    let bad = |m: String| Err(WireError::BadPayload(m));
    match msg.msg_type {
        MessageType::Ok => {
            if !p.is_empty() {
                return bad("OK carries no payload".into());
            }
            Ok(Response::Ok)
        }
        MessageType::Err => {
            if p.len() != 1 {
                return bad("ERR payload must be one reason byte".into());
            }
            match ErrorCode::from_byte(p[0]) {
                Some(code) => Ok(Response::Err(code)),
                None => bad(format!("unknown error code {:#04x}", p[0])),
            }
        }
        MessageType::Batch => {
            if p.len() < 8 {
                return bad("BATCH payload shorter than its header".into());
            }
            let day = u32::from_be_bytes(p[..4].try_into().expect("4 bytes"));
            let count = u32::from_be_bytes(p[4..8].try_into().expect("4 bytes")) as usize;
            let body = &p[8..];
            if body.len() != count * 2 * w {
                return bad(format!(
                    "BATCH declares {count} tokens but carries {} body bytes",
                    body.len()
                ));
            }
            let tokens = body
                .chunks(2 * w)
                .map(|c| decode_rerand(group, c))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| match e {
                    crate::protocol::ProtocolError::Group(g) => WireError::NonMember(g),
                    other => WireError::BadPayload(other.to_string()),
                })?;
            Ok(Response::Batch { day, tokens })
        }
        other => bad(format!("{other:?} is not a response type")),
    }
}
