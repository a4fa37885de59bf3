//! Passive capture records, the stream-stateful protocol classifier, and
//! offline analysis: session pairing, stream reassembly, JSONL export.

mod analysis;
mod jsonl;

pub use analysis::{find_session_pairs, reassemble, SessionPair};
pub use jsonl::{export_capture, export_capture_string, import_capture, import_capture_string};

use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;

use thiserror::Error;

use crate::rosgraph::header::{decode_connection_header, is_exact_frame};
use crate::simnet::frame::TcpFlags;
use crate::simnet::time::SimTime;

/// Leading magic byte of the RPC stand-in protocol.
pub const RPC_MAGIC: u8 = 0x52;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Rpc,
    TcprosHeader,
    TcprosBody,
    Arp,
    Other,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::Rpc => "rpc",
            Classification::TcprosHeader => "tcpros-header",
            Classification::TcprosBody => "tcpros-body",
            Classification::Arp => "arp",
            Classification::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Classification> {
        match s {
            "rpc" => Some(Classification::Rpc),
            "tcpros-header" => Some(Classification::TcprosHeader),
            "tcpros-body" => Some(Classification::TcprosBody),
            "arp" => Some(Classification::Arp),
            "other" => Some(Classification::Other),
            _ => None,
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One observed segment. Records are ordered by (t, insertion).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureRecord {
    pub t: SimTime,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub flags: TcpFlags,
    pub seq: u32,
    pub ack: u32,
    pub payload: Vec<u8>,
    pub class: Classification,
}

/// A directional TCP flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct FlowKey {
    pub src: (Ipv4Addr, u16),
    pub dst: (Ipv4Addr, u16),
}

impl FlowKey {
    pub fn reversed(&self) -> FlowKey {
        FlowKey {
            src: self.dst,
            dst: self.src,
        }
    }
}

impl CaptureRecord {
    pub fn flow(&self) -> FlowKey {
        FlowKey {
            src: (self.src_ip, self.src_port),
            dst: (self.dst_ip, self.dst_port),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StreamState {
    HeaderSeen,
    NotTcpros,
}

/// Classification context: which directional flows have already presented a
/// valid connection header. Classification is deterministic from bytes plus
/// this context.
#[derive(Debug, Default)]
pub struct StreamClassifier {
    flows: BTreeMap<FlowKey, StreamState>,
}

impl StreamClassifier {
    pub fn new() -> StreamClassifier {
        StreamClassifier::default()
    }

    /// Classifies one TCP record. RPC magic takes precedence; a stream's
    /// first payload that strictly decodes as a connection header marks the
    /// flow, and later well-formed frames on marked flows are bodies.
    pub fn classify(&mut self, flow: FlowKey, payload: &[u8]) -> Classification {
        if payload.is_empty() {
            return Classification::Other;
        }
        if payload[0] == RPC_MAGIC {
            self.flows.entry(flow).or_insert(StreamState::NotTcpros);
            return Classification::Rpc;
        }
        match self.flows.get(&flow) {
            None => {
                if decode_connection_header(payload).is_ok() {
                    self.flows.insert(flow, StreamState::HeaderSeen);
                    Classification::TcprosHeader
                } else {
                    self.flows.insert(flow, StreamState::NotTcpros);
                    Classification::Other
                }
            }
            Some(StreamState::HeaderSeen) => {
                if is_exact_frame(payload) {
                    Classification::TcprosBody
                } else {
                    Classification::Other
                }
            }
            Some(StreamState::NotTcpros) => Classification::Other,
        }
    }
}

#[derive(Debug, Error)]
pub enum DissectError {
    #[error("no such segment {0:?}")]
    NoSuchSegment(String),
    #[error("truncated stream at seq {at}")]
    TruncatedStream { at: u32 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed record at line {line}")]
    MalformedRecord { line: usize },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rosgraph::header::{encode_connection_header, encode_frame, ConnectionHeader};

    fn flow() -> FlowKey {
        FlowKey {
            src: ("13.0.0.5".parse().unwrap(), 40000),
            dst: ("13.0.0.20".parse().unwrap(), 4000),
        }
    }

    #[test]
    fn header_then_body() {
        let mut c = StreamClassifier::new();
        let header = encode_connection_header(&ConnectionHeader::new(&[("topic", "/cmd")]));
        assert_eq!(c.classify(flow(), &header), Classification::TcprosHeader);
        let body = encode_frame(b"payload");
        assert_eq!(c.classify(flow(), &body), Classification::TcprosBody);
    }

    #[test]
    fn rpc_magic_takes_precedence() {
        let mut c = StreamClassifier::new();
        assert_eq!(c.classify(flow(), &[0x52, 1, 2, 3]), Classification::Rpc);
    }

    #[test]
    fn body_requires_prior_header() {
        let mut c = StreamClassifier::new();
        let body = encode_frame(b"payload");
        assert_eq!(c.classify(flow(), &body), Classification::Other);
        // Once marked non-tcpros, later frames stay other.
        assert_eq!(c.classify(flow(), &body), Classification::Other);
    }

    #[test]
    fn random_bytes_never_classify_as_header() {
        let mut rng = crate::simnet::rng::SimRng::new(7);
        let mut hits = 0;
        for _ in 0..1000 {
            let len = 1 + (rng.next_bounded(64) as usize);
            let mut payload = Vec::with_capacity(len);
            for _ in 0..len {
                payload.push((rng.next_u64() & 0xff) as u8);
            }
            if payload[0] == RPC_MAGIC {
                continue;
            }
            let mut c = StreamClassifier::new();
            if c.classify(flow(), &payload) == Classification::TcprosHeader {
                hits += 1;
            }
        }
        assert_eq!(hits, 0);
    }
}
