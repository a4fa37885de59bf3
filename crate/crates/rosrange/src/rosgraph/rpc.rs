//! Graph RPC wire format — an XMLRPC stand-in. One record is the magic
//! byte 0x52, a 4-byte little-endian body length, then a string table:
//! [u32 count] followed by [u32 len][bytes] per string. Requests put the
//! method name first; responses put a status ("ok" or "error") first.

use std::net::Ipv4Addr;

use crate::dissector::RPC_MAGIC;
use crate::simnet::tcp::TcpError;
use crate::simnet::world::World;
use crate::simnet::HostId;

pub fn encode_rpc(strings: &[String]) -> Vec<u8> {
    let mut body = Vec::new();
    body.extend_from_slice(&(strings.len() as u32).to_le_bytes());
    for s in strings {
        body.extend_from_slice(&(s.len() as u32).to_le_bytes());
        body.extend_from_slice(s.as_bytes());
    }
    let mut out = Vec::with_capacity(body.len() + 5);
    out.push(RPC_MAGIC);
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(&body);
    out
}

pub fn decode_rpc(bytes: &[u8]) -> Option<Vec<String>> {
    if bytes.len() < 5 || bytes[0] != RPC_MAGIC {
        return None;
    }
    let body_len = u32::from_le_bytes([bytes[1], bytes[2], bytes[3], bytes[4]]) as usize;
    if bytes.len() != body_len + 5 {
        return None;
    }
    let body = &bytes[5..];
    let mut pos = 0usize;
    let read_u32 = |pos: usize| -> Option<u32> {
        body.get(pos..pos + 4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    };
    let count = read_u32(pos)? as usize;
    pos += 4;
    let mut strings = Vec::with_capacity(count);
    for _ in 0..count {
        let len = read_u32(pos)? as usize;
        pos += 4;
        let s = body.get(pos..pos + len)?;
        strings.push(String::from_utf8(s.to_vec()).ok()?);
        pos += len;
    }
    if pos != body.len() {
        return None;
    }
    Some(strings)
}

/// Incremental record splitter for RPC connections.
#[derive(Debug, Default)]
pub struct RpcBuffer {
    buf: Vec<u8>,
}

impl RpcBuffer {
    pub fn new() -> RpcBuffer {
        RpcBuffer::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn next_record(&mut self) -> Option<Vec<String>> {
        if self.buf.len() < 5 || self.buf[0] != RPC_MAGIC {
            return None;
        }
        let body_len =
            u32::from_le_bytes([self.buf[1], self.buf[2], self.buf[3], self.buf[4]]) as usize;
        if self.buf.len() < body_len + 5 {
            return None;
        }
        let record: Vec<u8> = self.buf.drain(..body_len + 5).collect();
        decode_rpc(&record)
    }
}

/// A node URI is "ip:port".
pub fn parse_uri(uri: &str) -> Option<(Ipv4Addr, u16)> {
    let (ip, port) = uri.split_once(':')?;
    Some((ip.parse().ok()?, port.parse().ok()?))
}

pub fn format_uri(ip: Ipv4Addr, port: u16) -> String {
    format!("{}:{}", ip, port)
}

/// Blocking single-shot RPC used by drivers and attack procedures. Opens a
/// connection, sends one request, pumps the loop, returns the response
/// strings. Not for use inside app handlers.
pub fn rpc_call(
    world: &mut World,
    src: HostId,
    dst: (Ipv4Addr, u16),
    request: &[String],
) -> Result<Vec<String>, TcpError> {
    let conn = world.user_connect(src, dst.0, dst.1)?;
    world.send(conn, &encode_rpc(request))?;
    world.settle();
    let mut buf = RpcBuffer::new();
    buf.push(&world.drain_recv(conn));
    let response = buf.next_record();
    world.close(conn);
    world.settle();
    response.ok_or(TcpError::Reset)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rpc_round_trip() {
        let req = vec![
            "registerPublisher".to_string(),
            "/s1_state_pub".to_string(),
            "/r1/state".to_string(),
        ];
        let wire = encode_rpc(&req);
        assert_eq!(wire[0], RPC_MAGIC);
        assert_eq!(decode_rpc(&wire).unwrap(), req);
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut wire = encode_rpc(&["x".to_string()]);
        wire.push(0);
        assert!(decode_rpc(&wire).is_none());
    }

    #[test]
    fn uri_round_trip() {
        let (ip, port) = parse_uri("13.0.0.20:11311").unwrap();
        assert_eq!(format_uri(ip, port), "13.0.0.20:11311");
        assert!(parse_uri("nonsense").is_none());
    }
}
