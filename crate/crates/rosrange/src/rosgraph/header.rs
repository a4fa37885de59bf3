//! Connection header and message-frame wire codec.
//!
//! Wire form of a header: a 4-byte little-endian total length, then for each
//! field a 4-byte little-endian length and the bytes of `name=value`. A
//! message frame is a 4-byte little-endian length followed by the payload.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("malformed header at offset {offset}")]
pub struct MalformedHeader {
    pub offset: usize,
}

/// Ordered connection header fields. Order is preserved on the wire, so
/// decode∘encode and encode∘decode are both identities.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConnectionHeader {
    pub fields: Vec<(String, String)>,
}

impl ConnectionHeader {
    pub fn new(fields: &[(&str, &str)]) -> ConnectionHeader {
        ConnectionHeader {
            fields: fields
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }
}

/// Encodes header fields. Field names must be nonempty and '='-free.
pub fn encode_connection_header(header: &ConnectionHeader) -> Vec<u8> {
    let mut body = Vec::new();
    for (name, value) in &header.fields {
        debug_assert!(!name.is_empty() && !name.contains('='));
        let field = format!("{}={}", name, value);
        body.extend_from_slice(&(field.len() as u32).to_le_bytes());
        body.extend_from_slice(field.as_bytes());
    }
    let mut out = Vec::with_capacity(body.len() + 4);
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(&body);
    out
}

/// Strict decode: the buffer must contain exactly one header, trailing bytes
/// are an error, and every field needs a nonempty name and an '='.
pub fn decode_connection_header(bytes: &[u8]) -> Result<ConnectionHeader, MalformedHeader> {
    let total = read_u32(bytes, 0)? as usize;
    if bytes.len() != total + 4 {
        return Err(MalformedHeader {
            offset: bytes.len().min(4),
        });
    }
    let mut fields = Vec::new();
    let mut pos = 4;
    while pos < bytes.len() {
        let len = read_u32(bytes, pos)? as usize;
        pos += 4;
        if pos + len > bytes.len() || len == 0 {
            return Err(MalformedHeader { offset: pos });
        }
        let field = std::str::from_utf8(&bytes[pos..pos + len])
            .map_err(|_| MalformedHeader { offset: pos })?;
        let eq = field.find('=').ok_or(MalformedHeader { offset: pos })?;
        if eq == 0 {
            return Err(MalformedHeader { offset: pos });
        }
        fields.push((field[..eq].to_string(), field[eq + 1..].to_string()));
        pos += len;
    }
    Ok(ConnectionHeader { fields })
}

fn read_u32(bytes: &[u8], pos: usize) -> Result<u32, MalformedHeader> {
    if pos + 4 > bytes.len() {
        return Err(MalformedHeader { offset: pos });
    }
    Ok(u32::from_le_bytes([
        bytes[pos],
        bytes[pos + 1],
        bytes[pos + 2],
        bytes[pos + 3],
    ]))
}

/// Decodes header fields from a frame body (the bytes after the outer
/// length prefix), as produced by `FrameBuffer`.
pub fn decode_header_fields(body: &[u8]) -> Result<ConnectionHeader, MalformedHeader> {
    decode_connection_header(&encode_frame(body))
}

/// One length-prefixed message frame.
pub fn encode_frame(payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() + 4);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
    out
}

/// True when `bytes` is exactly one well-formed frame.
pub fn is_exact_frame(bytes: &[u8]) -> bool {
    bytes.len() >= 4
        && u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize == bytes.len() - 4
}

/// Incremental frame splitter for a reassembled byte stream. Tracks the
/// stream offset of each extracted frame so receivers can attribute frames
/// to absolute TCP sequence numbers.
#[derive(Debug, Default)]
pub struct FrameBuffer {
    buf: Vec<u8>,
    consumed: u64,
}

impl FrameBuffer {
    pub fn new() -> FrameBuffer {
        FrameBuffer::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn next_frame(&mut self) -> Option<Vec<u8>> {
        self.next_frame_at().map(|(_, f)| f)
    }

    /// Next frame plus the stream offset of its length prefix.
    pub fn next_frame_at(&mut self) -> Option<(u64, Vec<u8>)> {
        if self.buf.len() < 4 {
            return None;
        }
        let len = u32::from_le_bytes([self.buf[0], self.buf[1], self.buf[2], self.buf[3]]) as usize;
        if self.buf.len() < 4 + len {
            return None;
        }
        let offset = self.consumed;
        let frame = self.buf[4..4 + len].to_vec();
        self.buf.drain(..4 + len);
        self.consumed += 4 + len as u64;
        Some((offset, frame))
    }

    pub fn pending(&self) -> usize {
        self.buf.len()
    }
}
