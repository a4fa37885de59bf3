//! Offline capture analysis: data/ACK session pairing and per-flow stream
//! reassembly.

use std::collections::BTreeMap;

use super::{CaptureRecord, Classification, DissectError, FlowKey};
use crate::rosgraph::header::{decode_connection_header, encode_frame, FrameBuffer};

/// A data segment paired with the pure ACK that acknowledges exactly its
/// payload: endpoints reversed, data.seq + len(payload) == ack.ack, and the
/// ACK observed after the data record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionPair {
    pub data_index: usize,
    pub ack_index: usize,
    pub data: CaptureRecord,
    pub ack: CaptureRecord,
}

fn is_pure_ack(r: &CaptureRecord) -> bool {
    r.flags.ack && !r.flags.syn && !r.flags.fin && !r.flags.rst && r.payload.is_empty()
}

/// Returns every (data, ack) pair satisfying the pairing invariant, most
/// recent first (by ACK position, then data position).
pub fn find_session_pairs(records: &[CaptureRecord]) -> Vec<SessionPair> {
    // pending[(ack flow, expected ack number)] -> indices of candidate datas
    let mut pending: BTreeMap<(FlowKey, u32), Vec<usize>> = BTreeMap::new();
    let mut pairs = Vec::new();
    for (j, rec) in records.iter().enumerate() {
        if rec.class == Classification::TcprosBody {
            let key = (
                rec.flow().reversed(),
                rec.seq.wrapping_add(rec.payload.len() as u32),
            );
            pending.entry(key).or_default().push(j);
        }
        if is_pure_ack(rec) {
            if let Some(datas) = pending.get(&(rec.flow(), rec.ack)) {
                for &i in datas {
                    if i < j {
                        pairs.push(SessionPair {
                            data_index: i,
                            ack_index: j,
                            data: records[i].clone(),
                            ack: rec.clone(),
                        });
                    }
                }
            }
        }
    }
    pairs.sort_by(|a, b| (b.ack_index, b.data_index).cmp(&(a.ack_index, a.data_index)));
    pairs
}

/// Rebuilds the byte stream of one directional flow and splits it into
/// message frames. A leading connection header is consumed and not returned.
/// Overlapping retransmissions take the later bytes; a hole in the sequence
/// space or a trailing partial frame is a truncated stream.
pub fn reassemble(
    records: &[CaptureRecord],
    flow: FlowKey,
) -> Result<Vec<Vec<u8>>, DissectError> {
    let mut stream: Vec<u8> = Vec::new();
    let mut base: Option<u32> = None;
    for rec in records {
        if rec.flow() != flow || rec.payload.is_empty() {
            continue;
        }
        let base = *base.get_or_insert(rec.seq);
        let offset = rec.seq.wrapping_sub(base) as usize;
        if offset > stream.len() {
            return Err(DissectError::TruncatedStream {
                at: base.wrapping_add(stream.len() as u32),
            });
        }
        let end = offset + rec.payload.len();
        if end > stream.len() {
            stream.resize(end, 0);
        }
        stream[offset..end].copy_from_slice(&rec.payload);
    }
    let mut fb = FrameBuffer::new();
    fb.push(&stream);
    let mut frames = Vec::new();
    let mut first = true;
    while let Some(frame) = fb.next_frame() {
        if first {
            first = false;
            // The header is itself a length-prefixed blob; skip it.
            if decode_connection_header(&encode_frame(&frame)).is_ok() {
                continue;
            }
        }
        frames.push(frame);
    }
    if fb.pending() > 0 {
        let consumed = stream.len() - fb.pending();
        return Err(DissectError::TruncatedStream {
            at: base.unwrap_or(0).wrapping_add(consumed as u32),
        });
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simnet::frame::TcpFlags;
    use crate::simnet::time::SimTime;
    use std::net::Ipv4Addr;

    fn rec(
        src: (&str, u16),
        dst: (&str, u16),
        flags: TcpFlags,
        seq: u32,
        ack: u32,
        payload: &[u8],
        class: Classification,
    ) -> CaptureRecord {
        CaptureRecord {
            t: SimTime::ZERO,
            src_ip: src.0.parse::<Ipv4Addr>().unwrap(),
            dst_ip: dst.0.parse::<Ipv4Addr>().unwrap(),
            src_port: src.1,
            dst_port: dst.1,
            flags,
            seq,
            ack,
            payload: payload.to_vec(),
            class,
        }
    }

    const A: (&str, u16) = ("13.0.0.5", 4000);
    const B: (&str, u16) = ("13.0.0.20", 41000);

    #[test]
    fn exact_pair_found() {
        let records = vec![
            rec(A, B, TcpFlags::psh_ack(), 5000, 1, &[0u8; 20], Classification::TcprosBody),
            rec(B, A, TcpFlags::ack(), 1, 5020, &[], Classification::Other),
        ];
        let pairs = find_session_pairs(&records);
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].data_index, 0);
        assert_eq!(pairs[0].ack_index, 1);
    }

    #[test]
    fn off_by_one_ack_not_paired() {
        let records = vec![
            rec(A, B, TcpFlags::psh_ack(), 5000, 1, &[0u8; 20], Classification::TcprosBody),
            rec(B, A, TcpFlags::ack(), 1, 5019, &[], Classification::Other),
        ];
        assert!(find_session_pairs(&records).is_empty());
    }

    #[test]
    fn ack_before_data_not_paired() {
        let records = vec![
            rec(B, A, TcpFlags::ack(), 1, 5020, &[], Classification::Other),
            rec(A, B, TcpFlags::psh_ack(), 5000, 1, &[0u8; 20], Classification::TcprosBody),
        ];
        assert!(find_session_pairs(&records).is_empty());
    }

    #[test]
    fn reassemble_with_overwrite_takes_later_bytes() {
        let flow = FlowKey {
            src: (A.0.parse().unwrap(), A.1),
            dst: (B.0.parse().unwrap(), B.1),
        };
        let frame_a = encode_frame(b"orig");
        let frame_b = encode_frame(b"EVIL");
        let records = vec![
            rec(A, B, TcpFlags::psh_ack(), 100, 1, &frame_a, Classification::TcprosBody),
            rec(A, B, TcpFlags::psh_ack(), 100, 1, &frame_b, Classification::TcprosBody),
        ];
        let frames = reassemble(&records, flow).unwrap();
        assert_eq!(frames, vec![b"EVIL".to_vec()]);
    }

    #[test]
    fn gap_is_truncated_stream() {
        let flow = FlowKey {
            src: (A.0.parse().unwrap(), A.1),
            dst: (B.0.parse().unwrap(), B.1),
        };
        let frame = encode_frame(b"data");
        let records = vec![
            rec(A, B, TcpFlags::psh_ack(), 100, 1, &frame, Classification::TcprosBody),
            rec(A, B, TcpFlags::psh_ack(), 200, 1, &frame, Classification::TcprosBody),
        ];
        match reassemble(&records, flow) {
            Err(DissectError::TruncatedStream { at }) => assert_eq!(at, 108),
            other => panic!("expected truncation, got {:?}", other),
        }
    }

    #[test]
    fn empty_capture_reassembles_empty() {
        let flow = FlowKey {
            src: (A.0.parse().unwrap(), A.1),
            dst: (B.0.parse().unwrap(), B.1),
        };
        assert!(reassemble(&[], flow).unwrap().is_empty());
    }
}
