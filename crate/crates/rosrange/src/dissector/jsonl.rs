//! JSONL capture interchange. One object per record, fixed field order,
//! UTF-8, timestamps with six decimal places. Import is strict: every key
//! must be present with the right type and no extras.

use std::net::Ipv4Addr;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;

use super::{CaptureRecord, Classification, DissectError};
use crate::simnet::frame::TcpFlags;
use crate::simnet::time::SimTime;

fn record_line(r: &CaptureRecord) -> String {
    format!(
        "{{\"t\": {}, \"src_ip\": \"{}\", \"dst_ip\": \"{}\", \"src_port\": {}, \"dst_port\": {}, \"flags\": \"{}\", \"seq\": {}, \"ack\": {}, \"payload_b64\": \"{}\", \"class\": \"{}\"}}",
        r.t.render(),
        r.src_ip,
        r.dst_ip,
        r.src_port,
        r.dst_port,
        r.flags.render(),
        r.seq,
        r.ack,
        B64.encode(&r.payload),
        r.class.as_str(),
    )
}

pub fn export_capture_string(records: &[CaptureRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&record_line(r));
        out.push('\n');
    }
    out
}

pub fn export_capture(records: &[CaptureRecord], path: &Path) -> Result<(), DissectError> {
    std::fs::write(path, export_capture_string(records))?;
    Ok(())
}

const KEYS: [&str; 10] = [
    "t",
    "src_ip",
    "dst_ip",
    "src_port",
    "dst_port",
    "flags",
    "seq",
    "ack",
    "payload_b64",
    "class",
];

fn parse_line(line: &str, line_no: usize) -> Result<CaptureRecord, DissectError> {
    let malformed = || DissectError::MalformedRecord { line: line_no };
    let value: serde_json::Value = serde_json::from_str(line).map_err(|_| malformed())?;
    let obj = value.as_object().ok_or_else(malformed)?;
    if obj.len() != KEYS.len() || KEYS.iter().any(|k| !obj.contains_key(*k)) {
        return Err(malformed());
    }
    let f64_of = |k: &str| obj[k].as_f64().ok_or_else(malformed);
    let str_of = |k: &str| obj[k].as_str().ok_or_else(malformed);
    let u64_of = |k: &str| obj[k].as_u64().ok_or_else(malformed);

    let t = SimTime::from_micros((f64_of("t")? * 1_000_000.0).round() as u64);
    let src_ip: Ipv4Addr = str_of("src_ip")?.parse().map_err(|_| malformed())?;
    let dst_ip: Ipv4Addr = str_of("dst_ip")?.parse().map_err(|_| malformed())?;
    let src_port = u16::try_from(u64_of("src_port")?).map_err(|_| malformed())?;
    let dst_port = u16::try_from(u64_of("dst_port")?).map_err(|_| malformed())?;
    let flags = TcpFlags::parse(str_of("flags")?).ok_or_else(malformed)?;
    let seq = u32::try_from(u64_of("seq")?).map_err(|_| malformed())?;
    let ack = u32::try_from(u64_of("ack")?).map_err(|_| malformed())?;
    let payload = B64.decode(str_of("payload_b64")?).map_err(|_| malformed())?;
    let class = Classification::parse(str_of("class")?).ok_or_else(malformed)?;
    Ok(CaptureRecord {
        t,
        src_ip,
        dst_ip,
        src_port,
        dst_port,
        flags,
        seq,
        ack,
        payload,
        class,
    })
}

pub fn import_capture_string(text: &str) -> Result<Vec<CaptureRecord>, DissectError> {
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        records.push(parse_line(line, idx + 1)?);
    }
    Ok(records)
}

pub fn import_capture(path: &Path) -> Result<Vec<CaptureRecord>, DissectError> {
    let text = std::fs::read_to_string(path)?;
    import_capture_string(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CaptureRecord {
        CaptureRecord {
            t: SimTime::from_micros(1_234_567),
            src_ip: "13.0.0.5".parse().unwrap(),
            dst_ip: "13.0.0.20".parse().unwrap(),
            src_port: 40000,
            dst_port: 4001,
            flags: TcpFlags::fin_ack(),
            seq: 7,
            ack: 9,
            payload: vec![1, 2, 3],
            class: Classification::TcprosBody,
        }
    }

    #[test]
    fn round_trip() {
        let records = vec![sample()];
        let text = export_capture_string(&records);
        assert!(text.contains("\"t\": 1.234567"));
        assert!(text.contains("\"flags\": \"FA\""));
        let back = import_capture_string(&text).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn empty_stream_is_zero_lines() {
        assert_eq!(export_capture_string(&[]), "");
        assert!(import_capture_string("").unwrap().is_empty());
    }

    #[test]
    fn missing_seq_is_malformed() {
        let text = export_capture_string(&[sample()]);
        let broken = text.replace("\"seq\": 7, ", "");
        match import_capture_string(&broken) {
            Err(DissectError::MalformedRecord { line }) => assert_eq!(line, 1),
            other => panic!("expected malformed, got {:?}", other),
        }
    }

    #[test]
    fn extra_key_is_malformed() {
        let text = export_capture_string(&[sample()]);
        let broken = text.replace("\"seq\": 7", "\"seq\": 7, \"extra\": 1");
        assert!(matches!(
            import_capture_string(&broken),
            Err(DissectError::MalformedRecord { line: 1 })
        ));
    }
}
