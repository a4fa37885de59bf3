//! Wire-level data: L2 frames carrying ARP packets or IPv4/TCP segments.

use std::fmt;
use std::net::Ipv4Addr;

use super::net::Mac;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TcpFlags {
    pub fin: bool,
    pub syn: bool,
    pub rst: bool,
    pub psh: bool,
    pub ack: bool,
}

impl TcpFlags {
    pub const SYN: TcpFlags = TcpFlags {
        syn: true,
        ..TcpFlags::NONE
    };
    pub const NONE: TcpFlags = TcpFlags {
        fin: false,
        syn: false,
        rst: false,
        psh: false,
        ack: false,
    };

    pub fn syn_ack() -> TcpFlags {
        TcpFlags {
            syn: true,
            ack: true,
            ..TcpFlags::NONE
        }
    }

    pub fn ack() -> TcpFlags {
        TcpFlags {
            ack: true,
            ..TcpFlags::NONE
        }
    }

    pub fn psh_ack() -> TcpFlags {
        TcpFlags {
            psh: true,
            ack: true,
            ..TcpFlags::NONE
        }
    }

    pub fn fin_ack() -> TcpFlags {
        TcpFlags {
            fin: true,
            ack: true,
            ..TcpFlags::NONE
        }
    }

    pub fn rst() -> TcpFlags {
        TcpFlags {
            rst: true,
            ..TcpFlags::NONE
        }
    }

    /// Canonical FSRPA ordering, e.g. "FA" for a FIN-ACK.
    pub fn render(&self) -> String {
        let mut s = String::new();
        if self.fin {
            s.push('F');
        }
        if self.syn {
            s.push('S');
        }
        if self.rst {
            s.push('R');
        }
        if self.psh {
            s.push('P');
        }
        if self.ack {
            s.push('A');
        }
        s
    }

    pub fn parse(s: &str) -> Option<TcpFlags> {
        let mut f = TcpFlags::NONE;
        for c in s.chars() {
            match c {
                'F' => f.fin = true,
                'S' => f.syn = true,
                'R' => f.rst = true,
                'P' => f.psh = true,
                'A' => f.ack = true,
                _ => return None,
            }
        }
        Some(f)
    }
}

impl fmt::Display for TcpFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TcpSegment {
    pub src_port: u16,
    pub dst_port: u16,
    pub seq: u32,
    pub ack: u32,
    pub flags: TcpFlags,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ipv4Packet {
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub tcp: TcpSegment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArpOp {
    Request,
    Reply,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArpPacket {
    pub op: ArpOp,
    pub sender_mac: Mac,
    pub sender_ip: Ipv4Addr,
    pub target_mac: Mac,
    pub target_ip: Ipv4Addr,
}

impl ArpPacket {
    /// Compact byte form used for capture payloads.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(21);
        out.push(match self.op {
            ArpOp::Request => 1,
            ArpOp::Reply => 2,
        });
        out.extend_from_slice(&self.sender_mac.0);
        out.extend_from_slice(&self.sender_ip.octets());
        out.extend_from_slice(&self.target_mac.0);
        out.extend_from_slice(&self.target_ip.octets());
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FramePayload {
    Arp(ArpPacket),
    Ipv4(Ipv4Packet),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub src_mac: Mac,
    pub dst_mac: Mac,
    pub payload: FramePayload,
}
