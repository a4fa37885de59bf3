//! Reduced TCP state machine: sequence/ack arithmetic, the standard state
//! transitions, and exact-match receive windows (window size of one
//! segment). No retransmission timers, no congestion control — the attacks
//! this world hosts hinge on sequence validity and state transitions only.

use std::net::Ipv4Addr;

use super::frame::{TcpFlags, TcpSegment};
use super::topology::HostId;

pub type ConnId = usize;
pub type ListenerId = usize;
pub type AppId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcpState {
    Closed,
    Listen,
    SynSent,
    SynReceived,
    Established,
    FinWait1,
    FinWait2,
    CloseWait,
    LastAck,
    TimeWait,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcpError {
    ConnectionRefused,
    Filtered,
    HandshakeTimeout,
    NotEstablished,
    Reset,
}

impl std::fmt::Display for TcpError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TcpError::ConnectionRefused => "connection refused",
            TcpError::Filtered => "filtered",
            TcpError::HandshakeTimeout => "handshake timeout",
            TcpError::NotEstablished => "not established",
            TcpError::Reset => "reset",
        };
        f.write_str(s)
    }
}

impl std::error::Error for TcpError {}

/// What the state machine wants done after consuming a segment. The world
/// turns emissions into frames and wakes into app events.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SegAction {
    Emit {
        flags: TcpFlags,
        seq: u32,
        ack: u32,
        payload: Vec<u8>,
    },
    Established,
    Readable,
    PeerClosed,
    Closed { reset: bool },
    Refused,
}

#[derive(Debug)]
pub struct TcpConn {
    pub host: HostId,
    pub local: (Ipv4Addr, u16),
    pub remote: (Ipv4Addr, u16),
    pub state: TcpState,
    pub snd_nxt: u32,
    pub rcv_nxt: u32,
    /// rcv_nxt at establishment; frame offsets are relative to this.
    pub rcv_start: u32,
    pub recv_buf: Vec<u8>,
    pub app: AppId,
    pub established_at: Option<super::time::SimTime>,
}

impl TcpConn {
    fn ack_now(&self) -> SegAction {
        SegAction::Emit {
            flags: TcpFlags::ack(),
            seq: self.snd_nxt,
            ack: self.rcv_nxt,
            payload: Vec::new(),
        }
    }

    /// Consumes one incoming segment. Out-of-window sequence numbers are
    /// ignored without reply.
    pub fn on_segment(&mut self, seg: &TcpSegment) -> Vec<SegAction> {
        let mut actions = Vec::new();
        if seg.flags.rst {
            match self.state {
                TcpState::Closed => {}
                TcpState::SynSent => {
                    self.state = TcpState::Closed;
                    actions.push(SegAction::Refused);
                }
                _ => {
                    self.state = TcpState::Closed;
                    actions.push(SegAction::Closed { reset: true });
                }
            }
            return actions;
        }

        match self.state {
            TcpState::SynSent => {
                if seg.flags.syn && seg.flags.ack && seg.ack == self.snd_nxt {
                    self.rcv_nxt = seg.seq.wrapping_add(1);
                    self.rcv_start = self.rcv_nxt;
                    self.state = TcpState::Established;
                    actions.push(self.ack_now());
                    actions.push(SegAction::Established);
                }
            }
            TcpState::SynReceived => {
                if seg.flags.ack && !seg.flags.syn && seg.ack == self.snd_nxt {
                    self.state = TcpState::Established;
                    actions.push(SegAction::Established);
                    // An ACK may piggy-back data.
                    if !seg.payload.is_empty() {
                        actions.extend(self.consume_data(seg));
                    }
                }
            }
            TcpState::Established | TcpState::FinWait1 | TcpState::FinWait2 => {
                if !seg.payload.is_empty() {
                    actions.extend(self.consume_data(seg));
                }
                if seg.flags.fin {
                    let fin_seq = seg.seq.wrapping_add(seg.payload.len() as u32);
                    if fin_seq == self.rcv_nxt {
                        self.rcv_nxt = self.rcv_nxt.wrapping_add(1);
                        actions.push(self.ack_now());
                        match self.state {
                            TcpState::Established => {
                                self.state = TcpState::CloseWait;
                                actions.push(SegAction::PeerClosed);
                            }
                            TcpState::FinWait1 | TcpState::FinWait2 => {
                                self.state = TcpState::TimeWait;
                                actions.push(SegAction::PeerClosed);
                                actions.push(SegAction::Closed { reset: false });
                            }
                            _ => unreachable!(),
                        }
                        return actions;
                    }
                }
                if seg.flags.ack && self.state == TcpState::FinWait1 && seg.ack == self.snd_nxt {
                    self.state = TcpState::FinWait2;
                }
            }
            TcpState::LastAck => {
                if seg.flags.ack && seg.ack == self.snd_nxt {
                    self.state = TcpState::Closed;
                    actions.push(SegAction::Closed { reset: false });
                }
            }
            TcpState::CloseWait | TcpState::TimeWait | TcpState::Closed | TcpState::Listen => {}
        }
        actions
    }

    fn consume_data(&mut self, seg: &TcpSegment) -> Vec<SegAction> {
        if seg.seq != self.rcv_nxt {
            // Exact-match window: anything else is out of window.
            return Vec::new();
        }
        self.rcv_nxt = self.rcv_nxt.wrapping_add(seg.payload.len() as u32);
        self.recv_buf.extend_from_slice(&seg.payload);
        vec![self.ack_now(), SegAction::Readable]
    }

    /// Prepares a data segment, advancing snd_nxt.
    pub fn make_data(&mut self, payload: Vec<u8>) -> Result<TcpSegment, TcpError> {
        match self.state {
            TcpState::Established => {}
            TcpState::SynSent | TcpState::SynReceived | TcpState::Listen => {
                return Err(TcpError::NotEstablished)
            }
            _ => return Err(TcpError::Reset),
        }
        let seg = TcpSegment {
            src_port: self.local.1,
            dst_port: self.remote.1,
            seq: self.snd_nxt,
            ack: self.rcv_nxt,
            flags: TcpFlags::psh_ack(),
            payload,
        };
        self.snd_nxt = self.snd_nxt.wrapping_add(seg.payload.len() as u32);
        Ok(seg)
    }

    /// Starts an orderly close from this side, if the state allows one.
    pub fn make_fin(&mut self) -> Option<TcpSegment> {
        let next = match self.state {
            TcpState::Established => TcpState::FinWait1,
            TcpState::CloseWait => TcpState::LastAck,
            _ => return None,
        };
        let seg = TcpSegment {
            src_port: self.local.1,
            dst_port: self.remote.1,
            seq: self.snd_nxt,
            ack: self.rcv_nxt,
            flags: TcpFlags::fin_ack(),
            payload: Vec::new(),
        };
        self.snd_nxt = self.snd_nxt.wrapping_add(1);
        self.state = next;
        Some(seg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(flags: TcpFlags, seq: u32, ack: u32, payload: &[u8]) -> TcpSegment {
        TcpSegment {
            src_port: 1,
            dst_port: 2,
            seq,
            ack,
            flags,
            payload: payload.to_vec(),
        }
    }

    fn established(snd: u32, rcv: u32) -> TcpConn {
        TcpConn {
            host: 0,
            local: ("10.0.0.1".parse().unwrap(), 2),
            remote: ("10.0.0.2".parse().unwrap(), 1),
            state: TcpState::Established,
            snd_nxt: snd,
            rcv_nxt: rcv,
            rcv_start: rcv,
            recv_buf: Vec::new(),
            app: 0,
            established_at: None,
        }
    }

    #[test]
    fn in_order_data_advances_rcv_nxt() {
        let mut c = established(9000, 2000);
        let actions = c.on_segment(&seg(TcpFlags::psh_ack(), 2000, 9000, b"hello"));
        assert_eq!(c.rcv_nxt, 2005);
        assert_eq!(c.recv_buf, b"hello");
        assert!(actions.contains(&SegAction::Readable));
    }

    #[test]
    fn out_of_window_data_ignored() {
        let mut c = established(9000, 2000);
        let actions = c.on_segment(&seg(TcpFlags::psh_ack(), 2001, 9000, b"hello"));
        assert!(actions.is_empty());
        assert_eq!(c.rcv_nxt, 2000);
        assert!(c.recv_buf.is_empty());
    }

    #[test]
    fn exact_fin_moves_to_close_wait() {
        let mut c = established(9000, 2000);
        let actions = c.on_segment(&seg(TcpFlags::fin_ack(), 2000, 9000, b""));
        assert_eq!(c.state, TcpState::CloseWait);
        assert_eq!(c.rcv_nxt, 2001);
        assert!(actions.contains(&SegAction::PeerClosed));
    }

    #[test]
    fn off_by_one_fin_ignored() {
        let mut c = established(9000, 2000);
        let actions = c.on_segment(&seg(TcpFlags::fin_ack(), 2001, 9000, b""));
        assert!(actions.is_empty());
        assert_eq!(c.state, TcpState::Established);
    }

    #[test]
    fn send_after_remote_fin_is_reset() {
        let mut c = established(9000, 2000);
        c.on_segment(&seg(TcpFlags::fin_ack(), 2000, 9000, b""));
        assert_eq!(c.make_data(b"x".to_vec()), Err(TcpError::Reset));
    }

    #[test]
    fn seq_wraparound() {
        let mut c = established(10, u32::MAX - 1);
        c.on_segment(&seg(TcpFlags::psh_ack(), u32::MAX - 1, 10, b"abcd"));
        assert_eq!(c.rcv_nxt, 2);
    }
}
