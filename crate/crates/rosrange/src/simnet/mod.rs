//! Deterministic discrete-event simulation of a segmented industrial
//! network: L2 frames and ARP, L3 routing through firewall gateways, and a
//! reduced L4 TCP state machine, with attack-grade injection primitives.

pub mod firewall;
pub mod frame;
pub mod net;
pub mod rng;
pub mod tcp;
pub mod time;
pub mod topology;
pub mod world;

pub use firewall::{firewall_eval, Action, ConnState, FirewallRule, PacketMeta, PortMatch, StateMatch};
pub use frame::{ArpOp, ArpPacket, Frame, FramePayload, Ipv4Packet, TcpFlags, TcpSegment};
pub use net::{Cidr, Mac};
pub use rng::SimRng;
pub use tcp::{AppId, ConnId, ListenerId, TcpConn, TcpError, TcpState};
pub use time::SimTime;
pub use topology::{HardeningProfile, Host, HostId, Interface, Level, Segment, SegmentId};
pub use world::{
    AcceptGate, App, AppEvent, DropRecord, ForeignRx, FrameLogEntry, Labels, LogRecord,
    PoisonReceipt, Reach, SpoofedSegment, Tap, TapId, UserSock, World, WorldConfig,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetError {
    #[error("duplicate name {0:?}")]
    DuplicateName(String),
    #[error("address out of subnet: {0}")]
    AddressOutOfSubnet(String),
    #[error("overlapping subnet: {0}")]
    OverlappingSubnet(String),
    #[error("duplicate interface: {0}")]
    DuplicateInterface(String),
    #[error("duplicate address {0}")]
    DuplicateAddress(String),
    #[error("no such segment {0:?}")]
    NoSuchSegment(String),
    #[error("no such host {0:?}")]
    NoSuchHost(String),
    #[error("bad address {0:?}")]
    BadAddress(String),
    #[error("unreachable: no interface or route")]
    Unreachable,
    #[error("timed out")]
    Timeout,
    #[error("not on segment")]
    NotOnSegment,
    #[error("off path")]
    OffPath,
}
