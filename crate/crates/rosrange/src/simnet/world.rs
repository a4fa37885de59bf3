//! The world: topology, the deterministic event loop, L2 delivery with ARP,
//! gateway forwarding, TCP endpoints, application dispatch, capture taps,
//! and the structured event/drop/frame logs every later layer reads.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::net::Ipv4Addr;

use crate::dissector::{CaptureRecord, Classification, DissectError, FlowKey, StreamClassifier};
use crate::rosgraph::session::{Origin, PrincipalSession, SessionId, User};

use super::firewall::{eval_with_index, Action, PacketMeta, StateMatch};
use super::frame::{ArpOp, ArpPacket, Frame, FramePayload, Ipv4Packet, TcpFlags, TcpSegment};
use super::net::{Cidr, Mac};
use super::rng::SimRng;
use super::tcp::{AppId, ConnId, ListenerId, SegAction, TcpConn, TcpError, TcpState};
use super::time::SimTime;
use super::topology::{ArpEntry, HardeningProfile, Host, HostId, Interface, Level, Route, Segment, SegmentId};
use super::NetError;

pub type TapId = usize;

/// Knobs that scenarios may tune. Defaults match the documented model.
#[derive(Debug, Clone)]
pub struct WorldConfig {
    pub reconnect_backoff: SimTime,
    pub poison_ttl: SimTime,
    pub arp_timeout: SimTime,
    pub connect_timeout: SimTime,
    pub payload_pad: usize,
    pub tool_access_maintainer: bool,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            reconnect_backoff: SimTime::from_micros(500_000),
            poison_ttl: SimTime::from_micros(1_000_000),
            arp_timeout: SimTime::from_micros(1_000_000),
            connect_timeout: SimTime::from_micros(5_000_000),
            payload_pad: 24,
            tool_access_maintainer: true,
        }
    }
}

/// Robot attribution and wiring facts, filled in by the scenario builder
/// and consumed by attack procedures and goal evaluation.
#[derive(Debug, Clone, Default)]
pub struct Labels {
    pub channel_robot: BTreeMap<String, String>,
    pub controller_robot: BTreeMap<String, String>,
    pub station_robot: BTreeMap<String, String>,
    pub master_host: Option<String>,
    pub master_addr: Option<(Ipv4Addr, u16)>,
    /// Command topics a graph takeover targets, with their robots.
    pub command_topics: BTreeMap<String, String>,
    /// Standalone controllers directly commandable over the process
    /// network: host name -> command endpoint address.
    pub direct_controllers: BTreeMap<String, Ipv4Addr>,
    /// State topics whose delivery rate disruption is measured against.
    pub monitored_channels: Vec<String>,
    pub nominal_rate_hz: f64,
    /// Segment the in-world attacker sniffs.
    pub process_segment: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub t: SimTime,
    pub kind: String,
    pub host: String,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DropRecord {
    pub t: SimTime,
    pub gateway: HostId,
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub dst_port: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForeignRx {
    pub t: SimTime,
    pub host: HostId,
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub claimed: bool,
}

/// One application-level frame, logged at a publisher (tx) or receiver (rx).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameLogEntry {
    pub t: SimTime,
    pub host: HostId,
    pub channel: String,
    pub robot: Option<String>,
    pub counter: Option<u64>,
    pub payload: Vec<u8>,
    pub local: (Ipv4Addr, u16),
    pub remote: (Ipv4Addr, u16),
    /// Absolute TCP sequence number of the frame's length prefix.
    pub seq: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoisonReceipt {
    pub victim: String,
    pub impersonated_ip: Ipv4Addr,
    pub attacker_mac: Mac,
    pub at: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpoofedSegment {
    pub src: (Ipv4Addr, u16),
    pub dst: (Ipv4Addr, u16),
    pub seq: u32,
    pub ack: u32,
    pub flags: TcpFlags,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reach {
    Open,
    Refused,
    Filtered,
    Timeout,
    Unreachable,
}

/// Application behavior attached to sockets and timers. Implementations must
/// not pump the event loop; they react to events and issue non-blocking
/// world calls.
pub trait App {
    fn handle(&mut self, world: &mut World, id: AppId, event: AppEvent);
    fn as_any(&mut self) -> Option<&mut dyn std::any::Any> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AppEvent {
    Established { conn: ConnId },
    ConnectFailed { conn: ConnId, error: TcpError },
    Accepted { listener: ListenerId, conn: ConnId },
    Readable { conn: ConnId },
    PeerClosed { conn: ConnId },
    Closed { conn: ConnId, reset: bool },
    Timer { tag: u64 },
    RawIp { packet: Ipv4Packet },
}

pub struct Listener {
    pub host: HostId,
    pub ip: Ipv4Addr,
    pub port: u16,
    pub app: AppId,
    pub gate: Option<AcceptGate>,
}

/// Endpoint-protection accept policy: sources outside the learned set are
/// refused and raise an IDS alert.
#[derive(Debug, Clone)]
pub struct AcceptGate {
    pub allowed: BTreeSet<Ipv4Addr>,
    pub label: String,
}

pub struct Tap {
    pub name: String,
    pub segment: SegmentId,
    pub records: Vec<CaptureRecord>,
    classifier: StreamClassifier,
}

struct AppSlot {
    #[allow(dead_code)]
    host: HostId,
    state: Option<Box<dyn App>>,
}

enum Event {
    Frame { segment: SegmentId, frame: Frame },
    Loopback { host: HostId, packet: Ipv4Packet },
    AppTimer { app: AppId, tag: u64 },
    ConnTimeout { conn: ConnId },
    ArpTimeout { host: HostId, ip: Ipv4Addr },
}

type NormFlow = ((Ipv4Addr, u16), (Ipv4Addr, u16));

fn norm_flow(a: (Ipv4Addr, u16), b: (Ipv4Addr, u16)) -> NormFlow {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

pub struct World {
    pub now: SimTime,
    queue: BTreeMap<(SimTime, u64), Event>,
    next_event_seq: u64,
    pub rng: SimRng,
    pub config: WorldConfig,
    pub labels: Labels,

    segments: Vec<Segment>,
    seg_by_name: BTreeMap<String, SegmentId>,
    hosts: Vec<Host>,
    host_by_name: BTreeMap<String, HostId>,
    mac_owner: BTreeMap<Mac, (HostId, usize)>,
    ip_owner: BTreeMap<Ipv4Addr, (HostId, usize)>,
    next_mac: u32,

    conns: Vec<TcpConn>,
    conn_tuples: BTreeMap<(HostId, (Ipv4Addr, u16), (Ipv4Addr, u16)), ConnId>,
    conn_listener: BTreeMap<ConnId, ListenerId>,
    listeners: Vec<Listener>,
    listener_index: BTreeMap<(HostId, Ipv4Addr, u16), ListenerId>,

    apps: Vec<AppSlot>,
    wakeups: VecDeque<(AppId, AppEvent)>,
    foreign_claims: BTreeMap<(HostId, Ipv4Addr), AppId>,

    pending_arp: BTreeMap<(HostId, Ipv4Addr), Vec<Ipv4Packet>>,
    gw_flows: BTreeSet<(HostId, NormFlow)>,

    taps: Vec<Tap>,
    pub events: Vec<LogRecord>,
    pub drops: Vec<DropRecord>,
    pub foreign_rx: Vec<ForeignRx>,
    pub rx_log: Vec<FrameLogEntry>,
    pub tx_log: Vec<FrameLogEntry>,
    pub sessions: Vec<PrincipalSession>,
}

impl World {
    pub fn new(seed: u64) -> World {
        World {
            now: SimTime::ZERO,
            queue: BTreeMap::new(),
            next_event_seq: 0,
            rng: SimRng::new(seed),
            config: WorldConfig::default(),
            labels: Labels::default(),
            segments: Vec::new(),
            seg_by_name: BTreeMap::new(),
            hosts: Vec::new(),
            host_by_name: BTreeMap::new(),
            mac_owner: BTreeMap::new(),
            ip_owner: BTreeMap::new(),
            next_mac: 1,
            conns: Vec::new(),
            conn_tuples: BTreeMap::new(),
            conn_listener: BTreeMap::new(),
            listeners: Vec::new(),
            listener_index: BTreeMap::new(),
            apps: Vec::new(),
            wakeups: VecDeque::new(),
            foreign_claims: BTreeMap::new(),
            pending_arp: BTreeMap::new(),
            gw_flows: BTreeSet::new(),
            taps: Vec::new(),
            events: Vec::new(),
            drops: Vec::new(),
            foreign_rx: Vec::new(),
            rx_log: Vec::new(),
            tx_log: Vec::new(),
            sessions: Vec::new(),
        }
    }

    // --- topology -----------------------------------------------------

    pub fn add_segment(&mut self, name: &str, level: Level, subnet: Cidr) -> Result<SegmentId, NetError> {
        if self.seg_by_name.contains_key(name) {
            return Err(NetError::DuplicateName(name.to_string()));
        }
        for seg in &self.segments {
            if seg.subnet.overlaps(&subnet) {
                return Err(NetError::OverlappingSubnet(format!(
                    "{} overlaps {}",
                    subnet, seg.subnet
                )));
            }
        }
        let id = self.segments.len();
        self.segments.push(Segment {
            name: name.to_string(),
            level,
            subnet,
        });
        self.seg_by_name.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn add_host(
        &mut self,
        name: &str,
        interfaces: &[(&str, Ipv4Addr)],
        hardening: HardeningProfile,
    ) -> Result<HostId, NetError> {
        if self.host_by_name.contains_key(name) {
            return Err(NetError::DuplicateName(name.to_string()));
        }
        let mut ifaces = Vec::new();
        let mut seen_segments = BTreeSet::new();
        for (seg_name, ip) in interfaces {
            let seg = *self
                .seg_by_name
                .get(*seg_name)
                .ok_or_else(|| NetError::NoSuchSegment(seg_name.to_string()))?;
            if !self.segments[seg].subnet.contains(*ip) {
                return Err(NetError::AddressOutOfSubnet(format!(
                    "{} not in {} ({})",
                    ip, self.segments[seg].subnet, seg_name
                )));
            }
            if !seen_segments.insert(seg) {
                return Err(NetError::DuplicateInterface(format!(
                    "{} has two interfaces on {}",
                    name, seg_name
                )));
            }
            if self.ip_owner.contains_key(ip) {
                return Err(NetError::DuplicateAddress(ip.to_string()));
            }
            let mac = Mac::from_index(self.next_mac);
            self.next_mac += 1;
            ifaces.push(Interface {
                segment: seg,
                ip: *ip,
                mac,
            });
        }
        let id = self.hosts.len();
        for (idx, iface) in ifaces.iter().enumerate() {
            self.mac_owner.insert(iface.mac, (id, idx));
            self.ip_owner.insert(iface.ip, (id, idx));
        }
        self.hosts.push(Host {
            name: name.to_string(),
            interfaces: ifaces,
            arp_table: BTreeMap::new(),
            hardening,
            routes: Vec::new(),
            router: false,
            next_port: 32768,
        });
        self.host_by_name.insert(name.to_string(), id);
        Ok(id)
    }

    /// A gateway host: forwards packets between its segments through its
    /// hardening ruleset.
    pub fn add_firewall(
        &mut self,
        name: &str,
        interfaces: &[(&str, Ipv4Addr)],
        rules: Vec<super::firewall::FirewallRule>,
    ) -> Result<HostId, NetError> {
        let hardening = HardeningProfile {
            firewall_rules: rules,
            ..HardeningProfile::default()
        };
        let id = self.add_host(name, interfaces, hardening)?;
        self.hosts[id].router = true;
        Ok(id)
    }

    pub fn add_route(&mut self, host: HostId, dest: Cidr, via: Ipv4Addr) {
        self.hosts[host].routes.push(Route { dest, via });
    }

    pub fn host_id(&self, name: &str) -> Option<HostId> {
        self.host_by_name.get(name).copied()
    }

    pub fn host(&self, id: HostId) -> &Host {
        &self.hosts[id]
    }

    pub fn host_mut(&mut self, id: HostId) -> &mut Host {
        &mut self.hosts[id]
    }

    pub fn hosts(&self) -> &[Host] {
        &self.hosts
    }

    pub fn segment_id(&self, name: &str) -> Option<SegmentId> {
        self.seg_by_name.get(name).copied()
    }

    pub fn segment(&self, id: SegmentId) -> &Segment {
        &self.segments[id]
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn host_of_ip(&self, ip: Ipv4Addr) -> Option<HostId> {
        self.ip_owner.get(&ip).map(|(h, _)| *h)
    }

    pub fn true_mac_of(&self, ip: Ipv4Addr) -> Option<Mac> {
        self.ip_owner
            .get(&ip)
            .map(|(h, i)| self.hosts[*h].interfaces[*i].mac)
    }

    pub fn share_segment(&self, a: HostId, b: HostId) -> bool {
        self.hosts[a]
            .interfaces
            .iter()
            .any(|ia| self.hosts[b].interfaces.iter().any(|ib| ia.segment == ib.segment))
    }

    pub fn alloc_port(&mut self, host: HostId) -> u16 {
        let p = self.hosts[host].next_port;
        self.hosts[host].next_port += 1;
        p
    }

    // --- logging --------------------------------------------------------

    pub fn log(&mut self, kind: &str, host: &str, detail: String) -> usize {
        self.events.push(LogRecord {
            t: self.now,
            kind: kind.to_string(),
            host: host.to_string(),
            detail,
        });
        self.events.len() - 1
    }

    pub fn add_session(&mut self, host: HostId, user: User, origin: Origin) -> SessionId {
        let session = PrincipalSession {
            host: self.hosts[host].name.clone(),
            user,
            origin,
        };
        self.log(
            "session",
            &session.host.clone(),
            format!("{} session via {}", user, origin),
        );
        self.sessions.push(session);
        self.sessions.len() - 1
    }

    pub fn session(&self, id: SessionId) -> &PrincipalSession {
        &self.sessions[id]
    }

    pub fn host_sessions(&self, host: HostId) -> Vec<&PrincipalSession> {
        let name = &self.hosts[host].name;
        self.sessions.iter().filter(|s| &s.host == name).collect()
    }

    // --- scheduler --------------------------------------------------------

    fn push_event(&mut self, at: SimTime, event: Event) {
        let key = (at, self.next_event_seq);
        self.next_event_seq += 1;
        self.queue.insert(key, event);
    }

    pub fn schedule_app_timer(&mut self, app: AppId, delay: SimTime, tag: u64) {
        self.push_event(self.now + delay, Event::AppTimer { app, tag });
    }

    /// Processes one event. Returns false when the queue is empty.
    pub fn step(&mut self) -> bool {
        let (key, event) = match self.queue.iter().next() {
            Some((k, _)) => (*k, ()),
            None => return false,
        };
        let _ = event;
        let event = self.queue.remove(&key).unwrap();
        self.now = key.0;
        self.dispatch_event(event);
        self.drain_wakeups();
        true
    }

    /// Runs every event scheduled at or before the current instant —
    /// zero-latency cascades complete without advancing time.
    pub fn settle(&mut self) {
        while let Some((key, _)) = self.queue.iter().next() {
            if key.0 > self.now {
                break;
            }
            if !self.step() {
                break;
            }
        }
    }

    pub fn run_until(&mut self, t: SimTime) {
        loop {
            match self.queue.iter().next() {
                Some((key, _)) if key.0 <= t => {
                    self.step();
                }
                _ => break,
            }
        }
        if self.now < t {
            self.now = t;
        }
    }

    pub fn run_for(&mut self, dt: SimTime) {
        let target = self.now + dt;
        self.run_until(target);
    }

    fn dispatch_event(&mut self, event: Event) {
        match event {
            Event::Frame { segment, frame } => self.deliver_frame(segment, frame),
            Event::Loopback { host, packet } => self.ip_input(host, packet),
            Event::AppTimer { app, tag } => self.wakeups.push_back((app, AppEvent::Timer { tag })),
            Event::ConnTimeout { conn } => self.conn_timeout(conn),
            Event::ArpTimeout { host, ip } => {
                if let Some(queued) = self.pending_arp.remove(&(host, ip)) {
                    if !queued.is_empty() {
                        let name = self.hosts[host].name.clone();
                        self.log(
                            "arp-timeout",
                            &name,
                            format!("{} unresolved, {} packets dropped", ip, queued.len()),
                        );
                    }
                }
            }
        }
    }

    fn drain_wakeups(&mut self) {
        while let Some((app, event)) = self.wakeups.pop_front() {
            let mut state = match self.apps[app].state.take() {
                Some(s) => s,
                None => continue,
            };
            state.handle(self, app, event);
            self.apps[app].state = Some(state);
        }
    }

    // --- apps & sockets --------------------------------------------------

    pub fn add_app(&mut self, host: HostId, app: Box<dyn App>) -> AppId {
        self.apps.push(AppSlot {
            host,
            state: Some(app),
        });
        self.apps.len() - 1
    }

    pub fn apps_len(&self) -> usize {
        self.apps.len()
    }

    pub fn app_as<T: 'static>(&mut self, app: AppId) -> Option<&mut T> {
        self.apps[app]
            .state
            .as_mut()?
            .as_any()?
            .downcast_mut::<T>()
    }

    pub fn listen(&mut self, app: AppId, host: HostId, ip: Ipv4Addr, port: u16) -> ListenerId {
        self.listen_gated(app, host, ip, port, None)
    }

    pub fn listen_gated(
        &mut self,
        app: AppId,
        host: HostId,
        ip: Ipv4Addr,
        port: u16,
        gate: Option<AcceptGate>,
    ) -> ListenerId {
        let id = self.listeners.len();
        self.listeners.push(Listener {
            host,
            ip,
            port,
            app,
            gate,
        });
        self.listener_index.insert((host, ip, port), id);
        id
    }

    pub fn listener(&self, id: ListenerId) -> &Listener {
        &self.listeners[id]
    }

    pub fn set_listener_gate(&mut self, id: ListenerId, gate: Option<AcceptGate>) {
        self.listeners[id].gate = gate;
    }

    /// Initiates a connection; the outcome arrives as an app event.
    pub fn connect(&mut self, app: AppId, host: HostId, dst: Ipv4Addr, dst_port: u16) -> ConnId {
        let src_ip = self.egress_ip(host, dst);
        let src_port = self.alloc_port(host);
        let isn = self.rng.next_u32();
        let conn_id = self.conns.len();
        let local = (src_ip.unwrap_or(Ipv4Addr::UNSPECIFIED), src_port);
        self.conns.push(TcpConn {
            host,
            local,
            remote: (dst, dst_port),
            state: TcpState::SynSent,
            snd_nxt: isn.wrapping_add(1),
            rcv_nxt: 0,
            rcv_start: 0,
            recv_buf: Vec::new(),
            app,
            established_at: None,
        });
        match src_ip {
            Some(src_ip) => {
                self.conn_tuples
                    .insert((host, (src_ip, src_port), (dst, dst_port)), conn_id);
                let packet = Ipv4Packet {
                    src: src_ip,
                    dst,
                    tcp: TcpSegment {
                        src_port,
                        dst_port,
                        seq: isn,
                        ack: 0,
                        flags: TcpFlags::SYN,
                        payload: Vec::new(),
                    },
                };
                self.route_and_emit(host, packet);
                let timeout = self.config.connect_timeout;
                self.push_event(self.now + timeout, Event::ConnTimeout { conn: conn_id });
            }
            None => {
                // No route at all; fail immediately.
                self.conns[conn_id].state = TcpState::Closed;
                self.wakeups.push_back((
                    app,
                    AppEvent::ConnectFailed {
                        conn: conn_id,
                        error: TcpError::HandshakeTimeout,
                    },
                ));
            }
        }
        conn_id
    }

    pub fn send(&mut self, conn: ConnId, payload: &[u8]) -> Result<(), TcpError> {
        let seg = self.conns[conn].make_data(payload.to_vec())?;
        let (host, local, remote) = {
            let c = &self.conns[conn];
            (c.host, c.local, c.remote)
        };
        let packet = Ipv4Packet {
            src: local.0,
            dst: remote.0,
            tcp: seg,
        };
        self.route_and_emit(host, packet);
        Ok(())
    }

    pub fn close(&mut self, conn: ConnId) {
        let fin = self.conns[conn].make_fin();
        match fin {
            Some(seg) => {
                let (host, local, remote) = {
                    let c = &self.conns[conn];
                    (c.host, c.local, c.remote)
                };
                let packet = Ipv4Packet {
                    src: local.0,
                    dst: remote.0,
                    tcp: seg,
                };
                self.route_and_emit(host, packet);
            }
            None => {
                // Not in a closable state; abort silently if still opening.
                let c = &mut self.conns[conn];
                if matches!(c.state, TcpState::SynSent | TcpState::SynReceived) {
                    c.state = TcpState::Closed;
                    let key = (c.host, c.local, c.remote);
                    self.conn_tuples.remove(&key);
                }
            }
        }
    }

    pub fn drain_recv(&mut self, conn: ConnId) -> Vec<u8> {
        std::mem::take(&mut self.conns[conn].recv_buf)
    }

    pub fn conn(&self, id: ConnId) -> &TcpConn {
        &self.conns[id]
    }

    pub fn conns_len(&self) -> usize {
        self.conns.len()
    }

    /// The opposite endpoint of an established pair, if simulated locally.
    pub fn conn_peer(&self, id: ConnId) -> Option<ConnId> {
        let c = &self.conns[id];
        let host = self.host_of_ip(c.remote.0)?;
        self.conn_tuples.get(&(host, c.remote, c.local)).copied()
    }

    pub fn claim_foreign_ip(&mut self, app: AppId, host: HostId, ip: Ipv4Addr) {
        self.foreign_claims.insert((host, ip), app);
    }

    /// Whether something is listening at an address the world knows about.
    pub fn has_listener_at(&self, ip: Ipv4Addr, port: u16) -> bool {
        match self.host_of_ip(ip) {
            Some(host) => self.listener_index.contains_key(&(host, ip, port)),
            None => false,
        }
    }

    // --- taps ------------------------------------------------------------

    pub fn add_tap(&mut self, segment_name: &str) -> Result<TapId, DissectError> {
        let segment = self
            .segment_id(segment_name)
            .ok_or_else(|| DissectError::NoSuchSegment(segment_name.to_string()))?;
        self.taps.push(Tap {
            name: format!("{}#{}", segment_name, self.taps.len()),
            segment,
            records: Vec::new(),
            classifier: StreamClassifier::new(),
        });
        Ok(self.taps.len() - 1)
    }

    pub fn tap_records(&self, tap: TapId) -> &[CaptureRecord] {
        &self.taps[tap].records
    }

    pub fn tap_name(&self, tap: TapId) -> &str {
        &self.taps[tap].name
    }

    pub fn taps_len(&self) -> usize {
        self.taps.len()
    }

    fn tap_copy(&mut self, segment: SegmentId, frame: &Frame) {
        let now = self.now;
        for tap in &mut self.taps {
            if tap.segment != segment {
                continue;
            }
            let record = match &frame.payload {
                FramePayload::Arp(arp) => CaptureRecord {
                    t: now,
                    src_ip: arp.sender_ip,
                    dst_ip: arp.target_ip,
                    src_port: 0,
                    dst_port: 0,
                    flags: TcpFlags::NONE,
                    seq: 0,
                    ack: 0,
                    payload: arp.to_bytes(),
                    class: Classification::Arp,
                },
                FramePayload::Ipv4(pkt) => {
                    let flow = FlowKey {
                        src: (pkt.src, pkt.tcp.src_port),
                        dst: (pkt.dst, pkt.tcp.dst_port),
                    };
                    let class = tap.classifier.classify(flow, &pkt.tcp.payload);
                    CaptureRecord {
                        t: now,
                        src_ip: pkt.src,
                        dst_ip: pkt.dst,
                        src_port: pkt.tcp.src_port,
                        dst_port: pkt.tcp.dst_port,
                        flags: pkt.tcp.flags,
                        seq: pkt.tcp.seq,
                        ack: pkt.tcp.ack,
                        payload: pkt.tcp.payload.clone(),
                        class,
                    }
                }
            };
            tap.records.push(record);
        }
    }

    // --- L2 / L3 pipeline -------------------------------------------------

    fn emit_frame(&mut self, segment: SegmentId, frame: Frame) {
        self.tap_copy(segment, &frame);
        self.push_event(self.now, Event::Frame { segment, frame });
    }

    fn deliver_frame(&mut self, segment: SegmentId, frame: Frame) {
        if frame.dst_mac == Mac::BROADCAST {
            let receivers: Vec<HostId> = (0..self.hosts.len())
                .filter(|&h| {
                    self.hosts[h].interfaces.iter().any(|i| i.segment == segment)
                        && !self.hosts[h].interfaces.iter().any(|i| i.mac == frame.src_mac)
                })
                .collect();
            for host in receivers {
                self.handle_frame(host, segment, frame.clone());
            }
        } else if let Some(&(host, iface)) = self.mac_owner.get(&frame.dst_mac) {
            if self.hosts[host].interfaces[iface].segment == segment {
                self.handle_frame(host, segment, frame);
            }
        }
        // Unknown destination MACs fall off the wire.
    }

    fn handle_frame(&mut self, host: HostId, segment: SegmentId, frame: Frame) {
        match frame.payload {
            FramePayload::Arp(arp) => self.arp_input(host, segment, frame.src_mac, arp),
            FramePayload::Ipv4(packet) => {
                if self.hosts[host].has_ip(packet.dst) {
                    self.ip_input(host, packet);
                } else if self.hosts[host].router {
                    self.forward(host, packet);
                } else {
                    let claimed = self.foreign_claims.get(&(host, packet.dst)).copied();
                    self.foreign_rx.push(ForeignRx {
                        t: self.now,
                        host,
                        src: packet.src,
                        dst: packet.dst,
                        claimed: claimed.is_some(),
                    });
                    if let Some(app) = claimed {
                        self.wakeups.push_back((app, AppEvent::RawIp { packet }));
                    }
                }
            }
        }
    }

    fn arp_input(&mut self, host: HostId, segment: SegmentId, _src_mac: Mac, arp: ArpPacket) {
        match arp.op {
            ArpOp::Request => {
                // Cache the requester, then answer if the target IP is ours
                // on this segment.
                self.hosts[host].arp_table.insert(
                    arp.sender_ip,
                    ArpEntry {
                        mac: arp.sender_mac,
                        expires: None,
                        unsolicited: false,
                    },
                );
                let own = self.hosts[host]
                    .interfaces
                    .iter()
                    .find(|i| i.segment == segment && i.ip == arp.target_ip)
                    .map(|i| i.mac);
                if let Some(my_mac) = own {
                    let reply = Frame {
                        src_mac: my_mac,
                        dst_mac: arp.sender_mac,
                        payload: FramePayload::Arp(ArpPacket {
                            op: ArpOp::Reply,
                            sender_mac: my_mac,
                            sender_ip: arp.target_ip,
                            target_mac: arp.sender_mac,
                            target_ip: arp.sender_ip,
                        }),
                    };
                    self.emit_frame(segment, reply);
                }
            }
            ArpOp::Reply => {
                let solicited = self.pending_arp.contains_key(&(host, arp.sender_ip));
                let expires = if solicited {
                    None
                } else {
                    Some(self.now + self.config.poison_ttl)
                };
                self.hosts[host].arp_table.insert(
                    arp.sender_ip,
                    ArpEntry {
                        mac: arp.sender_mac,
                        expires,
                        unsolicited: !solicited,
                    },
                );
                if let Some(queued) = self.pending_arp.remove(&(host, arp.sender_ip)) {
                    for packet in queued {
                        self.emit_ip_via(host, arp.sender_ip, packet);
                    }
                }
            }
        }
    }

    fn lookup_arp(&mut self, host: HostId, ip: Ipv4Addr) -> Option<Mac> {
        let now = self.now;
        let entry = self.hosts[host].arp_table.get(&ip)?.clone();
        if let Some(expiry) = entry.expires {
            if now >= expiry {
                self.hosts[host].arp_table.remove(&ip);
                return None;
            }
        }
        Some(entry.mac)
    }

    /// Picks the source address a host would use toward a destination.
    pub fn egress_ip(&self, host: HostId, dst: Ipv4Addr) -> Option<Ipv4Addr> {
        let h = &self.hosts[host];
        if let Some(iface) = h
            .interfaces
            .iter()
            .find(|i| self.segments[i.segment].subnet.contains(dst))
        {
            return Some(iface.ip);
        }
        let route = h.routes.iter().find(|r| r.dest.contains(dst))?;
        let via = route.via;
        h.interfaces
            .iter()
            .find(|i| self.segments[i.segment].subnet.contains(via))
            .map(|i| i.ip)
    }

    fn next_hop(&self, host: HostId, dst: Ipv4Addr) -> Option<(usize, Ipv4Addr)> {
        let h = &self.hosts[host];
        if let Some((idx, _)) = h
            .interfaces
            .iter()
            .enumerate()
            .find(|(_, i)| self.segments[i.segment].subnet.contains(dst))
        {
            return Some((idx, dst));
        }
        let route = h.routes.iter().find(|r| r.dest.contains(dst))?;
        let via = route.via;
        h.interfaces
            .iter()
            .enumerate()
            .find(|(_, i)| self.segments[i.segment].subnet.contains(via))
            .map(|(idx, _)| (idx, via))
    }

    /// Routes a packet out of a host: loopback, direct, or via gateway,
    /// queueing behind ARP resolution when needed.
    pub fn route_and_emit(&mut self, host: HostId, packet: Ipv4Packet) {
        if self.hosts[host].has_ip(packet.dst) {
            self.push_event(self.now, Event::Loopback { host, packet });
            return;
        }
        let (_, hop) = match self.next_hop(host, packet.dst) {
            Some(v) => v,
            None => {
                let name = self.hosts[host].name.clone();
                self.log("no-route", &name, format!("{} -> {}", packet.src, packet.dst));
                return;
            }
        };
        self.emit_ip_via(host, hop, packet);
    }

    fn emit_ip_via(&mut self, host: HostId, hop: Ipv4Addr, packet: Ipv4Packet) {
        let iface_idx = match self.hosts[host]
            .interfaces
            .iter()
            .position(|i| self.segments[i.segment].subnet.contains(hop))
        {
            Some(i) => i,
            None => return,
        };
        let (segment, src_mac, _ip) = {
            let iface = &self.hosts[host].interfaces[iface_idx];
            (iface.segment, iface.mac, iface.ip)
        };
        match self.lookup_arp(host, hop) {
            Some(dst_mac) => {
                self.emit_frame(
                    segment,
                    Frame {
                        src_mac,
                        dst_mac,
                        payload: FramePayload::Ipv4(packet),
                    },
                );
            }
            None => {
                let newly = !self.pending_arp.contains_key(&(host, hop));
                self.pending_arp.entry((host, hop)).or_default().push(packet);
                if newly {
                    self.send_arp_request(host, iface_idx, hop);
                }
            }
        }
    }

    fn send_arp_request(&mut self, host: HostId, iface_idx: usize, target: Ipv4Addr) {
        let (segment, mac, ip) = {
            let iface = &self.hosts[host].interfaces[iface_idx];
            (iface.segment, iface.mac, iface.ip)
        };
        let frame = Frame {
            src_mac: mac,
            dst_mac: Mac::BROADCAST,
            payload: FramePayload::Arp(ArpPacket {
                op: ArpOp::Request,
                sender_mac: mac,
                sender_ip: ip,
                target_mac: Mac([0; 6]),
                target_ip: target,
            }),
        };
        self.emit_frame(segment, frame);
        let timeout = self.config.arp_timeout;
        self.push_event(self.now + timeout, Event::ArpTimeout { host, ip: target });
    }

    fn forward(&mut self, gw: HostId, packet: Ipv4Packet) {
        let meta = PacketMeta {
            src: packet.src,
            dst: packet.dst,
            dst_port: packet.tcp.dst_port,
        };
        let flow = norm_flow(
            (packet.src, packet.tcp.src_port),
            (packet.dst, packet.tcp.dst_port),
        );
        let established = self.gw_flows.contains(&(gw, flow));
        let state = if established {
            super::firewall::ConnState::Established
        } else {
            super::firewall::ConnState::New
        };
        let rules = self.hosts[gw].hardening.firewall_rules.clone();
        match eval_with_index(&rules, &meta, state) {
            (Action::Allow, Some(idx)) => {
                if rules[idx].state == StateMatch::Any {
                    self.gw_flows.insert((gw, flow));
                }
                self.route_and_emit(gw, packet);
            }
            _ => {
                self.drops.push(DropRecord {
                    t: self.now,
                    gateway: gw,
                    src: packet.src,
                    dst: packet.dst,
                    dst_port: packet.tcp.dst_port,
                });
                let name = self.hosts[gw].name.clone();
                self.log(
                    "fw-drop",
                    &name,
                    format!("{} -> {}:{}", packet.src, packet.dst, packet.tcp.dst_port),
                );
            }
        }
    }

    // --- TCP input ----------------------------------------------------------

    fn ip_input(&mut self, host: HostId, packet: Ipv4Packet) {
        let local = (packet.dst, packet.tcp.dst_port);
        let remote = (packet.src, packet.tcp.src_port);
        if let Some(&conn_id) = self.conn_tuples.get(&(host, local, remote)) {
            let actions = self.conns[conn_id].on_segment(&packet.tcp);
            self.apply_actions(conn_id, actions);
            return;
        }
        if packet.tcp.flags.syn && !packet.tcp.flags.ack {
            if let Some(&lid) = self.listener_index.get(&(host, packet.dst, packet.tcp.dst_port)) {
                if let Some(gate) = &self.listeners[lid].gate {
                    if !gate.allowed.contains(&packet.src) {
                        let label = gate.label.clone();
                        let name = self.hosts[host].name.clone();
                        self.log(
                            "ids-alert",
                            &name,
                            format!("{}: unlearned flow from {}", label, packet.src),
                        );
                        self.reply_rst(host, &packet);
                        return;
                    }
                }
                self.accept_syn(host, lid, &packet);
                return;
            }
            self.reply_rst(host, &packet);
            return;
        }
        if !packet.tcp.flags.rst {
            self.reply_rst(host, &packet);
        }
    }

    fn accept_syn(&mut self, host: HostId, lid: ListenerId, packet: &Ipv4Packet) {
        let app = self.listeners[lid].app;
        let isn = self.rng.next_u32();
        let local = (packet.dst, packet.tcp.dst_port);
        let remote = (packet.src, packet.tcp.src_port);
        let conn_id = self.conns.len();
        self.conns.push(TcpConn {
            host,
            local,
            remote,
            state: TcpState::SynReceived,
            snd_nxt: isn.wrapping_add(1),
            rcv_nxt: packet.tcp.seq.wrapping_add(1),
            rcv_start: packet.tcp.seq.wrapping_add(1),
            recv_buf: Vec::new(),
            app,
            established_at: None,
        });
        self.conn_tuples.insert((host, local, remote), conn_id);
        self.conn_listener.insert(conn_id, lid);
        let reply = Ipv4Packet {
            src: local.0,
            dst: remote.0,
            tcp: TcpSegment {
                src_port: local.1,
                dst_port: remote.1,
                seq: isn,
                ack: packet.tcp.seq.wrapping_add(1),
                flags: TcpFlags::syn_ack(),
                payload: Vec::new(),
            },
        };
        self.route_and_emit(host, reply);
    }

    fn reply_rst(&mut self, host: HostId, packet: &Ipv4Packet) {
        let reply = Ipv4Packet {
            src: packet.dst,
            dst: packet.src,
            tcp: TcpSegment {
                src_port: packet.tcp.dst_port,
                dst_port: packet.tcp.src_port,
                seq: packet.tcp.ack,
                ack: packet.tcp.seq.wrapping_add(1),
                flags: TcpFlags::rst(),
                payload: Vec::new(),
            },
        };
        self.route_and_emit(host, reply);
    }

    fn apply_actions(&mut self, conn_id: ConnId, actions: Vec<SegAction>) {
        for action in actions {
            match action {
                SegAction::Emit {
                    flags,
                    seq,
                    ack,
                    payload,
                } => {
                    let (host, local, remote) = {
                        let c = &self.conns[conn_id];
                        (c.host, c.local, c.remote)
                    };
                    let packet = Ipv4Packet {
                        src: local.0,
                        dst: remote.0,
                        tcp: TcpSegment {
                            src_port: local.1,
                            dst_port: remote.1,
                            seq,
                            ack,
                            flags,
                            payload,
                        },
                    };
                    self.route_and_emit(host, packet);
                }
                SegAction::Established => {
                    self.conns[conn_id].established_at = Some(self.now);
                    let app = self.conns[conn_id].app;
                    match self.conn_listener.get(&conn_id).copied() {
                        Some(listener) => self.wakeups.push_back((
                            app,
                            AppEvent::Accepted {
                                listener,
                                conn: conn_id,
                            },
                        )),
                        None => self
                            .wakeups
                            .push_back((app, AppEvent::Established { conn: conn_id })),
                    }
                }
                SegAction::Readable => {
                    let app = self.conns[conn_id].app;
                    self.wakeups
                        .push_back((app, AppEvent::Readable { conn: conn_id }));
                }
                SegAction::PeerClosed => {
                    let app = self.conns[conn_id].app;
                    self.wakeups
                        .push_back((app, AppEvent::PeerClosed { conn: conn_id }));
                }
                SegAction::Closed { reset } => {
                    let key = {
                        let c = &self.conns[conn_id];
                        (c.host, c.local, c.remote)
                    };
                    self.conn_tuples.remove(&key);
                    let app = self.conns[conn_id].app;
                    self.wakeups.push_back((
                        app,
                        AppEvent::Closed {
                            conn: conn_id,
                            reset,
                        },
                    ));
                }
                SegAction::Refused => {
                    let key = {
                        let c = &self.conns[conn_id];
                        (c.host, c.local, c.remote)
                    };
                    self.conn_tuples.remove(&key);
                    let app = self.conns[conn_id].app;
                    self.wakeups.push_back((
                        app,
                        AppEvent::ConnectFailed {
                            conn: conn_id,
                            error: TcpError::ConnectionRefused,
                        },
                    ));
                }
            }
        }
    }

    fn conn_timeout(&mut self, conn_id: ConnId) {
        if self.conns[conn_id].state != TcpState::SynSent {
            return;
        }
        let (host, local, remote) = {
            let c = &self.conns[conn_id];
            (c.host, c.local, c.remote)
        };
        self.conns[conn_id].state = TcpState::Closed;
        self.conn_tuples.remove(&(host, local, remote));
        let filtered = self.drops.iter().any(|d| {
            d.src == local.0 && d.dst == remote.0 && d.dst_port == remote.1
        });
        let error = if filtered {
            TcpError::Filtered
        } else {
            TcpError::HandshakeTimeout
        };
        let app = self.conns[conn_id].app;
        self.wakeups
            .push_back((app, AppEvent::ConnectFailed { conn: conn_id, error }));
    }

    // --- spec-facing blocking operations (drive the loop; not for apps) ---

    /// Resolves a MAC, running the request/reply exchange if needed.
    pub fn arp_resolve(&mut self, host: HostId, target: Ipv4Addr) -> Result<Mac, NetError> {
        if let Some(iface) = self.hosts[host].interface_for_ip(target) {
            return Ok(iface.mac);
        }
        let (iface_idx, hop) = self.next_hop(host, target).ok_or(NetError::Unreachable)?;
        if let Some(mac) = self.lookup_arp(host, hop) {
            return Ok(mac);
        }
        self.pending_arp.entry((host, hop)).or_default();
        self.send_arp_request(host, iface_idx, hop);
        self.settle();
        if let Some(mac) = self.lookup_arp(host, hop) {
            return Ok(mac);
        }
        let deadline = self.now + self.config.arp_timeout;
        self.run_until(deadline);
        self.lookup_arp(host, hop).ok_or(NetError::Timeout)
    }

    /// Sends an unsolicited ARP reply mapping `impersonated_ip` to the
    /// attacker's MAC in the victim's table. Does not pump the loop.
    pub fn arp_poison(
        &mut self,
        attacker: HostId,
        victim: HostId,
        impersonated_ip: Ipv4Addr,
    ) -> Result<PoisonReceipt, NetError> {
        let shared: Vec<SegmentId> = self.hosts[attacker]
            .interfaces
            .iter()
            .filter_map(|ia| {
                self.hosts[victim]
                    .interfaces
                    .iter()
                    .find(|iv| iv.segment == ia.segment)
                    .map(|_| ia.segment)
            })
            .collect();
        if shared.is_empty() {
            return Err(NetError::NotOnSegment);
        }
        let segment = shared
            .iter()
            .copied()
            .find(|&s| self.segments[s].subnet.contains(impersonated_ip))
            .unwrap_or(shared[0]);
        let attacker_mac = self.hosts[attacker].interface_on(segment).unwrap().mac;
        let victim_iface = self.hosts[victim].interface_on(segment).unwrap();
        let (victim_mac, victim_ip) = (victim_iface.mac, victim_iface.ip);
        let frame = Frame {
            src_mac: attacker_mac,
            dst_mac: victim_mac,
            payload: FramePayload::Arp(ArpPacket {
                op: ArpOp::Reply,
                sender_mac: attacker_mac,
                sender_ip: impersonated_ip,
                target_mac: victim_mac,
                target_ip: victim_ip,
            }),
        };
        self.emit_frame(segment, frame);
        Ok(PoisonReceipt {
            victim: self.hosts[victim].name.clone(),
            impersonated_ip,
            attacker_mac,
            at: self.now,
        })
    }

    /// Crafts a raw segment with forged endpoints. The attacker must be
    /// on-path: sharing a segment with either endpoint, or inserted by
    /// poisoning. Never a silent no-op.
    pub fn inject_segment(
        &mut self,
        attacker: HostId,
        spoofed: SpoofedSegment,
    ) -> Result<(), NetError> {
        let src_host = self.host_of_ip(spoofed.src.0);
        let dst_host = self.host_of_ip(spoofed.dst.0);
        let on_path = src_host.map_or(false, |h| self.share_segment(attacker, h))
            || dst_host.map_or(false, |h| self.share_segment(attacker, h))
            || self.foreign_claims.contains_key(&(attacker, spoofed.src.0))
            || self.foreign_claims.contains_key(&(attacker, spoofed.dst.0));
        if !on_path {
            return Err(NetError::OffPath);
        }
        let packet = Ipv4Packet {
            src: spoofed.src.0,
            dst: spoofed.dst.0,
            tcp: TcpSegment {
                src_port: spoofed.src.1,
                dst_port: spoofed.dst.1,
                seq: spoofed.seq,
                ack: spoofed.ack,
                flags: spoofed.flags,
                payload: spoofed.payload,
            },
        };
        // Prefer direct L2 delivery on a segment shared with the target.
        if let Some(dst_host) = dst_host {
            for ia in &self.hosts[attacker].interfaces {
                if let Some(iv) = self.hosts[dst_host]
                    .interfaces
                    .iter()
                    .find(|iv| iv.segment == ia.segment)
                {
                    let frame = Frame {
                        src_mac: ia.mac,
                        dst_mac: iv.mac,
                        payload: FramePayload::Ipv4(packet),
                    };
                    let segment = ia.segment;
                    self.emit_frame(segment, frame);
                    return Ok(());
                }
            }
        }
        self.route_and_emit(attacker, packet);
        Ok(())
    }

    /// Re-emits an IP packet toward an explicit MAC on a segment the sender
    /// is attached to. Used by on-path relays.
    pub fn emit_to_mac(&mut self, host: HostId, dst_mac: Mac, packet: Ipv4Packet) {
        let owner = match self.mac_owner.get(&dst_mac) {
            Some(&(h, i)) => self.hosts[h].interfaces[i].segment,
            None => return,
        };
        let src_mac = match self.hosts[host].interface_on(owner) {
            Some(i) => i.mac,
            None => return,
        };
        self.emit_frame(
            owner,
            Frame {
                src_mac,
                dst_mac,
                payload: FramePayload::Ipv4(packet),
            },
        );
    }

    /// Blocking connect for drivers and tests: runs the handshake through
    /// the scheduler and reports the outcome.
    pub fn user_connect(
        &mut self,
        host: HostId,
        dst: Ipv4Addr,
        dst_port: u16,
    ) -> Result<ConnId, TcpError> {
        let app = self.add_app(host, Box::new(UserSock::default()));
        let conn = self.connect(app, host, dst, dst_port);
        self.settle();
        if self.conns[conn].state == TcpState::Established {
            return Ok(conn);
        }
        if let Some(err) = self.user_sock_failure(app) {
            return Err(err);
        }
        let deadline = self.now + self.config.connect_timeout + SimTime::from_micros(1);
        self.run_until(deadline);
        if self.conns[conn].state == TcpState::Established {
            return Ok(conn);
        }
        Err(self.user_sock_failure(app).unwrap_or(TcpError::HandshakeTimeout))
    }

    fn user_sock_failure(&mut self, app: AppId) -> Option<TcpError> {
        let sock = self.app_as::<UserSock>(app)?;
        sock.events.iter().find_map(|e| match e {
            AppEvent::ConnectFailed { error, .. } => Some(*error),
            _ => None,
        })
    }

    /// Opens a listener whose accepted connections are driven by tests.
    pub fn user_listen(&mut self, host: HostId, ip: Ipv4Addr, port: u16) -> ListenerId {
        let app = self.add_app(host, Box::new(UserSock::default()));
        self.listen(app, host, ip, port)
    }

    /// Reachability probe via a real connection attempt.
    pub fn probe_tcp(&mut self, src: HostId, dst: Ipv4Addr, port: u16) -> Reach {
        if self.next_hop(src, dst).is_none() {
            return Reach::Unreachable;
        }
        match self.user_connect(src, dst, port) {
            Ok(conn) => {
                self.close(conn);
                self.settle();
                Reach::Open
            }
            Err(TcpError::ConnectionRefused) => Reach::Refused,
            Err(TcpError::Filtered) => Reach::Filtered,
            Err(_) => Reach::Timeout,
        }
    }
}

/// Minimal event-recording app behind user-driven sockets.
#[derive(Default)]
pub struct UserSock {
    pub events: Vec<AppEvent>,
}

impl App for UserSock {
    fn handle(&mut self, _world: &mut World, _id: AppId, event: AppEvent) {
        self.events.push(event);
    }

    fn as_any(&mut self) -> Option<&mut dyn std::any::Any> {
        Some(self)
    }
}
