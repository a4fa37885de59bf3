//! Node behaviors that live inside the world: the Master, rate-driven
//! publishers, subscribers with command relays, the direct supervisory
//! command link, robot controller services, and reverse-shell endpoints.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use crate::rosgraph::header::{
    decode_header_fields, encode_connection_header, encode_frame, ConnectionHeader, FrameBuffer,
};
use crate::rosgraph::registry::MasterRegistry;
use crate::rosgraph::rpc::{encode_rpc, format_uri, parse_uri, RpcBuffer};
use crate::rosgraph::session::{Origin, User};
use crate::simnet::tcp::{AppId, ConnId, ListenerId};
use crate::simnet::time::SimTime;
use crate::simnet::world::{AcceptGate, App, AppEvent, FrameLogEntry, World};
use crate::simnet::HostId;

pub const MASTER_PORT: u16 = 11311;
pub const CONTROLLER_CMD_PORT: u16 = 30002;
pub const CONTROLLER_MAINT_PORT: u16 = 29999;
pub const LAUNCH_PORT: u16 = 22;

/// Counter base stamped by rogue publishers, far from any honest counter.
pub const FORGED_COUNTER_BASE: u64 = 0xAD00_0000_0000_0000;

pub const EXPLOIT_PAYLOAD: &[u8] = b"exploit:rvd1495";

const INIT: u64 = 1;
const PUB_TICK: u64 = 2;
const RECONNECT: u64 = 3;
const RELAY_RECONNECT: u64 = 4;

pub fn counter_payload(counter: u64, pad: usize) -> Vec<u8> {
    let mut p = Vec::with_capacity(8 + pad);
    p.extend_from_slice(&counter.to_le_bytes());
    p.extend(std::iter::repeat(0xAB).take(pad));
    p
}

pub fn parse_counter(payload: &[u8]) -> Option<u64> {
    payload.get(..8).map(|b| {
        u64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]])
    })
}

/// Spawns an app and arms its INIT timer. Apps build their own listeners
/// and connections when INIT fires, so creation order is the t=0 cascade
/// order.
pub fn spawn(world: &mut World, host: HostId, app: Box<dyn App>) -> AppId {
    let id = world.add_app(host, app);
    world.schedule_app_timer(id, SimTime::ZERO, INIT);
    id
}

// --- master --------------------------------------------------------------

pub struct MasterApp {
    pub host: HostId,
    pub bind_ip: Ipv4Addr,
    pub registry: MasterRegistry,
    server: BTreeMap<ConnId, RpcBuffer>,
    outbox: BTreeMap<ConnId, Vec<u8>>,
}

impl MasterApp {
    pub fn new(host: HostId, bind_ip: Ipv4Addr) -> MasterApp {
        MasterApp {
            host,
            bind_ip,
            registry: MasterRegistry::new(),
            server: BTreeMap::new(),
            outbox: BTreeMap::new(),
        }
    }

    fn uri_reachable(&self, world: &World, uri: &str) -> bool {
        match parse_uri(uri) {
            Some((ip, port)) => world.has_listener_at(ip, port),
            None => false,
        }
    }

    fn handle_request(&mut self, world: &mut World, id: AppId, request: Vec<String>) -> Vec<String> {
        let method = request.first().map(|s| s.as_str()).unwrap_or("");
        let arg = |i: usize| request.get(i).cloned().unwrap_or_default();
        let name = world.host(self.host).name.clone();
        match method {
            "registerPublisher" => {
                let (caller, topic, ty, uri) = (arg(1), arg(2), arg(3), arg(4));
                if !self.uri_reachable(world, &uri) {
                    return vec!["error".into(), "TransportError".into()];
                }
                let (subs, updates) = self.registry.register_publisher(&caller, &topic, &ty, &uri);
                world.log("register", &name, format!("publisher {} on {} at {}", caller, topic, uri));
                for update in updates {
                    self.send_update(world, id, &update.subscriber_uri, &update.topic, &update.publisher_uris);
                }
                let mut resp = vec!["ok".to_string()];
                resp.extend(subs);
                resp
            }
            "registerSubscriber" => {
                let (caller, topic, ty, uri) = (arg(1), arg(2), arg(3), arg(4));
                if !self.uri_reachable(world, &uri) {
                    return vec!["error".into(), "TransportError".into()];
                }
                let pubs = self.registry.register_subscriber(&caller, &topic, &ty, &uri);
                world.log("register", &name, format!("subscriber {} on {} at {}", caller, topic, uri));
                let mut resp = vec!["ok".to_string()];
                resp.extend(pubs);
                resp
            }
            "unregisterPublisher" => {
                let (caller, topic, uri) = (arg(1), arg(2), arg(3));
                let (removed, updates) = self.registry.unregister_publisher(&caller, &topic, &uri);
                world.log("unregister", &name, format!("publisher {} on {}", caller, topic));
                for update in updates {
                    self.send_update(world, id, &update.subscriber_uri, &update.topic, &update.publisher_uris);
                }
                vec!["ok".to_string(), removed.to_string()]
            }
            "unregisterSubscriber" => {
                let (caller, topic, uri) = (arg(1), arg(2), arg(3));
                let removed = self.registry.unregister_subscriber(&caller, &topic, &uri);
                world.log("unregister", &name, format!("subscriber {} on {}", caller, topic));
                vec!["ok".to_string(), removed.to_string()]
            }
            "getSystemState" => {
                let state = self.registry.get_system_state();
                let json = serde_json::to_string(&state).expect("state serializes");
                vec!["ok".to_string(), json]
            }
            _ => vec!["error".to_string(), format!("unknown method {:?}", method)],
        }
    }

    fn send_update(&mut self, world: &mut World, id: AppId, sub_uri: &str, topic: &str, pub_uris: &[String]) {
        let (ip, port) = match parse_uri(sub_uri) {
            Some(v) => v,
            None => return,
        };
        let mut msg = vec!["publisherUpdate".to_string(), topic.to_string()];
        msg.extend(pub_uris.iter().cloned());
        let conn = world.connect(id, self.host, ip, port);
        self.outbox.insert(conn, encode_rpc(&msg));
    }
}

impl App for MasterApp {
    fn handle(&mut self, world: &mut World, id: AppId, event: AppEvent) {
        match event {
            AppEvent::Timer { tag: INIT } => {
                world.listen(id, self.host, self.bind_ip, MASTER_PORT);
            }
            AppEvent::Accepted { conn, .. } => {
                self.server.insert(conn, RpcBuffer::new());
            }
            AppEvent::Readable { conn } => {
                let bytes = world.drain_recv(conn);
                if let Some(buf) = self.server.get_mut(&conn) {
                    buf.push(&bytes);
                    while let Some(request) = self.server.get_mut(&conn).and_then(|b| b.next_record()) {
                        let response = self.handle_request(world, id, request);
                        let _ = world.send(conn, &encode_rpc(&response));
                    }
                }
            }
            AppEvent::Established { conn } => {
                // Fan-out connection came up: push the update and close.
                if let Some(payload) = self.outbox.remove(&conn) {
                    let _ = world.send(conn, &payload);
                    world.close(conn);
                }
            }
            AppEvent::ConnectFailed { conn, .. } => {
                self.outbox.remove(&conn);
            }
            AppEvent::PeerClosed { conn } => {
                world.close(conn);
            }
            AppEvent::Closed { conn, .. } => {
                self.server.remove(&conn);
                self.outbox.remove(&conn);
            }
            _ => {}
        }
    }

    fn as_any(&mut self) -> Option<&mut dyn std::any::Any> {
        Some(self)
    }
}

// --- publisher ----------------------------------------------------------

struct PubConn {
    header_done: bool,
    fb: FrameBuffer,
}

pub struct PublisherApp {
    pub caller_id: String,
    pub topic: String,
    pub type_name: String,
    pub host: HostId,
    pub bind_ip: Ipv4Addr,
    pub rpc_port: u16,
    pub data_port: u16,
    pub period: Option<SimTime>,
    pub counter_base: u64,
    pub robot: Option<String>,
    pub master: (Ipv4Addr, u16),
    counter: u64,
    register_conn: Option<ConnId>,
    rpc_resp: RpcBuffer,
    server_rpc: BTreeMap<ConnId, RpcBuffer>,
    data: BTreeMap<ConnId, PubConn>,
    rpc_listener: Option<ListenerId>,
    data_listener: Option<ListenerId>,
}

impl PublisherApp {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        caller_id: &str,
        topic: &str,
        host: HostId,
        bind_ip: Ipv4Addr,
        rpc_port: u16,
        data_port: u16,
        period: Option<SimTime>,
        counter_base: u64,
        robot: Option<String>,
        master: (Ipv4Addr, u16),
    ) -> PublisherApp {
        PublisherApp {
            caller_id: caller_id.to_string(),
            topic: topic.to_string(),
            type_name: "rosrange/Counter".to_string(),
            host,
            bind_ip,
            rpc_port,
            data_port,
            period,
            counter_base,
            robot,
            master,
            counter: 0,
            register_conn: None,
            rpc_resp: RpcBuffer::new(),
            server_rpc: BTreeMap::new(),
            data: BTreeMap::new(),
            rpc_listener: None,
            data_listener: None,
        }
    }

    pub fn ready_subscribers(&self) -> usize {
        self.data.values().filter(|c| c.header_done).count()
    }

    fn header(&self) -> ConnectionHeader {
        ConnectionHeader::new(&[
            ("callerid", &self.caller_id),
            ("topic", &self.topic),
            ("type", &self.type_name),
            ("md5sum", "c0un73rc0un73rc0un73rc0un73r0000"),
        ])
    }

    fn publish_tick(&mut self, world: &mut World) {
        self.counter += 1;
        let counter = self.counter_base.wrapping_add(self.counter);
        let payload = counter_payload(counter, world.config.payload_pad);
        let wire = encode_frame(&payload);
        let conns: Vec<ConnId> = self
            .data
            .iter()
            .filter(|(_, c)| c.header_done)
            .map(|(&id, _)| id)
            .collect();
        for conn in conns {
            let _ = world.send(conn, &wire);
        }
        world.tx_log.push(FrameLogEntry {
            t: world.now,
            host: self.host,
            channel: self.topic.clone(),
            robot: self.robot.clone(),
            counter: Some(counter),
            payload,
            local: (self.bind_ip, self.data_port),
            remote: (Ipv4Addr::UNSPECIFIED, 0),
            seq: 0,
        });
    }
}

impl App for PublisherApp {
    fn handle(&mut self, world: &mut World, id: AppId, event: AppEvent) {
        match event {
            AppEvent::Timer { tag: INIT } => {
                self.rpc_listener = Some(world.listen(id, self.host, self.bind_ip, self.rpc_port));
                self.data_listener = Some(world.listen(id, self.host, self.bind_ip, self.data_port));
                let conn = world.connect(id, self.host, self.master.0, self.master.1);
                self.register_conn = Some(conn);
                if let Some(period) = self.period {
                    world.schedule_app_timer(id, period, PUB_TICK);
                }
            }
            AppEvent::Timer { tag: PUB_TICK } => {
                self.publish_tick(world);
                if let Some(period) = self.period {
                    world.schedule_app_timer(id, period, PUB_TICK);
                }
            }
            AppEvent::Established { conn } if Some(conn) == self.register_conn => {
                let uri = format_uri(self.bind_ip, self.rpc_port);
                let req = vec![
                    "registerPublisher".to_string(),
                    self.caller_id.clone(),
                    self.topic.clone(),
                    self.type_name.clone(),
                    uri,
                ];
                let _ = world.send(conn, &encode_rpc(&req));
            }
            AppEvent::Readable { conn } if Some(conn) == self.register_conn => {
                let bytes = world.drain_recv(conn);
                self.rpc_resp.push(&bytes);
                if self.rpc_resp.next_record().is_some() {
                    world.close(conn);
                    self.register_conn = None;
                }
            }
            AppEvent::Accepted { listener, conn } => {
                if Some(listener) == self.data_listener {
                    self.data.insert(
                        conn,
                        PubConn {
                            header_done: false,
                            fb: FrameBuffer::new(),
                        },
                    );
                } else {
                    self.server_rpc.insert(conn, RpcBuffer::new());
                }
            }
            AppEvent::Readable { conn } => {
                let bytes = world.drain_recv(conn);
                let reply_header = encode_connection_header(&self.header());
                if let Some(state) = self.data.get_mut(&conn) {
                    state.fb.push(&bytes);
                    while let Some(frame) = state.fb.next_frame() {
                        if !state.header_done {
                            if decode_header_fields(&frame).is_ok() {
                                state.header_done = true;
                                let _ = world.send(conn, &reply_header);
                            } else {
                                world.close(conn);
                                break;
                            }
                        }
                    }
                } else if let Some(buf) = self.server_rpc.get_mut(&conn) {
                    buf.push(&bytes);
                    let mut requests = Vec::new();
                    while let Some(req) = buf.next_record() {
                        requests.push(req);
                    }
                    for req in requests {
                        let method = req.first().map(|s| s.as_str()).unwrap_or("");
                        let response = match method {
                            "requestTopic" => {
                                let topic = req.get(1).cloned().unwrap_or_default();
                                let proto = req.get(2).cloned().unwrap_or_default();
                                if topic != self.topic {
                                    vec!["error".to_string(), "NoSuchTopic".to_string()]
                                } else if proto != "TCPROS" {
                                    vec!["error".to_string(), "ProtocolUnsupported".to_string()]
                                } else {
                                    vec![
                                        "ok".to_string(),
                                        self.bind_ip.to_string(),
                                        self.data_port.to_string(),
                                    ]
                                }
                            }
                            "publisherUpdate" => vec!["ok".to_string()],
                            _ => vec!["error".to_string(), "unknown method".to_string()],
                        };
                        let _ = world.send(conn, &encode_rpc(&response));
                    }
                }
            }
            AppEvent::PeerClosed { conn } => {
                world.close(conn);
            }
            AppEvent::Closed { conn, .. } => {
                self.data.remove(&conn);
                self.server_rpc.remove(&conn);
                if Some(conn) == self.register_conn {
                    self.register_conn = None;
                }
            }
            _ => {}
        }
    }

    fn as_any(&mut self) -> Option<&mut dyn std::any::Any> {
        Some(self)
    }
}

// --- subscriber -----------------------------------------------------------

struct SubConn {
    pub_uri: String,
    header_done: bool,
    fb: FrameBuffer,
}

enum PendingRpc {
    Register(RpcBuffer),
    RequestTopic(String, RpcBuffer),
}

/// Relay of received commands to the paired robot controller.
pub struct RelayTarget {
    pub ip: Ipv4Addr,
    pub port: u16,
    /// When set, every relayed counter is shifted — the attacker-owned
    /// station tampering with its own robot's command stream.
    pub tamper_add: Option<u64>,
}

pub struct SubscriberApp {
    pub caller_id: String,
    pub topic: String,
    pub type_name: String,
    pub host: HostId,
    pub bind_ip: Ipv4Addr,
    pub rpc_port: u16,
    pub robot: Option<String>,
    pub master: (Ipv4Addr, u16),
    pub relay: Option<RelayTarget>,
    relay_channel: String,
    pending: BTreeMap<ConnId, PendingRpc>,
    server_rpc: BTreeMap<ConnId, RpcBuffer>,
    connecting: BTreeMap<ConnId, String>,
    data: BTreeMap<ConnId, SubConn>,
    known_pubs: Vec<String>,
    relay_conn: Option<ConnId>,
    relay_ready: bool,
    reconnect_armed: bool,
}

impl SubscriberApp {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        caller_id: &str,
        topic: &str,
        host: HostId,
        bind_ip: Ipv4Addr,
        rpc_port: u16,
        robot: Option<String>,
        master: (Ipv4Addr, u16),
        relay: Option<RelayTarget>,
    ) -> SubscriberApp {
        let relay_channel = robot
            .as_deref()
            .map(|r| format!("/ctl/{}", r))
            .unwrap_or_else(|| "/ctl/unknown".to_string());
        SubscriberApp {
            caller_id: caller_id.to_string(),
            topic: topic.to_string(),
            type_name: "rosrange/Counter".to_string(),
            host,
            bind_ip,
            rpc_port,
            robot,
            master,
            relay,
            relay_channel,
            pending: BTreeMap::new(),
            server_rpc: BTreeMap::new(),
            connecting: BTreeMap::new(),
            data: BTreeMap::new(),
            known_pubs: Vec::new(),
            relay_conn: None,
            relay_ready: false,
            reconnect_armed: false,
        }
    }

    pub fn connected_streams(&self) -> usize {
        self.data.values().filter(|c| c.header_done).count()
    }

    fn own_header(&self) -> ConnectionHeader {
        ConnectionHeader::new(&[
            ("callerid", &self.caller_id),
            ("topic", &self.topic),
            ("type", &self.type_name),
            ("md5sum", "c0un73rc0un73rc0un73rc0un73r0000"),
        ])
    }

    fn relay_header(&self) -> ConnectionHeader {
        ConnectionHeader::new(&[
            ("callerid", &self.caller_id),
            ("topic", &self.relay_channel),
            ("type", &self.type_name),
            ("md5sum", "c0un73rc0un73rc0un73rc0un73r0000"),
        ])
    }

    fn request_topic(&mut self, world: &mut World, id: AppId, pub_uri: &str) {
        if let Some((ip, port)) = parse_uri(pub_uri) {
            let conn = world.connect(id, self.host, ip, port);
            self.pending
                .insert(conn, PendingRpc::RequestTopic(pub_uri.to_string(), RpcBuffer::new()));
        }
    }

    fn connected_uris(&self) -> BTreeSet<String> {
        self.data
            .values()
            .map(|c| c.pub_uri.clone())
            .chain(self.connecting.values().cloned())
            .chain(self.pending.values().filter_map(|p| match p {
                PendingRpc::RequestTopic(uri, _) => Some(uri.clone()),
                _ => None,
            }))
            .collect()
    }

    fn arm_reconnect(&mut self, world: &mut World, id: AppId) {
        if !self.reconnect_armed {
            self.reconnect_armed = true;
            let backoff = world.config.reconnect_backoff;
            world.schedule_app_timer(id, backoff, RECONNECT);
        }
    }

    fn handle_frame(&mut self, world: &mut World, conn: ConnId, offset: u64, frame: Vec<u8>) {
        let counter = parse_counter(&frame);
        let c = world.conn(conn);
        let entry = FrameLogEntry {
            t: world.now,
            host: self.host,
            channel: self.topic.clone(),
            robot: self.robot.clone(),
            counter,
            payload: frame.clone(),
            local: c.local,
            remote: c.remote,
            seq: c.rcv_start.wrapping_add(offset as u32),
        };
        world.rx_log.push(entry);
        if self.relay_ready {
            if let (Some(relay), Some(rc)) = (&self.relay, self.relay_conn) {
                let mut relayed = frame;
                if let (Some(add), Some(c)) = (relay.tamper_add, counter) {
                    relayed[..8].copy_from_slice(&c.wrapping_add(add).to_le_bytes());
                }
                let _ = world.send(rc, &encode_frame(&relayed));
            }
        }
    }
}

impl App for SubscriberApp {
    fn handle(&mut self, world: &mut World, id: AppId, event: AppEvent) {
        match event {
            AppEvent::Timer { tag: INIT } => {
                world.listen(id, self.host, self.bind_ip, self.rpc_port);
                let conn = world.connect(id, self.host, self.master.0, self.master.1);
                self.pending.insert(conn, PendingRpc::Register(RpcBuffer::new()));
                if let Some(relay) = &self.relay {
                    let (ip, port) = (relay.ip, relay.port);
                    let conn = world.connect(id, self.host, ip, port);
                    self.relay_conn = Some(conn);
                }
            }
            AppEvent::Timer { tag: RECONNECT } => {
                self.reconnect_armed = false;
                let connected = self.connected_uris();
                let missing: Vec<String> = self
                    .known_pubs
                    .iter()
                    .filter(|u| !connected.contains(*u))
                    .cloned()
                    .collect();
                for uri in missing {
                    self.request_topic(world, id, &uri);
                }
            }
            AppEvent::Timer { tag: RELAY_RECONNECT } => {
                if let Some(relay) = &self.relay {
                    let (ip, port) = (relay.ip, relay.port);
                    let conn = world.connect(id, self.host, ip, port);
                    self.relay_conn = Some(conn);
                }
            }
            AppEvent::Established { conn } => {
                if Some(conn) == self.relay_conn {
                    let header = encode_connection_header(&self.relay_header());
                    let _ = world.send(conn, &header);
                    self.relay_ready = true;
                } else if let Some(PendingRpc::Register(_)) = self.pending.get(&conn) {
                    let uri = format_uri(self.bind_ip, self.rpc_port);
                    let req = vec![
                        "registerSubscriber".to_string(),
                        self.caller_id.clone(),
                        self.topic.clone(),
                        self.type_name.clone(),
                        uri,
                    ];
                    let _ = world.send(conn, &encode_rpc(&req));
                } else if let Some(PendingRpc::RequestTopic(..)) = self.pending.get(&conn) {
                    let req = vec![
                        "requestTopic".to_string(),
                        self.topic.clone(),
                        "TCPROS".to_string(),
                    ];
                    let _ = world.send(conn, &encode_rpc(&req));
                } else if let Some(uri) = self.connecting.remove(&conn) {
                    // Data connection up: subscriber speaks first.
                    let header = encode_connection_header(&self.own_header());
                    let _ = world.send(conn, &header);
                    self.data.insert(
                        conn,
                        SubConn {
                            pub_uri: uri,
                            header_done: false,
                            fb: FrameBuffer::new(),
                        },
                    );
                }
            }
            AppEvent::ConnectFailed { conn, .. } => {
                if Some(conn) == self.relay_conn {
                    self.relay_conn = None;
                    self.relay_ready = false;
                    let backoff = world.config.reconnect_backoff;
                    world.schedule_app_timer(id, backoff, RELAY_RECONNECT);
                } else {
                    self.pending.remove(&conn);
                    self.connecting.remove(&conn);
                    self.arm_reconnect(world, id);
                }
            }
            AppEvent::Readable { conn } => {
                let bytes = world.drain_recv(conn);
                if let Some(state) = self.data.get_mut(&conn) {
                    state.fb.push(&bytes);
                    loop {
                        let next = self.data.get_mut(&conn).unwrap().fb.next_frame_at();
                        match next {
                            Some((offset, frame)) => {
                                let state = self.data.get_mut(&conn).unwrap();
                                if !state.header_done {
                                    if decode_header_fields(&frame).is_ok() {
                                        state.header_done = true;
                                    } else {
                                        world.close(conn);
                                        break;
                                    }
                                } else {
                                    self.handle_frame(world, conn, offset, frame);
                                }
                            }
                            None => break,
                        }
                    }
                } else if let Some(pending) = self.pending.get_mut(&conn) {
                    let record = match pending {
                        PendingRpc::Register(buf) | PendingRpc::RequestTopic(_, buf) => {
                            buf.push(&bytes);
                            buf.next_record()
                        }
                    };
                    if let Some(resp) = record {
                        let pending = self.pending.remove(&conn).unwrap();
                        world.close(conn);
                        match pending {
                            PendingRpc::Register(_) => {
                                if resp.first().map(|s| s.as_str()) == Some("ok") {
                                    self.known_pubs = resp[1..].to_vec();
                                    let uris = self.known_pubs.clone();
                                    for uri in uris {
                                        self.request_topic(world, id, &uri);
                                    }
                                }
                            }
                            PendingRpc::RequestTopic(uri, _) => {
                                if resp.first().map(|s| s.as_str()) == Some("ok") && resp.len() >= 3 {
                                    if let (Ok(ip), Ok(port)) =
                                        (resp[1].parse::<Ipv4Addr>(), resp[2].parse::<u16>())
                                    {
                                        let data_conn = world.connect(id, self.host, ip, port);
                                        self.connecting.insert(data_conn, uri);
                                    }
                                }
                            }
                        }
                    }
                } else if let Some(buf) = self.server_rpc.get_mut(&conn) {
                    buf.push(&bytes);
                    let mut requests = Vec::new();
                    while let Some(req) = buf.next_record() {
                        requests.push(req);
                    }
                    for req in requests {
                        let method = req.first().map(|s| s.as_str()).unwrap_or("");
                        let response = match method {
                            "publisherUpdate" => {
                                let topic = req.get(1).cloned().unwrap_or_default();
                                if topic == self.topic {
                                    let uris: Vec<String> = req[2..].to_vec();
                                    self.known_pubs = uris.clone();
                                    let connected = self.connected_uris();
                                    for uri in uris {
                                        if !connected.contains(&uri) {
                                            self.request_topic(world, id, &uri);
                                        }
                                    }
                                    // Drop connections to publishers no
                                    // longer in the set.
                                    let stale: Vec<ConnId> = self
                                        .data
                                        .iter()
                                        .filter(|(_, c)| !self.known_pubs.contains(&c.pub_uri))
                                        .map(|(&c, _)| c)
                                        .collect();
                                    for conn in stale {
                                        world.close(conn);
                                    }
                                }
                                vec!["ok".to_string()]
                            }
                            "requestTopic" => vec!["error".to_string(), "NoSuchTopic".to_string()],
                            _ => vec!["error".to_string(), "unknown method".to_string()],
                        };
                        let _ = world.send(conn, &encode_rpc(&response));
                    }
                }
            }
            AppEvent::Accepted { conn, .. } => {
                self.server_rpc.insert(conn, RpcBuffer::new());
            }
            AppEvent::PeerClosed { conn } => {
                world.close(conn);
            }
            AppEvent::Closed { conn, .. } => {
                if Some(conn) == self.relay_conn {
                    self.relay_conn = None;
                    self.relay_ready = false;
                    let backoff = world.config.reconnect_backoff;
                    world.schedule_app_timer(id, backoff, RELAY_RECONNECT);
                } else if let Some(state) = self.data.remove(&conn) {
                    if state.header_done {
                        let name = world.host(self.host).name.clone();
                        world.log("stream-closed", &name, self.topic.clone());
                    }
                    self.arm_reconnect(world, id);
                } else {
                    self.pending.remove(&conn);
                    self.connecting.remove(&conn);
                    self.server_rpc.remove(&conn);
                }
            }
            _ => {}
        }
    }

    fn as_any(&mut self) -> Option<&mut dyn std::any::Any> {
        Some(self)
    }
}

// --- supervisory command link (direct framed TCP, not on the graph) -------

pub struct SupervisoryLinkApp {
    pub host: HostId,
    pub dst: (Ipv4Addr, u16),
    pub channel: String,
    pub robot: String,
    pub period: SimTime,
    counter: u64,
    conn: Option<ConnId>,
    ready: bool,
}

impl SupervisoryLinkApp {
    pub fn new(host: HostId, dst: (Ipv4Addr, u16), channel: &str, robot: &str, period: SimTime) -> Self {
        SupervisoryLinkApp {
            host,
            dst,
            channel: channel.to_string(),
            robot: robot.to_string(),
            period,
            counter: 0,
            conn: None,
            ready: false,
        }
    }

    fn header(&self) -> ConnectionHeader {
        ConnectionHeader::new(&[
            ("callerid", "/s7_supervisor"),
            ("topic", &self.channel),
            ("type", "rosrange/Counter"),
            ("md5sum", "c0un73rc0un73rc0un73rc0un73r0000"),
        ])
    }
}

impl App for SupervisoryLinkApp {
    fn handle(&mut self, world: &mut World, id: AppId, event: AppEvent) {
        match event {
            AppEvent::Timer { tag: INIT } => {
                self.conn = Some(world.connect(id, self.host, self.dst.0, self.dst.1));
                world.schedule_app_timer(id, self.period, PUB_TICK);
            }
            AppEvent::Timer { tag: PUB_TICK } => {
                self.counter += 1;
                if let (Some(conn), true) = (self.conn, self.ready) {
                    let payload = counter_payload(self.counter, world.config.payload_pad);
                    let _ = world.send(conn, &encode_frame(&payload));
                    world.tx_log.push(FrameLogEntry {
                        t: world.now,
                        host: self.host,
                        channel: self.channel.clone(),
                        robot: Some(self.robot.clone()),
                        counter: Some(self.counter),
                        payload,
                        local: world.conn(conn).local,
                        remote: world.conn(conn).remote,
                        seq: 0,
                    });
                } else {
                    // Still log the intended command so gaps are measurable.
                    let payload = counter_payload(self.counter, world.config.payload_pad);
                    world.tx_log.push(FrameLogEntry {
                        t: world.now,
                        host: self.host,
                        channel: self.channel.clone(),
                        robot: Some(self.robot.clone()),
                        counter: Some(self.counter),
                        payload,
                        local: (Ipv4Addr::UNSPECIFIED, 0),
                        remote: self.dst,
                        seq: 0,
                    });
                }
                world.schedule_app_timer(id, self.period, PUB_TICK);
            }
            AppEvent::Timer { tag: RECONNECT } => {
                if self.conn.is_none() {
                    self.conn = Some(world.connect(id, self.host, self.dst.0, self.dst.1));
                }
            }
            AppEvent::Established { conn } if Some(conn) == self.conn => {
                let _ = world.send(conn, &encode_connection_header(&self.header()));
                self.ready = true;
            }
            AppEvent::ConnectFailed { conn, .. } if Some(conn) == self.conn => {
                self.conn = None;
                self.ready = false;
                let backoff = world.config.reconnect_backoff;
                world.schedule_app_timer(id, backoff, RECONNECT);
            }
            AppEvent::Readable { conn } => {
                // Controller's header reply; content is not used.
                let _ = world.drain_recv(conn);
            }
            AppEvent::PeerClosed { conn } if Some(conn) == self.conn => {
                world.close(conn);
            }
            AppEvent::Closed { conn, .. } if Some(conn) == self.conn => {
                self.conn = None;
                self.ready = false;
                let name = world.host(self.host).name.clone();
                world.log("stream-closed", &name, self.channel.clone());
                let backoff = world.config.reconnect_backoff;
                world.schedule_app_timer(id, backoff, RECONNECT);
            }
            _ => {}
        }
    }

    fn as_any(&mut self) -> Option<&mut dyn std::any::Any> {
        Some(self)
    }
}

// --- robot controller -------------------------------------------------------

enum CtlKind {
    Command,
    Maintenance,
}

struct CtlConn {
    kind: CtlKind,
    fb: FrameBuffer,
    header_done: bool,
    channel: String,
}

/// The robot controller endpoint: a framed command port and the maintenance
/// service carrying the modeled known vulnerability. With RIS enabled the
/// exploit is patched out and unlearned flows never reach accept.
pub struct ControllerApp {
    pub host: HostId,
    pub robot: String,
    pub bind_ip: Ipv4Addr,
    pub ris: bool,
    pub learned: BTreeSet<Ipv4Addr>,
    cmd_listener: Option<ListenerId>,
    maint_listener: Option<ListenerId>,
    conns: BTreeMap<ConnId, CtlConn>,
}

impl ControllerApp {
    pub fn new(host: HostId, robot: &str, bind_ip: Ipv4Addr, ris: bool, learned: BTreeSet<Ipv4Addr>) -> Self {
        ControllerApp {
            host,
            robot: robot.to_string(),
            bind_ip,
            ris,
            learned,
            cmd_listener: None,
            maint_listener: None,
            conns: BTreeMap::new(),
        }
    }

    fn gate(&self) -> Option<AcceptGate> {
        if self.ris {
            Some(AcceptGate {
                allowed: self.learned.clone(),
                label: format!("ris:{}", self.robot),
            })
        } else {
            None
        }
    }

    fn header(&self) -> ConnectionHeader {
        ConnectionHeader::new(&[
            ("callerid", &format!("/controller_{}", self.robot)),
            ("topic", "/controller/ack"),
            ("type", "rosrange/Counter"),
            ("md5sum", "c0un73rc0un73rc0un73rc0un73r0000"),
        ])
    }
}

impl App for ControllerApp {
    fn handle(&mut self, world: &mut World, id: AppId, event: AppEvent) {
        match event {
            AppEvent::Timer { tag: INIT } => {
                self.cmd_listener = Some(world.listen_gated(
                    id,
                    self.host,
                    self.bind_ip,
                    CONTROLLER_CMD_PORT,
                    self.gate(),
                ));
                self.maint_listener = Some(world.listen_gated(
                    id,
                    self.host,
                    self.bind_ip,
                    CONTROLLER_MAINT_PORT,
                    self.gate(),
                ));
            }
            AppEvent::Accepted { listener, conn } => {
                let kind = if Some(listener) == self.maint_listener {
                    CtlKind::Maintenance
                } else {
                    CtlKind::Command
                };
                self.conns.insert(
                    conn,
                    CtlConn {
                        kind,
                        fb: FrameBuffer::new(),
                        header_done: false,
                        channel: String::new(),
                    },
                );
            }
            AppEvent::Readable { conn } => {
                let bytes = world.drain_recv(conn);
                let host = self.host;
                let robot = self.robot.clone();
                let ris = self.ris;
                let reply_header = encode_connection_header(&self.header());
                if let Some(state) = self.conns.get_mut(&conn) {
                    state.fb.push(&bytes);
                    while let Some((offset, frame)) = state.fb.next_frame_at() {
                        match state.kind {
                            CtlKind::Command => {
                                if !state.header_done {
                                    match decode_header_fields(&frame) {
                                        Ok(h) => {
                                            state.header_done = true;
                                            state.channel = h
                                                .get("topic")
                                                .unwrap_or("/unknown")
                                                .to_string();
                                            let _ = world.send(conn, &reply_header);
                                        }
                                        Err(_) => {
                                            world.close(conn);
                                            break;
                                        }
                                    }
                                } else {
                                    let c = world.conn(conn);
                                    let entry = FrameLogEntry {
                                        t: world.now,
                                        host,
                                        channel: state.channel.clone(),
                                        robot: Some(robot.clone()),
                                        counter: parse_counter(&frame),
                                        payload: frame.clone(),
                                        local: c.local,
                                        remote: c.remote,
                                        seq: c.rcv_start.wrapping_add(offset as u32),
                                    };
                                    world.rx_log.push(entry);
                                }
                            }
                            CtlKind::Maintenance => {
                                let name = world.host(host).name.clone();
                                if frame == EXPLOIT_PAYLOAD {
                                    if ris {
                                        world.log(
                                            "ids-alert",
                                            &name,
                                            format!(
                                                "ris:{}: exploit attempt blocked (known-vuln signature)",
                                                robot
                                            ),
                                        );
                                        let _ = world.send(conn, &encode_frame(b"blocked"));
                                    } else {
                                        world.add_session(host, User::Root, Origin::Exploit);
                                        world.log(
                                            "endpoint-compromised",
                                            &name,
                                            format!("{}: maintenance service exploited", robot),
                                        );
                                        let _ = world.send(conn, &encode_frame(b"root-granted"));
                                    }
                                } else {
                                    let _ = world.send(conn, &encode_frame(b"unknown"));
                                }
                            }
                        }
                    }
                }
            }
            AppEvent::PeerClosed { conn } => {
                world.close(conn);
            }
            AppEvent::Closed { conn, .. } => {
                self.conns.remove(&conn);
            }
            _ => {}
        }
    }

    fn as_any(&mut self) -> Option<&mut dyn std::any::Any> {
        Some(self)
    }
}

// --- reverse shell endpoints ------------------------------------------------

/// The attacker's waiting listener. Grants a session on the connecting host
/// once the callback lands.
pub struct ShellListenerApp {
    pub host: HostId,
}

impl App for ShellListenerApp {
    fn handle(&mut self, world: &mut World, _id: AppId, event: AppEvent) {
        if let AppEvent::Accepted { conn, .. } = event {
            let remote_ip = world.conn(conn).remote.0;
            if let Some(target) = world.host_of_ip(remote_ip) {
                world.add_session(target, User::Ros, Origin::ReverseShell);
                let target_name = world.host(target).name.clone();
                let local = world.conn(conn).local;
                world.log(
                    "reverse-shell",
                    &target_name,
                    format!("callback to {}:{} established", local.0, local.1),
                );
            }
        }
    }
}

/// The victim-side callback client. Connects out and holds the channel.
pub struct ShellClientApp {
    pub host: HostId,
    pub dst: (Ipv4Addr, u16),
}

impl App for ShellClientApp {
    fn handle(&mut self, world: &mut World, id: AppId, event: AppEvent) {
        match event {
            AppEvent::Timer { tag: INIT } => {
                world.connect(id, self.host, self.dst.0, self.dst.1);
            }
            AppEvent::ConnectFailed { error, .. } => {
                let name = world.host(self.host).name.clone();
                world.log("shell-callback-failed", &name, format!("{}", error));
            }
            _ => {}
        }
    }
}
