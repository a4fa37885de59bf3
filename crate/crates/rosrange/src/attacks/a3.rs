//! Attack 3: ARP person-in-the-middle. The attacker poisons both victims'
//! tables, claims their frames, and relays at the frame level — passively
//! (observe), duplicating payloads (replay), or rewriting command counters
//! (modify). Victim TCP sessions stay established throughout; a replaying
//! relay keeps both sides consistent by shifting sequence numbers.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use crate::dissector::FlowKey;
use crate::rosgraph::header::{decode_connection_header, is_exact_frame};
use crate::simnet::frame::Ipv4Packet;
use crate::simnet::tcp::AppId;
use crate::simnet::time::SimTime;
use crate::simnet::world::{App, AppEvent, World};
use crate::simnet::{HostId, NetError};

use super::{AttackId, AttackOutcome, EvidenceKind, EvidenceRef, GraphEffect};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PitmMode {
    Observe,
    Replay,
    Modify,
}

const REASSERT: u64 = 200;
const TAMPER_ADD: u64 = 1_000_000;
const REPLAY_EVERY: u64 = 5;

#[derive(Default)]
struct RelayFlow {
    header_seen: bool,
    /// Bytes this relay has injected into the flow (receiver is ahead of
    /// the sender by this much).
    delta: u32,
    /// Next sequence number the true receiver expects, in receiver view.
    next_seq: Option<u32>,
    body_count: u64,
}

pub struct PitmRelayApp {
    attacker: HostId,
    pairs: Vec<(Ipv4Addr, Ipv4Addr)>,
    mode: PitmMode,
    flows: BTreeMap<FlowKey, RelayFlow>,
    pub forwarded: usize,
    pub altered: usize,
    pub replayed: usize,
}

impl PitmRelayApp {
    fn relay(&mut self, world: &mut World, mut packet: Ipv4Packet) {
        let flow = FlowKey {
            src: (packet.src, packet.tcp.src_port),
            dst: (packet.dst, packet.tcp.dst_port),
        };
        let rev_delta = self
            .flows
            .get(&flow.reversed())
            .map(|f| f.delta)
            .unwrap_or(0);
        let state = self.flows.entry(flow).or_default();

        // Track the stream structure the same way the dissector does.
        let mut is_body = false;
        if !packet.tcp.payload.is_empty() {
            if !state.header_seen {
                if decode_connection_header(&packet.tcp.payload).is_ok() {
                    state.header_seen = true;
                }
            } else if is_exact_frame(&packet.tcp.payload) {
                is_body = true;
            }
        }

        if self.mode == PitmMode::Modify && is_body && packet.tcp.payload.len() >= 12 {
            // Counter sits right after the frame length prefix.
            let mut counter = [0u8; 8];
            counter.copy_from_slice(&packet.tcp.payload[4..12]);
            let shifted = u64::from_le_bytes(counter).wrapping_add(TAMPER_ADD);
            packet.tcp.payload[4..12].copy_from_slice(&shifted.to_le_bytes());
            self.altered += 1;
        }

        // Sequence adjustment: this direction shifted by what we injected,
        // acks compensated for the reverse direction's injections.
        packet.tcp.seq = packet.tcp.seq.wrapping_add(state.delta);
        packet.tcp.ack = packet.tcp.ack.wrapping_sub(rev_delta);

        let payload_len = packet.tcp.payload.len() as u32;
        let mut ctl_len = 0;
        if packet.tcp.flags.fin {
            ctl_len = 1;
        }
        if packet.tcp.flags.syn {
            ctl_len += 1;
        }
        state.next_seq = Some(packet.tcp.seq.wrapping_add(payload_len).wrapping_add(ctl_len));
        if is_body {
            state.body_count += 1;
        }
        let replay_now = self.mode == PitmMode::Replay && is_body && state.body_count % REPLAY_EVERY == 0;
        let replay_packet = if replay_now {
            let mut dup = packet.clone();
            dup.tcp.seq = state.next_seq.unwrap();
            state.delta = state.delta.wrapping_add(payload_len);
            state.next_seq = Some(dup.tcp.seq.wrapping_add(payload_len));
            Some(dup)
        } else {
            None
        };

        let dst_mac = match world.true_mac_of(packet.dst) {
            Some(m) => m,
            None => return,
        };
        world.emit_to_mac(self.attacker, dst_mac, packet);
        self.forwarded += 1;
        if let Some(dup) = replay_packet {
            world.emit_to_mac(self.attacker, dst_mac, dup);
            self.replayed += 1;
        }
    }

    fn assert_poison(&self, world: &mut World) {
        for (a, b) in &self.pairs {
            let host_a = world.host_of_ip(*a);
            let host_b = world.host_of_ip(*b);
            if let (Some(ha), Some(hb)) = (host_a, host_b) {
                let _ = world.arp_poison(self.attacker, ha, *b);
                let _ = world.arp_poison(self.attacker, hb, *a);
            }
        }
    }
}

impl App for PitmRelayApp {
    fn handle(&mut self, world: &mut World, id: AppId, event: AppEvent) {
        match event {
            AppEvent::Timer { tag: REASSERT } => {
                self.assert_poison(world);
                world.schedule_app_timer(id, SimTime::from_micros(500_000), REASSERT);
            }
            AppEvent::RawIp { packet } => {
                self.relay(world, packet);
            }
            _ => {}
        }
    }

    fn as_any(&mut self) -> Option<&mut dyn std::any::Any> {
        Some(self)
    }
}

/// Inserts the attacker between two victims for `duration` and reports what
/// the interception changed. The relay stays resident so sessions survive.
pub fn attack_a3_pitm(
    world: &mut World,
    attacker: HostId,
    victim_a: HostId,
    victim_b: HostId,
    mode: PitmMode,
    duration: SimTime,
) -> Result<AttackOutcome, NetError> {
    let pairs = shared_pair_ips(world, attacker, victim_a, victim_b)?;
    let outcome = run_pitm(world, attacker, vec![pairs], mode, duration);
    Ok(outcome)
}

/// The suite variant: insert between the master station and every labeled
/// process-network peer it exchanges robot traffic with, plus tamper with
/// the attacker's own station relay (the attacker already owns that host).
pub fn attack_a3_suite(
    world: &mut World,
    attacker: HostId,
    mode: PitmMode,
    duration: SimTime,
) -> AttackOutcome {
    let master = world
        .labels
        .master_host
        .clone()
        .and_then(|n| world.host_id(&n));
    let mut pairs = Vec::new();
    if let Some(master) = master {
        let peers: Vec<HostId> = world
            .labels
            .station_robot
            .keys()
            .chain(world.labels.direct_controllers.keys())
            .filter_map(|name| world.host_id(name))
            .filter(|&h| h != attacker && h != master)
            .filter(|&h| world.share_segment(attacker, h) && world.share_segment(attacker, master))
            .collect();
        for peer in peers {
            if let Ok(pair) = shared_pair_ips(world, attacker, master, peer) {
                pairs.push(pair);
            }
        }
    }

    // Tamper with the attacker's own command relay toward its controller.
    if mode == PitmMode::Modify {
        enable_local_relay_tamper(world, attacker);
    }

    run_pitm(world, attacker, pairs, mode, duration)
}

fn enable_local_relay_tamper(world: &mut World, attacker: HostId) {
    use crate::rosgraph::SubscriberApp;
    for app in 0..world.apps_len() {
        let mut tampered: Option<String> = None;
        if let Some(sub) = world.app_as::<SubscriberApp>(app) {
            if sub.host == attacker {
                if let Some(relay) = sub.relay.as_mut() {
                    relay.tamper_add = Some(TAMPER_ADD);
                    tampered = sub.robot.clone();
                }
            }
        }
        if let Some(robot) = tampered {
            let name = world.host(attacker).name.clone();
            world.log(
                "relay-tamper",
                &name,
                format!("command relay for {} altered at source", robot),
            );
        }
    }
}

fn shared_pair_ips(
    world: &World,
    attacker: HostId,
    victim_a: HostId,
    victim_b: HostId,
) -> Result<(Ipv4Addr, Ipv4Addr), NetError> {
    for ia in &world.host(attacker).interfaces {
        let a = world
            .host(victim_a)
            .interfaces
            .iter()
            .find(|i| i.segment == ia.segment);
        let b = world
            .host(victim_b)
            .interfaces
            .iter()
            .find(|i| i.segment == ia.segment);
        if let (Some(a), Some(b)) = (a, b) {
            return Ok((a.ip, b.ip));
        }
    }
    Err(NetError::NotOnSegment)
}

fn run_pitm(
    world: &mut World,
    attacker: HostId,
    pairs: Vec<(Ipv4Addr, Ipv4Addr)>,
    mode: PitmMode,
    duration: SimTime,
) -> AttackOutcome {
    let mut outcome = AttackOutcome::new(AttackId::A3);
    let app = world.add_app(
        attacker,
        Box::new(PitmRelayApp {
            attacker,
            pairs: pairs.clone(),
            mode,
            flows: BTreeMap::new(),
            forwarded: 0,
            altered: 0,
            replayed: 0,
        }),
    );
    for (a, b) in &pairs {
        world.claim_foreign_ip(app, attacker, *a);
        world.claim_foreign_ip(app, attacker, *b);
        let name = world.host(attacker).name.clone();
        world.log("arp-pitm", &name, format!("inserted between {} and {}", a, b));
    }
    world.schedule_app_timer(app, SimTime::ZERO, REASSERT);

    let start = world.now;
    let tx_before = world.tx_log.len();
    world.run_until(start + duration);

    let (forwarded, replayed) = {
        let relay = world.app_as::<PitmRelayApp>(app).expect("relay present");
        (relay.forwarded, relay.replayed)
    };

    // Evidence: per channel, payload counters the receivers logged that the
    // publishers never sent.
    let end = start + duration;
    let mut sent: BTreeMap<String, std::collections::BTreeSet<u64>> = BTreeMap::new();
    for e in world.tx_log[tx_before..]
        .iter()
        .filter(|e| e.t >= start && e.t < end)
    {
        if let Some(c) = e.counter {
            sent.entry(e.channel.clone()).or_default().insert(c);
        }
    }
    let mut altered_channels: BTreeMap<String, Option<String>> = BTreeMap::new();
    let mut rx_evidence = Vec::new();
    for (idx, e) in world.rx_log.iter().enumerate() {
        if e.t < start || e.t >= end {
            continue;
        }
        let (channel_sent, counter) = match (sent.get(&e.channel), e.counter) {
            (Some(s), Some(c)) => (s, c),
            _ => continue,
        };
        if !channel_sent.contains(&counter) {
            altered_channels
                .entry(e.channel.clone())
                .or_insert_with(|| e.robot.clone());
            rx_evidence.push((idx, e.channel.clone(), e.robot.clone()));
        }
    }
    for (channel, robot) in &altered_channels {
        outcome.graph_effects.push(GraphEffect::MessageForgery {
            channel: channel.clone(),
            robot: robot.clone(),
        });
    }
    for (idx, channel, robot) in rx_evidence {
        outcome.push_evidence(
            robot,
            EvidenceKind::AlteredPayload,
            EvidenceRef::RxFrame(idx),
            format!("altered payload delivered on {}", channel),
        );
    }

    // Replay duplicates: the same counter delivered twice.
    if replayed > 0 {
        for channel in sent.keys() {
            let mut seen = std::collections::BTreeSet::new();
            for (idx, e) in world.rx_log.iter().enumerate() {
                if e.t < start || e.t >= end || &e.channel != channel {
                    continue;
                }
                if let Some(c) = e.counter {
                    if !seen.insert(c) {
                        let robot = e.robot.clone();
                        if !altered_channels.contains_key(channel) {
                            altered_channels.insert(channel.clone(), robot.clone());
                            outcome.graph_effects.push(GraphEffect::MessageForgery {
                                channel: channel.clone(),
                                robot: robot.clone(),
                            });
                        }
                        outcome.push_evidence(
                            robot,
                            EvidenceKind::ForgedCommand,
                            EvidenceRef::RxFrame(idx),
                            format!("replayed payload delivered on {}", channel),
                        );
                    }
                }
            }
        }
    }

    outcome.succeeded = forwarded > 0
        && match mode {
            PitmMode::Observe => true,
            PitmMode::Replay | PitmMode::Modify => !outcome.graph_effects.is_empty(),
        };
    if outcome.succeeded && outcome.evidence.is_empty() {
        // Observe mode: the interception itself is the evidence.
        let name = world.host(attacker).name.clone();
        let idx = world.log(
            "pitm-observe",
            &name,
            format!("{} frames relayed unmodified", forwarded),
        );
        outcome.push_evidence(None, EvidenceKind::SessionGained, EvidenceRef::Event(idx), "on-path interception");
    }
    if !outcome.succeeded {
        outcome.failed_stage = Some("no-traffic-intercepted".to_string());
    }
    outcome
}
