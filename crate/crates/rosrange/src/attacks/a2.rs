//! Attack 2: FIN-ACK teardown of stateful sessions. The attacker sniffs
//! the process segment, pairs data segments with their ACKs, and injects a
//! spoofed FIN-ACK whose sequence numbers the victim must accept — then
//! re-arms as sessions come back.

use std::collections::BTreeSet;

use crate::dissector::{find_session_pairs, FlowKey};
use crate::simnet::frame::TcpFlags;
use crate::simnet::tcp::AppId;
use crate::simnet::time::SimTime;
use crate::simnet::world::{App, AppEvent, SpoofedSegment, TapId, World};
use crate::simnet::HostId;

use super::{AttackId, AttackOutcome, DisruptionStats, EvidenceKind, EvidenceRef, GraphEffect};

#[derive(Debug, Clone)]
pub struct A2Config {
    /// Sniff/inject loop interval.
    pub tick: SimTime,
    /// Dry run: observe and pair, inject nothing.
    pub dry_run: bool,
    /// Fault-injection offset applied to the spoofed sequence number.
    pub seq_offset: u32,
}

impl Default for A2Config {
    fn default() -> Self {
        A2Config {
            tick: SimTime::from_micros(50_000),
            dry_run: false,
            seq_offset: 0,
        }
    }
}

const ATTACK_TICK: u64 = 100;

struct FinAckApp {
    attacker: HostId,
    tap: TapId,
    until: SimTime,
    tick: SimTime,
    dry_run: bool,
    seq_offset: u32,
    injected: BTreeSet<(FlowKey, u32)>,
    pub injections: usize,
}

impl App for FinAckApp {
    fn handle(&mut self, world: &mut World, id: AppId, event: AppEvent) {
        if !matches!(event, AppEvent::Timer { tag: ATTACK_TICK }) {
            return;
        }
        if world.now >= self.until {
            return;
        }
        // Pick the most recent unseen data/ACK pair and spoof its teardown,
        // one per loop iteration.
        let pairs = find_session_pairs(world.tap_records(self.tap));
        let target = pairs.into_iter().find(|p| {
            !self
                .injected
                .contains(&(p.data.flow(), p.data.seq))
        });
        if let Some(pair) = target {
            self.injected.insert((pair.data.flow(), pair.data.seq));
            if !self.dry_run {
                let spoof = SpoofedSegment {
                    src: (pair.data.src_ip, pair.data.src_port),
                    dst: (pair.data.dst_ip, pair.data.dst_port),
                    seq: pair.ack.ack.wrapping_add(self.seq_offset),
                    ack: pair.ack.seq,
                    flags: TcpFlags::fin_ack(),
                    payload: Vec::new(),
                };
                if world.inject_segment(self.attacker, spoof).is_ok() {
                    self.injections += 1;
                    let name = world.host(self.attacker).name.clone();
                    world.log(
                        "finack-inject",
                        &name,
                        format!(
                            "{}:{} -> {}:{} seq={}",
                            pair.data.src_ip,
                            pair.data.src_port,
                            pair.data.dst_ip,
                            pair.data.dst_port,
                            pair.ack.ack
                        ),
                    );
                }
            }
        }
        world.schedule_app_timer(id, self.tick, ATTACK_TICK);
    }

    fn as_any(&mut self) -> Option<&mut dyn std::any::Any> {
        Some(self)
    }
}

/// Runs the FIN-ACK attack for `duration` and measures the damage against
/// the monitored nominal streams.
pub fn attack_a2_finack(
    world: &mut World,
    attacker: HostId,
    duration: SimTime,
    config: &A2Config,
) -> (AttackOutcome, DisruptionStats) {
    let mut outcome = AttackOutcome::new(AttackId::A2);
    let segment = world.labels.process_segment.clone();
    let tap = world
        .add_tap(&segment)
        .expect("attack segment exists");

    let start = world.now;
    let until = start + duration;
    let app = world.add_app(
        attacker,
        Box::new(FinAckApp {
            attacker,
            tap,
            until,
            tick: config.tick,
            dry_run: config.dry_run,
            seq_offset: config.seq_offset,
            injected: BTreeSet::new(),
            injections: 0,
        }),
    );
    world.schedule_app_timer(app, config.tick, ATTACK_TICK);

    let events_before = world.events.len();
    world.run_until(until);

    // Session kills: nominal streams observed closing during the window.
    let kills: Vec<(usize, String)> = world.events[events_before..]
        .iter()
        .enumerate()
        .filter(|(_, e)| e.kind == "stream-closed")
        .map(|(i, e)| (events_before + i, e.detail.clone()))
        .collect();
    let mut killed_channels = BTreeSet::new();
    for (idx, channel) in &kills {
        let robot = world.labels.channel_robot.get(channel).cloned();
        if killed_channels.insert(channel.clone()) {
            outcome.graph_effects.push(GraphEffect::SessionKill {
                channel: channel.clone(),
                robot: robot.clone(),
            });
        }
        outcome.push_evidence(
            robot,
            EvidenceKind::StreamKill,
            EvidenceRef::Event(*idx),
            format!("session killed on {}", channel),
        );
    }

    let stats = measure_disruption(world, start, duration, kills.len());
    outcome.succeeded =
        !config.dry_run && !kills.is_empty() && stats.delivered_rate_hz < stats.nominal_rate_hz;
    if !outcome.succeeded && outcome.failed_stage.is_none() {
        outcome.failed_stage = Some(if config.dry_run {
            "dry-run".to_string()
        } else {
            "no-sessions-killed".to_string()
        });
    }
    (outcome, stats)
}

/// Delivered rate and counter gaps over the monitored channels within
/// [start, start+duration).
pub fn measure_disruption(
    world: &World,
    start: SimTime,
    duration: SimTime,
    sessions_killed: usize,
) -> DisruptionStats {
    let channels = world.labels.monitored_channels.clone();
    let end = start + duration;
    let mut delivered = 0usize;
    let mut gaps = 0usize;
    for channel in &channels {
        let mut last: Option<u64> = None;
        for entry in world
            .rx_log
            .iter()
            .filter(|e| e.channel == *channel && e.t >= start && e.t < end)
        {
            delivered += 1;
            if let (Some(prev), Some(c)) = (last, entry.counter) {
                if c > prev + 1 {
                    gaps += 1;
                }
            }
            last = entry.counter.or(last);
        }
    }
    let secs = duration.as_secs_f64();
    let n = channels.len().max(1) as f64;
    DisruptionStats {
        nominal_rate_hz: world.labels.nominal_rate_hz,
        delivered_rate_hz: if secs > 0.0 {
            delivered as f64 / (n * secs)
        } else {
            0.0
        },
        sequence_gaps: gaps,
        sessions_killed,
    }
}
