//! Graph takeover: enumerate the registry, register rogue publishers on
//! every command topic, and push forged commands — including directly into
//! standalone controllers reachable on the process network.

use std::net::Ipv4Addr;

use crate::rosgraph::{
    self, encode_connection_header, encode_frame, rpc_call, ConnectionHeader, PublisherApp,
    CONTROLLER_CMD_PORT, FORGED_COUNTER_BASE,
};
use crate::simnet::time::SimTime;
use crate::simnet::world::World;
use crate::simnet::HostId;

use super::{AttackOutcome, EvidenceKind, EvidenceRef, GraphEffect};

/// Runs the takeover from a host the attacker controls. Effects and
/// evidence are appended to `outcome`. Partial failures (unreachable
/// endpoints) are recorded and do not abort the rest.
pub fn attack_graph_takeover(world: &mut World, from: HostId, outcome: &mut AttackOutcome) {
    let labels = world.labels.clone();
    let master = match labels.master_addr {
        Some(m) => m,
        None => return,
    };

    // Enumerate the graph state over the real RPC surface.
    let state = rpc_call(
        world,
        from,
        master,
        &["getSystemState".to_string(), "/takeover".to_string()],
    );
    let topics: Vec<(String, Vec<String>, Vec<String>)> = match state {
        Ok(resp) if resp.first().map(|s| s.as_str()) == Some("ok") => {
            serde_json::from_str(&resp[1]).unwrap_or_default()
        }
        _ => {
            let name = world.host(from).name.clone();
            let idx = world.log("attack-stage-failed", &name, "takeover: master unreachable".into());
            outcome.push_evidence(None, EvidenceKind::StageBlocked, EvidenceRef::Event(idx), "master unreachable");
            return;
        }
    };

    let bind_ip = match labels
        .master_addr
        .and_then(|(ip, _)| world.egress_ip(from, ip))
    {
        Some(ip) => ip,
        None => return,
    };

    // One rogue publisher per command topic that has live subscribers.
    for (topic, _pubs, subs) in &topics {
        let robot = match labels.command_topics.get(topic) {
            Some(r) => Some(r.clone()),
            None => continue,
        };
        if subs.is_empty() {
            continue;
        }
        let rpc_port = world.alloc_port(from);
        let data_port = world.alloc_port(from);
        let caller = format!("/rogue{}", topic.replace('/', "_"));
        rosgraph::spawn(
            world,
            from,
            Box::new(PublisherApp::new(
                &caller,
                topic,
                from,
                bind_ip,
                rpc_port,
                data_port,
                Some(SimTime::from_micros(100_000)),
                FORGED_COUNTER_BASE,
                robot.clone(),
                master,
            )),
        );
        world.settle();
        let name = world.host(from).name.clone();
        let idx = world.log(
            "rogue-publisher",
            &name,
            format!("{} registered on {}", caller, topic),
        );
        outcome.graph_effects.push(GraphEffect::RoguePublisher {
            topic: topic.clone(),
        });
        outcome.push_evidence(None, EvidenceKind::SessionGained, EvidenceRef::Event(idx), format!("rogue publisher on {}", topic));
        for sub in subs {
            outcome.graph_effects.push(GraphEffect::SubscriberRedirect {
                topic: topic.clone(),
                subscriber: sub.clone(),
            });
        }
    }

    // Let forged frames flow, then collect delivery evidence.
    let rx_before = 0usize;
    world.run_for(SimTime::from_micros(500_000));
    let forged: Vec<(usize, String, Option<String>)> = world
        .rx_log
        .iter()
        .enumerate()
        .skip(rx_before)
        .filter(|(_, e)| e.counter.map_or(false, |c| c >= FORGED_COUNTER_BASE))
        .map(|(i, e)| (i, e.channel.clone(), e.robot.clone()))
        .collect();
    let mut forged_channels = std::collections::BTreeSet::new();
    for (idx, channel, robot) in forged {
        if forged_channels.insert(channel.clone()) {
            outcome.graph_effects.push(GraphEffect::MessageForgery {
                channel: channel.clone(),
                robot: robot.clone(),
            });
        }
        outcome.push_evidence(
            robot,
            EvidenceKind::ForgedCommand,
            EvidenceRef::RxFrame(idx),
            format!("forged frame delivered on {}", channel),
        );
    }

    // Standalone controllers: push commands straight into the vendor port.
    direct_controller_forge(world, from, outcome);
}

/// Forges one command into every standalone controller's command endpoint.
/// Endpoint protection on a controller shows up as an IDS alert instead.
pub fn direct_controller_forge(world: &mut World, from: HostId, outcome: &mut AttackOutcome) {
    let targets: Vec<(String, Ipv4Addr)> = world
        .labels
        .direct_controllers
        .iter()
        .map(|(h, ip)| (h.clone(), *ip))
        .collect();
    let from_name = world.host(from).name.clone();
    for (ctl_name, ctl_ip) in targets {
        if ctl_name == from_name {
            continue;
        }
        let robot = world.labels.controller_robot.get(&ctl_name).cloned();
        let events_before = world.events.len();
        match world.user_connect(from, ctl_ip, CONTROLLER_CMD_PORT) {
            Ok(conn) => {
                let header = ConnectionHeader::new(&[
                    ("callerid", "/takeover"),
                    ("topic", "/forged/direct"),
                    ("type", "rosrange/Counter"),
                    ("md5sum", "c0un73rc0un73rc0un73rc0un73r0000"),
                ]);
                let _ = world.send(conn, &encode_connection_header(&header));
                world.settle();
                let payload = rosgraph::counter_payload(
                    FORGED_COUNTER_BASE + 1,
                    world.config.payload_pad,
                );
                let _ = world.send(conn, &encode_frame(&payload));
                world.settle();
                let delivered = world
                    .rx_log
                    .iter()
                    .enumerate()
                    .rev()
                    .find(|(_, e)| {
                        e.counter == Some(FORGED_COUNTER_BASE + 1)
                            && e.robot.as_deref() == robot.as_deref()
                    })
                    .map(|(i, _)| i);
                if let Some(idx) = delivered {
                    outcome.graph_effects.push(GraphEffect::MessageForgery {
                        channel: "/forged/direct".to_string(),
                        robot: robot.clone(),
                    });
                    outcome.push_evidence(
                        robot.clone(),
                        EvidenceKind::ForgedCommand,
                        EvidenceRef::RxFrame(idx),
                        format!("forged command accepted by {}", ctl_name),
                    );
                }
                world.close(conn);
                world.settle();
            }
            Err(_) => {
                // Refused at accept: endpoint protection logged the flow.
                let ids = world.events[events_before..]
                    .iter()
                    .position(|e| e.kind == "ids-alert" && e.host == ctl_name)
                    .map(|i| events_before + i);
                match ids {
                    Some(idx) => outcome.push_evidence(
                        robot.clone(),
                        EvidenceKind::IdsBlocked,
                        EvidenceRef::Event(idx),
                        format!("direct command to {} blocked", ctl_name),
                    ),
                    None => {
                        let name = world.host(from).name.clone();
                        let idx = world.log(
                            "attack-stage-failed",
                            &name,
                            format!("direct command to {} unreachable", ctl_name),
                        );
                        outcome.push_evidence(
                            robot.clone(),
                            EvidenceKind::StageBlocked,
                            EvidenceRef::Event(idx),
                            format!("{} unreachable", ctl_name),
                        );
                    }
                }
            }
        }
    }
}
