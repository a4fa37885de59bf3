//! Attack 4: exploiting the modeled known vulnerability in a robot
//! controller's maintenance service from an insider position, then pivoting
//! into the graph from the compromised endpoint.

use crate::rosgraph::header::{encode_frame, FrameBuffer};
use crate::rosgraph::{Origin, CONTROLLER_MAINT_PORT, EXPLOIT_PAYLOAD};
use crate::simnet::tcp::TcpError;
use crate::simnet::time::SimTime;
use crate::simnet::world::World;
use crate::simnet::HostId;

use super::{takeover::attack_graph_takeover, AttackId, AttackOutcome, EvidenceKind, EvidenceRef};

/// One exploit attempt against one controller. Success is exactly: the
/// controller runs without endpoint protection and is reachable.
pub fn attack_a4_endpoint(
    world: &mut World,
    attacker: HostId,
    controller: HostId,
) -> AttackOutcome {
    let mut outcome = AttackOutcome::new(AttackId::A4);
    exploit_one(world, attacker, controller, &mut outcome, true);
    outcome
}

fn exploit_one(
    world: &mut World,
    attacker: HostId,
    controller: HostId,
    outcome: &mut AttackOutcome,
    pivot: bool,
) -> bool {
    let ctl_name = world.host(controller).name.clone();
    let robot = world.labels.controller_robot.get(&ctl_name).cloned();
    let ctl_ip = match world.host(controller).primary_ip() {
        Some(ip) => ip,
        None => return false,
    };
    let events_before = world.events.len();
    let conn = match world.user_connect(attacker, ctl_ip, CONTROLLER_MAINT_PORT) {
        Ok(c) => c,
        Err(TcpError::ConnectionRefused) => {
            // Endpoint protection rejected the unlearned flow.
            let ids = world.events[events_before..]
                .iter()
                .position(|e| e.kind == "ids-alert" && e.host == ctl_name)
                .map(|i| events_before + i);
            match ids {
                Some(idx) => {
                    outcome.push_evidence(
                        robot,
                        EvidenceKind::IdsBlocked,
                        EvidenceRef::Event(idx),
                        format!("exploit against {} blocked with IDS alert", ctl_name),
                    );
                    outcome.failed_stage.get_or_insert("exploit-blocked".to_string());
                }
                None => {
                    let name = world.host(attacker).name.clone();
                    let idx = world.log(
                        "attack-stage-failed",
                        &name,
                        format!("{} refused maintenance connection", ctl_name),
                    );
                    outcome.push_evidence(
                        robot,
                        EvidenceKind::StageBlocked,
                        EvidenceRef::Event(idx),
                        "maintenance service refused",
                    );
                    outcome.failed_stage.get_or_insert("exploit-refused".to_string());
                }
            }
            return false;
        }
        Err(e) => {
            let name = world.host(attacker).name.clone();
            let idx = world.log(
                "attack-stage-failed",
                &name,
                format!("{} unreachable: {}", ctl_name, e),
            );
            outcome.push_evidence(
                robot,
                EvidenceKind::StageBlocked,
                EvidenceRef::Event(idx),
                format!("transport: {}", e),
            );
            outcome.failed_stage.get_or_insert("transport".to_string());
            return false;
        }
    };
    let _ = world.send(conn, &encode_frame(EXPLOIT_PAYLOAD));
    world.settle();
    let mut fb = FrameBuffer::new();
    fb.push(&world.drain_recv(conn));
    let reply = fb.next_frame().unwrap_or_default();
    world.close(conn);
    world.settle();
    if reply == b"root-granted" {
        let session = world
            .sessions
            .iter()
            .rev()
            .find(|s| s.host == ctl_name && s.origin == Origin::Exploit)
            .cloned();
        if let Some(session) = session {
            outcome.sessions_gained.push(session);
        }
        let idx = world.events[events_before..]
            .iter()
            .position(|e| e.kind == "endpoint-compromised")
            .map(|i| events_before + i)
            .unwrap_or(events_before);
        outcome.push_evidence(
            robot,
            EvidenceKind::ControllerSession,
            EvidenceRef::Event(idx),
            format!("root session on {}", ctl_name),
        );
        if pivot {
            // The rogue endpoint reaches the whole graph from inside.
            let name = world.host(controller).name.clone();
            world.log("pivot", &name, "launching graph takeover from compromised endpoint".to_string());
            attack_graph_takeover(world, controller, outcome);
        }
        outcome.succeeded = true;
        true
    } else {
        let ids = world.events[events_before..]
            .iter()
            .position(|e| e.kind == "ids-alert" && e.host == ctl_name)
            .map(|i| events_before + i);
        if let Some(idx) = ids {
            outcome.push_evidence(
                robot,
                EvidenceKind::IdsBlocked,
                EvidenceRef::Event(idx),
                format!("exploit against {} blocked with IDS alert", ctl_name),
            );
        }
        outcome.failed_stage.get_or_insert("exploit-blocked".to_string());
        false
    }
}

/// The suite's A4: try the protected controller first (as the exercise
/// did), then the unprotected one, pivoting on the first success.
pub fn attack_a4_suite(
    world: &mut World,
    attacker: HostId,
    targets: &[HostId],
    settle_after: SimTime,
) -> AttackOutcome {
    let mut outcome = AttackOutcome::new(AttackId::A4);
    let mut compromised = false;
    for &controller in targets {
        if exploit_one(world, attacker, controller, &mut outcome, true) {
            compromised = true;
        }
    }
    world.run_for(settle_after);
    outcome.succeeded = compromised;
    if compromised {
        outcome.failed_stage = None;
    }
    outcome
}
