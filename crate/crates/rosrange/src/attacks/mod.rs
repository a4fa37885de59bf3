//! The four attack procedures, each producing an auditable outcome whose
//! evidence chains into the run's capture and event logs.

mod a1;
mod a2;
mod a3;
mod a4;
mod takeover;

pub use a1::{attack_a11_remote_exec, attack_a12_privesc, A11Config};
pub use a2::{attack_a2_finack, A2Config};
pub use a3::{attack_a3_pitm, attack_a3_suite, PitmMode};
pub use a4::{attack_a4_endpoint, attack_a4_suite};
pub use takeover::attack_graph_takeover;

use std::collections::BTreeSet;
use std::fmt;

use crate::rosgraph::PrincipalSession;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AttackId {
    A1_1,
    A1_2,
    A2,
    A3,
    A4,
}

impl AttackId {
    pub const ALL: [AttackId; 5] = [
        AttackId::A1_1,
        AttackId::A1_2,
        AttackId::A2,
        AttackId::A3,
        AttackId::A4,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AttackId::A1_1 => "A1.1",
            AttackId::A1_2 => "A1.2",
            AttackId::A2 => "A2",
            AttackId::A3 => "A3",
            AttackId::A4 => "A4",
        }
    }

    pub fn parse(s: &str) -> Option<AttackId> {
        match s.to_ascii_lowercase().as_str() {
            "a1.1" | "a1_1" => Some(AttackId::A1_1),
            "a1.2" | "a1_2" => Some(AttackId::A1_2),
            "a2" => Some(AttackId::A2),
            "a3" => Some(AttackId::A3),
            "a4" => Some(AttackId::A4),
            _ => None,
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            AttackId::A1_1 => {
                "Remote code execution: a dev-side attacker launches the action tool \
                 on the central station, drops a tagged payload through the unsafe \
                 YAML path, gains a reverse shell, and takes over the graph"
            }
            AttackId::A1_2 => {
                "Privilege escalation: a local maintainer invokes the same unsafe \
                 parse path to gain ROS-level privileges on the station"
            }
            AttackId::A2 => {
                "FIN-ACK flood attack: spoofed teardown segments with valid \
                 sequence numbers repeatedly kill stateful ROSTCP sessions"
            }
            AttackId::A3 => {
                "Person-in-the-middle: ARP poisoning inserts the attacker into the \
                 station traffic paths to observe, replay, or alter commands"
            }
            AttackId::A4 => {
                "Insider endpoint compromise: a known controller vulnerability \
                 yields root on an unprotected controller, a pivot into the graph"
            }
        }
    }
}

impl fmt::Display for AttackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a piece of evidence lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvidenceRef {
    /// Index into the world event log (events.jsonl line number).
    Event(usize),
    /// Index into the receiver-side frame log.
    RxFrame(usize),
    /// Index into the publisher-side frame log.
    TxFrame(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvidenceKind {
    /// A forged frame was delivered on the robot's command path.
    ForgedCommand,
    /// A genuine frame arrived altered.
    AlteredPayload,
    /// A nominal stream was torn down or starved.
    StreamKill,
    /// A session on the robot's controller.
    ControllerSession,
    /// A session gained on a non-controller host.
    SessionGained,
    /// The attack step was stopped by endpoint protection.
    IdsBlocked,
    /// Safe parsing refused the payload.
    ParseRejection,
    /// A stage failed for transport/policy reasons.
    StageBlocked,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evidence {
    pub robot: Option<String>,
    pub kind: EvidenceKind,
    pub source: EvidenceRef,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphEffect {
    RoguePublisher { topic: String },
    SubscriberRedirect { topic: String, subscriber: String },
    SessionKill { channel: String, robot: Option<String> },
    MessageForgery { channel: String, robot: Option<String> },
}

#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub attack_id: AttackId,
    pub succeeded: bool,
    /// Name of the first blocked stage when the chain did not complete.
    pub failed_stage: Option<String>,
    pub sessions_gained: Vec<PrincipalSession>,
    pub graph_effects: Vec<GraphEffect>,
    pub robots_affected: BTreeSet<String>,
    pub evidence: Vec<Evidence>,
}

impl AttackOutcome {
    pub fn new(attack_id: AttackId) -> AttackOutcome {
        AttackOutcome {
            attack_id,
            succeeded: false,
            failed_stage: None,
            sessions_gained: Vec::new(),
            graph_effects: Vec::new(),
            robots_affected: BTreeSet::new(),
            evidence: Vec::new(),
        }
    }

    pub fn fail(mut self, stage: &str) -> AttackOutcome {
        self.succeeded = false;
        self.failed_stage = Some(stage.to_string());
        self
    }

    pub fn push_evidence(
        &mut self,
        robot: Option<String>,
        kind: EvidenceKind,
        source: EvidenceRef,
        note: impl Into<String>,
    ) {
        if matches!(
            kind,
            EvidenceKind::ForgedCommand
                | EvidenceKind::AlteredPayload
                | EvidenceKind::StreamKill
                | EvidenceKind::ControllerSession
        ) {
            if let Some(robot) = &robot {
                self.robots_affected.insert(robot.clone());
            }
        }
        self.evidence.push(Evidence {
            robot,
            kind,
            source,
            note: note.into(),
        });
    }
}

/// Disruption measured against the monitored nominal streams.
#[derive(Debug, Clone, PartialEq)]
pub struct DisruptionStats {
    pub nominal_rate_hz: f64,
    pub delivered_rate_hz: f64,
    pub sequence_gaps: usize,
    pub sessions_killed: usize,
}
