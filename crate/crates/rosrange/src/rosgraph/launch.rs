//! Launch files and the authenticated remote-launch channel.
//!
//! The file format is a minimal XML-like document: a `<launch>` element
//! containing self-closing `<env/>`, `<machine/>`, and `<node/>` entries
//! with double-quoted attributes.

use std::net::Ipv4Addr;

use thiserror::Error;

use crate::rosgraph::header::{encode_frame, FrameBuffer};
use crate::rosgraph::session::SessionId;
use crate::simnet::tcp::{ConnId, TcpError};
use crate::simnet::world::World;
use crate::simnet::HostId;

pub const LAUNCH_FIELD_SEP: char = '\u{1f}';

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineDef {
    pub name: String,
    pub address: Ipv4Addr,
    pub env_loader: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaunchNode {
    pub name: String,
    pub machine: String,
    pub pkg: String,
    pub node_type: String,
    pub args: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LaunchSpec {
    pub env: Vec<(String, String)>,
    pub machines: Vec<MachineDef>,
    pub nodes: Vec<LaunchNode>,
}

impl LaunchSpec {
    pub fn machine(&self, name: &str) -> Option<&MachineDef> {
        self.machines.iter().find(|m| m.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LaunchError {
    #[error("no preshared key")]
    NoPresharedKey,
    #[error("no such machine {0:?}")]
    NoSuchMachine(String),
    #[error("launch file parse error: {0}")]
    Parse(String),
    #[error("transport failure: {0}")]
    Transport(TcpError),
    #[error("protocol error: {0}")]
    Protocol(String),
}

fn parse_attrs(body: &str) -> Result<Vec<(String, String)>, LaunchError> {
    let mut attrs = Vec::new();
    let mut rest = body.trim();
    while !rest.is_empty() {
        let eq = match rest.find('=') {
            Some(i) => i,
            None => break,
        };
        let name = rest[..eq].trim().to_string();
        let after = rest[eq + 1..].trim_start();
        if !after.starts_with('"') {
            return Err(LaunchError::Parse(format!("unquoted attribute {:?}", name)));
        }
        let close = after[1..]
            .find('"')
            .ok_or_else(|| LaunchError::Parse(format!("unterminated attribute {:?}", name)))?;
        let value = after[1..1 + close].to_string();
        attrs.push((name, value));
        rest = after[close + 2..].trim_start();
    }
    Ok(attrs)
}

fn attr<'a>(attrs: &'a [(String, String)], name: &str) -> Option<&'a str> {
    attrs
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, v)| v.as_str())
}

/// Parses a launch document. Accepts the minimal `<launch>` shape with
/// `env`, `machine`, and `node` children.
pub fn parse_launch(text: &str) -> Result<LaunchSpec, LaunchError> {
    let mut spec = LaunchSpec::default();
    let mut in_launch = false;
    let mut rest = text;
    while let Some(open) = rest.find('<') {
        let close = rest[open..]
            .find('>')
            .ok_or_else(|| LaunchError::Parse("unterminated tag".to_string()))?;
        let tag = &rest[open + 1..open + close];
        rest = &rest[open + close + 1..];
        let tag = tag.trim();
        if tag.starts_with("!--") {
            continue;
        }
        if tag == "launch" {
            in_launch = true;
            continue;
        }
        if tag == "/launch" {
            in_launch = false;
            continue;
        }
        if !in_launch {
            return Err(LaunchError::Parse(format!("tag {:?} outside <launch>", tag)));
        }
        let body = tag.trim_end_matches('/').trim_end();
        let (name, attr_body) = match body.split_once(char::is_whitespace) {
            Some((n, b)) => (n, b),
            None => (body, ""),
        };
        let attrs = parse_attrs(attr_body)?;
        match name {
            "env" => {
                let key = attr(&attrs, "name").unwrap_or_default().to_string();
                let value = attr(&attrs, "value").unwrap_or_default().to_string();
                spec.env.push((key, value));
            }
            "machine" => {
                let address: Ipv4Addr = attr(&attrs, "address")
                    .unwrap_or_default()
                    .parse()
                    .map_err(|_| LaunchError::Parse("bad machine address".to_string()))?;
                spec.machines.push(MachineDef {
                    name: attr(&attrs, "name").unwrap_or_default().to_string(),
                    address,
                    env_loader: attr(&attrs, "env-loader").unwrap_or_default().to_string(),
                });
            }
            "node" => {
                spec.nodes.push(LaunchNode {
                    name: attr(&attrs, "name").unwrap_or_default().to_string(),
                    machine: attr(&attrs, "machine").unwrap_or_default().to_string(),
                    pkg: attr(&attrs, "pkg").unwrap_or_default().to_string(),
                    node_type: attr(&attrs, "type").unwrap_or_default().to_string(),
                    args: attr(&attrs, "args").unwrap_or_default().to_string(),
                });
            }
            other => {
                return Err(LaunchError::Parse(format!("unknown tag {:?}", other)));
            }
        }
    }
    Ok(spec)
}

/// Normalizes the args field of a launch node to an action name.
pub fn action_from_args(args: &str) -> String {
    format!("/{}", args.trim_start_matches('/'))
}

/// A running remote tool: the session it granted plus the forwarded
/// interaction channel.
#[derive(Debug, Clone, Copy)]
pub struct RemoteTool {
    pub session: SessionId,
    pub conn: ConnId,
    pub host: HostId,
}

pub(crate) fn launch_fields(parts: &[&str]) -> Vec<u8> {
    let joined = parts.join(&LAUNCH_FIELD_SEP.to_string());
    encode_frame(joined.as_bytes())
}

pub(crate) fn split_fields(frame: &[u8]) -> Vec<String> {
    String::from_utf8_lossy(frame)
        .split(LAUNCH_FIELD_SEP)
        .map(|s| s.to_string())
        .collect()
}

/// Launches the first node of the spec on its machine over the
/// authenticated remote-launch channel. Succeeds only when the target lists
/// the source host among its preshared keys; the tool's interaction channel
/// is forwarded back over the same connection.
pub fn remote_launch(
    world: &mut World,
    src_host: HostId,
    spec: &LaunchSpec,
) -> Result<RemoteTool, LaunchError> {
    let node = spec
        .nodes
        .first()
        .ok_or_else(|| LaunchError::Protocol("launch file has no node".to_string()))?;
    let machine = spec
        .machine(&node.machine)
        .ok_or_else(|| LaunchError::NoSuchMachine(node.machine.clone()))?;
    let conn = world
        .user_connect(src_host, machine.address, super::nodes::LAUNCH_PORT)
        .map_err(LaunchError::Transport)?;
    let request = launch_fields(&[
        "launch",
        &node.pkg,
        &node.node_type,
        &action_from_args(&node.args),
    ]);
    world.send(conn, &request).map_err(LaunchError::Transport)?;
    world.settle();
    let mut fb = FrameBuffer::new();
    fb.push(&world.drain_recv(conn));
    let reply = fb
        .next_frame()
        .ok_or_else(|| LaunchError::Protocol("no launch reply".to_string()))?;
    let fields = split_fields(&reply);
    match fields.first().map(|s| s.as_str()) {
        Some("ok") => {
            let session: SessionId = fields
                .get(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| LaunchError::Protocol("bad session id".to_string()))?;
            let host = world
                .host_of_ip(machine.address)
                .ok_or_else(|| LaunchError::Protocol("machine vanished".to_string()))?;
            Ok(RemoteTool {
                session,
                conn,
                host,
            })
        }
        Some("err") if fields.get(1).map(|s| s.as_str()) == Some("NoPresharedKey") => {
            Err(LaunchError::NoPresharedKey)
        }
        other => Err(LaunchError::Protocol(format!("bad reply {:?}", other))),
    }
}

/// The launch file the remote-execution attack ships.
pub fn attack_launch_file(machine_addr: Ipv4Addr) -> String {
    format!(
        r#"<launch>
  <env name="DISPLAY" value=":0.0"/>
  <machine name="s7" address="{}" env-loader="/opt/ros_ur_ws/devel/env.sh"/>
  <node name="action" machine="s7" pkg="actionlib" type="axclient.py" args="//ur_hardware_interface/set_mode"/>
</launch>
"#,
        machine_addr
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_attack_launch_file_verbatim() {
        let text = r#"<launch>
  <env name="DISPLAY" value=":0.0"/>
  <machine name="s7" address="16.0.0.20" env-loader="/opt/ros_ur_ws/devel/env.sh"/>
  <node name="action" machine="s7" pkg="actionlib" type="axclient.py" args="//ur_hardware_interface/set_mode"/>
</launch>
"#;
        let spec = parse_launch(text).unwrap();
        assert_eq!(spec.env, vec![("DISPLAY".to_string(), ":0.0".to_string())]);
        assert_eq!(spec.machines.len(), 1);
        assert_eq!(spec.machines[0].name, "s7");
        assert_eq!(spec.machines[0].address, "16.0.0.20".parse::<Ipv4Addr>().unwrap());
        assert_eq!(spec.machines[0].env_loader, "/opt/ros_ur_ws/devel/env.sh");
        assert_eq!(spec.nodes.len(), 1);
        assert_eq!(spec.nodes[0].pkg, "actionlib");
        assert_eq!(spec.nodes[0].node_type, "axclient.py");
        assert_eq!(spec.nodes[0].args, "//ur_hardware_interface/set_mode");
        assert_eq!(
            action_from_args(&spec.nodes[0].args),
            "/ur_hardware_interface/set_mode"
        );
    }

    #[test]
    fn rejects_unknown_tags() {
        assert!(matches!(
            parse_launch("<launch><bogus/></launch>"),
            Err(LaunchError::Parse(_))
        ));
    }
}
