//! Principals holding access on a host, and where that access came from.

use std::fmt;

pub type SessionId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum User {
    Maintainer,
    Ros,
    Root,
}

impl User {
    /// Graph-mutating tools require the ROS setup user or root. The RPC
    /// layer itself never checks identity; this gate is host-level.
    pub fn can_run_graph_tools(&self) -> bool {
        matches!(self, User::Ros | User::Root)
    }
}

impl fmt::Display for User {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            User::Maintainer => "maintainer",
            User::Ros => "ros",
            User::Root => "root",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Origin {
    Console,
    RemoteLaunch,
    ReverseShell,
    Exploit,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Origin::Console => "console",
            Origin::RemoteLaunch => "remote-launch",
            Origin::ReverseShell => "reverse-shell",
            Origin::Exploit => "exploit",
        };
        f.write_str(s)
    }
}

/// A principal's session on a host.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrincipalSession {
    pub host: String,
    pub user: User,
    pub origin: Origin,
}

impl fmt::Display for PrincipalSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{} ({})", self.user, self.host, self.origin)
    }
}
