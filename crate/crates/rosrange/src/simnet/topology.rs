//! Segments, hosts, interfaces, hardening profiles, and static routes.

use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use super::firewall::FirewallRule;
use super::net::{Cidr, Mac};
use super::time::SimTime;

pub type SegmentId = usize;
pub type HostId = usize;

/// The segmentation levels of the use case, field bus up to cloud.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Level {
    Field0,
    Control1,
    Process2,
    Dmz3,
    It4,
    Cloud,
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "field-0" => Ok(Level::Field0),
            "control-1" => Ok(Level::Control1),
            "process-2" => Ok(Level::Process2),
            "dmz-3" => Ok(Level::Dmz3),
            "it-4" => Ok(Level::It4),
            "cloud" => Ok(Level::Cloud),
            other => Err(format!("unknown level {:?}", other)),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Level::Field0 => "field-0",
            Level::Control1 => "control-1",
            Level::Process2 => "process-2",
            Level::Dmz3 => "dmz-3",
            Level::It4 => "it-4",
            Level::Cloud => "cloud",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct Segment {
    pub name: String,
    pub level: Level,
    pub subnet: Cidr,
}

#[derive(Debug, Clone)]
pub struct Interface {
    pub segment: SegmentId,
    pub ip: Ipv4Addr,
    pub mac: Mac,
}

/// Boolean hardening switches plus gateway rulesets. Flags are independent;
/// `ris_enabled` is only meaningful on controller hosts.
#[derive(Debug, Clone, Default)]
pub struct HardeningProfile {
    pub safe_yaml: bool,
    pub preshared_keys_with: Vec<String>,
    pub ris_enabled: bool,
    pub os_hardened: bool,
    pub firewall_rules: Vec<FirewallRule>,
}

#[derive(Debug, Clone)]
pub struct Route {
    pub dest: Cidr,
    pub via: Ipv4Addr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArpEntry {
    pub mac: Mac,
    /// None for solicited entries; unsolicited announcements expire.
    pub expires: Option<SimTime>,
    pub unsolicited: bool,
}

#[derive(Debug)]
pub struct Host {
    pub name: String,
    pub interfaces: Vec<Interface>,
    pub arp_table: BTreeMap<Ipv4Addr, ArpEntry>,
    pub hardening: HardeningProfile,
    pub routes: Vec<Route>,
    /// Gateways forward packets between their segments through their ruleset.
    pub router: bool,
    pub(crate) next_port: u16,
}

impl Host {
    pub fn interface_on(&self, segment: SegmentId) -> Option<&Interface> {
        self.interfaces.iter().find(|i| i.segment == segment)
    }

    pub fn has_ip(&self, ip: Ipv4Addr) -> bool {
        self.interfaces.iter().any(|i| i.ip == ip)
    }

    pub fn interface_for_ip(&self, ip: Ipv4Addr) -> Option<&Interface> {
        self.interfaces.iter().find(|i| i.ip == ip)
    }

    pub fn primary_ip(&self) -> Option<Ipv4Addr> {
        self.interfaces.first().map(|i| i.ip)
    }
}
