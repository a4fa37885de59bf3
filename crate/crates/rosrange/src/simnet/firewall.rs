//! Segregation rulesets. Rules are evaluated in list order; the first match
//! wins and an implicit terminal drop follows the last rule.

use std::fmt;
use std::net::Ipv4Addr;

use super::net::Cidr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Allow,
    Drop,
}

/// Destination port constraint: any port, or an inclusive range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortMatch {
    Any,
    Range(u16, u16),
}

impl PortMatch {
    pub fn single(p: u16) -> PortMatch {
        PortMatch::Range(p, p)
    }

    fn matches(&self, port: u16) -> bool {
        match self {
            PortMatch::Any => true,
            PortMatch::Range(lo, hi) => (*lo..=*hi).contains(&port),
        }
    }
}

impl fmt::Display for PortMatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PortMatch::Any => write!(f, "any"),
            PortMatch::Range(lo, hi) if lo == hi => write!(f, "{}", lo),
            PortMatch::Range(lo, hi) => write!(f, "{}-{}", lo, hi),
        }
    }
}

/// Whether a rule applies to any packet or only to packets of connections
/// the gateway has already admitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateMatch {
    Any,
    EstablishedOnly,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FirewallRule {
    pub action: Action,
    pub src: Cidr,
    pub dst: Cidr,
    pub dst_port: PortMatch,
    pub state: StateMatch,
}

impl FirewallRule {
    pub fn allow(src: Cidr, dst: Cidr) -> FirewallRule {
        FirewallRule {
            action: Action::Allow,
            src,
            dst,
            dst_port: PortMatch::Any,
            state: StateMatch::Any,
        }
    }

    pub fn allow_established(src: Cidr, dst: Cidr) -> FirewallRule {
        FirewallRule {
            action: Action::Allow,
            src,
            dst,
            dst_port: PortMatch::Any,
            state: StateMatch::EstablishedOnly,
        }
    }

    pub fn drop(src: Cidr, dst: Cidr) -> FirewallRule {
        FirewallRule {
            action: Action::Drop,
            src,
            dst,
            dst_port: PortMatch::Any,
            state: StateMatch::Any,
        }
    }
}

/// The routed fields a gateway looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketMeta {
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub dst_port: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnState {
    New,
    Established,
}

/// First matching rule wins; no match means drop.
pub fn firewall_eval(rules: &[FirewallRule], meta: &PacketMeta, conn_state: ConnState) -> Action {
    eval_with_index(rules, meta, conn_state).0
}

/// As `firewall_eval`, also reporting which rule matched (None for the
/// implicit terminal drop).
pub fn eval_with_index(
    rules: &[FirewallRule],
    meta: &PacketMeta,
    conn_state: ConnState,
) -> (Action, Option<usize>) {
    for (idx, rule) in rules.iter().enumerate() {
        if !rule.src.contains(meta.src) || !rule.dst.contains(meta.dst) {
            continue;
        }
        if !rule.dst_port.matches(meta.dst_port) {
            continue;
        }
        if rule.state == StateMatch::EstablishedOnly && conn_state != ConnState::Established {
            continue;
        }
        return (rule.action, Some(idx));
    }
    (Action::Drop, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(src: &str, dst: &str, port: u16) -> PacketMeta {
        PacketMeta {
            src: src.parse().unwrap(),
            dst: dst.parse().unwrap(),
            dst_port: port,
        }
    }

    #[test]
    fn empty_ruleset_drops() {
        assert_eq!(
            firewall_eval(&[], &meta("1.1.1.1", "2.2.2.2", 80), ConnState::New),
            Action::Drop
        );
    }

    #[test]
    fn established_only_gates_fresh_syn() {
        let rules = vec![FirewallRule::allow_established(
            "16.0.0.0/24".parse().unwrap(),
            "13.0.0.0/24".parse().unwrap(),
        )];
        let m = meta("16.0.0.20", "13.0.0.5", 4000);
        assert_eq!(firewall_eval(&rules, &m, ConnState::New), Action::Drop);
        assert_eq!(
            firewall_eval(&rules, &m, ConnState::Established),
            Action::Allow
        );
    }

    #[test]
    fn first_match_wins() {
        let a: Cidr = "10.0.0.0/8".parse().unwrap();
        let rules = vec![FirewallRule::drop(a, Cidr::ANY), FirewallRule::allow(a, Cidr::ANY)];
        assert_eq!(
            firewall_eval(&rules, &meta("10.1.2.3", "2.2.2.2", 80), ConnState::New),
            Action::Drop
        );
    }

    #[test]
    fn port_ranges() {
        let mut rule = FirewallRule::allow(Cidr::ANY, Cidr::ANY);
        rule.dst_port = PortMatch::Range(4000, 4999);
        let rules = vec![rule];
        assert_eq!(
            firewall_eval(&rules, &meta("1.1.1.1", "2.2.2.2", 4500), ConnState::New),
            Action::Allow
        );
        assert_eq!(
            firewall_eval(&rules, &meta("1.1.1.1", "2.2.2.2", 80), ConnState::New),
            Action::Drop
        );
    }
}
