//! Network-layer integration: handshakes through the scheduler, ARP
//! resolution and poisoning, firewall traversal, and spoofed-segment
//! injection against live connections.

use rosrange::dissector::Classification;
use rosrange::simnet::{
    Cidr, HardeningProfile, Level, NetError, Reach, SimTime, SpoofedSegment, TcpError, TcpFlags,
    TcpState, World,
};

fn ip(s: &str) -> std::net::Ipv4Addr {
    s.parse().unwrap()
}

fn cidr(s: &str) -> Cidr {
    s.parse().unwrap()
}

/// Two hosts on one process-level segment.
fn two_host_world() -> (World, usize, usize) {
    let mut w = World::new(7);
    w.add_segment("process", Level::Process2, cidr("13.0.0.0/24"))
        .unwrap();
    let a = w
        .add_host("alpha", &[("process", ip("13.0.0.5"))], HardeningProfile::default())
        .unwrap();
    let b = w
        .add_host("beta", &[("process", ip("13.0.0.20"))], HardeningProfile::default())
        .unwrap();
    (w, a, b)
}

#[test]
fn add_host_validation() {
    let mut w = World::new(1);
    w.add_segment("process", Level::Process2, cidr("13.0.0.0/24"))
        .unwrap();
    // S7-style dual-homed host addresses must lie in their subnets.
    w.add_segment("dmz", Level::Dmz3, cidr("16.0.0.0/24")).unwrap();
    let s7 = w.add_host(
        "s7",
        &[("dmz", ip("16.0.0.20")), ("process", ip("13.0.0.20"))],
        HardeningProfile::default(),
    );
    assert!(s7.is_ok());
    assert!(matches!(
        w.add_host("bad", &[("process", ip("99.0.0.1"))], HardeningProfile::default()),
        Err(NetError::AddressOutOfSubnet(_))
    ));
    assert!(matches!(
        w.add_host("s7", &[("process", ip("13.0.0.9"))], HardeningProfile::default()),
        Err(NetError::DuplicateName(_))
    ));
}

#[test]
fn overlapping_subnets_rejected() {
    let mut w = World::new(1);
    w.add_segment("a", Level::Process2, cidr("13.0.0.0/24")).unwrap();
    assert!(matches!(
        w.add_segment("b", Level::Dmz3, cidr("13.0.0.128/25")),
        Err(NetError::OverlappingSubnet(_))
    ));
}

#[test]
fn handshake_and_data_transfer() {
    let (mut w, a, b) = two_host_world();
    let listener_ip = ip("13.0.0.20");
    w.user_listen(b, listener_ip, 4000);
    let conn = w.user_connect(a, listener_ip, 4000).unwrap();
    assert_eq!(w.conn(conn).state, TcpState::Established);
    let server = w.conn_peer(conn).expect("server conn");
    assert_eq!(w.conn(server).state, TcpState::Established);
    // Handshake algebra: each side expects the other's ISN + 1.
    let csnd = w.conn(conn).snd_nxt;
    assert_eq!(w.conn(server).rcv_nxt, csnd);

    // Two sends are delivered in order, once.
    w.send(conn, b"abc").unwrap();
    w.send(conn, b"defg").unwrap();
    w.settle();
    assert_eq!(w.drain_recv(server), b"abcdefg");
    // Sequence arithmetic: 7 payload bytes advanced both counters.
    assert_eq!(w.conn(server).rcv_nxt, csnd.wrapping_add(7));
}

#[test]
fn connect_to_closed_port_refused() {
    let (mut w, a, _b) = two_host_world();
    assert_eq!(
        w.user_connect(a, ip("13.0.0.20"), 1234),
        Err(TcpError::ConnectionRefused)
    );
}

#[test]
fn arp_resolution_and_identity() {
    let (mut w, a, b) = two_host_world();
    // Own address resolves to the interface MAC without traffic.
    let own = w.host(a).interfaces[0].mac;
    assert_eq!(w.arp_resolve(a, ip("13.0.0.5")).unwrap(), own);
    // Neighbor resolution runs request/reply and caches.
    let tap = w.add_tap("process").unwrap();
    let beta_mac = w.host(b).interfaces[0].mac;
    assert_eq!(w.arp_resolve(a, ip("13.0.0.20")).unwrap(), beta_mac);
    assert!(w.host(a).arp_table.contains_key(&ip("13.0.0.20")));
    let arps: Vec<_> = w
        .tap_records(tap)
        .iter()
        .filter(|r| r.class == Classification::Arp)
        .collect();
    assert_eq!(arps.len(), 2, "request then reply");
    // Unreachable space.
    assert_eq!(w.arp_resolve(a, ip("99.0.0.9")), Err(NetError::Unreachable));
    // No responder inside the subnet.
    assert_eq!(w.arp_resolve(a, ip("13.0.0.99")), Err(NetError::Timeout));
}

#[test]
fn poison_redirects_all_victim_frames_until_overwritten() {
    let mut w = World::new(9);
    w.add_segment("process", Level::Process2, cidr("13.0.0.0/24"))
        .unwrap();
    let victim = w
        .add_host("victim", &[("process", ip("13.0.0.5"))], HardeningProfile::default())
        .unwrap();
    let peer = w
        .add_host("peer", &[("process", ip("13.0.0.20"))], HardeningProfile::default())
        .unwrap();
    let attacker = w
        .add_host("mallory", &[("process", ip("13.0.0.66"))], HardeningProfile::default())
        .unwrap();

    w.arp_poison(attacker, victim, ip("13.0.0.20")).unwrap();
    w.settle();

    // Every frame the victim addresses to the impersonated IP lands on the
    // attacker host, none at the true peer.
    let before = w.foreign_rx.len();
    let app = w.add_app(victim, Box::new(rosrange::simnet::UserSock::default()));
    let _conn = w.connect(app, victim, ip("13.0.0.20"), 4000);
    w.settle();
    let redirected: Vec<_> = w.foreign_rx[before..]
        .iter()
        .filter(|f| f.host == attacker && f.dst == ip("13.0.0.20"))
        .collect();
    assert_eq!(redirected.len(), 1, "SYN went to the attacker");
    assert_eq!(w.drops.len(), 0);

    // After the TTL lapses without re-assertion the victim re-resolves and
    // learns the true MAC again.
    let ttl = w.config.poison_ttl;
    w.run_for(ttl + SimTime::from_micros(1));
    let true_mac = w.host(peer).interfaces[0].mac;
    assert_eq!(w.arp_resolve(victim, ip("13.0.0.20")).unwrap(), true_mac);
}

#[test]
fn poison_requires_shared_segment() {
    let mut w = World::new(9);
    w.add_segment("process", Level::Process2, cidr("13.0.0.0/24"))
        .unwrap();
    w.add_segment("it", Level::It4, cidr("15.0.0.0/24")).unwrap();
    let victim = w
        .add_host("victim", &[("process", ip("13.0.0.5"))], HardeningProfile::default())
        .unwrap();
    let outsider = w
        .add_host("outsider", &[("it", ip("15.0.0.5"))], HardeningProfile::default())
        .unwrap();
    assert_eq!(
        w.arp_poison(outsider, victim, ip("13.0.0.20")),
        Err(NetError::NotOnSegment)
    );
}

#[test]
fn firewall_filters_cross_level_traffic() {
    use rosrange::simnet::FirewallRule;
    let mut w = World::new(3);
    w.add_segment("it", Level::It4, cidr("15.0.0.0/24")).unwrap();
    w.add_segment("process", Level::Process2, cidr("13.0.0.0/24"))
        .unwrap();
    let d1 = w
        .add_host("d1", &[("it", ip("15.0.0.30"))], HardeningProfile::default())
        .unwrap();
    let s1 = w
        .add_host("s1", &[("process", ip("13.0.0.5"))], HardeningProfile::default())
        .unwrap();
    // Gateway with a single allow for one host pair.
    w.add_firewall(
        "fw",
        &[("it", ip("15.0.0.254")), ("process", ip("13.0.0.254"))],
        vec![FirewallRule::allow(cidr("15.0.0.30/32"), cidr("13.0.0.20/32"))],
    )
    .unwrap();
    w.add_route(d1, cidr("13.0.0.0/24"), ip("15.0.0.254"));
    w.add_route(s1, cidr("15.0.0.0/24"), ip("13.0.0.254"));

    w.user_listen(s1, ip("13.0.0.5"), 4000);
    assert_eq!(w.probe_tcp(d1, ip("13.0.0.5"), 4000), Reach::Filtered);
    assert!(!w.drops.is_empty());
}

#[test]
fn spoofed_fin_ack_tears_down_session() {
    let (mut w, a, b) = two_host_world();
    let attacker = w
        .add_host("mallory", &[("process", ip("13.0.0.66"))], HardeningProfile::default())
        .unwrap();
    w.user_listen(b, ip("13.0.0.20"), 4000);
    let client = w.user_connect(a, ip("13.0.0.20"), 4000).unwrap();
    let server = w.conn_peer(client).unwrap();
    w.send(client, &[0u8; 16]).unwrap();
    w.settle();

    // The server (victim) expects exactly rcv_nxt/snd_nxt.
    let seq = w.conn(server).rcv_nxt;
    let ack = w.conn(server).snd_nxt;
    let spoof = SpoofedSegment {
        src: (ip("13.0.0.5"), w.conn(client).local.1),
        dst: (ip("13.0.0.20"), 4000),
        seq,
        ack,
        flags: TcpFlags::fin_ack(),
        payload: Vec::new(),
    };
    w.inject_segment(attacker, spoof).unwrap();
    w.settle();
    // Victim consumed the spoofed FIN and moved toward teardown.
    assert_eq!(w.conn(server).state, TcpState::CloseWait);
    // Sending into the half-closed connection now fails.
    assert_eq!(w.send(server, b"x"), Err(TcpError::Reset));
    // The application reacts by closing its side, which cascades to the
    // true peer; once it closes too, both ends are gone.
    w.close(server);
    w.settle();
    assert_eq!(w.conn(client).state, TcpState::CloseWait);
    w.close(client);
    w.settle();
    assert_eq!(w.conn(server).state, TcpState::Closed);
    assert_eq!(w.conn(client).state, TcpState::Closed);
}

#[test]
fn out_of_window_fin_is_ignored() {
    let (mut w, a, b) = two_host_world();
    let attacker = w
        .add_host("mallory", &[("process", ip("13.0.0.66"))], HardeningProfile::default())
        .unwrap();
    w.user_listen(b, ip("13.0.0.20"), 4000);
    let client = w.user_connect(a, ip("13.0.0.20"), 4000).unwrap();
    let server = w.conn_peer(client).unwrap();
    let spoof = SpoofedSegment {
        src: (ip("13.0.0.5"), w.conn(client).local.1),
        dst: (ip("13.0.0.20"), 4000),
        seq: w.conn(server).rcv_nxt.wrapping_add(1),
        ack: w.conn(server).snd_nxt,
        flags: TcpFlags::fin_ack(),
        payload: Vec::new(),
    };
    w.inject_segment(attacker, spoof).unwrap();
    w.settle();
    assert_eq!(w.conn(server).state, TcpState::Established);
    assert_eq!(w.conn(client).state, TcpState::Established);
}

#[test]
fn injection_from_off_path_host_errors() {
    let mut w = World::new(4);
    w.add_segment("process", Level::Process2, cidr("13.0.0.0/24"))
        .unwrap();
    w.add_segment("cloud", Level::Cloud, cidr("17.0.0.0/24")).unwrap();
    let _a = w
        .add_host("alpha", &[("process", ip("13.0.0.5"))], HardeningProfile::default())
        .unwrap();
    let _b = w
        .add_host("beta", &[("process", ip("13.0.0.20"))], HardeningProfile::default())
        .unwrap();
    let far = w
        .add_host("far", &[("cloud", ip("17.0.0.9"))], HardeningProfile::default())
        .unwrap();
    let spoof = SpoofedSegment {
        src: (ip("13.0.0.5"), 1),
        dst: (ip("13.0.0.20"), 2),
        seq: 0,
        ack: 0,
        flags: TcpFlags::fin_ack(),
        payload: Vec::new(),
    };
    assert_eq!(w.inject_segment(far, spoof), Err(NetError::OffPath));
}

#[test]
fn determinism_same_seed_same_trace() {
    let run = |seed: u64| -> (Vec<String>, String) {
        let mut w = World::new(seed);
        w.add_segment("process", Level::Process2, cidr("13.0.0.0/24"))
            .unwrap();
        let a = w
            .add_host("alpha", &[("process", ip("13.0.0.5"))], HardeningProfile::default())
            .unwrap();
        let b = w
            .add_host("beta", &[("process", ip("13.0.0.20"))], HardeningProfile::default())
            .unwrap();
        let tap = w.add_tap("process").unwrap();
        w.user_listen(b, ip("13.0.0.20"), 4000);
        let conn = w.user_connect(a, ip("13.0.0.20"), 4000).unwrap();
        for i in 0..10u8 {
            w.send(conn, &[i; 8]).unwrap();
        }
        w.settle();
        let events: Vec<String> = w
            .events
            .iter()
            .map(|e| format!("{} {} {} {}", e.t.render(), e.kind, e.host, e.detail))
            .collect();
        let capture = rosrange::dissector::export_capture_string(w.tap_records(tap));
        (events, capture)
    };
    let (e1, c1) = run(42);
    let (e2, c2) = run(42);
    assert_eq!(e1, e2);
    assert_eq!(c1, c2);
    let (_e3, c3) = run(43);
    assert_ne!(c1, c3, "different seed produces different ISNs");
}

#[test]
fn taps_are_passive_and_identical() {
    let run = |with_taps: bool| -> Vec<u8> {
        let mut w = World::new(5);
        w.add_segment("process", Level::Process2, cidr("13.0.0.0/24"))
            .unwrap();
        let a = w
            .add_host("alpha", &[("process", ip("13.0.0.5"))], HardeningProfile::default())
            .unwrap();
        let b = w
            .add_host("beta", &[("process", ip("13.0.0.20"))], HardeningProfile::default())
            .unwrap();
        if with_taps {
            w.add_tap("process").unwrap();
            w.add_tap("process").unwrap();
        }
        w.user_listen(b, ip("13.0.0.20"), 4000);
        let conn = w.user_connect(a, ip("13.0.0.20"), 4000).unwrap();
        w.send(conn, b"payload").unwrap();
        w.settle();
        let server = w.conn_peer(conn).unwrap();
        w.drain_recv(server)
    };
    assert_eq!(run(true), run(false));

    // Two taps on the same segment see identical streams.
    let mut w = World::new(5);
    w.add_segment("process", Level::Process2, cidr("13.0.0.0/24"))
        .unwrap();
    let a = w
        .add_host("alpha", &[("process", ip("13.0.0.5"))], HardeningProfile::default())
        .unwrap();
    let b = w
        .add_host("beta", &[("process", ip("13.0.0.20"))], HardeningProfile::default())
        .unwrap();
    let t1 = w.add_tap("process").unwrap();
    let t2 = w.add_tap("process").unwrap();
    w.user_listen(b, ip("13.0.0.20"), 4000);
    let conn = w.user_connect(a, ip("13.0.0.20"), 4000).unwrap();
    w.send(conn, b"payload").unwrap();
    w.settle();
    assert_eq!(w.tap_records(t1), w.tap_records(t2));
    assert!(!w.tap_records(t1).is_empty());
}

#[test]
fn idle_world_tap_is_empty() {
    let (mut w, _a, _b) = two_host_world();
    let tap = w.add_tap("process").unwrap();
    w.run_for(SimTime::from_secs_f64(5.0));
    assert!(w.tap_records(tap).is_empty());
}
