//! ROS 1 computational-graph protocols over the simulated network: the
//! Master registry and its RPC surface, Slave callbacks, TCPROS framing,
//! periodic publisher/subscriber nodes, the remote-launch channel, and the
//! action-client tool whose message path runs through the YAML parser.

pub mod axclient;
pub mod header;
pub mod launch;
pub mod nodes;
pub mod registry;
pub mod rpc;
pub mod session;

pub use axclient::{
    axclient_send_goal, default_gadget_registry, run_local_tool, spawn_reverse_shell,
    tool_process_goal, GoalOutcome, LaunchServiceApp, SimEffect,
};
pub use header::{
    decode_connection_header, decode_header_fields, encode_connection_header, encode_frame,
    ConnectionHeader, FrameBuffer, MalformedHeader,
};
pub use launch::{
    attack_launch_file, parse_launch, remote_launch, LaunchError, LaunchSpec, RemoteTool,
};
pub use nodes::{
    counter_payload, parse_counter, spawn, ControllerApp, MasterApp, PublisherApp, RelayTarget,
    ShellClientApp, ShellListenerApp, SubscriberApp, SupervisoryLinkApp, CONTROLLER_CMD_PORT,
    CONTROLLER_MAINT_PORT, EXPLOIT_PAYLOAD, FORGED_COUNTER_BASE, LAUNCH_PORT, MASTER_PORT,
};
pub use registry::{MasterRegistry, PublisherUpdate, RegistryOp};
pub use rpc::{decode_rpc, encode_rpc, format_uri, parse_uri, rpc_call, RpcBuffer};
pub use session::{Origin, PrincipalSession, SessionId, User};
