//! In-process cyber range for a segmented industrial ROS 1 network.
//!
//! The crate simulates the network (L2/L3/L4), the ROS computational-graph
//! protocols riding on it, a passive traffic dissector, four red-team attack
//! procedures, and the harness that scores them against the exercise goals
//! and renders the incident report.

pub mod attacks;
pub mod dissector;
pub mod rosgraph;
pub mod simnet;
