//! Per-node routing state machine.
//!
//! A [`Node`] reacts to received messages and timers and answers with a list
//! of [`Action`]s (transmissions, timers, deliveries, instrumentation notes).
//! It never touches the radio or batteries itself; the simulation loop turns
//! actions into scheduled events and energy debits.
//!
//! Two modes share the same discovery machinery. [`Protocol::AomrLm`] steers
//! route replies and data by node energy class; [`Protocol::Aomdv`] takes the
//! first reverse neighbour and the first stored path.

mod message;
mod node;
mod paths;
mod table;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use message::{
    DataPacket, HelloMessage, Message, PacketSizes, PathKey, RerrMessage, RrepMessage,
    RreqMessage,
};
pub use node::{
    destination_reply, CollectedCopy, DiscoveryContext, LabelHop, Node, NodeCtx, PathLabel,
    SourceState,
};
pub use paths::{select_path, SourcePathSet, StoredPath};
pub use table::{choose_by_class, Candidate, HopBound, RouteEntry, RouteListItem};

use crate::energy::{Joules, NodeClass};
use crate::{Error, NodeId, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Protocol {
    #[serde(rename = "aomr-lm")]
    AomrLm,
    #[serde(rename = "aomdv")]
    Aomdv,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::AomrLm => "aomr-lm",
            Protocol::Aomdv => "aomdv",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "aomr-lm" | "aomrlm" | "aomr_lm" => Ok(Protocol::AomrLm),
            "aomdv" => Ok(Protocol::Aomdv),
            other => Err(Error::invalid(
                "protocol",
                format!("unknown protocol `{other}` (expected aomr-lm or aomdv)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub protocol: Protocol,
    pub alpha: f64,
    pub rreq_wait: SimTime,
    pub rrep_wait: SimTime,
    pub hello_interval: SimTime,
    /// Consecutive silent HELLO intervals before a link is declared broken.
    pub allowed_hello_misses: u32,
    /// Idle time after which reverse entries and source path sets expire.
    pub route_timeout: SimTime,
    /// A discovery that produced no RREP by then is retried.
    pub discovery_timeout: SimTime,
    pub buffer_capacity: usize,
    pub rreq_cache: usize,
    pub sizes: PacketSizes,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            protocol: Protocol::AomrLm,
            alpha: 0.42,
            rreq_wait: 1.0,
            rrep_wait: 1.0,
            hello_interval: 1.0,
            allowed_hello_misses: 3,
            route_timeout: 10.0,
            discovery_timeout: 3.0,
            buffer_capacity: 64,
            rreq_cache: 100,
            sizes: PacketSizes::default(),
        }
    }
}

impl ProtocolConfig {
    pub fn with_protocol(protocol: Protocol) -> Self {
        ProtocolConfig {
            protocol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TimerKind {
    Hello,
    /// Destination side: the RREQ collection window for one discovery closed.
    RreqWindow { source: NodeId, discovery: u32 },
    /// Source side: stop waiting for further RREPs and pick a path.
    RrepWindow { destination: NodeId, discovery: u32 },
    DiscoveryTimeout { destination: NodeId, discovery: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    BufferOverflow,
    NoRoute,
}

/// Observable protocol milestones, used by tests, audits and traces.
#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolEvent {
    DiscoveryStarted {
        destination: NodeId,
        discovery: u32,
    },
    /// An RREP left `from` towards `to` (emitted by the destination and by
    /// every forwarder).
    RrepSent {
        source: NodeId,
        destination: NodeId,
        discovery: u32,
        reply_id: u32,
        beta: Joules,
        from: NodeId,
        to: NodeId,
        path_class: NodeClass,
    },
    /// A forwarder had no unmarked reverse neighbour left.
    RrepDropped {
        source: NodeId,
        discovery: u32,
        reply_id: u32,
    },
    PathRegistered {
        destination: NodeId,
        key: PathKey,
        class: NodeClass,
        hopcount: u32,
    },
    PathActivated {
        destination: NodeId,
        key: PathKey,
        class: NodeClass,
    },
    /// A path was erased at its source, by RERR or by local link detection.
    RerrAtSource {
        destination: NodeId,
        key: PathKey,
        local: bool,
    },
    HelloMiss {
        neighbor: NodeId,
        misses: u32,
    },
    LinkFailure {
        neighbor: NodeId,
    },
    DataDeparted {
        destination: NodeId,
        key: PathKey,
        path_class: NodeClass,
        max_class: NodeClass,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Broadcast(Message),
    Unicast { to: NodeId, message: Message },
    Timer { delay: SimTime, timer: TimerKind },
    Delivered(DataPacket),
    Dropped { packet: DataPacket, reason: DropReason },
    Note(ProtocolEvent),
}
