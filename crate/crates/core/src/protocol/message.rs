use std::fmt::{self, Write as _};

use crate::energy::{Joules, NodeClass};
use crate::{NodeId, SimTime};

/// Identifies one reverse path materialised by a discovery: the source's
/// sequence number for that discovery and the destination's reply index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathKey {
    pub discovery: u32,
    pub reply_id: u32,
}

impl fmt::Display for PathKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.discovery, self.reply_id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RreqMessage {
    pub source: NodeId,
    pub destination: NodeId,
    pub rreq_id: u32,
    pub source_seqnum: u32,
    pub dest_seqnum_known: u32,
    /// Hops from the source to the node that transmitted this copy; also the
    /// hop count that node advertises.
    pub hopcount: u32,
    /// Residual energies summed from the source through the sender.
    pub e_sum_so_far: Joules,
    /// Residual energy of the transmitting node.
    pub sender_energy: Joules,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RrepMessage {
    pub source: NodeId,
    pub destination: NodeId,
    pub dest_seqnum: u32,
    /// Source sequence number of the discovery being answered.
    pub discovery: u32,
    /// Hops from the transmitting node to the destination.
    pub hopcount: u32,
    pub beta: Joules,
    /// Lowest node class met so far along this reverse path.
    pub path_class: NodeClass,
    pub reply_id: u32,
}

impl RrepMessage {
    pub fn path_key(&self) -> PathKey {
        PathKey {
            discovery: self.discovery,
            reply_id: self.reply_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerrMessage {
    pub unreachable_destination: NodeId,
    pub broken_nexthop: NodeId,
    pub origin: NodeId,
    /// Source of the broken path and the path itself.
    pub source: NodeId,
    pub path: PathKey,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HelloMessage {
    pub origin: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataPacket {
    pub flow: u32,
    pub seq: u64,
    pub source: NodeId,
    pub destination: NodeId,
    pub path: PathKey,
    pub payload_bytes: u32,
    pub sent_at: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Rreq(RreqMessage),
    Rrep(RrepMessage),
    Rerr(RerrMessage),
    Hello(HelloMessage),
    Data(DataPacket),
}

/// Sizes used for energy accounting and airtime.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PacketSizes {
    pub rreq: u32,
    pub rrep: u32,
    pub rerr: u32,
    pub hello: u32,
}

impl Default for PacketSizes {
    fn default() -> Self {
        PacketSizes {
            rreq: 64,
            rrep: 64,
            rerr: 32,
            hello: 32,
        }
    }
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Rreq(_) => "RREQ",
            Message::Rrep(_) => "RREP",
            Message::Rerr(_) => "RERR",
            Message::Hello(_) => "HELLO",
            Message::Data(_) => "DATA",
        }
    }

    pub fn size_bytes(&self, sizes: &PacketSizes) -> u32 {
        match self {
            Message::Rreq(_) => sizes.rreq,
            Message::Rrep(_) => sizes.rrep,
            Message::Rerr(_) => sizes.rerr,
            Message::Hello(_) => sizes.hello,
            Message::Data(d) => d.payload_bytes,
        }
    }

    pub fn size_bits(&self, sizes: &PacketSizes) -> u64 {
        u64::from(self.size_bytes(sizes)) * 8
    }

    /// Stable multi-line dump: the kind, then one `field=value` line per field.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        out.push_str(self.kind());
        out.push('\n');
        let mut field = |k: &str, v: &dyn fmt::Display| {
            let _ = writeln!(out, "{k}={v}");
        };
        match self {
            Message::Rreq(m) => {
                field("source", &m.source);
                field("destination", &m.destination);
                field("rreq_id", &m.rreq_id);
                field("source_seqnum", &m.source_seqnum);
                field("dest_seqnum_known", &m.dest_seqnum_known);
                field("hopcount", &m.hopcount);
                field("e_sum", &Float(m.e_sum_so_far));
                field("sender_energy", &Float(m.sender_energy));
            }
            Message::Rrep(m) => {
                field("source", &m.source);
                field("destination", &m.destination);
                field("dest_seqnum", &m.dest_seqnum);
                field("discovery", &m.discovery);
                field("hopcount", &m.hopcount);
                field("beta", &Float(m.beta));
                field("path_class", &m.path_class);
                field("reply_id", &m.reply_id);
            }
            Message::Rerr(m) => {
                field("unreachable_destination", &m.unreachable_destination);
                field("broken_nexthop", &m.broken_nexthop);
                field("origin", &m.origin);
                field("source", &m.source);
                field("path", &m.path);
            }
            Message::Hello(m) => {
                field("origin", &m.origin);
            }
            Message::Data(m) => {
                field("flow", &m.flow);
                field("seq", &m.seq);
                field("source", &m.source);
                field("destination", &m.destination);
                field("path", &m.path);
                field("payload_bytes", &m.payload_bytes);
                field("sent_at", &Float(m.sent_at));
            }
        }
        out
    }
}

/// Fixed-precision float rendering so dumps are stable across platforms.
struct Float(f64);

impl fmt::Display for Float {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_has_one_line_per_field() {
        let m = Message::Rrep(RrepMessage {
            source: 1,
            destination: 9,
            dest_seqnum: 3,
            discovery: 2,
            hopcount: 4,
            beta: 240.0 / 7.0,
            path_class: NodeClass::Average,
            reply_id: 1,
        });
        let dump = m.dump();
        let lines: Vec<&str> = dump.lines().collect();
        assert_eq!(lines[0], "RREP");
        assert_eq!(lines.len(), 9);
        assert!(lines.contains(&"beta=34.285714286"));
        assert!(lines.contains(&"path_class=average"));
    }

    #[test]
    fn sizes() {
        let s = PacketSizes::default();
        let hello = Message::Hello(HelloMessage { origin: 0 });
        assert_eq!(hello.size_bits(&s), 256);
        let data = Message::Data(DataPacket {
            flow: 0,
            seq: 0,
            source: 0,
            destination: 1,
            path: PathKey {
                discovery: 1,
                reply_id: 0,
            },
            payload_bytes: 512,
            sent_at: 0.0,
        });
        assert_eq!(data.size_bits(&s), 4096);
    }
}
