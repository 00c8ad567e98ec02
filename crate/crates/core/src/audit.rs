//! Post-discovery consistency checks over node tables and recorded events.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::protocol::{HopBound, Node, ProtocolEvent};
use crate::{NodeId, SimTime};

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// A reverse next hop does not advertise strictly fewer hops.
    Loop {
        node: NodeId,
        source: NodeId,
        nexthop: NodeId,
    },
    /// Two replies of one discovery crossed the same link.
    SharedLink {
        source: NodeId,
        discovery: u32,
        a: NodeId,
        b: NodeId,
    },
    /// A forwarder sent a second reply of one discovery to the same neighbour.
    MarkedReuse {
        source: NodeId,
        discovery: u32,
        from: NodeId,
        to: NodeId,
    },
    /// Replies of one discovery carried different averages.
    SplitBeta {
        source: NodeId,
        discovery: u32,
    },
    /// A data packet left on a path below the best class held.
    ClassOrder { node: NodeId, at: SimTime },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Loop {
                node,
                source,
                nexthop,
            } => write!(f, "loop: {node} -> {nexthop} towards {source}"),
            Violation::SharedLink {
                source,
                discovery,
                a,
                b,
            } => write!(f, "link {a}-{b} reused in discovery {source}/{discovery}"),
            Violation::MarkedReuse {
                source,
                discovery,
                from,
                to,
            } => write!(f, "marked item {from}->{to} reused in {source}/{discovery}"),
            Violation::SplitBeta { source, discovery } => {
                write!(f, "several averages in discovery {source}/{discovery}")
            }
            Violation::ClassOrder { node, at } => write!(f, "class order broken at {node} t={at}"),
        }
    }
}

/// Every reverse next hop must advertise fewer hops than the node holding it,
/// for the same source sequence number. A source counts as advertising zero.
pub fn loop_freedom(nodes: &[Node]) -> Vec<Violation> {
    let advertised = |j: NodeId, source: NodeId, seq: u32| -> Option<HopBound> {
        if j == source {
            return Some(HopBound::Finite(0));
        }
        nodes
            .get(j as usize)?
            .reverse_entry(source)
            .filter(|e| e.sequence_number == seq)
            .map(|e| e.advertised_hopcount)
    };
    let mut out = Vec::new();
    for node in nodes {
        for (source, entry) in node.reverse_entries() {
            for item in &entry.route_list {
                let ok = match advertised(item.nexthop, *source, entry.sequence_number) {
                    Some(adv_j) => adv_j < entry.advertised_hopcount,
                    None => false,
                };
                if !ok {
                    out.push(Violation::Loop {
                        node: node.id(),
                        source: *source,
                        nexthop: item.nexthop,
                    });
                }
            }
        }
    }
    out
}

/// Reply-path checks over recorded `RrepSent` events: link-disjointness,
/// no reuse of a marked item, one β per discovery.
pub fn reply_paths<'a, I>(events: I) -> Vec<Violation>
where
    I: IntoIterator<Item = &'a ProtocolEvent>,
{
    #[derive(Default)]
    struct Discovery {
        directed: BTreeSet<(NodeId, NodeId)>,
        undirected: BTreeSet<(NodeId, NodeId)>,
        betas: BTreeSet<u64>,
    }
    let mut by_discovery: BTreeMap<(NodeId, NodeId, u32), Discovery> = BTreeMap::new();
    let mut out = Vec::new();
    for ev in events {
        let ProtocolEvent::RrepSent {
            source,
            destination,
            discovery,
            beta,
            from,
            to,
            ..
        } = ev
        else {
            continue;
        };
        let d = by_discovery
            .entry((*source, *destination, *discovery))
            .or_default();
        d.betas.insert(beta.to_bits());
        if !d.directed.insert((*from, *to)) {
            out.push(Violation::MarkedReuse {
                source: *source,
                discovery: *discovery,
                from: *from,
                to: *to,
            });
        } else if !d.undirected.insert((*from.min(to), *from.max(to))) {
            out.push(Violation::SharedLink {
                source: *source,
                discovery: *discovery,
                a: *from.min(to),
                b: *from.max(to),
            });
        }
    }
    for ((source, _, discovery), d) in by_discovery {
        if d.betas.len() > 1 {
            out.push(Violation::SplitBeta { source, discovery });
        }
    }
    out
}

/// Data departures whose path class is below the best class held.
pub fn class_order(events: &[(SimTime, NodeId, ProtocolEvent)]) -> Vec<Violation> {
    events
        .iter()
        .filter_map(|(t, node, ev)| match ev {
            ProtocolEvent::DataDeparted {
                path_class,
                max_class,
                ..
            } if path_class != max_class => Some(Violation::ClassOrder {
                node: *node,
                at: *t,
            }),
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::NodeClass;

    fn sent(reply: u32, from: NodeId, to: NodeId, beta: f64) -> ProtocolEvent {
        ProtocolEvent::RrepSent {
            source: 0,
            destination: 9,
            discovery: 1,
            reply_id: reply,
            beta,
            from,
            to,
            path_class: NodeClass::High,
        }
    }

    #[test]
    fn disjoint_replies_pass() {
        let ev = [sent(0, 9, 3, 2.0), sent(0, 3, 0, 2.0), sent(1, 9, 4, 2.0), sent(1, 4, 0, 2.0)];
        assert!(reply_paths(&ev).is_empty());
    }

    #[test]
    fn reused_link_is_flagged() {
        let ev = [sent(0, 9, 3, 2.0), sent(1, 9, 3, 2.0)];
        assert!(matches!(reply_paths(&ev)[0], Violation::MarkedReuse { .. }));
        let ev = [sent(0, 9, 3, 2.0), sent(1, 3, 9, 2.0)];
        assert!(matches!(reply_paths(&ev)[0], Violation::SharedLink { .. }));
    }

    #[test]
    fn split_beta_is_flagged() {
        let ev = [sent(0, 9, 3, 2.0), sent(1, 9, 4, 2.5)];
        assert_eq!(
            reply_paths(&ev),
            vec![Violation::SplitBeta {
                source: 0,
                discovery: 1
            }]
        );
    }
}
