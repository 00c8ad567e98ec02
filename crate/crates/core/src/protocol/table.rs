use std::cmp::Ordering;
use std::fmt;

use crate::energy::{Joules, NodeClass};
use crate::{NodeId, SimTime};

/// Advertised hop count; `Infinite` while an entry is being rebuilt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum HopBound {
    Finite(u32),
    Infinite,
}

impl HopBound {
    pub fn is_finite(self) -> bool {
        matches!(self, HopBound::Finite(_))
    }

    pub fn exceeds(self, hops: u32) -> bool {
        match self {
            HopBound::Finite(h) => h > hops,
            HopBound::Infinite => true,
        }
    }
}

impl fmt::Display for HopBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HopBound::Finite(h) => write!(f, "{h}"),
            HopBound::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteListItem {
    pub nexthop: NodeId,
    pub hopcount: u32,
    /// Residual energy the neighbour advertised when it sent us the RREQ.
    pub neighbor_energy: Joules,
    /// Already taken by a reverse path of the current discovery.
    pub marked: bool,
    pub neighbor_class: Option<NodeClass>,
}

impl RouteListItem {
    pub fn new(nexthop: NodeId, hopcount: u32, neighbor_energy: Joules) -> Self {
        RouteListItem {
            nexthop,
            hopcount,
            neighbor_energy,
            marked: false,
            neighbor_class: None,
        }
    }
}

/// One routing-table entry: sequence number, advertised hop count, the list
/// of usable next hops and an expiry time.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteEntry {
    pub destination: NodeId,
    pub sequence_number: u32,
    pub advertised_hopcount: HopBound,
    pub route_list: Vec<RouteListItem>,
    pub expiration_timeout: SimTime,
}

impl RouteEntry {
    pub fn new(destination: NodeId, sequence_number: u32, expiration_timeout: SimTime) -> Self {
        RouteEntry {
            destination,
            sequence_number,
            advertised_hopcount: HopBound::Infinite,
            route_list: Vec::new(),
            expiration_timeout,
        }
    }

    pub fn item(&self, nexthop: NodeId) -> Option<&RouteListItem> {
        self.route_list.iter().find(|i| i.nexthop == nexthop)
    }

    /// Append an item unless that next hop is already listed.
    pub fn insert(&mut self, item: RouteListItem) -> bool {
        if self.item(item.nexthop).is_some() {
            return false;
        }
        self.route_list.push(item);
        true
    }

    pub fn remove_nexthop(&mut self, nexthop: NodeId) -> bool {
        let before = self.route_list.len();
        self.route_list.retain(|i| i.nexthop != nexthop);
        before != self.route_list.len()
    }

    /// Every listed hop count stays within the advertised bound.
    pub fn is_consistent(&self) -> bool {
        let mut seen: Vec<NodeId> = self.route_list.iter().map(|i| i.nexthop).collect();
        seen.sort_unstable();
        let distinct = seen.windows(2).all(|w| w[0] != w[1]);
        let bounded = match self.advertised_hopcount {
            HopBound::Finite(adv) => self.route_list.iter().all(|i| i.hopcount <= adv),
            HopBound::Infinite => true,
        };
        distinct && bounded
    }
}

/// A reverse-path candidate as seen by a node forwarding an RREP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub nexthop: NodeId,
    pub class: NodeClass,
    pub energy: Joules,
    pub hopcount: u32,
}

/// Preference inside one class: more energy, then fewer hops, then lower id.
fn better(a: &Candidate, b: &Candidate) -> Ordering {
    b.energy
        .total_cmp(&a.energy)
        .then(a.hopcount.cmp(&b.hopcount))
        .then(a.nexthop.cmp(&b.nexthop))
}

/// Pick the next reverse hop by class: a neighbour of our own class if any,
/// else the lowest class above ours, else the highest class below ours.
/// Returns an index into `candidates`.
pub fn choose_by_class(own: NodeClass, candidates: &[Candidate]) -> Option<usize> {
    let target = if candidates.iter().any(|c| c.class == own) {
        own
    } else if let Some(above) = candidates.iter().map(|c| c.class).filter(|c| *c > own).min() {
        above
    } else {
        candidates.iter().map(|c| c.class).filter(|c| *c < own).max()?
    };
    candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.class == target)
        .min_by(|(_, a), (_, b)| better(a, b))
        .map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use NodeClass::*;

    fn cand(id: NodeId, class: NodeClass, energy: f64) -> Candidate {
        Candidate {
            nexthop: id,
            class,
            energy,
            hopcount: 2,
        }
    }

    #[test]
    fn lowest_class_above_when_no_peer() {
        let c = [cand(1, Low, 5.0), cand(2, High, 50.0)];
        assert_eq!(choose_by_class(Average, &c), Some(1));
    }

    #[test]
    fn same_class_first() {
        let c = [cand(1, Average, 20.0), cand(2, High, 50.0)];
        assert_eq!(choose_by_class(Average, &c), Some(0));
    }

    #[test]
    fn highest_below_as_last_resort() {
        let c = [cand(4, Low, 5.0)];
        assert_eq!(choose_by_class(High, &c), Some(0));
        let c = [cand(4, Low, 5.0), cand(5, Average, 20.0)];
        assert_eq!(choose_by_class(High, &c), Some(1));
    }

    #[test]
    fn lowest_above_skips_higher() {
        let c = [cand(1, High, 50.0), cand(2, Average, 20.0)];
        assert_eq!(choose_by_class(Low, &c), Some(1));
    }

    #[test]
    fn tie_break_energy_then_hops_then_id() {
        let mut c = vec![cand(7, Average, 20.0), cand(3, Average, 25.0)];
        assert_eq!(choose_by_class(Average, &c), Some(1));
        c[1].energy = 20.0;
        c[0].hopcount = 1;
        assert_eq!(choose_by_class(Average, &c), Some(0));
        c[0].hopcount = 2;
        assert_eq!(choose_by_class(Average, &c), Some(1));
    }

    #[test]
    fn empty_candidates() {
        assert_eq!(choose_by_class(Average, &[]), None);
    }

    #[test]
    fn entry_keeps_nexthops_distinct() {
        let mut e = RouteEntry::new(3, 1, 10.0);
        assert!(e.insert(RouteListItem::new(4, 2, 10.0)));
        assert!(!e.insert(RouteListItem::new(4, 1, 12.0)));
        e.advertised_hopcount = HopBound::Finite(2);
        assert!(e.is_consistent());
        e.route_list.push(RouteListItem::new(5, 3, 1.0));
        assert!(!e.is_consistent());
        assert!(e.remove_nexthop(5));
        assert!(!e.remove_nexthop(5));
    }

    #[test]
    fn hop_bound_ordering() {
        assert!(HopBound::Infinite.exceeds(1000));
        assert!(HopBound::Finite(4).exceeds(2));
        assert!(!HopBound::Finite(2).exceeds(2));
        assert!(HopBound::Finite(9) < HopBound::Infinite);
    }
}
