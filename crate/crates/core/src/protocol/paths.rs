use std::collections::BTreeMap;

use super::message::PathKey;
use super::Protocol;
use crate::energy::NodeClass;
use crate::{NodeId, SimTime};

/// A path the source learned from one RREP.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredPath {
    pub key: PathKey,
    pub nexthop: NodeId,
    pub hopcount: u32,
    pub class: NodeClass,
    /// Order in which the RREP reached the source.
    pub arrival: u64,
}

/// Source-side view of every path to one destination, grouped by class.
#[derive(Debug, Clone, PartialEq)]
pub struct SourcePathSet {
    pub destination: NodeId,
    pub classes: BTreeMap<NodeClass, Vec<StoredPath>>,
    pub active: Option<PathKey>,
    /// Set when the first RREP of a discovery arrives.
    pub rrep_deadline: Option<SimTime>,
    arrivals: u64,
}

impl SourcePathSet {
    pub fn new(destination: NodeId) -> Self {
        SourcePathSet {
            destination,
            classes: BTreeMap::new(),
            active: None,
            rrep_deadline: None,
            arrivals: 0,
        }
    }

    pub fn insert(&mut self, key: PathKey, nexthop: NodeId, hopcount: u32, class: NodeClass) {
        if self.get(key).is_some() {
            return;
        }
        let arrival = self.arrivals;
        self.arrivals += 1;
        self.classes.entry(class).or_default().push(StoredPath {
            key,
            nexthop,
            hopcount,
            class,
            arrival,
        });
    }

    pub fn get(&self, key: PathKey) -> Option<&StoredPath> {
        self.paths().find(|p| p.key == key)
    }

    pub fn remove(&mut self, key: PathKey) -> Option<StoredPath> {
        let mut removed = None;
        for list in self.classes.values_mut() {
            if let Some(pos) = list.iter().position(|p| p.key == key) {
                removed = Some(list.remove(pos));
                break;
            }
        }
        self.classes.retain(|_, list| !list.is_empty());
        if removed.is_some() && self.active == Some(key) {
            self.active = None;
        }
        removed
    }

    /// Drop every path leaving through `nexthop`; returns their keys.
    pub fn remove_via(&mut self, nexthop: NodeId) -> Vec<PathKey> {
        let keys: Vec<PathKey> = self
            .paths()
            .filter(|p| p.nexthop == nexthop)
            .map(|p| p.key)
            .collect();
        for k in &keys {
            self.remove(*k);
        }
        keys
    }

    pub fn clear(&mut self) {
        self.classes.clear();
        self.active = None;
        self.rrep_deadline = None;
    }

    pub fn paths(&self) -> impl Iterator<Item = &StoredPath> {
        self.classes.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.classes.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn max_class(&self) -> Option<NodeClass> {
        self.classes.keys().next_back().copied()
    }

    pub fn active_path(&self) -> Option<&StoredPath> {
        self.active.and_then(|k| self.get(k))
    }
}

/// Choose the path to carry data.
///
/// AOMR-LM takes the highest non-empty class, preferring fewer hops and then
/// the lower next-hop id inside it. AOMDV takes the earliest stored path.
pub fn select_path(paths: &SourcePathSet, protocol: Protocol) -> Option<PathKey> {
    match protocol {
        Protocol::AomrLm => {
            let (_, best_class) = paths.classes.iter().next_back()?;
            best_class
                .iter()
                .min_by_key(|p| (p.hopcount, p.nexthop, p.key))
                .map(|p| p.key)
        }
        Protocol::Aomdv => paths.paths().min_by_key(|p| p.arrival).map(|p| p.key),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use NodeClass::*;

    fn key(r: u32) -> PathKey {
        PathKey {
            discovery: 1,
            reply_id: r,
        }
    }

    #[test]
    fn average_when_high_is_empty() {
        let mut s = SourcePathSet::new(9);
        s.insert(key(3), 3, 4, Low);
        s.insert(key(2), 2, 5, Average);
        assert_eq!(select_path(&s, Protocol::AomrLm), Some(key(2)));
    }

    #[test]
    fn high_first() {
        let mut s = SourcePathSet::new(9);
        s.insert(key(2), 2, 2, Average);
        s.insert(key(1), 1, 6, High);
        assert_eq!(select_path(&s, Protocol::AomrLm), Some(key(1)));
        // baseline ignores classes
        assert_eq!(select_path(&s, Protocol::Aomdv), Some(key(2)));
    }

    #[test]
    fn all_empty() {
        let s = SourcePathSet::new(9);
        assert_eq!(select_path(&s, Protocol::AomrLm), None);
        assert_eq!(select_path(&s, Protocol::Aomdv), None);
    }

    #[test]
    fn ties_by_hops_then_nexthop() {
        let mut s = SourcePathSet::new(9);
        s.insert(key(0), 8, 3, Average);
        s.insert(key(1), 5, 3, Average);
        s.insert(key(2), 1, 4, Average);
        assert_eq!(select_path(&s, Protocol::AomrLm), Some(key(1)));
    }

    #[test]
    fn removal_clears_active_and_empty_classes() {
        let mut s = SourcePathSet::new(9);
        s.insert(key(0), 8, 3, High);
        s.insert(key(1), 5, 3, Average);
        s.active = Some(key(0));
        assert_eq!(s.max_class(), Some(High));
        assert!(s.remove(key(0)).is_some());
        assert_eq!(s.active, None);
        assert_eq!(s.max_class(), Some(Average));
        assert!(s.remove(key(0)).is_none());
        assert_eq!(s.remove_via(5), vec![key(1)]);
        assert!(s.is_empty());
    }
}
