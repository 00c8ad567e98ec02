use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::message::{
    DataPacket, HelloMessage, Message, PathKey, RerrMessage, RrepMessage, RreqMessage,
};
use super::paths::{select_path, SourcePathSet};
use super::table::{choose_by_class, Candidate, HopBound, RouteEntry, RouteListItem};
use super::{Action, DropReason, Protocol, ProtocolConfig, ProtocolEvent, TimerKind};
use crate::energy::{average_from_sums, classify_energy, Joules, NodeClass};
use crate::{Error, NodeId, SimTime};

/// What a handler may know about the node's physical state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeCtx {
    pub now: SimTime,
    pub residual: Joules,
}

/// One RREQ copy accepted by the destination.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectedCopy {
    pub nexthop: NodeId,
    pub hopcount: u32,
    /// Residual energies summed source through destination.
    pub e_sum: Joules,
    pub node_count: usize,
}

/// Destination-side accumulator for one discovery.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscoveryContext {
    pub source: NodeId,
    pub discovery: u32,
    pub window_deadline: SimTime,
    pub collected: Vec<CollectedCopy>,
}

impl DiscoveryContext {
    /// Keep one copy per reverse next hop, the one with the fewest hops.
    pub fn collect(&mut self, copy: CollectedCopy) {
        match self.collected.iter_mut().find(|c| c.nexthop == copy.nexthop) {
            Some(existing) if copy.hopcount < existing.hopcount => *existing = copy,
            Some(_) => {}
            None => self.collected.push(copy),
        }
    }

    pub fn beta(&self) -> Result<Joules, Error> {
        average_from_sums(self.collected.iter().map(|c| (c.e_sum, c.node_count)))
    }
}

/// Build the replies for a closed collection window: one RREP per distinct
/// reverse next hop, all carrying the same β.
pub fn destination_reply(
    ctx: &DiscoveryContext,
    me: NodeId,
    dest_seqnum: u32,
    own_residual: Joules,
    alpha: f64,
) -> Result<Vec<(NodeId, RrepMessage)>, Error> {
    let beta = ctx.beta()?;
    let own_class = classify_energy(own_residual, beta, alpha)?;
    Ok(ctx
        .collected
        .iter()
        .enumerate()
        .map(|(i, copy)| {
            (
                copy.nexthop,
                RrepMessage {
                    source: ctx.source,
                    destination: me,
                    dest_seqnum,
                    discovery: ctx.discovery,
                    hopcount: 0,
                    beta,
                    path_class: own_class,
                    reply_id: i as u32,
                },
            )
        })
        .collect())
}

/// Identifies a forwarding label installed by an RREP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathLabel {
    pub source: NodeId,
    pub destination: NodeId,
    pub key: PathKey,
}

/// Where data on a labelled path goes next, and where errors go back.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelHop {
    /// Towards the destination.
    pub nexthop: NodeId,
    /// Towards the source.
    pub upstream: NodeId,
    pub hopcount: u32,
    pub last_used: Option<SimTime>,
}

/// Per-destination state of a traffic source.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceState {
    pub paths: SourcePathSet,
    /// Sequence number of the discovery in progress, if any.
    pub discovery: Option<u32>,
    pub buffer: VecDeque<DataPacket>,
    pub last_used: SimTime,
}

impl SourceState {
    fn new(destination: NodeId) -> Self {
        SourceState {
            paths: SourcePathSet::new(destination),
            discovery: None,
            buffer: VecDeque::new(),
            last_used: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Liveness {
    last_heard: Option<SimTime>,
    misses: u32,
}

#[derive(Debug, Clone)]
pub struct Node {
    id: NodeId,
    config: ProtocolConfig,
    seqnum: u32,
    rreq_id: u32,
    /// Reverse routes built from RREQs, keyed by the RREQ source.
    reverse: BTreeMap<NodeId, RouteEntry>,
    contexts: BTreeMap<NodeId, DiscoveryContext>,
    labels: BTreeMap<PathLabel, LabelHop>,
    sources: BTreeMap<NodeId, SourceState>,
    known_dest_seq: BTreeMap<NodeId, u32>,
    liveness: BTreeMap<NodeId, Liveness>,
    last_hello_tick: Option<SimTime>,
    rreq_seen: VecDeque<(NodeId, u32)>,
    rrep_seen: VecDeque<(NodeId, NodeId, u32, u32)>,
}

impl Node {
    pub fn new(id: NodeId, config: ProtocolConfig) -> Self {
        Node {
            id,
            config,
            seqnum: 0,
            rreq_id: 0,
            reverse: BTreeMap::new(),
            contexts: BTreeMap::new(),
            labels: BTreeMap::new(),
            sources: BTreeMap::new(),
            known_dest_seq: BTreeMap::new(),
            liveness: BTreeMap::new(),
            last_hello_tick: None,
            rreq_seen: VecDeque::new(),
            rrep_seen: VecDeque::new(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn sequence_number(&self) -> u32 {
        self.seqnum
    }

    pub fn reverse_entries(&self) -> &BTreeMap<NodeId, RouteEntry> {
        &self.reverse
    }

    pub fn reverse_entry(&self, source: NodeId) -> Option<&RouteEntry> {
        self.reverse.get(&source)
    }

    pub fn labels(&self) -> &BTreeMap<PathLabel, LabelHop> {
        &self.labels
    }

    pub fn source_state(&self, destination: NodeId) -> Option<&SourceState> {
        self.sources.get(&destination)
    }

    pub fn discovery_context(&self, source: NodeId) -> Option<&DiscoveryContext> {
        self.contexts.get(&source)
    }

    /// Entry point for every message the radio hands up.
    pub fn receive(&mut self, ctx: NodeCtx, from: NodeId, message: Message) -> Vec<Action> {
        match message {
            Message::Hello(h) => {
                self.on_hello(ctx, h);
                Vec::new()
            }
            Message::Rreq(m) => self.handle_rreq(ctx, from, m),
            Message::Rrep(m) => self.handle_rrep(ctx, from, m),
            Message::Rerr(m) => self.handle_rerr(ctx, from, m),
            Message::Data(d) => self.handle_data(ctx, from, d),
        }
    }

    pub fn on_timer(&mut self, ctx: NodeCtx, timer: TimerKind) -> Vec<Action> {
        match timer {
            TimerKind::Hello => self.hello_and_failure_detection(ctx),
            TimerKind::RreqWindow { source, discovery } => {
                self.close_rreq_window(ctx, source, discovery)
            }
            TimerKind::RrepWindow {
                destination,
                discovery,
            } => self.close_rrep_window(ctx, destination, discovery),
            TimerKind::DiscoveryTimeout {
                destination,
                discovery,
            } => self.discovery_timeout(ctx, destination, discovery),
        }
    }

    fn on_hello(&mut self, ctx: NodeCtx, hello: HelloMessage) {
        self.liveness.entry(hello.origin).or_default().last_heard = Some(ctx.now);
    }

    fn remember_rreq(&mut self, key: (NodeId, u32)) -> bool {
        if self.rreq_seen.contains(&key) {
            return false;
        }
        self.rreq_seen.push_back(key);
        while self.rreq_seen.len() > self.config.rreq_cache {
            self.rreq_seen.pop_front();
        }
        true
    }

    fn remember_rrep(&mut self, key: (NodeId, NodeId, u32, u32)) -> bool {
        if self.rrep_seen.contains(&key) {
            return false;
        }
        self.rrep_seen.push_back(key);
        while self.rrep_seen.len() > self.config.rreq_cache {
            self.rrep_seen.pop_front();
        }
        true
    }

    fn own_class(&self, residual: Joules, beta: Joules) -> NodeClass {
        classify_energy(residual, beta, self.config.alpha).unwrap_or(NodeClass::Low)
    }

    // ---------------------------------------------------------------- RREQ

    /// Multipath discovery on RREQ reception.
    ///
    /// A fresher sequence number resets the reverse entry to the sender and
    /// re-broadcasts once with this node's energy added to `e_sum`. An equal
    /// sequence number only adds an alternate reverse hop, and only from a
    /// sender advertising fewer hops than we do. Stale copies are dropped.
    /// Intermediate nodes never answer with an RREP.
    pub fn handle_rreq(&mut self, ctx: NodeCtx, from: NodeId, msg: RreqMessage) -> Vec<Action> {
        if msg.source == self.id {
            return Vec::new();
        }
        let at_destination = msg.destination == self.id;
        let stored = self.reverse.get(&msg.source).map(|e| e.sequence_number);
        let expiry = ctx.now + self.config.route_timeout;
        let via = msg.hopcount + 1;

        match stored {
            Some(seq) if seq > msg.source_seqnum => Vec::new(),
            Some(seq) if seq == msg.source_seqnum => {
                if at_destination {
                    if let Some(dctx) = self.contexts.get_mut(&msg.source) {
                        if dctx.discovery == msg.source_seqnum && ctx.now <= dctx.window_deadline
                        {
                            dctx.collect(CollectedCopy {
                                nexthop: from,
                                hopcount: via,
                                e_sum: msg.e_sum_so_far + ctx.residual,
                                node_count: msg.hopcount as usize + 2,
                            });
                        }
                    }
                    return Vec::new();
                }
                let entry = self.reverse.get_mut(&msg.source).expect("entry exists");
                // The accumulated e_sum of an alternate copy is never forwarded.
                if entry.advertised_hopcount.exceeds(msg.hopcount) {
                    entry.insert(RouteListItem::new(from, via, msg.sender_energy));
                    entry.expiration_timeout = expiry;
                }
                Vec::new()
            }
            _ => {
                let mut entry = RouteEntry::new(msg.source, msg.source_seqnum, expiry);
                if at_destination {
                    entry.advertised_hopcount = HopBound::Finite(0);
                    self.reverse.insert(msg.source, entry);
                    let window = self.config.rreq_wait;
                    self.contexts.insert(
                        msg.source,
                        DiscoveryContext {
                            source: msg.source,
                            discovery: msg.source_seqnum,
                            window_deadline: ctx.now + window,
                            collected: vec![CollectedCopy {
                                nexthop: from,
                                hopcount: via,
                                e_sum: msg.e_sum_so_far + ctx.residual,
                                node_count: msg.hopcount as usize + 2,
                            }],
                        },
                    );
                    return vec![Action::Timer {
                        delay: window,
                        timer: TimerKind::RreqWindow {
                            source: msg.source,
                            discovery: msg.source_seqnum,
                        },
                    }];
                }
                entry.insert(RouteListItem::new(from, via, msg.sender_energy));
                let mut actions = Vec::new();
                if self.remember_rreq((msg.source, msg.rreq_id)) {
                    // Advertise the hop count of the route we forward on.
                    entry.advertised_hopcount = HopBound::Finite(via);
                    actions.push(Action::Broadcast(Message::Rreq(RreqMessage {
                        hopcount: via,
                        e_sum_so_far: msg.e_sum_so_far + ctx.residual,
                        sender_energy: ctx.residual,
                        ..msg
                    })));
                }
                self.reverse.insert(msg.source, entry);
                actions
            }
        }
    }

    fn close_rreq_window(&mut self, ctx: NodeCtx, source: NodeId, discovery: u32) -> Vec<Action> {
        match self.contexts.get(&source) {
            Some(c) if c.discovery == discovery => {}
            _ => return Vec::new(),
        }
        let dctx = self.contexts.remove(&source).expect("checked above");
        self.seqnum += 1;
        let replies =
            match destination_reply(&dctx, self.id, self.seqnum, ctx.residual, self.config.alpha)
            {
                Ok(r) => r,
                Err(_) => return Vec::new(),
            };
        let mut actions = Vec::with_capacity(replies.len() * 2);
        for (to, rrep) in replies {
            self.remember_rrep((rrep.source, rrep.destination, rrep.dest_seqnum, rrep.reply_id));
            actions.push(Action::Note(ProtocolEvent::RrepSent {
                source: rrep.source,
                destination: rrep.destination,
                discovery: rrep.discovery,
                reply_id: rrep.reply_id,
                beta: rrep.beta,
                from: self.id,
                to,
                path_class: rrep.path_class,
            }));
            actions.push(Action::Unicast {
                to,
                message: Message::Rrep(rrep),
            });
        }
        actions
    }

    // ---------------------------------------------------------------- RREP

    /// Reverse-path construction on RREP reception.
    ///
    /// Each forwarder classifies its unmarked reverse neighbours against the
    /// discovery's β, picks one by class (AOMR-LM) or takes the first one
    /// (AOMDV), marks it so no later reply of the same discovery reuses the
    /// link, and installs a forwarding label for the data plane.
    pub fn handle_rrep(&mut self, ctx: NodeCtx, from: NodeId, msg: RrepMessage) -> Vec<Action> {
        if !self.remember_rrep((msg.source, msg.destination, msg.dest_seqnum, msg.reply_id)) {
            return Vec::new();
        }
        if msg.source == self.id {
            return self.register_path(ctx, from, msg);
        }
        let protocol = self.config.protocol;
        let alpha = self.config.alpha;
        let own_class = self.own_class(ctx.residual, msg.beta);
        let Some(entry) = self
            .reverse
            .get_mut(&msg.source)
            .filter(|e| e.sequence_number == msg.discovery)
        else {
            return vec![Action::Note(ProtocolEvent::RrepDropped {
                source: msg.source,
                discovery: msg.discovery,
                reply_id: msg.reply_id,
            })];
        };

        let mut candidates = Vec::new();
        let mut slots = Vec::new();
        for (i, item) in entry.route_list.iter_mut().enumerate() {
            if item.marked {
                continue;
            }
            let class = classify_energy(item.neighbor_energy, msg.beta, alpha)
                .unwrap_or(NodeClass::Low);
            item.neighbor_class = Some(class);
            candidates.push(Candidate {
                nexthop: item.nexthop,
                class,
                energy: item.neighbor_energy,
                hopcount: item.hopcount,
            });
            slots.push(i);
        }
        let pick = match protocol {
            Protocol::AomrLm => choose_by_class(own_class, &candidates),
            Protocol::Aomdv => (!candidates.is_empty()).then_some(0),
        };
        let Some(pick) = pick else {
            return vec![Action::Note(ProtocolEvent::RrepDropped {
                source: msg.source,
                discovery: msg.discovery,
                reply_id: msg.reply_id,
            })];
        };
        let chosen = candidates[pick];
        entry.route_list[slots[pick]].marked = true;
        entry.expiration_timeout = ctx.now + self.config.route_timeout;

        let path_class = msg.path_class.min(chosen.class).min(own_class);
        self.labels.insert(
            PathLabel {
                source: msg.source,
                destination: msg.destination,
                key: msg.path_key(),
            },
            LabelHop {
                nexthop: from,
                upstream: chosen.nexthop,
                hopcount: msg.hopcount + 1,
                last_used: None,
            },
        );
        let forwarded = RrepMessage {
            hopcount: msg.hopcount + 1,
            path_class,
            ..msg
        };
        vec![
            Action::Note(ProtocolEvent::RrepSent {
                source: forwarded.source,
                destination: forwarded.destination,
                discovery: forwarded.discovery,
                reply_id: forwarded.reply_id,
                beta: forwarded.beta,
                from: self.id,
                to: chosen.nexthop,
                path_class,
            }),
            Action::Unicast {
                to: chosen.nexthop,
                message: Message::Rrep(forwarded),
            },
        ]
    }

    fn register_path(&mut self, ctx: NodeCtx, from: NodeId, msg: RrepMessage) -> Vec<Action> {
        let own_class = self.own_class(ctx.residual, msg.beta);
        let rrep_wait = self.config.rrep_wait;
        let known = self.known_dest_seq.entry(msg.destination).or_insert(0);
        *known = (*known).max(msg.dest_seqnum);
        let Some(state) = self.sources.get_mut(&msg.destination) else {
            return Vec::new();
        };
        if state.discovery != Some(msg.discovery) {
            // Late reply for a discovery that already picked its path.
            return Vec::new();
        }
        let class = msg.path_class.min(own_class);
        let key = msg.path_key();
        state.paths.insert(key, from, msg.hopcount + 1, class);
        let mut actions = vec![Action::Note(ProtocolEvent::PathRegistered {
            destination: msg.destination,
            key,
            class,
            hopcount: msg.hopcount + 1,
        })];
        if state.paths.rrep_deadline.is_none() {
            state.paths.rrep_deadline = Some(ctx.now + rrep_wait);
            actions.push(Action::Timer {
                delay: rrep_wait,
                timer: TimerKind::RrepWindow {
                    destination: msg.destination,
                    discovery: msg.discovery,
                },
            });
        }
        actions
    }

    fn close_rrep_window(
        &mut self,
        ctx: NodeCtx,
        destination: NodeId,
        discovery: u32,
    ) -> Vec<Action> {
        match self.sources.get(&destination) {
            Some(s) if s.discovery == Some(discovery) => {}
            _ => return Vec::new(),
        }
        let state = self.sources.get_mut(&destination).expect("checked above");
        state.discovery = None;
        state.paths.rrep_deadline = None;
        let mut actions = Vec::new();
        if self.activate_best(ctx, destination, &mut actions) {
            self.flush_buffer(ctx, destination, &mut actions);
        } else {
            self.start_discovery(ctx, destination, &mut actions);
        }
        actions
    }

    fn discovery_timeout(
        &mut self,
        ctx: NodeCtx,
        destination: NodeId,
        discovery: u32,
    ) -> Vec<Action> {
        let retry = matches!(
            self.sources.get(&destination),
            Some(s) if s.discovery == Some(discovery) && s.paths.rrep_deadline.is_none()
        );
        let mut actions = Vec::new();
        if retry {
            self.start_discovery(ctx, destination, &mut actions);
        }
        actions
    }

    /// Flood a fresh RREQ for `destination`.
    fn start_discovery(&mut self, ctx: NodeCtx, destination: NodeId, actions: &mut Vec<Action>) {
        self.seqnum += 1;
        self.rreq_id += 1;
        let discovery = self.seqnum;
        let rreq_id = self.rreq_id;
        self.remember_rreq((self.id, rreq_id));
        let state = self
            .sources
            .entry(destination)
            .or_insert_with(|| SourceState::new(destination));
        state.paths.clear();
        state.discovery = Some(discovery);
        actions.push(Action::Note(ProtocolEvent::DiscoveryStarted {
            destination,
            discovery,
        }));
        actions.push(Action::Broadcast(Message::Rreq(RreqMessage {
            source: self.id,
            destination,
            rreq_id,
            source_seqnum: discovery,
            dest_seqnum_known: self.known_dest_seq.get(&destination).copied().unwrap_or(0),
            hopcount: 0,
            e_sum_so_far: ctx.residual,
            sender_energy: ctx.residual,
        })));
        actions.push(Action::Timer {
            delay: self.config.discovery_timeout,
            timer: TimerKind::DiscoveryTimeout {
                destination,
                discovery,
            },
        });
    }

    /// Make the best stored path active. Returns false when none is left.
    fn activate_best(
        &mut self,
        _ctx: NodeCtx,
        destination: NodeId,
        actions: &mut Vec<Action>,
    ) -> bool {
        let protocol = self.config.protocol;
        let Some(state) = self.sources.get_mut(&destination) else {
            return false;
        };
        let Some(key) = select_path(&state.paths, protocol) else {
            state.paths.active = None;
            return false;
        };
        state.paths.active = Some(key);
        let class = state.paths.get(key).map(|p| p.class).unwrap_or(NodeClass::Low);
        actions.push(Action::Note(ProtocolEvent::PathActivated {
            destination,
            key,
            class,
        }));
        true
    }

    fn flush_buffer(&mut self, ctx: NodeCtx, destination: NodeId, actions: &mut Vec<Action>) {
        let Some(state) = self.sources.get_mut(&destination) else {
            return;
        };
        let pending: Vec<DataPacket> = state.buffer.drain(..).collect();
        for packet in pending {
            self.send_on_active(ctx, packet, actions);
        }
    }

    fn send_on_active(&mut self, ctx: NodeCtx, mut packet: DataPacket, actions: &mut Vec<Action>) {
        let state = self
            .sources
            .get_mut(&packet.destination)
            .expect("source state exists");
        let path = state.paths.active_path().expect("active path").clone();
        let max_class = state.paths.max_class().unwrap_or(path.class);
        state.last_used = ctx.now;
        packet.path = path.key;
        actions.push(Action::Note(ProtocolEvent::DataDeparted {
            destination: packet.destination,
            key: path.key,
            path_class: path.class,
            max_class,
        }));
        actions.push(Action::Unicast {
            to: path.nexthop,
            message: Message::Data(packet),
        });
    }

    // ---------------------------------------------------------------- DATA

    /// Hand a locally generated packet to the routing layer.
    pub fn originate(&mut self, ctx: NodeCtx, packet: DataPacket) -> Vec<Action> {
        let destination = packet.destination;
        let timeout = self.config.route_timeout;
        let capacity = self.config.buffer_capacity;
        let state = self
            .sources
            .entry(destination)
            .or_insert_with(|| SourceState::new(destination));
        let mut actions = Vec::new();
        if state.discovery.is_none()
            && !state.paths.is_empty()
            && ctx.now - state.last_used > timeout
        {
            state.paths.clear();
        }
        if state.paths.active_path().is_some() {
            self.send_on_active(ctx, packet, &mut actions);
            return actions;
        }
        state.buffer.push_back(packet);
        if state.buffer.len() > capacity {
            let oldest = state.buffer.pop_front().expect("non-empty");
            actions.push(Action::Dropped {
                packet: oldest,
                reason: DropReason::BufferOverflow,
            });
        }
        if state.discovery.is_none() {
            self.start_discovery(ctx, destination, &mut actions);
        }
        actions
    }

    /// Forward along the packet's labelled path, deliver it, or report the
    /// path broken back towards the source.
    pub fn handle_data(&mut self, ctx: NodeCtx, from: NodeId, packet: DataPacket) -> Vec<Action> {
        if packet.destination == self.id {
            return vec![Action::Delivered(packet)];
        }
        let label = PathLabel {
            source: packet.source,
            destination: packet.destination,
            key: packet.path,
        };
        match self.labels.get_mut(&label) {
            Some(hop) => {
                hop.last_used = Some(ctx.now);
                let to = hop.nexthop;
                vec![Action::Unicast {
                    to,
                    message: Message::Data(packet),
                }]
            }
            None => {
                let rerr = RerrMessage {
                    unreachable_destination: packet.destination,
                    broken_nexthop: self.id,
                    origin: self.id,
                    source: packet.source,
                    path: packet.path,
                };
                let mut actions = vec![Action::Dropped {
                    packet,
                    reason: DropReason::NoRoute,
                }];
                if from == rerr.source {
                    // handled by the source on reception
                }
                actions.push(Action::Unicast {
                    to: from,
                    message: Message::Rerr(rerr),
                });
                actions
            }
        }
    }

    // ---------------------------------------------------------------- RERR

    /// Erase the broken path. Intermediates relay towards the source; the
    /// source falls back to the best remaining class or rediscovers.
    pub fn handle_rerr(&mut self, ctx: NodeCtx, _from: NodeId, msg: RerrMessage) -> Vec<Action> {
        let mut actions = Vec::new();
        if msg.source == self.id {
            self.erase_at_source(ctx, msg.unreachable_destination, msg.path, false, &mut actions);
            return actions;
        }
        let label = PathLabel {
            source: msg.source,
            destination: msg.unreachable_destination,
            key: msg.path,
        };
        if let Some(hop) = self.labels.remove(&label) {
            actions.push(Action::Unicast {
                to: hop.upstream,
                message: Message::Rerr(msg),
            });
        }
        actions
    }

    fn erase_at_source(
        &mut self,
        ctx: NodeCtx,
        destination: NodeId,
        key: PathKey,
        local: bool,
        actions: &mut Vec<Action>,
    ) {
        let Some(state) = self.sources.get_mut(&destination) else {
            return;
        };
        let was_active = state.paths.active == Some(key);
        if state.paths.remove(key).is_none() {
            return;
        }
        actions.push(Action::Note(ProtocolEvent::RerrAtSource {
            destination,
            key,
            local,
        }));
        if !was_active || state.discovery.is_some() {
            return;
        }
        if self.activate_best(ctx, destination, actions) {
            self.flush_buffer(ctx, destination, actions);
        } else {
            self.start_discovery(ctx, destination, actions);
        }
    }

    // --------------------------------------------------------------- HELLO

    fn monitored_neighbors(&self) -> BTreeSet<NodeId> {
        let mut set = BTreeSet::new();
        for entry in self.reverse.values() {
            set.extend(entry.route_list.iter().map(|i| i.nexthop));
        }
        for hop in self.labels.values() {
            set.insert(hop.nexthop);
            set.insert(hop.upstream);
        }
        for state in self.sources.values() {
            set.extend(state.paths.paths().map(|p| p.nexthop));
        }
        set.remove(&self.id);
        set
    }

    /// Periodic beacon plus link supervision: a monitored neighbour silent
    /// for `allowed_hello_misses` consecutive intervals is declared gone.
    pub fn hello_and_failure_detection(&mut self, ctx: NodeCtx) -> Vec<Action> {
        let mut actions = vec![
            Action::Broadcast(Message::Hello(HelloMessage { origin: self.id })),
            Action::Timer {
                delay: self.config.hello_interval,
                timer: TimerKind::Hello,
            },
        ];
        let now = ctx.now;
        self.reverse.retain(|_, e| e.expiration_timeout >= now);

        let window_start = self
            .last_hello_tick
            .unwrap_or(now - self.config.hello_interval);
        self.last_hello_tick = Some(now);
        let monitored = self.monitored_neighbors();
        for live in self
            .liveness
            .iter_mut()
            .filter(|(n, _)| !monitored.contains(n))
        {
            live.1.misses = 0;
        }
        let mut failed = Vec::new();
        for n in monitored {
            let live = self.liveness.entry(n).or_default();
            let heard = live.last_heard.is_some_and(|t| t > window_start);
            if heard {
                live.misses = 0;
                continue;
            }
            live.misses += 1;
            actions.push(Action::Note(ProtocolEvent::HelloMiss {
                neighbor: n,
                misses: live.misses,
            }));
            if live.misses >= self.config.allowed_hello_misses {
                failed.push(n);
            }
        }
        for n in failed {
            self.link_failed(ctx, n, &mut actions);
        }
        actions
    }

    fn link_failed(&mut self, ctx: NodeCtx, neighbor: NodeId, actions: &mut Vec<Action>) {
        actions.push(Action::Note(ProtocolEvent::LinkFailure { neighbor }));
        self.liveness.remove(&neighbor);
        for entry in self.reverse.values_mut() {
            entry.remove_nexthop(neighbor);
        }

        let timeout = self.config.route_timeout;
        let broken: Vec<(PathLabel, LabelHop)> = self
            .labels
            .iter()
            .filter(|(_, h)| h.nexthop == neighbor || h.upstream == neighbor)
            .map(|(l, h)| (*l, *h))
            .collect();
        for (label, hop) in broken {
            self.labels.remove(&label);
            let active = hop
                .last_used
                .is_some_and(|t| ctx.now - t <= timeout);
            if hop.nexthop == neighbor && active {
                actions.push(Action::Unicast {
                    to: hop.upstream,
                    message: Message::Rerr(RerrMessage {
                        unreachable_destination: label.destination,
                        broken_nexthop: neighbor,
                        origin: self.id,
                        source: label.source,
                        path: label.key,
                    }),
                });
            }
        }

        let affected: Vec<(NodeId, PathKey)> = self
            .sources
            .iter()
            .flat_map(|(d, s)| {
                s.paths
                    .paths()
                    .filter(|p| p.nexthop == neighbor)
                    .map(move |p| (*d, p.key))
            })
            .collect();
        for (destination, key) in affected {
            self.erase_at_source(ctx, destination, key, true, actions);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::NodeClass::*;

    fn ctx(now: f64, residual: f64) -> NodeCtx {
        NodeCtx { now, residual }
    }

    fn rreq(seq: u32, hop: u32, e_sum: f64, sender_energy: f64) -> RreqMessage {
        RreqMessage {
            source: 0,
            destination: 99,
            rreq_id: seq,
            source_seqnum: seq,
            dest_seqnum_known: 0,
            hopcount: hop,
            e_sum_so_far: e_sum,
            sender_energy,
        }
    }

    fn seeded_entry(node: &mut Node, seq: u32, adv: HopBound) {
        let mut e = RouteEntry::new(0, seq, 100.0);
        e.advertised_hopcount = adv;
        e.insert(RouteListItem::new(50, 3, 20.0));
        node.reverse.insert(0, e);
    }

    #[test]
    fn fresher_rreq_resets_and_forwards() {
        let mut n = Node::new(5, ProtocolConfig::default());
        seeded_entry(&mut n, 5, HopBound::Finite(3));
        let actions = n.handle_rreq(ctx(1.0, 12.0), 7, rreq(7, 2, 30.0, 18.0));
        let e = n.reverse_entry(0).unwrap();
        assert_eq!(e.sequence_number, 7);
        assert_eq!(e.route_list, vec![RouteListItem::new(7, 3, 18.0)]);
        // the hop count advertised in the re-broadcast
        assert_eq!(e.advertised_hopcount, HopBound::Finite(3));
        let [Action::Broadcast(Message::Rreq(fwd))] = actions.as_slice() else {
            panic!("expected a single re-broadcast, got {actions:?}");
        };
        assert_eq!(fwd.e_sum_so_far, 42.0);
        assert_eq!(fwd.sender_energy, 12.0);
        assert_eq!(fwd.hopcount, 3);
    }

    #[test]
    fn equal_seq_adds_alternate_without_forwarding() {
        let mut n = Node::new(5, ProtocolConfig::default());
        seeded_entry(&mut n, 7, HopBound::Finite(4));
        let actions = n.handle_rreq(ctx(1.0, 12.0), 8, rreq(7, 2, 30.0, 25.0));
        assert!(actions.is_empty());
        let e = n.reverse_entry(0).unwrap();
        assert_eq!(e.route_list.len(), 2);
        assert_eq!(e.route_list[1], RouteListItem::new(8, 3, 25.0));
    }

    #[test]
    fn equal_seq_from_longer_sender_is_refused() {
        let mut n = Node::new(5, ProtocolConfig::default());
        seeded_entry(&mut n, 7, HopBound::Finite(2));
        n.handle_rreq(ctx(1.0, 12.0), 8, rreq(7, 2, 30.0, 25.0));
        assert_eq!(n.reverse_entry(0).unwrap().route_list.len(), 1);
    }

    #[test]
    fn stale_rreq_is_discarded() {
        let mut n = Node::new(5, ProtocolConfig::default());
        seeded_entry(&mut n, 7, HopBound::Finite(4));
        let before = n.reverse_entry(0).cloned();
        let actions = n.handle_rreq(ctx(1.0, 12.0), 8, rreq(6, 1, 30.0, 25.0));
        assert!(actions.is_empty());
        assert_eq!(n.reverse_entry(0).cloned(), before);
    }

    #[test]
    fn destination_collects_then_replies() {
        let mut d = Node::new(99, ProtocolConfig::default());
        // path 0 -> a(30) -> 99 : e_sum 50 + 30 arrives, plus dest 40 = 120, 3 nodes
        let first = d.handle_rreq(ctx(1.0, 40.0), 10, rreq(1, 1, 80.0, 30.0));
        assert!(matches!(
            first.as_slice(),
            [Action::Timer {
                timer: TimerKind::RreqWindow { source: 0, discovery: 1 },
                ..
            }]
        ));
        assert_eq!(
            d.reverse_entry(0).unwrap().advertised_hopcount,
            HopBound::Finite(0)
        );
        // path 0 -> x(10) -> y(20) -> 99 : 50+10+20 = 80, plus 40 = 120, 4 nodes
        d.handle_rreq(ctx(1.2, 40.0), 11, rreq(1, 2, 80.0, 20.0));
        let c = d.discovery_context(0).unwrap();
        assert_eq!(c.collected.len(), 2);
        assert_eq!(c.collected[0].e_sum, 120.0);
        assert_eq!(c.collected[1].node_count, 4);

        let actions = d.on_timer(ctx(2.0, 40.0), TimerKind::RreqWindow { source: 0, discovery: 1 });
        let rreps: Vec<&RrepMessage> = actions
            .iter()
            .filter_map(|a| match a {
                Action::Unicast { message: Message::Rrep(r), .. } => Some(r),
                _ => None,
            })
            .collect();
        assert_eq!(rreps.len(), 2);
        for r in &rreps {
            assert!((r.beta - 240.0 / 7.0).abs() < 1e-12);
            assert_eq!(r.path_class, High);
        }
        assert_ne!(rreps[0].reply_id, rreps[1].reply_id);
    }

    #[test]
    fn late_copy_is_ignored() {
        let mut d = Node::new(99, ProtocolConfig::default());
        d.handle_rreq(ctx(1.0, 40.0), 10, rreq(1, 1, 80.0, 30.0));
        d.handle_rreq(ctx(2.5, 40.0), 11, rreq(1, 2, 80.0, 20.0));
        assert_eq!(d.discovery_context(0).unwrap().collected.len(), 1);
    }

    #[test]
    fn one_copy_one_reply() {
        let c = DiscoveryContext {
            source: 0,
            discovery: 1,
            window_deadline: 1.0,
            collected: vec![CollectedCopy {
                nexthop: 3,
                hopcount: 2,
                e_sum: 60.0,
                node_count: 3,
            }],
        };
        let r = destination_reply(&c, 9, 1, 20.0, 0.42).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].1.beta, 20.0);
    }

    #[test]
    fn duplicate_nexthop_keeps_shortest() {
        let mut c = DiscoveryContext {
            source: 0,
            discovery: 1,
            window_deadline: 1.0,
            collected: Vec::new(),
        };
        let copy = |hop, e| CollectedCopy {
            nexthop: 3,
            hopcount: hop,
            e_sum: e,
            node_count: hop as usize + 1,
        };
        c.collect(copy(3, 90.0));
        c.collect(copy(2, 60.0));
        c.collect(copy(4, 120.0));
        assert_eq!(c.collected, vec![copy(2, 60.0)]);
    }

    fn relay_with_neighbors(protocol: Protocol, neighbors: &[(NodeId, f64)]) -> Node {
        let mut n = Node::new(5, ProtocolConfig::with_protocol(protocol));
        let mut e = RouteEntry::new(0, 1, 100.0);
        e.advertised_hopcount = HopBound::Finite(3);
        for (id, energy) in neighbors {
            e.insert(RouteListItem::new(*id, 2, *energy));
        }
        n.reverse.insert(0, e);
        n
    }

    fn rrep(reply_id: u32, beta: f64) -> RrepMessage {
        RrepMessage {
            source: 0,
            destination: 99,
            dest_seqnum: 1,
            discovery: 1,
            hopcount: 1,
            beta,
            path_class: High,
            reply_id,
        }
    }

    fn forwarded_to(actions: &[Action]) -> Option<(NodeId, RrepMessage)> {
        actions.iter().find_map(|a| match a {
            Action::Unicast {
                to,
                message: Message::Rrep(r),
            } => Some((*to, r.clone())),
            _ => None,
        })
    }

    #[test]
    fn rrep_goes_to_lowest_class_above() {
        // beta 30: self 20 -> Average; 1 at 5 J -> Low, 2 at 45 J -> High
        let mut n = relay_with_neighbors(Protocol::AomrLm, &[(1, 5.0), (2, 45.0)]);
        let a = n.handle_rrep(ctx(3.0, 20.0), 99, rrep(0, 30.0));
        let (to, fwd) = forwarded_to(&a).unwrap();
        assert_eq!(to, 2);
        assert_eq!(fwd.path_class, Average);
        assert_eq!(fwd.hopcount, 2);
        assert!(n.reverse_entry(0).unwrap().item(2).unwrap().marked);
        let label = n.labels().values().next().unwrap();
        assert_eq!((label.nexthop, label.upstream), (99, 2));
    }

    #[test]
    fn rrep_prefers_same_class() {
        let mut n = relay_with_neighbors(Protocol::AomrLm, &[(1, 25.0), (2, 45.0)]);
        let a = n.handle_rrep(ctx(3.0, 20.0), 99, rrep(0, 30.0));
        assert_eq!(forwarded_to(&a).unwrap().0, 1);
    }

    #[test]
    fn rrep_falls_back_below() {
        let mut n = relay_with_neighbors(Protocol::AomrLm, &[(1, 5.0)]);
        let a = n.handle_rrep(ctx(3.0, 40.0), 99, rrep(0, 30.0));
        let (to, fwd) = forwarded_to(&a).unwrap();
        assert_eq!(to, 1);
        assert_eq!(fwd.path_class, Low);
    }

    #[test]
    fn marked_links_are_not_reused() {
        let mut n = relay_with_neighbors(Protocol::AomrLm, &[(1, 25.0), (2, 45.0)]);
        let first = forwarded_to(&n.handle_rrep(ctx(3.0, 20.0), 99, rrep(0, 30.0))).unwrap();
        let second = forwarded_to(&n.handle_rrep(ctx(3.0, 20.0), 98, rrep(1, 30.0))).unwrap();
        assert_ne!(first.0, second.0);
        let third = n.handle_rrep(ctx(3.0, 20.0), 97, rrep(2, 30.0));
        assert!(forwarded_to(&third).is_none());
        assert!(matches!(
            third.as_slice(),
            [Action::Note(ProtocolEvent::RrepDropped { reply_id: 2, .. })]
        ));
    }

    #[test]
    fn duplicate_rrep_is_discarded() {
        let mut n = relay_with_neighbors(Protocol::AomrLm, &[(1, 25.0), (2, 45.0)]);
        n.handle_rrep(ctx(3.0, 20.0), 99, rrep(0, 30.0));
        assert!(n.handle_rrep(ctx(3.0, 20.0), 99, rrep(0, 30.0)).is_empty());
    }

    #[test]
    fn baseline_takes_first_neighbor() {
        let mut n = relay_with_neighbors(Protocol::Aomdv, &[(1, 5.0), (2, 45.0)]);
        let a = n.handle_rrep(ctx(3.0, 20.0), 99, rrep(0, 30.0));
        assert_eq!(forwarded_to(&a).unwrap().0, 1);
    }

    fn source_with_paths(paths: &[(u32, NodeId, NodeClass)]) -> Node {
        let mut s = Node::new(0, ProtocolConfig::default());
        let mut state = SourceState::new(99);
        for (r, via, class) in paths {
            state.paths.insert(
                PathKey {
                    discovery: 1,
                    reply_id: *r,
                },
                *via,
                3,
                *class,
            );
        }
        state.paths.active = Some(PathKey {
            discovery: 1,
            reply_id: paths[0].0,
        });
        state.last_used = 0.0;
        s.sources.insert(99, state);
        s
    }

    fn rerr_for(reply_id: u32) -> RerrMessage {
        RerrMessage {
            unreachable_destination: 99,
            broken_nexthop: 7,
            origin: 7,
            source: 0,
            path: PathKey {
                discovery: 1,
                reply_id,
            },
        }
    }

    #[test]
    fn rerr_fails_over_to_next_class() {
        let mut s = source_with_paths(&[(1, 11, High), (2, 12, Average)]);
        let a = s.handle_rerr(ctx(5.0, 30.0), 11, rerr_for(1));
        let st = s.source_state(99).unwrap();
        assert_eq!(st.paths.active.unwrap().reply_id, 2);
        assert!(a.iter().any(|x| matches!(
            x,
            Action::Note(ProtocolEvent::PathActivated { class: Average, .. })
        )));
        assert!(!a.iter().any(|x| matches!(x, Action::Broadcast(_))));
    }

    #[test]
    fn rerr_without_alternate_rediscovers() {
        let mut s = source_with_paths(&[(1, 11, High)]);
        let a = s.handle_rerr(ctx(5.0, 30.0), 11, rerr_for(1));
        assert!(a
            .iter()
            .any(|x| matches!(x, Action::Broadcast(Message::Rreq(r)) if r.destination == 99)));
        assert!(s.source_state(99).unwrap().discovery.is_some());
    }

    #[test]
    fn rerr_is_idempotent() {
        let mut s = source_with_paths(&[(1, 11, High), (2, 12, Average)]);
        s.handle_rerr(ctx(5.0, 30.0), 11, rerr_for(1));
        let before = s.source_state(99).cloned();
        assert!(s.handle_rerr(ctx(5.1, 30.0), 11, rerr_for(1)).is_empty());
        assert_eq!(s.source_state(99).cloned(), before);
    }

    #[test]
    fn intermediate_relays_rerr_upstream() {
        let mut n = relay_with_neighbors(Protocol::AomrLm, &[(1, 25.0)]);
        n.handle_rrep(ctx(3.0, 20.0), 99, rrep(0, 30.0));
        let mut e = rerr_for(0);
        e.origin = 99;
        let a = n.handle_rerr(ctx(4.0, 20.0), 99, e.clone());
        assert_eq!(
            a,
            vec![Action::Unicast {
                to: 1,
                message: Message::Rerr(e.clone())
            }]
        );
        assert!(n.labels().is_empty());
        assert!(n.handle_rerr(ctx(4.0, 20.0), 99, e).is_empty());
    }

    fn packet(reply_id: u32) -> DataPacket {
        DataPacket {
            flow: 0,
            seq: 0,
            source: 0,
            destination: 99,
            path: PathKey {
                discovery: 1,
                reply_id,
            },
            payload_bytes: 512,
            sent_at: 0.0,
        }
    }

    #[test]
    fn data_follows_label_or_triggers_rerr() {
        let mut n = relay_with_neighbors(Protocol::AomrLm, &[(1, 25.0)]);
        n.handle_rrep(ctx(3.0, 20.0), 99, rrep(0, 30.0));
        let a = n.handle_data(ctx(4.0, 20.0), 1, packet(0));
        assert!(matches!(a.as_slice(), [Action::Unicast { to: 99, .. }]));

        let a = n.handle_data(ctx(4.0, 20.0), 1, packet(7));
        assert!(matches!(
            a[0],
            Action::Dropped {
                reason: DropReason::NoRoute,
                ..
            }
        ));
        assert!(matches!(
            &a[1],
            Action::Unicast { to: 1, message: Message::Rerr(r) } if r.source == 0 && r.path.reply_id == 7
        ));
    }

    #[test]
    fn data_at_destination_is_delivered() {
        let mut d = Node::new(99, ProtocolConfig::default());
        let a = d.handle_data(ctx(4.0, 20.0), 1, packet(0));
        assert_eq!(a, vec![Action::Delivered(packet(0))]);
    }

    #[test]
    fn originate_without_route_buffers_and_discovers_once() {
        let mut s = Node::new(0, ProtocolConfig::default());
        let a = s.originate(ctx(0.0, 30.0), packet(0));
        assert!(a.iter().any(|x| matches!(x, Action::Broadcast(Message::Rreq(_)))));
        let a = s.originate(ctx(0.25, 30.0), packet(0));
        assert!(a.is_empty());
        assert_eq!(s.source_state(99).unwrap().buffer.len(), 2);
    }

    #[test]
    fn buffer_drops_oldest() {
        let mut s = Node::new(0, ProtocolConfig::default());
        for i in 0..64 {
            let mut p = packet(0);
            p.seq = i;
            s.originate(ctx(0.0, 30.0), p);
        }
        let mut p = packet(0);
        p.seq = 64;
        let a = s.originate(ctx(0.0, 30.0), p);
        assert!(matches!(
            &a[0],
            Action::Dropped { packet, reason: DropReason::BufferOverflow } if packet.seq == 0
        ));
        assert_eq!(s.source_state(99).unwrap().buffer.len(), 64);
    }

    fn tick(n: &mut Node, t: f64) -> Vec<Action> {
        n.hello_and_failure_detection(ctx(t, 30.0))
    }

    fn failures(actions: &[Action]) -> usize {
        actions
            .iter()
            .filter(|a| matches!(a, Action::Note(ProtocolEvent::LinkFailure { .. })))
            .count()
    }

    #[test]
    fn three_silent_intervals_declare_failure() {
        let mut s = source_with_paths(&[(1, 11, High), (2, 12, Average)]);
        s.on_hello(ctx(0.5, 30.0), HelloMessage { origin: 11 });
        s.on_hello(ctx(0.5, 30.0), HelloMessage { origin: 12 });
        assert_eq!(failures(&tick(&mut s, 1.0)), 0);
        for t in [2.0, 3.0] {
            s.on_hello(ctx(t - 0.5, 30.0), HelloMessage { origin: 12 });
            assert_eq!(failures(&tick(&mut s, t)), 0);
        }
        s.on_hello(ctx(3.5, 30.0), HelloMessage { origin: 12 });
        let a = tick(&mut s, 4.0);
        assert_eq!(failures(&a), 1);
        assert!(a.iter().any(|x| matches!(
            x,
            Action::Note(ProtocolEvent::RerrAtSource { local: true, .. })
        )));
        assert_eq!(s.source_state(99).unwrap().paths.active.unwrap().reply_id, 2);
    }

    #[test]
    fn hello_resets_miss_counter() {
        let mut s = source_with_paths(&[(1, 11, High)]);
        s.on_hello(ctx(0.5, 30.0), HelloMessage { origin: 11 });
        tick(&mut s, 1.0);
        tick(&mut s, 2.0);
        tick(&mut s, 3.0);
        s.on_hello(ctx(3.5, 30.0), HelloMessage { origin: 11 });
        assert_eq!(failures(&tick(&mut s, 4.0)), 0);
        tick(&mut s, 5.0);
        assert_eq!(failures(&tick(&mut s, 6.0)), 0);
        assert_eq!(failures(&tick(&mut s, 7.0)), 1);
    }

    #[test]
    fn hello_tick_beacons_and_rearms() {
        let mut n = Node::new(3, ProtocolConfig::default());
        let a = tick(&mut n, 1.0);
        assert_eq!(
            a,
            vec![
                Action::Broadcast(Message::Hello(HelloMessage { origin: 3 })),
                Action::Timer {
                    delay: 1.0,
                    timer: TimerKind::Hello
                }
            ]
        );
    }
}
