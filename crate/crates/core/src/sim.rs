//! One simulation run: engine, world, routing nodes and metrics wired together.

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::energy::{Joules, RadioEnergyProfile};
use crate::engine::{Event, EventQueue, RngStreams, Stream};
use crate::protocol::{
    Action, DataPacket, Message, Node, NodeCtx, PathKey, Protocol, ProtocolConfig, ProtocolEvent,
    TimerKind,
};
use crate::traffic::{cbr_tick, default_lifetime_n, summarize, CbrFlow, MetricsLedger, Summary};
use crate::world::{MacProfile, MobilityConfig, MobilityState, Terrain, TxMode, World};
use crate::{Error, NodeId, SimTime};

#[derive(Debug, Clone, PartialEq)]
pub enum FlowPlan {
    /// `count` flows between uniformly drawn distinct node pairs.
    Random { count: usize, rate: f64, payload: u32 },
    Explicit(Vec<CbrFlow>),
}

impl Default for FlowPlan {
    fn default() -> Self {
        FlowPlan::Random {
            count: 1,
            rate: 4.0,
            payload: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub nodes: usize,
    pub terrain: Terrain,
    pub range: f64,
    pub radio: RadioEnergyProfile,
    pub mac: MacProfile,
    pub mobility: MobilityConfig,
    pub protocol: ProtocolConfig,
    pub duration: SimTime,
    pub energy_min: Joules,
    pub energy_max: Joules,
    pub flows: FlowPlan,
    pub lifetime_n: Option<usize>,
    /// Spacing of the consumed-energy samples.
    pub energy_sample_period: SimTime,
    pub options: RunOptions,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            nodes: 50,
            terrain: Terrain::default(),
            range: 250.0,
            radio: RadioEnergyProfile::default(),
            mac: MacProfile::default(),
            mobility: MobilityConfig::default(),
            protocol: ProtocolConfig::default(),
            duration: 300.0,
            energy_min: 10.0,
            energy_max: 60.0,
            flows: FlowPlan::default(),
            lifetime_n: None,
            energy_sample_period: 1.0,
            options: RunOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    pub trace_messages: bool,
    pub trace_positions: bool,
    /// Keep every [`ProtocolEvent`] for inspection after the run.
    pub record_events: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    PacketDelivery {
        receiver: NodeId,
        sender: NodeId,
        message: Message,
    },
    TimerFire {
        node: NodeId,
        timer: TimerKind,
    },
    MobilityUpdate {
        node: NodeId,
        tick: u64,
    },
    TrafficTick {
        flow: usize,
    },
    Sample {
        tick: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergySample {
    pub t: SimTime,
    pub consumed: Joules,
    pub exhausted: usize,
}

/// Per-node battery bookkeeping compared against the metrics ledger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyCheck {
    /// max over nodes of |initial - residual - consumed| / initial.
    pub max_relative_error: f64,
    pub ledger_total: Joules,
    pub world_total: Joules,
}

impl EnergyCheck {
    pub fn holds(&self, tolerance: f64) -> bool {
        let scale = self.world_total.abs().max(f64::MIN_POSITIVE);
        self.max_relative_error <= tolerance
            && (self.ledger_total - self.world_total).abs() / scale <= tolerance
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ClassOrderStats {
    pub departures: u64,
    pub violations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub protocol: Protocol,
    pub nodes: usize,
    pub duration: SimTime,
    pub summary: Summary,
    pub exhaustion: Vec<(NodeId, SimTime)>,
    pub energy_samples: Vec<EnergySample>,
    pub energy_check: EnergyCheck,
    pub class_order: ClassOrderStats,
    pub flows: Vec<CbrFlow>,
    pub message_trace: Option<String>,
    pub position_trace: Option<String>,
}

pub struct Simulation {
    queue: EventQueue<EventKind>,
    world: World,
    nodes: Vec<Node>,
    flows: Vec<CbrFlow>,
    ledger: MetricsLedger,
    duration: SimTime,
    lifetime_n: usize,
    energy_sample_period: SimTime,
    options: RunOptions,
    mobility_rng: ChaCha8Rng,
    mac_rng: ChaCha8Rng,
    events: Vec<(SimTime, NodeId, ProtocolEvent)>,
    samples: Vec<EnergySample>,
    class_order: ClassOrderStats,
    message_trace: Option<String>,
    position_trace: Option<String>,
}

impl Simulation {
    /// Build a run from a configuration: positions and flows come from the
    /// topology stream, batteries from the energy stream, legs from the
    /// mobility stream.
    pub fn new(cfg: &SimConfig, seed: u64) -> Result<Self, Error> {
        if cfg.nodes < 2 {
            return Err(Error::invalid("node_count", "need at least 2 nodes"));
        }
        let streams = RngStreams::new(seed);
        let mut topo = streams.stream(Stream::Topology);
        let positions: Vec<_> = (0..cfg.nodes)
            .map(|_| cfg.terrain.random_point(&mut topo))
            .collect();
        let flows = match &cfg.flows {
            FlowPlan::Explicit(f) => f.clone(),
            FlowPlan::Random {
                count,
                rate,
                payload,
            } => (0..*count)
                .map(|_| {
                    let source = topo.gen_range(0..cfg.nodes) as NodeId;
                    let mut destination = topo.gen_range(0..cfg.nodes - 1) as NodeId;
                    if destination >= source {
                        destination += 1;
                    }
                    CbrFlow {
                        rate: *rate,
                        payload: *payload,
                        ..CbrFlow::new(source, destination, 0.0, cfg.duration)
                    }
                })
                .collect(),
        };
        let mut energy = streams.stream(Stream::EnergyInit);
        let energies: Vec<Joules> = (0..cfg.nodes)
            .map(|_| energy.gen_range(cfg.energy_min..=cfg.energy_max))
            .collect();
        let mut mobility_rng = streams.stream(Stream::Mobility);
        let legs = positions
            .iter()
            .map(|p| {
                if cfg.mobility.max_speed > 0.0 {
                    MobilityState::start(*p, &cfg.terrain, &cfg.mobility, &mut mobility_rng)
                } else {
                    MobilityState::stationary(*p)
                }
            })
            .collect();
        let world = World::new(
            cfg.terrain,
            cfg.range,
            cfg.radio,
            cfg.mac,
            cfg.mobility,
            legs,
            &energies,
        );
        let mut sim = Simulation::from_parts(
            world,
            cfg.protocol.clone(),
            flows,
            cfg.duration,
            seed,
            cfg.options,
        )?;
        sim.mobility_rng = mobility_rng;
        sim.energy_sample_period = cfg.energy_sample_period;
        if let Some(n) = cfg.lifetime_n {
            sim.lifetime_n = n;
        }
        sim.queue.schedule(0.0, EventKind::Sample { tick: 0 })?;
        Ok(sim)
    }

    /// Build a run around an existing world, for hand-made fixtures.
    pub fn from_parts(
        world: World,
        protocol: ProtocolConfig,
        flows: Vec<CbrFlow>,
        duration: SimTime,
        seed: u64,
        options: RunOptions,
    ) -> Result<Self, Error> {
        let n = world.node_count();
        for f in &flows {
            f.validate(n)?;
        }
        let streams = RngStreams::new(seed);
        let mut queue = EventQueue::new();

        let mut phase = streams.stream(Stream::Protocol);
        for node in 0..n as NodeId {
            let t = phase.gen::<f64>() * protocol.hello_interval;
            queue.schedule(
                t,
                EventKind::TimerFire {
                    node,
                    timer: TimerKind::Hello,
                },
            )?;
        }
        let mut traffic = streams.stream(Stream::Traffic);
        for (i, f) in flows.iter().enumerate() {
            let first = f.start + traffic.gen::<f64>() * f.gap();
            if first < f.stop_or(duration) {
                queue.schedule(first, EventKind::TrafficTick { flow: i })?;
            }
        }
        if world.mobility_cfg.max_speed > 0.0 || options.trace_positions {
            for node in 0..n as NodeId {
                queue.schedule(0.0, EventKind::MobilityUpdate { node, tick: 0 })?;
            }
        }
        Ok(Simulation {
            queue,
            nodes: (0..n as NodeId)
                .map(|id| Node::new(id, protocol.clone()))
                .collect(),
            ledger: MetricsLedger::new(n),
            lifetime_n: default_lifetime_n(n),
            energy_sample_period: 1.0,
            duration,
            flows,
            options,
            mobility_rng: streams.stream(Stream::Mobility),
            mac_rng: streams.stream(Stream::Mac),
            events: Vec::new(),
            samples: Vec::new(),
            class_order: ClassOrderStats::default(),
            message_trace: options.trace_messages.then(String::new),
            position_trace: options.trace_positions.then(|| String::from("t,node,x,y\n")),
            world,
        })
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn flows(&self) -> &[CbrFlow] {
        &self.flows
    }

    pub fn ledger(&self) -> &MetricsLedger {
        &self.ledger
    }

    pub fn events(&self) -> &[(SimTime, NodeId, ProtocolEvent)] {
        &self.events
    }

    pub fn class_order(&self) -> ClassOrderStats {
        self.class_order
    }

    /// Empty a node's battery at the current time.
    pub fn drain(&mut self, node: NodeId) {
        let now = self.now();
        let residual = self.world.residual(node);
        let d = self.world.debit(node, residual, now);
        self.account(node, d.applied, d.exhausted_now);
    }

    /// Dispatch every event due at or before `until`.
    pub fn run_until(&mut self, until: SimTime) {
        while let Some(ev) = self.queue.pop_until(until) {
            self.dispatch(ev);
        }
        self.queue.advance_to(until);
    }

    /// Run to the configured duration and reduce the metrics.
    pub fn run(mut self) -> Result<RunReport, Error> {
        self.run_until(self.duration);
        self.finish()
    }

    pub fn energy_check(&self) -> EnergyCheck {
        let mut max_relative_error: f64 = 0.0;
        let mut world_total = 0.0;
        for b in self.world.batteries() {
            world_total += b.consumed;
            let err = (b.initial - b.residual - b.consumed).abs() / b.initial.max(f64::MIN_POSITIVE);
            max_relative_error = max_relative_error.max(err);
        }
        EnergyCheck {
            max_relative_error,
            ledger_total: self.ledger.total_consumed(),
            world_total,
        }
    }

    pub fn finish(self) -> Result<RunReport, Error> {
        let summary = summarize(&self.ledger, self.lifetime_n)?;
        Ok(RunReport {
            protocol: self.nodes[0].config().protocol,
            nodes: self.nodes.len(),
            duration: self.duration,
            summary,
            exhaustion: self.ledger.exhaustion_times.clone(),
            energy_check: self.energy_check(),
            energy_samples: self.samples,
            class_order: self.class_order,
            flows: self.flows,
            message_trace: self.message_trace,
            position_trace: self.position_trace,
        })
    }

    fn account(&mut self, node: NodeId, applied: Joules, exhausted_now: bool) {
        self.ledger.record_consumed(node, applied);
        if exhausted_now {
            self.ledger.record_exhaustion(node, self.queue.now());
        }
    }

    fn ctx(&self, node: NodeId) -> NodeCtx {
        NodeCtx {
            now: self.queue.now(),
            residual: self.world.residual(node),
        }
    }

    fn dispatch(&mut self, ev: Event<EventKind>) {
        let now = ev.fire_time;
        match ev.kind {
            EventKind::PacketDelivery {
                receiver,
                sender,
                message,
            } => {
                let bits = message.size_bits(&self.nodes[0].config().sizes);
                let Some(d) = self.world.receive(receiver, bits, now) else {
                    return;
                };
                self.account(receiver, d.applied, d.exhausted_now);
                let ctx = self.ctx(receiver);
                let actions = self.nodes[receiver as usize].receive(ctx, sender, message);
                self.apply(receiver, actions);
            }
            EventKind::TimerFire { node, timer } => {
                if !self.world.is_alive(node) {
                    return;
                }
                let ctx = self.ctx(node);
                let actions = self.nodes[node as usize].on_timer(ctx, timer);
                self.apply(node, actions);
            }
            EventKind::MobilityUpdate { node, tick } => {
                self.world.update_mobility(node, now, &mut self.mobility_rng);
                if let Some(trace) = &mut self.position_trace {
                    let p = self.world.position(node, now);
                    let _ = writeln!(trace, "{now:.3},{node},{:.6},{:.6}", p.x, p.y);
                }
                let next = (tick + 1) as f64 * self.world.mobility_cfg.sample_period;
                if next <= self.duration {
                    self.schedule(next, EventKind::MobilityUpdate { node, tick: tick + 1 });
                }
            }
            EventKind::TrafficTick { flow } => {
                let f = self.flows[flow];
                let stop = f.stop_or(self.duration);
                if let Ok(Some(next)) = cbr_tick(&f, now, stop) {
                    self.schedule(next, EventKind::TrafficTick { flow });
                }
                self.ledger.record_sent();
                if !self.world.is_alive(f.source) {
                    self.ledger.record_drop();
                    return;
                }
                let packet = DataPacket {
                    flow: flow as u32,
                    seq: self.ledger.sent_count,
                    source: f.source,
                    destination: f.destination,
                    path: PathKey {
                        discovery: 0,
                        reply_id: 0,
                    },
                    payload_bytes: f.payload,
                    sent_at: now,
                };
                let ctx = self.ctx(f.source);
                let actions = self.nodes[f.source as usize].originate(ctx, packet);
                self.apply(f.source, actions);
            }
            EventKind::Sample { tick } => {
                let batteries = self.world.batteries();
                self.samples.push(EnergySample {
                    t: now,
                    consumed: batteries.iter().map(|b| b.consumed).sum(),
                    exhausted: batteries.iter().filter(|b| !b.is_alive()).count(),
                });
                let next = (tick + 1) as f64 * self.energy_sample_period;
                if next <= self.duration {
                    self.schedule(next, EventKind::Sample { tick: tick + 1 });
                }
            }
        }
    }

    fn schedule(&mut self, t: SimTime, kind: EventKind) {
        self.queue
            .schedule(t, kind)
            .expect("handlers only schedule forward in time");
    }

    fn apply(&mut self, node: NodeId, actions: Vec<Action>) {
        let now = self.queue.now();
        for action in actions {
            match action {
                Action::Broadcast(message) => self.emit(node, TxMode::Broadcast, message),
                Action::Unicast { to, message } => self.emit(node, TxMode::Unicast(to), message),
                Action::Timer { delay, timer } => {
                    self.schedule(now + delay, EventKind::TimerFire { node, timer })
                }
                Action::Delivered(p) => {
                    self.ledger
                        .record_delivery(p.sent_at, now)
                        .expect("deliveries follow sends");
                }
                Action::Dropped { .. } => self.ledger.record_drop(),
                Action::Note(event) => {
                    if let ProtocolEvent::DataDeparted {
                        path_class,
                        max_class,
                        ..
                    } = event
                    {
                        self.class_order.departures += 1;
                        if path_class != max_class {
                            self.class_order.violations += 1;
                        }
                    }
                    if self.options.record_events {
                        self.events.push((now, node, event));
                    }
                }
            }
        }
    }

    fn emit(&mut self, sender: NodeId, mode: TxMode, message: Message) {
        let now = self.queue.now();
        let bits = message.size_bits(&self.nodes[0].config().sizes);
        let Ok(tx) = self.world.transmit(sender, bits, mode, now, &mut self.mac_rng) else {
            return;
        };
        self.account(sender, tx.tx.applied, tx.tx.exhausted_now);
        if let Some(trace) = &mut self.message_trace {
            let to = match mode {
                TxMode::Broadcast => "*".to_string(),
                TxMode::Unicast(t) => t.to_string(),
            };
            let _ = writeln!(trace, "@ t={now:.9} from={sender} to={to}");
            trace.push_str(&message.dump());
        }
        for (receiver, delay) in tx.deliveries {
            self.schedule(
                now + delay,
                EventKind::PacketDelivery {
                    receiver,
                    sender,
                    message: message.clone(),
                },
            );
        }
    }
}
