//! Physical layer: terrain, random waypoint mobility, unit-disk links,
//! batteries and a contention-free MAC.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{transmission_energy, Joules, RadioDirection, RadioEnergyProfile};
use crate::{Error, NodeId, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Terrain {
    pub width: f64,
    pub height: f64,
}

impl Default for Terrain {
    fn default() -> Self {
        Terrain {
            width: 840.0,
            height: 840.0,
        }
    }
}

impl Terrain {
    pub fn contains(&self, p: Position) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Position {
        Position {
            x: rng.gen::<f64>() * self.width,
            y: rng.gen::<f64>() * self.height,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Move up to `step` metres towards `target`, stopping on it.
    fn toward(&self, target: &Position, step: f64) -> Position {
        let d = self.distance(target);
        if step >= d || d == 0.0 {
            return *target;
        }
        let f = step / d;
        Position {
            x: self.x + (target.x - self.x) * f,
            y: self.y + (target.y - self.y) * f,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobilityConfig {
    pub max_speed: f64,
    pub pause_time: f64,
    /// Interval between position samples; bounds waypoint-arrival lag.
    pub sample_period: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig {
            max_speed: 5.0,
            pause_time: 0.0,
            sample_period: 0.1,
        }
    }
}

/// One node's random waypoint leg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityState {
    pub current: Position,
    pub waypoint: Position,
    pub speed: f64,
    pub pause_until: SimTime,
    /// Time at which `current` was sampled.
    pub updated_at: SimTime,
}

impl MobilityState {
    pub fn stationary(at: Position) -> Self {
        MobilityState {
            current: at,
            waypoint: at,
            speed: 0.0,
            pause_until: 0.0,
            updated_at: 0.0,
        }
    }

    pub fn start<R: Rng + ?Sized>(
        at: Position,
        terrain: &Terrain,
        cfg: &MobilityConfig,
        rng: &mut R,
    ) -> Self {
        MobilityState {
            current: at,
            waypoint: terrain.random_point(rng),
            speed: draw_speed(cfg, rng),
            pause_until: 0.0,
            updated_at: 0.0,
        }
    }

    /// Interpolated position at `t >= updated_at`.
    pub fn position_at(&self, t: SimTime) -> Position {
        let moving_from = self.updated_at.max(self.pause_until);
        if t <= moving_from || self.speed == 0.0 {
            return self.current;
        }
        self.current
            .toward(&self.waypoint, self.speed * (t - moving_from))
    }
}

fn draw_speed<R: Rng + ?Sized>(cfg: &MobilityConfig, rng: &mut R) -> f64 {
    if cfg.max_speed > 0.0 {
        rng.gen::<f64>() * cfg.max_speed
    } else {
        0.0
    }
}

/// Advance a leg to `now`. On arrival the node pauses, then heads to a fresh
/// uniform waypoint at a fresh uniform speed.
pub fn waypoint_update<R: Rng + ?Sized>(
    m: &MobilityState,
    now: SimTime,
    terrain: &Terrain,
    cfg: &MobilityConfig,
    rng: &mut R,
) -> MobilityState {
    debug_assert!(now >= m.updated_at);
    let current = m.position_at(now);
    let mut next = MobilityState {
        current,
        updated_at: now,
        ..*m
    };
    if current == m.waypoint && now >= m.pause_until && m.speed > 0.0 {
        next.pause_until = now + cfg.pause_time;
        next.waypoint = terrain.random_point(rng);
        next.speed = draw_speed(cfg, rng);
    }
    next
}

/// A node's battery. `consumed` accumulates every debit actually applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Battery {
    pub initial: Joules,
    pub residual: Joules,
    pub consumed: Joules,
    pub exhausted_at: Option<SimTime>,
}

impl Battery {
    pub fn new(initial: Joules) -> Self {
        Battery {
            initial,
            residual: initial,
            consumed: 0.0,
            exhausted_at: if initial > 0.0 { None } else { Some(0.0) },
        }
    }

    pub fn is_alive(&self) -> bool {
        self.exhausted_at.is_none()
    }
}

/// Outcome of charging a battery.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Debit {
    /// Energy actually removed (clamped to what was left).
    pub applied: Joules,
    pub exhausted_now: bool,
}

/// Simplified MAC: fixed airtime plus uniform jitter, optional random loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacProfile {
    /// Fixed per-hop overhead added to the airtime.
    pub per_hop_delay_base: f64,
    /// Upper end of the uniform jitter.
    pub per_hop_jitter: f64,
    pub loss_probability: f64,
}

impl Default for MacProfile {
    fn default() -> Self {
        MacProfile {
            per_hop_delay_base: 0.0,
            per_hop_jitter: 0.001,
            loss_probability: 0.0,
        }
    }
}

impl MacProfile {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.per_hop_delay_base >= 0.0) {
            return Err(Error::invalid("per_hop_delay_base", "must be >= 0"));
        }
        if !(self.per_hop_jitter >= 0.0) {
            return Err(Error::invalid("per_hop_jitter", "must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.loss_probability) {
            return Err(Error::invalid("loss_probability", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxMode {
    Broadcast,
    Unicast(NodeId),
}

/// Receivers chosen for one emission, with their per-hop delays.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub tx: Debit,
    pub deliveries: Vec<(NodeId, SimTime)>,
}

#[derive(Debug, Clone)]
pub struct World {
    pub terrain: Terrain,
    pub range: f64,
    pub radio: RadioEnergyProfile,
    pub mac: MacProfile,
    pub mobility_cfg: MobilityConfig,
    mobility: Vec<MobilityState>,
    batteries: Vec<Battery>,
}

impl World {
    pub fn new(
        terrain: Terrain,
        range: f64,
        radio: RadioEnergyProfile,
        mac: MacProfile,
        mobility_cfg: MobilityConfig,
        mobility: Vec<MobilityState>,
        energies: &[Joules],
    ) -> Self {
        assert_eq!(mobility.len(), energies.len());
        World {
            terrain,
            range,
            radio,
            mac,
            mobility_cfg,
            mobility,
            batteries: energies.iter().map(|e| Battery::new(*e)).collect(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.batteries.len()
    }

    pub fn battery(&self, node: NodeId) -> &Battery {
        &self.batteries[node as usize]
    }

    pub fn batteries(&self) -> &[Battery] {
        &self.batteries
    }

    pub fn residual(&self, node: NodeId) -> Joules {
        self.batteries[node as usize].residual
    }

    pub fn is_alive(&self, node: NodeId) -> bool {
        self.batteries[node as usize].is_alive()
    }

    pub fn mobility(&self, node: NodeId) -> &MobilityState {
        &self.mobility[node as usize]
    }

    pub fn position(&self, node: NodeId, now: SimTime) -> Position {
        self.mobility[node as usize].position_at(now)
    }

    /// Resample a node's position and roll its waypoint if it has arrived.
    pub fn update_mobility<R: Rng + ?Sized>(&mut self, node: NodeId, now: SimTime, rng: &mut R) {
        let m = &mut self.mobility[node as usize];
        *m = waypoint_update(m, now, &self.terrain, &self.mobility_cfg, rng);
    }

    pub fn in_range(&self, a: NodeId, b: NodeId, now: SimTime) -> bool {
        self.position(a, now).distance(&self.position(b, now)) <= self.range
    }

    /// Live nodes within range of `node`, excluding itself, in id order.
    pub fn neighbors(&self, node: NodeId, now: SimTime) -> Vec<NodeId> {
        let here = self.position(node, now);
        (0..self.node_count() as NodeId)
            .filter(|&other| other != node && self.is_alive(other))
            .filter(|&other| here.distance(&self.position(other, now)) <= self.range)
            .collect()
    }

    /// Remove up to `amount` joules; a battery that reaches zero is exhausted.
    pub fn debit(&mut self, node: NodeId, amount: Joules, now: SimTime) -> Debit {
        let b = &mut self.batteries[node as usize];
        if !b.is_alive() {
            return Debit {
                applied: 0.0,
                exhausted_now: false,
            };
        }
        let exhausted_now = amount >= b.residual;
        let applied = amount.min(b.residual);
        b.consumed += applied;
        if exhausted_now {
            b.residual = 0.0;
            b.exhausted_at = Some(now);
        } else {
            b.residual -= applied;
        }
        Debit {
            applied,
            exhausted_now,
        }
    }

    fn hop_delay<R: Rng + ?Sized>(&self, bits: u64, rng: &mut R) -> SimTime {
        let jitter = if self.mac.per_hop_jitter > 0.0 {
            rng.gen::<f64>() * self.mac.per_hop_jitter
        } else {
            0.0
        };
        self.mac.per_hop_delay_base + self.radio.airtime(bits) + jitter
    }

    /// Emit one packet. The sender pays transmit energy once; receivers are
    /// charged later, on delivery, via [`World::receive`].
    pub fn transmit<R: Rng + ?Sized>(
        &mut self,
        sender: NodeId,
        bits: u64,
        mode: TxMode,
        now: SimTime,
        rng: &mut R,
    ) -> Result<Transmission, Error> {
        if !self.is_alive(sender) {
            return Err(Error::Precondition("exhausted node cannot transmit"));
        }
        let targets = match mode {
            TxMode::Broadcast => self.neighbors(sender, now),
            TxMode::Unicast(to) => {
                if to != sender && self.is_alive(to) && self.in_range(sender, to, now) {
                    vec![to]
                } else {
                    Vec::new()
                }
            }
        };
        let cost = transmission_energy(&self.radio, RadioDirection::Transmit, bits)?;
        let tx = self.debit(sender, cost, now);
        let mut deliveries = Vec::with_capacity(targets.len());
        for to in targets {
            let delay = self.hop_delay(bits, rng);
            if self.mac.loss_probability > 0.0 && rng.gen::<f64>() < self.mac.loss_probability {
                continue;
            }
            deliveries.push((to, delay));
        }
        Ok(Transmission { tx, deliveries })
    }

    /// Charge the receive side of a delivered packet. Returns `None` when the
    /// receiver died while the packet was in flight.
    pub fn receive(&mut self, receiver: NodeId, bits: u64, now: SimTime) -> Option<Debit> {
        if !self.is_alive(receiver) {
            return None;
        }
        let cost = transmission_energy(&self.radio, RadioDirection::Receive, bits).ok()?;
        Some(self.debit(receiver, cost, now))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn static_world(points: &[(f64, f64)], energies: &[f64]) -> World {
        World::new(
            Terrain::default(),
            250.0,
            RadioEnergyProfile::default(),
            MacProfile::default(),
            MobilityConfig::default(),
            points
                .iter()
                .map(|(x, y)| MobilityState::stationary(Position::new(*x, *y)))
                .collect(),
            energies,
        )
    }

    #[test]
    fn straight_line_kinematics() {
        let m = MobilityState {
            current: Position::new(0.0, 0.0),
            waypoint: Position::new(30.0, 40.0),
            speed: 5.0,
            pause_until: 0.0,
            updated_at: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let next = waypoint_update(&m, 5.0, &Terrain::default(), &MobilityConfig::default(), &mut rng);
        assert!((next.current.x - 15.0).abs() < 1e-12);
        assert!((next.current.y - 20.0).abs() < 1e-12);
        assert_eq!(next.waypoint, m.waypoint);
    }

    #[test]
    fn zero_speed_stays_put() {
        let m = MobilityState {
            current: Position::new(10.0, 10.0),
            waypoint: Position::new(300.0, 300.0),
            speed: 0.0,
            pause_until: 0.0,
            updated_at: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let next = waypoint_update(&m, 50.0, &Terrain::default(), &MobilityConfig::default(), &mut rng);
        assert_eq!(next.current, m.current);
    }

    #[test]
    fn arrival_draws_from_the_given_stream() {
        let m = MobilityState {
            current: Position::new(0.0, 0.0),
            waypoint: Position::new(3.0, 4.0),
            speed: 5.0,
            pause_until: 0.0,
            updated_at: 0.0,
        };
        let cfg = MobilityConfig::default();
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let next = waypoint_update(&m, 1.0, &Terrain::default(), &cfg, &mut a);
        assert_eq!(next.current, Position::new(3.0, 4.0));
        let expected = Terrain::default().random_point(&mut b);
        assert_eq!(next.waypoint, expected);
        assert!(next.speed >= 0.0 && next.speed <= cfg.max_speed);
    }

    #[test]
    fn mobility_stays_in_bounds() {
        let terrain = Terrain::default();
        let cfg = MobilityConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = MobilityState::start(terrain.random_point(&mut rng), &terrain, &cfg, &mut rng);
        let mut t = 0.0;
        for _ in 0..20_000 {
            t += cfg.sample_period;
            m = waypoint_update(&m, t, &terrain, &cfg, &mut rng);
            assert!(terrain.contains(m.current));
            assert!(m.speed <= cfg.max_speed);
        }
    }

    #[test]
    fn range_boundary_is_inclusive() {
        let w = static_world(&[(0.0, 0.0), (250.0, 0.0), (500.01, 0.0)], &[10.0; 3]);
        assert_eq!(w.neighbors(0, 0.0), vec![1]);
        assert!(!w.in_range(1, 2, 0.0));
        assert_eq!(w.neighbors(1, 0.0), vec![0]);
    }

    #[test]
    fn exhausted_neighbor_is_excluded() {
        let mut w = static_world(&[(0.0, 0.0), (10.0, 0.0)], &[10.0, 1e-6]);
        assert_eq!(w.neighbors(0, 0.0), vec![1]);
        let d = w.debit(1, 1.0, 0.5);
        assert!(d.exhausted_now);
        assert_eq!(d.applied, 1e-6);
        assert!(w.neighbors(0, 1.0).is_empty());
    }

    #[test]
    fn broadcast_fans_out() {
        let mut w = static_world(
            &[(0.0, 0.0), (100.0, 0.0), (0.0, 100.0), (100.0, 100.0), (600.0, 600.0)],
            &[10.0; 5],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = w.transmit(0, 512, TxMode::Broadcast, 0.0, &mut rng).unwrap();
        assert_eq!(t.deliveries.len(), 3);
        let e = transmission_energy(&w.radio, RadioDirection::Transmit, 512).unwrap();
        assert_eq!(w.battery(0).consumed, e);
        for (_, delay) in &t.deliveries {
            assert!(*delay > 0.0 && *delay <= w.radio.airtime(512) + 0.001);
        }
    }

    #[test]
    fn unicast_out_of_range_pays_but_delivers_nothing() {
        let mut w = static_world(&[(0.0, 0.0), (400.0, 0.0)], &[10.0; 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = w.transmit(0, 4096, TxMode::Unicast(1), 0.0, &mut rng).unwrap();
        assert!(t.deliveries.is_empty());
        assert!((w.battery(0).consumed - 5.771e-4).abs() < 1e-7);
    }

    #[test]
    fn data_hop_charges_both_ends() {
        let mut w = static_world(&[(0.0, 0.0), (100.0, 0.0)], &[10.0; 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = w.transmit(0, 4096, TxMode::Unicast(1), 0.0, &mut rng).unwrap();
        assert_eq!(t.deliveries.len(), 1);
        let rx = w.receive(1, 4096, t.deliveries[0].1).unwrap();
        assert!((rx.applied - 5.771e-4).abs() < 1e-7);
        assert!((w.residual(0) - (10.0 - 5.771e-4)).abs() < 1e-7);
        for b in w.batteries() {
            assert!((b.initial - (b.residual + b.consumed)).abs() <= 1e-9 * b.initial);
        }
    }

    #[test]
    fn dead_sender_is_rejected() {
        let mut w = static_world(&[(0.0, 0.0), (100.0, 0.0)], &[0.0, 10.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(w.transmit(0, 64, TxMode::Broadcast, 0.0, &mut rng).is_err());
    }

    #[test]
    fn loss_drops_some_deliveries() {
        let mut w = static_world(&[(0.0, 0.0), (100.0, 0.0)], &[100.0; 2]);
        w.mac.loss_probability = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let delivered: usize = (0..1000)
            .map(|_| w.transmit(0, 64, TxMode::Broadcast, 0.0, &mut rng).unwrap().deliveries.len())
            .sum();
        assert!(delivered > 400 && delivered < 600, "{delivered}");
    }
}
