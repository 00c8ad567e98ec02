//! Energy arithmetic: path residual-energy sums and averages, per-discovery
//! energy levels, the three-way node classification and the α bounds.
//!
//! Everything here is a pure function over value types.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::Error;

/// Residual battery energy in joules.
pub type Joules = f64;

/// Radio power draw and bit rate, used to turn packet sizes into energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioEnergyProfile {
    /// Transmit power in watts.
    pub tx_power: f64,
    /// Receive power in watts.
    pub rx_power: f64,
    /// Bits per second.
    pub bitrate: f64,
}

impl Default for RadioEnergyProfile {
    /// WaveLAN-like card: 281.8 mW both ways at 2 Mbit/s.
    fn default() -> Self {
        RadioEnergyProfile {
            tx_power: 0.2818,
            rx_power: 0.2818,
            bitrate: 2_000_000.0,
        }
    }
}

impl RadioEnergyProfile {
    pub fn new(tx_power: f64, rx_power: f64, bitrate: f64) -> Result<Self, Error> {
        let p = RadioEnergyProfile {
            tx_power,
            rx_power,
            bitrate,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.tx_power > 0.0) {
            return Err(Error::invalid("tx_power", "must be > 0"));
        }
        if !(self.rx_power > 0.0) {
            return Err(Error::invalid("rx_power", "must be > 0"));
        }
        if !(self.bitrate > 0.0) {
            return Err(Error::invalid("bitrate", "must be > 0"));
        }
        Ok(())
    }

    /// Time on air for a packet of `packet_bits`.
    pub fn airtime(&self, packet_bits: u64) -> f64 {
        packet_bits as f64 / self.bitrate
    }

    /// Uniform per-link cost c(u, v): every link costs the same, so this is
    /// just the transmit energy of one packet. Symmetric by construction.
    pub fn link_cost(&self, packet_bits: u64) -> Joules {
        self.tx_power * self.airtime(packet_bits)
    }
}

/// Which side of the radio a packet is charged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadioDirection {
    Transmit,
    Receive,
}

/// Energy to send or receive one packet: power × packet_bits / bitrate.
pub fn transmission_energy(
    profile: &RadioEnergyProfile,
    direction: RadioDirection,
    packet_bits: u64,
) -> Result<Joules, Error> {
    if packet_bits == 0 {
        return Err(Error::Precondition("packet must carry at least one bit"));
    }
    let power = match direction {
        RadioDirection::Transmit => profile.tx_power,
        RadioDirection::Receive => profile.rx_power,
    };
    Ok(power * profile.airtime(packet_bits))
}

/// Residual energies of the nodes of one path, source through destination.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnergySummary {
    node_energies: Vec<Joules>,
}

impl PathEnergySummary {
    pub fn new(node_energies: Vec<Joules>) -> Result<Self, Error> {
        if node_energies.len() < 2 {
            return Err(Error::Precondition(
                "a path holds at least a source and a destination",
            ));
        }
        if node_energies.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::Precondition("node energies must be non-negative"));
        }
        Ok(PathEnergySummary { node_energies })
    }

    pub fn node_energies(&self) -> &[Joules] {
        &self.node_energies
    }

    pub fn node_count(&self) -> usize {
        self.node_energies.len()
    }
}

/// Sum of residual energies along a path, folded left to right.
pub fn path_energy_sum(summary: &PathEnergySummary) -> Joules {
    summary.node_energies.iter().fold(0.0, |acc, e| acc + e)
}

/// Mean residual energy of the nodes on a path.
pub fn path_energy_average(summary: &PathEnergySummary) -> Joules {
    path_energy_sum(summary) / summary.node_count() as f64
}

/// Average residual energy over every path seen in one discovery.
///
/// Path sums are added in list order and each path contributes its full
/// node count, so endpoints shared by all paths are counted once per path.
pub fn discovery_energy_average(paths: &[PathEnergySummary]) -> Result<Joules, Error> {
    if paths.is_empty() {
        return Err(Error::NoDiscoveryPaths);
    }
    let mut total = 0.0;
    let mut nodes = 0usize;
    for p in paths {
        total += path_energy_sum(p);
        nodes += p.node_count();
    }
    Ok(total / nodes as f64)
}

/// Same reduction as [`discovery_energy_average`], over (e_sum, node_count)
/// pairs already accumulated hop by hop.
pub fn average_from_sums<I>(sums: I) -> Result<Joules, Error>
where
    I: IntoIterator<Item = (Joules, usize)>,
{
    let mut total = 0.0;
    let mut nodes = 0usize;
    for (sum, count) in sums {
        total += sum;
        nodes += count;
    }
    if nodes == 0 {
        return Err(Error::NoDiscoveryPaths);
    }
    Ok(total / nodes as f64)
}

/// Residual energy relative to the discovery average.
pub fn node_energy_level(residual: Joules, e_average_net: Joules) -> Result<f64, Error> {
    if !(e_average_net > 0.0) {
        return Err(Error::DegenerateAverage);
    }
    Ok(residual / e_average_net)
}

/// Energy class of a node. Ordered `Low < Average < High`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum NodeClass {
    Low,
    Average,
    High,
}

impl NodeClass {
    pub const ALL: [NodeClass; 3] = [NodeClass::Low, NodeClass::Average, NodeClass::High];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeClass::Low => "low",
            NodeClass::Average => "average",
            NodeClass::High => "high",
        }
    }
}

impl fmt::Display for NodeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Low below α, Average in [α, 1), High at 1 and above.
pub fn classify_node(level: f64, alpha: f64) -> NodeClass {
    if level < alpha {
        NodeClass::Low
    } else if level < 1.0 {
        NodeClass::Average
    } else {
        NodeClass::High
    }
}

/// Classify a residual energy against a discovery's β.
pub fn classify_energy(residual: Joules, beta: Joules, alpha: f64) -> Result<NodeClass, Error> {
    Ok(classify_node(node_energy_level(residual, beta)?, alpha))
}

/// The α coefficient together with the participation model it must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaPolicy {
    pub alpha: f64,
    /// Aggregate participation factor of the forwarding nodes, in (0, 1).
    pub t_net: f64,
    /// Expected number of nodes effectively forwarding data.
    pub k_nodes: u32,
}

/// 2^-40. Reproduces the published α_min column for K = 30..100.
pub const DEFAULT_T_NET: f64 = 9.094_947_017_729_282e-13;

impl Default for AlphaPolicy {
    fn default() -> Self {
        AlphaPolicy {
            alpha: 0.42,
            t_net: DEFAULT_T_NET,
            k_nodes: 30,
        }
    }
}

impl AlphaPolicy {
    pub fn new(alpha: f64, t_net: f64, k_nodes: u32) -> Result<Self, Error> {
        let p = AlphaPolicy {
            alpha,
            t_net,
            k_nodes,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha", "must lie in (0, 1)"));
        }
        if !(self.t_net > 0.0 && self.t_net < 1.0) {
            return Err(Error::invalid("t_net", "must lie in (0, 1)"));
        }
        if self.k_nodes == 0 {
            return Err(Error::invalid("k_nodes", "must be positive"));
        }
        let floor = alpha_lower_bound(self.t_net, self.k_nodes);
        if self.alpha < floor {
            return Err(Error::invalid(
                "alpha",
                format!(
                    "{} is below the lower bound t_net^(1/k_nodes) = {floor:.4}",
                    self.alpha
                ),
            ));
        }
        Ok(())
    }

    pub fn lower_bound(&self) -> f64 {
        alpha_lower_bound(self.t_net, self.k_nodes)
    }
}

/// α_min = t_net^(1/K).
pub fn alpha_lower_bound(t_net: f64, k_nodes: u32) -> f64 {
    t_net.powf(1.0 / f64::from(k_nodes))
}

/// β / w(u). Only informative when it falls below 1.
pub fn alpha_upper_bound(beta: Joules, residual: Joules) -> Result<f64, Error> {
    if !(residual > 0.0) {
        return Err(Error::ExhaustedNodeBound);
    }
    Ok(beta / residual)
}
