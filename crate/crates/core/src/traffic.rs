//! CBR traffic and run metrics.

use serde::{Deserialize, Serialize};

use crate::energy::Joules;
use crate::{Error, NodeId, SimTime};

/// A constant-bit-rate flow between two nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CbrFlow {
    pub source: NodeId,
    pub destination: NodeId,
    /// Packets per second.
    #[serde(default = "default_rate")]
    pub rate: f64,
    #[serde(default = "default_payload")]
    pub payload: u32,
    #[serde(default)]
    pub start: SimTime,
    /// Defaults to the end of the run.
    #[serde(default)]
    pub stop: Option<SimTime>,
}

fn default_rate() -> f64 {
    4.0
}

fn default_payload() -> u32 {
    512
}

impl CbrFlow {
    pub fn new(source: NodeId, destination: NodeId, start: SimTime, stop: SimTime) -> Self {
        CbrFlow {
            source,
            destination,
            rate: default_rate(),
            payload: default_payload(),
            start,
            stop: Some(stop),
        }
    }

    pub fn stop_or(&self, run_end: SimTime) -> SimTime {
        self.stop.unwrap_or(run_end)
    }

    pub fn gap(&self) -> SimTime {
        1.0 / self.rate
    }

    pub fn validate(&self, node_count: usize) -> Result<(), Error> {
        if !(self.rate > 0.0) || !self.rate.is_finite() {
            return Err(Error::invalid("flows", "rate must be > 0"));
        }
        if self.payload == 0 {
            return Err(Error::invalid("flows", "payload must be > 0"));
        }
        if self.source == self.destination {
            return Err(Error::invalid("flows", "source equals destination"));
        }
        if self.source as usize >= node_count || self.destination as usize >= node_count {
            return Err(Error::invalid("flows", "node id outside the network"));
        }
        if !(self.start >= 0.0) || self.stop.is_some_and(|s| s < self.start) {
            return Err(Error::invalid("flows", "need 0 <= start <= stop"));
        }
        Ok(())
    }
}

/// One CBR tick at `now`: returns the time of the next tick, or `None`
/// once the flow has reached `stop`.
pub fn cbr_tick(flow: &CbrFlow, now: SimTime, stop: SimTime) -> Result<Option<SimTime>, Error> {
    if now < flow.start || now >= stop {
        return Err(Error::Precondition("cbr tick outside [start, stop)"));
    }
    let next = now + flow.gap();
    Ok((next < stop).then_some(next))
}

/// Number of ticks a flow fires between `first` and `stop`.
pub fn packets_offered(flow: &CbrFlow, first: SimTime, stop: SimTime) -> u64 {
    let mut n = 0;
    let mut t = first;
    while t < stop {
        n += 1;
        t += flow.gap();
    }
    n
}

/// Everything the run reports on, accumulated as events happen.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsLedger {
    pub exhaustion_times: Vec<(NodeId, SimTime)>,
    pub per_node_consumed: Vec<Joules>,
    /// (send time, receive time) per delivered packet.
    pub deliveries: Vec<(SimTime, SimTime)>,
    pub sent_count: u64,
    pub delivered_count: u64,
    pub dropped_count: u64,
}

impl MetricsLedger {
    pub fn new(nodes: usize) -> Self {
        MetricsLedger {
            per_node_consumed: vec![0.0; nodes],
            ..Default::default()
        }
    }

    pub fn record_consumed(&mut self, node: NodeId, applied: Joules) {
        self.per_node_consumed[node as usize] += applied;
    }

    pub fn record_exhaustion(&mut self, node: NodeId, at: SimTime) {
        debug_assert!(self.exhaustion_times.last().is_none_or(|(_, t)| *t <= at));
        self.exhaustion_times.push((node, at));
    }

    pub fn record_sent(&mut self) {
        self.sent_count += 1;
    }

    pub fn record_drop(&mut self) {
        self.dropped_count += 1;
    }

    pub fn record_delivery(&mut self, sent: SimTime, received: SimTime) -> Result<(), Error> {
        if received < sent {
            return Err(Error::Precondition("delivery before send"));
        }
        self.deliveries.push((sent, received));
        self.delivered_count += 1;
        Ok(())
    }

    pub fn total_consumed(&self) -> Joules {
        self.per_node_consumed.iter().sum()
    }
}

/// Time of the `n`-th battery exhaustion, or `None` if fewer than `n` nodes
/// died (right-censored).
pub fn network_lifetime(ledger: &MetricsLedger, n: usize) -> Result<Option<SimTime>, Error> {
    if n == 0 {
        return Err(Error::Precondition("lifetime needs n >= 1"));
    }
    let mut times: Vec<SimTime> = ledger.exhaustion_times.iter().map(|(_, t)| *t).collect();
    times.sort_by(f64::total_cmp);
    Ok(times.get(n - 1).copied())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub lifetime_n: usize,
    pub lifetime: Option<SimTime>,
    /// Mean over nodes that consumed any energy.
    pub mean_energy: Option<Joules>,
    pub mean_delay: Option<SimTime>,
    pub delivery_ratio: f64,
    pub sent: u64,
    pub delivered: u64,
    pub participants: usize,
}

pub fn summarize(ledger: &MetricsLedger, lifetime_n: usize) -> Result<Summary, Error> {
    let lifetime = network_lifetime(ledger, lifetime_n)?;
    let participants: Vec<Joules> = ledger
        .per_node_consumed
        .iter()
        .copied()
        .filter(|c| *c > 0.0)
        .collect();
    let mean_energy =
        (!participants.is_empty()).then(|| participants.iter().sum::<f64>() / participants.len() as f64);
    let mean_delay = (!ledger.deliveries.is_empty()).then(|| {
        ledger.deliveries.iter().map(|(s, r)| r - s).sum::<f64>() / ledger.deliveries.len() as f64
    });
    let delivery_ratio = if ledger.sent_count == 0 {
        0.0
    } else {
        ledger.delivered_count as f64 / ledger.sent_count as f64
    };
    Ok(Summary {
        lifetime_n,
        lifetime,
        mean_energy,
        mean_delay,
        delivery_ratio,
        sent: ledger.sent_count,
        delivered: ledger.delivered_count,
        participants: participants.len(),
    })
}

/// Default N for the lifetime metric: 5% of the network, rounded up.
pub fn default_lifetime_n(nodes: usize) -> usize {
    (nodes * 5).div_ceil(100).max(1)
}
