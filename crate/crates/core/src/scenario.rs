//! Scenario files: flat JSON objects with a `schema` version. Every field is
//! optional; an empty file is the default scenario.

use serde::{Deserialize, Serialize};

use crate::energy::{AlphaPolicy, RadioEnergyProfile, DEFAULT_T_NET};
use crate::protocol::{PacketSizes, Protocol, ProtocolConfig};
use crate::sim::{FlowPlan, RunOptions, SimConfig};
use crate::traffic::CbrFlow;
use crate::world::{MacProfile, MobilityConfig, Terrain};
use crate::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// A scalar or a list of scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// Either a run count (seeds 1..=n) or an explicit seed list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    pub fn to_vec(&self) -> Vec<u64> {
        match self {
            Seeds::Count(n) => (1..=*n).collect(),
            Seeds::List(v) => v.clone(),
        }
    }
}

/// `"random:k"` or an explicit list of flows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Flows {
    Spec(String),
    List(Vec<CbrFlow>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    pub node_count: OneOrMany<usize>,
    pub terrain_width: f64,
    pub terrain_height: f64,
    pub range: f64,
    pub max_speed: f64,
    pub pause_time: f64,
    pub position_sample_period: f64,
    pub duration: f64,
    pub flows: Flows,
    /// Rate and payload of randomly drawn flows.
    pub cbr_rate: f64,
    pub payload_bytes: u32,
    pub protocol: OneOrMany<Protocol>,
    pub alpha: f64,
    pub t_net: f64,
    pub k_nodes: u32,
    pub rreq_wait: f64,
    pub rrep_wait: f64,
    pub hello_interval: f64,
    pub allowed_hello_misses: u32,
    pub route_timeout: f64,
    pub discovery_timeout: f64,
    pub buffer_capacity: usize,
    pub rreq_cache: usize,
    pub rreq_bytes: u32,
    pub rrep_bytes: u32,
    pub rerr_bytes: u32,
    pub hello_bytes: u32,
    /// `null` picks 5% of the node count.
    pub lifetime_n: Option<usize>,
    pub seeds: Seeds,
    pub energy_min: f64,
    pub energy_max: f64,
    pub tx_power: f64,
    pub rx_power: f64,
    pub bitrate: f64,
    pub per_hop_delay_base: f64,
    pub per_hop_jitter: f64,
    pub loss_probability: f64,
    pub energy_sample_period: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        let radio = RadioEnergyProfile::default();
        let mac = MacProfile::default();
        let proto = ProtocolConfig::default();
        let sizes = PacketSizes::default();
        Scenario {
            schema: SCHEMA_VERSION,
            node_count: OneOrMany::Many((30..=190).step_by(20).collect()),
            terrain_width: 840.0,
            terrain_height: 840.0,
            range: 250.0,
            max_speed: 5.0,
            pause_time: 0.0,
            position_sample_period: 0.1,
            duration: 300.0,
            flows: Flows::Spec("random:1".into()),
            cbr_rate: 4.0,
            payload_bytes: 512,
            protocol: OneOrMany::Many(vec![Protocol::AomrLm, Protocol::Aomdv]),
            alpha: proto.alpha,
            t_net: DEFAULT_T_NET,
            k_nodes: AlphaPolicy::default().k_nodes,
            rreq_wait: proto.rreq_wait,
            rrep_wait: proto.rrep_wait,
            hello_interval: proto.hello_interval,
            allowed_hello_misses: proto.allowed_hello_misses,
            route_timeout: proto.route_timeout,
            discovery_timeout: proto.discovery_timeout,
            buffer_capacity: proto.buffer_capacity,
            rreq_cache: proto.rreq_cache,
            rreq_bytes: sizes.rreq,
            rrep_bytes: sizes.rrep,
            rerr_bytes: sizes.rerr,
            hello_bytes: sizes.hello,
            lifetime_n: None,
            seeds: Seeds::Count(20),
            energy_min: 10.0,
            energy_max: 60.0,
            tx_power: radio.tx_power,
            rx_power: radio.rx_power,
            bitrate: radio.bitrate,
            per_hop_delay_base: mac.per_hop_delay_base,
            per_hop_jitter: mac.per_hop_jitter,
            loss_probability: mac.loss_probability,
            energy_sample_period: 1.0,
        }
    }
}

fn positive(field: &'static str, v: f64) -> Result<(), Error> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be > 0, got {v}")))
    }
}

fn non_negative(field: &'static str, v: f64) -> Result<(), Error> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be >= 0, got {v}")))
    }
}

impl Scenario {
    /// Parse and validate. Blank input yields the defaults.
    pub fn from_json(text: &str) -> Result<Self, Error> {
        let scenario = if text.trim().is_empty() {
            Scenario::default()
        } else {
            let de = &mut serde_json::Deserializer::from_str(text);
            serde_path_to_error::deserialize(de).map_err(|e| {
                let field = e.path().to_string();
                let reason = e.into_inner().to_string();
                if field == "." {
                    Error::Field {
                        field: "<document>".into(),
                        reason,
                    }
                } else {
                    Error::Field { field, reason }
                }
            })?
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, Error> {
        Scenario::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn node_counts(&self) -> Vec<usize> {
        self.node_count.to_vec()
    }

    pub fn protocols(&self) -> Vec<Protocol> {
        self.protocol.to_vec()
    }

    pub fn seed_list(&self) -> Vec<u64> {
        self.seeds.to_vec()
    }

    pub fn flow_plan(&self) -> Result<FlowPlan, Error> {
        match &self.flows {
            Flows::List(list) => Ok(FlowPlan::Explicit(list.clone())),
            Flows::Spec(spec) => {
                let count = spec
                    .strip_prefix("random:")
                    .and_then(|k| k.trim().parse::<usize>().ok())
                    .ok_or_else(|| {
                        Error::invalid("flows", format!("expected `random:<k>`, got `{spec}`"))
                    })?;
                Ok(FlowPlan::Random {
                    count,
                    rate: self.cbr_rate,
                    payload: self.payload_bytes,
                })
            }
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::invalid(
                "schema",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema),
            ));
        }
        let counts = self.node_counts();
        if counts.is_empty() {
            return Err(Error::invalid("node_count", "empty list"));
        }
        if let Some(bad) = counts.iter().find(|n| **n < 2) {
            return Err(Error::invalid("node_count", format!("need at least 2 nodes, got {bad}")));
        }
        positive("terrain_width", self.terrain_width)?;
        positive("terrain_height", self.terrain_height)?;
        positive("range", self.range)?;
        non_negative("max_speed", self.max_speed)?;
        non_negative("pause_time", self.pause_time)?;
        positive("position_sample_period", self.position_sample_period)?;
        positive("duration", self.duration)?;
        positive("cbr_rate", self.cbr_rate)?;
        if self.payload_bytes == 0 {
            return Err(Error::invalid("payload_bytes", "must be > 0"));
        }
        match self.flow_plan()? {
            FlowPlan::Random { count: 0, .. } => {
                return Err(Error::invalid("flows", "need at least one flow"))
            }
            FlowPlan::Explicit(list) => {
                if list.is_empty() {
                    return Err(Error::invalid("flows", "need at least one flow"));
                }
                let smallest = *counts.iter().min().expect("non-empty");
                for f in &list {
                    f.validate(smallest)?;
                }
            }
            FlowPlan::Random { .. } => {}
        }
        if self.protocols().is_empty() {
            return Err(Error::invalid("protocol", "empty list"));
        }
        AlphaPolicy::new(self.alpha, self.t_net, self.k_nodes)?;
        for (field, v) in [
            ("rreq_wait", self.rreq_wait),
            ("rrep_wait", self.rrep_wait),
            ("hello_interval", self.hello_interval),
            ("route_timeout", self.route_timeout),
            ("discovery_timeout", self.discovery_timeout),
            ("energy_sample_period", self.energy_sample_period),
        ] {
            positive(field, v)?;
        }
        if self.allowed_hello_misses == 0 {
            return Err(Error::invalid("allowed_hello_misses", "must be >= 1"));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::invalid("buffer_capacity", "must be >= 1"));
        }
        if self.rreq_cache == 0 {
            return Err(Error::invalid("rreq_cache", "must be >= 1"));
        }
        for (field, v) in [
            ("rreq_bytes", self.rreq_bytes),
            ("rrep_bytes", self.rrep_bytes),
            ("rerr_bytes", self.rerr_bytes),
            ("hello_bytes", self.hello_bytes),
        ] {
            if v == 0 {
                return Err(Error::invalid(field, "must be > 0"));
            }
        }
        if self.lifetime_n == Some(0) {
            return Err(Error::invalid("lifetime_n", "must be >= 1"));
        }
        if self.seed_list().is_empty() {
            return Err(Error::invalid("seeds", "no seeds"));
        }
        positive("energy_min", self.energy_min)?;
        if !(self.energy_max >= self.energy_min) || !self.energy_max.is_finite() {
            return Err(Error::invalid("energy_max", "must be >= energy_min"));
        }
        RadioEnergyProfile::new(self.tx_power, self.rx_power, self.bitrate)?;
        self.mac().validate()?;
        Ok(())
    }

    fn mac(&self) -> MacProfile {
        MacProfile {
            per_hop_delay_base: self.per_hop_delay_base,
            per_hop_jitter: self.per_hop_jitter,
            loss_probability: self.loss_probability,
        }
    }

    pub fn protocol_config(&self, protocol: Protocol) -> ProtocolConfig {
        ProtocolConfig {
            protocol,
            alpha: self.alpha,
            rreq_wait: self.rreq_wait,
            rrep_wait: self.rrep_wait,
            hello_interval: self.hello_interval,
            allowed_hello_misses: self.allowed_hello_misses,
            route_timeout: self.route_timeout,
            discovery_timeout: self.discovery_timeout,
            buffer_capacity: self.buffer_capacity,
            rreq_cache: self.rreq_cache,
            sizes: PacketSizes {
                rreq: self.rreq_bytes,
                rrep: self.rrep_bytes,
                rerr: self.rerr_bytes,
                hello: self.hello_bytes,
            },
        }
    }

    /// Configuration of one run at `nodes` nodes under `protocol`.
    pub fn sim_config(
        &self,
        nodes: usize,
        protocol: Protocol,
        options: RunOptions,
    ) -> Result<SimConfig, Error> {
        Ok(SimConfig {
            nodes,
            terrain: Terrain {
                width: self.terrain_width,
                height: self.terrain_height,
            },
            range: self.range,
            radio: RadioEnergyProfile::new(self.tx_power, self.rx_power, self.bitrate)?,
            mac: self.mac(),
            mobility: MobilityConfig {
                max_speed: self.max_speed,
                pause_time: self.pause_time,
                sample_period: self.position_sample_period,
            },
            protocol: self.protocol_config(protocol),
            duration: self.duration,
            energy_min: self.energy_min,
            energy_max: self.energy_max,
            flows: self.flow_plan()?,
            lifetime_n: self.lifetime_n,
            energy_sample_period: self.energy_sample_period,
            options,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        let s = Scenario::from_json("").unwrap();
        assert_eq!(s, Scenario::default());
        assert_eq!(Scenario::from_json("{}").unwrap(), s);
        assert_eq!(s.node_counts(), vec![30, 50, 70, 90, 110, 130, 150, 170, 190]);
        assert_eq!(s.seed_list().len(), 20);
        assert_eq!(s.protocols(), vec![Protocol::AomrLm, Protocol::Aomdv]);
    }

    #[test]
    fn defaults_round_trip() {
        let s = Scenario::default();
        let back = Scenario::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.t_net, DEFAULT_T_NET);
    }

    #[test]
    fn zero_nodes_names_the_field() {
        let err = Scenario::from_json(r#"{"node_count": 0}"#).unwrap_err();
        assert!(err.to_string().contains("node_count"), "{err}");
        assert!(err.is_validation());
    }

    #[test]
    fn type_errors_name_the_field() {
        let err = Scenario::from_json(r#"{"schema": 1, "duration": "long"}"#).unwrap_err();
        assert!(err.to_string().contains("duration"), "{err}");
        let err = Scenario::from_json(r#"{"durration": 5}"#).unwrap_err();
        assert!(err.to_string().contains("durration"), "{err}");
    }

    #[test]
    fn wrong_schema() {
        let err = Scenario::from_json(r#"{"schema": 2}"#).unwrap_err();
        assert!(err.to_string().contains("schema"));
    }

    #[test]
    fn alpha_below_floor_rejected() {
        let err = Scenario::from_json(r#"{"k_nodes": 35}"#).unwrap_err();
        assert!(err.to_string().contains("alpha"), "{err}");
    }

    #[test]
    fn scalar_and_list_forms() {
        let s = Scenario::from_json(
            r#"{"schema":1,"node_count":50,"protocol":"aomdv","seeds":[42,7],
                "flows":[{"source":0,"destination":3}]}"#,
        )
        .unwrap();
        assert_eq!(s.node_counts(), vec![50]);
        assert_eq!(s.protocols(), vec![Protocol::Aomdv]);
        assert_eq!(s.seed_list(), vec![42, 7]);
        let FlowPlan::Explicit(f) = s.flow_plan().unwrap() else {
            panic!()
        };
        assert_eq!(f[0].rate, 4.0);
    }

    #[test]
    fn bad_flow_spec() {
        assert!(Scenario::from_json(r#"{"flows":"everyone"}"#).is_err());
        assert!(Scenario::from_json(r#"{"flows":"random:0"}"#).is_err());
        assert!(Scenario::from_json(r#"{"node_count":5,"flows":[{"source":0,"destination":9}]}"#)
            .is_err());
    }

    #[test]
    fn sim_config_carries_overrides() {
        let s = Scenario::from_json(r#"{"alpha":0.5,"hello_interval":2.0,"max_speed":0}"#).unwrap();
        let c = s.sim_config(40, Protocol::AomrLm, RunOptions::default()).unwrap();
        assert_eq!(c.nodes, 40);
        assert_eq!(c.protocol.alpha, 0.5);
        assert_eq!(c.protocol.hello_interval, 2.0);
        assert_eq!(c.mobility.max_speed, 0.0);
    }
}
