//! Browser bindings: an α curve, a route discovery snapshot and a short
//! AOMR-LM / AOMDV comparison. Every export returns a JSON string.

use aomr_core::energy::{alpha_lower_bound, classify_node, NodeClass};
use aomr_core::protocol::{Protocol, ProtocolEvent};
use aomr_core::sim::{EnergySample, RunOptions, SimConfig, Simulation};
use aomr_core::NodeId;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_NODES: usize = 200;
const MAX_DURATION: f64 = 600.0;

#[derive(Serialize)]
struct AlphaPoint {
    k: u32,
    alpha: f64,
}

#[derive(Serialize)]
struct NodeView {
    x: f64,
    y: f64,
    residual: f64,
    class: NodeClass,
}

#[derive(Serialize)]
struct Hop {
    from: NodeId,
    to: NodeId,
    reply: u32,
    class: NodeClass,
}

#[derive(Serialize)]
struct Snapshot {
    protocol: Protocol,
    width: f64,
    height: f64,
    range: f64,
    source: Option<NodeId>,
    destination: Option<NodeId>,
    nodes: Vec<NodeView>,
    hops: Vec<Hop>,
}

#[derive(Serialize)]
struct Arm {
    protocol: Protocol,
    samples: Vec<EnergySample>,
    mean_energy: Option<f64>,
    mean_delay: Option<f64>,
    delivery_ratio: f64,
    exhausted: usize,
}

fn check_size(nodes: usize, duration: f64) -> Result<(), String> {
    if !(2..=MAX_NODES).contains(&nodes) {
        return Err(format!("nodes must lie in 2..={MAX_NODES}"));
    }
    if !(duration > 0.0 && duration <= MAX_DURATION) {
        return Err(format!("duration must lie in (0, {MAX_DURATION}]"));
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

pub fn alpha_curve_json(t_net: f64, max_k: u32) -> Result<String, String> {
    if !(t_net > 0.0 && t_net < 1.0) {
        return Err("t_net must lie in (0, 1)".into());
    }
    if max_k == 0 || max_k > 1000 {
        return Err("max_k must lie in 1..=1000".into());
    }
    let pts: Vec<_> = (1..=max_k)
        .map(|k| AlphaPoint {
            k,
            alpha: alpha_lower_bound(t_net, k),
        })
        .collect();
    to_json(&pts)
}

/// First route discovery of a run, frozen once its replies have settled.
pub fn discovery_json(seed: u64, nodes: usize, protocol: &str) -> Result<String, String> {
    check_size(nodes, 3.0)?;
    let protocol: Protocol = protocol.parse().map_err(|e: aomr_core::Error| e.to_string())?;
    let mut cfg = SimConfig {
        nodes,
        duration: 3.0,
        ..Default::default()
    };
    cfg.protocol.protocol = protocol;
    cfg.options = RunOptions {
        record_events: true,
        ..Default::default()
    };
    let mut sim = Simulation::new(&cfg, seed).map_err(|e| e.to_string())?;
    sim.run_until(3.0);

    let world = sim.world();
    let now = sim.now();
    let n = sim.nodes().len();
    let mean = (0..n as NodeId).map(|i| world.residual(i)).sum::<f64>() / n as f64;
    let views = (0..n as NodeId)
        .map(|i| {
            let p = world.position(i, now);
            let residual = world.residual(i);
            NodeView {
                x: p.x,
                y: p.y,
                residual,
                class: classify_node(residual / mean, cfg.protocol.alpha),
            }
        })
        .collect();

    let flow = sim.flows().first();
    let mut first = None;
    let mut hops = Vec::new();
    for (_, _, ev) in sim.events() {
        if let ProtocolEvent::RrepSent {
            source,
            discovery,
            reply_id,
            from,
            to,
            path_class,
            ..
        } = ev
        {
            if flow.map_or(true, |f| f.source != *source) {
                continue;
            }
            if *first.get_or_insert(*discovery) != *discovery {
                continue;
            }
            hops.push(Hop {
                from: *from,
                to: *to,
                reply: *reply_id,
                class: *path_class,
            });
        }
    }

    to_json(&Snapshot {
        protocol,
        width: cfg.terrain.width,
        height: cfg.terrain.height,
        range: cfg.range,
        source: flow.map(|f| f.source),
        destination: flow.map(|f| f.destination),
        nodes: views,
        hops,
    })
}

/// Both protocols on the same seed, returning consumed-energy samples.
pub fn compare_json(seed: u64, nodes: usize, duration: f64) -> Result<String, String> {
    check_size(nodes, duration)?;
    let arms = [Protocol::AomrLm, Protocol::Aomdv]
        .into_iter()
        .map(|protocol| {
            let mut cfg = SimConfig {
                nodes,
                duration,
                ..Default::default()
            };
            cfg.protocol.protocol = protocol;
            let rep = Simulation::new(&cfg, seed)
                .and_then(Simulation::run)
                .map_err(|e| e.to_string())?;
            Ok(Arm {
                protocol,
                samples: rep.energy_samples,
                mean_energy: rep.summary.mean_energy,
                mean_delay: rep.summary.mean_delay,
                delivery_ratio: rep.summary.delivery_ratio,
                exhausted: rep.exhaustion.len(),
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    to_json(&arms)
}

#[wasm_bindgen]
pub fn alpha_curve(t_net: f64, max_k: u32) -> Result<String, JsValue> {
    alpha_curve_json(t_net, max_k).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn discovery(seed: u32, nodes: usize, protocol: &str) -> Result<String, JsValue> {
    discovery_json(seed as u64, nodes, protocol).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn compare(seed: u32, nodes: usize, duration: f64) -> Result<String, JsValue> {
    compare_json(seed as u64, nodes, duration).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_curve_is_increasing() {
        let v: serde_json::Value = serde_json::from_str(&alpha_curve_json(1e-3, 50).unwrap()).unwrap();
        let a: Vec<f64> = v
            .as_array()
            .unwrap()
            .iter()
            .map(|p| p["alpha"].as_f64().unwrap())
            .collect();
        assert_eq!(a.len(), 50);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!(alpha_curve_json(2.0, 5).is_err());
    }

    #[test]
    fn snapshot_has_every_node() {
        let v: serde_json::Value =
            serde_json::from_str(&discovery_json(7, 40, "aomr-lm").unwrap()).unwrap();
        assert_eq!(v["nodes"].as_array().unwrap().len(), 40);
        assert_eq!(v["protocol"], "aomr-lm");
        assert!(discovery_json(7, 1, "aomdv").is_err());
        assert!(discovery_json(7, 20, "dsr").is_err());
    }

    #[test]
    fn snapshot_shows_reply_hops() {
        let hops = (1..6u64)
            .map(|seed| {
                let v: serde_json::Value =
                    serde_json::from_str(&discovery_json(seed, 50, "aomr-lm").unwrap()).unwrap();
                v["hops"].as_array().unwrap().len()
            })
            .sum::<usize>();
        assert!(hops > 0);
    }

    #[test]
    fn compare_returns_two_arms() {
        let v: serde_json::Value = serde_json::from_str(&compare_json(3, 20, 10.0).unwrap()).unwrap();
        let arms = v.as_array().unwrap();
        assert_eq!(arms.len(), 2);
        assert!(arms.iter().all(|a| !a["samples"].as_array().unwrap().is_empty()));
    }
}
