//! Seed sweeps, protocol A/B runs and their CSV outputs.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use crate::energy::alpha_lower_bound;
use crate::protocol::Protocol;
use crate::scenario::Scenario;
use crate::sim::{RunOptions, RunReport, Simulation};
use crate::Error;

pub const SUMMARY_HEADER: [&str; 8] = [
    "seed",
    "protocol",
    "nodes",
    "lifetime_s",
    "censored",
    "mean_energy_J",
    "mean_delay_s",
    "delivery_ratio",
];

pub const CURVE_HEADER: [&str; 3] = ["x", "y", "series"];

/// Published α_min per K.
pub const PUBLISHED_ALPHA: [(u32, f64); 10] = [
    (10, 0.155),
    (20, 0.289),
    (30, 0.396),
    (40, 0.499),
    (50, 0.574),
    (60, 0.629),
    (70, 0.672),
    (80, 0.707),
    (90, 0.734),
    (100, 0.757),
];

pub const ALPHA_TOLERANCE: f64 = 0.002;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RunKey {
    pub nodes: usize,
    pub protocol: Protocol,
    pub seed: u64,
}

impl RunKey {
    pub fn dir_name(&self) -> String {
        format!("{}-n{}-seed{}", self.protocol, self.nodes, self.seed)
    }

    fn parse_dir_name(name: &str) -> Option<RunKey> {
        let mut parts = name.rsplitn(3, '-');
        let seed = parts.next()?.strip_prefix("seed")?.parse().ok()?;
        let nodes = parts.next()?.strip_prefix('n')?.parse().ok()?;
        let protocol = parts.next()?.parse().ok()?;
        Some(RunKey {
            nodes,
            protocol,
            seed,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub key: RunKey,
    pub outcome: Result<RunReport, String>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExperimentOptions {
    /// Worker threads; `None` uses every core.
    pub jobs: Option<usize>,
    pub run: RunOptions,
}

pub fn run_keys(scenario: &Scenario) -> Vec<RunKey> {
    let mut keys = Vec::new();
    for nodes in scenario.node_counts() {
        for protocol in scenario.protocols() {
            for seed in scenario.seed_list() {
                keys.push(RunKey {
                    nodes,
                    protocol,
                    seed,
                });
            }
        }
    }
    keys
}

pub fn run_one(scenario: &Scenario, key: RunKey, options: RunOptions) -> Result<RunReport, Error> {
    let cfg = scenario.sim_config(key.nodes, key.protocol, options)?;
    Simulation::new(&cfg, key.seed)?.run()
}

/// Run every (node count, protocol, seed) combination. A run that errors or
/// panics is recorded as failed; the others are unaffected.
pub fn run_experiment(scenario: &Scenario, options: ExperimentOptions) -> Result<Vec<RunRecord>, Error> {
    scenario.validate()?;
    let keys = run_keys(scenario);
    run_with(&keys, options.jobs, |key| run_one(scenario, *key, options.run))
}

pub fn run_with<F>(keys: &[RunKey], jobs: Option<usize>, runner: F) -> Result<Vec<RunRecord>, Error>
where
    F: Fn(&RunKey) -> Result<RunReport, Error> + Sync,
{
    let one = |key: &RunKey| {
        let outcome = match catch_unwind(AssertUnwindSafe(|| runner(key))) {
            Ok(Ok(report)) => Ok(report),
            Ok(Err(e)) => Err(e.to_string()),
            Err(panic) => Err(panic_message(panic.as_ref())),
        };
        RunRecord { key: *key, outcome }
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.unwrap_or(0))
            .build()
            .map_err(|e| Error::invalid("jobs", e.to_string()))?;
        Ok(pool.install(|| keys.par_iter().map(one).collect()))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
        Ok(keys.iter().map(one).collect())
    }
}

fn panic_message(panic: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = panic.downcast_ref::<&str>() {
        format!("panic: {s}")
    } else if let Some(s) = panic.downcast_ref::<String>() {
        format!("panic: {s}")
    } else {
        "panic".to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn summary_fields(r: &RunRecord) -> [String; 8] {
    let k = r.key;
    match &r.outcome {
        Ok(rep) => {
            let s = &rep.summary;
            [
                k.seed.to_string(),
                k.protocol.to_string(),
                k.nodes.to_string(),
                s.lifetime.unwrap_or(rep.duration).to_string(),
                s.lifetime.is_none().to_string(),
                opt(s.mean_energy),
                opt(s.mean_delay),
                s.delivery_ratio.to_string(),
            ]
        }
        Err(_) => [
            k.seed.to_string(),
            k.protocol.to_string(),
            k.nodes.to_string(),
            String::new(),
            "failed".into(),
            String::new(),
            String::new(),
            String::new(),
        ],
    }
}

fn csv_string<I, R>(header: &[&str], rows: I) -> Result<String, Error>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn summary_csv(records: &[RunRecord]) -> Result<String, Error> {
    csv_string(&SUMMARY_HEADER, records.iter().map(summary_fields))
}

/// One parsed row of a summary file.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub seed: u64,
    pub protocol: Protocol,
    pub nodes: usize,
    pub failed: bool,
    pub lifetime: Option<f64>,
    pub censored: bool,
    pub mean_energy: Option<f64>,
    pub mean_delay: Option<f64>,
    pub delivery_ratio: Option<f64>,
}

pub fn parse_summary(text: &str) -> Result<Vec<SummaryRow>, Error> {
    let mut rows = Vec::new();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let num = |s: &str| -> Result<Option<f64>, Error> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse()
                .map(Some)
                .map_err(|_| Error::invalid("summary", format!("bad number `{s}`")))
        }
    };
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        rows.push(SummaryRow {
            seed: field(0)
                .parse()
                .map_err(|_| Error::invalid("summary", "bad seed"))?,
            protocol: field(1).parse()?,
            nodes: field(2)
                .parse()
                .map_err(|_| Error::invalid("summary", "bad node count"))?,
            failed: field(4) == "failed",
            lifetime: num(field(3))?,
            censored: field(4) == "true",
            mean_energy: num(field(5))?,
            mean_delay: num(field(6))?,
            delivery_ratio: num(field(7))?,
        });
    }
    Ok(rows)
}

/// Mean and sample standard deviation; `None` for an empty input.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((mean, std))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub protocol: Protocol,
    pub nodes: usize,
    pub runs: usize,
    pub failed: usize,
    pub censored: usize,
    pub lifetime: Option<(f64, f64)>,
    pub energy: Option<(f64, f64)>,
    pub delay: Option<(f64, f64)>,
    pub delivery_ratio: Option<(f64, f64)>,
}

pub const AGGREGATE_HEADER: [&str; 13] = [
    "protocol",
    "nodes",
    "runs",
    "failed",
    "censored",
    "lifetime_mean",
    "lifetime_std",
    "energy_mean",
    "energy_std",
    "delay_mean",
    "delay_std",
    "ratio_mean",
    "ratio_std",
];

/// Per (protocol, node count) means and deviations over successful runs.
pub fn aggregate(rows: &[SummaryRow]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(Protocol, usize), Vec<&SummaryRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.protocol, r.nodes)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((protocol, nodes), rs)| {
            let ok: Vec<&&SummaryRow> = rs.iter().filter(|r| !r.failed).collect();
            let col = |f: fn(&SummaryRow) -> Option<f64>| {
                mean_std(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
            };
            Aggregate {
                protocol,
                nodes,
                runs: rs.len(),
                failed: rs.len() - ok.len(),
                censored: ok.iter().filter(|r| r.censored).count(),
                lifetime: col(|r| r.lifetime),
                energy: col(|r| r.mean_energy),
                delay: col(|r| r.mean_delay),
                delivery_ratio: col(|r| r.delivery_ratio),
            }
        })
        .collect()
}

pub fn aggregate_csv(aggregates: &[Aggregate]) -> Result<String, Error> {
    let pair = |p: Option<(f64, f64)>| match p {
        Some((m, s)) => [m.to_string(), s.to_string()],
        None => [String::new(), String::new()],
    };
    csv_string(
        &AGGREGATE_HEADER,
        aggregates.iter().map(|a| {
            let mut row = vec![
                a.protocol.to_string(),
                a.nodes.to_string(),
                a.runs.to_string(),
                a.failed.to_string(),
                a.censored.to_string(),
            ];
            for p in [a.lifetime, a.energy, a.delay, a.delivery_ratio] {
                row.extend(pair(p));
            }
            row
        }),
    )
}

/// Write summary, aggregate and per-run trace files under `out`.
pub fn write_outputs(out: &Path, scenario: &Scenario, records: &[RunRecord]) -> Result<(), Error> {
    fs::create_dir_all(out)?;
    let summary = summary_csv(records)?;
    fs::write(out.join("summary.csv"), &summary)?;
    let aggregates = aggregate(&parse_summary(&summary)?);
    fs::write(out.join("aggregate.csv"), aggregate_csv(&aggregates)?)?;
    fs::write(out.join("scenario.json"), scenario.to_json() + "\n")?;
    for r in records {
        let Ok(rep) = &r.outcome else { continue };
        let dir = out.join("runs").join(r.key.dir_name());
        fs::create_dir_all(&dir)?;
        fs::write(
            dir.join("exhaustion.csv"),
            csv_string(
                &["node", "t"],
                rep.exhaustion.iter().map(|(n, t)| [n.to_string(), t.to_string()]),
            )?,
        )?;
        fs::write(
            dir.join("energy.csv"),
            csv_string(
                &["t", "consumed_J", "exhausted"],
                rep.energy_samples.iter().map(|s| {
                    [s.t.to_string(), s.consumed.to_string(), s.exhausted.to_string()]
                }),
            )?,
        )?;
        if let Some(trace) = &rep.message_trace {
            fs::write(dir.join("messages.log"), trace)?;
        }
        if let Some(trace) = &rep.position_trace {
            fs::write(dir.join("positions.csv"), trace)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaRow {
    pub k: u32,
    pub alpha_min: f64,
    pub published: Option<f64>,
    pub divergent: bool,
}

pub fn default_k_list() -> Vec<u32> {
    PUBLISHED_ALPHA.iter().map(|(k, _)| *k).collect()
}

pub fn alpha_table(t_net: f64, ks: &[u32]) -> Result<Vec<AlphaRow>, Error> {
    if !(t_net > 0.0 && t_net < 1.0) {
        return Err(Error::invalid("t_net", "must lie in (0, 1)"));
    }
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::invalid("k", "need positive integers"));
    }
    Ok(ks
        .iter()
        .map(|&k| {
            let alpha_min = alpha_lower_bound(t_net, k);
            let published = PUBLISHED_ALPHA
                .iter()
                .find(|(pk, _)| *pk == k)
                .map(|(_, a)| *a);
            AlphaRow {
                k,
                alpha_min,
                published,
                divergent: published.is_some_and(|p| (alpha_min - p).abs() > ALPHA_TOLERANCE),
            }
        })
        .collect())
}

pub fn alpha_table_csv(rows: &[AlphaRow]) -> Result<String, Error> {
    csv_string(
        &["k", "alpha_min", "published", "divergent"],
        rows.iter().map(|r| {
            [
                r.k.to_string(),
                format!("{:.6}", r.alpha_min),
                r.published.map(|p| p.to_string()).unwrap_or_default(),
                r.divergent.to_string(),
            ]
        }),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
    pub series: String,
}

pub fn curve_csv(points: &[CurvePoint]) -> Result<String, Error> {
    csv_string(
        &CURVE_HEADER,
        points
            .iter()
            .map(|p| [p.x.to_string(), p.y.to_string(), p.series.clone()]),
    )
}

/// Curve files written by [`emit_curves`].
pub const CURVE_FILES: [&str; 4] = [
    "lifetime_curve.csv",
    "energy_curve.csv",
    "delay_vs_nodes.csv",
    "alpha_curve.csv",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Curves {
    /// Exhausted nodes over time.
    pub lifetime: Vec<CurvePoint>,
    /// Network-wide consumed energy over time.
    pub energy: Vec<CurvePoint>,
    pub delay_vs_nodes: Vec<CurvePoint>,
    pub alpha: Vec<CurvePoint>,
}

struct Sampled {
    t: Vec<f64>,
    consumed: Vec<f64>,
    exhausted: Vec<f64>,
}

fn read_energy(path: &Path) -> Result<Sampled, Error> {
    let mut s = Sampled {
        t: Vec::new(),
        consumed: Vec::new(),
        exhausted: Vec::new(),
    };
    let mut rdr = csv::Reader::from_path(path)?;
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64, Error> {
            rec.get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::invalid("energy.csv", format!("bad row in {}", path.display())))
        };
        s.t.push(num(0)?);
        s.consumed.push(num(1)?);
        s.exhausted.push(num(2)?);
    }
    Ok(s)
}

/// Mean across runs on the shared time grid of the first run.
fn mean_series(runs: &[&Sampled], pick: fn(&Sampled) -> &Vec<f64>, series: &str) -> Vec<CurvePoint> {
    let Some(len) = runs.iter().map(|r| r.t.len()).min() else {
        return Vec::new();
    };
    (0..len)
        .map(|i| CurvePoint {
            x: runs[0].t[i],
            y: runs.iter().map(|r| pick(r)[i]).sum::<f64>() / runs.len() as f64,
            series: series.to_string(),
        })
        .collect()
}

pub fn alpha_curve(t_net: f64, max_k: u32) -> Vec<CurvePoint> {
    (1..=max_k)
        .map(|k| CurvePoint {
            x: k as f64,
            y: alpha_lower_bound(t_net, k),
            series: "alpha_min".into(),
        })
        .collect()
}

/// Build plot-ready series from an output directory of [`write_outputs`].
pub fn collect_curves(trace_dir: &Path, t_net: f64) -> Result<Curves, Error> {
    let mut runs: BTreeMap<RunKey, Sampled> = BTreeMap::new();
    let runs_dir = trace_dir.join("runs");
    if runs_dir.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(&runs_dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        entries.sort();
        for dir in entries {
            let Some(key) = dir
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(RunKey::parse_dir_name)
            else {
                continue;
            };
            let energy = dir.join("energy.csv");
            if energy.is_file() {
                runs.insert(key, read_energy(&energy)?);
            }
        }
    }
    let node_counts: std::collections::BTreeSet<usize> = runs.keys().map(|k| k.nodes).collect();
    let mut groups: BTreeMap<(Protocol, usize), Vec<&Sampled>> = BTreeMap::new();
    for (k, s) in &runs {
        groups.entry((k.protocol, k.nodes)).or_default().push(s);
    }
    let mut curves = Curves::default();
    for ((protocol, nodes), group) in &groups {
        let name = if node_counts.len() > 1 {
            format!("{protocol}/n{nodes}")
        } else {
            protocol.to_string()
        };
        curves
            .lifetime
            .extend(mean_series(group, |s| &s.exhausted, &name));
        curves
            .energy
            .extend(mean_series(group, |s| &s.consumed, &name));
    }

    let summary = trace_dir.join("summary.csv");
    if summary.is_file() {
        let rows = parse_summary(&fs::read_to_string(summary)?)?;
        for a in aggregate(&rows) {
            if let Some((mean, _)) = a.delay {
                curves.delay_vs_nodes.push(CurvePoint {
                    x: a.nodes as f64,
                    y: mean,
                    series: a.protocol.to_string(),
                });
            }
        }
        curves.delay_vs_nodes.sort_by(|a, b| {
            a.series
                .cmp(&b.series)
                .then(a.x.total_cmp(&b.x))
        });
    }
    curves.alpha = alpha_curve(t_net, 100);
    Ok(curves)
}

/// Write the four curve files into `out`.
pub fn emit_curves(trace_dir: &Path, out: &Path, t_net: f64) -> Result<Curves, Error> {
    let curves = collect_curves(trace_dir, t_net)?;
    fs::create_dir_all(out)?;
    for (name, points) in CURVE_FILES.iter().zip([
        &curves.lifetime,
        &curves.energy,
        &curves.delay_vs_nodes,
        &curves.alpha,
    ]) {
        fs::write(out.join(name), curve_csv(points)?)?;
    }
    Ok(curves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::DEFAULT_T_NET;

    #[test]
    fn alpha_table_matches_published_from_k30() {
        let rows = alpha_table(DEFAULT_T_NET, &default_k_list()).unwrap();
        for r in &rows {
            assert_eq!(r.divergent, r.k <= 20, "K={} alpha={}", r.k, r.alpha_min);
        }
        assert!((rows[4].alpha_min - 0.574).abs() <= ALPHA_TOLERANCE);
        assert!((rows[8].alpha_min - 0.735).abs() <= ALPHA_TOLERANCE);
    }

    #[test]
    fn alpha_k_one_is_t_net() {
        let r = alpha_table(0.3, &[1]).unwrap();
        assert_eq!(r[0].alpha_min, 0.3);
        assert!(alpha_table(1.5, &[1]).is_err());
        assert!(alpha_table(0.5, &[]).is_err());
        assert!(alpha_table(0.5, &[0]).is_err());
    }

    #[test]
    fn dir_names_round_trip() {
        let k = RunKey {
            nodes: 50,
            protocol: Protocol::AomrLm,
            seed: 42,
        };
        assert_eq!(k.dir_name(), "aomr-lm-n50-seed42");
        assert_eq!(RunKey::parse_dir_name(&k.dir_name()), Some(k));
        assert_eq!(RunKey::parse_dir_name("junk"), None);
    }

    #[test]
    fn mean_std_small_cases() {
        assert_eq!(mean_std(&[]), None);
        assert_eq!(mean_std(&[2.0]), Some((2.0, 0.0)));
        let (m, s) = mean_std(&[1.0, 3.0]).unwrap();
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn failed_run_row() {
        let rec = RunRecord {
            key: RunKey {
                nodes: 30,
                protocol: Protocol::Aomdv,
                seed: 3,
            },
            outcome: Err("panic".into()),
        };
        let csv = summary_csv(&[rec]).unwrap();
        assert_eq!(csv.lines().nth(1), Some("3,aomdv,30,,failed,,,"));
        let rows = parse_summary(&csv).unwrap();
        assert!(rows[0].failed);
        let agg = aggregate(&rows);
        assert_eq!((agg[0].runs, agg[0].failed), (1, 1));
        assert_eq!(agg[0].energy, None);
    }

    #[test]
    fn empty_curve_is_header_only() {
        assert_eq!(curve_csv(&[]).unwrap(), "x,y,series\n");
    }
}
