//! SFC request generation: DAG-structured service chains with lifetimes,
//! latency budgets and time-varying multidimensional demands, drawn either
//! from ingested resource-usage traces or from a synthetic generator.

use std::io::Read;
use std::path::Path as FsPath;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace read error: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace parse error: {0}")]
    Csv(#[from] csv::Error),
    #[error("trace file has no header row")]
    EmptyFile,
    #[error("required column matching \"{0}\" not found in trace header")]
    MissingColumn(&'static str),
    #[error("all {0} data rows were skipped as malformed")]
    AllRowsSkipped(usize),
}

/// Unit-normalized usage samples from one trace file: CPU in GHz, memory in
/// GB, network transmit in MBps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceSeries<T = f64> {
    pub cpu_ghz: Vec<T>,
    pub mem_gb: Vec<T>,
    pub net_mbps: Vec<T>,
    /// Rows dropped because a required field failed to parse or was negative.
    pub skipped_rows: usize,
}

impl<T: Scalar> TraceSeries<T> {
    pub fn len(&self) -> usize {
        self.cpu_ghz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cpu_ghz.is_empty()
    }
}

/// Parses a delimiter-separated trace file with a header row. Columns are
/// matched by case-insensitive substring, first match wins: "cpu usage"
/// (MHz), "memory usage" (KB), "network transmitted" (KB/s). The delimiter is
/// sniffed from the header among `;`, `,` and tab.
pub fn ingest_trace<T: Scalar>(source: impl Read) -> Result<TraceSeries<T>, TraceError> {
    let mut text = String::new();
    let mut source = source;
    source.read_to_string(&mut text)?;
    let header_line = text.lines().next().ok_or(TraceError::EmptyFile)?;
    let delimiter = [b';', b',', b'\t']
        .into_iter()
        .max_by_key(|&d| header_line.matches(d as char).count())
        .unwrap();

    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let find = |needle: &'static str| -> Result<usize, TraceError> {
        headers
            .iter()
            .position(|h| h.to_lowercase().contains(needle))
            .ok_or(TraceError::MissingColumn(needle))
    };
    let cpu_col = find("cpu usage")?;
    let mem_col = find("memory usage")?;
    let net_col = find("network transmitted")?;

    let mut series = TraceSeries {
        cpu_ghz: Vec::new(),
        mem_gb: Vec::new(),
        net_mbps: Vec::new(),
        skipped_rows: 0,
    };
    let mut total_rows = 0usize;
    for record in reader.records() {
        let record = record?;
        total_rows += 1;
        let parsed = (
            record.get(cpu_col).and_then(|s| s.parse::<f64>().ok()),
            record.get(mem_col).and_then(|s| s.parse::<f64>().ok()),
            record.get(net_col).and_then(|s| s.parse::<f64>().ok()),
        );
        match parsed {
            (Some(cpu), Some(mem), Some(net)) if cpu >= 0.0 && mem >= 0.0 && net >= 0.0 => {
                series.cpu_ghz.push(T::from_f64_lossy(cpu / 1_000.0));
                series.mem_gb.push(T::from_f64_lossy(mem / 1_000_000.0));
                series.net_mbps.push(T::from_f64_lossy(net / 1_000.0));
            }
            _ => series.skipped_rows += 1,
        }
    }
    if total_rows == 0 {
        return Err(TraceError::EmptyFile);
    }
    if series.is_empty() {
        return Err(TraceError::AllRowsSkipped(series.skipped_rows));
    }
    Ok(series)
}

/// Convenience wrapper reading from a filesystem path.
pub fn ingest_trace_file<T: Scalar>(path: impl AsRef<FsPath>) -> Result<TraceSeries<T>, TraceError> {
    ingest_trace(std::fs::File::open(path)?)
}

/// Per-slot demand samples for one VNF or VNF link. Slots beyond the series
/// length wrap cyclically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandTrace<T = f64> {
    /// `samples[slot][dim]`, nonnegative.
    pub samples: Vec<Vec<T>>,
}

impl<T: Scalar> DemandTrace<T> {
    pub fn constant(value: Vec<T>) -> Self {
        DemandTrace { samples: vec![value] }
    }

    /// Demand vector at slot offset `offset` from the owner's arrival.
    pub fn at(&self, offset: usize) -> &[T] {
        &self.samples[offset % self.samples.len()]
    }

    pub fn dims(&self) -> usize {
        self.samples[0].len()
    }
}

/// One virtualized network function of an SFC.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vnf<T = f64> {
    /// Index within the owning SFC.
    pub id: usize,
    pub demand: DemandTrace<T>,
    pub processing_delay_ms: T,
}

/// A directed logical edge between two VNFs of the same SFC.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VnfLink<T = f64> {
    /// Index within the owning SFC.
    pub id: usize,
    pub source: usize,
    pub dest: usize,
    pub demand: DemandTrace<T>,
    pub deadline_ms: T,
}

/// A service function chain request: a DAG of VNFs with a lifetime and a
/// latency budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SfcRequest<T = f64> {
    pub id: u64,
    pub arrival_slot: usize,
    pub lifetime_slots: usize,
    pub latency_limit_ms: T,
    pub vnfs: Vec<Vnf<T>>,
    pub vnf_links: Vec<VnfLink<T>>,
}

impl<T: Scalar> SfcRequest<T> {
    /// First slot at which the SFC is no longer active.
    pub fn expiry_slot(&self) -> usize {
        self.arrival_slot + self.lifetime_slots
    }

    /// Links entering `vnf`.
    pub fn upstream_links(&self, vnf: usize) -> impl Iterator<Item = &VnfLink<T>> {
        self.vnf_links.iter().filter(move |l| l.dest == vnf)
    }

    /// Links leaving `vnf`.
    pub fn downstream_links(&self, vnf: usize) -> impl Iterator<Item = &VnfLink<T>> {
        self.vnf_links.iter().filter(move |l| l.source == vnf)
    }

    /// True when the link set forms a DAG over the VNFs (edges here always go
    /// from a lower to a higher VNF index by construction, but imported
    /// requests are re-checked).
    pub fn is_dag(&self) -> bool {
        // Kahn's algorithm.
        let n = self.vnfs.len();
        let mut indeg = vec![0usize; n];
        for l in &self.vnf_links {
            if l.source == l.dest || l.source >= n || l.dest >= n {
                return false;
            }
            indeg[l.dest] += 1;
        }
        let mut queue: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop() {
            seen += 1;
            for l in self.vnf_links.iter().filter(|l| l.source == v) {
                indeg[l.dest] -= 1;
                if indeg[l.dest] == 0 {
                    queue.push(l.dest);
                }
            }
        }
        seen == n
    }
}

/// How SFC topologies are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SfcShape {
    /// Linear chain v0 -> v1 -> ... -> v(k-1).
    Chain,
    /// Each non-root VNF attaches to a uniformly chosen earlier VNF.
    Dag,
}

/// Where demand samples come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemandMode {
    Synthetic,
    Trace,
}

/// Workload generator configuration. Defaults follow the simulation setup:
/// chains of 2..=5 VNFs, lifetime 1..=100 slots, latency budget 20..=50 ms,
/// processing delay 1..=5 ms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkloadConfig<T = f64> {
    pub chain_len_min: usize,
    pub chain_len_max: usize,
    pub lifetime_min: usize,
    pub lifetime_max: usize,
    pub latency_min_ms: T,
    pub latency_max_ms: T,
    pub proc_delay_min_ms: T,
    pub proc_delay_max_ms: T,
    pub shape: SfcShape,
    pub demand_mode: DemandMode,
    /// Synthetic demand amplitude ranges per dimension.
    pub cpu_amplitude: (T, T),
    pub mem_amplitude: (T, T),
    pub bw_amplitude: (T, T),
    /// Sinusoid period range in slots for synthetic demands.
    pub period_slots: (usize, usize),
}

impl<T: Scalar> Default for WorkloadConfig<T> {
    fn default() -> Self {
        let t = T::from_f64_lossy;
        WorkloadConfig {
            chain_len_min: 2,
            chain_len_max: 5,
            lifetime_min: 1,
            lifetime_max: 100,
            latency_min_ms: t(20.0),
            latency_max_ms: t(50.0),
            proc_delay_min_ms: t(1.0),
            proc_delay_max_ms: t(5.0),
            shape: SfcShape::Chain,
            demand_mode: DemandMode::Synthetic,
            cpu_amplitude: (t(0.5), t(4.0)),
            mem_amplitude: (t(0.5), t(8.0)),
            bw_amplitude: (t(0.05), t(0.5)),
            period_slots: (20, 100),
        }
    }
}

/// Draws SFC requests deterministically from a seeded RNG. Trace-backed
/// demands sample a random contiguous window of a randomly chosen trace.
pub struct SfcGenerator<'a, T, R> {
    config: &'a WorkloadConfig<T>,
    traces: &'a [TraceSeries<T>],
    rng: R,
    next_id: u64,
}

impl<'a, T: Scalar, R: Rng> SfcGenerator<'a, T, R> {
    /// `traces` must be nonempty when `config.demand_mode` is `Trace`.
    pub fn new(config: &'a WorkloadConfig<T>, traces: &'a [TraceSeries<T>], rng: R) -> Self {
        if config.demand_mode == DemandMode::Trace {
            assert!(!traces.is_empty(), "trace demand mode requires at least one trace");
        }
        SfcGenerator { config, traces, rng, next_id: 0 }
    }

    fn range(&mut self, lo: T, hi: T) -> T {
        let x = self.rng.gen_range(0.0..=1.0f64);
        lo + (hi - lo) * T::from_f64_lossy(x)
    }

    /// Synthetic per-slot series: amplitude-scaled sinusoid plus uniform
    /// noise, strictly inside `(0, amplitude]`.
    fn synthetic_series(&mut self, amplitude: T, len: usize) -> Vec<T> {
        let period = self.rng.gen_range(self.config.period_slots.0..=self.config.period_slots.1);
        let phase = self.rng.gen_range(0.0..period as f64);
        let t = T::from_f64_lossy;
        (0..len)
            .map(|slot| {
                let angle = 2.0 * std::f64::consts::PI * (slot as f64 + phase) / period as f64;
                let noise = self.rng.gen_range(0.0..=1.0f64);
                amplitude * (t(0.5) + t(0.4) * t(angle.sin()) + t(0.1) * t(noise))
            })
            .collect()
    }

    /// A contiguous cyclic window of a randomly chosen trace column set.
    fn trace_window(&mut self, len: usize) -> (Vec<T>, Vec<T>, Vec<T>) {
        let trace = &self.traces[self.rng.gen_range(0..self.traces.len())];
        let start = self.rng.gen_range(0..trace.len());
        let pick = |col: &[T]| -> Vec<T> {
            (0..len).map(|i| col[(start + i) % col.len()]).collect()
        };
        (pick(&trace.cpu_ghz), pick(&trace.mem_gb), pick(&trace.net_mbps))
    }

    /// Generates the next SFC arriving at slot `t`.
    pub fn generate(&mut self, t: usize) -> SfcRequest<T> {
        let cfg = self.config;
        let n_vnfs = self.rng.gen_range(cfg.chain_len_min..=cfg.chain_len_max);
        let lifetime = self.rng.gen_range(cfg.lifetime_min..=cfg.lifetime_max);
        let latency = self.range(cfg.latency_min_ms, cfg.latency_max_ms);

        let mut vnfs = Vec::with_capacity(n_vnfs);
        for id in 0..n_vnfs {
            let proc_delay = self.range(cfg.proc_delay_min_ms, cfg.proc_delay_max_ms);
            let demand = match cfg.demand_mode {
                DemandMode::Synthetic => {
                    let a_cpu = self.range(cfg.cpu_amplitude.0, cfg.cpu_amplitude.1);
                    let a_mem = self.range(cfg.mem_amplitude.0, cfg.mem_amplitude.1);
                    let cpu = self.synthetic_series(a_cpu, lifetime);
                    let mem = self.synthetic_series(a_mem, lifetime);
                    DemandTrace {
                        samples: cpu.into_iter().zip(mem).map(|(c, m)| vec![c, m]).collect(),
                    }
                }
                DemandMode::Trace => {
                    let (cpu, mem, _) = self.trace_window(lifetime);
                    DemandTrace {
                        samples: cpu.into_iter().zip(mem).map(|(c, m)| vec![c, m]).collect(),
                    }
                }
            };
            vnfs.push(Vnf { id, demand, processing_delay_ms: proc_delay });
        }

        let mut vnf_links = Vec::with_capacity(n_vnfs.saturating_sub(1));
        for dest in 1..n_vnfs {
            let source = match cfg.shape {
                SfcShape::Chain => dest - 1,
                SfcShape::Dag => self.rng.gen_range(0..dest),
            };
            let demand = match cfg.demand_mode {
                DemandMode::Synthetic => {
                    let a_bw = self.range(cfg.bw_amplitude.0, cfg.bw_amplitude.1);
                    DemandTrace {
                        samples: self.synthetic_series(a_bw, lifetime).into_iter().map(|b| vec![b]).collect(),
                    }
                }
                DemandMode::Trace => {
                    let (_, _, net) = self.trace_window(lifetime);
                    DemandTrace { samples: net.into_iter().map(|b| vec![b]).collect() }
                }
            };
            vnf_links.push(VnfLink {
                id: dest - 1,
                source,
                dest,
                demand,
                deadline_ms: latency,
            });
        }

        let id = self.next_id;
        self.next_id += 1;
        SfcRequest {
            id,
            arrival_slot: t,
            lifetime_slots: lifetime,
            latency_limit_ms: latency,
            vnfs,
            vnf_links,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const TRACE: &str = "Timestamp [ms];CPU cores;CPU usage [MHZ];CPU usage [%];Memory usage [KB];Network transmitted throughput [KB/s]\n\
        1;2;1000;10;2000000;100\n\
        2;2;2000;20;2000000;200\n\
        3;2;1500;15;2000000;150\n";

    #[test]
    fn ingest_converts_units() {
        let s: TraceSeries<f64> = ingest_trace(TRACE.as_bytes()).unwrap();
        assert_eq!(s.cpu_ghz, vec![1.0, 2.0, 1.5]);
        assert_eq!(s.mem_gb, vec![2.0, 2.0, 2.0]);
        assert_eq!(s.net_mbps, vec![0.1, 0.2, 0.15]);
        assert_eq!(s.skipped_rows, 0);
    }

    #[test]
    fn ingest_missing_column_is_named() {
        let text = "Timestamp;CPU usage [MHZ];Network transmitted [KB/s]\n1;100;10\n";
        let err = ingest_trace::<f64>(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("memory usage"));
    }

    #[test]
    fn ingest_skips_malformed_rows() {
        let mut text = String::from("CPU usage [MHZ];Memory usage [KB];Network transmitted [KB/s]\n");
        for i in 0..10 {
            if i == 4 {
                text.push_str("oops;1;1\n");
            } else {
                text.push_str("1000;1000;1\n");
            }
        }
        let s: TraceSeries<f64> = ingest_trace(text.as_bytes()).unwrap();
        assert_eq!(s.len(), 9);
        assert_eq!(s.skipped_rows, 1);
    }

    #[test]
    fn ingest_rejects_empty_and_all_skipped() {
        let err = ingest_trace::<f64>("".as_bytes()).unwrap_err();
        assert!(matches!(err, TraceError::EmptyFile));
        let text = "CPU usage [MHZ];Memory usage [KB];Network transmitted [KB/s]\nx;y;z\n";
        let err = ingest_trace::<f64>(text.as_bytes()).unwrap_err();
        assert!(matches!(err, TraceError::AllRowsSkipped(1)));
    }

    #[test]
    fn demand_trace_wraps() {
        let d = DemandTrace { samples: vec![vec![1.0], vec![2.0], vec![3.0]] };
        assert_eq!(d.at(0), &[1.0]);
        assert_eq!(d.at(1), &[2.0]);
        assert_eq!(d.at(2), &[3.0]);
        assert_eq!(d.at(3), &[1.0]);
        let c = DemandTrace::constant(vec![7.0]);
        for t in 0..10 {
            assert_eq!(c.at(t), &[7.0]);
        }
    }

    fn gen_with_seed(seed: u64) -> Vec<SfcRequest<f64>> {
        let cfg = WorkloadConfig::default();
        let mut g = SfcGenerator::new(&cfg, &[], ChaCha8Rng::seed_from_u64(seed));
        (0..5).map(|t| g.generate(t)).collect()
    }

    #[test]
    fn generator_is_deterministic() {
        let a = gen_with_seed(7);
        let b = gen_with_seed(7);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.lifetime_slots, y.lifetime_slots);
            assert_eq!(x.latency_limit_ms, y.latency_limit_ms);
            assert_eq!(x.vnfs.len(), y.vnfs.len());
            for (vx, vy) in x.vnfs.iter().zip(&y.vnfs) {
                assert_eq!(vx.demand, vy.demand);
            }
        }
    }

    #[test]
    fn fixed_chain_length_three() {
        let cfg: WorkloadConfig<f64> = WorkloadConfig { chain_len_min: 3, chain_len_max: 3, ..Default::default() };
        let mut g = SfcGenerator::new(&cfg, &[], ChaCha8Rng::seed_from_u64(1));
        let sfc = g.generate(0);
        assert_eq!(sfc.vnfs.len(), 3);
        assert_eq!(sfc.vnf_links.len(), 2);
        assert!(sfc.is_dag());
        assert_eq!(sfc.vnf_links[0].source, 0);
        assert_eq!(sfc.vnf_links[0].dest, 1);
    }

    #[test]
    fn default_ranges_hold_over_many_draws() {
        let cfg = WorkloadConfig::default();
        let mut g = SfcGenerator::new(&cfg, &[], ChaCha8Rng::seed_from_u64(42));
        for t in 0..1000 {
            let sfc = g.generate(t);
            assert!((20.0..=50.0).contains(&sfc.latency_limit_ms));
            assert!((1..=100).contains(&sfc.lifetime_slots));
            assert!(sfc.is_dag());
            for v in &sfc.vnfs {
                assert!((1.0..=5.0).contains(&v.processing_delay_ms));
                for s in &v.demand.samples {
                    assert!(s.iter().all(|&x| x >= 0.0));
                }
            }
            for l in &sfc.vnf_links {
                assert!(l.source != l.dest);
                // Deadline always admits the cheapest possible route.
                assert!(l.deadline_ms >= 5.0 + 1.0);
            }
        }
    }

    #[test]
    fn dag_mode_attaches_to_earlier_vnfs() {
        let cfg: WorkloadConfig<f64> = WorkloadConfig {
            shape: SfcShape::Dag,
            chain_len_min: 5,
            chain_len_max: 5,
            ..Default::default()
        };
        let mut g = SfcGenerator::new(&cfg, &[], ChaCha8Rng::seed_from_u64(3));
        for t in 0..50 {
            let sfc = g.generate(t);
            assert!(sfc.is_dag());
            for l in &sfc.vnf_links {
                assert!(l.source < l.dest);
            }
        }
    }

    #[test]
    fn trace_mode_samples_windows() {
        let trace: TraceSeries<f64> = ingest_trace(TRACE.as_bytes()).unwrap();
        let cfg = WorkloadConfig { demand_mode: DemandMode::Trace, ..Default::default() };
        let traces = vec![trace];
        let mut g = SfcGenerator::new(&cfg, &traces, ChaCha8Rng::seed_from_u64(9));
        let sfc = g.generate(0);
        for v in &sfc.vnfs {
            for s in &v.demand.samples {
                assert!(traces[0].cpu_ghz.contains(&s[0]));
                assert!(traces[0].mem_gb.contains(&s[1]));
            }
        }
    }
}
