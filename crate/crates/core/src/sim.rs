//! Slot-by-slot simulation driver: arrivals, demand updates, expiries,
//! overload detection, migration rounds and metric logging — plus the
//! labeled-dataset generator, parameter sweeps and the decision-runtime
//! benchmark.
//!
//! Phase order within one slot is fixed: (1) advance demands, (2) release
//! expired SFCs, (3) draw and deploy arrivals, (4) detect overloads, (5) run
//! the migration round if any, (6) re-detect and log flags, (7) compute and
//! log the fragmentation and load metrics. Logged overload flags therefore
//! reflect the post-migration state.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::frag::{
    fragmentation_report, load_metric_suite, FragParams, LoadMetrics,
};
use crate::mhgat::{
    build_edge_features, build_node_features, load_checkpoint, CheckpointError, DatasetRecord,
    MhgatModel,
};
use crate::migration::{
    greedy_destination, mhgat_destination, oracle_destination, run_migration_round, select_vnf,
    Policy, PolicyKind, RoundParams,
};
use crate::scalar::Scalar;
use crate::state::{deploy_sfc, DeployOutcome, NetworkState};
use crate::topology::{KhopCache, Network, NodeId, PathTable, TopologyError};
use crate::workload::{
    ingest_trace_file, SfcGenerator, TraceError, TraceSeries, WorkloadConfig,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Full simulation configuration with the evaluation defaults: arrival rate
/// 10 SFCs per slot, overload threshold 0.5, objective weight 0.9, reserved
/// migration bandwidth 1 MBps, receptive field 2 with ring ratio 0.5.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig<T = f64> {
    /// `"nsfnet"`, `"complete-<n>"` or a path to a topology document.
    pub topology: String,
    pub workload: WorkloadConfig<T>,
    /// Mean SFC arrivals per slot (Poisson).
    pub arrival_rate: f64,
    pub seed: u64,
    pub horizon: usize,
    /// Slots discarded from post-warmup statistics (ignored when it would
    /// swallow the whole horizon).
    pub warmup: usize,
    pub rho: T,
    /// Objective weight on fragmentation versus migration loss.
    pub gamma: T,
    pub frag: FragParams<T>,
    /// Per-node migration attempt cap per round.
    pub zeta: usize,
    pub migration_bw: T,
    pub policy: PolicyKind,
    /// Checkpoint path, required when `policy` is the model-backed one.
    pub model: Option<PathBuf>,
    pub max_hops: usize,
    pub paths_per_pair: usize,
    pub trace_files: Vec<PathBuf>,
    /// Capacity scale factors applied to the loaded topology.
    pub cpu_scale: T,
    pub mem_scale: T,
    pub bw_scale: T,
    /// Dataset generation: restart cap across runs.
    pub dataset_max_runs: usize,
}

impl<T: Scalar> Default for SimConfig<T> {
    fn default() -> Self {
        SimConfig {
            topology: "nsfnet".into(),
            workload: WorkloadConfig::default(),
            arrival_rate: 10.0,
            seed: 0,
            horizon: 1000,
            warmup: 100,
            rho: T::from_f64_lossy(0.5),
            gamma: T::from_f64_lossy(0.9),
            frag: FragParams::default(),
            zeta: 5,
            migration_bw: T::one(),
            policy: PolicyKind::Greedy,
            model: None,
            max_hops: crate::topology::DEFAULT_MAX_HOPS,
            paths_per_pair: crate::topology::DEFAULT_PATHS_PER_PAIR,
            trace_files: Vec::new(),
            cpu_scale: T::one(),
            mem_scale: T::one(),
            bw_scale: T::one(),
            dataset_max_runs: 64,
        }
    }
}

impl<T: Scalar> SimConfig<T> {
    pub fn round_params(&self) -> RoundParams<T> {
        RoundParams {
            rho: self.rho,
            zeta: self.zeta,
            migration_bw: self.migration_bw,
            frag: self.frag,
        }
    }

    pub fn effective_warmup(&self) -> usize {
        if self.warmup >= self.horizon {
            0
        } else {
            self.warmup
        }
    }
}

/// Resolves a topology specifier (builtin name or document path) and applies
/// the configured capacity scaling.
pub fn resolve_topology<T: Scalar>(config: &SimConfig<T>) -> Result<Network<T>, SimError> {
    let base: Network<T> = if config.topology == "nsfnet" {
        Network::nsfnet()
    } else if let Some(n) = config.topology.strip_prefix("complete-") {
        let n: usize = n
            .parse()
            .map_err(|_| SimError::Config(format!("bad builtin topology {:?}", config.topology)))?;
        Network::complete(n)
    } else {
        let path = Path::new(&config.topology);
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Io { path: path.to_path_buf(), source: e })?;
        Network::from_json(&text)?
    };
    let mut net = base;
    let one = T::one();
    if config.cpu_scale != one {
        net = net.scaled(0, config.cpu_scale);
    }
    if config.mem_scale != one {
        net = net.scaled(1, config.mem_scale);
    }
    if config.bw_scale != one && net.link_dims() > 0 {
        net = net.scaled(net.node_dims(), config.bw_scale);
    }
    Ok(net)
}

fn load_traces<T: Scalar>(config: &SimConfig<T>) -> Result<Vec<TraceSeries<T>>, SimError> {
    config
        .trace_files
        .iter()
        .map(|p| ingest_trace_file(p).map_err(SimError::Trace))
        .collect()
}

/// Derives an independent stream seed from the master seed and a purpose tag.
pub fn subseed(master: u64, tag: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(tag.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// One slot of the metrics log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlotRecord<T = f64> {
    pub slot: usize,
    pub arrivals: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub released: usize,
    pub node_overloads: usize,
    pub link_overloads: usize,
    pub migrations: usize,
    pub reroutes: usize,
    pub failures: usize,
    /// Maximum weighted fragmentation level at the end of the slot.
    pub frag_max: T,
    /// Migration loss accrued in this slot.
    pub loss: T,
    pub metrics: LoadMetrics<T>,
    /// True when a migration round ran this slot.
    pub round_ran: bool,
    /// Wall time of the migration round; a measurement, not simulation state.
    pub round_ms: f64,
}

/// Cumulative statistics over one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary<T = f64> {
    pub horizon: usize,
    pub warmup: usize,
    pub seed: u64,
    pub policy: PolicyKind,
    pub offered: usize,
    pub accepted: usize,
    pub acceptance_ratio: T,
    /// Post-warmup share of slots with any surviving overload.
    pub overload_ratio: T,
    /// Same over the full horizon.
    pub overload_ratio_full: T,
    pub total_loss: T,
    /// gamma * sum(frag) + (1 - gamma) * sum(loss), over the full horizon.
    pub objective: T,
    /// Post-warmup mean of the per-slot maximum fragmentation level.
    pub mean_frag: T,
    /// Mean end-of-slot fragmentation over slots that ran a migration round.
    pub mean_post_round_frag: T,
    pub migration_rounds: usize,
    /// Post-warmup means of the six load metrics.
    pub mean_metrics: LoadMetrics<T>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsLog<T = f64> {
    pub slots: Vec<SlotRecord<T>>,
    pub summary: Summary<T>,
}

/// A fully resolved simulation ready to run. Build one with
/// [`Simulation::from_config`], or assemble the pieces directly in tests.
pub struct Simulation<T = f64> {
    pub config: SimConfig<T>,
    pub net: Network<T>,
    pub table: PathTable<T>,
    pub khop: KhopCache,
    pub policy: Policy<T>,
    pub traces: Vec<TraceSeries<T>>,
}

impl<T: Scalar> Simulation<T> {
    pub fn from_config(config: SimConfig<T>) -> Result<Self, SimError> {
        let net = resolve_topology(&config)?;
        let policy = match config.policy {
            PolicyKind::Greedy => Policy::Greedy,
            PolicyKind::Oracle => Policy::Oracle,
            PolicyKind::Mhgat => {
                let path = config.model.as_ref().ok_or_else(|| {
                    SimError::Config("policy mhgat requires a model checkpoint".into())
                })?;
                let file = std::fs::File::open(path)
                    .map_err(|e| SimError::Io { path: path.clone(), source: e })?;
                let model: MhgatModel<T> = load_checkpoint(file)?;
                model.verify_topology(&net)?;
                Policy::Mhgat(Box::new(model))
            }
        };
        let traces = load_traces(&config)?;
        Ok(Self::assemble(config, net, policy, traces))
    }

    /// Builds the derived structures for an explicit network and policy.
    pub fn assemble(
        config: SimConfig<T>,
        net: Network<T>,
        policy: Policy<T>,
        traces: Vec<TraceSeries<T>>,
    ) -> Self {
        let table = PathTable::build(&net, config.max_hops, config.paths_per_pair);
        let khop = KhopCache::build(&net, config.frag.max_field);
        Simulation { config, net, table, khop, policy, traces }
    }

    /// Runs the slot loop and returns the full log. Deterministic per seed
    /// (except the wall-time measurements).
    pub fn run(&self) -> MetricsLog<T> {
        let cfg = &self.config;
        let params = cfg.round_params();
        let mut state = NetworkState::new(&self.net);
        let mut gen = SfcGenerator::new(
            &cfg.workload,
            &self.traces,
            ChaCha8Rng::seed_from_u64(subseed(cfg.seed, "workload")),
        );
        let mut arrival_rng = ChaCha8Rng::seed_from_u64(subseed(cfg.seed, "arrivals"));
        let poisson = Poisson::new(cfg.arrival_rate).expect("positive arrival rate");

        let mut slots = Vec::with_capacity(cfg.horizon);
        for t in 0..cfg.horizon {
            state.advance_to(&self.net, t);
            let released = state.release_expired(t);

            let arrivals = poisson.sample(&mut arrival_rng) as usize;
            let mut accepted = 0;
            for _ in 0..arrivals {
                let sfc = gen.generate(t);
                match deploy_sfc(&mut state, &self.net, &self.table, sfc, cfg.rho)
                    .expect("fresh sfc id")
                {
                    DeployOutcome::Accepted(_) => accepted += 1,
                    DeployOutcome::Rejected => {}
                }
            }

            let pre = state.detect_overloads(&self.net, cfg.rho);
            let mut migrations = 0;
            let mut reroutes = 0;
            let mut failures = 0;
            let mut loss = T::zero();
            let mut round_ms = 0.0;
            let round_ran = !pre.is_empty();
            if round_ran {
                let started = Instant::now();
                let outcome = run_migration_round(
                    &mut state,
                    &self.net,
                    &self.table,
                    &self.khop,
                    &self.policy,
                    &params,
                );
                round_ms = started.elapsed().as_secs_f64() * 1000.0;
                migrations = outcome.actions.len();
                reroutes = outcome.reroutes.len();
                failures = outcome.failures.len();
                loss = outcome.total_loss;
            }

            let post = state.detect_overloads(&self.net, cfg.rho);
            let metrics = load_metric_suite(state.utilization(), &self.net, &self.khop, &cfg.frag);
            slots.push(SlotRecord {
                slot: t,
                arrivals,
                accepted,
                rejected: arrivals - accepted,
                released,
                node_overloads: post.nodes.len(),
                link_overloads: post.links.len(),
                migrations,
                reroutes,
                failures,
                frag_max: metrics.max_frag,
                loss,
                metrics,
                round_ran,
                round_ms,
            });
        }

        let summary = summarize(cfg, &slots);
        MetricsLog { slots, summary }
    }
}

fn summarize<T: Scalar>(cfg: &SimConfig<T>, slots: &[SlotRecord<T>]) -> Summary<T> {
    let warmup = cfg.effective_warmup();
    let offered: usize = slots.iter().map(|s| s.arrivals).sum();
    let accepted: usize = slots.iter().map(|s| s.accepted).sum();
    let total_loss: T = slots.iter().map(|s| s.loss).sum();
    let sum_frag: T = slots.iter().map(|s| s.frag_max).sum();
    let objective = cfg.gamma * sum_frag + (T::one() - cfg.gamma) * total_loss;

    let tail = &slots[warmup.min(slots.len())..];
    let tail_n = T::from_usize(tail.len().max(1)).unwrap();
    let overloaded = |s: &SlotRecord<T>| (s.node_overloads + s.link_overloads > 0) as usize;
    let over_tail: usize = tail.iter().map(overloaded).sum();
    let over_full: usize = slots.iter().map(overloaded).sum();
    let round_frags: Vec<T> =
        slots.iter().filter(|s| s.round_ran).map(|s| s.frag_max).collect();
    let mean_post_round_frag = if round_frags.is_empty() {
        T::zero()
    } else {
        round_frags.iter().copied().sum::<T>() / T::from_usize(round_frags.len()).unwrap()
    };

    let mean = |f: &dyn Fn(&SlotRecord<T>) -> T| -> T {
        tail.iter().map(|s| f(s)).sum::<T>() / tail_n
    };
    Summary {
        horizon: cfg.horizon,
        warmup,
        seed: cfg.seed,
        policy: cfg.policy,
        offered,
        accepted,
        acceptance_ratio: if offered == 0 {
            T::one()
        } else {
            T::from_usize(accepted).unwrap() / T::from_usize(offered).unwrap()
        },
        overload_ratio: T::from_usize(over_tail).unwrap() / tail_n,
        overload_ratio_full: T::from_usize(over_full).unwrap()
            / T::from_usize(slots.len().max(1)).unwrap(),
        total_loss,
        objective,
        mean_frag: mean(&|s| s.frag_max),
        mean_post_round_frag,
        migration_rounds: round_frags.len(),
        mean_metrics: LoadMetrics {
            avr_max_util: mean(&|s| s.metrics.avr_max_util),
            avr_var: mean(&|s| s.metrics.avr_var),
            avr_frag: mean(&|s| s.metrics.avr_frag),
            max_max_util: mean(&|s| s.metrics.max_max_util),
            max_var: mean(&|s| s.metrics.max_var),
            max_frag: mean(&|s| s.metrics.max_frag),
        },
    }
}

/// Convenience wrapper resolving everything from the config.
pub fn run_simulation<T: Scalar>(config: SimConfig<T>) -> Result<MetricsLog<T>, SimError> {
    Ok(Simulation::from_config(config)?.run())
}

// --- Dataset generation ------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetStats {
    pub records: usize,
    pub duplicates_skipped: usize,
    pub runs: usize,
    pub reached_target: bool,
}

/// Runs the no-migration lifecycle and emits one labeled record per overload
/// event: the selected VNF's tensors plus the per-destination
/// post-migration fragmentation labels from exhaustive simulation. Each
/// event is then resolved by applying the oracle's best feasible move so the
/// run continues from a relieved state. Restarts with derived seeds until
/// `target` records exist or the run cap is hit (partial dataset with a
/// warning).
pub fn generate_dataset<T: Scalar>(
    config: &SimConfig<T>,
    target: usize,
) -> Result<(Vec<DatasetRecord<T>>, DatasetStats), SimError> {
    if target == 0 {
        return Err(SimError::Config("dataset target must be at least 1".into()));
    }
    let net = resolve_topology(config)?;
    let table = PathTable::build(&net, config.max_hops, config.paths_per_pair);
    let khop = KhopCache::build(&net, config.frag.max_field);
    let traces = load_traces(config)?;
    let params = config.round_params();
    let topo_hash = net.structural_hash();

    let mut records: Vec<DatasetRecord<T>> = Vec::with_capacity(target);
    let mut seen: HashSet<[u8; 32]> = HashSet::new();
    let mut duplicates = 0usize;
    let mut runs = 0usize;

    'runs: for run in 0..config.dataset_max_runs {
        runs = run + 1;
        let run_seed = subseed(config.seed, &format!("dataset-run-{run}"));
        let mut state = NetworkState::new(&net);
        let mut gen = SfcGenerator::new(
            &config.workload,
            &traces,
            ChaCha8Rng::seed_from_u64(subseed(run_seed, "workload")),
        );
        let mut arrival_rng = ChaCha8Rng::seed_from_u64(subseed(run_seed, "arrivals"));
        let poisson = Poisson::new(config.arrival_rate).expect("positive arrival rate");

        for t in 0..config.horizon {
            state.advance_to(&net, t);
            state.release_expired(t);
            let arrivals = poisson.sample(&mut arrival_rng) as usize;
            for _ in 0..arrivals {
                let sfc = gen.generate(t);
                let _ = deploy_sfc(&mut state, &net, &table, sfc, config.rho).expect("fresh sfc");
            }

            // Handle each overloaded node once per slot, re-detecting after
            // every resolution since moves shift load around.
            let mut handled: Vec<NodeId> = Vec::new();
            loop {
                let over = state.detect_overloads(&net, config.rho).nodes;
                let next = over.into_iter().find(|(n, _)| !handled.contains(n));
                let (node, dim) = match next {
                    Some(x) => x,
                    None => break,
                };
                handled.push(node);
                let vnf = match select_vnf(&state, &net, node, dim, &[], config.rho) {
                    Some(v) => v,
                    None => continue,
                };
                let x = build_node_features(&state, &net, vnf);
                let e = build_edge_features(&state, &net, vnf);
                let (best, labels) =
                    oracle_destination(&state, &net, &table, &khop, vnf, &params);
                let record = DatasetRecord {
                    x,
                    e,
                    labels,
                    topology_hash: topo_hash.clone(),
                    slot: t,
                    vnf,
                    source_node: node,
                };
                if seen.insert(record.tensor_hash()) {
                    records.push(record);
                } else {
                    duplicates += 1;
                }
                if let Some(action) = best {
                    state.apply_migration(&action).expect("oracle action applies");
                }
                if records.len() >= target {
                    break 'runs;
                }
            }
        }
    }

    let reached = records.len() >= target;
    if !reached {
        log::warn!(
            "dataset generation stopped at {} of {} records after {} runs",
            records.len(),
            target,
            runs
        );
    }
    Ok((
        records,
        DatasetStats {
            records: seen.len().min(target),
            duplicates_skipped: duplicates,
            runs,
            reached_target: reached,
        },
    ))
}

// --- Parameter sweeps ----------------------------------------------------

/// Which knob a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    ArrivalRate,
    CpuScale,
    MemScale,
    BwScale,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::ArrivalRate => "arrival-rate",
            SweepParameter::CpuScale => "cpu-scale",
            SweepParameter::MemScale => "mem-scale",
            SweepParameter::BwScale => "bw-scale",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "arrival-rate" | "lambda" => Some(SweepParameter::ArrivalRate),
            "cpu-scale" => Some(SweepParameter::CpuScale),
            "mem-scale" => Some(SweepParameter::MemScale),
            "bw-scale" => Some(SweepParameter::BwScale),
            _ => None,
        }
    }

    pub fn apply<T: Scalar>(self, config: &mut SimConfig<T>, value: f64) {
        match self {
            SweepParameter::ArrivalRate => config.arrival_rate = value,
            SweepParameter::CpuScale => config.cpu_scale = T::from_f64_lossy(value),
            SweepParameter::MemScale => config.mem_scale = T::from_f64_lossy(value),
            SweepParameter::BwScale => config.bw_scale = T::from_f64_lossy(value),
        }
    }
}

/// One sweep cell result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell<T = f64> {
    pub parameter: String,
    pub value: f64,
    pub seed: u64,
    pub policy: PolicyKind,
    pub summary: Summary<T>,
}

/// Runs the cross-product of values, seeds and policies in a deterministic
/// order.
pub fn sweep<T: Scalar>(
    template: &SimConfig<T>,
    parameter: SweepParameter,
    values: &[f64],
    seeds: &[u64],
    policies: &[PolicyKind],
) -> Result<Vec<SweepCell<T>>, SimError> {
    let mut cells = Vec::with_capacity(values.len() * seeds.len() * policies.len());
    for &value in values {
        for &seed in seeds {
            for &policy in policies {
                let mut config = template.clone();
                parameter.apply(&mut config, value);
                config.seed = seed;
                config.policy = policy;
                let log = run_simulation(config)?;
                cells.push(SweepCell {
                    parameter: parameter.name().to_string(),
                    value,
                    seed,
                    policy,
                    summary: log.summary,
                });
            }
        }
    }
    Ok(cells)
}

// --- Decision runtime benchmark -------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub nodes: usize,
    pub policy: PolicyKind,
    pub median_ms: f64,
    pub trials: usize,
}

/// Times one migration decision per policy on complete graphs. The scenario
/// overloads node 0 in CPU with constant-demand VNFs; a decision covers VNF
/// selection, destination choice and path planning, without applying the
/// move. The model-backed policy uses a fresh seeded model per size
/// (forward cost does not depend on training).
pub fn benchmark_runtime<T: Scalar>(
    node_counts: &[usize],
    trials: usize,
    policies: &[PolicyKind],
    seed: u64,
) -> Result<Vec<BenchRow>, SimError> {
    use crate::mhgat::{Ablation, ModelHyper};
    use crate::workload::{DemandTrace, SfcRequest, Vnf};

    if node_counts.iter().any(|&n| n < 2) {
        return Err(SimError::Config("benchmark needs at least 2 nodes".into()));
    }
    let trials = trials.max(1);
    let mut rows = Vec::new();
    for &n in node_counts {
        let net: Network<T> = Network::complete(n);
        let table = PathTable::build(&net, 2, crate::topology::DEFAULT_PATHS_PER_PAIR);
        let khop = KhopCache::build(&net, 2);
        let params = RoundParams::<T>::default();
        let mut state = NetworkState::new(&net);
        let constant_vnf_sfc = |id: u64, cpu: f64| SfcRequest {
            id,
            arrival_slot: 0,
            lifetime_slots: 1000,
            latency_limit_ms: T::from_f64_lossy(40.0),
            vnfs: vec![Vnf {
                id: 0,
                demand: DemandTrace::constant(vec![
                    T::from_f64_lossy(cpu),
                    T::from_f64_lossy(2.0),
                ]),
                processing_delay_ms: T::from_f64_lossy(2.0),
            }],
            vnf_links: vec![],
        };
        // Overload node 0 in CPU: 7 + 6 + 5 = 18 > 16; light background.
        for (i, cpu) in [7.0, 6.0, 5.0].into_iter().enumerate() {
            state.force_place(constant_vnf_sfc(i as u64, cpu), &[0], &[]);
        }
        for m in 1..n {
            state.force_place(constant_vnf_sfc(2 + m as u64, 1.0 + (m % 5) as f64), &[m], &[]);
        }
        let model = MhgatModel::<T>::new(&net, ModelHyper::default(), Ablation::NONE, seed);

        for &policy in policies {
            let mut times: Vec<f64> = Vec::with_capacity(trials);
            for _ in 0..trials {
                let started = Instant::now();
                let vnf = select_vnf(&state, &net, 0, 0, &[], params.rho).expect("overloaded");
                match policy {
                    PolicyKind::Greedy => {
                        let _ = greedy_destination(&state, &net, &table, vnf, 0, params.rho);
                    }
                    PolicyKind::Oracle => {
                        let _ = oracle_destination(&state, &net, &table, &khop, vnf, &params);
                    }
                    PolicyKind::Mhgat => {
                        let _ = mhgat_destination(&state, &net, &table, &model, vnf, params.rho);
                    }
                }
                times.push(started.elapsed().as_secs_f64() * 1000.0);
            }
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = times[times.len() / 2];
            rows.push(BenchRow { nodes: n, policy, median_ms: median, trials });
        }
    }
    Ok(rows)
}

/// Runs the slot loop and captures the full fragmentation report per slot,
/// for the analyzer export.
pub fn fragmentation_trace<T: Scalar>(
    sim: &Simulation<T>,
) -> Vec<crate::frag::FragmentationReport<T>> {
    let cfg = &sim.config;
    let params = cfg.round_params();
    let mut state = NetworkState::new(&sim.net);
    let mut gen = SfcGenerator::new(
        &cfg.workload,
        &sim.traces,
        ChaCha8Rng::seed_from_u64(subseed(cfg.seed, "workload")),
    );
    let mut arrival_rng = ChaCha8Rng::seed_from_u64(subseed(cfg.seed, "arrivals"));
    let poisson = Poisson::new(cfg.arrival_rate).expect("positive arrival rate");
    let mut out = Vec::with_capacity(cfg.horizon);
    for t in 0..cfg.horizon {
        state.advance_to(&sim.net, t);
        state.release_expired(t);
        let arrivals = poisson.sample(&mut arrival_rng) as usize;
        for _ in 0..arrivals {
            let sfc = gen.generate(t);
            let _ = deploy_sfc(&mut state, &sim.net, &sim.table, sfc, cfg.rho).expect("fresh sfc");
        }
        if !state.detect_overloads(&sim.net, cfg.rho).is_empty() {
            let _ = run_migration_round(
                &mut state,
                &sim.net,
                &sim.table,
                &sim.khop,
                &sim.policy,
                &params,
            );
        }
        out.push(fragmentation_report(state.utilization(), &sim.net, &sim.khop, &cfg.frag, t));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_config() -> SimConfig<f64> {
        // Arrival rate and amplitudes low enough that the threshold is never
        // crossed.
        let mut cfg = SimConfig::<f64>::default();
        cfg.horizon = 30;
        cfg.warmup = 5;
        cfg.arrival_rate = 0.5;
        cfg.workload.cpu_amplitude = (0.01, 0.02);
        cfg.workload.mem_amplitude = (0.01, 0.02);
        cfg.workload.bw_amplitude = (0.001, 0.002);
        cfg.seed = 1;
        cfg
    }

    #[test]
    fn quiet_run_has_no_overloads_or_loss() {
        let log = run_simulation(quiet_config()).unwrap();
        assert_eq!(log.summary.overload_ratio_full, 0.0);
        assert_eq!(log.summary.total_loss, 0.0);
        assert_eq!(log.summary.migration_rounds, 0);
        assert!(log.summary.acceptance_ratio > 0.99);
    }

    #[test]
    fn identical_seed_gives_identical_log() {
        let mut cfg = quiet_config();
        cfg.arrival_rate = 6.0;
        cfg.workload = WorkloadConfig::default();
        cfg.horizon = 25;
        let a = run_simulation(cfg.clone()).unwrap();
        let b = run_simulation(cfg).unwrap();
        // Timing fields differ run to run; compare everything else.
        let strip = |log: &MetricsLog<f64>| {
            let mut v: Vec<serde_json::Value> =
                serde_json::from_str(&serde_json::to_string(&log.slots).unwrap()).unwrap();
            for rec in &mut v {
                rec.as_object_mut().unwrap().remove("round_ms");
            }
            serde_json::to_string(&v).unwrap()
        };
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn objective_matches_definition() {
        let mut cfg = quiet_config();
        cfg.arrival_rate = 8.0;
        cfg.workload = WorkloadConfig::default();
        cfg.horizon = 20;
        let log = run_simulation(cfg.clone()).unwrap();
        let sum_frag: f64 = log.slots.iter().map(|s| s.frag_max).sum();
        let sum_loss: f64 = log.slots.iter().map(|s| s.loss).sum();
        let expect = cfg.gamma * sum_frag + (1.0 - cfg.gamma) * sum_loss;
        assert!((log.summary.objective - expect).abs() < 1e-9);
    }

    #[test]
    fn dataset_labels_have_node_count_length() {
        let mut cfg = SimConfig::<f64>::default();
        cfg.horizon = 60;
        cfg.seed = 3;
        let (records, stats) = generate_dataset(&cfg, 5).unwrap();
        assert!(stats.records >= 5, "expected records, got {stats:?}");
        for r in &records {
            assert_eq!(r.labels.len(), 14);
            assert!(r.labels.iter().all(|&l| l > 0.0 && l <= 1.0));
        }
    }

    #[test]
    fn sweep_consistency_at_identity_scale() {
        let mut cfg = quiet_config();
        cfg.horizon = 15;
        let base = run_simulation(cfg.clone()).unwrap();
        let cells = sweep(
            &cfg,
            SweepParameter::CpuScale,
            &[1.0],
            &[cfg.seed],
            &[PolicyKind::Greedy],
        )
        .unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].summary.acceptance_ratio, base.summary.acceptance_ratio);
        assert_eq!(cells[0].summary.mean_frag, base.summary.mean_frag);
    }

    #[test]
    fn benchmark_rows_are_positive() {
        let rows =
            benchmark_runtime::<f64>(&[4], 3, &[PolicyKind::Greedy, PolicyKind::Oracle], 1)
                .unwrap();
        assert_eq!(rows.len(), 2);
        for r in rows {
            assert!(r.median_ms >= 0.0);
            assert!(r.median_ms.is_finite());
        }
    }
}
