//! Run, validate and oracle-compare pipelines with report, manifest and
//! checkpoint I/O.
//!
//! Chains run on worker threads, each with a private state and private
//! observers; results are merged in chain order on the calling thread, which
//! is also the only writer of output files. Chain `i` draws from stream
//! `16 i` and its observers from streams `16 i + 1 ..= 16 i + 4`.

use std::fs;
use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{sha256_hex, CheckName, RunConfig};
use crate::energy::FloorMonitor;
use crate::error::{Error, Result};
use crate::estimators::{
    bound_constants, check_within, estimate_partition, validate_kernel_bounds, validate_ruelle, CheckRecord,
    CompatibilityObserver, DensityObserver, Estimate, KernelEstimate, KernelPair, OccupancyObserver, RdmkObserver,
    RuelleObserver, TraceObserver,
};
use crate::loops::Loop;
use crate::mcmc::{run_sweeps, state_is_legal, ChainSnapshot, ChainState, ChainStats, MoveKind, Observer, SimulationParams};
use crate::oracle::{quad_partition, quad_rdmk, quad_trace, OracleValue, PartitionQuadrature, QuadratureSpec};
use crate::sampling::{sample_bridge, RandomStream};

pub const WORKERS_ENV: &str = "LOOPGAS_WORKERS";
pub const CHECKPOINT_VERSION: u32 = 1;
const STREAMS_PER_CHAIN: u64 = 16;
const TEST_LOOP_STREAM: u64 = u64::MAX;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Exit status for an error: 2 for bad input, 3 for anything that went wrong while running.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::QuadratureSize(_) | Error::Domain(_) | Error::InvalidPotential(_) | Error::Alignment { .. } => {
            EXIT_CONFIG
        }
        _ => EXIT_RUNTIME,
    }
}

/// `flag`, else `$LOOPGAS_WORKERS`, else the available parallelism.
pub fn worker_count(flag: Option<usize>) -> Result<usize> {
    if let Some(w) = flag {
        return Ok(w.max(1));
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(|w| w.max(1))
            .map_err(|_| Error::Config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub workers: Option<usize>,
    pub resume: bool,
    /// Overrides `output.dir`.
    pub out: Option<PathBuf>,
}

/// Per-sample legality counters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LegalityMonitor {
    pub checked: u64,
    pub illegal: u64,
    pub over_cap: u64,
    pub max_loops: usize,
}

/// Everything one chain measures.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainObservers {
    pub occupancy: OccupancyObserver,
    pub kernels: Option<RdmkObserver>,
    pub trace: Option<TraceObserver>,
    pub compatibility: Option<CompatibilityObserver>,
    pub density: Option<DensityObserver>,
    pub ruelle: Option<RuelleObserver>,
    pub legality: LegalityMonitor,
}

impl Observer for ChainObservers {
    fn observe(&mut self, state: &ChainState, params: &SimulationParams) -> Result<()> {
        self.occupancy.observe(state, params)?;
        if let Some(o) = &mut self.kernels {
            o.observe(state, params)?;
        }
        if let Some(o) = &mut self.trace {
            o.observe(state, params)?;
        }
        if let Some(o) = &mut self.compatibility {
            o.observe(state, params)?;
        }
        if let Some(o) = &mut self.density {
            o.observe(state, params)?;
        }
        if let Some(o) = &mut self.ruelle {
            o.observe(state, params)?;
        }
        let m = &mut self.legality;
        m.checked += 1;
        if !state_is_legal(state, params) {
            m.illegal += 1;
        }
        let n = state.config().len();
        if n > params.occupancy_cap() {
            m.over_cap += 1;
        }
        m.max_loops = m.max_loops.max(n);
        Ok(())
    }
}

impl ChainObservers {
    pub fn merge(&mut self, other: &ChainObservers) {
        self.occupancy.merge(&other.occupancy);
        if let (Some(a), Some(b)) = (&mut self.kernels, &other.kernels) {
            a.merge(b);
        }
        if let (Some(a), Some(b)) = (&mut self.trace, &other.trace) {
            a.merge(b);
        }
        if let (Some(a), Some(b)) = (&mut self.compatibility, &other.compatibility) {
            a.merge(b);
        }
        if let (Some(a), Some(b)) = (&mut self.density, &other.density) {
            a.merge(b);
        }
        if let (Some(a), Some(b)) = (&mut self.ruelle, &other.ruelle) {
            a.merge(b);
        }
        let (a, b) = (&mut self.legality, &other.legality);
        a.checked += b.checked;
        a.illegal += b.illegal;
        a.over_cap += b.over_cap;
        a.max_loops = a.max_loops.max(b.max_loops);
    }

    /// Floor checks made by the estimators.
    pub fn floor(&self) -> FloorMonitor {
        let mut f = FloorMonitor::default();
        for m in [
            self.kernels.as_ref().map(|o| &o.floor),
            self.trace.as_ref().map(|o| &o.floor),
            self.compatibility.as_ref().map(|o| &o.floor),
            self.ruelle.as_ref().map(|o| &o.floor),
        ]
        .into_iter()
        .flatten()
        {
            f.merge(m);
        }
        f
    }
}

/// Fixed test loops for the moment bound: one Brownian loop per point and multiplicity.
pub fn test_loops(params: &SimulationParams, points: &[Vec<f64>]) -> Result<Vec<Loop>> {
    let mut rng = RandomStream::new(params.seed, TEST_LOOP_STREAM);
    let mut out = Vec::new();
    for p in points {
        if p.len() != params.dim() {
            return Err(Error::Config("estimators.ruelle_points must match the dimension".into()));
        }
        for k in 1..=params.k_max {
            out.push(Loop::try_from(sample_bridge(p, p, k, params.beta, params.slices, &mut rng))?);
        }
    }
    Ok(out)
}

fn build_observers(cfg: &RunConfig, params: &SimulationParams, chain: u64, loops: &[Loop]) -> Result<ChainObservers> {
    let est = &cfg.estimators;
    let base = chain * STREAMS_PER_CHAIN;
    let stream = |i: u64| RandomStream::new(params.seed, base + i);
    let inner = cfg.inner()?;
    let need_inner = |what: &str| {
        inner.clone().ok_or_else(|| Error::Config(format!("{what} needs estimators.inner")))
    };
    let kernels = if est.kernel_pairs.is_empty() {
        None
    } else {
        Some(RdmkObserver::new(params, need_inner("kernel_pairs")?, cfg.kernel_pairs()?, est.bridge_samples, stream(1))?)
    };
    let trace = if est.trace { Some(TraceObserver::new(need_inner("trace")?, est.trace_draws, stream(2))) } else { None };
    let compatibility = match cfg.compat_inner()? {
        None => None,
        Some(small) => {
            let pairs = cfg.compat_pairs()?;
            if pairs.is_empty() {
                return Err(Error::Config("estimators.compat_inner needs estimators.compat_pairs".into()));
            }
            Some(CompatibilityObserver::new(params, need_inner("compat_inner")?, small, pairs, est.compat_draws, stream(3))?)
        }
    };
    let density = (est.density_cells > 0).then(|| DensityObserver::new(params.region.clone(), est.density_cells));
    let ruelle = (!loops.is_empty()).then(|| RuelleObserver::new(loops.to_vec()));
    Ok(ChainObservers {
        occupancy: OccupancyObserver::new(est.n_max),
        kernels,
        trace,
        compatibility,
        density,
        ruelle,
        legality: LegalityMonitor::default(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainCheckpoint {
    pub chain: u64,
    pub snapshot: ChainSnapshot,
    pub observers: ChainObservers,
}

/// Versioned resume record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub params_hash: String,
    pub chains: Vec<ChainCheckpoint>,
}

impl Checkpoint {
    pub fn load(path: &FsPath) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("checkpoint version {} is not supported", ck.version)));
        }
        Ok(ck)
    }
}

struct ChainJob {
    chain: u64,
    state: ChainState,
    observers: ChainObservers,
}

/// Merged output of all chains.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub params: SimulationParams,
    pub observers: ChainObservers,
    pub stats: ChainStats,
    /// First cache-coherence failure, if any.
    pub cache_error: Option<String>,
    pub out_dir: PathBuf,
    pub chains: usize,
}

fn run_jobs(jobs: &mut [ChainJob], params: &SimulationParams, until: u64, workers: usize) -> Result<()> {
    let per = jobs.len().div_ceil(workers.max(1)).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .chunks_mut(per)
            .map(|chunk| {
                s.spawn(move || -> Result<()> {
                    for job in chunk {
                        run_sweeps(&mut job.state, params, &mut job.observers, until)?;
                    }
                    Ok(())
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Consistency("worker thread panicked".into()))))
            .collect::<Result<Vec<()>>>()
    })?;
    Ok(())
}

fn write_checkpoint(path: &FsPath, hash: &str, jobs: &[ChainJob]) -> Result<()> {
    let ck = Checkpoint {
        version: CHECKPOINT_VERSION,
        params_hash: hash.to_string(),
        chains: jobs
            .iter()
            .map(|j| ChainCheckpoint { chain: j.chain, snapshot: j.state.snapshot(), observers: j.observers.clone() })
            .collect(),
    };
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_vec(&ck)?)
        .map_err(|e| Error::Checkpoint(format!("cannot write {}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| Error::Checkpoint(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

/// Runs (or resumes) every chain of `cfg`, writing checkpoints, reports and the manifest.
pub fn execute(cfg: &RunConfig, base: &FsPath, opts: &RunOptions) -> Result<RunResult> {
    let params = cfg.params(base)?;
    let workers = worker_count(opts.workers)?;
    let loops = test_loops(&params, &cfg.estimators.ruelle_points)?;
    let n_chains = cfg.chain.chains;
    let mut jobs = Vec::with_capacity(n_chains);
    for i in 0..n_chains as u64 {
        jobs.push(ChainJob {
            chain: i,
            state: ChainState::new(&params, i * STREAMS_PER_CHAIN)?,
            observers: build_observers(cfg, &params, i, &loops)?,
        });
    }
    let out_dir = opts.out.clone().unwrap_or_else(|| cfg.output_dir(base));
    fs::create_dir_all(&out_dir)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", out_dir.display()))))?;
    let ck_path = out_dir.join("checkpoint.json");
    let hash = cfg.trajectory_hash()?;
    if opts.resume {
        let ck = Checkpoint::load(&ck_path)?;
        if ck.params_hash != hash {
            return Err(Error::Checkpoint("checkpoint was written for a different configuration".into()));
        }
        if ck.chains.len() != n_chains {
            return Err(Error::Checkpoint(format!("checkpoint has {} chains, config has {n_chains}", ck.chains.len())));
        }
        for (job, c) in jobs.iter_mut().zip(ck.chains) {
            if c.chain != job.chain {
                return Err(Error::Checkpoint("checkpoint chains are out of order".into()));
            }
            job.state = ChainState::restore(&params, c.snapshot)?;
            job.observers = c.observers;
        }
    }
    let consts = params.constants()?;
    if !consts.stable {
        eprintln!("warning: rho_bar = {} >= 1, outside the stability regime", consts.rho_bar);
    }
    let total = params.burn_in + params.sweeps;
    let start = jobs.iter().map(|j| j.state.sweeps()).min().unwrap_or(0);
    if jobs.iter().any(|j| j.state.sweeps() > total) {
        return Err(Error::Checkpoint("checkpoint is past the configured number of sweeps".into()));
    }
    let interval = cfg.output.checkpoint_interval;
    let mut at = start;
    loop {
        let next = at.checked_div(interval).map_or(total, |q| (q + 1) * interval).min(total);
        run_jobs(&mut jobs, &params, next, workers)?;
        write_checkpoint(&ck_path, &hash, &jobs)?;
        at = next;
        if at >= total {
            break;
        }
    }
    let cache_error = jobs.iter().find_map(|j| j.state.verify(&params).err().map(|e| e.to_string()));
    let mut observers = jobs[0].observers.clone();
    let mut stats = jobs[0].state.stats.clone();
    for j in &jobs[1..] {
        observers.merge(&j.observers);
        stats.merge(&j.state.stats);
    }
    let result = RunResult { params, observers, stats, cache_error, out_dir, chains: n_chains };
    write_rows(&result.out_dir, "report", cfg, &report_rows(&result))?;
    write_manifest(&result.out_dir, cfg, n_chains, None)?;
    Ok(result)
}

/// One line of the accumulator report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub quantity: String,
    pub label: String,
    pub value: f64,
    pub stderr: f64,
    pub samples: u64,
}

fn row(quantity: &str, label: impl Into<String>, e: Estimate, samples: usize) -> ReportRow {
    ReportRow { quantity: quantity.into(), label: label.into(), value: e.value, stderr: e.stderr, samples: samples as u64 }
}

fn pair_label(p: &KernelPair) -> String {
    let fmt = |c: &crate::geometry::ClassicalConfig| {
        let pts: Vec<String> = c.points().map(|p| format!("({})", p.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" "))).collect();
        format!("[{}]", pts.join(" "))
    };
    format!("{} -> {}", fmt(&p.x0), fmt(&p.y0))
}

/// Report rows for every accumulator that received samples.
pub fn report_rows(r: &RunResult) -> Vec<ReportRow> {
    let o = &r.observers;
    let mut rows = Vec::new();
    let samples = o.occupancy.loops.len();
    if samples == 0 {
        return rows;
    }
    for n in 0..o.occupancy.indicators.len() {
        rows.push(row("occupation_probability", n.to_string(), o.occupancy.probability(n), samples));
    }
    rows.push(row("mean_loops", "", Estimate::of(&o.occupancy.loops), samples));
    rows.push(row("mean_multiplicity", "", Estimate::of(&o.occupancy.multiplicity), samples));
    if let Ok(xi) = estimate_partition(&o.occupancy.indicators[0]) {
        rows.push(row("partition_function", "", xi, samples));
    }
    for (k, c) in o.occupancy.k_histogram.iter().enumerate() {
        rows.push(row("loops_with_multiplicity", (k + 1).to_string(), Estimate { value: *c as f64, stderr: 0.0 }, samples));
    }
    for kind in MoveKind::ALL {
        let i = kind as usize;
        let e = Estimate { value: r.stats.acceptance(kind), stderr: 0.0 };
        rows.push(row("acceptance", format!("{kind:?}").to_lowercase(), e, r.stats.proposed[i] as usize));
    }
    if let Some(k) = &o.kernels {
        for ((p, e), acc) in k.pairs.iter().zip(k.estimates()).zip(&k.values) {
            rows.push(row("kernel", pair_label(p), Estimate { value: e.value, stderr: e.stderr }, acc.len()));
        }
    }
    if let Some(t) = &o.trace {
        rows.push(row("trace", "", t.estimate(), t.values.len()));
    }
    if let Some(c) = &o.compatibility {
        for (p, (m, d, diff)) in c.pairs.iter().zip(c.estimates()) {
            let n = c.difference[0].len();
            rows.push(row("compat_marginal", pair_label(p), m, n));
            rows.push(row("compat_direct", pair_label(p), d, n));
            rows.push(row("compat_difference", pair_label(p), diff, n));
        }
    }
    if let Some(d) = &o.density {
        for (i, e) in d.estimates().into_iter().enumerate() {
            let c: Vec<String> = d.cell_center(i).iter().map(|x| x.to_string()).collect();
            rows.push(row("density", c.join(" "), e, d.values[i].len()));
        }
    }
    if let Some(ru) = &o.ruelle {
        for (i, e) in ru.estimates(r.params.z).into_iter().enumerate() {
            rows.push(row("moment_function", format!("loop {i} k={}", ru.loops[i].multiplicity()), e, ru.boltzmann[i].len()));
        }
    }
    let mut floor = r.stats.floor;
    floor.merge(&o.floor());
    rows.push(row("floor_violations", floor.checked.to_string(), Estimate { value: floor.violations as f64, stderr: 0.0 }, samples));
    rows.push(row("illegal_states", o.legality.checked.to_string(), Estimate { value: o.legality.illegal as f64, stderr: 0.0 }, samples));
    rows.push(row("max_loops", "", Estimate { value: o.legality.max_loops as f64, stderr: 0.0 }, samples));
    rows
}

/// Writes `<stem>.csv` and/or `<stem>.jsonl` per the configured format.
pub fn write_rows<T: Serialize>(dir: &FsPath, stem: &str, cfg: &RunConfig, rows: &[T]) -> Result<()> {
    let fmt = cfg.output.format;
    if fmt.csv() {
        let path = dir.join(format!("{stem}.csv"));
        let mut w = csv::WriterBuilder::new().has_headers(true).from_path(&path).map_err(csv_err)?;
        if rows.is_empty() {
            w.write_record(header_of::<T>()).map_err(csv_err)?;
        }
        for r in rows {
            w.serialize(r).map_err(csv_err)?;
        }
        w.flush()?;
    }
    if fmt.jsonl() {
        let mut out = String::new();
        for r in rows {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        fs::write(dir.join(format!("{stem}.jsonl")), out)?;
    }
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn header_of<T>() -> Vec<&'static str> {
    let name = std::any::type_name::<T>();
    if name.ends_with("ReportRow") {
        vec!["quantity", "label", "value", "stderr", "samples"]
    } else if name.ends_with("CheckRecord") {
        vec!["check", "tag", "source", "estimate", "target", "stderr", "passed", "note"]
    } else {
        vec!["quantity", "label", "mc", "sigma", "oracle", "oracle_error", "z_score", "passed", "slices", "grid"]
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    code_version: &'a str,
    config_sha256: String,
    seed: u64,
    chains: usize,
    streams: Vec<u64>,
    slices: usize,
    k_max: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_grid: Option<(usize, usize)>,
}

fn write_manifest(dir: &FsPath, cfg: &RunConfig, chains: usize, oracle_grid: Option<(usize, usize)>) -> Result<()> {
    let m = Manifest {
        schema_version: cfg.schema_version,
        code_version: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")),
        config_sha256: cfg.hash()?,
        seed: cfg.chain.seed,
        chains,
        streams: (0..chains as u64).map(|i| i * STREAMS_PER_CHAIN).collect(),
        slices: cfg.system.slices,
        k_max: cfg.system.k_max,
        oracle_grid,
    };
    let mut text = serde_json::to_string_pretty(&m)?;
    text.push('\n');
    fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}

/// `run`: executes the chains and writes reports.
pub fn cmd_run(config: &FsPath, opts: &RunOptions) -> Result<RunResult> {
    let (cfg, base) = RunConfig::load(config)?;
    execute(&cfg, &base, opts)
}

/// Oracle partition results when the system is small enough.
fn oracle_for(cfg: &RunConfig, params: &SimulationParams) -> Option<(QuadratureSpec, PartitionQuadrature)> {
    if !cfg.validate.oracle_compare || params.dim() != 1 {
        return None;
    }
    let spec = QuadratureSpec::for_params(params, cfg.validate.oracle_grid);
    quad_partition(params, &spec).ok().map(|q| (spec, q))
}

fn skipped(check: &str, tag: &str, why: &str) -> CheckRecord {
    CheckRecord::new(check, tag, f64::NAN, f64::NAN, f64::NAN, true).with_source("none").with_note(format!("skipped: {why}"))
}

fn versus_oracle(check: &str, tag: &str, mc: Estimate, o: &OracleValue, note: String) -> CheckRecord {
    let sigma = (mc.stderr.powi(2) + o.error.powi(2)).sqrt();
    let passed = (mc.value - o.value).abs() <= 3.0 * sigma;
    CheckRecord::new(check, tag, mc.value, o.value, sigma, passed).with_source("mc+oracle").with_note(note)
}

/// Evaluates the selected checks on a finished run.
pub fn build_checks(cfg: &RunConfig, r: &RunResult) -> Result<Vec<CheckRecord>> {
    let p = &r.params;
    let o = &r.observers;
    let oracle = oracle_for(cfg, p);
    let consts = p.constants()?;
    let mut out = Vec::new();
    for check in &cfg.validate.checks {
        match check {
            CheckName::Partition => match (&oracle, estimate_partition(&o.occupancy.indicators[0])) {
                (None, _) => out.push(skipped("partition", "partition_function", "no oracle for this system")),
                (Some(_), Err(e)) => out.push(
                    CheckRecord::new("partition", "partition_function", f64::NAN, f64::NAN, f64::NAN, false).with_note(e.to_string()),
                ),
                (Some((spec, q)), Ok(e)) => {
                    out.push(versus_oracle("partition", "partition_function", e, &q.xi, format!("M = {}, grid = {}", spec.slices, spec.grid)))
                }
            },
            CheckName::Occupancy => match &oracle {
                None => out.push(skipped("occupancy", "occupation_probability", "no oracle for this system")),
                Some((spec, q)) => {
                    for n in 0..q.occupation.len().min(o.occupancy.indicators.len()) {
                        out.push(versus_oracle(
                            "occupancy",
                            "occupation_probability",
                            o.occupancy.probability(n),
                            &q.occupation[n],
                            format!("N = {n}, M = {}, grid = {}", spec.slices, spec.grid),
                        ));
                    }
                }
            },
            CheckName::Trace => match &o.trace {
                None => out.push(skipped("trace", "trace_normalization", "trace estimator disabled")),
                Some(t) => out.push(check_within("trace", "trace_normalization", t.estimate(), 1.0)),
            },
            CheckName::Compatibility => match &o.compatibility {
                None => out.push(skipped("compatibility", "kernel_compatibility", "no compat_inner box")),
                Some(c) => {
                    for (i, (_, _, diff)) in c.estimates().into_iter().enumerate() {
                        out.push(check_within("compatibility", "kernel_compatibility", diff, 0.0).with_note(format!("pair {i}")));
                    }
                }
            },
            CheckName::KernelBound => {
                let mut any = false;
                if let Some(k) = &o.kernels {
                    let b = bound_constants(&p.potential, p.z, p.beta, p.dim(), k.inner.half_side())?;
                    out.extend(validate_kernel_bounds(&k.estimates(), &b));
                    any = true;
                }
                if let Some(c) = &o.compatibility {
                    let b = bound_constants(&p.potential, p.z, p.beta, p.dim(), c.inner.half_side())?;
                    let ests: Vec<KernelEstimate> = c
                        .pairs
                        .iter()
                        .zip(c.estimates())
                        .flat_map(|(pair, (m, d, _))| {
                            [m, d].map(|e| KernelEstimate { x0: pair.x0.clone(), y0: pair.y0.clone(), value: e.value, stderr: e.stderr })
                        })
                        .collect();
                    out.extend(validate_kernel_bounds(&ests, &b));
                    any = true;
                }
                if !any {
                    out.push(skipped("kernel_bound", "uniform_kernel_bound", "no kernel estimates"));
                }
            }
            CheckName::KernelSymmetry => {
                let mut any = false;
                if let Some(k) = &o.kernels {
                    let est = k.estimates();
                    for i in 0..k.pairs.len() {
                        for j in i + 1..k.pairs.len() {
                            if k.pairs[i].x0 == k.pairs[j].y0 && k.pairs[i].y0 == k.pairs[j].x0 {
                                let a = Estimate { value: est[i].value, stderr: est[i].stderr };
                                let b = Estimate { value: est[j].value, stderr: est[j].stderr };
                                let sigma = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
                                let passed = (a.value - b.value).abs() <= 3.0 * sigma;
                                out.push(
                                    CheckRecord::new("kernel_symmetry", "kernel_symmetry", a.value, b.value, sigma, passed)
                                        .with_note(format!("pairs {i} and {j}")),
                                );
                                any = true;
                            }
                        }
                    }
                }
                if !any {
                    out.push(skipped("kernel_symmetry", "kernel_symmetry", "no mirrored kernel pairs"));
                }
            }
            CheckName::Ruelle => match &o.ruelle {
                None => out.push(skipped("ruelle_bound", "moment_function_bound", "no ruelle_points")),
                Some(_) if !consts.stable => {
                    eprintln!("warning: rho_bar = {} >= 1, moment bound not applicable", consts.rho_bar);
                    out.push(skipped("ruelle_bound", "moment_function_bound", "rho_bar >= 1, bound diverges"));
                }
                Some(ru) => out.extend(validate_ruelle(ru, p.z, consts.rho_bar)),
            },
            CheckName::EnergyFloor => {
                let mut f = r.stats.floor;
                f.merge(&o.floor());
                out.push(
                    CheckRecord::new("energy_floor", "energy_lower_bound", f.violations as f64, 0.0, 0.0, f.violations == 0)
                        .with_note(format!("{} energies checked", f.checked)),
                );
            }
            CheckName::Invariants => {
                let l = &o.legality;
                let cap = p.occupancy_cap();
                let passed = l.illegal == 0 && l.over_cap == 0 && r.cache_error.is_none();
                let mut note = format!("{} samples, max loops {} (cap {cap})", l.checked, l.max_loops);
                if let Some(e) = &r.cache_error {
                    note.push_str(&format!("; {e}"));
                }
                out.push(CheckRecord::new("invariants", "state_legality", l.illegal as f64, 0.0, 0.0, passed).with_note(note));
            }
            CheckName::Density => match &o.density {
                None => out.push(skipped("density", "bulk_translation_diagnostic", "density cells disabled")),
                Some(d) if d.cells_per_axis < 2 => {
                    out.push(skipped("density", "bulk_translation_diagnostic", "need at least 2 cells per axis"))
                }
                Some(d) => {
                    let (a, b) = central_neighbours(d);
                    let est = d.estimates();
                    let sigma = (est[a].stderr.powi(2) + est[b].stderr.powi(2)).sqrt();
                    let passed = (est[a].value - est[b].value).abs() <= 3.0 * sigma;
                    out.push(
                        CheckRecord::new("density", "bulk_translation_diagnostic", est[a].value, est[b].value, sigma, passed)
                            .with_note("finite-volume diagnostic; the translation statement concerns infinite-volume states"),
                    );
                }
            },
        }
    }
    Ok(out)
}

/// The two cells straddling the box centre along the first axis.
pub fn central_neighbours(d: &DensityObserver) -> (usize, usize) {
    let n = d.cells_per_axis;
    let mid = n / 2;
    // axis 0 varies fastest in the flat index
    let base: usize = (1..d.region.dim()).map(|a| mid * n.pow(a as u32)).sum();
    (base + mid - 1, base + mid)
}

#[derive(Clone, Debug)]
pub struct ValidationOutcome {
    pub run: RunResult,
    pub checks: Vec<CheckRecord>,
}

impl ValidationOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// `validate`: runs the chains, then the selected checks; writes `checks.*`.
pub fn cmd_validate(config: &FsPath, opts: &RunOptions) -> Result<ValidationOutcome> {
    let (cfg, base) = RunConfig::load(config)?;
    let run = execute(&cfg, &base, opts)?;
    let checks = build_checks(&cfg, &run)?;
    write_rows(&run.out_dir, "checks", &cfg, &checks)?;
    Ok(ValidationOutcome { run, checks })
}

/// One line of the side-by-side sampler and oracle table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub quantity: String,
    pub label: String,
    pub mc: f64,
    pub sigma: f64,
    pub oracle: f64,
    pub oracle_error: f64,
    pub z_score: f64,
    pub passed: bool,
    pub slices: usize,
    pub grid: usize,
}

impl ComparisonRow {
    fn new(quantity: &str, label: impl Into<String>, mc: Estimate, o: &OracleValue, spec: &QuadratureSpec) -> Self {
        let sigma = (mc.stderr.powi(2) + o.error.powi(2)).sqrt();
        let z = (mc.value - o.value) / sigma;
        Self {
            quantity: quantity.into(),
            label: label.into(),
            mc: mc.value,
            sigma: mc.stderr,
            oracle: o.value,
            oracle_error: o.error,
            z_score: z,
            passed: z.abs() <= 3.0,
            slices: spec.slices,
            grid: spec.grid,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ComparisonOutcome {
    pub run: RunResult,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonOutcome {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }
}

enum Pending {
    Kernel(usize, OracleValue),
    Direct(usize, OracleValue),
}

/// `oracle-compare`: evaluates the oracle first (failing fast on caps), then
/// runs the sampler and tabulates both.
pub fn cmd_oracle_compare(config: &FsPath, opts: &RunOptions) -> Result<ComparisonOutcome> {
    let (cfg, base) = RunConfig::load(config)?;
    let params = cfg.params(&base)?;
    let spec = QuadratureSpec::for_params(&params, cfg.validate.oracle_grid);
    spec.validate()?;
    let q = quad_partition(&params, &spec)?;
    let mut pending = Vec::new();
    let inner = cfg.inner()?;
    for (i, pair) in cfg.kernel_pairs()?.iter().enumerate() {
        let l0 = inner.as_ref().ok_or_else(|| Error::Config("kernel_pairs need estimators.inner".into()))?;
        pending.push(Pending::Kernel(i, quad_rdmk(&params, &spec, l0, &pair.x0, &pair.y0)?));
    }
    if let Some(l1) = cfg.compat_inner()? {
        for (i, pair) in cfg.compat_pairs()?.iter().enumerate() {
            pending.push(Pending::Direct(i, quad_rdmk(&params, &spec, &l1, &pair.x0, &pair.y0)?));
        }
    }
    let trace = match (&inner, cfg.estimators.trace) {
        (Some(l0), true) => Some(quad_trace(&params, &spec, l0)?),
        _ => None,
    };
    let run = execute(&cfg, &base, opts)?;
    let o = &run.observers;
    let mut rows = Vec::new();
    if let Ok(xi) = estimate_partition(&o.occupancy.indicators[0]) {
        rows.push(ComparisonRow::new("partition_function", "", xi, &q.xi, &spec));
    }
    for n in 0..q.occupation.len().min(o.occupancy.indicators.len()) {
        rows.push(ComparisonRow::new("occupation_probability", n.to_string(), o.occupancy.probability(n), &q.occupation[n], &spec));
    }
    if let (Some(t), Some(ot)) = (&o.trace, &trace) {
        rows.push(ComparisonRow::new("trace", "", t.estimate(), ot, &spec));
    }
    for p in &pending {
        match p {
            Pending::Kernel(i, ov) => {
                if let Some(k) = &o.kernels {
                    let e = &k.estimates()[*i];
                    rows.push(ComparisonRow::new("kernel", pair_label(&k.pairs[*i]), Estimate { value: e.value, stderr: e.stderr }, ov, &spec));
                }
            }
            Pending::Direct(i, ov) => {
                if let Some(c) = &o.compatibility {
                    let (m, d, _) = c.estimates()[*i];
                    rows.push(ComparisonRow::new("compat_direct", pair_label(&c.pairs[*i]), d, ov, &spec));
                    rows.push(ComparisonRow::new("compat_marginal", pair_label(&c.pairs[*i]), m, ov, &spec));
                }
            }
        }
    }
    write_rows(&run.out_dir, "oracle_compare", &cfg, &rows)?;
    write_manifest(&run.out_dir, &cfg, run.chains, Some(q.grid))?;
    Ok(ComparisonOutcome { run, rows })
}

/// Plain-text table of comparison rows.
pub fn format_comparison(rows: &[ComparisonRow]) -> String {
    let mut s = format!(
        "{:<24} {:<28} {:>12} {:>10} {:>12} {:>10} {:>8}  M grid\n",
        "quantity", "label", "mc", "sigma", "oracle", "oracle_err", "z"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<24} {:<28} {:>12.6} {:>10.2e} {:>12.6} {:>10.2e} {:>8.2}  {} {}\n",
            r.quantity, r.label, r.mc, r.sigma, r.oracle, r.oracle_error, r.z_score, r.slices, r.grid
        ));
    }
    s
}

/// Plain-text table of check records.
pub fn format_checks(checks: &[CheckRecord]) -> String {
    let mut s = String::new();
    for c in checks {
        s.push_str(&format!(
            "{} {:<16} {:<30} est {:>12.6} target {:>12.6} se {:>10.2e} {}\n",
            if c.passed { "PASS" } else { "FAIL" },
            c.check,
            c.tag,
            c.estimate,
            c.target,
            c.stderr,
            c.note
        ));
    }
    s
}

/// Hash of a report file, for determinism checks.
pub fn file_sha256(path: &FsPath) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}
