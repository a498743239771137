//! Experiment harness: constraint-family selection, parameter sweeps over
//! horizon/halftime factors, replication management, KPI computation, and
//! CSV/JSON result emission.
//!
//! Replications and sweep cells are independent runs with derived seeds;
//! with the `parallel` feature they execute on a rayon pool capped by the
//! `DISPATCH_THREADS` environment variable, falling back to a sequential
//! loop otherwise. Row order is sorted before emission either way, so
//! output files are byte-identical across thread counts.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::baselines::{FastHcPolicy, HeuristicConfig};
use crate::constraints::ConstraintSpec;
use crate::model::{ActivityType, MineConfig, Scenario};
use crate::objective::{objective_score, DiscountSpec, ErrorFunctionSpec};
use crate::planner::{
    run_receding_horizon, DecisionStat, MctsPolicy, RunResult, SearchConfig,
};
use crate::sim::{activity_index, DecisionLog, SimState, TraceRow, TruckPhase};

/// Which operational-constraint family a run activates; the harness runs one
/// family at a time, with capacity and ratio forming one combined family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintFamily {
    None,
    Battery,
    Tyre,
    CapacityRatio,
}

impl ConstraintFamily {
    pub fn label(self) -> &'static str {
        match self {
            ConstraintFamily::None => "none",
            ConstraintFamily::Battery => "battery",
            ConstraintFamily::Tyre => "tyre",
            ConstraintFamily::CapacityRatio => "capacity-ratio",
        }
    }

    /// Default longest-duration-to-observe-reward, seconds.
    pub fn default_d_r(self) -> f64 {
        match self {
            ConstraintFamily::None => 3600.0,
            ConstraintFamily::Battery => 7.0 * 3600.0,
            ConstraintFamily::Tyre => 4.0 * 3600.0,
            ConstraintFamily::CapacityRatio => 3600.0,
        }
    }

    /// Keeps only the scenario's constraint blocks belonging to the family.
    pub fn filter(self, specs: &[ConstraintSpec]) -> Vec<ConstraintSpec> {
        specs
            .iter()
            .filter(|s| match self {
                ConstraintFamily::None => false,
                ConstraintFamily::Battery => matches!(s, ConstraintSpec::Battery(_)),
                ConstraintFamily::Tyre => matches!(s, ConstraintSpec::Tyre(_)),
                ConstraintFamily::CapacityRatio => {
                    matches!(s, ConstraintSpec::Capacity(_) | ConstraintSpec::Ratio(_))
                }
            })
            .cloned()
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlannerKind {
    FastCon,
    FastHc,
}

impl PlannerKind {
    pub fn label(self) -> &'static str {
        match self {
            PlannerKind::FastCon => "fast-con",
            PlannerKind::FastHc => "fast-hc",
        }
    }
}

/// FAST-HC's internal planner is tuned with no constraints: these factors
/// over d_r = 1 h sit inside the unconstrained tuning range.
pub const FAST_HC_F_HZ: f64 = 1.6;
pub const FAST_HC_F_HF: f64 = 1.0;
pub const FAST_HC_D_R: f64 = 3600.0;

#[derive(Clone, Debug)]
pub struct SweepSpec {
    /// Longest duration to observe reward, seconds.
    pub d_r: f64,
    pub f_hz: Vec<f64>,
    pub f_hf: Vec<f64>,
    pub replications: u32,
    pub base_seed: u64,
    /// Run length, seconds.
    pub duration: f64,
    pub iterations: u32,
    /// Reward discretization step, seconds.
    pub dt: f64,
    /// Scale on the UCB exploration constant.
    pub exploration_scale: f64,
}

impl SweepSpec {
    pub fn new(family: ConstraintFamily) -> Self {
        SweepSpec {
            d_r: family.default_d_r(),
            f_hz: vec![1.0],
            f_hf: vec![1.0],
            replications: 15,
            base_seed: 1,
            duration: 24.0 * 3600.0,
            iterations: 10_000,
            dt: DiscountSpec::DEFAULT_DT,
            exploration_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: &str| Err(ExperimentError::InvalidSweep(msg.to_string()));
        if !(self.d_r > 0.0) {
            return bad("d_r must be positive");
        }
        if self.f_hz.is_empty() || self.f_hf.is_empty() {
            return bad("factor lists must not be empty");
        }
        if self.f_hz.iter().chain(&self.f_hf).any(|f| !(*f > 0.0)) {
            return bad("all horizon/halftime factors must be positive");
        }
        if self.replications < 1 {
            return bad("replications must be at least 1");
        }
        if !(self.duration > 0.0) {
            return bad("duration must be positive");
        }
        if self.iterations == 0 {
            return bad("iterations must be positive");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        Ok(())
    }
}

/// Per-run key performance indicators.
#[derive(Clone, Debug)]
pub struct KpiRecord {
    pub family: &'static str,
    pub planner: &'static str,
    pub f_hz: f64,
    pub f_hf: f64,
    pub replication: u32,
    pub seed: u64,
    pub score: f64,
    pub material_moved: f64,
    /// Loading + unloading + transiting, fleet seconds.
    pub operational_time: f64,
    pub queuing_time: f64,
    pub charging_time: f64,
    pub parking_time: f64,
    pub idle_time: f64,
    pub hot_tyre_time: f64,
    pub battery_violations: u32,
    /// Crusher-level downcrossings of V_min.
    pub bin_below_min_events: u32,
    /// Trucks frozen by unloading into a starved crusher.
    pub capacity_freezes: u32,
    pub tyre_hard_crossings: u32,
    pub violation_delay_time: f64,
    pub decisions: u32,
    pub mean_decision_wall_s: f64,
    pub max_decision_wall_s: f64,
}

impl KpiRecord {
    pub const CSV_HEADER: &'static str = "family,planner,f_hz,f_hf,replication,seed,score,material_moved,operational_time,queuing_time,charging_time,parking_time,idle_time,hot_tyre_time,battery_violations,bin_below_min_events,capacity_freezes,tyre_hard_crossings,violation_delay_time,decisions,mean_decision_wall_s,max_decision_wall_s";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.family,
            self.planner,
            self.f_hz,
            self.f_hf,
            self.replication,
            self.seed,
            self.score,
            self.material_moved,
            self.operational_time,
            self.queuing_time,
            self.charging_time,
            self.parking_time,
            self.idle_time,
            self.hot_tyre_time,
            self.battery_violations,
            self.bin_below_min_events,
            self.capacity_freezes,
            self.tyre_hard_crossings,
            self.violation_delay_time,
            self.decisions,
            self.mean_decision_wall_s,
            self.max_decision_wall_s,
        )
    }

    fn metric(&self, name: &str) -> f64 {
        match name {
            "score" => self.score,
            "material_moved" => self.material_moved,
            "operational_time" => self.operational_time,
            "queuing_time" => self.queuing_time,
            "charging_time" => self.charging_time,
            "parking_time" => self.parking_time,
            "idle_time" => self.idle_time,
            "hot_tyre_time" => self.hot_tyre_time,
            "battery_violations" => self.battery_violations as f64,
            "bin_below_min_events" => self.bin_below_min_events as f64,
            "capacity_freezes" => self.capacity_freezes as f64,
            "tyre_hard_crossings" => self.tyre_hard_crossings as f64,
            "violation_delay_time" => self.violation_delay_time,
            "mean_decision_wall_s" => self.mean_decision_wall_s,
            _ => f64::NAN,
        }
    }
}

pub const KPI_METRICS: [&str; 14] = [
    "score",
    "material_moved",
    "operational_time",
    "queuing_time",
    "charging_time",
    "parking_time",
    "idle_time",
    "hot_tyre_time",
    "battery_violations",
    "bin_below_min_events",
    "capacity_freezes",
    "tyre_hard_crossings",
    "violation_delay_time",
    "mean_decision_wall_s",
];

#[derive(Debug)]
pub struct RunOutcome {
    pub kpi: KpiRecord,
    pub log: DecisionLog,
    pub trace: Option<Vec<TraceRow>>,
    pub search_stats: Option<Vec<serde_json::Value>>,
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("scenario failed validation:\n{0}")]
    Validation(crate::model::ValidationReport),
    #[error(transparent)]
    Baseline(#[from] crate::baselines::BaselineError),
    #[error(transparent)]
    Plan(#[from] crate::planner::PlanError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Deterministic per-run seed derivation.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn run_seed(base: u64, hz_idx: usize, hf_idx: usize, replication: u32) -> u64 {
    splitmix64(splitmix64(splitmix64(base ^ hz_idx as u64) ^ (hf_idx as u64) << 20) ^ replication as u64)
}

#[derive(Clone)]
struct RunJob {
    live: Arc<Scenario>,
    family: ConstraintFamily,
    planner: PlannerKind,
    heuristics: HeuristicConfig,
    f_hz: f64,
    f_hf: f64,
    replication: u32,
    seed: u64,
    sweep_d_r: f64,
    duration: f64,
    iterations: u32,
    dt: f64,
    exploration_scale: f64,
    want_trace: bool,
    want_search_stats: bool,
}

fn execute(job: &RunJob) -> Result<RunOutcome, ExperimentError> {
    let mut state = SimState::new(Arc::clone(&job.live));
    if job.want_trace {
        state.trace = Some(Vec::new());
    }
    if job.planner == PlannerKind::FastHc && job.live.has_ratio_constraint() {
        state.buffer_guard = true;
    }

    let result = match job.planner {
        PlannerKind::FastCon => {
            let discount = DiscountSpec::from_factors(job.sweep_d_r, job.f_hz, job.f_hf, job.dt);
            let mut config = SearchConfig::new(discount).with_iterations(job.iterations);
            config.exploration_scale = job.exploration_scale;
            let mut policy = MctsPolicy::new(config, job.seed);
            run_receding_horizon(state, job.duration, &mut policy)?
        }
        PlannerKind::FastHc => {
            let discount = DiscountSpec::from_factors(FAST_HC_D_R, FAST_HC_F_HZ, FAST_HC_F_HF, job.dt);
            let mut config = SearchConfig::new(discount).with_iterations(job.iterations);
            config.exploration_scale = job.exploration_scale;
            let mut policy = FastHcPolicy::new(&job.live, config, &job.heuristics, job.seed)?;
            run_receding_horizon(state, job.duration, &mut policy)?
        }
    };

    let kpi = compute_kpis(
        &result,
        job.duration,
        job.family,
        job.planner,
        job.f_hz,
        job.f_hf,
        job.replication,
        job.seed,
    );
    let search_stats = job.want_search_stats.then(|| {
        result
            .decisions
            .iter()
            .map(|d| decision_stat_json(d, &job.live))
            .collect()
    });
    let trace = result.state.trace.clone();
    Ok(RunOutcome {
        kpi,
        log: result.state.decision_log.clone(),
        trace,
        search_stats,
    })
}

fn decision_stat_json(stat: &DecisionStat, scenario: &Scenario) -> serde_json::Value {
    serde_json::json!({
        "decision_time": stat.time,
        "truck": scenario.trucks[stat.truck.index()].id,
        "chosen_action": stat.stats.chosen.label(scenario),
        "root_children": stat.stats.root_children.iter().map(|c| serde_json::json!({
            "action": c.action.label(scenario),
            "visits": c.visits,
            "mean": c.mean,
        })).collect::<Vec<_>>(),
        "wall_time_ms": stat.stats.wall_time_ms,
    })
}

/// Aggregates a finished run into its KPI record. Durations count the
/// portion of in-flight activities inside `[0, duration]`, so the
/// components plus idle close to fleet-hours.
#[allow(clippy::too_many_arguments)]
pub fn compute_kpis(
    result: &RunResult,
    duration: f64,
    family: ConstraintFamily,
    planner: PlannerKind,
    f_hz: f64,
    f_hf: f64,
    replication: u32,
    seed: u64,
) -> KpiRecord {
    let state = &result.state;
    let scenario = state.scenario();
    let n_trucks = state.trucks.len();

    let mut by_type = vec![0.0f64; 6];
    for truck in 0..n_trucks {
        for (i, secs) in state.stats.duration_by_type[truck].iter().enumerate() {
            by_type[i] += secs;
        }
    }
    // In-flight partials at the cutoff.
    for truck in &state.trucks {
        match truck.phase {
            TruckPhase::Busy => {
                let elapsed = (duration - truck.activity_start).max(0.0);
                if let Some(svc) = &truck.service {
                    let queue_part = elapsed.min(svc.extra_wait);
                    by_type[activity_index(ActivityType::Queue)] += queue_part;
                    by_type[activity_index(truck.activity)] += elapsed - queue_part;
                } else {
                    by_type[activity_index(truck.activity)] += elapsed;
                }
            }
            TruckPhase::Waiting => {
                by_type[activity_index(ActivityType::Queue)] += (duration - truck.activity_start).max(0.0);
            }
            TruckPhase::Idle | TruckPhase::Frozen => {}
        }
    }

    let operational = by_type[activity_index(ActivityType::Transit)]
        + by_type[activity_index(ActivityType::Load)]
        + by_type[activity_index(ActivityType::Unload)];
    let queuing = by_type[activity_index(ActivityType::Queue)];
    let charging = by_type[activity_index(ActivityType::Charge)];
    let parking = by_type[activity_index(ActivityType::Park)];
    let fleet_seconds = n_trucks as f64 * duration;
    let idle = fleet_seconds - operational - queuing - charging - parking;

    let score = objective_score(
        &state.flow_log,
        &scenario.tasks,
        duration,
        &ErrorFunctionSpec::default(),
    );
    let material: f64 = state.flow_log.iter().map(|e| e.tonnes).sum();
    let wall: Vec<f64> = result
        .decisions
        .iter()
        .map(|d| d.stats.wall_time_ms / 1e3)
        .collect();
    let mean_wall = if wall.is_empty() {
        0.0
    } else {
        wall.iter().sum::<f64>() / wall.len() as f64
    };
    let max_wall = wall.iter().copied().fold(0.0, f64::max);

    KpiRecord {
        family: family.label(),
        planner: planner.label(),
        f_hz,
        f_hf,
        replication,
        seed,
        score,
        material_moved: material,
        operational_time: operational,
        queuing_time: queuing,
        charging_time: charging,
        parking_time: parking,
        idle_time: idle,
        hot_tyre_time: state.stats.hot_tyre_time,
        battery_violations: state.stats.battery_violations,
        bin_below_min_events: state.bins.iter().map(|b| b.below_min_events).sum(),
        capacity_freezes: state.stats.capacity_violations,
        tyre_hard_crossings: state.stats.tyre_hard_crossings,
        violation_delay_time: state.stats.finite_delay_total,
        decisions: result.decisions.len() as u32,
        mean_decision_wall_s: mean_wall,
        max_decision_wall_s: max_wall,
    }
}

/// Runs the full (f_hz x f_hf x replication) grid for one constraint family
/// and planner. Rows come back sorted by (f_hz, f_hf, replication).
pub fn run_batch(
    base: &MineConfig,
    family: ConstraintFamily,
    planner: PlannerKind,
    sweep: &SweepSpec,
    heuristics: &HeuristicConfig,
    want_trace: bool,
    want_search_stats: bool,
) -> Result<Vec<RunOutcome>, ExperimentError> {
    sweep.validate()?;
    let mut config = base.clone();
    config.constraint_specs = family.filter(&base.constraint_specs);
    let live = Scenario::compile(&config).map_err(ExperimentError::Validation)?;

    let mut jobs = Vec::new();
    for (hz_idx, &f_hz) in sweep.f_hz.iter().enumerate() {
        for (hf_idx, &f_hf) in sweep.f_hf.iter().enumerate() {
            for replication in 0..sweep.replications {
                jobs.push(RunJob {
                    live: Arc::clone(&live),
                    family,
                    planner,
                    heuristics: heuristics.clone(),
                    f_hz,
                    f_hf,
                    replication,
                    seed: run_seed(sweep.base_seed, hz_idx, hf_idx, replication),
                    sweep_d_r: sweep.d_r,
                    duration: sweep.duration,
                    iterations: sweep.iterations,
                    dt: sweep.dt,
                    exploration_scale: sweep.exploration_scale,
                    want_trace,
                    want_search_stats,
                });
            }
        }
    }
    let mut outcomes = run_jobs(&jobs)?;
    outcomes.sort_by(|a, b| {
        a.kpi
            .f_hz
            .total_cmp(&b.kpi.f_hz)
            .then(a.kpi.f_hf.total_cmp(&b.kpi.f_hf))
            .then(a.kpi.replication.cmp(&b.kpi.replication))
    });
    Ok(outcomes)
}

#[cfg(feature = "parallel")]
fn run_jobs(jobs: &[RunJob]) -> Result<Vec<RunOutcome>, ExperimentError> {
    use rayon::prelude::*;
    let pool = thread_pool()?;
    pool.install(|| jobs.par_iter().map(execute).collect())
}

#[cfg(not(feature = "parallel"))]
fn run_jobs(jobs: &[RunJob]) -> Result<Vec<RunOutcome>, ExperimentError> {
    run_jobs_sequential(jobs)
}

/// Sequential execution path; also the reference side of the benchmark
/// comparing against the rayon pool.
pub fn run_batch_sequential(
    base: &MineConfig,
    family: ConstraintFamily,
    planner: PlannerKind,
    sweep: &SweepSpec,
    heuristics: &HeuristicConfig,
) -> Result<Vec<RunOutcome>, ExperimentError> {
    sweep.validate()?;
    let mut config = base.clone();
    config.constraint_specs = family.filter(&base.constraint_specs);
    let live = Scenario::compile(&config).map_err(ExperimentError::Validation)?;
    let mut jobs = Vec::new();
    for (hz_idx, &f_hz) in sweep.f_hz.iter().enumerate() {
        for (hf_idx, &f_hf) in sweep.f_hf.iter().enumerate() {
            for replication in 0..sweep.replications {
                jobs.push(RunJob {
                    live: Arc::clone(&live),
                    family,
                    planner,
                    heuristics: heuristics.clone(),
                    f_hz,
                    f_hf,
                    replication,
                    seed: run_seed(sweep.base_seed, hz_idx, hf_idx, replication),
                    sweep_d_r: sweep.d_r,
                    duration: sweep.duration,
                    iterations: sweep.iterations,
                    dt: sweep.dt,
                    exploration_scale: sweep.exploration_scale,
                    want_trace: false,
                    want_search_stats: false,
                });
            }
        }
    }
    run_jobs_sequential(&jobs)
}

fn run_jobs_sequential(jobs: &[RunJob]) -> Result<Vec<RunOutcome>, ExperimentError> {
    jobs.iter().map(execute).collect()
}

#[cfg(feature = "parallel")]
fn thread_pool() -> Result<rayon::ThreadPool, ExperimentError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(cap) = std::env::var("DISPATCH_THREADS") {
        if let Ok(n) = cap.trim().parse::<usize>() {
            if n >= 1 {
                builder = builder.num_threads(n);
            }
        }
    }
    builder
        .build()
        .map_err(|e| ExperimentError::InvalidSweep(format!("thread pool: {e}")))
}

// ---------------------------------------------------------------------------
// Result emission

/// Writes runs.csv plus one grid CSV per KPI with columns
/// (f_hz, f_hf, mean, stddev, n), rows in stable sorted order.
pub fn emit_plot_data(outcomes: &[RunOutcome], out_dir: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(out_dir)?;
    let mut runs = std::fs::File::create(out_dir.join("runs.csv"))?;
    writeln!(runs, "{}", KpiRecord::CSV_HEADER)?;
    for outcome in outcomes {
        writeln!(runs, "{}", outcome.kpi.csv_row())?;
    }

    // Cells in first-seen order; outcomes arrive sorted.
    let mut cells: Vec<(f64, f64)> = Vec::new();
    for o in outcomes {
        let key = (o.kpi.f_hz, o.kpi.f_hf);
        if !cells.contains(&key) {
            cells.push(key);
        }
    }
    for metric in KPI_METRICS {
        let mut file = std::fs::File::create(out_dir.join(format!("kpi_{metric}.csv")))?;
        writeln!(file, "f_hz,f_hf,mean,stddev,n")?;
        for &(f_hz, f_hf) in &cells {
            let values: Vec<f64> = outcomes
                .iter()
                .filter(|o| o.kpi.f_hz == f_hz && o.kpi.f_hf == f_hf)
                .map(|o| o.kpi.metric(metric))
                .collect();
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let stddev = if n > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            writeln!(file, "{f_hz},{f_hf},{mean},{stddev},{n}")?;
        }
    }
    Ok(())
}

/// Writes per-run trace CSVs and search-stat JSONL files when collected.
pub fn emit_run_artifacts(
    outcomes: &[RunOutcome],
    scenario: &Scenario,
    out_dir: &Path,
) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(out_dir)?;
    for outcome in outcomes {
        let tag = format!(
            "fhz{}_fhf{}_rep{}",
            outcome.kpi.f_hz, outcome.kpi.f_hf, outcome.kpi.replication
        );
        if let Some(trace) = &outcome.trace {
            let mut file = std::fs::File::create(out_dir.join(format!("trace_{tag}.csv")))?;
            writeln!(
                file,
                "time,truck,activity_type,location,duration,battery,tyre_temp,delivered_tonnes"
            )?;
            for row in trace {
                writeln!(
                    file,
                    "{},{},{},{},{},{},{},{}",
                    row.time,
                    scenario.trucks[row.truck.index()].id,
                    row.activity_type,
                    scenario.locations[row.location.index()].id,
                    row.duration,
                    row.battery,
                    row.tyre_temp,
                    row.delivered_tonnes
                )?;
            }
        }
        if let Some(stats) = &outcome.search_stats {
            let mut file =
                std::fs::File::create(out_dir.join(format!("search_stats_{tag}.jsonl")))?;
            for value in stats {
                writeln!(file, "{value}")?;
            }
        }
    }
    Ok(())
}

/// End-to-end experiment: run the grid, then emit all result files into
/// `out_dir`.
#[allow(clippy::too_many_arguments)]
pub fn run_experiment(
    base: &MineConfig,
    family: ConstraintFamily,
    planner: PlannerKind,
    sweep: &SweepSpec,
    heuristics: &HeuristicConfig,
    want_trace: bool,
    want_search_stats: bool,
    out_dir: &Path,
) -> Result<Vec<RunOutcome>, ExperimentError> {
    let outcomes = run_batch(base, family, planner, sweep, heuristics, want_trace, want_search_stats)?;
    emit_plot_data(&outcomes, out_dir)?;
    if want_trace || want_search_stats {
        let mut config = base.clone();
        config.constraint_specs = family.filter(&base.constraint_specs);
        let scenario = Scenario::compile(&config).map_err(ExperimentError::Validation)?;
        emit_run_artifacts(&outcomes, &scenario, out_dir)?;
    }
    Ok(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::reference_scenario;

    fn quick_sweep() -> SweepSpec {
        SweepSpec {
            d_r: 3600.0,
            f_hz: vec![1.0],
            f_hf: vec![1.0],
            replications: 1,
            base_seed: 7,
            duration: 2.0 * 3600.0,
            iterations: 30,
            dt: 600.0,
            exploration_scale: 1.0,
        }
    }

    #[test]
    fn sweep_factor_arithmetic_matches_tuning_table() {
        // Battery: d_r = 7 h, f_hz = 1.5 puts the horizon at 10.5 h.
        let d = DiscountSpec::from_factors(ConstraintFamily::Battery.default_d_r(), 1.5, 1.0, 600.0);
        assert!((d.horizon - 10.5 * 3600.0).abs() < 1e-9);
        // Tyre: d_r = 4 h, f_hz = 1 gives a 4 h horizon.
        let d = DiscountSpec::from_factors(ConstraintFamily::Tyre.default_d_r(), 1.0, 1.0, 600.0);
        assert!((d.horizon - 4.0 * 3600.0).abs() < 1e-9);
    }

    #[test]
    fn default_replication_count_is_fifteen() {
        assert_eq!(SweepSpec::new(ConstraintFamily::Battery).replications, 15);
    }

    #[test]
    fn kpi_components_close_to_fleet_hours() {
        let outcomes = run_batch(
            &reference_scenario(),
            ConstraintFamily::None,
            PlannerKind::FastCon,
            &quick_sweep(),
            &HeuristicConfig::default(),
            false,
            false,
        )
        .unwrap();
        let kpi = &outcomes[0].kpi;
        let total = kpi.operational_time
            + kpi.queuing_time
            + kpi.charging_time
            + kpi.parking_time
            + kpi.idle_time;
        let fleet = 5.0 * quick_sweep().duration;
        assert!((total - fleet).abs() <= 5.0, "closure: {total} vs {fleet}");
        assert!(kpi.idle_time >= -5.0);
        assert!(kpi.material_moved > 0.0);
    }

    #[test]
    fn grid_covers_every_cell_and_is_sorted() {
        let mut sweep = quick_sweep();
        sweep.f_hz = vec![0.5, 1.0];
        sweep.f_hf = vec![0.5, 1.0];
        sweep.duration = 1800.0;
        sweep.iterations = 10;
        let outcomes = run_batch(
            &reference_scenario(),
            ConstraintFamily::None,
            PlannerKind::FastCon,
            &sweep,
            &HeuristicConfig::default(),
            false,
            false,
        )
        .unwrap();
        assert_eq!(outcomes.len(), 4);
        let cells: Vec<(f64, f64)> = outcomes.iter().map(|o| (o.kpi.f_hz, o.kpi.f_hf)).collect();
        assert_eq!(cells, vec![(0.5, 0.5), (0.5, 1.0), (1.0, 0.5), (1.0, 1.0)]);
    }

    #[test]
    fn emit_plot_data_writes_stable_grid_files() {
        let dir = std::env::temp_dir().join(format!("dispatch_emit_{}", std::process::id()));
        let outcomes = run_batch(
            &reference_scenario(),
            ConstraintFamily::None,
            PlannerKind::FastCon,
            &quick_sweep(),
            &HeuristicConfig::default(),
            false,
            false,
        )
        .unwrap();
        emit_plot_data(&outcomes, &dir).unwrap();
        let score = std::fs::read_to_string(dir.join("kpi_score.csv")).unwrap();
        let mut lines = score.lines();
        assert_eq!(lines.next(), Some("f_hz,f_hf,mean,stddev,n"));
        let row = lines.next().unwrap();
        assert!(row.starts_with("1,1,"));
        assert!(row.ends_with(",1")); // single replication -> stddev 0, n 1
        let parts: Vec<&str> = row.split(',').collect();
        assert_eq!(parts[3], "0"); // stddev of one replication
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn seeds_are_deterministic_and_distinct() {
        let a = run_seed(1, 0, 0, 0);
        assert_eq!(a, run_seed(1, 0, 0, 0));
        let mut seen = std::collections::HashSet::new();
        for hz in 0..4 {
            for hf in 0..4 {
                for rep in 0..15 {
                    assert!(seen.insert(run_seed(1, hz, hf, rep)));
                }
            }
        }
    }

    #[test]
    fn invalid_sweep_is_rejected_before_running() {
        let mut sweep = quick_sweep();
        sweep.replications = 0;
        let err = run_batch(
            &reference_scenario(),
            ConstraintFamily::None,
            PlannerKind::FastCon,
            &sweep,
            &HeuristicConfig::default(),
            false,
            false,
        )
        .unwrap_err();
        assert!(matches!(err, ExperimentError::InvalidSweep(_)));
    }
}
