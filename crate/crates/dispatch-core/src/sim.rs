//! Deterministic state-transition and interaction model.
//!
//! The engine expands dispatch actions into activity sequences, resolves
//! queuing contention with single-server FIFO stations, advances crusher
//! dynamics, and identifies the next decision point. Trucks are the only
//! event sources: every queue release coincides with some truck's service
//! completion, so the event loop is a scan over per-truck completion times,
//! ordered by (time, truck id).
//!
//! `SimState` is a value: cloning it and mutating the clone never touches
//! the original, which is what MCTS rollouts rely on.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::constraints::{
    charge_duration, crusher_advance, ratio_queue_delay, tyre_violation_delay,
    update_battery, update_tyre_temperature, ViolationDelay,
};
use crate::model::{
    ActivityType, LocId, MaterialId, Scenario, TaskId, TruckId, AMBIENT_TEMP, SECONDS_PER_HOUR,
};

/// Hold slice length for the ratio buffer-queue heuristic, seconds.
pub const BUFFER_RECHECK_INTERVAL: f64 = 180.0;

/// A dispatch decision: a haulage task or one of the constraint actions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Task(TaskId),
    Charge,
    Park,
}

impl Action {
    /// Stable ordering index used for deterministic tie-breaks.
    pub fn order_index(&self) -> usize {
        match self {
            Action::Task(t) => t.index(),
            Action::Charge => usize::MAX - 1,
            Action::Park => usize::MAX,
        }
    }

    pub fn label(&self, scenario: &Scenario) -> String {
        match self {
            Action::Task(t) => scenario.tasks[t.index()].id.clone(),
            Action::Charge => "charge".to_string(),
            Action::Park => "park".to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ServiceKind {
    Load { task: TaskId },
    Unload { task: TaskId },
    Charge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum PlannedStep {
    Transit { to: LocId },
    Enqueue { station: LocId, service: ServiceKind },
    Park,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TruckPhase {
    /// Waiting for a dispatch decision.
    Idle,
    /// Executing an activity with a known completion time.
    Busy,
    /// In a station queue; completion time unknown until a server frees.
    Waiting,
    /// Hard constraint violated; unavailable for the rest of the run.
    Frozen,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct InFlightService {
    pub(crate) kind: ServiceKind,
    /// Ratio violation delay plus bin room wait, attributed to queue time.
    pub(crate) extra_wait: f64,
    pub(crate) service_duration: f64,
}

/// One row of the optional event trace export.
#[derive(Clone, Debug)]
pub struct TraceRow {
    pub time: f64,
    pub truck: TruckId,
    pub activity_type: ActivityType,
    pub location: LocId,
    pub duration: f64,
    pub battery: f64,
    pub tyre_temp: f64,
    pub delivered_tonnes: f64,
}

#[derive(Clone, Debug)]
pub struct TruckState {
    pub location: LocId,
    pub activity: ActivityType,
    pub activity_location: LocId,
    pub activity_start: f64,
    /// Completion time; `f64::INFINITY` while waiting, idle or frozen.
    pub activity_end: f64,
    pub battery: f64,
    pub tyre: f64,
    pub load: Option<(MaterialId, f64)>,
    pub phase: TruckPhase,
    /// Last dispatched action; `None` before the first decision.
    pub current_action: Option<Action>,
    plan: VecDeque<PlannedStep>,
    pub(crate) service: Option<InFlightService>,
    decision: Option<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct StationState {
    pub queue: VecDeque<TruckId>,
    pub busy_servers: u32,
}

/// Crusher bin state: per-material volumes plus conservation counters.
#[derive(Clone, Debug)]
pub struct CrusherBin {
    pub volumes: Vec<f64>,
    /// Cumulative tonnes processed (drained) since the start of the run.
    pub processed: f64,
    /// Cumulative tonnes delivered into the bin.
    pub delivered: f64,
    pub last_update: f64,
    /// Count of level downcrossings of V_min.
    pub below_min_events: u32,
}

impl CrusherBin {
    pub fn total(&self) -> f64 {
        self.volumes.iter().sum()
    }
}

/// Append-only, time-ordered record of a completed delivery.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowLogEntry {
    pub time: f64,
    pub source: LocId,
    pub destination: LocId,
    pub material: MaterialId,
    pub tonnes: f64,
    pub truck: TruckId,
    pub task: TaskId,
}

/// One executed dispatch decision with its realized activity durations.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionRecord {
    pub time: f64,
    pub truck: TruckId,
    pub action: Action,
    /// Realized (wall-clock) durations in execution order.
    pub activities: Vec<(ActivityType, f64)>,
    /// Finite violation delay realized within this decision, seconds.
    pub delay: f64,
    /// A hard constraint froze the truck during this decision.
    pub froze: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DecisionLog {
    pub records: Vec<DecisionRecord>,
}

/// Cause of a hard-constraint freeze.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FreezeCause {
    Battery,
    Capacity,
}

/// Per-run accumulators backing the KPI report.
#[derive(Clone, Debug)]
pub struct RunStats {
    /// Seconds per activity type, indexed `[truck][activity]`.
    pub duration_by_type: Vec<[f64; 6]>,
    pub hot_tyre_time: f64,
    pub battery_violations: u32,
    pub capacity_violations: u32,
    pub tyre_hard_crossings: u32,
    pub finite_delay_total: f64,
    pub loaded_by_material: Vec<f64>,
    pub delivered_by_material: Vec<f64>,
    pub charge_decisions: u32,
    pub park_decisions: u32,
}

impl RunStats {
    fn new(n_trucks: usize, n_materials: usize) -> Self {
        RunStats {
            duration_by_type: vec![[0.0; 6]; n_trucks],
            hot_tyre_time: 0.0,
            battery_violations: 0,
            capacity_violations: 0,
            tyre_hard_crossings: 0,
            finite_delay_total: 0.0,
            loaded_by_material: vec![0.0; n_materials],
            delivered_by_material: vec![0.0; n_materials],
            charge_decisions: 0,
            park_decisions: 0,
        }
    }

    pub fn total_by_activity(&self, activity: ActivityType) -> f64 {
        let idx = activity_index(activity);
        self.duration_by_type.iter().map(|d| d[idx]).sum()
    }
}

pub fn activity_index(activity: ActivityType) -> usize {
    match activity {
        ActivityType::Transit => 0,
        ActivityType::Load => 1,
        ActivityType::Queue => 2,
        ActivityType::Unload => 3,
        ActivityType::Charge => 4,
        ActivityType::Park => 5,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("truck {0:?} is not at a decision point")]
    TruckNotIdle(TruckId),
    #[error("unknown task index {0:?}")]
    UnknownTask(TaskId),
    #[error("charge action but the scenario has no charging bay")]
    NoChargingBay,
    #[error("park action but the scenario has no parking bay")]
    NoParkingBay,
    #[error("no route for truck {truck:?} to location {to:?}")]
    Unroutable { truck: TruckId, to: LocId },
}

#[derive(Clone, Debug)]
pub struct SimState {
    scenario: Arc<Scenario>,
    pub clock: f64,
    pub trucks: Vec<TruckState>,
    pub stations: Vec<StationState>,
    pub bins: Vec<CrusherBin>,
    pub flow_log: Vec<FlowLogEntry>,
    /// Cumulative delivered tonnes matching each task's location pair.
    pub task_flow_cum: Vec<f64>,
    pub decision_log: DecisionLog,
    pub stats: RunStats,
    /// Ratio buffer-queue heuristic (FAST-HC): trucks whose load would break
    /// the low-proportion ratio hold off the crusher until the bin drains.
    pub buffer_guard: bool,
    /// Optional event trace; one row per closed activity segment.
    pub trace: Option<Vec<TraceRow>>,
    record_decisions: bool,
}

impl SimState {
    pub fn new(scenario: Arc<Scenario>) -> SimState {
        let trucks = scenario
            .trucks
            .iter()
            .map(|t| TruckState {
                location: t.start,
                activity: ActivityType::Park,
                activity_location: t.start,
                activity_start: 0.0,
                activity_end: f64::INFINITY,
                battery: t.initial_battery,
                tyre: t.initial_tyre_temp,
                load: None,
                phase: TruckPhase::Idle,
                current_action: None,
                plan: VecDeque::new(),
                service: None,
                decision: None,
            })
            .collect();
        let stations = scenario.locations.iter().map(|_| StationState::default()).collect();
        let bins = scenario
            .crushers
            .iter()
            .map(|c| {
                let total: f64 = c.initial_volumes.iter().sum();
                CrusherBin {
                    volumes: c.initial_volumes.clone(),
                    processed: 0.0,
                    delivered: 0.0,
                    last_update: 0.0,
                    below_min_events: u32::from(c.model.v_min > 0.0 && total <= c.model.v_min),
                }
            })
            .collect();
        let n_trucks = scenario.trucks.len();
        let n_tasks = scenario.tasks.len();
        let n_materials = scenario.materials.len();
        SimState {
            scenario,
            clock: 0.0,
            trucks,
            stations,
            bins,
            flow_log: Vec::new(),
            task_flow_cum: vec![0.0; n_tasks],
            decision_log: DecisionLog::default(),
            stats: RunStats::new(n_trucks, n_materials),
            buffer_guard: false,
            trace: None,
            record_decisions: true,
        }
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    /// Cheap clone for rollouts: history logs are dropped, cumulative flow
    /// baselines kept. The fork starts its own (empty) flow log at the
    /// current clock.
    pub fn fork(&self) -> SimState {
        SimState {
            scenario: Arc::clone(&self.scenario),
            clock: self.clock,
            trucks: self.trucks.clone(),
            stations: self.stations.clone(),
            bins: self.bins.clone(),
            flow_log: Vec::new(),
            task_flow_cum: self.task_flow_cum.clone(),
            decision_log: DecisionLog::default(),
            stats: self.stats.clone(),
            buffer_guard: self.buffer_guard,
            trace: None,
            record_decisions: false,
        }
    }

    // -----------------------------------------------------------------
    // Decision interface

    /// Advances the simulation to the next decision point: the earliest
    /// moment a truck finishes its activity sequence. Ties break to the
    /// lowest truck id. Returns `None` when no truck can ever decide again
    /// (all frozen).
    pub fn next_decision_point(&mut self) -> Option<(TruckId, f64)> {
        self.next_decision_point_before(f64::INFINITY)
    }

    /// Like [`Self::next_decision_point`], but never processes events past
    /// `t_end`: if no truck idles by then, the state settles at `t_end` and
    /// `None` is returned. Keeps run accounting exact at the cutoff.
    pub fn next_decision_point_before(&mut self, t_end: f64) -> Option<(TruckId, f64)> {
        loop {
            if let Some(idx) = self
                .trucks
                .iter()
                .position(|t| t.phase == TruckPhase::Idle)
            {
                return Some((TruckId(idx as u32), self.clock));
            }
            match self.next_event() {
                Some((time, truck)) if time <= t_end => {
                    self.step_stations(time);
                    self.process_completion(truck);
                }
                _ => {
                    if t_end.is_finite() {
                        self.step_stations(t_end);
                    }
                    return None;
                }
            }
        }
    }

    /// Expands a dispatch action into its activity sequence for an idle
    /// truck. A task enqueues transit-empty, queue, load, transit-loaded,
    /// queue, unload; charge and park route via their bays.
    pub fn apply_decision(&mut self, truck: TruckId, action: Action) -> Result<(), SimError> {
        let state = &self.trucks[truck.index()];
        if state.phase != TruckPhase::Idle {
            return Err(SimError::TruckNotIdle(truck));
        }
        let mut plan = VecDeque::with_capacity(4);
        match action {
            Action::Task(task_id) => {
                let task = self
                    .scenario
                    .tasks
                    .get(task_id.index())
                    .ok_or(SimError::UnknownTask(task_id))?;
                plan.push_back(PlannedStep::Transit { to: task.source });
                plan.push_back(PlannedStep::Enqueue {
                    station: task.source,
                    service: ServiceKind::Load { task: task_id },
                });
                plan.push_back(PlannedStep::Transit { to: task.destination });
                plan.push_back(PlannedStep::Enqueue {
                    station: task.destination,
                    service: ServiceKind::Unload { task: task_id },
                });
            }
            Action::Charge => {
                let bay = self.scenario.charging_bay.ok_or(SimError::NoChargingBay)?;
                plan.push_back(PlannedStep::Transit { to: bay });
                plan.push_back(PlannedStep::Enqueue {
                    station: bay,
                    service: ServiceKind::Charge,
                });
                self.stats.charge_decisions += 1;
            }
            Action::Park => {
                let bay = self.scenario.parking_bay.ok_or(SimError::NoParkingBay)?;
                plan.push_back(PlannedStep::Transit { to: bay });
                plan.push_back(PlannedStep::Park);
                self.stats.park_decisions += 1;
            }
        }
        if self.record_decisions {
            self.decision_log.records.push(DecisionRecord {
                time: self.clock,
                truck,
                action,
                activities: Vec::new(),
                delay: 0.0,
                froze: false,
            });
            self.trucks[truck.index()].decision = Some(self.decision_log.records.len() - 1);
        }
        self.trucks[truck.index()].current_action = Some(action);
        self.trucks[truck.index()].plan = plan;
        self.proceed_plan(truck);
        Ok(())
    }

    /// Takes a truck out of play without recording a violation. Used by
    /// lookahead projections to keep other trucks from needing decisions.
    pub fn suspend(&mut self, truck: TruckId) {
        let state = &mut self.trucks[truck.index()];
        if state.phase == TruckPhase::Idle {
            state.phase = TruckPhase::Frozen;
            state.plan.clear();
            state.activity_end = f64::INFINITY;
        }
    }

    /// Processes every event up to `t_end` and settles the clock there.
    pub fn advance_to(&mut self, t_end: f64) {
        while let Some((time, truck)) = self.next_event() {
            if time > t_end {
                break;
            }
            self.step_stations(time);
            self.process_completion(truck);
        }
        self.step_stations(t_end);
    }

    /// Advances crusher bins and the clock to `to_time` without touching
    /// truck activities. Bins drain at the effective processing rate held
    /// constant over the interval.
    pub fn step_stations(&mut self, to_time: f64) {
        // Settling at or before the current clock is a no-op, not a reversal.
        if to_time <= self.clock {
            return;
        }
        for (i, bin) in self.bins.iter_mut().enumerate() {
            let model = &self.scenario.crushers[i].model;
            let dt = to_time - bin.last_update;
            if dt <= 0.0 {
                continue;
            }
            let before = bin.volumes.iter().sum::<f64>();
            let drained = crusher_advance(&mut bin.volumes, dt, model);
            bin.processed += drained;
            bin.last_update = to_time;
            let after = before - drained;
            if model.v_min > 0.0 && before > model.v_min && after <= model.v_min {
                bin.below_min_events += 1;
            }
        }
        self.clock = to_time;
    }

    /// Expected duration of an activity for `truck` at `location`, quoted
    /// against the current schedule: transit uses shortest paths, services
    /// add the FIFO wait until a server frees, queue is that wait alone.
    pub fn activity_duration(&self, truck: TruckId, activity: ActivityType, location: LocId) -> f64 {
        match activity {
            ActivityType::Transit => self
                .scenario
                .transit_duration(self.trucks[truck.index()].location, location)
                .unwrap_or(f64::INFINITY),
            ActivityType::Queue => self.estimated_wait(location),
            ActivityType::Load => {
                self.estimated_wait(location) + self.scenario.load_duration(location, truck)
            }
            ActivityType::Unload => {
                self.estimated_wait(location) + self.scenario.unload_duration(location, truck)
            }
            ActivityType::Charge => {
                let b = self.trucks[truck.index()].battery;
                let charge = self
                    .scenario
                    .battery
                    .as_ref()
                    .map(|m| charge_duration(b, m))
                    .unwrap_or(0.0);
                self.estimated_wait(location) + self.scenario.charge_setup(location) + charge
            }
            ActivityType::Park => self.park_duration(truck),
        }
    }

    /// FIFO wait estimate for a new arrival at `station` right now.
    pub fn estimated_wait(&self, station: LocId) -> f64 {
        let servers = self.scenario.servers_at(station) as usize;
        let mut free_at: Vec<f64> = self
            .trucks
            .iter()
            .filter(|t| {
                t.phase == TruckPhase::Busy
                    && t.activity_location == station
                    && matches!(
                        t.activity,
                        ActivityType::Load | ActivityType::Unload | ActivityType::Charge
                    )
            })
            .map(|t| t.activity_end)
            .collect();
        while free_at.len() < servers {
            free_at.push(self.clock);
        }
        free_at.sort_by(f64::total_cmp);
        free_at.truncate(servers);
        for &queued in &self.stations[station.index()].queue {
            let dur = self.queued_service_duration(queued);
            let slot = free_at
                .iter_mut()
                .min_by(|a, b| f64::total_cmp(a, b))
                .expect("at least one server");
            *slot = slot.max(self.clock) + dur;
        }
        let earliest = free_at.iter().copied().fold(f64::INFINITY, f64::min);
        (earliest - self.clock).max(0.0)
    }

    fn queued_service_duration(&self, truck: TruckId) -> f64 {
        let state = &self.trucks[truck.index()];
        match state.plan.front() {
            Some(PlannedStep::Enqueue { station, service }) => match service {
                ServiceKind::Load { .. } => self.scenario.load_duration(*station, truck),
                ServiceKind::Unload { .. } => self.scenario.unload_duration(*station, truck),
                ServiceKind::Charge => {
                    let charge = self
                        .scenario
                        .battery
                        .as_ref()
                        .map(|m| charge_duration(state.battery, m))
                        .unwrap_or(0.0);
                    self.scenario.charge_setup(*station) + charge
                }
            },
            _ => 0.0,
        }
    }

    fn park_duration(&self, truck: TruckId) -> f64 {
        match &self.scenario.tyre {
            Some(model) => {
                let cooldown = crate::constraints::park_cooldown_duration(
                    self.trucks[truck.index()].tyre,
                    model.y_final,
                    model,
                )
                .unwrap_or(0.0);
                if cooldown > 0.0 {
                    cooldown
                } else {
                    self.scenario.interaction.park_break_duration
                }
            }
            None => self.scenario.interaction.park_break_duration,
        }
    }

    // -----------------------------------------------------------------
    // Event machinery

    fn next_event(&self) -> Option<(f64, TruckId)> {
        let mut best: Option<(f64, TruckId)> = None;
        for (i, truck) in self.trucks.iter().enumerate() {
            if truck.phase == TruckPhase::Busy {
                let candidate = (truck.activity_end, TruckId(i as u32));
                best = match best {
                    None => Some(candidate),
                    Some(current) if candidate.0 < current.0 => Some(candidate),
                    Some(current) => Some(current),
                };
            }
        }
        best
    }

    fn process_completion(&mut self, truck: TruckId) {
        let state = &self.trucks[truck.index()];
        debug_assert_eq!(state.phase, TruckPhase::Busy);
        let activity = state.activity;
        match activity {
            ActivityType::Transit => {
                let start = state.activity_start;
                let wall = state.activity_end - start;
                let to = state.activity_location;
                // Physical duration excludes the hot-tyre slowdown.
                let phys = self.transit_physical_duration(truck, wall);
                if self.close_segment(truck, ActivityType::Transit, wall, phys) {
                    return;
                }
                self.trucks[truck.index()].location = to;
                self.proceed_plan(truck);
            }
            ActivityType::Load | ActivityType::Unload | ActivityType::Charge => {
                self.complete_service(truck);
            }
            ActivityType::Park => {
                let wall = state.activity_end - state.activity_start;
                if self.close_segment(truck, ActivityType::Park, wall, wall) {
                    return;
                }
                self.proceed_plan(truck);
            }
            // A timed Queue completion is a buffer-guard hold expiring: the
            // plan still fronts the enqueue step, so the truck re-joins the
            // station queue and gets re-checked.
            ActivityType::Queue => {
                let wall = state.activity_end - state.activity_start;
                if self.close_segment(truck, ActivityType::Queue, wall, wall) {
                    return;
                }
                self.proceed_plan(truck);
            }
        }
    }

    fn transit_physical_duration(&self, truck: TruckId, wall: f64) -> f64 {
        // Invert the delay factor applied at transit start.
        let state = &self.trucks[truck.index()];
        if let Some(model) = &self.scenario.tyre {
            if state.tyre > model.y_th {
                return wall / (1.0 + model.scaling_k);
            }
        }
        wall
    }

    fn complete_service(&mut self, truck: TruckId) {
        let state = &self.trucks[truck.index()];
        let station = state.activity_location;
        let inflight = state.service.expect("service metadata present");
        let now = state.activity_end;

        // Bin room re-check: if the effective rate drifted while we held the
        // server, keep waiting (the wait stays attributed to queue time).
        if let ServiceKind::Unload { task } = inflight.kind {
            let dest = self.scenario.tasks[task.index()].destination;
            if let Some(bin_idx) = self.scenario.crusher_at(dest) {
                let capacity = self.trucks[truck.index()].load.map(|(_, t)| t).unwrap_or(0.0);
                let bin = &self.bins[bin_idx];
                let model = &self.scenario.crushers[bin_idx].model;
                let overflow = capacity + bin.total() - model.v_max;
                if overflow > 1e-9 {
                    let rate = crate::constraints::effective_processing_rate(&bin.volumes, model);
                    let wait = (overflow / rate * SECONDS_PER_HOUR).max(1.0);
                    let t = &mut self.trucks[truck.index()];
                    t.activity_end += wait;
                    t.service.as_mut().expect("service metadata").extra_wait += wait;
                    return;
                }
            }
        }

        // Close the extra wait (queue time) and the service segment.
        if inflight.extra_wait > 0.0 {
            if self.close_segment(truck, ActivityType::Queue, inflight.extra_wait, inflight.extra_wait) {
                self.release_server(station);
                return;
            }
        }
        let service_activity = match inflight.kind {
            ServiceKind::Load { .. } => ActivityType::Load,
            ServiceKind::Unload { .. } => ActivityType::Unload,
            ServiceKind::Charge => ActivityType::Charge,
        };
        let frozen = self.close_segment(
            truck,
            service_activity,
            inflight.service_duration,
            inflight.service_duration,
        );
        if frozen {
            self.release_server(station);
            return;
        }

        match inflight.kind {
            ServiceKind::Load { task } => {
                let material = self.scenario.tasks[task.index()].material;
                let capacity = self.scenario.trucks[truck.index()].capacity;
                self.trucks[truck.index()].load = Some((material, capacity));
                self.stats.loaded_by_material[material.index()] += capacity;
            }
            ServiceKind::Unload { task } => {
                let (material, tonnes) = self.trucks[truck.index()]
                    .load
                    .take()
                    .expect("unloading truck carries a load");
                let task_def = &self.scenario.tasks[task.index()];
                let (source, dest) = (task_def.source, task_def.destination);
                self.stats.delivered_by_material[material.index()] += tonnes;
                for (j, t) in self.scenario.tasks.iter().enumerate() {
                    if t.source == source && t.destination == dest {
                        self.task_flow_cum[j] += tonnes;
                    }
                }
                self.flow_log.push(FlowLogEntry {
                    time: now,
                    source,
                    destination: dest,
                    material,
                    tonnes,
                    truck,
                    task,
                });
                if let Some(bin_idx) = self.scenario.crusher_at(dest) {
                    let bin = &mut self.bins[bin_idx];
                    bin.volumes[material.index()] += tonnes;
                    bin.delivered += tonnes;
                }
                if let Some(trace) = &mut self.trace {
                    if let Some(last) = trace.last_mut() {
                        debug_assert_eq!(last.activity_type, ActivityType::Unload);
                        last.delivered_tonnes = tonnes;
                    }
                }
            }
            ServiceKind::Charge => {
                self.trucks[truck.index()].battery = 100.0;
            }
        }

        self.trucks[truck.index()].service = None;
        self.release_server(station);
        self.proceed_plan(truck);
    }

    fn release_server(&mut self, station: LocId) {
        let s = &mut self.stations[station.index()];
        debug_assert!(s.busy_servers > 0);
        s.busy_servers -= 1;
        self.try_start_service(station);
    }

    fn try_start_service(&mut self, station: LocId) {
        let servers = self.scenario.servers_at(station);
        while self.stations[station.index()].busy_servers < servers {
            let Some(truck) = self.stations[station.index()].queue.pop_front() else {
                break;
            };
            self.start_service(station, truck);
        }
    }

    fn start_service(&mut self, station: LocId, truck: TruckId) {
        let now = self.clock;
        let state = &self.trucks[truck.index()];
        debug_assert_eq!(state.phase, TruckPhase::Waiting);
        let queue_wall = now - state.activity_start;
        let Some(PlannedStep::Enqueue { service, .. }) = state.plan.front().copied() else {
            unreachable!("waiting truck has an enqueue step");
        };
        // Close the queue segment first; the battery can run out while
        // waiting, even in line for a charger.
        if self.close_segment(truck, ActivityType::Queue, queue_wall, queue_wall) {
            return; // frozen in the queue; server stays free
        }

        let mut extra_wait = 0.0;
        let duration = match service {
            ServiceKind::Load { .. } => self.scenario.load_duration(station, truck),
            ServiceKind::Charge => {
                let b = self.trucks[truck.index()].battery;
                let charge = self
                    .scenario
                    .battery
                    .as_ref()
                    .map(|m| charge_duration(b, m))
                    .unwrap_or(0.0);
                self.scenario.charge_setup(station) + charge
            }
            ServiceKind::Unload { .. } => {
                if let Some(bin_idx) = self.scenario.crusher_at(station) {
                    let capacity = self.trucks[truck.index()].load.map(|(_, t)| t).unwrap_or(0.0);
                    let model = self.scenario.crushers[bin_idx].model.clone();
                    let bin = &self.bins[bin_idx];
                    // Buffer-queue heuristic: hold the truck off the tipple
                    // and re-check once the bin has drained for a while.
                    if self.buffer_guard {
                        if let Some((mat, tonnes)) = self.trucks[truck.index()].load {
                            if crate::constraints::ratio_buffer_hold(&bin.volumes, &model, mat, tonnes)
                            {
                                let state = &mut self.trucks[truck.index()];
                                state.phase = TruckPhase::Busy;
                                state.activity = ActivityType::Queue;
                                state.activity_location = station;
                                state.activity_start = now;
                                state.activity_end = now + BUFFER_RECHECK_INTERVAL;
                                return;
                            }
                        }
                    }
                    // Hard collective constraint: unloading into a starved
                    // crusher freezes the interacting truck.
                    if model.v_min > 0.0 && bin.total() <= model.v_min {
                        self.freeze(truck, FreezeCause::Capacity);
                        return;
                    }
                    // Soft ratio delay plus the physical wait for bin room,
                    // both spent at the tipple before dumping starts.
                    let overflow = capacity + bin.total() - model.v_max;
                    if overflow > 0.0 {
                        let delay = match ratio_queue_delay(capacity, &bin.volumes, &model) {
                            ViolationDelay::Finite(s) => s,
                            ViolationDelay::Infinite => unreachable!("ratio delays are finite"),
                        };
                        let room = overflow / model.processing_rate * SECONDS_PER_HOUR;
                        extra_wait = room + delay;
                        if delay > 0.0 {
                            self.record_delay(truck, delay);
                        }
                    }
                }
                self.scenario.unload_duration(station, truck)
            }
        };

        self.stations[station.index()].busy_servers += 1;
        let state = &mut self.trucks[truck.index()];
        state.plan.pop_front();
        state.phase = TruckPhase::Busy;
        state.activity = match service {
            ServiceKind::Load { .. } => ActivityType::Load,
            ServiceKind::Unload { .. } => ActivityType::Unload,
            ServiceKind::Charge => ActivityType::Charge,
        };
        state.activity_location = station;
        state.activity_start = now;
        state.activity_end = now + extra_wait + duration;
        state.service = Some(InFlightService {
            kind: service,
            extra_wait,
            service_duration: duration,
        });
    }

    fn proceed_plan(&mut self, truck: TruckId) {
        let now = self.clock;
        let Some(step) = self.trucks[truck.index()].plan.front().copied() else {
            let state = &mut self.trucks[truck.index()];
            state.phase = TruckPhase::Idle;
            state.activity_end = f64::INFINITY;
            state.service = None;
            return;
        };
        match step {
            PlannedStep::Transit { to } => {
                let state = &self.trucks[truck.index()];
                let from = state.location;
                let d = self
                    .scenario
                    .transit_duration(from, to)
                    .expect("validated scenarios are routable");
                // Hot tyres slow the truck down: the violation delay
                // stretches the wall-clock transit.
                let mut wall = d;
                if let Some(model) = &self.scenario.tyre {
                    if let ViolationDelay::Finite(delay) =
                        tyre_violation_delay(state.tyre, ActivityType::Transit, d, model)
                    {
                        if delay > 0.0 {
                            wall += delay;
                            self.record_delay(truck, delay);
                        }
                    }
                }
                let state = &mut self.trucks[truck.index()];
                state.plan.pop_front();
                state.phase = TruckPhase::Busy;
                state.activity = ActivityType::Transit;
                state.activity_location = to;
                state.activity_start = now;
                state.activity_end = now + wall;
            }
            PlannedStep::Enqueue { station, .. } => {
                let state = &mut self.trucks[truck.index()];
                state.phase = TruckPhase::Waiting;
                state.activity = ActivityType::Queue;
                state.activity_location = station;
                state.activity_start = now;
                state.activity_end = f64::INFINITY;
                self.stations[station.index()].queue.push_back(truck);
                self.try_start_service(station);
            }
            PlannedStep::Park => {
                let duration = self.park_duration(truck);
                let state = &mut self.trucks[truck.index()];
                state.plan.pop_front();
                state.phase = TruckPhase::Busy;
                state.activity = ActivityType::Park;
                state.activity_location = state.location;
                state.activity_start = now;
                state.activity_end = now + duration;
            }
        }
    }

    /// Integrates battery/tyre over a finished segment, accumulates KPI
    /// durations, and applies the hard battery check. Returns true if the
    /// truck froze.
    fn close_segment(&mut self, truck: TruckId, activity: ActivityType, wall: f64, phys: f64) -> bool {
        let idx = truck.index();
        self.stats.duration_by_type[idx][activity_index(activity)] += wall;
        if self.record_decisions {
            if let Some(rec) = self.trucks[idx].decision {
                self.decision_log.records[rec].activities.push((activity, wall));
            }
        }

        if let Some(model) = &self.scenario.tyre {
            let y0 = self.trucks[idx].tyre;
            let y1 = update_tyre_temperature(y0, activity, phys, model);
            self.stats.hot_tyre_time += hot_interval(y0, y1, wall, activity, model.y_th, model.k_c);
            if activity == ActivityType::Transit && y0 <= model.y_max && y1 > model.y_max {
                self.stats.tyre_hard_crossings += 1;
            }
            self.trucks[idx].tyre = y1;
        }
        let mut frozen = false;
        if let Some(model) = &self.scenario.battery {
            // Charge completions overwrite with exactly 100 afterwards.
            let b1 = update_battery(self.trucks[idx].battery, activity, phys, model);
            self.trucks[idx].battery = b1;
            if b1 < model.b_min {
                self.freeze(truck, FreezeCause::Battery);
                frozen = true;
            }
        }
        if let Some(trace) = &mut self.trace {
            let state = &self.trucks[idx];
            trace.push(TraceRow {
                time: self.clock,
                truck,
                activity_type: activity,
                location: state.activity_location,
                duration: wall,
                battery: state.battery,
                tyre_temp: state.tyre,
                delivered_tonnes: 0.0,
            });
        }
        frozen
    }

    fn freeze(&mut self, truck: TruckId, cause: FreezeCause) {
        match cause {
            FreezeCause::Battery => self.stats.battery_violations += 1,
            FreezeCause::Capacity => self.stats.capacity_violations += 1,
        }
        let state = &mut self.trucks[truck.index()];
        state.phase = TruckPhase::Frozen;
        state.plan.clear();
        state.service = None;
        state.activity_end = f64::INFINITY;
        if self.record_decisions {
            if let Some(rec) = state.decision {
                self.decision_log.records[rec].froze = true;
            }
        }
    }

    fn record_delay(&mut self, truck: TruckId, delay: f64) {
        self.stats.finite_delay_total += delay;
        if self.record_decisions {
            if let Some(rec) = self.trucks[truck.index()].decision {
                self.decision_log.records[rec].delay += delay;
            }
        }
    }

    /// Re-targets a forked state onto a structurally compatible scenario:
    /// same locations, trucks, tasks and materials, but a different
    /// constraint set. Baseline planners use this to reason with an
    /// unconstrained internal model while the live world keeps its
    /// constraints. Crusher bins are rebuilt from the target scenario.
    pub fn rebase(&self, scenario: &Arc<Scenario>) -> SimState {
        assert_eq!(self.scenario.locations.len(), scenario.locations.len());
        assert_eq!(self.scenario.trucks.len(), scenario.trucks.len());
        assert_eq!(self.scenario.tasks.len(), scenario.tasks.len());
        assert_eq!(self.scenario.materials.len(), scenario.materials.len());
        let mut fork = self.fork();
        fork.bins = scenario
            .crushers
            .iter()
            .map(|c| CrusherBin {
                volumes: c.initial_volumes.clone(),
                processed: 0.0,
                delivered: 0.0,
                last_update: fork.clock,
                below_min_events: 0,
            })
            .collect();
        fork.scenario = Arc::clone(scenario);
        fork
    }

    /// Tonnes currently on trucks (for conservation checks).
    pub fn in_transit_by_material(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.scenario.materials.len()];
        for truck in &self.trucks {
            if let Some((mat, tonnes)) = truck.load {
                out[mat.index()] += tonnes;
            }
        }
        out
    }
}

/// Wall-clock seconds of a segment spent above the hot-tyre threshold.
/// Heating is linear across the segment, cooling exponential.
fn hot_interval(y0: f64, y1: f64, wall: f64, activity: ActivityType, y_th: f64, k_c: f64) -> f64 {
    if wall <= 0.0 {
        return 0.0;
    }
    if activity == ActivityType::Transit {
        if y0 > y_th {
            wall
        } else if y1 > y_th && y1 > y0 {
            wall * (y1 - y_th) / (y1 - y0)
        } else {
            0.0
        }
    } else {
        if y0 <= y_th {
            return 0.0;
        }
        if y1 > y_th {
            return wall;
        }
        // Crossing time of the exponential decay.
        let t_cross = ((y0 - AMBIENT_TEMP) / (y_th - AMBIENT_TEMP)).ln() / k_c * SECONDS_PER_HOUR;
        t_cross.min(wall)
    }
}
