//! Scenario data model: road network, trucks, materials, tasks, activity
//! catalogue, and validation.
//!
//! A [`MineConfig`] is the declarative description of a scenario as loaded
//! from JSON. [`Scenario`] is its compiled form: ids interned to dense
//! indices, all-pairs transit times precomputed, constraint parameters
//! resolved. Both are immutable after construction and safe to share across
//! concurrent readers.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::constraints::{BatteryModel, ConstraintSpec, CrusherModel, TyreModel};

pub const SECONDS_PER_HOUR: f64 = 3600.0;

/// Ambient tyre temperature in degrees Celsius.
pub const AMBIENT_TEMP: f64 = 35.0;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct LocId(pub u32);

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct TruckId(pub u32);

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct TaskId(pub u32);

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct MaterialId(pub u32);

impl LocId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}
impl TruckId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}
impl TaskId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}
impl MaterialId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaterialKind {
    OreGrade,
    Waste,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Material {
    pub id: String,
    pub kind: MaterialKind,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocationKind {
    LoadingStation,
    UnloadingStation,
    ChargingBay,
    ParkingBay,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Location {
    pub id: String,
    pub kind: LocationKind,
}

/// Directed road with a transit duration in seconds.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub duration: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RoadNetwork {
    pub locations: Vec<Location>,
    pub edges: Vec<Edge>,
}

/// The six operational stages of a haul-truck. Exhaustive by construction.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivityType {
    Transit,
    Load,
    Queue,
    Unload,
    Charge,
    Park,
}

impl ActivityType {
    pub const ALL: [ActivityType; 6] = [
        ActivityType::Transit,
        ActivityType::Load,
        ActivityType::Queue,
        ActivityType::Unload,
        ActivityType::Charge,
        ActivityType::Park,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ActivityType::Transit => "transit",
            ActivityType::Load => "load",
            ActivityType::Queue => "queue",
            ActivityType::Unload => "unload",
            ActivityType::Charge => "charge",
            ActivityType::Park => "park",
        }
    }
}

impl fmt::Display for ActivityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Catalogue entry fixing the nominal duration of a service activity at a
/// location. Transit durations come from edges; queue durations emerge from
/// contention.
#[derive(Clone, Debug, PartialEq)]
pub struct Activity {
    pub location: String,
    pub activity_type: ActivityType,
    pub nominal_duration: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Truck {
    pub id: String,
    /// Load capacity C_i in tonnes.
    pub capacity: f64,
    /// Battery charge in percent, within [0, 100].
    pub initial_battery: f64,
    /// Tyre temperature in degrees Celsius, within [35, 95].
    pub initial_tyre_temp: f64,
    /// Starting location; defaults to the parking bay, else the first
    /// loading station.
    pub initial_location: Option<String>,
}

/// Continuous-transport goal: move `material` from `source` to `destination`
/// at `target_rate` tonnes per hour.
#[derive(Clone, Debug, PartialEq)]
pub struct HaulageTask {
    pub id: String,
    pub source: String,
    pub destination: String,
    pub material: String,
    pub target_rate: f64,
}

/// Physical interaction parameters that the paper leaves unspecified.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionParams {
    /// Number of parallel charging stations at the charging bay.
    pub charging_stations: u32,
    /// Loader/unloader throughput used to default service durations, t/h.
    pub loader_rate: f64,
    /// Park duration when no tyre cooling model is configured, seconds.
    pub park_break_duration: f64,
}

impl Default for InteractionParams {
    fn default() -> Self {
        InteractionParams {
            charging_stations: 2,
            loader_rate: 600.0,
            park_break_duration: 1800.0,
        }
    }
}

/// The full mine tuple: trucks, road graph, tasks, nominal activity
/// durations, and constraint specs. Immutable scenario input.
#[derive(Clone, Debug, Default)]
pub struct MineConfig {
    pub trucks: Vec<Truck>,
    pub network: RoadNetwork,
    pub tasks: Vec<HaulageTask>,
    pub activities: Vec<Activity>,
    pub constraint_specs: Vec<ConstraintSpec>,
    pub interaction: InteractionParams,
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationIssue {
    pub subject: String,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

/// List of invariant violations; empty iff the scenario is runnable.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    fn push(&mut self, subject: impl Into<String>, message: impl Into<String>) {
        self.issues.push(ValidationIssue {
            subject: subject.into(),
            message: message.into(),
        });
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.issues.iter().any(|i| i.message.contains(needle))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(f, "- {issue}")?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("no path from {from} to {to}")]
    Unreachable { from: String, to: String },
    #[error("unknown location `{0}`")]
    UnknownLocation(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
}

/// Checks every type invariant of the scenario model and returns the list of
/// violations. An empty report means every sim-engine operation accepts the
/// config without error.
pub fn validate_scenario(config: &MineConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    let net = &config.network;

    let mut loc_kinds: HashMap<&str, LocationKind> = HashMap::new();
    for loc in &net.locations {
        if loc_kinds.insert(loc.id.as_str(), loc.kind).is_some() {
            report.push(&loc.id, "duplicate location id");
        }
    }
    let loc_kind = |id: &str| loc_kinds.get(id).copied();

    for edge in &net.edges {
        let subject = format!("edge {}->{}", edge.from, edge.to);
        if !(edge.duration > 0.0) {
            report.push(&subject, "non-positive edge weight");
        }
        for end in [&edge.from, &edge.to] {
            if loc_kind(end).is_none() {
                report.push(&subject, format!("unknown location `{end}`"));
            }
        }
    }

    let mut truck_ids: HashMap<&str, ()> = HashMap::new();
    for truck in &config.trucks {
        if truck_ids.insert(truck.id.as_str(), ()).is_some() {
            report.push(&truck.id, "duplicate truck id");
        }
        if !(truck.capacity > 0.0) {
            report.push(&truck.id, "truck capacity must be positive");
        }
        if !(0.0..=100.0).contains(&truck.initial_battery) {
            report.push(&truck.id, "initial battery outside [0, 100]");
        }
        if !(AMBIENT_TEMP..=95.0).contains(&truck.initial_tyre_temp) {
            report.push(&truck.id, "initial tyre temperature outside [35, 95]");
        }
        if let Some(start) = &truck.initial_location {
            if loc_kind(start).is_none() {
                report.push(&truck.id, format!("unknown initial location `{start}`"));
            }
        }
    }
    if config.trucks.is_empty() {
        report.push("trucks", "scenario has no trucks");
    }

    let mut task_ids: HashMap<&str, ()> = HashMap::new();
    for task in &config.tasks {
        if task_ids.insert(task.id.as_str(), ()).is_some() {
            report.push(&task.id, "duplicate task id");
        }
        if !(task.target_rate > 0.0) {
            report.push(&task.id, "target rate must be positive");
        }
        match loc_kind(&task.source) {
            None => report.push(&task.id, format!("unknown location `{}`", task.source)),
            Some(LocationKind::LoadingStation) => {}
            Some(_) => report.push(&task.id, "task endpoint kind mismatch: source"),
        }
        match loc_kind(&task.destination) {
            None => report.push(&task.id, format!("unknown location `{}`", task.destination)),
            Some(LocationKind::UnloadingStation) => {}
            Some(_) => report.push(&task.id, "task endpoint kind mismatch: destination"),
        }
    }
    if config.tasks.is_empty() {
        report.push("tasks", "scenario has no tasks");
    }

    for act in &config.activities {
        let subject = format!("activity {}/{}", act.location, act.activity_type);
        if loc_kind(&act.location).is_none() {
            report.push(&subject, format!("unknown location `{}`", act.location));
        }
        if act.nominal_duration < 0.0 {
            report.push(&subject, "negative nominal duration");
        }
        if matches!(
            act.activity_type,
            ActivityType::Transit | ActivityType::Queue | ActivityType::Park
        ) {
            report.push(&subject, "activity type does not take a catalogue duration");
        }
    }

    if config.interaction.charging_stations == 0 {
        report.push("interaction", "charging_stations must be at least 1");
    }
    if !(config.interaction.loader_rate > 0.0) {
        report.push("interaction", "loader_rate must be positive");
    }
    if config.interaction.park_break_duration < 0.0 {
        report.push("interaction", "park_break_duration must be non-negative");
    }

    for spec in &config.constraint_specs {
        spec.validate(config, &mut report);
    }
    let battery_count = config
        .constraint_specs
        .iter()
        .filter(|s| matches!(s, ConstraintSpec::Battery(_)))
        .count();
    if battery_count > 1 {
        report.push("constraints", "more than one battery constraint");
    }
    let tyre_count = config
        .constraint_specs
        .iter()
        .filter(|s| matches!(s, ConstraintSpec::Tyre(_)))
        .count();
    if tyre_count > 1 {
        report.push("constraints", "more than one tyre constraint");
    }

    // Connectivity over every location the fleet must visit.
    if report.is_empty() {
        let (index, matrix) = net.all_pairs();
        let mut used: Vec<&str> = Vec::new();
        for task in &config.tasks {
            used.push(&task.source);
            used.push(&task.destination);
        }
        for truck in &config.trucks {
            if let Some(start) = &truck.initial_location {
                used.push(start);
            }
        }
        for spec in &config.constraint_specs {
            match spec {
                ConstraintSpec::Battery(_) => {
                    match net.locations.iter().find(|l| l.kind == LocationKind::ChargingBay) {
                        Some(bay) => used.push(&bay.id),
                        None => report.push("constraints", "battery constraint without a charging bay"),
                    }
                }
                ConstraintSpec::Tyre(_) => {
                    match net.locations.iter().find(|l| l.kind == LocationKind::ParkingBay) {
                        Some(bay) => used.push(&bay.id),
                        None => report.push("constraints", "tyre constraint without a parking bay"),
                    }
                }
                _ => {}
            }
        }
        used.sort_unstable();
        used.dedup();
        for &a in &used {
            for &b in &used {
                if a != b {
                    let (ia, ib) = (index[a], index[b]);
                    if !matrix[ia * net.locations.len() + ib].is_finite() {
                        report.push(format!("route {a}->{b}"), "unreachable");
                    }
                }
            }
        }
    }

    report
}

impl RoadNetwork {
    /// Floyd-Warshall over edge durations. Returns the id->index map and a
    /// flattened n*n matrix of minimal travel times (infinity if unreachable,
    /// zero on the diagonal).
    pub fn all_pairs(&self) -> (HashMap<&str, usize>, Vec<f64>) {
        let n = self.locations.len();
        let index: HashMap<&str, usize> = self
            .locations
            .iter()
            .enumerate()
            .map(|(i, l)| (l.id.as_str(), i))
            .collect();
        let mut dist = vec![f64::INFINITY; n * n];
        for i in 0..n {
            dist[i * n + i] = 0.0;
        }
        for edge in &self.edges {
            if let (Some(&i), Some(&j)) = (index.get(edge.from.as_str()), index.get(edge.to.as_str())) {
                if edge.duration > 0.0 && edge.duration < dist[i * n + j] {
                    dist[i * n + j] = edge.duration;
                }
            }
        }
        for k in 0..n {
            for i in 0..n {
                let dik = dist[i * n + k];
                if !dik.is_finite() {
                    continue;
                }
                for j in 0..n {
                    let through = dik + dist[k * n + j];
                    if through < dist[i * n + j] {
                        dist[i * n + j] = through;
                    }
                }
            }
        }
        (index, dist)
    }
}

// ---------------------------------------------------------------------------
// Compiled scenario

#[derive(Clone, Debug)]
pub struct CompiledTruck {
    pub id: String,
    pub capacity: f64,
    pub initial_battery: f64,
    pub initial_tyre_temp: f64,
    pub start: LocId,
}

#[derive(Clone, Debug)]
pub struct CompiledTask {
    pub id: String,
    pub source: LocId,
    pub destination: LocId,
    pub material: MaterialId,
    pub target_rate: f64,
}

/// Crusher bin parameters attached to an unloading station, merged from the
/// capacity and ratio constraint blocks that reference it.
#[derive(Clone, Debug)]
pub struct CrusherSite {
    pub location: LocId,
    pub model: CrusherModel,
    /// Initial bin volume per material index, tonnes.
    pub initial_volumes: Vec<f64>,
}

/// Compiled, immutable scenario shared by every simulation state.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub locations: Vec<Location>,
    pub trucks: Vec<CompiledTruck>,
    pub tasks: Vec<CompiledTask>,
    pub materials: Vec<Material>,
    pub interaction: InteractionParams,
    pub battery: Option<BatteryModel>,
    pub tyre: Option<TyreModel>,
    pub crushers: Vec<CrusherSite>,
    pub charging_bay: Option<LocId>,
    pub parking_bay: Option<LocId>,
    /// Flattened all-pairs transit matrix, seconds.
    transit: Vec<f64>,
    /// Nominal service durations per (location, truck): load and unload.
    load_duration: Vec<Vec<f64>>,
    unload_duration: Vec<Vec<f64>>,
    /// Charge setup duration per location (usually zero).
    charge_setup: Vec<f64>,
    loc_index: HashMap<String, LocId>,
}

impl Scenario {
    /// Validates and compiles a config. Fails with the validation report if
    /// any invariant is violated.
    pub fn compile(config: &MineConfig) -> Result<Arc<Scenario>, ValidationReport> {
        let report = validate_scenario(config);
        if !report.is_empty() {
            return Err(report);
        }

        let net = &config.network;
        let n = net.locations.len();
        let (_, transit) = net.all_pairs();
        let loc_index: HashMap<String, LocId> = net
            .locations
            .iter()
            .enumerate()
            .map(|(i, l)| (l.id.clone(), LocId(i as u32)))
            .collect();

        // Materials are interned from task order; ids named "waste" are waste.
        let mut materials: Vec<Material> = Vec::new();
        let mut mat_index: HashMap<&str, MaterialId> = HashMap::new();
        for task in &config.tasks {
            if !mat_index.contains_key(task.material.as_str()) {
                let id = MaterialId(materials.len() as u32);
                let kind = if task.material.eq_ignore_ascii_case("waste") {
                    MaterialKind::Waste
                } else {
                    MaterialKind::OreGrade
                };
                materials.push(Material {
                    id: task.material.clone(),
                    kind,
                });
                mat_index.insert(task.material.as_str(), id);
            }
        }

        let parking_bay = net
            .locations
            .iter()
            .position(|l| l.kind == LocationKind::ParkingBay)
            .map(|i| LocId(i as u32));
        let charging_bay = net
            .locations
            .iter()
            .position(|l| l.kind == LocationKind::ChargingBay)
            .map(|i| LocId(i as u32));
        let first_loading = net
            .locations
            .iter()
            .position(|l| l.kind == LocationKind::LoadingStation)
            .map(|i| LocId(i as u32));

        let trucks: Vec<CompiledTruck> = config
            .trucks
            .iter()
            .map(|t| CompiledTruck {
                id: t.id.clone(),
                capacity: t.capacity,
                initial_battery: t.initial_battery,
                initial_tyre_temp: t.initial_tyre_temp,
                start: t
                    .initial_location
                    .as_ref()
                    .map(|s| loc_index[s.as_str()])
                    .or(parking_bay)
                    .or(first_loading)
                    .unwrap_or(LocId(0)),
            })
            .collect();

        let tasks: Vec<CompiledTask> = config
            .tasks
            .iter()
            .map(|t| CompiledTask {
                id: t.id.clone(),
                source: loc_index[t.source.as_str()],
                destination: loc_index[t.destination.as_str()],
                material: mat_index[t.material.as_str()],
                target_rate: t.target_rate,
            })
            .collect();

        // Service durations: explicit catalogue entry wins, otherwise
        // capacity / loader_rate.
        let mut load_duration = vec![Vec::new(); n];
        let mut unload_duration = vec![Vec::new(); n];
        let mut charge_setup = vec![0.0; n];
        let catalogue: HashMap<(LocId, ActivityType), f64> = config
            .activities
            .iter()
            .map(|a| ((loc_index[a.location.as_str()], a.activity_type), a.nominal_duration))
            .collect();
        for loc in 0..n {
            let lid = LocId(loc as u32);
            let mut loads = Vec::with_capacity(trucks.len());
            let mut unloads = Vec::with_capacity(trucks.len());
            for truck in &trucks {
                let default = truck.capacity / config.interaction.loader_rate * SECONDS_PER_HOUR;
                loads.push(
                    catalogue
                        .get(&(lid, ActivityType::Load))
                        .copied()
                        .unwrap_or(default),
                );
                unloads.push(
                    catalogue
                        .get(&(lid, ActivityType::Unload))
                        .copied()
                        .unwrap_or(default),
                );
            }
            load_duration[loc] = loads;
            unload_duration[loc] = unloads;
            charge_setup[loc] = catalogue
                .get(&(lid, ActivityType::Charge))
                .copied()
                .unwrap_or(0.0);
        }

        let mut battery = None;
        let mut tyre = None;
        let mut crushers: Vec<CrusherSite> = Vec::new();
        for spec in &config.constraint_specs {
            match spec {
                ConstraintSpec::Battery(model) => battery = Some(model.clone()),
                ConstraintSpec::Tyre(model) => tyre = Some(model.clone()),
                ConstraintSpec::Capacity(cap) => {
                    let loc = loc_index[cap.location.as_str()];
                    let site = crushers.iter_mut().find(|c| c.location == loc);
                    let initial = volumes_by_material(&materials, &cap.initial_volumes);
                    match site {
                        Some(site) => {
                            site.model.v_min = cap.v_min;
                            site.model.v_max = cap.v_max;
                            site.model.processing_rate = cap.processing_rate;
                            site.initial_volumes = initial;
                        }
                        None => crushers.push(CrusherSite {
                            location: loc,
                            model: CrusherModel {
                                v_min: cap.v_min,
                                v_max: cap.v_max,
                                processing_rate: cap.processing_rate,
                                ratio_targets: Vec::new(),
                                normalization: Default::default(),
                            },
                            initial_volumes: initial,
                        }),
                    }
                }
                ConstraintSpec::Ratio(ratio) => {
                    let loc = loc_index[ratio.location.as_str()];
                    let targets: Vec<(MaterialId, f64)> = ratio
                        .targets
                        .iter()
                        .filter_map(|(name, r)| mat_index.get(name.as_str()).map(|&m| (m, *r)))
                        .collect();
                    match crushers.iter_mut().find(|c| c.location == loc) {
                        Some(site) => {
                            site.model.ratio_targets = targets;
                            site.model.normalization = ratio.normalization;
                            if let Some(v_max) = ratio.v_max {
                                site.model.v_max = v_max;
                            }
                            if let Some(p) = ratio.processing_rate {
                                site.model.processing_rate = p;
                            }
                            if !ratio.initial_volumes.is_empty() {
                                site.initial_volumes =
                                    volumes_by_material(&materials, &ratio.initial_volumes);
                            }
                        }
                        None => crushers.push(CrusherSite {
                            location: loc,
                            model: CrusherModel {
                                v_min: 0.0,
                                v_max: ratio.v_max.unwrap_or(400.0),
                                processing_rate: ratio.processing_rate.unwrap_or(300.0),
                                ratio_targets: targets,
                                normalization: ratio.normalization,
                            },
                            initial_volumes: volumes_by_material(&materials, &ratio.initial_volumes),
                        }),
                    }
                }
            }
        }
        for site in &mut crushers {
            site.initial_volumes.resize(materials.len(), 0.0);
        }

        Ok(Arc::new(Scenario {
            locations: net.locations.clone(),
            trucks,
            tasks,
            materials,
            interaction: config.interaction.clone(),
            battery,
            tyre,
            crushers,
            charging_bay,
            parking_bay,
            transit,
            load_duration,
            unload_duration,
            charge_setup,
            loc_index,
        }))
    }

    pub fn loc_id(&self, name: &str) -> Result<LocId, ModelError> {
        self.loc_index
            .get(name)
            .copied()
            .ok_or_else(|| ModelError::UnknownLocation(name.to_string()))
    }

    pub fn location(&self, id: LocId) -> &Location {
        &self.locations[id.index()]
    }

    pub fn truck_id(&self, name: &str) -> Option<TruckId> {
        self.trucks
            .iter()
            .position(|t| t.id == name)
            .map(|i| TruckId(i as u32))
    }

    pub fn task_id(&self, name: &str) -> Result<TaskId, ModelError> {
        self.tasks
            .iter()
            .position(|t| t.id == name)
            .map(|i| TaskId(i as u32))
            .ok_or_else(|| ModelError::UnknownTask(name.to_string()))
    }

    /// Minimal path travel time between two locations, seconds.
    /// Deterministic; zero when `from == to`.
    pub fn transit_duration(&self, from: LocId, to: LocId) -> Result<f64, ModelError> {
        let n = self.locations.len();
        let d = self.transit[from.index() * n + to.index()];
        if d.is_finite() {
            Ok(d)
        } else {
            Err(ModelError::Unreachable {
                from: self.locations[from.index()].id.clone(),
                to: self.locations[to.index()].id.clone(),
            })
        }
    }

    pub fn load_duration(&self, loc: LocId, truck: TruckId) -> f64 {
        self.load_duration[loc.index()][truck.index()]
    }

    pub fn unload_duration(&self, loc: LocId, truck: TruckId) -> f64 {
        self.unload_duration[loc.index()][truck.index()]
    }

    pub fn charge_setup(&self, loc: LocId) -> f64 {
        self.charge_setup[loc.index()]
    }

    pub fn crusher_at(&self, loc: LocId) -> Option<usize> {
        self.crushers.iter().position(|c| c.location == loc)
    }

    /// Server count for a station: the charging bay has
    /// `interaction.charging_stations`, every other station one server.
    pub fn servers_at(&self, loc: LocId) -> u32 {
        if self.locations[loc.index()].kind == LocationKind::ChargingBay {
            self.interaction.charging_stations
        } else {
            1
        }
    }

    /// Same mine with a different constraint set; structurally compatible
    /// with the original, so states can be rebased between the two.
    pub fn with_constraints(
        &self,
        battery: Option<BatteryModel>,
        tyre: Option<TyreModel>,
        crushers: Vec<CrusherSite>,
    ) -> Arc<Scenario> {
        let mut out = self.clone();
        out.battery = battery;
        out.tyre = tyre;
        out.crushers = crushers;
        Arc::new(out)
    }

    pub fn has_battery_constraint(&self) -> bool {
        self.battery.is_some()
    }

    pub fn has_tyre_constraint(&self) -> bool {
        self.tyre.is_some()
    }

    pub fn has_capacity_constraint(&self) -> bool {
        self.crushers.iter().any(|c| c.model.v_min > 0.0)
    }

    pub fn has_ratio_constraint(&self) -> bool {
        self.crushers.iter().any(|c| !c.model.ratio_targets.is_empty())
    }
}

fn volumes_by_material(materials: &[Material], named: &HashMap<String, f64>) -> Vec<f64> {
    let mut volumes = vec![0.0; materials.len()];
    for (i, mat) in materials.iter().enumerate() {
        if let Some(v) = named.get(&mat.id) {
            volumes[i] = *v;
        }
    }
    volumes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::reference_scenario;

    fn net(locations: &[(&str, LocationKind)], edges: &[(&str, &str, f64)]) -> RoadNetwork {
        RoadNetwork {
            locations: locations
                .iter()
                .map(|(id, kind)| Location {
                    id: id.to_string(),
                    kind: *kind,
                })
                .collect(),
            edges: edges
                .iter()
                .map(|(from, to, d)| Edge {
                    from: from.to_string(),
                    to: to.to_string(),
                    duration: *d,
                })
                .collect(),
        }
    }

    fn minimal_config() -> MineConfig {
        MineConfig {
            trucks: vec![Truck {
                id: "V1".into(),
                capacity: 100.0,
                initial_battery: 100.0,
                initial_tyre_temp: 50.0,
                initial_location: Some("L1".into()),
            }],
            network: net(
                &[
                    ("L1", LocationKind::LoadingStation),
                    ("UL1", LocationKind::UnloadingStation),
                ],
                &[("L1", "UL1", 900.0), ("UL1", "L1", 900.0)],
            ),
            tasks: vec![HaulageTask {
                id: "T0".into(),
                source: "L1".into(),
                destination: "UL1".into(),
                material: "M1".into(),
                target_rate: 100.0,
            }],
            activities: vec![],
            constraint_specs: vec![],
            interaction: InteractionParams::default(),
        }
    }

    #[test]
    fn task_endpoint_kind_mismatch_is_reported() {
        let mut config = minimal_config();
        config.tasks[0].destination = "L1".into();
        let report = validate_scenario(&config);
        assert!(report.contains("task endpoint kind mismatch"), "{report}");
    }

    #[test]
    fn reference_scenario_validates_clean() {
        let config = reference_scenario();
        let report = validate_scenario(&config);
        assert!(report.is_empty(), "{report}");
        assert_eq!(config.trucks.len(), 5);
        assert!(config.trucks.iter().all(|t| t.capacity == 100.0));
        assert_eq!(config.tasks.len(), 4);
    }

    #[test]
    fn zero_edge_weight_is_reported() {
        let mut config = minimal_config();
        config.network.edges[0].duration = 0.0;
        let report = validate_scenario(&config);
        assert!(report.contains("non-positive edge weight"), "{report}");
    }

    #[test]
    fn transit_duration_identity_and_single_edge() {
        let scenario = Scenario::compile(&minimal_config()).unwrap();
        let l1 = scenario.loc_id("L1").unwrap();
        let ul1 = scenario.loc_id("UL1").unwrap();
        assert_eq!(scenario.transit_duration(l1, l1).unwrap(), 0.0);
        assert_eq!(scenario.transit_duration(l1, ul1).unwrap(), 900.0);
    }

    #[test]
    fn transit_duration_prefers_cheaper_two_hop_path() {
        // Oracle: brute-force enumeration of all simple paths on a 4-node graph.
        let locations = [
            ("A", LocationKind::LoadingStation),
            ("B", LocationKind::UnloadingStation),
            ("C", LocationKind::LoadingStation),
            ("D", LocationKind::UnloadingStation),
        ];
        let edges = [
            ("A", "B", 1000.0),
            ("A", "C", 300.0),
            ("C", "B", 400.0),
            ("B", "A", 1000.0),
            ("C", "A", 300.0),
            ("B", "C", 400.0),
            ("A", "D", 2000.0),
            ("D", "A", 2000.0),
        ];
        let network = net(&locations, &edges);

        // Brute force: DFS over simple paths.
        fn enumerate(
            network: &RoadNetwork,
            at: &str,
            goal: &str,
            seen: &mut Vec<String>,
            cost: f64,
            best: &mut f64,
        ) {
            if at == goal {
                *best = best.min(cost);
                return;
            }
            for edge in &network.edges {
                if edge.from == at && !seen.iter().any(|s| s == &edge.to) {
                    seen.push(edge.to.clone());
                    enumerate(network, &edge.to, goal, seen, cost + edge.duration, best);
                    seen.pop();
                }
            }
        }
        let mut best = f64::INFINITY;
        enumerate(&network, "A", "B", &mut vec!["A".into()], 0.0, &mut best);
        assert_eq!(best, 700.0);

        let config = MineConfig {
            trucks: vec![Truck {
                id: "V1".into(),
                capacity: 100.0,
                initial_battery: 100.0,
                initial_tyre_temp: 50.0,
                initial_location: Some("A".into()),
            }],
            network,
            tasks: vec![HaulageTask {
                id: "T0".into(),
                source: "A".into(),
                destination: "B".into(),
                material: "M1".into(),
                target_rate: 100.0,
            }],
            activities: vec![],
            constraint_specs: vec![],
            interaction: InteractionParams::default(),
        };
        let scenario = Scenario::compile(&config).unwrap();
        let a = scenario.loc_id("A").unwrap();
        let b = scenario.loc_id("B").unwrap();
        assert_eq!(scenario.transit_duration(a, b).unwrap(), best);
    }

    #[test]
    fn transit_duration_satisfies_triangle_inequality() {
        let config = reference_scenario();
        let scenario = Scenario::compile(&config).unwrap();
        let n = scenario.locations.len();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let (a, b, c) = (LocId(i as u32), LocId(j as u32), LocId(k as u32));
                    if let (Ok(ab), Ok(ak), Ok(kb)) = (
                        scenario.transit_duration(a, b),
                        scenario.transit_duration(a, c),
                        scenario.transit_duration(c, b),
                    ) {
                        assert!(ab <= ak + kb + 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn unreachable_pair_is_an_error() {
        let mut config = minimal_config();
        config.network.locations.push(Location {
            id: "X".into(),
            kind: LocationKind::UnloadingStation,
        });
        let scenario = Scenario::compile(&config);
        // X is not used by any task, so compilation still succeeds.
        let scenario = scenario.expect("unused isolated location is allowed");
        let l1 = scenario.loc_id("L1").unwrap();
        let x = scenario.loc_id("X").unwrap();
        assert!(matches!(
            scenario.transit_duration(l1, x),
            Err(ModelError::Unreachable { .. })
        ));
    }

    #[test]
    fn unreachable_task_route_fails_validation() {
        let mut config = minimal_config();
        config.network.edges.remove(0); // drop L1 -> UL1
        let report = validate_scenario(&config);
        assert!(report.contains("unreachable"), "{report}");
    }
}
