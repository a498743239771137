//! Scenario file loading, saving, and the built-in scenarios.
//!
//! Scenario files are JSON documents with top-level keys `trucks`,
//! `locations`, `edges`, `tasks`, `activities`, `constraints`, and
//! `interaction`. Durations are seconds, rates tonnes/hour, battery percent,
//! temperatures degrees Celsius. Parse failures are reported separately from
//! validation failures.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constraints::{BatteryModel, CapacitySpec, ConstraintSpec, RatioSpec, TyreModel};
use crate::model::{
    Activity, ActivityType, Edge, HaulageTask, InteractionParams, Location, LocationKind,
    MineConfig, RoadNetwork, Truck,
};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario file is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TruckDoc {
    id: String,
    capacity: f64,
    #[serde(default = "default_battery")]
    initial_battery: f64,
    #[serde(default = "default_tyre")]
    initial_tyre_temp: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    initial_location: Option<String>,
}

fn default_battery() -> f64 {
    100.0
}

fn default_tyre() -> f64 {
    crate::model::AMBIENT_TEMP
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ActivityDoc {
    location: String,
    activity_type: ActivityType,
    nominal_duration: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct InteractionDoc {
    #[serde(default = "default_charging_stations")]
    charging_stations: u32,
    #[serde(default = "default_loader_rate")]
    loader_rate: f64,
    #[serde(default = "default_park_break")]
    park_break_duration: f64,
}

fn default_charging_stations() -> u32 {
    2
}

fn default_loader_rate() -> f64 {
    600.0
}

fn default_park_break() -> f64 {
    1800.0
}

impl Default for InteractionDoc {
    fn default() -> Self {
        InteractionDoc {
            charging_stations: default_charging_stations(),
            loader_rate: default_loader_rate(),
            park_break_duration: default_park_break(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ScenarioDoc {
    trucks: Vec<TruckDoc>,
    locations: Vec<Location>,
    edges: Vec<Edge>,
    tasks: Vec<HaulageTaskDoc>,
    #[serde(default)]
    activities: Vec<ActivityDoc>,
    #[serde(default)]
    constraints: Vec<ConstraintSpec>,
    #[serde(default)]
    interaction: InteractionDoc,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct HaulageTaskDoc {
    id: String,
    source: String,
    destination: String,
    material: String,
    target_rate: f64,
}

impl From<ScenarioDoc> for MineConfig {
    fn from(doc: ScenarioDoc) -> Self {
        MineConfig {
            trucks: doc
                .trucks
                .into_iter()
                .map(|t| Truck {
                    id: t.id,
                    capacity: t.capacity,
                    initial_battery: t.initial_battery,
                    initial_tyre_temp: t.initial_tyre_temp,
                    initial_location: t.initial_location,
                })
                .collect(),
            network: RoadNetwork {
                locations: doc.locations,
                edges: doc.edges,
            },
            tasks: doc
                .tasks
                .into_iter()
                .map(|t| HaulageTask {
                    id: t.id,
                    source: t.source,
                    destination: t.destination,
                    material: t.material,
                    target_rate: t.target_rate,
                })
                .collect(),
            activities: doc
                .activities
                .into_iter()
                .map(|a| Activity {
                    location: a.location,
                    activity_type: a.activity_type,
                    nominal_duration: a.nominal_duration,
                })
                .collect(),
            constraint_specs: doc.constraints,
            interaction: InteractionParams {
                charging_stations: doc.interaction.charging_stations,
                loader_rate: doc.interaction.loader_rate,
                park_break_duration: doc.interaction.park_break_duration,
            },
        }
    }
}

impl From<&MineConfig> for ScenarioDoc {
    fn from(config: &MineConfig) -> Self {
        ScenarioDoc {
            trucks: config
                .trucks
                .iter()
                .map(|t| TruckDoc {
                    id: t.id.clone(),
                    capacity: t.capacity,
                    initial_battery: t.initial_battery,
                    initial_tyre_temp: t.initial_tyre_temp,
                    initial_location: t.initial_location.clone(),
                })
                .collect(),
            locations: config.network.locations.clone(),
            edges: config.network.edges.clone(),
            tasks: config
                .tasks
                .iter()
                .map(|t| HaulageTaskDoc {
                    id: t.id.clone(),
                    source: t.source.clone(),
                    destination: t.destination.clone(),
                    material: t.material.clone(),
                    target_rate: t.target_rate,
                })
                .collect(),
            activities: config
                .activities
                .iter()
                .map(|a| ActivityDoc {
                    location: a.location.clone(),
                    activity_type: a.activity_type,
                    nominal_duration: a.nominal_duration,
                })
                .collect(),
            constraints: config.constraint_specs.clone(),
            interaction: InteractionDoc {
                charging_stations: config.interaction.charging_stations,
                loader_rate: config.interaction.loader_rate,
                park_break_duration: config.interaction.park_break_duration,
            },
        }
    }
}

pub fn load_scenario(path: &Path) -> Result<MineConfig, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<MineConfig, ScenarioError> {
    let doc: ScenarioDoc = serde_json::from_str(text)?;
    Ok(doc.into())
}

pub fn scenario_to_json(config: &MineConfig) -> String {
    let doc = ScenarioDoc::from(config);
    serde_json::to_string_pretty(&doc).expect("scenario serializes")
}

pub fn save_scenario(config: &MineConfig, path: &Path) -> Result<(), ScenarioError> {
    std::fs::write(path, scenario_to_json(config))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Built-in scenarios

fn loc(id: &str, kind: LocationKind) -> Location {
    Location {
        id: id.into(),
        kind,
    }
}

fn both_ways(edges: &[(&str, &str, f64)]) -> Vec<Edge> {
    let mut out = Vec::with_capacity(edges.len() * 2);
    for (a, b, d) in edges {
        out.push(Edge {
            from: a.to_string(),
            to: b.to_string(),
            duration: *d,
        });
        out.push(Edge {
            from: b.to_string(),
            to: a.to_string(),
            duration: *d,
        });
    }
    out
}

fn task(id: &str, source: &str, destination: &str, material: &str, rate: f64) -> HaulageTask {
    HaulageTask {
        id: id.into(),
        source: source.into(),
        destination: destination.into(),
        material: material.into(),
        target_rate: rate,
    }
}

/// The shipped mine: four loading stations, three unloading stations, a
/// charging and a parking bay, four tasks moved by five 100 t trucks.
///
/// Figure geometry is synthesized: task T3's round trip is well under half
/// of the other tasks', and the fleet meets the 500 t/h aggregate target
/// with slack when unconstrained. All four constraint blocks are declared;
/// the experiment harness activates one family at a time.
pub fn reference_scenario() -> MineConfig {
    let locations = vec![
        loc("L1", LocationKind::LoadingStation),
        loc("L2", LocationKind::LoadingStation),
        loc("L3", LocationKind::LoadingStation),
        loc("L4", LocationKind::LoadingStation),
        loc("UL1", LocationKind::UnloadingStation),
        loc("UL2", LocationKind::UnloadingStation),
        loc("UL3", LocationKind::UnloadingStation),
        loc("CB", LocationKind::ChargingBay),
        loc("PB", LocationKind::ParkingBay),
    ];
    let edges = both_ways(&[
        // Task legs. T3's leg is much shorter than the rest.
        ("L1", "UL1", 900.0),
        ("L2", "UL2", 1000.0),
        ("L3", "UL3", 1100.0),
        ("L4", "UL1", 120.0),
        // Repositioning roads.
        ("L1", "L2", 600.0),
        ("L2", "L3", 600.0),
        ("L1", "L4", 1000.0),
        ("L3", "L4", 800.0),
        ("UL1", "UL2", 800.0),
        ("UL2", "UL3", 800.0),
        // Charging bay spurs.
        ("CB", "UL1", 400.0),
        ("CB", "L1", 500.0),
        ("CB", "L4", 400.0),
        ("CB", "L2", 600.0),
        ("CB", "L3", 700.0),
        // Parking bay spurs (long enough not to shortcut task legs).
        ("PB", "L1", 700.0),
        ("PB", "UL1", 700.0),
        ("PB", "L4", 600.0),
        ("PB", "CB", 300.0),
    ]);
    let tasks = vec![
        task("T0", "L1", "UL1", "M1", 100.0),
        task("T1", "L2", "UL2", "M2", 100.0),
        task("T2", "L3", "UL3", "waste", 100.0),
        task("T3", "L4", "UL1", "M3", 200.0),
    ];
    let trucks = ["L1", "L2", "L3", "L4", "L1"]
        .iter()
        .enumerate()
        .map(|(i, start)| Truck {
            id: format!("V{}", i + 1),
            capacity: 100.0,
            initial_battery: 100.0,
            initial_tyre_temp: 50.0,
            initial_location: Some(start.to_string()),
        })
        .collect();
    let constraint_specs = vec![
        ConstraintSpec::Battery(BatteryModel::default()),
        ConstraintSpec::Tyre(TyreModel::default()),
        ConstraintSpec::Capacity(CapacitySpec {
            location: "UL1".into(),
            v_min: 50.0,
            v_max: 400.0,
            processing_rate: 300.0,
            initial_volumes: [("M1".to_string(), 100.0), ("M3".to_string(), 200.0)]
                .into_iter()
                .collect(),
        }),
        ConstraintSpec::Ratio(RatioSpec {
            location: "UL1".into(),
            targets: [("M1".to_string(), 0.25), ("M3".to_string(), 0.5)]
                .into_iter()
                .collect(),
            normalization: Default::default(),
            v_max: None,
            processing_rate: None,
            initial_volumes: Default::default(),
        }),
    ];
    MineConfig {
        trucks,
        network: RoadNetwork { locations, edges },
        tasks,
        activities: vec![],
        constraint_specs,
        interaction: InteractionParams::default(),
    }
}

/// Tiny two-truck, two-task mine used by the exhaustive-search oracle tests:
/// task TA is co-located and short, task TB needs a long reposition.
pub fn micro_scenario() -> MineConfig {
    let locations = vec![
        loc("LA", LocationKind::LoadingStation),
        loc("LB", LocationKind::LoadingStation),
        loc("ULA", LocationKind::UnloadingStation),
        loc("ULB", LocationKind::UnloadingStation),
    ];
    let edges = both_ways(&[
        ("LA", "ULA", 300.0),
        ("LB", "ULB", 1200.0),
        ("LA", "LB", 600.0),
        ("ULA", "ULB", 600.0),
        ("ULA", "LB", 900.0),
        ("ULB", "LA", 1500.0),
    ]);
    let tasks = vec![
        task("TA", "LA", "ULA", "M1", 100.0),
        task("TB", "LB", "ULB", "M2", 100.0),
    ];
    let trucks = (0..2)
        .map(|i| Truck {
            id: format!("V{}", i + 1),
            capacity: 100.0,
            initial_battery: 100.0,
            initial_tyre_temp: 50.0,
            initial_location: Some("LA".to_string()),
        })
        .collect();
    MineConfig {
        trucks,
        network: RoadNetwork { locations, edges },
        tasks,
        activities: vec![],
        constraint_specs: vec![],
        interaction: InteractionParams::default(),
    }
}
