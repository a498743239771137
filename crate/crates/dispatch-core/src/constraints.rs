//! Operational-constraint models: battery, tyre temperature, crusher
//! capacity and material-ratio dynamics, their violation-delay generators,
//! and the rollout probability heuristics.
//!
//! Violation delays realize opportunity costs inside the generator model:
//! a soft violation stretches the triggering activity, a hard violation
//! freezes the truck for the remainder of the evaluation horizon. The
//! functions here are pure; the sim engine wires them into state
//! transitions.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{
    ActivityType, LocationKind, MaterialId, MineConfig, ValidationReport, AMBIENT_TEMP,
    SECONDS_PER_HOUR,
};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Flexibility {
    Hard,
    Soft,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Specificity {
    PerVehicle,
    Collective,
}

/// Per-activity battery rates in percent per hour. Discharge rates are
/// non-positive; the charge rate lives in [`BatteryModel::k_charge`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DischargeRates {
    pub transit: f64,
    pub load: f64,
    pub unload: f64,
    pub queue: f64,
    pub park: f64,
}

impl Default for DischargeRates {
    fn default() -> Self {
        DischargeRates {
            transit: -30.0,
            load: -15.0,
            unload: -15.0,
            queue: -5.0,
            park: 0.0,
        }
    }
}

/// Linear charging/discharging model. Hard, per-vehicle constraint
/// `b > B_min`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatteryModel {
    #[serde(rename = "B_min")]
    pub b_min: f64,
    pub k_charge: f64,
    pub k_discharge: DischargeRates,
}

impl Default for BatteryModel {
    fn default() -> Self {
        BatteryModel {
            b_min: 10.0,
            k_charge: 25.0,
            k_discharge: DischargeRates::default(),
        }
    }
}

impl BatteryModel {
    /// Signed rate in percent/hour for an activity type.
    pub fn rate(&self, activity: ActivityType) -> f64 {
        match activity {
            ActivityType::Transit => self.k_discharge.transit,
            ActivityType::Load => self.k_discharge.load,
            ActivityType::Unload => self.k_discharge.unload,
            ActivityType::Queue => self.k_discharge.queue,
            ActivityType::Park => self.k_discharge.park,
            ActivityType::Charge => self.k_charge,
        }
    }
}

/// The printed cooling law in the source model is discontinuous at d = 0;
/// the corrected form decays the excess over ambient instead.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoolingForm {
    #[default]
    Corrected,
    Literal,
}

/// Linear heating / exponential cooling tyre model. Soft constraint
/// `y < Y_th`, with a hard cap `Y_max` used by the baseline guards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TyreModel {
    #[serde(rename = "Y_th")]
    pub y_th: f64,
    #[serde(rename = "Y_max")]
    pub y_max: f64,
    /// Heating rate while transiting, degrees C per hour.
    pub k_h: f64,
    /// Cooling constant, 1/hour.
    pub k_c: f64,
    /// Violation delay scaling factor.
    #[serde(rename = "K")]
    pub scaling_k: f64,
    /// Target temperature a parked truck cools down to.
    pub y_final: f64,
    pub cooling_form: CoolingForm,
}

impl Default for TyreModel {
    fn default() -> Self {
        TyreModel {
            y_th: 80.0,
            y_max: 90.0,
            k_h: 20.0,
            k_c: 0.4,
            scaling_k: 1.0,
            y_final: 50.0,
            cooling_form: CoolingForm::Corrected,
        }
    }
}

/// Whether bin ratios are normalized by bin capacity (the source model's
/// literal form) or by the current total volume.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioNormalization {
    #[default]
    Capacity,
    CurrentTotal,
}

/// Minimum-volume constraint block at an unloading station. Hard, collective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacitySpec {
    pub location: String,
    #[serde(rename = "V_min")]
    pub v_min: f64,
    #[serde(rename = "V_max")]
    pub v_max: f64,
    #[serde(rename = "p")]
    pub processing_rate: f64,
    #[serde(default)]
    pub initial_volumes: HashMap<String, f64>,
}

/// Material-ratio constraint block at an unloading station. Soft, collective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioSpec {
    pub location: String,
    /// Target ratio per material, interpreted per `normalization`.
    pub targets: HashMap<String, f64>,
    #[serde(default)]
    pub normalization: RatioNormalization,
    #[serde(rename = "V_max", default)]
    pub v_max: Option<f64>,
    #[serde(rename = "p", default)]
    pub processing_rate: Option<f64>,
    #[serde(default)]
    pub initial_volumes: HashMap<String, f64>,
}

/// Compiled crusher parameters (capacity and ratio blocks merged).
#[derive(Clone, Debug, PartialEq)]
pub struct CrusherModel {
    pub v_min: f64,
    pub v_max: f64,
    /// Nominal processing rate, tonnes per hour.
    pub processing_rate: f64,
    pub ratio_targets: Vec<(MaterialId, f64)>,
    pub normalization: RatioNormalization,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ConstraintSpec {
    Battery(BatteryModel),
    Tyre(TyreModel),
    Capacity(CapacitySpec),
    Ratio(RatioSpec),
}

impl ConstraintSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ConstraintSpec::Battery(_) => "battery",
            ConstraintSpec::Tyre(_) => "tyre",
            ConstraintSpec::Capacity(_) => "capacity",
            ConstraintSpec::Ratio(_) => "ratio",
        }
    }

    pub fn flexibility(&self) -> Flexibility {
        match self {
            ConstraintSpec::Battery(_) | ConstraintSpec::Capacity(_) => Flexibility::Hard,
            ConstraintSpec::Tyre(_) | ConstraintSpec::Ratio(_) => Flexibility::Soft,
        }
    }

    pub fn specificity(&self) -> Specificity {
        match self {
            ConstraintSpec::Battery(_) | ConstraintSpec::Tyre(_) => Specificity::PerVehicle,
            ConstraintSpec::Capacity(_) | ConstraintSpec::Ratio(_) => Specificity::Collective,
        }
    }

    pub(crate) fn validate(&self, config: &MineConfig, report: &mut ValidationReport) {
        let mut push = |msg: String| {
            report.issues.push(crate::model::ValidationIssue {
                subject: format!("constraint {}", self.kind_name()),
                message: msg,
            })
        };
        let station_kind = |name: &str| {
            config
                .network
                .locations
                .iter()
                .find(|l| l.id == name)
                .map(|l| l.kind)
        };
        match self {
            ConstraintSpec::Battery(m) => {
                if !(0.0..100.0).contains(&m.b_min) {
                    push("B_min outside [0, 100)".into());
                }
                if !(m.k_charge > 0.0) {
                    push("k_charge must be positive".into());
                }
                let d = &m.k_discharge;
                for (name, rate) in [
                    ("transit", d.transit),
                    ("load", d.load),
                    ("unload", d.unload),
                    ("queue", d.queue),
                    ("park", d.park),
                ] {
                    if rate > 0.0 {
                        push(format!("k_discharge.{name} must be non-positive"));
                    }
                }
            }
            ConstraintSpec::Tyre(m) => {
                if !(AMBIENT_TEMP < m.y_th && m.y_th <= m.y_max && m.y_max <= 95.0) {
                    push("requires 35 < Y_th <= Y_max <= 95".into());
                }
                if !(m.k_h > 0.0) {
                    push("k_h must be positive".into());
                }
                if !(m.k_c > 0.0) {
                    push("k_c must be positive".into());
                }
                if m.scaling_k < 0.0 {
                    push("K must be non-negative".into());
                }
                if m.y_final <= AMBIENT_TEMP {
                    push("y_final must exceed ambient temperature".into());
                }
            }
            ConstraintSpec::Capacity(c) => {
                if !(0.0 <= c.v_min && c.v_min < c.v_max) {
                    push("requires 0 <= V_min < V_max".into());
                }
                if !(c.processing_rate > 0.0) {
                    push("p must be positive".into());
                }
                match station_kind(&c.location) {
                    None => push(format!("unknown location `{}`", c.location)),
                    Some(LocationKind::UnloadingStation) => {}
                    Some(_) => push("capacity constraint must target an unloading station".into()),
                }
                let total: f64 = c.initial_volumes.values().sum();
                if c.initial_volumes.values().any(|v| *v < 0.0) || total > c.v_max {
                    push("initial volumes must be non-negative and fit in V_max".into());
                }
            }
            ConstraintSpec::Ratio(r) => {
                if r.targets.is_empty() {
                    push("ratio targets must not be empty".into());
                }
                if r.targets.values().any(|v| !(*v > 0.0)) {
                    push("ratio targets must be positive".into());
                }
                if let Some(v_max) = r.v_max {
                    if !(v_max > 0.0) {
                        push("V_max must be positive".into());
                    }
                }
                if let Some(p) = r.processing_rate {
                    if !(p > 0.0) {
                        push("p must be positive".into());
                    }
                }
                match station_kind(&r.location) {
                    None => push(format!("unknown location `{}`", r.location)),
                    Some(LocationKind::UnloadingStation) => {}
                    Some(_) => push("ratio constraint must target an unloading station".into()),
                }
                let known = |name: &String| config.tasks.iter().any(|t| &t.material == name);
                for name in r.targets.keys().chain(r.initial_volumes.keys()) {
                    if !known(name) {
                        push(format!("material `{name}` not moved by any task"));
                    }
                }
            }
        }
    }
}

/// Extra duration imposed on an activity by a constraint violation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ViolationDelay {
    /// Finite delay in seconds, always non-negative.
    Finite(f64),
    /// Hard violation: the truck is unavailable for the rest of the horizon.
    Infinite,
}

impl ViolationDelay {
    pub const ZERO: ViolationDelay = ViolationDelay::Finite(0.0);

    pub fn seconds(&self) -> Option<f64> {
        match self {
            ViolationDelay::Finite(s) => Some(*s),
            ViolationDelay::Infinite => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, ViolationDelay::Infinite)
    }
}

impl fmt::Display for ViolationDelay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationDelay::Finite(s) => write!(f, "{s}s"),
            ViolationDelay::Infinite => f.write_str("infinite"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConstraintError {
    #[error("context does not match constraint kind `{0}`")]
    ContextMismatch(&'static str),
    #[error("cooldown target {0} is not above ambient temperature")]
    CooldownTargetBelowAmbient(f64),
}

// ---------------------------------------------------------------------------
// Battery

/// `b' = clamp(b + k_a * d, 0, 100)` with `k_a` the signed rate for the
/// activity.
pub fn update_battery(b: f64, activity: ActivityType, d: f64, model: &BatteryModel) -> f64 {
    (b + model.rate(activity) * d / SECONDS_PER_HOUR).clamp(0.0, 100.0)
}

/// Duration of a charge-to-full in seconds: `(100 - b) / k_charge`.
pub fn charge_duration(b: f64, model: &BatteryModel) -> f64 {
    (100.0 - b) / model.k_charge * SECONDS_PER_HOUR
}

// ---------------------------------------------------------------------------
// Tyre temperature

/// Heating while transiting, exponential decay toward ambient otherwise.
pub fn update_tyre_temperature(y: f64, activity: ActivityType, d: f64, model: &TyreModel) -> f64 {
    if activity == ActivityType::Transit {
        y + model.k_h * d / SECONDS_PER_HOUR
    } else {
        let decay = (-model.k_c * d / SECONDS_PER_HOUR).exp();
        match model.cooling_form {
            CoolingForm::Corrected => AMBIENT_TEMP + (y - AMBIENT_TEMP) * decay,
            CoolingForm::Literal => AMBIENT_TEMP + y * decay,
        }
    }
}

/// Time for a parked truck to cool from `y` to `y_final`, inverse of the
/// corrected cooling law. Zero when already at or below the target.
pub fn park_cooldown_duration(y: f64, y_final: f64, model: &TyreModel) -> Result<f64, ConstraintError> {
    if y_final <= AMBIENT_TEMP {
        return Err(ConstraintError::CooldownTargetBelowAmbient(y_final));
    }
    if y <= y_final {
        return Ok(0.0);
    }
    Ok(((y - AMBIENT_TEMP) / (y_final - AMBIENT_TEMP)).ln() / model.k_c * SECONDS_PER_HOUR)
}

/// Soft-constraint delay: transiting with hot tyres slows the truck down by
/// `K * d`. No delay while cooling.
pub fn tyre_violation_delay(y: f64, activity: ActivityType, d_alpha: f64, model: &TyreModel) -> ViolationDelay {
    if y > model.y_th && activity == ActivityType::Transit {
        ViolationDelay::Finite(model.scaling_k * d_alpha)
    } else {
        ViolationDelay::ZERO
    }
}

// ---------------------------------------------------------------------------
// Crusher capacity and ratio dynamics

/// Drains `volumes` over `d` seconds at the effective processing rate and
/// returns the tonnes processed. The rate is the nominal `p` scaled by
/// `exp(-max_e)` while a ratio constraint is active, held constant over the
/// interval (errors are re-evaluated at the next advance). Floors at zero and
/// removes material proportionally to the current composition.
pub fn crusher_advance(volumes: &mut [f64], d: f64, model: &CrusherModel) -> f64 {
    let total: f64 = volumes.iter().sum();
    if d <= 0.0 || total <= 0.0 {
        return 0.0;
    }
    let rate = effective_processing_rate(volumes, model);
    let drained = (rate * d / SECONDS_PER_HOUR).min(total);
    if drained >= total {
        volumes.iter_mut().for_each(|v| *v = 0.0);
        total
    } else {
        let keep = (total - drained) / total;
        volumes.iter_mut().for_each(|v| *v *= keep);
        drained
    }
}

/// `p * exp(-max_j e_j)` under a ratio constraint, plain `p` otherwise.
pub fn effective_processing_rate(volumes: &[f64], model: &CrusherModel) -> f64 {
    if model.ratio_targets.is_empty() {
        model.processing_rate
    } else {
        model.processing_rate * (-max_ratio_error(volumes, model)).exp()
    }
}

/// Relative ratio error per constrained material:
/// `e_j = |(r_j - r*_j) / r*_j|`.
pub fn ratio_errors(volumes: &[f64], model: &CrusherModel) -> Vec<(MaterialId, f64)> {
    let total: f64 = volumes.iter().sum();
    model
        .ratio_targets
        .iter()
        .map(|&(mat, target)| {
            let v = volumes[mat.index()];
            let r = match model.normalization {
                RatioNormalization::Capacity => v / model.v_max,
                RatioNormalization::CurrentTotal => {
                    if total > 0.0 {
                        v / total
                    } else {
                        0.0
                    }
                }
            };
            (mat, ((r - target) / target).abs())
        })
        .collect()
}

pub fn max_ratio_error(volumes: &[f64], model: &CrusherModel) -> f64 {
    ratio_errors(volumes, model)
        .iter()
        .map(|(_, e)| *e)
        .fold(0.0, f64::max)
}

pub(crate) fn ratio_delay_from_error(overflow: f64, max_e: f64, processing_rate: f64) -> f64 {
    if overflow <= 0.0 {
        return 0.0;
    }
    overflow * (max_e.exp() - 1.0) / processing_rate * SECONDS_PER_HOUR
}

/// Extra wait imposed on a truck reaching the crusher queue front at a bin
/// state `volumes`: the additional time for the crusher to make room for the
/// truck's capacity at the degraded rate instead of the nominal one. Zero
/// when the load fits, or when ratios are exactly on target.
pub fn ratio_queue_delay(truck_capacity: f64, volumes: &[f64], model: &CrusherModel) -> ViolationDelay {
    let total: f64 = volumes.iter().sum();
    let overflow = truck_capacity + total - model.v_max;
    ViolationDelay::Finite(ratio_delay_from_error(
        overflow,
        max_ratio_error(volumes, model),
        model.processing_rate,
    ))
}

// ---------------------------------------------------------------------------
// Violation delay dispatch and rollout heuristics

/// Constrained variables and triggering activity for a delay evaluation.
#[derive(Clone, Debug)]
pub enum ViolationContext<'a> {
    /// Battery level of the acting truck after the activity.
    Battery { battery: f64 },
    /// Tyre temperature at the start of the activity.
    Tyre {
        tyre: f64,
        activity: ActivityType,
        duration: f64,
    },
    /// Total bin volume when the truck starts unloading at the crusher.
    Capacity { bin_volume: f64 },
    /// Bin state when the truck reaches the crusher queue front.
    Ratio {
        truck_capacity: f64,
        volumes: &'a [f64],
    },
}

/// Delay generator dispatch (soft constraints yield finite delays, hard
/// constraints an infinite one for the violating or interacting truck).
pub fn violation_delay(spec: &ConstraintSpec, ctx: &ViolationContext) -> Result<ViolationDelay, ConstraintError> {
    match (spec, ctx) {
        (ConstraintSpec::Battery(m), ViolationContext::Battery { battery }) => {
            if *battery < m.b_min {
                Ok(ViolationDelay::Infinite)
            } else {
                Ok(ViolationDelay::ZERO)
            }
        }
        (ConstraintSpec::Tyre(m), ViolationContext::Tyre { tyre, activity, duration }) => {
            Ok(tyre_violation_delay(*tyre, *activity, *duration, m))
        }
        (ConstraintSpec::Capacity(c), ViolationContext::Capacity { bin_volume }) => {
            if *bin_volume <= c.v_min {
                Ok(ViolationDelay::Infinite)
            } else {
                Ok(ViolationDelay::ZERO)
            }
        }
        (ConstraintSpec::Ratio(_), ViolationContext::Ratio { .. }) => {
            // The compiled crusher model owns the target vector; callers use
            // `ratio_queue_delay` directly. Kept here for dispatch symmetry.
            Err(ConstraintError::ContextMismatch("ratio (use ratio_queue_delay)"))
        }
        (spec, _) => Err(ConstraintError::ContextMismatch(spec.kind_name())),
    }
}

/// Buffer-queue heuristic check: holding applies only to the
/// lowest-proportion material (smallest ratio target), and only when
/// unloading `tonnes` of it now would push its ratio above the target.
pub fn ratio_buffer_hold(
    volumes: &[f64],
    model: &CrusherModel,
    material: MaterialId,
    tonnes: f64,
) -> bool {
    let Some(&(low_mat, low_target)) = model
        .ratio_targets
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
    else {
        return false;
    };
    if material != low_mat {
        return false;
    }
    let projected = match model.normalization {
        RatioNormalization::Capacity => (volumes[material.index()] + tonnes) / model.v_max,
        RatioNormalization::CurrentTotal => {
            let total: f64 = volumes.iter().sum();
            (volumes[material.index()] + tonnes) / (total + tonnes)
        }
    };
    projected > low_target + 1e-9
}

/// Opportunity-cost inclusive cumulative objective: the same computation as
/// the plain (or discounted) objective, evaluated on a trajectory whose
/// activity durations already include the violation delays. Finite delays
/// postpone deliveries in the log; an infinite delay freezes its truck, so
/// the truck's flow contribution stays at its pre-violation value for the
/// rest of the horizon. With all delays zero this is exactly the plain
/// objective.
pub fn opportunity_cost_objective(
    log: &[crate::sim::FlowLogEntry],
    tasks: &[crate::model::CompiledTask],
    t_e: f64,
    err: &crate::objective::ErrorFunctionSpec,
    discount: Option<(f64, &crate::objective::DiscountSpec)>,
) -> f64 {
    match discount {
        None => crate::objective::objective_score(log, tasks, t_e, err),
        Some((t0, spec)) => crate::objective::discounted_score(log, tasks, err, t0, spec),
    }
}

/// Probability that the rollout policy picks `charge`: the closeness of the
/// battery to its violation threshold, `(100 - b) / (100 - B_min)`.
pub fn charge_probability(b: f64, model: &BatteryModel) -> f64 {
    ((100.0 - b) / (100.0 - model.b_min)).clamp(0.0, 1.0)
}

/// Tyre analogue of [`charge_probability`]: `(y - 35) / (Y_th - 35)`.
pub fn park_probability(y: f64, model: &TyreModel) -> f64 {
    ((y - AMBIENT_TEMP) / (model.y_th - AMBIENT_TEMP)).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HOUR: f64 = SECONDS_PER_HOUR;

    fn battery() -> BatteryModel {
        BatteryModel::default()
    }

    fn tyre() -> TyreModel {
        TyreModel::default()
    }

    #[test]
    fn battery_discharges_linearly() {
        let b = update_battery(25.0, ActivityType::Transit, 0.5 * HOUR, &battery());
        assert!((b - 10.0).abs() < 1e-12);
    }

    #[test]
    fn battery_clamps_at_full() {
        let b = update_battery(50.0, ActivityType::Charge, 4.0 * HOUR, &battery());
        assert_eq!(b, 100.0);
    }

    #[test]
    fn battery_zero_duration_is_identity() {
        let b = update_battery(42.5, ActivityType::Load, 0.0, &battery());
        assert_eq!(b, 42.5);
    }

    #[test]
    fn charge_duration_examples() {
        let m = battery();
        assert!((charge_duration(25.0, &m) - 3.0 * HOUR).abs() < 1e-9);
        assert_eq!(charge_duration(100.0, &m), 0.0);
        // Empty to full takes about 4 hours with the default rate.
        assert!((charge_duration(0.0, &m) - 4.0 * HOUR).abs() < 1e-9);
    }

    #[test]
    fn tyre_heats_linearly_in_transit() {
        let y = update_tyre_temperature(60.0, ActivityType::Transit, 1.0 * HOUR, &tyre());
        assert!((y - 80.0).abs() < 1e-12);
    }

    #[test]
    fn tyre_cools_toward_ambient() {
        let mut m = tyre();
        m.k_c = 0.5;
        let y = update_tyre_temperature(85.0, ActivityType::Queue, 1e9, &m);
        assert!((y - AMBIENT_TEMP).abs() < 1e-9);
    }

    #[test]
    fn corrected_cooling_is_continuous_at_zero() {
        let y = update_tyre_temperature(72.0, ActivityType::Unload, 0.0, &tyre());
        assert_eq!(y, 72.0);
        // The literal form jumps at d = 0; that discontinuity is the reason
        // the corrected form is the default.
        let mut literal = tyre();
        literal.cooling_form = CoolingForm::Literal;
        let y = update_tyre_temperature(72.0, ActivityType::Unload, 0.0, &literal);
        assert_eq!(y, AMBIENT_TEMP + 72.0);
    }

    #[test]
    fn cooling_fixed_point_is_ambient() {
        let y = update_tyre_temperature(AMBIENT_TEMP, ActivityType::Park, 1234.5, &tyre());
        assert!((y - AMBIENT_TEMP).abs() < 1e-12);
    }

    #[test]
    fn park_cooldown_examples() {
        let mut m = tyre();
        m.k_c = 0.5;
        let d = park_cooldown_duration(85.0, 55.0, &m).unwrap();
        assert!((d - 2.0 * (50.0f64 / 20.0).ln() * HOUR).abs() < 1e-9);
        assert_eq!(park_cooldown_duration(70.0, 70.0, &m).unwrap(), 0.0);
        m.k_c = 1.0;
        let d = park_cooldown_duration(95.0, 65.0, &m).unwrap();
        assert!((d - 2.0f64.ln() * HOUR).abs() < 1e-9);
        assert!(park_cooldown_duration(80.0, 35.0, &m).is_err());
    }

    #[test]
    fn tyre_delay_only_when_hot_and_transiting() {
        let m = tyre();
        assert_eq!(
            tyre_violation_delay(85.0, ActivityType::Transit, 900.0, &m),
            ViolationDelay::Finite(900.0)
        );
        assert_eq!(
            tyre_violation_delay(85.0, ActivityType::Queue, 900.0, &m),
            ViolationDelay::ZERO
        );
        assert_eq!(
            tyre_violation_delay(70.0, ActivityType::Transit, 900.0, &m),
            ViolationDelay::ZERO
        );
    }

    fn crusher(targets: Vec<(MaterialId, f64)>) -> CrusherModel {
        CrusherModel {
            v_min: 0.0,
            v_max: 400.0,
            processing_rate: 600.0,
            ratio_targets: targets,
            normalization: RatioNormalization::Capacity,
        }
    }

    #[test]
    fn crusher_drains_linearly_without_ratio() {
        let model = crusher(vec![]);
        let mut volumes = vec![300.0];
        let drained = crusher_advance(&mut volumes, 0.25 * HOUR, &model);
        assert!((volumes[0] - 150.0).abs() < 1e-12);
        assert!((drained - 150.0).abs() < 1e-12);
    }

    #[test]
    fn crusher_floors_at_zero() {
        let model = crusher(vec![]);
        let mut volumes = vec![50.0];
        let drained = crusher_advance(&mut volumes, 1.0 * HOUR, &model);
        assert_eq!(volumes[0], 0.0);
        assert_eq!(drained, 50.0);
    }

    #[test]
    fn crusher_zero_interval_is_identity() {
        let model = crusher(vec![]);
        let mut volumes = vec![123.0];
        assert_eq!(crusher_advance(&mut volumes, 0.0, &model), 0.0);
        assert_eq!(volumes[0], 123.0);
    }

    #[test]
    fn ratio_degrades_processing_rate() {
        // Targets (0.5, 0.25) with bin (200, 200): e = (|0.5-0.5|/0.5, |0.5-0.25|/0.25)
        // = (0, 1), so the rate drops to p / e.
        let model = crusher(vec![(MaterialId(0), 0.5), (MaterialId(1), 0.25)]);
        let volumes = vec![200.0, 200.0];
        let rate = effective_processing_rate(&volumes, &model);
        assert!((rate - 600.0 * (-1.0f64).exp()).abs() < 1e-9);
        assert!((rate - 220.728).abs() < 1e-3);
    }

    #[test]
    fn ratio_errors_examples() {
        let model = crusher(vec![(MaterialId(0), 0.25), (MaterialId(1), 0.5)]);
        let on_target = ratio_errors(&[100.0, 200.0], &model);
        assert!(on_target.iter().all(|(_, e)| *e < 1e-12));

        let swapped = ratio_errors(&[200.0, 100.0], &model);
        assert!((swapped[0].1 - 1.0).abs() < 1e-12);
        assert!((swapped[1].1 - 0.5).abs() < 1e-12);
        assert!((max_ratio_error(&[200.0, 100.0], &model) - 1.0).abs() < 1e-12);

        let empty = ratio_errors(&[0.0, 0.0], &model);
        assert!(empty.iter().all(|(_, e)| (*e - 1.0).abs() < 1e-12));
    }

    #[test]
    fn ratio_queue_delay_zero_without_overflow() {
        let model = crusher(vec![(MaterialId(0), 0.25)]);
        let d = ratio_queue_delay(100.0, &[250.0], &model);
        assert_eq!(d, ViolationDelay::ZERO);
    }

    #[test]
    fn ratio_queue_delay_matches_drain_simulation_oracle() {
        // Oracle: step a crusher bin at the degraded rate and at the nominal
        // rate until the 50 t overflow is processed; the delay is the
        // difference in completion times.
        let overflow = 50.0;
        let p = 500.0;
        let max_e = 1.0f64;
        let degraded = p * (-max_e).exp();
        let dt = 1e-4; // hours
        let mut processed = 0.0;
        let mut t_degraded = 0.0;
        while processed < overflow {
            processed += degraded * dt;
            t_degraded += dt;
        }
        let mut processed = 0.0;
        let mut t_nominal = 0.0;
        while processed < overflow {
            processed += p * dt;
            t_nominal += dt;
        }
        let oracle_seconds = (t_degraded - t_nominal) * HOUR;
        // Closed form: 50 * (e - 1) / 500 hours = 618.59 s.
        assert!((oracle_seconds - 618.589).abs() < 2.0, "oracle {oracle_seconds}");

        let model = CrusherModel {
            v_min: 0.0,
            v_max: 400.0,
            processing_rate: p,
            ratio_targets: vec![(MaterialId(0), 0.5), (MaterialId(1), 0.25)],
            normalization: RatioNormalization::Capacity,
        };
        // Bin (200, 200): max_e = 1 as in ratio_degrades_processing_rate.
        let delay = ratio_queue_delay(100.0, &[150.0, 200.0], &model);
        // Overflow = 100 + 350 - 400 = 50; error of material 1: |0.5-0.25|/0.25 = 1.
        match delay {
            ViolationDelay::Finite(s) => {
                assert!((s - oracle_seconds).abs() < 2.0, "delay {s} vs oracle {oracle_seconds}");
                // Closed form: 50 * (e - 1) / 500 h = 618.581 s.
                assert!((s - 618.581458).abs() < 1e-3, "delay {s}");
            }
            ViolationDelay::Infinite => panic!("ratio delay must be finite"),
        }
    }

    #[test]
    fn ratio_queue_delay_zero_when_on_target() {
        let model = crusher(vec![(MaterialId(0), 0.25), (MaterialId(1), 0.5)]);
        // Ratios exactly on target: e = 0, so even an overflowing truck
        // incurs no extra delay.
        let d = ratio_queue_delay(200.0, &[100.0, 200.0], &model);
        assert_eq!(d, ViolationDelay::ZERO);
    }

    #[test]
    fn violation_delay_dispatch() {
        let spec = ConstraintSpec::Battery(battery());
        let d = violation_delay(&spec, &ViolationContext::Battery { battery: 7.0 }).unwrap();
        assert!(d.is_infinite());
        let d = violation_delay(&spec, &ViolationContext::Battery { battery: 10.0 }).unwrap();
        assert_eq!(d, ViolationDelay::ZERO);

        let cap = ConstraintSpec::Capacity(CapacitySpec {
            location: "UL1".into(),
            v_min: 50.0,
            v_max: 400.0,
            processing_rate: 300.0,
            initial_volumes: HashMap::new(),
        });
        let d = violation_delay(&cap, &ViolationContext::Capacity { bin_volume: 100.0 }).unwrap();
        assert_eq!(d, ViolationDelay::ZERO);
        let d = violation_delay(&cap, &ViolationContext::Capacity { bin_volume: 50.0 }).unwrap();
        assert!(d.is_infinite());

        let tyre_spec = ConstraintSpec::Tyre(tyre());
        let d = violation_delay(
            &tyre_spec,
            &ViolationContext::Tyre {
                tyre: 85.0,
                activity: ActivityType::Transit,
                duration: 900.0,
            },
        )
        .unwrap();
        assert_eq!(d, ViolationDelay::Finite(900.0));

        assert!(violation_delay(&spec, &ViolationContext::Capacity { bin_volume: 1.0 }).is_err());
    }

    #[test]
    fn charge_probability_examples() {
        let m = battery();
        assert_eq!(charge_probability(100.0, &m), 0.0);
        assert_eq!(charge_probability(m.b_min, &m), 1.0);
        assert!((charge_probability(55.0, &m) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn park_probability_mirrors_charge_probability() {
        let m = tyre();
        assert_eq!(park_probability(AMBIENT_TEMP, &m), 0.0);
        assert_eq!(park_probability(m.y_th, &m), 1.0);
        assert!((park_probability(57.5, &m) - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn battery_stays_in_range(b in 0.0..=100.0f64, d in 0.0..10.0f64, act in 0usize..6) {
            let m = battery();
            let b2 = update_battery(b, ActivityType::ALL[act], d * HOUR, &m);
            prop_assert!((0.0..=100.0).contains(&b2));
        }

        #[test]
        fn cooldown_inverts_cooling(y in 40.0..95.0f64, frac in 0.05..0.95f64, k_c in 0.1..2.0f64) {
            let mut m = tyre();
            m.k_c = k_c;
            let y_final = AMBIENT_TEMP + (y - AMBIENT_TEMP) * frac;
            let d = park_cooldown_duration(y, y_final, &m).unwrap();
            let cooled = update_tyre_temperature(y, ActivityType::Park, d, &m);
            prop_assert!((cooled - y_final).abs() <= 1e-9 * y_final.abs());
        }

        #[test]
        fn ratio_delay_monotone_in_error(overflow in 0.0..500.0f64, e1 in 0.0..3.0f64, e2 in 0.0..3.0f64, p in 50.0..1000.0f64) {
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            prop_assert!(ratio_delay_from_error(overflow, lo, p) <= ratio_delay_from_error(overflow, hi, p));
        }

        #[test]
        fn finite_delays_are_non_negative(y in 35.0..120.0f64, d in 0.0..7200.0f64, act in 0usize..6) {
            let m = tyre();
            match tyre_violation_delay(y, ActivityType::ALL[act], d, &m) {
                ViolationDelay::Finite(s) => prop_assert!(s >= 0.0),
                ViolationDelay::Infinite => {}
            }
        }
    }
}
