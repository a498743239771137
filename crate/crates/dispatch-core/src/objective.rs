//! Goal/flow bookkeeping, the cumulative objective, exponential discounting,
//! and the halftime <-> discount-factor conversion.

use crate::model::{CompiledTask, SECONDS_PER_HOUR};
use crate::sim::FlowLogEntry;

/// Asymmetric piecewise-linear error function: shortfalls are penalized at
/// `shortfall_slope`, surpluses credited at `surplus_slope` (kappa).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorFunctionSpec {
    pub shortfall_slope: f64,
    pub surplus_slope: f64,
}

impl Default for ErrorFunctionSpec {
    fn default() -> Self {
        ErrorFunctionSpec {
            shortfall_slope: 1.0,
            surplus_slope: 0.1,
        }
    }
}

impl ErrorFunctionSpec {
    /// `e(x) = x` for deficits, `kappa * x` for surpluses.
    pub fn eval(&self, x: f64) -> f64 {
        if x < 0.0 {
            self.shortfall_slope * x
        } else {
            self.surplus_slope * x
        }
    }
}

/// Exponential discounting parameters over a planning horizon.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscountSpec {
    /// Discount factor per step, in (0, 1].
    pub zeta: f64,
    /// Discretization step in seconds.
    pub dt: f64,
    /// Planning horizon in seconds.
    pub horizon: f64,
    /// Halftime in seconds (`f64::INFINITY` means no discounting); kept for
    /// reporting, consistent with `zeta` by construction.
    pub halftime: f64,
}

impl DiscountSpec {
    pub const DEFAULT_DT: f64 = 600.0;

    /// Builds the spec from the halftime parameterization.
    pub fn from_halftime(halftime: f64, dt: f64, horizon: f64) -> Self {
        DiscountSpec {
            zeta: halftime_to_discount(halftime, dt),
            dt,
            horizon,
            halftime,
        }
    }

    /// Builds the spec from the sweep parameterization: `H = f_hz * d_r`
    /// and `H_0.5 = f_hf * d_r`.
    pub fn from_factors(d_r: f64, f_hz: f64, f_hf: f64, dt: f64) -> Self {
        Self::from_halftime(f_hf * d_r, dt, f_hz * d_r)
    }

    /// Number of whole discount steps inside the horizon.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).floor() as usize
    }
}

/// Discount factor from the halftime relation `1/2 = zeta^(H_0.5 / dt)`,
/// i.e. `zeta = 0.5^(dt / H_0.5)`. An infinite halftime means no
/// discounting.
pub fn halftime_to_discount(halftime: f64, dt: f64) -> f64 {
    if halftime.is_infinite() {
        1.0
    } else {
        0.5f64.powf(dt / halftime)
    }
}

/// Inverse of [`halftime_to_discount`].
pub fn discount_to_halftime(zeta: f64, dt: f64) -> f64 {
    if zeta >= 1.0 {
        f64::INFINITY
    } else {
        dt * 0.5f64.ln() / zeta.ln()
    }
}

/// Cumulative target volume of a task by time `t` (seconds): `r * t`.
pub fn goal_volume(task: &CompiledTask, t: f64) -> f64 {
    task.target_rate * t / SECONDS_PER_HOUR
}

/// Cumulative volume delivered between a location pair by time `t`.
pub fn cumulative_flow(
    log: &[FlowLogEntry],
    source: crate::model::LocId,
    destination: crate::model::LocId,
    t: f64,
) -> f64 {
    log.iter()
        .filter(|e| e.source == source && e.destination == destination && e.time <= t)
        .map(|e| e.tonnes)
        .sum()
}

/// The cumulative objective: sum over tasks of the error between delivered
/// flow and the goal volume at `t_e`.
pub fn objective_score(
    log: &[FlowLogEntry],
    tasks: &[CompiledTask],
    t_e: f64,
    err: &ErrorFunctionSpec,
) -> f64 {
    tasks
        .iter()
        .map(|task| {
            let flow = cumulative_flow(log, task.source, task.destination, t_e);
            err.eval(flow - goal_volume(task, t_e))
        })
        .sum()
}

/// `o(0) + sum_i zeta^i * delta_i` over a series of per-step objective
/// deltas.
pub fn discounted_objective(o_start: f64, deltas: &[f64], zeta: f64) -> f64 {
    let mut acc = o_start;
    let mut weight = 1.0;
    for delta in deltas {
        weight *= zeta;
        acc += weight * delta;
    }
    acc
}

/// Discounted objective over the window `[t0, t0 + horizon]`, sampling the
/// cumulative objective on the uniform `dt` grid. The flow log must be
/// time-ordered.
pub fn discounted_score(
    log: &[FlowLogEntry],
    tasks: &[CompiledTask],
    err: &ErrorFunctionSpec,
    t0: f64,
    spec: &DiscountSpec,
) -> f64 {
    let steps = spec.steps();
    let mut flows = vec![0.0f64; tasks.len()];
    let mut idx = 0usize;

    let advance_to = |flows: &mut [f64], idx: &mut usize, t: f64| {
        while *idx < log.len() && log[*idx].time <= t {
            let entry = &log[*idx];
            for (j, task) in tasks.iter().enumerate() {
                if task.source == entry.source && task.destination == entry.destination {
                    flows[j] += entry.tonnes;
                }
            }
            *idx += 1;
        }
    };
    let score_at = |flows: &[f64], t: f64| -> f64 {
        tasks
            .iter()
            .zip(flows)
            .map(|(task, f)| err.eval(f - goal_volume(task, t)))
            .sum()
    };

    advance_to(&mut flows, &mut idx, t0);
    let mut prev = score_at(&flows, t0);
    let mut acc = prev;
    let mut weight = 1.0;
    for i in 1..=steps {
        let t = t0 + i as f64 * spec.dt;
        advance_to(&mut flows, &mut idx, t);
        let current = score_at(&flows, t);
        weight *= spec.zeta;
        acc += weight * (current - prev);
        prev = current;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LocId, MaterialId, TaskId};
    use proptest::prelude::*;

    const HOUR: f64 = SECONDS_PER_HOUR;

    fn task(source: u32, destination: u32, rate: f64) -> CompiledTask {
        CompiledTask {
            id: format!("T{source}"),
            source: LocId(source),
            destination: LocId(destination),
            material: MaterialId(0),
            target_rate: rate,
        }
    }

    fn entry(time: f64, source: u32, destination: u32, tonnes: f64) -> FlowLogEntry {
        FlowLogEntry {
            time,
            source: LocId(source),
            destination: LocId(destination),
            material: MaterialId(0),
            tonnes,
            truck: crate::model::TruckId(0),
            task: TaskId(0),
        }
    }

    #[test]
    fn goal_volume_examples() {
        assert_eq!(goal_volume(&task(0, 1, 100.0), 2.0 * HOUR), 200.0);
        assert_eq!(goal_volume(&task(0, 1, 100.0), 0.0), 0.0);
        assert_eq!(goal_volume(&task(0, 1, 200.0), 0.5 * HOUR), 100.0);
    }

    #[test]
    fn cumulative_flow_examples() {
        assert_eq!(cumulative_flow(&[], LocId(0), LocId(1), 100.0), 0.0);
        let log = vec![entry(1000.0, 0, 1, 100.0), entry(2000.0, 0, 1, 100.0)];
        assert_eq!(cumulative_flow(&log, LocId(0), LocId(1), 1500.0), 100.0);
        assert_eq!(cumulative_flow(&log, LocId(2), LocId(1), 1500.0), 0.0);
    }

    #[test]
    fn objective_score_examples() {
        let err = ErrorFunctionSpec::default();
        let tasks = vec![task(0, 1, 100.0)];
        // Exactly on target.
        let log = vec![entry(0.0, 0, 1, 200.0)];
        assert_eq!(objective_score(&log, &tasks, 2.0 * HOUR, &err), 0.0);
        // 50 t short.
        let log = vec![entry(0.0, 0, 1, 150.0)];
        assert_eq!(objective_score(&log, &tasks, 2.0 * HOUR, &err), -50.0);
        // 50 t surplus at kappa = 0.1.
        let log = vec![entry(0.0, 0, 1, 250.0)];
        assert!((objective_score(&log, &tasks, 2.0 * HOUR, &err) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn discounted_objective_examples() {
        assert_eq!(discounted_objective(0.0, &[10.0, 10.0], 1.0), 20.0);
        assert!((discounted_objective(0.0, &[10.0, 10.0], 0.5) - 7.5).abs() < 1e-12);
        assert_eq!(discounted_objective(3.25, &[0.0, 0.0, 0.0], 0.9), 3.25);
    }

    #[test]
    fn halftime_to_discount_examples() {
        // 7 h halftime at 600 s steps rounds to the reported 0.98.
        let zeta = halftime_to_discount(7.0 * HOUR, 600.0);
        assert!((zeta - 0.5f64.powf(1.0 / 42.0)).abs() < 1e-15);
        assert!((zeta - 0.983632).abs() < 1e-6);
        assert_eq!(format!("{zeta:.2}"), "0.98");

        assert!((halftime_to_discount(600.0, 600.0) - 0.5).abs() < 1e-15);
        assert_eq!(halftime_to_discount(f64::INFINITY, 600.0), 1.0);
    }

    #[test]
    fn discounted_score_reduces_to_plain_sum_without_discount() {
        let tasks = vec![task(0, 1, 100.0)];
        let err = ErrorFunctionSpec::default();
        let log = vec![entry(300.0, 0, 1, 100.0), entry(4000.0, 0, 1, 100.0)];
        let spec = DiscountSpec::from_halftime(f64::INFINITY, 600.0, 2.0 * HOUR);
        let discounted = discounted_score(&log, &tasks, &err, 0.0, &spec);
        // With zeta = 1 the telescoping sum collapses to the final objective.
        let plain = objective_score(&log, &tasks, 2.0 * HOUR, &err);
        assert!((discounted - plain).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn halftime_round_trip(halftime_hours in 0.2..50.0f64, dt in 60.0..3600.0f64) {
            let halftime = halftime_hours * HOUR;
            let zeta = halftime_to_discount(halftime, dt);
            let recovered = discount_to_halftime(zeta, dt);
            prop_assert!((recovered - halftime).abs() <= 1e-9 * halftime);
        }

        #[test]
        fn delivery_on_shortfall_task_never_decreases_score(
            delivered in 0.0..150.0f64,
            extra in 0.0..100.0f64,
            t_hours in 1.0..5.0f64,
        ) {
            let tasks = vec![task(0, 1, 100.0)];
            let err = ErrorFunctionSpec::default();
            let t_e = t_hours * HOUR;
            prop_assume!(delivered < 100.0 * t_hours); // task in shortfall
            let log = vec![entry(0.0, 0, 1, delivered)];
            let before = objective_score(&log, &tasks, t_e, &err);
            let log = vec![entry(0.0, 0, 1, delivered), entry(1.0, 0, 1, extra)];
            let after = objective_score(&log, &tasks, t_e, &err);
            prop_assert!(after >= before - 1e-12);
        }

        #[test]
        fn earlier_increments_worth_more(zeta in 0.1..0.999f64, delta in 0.1..100.0f64) {
            let early = discounted_objective(0.0, &[delta, 0.0, 0.0], zeta);
            let late = discounted_objective(0.0, &[0.0, 0.0, delta], zeta);
            prop_assert!(early > late);
        }
    }
}
