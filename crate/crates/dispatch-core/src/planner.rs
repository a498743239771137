//! FAST / FAST-CON search: a decision tree over system-wide dispatch
//! decisions, self-tuned UCB selection, constraint-aware rollouts with
//! discounted backpropagation, and receding-horizon execution.
//!
//! FAST-CON is FAST with constraint actions in the action space and the
//! violation delays of the constraints module realized inside the generator
//! model; with an empty constraint set the two coincide exactly.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraints::{charge_probability, park_probability};
use crate::model::{TruckId, SECONDS_PER_HOUR};
use crate::objective::{DiscountSpec, ErrorFunctionSpec};
use crate::sim::{Action, DecisionLog, SimError, SimState};

/// Batteries above this level make the charge action pointless; it is
/// removed from the action set to keep zero-duration decisions out of the
/// tree.
pub const CHARGE_FULL_THRESHOLD: f64 = 99.5;

#[derive(Clone, Debug)]
pub struct SearchConfig {
    pub iterations: u32,
    pub discount: DiscountSpec,
    /// Scale on the UCB exploration term; the effective constant is
    /// `scale * sqrt(2)`.
    pub exploration_scale: f64,
    pub err: ErrorFunctionSpec,
}

impl SearchConfig {
    pub fn new(discount: DiscountSpec) -> Self {
        SearchConfig {
            iterations: 10_000,
            discount,
            exploration_scale: 1.0,
            err: ErrorFunctionSpec::default(),
        }
    }

    pub fn with_iterations(mut self, iterations: u32) -> Self {
        self.iterations = iterations;
        self
    }

    fn exploration_constant(&self) -> f64 {
        self.exploration_scale * std::f64::consts::SQRT_2
    }
}

/// MCTS tree node: one system-wide dispatch decision.
#[derive(Clone, Debug)]
pub struct DecisionNode {
    /// Truck deciding at this node (the earliest-finishing one).
    pub truck: TruckId,
    /// Decision time; never decreases along a root-to-leaf path.
    pub time: f64,
    /// Action on the edge from the parent (`None` at the root).
    pub action: Option<Action>,
    pub visits: u32,
    pub value_sum: f64,
    /// Running range of returns backpropagated through this node, feeding
    /// the self-tuned UCB normalization.
    pub value_min: f64,
    pub value_max: f64,
    pub children: Vec<usize>,
    pub untried: Vec<Action>,
    pub terminal: bool,
    state: SimState,
}

impl DecisionNode {
    pub fn mean(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.value_sum / self.visits as f64
        }
    }
}

#[derive(Debug)]
pub struct SearchTree {
    pub nodes: Vec<DecisionNode>,
}

impl SearchTree {
    /// UCB child selection with per-node min/max value normalization (the
    /// self-tuned variant): unvisited children first, then
    /// `argmax(norm_mean + c * sqrt(ln N / n))`, ties broken by action
    /// order.
    pub fn select_child(&self, node: usize, exploration: f64) -> usize {
        let parent = &self.nodes[node];
        debug_assert!(!parent.children.is_empty());
        if let Some(&unvisited) = parent
            .children
            .iter()
            .find(|&&c| self.nodes[c].visits == 0)
        {
            return unvisited;
        }
        let span = parent.value_max - parent.value_min;
        let ln_n = (parent.visits.max(1) as f64).ln();
        let mut best = parent.children[0];
        let mut best_score = f64::NEG_INFINITY;
        for &child_idx in &parent.children {
            let child = &self.nodes[child_idx];
            let norm = if span > 0.0 {
                (child.mean() - parent.value_min) / span
            } else {
                0.5
            };
            let score = norm + exploration * (ln_n / child.visits as f64).sqrt();
            let better = score > best_score
                || (score == best_score
                    && action_order(child.action) < action_order(self.nodes[best].action));
            if better {
                best = child_idx;
                best_score = score;
            }
        }
        best
    }

    /// Adds a rollout return to every node along a root-to-leaf path.
    pub fn backpropagate(&mut self, path: &[usize], value: f64) {
        for &idx in path {
            let node = &mut self.nodes[idx];
            node.visits += 1;
            node.value_sum += value;
            node.value_min = node.value_min.min(value);
            node.value_max = node.value_max.max(value);
        }
    }
}

fn action_order(action: Option<Action>) -> usize {
    action.map(|a| a.order_index()).unwrap_or(usize::MAX)
}

/// Actions available to a truck at a decision point: every task always;
/// charge only under a battery constraint (and a non-full battery); park
/// only under a tyre constraint.
pub fn legal_actions(state: &SimState, truck: TruckId) -> Vec<Action> {
    let scenario = state.scenario();
    let mut actions: Vec<Action> = (0..scenario.tasks.len())
        .map(|i| Action::Task(crate::model::TaskId(i as u32)))
        .collect();
    if scenario.battery.is_some() && state.trucks[truck.index()].battery < CHARGE_FULL_THRESHOLD {
        actions.push(Action::Charge);
    }
    if scenario.tyre.is_some() {
        actions.push(Action::Park);
    }
    actions
}

/// Rollout policy: a constraint action with probability given by the
/// closeness of the constrained variable to violation, otherwise a task
/// sampled proportionally to its target rate.
pub(crate) fn rollout_action(state: &SimState, truck: TruckId, rng: &mut ChaCha8Rng) -> Action {
    let scenario = state.scenario();
    let t = &state.trucks[truck.index()];
    if let Some(model) = &scenario.battery {
        if t.battery < CHARGE_FULL_THRESHOLD {
            let p = charge_probability(t.battery, model);
            if p > 0.0 && rng.gen::<f64>() < p {
                return Action::Charge;
            }
        }
    }
    if let Some(model) = &scenario.tyre {
        let p = park_probability(t.tyre, model);
        if p > 0.0 && rng.gen::<f64>() < p {
            return Action::Park;
        }
    }
    let total: f64 = scenario.tasks.iter().map(|t| t.target_rate).sum();
    let mut x = rng.gen::<f64>() * total;
    for (i, task) in scenario.tasks.iter().enumerate() {
        x -= task.target_rate;
        if x <= 0.0 {
            return Action::Task(crate::model::TaskId(i as u32));
        }
    }
    Action::Task(crate::model::TaskId((scenario.tasks.len() - 1) as u32))
}

/// Simulates from `state` to the horizon end with the rollout policy and
/// returns the discounted opportunity-cost objective of the trajectory.
/// Hard violations freeze trucks inside the generator, so their forgone
/// flow is what the return loses.
pub fn rollout(
    state: &SimState,
    baseline: &[f64],
    t0: f64,
    config: &SearchConfig,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let mut sim = state.clone();
    let horizon_end = t0 + config.discount.horizon;
    loop {
        match sim.next_decision_point_before(horizon_end) {
            None => break,
            Some((truck, time)) => {
                if time >= horizon_end {
                    break;
                }
                let action = rollout_action(&sim, truck, rng);
                sim.apply_decision(truck, action)
                    .expect("rollout actions are legal");
            }
        }
    }
    sim.advance_to(horizon_end);
    evaluate_window(&sim, baseline, t0, config)
}

/// Discounted objective over `[t0, t0 + horizon]`, evaluated from a
/// per-task flow baseline at `t0` plus the window's flow log. Matches
/// `objective::discounted_score` on the full log exactly.
pub(crate) fn evaluate_window(
    state: &SimState,
    baseline: &[f64],
    t0: f64,
    config: &SearchConfig,
) -> f64 {
    let tasks = &state.scenario().tasks;
    let log = &state.flow_log;
    let spec = &config.discount;
    let err = &config.err;
    let steps = spec.steps();

    let mut flows: Vec<f64> = baseline.to_vec();
    let mut idx = 0usize;
    while idx < log.len() && log[idx].time <= t0 {
        idx += 1;
    }
    let score_at = |flows: &[f64], t: f64| -> f64 {
        tasks
            .iter()
            .zip(flows)
            .map(|(task, f)| err.eval(f - task.target_rate * t / SECONDS_PER_HOUR))
            .sum()
    };
    let mut prev = score_at(&flows, t0);
    let mut acc = prev;
    let mut weight = 1.0;
    for i in 1..=steps {
        let t = t0 + i as f64 * spec.dt;
        while idx < log.len() && log[idx].time <= t {
            let entry = &log[idx];
            for (j, task) in tasks.iter().enumerate() {
                if task.source == entry.source && task.destination == entry.destination {
                    flows[j] += entry.tonnes;
                }
            }
            idx += 1;
        }
        let current = score_at(&flows, t);
        weight *= spec.zeta;
        acc += weight * (current - prev);
        prev = current;
    }
    acc
}

#[derive(Clone, Debug, PartialEq)]
pub struct RootChildStat {
    pub action: Action,
    pub visits: u32,
    pub mean: f64,
}

#[derive(Clone, Debug)]
pub struct SearchStatistics {
    pub chosen: Action,
    pub root_children: Vec<RootChildStat>,
    pub iterations: u32,
    pub wall_time_ms: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum PlanError {
    #[error("no legal actions at the decision point")]
    NoLegalActions,
    #[error("receding horizon stalled at t={0}: decisions stopped consuming time")]
    Stalled(f64),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Runs `iterations` select/expand/rollout/backpropagate cycles from the
/// decision point `truck` at the state's clock and returns the root child
/// with maximal mean value (ties: visit count, then action order).
pub fn plan(
    state: &SimState,
    truck: TruckId,
    config: &SearchConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Action, SearchStatistics), PlanError> {
    let started = Instant::now();
    let t0 = state.clock;
    let root_state = state.fork();
    let baseline: Vec<f64> = root_state.task_flow_cum.clone();
    let actions = legal_actions(&root_state, truck);
    if actions.is_empty() {
        return Err(PlanError::NoLegalActions);
    }
    if actions.len() == 1 {
        // Forced move; no search value in expanding the tree.
        let stats = SearchStatistics {
            chosen: actions[0],
            root_children: vec![RootChildStat {
                action: actions[0],
                visits: 0,
                mean: 0.0,
            }],
            iterations: 0,
            wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        return Ok((actions[0], stats));
    }

    let horizon_end = t0 + config.discount.horizon;
    let mut tree = SearchTree {
        nodes: vec![DecisionNode {
            truck,
            time: t0,
            action: None,
            visits: 0,
            value_sum: 0.0,
            value_min: f64::INFINITY,
            value_max: f64::NEG_INFINITY,
            children: Vec::new(),
            untried: actions,
            terminal: false,
            state: root_state,
        }],
    };
    let exploration = config.exploration_constant();

    let mut path: Vec<usize> = Vec::with_capacity(64);
    for _ in 0..config.iterations {
        path.clear();
        path.push(0);
        let mut current = 0usize;
        loop {
            let node = &tree.nodes[current];
            if node.terminal {
                break;
            }
            if !node.untried.is_empty() {
                let action = tree.nodes[current].untried.remove(0);
                let child = expand(&mut tree, current, action, horizon_end)?;
                path.push(child);
                current = child;
                break;
            }
            if node.children.is_empty() {
                break;
            }
            current = tree.select_child(current, exploration);
            path.push(current);
        }
        let value = rollout(&tree.nodes[current].state, &baseline, t0, config, rng);
        tree.backpropagate(&path, value);
    }

    let root = &tree.nodes[0];
    let mut root_children: Vec<RootChildStat> = root
        .children
        .iter()
        .map(|&c| {
            let n = &tree.nodes[c];
            RootChildStat {
                action: n.action.expect("children carry actions"),
                visits: n.visits,
                mean: n.mean(),
            }
        })
        .collect();
    root_children.sort_by_key(|c| c.action.order_index());
    let chosen = root_children
        .iter()
        .max_by(|a, b| {
            a.mean
                .total_cmp(&b.mean)
                .then(a.visits.cmp(&b.visits))
                .then(b.action.order_index().cmp(&a.action.order_index()))
        })
        .expect("root has at least one child")
        .action;

    Ok((
        chosen,
        SearchStatistics {
            chosen,
            root_children,
            iterations: config.iterations,
            wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        },
    ))
}

fn expand(
    tree: &mut SearchTree,
    parent: usize,
    action: Action,
    horizon_end: f64,
) -> Result<usize, PlanError> {
    let parent_truck = tree.nodes[parent].truck;
    let mut state = tree.nodes[parent].state.clone();
    state.apply_decision(parent_truck, action)?;
    let (truck, time, terminal, untried) = match state.next_decision_point_before(horizon_end) {
        Some((truck, time)) if time < horizon_end => {
            let untried = legal_actions(&state, truck);
            (truck, time, false, untried)
        }
        Some((truck, time)) => (truck, time, true, Vec::new()),
        None => (parent_truck, horizon_end, true, Vec::new()),
    };
    let idx = tree.nodes.len();
    tree.nodes.push(DecisionNode {
        truck,
        time,
        action: Some(action),
        visits: 0,
        value_sum: 0.0,
        value_min: f64::INFINITY,
        value_max: f64::NEG_INFINITY,
        children: Vec::new(),
        untried,
        terminal,
        state,
    });
    tree.nodes[parent].children.push(idx);
    Ok(idx)
}

// ---------------------------------------------------------------------------
// Receding-horizon execution

/// A dispatch policy consulted at every decision point of a live run.
pub trait DispatchPolicy {
    fn decide(&mut self, state: &SimState, truck: TruckId)
        -> Result<(Action, SearchStatistics), PlanError>;
}

/// Plain MCTS policy: FAST when the scenario has no constraints, FAST-CON
/// otherwise (the action space and generator follow the scenario's
/// constraint set).
pub struct MctsPolicy {
    pub config: SearchConfig,
    rng: ChaCha8Rng,
}

impl MctsPolicy {
    pub fn new(config: SearchConfig, seed: u64) -> Self {
        MctsPolicy {
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl DispatchPolicy for MctsPolicy {
    fn decide(
        &mut self,
        state: &SimState,
        truck: TruckId,
    ) -> Result<(Action, SearchStatistics), PlanError> {
        plan(state, truck, &self.config, &mut self.rng)
    }
}

#[derive(Clone, Debug)]
pub struct DecisionStat {
    pub time: f64,
    pub truck: TruckId,
    pub stats: SearchStatistics,
}

pub struct RunResult {
    pub state: SimState,
    pub decisions: Vec<DecisionStat>,
}

impl RunResult {
    pub fn decision_log(&self) -> &DecisionLog {
        &self.state.decision_log
    }
}

/// Receding-horizon loop: find the next decision point, plan, execute the
/// chosen root action in the live simulator, repeat until the clock passes
/// `duration`, then settle the state there.
pub fn run_receding_horizon(
    mut state: SimState,
    duration: f64,
    policy: &mut dyn DispatchPolicy,
) -> Result<RunResult, PlanError> {
    let mut decisions = Vec::new();
    let mut stall = (f64::NEG_INFINITY, 0u32);
    while let Some((truck, time)) = state.next_decision_point_before(duration) {
        if time >= duration {
            break;
        }
        if time == stall.0 {
            stall.1 += 1;
            if stall.1 > 10_000 {
                return Err(PlanError::Stalled(time));
            }
        } else {
            stall = (time, 0);
        }
        let (action, stats) = policy.decide(&state, truck)?;
        state.apply_decision(truck, action)?;
        decisions.push(DecisionStat { time, truck, stats });
    }
    state.advance_to(duration);
    Ok(RunResult { state, decisions })
}
