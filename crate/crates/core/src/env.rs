//! The data-collection MDP.
//!
//! A slot proceeds in a fixed order: the scheduled node (if any) transmits
//! from the entity's current position, every node's freshness is updated, the
//! entity moves, and the reward is computed from the updated freshness. The
//! transition is deterministic.

use std::fmt;
use std::io::Write;

use crate::channel::{self, FreshnessState};
use crate::error::{Error, Result};
use crate::scenario::{Point, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    North,
    South,
    East,
    West,
    Stay,
}

impl Direction {
    /// Tie-break order: movements first, `Stay` last.
    pub const ALL: [Direction; 5] = [
        Direction::North,
        Direction::South,
        Direction::East,
        Direction::West,
        Direction::Stay,
    ];

    pub fn offset(self) -> (i32, i32) {
        match self {
            Direction::North => (0, 1),
            Direction::South => (0, -1),
            Direction::East => (1, 0),
            Direction::West => (-1, 0),
            Direction::Stay => (0, 0),
        }
    }

    pub fn apply(self, p: Point, step: i32) -> Point {
        let (dx, dy) = self.offset();
        Point::new(p.x + dx * step, p.y + dy * step)
    }

    fn rank(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::North => "N",
            Direction::South => "S",
            Direction::East => "E",
            Direction::West => "W",
            Direction::Stay => "0",
        }
    }
}

/// A moving direction plus the (at most one) node scheduled in the slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Action {
    pub direction: Direction,
    /// 0-based node index.
    pub schedule: Option<usize>,
}

impl Action {
    pub const fn new(direction: Direction, schedule: Option<usize>) -> Self {
        Action { direction, schedule }
    }

    pub const IDLE: Action = Action::new(Direction::Stay, None);

    /// Number of distinct actions for `node_count` nodes.
    pub fn count(node_count: usize) -> usize {
        Direction::ALL.len() * (node_count + 1)
    }

    /// Position in the fixed total order (direction-major, `None` last among
    /// schedules).
    pub fn index(self, node_count: usize) -> usize {
        let sched = self.schedule.unwrap_or(node_count);
        self.direction.rank() * (node_count + 1) + sched
    }

    pub fn from_index(index: usize, node_count: usize) -> Self {
        let direction = Direction::ALL[index / (node_count + 1)];
        let sched = index % (node_count + 1);
        Action {
            direction,
            schedule: (sched < node_count).then_some(sched),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.schedule {
            Some(i) => write!(f, "({}, node {})", self.direction.name(), i + 1),
            None => write!(f, "({}, none)", self.direction.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct State {
    pub entity_pos: Point,
    pub freshness: Vec<FreshnessState>,
}

impl State {
    /// Packs the state into `(x, y, A_1..A_N, q²_1..q²_N)`.
    pub fn key(&self) -> Vec<i64> {
        let mut key = Vec::with_capacity(2 + 2 * self.freshness.len());
        key.push(i64::from(self.entity_pos.x));
        key.push(i64::from(self.entity_pos.y));
        key.extend(self.freshness.iter().map(|f| i64::from(f.aoi)));
        key.extend(self.freshness.iter().map(|f| i64::from(f.eff_dist_sq)));
        key
    }

    pub fn from_key(key: &[i64]) -> Option<State> {
        if key.len() < 2 || !key.len().is_multiple_of(2) {
            return None;
        }
        let n = (key.len() - 2) / 2;
        let x = i32::try_from(key[0]).ok()?;
        let y = i32::try_from(key[1]).ok()?;
        let freshness = (0..n)
            .map(|i| {
                Some(FreshnessState {
                    aoi: u32::try_from(key[2 + i]).ok()?,
                    eff_dist_sq: u32::try_from(key[2 + n + i]).ok()?,
                })
            })
            .collect::<Option<Vec<_>>>()?;
        Some(State {
            entity_pos: Point::new(x, y),
            freshness,
        })
    }

    pub fn aoi(&self) -> impl Iterator<Item = u32> + '_ {
        self.freshness.iter().map(|f| f.aoi)
    }
}

/// How the minimum VoI enters the reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RewardScale {
    /// Minimum VoI divided by bandwidth (bits/s/Hz), so the no-service
    /// penalty dominates.
    #[default]
    Spectral,
    /// Minimum VoI in bits/s.
    Raw,
}

impl std::str::FromStr for RewardScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(RewardScale::Spectral),
            "raw" => Ok(RewardScale::Raw),
            other => Err(Error::Unsupported(format!("unknown reward scale `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: State,
    /// `score − penalty·[no success]`.
    pub reward: f64,
    /// Minimum VoI over nodes in reward units (before any penalty).
    pub score: f64,
    /// VoI of each node after the slot, bits/s.
    pub per_node_voi: Vec<f64>,
    pub served: Option<usize>,
    pub success: bool,
}

impl StepOutcome {
    pub fn min_voi(&self) -> f64 {
        self.per_node_voi.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean_voi(&self) -> f64 {
        self.per_node_voi.iter().sum::<f64>() / self.per_node_voi.len() as f64
    }
}

/// A scenario together with its reward definition.
#[derive(Debug, Clone)]
pub struct Env {
    scenario: Scenario,
    penalty: f64,
    scale: RewardScale,
}

impl Env {
    pub fn new(scenario: Scenario, penalty: f64) -> Self {
        Env {
            scenario,
            penalty,
            scale: RewardScale::Spectral,
        }
    }

    pub fn with_reward_scale(mut self, scale: RewardScale) -> Self {
        self.scale = scale;
        self
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    pub fn reward_scale(&self) -> RewardScale {
        self.scale
    }

    pub fn node_count(&self) -> usize {
        self.scenario.nodes.len()
    }

    /// Entity at its start point, configured initial ages, and effective
    /// distances equal to the start-to-node distances.
    pub fn initial_state(&self) -> State {
        let start = self.scenario.entity_start;
        State {
            entity_pos: start,
            freshness: self
                .scenario
                .nodes
                .iter()
                .map(|n| FreshnessState {
                    aoi: n.initial_aoi,
                    eff_dist_sq: n.position.dist_sq(start),
                })
                .collect(),
        }
    }

    pub fn can_move(&self, state: &State, direction: Direction) -> bool {
        self.scenario
            .contains(direction.apply(state.entity_pos, self.scenario.step_length))
    }

    /// Feasible actions in the fixed total order.
    pub fn feasible_actions(&self, state: &State) -> Vec<Action> {
        let n = self.node_count();
        let mut out = Vec::with_capacity(Action::count(n));
        for dir in Direction::ALL {
            if !self.can_move(state, dir) {
                continue;
            }
            out.extend((0..n).map(|i| Action::new(dir, Some(i))));
            out.push(Action::new(dir, None));
        }
        out
    }

    pub fn is_feasible(&self, state: &State, action: Action) -> bool {
        action.schedule.is_none_or(|i| i < self.node_count()) && self.can_move(state, action.direction)
    }

    pub fn step(&self, state: &State, action: Action) -> Result<StepOutcome> {
        if !self.is_feasible(state, action) {
            return Err(Error::InfeasibleAction {
                action: format!("{action} at {}", state.entity_pos),
            });
        }
        let sc = &self.scenario;
        let pos = state.entity_pos;

        let success = action.schedule.is_some_and(|i| {
            channel::success(&sc.radio, channel::distance(sc.nodes[i].position, pos), true)
        });
        let freshness: Vec<FreshnessState> = state
            .freshness
            .iter()
            .zip(&sc.nodes)
            .enumerate()
            .map(|(i, (&prev, node))| {
                let served = success && action.schedule == Some(i);
                channel::step_freshness(prev, served, node.position.dist_sq(pos))
            })
            .collect();
        let next_state = State {
            entity_pos: action.direction.apply(pos, sc.step_length),
            freshness,
        };

        let per_node_voi: Vec<f64> = next_state
            .freshness
            .iter()
            .zip(&sc.nodes)
            .enumerate()
            .map(|(i, (&f, node))| channel::voi(&sc.radio, i, node.correlation, f))
            .collect();
        let min_voi = per_node_voi.iter().copied().fold(f64::INFINITY, f64::min);
        let score = match self.scale {
            RewardScale::Spectral => min_voi / sc.radio.bandwidth,
            RewardScale::Raw => min_voi,
        };
        let reward = if success { score } else { score - self.penalty };
        Ok(StepOutcome {
            next_state,
            reward,
            score,
            per_node_voi,
            served: action.schedule,
            success,
        })
    }

    /// Runs `policy` for `horizon` slots from the initial state.
    pub fn rollout<P: Policy + ?Sized>(&self, policy: &mut P, horizon: usize) -> Result<EpisodeTrace> {
        let mut state = self.initial_state();
        let mut steps = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let action = policy.act(self, t, &state);
            let outcome = self.step(&state, action)?;
            let next = outcome.next_state.clone();
            steps.push(TraceStep {
                t: t + 1,
                state,
                action,
                outcome,
            });
            state = next;
        }
        Ok(EpisodeTrace { steps })
    }
}

/// Anything that picks an action for a state. `slot` is the 0-based slot
/// index within the episode.
pub trait Policy {
    fn act(&mut self, env: &Env, slot: usize, state: &State) -> Action;
}

impl<F> Policy for F
where
    F: FnMut(&State) -> Action,
{
    fn act(&mut self, _env: &Env, _slot: usize, state: &State) -> Action {
        self(state)
    }
}

/// Replays a fixed action sequence, idling once it runs out.
#[derive(Debug, Clone)]
pub struct ActionSequence {
    actions: Vec<Action>,
}

impl ActionSequence {
    pub fn new(actions: Vec<Action>) -> Self {
        ActionSequence { actions }
    }
}

impl Policy for ActionSequence {
    fn act(&mut self, _env: &Env, slot: usize, _state: &State) -> Action {
        self.actions.get(slot).copied().unwrap_or(Action::IDLE)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    /// 1-based slot index.
    pub t: usize,
    /// State at the start of the slot.
    pub state: State,
    pub action: Action,
    pub outcome: StepOutcome,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeTrace {
    pub steps: Vec<TraceStep>,
}

impl EpisodeTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn min_voi_series(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.outcome.min_voi()).collect()
    }

    pub fn mean_voi_series(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.outcome.mean_voi()).collect()
    }

    /// Time-average of the per-slot minimum VoI, bits/s. Zero for an empty
    /// trace.
    pub fn time_avg_min_voi(&self) -> f64 {
        average(&self.min_voi_series())
    }

    pub fn time_avg_mean_voi(&self) -> f64 {
        average(&self.mean_voi_series())
    }

    /// `Σ_t γ^t · reward_fn(outcome_t)` over the trace.
    pub fn discounted_return(&self, gamma: f64, reward_fn: impl Fn(&StepOutcome) -> f64) -> f64 {
        let mut total = 0.0;
        let mut weight = 1.0;
        for step in &self.steps {
            total += weight * reward_fn(&step.outcome);
            weight *= gamma;
        }
        total
    }

    pub fn served_nodes(&self) -> Vec<usize> {
        self.steps
            .iter()
            .filter(|s| s.outcome.success)
            .filter_map(|s| s.outcome.served)
            .collect()
    }

    /// Writes one row per slot: position and action of the slot, followed by
    /// the freshness and VoI after it.
    pub fn write_csv<W: Write>(&self, node_count: usize, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![
            "t".to_string(),
            "x".into(),
            "y".into(),
            "direction".into(),
            "scheduled_node".into(),
            "success".into(),
        ];
        for prefix in ["aoi", "q_sq", "voi"] {
            header.extend((1..=node_count).map(|i| format!("{prefix}_{i}")));
        }
        header.push("reward".into());
        w.write_record(&header)?;
        for step in &self.steps {
            let next = &step.outcome.next_state;
            let mut row = vec![
                step.t.to_string(),
                step.state.entity_pos.x.to_string(),
                step.state.entity_pos.y.to_string(),
                step.action.direction.name().to_string(),
                step.action.schedule.map(|i| (i + 1).to_string()).unwrap_or_default(),
                u8::from(step.outcome.success).to_string(),
            ];
            row.extend(next.freshness.iter().map(|f| f.aoi.to_string()));
            row.extend(next.freshness.iter().map(|f| f.eff_dist_sq.to_string()));
            row.extend(step.outcome.per_node_voi.iter().map(|v| v.to_string()));
            row.push(step.outcome.reward.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn average(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{NodeSpec, RadioParams};

    fn env() -> Env {
        Env::new(Scenario::case_study(), 100.0)
    }

    fn at(state: &State, x: i32, y: i32) -> State {
        State {
            entity_pos: Point::new(x, y),
            ..state.clone()
        }
    }

    #[test]
    fn initial_state_matches_scenario() {
        let e = env();
        let s = e.initial_state();
        assert_eq!(s.entity_pos, Point::new(4, 0));
        assert_eq!(s.aoi().collect::<Vec<_>>(), vec![2, 4, 4]);
        assert_eq!(s.freshness[2].eff_dist_sq, 16);
    }

    #[test]
    fn colocated_start_has_zero_effective_distance() {
        let mut sc = Scenario::case_study();
        sc.entity_start = sc.nodes[1].position;
        let s = Env::new(sc, 100.0).initial_state();
        assert_eq!(s.freshness[1].eff_dist_sq, 0);
    }

    #[test]
    fn feasible_action_counts() {
        let e = env();
        let s = e.initial_state();
        // N = 3 at the corner (0, 0): N and E only, plus Stay.
        assert_eq!(e.feasible_actions(&at(&s, 0, 0)).len(), 3 * 4);
        assert_eq!(e.feasible_actions(&at(&s, 5, 5)).len(), 3 * 4);
        assert_eq!(e.feasible_actions(&at(&s, 2, 3)).len(), 20);
        // Bottom edge: South is excluded.
        let edge = e.feasible_actions(&s);
        assert_eq!(edge.len(), 16);
        assert!(edge.iter().all(|a| a.direction != Direction::South));
        assert_eq!(edge[0], Action::new(Direction::North, Some(0)));
        assert_eq!(*edge.last().unwrap(), Action::IDLE);
    }

    #[test]
    fn action_index_round_trip() {
        for n in 1..5 {
            for idx in 0..Action::count(n) {
                assert_eq!(Action::from_index(idx, n).index(n), idx);
            }
        }
    }

    #[test]
    fn serving_adjacent_node_then_moving_west() {
        let e = env();
        let s = at(&e.initial_state(), 4, 3);
        let out = e.step(&s, Action::new(Direction::West, Some(2))).unwrap();
        assert!(out.success);
        assert_eq!(out.next_state.entity_pos, Point::new(3, 3));
        assert_eq!(out.next_state.freshness[2], FreshnessState { aoi: 1, eff_dist_sq: 1 });
        assert_eq!(out.next_state.freshness[0].aoi, 3);
        assert_eq!(out.next_state.freshness[1].aoi, 5);
        assert_eq!(out.reward, out.score);
    }

    #[test]
    fn idling_increments_every_age_and_pays_the_penalty() {
        let e = env();
        let s = e.initial_state();
        let out = e.step(&s, Action::IDLE).unwrap();
        assert!(!out.success);
        for (a, b) in s.freshness.iter().zip(&out.next_state.freshness) {
            assert_eq!(b.aoi, a.aoi + 1);
            assert_eq!(b.eff_dist_sq, a.eff_dist_sq);
        }
        assert_eq!(out.score, out.min_voi() / 2.0e6);
        assert_eq!(out.reward, out.score - 100.0);
    }

    #[test]
    fn out_of_range_schedule_acts_like_idle() {
        let e = env();
        let s = at(&e.initial_state(), 4, 1); // node 3 at distance 3
        let idle = e.step(&s, Action::IDLE).unwrap();
        let far = e.step(&s, Action::new(Direction::Stay, Some(2))).unwrap();
        assert!(!far.success);
        assert_eq!(far.next_state, idle.next_state);
        assert_eq!(far.reward, idle.reward);
    }

    #[test]
    fn infeasible_action_is_rejected() {
        let e = env();
        let s = e.initial_state();
        assert!(matches!(
            e.step(&s, Action::new(Direction::South, None)),
            Err(Error::InfeasibleAction { .. })
        ));
        assert!(e.step(&s, Action::new(Direction::North, Some(7))).is_err());
    }

    #[test]
    fn raw_scale_reports_bits_per_second() {
        let e = env().with_reward_scale(RewardScale::Raw);
        let out = e.step(&e.initial_state(), Action::IDLE).unwrap();
        assert_eq!(out.score, out.min_voi());
    }

    #[test]
    fn rollouts() {
        let e = env();
        assert!(e.rollout(&mut |_: &State| Action::IDLE, 0).unwrap().is_empty());
        let mut policy = |s: &State| {
            if s.entity_pos.y < 3 {
                Action::new(Direction::North, None)
            } else {
                Action::new(Direction::Stay, Some(2))
            }
        };
        let a = e.rollout(&mut policy, 10).unwrap();
        let b = e.rollout(&mut policy, 10).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        assert_eq!(a.steps[0].state.aoi().collect::<Vec<_>>(), vec![2, 4, 4]);
        assert_eq!(a.served_nodes().first(), Some(&2));
        assert!(a.time_avg_min_voi() <= a.time_avg_mean_voi());
    }

    #[test]
    fn key_round_trip() {
        let s = env().initial_state();
        assert_eq!(State::from_key(&s.key()), Some(s));
        assert_eq!(State::from_key(&[1, 2, 3]), None);
    }

    #[test]
    fn trace_csv_layout() {
        let sc = Scenario {
            grid_extent: 2,
            nodes: vec![NodeSpec {
                position: Point::new(1, 1),
                correlation: 0.5,
                initial_aoi: 1,
            }],
            entity_start: Point::new(0, 1),
            horizon: 2,
            step_length: 1,
            radio: RadioParams::standard(1, 1.0),
        };
        let e = Env::new(sc, 100.0);
        let trace = e
            .rollout(&mut |_: &State| Action::new(Direction::East, Some(0)), 2)
            .unwrap();
        let mut buf = Vec::new();
        trace.write_csv(1, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x,y,direction,scheduled_node,success,aoi_1,q_sq_1,voi_1,reward");
        assert!(lines[1].starts_with("1,0,1,E,1,1,1,1,"));
        assert!(lines[2].starts_with("2,1,1,E,1,1,1,0,"));
    }
}
