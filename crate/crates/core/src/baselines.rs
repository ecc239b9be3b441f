//! Comparison schemes: the AoI-driven reward, a shortest-tour policy and an
//! exhaustive oracle for tiny instances.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel;
use crate::env::{Action, Direction, Env, Policy, State, StepOutcome};
use crate::error::{Error, Result};
use crate::scenario::{Point, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    VoiOptimal,
    AoiOptimal,
    ShortestPath,
    Oracle,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::VoiOptimal,
        PolicyKind::AoiOptimal,
        PolicyKind::ShortestPath,
        PolicyKind::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::VoiOptimal => "voi-optimal",
            PolicyKind::AoiOptimal => "aoi-optimal",
            PolicyKind::ShortestPath => "shortest-path",
            PolicyKind::Oracle => "oracle",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Unsupported(format!("unknown policy `{s}`")))
    }
}

/// Negative maximum age after the slot, minus `penalty` when nothing was
/// received.
pub fn aoi_reward(outcome: &StepOutcome, penalty: f64) -> f64 {
    let max_aoi = outcome.next_state.aoi().max().unwrap_or(0);
    let r = -f64::from(max_aoi);
    if outcome.success {
        r
    } else {
        r - penalty
    }
}

/// [`aoi_reward`] with the penalty bound, ready to pass to
/// [`crate::learner::train`].
pub fn aoi_reward_fn(penalty: f64) -> impl Fn(&StepOutcome) -> f64 {
    move |o| aoi_reward(o, penalty)
}

pub const MAX_EXACT_TOUR_NODES: usize = 10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ShortestPathOptions {
    /// Order nodes greedily by nearest service point instead of searching all
    /// permutations. Required above [`MAX_EXACT_TOUR_NODES`].
    pub greedy_fallback: bool,
}

/// Walks a minimum-length tour over the nodes' service regions, serving each
/// node on the first slot it is in range, and repeats the same visiting
/// order once every node has been served.
#[derive(Debug, Clone)]
pub struct ShortestPathPolicy {
    order: Vec<usize>,
    cursor: usize,
    /// Lattice points within the success distance of each node.
    service: Vec<Vec<Point>>,
    nodes: Vec<Point>,
    success_distance: f64,
}

impl ShortestPathPolicy {
    pub fn new(scenario: &Scenario, options: ShortestPathOptions) -> Result<Self> {
        let n = scenario.node_count();
        if n > MAX_EXACT_TOUR_NODES && !options.greedy_fallback {
            return Err(Error::TourTooLarge {
                nodes: n,
                max: MAX_EXACT_TOUR_NODES,
            });
        }
        if scenario.step_length != 1 {
            return Err(Error::Unsupported(
                "the shortest-path policy needs unit step length".into(),
            ));
        }
        let d_th = scenario.radio.success_distance;
        let g = scenario.grid_extent;
        let service = scenario
            .nodes
            .iter()
            .map(|node| {
                (0..=g)
                    .flat_map(|x| (0..=g).map(move |y| Point::new(x, y)))
                    .filter(|&p| channel::distance(node.position, p) <= d_th)
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>();
        let mut policy = ShortestPathPolicy {
            order: Vec::new(),
            cursor: 0,
            service,
            nodes: scenario.nodes.iter().map(|n| n.position).collect(),
            success_distance: d_th,
        };
        policy.order = if options.greedy_fallback {
            policy.greedy_order(scenario.entity_start)
        } else {
            policy.exact_order(scenario.entity_start)
        };
        Ok(policy)
    }

    /// Visiting order chosen at construction.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Total move count of the chosen order from the entity start.
    pub fn tour_length(&self, start: Point) -> u32 {
        self.order_cost(start, &self.order)
    }

    /// Closest service point of `node` from `from` in moves; ties go to the
    /// smallest `(x, y)`.
    fn service_point(&self, from: Point, node: usize) -> (Point, u32) {
        self.service[node]
            .iter()
            .map(|&p| (p, from.manhattan(p)))
            .min_by_key(|&(p, c)| (c, p))
            .expect("a node's own cell is always a service point")
    }

    fn order_cost(&self, start: Point, order: &[usize]) -> u32 {
        let mut at = start;
        let mut total = 0;
        for &node in order {
            let (p, c) = self.service_point(at, node);
            total += c;
            at = p;
        }
        total
    }

    /// Depth-first search over permutations in lexicographic order; the first
    /// cheapest one wins.
    fn exact_order(&self, start: Point) -> Vec<usize> {
        struct Search<'a> {
            policy: &'a ShortestPathPolicy,
            used: Vec<bool>,
            path: Vec<usize>,
            best: Option<(u32, Vec<usize>)>,
        }
        impl Search<'_> {
            fn go(&mut self, at: Point, cost: u32) {
                if let Some((best, _)) = &self.best {
                    if cost >= *best {
                        return;
                    }
                }
                if self.path.len() == self.used.len() {
                    self.best = Some((cost, self.path.clone()));
                    return;
                }
                for node in 0..self.used.len() {
                    if self.used[node] {
                        continue;
                    }
                    let (p, c) = self.policy.service_point(at, node);
                    self.used[node] = true;
                    self.path.push(node);
                    self.go(p, cost + c);
                    self.path.pop();
                    self.used[node] = false;
                }
            }
        }
        let n = self.nodes.len();
        let mut search = Search {
            policy: self,
            used: vec![false; n],
            path: Vec::with_capacity(n),
            best: None,
        };
        search.go(start, 0);
        search.best.map(|(_, order)| order).unwrap_or_default()
    }

    fn greedy_order(&self, start: Point) -> Vec<usize> {
        let mut remaining: Vec<usize> = (0..self.nodes.len()).collect();
        let mut order = Vec::with_capacity(remaining.len());
        let mut at = start;
        while !remaining.is_empty() {
            let (pos, (p, _)) = remaining
                .iter()
                .map(|&node| self.service_point(at, node))
                .enumerate()
                .min_by_key(|&(i, (_, c))| (c, remaining[i]))
                .expect("non-empty");
            order.push(remaining.remove(pos));
            at = p;
        }
        order
    }

    fn step_towards(from: Point, to: Point) -> Direction {
        use std::cmp::Ordering::*;
        match (to.x.cmp(&from.x), to.y.cmp(&from.y)) {
            (Greater, _) => Direction::East,
            (Less, _) => Direction::West,
            (Equal, Greater) => Direction::North,
            (Equal, Less) => Direction::South,
            (Equal, Equal) => Direction::Stay,
        }
    }
}

impl Policy for ShortestPathPolicy {
    fn act(&mut self, _env: &Env, _slot: usize, state: &State) -> Action {
        let pos = state.entity_pos;
        let target = self.order[self.cursor];
        let in_range = channel::distance(self.nodes[target], pos) <= self.success_distance;
        let schedule = if in_range {
            self.cursor = (self.cursor + 1) % self.order.len();
            Some(target)
        } else {
            None
        };
        let heading = self.order[self.cursor];
        let (goal, _) = self.service_point(pos, heading);
        Action::new(Self::step_towards(pos, goal), schedule)
    }
}

pub fn shortest_path_policy(scenario: &Scenario, options: ShortestPathOptions) -> Result<ShortestPathPolicy> {
    ShortestPathPolicy::new(scenario, options)
}

pub const ORACLE_SEQUENCE_LIMIT: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Maximum of `Σ_t γ^t r_t` over all action sequences.
    pub value: f64,
    /// The lexicographically first sequence attaining it.
    pub actions: Vec<Action>,
}

/// Exact optimum by enumerating every feasible action sequence of length
/// `horizon`. Open-loop search is exact because the transition is
/// deterministic.
pub fn exhaustive_oracle(
    env: &Env,
    horizon: usize,
    gamma: f64,
    reward_fn: &dyn Fn(&StepOutcome) -> f64,
) -> Result<OracleResult> {
    let bound = (Action::count(env.node_count()) as f64).powi(horizon as i32);
    if bound > ORACLE_SEQUENCE_LIMIT {
        return Err(Error::SearchSpaceTooLarge {
            sequences: bound,
            limit: ORACLE_SEQUENCE_LIMIT,
        });
    }

    struct Search<'a> {
        env: &'a Env,
        horizon: usize,
        gamma: f64,
        reward_fn: &'a dyn Fn(&StepOutcome) -> f64,
        path: Vec<Action>,
        best: Option<(f64, Vec<Action>)>,
    }
    impl Search<'_> {
        fn go(&mut self, state: &State, total: f64, weight: f64) -> Result<()> {
            if self.path.len() == self.horizon {
                if self.best.as_ref().is_none_or(|(b, _)| total > *b) {
                    self.best = Some((total, self.path.clone()));
                }
                return Ok(());
            }
            for action in self.env.feasible_actions(state) {
                let outcome = self.env.step(state, action)?;
                let r = (self.reward_fn)(&outcome);
                self.path.push(action);
                self.go(&outcome.next_state, total + weight * r, weight * self.gamma)?;
                self.path.pop();
            }
            Ok(())
        }
    }

    let mut search = Search {
        env,
        horizon,
        gamma,
        reward_fn,
        path: Vec::with_capacity(horizon),
        best: None,
    };
    search.go(&env.initial_state(), 0.0, 1.0)?;
    let (value, actions) = search.best.expect("at least the empty sequence is enumerated");
    Ok(OracleResult { value, actions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ActionSequence;
    use crate::learner::env_reward;
    use crate::scenario::{NodeSpec, RadioParams};

    fn node(x: i32, y: i32, rho: f64) -> NodeSpec {
        NodeSpec {
            position: Point::new(x, y),
            correlation: rho,
            initial_aoi: 1,
        }
    }

    fn scenario(grid: i32, nodes: Vec<NodeSpec>, start: Point, horizon: usize) -> Scenario {
        let n = nodes.len();
        Scenario {
            grid_extent: grid,
            nodes,
            entity_start: start,
            horizon,
            step_length: 1,
            radio: RadioParams::standard(n, 1.0),
        }
    }

    fn outcome_with(aoi: &[u32], success: bool) -> StepOutcome {
        let env = Env::new(
            scenario(3, aoi.iter().enumerate().map(|(i, _)| node(i as i32, 0, 0.5)).collect(), Point::new(0, 0), 1),
            100.0,
        );
        let mut o = env.step(&env.initial_state(), Action::IDLE).unwrap();
        for (f, &a) in o.next_state.freshness.iter_mut().zip(aoi) {
            f.aoi = a;
        }
        o.success = success;
        o
    }

    #[test]
    fn aoi_reward_values() {
        assert_eq!(aoi_reward(&outcome_with(&[1, 4, 2], true), 100.0), -4.0);
        assert_eq!(aoi_reward(&outcome_with(&[2, 2], false), 100.0), -102.0);
        assert_eq!(
            aoi_reward(&outcome_with(&[4, 2, 1], true), 100.0),
            aoi_reward(&outcome_with(&[1, 4, 2], true), 100.0)
        );
    }

    #[test]
    fn policy_kind_names() {
        for k in PolicyKind::ALL {
            assert_eq!(k.name().parse::<PolicyKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.name()));
        }
        assert!("greedy".parse::<PolicyKind>().is_err());
    }

    #[test]
    fn single_node_adjacent_is_served_immediately() {
        let sc = scenario(3, vec![node(1, 1, 0.5)], Point::new(1, 0), 5);
        let env = Env::new(sc.clone(), 100.0);
        let mut p = shortest_path_policy(&sc, ShortestPathOptions::default()).unwrap();
        let s = env.initial_state();
        assert_eq!(p.act(&env, 0, &s).schedule, Some(0));
        let trace = env.rollout(&mut shortest_path_policy(&sc, Default::default()).unwrap(), 5).unwrap();
        assert!(trace.steps.iter().all(|s| s.outcome.success));
    }

    #[test]
    fn equidistant_nodes_keep_index_order() {
        let sc = scenario(4, vec![node(4, 2, 0.5), node(0, 2, 0.5)], Point::new(2, 2), 10);
        let p = shortest_path_policy(&sc, ShortestPathOptions::default()).unwrap();
        assert_eq!(p.order(), &[0, 1]);
    }

    #[test]
    fn case_study_tour_serves_everyone() {
        let sc = Scenario::case_study();
        let p = shortest_path_policy(&sc, ShortestPathOptions::default()).unwrap();
        assert!(p.tour_length(sc.entity_start) as usize + 3 <= sc.horizon);
        let env = Env::new(sc.clone(), 100.0);
        let trace = env.rollout(&mut p.clone(), sc.horizon).unwrap();
        let mut served = trace.served_nodes();
        served.sort_unstable();
        served.dedup();
        assert_eq!(served, vec![0, 1, 2]);
    }

    #[test]
    fn exact_order_beats_every_permutation() {
        let sc = scenario(5, vec![node(0, 5, 0.5), node(5, 5, 0.5), node(1, 1, 0.5), node(4, 0, 0.5)], Point::new(3, 2), 10);
        let p = shortest_path_policy(&sc, ShortestPathOptions::default()).unwrap();
        let best = p.tour_length(sc.entity_start);
        let mut perm = vec![0, 1, 2, 3];
        let mut all = vec![];
        permute(&mut perm, 0, &mut all);
        for order in all {
            assert!(p.order_cost(sc.entity_start, &order) >= best);
        }
        let greedy = shortest_path_policy(&sc, ShortestPathOptions { greedy_fallback: true }).unwrap();
        assert!(greedy.tour_length(sc.entity_start) >= best);
    }

    fn permute(v: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if k == v.len() {
            out.push(v.clone());
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            permute(v, k + 1, out);
            v.swap(k, i);
        }
    }

    #[test]
    fn too_many_nodes_for_exact_tour() {
        let nodes = (0..11).map(|i| node(i % 6, i / 6, 0.5)).collect();
        let sc = scenario(5, nodes, Point::new(0, 0), 10);
        assert!(matches!(
            shortest_path_policy(&sc, ShortestPathOptions::default()),
            Err(Error::TourTooLarge { nodes: 11, .. })
        ));
        assert!(shortest_path_policy(&sc, ShortestPathOptions { greedy_fallback: true }).is_ok());
    }

    #[test]
    fn oracle_edge_cases() {
        let sc = scenario(2, vec![node(1, 1, 0.5)], Point::new(1, 0), 1);
        let env = Env::new(sc, 100.0);
        let zero = exhaustive_oracle(&env, 0, 0.9, &env_reward).unwrap();
        assert_eq!(zero.value, 0.0);
        assert!(zero.actions.is_empty());

        let one = exhaustive_oracle(&env, 1, 0.9, &env_reward).unwrap();
        assert_eq!(one.actions[0].schedule, Some(0));
        assert!(one.value > 0.0);

        let big = Env::new(Scenario::case_study(), 100.0);
        assert!(matches!(
            exhaustive_oracle(&big, 10, 0.9, &env_reward),
            Err(Error::SearchSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn oracle_sequence_replays_to_its_value() {
        let sc = scenario(2, vec![node(0, 0, 0.7), node(2, 2, 0.4)], Point::new(1, 1), 3);
        let env = Env::new(sc, 100.0);
        let best = exhaustive_oracle(&env, 3, 0.9, &env_reward).unwrap();
        let trace = env.rollout(&mut ActionSequence::new(best.actions.clone()), 3).unwrap();
        assert_eq!(trace.discounted_return(0.9, env_reward), best.value);
    }
}
