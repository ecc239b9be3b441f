//! Tabular Q-learning with ε-greedy exploration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::env::{Action, Env, Policy, State, StepOutcome};
use crate::error::{Error, Result};
use crate::scenario::{LearnerConfig, Scenario};

type Row = Box<[(u16, f64)]>;

fn lookup(row: &[(u16, f64)], idx: usize) -> Option<f64> {
    row.iter().find(|e| usize::from(e.0) == idx).map(|e| e.1)
}

/// Sparse state-action value table.
///
/// Values are stored per state as a sparse row of `(action index, value)`
/// pairs, since most visited states see only a few of their actions; entries
/// that were never written read as `default_value`. A slot-indexed table
/// keeps an independent set of rows for every slot of the episode; otherwise
/// the slot argument of every method is ignored.
#[derive(Debug, Clone)]
pub struct QTable {
    node_count: usize,
    default_value: f64,
    slot_indexed: bool,
    rows: Vec<FxHashMap<State, Row>>,
    entries: usize,
}

impl QTable {
    pub fn new(node_count: usize, default_value: f64, slot_indexed: bool) -> Self {
        QTable {
            node_count,
            default_value,
            slot_indexed,
            rows: Vec::new(),
            entries: 0,
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn default_value(&self) -> f64 {
        self.default_value
    }

    pub fn slot_indexed(&self) -> bool {
        self.slot_indexed
    }

    /// Number of explicitly stored (state, action) entries.
    pub fn len(&self) -> usize {
        self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries == 0
    }

    fn key_slot(&self, slot: usize) -> usize {
        if self.slot_indexed {
            slot
        } else {
            0
        }
    }

    fn row(&self, slot: usize, state: &State) -> Option<&[(u16, f64)]> {
        self.rows.get(self.key_slot(slot))?.get(state).map(|r| &r[..])
    }

    pub fn get(&self, slot: usize, state: &State, action: Action) -> f64 {
        self.row(slot, state)
            .and_then(|row| lookup(row, action.index(self.node_count)))
            .unwrap_or(self.default_value)
    }

    pub fn set(&mut self, slot: usize, state: &State, action: Action, value: f64) {
        let idx = action.index(self.node_count);
        let slot = self.key_slot(slot);
        if self.rows.len() <= slot {
            self.rows.resize_with(slot + 1, FxHashMap::default);
        }
        let table = &mut self.rows[slot];
        let row = match table.get_mut(state) {
            Some(row) => row,
            None => table.entry(state.clone()).or_default(),
        };
        match row.iter_mut().find(|e| usize::from(e.0) == idx) {
            Some(e) => e.1 = value,
            None => {
                let tag = u16::try_from(idx).expect("action index fits in u16");
                let mut grown = Vec::with_capacity(row.len() + 1);
                grown.extend_from_slice(row);
                grown.push((tag, value));
                *row = grown.into_boxed_slice();
                self.entries += 1;
            }
        }
    }

    /// Largest value over `actions` (`default_value` when `actions` is empty).
    pub fn max_value(&self, slot: usize, state: &State, actions: &[Action]) -> f64 {
        let Some(row) = self.row(slot, state) else {
            return self.default_value;
        };
        actions
            .iter()
            .map(|a| lookup(row, a.index(self.node_count)).unwrap_or(self.default_value))
            .reduce(f64::max)
            .unwrap_or(self.default_value)
    }

    /// First action of `actions` attaining the maximum value.
    pub fn argmax(&self, slot: usize, state: &State, actions: &[Action]) -> Action {
        assert!(!actions.is_empty(), "argmax over an empty action set");
        let row = self.row(slot, state);
        let value = |a: &Action| {
            row.and_then(|r| lookup(r, a.index(self.node_count)))
                .unwrap_or(self.default_value)
        };
        let mut best = actions[0];
        let mut best_value = value(&best);
        for a in &actions[1..] {
            let v = value(a);
            if v > best_value {
                best = *a;
                best_value = v;
            }
        }
        best
    }

    /// All stored entries as `(slot, packed state, action index, value)`,
    /// sorted.
    pub fn sorted_entries(&self) -> Vec<(usize, Vec<i64>, usize, f64)> {
        let mut out: Vec<_> = self
            .rows
            .iter()
            .enumerate()
            .flat_map(|(slot, table)| {
                table.iter().flat_map(move |(state, row)| {
                    let key = state.key();
                    row.iter()
                        .map(move |&(i, v)| (slot, key.clone(), usize::from(i), v))
                })
            })
            .collect();
        out.sort_by(|a, b| (a.0, &a.1, a.2).cmp(&(b.0, &b.1, b.2)));
        out
    }
}

impl PartialEq for QTable {
    /// Tables are equal when they hold the same entries, regardless of the
    /// order in which those were written.
    fn eq(&self, other: &Self) -> bool {
        self.node_count == other.node_count
            && self.default_value == other.default_value
            && self.slot_indexed == other.slot_indexed
            && self.entries == other.entries
            && self.sorted_entries() == other.sorted_entries()
    }
}

/// ε-greedy choice: with probability `epsilon` a uniform feasible action,
/// otherwise the first maximiser in the fixed action order.
///
/// # Panics
///
/// If `feasible` is empty.
pub fn select_action<R: Rng + ?Sized>(
    q: &QTable,
    slot: usize,
    state: &State,
    feasible: &[Action],
    epsilon: f64,
    rng: &mut R,
) -> Action {
    assert!(!feasible.is_empty(), "no feasible action");
    let x: f64 = rng.gen();
    if x < epsilon {
        feasible[rng.gen_range(0..feasible.len())]
    } else {
        q.argmax(slot, state, feasible)
    }
}

/// `Q(s,a) ← (1−β)·Q(s,a) + β·r + β·γ·max_{a'} Q(s',a')`, where `s` is
/// `state` at `slot` and `s'` is `next_state` at `slot + 1`. Passing an empty
/// `next_feasible` bootstraps from `default_value`. Returns the new value.
#[allow(clippy::too_many_arguments)]
pub fn update(
    q: &mut QTable,
    slot: usize,
    state: &State,
    action: Action,
    reward: f64,
    next_state: &State,
    next_feasible: &[Action],
    beta: f64,
    gamma: f64,
) -> f64 {
    let future = q.max_value(slot + 1, next_state, next_feasible);
    let value = (1.0 - beta) * q.get(slot, state, action) + beta * reward + beta * gamma * future;
    q.set(slot, state, action, value);
    value
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub episodes_run: u64,
    /// Undiscounted sum of rewards of each episode.
    pub returns: Vec<f64>,
    pub final_epsilon: f64,
    pub q_entries: usize,
}

/// The reward the environment itself reports.
pub fn env_reward(outcome: &StepOutcome) -> f64 {
    outcome.reward
}

/// Runs `config.episodes` episodes of `scenario.horizon` slots each, every
/// episode starting from the initial state, and returns the learned table.
///
/// With `config.slot_indexed` the last slot of an episode is terminal and
/// its update does not bootstrap.
pub fn train(
    env: &Env,
    config: &LearnerConfig,
    reward_fn: &dyn Fn(&StepOutcome) -> f64,
) -> Result<(QTable, TrainingReport)> {
    config.validate()?;
    let horizon = env.scenario().horizon;
    let mut q = QTable::new(env.node_count(), 0.0, config.slot_indexed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut returns = Vec::with_capacity(config.episodes as usize);
    let mut epsilon = config.epsilon_at(0);

    for round in 0..config.episodes {
        epsilon = config.epsilon_at(round);
        let mut state = env.initial_state();
        let mut feasible = env.feasible_actions(&state);
        let mut total = 0.0;
        for slot in 0..horizon {
            let action = select_action(&q, slot, &state, &feasible, epsilon, &mut rng);
            let outcome = env.step(&state, action)?;
            let reward = reward_fn(&outcome);
            let next_feasible = env.feasible_actions(&outcome.next_state);
            let terminal = config.slot_indexed && slot + 1 == horizon;
            update(
                &mut q,
                slot,
                &state,
                action,
                reward,
                &outcome.next_state,
                if terminal { &[] } else { &next_feasible },
                config.learning_rate,
                config.discount,
            );
            total += reward;
            state = outcome.next_state;
            feasible = next_feasible;
        }
        returns.push(total);
    }
    if config.episodes > 0 {
        epsilon = config.epsilon_at(config.episodes);
    }
    let report = TrainingReport {
        episodes_run: config.episodes,
        returns,
        final_epsilon: epsilon,
        q_entries: q.len(),
    };
    Ok((q, report))
}

/// Acts greedily with respect to a Q-table.
#[derive(Debug, Clone, Copy)]
pub struct GreedyPolicy<'a> {
    q: &'a QTable,
}

pub fn greedy_policy(q: &QTable) -> GreedyPolicy<'_> {
    GreedyPolicy { q }
}

impl Policy for GreedyPolicy<'_> {
    fn act(&mut self, env: &Env, slot: usize, state: &State) -> Action {
        self.q.argmax(slot, state, &env.feasible_actions(state))
    }
}

const FORMAT: &str = "voi-qtable/2";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableFile {
    format: String,
    scenario_hash: String,
    /// Free-form label of the reward the table was trained on.
    objective: String,
    config: LearnerConfig,
    node_count: usize,
    default_value: f64,
    slot_indexed: bool,
    entries: Vec<TableEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableEntry {
    slot: usize,
    /// `(x, y, A_1..A_N, q²_1..q²_N)`
    state: Vec<i64>,
    action: usize,
    value: f64,
}

/// A Q-table read back from disk together with its header.
#[derive(Debug, Clone)]
pub struct StoredTable {
    pub table: QTable,
    pub config: LearnerConfig,
    pub objective: String,
}

/// Serializes a table as JSON with a header binding it to `scenario`.
pub fn export_table(q: &QTable, scenario: &Scenario, config: &LearnerConfig, objective: &str) -> String {
    let file = TableFile {
        format: FORMAT.to_string(),
        scenario_hash: scenario.content_hash(),
        objective: objective.to_string(),
        config: config.clone(),
        node_count: q.node_count,
        default_value: q.default_value,
        slot_indexed: q.slot_indexed,
        entries: q
            .sorted_entries()
            .into_iter()
            .map(|(slot, state, action, value)| TableEntry {
                slot,
                state,
                action,
                value,
            })
            .collect(),
    };
    let mut out = serde_json::to_string(&file).expect("table serialization is infallible");
    out.push('\n');
    out
}

/// Parses a table, refusing it unless it was trained on `scenario`.
pub fn import_table(text: &str, scenario: &Scenario) -> Result<StoredTable> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: TableFile = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    if file.format != FORMAT {
        return Err(Error::Schema {
            path: "format".into(),
            message: format!("expected `{FORMAT}`, found `{}`", file.format),
        });
    }
    let found = scenario.content_hash();
    if file.scenario_hash != found {
        return Err(Error::ScenarioMismatch {
            expected: file.scenario_hash,
            found,
        });
    }
    let n = file.node_count;
    let mut table = QTable::new(n, file.default_value, file.slot_indexed);
    for (i, e) in file.entries.iter().enumerate() {
        let state = State::from_key(&e.state)
            .filter(|s| s.freshness.len() == n)
            .ok_or_else(|| Error::invariant(format!("entries[{i}].state"), "malformed state key"))?;
        if e.action >= Action::count(n) {
            return Err(Error::invariant(format!("entries[{i}].action"), "action index out of range"));
        }
        if !file.slot_indexed && e.slot != 0 {
            return Err(Error::invariant(format!("entries[{i}].slot"), "must be 0 for a slot-free table"));
        }
        table.set(e.slot, &state, Action::from_index(e.action, n), e.value);
    }
    Ok(StoredTable {
        table,
        config: file.config,
        objective: file.objective,
    })
}
