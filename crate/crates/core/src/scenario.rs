//! World descriptions, learner configuration and their JSON document format.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// An integer lattice point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Point {
    pub x: i32,
    pub y: i32,
}

impl Point {
    pub const fn new(x: i32, y: i32) -> Self {
        Point { x, y }
    }

    pub fn dist_sq(self, other: Point) -> u32 {
        let dx = (self.x - other.x).unsigned_abs();
        let dy = (self.y - other.y).unsigned_abs();
        dx * dx + dy * dy
    }

    pub fn manhattan(self, other: Point) -> u32 {
        (self.x - other.x).unsigned_abs() + (self.y - other.y).unsigned_abs()
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Radio constants of the network.
///
/// Gain and noise density are stored in the decibel units used by the
/// scenario file so that documents round-trip exactly; use
/// [`RadioParams::ref_gain`] and [`RadioParams::noise_psd`] for the linear
/// values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioParams {
    /// Transmit power of each node in watts.
    #[serde(deserialize_with = "scalar_or_list")]
    pub tx_power: Vec<f64>,
    /// Channel power gain at the 1 m reference distance, dB.
    pub ref_gain_db: f64,
    #[serde(rename = "bandwidth_hz")]
    pub bandwidth: f64,
    /// Noise power spectral density, dBm/Hz.
    pub noise_psd_dbm_hz: f64,
    /// Largest entity-node distance (grid units) at which a scheduled
    /// transmission still succeeds.
    pub success_distance: f64,
}

fn scalar_or_list<'de, D>(deserializer: D) -> std::result::Result<Vec<f64>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Power {
        One(f64),
        Many(Vec<f64>),
    }
    Ok(match Power::deserialize(deserializer)? {
        Power::One(p) => vec![p],
        Power::Many(ps) => ps,
    })
}

impl RadioParams {
    /// Reference gain −50 dB, bandwidth 2 MHz, noise −110 dBm/Hz, success
    /// distance 1, and the same transmit power on every node.
    pub fn standard(node_count: usize, tx_power: f64) -> Self {
        RadioParams {
            tx_power: vec![tx_power; node_count],
            ref_gain_db: -50.0,
            bandwidth: 2.0e6,
            noise_psd_dbm_hz: -110.0,
            success_distance: 1.0,
        }
    }

    /// Linear power gain at the reference distance.
    pub fn ref_gain(&self) -> f64 {
        10f64.powf(self.ref_gain_db / 10.0)
    }

    /// Noise power spectral density in W/Hz.
    pub fn noise_psd(&self) -> f64 {
        10f64.powf((self.noise_psd_dbm_hz - 30.0) / 10.0)
    }

    fn validate(&self, node_count: usize) -> Result<()> {
        if self.tx_power.len() != node_count {
            return Err(Error::invariant(
                "radio.tx_power",
                format!("expected {node_count} entries, found {}", self.tx_power.len()),
            ));
        }
        for (i, &p) in self.tx_power.iter().enumerate() {
            positive(&format!("radio.tx_power[{i}]"), p)?;
        }
        finite("radio.ref_gain_db", self.ref_gain_db)?;
        finite("radio.noise_psd_dbm_hz", self.noise_psd_dbm_hz)?;
        positive("radio.bandwidth_hz", self.bandwidth)?;
        positive("radio.success_distance", self.success_distance)?;
        positive("radio.ref_gain_db (linear)", self.ref_gain())?;
        positive("radio.noise_psd_dbm_hz (linear)", self.noise_psd())?;
        Ok(())
    }
}

fn finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invariant(field, format!("must be finite, got {v}")))
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invariant(field, format!("must be finite and > 0, got {v}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "NodeRecord", into = "NodeRecord")]
pub struct NodeSpec {
    pub position: Point,
    /// One-slot autocorrelation of the node's source, strictly inside (0, 1).
    pub correlation: f64,
    pub initial_aoi: u32,
}

// File layout of a node: `{x, y, rho, initial_aoi}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecord {
    x: i32,
    y: i32,
    rho: f64,
    initial_aoi: u32,
}

impl From<NodeRecord> for NodeSpec {
    fn from(r: NodeRecord) -> Self {
        NodeSpec {
            position: Point::new(r.x, r.y),
            correlation: r.rho,
            initial_aoi: r.initial_aoi,
        }
    }
}

impl From<NodeSpec> for NodeRecord {
    fn from(n: NodeSpec) -> Self {
        NodeRecord {
            x: n.position.x,
            y: n.position.y,
            rho: n.correlation,
            initial_aoi: n.initial_aoi,
        }
    }
}

/// Immutable description of one network instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Lattice is `{0..=grid_extent}²`.
    pub grid_extent: i32,
    pub nodes: Vec<NodeSpec>,
    pub entity_start: Point,
    pub horizon: usize,
    pub step_length: i32,
    pub radio: RadioParams,
}

impl Scenario {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn contains(&self, p: Point) -> bool {
        (0..=self.grid_extent).contains(&p.x) && (0..=self.grid_extent).contains(&p.y)
    }

    pub fn lattice_size(&self) -> usize {
        lattice_size(self.grid_extent)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_extent < 0 {
            return Err(Error::invariant("grid_extent", "must be >= 0"));
        }
        if self.nodes.is_empty() {
            return Err(Error::invariant("nodes", "at least one node is required"));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if !self.contains(node.position) {
                return Err(Error::invariant(
                    format!("nodes[{i}].x/y"),
                    format!("position {} lies outside the grid", node.position),
                ));
            }
            let rho = node.correlation;
            if !(rho > 0.0 && rho < 1.0) {
                return Err(Error::invariant(
                    format!("nodes[{i}].rho"),
                    format!("must lie strictly inside (0, 1), got {rho}"),
                ));
            }
            if node.initial_aoi < 1 {
                return Err(Error::invariant(format!("nodes[{i}].initial_aoi"), "must be >= 1"));
            }
        }
        if !self.contains(self.entity_start) {
            return Err(Error::invariant(
                "entity_start",
                format!("{} lies outside the grid", self.entity_start),
            ));
        }
        if self.horizon < 1 {
            return Err(Error::invariant("horizon", "must be >= 1"));
        }
        if self.step_length < 1 {
            return Err(Error::invariant("step_length", "must be >= 1"));
        }
        self.radio.validate(self.nodes.len())
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serialization is infallible");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// The three-node case-study network: ρ = [0.7, 0.6, 0.5], initial ages
    /// [2, 4, 4], 1 W per node, ten slots on the 6×6 lattice.
    pub fn case_study() -> Self {
        let spec = |x, y, correlation, initial_aoi| NodeSpec {
            position: Point::new(x, y),
            correlation,
            initial_aoi,
        };
        Scenario {
            grid_extent: 5,
            nodes: vec![
                spec(1, 4, 0.7, 2),
                spec(1, 1, 0.6, 4),
                spec(4, 4, 0.5, 4),
            ],
            entity_start: Point::new(4, 0),
            horizon: 10,
            step_length: 1,
            radio: RadioParams::standard(3, 1.0),
        }
    }
}

pub(crate) fn lattice_size(grid_extent: i32) -> usize {
    if grid_extent < 0 {
        0
    } else {
        let side = grid_extent as usize + 1;
        side * side
    }
}

/// Hyper-parameters of a tabular Q-learning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    #[serde(rename = "beta")]
    pub learning_rate: f64,
    #[serde(rename = "gamma")]
    pub discount: f64,
    pub episodes: u64,
    pub epsilon_init: f64,
    pub epsilon_decrement: f64,
    /// Subtracted from the reward in slots without a successful reception.
    pub penalty: f64,
    #[serde(rename = "seed")]
    pub rng_seed: u64,
    /// Learn a separate value per slot and treat the last slot as terminal,
    /// which makes the learner solve the finite-horizon problem. When false
    /// the table is keyed by the state alone and every update bootstraps.
    #[serde(default = "default_true")]
    pub slot_indexed: bool,
}

fn default_true() -> bool {
    true
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            learning_rate: 0.75,
            discount: 0.9,
            episodes: 200_000,
            epsilon_init: 1.0,
            epsilon_decrement: 1.0 / 200_000.0,
            penalty: 100.0,
            rng_seed: 0,
            slot_indexed: true,
        }
    }
}

impl LearnerConfig {
    /// Sets the episode count and rescales the ε decrement so that
    /// exploration reaches zero on the final episode.
    pub fn with_episodes(mut self, episodes: u64) -> Self {
        self.episodes = episodes;
        self.epsilon_decrement = if episodes == 0 {
            0.0
        } else {
            self.epsilon_init / episodes as f64
        };
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    /// Exploration probability used during episode `round` (0-based).
    pub fn epsilon_at(&self, round: u64) -> f64 {
        (self.epsilon_init - round as f64 * self.epsilon_decrement).clamp(0.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let lr = self.learning_rate;
        if !(lr > 0.0 && lr <= 1.0) {
            return Err(Error::invariant("learner.beta", format!("must lie in (0, 1], got {lr}")));
        }
        let g = self.discount;
        if !(0.0..=1.0).contains(&g) {
            return Err(Error::invariant("learner.gamma", format!("must lie in [0, 1], got {g}")));
        }
        if !(0.0..=1.0).contains(&self.epsilon_init) {
            return Err(Error::invariant("learner.epsilon_init", "must lie in [0, 1]"));
        }
        if !(self.epsilon_decrement >= 0.0 && self.epsilon_decrement.is_finite()) {
            return Err(Error::invariant("learner.epsilon_decrement", "must be finite and >= 0"));
        }
        if !(self.penalty >= 0.0 && self.penalty.is_finite()) {
            return Err(Error::invariant("learner.penalty", "must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    grid_extent: i32,
    nodes: Vec<NodeSpec>,
    entity_start: Point,
    horizon: usize,
    step_length: i32,
    radio: RadioParams,
    learner: LearnerConfig,
}

/// Serializes a scenario and learner configuration into the JSON document
/// format.
pub fn save(scenario: &Scenario, config: &LearnerConfig) -> String {
    let doc = Document {
        grid_extent: scenario.grid_extent,
        nodes: scenario.nodes.clone(),
        entity_start: scenario.entity_start,
        horizon: scenario.horizon,
        step_length: scenario.step_length,
        radio: scenario.radio.clone(),
        learner: config.clone(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("document serialization is infallible");
    out.push('\n');
    out
}

/// Parses and validates a scenario document.
pub fn load(document: &str) -> Result<(Scenario, LearnerConfig)> {
    let de = &mut serde_json::Deserializer::from_str(document);
    let doc: Document = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    let scenario = Scenario {
        grid_extent: doc.grid_extent,
        nodes: doc.nodes,
        entity_start: doc.entity_start,
        horizon: doc.horizon,
        step_length: doc.step_length,
        radio: doc.radio,
    };
    scenario.validate()?;
    doc.learner.validate()?;
    Ok((scenario, doc.learner))
}

/// Knobs for [`generate_random`] beyond the ones that are randomised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorParams {
    pub node_count: usize,
    pub grid_extent: i32,
    pub rho_center: f64,
    pub rho_halfwidth: f64,
    pub horizon: usize,
    pub tx_power: f64,
    pub initial_aoi: u32,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            node_count: 4,
            grid_extent: 5,
            rho_center: 0.5,
            rho_halfwidth: 0.5,
            horizon: 30,
            tx_power: 1.0,
            initial_aoi: 1,
        }
    }
}

/// Draws a random instance: distinct uniform node positions, correlations
/// uniform on `(center − halfwidth, center + halfwidth) ∩ (0, 1)` and a
/// uniform entity start. Pure in `(params, seed)`.
pub fn generate_random(params: &GeneratorParams, seed: u64) -> Result<Scenario> {
    let points = lattice_size(params.grid_extent);
    if params.node_count > points {
        return Err(Error::ImpossiblePlacement {
            nodes: params.node_count,
            points,
        });
    }
    if params.node_count == 0 {
        return Err(Error::invariant("node_count", "at least one node is required"));
    }
    if params.rho_halfwidth.is_nan() || params.rho_halfwidth < 0.0 {
        return Err(Error::invariant("rho_halfwidth", "must be >= 0"));
    }
    let lo = params.rho_center - params.rho_halfwidth;
    let hi = params.rho_center + params.rho_halfwidth;
    let (lo_c, hi_c) = (lo.max(0.0), hi.min(1.0));
    let degenerate = params.rho_halfwidth == 0.0;
    if degenerate && !(params.rho_center > 0.0 && params.rho_center < 1.0) || !degenerate && lo_c >= hi_c {
        return Err(Error::EmptyCorrelationInterval { lo, hi });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = params.grid_extent;
    let mut positions: Vec<Point> = Vec::with_capacity(params.node_count);
    while positions.len() < params.node_count {
        let p = Point::new(rng.gen_range(0..=g), rng.gen_range(0..=g));
        if !positions.contains(&p) {
            positions.push(p);
        }
    }
    let nodes = positions
        .into_iter()
        .map(|position| {
            let correlation = if degenerate {
                params.rho_center
            } else {
                loop {
                    let v: f64 = rng.gen_range(lo_c..hi_c);
                    if v > 0.0 && v < 1.0 {
                        break v;
                    }
                }
            };
            NodeSpec {
                position,
                correlation,
                initial_aoi: params.initial_aoi,
            }
        })
        .collect();
    let entity_start = Point::new(rng.gen_range(0..=g), rng.gen_range(0..=g));
    let scenario = Scenario {
        grid_extent: g,
        nodes,
        entity_start,
        horizon: params.horizon,
        step_length: 1,
        radio: RadioParams::standard(params.node_count, params.tx_power),
    };
    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen(node_count: usize, grid_extent: i32, center: f64, half: f64, seed: u64) -> Result<Scenario> {
        let params = GeneratorParams {
            node_count,
            grid_extent,
            rho_center: center,
            rho_halfwidth: half,
            ..GeneratorParams::default()
        };
        generate_random(&params, seed)
    }

    #[test]
    fn random_instance_has_distinct_nodes_in_open_interval() {
        let s = gen(4, 5, 0.5, 0.5, 7).unwrap();
        assert_eq!(s.nodes.len(), 4);
        for (i, a) in s.nodes.iter().enumerate() {
            assert!(s.contains(a.position));
            assert!(a.correlation > 0.0 && a.correlation < 1.0);
            for b in &s.nodes[i + 1..] {
                assert_ne!(a.position, b.position);
            }
        }
        assert!(s.contains(s.entity_start));
    }

    #[test]
    fn single_point_lattice() {
        let s = gen(1, 0, 0.5, 0.1, 3).unwrap();
        assert_eq!(s.nodes[0].position, Point::new(0, 0));
        assert_eq!(s.entity_start, Point::new(0, 0));
        assert!(matches!(
            gen(2, 0, 0.5, 0.1, 3),
            Err(Error::ImpossiblePlacement { nodes: 2, points: 1 })
        ));
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = gen(5, 5, 0.5, 0.4, 11).unwrap();
        let b = gen(5, 5, 0.5, 0.4, 11).unwrap();
        let cfg = LearnerConfig::default();
        assert_eq!(save(&a, &cfg), save(&b, &cfg));
        assert_ne!(save(&a, &cfg), save(&gen(5, 5, 0.5, 0.4, 12).unwrap(), &cfg));
    }

    #[test]
    fn correlation_interval_handling() {
        let s = gen(6, 5, 0.5, 0.0, 1).unwrap();
        assert!(s.nodes.iter().all(|n| n.correlation == 0.5));
        let s = gen(6, 5, 0.95, 0.3, 1).unwrap();
        assert!(s.nodes.iter().all(|n| n.correlation > 0.65 && n.correlation < 1.0));
        assert!(matches!(gen(2, 5, 1.5, 0.2, 1), Err(Error::EmptyCorrelationInterval { .. })));
        assert!(matches!(gen(2, 5, 1.0, 0.0, 1), Err(Error::EmptyCorrelationInterval { .. })));
        assert!(matches!(gen(2, 5, -0.1, 0.1, 1), Err(Error::EmptyCorrelationInterval { .. })));
    }

    #[test]
    fn case_study_round_trips() {
        let s = Scenario::case_study();
        let cfg = LearnerConfig::default().with_seed(42);
        let text = save(&s, &cfg);
        let (s2, cfg2) = load(&text).unwrap();
        assert_eq!(s, s2);
        assert_eq!(cfg, cfg2);
        assert_eq!(save(&s2, &cfg2), text);
    }

    #[test]
    fn linear_conversions() {
        let r = RadioParams::standard(1, 1.0);
        assert!((r.ref_gain() - 1e-5).abs() < 1e-20);
        assert!((r.noise_psd() - 1e-14).abs() < 1e-28);
    }

    fn doc_with(edit: impl FnOnce(&mut serde_json::Value)) -> String {
        let mut v: serde_json::Value =
            serde_json::from_str(&save(&Scenario::case_study(), &LearnerConfig::default())).unwrap();
        edit(&mut v);
        v.to_string()
    }

    #[test]
    fn empty_nodes_rejected() {
        let doc = doc_with(|v| {
            v["nodes"] = serde_json::json!([]);
            v["radio"]["tx_power"] = serde_json::json!([]);
        });
        match load(&doc) {
            Err(Error::Invariant { field, .. }) => assert_eq!(field, "nodes"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rho_of_one_rejected() {
        let doc = doc_with(|v| v["nodes"][1]["rho"] = serde_json::json!(1.0));
        match load(&doc) {
            Err(Error::Invariant { field, .. }) => assert_eq!(field, "nodes[1].rho"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_errors_carry_paths() {
        let doc = doc_with(|v| v["radio"]["bandwidth_hz"] = serde_json::json!("wide"));
        match load(&doc) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "radio.bandwidth_hz"),
            other => panic!("unexpected {other:?}"),
        }
        let doc = doc_with(|v| {
            v["learner"].as_object_mut().unwrap().remove("gamma");
        });
        assert!(matches!(load(&doc), Err(Error::Schema { .. })));
        let doc = doc_with(|v| v["learner"]["alpha"] = serde_json::json!(0.1));
        assert!(matches!(load(&doc), Err(Error::Schema { .. })));
        assert!(matches!(load("{"), Err(Error::Schema { .. })));
    }

    #[test]
    fn slot_indexing_defaults_on() {
        let doc = doc_with(|v| {
            v["learner"].as_object_mut().unwrap().remove("slot_indexed");
        });
        assert!(load(&doc).unwrap().1.slot_indexed);
    }

    #[test]
    fn scalar_tx_power_is_accepted() {
        let doc = doc_with(|v| {
            v["nodes"] = serde_json::json!([{"x": 0, "y": 0, "rho": 0.3, "initial_aoi": 1}]);
            v["radio"]["tx_power"] = serde_json::json!(2.0);
        });
        let (s, _) = load(&doc).unwrap();
        assert_eq!(s.radio.tx_power, vec![2.0]);
    }

    #[test]
    fn epsilon_schedule_clamps() {
        let cfg = LearnerConfig {
            epsilon_init: 1.0,
            epsilon_decrement: 0.3,
            ..LearnerConfig::default()
        };
        assert_eq!(cfg.epsilon_at(0), 1.0);
        assert!((cfg.epsilon_at(2) - 0.4).abs() < 1e-15);
        assert_eq!(cfg.epsilon_at(4), 0.0);
        assert_eq!(LearnerConfig::default().with_episodes(10).epsilon_decrement, 0.1);
    }
}
