//! Domain types shared by every module: carrier networks, cells, radio
//! traces, workloads, the ground-truth performance model, and the scenario
//! container that ties a run together.
//!
//! Everything here is immutable after validation and safe to share
//! read-only across threads.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Opaque carrier-network identifier, unique per scenario.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NetworkId(pub String);

/// Opaque cell identifier, unique per scenario.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellId(pub String);

impl fmt::Display for NetworkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NetworkId {
    fn from(s: &str) -> Self {
        NetworkId(s.to_string())
    }
}

impl From<&str> for CellId {
    fn from(s: &str) -> Self {
        CellId(s.to_string())
    }
}

/// Radio access technology of a carrier network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rat {
    #[serde(rename = "RAT_4G")]
    Rat4g,
    #[serde(rename = "RAT_3G")]
    Rat3g,
}

impl fmt::Display for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rat::Rat4g => f.write_str("4G"),
            Rat::Rat3g => f.write_str("3G"),
        }
    }
}

/// Bearer traffic class assigned by a carrier, ordered best-first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TrafficClass {
    Conversational,
    Streaming,
    Interactive,
    Background,
}

impl TrafficClass {
    /// Rank for QoS comparisons; lower is better.
    pub fn rank(self) -> u8 {
        match self {
            TrafficClass::Conversational => 0,
            TrafficClass::Streaming => 1,
            TrafficClass::Interactive => 2,
            TrafficClass::Background => 3,
        }
    }
}

impl fmt::Display for TrafficClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TrafficClass::Conversational => "Conversational",
            TrafficClass::Streaming => "Streaming",
            TrafficClass::Interactive => "Interactive",
            TrafficClass::Background => "Background",
        };
        f.write_str(s)
    }
}

/// QoS parameters a network assigns at session setup. Rates in Mbps;
/// a guaranteed bit rate of 0.0 means best-effort.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QosConfig {
    pub traffic_class: TrafficClass,
    pub delay_class: i64,
    pub max_dl_rate: f64,
    pub max_ul_rate: f64,
    #[serde(default)]
    pub dl_gbr: f64,
    #[serde(default)]
    pub ul_gbr: f64,
}

impl Default for QosConfig {
    fn default() -> Self {
        QosConfig {
            traffic_class: TrafficClass::Background,
            delay_class: 4,
            max_dl_rate: 100.0,
            max_ul_rate: 50.0,
            dl_gbr: 0.0,
            ul_gbr: 0.0,
        }
    }
}

/// Per-cell broadcast configuration: access barring (SIB1), the paging/DRX
/// cycle, and idle-mode reselection rules (SIB3-8).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SibConfig {
    pub barred: bool,
    /// Paging cycle length in seconds; occasions sit at integer multiples.
    pub paging_cycle: f64,
    /// Awake portion at the start of each cycle, in (0, paging_cycle).
    pub on_duration: f64,
    pub reselection_priority: i64,
    /// Serving RSS below this triggers network-side reselection (dBm).
    pub reselection_threshold: f64,
    /// Whether voice works on this cell without falling back to 3G.
    pub voice_over_ps: bool,
}

/// One access option's cell: scan cost, attach cost, and broadcast config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub cell_id: CellId,
    pub network: NetworkId,
    pub band: String,
    /// Per-cell scan cost in seconds (the T_t term of the switch model).
    pub scan_time: f64,
    /// Registration cost in seconds when this cell is the attach target.
    pub attach_time: f64,
    pub sib: SibConfig,
}

/// A PLMN+RAT access option and the cells it operates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarrierNetwork {
    pub network_id: NetworkId,
    /// Carrier identifier; networks sharing a plmn belong to one carrier.
    pub plmn: String,
    pub rat: Rat,
    pub cells: Vec<CellId>,
    /// QoS configuration this network assigns at EPS/PDP session setup.
    #[serde(default)]
    pub qos: QosConfig,
    /// TDD UL/DL configuration carried in RRC reconfiguration ("N/A" for FDD).
    #[serde(default)]
    pub tdd_config: Option<String>,
}

/// Time-indexed RSS breakpoints per cell; values between breakpoints are
/// linearly interpolated and clamp to the nearest endpoint outside the range.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RadioTrace {
    pub cells: BTreeMap<CellId, Vec<(f64, f64)>>,
}

/// Piecewise-linear interpolation over sorted (x, y) breakpoints, clamping
/// outside the range. `points` must be non-empty.
pub(crate) fn interp(points: &[(f64, f64)], x: f64) -> f64 {
    let (first, last) = (points[0], points[points.len() - 1]);
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    for pair in points.windows(2) {
        let (x0, y0) = pair[0];
        let (x1, y1) = pair[1];
        if x <= x1 {
            if x == x0 {
                return y0;
            }
            if x == x1 {
                return y1;
            }
            return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        }
    }
    last.1
}

/// Lookup failure for a cell absent from the radio trace.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unknown cell in trace: {0}")]
pub struct UnknownCell(pub CellId);

impl RadioTrace {
    /// RSS at time `t`, linearly interpolated; clamps outside the
    /// breakpoint range.
    pub fn rss_at(&self, cell: &CellId, t: f64) -> Result<f64, UnknownCell> {
        let points = self
            .cells
            .get(cell)
            .filter(|p| !p.is_empty())
            .ok_or_else(|| UnknownCell(cell.clone()))?;
        Ok(interp(points, t))
    }

    /// Earliest `t >= from_t` after which the cell's RSS sits strictly
    /// below `level` (the crossing instant itself when the trace passes
    /// through `level`). `None` if the trace never goes below.
    pub fn first_time_below(
        &self,
        cell: &CellId,
        level: f64,
        from_t: f64,
    ) -> Result<Option<f64>, UnknownCell> {
        let points = self
            .cells
            .get(cell)
            .filter(|p| !p.is_empty())
            .ok_or_else(|| UnknownCell(cell.clone()))?;
        if interp(points, from_t) < level {
            return Ok(Some(from_t));
        }
        for pair in points.windows(2) {
            let (t0, v0) = pair[0];
            let (t1, v1) = pair[1];
            if t1 <= from_t || v1 >= level {
                continue;
            }
            // v1 < level; segment is the first to dip below.
            let t_cross = if v0 < level {
                t0
            } else if v0 == v1 {
                t0
            } else {
                t0 + (level - v0) * (t1 - t0) / (v1 - v0)
            };
            return Ok(Some(t_cross.max(from_t)));
        }
        // After the last breakpoint the value clamps; check the tail.
        let last = points[points.len() - 1];
        if last.1 < level {
            return Ok(Some(last.0.max(from_t)));
        }
        Ok(None)
    }

    /// Next instant strictly after `after` at which the cell's RSS
    /// transitions from at-or-above `level` to strictly below it.
    pub fn next_downward_crossing(
        &self,
        cell: &CellId,
        level: f64,
        after: f64,
    ) -> Result<Option<f64>, UnknownCell> {
        let points = self
            .cells
            .get(cell)
            .filter(|p| !p.is_empty())
            .ok_or_else(|| UnknownCell(cell.clone()))?;
        for pair in points.windows(2) {
            let (t0, v0) = pair[0];
            let (t1, v1) = pair[1];
            if v0 < level || v1 >= level {
                continue;
            }
            let t_cross = if v0 == v1 {
                t0
            } else {
                t0 + (level - v0) * (t1 - t0) / (v1 - v0)
            };
            if t_cross > after {
                return Ok(Some(t_cross));
            }
        }
        Ok(None)
    }
}

/// Traffic direction of a workload flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "UPLINK")]
    Uplink,
    #[serde(rename = "DOWNLINK")]
    Downlink,
}

/// One interval-level traffic flow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub arrival_time: f64,
    pub direction: Direction,
    pub duration: f64,
    /// Data volume in GB, counted toward billing usage. Optional.
    #[serde(default)]
    pub volume_gb: f64,
}

/// The evaluation metric a run optimizes and reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Latency,
    Throughput,
}

impl Metric {
    pub fn lower_is_better(self) -> bool {
        matches!(self, Metric::Latency)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Latency => f.write_str("latency"),
            Metric::Throughput => f.write_str("throughput"),
        }
    }
}

/// Ground-truth performance declaration for one network: piecewise-linear
/// curves over RSS, optionally scaled by the network's traffic class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkPerf {
    /// (rss dBm, latency ms) breakpoints.
    pub latency: Vec<(f64, f64)>,
    /// (rss dBm, throughput Mbps) breakpoints.
    pub throughput: Vec<(f64, f64)>,
    /// Multipliers applied per traffic class; absent classes use 1.0.
    #[serde(default)]
    pub class_factor: ClassFactors,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassFactors {
    #[serde(default)]
    pub latency: BTreeMap<TrafficClass, f64>,
    #[serde(default)]
    pub throughput: BTreeMap<TrafficClass, f64>,
}

/// Deterministic mapping from (network, rss, assigned QoS) to each metric.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PerformanceModel {
    pub networks: BTreeMap<NetworkId, NetworkPerf>,
}

impl PerformanceModel {
    /// Evaluate the declared ground truth for a network at a given RSS.
    /// The network's own traffic class selects the curve multiplier.
    pub fn evaluate(
        &self,
        network: &NetworkId,
        metric: Metric,
        rss: f64,
        class: TrafficClass,
    ) -> Option<f64> {
        let perf = self.networks.get(network)?;
        let (curve, factors) = match metric {
            Metric::Latency => (&perf.latency, &perf.class_factor.latency),
            Metric::Throughput => (&perf.throughput, &perf.class_factor.throughput),
        };
        if curve.is_empty() {
            return None;
        }
        let factor = factors.get(&class).copied().unwrap_or(1.0);
        Some(interp(curve, rss) * factor)
    }
}

/// One pricing tier: the per-GB price charged while usage is below `up_to`
/// (unbounded when `up_to` is absent).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BillingTier {
    pub up_to: Option<f64>,
    pub price_per_gb: f64,
}

/// A carrier's data plan plus the subscriber's current usage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BillingPlan {
    pub tiers: Vec<BillingTier>,
    #[serde(default)]
    pub current_usage_gb: f64,
}

impl BillingPlan {
    /// Per-GB price at a given cumulative usage.
    pub fn unit_price_at(&self, usage_gb: f64) -> Option<f64> {
        for tier in &self.tiers {
            match tier.up_to {
                Some(limit) if usage_gb < limit => return Some(tier.price_per_gb),
                Some(_) => continue,
                None => return Some(tier.price_per_gb),
            }
        }
        self.tiers.last().map(|t| t.price_per_gb)
    }
}

/// Baseline network-controlled selection config.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    /// Home-carrier preference order; must cover every scenario network.
    pub plmn_priority_list: Vec<NetworkId>,
}

fn none_str() -> String {
    "NONE".to_string()
}

/// Device-side configuration and initial state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceConfig {
    /// Network the device starts registered on, or "NONE".
    #[serde(default = "none_str")]
    pub initial_registration: String,
    #[serde(default)]
    pub needs_voice: bool,
    #[serde(default = "default_true")]
    pub needs_data: bool,
    /// Probability an attach attempt fails; seed-driven, default 0.
    #[serde(default)]
    pub attach_failure_prob: f64,
    /// Extra awake time after a flow ends, in seconds.
    #[serde(default)]
    pub inactivity_tail: f64,
}

fn default_true() -> bool {
    true
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig {
            initial_registration: none_str(),
            needs_voice: false,
            needs_data: true,
            attach_failure_prob: 0.0,
            inactivity_tail: 0.0,
        }
    }
}

impl DeviceConfig {
    pub fn initial_network(&self) -> Option<NetworkId> {
        if self.initial_registration == "NONE" {
            None
        } else {
            Some(NetworkId(self.initial_registration.clone()))
        }
    }
}

fn default_service_floor() -> f64 {
    -140.0
}

/// A complete simulation world: validated once, then shared read-only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    /// Optional SIM-reconfiguration delay added to inter-carrier attaches.
    #[serde(default)]
    pub platform_overhead: f64,
    /// RSS below this means no usable service (dBm).
    #[serde(default = "default_service_floor")]
    pub service_floor: f64,
    /// Simulation horizon in seconds; defaults to the last trace breakpoint.
    #[serde(default)]
    pub duration: Option<f64>,
    pub networks: Vec<CarrierNetwork>,
    pub cells: Vec<Cell>,
    pub trace: RadioTrace,
    #[serde(default)]
    pub workload: Vec<Flow>,
    pub performance: PerformanceModel,
    pub baseline: BaselineConfig,
    #[serde(default)]
    pub device: DeviceConfig,
    /// Per-carrier plans keyed by plmn, for the billing strategy.
    #[serde(default)]
    pub billing: BTreeMap<String, BillingPlan>,
}

impl Scenario {
    pub fn network(&self, id: &NetworkId) -> Option<&CarrierNetwork> {
        self.networks.iter().find(|n| &n.network_id == id)
    }

    pub fn cell(&self, id: &CellId) -> Option<&Cell> {
        self.cells.iter().find(|c| &c.cell_id == id)
    }

    pub fn cells_of(&self, network: &NetworkId) -> Vec<&Cell> {
        self.cells.iter().filter(|c| &c.network == network).collect()
    }

    /// Effective horizon: explicit duration, else the latest breakpoint.
    pub fn horizon(&self) -> f64 {
        if let Some(d) = self.duration {
            return d;
        }
        self.trace
            .cells
            .values()
            .filter_map(|p| p.last().map(|&(t, _)| t))
            .fold(0.0, f64::max)
    }

    /// RSS of the strongest cell of `network` at time `t`, with that cell.
    pub fn strongest_cell(&self, network: &NetworkId, t: f64) -> Option<(&Cell, f64)> {
        let mut best: Option<(&Cell, f64)> = None;
        for cell in self.cells_of(network) {
            let rss = match self.trace.rss_at(&cell.cell_id, t) {
                Ok(v) => v,
                Err(_) => continue,
            };
            let better = match best {
                None => true,
                // Ties break toward the lexicographically smaller cell id,
                // which the iteration order already visits first.
                Some((_, best_rss)) => rss > best_rss,
            };
            if better {
                best = Some((cell, rss));
            }
        }
        best
    }

    /// Whether a network has at least one unbarred cell above the floor.
    pub fn network_available(&self, network: &NetworkId, t: f64) -> bool {
        self.cells_of(network).iter().any(|c| {
            !c.sib.barred
                && self
                    .trace
                    .rss_at(&c.cell_id, t)
                    .map(|r| r >= self.service_floor)
                    .unwrap_or(false)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace_of(points: &[(f64, f64)]) -> RadioTrace {
        let mut cells = BTreeMap::new();
        cells.insert(CellId::from("c1"), points.to_vec());
        RadioTrace { cells }
    }

    #[test]
    fn rss_interpolates_midpoint() {
        let tr = trace_of(&[(0.0, -100.0), (10.0, -120.0)]);
        assert_eq!(tr.rss_at(&CellId::from("c1"), 5.0).unwrap(), -110.0);
    }

    #[test]
    fn rss_exact_at_breakpoints() {
        let tr = trace_of(&[(0.0, -100.0), (10.0, -120.0)]);
        assert_eq!(tr.rss_at(&CellId::from("c1"), 0.0).unwrap(), -100.0);
        assert_eq!(tr.rss_at(&CellId::from("c1"), 10.0).unwrap(), -120.0);
    }

    #[test]
    fn rss_clamps_outside_range() {
        let tr = trace_of(&[(0.0, -100.0), (10.0, -120.0)]);
        assert_eq!(tr.rss_at(&CellId::from("c1"), 15.0).unwrap(), -120.0);
        assert_eq!(tr.rss_at(&CellId::from("c1"), -3.0).unwrap(), -100.0);
    }

    #[test]
    fn rss_unknown_cell_errors() {
        let tr = trace_of(&[(0.0, -100.0)]);
        assert!(tr.rss_at(&CellId::from("nope"), 0.0).is_err());
    }

    #[test]
    fn first_time_below_finds_crossing() {
        let tr = trace_of(&[(0.0, -100.0), (10.0, -120.0)]);
        // Crosses -110 exactly at t=5.
        let t = tr
            .first_time_below(&CellId::from("c1"), -110.0, 0.0)
            .unwrap()
            .unwrap();
        assert!((t - 5.0).abs() < 1e-12);
        // Already below from the start.
        let t0 = tr
            .first_time_below(&CellId::from("c1"), -90.0, 2.0)
            .unwrap()
            .unwrap();
        assert_eq!(t0, 2.0);
        // Never goes below -130.
        assert!(tr
            .first_time_below(&CellId::from("c1"), -130.0, 0.0)
            .unwrap()
            .is_none());
    }

    #[test]
    fn billing_tier_lookup() {
        let plan = BillingPlan {
            tiers: vec![
                BillingTier { up_to: Some(1.0), price_per_gb: 0.0 },
                BillingTier { up_to: None, price_per_gb: 2.0 },
            ],
            current_usage_gb: 0.0,
        };
        assert_eq!(plan.unit_price_at(0.5), Some(0.0));
        assert_eq!(plan.unit_price_at(5.0), Some(2.0));
    }

    #[test]
    fn perf_model_applies_class_factor() {
        let mut networks = BTreeMap::new();
        let mut lat_factors = BTreeMap::new();
        lat_factors.insert(TrafficClass::Interactive, 0.5);
        networks.insert(
            NetworkId::from("n1"),
            NetworkPerf {
                latency: vec![(-120.0, 200.0), (-80.0, 40.0)],
                throughput: vec![(-120.0, 1.0), (-80.0, 40.0)],
                class_factor: ClassFactors { latency: lat_factors, throughput: BTreeMap::new() },
            },
        );
        let model = PerformanceModel { networks };
        let v = model
            .evaluate(&NetworkId::from("n1"), Metric::Latency, -100.0, TrafficClass::Interactive)
            .unwrap();
        assert_eq!(v, 60.0); // midpoint 120 ms scaled by 0.5
        let w = model
            .evaluate(&NetworkId::from("n1"), Metric::Latency, -100.0, TrafficClass::Background)
            .unwrap();
        assert_eq!(w, 120.0);
    }
}
