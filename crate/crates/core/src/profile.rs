//! Heterogeneity profiling: per-(network, cell) occurrence tallies of QoS
//! and radio configuration fields extracted from cellular events, with a
//! structured text import/export mirroring the (field, value, count,
//! probability) layout.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::event::{CellularEvent, EventKind};
use crate::model::{CellId, NetworkId};

/// QoS fields profiled from EPS/PDP session setup.
pub const QOS_FIELDS: [&str; 6] =
    ["traffic_class", "delay_class", "max_dl_rate", "max_ul_rate", "dl_gbr", "ul_gbr"];

/// Radio fields profiled from RRC reconfiguration.
pub const RADIO_FIELDS: [&str; 4] =
    ["tdd_config", "paging_cycle", "handoff_priority", "handoff_threshold"];

/// Voice preference profiled from location updates.
pub const VOICE_FIELD: &str = "voice_over_ps";

/// A profiled configuration value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileValue {
    Bool(bool),
    Num(f64),
    Text(String),
}

impl Eq for ProfileValue {}

impl Ord for ProfileValue {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use ProfileValue::*;
        match (self, other) {
            (Bool(a), Bool(b)) => a.cmp(b),
            (Num(a), Num(b)) => a.total_cmp(b),
            (Text(a), Text(b)) => a.cmp(b),
            (Bool(_), _) => std::cmp::Ordering::Less,
            (_, Bool(_)) => std::cmp::Ordering::Greater,
            (Num(_), Text(_)) => std::cmp::Ordering::Less,
            (Text(_), Num(_)) => std::cmp::Ordering::Greater,
        }
    }
}

impl PartialOrd for ProfileValue {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl ProfileValue {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            ProfileValue::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            ProfileValue::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            ProfileValue::Text(s) => Some(s),
            _ => None,
        }
    }
}

/// Occurrence tally for one field at one cell.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FieldTally {
    pub counts: BTreeMap<ProfileValue, u64>,
    pub total: u64,
}

impl FieldTally {
    fn observe(&mut self, value: ProfileValue) {
        *self.counts.entry(value).or_insert(0) += 1;
        self.total += 1;
    }

    /// Modal value with its count and occurrence probability. Count ties
    /// break toward the smaller value.
    pub fn modal(&self) -> Option<(&ProfileValue, u64, f64)> {
        let (value, count) = self.counts.iter().max_by(|a, b| {
            a.1.cmp(b.1).then_with(|| b.0.cmp(a.0))
        })?;
        Some((value, *count, *count as f64 / self.total as f64))
    }
}

/// Per-(network, cell) heterogeneity profiles.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProfileStore {
    pub entries: BTreeMap<(NetworkId, CellId), BTreeMap<String, FieldTally>>,
}

impl ProfileStore {
    pub fn new() -> Self {
        ProfileStore::default()
    }

    fn observe(&mut self, network: &NetworkId, cell: &CellId, field: &str, value: ProfileValue) {
        self.entries
            .entry((network.clone(), cell.clone()))
            .or_default()
            .entry(field.to_string())
            .or_default()
            .observe(value);
    }

    /// Extract profile fields from one event. Only EPS/PDP session setup
    /// (QoS fields) and RRC reconfiguration (radio fields) contribute;
    /// identifier and bookkeeping fields are dropped, and every other
    /// event kind is a no-op.
    pub fn profile_update(&mut self, event: &CellularEvent) {
        match &event.kind {
            EventKind::EpsPdpSetup {
                cell,
                network,
                bearer_id: _,
                traffic_class,
                delay_class,
                max_dl_rate,
                max_ul_rate,
                dl_gbr,
                ul_gbr,
            } => {
                self.observe(network, cell, "traffic_class", ProfileValue::Text(traffic_class.to_string()));
                self.observe(network, cell, "delay_class", ProfileValue::Num(*delay_class as f64));
                self.observe(network, cell, "max_dl_rate", ProfileValue::Num(*max_dl_rate));
                self.observe(network, cell, "max_ul_rate", ProfileValue::Num(*max_ul_rate));
                self.observe(network, cell, "dl_gbr", ProfileValue::Num(*dl_gbr));
                self.observe(network, cell, "ul_gbr", ProfileValue::Num(*ul_gbr));
            }
            EventKind::RrcReconfig {
                cell,
                network,
                transaction_id: _,
                tdd_config,
                paging_cycle,
                handoff_priority,
                handoff_threshold,
            } => {
                self.observe(network, cell, "tdd_config", ProfileValue::Text(tdd_config.clone()));
                self.observe(network, cell, "paging_cycle", ProfileValue::Num(*paging_cycle));
                self.observe(network, cell, "handoff_priority", ProfileValue::Num(*handoff_priority as f64));
                self.observe(network, cell, "handoff_threshold", ProfileValue::Num(*handoff_threshold));
            }
            _ => {}
        }
    }

    /// Full event ingestion: [`Self::profile_update`] plus the voice
    /// preference carried by location updates.
    pub fn ingest(&mut self, event: &CellularEvent) {
        self.profile_update(event);
        if let EventKind::LocationUpdate { cell, network, tracking_area: _, voice_over_ps } =
            &event.kind
        {
            self.observe(network, cell, VOICE_FIELD, ProfileValue::Bool(*voice_over_ps));
        }
    }

    pub fn cell_tally(&self, network: &NetworkId, cell: &CellId, field: &str) -> Option<&FieldTally> {
        self.entries.get(&(network.clone(), cell.clone()))?.get(field)
    }

    /// Modal value for a field aggregated over all profiled cells of a
    /// network.
    pub fn network_modal(&self, network: &NetworkId, field: &str) -> Option<(ProfileValue, f64)> {
        let mut merged: BTreeMap<&ProfileValue, u64> = BTreeMap::new();
        let mut total = 0u64;
        for ((net, _), fields) in &self.entries {
            if net != network {
                continue;
            }
            if let Some(tally) = fields.get(field) {
                for (value, count) in &tally.counts {
                    *merged.entry(value).or_insert(0) += count;
                    total += count;
                }
            }
        }
        let (value, count) =
            merged.into_iter().max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(a.0)))?;
        Some((value.clone(), count as f64 / total as f64))
    }

    /// Modal value across every profiled cell of every network.
    pub fn global_modal(&self, field: &str) -> Option<ProfileValue> {
        let mut merged: BTreeMap<&ProfileValue, u64> = BTreeMap::new();
        for fields in self.entries.values() {
            if let Some(tally) = fields.get(field) {
                for (value, count) in &tally.counts {
                    *merged.entry(value).or_insert(0) += count;
                }
            }
        }
        merged
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(a.0)))
            .map(|(v, _)| v.clone())
    }

    /// Whether a network is profiled to support voice without 3G fallback.
    pub fn voice_over_ps(&self, network: &NetworkId) -> Option<bool> {
        self.network_modal(network, VOICE_FIELD).and_then(|(v, _)| v.as_bool())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Serialize to the structured text layout: one entry per (network,
    /// cell), one row per observed (field, value) with count and
    /// probability.
    pub fn to_toml_string(&self) -> String {
        let export = ProfileExport::from(self);
        toml::to_string(&export).expect("profile export serializes")
    }

    /// Parse a profile export back into a store.
    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        let export: ProfileExport = toml::from_str(text)?;
        Ok(export.into_store())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ProfileExport {
    #[serde(default, rename = "entry")]
    entries: Vec<ExportEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ExportEntry {
    network: NetworkId,
    cell: CellId,
    #[serde(default, rename = "field")]
    fields: Vec<ExportField>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ExportField {
    name: String,
    value: ProfileValue,
    count: u64,
    probability: f64,
}

impl From<&ProfileStore> for ProfileExport {
    fn from(store: &ProfileStore) -> Self {
        let mut entries = Vec::new();
        for ((network, cell), fields) in &store.entries {
            let mut rows = Vec::new();
            for (name, tally) in fields {
                for (value, count) in &tally.counts {
                    rows.push(ExportField {
                        name: name.clone(),
                        value: value.clone(),
                        count: *count,
                        probability: *count as f64 / tally.total as f64,
                    });
                }
            }
            entries.push(ExportEntry { network: network.clone(), cell: cell.clone(), fields: rows });
        }
        ProfileExport { entries }
    }
}

impl ProfileExport {
    fn into_store(self) -> ProfileStore {
        let mut store = ProfileStore::new();
        for entry in self.entries {
            let fields = store.entries.entry((entry.network, entry.cell)).or_default();
            for row in entry.fields {
                let tally = fields.entry(row.name).or_default();
                *tally.counts.entry(row.value).or_insert(0) += row.count;
                tally.total += row.count;
            }
        }
        store
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TrafficClass;

    fn eps_event(class: TrafficClass) -> CellularEvent {
        CellularEvent {
            time: 1.0,
            kind: EventKind::EpsPdpSetup {
                cell: CellId::from("t4-a"),
                network: NetworkId::from("T-4G"),
                bearer_id: 9,
                traffic_class: class,
                delay_class: 1,
                max_dl_rate: 256.0,
                max_ul_rate: 44.0,
                dl_gbr: 0.0,
                ul_gbr: 0.0,
            },
        }
    }

    #[test]
    fn modal_probability_counts_occurrences() {
        let mut store = ProfileStore::new();
        for _ in 0..39 {
            store.profile_update(&eps_event(TrafficClass::Interactive));
        }
        store.profile_update(&eps_event(TrafficClass::Background));
        let tally = store
            .cell_tally(&NetworkId::from("T-4G"), &CellId::from("t4-a"), "traffic_class")
            .unwrap();
        let (value, count, prob) = tally.modal().unwrap();
        assert_eq!(value.as_text(), Some("Interactive"));
        assert_eq!(count, 39);
        assert!((prob - 0.975).abs() < 1e-12);
    }

    #[test]
    fn first_observation_has_probability_one() {
        let mut store = ProfileStore::new();
        store.profile_update(&eps_event(TrafficClass::Background));
        let tally = store
            .cell_tally(&NetworkId::from("T-4G"), &CellId::from("t4-a"), "delay_class")
            .unwrap();
        let (_, count, prob) = tally.modal().unwrap();
        assert_eq!(count, 1);
        assert_eq!(prob, 1.0);
    }

    #[test]
    fn radio_meas_is_a_no_op() {
        let mut store = ProfileStore::new();
        store.profile_update(&CellularEvent {
            time: 0.0,
            kind: EventKind::RadioMeas {
                cell: CellId::from("t4-a"),
                network: NetworkId::from("T-4G"),
                rss_dbm: -90.0,
            },
        });
        assert!(store.is_empty());
    }

    #[test]
    fn export_round_trips() {
        let mut store = ProfileStore::new();
        for _ in 0..3 {
            store.profile_update(&eps_event(TrafficClass::Interactive));
        }
        store.ingest(&CellularEvent {
            time: 2.0,
            kind: EventKind::LocationUpdate {
                cell: CellId::from("t4-a"),
                network: NetworkId::from("T-4G"),
                tracking_area: "ta-b4".into(),
                voice_over_ps: false,
            },
        });
        let text = store.to_toml_string();
        let back = ProfileStore::from_toml_str(&text).unwrap();
        assert_eq!(back, store);
        assert_eq!(back.voice_over_ps(&NetworkId::from("T-4G")), Some(false));
    }
}
