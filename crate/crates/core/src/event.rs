//! Simulated signaling and measurement events, mirroring what a phone-side
//! monitor extracts from the cellular interface, plus the newline-delimited
//! log export.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::model::{CellId, NetworkId, TrafficClass};

/// One simulated cellular event. Serialized as `{time, kind, payload}`
/// with a stable field order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellularEvent {
    pub time: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Event kind plus its kind-specific payload.
///
/// Payloads deliberately carry a few identifier-style fields (bearer ids,
/// transaction ids, tracking areas) that profiling must ignore.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventKind {
    #[serde(rename = "PAGING")]
    Paging { cell: CellId, has_downlink: bool },
    #[serde(rename = "RADIO_MEAS")]
    RadioMeas { cell: CellId, network: NetworkId, rss_dbm: f64 },
    #[serde(rename = "RRC_SIB1")]
    RrcSib1 {
        cell: CellId,
        network: NetworkId,
        plmn: String,
        barred: bool,
    },
    #[serde(rename = "RRC_SIB_RESEL")]
    RrcSibResel {
        cell: CellId,
        network: NetworkId,
        reselection_priority: i64,
        reselection_threshold: f64,
    },
    #[serde(rename = "RRC_RECONFIG")]
    RrcReconfig {
        cell: CellId,
        network: NetworkId,
        /// Identifier field, dropped by profiling.
        transaction_id: u64,
        tdd_config: String,
        paging_cycle: f64,
        handoff_priority: i64,
        handoff_threshold: f64,
    },
    #[serde(rename = "EPS_PDP_SETUP")]
    EpsPdpSetup {
        cell: CellId,
        network: NetworkId,
        /// Identifier field, dropped by profiling.
        bearer_id: u64,
        traffic_class: TrafficClass,
        delay_class: i64,
        max_dl_rate: f64,
        max_ul_rate: f64,
        dl_gbr: f64,
        ul_gbr: f64,
    },
    #[serde(rename = "LOCATION_UPDATE")]
    LocationUpdate {
        cell: CellId,
        network: NetworkId,
        /// Identifier field, dropped by profiling.
        tracking_area: String,
        voice_over_ps: bool,
    },
    #[serde(rename = "ATTACH_ACCEPT")]
    AttachAccept { cell: CellId, network: NetworkId },
    #[serde(rename = "DETACH")]
    Detach { network: Option<NetworkId> },
    #[serde(rename = "OUT_OF_SERVICE")]
    OutOfService { network: NetworkId, cell: CellId },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Paging { .. } => "PAGING",
            EventKind::RadioMeas { .. } => "RADIO_MEAS",
            EventKind::RrcSib1 { .. } => "RRC_SIB1",
            EventKind::RrcSibResel { .. } => "RRC_SIB_RESEL",
            EventKind::RrcReconfig { .. } => "RRC_RECONFIG",
            EventKind::EpsPdpSetup { .. } => "EPS_PDP_SETUP",
            EventKind::LocationUpdate { .. } => "LOCATION_UPDATE",
            EventKind::AttachAccept { .. } => "ATTACH_ACCEPT",
            EventKind::Detach { .. } => "DETACH",
            EventKind::OutOfService { .. } => "OUT_OF_SERVICE",
        }
    }
}

/// Write one JSON record per event, newline-delimited.
pub fn write_event_log<W: Write>(events: &[CellularEvent], mut out: W) -> std::io::Result<()> {
    for ev in events {
        let line = serde_json::to_string(ev).expect("event serializes");
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_serializes_with_stable_field_order() {
        let ev = CellularEvent {
            time: 1.5,
            kind: EventKind::RadioMeas {
                cell: CellId::from("c1"),
                network: NetworkId::from("n1"),
                rss_dbm: -101.0,
            },
        };
        let json = serde_json::to_string(&ev).unwrap();
        assert_eq!(
            json,
            r#"{"time":1.5,"kind":"RADIO_MEAS","payload":{"cell":"c1","network":"n1","rss_dbm":-101.0}}"#
        );
        let back: CellularEvent = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ev);
    }

    #[test]
    fn event_log_is_one_line_per_event() {
        let events = vec![
            CellularEvent {
                time: 0.0,
                kind: EventKind::Detach { network: None },
            },
            CellularEvent {
                time: 2.0,
                kind: EventKind::Paging { cell: CellId::from("c1"), has_downlink: false },
            },
        ];
        let mut buf = Vec::new();
        write_event_log(&events, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
    }
}
