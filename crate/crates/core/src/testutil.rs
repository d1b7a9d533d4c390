//! Shared scenario fixtures for unit tests.

use std::collections::BTreeMap;

use crate::model::*;

pub fn sib(paging_cycle: f64, on_duration: f64) -> SibConfig {
    SibConfig {
        barred: false,
        paging_cycle,
        on_duration,
        reselection_priority: 4,
        reselection_threshold: -120.0,
        voice_over_ps: true,
    }
}

pub fn cell(id: &str, network: &str, band: &str, scan_time: f64, attach_time: f64) -> Cell {
    Cell {
        cell_id: CellId::from(id),
        network: NetworkId::from(network),
        band: band.to_string(),
        scan_time,
        attach_time,
        sib: sib(1.0, 0.1),
    }
}

pub fn flat_perf() -> NetworkPerf {
    NetworkPerf {
        latency: vec![(-140.0, 500.0), (-70.0, 30.0)],
        throughput: vec![(-140.0, 0.1), (-70.0, 40.0)],
        class_factor: ClassFactors::default(),
    }
}

/// Two carriers, one 4G network each, one cell per network, flat traces.
pub fn two_carrier_scenario() -> Scenario {
    let networks = vec![
        CarrierNetwork {
            network_id: NetworkId::from("T-4G"),
            plmn: "T".to_string(),
            rat: Rat::Rat4g,
            cells: vec![CellId::from("t4-a")],
            qos: QosConfig {
                traffic_class: TrafficClass::Interactive,
                delay_class: 1,
                max_dl_rate: 256.0,
                max_ul_rate: 44.0,
                dl_gbr: 0.0,
                ul_gbr: 0.0,
            },
            tdd_config: None,
        },
        CarrierNetwork {
            network_id: NetworkId::from("S-4G"),
            plmn: "S".to_string(),
            rat: Rat::Rat4g,
            cells: vec![CellId::from("s4-a")],
            qos: QosConfig::default(),
            tdd_config: Some("Type1".to_string()),
        },
    ];
    let cells = vec![cell("t4-a", "T-4G", "b4", 0.4, 2.6), cell("s4-a", "S-4G", "b25", 0.4, 2.6)];
    let mut trace = BTreeMap::new();
    trace.insert(CellId::from("t4-a"), vec![(0.0, -90.0), (60.0, -95.0)]);
    trace.insert(CellId::from("s4-a"), vec![(0.0, -100.0), (60.0, -92.0)]);
    let mut performance = BTreeMap::new();
    performance.insert(NetworkId::from("T-4G"), flat_perf());
    performance.insert(NetworkId::from("S-4G"), flat_perf());
    Scenario {
        seed: 7,
        platform_overhead: 0.0,
        service_floor: -140.0,
        duration: Some(60.0),
        networks,
        cells,
        trace: RadioTrace { cells: trace },
        workload: vec![],
        performance: PerformanceModel { networks: performance },
        baseline: BaselineConfig {
            plmn_priority_list: vec![NetworkId::from("T-4G"), NetworkId::from("S-4G")],
        },
        device: DeviceConfig {
            initial_registration: "T-4G".to_string(),
            ..DeviceConfig::default()
        },
        billing: BTreeMap::new(),
    }
}
