//! Both switch executors: the legacy network-controlled PLMN selection
//! baseline (exhaustive scan, preference order, hard switch) and the
//! direct inter-carrier switch whose disruption is the target's scan cost
//! plus the attach time.

use serde::{Deserialize, Serialize};

use crate::event::{CellularEvent, EventKind};
use crate::model::{CellId, NetworkId};
use crate::scan::{contiguous_pieces, ScanExecution, ScanProgress, ScanResult};
use crate::sim::{BlockCause, DeviceState, SimEventKind, SimError, Simulation};

/// How a switch was executed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwitchKind {
    #[serde(rename = "BASELINE")]
    Baseline,
    #[serde(rename = "DIRECT")]
    Direct,
    #[serde(rename = "INTRA_RAT")]
    IntraRat,
}

/// One completed switch, as exported in the switch log. `attach_cost`
/// excludes the platform overhead, which is recoverable as
/// `t_end - t_start - scan_cost - attach_cost`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchRecord {
    pub t_start: f64,
    pub t_end: f64,
    pub from_network: Option<NetworkId>,
    pub to_network: Option<NetworkId>,
    pub kind: SwitchKind,
    pub n_t: usize,
    pub scan_cost: f64,
    pub attach_cost: f64,
}

impl SwitchRecord {
    pub fn disruption(&self) -> f64 {
        self.t_end - self.t_start
    }
}

/// Timing decomposition of a planned switch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwitchTiming {
    /// Cell count of the target network.
    pub n_t: usize,
    /// Total scan seconds paid before attaching.
    pub scan_cost: f64,
    pub attach_time: f64,
    pub platform_overhead: f64,
}

impl SwitchTiming {
    /// The 3G/4G lower bound: detach is free, so the minimum is the attach.
    pub fn t_switch_min(&self) -> f64 {
        self.attach_time
    }

    pub fn t_switch(&self) -> f64 {
        self.scan_cost + self.attach_time + self.platform_overhead
    }
}

/// Home-carrier preference order over networks; the adaptive monitor may
/// reorder it to scan user-requested carriers first.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlmnPriorityList {
    pub order: Vec<NetworkId>,
}

impl PlmnPriorityList {
    pub fn new(order: Vec<NetworkId>) -> Self {
        PlmnPriorityList { order }
    }

    /// Move the given networks to the front, keeping their given order.
    pub fn promote(&mut self, front: &[NetworkId]) {
        let mut rest: Vec<NetworkId> =
            self.order.iter().filter(|n| !front.contains(n)).cloned().collect();
        let mut order: Vec<NetworkId> =
            front.iter().filter(|n| self.order.contains(n)).cloned().collect();
        order.append(&mut rest);
        self.order = order;
    }
}

/// Baseline trigger: PLMN selection starts only once the serving network
/// has failed, never while in service.
pub fn baseline_trigger(_device: &DeviceState, event: &CellularEvent) -> bool {
    matches!(event.kind, EventKind::OutOfService { .. })
}

/// Pick the highest-priority network with at least one available,
/// non-barred cell in the scan.
pub fn preference_select(scan: &ScanResult, prio: &PlmnPriorityList) -> Option<NetworkId> {
    for net_id in &prio.order {
        if let Some(net) = scan.network(net_id) {
            if net.any_available_unbarred() {
                return Some(net_id.clone());
            }
        }
    }
    None
}

/// Build the exhaustive scan plan over every network in priority order,
/// cells ordered by band then cell id.
pub fn exhaustive_plan(
    sim: &Simulation,
    prio: &PlmnPriorityList,
) -> (Vec<(NetworkId, Vec<CellId>)>, Vec<(CellId, f64)>) {
    let mut planned = Vec::new();
    let mut flat = Vec::new();
    for net_id in &prio.order {
        let mut cells = sim.scenario().cells_of(net_id);
        cells.sort_by(|a, b| a.band.cmp(&b.band).then_with(|| a.cell_id.cmp(&b.cell_id)));
        let ids: Vec<CellId> = cells.iter().map(|c| c.cell_id.clone()).collect();
        for c in &cells {
            flat.push((c.cell_id.clone(), c.scan_time));
        }
        planned.push((net_id.clone(), ids));
    }
    (planned, flat)
}

/// Errors raised when initiating a switch.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SwitchError {
    #[error("target {0} absent from the latest scan results")]
    TargetNotScanned(NetworkId),
    #[error("a switch is already in progress")]
    SwitchInProgress,
    #[error(transparent)]
    Attach(#[from] SimError),
}

enum DirectPhase {
    TargetScan,
    Attaching { cell: CellId, will_fail: bool },
}

/// In-flight direct inter-carrier switch.
pub struct DirectSwitch {
    pub id: u64,
    t_start: f64,
    from: Option<NetworkId>,
    target: NetworkId,
    timing: SwitchTiming,
    phase: DirectPhase,
    pub done: bool,
    /// Set when the switch ended without a successful attach.
    pub failed: bool,
}

impl DirectSwitch {
    /// Begin a direct switch to `target`. Rejected before any disruption
    /// when the target is absent from the latest scan result.
    pub fn begin(
        sim: &mut Simulation,
        target: NetworkId,
        latest_scan: &ScanResult,
    ) -> Result<(DirectSwitch, SwitchTiming), SwitchError> {
        if !latest_scan.contains_network(&target) {
            return Err(SwitchError::TargetNotScanned(target));
        }
        let cells = sim.scenario().cells_of(&target);
        let n_t = cells.len();
        let scan_cost: f64 = cells.iter().map(|c| c.scan_time).sum();
        let timing = SwitchTiming {
            n_t,
            scan_cost,
            attach_time: 0.0, // fixed once the attach cell is chosen
            platform_overhead: sim.scenario().platform_overhead,
        };
        let id = sim.next_id();
        let t_start = sim.now();
        let from = sim.device.registered.clone();
        sim.detach(true);
        sim.set_off_frequency(true);
        // The switch rides on PLMN selection, so the target scan remains.
        sim.schedule(t_start + scan_cost, SimEventKind::SwitchStep { id, phase: 0 })
            .expect("future event");
        let switch = DirectSwitch {
            id,
            t_start,
            from,
            target,
            timing,
            phase: DirectPhase::TargetScan,
            done: false,
            failed: false,
        };
        let timing = switch.timing;
        Ok((switch, timing))
    }

    /// Handle a SwitchStep event addressed to this switch. Returns the
    /// completed record once the switch finishes.
    pub fn on_event(&mut self, sim: &mut Simulation, kind: &SimEventKind) -> Option<SwitchRecord> {
        let SimEventKind::SwitchStep { id, .. } = kind else { return None };
        if *id != self.id || self.done {
            return None;
        }
        match &self.phase {
            DirectPhase::TargetScan => {
                let now = sim.now();
                let best = sim.best_attach_cell(&self.target, now);
                let Some(cell) = best else {
                    return Some(self.finish(sim, None, 0.0));
                };
                match sim.attach_duration(&cell) {
                    Ok(duration) => {
                        let will_fail = sim.attach_fails();
                        sim.schedule(now + duration, SimEventKind::SwitchStep { id: self.id, phase: 1 })
                            .expect("future event");
                        self.phase = DirectPhase::Attaching { cell, will_fail };
                        None
                    }
                    Err(_) => Some(self.finish(sim, None, 0.0)),
                }
            }
            DirectPhase::Attaching { cell, will_fail } => {
                let cell = cell.clone();
                let attach_time =
                    sim.scenario().cell(&cell).map(|c| c.attach_time).unwrap_or(0.0);
                if *will_fail {
                    return Some(self.finish(sim, None, attach_time));
                }
                sim.set_off_frequency(false);
                sim.complete_attach(cell);
                Some(self.finish(sim, Some(self.target.clone()), attach_time))
            }
        }
    }

    fn finish(&mut self, sim: &mut Simulation, to: Option<NetworkId>, attach_cost: f64) -> SwitchRecord {
        self.done = true;
        self.failed = to.is_none();
        if self.failed {
            sim.set_off_frequency(false);
        }
        let t_end = sim.now();
        sim.push_blocked(self.t_start, t_end, BlockCause::Switch);
        let record = SwitchRecord {
            t_start: self.t_start,
            t_end,
            from_network: self.from.clone(),
            to_network: to,
            kind: SwitchKind::Direct,
            n_t: self.timing.n_t,
            scan_cost: self.timing.scan_cost,
            attach_cost,
        };
        sim.record_switch(record.clone());
        record
    }
}

enum BaselineState {
    Idle,
    Scanning(ScanExecution),
    Attaching {
        switch_id: u64,
        scan: ScanResult,
        tried: Vec<NetworkId>,
        target: NetworkId,
        cell: CellId,
        will_fail: bool,
    },
}

/// The legacy network-controlled selector: out-of-service triggers an
/// exhaustive scan of every carrier, then preference-ordered attach.
pub struct BaselineSelector {
    prio: PlmnPriorityList,
    state: BaselineState,
    t_start: f64,
    from: Option<NetworkId>,
    scan_busy_total: f64,
    cells_scanned_total: usize,
}

impl BaselineSelector {
    pub fn new(prio: PlmnPriorityList) -> Self {
        BaselineSelector {
            prio,
            state: BaselineState::Idle,
            t_start: 0.0,
            from: None,
            scan_busy_total: 0.0,
            cells_scanned_total: 0,
        }
    }

    pub fn selecting(&self) -> bool {
        !matches!(self.state, BaselineState::Idle)
    }

    pub fn scan_busy_total(&self) -> f64 {
        self.scan_busy_total
    }

    pub fn cells_scanned_total(&self) -> usize {
        self.cells_scanned_total
    }

    /// Start PLMN selection (on an out-of-service trigger).
    pub fn trigger(&mut self, sim: &mut Simulation, from: Option<NetworkId>) {
        if self.selecting() {
            return;
        }
        self.t_start = sim.now();
        self.from = from;
        self.start_scan(sim);
    }

    fn start_scan(&mut self, sim: &mut Simulation) {
        let (planned, flat) = exhaustive_plan(sim, &self.prio);
        self.cells_scanned_total += flat.len();
        let pieces = contiguous_pieces(&flat, sim.now());
        let exec = ScanExecution::new(sim, planned, pieces, false);
        self.state = BaselineState::Scanning(exec);
    }

    fn try_next_candidate(
        &mut self,
        sim: &mut Simulation,
        scan: ScanResult,
        mut tried: Vec<NetworkId>,
    ) {
        let remaining = PlmnPriorityList::new(
            self.prio.order.iter().filter(|n| !tried.contains(n)).cloned().collect(),
        );
        let Some(target) = preference_select(&scan, &remaining) else {
            // Nothing usable: keep searching until something comes back.
            self.start_scan(sim);
            return;
        };
        tried.push(target.clone());
        let now = sim.now();
        match sim.best_attach_cell(&target, now) {
            Some(cell) => match sim.attach_duration(&cell) {
                Ok(duration) => {
                    let will_fail = sim.attach_fails();
                    let switch_id = sim.next_id();
                    sim.schedule(now + duration, SimEventKind::SwitchStep { id: switch_id, phase: 1 })
                        .expect("future event");
                    self.state = BaselineState::Attaching {
                        switch_id,
                        scan,
                        tried,
                        target,
                        cell,
                        will_fail,
                    };
                }
                Err(_) => self.try_next_candidate(sim, scan, tried),
            },
            None => self.try_next_candidate(sim, scan, tried),
        }
    }

    /// Feed one simulation event; returns the switch record on completion.
    pub fn on_event(&mut self, sim: &mut Simulation, kind: &SimEventKind) -> Option<SwitchRecord> {
        match &mut self.state {
            BaselineState::Idle => None,
            BaselineState::Scanning(exec) => {
                let progress = exec.on_event(sim, kind)?;
                if let ScanProgress::JobComplete(_) = progress {
                    self.scan_busy_total += exec.executed_busy();
                    let scan = exec.result(sim);
                    self.state = BaselineState::Idle;
                    self.try_next_candidate(sim, scan, Vec::new());
                }
                None
            }
            BaselineState::Attaching { switch_id, scan, tried, target, cell, will_fail } => {
                let SimEventKind::SwitchStep { id, .. } = kind else { return None };
                if id != switch_id {
                    return None;
                }
                let target = target.clone();
                let cell = cell.clone();
                let failed = *will_fail;
                let scan = scan.clone();
                let tried = tried.clone();
                self.state = BaselineState::Idle;
                if failed {
                    // Attach failed: disruption continues with the next
                    // preference candidate, reusing the same scan pass.
                    self.try_next_candidate(sim, scan, tried);
                    return None;
                }
                let attach_cost =
                    sim.scenario().cell(&cell).map(|c| c.attach_time).unwrap_or(0.0);
                sim.complete_attach(cell);
                let t_end = sim.now();
                sim.push_blocked(self.t_start, t_end, BlockCause::Switch);
                let record = SwitchRecord {
                    t_start: self.t_start,
                    t_end,
                    from_network: self.from.clone(),
                    to_network: Some(target),
                    kind: SwitchKind::Baseline,
                    n_t: self.cells_scanned_total,
                    scan_cost: self.scan_busy_total,
                    attach_cost,
                };
                sim.record_switch(record.clone());
                self.scan_busy_total = 0.0;
                self.cells_scanned_total = 0;
                Some(record)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NetworkId;
    use crate::scan::{ScanEntry, ScannedNetwork};
    use crate::testutil::sib;

    fn entry(id: &str, rss: Option<f64>, barred: bool) -> ScanEntry {
        let mut s = sib(1.0, 0.1);
        s.barred = barred;
        ScanEntry {
            cell_id: crate::model::CellId::from(id),
            rss,
            sib: rss.map(|_| s),
            completed_at: 0.0,
        }
    }

    fn scanned(net: &str, cells: Vec<ScanEntry>) -> ScannedNetwork {
        ScannedNetwork {
            network_id: NetworkId::from(net),
            plmn: net.split('-').next().unwrap_or(net).to_string(),
            rat: crate::model::Rat::Rat4g,
            cells,
        }
    }

    #[test]
    fn preference_select_takes_head_of_list() {
        let scan = ScanResult {
            networks: vec![
                scanned("T-4G", vec![entry("t1", Some(-90.0), false)]),
                scanned("S-4G", vec![entry("s1", Some(-85.0), false)]),
            ],
            partial: false,
            started_at: 0.0,
            elapsed: 0.8,
        };
        let prio =
            PlmnPriorityList::new(vec![NetworkId::from("T-4G"), NetworkId::from("S-4G")]);
        assert_eq!(preference_select(&scan, &prio), Some(NetworkId::from("T-4G")));
    }

    #[test]
    fn preference_select_skips_unavailable_head() {
        let scan = ScanResult {
            networks: vec![
                scanned("T-4G", vec![entry("t1", None, false)]),
                scanned("S-4G", vec![entry("s1", Some(-85.0), false)]),
            ],
            partial: false,
            started_at: 0.0,
            elapsed: 0.8,
        };
        let prio =
            PlmnPriorityList::new(vec![NetworkId::from("T-4G"), NetworkId::from("S-4G")]);
        assert_eq!(preference_select(&scan, &prio), Some(NetworkId::from("S-4G")));
    }

    #[test]
    fn preference_select_none_when_nothing_available() {
        let scan = ScanResult {
            networks: vec![scanned("T-4G", vec![entry("t1", Some(-90.0), true)])],
            partial: false,
            started_at: 0.0,
            elapsed: 0.4,
        };
        let prio = PlmnPriorityList::new(vec![NetworkId::from("T-4G")]);
        assert_eq!(preference_select(&scan, &prio), None);
    }

    #[test]
    fn priority_list_promote_moves_to_front() {
        let mut prio = PlmnPriorityList::new(vec![
            NetworkId::from("A"),
            NetworkId::from("B"),
            NetworkId::from("C"),
        ]);
        prio.promote(&[NetworkId::from("C"), NetworkId::from("B")]);
        assert_eq!(
            prio.order,
            vec![NetworkId::from("C"), NetworkId::from("B"), NetworkId::from("A")]
        );
    }

    #[test]
    fn baseline_trigger_fires_only_out_of_service() {
        let device = DeviceState {
            registered: Some(NetworkId::from("T-4G")),
            serving_cell: Some(crate::model::CellId::from("t4-a")),
            rrc_mode: crate::sim::RrcMode::Sleep,
            active_uplink: false,
            clock: 10.0,
        };
        let weak = CellularEvent {
            time: 10.0,
            kind: EventKind::RadioMeas {
                cell: crate::model::CellId::from("t4-a"),
                network: NetworkId::from("T-4G"),
                rss_dbm: -130.0,
            },
        };
        assert!(!baseline_trigger(&device, &weak));
        let oos = CellularEvent {
            time: 10.0,
            kind: EventKind::OutOfService {
                network: NetworkId::from("T-4G"),
                cell: crate::model::CellId::from("t4-a"),
            },
        };
        assert!(baseline_trigger(&device, &oos));
    }
}
