//! Active monitoring of user-specified networks while registered: scans are
//! restricted to the requested carriers, packed into DRX sleep windows away
//! from traffic activity, and results are delivered network-by-network so a
//! strategy can decide on partial data.

use serde::{Deserialize, Serialize};

use crate::model::{CellId, NetworkId, Scenario, SibConfig};
use crate::scan::{contiguous_pieces, ScanExecution, ScanPiece, ScanProgress, ScanResult};
use crate::sim::{paging_schedule, SimEventKind, Simulation};

/// What the user asked `Monitor()` to watch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorRequest {
    pub requested_networks: Vec<NetworkId>,
    pub disruption_avoidance: bool,
}

impl MonitorRequest {
    pub fn new(networks: Vec<NetworkId>) -> Self {
        MonitorRequest { requested_networks: networks, disruption_avoidance: true }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum MonitorError {
    #[error("requested network {0} does not exist")]
    UnknownNetwork(NetworkId),
    #[error("monitor request names no networks")]
    EmptyRequest,
    #[error("no sleep window available; scan deferred")]
    NoSleepWindow,
    #[error("monitor() re-entered from a decision callback")]
    ReentrantMonitor,
}

/// Ordered cells to scan, before slot assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanSkeleton {
    /// Requested networks in request order with their cells (band order,
    /// then cell id).
    pub planned: Vec<(NetworkId, Vec<CellId>)>,
}

impl PlanSkeleton {
    pub fn cell_count(&self) -> usize {
        self.planned.iter().map(|(_, c)| c.len()).sum()
    }
}

/// Restrict the search to exactly the requested networks' cells, in request
/// order then band order. The scan terminates once these are covered.
pub fn minimal_search_filter(
    request: &MonitorRequest,
    scenario: &Scenario,
) -> Result<PlanSkeleton, MonitorError> {
    if request.requested_networks.is_empty() {
        return Err(MonitorError::EmptyRequest);
    }
    let mut planned = Vec::new();
    for net_id in &request.requested_networks {
        if scenario.network(net_id).is_none() {
            return Err(MonitorError::UnknownNetwork(net_id.clone()));
        }
        let mut cells = scenario.cells_of(net_id);
        cells.sort_by(|a, b| a.band.cmp(&b.band).then_with(|| a.cell_id.cmp(&b.cell_id)));
        planned.push((net_id.clone(), cells.iter().map(|c| c.cell_id.clone()).collect()));
    }
    Ok(PlanSkeleton { planned })
}

const PACK_EPS: f64 = 1e-12;

/// Pack each cell's scan time greedily into sleep windows that carry no
/// traffic activity, splitting a cell across consecutive windows when it
/// exceeds one. A cell interrupted at a window boundary resumes with its
/// remaining time.
///
/// With `sib` absent (device unregistered) or avoidance disabled, scanning
/// runs back-to-back from `from_t` instead.
pub fn schedule_scan_slots(
    cells: &[(CellId, f64)],
    sib: Option<&SibConfig>,
    busy: &[(f64, f64)],
    from_t: f64,
    horizon: f64,
) -> Result<Vec<ScanPiece>, MonitorError> {
    let Some(sib) = sib else {
        return Ok(contiguous_pieces(cells, from_t));
    };
    let next_free = |mut t: f64| -> Option<(f64, f64)> {
        loop {
            if t >= horizon {
                return None;
            }
            let (ws, we) = paging_schedule(sib, t);
            if ws >= horizon {
                return None;
            }
            let we = we.min(horizon);
            match busy.iter().find(|&&(bs, be)| bs < we && be > ws) {
                Some(&(bs, be)) => {
                    if bs <= ws {
                        t = be;
                    } else {
                        return Some((ws, bs.min(we)));
                    }
                }
                None => return Some((ws, we)),
            }
        }
    };

    let mut pieces = Vec::new();
    let mut cursor = from_t;
    for (cell, scan_time) in cells {
        let mut remaining = *scan_time;
        while remaining > PACK_EPS {
            let Some((ws, we)) = next_free(cursor) else {
                // Horizon exhausted: deliver what was packed (a partial
                // plan), unless nothing fit at all.
                if pieces.is_empty() {
                    return Err(MonitorError::NoSleepWindow);
                }
                return Ok(pieces);
            };
            let take = remaining.min(we - ws);
            let completes = take >= remaining - PACK_EPS;
            pieces.push(ScanPiece {
                cell: cell.clone(),
                start: ws,
                end: ws + take,
                completes_cell: completes,
            });
            cursor = ws + take;
            remaining = if completes { 0.0 } else { remaining - take };
        }
    }
    if pieces.is_empty() {
        return Err(MonitorError::NoSleepWindow);
    }
    Ok(pieces)
}

/// A partial or final result delivery to the decision layer.
#[derive(Clone, Debug)]
pub struct MonitorUpdate {
    pub scan: ScanResult,
    pub is_final: bool,
}

/// One executing monitoring pass.
pub struct MonitorSession {
    pub request: MonitorRequest,
    exec: ScanExecution,
}

impl MonitorSession {
    /// Plan and start a monitoring pass at the current clock.
    pub fn start(sim: &mut Simulation, request: MonitorRequest) -> Result<Self, MonitorError> {
        let skeleton = minimal_search_filter(&request, sim.scenario())?;
        let with_times: Vec<(CellId, f64)> = skeleton
            .planned
            .iter()
            .flat_map(|(_, cells)| cells.iter())
            .map(|c| {
                let t = sim.scenario().cell(c).map(|c| c.scan_time).unwrap_or(0.0);
                (c.clone(), t)
            })
            .collect();
        let sib = if request.disruption_avoidance {
            sim.device
                .serving_cell
                .as_ref()
                .and_then(|c| sim.scenario().cell(c))
                .map(|c| c.sib.clone())
        } else {
            None
        };
        let busy = if request.disruption_avoidance {
            sim.nominal_busy_intervals(sim.now(), sim.horizon())
        } else {
            Vec::new()
        };
        let pieces =
            schedule_scan_slots(&with_times, sib.as_ref(), &busy, sim.now(), sim.horizon())?;
        let exec = ScanExecution::new(sim, skeleton.planned, pieces, true);
        Ok(MonitorSession { request, exec })
    }

    pub fn is_finished(&self) -> bool {
        self.exec.is_finished()
    }

    pub fn executed_busy(&self) -> f64 {
        self.exec.executed_busy()
    }

    pub fn cells_scanned(&self, sim: &Simulation) -> usize {
        self.exec.result(sim).cells_scanned()
    }

    pub fn slots_per_cell(&self) -> Vec<(CellId, Vec<(f64, f64)>)> {
        self.exec.slots_per_cell()
    }

    pub fn result(&self, sim: &Simulation) -> ScanResult {
        self.exec.result(sim)
    }

    /// Abandon remaining scanning (a switch committed, or the serving
    /// registration changed under us).
    pub fn cancel(&mut self, sim: &mut Simulation) {
        self.exec.cancel(sim);
    }

    /// Feed one simulation event. Returns result deliveries due now: one
    /// per completed network, plus a final complete delivery.
    pub fn on_event(&mut self, sim: &mut Simulation, kind: &SimEventKind) -> Vec<MonitorUpdate> {
        let Some(progress) = self.exec.on_event(sim, kind) else { return Vec::new() };
        match progress {
            ScanProgress::Piece => {
                if self.exec.is_finished() {
                    // Plan ended without completing a network (partial pack).
                    vec![MonitorUpdate { scan: self.exec.result(sim), is_final: true }]
                } else {
                    Vec::new()
                }
            }
            ScanProgress::NetworkComplete(_) => {
                vec![MonitorUpdate { scan: self.exec.result(sim), is_final: false }]
            }
            ScanProgress::JobComplete(_) => {
                let scan = self.exec.result(sim);
                vec![
                    MonitorUpdate { scan: scan.clone(), is_final: false },
                    MonitorUpdate { scan, is_final: true },
                ]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{sib, two_carrier_scenario};

    #[test]
    fn minimal_search_covers_only_requested() {
        let scenario = two_carrier_scenario();
        let request = MonitorRequest::new(vec![NetworkId::from("S-4G")]);
        let plan = minimal_search_filter(&request, &scenario).unwrap();
        assert_eq!(plan.planned.len(), 1);
        assert_eq!(plan.planned[0].1, vec![CellId::from("s4-a")]);
    }

    #[test]
    fn minimal_search_unknown_network_errors() {
        let scenario = two_carrier_scenario();
        let request = MonitorRequest::new(vec![NetworkId::from("ghost")]);
        assert!(matches!(
            minimal_search_filter(&request, &scenario),
            Err(MonitorError::UnknownNetwork(_))
        ));
    }

    #[test]
    fn slot_fits_single_sleep_window() {
        let s = sib(1.0, 0.1);
        let cells = vec![(CellId::from("c1"), 0.7)];
        let pieces = schedule_scan_slots(&cells, Some(&s), &[], 0.0, 100.0).unwrap();
        assert_eq!(pieces.len(), 1);
        assert_eq!(pieces[0].start, 0.1);
        assert!((pieces[0].end - 0.8).abs() < 1e-12);
        assert!(pieces[0].completes_cell);
    }

    #[test]
    fn long_scan_splits_across_cycles() {
        let s = sib(1.0, 0.1);
        let cells = vec![(CellId::from("c1"), 1.5)];
        let pieces = schedule_scan_slots(&cells, Some(&s), &[], 0.0, 100.0).unwrap();
        assert_eq!(pieces.len(), 2);
        assert!((pieces[0].end - pieces[0].start - 0.9).abs() < 1e-12);
        assert!(!pieces[0].completes_cell);
        assert!((pieces[1].end - pieces[1].start - 0.6).abs() < 1e-12);
        assert!(pieces[1].completes_cell);
        assert_eq!(pieces[1].start, 1.1);
    }

    #[test]
    fn continuous_uplink_yields_no_sleep_window() {
        let s = sib(1.0, 0.1);
        let cells = vec![(CellId::from("c1"), 0.5)];
        let err =
            schedule_scan_slots(&cells, Some(&s), &[(0.0, 50.0)], 0.0, 50.0).unwrap_err();
        assert_eq!(err, MonitorError::NoSleepWindow);
    }

    #[test]
    fn slots_avoid_busy_intervals() {
        let s = sib(1.0, 0.1);
        let cells = vec![(CellId::from("c1"), 0.5)];
        // Busy through the first sleep window; must land in the second.
        let pieces =
            schedule_scan_slots(&cells, Some(&s), &[(0.0, 1.0)], 0.0, 100.0).unwrap();
        assert_eq!(pieces[0].start, 1.1);
    }
}
