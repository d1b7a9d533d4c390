//! Scan results and the shared piece-by-piece scan executor used by both
//! the adaptive monitor and the baseline exhaustive search.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::event::EventKind;
use crate::model::{CellId, NetworkId, Rat, SibConfig};
use crate::sim::{BlockCause, SimEventKind, Simulation};

/// Outcome of scanning one cell. An unavailable cell (below the service
/// floor) still consumes its scan time but yields no RSS or SIB snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub cell_id: CellId,
    pub rss: Option<f64>,
    pub sib: Option<SibConfig>,
    pub completed_at: f64,
}

impl ScanEntry {
    pub fn available(&self) -> bool {
        self.rss.is_some()
    }
}

/// All entries observed for one network during a scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScannedNetwork {
    pub network_id: NetworkId,
    pub plmn: String,
    pub rat: Rat,
    pub cells: Vec<ScanEntry>,
}

impl ScannedNetwork {
    /// Strongest available cell RSS, if any cell was available.
    pub fn strongest_rss(&self) -> Option<f64> {
        self.cells
            .iter()
            .filter_map(|c| c.rss)
            .max_by(|a, b| a.total_cmp(b))
    }

    pub fn any_available_unbarred(&self) -> bool {
        self.cells
            .iter()
            .any(|c| c.available() && c.sib.as_ref().map(|s| !s.barred).unwrap_or(false))
    }
}

/// Possibly-partial outcome of a monitoring or selection scan.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub networks: Vec<ScannedNetwork>,
    /// True iff some requested network still has unscanned cells.
    pub partial: bool,
    pub started_at: f64,
    /// Busy scanning time consumed so far, in seconds.
    pub elapsed: f64,
}

impl ScanResult {
    pub fn network(&self, id: &NetworkId) -> Option<&ScannedNetwork> {
        self.networks.iter().find(|n| &n.network_id == id)
    }

    pub fn contains_network(&self, id: &NetworkId) -> bool {
        self.network(id).is_some()
    }

    pub fn cells_scanned(&self) -> usize {
        self.networks.iter().map(|n| n.cells.len()).sum()
    }
}

/// One contiguous stretch of radio time spent on a cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanPiece {
    pub cell: CellId,
    pub start: f64,
    pub end: f64,
    /// Whether this piece finishes the cell's scan.
    pub completes_cell: bool,
}

/// Drives a planned sequence of scan pieces through the simulation,
/// measuring each cell when its last piece completes.
#[derive(Debug)]
pub struct ScanExecution {
    pub job_id: u64,
    /// Network scan order; a network is complete once all its planned
    /// cells have been measured.
    network_order: Vec<NetworkId>,
    pieces: Vec<ScanPiece>,
    /// Cells planned per network (in plan order).
    planned: Vec<(NetworkId, Vec<CellId>)>,
    entries: Vec<(NetworkId, Vec<ScanEntry>)>,
    completed_cells: BTreeSet<CellId>,
    in_flight: Option<usize>,
    executed_busy: f64,
    started_at: f64,
    cancelled: bool,
    finished: bool,
    /// Record per-piece blocked intervals (off for the baseline scan,
    /// whose whole disruption is logged as one switch interval).
    record_block: bool,
}

/// What a processed piece meant for the overall job.
#[derive(Clone, Debug, PartialEq)]
pub enum ScanProgress {
    /// Piece executed; nothing newly complete.
    Piece,
    /// A network's last planned cell completed.
    NetworkComplete(NetworkId),
    /// The whole plan completed (the final network's id included).
    JobComplete(NetworkId),
}

impl ScanExecution {
    pub fn new(
        sim: &mut Simulation,
        planned: Vec<(NetworkId, Vec<CellId>)>,
        pieces: Vec<ScanPiece>,
        record_block: bool,
    ) -> Self {
        let job_id = sim.next_id();
        let started_at = sim.now();
        let network_order = planned.iter().map(|(n, _)| n.clone()).collect();
        let exec = ScanExecution {
            job_id,
            network_order,
            pieces,
            planned,
            entries: Vec::new(),
            completed_cells: BTreeSet::new(),
            in_flight: None,
            executed_busy: 0.0,
            started_at,
            cancelled: false,
            finished: false,
            record_block,
        };
        for (i, piece) in exec.pieces.iter().enumerate() {
            let _ = sim.schedule(piece.start, SimEventKind::ScanPieceStart { job: exec.job_id, piece: i });
            let _ = sim.schedule(piece.end, SimEventKind::ScanPieceEnd { job: exec.job_id, piece: i });
        }
        exec
    }

    pub fn is_finished(&self) -> bool {
        self.finished || self.cancelled
    }

    pub fn started_at(&self) -> f64 {
        self.started_at
    }

    pub fn executed_busy(&self) -> f64 {
        self.executed_busy
    }

    /// Handle a ScanPieceStart/ScanPieceEnd event addressed to this job.
    pub fn on_event(&mut self, sim: &mut Simulation, kind: &SimEventKind) -> Option<ScanProgress> {
        if self.cancelled || self.finished {
            return None;
        }
        match kind {
            SimEventKind::ScanPieceStart { job, piece } if *job == self.job_id => {
                self.in_flight = Some(*piece);
                sim.set_off_frequency(true);
                None
            }
            SimEventKind::ScanPieceEnd { job, piece } if *job == self.job_id => {
                let p = self.pieces[*piece].clone();
                self.in_flight = None;
                self.executed_busy += p.end - p.start;
                if self.record_block {
                    sim.push_blocked(p.start, p.end, BlockCause::Scan);
                }
                sim.set_off_frequency(false);
                if !p.completes_cell {
                    return Some(ScanProgress::Piece);
                }
                self.completed_cells.insert(p.cell.clone());
                self.measure(sim, &p.cell);
                // Did this finish a network?
                let done_net = self
                    .planned
                    .iter()
                    .find(|(net, cells)| {
                        cells.last() == Some(&p.cell)
                            && cells.iter().all(|c| self.completed_cells.contains(c))
                            && self.entries.iter().any(|(n, _)| n == net)
                    })
                    .map(|(net, _)| net.clone());
                let finished_now = *piece + 1 == self.pieces.len();
                if finished_now {
                    self.finished = true;
                }
                match done_net {
                    Some(net) if finished_now => Some(ScanProgress::JobComplete(net)),
                    Some(net) => Some(ScanProgress::NetworkComplete(net)),
                    None => Some(ScanProgress::Piece),
                }
            }
            _ => None,
        }
    }

    fn measure(&mut self, sim: &mut Simulation, cell_id: &CellId) {
        let Some(cell) = sim.scenario().cell(cell_id).cloned() else { return };
        let rss = sim.rss_now(cell_id);
        let floor = sim.scenario().service_floor;
        let available = rss.map(|r| r >= floor).unwrap_or(false);
        let now = sim.now();
        if let Some(r) = rss {
            sim.emit(EventKind::RadioMeas {
                cell: cell_id.clone(),
                network: cell.network.clone(),
                rss_dbm: r,
            });
        }
        if available {
            let plmn = sim
                .scenario()
                .network(&cell.network)
                .map(|n| n.plmn.clone())
                .unwrap_or_default();
            sim.emit(EventKind::RrcSib1 {
                cell: cell_id.clone(),
                network: cell.network.clone(),
                plmn,
                barred: cell.sib.barred,
            });
        }
        let entry = ScanEntry {
            cell_id: cell_id.clone(),
            rss: if available { rss } else { None },
            sib: if available { Some(cell.sib.clone()) } else { None },
            completed_at: now,
        };
        let slot = self.entries.iter_mut().find(|(n, _)| *n == cell.network);
        match slot {
            Some((_, cells)) => cells.push(entry),
            None => self.entries.push((cell.network.clone(), vec![entry])),
        }
    }

    /// Abandon remaining pieces; truncates any in-flight piece at `now`.
    pub fn cancel(&mut self, sim: &mut Simulation) {
        if self.cancelled || self.finished {
            return;
        }
        self.cancelled = true;
        if let Some(i) = self.in_flight.take() {
            let p = &self.pieces[i];
            let now = sim.now();
            if now > p.start {
                self.executed_busy += now - p.start;
                if self.record_block {
                    sim.push_blocked(p.start, now, BlockCause::Scan);
                }
            }
            sim.set_off_frequency(false);
        }
    }

    /// Assemble the scan result observed so far.
    pub fn result(&self, sim: &Simulation) -> ScanResult {
        let mut networks = Vec::new();
        for (net_id, cells) in &self.entries {
            let Some(net) = sim.scenario().network(net_id) else { continue };
            networks.push(ScannedNetwork {
                network_id: net_id.clone(),
                plmn: net.plmn.clone(),
                rat: net.rat,
                cells: cells.clone(),
            });
        }
        let partial = self
            .planned
            .iter()
            .any(|(_, cells)| cells.iter().any(|c| !self.completed_cells.contains(c)));
        ScanResult {
            networks,
            partial,
            started_at: self.started_at,
            elapsed: self.executed_busy,
        }
    }

    /// Pieces grouped per cell, for the monitoring log.
    pub fn slots_per_cell(&self) -> Vec<(CellId, Vec<(f64, f64)>)> {
        let mut out: Vec<(CellId, Vec<(f64, f64)>)> = Vec::new();
        for p in &self.pieces {
            match out.iter_mut().find(|(c, _)| *c == p.cell) {
                Some((_, slots)) => slots.push((p.start, p.end)),
                None => out.push((p.cell.clone(), vec![(p.start, p.end)])),
            }
        }
        out
    }
}

/// Build back-to-back pieces (one per cell) starting at `from_t`.
pub fn contiguous_pieces(
    cells: &[(CellId, f64)],
    from_t: f64,
) -> Vec<ScanPiece> {
    let mut pieces = Vec::with_capacity(cells.len());
    let mut t = from_t;
    for (cell, scan_time) in cells {
        pieces.push(ScanPiece {
            cell: cell.clone(),
            start: t,
            end: t + scan_time,
            completes_cell: true,
        });
        t += scan_time;
    }
    pieces
}
