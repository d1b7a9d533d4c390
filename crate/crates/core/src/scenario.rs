//! Scenario file ingestion: TOML parsing plus whole-scenario validation.
//!
//! A scenario file is a key/value tree with sections `networks[]`,
//! `cells[]`, `trace{}`, `workload[]`, `performance{}`, `baseline{}` and
//! `device{}`; field names match the domain types verbatim.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use crate::model::Scenario;

/// Machine-readable validation failure code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValidationCode {
    DuplicateId,
    DanglingReference,
    NonMonotoneTrace,
    EmptyNetwork,
    InvalidValue,
}

impl fmt::Display for ValidationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ValidationCode::DuplicateId => "DUPLICATE_ID",
            ValidationCode::DanglingReference => "DANGLING_REFERENCE",
            ValidationCode::NonMonotoneTrace => "NON_MONOTONE_TRACE",
            ValidationCode::EmptyNetwork => "EMPTY_NETWORK",
            ValidationCode::InvalidValue => "INVALID_VALUE",
        };
        f.write_str(s)
    }
}

/// One invariant violation, naming the offending entity.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{code} [{entity}]: {detail}")]
pub struct ValidationError {
    pub code: ValidationCode,
    pub entity: String,
    pub detail: String,
}

impl ValidationError {
    fn new(code: ValidationCode, entity: impl Into<String>, detail: impl Into<String>) -> Self {
        ValidationError { code, entity: entity.into(), detail: detail.into() }
    }
}

/// Failure loading a scenario from disk or from text.
#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("scenario invalid: {} violation(s), first: {}", .errors.len(), .errors[0])]
    Invalid { errors: Vec<ValidationError> },
}

/// Parse a scenario from TOML text without validating it.
pub fn parse_scenario(text: &str) -> Result<Scenario, toml::de::Error> {
    toml::from_str(text)
}

/// Parse and validate a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    let raw = parse_scenario(&text)?;
    validate_scenario(raw).map_err(|errors| ScenarioError::Invalid { errors })
}

/// Check every scenario invariant; returns the scenario unchanged when all
/// hold, otherwise the full list of violations.
pub fn validate_scenario(raw: Scenario) -> Result<Scenario, Vec<ValidationError>> {
    let mut errors = Vec::new();

    // Identifier uniqueness.
    let mut seen_networks = BTreeSet::new();
    for net in &raw.networks {
        if !seen_networks.insert(&net.network_id) {
            errors.push(ValidationError::new(
                ValidationCode::DuplicateId,
                net.network_id.to_string(),
                "network_id appears more than once",
            ));
        }
    }
    let mut seen_cells = BTreeSet::new();
    for cell in &raw.cells {
        if !seen_cells.insert(&cell.cell_id) {
            errors.push(ValidationError::new(
                ValidationCode::DuplicateId,
                cell.cell_id.to_string(),
                "cell_id appears more than once",
            ));
        }
    }

    let network_ids: BTreeSet<_> = raw.networks.iter().map(|n| &n.network_id).collect();
    let cell_ids: BTreeSet<_> = raw.cells.iter().map(|c| &c.cell_id).collect();

    // Network membership: non-empty, listed cells exist and point back.
    let mut owner: BTreeMap<&crate::model::CellId, &crate::model::NetworkId> = BTreeMap::new();
    for net in &raw.networks {
        if net.cells.is_empty() {
            errors.push(ValidationError::new(
                ValidationCode::EmptyNetwork,
                net.network_id.to_string(),
                "network lists no cells",
            ));
        }
        for cid in &net.cells {
            if !cell_ids.contains(cid) {
                errors.push(ValidationError::new(
                    ValidationCode::DanglingReference,
                    net.network_id.to_string(),
                    format!("lists unknown cell {cid}"),
                ));
            }
            if let Some(prev) = owner.insert(cid, &net.network_id) {
                errors.push(ValidationError::new(
                    ValidationCode::DanglingReference,
                    cid.to_string(),
                    format!("cell listed by both {prev} and {}", net.network_id),
                ));
            }
        }
    }
    for cell in &raw.cells {
        if !network_ids.contains(&cell.network) {
            errors.push(ValidationError::new(
                ValidationCode::DanglingReference,
                cell.cell_id.to_string(),
                format!("references unknown network {}", cell.network),
            ));
        } else if owner.get(&cell.cell_id).map(|n| *n != &cell.network).unwrap_or(true) {
            errors.push(ValidationError::new(
                ValidationCode::DanglingReference,
                cell.cell_id.to_string(),
                format!("not listed by its network {}", cell.network),
            ));
        }
        if !(cell.scan_time > 0.0) {
            errors.push(ValidationError::new(
                ValidationCode::InvalidValue,
                cell.cell_id.to_string(),
                "scan_time must be > 0",
            ));
        }
        if !(cell.attach_time >= 0.0) {
            errors.push(ValidationError::new(
                ValidationCode::InvalidValue,
                cell.cell_id.to_string(),
                "attach_time must be >= 0",
            ));
        }
        if !(cell.sib.paging_cycle > 0.0) {
            errors.push(ValidationError::new(
                ValidationCode::InvalidValue,
                cell.cell_id.to_string(),
                "paging_cycle must be > 0",
            ));
        }
        if !(cell.sib.on_duration > 0.0 && cell.sib.on_duration < cell.sib.paging_cycle) {
            errors.push(ValidationError::new(
                ValidationCode::InvalidValue,
                cell.cell_id.to_string(),
                "on_duration must lie in (0, paging_cycle)",
            ));
        }
    }

    // Trace coverage and monotonicity.
    for cell in &raw.cells {
        match raw.trace.cells.get(&cell.cell_id) {
            None | Some(&[]) => errors.push(ValidationError::new(
                ValidationCode::InvalidValue,
                cell.cell_id.to_string(),
                "no trace breakpoints for cell",
            )),
            Some(points) => {
                if points.windows(2).any(|w| w[1].0 <= w[0].0) {
                    errors.push(ValidationError::new(
                        ValidationCode::NonMonotoneTrace,
                        cell.cell_id.to_string(),
                        "breakpoint times must be strictly increasing",
                    ));
                }
            }
        }
    }
    for cid in raw.trace.cells.keys() {
        if !cell_ids.contains(cid) {
            errors.push(ValidationError::new(
                ValidationCode::DanglingReference,
                cid.to_string(),
                "trace entry for unknown cell",
            ));
        }
    }

    // Workload sanity.
    for (i, flow) in raw.workload.iter().enumerate() {
        if !(flow.arrival_time >= 0.0) {
            errors.push(ValidationError::new(
                ValidationCode::InvalidValue,
                format!("workload[{i}]"),
                "arrival_time must be >= 0",
            ));
        }
        if !(flow.duration > 0.0) {
            errors.push(ValidationError::new(
                ValidationCode::InvalidValue,
                format!("workload[{i}]"),
                "duration must be > 0",
            ));
        }
    }

    // Performance model must cover every network with non-empty curves.
    for net in &raw.networks {
        match raw.performance.networks.get(&net.network_id) {
            None => errors.push(ValidationError::new(
                ValidationCode::InvalidValue,
                net.network_id.to_string(),
                "no performance entry for network",
            )),
            Some(perf) => {
                if perf.latency.is_empty() || perf.throughput.is_empty() {
                    errors.push(ValidationError::new(
                        ValidationCode::InvalidValue,
                        net.network_id.to_string(),
                        "performance curves must be non-empty",
                    ));
                }
            }
        }
    }
    for nid in raw.performance.networks.keys() {
        if !network_ids.contains(nid) {
            errors.push(ValidationError::new(
                ValidationCode::DanglingReference,
                nid.to_string(),
                "performance entry for unknown network",
            ));
        }
    }

    // Baseline priority list: a total order over the scenario networks.
    let mut listed = BTreeSet::new();
    for nid in &raw.baseline.plmn_priority_list {
        if !network_ids.contains(nid) {
            errors.push(ValidationError::new(
                ValidationCode::DanglingReference,
                nid.to_string(),
                "priority list names unknown network",
            ));
        }
        if !listed.insert(nid) {
            errors.push(ValidationError::new(
                ValidationCode::DuplicateId,
                nid.to_string(),
                "network repeated in priority list",
            ));
        }
    }
    for nid in &network_ids {
        if !listed.contains(*nid) {
            errors.push(ValidationError::new(
                ValidationCode::InvalidValue,
                nid.to_string(),
                "network missing from plmn_priority_list",
            ));
        }
    }

    // Device config.
    if let Some(init) = raw.device.initial_network() {
        if !network_ids.contains(&init) {
            errors.push(ValidationError::new(
                ValidationCode::DanglingReference,
                init.to_string(),
                "initial_registration names unknown network",
            ));
        }
    }
    if !(0.0..=1.0).contains(&raw.device.attach_failure_prob) {
        errors.push(ValidationError::new(
            ValidationCode::InvalidValue,
            "device",
            "attach_failure_prob must lie in [0, 1]",
        ));
    }
    if !(raw.platform_overhead >= 0.0) {
        errors.push(ValidationError::new(
            ValidationCode::InvalidValue,
            "scenario",
            "platform_overhead must be >= 0",
        ));
    }
    if let Some(d) = raw.duration {
        if !(d > 0.0) {
            errors.push(ValidationError::new(
                ValidationCode::InvalidValue,
                "scenario",
                "duration must be > 0",
            ));
        }
    }

    // Billing tiers must have increasing volumes.
    for (plmn, plan) in &raw.billing {
        let mut last = 0.0f64;
        for tier in &plan.tiers {
            match tier.up_to {
                Some(v) => {
                    if v <= last {
                        errors.push(ValidationError::new(
                            ValidationCode::InvalidValue,
                            format!("billing[{plmn}]"),
                            "tier volumes must be increasing",
                        ));
                        break;
                    }
                    last = v;
                }
                None => break,
            }
        }
    }

    if errors.is_empty() {
        Ok(raw)
    } else {
        Err(errors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::two_carrier_scenario;

    #[test]
    fn well_formed_scenario_is_unchanged() {
        let s = two_carrier_scenario();
        let validated = validate_scenario(s.clone()).expect("valid");
        assert_eq!(validated, s);
        // Idempotent.
        assert_eq!(validate_scenario(validated.clone()).expect("valid"), s);
    }

    #[test]
    fn duplicate_cell_id_is_reported() {
        let mut s = two_carrier_scenario();
        let mut dup = s.cells[0].clone();
        dup.network = s.cells[0].network.clone();
        s.cells.push(dup);
        let errs = validate_scenario(s).unwrap_err();
        assert!(errs
            .iter()
            .any(|e| e.code == ValidationCode::DuplicateId && e.entity == "t4-a"));
    }

    #[test]
    fn non_monotone_trace_is_reported() {
        let mut s = two_carrier_scenario();
        let points = s.trace.cells.values_mut().next().unwrap();
        *points = vec![(5.0, -90.0), (3.0, -95.0)];
        let errs = validate_scenario(s).unwrap_err();
        assert!(errs.iter().any(|e| e.code == ValidationCode::NonMonotoneTrace));
    }

    #[test]
    fn empty_network_is_reported() {
        let mut s = two_carrier_scenario();
        s.networks[0].cells.clear();
        let errs = validate_scenario(s).unwrap_err();
        assert!(errs.iter().any(|e| e.code == ValidationCode::EmptyNetwork));
    }

    #[test]
    fn dangling_initial_registration_is_reported() {
        let mut s = two_carrier_scenario();
        s.device.initial_registration = "ghost".to_string();
        let errs = validate_scenario(s).unwrap_err();
        assert!(errs.iter().any(|e| e.code == ValidationCode::DanglingReference));
    }

    #[test]
    fn toml_round_trip_parses() {
        let s = two_carrier_scenario();
        let text = toml::to_string(&s).expect("serialize");
        let back = parse_scenario(&text).expect("parse");
        assert_eq!(back, s);
    }
}
