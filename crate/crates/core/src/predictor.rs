//! The prediction service: maps (radio measurement, heterogeneity profile)
//! to a user metric with the online regression tree. Missing profile fields
//! fill with modal profiled values.

use serde::{Deserialize, Serialize};

use crate::model::{CellId, Metric, NetworkId};
use crate::profile::{ProfileStore, ProfileValue, QOS_FIELDS, RADIO_FIELDS};
use crate::tree::{
    FeatureSchema, FeatureValue, FieldDef, FieldKind, RegressionTree, Sample, TreeError,
    TreeParams,
};

/// One collected observation: the serving network's measured metric with
/// the features in effect at the time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub network: NetworkId,
    pub timestamp: f64,
    pub features: Vec<FeatureValue>,
    pub label: f64,
}

/// The fixed feature order: the radio measurement first, then QoS profile
/// fields, then radio profile fields. This order is the split tie-break.
pub fn standard_schema() -> FeatureSchema {
    let mut fields = vec![FieldDef {
        name: "rss".to_string(),
        kind: FieldKind::Numeric,
        profile: false,
    }];
    for name in QOS_FIELDS {
        fields.push(FieldDef {
            name: name.to_string(),
            kind: if name == "traffic_class" { FieldKind::Categorical } else { FieldKind::Numeric },
            profile: true,
        });
    }
    for name in RADIO_FIELDS {
        fields.push(FieldDef {
            name: name.to_string(),
            kind: if name == "tdd_config" { FieldKind::Categorical } else { FieldKind::Numeric },
            profile: true,
        });
    }
    FeatureSchema { fields }
}

fn to_feature(value: &ProfileValue, kind: FieldKind) -> FeatureValue {
    match (kind, value) {
        (FieldKind::Numeric, ProfileValue::Num(v)) => FeatureValue::Num(*v),
        (FieldKind::Numeric, ProfileValue::Bool(b)) => FeatureValue::Num(*b as u8 as f64),
        (FieldKind::Numeric, ProfileValue::Text(_)) => FeatureValue::Num(0.0),
        (FieldKind::Categorical, ProfileValue::Text(s)) => FeatureValue::Cat(s.clone()),
        (FieldKind::Categorical, ProfileValue::Num(v)) => FeatureValue::Cat(v.to_string()),
        (FieldKind::Categorical, ProfileValue::Bool(b)) => FeatureValue::Cat(b.to_string()),
    }
}

/// Metric predictor for one user-specified metric.
pub struct Predictor {
    pub metric: Metric,
    tree: RegressionTree,
    samples: Vec<TrainingSample>,
}

impl Predictor {
    pub fn new(metric: Metric) -> Self {
        Predictor::with_params(metric, TreeParams::default())
    }

    pub fn with_params(metric: Metric, params: TreeParams) -> Self {
        Predictor { metric, tree: RegressionTree::new(standard_schema(), params), samples: Vec::new() }
    }

    pub fn tree(&self) -> &RegressionTree {
        &self.tree
    }

    pub fn tree_mut(&mut self) -> &mut RegressionTree {
        &mut self.tree
    }

    pub fn samples(&self) -> &[TrainingSample] {
        &self.samples
    }

    /// Assemble the feature vector for a network at a given RSS, taking
    /// each profile field's modal value: the cell's if profiled, else the
    /// network's, else the global modal, else a fixed default.
    pub fn features_for(
        &self,
        profiles: &ProfileStore,
        network: &NetworkId,
        cell: Option<&CellId>,
        rss: f64,
    ) -> Vec<FeatureValue> {
        let schema = self.tree.schema().clone();
        let mut out = Vec::with_capacity(schema.len());
        for def in &schema.fields {
            if !def.profile {
                out.push(FeatureValue::Num(rss));
                continue;
            }
            let cell_modal = cell
                .and_then(|c| profiles.cell_tally(network, c, &def.name))
                .and_then(|t| t.modal().map(|(v, _, _)| v.clone()));
            let value = cell_modal
                .or_else(|| profiles.network_modal(network, &def.name).map(|(v, _)| v))
                .or_else(|| profiles.global_modal(&def.name));
            match value {
                Some(v) => out.push(to_feature(&v, def.kind)),
                None => out.push(match def.kind {
                    FieldKind::Numeric => FeatureValue::Num(0.0),
                    FieldKind::Categorical => FeatureValue::Cat("unknown".to_string()),
                }),
            }
        }
        out
    }

    /// Record one measured observation and update the tree online.
    pub fn observe(
        &mut self,
        profiles: &ProfileStore,
        network: &NetworkId,
        cell: &CellId,
        rss: f64,
        label: f64,
        timestamp: f64,
    ) {
        let features = self.features_for(profiles, network, Some(cell), rss);
        self.samples.push(TrainingSample {
            network: network.clone(),
            timestamp,
            features: features.clone(),
            label,
        });
        let _ = self.tree.insert(Sample { features, label });
    }

    /// Predict the metric for a candidate network observed at `rss`.
    pub fn predict_for(
        &self,
        profiles: &ProfileStore,
        network: &NetworkId,
        cell: Option<&CellId>,
        rss: f64,
    ) -> Result<f64, TreeError> {
        let features = self.features_for(profiles, network, cell, rss);
        self.tree.predict(&features)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{CellularEvent, EventKind};
    use crate::model::TrafficClass;

    fn setup_profiles() -> ProfileStore {
        let mut store = ProfileStore::new();
        store.profile_update(&CellularEvent {
            time: 0.0,
            kind: EventKind::EpsPdpSetup {
                cell: CellId::from("t4-a"),
                network: NetworkId::from("T-4G"),
                bearer_id: 1,
                traffic_class: TrafficClass::Interactive,
                delay_class: 1,
                max_dl_rate: 256.0,
                max_ul_rate: 44.0,
                dl_gbr: 0.0,
                ul_gbr: 0.0,
            },
        });
        store
    }

    #[test]
    fn features_fill_from_profiles() {
        let store = setup_profiles();
        let p = Predictor::new(Metric::Latency);
        let feats =
            p.features_for(&store, &NetworkId::from("T-4G"), Some(&CellId::from("t4-a")), -95.0);
        assert_eq!(feats[0], FeatureValue::Num(-95.0));
        assert_eq!(feats[1], FeatureValue::Cat("Interactive".to_string()));
        assert_eq!(feats[2], FeatureValue::Num(1.0));
    }

    #[test]
    fn observe_then_predict_round_trips() {
        let store = setup_profiles();
        let mut p = Predictor::new(Metric::Latency);
        p.observe(&store, &NetworkId::from("T-4G"), &CellId::from("t4-a"), -95.0, 60.0, 1.0);
        let v = p
            .predict_for(&store, &NetworkId::from("T-4G"), Some(&CellId::from("t4-a")), -95.0)
            .unwrap();
        assert_eq!(v, 60.0);
    }
}
