//! Built-in classification learners: CART tree, bagged trees, random forest
//! and a majority-class baseline, plus their flow representation.

pub mod ensemble;
pub mod tree;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::arff::{AttributeKind, Relation, Value};
use crate::model::{argmax_first, DataSet, Flow, FlowId, FlowParameter, ParameterSetting, UserId};

pub use ensemble::{Ensemble, Majority};
pub use tree::{fit_tree, Node, SplitRule, TreeModel, TreeParams};

/// Namespace prefix of flows this client can turn back into learners.
pub const FLOW_PREFIX: &str = "mlr.";
pub const GENERATOR_NAME: &str = "ChaCha8";

pub fn external_version() -> String {
    format!("openml-rs_{}", env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LearnerError {
    #[error("no training rows")]
    EmptyData,
    #[error("target '{0}' is not nominal")]
    NonNominalTarget(String),
    #[error("column '{0}' has missing values, which the built-in learners do not support")]
    MissingValues(String),
    #[error("feature '{0}' has an unsupported type (string/date)")]
    UnsupportedFeature(String),
    #[error("learner {learner} has no hyperparameter '{name}'")]
    UnknownParameter { learner: String, name: String },
    #[error("invalid value {value} for {name}: {reason}")]
    InvalidParameter { name: String, value: String, reason: String },
    #[error("flow '{0}' was not created by this client and cannot be converted")]
    UnsupportedFlow(String),
    #[error("unknown learner '{0}'")]
    UnknownLearner(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feature {
    Numeric(Vec<f64>),
    Nominal { n_levels: usize, codes: Vec<u32> },
}

/// Feature columns and encoded class labels for every row of a data set.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    pub features: Vec<Feature>,
    pub feature_names: Vec<String>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub class_names: Vec<String>,
}

impl TrainingData {
    pub fn from_parts(features: Vec<Feature>, labels: Vec<usize>, n_classes: usize) -> Self {
        let feature_names = (0..features.len()).map(|i| format!("x{i}")).collect();
        let class_names = (0..n_classes).map(|i| format!("c{i}")).collect();
        TrainingData { features, feature_names, labels, n_classes, class_names }
    }

    pub fn from_dataset(ds: &DataSet) -> Result<Self, LearnerError> {
        Self::from_relation(&ds.relation, ds.target_index)
    }

    /// Uses every attribute except `target_index` as a feature.
    pub fn from_relation(rel: &Relation, target_index: usize) -> Result<Self, LearnerError> {
        let target = &rel.attributes()[target_index];
        let class_names = target.levels().ok_or_else(|| LearnerError::NonNominalTarget(target.name.clone()))?.to_vec();
        let mut labels = Vec::with_capacity(rel.num_rows());
        for v in rel.column(target_index) {
            labels.push(v.as_level().ok_or_else(|| LearnerError::MissingValues(target.name.clone()))?);
        }
        let mut features = Vec::new();
        let mut feature_names = Vec::new();
        for (i, attr) in rel.attributes().iter().enumerate() {
            if i == target_index {
                continue;
            }
            let missing = || LearnerError::MissingValues(attr.name.clone());
            let feature = match &attr.kind {
                AttributeKind::Numeric => Feature::Numeric(
                    rel.column(i).map(|v| v.as_f64().ok_or_else(missing)).collect::<Result<_, _>>()?,
                ),
                AttributeKind::Nominal(levels) => Feature::Nominal {
                    n_levels: levels.len(),
                    codes: rel
                        .column(i)
                        .map(|v| match v {
                            Value::Nominal(c) => Ok(*c as u32),
                            _ => Err(missing()),
                        })
                        .collect::<Result<_, _>>()?,
                },
                AttributeKind::String | AttributeKind::Date(_) => {
                    return Err(LearnerError::UnsupportedFeature(attr.name.clone()))
                }
            };
            features.push(feature);
            feature_names.push(attr.name.clone());
        }
        Ok(TrainingData { features, feature_names, labels, n_classes: class_names.len(), class_names })
    }

    pub fn num_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LearnerKind {
    Tree,
    BaggedTree,
    RandomForest,
    Majority,
}

struct ParamDef {
    name: &'static str,
    /// `None` means the default depends on the data (mtry).
    default: Option<i64>,
    min: i64,
}

const TREE_PARAMS: [ParamDef; 3] = [
    ParamDef { name: "max_depth", default: Some(30), min: 1 },
    ParamDef { name: "min_split", default: Some(20), min: 2 },
    ParamDef { name: "min_leaf", default: Some(7), min: 1 },
];
const BAGGING_PARAMS: [ParamDef; 4] = [
    ParamDef { name: "bw_iters", default: Some(10), min: 1 },
    ParamDef { name: "max_depth", default: Some(30), min: 1 },
    ParamDef { name: "min_split", default: Some(20), min: 2 },
    ParamDef { name: "min_leaf", default: Some(7), min: 1 },
];
const FOREST_PARAMS: [ParamDef; 5] = [
    ParamDef { name: "ntree", default: Some(500), min: 1 },
    ParamDef { name: "mtry", default: None, min: 1 },
    ParamDef { name: "max_depth", default: Some(30), min: 1 },
    ParamDef { name: "min_split", default: Some(2), min: 2 },
    ParamDef { name: "min_leaf", default: Some(1), min: 1 },
];

impl LearnerKind {
    pub const ALL: [LearnerKind; 4] =
        [LearnerKind::Tree, LearnerKind::BaggedTree, LearnerKind::RandomForest, LearnerKind::Majority];

    /// Class name without the namespace prefix.
    pub fn class_name(self) -> &'static str {
        match self {
            LearnerKind::Tree => "classif.rpart",
            LearnerKind::BaggedTree => "classif.rpart.bagged",
            LearnerKind::RandomForest => "classif.randomForest",
            LearnerKind::Majority => "classif.featureless",
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            LearnerKind::Tree => "tree",
            LearnerKind::BaggedTree => "bagged-tree",
            LearnerKind::RandomForest => "forest",
            LearnerKind::Majority => "majority",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        let bare = name.strip_prefix(FLOW_PREFIX).unwrap_or(name);
        LearnerKind::ALL.into_iter().find(|k| k.short_name() == bare || k.class_name() == bare)
    }

    fn params(self) -> &'static [ParamDef] {
        match self {
            LearnerKind::Tree => &TREE_PARAMS,
            LearnerKind::BaggedTree => &BAGGING_PARAMS,
            LearnerKind::RandomForest => &FOREST_PARAMS,
            LearnerKind::Majority => &[],
        }
    }

    fn description(self) -> &'static str {
        match self {
            LearnerKind::Tree => "CART classification tree (Gini impurity)",
            LearnerKind::BaggedTree => "Bagging wrapper around a CART classification tree",
            LearnerKind::RandomForest => "Random forest of CART trees with per-node feature subsampling",
            LearnerKind::Majority => "Constant majority-class classifier",
        }
    }
}

/// A learner with its explicitly set hyperparameters.
///
/// Equality is semantic: two specs are equal when they have the same kind,
/// external version and effective hyperparameter values.
#[derive(Debug, Clone)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    params: BTreeMap<String, i64>,
    pub external_version: String,
}

impl PartialEq for LearnerSpec {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.external_version == other.external_version
            && self.kind.params().iter().all(|d| self.value(d.name) == other.value(d.name))
    }
}

impl LearnerSpec {
    pub fn new(kind: LearnerKind) -> Self {
        LearnerSpec { kind, params: BTreeMap::new(), external_version: external_version() }
    }

    pub fn tree() -> Self {
        Self::new(LearnerKind::Tree)
    }

    pub fn bagged_tree(bw_iters: i64) -> Result<Self, LearnerError> {
        Self::new(LearnerKind::BaggedTree).with("bw_iters", bw_iters)
    }

    pub fn forest(ntree: i64) -> Result<Self, LearnerError> {
        Self::new(LearnerKind::RandomForest).with("ntree", ntree)
    }

    pub fn majority() -> Self {
        Self::new(LearnerKind::Majority)
    }

    /// Looks a learner up by short name (`forest`) or class name
    /// (`classif.randomForest`, optionally prefixed).
    pub fn by_name(name: &str) -> Result<Self, LearnerError> {
        LearnerKind::from_name(name).map(Self::new).ok_or_else(|| LearnerError::UnknownLearner(name.to_string()))
    }

    pub fn flow_name(&self) -> String {
        format!("{FLOW_PREFIX}{}", self.kind.class_name())
    }

    pub fn with(mut self, name: &str, value: i64) -> Result<Self, LearnerError> {
        self.set(name, value)?;
        Ok(self)
    }

    pub fn set(&mut self, name: &str, value: i64) -> Result<(), LearnerError> {
        let def = self.kind.params().iter().find(|d| d.name == name).ok_or_else(|| {
            LearnerError::UnknownParameter { learner: self.flow_name(), name: name.to_string() }
        })?;
        if value < def.min {
            return Err(LearnerError::InvalidParameter {
                name: name.to_string(),
                value: value.to_string(),
                reason: format!("must be at least {}", def.min),
            });
        }
        self.params.insert(name.to_string(), value);
        Ok(())
    }

    /// Parses and sets `name=value` text, as given on a command line.
    pub fn set_str(&mut self, name: &str, value: &str) -> Result<(), LearnerError> {
        let v = value.trim().parse::<i64>().map_err(|_| LearnerError::InvalidParameter {
            name: name.to_string(),
            value: value.to_string(),
            reason: "expected an integer".into(),
        })?;
        self.set(name, v)
    }

    pub fn explicit(&self) -> &BTreeMap<String, i64> {
        &self.params
    }

    /// Explicit value, else the built-in default; `None` for data-dependent defaults.
    pub fn value(&self, name: &str) -> Option<i64> {
        self.params
            .get(name)
            .copied()
            .or_else(|| self.kind.params().iter().find(|d| d.name == name).and_then(|d| d.default))
    }

    fn get(&self, name: &str) -> usize {
        self.value(name).expect("parameter with a static default") as usize
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.get("max_depth"),
            min_split: self.get("min_split"),
            min_leaf: self.get("min_leaf"),
        }
    }

    fn mtry(&self, n_features: usize) -> Result<usize, LearnerError> {
        match self.params.get("mtry") {
            None => Ok(((n_features as f64).sqrt().floor() as usize).max(1)),
            Some(&m) if (m as usize) <= n_features => Ok(m as usize),
            Some(&m) => Err(LearnerError::InvalidParameter {
                name: "mtry".into(),
                value: m.to_string(),
                reason: format!("data has only {n_features} features"),
            }),
        }
    }

    /// Every hyperparameter with the value used on data with `n_features`
    /// features, flagged when it came from a default.
    pub fn parameter_settings(&self, n_features: usize) -> Vec<ParameterSetting> {
        self.kind
            .params()
            .iter()
            .map(|d| {
                let value = match (d.name, self.value(d.name)) {
                    (_, Some(v)) => v.to_string(),
                    ("mtry", None) => self.mtry(n_features).map(|m| m.to_string()).unwrap_or_default(),
                    (_, None) => String::new(),
                };
                ParameterSetting { name: d.name.to_string(), value, defaulted: !self.params.contains_key(d.name) }
            })
            .collect()
    }

    /// Short label naming the learner and its explicit settings,
    /// e.g. `classif.randomForest(ntree=50)`.
    pub fn label(&self) -> String {
        learner_label(&self.flow_name(), self.params.iter().map(|(k, v)| (k.as_str(), v.to_string())))
    }

    /// Trains on `rows` (duplicates allowed). Randomized learners draw from
    /// generators derived from `seed`.
    pub fn fit(&self, data: &TrainingData, rows: &[usize], seed: u64) -> Result<FittedModel, LearnerError> {
        if rows.is_empty() {
            return Err(LearnerError::EmptyData);
        }
        Ok(match self.kind {
            LearnerKind::Majority => FittedModel::Majority(Majority::fit(data, rows)),
            LearnerKind::Tree => FittedModel::Tree(fit_tree(data, rows, &self.tree_params(), None)),
            LearnerKind::BaggedTree => FittedModel::Ensemble(Ensemble::bagging(
                data,
                rows,
                &self.tree_params(),
                self.get("bw_iters"),
                None,
                seed,
            )),
            LearnerKind::RandomForest => {
                let mtry = self.mtry(data.num_features())?;
                FittedModel::Ensemble(Ensemble::bagging(
                    data,
                    rows,
                    &self.tree_params(),
                    self.get("ntree"),
                    Some(mtry),
                    seed,
                ))
            }
        })
    }

    pub fn to_flow(&self) -> Flow {
        Flow {
            flow_id: FlowId(0),
            name: self.flow_name(),
            version: 1,
            external_version: self.external_version.clone(),
            description: self.kind.description().to_string(),
            parameters: self
                .kind
                .params()
                .iter()
                .map(|d| FlowParameter {
                    name: d.name.to_string(),
                    data_type: "integer".to_string(),
                    default_value: self.value(d.name).map(|v| v.to_string()).unwrap_or_default(),
                })
                .collect(),
            dependencies: vec![external_version()],
            uploader: UserId(0),
            tags: Default::default(),
        }
    }

    /// Rebuilds a learner from one of this client's flows; parameter defaults
    /// recorded in the flow become the learner's settings.
    pub fn from_flow(flow: &Flow) -> Result<Self, LearnerError> {
        let unsupported = || LearnerError::UnsupportedFlow(flow.name.clone());
        let class = flow.name.strip_prefix(FLOW_PREFIX).ok_or_else(unsupported)?;
        let kind = LearnerKind::ALL.into_iter().find(|k| k.class_name() == class).ok_or_else(unsupported)?;
        let mut spec = LearnerSpec { kind, params: BTreeMap::new(), external_version: flow.external_version.clone() };
        for p in &flow.parameters {
            let def = kind.params().iter().find(|d| d.name == p.name);
            if p.default_value.is_empty() {
                if def.is_some() {
                    continue;
                }
                return Err(LearnerError::UnknownParameter { learner: flow.name.clone(), name: p.name.clone() });
            }
            // Values equal to the built-in default stay implicit.
            if def.and_then(|d| d.default).is_some_and(|d| d.to_string() == p.default_value.trim()) {
                continue;
            }
            spec.set_str(&p.name, &p.default_value)?;
        }
        Ok(spec)
    }
}

/// `name(k1=v1,k2=v2)`, or just the name without the namespace prefix
/// when there are no settings.
pub fn learner_label<'a>(flow_name: &str, settings: impl IntoIterator<Item = (&'a str, String)>) -> String {
    let bare = flow_name.strip_prefix(FLOW_PREFIX).unwrap_or(flow_name);
    let parts: Vec<String> = settings.into_iter().map(|(k, v)| format!("{k}={v}")).collect();
    if parts.is_empty() {
        bare.to_string()
    } else {
        format!("{bare}({})", parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Tree(TreeModel),
    Ensemble(Ensemble),
    Majority(Majority),
}

impl FittedModel {
    /// Class confidences for one row; they sum to one.
    pub fn predict_proba(&self, data: &TrainingData, row: usize) -> Vec<f64> {
        match self {
            FittedModel::Tree(t) => t.predict_proba(data, row),
            FittedModel::Ensemble(e) => e.predict_proba(data, row),
            FittedModel::Majority(m) => m.confidences.clone(),
        }
    }

    /// Predicted class index and confidences; ties go to the first class.
    pub fn predict(&self, data: &TrainingData, row: usize) -> (usize, Vec<f64>) {
        let conf = self.predict_proba(data, row);
        (argmax_first(&conf).unwrap_or(0), conf)
    }
}

/// Mixes `parts` into `seed` (splitmix64 finalizer per step).
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(seed), |acc, &p| mix(acc ^ mix(p)))
}

/// Generator for one ensemble member: keyed by `seed`, stream = member index.
pub fn member_rng(seed: u64, member: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(member);
    rng
}
