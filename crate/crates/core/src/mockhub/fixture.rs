//! The bundled hub contents: synthetic data sets with the published shapes
//! of well-known benchmark data, their tasks, a few flows and runs.
//!
//! Numeric data is drawn from a seeded generator. Labels come from a noisy
//! nonlinear score of a few informative columns, ranked so that every data
//! set has its exact class counts. Tic-tac-toe is the exact set of legal
//! end positions.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arff::{Attribute, Relation, Value};
use crate::learners::LearnerSpec;
use crate::model::{
    DataId, DataSet, DataSetDescription, DataStatus, EntityKind, EstimationKind, EstimationProcedure, Flow, FlowId,
    FlowParameter, RunId, Task, TaskId, TaskType, UserId,
};
use crate::runner::{compute_data_qualities, make_cv_splits, run_task_flow, PREDICTIVE_ACCURACY};
use crate::wire::MeasureInfo;

use super::state::{HubState, StoredData, StoredRun, User};

pub const ADMIN: UserId = UserId(1);
pub const READ_ONLY: UserId = UserId(2);
pub const MLR_AUTHOR: UserId = UserId(348);
pub const TESTER: UserId = UserId(1001);
pub const OTHER_TESTER: UserId = UserId(1002);

pub const ADMIN_KEY: &str = "adadadadadadadadadadadadadadadad";
/// The public read-only key from the client documentation.
pub const READ_ONLY_KEY: &str = "c1994bdb7ecb3c6f3c8f3b35f4b47f1f";
pub const MLR_AUTHOR_KEY: &str = "34834834834834834834834834834834";
pub const TEST_KEY: &str = "0123456789abcdef0123456789abcdef";
pub const OTHER_TEST_KEY: &str = "fedcba9876543210fedcba9876543210";

pub const TABLE1_TASKS: [u64; 6] = [37, 39, 42, 49, 52, 57];
pub const CASE_STUDY_RUN: RunId = RunId(1816245);
pub const FOREST_FLOW: FlowId = FlowId(4782);
pub const RPART_FLOW: FlowId = FlowId(4780);

const FIXTURE_DATE: &str = "2014-04-06T23:19:20";
const FIXTURE_RUN_VERSION: &str = "R_3.3.2, mlr_2.10";

pub fn estimation_procedures() -> Vec<EstimationProcedure> {
    let cv = |id, name: &str, folds, repeats| EstimationProcedure {
        id,
        name: name.to_string(),
        kind: EstimationKind::Crossvalidation,
        folds,
        repeats,
        stratified: true,
    };
    vec![
        cv(1, "10-fold Crossvalidation", 10, 1),
        cv(2, "5-fold Crossvalidation", 5, 1),
        cv(3, "10 times 10-fold Crossvalidation", 10, 10),
    ]
}

pub fn evaluation_measures() -> Vec<MeasureInfo> {
    vec![
        MeasureInfo {
            name: "predictive_accuracy".into(),
            description: "Fraction of test instances predicted correctly".into(),
        },
        MeasureInfo {
            name: "area_under_roc_curve".into(),
            description: "Area under the ROC curve of the second declared class (binary tasks)".into(),
        },
    ]
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// Noisy nonlinear score of the first few columns.
fn score(x: &[f64], rng: &mut ChaCha8Rng, noise: f64) -> f64 {
    let g = |i: usize| x.get(i).copied().unwrap_or(0.0);
    1.2 * g(0) + (1.5 * g(1)).sin() + 0.8 * g(2) * g(3) + 0.6 * (g(4).abs() - 0.8) + noise * normal(rng)
}

/// Ranks rows by score and hands out labels so class `k` gets exactly
/// `counts[k]` rows, lowest scores first.
fn labels_by_rank(scores: &[f64], counts: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut labels = vec![0; scores.len()];
    let mut pos = 0;
    for (class, &c) in counts.iter().enumerate() {
        for &row in &order[pos..pos + c] {
            labels[row] = class;
        }
        pos += c;
    }
    labels
}

struct NumericShape<'a> {
    relation: &'a str,
    features: Vec<String>,
    target: &'a str,
    levels: &'a [&'a str],
    counts: &'a [usize],
    /// Missing cells, placed in distinct rows of column `missing_column`.
    missing: usize,
    missing_column: usize,
    /// Maps a standard normal draw to the stored value.
    transform: fn(f64) -> f64,
    noise: f64,
    /// Extra nominal feature columns (name, levels).
    nominal: Vec<(String, Vec<String>)>,
}

fn numeric_relation(seed: u64, shape: &NumericShape) -> Relation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.counts.iter().sum();
    let p = shape.features.len();
    let raw: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| normal(&mut rng)).collect()).collect();
    let nominal_codes: Vec<Vec<usize>> =
        (0..n).map(|_| shape.nominal.iter().map(|(_, l)| rng.random_range(0..l.len())).collect()).collect();
    let scores: Vec<f64> = raw
        .iter()
        .zip(&nominal_codes)
        .map(|(x, codes)| {
            let bump: f64 = codes.iter().map(|&c| if c == 0 { 0.7 } else { 0.0 }).sum();
            score(x, &mut rng, shape.noise) + bump
        })
        .collect();
    let labels = labels_by_rank(&scores, shape.counts);

    let mut missing_rows = BTreeSet::new();
    while missing_rows.len() < shape.missing {
        missing_rows.insert(rng.random_range(0..n));
    }

    let mut attrs: Vec<Attribute> = shape.features.iter().map(Attribute::numeric).collect();
    attrs.extend(shape.nominal.iter().map(|(name, levels)| Attribute::nominal(name.clone(), levels.clone())));
    attrs.push(Attribute::nominal(shape.target, shape.levels.iter().copied()));
    let mut rel = Relation::new(shape.relation, attrs).expect("valid fixture header");
    for i in 0..n {
        let mut row: Vec<Value> = raw[i]
            .iter()
            .enumerate()
            .map(|(j, &z)| {
                if j == shape.missing_column && missing_rows.contains(&i) {
                    Value::Missing
                } else {
                    Value::Number(round4((shape.transform)(z)))
                }
            })
            .collect();
        row.extend(nominal_codes[i].iter().map(|&c| Value::Nominal(c)));
        row.push(Value::Nominal(labels[i]));
        rel.push_row(row).expect("valid fixture row");
    }
    rel
}

fn identity(z: f64) -> f64 {
    z
}

fn score_1_to_10(z: f64) -> f64 {
    (5.0 + 2.2 * z).round().clamp(1.0, 10.0)
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn strings(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

/// All positions in which a game of noughts and crosses has ended,
/// labelled `positive` when x has three in a row.
pub fn tic_tac_toe() -> Relation {
    const LINES: [[usize; 3]; 8] = [[0, 1, 2], [3, 4, 5], [6, 7, 8], [0, 3, 6], [1, 4, 7], [2, 5, 8], [0, 4, 8], [2, 4, 6]];
    fn wins(b: &[u8; 9], p: u8) -> bool {
        LINES.iter().any(|l| l.iter().all(|&i| b[i] == p))
    }
    fn walk(b: &mut [u8; 9], turn: u8, out: &mut BTreeSet<[u8; 9]>) {
        if wins(b, b'x') || wins(b, b'o') || b.iter().all(|&c| c != b'b') {
            out.insert(*b);
            return;
        }
        for i in 0..9 {
            if b[i] == b'b' {
                b[i] = turn;
                walk(b, if turn == b'x' { b'o' } else { b'x' }, out);
                b[i] = b'b';
            }
        }
    }
    let mut boards = BTreeSet::new();
    walk(&mut [b'b'; 9], b'x', &mut boards);

    let squares = ["top-left", "top-middle", "top-right", "middle-left", "middle-middle", "middle-right"];
    let squares = squares.iter().chain(&["bottom-left", "bottom-middle", "bottom-right"]);
    let levels = ["x", "o", "b"];
    let mut attrs: Vec<Attribute> = squares.map(|s| Attribute::nominal(format!("{s}-square"), levels)).collect();
    attrs.push(Attribute::nominal("Class", ["negative", "positive"]));
    let mut rel = Relation::new("tic-tac-toe", attrs).expect("valid header");
    for b in &boards {
        let mut row: Vec<Value> =
            b.iter().map(|&c| Value::Nominal(levels.iter().position(|l| l.as_bytes()[0] == c).unwrap())).collect();
        row.push(Value::Nominal(usize::from(wins(b, b'x'))));
        rel.push_row(row).expect("valid row");
    }
    rel
}

struct DataDef {
    id: u64,
    name: &'static str,
    target: &'static str,
    status: DataStatus,
    tags: &'static [&'static str],
    relation: Relation,
}

fn benchmark_data() -> Vec<DataDef> {
    let uci: &'static [&'static str] = &["uci"];
    let shape = |relation, features, target, levels, counts| NumericShape {
        relation,
        features,
        target,
        levels,
        counts,
        missing: 0,
        missing_column: 0,
        transform: identity,
        noise: 0.45,
        nominal: Vec::new(),
    };
    let breast = NumericShape {
        missing: 16,
        missing_column: 5,
        transform: score_1_to_10,
        ..shape(
            "wisconsin-breast-cancer",
            strings(&[
                "Clump_Thickness",
                "Cell_Size_Uniformity",
                "Cell_Shape_Uniformity",
                "Marginal_Adhesion",
                "Single_Epi_Cell_Size",
                "Bare_Nuclei",
                "Bland_Chromatin",
                "Normal_Nucleoli",
                "Mitoses",
            ]),
            "Class",
            &["benign", "malignant"],
            &[458, 241],
        )
    };
    let diabetes = shape(
        "pima_diabetes",
        strings(&["preg", "plas", "pres", "skin", "insu", "mass", "pedi", "age"]),
        "class",
        &["tested_negative", "tested_positive"],
        &[500, 268],
    );
    let sonar = shape("sonar", names("attribute_", 60), "Class", &["Mine", "Rock"], &[111, 97]);
    let haberman = shape(
        "haberman",
        strings(&[
            "Age_of_patient_at_time_of_operation",
            "Patients_year_of_operation",
            "Number_of_positive_axillary_nodes_detected",
        ]),
        "Survival_status",
        &["1", "2"],
        &[225, 81],
    );
    let heart = shape(
        "heart-statlog",
        strings(&[
            "age",
            "sex",
            "chest",
            "resting_blood_pressure",
            "serum_cholestoral",
            "fasting_blood_sugar",
            "resting_electrocardiographic_results",
            "maximum_heart_rate_achieved",
            "exercise_induced_angina",
            "oldpeak",
            "slope",
            "number_of_major_vessels",
            "thal",
        ]),
        "class",
        &["absent", "present"],
        &[150, 120],
    );
    let ionosphere = shape("ionosphere", names("a", 34), "class", &["b", "g"], &[126, 225]);

    let active = DataStatus::Active;
    vec![
        DataDef { id: 15, name: "breast-w", target: "Class", status: active, tags: uci, relation: numeric_relation(15, &breast) },
        DataDef { id: 36, name: "diabetes", target: "class", status: active, tags: uci, relation: numeric_relation(36, &diabetes) },
        DataDef { id: 40, name: "sonar", target: "Class", status: active, tags: uci, relation: numeric_relation(40, &sonar) },
        DataDef {
            id: 43,
            name: "haberman",
            target: "Survival_status",
            status: active,
            tags: uci,
            relation: numeric_relation(43, &haberman),
        },
        DataDef { id: 50, name: "tic-tac-toe", target: "Class", status: active, tags: uci, relation: tic_tac_toe() },
        DataDef { id: 53, name: "heart-statlog", target: "class", status: active, tags: uci, relation: numeric_relation(53, &heart) },
        DataDef { id: 59, name: "ionosphere", target: "class", status: active, tags: uci, relation: numeric_relation(59, &ionosphere) },
    ]
}

/// Synthetic data sets of assorted shapes for exercising listing filters.
fn synthetic_data() -> Vec<DataDef> {
    // (id, name, features, class counts, missing, nominal columns, status, tags)
    type Row = (u64, &'static str, usize, &'static [usize], usize, usize, DataStatus, &'static [&'static str]);
    let rows: [Row; 10] = [
        (1001, "synth-blobs", 4, &[50, 50, 50], 0, 0, DataStatus::Active, &["synthetic"]),
        (1002, "synth-wide", 80, &[70, 50], 0, 0, DataStatus::Active, &["synthetic"]),
        (1003, "synth-missing", 12, &[400, 200], 25, 0, DataStatus::Active, &["synthetic", "study_14"]),
        (1004, "synth-large", 20, &[900, 600], 0, 0, DataStatus::Active, &["synthetic"]),
        (1005, "synth-multi", 6, &[200, 200, 150, 150, 100], 0, 2, DataStatus::Active, &["synthetic", "study_14"]),
        (1006, "synth-tiny", 3, &[25, 15], 0, 0, DataStatus::Active, &["synthetic"]),
        (1007, "synth-gaps", 7, &[150, 100], 3, 1, DataStatus::Active, &["uci"]),
        (1008, "synth-four", 15, &[300, 300, 200, 199], 0, 0, DataStatus::Active, &["uci"]),
        (1009, "synth-draft", 5, &[60, 40], 0, 0, DataStatus::InPreparation, &[]),
        (1010, "synth-retired", 5, &[180, 120], 0, 0, DataStatus::Deactivated, &["uci"]),
    ];
    const CLASS_LEVELS: [&str; 5] = ["c1", "c2", "c3", "c4", "c5"];
    rows.iter()
        .map(|&(id, name, p, counts, missing, n_nominal, status, tags)| {
            let shape = NumericShape {
                relation: name,
                features: names("x", p),
                target: "class",
                levels: &CLASS_LEVELS[..counts.len()],
                counts,
                missing,
                missing_column: 0,
                transform: identity,
                noise: 0.6,
                nominal: (1..=n_nominal).map(|i| (format!("n{i}"), strings(&["a", "b", "c"]))).collect(),
            };
            DataDef { id, name, target: "class", status, tags, relation: numeric_relation(id, &shape) }
        })
        .collect()
}

fn tags(list: &[&str]) -> BTreeSet<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn fixture_flow(id: u64, name: &str, version: u32, uploader: UserId, params: Vec<FlowParameter>) -> Flow {
    Flow {
        flow_id: FlowId(id),
        name: name.to_string(),
        version,
        external_version: FIXTURE_RUN_VERSION.to_string(),
        description: String::new(),
        parameters: params,
        dependencies: strings(&["R_3.3.2", "mlr_2.10"]),
        uploader,
        tags: BTreeSet::new(),
    }
}

fn mlr_flow(id: u64, spec: &LearnerSpec, version: u32) -> Flow {
    let template = spec.to_flow();
    Flow { description: template.description, ..fixture_flow(id, &template.name, version, MLR_AUTHOR, template.parameters) }
}

fn foreign_param(name: &str, ty: &str, default: &str) -> FlowParameter {
    FlowParameter { name: name.into(), data_type: ty.into(), default_value: default.into() }
}

pub fn build() -> HubState {
    let mut state = HubState::empty();
    state.users = vec![
        User { id: ADMIN, name: "hub-admin".into(), apikey: ADMIN_KEY.into(), read_only: false },
        User { id: READ_ONLY, name: "public".into(), apikey: READ_ONLY_KEY.into(), read_only: true },
        User { id: MLR_AUTHOR, name: "mlr-author".into(), apikey: MLR_AUTHOR_KEY.into(), read_only: false },
        User { id: TESTER, name: "tester".into(), apikey: TEST_KEY.into(), read_only: false },
        User { id: OTHER_TESTER, name: "other-tester".into(), apikey: OTHER_TEST_KEY.into(), read_only: false },
    ];
    state.procedures = estimation_procedures();
    state.measures = evaluation_measures();

    for def in benchmark_data().into_iter().chain(synthetic_data()) {
        let qualities = compute_data_qualities(&def.relation, def.target).expect("nominal fixture target");
        let desc = DataSetDescription {
            data_id: DataId(def.id),
            name: def.name.to_string(),
            version: 1,
            status: def.status,
            default_target_attribute: def.target.to_string(),
            licence: "Public".into(),
            format: "ARFF".into(),
            upload_date: FIXTURE_DATE.into(),
            uploader: ADMIN,
            tags: tags(def.tags),
            qualities,
        };
        for t in def.tags {
            state.tag_owners.insert((EntityKind::Dataset, def.id, t.to_string()), ADMIN);
        }
        let stored = StoredData::new(DataSet::new(desc, def.relation).expect("target exists"));
        state.datasets.insert(DataId(def.id), stored);
    }

    let procs = estimation_procedures();
    // (task id, data id, estimation procedure index)
    let task_defs: [(u64, u64, usize); 18] = [
        (1, 15, 0),
        (37, 36, 0),
        (39, 40, 0),
        (42, 43, 0),
        (49, 50, 0),
        (52, 53, 0),
        (57, 59, 0),
        (60, 36, 1),
        (61, 40, 2),
        (2001, 1001, 0),
        (2002, 1002, 1),
        (2003, 1003, 0),
        (2004, 1004, 0),
        (2005, 1005, 2),
        (2006, 1006, 1),
        (2007, 1007, 0),
        (2008, 1008, 0),
        (2010, 1010, 0),
    ];
    for (task_id, data_id, ep) in task_defs {
        let data = &state.datasets[&DataId(data_id)];
        let ep = procs[ep].clone();
        let labels = data.labels();
        let splits = make_cv_splits(
            labels.len(),
            Some(&labels),
            ep.folds as usize,
            ep.repeats as usize,
            ep.stratified,
            task_id,
        )
        .expect("fixture data large enough for its folds");
        let task = Task {
            task_id: TaskId(task_id),
            task_type: TaskType::SupervisedClassification,
            data_id: DataId(data_id),
            data_name: data.description().name.clone(),
            target_feature: data.description().default_target_attribute.clone(),
            estimation_procedure: ep,
            evaluation_measure: PREDICTIVE_ACCURACY.to_string(),
            tags: BTreeSet::new(),
            splits,
        };
        state.tasks.insert(TaskId(task_id), task);
        state.task_owners.insert(TaskId(task_id), ADMIN);
    }

    let forest = LearnerSpec::by_name("forest").expect("built-in");
    let rpart = LearnerSpec::tree();
    let flows = vec![
        mlr_flow(RPART_FLOW.0, &rpart, 12),
        mlr_flow(FOREST_FLOW.0, &forest, 17),
        fixture_flow(
            1172,
            "weka.J48",
            1,
            ADMIN,
            vec![foreign_param("C", "float", "0.25"), foreign_param("M", "integer", "2")],
        ),
        fixture_flow(
            7707,
            "sklearn.ensemble.forest.RandomForestClassifier",
            3,
            ADMIN,
            vec![foreign_param("n_estimators", "int", "10"), foreign_param("max_features", "string", "auto")],
        ),
    ];
    for flow in flows {
        state.flows.insert(flow.flow_id, flow);
    }

    // Runs on task 37 with different hyperparameters, then the case-study run.
    let tutorial_runs: [(u64, u64, FlowId, &[(&str, &str)], &[&str]); 6] = [
        (1816239, 37, RPART_FLOW, &[("max_depth", "1")], &["mlr_tutorial"]),
        (1816240, 37, RPART_FLOW, &[("max_depth", "3")], &["mlr_tutorial"]),
        (1816241, 37, RPART_FLOW, &[("max_depth", "10")], &["mlr_tutorial"]),
        (1816242, 37, FOREST_FLOW, &[("ntree", "10")], &["mlr_tutorial"]),
        (1816243, 37, FOREST_FLOW, &[("ntree", "20"), ("mtry", "2")], &["mlr_tutorial"]),
        (CASE_STUDY_RUN.0, 42, FOREST_FLOW, &[("ntree", "50")], &["study_30"]),
    ];
    for (run_id, task_id, flow_id, params, run_tags) in tutorial_runs {
        let task = &state.tasks[&TaskId(task_id)];
        let data = state.datasets[&task.data_id].dataset();
        let flow = &state.flows[&flow_id];
        let overrides: Vec<(String, String)> = params.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        let mut run = run_task_flow(task, data, flow, &overrides, run_id).expect("fixture run");
        run.run_id = RunId(run_id);
        run.uploader = MLR_AUTHOR;
        run.tags = tags(run_tags);
        for t in run_tags {
            state.tag_owners.insert((EntityKind::Run, run_id, t.to_string()), MLR_AUTHOR);
        }
        state.runs.insert(RunId(run_id), StoredRun::new(run));
    }

    state.next_ids = BTreeMap::from([
        (EntityKind::Dataset, 20_000),
        (EntityKind::Task, 20_000),
        (EntityKind::Flow, 10_000),
        (EntityKind::Run, CASE_STUDY_RUN.0 + 1),
    ]);
    state
}
