//! Acceptance gate. Each criterion runs in isolation and prints one PASS or
//! FAIL line; the process exits nonzero if any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use openml::arff::{Attribute, AttributeKind, Relation, Value, DEFAULT_DATE_PATTERN};
use openml::bench::{self, BenchOptions};
use openml::client::{ClientError, CountRange, DataFilter, RunSelector, TaskFilter};
use openml::learners::tree::{fit_tree, Node, SplitRule, TreeParams};
use openml::learners::{Feature, LearnerSpec, TrainingData};
use openml::mockhub::{fixture, fixture_state};
use openml::model::{
    DataId, DataStatus, EntityKind, EstimationKind, EstimationProcedure, PredictionRow, Task, TaskId, TaskType,
};
use openml::runner::{auc_rank, evaluate_predictions, make_cv_splits, AREA_UNDER_ROC_CURVE, PREDICTIVE_ACCURACY};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::Env;

const TOL: f64 = 1e-12;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// 1. ARFF round-trip

const STRESS_CHARS: &[char] = &[
    'a', 'Z', '0', ' ', ',', '%', '\'', '"', '\\', '{', '}', '?', '@', '\n', '\r', '\t', '\u{1}', '\u{7f}', 'é', '☃',
    '-', '.', 'e',
];

fn stress_text(rng: &mut ChaCha8Rng, max: usize) -> String {
    let len = rng.random_range(0..=max);
    (0..len).map(|_| *STRESS_CHARS.choose(rng).unwrap()).collect()
}

fn stress_number(rng: &mut ChaCha8Rng) -> f64 {
    match rng.random_range(0..8) {
        0 => rng.random_range(-1000i64..1000) as f64,
        1 => rng.random::<f64>(),
        2 => (rng.random::<f64>() - 0.5) * 1e300,
        3 => (rng.random::<f64>() - 0.5) * 1e-300,
        4 => *[5e-324, -5e-324, f64::MAX, f64::MIN, f64::MIN_POSITIVE, -0.0, 1e16, 1e-6, 0.1].choose(rng).unwrap(),
        5 => f64::from_bits(rng.random::<u64>() & !(0x7ff << 52) | (u64::from(rng.random_range(1u32..0x7fe)) << 52)),
        _ => (rng.random::<f64>() - 0.5) * 10f64.powi(rng.random_range(-20..20)),
    }
}

fn random_relation(rng: &mut ChaCha8Rng) -> Relation {
    let n_attrs = rng.random_range(1..=50);
    let mut names = BTreeSet::new();
    let attributes: Vec<Attribute> = (0..n_attrs)
        .map(|i| {
            let mut name = stress_text(rng, 8);
            if name.is_empty() || names.contains(&name) {
                name.push_str(&format!("#{i}"));
            }
            names.insert(name.clone());
            let kind = match rng.random_range(0..4) {
                0 => AttributeKind::Numeric,
                1 => AttributeKind::String,
                2 => AttributeKind::Date(if rng.random_bool(0.5) {
                    DEFAULT_DATE_PATTERN.to_string()
                } else {
                    stress_text(rng, 10)
                }),
                _ => {
                    let mut levels = BTreeSet::new();
                    for _ in 0..rng.random_range(1..=6) {
                        levels.insert(if rng.random_bool(0.1) { "?".to_string() } else { stress_text(rng, 6) });
                    }
                    AttributeKind::Nominal(levels.into_iter().collect())
                }
            };
            Attribute { name, kind }
        })
        .collect();
    let mut rel = Relation::new(stress_text(rng, 10), attributes.clone()).expect("valid attributes");
    let missing_rate = rng.random_range(0.0..0.5);
    for _ in 0..rng.random_range(0..=200) {
        let row = attributes
            .iter()
            .map(|a| {
                if rng.random_bool(missing_rate) {
                    return Value::Missing;
                }
                match &a.kind {
                    AttributeKind::Numeric => Value::Number(stress_number(rng)),
                    AttributeKind::Nominal(levels) => Value::Nominal(rng.random_range(0..levels.len())),
                    AttributeKind::Date(_) if rng.random_bool(0.5) => Value::Str(format!(
                        "20{:02}-{:02}-{:02}T{:02}:{:02}:{:02}",
                        rng.random_range(0..30),
                        rng.random_range(1..13),
                        rng.random_range(1..29),
                        rng.random_range(0..24),
                        rng.random_range(0..60),
                        rng.random_range(0..60)
                    )),
                    _ => Value::Str(if rng.random_bool(0.05) { "?".into() } else { stress_text(rng, 12) }),
                }
            })
            .collect();
        rel.push_row(row).expect("row fits");
    }
    rel
}

fn arff_round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA4FF);
    let mut cells = 0usize;
    for i in 0..1000 {
        let rel = random_relation(&mut rng);
        cells += rel.num_rows() * rel.num_attributes();
        let text = rel.to_arff();
        let back = Relation::parse(&text).map_err(|e| format!("relation {i}: parse failed: {e}"))?;
        ensure(back == rel, || format!("relation {i} changed in the round-trip"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:.2?}"))?;
    Ok(format!("1000 relations, {cells} cells, {elapsed:.2?}"))
}

// ---------------------------------------------------------------------------
// 2. Task filters

struct TaskFacts {
    id: TaskId,
    instances: u64,
    features: u64,
    classes: u64,
    missing: u64,
    data_tags: BTreeSet<String>,
    tags: BTreeSet<String>,
    procedure: String,
}

/// Facts about every listable task, computed straight from the fixture data.
fn task_facts() -> Vec<TaskFacts> {
    let state = fixture_state();
    state
        .tasks
        .values()
        .filter_map(|task| {
            let stored = &state.datasets[&task.data_id];
            let desc = stored.description();
            if desc.status != DataStatus::Active {
                return None;
            }
            let rel = &stored.dataset().relation;
            let target = rel.attributes().iter().find(|a| a.name == desc.default_target_attribute)?;
            let missing = rel.rows().iter().flatten().filter(|v| matches!(v, Value::Missing)).count();
            Some(TaskFacts {
                id: task.task_id,
                instances: rel.rows().len() as u64,
                features: rel.attributes().len() as u64,
                classes: match &target.kind {
                    AttributeKind::Nominal(levels) => levels.len() as u64,
                    _ => 0,
                },
                missing: missing as u64,
                data_tags: desc.tags.clone(),
                tags: task.tags.clone(),
                procedure: task.estimation_procedure.name.clone(),
            })
        })
        .collect()
}

fn in_range(r: &Option<CountRange>, v: u64) -> bool {
    match r {
        None => true,
        Some(CountRange::Exact(x)) => v == *x,
        Some(CountRange::Between(lo, hi)) => *lo <= v && v <= *hi,
    }
}

fn brute_force(facts: &[TaskFacts], f: &TaskFilter) -> BTreeSet<TaskId> {
    facts
        .iter()
        .filter(|_| f.task_type.as_deref().is_none_or(|ty| ty == "Supervised Classification"))
        .filter(|t| in_range(&f.number_of_classes, t.classes))
        .filter(|t| in_range(&f.number_of_instances, t.instances))
        .filter(|t| in_range(&f.number_of_features, t.features))
        .filter(|t| in_range(&f.number_of_missing_values, t.missing))
        .filter(|t| f.data_tag.as_ref().is_none_or(|tag| t.data_tags.contains(tag)))
        .filter(|t| f.tag.as_ref().is_none_or(|tag| t.tags.contains(tag)))
        .filter(|t| f.estimation_procedure.as_ref().is_none_or(|p| *p == t.procedure))
        .map(|t| t.id)
        .collect()
}

fn random_range(rng: &mut ChaCha8Rng, pool: &[u64]) -> Option<CountRange> {
    if rng.random_bool(0.5) {
        return None;
    }
    let pick = |rng: &mut ChaCha8Rng| {
        let base = *pool.choose(rng).unwrap();
        match rng.random_range(0..4) {
            0 => base.saturating_sub(1),
            1 => base + 1,
            _ => base,
        }
    };
    if rng.random_bool(0.3) {
        Some(CountRange::Exact(pick(rng)))
    } else {
        let (a, b) = (pick(rng), pick(rng));
        Some(CountRange::Between(a.min(b), a.max(b)))
    }
}

fn random_task_filter(rng: &mut ChaCha8Rng, facts: &[TaskFacts]) -> TaskFilter {
    let column = |f: fn(&TaskFacts) -> u64| facts.iter().map(f).collect::<Vec<u64>>();
    let data_tags: Vec<String> = facts.iter().flat_map(|t| t.data_tags.iter().cloned()).collect();
    let tags: Vec<String> = facts.iter().flat_map(|t| t.tags.iter().cloned()).chain(["no-such-tag".into()]).collect();
    let procedures: Vec<String> = fixture_state().procedures.iter().map(|p| p.name.clone()).collect();
    let maybe = |rng: &mut ChaCha8Rng, pool: &[String], p: f64| {
        (rng.random_bool(p) && !pool.is_empty()).then(|| pool.choose(rng).unwrap().clone())
    };
    TaskFilter {
        task_type: rng.random_bool(0.2).then(|| "Supervised Classification".to_string()),
        number_of_classes: random_range(rng, &column(|t| t.classes)),
        number_of_instances: random_range(rng, &column(|t| t.instances)),
        number_of_features: random_range(rng, &column(|t| t.features)),
        number_of_missing_values: random_range(rng, &column(|t| t.missing)),
        data_tag: maybe(rng, &data_tags, 0.5),
        tag: maybe(rng, &tags, 0.15),
        estimation_procedure: maybe(rng, &procedures, 0.4),
        ..TaskFilter::default()
    }
}

fn filter_correctness() -> Outcome {
    let env = Env::new();
    let client = env.client();
    let facts = task_facts();
    let mut rng = ChaCha8Rng::seed_from_u64(0xF17E);
    let mut non_empty = 0;
    for i in 0..200 {
        let filter = random_task_filter(&mut rng, &facts);
        let expected = brute_force(&facts, &filter);
        let got: BTreeSet<TaskId> = client
            .list_tasks(&filter)
            .map_err(|e| format!("filter {i} ({filter:?}): {e}"))?
            .into_iter()
            .map(|t| t.task_id)
            .collect();
        ensure(got == expected, || format!("filter {i} ({filter:?}): hub {got:?}, brute force {expected:?}"))?;
        non_empty += usize::from(!expected.is_empty());
    }
    ensure(non_empty >= 20, || format!("only {non_empty} of 200 filters select anything"))?;

    let table1 = TaskFilter {
        data_tag: Some("uci".into()),
        number_of_classes: Some(CountRange::Exact(2)),
        number_of_missing_values: Some(CountRange::Exact(0)),
        number_of_instances: Some(CountRange::Between(100, 999)),
        estimation_procedure: Some("10-fold Crossvalidation".into()),
        ..TaskFilter::default()
    };
    let got: BTreeSet<u64> =
        client.list_tasks(&table1).map_err(|e| e.to_string())?.into_iter().map(|t| t.task_id.0).collect();
    let want: BTreeSet<u64> = [37, 39, 42, 49, 52, 57].into();
    ensure(got == want, || format!("case-study query returned {got:?}"))?;
    Ok(format!("200 random filters match ({non_empty} non-empty); case-study query gives {want:?}"))
}

// ---------------------------------------------------------------------------
// 3. Cache before network

fn cache_before_network() -> Outcome {
    let env = Env::new();
    let client = env.client();
    let first = client.get_dataset(DataId(15)).map_err(|e| e.to_string())?;
    let second = client.get_dataset(DataId(15)).map_err(|e| e.to_string())?;
    ensure(first == second, || "cached copy differs".into())?;
    let after_two = env.hub.request_count();
    ensure(after_two == 1, || format!("two gets made {after_two} requests: {:?}", env.hub.request_counts()))?;
    client.clear_cache().map_err(|e| e.to_string())?;
    client.get_dataset(DataId(15)).map_err(|e| e.to_string())?;
    let after_clear = env.hub.request_count();
    ensure(after_clear == 2, || format!("after clearing the cache: {after_clear} requests"))?;
    Ok(format!("requests: {after_two} after two gets, {after_clear} after clear + get"))
}

// ---------------------------------------------------------------------------
// 4. CV split invariants

fn spread(counts: impl Iterator<Item = usize>) -> usize {
    let v: Vec<usize> = counts.collect();
    v.iter().max().unwrap() - v.iter().min().unwrap()
}

fn cv_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC5);
    let mut stratified_cases = 0;
    for case in 0..100 {
        let n = rng.random_range(10..=2000);
        let folds = *[2usize, 5, 10].choose(&mut rng).unwrap();
        let stratified = rng.random_bool(0.5);
        let repeats = rng.random_range(1..=3);
        let n_classes = rng.random_range(2..=6);
        let skew = rng.random_range(0.0..3.0f64);
        let labels: Vec<usize> =
            (0..n).map(|_| ((rng.random::<f64>().powf(1.0 + skew)) * n_classes as f64) as usize).collect();
        let seed = rng.random();
        let ctx = || format!("case {case}: n={n} folds={folds} stratified={stratified}");
        let splits =
            make_cv_splits(n, Some(&labels), folds, repeats, stratified, seed).map_err(|e| format!("{}: {e}", ctx()))?;
        ensure(splits.repeats.len() == repeats, || format!("{}: repeats", ctx()))?;
        for repeat in &splits.repeats {
            ensure(repeat.len() == folds, || format!("{}: fold count", ctx()))?;
            let mut owner = vec![usize::MAX; n];
            for (f, fold) in repeat.iter().enumerate() {
                for &row in &fold.test {
                    ensure(row < n && owner[row] == usize::MAX, || format!("{}: row {row} tested twice", ctx()))?;
                    owner[row] = f;
                }
            }
            ensure(owner.iter().all(|&o| o != usize::MAX), || format!("{}: a row is never tested", ctx()))?;
            for (f, fold) in repeat.iter().enumerate() {
                let train: BTreeSet<usize> = fold.train.iter().copied().collect();
                let complement: BTreeSet<usize> = (0..n).filter(|&r| owner[r] != f).collect();
                ensure(train.len() == fold.train.len() && train == complement, || {
                    format!("{}: fold {f} train is not the complement of test", ctx())
                })?;
            }
            let s = spread(repeat.iter().map(|f| f.test.len()));
            ensure(s <= 1, || format!("{}: fold sizes spread {s}", ctx()))?;
            if stratified {
                for c in 0..n_classes {
                    let s = spread(repeat.iter().map(|f| f.test.iter().filter(|&&r| labels[r] == c).count()));
                    ensure(s <= 1, || format!("{}: class {c} spread {s}", ctx()))?;
                }
            }
        }
        stratified_cases += usize::from(stratified);
    }
    Ok(format!("100 configurations ({stratified_cases} stratified)"))
}

// ---------------------------------------------------------------------------
// 5. Evaluation oracles

fn pairwise_auc(truth: &[bool], scores: &[f64]) -> Option<f64> {
    let mut wins = 0.0;
    let mut pairs = 0u64;
    for (i, &ti) in truth.iter().enumerate() {
        for (j, &tj) in truth.iter().enumerate() {
            if ti && !tj {
                pairs += 1;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

fn check_auc(truth: &[bool], scores: &[f64]) -> Result<(), String> {
    let (got, want) = (auc_rank(truth, scores), pairwise_auc(truth, scores));
    let ok = match (got, want) {
        (Some(a), Some(b)) => (a - b).abs() <= TOL,
        (None, None) => true,
        _ => false,
    };
    ensure(ok, || format!("truth {truth:?} scores {scores:?}: rank {got:?}, pairwise {want:?}"))
}

fn bits(mask: u32, n: usize) -> Vec<bool> {
    (0..n).map(|i| mask >> i & 1 == 1).collect()
}

fn cv_task(n: usize, folds: usize, seed: u64) -> Task {
    Task {
        task_id: TaskId(1),
        task_type: TaskType::SupervisedClassification,
        data_id: DataId(1),
        data_name: "synthetic".into(),
        target_feature: "class".into(),
        estimation_procedure: EstimationProcedure {
            id: 1,
            name: format!("{folds}-fold Crossvalidation"),
            kind: EstimationKind::Crossvalidation,
            folds: folds as u32,
            repeats: 1,
            stratified: false,
        },
        evaluation_measure: PREDICTIVE_ACCURACY.into(),
        tags: BTreeSet::new(),
        splits: make_cv_splits(n, None, folds, 1, false, seed).expect("valid splits"),
    }
}

fn evaluation_oracles() -> Outcome {
    let mut cases = 0usize;
    // Every truth vector with every score vector over a small grid (ties included).
    let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
    for n in 1..=5usize {
        let combos = grid.len().pow(n as u32);
        for mask in 0..1u32 << n {
            let truth = bits(mask, n);
            for code in 0..combos {
                let scores: Vec<f64> = (0..n).map(|i| grid[code / grid.len().pow(i as u32) % grid.len()]).collect();
                check_auc(&truth, &scores)?;
                cases += 1;
            }
        }
    }
    // Every truth vector up to 12 rows with generated tied and untied scores.
    let mut rng = ChaCha8Rng::seed_from_u64(0xA0C);
    for n in 6..=12usize {
        for mask in 0..1u32 << n {
            let truth = bits(mask, n);
            let tied: Vec<f64> = (0..n).map(|_| *grid.choose(&mut rng).unwrap()).collect();
            let coarse: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..3u8)) / 2.0).collect();
            let fine: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            for scores in [tied, coarse, fine] {
                check_auc(&truth, &scores)?;
                cases += 1;
            }
        }
    }
    ensure(cases >= 10_000, || format!("only {cases} AUC cases"))?;

    // Accuracy (and binary AUC) of whole prediction tables against a direct count.
    let mut tables = 0;
    for t in 0..1000u64 {
        let n = rng.random_range(10..=300);
        let folds = *[2usize, 3, 5, 10].choose(&mut rng).unwrap();
        let k = rng.random_range(2..=5);
        let labels: Vec<String> = (0..k).map(|c| format!("c{c}")).collect();
        let task = cv_task(n, folds, t);
        let mut preds = Vec::new();
        let mut expected_acc = Vec::new();
        let mut expected_auc = Vec::new();
        for (r, f, fold) in task.splits.iter() {
            let mut correct = 0usize;
            let mut truth_pos = Vec::new();
            let mut scores = Vec::new();
            for &row in &fold.test {
                let truth = rng.random_range(0..k);
                let predicted = if rng.random_bool(0.6) { truth } else { rng.random_range(0..k) };
                let mut conf: Vec<f64> = (0..k).map(|_| f64::from(rng.random_range(0..5u8)) / 4.0).collect();
                let total: f64 = conf.iter().sum();
                if total > 0.0 {
                    conf.iter_mut().for_each(|c| *c /= total);
                }
                correct += usize::from(predicted == truth);
                truth_pos.push(truth == 1);
                scores.push(conf.get(1).copied().unwrap_or(0.0));
                preds.push(PredictionRow {
                    repeat: r,
                    fold: f,
                    row_id: row,
                    predicted: labels[predicted].clone(),
                    truth: labels[truth].clone(),
                    confidences: conf,
                });
            }
            expected_acc.push(correct as f64 / fold.test.len() as f64);
            expected_auc.push(pairwise_auc(&truth_pos, &scores));
        }
        let evals = evaluate_predictions(&preds, &labels, &task).map_err(|e| format!("table {t}: {e}"))?;
        let acc = &evals[PREDICTIVE_ACCURACY];
        let mean = expected_acc.iter().sum::<f64>() / expected_acc.len() as f64;
        ensure((acc.value - mean).abs() <= TOL, || format!("table {t}: accuracy {} vs {mean}", acc.value))?;
        for (got, want) in acc.per_fold.iter().zip(&expected_acc) {
            ensure((got - want).abs() <= TOL, || format!("table {t}: fold accuracy {got} vs {want}"))?;
        }
        if k == 2 && expected_auc.iter().all(Option::is_some) {
            let auc = evals.get(AREA_UNDER_ROC_CURVE).ok_or_else(|| format!("table {t}: no AUC"))?;
            for (got, want) in auc.per_fold.iter().zip(&expected_auc) {
                ensure((got - want.unwrap()).abs() <= TOL, || format!("table {t}: fold AUC {got} vs {want:?}"))?;
            }
        }
        tables += 1;
    }
    Ok(format!("{cases} AUC cases, {tables} accuracy tables"))
}

// ---------------------------------------------------------------------------
// 6. Split search

/// Per-feature (value x class) count table; every dataset with the same
/// tables has the same root split, so enumerating tables covers all datasets.
type Table = [[u32; 2]; 3];

fn compositions(total: u32) -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    for a in 0..=total {
        for b in 0..=total - a {
            out.push([a, b, total - a - b]);
        }
    }
    out
}

fn tables_for(n0: u32, n1: u32) -> Vec<Table> {
    let (c0, c1) = (compositions(n0), compositions(n1));
    let mut out = Vec::with_capacity(c0.len() * c1.len());
    for a in &c0 {
        for b in &c1 {
            out.push([[a[0], b[0]], [a[1], b[1]], [a[2], b[2]]]);
        }
    }
    out
}

fn gini(counts: [u32; 2]) -> f64 {
    let n = f64::from(counts[0] + counts[1]);
    1.0 - (f64::from(counts[0]) / n).powi(2) - (f64::from(counts[1]) / n).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Rule {
    Threshold(f64),
    Level(u32),
}

/// All admissible root splits in tie-break order with their impurity decrease.
fn oracle_splits(tables: &[Table], nominal: &[bool]) -> Vec<(usize, Rule, f64)> {
    let total = [0, 1].map(|c| tables[0].iter().map(|row| row[c]).sum::<u32>());
    let n = f64::from(total[0] + total[1]);
    let decrease = |left: [u32; 2]| {
        let right = [total[0] - left[0], total[1] - left[1]];
        let (nl, nr) = (f64::from(left[0] + left[1]), f64::from(right[0] + right[1]));
        gini(total) - nl / n * gini(left) - nr / n * gini(right)
    };
    let mut out = Vec::new();
    for (f, table) in tables.iter().enumerate() {
        let present: Vec<usize> = (0..3).filter(|&v| table[v][0] + table[v][1] > 0).collect();
        if nominal[f] {
            for &v in &present {
                if present.len() > 1 {
                    out.push((f, Rule::Level(v as u32), decrease(table[v])));
                }
            }
        } else {
            for w in present.windows(2) {
                let left = [0, 1].map(|c| (0..=w[0]).map(|v| table[v][c]).sum::<u32>());
                out.push((f, Rule::Threshold((w[0] + w[1]) as f64 / 2.0), decrease(left)));
            }
        }
    }
    out
}

fn dataset_from(tables: &[Table], nominal: &[bool]) -> (TrainingData, Vec<usize>) {
    let mut columns = vec![Vec::new(); tables.len()];
    let mut labels = Vec::new();
    for c in 0..2 {
        for (f, table) in tables.iter().enumerate() {
            for (v, row) in table.iter().enumerate() {
                columns[f].extend(std::iter::repeat_n(v as u32, row[c] as usize));
            }
        }
        labels.extend(std::iter::repeat_n(c, tables[0].iter().map(|r| r[c] as usize).sum()));
    }
    let features = columns
        .into_iter()
        .zip(nominal)
        .map(|(codes, &nom)| {
            if nom {
                Feature::Nominal { n_levels: 3, codes }
            } else {
                Feature::Numeric(codes.into_iter().map(f64::from).collect())
            }
        })
        .collect();
    let rows = (0..labels.len()).collect();
    (TrainingData::from_parts(features, labels, 2), rows)
}

fn check_root(tables: &[Table], nominal: &[bool]) -> Result<(), String> {
    let (data, rows) = dataset_from(tables, nominal);
    let params = TreeParams { max_depth: 1, min_split: 2, min_leaf: 1 };
    let tree = fit_tree(&data, &rows, &params, None);
    let splits = oracle_splits(tables, nominal);
    let best = splits.iter().map(|s| s.2).fold(0.0f64, f64::max);
    let ctx = || format!("tables {tables:?} nominal {nominal:?}");
    match (&tree.root, best > TOL) {
        (Node::Leaf { .. }, false) => Ok(()),
        (Node::Leaf { .. }, true) => Err(format!("{}: no split, optimum {best}", ctx())),
        (Node::Split { .. }, false) => Err(format!("{}: split without positive decrease", ctx())),
        (Node::Split { feature, rule, gain, .. }, true) => {
            let first = splits.iter().find(|s| s.2 >= best - TOL).unwrap();
            let rule = match *rule {
                SplitRule::Threshold(t) => Rule::Threshold(t),
                SplitRule::Level(l) => Rule::Level(l),
            };
            ensure((gain - best).abs() <= TOL, || format!("{}: gain {gain}, optimum {best}", ctx()))?;
            ensure((*feature, rule) == (first.0, first.1), || {
                format!("{}: chose ({feature}, {rule:?}), first optimum ({}, {:?})", ctx(), first.0, first.1)
            })
        }
    }
}

fn kind_patterns(d: usize) -> Vec<Vec<bool>> {
    (0..1u32 << d).map(|m| bits(m, d)).collect()
}

fn split_search() -> Outcome {
    let mut cases = 0usize;
    // One and two features: every table combination, every kind pattern, n <= 8.
    for d in 1..=2usize {
        for n in 1..=8u32 {
            for n0 in 0..=n {
                let tables = tables_for(n0, n - n0);
                let mut tuple = vec![0usize; d];
                loop {
                    let chosen: Vec<Table> = tuple.iter().map(|&i| tables[i]).collect();
                    for pattern in kind_patterns(d) {
                        check_root(&chosen, &pattern)?;
                        cases += 1;
                    }
                    if !advance(&mut tuple, tables.len()) {
                        break;
                    }
                }
            }
        }
    }
    // Three features: every table combination up to 6 rows (kind pattern
    // rotating through all eight), then a seeded sample at 7 and 8 rows.
    let patterns = kind_patterns(3);
    for n in 1..=6u32 {
        for n0 in 0..=n {
            let tables = tables_for(n0, n - n0);
            let mut tuple = vec![0usize; 3];
            loop {
                let chosen: Vec<Table> = tuple.iter().map(|&i| tables[i]).collect();
                check_root(&chosen, &patterns[cases % patterns.len()])?;
                cases += 1;
                if !advance(&mut tuple, tables.len()) {
                    break;
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    for _ in 0..200_000 {
        let n = rng.random_range(7..=8u32);
        let n0 = rng.random_range(0..=n);
        let tables = tables_for(n0, n - n0);
        let chosen: Vec<Table> = (0..3).map(|_| *tables.choose(&mut rng).unwrap()).collect();
        check_root(&chosen, patterns.choose(&mut rng).unwrap())?;
        cases += 1;
    }
    Ok(format!("{cases} root-split cases match the exhaustive optimum"))
}

fn advance(tuple: &mut [usize], base: usize) -> bool {
    for digit in tuple.iter_mut() {
        *digit += 1;
        if *digit < base {
            return true;
        }
        *digit = 0;
    }
    false
}

// ---------------------------------------------------------------------------
// 7. Case study

const FOREST: &str = "classif.randomForest(ntree=50)";
const TREE: &str = "classif.rpart";

fn case_study() -> Outcome {
    let env = Env::new();
    let client = env.client();
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let opts = BenchOptions { out_dir: out.path().to_path_buf(), jobs: 1, seed: 42, ..BenchOptions::default() };
    let start = Instant::now();
    let report = bench::run_bench(&client, &opts).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:.1?}"))?;

    let tasks: BTreeSet<u64> = report.tasks.iter().map(|t| t.0).collect();
    ensure(tasks == [37, 39, 42, 49, 52, 57].into(), || format!("tasks {tasks:?}"))?;
    ensure(report.learners.len() == 6, || format!("learners {:?}", report.learners))?;
    for needed in [FOREST, "classif.rpart.bagged(bw_iters=50)", TREE] {
        ensure(report.learners.iter().any(|l| l == needed), || format!("{needed} missing from {:?}", report.learners))?;
    }

    let mean_of = |task: TaskId, learner: &str| -> Option<f64> {
        let cell = report.cells.iter().find(|c| c.task == task && c.learner == learner)?;
        let folds = &cell.run.evaluations.get(PREDICTIVE_ACCURACY)?.per_fold;
        Some(folds.iter().sum::<f64>() / folds.len() as f64)
    };
    let mut wins = 0;
    for &t in &report.tasks {
        let (f, r) = (mean_of(t, FOREST).ok_or("no forest cell")?, mean_of(t, TREE).ok_or("no tree cell")?);
        wins += usize::from(f >= r);
    }
    ensure(wins >= 4, || format!("forest at least as accurate as the single tree on only {wins} of 6 tasks"))?;

    ensure(report.uploaded.len() == 36, || format!("{} runs uploaded", report.uploaded.len()))?;
    let listed = client
        .list_run_evaluations(&RunSelector { tag: Some(bench::STUDY_TAG.into()), ..RunSelector::default() })
        .map_err(|e| e.to_string())?;
    let by_id: BTreeMap<u64, _> = listed.iter().map(|e| (e.run_id.0, e)).collect();
    for cell in &report.cells {
        let id = cell.run.run_id;
        ensure(report.uploaded.contains(&id), || format!("cell run {id} is not among the uploads"))?;
        let row = by_id.get(&id.0).ok_or_else(|| format!("run {id} not listed under the study tag"))?;
        ensure(row.task_id == cell.task, || format!("run {id}: task {} vs {}", row.task_id, cell.task))?;
        ensure(row.evaluations == cell.run.evaluations, || format!("run {id}: hub and local evaluations differ"))?;
    }
    Ok(format!(
        "{:.1} s; forest >= tree on {wins}/6 tasks; 36 runs listed under {} with identical evaluations",
        elapsed.as_secs_f64(),
        bench::STUDY_TAG
    ))
}

// ---------------------------------------------------------------------------
// 8. Flow versioning

fn flow_versioning() -> Outcome {
    let env = Env::new();
    let client = env.client();
    let spec = LearnerSpec::bagged_tree(25).map_err(|e| e.to_string())?;
    let first = client.upload_flow(&spec).map_err(|e| e.to_string())?;
    let again = client.upload_flow(&spec).map_err(|e| e.to_string())?;
    ensure(first.flow_id == again.flow_id && again.already_exists, || {
        format!("second upload gave {again:?}, first {first:?}")
    })?;
    let mut flow = client.get_flow(first.flow_id).map_err(|e| e.to_string())?;
    flow.external_version.push_str(".1");
    let bumped = client.upload_flow_description(&flow).map_err(|e| e.to_string())?;
    ensure(bumped.flow_id != first.flow_id && !bumped.already_exists, || format!("bumped upload gave {bumped:?}"))?;
    ensure(bumped.version == first.version + 1, || format!("version {} after {}", bumped.version, first.version))?;
    let stored = client.get_flow(bumped.flow_id).map_err(|e| e.to_string())?;
    ensure(stored.version == bumped.version && stored.name == flow.name, || "stored flow mismatch".into())?;
    Ok(format!(
        "same flow -> id {} twice; bumped external version -> id {} version {}",
        first.flow_id, bumped.flow_id, bumped.version
    ))
}

// ---------------------------------------------------------------------------
// 9. Tag lifecycle

fn tag_lifecycle() -> Outcome {
    let env = Env::new();
    let client = env.client();
    let tag = "acceptance-lifecycle";
    let tagged = |c: &openml::client::Client| -> Result<bool, String> {
        let rows = c
            .list_datasets(&DataFilter { tag: Some(tag.into()), ..DataFilter::default() })
            .map_err(|e| e.to_string())?;
        Ok(rows.iter().any(|d| d.data_id == DataId(15)))
    };
    ensure(!tagged(&client)?, || "tag present before tagging".into())?;
    client.tag(EntityKind::Dataset, 15, tag).map_err(|e| e.to_string())?;
    ensure(tagged(&client)?, || "data set not listed under its new tag".into())?;
    client.untag(EntityKind::Dataset, 15, tag).map_err(|e| e.to_string())?;
    ensure(!tagged(&client)?, || "data set still listed after untag".into())?;

    let run = fixture::CASE_STUDY_RUN;
    let runs_tagged = |c: &openml::client::Client| -> Result<bool, String> {
        let rows = c
            .list_runs(&RunSelector { tag: Some(tag.into()), ..RunSelector::default() })
            .map_err(|e| e.to_string())?;
        Ok(rows.iter().any(|r| r.run_id == run))
    };
    client.tag(EntityKind::Run, run.0, tag).map_err(|e| e.to_string())?;
    ensure(runs_tagged(&client)?, || "run not listed under its new tag".into())?;
    client.untag(EntityKind::Run, run.0, tag).map_err(|e| e.to_string())?;
    ensure(!runs_tagged(&client)?, || "run still listed after untag".into())?;

    // A tag someone else created cannot be removed.
    match client.untag(EntityKind::Run, run.0, bench::STUDY_TAG) {
        Err(ClientError::Permission(_)) => {}
        other => return Err(format!("untag of a foreign tag gave {other:?}")),
    }
    client.tag(EntityKind::Dataset, 15, tag).map_err(|e| e.to_string())?;
    match env.client_with(Some(fixture::OTHER_TEST_KEY)).untag(EntityKind::Dataset, 15, tag) {
        Err(ClientError::Permission(_)) => {}
        other => return Err(format!("another user's untag gave {other:?}")),
    }
    ensure(tagged(&client)?, || "foreign untag removed the tag".into())?;
    Ok("tag -> listed -> untag -> absent for data and runs; foreign untag -> permission error".into())
}

// ---------------------------------------------------------------------------
// 10. Determinism across worker counts

fn bench_cli(home: &Path, out: &Path, jobs: usize) -> Result<Vec<u8>, String> {
    let output = Command::new(env!("CARGO_BIN_EXE_openml"))
        .arg("--home")
        .arg(home)
        .args(["bench", "--seed", "42", "--jobs", &jobs.to_string(), "--out"])
        .arg(out)
        .output()
        .map_err(|e| format!("cannot start the CLI: {e}"))?;
    ensure(output.status.success(), || {
        format!("bench --jobs {jobs} failed: {}", String::from_utf8_lossy(&output.stderr))
    })?;
    std::fs::read(out.join("results.csv")).map_err(|e| format!("results.csv: {e}"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let one = bench_cli(dir.path(), &dir.path().join("jobs1"), 1)?;
    let eight = bench_cli(dir.path(), &dir.path().join("jobs8"), 8)?;
    ensure(!one.is_empty(), || "empty results.csv".into())?;
    ensure(one == eight, || "results.csv differs between --jobs 1 and --jobs 8".into())?;
    let lines = one.iter().filter(|&&b| b == b'\n').count();
    Ok(format!("results.csv identical ({} bytes, {lines} lines)", one.len()))
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("arff round-trip", arff_round_trip),
        ("filter correctness", filter_correctness),
        ("cache before network", cache_before_network),
        ("cv split invariants", cv_invariants),
        ("evaluation oracles", evaluation_oracles),
        ("split-search oracle", split_search),
        ("case study", case_study),
        ("flow versioning", flow_versioning),
        ("tag lifecycle", tag_lifecycle),
        ("determinism", determinism),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {:>2} {name} ({secs:.1} s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {:>2} {name} ({secs:.1} s): {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
