//! The case-study benchmark: six learners on the six small binary UCI tasks,
//! with every run uploaded, tagged and checked against the hub.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::client::{Client, ClientError, CountRange, RunSelector, TaskFilter};
use crate::learners::{derive_seed, LearnerError, LearnerSpec};
use crate::model::{DataSet, Evaluation, Run, RunId, Task, TaskId};
use crate::runner::{convert_runs_to_benchmark, run_task, RunnerError, PREDICTIVE_ACCURACY};

pub const STUDY_TAG: &str = "study_30";
pub const CASE_STUDY: &str = "case-study";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown suite '{0}' (available: case-study)")]
    UnknownSuite(String),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error("task {task}, {learner}: {source}")]
    Run { task: TaskId, learner: String, source: RunnerError },
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error("cannot build a pool of {0} threads")]
    Pool(usize),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("uploaded runs failed verification: {0}")]
    Verification(String),
}

/// Task filter of the case study: binary, complete UCI data with 100 to 999
/// instances under 10-fold cross-validation.
pub fn case_study_filter() -> TaskFilter {
    TaskFilter {
        data_tag: Some("uci".into()),
        number_of_classes: Some(CountRange::Exact(2)),
        number_of_missing_values: Some(CountRange::Exact(0)),
        number_of_instances: Some(CountRange::Between(100, 999)),
        estimation_procedure: Some("10-fold Crossvalidation".into()),
        ..TaskFilter::default()
    }
}

pub fn case_study_learners() -> Vec<LearnerSpec> {
    let build = || -> Result<Vec<LearnerSpec>, LearnerError> {
        Ok(vec![
            LearnerSpec::forest(50)?,
            LearnerSpec::bagged_tree(50)?,
            LearnerSpec::bagged_tree(50)?.with("min_split", 2)?.with("min_leaf", 1)?,
            LearnerSpec::tree(),
            LearnerSpec::tree().with("max_depth", 3)?,
            LearnerSpec::majority(),
        ])
    };
    build().expect("valid built-in settings")
}

pub fn suite_learners(suite: &str) -> Result<Vec<LearnerSpec>, BenchError> {
    match suite {
        CASE_STUDY => Ok(case_study_learners()),
        other => Err(BenchError::UnknownSuite(other.to_string())),
    }
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub suite: String,
    pub seed: u64,
    pub jobs: usize,
    pub out_dir: PathBuf,
    /// Upload flows and runs, tag them and compare the hub's evaluations.
    pub upload: bool,
    pub tag: String,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            suite: CASE_STUDY.into(),
            seed: 42,
            jobs: 1,
            out_dir: PathBuf::from("bench-out"),
            upload: true,
            tag: STUDY_TAG.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchCell {
    pub task: TaskId,
    pub data_name: String,
    pub learner: String,
    pub run: Run,
}

impl BenchCell {
    pub fn accuracy(&self) -> &Evaluation {
        &self.run.evaluations[PREDICTIVE_ACCURACY]
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub tasks: Vec<TaskId>,
    pub learners: Vec<String>,
    /// Task-major, learners in suite order.
    pub cells: Vec<BenchCell>,
    pub uploaded: Vec<RunId>,
    /// Uploaded runs found under the tag with identical evaluations.
    pub verified: usize,
    pub elapsed: Duration,
    pub files: Vec<PathBuf>,
}

impl BenchReport {
    pub fn mean(&self, task: TaskId, learner: &str) -> Option<f64> {
        self.cells.iter().find(|c| c.task == task && c.learner == learner).map(|c| c.accuracy().value)
    }

    /// Tasks on which learner `a` scores at least as well as `b`.
    pub fn wins(&self, a: &str, b: &str) -> usize {
        self.tasks.iter().filter(|&&t| matches!((self.mean(t, a), self.mean(t, b)), (Some(x), Some(y)) if x >= y)).count()
    }
}

/// Runs the suite against `client`'s hub and writes `results.csv`,
/// `summary.md` and `accuracy.svg` into the output directory.
pub fn run_bench(client: &Client, opts: &BenchOptions) -> Result<BenchReport, BenchError> {
    let start = Instant::now();
    let learners = suite_learners(&opts.suite)?;
    let mut task_ids: Vec<TaskId> = client.list_tasks(&case_study_filter())?.iter().map(|t| t.task_id).collect();
    task_ids.sort();
    log::info!("benchmark tasks: {task_ids:?}");

    let mut inputs: Vec<(Task, DataSet)> = Vec::new();
    for &id in &task_ids {
        let task = client.get_task(id)?;
        let data = client.get_dataset(task.data_id)?;
        inputs.push((task, data));
    }

    let flows = if opts.upload {
        learners.iter().map(|l| client.upload_flow(l).map(|f| Some(f.flow_id))).collect::<Result<Vec<_>, _>>()?
    } else {
        vec![None; learners.len()]
    };

    let grid: Vec<(usize, usize)> = (0..inputs.len()).flat_map(|t| (0..learners.len()).map(move |l| (t, l))).collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(opts.jobs.max(1)).build().map_err(|_| BenchError::Pool(opts.jobs))?;
    let runs: Vec<Result<Run, BenchError>> = pool.install(|| {
        grid.par_iter()
            .map(|&(t, l)| {
                let (task, data) = &inputs[t];
                let seed = derive_seed(opts.seed, &[task.task_id.0, l as u64]);
                run_task(task, data, &learners[l], seed).map_err(|source| BenchError::Run {
                    task: task.task_id,
                    learner: learners[l].label(),
                    source,
                })
            })
            .collect()
    });

    let mut cells = Vec::with_capacity(grid.len());
    for (&(t, l), run) in grid.iter().zip(runs) {
        let mut run = run?;
        if let Some(id) = flows[l] {
            run.flow_id = id;
        }
        cells.push(BenchCell {
            task: inputs[t].0.task_id,
            data_name: inputs[t].0.data_name.clone(),
            learner: learners[l].label(),
            run,
        });
    }
    convert_runs_to_benchmark(&cells.iter().map(|c| c.run.clone()).collect::<Vec<_>>())?;

    let mut uploaded = Vec::new();
    let mut verified = 0;
    if opts.upload {
        for cell in &mut cells {
            cell.run.tags.insert(opts.tag.clone());
            let id = client.upload_run(&cell.run)?;
            cell.run.run_id = id;
            uploaded.push(id);
        }
        verified = verify(client, &opts.tag, &cells)?;
    }

    fs::create_dir_all(&opts.out_dir).map_err(|source| BenchError::Io { path: opts.out_dir.clone(), source })?;
    let mut report = BenchReport {
        tasks: task_ids,
        learners: learners.iter().map(LearnerSpec::label).collect(),
        cells,
        uploaded,
        verified,
        elapsed: Duration::ZERO,
        files: Vec::new(),
    };
    report.elapsed = start.elapsed();
    let outputs = [
        ("results.csv", results_csv(&report)),
        ("summary.md", summary_md(&report, opts)),
        ("accuracy.svg", accuracy_svg(&report)),
    ];
    for (name, body) in outputs {
        let path = opts.out_dir.join(name);
        write(&path, &body)?;
        report.files.push(path);
    }
    Ok(report)
}

fn write(path: &Path, body: &str) -> Result<(), BenchError> {
    fs::write(path, body).map_err(|source| BenchError::Io { path: path.to_path_buf(), source })
}

/// Checks that every uploaded run is listed under `tag` with exactly the
/// locally computed evaluations. Other runs under the tag are ignored.
fn verify(client: &Client, tag: &str, cells: &[BenchCell]) -> Result<usize, BenchError> {
    let listed = client.list_run_evaluations(&RunSelector { tag: Some(tag.into()), ..Default::default() })?;
    let by_id: BTreeMap<RunId, _> = listed.iter().map(|e| (e.run_id, e)).collect();
    let mut problems = Vec::new();
    for cell in cells {
        match by_id.get(&cell.run.run_id) {
            None => problems.push(format!("run {} not listed under '{tag}'", cell.run.run_id)),
            Some(row) if row.evaluations != cell.run.evaluations => {
                problems.push(format!("run {}: hub evaluations differ from local ones", cell.run.run_id))
            }
            Some(_) => {}
        }
    }
    if problems.is_empty() {
        Ok(cells.len())
    } else {
        Err(BenchError::Verification(problems.join("; ")))
    }
}

/// One line per task, learner and fold. Contains nothing that depends on
/// the hub's id assignment, so equal seeds give identical files.
pub fn results_csv(report: &BenchReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["task", "data_name", "learner", "fold", "accuracy"]).expect("in-memory write");
    for cell in &report.cells {
        for (fold, acc) in cell.accuracy().per_fold.iter().enumerate() {
            let record = [cell.task.to_string(), cell.data_name.clone(), cell.learner.clone(), fold.to_string(), acc.to_string()];
            w.write_record(&record).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn summary_md(report: &BenchReport, opts: &BenchOptions) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Benchmark: {}\n", opts.suite);
    let _ = writeln!(s, "Seed {}, {} worker thread(s), {:.1} s.\n", opts.seed, opts.jobs.max(1), report.elapsed.as_secs_f64());
    let _ = writeln!(s, "Mean 10-fold accuracy:\n");
    let _ = write!(s, "| task | data |");
    for l in &report.learners {
        let _ = write!(s, " {l} |");
    }
    let _ = write!(s, "\n|---:|---|");
    for _ in &report.learners {
        let _ = write!(s, "---:|");
    }
    s.push('\n');
    for &t in &report.tasks {
        let name = report.cells.iter().find(|c| c.task == t).map_or("", |c| c.data_name.as_str());
        let _ = write!(s, "| {t} | {name} |");
        for l in &report.learners {
            let _ = write!(s, " {:.4} |", report.mean(t, l).unwrap_or(f64::NAN));
        }
        s.push('\n');
    }
    if let (Some(forest), Some(tree)) = (report.learners.first(), report.learners.get(3)) {
        let _ = writeln!(s, "\n{forest} scores at least as well as {tree} on {} of {} tasks.", report.wins(forest, tree), report.tasks.len());
    }
    if !report.uploaded.is_empty() {
        let first = report.uploaded.first().expect("non-empty");
        let last = report.uploaded.last().expect("non-empty");
        let _ = writeln!(
            s,
            "\nUploaded {} runs (ids {first} to {last}) tagged `{}`; {} matched the hub's evaluations.",
            report.uploaded.len(),
            opts.tag,
            report.verified
        );
    }
    s
}

const PALETTE: [&str; 8] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"];

/// Per-task panels with one column of fold accuracies per learner, a bar at
/// each mean and a line joining the means.
pub fn accuracy_svg(report: &BenchReport) -> String {
    let (panel_w, panel_h, cols) = (300.0, 220.0, 3usize);
    let rows = report.tasks.len().div_ceil(cols).max(1);
    let legend_h = 20.0 * report.learners.len() as f64 + 10.0;
    let width = panel_w * cols as f64;
    let height = panel_h * rows as f64 + legend_h;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, &task) in report.tasks.iter().enumerate() {
        let x0 = panel_w * (i % cols) as f64;
        let y0 = panel_h * (i / cols) as f64;
        let (left, top, plot_w, plot_h) = (x0 + 40.0, y0 + 25.0, panel_w - 55.0, panel_h - 50.0);
        let cells: Vec<&BenchCell> = report.cells.iter().filter(|c| c.task == task).collect();
        let lo = cells
            .iter()
            .flat_map(|c| c.accuracy().per_fold.iter().copied())
            .fold(1.0f64, f64::min)
            .min(0.9);
        let lo = (lo * 10.0).floor() / 10.0;
        let y = |v: f64| top + plot_h * (1.0 - (v - lo) / (1.0 - lo));
        let name = cells.first().map_or("", |c| c.data_name.as_str());
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-weight="bold">task {task}: {name}</text>"#, x0 + panel_w / 2.0, y0 + 15.0);
        let _ = writeln!(s, r##"<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#999"/>"##);
        for k in 0..=2 {
            let v = lo + (1.0 - lo) * k as f64 / 2.0;
            let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.2}</text>"#, left - 4.0, y(v) + 4.0);
        }
        let step = plot_w / cells.len().max(1) as f64;
        let means: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(j, c)| format!("{:.1},{:.1}", left + step * (j as f64 + 0.5), y(c.accuracy().value)))
            .collect();
        let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#333" stroke-dasharray="3,2"/>"##, means.join(" "));
        for (j, cell) in cells.iter().enumerate() {
            let cx = left + step * (j as f64 + 0.5);
            let colour = PALETTE[j % PALETTE.len()];
            for &v in &cell.accuracy().per_fold {
                let _ = writeln!(s, r#"<circle cx="{cx:.1}" cy="{:.1}" r="2.5" fill="{colour}" fill-opacity="0.6"/>"#, y(v));
            }
            let m = y(cell.accuracy().value);
            let _ = writeln!(s, r#"<line x1="{:.1}" x2="{:.1}" y1="{m:.1}" y2="{m:.1}" stroke="{colour}" stroke-width="2"/>"#, cx - step * 0.35, cx + step * 0.35);
        }
    }
    let ly = panel_h * rows as f64;
    for (j, l) in report.learners.iter().enumerate() {
        let yy = ly + 15.0 + 20.0 * j as f64;
        let colour = PALETTE[j % PALETTE.len()];
        let _ = writeln!(s, r#"<rect x="20" y="{}" width="12" height="12" fill="{colour}"/>"#, yy - 10.0);
        let _ = writeln!(s, r#"<text x="40" y="{yy}">{}</text>"#, escape(l));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roster_labels() {
        let labels: Vec<String> = case_study_learners().iter().map(LearnerSpec::label).collect();
        assert_eq!(
            labels,
            [
                "classif.randomForest(ntree=50)",
                "classif.rpart.bagged(bw_iters=50)",
                "classif.rpart.bagged(bw_iters=50,min_leaf=1,min_split=2)",
                "classif.rpart",
                "classif.rpart(max_depth=3)",
                "classif.featureless",
            ]
        );
    }

    #[test]
    fn unknown_suite() {
        assert!(matches!(suite_learners("nope"), Err(BenchError::UnknownSuite(_))));
    }
}
