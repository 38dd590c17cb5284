//! End-to-end orchestration: split, fit and score, mine, audit, calibrate,
//! decide for every method, evaluate, and write artifacts.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    calibrate_from_partition, calibrate_ubac, train_digest, FairnessAuditor, FairnessVerdict, Partition,
    RejectorModel,
};
use crate::classifier::{fit_builtin, score, ExternalTable, ProbClassifier, ScoredInstance};
use crate::data::{
    load_dataset, resample_test, split_dataset, DatasetManifest, Instance, InstanceId, SplitBundle, SplitIds,
    DEFAULT_FRACTIONS,
};
use crate::decision::{decide_fc, decide_ubac, decide_with_verdict, SelectiveOutcome};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_indexed, write_rows_csv, EvalIndex, MethodReport};
use crate::review::{explanations, Explanation};
use crate::rules::{filter_high_slift, mine_rules, DecisionRule, MiningConfig};
use crate::situation::STConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClassifierChoice {
    #[default]
    Builtin,
    /// CSV with columns `id,p_pos` covering val1, val2 and test.
    External { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub manifest: PathBuf,
    pub classifier: ClassifierChoice,
    pub mining: MiningConfig,
    pub k: usize,
    pub t: f64,
    pub coverage: f64,
    pub unfair_weight: f64,
    pub seed: u64,
    pub fractions: [f64; 4],
    pub resamples: usize,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: PathBuf::new(),
            manifest: PathBuf::new(),
            classifier: ClassifierChoice::Builtin,
            mining: MiningConfig::default(),
            k: 10,
            t: 0.3,
            coverage: 0.8,
            unfair_weight: 1.0,
            seed: 0,
            fractions: DEFAULT_FRACTIONS,
            resamples: 10,
            output_dir: PathBuf::from("ifac-out"),
        }
    }
}

/// Everything that does not depend on the coverage or the unfair weight.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub manifest: DatasetManifest,
    pub split: SplitBundle,
    pub classifier: ProbClassifier,
    pub scored_val1: Vec<ScoredInstance>,
    pub scored_val2: Vec<ScoredInstance>,
    pub scored_test: Vec<ScoredInstance>,
    /// Rules surviving the significance and high-slift filters.
    pub rules: Vec<DecisionRule>,
    /// Candidate count before filtering.
    pub mined_rules: usize,
    pub auditor: FairnessAuditor,
    pub val2_partition: Partition,
    pub test_verdicts: Vec<FairnessVerdict>,
    pub resamples: Vec<Vec<InstanceId>>,
    pub eval_index: EvalIndex,
}

fn load_classifier(config: &RunConfig, split: &SplitBundle, manifest: &DatasetManifest) -> Result<ProbClassifier> {
    match &config.classifier {
        ClassifierChoice::Builtin => fit_builtin(&split.train, manifest),
        ClassifierChoice::External { path } => Ok(ProbClassifier::ExternalTable(ExternalTable::load(path)?)),
    }
}

/// Runs the stages shared by every (coverage, weight) cell.
pub fn prepare(data: &[Instance], manifest: &DatasetManifest, config: &RunConfig) -> Result<Prepared> {
    let split = split_dataset(data, config.fractions, config.seed).map_err(|e| e.in_stage("split"))?;
    prepare_split(split, manifest, config)
}

pub fn prepare_split(split: SplitBundle, manifest: &DatasetManifest, config: &RunConfig) -> Result<Prepared> {
    let classifier = load_classifier(config, &split, manifest).map_err(|e| e.in_stage("train"))?;
    let score_part = |part: &[Instance]| score(&classifier, part).map_err(|e| e.in_stage("score"));
    let scored_val1 = score_part(&split.val1)?;
    let scored_val2 = score_part(&split.val2)?;
    let scored_test = score_part(&split.test)?;

    let candidates = mine_rules(&scored_val1, manifest, &config.mining).map_err(|e| e.in_stage("mine"))?;
    let mined_rules = candidates.len();
    let rules = filter_high_slift(candidates, config.mining.significance_alpha);
    log::info!("{} of {mined_rules} candidate rules pass the filters", rules.len());

    let st_config =
        STConfig::fit(manifest, &split.train, config.k, config.t).map_err(|e| e.in_stage("situation-testing"))?;
    let auditor = FairnessAuditor::new(rules.clone(), st_config, &split.train);
    let val2_partition = Partition::from_verdicts(auditor.verdicts(&scored_val2));
    let test_verdicts = auditor.verdicts(&scored_test);

    let resamples = resample_test(&split.test, config.resamples.min(split.test.len()).max(1), config.seed)
        .map_err(|e| e.in_stage("resample"))?
        .into_iter()
        .map(|part| part.into_iter().map(|i| i.id).collect())
        .collect();
    let eval_index = EvalIndex::new(&split.test, manifest);

    Ok(Prepared {
        manifest: manifest.clone(),
        split,
        classifier,
        scored_val1,
        scored_val2,
        scored_test,
        rules,
        mined_rules,
        auditor,
        val2_partition,
        test_verdicts,
        resamples,
        eval_index,
    })
}

/// Fits both IFAC thresholds and the UBAC threshold at one budget.
pub fn calibrate(prepared: &Prepared, coverage: f64, unfair_weight: f64) -> Result<RejectorModel> {
    let (budget, tau_f, tau_u) =
        calibrate_from_partition(&prepared.scored_val2, &prepared.val2_partition, coverage, unfair_weight)
            .map_err(|e| e.in_stage("calibrate"))?;
    Ok(RejectorModel {
        manifest: prepared.manifest.clone(),
        rules: prepared.rules.clone(),
        st_config: prepared.auditor.index().config().clone(),
        tau_f,
        tau_u,
        budget,
        ubac_threshold: calibrate_ubac(&prepared.scored_val2, coverage).map_err(|e| e.in_stage("calibrate"))?,
        train_digest: train_digest(&prepared.split.train),
    })
}

/// Outcomes for every test instance, grouped FC, then UBAC, then IFAC, each
/// in test order.
pub fn decide_test(prepared: &Prepared, model: &RejectorModel) -> Vec<SelectiveOutcome> {
    let test = &prepared.scored_test;
    let mut out = Vec::with_capacity(test.len() * 3);
    out.extend(test.iter().map(decide_fc));
    out.extend(test.iter().map(|s| decide_ubac(model.ubac_threshold, s)));
    out.extend(
        test.iter()
            .zip(&prepared.test_verdicts)
            .map(|(s, v)| decide_with_verdict(s, v, model.tau_f, model.tau_u)),
    );
    out
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub model: RejectorModel,
    pub outcomes: Vec<SelectiveOutcome>,
    pub reports: Vec<MethodReport>,
}

/// Calibrates, decides and evaluates one cell.
pub fn run_prepared(prepared: &Prepared, coverage: f64, unfair_weight: f64) -> Result<RunResult> {
    let model = calibrate(prepared, coverage, unfair_weight)?;
    let outcomes = decide_test(prepared, &model);
    let reports =
        evaluate_indexed(&outcomes, &prepared.eval_index, &prepared.resamples).map_err(|e| e.in_stage("evaluate"))?;
    Ok(RunResult {
        model,
        outcomes,
        reports,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: crate::decision::Method,
    pub coverage: f64,
    pub unfair_weight: f64,
    pub metric: String,
    pub value: f64,
    pub stderr: Option<f64>,
}

#[derive(Debug)]
pub struct SweepCell {
    pub coverage: f64,
    pub unfair_weight: f64,
    pub reports: Result<Vec<MethodReport>>,
}

/// Runs every grid cell on shared verdicts. A failing cell is reported in
/// place and does not stop the others.
pub fn sweep(prepared: &Prepared, grid: &[(f64, f64)]) -> Result<Vec<SweepCell>> {
    if grid.is_empty() {
        return Err(Error::Argument("sweep grid is empty".into()));
    }
    Ok(grid
        .par_iter()
        .map(|&(coverage, unfair_weight)| SweepCell {
            coverage,
            unfair_weight,
            reports: run_prepared(prepared, coverage, unfair_weight).map(|r| r.reports),
        })
        .collect())
}

/// Tidy rows of the overall (not per-group) metrics of successful cells.
pub fn sweep_rows(cells: &[SweepCell]) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for cell in cells {
        let Ok(reports) = &cell.reports else { continue };
        for report in reports {
            for r in report.rows().into_iter().filter(|r| r.group.is_empty()) {
                rows.push(SweepRow {
                    method: r.method,
                    coverage: cell.coverage,
                    unfair_weight: cell.unfair_weight,
                    metric: r.metric,
                    value: r.value,
                    stderr: r.stderr,
                });
            }
        }
    }
    rows
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["method", "c", "w_u", "metric", "value", "stderr"])?;
    for r in rows {
        csv.write_record([
            r.method.to_string(),
            r.coverage.to_string(),
            r.unfair_weight.to_string(),
            r.metric.clone(),
            r.value.to_string(),
            r.stderr.map(|s| s.to_string()).unwrap_or_default(),
        ])?;
    }
    csv.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Artifact file names inside the output directory.
pub mod files {
    pub const CONFIG: &str = "config.json";
    pub const SPLIT: &str = "split.json";
    pub const CLASSIFIER: &str = "classifier.json";
    pub const MODEL: &str = "model.json";
    pub const RULES: &str = "rules.json";
    pub const OUTCOMES: &str = "outcomes.jsonl";
    pub const REPORT_JSON: &str = "report.json";
    pub const REPORT_CSV: &str = "report.csv";
    pub const EXPLANATIONS: &str = "explanations.jsonl";
    pub const TEST_INSTANCES: &str = "test_instances.jsonl";
    pub const RESAMPLES: &str = "resamples.json";
    pub const MANIFEST: &str = "manifest.json";
    pub const DECISIONS: &str = "decisions.jsonl";
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, items: impl IntoIterator<Item = &'a T>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), n + 1)))
        })
        .collect()
}

/// Writes every artifact of a finished run into `dir`.
pub fn write_artifacts(dir: &Path, config: &RunConfig, prepared: &Prepared, result: &RunResult) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join(files::CONFIG), config)?;
    write_json(&dir.join(files::MANIFEST), &prepared.manifest)?;
    write_json::<SplitIds>(&dir.join(files::SPLIT), &prepared.split.ids())?;
    write_json(&dir.join(files::CLASSIFIER), &prepared.classifier)?;
    write_json(&dir.join(files::MODEL), &result.model)?;
    write_json(&dir.join(files::RULES), &prepared.rules)?;
    write_jsonl(&dir.join(files::OUTCOMES), &result.outcomes)?;
    write_json(&dir.join(files::REPORT_JSON), &result.reports)?;
    let rows: Vec<_> = result.reports.iter().flat_map(MethodReport::rows).collect();
    let csv_path = dir.join(files::REPORT_CSV);
    let file = fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    write_rows_csv(&rows, BufWriter::new(file))?;
    let explained: Vec<Explanation> = explanations(&result.outcomes, &prepared.split.test);
    write_jsonl(&dir.join(files::EXPLANATIONS), &explained)?;
    write_jsonl(&dir.join(files::TEST_INSTANCES), &prepared.split.test)?;
    write_json(&dir.join(files::RESAMPLES), &prepared.resamples)?;
    Ok(())
}

pub fn load_inputs(config: &RunConfig) -> Result<(DatasetManifest, Vec<Instance>)> {
    let manifest = DatasetManifest::load(&config.manifest).map_err(|e| e.in_stage("load"))?;
    let data = load_dataset(&config.dataset, &manifest).map_err(|e| e.in_stage("load"))?;
    Ok((manifest, data))
}

/// Loads inputs, runs every stage and writes the artifact directory.
pub fn run_pipeline(config: &RunConfig) -> Result<RunResult> {
    let (manifest, data) = load_inputs(config)?;
    let prepared = prepare(&data, &manifest, config)?;
    let result = run_prepared(&prepared, config.coverage, config.unfair_weight)?;
    write_artifacts(&config.output_dir, config, &prepared, &result).map_err(|e| e.in_stage("write"))?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::{Action, Method};
    use crate::synthetic::{generate_synthetic, SyntheticSpec};

    fn prepared(n: usize, seed: u64) -> Prepared {
        let ds = generate_synthetic(&SyntheticSpec { n, ..Default::default() }, seed).unwrap();
        let config = RunConfig { seed, ..Default::default() };
        prepare(&ds.instances().unwrap(), &ds.manifest, &config).unwrap()
    }

    #[test]
    fn three_method_reports() {
        let p = prepared(3000, 1);
        let r = run_prepared(&p, 0.8, 1.0).unwrap();
        let methods: Vec<_> = r.reports.iter().map(|r| r.method).collect();
        assert_eq!(methods, Method::ALL.to_vec());
        assert_eq!(r.outcomes.len(), 3 * p.scored_test.len());
    }

    #[test]
    fn full_coverage_accepts_everything() {
        let p = prepared(3000, 2);
        let r = run_prepared(&p, 1.0, 0.5).unwrap();
        let ifac = r.reports.iter().find(|r| r.method == Method::IFAC).unwrap();
        assert_eq!(ifac.performance.coverage.unwrap().mean, 1.0);
        assert!(r.outcomes.iter().all(|o| o.accepted()));
    }

    #[test]
    fn fc_accuracy_equals_classifier_accuracy() {
        let p = prepared(3000, 3);
        let r = run_prepared(&p, 0.8, 1.0).unwrap();
        let correct = p.scored_test.iter().filter(|s| Some(s.prediction) == s.instance.label).count();
        let fc = &r.reports[0];
        // equal-size resamples, so the mean of the per-sample accuracies is the pooled accuracy
        assert_eq!(p.scored_test.len() % p.resamples.len(), 0);
        let acc = fc.performance.accuracy.unwrap().mean;
        assert!((acc - correct as f64 / p.scored_test.len() as f64).abs() < 1e-12);
        assert!(r.outcomes.iter().filter(|o| o.method == Method::FC).all(|o| o.action == Action::Predict));
    }

    #[test]
    fn sweep_cell_matches_single_run() {
        let p = prepared(2000, 4);
        let cells = sweep(&p, &[(0.8, 1.0)]).unwrap();
        let single = run_prepared(&p, 0.8, 1.0).unwrap();
        assert_eq!(cells[0].reports.as_ref().unwrap(), &single.reports);
        assert!(sweep(&p, &[]).is_err());
    }

    #[test]
    fn failed_cell_does_not_abort_sweep() {
        let p = prepared(2000, 5);
        let cells = sweep(&p, &[(1.5, 1.0), (0.9, 0.5)]).unwrap();
        assert!(cells[0].reports.is_err());
        assert!(cells[1].reports.is_ok());
        assert!(sweep_rows(&cells).iter().all(|r| r.coverage == 0.9));
    }
}
