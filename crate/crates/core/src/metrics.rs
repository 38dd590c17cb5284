//! Selective performance and per-group fairness metrics, aggregated over
//! test resamples as mean and standard error.
//!
//! Rates are measured on accepted instances only, oriented so that label 1
//! is the desirable outcome: FNR = P(emit 0 | y = 1), FPR = P(emit 1 | y = 0)
//! and PDR = P(emit 1). Group disparity is the range and the population
//! standard deviation of the per-group means, unweighted by group size.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::data::{DatasetManifest, Instance, InstanceId};
use crate::decision::{Method, SelectiveOutcome};
use crate::error::{Error, Result};
use crate::stats;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    /// Resamples on which the quantity was defined.
    pub samples: usize,
}

impl Estimate {
    fn from_samples(values: &[f64]) -> Option<Self> {
        Some(Estimate {
            mean: stats::mean(values)?,
            stderr: stats::standard_error(values)?,
            samples: values.len(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disparity {
    pub range: f64,
    pub std: f64,
    pub groups: usize,
}

impl Disparity {
    fn over(values: &[f64]) -> Option<Self> {
        Some(Disparity {
            range: stats::range(values)?,
            std: stats::population_std(values)?,
            groups: values.len(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub group: String,
    pub total: usize,
    pub accepted: usize,
    pub fnr: Option<Estimate>,
    pub fpr: Option<Estimate>,
    pub pdr: Option<Estimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupFairnessReport {
    pub groups: Vec<GroupRates>,
    pub fnr: Option<Disparity>,
    pub fpr: Option<Disparity>,
    pub pdr: Option<Disparity>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub accuracy: Option<Estimate>,
    pub precision: Option<Estimate>,
    pub recall: Option<Estimate>,
    /// Realized coverage: accepted share of the evaluated instances.
    pub coverage: Option<Estimate>,
    pub total: usize,
    pub accepted: usize,
    pub flipped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub performance: PerformanceReport,
    pub fairness: GroupFairnessReport,
}

#[derive(Clone, Copy, Debug, Default)]
struct Confusion {
    total: usize,
    accepted: usize,
    tp: usize,
    fp: usize,
    tn: usize,
    fn_: usize,
}

impl Confusion {
    fn add(&mut self, label: u8, emitted: Option<u8>) {
        self.total += 1;
        let Some(e) = emitted else { return };
        self.accepted += 1;
        match (label, e) {
            (1, 1) => self.tp += 1,
            (0, 1) => self.fp += 1,
            (0, _) => self.tn += 1,
            _ => self.fn_ += 1,
        }
    }

    fn rate(num: usize, den: usize) -> Option<f64> {
        (den > 0).then(|| num as f64 / den as f64)
    }

    fn accuracy(&self) -> Option<f64> {
        Self::rate(self.tp + self.tn, self.accepted)
    }
    fn precision(&self) -> Option<f64> {
        Self::rate(self.tp, self.tp + self.fp)
    }
    fn recall(&self) -> Option<f64> {
        Self::rate(self.tp, self.tp + self.fn_)
    }
    fn coverage(&self) -> Option<f64> {
        Self::rate(self.accepted, self.total)
    }
    fn fnr(&self) -> Option<f64> {
        Self::rate(self.fn_, self.tp + self.fn_)
    }
    fn fpr(&self) -> Option<f64> {
        Self::rate(self.fp, self.fp + self.tn)
    }
    fn pdr(&self) -> Option<f64> {
        Self::rate(self.tp + self.fp, self.accepted)
    }
}

/// Label and demographic group of every evaluable instance.
#[derive(Clone, Debug, Default)]
pub struct EvalIndex {
    entries: HashMap<InstanceId, (u8, String)>,
}

impl EvalIndex {
    pub fn new(instances: &[Instance], manifest: &DatasetManifest) -> Self {
        EvalIndex {
            entries: instances
                .iter()
                .filter_map(|i| Some((i.id.clone(), (i.label?, manifest.group_key(i)))))
                .collect(),
        }
    }

    fn get(&self, id: &InstanceId) -> Result<&(u8, String)> {
        self.entries
            .get(id)
            .ok_or_else(|| Error::Data(format!("outcome `{id}` has no labeled instance")))
    }
}

fn collect(values: impl Iterator<Item = Option<f64>>) -> Vec<f64> {
    values.flatten().collect()
}

/// Reports one method's outcomes. `resamples` lists the ids of each test
/// resample; an empty list evaluates all outcomes as a single sample.
pub fn evaluate_method(
    method: Method,
    outcomes: &[&SelectiveOutcome],
    index: &EvalIndex,
    resamples: &[Vec<InstanceId>],
) -> Result<MethodReport> {
    let by_id: HashMap<&InstanceId, &SelectiveOutcome> = outcomes.iter().map(|o| (&o.id, *o)).collect();
    let whole: Vec<Vec<InstanceId>>;
    let resamples = if resamples.is_empty() {
        whole = vec![outcomes.iter().map(|o| o.id.clone()).collect()];
        &whole[..]
    } else {
        resamples
    };

    let mut overall: Vec<Confusion> = Vec::with_capacity(resamples.len());
    let mut per_group: BTreeMap<String, Vec<Confusion>> = BTreeMap::new();
    for (r, ids) in resamples.iter().enumerate() {
        let mut all = Confusion::default();
        for id in ids {
            let outcome = by_id
                .get(id)
                .ok_or_else(|| Error::Data(format!("no {method} outcome for instance `{id}`")))?;
            let (label, group) = index.get(id)?;
            all.add(*label, outcome.emitted_label);
            let slots = per_group.entry(group.clone()).or_default();
            slots.resize(resamples.len(), Confusion::default());
            slots[r].add(*label, outcome.emitted_label);
        }
        overall.push(all);
    }

    let est = |f: fn(&Confusion) -> Option<f64>, xs: &[Confusion]| {
        Estimate::from_samples(&collect(xs.iter().map(f)))
    };

    let performance = PerformanceReport {
        accuracy: est(Confusion::accuracy, &overall),
        precision: est(Confusion::precision, &overall),
        recall: est(Confusion::recall, &overall),
        coverage: est(Confusion::coverage, &overall),
        total: overall.iter().map(|c| c.total).sum(),
        accepted: overall.iter().map(|c| c.accepted).sum(),
        flipped: outcomes
            .iter()
            .filter(|o| o.action == crate::decision::Action::Flip)
            .count(),
    };

    let groups: Vec<GroupRates> = per_group
        .into_iter()
        .map(|(group, slots)| {
            let rates = GroupRates {
                total: slots.iter().map(|c| c.total).sum(),
                accepted: slots.iter().map(|c| c.accepted).sum(),
                fnr: est(Confusion::fnr, &slots),
                fpr: est(Confusion::fpr, &slots),
                pdr: est(Confusion::pdr, &slots),
                group,
            };
            for (name, value) in [("FNR", rates.fnr), ("FPR", rates.fpr), ("PDR", rates.pdr)] {
                if value.is_none() {
                    log::warn!("{method}: {name} undefined for group {}", rates.group);
                }
            }
            rates
        })
        .collect();

    let disparity = |pick: fn(&GroupRates) -> Option<Estimate>| {
        Disparity::over(&groups.iter().filter_map(|g| pick(g).map(|e| e.mean)).collect::<Vec<_>>())
    };
    let fairness = GroupFairnessReport {
        fnr: disparity(|g| g.fnr),
        fpr: disparity(|g| g.fpr),
        pdr: disparity(|g| g.pdr),
        groups,
    };
    Ok(MethodReport {
        method,
        performance,
        fairness,
    })
}

/// One report per method present in `outcomes`, in method order.
pub fn evaluate(
    outcomes: &[SelectiveOutcome],
    instances: &[Instance],
    manifest: &DatasetManifest,
    resamples: &[Vec<InstanceId>],
) -> Result<Vec<MethodReport>> {
    let index = EvalIndex::new(instances, manifest);
    evaluate_indexed(outcomes, &index, resamples)
}

pub fn evaluate_indexed(
    outcomes: &[SelectiveOutcome],
    index: &EvalIndex,
    resamples: &[Vec<InstanceId>],
) -> Result<Vec<MethodReport>> {
    let mut by_method: BTreeMap<Method, Vec<&SelectiveOutcome>> = BTreeMap::new();
    for o in outcomes {
        by_method.entry(o.method).or_default().push(o);
    }
    by_method
        .into_iter()
        .map(|(method, outs)| evaluate_method(method, &outs, index, resamples))
        .collect()
}

/// One row of the tidy report table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: Method,
    /// Empty for overall metrics.
    pub group: String,
    pub metric: String,
    pub value: f64,
    pub stderr: Option<f64>,
}

impl MethodReport {
    pub fn rows(&self) -> Vec<MetricRow> {
        let mut rows = Vec::new();
        let mut push = |group: &str, metric: &str, value: f64, stderr: Option<f64>| {
            rows.push(MetricRow {
                method: self.method,
                group: group.to_owned(),
                metric: metric.to_owned(),
                value,
                stderr,
            })
        };
        let p = &self.performance;
        for (name, e) in [
            ("accuracy", p.accuracy),
            ("precision", p.precision),
            ("recall", p.recall),
            ("coverage", p.coverage),
        ] {
            if let Some(e) = e {
                push("", name, e.mean, Some(e.stderr));
            }
        }
        let f = &self.fairness;
        for (name, d) in [("fnr", f.fnr), ("fpr", f.fpr), ("pdr", f.pdr)] {
            if let Some(d) = d {
                push("", &format!("{name}_range"), d.range, None);
                push("", &format!("{name}_std"), d.std, None);
            }
        }
        for g in &f.groups {
            for (name, e) in [("fnr", g.fnr), ("fpr", g.fpr), ("pdr", g.pdr)] {
                if let Some(e) = e {
                    push(&g.group, name, e.mean, Some(e.stderr));
                }
            }
        }
        rows
    }
}

/// Writes report rows as CSV with header `method,group,metric,value,stderr`.
pub fn write_rows_csv<W: std::io::Write>(rows: &[MetricRow], writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["method", "group", "metric", "value", "stderr"])?;
    for r in rows {
        csv.write_record([
            r.method.to_string(),
            r.group.clone(),
            r.metric.clone(),
            r.value.to_string(),
            r.stderr.map(|s| s.to_string()).unwrap_or_default(),
        ])?;
    }
    csv.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::Action;
    use crate::data::RawValue;

    fn manifest() -> DatasetManifest {
        DatasetManifest::from_json(
            r#"{"sensitive_features":["g"],"legal_features":[],"target":"y",
                "positive_label":"1","reference_group":{"g":"a"}}"#,
        )
        .unwrap()
    }

    fn instance(id: usize, group: &str, label: u8) -> Instance {
        Instance {
            id: InstanceId(id.to_string()),
            values: [("g".to_owned(), group.to_owned())].into(),
            raw_values: [("g".to_owned(), RawValue::Category(group.to_owned()))].into(),
            label: Some(label),
        }
    }

    fn outcome(id: usize, method: Method, emitted: Option<u8>) -> SelectiveOutcome {
        SelectiveOutcome {
            id: InstanceId(id.to_string()),
            method,
            action: if emitted.is_some() { Action::Predict } else { Action::AbstainUncertain },
            prediction: emitted.unwrap_or(0),
            emitted_label: emitted,
            confidence: 0.9,
            verdict: None,
        }
    }

    #[test]
    fn perfect_predictions_have_zero_error_rates() {
        let instances: Vec<_> = (0..20).map(|i| instance(i, ["a", "b"][i % 2], (i % 3 == 0) as u8)).collect();
        let outcomes: Vec<_> = instances
            .iter()
            .enumerate()
            .map(|(i, inst)| outcome(i, Method::FC, inst.label))
            .collect();
        let report = &evaluate(&outcomes, &instances, &manifest(), &[]).unwrap()[0];
        assert_eq!(report.performance.accuracy.unwrap().mean, 1.0);
        assert_eq!(report.fairness.fnr.unwrap().range, 0.0);
        assert_eq!(report.fairness.fpr.unwrap().range, 0.0);
        for g in &report.fairness.groups {
            assert_eq!(g.fnr.unwrap().mean, 0.0);
            assert_eq!(g.fpr.unwrap().mean, 0.0);
        }
    }

    #[test]
    fn single_group_has_no_disparity() {
        let instances: Vec<_> = (0..10).map(|i| instance(i, "a", (i % 2) as u8)).collect();
        let outcomes: Vec<_> = (0..10).map(|i| outcome(i, Method::FC, Some((i % 3 == 0) as u8))).collect();
        let report = &evaluate(&outcomes, &instances, &manifest(), &[]).unwrap()[0];
        let pdr = report.fairness.pdr.unwrap();
        assert_eq!((pdr.range, pdr.std, pdr.groups), (0.0, 0.0, 1));
    }

    #[test]
    fn hand_tallied_confusion_matrices() {
        // group a: 20 instances; labels 1 for ids 0..10, 0 for 10..20
        //   emitted: ids 0..7 -> 1, 7..10 -> 0 (3 FN), 10..12 -> 1 (2 FP), rest 0
        //   ids 18, 19 abstain
        // group b: 20 instances; labels 1 for 20..26, 0 for 26..40
        //   emitted: 20..22 -> 1, 22..26 -> 0 (4 FN), 26..40 -> 0
        let mut instances = Vec::new();
        let mut outcomes = Vec::new();
        for i in 0..40 {
            let (group, label) = if i < 20 { ("a", u8::from(i < 10)) } else { ("b", u8::from(i < 26)) };
            instances.push(instance(i, group, label));
            let emitted = match i {
                0..=6 => Some(1),
                7..=9 => Some(0),
                10..=11 => Some(1),
                18..=19 => None,
                20..=21 => Some(1),
                _ => Some(0),
            };
            outcomes.push(outcome(i, Method::IFAC, emitted));
        }
        let report = &evaluate(&outcomes, &instances, &manifest(), &[]).unwrap()[0];
        let a = &report.fairness.groups[0];
        let b = &report.fairness.groups[1];
        assert_eq!((a.group.as_str(), a.accepted), ("g=a", 18));
        assert_eq!(a.fnr.unwrap().mean, 3.0 / 10.0);
        assert_eq!(a.fpr.unwrap().mean, 2.0 / 8.0);
        assert_eq!(a.pdr.unwrap().mean, 9.0 / 18.0);
        assert_eq!(b.fnr.unwrap().mean, 4.0 / 6.0);
        assert_eq!(b.fpr.unwrap().mean, 0.0);
        assert_eq!(b.pdr.unwrap().mean, 2.0 / 20.0);
        let pdr = report.fairness.pdr.unwrap();
        assert!((pdr.range - 0.4).abs() < 1e-15);
        assert!((pdr.std - 0.2).abs() < 1e-15);
        let perf = &report.performance;
        assert_eq!(perf.coverage.unwrap().mean, 38.0 / 40.0);
        // tp 9, fp 2, tn 20, fn 7
        assert_eq!(perf.accuracy.unwrap().mean, 29.0 / 38.0);
        assert_eq!(perf.precision.unwrap().mean, 9.0 / 11.0);
        assert_eq!(perf.recall.unwrap().mean, 9.0 / 16.0);
    }

    #[test]
    fn undefined_rates_are_absent() {
        let instances = vec![instance(0, "a", 1), instance(1, "b", 0)];
        let outcomes = vec![outcome(0, Method::UBAC, Some(1)), outcome(1, Method::UBAC, None)];
        let report = &evaluate(&outcomes, &instances, &manifest(), &[]).unwrap()[0];
        let b = &report.fairness.groups[1];
        assert!(b.pdr.is_none() && b.fnr.is_none() && b.fpr.is_none());
        assert_eq!(report.fairness.pdr.unwrap().groups, 1);
    }

    #[test]
    fn resamples_give_mean_and_standard_error() {
        let instances: Vec<_> = (0..4).map(|i| instance(i, "a", 1)).collect();
        let outcomes: Vec<_> = (0..4).map(|i| outcome(i, Method::FC, Some(u8::from(i != 0)))).collect();
        let resamples = vec![
            vec![InstanceId::from("0"), InstanceId::from("1")],
            vec![InstanceId::from("2"), InstanceId::from("3")],
        ];
        let report = &evaluate(&outcomes, &instances, &manifest(), &resamples).unwrap()[0];
        let acc = report.performance.accuracy.unwrap();
        assert_eq!(acc.mean, 0.75);
        assert_eq!(acc.samples, 2);
        assert!((acc.stderr - 0.25).abs() < 1e-15);
    }

    #[test]
    fn unknown_outcome_id_is_an_error() {
        let instances = vec![instance(0, "a", 1)];
        let outcomes = vec![outcome(5, Method::FC, Some(1))];
        assert!(evaluate(&outcomes, &instances, &manifest(), &[]).is_err());
    }
}
