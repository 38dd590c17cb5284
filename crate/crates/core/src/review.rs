//! Human review of unfairness-based rejections.
//!
//! Reviewer decisions are kept in an append-only JSON-lines log. Each line
//! is one [`ReviewDecision`]; for a given outcome id the last line wins and
//! earlier lines stay as history. Decisions only amend IFAC outcomes whose
//! action is `abstain_unfair`.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::FairnessVerdict;
use crate::data::{Instance, InstanceId};
use crate::decision::{Action, Method, SelectiveOutcome};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_indexed, EvalIndex, MethodReport};
use crate::rules::DecisionRule;
use crate::situation::STResult;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewAction {
    /// Emit the base classifier's prediction after all.
    KeepOriginal,
    /// Emit the reviewer's label.
    OverrideLabel,
    /// Confirm the abstention.
    UpholdAbstain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub outcome_id: InstanceId,
    pub reviewer: String,
    pub action: ReviewAction,
    /// Required for `override_label`, forbidden otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
    #[serde(default)]
    pub rationale: String,
    /// RFC 3339 timestamp.
    pub timestamp: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl ReviewDecision {
    pub fn validate(&self) -> std::result::Result<(), Vec<FieldError>> {
        let mut errors = Vec::new();
        let mut fail = |field: &str, message: &str| {
            errors.push(FieldError {
                field: field.to_owned(),
                message: message.to_owned(),
            })
        };
        if self.outcome_id.as_str().is_empty() {
            fail("outcome_id", "must not be empty");
        }
        if self.reviewer.trim().is_empty() {
            fail("reviewer", "must not be empty");
        }
        if self.timestamp.trim().is_empty() {
            fail("timestamp", "must not be empty");
        }
        match (self.action, self.label) {
            (ReviewAction::OverrideLabel, None) => fail("label", "required when action is override_label"),
            (ReviewAction::OverrideLabel, Some(l)) if l > 1 => fail("label", "must be 0 or 1"),
            (ReviewAction::KeepOriginal | ReviewAction::UpholdAbstain, Some(_)) => {
                fail("label", "only allowed when action is override_label")
            }
            _ => {}
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }
}

/// Decision history in log order.
#[derive(Debug, Default)]
pub struct DecisionLog {
    path: Option<PathBuf>,
    entries: Vec<ReviewDecision>,
}

impl DecisionLog {
    pub fn in_memory() -> Self {
        DecisionLog::default()
    }

    /// Opens the log at `path`, replaying existing lines. A missing file is
    /// an empty log.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let entries = if path.exists() {
            crate::pipeline::read_jsonl(&path)?
        } else {
            Vec::new()
        };
        Ok(DecisionLog {
            path: Some(path),
            entries,
        })
    }

    pub fn entries(&self) -> &[ReviewDecision] {
        &self.entries
    }

    /// Validates, persists and records one decision.
    pub fn append(&mut self, decision: ReviewDecision) -> Result<()> {
        if let Err(errors) = decision.validate() {
            let list: Vec<String> = errors.iter().map(|e| format!("{}: {}", e.field, e.message)).collect();
            return Err(Error::Review(list.join("; ")));
        }
        if let Some(path) = &self.path {
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            let mut out = BufWriter::new(file);
            serde_json::to_writer(&mut out, &decision)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            out.flush().map_err(|e| Error::io(path, e))?;
        }
        self.entries.push(decision);
        Ok(())
    }

    /// The latest decision per outcome id.
    pub fn active(&self) -> BTreeMap<&InstanceId, &ReviewDecision> {
        self.entries.iter().map(|d| (&d.outcome_id, d)).collect()
    }

    pub fn history(&self, id: &InstanceId) -> Vec<&ReviewDecision> {
        self.entries.iter().filter(|d| &d.outcome_id == id).collect()
    }
}

/// Applies the active decisions to IFAC `abstain_unfair` outcomes. Every
/// other outcome is returned unchanged.
pub fn amend(outcomes: &[SelectiveOutcome], active: &BTreeMap<&InstanceId, &ReviewDecision>) -> Vec<SelectiveOutcome> {
    outcomes
        .iter()
        .map(|o| {
            if o.method != Method::IFAC || o.action != Action::AbstainUnfair {
                return o.clone();
            }
            let Some(decision) = active.get(&o.id) else {
                return o.clone();
            };
            let mut amended = o.clone();
            amended.emitted_label = match decision.action {
                ReviewAction::KeepOriginal => Some(o.prediction),
                ReviewAction::OverrideLabel => decision.label,
                ReviewAction::UpholdAbstain => None,
            };
            amended.action = match amended.emitted_label {
                None => Action::AbstainUnfair,
                Some(l) if l == o.prediction => Action::Predict,
                Some(_) => Action::Flip,
            };
            amended
        })
        .collect()
}

/// Explanation payload for one unfair-path IFAC outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub id: InstanceId,
    pub action: Action,
    pub prediction: u8,
    pub confidence: f64,
    /// Raw feature values of the instance.
    pub features: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<DecisionRule>,
    pub matching_rules: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub situation: Option<STResult>,
}

fn explain(outcome: &SelectiveOutcome, verdict: &FairnessVerdict, instance: &Instance) -> Explanation {
    Explanation {
        id: outcome.id.clone(),
        action: outcome.action,
        prediction: outcome.prediction,
        confidence: outcome.confidence,
        features: instance
            .raw_values
            .iter()
            .map(|(k, v)| (k.clone(), v.to_string()))
            .collect(),
        rule: verdict.rule.clone(),
        matching_rules: verdict.matching_rules,
        situation: verdict.situation.clone(),
    }
}

/// Explanations for every IFAC outcome that carries an unfair verdict, in
/// outcome order.
pub fn explanations(outcomes: &[SelectiveOutcome], instances: &[Instance]) -> Vec<Explanation> {
    let by_id: HashMap<&InstanceId, &Instance> = instances.iter().map(|i| (&i.id, i)).collect();
    outcomes
        .iter()
        .filter(|o| o.method == Method::IFAC)
        .filter_map(|o| Some(explain(o, o.verdict.as_ref()?, by_id.get(&o.id)?)))
        .collect()
}

/// List entry for `GET /rejections`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectionSummary {
    pub id: InstanceId,
    pub prediction: u8,
    pub confidence: f64,
    /// Display form of the driving rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slift: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<ReviewDecision>,
}

/// Full payload for `GET /rejections/{id}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectionDetail {
    #[serde(flatten)]
    pub explanation: Explanation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<ReviewDecision>,
    pub history: Vec<ReviewDecision>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Page<T> {
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub items: Vec<T>,
}

/// Run artifacts plus the decision log, as served by the review API.
#[derive(Debug)]
pub struct ReviewStore {
    outcomes: Vec<SelectiveOutcome>,
    explanations: BTreeMap<InstanceId, Explanation>,
    /// Ids of IFAC `abstain_unfair` outcomes in outcome order.
    rejections: Vec<InstanceId>,
    index: EvalIndex,
    resamples: Vec<Vec<InstanceId>>,
    log: DecisionLog,
}

impl ReviewStore {
    pub fn new(
        outcomes: Vec<SelectiveOutcome>,
        instances: &[Instance],
        manifest: &crate::data::DatasetManifest,
        resamples: Vec<Vec<InstanceId>>,
        log: DecisionLog,
    ) -> Self {
        let explained = explanations(&outcomes, instances);
        let rejections = outcomes
            .iter()
            .filter(|o| o.method == Method::IFAC && o.action == Action::AbstainUnfair)
            .map(|o| o.id.clone())
            .collect();
        ReviewStore {
            explanations: explained.into_iter().map(|e| (e.id.clone(), e)).collect(),
            rejections,
            index: EvalIndex::new(instances, manifest),
            outcomes,
            resamples,
            log,
        }
    }

    /// Loads a run's artifact directory, with its decision log.
    pub fn open(dir: &Path) -> Result<Self> {
        use crate::pipeline::{files, read_json, read_jsonl};
        let outcomes = read_jsonl(&dir.join(files::OUTCOMES))?;
        let instances: Vec<Instance> = read_jsonl(&dir.join(files::TEST_INSTANCES))?;
        let manifest = read_json(&dir.join(files::MANIFEST))?;
        let resamples = read_json(&dir.join(files::RESAMPLES))?;
        let log = DecisionLog::open(dir.join(files::DECISIONS))?;
        Ok(ReviewStore::new(outcomes, &instances, &manifest, resamples, log))
    }

    pub fn log(&self) -> &DecisionLog {
        &self.log
    }

    pub fn is_rejection(&self, id: &InstanceId) -> bool {
        self.explanations
            .get(id)
            .is_some_and(|e| e.action == Action::AbstainUnfair)
    }

    pub fn rejections(&self, offset: usize, limit: usize) -> Page<RejectionSummary> {
        let active = self.log.active();
        let items = self
            .rejections
            .iter()
            .skip(offset)
            .take(limit)
            .filter_map(|id| self.explanations.get(id))
            .map(|e| RejectionSummary {
                id: e.id.clone(),
                prediction: e.prediction,
                confidence: e.confidence,
                rule: e.rule.as_ref().map(|r| format!("{} -> {}", r.antecedent, r.consequent)),
                slift: e.rule.as_ref().map(|r| r.slift),
                score: e.situation.as_ref().map(|s| s.score),
                decision: active.get(&e.id).map(|d| (*d).clone()),
            })
            .collect();
        Page {
            total: self.rejections.len(),
            offset,
            limit,
            items,
        }
    }

    pub fn detail(&self, id: &InstanceId) -> Option<RejectionDetail> {
        if !self.is_rejection(id) {
            return None;
        }
        let explanation = self.explanations.get(id)?.clone();
        let history: Vec<ReviewDecision> = self.log.history(id).into_iter().cloned().collect();
        Some(RejectionDetail {
            explanation,
            decision: history.last().cloned(),
            history,
        })
    }

    /// Appends a decision for a known rejection.
    pub fn decide(&mut self, decision: ReviewDecision) -> Result<()> {
        if !self.is_rejection(&decision.outcome_id) {
            return Err(Error::Review(format!("unknown rejection `{}`", decision.outcome_id)));
        }
        self.log.append(decision)
    }

    pub fn amended_outcomes(&self) -> Vec<SelectiveOutcome> {
        amend(&self.outcomes, &self.log.active())
    }

    /// Reports recomputed with reviewer decisions applied.
    pub fn report(&self) -> Result<Vec<MethodReport>> {
        evaluate_indexed(&self.amended_outcomes(), &self.index, &self.resamples)
    }

    pub fn unamended_report(&self) -> Result<Vec<MethodReport>> {
        evaluate_indexed(&self.outcomes, &self.index, &self.resamples)
    }
}

/// Writes a decision log from scratch; used to snapshot or replay logs.
pub fn write_log(path: &Path, decisions: &[ReviewDecision]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for d in decisions {
        serde_json::to_writer(&mut out, d)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
