//! Splits the second validation set into fair and unfair parts, turns the
//! target coverage and unfair reject weight into rejection budgets, and
//! places the two confidence thresholds.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::ScoredInstance;
use crate::data::{DatasetManifest, Instance};
use crate::error::{Error, Result};
use crate::rules::{rule_applies, DecisionRule};
use crate::situation::{ReferenceIndex, STConfig, STResult};

/// Outcome of the global (rule) and local (situation testing) checks for
/// one prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessVerdict {
    pub fair: bool,
    /// The matching rule with the largest |slift|.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<DecisionRule>,
    pub matching_rules: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub situation: Option<STResult>,
    /// Set when situation testing could not run; the instance counts as fair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub st_error: Option<String>,
}

impl FairnessVerdict {
    fn fair_without_rules() -> Self {
        FairnessVerdict {
            fair: true,
            rule: None,
            matching_rules: 0,
            situation: None,
            st_error: None,
        }
    }
}

/// Applies filtered rules and situation testing to predictions.
#[derive(Clone, Debug)]
pub struct FairnessAuditor {
    rules: Vec<DecisionRule>,
    index: ReferenceIndex,
}

impl FairnessAuditor {
    pub fn new(rules: Vec<DecisionRule>, st_config: STConfig, train: &[Instance]) -> Self {
        FairnessAuditor {
            rules,
            index: ReferenceIndex::build(st_config, train),
        }
    }

    pub fn rules(&self) -> &[DecisionRule] {
        &self.rules
    }

    pub fn index(&self) -> &ReferenceIndex {
        &self.index
    }

    /// Unfair iff some rule applies and the situation test flags the
    /// instance.
    pub fn verdict(&self, scored: &ScoredInstance) -> FairnessVerdict {
        let mut matching = 0;
        let mut best: Option<&DecisionRule> = None;
        for rule in self.rules.iter().filter(|r| rule_applies(r, scored)) {
            matching += 1;
            if best.is_none_or(|b| rule.slift.abs() > b.slift.abs()) {
                best = Some(rule);
            }
        }
        let Some(rule) = best else {
            return FairnessVerdict::fair_without_rules();
        };
        match self.index.test(&scored.instance) {
            Ok(st) => FairnessVerdict {
                fair: !st.flagged,
                rule: Some(rule.clone()),
                matching_rules: matching,
                situation: Some(st),
                st_error: None,
            },
            Err(e) => {
                log::warn!("situation test failed for {}: {e}", scored.id());
                FairnessVerdict {
                    fair: true,
                    rule: Some(rule.clone()),
                    matching_rules: matching,
                    situation: None,
                    st_error: Some(e.to_string()),
                }
            }
        }
    }

    pub fn verdicts(&self, scored: &[ScoredInstance]) -> Vec<FairnessVerdict> {
        scored.par_iter().map(|s| self.verdict(s)).collect()
    }
}

/// Positions of fair and unfair instances plus the verdict of every input.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub fair: Vec<usize>,
    pub unfair: Vec<usize>,
    pub verdicts: Vec<FairnessVerdict>,
}

impl Partition {
    pub fn from_verdicts(verdicts: Vec<FairnessVerdict>) -> Self {
        let (fair, unfair) = (0..verdicts.len()).partition(|&i| verdicts[i].fair);
        Partition {
            fair,
            unfair,
            verdicts,
        }
    }
}

pub fn partition_val2(scored_val2: &[ScoredInstance], auditor: &FairnessAuditor) -> Partition {
    Partition::from_verdicts(auditor.verdicts(scored_val2))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectBudget {
    pub n: usize,
    pub n_unfair: usize,
    pub n_fair: usize,
    pub n_rej: usize,
    pub n_ufr: usize,
    pub n_ucr: usize,
    pub coverage: f64,
    pub unfair_weight: f64,
}

/// Ceiling that ignores float noise below 1e-9, so `(1 - 0.7) * 100` is 30.
fn ceil_count(x: f64) -> usize {
    (x - 1e-9).ceil().max(0.0) as usize
}

/// `N_rej = ceil((1 - c) N)`, `N_ufr = min(ceil(N_rej w_u), N_u)`,
/// `N_ucr = N_rej - N_ufr`.
pub fn compute_budget(n: usize, n_unfair: usize, coverage: f64, unfair_weight: f64) -> Result<RejectBudget> {
    if !(0.0..=1.0).contains(&coverage) {
        return Err(Error::Argument(format!("coverage {coverage} must lie in [0, 1]")));
    }
    if !(0.0..=1.0).contains(&unfair_weight) {
        return Err(Error::Argument(format!(
            "unfair reject weight {unfair_weight} must lie in [0, 1]"
        )));
    }
    if n_unfair > n {
        return Err(Error::Argument(format!("{n_unfair} unfair instances out of {n}")));
    }
    let n_rej = ceil_count((1.0 - coverage) * n as f64).min(n);
    let n_ufr = ceil_count(n_rej as f64 * unfair_weight).min(n_unfair);
    Ok(RejectBudget {
        n,
        n_unfair,
        n_fair: n - n_unfair,
        n_rej,
        n_ufr,
        n_ucr: n_rej - n_ufr,
        coverage,
        unfair_weight,
    })
}

/// Confidence threshold; an instance is on the upper side when its
/// confidence is `>=` the threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// Below every confidence: everything is on the upper side.
    BelowMin,
    At(f64),
    /// Above every confidence: nothing is on the upper side.
    AboveMax,
}

impl Threshold {
    pub fn admits(&self, confidence: f64) -> bool {
        match self {
            Threshold::BelowMin => true,
            Threshold::At(t) => confidence >= *t,
            Threshold::AboveMax => false,
        }
    }
}

/// Threshold leaving exactly `n_below` of `confidences` strictly below it
/// when there are no ties at the cut.
pub fn lower_cut(confidences: &[f64], n_below: usize) -> Threshold {
    if n_below == 0 {
        return Threshold::BelowMin;
    }
    if n_below >= confidences.len() {
        return Threshold::AboveMax;
    }
    let mut sorted = confidences.to_vec();
    sorted.sort_by(f64::total_cmp);
    Threshold::At(sorted[n_below])
}

/// Threshold with exactly `n_above` of `confidences` at or above it when
/// there are no ties at the cut.
pub fn upper_cut(confidences: &[f64], n_above: usize) -> Threshold {
    if n_above == 0 {
        return Threshold::AboveMax;
    }
    if n_above >= confidences.len() {
        return Threshold::BelowMin;
    }
    let mut sorted = confidences.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Threshold::At(sorted[n_above - 1])
}

/// `tau_f` leaves `N_ucr` fair instances below it; `tau_u` has `N_ufr`
/// unfair instances at or above it.
pub fn calibrate_thresholds(fair: &[f64], unfair: &[f64], budget: &RejectBudget) -> (Threshold, Threshold) {
    (lower_cut(fair, budget.n_ucr), upper_cut(unfair, budget.n_ufr))
}

/// Plug-in threshold for the uncertainty-only baseline: `ceil((1 - c) N)`
/// calibration confidences fall below it.
pub fn calibrate_ubac(scored_val2: &[ScoredInstance], coverage: f64) -> Result<Threshold> {
    let budget = compute_budget(scored_val2.len(), 0, coverage, 0.0)?;
    let confidences: Vec<f64> = scored_val2.iter().map(|s| s.confidence).collect();
    Ok(lower_cut(&confidences, budget.n_rej))
}

/// Hex SHA-256 over the ids and labels of the training reference set.
pub fn train_digest(train: &[Instance]) -> String {
    let mut hasher = Sha256::new();
    for inst in train {
        hasher.update(inst.id.as_str().as_bytes());
        hasher.update([0, inst.label.map_or(2, |l| l)]);
    }
    let mut out = String::with_capacity(64);
    for byte in hasher.finalize() {
        let _ = write!(out, "{byte:02x}");
    }
    out
}

/// Fitted rejector state. The training reference set itself is not
/// serialized, only its digest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectorModel {
    pub manifest: DatasetManifest,
    pub rules: Vec<DecisionRule>,
    pub st_config: STConfig,
    pub tau_f: Threshold,
    pub tau_u: Threshold,
    pub budget: RejectBudget,
    /// Uncertainty-only baseline threshold at the same coverage.
    pub ubac_threshold: Threshold,
    pub train_digest: String,
}

/// A fitted model bound to its training reference set.
#[derive(Clone, Debug)]
pub struct Rejector {
    pub model: RejectorModel,
    pub auditor: FairnessAuditor,
}

impl Rejector {
    /// Rebinds a stored model to its training set, checking the digest.
    pub fn bind(model: RejectorModel, train: &[Instance]) -> Result<Self> {
        let digest = train_digest(train);
        if digest != model.train_digest {
            return Err(Error::Data("training reference set does not match the model digest".into()));
        }
        let auditor = FairnessAuditor::new(model.rules.clone(), model.st_config.clone(), train);
        Ok(Rejector { model, auditor })
    }
}

/// Calibrates thresholds on already-audited val2 predictions.
pub fn calibrate_from_partition(
    scored_val2: &[ScoredInstance],
    partition: &Partition,
    coverage: f64,
    unfair_weight: f64,
) -> Result<(RejectBudget, Threshold, Threshold)> {
    let budget = compute_budget(scored_val2.len(), partition.unfair.len(), coverage, unfair_weight)?;
    let fair: Vec<f64> = partition.fair.iter().map(|&i| scored_val2[i].confidence).collect();
    let unfair: Vec<f64> = partition.unfair.iter().map(|&i| scored_val2[i].confidence).collect();
    let (tau_f, tau_u) = calibrate_thresholds(&fair, &unfair, &budget);
    Ok((budget, tau_f, tau_u))
}

/// Audits val2, computes the budget and fits both thresholds.
pub fn fit_rejector(
    manifest: &DatasetManifest,
    scored_val2: &[ScoredInstance],
    auditor: FairnessAuditor,
    coverage: f64,
    unfair_weight: f64,
) -> Result<(Rejector, Partition)> {
    let partition = partition_val2(scored_val2, &auditor);
    let (budget, tau_f, tau_u) = calibrate_from_partition(scored_val2, &partition, coverage, unfair_weight)?;
    let model = RejectorModel {
        manifest: manifest.clone(),
        rules: auditor.rules().to_vec(),
        st_config: auditor.index().config().clone(),
        tau_f,
        tau_u,
        budget,
        ubac_threshold: calibrate_ubac(scored_val2, coverage)?,
        train_digest: train_digest(auditor.index().train()),
    };
    Ok((Rejector { model, auditor }, partition))
}
