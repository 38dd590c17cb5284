//! Four-way selective decisions for IFAC and the FC / UBAC baselines.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{FairnessVerdict, Rejector, Threshold};
use crate::classifier::ScoredInstance;
use crate::data::InstanceId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Full coverage: the base classifier alone.
    FC,
    /// Uncertainty-based abstaining classifier.
    UBAC,
    IFAC,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::FC, Method::UBAC, Method::IFAC];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::FC => "FC",
            Method::UBAC => "UBAC",
            Method::IFAC => "IFAC",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Predict,
    AbstainUncertain,
    AbstainUnfair,
    Flip,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectiveOutcome {
    pub id: InstanceId,
    pub method: Method,
    pub action: Action,
    /// The base classifier's prediction `h(x)`.
    pub prediction: u8,
    /// Absent for abstentions.
    pub emitted_label: Option<u8>,
    pub confidence: f64,
    /// Present for unfair-path actions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<FairnessVerdict>,
}

impl SelectiveOutcome {
    fn new(scored: &ScoredInstance, method: Method, action: Action) -> Self {
        let emitted_label = match action {
            Action::Predict => Some(scored.prediction),
            Action::Flip => Some(1 - scored.prediction),
            Action::AbstainUncertain | Action::AbstainUnfair => None,
        };
        SelectiveOutcome {
            id: scored.id().clone(),
            method,
            action,
            prediction: scored.prediction,
            emitted_label,
            confidence: scored.confidence,
            verdict: None,
        }
    }

    pub fn accepted(&self) -> bool {
        self.emitted_label.is_some()
    }
}

/// The piecewise rule: fair predictions are kept at `confidence >= tau_f`
/// and abstained below it; unfair predictions are abstained at
/// `confidence >= tau_u` and flipped below it.
pub fn decide_with_verdict(
    scored: &ScoredInstance,
    verdict: &FairnessVerdict,
    tau_f: Threshold,
    tau_u: Threshold,
) -> SelectiveOutcome {
    if verdict.fair {
        let action = if tau_f.admits(scored.confidence) {
            Action::Predict
        } else {
            Action::AbstainUncertain
        };
        SelectiveOutcome::new(scored, Method::IFAC, action)
    } else {
        let action = if tau_u.admits(scored.confidence) {
            Action::AbstainUnfair
        } else {
            Action::Flip
        };
        let mut outcome = SelectiveOutcome::new(scored, Method::IFAC, action);
        outcome.verdict = Some(verdict.clone());
        outcome
    }
}

/// Audits the instance with the rejector's rules and situation test, then
/// applies the piecewise rule. Failed situation tests count as fair.
pub fn decide_ifac(rejector: &Rejector, scored: &ScoredInstance) -> SelectiveOutcome {
    let verdict = rejector.auditor.verdict(scored);
    decide_with_verdict(scored, &verdict, rejector.model.tau_f, rejector.model.tau_u)
}

pub fn decide_ifac_all(rejector: &Rejector, scored: &[ScoredInstance]) -> Vec<SelectiveOutcome> {
    scored.par_iter().map(|s| decide_ifac(rejector, s)).collect()
}

pub fn decide_ubac(threshold: Threshold, scored: &ScoredInstance) -> SelectiveOutcome {
    let action = if threshold.admits(scored.confidence) {
        Action::Predict
    } else {
        Action::AbstainUncertain
    };
    SelectiveOutcome::new(scored, Method::UBAC, action)
}

pub fn decide_fc(scored: &ScoredInstance) -> SelectiveOutcome {
    SelectiveOutcome::new(scored, Method::FC, Action::Predict)
}
