//! Discriminatory and favoring decision rules mined from the classifier's
//! predictions on the first validation set.
//!
//! A rule `(I_L, I_S) -> y` pairs a legal itemset with a sensitive itemset
//! and a predicted class. Rules are mined separately for every sensitive
//! itemset (single values and their intersections), with supports measured
//! against the whole validation set so small groups are not drowned out by
//! large ones. Each rule is scored with slift by difference, the gap between
//! its confidence and the confidence of the same legal itemset outside the
//! sensitive group, and with a pooled two-proportion z-test.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::apriori::{count_itemsets, frequent_itemsets};
use crate::classifier::ScoredInstance;
use crate::data::{DatasetManifest, Instance};
use crate::error::{Error, Result};
use crate::stats::two_proportion_z_test;

/// Slack applied to `conf - slift < 0.5`, where the left side is a float
/// difference of two ratios and can land a few ulps under an exact 0.5.
const FILTER_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Item {
    pub column: String,
    pub value: String,
}

impl Item {
    pub fn new(column: impl Into<String>, value: impl Into<String>) -> Self {
        Item {
            column: column.into(),
            value: value.into(),
        }
    }

    pub fn verified_by(&self, instance: &Instance) -> bool {
        instance.values.get(&self.column) == Some(&self.value)
    }
}

impl fmt::Display for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.column, self.value)
    }
}

/// A set of items with at most one item per column, kept sorted.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<Item>", into = "Vec<Item>")]
pub struct Itemset(Vec<Item>);

impl Itemset {
    pub fn new(items: impl IntoIterator<Item = Item>) -> Result<Self> {
        let mut items: Vec<Item> = items.into_iter().collect();
        items.sort();
        items.dedup();
        if items.windows(2).any(|w| w[0].column == w[1].column) {
            return Err(Error::Argument("itemset holds two items of one column".into()));
        }
        Ok(Itemset(items))
    }

    pub fn items(&self) -> &[Item] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when the instance's transaction contains every item.
    pub fn verified_by(&self, instance: &Instance) -> bool {
        self.0.iter().all(|item| item.verified_by(instance))
    }
}

impl TryFrom<Vec<Item>> for Itemset {
    type Error = Error;

    fn try_from(items: Vec<Item>) -> Result<Self> {
        Itemset::new(items)
    }
}

impl From<Itemset> for Vec<Item> {
    fn from(set: Itemset) -> Self {
        set.0
    }
}

impl fmt::Display for Itemset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(Item::to_string).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// Rule antecedent split into its legal and sensitive parts.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Antecedent {
    pub legal: Itemset,
    pub sensitive: Itemset,
}

impl Antecedent {
    pub fn verified_by(&self, instance: &Instance) -> bool {
        self.legal.verified_by(instance) && self.sensitive.verified_by(instance)
    }

    /// Verifies the legal part but fails at least one sensitive item.
    pub fn negation_verified_by(&self, instance: &Instance) -> bool {
        self.legal.verified_by(instance) && !self.sensitive.verified_by(instance)
    }
}

impl fmt::Display for Antecedent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .sensitive
            .items()
            .iter()
            .chain(self.legal.items())
            .map(Item::to_string)
            .collect();
        f.write_str(&parts.join(", "))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    /// Consequent 0: the group is predicted the undesirable outcome.
    Discriminatory,
    /// Consequent 1, reference group only.
    Favoring,
}

/// Raw counts behind a rule on one dataset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleCounts {
    /// Transactions verifying `(I_L, I_S)`.
    pub group_total: u64,
    /// ...of which the prediction equals the consequent.
    pub group_hits: u64,
    /// Transactions verifying `(I_L, not I_S)`.
    pub negated_total: u64,
    pub negated_hits: u64,
}

impl RuleCounts {
    pub fn confidence(&self) -> Option<f64> {
        ratio(self.group_hits, self.group_total)
    }

    pub fn negated_confidence(&self) -> Option<f64> {
        ratio(self.negated_hits, self.negated_total)
    }

    /// `conf((I_L, I_S) -> y) - conf((I_L, not I_S) -> y)`.
    pub fn slift(&self) -> Result<f64> {
        match (self.confidence(), self.negated_confidence()) {
            (Some(c), Some(n)) => Ok(c - n),
            _ => Err(Error::UndefinedSlift),
        }
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRule {
    pub antecedent: Antecedent,
    pub consequent: u8,
    pub support: f64,
    pub confidence: f64,
    /// Confidence of the same consequent for `(I_L, not I_S)`.
    pub negated_confidence: f64,
    pub slift: f64,
    pub z: f64,
    pub p_value: f64,
    pub kind: RuleKind,
    pub counts: RuleCounts,
}

impl DecisionRule {
    /// Builds a rule from its counts on a dataset of `n` transactions.
    pub fn from_counts(antecedent: Antecedent, consequent: u8, counts: RuleCounts, n: usize) -> Result<Self> {
        let slift = counts.slift()?;
        let test = two_proportion_z_test(
            counts.group_hits,
            counts.group_total,
            counts.negated_hits,
            counts.negated_total,
        );
        Ok(DecisionRule {
            antecedent,
            consequent,
            support: counts.group_hits as f64 / n as f64,
            confidence: counts.confidence().unwrap_or(0.0),
            negated_confidence: counts.negated_confidence().unwrap_or(0.0),
            slift,
            z: test.z,
            p_value: test.p_value,
            kind: if consequent == 0 {
                RuleKind::Discriminatory
            } else {
                RuleKind::Favoring
            },
            counts,
        })
    }
}

impl fmt::Display for DecisionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} -> {} (conf {:.3}, slift {:.3}, p {:.2e})",
            self.antecedent, self.consequent, self.confidence, self.slift, self.p_value
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    pub min_support: f64,
    pub min_confidence: f64,
    pub significance_alpha: f64,
    /// Cap on the number of legal items in an antecedent; `None` explores
    /// every length.
    pub max_legal_items: Option<usize>,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            min_support: 0.01,
            min_confidence: 0.85,
            significance_alpha: 0.01,
            max_legal_items: Some(3),
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("min_support", self.min_support),
            ("min_confidence", self.min_confidence),
            ("significance_alpha", self.significance_alpha),
        ] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(Error::Argument(format!("{name} = {value} must lie in (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Observed values of each sensitive feature, sorted, with the reference
/// value always present.
pub fn sensitive_domains(manifest: &DatasetManifest, instances: &[Instance]) -> Vec<(String, Vec<String>)> {
    manifest
        .sensitive_features
        .iter()
        .map(|col| {
            let mut values: BTreeSet<String> =
                instances.iter().filter_map(|i| i.values.get(col).cloned()).collect();
            if let Some(r) = manifest.reference_group.get(col) {
                values.insert(r.clone());
            }
            (col.clone(), values.into_iter().collect())
        })
        .collect()
}

/// Every non-empty combination of one value per subset of sensitive
/// features, singletons first.
pub fn enumerate_sensitive_itemsets(domains: &[(String, Vec<String>)]) -> Vec<Itemset> {
    let features = domains.len();
    let mut masks: Vec<u32> = (1..(1u32 << features)).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    let mut out = Vec::new();
    for mask in masks {
        let chosen: Vec<&(String, Vec<String>)> =
            (0..features).filter(|i| mask & (1 << i) != 0).map(|i| &domains[i]).collect();
        let mut partial: Vec<Vec<Item>> = vec![vec![]];
        for (col, values) in chosen {
            partial = partial
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut next = prefix.clone();
                        next.push(Item::new(col.clone(), v.clone()));
                        next
                    })
                })
                .collect();
        }
        out.extend(partial.into_iter().map(|items| Itemset::new(items).expect("one item per column")));
    }
    out
}

/// The full reference group as a sensitive itemset.
pub fn reference_itemset(manifest: &DatasetManifest) -> Itemset {
    Itemset::new(
        manifest
            .reference_group
            .iter()
            .map(|(c, v)| Item::new(c.clone(), v.clone())),
    )
    .expect("map keys are unique")
}

/// Smallest count whose support `count / n` reaches `min_support`, using the
/// same float comparison as the support filter.
fn min_count_for(min_support: f64, n: usize) -> usize {
    let mut count = (min_support * n as f64).ceil().max(0.0) as usize;
    while count > 0 && (count - 1) as f64 / n as f64 >= min_support {
        count -= 1;
    }
    while (count as f64 / n as f64) < min_support {
        count += 1;
    }
    count
}

/// Legal items coded as integers whose order matches [`Item`] order.
struct LegalCatalog {
    items: Vec<Item>,
    codes: HashMap<Item, u32>,
}

impl LegalCatalog {
    fn build(manifest: &DatasetManifest, scored: &[ScoredInstance]) -> Self {
        let items: BTreeSet<Item> = scored
            .iter()
            .flat_map(|s| {
                manifest.legal_features.iter().filter_map(move |col| {
                    s.instance.values.get(col).map(|v| Item::new(col.clone(), v.clone()))
                })
            })
            .collect();
        let items: Vec<Item> = items.into_iter().collect();
        let codes = items.iter().enumerate().map(|(i, it)| (it.clone(), i as u32)).collect();
        LegalCatalog { items, codes }
    }

    fn transaction(&self, manifest: &DatasetManifest, instance: &Instance) -> Vec<u32> {
        let mut t: Vec<u32> = manifest
            .legal_features
            .iter()
            .filter_map(|col| {
                let v = instance.values.get(col)?;
                self.codes.get(&Item::new(col.clone(), v.clone())).copied()
            })
            .collect();
        t.sort_unstable();
        t
    }

    fn itemset(&self, codes: &[u32]) -> Itemset {
        Itemset::new(codes.iter().map(|&c| self.items[c as usize].clone())).expect("transaction items")
    }
}

struct Candidate {
    sensitive: Itemset,
    legal: Vec<u32>,
    consequent: u8,
    group_total: u64,
    group_hits: u64,
}

/// Mines candidate rules meeting minimum support and confidence from the
/// classifier's predictions, for every sensitive itemset separately.
///
/// The consequent is the predicted class. Discriminatory candidates
/// (consequent 0) are kept for every sensitive itemset; favoring candidates
/// (consequent 1) only for the exact reference group. Supports are relative
/// to the full input. Candidates whose slift is undefined because no
/// transaction verifies `(I_L, not I_S)` are dropped.
pub fn mine_rules(
    scored: &[ScoredInstance],
    manifest: &DatasetManifest,
    config: &MiningConfig,
) -> Result<Vec<DecisionRule>> {
    config.validate()?;
    if scored.is_empty() {
        return Ok(Vec::new());
    }
    let n = scored.len();
    let min_count = min_count_for(config.min_support, n);
    let catalog = LegalCatalog::build(manifest, scored);
    let transactions: Vec<Vec<u32>> = scored
        .iter()
        .map(|s| catalog.transaction(manifest, &s.instance))
        .collect();
    let instances: Vec<Instance> = scored.iter().map(|s| s.instance.clone()).collect();
    let groups = enumerate_sensitive_itemsets(&sensitive_domains(manifest, &instances));
    let reference = reference_itemset(manifest);

    let meets = |hits: u64, total: u64| {
        hits as f64 / n as f64 >= config.min_support
            && hits as f64 / total as f64 >= config.min_confidence
    };

    let candidates: Vec<Candidate> = groups
        .par_iter()
        .flat_map_iter(|group| {
            let members: Vec<usize> = (0..n).filter(|&i| group.verified_by(&scored[i].instance)).collect();
            if members.len() < min_count {
                return Vec::new().into_iter();
            }
            let member_tx: Vec<Vec<u32>> = members.iter().map(|&i| transactions[i].clone()).collect();
            let mut frequent = frequent_itemsets(&member_tx, min_count, config.max_legal_items);
            frequent.insert(Vec::new(), members.len());

            let keys: HashSet<Vec<u32>> = frequent.keys().cloned().collect();
            let positives = count_itemsets(
                members.iter().filter(|&&i| scored[i].prediction == 1).map(|&i| &transactions[i]),
                &keys,
            );
            let favoring_allowed = *group == reference;

            let mut out = Vec::new();
            for (legal, total) in frequent {
                let total = total as u64;
                let pos = positives[&legal] as u64;
                if meets(total - pos, total) {
                    out.push(Candidate {
                        sensitive: group.clone(),
                        legal: legal.clone(),
                        consequent: 0,
                        group_total: total,
                        group_hits: total - pos,
                    });
                }
                if favoring_allowed && meets(pos, total) {
                    out.push(Candidate {
                        sensitive: group.clone(),
                        legal,
                        consequent: 1,
                        group_total: total,
                        group_hits: pos,
                    });
                }
            }
            out.into_iter()
        })
        .collect();

    // whole-dataset counts of every legal itemset used, for the negated side
    let legal_sets: HashSet<Vec<u32>> = candidates.iter().map(|c| c.legal.clone()).collect();
    let all_totals = count_itemsets(&transactions, &legal_sets);
    let all_positives = count_itemsets(
        transactions
            .iter()
            .zip(scored)
            .filter(|(_, s)| s.prediction == 1)
            .map(|(t, _)| t),
        &legal_sets,
    );

    let mut rules: Vec<DecisionRule> = candidates
        .into_iter()
        .filter_map(|c| {
            let total_all = all_totals[&c.legal] as u64;
            let pos_all = all_positives[&c.legal] as u64;
            let hits_all = if c.consequent == 1 { pos_all } else { total_all - pos_all };
            let counts = RuleCounts {
                group_total: c.group_total,
                group_hits: c.group_hits,
                negated_total: total_all - c.group_total,
                negated_hits: hits_all - c.group_hits,
            };
            let antecedent = Antecedent {
                legal: catalog.itemset(&c.legal),
                sensitive: c.sensitive,
            };
            match DecisionRule::from_counts(antecedent, c.consequent, counts, n) {
                Ok(rule) => Some(rule),
                Err(_) => {
                    log::debug!("dropping rule with undefined slift");
                    None
                }
            }
        })
        .collect();
    rules.sort_by(|a, b| {
        (a.consequent, &a.antecedent.sensitive, &a.antecedent.legal).cmp(&(
            b.consequent,
            &b.antecedent.sensitive,
            &b.antecedent.legal,
        ))
    });
    Ok(rules)
}

/// Counts of a rule recomputed directly on a scored dataset.
pub fn rule_counts(antecedent: &Antecedent, consequent: u8, scored: &[ScoredInstance]) -> RuleCounts {
    let mut counts = RuleCounts::default();
    for s in scored {
        let hit = u64::from(s.prediction == consequent);
        if antecedent.verified_by(&s.instance) {
            counts.group_total += 1;
            counts.group_hits += hit;
        } else if antecedent.negation_verified_by(&s.instance) {
            counts.negated_total += 1;
            counts.negated_hits += hit;
        }
    }
    counts
}

/// slift of a rule on `scored`, by difference of confidences.
pub fn slift(rule: &DecisionRule, scored: &[ScoredInstance]) -> Result<f64> {
    rule_counts(&rule.antecedent, rule.consequent, scored).slift()
}

/// Two-sided p-value of the pooled z-test between `(I_L, I_S)` and
/// `(I_L, not I_S)` on the consequent proportion.
pub fn significance(rule: &DecisionRule, scored: &[ScoredInstance]) -> f64 {
    let c = rule_counts(&rule.antecedent, rule.consequent, scored);
    two_proportion_z_test(c.group_hits, c.group_total, c.negated_hits, c.negated_total).p_value
}

/// The high-slift criterion `conf - slift < 0.5`.
pub fn passes_slift_filter(confidence: f64, slift: f64) -> bool {
    confidence - slift < 0.5 - FILTER_EPS
}

/// Keeps significant rules (`p < alpha`) that pass the high-slift filter.
/// Applied to discriminatory and favoring rules alike.
pub fn filter_high_slift(rules: Vec<DecisionRule>, alpha: f64) -> Vec<DecisionRule> {
    rules
        .into_iter()
        .filter(|r| r.p_value < alpha && passes_slift_filter(r.confidence, r.slift))
        .collect()
}

/// An instance falls under a rule when its transaction contains every
/// antecedent item and the classifier predicted the rule's consequent.
pub fn rule_applies(rule: &DecisionRule, scored: &ScoredInstance) -> bool {
    scored.prediction == rule.consequent && rule.antecedent.verified_by(&scored.instance)
}

/// Rules grouped by kind, for reporting.
pub fn summarize(rules: &[DecisionRule]) -> BTreeMap<RuleKind, usize> {
    let mut out = BTreeMap::new();
    for r in rules {
        *out.entry(r.kind).or_insert(0) += 1;
    }
    out
}
