//! Situation testing: compares a prediction with the training labels of its
//! k nearest neighbors inside and outside the reference group.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::classifier::ScoredInstance;
use crate::data::{DatasetManifest, Instance, InstanceId, RawValue};
use crate::error::{Error, Result};

/// Numeric gaps are measured in standard deviations and capped here.
const GAP_CAP: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct STConfig {
    pub k: usize,
    /// Flag when `dec_r - dec_nr >= t`.
    pub t: f64,
    /// Legal features compared by the distance, in manifest order.
    pub features: Vec<String>,
    /// Mean and population standard deviation of each numeric legal feature
    /// on the training set.
    pub distance_stats: BTreeMap<String, FeatureStats>,
    pub reference_group: BTreeMap<String, String>,
}

impl STConfig {
    /// Derives distance statistics from the labeled training instances.
    pub fn fit(manifest: &DatasetManifest, train: &[Instance], k: usize, t: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::Argument("situation testing needs k >= 1".into()));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Argument(format!("threshold t = {t} must lie in [0, 1]")));
        }
        let mut distance_stats = BTreeMap::new();
        for col in manifest.legal_features.iter().filter(|c| manifest.is_numeric(c)) {
            let xs: Vec<f64> = train
                .iter()
                .filter_map(|i| i.raw_values.get(col).and_then(RawValue::as_number))
                .collect();
            let stats = if xs.is_empty() {
                FeatureStats { mean: 0.0, std: 0.0 }
            } else {
                let mean = xs.iter().sum::<f64>() / xs.len() as f64;
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
                FeatureStats { mean, std: var.sqrt() }
            };
            distance_stats.insert(col.clone(), stats);
        }
        Ok(STConfig {
            k,
            t,
            features: manifest.legal_features.clone(),
            distance_stats,
            reference_group: manifest.reference_group.clone(),
        })
    }

    pub fn in_reference_group(&self, instance: &Instance) -> bool {
        self.reference_group
            .iter()
            .all(|(c, v)| instance.values.get(c) == Some(v))
    }
}

fn numeric_gap(a: f64, b: f64, std: f64) -> f64 {
    if std > 0.0 {
        ((a - b).abs() / std).min(GAP_CAP) / GAP_CAP
    } else if a == b {
        0.0
    } else {
        1.0
    }
}

/// Mean per-feature distance over the legal features only. Categorical
/// features contribute 0 when equal and 1 otherwise; numeric features
/// contribute `min(|a - b| / std, 3) / 3` on raw values.
pub fn distance(a: &Instance, b: &Instance, config: &STConfig) -> f64 {
    if config.features.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for col in &config.features {
        total += match config.distance_stats.get(col) {
            Some(stats) => {
                let x = a.raw_values.get(col).and_then(RawValue::as_number);
                let y = b.raw_values.get(col).and_then(RawValue::as_number);
                match (x, y) {
                    (Some(x), Some(y)) => numeric_gap(x, y, stats.std),
                    _ => 1.0,
                }
            }
            None => match (a.raw_values.get(col), b.raw_values.get(col)) {
                (Some(x), Some(y)) if x.to_string() == y.to_string() => 0.0,
                _ => 1.0,
            },
        };
    }
    total / config.features.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: InstanceId,
    pub distance: f64,
    pub label: u8,
    /// Every feature of the neighbor, as raw display values.
    pub features: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct STResult {
    pub neighbors_ref: Vec<Neighbor>,
    pub neighbors_nonref: Vec<Neighbor>,
    pub dec_r: f64,
    pub dec_nr: f64,
    pub score: f64,
    pub flagged: bool,
}

#[derive(Clone, Copy, Debug)]
enum Encoded {
    Category(u32),
    Number(f64),
    Missing,
}

/// Pre-encoded training set for repeated situation tests.
#[derive(Clone, Debug)]
pub struct ReferenceIndex {
    config: STConfig,
    train: Vec<Instance>,
    /// Per training instance, one code per legal feature.
    rows: Vec<Vec<Encoded>>,
    /// Position of each training instance in ascending id order.
    id_rank: Vec<u32>,
    reference: Vec<usize>,
    non_reference: Vec<usize>,
    dictionaries: Vec<HashMap<String, u32>>,
}

impl ReferenceIndex {
    /// Indexes the labeled training instances; unlabeled ones are ignored.
    pub fn build(config: STConfig, train: &[Instance]) -> Self {
        let train: Vec<Instance> = train.iter().filter(|i| i.label.is_some()).cloned().collect();
        let mut dictionaries: Vec<HashMap<String, u32>> = vec![HashMap::new(); config.features.len()];
        let rows: Vec<Vec<Encoded>> = train
            .iter()
            .map(|inst| {
                config
                    .features
                    .iter()
                    .enumerate()
                    .map(|(f, col)| {
                        let raw = inst.raw_values.get(col);
                        if config.distance_stats.contains_key(col) {
                            raw.and_then(RawValue::as_number).map_or(Encoded::Missing, Encoded::Number)
                        } else {
                            match raw {
                                Some(v) => {
                                    let dict = &mut dictionaries[f];
                                    let next = dict.len() as u32;
                                    Encoded::Category(*dict.entry(v.to_string()).or_insert(next))
                                }
                                None => Encoded::Missing,
                            }
                        }
                    })
                    .collect()
            })
            .collect();
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.sort_by(|&a, &b| train[a].id.cmp(&train[b].id));
        let mut id_rank = vec![0u32; train.len()];
        for (rank, &i) in order.iter().enumerate() {
            id_rank[i] = rank as u32;
        }
        let (reference, non_reference) =
            (0..train.len()).partition(|&i| config.in_reference_group(&train[i]));
        ReferenceIndex {
            config,
            train,
            rows,
            id_rank,
            reference,
            non_reference,
            dictionaries,
        }
    }

    pub fn config(&self) -> &STConfig {
        &self.config
    }

    pub fn train(&self) -> &[Instance] {
        &self.train
    }

    fn encode(&self, instance: &Instance) -> Vec<Encoded> {
        self.config
            .features
            .iter()
            .enumerate()
            .map(|(f, col)| {
                let raw = instance.raw_values.get(col);
                if self.config.distance_stats.contains_key(col) {
                    raw.and_then(RawValue::as_number).map_or(Encoded::Missing, Encoded::Number)
                } else {
                    match raw {
                        // values unseen in training can never be equal to a neighbor's
                        Some(v) => Encoded::Category(
                            self.dictionaries[f].get(&v.to_string()).copied().unwrap_or(u32::MAX),
                        ),
                        None => Encoded::Missing,
                    }
                }
            })
            .collect()
    }

    // Mirrors `distance` term by term so both give bit-identical values.
    fn encoded_distance(&self, target: &[Encoded], row: &[Encoded]) -> f64 {
        if target.is_empty() {
            return 0.0;
        }
        let mut total = 0.0;
        for (f, (a, b)) in target.iter().zip(row).enumerate() {
            total += match (a, b) {
                (Encoded::Number(x), Encoded::Number(y)) => {
                    let std = self.config.distance_stats[&self.config.features[f]].std;
                    numeric_gap(*x, *y, std)
                }
                (Encoded::Category(x), Encoded::Category(y)) if x == y => 0.0,
                _ => 1.0,
            };
        }
        total / target.len() as f64
    }

    fn nearest(&self, target: &[Encoded], pool: &[usize]) -> Vec<(usize, f64)> {
        let mut scored: Vec<(f64, u32, usize)> = pool
            .iter()
            .map(|&i| (self.encoded_distance(target, &self.rows[i]), self.id_rank[i], i))
            .collect();
        let cmp = |a: &(f64, u32, usize), b: &(f64, u32, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        let k = self.config.k;
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_by(cmp);
        scored.into_iter().map(|(d, _, i)| (i, d)).collect()
    }

    fn neighbor(&self, i: usize, distance: f64) -> Neighbor {
        let inst = &self.train[i];
        Neighbor {
            id: inst.id.clone(),
            distance,
            label: inst.label.unwrap_or(0),
            features: inst.raw_values.iter().map(|(k, v)| (k.clone(), v.to_string())).collect(),
        }
    }

    /// Runs situation testing for one instance.
    pub fn test(&self, target: &Instance) -> Result<STResult> {
        let k = self.config.k;
        for (group, pool) in [("reference", &self.reference), ("non-reference", &self.non_reference)] {
            if pool.len() < k {
                return Err(Error::InsufficientNeighbors {
                    group,
                    available: pool.len(),
                    k,
                });
            }
        }
        let encoded = self.encode(target);
        let near_ref = self.nearest(&encoded, &self.reference);
        let near_nonref = self.nearest(&encoded, &self.non_reference);
        let positives = |set: &[(usize, f64)]| {
            set.iter().filter(|(i, _)| self.train[*i].label == Some(1)).count() as i64
        };
        let (pos_r, pos_nr) = (positives(&near_ref), positives(&near_nonref));
        let score = (pos_r - pos_nr) as f64 / k as f64;
        Ok(STResult {
            neighbors_ref: near_ref.iter().map(|&(i, d)| self.neighbor(i, d)).collect(),
            neighbors_nonref: near_nonref.iter().map(|&(i, d)| self.neighbor(i, d)).collect(),
            dec_r: pos_r as f64 / k as f64,
            dec_nr: pos_nr as f64 / k as f64,
            score,
            flagged: score >= self.config.t,
        })
    }
}

/// Situation test of one scored instance against the training set.
/// Builds a fresh index; use [`ReferenceIndex`] for repeated queries.
pub fn situation_test(target: &ScoredInstance, train: &[Instance], config: &STConfig) -> Result<STResult> {
    ReferenceIndex::build(config.clone(), train).test(&target.instance)
}
