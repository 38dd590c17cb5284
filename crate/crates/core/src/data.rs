//! Tabular ingestion with a column-role manifest, binning for rule mining,
//! and the train / val1 / val2 / test split protocol.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default split proportions for train, val1, val2 and test.
pub const DEFAULT_FRACTIONS: [f64; 4] = [0.40, 0.15, 0.15, 0.30];

/// Opaque instance identifier.
///
/// Ordering is total: ids that parse as unsigned integers sort numerically
/// and come before all other ids, which sort lexicographically. Neighbor
/// ties in situation testing are broken by this order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstanceId(pub String);

impl InstanceId {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn numeric(&self) -> Option<u128> {
        if self.0.is_empty() || !self.0.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        self.0.parse().ok()
    }
}

impl Ord for InstanceId {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.numeric(), other.numeric()) {
            (Some(a), Some(b)) => a.cmp(&b).then_with(|| self.0.cmp(&other.0)),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => self.0.cmp(&other.0),
        }
    }
}

impl PartialOrd for InstanceId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for InstanceId {
    fn from(s: &str) -> Self {
        InstanceId(s.to_owned())
    }
}

impl From<String> for InstanceId {
    fn from(s: String) -> Self {
        InstanceId(s)
    }
}

/// Ordered bin edges for one numeric column.
///
/// Edges `e0 < e1 < ... < em` define half-open bins `[e_i, e_{i+1})`. Values
/// outside `[e0, em)` are rejected. When both edges of a bin are integers the
/// item is labelled with the inclusive integer range, so edges 30 and 40 give
/// `[30,39]`; otherwise the label is the half-open interval `[lo,hi)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Binning {
    pub edges: Vec<f64>,
}

impl Binning {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        let binning = Binning { edges };
        binning.validate("<binning>")?;
        Ok(binning)
    }

    fn validate(&self, column: &str) -> Result<()> {
        if self.edges.len() < 2 {
            return Err(Error::Manifest(format!(
                "bins for `{column}` need at least two edges"
            )));
        }
        if self.edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::Manifest(format!("bins for `{column}` must be finite")));
        }
        if self.edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Manifest(format!(
                "bins for `{column}` must be strictly increasing"
            )));
        }
        Ok(())
    }

    /// Index of the bin containing `value`, if any.
    pub fn bin_index(&self, value: f64) -> Option<usize> {
        if !value.is_finite() {
            return None;
        }
        // partition_point gives the number of edges <= value
        let above = self.edges.partition_point(|e| *e <= value);
        if above == 0 || above == self.edges.len() {
            None
        } else {
            Some(above - 1)
        }
    }

    pub fn label(&self, index: usize) -> String {
        let lo = self.edges[index];
        let hi = self.edges[index + 1];
        if lo.fract() == 0.0 && hi.fract() == 0.0 {
            format!("[{},{}]", lo as i64, hi as i64 - 1)
        } else {
            format!("[{lo},{hi})")
        }
    }

    pub fn item_for(&self, value: f64) -> Option<String> {
        self.bin_index(value).map(|i| self.label(i))
    }
}

/// Column roles of a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub sensitive_features: Vec<String>,
    pub legal_features: Vec<String>,
    pub target: String,
    /// Target value mapped to label 1, the desirable outcome.
    pub positive_label: String,
    /// When set, only this value maps to 0 and any other value is an error.
    /// When absent, every non-positive value maps to 0 but the column may
    /// hold at most two distinct values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative_label: Option<String>,
    pub reference_group: BTreeMap<String, String>,
    #[serde(default)]
    pub bins: BTreeMap<String, Binning>,
    /// Column holding instance ids; row numbers are used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_column: Option<String>,
}

impl DatasetManifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let manifest: DatasetManifest =
            serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sensitive_features.is_empty() {
            return Err(Error::Manifest("at least one sensitive feature is required".into()));
        }
        let sensitive: BTreeSet<&str> = self.sensitive_features.iter().map(String::as_str).collect();
        let legal: BTreeSet<&str> = self.legal_features.iter().map(String::as_str).collect();
        if sensitive.len() != self.sensitive_features.len() || legal.len() != self.legal_features.len()
        {
            return Err(Error::Manifest("duplicate feature names".into()));
        }
        if let Some(col) = sensitive.intersection(&legal).next() {
            return Err(Error::Manifest(format!(
                "`{col}` is declared both sensitive and legal"
            )));
        }
        if sensitive.contains(self.target.as_str()) || legal.contains(self.target.as_str()) {
            return Err(Error::Manifest(format!(
                "target `{}` cannot also be a feature",
                self.target
            )));
        }
        for feature in &self.sensitive_features {
            if !self.reference_group.contains_key(feature) {
                return Err(Error::Manifest(format!(
                    "reference group assigns no value to sensitive feature `{feature}`"
                )));
            }
        }
        if let Some(extra) = self.reference_group.keys().find(|k| !sensitive.contains(k.as_str())) {
            return Err(Error::Manifest(format!(
                "reference group names `{extra}`, which is not a sensitive feature"
            )));
        }
        for (column, binning) in &self.bins {
            if !sensitive.contains(column.as_str()) && !legal.contains(column.as_str()) {
                return Err(Error::Manifest(format!("bins declared for unknown column `{column}`")));
            }
            binning.validate(column)?;
        }
        if let Some(id) = &self.id_column {
            if sensitive.contains(id.as_str()) || legal.contains(id.as_str()) || *id == self.target {
                return Err(Error::Manifest(format!("id column `{id}` cannot have another role")));
            }
        }
        Ok(())
    }

    /// Sensitive then legal features, in manifest order.
    pub fn feature_columns(&self) -> impl Iterator<Item = &String> {
        self.sensitive_features.iter().chain(self.legal_features.iter())
    }

    pub fn is_numeric(&self, column: &str) -> bool {
        self.bins.contains_key(column)
    }

    pub fn is_sensitive(&self, column: &str) -> bool {
        self.sensitive_features.iter().any(|c| c == column)
    }

    /// True when the instance carries every reference-group value.
    pub fn in_reference_group(&self, instance: &Instance) -> bool {
        self.reference_group
            .iter()
            .all(|(col, val)| instance.values.get(col) == Some(val))
    }

    /// Demographic group key, e.g. `sex=F,race=B`, over all sensitive features.
    pub fn group_key(&self, instance: &Instance) -> String {
        self.sensitive_features
            .iter()
            .map(|col| {
                format!(
                    "{}={}",
                    col,
                    instance.values.get(col).map(String::as_str).unwrap_or("")
                )
            })
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Original (pre-binning) value of a cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawValue {
    Number(f64),
    Category(String),
}

impl RawValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            RawValue::Number(x) => Some(*x),
            RawValue::Category(_) => None,
        }
    }
}

impl fmt::Display for RawValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawValue::Number(x) => write!(f, "{x}"),
            RawValue::Category(s) => f.write_str(s),
        }
    }
}

/// One row: categorical items for mining plus raw values for distances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: InstanceId,
    pub values: BTreeMap<String, String>,
    pub raw_values: BTreeMap<String, RawValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
}

impl Instance {
    pub fn value(&self, column: &str) -> Option<&str> {
        self.values.get(column).map(String::as_str)
    }
}

/// Reads a CSV dataset from disk. See [`read_dataset`].
pub fn load_dataset(path: impl AsRef<Path>, manifest: &DatasetManifest) -> Result<Vec<Instance>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file, manifest)
}

/// Parses CSV rows into instances, binning numeric columns and mapping the
/// target to `{0, 1}` with 1 as the desirable label. An empty target cell
/// yields an unlabeled instance.
pub fn read_dataset<R: Read>(reader: R, manifest: &DatasetManifest) -> Result<Vec<Instance>> {
    manifest.validate()?;
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = csv.headers()?.clone();
    let position = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Manifest(format!("column `{name}` missing from CSV header")))
    };

    let features: Vec<(String, usize)> = manifest
        .feature_columns()
        .map(|c| position(c).map(|p| (c.clone(), p)))
        .collect::<Result<_>>()?;
    let target_at = position(&manifest.target)?;
    let id_at = manifest.id_column.as_deref().map(position).transpose()?;

    let mut negative_seen: Option<String> = None;
    let mut instances = Vec::new();
    let mut seen_ids = BTreeSet::new();
    for (row, record) in csv.records().enumerate() {
        let record = record?;
        let id = match id_at {
            Some(at) => InstanceId(record[at].to_owned()),
            None => InstanceId(row.to_string()),
        };
        if !seen_ids.insert(id.clone()) {
            return Err(Error::Data(format!("duplicate instance id `{id}` at row {row}")));
        }

        let mut values = BTreeMap::new();
        let mut raw_values = BTreeMap::new();
        for (column, at) in &features {
            let cell = record[*at].trim();
            match manifest.bins.get(column) {
                Some(binning) => {
                    let x: f64 = cell.parse().map_err(|_| Error::Cell {
                        row,
                        column: column.clone(),
                        message: format!("`{cell}` is not numeric"),
                    })?;
                    let item = binning.item_for(x).ok_or_else(|| Error::Cell {
                        row,
                        column: column.clone(),
                        message: format!("value {x} lies outside every bin"),
                    })?;
                    values.insert(column.clone(), item);
                    raw_values.insert(column.clone(), RawValue::Number(x));
                }
                None => {
                    values.insert(column.clone(), cell.to_owned());
                    raw_values.insert(column.clone(), RawValue::Category(cell.to_owned()));
                }
            }
        }

        let target = record[target_at].trim();
        let label = if target.is_empty() {
            None
        } else if target == manifest.positive_label {
            Some(1)
        } else {
            match &manifest.negative_label {
                Some(neg) if neg == target => Some(0),
                Some(_) => {
                    return Err(Error::Cell {
                        row,
                        column: manifest.target.clone(),
                        message: format!("target value `{target}` is neither label"),
                    })
                }
                None => match &negative_seen {
                    Some(neg) if neg != target => {
                        return Err(Error::Cell {
                            row,
                            column: manifest.target.clone(),
                            message: format!(
                                "third target value `{target}` (already saw `{}` and `{neg}`)",
                                manifest.positive_label
                            ),
                        })
                    }
                    _ => {
                        negative_seen = Some(target.to_owned());
                        Some(0)
                    }
                },
            }
        };

        instances.push(Instance {
            id,
            values,
            raw_values,
            label,
        });
    }
    Ok(instances)
}

/// Sizes of a partition of `n` items under `fractions`, by the largest
/// remainder method. Remainder ties go to the earlier part.
pub fn largest_remainder_sizes(n: usize, fractions: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    // fractional parts on a 1e-9 grid so float noise cannot reorder equal remainders
    let key = |i: usize| ((quotas[i] - quotas[i].floor()) * 1e9).round() as i64;
    order.sort_by(|&a, &b| key(b).cmp(&key(a)).then(a.cmp(&b)));
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitBundle {
    pub train: Vec<Instance>,
    pub val1: Vec<Instance>,
    pub val2: Vec<Instance>,
    pub test: Vec<Instance>,
    pub seed: u64,
}

/// Instance ids of each split part; the on-disk form of a [`SplitBundle`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitIds {
    pub seed: u64,
    pub train: Vec<InstanceId>,
    pub val1: Vec<InstanceId>,
    pub val2: Vec<InstanceId>,
    pub test: Vec<InstanceId>,
}

impl SplitBundle {
    pub fn ids(&self) -> SplitIds {
        let ids = |part: &[Instance]| part.iter().map(|i| i.id.clone()).collect();
        SplitIds {
            seed: self.seed,
            train: ids(&self.train),
            val1: ids(&self.val1),
            val2: ids(&self.val2),
            test: ids(&self.test),
        }
    }

    /// Rebuilds a bundle from stored ids against the full dataset.
    pub fn from_ids(data: &[Instance], ids: &SplitIds) -> Result<Self> {
        let by_id: BTreeMap<&InstanceId, &Instance> = data.iter().map(|i| (&i.id, i)).collect();
        let pick = |part: &[InstanceId]| -> Result<Vec<Instance>> {
            part.iter()
                .map(|id| {
                    by_id
                        .get(id)
                        .map(|i| (*i).clone())
                        .ok_or_else(|| Error::Data(format!("split references unknown id `{id}`")))
                })
                .collect()
        };
        Ok(SplitBundle {
            train: pick(&ids.train)?,
            val1: pick(&ids.val1)?,
            val2: pick(&ids.val2)?,
            test: pick(&ids.test)?,
            seed: ids.seed,
        })
    }
}

fn check_fractions(fractions: &[f64]) -> Result<()> {
    if let Some(f) = fractions.iter().find(|f| !f.is_finite() || **f < 0.0) {
        return Err(Error::Argument(format!("split fraction {f} must be non-negative")));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Argument(format!("split fractions sum to {total}, not 1")));
    }
    Ok(())
}

/// Deterministic shuffle under `seed`, then a contiguous partition into
/// train, val1, val2 and test.
pub fn split_dataset(data: &[Instance], fractions: [f64; 4], seed: u64) -> Result<SplitBundle> {
    check_fractions(&fractions)?;
    if data.is_empty() {
        return Err(Error::Argument("cannot split an empty dataset".into()));
    }
    let mut shuffled = data.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let sizes = largest_remainder_sizes(shuffled.len(), &fractions);
    let mut rest = shuffled.into_iter();
    let mut take = |n: usize| rest.by_ref().take(n).collect::<Vec<_>>();
    Ok(SplitBundle {
        train: take(sizes[0]),
        val1: take(sizes[1]),
        val2: take(sizes[2]),
        test: take(sizes[3]),
        seed,
    })
}

/// Random disjoint partition of the test set into `parts` near-equal sets.
/// The first `len % parts` sets get one extra instance.
pub fn resample_test(test: &[Instance], parts: usize, seed: u64) -> Result<Vec<Vec<Instance>>> {
    if parts == 0 {
        return Err(Error::Argument("parts must be at least 1".into()));
    }
    if parts > test.len() {
        return Err(Error::Argument(format!(
            "cannot split {} instances into {parts} parts",
            test.len()
        )));
    }
    if parts == 1 {
        return Ok(vec![test.to_vec()]);
    }
    let mut shuffled = test.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = shuffled.len() / parts;
    let extra = shuffled.len() % parts;
    let mut rest = shuffled.into_iter();
    Ok((0..parts)
        .map(|i| {
            let size = base + usize::from(i < extra);
            rest.by_ref().take(size).collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn manifest() -> DatasetManifest {
        DatasetManifest::from_json(
            r#"{
                "sensitive_features": ["sex"],
                "legal_features": ["age", "occ"],
                "target": "income",
                "positive_label": "high",
                "reference_group": {"sex": "M"},
                "bins": {"age": [10, 20, 30, 40, 50, 60, 70]}
            }"#,
        )
        .unwrap()
    }

    fn toy(n: usize) -> Vec<Instance> {
        (0..n)
            .map(|i| Instance {
                id: InstanceId(i.to_string()),
                values: BTreeMap::new(),
                raw_values: BTreeMap::new(),
                label: Some((i % 2) as u8),
            })
            .collect()
    }

    #[test]
    fn decade_bins_label_inclusive_ranges() {
        let csv = "sex,age,occ,income\nF,34,Sales,high\n";
        let rows = read_dataset(csv.as_bytes(), &manifest()).unwrap();
        assert_eq!(rows[0].values["age"], "[30,39]");
        assert_eq!(rows[0].raw_values["age"], RawValue::Number(34.0));
    }

    #[test]
    fn header_only_gives_no_instances() {
        let rows = read_dataset("sex,age,occ,income\n".as_bytes(), &manifest()).unwrap();
        assert!(rows.is_empty());
    }

    #[test]
    fn two_target_strings_map_to_labels() {
        let csv = "sex,age,occ,income\nF,34,Sales,high\nM,51,Tech,low\nM,22,Tech,high\n";
        let rows = read_dataset(csv.as_bytes(), &manifest()).unwrap();
        let labels: Vec<_> = rows.iter().map(|r| r.label.unwrap()).collect();
        assert_eq!(labels, vec![1, 0, 1]);
    }

    #[test]
    fn third_target_value_is_a_data_error() {
        let csv = "sex,age,occ,income\nF,34,Sales,high\nM,51,Tech,low\nM,22,Tech,mid\n";
        let err = read_dataset(csv.as_bytes(), &manifest()).unwrap_err();
        assert!(matches!(err, Error::Cell { row: 2, .. }), "{err}");
    }

    #[test]
    fn missing_column_is_a_manifest_error() {
        let err = read_dataset("sex,age,income\n".as_bytes(), &manifest()).unwrap_err();
        assert!(matches!(err, Error::Manifest(_)));
    }

    #[test]
    fn out_of_range_value_names_row_and_column() {
        let csv = "sex,age,occ,income\nF,34,Sales,high\nF,85,Sales,high\n";
        match read_dataset(csv.as_bytes(), &manifest()).unwrap_err() {
            Error::Cell { row, column, .. } => {
                assert_eq!(row, 1);
                assert_eq!(column, "age");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn manifest_rejects_overlapping_roles() {
        let err = DatasetManifest::from_json(
            r#"{"sensitive_features":["sex"],"legal_features":["sex"],"target":"y",
                "positive_label":"1","reference_group":{"sex":"M"}}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Manifest(_)));
        let err = DatasetManifest::from_json(
            r#"{"sensitive_features":["sex","race"],"legal_features":[],"target":"y",
                "positive_label":"1","reference_group":{"sex":"M"}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("race"));
    }

    #[test]
    fn split_sizes_follow_fractions() {
        let bundle = split_dataset(&toy(100), DEFAULT_FRACTIONS, 7).unwrap();
        let sizes = [bundle.train.len(), bundle.val1.len(), bundle.val2.len(), bundle.test.len()];
        assert_eq!(sizes, [40, 15, 15, 30]);
    }

    #[test]
    fn split_rounding_uses_largest_remainder() {
        assert_eq!(largest_remainder_sizes(10, &DEFAULT_FRACTIONS), vec![4, 2, 1, 3]);
        let bundle = split_dataset(&toy(10), DEFAULT_FRACTIONS, 1).unwrap();
        assert_eq!(bundle.val1.len(), 2);
        assert_eq!(bundle.val2.len(), 1);
    }

    #[test]
    fn split_is_deterministic() {
        let a = split_dataset(&toy(100), DEFAULT_FRACTIONS, 7).unwrap();
        let b = split_dataset(&toy(100), DEFAULT_FRACTIONS, 7).unwrap();
        assert_eq!(a, b);
        let c = split_dataset(&toy(100), DEFAULT_FRACTIONS, 8).unwrap();
        assert_ne!(a.ids().train, c.ids().train);
    }

    #[test]
    fn split_rejects_bad_arguments() {
        assert!(split_dataset(&toy(10), [0.5, -0.1, 0.3, 0.3], 0).is_err());
        assert!(split_dataset(&toy(10), [0.5, 0.1, 0.1, 0.1], 0).is_err());
        assert!(split_dataset(&[], DEFAULT_FRACTIONS, 0).is_err());
    }

    #[test]
    fn resample_sizes() {
        let parts = resample_test(&toy(30), 10, 3).unwrap();
        assert!(parts.iter().all(|p| p.len() == 3));

        let parts = resample_test(&toy(31), 10, 3).unwrap();
        let mut sizes: Vec<_> = parts.iter().map(Vec::len).collect();
        sizes.sort();
        assert_eq!(sizes, [3, 3, 3, 3, 3, 3, 3, 3, 3, 4]);

        let whole = toy(7);
        assert_eq!(resample_test(&whole, 1, 3).unwrap(), vec![whole.clone()]);
        assert!(resample_test(&whole, 8, 3).is_err());
        assert!(resample_test(&whole, 0, 3).is_err());
    }

    #[test]
    fn numeric_ids_sort_before_text() {
        let mut ids: Vec<InstanceId> = ["10", "9", "b", "a", "010"].map(InstanceId::from).to_vec();
        ids.sort();
        let got: Vec<_> = ids.iter().map(|i| i.as_str()).collect();
        assert_eq!(got, ["9", "010", "10", "a", "b"]);
    }

    proptest! {
        #[test]
        fn split_partitions_input(n in 1usize..300, seed in any::<u64>()) {
            let data = toy(n);
            let bundle = split_dataset(&data, DEFAULT_FRACTIONS, seed).unwrap();
            let mut ids: Vec<InstanceId> = bundle.train.iter()
                .chain(&bundle.val1).chain(&bundle.val2).chain(&bundle.test)
                .map(|i| i.id.clone()).collect();
            prop_assert_eq!(ids.len(), n);
            ids.sort();
            ids.dedup();
            prop_assert_eq!(ids.len(), n);
            let sizes = [bundle.train.len(), bundle.val1.len(), bundle.val2.len(), bundle.test.len()];
            for (size, f) in sizes.iter().zip(DEFAULT_FRACTIONS) {
                prop_assert!((*size as f64 - f * n as f64).abs() < 1.0 + 1e-9);
            }
        }

        #[test]
        fn resample_partitions_test(n in 1usize..200, parts in 1usize..20, seed in any::<u64>()) {
            prop_assume!(parts <= n);
            let data = toy(n);
            let sets = resample_test(&data, parts, seed).unwrap();
            prop_assert_eq!(sets.len(), parts);
            let mut ids: Vec<_> = sets.iter().flatten().map(|i| i.id.clone()).collect();
            ids.sort();
            ids.dedup();
            prop_assert_eq!(ids.len(), n);
            let min = sets.iter().map(Vec::len).min().unwrap();
            let max = sets.iter().map(Vec::len).max().unwrap();
            prop_assert!(max - min <= 1);
        }

        #[test]
        fn binning_is_total_and_order_preserving(a in 10.0f64..70.0, b in 10.0f64..70.0) {
            let binning = Binning::new(vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0]).unwrap();
            let ia = binning.bin_index(a).unwrap();
            let ib = binning.bin_index(b).unwrap();
            if a <= b { prop_assert!(ia <= ib); }
            let lo = binning.edges[ia];
            let hi = binning.edges[ia + 1];
            prop_assert!(lo <= a && a < hi);
        }
    }
}
