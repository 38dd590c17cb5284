//! Probabilistic base classifiers: a built-in logistic model over one-hot
//! items, or an external `id,p_pos` table produced by any other model.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{DatasetManifest, Instance, InstanceId};
use crate::error::{Error, Result};

const MAX_EPOCHS: usize = 500;
const TOLERANCE: f64 = 1e-6;
const LEARNING_RATE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProbClassifier {
    BuiltinLogistic(LogisticModel),
    ExternalTable(ExternalTable),
}

/// Logistic regression over one-hot `column=value` items.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub columns: Vec<String>,
    pub bias: f64,
    /// Keyed by column, then categorical value. Unseen values weigh 0.
    pub weights: BTreeMap<String, BTreeMap<String, f64>>,
    pub epochs: usize,
}

impl LogisticModel {
    pub fn predict_proba(&self, instance: &Instance) -> f64 {
        let z = self.bias
            + self
                .columns
                .iter()
                .filter_map(|col| {
                    let value = instance.values.get(col)?;
                    self.weights.get(col)?.get(value)
                })
                .sum::<f64>();
        sigmoid(z)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExternalTable {
    pub probabilities: BTreeMap<InstanceId, f64>,
}

impl ExternalTable {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(file)
    }

    /// Parses a CSV with columns `id,p_pos`.
    pub fn read<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            id: String,
            p_pos: f64,
        }
        let mut probabilities = BTreeMap::new();
        for (row, record) in csv::Reader::from_reader(reader).deserialize().enumerate() {
            let Row { id, p_pos } = record?;
            if !(0.0..=1.0).contains(&p_pos) {
                return Err(Error::Cell {
                    row,
                    column: "p_pos".into(),
                    message: format!("probability {p_pos} outside [0, 1]"),
                });
            }
            probabilities.insert(InstanceId(id), p_pos);
        }
        Ok(ExternalTable { probabilities })
    }
}

impl ProbClassifier {
    pub fn external(probabilities: impl IntoIterator<Item = (InstanceId, f64)>) -> Self {
        ProbClassifier::ExternalTable(ExternalTable {
            probabilities: probabilities.into_iter().collect(),
        })
    }

    pub fn p_pos(&self, instance: &Instance) -> Result<f64> {
        match self {
            ProbClassifier::BuiltinLogistic(model) => Ok(model.predict_proba(instance)),
            ProbClassifier::ExternalTable(table) => table
                .probabilities
                .get(&instance.id)
                .copied()
                .ok_or_else(|| Error::MissingPrediction(instance.id.to_string())),
        }
    }
}

/// An instance together with the base classifier's output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredInstance {
    pub instance: Instance,
    pub p_pos: f64,
    /// 1 iff `p_pos >= 0.5`; the tie goes to class 1.
    pub prediction: u8,
    /// Softmax response `max(p_pos, 1 - p_pos)`.
    pub confidence: f64,
}

impl ScoredInstance {
    pub fn new(instance: Instance, p_pos: f64) -> Self {
        let p_pos = p_pos.clamp(0.0, 1.0);
        let prediction = u8::from(p_pos >= 0.5);
        ScoredInstance {
            instance,
            p_pos,
            prediction,
            confidence: p_pos.max(1.0 - p_pos),
        }
    }

    pub fn id(&self) -> &InstanceId {
        &self.instance.id
    }
}

pub fn score(model: &ProbClassifier, instances: &[Instance]) -> Result<Vec<ScoredInstance>> {
    instances
        .iter()
        .map(|i| Ok(ScoredInstance::new(i.clone(), model.p_pos(i)?)))
        .collect()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Fits the built-in logistic model by full-batch gradient descent on the
/// mean log-loss, over one-hot items of every sensitive and legal feature.
/// Stops when no parameter moves more than 1e-6 or after 500 epochs.
pub fn fit_builtin(train: &[Instance], manifest: &DatasetManifest) -> Result<ProbClassifier> {
    let labeled: Vec<&Instance> = train.iter().filter(|i| i.label.is_some()).collect();
    if labeled.is_empty() {
        return Err(Error::Fit("no labeled training instances".into()));
    }
    let positives = labeled.iter().filter(|i| i.label == Some(1)).count();
    if positives == 0 || positives == labeled.len() {
        return Err(Error::Fit("training data contains a single class".into()));
    }

    let columns: Vec<String> = manifest.feature_columns().cloned().collect();
    let mut index: BTreeMap<(usize, String), usize> = BTreeMap::new();
    for instance in &labeled {
        for (c, col) in columns.iter().enumerate() {
            if let Some(v) = instance.values.get(col) {
                let next = index.len();
                index.entry((c, v.clone())).or_insert(next);
            }
        }
    }
    let rows: Vec<(Vec<usize>, f64)> = labeled
        .iter()
        .map(|instance| {
            let active = columns
                .iter()
                .enumerate()
                .filter_map(|(c, col)| {
                    let v = instance.values.get(col)?;
                    index.get(&(c, v.clone())).copied()
                })
                .collect();
            (active, f64::from(instance.label.unwrap_or(0)))
        })
        .collect();

    let n = rows.len() as f64;
    let mut weights = vec![0.0; index.len()];
    let mut bias = 0.0;
    let mut grad = vec![0.0; index.len()];
    let mut epochs = 0;
    while epochs < MAX_EPOCHS {
        epochs += 1;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_bias = 0.0;
        for (active, y) in &rows {
            let z = bias + active.iter().map(|&j| weights[j]).sum::<f64>();
            let err = sigmoid(z) - y;
            grad_bias += err;
            for &j in active {
                grad[j] += err;
            }
        }
        let mut max_step = (LEARNING_RATE * grad_bias / n).abs();
        bias -= LEARNING_RATE * grad_bias / n;
        for (w, g) in weights.iter_mut().zip(&grad) {
            let step = LEARNING_RATE * g / n;
            *w -= step;
            max_step = max_step.max(step.abs());
        }
        if max_step < TOLERANCE {
            break;
        }
    }

    let mut table: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for ((c, value), j) in index {
        table.entry(columns[c].clone()).or_default().insert(value, weights[j]);
    }
    Ok(ProbClassifier::BuiltinLogistic(LogisticModel {
        columns,
        bias,
        weights: table,
        epochs,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RawValue;

    fn manifest() -> DatasetManifest {
        DatasetManifest::from_json(
            r#"{"sensitive_features":["s"],"legal_features":["a","b"],"target":"y",
                "positive_label":"1","reference_group":{"s":"r"}}"#,
        )
        .unwrap()
    }

    fn instance(id: usize, s: &str, a: &str, b: &str, label: u8) -> Instance {
        let values: BTreeMap<String, String> =
            [("s", s), ("a", a), ("b", b)].map(|(k, v)| (k.to_owned(), v.to_owned())).into();
        Instance {
            id: InstanceId(id.to_string()),
            raw_values: values
                .iter()
                .map(|(k, v)| (k.clone(), RawValue::Category(v.clone())))
                .collect(),
            values,
            label: Some(label),
        }
    }

    #[test]
    fn separable_data_is_learned() {
        // y = 1 iff a = hi; b is noise
        let train: Vec<_> = (0..200)
            .map(|i| {
                let a = if i % 2 == 0 { "hi" } else { "lo" };
                let b = ["x", "y", "z"][i % 3];
                let s = ["r", "q"][(i / 2) % 2];
                instance(i, s, a, b, u8::from(i % 2 == 0))
            })
            .collect();
        let model = fit_builtin(&train, &manifest()).unwrap();
        let scored = score(&model, &train).unwrap();
        let correct = scored
            .iter()
            .filter(|s| Some(s.prediction) == s.instance.label)
            .count();
        assert!(correct as f64 / train.len() as f64 >= 0.95);
    }

    #[test]
    fn uninformative_features_give_half() {
        let train: Vec<_> = (0..100).map(|i| instance(i, "r", "k", "k", (i % 2) as u8)).collect();
        let model = fit_builtin(&train, &manifest()).unwrap();
        let p = model.p_pos(&instance(999, "q", "other", "k", 0)).unwrap();
        assert!((p - 0.5).abs() < 0.05, "{p}");
    }

    #[test]
    fn single_class_is_rejected() {
        let train: Vec<_> = (0..10).map(|i| instance(i, "r", "k", "k", 1)).collect();
        assert!(matches!(fit_builtin(&train, &manifest()), Err(Error::Fit(_))));
    }

    #[test]
    fn confidence_and_tie_rule() {
        let base = instance(0, "r", "k", "k", 0);
        let s = ScoredInstance::new(base.clone(), 0.2583);
        assert_eq!(s.prediction, 0);
        assert!((s.confidence - 0.7417).abs() < 1e-12);

        let s = ScoredInstance::new(base.clone(), 0.5);
        assert_eq!((s.prediction, s.confidence), (1, 0.5));

        let s = ScoredInstance::new(base, 1.0);
        assert_eq!((s.prediction, s.confidence), (1, 1.0));
    }

    #[test]
    fn external_table_scores_and_reports_missing_ids() {
        let table = ExternalTable::read("id,p_pos\n0,0.9\n1,0.2\n".as_bytes()).unwrap();
        let model = ProbClassifier::ExternalTable(table);
        let rows = vec![instance(0, "r", "k", "k", 1), instance(1, "q", "k", "k", 0)];
        let scored = score(&model, &rows).unwrap();
        assert_eq!(scored[0].prediction, 1);
        assert_eq!(scored[1].prediction, 0);
        assert!((scored[1].confidence - 0.8).abs() < 1e-12);

        let err = score(&model, &[instance(7, "r", "k", "k", 1)]).unwrap_err();
        assert!(err.to_string().contains('7'));
    }

    #[test]
    fn external_table_rejects_out_of_range_probabilities() {
        assert!(ExternalTable::read("id,p_pos\n0,1.5\n".as_bytes()).is_err());
    }

    #[test]
    fn model_serializes_with_kind_tag() {
        let model = ProbClassifier::external([(InstanceId::from("a"), 0.25)]);
        let json = serde_json::to_string(&model).unwrap();
        assert!(json.contains("\"kind\":\"external-table\""), "{json}");
        let back: ProbClassifier = serde_json::from_str(&json).unwrap();
        assert_eq!(back, model);
    }
}
