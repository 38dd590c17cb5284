//! Planted-bias synthetic income data.
//!
//! Sensitive attributes are drawn independently of the legal ones. The label
//! is Bernoulli with a logit that depends on the legal features, minus
//! `bias` times the summed penalty weights of the instance's sensitive
//! values, plus Gaussian noise. With `bias = 0` the label is independent of
//! the sensitive attributes given the legal ones.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::data::{read_dataset, Binning, DatasetManifest, Instance};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryShare {
    pub value: String,
    pub proportion: f64,
    /// Multiplied by [`SyntheticSpec::bias`] and subtracted from the logit.
    #[serde(default)]
    pub penalty: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitiveSpec {
    pub name: String,
    /// The first value is the reference group.
    pub values: Vec<CategoryShare>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub sensitive: Vec<SensitiveSpec>,
    pub bias: f64,
    /// Scale of the legal-feature part of the logit.
    pub signal: f64,
    /// Standard deviation of the Gaussian logit noise.
    pub noise: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        let share = |value: &str, proportion, penalty| CategoryShare {
            value: value.to_owned(),
            proportion,
            penalty,
        };
        SyntheticSpec {
            n: 20_000,
            sensitive: vec![
                SensitiveSpec {
                    name: "sex".into(),
                    values: vec![share("M", 0.55, 0.0), share("F", 0.45, 1.0)],
                },
                SensitiveSpec {
                    name: "race".into(),
                    values: vec![share("W", 0.6, 0.0), share("B", 0.25, 1.0), share("O", 0.15, 0.5)],
                },
            ],
            bias: 0.5,
            signal: 0.5,
            noise: 0.5,
        }
    }
}

struct Level {
    name: &'static str,
    share: f64,
    effect: f64,
}

const EDUCATION: [Level; 5] = [
    Level { name: "HS", share: 0.35, effect: -1.2 },
    Level { name: "College", share: 0.30, effect: -0.4 },
    Level { name: "Bachelor", share: 0.20, effect: 0.6 },
    Level { name: "Master", share: 0.10, effect: 1.2 },
    Level { name: "Doctorate", share: 0.05, effect: 1.6 },
];

const OCCUPATION: [Level; 5] = [
    Level { name: "Service", share: 0.25, effect: -0.8 },
    Level { name: "Sales", share: 0.20, effect: -0.2 },
    Level { name: "Admin", share: 0.20, effect: -0.1 },
    Level { name: "Technical", share: 0.20, effect: 0.5 },
    Level { name: "Management", share: 0.15, effect: 0.9 },
];

pub const TARGET: &str = "income";
pub const ID_COLUMN: &str = "id";

/// Generated rows as CSV text plus the matching manifest.
#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub csv: String,
    pub manifest: DatasetManifest,
}

impl SyntheticDataset {
    pub fn instances(&self) -> Result<Vec<Instance>> {
        read_dataset(self.csv.as_bytes(), &self.manifest)
    }

    /// Writes `data.csv` and `manifest.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let data = dir.join("data.csv");
        std::fs::write(&data, &self.csv).map_err(|e| Error::io(&data, e))?;
        let manifest = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(&manifest, text + "\n").map_err(|e| Error::io(&manifest, e))?;
        Ok(())
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Argument("synthetic dataset needs n > 0".into()));
        }
        if self.sensitive.is_empty() {
            return Err(Error::Argument("at least one sensitive feature is required".into()));
        }
        if !(self.bias.is_finite() && self.signal.is_finite() && self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::Argument("bias and signal must be finite and noise non-negative".into()));
        }
        for s in &self.sensitive {
            if s.values.is_empty() {
                return Err(Error::Argument(format!("`{}` has no values", s.name)));
            }
            if s.values.iter().any(|v| v.proportion.is_nan() || v.proportion < 0.0 || !v.penalty.is_finite()) {
                return Err(Error::Argument(format!("`{}` has an invalid proportion", s.name)));
            }
            let total: f64 = s.values.iter().map(|v| v.proportion).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Argument(format!(
                    "proportions of `{}` sum to {total}, not 1",
                    s.name
                )));
            }
        }
        Ok(())
    }

    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            sensitive_features: self.sensitive.iter().map(|s| s.name.clone()).collect(),
            legal_features: ["age", "education", "occupation", "hours"].map(String::from).to_vec(),
            target: TARGET.into(),
            positive_label: "1".into(),
            negative_label: Some("0".into()),
            reference_group: self
                .sensitive
                .iter()
                .map(|s| (s.name.clone(), s.values[0].value.clone()))
                .collect(),
            bins: BTreeMap::from([
                ("age".to_owned(), Binning { edges: vec![18.0, 30.0, 40.0, 50.0, 60.0, 71.0] }),
                ("hours".to_owned(), Binning { edges: vec![0.0, 20.0, 35.0, 41.0, 50.0, 81.0] }),
            ]),
            id_column: Some(ID_COLUMN.into()),
        }
    }
}

fn weights(levels: &[Level]) -> WeightedIndex<f64> {
    WeightedIndex::new(levels.iter().map(|l| l.share)).expect("static shares are valid")
}

/// Deterministic under `seed`.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sensitive: Vec<WeightedIndex<f64>> = spec
        .sensitive
        .iter()
        .map(|s| {
            WeightedIndex::new(s.values.iter().map(|v| v.proportion))
                .map_err(|e| Error::Argument(format!("`{}`: {e}", s.name)))
        })
        .collect::<Result<_>>()?;
    let education = weights(&EDUCATION);
    let occupation = weights(&OCCUPATION);
    let hours_dist = Normal::new(40.0_f64, 10.0).expect("valid normal");
    let noise = Normal::new(0.0, spec.noise).expect("noise validated");

    let mut csv = String::with_capacity(spec.n * 48);
    csv.push_str(ID_COLUMN);
    for s in &spec.sensitive {
        csv.push(',');
        csv.push_str(&s.name);
    }
    csv.push_str(",age,education,occupation,hours,");
    csv.push_str(TARGET);
    csv.push('\n');

    for id in 0..spec.n {
        let mut penalty = 0.0;
        let mut groups = Vec::with_capacity(spec.sensitive.len());
        for (s, dist) in spec.sensitive.iter().zip(&sensitive) {
            let v = &s.values[dist.sample(&mut rng)];
            penalty += v.penalty;
            groups.push(v.value.as_str());
        }
        let age: u32 = rng.random_range(18..=70);
        let edu = &EDUCATION[education.sample(&mut rng)];
        let occ = &OCCUPATION[occupation.sample(&mut rng)];
        let hours: f64 = hours_dist.sample(&mut rng).round().clamp(5.0, 80.0);

        let legal = 0.04 * (f64::from(age) - 40.0) + edu.effect + occ.effect + 0.06 * (hours - 40.0);
        let logit = -0.2 + spec.signal * legal - spec.bias * penalty
            + noise.sample(&mut rng);
        let p = 1.0 / (1.0 + (-logit).exp());
        let label = u8::from(rng.random::<f64>() < p);

        let _ = write!(csv, "{id}");
        for g in groups {
            csv.push(',');
            csv.push_str(g);
        }
        let _ = writeln!(csv, ",{age},{},{},{hours},{label}", edu.name, occ.name);
    }
    Ok(SyntheticDataset {
        csv,
        manifest: spec.manifest(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn positive_rate(instances: &[Instance], col: &str, value: &str) -> f64 {
        let group: Vec<_> = instances.iter().filter(|i| i.value(col) == Some(value)).collect();
        group.iter().filter(|i| i.label == Some(1)).count() as f64 / group.len() as f64
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = SyntheticSpec { n: 500, ..Default::default() };
        let a = generate_synthetic(&spec, 3).unwrap();
        let b = generate_synthetic(&spec, 3).unwrap();
        let c = generate_synthetic(&spec, 4).unwrap();
        assert_eq!(a.csv, b.csv);
        assert_ne!(a.csv, c.csv);
        assert_eq!(a.instances().unwrap().len(), 500);
    }

    #[test]
    fn no_bias_means_no_group_gap() {
        let spec = SyntheticSpec { n: 10_000, bias: 0.0, ..Default::default() };
        let rows = generate_synthetic(&spec, 11).unwrap().instances().unwrap();
        let gap = (positive_rate(&rows, "sex", "M") - positive_rate(&rows, "sex", "F")).abs();
        assert!(gap < 0.03, "gap {gap}");
        let gap = (positive_rate(&rows, "race", "W") - positive_rate(&rows, "race", "B")).abs();
        assert!(gap < 0.03, "gap {gap}");
    }

    #[test]
    fn bias_depresses_penalized_groups() {
        let spec = SyntheticSpec { n: 10_000, bias: 1.5, ..Default::default() };
        let rows = generate_synthetic(&spec, 11).unwrap().instances().unwrap();
        assert!(positive_rate(&rows, "sex", "M") - positive_rate(&rows, "sex", "F") > 0.1);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let spec = SyntheticSpec { n: 0, ..Default::default() };
        assert!(matches!(generate_synthetic(&spec, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn proportions_must_sum_to_one() {
        let mut spec = SyntheticSpec { n: 10, ..Default::default() };
        spec.sensitive[0].values[0].proportion = 0.9;
        assert!(generate_synthetic(&spec, 0).is_err());
    }
}
