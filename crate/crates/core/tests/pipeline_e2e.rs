use ifac::decision::{Action, Method};
use ifac::pipeline::{prepare, read_jsonl, run_prepared, write_artifacts, RunConfig};
use ifac::review::{DecisionLog, ReviewStore};
use ifac::rules::RuleKind;
use ifac::synthetic::{generate_synthetic, SyntheticSpec};

fn spec(n: usize, bias: f64) -> SyntheticSpec {
    SyntheticSpec {
        n,
        bias,
        ..SyntheticSpec::default()
    }
}

#[test]
fn same_seed_same_outcomes() {
    let data = generate_synthetic(&spec(4000, 0.5), 3).unwrap();
    let instances = data.instances().unwrap();
    let config = RunConfig {
        seed: 3,
        ..RunConfig::default()
    };
    let a = run_prepared(&prepare(&instances, &data.manifest, &config).unwrap(), 0.8, 0.5).unwrap();
    let b = run_prepared(&prepare(&instances, &data.manifest, &config).unwrap(), 0.8, 0.5).unwrap();
    assert_eq!(a.outcomes, b.outcomes);
    assert_eq!(a.model, b.model);
    assert_eq!(
        serde_json::to_string(&a.reports).unwrap(),
        serde_json::to_string(&b.reports).unwrap()
    );
}

#[test]
fn strong_bias_is_recovered_as_a_rule() {
    let data = generate_synthetic(&spec(10_000, 2.0), 1).unwrap();
    let instances = data.instances().unwrap();
    let prepared = prepare(&instances, &data.manifest, &RunConfig::default()).unwrap();
    let planted = prepared.rules.iter().find(|r| {
        r.kind == RuleKind::Discriminatory
            && r.slift > 0.3
            && r.antecedent.sensitive.items().iter().any(|i| i.column == "sex" && i.value == "F")
    });
    assert!(planted.is_some(), "no high-slift rule on sex=F among {} rules", prepared.rules.len());
    assert!(!prepared.val2_partition.unfair.is_empty());
}

#[test]
fn unbiased_data_yields_few_unfair_flags() {
    let data = generate_synthetic(&spec(10_000, 0.0), 1).unwrap();
    let instances = data.instances().unwrap();
    let prepared = prepare(&instances, &data.manifest, &RunConfig::default()).unwrap();
    let unfair = prepared.test_verdicts.iter().filter(|v| !v.fair).count();
    assert!(
        (unfair as f64) < 0.01 * prepared.scored_test.len() as f64,
        "{unfair} unfair test predictions without planted bias"
    );
}

#[test]
fn artifacts_reopen_as_a_review_store() {
    let data = generate_synthetic(&spec(3000, 1.0), 2).unwrap();
    let instances = data.instances().unwrap();
    let config = RunConfig::default();
    let prepared = prepare(&instances, &data.manifest, &config).unwrap();
    let result = run_prepared(&prepared, 0.8, 1.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_artifacts(dir.path(), &config, &prepared, &result).unwrap();

    let outcomes: Vec<ifac::decision::SelectiveOutcome> = read_jsonl(&dir.path().join("outcomes.jsonl")).unwrap();
    assert_eq!(outcomes, result.outcomes);

    let store = ReviewStore::open(dir.path()).unwrap();
    assert_eq!(
        serde_json::to_value(store.report().unwrap()).unwrap(),
        serde_json::to_value(&result.reports).unwrap()
    );
    let rejections = result
        .outcomes
        .iter()
        .filter(|o| o.method == Method::IFAC && o.action == Action::AbstainUnfair)
        .count();
    assert_eq!(store.rejections(0, usize::MAX).total, rejections);
    assert!(DecisionLog::open(dir.path().join("decisions.jsonl")).unwrap().active().is_empty());
}
