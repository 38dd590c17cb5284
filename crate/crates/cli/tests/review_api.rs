use std::collections::BTreeMap;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use ifac::calibration::FairnessVerdict;
use ifac::data::{DatasetManifest, Instance, InstanceId, RawValue};
use ifac::decision::{Action, Method, SelectiveOutcome};
use ifac::metrics::MethodReport;
use ifac::review::{DecisionLog, ReviewStore};
use ifac::rules::{Antecedent, DecisionRule, Item, Itemset, RuleCounts};
use ifac::situation::{Neighbor, STResult};
use ifac_cli::server::router;
use serde_json::{json, Value};
use tower::ServiceExt;

fn manifest() -> DatasetManifest {
    DatasetManifest::from_json(
        r#"{"sensitive_features":["g"],"legal_features":["x"],"target":"y",
            "positive_label":"1","reference_group":{"g":"a"}}"#,
    )
    .unwrap()
}

fn instance(id: usize, group: &str, label: u8) -> Instance {
    Instance {
        id: InstanceId(id.to_string()),
        values: BTreeMap::from([("g".into(), group.into()), ("x".into(), "v".into())]),
        raw_values: BTreeMap::from([
            ("g".into(), RawValue::Category(group.into())),
            ("x".into(), RawValue::Number(id as f64)),
        ]),
        label: Some(label),
    }
}

fn neighbors(group: &str, positives: usize) -> Vec<Neighbor> {
    (0..10)
        .map(|i| Neighbor {
            id: InstanceId(format!("{group}{i}")),
            distance: i as f64 / 10.0,
            label: u8::from(i < positives),
            features: BTreeMap::from([("x".into(), i.to_string()), ("g".into(), group.into())]),
        })
        .collect()
}

fn unfair_verdict() -> FairnessVerdict {
    let antecedent = Antecedent {
        legal: Itemset::new([Item::new("x", "v")]).unwrap(),
        sensitive: Itemset::new([Item::new("g", "b")]).unwrap(),
    };
    let counts = RuleCounts {
        group_total: 100,
        group_hits: 90,
        negated_total: 100,
        negated_hits: 40,
    };
    let rule = DecisionRule::from_counts(antecedent, 0, counts, 1000).unwrap();
    FairnessVerdict {
        fair: false,
        rule: Some(rule),
        matching_rules: 1,
        situation: Some(STResult {
            neighbors_ref: neighbors("a", 8),
            neighbors_nonref: neighbors("b", 2),
            dec_r: 0.8,
            dec_nr: 0.2,
            score: 0.6,
            flagged: true,
        }),
        st_error: None,
    }
}

/// 40 instances: group a ids 0..20, group b ids 20..40; labels alternate.
/// IFAC emits 1 for even ids in a (10 of 20) and for ids 20..24 in b
/// (4 of 16 accepted). Ids 30..34 are unfairness-based rejections with
/// prediction 0; ids 34..40 predict 0.
fn fixture() -> (Vec<SelectiveOutcome>, Vec<Instance>) {
    let instances: Vec<Instance> = (0..40)
        .map(|i| instance(i, if i < 20 { "a" } else { "b" }, (i % 2) as u8))
        .collect();
    let outcomes = (0..40)
        .map(|i| {
            let (action, prediction, verdict) = match i {
                0..=19 => (Action::Predict, u8::from(i % 2 == 0), None),
                20..=23 => (Action::Predict, 1, None),
                30..=33 => (Action::AbstainUnfair, 0, Some(unfair_verdict())),
                _ => (Action::Predict, 0, None),
            };
            SelectiveOutcome {
                id: InstanceId(i.to_string()),
                method: Method::IFAC,
                action,
                prediction,
                emitted_label: (action == Action::Predict).then_some(prediction),
                confidence: 0.9,
                verdict,
            }
        })
        .collect();
    (outcomes, instances)
}

fn store(log: DecisionLog) -> ReviewStore {
    let (outcomes, instances) = fixture();
    ReviewStore::new(outcomes, &instances, &manifest(), Vec::new(), log)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let request = Request::builder().method(method).uri(uri);
    let request = match body {
        Some(b) => request
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => request.body(Body::empty()).unwrap(),
    };
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = to_bytes(response.into_body(), usize::MAX).await.unwrap();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

fn group_pdr(report: &Value, group: &str) -> f64 {
    report[0]["fairness"]["groups"]
        .as_array()
        .unwrap()
        .iter()
        .find(|g| g["group"] == group)
        .unwrap()["pdr"]["mean"]
        .as_f64()
        .unwrap()
}

#[tokio::test]
async fn lists_unfair_rejections() {
    let app = router(store(DecisionLog::in_memory()));
    let (status, page) = call(&app, "GET", "/rejections", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(page["total"], 4);
    let ids: Vec<&str> = page["items"].as_array().unwrap().iter().map(|i| i["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["30", "31", "32", "33"]);
    assert_eq!(page["items"][0]["rule"], "g=b, x=v -> 0");
    assert!((page["items"][0]["slift"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(page["items"][0]["confidence"], 0.9);

    let (_, page) = call(&app, "GET", "/rejections?offset=3&limit=10", None).await;
    assert_eq!(page["items"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn detail_has_ten_neighbors_per_group() {
    let app = router(store(DecisionLog::in_memory()));
    let (status, detail) = call(&app, "GET", "/rejections/31", None).await;
    assert_eq!(status, StatusCode::OK);
    let st = &detail["situation"];
    assert_eq!(st["neighbors_ref"].as_array().unwrap().len(), 10);
    assert_eq!(st["neighbors_nonref"].as_array().unwrap().len(), 10);
    assert_eq!(st["neighbors_ref"][0]["label"], 1);
    assert!(st["neighbors_nonref"][0]["features"]["x"].is_string());
    let rule = &detail["rule"];
    assert!((rule["confidence"].as_f64().unwrap() - 0.9).abs() < 1e-12);
    assert!((rule["negated_confidence"].as_f64().unwrap() - 0.4).abs() < 1e-12);
    assert_eq!(detail["features"]["g"], "b");
    assert_eq!(detail["history"], json!([]));
}

#[tokio::test]
async fn unknown_ids_are_not_found() {
    let app = router(store(DecisionLog::in_memory()));
    let (status, body) = call(&app, "GET", "/rejections/999", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body["error"].as_str().unwrap().contains("999"));
    // a fair prediction is not a rejection
    let (status, _) = call(&app, "GET", "/rejections/5", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let decision = json!({"reviewer": "r", "action": "keep_original"});
    let (status, _) = call(&app, "POST", "/rejections/5/decision", Some(decision)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn malformed_decisions_list_fields() {
    let app = router(store(DecisionLog::in_memory()));
    let decision = json!({"reviewer": "", "action": "override_label"});
    let (status, body) = call(&app, "POST", "/rejections/30/decision", Some(decision)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let fields: Vec<&str> = body["fields"].as_array().unwrap().iter().map(|f| f["field"].as_str().unwrap()).collect();
    assert_eq!(fields, ["reviewer", "label"]);

    let (status, _) = call(&app, "POST", "/rejections/30/decision", Some(json!({"action": "nope"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn override_changes_report_by_hand_computed_delta() {
    let app = router(store(DecisionLog::in_memory()));
    let (_, before) = call(&app, "GET", "/report", None).await;
    // group b accepts ids 20..30 and 34..40: 16 instances, 4 positive
    assert_eq!(group_pdr(&before, "g=b"), 4.0 / 16.0);
    assert_eq!(group_pdr(&before, "g=a"), 10.0 / 20.0);

    let decision = json!({"reviewer": "r1", "action": "override_label", "label": 1, "rationale": "similar to references"});
    let (status, echoed) = call(&app, "POST", "/rejections/30/decision", Some(decision)).await;
    assert_eq!(status, StatusCode::CREATED);
    assert!(!echoed["timestamp"].as_str().unwrap().is_empty());

    let (_, after) = call(&app, "GET", "/report", None).await;
    let delta = group_pdr(&after, "g=b") - group_pdr(&before, "g=b");
    assert!((delta - (5.0 / 17.0 - 4.0 / 16.0)).abs() < 1e-15);
    assert_eq!(group_pdr(&after, "g=a"), 10.0 / 20.0);

    // keep_original on another rejection emits its prediction (0)
    let decision = json!({"reviewer": "r1", "action": "keep_original"});
    call(&app, "POST", "/rejections/31/decision", Some(decision)).await;
    let (_, again) = call(&app, "GET", "/report", None).await;
    assert_eq!(group_pdr(&again, "g=b"), 5.0 / 18.0);

    let (_, detail) = call(&app, "GET", "/rejections/30", None).await;
    assert_eq!(detail["decision"]["action"], "override_label");
    assert_eq!(detail["history"].as_array().unwrap().len(), 1);
    let (_, page) = call(&app, "GET", "/rejections", None).await;
    assert_eq!(page["items"][1]["decision"]["action"], "keep_original");
}

#[tokio::test]
async fn latest_decision_wins() {
    let app = router(store(DecisionLog::in_memory()));
    for d in [
        json!({"reviewer": "r1", "action": "override_label", "label": 1}),
        json!({"reviewer": "r2", "action": "uphold_abstain"}),
    ] {
        call(&app, "POST", "/rejections/30/decision", Some(d)).await;
    }
    let (_, report) = call(&app, "GET", "/report", None).await;
    assert_eq!(group_pdr(&report, "g=b"), 4.0 / 16.0);
    let (_, detail) = call(&app, "GET", "/rejections/30", None).await;
    assert_eq!(detail["decision"]["reviewer"], "r2");
    assert_eq!(detail["history"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn replaying_the_log_reproduces_the_amended_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("decisions.jsonl");
    let app = router(store(DecisionLog::open(&path).unwrap()));
    for (id, d) in [
        ("30", json!({"reviewer": "r1", "action": "override_label", "label": 1, "timestamp": "2026-03-01T10:00:00Z"})),
        ("32", json!({"reviewer": "r1", "action": "keep_original", "timestamp": "2026-03-01T10:05:00Z"})),
        ("30", json!({"reviewer": "r2", "action": "override_label", "label": 0, "timestamp": "2026-03-01T10:09:00Z"})),
    ] {
        let (status, _) = call(&app, "POST", &format!("/rejections/{id}/decision"), Some(d)).await;
        assert_eq!(status, StatusCode::CREATED);
    }
    let (_, live) = call(&app, "GET", "/report", None).await;

    let replayed = store(DecisionLog::open(&path).unwrap());
    assert_eq!(replayed.log().entries().len(), 3);
    let a = serde_json::to_vec(&replayed.report().unwrap()).unwrap();
    let b = serde_json::to_vec(&store(DecisionLog::open(&path).unwrap()).report().unwrap()).unwrap();
    assert_eq!(a, b);
    let live: Vec<MethodReport> = serde_json::from_value(live).unwrap();
    assert_eq!(serde_json::to_vec(&live).unwrap(), a);
}

#[tokio::test]
async fn zero_decisions_leave_the_report_unchanged() {
    let s = store(DecisionLog::in_memory());
    let unamended = serde_json::to_vec(&s.unamended_report().unwrap()).unwrap();
    let app = router(s);
    let (_, report) = call(&app, "GET", "/report", None).await;
    let report: Vec<MethodReport> = serde_json::from_value(report).unwrap();
    assert_eq!(serde_json::to_vec(&report).unwrap(), unamended);
}
