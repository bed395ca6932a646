use super::*;
use crate::store::CrashPoint;
use eegauth_core::classifiers::train;
use eegauth_core::dataset::Instance;
use eegauth_core::features::N_FEATURES;

fn vectors(centre: f64, n: usize, salt: u64) -> Vec<FeatureVector> {
    (0..n)
        .map(|i| {
            let mut v = [0.0; N_FEATURES];
            for (j, x) in v.iter_mut().enumerate() {
                let h = (i as u64 * 2654435761 + j as u64 * 40503 + salt * 97) % 1000;
                *x = centre + h as f64 / 1000.0;
            }
            FeatureVector::new(v).unwrap()
        })
        .collect()
}

/// Genuine near 50, impostors near 10: any learner separates them.
fn toy_model() -> TrainedModel {
    let mut inst: Vec<Instance> = vectors(50.0, 30, 1)
        .into_iter()
        .enumerate()
        .map(|(i, f)| Instance { label: Label::Genuine, ..Instance::unlabeled("u1", i, f) })
        .collect();
    inst.extend(
        vectors(10.0, 30, 2)
            .into_iter()
            .enumerate()
            .map(|(i, f)| Instance { label: Label::Impostor, ..Instance::unlabeled("u2", i, f) }),
    );
    train(&HyperParams::default_for(AlgorithmId::Knn), &inst, 0).unwrap()
}

fn small_cfg() -> ServiceConfig {
    ServiceConfig {
        budget_s: 30.0,
        class_size: 20,
        k_folds: 5,
        max_evaluations: Some(3),
        serial: true,
        ..ServiceConfig::default()
    }
}

#[test]
fn unanimous_sessions() {
    let m = toy_model();
    let d = authenticate(&m, &vectors(50.0, 10, 3), 0.5).unwrap();
    assert_eq!((d.outcome, d.genuine_fraction, d.n_instances), (Outcome::Grant, 1.0, 10));
    let d = authenticate(&m, &vectors(10.0, 10, 4), 0.5).unwrap();
    assert_eq!((d.outcome, d.genuine_fraction), (Outcome::Deny, 0.0));
}

#[test]
fn tie_denies() {
    let m = toy_model();
    let mut s = vectors(50.0, 5, 3);
    s.extend(vectors(10.0, 5, 4));
    let d = authenticate(&m, &s, 0.5).unwrap();
    assert_eq!(d.genuine_fraction, 0.5);
    assert_eq!(d.outcome, Outcome::Deny);
}

#[test]
fn raising_the_threshold_never_grants_more() {
    let m = toy_model();
    for g in 0..=8 {
        let mut s = vectors(50.0, g, 5);
        s.extend(vectors(10.0, 8 - g, 6));
        let mut granted = true;
        for t in 0..=20 {
            let d = authenticate(&m, &s, t as f64 / 20.0).unwrap();
            let now = d.outcome == Outcome::Grant;
            assert!(granted || !now, "deny flipped to grant at g={g} t={t}");
            granted = now;
        }
    }
}

#[test]
fn bad_sessions() {
    let m = toy_model();
    assert_eq!(authenticate(&m, &[], 0.5), Err(ServiceError::EmptySession));
    assert!(matches!(authenticate(&m, &vectors(50.0, 1, 0), 1.5), Err(ServiceError::InvalidRequest(_))));
    let mut other = m.clone();
    other.feature_order.swap(0, 1);
    assert!(matches!(authenticate(&other, &vectors(50.0, 1, 0), 0.5), Err(ServiceError::Schema(_))));
}

#[test]
fn deserialized_model_decides_identically() {
    let m = toy_model();
    let copy = TrainedModel::from_json(&m.to_json().unwrap()).unwrap();
    for k in 0..20 {
        let mut s = vectors(50.0, k, 7);
        s.extend(vectors(30.0, 20 - k, 8));
        assert_eq!(authenticate(&m, &s, 0.5).unwrap(), authenticate(&copy, &s, 0.5).unwrap());
    }
}

#[test]
fn error_bodies_round_trip() {
    let all = [
        ServiceError::InvalidRequest("a".into()),
        ServiceError::EnrollmentUnavailable("b".into()),
        ServiceError::NoModel("c".into()),
        ServiceError::Training("d".into()),
        ServiceError::Schema("e".into()),
        ServiceError::EmptySession,
        ServiceError::NotFound("f".into()),
        ServiceError::Storage("g".into()),
        ServiceError::Internal("h".into()),
    ];
    for e in all {
        assert_eq!(ServiceError::from_body(e.body()), e);
        assert!((400..600).contains(&e.http_status()));
    }
    assert!(ServiceError::NoModel(String::new()).is_retryable());
}

#[test]
fn pool_excludes_the_named_user() {
    let dir = tempfile::tempdir().unwrap();
    let store = FeatureStore::open(dir.path()).unwrap();
    store.put_user("alice", &vectors(1.0, 4, 1)).unwrap();
    store.put_user("bob", &vectors(2.0, 3, 2)).unwrap();
    store.put_user("carol", &vectors(3.0, 2, 3)).unwrap();
    let pool = store.get_pool("alice").unwrap();
    assert_eq!(pool.len(), 5);
    assert!(pool.iter().all(|i| i.source_subject != "alice"));
    assert_eq!(store.list_users().unwrap(), ["alice", "bob", "carol"]);
    assert_eq!(store.get_pool("nobody").unwrap().len(), 9);
}

#[test]
fn second_put_replaces_first() {
    let dir = tempfile::tempdir().unwrap();
    let store = FeatureStore::open(dir.path()).unwrap();
    store.put_user("u", &vectors(1.0, 6, 1)).unwrap();
    store.put_user("u", &vectors(7.0, 2, 1)).unwrap();
    let got = store.get_user("u").unwrap().unwrap();
    assert_eq!(got.iter().map(|i| i.features).collect::<Vec<_>>(), vectors(7.0, 2, 1));
    assert_eq!(store.read_manifest().unwrap().users["u"].n_instances, 2);
    // A reopened store reads the same thing.
    let again = FeatureStore::open(dir.path()).unwrap();
    assert_eq!(again.get_user("u").unwrap().unwrap(), got);
}

#[test]
fn interrupted_puts_leave_old_or_new_never_torn() {
    let old = vectors(1.0, 6, 1);
    let new = vectors(9.0, 5, 2);
    for at in [CrashPoint::MidTempWrite, CrashPoint::BeforeRename, CrashPoint::BeforeManifest] {
        let dir = tempfile::tempdir().unwrap();
        {
            let store = FeatureStore::open(dir.path()).unwrap();
            store.put_user("u", &old).unwrap();
            assert!(store.put_user_interrupted("u", &new, at).is_err());
        }
        // Restart after the crash.
        let store = FeatureStore::open(dir.path()).unwrap();
        let got: Vec<FeatureVector> = store.get_user("u").unwrap().unwrap().iter().map(|i| i.features).collect();
        match at {
            CrashPoint::BeforeManifest => assert_eq!(got, new, "{at:?}"),
            _ => assert_eq!(got, old, "{at:?}"),
        }
        let leftovers = std::fs::read_dir(dir.path().join("u"))
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "tmp"))
            .count();
        assert_eq!(leftovers, 0);
    }
}

#[test]
fn user_ids_are_path_safe() {
    let dir = tempfile::tempdir().unwrap();
    let store = FeatureStore::open(dir.path()).unwrap();
    for bad in ["", "..", "a/b", "-x", "a b", "é"] {
        assert!(store.put_user(bad, &vectors(1.0, 1, 0)).is_err(), "{bad:?}");
    }
}

#[test]
fn first_enrollment_is_stored_but_unavailable() {
    let dir = tempfile::tempdir().unwrap();
    let store = FeatureStore::open(dir.path()).unwrap();
    let req = EnrollRequest {
        user_id: "first".into(),
        instances: vectors(5.0, 20, 1),
        client_nonce: "n".into(),
    };
    assert!(matches!(enroll(&req, &store, &small_cfg()), Err(ServiceError::EnrollmentUnavailable(_))));
    assert_eq!(store.list_users().unwrap(), ["first"]);
}

#[test]
fn enrollment_checks_instance_count() {
    let dir = tempfile::tempdir().unwrap();
    let store = FeatureStore::open(dir.path()).unwrap();
    let req = EnrollRequest {
        user_id: "u".into(),
        instances: vectors(5.0, 19, 1),
        client_nonce: "n".into(),
    };
    assert!(matches!(enroll(&req, &store, &small_cfg()), Err(ServiceError::InvalidRequest(_))));
    assert!(store.list_users().unwrap().is_empty());
}

#[test]
fn enrollment_is_audited_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let store = FeatureStore::open(dir.path()).unwrap();
    store.put_user("other1", &vectors(10.0, 15, 2)).unwrap();
    store.put_user("other2", &vectors(12.0, 15, 3)).unwrap();
    let req = EnrollRequest {
        user_id: "me".into(),
        instances: vectors(50.0, 20, 1),
        client_nonce: "abc".into(),
    };
    let cfg = small_cfg();
    let a = enroll(&req, &store, &cfg).unwrap();
    assert_eq!(a.client_nonce, "abc");
    assert_eq!(a.dataset.owner, "me");
    assert_eq!(a.dataset.impostor_sources.len(), 20);
    assert!(a.dataset.impostor_sources.iter().all(|r| r.subject != "me"));
    assert_eq!(a.summary.evaluations, 3);
    assert_eq!(a.summary.cv_accuracy, 1.0);
    assert_eq!(store.get_model("me").unwrap().unwrap(), a.model);

    let b = enroll(&req, &store, &cfg).unwrap();
    assert_eq!(a.model.to_json().unwrap(), b.model.to_json().unwrap());
    assert_eq!(a.dataset, b.dataset);
    let c = enroll(&EnrollRequest { client_nonce: "xyz".into(), ..req.clone() }, &store, &cfg).unwrap();
    assert_ne!(a.dataset.seed, c.dataset.seed);

    let d = authenticate_stored(
        &AuthenticateRequest {
            user_id: "me".into(),
            instances: vectors(50.0, 5, 9),
            threshold: 0.5,
        },
        &store,
    )
    .unwrap();
    assert_eq!(d.outcome, Outcome::Grant);
}

#[test]
fn reenrollment_drops_the_stale_model() {
    let dir = tempfile::tempdir().unwrap();
    let store = FeatureStore::open(dir.path()).unwrap();
    store.put_user("other", &vectors(10.0, 25, 2)).unwrap();
    let req = EnrollRequest {
        user_id: "me".into(),
        instances: vectors(50.0, 20, 1),
        client_nonce: "1".into(),
    };
    enroll(&req, &store, &small_cfg()).unwrap();
    store.put_user("me", &vectors(40.0, 20, 1)).unwrap();
    assert!(store.get_model("me").unwrap().is_none());
}

#[test]
fn config_validation_names_the_field() {
    let bad = ServiceConfig { budget_s: 0.0, ..ServiceConfig::default() };
    assert!(bad.validate().unwrap_err().to_string().contains("budget_s"));
    let bad = ServiceConfig { k_folds: 1, ..ServiceConfig::default() };
    assert!(bad.validate().unwrap_err().to_string().contains("k_folds"));
}
