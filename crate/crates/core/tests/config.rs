use proptest::prelude::*;
use rlkit::algo::AlgoId;
use rlkit::config::{combine, defaults, load_file, merge, ConfigTree, Partial};
use rlkit::env::EnvId;
use rlkit::Error;
use serde_json::{json, Value};

fn pairs() -> Vec<(AlgoId, EnvId)> {
    let mut out = Vec::new();
    for algo in AlgoId::ALL {
        for env in [EnvId::Cartpole, EnvId::Pendulum] {
            if defaults(algo, env).is_ok() {
                out.push((algo, env));
            }
        }
    }
    out
}

fn entry() -> impl Strategy<Value = (String, Value)> {
    prop_oneof![
        (0.5f64..1.0).prop_map(|v| ("algo.gamma".to_string(), json!(v))),
        (0.0f64..=1.0).prop_map(|v| ("algo.tau".to_string(), json!(v))),
        (1usize..512).prop_map(|v| ("algo.batch_size".to_string(), json!(v))),
        (1e-5f64..1e-2).prop_map(|v| ("algo.lr_actor".to_string(), json!(v))),
        (0u64..10_000).prop_map(|v| ("experiment.seed".to_string(), json!(v))),
        (1u64..100).prop_map(|v| ("experiment.eval_every".to_string(), json!(v))),
        prop::collection::vec(1usize..64, 0..3)
            .prop_map(|v| ("nets.hidden".to_string(), json!(v))),
        "[a-z]{1,8}".prop_map(|v| ("experiment.out_dir".to_string(), json!(v))),
    ]
}

fn partial() -> impl Strategy<Value = Partial> {
    prop::collection::vec(entry(), 0..6).prop_map(|entries| entries.into_iter().collect())
}

proptest! {
    #[test]
    fn merge_is_associative(p in partial(), q in partial(), r in partial()) {
        let base = defaults(AlgoId::Sac, EnvId::Pendulum).unwrap();
        let stepwise = merge(&merge(&merge(&base, &[p.clone()]).unwrap(), &[q.clone()]).unwrap(), &[r.clone()]).unwrap();
        let at_once = merge(&base, &[p.clone(), q.clone(), r.clone()]).unwrap();
        let grouped = merge(&base, &[p, combine(&[q, r])]).unwrap();
        prop_assert_eq!(&stepwise, &at_once);
        prop_assert_eq!(&at_once, &grouped);
    }

    #[test]
    fn empty_partial_is_identity(p in partial()) {
        let base = merge(&defaults(AlgoId::Td3, EnvId::Pendulum).unwrap(), &[p]).unwrap();
        prop_assert_eq!(&merge(&base, &[Partial::new()]).unwrap(), &base);
        prop_assert_eq!(&merge(&base, &[]).unwrap(), &base);
    }

    #[test]
    fn serialization_round_trips(p in partial()) {
        let c = merge(&defaults(AlgoId::Drnd, EnvId::Pendulum).unwrap(), &[p]).unwrap();
        prop_assert_eq!(&ConfigTree::from_json(&c.to_json().unwrap()).unwrap(), &c);
    }

    #[test]
    fn later_layers_win(a in 0.5f64..1.0, b in 0.5f64..1.0) {
        let base = defaults(AlgoId::Sac, EnvId::Pendulum).unwrap();
        let first: Partial = [("algo.gamma".to_string(), json!(a))].into();
        let second: Partial = [("algo.gamma".to_string(), json!(b))].into();
        prop_assert_eq!(merge(&base, &[first.clone(), second.clone()]).unwrap().algo.gamma, b);
        prop_assert_eq!(merge(&base, &[second, first]).unwrap().algo.gamma, a);
    }
}

#[test]
fn every_registered_pair_has_valid_defaults() {
    let pairs = pairs();
    assert_eq!(pairs.len(), 7);
    for (algo, env) in pairs {
        let c = defaults(algo, env).unwrap();
        c.validate().unwrap();
        assert_eq!(c.experiment.algo_id, algo);
        assert_eq!(c.experiment.env_id, env);
        assert_eq!(ConfigTree::from_json(&c.to_json().unwrap()).unwrap(), c);
    }
}

#[test]
fn files_accept_nested_and_dotted_keys() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, r#"{"algo": {"gamma": 0.8}, "nets.hidden": [16]}"#).unwrap();
    let p = load_file(&path).unwrap();
    let c = merge(&defaults(AlgoId::Ppo, EnvId::Cartpole).unwrap(), &[p]).unwrap();
    assert_eq!(c.algo.gamma, 0.8);
    assert_eq!(c.nets.hidden, vec![16]);

    std::fs::write(&path, r#"{"algo": {"gamma": 0.8, "betas": 1}}"#).unwrap();
    assert!(matches!(load_file(&path), Err(Error::UnknownKey(k)) if k == "algo.betas"));
    assert!(load_file(dir.path().join("missing.json")).is_err());
}

#[test]
fn invalid_values_are_rejected_after_merge() {
    let base = defaults(AlgoId::Sac, EnvId::Pendulum).unwrap();
    for (k, v) in [
        ("algo.gamma", json!(0.0)),
        ("algo.gamma", json!(1.5)),
        ("algo.tau", json!(-0.1)),
        ("algo.batch_size", json!(0)),
        ("algo.lr_critic", json!(0.0)),
        ("nets.hidden", json!([0])),
        ("experiment.algo_id", json!("dqn")),
        ("experiment.algo_id", json!("a3c")),
    ] {
        let p: Partial = [(k.to_string(), v)].into();
        assert!(merge(&base, &[p]).is_err(), "{k}");
    }
}
