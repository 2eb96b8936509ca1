use vsink_core::experiment::NetworkFile;
use vsink_web::{bias_map_json, generate_network_json, simulate_json};

#[test]
fn network_round_trips_and_respects_size() {
    let json = generate_network_json(r#"{"seed": 3, "nodes": 40}"#).unwrap();
    let net: NetworkFile = serde_json::from_str(&json).unwrap();
    assert_eq!(net.topology.n_nodes(), 40);
    assert!(!net.topology.clients().is_empty());
    assert!(generate_network_json(r#"{"seed": 3, "nodes": 5}"#).is_err());
    assert!(generate_network_json("not json").unwrap_err().starts_with("bad request"));
}

#[test]
fn bias_is_positive_and_finite() {
    let req = r#"{"seed": 1, "nodes": 30}"#;
    let map: serde_json::Value = serde_json::from_str(&bias_map_json(req, 1).unwrap()).unwrap();
    let bias = map["bias"].as_array().unwrap();
    assert_eq!(bias.len(), 30);
    assert!(bias.iter().all(|b| b.as_f64().unwrap().is_finite() && b.as_f64().unwrap() > 0.0));
    assert!(bias_map_json(req, 2).is_err());
}

#[test]
fn simulate_reports_every_scheme_but_lp() {
    for scheme in ["joint_spbp", "spbp_spbp", "bp_spbp"] {
        let req = format!(r#"{{"seed": 2, "nodes": 30, "scheme": "{scheme}", "load": 1.0, "horizon": 100}}"#);
        let report: serde_json::Value = serde_json::from_str(&simulate_json(&req).unwrap()).unwrap();
        assert_eq!(report["backlog"].as_array().unwrap().len(), 100);
        assert!(report["completed"].as_u64().unwrap() > 0);
    }
    let req = r#"{"seed": 2, "nodes": 30, "scheme": "joint_lp", "load": 1.0, "horizon": 100}"#;
    assert!(simulate_json(req).unwrap_err().contains("single-type"));
}
