use fgp_web::{cluster_points, Demo};

#[test]
fn two_blobs_split_cleanly() {
    let xy = [0.0, 0.0, 0.1, 0.0, 0.0, 0.1, 5.0, 5.0, 5.1, 5.0, 5.0, 5.1];
    let out: serde_json::Value = serde_json::from_str(&cluster_points(&xy, 2, 0).unwrap()).unwrap();
    let a: Vec<u64> = out["assignment"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert!(a[..3].iter().all(|&x| x == a[0]) && a[3..].iter().all(|&x| x == a[3]) && a[0] != a[3]);
    assert!(cluster_points(&xy[..3], 2, 0).is_err());
}

#[test]
fn demo_reports_and_inspects() {
    let demo = Demo::build(1, 3, 2).unwrap();
    let report: serde_json::Value = serde_json::from_str(&demo.report_json().unwrap()).unwrap();
    assert_eq!(report["hits"].as_array().unwrap().len(), 5);
    let view: serde_json::Value = serde_json::from_str(&demo.inspect(0, 2).unwrap()).unwrap();
    let n = view["rows"].as_u64().unwrap() * view["cols"].as_u64().unwrap();
    let alpha = view["attention"].as_array().unwrap();
    assert_eq!(alpha.len() as u64, n);
    let sum: f64 = alpha.iter().map(|v| v.as_f64().unwrap()).sum();
    assert!((sum - 1.0).abs() < 1e-9);
    assert_eq!(view["top"].as_array().unwrap().len(), 3);
    assert!(demo.inspect(0, 3).is_err());
    assert!(demo.inspect(demo.test_samples(), 0).is_err());
}
