use std::fs;

use bmlab::gridops::GridFunction;
use bmlab::lattice::{enumerate_shell, EnumerationOptions};
use bmlab::runner::{fmt_f64, run, ExperimentConfig};
use bmlab::{Cutoff, IntegralForm};
use num_complex::Complex64;
use proptest::prelude::*;

fn data_rows(csv: &str) -> (String, Vec<Vec<String>>) {
    let mut lines = csv.lines();
    let comment = lines.next().unwrap().to_string();
    let _header = lines.next().unwrap();
    (comment, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

#[test]
fn lattice_csv_round_trips_and_carries_the_hash() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        experiment: "lattice".into(),
        form: "sphere-4".into(),
        phi: "bump:1.5".into(),
        lambdas: vec![3, 7, 10],
        out_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let report = run(&config).unwrap();
    assert!(report.all_passed());
    let (comment, rows) = data_rows(&fs::read_to_string(dir.path().join("lattice.csv")).unwrap());
    assert!(comment.contains(&report.config_hash));
    let form = IntegralForm::sphere(4);
    let phi = Cutoff::parse("bump:1.5").unwrap();
    for row in rows {
        let lambda: u64 = row[0].parse().unwrap();
        let shell = enumerate_shell(&form, &phi, lambda, &EnumerationOptions::default()).unwrap();
        let parsed: f64 = row[2].parse().unwrap();
        assert_eq!(parsed.to_bits(), shell.r_value.to_bits());
    }
    let stored: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(stored["config_hash"], report.config_hash);
}

#[test]
fn svg_and_json_carry_the_hash() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        experiment: "regions".into(),
        out_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let report = run(&config).unwrap();
    for name in ["regions.svg", "regions.json"] {
        let body = fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(body.contains(&report.config_hash), "{name}");
    }
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("regions.json")).unwrap()).unwrap();
    let s = json["data"].as_array().unwrap().iter().find(|r| r["name"] == "Sn").unwrap();
    assert_eq!(s["vertices"][1], serde_json::json!(["25/49", "25/49"]));
}

#[test]
fn grid_functions_survive_save_and_load() {
    let dir = tempfile::tempdir().unwrap();
    let g = GridFunction::from_fn(vec![-2, 0, 5], vec![3, 4, 2], |x| {
        Complex64::new((x[0] * 7 + x[1]) as f64 / 3.0, (x[2] as f64).sqrt())
    });
    let path = dir.path().join("g.grid");
    g.save(&path).unwrap();
    let back = GridFunction::load(&path).unwrap();
    assert_eq!(back.values, g.values);
    assert_eq!(back.lp_norm(2.0).to_bits(), g.lp_norm(2.0).to_bits());
}

proptest! {
    #[test]
    fn printed_floats_parse_back_exactly(bits in any::<u64>()) {
        let x = f64::from_bits(bits);
        prop_assume!(x.is_finite());
        prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }
}
