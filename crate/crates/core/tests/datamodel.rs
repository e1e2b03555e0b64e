use std::collections::BTreeMap;
use std::io::Write;

use matchrep_core::datamodel::{
    load_csv, normalize_fit_transform, read_ground_truth_csv, split, write_csv, write_ground_truth_csv,
    SchemaConfig,
};
use matchrep_core::synthgen::{sample_dataset, SyntheticConfig};
use matchrep_core::{Error, ErrorKind};

fn small(n: usize, seed: u64) -> matchrep_core::datamodel::Dataset {
    sample_dataset(&SyntheticConfig { n, seed, ..SyntheticConfig::biased_preset() }).unwrap()
}

fn write_file(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    std::fs::File::create(&path).unwrap().write_all(body.as_bytes()).unwrap();
    path
}

#[test]
fn csv_round_trip_preserves_every_value() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small(120, 5);
    let data = dir.path().join("data.csv");
    let truth = dir.path().join("truth.csv");
    write_csv(&ds, &data).unwrap();
    write_ground_truth_csv(&ds, &truth).unwrap();
    let mut back = load_csv(&data, &ds.schema.to_config()).unwrap();
    read_ground_truth_csv(&mut back, &truth).unwrap();
    assert_eq!(back, ds);
}

#[test]
fn split_assigns_each_record_to_validation_about_one_time_in_ten() {
    let n = 50;
    let seeds = 1000;
    let mut hits = vec![0usize; n];
    for seed in 0..seeds {
        let s = split(n, 0.9, seed).unwrap();
        assert_eq!(s.validation.len(), 5);
        for &i in &s.validation {
            hits[i] += 1;
        }
    }
    for (i, &h) in hits.iter().enumerate() {
        let freq = h as f64 / seeds as f64;
        // Five binomial standard deviations.
        assert!((freq - 0.1).abs() < 0.05, "record {i} drawn with frequency {freq}");
    }
}

#[test]
fn normalisation_standardises_the_training_split() {
    let ds = small(400, 2);
    let s = split(ds.len(), 0.9, 2).unwrap();
    let nd = normalize_fit_transform(&ds, &s).unwrap();
    let train = nd.subset(&s.train);
    for m in [train.recipients(), train.donors()] {
        for j in 0..m.cols() {
            let col = m.column(j);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-6);
        }
    }
    assert_eq!(nd.outcomes(), ds.outcomes());
    let back = nd.normalization.as_ref().unwrap().denormalize(&nd);
    for (a, b) in back.records.iter().zip(&ds.records) {
        for (x, y) in a.recipient.iter().zip(&b.recipient).chain(a.donor.iter().zip(&b.donor)) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn categorical_and_missing_cells_are_encoded_from_the_declared_schema() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_file(
        &dir,
        "pairs.csv",
        "age,blood,donor_age,days\n40,A,30,100\n,B,50,200\n60,,40,300\n",
    );
    let config = SchemaConfig {
        recipient_columns: vec!["age".into(), "blood".into()],
        donor_columns: vec!["donor_age".into()],
        outcome_column: "days".into(),
        categorical: BTreeMap::from([("blood".into(), vec!["A".into(), "B".into(), "O".into()])]),
    };
    let ds = load_csv(&path, &config).unwrap();
    assert_eq!(
        ds.schema.recipient_features,
        ["age", "age_missing", "blood=A", "blood=B", "blood=O", "blood_missing"]
    );
    assert_eq!(ds.schema.donor_features, ["donor_age"]);
    assert_eq!(ds.records[0].recipient, [40.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    assert_eq!(ds.records[1].recipient, [50.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
    assert_eq!(ds.records[2].recipient, [60.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    assert_eq!(ds.outcomes(), [100.0, 200.0, 300.0]);
}

#[test]
fn ingestion_errors_name_row_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let config = SchemaConfig {
        recipient_columns: vec!["a".into()],
        donor_columns: vec!["b".into()],
        outcome_column: "y".into(),
        categorical: BTreeMap::from([("b".into(), vec!["x".into()])]),
    };
    let bad_number = write_file(&dir, "n.csv", "a,b,y\n1,x,2\nfoo,x,3\n");
    match load_csv(&bad_number, &config) {
        Err(Error::Ingestion { row: 3, column, .. }) => assert_eq!(column, "a"),
        other => panic!("unexpected {other:?}"),
    }
    let bad_category = write_file(&dir, "c.csv", "a,b,y\n1,z,2\n");
    let err = load_csv(&bad_category, &config).unwrap_err();
    assert!(matches!(&err, Error::Ingestion { column, .. } if column == "b"));
    assert_eq!(err.kind(), ErrorKind::Data);
    let missing_outcome = write_file(&dir, "y.csv", "a,b,y\n1,x,\n");
    assert!(matches!(load_csv(&missing_outcome, &config), Err(Error::Ingestion { .. })));
    let missing_column = write_file(&dir, "h.csv", "a,y\n1,2\n");
    assert!(matches!(load_csv(&missing_column, &config), Err(Error::Ingestion { row: 1, .. })));
    let err = load_csv(&dir.path().join("absent.csv"), &config).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Io);
}
