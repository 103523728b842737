use std::fs::File;
use std::io::{BufReader, BufWriter, Write};

use approx::assert_abs_diff_eq;
use elicit_core::dataset::{heatmap_summary, ingest, read_records, split, SplitSpec};
use elicit_core::descriptors::{
    build_descriptors, read_aux_records, AuxCorpus, DescriptorMatrix, DescriptorParams,
};
use elicit_core::evaluation::{generate_synthetic, SyntheticSpec};

fn write_jsonl<T: serde::Serialize>(path: &std::path::Path, items: &[T]) {
    let mut w = BufWriter::new(File::create(path).unwrap());
    for item in items {
        serde_json::to_writer(&mut w, item).unwrap();
        writeln!(w).unwrap();
    }
}

#[test]
fn files_to_descriptors_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = generate_synthetic(
        &SyntheticSpec {
            n_aux_docs: 300,
            ..SyntheticSpec::new(80, 60, 6, 2.0)
        },
        21,
    )
    .unwrap();

    let data_path = dir.path().join("data.jsonl");
    write_jsonl(&data_path, &p.records);
    let records = read_records(BufReader::new(File::open(&data_path).unwrap())).unwrap();
    assert_eq!(records, p.records);

    let full = ingest(&records).unwrap();
    let spec = SplitSpec {
        train_fraction: 0.5,
        seed: 4,
    };
    let (train, test) = split(&full, spec).unwrap();
    let (train2, test2) = split(&ingest(&records).unwrap(), spec).unwrap();
    assert_eq!(serde_json::to_string(&train).unwrap(), serde_json::to_string(&train2).unwrap());
    assert_eq!(test, test2);

    // Train targets are z-scored; inverting recovers the raw values.
    let scale = train.target_scale().unwrap();
    for (z, raw) in train.targets().iter().zip(train.raw_targets()) {
        assert_abs_diff_eq!(scale.invert(*z), raw, epsilon = 1e-9);
    }
    let by_id: std::collections::HashMap<&str, f64> =
        records.iter().map(|r| (r.id.as_str(), r.target)).collect();
    for (id, raw) in train.ids().iter().zip(train.raw_targets()) {
        assert_abs_diff_eq!(by_id[id.as_str()], raw, epsilon = 1e-9);
    }
    let mean: f64 = train.targets().iter().sum::<f64>() / train.n_samples() as f64;
    assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-12);

    let ids: Vec<usize> = (0..train.n_features()).collect();
    let heat = heatmap_summary(&train, &ids).unwrap();
    for (c, &total) in heat.total_count.iter().enumerate() {
        let per_row: usize = heat.cell_count.iter().map(|row| row[c]).sum();
        assert_eq!(per_row, total);
        for (row, count) in heat.cell_mean.iter().zip(&heat.cell_count) {
            assert_eq!(row[c].is_none(), count[c] == 0);
        }
    }

    let aux_path = dir.path().join("aux.jsonl");
    let aux_records: Vec<serde_json::Value> = p
        .aux
        .docs()
        .iter()
        .enumerate()
        .map(|(i, kw)| serde_json::json!({"id": format!("a{i}"), "keywords": kw}))
        .collect();
    write_jsonl(&aux_path, &aux_records);
    let aux = AuxCorpus::from_records(
        read_aux_records(BufReader::new(File::open(&aux_path).unwrap())).unwrap(),
    )
    .unwrap();
    assert_eq!(aux.docs(), p.aux.docs());

    let params = DescriptorParams {
        n_clusters: 10,
        train_sample_size: Some(150),
        seed: 2,
    };
    let z = build_descriptors(&aux, train.feature_names(), params).unwrap();
    assert_eq!((z.n_features(), z.n_cols()), (train.n_features(), 10));
    assert!(z.values().iter().all(|v| v.is_finite() && *v >= 0.0));
    let again = build_descriptors(&aux, train.feature_names(), params).unwrap();
    assert_eq!(z, again);

    let z_path = dir.path().join("z.csv");
    z.write_csv(File::create(&z_path).unwrap()).unwrap();
    let back = DescriptorMatrix::read_csv(File::open(&z_path).unwrap()).unwrap();
    assert_eq!(back, z);
}

#[test]
fn unreadable_inputs_are_rejected() {
    let bad = b"{\"id\":\"a\",\"keywords\":[\"x\"],\"target\":1.0,\"category\":\"c\"}\nnot json\n";
    assert!(read_records(&bad[..]).is_err());
    let dup = b"{\"id\":\"a\",\"keywords\":[\"x\"],\"target\":1.0,\"category\":\"c\"}\n{\"id\":\"a\",\"keywords\":[\"y\"],\"target\":2.0,\"category\":\"c\"}\n";
    assert!(ingest(&read_records(&dup[..]).unwrap()).is_err());
    assert!(DescriptorMatrix::read_csv(&b"feature,0\nx,abc\n"[..]).is_err());
}
