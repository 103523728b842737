//! Document/keyword data: ingestion, train/test splitting with target
//! standardization, and the per-category heatmap aggregation shown to experts.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Read, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// One line of an ingestion file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub id: String,
    pub keywords: Vec<String>,
    pub target: f64,
    pub category: String,
}

/// Affine map used to z-score targets: `z = (y - mean) / sd`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub sd: f64,
}

impl Standardization {
    pub fn apply(&self, y: f64) -> f64 {
        (y - self.mean) / self.sd
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.sd + self.mean
    }
}

/// Samples × binary keyword-presence features, with a real target and a
/// category label per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDataset")]
pub struct Dataset {
    ids: Vec<String>,
    feature_names: Vec<String>,
    n_samples: usize,
    /// Row-major, `n_samples * n_features`, entries 0 or 1.
    x: Vec<u8>,
    y: Vec<f64>,
    categories: Vec<String>,
    target_scale: Option<Standardization>,
}

#[derive(Deserialize)]
struct RawDataset {
    ids: Vec<String>,
    feature_names: Vec<String>,
    n_samples: usize,
    x: Vec<u8>,
    y: Vec<f64>,
    categories: Vec<String>,
    target_scale: Option<Standardization>,
}

impl TryFrom<RawDataset> for Dataset {
    type Error = Error;

    fn try_from(raw: RawDataset) -> Result<Self> {
        let mut ds = Dataset::new(raw.ids, raw.feature_names, raw.x, raw.y, raw.categories)?;
        if raw.n_samples != ds.n_samples {
            return Err(Error::DimensionMismatch {
                expected: raw.n_samples,
                actual: ds.n_samples,
            });
        }
        ds.target_scale = raw.target_scale;
        Ok(ds)
    }
}

impl Dataset {
    /// Build a dataset from a row-major 0/1 matrix. `n_samples` may be zero
    /// (a prior-only design); the number of features may not.
    pub fn new(
        ids: Vec<String>,
        feature_names: Vec<String>,
        x: Vec<u8>,
        y: Vec<f64>,
        categories: Vec<String>,
    ) -> Result<Self> {
        let k = feature_names.len();
        if k == 0 {
            return Err(Error::EmptyKeywordUniverse);
        }
        let n = y.len();
        if x.len() != n * k {
            return Err(Error::DimensionMismatch {
                expected: n * k,
                actual: x.len(),
            });
        }
        if ids.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: ids.len(),
            });
        }
        if categories.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: categories.len(),
            });
        }
        if let Some(v) = x.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidParameter(format!(
                "feature matrix entry {v} is not binary"
            )));
        }
        let mut seen = HashSet::with_capacity(k);
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate feature name `{name}`"
                )));
            }
        }
        let mut seen_ids = HashSet::with_capacity(n);
        for (id, &t) in ids.iter().zip(&y) {
            if !seen_ids.insert(id.as_str()) {
                return Err(Error::DuplicateRecord(id.clone()));
            }
            if !t.is_finite() {
                return Err(Error::NonFiniteTarget(id.clone()));
            }
        }
        Ok(Dataset {
            ids,
            feature_names,
            n_samples: n,
            x,
            y,
            categories,
            target_scale: None,
        })
    }

    /// A dataset with no samples over the given features.
    pub fn empty(feature_names: Vec<String>) -> Result<Self> {
        Dataset::new(Vec::new(), feature_names, Vec::new(), Vec::new(), Vec::new())
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n_samples == 0
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn target_scale(&self) -> Option<Standardization> {
        self.target_scale
    }

    pub fn row(&self, i: usize) -> &[u8] {
        let k = self.n_features();
        &self.x[i * k..(i + 1) * k]
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.x[i * self.n_features() + j]
    }

    /// Row indices with `X[i, j] = 1`, for every column.
    pub fn column_support(&self) -> Vec<Vec<usize>> {
        let k = self.n_features();
        let mut cols = vec![Vec::new(); k];
        for i in 0..self.n_samples {
            for (j, &v) in self.row(i).iter().enumerate() {
                if v == 1 {
                    cols[j].push(i);
                }
            }
        }
        cols
    }

    /// Targets mapped back to the raw scale, if they were standardized.
    pub fn raw_targets(&self) -> Vec<f64> {
        match self.target_scale {
            Some(s) => self.y.iter().map(|&z| s.invert(z)).collect(),
            None => self.y.clone(),
        }
    }

    fn subset(&self, rows: &[usize]) -> Dataset {
        let k = self.n_features();
        let mut x = Vec::with_capacity(rows.len() * k);
        for &i in rows {
            x.extend_from_slice(self.row(i));
        }
        Dataset {
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            n_samples: rows.len(),
            x,
            y: rows.iter().map(|&i| self.y[i]).collect(),
            categories: rows.iter().map(|&i| self.categories[i].clone()).collect(),
            target_scale: self.target_scale,
        }
    }

    fn standardized(mut self, scale: Standardization) -> Dataset {
        for y in &mut self.y {
            *y = scale.apply(*y);
        }
        self.target_scale = Some(scale);
        self
    }
}

/// Encode records as keyword presence. Feature order is first appearance.
pub fn ingest(records: &[DocumentRecord]) -> Result<Dataset> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut names: Vec<String> = Vec::new();
    let mut seen_ids = HashSet::new();
    for rec in records {
        if !seen_ids.insert(rec.id.as_str()) {
            return Err(Error::DuplicateRecord(rec.id.clone()));
        }
        if !rec.target.is_finite() {
            return Err(Error::NonFiniteTarget(rec.id.clone()));
        }
        for kw in &rec.keywords {
            if !index.contains_key(kw.as_str()) {
                index.insert(kw.as_str(), names.len());
                names.push(kw.clone());
            }
        }
    }
    if names.is_empty() {
        return Err(Error::EmptyKeywordUniverse);
    }
    let k = names.len();
    let mut x = vec![0u8; records.len() * k];
    for (i, rec) in records.iter().enumerate() {
        for kw in &rec.keywords {
            x[i * k + index[kw.as_str()]] = 1;
        }
    }
    Dataset::new(
        records.iter().map(|r| r.id.clone()).collect(),
        names,
        x,
        records.iter().map(|r| r.target).collect(),
        records.iter().map(|r| r.category.clone()).collect(),
    )
}

/// Parse line-delimited JSON records. Blank lines are skipped.
pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<DocumentRecord>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DocumentRecord = serde_json::from_str(&line).map_err(|e| {
            Error::CorruptRecord(format!("line {}: {e}", lineno + 1))
        })?;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.5,
            seed: 0,
        }
    }
}

/// Seeded shuffle split. Targets of both halves are z-scored with the
/// training mean and (population) standard deviation.
pub fn split(dataset: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidSplit(format!(
            "train fraction {} is outside (0, 1)",
            spec.train_fraction
        )));
    }
    let n = dataset.n_samples();
    let n_train = (n as f64 * spec.train_fraction).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::InvalidSplit(format!(
            "{n} samples with fraction {} leaves an empty partition",
            spec.train_fraction
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(spec.seed, seed::STREAM_SPLIT, 0));
    let (train_idx, test_idx) = order.split_at(n_train);
    let mut train_idx = train_idx.to_vec();
    let mut test_idx = test_idx.to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    let raw_train = dataset.subset(&train_idx);
    let raw_test = dataset.subset(&test_idx);
    let ys = raw_train.targets();
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / ys.len() as f64;
    // Constant training targets are only centered.
    let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
    let scale = Standardization { mean, sd };
    Ok((raw_train.standardized(scale), raw_test.standardized(scale)))
}

/// Train/test pair written by ingestion and shared by every later step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPrepared")]
pub struct PreparedData {
    pub split: SplitSpec,
    pub train: Dataset,
    pub test: Dataset,
}

#[derive(Deserialize)]
struct RawPrepared {
    split: SplitSpec,
    train: Dataset,
    test: Dataset,
}

impl TryFrom<RawPrepared> for PreparedData {
    type Error = Error;

    fn try_from(raw: RawPrepared) -> Result<Self> {
        if raw.train.feature_names() != raw.test.feature_names() {
            return Err(Error::CorruptRecord(
                "train and test feature lists differ".into(),
            ));
        }
        Ok(PreparedData {
            split: raw.split,
            train: raw.train,
            test: raw.test,
        })
    }
}

impl PreparedData {
    pub fn from_records(records: &[DocumentRecord], spec: SplitSpec) -> Result<Self> {
        let (train, test) = split(&ingest(records)?, spec)?;
        Ok(PreparedData {
            split: spec,
            train,
            test,
        })
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        serde_json::from_reader(r).map_err(|e| Error::CorruptRecord(e.to_string()))
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, self)?;
        Ok(())
    }
}

/// Category × feature mean-target table shown alongside each query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapData {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub feature_ids: Vec<usize>,
    /// `cell_mean[row][col]`; `None` when no training sample supports the cell.
    pub cell_mean: Vec<Vec<Option<f64>>>,
    pub cell_count: Vec<Vec<usize>>,
    pub total_count: Vec<usize>,
}

pub fn heatmap_summary(train: &Dataset, feature_ids: &[usize]) -> Result<HeatmapData> {
    let k = train.n_features();
    if let Some(&bad) = feature_ids.iter().find(|&&j| j >= k) {
        return Err(Error::UnknownFeature(bad));
    }
    let mut rows: Vec<String> = Vec::new();
    let mut row_of: HashMap<&str, usize> = HashMap::new();
    for c in train.categories() {
        if !row_of.contains_key(c.as_str()) {
            row_of.insert(c.as_str(), rows.len());
            rows.push(c.clone());
        }
    }
    let m = feature_ids.len();
    let mut sums = vec![vec![0.0; m]; rows.len()];
    let mut counts = vec![vec![0usize; m]; rows.len()];
    for i in 0..train.n_samples() {
        let r = row_of[train.categories()[i].as_str()];
        for (col, &j) in feature_ids.iter().enumerate() {
            if train.get(i, j) == 1 {
                sums[r][col] += train.targets()[i];
                counts[r][col] += 1;
            }
        }
    }
    let cell_mean = sums
        .iter()
        .zip(&counts)
        .map(|(s, c)| {
            s.iter()
                .zip(c)
                .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
                .collect()
        })
        .collect();
    let total_count = (0..m)
        .map(|col| counts.iter().map(|row| row[col]).sum())
        .collect();
    Ok(HeatmapData {
        rows,
        cols: feature_ids
            .iter()
            .map(|&j| train.feature_names()[j].clone())
            .collect(),
        feature_ids: feature_ids.to_vec(),
        cell_mean,
        cell_count: counts,
        total_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(id: &str, kws: &[&str], target: f64, cat: &str) -> DocumentRecord {
        DocumentRecord {
            id: id.into(),
            keywords: kws.iter().map(|s| s.to_string()).collect(),
            target,
            category: cat.into(),
        }
    }

    #[test]
    fn ingest_encodes_presence_in_first_appearance_order() {
        let ds = ingest(&[rec("1", &["a", "b"], 1.0, "c"), rec("2", &["b"], 2.0, "c")]).unwrap();
        assert_eq!(ds.feature_names(), &["a", "b"]);
        assert_eq!(ds.row(0), &[1, 1]);
        assert_eq!(ds.row(1), &[0, 1]);
    }

    #[test]
    fn repeated_keyword_is_presence_only() {
        let ds = ingest(&[rec("1", &["a", "a"], 1.0, "c")]).unwrap();
        assert_eq!(ds.row(0), &[1]);
    }

    #[test]
    fn ingest_at_study_scale() {
        let records: Vec<_> = (0..162)
            .map(|i| {
                let kws: Vec<String> = (0..3).map(|k| format!("kw{}", (i * 3 + k) % 457)).collect();
                DocumentRecord {
                    id: format!("doc{i}"),
                    keywords: kws,
                    target: i as f64,
                    category: "ai".into(),
                }
            })
            .collect();
        let ds = ingest(&records).unwrap();
        assert_eq!(ds.n_samples(), 162);
        assert_eq!(ds.n_features(), 457);
    }

    #[test]
    fn prepared_data_round_trips_and_checks_features() {
        let records: Vec<_> = (0..6)
            .map(|i| rec(&format!("d{i}"), &["a", if i % 2 == 0 { "b" } else { "c" }], i as f64, "x"))
            .collect();
        let prepared = PreparedData::from_records(&records, SplitSpec::default()).unwrap();
        let mut buf = Vec::new();
        prepared.write_json(&mut buf).unwrap();
        assert_eq!(PreparedData::read_json(&buf[..]).unwrap(), prepared);

        let mut bad: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        bad["test"]["feature_names"][0] = "z".into();
        let bad = serde_json::to_vec(&bad).unwrap();
        assert!(matches!(PreparedData::read_json(&bad[..]), Err(Error::CorruptRecord(_))));
        assert!(PreparedData::read_json(&buf[..buf.len() - 3]).is_err());
    }

    #[test]
    fn ingest_errors() {
        let dup = ingest(&[rec("1", &["a"], 1.0, "c"), rec("1", &["b"], 1.0, "c")]);
        assert!(matches!(dup, Err(Error::DuplicateRecord(_))));
        let empty = ingest(&[rec("1", &[], 1.0, "c")]);
        assert!(matches!(empty, Err(Error::EmptyKeywordUniverse)));
        let nan = ingest(&[rec("1", &["a"], f64::NAN, "c")]);
        assert!(matches!(nan, Err(Error::NonFiniteTarget(_))));
    }

    #[test]
    fn read_records_uses_contract_field_names() {
        let text = r#"{"id":"d1","keywords":["neural","network"],"target":1.5,"category":"AI"}

{"id":"d2","keywords":["graph"],"target":-0.5,"category":"DB"}
"#;
        let recs = read_records(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].keywords, vec!["graph"]);
        assert!(read_records(&b"{\"id\":\"x\"}\n"[..]).is_err());
    }

    fn numbered(n: usize) -> Dataset {
        let recs: Vec<_> = (0..n)
            .map(|i| rec(&i.to_string(), &["a"], i as f64 * 2.0, "c"))
            .collect();
        ingest(&recs).unwrap()
    }

    #[test]
    fn even_split_at_study_scale() {
        let (train, test) = split(&numbered(162), SplitSpec::default()).unwrap();
        assert_eq!((train.n_samples(), test.n_samples()), (81, 81));
    }

    #[test]
    fn split_is_reproducible() {
        let ds = ingest(&[rec("a", &["x"], 1.0, "c"), rec("b", &["x"], 3.0, "c")]).unwrap();
        let spec = SplitSpec { train_fraction: 0.5, seed: 11 };
        let first = split(&ds, spec).unwrap();
        let second = split(&ds, spec).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn split_rejects_empty_partitions() {
        let ds = numbered(3);
        assert!(split(&ds, SplitSpec { train_fraction: 0.1, seed: 0 }).is_err());
        assert!(split(&ds, SplitSpec { train_fraction: 0.9, seed: 0 }).is_err());
        assert!(split(&ds, SplitSpec { train_fraction: 1.0, seed: 0 }).is_err());
    }

    #[test]
    fn train_targets_two_and_four_become_minus_one_and_one() {
        let ds = ingest(&[
            rec("a", &["x"], 2.0, "c"),
            rec("b", &["x"], 4.0, "c"),
            rec("c", &["x"], 3.0, "c"),
            rec("d", &["x"], 5.0, "c"),
        ])
        .unwrap();
        // Find a seed whose training half is exactly {2, 4}.
        let (train, test) = (0..200)
            .map(|s| split(&ds, SplitSpec { train_fraction: 0.5, seed: s }).unwrap())
            .find(|(tr, _)| tr.ids() == ["a", "b"])
            .expect("some seed selects a,b");
        assert_eq!(train.targets(), &[-1.0, 1.0]);
        // test uses train statistics: (3-3)/1, (5-3)/1
        assert_eq!(test.targets(), &[0.0, 2.0]);
    }

    #[test]
    fn heatmap_absent_feature_has_no_cells() {
        let ds = ingest(&[rec("1", &["a"], 1.0, "c"), rec("2", &["b"], 2.0, "c")]).unwrap();
        let ds = Dataset::new(
            ds.ids().to_vec(),
            vec!["a".into(), "b".into(), "z".into()],
            vec![1, 0, 0, 0, 1, 0],
            ds.targets().to_vec(),
            ds.categories().to_vec(),
        )
        .unwrap();
        let h = heatmap_summary(&ds, &[2]).unwrap();
        assert_eq!(h.total_count, vec![0]);
        assert!(h.cell_mean.iter().all(|row| row[0].is_none()));
    }

    #[test]
    fn heatmap_single_category_mean() {
        let ds = ingest(&[rec("1", &["j"], 1.0, "c"), rec("2", &["j"], 3.0, "c")]).unwrap();
        let h = heatmap_summary(&ds, &[0]).unwrap();
        assert_eq!(h.cell_mean, vec![vec![Some(2.0)]]);
        assert_eq!(h.total_count, vec![2]);
    }

    #[test]
    fn heatmap_missing_category_cell_is_null() {
        let ds = ingest(&[rec("1", &["j"], 1.0, "ai"), rec("2", &["k"], 3.0, "db")]).unwrap();
        let h = heatmap_summary(&ds, &[0]).unwrap();
        assert_eq!(h.rows, vec!["ai", "db"]);
        assert_eq!(h.cell_mean[1][0], None);
        let json = serde_json::to_string(&h).unwrap();
        assert!(json.contains("null"));
        assert!(matches!(heatmap_summary(&ds, &[5]), Err(Error::UnknownFeature(5))));
    }

    #[test]
    fn dataset_json_round_trip_validates() {
        let ds = numbered(4);
        let json = serde_json::to_string(&ds).unwrap();
        let back: Dataset = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ds);
        let bad = json.replace("\"x\":[1,", "\"x\":[2,");
        assert!(serde_json::from_str::<Dataset>(&bad).is_err());
    }

    fn arb_records() -> impl Strategy<Value = Vec<DocumentRecord>> {
        prop::collection::vec(
            (
                prop::collection::vec(0usize..8, 1..5),
                -10.0f64..10.0,
                0usize..3,
            ),
            4..30,
        )
        .prop_map(|rows| {
            rows.into_iter()
                .enumerate()
                .map(|(i, (kws, t, c))| DocumentRecord {
                    id: format!("r{i}"),
                    keywords: kws.iter().map(|k| format!("k{k}")).collect(),
                    target: t + i as f64 * 1e-3,
                    category: format!("cat{c}"),
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn split_invariants(records in arb_records(), seed in any::<u64>()) {
            let ds = ingest(&records).unwrap();
            let spec = SplitSpec { train_fraction: 0.5, seed };
            let (train, test) = split(&ds, spec).unwrap();
            let again = split(&ds, spec).unwrap();
            prop_assert_eq!(&(train.clone(), test.clone()), &again);
            prop_assert_eq!(train.n_samples() + test.n_samples(), ds.n_samples());
            let mut all: Vec<_> = train.ids().iter().chain(test.ids()).cloned().collect();
            all.sort();
            all.dedup();
            prop_assert_eq!(all.len(), ds.n_samples());

            let ys = train.targets();
            let n = ys.len() as f64;
            let mean = ys.iter().sum::<f64>() / n;
            let sd = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((sd - 1.0).abs() < 1e-9);

            let raw: HashMap<_, _> = records.iter().map(|r| (r.id.clone(), r.target)).collect();
            for (id, y) in train.ids().iter().zip(train.raw_targets()) {
                prop_assert!((raw[id] - y).abs() < 1e-9);
            }
        }

        #[test]
        fn heatmap_category_counts_sum_to_totals(records in arb_records()) {
            let ds = ingest(&records).unwrap();
            let ids: Vec<usize> = (0..ds.n_features()).collect();
            let h = heatmap_summary(&ds, &ids).unwrap();
            for (col, &j) in ids.iter().enumerate() {
                let per_cat: usize = h.cell_count.iter().map(|r| r[col]).sum();
                prop_assert_eq!(per_cat, h.total_count[col]);
                let direct = (0..ds.n_samples()).filter(|&i| ds.get(i, j) == 1).count();
                prop_assert_eq!(direct, h.total_count[col]);
                for r in 0..h.rows.len() {
                    prop_assert_eq!(h.cell_mean[r][col].is_none(), h.cell_count[r][col] == 0);
                }
            }
        }
    }
}
