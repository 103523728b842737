//! Feature descriptors built from an auxiliary keyword corpus.
//!
//! Documents are clustered by cosine distance (average-linkage agglomerative
//! clustering on a random training sample, nearest-centroid assignment for
//! the rest), then each feature is described by its tf-idf in every cluster:
//! term frequency is pooled per cluster, document frequency over the corpus.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Read, Write};

use kodama::Method;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxRecord {
    pub id: String,
    pub keywords: Vec<String>,
}

/// Auxiliary documents as keyword lists. Repeated keywords count as
/// multiplicities.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxCorpus {
    docs: Vec<Vec<String>>,
    vocabulary: Vec<String>,
}

impl AuxCorpus {
    pub fn new(docs: Vec<Vec<String>>) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::Empty("auxiliary corpus"));
        }
        if let Some(i) = docs.iter().position(|d| d.is_empty()) {
            return Err(Error::DegenerateCorpus(format!("document {i} has no keywords")));
        }
        let mut seen = HashSet::new();
        let mut vocabulary = Vec::new();
        for kw in docs.iter().flatten() {
            if seen.insert(kw.as_str()) {
                vocabulary.push(kw.clone());
            }
        }
        Ok(AuxCorpus { docs, vocabulary })
    }

    pub fn from_records(records: Vec<AuxRecord>) -> Result<Self> {
        AuxCorpus::new(records.into_iter().map(|r| r.keywords).collect())
    }

    pub fn docs(&self) -> &[Vec<String>] {
        &self.docs
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Sparse count vectors over the vocabulary, sorted by term id.
    fn count_vectors(&self) -> Vec<Vec<(usize, u64)>> {
        let index: HashMap<&str, usize> = self
            .vocabulary
            .iter()
            .enumerate()
            .map(|(i, w)| (w.as_str(), i))
            .collect();
        self.docs
            .iter()
            .map(|doc| {
                let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
                for kw in doc {
                    *counts.entry(index[kw.as_str()]).or_default() += 1;
                }
                counts.into_iter().collect()
            })
            .collect()
    }
}

/// Parse line-delimited `{"id", "keywords"}` records. Extra fields such as
/// `target` are ignored, so dataset files are valid auxiliary input too.
pub fn read_aux_records<R: BufRead>(reader: R) -> Result<Vec<AuxRecord>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::CorruptRecord(format!("line {}: {e}", lineno + 1)))?,
        );
    }
    Ok(out)
}

/// Keep the documents sharing at least one keyword with the prediction data.
pub fn filter_corpus(aux: &AuxCorpus, prediction_features: &[String]) -> Result<AuxCorpus> {
    if prediction_features.is_empty() {
        return Err(Error::Empty("prediction features"));
    }
    let wanted: HashSet<&str> = prediction_features.iter().map(String::as_str).collect();
    let kept: Vec<Vec<String>> = aux
        .docs
        .iter()
        .filter(|doc| doc.iter().any(|kw| wanted.contains(kw.as_str())))
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(Error::DegenerateCorpus(
            "no auxiliary document shares a keyword with the prediction data".into(),
        ));
    }
    AuxCorpus::new(kept)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub n_clusters: usize,
    /// Mean count vector of each cluster's training members, sparse and
    /// sorted by term id.
    pub centroids: Vec<Vec<(usize, f64)>>,
    /// Cluster id of every corpus document.
    pub assignment: Vec<usize>,
    /// Corpus indices of the documents the hierarchy was built on.
    pub training_sample: Vec<usize>,
}

/// Count vector divided by the gcd of its counts. Cosine distance is scale
/// free, and the reduced form makes it exactly so in floating point.
fn reduce(v: &[(usize, u64)]) -> Vec<(usize, u64)> {
    fn gcd(mut a: u64, mut b: u64) -> u64 {
        while b != 0 {
            (a, b) = (b, a % b);
        }
        a
    }
    let g = v.iter().fold(0, |g, &(_, c)| gcd(g, c)).max(1);
    v.iter().map(|&(t, c)| (t, c / g)).collect()
}

fn dot(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (mut i, mut j, mut s) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                s += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    s
}

fn cosine_distance(a: &[(usize, f64)], na: f64, b: &[(usize, f64)], nb: f64) -> f64 {
    (1.0 - dot(a, b) / (na * nb)).max(0.0)
}

pub fn cluster(
    aux: &AuxCorpus,
    n_clusters: usize,
    train_sample_size: usize,
    seed: u64,
) -> Result<ClusterModel> {
    let d = aux.len();
    if n_clusters == 0 {
        return Err(Error::InvalidParameter("n_clusters must be positive".into()));
    }
    if train_sample_size > d {
        return Err(Error::InvalidParameter(format!(
            "training sample {train_sample_size} exceeds corpus size {d}"
        )));
    }
    if n_clusters > train_sample_size {
        return Err(Error::InvalidParameter(format!(
            "{n_clusters} clusters from a sample of {train_sample_size}"
        )));
    }

    let reduced: Vec<Vec<(usize, u64)>> = aux.count_vectors().iter().map(|v| reduce(v)).collect();
    let vectors: Vec<Vec<(usize, f64)>> = reduced
        .iter()
        .map(|v| v.iter().map(|&(t, c)| (t, c as f64)).collect())
        .collect();
    let norms: Vec<f64> = vectors.iter().map(|v| dot(v, v).sqrt()).collect();

    let sample: Vec<usize> = if train_sample_size == d {
        (0..d).collect()
    } else {
        let mut rng = seed::rng(seed, seed::STREAM_CLUSTER, 0);
        let mut s = rand::seq::index::sample(&mut rng, d, train_sample_size).into_vec();
        s.sort_unstable();
        s
    };

    let distinct: HashSet<&Vec<(usize, u64)>> = sample.iter().map(|&i| &reduced[i]).collect();
    if distinct.len() < n_clusters {
        return Err(Error::DegenerateCorpus(format!(
            "only {} distinct documents in the training sample for {n_clusters} clusters",
            distinct.len()
        )));
    }

    let n = sample.len();
    let labels = if n == 1 {
        vec![0]
    } else {
        let mut condensed = Vec::with_capacity(n * (n - 1) / 2);
        for a in 0..n - 1 {
            let (ia, va) = (sample[a], &vectors[sample[a]]);
            for &ib in &sample[a + 1..] {
                condensed.push(cosine_distance(va, norms[ia], &vectors[ib], norms[ib]));
            }
        }
        let dendrogram = kodama::linkage(&mut condensed, n, Method::Average);
        cut_dendrogram(dendrogram.steps(), n, n_clusters)
    };

    // Centroids: mean reduced count vector of the training members.
    let mut sums: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n_clusters];
    let mut sizes = vec![0usize; n_clusters];
    for (pos, &doc) in sample.iter().enumerate() {
        let c = labels[pos];
        sizes[c] += 1;
        for &(t, v) in &vectors[doc] {
            *sums[c].entry(t).or_default() += v;
        }
    }
    let centroids: Vec<Vec<(usize, f64)>> = sums
        .into_iter()
        .zip(&sizes)
        .map(|(m, &size)| m.into_iter().map(|(t, v)| (t, v / size as f64)).collect())
        .collect();
    let centroid_norms: Vec<f64> = centroids.iter().map(|c| dot(c, c).sqrt()).collect();

    let mut assignment = vec![usize::MAX; d];
    for (pos, &doc) in sample.iter().enumerate() {
        assignment[doc] = labels[pos];
    }
    for doc in 0..d {
        if assignment[doc] != usize::MAX {
            continue;
        }
        let mut best = (f64::INFINITY, 0);
        for (c, centroid) in centroids.iter().enumerate() {
            let dist = cosine_distance(&vectors[doc], norms[doc], centroid, centroid_norms[c]);
            if dist < best.0 {
                best = (dist, c);
            }
        }
        assignment[doc] = best.1;
    }

    Ok(ClusterModel {
        n_clusters,
        centroids,
        assignment,
        training_sample: sample,
    })
}

/// Apply the first `n - k` merges and label the resulting components
/// `0..k` in order of their smallest member.
fn cut_dendrogram(steps: &[kodama::Step<f64>], n: usize, k: usize) -> Vec<usize> {
    // Union-find over observations plus the n-1 internal nodes.
    let mut parent: Vec<usize> = (0..2 * n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (i, step) in steps.iter().take(n - k).enumerate() {
        let node = n + i;
        let a = find(&mut parent, step.cluster1);
        let b = find(&mut parent, step.cluster2);
        parent[a] = node;
        parent[b] = node;
    }
    let mut relabel: HashMap<usize, usize> = HashMap::new();
    (0..n)
        .map(|obs| {
            let root = find(&mut parent, obs);
            let next = relabel.len();
            *relabel.entry(root).or_insert(next)
        })
        .collect()
}

/// K × N_Z descriptor matrix; row j describes feature j.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorMatrix {
    feature_names: Vec<String>,
    n_cols: usize,
    values: Vec<f64>,
}

impl DescriptorMatrix {
    pub fn new(feature_names: Vec<String>, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if n_cols == 0 {
            return Err(Error::InvalidParameter("descriptor matrix needs columns".into()));
        }
        if values.len() != feature_names.len() * n_cols {
            return Err(Error::DimensionMismatch {
                expected: feature_names.len() * n_cols,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite descriptor entry".into()));
        }
        Ok(DescriptorMatrix {
            feature_names,
            n_cols,
            values,
        })
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.n_cols..(j + 1) * self.n_cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// CSV with a header row `feature,0,1,...` of cluster ids.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["feature".to_string()];
        header.extend((0..self.n_cols).map(|c| c.to_string()));
        out.write_record(&header)?;
        for (j, name) in self.feature_names.iter().enumerate() {
            let mut rec = vec![name.clone()];
            rec.extend(self.row(j).iter().map(|v| v.to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(r);
        let header = reader.headers()?.clone();
        if header.get(0) != Some("feature") {
            return Err(Error::CorruptRecord("descriptor header must start with `feature`".into()));
        }
        for (c, h) in header.iter().skip(1).enumerate() {
            if h != c.to_string() {
                return Err(Error::CorruptRecord(format!("unexpected cluster header `{h}`")));
            }
        }
        let n_cols = header.len() - 1;
        let mut names = Vec::new();
        let mut values = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            names.push(rec[0].to_string());
            for field in rec.iter().skip(1) {
                values.push(field.parse::<f64>().map_err(|e| {
                    Error::CorruptRecord(format!("bad descriptor value `{field}`: {e}"))
                })?);
            }
        }
        DescriptorMatrix::new(names, n_cols, values)
    }
}

/// `z[j, c] = tf(j, c) * idf(j)` over the prediction features, where
/// `tf(j, c)` is j's share of all keyword occurrences in cluster c and
/// `idf(j) = ln(D / df(j))`. Features missing from the corpus get zero rows.
pub fn build_tfidf(
    aux: &AuxCorpus,
    model: &ClusterModel,
    feature_names: &[String],
) -> Result<DescriptorMatrix> {
    if model.assignment.len() != aux.len() {
        return Err(Error::DimensionMismatch {
            expected: aux.len(),
            actual: model.assignment.len(),
        });
    }
    let nc = model.n_clusters;
    let feature_index: HashMap<&str, usize> = feature_names
        .iter()
        .enumerate()
        .map(|(j, f)| (f.as_str(), j))
        .collect();
    let k = feature_names.len();
    let mut occurrences = vec![0u64; k * nc];
    let mut cluster_total = vec![0u64; nc];
    let mut df = vec![0u64; k];
    for (doc, &c) in aux.docs.iter().zip(&model.assignment) {
        if c >= nc {
            return Err(Error::InvalidParameter(format!("cluster id {c} out of range")));
        }
        cluster_total[c] += doc.len() as u64;
        let mut present = HashSet::new();
        for kw in doc {
            if let Some(&j) = feature_index.get(kw.as_str()) {
                occurrences[j * nc + c] += 1;
                present.insert(j);
            }
        }
        for j in present {
            df[j] += 1;
        }
    }
    let d = aux.len() as f64;
    let mut values = vec![0.0; k * nc];
    for j in 0..k {
        if df[j] == 0 {
            continue;
        }
        let idf = (d / df[j] as f64).ln();
        for c in 0..nc {
            if cluster_total[c] > 0 {
                values[j * nc + c] = occurrences[j * nc + c] as f64 / cluster_total[c] as f64 * idf;
            }
        }
    }
    DescriptorMatrix::new(feature_names.to_vec(), nc, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptorParams {
    pub n_clusters: usize,
    /// Defaults to `min(1000, |docs|)` when unset.
    pub train_sample_size: Option<usize>,
    pub seed: u64,
}

impl Default for DescriptorParams {
    fn default() -> Self {
        DescriptorParams {
            n_clusters: 20,
            train_sample_size: None,
            seed: 0,
        }
    }
}

/// filter → cluster → tf-idf.
pub fn build_descriptors(
    aux: &AuxCorpus,
    feature_names: &[String],
    params: DescriptorParams,
) -> Result<DescriptorMatrix> {
    let filtered = filter_corpus(aux, feature_names)?;
    let sample = params
        .train_sample_size
        .unwrap_or(1000)
        .min(filtered.len());
    let model = cluster(&filtered, params.n_clusters, sample, params.seed)?;
    build_tfidf(&filtered, &model, feature_names)
}
