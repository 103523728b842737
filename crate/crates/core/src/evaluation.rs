//! Simulated-expert benchmark: a synthetic sparse keyword problem with a
//! topical auxiliary corpus, an oracle that answers queries from the true
//! relevant set, full session runs per condition, and the curve statistics
//! used to compare conditions (max-distance permutation test, Wilcoxon
//! signed-rank summary).

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as NormalDist};

use crate::dataset::{split, Dataset, DocumentRecord, SplitSpec};
use crate::descriptors::AuxCorpus;
use crate::error::{Error, Result};
use crate::prediction::RelevanceVector;
use crate::seed;
use crate::session::{Condition, ElicitationData, Session, SessionConfig};

/// Knobs of the synthetic generator beyond the headline dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_features: usize,
    pub n_samples: usize,
    pub n_relevant: usize,
    pub effect_size: f64,
    pub n_topics: usize,
    pub n_categories: usize,
    pub n_aux_docs: usize,
    pub noise_sd: f64,
    /// Standard deviation of non-relevant weights, relative to the effect size.
    pub background_scale: f64,
    /// Relevant features take roughly `1 / relevant_topic_spread` of the
    /// keywords in the topics they occupy.
    pub relevant_topic_spread: f64,
    /// Probability that a document keyword comes from the document's topic.
    pub doc_focus: f64,
    pub train_fraction: f64,
}

impl SyntheticSpec {
    pub fn new(n_features: usize, n_samples: usize, n_relevant: usize, effect_size: f64) -> Self {
        SyntheticSpec {
            n_features,
            n_samples,
            n_relevant,
            effect_size,
            n_topics: 20,
            n_categories: 5,
            n_aux_docs: 1500,
            noise_sd: 1.0,
            background_scale: 0.05,
            relevant_topic_spread: 1.0,
            doc_focus: 0.7,
            train_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticProblem {
    /// Unsplit records, as they would appear in an ingestion file.
    pub records: Vec<DocumentRecord>,
    pub full: Dataset,
    pub train: Dataset,
    pub test: Dataset,
    pub truth: RelevanceVector,
    pub true_weights: Vec<f64>,
    pub aux: AuxCorpus,
}

fn feature_name(j: usize) -> String {
    format!("kw{j:04}")
}

/// Draw a keyword from `topic` with probability `focus`, else uniformly.
fn draw_keyword(rng: &mut impl Rng, topic: usize, n_topics: usize, k: usize, focus: f64) -> usize {
    if rng.random::<f64>() < focus {
        let per_topic = (k - topic).div_ceil(n_topics);
        topic + n_topics * rng.random_range(0..per_topic)
    } else {
        rng.random_range(0..k)
    }
}

/// Sparse binary keyword data whose relevant features cluster in a few
/// topics, plus an auxiliary corpus drawn from the same topics.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticProblem> {
    let SyntheticSpec {
        n_features: k,
        n_samples: n,
        n_relevant,
        effect_size,
        ..
    } = *spec;
    if k == 0 || n_relevant > k {
        return Err(Error::InvalidParameter(format!(
            "{n_relevant} relevant features out of {k}"
        )));
    }
    if n < 4 {
        return Err(Error::InvalidParameter("need at least 4 samples".into()));
    }
    if !(effect_size > 0.0) || !(spec.noise_sd >= 0.0) {
        return Err(Error::InvalidParameter("effect size must be positive".into()));
    }
    let n_topics = spec.n_topics.clamp(1, k);
    let mut rng = seed::rng(seed, seed::STREAM_SYNTH, 0);

    // Relevant features come from the first few topics (feature j belongs
    // to topic j mod n_topics), a fixed share of each such topic's keywords.
    let per_topic = k as f64 / n_topics as f64;
    let relevant_topics = ((spec.relevant_topic_spread * n_relevant as f64 / per_topic).ceil() as usize).clamp(1, n_topics);
    let mut candidates: Vec<usize> = (0..k).filter(|j| j % n_topics < relevant_topics).collect();
    candidates.shuffle(&mut rng);
    let mut relevant: Vec<usize> = candidates.into_iter().take(n_relevant).collect();
    if relevant.len() < n_relevant {
        let mut rest: Vec<usize> = (0..k).filter(|j| !relevant.contains(j)).collect();
        rest.shuffle(&mut rng);
        relevant.extend(rest.into_iter().take(n_relevant - relevant.len()));
    }
    let mut truth = RelevanceVector::none(k);
    for &j in &relevant {
        truth.set(j);
    }

    let background = Normal::new(0.0, spec.background_scale * effect_size)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let true_weights: Vec<f64> = (0..k)
        .map(|j| {
            if truth.is_relevant(j) {
                effect_size
            } else {
                background.sample(&mut rng)
            }
        })
        .collect();
    let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| Error::InvalidParameter(e.to_string()))?;

    let mut topics = Vec::with_capacity(n);
    let mut present = vec![vec![false; k]; n];
    for doc in present.iter_mut() {
        let topic = rng.random_range(0..n_topics);
        for _ in 0..rng.random_range(6..=14) {
            doc[draw_keyword(&mut rng, topic, n_topics, k, spec.doc_focus)] = true;
        }
        topics.push(topic);
    }
    // Every keyword occurs at least once, preferably in a document of its
    // own topic, so ingesting the records recovers all K features.
    for j in 0..k {
        if present.iter().any(|doc| doc[j]) {
            continue;
        }
        let same_topic: Vec<usize> = (0..n).filter(|&i| topics[i] == j % n_topics).collect();
        let i = if same_topic.is_empty() {
            rng.random_range(0..n)
        } else {
            same_topic[rng.random_range(0..same_topic.len())]
        };
        present[i][j] = true;
    }
    let records: Vec<DocumentRecord> = present
        .iter()
        .zip(&topics)
        .enumerate()
        .map(|(i, (doc, topic))| {
            let signal: f64 = (0..k).filter(|&j| doc[j]).map(|j| true_weights[j]).sum();
            DocumentRecord {
                id: format!("doc{i:04}"),
                keywords: (0..k).filter(|&j| doc[j]).map(feature_name).collect(),
                target: signal + noise.sample(&mut rng),
                category: format!("domain-{}", topic % spec.n_categories.max(1)),
            }
        })
        .collect();
    let full = crate::dataset::ingest(&records)?;
    // ingest orders features by first appearance; restore kw0000.. order.
    let full = canonical_features(&full, k)?;
    if full.targets().is_empty() || (0..n).all(|i| full.row(i).iter().all(|&v| v == 0)) {
        return Err(Error::DegenerateCorpus("synthetic feature matrix is all zero".into()));
    }
    let (train, test) = split(
        &full,
        SplitSpec {
            train_fraction: spec.train_fraction,
            seed: seed::derive(seed, seed::STREAM_SPLIT, 1),
        },
    )?;

    let mut docs = Vec::with_capacity(spec.n_aux_docs);
    for d in 0..spec.n_aux_docs {
        let topic = rng.random_range(0..n_topics);
        let mut doc: Vec<String> = Vec::new();
        if d % 10 == 9 {
            // Off-vocabulary document; dropped by corpus filtering.
            for m in 0..rng.random_range(2..6) {
                doc.push(format!("aux{topic}_{m}"));
            }
        } else {
            for _ in 0..rng.random_range(4..=12) {
                doc.push(feature_name(draw_keyword(&mut rng, topic, n_topics, k, 0.8)));
            }
            if rng.random::<f64>() < 0.5 {
                doc.push(format!("aux{topic}_{}", rng.random_range(0..5)));
            }
        }
        docs.push(doc);
    }
    let aux = AuxCorpus::new(docs)?;

    Ok(SyntheticProblem {
        records,
        full,
        train,
        test,
        truth,
        true_weights,
        aux,
    })
}

fn canonical_features(ds: &Dataset, k: usize) -> Result<Dataset> {
    let n = ds.n_samples();
    let mut x = vec![0u8; n * k];
    for (col, name) in ds.feature_names().iter().enumerate() {
        let j: usize = name[2..].parse().expect("generated feature name");
        for i in 0..n {
            x[i * k + j] = ds.get(i, col);
        }
    }
    Dataset::new(
        ds.ids().to_vec(),
        (0..k).map(feature_name).collect(),
        x,
        ds.targets().to_vec(),
        ds.categories().to_vec(),
    )
}

/// Stand-in for a human expert: answers "relevant" exactly for the true
/// relevant set, with each answer flipped with probability `noise_eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleExpert {
    pub truth: RelevanceVector,
    pub noise_eps: f64,
    pub seed: u64,
}

impl OracleExpert {
    pub fn new(truth: RelevanceVector, noise_eps: f64, seed: u64) -> Result<Self> {
        if !(0.0..=0.5).contains(&noise_eps) {
            return Err(Error::InvalidParameter(format!(
                "oracle noise {noise_eps} outside [0, 0.5]"
            )));
        }
        Ok(OracleExpert {
            truth,
            noise_eps,
            seed,
        })
    }

    pub fn respond(&self, feature: usize) -> bool {
        let mut rng = seed::rng(self.seed, seed::STREAM_ORACLE, feature as u64);
        let flip = rng.random::<f64>() < self.noise_eps;
        self.truth.is_relevant(feature) ^ flip
    }

    pub fn answer(&self, query: &[usize]) -> Vec<(usize, bool)> {
        query.iter().map(|&j| (j, self.respond(j))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub condition: Condition,
    pub seed: u64,
    pub mse_curve: Vec<f64>,
}

/// Drive a whole session, answering every query with the oracle.
pub fn simulate_run(
    condition: Condition,
    data: &ElicitationData,
    oracle: &OracleExpert,
    config: &SessionConfig,
    seed: u64,
) -> Result<RunResult> {
    let mut session = Session::create(
        format!("{condition}-{seed}"),
        data.clone(),
        condition,
        config.clone(),
        seed,
    )?;
    while !session.is_terminal() {
        let query = session.next_query()?;
        session.submit_feedback(&oracle.answer(&query))?;
    }
    Ok(RunResult {
        condition,
        seed,
        mse_curve: session.mse_history().to_vec(),
    })
}

pub fn max_distance_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

/// Pointwise mean of equal-length curves.
pub fn mean_curve(curves: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = curves.first().ok_or(Error::Empty("curves"))?;
    let len = first.len();
    let mut sum = vec![0.0; len];
    for c in curves {
        if c.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                actual: c.len(),
            });
        }
        for (s, v) in sum.iter_mut().zip(c) {
            *s += v;
        }
    }
    Ok(sum.into_iter().map(|s| s / curves.len() as f64).collect())
}

/// Trapezoidal area under a curve sampled at unit spacing.
pub fn area_under_curve(curve: &[f64]) -> f64 {
    curve.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationTestResult {
    pub observed_stat: f64,
    pub p_value: f64,
    pub n_permutations: usize,
}

/// Max-distance permutation test over run-level group labels.
/// `p = (1 + #{permuted >= observed}) / (1 + n_perm)`.
pub fn permutation_test(
    group_a: &[Vec<f64>],
    group_b: &[Vec<f64>],
    n_perm: usize,
    seed: u64,
) -> Result<PermutationTestResult> {
    if n_perm < 1 {
        return Err(Error::InvalidParameter("need at least one permutation".into()));
    }
    if group_a.is_empty() || group_b.is_empty() {
        return Err(Error::Empty("permutation test group"));
    }
    let observed = max_distance_statistic(&mean_curve(group_a)?, &mean_curve(group_b)?)?;

    // The relabeling scheme depends only on the unordered pair of groups, so
    // swapping the arguments gives the same p-value.
    let swap = match group_a.len().cmp(&group_b.len()) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => {
            let key = |g: &[Vec<f64>]| g.iter().flatten().copied().collect::<Vec<f64>>();
            key(group_a)
                .iter()
                .zip(key(group_b).iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                == Some(std::cmp::Ordering::Greater)
        }
    };
    let (first, second) = if swap { (group_b, group_a) } else { (group_a, group_b) };
    let pooled: Vec<&Vec<f64>> = first.iter().chain(second).collect();
    let len = pooled[0].len();
    let n_first = first.len();
    let n_second = second.len();
    let mut total = vec![0.0; len];
    for c in &pooled {
        for (t, v) in total.iter_mut().zip(c.iter()) {
            *t += v;
        }
    }

    let mut rng = seed::rng(seed, seed::STREAM_PERMUTE, 0);
    let mut exceed = 0usize;
    let mut part = vec![0.0; len];
    for _ in 0..n_perm {
        part.iter_mut().for_each(|v| *v = 0.0);
        for idx in rand::seq::index::sample(&mut rng, pooled.len(), n_first) {
            for (p, v) in part.iter_mut().zip(pooled[idx].iter()) {
                *p += v;
            }
        }
        let stat = part
            .iter()
            .zip(&total)
            .map(|(&p, &t)| (p / n_first as f64 - (t - p) / n_second as f64).abs())
            .fold(0.0, f64::max);
        if stat >= observed {
            exceed += 1;
        }
    }
    Ok(PermutationTestResult {
        observed_stat: observed,
        p_value: (1 + exceed) as f64 / (1 + n_perm) as f64,
        n_permutations: n_perm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences `x - y`.
    pub w_plus: f64,
    pub z: f64,
    pub p_value: f64,
    /// Pairs with a nonzero difference.
    pub n: usize,
}

/// Two-sided Wilcoxon signed-rank test, normal approximation with tie
/// correction.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<WilcoxonResult> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    let mut diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(WilcoxonResult { w_plus: 0.0, z: 0.0, p_value: 1.0, n: 0 });
    }
    diffs.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let mut w_plus = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && diffs[j + 1].abs() == diffs[i].abs() {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let ties = (j - i + 1) as f64;
        tie_term += ties * ties * ties - ties;
        w_plus += diffs[i..=j].iter().filter(|d| **d > 0.0).count() as f64 * rank;
        i = j + 1;
    }
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let z = if var > 0.0 { (w_plus - mean) / var.sqrt() } else { 0.0 };
    let std_normal = NormalDist::standard();
    let p_value = (2.0 * (1.0 - std_normal.cdf(z.abs()))).min(1.0);
    Ok(WilcoxonResult { w_plus, z, p_value, n })
}

/// CSV with one row per run per iteration: `condition,seed,t,mse`.
pub fn write_runs_csv<W: Write>(runs: &[RunResult], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["condition", "seed", "t", "mse"])?;
    for run in runs {
        for (t, mse) in run.mse_curve.iter().enumerate() {
            out.write_record([
                run.condition.code().to_string(),
                run.seed.to_string(),
                t.to_string(),
                mse.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_runs_csv<R: Read>(r: R) -> Result<Vec<RunResult>> {
    let mut reader = csv::Reader::from_reader(r);
    let header = reader.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["condition", "seed", "t", "mse"] {
        return Err(Error::CorruptRecord("expected header condition,seed,t,mse".into()));
    }
    let mut order: Vec<(Condition, u64)> = Vec::new();
    let mut curves: BTreeMap<(String, u64), Vec<f64>> = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec?;
        let bad = |what: &str| Error::CorruptRecord(format!("bad {what} in `{}`", rec.iter().collect::<Vec<_>>().join(",")));
        let condition: Condition = rec[0].parse()?;
        let seed: u64 = rec[1].parse().map_err(|_| bad("seed"))?;
        let t: usize = rec[2].parse().map_err(|_| bad("t"))?;
        let mse: f64 = rec[3].parse().map_err(|_| bad("mse"))?;
        let curve = curves.entry((condition.code().to_string(), seed)).or_default();
        if curve.is_empty() {
            order.push((condition, seed));
        }
        if t != curve.len() {
            return Err(bad("iteration order"));
        }
        curve.push(mse);
    }
    Ok(order
        .into_iter()
        .map(|(condition, seed)| RunResult {
            condition,
            seed,
            mse_curve: curves[&(condition.code().to_string(), seed)].clone(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub condition: Condition,
    pub runs: usize,
    pub mean_curve: Vec<f64>,
    pub sd_curve: Vec<f64>,
    pub mean_area: f64,
    /// Final versus initial MSE across runs; absent for single-point curves.
    pub final_vs_initial: Option<WilcoxonResult>,
}

pub fn summarize_runs(runs: &[RunResult]) -> Result<RunSummary> {
    let first = runs.first().ok_or(Error::Empty("runs"))?;
    let curves: Vec<Vec<f64>> = runs.iter().map(|r| r.mse_curve.clone()).collect();
    let mean = mean_curve(&curves)?;
    let sd = (0..mean.len())
        .map(|t| {
            let m = mean[t];
            let ss: f64 = curves.iter().map(|c| (c[t] - m).powi(2)).sum();
            (ss / (curves.len().max(2) - 1) as f64).sqrt()
        })
        .collect();
    let final_vs_initial = if mean.len() > 1 {
        let finals: Vec<f64> = curves.iter().map(|c| *c.last().unwrap()).collect();
        let initials: Vec<f64> = curves.iter().map(|c| c[0]).collect();
        Some(wilcoxon_signed_rank(&finals, &initials)?)
    } else {
        None
    };
    Ok(RunSummary {
        condition: first.condition,
        runs: runs.len(),
        mean_area: curves.iter().map(|c| area_under_curve(c)).sum::<f64>() / curves.len() as f64,
        mean_curve: mean,
        sd_curve: sd,
        final_vs_initial,
    })
}
