//! `elicit`: data preparation, descriptor building, simulated-expert
//! benchmarks, curve comparison and the HTTP service.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use elicit_core::dataset::{read_records, PreparedData, SplitSpec};
use elicit_core::descriptors::{build_descriptors, read_aux_records, AuxCorpus, DescriptorMatrix, DescriptorParams};
use elicit_core::evaluation::{
    generate_synthetic, permutation_test, read_runs_csv, simulate_run, summarize_runs,
    write_runs_csv, OracleExpert, RunResult, SyntheticSpec,
};
use elicit_core::prediction::{RelevanceVector, SamplerConfig};
use elicit_core::session::{Condition, ElicitationData, Session, SessionConfig, SessionRecord};
use elicit_core::{Error, Result};
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "elicit", version, about = "Interactive elicitation of feature relevance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read JSONL documents, split them and write a prepared dataset.
    Ingest {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        train_fraction: f64,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
    },
    /// Cluster an auxiliary corpus and write the tf-idf descriptor matrix.
    Descriptors {
        #[arg(long)]
        aux: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 20)]
        clusters: usize,
        /// Documents used to fit the clustering; the rest join the nearest centroid.
        #[arg(long, default_value_t = 1000)]
        sample: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run sessions against a simulated expert and write per-iteration MSE.
    Simulate {
        #[arg(long)]
        condition: Condition,
        #[command(flatten)]
        inputs: Inputs,
        /// Feature names the simulated expert treats as relevant, one per line.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        runs: u64,
        /// Probability that the simulated expert flips an answer.
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        /// First run seed; run r uses seed + r.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare two run tables with the max-distance permutation test.
    Evaluate {
        #[arg(long)]
        group_a: PathBuf,
        #[arg(long)]
        group_b: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        permutations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Re-run a session record from scratch and check its MSE history.
    Replay {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        record: PathBuf,
    },
    /// Serve sessions over HTTP.
    Serve {
        #[command(flatten)]
        inputs: Inputs,
        /// Name clients use to refer to the dataset; defaults to the file stem.
        #[arg(long)]
        name: Option<String>,
        #[arg(long, env = "ELICIT_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[command(flatten)]
        session: SessionArgs,
    },
    /// Write a synthetic problem: data.jsonl, aux.jsonl and truth.txt.
    Synthesize {
        #[arg(long, default_value_t = 457)]
        features: usize,
        #[arg(long, default_value_t = 162)]
        samples: usize,
        #[arg(long, default_value_t = 20)]
        relevant: usize,
        #[arg(long, default_value_t = 3.0)]
        effect: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct Inputs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    descriptors: PathBuf,
}

impl Inputs {
    fn load(&self) -> Result<ElicitationData> {
        let prepared = PreparedData::read_json(BufReader::new(open(&self.dataset)?))?;
        let z = DescriptorMatrix::read_csv(BufReader::new(open(&self.descriptors)?))?;
        ElicitationData::new(prepared.train, prepared.test, z)
    }
}

#[derive(Args)]
struct SessionArgs {
    #[arg(long, default_value_t = 20)]
    iterations: usize,
    #[arg(long, default_value_t = 10)]
    batch: usize,
    /// Sampler sweeps per model fit, burn-in included.
    #[arg(long, default_value_t = 4000)]
    chain_iterations: usize,
    #[arg(long, default_value_t = 2000)]
    burn_in: usize,
}

impl SessionArgs {
    fn config(&self) -> SessionConfig {
        SessionConfig {
            max_iterations: self.iterations,
            batch_size: self.batch,
            sampler: SamplerConfig {
                iterations: self.chain_iterations,
                burn_in: self.burn_in,
                ..SamplerConfig::default()
            },
            ..SessionConfig::default()
        }
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn read_truth(path: &Path, data: &ElicitationData) -> Result<RelevanceVector> {
    let mut truth = RelevanceVector::none(data.n_features());
    for line in BufReader::new(open(path)?).lines() {
        let line = line?;
        let name = line.trim();
        if name.is_empty() {
            continue;
        }
        let j = data
            .train
            .feature_index(name)
            .ok_or_else(|| Error::UnknownFeatureName(name.to_string()))?;
        truth.set(j);
    }
    Ok(truth)
}

/// `runs.csv` → `runs.summary.json`.
fn summary_path(out: &Path) -> PathBuf {
    out.with_extension("summary.json")
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            data,
            out,
            train_fraction,
            split_seed,
        } => {
            let records = read_records(BufReader::new(open(&data)?))?;
            let spec = SplitSpec {
                train_fraction,
                seed: split_seed,
            };
            let prepared = PreparedData::from_records(&records, spec)?;
            let mut w = create(&out)?;
            prepared.write_json(&mut w)?;
            w.flush()?;
            println!(
                "samples={} train={} test={} features={}",
                records.len(),
                prepared.train.n_samples(),
                prepared.test.n_samples(),
                prepared.train.n_features()
            );
        }
        Command::Descriptors {
            aux,
            data,
            clusters,
            sample,
            seed,
            out,
        } => {
            let prepared = PreparedData::read_json(BufReader::new(open(&data)?))?;
            let corpus = AuxCorpus::from_records(read_aux_records(BufReader::new(open(&aux)?))?)?;
            let params = DescriptorParams {
                n_clusters: clusters,
                train_sample_size: Some(sample),
                seed,
            };
            let z = build_descriptors(&corpus, prepared.train.feature_names(), params)?;
            let mut w = create(&out)?;
            z.write_csv(&mut w)?;
            w.flush()?;
            let zero_rows = (0..z.n_features()).filter(|&j| z.row(j).iter().all(|&v| v == 0.0)).count();
            println!("features={} clusters={} zero_rows={zero_rows}", z.n_features(), z.n_cols());
        }
        Command::Simulate {
            condition,
            inputs,
            truth,
            runs,
            eps,
            seed,
            session,
            out,
        } => {
            let data = inputs.load()?;
            let truth = match (truth, condition) {
                (Some(path), _) => read_truth(&path, &data)?,
                (None, Condition::NonInteractive) => RelevanceVector::none(data.n_features()),
                (None, _) => {
                    return Err(Error::InvalidParameter(
                        "--truth is required for interactive conditions".into(),
                    ))
                }
            };
            OracleExpert::new(truth.clone(), eps, 0)?;
            let config = session.config();
            let results: Vec<RunResult> = (seed..seed + runs)
                .into_par_iter()
                .map(|s| {
                    let oracle = OracleExpert::new(truth.clone(), eps, s)?;
                    simulate_run(condition, &data, &oracle, &config, s)
                })
                .collect::<Result<_>>()?;
            let mut w = create(&out)?;
            write_runs_csv(&results, &mut w)?;
            w.flush()?;
            if !results.is_empty() {
                let mut w = create(&summary_path(&out))?;
                serde_json::to_writer_pretty(&mut w, &summarize_runs(&results)?)?;
                writeln!(w)?;
                w.flush()?;
            }
        }
        Command::Evaluate {
            group_a,
            group_b,
            permutations,
            seed,
        } => {
            let curves = |path: &Path| -> Result<Vec<Vec<f64>>> {
                Ok(read_runs_csv(open(path)?)?.into_iter().map(|r| r.mse_curve).collect())
            };
            let res = permutation_test(&curves(&group_a)?, &curves(&group_b)?, permutations, seed)?;
            println!(
                "statistic={} p_value={} permutations={}",
                res.observed_stat, res.p_value, res.n_permutations
            );
        }
        Command::Replay { inputs, record } => {
            let data = inputs.load()?;
            let record: SessionRecord = serde_json::from_reader(BufReader::new(open(&record)?))
                .map_err(|e| Error::CorruptRecord(e.to_string()))?;
            let session = Session::replay(
                record.id.clone(),
                data,
                record.condition,
                record.config.clone(),
                record.seed,
                &record.transcript,
            )?;
            let same = session
                .mse_history()
                .iter()
                .zip(&record.mse_history)
                .all(|(a, b)| a.to_bits() == b.to_bits())
                && session.mse_history().len() == record.mse_history.len();
            println!("{}", serde_json::to_string(session.mse_history())?);
            if !same {
                return Err(Error::CorruptRecord(
                    "replayed MSE history differs from the record".into(),
                ));
            }
        }
        Command::Serve {
            inputs,
            name,
            port,
            host,
            session,
        } => {
            let data = inputs.load()?;
            let name = name.unwrap_or_else(|| {
                inputs
                    .dataset
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "default".into())
            });
            let state = Arc::new(elicit_service::AppState::new(session.config()).with_dataset(name.clone(), data));
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port)).await?;
                eprintln!("serving dataset `{name}` on http://{}", listener.local_addr()?);
                elicit_service::serve(listener, state).await
            })?;
        }
        Command::Synthesize {
            features,
            samples,
            relevant,
            effect,
            seed,
            out_dir,
        } => {
            let p = generate_synthetic(&SyntheticSpec::new(features, samples, relevant, effect), seed)?;
            std::fs::create_dir_all(&out_dir)?;
            let mut w = create(&out_dir.join("data.jsonl"))?;
            for rec in &p.records {
                serde_json::to_writer(&mut w, rec)?;
                writeln!(w)?;
            }
            w.flush()?;
            let mut w = create(&out_dir.join("aux.jsonl"))?;
            for (i, doc) in p.aux.docs().iter().enumerate() {
                serde_json::to_writer(&mut w, &serde_json::json!({"id": format!("aux{i:05}"), "keywords": doc}))?;
                writeln!(w)?;
            }
            w.flush()?;
            let mut w = create(&out_dir.join("truth.txt"))?;
            for j in p.truth.relevant_ids() {
                writeln!(w, "{}", p.full.feature_names()[j])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.code());
            ExitCode::FAILURE
        }
    }
}
