use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::{ModelParams, SamplerConfig};
use crate::error::{Error, Result};

/// Retained posterior draws, in sampling order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorChain {
    samples: Vec<ModelParams>,
    pub burn_in: usize,
    pub seed: u64,
    pub config: SamplerConfig,
}

impl PosteriorChain {
    pub fn new(samples: Vec<ModelParams>, burn_in: usize, seed: u64, config: SamplerConfig) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::Empty("posterior chain"));
        };
        let k = first.w.len();
        if let Some(bad) = samples.iter().find(|s| s.w.len() != k) {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: bad.w.len(),
            });
        }
        Ok(PosteriorChain {
            samples,
            burn_in,
            seed,
            config,
        })
    }

    /// Chain from bare draws, with default bookkeeping.
    pub fn from_samples(samples: Vec<ModelParams>) -> Result<Self> {
        PosteriorChain::new(samples, 0, 0, SamplerConfig::default())
    }

    pub fn samples(&self) -> &[ModelParams] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.samples[0].w.len()
    }

    pub fn mean_weights(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.n_features()];
        for s in &self.samples {
            for (m, w) in mean.iter_mut().zip(&s.w) {
                *m += w;
            }
        }
        let n = self.samples.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    pub fn mean_of(&self, f: impl Fn(&ModelParams) -> f64) -> f64 {
        self.samples.iter().map(f).sum::<f64>() / self.samples.len() as f64
    }

    /// Concatenate independent chains over the same features.
    pub fn merge(chains: &[PosteriorChain]) -> Result<PosteriorChain> {
        let first = chains.first().ok_or(Error::Empty("chains to merge"))?;
        let samples = chains.iter().flat_map(|c| c.samples.iter().cloned()).collect();
        PosteriorChain::new(samples, first.burn_in, first.seed, first.config.clone())
    }

    /// Flat table: `#`-prefixed metadata lines (seed, burn-in, sampler
    /// config as JSON), then a CSV header `w1..wK,a,xi,sigma` and one row per
    /// retained draw.
    pub fn write_table<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# seed={}", self.seed)?;
        writeln!(w, "# burn_in={}", self.burn_in)?;
        writeln!(w, "# config={}", serde_json::to_string(&self.config)?)?;
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.n_features()).map(|j| format!("w{j}")).collect();
        header.extend(["a", "xi", "sigma"].map(String::from));
        out.write_record(&header)?;
        for s in &self.samples {
            let row: Vec<String> = s
                .w
                .iter()
                .chain([&s.a, &s.xi, &s.sigma])
                .map(|v| v.to_string())
                .collect();
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_table<R: Read>(r: R) -> Result<Self> {
        let mut reader = BufReader::new(r);
        let mut seed = None;
        let mut burn_in = None;
        let mut config = None;
        let mut line = String::new();
        for _ in 0..3 {
            line.clear();
            reader.read_line(&mut line)?;
            let meta = line
                .trim_end()
                .strip_prefix("# ")
                .ok_or_else(|| Error::CorruptRecord("missing chain metadata".into()))?;
            let (key, value) = meta
                .split_once('=')
                .ok_or_else(|| Error::CorruptRecord(format!("bad metadata `{meta}`")))?;
            let bad = |e: &dyn std::fmt::Display| Error::CorruptRecord(format!("{key}: {e}"));
            match key {
                "seed" => seed = Some(value.parse::<u64>().map_err(|e| bad(&e))?),
                "burn_in" => burn_in = Some(value.parse::<usize>().map_err(|e| bad(&e))?),
                "config" => config = Some(serde_json::from_str(value)?),
                _ => return Err(Error::CorruptRecord(format!("unknown metadata `{key}`"))),
            }
        }
        let (Some(seed), Some(burn_in), Some(config)) = (seed, burn_in, config) else {
            return Err(Error::CorruptRecord("incomplete chain metadata".into()));
        };
        let mut csv = csv::Reader::from_reader(reader);
        let width = csv.headers()?.len();
        if width < 4 {
            return Err(Error::CorruptRecord("chain table needs w columns and a, xi, sigma".into()));
        }
        let mut samples = Vec::new();
        for rec in csv.records() {
            let vals = rec?
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::CorruptRecord(e.to_string()))?;
            let k = width - 3;
            samples.push(ModelParams {
                w: vals[..k].to_vec(),
                a: vals[k],
                xi: vals[k + 1],
                sigma: vals[k + 2],
            });
        }
        PosteriorChain::new(samples, burn_in, seed, config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prediction::predict;

    fn draw(w: Vec<f64>) -> ModelParams {
        ModelParams { w, a: 2.0, xi: 0.1, sigma: 1.0 }
    }

    #[test]
    fn prediction_hand_values() {
        let chain = PosteriorChain::from_samples(vec![draw(vec![1.0, 0.0]), draw(vec![0.0, 1.0])]).unwrap();
        assert_eq!(predict(&chain, &[2.0, 4.0]).unwrap(), 3.0);
        assert_eq!(predict(&chain, &[0.0, 0.0]).unwrap(), 0.0);
        assert!(predict(&chain, &[1.0]).is_err());

        let e1 = PosteriorChain::from_samples(vec![draw(vec![1.0, 0.0]); 5]).unwrap();
        assert_eq!(predict(&e1, &[0.25, 9.0]).unwrap(), 0.25);
    }

    #[test]
    fn table_round_trip() {
        let chain = PosteriorChain::new(
            vec![draw(vec![0.1, -1.0 / 3.0]), draw(vec![2.5, 1e-9])],
            7,
            42,
            SamplerConfig::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        chain.write_table(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("w1,w2,a,xi,sigma"));
        assert_eq!(PosteriorChain::read_table(&buf[..]).unwrap(), chain);
        let truncated = &buf[..10];
        assert!(PosteriorChain::read_table(truncated).is_err());
    }

    #[test]
    fn merge_concatenates() {
        let a = PosteriorChain::from_samples(vec![draw(vec![1.0])]).unwrap();
        let b = PosteriorChain::from_samples(vec![draw(vec![3.0])]).unwrap();
        let m = PosteriorChain::merge(&[a, b]).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.mean_weights(), vec![2.0]);
    }
}
