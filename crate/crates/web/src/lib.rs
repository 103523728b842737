//! Browser bindings for a small, self-contained elicitation demo.
//!
//! The `*_json` functions carry the logic and run natively as well, so they
//! are tested without a browser; the `#[wasm_bindgen]` wrappers only turn
//! errors into JS exceptions.

use elicit_core::dataset::{heatmap_summary, Dataset};
use elicit_core::descriptors::{build_descriptors, DescriptorParams};
use elicit_core::evaluation::{generate_synthetic, SyntheticSpec};
use elicit_core::prediction::{sample_posterior, sigma0_sq, RelevanceVector, SamplerConfig};
use elicit_core::session::{Condition, ElicitationData, Session, SessionConfig};
use elicit_core::Result;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn js(e: elicit_core::Error) -> JsError {
    JsError::new(&format!("{}: {e}", e.code()))
}

/// Prior variance of a not-relevant weight.
#[wasm_bindgen]
pub fn prior_scale(xi: f64, a: f64, n_minus: usize, n_plus: usize) -> f64 {
    sigma0_sq(xi, a, n_minus, n_plus)
}

/// Prior draws of one relevant and one not-relevant weight, obtained by
/// running the sampler on an empty dataset with `n_relevant` of
/// `n_features` marked relevant.
pub fn prior_draws_json(n_features: usize, n_relevant: usize, draws: usize, seed: u64) -> Result<String> {
    let names: Vec<String> = (0..n_features).map(|j| format!("f{j}")).collect();
    let empty = Dataset::empty(names)?;
    let r = RelevanceVector::from_flags((0..n_features).map(|j| j < n_relevant).collect());
    let config = SamplerConfig {
        iterations: draws + 500,
        burn_in: 500,
        ..SamplerConfig::default()
    };
    let chain = sample_posterior(&empty, &r, &config, seed)?;
    let column = |j: usize| -> Vec<f64> { chain.samples().iter().map(|p| p.w[j]).collect() };
    let mean = |f: fn(&elicit_core::prediction::ModelParams) -> f64| {
        chain.samples().iter().map(f).sum::<f64>() / chain.len() as f64
    };
    let body = json!({
        "relevant": (n_relevant > 0).then(|| column(0)),
        "not_relevant": (n_relevant < n_features).then(|| column(n_features - 1)),
        "mean_a": mean(|p| p.a),
        "mean_xi": mean(|p| p.xi),
    });
    Ok(body.to_string())
}

#[wasm_bindgen]
pub fn prior_draws(n_features: usize, n_relevant: usize, draws: usize, seed: u32) -> std::result::Result<String, JsError> {
    prior_draws_json(n_features, n_relevant, draws, seed as u64).map_err(js)
}

/// A guided session on a generated problem, with the hidden truth kept
/// around so the page can offer hints.
#[wasm_bindgen]
pub struct Demo {
    session: Session,
    truth: RelevanceVector,
}

impl Demo {
    pub fn create(seed: u64) -> Result<Demo> {
        let spec = SyntheticSpec {
            n_aux_docs: 300,
            ..SyntheticSpec::new(60, 60, 6, 3.0)
        };
        let problem = generate_synthetic(&spec, seed)?;
        let z = build_descriptors(
            &problem.aux,
            problem.train.feature_names(),
            DescriptorParams {
                n_clusters: 8,
                train_sample_size: None,
                seed,
            },
        )?;
        let data = ElicitationData::new(problem.train, problem.test, z)?;
        let config = SessionConfig {
            max_iterations: 8,
            batch_size: 5,
            sampler: SamplerConfig {
                iterations: 800,
                burn_in: 400,
                ..SamplerConfig::default()
            },
            ..SessionConfig::default()
        };
        let session = Session::create("demo", data, Condition::UserModelGuided, config, seed)?;
        Ok(Demo {
            session,
            truth: problem.truth,
        })
    }

    /// Issue the next query: the chosen features with their scores, the
    /// category heatmap and the hidden answers.
    pub fn query_json(&mut self) -> Result<String> {
        let t = self.session.iteration() + 1;
        let estimate = self.session.user_model().estimate(t)?;
        let ids = self.session.next_query()?;
        let train = &self.session.data().train;
        let features: Vec<Value> = ids
            .iter()
            .map(|&j| {
                json!({
                    "id": j,
                    "name": train.feature_names()[j],
                    "r_hat": estimate.r_hat[j],
                    "width": estimate.widths[j],
                    "ucb": estimate.ucb[j],
                    "hint": self.truth.flags()[j],
                })
            })
            .collect();
        Ok(json!({ "features": features, "heatmap": heatmap_summary(train, &ids)? }).to_string())
    }

    /// Answer the pending query with `{"feature id": true|false}` and refit.
    pub fn answer_json(&mut self, answers: &str) -> Result<String> {
        let parsed: std::collections::BTreeMap<usize, bool> = serde_json::from_str(answers)
            .map_err(|e| elicit_core::Error::InvalidParameter(format!("answers: {e}")))?;
        let responses: Vec<(usize, bool)> = parsed.into_iter().collect();
        self.session.submit_feedback(&responses)?;
        Ok(self.state_json())
    }

    pub fn state_json(&self) -> String {
        json!({
            "iteration": self.session.iteration(),
            "max_iterations": self.session.config().max_iterations,
            "terminal": self.session.is_terminal(),
            "awaiting_feedback": self.session.pending().is_some(),
            "mse_history": self.session.mse_history(),
            "n_relevant": self.session.relevance().n_plus(),
        })
        .to_string()
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> std::result::Result<Demo, JsError> {
        Demo::create(seed as u64).map_err(js)
    }

    pub fn query(&mut self) -> std::result::Result<String, JsError> {
        self.query_json().map_err(js)
    }

    pub fn answer(&mut self, answers: &str) -> std::result::Result<String, JsError> {
        self.answer_json(answers).map_err(js)
    }

    pub fn state(&self) -> String {
        self.state_json()
    }
}
