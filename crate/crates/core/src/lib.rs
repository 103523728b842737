//! Interactive elicitation of feature relevance for small-n, large-p
//! regression.
//!
//! A prediction model whose weight priors encode which features an expert
//! marked relevant ([`prediction`]), a bandit user model that picks which
//! features to ask about next ([`usermodel`]), descriptors that let answers on
//! one feature inform similar ones ([`descriptors`]), the elicitation loop
//! tying them together ([`session`]) and a simulated-expert benchmark
//! ([`evaluation`]).

pub mod dataset;
pub mod descriptors;
pub mod error;
pub mod evaluation;
pub mod prediction;
pub mod seed;
pub mod session;
pub mod usermodel;

pub use error::{Error, Result};
